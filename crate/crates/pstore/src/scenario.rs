//! Declarative scenario scripts (`.scn`, TOML) for driving the simulator:
//! node counts, config overrides, a timed action list, and expected
//! outcomes. The CLI's `sim run` executes these; the same script and seed
//! always produce the same report and trace.
//!
//! Schema (all sections optional except `nodes`):
//!
//! ```toml
//! seed  = 42
//! nodes = 16
//!
//! [sim]            # SimConfig overrides
//! latency_min = 10
//! latency_max = 100
//! drop_rate   = 0.0
//!
//! [node]           # NodeConfig overrides applied to every node
//! k = 8
//! capacity_bytes = 1048576
//!
//! [[action]]
//! op    = "add"    # add | get | pin | unpin | gc | leave | exempt |
//!                  # set_share_cache | partition | heal | churn | advance | settle
//! node  = 0
//! size  = 4096     # deterministic pseudorandom content of this length
//! label = "doc"    # later actions refer to the produced CID by label
//! pin   = true
//!
//! [[action]]
//! op     = "get"
//! node   = 5
//! label  = "doc"
//! expect = "ok"    # ok | not-found | timeout | error
//!
//! [[expect]]       # metric assertions checked after all actions
//! metric = "cross_partition_deliveries"
//! equals = 0       # or: max = N / min = N
//! ```

use std::collections::BTreeMap;
use std::path::Path;

use rand::RngCore;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Deserialize;

use crate::cid::Cid;
use crate::node::{NodeConfig, NodeError};
use crate::simnet::{ChurnConfig, Report, Sim, SimConfig};

#[derive(Debug, thiserror::Error)]
pub enum ScenarioError {
    #[error("cannot read script: {0}")]
    Io(#[from] std::io::Error),
    #[error("script does not parse: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("action {index} ({op}): {message}")]
    BadAction { index: usize, op: String, message: String },
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Script {
    #[serde(default)]
    pub seed: u64,
    pub nodes: usize,
    #[serde(default)]
    pub sim: SimOverrides,
    #[serde(default)]
    pub node: NodeOverrides,
    #[serde(default, rename = "action")]
    pub actions: Vec<Action>,
    #[serde(default, rename = "expect")]
    pub expectations: Vec<MetricExpectation>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimOverrides {
    pub latency_min: Option<u64>,
    pub latency_max: Option<u64>,
    pub drop_rate: Option<f64>,
    pub bootstrap_count: Option<usize>,
    pub rpc_timeout: Option<u64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NodeOverrides {
    pub chunk_size: Option<usize>,
    pub fanout: Option<usize>,
    pub capacity_bytes: Option<u64>,
    pub provider_ttl: Option<u64>,
    pub reprovide_interval: Option<u64>,
    pub share_cache: Option<bool>,
    pub k: Option<usize>,
    pub alpha: Option<usize>,
    pub gc_interval: Option<u64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Action {
    pub op: String,
    pub node: Option<usize>,
    pub size: Option<usize>,
    pub label: Option<String>,
    pub path: Option<String>,
    pub pin: Option<bool>,
    pub expect: Option<String>,
    pub enabled: Option<bool>,
    pub groups: Option<Vec<Vec<usize>>>,
    pub leave_rate: Option<f64>,
    pub epoch: Option<u64>,
    pub rejoin: Option<bool>,
    pub ms: Option<u64>,
    pub rounds: Option<usize>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MetricExpectation {
    pub metric: String,
    pub equals: Option<u64>,
    pub max: Option<u64>,
    pub min: Option<u64>,
}

/// The verdict of one scenario run.
#[derive(Debug)]
pub struct Outcome {
    pub report: Report,
    /// Human-readable descriptions of every failed expectation; empty
    /// means the run passed.
    pub failures: Vec<String>,
    /// The full event trace, one line per event, for replay comparison.
    pub trace: String,
}

pub fn load_script(path: &Path) -> Result<Script, ScenarioError> {
    let text = std::fs::read_to_string(path)?;
    Ok(toml::from_str(&text)?)
}

pub fn run_script(script: &Script) -> Result<Outcome, ScenarioError> {
    let mut sim_cfg = SimConfig { seed: script.seed, ..SimConfig::default() };
    if let Some(v) = script.sim.latency_min {
        sim_cfg.latency_min = v;
    }
    if let Some(v) = script.sim.latency_max {
        sim_cfg.latency_max = v;
    }
    if let Some(v) = script.sim.drop_rate {
        sim_cfg.drop_rate = v;
    }
    if let Some(v) = script.sim.bootstrap_count {
        sim_cfg.bootstrap_count = v;
    }
    if let Some(v) = script.sim.rpc_timeout {
        sim_cfg.rpc_timeout = v;
    }
    let mut node_cfg = NodeConfig::default();
    if let Some(v) = script.node.chunk_size {
        node_cfg.chunk_size = v;
    }
    if let Some(v) = script.node.fanout {
        node_cfg.fanout = v;
    }
    if let Some(v) = script.node.capacity_bytes {
        node_cfg.capacity_bytes = v;
    }
    if let Some(v) = script.node.provider_ttl {
        node_cfg.provider_ttl = v;
    }
    if let Some(v) = script.node.reprovide_interval {
        node_cfg.reprovide_interval = v;
    }
    if let Some(v) = script.node.share_cache {
        node_cfg.share_cache = v;
    }
    if let Some(v) = script.node.k {
        node_cfg.k = v;
    }
    if let Some(v) = script.node.alpha {
        node_cfg.alpha = v;
    }
    if let Some(v) = script.node.gc_interval {
        node_cfg.gc_interval = v;
    }

    let mut sim = Sim::new(sim_cfg);
    for _ in 0..script.nodes {
        sim.spawn_node(node_cfg.clone());
    }
    sim.settle(1);

    // Content bytes come from the scenario's own stream so that labels are
    // reproducible independently of simulator RNG consumption.
    let mut content_rng = ChaCha8Rng::seed_from_u64(script.seed ^ 0x5ce7a410);
    let mut labels: BTreeMap<String, Cid> = BTreeMap::new();
    let mut failures: Vec<String> = Vec::new();

    for (index, action) in script.actions.iter().enumerate() {
        let bad = |message: String| ScenarioError::BadAction {
            index,
            op: action.op.clone(),
            message,
        };
        let need_node = || action.node.ok_or_else(|| bad("missing `node`".into()));
        match action.op.as_str() {
            "add" => {
                let id = need_node()?;
                let size = action.size.ok_or_else(|| bad("missing `size`".into()))?;
                let mut data = vec![0u8; size];
                content_rng.fill_bytes(&mut data);
                let cid = sim
                    .add(id, &data, action.pin.unwrap_or(false))
                    .map_err(|e| bad(format!("add failed: {e}")))?;
                if let Some(label) = &action.label {
                    labels.insert(label.clone(), cid);
                }
            }
            "get" => {
                let id = need_node()?;
                let path = target_path(action, &labels).map_err(bad)?;
                let result = sim.get(id, &path);
                check_expectation(index, &action.op, action.expect.as_deref(), &result, &mut failures);
            }
            "pin" => {
                let id = need_node()?;
                let path = target_path(action, &labels).map_err(bad)?;
                let cid = sim
                    .resolve(id, &path)
                    .and_then(|cid| sim.pin(id, &cid, true).map(|_| cid));
                check_expectation(index, &action.op, action.expect.as_deref(), &cid, &mut failures);
            }
            "unpin" => {
                let id = need_node()?;
                let path = target_path(action, &labels).map_err(bad)?;
                let cid = sim.resolve(id, &path).map_err(|e| bad(format!("{e}")))?;
                sim.unpin(id, &cid);
            }
            "gc" => {
                let id = need_node()?;
                sim.gc_node(id);
            }
            "leave" => {
                let id = need_node()?;
                sim.leave(id);
            }
            "exempt" => {
                let id = need_node()?;
                sim.set_churn_exempt(id, action.enabled.unwrap_or(true));
            }
            "set_share_cache" => {
                let id = need_node()?;
                sim.set_share_cache(id, action.enabled.unwrap_or(true));
            }
            "partition" => {
                let groups = action
                    .groups
                    .clone()
                    .ok_or_else(|| bad("missing `groups`".into()))?;
                sim.partition(groups).map_err(|e| bad(e))?;
            }
            "heal" => sim.heal(),
            "churn" => {
                sim.set_churn(ChurnConfig {
                    leave_rate: action.leave_rate.unwrap_or(0.0),
                    epoch: action.epoch.unwrap_or(60_000),
                    rejoin: action.rejoin.unwrap_or(true),
                });
            }
            "advance" => {
                let ms = action.ms.ok_or_else(|| bad("missing `ms`".into()))?;
                let t = sim.now() + ms;
                sim.run_until(t);
            }
            "settle" => {
                sim.settle(action.rounds.unwrap_or(1));
            }
            other => return Err(bad(format!("unknown op `{other}`"))),
        }
    }

    let report = sim.report();
    for exp in &script.expectations {
        let actual = metric_value(&report, &exp.metric);
        let Some(actual) = actual else {
            failures.push(format!("expect: unknown metric `{}`", exp.metric));
            continue;
        };
        if let Some(want) = exp.equals {
            if actual != want {
                failures.push(format!("expect: {} = {actual}, wanted {want}", exp.metric));
            }
        }
        if let Some(limit) = exp.max {
            if actual > limit {
                failures.push(format!("expect: {} = {actual}, wanted ≤ {limit}", exp.metric));
            }
        }
        if let Some(floor) = exp.min {
            if actual < floor {
                failures.push(format!("expect: {} = {actual}, wanted ≥ {floor}", exp.metric));
            }
        }
    }
    Ok(Outcome { report, failures, trace: sim.trace_text() })
}

pub fn run_scenario(path: &Path) -> Result<Outcome, ScenarioError> {
    let script = load_script(path)?;
    run_script(&script)
}

fn target_path(action: &Action, labels: &BTreeMap<String, Cid>) -> Result<String, String> {
    if let Some(path) = &action.path {
        return Ok(path.clone());
    }
    if let Some(label) = &action.label {
        return labels
            .get(label)
            .map(|cid| format!("/ipfs/{}", cid.to_text()))
            .ok_or_else(|| format!("label `{label}` was never added"));
    }
    Err("need `path` or `label`".into())
}

fn check_expectation<T>(
    index: usize,
    op: &str,
    expect: Option<&str>,
    result: &Result<T, NodeError>,
    failures: &mut Vec<String>,
) {
    let got = match result {
        Ok(_) => "ok",
        Err(NodeError::NotFound) => "not-found",
        Err(NodeError::Timeout) => "timeout",
        Err(_) => "error",
    };
    let want = expect.unwrap_or("ok");
    if got != want {
        let detail = match result {
            Ok(_) => String::from("success"),
            Err(e) => e.to_string(),
        };
        failures.push(format!("action {index} ({op}): got {got} ({detail}), expected {want}"));
    }
}

fn metric_value(report: &Report, name: &str) -> Option<u64> {
    let m = &report.metrics;
    match name {
        "bytes_transferred" => Some(m.bytes_transferred),
        "timeouts" => Some(m.timeouts),
        "drops" => Some(m.drops),
        "cross_partition_drops" => Some(m.cross_partition_drops),
        "cross_partition_deliveries" => Some(m.cross_partition_deliveries),
        "duplicate_blocks" => Some(m.duplicate_blocks),
        "corruptions_detected" => Some(m.corruptions_detected),
        "corruptions_injected" => Some(m.corruptions_injected),
        "events_processed" => Some(m.events_processed),
        "live_nodes" => Some(report.live_nodes as u64),
        "unique_blocks" => Some(report.unique_blocks as u64),
        "total_replicas" => Some(report.total_replicas),
        _ => name
            .strip_prefix("messages.")
            .and_then(|label| m.messages.get(label).copied().or(Some(0))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> Script {
        toml::from_str(text).expect("script parses")
    }

    #[test]
    fn minimal_script_runs_clean() {
        let script = parse(
            r#"
            seed = 7
            nodes = 8
            [node]
            k = 4

            [[action]]
            op = "add"
            node = 0
            size = 3000
            label = "doc"

            [[action]]
            op = "get"
            node = 5
            label = "doc"
            "#,
        );
        let outcome = run_script(&script).unwrap();
        assert!(outcome.failures.is_empty(), "{:?}", outcome.failures);
    }

    #[test]
    fn failed_expectation_is_reported_not_fatal() {
        let script = parse(
            r#"
            nodes = 4
            [node]
            k = 4

            [[action]]
            op = "get"
            node = 0
            path = "/ipfs/QmPZ9gcCEpqKTo6aq61g2nXGUhM4iCL3ewB6LDXZCtioEB"
            expect = "ok"

            [[expect]]
            metric = "cross_partition_deliveries"
            equals = 0
            "#,
        );
        let outcome = run_script(&script).unwrap();
        assert_eq!(outcome.failures.len(), 1);
        assert!(outcome.failures[0].contains("expected ok"));
    }

    #[test]
    fn unknown_op_is_a_parse_time_error() {
        let script = parse(
            r#"
            nodes = 2
            [[action]]
            op = "frobnicate"
            "#,
        );
        let err = run_script(&script).unwrap_err();
        assert!(matches!(err, ScenarioError::BadAction { .. }));
    }

    #[test]
    fn same_script_same_seed_identical_reports() {
        let text = r#"
            seed = 99
            nodes = 12
            [node]
            k = 4

            [[action]]
            op = "add"
            node = 1
            size = 70000
            label = "big"
            pin = true

            [[action]]
            op = "partition"
            groups = [[0,1,2,3,4,5],[6,7,8,9,10,11]]

            [[action]]
            op = "get"
            node = 7
            label = "big"
            expect = "not-found"

            [[action]]
            op = "heal"

            [[action]]
            op = "get"
            node = 7
            label = "big"
        "#;
        let a = run_script(&parse(text)).unwrap();
        let b = run_script(&parse(text)).unwrap();
        assert!(a.failures.is_empty(), "{:?}", a.failures);
        assert_eq!(a.report.render(), b.report.render());
        assert_eq!(a.trace, b.trace);
    }
}
