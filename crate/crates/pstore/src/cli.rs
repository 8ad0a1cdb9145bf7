//! The `pstore` command-line surface.
//!
//! Grammar: `pstore [--state DIR] [--json] <verb> [args…]`. Every verb
//! maps to exactly one node, simulator, or gateway operation and runs
//! against a persistent local state directory (default `./.pstore`,
//! overridable with `--state` or `PSTORE_STATE`).
//!
//! Exit codes: 0 success, 1 operational failure (typed error named on
//! stderr), 2 usage or script parse error.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use rand::RngCore;
use serde::{Deserialize, Serialize};

use crate::cid::Cid;
use crate::dag::{classify_block, BlockView, DagNode};
use crate::gateway::{serve, GatewayConfig};
use crate::node::{IpnsRecord, NodeConfig, NodeError};
use crate::scenario::{run_scenario, ScenarioError};
use crate::simnet::{Sim, SimConfig};

#[derive(Parser)]
#[command(name = "pstore", version, about = "content-addressed storage over a simulated peer-to-peer network")]
struct Cli {
    /// Node state directory
    #[arg(long, global = true, env = "PSTORE_STATE", default_value = "./.pstore")]
    state: PathBuf,
    /// Emit one JSON record per result instead of plain text
    #[arg(long, global = true)]
    json: bool,
    #[command(subcommand)]
    verb: Verb,
}

#[derive(Subcommand)]
enum Verb {
    /// Add a file (or directory of files) and print the root CID
    Add {
        file: PathBuf,
        /// Do not pin the added content
        #[arg(long)]
        no_pin: bool,
    },
    /// Write the content at an /ipfs or /ipns path to standard output
    Cat { path: String },
    /// Retrieve the content at a path into an output file
    Get {
        path: String,
        #[arg(short, long)]
        output: PathBuf,
    },
    /// List the links of the node at a path
    Ls { path: String },
    /// Manage pinned content
    #[command(subcommand)]
    Pin(PinVerb),
    /// List known providers for a CID
    Providers { cid: String },
    /// Mutable names
    #[command(subcommand)]
    Name(NameVerb),
    /// Resolve a dnslink domain, or bind one with --set
    Dnslink {
        domain: String,
        /// Bind the domain to this /ipfs or /ipns path
        #[arg(long)]
        set: Option<String>,
    },
    /// HTTP gateway
    #[command(subcommand)]
    Gateway(GatewayVerb),
    /// Simulation scenarios
    #[command(subcommand)]
    Sim(SimVerb),
    /// Print local node statistics
    Stats,
}

#[derive(Subcommand)]
enum PinVerb {
    /// Pin the content at a path (recursive)
    Add { path: String },
    /// Remove a pin by root CID
    Rm { cid: String },
    /// List pin roots
    Ls,
}

#[derive(Subcommand)]
enum NameVerb {
    /// Sign and publish this node's name, pointing it at a path
    Publish { path: String },
    /// Resolve a name to its current path
    Resolve { name: String },
}

#[derive(Subcommand)]
enum GatewayVerb {
    /// Serve the local node over HTTP until interrupted
    Serve {
        #[arg(long, default_value = "127.0.0.1:8700")]
        listen: String,
    },
}

#[derive(Subcommand)]
enum SimVerb {
    /// Execute a scenario script and print its metrics report
    Run(SimRunArgs),
}

#[derive(Args)]
struct SimRunArgs {
    script: PathBuf,
}

/// Manifest persisted alongside the block files.
#[derive(Debug, Default, Serialize, Deserialize)]
struct Manifest {
    key_seed: String,
    #[serde(default)]
    pins: Vec<(String, bool)>,
    #[serde(default)]
    ipns_sequence: u64,
    #[serde(default)]
    ipns_value: Option<String>,
    #[serde(default)]
    dnslink: BTreeMap<String, String>,
}

/// The persistent local node: a one-node simulation rehydrated from and
/// flushed back to a state directory.
struct LocalStore {
    dir: PathBuf,
    sim: Sim,
    id: usize,
    manifest: Manifest,
}

const LOCAL: usize = 0;

impl LocalStore {
    fn open(dir: &Path) -> Result<LocalStore, String> {
        let blocks_dir = dir.join("blocks");
        std::fs::create_dir_all(&blocks_dir)
            .map_err(|e| format!("cannot create state dir {}: {e}", dir.display()))?;
        let manifest_path = dir.join("manifest.json");
        let mut manifest: Manifest = if manifest_path.exists() {
            let text = std::fs::read_to_string(&manifest_path)
                .map_err(|e| format!("cannot read manifest: {e}"))?;
            serde_json::from_str(&text).map_err(|e| format!("corrupt manifest: {e}"))?
        } else {
            let mut seed = [0u8; 32];
            rand::thread_rng().fill_bytes(&mut seed);
            Manifest { key_seed: hex_encode(&seed), ..Manifest::default() }
        };
        let key_seed = hex_decode32(&manifest.key_seed)
            .ok_or_else(|| "corrupt manifest: bad key_seed".to_string())?;

        let mut sim = Sim::new(SimConfig { seed: 0, bootstrap_count: 1, ..SimConfig::default() });
        let id = sim.spawn_node_with_key(NodeConfig::default(), key_seed);
        debug_assert_eq!(id, LOCAL);

        let now = sim.now();
        for entry in std::fs::read_dir(&blocks_dir).map_err(|e| e.to_string())? {
            let entry = entry.map_err(|e| e.to_string())?;
            let name = entry.file_name().to_string_lossy().into_owned();
            let Ok(cid) = Cid::parse(&name) else {
                eprintln!("warning: ignoring stray file in blocks/: {name}");
                continue;
            };
            let data = std::fs::read(entry.path()).map_err(|e| e.to_string())?;
            if !cid.verify(&data) {
                eprintln!("warning: block {name} fails verification, ignoring");
                continue;
            }
            sim.node_mut(id).blockstore.put(cid, data, now);
        }
        let mut kept_pins = Vec::new();
        for (text, recursive) in &manifest.pins {
            match Cid::parse(text) {
                Ok(cid) => {
                    sim.node_mut(id).pins.pin(cid, *recursive);
                    kept_pins.push((text.clone(), *recursive));
                }
                Err(_) => eprintln!("warning: dropping unparsable pin {text}"),
            }
        }
        manifest.pins = kept_pins;

        // Re-seat the published name record so resolve works offline.
        sim.node_mut(id).ipns_sequence = manifest.ipns_sequence;
        sim.node_mut(id).ipns_value = manifest.ipns_value.clone();
        if let Some(value) = manifest.ipns_value.clone() {
            let record = {
                let node = sim.node(id);
                IpnsRecord::sign(
                    &node.signing_key,
                    value,
                    node.ipns_sequence,
                    now + node.config.provider_ttl,
                )
            };
            let name = record.name;
            sim.node_mut(id).ipns_store.insert(name, vec![record]);
        }
        for (domain, target) in &manifest.dnslink {
            sim.dnslink_table.insert(domain.clone(), vec![format!("dnslink={target}")]);
        }
        Ok(LocalStore { dir: dir.to_path_buf(), sim, id, manifest })
    }

    fn save(&mut self) -> Result<(), String> {
        let blocks_dir = self.dir.join("blocks");
        let node = self.sim.node(self.id);
        let held: std::collections::BTreeSet<String> =
            node.blockstore.cids().map(|c| c.to_text()).collect();
        for cid in &held {
            let path = blocks_dir.join(cid);
            if !path.exists() {
                let data = node
                    .blockstore
                    .peek(&Cid::parse(cid).expect("held cid text parses"))
                    .expect("held block readable");
                std::fs::write(&path, data).map_err(|e| format!("cannot write block: {e}"))?;
            }
        }
        for entry in std::fs::read_dir(&blocks_dir).map_err(|e| e.to_string())? {
            let entry = entry.map_err(|e| e.to_string())?;
            let name = entry.file_name().to_string_lossy().into_owned();
            if Cid::parse(&name).is_ok() && !held.contains(&name) {
                let _ = std::fs::remove_file(entry.path());
            }
        }
        self.manifest.pins =
            node.pins.roots().map(|(c, r)| (c.to_text(), r)).collect();
        self.manifest.ipns_sequence = node.ipns_sequence;
        self.manifest.ipns_value = node.ipns_value.clone();
        let text = serde_json::to_string_pretty(&self.manifest).expect("manifest serializes");
        std::fs::write(self.dir.join("manifest.json"), text)
            .map_err(|e| format!("cannot write manifest: {e}"))
    }
}

fn hex_encode(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

fn hex_decode32(text: &str) -> Option<[u8; 32]> {
    if text.len() != 64 {
        return None;
    }
    let mut out = [0u8; 32];
    for (i, chunk) in text.as_bytes().chunks(2).enumerate() {
        out[i] = u8::from_str_radix(std::str::from_utf8(chunk).ok()?, 16).ok()?;
    }
    Some(out)
}

/// The kebab-case class of a node error, stable for scripting.
fn error_name(err: &NodeError) -> &'static str {
    match err {
        NodeError::InvalidPath(_) => "invalid-path",
        NodeError::NotFound => "not-found",
        NodeError::Timeout => "timeout",
        NodeError::IntegrityViolation => "integrity-violation",
        NodeError::SegmentNotFound(_) => "segment-not-found",
        NodeError::NotADirectory(_) => "not-a-directory",
        NodeError::StorageFull => "storage-full",
        NodeError::NoRecord(_) => "no-record",
        NodeError::MalformedDnslink(_) => "malformed-dnslink",
        NodeError::RecursionLimit => "recursion-limit",
        NodeError::InvalidSignature => "invalid-signature",
        NodeError::InvalidName(_) => "invalid-name",
    }
}

/// Run the CLI against an argument vector; returns the process exit code.
/// Output goes to the real stdout/stderr.
pub fn run_cli<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(err) => {
            // clap prints help/version on stdout with success status
            let code = if err.use_stderr() { 2 } else { 0 };
            let _ = err.print();
            return code;
        }
    };
    match dispatch(&cli) {
        Ok(()) => 0,
        Err(CliFailure::Node(err)) => {
            let name = error_name(&err);
            let detail = err.to_string();
            if detail == name {
                eprintln!("error: {name}");
            } else {
                eprintln!("error: {name} ({detail})");
            }
            1
        }
        Err(CliFailure::Other(msg)) => {
            eprintln!("error: {msg}");
            1
        }
        Err(CliFailure::Usage(msg)) => {
            eprintln!("error: {msg}");
            2
        }
        Err(CliFailure::Expectations(lines)) => {
            for line in lines {
                eprintln!("expectation failed: {line}");
            }
            1
        }
    }
}

enum CliFailure {
    Node(NodeError),
    Other(String),
    Usage(String),
    Expectations(Vec<String>),
}

impl From<NodeError> for CliFailure {
    fn from(err: NodeError) -> CliFailure {
        CliFailure::Node(err)
    }
}

impl From<String> for CliFailure {
    fn from(msg: String) -> CliFailure {
        CliFailure::Other(msg)
    }
}

fn emit(json: bool, record: serde_json::Value, plain: &str) {
    if json {
        println!("{record}");
    } else {
        println!("{plain}");
    }
}

fn dispatch(cli: &Cli) -> Result<(), CliFailure> {
    match &cli.verb {
        Verb::Sim(SimVerb::Run(args)) => return sim_run(cli, args),
        Verb::Gateway(GatewayVerb::Serve { listen }) => return gateway_serve(cli, listen),
        _ => {}
    }

    let mut store = LocalStore::open(&cli.state)?;
    let id = store.id;
    match &cli.verb {
        Verb::Add { file, no_pin } => {
            let meta = std::fs::metadata(file)
                .map_err(|e| format!("cannot read {}: {e}", file.display()))?;
            let root = if meta.is_dir() {
                let mut entries = BTreeMap::new();
                for entry in std::fs::read_dir(file).map_err(|e| e.to_string())? {
                    let entry = entry.map_err(|e| e.to_string())?;
                    if !entry.file_type().map_err(|e| e.to_string())?.is_file() {
                        return Err(CliFailure::Usage(format!(
                            "add: {} contains non-file entries; only flat directories are supported",
                            file.display()
                        )));
                    }
                    let name = entry.file_name().to_string_lossy().into_owned();
                    let data = std::fs::read(entry.path()).map_err(|e| e.to_string())?;
                    entries.insert(name, data);
                }
                store.sim.add_directory(id, &entries, !no_pin)?
            } else {
                let data = std::fs::read(file)
                    .map_err(|e| format!("cannot read {}: {e}", file.display()))?;
                store.sim.add(id, &data, !no_pin)?
            };
            store.save()?;
            let text = root.to_text();
            emit(
                cli.json,
                serde_json::json!({ "cid": text, "pinned": !no_pin }),
                &text,
            );
        }
        Verb::Cat { path } => {
            let (_, data) = store.sim.resolve_and_get(id, path)?;
            store.save()?;
            // content bytes are the result; --json adds nothing here
            let mut out = std::io::stdout().lock();
            out.write_all(&data).map_err(|e| e.to_string())?;
            out.flush().map_err(|e| e.to_string())?;
        }
        Verb::Get { path, output } => {
            let (cid, data) = store.sim.resolve_and_get(id, path)?;
            store.save()?;
            std::fs::write(output, &data)
                .map_err(|e| format!("cannot write {}: {e}", output.display()))?;
            emit(
                cli.json,
                serde_json::json!({
                    "cid": cid.to_text(),
                    "size": data.len(),
                    "output": output.display().to_string(),
                }),
                &format!("{}\t{} bytes -> {}", cid.to_text(), data.len(), output.display()),
            );
        }
        Verb::Ls { path } => {
            let cid = store.sim.resolve(id, path)?;
            let now = store.sim.now();
            let data = store
                .sim
                .node_mut(id)
                .blockstore
                .get(&cid, now)
                .ok_or(NodeError::NotFound)?;
            let mut rows = Vec::new();
            if let BlockView::Interior(node) = classify_block(&data) {
                let kind = match node {
                    DagNode::Directory { .. } => "dir",
                    _ => "file",
                };
                for link in node.links() {
                    rows.push((link.name.clone(), link.target.to_text(), link.subtree_size, kind));
                }
            }
            if cli.json {
                let items: Vec<_> = rows
                    .iter()
                    .map(|(name, cid, size, _)| {
                        serde_json::json!({ "name": name, "cid": cid, "size": size })
                    })
                    .collect();
                println!("{}", serde_json::json!({ "cid": cid.to_text(), "links": items }));
            } else {
                for (name, cid, size, _) in &rows {
                    println!("{cid}\t{size}\t{name}");
                }
            }
        }
        Verb::Pin(PinVerb::Add { path }) => {
            let cid = store.sim.resolve(id, path)?;
            store.sim.pin(id, &cid, true)?;
            store.save()?;
            emit(
                cli.json,
                serde_json::json!({ "pinned": cid.to_text(), "recursive": true }),
                &format!("pinned {}", cid.to_text()),
            );
        }
        Verb::Pin(PinVerb::Rm { cid }) => {
            let cid = Cid::parse(cid).map_err(|e| CliFailure::Usage(format!("bad cid: {e}")))?;
            let removed = store.sim.unpin(id, &cid);
            if !removed {
                return Err(CliFailure::Other(format!("{} is not pinned", cid.to_text())));
            }
            store.save()?;
            emit(
                cli.json,
                serde_json::json!({ "unpinned": cid.to_text() }),
                &format!("unpinned {}", cid.to_text()),
            );
        }
        Verb::Pin(PinVerb::Ls) => {
            let roots: Vec<(String, bool)> = store
                .sim
                .node(id)
                .pins
                .roots()
                .map(|(c, r)| (c.to_text(), r))
                .collect();
            if cli.json {
                let items: Vec<_> = roots
                    .iter()
                    .map(|(c, r)| serde_json::json!({ "cid": c, "recursive": r }))
                    .collect();
                println!("{}", serde_json::json!({ "pins": items }));
            } else {
                for (cid, recursive) in roots {
                    println!("{cid}\t{}", if recursive { "recursive" } else { "direct" });
                }
            }
        }
        Verb::Providers { cid } => {
            let cid = Cid::parse(cid).map_err(|e| CliFailure::Usage(format!("bad cid: {e}")))?;
            let k = store.sim.node(id).config.k;
            let records = store.sim.find_providers(id, &cid, k);
            if cli.json {
                let items: Vec<_> = records
                    .iter()
                    .map(|r| serde_json::json!({ "provider": format!("{:?}", r.provider) }))
                    .collect();
                println!("{}", serde_json::json!({ "cid": cid.to_text(), "providers": items }));
            } else {
                for record in &records {
                    println!("{:?}", record.provider);
                }
            }
        }
        Verb::Name(NameVerb::Publish { path }) => {
            let name = store.sim.ipns_publish(id, path)?;
            store.save()?;
            emit(
                cli.json,
                serde_json::json!({ "name": name, "value": path }),
                &format!("{name} -> {path}"),
            );
        }
        Verb::Name(NameVerb::Resolve { name }) => {
            let value = store.sim.resolve_name(id, name, crate::ops::NAME_RECURSION_CAP)?;
            emit(cli.json, serde_json::json!({ "name": name, "value": value }), &value);
        }
        Verb::Dnslink { domain, set } => {
            if let Some(target) = set {
                store
                    .sim
                    .dnslink_table
                    .insert(domain.clone(), vec![format!("dnslink={target}")]);
                store.manifest.dnslink.insert(domain.clone(), target.clone());
                store.save()?;
                emit(
                    cli.json,
                    serde_json::json!({ "domain": domain, "value": target }),
                    &format!("{domain} -> {target}"),
                );
            } else {
                let value = store.sim.resolve_name(id, domain, crate::ops::NAME_RECURSION_CAP)?;
                emit(cli.json, serde_json::json!({ "domain": domain, "value": value }), &value);
            }
        }
        Verb::Stats => {
            let node = store.sim.node(id);
            let record = serde_json::json!({
                "peer": format!("{:?}", node.peer_id),
                "name": store.sim.ipns_name(id),
                "blocks": node.blockstore.len(),
                "used_bytes": node.blockstore.used_bytes(),
                "capacity_bytes": node.config.capacity_bytes,
                "pins": node.pins.roots().count(),
                "share_cache": node.share_cache,
            });
            if cli.json {
                println!("{record}");
            } else {
                println!("peer:           {:?}", node.peer_id);
                println!("name:           {}", store.sim.ipns_name(id));
                println!("blocks:         {}", node.blockstore.len());
                println!("used bytes:     {}", node.blockstore.used_bytes());
                println!("capacity bytes: {}", node.config.capacity_bytes);
                println!("pins:           {}", node.pins.roots().count());
            }
        }
        Verb::Sim(_) | Verb::Gateway(_) => unreachable!("handled above"),
    }
    Ok(())
}

fn sim_run(cli: &Cli, args: &SimRunArgs) -> Result<(), CliFailure> {
    let outcome = run_scenario(&args.script).map_err(|err| match err {
        ScenarioError::Io(e) => CliFailure::Usage(format!("{}: {e}", args.script.display())),
        ScenarioError::Parse(e) => CliFailure::Usage(format!("script parse error: {e}")),
        ScenarioError::BadAction { .. } => CliFailure::Usage(err.to_string()),
    })?;
    if cli.json {
        println!(
            "{}",
            serde_json::json!({
                "report": serde_json::from_str::<serde_json::Value>(&outcome.report.render())
                    .expect("report renders as json"),
                "failures": outcome.failures,
            })
        );
    } else {
        println!("{}", outcome.report.render());
    }
    if outcome.failures.is_empty() {
        Ok(())
    } else {
        Err(CliFailure::Expectations(outcome.failures))
    }
}

fn gateway_serve(cli: &Cli, listen: &str) -> Result<(), CliFailure> {
    let store = LocalStore::open(&cli.state)?;
    let id = store.id;
    let sim = std::sync::Arc::new(std::sync::Mutex::new(store.sim));
    let config = GatewayConfig {
        listen_address: listen.to_string(),
        request_timeout: 30_000,
        backing_node: id,
    };
    let handle = serve(config, sim).map_err(|e| e.to_string())?;
    emit(
        cli.json,
        serde_json::json!({ "listening": handle.local_addr.to_string() }),
        &format!("gateway listening on http://{}", handle.local_addr),
    );
    // Foreground until interrupted; the process exits via signal.
    loop {
        std::thread::sleep(std::time::Duration::from_secs(3600));
    }
}
