//! End-to-end checks of the `pstore` binary: exit codes, byte-exact
//! round trips, and scenario determinism.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn pstore(state: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pstore"))
        .arg("--state")
        .arg(state)
        .args(args)
        .output()
        .expect("binary runs")
}

fn scenario_path(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios").join(name)
}

#[test]
fn add_then_cat_is_byte_exact_including_nul() {
    let tmp = tempfile::tempdir().unwrap();
    let state = tmp.path().join("state");
    let input = tmp.path().join("input.bin");
    let mut payload = vec![0u8, 1, 2, 0, 255, 0];
    payload.extend((0..70_000u32).map(|i| (i % 253) as u8));
    std::fs::write(&input, &payload).unwrap();

    let out = pstore(&state, &["add", input.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(out.stderr.is_empty(), "no diagnostics on success");
    let cid = String::from_utf8(out.stdout).unwrap().trim().to_string();
    assert!(cid.starts_with("Qm"), "{cid}");

    let out = pstore(&state, &["cat", &format!("/ipfs/{cid}")]);
    assert!(out.status.success());
    assert_eq!(out.stdout, payload, "cat must return the exact added bytes");
}

#[test]
fn state_survives_across_invocations() {
    let tmp = tempfile::tempdir().unwrap();
    let state = tmp.path().join("state");
    let input = tmp.path().join("doc.txt");
    std::fs::write(&input, b"persistent content").unwrap();

    let out = pstore(&state, &["add", input.to_str().unwrap()]);
    let cid = String::from_utf8(out.stdout).unwrap().trim().to_string();

    // fresh process, same state dir
    let out = pstore(&state, &["pin", "ls"]);
    assert!(String::from_utf8_lossy(&out.stdout).contains(&cid));

    let out = pstore(&state, &["get", &format!("/ipfs/{cid}"), "-o"]);
    assert_eq!(out.status.code(), Some(2), "missing value for -o is a usage error");
}

#[test]
fn unknown_cid_exits_one_with_not_found() {
    let tmp = tempfile::tempdir().unwrap();
    let state = tmp.path().join("state");
    let out = pstore(
        &state,
        &["cat", "/ipfs/QmPZ9gcCEpqKTo6aq61g2nXGUhM4iCL3ewB6LDXZCtioEB"],
    );
    assert_eq!(out.status.code(), Some(1));
    assert!(
        String::from_utf8_lossy(&out.stderr).contains("not-found"),
        "stderr names the typed error: {}",
        String::from_utf8_lossy(&out.stderr)
    );
}

#[test]
fn usage_errors_exit_two() {
    let tmp = tempfile::tempdir().unwrap();
    let state = tmp.path().join("state");
    let out = pstore(&state, &["frobnicate"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn name_publish_and_resolve_round_trip() {
    let tmp = tempfile::tempdir().unwrap();
    let state = tmp.path().join("state");
    let input = tmp.path().join("v1.txt");
    std::fs::write(&input, b"version one").unwrap();
    let out = pstore(&state, &["add", input.to_str().unwrap()]);
    let cid = String::from_utf8(out.stdout).unwrap().trim().to_string();
    let path = format!("/ipfs/{cid}");

    let out = pstore(&state, &["--json", "name", "publish", &path]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let record: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    let name = record["name"].as_str().unwrap().to_string();

    let out = pstore(&state, &["name", "resolve", &name]);
    assert_eq!(String::from_utf8_lossy(&out.stdout).trim(), path);

    // the /ipns path is also a cat-able path
    let out = pstore(&state, &["cat", &format!("/ipns/{name}")]);
    assert_eq!(out.stdout, b"version one");
}

#[test]
fn bundled_scenarios_pass_and_are_deterministic() {
    let tmp = tempfile::tempdir().unwrap();
    let state = tmp.path().join("state");
    for scn in ["partition.scn", "churn.scn"] {
        let script = scenario_path(scn);
        let a = pstore(&state, &["sim", "run", script.to_str().unwrap()]);
        assert!(a.status.success(), "{scn}: {}", String::from_utf8_lossy(&a.stderr));
        let b = pstore(&state, &["sim", "run", script.to_str().unwrap()]);
        assert_eq!(a.stdout, b.stdout, "{scn}: same script + seed must print identically");
    }
    let report = String::from_utf8_lossy(
        &pstore(&state, &["sim", "run", scenario_path("partition.scn").to_str().unwrap()]).stdout,
    )
    .to_string();
    assert!(report.contains("\"cross_partition_deliveries\": 0"));
}

#[test]
fn scenario_parse_error_exits_two() {
    let tmp = tempfile::tempdir().unwrap();
    let state = tmp.path().join("state");
    let bad = tmp.path().join("bad.scn");
    std::fs::write(&bad, "nodes = \"many\"").unwrap();
    let out = pstore(&state, &["sim", "run", bad.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
}
