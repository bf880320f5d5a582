use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use nloc_lwr::output::{read_fronts, read_xi};

fn scenario(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("scenarios").join(name)
}

fn cli(out: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_nloc-lwr")).env("NLOC_LWR_OUT", out).args(args).output().unwrap()
}

fn files(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out: Vec<_> = fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (e.file_name().to_string_lossy().into_owned(), fs::read(e.path()).unwrap())
        })
        .collect();
    out.sort();
    out
}

#[test]
fn split_run_writes_outputs_and_is_deterministic() {
    let tmp = tempfile::tempdir().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    let path = scenario("split_queue.json");
    let path = path.to_str().unwrap();
    assert!(cli(&a, &["run", path]).status.success());
    assert!(cli(&b, &["run", path]).status.success());
    let written = files(&a);
    let names: Vec<&str> = written.iter().map(|f| f.0.as_str()).collect();
    for name in [
        "events.jsonl",
        "fronts.csv",
        "fronts.svg",
        "profile.svg",
        "profiles.csv",
        "reports.json",
        "scenario.json",
        "xi.csv",
    ] {
        assert!(names.contains(&name), "{name} missing from {names:?}");
    }
    assert!(!names.contains(&"evacuation.json"));
    assert_eq!(written, files(&b));
    let csv = String::from_utf8(written.iter().find(|f| f.0 == "fronts.csv").unwrap().1.clone()).unwrap();
    assert!(csv.starts_with("id,t_start,x_start,t_end,x_end,rho_left,rho_right,kind\n"));
    assert!(!csv.contains('\r'));
    assert!(!read_fronts(&a.join("fronts.csv")).unwrap().is_empty());
    let reports: serde_json::Value = serde_json::from_slice(&fs::read(a.join("reports.json")).unwrap()).unwrap();
    assert!(reports["checks"].as_array().unwrap().iter().all(|c| c["pass"] == true));

    let check = cli(&a, &["validate", a.to_str().unwrap()]);
    assert!(check.status.success(), "{}", String::from_utf8_lossy(&check.stdout));
}

#[test]
fn empty_scenario_gives_empty_fronts() {
    let tmp = tempfile::tempdir().unwrap();
    let out = cli(tmp.path(), &["run", scenario("empty.json").to_str().unwrap()]);
    assert!(out.status.success());
    assert!(read_fronts(&tmp.path().join("fronts.csv")).unwrap().is_empty());
    assert!(read_xi(&tmp.path().join("xi.csv")).unwrap().iter().all(|s| s.xi == 0.0));
    let ev: serde_json::Value = serde_json::from_slice(&fs::read(tmp.path().join("evacuation.json")).unwrap()).unwrap();
    assert_eq!(ev["evacuated"], true);
}

#[test]
fn step_constraint_is_rejected_by_split_engine() {
    let tmp = tempfile::tempdir().unwrap();
    let mut sc: serde_json::Value = serde_json::from_slice(&fs::read(scenario("empty.json")).unwrap()).unwrap();
    sc["engine"] = serde_json::json!({ "kind": "split", "n": 6, "h": 3 });
    let path = tmp.path().join("bad.json");
    fs::write(&path, sc.to_string()).unwrap();
    let out = cli(&tmp.path().join("out"), &["run", path.to_str().unwrap()]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("split requires Lipschitz p"));
}

#[test]
fn assumption_violations_name_the_assumption() {
    let tmp = tempfile::tempdir().unwrap();
    let mut sc: serde_json::Value = serde_json::from_slice(&fs::read(scenario("empty.json")).unwrap()).unwrap();
    sc["constraint"]["values"] = serde_json::json!([0.1, 0.2, 0.05]);
    let path = tmp.path().join("bad.json");
    fs::write(&path, sc.to_string()).unwrap();
    let out = cli(&tmp.path().join("out"), &["run", path.to_str().unwrap()]);
    assert!(!out.status.success());
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("assumption violated"), "{err}");
}

#[test]
fn unknown_fields_fail_the_run() {
    let tmp = tempfile::tempdir().unwrap();
    let mut sc: serde_json::Value = serde_json::from_slice(&fs::read(scenario("empty.json")).unwrap()).unwrap();
    sc["speed"] = serde_json::json!(2.0);
    let path = tmp.path().join("bad.json");
    fs::write(&path, sc.to_string()).unwrap();
    assert!(!cli(&tmp.path().join("out"), &["run", path.to_str().unwrap()]).status.success());
}

#[test]
fn region_map_verb_writes_raster() {
    let tmp = tempfile::tempdir().unwrap();
    let out = cli(tmp.path(), &["region-map", scenario("sec5.json").to_str().unwrap(), "--grid", "21"]);
    assert!(out.status.success());
    let csv = fs::read_to_string(tmp.path().join("region_map.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + 21 * 21);
    let pgm = fs::read_to_string(tmp.path().join("region_map.pgm")).unwrap();
    assert!(pgm.starts_with("P2\n21 21\n255\n"));
    assert!(fs::read_to_string(tmp.path().join("region_map.svg")).unwrap().contains("<svg"));
    assert!(!cli(tmp.path(), &["region-map", scenario("sec5.json").to_str().unwrap(), "--grid", "1"]).status.success());
}
