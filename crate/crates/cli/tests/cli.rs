use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn run(args: &[&str], out: &Path, cache: Option<&Path>) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_mms-lab"));
    cmd.args(args).arg("--out").arg(out).env_remove("MMS_LAB_CACHE");
    if let Some(c) = cache {
        cmd.env("MMS_LAB_CACHE", c);
    }
    cmd.output().expect("binary runs")
}

fn stdout_json(o: &Output) -> Value {
    assert!(o.status.success(), "stderr: {}", String::from_utf8_lossy(&o.stderr));
    serde_json::from_slice(&o.stdout).expect("one JSON line on stdout")
}

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

const SMALL: &str = r#"{
  "points": ["a", "b", "c", "d"],
  "metric": {"kind": "matrix", "data": [
    [0, 1, 2, 1.5],
    [1, 0, 1, 1.2],
    [2, 1, 0, 0.9],
    [1.5, 1.2, 0.9, 0]
  ]},
  "weights": [0.1, 0.2, 0.3, 0.4],
  "base": 1
}"#;

#[test]
fn cdstar_flat_segment_holds() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["cdstar", "--model", "euclidean-grid:1d", "--K", "0", "--N", "1"], dir.path(), None);
    assert_eq!(stdout_json(&o)["verdict"], "holds");
    let report = read_json(&dir.path().join("cdstar.json"));
    assert!(report["entries"].as_array().is_some_and(|e| !e.is_empty()));
    let csv = fs::read_to_string(dir.path().join("cdstar.csv")).unwrap();
    assert!(csv.starts_with("t,nprime,lhs,rhs,slack\n"));
    assert!(dir.path().join("cdstar.meta.json").exists());
}

#[test]
fn ghdist_of_a_space_with_itself_is_zero() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("A.json");
    fs::write(&a, SMALL).unwrap();
    let a = a.to_str().unwrap();
    for extra in [&[][..], &["--exhaustive"][..]] {
        let mut args = vec!["ghdist", a, a];
        args.extend_from_slice(extra);
        let v = stdout_json(&run(&args, dir.path(), None));
        assert_eq!(v["value"].as_f64(), Some(0.0), "{args:?}");
    }
}

#[test]
fn dimension_of_the_cubic_grid_is_three() {
    let dir = tempfile::tempdir().unwrap();
    let v = stdout_json(&run(&["dimension", "--model", "euclidean-grid:3d", "--N", "3"], dir.path(), None));
    assert_eq!(v["n"].as_u64(), Some(3));
    assert_eq!(v["inconclusive"], false);
}

#[test]
fn invalid_input_exits_with_two() {
    let dir = tempfile::tempdir().unwrap();
    for args in [
        &["cdstar", "--model", "euclidean-grid:1d", "--N", "1"][..],
        &["cdstar", "--model", "no-such-model", "--K", "0", "--N", "1"][..],
        &["cdstar", "--model", "euclidean-grid:1d", "--K", "0", "--N", "0.5"][..],
        &["w2", "--model", "euclidean-grid:1d", "--tol-cd", "-1"][..],
    ] {
        let o = run(args, dir.path(), None);
        assert_eq!(o.status.code(), Some(2), "{args:?}: {}", String::from_utf8_lossy(&o.stderr));
    }
}

#[test]
fn exhausted_budget_exits_with_three() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["ghdist", "euclidean-grid:2d", "lp-plane:inf", "--exhaustive"], dir.path(), None);
    assert_eq!(o.status.code(), Some(3), "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn reruns_are_byte_identical() {
    let (d1, d2) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let args = ["blowup", "--model", "euclidean-grid:2d", "--radii", "0.2,0.1", "--svg", "--seed", "7"];
    let (o1, o2) = (run(&args, d1.path(), None), run(&args, d2.path(), None));
    assert_eq!(o1.stdout, o2.stdout);
    let mut seen = 0;
    for entry in fs::read_dir(d1.path()).unwrap() {
        let name = entry.unwrap().file_name().into_string().unwrap();
        if name.ends_with(".meta.json") {
            continue;
        }
        let a = fs::read(d1.path().join(&name)).unwrap();
        let b = fs::read(d2.path().join(&name)).unwrap();
        assert!(a == b, "{name} differs between runs");
        seen += 1;
    }
    assert_eq!(seen, 4);
}

#[test]
fn w2_second_run_hits_the_cache() {
    let dir = tempfile::tempdir().unwrap();
    let cache = dir.path().join("cache");
    let args = ["w2", "--model", "euclidean-grid:2d"];
    let first = run(&args, dir.path(), Some(&cache));
    let report = fs::read(dir.path().join("w2.json")).unwrap();
    assert_eq!(read_json(&dir.path().join("w2.meta.json"))["cache_hit"], false);
    let second = run(&args, dir.path(), Some(&cache));
    assert_eq!(read_json(&dir.path().join("w2.meta.json"))["cache_hit"], true);
    assert_eq!(first.stdout, second.stdout);
    assert_eq!(report, fs::read(dir.path().join("w2.json")).unwrap());
}

#[test]
fn models_list_names_every_kind() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["models", "list"], dir.path(), None);
    assert!(o.status.success());
    let text = String::from_utf8(o.stdout).unwrap();
    for kind in ["euclidean-grid", "lp-plane", "sphere", "cone", "cylinder", "weighted-segment", "graph"] {
        assert!(text.contains(kind), "{kind} missing");
    }
}
