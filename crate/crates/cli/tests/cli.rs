use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use chainscope::recurrence::RecurrenceClass;
use chainscope::report::{read_field_csv, read_recurrence_csv};

fn scratch(name: &str) -> PathBuf {
    let dir = Path::new(env!("CARGO_TARGET_TMPDIR")).join(name);
    let _ = fs::remove_dir_all(&dir);
    fs::create_dir_all(&dir).unwrap();
    dir
}

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_chainscope"))
        .args(args)
        .env_remove("CHAINSCOPE_THREADS")
        .output()
        .unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn analyze_writes_readable_artifacts() {
    let dir = scratch("analyze");
    let out = dir.to_str().unwrap();
    let o = run(&["analyze", "--system", "gradient-circle", "--grid", "64", "--out", out]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(stdout(&o).contains("SCR-candidate 2"));
    let rows = read_recurrence_csv(fs::File::open(dir.join("recurrence.csv")).unwrap()).unwrap();
    assert_eq!(rows.len(), 64);
    let scr: Vec<f64> = rows
        .iter()
        .filter(|r| r.class == RecurrenceClass::Scr)
        .map(|r| r.coords[0])
        .collect();
    assert_eq!(scr, vec![0.0, 0.5]);
    let field = read_field_csv(fs::File::open(dir.join("loop_cost.csv")).unwrap()).unwrap();
    assert_eq!(field.columns, vec!["value", "finest", "class"]);
    assert_eq!(field.values.len(), 64);
    let gp = fs::read_to_string(dir.join("loop_cost.gp")).unwrap();
    assert!(gp.contains("loop_cost.csv"));
    let json: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.join("summary.json")).unwrap()).unwrap();
    assert_eq!(json["config"]["system"], "gradient-circle");
    assert_eq!(json["scr_candidates"], 2);
}

#[test]
fn runs_are_deterministic() {
    let args = |dir: &Path| {
        vec![
            "lyapunov".to_string(),
            "--system".into(),
            "outer-example".into(),
            "--set".into(),
            "subsystem=x1".into(),
            "--grid".into(),
            "256".into(),
            "--set".into(),
            "samples=200".into(),
            "--out".into(),
            dir.display().to_string(),
        ]
    };
    let a = scratch("det-a");
    let b = scratch("det-b");
    for d in [&a, &b] {
        let v = args(d);
        let o = run(&v.iter().map(String::as_str).collect::<Vec<_>>());
        assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    }
    for f in ["lyapunov.csv", "lyapunov.gp"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f}");
    }
    let strip = |d: &Path| {
        let mut v: serde_json::Value =
            serde_json::from_str(&fs::read_to_string(d.join("summary.json")).unwrap()).unwrap();
        v["config"]["out_dir"] = serde_json::Value::Null;
        v
    };
    assert_eq!(strip(&a), strip(&b));
}

#[test]
fn config_file_is_overridden_by_flags() {
    let dir = scratch("config");
    let cfg = dir.join("run.conf");
    fs::write(&cfg, "# circle\nsystem = cantor-null\ngrid = 32\ndepth = 2\nT = 2\n").unwrap();
    let out = dir.join("out");
    let o = run(&[
        "analyze",
        "--config",
        cfg.to_str().unwrap(),
        "--grid",
        "48",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let json: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("summary.json")).unwrap()).unwrap();
    assert_eq!(json["config"]["grid"], 48);
    assert_eq!(json["config"]["t"], 2.0);
    assert_eq!(json["config"]["system_params"]["depth"], "2");
    assert_eq!(json["nodes"], 48);
}

#[test]
fn bad_input_exits_with_config_code() {
    let dir = scratch("bad");
    let out = dir.to_str().unwrap();
    for args in [
        vec!["analyze", "--system", "nope", "--out", out],
        vec!["analyze", "--grid", "1", "--out", out],
        vec!["analyze", "--set", "T=abc", "--out", out],
        vec!["analyze", "--set", "delta=2", "--out", out],
        vec!["analyze", "--set", "noequals", "--out", out],
        vec!["rigidity", "--system", "rotation", "--out", out],
    ] {
        let o = run(&args);
        assert_eq!(o.status.code(), Some(2), "{args:?}: {}", String::from_utf8_lossy(&o.stderr));
        assert!(!o.stderr.is_empty());
    }
}

#[test]
fn rigidity_reports_the_verdict() {
    let dir = scratch("rigidity");
    let o = run(&[
        "rigidity",
        "--potential=-2*cos(x1)",
        "--grid",
        "128",
        "--out",
        dir.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).contains("boundary-touching"), "{}", stdout(&o));
    assert!(dir.join("sublevel.csv").exists());
}

#[test]
fn outer_extracts_first_order_term() {
    let dir = scratch("outer");
    let o = run(&["outer", "--grid", "128", "--out", dir.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(stdout(&o).contains("order 1"), "{}", stdout(&o));
    let v = read_field_csv(fs::File::open(dir.join("leading_term.csv")).unwrap()).unwrap();
    assert_eq!(v.values.len(), 128 * 128);
}

#[test]
fn examples_and_selftest() {
    let dir = scratch("misc");
    let out = dir.to_str().unwrap();
    let o = run(&["examples", "--out", out]);
    assert_eq!(o.status.code(), Some(0));
    for label in ["cantor-fat", "rotation", "outer-example"] {
        assert!(stdout(&o).contains(label));
    }
    let o = run(&["selftest", "--out", out]);
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
    assert!(!stdout(&o).contains("FAIL"));
}
