mod common;

use common::*;
use serde_json::Value;

fn golden_dir() -> std::path::PathBuf {
    std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden")
}

/// Key paths and value kinds of a JSON document, one per line.
fn skeleton(v: &Value) -> String {
    fn walk(v: &Value, path: &str, out: &mut Vec<String>) {
        match v {
            Value::Object(map) => {
                out.push(format!("{path} object"));
                for (k, x) in map {
                    walk(x, &format!("{path}.{k}"), out);
                }
            }
            Value::Array(items) => {
                out.push(format!("{path} array"));
                if let Some(first) = items.first() {
                    walk(first, &format!("{path}[]"), out);
                }
            }
            Value::String(_) => out.push(format!("{path} string")),
            Value::Number(_) => out.push(format!("{path} number")),
            Value::Bool(_) => out.push(format!("{path} bool")),
            Value::Null => out.push(format!("{path} null")),
        }
    }
    let mut out = Vec::new();
    walk(v, "$", &mut out);
    out.join("\n") + "\n"
}

fn check_golden(name: &str, actual: &str) {
    let path = golden_dir().join(name);
    if std::env::var_os("UPDATE_GOLDEN").is_some() {
        std::fs::create_dir_all(golden_dir()).unwrap();
        std::fs::write(&path, actual).unwrap();
    }
    let expected = std::fs::read_to_string(&path).unwrap_or_else(|_| panic!("missing golden file {}", path.display()));
    assert_eq!(actual, expected, "golden mismatch for {name}");
}

#[test]
fn classify_reference_problems() {
    let dir = tempfile::tempdir().unwrap();
    let a = write_config(dir.path(), "a.toml", &config_text(2.0, 0.0, "t", "1", "t", "").replace("h = \"t\"", "h = \"t\"\nomega = \"wholespace\""));
    let out = run(&["classify", "--config", a.to_str().unwrap()]);
    assert!(out.status.success());
    let v = json(&out.stdout);
    assert_eq!(v["predicted_class"], "Global");
    assert_eq!(v["criterion_unweighted"]["verdict"], "Infinite");
    assert!(v["criterion_unweighted"].get("value").is_none());

    let b = write_config(dir.path(), "b.toml", &config_text(2.0, 0.0, "t", "1", "t^6", ""));
    let v = json(&run(&["classify", "--config", b.to_str().unwrap()]).stdout);
    assert_eq!(v["predicted_class"], "B2");
    assert_eq!(v["theta"], 1.0);
    assert_eq!(v["delta"], 2.0);
    let value = v["criterion_unweighted"]["value"].as_f64().unwrap();
    assert!((value - 3.0 * 4f64.powf(2.0 / 3.0) / 5.0).abs() < 1e-8 * value);
}

#[test]
fn solve_blow_up_problem() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "b.toml", &config_text(2.0, 0.0, "t", "1", "t^6", ""));
    let out_dir = dir.path().join("out");
    let out = run(&["solve", "--config", cfg.to_str().unwrap(), "--out", out_dir.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let report = json(&std::fs::read(out_dir.join("report.json")).unwrap());
    assert_eq!(report["termination"], "BlowUp");
    assert_eq!(report["numeric_class"], "B2");
    assert_eq!(report["reconcile"]["agree"], true);
    let r0 = report["R0"].as_f64().unwrap();
    assert!(report["verify"].as_array().unwrap().iter().all(|r| r["pass"] == true));

    let text = std::fs::read_to_string(out_dir.join("trajectory.csv")).unwrap();
    assert_eq!(text.lines().next().unwrap(), "r,u,v,du,dv,res_eq1,res_eq2");
    let rows = csv_rows(&text);
    let last = rows.last().unwrap();
    let r: f64 = last["r"].parse().unwrap();
    let v: f64 = last["v"].parse().unwrap();
    assert!(v >= 1e8);
    assert!(r < r0 && r0 - r < 1e-4);
}

#[test]
fn q_sweep_crosses_all_three_classes() {
    let cfg = config_text(2.0, 0.0, "t", "1", "t", "[sweep]\nq = [1, 2, 3, 4, 5, 6, 7, 8]\n");
    let cfg = plap::parse_config(&cfg).unwrap();
    let mut buf = Vec::new();
    plap::cmd_sweep(&cfg, false, None, &mut buf).unwrap();
    let rows = csv_rows(std::str::from_utf8(&buf).unwrap());
    let classes: Vec<&str> = rows.iter().map(|r| r["predicted_class"].as_str()).collect();
    assert_eq!(classes, ["B1", "B3", "B3", "B3", "B2", "B2", "B2", "B2"]);
    assert!(rows.iter().all(|r| r["error"].is_empty()));
}

#[test]
fn empty_sweep_is_a_single_row() {
    let cfg = plap::parse_config(&config_text(2.0, 0.0, "t", "1", "t^6", "[sweep]\n")).unwrap();
    let mut buf = Vec::new();
    plap::cmd_sweep(&cfg, true, None, &mut buf).unwrap();
    let rows = csv_rows(std::str::from_utf8(&buf).unwrap());
    assert_eq!(rows.len(), 1);
    assert_eq!(rows[0]["numeric_class"], "B2");
    assert_eq!(rows[0]["agree"], "true");
}

#[test]
fn alpha_sweep_past_the_gap_yields_no_solution() {
    let cfg = config_text(2.0, 0.0, "t", "1", "t^6", "[sweep]\nparameter = \"alpha\"\nvalues = [0, 0.5, 0.9, 1, 1.5]\n");
    let cfg = plap::parse_config(&cfg).unwrap();
    let mut buf = Vec::new();
    plap::cmd_sweep(&cfg, true, None, &mut buf).unwrap();
    let rows = csv_rows(std::str::from_utf8(&buf).unwrap());
    let classes: Vec<&str> = rows.iter().map(|r| r["predicted_class"].as_str()).collect();
    assert_eq!(&classes[3..], ["NoSolution", "NoSolution"]);
    assert!(classes[..3].iter().all(|c| *c != "NoSolution"));
    assert!(rows.iter().all(|r| r["error"].is_empty()));
}

#[test]
fn sweep_continues_past_failing_rows() {
    let cfg = config_text(2.0, 0.0, "t", "1", "t^6", "[sweep]\nbeta = [0, 2, 1]\n");
    let cfg = plap::parse_config(&cfg).unwrap();
    let mut buf = Vec::new();
    plap::cmd_sweep(&cfg, true, None, &mut buf).unwrap();
    let rows = csv_rows(std::str::from_utf8(&buf).unwrap());
    assert_eq!(rows.len(), 3);
    assert!(rows[0]["error"].is_empty() && rows[2]["error"].is_empty());
    assert!(rows[1]["error"].contains("k2"), "{}", rows[1]["error"]);
    assert_eq!(rows[2]["numeric_class"], rows[2]["predicted_class"]);
}

#[test]
fn verify_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    for h in ["t", "t^4"] {
        let cfg = write_config(dir.path(), "c.toml", &config_text(2.0, 0.0, "t", "1", h, ""));
        let out = run(&["verify", "--config", cfg.to_str().unwrap()]);
        assert_eq!(out.status.code(), Some(0), "h = {h}");
        assert_eq!(json(&out.stdout)["pass"], true);
    }

    let cfg = write_config(dir.path(), "b.toml", &config_text(2.0, 0.0, "t", "1", "t^6", ""));
    let out_dir = dir.path().join("out");
    assert!(run(&["solve", "--config", cfg.to_str().unwrap(), "--out", out_dir.to_str().unwrap()]).status.success());
    let traj = out_dir.join("trajectory.csv");
    let out = run(&["verify", "--config", cfg.to_str().unwrap(), "--trajectory", traj.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));

    let text = std::fs::read_to_string(&traj).unwrap();
    let mut lines: Vec<String> = text.lines().map(String::from).collect();
    let mid = lines.len() / 2;
    let mut fields: Vec<String> = lines[mid].split(',').map(String::from).collect();
    fields[4] = "-1".into();
    lines[mid] = fields.join(",");
    let bad = dir.path().join("bad.csv");
    std::fs::write(&bad, lines.join("\n")).unwrap();
    let out = run(&["verify", "--config", cfg.to_str().unwrap(), "--trajectory", bad.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    let v = json(&out.stdout);
    assert_eq!(v["pass"], false);
    let monotone = v["reports"].as_array().unwrap().iter().find(|r| r["name"] == "monotone").unwrap();
    assert_eq!(monotone["pass"], false);
}

#[test]
fn config_errors_are_listed_with_lines() {
    let dir = tempfile::tempdir().unwrap();
    let text = "seed = 1\ncolour = 3\n[problem]\np = 2\nalpha = 0\nn = 3\nf1 = \"1\"\nf2 = \"1\"\ng1 = \"1\"\ng2 = \"1\"\nh = \"t\"\n[solver]\nu1 = 2\n";
    let cfg = write_config(dir.path(), "bad.toml", text);
    let out = run(&["classify", "--config", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("bad.toml:2: unknown key `colour`"), "{err}");
    assert!(err.contains("bad.toml:13: unknown key `u1`"), "{err}");
    assert!(err.contains("k1 > 0"), "{err}");
}

#[test]
fn repeated_runs_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "c.toml", &config_text(2.0, 0.0, "t", "1", "t^4", ""));
    let mut outputs = Vec::new();
    for k in 0..2 {
        let out_dir = dir.path().join(format!("out{k}"));
        assert!(run(&["solve", "--config", cfg.to_str().unwrap(), "--out", out_dir.to_str().unwrap()]).status.success());
        outputs.push((std::fs::read(out_dir.join("trajectory.csv")).unwrap(), std::fs::read(out_dir.join("report.json")).unwrap()));
    }
    assert!(outputs[0] == outputs[1]);
}

#[test]
fn seed_selects_sandwich_samples() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "a.toml", &config_text(2.0, 0.0, "t", "1", "t^6", ""));
    let verify = |seed: &str| json(&run(&["verify", "--config", cfg.to_str().unwrap(), "--seed", seed]).stdout);
    assert_eq!(verify("5"), verify("5"));
    assert_eq!(verify("5")["seed"], 5);
    assert_eq!(verify("6")["seed"], 6);
}

#[test]
fn output_schemas_are_stable() {
    let dir = tempfile::tempdir().unwrap();
    for (name, h) in [("a", "t"), ("b", "t^6"), ("c", "t^4")] {
        let cfg = write_config(dir.path(), &format!("{name}.toml"), &config_text(2.0, 0.0, "t", "1", h, ""));
        let classify = run(&["classify", "--config", cfg.to_str().unwrap()]);
        check_golden(&format!("{name}.classify.txt"), &skeleton(&json(&classify.stdout)));
        let out_dir = dir.path().join(name);
        assert!(run(&["solve", "--config", cfg.to_str().unwrap(), "--out", out_dir.to_str().unwrap()]).status.success());
        let report = json(&std::fs::read(out_dir.join("report.json")).unwrap());
        check_golden(&format!("{name}.report.txt"), &skeleton(&report));
        let header = std::fs::read_to_string(out_dir.join("trajectory.csv")).unwrap().lines().next().unwrap().to_string();
        assert_eq!(header, "r,u,v,du,dv,res_eq1,res_eq2");
    }
}
