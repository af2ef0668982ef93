use std::fs;
use std::process::Command;

fn mecwpt() -> Command {
    Command::new(env!("CARGO_BIN_EXE_mecwpt"))
}

#[test]
fn validate_on_defaults_exits_zero() {
    let dir = tempfile::tempdir().unwrap();
    let out = mecwpt()
        .args(["validate", "--realizations", "1", "--quiet", "--out"])
        .arg(dir.path())
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stdout));
}

#[test]
fn missing_config_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let out = mecwpt()
        .args(["run", "--config"])
        .arg(dir.path().join("nope.json"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("nope.json"));
}

#[test]
fn bad_key_reports_line() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.json");
    fs::write(&cfg, "{\n  \"seed\": 1,\n  \"sede\": 2\n}\n").unwrap();
    let out = mecwpt().args(["profile", "--config"]).arg(&cfg).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 3"));
}

#[test]
fn unknown_axis_is_a_config_error() {
    let out = mecwpt().args(["sweep", "--axis", "colour"]).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn sweep_data_schema() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.json");
    fs::write(&cfg, r#"{ "seed": 5, "sweep": { "axis": "data", "values": ["1 kbit", "60 kbit"] } }"#).unwrap();
    let status = mecwpt()
        .args(["sweep", "--axis", "data", "--realizations", "1", "--quiet", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(dir.path())
        .status()
        .unwrap();
    assert!(status.success());
    let text = fs::read_to_string(dir.path().join("sweep_data.csv")).unwrap();
    let mut lines = text.split("\r\n").filter(|l| !l.is_empty());
    assert_eq!(lines.next(), Some("axis_value,seed,scheme,metric,value"));
    let rows: Vec<Vec<&str>> = lines.map(|l| l.split(',').collect()).collect();
    assert!(!rows.is_empty());
    for r in &rows {
        assert_eq!(r.len(), 5);
        assert!(r[0] == "1000" || r[0] == "60000", "{r:?}");
        assert_eq!(r[1], "5");
        assert!(r[4].parse::<f64>().is_ok());
    }
    for scheme in ["partial", "binary"] {
        for metric in ["energy_weighted", "time_offload", "t_charge"] {
            assert!(rows.iter().any(|r| r[2] == scheme && r[3] == metric), "{scheme} {metric}");
        }
    }
}

#[test]
fn run_writes_summary_and_traces() {
    let dir = tempfile::tempdir().unwrap();
    let status = mecwpt()
        .args(["run", "--seed", "2", "--quiet", "--out"])
        .arg(dir.path())
        .status()
        .unwrap();
    assert!(status.success());
    let run = fs::read_to_string(dir.path().join("run.csv")).unwrap();
    assert!(run.contains(",optimal,received_energy,"));
    let conv = fs::read_to_string(dir.path().join("convergence.csv")).unwrap();
    assert!(conv.contains(",pco,objective,"));
}

#[test]
fn profile_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("p.json");
    fs::write(
        &cfg,
        r#"{ "schedule": [ {"mode": "data-and-charging", "blocks": 1}, {"mode": "charging-only", "blocks": 1} ] }"#,
    )
    .unwrap();
    let mut outputs = Vec::new();
    for sub in ["a", "b"] {
        let out = dir.path().join(sub);
        let status = mecwpt().args(["profile", "--quiet", "--config"]).arg(&cfg).arg("--out").arg(&out).status().unwrap();
        assert!(status.success());
        outputs.push(fs::read(out.join("profile.csv")).unwrap());
    }
    assert_eq!(outputs[0], outputs[1]);
}
