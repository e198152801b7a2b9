//! End-to-end tests of the `losstol` binary.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;

fn losstol(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_losstol"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn path_str(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn report_value(report: &str, key: &str) -> f64 {
    report
        .lines()
        .find_map(|l| l.strip_prefix(&format!("{key} = ")))
        .unwrap_or_else(|| panic!("no '{key}' in report:\n{report}"))
        .parse()
        .unwrap()
}

#[test]
fn sweep_matches_golden_file() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("sweep.csv");
    let o = losstol(&[
        "sweep",
        "--delta",
        "0",
        "--delta",
        "0.126",
        "--distance",
        "0:100:50",
        "--alpha",
        "0.5",
        "--out",
        path_str(&out),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let golden = include_str!("golden/sweep_fixed_alpha.csv");
    assert_eq!(fs::read_to_string(&out).unwrap(), golden);
}

#[test]
fn sweep_schema_and_rerun_determinism() {
    let dir = TempDir::new().unwrap();
    let cfg = dir.path().join("run.cfg");
    fs::write(
        &cfg,
        "# short grid\ndistance = 0:150:50\ndelta = 0, 0.063, 0.126\n",
    )
    .unwrap();
    let a = dir.path().join("a.csv");
    let b = dir.path().join("b.csv");
    for out in [&a, &b] {
        let o = losstol(&["sweep", "--config", path_str(&cfg), "--out", path_str(out)]);
        assert!(o.status.success());
    }
    let text = fs::read(&a).unwrap();
    assert_eq!(text, fs::read(&b).unwrap());
    let text = String::from_utf8(text).unwrap();
    let mut lines = text.lines();
    assert_eq!(
        lines.next().unwrap(),
        "delta,distance_km,alpha_opt,Q_z,e_z,Q_z1,e_x1,R"
    );
    let rows: Vec<Vec<f64>> = lines
        .map(|l| l.split(',').map(|v| v.parse().unwrap()).collect())
        .collect();
    assert_eq!(rows.len(), 3 * 4);
    assert!(rows.iter().all(|r| r.len() == 8));
    let deltas: Vec<f64> = rows.iter().map(|r| r[0]).collect();
    assert_eq!(&deltas[..4], &[0.0; 4]);
    assert_eq!(&deltas[8..], &[0.126; 4]);
    assert!(rows.iter().all(|r| r[7] > 0.0));
}

#[test]
fn empty_range_writes_header_only() {
    let o = losstol(&["sweep", "--distance", "10:0:5"]);
    assert!(o.status.success());
    assert_eq!(stdout(&o), "delta,distance_km,alpha_opt,Q_z,e_z,Q_z1,e_x1,R\n");
}

#[test]
fn validation_errors_exit_one_and_name_the_field() {
    let dir = TempDir::new().unwrap();
    let cfg = dir.path().join("bad.cfg");
    fs::write(&cfg, "det_eff = 1.5\n").unwrap();
    let o = losstol(&["sweep", "--config", path_str(&cfg)]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("det_eff"));

    let o = losstol(&["sweep", "--distance", "0:10:0"]);
    assert_eq!(o.status.code(), Some(1));

    let o = losstol(&["sweep", "--out", "/nonexistent-dir/x.csv", "--distance", "0"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("/nonexistent-dir/x.csv"));
}

const IDENTITY_TABLE: &str = "label,basis,outcome,probability,prior
0z,X,0,0.083333333333333333,0.16666666666666667
0z,X,1,0.083333333333333333,0.16666666666666667
1z,X,0,0.083333333333333333,0.16666666666666667
1z,X,1,0.083333333333333333,0.16666666666666667
0x,X,0,0.16666666666666667,0.16666666666666667
0x,X,1,0,0.16666666666666667
";

#[test]
fn estimate_identity_channel() {
    let dir = TempDir::new().unwrap();
    let y = dir.path().join("y.csv");
    fs::write(&y, IDENTITY_TABLE).unwrap();
    let o = losstol(&["estimate", path_str(&y)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let rep = stdout(&o);
    assert!(report_value(&rep, "e_x").abs() < 1e-15);
    assert!(report_value(&rep, "condition_number").is_finite());
    assert!(rep.contains("q[X 0]"));
}

#[test]
fn estimate_error_paths() {
    let dir = TempDir::new().unwrap();
    let y = dir.path().join("y.csv");

    // labels must name basis states unless Bloch columns are given
    fs::write(&y, IDENTITY_TABLE.replace("0x,", "plus,")).unwrap();
    let o = losstol(&["estimate", path_str(&y)]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("plus"));

    let header = "label,basis,outcome,probability,prior,px,py,pz\n";
    let rows = [("a", 1.0), ("b", -1.0), ("c", 0.5)];
    let mut text = String::from(header);
    for (l, z) in rows {
        for s in 0..2 {
            text.push_str(&format!("{l},X,{s},0.05,0.16666666666666667,0,0,{z}\n"));
        }
    }
    // all three Bloch vectors on one line through the origin: degenerate
    fs::write(&y, text).unwrap();
    let o = losstol(&["estimate", path_str(&y)]);
    assert_eq!(o.status.code(), Some(2), "{}", String::from_utf8_lossy(&o.stderr));

    let missing: String = IDENTITY_TABLE
        .lines()
        .filter(|l| !l.starts_with("0x,X,1"))
        .map(|l| format!("{l}\n"))
        .collect();
    fs::write(&y, missing).unwrap();
    let o = losstol(&["estimate", path_str(&y)]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("(0x, X, 1)"));

    let silent = IDENTITY_TABLE
        .lines()
        .map(|l| {
            let f: Vec<&str> = l.split(',').collect();
            if f[0] == "label" {
                format!("{l}\n")
            } else {
                format!("{},{},{},0,{}\n", f[0], f[1], f[2], f[4])
            }
        })
        .collect::<String>();
    fs::write(&y, silent).unwrap();
    let o = losstol(&["estimate", path_str(&y)]);
    assert_eq!(o.status.code(), Some(3));
}

#[test]
fn simulate_estimate_round_trip() {
    let dir = TempDir::new().unwrap();
    let counts = dir.path().join("counts.csv");
    let counts2 = dir.path().join("counts2.csv");
    let yields = dir.path().join("yields.csv");
    let args = |out: &Path| {
        vec![
            "simulate".to_string(),
            "--seed".into(),
            "42".into(),
            "--pulses".into(),
            "1000000".into(),
            "--delta".into(),
            "0".into(),
            "--distance".into(),
            "0".into(),
            "--out".into(),
            path_str(out).to_string(),
        ]
    };
    let mut first = args(&counts);
    first.extend(["--yields".to_string(), path_str(&yields).to_string()]);
    let o = losstol(&first.iter().map(String::as_str).collect::<Vec<_>>());
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let rep = stdout(&o);
    assert!(report_value(&rep, "z_score").abs() <= 5.0, "{rep}");

    let o2 = losstol(&args(&counts2).iter().map(String::as_str).collect::<Vec<_>>());
    assert!(o2.status.success());
    assert_eq!(fs::read(&counts).unwrap(), fs::read(&counts2).unwrap());
    let text = fs::read_to_string(&counts).unwrap();
    assert!(text.starts_with("# seed=42\n# n_pulses=1000000\n"));

    let o = losstol(&["estimate", path_str(&yields), "--pulses", "1000000"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let est = stdout(&o);
    assert_eq!(report_value(&est, "e_x"), report_value(&rep, "e_x"));
    assert!((report_value(&est, "std_err") - report_value(&rep, "std_err")).abs() <= 1e-12);
}

#[test]
fn simulate_rejects_zero_pulses() {
    let o = losstol(&["simulate", "--pulses", "0"]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn mdi_estimate_depolarized_middle_node() {
    let dir = TempDir::new().unwrap();
    let y = dir.path().join("mdi.csv");
    let labels = ["0z", "1z", "0x"];
    let gamma = 0.5;
    let mut text = String::from("alice,bob,probability\n");
    for a in labels {
        for b in labels {
            let pref = if a != "0x" && b != "0x" {
                gamma / 9.0
            } else {
                1.0 / 9.0
            };
            text.push_str(&format!("{a},{b},{}\n", pref * 0.25));
        }
    }
    fs::write(&y, text).unwrap();
    let o = losstol(&["mdi-estimate", path_str(&y), "--gamma", "0.5"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let rep = stdout(&o);
    assert!((report_value(&rep, "e_x") - 0.5).abs() < 1e-12);
    assert!((report_value(&rep, "q[Id,Id]") - 0.25).abs() < 1e-12);
}
