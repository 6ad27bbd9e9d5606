use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use rfcsim_core::scenario::{case1, CaseOptions, EventAction};

fn rfcsim(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_rfcsim"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn summary(dir: &Path) -> Vec<(String, String)> {
    let mut r = csv::Reader::from_path(dir.join("summary.csv")).unwrap();
    r.records()
        .map(|rec| {
            let rec = rec.unwrap();
            (rec[0].to_string(), rec[1].to_string())
        })
        .collect()
}

fn metric(rows: &[(String, String)], name: &str) -> String {
    rows.iter().find(|(m, _)| m == name).unwrap_or_else(|| panic!("{name} missing")).1.clone()
}

#[test]
fn case1_default_run_writes_every_output() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("c1");
    let o = rfcsim(&["run", "case1", "--out", out.to_str().unwrap(), "--emit-plots", "--dump-ybus"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));

    for f in ["timeseries.csv", "summary.csv", "init_report.txt", "plots.gp", "ybus_initial.csv"] {
        assert!(out.join(f).exists(), "{f}");
    }
    let rows = summary(&out);
    let f: f64 = metric(&rows, "RFC1.omega_pu.frequency_hz").parse().unwrap();
    assert!(f > 1.0 && f < 3.0);
    assert_eq!(metric(&rows, "stable"), "true");
    assert!(metric(&rows, "RFC1.u_g_dip").parse::<f64>().unwrap() < 0.5);

    let mut r = csv::Reader::from_path(out.join("timeseries.csv")).unwrap();
    let header: Vec<String> = r.headers().unwrap().iter().map(String::from).collect();
    assert_eq!(header[0], "time");
    for c in ["RFC1.u_g", "RFC1.p_g", "RFC1.p_m_in", "RFC1.omega_pu", "RFC1.delta_m", "RFC1.domega", "RFC1.q_g"] {
        assert!(header.iter().any(|h| h == c), "{c}");
    }
    assert_eq!(r.records().count(), 20_001);
    let report = fs::read_to_string(out.join("init_report.txt")).unwrap();
    assert!(report.contains("load flow"));
}

#[test]
fn outputs_are_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let run = |name: &str| {
        let out = dir.path().join(name);
        let o = rfcsim(&["run", "case2", "--t-end", "3", "--out", out.to_str().unwrap()]);
        // a 3 s record is too short for a settling verdict
        assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
        (
            fs::read(out.join("timeseries.csv")).unwrap(),
            fs::read(out.join("summary.csv")).unwrap(),
        )
    };
    let a = run("a");
    let b = run("b");
    assert!(a == b);
    let rows = summary(&dir.path().join("a"));
    assert_eq!(metric(&rows, "stable"), "undetermined");
    assert!(rows.iter().any(|(m, _)| m == "domega.RFC1-RFC2.frequency_hz"));
}

#[test]
fn malformed_scenario_is_a_schema_error_without_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.toml");
    fs::write(&bad, "name = \"x\"\n[grid]\nbuses = 3\n").unwrap();
    let out = dir.path().join("out");
    let o = rfcsim(&["run", bad.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("line"));
    assert!(!out.exists());
}

#[test]
fn zero_step_is_rejected_before_running() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let o = rfcsim(&["run", "case1", "--dt", "0", "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(!out.exists());
}

#[test]
fn scenario_file_round_trips_through_the_cli() {
    let dir = tempfile::tempdir().unwrap();
    let mut sc = case1(&CaseOptions::default()).unwrap();
    sc.simulation.t_end = 2.5;
    let path = dir.path().join("case.toml");
    fs::write(&path, sc.to_toml().unwrap()).unwrap();
    let out = dir.path().join("out");
    let o = rfcsim(&["run", path.to_str().unwrap(), "--out", out.to_str().unwrap(), "--override", "k_u=0.05"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let o = rfcsim(&["run", path.to_str().unwrap(), "--override", "line_length_km=20"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn unreachable_operating_point_is_an_init_failure() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    // a field ceiling below the no-load field voltage
    let o = rfcsim(&[
        "run",
        "case1",
        "--override",
        "exciter.v_rmax=0.5",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(3), "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn speed_collapse_aborts_with_partial_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let mut sc = case1(&CaseOptions::default()).unwrap();
    // a heavy resistive fault at the generator terminal held for seconds
    // drags the shaft to a stop
    for e in &mut sc.events {
        match &mut e.action {
            EventAction::FaultOn { bus, g, .. } => {
                *bus = "RFC1".into();
                *g = 4.0;
            }
            EventAction::FaultOff { bus } => {
                *bus = Some("RFC1".into());
                e.time = 6.0;
            }
            _ => {}
        }
    }
    sc.simulation.t_end = 8.0;
    let path = dir.path().join("collapse.toml");
    fs::write(&path, sc.to_toml().unwrap()).unwrap();
    let out = dir.path().join("out");
    let o = rfcsim(&["run", path.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(4), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(String::from_utf8_lossy(&o.stderr).contains("collapsed"));
    let rows = csv::Reader::from_path(out.join("timeseries.csv")).unwrap().records().count();
    assert!(rows > 1800 && rows < 8001, "{rows}");
    assert_eq!(metric(&summary(&out), "aborted"), "true");
}
