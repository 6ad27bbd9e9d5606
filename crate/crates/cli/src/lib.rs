//! Batch runner: loads a scenario (file or built-in case), applies
//! overrides, integrates it and writes time series, summary, initial
//! operating point and optional plot script / admittance dumps.

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use log::info;
use rfcsim_core::analysis::{analyze_channel, dip, stability_verdict, AnalysisSettings, OscillationReport};
use rfcsim_core::scenario::{builtin, CaseOptions, EventAction, Scenario};
use rfcsim_core::sim::{admittance_snapshots, run_from, RunOutput};
use rfcsim_core::{init, Error};

pub mod plots;

#[derive(Debug, Parser)]
#[command(name = "rfcsim", version, about = "Rotary frequency converter railway grid simulator")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run a scenario file or a built-in case (case1, case2).
    Run(RunArgs),
}

#[derive(Debug, Clone, Args)]
pub struct RunArgs {
    /// Scenario TOML file, or `case1` / `case2`.
    pub scenario: String,
    #[arg(long)]
    pub dt: Option<f64>,
    #[arg(long = "t-end")]
    pub t_end: Option<f64>,
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
    /// `key=value`; repeatable. Keys: dt, t_end, output_stride, k_u, u0,
    /// exciter.<field>, line_length_km, fault_distance_km, fault_g.
    #[arg(long = "override", value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
    /// Write a gnuplot script laying out the standard figures.
    #[arg(long)]
    pub emit_plots: bool,
    /// Dump the railway admittance matrix before and after every event.
    #[arg(long)]
    pub dump_ybus: bool,
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("configuration: {0}")]
    Config(String),
    #[error("scenario: {0}")]
    Scenario(Error),
    #[error("initialisation failed: {0}")]
    Init(Error),
    #[error("integration aborted: {0}")]
    Aborted(Error),
    #[error("system did not settle after the disturbance")]
    Unstable,
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Io { .. } => 1,
            CliError::Config(_) | CliError::Scenario(_) => 2,
            CliError::Init(_) => 3,
            CliError::Aborted(_) => 4,
            CliError::Unstable => 5,
        }
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |source| CliError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn parse_override(kv: &str) -> Result<(String, f64), CliError> {
    let (k, v) = kv
        .split_once('=')
        .ok_or_else(|| CliError::Config(format!("override `{kv}` is not key=value")))?;
    let v: f64 = v
        .trim()
        .parse()
        .map_err(|_| CliError::Config(format!("override `{kv}`: value is not a number")))?;
    Ok((k.trim().to_string(), v))
}

const CASE_KEYS: [&str; 2] = ["line_length_km", "fault_distance_km"];

/// Resolves a scenario name or path and applies `--dt`, `--t-end` and the
/// `key=value` overrides. Nothing is written.
pub fn load_scenario(args: &RunArgs) -> Result<Scenario, CliError> {
    let mut overrides = args
        .overrides
        .iter()
        .map(|s| parse_override(s))
        .collect::<Result<Vec<_>, _>>()?;
    if let Some(dt) = args.dt {
        overrides.push(("dt".into(), dt));
    }
    if let Some(t) = args.t_end {
        overrides.push(("t_end".into(), t));
    }

    let mut opts = CaseOptions::default();
    let mut rest = Vec::new();
    for (k, v) in overrides {
        match k.as_str() {
            "line_length_km" => opts.section_length_km = Some(v),
            "fault_distance_km" => opts.fault_distance_km = v,
            "fault_g" => {
                opts.fault_g = v;
                rest.push((k, v));
            }
            _ => rest.push((k, v)),
        }
    }

    let mut sc = match builtin(&args.scenario, &opts) {
        Some(r) => r.map_err(CliError::Scenario)?,
        None => {
            if let Some((k, _)) = args
                .overrides
                .iter()
                .filter_map(|s| parse_override(s).ok())
                .find(|(k, _)| CASE_KEYS.contains(&k.as_str()))
            {
                return Err(CliError::Config(format!("`{k}` only applies to the built-in cases")));
            }
            let path = Path::new(&args.scenario);
            let text = fs::read_to_string(path).map_err(io_err(path))?;
            Scenario::from_toml(&text).map_err(CliError::Scenario)?
        }
    };
    for (k, v) in rest {
        apply_override(&mut sc, &k, v)?;
    }
    sc.normalize();
    sc.validate().map_err(CliError::Scenario)?;
    Ok(sc)
}

fn apply_override(sc: &mut Scenario, key: &str, v: f64) -> Result<(), CliError> {
    match key {
        "dt" => sc.simulation.dt = v,
        "t_end" => sc.simulation.t_end = v,
        "output_stride" => {
            if v < 1.0 || v.fract() != 0.0 {
                return Err(CliError::Config("output_stride must be a positive integer".into()));
            }
            sc.simulation.output_stride = v as usize;
        }
        "fault_g" => {
            for e in &mut sc.events {
                if let EventAction::FaultOn { g, .. } = &mut e.action {
                    *g = v;
                }
            }
        }
        "k_u" | "u0" => {
            for r in &mut sc.rfcs {
                let e = &mut r.exciter;
                *if key == "k_u" { &mut e.k_u } else { &mut e.u0 } = v;
            }
        }
        _ => {
            let field = key
                .strip_prefix("exciter.")
                .ok_or_else(|| CliError::Config(format!("unknown override `{key}`")))?;
            for r in &mut sc.rfcs {
                let e = &mut r.exciter;
                let slot = match field {
                    "k_a" => &mut e.k_a,
                    "t_a" => &mut e.t_a,
                    "k_e" => &mut e.k_e,
                    "t_e" => &mut e.t_e,
                    "k_f" => &mut e.k_f,
                    "t_f1" => &mut e.t_f1,
                    "t_f2" => &mut e.t_f2,
                    "t_f3" => &mut e.t_f3,
                    "v_rmax" => &mut e.v_rmax,
                    "v_rmin" => &mut e.v_rmin,
                    "u0" => &mut e.u0,
                    "k_u" => &mut e.k_u,
                    _ => return Err(CliError::Config(format!("unknown exciter field `{field}`"))),
                };
                *slot = v;
            }
        }
    }
    Ok(())
}

/// Time of the last fault clearing, or of the last event when no fault is
/// cleared; analysis windows start from here.
pub fn disturbance_end(sc: &Scenario) -> f64 {
    sc.events
        .iter()
        .rev()
        .find(|e| matches!(e.action, EventAction::FaultOff { .. }))
        .or(sc.events.last())
        .map_or(0.0, |e| e.time)
}

/// First fault window `[on, off]`, if the scenario has one.
pub fn fault_window(sc: &Scenario) -> Option<(f64, f64)> {
    let on = sc
        .events
        .iter()
        .find(|e| matches!(e.action, EventAction::FaultOn { .. }))?
        .time;
    let off = sc
        .events
        .iter()
        .find(|e| e.time > on && matches!(e.action, EventAction::FaultOff { .. }))
        .map_or(sc.simulation.t_end, |e| e.time);
    Some((on, off))
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Summary {
    pub rows: Vec<(String, String)>,
    /// `Some(false)` when a speed channel failed to settle.
    pub stable: Option<bool>,
}

impl Summary {
    fn push(&mut self, metric: impl Into<String>, value: impl ToString) {
        self.rows.push((metric.into(), value.to_string()));
    }

    fn oscillation(&mut self, r: &OscillationReport) {
        let c = &r.channel;
        match r.frequency {
            Some(f) => self.push(format!("{c}.frequency_hz"), format!("{f:.6}")),
            None => self.push(format!("{c}.frequency_hz"), "nan"),
        }
        self.push(format!("{c}.peaks"), r.peak_times.len());
        self.push(format!("{c}.intervals_used"), r.intervals_used);
    }

    pub fn get(&self, metric: &str) -> Option<&str> {
        self.rows.iter().find(|(m, _)| m == metric).map(|(_, v)| v.as_str())
    }
}

pub fn summarize(sc: &Scenario, out: &RunOutput) -> Summary {
    let s = &out.series;
    let mut sum = Summary::default();
    sum.push("scenario", &sc.name);
    sum.push("samples", s.len());
    sum.push("t_end", s.time.last().copied().unwrap_or(0.0));
    sum.push("load_flow_iterations", out.steady.iterations);
    let fold_max = |v: &[f64]| v.iter().copied().fold(0.0, f64::max);
    sum.push("max_solve_residual", format!("{:e}", fold_max(&s.solve_residual)));
    sum.push("max_power_mismatch", format!("{:e}", fold_max(&s.power_mismatch)));
    sum.push("aborted", out.abort.is_some());

    let settings = AnalysisSettings::default();
    let t_clear = disturbance_end(sc);
    let mut verdicts = Vec::new();
    let fw = fault_window(sc);
    for ch in &s.rfcs {
        let n = &ch.name;
        if let Some((on, off)) = fw {
            if let Some((u, t)) = dip(&s.time, &ch.u_g, on, off) {
                sum.push(format!("{n}.u_g_dip"), format!("{u:.6}"));
                sum.push(format!("{n}.u_g_dip_time"), format!("{t:.4}"));
            }
        }
        let min_w = ch.omega_pu.iter().copied().fold(f64::INFINITY, f64::min);
        sum.push(format!("{n}.omega_min"), format!("{min_w:.8}"));
        let neg_pm: Vec<f64> = ch.p_m.iter().map(|v| -v).collect();
        for (name, x) in [
            (format!("{n}.omega_pu"), &ch.omega_pu),
            (format!("{n}.p_m_in"), &neg_pm),
            (format!("{n}.q_g"), &ch.q_g),
        ] {
            sum.oscillation(&analyze_channel(&name, &s.time, x, t_clear, &settings));
        }
        let v = stability_verdict(&s.time, &ch.omega_pu, t_clear);
        verdicts.push(v);
        sum.push(
            format!("{n}.settled"),
            v.map_or("undetermined".to_string(), |b| b.to_string()),
        );
    }
    for r in 1..s.rfcs.len() {
        let label = format!("{}-{}", s.rfcs[0].name, s.rfcs[r].name);
        let dw = s.relative_speed(0, r);
        sum.oscillation(&analyze_channel(&format!("domega.{label}"), &s.time, &dw, t_clear, &settings));
        let dp: Vec<f64> = s.rfcs[0].p_g.iter().zip(&s.rfcs[r].p_g).map(|(a, b)| a - b).collect();
        sum.oscillation(&analyze_channel(&format!("dp_g.{label}"), &s.time, &dp, t_clear, &settings));
        verdicts.push(stability_verdict(&s.time, &dw, t_clear));
    }
    sum.stable = if verdicts.contains(&Some(false)) {
        Some(false)
    } else if verdicts.iter().all(|v| v.is_some()) {
        Some(true)
    } else {
        None
    };
    sum.push(
        "stable",
        sum.stable.map_or("undetermined".to_string(), |b| b.to_string()),
    );
    sum
}

fn write_timeseries(path: &Path, out: &RunOutput) -> Result<(), CliError> {
    let cols = out.series.columns();
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_err(path, e))?;
    w.write_record(cols.iter().map(|(n, _)| n.as_str()))
        .map_err(|e| csv_err(path, e))?;
    for i in 0..out.series.len() {
        w.write_record(cols.iter().map(|(_, v)| format!("{:.12e}", v[i])))
            .map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(io_err(path))
}

fn write_summary(path: &Path, summary: &Summary) -> Result<(), CliError> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_err(path, e))?;
    w.write_record(["metric", "value"]).map_err(|e| csv_err(path, e))?;
    for (m, v) in &summary.rows {
        w.write_record([m, v]).map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(io_err(path))
}

fn csv_err(path: &Path, e: csv::Error) -> CliError {
    CliError::Io {
        path: path.to_path_buf(),
        source: e.into(),
    }
}

/// Loads, runs, analyses and writes every output. Returns the summary on
/// a stable (or undetermined) completion.
pub fn execute(args: &RunArgs) -> Result<Summary, CliError> {
    let sc = load_scenario(args)?;
    let steady = init::initialize(&sc).map_err(|e| match e {
        Error::InvalidParameter { .. } | Error::UnknownBus(_) | Error::EmptyGrid | Error::Scenario(_) => {
            CliError::Scenario(e)
        }
        e => CliError::Init(e),
    })?;

    let dir = &args.out;
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let report = dir.join("init_report.txt");
    fs::write(&report, steady.report()).map_err(io_err(&report))?;
    if args.dump_ybus {
        for (label, y) in admittance_snapshots(&sc).map_err(CliError::Scenario)? {
            let p = dir.join(format!("ybus_{label}.csv"));
            fs::write(&p, y.to_csv()).map_err(io_err(&p))?;
        }
    }

    info!("integrating {} to {} s", sc.name, sc.simulation.t_end);
    let out = run_from(&sc, steady).map_err(CliError::Init)?;
    write_timeseries(&dir.join("timeseries.csv"), &out)?;
    let summary = summarize(&sc, &out);
    write_summary(&dir.join("summary.csv"), &summary)?;
    if args.emit_plots {
        let p = dir.join("plots.gp");
        fs::write(&p, plots::gnuplot_script(&out.series, fault_window(&sc))).map_err(io_err(&p))?;
    }

    if let Some(e) = out.abort {
        return Err(CliError::Aborted(e));
    }
    if summary.stable == Some(false) {
        return Err(CliError::Unstable);
    }
    Ok(summary)
}
