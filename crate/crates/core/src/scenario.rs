//! Study description: grid, converters, event schedule and integration
//! settings, plus the two built-in catenary cases.
//!
//! Scenario files are TOML:
//!
//! ```toml
//! name = "case1"
//!
//! [simulation]
//! t_end = 20.0
//! dt = 0.001
//! output_stride = 1
//!
//! [grid]
//! buses = ["RFC1", "F", "END"]
//! [grid.base]
//! s_mva = 10.0
//! u_kv = 16.5
//! [[grid.branches]]
//! from = "RFC1"
//! to = "F"
//! r_ohm_per_km = 0.2
//! x_ohm_per_km = 0.2
//! length_km = 10.0
//!
//! [[rfc]]
//! name = "RFC1"
//! gen_bus = "RFC1"
//! h_m = 1.06
//! h_g = 1.14
//! [rfc.motor]      # role, xd, xq, xd_t, xd_st, xq_st, tdo_t, tdo_st, tqo_st, s_rated, x_t, poles
//! [rfc.generator]
//! [rfc.exciter]    # optional, every key defaults
//!
//! [[events]]
//! time = 1.8
//! action = "fault_on"
//! bus = "F"
//! ```

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::machine::{q48_q49_unit, RfcUnit};
use crate::network::{Branch, GridBase, RailGrid};

/// Admittance of a bolted fault, p.u.
pub const BOLTED_FAULT_G: f64 = 1e6;

fn default_fault_g() -> f64 {
    BOLTED_FAULT_G
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "action", rename_all = "snake_case")]
pub enum EventAction {
    FaultOn {
        bus: String,
        #[serde(default = "default_fault_g")]
        g: f64,
        #[serde(default)]
        b: f64,
    },
    /// Clears the fault on `bus`, or all faults when no bus is given.
    FaultOff {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        bus: Option<String>,
    },
    LoadOn {
        bus: String,
        g: f64,
        #[serde(default)]
        b: f64,
    },
    LoadOff {
        bus: String,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Event {
    pub time: f64,
    #[serde(flatten)]
    pub action: EventAction,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimulationSettings {
    pub t_end: f64,
    pub dt: f64,
    pub output_stride: usize,
}

impl Default for SimulationSettings {
    fn default() -> Self {
        SimulationSettings {
            t_end: 20.0,
            dt: 1e-3,
            output_stride: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub name: String,
    #[serde(default)]
    pub simulation: SimulationSettings,
    pub grid: RailGrid,
    #[serde(rename = "rfc")]
    pub rfcs: Vec<RfcUnit>,
    #[serde(default)]
    pub events: Vec<Event>,
}

impl Scenario {
    pub fn from_toml(text: &str) -> Result<Scenario> {
        let mut s: Scenario = toml::from_str(text).map_err(|e| Error::Scenario(e.to_string()))?;
        s.normalize();
        s.validate()?;
        Ok(s)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| Error::Scenario(e.to_string()))
    }

    /// Orders the event schedule by time (stable for equal times).
    pub fn normalize(&mut self) {
        self.events.sort_by(|a, b| a.time.total_cmp(&b.time));
    }

    pub fn validate(&self) -> Result<()> {
        let sim = &self.simulation;
        if !(sim.dt > 0.0 && sim.dt.is_finite()) {
            return Err(Error::param("simulation.dt", "must be positive"));
        }
        if !(sim.t_end > 0.0 && sim.t_end.is_finite()) {
            return Err(Error::param("simulation.t_end", "must be positive"));
        }
        if sim.dt > sim.t_end {
            return Err(Error::param("simulation.dt", "must not exceed t_end"));
        }
        if sim.output_stride == 0 {
            return Err(Error::param("simulation.output_stride", "must be at least 1"));
        }
        self.grid.validate()?;
        if self.rfcs.is_empty() {
            return Err(Error::param("rfc", "at least one converter is required"));
        }
        for (i, r) in self.rfcs.iter().enumerate() {
            if self.rfcs[..i].iter().any(|o| o.name == r.name) {
                return Err(Error::param("rfc.name", format!("duplicate converter `{}`", r.name)));
            }
            self.grid.bus_index(&r.gen_bus)?;
            r.validate()?;
        }
        for w in self.events.windows(2) {
            if w[1].time < w[0].time {
                return Err(Error::param("events", "events must be sorted by time"));
            }
        }
        for e in &self.events {
            if !(e.time >= 0.0 && e.time <= sim.t_end) {
                return Err(Error::param("events.time", format!("{} s is outside [0, t_end]", e.time)));
            }
            match &e.action {
                EventAction::FaultOn { bus, g, b } | EventAction::LoadOn { bus, g, b } => {
                    self.grid.bus_index(bus)?;
                    if !(g.is_finite() && b.is_finite()) {
                        return Err(Error::param("events", "shunt admittance must be finite"));
                    }
                }
                EventAction::FaultOff { bus: Some(bus) } | EventAction::LoadOff { bus } => {
                    self.grid.bus_index(bus)?;
                }
                EventAction::FaultOff { bus: None } => {}
            }
        }
        Ok(())
    }
}

/// Knobs of the built-in cases that the published data leaves open.
#[derive(Debug, Clone, PartialEq)]
pub struct CaseOptions {
    /// Total catenary length, km. Defaults to 30 km for case 1 and 100 km
    /// between the two stations for case 2.
    pub section_length_km: Option<f64>,
    pub fault_distance_km: f64,
    pub fault_g: f64,
    pub fault_on: f64,
    pub fault_duration: f64,
}

impl Default for CaseOptions {
    fn default() -> Self {
        CaseOptions {
            section_length_km: None,
            fault_distance_km: 10.0,
            fault_g: BOLTED_FAULT_G,
            fault_on: 1.8,
            fault_duration: 0.2,
        }
    }
}

pub const CASE1_SECTION_KM: f64 = 30.0;
pub const CASE2_SECTION_KM: f64 = 100.0;

fn catenary(from: &str, to: &str, km: f64) -> Branch {
    Branch {
        from: from.into(),
        to: to.into(),
        r_ohm_per_km: 0.2,
        x_ohm_per_km: 0.2,
        length_km: km,
    }
}

fn fault_events(o: &CaseOptions) -> Vec<Event> {
    vec![
        Event {
            time: o.fault_on,
            action: EventAction::FaultOn {
                bus: "F".into(),
                g: o.fault_g,
                b: 0.0,
            },
        },
        Event {
            time: o.fault_on + o.fault_duration,
            action: EventAction::FaultOff { bus: Some("F".into()) },
        },
    ]
}

fn check_fault_position(o: &CaseOptions, length: f64) -> Result<()> {
    if !(o.fault_distance_km > 0.0 && o.fault_distance_km < length) {
        return Err(Error::param(
            "fault_distance_km",
            format!("fault must lie strictly inside the {length} km section"),
        ));
    }
    Ok(())
}

/// One Q48/Q49 converter feeding a catenary section from one end, no-load,
/// bolted fault 10 km out at 1.8 s cleared after 200 ms.
pub fn case1(o: &CaseOptions) -> Result<Scenario> {
    let length = o.section_length_km.unwrap_or(CASE1_SECTION_KM);
    check_fault_position(o, length)?;
    let s = Scenario {
        name: "case1".into(),
        simulation: SimulationSettings::default(),
        grid: RailGrid {
            base: GridBase { s_mva: 10.0, u_kv: 16.5 },
            buses: vec!["RFC1".into(), "F".into(), "END".into()],
            branches: vec![
                catenary("RFC1", "F", o.fault_distance_km),
                catenary("F", "END", length - o.fault_distance_km),
            ],
            loads: vec![],
        },
        rfcs: vec![q48_q49_unit("RFC1", "RFC1")],
        events: fault_events(o),
    };
    s.validate()?;
    Ok(s)
}

/// Two Q48/Q49 converters feeding the section from both ends.
pub fn case2(o: &CaseOptions) -> Result<Scenario> {
    let length = o.section_length_km.unwrap_or(CASE2_SECTION_KM);
    check_fault_position(o, length)?;
    let s = Scenario {
        name: "case2".into(),
        simulation: SimulationSettings::default(),
        grid: RailGrid {
            base: GridBase { s_mva: 10.0, u_kv: 16.5 },
            buses: vec!["RFC1".into(), "F".into(), "RFC2".into()],
            branches: vec![
                catenary("RFC1", "F", o.fault_distance_km),
                catenary("F", "RFC2", length - o.fault_distance_km),
            ],
            loads: vec![],
        },
        rfcs: vec![q48_q49_unit("RFC1", "RFC1"), q48_q49_unit("RFC2", "RFC2")],
        events: fault_events(o),
    };
    s.validate()?;
    Ok(s)
}

pub fn builtin(name: &str, o: &CaseOptions) -> Option<Result<Scenario>> {
    match name {
        "case1" => Some(case1(o)),
        "case2" => Some(case2(o)),
        _ => None,
    }
}
