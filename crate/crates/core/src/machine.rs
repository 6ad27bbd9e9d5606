//! Per-unit dynamic model of one rotary frequency converter (RFC).
//!
//! An RFC is a three-phase synchronous motor and a single-phase synchronous
//! generator on one stiff shaft. The pair shares a single swing equation;
//! each machine carries its own salient-pole sub-transient model in which the
//! d-axis transient emf is identically zero (`X'q = Xq`), leaving three
//! electrical states per machine:
//!
//! ```text
//! Tdo'  dEq'/dt  = Ef - Eq'  + Id (Xd  - Xd')
//! Tdo'' dEq''/dt = Eq' - Eq'' + Id (Xd' - Xd'')
//! Tqo'' dEd''/dt = -Ed''      - Iq (Xq  - Xq'')
//! ```
//!
//! Together with rotor angle and speed this gives 5 + 5 - 2 = 8 states per RFC.
//! All powers are *generated* powers: the motor's power is negative while it
//! draws energy from the public grid.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exciter::{ExciterParams, ExciterState};

/// Number of integrated states per RFC (8 electromechanical + 4 exciter).
pub const STATE_LEN: usize = 12;

/// Public grid frequency the motors are synchronised to, Hz.
pub const PUBLIC_GRID_HZ: f64 = 50.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MachineRole {
    Motor,
    Generator,
}

/// Salient-pole machine data. Reactances are per unit on `s_rated` until
/// [`MachineParams::to_system_base`] is applied.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MachineParams {
    pub role: MachineRole,
    pub xd: f64,
    pub xq: f64,
    pub xd_t: f64,
    pub xd_st: f64,
    pub xq_st: f64,
    pub tdo_t: f64,
    pub tdo_st: f64,
    pub tqo_st: f64,
    /// Machine rating, MVA.
    pub s_rated: f64,
    /// Leakage reactance of the unit transformer, p.u. on `s_rated`.
    #[serde(default)]
    pub x_t: f64,
    pub poles: u32,
}

impl MachineParams {
    pub fn validate(&self) -> Result<()> {
        let who = match self.role {
            MachineRole::Motor => "motor",
            MachineRole::Generator => "generator",
        };
        let field = |f: &str| format!("{who}.{f}");
        let finite = [
            ("xd", self.xd),
            ("xq", self.xq),
            ("xd_t", self.xd_t),
            ("xd_st", self.xd_st),
            ("xq_st", self.xq_st),
            ("tdo_t", self.tdo_t),
            ("tdo_st", self.tdo_st),
            ("tqo_st", self.tqo_st),
            ("s_rated", self.s_rated),
            ("x_t", self.x_t),
        ];
        for (name, v) in finite {
            if !v.is_finite() {
                return Err(Error::param(field(name), "must be finite"));
            }
        }
        if self.xd_st <= 0.0 || self.xq_st <= 0.0 {
            return Err(Error::param(field("xd_st"), "sub-transient reactances must be positive"));
        }
        if !(self.xd >= self.xd_t && self.xd_t >= self.xd_st) {
            return Err(Error::param(field("xd"), "requires xd >= xd_t >= xd_st"));
        }
        if self.xq < self.xq_st {
            return Err(Error::param(field("xq"), "requires xq >= xq_st"));
        }
        for (name, t) in [("tdo_t", self.tdo_t), ("tdo_st", self.tdo_st), ("tqo_st", self.tqo_st)] {
            if t <= 0.0 {
                return Err(Error::param(field(name), "time constants must be positive"));
            }
        }
        if self.s_rated <= 0.0 {
            return Err(Error::param(field("s_rated"), "must be positive"));
        }
        if self.x_t < 0.0 {
            return Err(Error::param(field("x_t"), "must be non-negative"));
        }
        if self.poles == 0 || !self.poles.is_multiple_of(2) {
            return Err(Error::param(field("poles"), "must be an even positive integer"));
        }
        Ok(())
    }

    /// Rescales every reactance (including `x_t`) from the machine rating to
    /// the system base `s_base`. Time constants and poles are untouched.
    pub fn to_system_base(&self, s_base: f64) -> Result<MachineParams> {
        if !(s_base > 0.0) {
            return Err(Error::param("s_base", "must be positive"));
        }
        if !(self.s_rated > 0.0) {
            return Err(Error::param("s_rated", "must be positive"));
        }
        let k = s_base / self.s_rated;
        Ok(MachineParams {
            xd: self.xd * k,
            xq: self.xq * k,
            xd_t: self.xd_t * k,
            xd_st: self.xd_st * k,
            xq_st: self.xq_st * k,
            x_t: self.x_t * k,
            ..self.clone()
        })
    }

    /// Folds the transformer leakage reactance into all five machine
    /// reactances and zeroes `x_t`; the machine terminal becomes the bus on
    /// the far side of the transformer.
    pub fn merge_transformer(&self) -> MachineParams {
        let xt = self.x_t;
        MachineParams {
            xd: self.xd + xt,
            xq: self.xq + xt,
            xd_t: self.xd_t + xt,
            xd_st: self.xd_st + xt,
            xq_st: self.xq_st + xt,
            x_t: 0.0,
            ..self.clone()
        }
    }

    /// Sets `xq_st := xd_st` so the machine is a single linear shunt seen from
    /// the network.
    pub fn equalize_subtransient(&self) -> MachineParams {
        MachineParams {
            xq_st: self.xd_st,
            ..self.clone()
        }
    }

    /// Nameplate data to the effective parameters used by the dynamic model.
    pub fn effective(&self, s_base: f64) -> Result<MachineParams> {
        self.validate()?;
        Ok(self
            .to_system_base(s_base)?
            .merge_transformer()
            .equalize_subtransient())
    }

    pub fn pole_pairs(&self) -> f64 {
        f64::from(self.poles / 2)
    }
}

/// Motor and generator on one shaft, as described in a scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RfcUnit {
    pub name: String,
    /// Railway-grid bus the generator (after its step-up transformer) feeds.
    pub gen_bus: String,
    /// Inertia constants, MW·s/MVA on the respective machine rating.
    pub h_m: f64,
    pub h_g: f64,
    pub motor: MachineParams,
    pub generator: MachineParams,
    #[serde(default)]
    pub exciter: ExciterParams,
}

impl RfcUnit {
    pub fn validate(&self) -> Result<()> {
        if self.motor.role != MachineRole::Motor {
            return Err(Error::param(format!("{}.motor.role", self.name), "must be `motor`"));
        }
        if self.generator.role != MachineRole::Generator {
            return Err(Error::param(
                format!("{}.generator.role", self.name),
                "must be `generator`",
            ));
        }
        self.motor.validate()?;
        self.generator.validate()?;
        if self.generator.poles * 3 != self.motor.poles {
            return Err(Error::param(
                format!("{}.generator.poles", self.name),
                "generator must have one third of the motor's poles",
            ));
        }
        if !(self.h_m >= 0.0 && self.h_g >= 0.0) || self.h_m + self.h_g <= 0.0 {
            return Err(Error::param(format!("{}.h_m", self.name), "inertia must be positive"));
        }
        self.exciter.validate()
    }

    /// Combined shaft inertia on the system base.
    pub fn h_mg(&self, s_base: f64) -> f64 {
        (self.h_m * self.motor.s_rated + self.h_g * self.generator.s_rated) / s_base
    }

    /// Mechanical synchronous speed, rad/s.
    pub fn omega_sm(&self) -> f64 {
        2.0 * std::f64::consts::PI * PUBLIC_GRID_HZ / self.motor.pole_pairs()
    }
}

/// An [`RfcUnit`] reduced to what the derivative evaluation needs.
#[derive(Debug, Clone, PartialEq)]
pub struct RfcModel {
    pub name: String,
    pub motor: MachineParams,
    pub generator: MachineParams,
    pub h_mg: f64,
    pub omega_sm: f64,
    /// Generator rating over system base; converts system-base reactive
    /// power into the generator's own rating for droop.
    pub gen_rating_ratio: f64,
    pub exciter: ExciterParams,
}

impl RfcModel {
    pub fn prepare(unit: &RfcUnit, s_base: f64) -> Result<RfcModel> {
        unit.validate()?;
        let h_mg = unit.h_mg(s_base);
        if !(h_mg > 0.0) {
            return Err(Error::param(format!("{}.h_mg", unit.name), "must be positive"));
        }
        Ok(RfcModel {
            name: unit.name.clone(),
            motor: unit.motor.effective(s_base)?,
            generator: unit.generator.effective(s_base)?,
            h_mg,
            omega_sm: unit.omega_sm(),
            gen_rating_ratio: s_base / unit.generator.s_rated,
            exciter: unit.exciter.clone(),
        })
    }
}

/// Transient and sub-transient emfs of one machine.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct EmfState {
    pub eq_t: f64,
    pub eq_st: f64,
    pub ed_st: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RfcState {
    /// Rotor angle against the synchronously rotating frame, mechanical rad.
    pub delta_m: f64,
    /// Shaft speed in p.u. of the mechanical synchronous speed.
    pub omega_pu: f64,
    pub motor: EmfState,
    pub generator: EmfState,
    pub exciter: ExciterState,
}

impl RfcState {
    pub fn write_to(&self, out: &mut [f64]) {
        out[..STATE_LEN].copy_from_slice(&[
            self.delta_m,
            self.omega_pu,
            self.motor.eq_t,
            self.motor.eq_st,
            self.motor.ed_st,
            self.generator.eq_t,
            self.generator.eq_st,
            self.generator.ed_st,
            self.exciter.v_r,
            self.exciter.e_f,
            self.exciter.v_f,
            self.exciter.v_ll,
        ]);
    }

    pub fn read_from(x: &[f64]) -> RfcState {
        RfcState {
            delta_m: x[0],
            omega_pu: x[1],
            motor: EmfState {
                eq_t: x[2],
                eq_st: x[3],
                ed_st: x[4],
            },
            generator: EmfState {
                eq_t: x[5],
                eq_st: x[6],
                ed_st: x[7],
            },
            exciter: ExciterState {
                v_r: x[8],
                e_f: x[9],
                v_f: x[10],
                v_ll: x[11],
            },
        }
    }
}

/// Shaft equations: returns `(d delta_m/dt, d omega_pu/dt)`.
///
/// `p_m` and `p_g` are the air-gap powers generated by motor and generator.
pub fn swing_derivatives(state: &RfcState, p_m: f64, p_g: f64, model: &RfcModel) -> Result<(f64, f64)> {
    let w = state.omega_pu;
    if !(w > 0.0) {
        return Err(Error::SpeedCollapse {
            rfc: model.name.clone(),
            time: f64::NAN,
            omega_pu: w,
        });
    }
    let d_delta = (w - 1.0) * model.omega_sm;
    let d_omega = (-p_m - p_g) / (2.0 * model.h_mg * w);
    Ok((d_delta, d_omega))
}

/// Right-hand side of the three emf equations of one machine.
pub fn electrical_derivatives(emf: &EmfState, i_d: f64, i_q: f64, e_f: f64, p: &MachineParams) -> EmfState {
    EmfState {
        eq_t: (e_f - emf.eq_t + i_d * (p.xd - p.xd_t)) / p.tdo_t,
        eq_st: (emf.eq_t - emf.eq_st + i_d * (p.xd_t - p.xd_st)) / p.tdo_st,
        ed_st: (-emf.ed_st - i_q * (p.xq - p.xq_st)) / p.tqo_st,
    }
}

pub fn airgap_power(ed_st: f64, eq_st: f64, i_d: f64, i_q: f64, p: &MachineParams) -> f64 {
    ed_st * i_d + eq_st * i_q + (p.xd_st - p.xq_st) * i_d * i_q
}

/// Q48/Q49 motor data on its own 10.7 MVA rating.
pub fn q48_motor() -> MachineParams {
    MachineParams {
        role: MachineRole::Motor,
        xq: 0.49,
        xd: 1.02,
        xd_t: 0.3,
        xq_st: 0.3,
        xd_st: 0.21,
        tdo_t: 3.6,
        tdo_st: 0.04,
        tqo_st: 0.09,
        s_rated: 10.7,
        x_t: 0.079,
        poles: 12,
    }
}

/// Q49 single-phase generator data on its own 10 MVA rating.
pub fn q49_generator() -> MachineParams {
    MachineParams {
        role: MachineRole::Generator,
        xq: 0.53,
        xd: 1.39,
        xd_t: 0.16,
        xq_st: 0.10,
        xd_st: 0.12,
        tdo_t: 11.2,
        tdo_st: 0.07,
        tqo_st: 4.0,
        s_rated: 10.0,
        x_t: 0.042,
        poles: 4,
    }
}

/// A complete Q48/Q49 converter attached to `gen_bus`.
pub fn q48_q49_unit(name: &str, gen_bus: &str) -> RfcUnit {
    RfcUnit {
        name: name.to_string(),
        gen_bus: gen_bus.to_string(),
        h_m: 1.06,
        h_g: 1.14,
        motor: q48_motor(),
        generator: q49_generator(),
        exciter: ExciterParams::default(),
    }
}
