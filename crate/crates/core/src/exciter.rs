//! Brushless AC rotating-exciter model (IEEE AC5A signal flow) with a
//! reactive-power droop voltage reference.
//!
//! ```text
//!  Vref ─(+)─(-Vmeas)─(-VF)──► KA/(1+sTA) ──VR──►(+)──► 1/(sTE) ──┬──► Ef
//!                                [VRmin,VRmax]     (-)             │
//!                                                   └─(KE+SE(Ef))·Ef┘
//!  VF = sKF(1+sTF3) / ((1+sTF1)(1+sTF2)) · Ef
//! ```
//!
//! The regulator limit is non-windup. The motor's field voltage is held
//! constant ([`ConstantField`]).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Exponential saturation curve `SE(E) = A·exp(B·E)` through two points.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Saturation {
    pub e1: f64,
    pub se1: f64,
    pub e2: f64,
    pub se2: f64,
}

impl Saturation {
    pub fn eval(&self, e: f64) -> f64 {
        if self.se1 <= 0.0 || self.se2 <= 0.0 || self.e1 == self.e2 {
            return 0.0;
        }
        let b = (self.se2 / self.se1).ln() / (self.e2 - self.e1);
        let a = self.se1 / (b * self.e1).exp();
        a * (b * e).exp()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExciterParams {
    pub k_a: f64,
    pub t_a: f64,
    pub k_e: f64,
    pub t_e: f64,
    pub k_f: f64,
    pub t_f1: f64,
    pub t_f2: f64,
    pub t_f3: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub saturation: Option<Saturation>,
    pub v_rmax: f64,
    pub v_rmin: f64,
    /// No-load voltage reference, p.u.
    pub u0: f64,
    /// Droop, p.u. voltage per p.u. reactive power on the generator rating.
    pub k_u: f64,
}

impl Default for ExciterParams {
    fn default() -> Self {
        ExciterParams {
            k_a: 100.0,
            t_a: 0.02,
            k_e: 1.0,
            t_e: 0.8,
            k_f: 0.03,
            t_f1: 1.0,
            t_f2: 0.0,
            t_f3: 0.0,
            saturation: None,
            v_rmax: 7.3,
            v_rmin: -7.3,
            u0: 1.0,
            k_u: 0.04,
        }
    }
}

impl ExciterParams {
    pub fn validate(&self) -> Result<()> {
        let all = [
            ("k_a", self.k_a),
            ("t_a", self.t_a),
            ("k_e", self.k_e),
            ("t_e", self.t_e),
            ("k_f", self.k_f),
            ("t_f1", self.t_f1),
            ("t_f2", self.t_f2),
            ("t_f3", self.t_f3),
            ("v_rmax", self.v_rmax),
            ("v_rmin", self.v_rmin),
            ("u0", self.u0),
            ("k_u", self.k_u),
        ];
        for (name, v) in all {
            if !v.is_finite() {
                return Err(Error::param(format!("exciter.{name}"), "must be finite"));
            }
        }
        for (name, v) in [("t_a", self.t_a), ("t_e", self.t_e), ("t_f1", self.t_f1), ("k_a", self.k_a)] {
            if v <= 0.0 {
                return Err(Error::param(format!("exciter.{name}"), "must be positive"));
            }
        }
        if self.t_f2 < 0.0 || self.t_f3 < 0.0 {
            return Err(Error::param("exciter.t_f2", "feedback time constants must be non-negative"));
        }
        if self.t_f3 > 0.0 && self.t_f2 == 0.0 {
            return Err(Error::param("exciter.t_f3", "a feedback lead needs t_f2 > 0"));
        }
        if self.v_rmin >= self.v_rmax {
            return Err(Error::param("exciter.v_rmin", "must be below v_rmax"));
        }
        if self.k_u < 0.0 {
            return Err(Error::param("exciter.k_u", "must be non-negative"));
        }
        if self.u0 <= 0.0 {
            return Err(Error::param("exciter.u0", "must be positive"));
        }
        Ok(())
    }

    pub fn saturation_at(&self, e_f: f64) -> f64 {
        self.saturation.map_or(0.0, |s| s.eval(e_f))
    }
}

/// `v_f` is the output of the first rate-feedback stage; `v_ll` is the state
/// of the optional lead-lag stage (inert while `t_f2 = 0`).
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct ExciterState {
    pub v_r: f64,
    pub e_f: f64,
    pub v_f: f64,
    pub v_ll: f64,
}

pub fn droop_reference(u0: f64, k_u: f64, q_g: f64) -> f64 {
    u0 - k_u * q_g
}

fn feedback_output(x: &ExciterState, p: &ExciterParams) -> f64 {
    if p.t_f2 > 0.0 {
        let r = p.t_f3 / p.t_f2;
        r * x.v_f + (1.0 - r) * x.v_ll
    } else {
        x.v_f
    }
}

/// Operating mode of the regulator limiter. Within one integration step
/// the mode is frozen so the right-hand side stays smooth; the integrator
/// splits a step where the mode changes.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub enum LimiterMode {
    #[default]
    Free,
    Upper,
    Lower,
}

/// `K_A·error − V_R`: positive when the regulator is driven upwards.
pub fn regulator_drive(x: &ExciterState, v_meas: f64, v_ref: f64, p: &ExciterParams) -> f64 {
    p.k_a * (v_ref - v_meas - feedback_output(x, p)) - x.v_r
}

/// Mode consistent with a state and its regulator drive.
pub fn limiter_mode(v_r: f64, drive: f64, p: &ExciterParams) -> LimiterMode {
    if v_r >= p.v_rmax && drive > 0.0 {
        LimiterMode::Upper
    } else if v_r <= p.v_rmin && drive < 0.0 {
        LimiterMode::Lower
    } else {
        LimiterMode::Free
    }
}

pub fn exciter_derivatives_in_mode(
    x: &ExciterState,
    v_meas: f64,
    v_ref: f64,
    p: &ExciterParams,
    mode: LimiterMode,
) -> ExciterState {
    let (v_r, d_vr) = match mode {
        LimiterMode::Free => (x.v_r, regulator_drive(x, v_meas, v_ref, p) / p.t_a),
        LimiterMode::Upper => (p.v_rmax, 0.0),
        LimiterMode::Lower => (p.v_rmin, 0.0),
    };
    let d_ef = (v_r - (p.k_e + p.saturation_at(x.e_f)) * x.e_f) / p.t_e;
    let d_vf = (p.k_f * d_ef - x.v_f) / p.t_f1;
    let d_vll = if p.t_f2 > 0.0 { (x.v_f - x.v_ll) / p.t_f2 } else { 0.0 };
    ExciterState {
        v_r: d_vr,
        e_f: d_ef,
        v_f: d_vf,
        v_ll: d_vll,
    }
}

/// Derivatives with the limiter mode inferred from the state.
pub fn exciter_derivatives(x: &ExciterState, v_meas: f64, v_ref: f64, p: &ExciterParams) -> ExciterState {
    let mode = limiter_mode(x.v_r, regulator_drive(x, v_meas, v_ref, p), p);
    let mut d = exciter_derivatives_in_mode(x, v_meas, v_ref, p, mode);
    if mode == LimiterMode::Free && (x.v_r > p.v_rmax || x.v_r < p.v_rmin) {
        // outside the band and pulling back in: the output is still limited
        d.e_f = (x.v_r.clamp(p.v_rmin, p.v_rmax) - (p.k_e + p.saturation_at(x.e_f)) * x.e_f) / p.t_e;
        d.v_f = (p.k_f * d.e_f - x.v_f) / p.t_f1;
    }
    d
}

/// Keeps the regulator state inside its limits after an integration step.
pub fn enforce_limits(x: &mut ExciterState, p: &ExciterParams) {
    x.v_r = x.v_r.clamp(p.v_rmin, p.v_rmax);
}

/// Exciter state holding `e_f` in equilibrium, and the regulator error that
/// this equilibrium requires (`v_r / k_a`).
pub fn equilibrium(e_f: f64, p: &ExciterParams, rfc: &str) -> Result<(ExciterState, f64)> {
    let v_r = (p.k_e + p.saturation_at(e_f)) * e_f;
    if v_r > p.v_rmax || v_r < p.v_rmin {
        return Err(Error::ExciterLimit {
            rfc: rfc.to_string(),
            v_r,
            v_min: p.v_rmin,
            v_max: p.v_rmax,
        });
    }
    Ok((
        ExciterState {
            v_r,
            e_f,
            v_f: 0.0,
            v_ll: 0.0,
        },
        v_r / p.k_a,
    ))
}

/// Field voltage source that never moves (motor side).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConstantField(pub f64);

impl ConstantField {
    pub fn value(&self, _t: f64) -> f64 {
        self.0
    }
}

pub fn constant_field(e_f0: f64) -> ConstantField {
    ConstantField(e_f0)
}
