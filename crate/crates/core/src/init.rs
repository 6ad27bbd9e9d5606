//! Pre-disturbance operating point.
//!
//! A small Newton load flow on the railway side fixes every generator bus
//! voltage from two conditions per converter: the reactive droop
//! `|U| = U0 - KU·Q` and the angle chain through the shaft,
//! `θg = θ50/3 - ψ`, where `ψ` is the motor load angle (seen at 16⅔ Hz)
//! plus the generator load angle. The motors hold `Q = 0` against a 1 p.u.
//! infinite bus at angle zero and cover the generator's active power
//! losslessly. Machine emfs, field voltages and exciter states are then
//! back-solved so every derivative vanishes.

use std::f64::consts::PI;
use std::fmt::Write as _;

use log::info;
use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::exciter::{droop_reference, equilibrium};
use crate::machine::{EmfState, MachineParams, RfcModel, RfcState};
use crate::network::{assemble_ybus, augment, rotor_transform, Frame, Phasor2};
use crate::scenario::Scenario;

/// Public grid frequency over railway frequency.
pub const FREQUENCY_RATIO: f64 = 3.0;

pub const LOAD_FLOW_MAX_ITER: usize = 50;
pub const LOAD_FLOW_TOL: f64 = 1e-10;

const J: Complex64 = Complex64 { re: 0.0, im: 1.0 };

/// Load angle of a lossless salient-pole machine, `atan(Xq·P / (U² + Xq·Q))`,
/// with P and Q generated.
pub fn load_angle(xq: f64, p: f64, q: f64, u_mag: f64) -> f64 {
    (xq * p).atan2(u_mag * u_mag + xq * q)
}

/// Terminal conditions of one machine, powers generated.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OperatingPoint {
    pub xq: f64,
    pub p: f64,
    pub q: f64,
    pub u: f64,
}

/// Angle drop from the motor's public-grid terminal to the generator's
/// railway terminal, in 16⅔ Hz radians.
pub fn phase_shift(motor: &OperatingPoint, generator: &OperatingPoint) -> f64 {
    load_angle(motor.xq, -motor.p, -motor.q, motor.u) / FREQUENCY_RATIO
        + load_angle(generator.xq, generator.p, generator.q, generator.u)
}

fn wrap_angle(a: f64) -> f64 {
    let mut x = (a + PI) % (2.0 * PI);
    if x < 0.0 {
        x += 2.0 * PI;
    }
    x - PI
}

#[derive(Debug, Clone, PartialEq)]
pub struct RfcSteadyState {
    pub name: String,
    pub state: RfcState,
    /// Constant motor field voltage.
    pub motor_field: f64,
    /// Offset added to the droop reference so the regulator sits in
    /// equilibrium at this operating point.
    pub vref_bias: f64,
    pub p_g: f64,
    pub q_g: f64,
    pub p_m: f64,
    pub q_m: f64,
    pub u_g: Complex64,
    pub load_angle_g: f64,
    /// Motor load angle in 50 Hz electrical radians (negative when motoring).
    pub load_angle_m: f64,
    pub psi: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SteadyState {
    pub rfcs: Vec<RfcSteadyState>,
    pub bus_names: Vec<String>,
    pub bus_voltages: Vec<Complex64>,
    pub iterations: usize,
    pub residual: f64,
}

impl SteadyState {
    pub fn states(&self) -> Vec<RfcState> {
        self.rfcs.iter().map(|r| r.state).collect()
    }

    pub fn report(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(
            s,
            "load flow: {} iterations, max residual {:.3e}",
            self.iterations, self.residual
        );
        let _ = writeln!(s, "\nbus voltages (p.u., deg):");
        for (name, u) in self.bus_names.iter().zip(&self.bus_voltages) {
            let _ = writeln!(s, "  {name:<10} {:>10.6} {:>11.5}", u.norm(), u.arg().to_degrees());
        }
        for r in &self.rfcs {
            let _ = writeln!(s, "\n{}:", r.name);
            let _ = writeln!(s, "  generator  P = {:>10.6}  Q = {:>10.6}  |U| = {:.6}", r.p_g, r.q_g, r.u_g.norm());
            let _ = writeln!(s, "  motor      P = {:>10.6}  Q = {:>10.6}", r.p_m, r.q_m);
            let _ = writeln!(s, "  load angle generator = {:.6} rad, motor = {:.6} rad", r.load_angle_g, r.load_angle_m);
            let _ = writeln!(s, "  psi = {:.6} rad, delta_m = {:.6} rad", r.psi, r.state.delta_m);
            let _ = writeln!(s, "  Ef generator = {:.6}, Ef motor = {:.6}", r.state.exciter.e_f, r.motor_field);
            let g = &r.state.generator;
            let m = &r.state.motor;
            let _ = writeln!(s, "  generator Eq' = {:.6} Eq'' = {:.6} Ed'' = {:.6}", g.eq_t, g.eq_st, g.ed_st);
            let _ = writeln!(s, "  motor     Eq' = {:.6} Eq'' = {:.6} Ed'' = {:.6}", m.eq_t, m.eq_st, m.ed_st);
        }
        s
    }
}

/// Emfs and field voltage that hold a machine still at terminal voltage
/// `u` delivering current `i` (both rotor frame).
fn machine_emfs(u: Phasor2, i: Phasor2, p: &MachineParams) -> (EmfState, f64) {
    let ed_st = u.d() + p.xd_st * i.q();
    let eq_st = u.q() - p.xd_st * i.d();
    let eq_t = eq_st - i.d() * (p.xd_t - p.xd_st);
    let e_f = eq_t - i.d() * (p.xd - p.xd_t);
    (EmfState { eq_t, eq_st, ed_st }, e_f)
}

struct LoadFlow<'a> {
    y: &'a DMatrix<Complex64>,
    models: &'a [RfcModel],
    gen_buses: &'a [usize],
}

impl LoadFlow<'_> {
    fn n(&self) -> usize {
        self.y.nrows()
    }

    fn voltages(&self, z: &[f64]) -> Vec<Complex64> {
        (0..self.n()).map(|k| Complex64::new(z[2 * k], z[2 * k + 1])).collect()
    }

    fn psi(&self, r: usize, p: f64, q: f64, u: f64) -> f64 {
        let m = &self.models[r];
        phase_shift(
            &OperatingPoint {
                xq: m.motor.xq,
                p: -p,
                q: 0.0,
                u: 1.0,
            },
            &OperatingPoint {
                xq: m.generator.xq,
                p,
                q,
                u,
            },
        )
    }

    fn residual(&self, z: &[f64]) -> Vec<f64> {
        let n = self.n();
        let u = self.voltages(z);
        let mut s: Vec<Complex64> = (0..n)
            .map(|k| {
                let i: Complex64 = (0..n).map(|j| self.y[(k, j)] * u[j]).sum();
                u[k] * i.conj()
            })
            .collect();
        let mut f = vec![0.0; z.len()];
        for (r, m) in self.models.iter().enumerate() {
            let k = self.gen_buses[r];
            let (p, q) = (z[2 * n + 2 * r], z[2 * n + 2 * r + 1]);
            s[k] -= Complex64::new(p, q);
            let uk = u[k].norm();
            f[2 * n + 2 * r] = uk - droop_reference(m.exciter.u0, m.exciter.k_u, q * m.gen_rating_ratio);
            f[2 * n + 2 * r + 1] = wrap_angle(u[k].arg() + self.psi(r, p, q, uk));
        }
        for k in 0..n {
            f[2 * k] = s[k].re;
            f[2 * k + 1] = s[k].im;
        }
        f
    }

    fn solve(&self) -> Result<(Vec<f64>, usize, f64)> {
        let n = self.n();
        let m = self.models.len();
        let dim = 2 * n + 2 * m;
        let mut z = vec![0.0; dim];
        let u0 = self.models.iter().map(|m| m.exciter.u0).sum::<f64>() / m as f64;
        for k in 0..n {
            z[2 * k] = u0;
        }
        let norm = |f: &[f64]| f.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        let mut f = self.residual(&z);
        for it in 0..=LOAD_FLOW_MAX_ITER {
            let res = norm(&f);
            if !res.is_finite() {
                break;
            }
            if res < LOAD_FLOW_TOL {
                return Ok((z, it, res));
            }
            if it == LOAD_FLOW_MAX_ITER {
                break;
            }
            let mut jac = DMatrix::<f64>::zeros(dim, dim);
            for c in 0..dim {
                let h = 1e-7 * z[c].abs().max(1.0);
                let mut zp = z.clone();
                zp[c] += h;
                let mut zm = z.clone();
                zm[c] -= h;
                let fp = self.residual(&zp);
                let fm = self.residual(&zm);
                for r in 0..dim {
                    jac[(r, c)] = (fp[r] - fm[r]) / (2.0 * h);
                }
            }
            let step = jac
                .lu()
                .solve(&DVector::from_column_slice(&f))
                .ok_or(Error::LoadFlow {
                    iterations: it,
                    residual: res,
                })?;
            for (zi, dz) in z.iter_mut().zip(step.iter()) {
                *zi -= dz;
            }
            f = self.residual(&z);
        }
        Err(Error::LoadFlow {
            iterations: LOAD_FLOW_MAX_ITER,
            residual: norm(&f),
        })
    }
}

/// Operating point for prepared converter models on `grid_y` (branch stamps
/// and constant loads, no machine shunts).
pub fn initialize_models(
    grid_y: &DMatrix<Complex64>,
    bus_names: &[String],
    models: &[RfcModel],
    gen_buses: &[usize],
) -> Result<SteadyState> {
    let lf = LoadFlow {
        y: grid_y,
        models,
        gen_buses,
    };
    let (z, iterations, residual) = lf.solve()?;
    let n = lf.n();
    let u = lf.voltages(&z);

    let mut rfcs = Vec::with_capacity(models.len());
    for (r, m) in models.iter().enumerate() {
        let k = gen_buses[r];
        let (p_g, q_g) = (z[2 * n + 2 * r], z[2 * n + 2 * r + 1]);
        let u_g = u[k];
        let i_g = (Complex64::new(p_g, q_g) / u_g).conj();

        // Motor on its 1∠0 infinite bus fixes the shaft angle.
        let (p_m, q_m) = (-p_g, 0.0);
        let u_m = Complex64::new(1.0, 0.0);
        let i_m = (Complex64::new(p_m, q_m) / u_m).conj();
        let e_qm = u_m + J * m.motor.xq * i_m;
        let delta_m = e_qm.arg() / m.motor.pole_pairs();

        let to_rotor = |v: Complex64, poles: u32, frame: Frame| {
            rotor_transform(Phasor2::from_complex(v, frame), delta_m, poles, frame)
        };
        let (motor, motor_field) = machine_emfs(
            to_rotor(u_m, m.motor.poles, Frame::Public),
            to_rotor(i_m, m.motor.poles, Frame::Public),
            &m.motor,
        );
        let (generator, e_f) = machine_emfs(
            to_rotor(u_g, m.generator.poles, Frame::Railway),
            to_rotor(i_g, m.generator.poles, Frame::Railway),
            &m.generator,
        );

        let (exciter, regulator_error) = equilibrium(e_f, &m.exciter, &m.name)?;
        let v_droop = droop_reference(m.exciter.u0, m.exciter.k_u, q_g * m.gen_rating_ratio);
        let vref_bias = regulator_error + u_g.norm() - v_droop;

        let load_angle_g = load_angle(m.generator.xq, p_g, q_g, u_g.norm());
        let load_angle_m = load_angle(m.motor.xq, p_m, q_m, 1.0);
        let psi = lf.psi(r, p_g, q_g, u_g.norm());
        rfcs.push(RfcSteadyState {
            name: m.name.clone(),
            state: RfcState {
                delta_m,
                omega_pu: 1.0,
                motor,
                generator,
                exciter,
            },
            motor_field,
            vref_bias,
            p_g,
            q_g,
            p_m,
            q_m,
            u_g,
            load_angle_g,
            load_angle_m,
            psi,
        });
    }
    let steady = SteadyState {
        rfcs,
        bus_names: bus_names.to_vec(),
        bus_voltages: u,
        iterations,
        residual,
    };
    info!("initial operating point\n{}", steady.report());
    Ok(steady)
}

/// Everything the integrator needs that follows directly from a scenario.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub models: Vec<RfcModel>,
    pub gen_buses: Vec<usize>,
    /// Branch stamps plus constant loads.
    pub grid_y: DMatrix<Complex64>,
}

pub fn prepare(scenario: &Scenario) -> Result<Prepared> {
    scenario.validate()?;
    let s_base = scenario.grid.base.s_mva;
    let models = scenario
        .rfcs
        .iter()
        .map(|u| RfcModel::prepare(u, s_base))
        .collect::<Result<Vec<_>>>()?;
    let gen_buses = scenario
        .rfcs
        .iter()
        .map(|u| scenario.grid.bus_index(&u.gen_bus))
        .collect::<Result<Vec<_>>>()?;
    let loads = scenario
        .grid
        .loads
        .iter()
        .map(|l| Ok((scenario.grid.bus_index(&l.bus)?, l.admittance())))
        .collect::<Result<Vec<_>>>()?;
    let grid_y = augment(&assemble_ybus(&scenario.grid)?, &[], &loads).y;
    Ok(Prepared {
        models,
        gen_buses,
        grid_y,
    })
}

pub fn initialize(scenario: &Scenario) -> Result<SteadyState> {
    let p = prepare(scenario)?;
    initialize_models(&p.grid_y, &scenario.grid.buses, &p.models, &p.gen_buses)
}
