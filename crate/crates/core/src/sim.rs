//! Fixed-step RK4 integration of all converter states with the algebraic
//! railway network re-solved at every stage.
//!
//! Each stage: rotor emfs → Norton injections → bus voltages → generator
//! and motor currents and powers → emf, shaft and exciter derivatives.
//! Topology events snap to the step grid and are applied before the sample
//! at that step is logged, so a fault switched on at `t_on` and off at
//! `t_off` is seen by every sample in `[t_on, t_off)`.

use log::debug;
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::exciter::{droop_reference, exciter_derivatives_in_mode, limiter_mode, regulator_drive, LimiterMode};
use crate::init::{initialize_models, prepare, SteadyState};
use crate::machine::{
    airgap_power, electrical_derivatives, swing_derivatives, RfcModel, RfcState, STATE_LEN,
};
use crate::network::{generator_terminal, AdmittanceMatrix, motor_interface, norton_current, solve_residual, Frame, Network, Phasor2};
use crate::scenario::{EventAction, Scenario};

const J: Complex64 = Complex64 { re: 0.0, im: 1.0 };

/// Instantaneous algebraic quantities of one converter.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct RfcOutputs {
    pub p_g: f64,
    pub q_g: f64,
    pub p_m: f64,
    pub q_m: f64,
    pub u_g: Complex64,
    pub v_ref: f64,
    /// Regulator drive `K_A·error − V_R`.
    pub drive: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub derivatives: Vec<f64>,
    pub bus_voltages: Vec<Complex64>,
    pub rfcs: Vec<RfcOutputs>,
    /// `‖Y·U − I‖∞` of the network solve.
    pub solve_residual: f64,
    /// `|ΣS_generated − S_absorbed|`.
    pub power_mismatch: f64,
}

/// Converter models plus the switchable network: everything the
/// right-hand side depends on besides the state vector.
#[derive(Debug, Clone)]
pub struct Plant {
    pub models: Vec<RfcModel>,
    pub gen_buses: Vec<usize>,
    pub network: Network,
    pub motor_fields: Vec<f64>,
    pub vref_bias: Vec<f64>,
    /// Public-grid infinite bus seen by every motor.
    pub u_inf: Phasor2,
    /// Regulator limiter modes, frozen within a step.
    pub modes: Vec<LimiterMode>,
}

/// Limit crossings are located to this fraction of the step.
const SWITCH_TOL: f64 = 1e-9;
const MAX_SWITCHES: usize = 16;
const V_R: usize = 8;

impl Plant {
    pub fn new(scenario: &Scenario, steady: &SteadyState) -> Result<Plant> {
        let p = prepare(scenario)?;
        let machines: Vec<(usize, f64)> = p
            .gen_buses
            .iter()
            .zip(&p.models)
            .map(|(&b, m)| (b, m.generator.xd_st))
            .collect();
        Ok(Plant {
            network: Network::new(&scenario.grid, &machines)?,
            models: p.models,
            gen_buses: p.gen_buses,
            motor_fields: steady.rfcs.iter().map(|r| r.motor_field).collect(),
            vref_bias: steady.rfcs.iter().map(|r| r.vref_bias).collect(),
            u_inf: Phasor2::new(1.0, 0.0, Frame::Public),
            modes: vec![LimiterMode::Free; steady.rfcs.len()],
        })
    }

    pub fn state_len(&self) -> usize {
        self.models.len() * STATE_LEN
    }

    /// Norton injection vector of the generators for state `x`.
    pub fn injections(&self, x: &[f64]) -> Vec<Complex64> {
        let mut inj = vec![Complex64::new(0.0, 0.0); self.network.dim()];
        for (r, m) in self.models.iter().enumerate() {
            let s = RfcState::read_from(&x[r * STATE_LEN..]);
            let g = &m.generator;
            inj[self.gen_buses[r]] +=
                norton_current(s.generator.ed_st, s.generator.eq_st, s.delta_m, g.poles, g.xd_st).to_complex();
        }
        inj
    }

    /// Full right-hand side with all algebraic by-products.
    pub fn evaluate(&self, x: &[f64]) -> Result<Evaluation> {
        let inj = self.injections(x);
        let u = self.network.solve(&inj)?;
        let mut dx = vec![0.0; x.len()];
        let mut rfcs = Vec::with_capacity(self.models.len());
        let mut s_gen = Complex64::new(0.0, 0.0);
        for (r, m) in self.models.iter().enumerate() {
            let s = RfcState::read_from(&x[r * STATE_LEN..]);
            let (g, mo) = (&m.generator, &m.motor);
            let u_g = u[self.gen_buses[r]];

            let gt = generator_terminal(u_g, s.generator.ed_st, s.generator.eq_st, s.delta_m, g.poles, g.xd_st);
            let (p_g, q_g) = gt.power();
            let mt = motor_interface(s.motor.ed_st, s.motor.eq_st, s.delta_m, mo.poles, mo.xd_st, self.u_inf);
            let (p_m, q_m) = mt.power();

            let pg_air = airgap_power(s.generator.ed_st, s.generator.eq_st, gt.i_d(), gt.i_q(), g);
            let pm_air = airgap_power(s.motor.ed_st, s.motor.eq_st, mt.i_d(), mt.i_q(), mo);
            let (d_delta, d_omega) = swing_derivatives(&s, pm_air, pg_air, m)?;

            let v_ref = droop_reference(m.exciter.u0, m.exciter.k_u, q_g * m.gen_rating_ratio) + self.vref_bias[r];
            let dex = exciter_derivatives_in_mode(&s.exciter, u_g.norm(), v_ref, &m.exciter, self.modes[r]);
            let drive = regulator_drive(&s.exciter, u_g.norm(), v_ref, &m.exciter);
            let dg = electrical_derivatives(&s.generator, gt.i_d(), gt.i_q(), s.exciter.e_f, g);
            let dm = electrical_derivatives(&s.motor, mt.i_d(), mt.i_q(), self.motor_fields[r], mo);

            RfcState {
                delta_m: d_delta,
                omega_pu: d_omega,
                motor: dm,
                generator: dg,
                exciter: dex,
            }
            .write_to(&mut dx[r * STATE_LEN..]);

            let e = crate::network::rotor_transform(
                Phasor2::dq(s.generator.ed_st, s.generator.eq_st),
                s.delta_m,
                g.poles,
                Frame::Railway,
            )
            .to_complex();
            s_gen += u_g * ((e - u_g) / (J * g.xd_st)).conj();
            rfcs.push(RfcOutputs {
                p_g,
                q_g,
                p_m,
                q_m,
                u_g,
                v_ref,
                drive,
            });
        }
        let residual = solve_residual(self.network.y_aug(), &u, &inj);
        let mismatch = (s_gen - self.network.absorbed_power(&u)).norm();
        Ok(Evaluation {
            derivatives: dx,
            bus_voltages: u,
            rfcs,
            solve_residual: residual,
            power_mismatch: mismatch,
        })
    }

    /// State derivatives only.
    pub fn derivative_stack(&self, x: &[f64]) -> Result<Vec<f64>> {
        Ok(self.evaluate(x)?.derivatives)
    }

    /// Per-converter margins that stay non-negative while the current
    /// limiter modes remain valid.
    fn switch_margins(&self, x: &[f64]) -> Result<Vec<f64>> {
        let drives = if self.modes.iter().any(|m| *m != LimiterMode::Free) {
            Some(self.evaluate(x)?.rfcs)
        } else {
            None
        };
        Ok(self
            .models
            .iter()
            .enumerate()
            .map(|(r, m)| {
                let v_r = x[r * STATE_LEN + V_R];
                match self.modes[r] {
                    LimiterMode::Free => (m.exciter.v_rmax - v_r).min(v_r - m.exciter.v_rmin),
                    LimiterMode::Upper => drives.as_ref().map_or(0.0, |d| d[r].drive),
                    LimiterMode::Lower => drives.as_ref().map_or(0.0, |d| -d[r].drive),
                }
            })
            .collect())
    }

    /// Re-derives the limiter modes from state `x`, pinning limited
    /// regulators exactly onto their limit.
    pub fn sync_modes(&mut self, x: &mut [f64]) -> Result<()> {
        let needs_eval = self.models.iter().enumerate().any(|(r, m)| {
            let v_r = x[r * STATE_LEN + V_R];
            self.modes[r] != LimiterMode::Free || v_r >= m.exciter.v_rmax || v_r <= m.exciter.v_rmin
        });
        if !needs_eval {
            return Ok(());
        }
        let ev = self.evaluate(x)?;
        for (r, m) in self.models.iter().enumerate() {
            let i = r * STATE_LEN + V_R;
            let p = &m.exciter;
            self.modes[r] = limiter_mode(x[i], ev.rfcs[r].drive, p);
            x[i] = match self.modes[r] {
                LimiterMode::Upper => p.v_rmax,
                LimiterMode::Lower => p.v_rmin,
                LimiterMode::Free => x[i].clamp(p.v_rmin, p.v_rmax),
            };
        }
        Ok(())
    }

    /// Advances `x` by `dt`, splitting the step wherever a regulator enters
    /// or leaves its limit.
    pub fn step(&mut self, x: &[f64], dt: f64) -> Result<Vec<f64>> {
        let mut x = x.to_vec();
        self.sync_modes(&mut x)?;
        let mut left = dt;
        for _ in 0..MAX_SWITCHES {
            let this = &*self;
            let advance = |x: &[f64], h: f64| rk4_step(x, h, |y| this.derivative_stack(y));
            let holds = |y: &[f64]| -> Result<bool> { Ok(this.switch_margins(y)?.iter().all(|m| *m >= 0.0)) };
            let trial = advance(&x, left)?;
            if holds(&trial)? {
                x = trial;
                left = 0.0;
                break;
            }
            let (mut lo, mut hi) = (0.0, left);
            while hi - lo > SWITCH_TOL * dt {
                let mid = 0.5 * (lo + hi);
                if holds(&advance(&x, mid)?)? {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            x = advance(&x, hi)?;
            left -= hi;
            self.sync_modes(&mut x)?;
            if left <= SWITCH_TOL * dt {
                left = 0.0;
                break;
            }
        }
        if left > 0.0 {
            x = rk4_step(&x, left, |y| self.derivative_stack(y))?;
        }
        self.sync_modes(&mut x)?;
        Ok(x)
    }

    pub fn apply(&mut self, action: &EventAction, scenario: &Scenario) -> Result<()> {
        let bus = |name: &str| scenario.grid.bus_index(name);
        match action {
            EventAction::FaultOn { bus: b, g, b: bb } => self.network.set_fault(bus(b)?, Complex64::new(*g, *bb)),
            EventAction::FaultOff { bus: b } => {
                let idx = b.as_deref().map(bus).transpose()?;
                self.network.clear_fault(idx)
            }
            EventAction::LoadOn { bus: b, g, b: bb } => self.network.connect_load(bus(b)?, Complex64::new(*g, *bb)),
            EventAction::LoadOff { bus: b } => self.network.disconnect_load(bus(b)?),
        }
    }
}

/// One classical Runge–Kutta step of `ẋ = f(x)`.
pub fn rk4_step<F>(x: &[f64], dt: f64, mut f: F) -> Result<Vec<f64>>
where
    F: FnMut(&[f64]) -> Result<Vec<f64>>,
{
    let axpy = |a: f64, k: &[f64]| -> Vec<f64> { x.iter().zip(k).map(|(xi, ki)| xi + a * ki).collect() };
    let k1 = f(x)?;
    let k2 = f(&axpy(0.5 * dt, &k1))?;
    let k3 = f(&axpy(0.5 * dt, &k2))?;
    let k4 = f(&axpy(dt, &k3))?;
    Ok((0..x.len())
        .map(|i| x[i] + dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]))
        .collect())
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct RfcChannels {
    pub name: String,
    pub delta_m: Vec<f64>,
    pub omega_pu: Vec<f64>,
    pub p_g: Vec<f64>,
    pub q_g: Vec<f64>,
    pub p_m: Vec<f64>,
    pub q_m: Vec<f64>,
    pub u_g: Vec<f64>,
    pub e_f_g: Vec<f64>,
    pub v_ref: Vec<f64>,
    pub eq_st_g: Vec<f64>,
    pub ed_st_g: Vec<f64>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TimeSeries {
    pub time: Vec<f64>,
    pub rfcs: Vec<RfcChannels>,
    pub bus_names: Vec<String>,
    pub bus_magnitude: Vec<Vec<f64>>,
    pub bus_angle: Vec<Vec<f64>>,
    pub solve_residual: Vec<f64>,
    pub power_mismatch: Vec<f64>,
}

impl TimeSeries {
    fn new(names: &[String], buses: &[String]) -> Self {
        TimeSeries {
            rfcs: names
                .iter()
                .map(|n| RfcChannels {
                    name: n.clone(),
                    ..Default::default()
                })
                .collect(),
            bus_names: buses.to_vec(),
            bus_magnitude: vec![Vec::new(); buses.len()],
            bus_angle: vec![Vec::new(); buses.len()],
            ..Default::default()
        }
    }

    fn push(&mut self, t: f64, x: &[f64], ev: &Evaluation) {
        self.time.push(t);
        for (r, ch) in self.rfcs.iter_mut().enumerate() {
            let s = RfcState::read_from(&x[r * STATE_LEN..]);
            let o = &ev.rfcs[r];
            ch.delta_m.push(s.delta_m);
            ch.omega_pu.push(s.omega_pu);
            ch.p_g.push(o.p_g);
            ch.q_g.push(o.q_g);
            ch.p_m.push(o.p_m);
            ch.q_m.push(o.q_m);
            ch.u_g.push(o.u_g.norm());
            ch.e_f_g.push(s.exciter.e_f);
            ch.v_ref.push(o.v_ref);
            ch.eq_st_g.push(s.generator.eq_st);
            ch.ed_st_g.push(s.generator.ed_st);
        }
        for (k, u) in ev.bus_voltages.iter().enumerate() {
            self.bus_magnitude[k].push(u.norm());
            self.bus_angle[k].push(u.arg());
        }
        self.solve_residual.push(ev.solve_residual);
        self.power_mismatch.push(ev.power_mismatch);
    }

    pub fn len(&self) -> usize {
        self.time.len()
    }

    pub fn is_empty(&self) -> bool {
        self.time.is_empty()
    }

    /// `ω_a − ω_b`.
    pub fn relative_speed(&self, a: usize, b: usize) -> Vec<f64> {
        self.rfcs[a]
            .omega_pu
            .iter()
            .zip(&self.rfcs[b].omega_pu)
            .map(|(x, y)| x - y)
            .collect()
    }

    /// `Δω = ω − 1` of one converter.
    pub fn speed_deviation(&self, r: usize) -> Vec<f64> {
        self.rfcs[r].omega_pu.iter().map(|w| w - 1.0).collect()
    }

    /// Named channel lookup using the column names of [`TimeSeries::columns`].
    pub fn channel(&self, name: &str) -> Option<Vec<f64>> {
        self.columns().into_iter().find(|(n, _)| n == name).map(|(_, v)| v)
    }

    /// All channels in the fixed output column order.
    pub fn columns(&self) -> Vec<(String, Vec<f64>)> {
        let mut cols = vec![("time".to_string(), self.time.clone())];
        for (r, ch) in self.rfcs.iter().enumerate() {
            let n = &ch.name;
            let neg = |v: &[f64]| v.iter().map(|x| -x).collect::<Vec<_>>();
            cols.extend([
                (format!("{n}.delta_m"), ch.delta_m.clone()),
                (format!("{n}.omega_pu"), ch.omega_pu.clone()),
                (format!("{n}.domega"), self.speed_deviation(r)),
                (format!("{n}.p_g"), ch.p_g.clone()),
                (format!("{n}.q_g"), ch.q_g.clone()),
                (format!("{n}.p_m_in"), neg(&ch.p_m)),
                (format!("{n}.q_m_in"), neg(&ch.q_m)),
                (format!("{n}.u_g"), ch.u_g.clone()),
                (format!("{n}.e_f_g"), ch.e_f_g.clone()),
                (format!("{n}.v_ref"), ch.v_ref.clone()),
            ]);
        }
        if let Some(first) = self.rfcs.first() {
            for (r, ch) in self.rfcs.iter().enumerate().skip(1) {
                cols.push((format!("domega.{}-{}", first.name, ch.name), self.relative_speed(0, r)));
                let dd = first.delta_m.iter().zip(&ch.delta_m).map(|(a, b)| a - b).collect();
                cols.push((format!("ddelta_m.{}-{}", first.name, ch.name), dd));
                let dp = first.p_g.iter().zip(&ch.p_g).map(|(a, b)| a - b).collect();
                cols.push((format!("dp_g.{}-{}", first.name, ch.name), dp));
            }
        }
        for (k, b) in self.bus_names.iter().enumerate() {
            cols.push((format!("bus.{b}.u"), self.bus_magnitude[k].clone()));
            cols.push((format!("bus.{b}.angle"), self.bus_angle[k].clone()));
        }
        cols.push(("solve_residual".into(), self.solve_residual.clone()));
        cols.push(("power_mismatch".into(), self.power_mismatch.clone()));
        cols
    }
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub series: TimeSeries,
    pub steady: SteadyState,
    /// Why integration stopped early, if it did; the series holds every
    /// sample logged up to that point.
    pub abort: Option<Error>,
}

/// Railway admittance matrix (with generator shunts) before any event and
/// after each event, labelled by the event time.
pub fn admittance_snapshots(scenario: &Scenario) -> Result<Vec<(String, AdmittanceMatrix)>> {
    let p = prepare(scenario)?;
    let machines: Vec<(usize, f64)> = p
        .gen_buses
        .iter()
        .zip(&p.models)
        .map(|(&b, m)| (b, m.generator.xd_st))
        .collect();
    let mut plant = Plant {
        network: Network::new(&scenario.grid, &machines)?,
        models: p.models,
        gen_buses: p.gen_buses,
        motor_fields: Vec::new(),
        vref_bias: Vec::new(),
        u_inf: Phasor2::new(1.0, 0.0, Frame::Public),
        modes: Vec::new(),
    };
    let mut out = vec![("initial".to_string(), plant.network.y_aug().clone())];
    for e in &scenario.events {
        plant.apply(&e.action, scenario)?;
        out.push((format!("t{:.6}", e.time), plant.network.y_aug().clone()));
    }
    Ok(out)
}

/// Step index an event at time `t` snaps to.
pub fn event_step(t: f64, dt: f64) -> usize {
    (t / dt).round().max(0.0) as usize
}

/// Initialises the scenario and integrates it to `t_end`.
pub fn run(scenario: &Scenario) -> Result<RunOutput> {
    scenario.validate()?;
    let steady = {
        let p = prepare(scenario)?;
        initialize_models(&p.grid_y, &scenario.grid.buses, &p.models, &p.gen_buses)?
    };
    run_from(scenario, steady)
}

/// Integrates from a given operating point.
pub fn run_from(scenario: &Scenario, steady: SteadyState) -> Result<RunOutput> {
    let mut plant = Plant::new(scenario, &steady)?;
    let sim = &scenario.simulation;
    let dt = sim.dt;
    let stride = sim.output_stride.max(1);
    let n_steps = (sim.t_end / dt).round() as usize;

    let mut x = vec![0.0; plant.state_len()];
    for (r, s) in steady.rfcs.iter().enumerate() {
        s.state.write_to(&mut x[r * STATE_LEN..]);
    }
    let names: Vec<String> = plant.models.iter().map(|m| m.name.clone()).collect();
    let mut series = TimeSeries::new(&names, &scenario.grid.buses);
    let mut events = scenario.events.iter().peekable();
    let mut abort = None;

    for n in 0..=n_steps {
        let t = n as f64 * dt;
        while let Some(e) = events.next_if(|e| event_step(e.time, dt) <= n) {
            debug!("t = {t:.4} s: {:?}", e.action);
            if let Err(err) = plant.apply(&e.action, scenario) {
                abort = Some(err);
                break;
            }
        }
        if abort.is_some() {
            break;
        }
        if n % stride == 0 {
            match plant.evaluate(&x) {
                Ok(ev) => series.push(t, &x, &ev),
                Err(err) => {
                    abort = Some(with_time(err, t));
                    break;
                }
            }
        }
        if n == n_steps {
            break;
        }
        match plant.step(&x, dt) {
            Ok(next) => {
                if next.iter().any(|v| !v.is_finite()) {
                    abort = Some(Error::NonFinite { time: t + dt });
                    break;
                }
                x = next;
            }
            Err(err) => {
                abort = Some(with_time(err, t));
                break;
            }
        }
    }
    Ok(RunOutput { series, steady, abort })
}

fn with_time(err: Error, t: f64) -> Error {
    match err {
        Error::SpeedCollapse { rfc, omega_pu, .. } => Error::SpeedCollapse { rfc, time: t, omega_pu },
        e => e,
    }
}
