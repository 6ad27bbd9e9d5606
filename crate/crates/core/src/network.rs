//! Railway-side phasor network and the machine/network interface.
//!
//! The 16⅔ Hz catenary is a static admittance network in a common Re-Im
//! frame. Each generator is a Norton source `E''/(jX''d)` in parallel with
//! the shunt `1/(jX''d)`, so bus voltages follow from one linear solve
//! `U = Y_aug⁻¹ · I_N`. Motors see their own infinite bus through `X''d`
//! in closed form; there is no 50 Hz matrix.
//!
//! Rotor quantities are moved between a machine's dq frame and a grid frame
//! by the symmetric orthogonal matrix
//!
//! ```text
//! T = | -sin(kδ)  cos(kδ) |      k = poles / 2
//!     |  cos(kδ)  sin(kδ) |
//! ```
//!
//! which is its own inverse.

use std::collections::{HashMap, VecDeque};
use std::fmt::Write as _;
use std::ops::{Add, Sub};

use nalgebra::{DMatrix, DVector, Dyn, LU};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const J: Complex64 = Complex64 { re: 0.0, im: 1.0 };

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Frame {
    /// Common 16⅔ Hz Re-Im frame of the railway grid.
    Railway,
    /// Common 50 Hz Re-Im frame of the public grid.
    Public,
    /// A machine's own rotor dq frame; `a` is d, `b` is q.
    Rotor,
}

/// A real/imaginary (or d/q) pair tagged with the frame it lives in.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Phasor2 {
    pub a: f64,
    pub b: f64,
    pub frame: Frame,
}

impl Phasor2 {
    pub fn new(a: f64, b: f64, frame: Frame) -> Self {
        Phasor2 { a, b, frame }
    }

    pub fn dq(d: f64, q: f64) -> Self {
        Phasor2::new(d, q, Frame::Rotor)
    }

    pub fn from_complex(c: Complex64, frame: Frame) -> Self {
        debug_assert!(frame != Frame::Rotor, "rotor quantities are not complex phasors");
        Phasor2::new(c.re, c.im, frame)
    }

    pub fn to_complex(self) -> Complex64 {
        debug_assert!(self.frame != Frame::Rotor, "rotor quantities are not complex phasors");
        Complex64::new(self.a, self.b)
    }

    pub fn norm(self) -> f64 {
        self.a.hypot(self.b)
    }

    pub fn d(self) -> f64 {
        debug_assert_eq!(self.frame, Frame::Rotor);
        self.a
    }

    pub fn q(self) -> f64 {
        debug_assert_eq!(self.frame, Frame::Rotor);
        self.b
    }
}

impl Add for Phasor2 {
    type Output = Phasor2;
    fn add(self, rhs: Phasor2) -> Phasor2 {
        assert_eq!(self.frame, rhs.frame, "cross-frame phasor arithmetic");
        Phasor2::new(self.a + rhs.a, self.b + rhs.b, self.frame)
    }
}

impl Sub for Phasor2 {
    type Output = Phasor2;
    fn sub(self, rhs: Phasor2) -> Phasor2 {
        assert_eq!(self.frame, rhs.frame, "cross-frame phasor arithmetic");
        Phasor2::new(self.a - rhs.a, self.b - rhs.b, self.frame)
    }
}

fn apply_t(a: f64, b: f64, delta_m: f64, poles: u32) -> (f64, f64) {
    let angle = f64::from(poles / 2) * delta_m;
    let (s, c) = angle.sin_cos();
    (-s * a + c * b, c * a + s * b)
}

/// Moves `v` between a rotor frame and the grid frame `grid`.
///
/// A rotor-frame input comes out in `grid`; a `grid`-frame input comes out in
/// the rotor frame. The same matrix serves both directions.
pub fn rotor_transform(v: Phasor2, delta_m: f64, poles: u32, grid: Frame) -> Phasor2 {
    assert!(grid != Frame::Rotor, "target grid frame must be Railway or Public");
    let out_frame = if v.frame == Frame::Rotor {
        grid
    } else {
        assert_eq!(v.frame, grid, "phasor is in the wrong grid frame");
        Frame::Rotor
    };
    let (a, b) = apply_t(v.a, v.b, delta_m, poles);
    Phasor2::new(a, b, out_frame)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Branch {
    pub from: String,
    pub to: String,
    pub r_ohm_per_km: f64,
    pub x_ohm_per_km: f64,
    pub length_km: f64,
}

/// Constant-admittance shunt load, p.u. on the system base (`g - jb` absorbs
/// `P + jQ` at 1 p.u. voltage when `b = -Q`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShuntLoad {
    pub bus: String,
    pub g: f64,
    pub b: f64,
}

impl ShuntLoad {
    pub fn admittance(&self) -> Complex64 {
        Complex64::new(self.g, self.b)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridBase {
    /// System base power, MVA.
    pub s_mva: f64,
    /// Railway-side base voltage, kV.
    pub u_kv: f64,
}

impl GridBase {
    pub fn z_base(&self) -> f64 {
        self.u_kv * self.u_kv / self.s_mva
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RailGrid {
    pub base: GridBase,
    pub buses: Vec<String>,
    #[serde(default)]
    pub branches: Vec<Branch>,
    #[serde(default)]
    pub loads: Vec<ShuntLoad>,
}

impl RailGrid {
    pub fn bus_index(&self, name: &str) -> Result<usize> {
        self.buses
            .iter()
            .position(|b| b == name)
            .ok_or_else(|| Error::UnknownBus(name.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        if self.buses.is_empty() {
            return Err(Error::EmptyGrid);
        }
        if !(self.base.s_mva > 0.0 && self.base.u_kv > 0.0) {
            return Err(Error::param("grid.base", "base power and voltage must be positive"));
        }
        let mut seen = HashMap::new();
        for (i, b) in self.buses.iter().enumerate() {
            if seen.insert(b.as_str(), i).is_some() {
                return Err(Error::param("grid.buses", format!("duplicate bus `{b}`")));
            }
        }
        let mut adjacency = vec![Vec::new(); self.buses.len()];
        for br in &self.branches {
            let f = self.bus_index(&br.from)?;
            let t = self.bus_index(&br.to)?;
            if f == t {
                return Err(Error::param("grid.branches", format!("branch `{}` loops onto itself", br.from)));
            }
            let z = Complex64::new(br.r_ohm_per_km, br.x_ohm_per_km) * br.length_km;
            if !(z.norm() > 0.0) || !z.re.is_finite() || !z.im.is_finite() {
                return Err(Error::param(
                    "grid.branches",
                    format!("branch {}-{} has zero or invalid impedance", br.from, br.to),
                ));
            }
            adjacency[f].push(t);
            adjacency[t].push(f);
        }
        for l in &self.loads {
            self.bus_index(&l.bus)?;
        }
        let mut visited = vec![false; self.buses.len()];
        let mut queue = VecDeque::from([0usize]);
        visited[0] = true;
        while let Some(i) = queue.pop_front() {
            for &j in &adjacency[i] {
                if !visited[j] {
                    visited[j] = true;
                    queue.push_back(j);
                }
            }
        }
        if let Some(i) = visited.iter().position(|v| !v) {
            return Err(Error::param(
                "grid.branches",
                format!("bus `{}` is not connected to the rest of the grid", self.buses[i]),
            ));
        }
        Ok(())
    }

    /// Series admittance of each branch in p.u., with bus indices.
    pub fn branch_admittances(&self) -> Result<Vec<(usize, usize, Complex64)>> {
        let zb = self.base.z_base();
        self.branches
            .iter()
            .map(|br| {
                let z = Complex64::new(br.r_ohm_per_km, br.x_ohm_per_km) * br.length_km / zb;
                Ok((self.bus_index(&br.from)?, self.bus_index(&br.to)?, z.inv()))
            })
            .collect()
    }
}

/// Dense complex bus admittance matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct AdmittanceMatrix {
    pub y: DMatrix<Complex64>,
}

impl AdmittanceMatrix {
    pub fn zeros(n: usize) -> Self {
        AdmittanceMatrix {
            y: DMatrix::zeros(n, n),
        }
    }

    pub fn dim(&self) -> usize {
        self.y.nrows()
    }

    pub fn get(&self, i: usize, j: usize) -> Complex64 {
        self.y[(i, j)]
    }

    pub fn stamp_branch(&mut self, i: usize, j: usize, y: Complex64) {
        self.y[(i, i)] += y;
        self.y[(j, j)] += y;
        self.y[(i, j)] -= y;
        self.y[(j, i)] -= y;
    }

    pub fn stamp_shunt(&mut self, i: usize, y: Complex64) {
        self.y[(i, i)] += y;
    }

    pub fn is_symmetric(&self) -> bool {
        let n = self.dim();
        (0..n).all(|i| (0..i).all(|j| self.y[(i, j)] == self.y[(j, i)]))
    }

    /// `row,col,re,im` lines for every entry.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("row,col,re,im\n");
        for i in 0..self.dim() {
            for j in 0..self.dim() {
                let v = self.y[(i, j)];
                let _ = writeln!(s, "{i},{j},{:e},{:e}", v.re, v.im);
            }
        }
        s
    }

    pub fn mul_vec(&self, u: &[Complex64]) -> Vec<Complex64> {
        let n = self.dim();
        (0..n)
            .map(|i| (0..n).map(|j| self.y[(i, j)] * u[j]).sum())
            .collect()
    }
}

pub fn assemble_ybus(grid: &RailGrid) -> Result<AdmittanceMatrix> {
    if grid.buses.is_empty() {
        return Err(Error::EmptyGrid);
    }
    let mut y = AdmittanceMatrix::zeros(grid.buses.len());
    for (i, j, yb) in grid.branch_admittances()? {
        y.stamp_branch(i, j, yb);
    }
    Ok(y)
}

/// Adds generator sub-transient shunts `1/(jX''d)` and load admittances.
/// Several entries on one bus simply add up.
pub fn augment(y: &AdmittanceMatrix, machines: &[(usize, f64)], loads: &[(usize, Complex64)]) -> AdmittanceMatrix {
    let mut out = y.clone();
    for &(bus, xd_st) in machines {
        out.stamp_shunt(bus, (J * xd_st).inv());
    }
    for &(bus, yl) in loads {
        out.stamp_shunt(bus, yl);
    }
    out
}

pub fn apply_fault(y: &AdmittanceMatrix, bus: usize, y_fault: Complex64) -> AdmittanceMatrix {
    let mut out = y.clone();
    out.stamp_shunt(bus, y_fault);
    out
}

/// LU factorisation of an augmented matrix, reused until the topology changes.
#[derive(Debug, Clone)]
pub struct Factorized {
    matrix: AdmittanceMatrix,
    lu: LU<Complex64, Dyn, Dyn>,
}

impl Factorized {
    pub fn new(matrix: AdmittanceMatrix) -> Result<Factorized> {
        let lu = matrix.y.clone().lu();
        let u = lu.u();
        let diag: Vec<f64> = (0..u.nrows()).map(|i| u[(i, i)].norm()).collect();
        let max = diag.iter().cloned().fold(0.0, f64::max);
        let min = diag.iter().cloned().fold(f64::INFINITY, f64::min);
        if diag.is_empty() || !(max > 0.0) || !(min > max * 1e-14) || !min.is_finite() {
            return Err(Error::SingularNetwork);
        }
        Ok(Factorized { matrix, lu })
    }

    pub fn matrix(&self) -> &AdmittanceMatrix {
        &self.matrix
    }
}

/// `U = Y_aug⁻¹ · I_N`.
pub fn solve_network(f: &Factorized, injections: &[Complex64]) -> Result<Vec<Complex64>> {
    let rhs = DVector::from_column_slice(injections);
    let u = f.lu.solve(&rhs).ok_or(Error::SingularNetwork)?;
    Ok(u.iter().copied().collect())
}

/// `‖Y·U − I‖∞`.
pub fn solve_residual(y: &AdmittanceMatrix, u: &[Complex64], injections: &[Complex64]) -> f64 {
    y.mul_vec(u)
        .iter()
        .zip(injections)
        .map(|(a, b)| (a - b).norm())
        .fold(0.0, f64::max)
}

/// Norton current of a generator in the railway frame.
pub fn norton_current(ed_st: f64, eq_st: f64, delta_m: f64, poles: u32, xd_st: f64) -> Phasor2 {
    let e = rotor_transform(Phasor2::dq(ed_st, eq_st), delta_m, poles, Frame::Railway);
    Phasor2::from_complex(e.to_complex() / (J * xd_st), Frame::Railway)
}

/// Stator currents `(I_d, I_q)` from rotor-frame terminal voltage and emf.
pub fn machine_currents(u: Phasor2, ed_st: f64, eq_st: f64, xd_st: f64) -> (f64, f64) {
    ((u.q() - eq_st) / xd_st, (-u.d() + ed_st) / xd_st)
}

/// Generated `(P, Q)` for voltage and current in the same frame.
pub fn terminal_power(u: Phasor2, i: Phasor2) -> (f64, f64) {
    assert_eq!(u.frame, i.frame, "cross-frame phasor arithmetic");
    (u.a * i.a + u.b * i.b, u.a * i.b - u.b * i.a)
}

/// Rotor-frame voltage and current at one machine terminal.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MachineTerminal {
    pub u: Phasor2,
    pub i: Phasor2,
}

impl MachineTerminal {
    fn new(u: Phasor2, ed_st: f64, eq_st: f64, xd_st: f64) -> Self {
        let (i_d, i_q) = machine_currents(u, ed_st, eq_st, xd_st);
        MachineTerminal {
            u,
            i: Phasor2::dq(i_d, i_q),
        }
    }

    pub fn i_d(&self) -> f64 {
        self.i.d()
    }

    pub fn i_q(&self) -> f64 {
        self.i.q()
    }

    pub fn power(&self) -> (f64, f64) {
        terminal_power(self.u, self.i)
    }
}

/// Generator terminal quantities given the solved bus voltage.
pub fn generator_terminal(
    u_bus: Complex64,
    ed_st: f64,
    eq_st: f64,
    delta_m: f64,
    poles: u32,
    xd_st: f64,
) -> MachineTerminal {
    let u = rotor_transform(Phasor2::from_complex(u_bus, Frame::Railway), delta_m, poles, Frame::Railway);
    MachineTerminal::new(u, ed_st, eq_st, xd_st)
}

/// Motor behind `X''d` on its own infinite bus `u_inf` (50 Hz frame).
pub fn motor_interface(
    ed_st: f64,
    eq_st: f64,
    delta_m: f64,
    poles: u32,
    xd_st: f64,
    u_inf: Phasor2,
) -> MachineTerminal {
    let u = rotor_transform(u_inf, delta_m, poles, Frame::Public);
    MachineTerminal::new(u, ed_st, eq_st, xd_st)
}

/// Railway network with its switchable shunts and the cached factorisation.
#[derive(Debug, Clone)]
pub struct Network {
    branches: Vec<(usize, usize, Complex64)>,
    base_shunts: Vec<(usize, Complex64)>,
    faults: Vec<(usize, Complex64)>,
    switched_loads: Vec<(usize, Complex64)>,
    /// Branch stamps, machine shunts and static loads.
    base: AdmittanceMatrix,
    factorized: Factorized,
}

impl Network {
    /// `machines` lists `(bus, X''d)` for every generator.
    pub fn new(grid: &RailGrid, machines: &[(usize, f64)]) -> Result<Network> {
        grid.validate()?;
        let ybus = assemble_ybus(grid)?;
        let loads = grid
            .loads
            .iter()
            .map(|l| Ok((grid.bus_index(&l.bus)?, l.admittance())))
            .collect::<Result<Vec<_>>>()?;
        let base = augment(&ybus, machines, &loads);
        let factorized = Factorized::new(base.clone())?;
        Ok(Network {
            branches: grid.branch_admittances()?,
            base_shunts: loads,
            faults: Vec::new(),
            switched_loads: Vec::new(),
            base,
            factorized,
        })
    }

    pub fn dim(&self) -> usize {
        self.base.dim()
    }

    pub fn y_aug(&self) -> &AdmittanceMatrix {
        self.factorized.matrix()
    }

    pub fn factorized(&self) -> &Factorized {
        &self.factorized
    }

    pub fn set_fault(&mut self, bus: usize, y: Complex64) -> Result<()> {
        self.faults.retain(|(b, _)| *b != bus);
        self.faults.push((bus, y));
        self.refactor()
    }

    /// Clears the fault on `bus`, or every fault when `bus` is `None`.
    pub fn clear_fault(&mut self, bus: Option<usize>) -> Result<()> {
        match bus {
            Some(bus) => self.faults.retain(|(b, _)| *b != bus),
            None => self.faults.clear(),
        }
        self.refactor()
    }

    pub fn connect_load(&mut self, bus: usize, y: Complex64) -> Result<()> {
        self.switched_loads.push((bus, y));
        self.refactor()
    }

    pub fn disconnect_load(&mut self, bus: usize) -> Result<()> {
        self.switched_loads.retain(|(b, _)| *b != bus);
        self.refactor()
    }

    /// Shunts currently connected on top of the base matrix: faults first,
    /// then switched loads.
    fn active_shunts(&self) -> impl Iterator<Item = &(usize, Complex64)> {
        self.faults.iter().chain(self.switched_loads.iter())
    }

    fn refactor(&mut self) -> Result<()> {
        let extra: Vec<(usize, Complex64)> = self.active_shunts().copied().collect();
        let y = augment(&self.base, &[], &extra);
        self.factorized = Factorized::new(y)?;
        Ok(())
    }

    pub fn solve(&self, injections: &[Complex64]) -> Result<Vec<Complex64>> {
        solve_network(&self.factorized, injections)
    }

    /// Power absorbed by branches, loads and faults for bus voltages `u`.
    pub fn absorbed_power(&self, u: &[Complex64]) -> Complex64 {
        let branches: Complex64 = self
            .branches
            .iter()
            .map(|&(i, j, y)| {
                let du = u[i] - u[j];
                du * (y * du).conj()
            })
            .sum();
        let shunts: Complex64 = self
            .base_shunts
            .iter()
            .chain(self.active_shunts())
            .map(|&(i, y)| u[i] * (y * u[i]).conj())
            .sum();
        branches + shunts
    }
}
