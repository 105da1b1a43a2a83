//! Newton-Raphson power flow and classical-model machine initialization.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::network::{build_ybus, BusKind, PowerSystem, Sequence};
use crate::CMatrix;

pub const TOLERANCE: f64 = 1e-8;
pub const MAX_ITERATIONS: usize = 50;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OperatingPoint {
    /// Bus voltage phasors, per-unit, bus order.
    pub v: Vec<Complex64>,
    /// Scaled load per bus, per-unit.
    pub s_load: Vec<Complex64>,
    /// Generation per bus (injection plus load), per-unit.
    pub s_gen: Vec<Complex64>,
    /// Machine active output, per-unit, machine order.
    pub pg: Vec<f64>,
    pub qg: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    pub max_mismatch: f64,
}

impl OperatingPoint {
    pub fn total_generation(&self) -> Complex64 {
        self.s_gen.iter().sum()
    }

    pub fn total_load(&self) -> Complex64 {
        self.s_load.iter().sum()
    }
}

/// Constant-EMF machine state behind transient reactance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MachineInternal {
    pub e_mag: f64,
    /// Internal rotor angle, rad.
    pub delta0: f64,
    /// Mechanical power, per-unit system base.
    pub pm: f64,
}

/// Solve the AC power flow from a flat start with loads scaled per bus
/// (P and Q by the same multiplier). The slack bus absorbs the change.
pub fn solve_power_flow(system: &PowerSystem, load_scale: &[f64]) -> Result<OperatingPoint> {
    let n = system.n_buses();
    if load_scale.len() != n {
        return Err(Error::Domain(format!("expected {n} load multipliers, got {}", load_scale.len())));
    }
    if load_scale.iter().any(|m| !(*m >= 0.0)) {
        return Err(Error::Domain("load multipliers must be non-negative".into()));
    }
    let ybus = build_ybus(system, Sequence::Positive)?;
    let base = system.system_mva;

    let s_load: Vec<Complex64> = system
        .buses
        .iter()
        .zip(load_scale)
        .map(|(b, m)| Complex64::new(b.p_load, b.q_load) * (*m / base))
        .collect();
    let s_spec: Vec<Complex64> = system
        .buses
        .iter()
        .zip(&s_load)
        .map(|(b, l)| Complex64::new(b.p_gen, b.q_gen) / base - l)
        .collect();

    let slack = system.slack_index();
    let pq: Vec<usize> = (0..n).filter(|&i| system.buses[i].kind == BusKind::PQ).collect();
    let pvpq: Vec<usize> = (0..n).filter(|&i| i != slack).collect();

    let mut vm: Vec<f64> = system
        .buses
        .iter()
        .map(|b| if b.kind != BusKind::PQ && b.v_set > 0.0 { b.v_set } else { 1.0 })
        .collect();
    let mut va = vec![0.0; n];

    let mut trace = Vec::new();
    let mut iter = 0;
    loop {
        let v: Vec<Complex64> = vm.iter().zip(&va).map(|(&m, &a)| Complex64::from_polar(m, a)).collect();
        let ibus = mat_vec(&ybus, &v);
        let mis: Vec<Complex64> = (0..n).map(|i| v[i] * ibus[i].conj() - s_spec[i]).collect();
        let f: Vec<f64> = pvpq.iter().map(|&i| mis[i].re).chain(pq.iter().map(|&i| mis[i].im)).collect();
        let norm = f.iter().fold(0.0_f64, |a, x| a.max(x.abs()));
        trace.push(norm);

        if norm < TOLERANCE {
            let s_inj: Vec<Complex64> = (0..n).map(|i| v[i] * ibus[i].conj()).collect();
            let s_gen: Vec<Complex64> = s_inj.iter().zip(&s_load).map(|(a, b)| a + b).collect();
            let mut pg = Vec::with_capacity(system.machines.len());
            let mut qg = Vec::with_capacity(system.machines.len());
            for m in &system.machines {
                let s = s_gen[system.bus_index(m.bus).expect("validated")];
                pg.push(s.re);
                qg.push(s.im);
            }
            return Ok(OperatingPoint {
                v,
                s_load,
                s_gen,
                pg,
                qg,
                iterations: iter,
                converged: true,
                max_mismatch: norm,
            });
        }
        if iter == MAX_ITERATIONS || !norm.is_finite() {
            return Err(Error::NonConvergence { iterations: iter, max_mismatch: norm, trace });
        }

        let jac = jacobian(&ybus, &v, &ibus, &pvpq, &pq);
        let rhs = DVector::from_iterator(f.len(), f.iter().map(|x| -x));
        let dx = jac.lu().solve(&rhs).ok_or(Error::SingularJacobian(iter))?;
        for (k, &i) in pvpq.iter().enumerate() {
            va[i] += dx[k];
        }
        for (k, &i) in pq.iter().enumerate() {
            vm[i] += dx[pvpq.len() + k];
        }
        iter += 1;
    }
}

fn mat_vec(y: &CMatrix, v: &[Complex64]) -> Vec<Complex64> {
    (0..y.nrows()).map(|i| (0..y.ncols()).map(|k| y[(i, k)] * v[k]).sum()).collect()
}

/// Polar power-mismatch Jacobian, rows [P(pvpq); Q(pq)], columns
/// [angle(pvpq); magnitude(pq)].
fn jacobian(y: &CMatrix, v: &[Complex64], ibus: &[Complex64], pvpq: &[usize], pq: &[usize]) -> DMatrix<f64> {
    let j = Complex64::new(0.0, 1.0);
    let vnorm: Vec<Complex64> = v.iter().map(|x| x / x.norm()).collect();
    // dS/dVa = j diag(V) conj(diag(I) - Y diag(V))
    // dS/dVm = diag(V) conj(Y diag(Vnorm)) + conj(diag(I)) diag(Vnorm)
    let ds_dva = |r: usize, c: usize| {
        let inner = if r == c { ibus[r] - y[(r, c)] * v[c] } else { -y[(r, c)] * v[c] };
        j * v[r] * inner.conj()
    };
    let ds_dvm = |r: usize, c: usize| {
        let mut s = v[r] * (y[(r, c)] * vnorm[c]).conj();
        if r == c {
            s += ibus[r].conj() * vnorm[r];
        }
        s
    };
    let m = pvpq.len() + pq.len();
    let mut jac = DMatrix::zeros(m, m);
    for (a, &r) in pvpq.iter().enumerate() {
        for (b, &c) in pvpq.iter().enumerate() {
            jac[(a, b)] = ds_dva(r, c).re;
        }
        for (b, &c) in pq.iter().enumerate() {
            jac[(a, pvpq.len() + b)] = ds_dvm(r, c).re;
        }
    }
    for (a, &r) in pq.iter().enumerate() {
        for (b, &c) in pvpq.iter().enumerate() {
            jac[(pvpq.len() + a, b)] = ds_dva(r, c).im;
        }
        for (b, &c) in pq.iter().enumerate() {
            jac[(pvpq.len() + a, pvpq.len() + b)] = ds_dvm(r, c).im;
        }
    }
    jac
}

/// E = V + jX'd I per machine, reactance on the system base.
pub fn init_machine_internals(system: &PowerSystem, op: &OperatingPoint) -> Result<Vec<MachineInternal>> {
    if !op.converged {
        return Err(Error::Domain("operating point has not converged".into()));
    }
    system
        .machines
        .iter()
        .map(|m| {
            let k = system.bus_index(m.bus).expect("validated");
            let v = op.v[k];
            let s = op.s_gen[k];
            let i = (s / v).conj();
            let e = v + Complex64::new(0.0, system.machine_xd_sys(m)) * i;
            if !(e.norm() > 0.0) {
                return Err(Error::Domain(format!("machine at bus {} has zero internal EMF", m.bus)));
            }
            Ok(MachineInternal { e_mag: e.norm(), delta0: e.arg(), pm: s.re })
        })
        .collect()
}
