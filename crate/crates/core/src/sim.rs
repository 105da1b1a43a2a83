//! Multi-machine classical-model swing simulation.
//!
//! The state is `[delta_0..delta_n, omega_0..omega_n]` with angles in rad and
//! speed deviations in per-unit. The network switches from the fault-on to
//! the post-fault reduced matrix at the first step boundary at or after the
//! clearing time.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fault::PhaseMatrices;
use crate::network::PowerSystem;
use crate::powerflow::MachineInternal;
use crate::CMatrix;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SwingState {
    pub delta: Vec<f64>,
    pub omega_dev: Vec<f64>,
}

impl SwingState {
    fn from_flat(y: &[f64]) -> Self {
        let n = y.len() / 2;
        SwingState { delta: y[..n].to_vec(), omega_dev: y[n..].to_vec() }
    }
}

/// Inertia and damping on the system base.
#[derive(Debug, Clone, PartialEq)]
pub struct SwingModel {
    pub h: Vec<f64>,
    pub d: Vec<f64>,
    /// Synchronous speed, rad/s.
    pub omega_s: f64,
}

impl SwingModel {
    pub fn from_system(system: &PowerSystem) -> Self {
        SwingModel {
            h: system.machines.iter().map(|m| system.machine_h_sys(m)).collect(),
            d: system.machines.iter().map(|m| system.machine_d_sys(m)).collect(),
            omega_s: 2.0 * std::f64::consts::PI * system.f0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimSettings {
    pub dt: f64,
    /// Simulated time after clearing, s.
    pub post_fault_horizon: f64,
    /// Instability threshold on the pairwise angle separation, degrees.
    pub limit_deg: f64,
    pub early_exit: bool,
    /// Keep every state; off for campaign runs.
    pub record: bool,
}

impl Default for SimSettings {
    fn default() -> Self {
        SimSettings { dt: 1e-3, post_fault_horizon: 5.0, limit_deg: 360.0, early_exit: true, record: true }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<SwingState>,
    pub delta_max_deg: f64,
    pub unstable: bool,
    pub terminated_early: bool,
    /// Time of a non-finite state, if the integration blew up.
    pub blowup_at: Option<f64>,
    /// Number of steps integrated with the fault-on network.
    pub fault_steps: usize,
}

/// Pe_i = sum_j E_i E_j [G_ij cos(d_i - d_j) + B_ij sin(d_i - d_j)].
pub fn electrical_power(e_mags: &[f64], y_reduced: &CMatrix, delta: &[f64]) -> Vec<f64> {
    let n = e_mags.len();
    (0..n)
        .map(|i| {
            (0..n)
                .map(|j| {
                    let y = y_reduced[(i, j)];
                    let a = delta[i] - delta[j];
                    e_mags[i] * e_mags[j] * (y.re * a.cos() + y.im * a.sin())
                })
                .sum()
        })
        .collect()
}

/// Swing equation right-hand side.
pub fn swing_derivatives(state: &SwingState, pm: &[f64], pe: &[f64], model: &SwingModel) -> SwingState {
    let n = state.delta.len();
    SwingState {
        delta: state.omega_dev.iter().map(|w| model.omega_s * w).collect(),
        omega_dev: (0..n)
            .map(|i| (pm[i] - pe[i] - model.d[i] * state.omega_dev[i]) / (2.0 * model.h[i]))
            .collect(),
    }
}

/// Reusable buffers for classic fourth-order Runge-Kutta.
pub struct Rk4 {
    k: [Vec<f64>; 4],
    tmp: Vec<f64>,
}

impl Rk4 {
    pub fn new(n: usize) -> Self {
        Rk4 { k: std::array::from_fn(|_| vec![0.0; n]), tmp: vec![0.0; n] }
    }

    /// Advance `y` in place by `dt`; `t` is only used for error reporting.
    pub fn step(&mut self, t: f64, y: &mut [f64], dt: f64, mut rhs: impl FnMut(&[f64], &mut [f64])) -> Result<()> {
        let [k1, k2, k3, k4] = &mut self.k;
        let tmp = &mut self.tmp;
        rhs(y, k1);
        for i in 0..y.len() {
            tmp[i] = y[i] + 0.5 * dt * k1[i];
        }
        rhs(tmp, k2);
        for i in 0..y.len() {
            tmp[i] = y[i] + 0.5 * dt * k2[i];
        }
        rhs(tmp, k3);
        for i in 0..y.len() {
            tmp[i] = y[i] + dt * k3[i];
        }
        rhs(tmp, k4);
        let mut finite = true;
        for i in 0..y.len() {
            y[i] += dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
            finite &= y[i].is_finite();
        }
        if finite {
            Ok(())
        } else {
            Err(Error::NumericalBlowup { t: t + dt })
        }
    }
}

/// One RK4 step of `dy/dt = rhs(y)`.
pub fn step_rk4(t: f64, y: &[f64], dt: f64, rhs: impl FnMut(&[f64], &mut [f64])) -> Result<Vec<f64>> {
    if !(dt > 0.0) {
        return Err(Error::Domain(format!("step size must be positive, got {dt}")));
    }
    let mut out = y.to_vec();
    Rk4::new(y.len()).step(t, &mut out, dt, rhs)?;
    Ok(out)
}

/// E_i E_j G_ij and E_i E_j B_ij, row-major.
struct PowerCoefficients {
    g: Vec<f64>,
    b: Vec<f64>,
}

impl PowerCoefficients {
    fn new(e: &[f64], y: &CMatrix) -> Self {
        let n = e.len();
        let ee = |i: usize, j: usize| e[i] * e[j];
        PowerCoefficients {
            g: (0..n * n).map(|k| ee(k / n, k % n) * y[(k / n, k % n)].re).collect(),
            b: (0..n * n).map(|k| ee(k / n, k % n) * y[(k / n, k % n)].im).collect(),
        }
    }
}

struct SwingRhs<'a> {
    model: &'a SwingModel,
    pm: &'a [f64],
    sin: Vec<f64>,
    cos: Vec<f64>,
}

impl SwingRhs<'_> {
    fn eval(&mut self, coef: &PowerCoefficients, y: &[f64], dy: &mut [f64]) {
        let n = self.pm.len();
        for ((s, c), d) in self.sin.iter_mut().zip(self.cos.iter_mut()).zip(&y[..n]) {
            (*s, *c) = d.sin_cos();
        }
        for i in 0..n {
            let (si, ci) = (self.sin[i], self.cos[i]);
            let mut pe = 0.0;
            for j in 0..n {
                let (sj, cj) = (self.sin[j], self.cos[j]);
                // cos(di - dj), sin(di - dj)
                let cd = ci * cj + si * sj;
                let sd = si * cj - ci * sj;
                pe += coef.g[i * n + j] * cd + coef.b[i * n + j] * sd;
            }
            let w = y[n + i];
            dy[i] = self.model.omega_s * w;
            dy[n + i] = (self.pm[i] - pe - self.model.d[i] * w) / (2.0 * self.model.h[i]);
        }
    }
}

fn separation_deg(delta: &[f64]) -> f64 {
    let (lo, hi) = delta.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &d| (lo.min(d), hi.max(d)));
    (hi - lo).to_degrees()
}

/// Integrate from the pre-fault equilibrium with the fault applied at t = 0
/// and cleared at `fct`.
pub fn simulate_scenario(
    system: &PowerSystem,
    internals: &[MachineInternal],
    phases: &PhaseMatrices,
    fct: f64,
    settings: &SimSettings,
) -> Result<Trajectory> {
    simulate_with_model(&SwingModel::from_system(system), internals, phases, fct, settings)
}

pub fn simulate_with_model(
    model: &SwingModel,
    internals: &[MachineInternal],
    phases: &PhaseMatrices,
    fct: f64,
    settings: &SimSettings,
) -> Result<Trajectory> {
    if !(fct > 0.0) {
        return Err(Error::Domain(format!("fault clearing time must be positive, got {fct}")));
    }
    if !(settings.dt > 0.0) {
        return Err(Error::Domain("step size must be positive".into()));
    }
    let n = internals.len();
    if phases.y_fault.nrows() != n || phases.y_post.nrows() != n || model.h.len() != n {
        return Err(Error::Domain("machine count does not match the reduced network".into()));
    }
    let e: Vec<f64> = internals.iter().map(|m| m.e_mag).collect();
    let pm: Vec<f64> = internals.iter().map(|m| m.pm).collect();
    let fault = PowerCoefficients::new(&e, &phases.y_fault);
    let post = PowerCoefficients::new(&e, &phases.y_post);

    let fault_steps = ((fct / settings.dt) - 1e-9).ceil().max(1.0) as usize;
    let total = fault_steps + (settings.post_fault_horizon / settings.dt).round() as usize;

    let mut y: Vec<f64> = internals.iter().map(|m| m.delta0).chain(std::iter::repeat_n(0.0, n)).collect();
    let mut rhs = SwingRhs { model, pm: &pm, sin: vec![0.0; n], cos: vec![0.0; n] };
    let mut rk = Rk4::new(2 * n);

    let mut traj = Trajectory {
        times: Vec::new(),
        states: Vec::new(),
        delta_max_deg: separation_deg(&y[..n]),
        unstable: false,
        terminated_early: false,
        blowup_at: None,
        fault_steps,
    };
    if settings.record {
        traj.times.reserve(total + 1);
        traj.states.reserve(total + 1);
        traj.times.push(0.0);
        traj.states.push(SwingState::from_flat(&y));
    }

    for k in 0..total {
        let t = k as f64 * settings.dt;
        let coef = if k < fault_steps { &fault } else { &post };
        if let Err(Error::NumericalBlowup { t }) = rk.step(t, &mut y, settings.dt, |s, d| rhs.eval(coef, s, d)) {
            traj.blowup_at = Some(t);
            // conservative: a blowup counts as unstable
            traj.delta_max_deg = traj.delta_max_deg.max(settings.limit_deg.next_up());
            traj.terminated_early = true;
            break;
        }
        let sep = separation_deg(&y[..n]);
        traj.delta_max_deg = traj.delta_max_deg.max(sep);
        if settings.record {
            traj.times.push((k + 1) as f64 * settings.dt);
            traj.states.push(SwingState::from_flat(&y));
        }
        if settings.early_exit && sep > settings.limit_deg {
            traj.terminated_early = k + 1 < total;
            break;
        }
    }
    traj.unstable = traj.delta_max_deg > settings.limit_deg;
    Ok(traj)
}

/// Largest pairwise rotor-angle difference over the recorded trajectory, deg.
pub fn max_angle_separation(trajectory: &Trajectory) -> f64 {
    trajectory.states.iter().map(|s| separation_deg(&s.delta)).fold(0.0, f64::max)
}

/// Complex-power evaluation of machine electrical output, used as a cross-check.
pub fn electrical_power_complex(e_mags: &[f64], y_reduced: &CMatrix, delta: &[f64]) -> Vec<f64> {
    let e: Vec<Complex64> = e_mags.iter().zip(delta).map(|(&m, &a)| Complex64::from_polar(m, a)).collect();
    (0..e.len())
        .map(|i| {
            let cur: Complex64 = (0..e.len()).map(|j| y_reduced[(i, j)] * e[j]).sum();
            (e[i] * cur.conj()).re
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fault::{build_phase_matrices, FaultSpec, FaultTarget, FaultType};
    use crate::powerflow::{init_machine_internals, solve_power_flow};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn single_machine_power_is_e2g() {
        let y = CMatrix::from_element(1, 1, c(0.3, -2.0));
        assert!((electrical_power(&[1.1], &y, &[0.7])[0] - 1.21 * 0.3).abs() < 1e-15);
    }

    #[test]
    fn equal_angles_lossless_tie_has_no_transfer() {
        let y = CMatrix::from_row_slice(2, 2, &[c(0.1, -3.0), c(0.0, 3.0), c(0.0, 3.0), c(0.2, -3.0)]);
        let pe = electrical_power(&[1.0, 1.2], &y, &[0.4, 0.4]);
        assert!((pe[0] - 0.1).abs() < 1e-15);
        assert!((pe[1] - 1.44 * 0.2).abs() < 1e-15);
    }

    #[test]
    fn random_five_machine_power_matches_complex_evaluation() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..50 {
            let y = CMatrix::from_fn(5, 5, |_, _| c(rng.random_range(-1.0..1.0), rng.random_range(-5.0..5.0)));
            let y = (&y + y.transpose()) * c(0.5, 0.0);
            let e: Vec<f64> = (0..5).map(|_| rng.random_range(0.8..1.3)).collect();
            let d: Vec<f64> = (0..5).map(|_| rng.random_range(-3.0..3.0)).collect();
            let a = electrical_power(&e, &y, &d);
            let b = electrical_power_complex(&e, &y, &d);
            for (x, z) in a.iter().zip(&b) {
                assert!((x - z).abs() < 1e-10);
            }
            // fast path used by the integrator
            let model = SwingModel { h: vec![1.0; 5], d: vec![0.0; 5], omega_s: 1.0 };
            let mut rhs = SwingRhs { model: &model, pm: &[0.0; 5], sin: vec![0.0; 5], cos: vec![0.0; 5] };
            let coef = PowerCoefficients::new(&e, &y);
            let mut state: Vec<f64> = d.clone();
            state.extend([0.0; 5]);
            let mut dy = vec![0.0; 10];
            rhs.eval(&coef, &state, &mut dy);
            for i in 0..5 {
                assert!((-2.0 * dy[5 + i] - a[i]).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn equilibrium_has_zero_derivative() {
        let model = SwingModel { h: vec![3.0, 4.0], d: vec![1.0, 2.0], omega_s: 377.0 };
        let s = SwingState { delta: vec![0.1, 0.2], omega_dev: vec![0.0, 0.0] };
        let d = swing_derivatives(&s, &[0.5, 0.7], &[0.5, 0.7], &model);
        assert!(d.delta.iter().chain(&d.omega_dev).all(|v| *v == 0.0));
    }

    #[test]
    fn unit_acceleration() {
        let model = SwingModel { h: vec![2.5], d: vec![0.0], omega_s: 377.0 };
        let s = SwingState { delta: vec![0.0], omega_dev: vec![0.0] };
        let d = swing_derivatives(&s, &[5.0], &[0.0], &model);
        assert_eq!(d.omega_dev[0], 1.0);
    }

    #[test]
    fn derivatives_match_potential_gradient() {
        // lossless, undamped: 2H dω/dt = -dV/dδ with
        // V(δ) = -Σ pm_i δ_i - Σ_{i<j} E_i E_j B_ij cos(δ_i - δ_j)
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let n = 4;
        let y = CMatrix::from_fn(n, n, |_, _| c(0.0, rng.random_range(-5.0..5.0)));
        let y = (&y + y.transpose()) * c(0.5, 0.0);
        let e: Vec<f64> = (0..n).map(|_| rng.random_range(0.9..1.2)).collect();
        let pm: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let model = SwingModel { h: vec![3.0; n], d: vec![0.0; n], omega_s: 2.0 * PI * 60.0 };
        let potential = |d: &[f64]| {
            let mut v = -pm.iter().zip(d).map(|(p, x)| p * x).sum::<f64>();
            for i in 0..n {
                for j in i + 1..n {
                    v -= e[i] * e[j] * y[(i, j)].im * (d[i] - d[j]).cos();
                }
            }
            v
        };
        for _ in 0..20 {
            let d: Vec<f64> = (0..n).map(|_| rng.random_range(-2.0..2.0)).collect();
            let pe = electrical_power(&e, &y, &d);
            let s = SwingState { delta: d.clone(), omega_dev: vec![0.0; n] };
            let rhs = swing_derivatives(&s, &pm, &pe, &model);
            for i in 0..n {
                let h = 1e-5;
                let mut up = d.clone();
                let mut dn = d.clone();
                up[i] += h;
                dn[i] -= h;
                let grad = (potential(&up) - potential(&dn)) / (2.0 * h);
                assert!((2.0 * model.h[i] * rhs.omega_dev[i] + grad).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn rk4_trivial_cases() {
        let y = step_rk4(0.0, &[1.0, 2.0], 0.01, |_, d| d.fill(0.0)).unwrap();
        assert_eq!(y, vec![1.0, 2.0]);
        let y = step_rk4(0.0, &[0.5], 0.001, |_, d| d[0] = 1.0).unwrap();
        assert!((y[0] - 0.501).abs() < 1e-15);
        assert!(step_rk4(0.0, &[0.5], 0.0, |_, d| d[0] = 1.0).is_err());
        match step_rk4(2.0, &[1.0], 0.5, |y, d| d[0] = 1.0 / (y[0] - 1.0)) {
            Err(Error::NumericalBlowup { t }) => assert_eq!(t, 2.5),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn separation_of_identical_angles_is_zero() {
        let traj = Trajectory {
            times: vec![0.0, 1.0],
            states: vec![
                SwingState { delta: vec![0.3, 0.3], omega_dev: vec![0.0; 2] },
                SwingState { delta: vec![1.0, 1.0], omega_dev: vec![0.0; 2] },
            ],
            delta_max_deg: 0.0,
            unstable: false,
            terminated_early: false,
            blowup_at: None,
            fault_steps: 1,
        };
        assert_eq!(max_angle_separation(&traj), 0.0);
        let mut t2 = traj.clone();
        t2.states[1].delta = vec![0.0, 1.5];
        assert!((max_angle_separation(&t2) - 85.943_669_269_623_49).abs() < 1e-9);
    }

    fn case14_phases(ftype: FaultType) -> (PowerSystem, Vec<MachineInternal>, PhaseMatrices) {
        let sys = PowerSystem::from_texts(include_str!("../data/case14.cdf"), include_str!("../data/dyn14.json")).unwrap();
        let op = solve_power_flow(&sys, &[1.0; 14]).unwrap();
        let ms = init_machine_internals(&sys, &op).unwrap();
        let f = FaultSpec::bolted(FaultTarget::Line { id: "Line_0002_0004".into(), fraction: 0.5 }, ftype);
        let pm = build_phase_matrices(&sys, &op, &f).unwrap();
        (sys, ms, pm)
    }

    #[test]
    fn multi_machine_separation_matches_brute_force() {
        let (sys, ms, pm) = case14_phases(FaultType::LLG);
        let traj = simulate_scenario(&sys, &ms, &pm, 0.15, &SimSettings::default()).unwrap();
        let mut brute: f64 = 0.0;
        for s in &traj.states {
            for i in 0..s.delta.len() {
                for j in 0..s.delta.len() {
                    brute = brute.max((s.delta[i] - s.delta[j]).abs().to_degrees());
                }
            }
        }
        assert_eq!(max_angle_separation(&traj), brute);
        assert_eq!(traj.delta_max_deg, brute);
        assert_eq!(traj.unstable, brute > 360.0);
    }

    #[test]
    fn equilibrium_hold_without_fault() {
        let (sys, ms, mut pm) = case14_phases(FaultType::LLL);
        pm.y_fault = pm.y_pre.clone();
        pm.y_post = pm.y_pre.clone();
        let s = SimSettings { post_fault_horizon: 5.0, ..SimSettings::default() };
        let traj = simulate_scenario(&sys, &ms, &pm, 0.001, &s).unwrap();
        assert_eq!(traj.times.len(), 5002);
        for st in &traj.states {
            for (d, m) in st.delta.iter().zip(&ms) {
                assert!((d - m.delta0).abs().to_degrees() < 0.01);
            }
        }
    }

    #[test]
    fn row_count_without_early_exit() {
        let (sys, ms, pm) = case14_phases(FaultType::LG);
        let s = SimSettings { early_exit: false, ..SimSettings::default() };
        let traj = simulate_scenario(&sys, &ms, &pm, 0.1, &s).unwrap();
        // (0.1 + 5.0) / 0.001 + 1
        assert_eq!(traj.times.len(), 5101);
        let dts: Vec<f64> = traj.times.windows(2).map(|w| w[1] - w[0]).collect();
        assert!(dts.iter().all(|d| *d > 0.0));
    }

    #[test]
    fn fct_must_be_positive() {
        let (sys, ms, pm) = case14_phases(FaultType::LG);
        assert!(simulate_scenario(&sys, &ms, &pm, 0.0, &SimSettings::default()).is_err());
    }
}
