//! Single machine against an infinite bus, expressed as a two-machine
//! reduced network where the second machine has effectively infinite
//! inertia. Used as the integrator benchmark.

use num_complex::Complex64;

use crate::error::Result;
use crate::fault::PhaseMatrices;
use crate::powerflow::MachineInternal;
use crate::sim::{simulate_with_model, SimSettings, SwingModel, Trajectory};
use crate::CMatrix;

/// Inertia standing in for the infinite bus, seconds.
const INFINITE_H: f64 = 1e9;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SmibCase {
    /// Internal EMF behind transient reactance, pu.
    pub e: f64,
    /// Infinite-bus voltage, pu.
    pub v: f64,
    /// Transfer reactance before the fault (machine plus network), pu.
    pub x_pre: f64,
    /// Transfer reactance during the fault; `None` for a bolted terminal
    /// fault that blocks all transfer.
    pub x_fault: Option<f64>,
    /// Transfer reactance after clearing, pu.
    pub x_post: f64,
    pub pm: f64,
    pub h: f64,
    pub d: f64,
    pub f0: f64,
}

impl SmibCase {
    /// X'd = 0.3 feeding two parallel 0.5 pu lines; one line is lost when
    /// the bolted fault at the sending end clears.
    pub fn textbook() -> Self {
        SmibCase { e: 1.2, v: 1.0, x_pre: 0.3 + 0.25, x_fault: None, x_post: 0.3 + 0.5, pm: 0.8, h: 5.0, d: 0.0, f0: 60.0 }
    }

    pub fn omega_s(&self) -> f64 {
        2.0 * std::f64::consts::PI * self.f0
    }

    pub fn p_max(&self, x: Option<f64>) -> f64 {
        x.map_or(0.0, |x| self.e * self.v / x)
    }

    /// Pre-fault equilibrium rotor angle, rad.
    pub fn delta0(&self) -> f64 {
        (self.pm / self.p_max(Some(self.x_pre))).asin()
    }

    pub fn model(&self) -> SwingModel {
        SwingModel { h: vec![self.h, INFINITE_H], d: vec![self.d, 0.0], omega_s: self.omega_s() }
    }

    pub fn internals(&self) -> Vec<MachineInternal> {
        vec![
            MachineInternal { e_mag: self.e, delta0: self.delta0(), pm: self.pm },
            MachineInternal { e_mag: self.v, delta0: 0.0, pm: -self.pm },
        ]
    }

    pub fn phases(&self) -> PhaseMatrices {
        PhaseMatrices {
            y_pre: transfer_matrix(Some(self.x_pre)),
            y_fault: transfer_matrix(self.x_fault),
            y_post: transfer_matrix(Some(self.x_post)),
        }
    }

    pub fn simulate(&self, fct: f64, settings: &SimSettings) -> Result<Trajectory> {
        simulate_with_model(&self.model(), &self.internals(), &self.phases(), fct, settings)
    }

    /// Largest stable clearing time on the `settings.dt` grid, found by
    /// bisection over `[dt, t_hi]`. Assumes `t_hi` is unstable.
    pub fn critical_clearing_time(&self, t_hi: f64, settings: &SimSettings) -> Result<f64> {
        let (mut lo, mut hi) = (1usize, (t_hi / settings.dt).round() as usize);
        let stable = |k: usize| -> Result<bool> { Ok(!self.simulate(k as f64 * settings.dt, settings)?.unstable) };
        if !stable(lo)? {
            return Ok(0.0);
        }
        while hi - lo > 1 {
            let mid = (lo + hi) / 2;
            if stable(mid)? {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        Ok(lo as f64 * settings.dt)
    }
}

/// Lossless two-node network with series reactance `x` (open if `None`).
fn transfer_matrix(x: Option<f64>) -> CMatrix {
    let y = x.map_or(Complex64::new(0.0, 0.0), |x| Complex64::new(0.0, -1.0 / x));
    CMatrix::from_row_slice(2, 2, &[y, -y, -y, y])
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Equal-area critical angle and time for a fault with no transfer.
    fn analytic_cct(c: &SmibCase) -> f64 {
        let p3 = c.p_max(Some(c.x_post));
        let d0 = c.delta0();
        let dmax = std::f64::consts::PI - (c.pm / p3).asin();
        let dc = ((c.pm * (dmax - d0) + p3 * dmax.cos()) / p3).acos();
        (4.0 * c.h * (dc - d0) / (c.omega_s() * c.pm)).sqrt()
    }

    fn settings() -> SimSettings {
        SimSettings { early_exit: true, record: false, ..SimSettings::default() }
    }

    #[test]
    fn equilibrium_angle() {
        let c = SmibCase::textbook();
        let pe = crate::sim::electrical_power(&[c.e, c.v], &c.phases().y_pre, &[c.delta0(), 0.0]);
        assert!((pe[0] - c.pm).abs() < 1e-12);
        assert!((pe[1] + c.pm).abs() < 1e-12);
    }

    #[test]
    fn cct_matches_equal_area() {
        let c = SmibCase::textbook();
        let analytic = analytic_cct(&c);
        let td = c.critical_clearing_time(1.0, &settings()).unwrap();
        assert!((td - analytic).abs() < 0.010, "td {td} analytic {analytic}");
        assert!(!c.simulate(analytic - 0.02, &settings()).unwrap().unstable);
        assert!(c.simulate(analytic + 0.02, &settings()).unwrap().unstable);
    }

    #[test]
    fn step_halving_converges() {
        let c = SmibCase::textbook();
        let fct = analytic_cct(&c) - 0.03;
        let coarse = c.simulate(fct, &settings()).unwrap();
        let fine = c.simulate(fct, &SimSettings { dt: 5e-4, ..settings() }).unwrap();
        assert!(!coarse.unstable);
        assert!((coarse.delta_max_deg - fine.delta_max_deg).abs() < 0.1);
    }

    #[test]
    fn fault_on_energy_is_conserved() {
        let c = SmibCase { x_fault: Some(2.0), ..SmibCase::textbook() };
        let p2 = c.p_max(c.x_fault);
        let s = SimSettings { record: true, early_exit: false, post_fault_horizon: 0.0, ..SimSettings::default() };
        let traj = c.simulate(0.3, &s).unwrap();
        let energy = |st: &crate::sim::SwingState| {
            let d = st.delta[0] - st.delta[1];
            c.h * c.omega_s() * st.omega_dev[0].powi(2) - c.pm * d - p2 * d.cos()
        };
        let w0 = energy(&traj.states[0]);
        let drift = traj.states.iter().map(|st| (energy(st) - w0).abs()).fold(0.0, f64::max);
        assert_eq!(traj.states.len(), 301);
        assert!(drift / w0.abs() < 1e-3, "relative drift {}", drift / w0.abs());
    }

    #[test]
    fn delta_max_grows_with_clearing_time() {
        let c = SmibCase::textbook();
        let cct = analytic_cct(&c);
        let mut prev = 0.0;
        for k in 1..=20 {
            let fct = cct * k as f64 / 21.0;
            let d = c.simulate(fct, &settings()).unwrap().delta_max_deg;
            assert!(d >= prev, "fct {fct}: {d} < {prev}");
            prev = d;
        }
    }

    #[test]
    fn short_fault_stays_near_equilibrium() {
        let c = SmibCase::textbook();
        let t = c.simulate(1e-3, &SimSettings { post_fault_horizon: 0.0, ..settings() }).unwrap();
        assert!((t.delta_max_deg - c.delta0().to_degrees()).abs() < 0.01);
        assert!(!t.unstable);
    }
}
