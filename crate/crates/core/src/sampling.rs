//! Monte-Carlo scenario generation.
//!
//! Every scenario owns a generator derived from `(seed, element, index)`, so
//! a sample can be regenerated in isolation and results never depend on the
//! order or thread in which samples are drawn.

use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::fault::FaultType;
use crate::network::bus_label;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CampaignMode {
    LineFaults,
    BusFaults,
    DeterministicLll,
}

/// Campaign parameters; JSON keys match the field names.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CampaignConfig {
    pub n_samples: usize,
    pub seed: u64,
    pub mode: CampaignMode,
    pub clamp_fct_min: f64,
    pub clamp_load_min: f64,
    pub fct_mean: f64,
    pub fct_sigma: f64,
    /// Load standard deviation as a fraction of each bus mean.
    pub load_sigma: f64,
}

impl Default for CampaignConfig {
    fn default() -> Self {
        CampaignConfig {
            n_samples: 2401,
            seed: 42,
            mode: CampaignMode::LineFaults,
            clamp_fct_min: 0.05,
            clamp_load_min: 0.0,
            fct_mean: 0.9,
            fct_sigma: 0.1,
            load_sigma: 0.1,
        }
    }
}

impl CampaignConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_samples < 1 {
            return Err(Error::Domain("n_samples must be at least 1".into()));
        }
        if !(self.fct_sigma >= 0.0 && self.load_sigma >= 0.0 && self.fct_mean > 0.0) {
            return Err(Error::Domain("invalid FCT or load distribution parameters".into()));
        }
        if !(self.clamp_fct_min > 0.0 && self.clamp_load_min >= 0.0) {
            return Err(Error::Domain("clamps must be non-negative (FCT floor positive)".into()));
        }
        Ok(())
    }
}

/// Element a campaign conditions on.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Element {
    Line(String),
    Bus(u32),
}

impl fmt::Display for Element {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Element::Line(id) => f.write_str(id),
            Element::Bus(b) => f.write_str(&bus_label(*b)),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSample {
    pub index: usize,
    pub element: Element,
    /// Fault position along the line in percent, line mode only.
    pub location_pct: Option<u8>,
    pub ftype: FaultType,
    pub load_multipliers: Vec<f64>,
    pub fct_s: f64,
    pub fct_clamped: bool,
    pub loads_clamped: usize,
}

/// Cochran sample size `ceil(z^2 p (1 - p) / e^2)` with the two-sided
/// normal quantile for `confidence`.
pub fn cochran_size(confidence: f64, margin: f64, p: f64) -> Result<usize> {
    if !(margin > 0.0 && margin < 1.0) {
        return Err(Error::Domain(format!("margin must lie in (0, 1), got {margin}")));
    }
    if !(p > 0.0 && p < 1.0) || !(confidence > 0.0 && confidence < 1.0) {
        return Err(Error::Domain("confidence and p must lie in (0, 1)".into()));
    }
    let z = Normal::standard().inverse_cdf(1.0 - (1.0 - confidence) / 2.0);
    Ok((z * z * p * (1.0 - p) / (margin * margin)).ceil() as usize)
}

/// Inverse CDF over the fault-type PMF.
pub fn fault_type_from_uniform(u: f64) -> FaultType {
    let mut acc = 0.0;
    for t in FaultType::ALL {
        acc += t.probability();
        if u < acc {
            return t;
        }
    }
    FaultType::LLL
}

pub fn sample_fault_type(rng: &mut impl Rng) -> FaultType {
    fault_type_from_uniform(rng.random::<f64>())
}

/// Uniform line number in `1..=n_lines`.
pub fn sample_fault_line(rng: &mut impl Rng, n_lines: usize) -> Result<usize> {
    if n_lines == 0 {
        return Err(Error::Domain("no lines to fault".into()));
    }
    Ok(rng.random_range(1..=n_lines))
}

/// Uniform integer percent in `1..=100`.
pub fn sample_fault_location(rng: &mut impl Rng) -> u8 {
    rng.random_range(1..=100)
}

/// Per-bus multipliers `X_i / mu_i ~ N(1, load_sigma)`, clamped below.
/// Returns the multipliers and how many were clamped.
pub fn sample_loads(rng: &mut impl Rng, n_buses: usize, config: &CampaignConfig) -> (Vec<f64>, usize) {
    let mut clamped = 0;
    let m = (0..n_buses)
        .map(|_| {
            let z: f64 = rng.sample(StandardNormal);
            let x = 1.0 + config.load_sigma * z;
            if x < config.clamp_load_min {
                clamped += 1;
                config.clamp_load_min
            } else {
                x
            }
        })
        .collect();
    (m, clamped)
}

/// Clearing time `~ N(fct_mean, fct_sigma)`, clamped at `clamp_fct_min`.
pub fn sample_fct(rng: &mut impl Rng, config: &CampaignConfig) -> (f64, bool) {
    let z: f64 = rng.sample(StandardNormal);
    clamp_fct(config.fct_mean + config.fct_sigma * z, config)
}

pub fn clamp_fct(raw: f64, config: &CampaignConfig) -> (f64, bool) {
    if raw < config.clamp_fct_min {
        (config.clamp_fct_min, true)
    } else {
        (raw, false)
    }
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

fn fnv1a(bytes: &[u8]) -> u64 {
    bytes.iter().fold(0xcbf2_9ce4_8422_2325, |h, b| (h ^ *b as u64).wrapping_mul(0x0100_0000_01b3))
}

/// Independent generator for one `(seed, element, index)` triple.
pub fn scenario_rng(seed: u64, element: &Element, index: usize) -> ChaCha8Rng {
    let mut state = splitmix64(seed) ^ fnv1a(element.to_string().as_bytes());
    state = splitmix64(state) ^ splitmix64(index as u64 ^ 0xA076_1D64_78BD_642F);
    let mut key = [0u8; 32];
    for chunk in key.chunks_mut(8) {
        state = splitmix64(state);
        chunk.copy_from_slice(&state.to_le_bytes());
    }
    ChaCha8Rng::from_seed(key)
}

/// Draw scenario `index` for `element`. Deterministic mode ignores the
/// generator and returns forecast loads, the mean clearing time and a
/// three-phase fault.
pub fn make_scenario(config: &CampaignConfig, n_buses: usize, element: &Element, index: usize) -> ScenarioSample {
    if config.mode == CampaignMode::DeterministicLll {
        return ScenarioSample {
            index,
            element: element.clone(),
            location_pct: None,
            ftype: FaultType::LLL,
            load_multipliers: vec![1.0; n_buses],
            fct_s: config.fct_mean,
            fct_clamped: false,
            loads_clamped: 0,
        };
    }
    let mut rng = scenario_rng(config.seed, element, index);
    let ftype = sample_fault_type(&mut rng);
    let location = sample_fault_location(&mut rng);
    let (fct_s, fct_clamped) = sample_fct(&mut rng, config);
    let (load_multipliers, loads_clamped) = sample_loads(&mut rng, n_buses, config);
    ScenarioSample {
        index,
        element: element.clone(),
        location_pct: matches!(element, Element::Line(_)).then_some(location),
        ftype,
        load_multipliers,
        fct_s,
        fct_clamped,
        loads_clamped,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rayon::prelude::*;

    #[test]
    fn cochran_values() {
        assert_eq!(cochran_size(0.95, 0.02, 0.5).unwrap(), 2401);
        assert_eq!(cochran_size(0.95, 0.05, 0.5).unwrap(), 385);
        assert_eq!(cochran_size(0.95, 0.10, 0.5).unwrap(), 97);
        assert!(cochran_size(0.95, 0.0, 0.5).is_err());
        assert!(cochran_size(0.95, 0.02, 1.0).is_err());
    }

    #[test]
    fn inverse_cdf_edges() {
        assert_eq!(fault_type_from_uniform(0.0), FaultType::LG);
        assert_eq!(fault_type_from_uniform(0.6999), FaultType::LG);
        assert_eq!(fault_type_from_uniform(0.7), FaultType::LLG);
        assert_eq!(fault_type_from_uniform(0.85), FaultType::LL);
        assert_eq!(fault_type_from_uniform(0.95), FaultType::LLL);
        assert_eq!(fault_type_from_uniform(0.99), FaultType::LLL);
    }

    #[test]
    fn fault_type_frequencies() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let n = 100_000;
        let mut counts = [0usize; 4];
        for _ in 0..n {
            counts[sample_fault_type(&mut rng).index()] += 1;
        }
        for t in FaultType::ALL {
            let f = counts[t.index()] as f64 / n as f64;
            assert!((f - t.probability()).abs() < 0.01, "{t}: {f}");
        }
    }

    #[test]
    fn line_draws_uniform() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        assert!((0..100).all(|_| sample_fault_line(&mut rng, 1).unwrap() == 1));
        assert!(sample_fault_line(&mut rng, 0).is_err());
        let n = 100_000;
        let mut counts = [0f64; 16];
        for _ in 0..n {
            counts[sample_fault_line(&mut rng, 16).unwrap() - 1] += 1.0;
        }
        let e = n as f64 / 16.0;
        let chi2: f64 = counts.iter().map(|c| (c - e).powi(2) / e).sum();
        // 15 dof, 99.9% quantile
        assert!(chi2 < 37.7, "chi2 = {chi2}");
    }

    #[test]
    fn location_support_and_mean() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let n = 100_000;
        let mut sum = 0.0;
        for _ in 0..n {
            let p = sample_fault_location(&mut rng);
            assert!((1..=100).contains(&p));
            sum += p as f64;
        }
        assert!((sum / n as f64 - 50.5).abs() < 0.5);
    }

    #[test]
    fn fct_moments_and_clamp() {
        let cfg = CampaignConfig::default();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let xs: Vec<f64> = (0..100_000).map(|_| sample_fct(&mut rng, &cfg).0).collect();
        let mean = xs.iter().sum::<f64>() / xs.len() as f64;
        let sd = (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (xs.len() - 1) as f64).sqrt();
        assert!((mean - 0.9).abs() < 0.005);
        assert!((sd - 0.1).abs() < 0.005);
        assert_eq!(clamp_fct(-0.2, &cfg), (0.05, true));
        let fixed = CampaignConfig { fct_sigma: 0.0, load_sigma: 0.0, ..cfg };
        assert!((0..100).all(|_| sample_fct(&mut rng, &fixed).0 == 0.9));
        assert!(sample_loads(&mut rng, 14, &fixed).0.iter().all(|m| *m == 1.0));
    }

    #[test]
    fn scenarios_are_reproducible_and_order_free() {
        let cfg = CampaignConfig::default();
        let el = Element::Line("Line_0006_0013".into());
        assert_eq!(make_scenario(&cfg, 14, &el, 7), make_scenario(&cfg, 14, &el, 7));
        let serial: Vec<_> = (0..2401).map(|i| make_scenario(&cfg, 14, &el, i)).collect();
        let parallel: Vec<_> = (0..2401).into_par_iter().rev().map(|i| make_scenario(&cfg, 14, &el, i)).collect();
        let mut parallel = parallel;
        parallel.reverse();
        assert_eq!(serial, parallel);
        for i in 0..serial.len() {
            for j in i + 1..serial.len().min(i + 50) {
                assert_ne!(serial[i].load_multipliers, serial[j].load_multipliers);
            }
        }
        let other = make_scenario(&cfg, 14, &Element::Line("Line_0009_0014".into()), 7);
        assert_ne!(other.load_multipliers, serial[7].load_multipliers);
    }

    #[test]
    fn deterministic_mode() {
        let cfg = CampaignConfig { mode: CampaignMode::DeterministicLll, ..CampaignConfig::default() };
        let s = make_scenario(&cfg, 14, &Element::Bus(6), 0);
        assert_eq!(s.ftype, FaultType::LLL);
        assert_eq!(s.fct_s, 0.9);
        assert!(s.load_multipliers.iter().all(|m| *m == 1.0));
        assert_eq!(s.location_pct, None);
    }

    #[test]
    fn config_json_round_trip_with_defaults() {
        let cfg: CampaignConfig = serde_json::from_str(r#"{"n_samples": 10, "mode": "bus_faults"}"#).unwrap();
        assert_eq!(cfg.n_samples, 10);
        assert_eq!(cfg.mode, CampaignMode::BusFaults);
        assert_eq!(cfg.fct_mean, 0.9);
        let back: CampaignConfig = serde_json::from_str(&serde_json::to_string(&cfg).unwrap()).unwrap();
        assert_eq!(back, cfg);
        assert!(CampaignConfig { n_samples: 0, ..cfg }.validate().is_err());
    }
}
