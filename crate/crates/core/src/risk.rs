//! Risk indices and breaker ranking.
//!
//! A sample's risk is `Pr(fault) * Pr(unstable | fault) * severity`, where
//! severity comes from the transient stability index of the largest rotor
//! angle separation. Elements are ranked by their average risk.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fault::{build_phase_matrices, FaultSpec, FaultTarget, FaultType};
use crate::network::{build_breaker_registry, BreakerRegistry, PowerSystem};
use crate::powerflow::{init_machine_internals, solve_power_flow};
use crate::sampling::{make_scenario, CampaignConfig, CampaignMode, Element, ScenarioSample};
use crate::sim::{simulate_with_model, SimSettings, SwingModel};

/// Instability threshold on the pairwise rotor angle separation, degrees.
pub const DELTA_LIMIT_DEG: f64 = 360.0;

/// Number of discrete fault positions along a line.
pub const LOCATION_CELLS: f64 = 100.0;

/// Transient stability index `(360 - d) / (360 + d)`; negative iff unstable.
pub fn tssi(delta_max_deg: f64) -> f64 {
    (DELTA_LIMIT_DEG - delta_max_deg) / (DELTA_LIMIT_DEG + delta_max_deg)
}

/// Severity `|tssi|` for negative indices, zero otherwise.
pub fn severity(tssi: f64) -> Result<f64> {
    if !(tssi.abs() < 1.0) {
        return Err(Error::Domain(format!("stability index {tssi} outside (-1, 1)")));
    }
    Ok(if tssi < 0.0 { -tssi } else { 0.0 })
}

pub fn instability_indicator(delta_max_deg: f64) -> u8 {
    u8::from(delta_max_deg > DELTA_LIMIT_DEG)
}

/// Occurrence, location and type factors for one sample.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FaultFactors {
    pub occurrence: f64,
    pub location: f64,
    pub ftype: f64,
}

impl FaultFactors {
    pub fn new(mode: CampaignMode, count: usize, ftype: FaultType) -> Result<Self> {
        if count == 0 {
            return Err(Error::Domain("element count must be at least 1".into()));
        }
        let occurrence = 1.0 / count as f64;
        Ok(match mode {
            CampaignMode::LineFaults => FaultFactors { occurrence, location: 1.0 / LOCATION_CELLS, ftype: ftype.probability() },
            CampaignMode::BusFaults => FaultFactors { occurrence, location: 1.0, ftype: ftype.probability() },
            CampaignMode::DeterministicLll => FaultFactors { occurrence: 1.0, location: 1.0, ftype: 1.0 },
        })
    }

    pub fn product(&self) -> f64 {
        self.occurrence * self.location * self.ftype
    }
}

/// Probability of a specific fault: occurrence x location x type.
pub fn fault_probability(mode: CampaignMode, count: usize, ftype: FaultType) -> Result<f64> {
    Ok(FaultFactors::new(mode, count, ftype)?.product())
}

pub fn sample_risk(pr_fault: f64, indicator: u8, severity: f64) -> f64 {
    pr_fault * indicator as f64 * severity
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RiskSample {
    pub index: usize,
    pub ftype: FaultType,
    pub pr_occurrence: f64,
    pub pr_location: f64,
    pub pr_type: f64,
    pub pr_instability: u8,
    pub tssi: f64,
    pub severity: f64,
    pub r_i: f64,
    pub delta_max_deg: f64,
    pub blowup: bool,
}

impl RiskSample {
    pub fn new(index: usize, ftype: FaultType, factors: FaultFactors, delta_max_deg: f64, blowup: bool) -> Result<Self> {
        if !(delta_max_deg >= 0.0) || !delta_max_deg.is_finite() {
            return Err(Error::Domain(format!("delta_max {delta_max_deg} must be finite and non-negative")));
        }
        let t = tssi(delta_max_deg);
        let sev = severity(t)?;
        let ind = instability_indicator(delta_max_deg);
        Ok(RiskSample {
            index,
            ftype,
            pr_occurrence: factors.occurrence,
            pr_location: factors.location,
            pr_type: factors.ftype,
            pr_instability: ind,
            tssi: t,
            severity: sev,
            r_i: sample_risk(factors.occurrence * factors.location * factors.ftype, ind, sev),
            delta_max_deg,
            blowup,
        })
    }

    pub fn pr_fault(&self) -> f64 {
        self.pr_occurrence * self.pr_location * self.pr_type
    }

    /// Recomputed risk equals the stored value, the sign conditions agree
    /// and the risk lies in `[0, pr_fault)`.
    pub fn is_consistent(&self) -> bool {
        let recomputed = sample_risk(self.pr_fault(), self.pr_instability, self.severity);
        let unstable = self.delta_max_deg > DELTA_LIMIT_DEG;
        let coupled = (self.severity > 0.0) == (self.pr_instability == 1)
            && (self.pr_instability == 1) == (self.tssi < 0.0)
            && (self.tssi < 0.0) == unstable;
        recomputed.to_bits() == self.r_i.to_bits() && coupled && self.r_i >= 0.0 && self.r_i < self.pr_fault()
    }
}

/// Mean and standard error (sample standard deviation over `sqrt(N)`).
pub fn average_risk(values: &[f64]) -> Result<(f64, f64)> {
    if values.is_empty() {
        return Err(Error::Domain("average of an empty sample".into()));
    }
    // Welford update
    let (mut mean, mut m2) = (0.0, 0.0);
    for (k, &x) in values.iter().enumerate() {
        let d = x - mean;
        mean += d / (k + 1) as f64;
        m2 += d * (x - mean);
    }
    let n = values.len() as f64;
    let stderr = if values.len() > 1 { (m2 / (n - 1.0)).sqrt() / n.sqrt() } else { 0.0 };
    Ok((mean, stderr))
}

/// Per-type instability probabilities `N_u,type / N`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct InstabilityProbabilities {
    pub lg: f64,
    pub ll: f64,
    pub llg: f64,
    pub lll: f64,
}

impl InstabilityProbabilities {
    pub fn total(&self) -> f64 {
        self.lg + self.ll + self.llg + self.lll
    }
}

pub fn unstable_counts(samples: &[RiskSample]) -> [usize; 4] {
    let mut c = [0; 4];
    for s in samples.iter().filter(|s| s.pr_instability == 1) {
        c[s.ftype.index()] += 1;
    }
    c
}

pub fn instability_probabilities(samples: &[RiskSample]) -> Result<InstabilityProbabilities> {
    if samples.is_empty() {
        return Err(Error::Domain("no samples".into()));
    }
    let c = unstable_counts(samples);
    let n = samples.len() as f64;
    let p = |t: FaultType| c[t.index()] as f64 / n;
    Ok(InstabilityProbabilities {
        lg: p(FaultType::LG),
        ll: p(FaultType::LL),
        llg: p(FaultType::LLG),
        lll: p(FaultType::LLL),
    })
}

/// Result of simulating one scenario.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalOutcome {
    pub delta_max_deg: f64,
    pub blowup: bool,
}

/// Maps a scenario to its largest angle separation. Errors classed as
/// rejections (see [`is_rejection`]) drop the sample; others abort.
pub trait ScenarioEvaluator: Sync {
    fn evaluate(&self, sample: &ScenarioSample) -> Result<EvalOutcome>;
}

impl<F> ScenarioEvaluator for F
where
    F: Fn(&ScenarioSample) -> Result<EvalOutcome> + Sync,
{
    fn evaluate(&self, sample: &ScenarioSample) -> Result<EvalOutcome> {
        self(sample)
    }
}

/// Scenario failures that invalidate a single draw rather than the run:
/// an unsolvable sampled operating point or a trip that islands machines.
pub fn is_rejection(err: &Error) -> bool {
    matches!(err, Error::NonConvergence { .. } | Error::SingularJacobian(_) | Error::MachineIslanded { .. })
}

/// Full chain: power flow, machine internals, fault networks, simulation.
pub struct TimeDomainEvaluator<'a> {
    pub system: &'a PowerSystem,
    pub model: SwingModel,
    pub settings: SimSettings,
}

impl<'a> TimeDomainEvaluator<'a> {
    pub fn new(system: &'a PowerSystem) -> Self {
        let settings = SimSettings { record: false, ..SimSettings::default() };
        TimeDomainEvaluator { system, model: SwingModel::from_system(system), settings }
    }
}

pub fn fault_spec_for(sample: &ScenarioSample) -> FaultSpec {
    let target = match &sample.element {
        Element::Line(id) => FaultTarget::Line {
            id: id.clone(),
            fraction: sample.location_pct.map_or(0.5, |p| p as f64 / LOCATION_CELLS),
        },
        Element::Bus(b) => FaultTarget::Bus(*b),
    };
    FaultSpec::bolted(target, sample.ftype)
}

impl ScenarioEvaluator for TimeDomainEvaluator<'_> {
    fn evaluate(&self, sample: &ScenarioSample) -> Result<EvalOutcome> {
        let op = solve_power_flow(self.system, &sample.load_multipliers)?;
        let internals = init_machine_internals(self.system, &op)?;
        let phases = build_phase_matrices(self.system, &op, &fault_spec_for(sample))?;
        let traj = simulate_with_model(&self.model, &internals, &phases, sample.fct_s, &self.settings)?;
        Ok(EvalOutcome { delta_max_deg: traj.delta_max_deg, blowup: traj.blowup_at.is_some() })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankingEntry {
    pub priority_rank: usize,
    pub element: Element,
    pub breakers: Vec<String>,
    pub r_a: f64,
    pub stderr: f64,
    pub n_samples: usize,
    pub n_rejected: usize,
    pub n_unstable: usize,
    /// Unstable counts per fault type in the order LG, LLG, LL, LLL.
    pub n_unstable_by_type: [usize; 4],
    pub probabilities: InstabilityProbabilities,
    pub n_blowups: usize,
}

/// Element whose every scenario was rejected; not ranked.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlaggedElement {
    pub element: Element,
    pub breakers: Vec<String>,
    pub n_rejected: usize,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankingReport {
    pub mode: CampaignMode,
    pub n_samples: usize,
    pub entries: Vec<RankingEntry>,
    pub flagged: Vec<FlaggedElement>,
    pub fct_clamps: usize,
    pub load_clamps: usize,
}

impl RankingReport {
    pub fn entry(&self, element: &Element) -> Option<&RankingEntry> {
        self.entries.iter().find(|e| &e.element == element)
    }
}

/// Elements a campaign iterates over: in-service lines, or buses that own
/// at least one line breaker.
pub fn campaign_elements(system: &PowerSystem, mode: CampaignMode) -> Vec<Element> {
    match mode {
        CampaignMode::LineFaults => system.lines().map(|l| Element::Line(l.id.clone())).collect(),
        _ => build_breaker_registry(system).buses().into_iter().map(Element::Bus).collect(),
    }
}

fn breakers_for(registry: &BreakerRegistry, element: &Element) -> Vec<String> {
    let owned: Vec<&str> = match element {
        Element::Line(id) => registry.for_branch(id),
        Element::Bus(b) => registry.for_bus(*b),
    };
    owned.into_iter().map(str::to_owned).collect()
}

fn thread_pool(threads: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::Domain(format!("cannot start worker pool: {e}")))
}

/// Run `config.n_samples` scenarios for every element and rank by average
/// risk. `threads = 0` uses every available core; results do not depend on
/// the thread count.
pub fn rank_elements(
    system: &PowerSystem,
    config: &CampaignConfig,
    evaluator: &dyn ScenarioEvaluator,
    threads: usize,
) -> Result<RankingReport> {
    config.validate()?;
    let registry = build_breaker_registry(system);
    let elements = campaign_elements(system, config.mode);
    if elements.is_empty() {
        return Err(Error::Domain("no elements to rank".into()));
    }
    let n = if config.mode == CampaignMode::DeterministicLll { 1 } else { config.n_samples };
    let count = elements.len();
    let n_buses = system.n_buses();

    let jobs: Vec<(usize, usize)> = (0..count).flat_map(|e| (0..n).map(move |i| (e, i))).collect();
    let pool = thread_pool(threads)?;
    let outcomes: Vec<(ScenarioSample, Result<EvalOutcome>)> = pool.install(|| {
        jobs.par_iter()
            .map(|&(e, i)| {
                let s = make_scenario(config, n_buses, &elements[e], i);
                let r = evaluator.evaluate(&s);
                (s, r)
            })
            .collect()
    });

    let mut entries = Vec::new();
    let mut flagged = Vec::new();
    let (mut fct_clamps, mut load_clamps) = (0, 0);
    for (element, chunk) in elements.iter().zip(outcomes.chunks(n)) {
        let mut samples = Vec::with_capacity(n);
        let mut rejected = Vec::new();
        for (s, r) in chunk {
            fct_clamps += usize::from(s.fct_clamped);
            load_clamps += s.loads_clamped;
            match r {
                Ok(o) => {
                    let factors = FaultFactors::new(config.mode, count, s.ftype)?;
                    samples.push(RiskSample::new(s.index, s.ftype, factors, o.delta_max_deg, o.blowup)?);
                }
                Err(err) if is_rejection(err) => rejected.push(err.to_string()),
                Err(err) => return Err(Error::Domain(format!("{element} sample {}: {err}", s.index))),
            }
        }
        let breakers = breakers_for(&registry, element);
        if samples.is_empty() {
            flagged.push(FlaggedElement {
                element: element.clone(),
                breakers,
                n_rejected: rejected.len(),
                reason: rejected.first().cloned().unwrap_or_default(),
            });
            continue;
        }
        let risks: Vec<f64> = samples.iter().map(|s| s.r_i).collect();
        let (r_a, stderr) = average_risk(&risks)?;
        let by_type = unstable_counts(&samples);
        entries.push(RankingEntry {
            priority_rank: 0,
            element: element.clone(),
            breakers,
            r_a,
            stderr,
            n_samples: samples.len(),
            n_rejected: rejected.len(),
            n_unstable: by_type.iter().sum(),
            n_unstable_by_type: by_type,
            probabilities: instability_probabilities(&samples)?,
            n_blowups: samples.iter().filter(|s| s.blowup).count(),
        });
    }
    rank_entries(&mut entries);
    Ok(RankingReport { mode: config.mode, n_samples: n, entries, flagged, fct_clamps, load_clamps })
}

/// Sort by descending average risk, ties by element id, and number from 1.
pub fn rank_entries(entries: &mut [RankingEntry]) {
    entries.sort_by(|a, b| b.r_a.total_cmp(&a.r_a).then_with(|| a.element.cmp(&b.element)));
    for (k, e) in entries.iter_mut().enumerate() {
        e.priority_rank = k + 1;
    }
}

/// One bolted three-phase fault per breaker-owning bus at forecast load and
/// mean clearing time, with unit fault probability.
pub fn rank_deterministic_lll(
    system: &PowerSystem,
    config: &CampaignConfig,
    evaluator: &dyn ScenarioEvaluator,
    threads: usize,
) -> Result<RankingReport> {
    let det = CampaignConfig { mode: CampaignMode::DeterministicLll, n_samples: 1, ..config.clone() };
    rank_elements(system, &det, evaluator, threads)
}
