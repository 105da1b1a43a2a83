//! Report emission: ranking CSV and JSON, run manifest, trajectory dumps.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::risk::RankingReport;
use crate::sampling::CampaignConfig;
use crate::sim::Trajectory;

pub const CSV_HEADER: &str = "priority_rank,element,breakers,r_a_percent,stderr_percent,n_unstable,n_lg,n_llg,n_ll,n_lll";

/// Provenance embedded in every report. Timing and thread count are only
/// filled in for the separate run record so reports stay byte-identical
/// across machines and worker counts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub system: String,
    pub seed: u64,
    pub config: CampaignConfig,
    /// Rejected scenarios per element.
    pub rejected: BTreeMap<String, usize>,
    pub fct_clamps: usize,
    pub load_clamps: usize,
    pub blowups: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub wall_clock_s: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub threads: Option<usize>,
}

impl RunManifest {
    pub fn new(system: &str, config: &CampaignConfig, report: &RankingReport) -> Self {
        let rejected = report
            .entries
            .iter()
            .map(|e| (e.element.to_string(), e.n_rejected))
            .chain(report.flagged.iter().map(|f| (f.element.to_string(), f.n_rejected)))
            .collect();
        RunManifest {
            tool: env!("CARGO_PKG_NAME").into(),
            version: env!("CARGO_PKG_VERSION").into(),
            system: system.into(),
            seed: config.seed,
            config: config.clone(),
            rejected,
            fct_clamps: report.fct_clamps,
            load_clamps: report.load_clamps,
            blowups: report.entries.iter().map(|e| e.n_blowups).sum(),
            wall_clock_s: None,
            threads: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportDocument {
    pub manifest: RunManifest,
    pub report: RankingReport,
}

/// One CSV line as text fields, the unit of the CSV round trip.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CsvRow {
    pub priority_rank: usize,
    pub element: String,
    pub breakers: Vec<String>,
    pub r_a_percent: String,
    pub stderr_percent: String,
    pub n_unstable: usize,
    pub n_by_type: [usize; 4],
}

/// `value` in percent with four significant digits, trailing zeros removed.
pub fn format_percent(value: f64) -> String {
    let pct = value * 100.0;
    if pct == 0.0 || !pct.is_finite() {
        return format!("{}", if pct == 0.0 { 0.0 } else { pct });
    }
    let magnitude = pct.abs().log10().floor() as i32;
    let decimals = (3 - magnitude).max(0) as usize;
    let s = format!("{pct:.decimals$}");
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        s
    }
}

pub fn csv_rows(report: &RankingReport) -> Vec<CsvRow> {
    report
        .entries
        .iter()
        .map(|e| CsvRow {
            priority_rank: e.priority_rank,
            element: e.element.to_string(),
            breakers: e.breakers.clone(),
            r_a_percent: format_percent(e.r_a),
            stderr_percent: format_percent(e.stderr),
            n_unstable: e.n_unstable,
            n_by_type: e.n_unstable_by_type,
        })
        .collect()
}

pub fn render_csv(report: &RankingReport) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for r in csv_rows(report) {
        let breakers = if r.breakers.is_empty() { "-".to_string() } else { r.breakers.join(";") };
        let [lg, llg, ll, lll] = r.n_by_type;
        writeln!(
            out,
            "{},{},{},{},{},{},{lg},{llg},{ll},{lll}",
            r.priority_rank, r.element, breakers, r.r_a_percent, r.stderr_percent, r.n_unstable
        )
        .unwrap();
    }
    out
}

pub fn parse_csv(text: &str) -> Result<Vec<CsvRow>> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h == CSV_HEADER => {}
        _ => return Err(Error::Parse { line: 1, msg: "unexpected CSV header".into() }),
    }
    lines
        .filter(|(_, l)| !l.is_empty())
        .map(|(i, l)| {
            let bad = |msg: &str| Error::Parse { line: i + 1, msg: msg.into() };
            let f: Vec<&str> = l.split(',').collect();
            if f.len() != 10 {
                return Err(bad("expected 10 fields"));
            }
            let int = |s: &str| s.parse::<usize>().map_err(|_| bad("bad integer"));
            Ok(CsvRow {
                priority_rank: int(f[0])?,
                element: f[1].into(),
                breakers: if f[2] == "-" { Vec::new() } else { f[2].split(';').map(String::from).collect() },
                r_a_percent: f[3].into(),
                stderr_percent: f[4].into(),
                n_unstable: int(f[5])?,
                n_by_type: [int(f[6])?, int(f[7])?, int(f[8])?, int(f[9])?],
            })
        })
        .collect()
}

pub fn render_json(doc: &ReportDocument) -> Result<String> {
    let mut s = serde_json::to_string_pretty(doc)?;
    s.push('\n');
    Ok(s)
}

/// Fixed-width table of the `k` highest-ranked entries.
pub fn top_table(report: &RankingReport, k: usize) -> String {
    let mut out = format!("{:>4}  {:<22} {:>12} {:>12} {:>8}  {}\n", "rank", "element", "R_A [%]", "stderr [%]", "unstable", "breakers");
    for e in report.entries.iter().take(k) {
        let breakers = if e.breakers.is_empty() { "-".into() } else { e.breakers.join(";") };
        writeln!(
            out,
            "{:>4}  {:<22} {:>12} {:>12} {:>8}  {}",
            e.priority_rank,
            e.element.to_string(),
            format_percent(e.r_a),
            format_percent(e.stderr),
            e.n_unstable,
            breakers
        )
        .unwrap();
    }
    out
}

/// Time series of machine angles in degrees, one column per machine, with
/// the verdict as trailing comment lines.
pub fn render_trajectory(traj: &Trajectory, machine_buses: &[u32]) -> String {
    let mut out = String::from("t_s");
    for b in machine_buses {
        write!(out, ",delta_deg_{b}").unwrap();
    }
    out.push('\n');
    for (t, s) in traj.times.iter().zip(&traj.states) {
        write!(out, "{t}").unwrap();
        for d in &s.delta {
            write!(out, ",{}", d.to_degrees()).unwrap();
        }
        out.push('\n');
    }
    if let Some(t) = traj.blowup_at {
        writeln!(out, "# blowup_at_s={t}").unwrap();
    }
    writeln!(out, "# delta_max_deg={}", traj.delta_max_deg).unwrap();
    writeln!(out, "# unstable={}", traj.unstable).unwrap();
    out
}
