//! End-to-end checks of the library on the shipped 14-bus case.

use cbrisk_core::network::PowerSystem;
use cbrisk_core::powerflow::solve_power_flow;
use cbrisk_core::report::{parse_csv, render_csv, render_json, ReportDocument, RunManifest};
use cbrisk_core::risk::{rank_deterministic_lll, rank_elements, TimeDomainEvaluator};
use cbrisk_core::sampling::{CampaignConfig, CampaignMode, Element};

fn case14() -> PowerSystem {
    let cdf = include_str!("../data/case14.cdf");
    let dyn_data = include_str!("../data/dyn14.json");
    PowerSystem::from_texts(cdf, dyn_data).expect("shipped case loads")
}

fn small_config(mode: CampaignMode) -> CampaignConfig {
    CampaignConfig { n_samples: 8, mode, ..CampaignConfig::default() }
}

#[test]
fn base_power_flow_matches_forecast_load() {
    let system = case14();
    let op = solve_power_flow(&system, &vec![1.0; system.n_buses()]).unwrap();
    assert!(op.converged);
    assert!(op.max_mismatch < 1e-8);
    let load = op.total_load() * 100.0;
    assert!((load.re - 259.0).abs() < 1e-6);
    assert!((load.im - 81.3).abs() < 1e-6);
}

#[test]
fn line_campaign_ranks_every_line_and_round_trips() {
    let system = case14();
    let config = small_config(CampaignMode::LineFaults);
    let eval = TimeDomainEvaluator::new(&system);
    let report = rank_elements(&system, &config, &eval, 2).unwrap();

    assert_eq!(report.entries.len(), 16);
    let ranks: Vec<usize> = report.entries.iter().map(|e| e.priority_rank).collect();
    assert_eq!(ranks, (1..=16).collect::<Vec<_>>());
    assert!(report.entries.windows(2).all(|w| w[0].r_a >= w[1].r_a));
    let breakers: usize = report.entries.iter().map(|e| e.breakers.len()).sum();
    assert_eq!(breakers, 32);
    for e in &report.entries {
        assert_eq!(e.n_samples + e.n_rejected, 8);
        assert!(e.r_a >= 0.0 && e.r_a <= 1.0);
        assert_eq!(e.n_unstable, e.n_unstable_by_type.iter().sum::<usize>());
    }

    let rows = parse_csv(&render_csv(&report)).unwrap();
    assert_eq!(rows.len(), 16);
    assert_eq!(rows[0].element, report.entries[0].element.to_string());

    let doc = ReportDocument { manifest: RunManifest::new("case14", &config, &report), report };
    let back: ReportDocument = serde_json::from_str(&render_json(&doc).unwrap()).unwrap();
    assert_eq!(back, doc);
}

#[test]
fn thread_count_does_not_change_results() {
    let system = case14();
    let config = small_config(CampaignMode::BusFaults);
    let eval = TimeDomainEvaluator::new(&system);
    let one = rank_elements(&system, &config, &eval, 1).unwrap();
    let three = rank_elements(&system, &config, &eval, 3).unwrap();
    assert_eq!(render_csv(&one), render_csv(&three));
    assert_eq!(one, three);
}

#[test]
fn deterministic_bus_ranking_covers_breaker_buses() {
    let system = case14();
    let eval = TimeDomainEvaluator::new(&system);
    let report = rank_deterministic_lll(&system, &CampaignConfig::default(), &eval, 0).unwrap();
    assert_eq!(report.entries.len(), 12);
    for bus in [7, 8] {
        assert!(report.entry(&Element::Bus(bus)).is_none());
    }
    for e in &report.entries {
        assert_eq!(e.n_samples + e.n_rejected, 1);
        assert_eq!(e.n_unstable_by_type[..3], [0, 0, 0]);
    }
}
