use std::sync::OnceLock;

use ocm_core::replication::{
    derive_spec, paper_scenarios, run_comparison, ComparisonReport, ExperimentConfig, CLASSICAL, OCM, OCM_PNR_COMPOSITE, QL,
};
use ocm_core::Execution;

fn report() -> &'static ComparisonReport {
    static REPORT: OnceLock<ComparisonReport> = OnceLock::new();
    REPORT.get_or_init(|| run_comparison(&ExperimentConfig::default(), 7, Execution::default()).unwrap())
}

#[test]
fn four_converged_fits() {
    let r = report();
    assert_eq!(r.scenarios.len(), 4);
    for s in &r.scenarios {
        let f = s.fit.as_ref().unwrap_or_else(|| panic!("{}: {:?}", s.name, s.fit_error));
        assert!(f.converged, "{}", s.name);
    }
}

#[test]
fn shared_state_across_presets() {
    let cfg = ExperimentConfig::default();
    let spec = derive_spec(&cfg).unwrap();
    assert!((spec.kappa0() - 4.553).abs() < 1e-3);
    let photons: Vec<u32> = paper_scenarios(&cfg).iter().map(|s| s.photon_number).collect();
    assert_eq!(photons, [1, 2, 2, 2]);
    let d = &report().derived;
    assert_eq!(d.kappa0_per_mm, spec.kappa0());
    assert_eq!(d.delta_kappa_per_mm, spec.delta_kappa());
    assert!(d.orthogonality_warning);
}

#[test]
fn period_ratio_is_two() {
    let r = report().period_ratios[&format!("{CLASSICAL}/{QL}")];
    assert!((r.value - 2.0).abs() <= 0.05, "{r:?}");
    assert!(r.uncertainty > 0.0);
}

#[test]
fn ocm_and_ql_periods_agree_within_joint_uncertainty() {
    let (q, o) = (report().fit(QL).unwrap(), report().fit(OCM).unwrap());
    let joint = (q.parameter_uncertainties.period.powi(2) + o.parameter_uncertainties.period.powi(2)).sqrt();
    assert!((q.period - o.period).abs() <= 3.0 * joint, "{} vs {} (sigma {joint})", q.period, o.period);
}

#[test]
fn ratio_table_carries_predictions_and_uncertainties() {
    let r = report();
    let row = |name: &str| r.ratio_table.iter().find(|row| row.name.starts_with(name)).unwrap();
    assert!((row("PNR/NPA").predicted.value - 3.3).abs() < 1e-9);
    assert!((row("PNR_COMPOSITE/QL [multiset_uniform]").predicted.value - 5.6).abs() < 1e-9);
    for row in &r.ratio_table {
        assert!(row.predicted.uncertainty >= 0.0);
        if let Some(s) = row.simulated {
            assert!(s.uncertainty > 0.0 && s.uncertainty.is_finite(), "{}", row.name);
        }
    }
    for ratio in r.period_ratios.values().chain(r.amplitude_ratios.values()).chain(r.acceptance_rates.values()) {
        assert!(ratio.uncertainty.is_finite() && ratio.uncertainty > 0.0);
    }
}

#[test]
fn composite_amplitude_follows_the_pair_correlation_of_the_state() {
    let r = report();
    let sim = r.amplitude_ratios[&format!("{OCM_PNR_COMPOSITE}/{QL}")];
    let predicted = r
        .ratio_table
        .iter()
        .find(|row| row.name.ends_with("[pair_correlation]"))
        .unwrap()
        .predicted
        .value;
    assert!((sim.value - predicted).abs() <= 0.05 * predicted, "{sim:?} vs {predicted}");
}

#[test]
fn generation_probability_scales_rates_not_ratios() {
    let mut cfg = ExperimentConfig {
        pair_generation_probability: 0.01,
        events_per_run: 200_000,
        ..Default::default()
    };
    let a = run_comparison(&cfg, 3, Execution::default()).unwrap();
    cfg.pair_generation_probability = 1.0;
    let b = run_comparison(&cfg, 3, Execution::default()).unwrap();
    assert_eq!(a.period_ratios, b.period_ratios);
    assert_eq!(a.amplitude_ratios, b.amplitude_ratios);
    for (sa, sb) in a.scenarios.iter().zip(&b.scenarios) {
        assert!((sa.expected_rate_per_pulse - 0.01 * sb.expected_rate_per_pulse).abs() < 1e-15);
    }
}

#[test]
fn ratios_stable_under_event_count() {
    let cfg = ExperimentConfig {
        events_per_run: 250_000,
        ..Default::default()
    };
    let small = run_comparison(&cfg, 11, Execution::default()).unwrap();
    let big = report();
    for key in [format!("{CLASSICAL}/{QL}"), format!("{CLASSICAL}/{OCM}")] {
        let (a, b) = (small.period_ratios[&key], big.period_ratios[&key]);
        let joint = (a.uncertainty.powi(2) + b.uncertainty.powi(2)).sqrt();
        assert!((a.value - b.value).abs() <= 4.0 * joint, "{key}: {a:?} vs {b:?}");
    }
    let key = format!("{OCM_PNR_COMPOSITE}/{QL}");
    let (a, b) = (small.amplitude_ratios[&key], big.amplitude_ratios[&key]);
    let joint = (a.uncertainty.powi(2) + b.uncertainty.powi(2)).sqrt();
    assert!((a.value - b.value).abs() <= 4.0 * joint, "{a:?} vs {b:?}");
}

#[test]
fn tiny_runs_degrade_honestly() {
    let cfg = ExperimentConfig {
        events_per_run: 10,
        ..Default::default()
    };
    let r = run_comparison(&cfg, 1, Execution::default()).unwrap();
    assert_eq!(r.scenarios.len(), 4);
    for s in &r.scenarios {
        let flagged = match (&s.fit, &s.fit_error) {
            (None, Some(_)) => true,
            (Some(f), _) => !f.converged || f.parameter_uncertainties.period.is_nan() || f.parameter_uncertainties.period >= 0.01,
            (None, None) => false,
        };
        assert!(flagged, "{}: {:?}", s.name, s.fit);
    }
}
