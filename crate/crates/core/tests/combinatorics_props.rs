use ocm_core::combinatorics::{
    acceptance_probability, c_npa, c_pnr, c_spa, c_total, efficiency_ratio, enumerate_occupancies, occupancy_report,
    CountScheme, PlacementModel, RatioScheme,
};
use proptest::prelude::*;

const MODELS: [PlacementModel; 2] = [PlacementModel::MultisetUniform, PlacementModel::PlacementUniform];

#[test]
fn two_pixel_two_photon_patterns() {
    let pats = enumerate_occupancies(2, 2).unwrap();
    let mut pixels: Vec<_> = pats.iter().map(|p| p.pixels.clone()).collect();
    pixels.sort();
    assert_eq!(pixels, vec![vec![0, 0], vec![0, 1], vec![1, 1]]);
    assert_eq!(pats.iter().filter(|p| p.is_all_same()).count(), 2);
    assert_eq!(pats.iter().filter(|p| p.is_all_distinct()).count(), 1);
}

#[test]
fn counts_for_five_pixels_two_photons() {
    assert_eq!(
        (c_total(5, 2).unwrap(), c_npa(5, 2).unwrap(), c_spa(5, 2).unwrap(), c_pnr(5, 2).unwrap()),
        (15, 5, 10, 15)
    );
    let report = occupancy_report(5.0, 2, 0.5, PlacementModel::MultisetUniform).unwrap();
    assert_eq!(report.exact.unwrap().oracle_verified, Some(true));
}

#[test]
fn large_m_spa_approaches_pnr() {
    let r = c_spa(10_000, 2).unwrap() as f64 / c_pnr(10_000, 2).unwrap() as f64;
    assert!((1.0 - r).abs() < 1e-3);
    let mut prev = 0.0;
    for m in [2u64, 5, 10, 100, 1000, 10_000] {
        let r = c_spa(m, 2).unwrap() as f64 / c_pnr(m, 2).unwrap() as f64;
        assert!(r > prev);
        prev = r;
    }
}

#[test]
fn acceptance_examples() {
    let p = |s, m, n, model| acceptance_probability(s, m, n, model).unwrap();
    assert!((p(CountScheme::Npa, 5, 2, PlacementModel::MultisetUniform) - 1.0 / 3.0).abs() < 1e-15);
    assert!((p(CountScheme::Npa, 5, 2, PlacementModel::PlacementUniform) - 0.2).abs() < 1e-15);
    assert!((p(CountScheme::Spa, 2, 2, PlacementModel::MultisetUniform) - 1.0 / 3.0).abs() < 1e-15);
}

proptest! {
    #[test]
    fn pnr_always_accepts(m in 1u64..40, n in 1u64..6) {
        for model in MODELS {
            prop_assert_eq!(acceptance_probability(CountScheme::Pnr, m, n, model).unwrap(), 1.0);
        }
    }

    #[test]
    fn same_plus_distinct_bounded_by_total(m in 1u64..60, n in 2u64..6) {
        prop_assert!(c_npa(m, n).unwrap() + c_spa(m, n).unwrap() <= c_total(m, n).unwrap());
    }

    #[test]
    fn equality_cases(m in 1u64..60) {
        // N = 2 has no mixed patterns; M = 1 has only the all-same one
        prop_assert_eq!(c_npa(m, 2).unwrap() + c_spa(m, 2).unwrap(), c_total(m, 2).unwrap());
        prop_assert_eq!(c_total(1, m.min(20)).unwrap(), 1);
    }

    #[test]
    fn spa_acceptance_non_decreasing_in_m(m in 1u64..40, n in 2u64..5) {
        for model in MODELS {
            let a = acceptance_probability(CountScheme::Spa, m, n, model).unwrap();
            let b = acceptance_probability(CountScheme::Spa, m + 1, n, model).unwrap();
            prop_assert!(b >= a - 1e-15);
        }
    }

    #[test]
    fn npa_placement_uniform_non_increasing_in_m(m in 1u64..40, n in 2u64..5) {
        let a = acceptance_probability(CountScheme::Npa, m, n, PlacementModel::PlacementUniform).unwrap();
        let b = acceptance_probability(CountScheme::Npa, m + 1, n, PlacementModel::PlacementUniform).unwrap();
        prop_assert!(b <= a);
    }

    #[test]
    fn gamma_ratios_match_integer_ratios(m in 2u32..21, n in 1u32..5) {
        prop_assume!(m >= n);
        let (mu, nu) = (u64::from(m), u64::from(n));
        let total = c_total(mu, nu).unwrap() as f64;
        let spa = c_spa(mu, nu).unwrap() as f64;
        let npa = mu as f64;
        let checks = [
            (RatioScheme::Pnr, RatioScheme::Npa, total / npa),
            (RatioScheme::Spa, RatioScheme::Npa, spa / npa),
            (RatioScheme::Pnr, RatioScheme::Spa, total / spa),
        ];
        for (a, b, exact) in checks {
            let r = efficiency_ratio(f64::from(m), n, a, b, 1.0).unwrap();
            prop_assert!(((r - exact) / exact).abs() <= 1e-12);
        }
    }

    #[test]
    fn composite_formula(m in 1.5f64..50.0, split in 0.05f64..1.0) {
        let r = efficiency_ratio(m, 2, RatioScheme::PnrComposite, RatioScheme::Npa, split).unwrap();
        let expected = (m - 1.0) / (2.0 * split) + 1.0;
        prop_assert!(((r - expected) / expected).abs() < 1e-12);
    }
}
