//! Quantile and bound routines against closed forms and `statrs`.

use proptest::prelude::*;
use statrs::distribution::{ChiSquared, ContinuousCDF, StudentsT};
use tcldro::quantiles::{chi2_cdf, chi2_quantile, mean_bounds, t_cdf, t_quantile, variance_bounds, VarianceRule};

const PS: [f64; 13] = [0.001, 0.01, 0.025, 0.05, 0.1, 0.25, 0.5, 0.75, 0.9, 0.95, 0.975, 0.99, 0.999];
const DOFS: [u64; 5] = [1, 2, 10, 100, 1000];

#[test]
fn closed_forms() {
    assert!((t_quantile(0.975, 1).unwrap() - (std::f64::consts::PI * 0.475).tan()).abs() < 1e-10);
    assert!((t_quantile(0.975, 1).unwrap() - 12.7062).abs() < 1e-3);
    assert!((chi2_quantile(0.5, 2).unwrap() - 2.0 * 2f64.ln()).abs() < 1e-9);
    for p in [0.1, 0.9] {
        assert!((chi2_quantile(p, 2).unwrap() + 2.0 * (1.0 - p).ln()).abs() < 1e-9);
    }
    assert!((t_quantile(0.975, 1_000_000).unwrap() - 1.95996).abs() < 1e-3);
    for k in DOFS {
        assert_eq!(t_quantile(0.5, k).unwrap(), 0.0);
    }
}

#[test]
fn round_trip_grid() {
    for dof in DOFS {
        for p in PS {
            let t = t_quantile(p, dof).unwrap();
            assert!((t_cdf(t, dof) - p).abs() <= 1e-8, "t p={p} dof={dof}");
            let c = chi2_quantile(p, dof).unwrap();
            assert!((chi2_cdf(c, dof) - p).abs() <= 1e-8, "chi2 p={p} dof={dof}");
        }
    }
}

#[test]
fn agrees_with_statrs() {
    for dof in DOFS {
        let t = StudentsT::new(0.0, 1.0, dof as f64).unwrap();
        let c = ChiSquared::new(dof as f64).unwrap();
        for p in PS {
            // statrs inverts by coarse bisection, so compare through its CDF.
            assert!((t.cdf(t_quantile(p, dof).unwrap()) - p).abs() <= 1e-9, "t p={p} dof={dof}");
            assert!((c.cdf(chi2_quantile(p, dof).unwrap()) - p).abs() <= 1e-9, "chi2 p={p} dof={dof}");
            for x in [-3.0, -0.5, 0.0, 0.7, 4.0] {
                assert!((t_cdf(x, dof) - t.cdf(x)).abs() < 1e-10);
            }
            for x in [0.01, 0.5, 2.0, 10.0, 150.0] {
                assert!((chi2_cdf(x, dof) - c.cdf(x)).abs() < 1e-10);
            }
        }
    }
}

#[test]
fn mean_bound_half_width() {
    let (lo, hi) = mean_bounds(0.5, 0.1, 1001, 0.1, true).unwrap();
    let half = StudentsT::new(0.0, 1.0, 1000.0).unwrap().inverse_cdf(0.95) * 0.1 / 1001f64.sqrt();
    assert!((hi - 0.5 - half).abs() < 1e-9);
    assert!((0.5 - lo - half).abs() < 1e-9);
}

#[test]
fn variance_bounds_bracket_estimate_under_standard_rule() {
    let (lo, hi) = variance_bounds(0.01, 1001, 0.001, VarianceRule::Standard).unwrap();
    assert!(lo <= 0.01 && 0.01 <= hi, "{lo} {hi}");
    let (lo2, hi2) = variance_bounds(0.01, 1001, 0.1, VarianceRule::Standard).unwrap();
    assert!(lo <= lo2 && hi2 <= hi);
}

proptest! {
    #[test]
    fn quantiles_monotone(p1 in 0.001f64..0.999, p2 in 0.001f64..0.999, dof in 1u64..500) {
        prop_assume!((p1 - p2).abs() > 1e-6);
        let (a, b) = if p1 < p2 { (p1, p2) } else { (p2, p1) };
        prop_assert!(t_quantile(a, dof).unwrap() < t_quantile(b, dof).unwrap());
        prop_assert!(chi2_quantile(a, dof).unwrap() < chi2_quantile(b, dof).unwrap());
    }

    #[test]
    fn t_symmetry(p in 0.001f64..0.999, dof in 1u64..500) {
        let q = t_quantile(p, dof).unwrap() + t_quantile(1.0 - p, dof).unwrap();
        prop_assert!(q.abs() < 1e-8 * t_quantile(p.max(1.0 - p), dof).unwrap().max(1.0));
    }

    #[test]
    fn mean_bounds_nest_in_confidence(m in 0.05f64..0.95, s in 0.0f64..0.2, n in 2usize..5000) {
        let (lo1, hi1) = mean_bounds(m, s, n, 0.1, true).unwrap();
        let (lo2, hi2) = mean_bounds(m, s, n, 0.01, true).unwrap();
        prop_assert!(lo2 <= lo1 + 1e-15 && hi1 <= hi2 + 1e-15);
        prop_assert!(lo1 <= m && m <= hi1);
    }
}
