use proptest::prelude::*;
use tailrate_core::analytic::{closed_form_rate, rate_via_rate_function};
use tailrate_core::{AnalyticError, ClosedFormLambda, DistributionSpec, MarkLaw};

/// Exponential, deterministic or uniform law with the given mean.
fn law(kind: u8, mean: f64, spread: f64) -> DistributionSpec {
    match kind % 3 {
        0 => DistributionSpec::exponential(1.0 / mean),
        1 => DistributionSpec::deterministic(mean),
        _ => DistributionSpec::uniform(mean * (1.0 - spread), mean * (1.0 + spread)),
    }
    .unwrap()
}

fn instance() -> impl Strategy<Value = (MarkLaw, DistributionSpec)> {
    (0u8..3, 0u8..3, 0u8..3, 0u8..3, 0.2..2.0f64, 0.1..0.9f64, 0.1..0.9f64, 0.1..0.95f64).prop_filter_map(
        "a closed form with a finite rate",
        |(shape, s1, s2, a, mean_a, load1, load2, spread)| {
            let marks = match shape {
                0 => MarkLaw::independent(vec![law(s1, load1 * mean_a, spread)]),
                1 => MarkLaw::independent(vec![law(s1, load1 * mean_a, spread), law(s2, load2 * mean_a, spread)]),
                _ => MarkLaw::common(law(s1, load1 * mean_a, spread), 2),
            }
            .unwrap();
            let arrival = law(a, mean_a, spread);
            match closed_form_rate(&marks, &arrival)? {
                Ok(_) => Some((marks, arrival)),
                Err(AnalyticError::UnboundedRate) => None,
                Err(e) => panic!("{e}"),
            }
        },
    )
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(50))]

    #[test]
    fn legendre_route_matches_direct_root((marks, arrival) in instance()) {
        let direct = closed_form_rate(&marks, &arrival).unwrap().unwrap().theta_star;
        let lam = ClosedFormLambda::new(&marks, &arrival).unwrap();
        let legendre = rate_via_rate_function(|t| lam.eval(t), lam.probe_max()).unwrap();
        prop_assert!((legendre - direct).abs() <= 2e-3, "{} vs {}", legendre, direct);
    }

    #[test]
    fn log_mgf_is_convex_with_slope_mean_at_zero(kind in 0u8..5, mean in 0.1..3.0f64, spread in 0.05..0.95f64) {
        let spec = match kind {
            3 => DistributionSpec::gamma(1.0 / spread, 1.0 / (spread * mean)).unwrap(),
            4 => DistributionSpec::empirical(vec![mean * (1.0 - spread), mean, mean * (1.0 + spread)]).unwrap(),
            k => law(k, mean, spread),
        };
        prop_assert_eq!(spec.log_mgf(0.0).to_f64(), 0.0);
        let h = 1e-5;
        let slope = (spec.log_mgf(h).to_f64() - spec.log_mgf(-h).to_f64()) / (2.0 * h);
        prop_assert!((slope - spec.mean()).abs() <= 1e-4 * spec.mean());
        let top = spec.mgf_radius().to_f64().min(10.0) * 0.99;
        let grid: Vec<f64> = (0..=40).map(|i| -top + 2.0 * top * i as f64 / 40.0).collect();
        for w in grid.windows(3) {
            let (a, b, c) = (spec.log_mgf(w[0]).to_f64(), spec.log_mgf(w[1]).to_f64(), spec.log_mgf(w[2]).to_f64());
            prop_assert!(b <= 0.5 * (a + c) + 1e-9 * b.abs().max(1.0));
        }
    }
}
