use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use tailrate_core::axioms::{check_all, two_station_double_sup};
use tailrate_core::{NetworkModel, SamplePath, TandemModel};

/// Arrival gaps (zero a fifth of the time) and per-station marks.
fn path(stations: std::ops::RangeInclusive<usize>, max_len: usize) -> impl Strategy<Value = SamplePath> {
    (stations, 1..=max_len, -10i64..=10, -20.0..20.0f64).prop_flat_map(|(k, len, start, t0)| {
        let gaps = prop::collection::vec(prop_oneof![1 => Just(0.0), 4 => 0.0..4.0f64], len);
        let marks = prop::collection::vec(prop_oneof![1 => Just(0.0), 6 => 0.0..5.0f64], len * k);
        (gaps, marks).prop_map(move |(gaps, marks)| {
            let arrivals = gaps
                .iter()
                .scan(t0, |t, g| {
                    *t += g;
                    Some(*t)
                })
                .collect();
            SamplePath::new(start, k, arrivals, marks).unwrap()
        })
    })
}

fn model(p: &SamplePath) -> TandemModel {
    TandemModel::new(p.stations()).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(500))]

    #[test]
    fn tandem_paths_satisfy_the_axioms(p in path(1..=3, 20), seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let v = check_all(&model(&p), p.view(), &mut rng).unwrap();
        prop_assert!(v.is_empty(), "{:?}", v);
    }

    #[test]
    fn two_station_recursion_matches_double_sup(p in path(2..=2, 30)) {
        let x = model(&p).last_activity(p.view()).unwrap();
        let brute = two_station_double_sup(p.view());
        prop_assert!((x - brute).abs() <= 1e-12 * x.abs().max(1.0), "{} vs {}", x, brute);
    }

    #[test]
    fn maximal_dater_is_nonnegative_and_translation_free(p in path(1..=3, 20), c in -5.0..5.0f64) {
        let m = model(&p);
        let z = m.maximal_dater(p.view()).unwrap();
        prop_assert!(z >= 0.0);
        let moved = p.with_arrivals(p.arrivals().iter().map(|t| t + c).collect()).unwrap();
        let zc = m.maximal_dater(moved.view()).unwrap();
        prop_assert!((z - zc).abs() <= 1e-12 * z.max(1.0));
    }

    #[test]
    fn truncated_stationary_dater_grows_with_the_window(p in path(1..=3, 20)) {
        let end = p.end();
        let t_end = *p.arrivals().last().unwrap();
        let anchored = SamplePath::new(p.start() - end, p.stations(), p.arrivals().iter().map(|t| t - t_end).collect(), p.marks().to_vec()).unwrap();
        let m = model(&p);
        let mut prev = 0.0;
        let mut dater = m.backward_dater();
        let v = anchored.view();
        for n in 0..v.len() as i64 {
            let z = m.stationary_dater_truncated(v.window(-n, 0).unwrap()).unwrap();
            prop_assert!(z >= prev);
            let pushed = dater.push_front(v.arrival(-n), v.mark(-n));
            prop_assert!((pushed - z).abs() <= 1e-12 * z.max(1.0), "backward {} vs forward {}", pushed, z);
            let sat = m.maximal_dater_saturated(v.window(-n, 0).unwrap().marks()).unwrap();
            prop_assert!((dater.saturated() - sat).abs() <= 1e-12 * sat.max(1.0));
            prev = z;
        }
    }
}
