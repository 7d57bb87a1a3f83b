use proptest::prelude::*;
use tailrate_core::net::sample_path;
use tailrate_core::tailsim::{ks_distance, lower_bound_dater, sample_stationary_daters, upper_bound_dater};
use tailrate_core::{BatchPlan, DistributionSpec, HorizonPolicy, MarkLaw, NetworkModel, StreamKey, TandemModel};

fn exp(rate: f64) -> DistributionSpec {
    DistributionSpec::exponential(rate).unwrap()
}

fn case1() -> (TandemModel, MarkLaw) {
    (TandemModel::new(2).unwrap(), MarkLaw::independent(vec![exp(2.0), exp(3.0)]).unwrap())
}

#[test]
fn forward_and_backward_policies_agree_in_law() {
    let (m, marks) = case1();
    let f = sample_stationary_daters(&m, &marks, &exp(1.0), 100_000, StreamKey::new(50, 0), HorizonPolicy::forward()).unwrap();
    let b = sample_stationary_daters(&m, &marks, &exp(1.0), 100_000, StreamKey::new(50, 1), HorizonPolicy::backward()).unwrap();
    assert_eq!(b.horizon_exceeded, 0);
    let d = ks_distance(&f.values, &b.values);
    assert!(d < 0.02, "KS {d}");
}

#[test]
fn upper_bound_dominates_forward_mean() {
    let (m, marks) = case1();
    let plan = BatchPlan::new(&m, &marks, &exp(1.0), 8, 4000, StreamKey::new(51, 0)).unwrap();
    let ub: f64 = (0..4000u64)
        .map(|i| {
            let p = sample_path(&exp(1.0), &marks, -8 * 64 + 1, 0, StreamKey::new(52, i)).unwrap();
            upper_bound_dater(&m, &plan, p.view()).unwrap()
        })
        .sum::<f64>()
        / 4000.0;
    let f = sample_stationary_daters(&m, &marks, &exp(1.0), 200_000, StreamKey::new(53, 0), HorizonPolicy::forward()).unwrap();
    assert!(ub >= f.mean(), "{ub} < {}", f.mean());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn bounds_sandwich_the_truncated_dater(seed in any::<u64>(), batches in 1i64..40, lambda in 0.3..1.2f64) {
        let (m, marks) = case1();
        let p = sample_path(&exp(lambda), &marks, -8 * batches + 1, 0, StreamKey::new(seed, 0)).unwrap();
        let plan = BatchPlan { batch: 8, mean_batch_dater: 0.0, budget: 8.0 / lambda };
        let lo = lower_bound_dater(&m, p.view()).unwrap();
        let z = m.stationary_dater_truncated(p.view()).unwrap();
        let hi = upper_bound_dater(&m, &plan, p.view()).unwrap();
        prop_assert!(lo <= z + 1e-9 && z <= hi + 1e-9, "{} {} {}", lo, z, hi);
    }
}
