//! Shared fixtures for the benchmarks.

use tailrate_core::net::sample_path;
use tailrate_core::{DistributionSpec, MarkLaw, SamplePath, StreamKey, TandemModel};

/// `K` stations with exponential services at load 0.5 against Exp(1) arrivals.
pub fn tandem_fixture(stations: usize) -> (TandemModel, MarkLaw, DistributionSpec) {
    let model = TandemModel::new(stations).expect("at least one station");
    let marks = MarkLaw::independent((0..stations).map(|_| DistributionSpec::exponential(2.0).unwrap()).collect())
        .expect("nonempty");
    (model, marks, DistributionSpec::exponential(1.0).unwrap())
}

/// A path over `[−(len−1), 0]`.
pub fn path_fixture(stations: usize, len: usize, seed: u64) -> SamplePath {
    let (_, marks, arrival) = tandem_fixture(stations);
    sample_path(&arrival, &marks, -(len as i64 - 1), 0, StreamKey::new(seed, 0)).expect("valid window")
}
