//! Monte Carlo estimation of the scaled log-MGF `Λ_{Z,n}`, the finite-window
//! roots `θ_n`, the decay rate `θ*`, and the saturation constant `γ`.
//!
//! Every estimator works on saturated maximal daters `Z_{[1,n]}(N⁰)`. Those
//! do not depend on `θ`, so one batch of replicas is drawn per window length
//! and the whole `θ`-search reuses it (common random numbers).
//!
//! Replica `i` always uses stream `key.replica(i)`; replicas are evaluated in
//! parallel but reduced sequentially in index order, so results are
//! bit-identical for any worker count.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dist::{DistributionSpec, MarkLaw};
use crate::io::fmt_float;
use crate::net::{sample_marks, NetError, NetworkModel};
use crate::rng::StreamKey;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EstimateError {
    #[error("{0}")]
    InvalidArgument(String),
    #[error("unstable: estimated γ = {gamma} is not below the mean inter-arrival time {mean_interarrival}")]
    Unstable { gamma: f64, mean_interarrival: f64 },
    #[error("no sign change up to θ = {theta_max}: θ_n ≥ {theta_max}")]
    NoSignChange { theta_max: f64 },
    #[error(transparent)]
    Net(#[from] NetError),
}

/// Monte Carlo estimate of `Λ_{Z,n}(nθ)/n = (1/n) log E[e^{θ Z_{[1,n]}(N⁰)}]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LambdaEstimate {
    pub n: usize,
    pub theta: f64,
    pub value: f64,
    pub stderr: f64,
    pub samples: usize,
    /// The largest replica carries more than half of the exponential mass;
    /// the estimate is then dominated by a single maximum and untrustworthy.
    pub divergent: bool,
}

impl LambdaEstimate {
    pub const CSV_HEADER: [&'static str; 6] = ["n", "theta", "value", "stderr", "samples", "divergent"];

    pub fn csv_row(&self) -> Vec<String> {
        vec![
            self.n.to_string(),
            fmt_float(self.theta),
            fmt_float(self.value),
            fmt_float(self.stderr),
            self.samples.to_string(),
            self.divergent.to_string(),
        ]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ThetaMethod {
    Analytic,
    BisectEstimate,
    TailSlope,
}

/// One entry of a `θ_n` convergence sequence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThetaStep {
    pub n: usize,
    /// `None` when the window failed the drift pre-check `E[Z_{[1,n]}]/n < a`.
    pub theta: Option<f64>,
    pub bracket: Option<(f64, f64)>,
    pub estimate: Option<LambdaEstimate>,
    pub gamma: f64,
    /// The root was set by the divergence flag rather than by a sign change
    /// of the estimate; the true `θ_n` may lie above the bracket.
    #[serde(default)]
    pub divergence_limited: bool,
}

/// A decay-rate answer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThetaResult {
    pub theta: f64,
    pub bracket: (f64, f64),
    pub method: ThetaMethod,
    pub n_used: Option<usize>,
    pub seed: Option<StreamKey>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub history: Vec<ThetaStep>,
}

impl ThetaResult {
    pub fn contains(&self, theta: f64) -> bool {
        self.bracket.0 <= theta && theta <= self.bracket.1
    }
}

/// Knobs shared by the `θ_n` and `θ*` estimators.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EstimateConfig {
    pub replicas: usize,
    /// Bisection stops once the bracket is at most this wide.
    pub tol: f64,
    pub theta_max: f64,
    /// Half-width of the uncertainty band, in standard errors.
    pub stderr_band: f64,
}

impl Default for EstimateConfig {
    fn default() -> Self {
        Self {
            replicas: 100_000,
            tol: 1e-3,
            theta_max: 50.0,
            stderr_band: 3.0,
        }
    }
}

pub const MIN_REPLICAS: usize = 100;

/// `n, 2n, …` doubling schedule `1, 2, 4, …, 64`.
pub fn default_schedule() -> Vec<usize> {
    (0..=6).map(|p| 1usize << p).collect()
}

/// i.i.d. replicas of `Z_{[1,n]}(N⁰)`.
#[derive(Debug, Clone)]
pub struct SaturatedSample {
    n: usize,
    values: Vec<f64>,
    key: StreamKey,
}

impl SaturatedSample {
    pub fn draw<M: NetworkModel>(
        model: &M,
        marks: &MarkLaw,
        n: usize,
        replicas: usize,
        key: StreamKey,
    ) -> Result<Self, EstimateError> {
        if n == 0 {
            return Err(EstimateError::InvalidArgument("window length n must be at least 1".into()));
        }
        if replicas < 2 {
            return Err(EstimateError::InvalidArgument("at least 2 replicas are required".into()));
        }
        if marks.stations() != model.stations() {
            return Err(NetError::StationMismatch {
                expected: model.stations(),
                got: marks.stations(),
            }
            .into());
        }
        let values = (0..replicas as u64)
            .into_par_iter()
            .map_init(Vec::new, |buf, i| {
                let mut rng = key.replica(i).rng();
                sample_marks(marks, n, &mut rng, buf);
                model.maximal_dater_saturated(buf)
            })
            .collect::<Result<Vec<f64>, NetError>>()?;
        Ok(Self { n, values, key })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn key(&self) -> StreamKey {
        self.key
    }

    /// Sample mean of `Z_{[1,n]}(N⁰)/n` and its standard error.
    pub fn scaled_mean(&self) -> (f64, f64) {
        let r = self.values.len() as f64;
        let n = self.n as f64;
        let mean = self.values.iter().sum::<f64>() / r;
        let var = self.values.iter().map(|z| (z - mean).powi(2)).sum::<f64>() / (r - 1.0);
        (mean / n, (var / r).sqrt() / n)
    }

    /// `(1/n)(LSE_i θZ_i − log R)`, with a delta-method standard error.
    pub fn lambda(&self, theta: f64) -> LambdaEstimate {
        let r = self.values.len();
        let n = self.n as f64;
        let max = self
            .values
            .iter()
            .map(|z| theta * z)
            .fold(f64::NEG_INFINITY, f64::max);
        let weights: Vec<f64> = self.values.iter().map(|z| (theta * z - max).exp()).collect();
        let sum: f64 = weights.iter().sum();
        let mean_w = sum / r as f64;
        let var_w = weights.iter().map(|w| (w - mean_w).powi(2)).sum::<f64>() / (r - 1) as f64;
        LambdaEstimate {
            n: self.n,
            theta,
            value: (max + sum.ln() - (r as f64).ln()) / n,
            stderr: (var_w / r as f64).sqrt() / mean_w / n,
            samples: r,
            divergent: 1.0 / sum > 0.5,
        }
    }
}

/// Estimates `Λ_{Z,n}(nθ)/n` from `replicas` saturated windows.
pub fn lambda_zn<M: NetworkModel>(
    model: &M,
    marks: &MarkLaw,
    n: usize,
    theta: f64,
    replicas: usize,
    key: StreamKey,
) -> Result<LambdaEstimate, EstimateError> {
    check_replicas(replicas)?;
    Ok(SaturatedSample::draw(model, marks, n, replicas, key)?.lambda(theta))
}

fn check_replicas(replicas: usize) -> Result<(), EstimateError> {
    if replicas < MIN_REPLICAS {
        return Err(EstimateError::InvalidArgument(format!(
            "replicas must be at least {MIN_REPLICAS}, got {replicas}"
        )));
    }
    Ok(())
}

/// Estimate of the saturation constant `γ` at a finite window.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GammaEstimate {
    pub n: usize,
    pub gamma: f64,
    pub stderr: f64,
    pub samples: usize,
}

impl GammaEstimate {
    /// `γ̂ + 3·stderr`.
    pub fn upper(&self) -> f64 {
        self.gamma + 3.0 * self.stderr
    }
}

/// Mean of `Z_{[1,n]}(N⁰)/n`. Biased upwards for finite `n`; the bias
/// vanishes as `n` grows.
pub fn gamma_estimate<M: NetworkModel>(
    model: &M,
    marks: &MarkLaw,
    n: usize,
    replicas: usize,
    key: StreamKey,
) -> Result<GammaEstimate, EstimateError> {
    let sample = SaturatedSample::draw(model, marks, n, replicas, key)?;
    let (gamma, stderr) = sample.scaled_mean();
    Ok(GammaEstimate {
        n,
        gamma,
        stderr,
        samples: replicas,
    })
}

/// Finds `sup{θ > 0 : pred(θ) is false}` for a predicate that is monotone in
/// `θ`, by doubling then bisection. `Ok(None)` if `pred` stays false up to
/// `theta_max`.
fn monotone_root(pred: impl Fn(f64) -> bool, tol: f64, theta_max: f64) -> Option<(f64, f64)> {
    let mut lo = 0.0;
    let mut hi = f64::EPSILON.sqrt();
    while !pred(hi) {
        if hi >= theta_max {
            return None;
        }
        lo = hi;
        hi = (2.0 * hi).min(theta_max);
    }
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        if pred(mid) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Some((lo, hi))
}

/// Root of `θ ↦ Λ_T(−θ) + Λ̂_{Z,n}(nθ)/n` on a fixed replica batch.
fn theta_from_sample(
    sample: &SaturatedSample,
    arrival: &DistributionSpec,
    cfg: &EstimateConfig,
) -> Result<((f64, f64), (f64, f64)), EstimateError> {
    let positive = |theta: f64, band: f64| {
        let est = sample.lambda(theta);
        if est.divergent {
            return true;
        }
        let drift = arrival.log_mgf(-theta).to_f64();
        drift + est.value + band * est.stderr > 0.0
    };
    let central = monotone_root(|t| positive(t, 0.0), cfg.tol, cfg.theta_max)
        .ok_or(EstimateError::NoSignChange { theta_max: cfg.theta_max })?;
    let low = monotone_root(|t| positive(t, cfg.stderr_band), cfg.tol, cfg.theta_max).unwrap_or(central);
    let high = monotone_root(|t| positive(t, -cfg.stderr_band), cfg.tol, cfg.theta_max)
        .unwrap_or((cfg.theta_max, cfg.theta_max));
    let bracket = (low.0.min(central.0), high.1.max(central.1));
    Ok((central, bracket))
}

/// `θ_n = sup{θ > 0 : n Λ_T(−θ) + log E[e^{θ Z_{[1,n]}(N⁰)}] < 0}`.
///
/// The point estimate comes from the central bisection; the bracket is the
/// union of the roots obtained with the estimate shifted by
/// `± stderr_band · stderr`. Divergent evaluations count as positive.
pub fn theta_n<M: NetworkModel>(
    model: &M,
    marks: &MarkLaw,
    arrival: &DistributionSpec,
    n: usize,
    cfg: &EstimateConfig,
    key: StreamKey,
) -> Result<ThetaResult, EstimateError> {
    check_replicas(cfg.replicas)?;
    let sample = SaturatedSample::draw(model, marks, n, cfg.replicas, key)?;
    let step = theta_step(&sample, arrival, cfg)?;
    Ok(ThetaResult {
        theta: step.theta.expect("stable step"),
        bracket: step.bracket.expect("stable step"),
        method: ThetaMethod::BisectEstimate,
        n_used: Some(n),
        seed: Some(key),
        history: vec![step],
    })
}

fn theta_step(
    sample: &SaturatedSample,
    arrival: &DistributionSpec,
    cfg: &EstimateConfig,
) -> Result<ThetaStep, EstimateError> {
    let (gamma, _) = sample.scaled_mean();
    let a = arrival.mean();
    if gamma >= a {
        return Err(EstimateError::Unstable {
            gamma,
            mean_interarrival: a,
        });
    }
    let (central, bracket) = theta_from_sample(sample, arrival, cfg)?;
    let theta = 0.5 * (central.0 + central.1);
    let at_hi = sample.lambda(central.1);
    let divergence_limited = at_hi.divergent && arrival.log_mgf(-central.1).to_f64() + at_hi.value <= 0.0;
    Ok(ThetaStep {
        n: sample.n(),
        theta: Some(theta),
        bracket: Some(bracket),
        estimate: Some(sample.lambda(theta)),
        gamma,
        divergence_limited,
    })
}

/// Runs `θ_n` along an increasing schedule and reports the last root.
///
/// Windows that fail the drift pre-check are recorded and skipped, except
/// the last one. The bracket covers the last two successful roots and their
/// brackets. Each `θ_n` is a lower estimate of `θ*`.
pub fn theta_star<M: NetworkModel>(
    model: &M,
    marks: &MarkLaw,
    arrival: &DistributionSpec,
    schedule: &[usize],
    cfg: &EstimateConfig,
    key: StreamKey,
) -> Result<ThetaResult, EstimateError> {
    check_replicas(cfg.replicas)?;
    if schedule.is_empty() || schedule.windows(2).any(|w| w[1] <= w[0]) {
        return Err(EstimateError::InvalidArgument(
            "n_schedule must be nonempty and strictly increasing".into(),
        ));
    }
    let mut history = Vec::with_capacity(schedule.len());
    let last = schedule.len() - 1;
    for (i, &n) in schedule.iter().enumerate() {
        let sample = SaturatedSample::draw(model, marks, n, cfg.replicas, key.child(n as u64))?;
        match theta_step(&sample, arrival, cfg) {
            Ok(step) => history.push(step),
            Err(EstimateError::Unstable { gamma, .. }) if i < last => history.push(ThetaStep {
                n,
                theta: None,
                bracket: None,
                estimate: None,
                gamma,
                divergence_limited: false,
            }),
            Err(e) => return Err(e),
        }
    }
    let solved: Vec<&ThetaStep> = history.iter().filter(|s| s.theta.is_some()).collect();
    let tail = &solved[solved.len().saturating_sub(2)..];
    let lo = tail.iter().map(|s| s.bracket.unwrap().0).fold(f64::INFINITY, f64::min);
    let hi = tail.iter().map(|s| s.bracket.unwrap().1).fold(f64::NEG_INFINITY, f64::max);
    let final_step = solved.last().expect("last window succeeded");
    Ok(ThetaResult {
        theta: final_step.theta.unwrap(),
        bracket: (lo, hi),
        method: ThetaMethod::BisectEstimate,
        n_used: Some(final_step.n),
        seed: Some(key),
        history,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::net::TandemModel;

    fn exp(rate: f64) -> DistributionSpec {
        DistributionSpec::exponential(rate).unwrap()
    }

    #[test]
    fn lambda_at_zero_is_exactly_zero() {
        let marks = MarkLaw::independent(vec![exp(2.0), exp(3.0)]).unwrap();
        let est = lambda_zn(&TandemModel::new(2).unwrap(), &marks, 5, 0.0, 1000, StreamKey::new(1, 0)).unwrap();
        assert_eq!(est.value, 0.0);
        assert!(!est.divergent);
        assert_eq!(est.samples, 1000);
    }

    #[test]
    fn single_customer_lambda_is_sum_of_station_log_mgfs() {
        let marks = MarkLaw::independent(vec![exp(2.0), exp(3.0)]).unwrap();
        let est = lambda_zn(&TandemModel::new(2).unwrap(), &marks, 1, 1.0, 200_000, StreamKey::new(2, 0)).unwrap();
        let exact = 3f64.ln();
        assert!((est.value - exact).abs() < 3.0 * est.stderr, "{est:?}");
    }

    #[test]
    fn two_customer_lambda_matches_exact_integral() {
        // Z_{[1,2]}(N⁰) = σ1_1 + σ2_2 + max(σ2_1, σ1_2), a sum of independent terms.
        let (m1, m2, theta) = (2.0f64, 3.0f64, 0.7f64);
        let e_max = m2 / (m2 - theta) + m1 / (m1 - theta) - (m1 + m2) / (m1 + m2 - theta);
        let exact = 0.5 * ((m1 / (m1 - theta)).ln() + (m2 / (m2 - theta)).ln() + e_max.ln());
        let marks = MarkLaw::independent(vec![exp(m1), exp(m2)]).unwrap();
        let est = lambda_zn(&TandemModel::new(2).unwrap(), &marks, 2, theta, 200_000, StreamKey::new(3, 0)).unwrap();
        assert!((est.value - exact).abs() < 3.0 * est.stderr, "{est:?} vs {exact}");
    }

    #[test]
    fn rejects_bad_arguments() {
        let marks = MarkLaw::independent(vec![exp(2.0)]).unwrap();
        let m = TandemModel::single_server();
        assert!(matches!(lambda_zn(&m, &marks, 0, 1.0, 1000, StreamKey::new(0, 0)), Err(EstimateError::InvalidArgument(_))));
        assert!(matches!(lambda_zn(&m, &marks, 3, 1.0, 10, StreamKey::new(0, 0)), Err(EstimateError::InvalidArgument(_))));
        let k2 = MarkLaw::independent(vec![exp(2.0), exp(2.0)]).unwrap();
        assert!(matches!(lambda_zn(&m, &k2, 3, 1.0, 1000, StreamKey::new(0, 0)), Err(EstimateError::Net(_))));
    }

    #[test]
    fn divergence_flag_past_radius() {
        let marks = MarkLaw::independent(vec![exp(1.0)]).unwrap();
        let m = TandemModel::single_server();
        let est = lambda_zn(&m, &marks, 1, 5.0, 1000, StreamKey::new(4, 0)).unwrap();
        assert!(est.divergent);
    }

    #[test]
    fn theta_one_is_rate_gap_for_mm1() {
        // n = 1: log(μ/(μ−θ)) + log(λ/(λ+θ)) = 0 ⇔ θ = μ − λ.
        let marks = MarkLaw::independent(vec![exp(2.0)]).unwrap();
        let cfg = EstimateConfig {
            replicas: 200_000,
            ..Default::default()
        };
        let res = theta_n(&TandemModel::single_server(), &marks, &exp(1.0), 1, &cfg, StreamKey::new(5, 0)).unwrap();
        assert!(res.contains(1.0), "{res:?}");
        assert!(res.theta > 0.0);
        assert!(res.bracket.1 > res.bracket.0);
    }

    #[test]
    fn unstable_instance_is_rejected() {
        let marks = MarkLaw::independent(vec![exp(2.0), exp(3.0)]).unwrap();
        let cfg = EstimateConfig {
            replicas: 1000,
            ..Default::default()
        };
        let err = theta_n(&TandemModel::new(2).unwrap(), &marks, &exp(3.0), 8, &cfg, StreamKey::new(6, 0)).unwrap_err();
        assert!(matches!(err, EstimateError::Unstable { .. }));
    }

    #[test]
    fn no_sign_change_is_reported() {
        // Deterministic zero-ish service never catches up with arrivals.
        let marks = MarkLaw::independent(vec![DistributionSpec::deterministic(0.1).unwrap()]).unwrap();
        let cfg = EstimateConfig {
            replicas: 100,
            theta_max: 10.0,
            ..Default::default()
        };
        let arrival = DistributionSpec::deterministic(1.0).unwrap();
        let err = theta_n(&TandemModel::single_server(), &marks, &arrival, 2, &cfg, StreamKey::new(7, 0)).unwrap_err();
        assert_eq!(err, EstimateError::NoSignChange { theta_max: 10.0 });
    }

    #[test]
    fn deterministic_gamma_is_exact() {
        let marks = MarkLaw::independent(vec![DistributionSpec::deterministic(0.75).unwrap()]).unwrap();
        for n in [1, 5, 40] {
            let g = gamma_estimate(&TandemModel::single_server(), &marks, n, 100, StreamKey::new(8, 0)).unwrap();
            assert!((g.gamma - 0.75).abs() < 1e-12);
            assert_eq!(g.stderr, 0.0);
        }
    }

    #[test]
    fn reduction_is_independent_of_worker_count() {
        let marks = MarkLaw::independent(vec![exp(2.0), exp(3.0)]).unwrap();
        let model = TandemModel::new(2).unwrap();
        let run = |threads| {
            rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap()
                .install(|| lambda_zn(&model, &marks, 16, 0.4, 5000, StreamKey::new(9, 1)).unwrap())
        };
        let a = run(1);
        let b = run(4);
        assert_eq!(a.value.to_bits(), b.value.to_bits());
        assert_eq!(a.stderr.to_bits(), b.stderr.to_bits());
    }
}
