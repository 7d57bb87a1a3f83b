//! Sampling the stationary maximal dater and measuring its tail.
//!
//! Two sampling policies are provided. `ForwardErgodic` runs the tandem
//! departure recursions along one long arrival stream and records each
//! customer's end-to-end delay; the samples are serially dependent.
//! `BackwardWindow` works for any [`NetworkModel`]: it grows the window
//! `[−n, 0]` to the left on independent replicas until the value has settled
//! and a drift certificate rules out further growth.
//!
//! The module also builds the two path-wise bounds that sandwich `Z`:
//! the saturated-input lower bound and the batched `G/G/1` upper bound.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dist::{DistributionSpec, MarkLaw};
use crate::estimate::{gamma_estimate, EstimateError, GammaEstimate};
use crate::io::fmt_float;
use crate::net::{NetError, NetworkModel, PathView};
use crate::rng::StreamKey;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TailError {
    #[error("unstable: estimated γ = {gamma} is not below the mean inter-arrival time {mean_interarrival}")]
    Unstable { gamma: f64, mean_interarrival: f64 },
    #[error("the forward-ergodic policy needs a tandem model")]
    NotTandem,
    #[error("{count} backward windows reached n_max = {n_max} without a drift certificate")]
    HorizonExceeded { count: usize, n_max: usize },
    #[error("only {points} order statistics inside the quantile window (need {required})")]
    InsufficientTail { points: usize, required: usize },
    #[error("invalid quantile window ({q_lo}, {q_hi})")]
    InvalidWindow { q_lo: f64, q_hi: f64 },
    #[error("batch size {batch}: estimated E[Z_[1,L](N⁰)] = {mean_batch_dater} is not below L·a = {budget}")]
    BatchTooSmall { batch: usize, mean_batch_dater: f64, budget: f64 },
    #[error("window of {len} customers is not a positive multiple of the batch size {batch}")]
    BatchMisaligned { len: usize, batch: usize },
    #[error(transparent)]
    Net(#[from] NetError),
    #[error(transparent)]
    Estimate(#[from] EstimateError),
}

/// Window and replica count for the `γ̂` pre-check.
pub const GAMMA_WINDOW: usize = 256;
pub const GAMMA_REPLICAS: usize = 400;

const GAMMA_STREAM: u64 = 0x6a;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "policy", rename_all = "snake_case", deny_unknown_fields)]
pub enum HorizonPolicy {
    ForwardErgodic {
        /// Customers discarded before recording; default `10·⌈1/(a − γ̂)⌉`.
        #[serde(default)]
        warmup: Option<usize>,
    },
    BackwardWindow {
        #[serde(default = "default_stable_steps")]
        stable_steps: usize,
        #[serde(default = "default_n_max")]
        n_max: usize,
    },
}

fn default_stable_steps() -> usize {
    200
}

fn default_n_max() -> usize {
    1_000_000
}

impl HorizonPolicy {
    pub fn forward() -> Self {
        HorizonPolicy::ForwardErgodic { warmup: None }
    }

    pub fn backward() -> Self {
        HorizonPolicy::BackwardWindow {
            stable_steps: default_stable_steps(),
            n_max: default_n_max(),
        }
    }
}

/// What was actually used to produce a [`TailSample`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HorizonRecord {
    pub policy: HorizonPolicy,
    pub gamma: GammaEstimate,
    /// `γ̂ + 3·stderr`, used by the backward drift certificate.
    pub gamma_hi: f64,
    /// Backward certificate margin `10·γ̂_hi` (0 for forward runs).
    pub safety_margin: f64,
}

/// Realizations of the stationary maximal dater.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TailSample {
    pub values: Vec<f64>,
    pub horizon: HorizonRecord,
    pub warmup: usize,
    pub seed: StreamKey,
    /// Backward replicas that hit `n_max` before the certificate held.
    pub horizon_exceeded: usize,
}

impl TailSample {
    /// Fails if any backward replica was truncated at `n_max`.
    pub fn check_horizon(&self) -> Result<(), TailError> {
        match self.horizon.policy {
            HorizonPolicy::BackwardWindow { n_max, .. } if self.horizon_exceeded > 0 => {
                Err(TailError::HorizonExceeded {
                    count: self.horizon_exceeded,
                    n_max,
                })
            }
            _ => Ok(()),
        }
    }

    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.values.len() as f64
    }

    pub fn write_csv<W: std::io::Write>(&self, out: W) -> std::io::Result<()> {
        crate::io::write_csv(out, &["z"], self.values.iter().map(|z| vec![fmt_float(*z)]))
    }
}

/// Samples `count` stationary maximal daters under `policy`.
pub fn sample_stationary_daters<M: NetworkModel>(
    model: &M,
    marks: &MarkLaw,
    arrival: &DistributionSpec,
    count: usize,
    key: StreamKey,
    policy: HorizonPolicy,
) -> Result<TailSample, TailError> {
    let gamma = gamma_estimate(model, marks, GAMMA_WINDOW, GAMMA_REPLICAS, key.child(GAMMA_STREAM))?;
    let a = arrival.mean();
    if gamma.gamma >= a {
        return Err(TailError::Unstable {
            gamma: gamma.gamma,
            mean_interarrival: a,
        });
    }
    let gamma_hi = gamma.upper();
    match policy {
        HorizonPolicy::ForwardErgodic { warmup } => {
            if model.tandem_stations().is_none() {
                return Err(TailError::NotTandem);
            }
            let warmup = warmup.unwrap_or_else(|| 10 * (1.0 / (a - gamma.gamma)).ceil() as usize);
            let values = forward_delays(marks, arrival, warmup, count, key);
            Ok(TailSample {
                values,
                horizon: HorizonRecord {
                    policy: HorizonPolicy::ForwardErgodic { warmup: Some(warmup) },
                    gamma,
                    gamma_hi,
                    safety_margin: 0.0,
                },
                warmup,
                seed: key,
                horizon_exceeded: 0,
            })
        }
        HorizonPolicy::BackwardWindow { stable_steps, n_max } => {
            let margin = 10.0 * gamma_hi;
            let runs: Vec<(f64, bool)> = (0..count as u64)
                .into_par_iter()
                .map(|i| backward_replica(model, marks, arrival, key.replica(i), gamma_hi, margin, stable_steps, n_max))
                .collect();
            let horizon_exceeded = runs.iter().filter(|r| r.1).count();
            Ok(TailSample {
                values: runs.into_iter().map(|r| r.0).collect(),
                horizon: HorizonRecord {
                    policy,
                    gamma,
                    gamma_hi,
                    safety_margin: margin,
                },
                warmup: 0,
                seed: key,
                horizon_exceeded,
            })
        }
    }
}

/// End-to-end delays `D_K(k) − T_k` of customers `warmup+1 ..= warmup+count`
/// of a tandem that starts empty, tracked relative to each arrival epoch.
fn forward_delays(marks: &MarkLaw, arrival: &DistributionSpec, warmup: usize, count: usize, key: StreamKey) -> Vec<f64> {
    let k = marks.stations();
    let mut rng = key.rng();
    // backlog[s]: departure from station s of the previous customer, minus
    // the current customer's arrival epoch
    let mut backlog = vec![f64::NEG_INFINITY; k];
    let mut sigma = vec![0.0; k];
    let mut out = Vec::with_capacity(count);
    for c in 0..warmup + count {
        if c > 0 {
            let tau = arrival.sample(&mut rng);
            for b in &mut backlog {
                *b -= tau;
            }
        }
        marks.sample_into(&mut rng, &mut sigma);
        let mut ready = 0.0f64;
        for (b, s) in backlog.iter_mut().zip(&sigma) {
            *b = b.max(ready) + s;
            ready = *b;
        }
        if c >= warmup {
            out.push(ready);
        }
    }
    out
}

#[allow(clippy::too_many_arguments)]
fn backward_replica<M: NetworkModel>(
    model: &M,
    marks: &MarkLaw,
    arrival: &DistributionSpec,
    key: StreamKey,
    gamma_hi: f64,
    margin: f64,
    stable_steps: usize,
    n_max: usize,
) -> (f64, bool) {
    let mut rng = key.rng();
    let mut dater = model.backward_dater();
    let mut mark = vec![0.0; marks.stations()];
    marks.sample_into(&mut rng, &mut mark);
    let mut z = dater.push_front(0.0, &mark);
    let mut offset = 0.0;
    let mut unchanged = 0usize;
    for n in 1..=n_max {
        offset -= arrival.sample(&mut rng);
        marks.sample_into(&mut rng, &mut mark);
        let next = dater.push_front(offset, &mark);
        if next == z {
            unchanged += 1;
        } else {
            unchanged = 0;
            z = next;
        }
        let certified = offset + n as f64 * gamma_hi < z - margin;
        if unchanged >= stable_steps && certified {
            return (z, false);
        }
    }
    (z, true)
}

/// `sup_{0≤k≤n} (Z_{[−k,0]}(N⁰) + T_{−k} − T_0)` over a window `[−n, 0]`.
pub fn lower_bound_dater<M: NetworkModel>(model: &M, path: PathView<'_>) -> Result<f64, TailError> {
    if path.end() != 0 {
        return Err(NetError::NotEndingAtZero { end: path.end() }.into());
    }
    let t0 = path.arrival(0);
    let mut dater = model.backward_dater();
    let mut best = f64::NEG_INFINITY;
    for idx in (path.start()..=0).rev() {
        let offset = path.arrival(idx) - t0;
        dater.push_front(offset, path.mark(idx));
        best = best.max(dater.saturated() + offset);
    }
    Ok(best)
}

/// A batch size `L` that passed the stability check `E[Z_{[1,L]}(N⁰)] < L·a`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BatchPlan {
    pub batch: usize,
    pub mean_batch_dater: f64,
    pub budget: f64,
}

impl BatchPlan {
    pub fn new<M: NetworkModel>(
        model: &M,
        marks: &MarkLaw,
        arrival: &DistributionSpec,
        batch: usize,
        replicas: usize,
        key: StreamKey,
    ) -> Result<Self, TailError> {
        let g = gamma_estimate(model, marks, batch, replicas, key)?;
        let mean_batch_dater = g.gamma * batch as f64;
        let budget = arrival.mean() * batch as f64;
        if mean_batch_dater >= budget {
            return Err(TailError::BatchTooSmall {
                batch,
                mean_batch_dater,
                budget,
            });
        }
        Ok(Self {
            batch,
            mean_batch_dater,
            budget,
        })
    }
}

/// Response time of the batched `G/G/1` queue that dominates `Z`:
/// `ŝ_0 + sup_{k≥0} Σ_{i=−k}^{−1} (ŝ_i − τ̂_{i+1})` over a window
/// `[−kL+1, 0]`, where batch `i` holds customers `L(i−1)+1 ..= Li`,
/// `ŝ_i = Z_{[L(i−1)+1, Li]}(N⁰)` and `τ̂_i = T_{Li} − T_{L(i−1)}`.
pub fn upper_bound_dater<M: NetworkModel>(model: &M, plan: &BatchPlan, path: PathView<'_>) -> Result<f64, TailError> {
    Ok(batched_walk(model, plan.batch, path)?.0)
}

/// Upper bound plus the batch increments `ŝ_i − τ̂_{i+1}` (for `i ≤ −1`).
pub fn batched_walk<M: NetworkModel>(model: &M, batch: usize, path: PathView<'_>) -> Result<(f64, Vec<f64>), TailError> {
    if path.end() != 0 {
        return Err(NetError::NotEndingAtZero { end: path.end() }.into());
    }
    let len = path.len();
    if batch == 0 || !len.is_multiple_of(batch) {
        return Err(TailError::BatchMisaligned { len, batch });
    }
    let batches = len / batch;
    let l = batch as i64;
    let service = |b: i64| -> Result<f64, NetError> {
        let w = path.window(-(b + 1) * l + 1, -b * l)?;
        model.maximal_dater_saturated(w.marks())
    };
    let s0 = service(0)?;
    let mut walk = 0.0f64;
    let mut sup = 0.0f64;
    let mut increments = Vec::with_capacity(batches.saturating_sub(1));
    for b in 1..batches as i64 {
        let gap = path.arrival(-(b - 1) * l) - path.arrival(-b * l);
        let step = service(b)? - gap;
        increments.push(step);
        walk += step;
        sup = sup.max(walk);
    }
    Ok((s0 + sup, increments))
}

/// Least-squares fit of `log P(Z > x)` against `x` over the upper tail.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SlopeFit {
    pub slope: f64,
    pub window: (f64, f64),
    pub points_used: usize,
    pub r_squared: f64,
    /// Delete-one-block jackknife over contiguous blocks of the sample.
    pub stderr: f64,
}

impl SlopeFit {
    /// The decay-rate estimate `−slope`.
    pub fn rate(&self) -> f64 {
        -self.slope
    }
}

pub const MIN_TAIL_POINTS: usize = 20;
const JACKKNIFE_BLOCKS: usize = 20;

struct Regression {
    slope: f64,
    r_squared: f64,
    points: usize,
}

/// Regression over `sorted` (ascending) of `log((n−i)/n)` on `x_(i)`, using
/// order statistics strictly between the `q_lo` and `q_hi` sample quantiles.
fn regress_tail(sorted: &[f64], q_lo: f64, q_hi: f64) -> Option<Regression> {
    let n = sorted.len();
    if n == 0 {
        return None;
    }
    let x_lo = sorted[((q_lo * n as f64) as usize).min(n - 1)];
    let x_hi = sorted[((q_hi * n as f64) as usize).min(n - 1)];
    let (mut sx, mut sy, mut sxx, mut sxy, mut syy, mut m) = (0.0, 0.0, 0.0, 0.0, 0.0, 0usize);
    for (i, &x) in sorted.iter().enumerate() {
        if x <= x_lo {
            continue;
        }
        if x >= x_hi {
            break;
        }
        let y = ((n - i) as f64 / n as f64).ln();
        sx += x;
        sy += y;
        sxx += x * x;
        sxy += x * y;
        syy += y * y;
        m += 1;
    }
    if m < 2 {
        return Some(Regression {
            slope: f64::NAN,
            r_squared: f64::NAN,
            points: m,
        });
    }
    let mf = m as f64;
    let cxx = sxx - sx * sx / mf;
    let cxy = sxy - sx * sy / mf;
    let cyy = syy - sy * sy / mf;
    Some(Regression {
        slope: cxy / cxx,
        r_squared: cxy * cxy / (cxx * cyy),
        points: m,
    })
}

/// Fits the exponential decay of the empirical tail of `values` between the
/// `q_lo` and `q_hi` quantiles (defaults 0.95 and 0.9999).
pub fn fit_tail_slope(values: &[f64], q_lo: f64, q_hi: f64) -> Result<SlopeFit, TailError> {
    if !(0.0 <= q_lo && q_lo < q_hi && q_hi <= 1.0) {
        return Err(TailError::InvalidWindow { q_lo, q_hi });
    }
    let n = values.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| values[i].total_cmp(&values[j]).then(i.cmp(&j)));
    let sorted: Vec<f64> = order.iter().map(|&i| values[i]).collect();
    let full = regress_tail(&sorted, q_lo, q_hi).ok_or(TailError::InsufficientTail {
        points: 0,
        required: MIN_TAIL_POINTS,
    })?;
    if full.points < MIN_TAIL_POINTS {
        return Err(TailError::InsufficientTail {
            points: full.points,
            required: MIN_TAIL_POINTS,
        });
    }
    let blocks = JACKKNIFE_BLOCKS.min(n);
    let block_of = |i: usize| i * blocks / n;
    let leave_out: Vec<f64> = (0..blocks)
        .into_par_iter()
        .map(|b| {
            let kept: Vec<f64> = order.iter().filter(|&&i| block_of(i) != b).map(|&i| values[i]).collect();
            regress_tail(&kept, q_lo, q_hi).map_or(f64::NAN, |r| r.slope)
        })
        .collect();
    let g = blocks as f64;
    let mean = leave_out.iter().sum::<f64>() / g;
    let var = leave_out.iter().map(|s| (s - mean).powi(2)).sum::<f64>() * (g - 1.0) / g;
    Ok(SlopeFit {
        slope: full.slope,
        window: (q_lo, q_hi),
        points_used: full.points,
        r_squared: full.r_squared,
        stderr: var.sqrt(),
    })
}

/// `(x, log P̂(Z ≥ x))` at up to `max_points` ranks, geometrically spaced
/// from the top of the sample.
pub fn ccdf_curve(values: &[f64], max_points: usize) -> Vec<(f64, f64)> {
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    if n == 0 || max_points == 0 {
        return Vec::new();
    }
    let ratio = (n as f64).powf(1.0 / max_points as f64).max(1.0 + 1e-12);
    let mut ranks = Vec::new();
    let mut r = 1.0f64;
    while (r as usize) <= n {
        let rank = r as usize;
        if ranks.last() != Some(&rank) {
            ranks.push(rank);
        }
        r *= ratio;
    }
    ranks
        .into_iter()
        .rev()
        .map(|rank| (sorted[n - rank], (rank as f64 / n as f64).ln()))
        .collect()
}

/// Two-sample Kolmogorov–Smirnov distance.
pub fn ks_distance(a: &[f64], b: &[f64]) -> f64 {
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j, mut d) = (0usize, 0usize, 0.0f64);
    while i < a.len() && j < b.len() {
        let x = a[i].min(b[j]);
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    d
}
