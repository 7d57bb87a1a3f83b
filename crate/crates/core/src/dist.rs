//! Service and inter-arrival laws.
//!
//! A [`DistributionSpec`] is validated at construction and is immutable
//! afterwards; samplers borrow an explicit [`SeededStream`](crate::rng::SeededStream).

use rand::Rng;
use rand_distr::{Distribution, Exp1, Gamma};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ext::ExtReal;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DistError {
    #[error("{field}: {reason}")]
    InvalidParameter { field: &'static str, reason: String },
    #[error("marks: common dependence requires identical laws at every station")]
    CommonLawMismatch,
    #[error("marks: at least one station is required")]
    NoStations,
}

fn invalid(field: &'static str, reason: impl Into<String>) -> DistError {
    DistError::InvalidParameter {
        field,
        reason: reason.into(),
    }
}

/// The parameters of a law, as written in scenario files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DistributionKind {
    Exponential { rate: f64 },
    Deterministic { value: f64 },
    Uniform { lo: f64, hi: f64 },
    Gamma { shape: f64, rate: f64 },
    Empirical { samples: Vec<f64> },
}

#[derive(Debug, Clone)]
enum Sampler {
    Exponential { scale: f64 },
    Point(f64),
    Uniform { lo: f64, width: f64 },
    Gamma(Gamma<f64>),
    Empirical,
}

/// A nonnegative, light-tailed law with an analytic log-MGF.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(try_from = "DistributionKind", into = "DistributionKind")]
pub struct DistributionSpec {
    kind: DistributionKind,
    #[serde(skip)]
    sampler: Option<Sampler>,
}

impl PartialEq for DistributionSpec {
    fn eq(&self, other: &Self) -> bool {
        self.kind == other.kind
    }
}

impl From<DistributionSpec> for DistributionKind {
    fn from(spec: DistributionSpec) -> Self {
        spec.kind
    }
}

impl TryFrom<DistributionKind> for DistributionSpec {
    type Error = DistError;

    fn try_from(kind: DistributionKind) -> Result<Self, DistError> {
        let positive = |field, x: f64| {
            if x.is_finite() && x > 0.0 {
                Ok(())
            } else {
                Err(invalid(field, format!("must be a positive finite number, got {x}")))
            }
        };
        let nonneg = |field, x: f64| {
            if x.is_finite() && x >= 0.0 {
                Ok(())
            } else {
                Err(invalid(field, format!("must be a nonnegative finite number, got {x}")))
            }
        };
        let sampler = match &kind {
            DistributionKind::Exponential { rate } => {
                positive("rate", *rate)?;
                Sampler::Exponential { scale: 1.0 / rate }
            }
            DistributionKind::Deterministic { value } => {
                nonneg("value", *value)?;
                Sampler::Point(*value)
            }
            DistributionKind::Uniform { lo, hi } => {
                nonneg("lo", *lo)?;
                nonneg("hi", *hi)?;
                if lo > hi {
                    return Err(invalid("lo", format!("must not exceed hi ({lo} > {hi})")));
                }
                Sampler::Uniform {
                    lo: *lo,
                    width: hi - lo,
                }
            }
            DistributionKind::Gamma { shape, rate } => {
                positive("shape", *shape)?;
                positive("rate", *rate)?;
                let gamma = Gamma::new(*shape, 1.0 / rate)
                    .map_err(|e| invalid("shape", e.to_string()))?;
                Sampler::Gamma(gamma)
            }
            DistributionKind::Empirical { samples } => {
                if samples.is_empty() {
                    return Err(invalid("samples", "must be nonempty"));
                }
                for &x in samples {
                    nonneg("samples", x)?;
                }
                Sampler::Empirical
            }
        };
        Ok(Self {
            kind,
            sampler: Some(sampler),
        })
    }
}

impl DistributionSpec {
    pub fn new(kind: DistributionKind) -> Result<Self, DistError> {
        Self::try_from(kind)
    }

    pub fn exponential(rate: f64) -> Result<Self, DistError> {
        Self::new(DistributionKind::Exponential { rate })
    }

    pub fn deterministic(value: f64) -> Result<Self, DistError> {
        Self::new(DistributionKind::Deterministic { value })
    }

    pub fn uniform(lo: f64, hi: f64) -> Result<Self, DistError> {
        Self::new(DistributionKind::Uniform { lo, hi })
    }

    pub fn gamma(shape: f64, rate: f64) -> Result<Self, DistError> {
        Self::new(DistributionKind::Gamma { shape, rate })
    }

    pub fn empirical(samples: Vec<f64>) -> Result<Self, DistError> {
        Self::new(DistributionKind::Empirical { samples })
    }

    pub fn kind(&self) -> &DistributionKind {
        &self.kind
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self.sampler.as_ref().expect("validated at construction") {
            Sampler::Exponential { scale } => {
                let e: f64 = rng.sample(Exp1);
                e * scale
            }
            Sampler::Point(x) => *x,
            Sampler::Uniform { lo, width } => {
                if *width == 0.0 {
                    *lo
                } else {
                    lo + width * rng.random::<f64>()
                }
            }
            Sampler::Gamma(g) => g.sample(rng),
            Sampler::Empirical => {
                let DistributionKind::Empirical { samples } = &self.kind else {
                    unreachable!()
                };
                samples[rng.random_range(0..samples.len())]
            }
        }
    }

    pub fn mean(&self) -> f64 {
        match &self.kind {
            DistributionKind::Exponential { rate } => 1.0 / rate,
            DistributionKind::Deterministic { value } => *value,
            DistributionKind::Uniform { lo, hi } => 0.5 * (lo + hi),
            DistributionKind::Gamma { shape, rate } => shape / rate,
            DistributionKind::Empirical { samples } => {
                samples.iter().sum::<f64>() / samples.len() as f64
            }
        }
    }

    /// `sup{θ : E[e^{θX}] < ∞}`.
    pub fn mgf_radius(&self) -> ExtReal {
        match &self.kind {
            DistributionKind::Exponential { rate } | DistributionKind::Gamma { rate, .. } => {
                ExtReal::Finite(*rate)
            }
            _ => ExtReal::PosInfinity,
        }
    }

    /// `log E[e^{θX}]`, or `+∞` at and beyond the radius.
    pub fn log_mgf(&self, theta: f64) -> ExtReal {
        if theta == 0.0 {
            return ExtReal::Finite(0.0);
        }
        match &self.kind {
            DistributionKind::Exponential { rate } => {
                if theta >= *rate {
                    ExtReal::PosInfinity
                } else {
                    ExtReal::Finite(-(-theta / rate).ln_1p())
                }
            }
            DistributionKind::Gamma { shape, rate } => {
                if theta >= *rate {
                    ExtReal::PosInfinity
                } else {
                    ExtReal::Finite(-shape * (-theta / rate).ln_1p())
                }
            }
            DistributionKind::Deterministic { value } => ExtReal::Finite(theta * value),
            DistributionKind::Uniform { lo, hi } => {
                ExtReal::Finite(theta * lo + log_expm1_ratio(theta * (hi - lo)))
            }
            DistributionKind::Empirical { samples } => {
                let lse = log_sum_exp(samples.iter().map(|&x| theta * x));
                ExtReal::Finite(lse - (samples.len() as f64).ln())
            }
        }
    }
}

/// `log((e^x − 1)/x)` without overflow, with the `x = 0` limit `0`.
fn log_expm1_ratio(x: f64) -> f64 {
    if x == 0.0 {
        0.0
    } else if x > 30.0 {
        x - x.ln() + (-(-x).exp()).ln_1p()
    } else if x < -30.0 {
        (-x.exp()).ln_1p() - (-x).ln()
    } else {
        (x.exp_m1() / x).ln()
    }
}

/// `log Σ e^{x_i}` with max subtraction. Empty input gives `-∞`.
pub fn log_sum_exp<I: IntoIterator<Item = f64>>(xs: I) -> f64 {
    let xs: Vec<f64> = xs.into_iter().collect();
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return max;
    }
    max + xs.iter().map(|&x| (x - max).exp()).sum::<f64>().ln()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Dependence {
    /// Stations draw their service times independently.
    Independent,
    /// One draw per customer, copied to every station.
    Common,
}

/// Joint law of the per-customer service vector `(σ^{(1)}, …, σ^{(K)})`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "MarkLawRaw", into = "MarkLawRaw")]
pub struct MarkLaw {
    per_station: Vec<DistributionSpec>,
    dependence: Dependence,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct MarkLawRaw {
    dependence: Dependence,
    stations: Vec<DistributionSpec>,
}

impl TryFrom<MarkLawRaw> for MarkLaw {
    type Error = DistError;

    fn try_from(raw: MarkLawRaw) -> Result<Self, DistError> {
        MarkLaw::new(raw.stations, raw.dependence)
    }
}

impl From<MarkLaw> for MarkLawRaw {
    fn from(law: MarkLaw) -> Self {
        MarkLawRaw {
            dependence: law.dependence,
            stations: law.per_station,
        }
    }
}

impl MarkLaw {
    pub fn new(per_station: Vec<DistributionSpec>, dependence: Dependence) -> Result<Self, DistError> {
        if per_station.is_empty() {
            return Err(DistError::NoStations);
        }
        if dependence == Dependence::Common && per_station.iter().any(|s| *s != per_station[0]) {
            return Err(DistError::CommonLawMismatch);
        }
        Ok(Self {
            per_station,
            dependence,
        })
    }

    pub fn independent(per_station: Vec<DistributionSpec>) -> Result<Self, DistError> {
        Self::new(per_station, Dependence::Independent)
    }

    /// `stations` copies of one law with `σ^{(i)}_n = σ^{(1)}_n`.
    pub fn common(law: DistributionSpec, stations: usize) -> Result<Self, DistError> {
        Self::new(vec![law; stations], Dependence::Common)
    }

    pub fn stations(&self) -> usize {
        self.per_station.len()
    }

    pub fn dependence(&self) -> Dependence {
        self.dependence
    }

    pub fn station(&self, i: usize) -> &DistributionSpec {
        &self.per_station[i]
    }

    pub fn per_station(&self) -> &[DistributionSpec] {
        &self.per_station
    }

    /// Fills `out` (length `K`) with one customer's service vector.
    pub fn sample_into<R: Rng + ?Sized>(&self, rng: &mut R, out: &mut [f64]) {
        debug_assert_eq!(out.len(), self.stations());
        match self.dependence {
            Dependence::Independent => {
                for (slot, law) in out.iter_mut().zip(&self.per_station) {
                    *slot = law.sample(rng);
                }
            }
            Dependence::Common => {
                let x = self.per_station[0].sample(rng);
                out.fill(x);
            }
        }
    }

    /// Largest mean service time over the stations.
    pub fn max_station_mean(&self) -> f64 {
        self.per_station
            .iter()
            .map(DistributionSpec::mean)
            .fold(f64::NEG_INFINITY, f64::max)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::StreamKey;

    fn all_kinds() -> Vec<DistributionSpec> {
        vec![
            DistributionSpec::exponential(2.0).unwrap(),
            DistributionSpec::deterministic(0.7).unwrap(),
            DistributionSpec::uniform(1.0, 3.0).unwrap(),
            DistributionSpec::gamma(2.0, 3.0).unwrap(),
            DistributionSpec::empirical(vec![0.1, 0.5, 2.0, 0.0]).unwrap(),
        ]
    }

    #[test]
    fn point_masses_sample_exactly() {
        let mut rng = StreamKey::new(9, 0).rng();
        assert_eq!(DistributionSpec::deterministic(3.0).unwrap().sample(&mut rng), 3.0);
        assert_eq!(DistributionSpec::uniform(2.0, 2.0).unwrap().sample(&mut rng), 2.0);
    }

    #[test]
    fn exponential_sample_mean() {
        let spec = DistributionSpec::exponential(1.0).unwrap();
        let mut rng = StreamKey::new(1, 0).rng();
        let n = 1_000_000;
        let mean = (0..n).map(|_| spec.sample(&mut rng)).sum::<f64>() / n as f64;
        assert!((mean - 1.0).abs() < 0.01, "mean {mean}");
    }

    #[test]
    fn log_mgf_closed_forms() {
        let e2 = DistributionSpec::exponential(2.0).unwrap();
        assert!((e2.log_mgf(1.0).to_f64() - 2f64.ln()).abs() < 1e-15);
        let e1 = DistributionSpec::exponential(1.0).unwrap();
        assert_eq!(e1.log_mgf(1.0), ExtReal::PosInfinity);
        assert_eq!(e1.log_mgf(1.5), ExtReal::PosInfinity);
        let d = DistributionSpec::deterministic(1.25).unwrap();
        assert_eq!(d.log_mgf(0.8), ExtReal::Finite(0.8 * 1.25));
        assert_eq!(d.log_mgf(-3.0), ExtReal::Finite(-3.0 * 1.25));
    }

    #[test]
    fn means_and_radii() {
        let e = DistributionSpec::exponential(2.0).unwrap();
        assert_eq!(e.mean(), 0.5);
        assert_eq!(e.mgf_radius(), ExtReal::Finite(2.0));
        let u = DistributionSpec::uniform(1.0, 3.0).unwrap();
        assert_eq!(u.mean(), 2.0);
        assert_eq!(u.mgf_radius(), ExtReal::PosInfinity);
        let g = DistributionSpec::gamma(2.0, 3.0).unwrap();
        assert!((g.mean() - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(g.mgf_radius(), ExtReal::Finite(3.0));
        let emp = DistributionSpec::empirical(vec![1.0, 2.0, 6.0]).unwrap();
        assert_eq!(emp.mean(), 3.0);
        assert_eq!(emp.mgf_radius(), ExtReal::PosInfinity);
    }

    #[test]
    fn rejects_bad_parameters() {
        assert!(DistributionSpec::exponential(-1.0).is_err());
        assert!(DistributionSpec::exponential(0.0).is_err());
        assert!(DistributionSpec::deterministic(-0.1).is_err());
        assert!(DistributionSpec::uniform(3.0, 1.0).is_err());
        assert!(DistributionSpec::gamma(0.0, 1.0).is_err());
        assert!(DistributionSpec::empirical(vec![]).is_err());
        assert!(DistributionSpec::empirical(vec![1.0, -1.0]).is_err());
        assert!(DistributionSpec::exponential(f64::NAN).is_err());
    }

    #[test]
    fn empirical_log_mgf_does_not_overflow() {
        let emp = DistributionSpec::empirical(vec![100.0, 200.0]).unwrap();
        let v = emp.log_mgf(10.0).to_f64();
        // log((e^1000 + e^2000)/2) = 2000 + log((1 + e^-1000)/2)
        assert!((v - (2000.0 - 2f64.ln())).abs() < 1e-9);
    }

    #[test]
    fn uniform_log_mgf_extremes() {
        let u = DistributionSpec::uniform(0.0, 1.0).unwrap();
        for theta in [-1000.0f64, -40.0, -1e-8, 1e-8, 1.0, 40.0, 1000.0] {
            let direct = if theta.abs() < 700.0 {
                (theta.exp_m1() / theta).ln()
            } else if theta > 0.0 {
                theta - theta.ln()
            } else {
                -(-theta).ln()
            };
            let v = u.log_mgf(theta).to_f64();
            assert!((v - direct).abs() < 1e-9 * (1.0 + direct.abs()), "θ={theta}: {v} vs {direct}");
        }
    }

    #[test]
    fn log_mgf_convex_and_zero_at_origin() {
        for spec in all_kinds() {
            assert_eq!(spec.log_mgf(0.0), ExtReal::Finite(0.0));
            let top = spec.mgf_radius().finite().map_or(3.0, |r| 0.95 * r);
            let grid: Vec<f64> = (0..=60).map(|i| -3.0 + (top + 3.0) * i as f64 / 60.0).collect();
            for w in grid.windows(3) {
                let (a, b, c) = (w[0], w[1], w[2]);
                let fa = spec.log_mgf(a).to_f64();
                let fb = spec.log_mgf(b).to_f64();
                let fc = spec.log_mgf(c).to_f64();
                assert!(fb <= 0.5 * (fa + fc) + 1e-9, "{spec:?} not convex at {b}");
            }
        }
    }

    #[test]
    fn log_mgf_slope_at_origin_is_mean() {
        let h = 1e-5;
        for spec in all_kinds() {
            let d = (spec.log_mgf(h).to_f64() - spec.log_mgf(-h).to_f64()) / (2.0 * h);
            let m = spec.mean();
            assert!((d - m).abs() <= 1e-4 * m.abs().max(1e-12), "{spec:?}: {d} vs {m}");
        }
    }

    #[test]
    fn log_mgf_matches_monte_carlo() {
        let n = 1_000_000;
        for (i, spec) in all_kinds().into_iter().enumerate() {
            let theta = spec.mgf_radius().finite().map_or(1.0, |r| r / 2.0);
            let mut rng = StreamKey::new(77, i as u64).rng();
            let w: Vec<f64> = (0..n).map(|_| (theta * spec.sample(&mut rng)).exp()).collect();
            let mean = w.iter().sum::<f64>() / n as f64;
            let var = w.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
            // delta method: se(log mean) = sd / (mean sqrt(n))
            let se = var.sqrt() / (mean * (n as f64).sqrt());
            let exact = spec.log_mgf(theta).to_f64();
            assert!((mean.ln() - exact).abs() <= 3.0 * se + 1e-9, "{spec:?}: {} vs {exact} (se {se})", mean.ln());
        }
    }

    #[test]
    fn common_marks_require_identical_laws() {
        let e1 = DistributionSpec::exponential(1.0).unwrap();
        let e2 = DistributionSpec::exponential(2.0).unwrap();
        assert_eq!(
            MarkLaw::new(vec![e1.clone(), e2], Dependence::Common),
            Err(DistError::CommonLawMismatch)
        );
        let law = MarkLaw::common(e1, 3).unwrap();
        let mut rng = StreamKey::new(3, 3).rng();
        let mut out = [0.0; 3];
        law.sample_into(&mut rng, &mut out);
        assert!(out[0] == out[1] && out[1] == out[2]);
    }

    #[test]
    fn serde_literal_round_trip() {
        let spec: DistributionSpec = serde_json::from_str(r#"{"kind":"exponential","rate":2.0}"#).unwrap();
        assert_eq!(spec, DistributionSpec::exponential(2.0).unwrap());
        let err = serde_json::from_str::<DistributionSpec>(r#"{"kind":"exponential","rate":-2.0}"#)
            .unwrap_err()
            .to_string();
        assert!(err.contains("rate"), "{err}");
    }
}
