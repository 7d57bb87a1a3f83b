//! Closed-form decay rates and the rate-function cross-check.
//!
//! For a single server the rate is `sup{θ > 0 : Λ_σ(θ) + Λ_T(−θ) < 0}`. For
//! two stations in tandem with independent services the network log-MGF is
//! `max(Λ_1, Λ_2)`, so the rate is the smaller of the two single-server
//! rates. With the same service time at both stations, `Λ_Z` equals `Λ_1`
//! below half the MGF radius `δ` of the service law and is infinite above
//! it, giving `min(θ^1, δ/2)`.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dist::{Dependence, DistributionKind, DistributionSpec, MarkLaw};
use crate::ext::ExtReal;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AnalyticError {
    #[error("unstable input: mean service {service_mean} is not below mean inter-arrival {arrival_mean}")]
    UnstableInput { service_mean: f64, arrival_mean: f64 },
    #[error("the decay rate is unbounded (service never exceeds inter-arrival)")]
    UnboundedRate,
    #[error("degenerate input: {0}")]
    DegenerateInput(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    SingleServer,
    TandemIndependent,
    /// `θ* = δ/2`: one large service time drives the delay.
    TandemCommonServiceDominated,
    /// `θ* = θ^1`: the same rate as the single bottleneck queue.
    TandemCommonQueueDominated,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalyticRate {
    pub theta_star: f64,
    pub regime: Regime,
    pub components: BTreeMap<String, f64>,
}

fn check_stable(service_mean: f64, arrival: &DistributionSpec) -> Result<(), AnalyticError> {
    let arrival_mean = arrival.mean();
    if service_mean >= arrival_mean {
        return Err(AnalyticError::UnstableInput {
            service_mean,
            arrival_mean,
        });
    }
    Ok(())
}

/// `sup{θ > 0 : f(θ) < 0}` for convex `f` with `f(0) = 0`, `f'(0) < 0`,
/// to about 1e-13 relative.
fn convex_root(f: impl Fn(f64) -> ExtReal) -> Result<f64, AnalyticError> {
    let mut lo = 0.0;
    let mut hi = 1.0;
    while !f(hi).is_positive() {
        lo = hi;
        hi *= 2.0;
        if hi > 1e9 {
            return Err(AnalyticError::UnboundedRate);
        }
    }
    for _ in 0..200 {
        if hi - lo <= 1e-13 * hi.max(1.0) {
            break;
        }
        let mid = 0.5 * (lo + hi);
        if f(mid).is_positive() {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Decay rate of the stationary workload of a `GI/GI/1` queue.
pub fn single_server_rate(service: &DistributionSpec, arrival: &DistributionSpec) -> Result<AnalyticRate, AnalyticError> {
    check_stable(service.mean(), arrival)?;
    let theta = match (service.kind(), arrival.kind()) {
        (DistributionKind::Exponential { rate: mu }, DistributionKind::Exponential { rate: lambda }) => mu - lambda,
        _ => convex_root(|t| service.log_mgf(t) + arrival.log_mgf(-t))?,
    };
    Ok(AnalyticRate {
        theta_star: theta,
        regime: Regime::SingleServer,
        components: BTreeMap::from([("theta_1".to_string(), theta)]),
    })
}

/// Two stations in tandem with independent service sequences.
pub fn tandem_rate_case1(
    s1: &DistributionSpec,
    s2: &DistributionSpec,
    arrival: &DistributionSpec,
) -> Result<AnalyticRate, AnalyticError> {
    check_stable(s1.mean().max(s2.mean()), arrival)?;
    let t1 = single_server_rate(s1, arrival)?.theta_star;
    let t2 = single_server_rate(s2, arrival)?.theta_star;
    Ok(AnalyticRate {
        theta_star: t1.min(t2),
        regime: Regime::TandemIndependent,
        components: BTreeMap::from([("theta_1".to_string(), t1), ("theta_2".to_string(), t2)]),
    })
}

/// Two stations in tandem where each customer brings the same service
/// time to both stations.
pub fn tandem_rate_case2(s: &DistributionSpec, arrival: &DistributionSpec) -> Result<AnalyticRate, AnalyticError> {
    let t1 = single_server_rate(s, arrival)?.theta_star;
    let mut components = BTreeMap::from([("theta_1".to_string(), t1)]);
    let half_radius = match s.mgf_radius() {
        ExtReal::Finite(delta) => {
            components.insert("delta".to_string(), delta);
            components.insert("delta_half".to_string(), 0.5 * delta);
            0.5 * delta
        }
        ExtReal::PosInfinity => f64::INFINITY,
    };
    // ties go to the service-dominated branch
    let (theta_star, regime) = if half_radius <= t1 {
        (half_radius, Regime::TandemCommonServiceDominated)
    } else {
        (t1, Regime::TandemCommonQueueDominated)
    };
    Ok(AnalyticRate {
        theta_star,
        regime,
        components,
    })
}

/// Dispatches to the closed form that applies to a tandem of `marks.stations()`
/// stations, if any (one station, or two stations with either dependence).
pub fn closed_form_rate(marks: &MarkLaw, arrival: &DistributionSpec) -> Option<Result<AnalyticRate, AnalyticError>> {
    match (marks.stations(), marks.dependence()) {
        (1, _) => Some(single_server_rate(marks.station(0), arrival)),
        (2, Dependence::Independent) => Some(tandem_rate_case1(marks.station(0), marks.station(1), arrival)),
        (2, Dependence::Common) => Some(tandem_rate_case2(marks.station(0), arrival)),
        _ => None,
    }
}

/// `Λ(θ) = Λ_T(−θ) + Λ_Z(θ)` for an instance covered by
/// [`closed_form_rate`], with `Λ_Z` the analytic network log-MGF.
#[derive(Debug, Clone)]
pub struct ClosedFormLambda {
    marks: MarkLaw,
    arrival: DistributionSpec,
}

impl ClosedFormLambda {
    pub fn new(marks: &MarkLaw, arrival: &DistributionSpec) -> Option<Self> {
        matches!(marks.stations(), 1 | 2).then(|| Self {
            marks: marks.clone(),
            arrival: arrival.clone(),
        })
    }

    /// `Λ_Z(θ)`.
    pub fn network(&self, theta: f64) -> ExtReal {
        let m = &self.marks;
        match (m.stations(), m.dependence()) {
            (1, _) => m.station(0).log_mgf(theta),
            (_, Dependence::Independent) => {
                match (m.station(0).log_mgf(theta), m.station(1).log_mgf(theta)) {
                    (ExtReal::Finite(a), ExtReal::Finite(b)) => ExtReal::Finite(a.max(b)),
                    _ => ExtReal::PosInfinity,
                }
            }
            (_, Dependence::Common) => match m.station(0).mgf_radius() {
                ExtReal::Finite(delta) if theta >= 0.5 * delta => ExtReal::PosInfinity,
                _ => m.station(0).log_mgf(theta),
            },
        }
    }

    pub fn eval(&self, theta: f64) -> ExtReal {
        self.arrival.log_mgf(-theta) + self.network(theta)
    }

    /// Where `Λ_Z` stops being finite.
    pub fn radius(&self) -> ExtReal {
        let m = &self.marks;
        let r = match m.stations() {
            1 => m.station(0).mgf_radius(),
            _ => match (m.station(0).mgf_radius(), m.station(1).mgf_radius()) {
                (ExtReal::Finite(a), ExtReal::Finite(b)) => ExtReal::Finite(a.min(b)),
                (ExtReal::Finite(a), _) | (_, ExtReal::Finite(a)) => ExtReal::Finite(a),
                _ => ExtReal::PosInfinity,
            },
        };
        match (m.dependence(), r) {
            (Dependence::Common, ExtReal::Finite(d)) if m.stations() == 2 => ExtReal::Finite(0.5 * d),
            _ => r,
        }
    }

    /// A probe bound for [`rate_via_rate_function`] with the root in its top
    /// octave: doubling (or halving) from 1 until `Λ(p) > 0 ≥ Λ(p/2)`, kept
    /// just inside the radius.
    pub fn probe_max(&self) -> f64 {
        let cap = match self.radius() {
            ExtReal::Finite(r) => r * (1.0 - 1e-6),
            ExtReal::PosInfinity => f64::INFINITY,
        };
        let mut p = 1.0f64.min(cap);
        while self.eval(0.5 * p).is_positive() && p > 1e-9 {
            p *= 0.5;
        }
        while p < cap && !self.eval(p).is_positive() && p < 1e9 {
            p = (2.0 * p).min(cap);
        }
        p
    }
}

const GRID_POINTS: usize = 400;
const THETA_DECADES: f64 = 2.0;

fn geometric_grid(lo: f64, top: f64) -> impl Iterator<Item = f64> {
    let ratio = (top / lo).powf(1.0 / (GRID_POINTS - 1) as f64);
    (0..GRID_POINTS).map(move |i| if i == GRID_POINTS - 1 { top } else { lo * ratio.powi(i as i32) })
}

/// `inf_{α>0} I(α)/α` with `I(α) = sup_θ (θα − Λ(θ))`, both extrema taken
/// over 400-point geometric grids.
///
/// The `θ`-grid spans two decades below `theta_probe_max`, so the probe
/// should not overshoot the root by much; the gap around the sign change is
/// then refined linearly. The `α`-grid runs from the shallowest increasing
/// chord of `Λ` to the steepest, which brackets the optimal `α`, and its
/// minimum is polished by golden section.
pub fn rate_via_rate_function(lambda: impl Fn(f64) -> ExtReal, theta_probe_max: f64) -> Result<f64, AnalyticError> {
    if !(theta_probe_max.is_finite() && theta_probe_max > 0.0) {
        return Err(AnalyticError::DegenerateInput(format!(
            "probe range must be positive and finite, got {theta_probe_max}"
        )));
    }
    let sample = |t: f64| lambda(t).finite().map(|v| (t, v));
    let mut points: Vec<(f64, f64)> = std::iter::once(0.0)
        .chain(geometric_grid(theta_probe_max * 10f64.powf(-THETA_DECADES), theta_probe_max))
        .filter_map(sample)
        .collect();
    if !points.iter().any(|&(_, v)| v < 0.0) {
        return Err(AnalyticError::DegenerateInput("Λ is nonnegative on the probed range".into()));
    }
    // near a steep wall the chord across the sign change undershoots; fill
    // that gap with a linear grid, twice
    for _ in 0..2 {
        let Some(j) = points.iter().rposition(|&(_, v)| v < 0.0) else { break };
        if j + 1 >= points.len() {
            break;
        }
        let (lo, hi) = (points[j].0, points[j + 1].0);
        let fill: Vec<_> = (1..GRID_POINTS)
            .map(|i| lo + (hi - lo) * i as f64 / GRID_POINTS as f64)
            .filter_map(sample)
            .collect();
        points.splice(j + 1..j + 1, fill);
    }
    let slopes: Vec<f64> = points
        .windows(2)
        .map(|w| (w[1].1 - w[0].1) / (w[1].0 - w[0].0))
        .filter(|&c| c > 0.0)
        .collect();
    let alpha_hi = slopes.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let alpha_lo = slopes.iter().copied().fold(f64::INFINITY, f64::min);
    // As α → ∞, I(α)/α tends to the edge of the probed domain; this is the
    // answer when Λ is still negative where it stops being finite.
    let edge = points.last().map_or(f64::INFINITY, |&(t, v)| if v <= 0.0 { t } else { f64::INFINITY });
    if !(alpha_hi > 0.0) {
        if edge.is_finite() {
            return Ok(edge);
        }
        return Err(AnalyticError::DegenerateInput("Λ never increases on the probed range".into()));
    }
    let conjugate = |alpha: f64| {
        points
            .iter()
            .map(|&(t, v)| t * alpha - v)
            .fold(f64::NEG_INFINITY, f64::max)
    };
    let alphas: Vec<f64> = geometric_grid(alpha_lo, alpha_hi).collect();
    let ratios: Vec<f64> = alphas.iter().map(|&a| conjugate(a) / a).collect();
    let (best, coarse) = ratios
        .iter()
        .copied()
        .enumerate()
        .fold((0, f64::INFINITY), |acc, (i, r)| if r < acc.1 { (i, r) } else { acc });
    // I(α)/α = sup_θ (θ − sΛ(θ)) is convex in s = 1/α: polish the grid
    // minimum by golden section between its neighbours
    let objective = |s: f64| conjugate(1.0 / s) * s;
    let (mut a, mut b) = (
        1.0 / alphas[(best + 1).min(alphas.len() - 1)],
        1.0 / alphas[best.saturating_sub(1)],
    );
    let g = 0.5 * (5f64.sqrt() - 1.0);
    for _ in 0..80 {
        let (c, d) = (b - g * (b - a), a + g * (b - a));
        if objective(c) < objective(d) {
            b = d;
        } else {
            a = c;
        }
    }
    Ok(edge.min(coarse).min(objective(0.5 * (a + b))))
}
