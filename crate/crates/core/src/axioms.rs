//! Executable checks of the monotone-separable axioms and their consequences
//! on concrete sample paths, plus a generator of random tandem instances.
//!
//! Every check returns the violations it found; an empty vector means the
//! property held on that path.

use std::fmt;

use rand::Rng;

use crate::dist::{DistributionSpec, MarkLaw};
use crate::net::{NetError, NetworkModel, PathView, SamplePath, TandemModel};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Axiom {
    Causality,
    ExternalMonotonicity,
    Homogeneity,
    Separability,
    InternalMonotonicity,
    Subadditivity,
}

impl Axiom {
    pub const ALL: [Axiom; 6] = [
        Axiom::Causality,
        Axiom::ExternalMonotonicity,
        Axiom::Homogeneity,
        Axiom::Separability,
        Axiom::InternalMonotonicity,
        Axiom::Subadditivity,
    ];
}

impl fmt::Display for Axiom {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Axiom::Causality => "causality",
            Axiom::ExternalMonotonicity => "external monotonicity",
            Axiom::Homogeneity => "homogeneity",
            Axiom::Separability => "separability",
            Axiom::InternalMonotonicity => "internal monotonicity",
            Axiom::Subadditivity => "subadditivity",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Violation {
    pub axiom: Axiom,
    pub detail: String,
}

/// Absolute slack for inequalities that hold exactly in real arithmetic.
pub const SLACK: f64 = 1e-12;

fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * a.abs().max(b.abs()).max(1.0)
}

fn violation(axiom: Axiom, detail: String) -> Vec<Violation> {
    vec![Violation { axiom, detail }]
}

/// `X_{[m,n]}(N) ≥ T_n`.
pub fn causality<M: NetworkModel>(model: &M, path: PathView<'_>) -> Result<Vec<Violation>, NetError> {
    let x = model.last_activity(path)?;
    let t = path.last_arrival();
    Ok(if x < t {
        violation(Axiom::Causality, format!("X = {x} < T_n = {t}"))
    } else {
        Vec::new()
    })
}

/// `X(N + c) = X(N) + c`, to relative tolerance `tol`.
pub fn homogeneity<M: NetworkModel>(model: &M, path: PathView<'_>, c: f64, tol: f64) -> Result<Vec<Violation>, NetError> {
    let x = model.last_activity(path)?;
    let moved = shifted(path, |_, t| t + c)?;
    let xc = model.last_activity(moved.view())?;
    Ok(if close(xc, x + c, tol) {
        Vec::new()
    } else {
        violation(Axiom::Homogeneity, format!("X(N+{c}) = {xc}, X(N)+c = {}", x + c))
    })
}

/// `T' ≥ T` pointwise implies `X(N') ≥ X(N)`; `later` must dominate `path`.
pub fn external_monotonicity<M: NetworkModel>(model: &M, path: PathView<'_>, later: PathView<'_>) -> Result<Vec<Violation>, NetError> {
    debug_assert!(path.arrivals().iter().zip(later.arrivals()).all(|(a, b)| b >= a));
    let x = model.last_activity(path)?;
    let x2 = model.last_activity(later)?;
    Ok(if x2 + SLACK < x {
        violation(Axiom::ExternalMonotonicity, format!("X(N') = {x2} < X(N) = {x}"))
    } else {
        Vec::new()
    })
}

/// Delays every customer after `split` so that `T_{split+1} ≥ X_{[m,split]}`
/// (plus `gap ≥ 0`), then checks `X_{[m,n]} = X_{[split+1,n]}`.
pub fn separability<M: NetworkModel>(model: &M, path: PathView<'_>, split: i64, gap: f64) -> Result<Vec<Violation>, NetError> {
    if split < path.start() || split >= path.end() {
        return Err(NetError::WindowOutOfRange { m: split, n: split + 1 });
    }
    let head = model.last_activity(path.window(path.start(), split)?)?;
    let lift = (head - path.arrival(split + 1)).max(0.0) + gap;
    let gapped = shifted(path, |i, t| if i > split { t + lift } else { t })?;
    let whole = model.last_activity(gapped.view())?;
    let tail = model.last_activity(gapped.window(split + 1, path.end())?)?;
    Ok(if close(whole, tail, SLACK) {
        Vec::new()
    } else {
        violation(Axiom::Separability, format!("split {split}: X_[m,n] = {whole}, X_[l+1,n] = {tail}"))
    })
}

/// `X` and `Z` are nondecreasing as the window grows to the left.
pub fn internal_monotonicity<M: NetworkModel>(model: &M, path: PathView<'_>) -> Result<Vec<Violation>, NetError> {
    let mut out = Vec::new();
    let n = path.end();
    let mut prev_x = f64::NEG_INFINITY;
    for m in (path.start()..=n).rev() {
        let x = model.last_activity(path.window(m, n)?)?;
        if x + SLACK < prev_x {
            out.push(Violation {
                axiom: Axiom::InternalMonotonicity,
                detail: format!("X_[{m},{n}] = {x} < X_[{},{n}] = {prev_x}", m + 1),
            });
        }
        prev_x = prev_x.max(x);
    }
    Ok(out)
}

/// `Z_{[m,n]} ≤ Z_{[m,ℓ]} + Z_{[ℓ+1,n]}` for every split `ℓ`.
pub fn subadditivity<M: NetworkModel>(model: &M, path: PathView<'_>) -> Result<Vec<Violation>, NetError> {
    let (m, n) = (path.start(), path.end());
    let whole = model.maximal_dater(path)?;
    let mut out = Vec::new();
    for l in m..n {
        let a = model.maximal_dater(path.window(m, l)?)?;
        let b = model.maximal_dater(path.window(l + 1, n)?)?;
        if whole > a + b + SLACK * whole.abs().max(1.0) {
            out.push(Violation {
                axiom: Axiom::Subadditivity,
                detail: format!("split {l}: Z = {whole} > {a} + {b}"),
            });
        }
    }
    Ok(out)
}

fn shifted(path: PathView<'_>, mut f: impl FnMut(i64, f64) -> f64) -> Result<SamplePath, NetError> {
    let arrivals = (path.start()..=path.end()).map(|i| f(i, path.arrival(i))).collect();
    SamplePath::new(path.start(), path.stations(), arrivals, path.marks().to_vec())
}

/// `X_{[m,n]}(N)` of a two-station tandem from the closed form
/// `sup_{m≤k≤n} (T_k + sup_{k≤j≤n} (Σ_{i=k}^{j} σ¹_i + Σ_{i=j}^{n} σ²_i))`,
/// evaluated term by term.
pub fn two_station_double_sup(path: PathView<'_>) -> f64 {
    assert_eq!(path.stations(), 2, "two-station formula");
    let (m, n) = (path.start(), path.end());
    let mut best = f64::NEG_INFINITY;
    for k in m..=n {
        for j in k..=n {
            let first: f64 = (k..=j).map(|i| path.mark(i)[0]).sum();
            let second: f64 = (j..=n).map(|i| path.mark(i)[1]).sum();
            best = best.max(path.arrival(k) + first + second);
        }
    }
    best
}

/// A random nonnegative law drawn from every supported kind.
pub fn random_law<R: Rng + ?Sized>(rng: &mut R) -> DistributionSpec {
    let spec = match rng.random_range(0..5) {
        0 => DistributionSpec::exponential(rng.random_range(0.2..5.0)),
        1 => DistributionSpec::deterministic(rng.random_range(0.0..3.0)),
        2 => {
            let lo = rng.random_range(0.0..2.0);
            DistributionSpec::uniform(lo, lo + rng.random_range(0.1..3.0))
        }
        3 => DistributionSpec::gamma(rng.random_range(0.3..4.0), rng.random_range(0.3..4.0)),
        _ => {
            let len = rng.random_range(1..6);
            DistributionSpec::empirical((0..len).map(|_| rng.random_range(0.0..4.0)).collect())
        }
    };
    spec.expect("parameters drawn inside the valid ranges")
}

/// A random tandem (`K ∈ {1,2,3}`) with a path of at most `max_len`
/// customers, mixed service laws and occasional tied arrivals.
pub fn random_tandem_case<R: Rng + ?Sized>(rng: &mut R, max_len: usize) -> (TandemModel, MarkLaw, SamplePath) {
    let k = rng.random_range(1..=3);
    let laws = (0..k).map(|_| random_law(rng)).collect();
    let marks = MarkLaw::independent(laws).expect("at least one station");
    let inter = random_law(rng);
    let len = rng.random_range(1..=max_len);
    let start = rng.random_range(-10..=10);
    let mut t = rng.random_range(-20.0..20.0);
    let mut arrivals = Vec::with_capacity(len);
    let mut flat = vec![0.0; len * k];
    for i in 0..len {
        if i > 0 && rng.random_bool(0.9) {
            t += inter.sample(rng);
        }
        arrivals.push(t);
        marks.sample_into(rng, &mut flat[i * k..(i + 1) * k]);
    }
    let path = SamplePath::new(start, k, arrivals, flat).expect("ordered arrivals");
    (TandemModel::new(k).expect("k ≥ 1"), marks, path)
}

/// Runs every check once on `path`, drawing the shift, perturbation and
/// split from `rng`.
pub fn check_all<M: NetworkModel, R: Rng + ?Sized>(model: &M, path: PathView<'_>, rng: &mut R) -> Result<Vec<Violation>, NetError> {
    let mut out = causality(model, path)?;
    out.extend(homogeneity(model, path, rng.random_range(-5.0..=5.0), SLACK)?);
    let mut running = f64::NEG_INFINITY;
    let later = shifted(path, |_, t| {
        let bumped = t + if rng.random_bool(0.5) { 0.0 } else { rng.random_range(0.0..3.0) };
        running = running.max(bumped);
        running
    })?;
    out.extend(external_monotonicity(model, path, later.view())?);
    if path.len() > 1 {
        let split = rng.random_range(path.start()..path.end());
        out.extend(separability(model, path, split, rng.random_range(0.0..2.0))?);
    }
    out.extend(internal_monotonicity(model, path)?);
    out.extend(subadditivity(model, path)?);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::StreamKey;

    #[test]
    fn random_cases_satisfy_everything() {
        let mut rng = StreamKey::new(11, 0).rng();
        for _ in 0..200 {
            let (model, _, path) = random_tandem_case(&mut rng, 20);
            let v = check_all(&model, path.view(), &mut rng).unwrap();
            assert!(v.is_empty(), "{v:?}");
        }
    }

    #[test]
    fn double_sup_matches_hand_value() {
        // customers at 0 and 1 with services (1,3), (2,1): recursion gives
        // D1 = (1, 3), D2 = (4, 5)
        let p = SamplePath::from_rows(0, vec![0.0, 1.0], &[vec![1.0, 3.0], vec![2.0, 1.0]]).unwrap();
        assert_eq!(two_station_double_sup(p.view()), 5.0);
    }

    /// A model that ignores arrivals entirely breaks causality.
    struct Broken;
    impl NetworkModel for Broken {
        fn stations(&self) -> usize {
            1
        }
        fn last_activity(&self, path: PathView<'_>) -> Result<f64, NetError> {
            Ok(path.marks().iter().sum())
        }
    }

    #[test]
    fn detects_a_broken_model() {
        let p = SamplePath::from_rows(0, vec![10.0], &[vec![1.0]]).unwrap();
        assert_eq!(causality(&Broken, p.view()).unwrap()[0].axiom, Axiom::Causality);
        assert_eq!(homogeneity(&Broken, p.view(), 1.0, SLACK).unwrap()[0].axiom, Axiom::Homogeneity);
    }
}
