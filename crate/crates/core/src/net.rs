//! Monotone-separable networks and their path functionals.
//!
//! A network is described only through its last-activity functional
//! `X_{[m,n]}(N)` on finite windows; the maximal dater is
//! `Z_{[m,n]}(N) = X_{[m,n]}(N) − T_n`. The four structural axioms
//! (causality, external monotonicity, homogeneity, separability) are checked
//! by property tests rather than enforced by the type system.

use std::fmt::Write as _;

use rand::Rng;
use thiserror::Error;

use crate::dist::{DistributionSpec, MarkLaw};
use crate::io::fmt_float;
use crate::rng::StreamKey;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum NetError {
    #[error("empty window")]
    EmptyWindow,
    #[error("expected {expected} stations per mark, got {got}")]
    StationMismatch { expected: usize, got: usize },
    #[error("arrivals and marks disagree on window length ({arrivals} vs {marks})")]
    LengthMismatch { arrivals: usize, marks: usize },
    #[error("service time of customer {index} is negative or not finite")]
    InvalidMark { index: i64 },
    #[error("arrival epochs decrease at customer {index}")]
    NonMonotoneArrivals { index: i64 },
    #[error("window [{m}, {n}] is not inside the path")]
    WindowOutOfRange { m: i64, n: i64 },
    #[error("window must end at index 0, ends at {end}")]
    NotEndingAtZero { end: i64 },
    #[error("malformed columnar path: {0}")]
    Parse(String),
}

/// A finite window of arrival epochs `T_m..T_n` and service marks `ζ_m..ζ_n`.
#[derive(Debug, Clone, PartialEq)]
pub struct SamplePath {
    start: i64,
    stations: usize,
    arrivals: Vec<f64>,
    marks: Vec<f64>,
    seed: Option<StreamKey>,
}

impl SamplePath {
    /// `marks` is row-major: customer `start + i` owns `marks[i*K .. (i+1)*K]`.
    pub fn new(start: i64, stations: usize, arrivals: Vec<f64>, marks: Vec<f64>) -> Result<Self, NetError> {
        if arrivals.is_empty() {
            return Err(NetError::EmptyWindow);
        }
        if stations == 0 || !marks.len().is_multiple_of(stations) {
            return Err(NetError::StationMismatch {
                expected: stations,
                got: marks.len(),
            });
        }
        if marks.len() / stations != arrivals.len() {
            return Err(NetError::LengthMismatch {
                arrivals: arrivals.len(),
                marks: marks.len() / stations,
            });
        }
        for (i, w) in arrivals.windows(2).enumerate() {
            if !(w[1] >= w[0]) {
                return Err(NetError::NonMonotoneArrivals {
                    index: start + i as i64 + 1,
                });
            }
        }
        if arrivals.iter().any(|t| !t.is_finite()) {
            return Err(NetError::NonMonotoneArrivals { index: start });
        }
        for (i, &s) in marks.iter().enumerate() {
            if !(s.is_finite() && s >= 0.0) {
                return Err(NetError::InvalidMark {
                    index: start + (i / stations) as i64,
                });
            }
        }
        Ok(Self {
            start,
            stations,
            arrivals,
            marks,
            seed: None,
        })
    }

    /// Builds a path from per-customer mark vectors.
    pub fn from_rows(start: i64, arrivals: Vec<f64>, marks: &[Vec<f64>]) -> Result<Self, NetError> {
        let stations = marks.first().map_or(0, Vec::len);
        if marks.iter().any(|m| m.len() != stations) {
            return Err(NetError::StationMismatch {
                expected: stations,
                got: marks.iter().map(Vec::len).find(|&l| l != stations).unwrap_or(0),
            });
        }
        Self::new(start, stations, arrivals, marks.concat())
    }

    pub fn with_seed(mut self, seed: StreamKey) -> Self {
        self.seed = Some(seed);
        self
    }

    pub fn seed(&self) -> Option<StreamKey> {
        self.seed
    }

    pub fn view(&self) -> PathView<'_> {
        PathView {
            start: self.start,
            stations: self.stations,
            arrivals: &self.arrivals,
            marks: &self.marks,
        }
    }

    /// The sub-window `[m, n]` (inclusive).
    pub fn window(&self, m: i64, n: i64) -> Result<PathView<'_>, NetError> {
        self.view().window(m, n)
    }

    pub fn start(&self) -> i64 {
        self.start
    }

    pub fn end(&self) -> i64 {
        self.start + self.arrivals.len() as i64 - 1
    }

    pub fn stations(&self) -> usize {
        self.stations
    }

    pub fn arrivals(&self) -> &[f64] {
        &self.arrivals
    }

    pub fn marks(&self) -> &[f64] {
        &self.marks
    }

    /// The same marks with arrivals replaced (validated again).
    pub fn with_arrivals(&self, arrivals: Vec<f64>) -> Result<Self, NetError> {
        let mut p = Self::new(self.start, self.stations, arrivals, self.marks.clone())?;
        p.seed = self.seed;
        Ok(p)
    }

    /// One row per customer: `index,T,sigma1..sigmaK`, preceded by a seed
    /// comment when the path was sampled.
    pub fn to_columnar(&self) -> String {
        let mut out = String::new();
        if let Some(key) = self.seed {
            let _ = writeln!(out, "# seed={} stream={}", key.seed, key.stream);
        }
        out.push_str("index,T");
        for s in 1..=self.stations {
            let _ = write!(out, ",sigma{s}");
        }
        out.push('\n');
        for (i, t) in self.arrivals.iter().enumerate() {
            let _ = write!(out, "{},{}", self.start + i as i64, fmt_float(*t));
            for s in &self.marks[i * self.stations..(i + 1) * self.stations] {
                let _ = write!(out, ",{}", fmt_float(*s));
            }
            out.push('\n');
        }
        out
    }

    pub fn from_columnar(text: &str) -> Result<Self, NetError> {
        let parse_err = |msg: String| NetError::Parse(msg);
        let mut seed = None;
        let mut lines = text.lines().filter(|l| !l.trim().is_empty()).peekable();
        if let Some(first) = lines.peek() {
            if let Some(rest) = first.strip_prefix("# ") {
                let mut s = None;
                let mut st = None;
                for kv in rest.split_whitespace() {
                    match kv.split_once('=') {
                        Some(("seed", v)) => s = v.parse().ok(),
                        Some(("stream", v)) => st = v.parse().ok(),
                        _ => {}
                    }
                }
                seed = s.zip(st).map(|(s, st)| StreamKey::new(s, st));
                lines.next();
            }
        }
        let header = lines.next().ok_or_else(|| parse_err("missing header".into()))?;
        let stations = header.split(',').count().saturating_sub(2);
        let mut start = None;
        let mut arrivals = Vec::new();
        let mut marks = Vec::new();
        for (row, line) in lines.enumerate() {
            let cells: Vec<&str> = line.split(',').collect();
            if cells.len() != stations + 2 {
                return Err(parse_err(format!("row {row} has {} cells", cells.len())));
            }
            let idx: i64 = cells[0].trim().parse().map_err(|_| parse_err(format!("row {row}: bad index")))?;
            let s = *start.get_or_insert(idx);
            if idx != s + row as i64 {
                return Err(parse_err(format!("row {row}: index {idx} out of sequence")));
            }
            let num = |c: &str| c.trim().parse::<f64>().map_err(|_| parse_err(format!("row {row}: bad number {c:?}")));
            arrivals.push(num(cells[1])?);
            for c in &cells[2..] {
                marks.push(num(c)?);
            }
        }
        let path = Self::new(start.unwrap_or(0), stations, arrivals, marks)?;
        Ok(match seed {
            Some(k) => path.with_seed(k),
            None => path,
        })
    }
}

/// A borrowed window of a [`SamplePath`].
#[derive(Debug, Clone, Copy)]
pub struct PathView<'a> {
    start: i64,
    stations: usize,
    arrivals: &'a [f64],
    marks: &'a [f64],
}

impl<'a> PathView<'a> {
    pub fn len(&self) -> usize {
        self.arrivals.len()
    }

    pub fn is_empty(&self) -> bool {
        self.arrivals.is_empty()
    }

    pub fn start(&self) -> i64 {
        self.start
    }

    pub fn end(&self) -> i64 {
        self.start + self.arrivals.len() as i64 - 1
    }

    pub fn stations(&self) -> usize {
        self.stations
    }

    pub fn arrivals(&self) -> &'a [f64] {
        self.arrivals
    }

    pub fn marks(&self) -> &'a [f64] {
        self.marks
    }

    /// `T_index` for an absolute customer index.
    pub fn arrival(&self, index: i64) -> f64 {
        self.arrivals[(index - self.start) as usize]
    }

    /// `ζ_index` for an absolute customer index.
    pub fn mark(&self, index: i64) -> &'a [f64] {
        let i = (index - self.start) as usize;
        &self.marks[i * self.stations..(i + 1) * self.stations]
    }

    pub fn last_arrival(&self) -> f64 {
        *self.arrivals.last().expect("views are nonempty")
    }

    pub fn window(&self, m: i64, n: i64) -> Result<PathView<'a>, NetError> {
        if m > n {
            return Err(NetError::EmptyWindow);
        }
        if m < self.start || n > self.end() {
            return Err(NetError::WindowOutOfRange { m, n });
        }
        let lo = (m - self.start) as usize;
        let hi = (n - self.start) as usize + 1;
        Ok(PathView {
            start: m,
            stations: self.stations,
            arrivals: &self.arrivals[lo..hi],
            marks: &self.marks[lo * self.stations..hi * self.stations],
        })
    }
}

/// Incremental evaluation of `Z_{[−j,0]}` as customers are prepended.
pub trait BackwardDater {
    /// Prepends the next customer to the left. `offset` is `T_{−j} − T_0`
    /// (so `0` for the first call, which pushes customer 0). Returns
    /// `Z_{[−j,0]}(N)`.
    fn push_front(&mut self, offset: f64, mark: &[f64]) -> f64;

    /// `Z_{[−j,0]}(N⁰)` for the customers pushed so far.
    fn saturated(&self) -> f64;

    /// Number of customers pushed so far.
    fn len(&self) -> usize;

    fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// A monotone-separable network, known through its last-activity functional.
pub trait NetworkModel: Sync {
    fn stations(&self) -> usize;

    /// `X_{[m,n]}(N)`: the epoch of last activity when the empty network is
    /// fed exactly the customers of `path`.
    fn last_activity(&self, path: PathView<'_>) -> Result<f64, NetError>;

    /// `Z_{[m,n]}(N) = X_{[m,n]}(N) − T_n`.
    fn maximal_dater(&self, path: PathView<'_>) -> Result<f64, NetError> {
        Ok(self.last_activity(path)? - path.last_arrival())
    }

    /// `Z_{[1,n]}(N⁰)` for row-major marks, with every arrival at time 0.
    fn maximal_dater_saturated(&self, marks: &[f64]) -> Result<f64, NetError> {
        let k = self.stations();
        if marks.is_empty() {
            return Err(NetError::EmptyWindow);
        }
        let zeros = vec![0.0; marks.len() / k];
        let path = SamplePath::new(1, k, zeros, marks.to_vec())?;
        self.last_activity(path.view())
    }

    /// `Z_{[−n,0]}(N)`, the truncation of the stationary maximal dater.
    fn stationary_dater_truncated(&self, path: PathView<'_>) -> Result<f64, NetError> {
        if path.end() != 0 {
            return Err(NetError::NotEndingAtZero { end: path.end() });
        }
        self.maximal_dater(path)
    }

    /// Station count when the model is a plain tandem, which enables the
    /// forward-ergodic sampler.
    fn tandem_stations(&self) -> Option<usize> {
        None
    }

    /// Left-extension evaluator. The default recomputes every window from
    /// scratch; models with a cheaper recursion override it.
    fn backward_dater(&self) -> Box<dyn BackwardDater + '_>
    where
        Self: Sized,
    {
        Box::new(RecomputingDater {
            model: self,
            offsets: Vec::new(),
            marks: Vec::new(),
            z: f64::NEG_INFINITY,
            z_sat: 0.0,
        })
    }
}

struct RecomputingDater<'a, M: NetworkModel> {
    model: &'a M,
    // stored right-to-left
    offsets: Vec<f64>,
    marks: Vec<Vec<f64>>,
    z: f64,
    z_sat: f64,
}

impl<M: NetworkModel> BackwardDater for RecomputingDater<'_, M> {
    fn push_front(&mut self, offset: f64, mark: &[f64]) -> f64 {
        self.offsets.push(offset);
        self.marks.push(mark.to_vec());
        let arrivals: Vec<f64> = self.offsets.iter().rev().copied().collect();
        let marks: Vec<f64> = self.marks.iter().rev().flatten().copied().collect();
        let start = -(arrivals.len() as i64 - 1);
        let path = SamplePath::new(start, self.model.stations(), arrivals, marks.clone())
            .expect("backward pushes keep arrivals ordered");
        self.z = self.model.maximal_dater(path.view()).expect("nonempty window");
        self.z_sat = self.model.maximal_dater_saturated(&marks).expect("nonempty window");
        self.z
    }

    fn saturated(&self) -> f64 {
        self.z_sat
    }

    fn len(&self) -> usize {
        self.offsets.len()
    }
}

/// `K` single-server FIFO stations in series; `K = 1` is the `GI/GI/1` queue.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TandemModel {
    stations: usize,
}

impl TandemModel {
    pub fn new(stations: usize) -> Result<Self, NetError> {
        if stations == 0 {
            return Err(NetError::StationMismatch {
                expected: 1,
                got: 0,
            });
        }
        Ok(Self { stations })
    }

    pub fn single_server() -> Self {
        Self { stations: 1 }
    }

    fn check(&self, got: usize) -> Result<(), NetError> {
        if got != self.stations {
            return Err(NetError::StationMismatch {
                expected: self.stations,
                got,
            });
        }
        Ok(())
    }
}

impl NetworkModel for TandemModel {
    fn stations(&self) -> usize {
        self.stations
    }

    /// Forward departure recursions, station by station:
    /// `D_1(k) = max(D_1(k−1), T_k) + σ_1(k)`,
    /// `D_s(k) = max(D_s(k−1), D_{s−1}(k)) + σ_s(k)`; `X = D_K(n)`.
    fn last_activity(&self, path: PathView<'_>) -> Result<f64, NetError> {
        self.check(path.stations())?;
        if path.is_empty() {
            return Err(NetError::EmptyWindow);
        }
        let mut depart = vec![f64::NEG_INFINITY; self.stations];
        for (t, sigma) in path.arrivals().iter().zip(path.marks().chunks_exact(self.stations)) {
            let mut ready = *t;
            for (d, s) in depart.iter_mut().zip(sigma) {
                *d = d.max(ready) + s;
                ready = *d;
            }
        }
        Ok(depart[self.stations - 1])
    }

    fn maximal_dater_saturated(&self, marks: &[f64]) -> Result<f64, NetError> {
        if marks.is_empty() {
            return Err(NetError::EmptyWindow);
        }
        if !marks.len().is_multiple_of(self.stations) {
            return Err(NetError::StationMismatch {
                expected: self.stations,
                got: marks.len() % self.stations,
            });
        }
        Ok(saturated_tandem(self.stations, marks))
    }

    fn tandem_stations(&self) -> Option<usize> {
        Some(self.stations)
    }

    fn backward_dater(&self) -> Box<dyn BackwardDater + '_> {
        Box::new(TandemBackward {
            value: vec![0.0; self.stations],
            pushed: 0,
            z: f64::NEG_INFINITY,
        })
    }
}

/// `Z_{[1,n]}(N⁰)` for a tandem: the longest monotone lattice path through
/// the (customer × station) grid of service times.
pub(crate) fn saturated_tandem(stations: usize, marks: &[f64]) -> f64 {
    if stations == 1 {
        return marks.iter().sum();
    }
    let mut depart = vec![0.0f64; stations];
    for sigma in marks.chunks_exact(stations) {
        let mut ready = 0.0f64;
        for (d, s) in depart.iter_mut().zip(sigma) {
            *d = d.max(ready) + s;
            ready = *d;
        }
    }
    depart[stations - 1]
}

/// `value[s]` is the heaviest lattice path from (first customer, station s)
/// to (customer 0, station K).
struct TandemBackward {
    value: Vec<f64>,
    pushed: usize,
    z: f64,
}

impl BackwardDater for TandemBackward {
    fn push_front(&mut self, offset: f64, mark: &[f64]) -> f64 {
        let k = self.value.len();
        debug_assert_eq!(mark.len(), k);
        if self.pushed == 0 {
            let mut below = 0.0;
            for s in (0..k).rev() {
                self.value[s] = mark[s] + below;
                below = self.value[s];
            }
        } else {
            let mut below = f64::NEG_INFINITY;
            for s in (0..k).rev() {
                self.value[s] = mark[s] + below.max(self.value[s]);
                below = self.value[s];
            }
        }
        self.pushed += 1;
        self.z = self.z.max(offset + self.value[0]);
        self.z
    }

    fn saturated(&self) -> f64 {
        self.value[0]
    }

    fn len(&self) -> usize {
        self.pushed
    }
}

/// Samples the window `[m, n]` with i.i.d. inter-arrivals and marks.
///
/// Arrival epochs are anchored so that `T_0 = 0` when the window contains
/// index 0, and `T_m = 0` otherwise.
pub fn sample_path(
    arrival: &DistributionSpec,
    marks: &MarkLaw,
    m: i64,
    n: i64,
    key: StreamKey,
) -> Result<SamplePath, NetError> {
    if m > n {
        return Err(NetError::EmptyWindow);
    }
    let len = (n - m + 1) as usize;
    let k = marks.stations();
    let mut rng = key.rng();
    let mut arrivals = Vec::with_capacity(len);
    let mut flat = vec![0.0; len * k];
    let mut t = 0.0;
    for i in 0..len {
        if i > 0 {
            t += arrival.sample(&mut rng);
        }
        arrivals.push(t);
        marks.sample_into(&mut rng, &mut flat[i * k..(i + 1) * k]);
    }
    if m <= 0 && 0 <= n {
        let anchor = arrivals[(-m) as usize];
        for a in &mut arrivals {
            *a -= anchor;
        }
    }
    Ok(SamplePath::new(m, k, arrivals, flat)?.with_seed(key))
}

/// Draws `n` customers' marks (row-major) for a saturated evaluation.
pub fn sample_marks<R: Rng + ?Sized>(marks: &MarkLaw, n: usize, rng: &mut R, out: &mut Vec<f64>) {
    let k = marks.stations();
    out.clear();
    out.resize(n * k, 0.0);
    for row in out.chunks_exact_mut(k) {
        marks.sample_into(rng, row);
    }
}
