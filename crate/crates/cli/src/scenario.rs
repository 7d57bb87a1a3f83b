//! Scenario files: TOML documents describing one experiment.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use tailrate_core::estimate::default_schedule;
use tailrate_core::{DistributionSpec, EstimateConfig, HorizonPolicy, MarkLaw, TandemModel};

use crate::error::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    Gamma,
    Lambda,
    ThetaStar,
    Tail,
    Verify,
    Bounds,
}

impl Task {
    pub fn as_str(&self) -> &'static str {
        match self {
            Task::Gamma => "gamma",
            Task::Lambda => "lambda",
            Task::ThetaStar => "theta_star",
            Task::Tail => "tail",
            Task::Verify => "verify",
            Task::Bounds => "bounds",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Tandem,
    SingleServer,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    pub kind: ModelKind,
    /// Number of stations; defaults to the length of `marks.stations`.
    #[serde(default)]
    pub stations: Option<usize>,
    pub marks: MarkLaw,
}

/// How Verify judges the estimated `θ*` bracket against the closed form.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ThetaCheck {
    /// The bracket must contain the analytic rate.
    #[default]
    Contains,
    /// The bracket must start at or below the analytic rate (`θ_n` increases
    /// towards `θ*`, slowly in some regimes).
    LowerBound,
    /// Reported, not judged.
    Off,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TaskParams {
    pub n_schedule: Option<Vec<usize>>,
    pub theta_grid: Option<Vec<f64>>,
    pub replicas: Option<usize>,
    pub tol: Option<f64>,
    pub theta_max: Option<f64>,
    pub stderr_band: Option<f64>,
    /// Number of stationary delays for Tail and Verify.
    pub count: Option<usize>,
    pub policy: Option<HorizonPolicy>,
    pub quantile_window: Option<[f64; 2]>,
    /// Relative tolerance of the tail-slope check in Verify.
    pub slope_tolerance: Option<f64>,
    pub theta_check: Option<ThetaCheck>,
    /// Bounds: batch size `L`, number of batches and coupled replicas.
    pub batch: Option<usize>,
    pub batches: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub name: String,
    pub seed: u64,
    pub task: Task,
    pub model: ModelSpec,
    pub arrival: DistributionSpec,
    #[serde(default)]
    pub task_params: TaskParams,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
}

pub const DEFAULT_COUNT: usize = 1_000_000;
pub const DEFAULT_QUANTILES: [f64; 2] = [0.95, 0.9999];
pub const DEFAULT_SLOPE_TOLERANCE: f64 = 0.1;
pub const DEFAULT_GAMMA_REPLICAS: usize = 10_000;
pub const DEFAULT_LAMBDA_REPLICAS: usize = 10_000;
pub const DEFAULT_BOUNDS_REPLICAS: usize = 10_000;
pub const DEFAULT_BATCH: usize = 8;
pub const DEFAULT_BATCHES: usize = 64;
pub const MIN_TAIL_COUNT: usize = 1000;

/// A parsed scenario together with the hash of its source text.
#[derive(Debug, Clone)]
pub struct LoadedScenario {
    pub scenario: Scenario,
    pub sha256: String,
    pub source: String,
}

impl LoadedScenario {
    pub fn from_file(path: &Path) -> Result<Self, CliError> {
        let source = std::fs::read_to_string(path).map_err(CliError::io(path))?;
        Self::from_str(&source, path)
    }

    pub fn from_str(source: &str, path: &Path) -> Result<Self, CliError> {
        let scenario: Scenario = toml::from_str(source).map_err(|e| CliError::Parse {
            path: path.to_path_buf(),
            message: e.to_string().trim_end().to_string(),
        })?;
        scenario.validate()?;
        let sha256 = Sha256::digest(source.as_bytes())
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect();
        Ok(Self {
            scenario,
            sha256,
            source: source.to_string(),
        })
    }
}

fn check(ok: bool, field: &str, reason: impl FnOnce() -> String) -> Result<(), CliError> {
    if ok {
        Ok(())
    } else {
        Err(CliError::validation(field, reason()))
    }
}

impl Scenario {
    pub fn model(&self) -> TandemModel {
        TandemModel::new(self.model.marks.stations()).expect("validated station count")
    }

    pub fn estimate_config(&self, default_replicas: usize) -> EstimateConfig {
        let p = &self.task_params;
        let d = EstimateConfig::default();
        EstimateConfig {
            replicas: p.replicas.unwrap_or(default_replicas),
            tol: p.tol.unwrap_or(d.tol),
            theta_max: p.theta_max.unwrap_or(d.theta_max),
            stderr_band: p.stderr_band.unwrap_or(d.stderr_band),
        }
    }

    pub fn schedule(&self) -> Vec<usize> {
        self.task_params.n_schedule.clone().unwrap_or_else(default_schedule)
    }

    pub fn quantiles(&self) -> (f64, f64) {
        let [lo, hi] = self.task_params.quantile_window.unwrap_or(DEFAULT_QUANTILES);
        (lo, hi)
    }

    pub fn policy(&self) -> HorizonPolicy {
        self.task_params.policy.unwrap_or_else(HorizonPolicy::forward)
    }

    /// Checks every precondition that does not need simulation.
    pub fn validate(&self) -> Result<(), CliError> {
        check(
            !self.name.is_empty() && self.name.chars().all(|c| c.is_ascii_alphanumeric() || "-_.".contains(c)) && !self.name.starts_with('.'),
            "name",
            || format!("must be nonempty and use only [A-Za-z0-9._-], got {:?}", self.name),
        )?;
        let k = self.model.marks.stations();
        if let Some(declared) = self.model.stations {
            check(declared == k, "model.stations", || {
                format!("declares {declared} stations but model.marks.stations lists {k}")
            })?;
        }
        if self.model.kind == ModelKind::SingleServer {
            check(k == 1, "model.marks.stations", || format!("single_server takes one station, got {k}"))?;
        }
        let service_mean = self.model.marks.max_station_mean();
        let arrival_mean = self.arrival.mean();
        if service_mean >= arrival_mean {
            return Err(CliError::Unstable {
                service_mean,
                arrival_mean,
            });
        }
        let p = &self.task_params;
        if let Some(s) = &p.n_schedule {
            check(!s.is_empty() && s[0] >= 1 && s.windows(2).all(|w| w[1] > w[0]), "task_params.n_schedule", || {
                "must be a nonempty, strictly increasing list of positive window lengths".into()
            })?;
        }
        if let Some(g) = &p.theta_grid {
            check(!g.is_empty() && g.iter().all(|t| t.is_finite() && *t >= 0.0), "task_params.theta_grid", || {
                "must be a nonempty list of finite, nonnegative θ values".into()
            })?;
        }
        if let Some(r) = p.replicas {
            check(r >= tailrate_core::estimate::MIN_REPLICAS, "task_params.replicas", || {
                format!("must be at least {}, got {r}", tailrate_core::estimate::MIN_REPLICAS)
            })?;
        }
        for (field, v) in [("task_params.tol", p.tol), ("task_params.theta_max", p.theta_max), ("task_params.slope_tolerance", p.slope_tolerance)] {
            if let Some(v) = v {
                check(v.is_finite() && v > 0.0, field, || format!("must be positive and finite, got {v}"))?;
            }
        }
        if let Some(b) = p.stderr_band {
            check(b.is_finite() && b >= 0.0, "task_params.stderr_band", || format!("must be nonnegative, got {b}"))?;
        }
        if let Some([lo, hi]) = p.quantile_window {
            check(0.0 <= lo && lo < hi && hi <= 1.0, "task_params.quantile_window", || {
                format!("needs 0 ≤ q_lo < q_hi ≤ 1, got [{lo}, {hi}]")
            })?;
        }
        if matches!(self.task, Task::Tail | Task::Verify) {
            let count = p.count.unwrap_or(DEFAULT_COUNT);
            check(count >= MIN_TAIL_COUNT, "task_params.count", || {
                format!("slope fitting needs at least {MIN_TAIL_COUNT} delays, got {count}")
            })?;
        }
        if let Some(HorizonPolicy::BackwardWindow { stable_steps, n_max }) = p.policy {
            check(stable_steps >= 1 && n_max >= 1, "task_params.policy", || "stable_steps and n_max must be positive".into())?;
        }
        for (field, v) in [("task_params.batch", p.batch), ("task_params.batches", p.batches)] {
            if let Some(v) = v {
                check(v >= 1, field, || "must be at least 1".into())?;
            }
        }
        if self.task == Task::Lambda {
            check(p.theta_grid.is_some(), "task_params.theta_grid", || "required by the lambda task".into())?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use tailrate_core::NetworkModel;

    const CASE1: &str = r#"
name = "case1"
seed = 7
task = "verify"

[model]
kind = "tandem"
stations = 2
marks = { dependence = "independent", stations = [
    { kind = "exponential", rate = 2.0 },
    { kind = "exponential", rate = 3.0 },
] }

[arrival]
kind = "exponential"
rate = 1.0
"#;

    fn load(src: &str) -> Result<LoadedScenario, CliError> {
        LoadedScenario::from_str(src, Path::new("test.toml"))
    }

    #[test]
    fn parses_and_hashes() {
        let s = load(CASE1).unwrap();
        assert_eq!(s.scenario.task, Task::Verify);
        assert_eq!(s.scenario.model().stations(), 2);
        assert_eq!(s.sha256.len(), 64);
        assert_eq!(load(CASE1).unwrap().sha256, s.sha256);
        assert_eq!(s.scenario.schedule(), default_schedule());
    }

    #[test]
    fn negative_rate_names_the_field() {
        let err = load(&CASE1.replace("rate = 2.0", "rate = -2.0")).unwrap_err();
        assert!(matches!(err, CliError::Parse { .. }));
        assert!(err.to_string().contains("rate"), "{err}");
    }

    #[test]
    fn seed_is_mandatory() {
        let err = load(&CASE1.replace("seed = 7", "")).unwrap_err();
        assert!(err.to_string().contains("seed"), "{err}");
    }

    #[test]
    fn unstable_is_caught_at_parse_time() {
        let err = load(&CASE1.replace("rate = 1.0", "rate = 3.0")).unwrap_err();
        assert!(matches!(err, CliError::Unstable { .. }), "{err}");
    }

    #[test]
    fn station_count_must_match() {
        let err = load(&CASE1.replace("stations = 2", "stations = 3")).unwrap_err();
        assert!(matches!(&err, CliError::Validation { field, .. } if field == "model.stations"), "{err}");
    }

    #[test]
    fn unknown_parameters_are_rejected() {
        let err = load(&format!("{CASE1}\n[task_params]\nreplicaz = 10\n")).unwrap_err();
        assert!(err.to_string().contains("replicaz"), "{err}");
    }

    #[test]
    fn bad_quantile_window() {
        let err = load(&format!("{CASE1}\n[task_params]\nquantile_window = [0.99, 0.5]\n")).unwrap_err();
        assert!(matches!(&err, CliError::Validation { field, .. } if field == "task_params.quantile_window"));
    }
}
