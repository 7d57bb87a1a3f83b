//! Executes a scenario and writes its artifacts.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use tailrate_core::analytic::closed_form_rate;
use tailrate_core::estimate::{gamma_estimate, theta_star, SaturatedSample};
use tailrate_core::io::{fmt_float, write_csv};
use tailrate_core::net::sample_path;
use tailrate_core::tailsim::{ccdf_curve, fit_tail_slope, lower_bound_dater, sample_stationary_daters, upper_bound_dater};
use tailrate_core::{AnalyticError, AnalyticRate, BatchPlan, NetworkModel, SlopeFit, StreamKey, ThetaResult};

use crate::error::CliError;
use crate::scenario::*;

pub const SCHEMA_VERSION: u32 = 1;
pub const OUTPUT_DIR_ENV: &str = "TAILRATE_OUTPUT_DIR";
pub const DEFAULT_OUTPUT_DIR: &str = "tailrate-out";
pub const SUMMARY_FILE: &str = "summary.json";
const CCDF_POINTS: usize = 2000;
const BOUNDS_SLACK: f64 = 1e-9;

// stream tags, one per independent piece of randomness in a run
const TAG_GAMMA: u64 = 1;
const TAG_LAMBDA: u64 = 2;
const TAG_THETA: u64 = 3;
const TAG_TAIL: u64 = 4;
const TAG_BOUNDS_PLAN: u64 = 5;
const TAG_BOUNDS_PATHS: u64 = 6;

/// Every file a run may produce; stale copies are removed before writing.
const ARTIFACTS: &[&str] = &[
    SUMMARY_FILE,
    "scenario.toml",
    "gamma.csv",
    "lambda.csv",
    "theta_star.json",
    "theta_n.csv",
    "tail.csv",
    "ccdf.csv",
    "slope.json",
    "bounds.csv",
    "bounds.json",
    "verify.json",
];

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    /// Overrides the scenario's `output_dir`.
    pub output_dir: Option<PathBuf>,
    /// Worker threads; results do not depend on it.
    pub workers: Option<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    pub dir: PathBuf,
    pub summary: Summary,
}

impl Outcome {
    pub fn passed(&self) -> bool {
        self.summary.status != Status::Fail
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    /// Completed; nothing was judged.
    Ok,
    Pass,
    Fail,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    /// `None` when the check is reported but not judged.
    pub passed: Option<bool>,
    pub detail: String,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct Meta {
    pub schema_version: u32,
    pub scenario: String,
    pub scenario_sha256: String,
    pub seed: u64,
    pub task: Task,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct SlopeSummary {
    pub rate: f64,
    pub stderr: f64,
}

/// One line of `report`.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct Summary {
    #[serde(flatten)]
    pub meta: Meta,
    pub status: Status,
    pub analytic: Option<AnalyticRate>,
    /// Why no closed form is reported, if none is.
    pub analytic_note: Option<String>,
    pub theta_estimate: Option<f64>,
    pub theta_bracket: Option<(f64, f64)>,
    pub slope: Option<SlopeSummary>,
    pub checks: Vec<Check>,
}

#[derive(Serialize)]
struct Artifact<'a, T: Serialize> {
    #[serde(flatten)]
    meta: &'a Meta,
    #[serde(flatten)]
    body: T,
}

struct Writer {
    dir: PathBuf,
    meta: Meta,
}

impl Writer {
    fn path(&self, file: &str) -> PathBuf {
        self.dir.join(file)
    }

    fn json<T: Serialize>(&self, file: &str, body: T) -> Result<(), CliError> {
        let text = serde_json::to_string_pretty(&Artifact { meta: &self.meta, body }).expect("artifacts serialize");
        self.text(file, &(text + "\n"))
    }

    fn text(&self, file: &str, text: &str) -> Result<(), CliError> {
        let path = self.path(file);
        fs::write(&path, text).map_err(CliError::io(path))
    }

    /// CSV with a leading `#` line carrying the provenance fields.
    fn csv(&self, file: &str, header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Result<(), CliError> {
        let path = self.path(file);
        let write = || -> std::io::Result<()> {
            let mut out = BufWriter::new(fs::File::create(&path)?);
            writeln!(
                out,
                "# schema_version={} scenario={} scenario_sha256={} seed={}",
                self.meta.schema_version, self.meta.scenario, self.meta.scenario_sha256, self.meta.seed
            )?;
            write_csv(&mut out, header, rows)?;
            out.flush()
        };
        write().map_err(CliError::io(self.path(file)))
    }
}

fn resolve_output_dir(scenario: &Scenario, opts: &RunOptions) -> PathBuf {
    opts.output_dir
        .clone()
        .or_else(|| scenario.output_dir.clone())
        .or_else(|| std::env::var_os(OUTPUT_DIR_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from(DEFAULT_OUTPUT_DIR))
}

/// Parses, validates and runs the scenario at `path`.
pub fn run(path: &Path, opts: &RunOptions) -> Result<Outcome, CliError> {
    let loaded = LoadedScenario::from_file(path)?;
    run_loaded(&loaded, opts)
}

pub fn run_loaded(loaded: &LoadedScenario, opts: &RunOptions) -> Result<Outcome, CliError> {
    let scenario = &loaded.scenario;
    let dir = resolve_output_dir(scenario, opts).join(&scenario.name);
    fs::create_dir_all(&dir).map_err(CliError::io(&dir))?;
    for file in ARTIFACTS {
        let p = dir.join(file);
        if p.is_file() {
            fs::remove_file(&p).map_err(CliError::io(p))?;
        }
    }
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(w) = opts.workers {
        pool = pool.num_threads(w);
    }
    let pool = pool.build().map_err(|e| CliError::Pool(e.to_string()))?;
    let writer = Writer {
        dir: dir.clone(),
        meta: Meta {
            schema_version: SCHEMA_VERSION,
            scenario: scenario.name.clone(),
            scenario_sha256: loaded.sha256.clone(),
            seed: scenario.seed,
            task: scenario.task,
        },
    };
    writer.text("scenario.toml", &loaded.source)?;
    let summary = pool.install(|| execute(scenario, &writer))?;
    let text = serde_json::to_string_pretty(&summary).expect("summary serializes");
    writer.text(SUMMARY_FILE, &(text + "\n"))?;
    Ok(Outcome { dir, summary })
}

fn analytic(scenario: &Scenario) -> (Option<AnalyticRate>, Option<String>) {
    match closed_form_rate(&scenario.model.marks, &scenario.arrival) {
        None => (None, Some("no closed form for this model".into())),
        Some(Ok(rate)) => (Some(rate), None),
        Some(Err(AnalyticError::UnboundedRate)) => (None, Some("unbounded: service never exceeds inter-arrival".into())),
        Some(Err(e)) => (None, Some(e.to_string())),
    }
}

fn execute(scenario: &Scenario, w: &Writer) -> Result<Summary, CliError> {
    let key = StreamKey::new(scenario.seed, 0);
    let (analytic, analytic_note) = analytic(scenario);
    let mut summary = Summary {
        meta: w.meta.clone(),
        status: Status::Ok,
        analytic,
        analytic_note,
        theta_estimate: None,
        theta_bracket: None,
        slope: None,
        checks: Vec::new(),
    };
    match scenario.task {
        Task::Gamma => run_gamma(scenario, w, key)?,
        Task::Lambda => run_lambda(scenario, w, key)?,
        Task::ThetaStar => {
            let r = run_theta(scenario, w, key)?;
            summary.theta_estimate = Some(r.theta);
            summary.theta_bracket = Some(r.bracket);
        }
        Task::Tail => {
            let fit = run_tail(scenario, w, key, true)?;
            summary.slope = Some(SlopeSummary { rate: fit.rate(), stderr: fit.stderr });
        }
        Task::Bounds => {
            let check = run_bounds(scenario, w, key)?;
            summary.status = if check.passed == Some(true) { Status::Pass } else { Status::Fail };
            summary.checks.push(check);
        }
        Task::Verify => run_verify(scenario, w, key, &mut summary)?,
    }
    Ok(summary)
}

fn run_gamma(s: &Scenario, w: &Writer, key: StreamKey) -> Result<(), CliError> {
    let model = s.model();
    let replicas = s.task_params.replicas.unwrap_or(DEFAULT_GAMMA_REPLICAS);
    let rows = s
        .schedule()
        .into_iter()
        .map(|n| {
            let g = gamma_estimate(&model, &s.model.marks, n, replicas, key.child(TAG_GAMMA).child(n as u64))?;
            Ok(vec![n.to_string(), fmt_float(g.gamma), fmt_float(g.stderr), g.samples.to_string()])
        })
        .collect::<Result<Vec<_>, CliError>>()?;
    w.csv("gamma.csv", &["n", "gamma", "stderr", "samples"], rows)
}

fn run_lambda(s: &Scenario, w: &Writer, key: StreamKey) -> Result<(), CliError> {
    let model = s.model();
    let replicas = s.task_params.replicas.unwrap_or(DEFAULT_LAMBDA_REPLICAS);
    let grid = s.task_params.theta_grid.clone().unwrap_or_default();
    let mut rows = Vec::new();
    for n in s.schedule() {
        let sample = SaturatedSample::draw(&model, &s.model.marks, n, replicas, key.child(TAG_LAMBDA).child(n as u64))?;
        rows.extend(grid.iter().map(|&t| sample.lambda(t).csv_row()));
    }
    w.csv("lambda.csv", &tailrate_core::LambdaEstimate::CSV_HEADER, rows)
}

fn run_theta(s: &Scenario, w: &Writer, key: StreamKey) -> Result<ThetaResult, CliError> {
    let cfg = s.estimate_config(tailrate_core::EstimateConfig::default().replicas);
    let r = theta_star(&s.model(), &s.model.marks, &s.arrival, &s.schedule(), &cfg, key.child(TAG_THETA))?;
    let opt = |x: Option<f64>| x.map_or_else(String::new, fmt_float);
    let rows = r.history.iter().map(|step| {
        vec![
            step.n.to_string(),
            opt(step.theta),
            opt(step.bracket.map(|b| b.0)),
            opt(step.bracket.map(|b| b.1)),
            fmt_float(step.gamma),
            step.divergence_limited.to_string(),
        ]
    });
    w.csv("theta_n.csv", &["n", "theta", "bracket_lo", "bracket_hi", "gamma", "divergence_limited"], rows)?;
    #[derive(Serialize)]
    struct Body<'a> {
        config: tailrate_core::EstimateConfig,
        result: &'a ThetaResult,
    }
    w.json("theta_star.json", Body { config: cfg, result: &r })?;
    Ok(r)
}

fn run_tail(s: &Scenario, w: &Writer, key: StreamKey, write_sample: bool) -> Result<SlopeFit, CliError> {
    let count = s.task_params.count.unwrap_or(DEFAULT_COUNT);
    let sample = sample_stationary_daters(&s.model(), &s.model.marks, &s.arrival, count, key.child(TAG_TAIL), s.policy())?;
    sample.check_horizon()?;
    let (q_lo, q_hi) = s.quantiles();
    let fit = fit_tail_slope(&sample.values, q_lo, q_hi)?;
    if write_sample {
        w.csv("tail.csv", &["z"], sample.values.iter().map(|z| vec![fmt_float(*z)]))?;
    }
    let curve = ccdf_curve(&sample.values, CCDF_POINTS);
    w.csv("ccdf.csv", &["x", "log_ccdf"], curve.into_iter().map(|(x, y)| vec![fmt_float(x), fmt_float(y)]))?;
    #[derive(Serialize)]
    struct Body<'a> {
        fit: &'a SlopeFit,
        rate: f64,
        count: usize,
        mean: f64,
        horizon: tailrate_core::tailsim::HorizonRecord,
        warmup: usize,
        horizon_exceeded: usize,
    }
    w.json(
        "slope.json",
        Body {
            fit: &fit,
            rate: fit.rate(),
            count,
            mean: sample.mean(),
            horizon: sample.horizon,
            warmup: sample.warmup,
            horizon_exceeded: sample.horizon_exceeded,
        },
    )?;
    Ok(fit)
}

fn run_bounds(s: &Scenario, w: &Writer, key: StreamKey) -> Result<Check, CliError> {
    let model = s.model();
    let marks = &s.model.marks;
    let batch = s.task_params.batch.unwrap_or(DEFAULT_BATCH);
    let batches = s.task_params.batches.unwrap_or(DEFAULT_BATCHES);
    let replicas = s.task_params.replicas.unwrap_or(DEFAULT_BOUNDS_REPLICAS);
    let plan = BatchPlan::new(&model, marks, &s.arrival, batch, replicas.max(tailrate_core::estimate::MIN_REPLICAS), key.child(TAG_BOUNDS_PLAN))?;
    let start = -((batch * batches) as i64) + 1;
    let paths = key.child(TAG_BOUNDS_PATHS);
    let triples = (0..replicas as u64)
        .into_par_iter()
        .map(|i| {
            let p = sample_path(&s.arrival, marks, start, 0, paths.replica(i))?;
            Ok((
                lower_bound_dater(&model, p.view())?,
                model.stationary_dater_truncated(p.view())?,
                upper_bound_dater(&model, &plan, p.view())?,
            ))
        })
        .collect::<Result<Vec<_>, CliError>>()?;
    let violations = triples
        .iter()
        .filter(|(lo, z, hi)| *lo > z + BOUNDS_SLACK || *z > hi + BOUNDS_SLACK)
        .count();
    w.csv(
        "bounds.csv",
        &["replica", "lower", "truncated", "upper"],
        triples
            .iter()
            .enumerate()
            .map(|(i, (lo, z, hi))| vec![i.to_string(), fmt_float(*lo), fmt_float(*z), fmt_float(*hi)]),
    )?;
    let mean = |f: fn(&(f64, f64, f64)) -> f64| triples.iter().map(f).sum::<f64>() / triples.len() as f64;
    #[derive(Serialize)]
    struct Body {
        plan: BatchPlan,
        batches: usize,
        replicas: usize,
        slack: f64,
        violations: usize,
        mean_lower: f64,
        mean_truncated: f64,
        mean_upper: f64,
    }
    w.json(
        "bounds.json",
        Body {
            plan,
            batches,
            replicas,
            slack: BOUNDS_SLACK,
            violations,
            mean_lower: mean(|t| t.0),
            mean_truncated: mean(|t| t.1),
            mean_upper: mean(|t| t.2),
        },
    )?;
    Ok(Check {
        name: "sandwich".into(),
        passed: Some(violations == 0),
        detail: format!("{violations} of {replicas} replicas outside lower ≤ Z ≤ upper (slack {BOUNDS_SLACK:e})"),
    })
}

fn run_verify(s: &Scenario, w: &Writer, key: StreamKey, summary: &mut Summary) -> Result<(), CliError> {
    let fit = run_tail(s, w, key, false)?;
    let theta = run_theta(s, w, key)?;
    summary.slope = Some(SlopeSummary { rate: fit.rate(), stderr: fit.stderr });
    summary.theta_estimate = Some(theta.theta);
    summary.theta_bracket = Some(theta.bracket);
    let tol = s.task_params.slope_tolerance.unwrap_or(DEFAULT_SLOPE_TOLERANCE);
    let mode = s.task_params.theta_check.unwrap_or_default();
    let mut checks = Vec::new();
    match &summary.analytic {
        Some(a) => {
            let target = a.theta_star;
            checks.push(Check {
                name: "tail_slope".into(),
                passed: Some((fit.rate() - target).abs() <= tol * target),
                detail: format!("slope {:.6} vs analytic {:.6}, tolerance ±{}%", fit.rate(), target, tol * 100.0),
            });
            let (lo, hi) = theta.bracket;
            let (passed, rule) = match mode {
                ThetaCheck::Contains => (Some(lo <= target && target <= hi), "bracket contains analytic"),
                ThetaCheck::LowerBound => (Some(lo <= target), "bracket starts at or below analytic"),
                ThetaCheck::Off => (None, "not judged"),
            };
            checks.push(Check {
                name: "theta_bracket".into(),
                passed,
                detail: format!("[{lo:.6}, {hi:.6}] vs analytic {target:.6}: {rule}"),
            });
        }
        None => {
            let target = theta.theta;
            checks.push(Check {
                name: "tail_slope".into(),
                passed: Some((fit.rate() - target).abs() <= tol * target),
                detail: format!("slope {:.6} vs estimated θ* {:.6}, tolerance ±{}%", fit.rate(), target, tol * 100.0),
            });
        }
    }
    let failed = checks.iter().any(|c| c.passed == Some(false));
    summary.status = if failed { Status::Fail } else { Status::Pass };
    summary.checks = checks;
    #[derive(Serialize)]
    struct Body<'a> {
        status: Status,
        analytic: &'a Option<AnalyticRate>,
        analytic_note: &'a Option<String>,
        tail_slope: &'a SlopeFit,
        theta_star: &'a ThetaResult,
        slope_tolerance: f64,
        theta_check: ThetaCheck,
        checks: &'a [Check],
    }
    w.json(
        "verify.json",
        Body {
            status: summary.status,
            analytic: &summary.analytic,
            analytic_note: &summary.analytic_note,
            tail_slope: &fit,
            theta_star: &theta,
            slope_tolerance: tol,
            theta_check: mode,
            checks: &summary.checks,
        },
    )
}
