//! Plain-text table over the summaries in an artifact directory.

use std::fmt::Write;
use std::fs;
use std::path::{Path, PathBuf};

use crate::error::CliError;
use crate::run::{Status, Summary, SUMMARY_FILE};

/// `summary.json` in `dir` itself and in its immediate subdirectories,
/// sorted by path.
fn summaries(dir: &Path) -> Result<Vec<PathBuf>, CliError> {
    if !dir.is_dir() {
        return Err(CliError::MissingArtifacts(dir.to_path_buf()));
    }
    let mut found = Vec::new();
    let own = dir.join(SUMMARY_FILE);
    if own.is_file() {
        found.push(own);
    }
    let mut entries: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(CliError::io(dir))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_dir())
        .collect();
    entries.sort();
    found.extend(entries.into_iter().map(|p| p.join(SUMMARY_FILE)).filter(|p| p.is_file()));
    if found.is_empty() {
        return Err(CliError::MissingArtifacts(dir.to_path_buf()));
    }
    Ok(found)
}

pub fn load_summaries(dir: &Path) -> Result<Vec<Summary>, CliError> {
    summaries(dir)?
        .into_iter()
        .map(|p| {
            let text = fs::read_to_string(&p).map_err(CliError::io(&p))?;
            serde_json::from_str(&text).map_err(|e| CliError::Parse {
                path: p.clone(),
                message: e.to_string(),
            })
        })
        .collect()
}

fn num(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.4}")
    } else {
        x.to_string()
    }
}

/// The table printed by `tailrate report`.
pub fn render(dir: &Path) -> Result<String, CliError> {
    let rows: Vec<[String; 6]> = load_summaries(dir)?
        .iter()
        .map(|s| {
            [
                s.meta.scenario.clone(),
                s.meta.task.as_str().to_string(),
                s.analytic.as_ref().map_or_else(|| "-".into(), |a| num(a.theta_star)),
                s.theta_bracket.map_or_else(|| "-".into(), |(lo, hi)| format!("[{}, {}]", num(lo), num(hi))),
                s.slope.as_ref().map_or_else(|| "-".into(), |f| format!("{} ± {}", num(f.rate), num(f.stderr))),
                match s.status {
                    Status::Ok => "-",
                    Status::Pass => "pass",
                    Status::Fail => "FAIL",
                }
                .to_string(),
            ]
        })
        .collect();
    let header = ["instance", "task", "analytic θ*", "θ* bracket", "tail slope", "result"];
    let mut widths = header.map(|h| h.chars().count());
    for row in &rows {
        for (w, cell) in widths.iter_mut().zip(row) {
            *w = (*w).max(cell.chars().count());
        }
    }
    let mut out = String::new();
    let line = |out: &mut String, cells: &[&str]| {
        let padded: Vec<String> = cells
            .iter()
            .zip(&widths)
            .map(|(c, w)| format!("{c}{}", " ".repeat(w - c.chars().count())))
            .collect();
        writeln!(out, "{}", padded.join("  ").trim_end()).unwrap();
    };
    line(&mut out, &header);
    let rule: Vec<String> = widths.iter().map(|w| "-".repeat(*w)).collect();
    line(&mut out, &rule.iter().map(String::as_str).collect::<Vec<_>>());
    for row in &rows {
        line(&mut out, &row.iter().map(String::as_str).collect::<Vec<_>>());
    }
    Ok(out)
}
