//! Serialization of results to machine- and human-readable formats.
//!
//! Machine outputs (CSV, JSON) carry 17 significant digits so round-trips
//! are lossless; human-readable rendering rounds to 3 decimals.

use std::io::Write;

use serde_json::json;

use crate::error::{Error, Result};
use crate::estimators::Estimate;
use crate::simulation::McResult;

/// Format with 17 significant digits, enough to reproduce an `f64` exactly.
pub fn machine(value: f64) -> String {
    format!("{value:.16e}")
}

fn csv_err(e: csv::Error) -> Error {
    Error::Parse { row: 0, message: e.to_string() }
}

/// JSON document for one estimate: point, standard errors, and sample sizes.
pub fn estimate_json(estimate: &Estimate) -> serde_json::Value {
    let ses = estimate.standard_errors();
    json!({
        "method": estimate.method,
        "estimand": estimate.estimand,
        "coefficients": estimate
            .labels
            .iter()
            .zip(&estimate.point)
            .zip(&ses)
            .map(|((label, &point), &se)| json!({
                "label": label,
                "estimate": point,
                "se": se,
            }))
            .collect::<Vec<_>>(),
        "n_obs": estimate.n_obs,
        "n_clusters": estimate.n_clusters,
    })
}

pub fn write_estimate_json<W: Write>(mut writer: W, estimate: &Estimate) -> Result<()> {
    let doc = estimate_json(estimate);
    serde_json::to_writer_pretty(&mut writer, &doc)
        .map_err(|e| Error::Parse { row: 0, message: e.to_string() })?;
    writeln!(writer)?;
    Ok(())
}

/// CSV with one row per coefficient: `label,estimate,se`.
pub fn write_estimate_csv<W: Write>(writer: W, estimate: &Estimate) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    wtr.write_record(["label", "estimate", "se"]).map_err(csv_err)?;
    let ses = estimate.standard_errors();
    for ((label, &point), &se) in estimate.labels.iter().zip(&estimate.point).zip(&ses) {
        wtr.write_record([label.clone(), machine(point), machine(se)])
            .map_err(csv_err)?;
    }
    wtr.flush()?;
    Ok(())
}

/// CSV for an event study: `rel_time,estimate,se,ci_low,ci_high` with 95%
/// normal confidence bounds. Coefficient labels must follow the `r={k}`
/// convention used by the event-study estimators.
pub fn write_event_study_csv<W: Write>(writer: W, estimate: &Estimate) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    wtr.write_record(["rel_time", "estimate", "se", "ci_low", "ci_high"])
        .map_err(csv_err)?;
    let ses = estimate.standard_errors();
    for ((label, &point), &se) in estimate.labels.iter().zip(&estimate.point).zip(&ses) {
        let rel_time = label
            .strip_prefix("r=")
            .and_then(|s| s.parse::<i64>().ok())
            .ok_or_else(|| Error::Parse {
                row: 0,
                message: format!("coefficient '{label}' is not an event-study bin"),
            })?;
        wtr.write_record([
            rel_time.to_string(),
            machine(point),
            machine(se),
            machine(point - 1.96 * se),
            machine(point + 1.96 * se),
        ])
        .map_err(csv_err)?;
    }
    wtr.flush()?;
    Ok(())
}

/// One-row CSV summary of a Monte Carlo run; `truth` adds bias columns.
pub fn write_mc_summary_csv<W: Write>(
    writer: W,
    result: &McResult,
    truth: Option<f64>,
) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    wtr.write_record(["reps", "completed", "failed", "mean", "sd", "mean_se", "truth", "bias"])
        .map_err(csv_err)?;
    let opt = |v: Option<f64>| v.map_or(String::new(), machine);
    wtr.write_record([
        result.reps.to_string(),
        result.draws.len().to_string(),
        result.errors.len().to_string(),
        machine(result.mean()),
        machine(result.sd()),
        opt(result.mean_se()),
        opt(truth),
        opt(truth.map(|t| result.mean() - t)),
    ])
    .map_err(csv_err)?;
    wtr.flush()?;
    Ok(())
}

/// One method's results within a Monte Carlo suite.
#[derive(Debug, Clone)]
pub struct McSuiteRow {
    pub method: String,
    pub estimand: String,
    pub result: McResult,
    pub truth: Option<f64>,
}

/// CSV with one row per method:
/// `method,estimand,reps,completed,failed,mean,sd,mean_se,truth,bias`.
pub fn write_mc_suite_csv<W: Write>(writer: W, rows: &[McSuiteRow]) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    wtr.write_record([
        "method", "estimand", "reps", "completed", "failed", "mean", "sd", "mean_se", "truth",
        "bias",
    ])
    .map_err(csv_err)?;
    let opt = |v: Option<f64>| v.map_or(String::new(), machine);
    for row in rows {
        wtr.write_record([
            row.method.clone(),
            row.estimand.clone(),
            row.result.reps.to_string(),
            row.result.draws.len().to_string(),
            row.result.errors.len().to_string(),
            machine(row.result.mean()),
            machine(row.result.sd()),
            opt(row.result.mean_se()),
            opt(row.truth),
            opt(row.truth.map(|t| row.result.mean() - t)),
        ])
        .map_err(csv_err)?;
    }
    wtr.flush()?;
    Ok(())
}

/// Long-format draws for a suite: `method,estimand,rep,estimate,se`.
pub fn write_mc_suite_draws_csv<W: Write>(writer: W, rows: &[McSuiteRow]) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    wtr.write_record(["method", "estimand", "rep", "estimate", "se"])
        .map_err(csv_err)?;
    for row in rows {
        for draw in &row.result.draws {
            wtr.write_record([
                row.method.clone(),
                row.estimand.clone(),
                draw.rep.to_string(),
                machine(draw.point),
                draw.se.map_or(String::new(), machine),
            ])
            .map_err(csv_err)?;
        }
    }
    wtr.flush()?;
    Ok(())
}

/// Terminal table for a Monte Carlo suite, rounded to 3 decimals.
pub fn render_mc_suite(rows: &[McSuiteRow]) -> String {
    let mut out = String::from(
        "method      estimand         mean      sd  mean_se    truth     bias  failed\n",
    );
    for row in rows {
        let opt = |v: Option<f64>| v.map_or("       ".into(), |x| format!("{x:7.3}"));
        out.push_str(&format!(
            "{:<11} {:<14} {:7.3} {:7.3}  {}  {}  {}  {:6}\n",
            row.method,
            row.estimand,
            row.result.mean(),
            row.result.sd(),
            opt(row.result.mean_se()),
            opt(row.truth),
            opt(row.truth.map(|t| row.result.mean() - t)),
            row.result.errors.len(),
        ));
    }
    out
}

/// CSV with one row per successful replication: `rep,estimate,se`.
pub fn write_mc_draws_csv<W: Write>(writer: W, result: &McResult) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    wtr.write_record(["rep", "estimate", "se"]).map_err(csv_err)?;
    for draw in &result.draws {
        wtr.write_record([
            draw.rep.to_string(),
            machine(draw.point),
            draw.se.map_or(String::new(), machine),
        ])
        .map_err(csv_err)?;
    }
    wtr.flush()?;
    Ok(())
}

/// Terminal rendering of an estimate, rounded to 3 decimals.
pub fn render_estimate(estimate: &Estimate) -> String {
    let mut out = format!(
        "{} ({}): n_obs = {}, clusters = {}\n",
        estimate.estimand, estimate.method, estimate.n_obs, estimate.n_clusters
    );
    let ses = estimate.standard_errors();
    let width = estimate.labels.iter().map(|l| l.len()).max().unwrap_or(0);
    for ((label, &point), &se) in estimate.labels.iter().zip(&estimate.point).zip(&ses) {
        out.push_str(&format!("  {label:width$}  {point:10.3}  (se {se:.3})\n"));
    }
    out
}

/// Terminal rendering of a Monte Carlo summary, rounded to 3 decimals.
pub fn render_mc(result: &McResult, truth: Option<f64>) -> String {
    let mut out = format!(
        "replications: {} completed, {} failed\nmean = {:.3}, sd = {:.3}",
        result.draws.len(),
        result.errors.len(),
        result.mean(),
        result.sd(),
    );
    if let Some(se) = result.mean_se() {
        out.push_str(&format!(", mean se = {se:.3}"));
    }
    if let Some(t) = truth {
        out.push_str(&format!("\ntruth = {:.3}, bias = {:+.3}", t, result.mean() - t));
    }
    out.push('\n');
    out
}
