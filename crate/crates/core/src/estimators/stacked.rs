//! Stacked difference in differences.
//!
//! One sub-dataset is built per treated cohort: the cohort's units plus a
//! control pool, restricted to an event window around the cohort's adoption
//! time. The sub-datasets are stacked and a single regression of outcomes on
//! treatment status with dataset-specific group and time effects is fit.
//! Control units can appear in several sub-datasets; inference clusters on
//! the original unit-level clusters across the whole stack.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::estimators::Estimate;
use crate::panel::Panel;
use crate::regression::{cluster_vcov, wls_fit_matrix};

#[derive(Debug, Clone, Copy)]
pub struct StackedOptions {
    /// Pre-treatment periods per window.
    pub pre_periods: i64,
    /// Post-treatment periods per window (the window is
    /// `[adoption - pre, adoption + post - 1]`).
    pub post_periods: i64,
    /// Add not-yet-treated units (adoption after the window end) to the
    /// control pool; by default only never-treated units serve as controls.
    pub include_not_yet_treated: bool,
}

impl StackedOptions {
    pub fn new(pre_periods: i64, post_periods: i64) -> Self {
        Self { pre_periods, post_periods, include_not_yet_treated: false }
    }
}

/// Stacked difference-in-differences estimate of the `post_periods`-capped
/// effect.
pub fn stacked_did(panel: &Panel, options: &StackedOptions) -> Result<Estimate> {
    if options.pre_periods < 0 || options.post_periods < 1 {
        return Err(Error::InvalidConfig(format!(
            "stacked windows need pre >= 0 and post >= 1, got pre {} post {}",
            options.pre_periods, options.post_periods
        )));
    }
    if panel.cohorts().is_empty() {
        return Err(Error::NoTreatedCells);
    }

    // stacked rows: (panel row index, dataset adoption time, treated-group
    // membership)
    let mut stacked: Vec<(usize, i64, bool)> = Vec::new();
    let rows = panel.rows();
    for &a in panel.cohorts() {
        let start = a - options.pre_periods;
        let end = a + options.post_periods - 1;
        for t in start..=end {
            if !panel.times().contains(&t) {
                return Err(Error::WindowUnavailable { adoption: a, start, end });
            }
        }
        let mut n_treated = 0usize;
        let mut n_control = 0usize;
        for (i, r) in rows.iter().enumerate() {
            if r.time < start || r.time > end || r.estimand_excluded {
                continue;
            }
            let in_group = r.adoption == Some(a);
            let is_control = r.adoption.is_none()
                || (options.include_not_yet_treated
                    && r.adoption.is_some_and(|other| other > end));
            if in_group || is_control {
                stacked.push((i, a, in_group));
                if in_group {
                    n_treated += 1;
                } else {
                    n_control += 1;
                }
            }
        }
        if n_treated == 0 || n_control == 0 {
            let total = (n_treated + n_control).max(1);
            return Err(Error::DegenerateDataset {
                adoption: a,
                share: n_treated as f64 / total as f64,
            });
        }
    }

    // Design: D, plus per-dataset treated-group dummy and per-dataset time
    // dummies. Rows are partitioned by dataset, so the blocks are mutually
    // orthogonal and no reference level is needed without a global intercept.
    let n = stacked.len();
    let mut labels: Vec<String> = Vec::new();
    let mut columns: Vec<Vec<f64>> = Vec::new();
    for &a in panel.cohorts() {
        labels.push(format!("ds{a}:group"));
        columns.push(
            stacked
                .iter()
                .map(|&(_, ds, grp)| (ds == a && grp) as u8 as f64)
                .collect(),
        );
        let start = a - options.pre_periods;
        let end = a + options.post_periods - 1;
        for t in start..=end {
            labels.push(format!("ds{a}:time[{t}]"));
            columns.push(
                stacked
                    .iter()
                    .map(|&(i, ds, _)| (ds == a && rows[i].time == t) as u8 as f64)
                    .collect(),
            );
        }
    }
    labels.push("att".into());
    columns.push(
        stacked
            .iter()
            .map(|&(i, ds, grp)| (grp && rows[i].time >= ds) as u8 as f64)
            .collect(),
    );

    let k = columns.len();
    let x = DMatrix::from_fn(n, k, |i, j| columns[j][i]);
    let y: Vec<f64> = stacked.iter().map(|&(i, _, _)| rows[i].outcome).collect();
    let w: Vec<f64> = stacked.iter().map(|&(i, _, _)| rows[i].weight).collect();
    let fit = wls_fit_matrix(x, labels, &y, &w)?;
    let clusters: Vec<usize> = stacked
        .iter()
        .map(|&(i, _, _)| rows[i].cluster_idx)
        .collect();
    let vcov = cluster_vcov(&fit, &clusters)?;

    let att_idx = fit.labels.len() - 1;
    Ok(Estimate {
        estimand: format!("capped-att({})", options.post_periods),
        method: "stacked".into(),
        point: vec![fit.coefficients[att_idx]],
        labels: vec!["att".into()],
        vcov: super::sub_vcov(&vcov, &[att_idx]),
        n_obs: fit.n_obs,
        n_clusters: vcov.n_clusters,
    })
}
