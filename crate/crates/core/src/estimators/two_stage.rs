//! Two-stage difference-in-differences estimation.
//!
//! Stage one fits group and time effects (by default on the untreated
//! subsample); stage two regresses the adjusted outcomes, outcome minus the
//! fitted group and time components, on treatment indicators. Because the
//! second-stage dependent variable is generated from first-stage estimates,
//! default standard errors come from the joint moment system in
//! [`crate::gmm`]; naive uncorrected second-stage standard errors are
//! available for comparison.

use std::collections::BTreeSet;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::estimators::{
    fe_factors, Estimand, Estimate, EventStudySpec, FirstStage, FixedEffectsSpec, SeMethod,
};
use crate::gmm::{beta_vcov, MomentSystem};
use crate::panel::Panel;
use crate::regression::{cluster_vcov, wls_fit_matrix, DesignSpec, FitResult, Regressor};

use super::event_study::event_indicators;

#[derive(Debug, Clone, Copy)]
pub struct TwoStageOptions {
    pub estimand: Estimand,
    pub first_stage: FirstStage,
    pub fixed_effects: FixedEffectsSpec,
    pub se: SeMethod,
}

impl Default for TwoStageOptions {
    fn default() -> Self {
        Self {
            estimand: Estimand::Overall,
            first_stage: FirstStage::default(),
            fixed_effects: FixedEffectsSpec::default(),
            se: SeMethod::default(),
        }
    }
}

/// First-stage output: adjusted outcomes plus everything needed to assemble
/// the joint moment system.
#[derive(Debug, Clone)]
pub struct AdjustedOutcomes {
    /// Outcome minus the fitted group and time components, one per panel row.
    pub adjusted: Vec<f64>,
    /// First-stage design over the full panel, fixed-effect columns first.
    pub design: DMatrix<f64>,
    pub labels: Vec<String>,
    /// Number of leading columns of `design` that are fixed effects; only
    /// these are subtracted when forming adjusted outcomes.
    pub fe_cols: usize,
    /// Rows used to fit the first stage.
    pub in_first: Vec<bool>,
    pub coefficients: DVector<f64>,
}

/// Fit the first stage and compute adjusted outcomes for every panel row.
pub fn first_stage_adjusted(
    panel: &Panel,
    first_stage: FirstStage,
    fixed_effects: FixedEffectsSpec,
) -> Result<AdjustedOutcomes> {
    let rows = panel.rows();
    let mut spec = DesignSpec {
        intercept: false,
        factors: fe_factors(panel, fixed_effects),
        regressors: vec![],
    };
    let in_first: Vec<bool> = match first_stage {
        FirstStage::UntreatedOnly => {
            check_untreated_identification(panel, fixed_effects)?;
            rows.iter().map(|r| !r.treated).collect()
        }
        FirstStage::FullSampleInteracted => {
            for (ti, &t) in panel.times().iter().enumerate() {
                if rows.iter().any(|r| r.treated && r.time_idx == ti) {
                    let values = rows
                        .iter()
                        .map(|r| (r.treated && r.time_idx == ti) as u8 as f64)
                        .collect();
                    spec.regressors.push(Regressor::new(format!("d:time[{t}]"), values));
                }
            }
            vec![true; rows.len()]
        }
        FirstStage::Saturated => {
            // One indicator per treated (adoption, time) cell. Cells occupied
            // only by estimand-excluded units get indicators too, so the fixed
            // effects are never contaminated by their treated outcomes.
            let cells: BTreeSet<(i64, i64)> = rows
                .iter()
                .filter(|r| r.treated)
                .map(|r| (r.adoption.unwrap(), r.time))
                .collect();
            for (a, t) in cells {
                let values = rows
                    .iter()
                    .map(|r| (r.treated && r.adoption == Some(a) && r.time == t) as u8 as f64)
                    .collect();
                spec.regressors.push(Regressor::new(format!("cell[{a},{t}]"), values));
            }
            vec![true; rows.len()]
        }
    };

    let (x, labels) = spec.build();
    let fe_cols = x.ncols() - spec.regressors.len();
    let idx: Vec<usize> = (0..rows.len()).filter(|&i| in_first[i]).collect();
    if idx.is_empty() {
        return Err(Error::EmptySample);
    }
    let x_sub = DMatrix::from_fn(idx.len(), x.ncols(), |i, j| x[(idx[i], j)]);
    let y_sub: Vec<f64> = idx.iter().map(|&i| rows[i].outcome).collect();
    let w_sub: Vec<f64> = idx.iter().map(|&i| rows[i].weight).collect();
    let fit = wls_fit_matrix(x_sub, labels.clone(), &y_sub, &w_sub)?;

    let adjusted: Vec<f64> = rows
        .iter()
        .enumerate()
        .map(|(i, r)| {
            let mut fe = 0.0;
            for j in 0..fe_cols {
                fe += x[(i, j)] * fit.coefficients[j];
            }
            r.outcome - fe
        })
        .collect();

    Ok(AdjustedOutcomes {
        adjusted,
        design: x,
        labels,
        fe_cols,
        in_first,
        coefficients: fit.coefficients,
    })
}

/// Every fixed-effect level must be identified from untreated observations.
fn check_untreated_identification(panel: &Panel, fe: FixedEffectsSpec) -> Result<()> {
    let rows = panel.rows();
    match fe {
        FixedEffectsSpec::UnitTime => {
            let mut seen = vec![false; panel.units().len()];
            for r in rows {
                if !r.treated {
                    seen[r.unit_idx] = true;
                }
            }
            if let Some(u) = seen.iter().position(|s| !s) {
                return Err(Error::UnidentifiedFixedEffect(format!(
                    "unit[{}]",
                    panel.units()[u]
                )));
            }
        }
        FixedEffectsSpec::CohortTime => {
            let mut seen = vec![false; panel.cohorts().len() + 1];
            for r in rows {
                if !r.treated {
                    seen[r.cohort_idx] = true;
                }
            }
            if let Some(c) = seen.iter().position(|s| !s) {
                let label = match panel.cohort_adoption(c) {
                    None => "cohort[never]".to_string(),
                    Some(a) => format!("cohort[{a}]"),
                };
                return Err(Error::UnidentifiedFixedEffect(label));
            }
        }
    }
    let mut seen = vec![false; panel.times().len()];
    for r in rows {
        if !r.treated {
            seen[r.time_idx] = true;
        }
    }
    if let Some(t) = seen.iter().position(|s| !s) {
        return Err(Error::UnidentifiedFixedEffect(format!(
            "time[{}]",
            panel.times()[t]
        )));
    }
    Ok(())
}

/// Second-stage sample: all untreated rows, plus treated rows that are
/// estimand-eligible (and within the duration cap for a capped estimand).
pub(crate) fn second_sample(panel: &Panel, estimand: Estimand) -> Vec<bool> {
    panel
        .rows()
        .iter()
        .map(|r| {
            if !r.treated {
                true
            } else if r.estimand_excluded {
                false
            } else {
                match estimand {
                    Estimand::Overall => true,
                    Estimand::Capped(p) => r.rel_time.unwrap() <= p,
                }
            }
        })
        .collect()
}

/// Fit the second stage on the masked subsample.
fn second_stage_fit(
    panel: &Panel,
    adjusted: &[f64],
    regressors: &[Regressor],
    mask: &[bool],
) -> Result<(FitResult, Vec<usize>)> {
    let idx: Vec<usize> = (0..mask.len()).filter(|&i| mask[i]).collect();
    if idx.is_empty() {
        return Err(Error::EmptySample);
    }
    let x = DMatrix::from_fn(idx.len(), regressors.len(), |i, j| regressors[j].values[idx[i]]);
    let labels: Vec<String> = regressors.iter().map(|r| r.name.clone()).collect();
    let y: Vec<f64> = idx.iter().map(|&i| adjusted[i]).collect();
    let w: Vec<f64> = idx.iter().map(|&i| panel.rows()[i].weight).collect();
    let fit = wls_fit_matrix(x, labels, &y, &w)?;
    let clusters: Vec<usize> = idx.iter().map(|&i| panel.rows()[i].cluster_idx).collect();
    Ok((fit, clusters))
}

/// Assemble the joint moment system from a fitted first stage and a
/// second-stage regressor family.
pub(crate) fn moment_system(
    panel: &Panel,
    adj: &AdjustedOutcomes,
    second: &[Regressor],
    in_second: Vec<bool>,
) -> Result<MomentSystem> {
    let rows = panel.rows();
    let n = rows.len();
    let k2 = second.len();
    let design2 = DMatrix::from_fn(n, k2, |i, j| {
        if in_second[i] {
            second[j].values[i]
        } else {
            0.0
        }
    });
    for (j, reg) in second.iter().enumerate() {
        if (0..n).all(|i| design2[(i, j)] == 0.0) {
            return Err(Error::Unidentified(reg.name.clone()));
        }
    }
    let mut labels = adj.labels.clone();
    labels.extend(second.iter().map(|r| r.name.clone()));
    Ok(MomentSystem {
        design1: adj.design.clone(),
        design2,
        fe_cols: adj.fe_cols,
        in_first: adj.in_first.clone(),
        in_second,
        y: rows.iter().map(|r| r.outcome).collect(),
        weights: rows.iter().map(|r| r.weight).collect(),
        clusters: rows.iter().map(|r| r.cluster_idx).collect(),
        labels,
    })
}

/// Moment system for [`two_stage_did`] (used by [`crate::gmm`]).
pub(crate) fn did_system(panel: &Panel, options: &TwoStageOptions) -> Result<MomentSystem> {
    let adj = first_stage_adjusted(panel, options.first_stage, options.fixed_effects)?;
    let mask = second_sample(panel, options.estimand);
    let d = att_regressor(panel, &mask);
    moment_system(panel, &adj, &[d], mask)
}

/// Moment system for [`two_stage_event_study`] (used by [`crate::gmm`]).
pub(crate) fn event_study_system(
    panel: &Panel,
    spec: &EventStudySpec,
    options: &TwoStageOptions,
) -> Result<MomentSystem> {
    let adj = first_stage_adjusted(panel, options.first_stage, options.fixed_effects)?;
    let (indicators, mask) = event_indicators(panel, spec)?;
    moment_system(panel, &adj, &indicators, mask)
}

fn att_regressor(panel: &Panel, mask: &[bool]) -> Regressor {
    let d: Vec<f64> = panel
        .rows()
        .iter()
        .zip(mask)
        .map(|(r, &m)| (r.treated && m) as u8 as f64)
        .collect();
    Regressor::new("att", d)
}

/// Two-stage difference-in-differences point estimate of the chosen estimand.
pub fn two_stage_did(panel: &Panel, options: &TwoStageOptions) -> Result<Estimate> {
    let adj = first_stage_adjusted(panel, options.first_stage, options.fixed_effects)?;
    let mask = second_sample(panel, options.estimand);
    let d = att_regressor(panel, &mask);
    if d.values.iter().all(|&v| v == 0.0) {
        return Err(Error::NoTreatedCells);
    }
    let (fit, clusters) = second_stage_fit(panel, &adj.adjusted, &[d.clone()], &mask)?;
    let vcov = match options.se {
        SeMethod::Naive => cluster_vcov(&fit, &clusters)?,
        SeMethod::Gmm => {
            let system = moment_system(panel, &adj, &[d], mask)?;
            let theta = stack_theta(&adj.coefficients, &fit.coefficients);
            beta_vcov(&system, &theta)?
        }
    };
    Ok(Estimate {
        estimand: options.estimand.to_string(),
        method: "two-stage".into(),
        point: vec![fit.coefficients[0]],
        labels: vec!["att".into()],
        n_obs: fit.n_obs,
        n_clusters: vcov.n_clusters,
        vcov,
    })
}

/// Two-stage event study: adjusted outcomes regressed on the full family of
/// lead and duration indicators.
pub fn two_stage_event_study(
    panel: &Panel,
    spec: &EventStudySpec,
    options: &TwoStageOptions,
) -> Result<Estimate> {
    let adj = first_stage_adjusted(panel, options.first_stage, options.fixed_effects)?;
    let (indicators, mask) = event_indicators(panel, spec)?;
    let (fit, clusters) = second_stage_fit(panel, &adj.adjusted, &indicators, &mask)?;
    let labels: Vec<String> = indicators.iter().map(|r| r.name.clone()).collect();
    let vcov = match options.se {
        SeMethod::Naive => cluster_vcov(&fit, &clusters)?,
        SeMethod::Gmm => {
            let system = moment_system(panel, &adj, &indicators, mask)?;
            let theta = stack_theta(&adj.coefficients, &fit.coefficients);
            beta_vcov(&system, &theta)?
        }
    };
    Ok(Estimate {
        estimand: "event-study".into(),
        method: "two-stage".into(),
        point: fit.coefficients.iter().copied().collect(),
        labels,
        n_obs: fit.n_obs,
        n_clusters: vcov.n_clusters,
        vcov,
    })
}

fn stack_theta(phi: &DVector<f64>, beta: &DVector<f64>) -> DVector<f64> {
    let mut theta = DVector::zeros(phi.len() + beta.len());
    theta.rows_mut(0, phi.len()).copy_from(phi);
    theta.rows_mut(phi.len(), beta.len()).copy_from(beta);
    theta
}
