//! Classical difference-in-differences regression: outcomes on fixed effects
//! and a single treatment-status indicator.
//!
//! Under staggered adoption with heterogeneous effects, the coefficient on
//! treatment status identifies a weighted average of cell-level effects whose
//! weights can be negative; see [`crate::diagnostics`] for the decomposition.

use crate::error::Result;
use crate::estimators::{fe_factors, sub_vcov, Estimate, FixedEffectsSpec};
use crate::panel::Panel;
use crate::regression::{cluster_vcov, wls_fit, DesignSpec, Regressor};

#[derive(Debug, Clone, Copy, Default)]
pub struct DidOptions {
    pub fixed_effects: FixedEffectsSpec,
}

/// Difference-in-differences regression with default options (unit and time
/// fixed effects, clustering on the panel's cluster ids).
pub fn did_regression(panel: &Panel) -> Result<Estimate> {
    did_regression_with(panel, &DidOptions::default())
}

pub fn did_regression_with(panel: &Panel, options: &DidOptions) -> Result<Estimate> {
    let d: Vec<f64> = panel
        .rows()
        .iter()
        .map(|r| if r.treated { 1.0 } else { 0.0 })
        .collect();
    let y: Vec<f64> = panel.rows().iter().map(|r| r.outcome).collect();
    let w: Vec<f64> = panel.rows().iter().map(|r| r.weight).collect();
    let clusters: Vec<usize> = panel.rows().iter().map(|r| r.cluster_idx).collect();

    let spec = DesignSpec {
        intercept: false,
        factors: fe_factors(panel, options.fixed_effects),
        regressors: vec![Regressor::new("treated", d)],
    };
    let fit = wls_fit(&spec, &y, &w)?;
    let vcov = cluster_vcov(&fit, &clusters)?;
    let idx = fit.labels.len() - 1;
    Ok(Estimate {
        estimand: "did-coefficient".into(),
        method: "did".into(),
        point: vec![fit.coefficients[idx]],
        labels: vec!["att".into()],
        vcov: sub_vcov(&vcov, &[idx]),
        n_obs: fit.n_obs,
        n_clusters: vcov.n_clusters,
    })
}
