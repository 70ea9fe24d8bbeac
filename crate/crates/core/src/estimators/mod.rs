//! Treatment-effect estimators for staggered-adoption panels.
//!
//! The suite covers the classical difference-in-differences regression, the
//! two-stage estimator (group/time effects from untreated observations, then
//! treated-vs-untreated comparison of adjusted outcomes), the aggregated
//! cell-level estimator with delta-method standard errors, naive and
//! two-stage event studies, and stacked difference in differences.

use nalgebra::DMatrix;

use crate::error::Result;
use crate::panel::Panel;
use crate::regression::{cohort_factor, time_factor, unit_factor, Factor, Vcov};

mod aggregated;
mod did;
mod event_study;
mod stacked;
mod two_stage;

pub use aggregated::{aggregated_att, aggregated_event_study, EffectCell, EffectGrid};
pub use did::{did_regression, did_regression_with, DidOptions};
pub use event_study::{naive_event_study, EventStudySpec};
pub use stacked::{stacked_did, StackedOptions};
pub use two_stage::{
    first_stage_adjusted, two_stage_did, two_stage_event_study, AdjustedOutcomes,
    TwoStageOptions,
};

pub(crate) use two_stage::{did_system, event_study_system};

/// Which fixed effects absorb the group and period structure.
///
/// Treatment status varies at the cohort-by-time level, so point estimates of
/// treatment coefficients agree across the two choices on balanced panels;
/// unit effects are the default (they also absorb unit heterogeneity).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum FixedEffectsSpec {
    #[default]
    UnitTime,
    CohortTime,
}

/// Target summary measure of treated-cell effects.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Estimand {
    /// Average over all treated group-by-period cells, weighted by their
    /// empirical shares among treated observations.
    Overall,
    /// Average of group-specific effects over the first `P` treated periods,
    /// weighted by cohort size.
    Capped(i64),
}

impl std::fmt::Display for Estimand {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Self::Overall => write!(f, "overall-att"),
            Self::Capped(p) => write!(f, "capped-att({p})"),
        }
    }
}

/// How the first stage of the two-stage procedure is specified.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum FirstStage {
    /// Fixed effects fit on the untreated subsample (default).
    #[default]
    UntreatedOnly,
    /// Full sample, fixed effects plus treatment-by-period interactions.
    FullSampleInteracted,
    /// Full sample, fixed effects plus one indicator per treated cell.
    Saturated,
}

/// Standard errors for two-stage estimators.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SeMethod {
    /// Joint-GMM sandwich correcting for the generated dependent variable
    /// (default).
    #[default]
    Gmm,
    /// Uncorrected second-stage clustered standard errors.
    Naive,
}

/// A point estimate (scalar or vector) with its covariance and metadata.
#[derive(Debug, Clone)]
pub struct Estimate {
    /// Estimand label, e.g. `overall-att` or `event-study`.
    pub estimand: String,
    /// Estimator tag, e.g. `did`, `two-stage`, `aggregated`, `stacked`.
    pub method: String,
    pub point: Vec<f64>,
    /// One label per element of `point` (e.g. `att`, or `r=-1`, `r=0`, ...).
    pub labels: Vec<String>,
    pub vcov: Vcov,
    pub n_obs: usize,
    pub n_clusters: usize,
}

impl Estimate {
    pub fn point_scalar(&self) -> f64 {
        debug_assert_eq!(self.point.len(), 1);
        self.point[0]
    }

    pub fn standard_errors(&self) -> Vec<f64> {
        self.vcov.standard_errors()
    }

    pub fn se_scalar(&self) -> f64 {
        self.standard_errors()[0]
    }

    /// Value for a coefficient label, if present.
    pub fn coefficient(&self, label: &str) -> Option<f64> {
        self.labels.iter().position(|l| l == label).map(|i| self.point[i])
    }
}

/// Fixed-effect factors for a panel under the chosen specification.
pub(crate) fn fe_factors(panel: &Panel, fe: FixedEffectsSpec) -> Vec<Factor> {
    match fe {
        FixedEffectsSpec::UnitTime => vec![unit_factor(panel), time_factor(panel)],
        FixedEffectsSpec::CohortTime => vec![cohort_factor(panel), time_factor(panel)],
    }
}

/// Fixed-effect factors over a row subsample, keeping only levels that occur
/// in the subsample (levels absent from it would produce zero columns).
pub(crate) fn subsample_factors(
    panel: &Panel,
    idx: &[usize],
    fe: FixedEffectsSpec,
) -> Vec<Factor> {
    let rows = panel.rows();
    let restrict = |name: &str, levels: &[String], full_codes: Vec<usize>| -> Factor {
        let present: Vec<usize> = {
            let set: std::collections::BTreeSet<usize> =
                idx.iter().map(|&i| full_codes[i]).collect();
            set.into_iter().collect()
        };
        let remap: std::collections::HashMap<usize, usize> =
            present.iter().enumerate().map(|(new, &old)| (old, new)).collect();
        Factor::new(
            name,
            present.iter().map(|&l| levels[l].clone()).collect(),
            idx.iter().map(|&i| remap[&full_codes[i]]).collect(),
        )
    };
    let first = match fe {
        FixedEffectsSpec::UnitTime => {
            let f = unit_factor(panel);
            restrict("unit", &f.levels, rows.iter().map(|r| r.unit_idx).collect())
        }
        FixedEffectsSpec::CohortTime => {
            let f = cohort_factor(panel);
            restrict("cohort", &f.levels, rows.iter().map(|r| r.cohort_idx).collect())
        }
    };
    let t = time_factor(panel);
    let time = restrict("time", &t.levels, rows.iter().map(|r| r.time_idx).collect());
    vec![first, time]
}

/// Extract the sub-covariance for a contiguous label range of a fit vcov.
pub(crate) fn sub_vcov(vcov: &Vcov, indices: &[usize]) -> Vcov {
    let k = indices.len();
    let mut matrix = DMatrix::zeros(k, k);
    for (a, &i) in indices.iter().enumerate() {
        for (b, &j) in indices.iter().enumerate() {
            matrix[(a, b)] = vcov.matrix[(i, j)];
        }
    }
    Vcov {
        matrix,
        labels: indices.iter().map(|&i| vcov.labels[i].clone()).collect(),
        n_clusters: vcov.n_clusters,
        adjustment: vcov.adjustment,
    }
}

/// Delta-method covariance `A V A'` for linear aggregates of coefficients.
pub(crate) fn aggregate_vcov(a: &DMatrix<f64>, vcov: &Vcov, labels: Vec<String>) -> Vcov {
    let matrix = a * &vcov.matrix * a.transpose();
    Vcov {
        matrix,
        labels,
        n_clusters: vcov.n_clusters,
        adjustment: vcov.adjustment,
    }
}

/// Treated-unit share of each cohort among estimand-eligible treated units,
/// weighted by (per-unit mean) row weights. Returns `(adoption, share)` in
/// cohort order.
pub(crate) fn cohort_unit_shares(panel: &Panel) -> Result<Vec<(i64, f64)>> {
    use std::collections::BTreeMap;
    let mut unit_weight: BTreeMap<usize, (i64, f64, usize)> = BTreeMap::new();
    for row in panel.rows() {
        if row.adoption.is_some() && !row.estimand_excluded {
            let entry = unit_weight
                .entry(row.unit_idx)
                .or_insert((row.adoption.unwrap(), 0.0, 0));
            entry.1 += row.weight;
            entry.2 += 1;
        }
    }
    if unit_weight.is_empty() {
        return Err(crate::error::Error::NoTreatedCells);
    }
    let mut by_cohort: BTreeMap<i64, f64> = BTreeMap::new();
    let mut total = 0.0;
    for (_, (adoption, wsum, count)) in unit_weight {
        let w = wsum / count as f64;
        *by_cohort.entry(adoption).or_insert(0.0) += w;
        total += w;
    }
    Ok(by_cohort.into_iter().map(|(a, w)| (a, w / total)).collect())
}
