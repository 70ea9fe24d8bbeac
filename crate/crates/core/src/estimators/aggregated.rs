//! Aggregated group-by-period estimation.
//!
//! One regression with a separate indicator per treated (group, period) cell
//! recovers every cell-level effect; summary estimands are fixed-weight
//! linear combinations of the cell coefficients with delta-method standard
//! errors (the weights are treated as nonrandom).

use std::collections::{BTreeMap, BTreeSet};

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::estimators::{
    aggregate_vcov, cohort_unit_shares, fe_factors, sub_vcov, subsample_factors, Estimand,
    Estimate, EventStudySpec, FixedEffectsSpec,
};
use crate::panel::{relative_time, Panel};
use crate::regression::{cluster_vcov, wls_fit, DesignSpec, Regressor, Vcov};

/// One treated (group, period) cell of an [`EffectGrid`].
#[derive(Debug, Clone)]
pub struct EffectCell {
    pub adoption: i64,
    pub time: i64,
    /// Duration `r = time - adoption + 1` (always >= 1 on the grid).
    pub rel_time: i64,
    /// Estimated cell effect.
    pub effect: f64,
    /// Sampling variance of the cell effect.
    pub variance: f64,
    /// Weight share of the cell among treated observations; shares sum to 1.
    pub treated_share: f64,
}

/// Estimated effects for every treated cell, with their joint covariance.
#[derive(Debug, Clone)]
pub struct EffectGrid {
    pub cells: Vec<EffectCell>,
    /// Clustered covariance of the cell effects, in cell order.
    pub vcov: Vcov,
}

impl EffectGrid {
    /// Effect for a given (adoption, time) cell.
    pub fn effect(&self, adoption: i64, time: i64) -> Result<f64> {
        self.cells
            .iter()
            .find(|c| c.adoption == adoption && c.time == time)
            .map(|c| c.effect)
            .ok_or(Error::MissingCell { adoption, time })
    }

    /// Average the cell effects within each duration, weighting cells by
    /// their treated shares (renormalized within the duration). Returns
    /// `(duration, average)` pairs in increasing duration order.
    pub fn duration_averages(&self) -> Vec<(i64, f64)> {
        let mut by_r: BTreeMap<i64, (f64, f64)> = BTreeMap::new();
        for cell in &self.cells {
            let entry = by_r.entry(cell.rel_time).or_insert((0.0, 0.0));
            entry.0 += cell.treated_share * cell.effect;
            entry.1 += cell.treated_share;
        }
        by_r.into_iter().map(|(r, (num, den))| (r, num / den)).collect()
    }
}

/// Fit the saturated cell regression and return the fit together with the
/// eligible cells and the column index of each.
fn saturated_cells(panel: &Panel) -> Result<(Estimate, EffectGrid)> {
    let rows = panel.rows();
    // Indicators for every treated cell, including cells occupied only by
    // estimand-excluded units, so the fixed effects stay clean; only eligible
    // cells enter the grid.
    let all_cells: BTreeSet<(i64, i64)> = rows
        .iter()
        .filter(|r| r.treated)
        .map(|r| (r.adoption.unwrap(), r.time))
        .collect();
    let eligible: Vec<(i64, i64)> = panel.treated_cells();
    if eligible.is_empty() {
        return Err(Error::NoTreatedCells);
    }

    let mut spec = DesignSpec {
        intercept: false,
        factors: fe_factors(panel, FixedEffectsSpec::UnitTime),
        regressors: vec![],
    };
    for &(a, t) in &all_cells {
        let values = rows
            .iter()
            .map(|r| (r.treated && r.adoption == Some(a) && r.time == t) as u8 as f64)
            .collect();
        spec.regressors.push(Regressor::new(format!("cell[{a},{t}]"), values));
    }
    let y: Vec<f64> = rows.iter().map(|r| r.outcome).collect();
    let w: Vec<f64> = rows.iter().map(|r| r.weight).collect();
    let fit = wls_fit(&spec, &y, &w)?;
    let clusters: Vec<usize> = rows.iter().map(|r| r.cluster_idx).collect();
    let vcov = cluster_vcov(&fit, &clusters)?;

    let col_of = |a: i64, t: i64| {
        fit.labels
            .iter()
            .position(|l| l == &format!("cell[{a},{t}]"))
            .expect("cell column present by construction")
    };

    let mut cell_weight: BTreeMap<(i64, i64), f64> = BTreeMap::new();
    let mut total = 0.0;
    for r in rows {
        if r.treated && !r.estimand_excluded {
            *cell_weight.entry((r.adoption.unwrap(), r.time)).or_insert(0.0) += r.weight;
            total += r.weight;
        }
    }

    let cols: Vec<usize> = eligible.iter().map(|&(a, t)| col_of(a, t)).collect();
    let cell_vcov = sub_vcov(&vcov, &cols);
    let cells: Vec<EffectCell> = eligible
        .iter()
        .enumerate()
        .map(|(j, &(a, t))| EffectCell {
            adoption: a,
            time: t,
            rel_time: relative_time(a, t),
            effect: fit.coefficients[cols[j]],
            variance: cell_vcov.matrix[(j, j)],
            treated_share: cell_weight[&(a, t)] / total,
        })
        .collect();

    // carrier for fit-level metadata; the caller rewrites estimand/point
    let estimate = Estimate {
        estimand: String::new(),
        method: "aggregated".into(),
        point: vec![],
        labels: vec![],
        n_obs: fit.n_obs,
        n_clusters: vcov.n_clusters,
        vcov: cell_vcov.clone(),
    };
    Ok((estimate, EffectGrid { cells, vcov: cell_vcov }))
}

/// Aggregated estimator: cell effects combined with fixed weights.
///
/// Overall weights are the cells' treated shares; capped weights give each
/// cohort its treated-unit share spread evenly over its first `P` durations.
pub fn aggregated_att(panel: &Panel, estimand: Estimand) -> Result<(Estimate, EffectGrid)> {
    let (mut estimate, grid) = saturated_cells(panel)?;

    let weights: Vec<f64> = match estimand {
        Estimand::Overall => grid.cells.iter().map(|c| c.treated_share).collect(),
        Estimand::Capped(p) => {
            let shares: BTreeMap<i64, f64> = cohort_unit_shares(panel)?.into_iter().collect();
            grid.cells
                .iter()
                .map(|c| {
                    if c.rel_time <= p {
                        shares[&c.adoption] / p as f64
                    } else {
                        0.0
                    }
                })
                .collect()
        }
    };

    let point: f64 = weights
        .iter()
        .zip(&grid.cells)
        .map(|(w, c)| w * c.effect)
        .sum();
    let wv = DVector::from_row_slice(&weights);
    let variance = grid.vcov.quadratic_form(&wv);

    estimate.estimand = estimand.to_string();
    estimate.point = vec![point];
    estimate.labels = vec!["att".into()];
    estimate.vcov = Vcov {
        matrix: DMatrix::from_element(1, 1, variance),
        labels: vec!["att".into()],
        n_clusters: grid.vcov.n_clusters,
        adjustment: grid.vcov.adjustment,
    };
    Ok((estimate, grid))
}

/// Aggregated event study: cohort-by-relative-time cell effects (including
/// lead cells `r = -R..=0`) averaged across cohorts within each relative
/// time, weighting cohorts by their treated-unit shares.
///
/// `exclude_cohorts` drops entire adoption cohorts from the regression, e.g.
/// cohorts without enough pre-treatment periods for the requested leads.
pub fn aggregated_event_study(
    panel: &Panel,
    spec: &EventStudySpec,
    exclude_cohorts: &[i64],
) -> Result<Estimate> {
    spec.validate()?;
    let rows = panel.rows();
    let excluded = |a: Option<i64>| a.is_some_and(|a| exclude_cohorts.contains(&a));

    let idx: Vec<usize> = (0..rows.len())
        .filter(|&i| {
            let r = &rows[i];
            if excluded(r.adoption) || r.estimand_excluded {
                return false;
            }
            !(spec.cap_durations
                && r.treated
                && r.rel_time.unwrap() > spec.max_duration)
        })
        .collect();

    // one cell per (cohort, relative time) with r >= -R observed in sample
    let cells: Vec<(i64, i64)> = {
        let set: BTreeSet<(i64, i64)> = idx
            .iter()
            .filter_map(|&i| {
                let r = &rows[i];
                match r.rel_time {
                    Some(rel) if rel >= -spec.leads => Some((r.adoption.unwrap(), rel)),
                    _ => None,
                }
            })
            .collect();
        set.into_iter().collect()
    };
    if cells.iter().all(|&(_, r)| r < 1) {
        return Err(Error::NoTreatedCells);
    }

    let design = DesignSpec {
        intercept: false,
        factors: subsample_factors(panel, &idx, FixedEffectsSpec::UnitTime),
        regressors: cells
            .iter()
            .map(|&(a, r)| {
                let values: Vec<f64> = idx
                    .iter()
                    .map(|&i| {
                        (rows[i].adoption == Some(a) && rows[i].rel_time == Some(r)) as u8
                            as f64
                    })
                    .collect();
                Regressor::new(format!("cell[{a},r={r}]"), values)
            })
            .collect(),
    };
    let (x, labels) = design.build();
    let y: Vec<f64> = idx.iter().map(|&i| rows[i].outcome).collect();
    let w: Vec<f64> = idx.iter().map(|&i| rows[i].weight).collect();
    let fit = crate::regression::wls_fit_matrix(x, labels, &y, &w)?;
    let clusters: Vec<usize> = idx.iter().map(|&i| rows[i].cluster_idx).collect();
    let vcov = cluster_vcov(&fit, &clusters)?;
    let offset = fit.labels.len() - cells.len();
    let cell_vcov = sub_vcov(&vcov, &(offset..fit.labels.len()).collect::<Vec<_>>());

    // cohort treated-unit shares among included cohorts
    let mut unit_cohort: BTreeMap<usize, (i64, f64, usize)> = BTreeMap::new();
    for &i in &idx {
        let r = &rows[i];
        if let Some(a) = r.adoption {
            let e = unit_cohort.entry(r.unit_idx).or_insert((a, 0.0, 0));
            e.1 += r.weight;
            e.2 += 1;
        }
    }
    let mut cohort_weight: BTreeMap<i64, f64> = BTreeMap::new();
    for (_, (a, wsum, n)) in unit_cohort {
        *cohort_weight.entry(a).or_insert(0.0) += wsum / n as f64;
    }

    // aggregate per relative time over the cohorts observing it
    let rels: Vec<i64> = {
        let set: BTreeSet<i64> = cells.iter().map(|&(_, r)| r).collect();
        set.into_iter().collect()
    };
    let mut a_mat = DMatrix::zeros(rels.len(), cells.len());
    for (row_i, &rel) in rels.iter().enumerate() {
        let den: f64 = cells
            .iter()
            .filter(|&&(_, r)| r == rel)
            .map(|&(a, _)| cohort_weight[&a])
            .sum();
        for (col_j, &(a, r)) in cells.iter().enumerate() {
            if r == rel {
                a_mat[(row_i, col_j)] = cohort_weight[&a] / den;
            }
        }
    }
    let cell_coefs = DVector::from_iterator(
        cells.len(),
        (0..cells.len()).map(|j| fit.coefficients[offset + j]),
    );
    let point = &a_mat * cell_coefs;
    let out_labels: Vec<String> = rels.iter().map(|r| format!("r={r}")).collect();
    let out_vcov = aggregate_vcov(&a_mat, &cell_vcov, out_labels.clone());

    Ok(Estimate {
        estimand: "event-study".into(),
        method: "aggregated".into(),
        point: point.iter().copied().collect(),
        labels: out_labels,
        n_obs: fit.n_obs,
        n_clusters: out_vcov.n_clusters,
        vcov: out_vcov,
    })
}
