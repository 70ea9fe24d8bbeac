//! Weight diagnostics for misspecified difference-in-differences regressions.
//!
//! A two-way fixed-effects regression with a single treatment indicator
//! identifies a particular weighted average of the treated cells' effects.
//! The weights depend only on the design (who is treated when), sum to one,
//! and can be negative; this module computes them in closed form from
//! weighted empirical frequencies, checks them against a brute-force
//! Frisch-Waugh-Lovell regression oracle, and computes the analogous
//! (always nonnegative) weights of stacked difference in differences.

use std::io::Write;

use crate::error::{Error, Result};
use crate::estimators::EffectGrid;
use crate::panel::Panel;
use crate::regression::{
    double_demean, time_factor, unit_factor, wls_fit, DesignSpec,
};

/// One treated (group, period) cell with its implicit regression weight and
/// the probability components it is built from.
#[derive(Debug, Clone)]
pub struct CellWeight {
    pub adoption: i64,
    pub time: i64,
    /// Implicit weight on this cell's effect; may be negative.
    pub weight: f64,
    /// Weighted share of treated observations within the cell's cohort.
    pub p_d_given_g: f64,
    /// Weighted share of treated observations within the cell's period.
    pub p_d_given_p: f64,
    /// Overall weighted treated share.
    pub p_d: f64,
    /// Weighted share of the cell among all observations.
    pub p_gp: f64,
}

/// Implicit weights over all treated cells.
#[derive(Debug, Clone)]
pub struct WeightDecomposition {
    pub cells: Vec<CellWeight>,
    /// True when the panel was unbalanced and the closed form was replaced
    /// by the brute-force regression path.
    pub brute_force: bool,
}

impl WeightDecomposition {
    pub fn total(&self) -> f64 {
        self.cells.iter().map(|c| c.weight).sum()
    }

    pub fn weight(&self, adoption: i64, time: i64) -> Option<f64> {
        self.cells
            .iter()
            .find(|c| c.adoption == adoption && c.time == time)
            .map(|c| c.weight)
    }

    pub fn negative_count(&self) -> usize {
        self.cells.iter().filter(|c| c.weight < 0.0).count()
    }

    /// Total mass carried by negative weights (a nonpositive number).
    pub fn negative_mass(&self) -> f64 {
        self.cells.iter().map(|c| c.weight.min(0.0)).sum()
    }

    /// Export as CSV with the documented column order.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(writer);
        wtr.write_record([
            "group",
            "period",
            "weight",
            "p_d_given_g",
            "p_d_given_p",
            "p_d",
            "p_gp",
        ])
        .map_err(csv_err)?;
        for c in &self.cells {
            wtr.write_record([
                c.adoption.to_string(),
                c.time.to_string(),
                format!("{:.17e}", c.weight),
                format!("{:.17e}", c.p_d_given_g),
                format!("{:.17e}", c.p_d_given_p),
                format!("{:.17e}", c.p_d),
                format!("{:.17e}", c.p_gp),
            ])
            .map_err(csv_err)?;
        }
        wtr.flush()?;
        Ok(())
    }
}

fn csv_err(e: csv::Error) -> Error {
    Error::Parse { row: 0, message: e.to_string() }
}

/// Weighted probability components per treated cell, shared by both paths.
fn components(panel: &Panel) -> Result<Vec<CellWeight>> {
    let cells = panel.treated_cells();
    if cells.is_empty() {
        return Err(Error::NoTreatedCells);
    }
    let n_cohorts = panel.cohorts().len() + 1;
    let n_times = panel.times().len();
    let mut w_g = vec![0.0; n_cohorts];
    let mut dw_g = vec![0.0; n_cohorts];
    let mut w_t = vec![0.0; n_times];
    let mut dw_t = vec![0.0; n_times];
    let mut w_cell = vec![0.0; n_cohorts * n_times];
    let mut w_all = 0.0;
    let mut dw_all = 0.0;
    for row in panel.rows() {
        let d = if row.treated { row.weight } else { 0.0 };
        w_g[row.cohort_idx] += row.weight;
        dw_g[row.cohort_idx] += d;
        w_t[row.time_idx] += row.weight;
        dw_t[row.time_idx] += d;
        w_cell[row.cohort_idx * n_times + row.time_idx] += row.weight;
        w_all += row.weight;
        dw_all += d;
    }
    let time_idx = |t: i64| panel.times().iter().position(|&x| x == t).unwrap();
    let cohort_idx = |a: i64| panel.cohorts().iter().position(|&x| x == a).unwrap() + 1;
    Ok(cells
        .into_iter()
        .map(|(a, t)| {
            let (g, p) = (cohort_idx(a), time_idx(t));
            CellWeight {
                adoption: a,
                time: t,
                weight: 0.0,
                p_d_given_g: dw_g[g] / w_g[g],
                p_d_given_p: dw_t[p] / w_t[p],
                p_d: dw_all / w_all,
                p_gp: w_cell[g * n_times + p] / w_all,
            }
        })
        .collect())
}

/// Closed-form implicit weights of the two-way fixed-effects regression.
///
/// Per treated cell, the weight is proportional to
/// `{[1 - P(D|g)] - [P(D|p) - P(D)]} * P(g,p)`, normalized to sum to one.
/// The closed form relies on the balanced two-way within transform; on
/// unbalanced panels this delegates to [`did_weights_bruteforce`] and flags
/// it in the output.
pub fn did_weights(panel: &Panel) -> Result<WeightDecomposition> {
    if !panel.is_balanced() {
        return did_weights_bruteforce(panel);
    }
    let mut cells = components(panel)?;
    let mut total = 0.0;
    for c in &mut cells {
        c.weight = ((1.0 - c.p_d_given_g) - (c.p_d_given_p - c.p_d)) * c.p_gp;
        total += c.weight;
    }
    for c in &mut cells {
        c.weight /= total;
    }
    Ok(WeightDecomposition { cells, brute_force: false })
}

/// Brute-force oracle for [`did_weights`].
///
/// By Frisch-Waugh-Lovell, the regression coefficient on treatment equals
/// `sum_i w_i Dtil_i y_i / sum_i w_i Dtil_i^2` with `Dtil` the residual of
/// treatment on the fixed effects; substituting the cell indicators for `y`
/// yields each cell's weight directly.
pub fn did_weights_bruteforce(panel: &Panel) -> Result<WeightDecomposition> {
    let mut cells = components(panel)?;
    let rows = panel.rows();

    let dtil: Vec<f64> = if panel.is_balanced() {
        double_demean(panel)?
    } else {
        // residualize treatment on the same unit and time effects the
        // regression uses
        let spec = DesignSpec {
            intercept: false,
            factors: vec![unit_factor(panel), time_factor(panel)],
            regressors: vec![],
        };
        let d: Vec<f64> = rows.iter().map(|r| r.treated as u8 as f64).collect();
        let w: Vec<f64> = rows.iter().map(|r| r.weight).collect();
        let fit = wls_fit(&spec, &d, &w)?;
        fit.residuals.iter().copied().collect()
    };

    let denom: f64 = rows
        .iter()
        .zip(&dtil)
        .map(|(r, &v)| r.weight * v * v)
        .sum();
    for c in &mut cells {
        c.weight = rows
            .iter()
            .zip(&dtil)
            .filter(|(r, _)| {
                r.treated && r.adoption == Some(c.adoption) && r.time == c.time
            })
            .map(|(r, &v)| r.weight * v)
            .sum::<f64>()
            / denom;
    }
    Ok(WeightDecomposition { cells, brute_force: !panel.is_balanced() })
}

/// The estimand the misspecified regression identifies for a given grid of
/// cell effects: `sum omega_gp * beta_gp`.
pub fn implied_estimand(weights: &WeightDecomposition, grid: &EffectGrid) -> Result<f64> {
    let mut total = 0.0;
    for c in &weights.cells {
        total += c.weight * grid.effect(c.adoption, c.time)?;
    }
    Ok(total)
}

/// Implicit weights of stacked difference in differences.
#[derive(Debug, Clone)]
pub struct StackedWeights {
    /// Treated period share of each window, `post / (post + pre + 1)`;
    /// reported for reference, it cancels from the weights.
    pub tau: f64,
    /// Treated unit share per sub-dataset.
    pub pi: Vec<f64>,
    /// Observation share per sub-dataset.
    pub rho: Vec<f64>,
    /// Per-duration weight per cohort (constant across durations);
    /// `weight(r, g) = per_cohort[g]` for every duration `r = 1..=post`.
    pub per_cohort: Vec<f64>,
    pub pre_periods: i64,
    pub post_periods: i64,
}

impl StackedWeights {
    pub fn weight(&self, cohort: usize) -> f64 {
        self.per_cohort[cohort]
    }

    pub fn total(&self) -> f64 {
        self.post_periods as f64 * self.per_cohort.iter().sum::<f64>()
    }

    /// The estimand stacked DiD identifies for given cohort-by-duration
    /// effects (`effects[g][r - 1]` is cohort `g` at duration `r`).
    pub fn implied_estimand(&self, effects: &[Vec<f64>]) -> f64 {
        let mut total = 0.0;
        for (g, path) in effects.iter().enumerate() {
            for r in 0..self.post_periods as usize {
                total += self.per_cohort[g] * path[r];
            }
        }
        total
    }
}

/// Closed-form stacked weights from sub-dataset composition:
/// `omega_rg = (1 - pi_g) pi_g rho_g / [post * sum_c (1 - pi_c) pi_c rho_c]`.
///
/// `cohort_sizes` are treated unit counts per cohort and `control_pool` the
/// number of control units shared by every sub-dataset.
pub fn stacked_weights(
    cohort_sizes: &[f64],
    control_pool: f64,
    pre_periods: i64,
    post_periods: i64,
) -> Result<StackedWeights> {
    if post_periods < 1 || pre_periods < 0 {
        return Err(Error::InvalidConfig(format!(
            "stacked weights need pre >= 0 and post >= 1, got pre {pre_periods} post {post_periods}"
        )));
    }
    if cohort_sizes.is_empty() {
        return Err(Error::NoTreatedCells);
    }
    let total_units: Vec<f64> = cohort_sizes.iter().map(|&n| n + control_pool).collect();
    let grand: f64 = total_units.iter().sum();
    let pi: Vec<f64> = cohort_sizes
        .iter()
        .zip(&total_units)
        .map(|(&n, &tot)| n / tot)
        .collect();
    for (g, &p) in pi.iter().enumerate() {
        if p <= 0.0 || p >= 1.0 {
            return Err(Error::DegenerateDataset { adoption: g as i64, share: p });
        }
    }
    let rho: Vec<f64> = total_units.iter().map(|&tot| tot / grand).collect();
    let raw: Vec<f64> = pi
        .iter()
        .zip(&rho)
        .map(|(&p, &r)| (1.0 - p) * p * r)
        .collect();
    let denom: f64 = post_periods as f64 * raw.iter().sum::<f64>();
    Ok(StackedWeights {
        tau: post_periods as f64 / (post_periods + pre_periods + 1) as f64,
        pi,
        rho,
        per_cohort: raw.into_iter().map(|v| v / denom).collect(),
        pre_periods,
        post_periods,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimators::{aggregated_att, did_regression, Estimand};
    use crate::panel::{validate_panel, Observation, ValidationFlags};
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn three_cohort_toy() -> Panel {
        let mut raw = Vec::new();
        for (u, adoption) in [(0, None), (1, Some(1i64)), (2, Some(2))] {
            for t in 0..=2i64 {
                let mut o = Observation::new(format!("u{u}"), t, 0.0);
                if let Some(a) = adoption {
                    o = o.with_adoption(a);
                }
                raw.push(o);
            }
        }
        validate_panel(&raw, ValidationFlags::default()).unwrap()
    }

    #[test]
    fn toy_panel_weights() {
        let panel = three_cohort_toy();
        let w = did_weights(&panel).unwrap();
        assert!(!w.brute_force);
        assert_abs_diff_eq!(w.weight(1, 1).unwrap(), 0.5, epsilon = 1e-10);
        assert_abs_diff_eq!(w.weight(1, 2).unwrap(), 0.0, epsilon = 1e-10);
        assert_abs_diff_eq!(w.weight(2, 2).unwrap(), 0.5, epsilon = 1e-10);
        assert_abs_diff_eq!(w.total(), 1.0, epsilon = 1e-12);

        // component arithmetic: P(D|g) = (2/3, 1/3), P(D|p) = (1/3, 2/3)
        let c11 = w.cells.iter().find(|c| (c.adoption, c.time) == (1, 1)).unwrap();
        assert_abs_diff_eq!(c11.p_d_given_g, 2.0 / 3.0, epsilon = 1e-12);
        assert_abs_diff_eq!(c11.p_d_given_p, 1.0 / 3.0, epsilon = 1e-12);
        assert_abs_diff_eq!(c11.p_d, 1.0 / 3.0, epsilon = 1e-12);
        assert_abs_diff_eq!(c11.p_gp, 1.0 / 9.0, epsilon = 1e-12);
    }

    #[test]
    fn single_treated_period_gets_weight_one() {
        let raw = vec![
            Observation::new("A", 1, 0.0),
            Observation::new("A", 2, 0.0),
            Observation::new("B", 1, 0.0).with_adoption(2),
            Observation::new("B", 2, 0.0).with_adoption(2),
        ];
        let panel = validate_panel(&raw, ValidationFlags::default()).unwrap();
        let w = did_weights(&panel).unwrap();
        assert_eq!(w.cells.len(), 1);
        assert_abs_diff_eq!(w.cells[0].weight, 1.0, epsilon = 1e-12);
        let bf = did_weights_bruteforce(&panel).unwrap();
        assert_abs_diff_eq!(bf.cells[0].weight, 1.0, epsilon = 1e-10);
    }

    fn random_panel(seed: u64, weighted: bool) -> Panel {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n_units = rng.gen_range(6..14);
        let n_times = rng.gen_range(4..8);
        let mut raw = Vec::new();
        for u in 0..n_units {
            let adoption = if rng.gen_bool(0.5) {
                Some(rng.gen_range(2..=n_times))
            } else {
                None
            };
            let weight = if weighted { rng.gen_range(0.2..3.0) } else { 1.0 };
            for t in 1..=n_times {
                let mut o = Observation::new(format!("u{u}"), t, rng.gen_range(-2.0..2.0))
                    .with_weight(weight);
                if let Some(a) = adoption {
                    o = o.with_adoption(a);
                }
                raw.push(o);
            }
        }
        match validate_panel(&raw, ValidationFlags::default()) {
            Ok(p) if !p.treated_cells().is_empty() && p.has_never_treated() => p,
            _ => random_panel(seed + 1000, weighted),
        }
    }

    #[test]
    fn closed_form_matches_brute_force_fuzzed() {
        for seed in 0..25 {
            let panel = random_panel(seed, seed % 2 == 1);
            let a = did_weights(&panel).unwrap();
            let b = did_weights_bruteforce(&panel).unwrap();
            assert_abs_diff_eq!(a.total(), 1.0, epsilon = 1e-10);
            for (ca, cb) in a.cells.iter().zip(&b.cells) {
                assert_abs_diff_eq!(ca.weight, cb.weight, epsilon = 1e-8);
            }
        }
    }

    #[test]
    fn decomposition_identity_with_did_regression() {
        for seed in [3u64, 17, 29] {
            let panel = random_panel(seed, false);
            let w = did_weights(&panel).unwrap();
            let (_, grid) = aggregated_att(&panel, Estimand::Overall).unwrap();
            let implied = implied_estimand(&w, &grid).unwrap();
            let did = did_regression(&panel).unwrap();
            assert_abs_diff_eq!(implied, did.point_scalar(), epsilon = 1e-8);
        }
    }

    #[test]
    fn unbalanced_panel_uses_brute_force_and_keeps_identity() {
        let mut panel_raw = Vec::new();
        for u in 0..6i64 {
            let adoption = if u < 2 { Some(4) } else { None };
            for t in 1..=6i64 {
                // drop a couple of observations to unbalance the grid
                if (u, t) == (2, 1) || (u, t) == (5, 6) {
                    continue;
                }
                let mut o = Observation::new(format!("u{u}"), t, (u * 7 + t) as f64 % 3.0);
                if let Some(a) = adoption {
                    o = o.with_adoption(a);
                }
                panel_raw.push(o);
            }
        }
        let panel = validate_panel(&panel_raw, ValidationFlags::default()).unwrap();
        assert!(!panel.is_balanced());
        let w = did_weights(&panel).unwrap();
        assert!(w.brute_force);
        assert_abs_diff_eq!(w.total(), 1.0, epsilon = 1e-8);
        let (_, grid) = aggregated_att(&panel, Estimand::Overall).unwrap();
        let implied = implied_estimand(&w, &grid).unwrap();
        let did = did_regression(&panel).unwrap();
        assert_abs_diff_eq!(implied, did.point_scalar(), epsilon = 1e-8);
    }

    #[test]
    fn longer_duration_lowers_cohort_numerator_component() {
        // extending a cohort's treated span raises P(D|g), lowering the
        // 1 - P(D|g) component of its weights
        let build = |adoption: i64| {
            let mut raw = Vec::new();
            for u in 0..4i64 {
                for t in 1..=6i64 {
                    let mut o = Observation::new(format!("u{u}"), t, 0.0);
                    if u == 0 {
                        o = o.with_adoption(adoption);
                    }
                    raw.push(o);
                }
            }
            validate_panel(&raw, ValidationFlags::default()).unwrap()
        };
        let late = did_weights(&build(5)).unwrap();
        let early = did_weights(&build(3)).unwrap();
        let comp = |w: &WeightDecomposition| 1.0 - w.cells[0].p_d_given_g;
        assert!(comp(&early) < comp(&late));
    }

    #[test]
    fn stacked_weights_symmetric_case() {
        let w = stacked_weights(&[5.0, 5.0, 5.0], 20.0, 3, 4).unwrap();
        for g in 0..3 {
            assert_abs_diff_eq!(w.weight(g), 1.0 / 12.0, epsilon = 1e-12);
        }
        assert_abs_diff_eq!(w.total(), 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(w.tau, 0.5, epsilon = 1e-12);
    }

    #[test]
    fn stacked_weights_favor_large_cohorts() {
        // unequal cohorts: 5, 15, 10 treated units with 20 controls
        let w = stacked_weights(&[5.0, 15.0, 10.0], 20.0, 3, 4).unwrap();
        assert!(w.weight(1) > w.weight(0));
        assert!(w.weight(1) > w.weight(2));
        assert_abs_diff_eq!(w.total(), 1.0, epsilon = 1e-12);

        // effect paths stabilizing at (8, 4, 3.5): the implied estimand
        // exceeds the size-weighted truth 2.75
        let effects = vec![
            vec![2.0, 4.0, 6.0, 8.0],
            vec![1.0, 2.0, 3.0, 4.0],
            vec![0.5, 1.0, 3.0, 3.5],
        ];
        let implied = w.implied_estimand(&effects);
        assert!(implied > 2.75, "implied {implied}");
    }

    #[test]
    fn one_cohort_stacked_weights_uniform() {
        let w = stacked_weights(&[7.0], 10.0, 2, 5).unwrap();
        assert_abs_diff_eq!(w.weight(0), 1.0 / 5.0, epsilon = 1e-12);
    }

    #[test]
    fn empty_control_pool_is_degenerate() {
        let err = stacked_weights(&[5.0, 5.0], 0.0, 2, 4).unwrap_err();
        assert!(matches!(err, Error::DegenerateDataset { .. }));
    }

    #[test]
    fn csv_export_round_trips() {
        let panel = three_cohort_toy();
        let w = did_weights(&panel).unwrap();
        let mut buf = Vec::new();
        w.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(
            lines.next().unwrap(),
            "group,period,weight,p_d_given_g,p_d_given_p,p_d,p_gp"
        );
        assert_eq!(lines.count(), w.cells.len());
    }
}
