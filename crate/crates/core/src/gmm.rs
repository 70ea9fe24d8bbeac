//! Joint GMM estimation of both stages of the two-stage estimator.
//!
//! The second-stage dependent variable is built from first-stage estimates,
//! so naive second-stage standard errors ignore first-stage sampling noise.
//! Stacking the estimating equations of both stages into one just-identified
//! moment system and applying the usual sandwich formula corrects for this.
//!
//! All moments are linear in the parameters, so solving is a single linear
//! system (the stacked normal equations), not an iterative optimization, and
//! the Jacobian is a data-only constant computed analytically.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::estimators::{EventStudySpec, TwoStageOptions};
use crate::panel::Panel;
use crate::regression::Vcov;

/// Which estimator's estimating equations the moment system reproduces.
#[derive(Debug, Clone, Copy)]
pub enum GmmVariant {
    TwoStageDid(TwoStageOptions),
    TwoStageEventStudy(EventStudySpec, TwoStageOptions),
}

/// A just-identified stacked moment system.
///
/// Per observation `i`, the moments are
///
/// ```text
/// f_i(phi, beta) = [ 1(i in S1) * w_i * z_i  * (y_i - z_i' phi)
///                    1(i in S2) * w_i * d_i  * (y_i - z_fe_i' phi_fe - d_i' beta) ]
/// ```
///
/// where `z_i` is the first-stage design row, `d_i` the second-stage
/// regressor row, and `z_fe_i' phi_fe` uses only the leading `fe_cols`
/// columns of the first stage. Setting the sample mean of `f` to zero
/// reproduces exactly the sequential two-step estimator.
#[derive(Debug, Clone)]
pub struct MomentSystem {
    /// First-stage design over all rows (`n x k1`).
    pub design1: DMatrix<f64>,
    /// Second-stage regressors over all rows (`n x k2`), zero outside `S2`.
    pub design2: DMatrix<f64>,
    /// Leading columns of `design1` subtracted in the second-stage residual.
    pub fe_cols: usize,
    /// First-stage sample `S1`.
    pub in_first: Vec<bool>,
    /// Second-stage sample `S2`.
    pub in_second: Vec<bool>,
    pub y: Vec<f64>,
    pub weights: Vec<f64>,
    pub clusters: Vec<usize>,
    /// Parameter labels, first stage then second stage.
    pub labels: Vec<String>,
}

/// Point estimates (and optionally the sandwich covariance) for a solved
/// moment system.
#[derive(Debug, Clone)]
pub struct GmmResult {
    pub theta: DVector<f64>,
    pub labels: Vec<String>,
    pub vcov: Option<Vcov>,
}

impl GmmResult {
    /// Parameter value by label.
    pub fn parameter(&self, label: &str) -> Option<f64> {
        self.labels.iter().position(|l| l == label).map(|j| self.theta[j])
    }
}

impl MomentSystem {
    pub fn n_rows(&self) -> usize {
        self.y.len()
    }

    pub fn k1(&self) -> usize {
        self.design1.ncols()
    }

    pub fn k2(&self) -> usize {
        self.design2.ncols()
    }

    pub fn n_params(&self) -> usize {
        self.k1() + self.k2()
    }

    /// Per-observation moment values at `theta` (`n x (k1 + k2)`).
    pub fn moments(&self, theta: &DVector<f64>) -> DMatrix<f64> {
        let (n, k1, k2) = (self.n_rows(), self.k1(), self.k2());
        assert_eq!(theta.len(), k1 + k2, "theta length must match parameters");
        let mut f = DMatrix::zeros(n, k1 + k2);
        for i in 0..n {
            let w = self.weights[i];
            if self.in_first[i] {
                let mut resid = self.y[i];
                for j in 0..k1 {
                    resid -= self.design1[(i, j)] * theta[j];
                }
                for j in 0..k1 {
                    f[(i, j)] = w * self.design1[(i, j)] * resid;
                }
            }
            if self.in_second[i] {
                let mut resid = self.y[i];
                for j in 0..self.fe_cols {
                    resid -= self.design1[(i, j)] * theta[j];
                }
                for j in 0..k2 {
                    resid -= self.design2[(i, j)] * theta[k1 + j];
                }
                for j in 0..k2 {
                    f[(i, k1 + j)] = w * self.design2[(i, j)] * resid;
                }
            }
        }
        f
    }

    /// Sample mean of the moments at `theta`; zero (to rounding) at the
    /// solution.
    pub fn mean_moments(&self, theta: &DVector<f64>) -> DVector<f64> {
        let f = self.moments(theta);
        let n = self.n_rows() as f64;
        DVector::from_iterator(
            self.n_params(),
            (0..self.n_params()).map(|j| f.column(j).sum() / n),
        )
    }

    /// Blocks of the stacked normal equations `A theta = b` with
    /// `A = [[a11, 0], [a21, a22]]`; `A` equals minus the summed moment
    /// Jacobian.
    fn normal_blocks(
        &self,
    ) -> (DMatrix<f64>, DMatrix<f64>, DMatrix<f64>, DVector<f64>, DVector<f64>) {
        let (n, k1, k2) = (self.n_rows(), self.k1(), self.k2());
        let mut a11 = DMatrix::zeros(k1, k1);
        let mut a21 = DMatrix::zeros(k2, k1);
        let mut a22 = DMatrix::zeros(k2, k2);
        let mut b1 = DVector::zeros(k1);
        let mut b2 = DVector::zeros(k2);
        for i in 0..n {
            let w = self.weights[i];
            if self.in_first[i] {
                for a in 0..k1 {
                    let za = self.design1[(i, a)];
                    if za == 0.0 {
                        continue;
                    }
                    for b in 0..k1 {
                        a11[(a, b)] += w * za * self.design1[(i, b)];
                    }
                    b1[a] += w * za * self.y[i];
                }
            }
            if self.in_second[i] {
                for a in 0..k2 {
                    let da = self.design2[(i, a)];
                    if da == 0.0 {
                        continue;
                    }
                    for b in 0..self.fe_cols {
                        a21[(a, b)] += w * da * self.design1[(i, b)];
                    }
                    for b in 0..k2 {
                        a22[(a, b)] += w * da * self.design2[(i, b)];
                    }
                    b2[a] += w * da * self.y[i];
                }
            }
        }
        (a11, a21, a22, b1, b2)
    }

    fn assemble(&self) -> (DMatrix<f64>, DVector<f64>) {
        let (a11, a21, a22, b1, b2) = self.normal_blocks();
        let (k1, k2) = (self.k1(), self.k2());
        let k = k1 + k2;
        let mut a = DMatrix::zeros(k, k);
        let mut b = DVector::zeros(k);
        a.view_mut((0, 0), (k1, k1)).copy_from(&a11);
        a.view_mut((k1, 0), (k2, k1)).copy_from(&a21);
        a.view_mut((k1, k1), (k2, k2)).copy_from(&a22);
        b.rows_mut(0, k1).copy_from(&b1);
        b.rows_mut(k1, k2).copy_from(&b2);
        (a, b)
    }

    /// Cluster-aggregated moment scores at `theta` (`G x (k1+k2)`), the
    /// number of nonempty clusters, and the small-sample factor `G/(G-1)`.
    fn cluster_scores(&self, theta: &DVector<f64>) -> Result<(DMatrix<f64>, usize, f64)> {
        let f = self.moments(theta);
        let n_clusters = self.clusters.iter().copied().max().map_or(0, |m| m + 1);
        let k = self.n_params();
        let mut scores = DMatrix::zeros(n_clusters, k);
        for i in 0..self.n_rows() {
            let c = self.clusters[i];
            for j in 0..k {
                scores[(c, j)] += f[(i, j)];
            }
        }
        let n_distinct = {
            let mut seen = vec![false; n_clusters];
            for &c in &self.clusters {
                seen[c] = true;
            }
            seen.iter().filter(|&&s| s).count()
        };
        if n_distinct < 2 {
            return Err(Error::TooFewClusters(n_distinct));
        }
        let g = n_distinct as f64;
        Ok((scores, n_distinct, g / (g - 1.0)))
    }
}

/// Moment system reproducing the estimating equations of the chosen
/// estimator variant.
pub fn build_moment_system(panel: &Panel, variant: &GmmVariant) -> Result<MomentSystem> {
    match variant {
        GmmVariant::TwoStageDid(options) => {
            crate::estimators::did_system(panel, options)
        }
        GmmVariant::TwoStageEventStudy(spec, options) => {
            crate::estimators::event_study_system(panel, spec, options)
        }
    }
}

/// Solve the stacked normal equations; the moments are linear in the
/// parameters, so this is a single linear solve.
pub fn solve_gmm(system: &MomentSystem) -> Result<GmmResult> {
    let (a, b) = system.assemble();
    let theta = a.lu().solve(&b).ok_or(Error::SingularSystem)?;
    Ok(GmmResult { theta, labels: system.labels.clone(), vcov: None })
}

/// Full sandwich covariance `A^{-1} Omega A^{-1}'` at `theta`, where `A` is
/// the summed Jacobian and `Omega` the cluster-aggregated outer product of
/// the moments (with a `G/(G-1)` degrees-of-freedom factor).
pub fn sandwich_vcov(system: &MomentSystem, theta: &DVector<f64>) -> Result<GmmResult> {
    let (a, _) = system.assemble();
    let a_inv = a.lu().try_inverse().ok_or(Error::SingularSystem)?;
    let (scores, n_clusters, adjustment) = system.cluster_scores(theta)?;
    // V = A^{-1} (adj * S'S) A^{-1}'; computed as T'T with T = S A^{-1}'
    let t = &scores * a_inv.transpose();
    let mut matrix = t.transpose() * t * adjustment;
    symmetrize(&mut matrix);
    Ok(GmmResult {
        theta: theta.clone(),
        labels: system.labels.clone(),
        vcov: Some(Vcov {
            matrix,
            labels: system.labels.clone(),
            n_clusters,
            adjustment,
        }),
    })
}

/// Covariance of the second-stage block only, computed by partitioned
/// elimination of the first-stage block: only the `beta` rows of `A^{-1}`,
/// `[-a22^{-1} a21 a11^{-1}, a22^{-1}]`, are formed, never the full inverse
/// of the stacked system. Numerically identical to the corresponding block
/// of [`sandwich_vcov`].
pub fn beta_vcov(system: &MomentSystem, theta: &DVector<f64>) -> Result<Vcov> {
    let (a11, a21, a22, _, _) = system.normal_blocks();
    let (k1, k2) = (system.k1(), system.k2());
    let a11_inv = invert_spd(a11)?;
    let a22_inv = invert_spd(a22)?;
    let left = -(&a22_inv * a21 * a11_inv);

    let (scores, n_clusters, adjustment) = system.cluster_scores(theta)?;
    // beta rows of A^{-1} applied to each cluster score
    let mut b_rows = DMatrix::zeros(k2, k1 + k2);
    b_rows.view_mut((0, 0), (k2, k1)).copy_from(&left);
    b_rows.view_mut((0, k1), (k2, k2)).copy_from(&a22_inv);
    let t = &scores * b_rows.transpose();
    let mut matrix = t.transpose() * t * adjustment;
    symmetrize(&mut matrix);
    Ok(Vcov {
        matrix,
        labels: system.labels[k1..].to_vec(),
        n_clusters,
        adjustment,
    })
}

fn invert_spd(m: DMatrix<f64>) -> Result<DMatrix<f64>> {
    if let Some(chol) = m.clone().cholesky() {
        return Ok(chol.inverse());
    }
    m.lu().try_inverse().ok_or(Error::SingularSystem)
}

fn symmetrize(m: &mut DMatrix<f64>) {
    let k = m.nrows();
    for i in 0..k {
        for j in (i + 1)..k {
            let avg = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = avg;
            m[(j, i)] = avg;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimators::{two_stage_did, TwoStageOptions};
    use crate::panel::{validate_panel, Observation, ValidationFlags};
    use crate::regression::{cluster_vcov, wls_fit_matrix};
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn two_by_two() -> Panel {
        let raw = vec![
            Observation::new("A", 1, 0.5),
            Observation::new("A", 2, 2.5),
            Observation::new("B", 1, -1.0).with_adoption(2),
            Observation::new("B", 2, 4.0).with_adoption(2),
        ];
        validate_panel(&raw, ValidationFlags::default()).unwrap()
    }

    fn noisy_panel(seed: u64) -> Panel {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut raw = Vec::new();
        for u in 0..15 {
            let adoption = if u < 6 { Some(3 + (u % 3) as i64) } else { None };
            let lam: f64 = rng.gen_range(-1.0..1.0);
            for t in 1..=8i64 {
                let mut y = lam + 0.2 * t as f64 + rng.gen_range(-1.0..1.0);
                if let Some(a) = adoption {
                    if t >= a {
                        // heterogeneous effects by cohort and duration
                        y += (a - 2) as f64 + 0.5 * (t - a) as f64;
                    }
                }
                let mut o = Observation::new(format!("u{u}"), t, y);
                if let Some(a) = adoption {
                    o = o.with_adoption(a);
                }
                raw.push(o);
            }
        }
        validate_panel(&raw, ValidationFlags::for_two_stage()).unwrap()
    }

    #[test]
    fn two_by_two_reproduces_double_difference() {
        let panel = two_by_two();
        let system = build_moment_system(
            &panel,
            &GmmVariant::TwoStageDid(TwoStageOptions::default()),
        )
        .unwrap();
        // 2 unit effects + 1 non-reference time effect + 1 beta
        assert_eq!(system.n_params(), 4);
        let solved = solve_gmm(&system).unwrap();
        let dd = (4.0 - -1.0) - (2.5 - 0.5);
        assert_abs_diff_eq!(solved.parameter("att").unwrap(), dd, epsilon = 1e-9);
    }

    #[test]
    fn solution_zeroes_mean_moments() {
        let panel = noisy_panel(7);
        let system = build_moment_system(
            &panel,
            &GmmVariant::TwoStageDid(TwoStageOptions::default()),
        )
        .unwrap();
        let solved = solve_gmm(&system).unwrap();
        let bar = system.mean_moments(&solved.theta);
        for j in 0..system.n_params() {
            assert!(bar[j].abs() < 1e-10, "moment {j} = {}", bar[j]);
        }
    }

    #[test]
    fn matches_sequential_two_stage() {
        for seed in [1, 2, 3] {
            let panel = noisy_panel(seed);
            let system = build_moment_system(
                &panel,
                &GmmVariant::TwoStageDid(TwoStageOptions::default()),
            )
            .unwrap();
            let solved = solve_gmm(&system).unwrap();
            let est = two_stage_did(&panel, &TwoStageOptions::default()).unwrap();
            assert_abs_diff_eq!(
                solved.parameter("att").unwrap(),
                est.point_scalar(),
                epsilon = 1e-8
            );
        }
    }

    #[test]
    fn partitioned_beta_block_equals_full_sandwich() {
        let panel = noisy_panel(11);
        let system = build_moment_system(
            &panel,
            &GmmVariant::TwoStageDid(TwoStageOptions::default()),
        )
        .unwrap();
        let solved = solve_gmm(&system).unwrap();
        let full = sandwich_vcov(&system, &solved.theta).unwrap();
        let beta = beta_vcov(&system, &solved.theta).unwrap();
        let k1 = system.k1();
        let full_v = full.vcov.unwrap();
        assert_abs_diff_eq!(
            beta.matrix[(0, 0)],
            full_v.matrix[(k1, k1)],
            epsilon = 1e-10 * full_v.matrix[(k1, k1)].abs()
        );
    }

    #[test]
    fn cluster_permutation_invariance() {
        let panel = noisy_panel(13);
        let mut system = build_moment_system(
            &panel,
            &GmmVariant::TwoStageDid(TwoStageOptions::default()),
        )
        .unwrap();
        let solved = solve_gmm(&system).unwrap();
        let v1 = beta_vcov(&system, &solved.theta).unwrap();
        let m = system.clusters.iter().max().unwrap() + 1;
        system.clusters = system.clusters.iter().map(|&c| (c + 5) % m).collect();
        let v2 = beta_vcov(&system, &solved.theta).unwrap();
        assert_abs_diff_eq!(v1.matrix[(0, 0)], v2.matrix[(0, 0)], epsilon = 1e-13);
    }

    #[test]
    fn known_fixed_effects_reduce_to_robust_ols() {
        // with the first-stage block removed and singleton clusters, the GMM
        // sandwich for beta is the robust OLS sandwich of the second stage
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let n = 60;
        let d: Vec<f64> = (0..n).map(|i| (i % 3 == 0) as u8 as f64).collect();
        let y: Vec<f64> = d.iter().map(|&v| 2.0 * v + rng.gen_range(-1.0..1.0)).collect();
        let system = MomentSystem {
            design1: DMatrix::zeros(n, 0),
            design2: DMatrix::from_fn(n, 1, |i, _| d[i]),
            fe_cols: 0,
            in_first: vec![false; n],
            in_second: vec![true; n],
            y: y.clone(),
            weights: vec![1.0; n],
            clusters: (0..n).collect(),
            labels: vec!["att".into()],
        };
        let solved = solve_gmm(&system).unwrap();
        let gmm_v = beta_vcov(&system, &solved.theta).unwrap();

        let x = DMatrix::from_fn(n, 1, |i, _| d[i]);
        let fit = wls_fit_matrix(x, vec!["att".into()], &y, &vec![1.0; n]).unwrap();
        let ols_v = cluster_vcov(&fit, &(0..n).collect::<Vec<_>>()).unwrap();
        assert_abs_diff_eq!(solved.theta[0], fit.coefficients[0], epsilon = 1e-10);
        assert_abs_diff_eq!(
            gmm_v.matrix[(0, 0)],
            ols_v.matrix[(0, 0)],
            epsilon = 1e-12 * ols_v.matrix[(0, 0)]
        );
    }
}
