//! Event-study regressions on relative-time indicators.
//!
//! The indicator family covers leads `r = -R..=0` and durations `r = 1..` with
//! `r = time - adoption + 1`, so `r = 1` is the first treated period and
//! `r = 0` the last pre-treatment one. Observations with `r < -R`, together
//! with all never-treated observations, form the omitted reference category.

use crate::error::{Error, Result};
use crate::estimators::{sub_vcov, subsample_factors, Estimate, FixedEffectsSpec};
use crate::panel::Panel;
use crate::regression::{cluster_vcov, wls_fit_matrix, DesignSpec, Regressor};

/// Lead/duration layout for event studies.
#[derive(Debug, Clone, Copy)]
pub struct EventStudySpec {
    /// Number of adoption leads `R`; indicators cover `r = -R..=0`.
    pub leads: i64,
    /// Maximum duration indicator `P`.
    pub max_duration: i64,
    /// When set, treated observations with `r > P` are dropped from the
    /// sample; otherwise the indicator family extends to the longest observed
    /// duration.
    pub cap_durations: bool,
}

impl EventStudySpec {
    pub fn new(leads: i64, max_duration: i64) -> Self {
        Self { leads, max_duration, cap_durations: false }
    }

    pub fn capped(leads: i64, max_duration: i64) -> Self {
        Self { leads, max_duration, cap_durations: true }
    }

    pub(crate) fn validate(&self) -> Result<()> {
        if self.leads < 0 {
            return Err(Error::InvalidConfig(format!(
                "event-study leads must be nonnegative, got {}",
                self.leads
            )));
        }
        if self.max_duration < 1 {
            return Err(Error::InvalidConfig(format!(
                "event-study max duration must be at least 1, got {}",
                self.max_duration
            )));
        }
        Ok(())
    }
}

/// Exclusive lead/duration indicators over the panel, plus the sample mask.
///
/// Indicator values are zero outside the mask, so the columns can be used
/// directly on the masked subsample.
pub(crate) fn event_indicators(
    panel: &Panel,
    spec: &EventStudySpec,
) -> Result<(Vec<Regressor>, Vec<bool>)> {
    spec.validate()?;
    let rows = panel.rows();
    let observed_max = rows
        .iter()
        .filter(|r| r.treated && !r.estimand_excluded)
        .filter_map(|r| r.rel_time)
        .max()
        .ok_or(Error::NoTreatedCells)?;
    let p_eff = if spec.cap_durations {
        spec.max_duration
    } else {
        spec.max_duration.max(observed_max)
    };
    let mask: Vec<bool> = rows
        .iter()
        .map(|r| {
            if r.treated {
                !r.estimand_excluded
                    && !(spec.cap_durations && r.rel_time.unwrap() > spec.max_duration)
            } else {
                true
            }
        })
        .collect();

    let mut indicators = Vec::new();
    for r in -spec.leads..=p_eff {
        let values: Vec<f64> = rows
            .iter()
            .zip(&mask)
            .map(|(row, &m)| (m && row.rel_time == Some(r)) as u8 as f64)
            .collect();
        if values.iter().all(|&v| v == 0.0) {
            return Err(Error::EmptyBin(format!("r={r}")));
        }
        indicators.push(Regressor::new(format!("r={r}"), values));
    }
    Ok((indicators, mask))
}

/// Naive event study: outcomes on unit and time effects plus the lead and
/// duration indicators, fit on the full (masked) sample.
pub fn naive_event_study(panel: &Panel, spec: &EventStudySpec) -> Result<Estimate> {
    let (indicators, mask) = event_indicators(panel, spec)?;
    let idx: Vec<usize> = (0..mask.len()).filter(|&i| mask[i]).collect();
    let design = DesignSpec {
        intercept: false,
        factors: subsample_factors(panel, &idx, FixedEffectsSpec::UnitTime),
        regressors: indicators
            .iter()
            .map(|reg| {
                Regressor::new(
                    reg.name.clone(),
                    idx.iter().map(|&i| reg.values[i]).collect::<Vec<_>>(),
                )
            })
            .collect(),
    };
    let (x, labels) = design.build();
    let y: Vec<f64> = idx.iter().map(|&i| panel.rows()[i].outcome).collect();
    let w: Vec<f64> = idx.iter().map(|&i| panel.rows()[i].weight).collect();
    let fit = wls_fit_matrix(x, labels, &y, &w)?;
    let clusters: Vec<usize> = idx.iter().map(|&i| panel.rows()[i].cluster_idx).collect();
    let vcov = cluster_vcov(&fit, &clusters)?;

    let k2 = indicators.len();
    let offset = fit.labels.len() - k2;
    let cols: Vec<usize> = (offset..fit.labels.len()).collect();
    Ok(Estimate {
        estimand: "event-study".into(),
        method: "naive".into(),
        point: (0..k2).map(|j| fit.coefficients[offset + j]).collect(),
        labels: indicators.iter().map(|r| r.name.clone()).collect(),
        vcov: sub_vcov(&vcov, &cols),
        n_obs: fit.n_obs,
        n_clusters: vcov.n_clusters,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::panel::{validate_panel, Observation, ValidationFlags};
    use approx::assert_abs_diff_eq;

    /// Homogeneous constant effect: every treated observation gets +2.
    fn homogeneous_panel() -> Panel {
        let mut raw = Vec::new();
        for u in 0..6i64 {
            let adoption = match u {
                0 | 1 => Some(3),
                2 => Some(4),
                _ => None,
            };
            for t in 1..=6i64 {
                let lam = 0.1 * u as f64;
                let gam = 0.3 * t as f64;
                let mut y = lam + gam;
                if let Some(a) = adoption {
                    if t >= a {
                        y += 2.0;
                    }
                }
                let mut o = Observation::new(format!("u{u}"), t, y);
                if let Some(a) = adoption {
                    o = o.with_adoption(a);
                }
                raw.push(o);
            }
        }
        validate_panel(&raw, ValidationFlags::default()).unwrap()
    }

    #[test]
    fn homogeneous_effect_leads_zero_durations_beta() {
        let panel = homogeneous_panel();
        let spec = EventStudySpec::new(1, 4);
        let est = naive_event_study(&panel, &spec).unwrap();
        for label in ["r=-1", "r=0"] {
            assert_abs_diff_eq!(est.coefficient(label).unwrap(), 0.0, epsilon = 1e-9);
        }
        for label in ["r=1", "r=2", "r=3", "r=4"] {
            assert_abs_diff_eq!(est.coefficient(label).unwrap(), 2.0, epsilon = 1e-9);
        }
    }

    #[test]
    fn capped_spec_drops_long_durations() {
        let panel = homogeneous_panel();
        let est = naive_event_study(&panel, &EventStudySpec::capped(1, 2)).unwrap();
        assert!(est.coefficient("r=3").is_none());
        assert_abs_diff_eq!(est.coefficient("r=2").unwrap(), 2.0, epsilon = 1e-9);
    }

    #[test]
    fn invalid_spec_rejected() {
        let panel = homogeneous_panel();
        assert!(matches!(
            naive_event_study(&panel, &EventStudySpec::new(-1, 4)).unwrap_err(),
            Error::InvalidConfig(_)
        ));
        assert!(matches!(
            naive_event_study(&panel, &EventStudySpec::new(1, 0)).unwrap_err(),
            Error::InvalidConfig(_)
        ));
    }

    #[test]
    fn oversized_lead_window_is_empty_bin() {
        let panel = homogeneous_panel();
        // r = -5 would need a cohort observed 6 periods before adoption
        let err = naive_event_study(&panel, &EventStudySpec::new(5, 2)).unwrap_err();
        assert!(matches!(err, Error::EmptyBin(ref b) if b == "r=-5"));
    }
}
