//! Simulated panels with known dynamic treatment effects.
//!
//! A configurable data-generating process produces balanced panels with unit
//! effects, time effects, cohort-by-duration treatment effects, and
//! observation noise, all standard normal by default. Two presets mirror a
//! common benchmark design: 50 units over 10 periods with three adoption
//! cohorts whose effect paths grow with treatment duration. Monte Carlo
//! replications run in parallel with one independent, reproducible random
//! stream per replication.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimators::Estimate;
use crate::panel::{validate_panel, Observation, Panel, ValidationFlags};

/// One adoption cohort of the simulated design.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CohortSpec {
    /// First treated period.
    pub adoption: i64,
    pub n_units: usize,
    /// Effect at durations 1, 2, ...; the last value extends to longer
    /// durations.
    pub effects: Vec<f64>,
}

/// Data-generating process: `y = unit effect + time effect + effect(g, t) * D
/// + noise` on a balanced grid over periods `1..=n_times`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SimConfig {
    pub n_never_treated: usize,
    pub cohorts: Vec<CohortSpec>,
    pub n_times: i64,
    #[serde(default = "one")]
    pub unit_effect_sd: f64,
    #[serde(default = "one")]
    pub time_effect_sd: f64,
    #[serde(default = "one")]
    pub noise_sd: f64,
    #[serde(default)]
    pub seed: u64,
}

fn one() -> f64 {
    1.0
}

impl SimConfig {
    /// Benchmark design with equal cohort sizes: 35 never-treated units and
    /// cohorts of 5 adopting at periods 4, 5, and 6.
    pub fn sim1() -> Self {
        Self {
            n_never_treated: 35,
            cohorts: vec![
                CohortSpec { adoption: 4, n_units: 5, effects: vec![2.0, 4.0, 6.0, 8.0] },
                CohortSpec { adoption: 5, n_units: 5, effects: vec![1.0, 2.0, 3.0, 4.0] },
                CohortSpec { adoption: 6, n_units: 5, effects: vec![0.5, 1.0, 3.0, 3.5] },
            ],
            n_times: 10,
            unit_effect_sd: 1.0,
            time_effect_sd: 1.0,
            noise_sd: 1.0,
            seed: 0,
        }
    }

    /// Same effect paths as [`SimConfig::sim1`] with unequal cohort sizes
    /// (5, 15, 10) and 20 never-treated units.
    pub fn sim2() -> Self {
        let mut config = Self::sim1();
        config.n_never_treated = 20;
        config.cohorts[0].n_units = 5;
        config.cohorts[1].n_units = 15;
        config.cohorts[2].n_units = 10;
        config
    }

    pub fn preset(name: &str) -> Result<Self> {
        match name {
            "sim1" => Ok(Self::sim1()),
            "sim2" => Ok(Self::sim2()),
            other => Err(Error::InvalidConfig(format!(
                "unknown preset '{other}' (expected sim1 or sim2)"
            ))),
        }
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let config: Self = toml::from_str(text)
            .map_err(|e| Error::InvalidConfig(format!("bad simulation config: {e}")))?;
        config.validate()?;
        Ok(config)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string_pretty(self).expect("simulation config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_times < 1 {
            return Err(Error::InvalidConfig("n_times must be at least 1".into()));
        }
        if self.cohorts.is_empty() {
            return Err(Error::InvalidConfig("at least one cohort is required".into()));
        }
        for c in &self.cohorts {
            if c.effects.is_empty() {
                return Err(Error::InvalidConfig(format!(
                    "cohort {} has an empty effect path",
                    c.adoption
                )));
            }
            if c.n_units == 0 {
                return Err(Error::InvalidConfig(format!(
                    "cohort {} has no units",
                    c.adoption
                )));
            }
            if c.adoption < 1 || c.adoption > self.n_times {
                return Err(Error::InvalidConfig(format!(
                    "cohort adoption {} is outside periods 1..={}",
                    c.adoption, self.n_times
                )));
            }
        }
        if self.unit_effect_sd < 0.0 || self.time_effect_sd < 0.0 || self.noise_sd < 0.0 {
            return Err(Error::InvalidConfig("standard deviations must be >= 0".into()));
        }
        Ok(())
    }

    pub fn n_units(&self) -> usize {
        self.n_never_treated + self.cohorts.iter().map(|c| c.n_units).sum::<usize>()
    }

    /// True effect for a cohort at a calendar period (0 before adoption; the
    /// last path value extends past the end of the path).
    pub fn effect(&self, adoption: i64, time: i64) -> f64 {
        if time < adoption {
            return 0.0;
        }
        let cohort = self
            .cohorts
            .iter()
            .find(|c| c.adoption == adoption)
            .expect("known cohort");
        let duration = (time - adoption) as usize; // zero-based index
        *cohort
            .effects
            .get(duration)
            .unwrap_or_else(|| cohort.effects.last().unwrap())
    }
}

/// True values of the estimands under a configuration, computed from the
/// effect paths and the design composition.
#[derive(Debug, Clone)]
pub struct TrueEstimands {
    /// Treated-observation-weighted average effect.
    pub overall: f64,
    /// Cohort-share-weighted average of each cohort's first `cap` effects,
    /// as `(cap, value)` for every feasible cap.
    pub capped: Vec<(i64, f64)>,
    /// Unit-weighted average effect at each duration, over the cohorts that
    /// reach it.
    pub per_duration: Vec<(i64, f64)>,
}

impl TrueEstimands {
    pub fn capped_at(&self, cap: i64) -> Option<f64> {
        self.capped.iter().find(|&&(p, _)| p == cap).map(|&(_, v)| v)
    }
}

pub fn true_estimands(config: &SimConfig) -> TrueEstimands {
    let max_duration = config
        .cohorts
        .iter()
        .map(|c| config.n_times - c.adoption + 1)
        .max()
        .unwrap_or(0);
    let min_duration = config
        .cohorts
        .iter()
        .map(|c| config.n_times - c.adoption + 1)
        .min()
        .unwrap_or(0);

    let mut overall_num = 0.0;
    let mut overall_den = 0.0;
    for c in &config.cohorts {
        for t in c.adoption..=config.n_times {
            overall_num += c.n_units as f64 * config.effect(c.adoption, t);
            overall_den += c.n_units as f64;
        }
    }

    let total_treated_units: f64 = config.cohorts.iter().map(|c| c.n_units as f64).sum();
    let mut capped = Vec::new();
    for cap in 1..=min_duration {
        let mut value = 0.0;
        for c in &config.cohorts {
            let mean: f64 = (0..cap)
                .map(|r| config.effect(c.adoption, c.adoption + r))
                .sum::<f64>()
                / cap as f64;
            value += c.n_units as f64 / total_treated_units * mean;
        }
        capped.push((cap, value));
    }

    let mut per_duration = Vec::new();
    for r in 1..=max_duration {
        let mut num = 0.0;
        let mut den = 0.0;
        for c in &config.cohorts {
            if c.adoption + r - 1 <= config.n_times {
                num += c.n_units as f64 * config.effect(c.adoption, c.adoption + r - 1);
                den += c.n_units as f64;
            }
        }
        per_duration.push((r, num / den));
    }

    TrueEstimands { overall: overall_num / overall_den, capped, per_duration }
}

/// Draw one replication. The stream is keyed by `rep`, so replications are
/// mutually independent and each is reproducible in isolation.
pub fn simulate_panel(config: &SimConfig, rep: u64) -> Result<Panel> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(rep);
    let normal = Normal::new(0.0, 1.0).expect("unit normal");

    let mut adoptions: Vec<Option<i64>> = vec![None; config.n_never_treated];
    for c in &config.cohorts {
        adoptions.extend(std::iter::repeat(Some(c.adoption)).take(c.n_units));
    }

    let unit_effects: Vec<f64> = (0..adoptions.len())
        .map(|_| config.unit_effect_sd * normal.sample(&mut rng))
        .collect();
    let time_effects: Vec<f64> = (0..config.n_times)
        .map(|_| config.time_effect_sd * normal.sample(&mut rng))
        .collect();

    let mut raw = Vec::with_capacity(adoptions.len() * config.n_times as usize);
    for (u, &adoption) in adoptions.iter().enumerate() {
        for t in 1..=config.n_times {
            let mut y = unit_effects[u] + time_effects[(t - 1) as usize];
            if let Some(a) = adoption {
                y += config.effect(a, t);
            }
            y += config.noise_sd * normal.sample(&mut rng);
            let mut o = Observation::new(format!("u{u:04}"), t, y);
            if let Some(a) = adoption {
                o = o.with_adoption(a);
            }
            raw.push(o);
        }
    }
    validate_panel(&raw, ValidationFlags::default())
}

/// One successful Monte Carlo replication.
#[derive(Debug, Clone)]
pub struct McDraw {
    pub rep: u64,
    pub point: f64,
    pub se: Option<f64>,
}

/// Monte Carlo output; failed replications are recorded, not fatal.
#[derive(Debug, Clone)]
pub struct McResult {
    pub draws: Vec<McDraw>,
    pub errors: Vec<(u64, String)>,
    pub reps: u64,
}

impl McResult {
    pub fn mean(&self) -> f64 {
        self.draws.iter().map(|d| d.point).sum::<f64>() / self.draws.len() as f64
    }

    /// Sample standard deviation of the point estimates.
    pub fn sd(&self) -> f64 {
        let n = self.draws.len();
        if n < 2 {
            return f64::NAN;
        }
        let mean = self.mean();
        (self
            .draws
            .iter()
            .map(|d| (d.point - mean).powi(2))
            .sum::<f64>()
            / (n - 1) as f64)
            .sqrt()
    }

    /// Average of the reported standard errors, over draws that have one.
    pub fn mean_se(&self) -> Option<f64> {
        let ses: Vec<f64> = self.draws.iter().filter_map(|d| d.se).collect();
        if ses.is_empty() {
            None
        } else {
            Some(ses.iter().sum::<f64>() / ses.len() as f64)
        }
    }
}

/// Run `reps` replications in parallel, applying `estimator` to each
/// simulated panel. Draw order follows replication order.
pub fn monte_carlo<F>(config: &SimConfig, reps: u64, estimator: F) -> Result<McResult>
where
    F: Fn(&Panel) -> Result<Estimate> + Sync,
{
    config.validate()?;
    let outcomes: Vec<(u64, Result<McDraw>)> = (0..reps)
        .into_par_iter()
        .map(|rep| {
            let result = simulate_panel(config, rep).and_then(|panel| {
                let est = estimator(&panel)?;
                Ok(McDraw { rep, point: est.point_scalar(), se: Some(est.se_scalar()) })
            });
            (rep, result)
        })
        .collect();

    let mut draws = Vec::new();
    let mut errors = Vec::new();
    for (rep, outcome) in outcomes {
        match outcome {
            Ok(draw) => draws.push(draw),
            Err(e) => errors.push((rep, e.to_string())),
        }
    }
    Ok(McResult { draws, errors, reps })
}
