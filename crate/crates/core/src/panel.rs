//! Long-format panel data model with staggered treatment adoption.
//!
//! A [`Panel`] is built from raw [`Observation`]s by [`validate_panel`]. During
//! construction every observation is annotated with its cohort (the set of
//! units sharing an adoption time), its treatment status, and its relative
//! time since adoption. Treatment is absorbing: once a cohort adopts, it stays
//! treated for the rest of the sample, and inputs violating this cannot be
//! expressed (adoption is a single first-treated time per unit).

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::io::{Read, Write};

use crate::error::{Error, PanelViolation, Result};

/// One row of a long-format panel.
#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    /// Unit identifier (state, firm, individual, ...).
    pub unit: String,
    /// Calendar time index.
    pub time: i64,
    /// Outcome value.
    pub outcome: f64,
    /// First treated time; `None` means never treated.
    pub adoption: Option<i64>,
    /// Cluster identifier for robust inference; defaults to the unit id.
    pub cluster: Option<String>,
    /// Nonnegative row weight (e.g. cell size for aggregated data).
    pub weight: f64,
}

impl Observation {
    pub fn new(unit: impl Into<String>, time: i64, outcome: f64) -> Self {
        Self {
            unit: unit.into(),
            time,
            outcome,
            adoption: None,
            cluster: None,
            weight: 1.0,
        }
    }

    pub fn with_adoption(mut self, adoption: i64) -> Self {
        self.adoption = Some(adoption);
        self
    }

    pub fn with_cluster(mut self, cluster: impl Into<String>) -> Self {
        self.cluster = Some(cluster.into());
        self
    }

    pub fn with_weight(mut self, weight: f64) -> Self {
        self.weight = weight;
        self
    }
}

/// What to do with units that are already treated at the first sample time.
///
/// No treatment effect is identified for such units (they have no
/// pre-treatment period), so they are excluded from treated-effect estimands.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum AlwaysTreatedPolicy {
    /// Drop their observations entirely (default).
    #[default]
    Drop,
    /// Keep their observations in the sample but exclude them from
    /// treated-effect estimands.
    Retain,
}

/// Validation requirements checked by [`validate_panel`].
#[derive(Debug, Clone, Copy, Default)]
pub struct ValidationFlags {
    /// Require at least one untreated observation in every calendar time
    /// (needed to identify all time effects from untreated data).
    pub require_untreated_each_time: bool,
    /// Require every treated cohort to have at least one pre-treatment time.
    pub require_pre_period: bool,
    /// Require a never-treated group.
    pub require_never_treated: bool,
    pub always_treated: AlwaysTreatedPolicy,
}

impl ValidationFlags {
    /// Requirements for two-stage estimation of all time effects.
    pub fn for_two_stage() -> Self {
        Self {
            require_untreated_each_time: true,
            require_pre_period: true,
            require_never_treated: false,
            always_treated: AlwaysTreatedPolicy::default(),
        }
    }
}

/// A validated observation with derived treatment structure.
#[derive(Debug, Clone)]
pub struct PanelRow {
    pub unit_idx: usize,
    pub time: i64,
    pub time_idx: usize,
    pub outcome: f64,
    /// First treated time of this unit's cohort, if any.
    pub adoption: Option<i64>,
    /// Cohort index: 0 for never treated, `k >= 1` for the k-th adoption time
    /// in ascending order.
    pub cohort_idx: usize,
    /// Absorbing treatment indicator: adoption present and `time >= adoption`.
    pub treated: bool,
    /// Relative time `r = time - adoption + 1`; `None` for never-treated rows.
    /// `r = 1` is the first treated period, `r <= 0` are pre-treatment leads.
    pub rel_time: Option<i64>,
    pub cluster_idx: usize,
    pub weight: f64,
    /// True for always-treated units retained under
    /// [`AlwaysTreatedPolicy::Retain`]: kept in the sample, excluded from
    /// treated-effect estimands.
    pub estimand_excluded: bool,
}

/// Relative time since adoption: `r = time - adoption + 1`.
///
/// `r = 1` iff `time == adoption`; `r = 0` is the last pre-treatment period.
pub fn relative_time(adoption: i64, time: i64) -> i64 {
    time - adoption + 1
}

/// An immutable, validated panel. Safe to share across threads.
#[derive(Debug, Clone)]
pub struct Panel {
    units: Vec<String>,
    times: Vec<i64>,
    /// Sorted distinct adoption times of the treated cohorts. Cohort index
    /// `k >= 1` maps to `cohorts[k - 1]`; index 0 is the never-treated group.
    cohorts: Vec<i64>,
    clusters: Vec<String>,
    rows: Vec<PanelRow>,
    n_never_treated_units: usize,
    n_dropped_always_treated: usize,
    balanced: bool,
}

impl Panel {
    pub fn rows(&self) -> &[PanelRow] {
        &self.rows
    }

    pub fn n_obs(&self) -> usize {
        self.rows.len()
    }

    pub fn units(&self) -> &[String] {
        &self.units
    }

    pub fn times(&self) -> &[i64] {
        &self.times
    }

    /// Sorted distinct adoption times of treated cohorts.
    pub fn cohorts(&self) -> &[i64] {
        &self.cohorts
    }

    pub fn clusters(&self) -> &[String] {
        &self.clusters
    }

    pub fn n_clusters(&self) -> usize {
        self.clusters.len()
    }

    pub fn has_never_treated(&self) -> bool {
        self.n_never_treated_units > 0
    }

    pub fn n_never_treated_units(&self) -> usize {
        self.n_never_treated_units
    }

    /// Count of always-treated units dropped under [`AlwaysTreatedPolicy::Drop`].
    pub fn n_dropped_always_treated(&self) -> usize {
        self.n_dropped_always_treated
    }

    /// True when every unit is observed at every time with a weight that is
    /// constant within unit. The closed-form two-way demeaning in
    /// [`crate::regression::double_demean`] requires this.
    pub fn is_balanced(&self) -> bool {
        self.balanced
    }

    /// Adoption time for a cohort index (`None` for index 0, never treated).
    pub fn cohort_adoption(&self, cohort_idx: usize) -> Option<i64> {
        if cohort_idx == 0 {
            None
        } else {
            Some(self.cohorts[cohort_idx - 1])
        }
    }

    /// Distinct treated `(adoption, time)` cells with at least one
    /// estimand-eligible observation, sorted.
    pub fn treated_cells(&self) -> Vec<(i64, i64)> {
        let mut cells = BTreeSet::new();
        for row in &self.rows {
            if row.treated && !row.estimand_excluded {
                cells.insert((row.adoption.unwrap(), row.time));
            }
        }
        cells.into_iter().collect()
    }

    /// Sum of row weights.
    pub fn total_weight(&self) -> f64 {
        self.rows.iter().map(|r| r.weight).sum()
    }

    /// Weighted group-by-time mean outcomes.
    pub fn cell_means(&self) -> CellGrid {
        let n_cohorts = self.cohorts.len() + 1;
        let n_times = self.times.len();
        let mut cells = vec![
            Cell {
                count: 0,
                weight: 0.0,
                mean: 0.0,
                treated: false,
            };
            n_cohorts * n_times
        ];
        for row in &self.rows {
            let cell = &mut cells[row.cohort_idx * n_times + row.time_idx];
            cell.count += 1;
            cell.weight += row.weight;
            cell.mean += row.weight * row.outcome;
            cell.treated |= row.treated;
        }
        for cell in &mut cells {
            if cell.weight > 0.0 {
                cell.mean /= cell.weight;
            }
        }
        CellGrid {
            cohorts: self.cohorts.clone(),
            times: self.times.clone(),
            cells,
            n_times,
        }
    }
}

/// Group-by-time cell summary (counts, weights, weighted mean outcomes).
#[derive(Debug, Clone)]
pub struct CellGrid {
    cohorts: Vec<i64>,
    times: Vec<i64>,
    cells: Vec<Cell>,
    n_times: usize,
}

#[derive(Debug, Clone)]
pub struct Cell {
    pub count: usize,
    pub weight: f64,
    pub mean: f64,
    pub treated: bool,
}

impl CellGrid {
    /// Cell for cohort index (0 = never treated) and time index.
    pub fn cell(&self, cohort_idx: usize, time_idx: usize) -> &Cell {
        &self.cells[cohort_idx * self.n_times + time_idx]
    }

    pub fn cohorts(&self) -> &[i64] {
        &self.cohorts
    }

    pub fn times(&self) -> &[i64] {
        &self.times
    }

    /// Overall weighted mean outcome implied by the grid.
    pub fn weighted_mean(&self) -> f64 {
        let mut num = 0.0;
        let mut den = 0.0;
        for cell in &self.cells {
            num += cell.weight * cell.mean;
            den += cell.weight;
        }
        num / den
    }
}

/// Validate raw observations and derive the panel structure.
///
/// Collects every violated requirement into a single [`Error::InvalidPanel`].
pub fn validate_panel(raw: &[Observation], flags: ValidationFlags) -> Result<Panel> {
    if raw.is_empty() {
        return Err(Error::EmptyPanel);
    }

    let mut violations = Vec::new();

    // Unit -> adoption; detect inconsistent adoption declarations as duplicates
    // of structure rather than silently taking the first.
    let mut seen: BTreeSet<(&str, i64)> = BTreeSet::new();
    for obs in raw {
        if !seen.insert((obs.unit.as_str(), obs.time)) {
            violations.push(PanelViolation::DuplicateKey {
                unit: obs.unit.clone(),
                time: obs.time,
            });
        }
        if !(obs.weight >= 0.0) {
            violations.push(PanelViolation::BadWeight {
                unit: obs.unit.clone(),
                time: obs.time,
                weight: obs.weight,
            });
        }
    }
    if raw.iter().all(|o| o.weight == 0.0) {
        violations.push(PanelViolation::BadWeight {
            unit: raw[0].unit.clone(),
            time: raw[0].time,
            weight: 0.0,
        });
    }

    let min_time = raw.iter().map(|o| o.time).min().unwrap();

    // Always-treated units: adoption at or before the first sample time.
    let always_treated: BTreeSet<&str> = raw
        .iter()
        .filter(|o| o.adoption.is_some_and(|a| a <= min_time))
        .map(|o| o.unit.as_str())
        .collect();
    let drop_always = flags.always_treated == AlwaysTreatedPolicy::Drop;
    let n_dropped_always_treated = if drop_always { always_treated.len() } else { 0 };

    let kept: Vec<&Observation> = raw
        .iter()
        .filter(|o| !(drop_always && always_treated.contains(o.unit.as_str())))
        .collect();
    if kept.is_empty() {
        return Err(Error::EmptyPanel);
    }

    let times: Vec<i64> = kept
        .iter()
        .map(|o| o.time)
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let cohorts: Vec<i64> = kept
        .iter()
        .filter_map(|o| o.adoption)
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();

    let mut units: Vec<String> = kept
        .iter()
        .map(|o| o.unit.clone())
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    units.sort();
    let unit_index: HashMap<&str, usize> =
        units.iter().enumerate().map(|(i, u)| (u.as_str(), i)).collect();
    let time_index: HashMap<i64, usize> =
        times.iter().enumerate().map(|(i, &t)| (t, i)).collect();
    let cohort_index: HashMap<i64, usize> =
        cohorts.iter().enumerate().map(|(i, &a)| (a, i + 1)).collect();

    let mut clusters: Vec<String> = kept
        .iter()
        .map(|o| o.cluster.clone().unwrap_or_else(|| o.unit.clone()))
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    clusters.sort();
    let cluster_index: HashMap<&str, usize> = clusters
        .iter()
        .enumerate()
        .map(|(i, c)| (c.as_str(), i))
        .collect();

    // Requirement checks.
    if flags.require_untreated_each_time {
        for &t in &times {
            let any_untreated = kept
                .iter()
                .any(|o| o.time == t && !o.adoption.is_some_and(|a| t >= a));
            if !any_untreated {
                violations.push(PanelViolation::NoUntreatedObservations { time: t });
            }
        }
    }
    if flags.require_pre_period {
        for &a in &cohorts {
            if a <= times[0] && !drop_always {
                violations.push(PanelViolation::NoPreTreatmentPeriod { adoption: a });
            }
        }
    }
    if flags.require_never_treated && !kept.iter().any(|o| o.adoption.is_none()) {
        violations.push(PanelViolation::NoNeverTreatedGroup);
    }

    // Cohort contiguity: each cohort's observed times form a contiguous run
    // within the panel's time axis.
    let mut cohort_times: BTreeMap<Option<i64>, BTreeSet<i64>> = BTreeMap::new();
    for o in &kept {
        cohort_times.entry(o.adoption).or_default().insert(o.time);
    }
    for (adoption, observed) in &cohort_times {
        let lo = *observed.iter().next().unwrap();
        let hi = *observed.iter().next_back().unwrap();
        for &t in &times {
            if t > lo && t < hi && !observed.contains(&t) {
                violations.push(PanelViolation::NonContiguousCohort {
                    adoption: adoption.unwrap_or(i64::MIN),
                    missing_time: t,
                });
            }
        }
    }

    if !violations.is_empty() {
        return Err(Error::InvalidPanel(violations));
    }

    let mut rows: Vec<PanelRow> = kept
        .iter()
        .map(|o| {
            let treated = o.adoption.is_some_and(|a| o.time >= a);
            let excluded = always_treated.contains(o.unit.as_str());
            PanelRow {
                unit_idx: unit_index[o.unit.as_str()],
                time: o.time,
                time_idx: time_index[&o.time],
                outcome: o.outcome,
                adoption: o.adoption,
                cohort_idx: o.adoption.map_or(0, |a| cohort_index[&a]),
                treated,
                rel_time: o.adoption.map(|a| relative_time(a, o.time)),
                cluster_idx: cluster_index
                    [o.cluster.as_deref().unwrap_or(o.unit.as_str())],
                weight: o.weight,
                estimand_excluded: excluded,
            }
        })
        .collect();
    rows.sort_by_key(|r| (r.unit_idx, r.time_idx));

    let n_never_treated_units = rows
        .iter()
        .filter(|r| r.adoption.is_none())
        .map(|r| r.unit_idx)
        .collect::<BTreeSet<_>>()
        .len();

    let balanced = {
        let complete = rows.len() == units.len() * times.len();
        let mut unit_weight: HashMap<usize, f64> = HashMap::new();
        let constant_weights = rows.iter().all(|r| {
            let w = unit_weight.entry(r.unit_idx).or_insert(r.weight);
            (*w - r.weight).abs() <= 1e-12 * w.abs().max(1.0)
        });
        complete && constant_weights
    };

    Ok(Panel {
        units,
        times,
        cohorts,
        clusters,
        rows,
        n_never_treated_units,
        n_dropped_always_treated,
        balanced,
    })
}

/// Read observations from CSV with header
/// `unit,time,y[,first_treat][,cluster][,weight]`.
///
/// An empty `first_treat` field means never treated. UTF-8, comma-separated,
/// `.` decimal point.
pub fn read_csv<R: Read>(reader: R) -> Result<Vec<Observation>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr
        .headers()
        .map_err(|e| Error::Parse { row: 0, message: e.to_string() })?
        .clone();
    let col = |name: &str| headers.iter().position(|h| h == name);
    let unit_col = col("unit").ok_or_else(|| Error::Parse {
        row: 0,
        message: "missing required column `unit`".into(),
    })?;
    let time_col = col("time").ok_or_else(|| Error::Parse {
        row: 0,
        message: "missing required column `time`".into(),
    })?;
    let y_col = col("y").ok_or_else(|| Error::Parse {
        row: 0,
        message: "missing required column `y`".into(),
    })?;
    let ft_col = col("first_treat");
    let cluster_col = col("cluster");
    let weight_col = col("weight");

    let mut out = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let row = i + 2; // 1-based, after header
        let rec = rec.map_err(|e| Error::Parse { row, message: e.to_string() })?;
        let field = |c: usize| rec.get(c).unwrap_or("");
        let time: i64 = field(time_col).parse().map_err(|_| Error::Parse {
            row,
            message: format!("column `time`: invalid integer {:?}", field(time_col)),
        })?;
        let outcome: f64 = field(y_col).parse().map_err(|_| Error::Parse {
            row,
            message: format!("column `y`: invalid number {:?}", field(y_col)),
        })?;
        let adoption = match ft_col.map(field) {
            None | Some("") => None,
            Some(s) => Some(s.parse::<i64>().map_err(|_| Error::Parse {
                row,
                message: format!("column `first_treat`: invalid integer {s:?}"),
            })?),
        };
        let cluster = match cluster_col.map(field) {
            None | Some("") => None,
            Some(s) => Some(s.to_string()),
        };
        let weight = match weight_col.map(field) {
            None | Some("") => 1.0,
            Some(s) => s.parse::<f64>().map_err(|_| Error::Parse {
                row,
                message: format!("column `weight`: invalid number {s:?}"),
            })?,
        };
        out.push(Observation {
            unit: field(unit_col).to_string(),
            time,
            outcome,
            adoption,
            cluster,
            weight,
        });
    }
    Ok(out)
}

/// Write observations in the schema accepted by [`read_csv`], full precision.
pub fn write_csv<W: Write>(writer: W, observations: &[Observation]) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    wtr.write_record(["unit", "time", "y", "first_treat", "cluster", "weight"])
        .map_err(io_err)?;
    for o in observations {
        wtr.write_record([
            o.unit.as_str(),
            &o.time.to_string(),
            &format!("{:.17e}", o.outcome),
            &o.adoption.map(|a| a.to_string()).unwrap_or_default(),
            o.cluster.as_deref().unwrap_or(""),
            &format!("{:.17e}", o.weight),
        ])
        .map_err(io_err)?;
    }
    wtr.flush()?;
    Ok(())
}

fn io_err(e: csv::Error) -> Error {
    Error::Parse { row: 0, message: e.to_string() }
}
