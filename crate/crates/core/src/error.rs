//! Error types shared across the crate.

use thiserror::Error;

/// A single validation failure found while constructing a [`crate::Panel`].
///
/// Validation collects every violation before failing, so callers see the
/// complete list rather than the first problem encountered.
#[derive(Debug, Clone, PartialEq)]
pub enum PanelViolation {
    /// The same (unit, time) pair appears more than once.
    DuplicateKey { unit: String, time: i64 },
    /// A calendar time has no untreated observation, so its time effect
    /// cannot be identified from untreated data.
    NoUntreatedObservations { time: i64 },
    /// A treated cohort has no pre-treatment observation.
    NoPreTreatmentPeriod { adoption: i64 },
    /// No never-treated units exist but the caller required them.
    NoNeverTreatedGroup,
    /// An adoption time defines a cohort with no observations.
    EmptyCohort { adoption: i64 },
    /// A weight is negative, or every weight is zero.
    BadWeight { unit: String, time: i64, weight: f64 },
    /// A cohort's observations skip a calendar time that lies inside its span.
    NonContiguousCohort { adoption: i64, missing_time: i64 },
}

impl std::fmt::Display for PanelViolation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Self::DuplicateKey { unit, time } => {
                write!(f, "duplicate observation for unit {unit:?} at time {time}")
            }
            Self::NoUntreatedObservations { time } => {
                write!(f, "no untreated observation at time {time}")
            }
            Self::NoPreTreatmentPeriod { adoption } => {
                write!(f, "cohort adopting at {adoption} has no pre-treatment period")
            }
            Self::NoNeverTreatedGroup => write!(f, "panel has no never-treated units"),
            Self::EmptyCohort { adoption } => {
                write!(f, "cohort adopting at {adoption} has no observations")
            }
            Self::BadWeight { unit, time, weight } => {
                write!(f, "invalid weight {weight} for unit {unit:?} at time {time}")
            }
            Self::NonContiguousCohort { adoption, missing_time } => write!(
                f,
                "cohort adopting at {adoption} is missing time {missing_time} inside its span"
            ),
        }
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("empty panel: no observations supplied")]
    EmptyPanel,

    #[error("invalid panel:\n{}", format_violations(.0))]
    InvalidPanel(Vec<PanelViolation>),

    #[error("design matrix is rank deficient; collinear columns: {}", .columns.join(", "))]
    RankDeficient { columns: Vec<String> },

    #[error("empty estimation sample")]
    EmptySample,

    #[error("need at least 2 clusters for cluster-robust inference, found {0}")]
    TooFewClusters(usize),

    #[error("panel is not balanced: {0}")]
    UnbalancedPanel(String),

    #[error("fixed effect {0:?} is not identified from untreated observations")]
    UnidentifiedFixedEffect(String),

    #[error("event-study indicator {0} has no observations")]
    EmptyBin(String),

    #[error("cohort adopting at {adoption} lacks the window [{start}, {end}]")]
    WindowUnavailable { adoption: i64, start: i64, end: i64 },

    #[error("panel has no treated cells")]
    NoTreatedCells,

    #[error("effect grid is missing cell (adoption {adoption}, time {time})")]
    MissingCell { adoption: i64, time: i64 },

    #[error("parameter {0:?} is not identified (singular Jacobian)")]
    Unidentified(String),

    #[error("GMM system is singular")]
    SingularSystem,

    #[error("stacked dataset for cohort {adoption} is degenerate (treated share {share})")]
    DegenerateDataset { adoption: i64, share: f64 },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("CSV parse error at row {row}: {message}")]
    Parse { row: usize, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

fn format_violations(violations: &[PanelViolation]) -> String {
    violations
        .iter()
        .map(|v| format!("  - {v}"))
        .collect::<Vec<_>>()
        .join("\n")
}

pub type Result<T> = std::result::Result<T, Error>;
