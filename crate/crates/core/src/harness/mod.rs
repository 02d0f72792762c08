//! Scenario ingestion, event replay, synthetic workloads and the KPI
//! reports built on top of them.

mod engine;
mod events;
mod report;
mod scenario;
mod synthetic;

use std::path::PathBuf;

use thiserror::Error;

use crate::domain::ValidationReport;

pub use engine::{replay, EnteredCar, ReplayOutcome, Session};
pub use events::{load_events, parse_events, write_events, EventRecord, LogEntry, Response};
pub use report::{
    k_sweep, period_compare, report_emit, sequence_kpis, CsvRows, DayKpis, KSweepReport, KSweepRow,
    KpiReport, LaneSortedness, PeriodComparison, PeriodReport, ReportFormat, SequenceKpis,
    SortednessFactors, WidthRegression,
};
pub use scenario::{load_scenario, save_scenario, Scenario, ScenarioConfig};
pub use synthetic::{generate_synthetic, legacy_log, ColorDistribution, SyntheticSpec};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },
    #[error("catalog failed validation ({} violations)", .0.violations.len())]
    Validation(ValidationReport),
    #[error("invalid config: {0}")]
    Config(String),
}

impl HarnessError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> HarnessError {
        HarnessError::Io {
            path: path.into(),
            source,
        }
    }

    /// Whether the failure is about reading or writing files rather than their content.
    pub fn is_io(&self) -> bool {
        matches!(self, HarnessError::Io { .. })
    }
}
