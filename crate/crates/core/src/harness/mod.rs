//! Experiment configs, multi-seed runs, report tables and dataset fetching.

mod config;
mod fetch;
mod report;
mod run;

pub use config::{
    parse_depths, parse_methods, parse_seeds, ConfigOverrides, DistillSettings, ExperimentConfig, MethodName, MetricName,
    SplitConfig, TeacherConfig,
};
pub use fetch::{
    cache_dir, cached_manifest, convert, convert_adult, convert_arff, convert_sgemm, fetch_dataset, known, verify, Converted,
    Expected, Fetched, KnownDataset, Remote, SourceRecord, SourcesFile, CACHE_ENV, DATA_FILE, KNOWN, MANIFEST_FILE,
    SOURCES_FILE,
};
pub use report::{emit_report, Cell, ExperimentReport, Failure, ReportFormat, SeedAlphas, SeedSweep, TeacherRecord, MISSING};
pub use run::{
    load_dataset, resolve_metrics, run, run_prepared, run_regression_augmentation, run_seeds, CellValue, SeedOutcome,
    ENTROPY_BINS,
};
