//! End-to-end study orchestration: configuration, execution of the target
//! per sample, cached preprocessing, queries and reports.

pub mod cache;
pub mod config;
mod preprocess;
mod report;
mod runner;
pub mod service;

pub use cache::{Cache, CacheEntry, CacheStatus};
pub use config::{StudyConfig, Target, CACHE_ENV};
pub use preprocess::{field_measures, grid_for, preprocess, ArtifactInfo, Collection, Preprocessed};
pub use report::{write_analysis, write_report, SENSITIVITY_FILE, VOLUME_STEM};
pub use runner::{
    plan_for, result_path, run_study, study_digest, Manifest, RunSummary, SampleRecord, SampleStatus, CONFIG_FILE,
    MANIFEST_FILE, PLAN_FILE, RESULTS_DIR,
};
pub use service::{QueryService, Response};
