//! Feature-stability sweeps, transformed-reconstruction error, classifier
//! accuracy and machine-readable reports.

mod measure;
mod report;
mod sweep;

pub use measure::{
    classifier_metrics, dataset_features, evaluate_classifier, plain_reconstruction_error,
    transformed_reconstruction_error, ClassifierReport, FeatureKind, ItemError, ReconLoss,
    ReconstructionReport,
};
pub use report::{
    config_hash, curve_csv, curve_file_name, emit_report, EvalReport, MetricEntry, CURVE_COLUMNS,
    REPORT_FILE, REPORT_SCHEMA, REPORT_SCHEMA_VERSION,
};
pub use sweep::{
    cosine_similarity, stability_sweep, sweep_warp, Metric, StabilityCurve, SweepIdentity,
};
