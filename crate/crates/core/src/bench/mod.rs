//! MNIST experiments: data loading, ridge fits with selected regularization,
//! feature-count sweeps, power-law fits and result files.

pub mod dataset;
mod engine;
pub mod experiments;
pub mod powerlaw;
pub mod report;

pub use dataset::{
    load_idx, load_idx_split, load_mnist, subsample, subsample_indices, validation_split, Dataset,
    Split, CLASSES,
};
pub use engine::{
    GammaChoice, GammaSelection, ValidationPoint, DEFAULT_GAMMA_GRID, VALIDATION_FRACTION,
};
pub use experiments::{
    device_feature_pair, exact_kernel_bytes, modulus_mismatch, run_exact_kernel,
    run_linear_baseline, run_rf_sweep, ExactOptions, ExperimentOutcome, FidelityPath,
    LinearOptions, SweepConfig, SweepRecord, SweepResult, SweepSummary, DEFAULT_MEMORY_BUDGET,
    DEFAULT_N_GRID, DEFAULT_SEEDS,
};
pub use powerlaw::{fit_power_law, PowerLawFit, FIXED_EXPONENT};
pub use report::{
    emit_results, manifest_path, read_csv, write_manifest, DatasetRecord, OutputFormat,
    RunManifest,
};
