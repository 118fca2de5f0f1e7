//! Exact-kernel, linear and random-feature experiments on MNIST-shaped data.

use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::time::Instant;

use faer::{Mat, MatRef};
use serde::{Deserialize, Serialize};

use super::dataset::Dataset;
use super::engine::{
    self, DenseSource, GammaChoice, GammaSelection, Partition, RowSet, RowSource,
    VALIDATION_FRACTION,
};
use crate::elliptic;
use crate::features::{self, ProjectionSpec};
use crate::optical::{self, DetectorSpec, DeviceConfig};
use crate::ridge;
use crate::{Error, Result};

/// 16 GiB.
pub const DEFAULT_MEMORY_BUDGET: u64 = 16 << 30;

/// Test rows scored per kernel block.
const TEST_CHUNK: usize = 1024;

/// Feature counts swept by default: 64, 128, ..., 16384.
pub const DEFAULT_N_GRID: [usize; 9] = [64, 128, 256, 512, 1024, 2048, 4096, 8192, 16384];

pub const DEFAULT_SEEDS: [u64; 5] = [0, 1, 2, 3, 4];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StageTiming {
    pub stage: &'static str,
    pub ms: f64,
}

/// A single-number experiment.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentOutcome {
    pub error: f64,
    pub selection: GammaSelection,
    pub n_train: usize,
    pub n_test: usize,
    pub wall_ms: f64,
    pub stages: Vec<StageTiming>,
}

fn ms_since(t: Instant) -> f64 {
    t.elapsed().as_secs_f64() * 1e3
}

fn check_pair(train: &Dataset, test: &Dataset) -> Result<()> {
    if train.is_empty() || test.is_empty() {
        return Err(Error::InvalidArgument("training and test sets must be non-empty".into()));
    }
    if train.pixels() != test.pixels() {
        return Err(Error::dim(format!(
            "training images have {} pixels, test images {}",
            train.pixels(),
            test.pixels()
        )));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExactOptions {
    pub gamma: GammaChoice,
    pub memory_budget: u64,
    pub split_seed: u64,
}

impl Default for ExactOptions {
    fn default() -> Self {
        Self {
            gamma: GammaChoice::default_grid(),
            memory_budget: DEFAULT_MEMORY_BUDGET,
            split_seed: 0,
        }
    }
}

/// Bytes held by an exact-kernel run on `n` training images: the kernel
/// matrix, a second `n × n` buffer for factorizations, and one block of test
/// kernel rows.
pub fn exact_kernel_bytes(n: usize) -> u64 {
    let n = n as u64;
    16 * n * n + 8 * TEST_CHUNK as u64 * n
}

/// Kernel ridge with the elliptic kernel on normalized pixels.
pub fn run_exact_kernel(
    train: &Dataset,
    test: &Dataset,
    opts: &ExactOptions,
) -> Result<ExperimentOutcome> {
    check_pair(train, test)?;
    opts.gamma.validate()?;
    let required = exact_kernel_bytes(train.len());
    if required > opts.memory_budget {
        return Err(Error::MemoryBudget {
            required,
            budget: opts.memory_budget,
        });
    }
    let started = Instant::now();
    let u = train.normalized();
    let t = Instant::now();
    let k = elliptic::elliptic_gram(u.as_ref())?;
    let kernel_ms = ms_since(t);

    let t = Instant::now();
    let y = train.label_matrix();
    let part = Partition::new(train.labels(), &opts.gamma, opts.split_seed);
    let (model, selection) = engine::dual_select_and_fit(k, &y, &part, &opts.gamma)?;
    let solve_ms = ms_since(t);

    let t = Instant::now();
    let u_test = test.normalized();
    let mut wrong = 0;
    for start in (0..test.len()).step_by(TEST_CHUNK) {
        let len = TEST_CHUNK.min(test.len() - start);
        let kt = elliptic::elliptic_kernel_matrix(u_test.as_ref().subrows(start, len), u.as_ref())?;
        let pred = ridge::argmax_labels(model.predict(kt.as_ref())?.as_ref())?;
        wrong += pred
            .iter()
            .zip(&test.labels()[start..start + len])
            .filter(|(a, b)| a != b)
            .count();
    }
    let test_ms = ms_since(t);
    Ok(ExperimentOutcome {
        error: wrong as f64 / test.len() as f64,
        selection,
        n_train: train.len(),
        n_test: test.len(),
        wall_ms: ms_since(started),
        stages: vec![
            StageTiming {
                stage: "kernel",
                ms: kernel_ms,
            },
            StageTiming {
                stage: "solve",
                ms: solve_ms,
            },
            StageTiming {
                stage: "test",
                ms: test_ms,
            },
        ],
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearOptions {
    pub gamma: GammaChoice,
    pub split_seed: u64,
    /// Append a constant feature (penalized like the others).
    pub intercept: bool,
}

impl Default for LinearOptions {
    fn default() -> Self {
        Self {
            gamma: GammaChoice::default_grid(),
            split_seed: 0,
            intercept: false,
        }
    }
}

fn with_constant(u: Mat<f64>) -> Mat<f64> {
    let p = u.ncols();
    Mat::from_fn(u.nrows(), p + 1, |i, j| if j < p { u[(i, j)] } else { 1.0 })
}

/// Ridge regression on normalized pixels; no intercept unless requested.
pub fn run_linear_baseline(
    train: &Dataset,
    test: &Dataset,
    opts: &LinearOptions,
) -> Result<ExperimentOutcome> {
    check_pair(train, test)?;
    let started = Instant::now();
    let (mut u, mut u_test) = (train.normalized(), test.normalized());
    if opts.intercept {
        u = with_constant(u);
        u_test = with_constant(u_test);
    }
    let source = DenseSource {
        train: u.as_ref(),
        test: u_test.as_ref(),
        chunk: 8192,
    };
    let (mut results, timings) = engine::run_feature_ridge(
        &source,
        &train.label_matrix(),
        test.labels(),
        &[u.ncols()],
        &|_| 1.0,
        &opts.gamma,
        opts.split_seed,
        None,
    )?;
    let r = results.pop().expect("one feature count");
    Ok(ExperimentOutcome {
        error: r.error,
        selection: r.selection,
        n_train: train.len(),
        n_test: test.len(),
        wall_ms: ms_since(started),
        stages: vec![
            StageTiming {
                stage: "train_pass",
                ms: timings.train_pass_ms,
            },
            StageTiming {
                stage: "solve",
                ms: r.solve_ms,
            },
            StageTiming {
                stage: "test_pass",
                ms: timings.test_pass_ms,
            },
        ],
    })
}

/// Where random features come from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FidelityPath {
    /// `|W u|` with `W` complex Gaussian, on normalized pixels.
    Ideal,
    /// The simulated DMD, medium and camera.
    Device,
}

impl std::str::FromStr for FidelityPath {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ideal" => Ok(FidelityPath::Ideal),
            "device" => Ok(FidelityPath::Device),
            other => Err(Error::InvalidArgument(format!(
                "unknown path {other:?} (expected ideal or device)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepConfig {
    pub n_list: Vec<usize>,
    pub seeds: Vec<u64>,
    pub gamma: GammaChoice,
    pub path: FidelityPath,
    /// Camera model of the device path.
    pub detector: DetectorSpec,
    /// Training images used to measure the Gram deviation (ideal path; 0
    /// disables it).
    pub gram_probe: usize,
    pub split_seed: u64,
    pub memory_budget: u64,
    /// Cap on one block of streamed feature rows, in bytes.
    pub chunk_bytes: usize,
}

impl SweepConfig {
    pub fn new(n_list: Vec<usize>, seeds: Vec<u64>, path: FidelityPath) -> Self {
        Self {
            n_list,
            seeds,
            gamma: GammaChoice::default_grid(),
            path,
            detector: DetectorSpec::default(),
            gram_probe: 200,
            split_seed: 0,
            memory_budget: DEFAULT_MEMORY_BUDGET,
            chunk_bytes: 256 << 20,
        }
    }

    /// Sorted, deduplicated feature counts.
    pub fn dims(&self) -> Result<Vec<usize>> {
        let mut dims = self.n_list.clone();
        dims.sort_unstable();
        dims.dedup();
        if dims.is_empty() || dims[0] == 0 {
            return Err(Error::InvalidArgument(
                "feature counts must be a non-empty list of positive integers".into(),
            ));
        }
        Ok(dims)
    }

    pub fn validate(&self) -> Result<()> {
        let dims = self.dims()?;
        if self.seeds.is_empty() {
            return Err(Error::InvalidArgument("at least one seed is required".into()));
        }
        self.gamma.validate()?;
        self.detector.validate()?;
        if self.path == FidelityPath::Device {
            let cap = optical::Geometry::CANONICAL.feature_capacity();
            if *dims.last().unwrap() > cap {
                return Err(Error::InvalidArgument(format!(
                    "the device path provides at most {cap} features"
                )));
            }
        }
        Ok(())
    }
}

/// One `(N, seed)` point. Serialized field names are the CSV header.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRecord {
    #[serde(rename = "N")]
    pub n_features: usize,
    pub seed: u64,
    pub error: f64,
    pub gram_rms: Option<f64>,
    /// Solve time for this `N` plus the shared feature passes of its seed.
    pub wall_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionRecord {
    #[serde(rename = "N")]
    pub n_features: usize,
    pub seed: u64,
    pub selection: GammaSelection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedTiming {
    pub seed: u64,
    pub features_ms: f64,
    pub train_pass_ms: f64,
    pub test_pass_ms: f64,
    pub features_per_second: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepMetadata {
    pub path: Option<FidelityPath>,
    pub experiment: String,
    pub n_list: Vec<usize>,
    pub seeds: Vec<u64>,
    pub gamma: GammaChoice,
    pub validation_fraction: f64,
    pub normalization: String,
    pub feature_scaling: String,
    pub detector: Option<DetectorSpec>,
    pub n_train: usize,
    pub n_test: usize,
    pub train_sha256: String,
    pub test_sha256: String,
    pub selections: Vec<SelectionRecord>,
    pub timings: Vec<SeedTiming>,
}

/// Mean and spread over seeds at one `N`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSummary {
    #[serde(rename = "N")]
    pub n_features: usize,
    pub mean_error: f64,
    pub std_error: f64,
    pub mean_gram_rms: Option<f64>,
    pub mean_wall_ms: f64,
    pub seeds: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub metadata: SweepMetadata,
    /// Sorted by `(N, seed)`.
    pub records: Vec<SweepRecord>,
    /// Set when the run stopped before every seed finished.
    pub partial: bool,
}

impl SweepResult {
    /// Per-`N` aggregates, `N` strictly increasing.
    pub fn summary(&self) -> Vec<SweepSummary> {
        let mut out: Vec<SweepSummary> = Vec::new();
        let mut i = 0;
        while i < self.records.len() {
            let n = self.records[i].n_features;
            let group: Vec<&SweepRecord> = self.records[i..]
                .iter()
                .take_while(|r| r.n_features == n)
                .collect();
            i += group.len();
            let errors: Vec<f64> = group.iter().map(|r| r.error).collect();
            let (mean_error, std_error) = features::mean_std(&errors);
            let grams: Option<Vec<f64>> = group.iter().map(|r| r.gram_rms).collect();
            out.push(SweepSummary {
                n_features: n,
                mean_error,
                std_error,
                mean_gram_rms: grams.map(|g| features::mean_std(&g).0),
                mean_wall_ms: group.iter().map(|r| r.wall_ms).sum::<f64>() / group.len() as f64,
                seeds: group.len(),
            });
        }
        out
    }

    /// `(N, mean error)` pairs for power-law fitting.
    pub fn mean_errors(&self) -> Vec<(usize, f64)> {
        self.summary()
            .into_iter()
            .map(|s| (s.n_features, s.mean_error))
            .collect()
    }

    /// Wraps a single-number experiment as a one-record result with `N = 0`.
    pub fn single(
        experiment: &str,
        outcome: &ExperimentOutcome,
        seed: u64,
        train: &Dataset,
        test: &Dataset,
        gamma: &GammaChoice,
    ) -> Self {
        SweepResult {
            metadata: SweepMetadata {
                path: None,
                experiment: experiment.to_string(),
                n_list: vec![0],
                seeds: vec![seed],
                gamma: gamma.clone(),
                validation_fraction: VALIDATION_FRACTION,
                normalization: "pixel / 255".into(),
                feature_scaling: "none".into(),
                detector: None,
                n_train: train.len(),
                n_test: test.len(),
                train_sha256: train.sha256(),
                test_sha256: test.sha256(),
                selections: vec![SelectionRecord {
                    n_features: 0,
                    seed,
                    selection: outcome.selection.clone(),
                }],
                timings: Vec::new(),
            },
            records: vec![SweepRecord {
                n_features: 0,
                seed,
                error: outcome.error,
                gram_rms: None,
                wall_ms: outcome.wall_ms,
            }],
            partial: false,
        }
    }
}

/// Ideal features generated on demand, block by block.
struct IdealSource<'a> {
    train: MatRef<'a, f64>,
    test: MatRef<'a, f64>,
    spec: ProjectionSpec,
    chunk: usize,
    nanos: AtomicU64,
    values: AtomicU64,
}

impl RowSource for IdealSource<'_> {
    fn width(&self) -> usize {
        self.spec.n_features
    }

    fn len(&self, set: RowSet) -> usize {
        match set {
            RowSet::Train => self.train.nrows(),
            RowSet::Test => self.test.nrows(),
        }
    }

    fn chunk(&self) -> usize {
        self.chunk
    }

    fn rows(&self, set: RowSet, start: usize, len: usize) -> Result<Mat<f64>> {
        let u = match set {
            RowSet::Train => self.train,
            RowSet::Test => self.test,
        };
        let t = Instant::now();
        let x = features::ideal_projection_raw(u.subrows(start, len), &self.spec)?;
        self.nanos
            .fetch_add(t.elapsed().as_nanos() as u64, Ordering::Relaxed);
        self.values
            .fetch_add((len * self.spec.n_features) as u64, Ordering::Relaxed);
        Ok(x)
    }
}

/// RMS of `(1/N) X Xᵀ − K` on the probe rows for every `N` in `dims`.
fn gram_probe(u: MatRef<'_, f64>, spec: &ProjectionSpec, dims: &[usize]) -> Result<Vec<f64>> {
    let k = elliptic::elliptic_gram(u)?;
    let x = features::ideal_projection_raw(u, spec)?;
    let n = u.nrows();
    Ok(dims
        .iter()
        .map(|&d| {
            let g = crate::linalg::gram_rows(x.as_ref().subcols(0, d));
            let inv = 1.0 / d as f64;
            let mut sq = 0.0;
            for j in 0..n {
                for i in 0..n {
                    sq += (g[(i, j)] * inv - k[(i, j)]).powi(2);
                }
            }
            (sq / (n * n) as f64).sqrt()
        })
        .collect())
}

/// Device features of `train` then `test` in one pass over the medium,
/// divided by the mirror block side so a fully lit pixel has unit weight.
pub fn device_feature_pair(
    train: &Dataset,
    test: &Dataset,
    seed: u64,
    detector: &DetectorSpec,
    n_features: usize,
) -> Result<(Mat<f64>, Mat<f64>)> {
    let config = DeviceConfig::canonical(seed);
    let mut images = Vec::with_capacity(train.images().len() + test.images().len());
    images.extend_from_slice(train.images());
    images.extend_from_slice(test.images());
    let x = optical::device_features_multi(
        &images,
        0,
        &config,
        std::slice::from_ref(detector),
        n_features,
    )?
    .pop()
    .expect("one detector")
    .into_matrix();
    let s = 1.0 / config.geometry.block_side as f64;
    let n = train.len();
    Ok((
        Mat::from_fn(n, n_features, |i, j| x[(i, j)] * s),
        Mat::from_fn(test.len(), n_features, |i, j| x[(n + i, j)] * s),
    ))
}

/// Random-feature ridge over every `(N, seed)` of `cfg`.
///
/// Each seed is one job covering all `N`: features for the largest `N` are
/// produced once and smaller counts use their leading columns. When `cancel`
/// is raised the seeds finished so far are returned with `partial` set.
pub fn run_rf_sweep(
    train: &Dataset,
    test: &Dataset,
    cfg: &SweepConfig,
    cancel: Option<&AtomicBool>,
) -> Result<SweepResult> {
    check_pair(train, test)?;
    cfg.validate()?;
    let dims = cfg.dims()?;
    let n_max = *dims.last().unwrap();
    let (n, n_test) = (train.len(), test.len());
    let y = train.label_matrix();

    let resident = match cfg.path {
        FidelityPath::Ideal => 8 * (n + n_test) as u64 * train.pixels() as u64,
        FidelityPath::Device => {
            let geom = DeviceConfig::canonical(0).geometry;
            let window = optical::readout_rows(&geom, std::slice::from_ref(&cfg.detector), n_max)
                * geom.sensor_side;
            let batch = (DeviceConfig::canonical(0).batch_bytes as u64).min(8 * (window * (n + n_test)) as u64);
            8 * (n + n_test) as u64 * n_max as u64 + batch
        }
    };
    let n_fit = n - (n as f64 * VALIDATION_FRACTION).round() as usize;
    let dual_n = if dims.iter().any(|&d| d > n_fit) { n as u64 } else { 0 };
    let primal_p = dims.iter().copied().filter(|&d| d <= n_fit).max().unwrap_or(0) as u64;
    let required = resident
        + 16 * primal_p * primal_p
        + 8 * primal_p * (n - n_fit) as u64
        + 8 * dual_n * n_max as u64
        + 16 * dual_n * dual_n
        + cfg.chunk_bytes as u64;
    if required > cfg.memory_budget {
        return Err(Error::MemoryBudget {
            required,
            budget: cfg.memory_budget,
        });
    }

    let (u, u_test) = match cfg.path {
        FidelityPath::Ideal => (train.normalized(), test.normalized()),
        FidelityPath::Device => (Mat::zeros(0, 0), Mat::zeros(0, 0)),
    };
    let chunk = (cfg.chunk_bytes / (8 * n_max)).max(1);

    let mut records = Vec::new();
    let mut selections = Vec::new();
    let mut timings = Vec::new();
    let mut partial = false;
    for &seed in &cfg.seeds {
        if cancel.is_some_and(|c| c.load(Ordering::Relaxed)) {
            partial = true;
            break;
        }
        let started = Instant::now();
        let outcome = match cfg.path {
            FidelityPath::Ideal => {
                let spec = ProjectionSpec::new(seed, n_max, train.pixels());
                let probe = if cfg.gram_probe > 0 {
                    let rows = cfg.gram_probe.min(n);
                    Some(gram_probe(u.as_ref().subrows(0, rows), &spec, &dims)?)
                } else {
                    None
                };
                let source = IdealSource {
                    train: u.as_ref(),
                    test: u_test.as_ref(),
                    spec,
                    chunk,
                    nanos: AtomicU64::new(0),
                    values: AtomicU64::new(0),
                };
                let run = engine::run_feature_ridge(
                    &source,
                    &y,
                    test.labels(),
                    &dims,
                    &|d| 1.0 / (d as f64).sqrt(),
                    &cfg.gamma,
                    cfg.split_seed,
                    cancel,
                );
                let feature_ms = source.nanos.load(Ordering::Relaxed) as f64 / 1e6;
                let values = source.values.load(Ordering::Relaxed) as f64;
                run.map(|r| (r, probe, feature_ms, values))
            }
            FidelityPath::Device => {
                let t = Instant::now();
                let (x, x_test) = device_feature_pair(train, test, seed, &cfg.detector, n_max)?;
                let feature_ms = ms_since(t);
                let source = DenseSource {
                    train: x.as_ref(),
                    test: x_test.as_ref(),
                    chunk,
                };
                engine::run_feature_ridge(
                    &source,
                    &y,
                    test.labels(),
                    &dims,
                    &|d| 1.0 / (d as f64).sqrt(),
                    &cfg.gamma,
                    cfg.split_seed,
                    cancel,
                )
                .map(|r| (r, None, feature_ms, ((n + n_test) * n_max) as f64))
            }
        };
        let ((results, engine_times), probe, feature_ms, values) = match outcome {
            Ok(v) => v,
            Err(Error::Cancelled) => {
                partial = true;
                break;
            }
            Err(e) => return Err(e),
        };
        let total_ms = ms_since(started);
        let solve_total: f64 = results.iter().map(|r| r.solve_ms).sum();
        let shared_ms = total_ms - solve_total;
        for (k, r) in results.into_iter().enumerate() {
            records.push(SweepRecord {
                n_features: r.dim,
                seed,
                error: r.error,
                gram_rms: probe.as_ref().map(|p| p[k]),
                wall_ms: shared_ms + r.solve_ms,
            });
            selections.push(SelectionRecord {
                n_features: r.dim,
                seed,
                selection: r.selection,
            });
        }
        timings.push(SeedTiming {
            seed,
            features_ms: feature_ms,
            train_pass_ms: engine_times.train_pass_ms,
            test_pass_ms: engine_times.test_pass_ms,
            features_per_second: if feature_ms > 0.0 {
                values / (feature_ms / 1e3)
            } else {
                0.0
            },
        });
    }
    records.sort_by_key(|r| (r.n_features, r.seed));
    selections.sort_by_key(|r| (r.n_features, r.seed));

    Ok(SweepResult {
        metadata: SweepMetadata {
            path: Some(cfg.path),
            experiment: "rf-sweep".into(),
            n_list: dims,
            seeds: cfg.seeds.clone(),
            gamma: cfg.gamma.clone(),
            validation_fraction: VALIDATION_FRACTION,
            normalization: match cfg.path {
                FidelityPath::Ideal => "pixel / 255".into(),
                FidelityPath::Device => "grey levels quantized to 17 levels on the DMD".into(),
            },
            feature_scaling: match cfg.path {
                FidelityPath::Ideal => "1/sqrt(N)".into(),
                FidelityPath::Device => "1/(4 sqrt(N))".into(),
            },
            detector: (cfg.path == FidelityPath::Device).then_some(cfg.detector),
            n_train: n,
            n_test,
            train_sha256: train.sha256(),
            test_sha256: test.sha256(),
            selections,
            timings,
        },
        records,
        partial,
    })
}

/// Relative RMS gap between the square root of binned intensity (what the
/// device reports) and the binned modulus, over the first `n_features` bins
/// of each image, noise off.
pub fn modulus_mismatch(images: &Dataset, seed: u64, n_features: usize) -> Result<f64> {
    let config = DeviceConfig::canonical(seed);
    let geom = config.geometry;
    if n_features == 0 || n_features > geom.feature_capacity() {
        return Err(Error::InvalidArgument(format!(
            "requested {n_features} bins; the camera provides 1..={}",
            geom.feature_capacity()
        )));
    }
    let rows = n_features.div_ceil(geom.bins_side()) * geom.bin_side;
    let side = geom.sensor_side;
    let mut num = 0.0;
    let mut den = 0.0;
    for i in 0..images.len() {
        let q = optical::quantize_grey_levels(images.image(i), geom.levels());
        let frame = optical::encode_dmd(&q, &geom)?;
        let y = optical::speckle_field_rows(&frame.to_vector(), &config.transmission, 0..rows * side)?;
        let intensity = optical::SensorGrid::new(rows, side, y.iter().map(|z| z.norm_sqr()).collect())?;
        let modulus = optical::SensorGrid::new(rows, side, y.iter().map(|z| z.norm()).collect())?;
        let a = optical::bin_grid(&intensity, geom.bin_side)?;
        let b = optical::bin_grid(&modulus, geom.bin_side)?;
        for j in 0..n_features {
            let s = a[j].sqrt();
            num += (s - b[j]).powi(2);
            den += s * s;
        }
    }
    Ok(if den > 0.0 { (num / den).sqrt() } else { 0.0 })
}
