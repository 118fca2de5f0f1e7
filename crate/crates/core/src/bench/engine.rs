//! Ridge fits with validation-selected regularization.
//!
//! The feature-space engine streams the training rows once and serves every
//! requested leading feature count from the same accumulated Gram matrix:
//! features are nested in `N`, so the Gram matrix for `N` columns is the
//! leading `N × N` block of the one for the largest `N`.

use std::sync::atomic::{AtomicBool, Ordering};
use std::time::Instant;

use faer::linalg::matmul::matmul;
use faer::{Accum, Mat, MatRef};
use serde::{Deserialize, Serialize};

use super::dataset::{validation_split, CLASSES};
use crate::linalg::{self, Cholesky};
use crate::ridge::{self, KernelRidgePredictor, LabelMatrix};
use crate::{Error, Result};

/// Decade grid searched when no fixed value is given.
pub const DEFAULT_GAMMA_GRID: [f64; 6] = [1e-3, 1e-2, 1e-1, 1.0, 10.0, 100.0];

/// Share of every training class held out to pick the regularization.
pub const VALIDATION_FRACTION: f64 = 0.1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GammaChoice {
    Fixed(f64),
    Grid(Vec<f64>),
}

impl GammaChoice {
    pub fn default_grid() -> Self {
        GammaChoice::Grid(DEFAULT_GAMMA_GRID.to_vec())
    }

    pub fn validate(&self) -> Result<()> {
        let values: &[f64] = match self {
            GammaChoice::Fixed(g) => std::slice::from_ref(g),
            GammaChoice::Grid(gs) => gs,
        };
        if values.is_empty() {
            return Err(Error::InvalidArgument("empty gamma grid".into()));
        }
        if let Some(g) = values.iter().find(|g| !(**g > 0.0 && g.is_finite())) {
            return Err(Error::InvalidArgument(format!("gamma must be positive, got {g}")));
        }
        Ok(())
    }

    /// Grid values in ascending order.
    fn grid(&self) -> Option<Vec<f64>> {
        match self {
            GammaChoice::Fixed(_) => None,
            GammaChoice::Grid(gs) => {
                let mut gs = gs.clone();
                gs.sort_by(f64::total_cmp);
                gs.dedup();
                Some(gs)
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ValidationPoint {
    pub gamma: f64,
    pub error: f64,
}

/// The regularization used for the final fit and how it was picked.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GammaSelection {
    pub gamma: f64,
    /// Validation error per grid value; empty for a fixed gamma.
    pub validation: Vec<ValidationPoint>,
}

/// Lowest validation error wins; ties go to the smaller gamma.
fn select<F>(grid: &[f64], mut error_at: F) -> Result<GammaSelection>
where
    F: FnMut(f64) -> Result<f64>,
{
    let mut validation = Vec::with_capacity(grid.len());
    for &gamma in grid {
        validation.push(ValidationPoint {
            gamma,
            error: error_at(gamma)?,
        });
    }
    let best = validation
        .iter()
        .fold(None::<ValidationPoint>, |best, p| match best {
            Some(b) if b.error <= p.error => Some(b),
            _ => Some(*p),
        })
        .expect("grid validated non-empty");
    Ok(GammaSelection {
        gamma: best.gamma,
        validation,
    })
}

fn mistakes(pred: MatRef<'_, f64>, truth: &[u32]) -> Result<usize> {
    let labels = ridge::argmax_labels(pred)?;
    Ok(labels.iter().zip(truth).filter(|(a, b)| a != b).count())
}

fn error_rate(pred: MatRef<'_, f64>, truth: &[u32]) -> Result<f64> {
    if truth.is_empty() {
        return Err(Error::InvalidArgument("empty evaluation set".into()));
    }
    Ok(mistakes(pred, truth)? as f64 / truth.len() as f64)
}

fn submatrix(a: MatRef<'_, f64>, rows: &[usize], cols: &[usize]) -> Mat<f64> {
    Mat::from_fn(rows.len(), cols.len(), |i, j| a[(rows[i], cols[j])])
}

fn check_cancel(cancel: Option<&AtomicBool>) -> Result<()> {
    match cancel {
        Some(flag) if flag.load(Ordering::Relaxed) => Err(Error::Cancelled),
        _ => Ok(()),
    }
}

/// Positions used for fitting and for validation.
pub(crate) struct Partition {
    pub fit: Vec<usize>,
    pub val: Vec<usize>,
}

impl Partition {
    pub fn new(labels: &[u32], gamma: &GammaChoice, seed: u64) -> Self {
        match gamma {
            GammaChoice::Fixed(_) => Partition {
                fit: (0..labels.len()).collect(),
                val: Vec::new(),
            },
            GammaChoice::Grid(_) => {
                let (fit, val) = validation_split(labels, VALIDATION_FRACTION, seed);
                Partition { fit, val }
            }
        }
    }
}

/// Kernel ridge on a precomputed training kernel: picks gamma on the
/// validation rows, then refits on everything. `k_full` is consumed by the
/// final factorization.
pub(crate) fn dual_select_and_fit(
    k_full: Mat<f64>,
    y: &LabelMatrix,
    part: &Partition,
    gamma: &GammaChoice,
) -> Result<(KernelRidgePredictor, GammaSelection)> {
    gamma.validate()?;
    let selection = match (gamma, gamma.grid()) {
        (GammaChoice::Fixed(g), _) => GammaSelection {
            gamma: *g,
            validation: Vec::new(),
        },
        (_, Some(grid)) => {
            let k_fit = submatrix(k_full.as_ref(), &part.fit, &part.fit);
            let k_vf = submatrix(k_full.as_ref(), &part.val, &part.fit);
            let y_fit = y.select(&part.fit);
            let truth: Vec<u32> = part.val.iter().map(|&i| y.labels()[i]).collect();
            let sel = select(&grid, |g| {
                let model = KernelRidgePredictor::fit_owned(k_fit.clone(), &y_fit, g)?;
                error_rate(model.predict(k_vf.as_ref())?.as_ref(), &truth)
            })?;
            drop(k_fit);
            sel
        }
        _ => unreachable!("grid choices always have a grid"),
    };
    let model = KernelRidgePredictor::fit_owned(k_full, y, selection.gamma)?;
    Ok((model, selection))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum RowSet {
    Train,
    Test,
}

/// Rows of a (possibly virtual) feature matrix.
pub(crate) trait RowSource: Sync {
    /// Columns available.
    fn width(&self) -> usize;
    fn len(&self, set: RowSet) -> usize;
    /// Rows per block handed out by [`rows`](Self::rows).
    fn chunk(&self) -> usize;
    /// Raw feature rows `start..start + len` of `set`.
    fn rows(&self, set: RowSet, start: usize, len: usize) -> Result<Mat<f64>>;
}

/// Outcome for one leading feature count.
#[derive(Debug, Clone)]
pub(crate) struct DimResult {
    pub dim: usize,
    pub error: f64,
    pub selection: GammaSelection,
    pub solve_ms: f64,
}

pub(crate) struct EngineTimings {
    pub train_pass_ms: f64,
    pub test_pass_ms: f64,
}

enum Model {
    /// Test predictions are `X[:, :dim] · beta`.
    Primal { dim: usize, beta: Mat<f64> },
    /// Test predictions are `s² X_test[:, :dim] X_train[:, :dim]ᵀ α`.
    Dual {
        dim: usize,
        scale: f64,
        alpha: Mat<f64>,
    },
}

fn scaled_lower(g: MatRef<'_, f64>, n: usize, s2: f64) -> Mat<f64> {
    Mat::from_fn(n, n, |i, j| if i >= j { g[(i, j)] * s2 } else { 0.0 })
}

fn solve_lower(g: Mat<f64>, gamma: f64, rhs: MatRef<'_, f64>) -> Result<Mat<f64>> {
    Cholesky::factor_shifted(g, gamma)?.solve(rhs)
}

/// Fits and scores ridge regression on the leading `dims` columns of
/// `source`, each scaled by `scale(dim)`.
///
/// Counts up to the number of fitting rows use the feature-space form,
/// larger ones the sample-space form. Results come back in `dims` order.
#[allow(clippy::too_many_arguments)]
pub(crate) fn run_feature_ridge(
    source: &dyn RowSource,
    y: &LabelMatrix,
    test_labels: &[u32],
    dims: &[usize],
    scale: &dyn Fn(usize) -> f64,
    gamma: &GammaChoice,
    split_seed: u64,
    cancel: Option<&AtomicBool>,
) -> Result<(Vec<DimResult>, EngineTimings)> {
    gamma.validate()?;
    let n = source.len(RowSet::Train);
    let n_test = source.len(RowSet::Test);
    if n != y.len() || n_test != test_labels.len() {
        return Err(Error::dim(format!(
            "{n} training rows for {} labels, {n_test} test rows for {} labels",
            y.len(),
            test_labels.len()
        )));
    }
    if n == 0 || n_test == 0 {
        return Err(Error::InvalidArgument("training and test sets must be non-empty".into()));
    }
    if dims.is_empty() || dims.iter().any(|&d| d == 0 || d > source.width()) {
        return Err(Error::InvalidArgument(format!(
            "feature counts {dims:?} must lie in 1..={}",
            source.width()
        )));
    }
    let part = Partition::new(y.labels(), gamma, split_seed);
    if part.fit.is_empty() {
        return Err(Error::InvalidArgument("no rows left for fitting".into()));
    }
    let grid = gamma.grid();
    let n_fit = part.fit.len();
    let primal_max = dims.iter().copied().filter(|&d| d <= n_fit).max();
    let dual_max = dims.iter().copied().filter(|&d| d > n_fit).max();
    let q = CLASSES;

    let mut role = vec![None; n];
    for (k, &i) in part.fit.iter().enumerate() {
        role[i] = Some((true, k));
    }
    for (k, &i) in part.val.iter().enumerate() {
        role[i] = Some((false, k));
    }
    let y_fit = y.select(&part.fit);
    let y_val = y.select(&part.val);

    // Training pass.
    let started = Instant::now();
    let p = primal_max.unwrap_or(0);
    let mut g_fit = Mat::<f64>::zeros(p, p);
    let mut xty_fit = Mat::<f64>::zeros(p, q);
    let mut x_val = Mat::<f64>::zeros(part.val.len(), p);
    let mut x_train = Mat::<f64>::zeros(if dual_max.is_some() { n } else { 0 }, dual_max.unwrap_or(0));
    let chunk = source.chunk().max(1);
    for start in (0..n).step_by(chunk) {
        check_cancel(cancel)?;
        let len = chunk.min(n - start);
        let x = source.rows(RowSet::Train, start, len)?;
        if let Some(pd) = dual_max {
            for i in 0..len {
                for j in 0..pd {
                    x_train[(start + i, j)] = x[(i, j)];
                }
            }
        }
        if p > 0 {
            let fit_rows: Vec<usize> = (0..len)
                .filter(|&i| matches!(role[start + i], Some((true, _))))
                .collect();
            let xf = Mat::from_fn(fit_rows.len(), p, |i, j| x[(fit_rows[i], j)]);
            let yf = Mat::from_fn(fit_rows.len(), q, |i, j| {
                let (_, k) = role[start + fit_rows[i]].expect("fit row");
                y_fit.matrix()[(k, j)]
            });
            linalg::add_gram_lower(&mut g_fit, xf.as_ref(), 1.0);
            matmul(
                xty_fit.as_mut(),
                Accum::Add,
                xf.transpose(),
                yf.as_ref(),
                1.0,
                linalg::par(),
            );
            for i in 0..len {
                if let Some((false, k)) = role[start + i] {
                    for j in 0..p {
                        x_val[(k, j)] = x[(i, j)];
                    }
                }
            }
        }
    }
    let train_pass_ms = started.elapsed().as_secs_f64() * 1e3;

    let val_truth = y_val.labels().to_vec();
    let mut models = Vec::with_capacity(dims.len());
    let mut selections = Vec::with_capacity(dims.len());
    let mut solve_times = Vec::with_capacity(dims.len());
    for &dim in dims {
        check_cancel(cancel)?;
        let t0 = Instant::now();
        let s = scale(dim);
        let s2 = s * s;
        if dim <= n_fit {
            let xv = x_val.as_ref().subcols(0, dim);
            let b_fit = Mat::from_fn(dim, q, |i, j| xty_fit[(i, j)] * s);
            let selection = match (gamma, &grid) {
                (GammaChoice::Fixed(g), _) => GammaSelection {
                    gamma: *g,
                    validation: Vec::new(),
                },
                (_, Some(grid)) => select(grid, |g| {
                    let beta = solve_lower(scaled_lower(g_fit.as_ref(), dim, s2), g, b_fit.as_ref())?;
                    let pred = linalg::mul(xv, beta.as_ref())?;
                    let pred = Mat::from_fn(pred.nrows(), q, |i, j| pred[(i, j)] * s);
                    error_rate(pred.as_ref(), &val_truth)
                })?,
                _ => unreachable!(),
            };
            let mut g_full = scaled_lower(g_fit.as_ref(), dim, s2);
            let mut b_full = b_fit;
            if !part.val.is_empty() {
                linalg::add_gram_lower(&mut g_full, xv, s2);
                matmul(
                    b_full.as_mut(),
                    Accum::Add,
                    xv.transpose(),
                    y_val.matrix(),
                    s,
                    linalg::par(),
                );
            }
            let beta = solve_lower(g_full, selection.gamma, b_full.as_ref())?;
            let beta = Mat::from_fn(dim, q, |i, j| beta[(i, j)] * s);
            models.push(Model::Primal { dim, beta });
            selections.push(selection);
        } else {
            let xt = x_train.as_ref().subcols(0, dim);
            let mut k = linalg::gram_rows(xt);
            for j in 0..n {
                for i in 0..n {
                    k[(i, j)] *= s2;
                }
            }
            let (model, selection) = dual_select_and_fit(k, y, &part, gamma)?;
            models.push(Model::Dual {
                dim,
                scale: s,
                alpha: model.alpha().to_owned(),
            });
            selections.push(selection);
        }
        solve_times.push(t0.elapsed().as_secs_f64() * 1e3);
    }
    drop(g_fit);
    drop(x_val);

    // Test pass.
    let started = Instant::now();
    let mut wrong = vec![0usize; dims.len()];
    for start in (0..n_test).step_by(chunk) {
        check_cancel(cancel)?;
        let len = chunk.min(n_test - start);
        let x = source.rows(RowSet::Test, start, len)?;
        let truth = &test_labels[start..start + len];
        for (slot, model) in wrong.iter_mut().zip(&models) {
            let pred = match model {
                Model::Primal { dim, beta } => {
                    linalg::mul(x.as_ref().subcols(0, *dim), beta.as_ref())?
                }
                Model::Dual { dim, scale, alpha } => {
                    let mut kt = linalg::mul_transpose(
                        x.as_ref().subcols(0, *dim),
                        x_train.as_ref().subcols(0, *dim),
                    )?;
                    let s2 = scale * scale;
                    for j in 0..kt.ncols() {
                        for i in 0..kt.nrows() {
                            kt[(i, j)] *= s2;
                        }
                    }
                    linalg::mul(kt.as_ref(), alpha.as_ref())?
                }
            };
            *slot += mistakes(pred.as_ref(), truth)?;
        }
    }
    let test_pass_ms = started.elapsed().as_secs_f64() * 1e3;

    let results = dims
        .iter()
        .zip(wrong)
        .zip(selections)
        .zip(solve_times)
        .map(|(((&dim, w), selection), solve_ms)| DimResult {
            dim,
            error: w as f64 / n_test as f64,
            selection,
            solve_ms,
        })
        .collect();
    Ok((
        results,
        EngineTimings {
            train_pass_ms,
            test_pass_ms,
        },
    ))
}

/// A pair of in-memory matrices served in fixed-size row blocks.
pub(crate) struct DenseSource<'a> {
    pub train: MatRef<'a, f64>,
    pub test: MatRef<'a, f64>,
    pub chunk: usize,
}

impl RowSource for DenseSource<'_> {
    fn width(&self) -> usize {
        self.train.ncols()
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
        let m = match set {
            RowSet::Train => self.train,
            RowSet::Test => self.test,
        };
        Ok(m.subrows(start, len).to_owned())
    }
}
