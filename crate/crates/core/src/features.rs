//! Device-free random features `X = |W U + b|` with complex Gaussian `W`,
//! ridge regression on them, and convergence of their Gram matrix to the
//! elliptic kernel.

use faer::linalg::matmul::matmul;
use faer::{Accum, Mat, MatMut, MatRef, Par};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::elliptic;
use crate::linalg;
use crate::ridge::{self, LabelMatrix};
use crate::rng::{self, Philox4x32, STREAM_PROJECTION};
use crate::{Error, Result};

/// Seeded description of the projection `W` (`n_features × input_dim`) and
/// bias.
///
/// `W[j, k]` is keyed by `(seed, j, k)`, so the first `N` features of a projection
/// with more features are exactly the features of a projection with `N`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProjectionSpec {
    pub seed: u64,
    pub n_features: usize,
    pub input_dim: usize,
    pub bias: Vec<f64>,
    pub component_std: f64,
    /// Features generated per block of `W`.
    pub block_rows: usize,
}

impl ProjectionSpec {
    pub fn new(seed: u64, n_features: usize, input_dim: usize) -> Self {
        Self {
            seed,
            n_features,
            input_dim,
            bias: vec![0.0; n_features],
            component_std: 1.0,
            block_rows: 256,
        }
    }

    pub fn with_bias(mut self, bias: Vec<f64>) -> Self {
        self.bias = bias;
        self
    }

    pub fn with_block_rows(mut self, block_rows: usize) -> Self {
        self.block_rows = block_rows;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_features == 0 || self.input_dim == 0 {
            return Err(Error::InvalidArgument(format!(
                "projection needs N, p >= 1 (got N = {}, p = {})",
                self.n_features, self.input_dim
            )));
        }
        if self.bias.len() != self.n_features {
            return Err(Error::dim(format!(
                "bias has length {} for {} features",
                self.bias.len(),
                self.n_features
            )));
        }
        if self.bias.iter().any(|b| !b.is_finite()) {
            return Err(Error::NonFinite("bias"));
        }
        if !(self.component_std > 0.0 && self.component_std.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "component_std must be positive, got {}",
                self.component_std
            )));
        }
        if self.block_rows == 0 {
            return Err(Error::InvalidArgument("block_rows must be positive".into()));
        }
        Ok(())
    }

    /// `W[feature, input]` as `(re, im)`.
    pub fn weight(&self, feature: usize, input: usize) -> (f64, f64) {
        let (re, im) = Philox4x32::new(self.seed).gaussian_pair(
            feature as u64,
            input as u32,
            STREAM_PROJECTION,
        );
        (re * self.component_std, im * self.component_std)
    }

    pub fn is_zero_bias(&self) -> bool {
        self.bias.iter().all(|&b| b == 0.0)
    }

    pub fn fingerprint(&self) -> String {
        fingerprint_of(&serde_json::json!({ "path": "ideal", "spec": self }))
    }
}

/// Hex SHA-256 of the canonical JSON text of `value`.
pub fn fingerprint_of(value: &serde_json::Value) -> String {
    let digest = Sha256::digest(value.to_string().as_bytes());
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

/// `n × N` matrix of nonnegative features, tagged with the fingerprint of the
/// spec that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    x: Mat<f64>,
    fingerprint: String,
}

impl FeatureMatrix {
    pub fn new(x: Mat<f64>, fingerprint: String) -> Result<Self> {
        for j in 0..x.ncols() {
            for i in 0..x.nrows() {
                let v = x[(i, j)];
                if !v.is_finite() {
                    return Err(Error::NonFinite("feature matrix"));
                }
                if v < 0.0 {
                    return Err(Error::InvalidArgument(format!(
                        "feature ({i}, {j}) is negative: {v}"
                    )));
                }
            }
        }
        Ok(Self { x, fingerprint })
    }

    pub fn matrix(&self) -> MatRef<'_, f64> {
        self.x.as_ref()
    }

    pub fn into_matrix(self) -> Mat<f64> {
        self.x
    }

    pub fn fingerprint(&self) -> &str {
        &self.fingerprint
    }

    pub fn nrows(&self) -> usize {
        self.x.nrows()
    }

    pub fn ncols(&self) -> usize {
        self.x.ncols()
    }

    /// The first `n` feature columns.
    pub fn leading(&self, n: usize) -> MatRef<'_, f64> {
        self.x.as_ref().subcols(0, n.min(self.x.ncols()))
    }
}

/// Samples processed per sequential product inside a feature block.
const ROW_CHUNK: usize = 2048;

fn fill_block(
    u: MatRef<'_, f64>,
    spec: &ProjectionSpec,
    first: usize,
    mut out: MatMut<'_, f64>,
) {
    let (p, b) = (u.ncols(), out.ncols());
    let g = Philox4x32::new(spec.seed);
    let std = spec.component_std;
    // Columns 0..b hold Re W for features first..first+b, b..2b hold Im W.
    let mut w = Mat::<f64>::zeros(p, 2 * b);
    for j in 0..b {
        for k in 0..p {
            let (re, im) = g.gaussian_pair((first + j) as u64, k as u32, STREAM_PROJECTION);
            w[(k, j)] = re * std;
            w[(k, b + j)] = im * std;
        }
    }
    let mut tmp = Mat::<f64>::zeros(ROW_CHUNK.min(u.nrows()), 2 * b);
    for start in (0..u.nrows()).step_by(ROW_CHUNK) {
        let len = ROW_CHUNK.min(u.nrows() - start);
        let mut t = tmp.as_mut().subrows_mut(0, len);
        matmul(
            t.as_mut(),
            Accum::Replace,
            u.subrows(start, len),
            w.as_ref(),
            1.0,
            Par::Seq,
        );
        for j in 0..b {
            let bias = spec.bias[first + j];
            for i in 0..len {
                out[(start + i, j)] = (t[(i, j)] + bias).hypot(t[(i, b + j)]);
            }
        }
    }
}

/// `X[i, j] = |(W uᵢ)_j + b_j|`.
///
/// `W` is generated one block of features at a time and never stored whole.
/// Blocks run in parallel, each with a sequential product, so the output is
/// bitwise independent of the number of threads.
pub fn ideal_projection(u: MatRef<'_, f64>, spec: &ProjectionSpec) -> Result<FeatureMatrix> {
    Ok(FeatureMatrix {
        x: ideal_projection_raw(u, spec)?,
        fingerprint: spec.fingerprint(),
    })
}

/// [`ideal_projection`] without the output validation pass.
pub fn ideal_projection_raw(u: MatRef<'_, f64>, spec: &ProjectionSpec) -> Result<Mat<f64>> {
    spec.validate()?;
    if u.ncols() != spec.input_dim {
        return Err(Error::dim(format!(
            "inputs have {} columns but the projection expects {}",
            u.ncols(),
            spec.input_dim
        )));
    }
    if !linalg::all_finite(u) {
        return Err(Error::NonFinite("projection input"));
    }
    let mut x = Mat::<f64>::zeros(u.nrows(), spec.n_features);
    if u.nrows() == 0 {
        return Ok(x);
    }
    let block = spec.block_rows;
    x.as_mut()
        .par_col_chunks_mut(block)
        .enumerate()
        .for_each(|(bi, out)| fill_block(u, spec, bi * block, out));
    Ok(x)
}

/// Which algebraic form of the projected ridge solve to use.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProjectedForm {
    /// `(XᵀX + γI_N)⁻¹ XᵀY`.
    Features,
    /// `Xᵀ(XXᵀ + γI_n)⁻¹ Y`.
    Samples,
}

impl ProjectedForm {
    /// The smaller system: features when `N < n`.
    pub fn for_shape(n: usize, n_features: usize) -> Self {
        if n_features < n {
            ProjectedForm::Features
        } else {
            ProjectedForm::Samples
        }
    }
}

/// Ridge predictions on `x_test` from features `x`, in the cheaper form.
pub fn projected_ridge(
    x: MatRef<'_, f64>,
    x_test: MatRef<'_, f64>,
    y: &LabelMatrix,
    gamma: f64,
) -> Result<Mat<f64>> {
    projected_ridge_with(ProjectedForm::for_shape(x.nrows(), x.ncols()), x, x_test, y, gamma)
}

pub fn projected_ridge_with(
    form: ProjectedForm,
    x: MatRef<'_, f64>,
    x_test: MatRef<'_, f64>,
    y: &LabelMatrix,
    gamma: f64,
) -> Result<Mat<f64>> {
    if x_test.ncols() != x.ncols() {
        return Err(Error::dim(format!(
            "test features have {} columns, training features {}",
            x_test.ncols(),
            x.ncols()
        )));
    }
    match form {
        ProjectedForm::Features => {
            let model = ridge::ridge_fit_primal(x, y, gamma)?;
            ridge::ridge_predict(x_test, &model)
        }
        ProjectedForm::Samples => ridge::ridge_predict_dual(x, x_test, y, gamma),
    }
}

/// Deviation of `(1/N)·XXᵀ` from the elliptic kernel matrix at one `N`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GramStats {
    pub n_features: usize,
    /// Largest entrywise `|G_N − K|`, averaged over trials.
    pub max_abs: f64,
    /// Root-mean-square entrywise deviation, averaged over trials.
    pub rms: f64,
    /// Standard deviation of `rms` across trials (0 for a single trial).
    pub rms_std: f64,
    /// Largest `|K|`, for relative statements.
    pub kernel_max: f64,
    pub trials: usize,
}

/// Largest sample count accepted by [`gram_convergence`].
pub const GRAM_MAX_SAMPLES: usize = 5000;

/// Gram-matrix convergence for each `N` in `n_list`.
///
/// Trial `t` uses projection seed `derive_seed(seed, t)`; within a trial the
/// features for smaller `N` are the leading columns of the largest `N`.
pub fn gram_convergence(
    u: MatRef<'_, f64>,
    n_list: &[usize],
    seed: u64,
    trials: usize,
) -> Result<Vec<GramStats>> {
    if u.nrows() == 0 || u.nrows() > GRAM_MAX_SAMPLES {
        return Err(Error::InvalidArgument(format!(
            "gram convergence needs 1..={GRAM_MAX_SAMPLES} samples, got {}",
            u.nrows()
        )));
    }
    if trials == 0 {
        return Err(Error::InvalidArgument("at least one trial is required".into()));
    }
    if n_list.is_empty() || n_list.contains(&0) {
        return Err(Error::InvalidArgument("N list must be non-empty and positive".into()));
    }
    let k = elliptic::elliptic_gram(u)?;
    let kernel_max = (0..k.ncols())
        .flat_map(|j| (0..k.nrows()).map(move |i| (i, j)))
        .map(|(i, j)| k[(i, j)].abs())
        .fold(0.0, f64::max);
    let n_max = *n_list.iter().max().expect("non-empty");
    let n = u.nrows();

    // per_trial[t][s] = (max, rms) for n_list[s]
    let per_trial: Vec<Vec<(f64, f64)>> = (0..trials)
        .map(|t| -> Result<Vec<(f64, f64)>> {
            let spec = ProjectionSpec::new(rng::derive_seed(seed, t as u64), n_max, u.ncols());
            let x = ideal_projection_raw(u, &spec)?;
            Ok(n_list
                .iter()
                .map(|&nf| {
                    let mut g = linalg::gram_rows(x.as_ref().subcols(0, nf));
                    let inv = 1.0 / nf as f64;
                    let mut worst = 0.0f64;
                    let mut sq = 0.0;
                    for j in 0..n {
                        for i in 0..n {
                            g[(i, j)] *= inv;
                            let d = (g[(i, j)] - k[(i, j)]).abs();
                            worst = worst.max(d);
                            sq += d * d;
                        }
                    }
                    (worst, (sq / (n * n) as f64).sqrt())
                })
                .collect())
        })
        .collect::<Result<_>>()?;

    Ok(n_list
        .iter()
        .enumerate()
        .map(|(s, &nf)| {
            let maxes: Vec<f64> = per_trial.iter().map(|t| t[s].0).collect();
            let rmss: Vec<f64> = per_trial.iter().map(|t| t[s].1).collect();
            let (rms, rms_std) = mean_std(&rmss);
            GramStats {
                n_features: nf,
                max_abs: mean_std(&maxes).0,
                rms,
                rms_std,
                kernel_max,
                trials,
            }
        })
        .collect())
}

/// Mean and sample standard deviation (0 for fewer than two values).
pub fn mean_std(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let mean = xs.iter().sum::<f64>() / xs.len() as f64;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (xs.len() - 1) as f64;
    (mean, var.sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample(n: usize, p: usize) -> Mat<f64> {
        Mat::from_fn(n, p, |i, j| (((i * 7 + j * 13) % 11) as f64 - 5.0) / 5.0)
    }

    #[test]
    fn zero_input_gives_modulus_of_bias() {
        let u = Mat::<f64>::zeros(3, 4);
        let x = ideal_projection(u.as_ref(), &ProjectionSpec::new(1, 6, 4)).unwrap();
        assert!((0..6).all(|j| (0..3).all(|i| x.matrix()[(i, j)] == 0.0)));
        let spec = ProjectionSpec::new(1, 3, 4).with_bias(vec![-2.0, 0.5, 1.0]);
        let x = ideal_projection(u.as_ref(), &spec).unwrap();
        assert_eq!(x.matrix()[(1, 0)], 2.0);
        assert_eq!(x.matrix()[(2, 1)], 0.5);
    }

    #[test]
    fn matches_entrywise_definition() {
        let u = sample(5, 7);
        let spec = ProjectionSpec::new(9, 300, 7).with_block_rows(64);
        let x = ideal_projection(u.as_ref(), &spec).unwrap();
        for i in 0..5 {
            for j in [0, 63, 64, 299] {
                let (mut re, mut im) = (0.0, 0.0);
                for k in 0..7 {
                    let (a, b) = spec.weight(j, k);
                    re += a * u[(i, k)];
                    im += b * u[(i, k)];
                }
                let want = re.hypot(im);
                assert!((x.matrix()[(i, j)] - want).abs() < 1e-12 * want.max(1.0));
            }
        }
    }

    #[test]
    fn block_size_and_prefix_consistency() {
        let u = sample(2100, 5);
        let a = ideal_projection_raw(u.as_ref(), &ProjectionSpec::new(3, 100, 5)).unwrap();
        let b = ideal_projection_raw(
            u.as_ref(),
            &ProjectionSpec::new(3, 40, 5).with_block_rows(7),
        )
        .unwrap();
        for j in 0..40 {
            for i in 0..2100 {
                assert_eq!(a[(i, j)].to_bits(), b[(i, j)].to_bits());
            }
        }
    }

    #[test]
    fn errors() {
        let u = sample(3, 4);
        assert!(ideal_projection(u.as_ref(), &ProjectionSpec::new(1, 5, 3)).is_err());
        assert!(ideal_projection(u.as_ref(), &ProjectionSpec::new(1, 0, 4)).is_err());
        let bad = ProjectionSpec::new(1, 5, 4).with_bias(vec![0.0; 4]);
        assert!(ideal_projection(u.as_ref(), &bad).is_err());
        assert!(FeatureMatrix::new(Mat::from_fn(1, 1, |_, _| -1.0), String::new()).is_err());
        assert!(gram_convergence(u.as_ref(), &[], 0, 1).is_err());
        assert!(gram_convergence(u.as_ref(), &[4], 0, 0).is_err());
    }

    #[test]
    fn orthogonal_pair_gram_converges() {
        let u = Mat::from_fn(2, 2, |i, j| (i == j) as u8 as f64);
        let stats = gram_convergence(u.as_ref(), &[100, 100_000], 5, 1).unwrap();
        assert!(stats[1].max_abs < stats[0].max_abs);
        assert!(stats[1].max_abs < 0.05 * stats[1].kernel_max);
        assert!((stats[1].kernel_max - 2.0).abs() < 1e-12);
    }
}
