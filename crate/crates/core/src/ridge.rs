//! Ridge regression classifiers.
//!
//! Targets are one-hot rows; the predicted class is the column maximiser of
//! the regression output. The primal solve factors the `p × p` matrix
//! `UᵀU + γI`, the dual one the `n × n` matrix `UUᵀ + γI`, and kernel ridge
//! replaces `UUᵀ` with an arbitrary positive semi-definite kernel matrix.
//! Every solve goes through a Cholesky factorization.

use faer::{Mat, MatRef};

use crate::linalg::{self, Cholesky};
use crate::{Error, Result};

/// Tolerance on `max |K − Kᵀ| / max |K|` accepted by kernel ridge.
pub const SYMMETRY_TOLERANCE: f64 = 1e-10;

/// One-hot `n × q` target matrix.
#[derive(Debug, Clone)]
pub struct LabelMatrix {
    y: Mat<f64>,
    labels: Vec<u32>,
}

impl LabelMatrix {
    pub fn matrix(&self) -> MatRef<'_, f64> {
        self.y.as_ref()
    }

    /// The 1-based labels the matrix was built from.
    pub fn labels(&self) -> &[u32] {
        &self.labels
    }

    pub fn classes(&self) -> usize {
        self.y.ncols()
    }

    pub fn len(&self) -> usize {
        self.y.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.y.nrows() == 0
    }

    /// Rows restricted to `rows`, in that order.
    pub fn select(&self, rows: &[usize]) -> LabelMatrix {
        LabelMatrix {
            y: linalg::select_rows(self.y.as_ref(), rows),
            labels: rows.iter().map(|&i| self.labels[i]).collect(),
        }
    }
}

/// One-hot encoding of 1-based labels in `[1, classes]`.
pub fn encode_labels(labels: &[u32], classes: usize) -> Result<LabelMatrix> {
    if classes == 0 {
        return Err(Error::InvalidArgument("class count must be positive".into()));
    }
    let mut y = Mat::zeros(labels.len(), classes);
    for (index, &label) in labels.iter().enumerate() {
        if label == 0 || label as usize > classes {
            return Err(Error::LabelOutOfRange {
                index,
                label,
                classes,
            });
        }
        y[(index, label as usize - 1)] = 1.0;
    }
    Ok(LabelMatrix {
        y,
        labels: labels.to_vec(),
    })
}

fn check_gamma(gamma: f64) -> Result<()> {
    if gamma > 0.0 && gamma.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!(
            "regularization must be positive and finite, got {gamma}"
        )))
    }
}

fn check_training(u: MatRef<'_, f64>, y: &LabelMatrix) -> Result<()> {
    if u.nrows() == 0 || u.ncols() == 0 {
        return Err(Error::dim("training matrix is empty"));
    }
    if u.nrows() != y.len() {
        return Err(Error::dim(format!(
            "{} training rows but {} labels",
            u.nrows(),
            y.len()
        )));
    }
    if !linalg::all_finite(u) {
        return Err(Error::NonFinite("training matrix"));
    }
    Ok(())
}

/// Linear ridge coefficients `β` (`p × q`) and the regularization they were
/// fitted with.
#[derive(Debug, Clone)]
pub struct RidgeModel {
    beta: Mat<f64>,
    gamma: f64,
}

impl RidgeModel {
    pub fn new(beta: Mat<f64>, gamma: f64) -> Result<Self> {
        check_gamma(gamma)?;
        Ok(Self { beta, gamma })
    }

    pub fn beta(&self) -> MatRef<'_, f64> {
        self.beta.as_ref()
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn features(&self) -> usize {
        self.beta.nrows()
    }

    pub fn classes(&self) -> usize {
        self.beta.ncols()
    }
}

/// Which system a ridge fit factors.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RidgeForm {
    /// `(UᵀU + γI_p)⁻¹ UᵀY`
    Primal,
    /// `Uᵀ (UUᵀ + γI_n)⁻¹ Y`
    Dual,
}

impl RidgeForm {
    /// Factors the smaller of the two systems: primal when `p ≤ n`.
    pub fn for_shape(n: usize, p: usize) -> Self {
        if p <= n {
            RidgeForm::Primal
        } else {
            RidgeForm::Dual
        }
    }
}

/// `β = (UᵀU + γI)⁻¹ UᵀY`.
pub fn ridge_fit_primal(u: MatRef<'_, f64>, y: &LabelMatrix, gamma: f64) -> Result<RidgeModel> {
    check_gamma(gamma)?;
    check_training(u, y)?;
    let gram = linalg::gram_cols(u);
    let uty = linalg::mul(u.transpose(), y.matrix())?;
    let beta = Cholesky::factor_shifted(gram, gamma)?.solve(uty.as_ref())?;
    Ok(RidgeModel { beta, gamma })
}

/// `β = Uᵀ (UUᵀ + γI)⁻¹ Y`.
pub fn ridge_fit_dual(u: MatRef<'_, f64>, y: &LabelMatrix, gamma: f64) -> Result<RidgeModel> {
    check_gamma(gamma)?;
    check_training(u, y)?;
    let gram = linalg::gram_rows(u);
    let alpha = Cholesky::factor_shifted(gram, gamma)?.solve(y.matrix())?;
    let beta = linalg::mul(u.transpose(), alpha.as_ref())?;
    Ok(RidgeModel { beta, gamma })
}

/// Fits with the form chosen by [`RidgeForm::for_shape`].
pub fn ridge_fit(u: MatRef<'_, f64>, y: &LabelMatrix, gamma: f64) -> Result<RidgeModel> {
    match RidgeForm::for_shape(u.nrows(), u.ncols()) {
        RidgeForm::Primal => ridge_fit_primal(u, y, gamma),
        RidgeForm::Dual => ridge_fit_dual(u, y, gamma),
    }
}

/// `Ũβ`.
pub fn ridge_predict(u_test: MatRef<'_, f64>, model: &RidgeModel) -> Result<Mat<f64>> {
    if u_test.ncols() != model.features() {
        return Err(Error::dim(format!(
            "test rows have {} features, model expects {}",
            u_test.ncols(),
            model.features()
        )));
    }
    linalg::mul(u_test, model.beta())
}

/// `ŨUᵀ (UUᵀ + γI)⁻¹ Y`, using only inner products of data points.
///
/// This is [`kernel_ridge_predict`] with the linear kernel.
pub fn ridge_predict_dual(
    u: MatRef<'_, f64>,
    u_test: MatRef<'_, f64>,
    y: &LabelMatrix,
    gamma: f64,
) -> Result<Mat<f64>> {
    check_training(u, y)?;
    if u_test.ncols() != u.ncols() {
        return Err(Error::dim(format!(
            "test rows have {} features, training rows {}",
            u_test.ncols(),
            u.ncols()
        )));
    }
    let k = linalg::gram_rows(u);
    let k_test = linalg::mul_transpose(u_test, u)?;
    kernel_ridge_predict(k.as_ref(), k_test.as_ref(), y, gamma)
}

/// Dual coefficients `α = (K + γI)⁻¹ Y` of a kernel ridge fit.
#[derive(Debug, Clone)]
pub struct KernelRidgePredictor {
    alpha: Mat<f64>,
    gamma: f64,
}

impl KernelRidgePredictor {
    pub fn fit(k: MatRef<'_, f64>, y: &LabelMatrix, gamma: f64) -> Result<Self> {
        check_gamma(gamma)?;
        if k.nrows() != k.ncols() {
            return Err(Error::dim(format!(
                "kernel matrix is {}x{}",
                k.nrows(),
                k.ncols()
            )));
        }
        if k.nrows() != y.len() {
            return Err(Error::dim(format!(
                "kernel matrix has {} rows but there are {} labels",
                k.nrows(),
                y.len()
            )));
        }
        if !linalg::all_finite(k) {
            return Err(Error::NonFinite("kernel matrix"));
        }
        let asym = linalg::relative_asymmetry(k);
        if asym > SYMMETRY_TOLERANCE {
            return Err(Error::NotSymmetric(asym));
        }
        Self::fit_owned(k.to_owned(), y, gamma)
    }

    /// Fits from an owned kernel matrix, reusing its storage for the factor.
    ///
    /// Only the lower triangle is read and symmetry is not checked.
    pub fn fit_owned(k: Mat<f64>, y: &LabelMatrix, gamma: f64) -> Result<Self> {
        check_gamma(gamma)?;
        let alpha = Cholesky::factor_shifted(k, gamma)?.solve(y.matrix())?;
        Ok(Self { alpha, gamma })
    }

    pub fn alpha(&self) -> MatRef<'_, f64> {
        self.alpha.as_ref()
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    /// `K̃α` for a test kernel block `K̃` (`ñ × n`).
    pub fn predict(&self, k_test: MatRef<'_, f64>) -> Result<Mat<f64>> {
        if k_test.ncols() != self.alpha.nrows() {
            return Err(Error::dim(format!(
                "test kernel has {} columns, training set has {} points",
                k_test.ncols(),
                self.alpha.nrows()
            )));
        }
        linalg::mul(k_test, self.alpha.as_ref())
    }

    /// `‖(K + γI)α − Y‖ / ‖Y‖`.
    pub fn relative_residual(&self, k: MatRef<'_, f64>, y: &LabelMatrix) -> Result<f64> {
        let mut r = linalg::mul(k, self.alpha.as_ref())?;
        for j in 0..r.ncols() {
            for i in 0..r.nrows() {
                r[(i, j)] += self.gamma * self.alpha[(i, j)] - y.matrix()[(i, j)];
            }
        }
        Ok(linalg::frobenius(r.as_ref()) / linalg::frobenius(y.matrix()))
    }
}

/// `K̃ (K + γI)⁻¹ Y`.
pub fn kernel_ridge_predict(
    k: MatRef<'_, f64>,
    k_test: MatRef<'_, f64>,
    y: &LabelMatrix,
    gamma: f64,
) -> Result<Mat<f64>> {
    KernelRidgePredictor::fit(k, y, gamma)?.predict(k_test)
}

/// 1-based column maximiser of each row; ties go to the lowest index.
pub fn argmax_labels(pred: MatRef<'_, f64>) -> Result<Vec<u32>> {
    if pred.ncols() == 0 {
        return Err(Error::dim("prediction matrix has no columns"));
    }
    (0..pred.nrows())
        .map(|i| {
            let mut best = 0;
            let mut best_val = pred[(i, 0)];
            for j in 0..pred.ncols() {
                let v = pred[(i, j)];
                if v.is_nan() {
                    return Err(Error::NonFinite("prediction row"));
                }
                if v > best_val {
                    best = j;
                    best_val = v;
                }
            }
            Ok(best as u32 + 1)
        })
        .collect()
}

/// Fraction of positions where `pred` and `truth` differ.
pub fn classification_error(pred: &[u32], truth: &[u32]) -> Result<f64> {
    if pred.len() != truth.len() {
        return Err(Error::dim(format!(
            "{} predictions for {} labels",
            pred.len(),
            truth.len()
        )));
    }
    if pred.is_empty() {
        return Err(Error::InvalidArgument(
            "cannot score an empty prediction".into(),
        ));
    }
    let wrong = pred.iter().zip(truth).filter(|(a, b)| a != b).count();
    Ok(wrong as f64 / pred.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::elliptic;
    use crate::linalg::max_rel_diff;

    fn pseudo(n: usize, p: usize, salt: usize) -> Mat<f64> {
        let mut rng = crate::rng::CounterStream::new(salt as u64, 0, 0);
        use rand::Rng;
        Mat::from_fn(n, p, |_, _| rng.random::<f64>() * 2.0 - 1.0)
    }

    fn labels(n: usize, q: u32) -> Vec<u32> {
        (0..n).map(|i| (i as u32 * 7 + 3) % q + 1).collect()
    }

    #[test]
    fn encode_examples() {
        let y = encode_labels(&[1, 2], 2).unwrap();
        assert_eq!(y.matrix(), Mat::<f64>::identity(2, 2).as_ref());
        let y = encode_labels(&[3], 3).unwrap();
        assert_eq!(
            (y.matrix()[(0, 0)], y.matrix()[(0, 1)], y.matrix()[(0, 2)]),
            (0.0, 0.0, 1.0)
        );
        let y = encode_labels(&[1, 1, 1], 2).unwrap();
        for i in 0..3 {
            assert_eq!((y.matrix()[(i, 0)], y.matrix()[(i, 1)]), (1.0, 0.0));
        }
    }

    #[test]
    fn encode_rejects_out_of_range() {
        assert!(matches!(
            encode_labels(&[1, 3], 2),
            Err(Error::LabelOutOfRange { index: 1, label: 3, .. })
        ));
        assert!(encode_labels(&[0], 2).is_err());
    }

    #[test]
    fn primal_identity_cases() {
        let u = Mat::<f64>::identity(2, 2);
        let y = encode_labels(&[1, 2], 2).unwrap();
        let m = ridge_fit_primal(u.as_ref(), &y, 1e-12).unwrap();
        assert!(max_rel_diff(m.beta(), u.as_ref()) < 1e-10);
        let m = ridge_fit_primal(u.as_ref(), &y, 1.0).unwrap();
        let half = Mat::from_fn(2, 2, |i, j| if i == j { 0.5 } else { 0.0 });
        assert!(max_rel_diff(m.beta(), half.as_ref()) < 1e-15);
    }

    #[test]
    fn fit_errors() {
        let u = Mat::<f64>::identity(2, 2);
        let y = encode_labels(&[1, 2], 2).unwrap();
        assert!(ridge_fit_primal(u.as_ref(), &y, 0.0).is_err());
        assert!(ridge_fit_primal(u.as_ref(), &y, -1.0).is_err());
        let mut bad = u.clone();
        bad[(0, 1)] = f64::INFINITY;
        assert!(matches!(
            ridge_fit_primal(bad.as_ref(), &y, 1.0),
            Err(Error::NonFinite(_))
        ));
    }

    #[test]
    fn primal_normal_equations_residual() {
        let u = pseudo(20, 5, 1);
        let y = encode_labels(&labels(20, 3), 3).unwrap();
        let gamma = 0.1;
        let m = ridge_fit_primal(u.as_ref(), &y, gamma).unwrap();
        let mut lhs = linalg::mul(linalg::gram_cols(u.as_ref()).as_ref(), m.beta()).unwrap();
        for j in 0..lhs.ncols() {
            for i in 0..lhs.nrows() {
                lhs[(i, j)] += gamma * m.beta()[(i, j)];
            }
        }
        let rhs = linalg::mul(u.transpose(), y.matrix()).unwrap();
        assert!(max_rel_diff(lhs.as_ref(), rhs.as_ref()) < 1e-10);
    }

    #[test]
    fn primal_and_dual_agree() {
        let u = pseudo(20, 5, 2);
        let t = pseudo(7, 5, 3);
        let y = encode_labels(&labels(20, 4), 4).unwrap();
        let primal = ridge_predict(t.as_ref(), &ridge_fit_primal(u.as_ref(), &y, 0.1).unwrap()).unwrap();
        let dual = ridge_predict_dual(u.as_ref(), t.as_ref(), &y, 0.1).unwrap();
        assert!(max_rel_diff(primal.as_ref(), dual.as_ref()) < 1e-8);
        let dual_beta = ridge_fit_dual(u.as_ref(), &y, 0.1).unwrap();
        let via_beta = ridge_predict(t.as_ref(), &dual_beta).unwrap();
        assert!(max_rel_diff(via_beta.as_ref(), primal.as_ref()) < 1e-8);
    }

    #[test]
    fn predict_edge_cases() {
        let u = pseudo(6, 3, 4);
        let y = encode_labels(&labels(6, 2), 2).unwrap();
        let m = ridge_fit(u.as_ref(), &y, 0.5).unwrap();
        let zero = ridge_predict(Mat::<f64>::zeros(3, 3).as_ref(), &m).unwrap();
        assert!(linalg::frobenius(zero.as_ref()) == 0.0);
        assert!(ridge_predict(Mat::<f64>::zeros(3, 4).as_ref(), &m).is_err());

        let single = Mat::from_fn(1, 3, |_, j| j as f64 + 1.0);
        let y1 = encode_labels(&[2], 2).unwrap();
        let m = ridge_fit(single.as_ref(), &y1, 1e-12).unwrap();
        let pred = ridge_predict(single.as_ref(), &m).unwrap();
        assert!((pred[(0, 0)]).abs() < 1e-9 && (pred[(0, 1)] - 1.0).abs() < 1e-9);
    }

    #[test]
    fn kernel_ridge_trivial_cases() {
        let y = encode_labels(&[1, 2, 1], 2).unwrap();
        let k = Mat::<f64>::identity(3, 3);
        let out = kernel_ridge_predict(k.as_ref(), Mat::<f64>::zeros(2, 3).as_ref(), &y, 1.0).unwrap();
        assert_eq!(linalg::frobenius(out.as_ref()), 0.0);
        let mut asym = Mat::<f64>::identity(3, 3);
        asym[(0, 1)] = 0.1;
        assert!(matches!(
            kernel_ridge_predict(asym.as_ref(), k.as_ref(), &y, 1.0),
            Err(Error::NotSymmetric(_))
        ));
    }

    #[test]
    fn kernel_ridge_matches_explicit_inverse_on_elliptic_kernel() {
        let u = pseudo(5, 4, 5);
        let t = pseudo(3, 4, 6);
        let y = encode_labels(&[1, 2, 3, 1, 2], 3).unwrap();
        let k = elliptic::elliptic_kernel_matrix(u.as_ref(), u.as_ref()).unwrap();
        let kt = elliptic::elliptic_kernel_matrix(t.as_ref(), u.as_ref()).unwrap();
        let gamma = 0.3;
        let got = kernel_ridge_predict(k.as_ref(), kt.as_ref(), &y, gamma).unwrap();

        // Gauss-Jordan inverse of K + γI, independent of the Cholesky path.
        let n = 5;
        let mut a = k.clone();
        for i in 0..n {
            a[(i, i)] += gamma;
        }
        let mut inv = Mat::<f64>::identity(n, n);
        for col in 0..n {
            let pivot = (col..n)
                .max_by(|&x, &y| a[(x, col)].abs().total_cmp(&a[(y, col)].abs()))
                .unwrap();
            for j in 0..n {
                let tmp = a[(col, j)];
                a[(col, j)] = a[(pivot, j)];
                a[(pivot, j)] = tmp;
                let tmp = inv[(col, j)];
                inv[(col, j)] = inv[(pivot, j)];
                inv[(pivot, j)] = tmp;
            }
            let d = a[(col, col)];
            for j in 0..n {
                a[(col, j)] /= d;
                inv[(col, j)] /= d;
            }
            for r in 0..n {
                if r != col {
                    let f = a[(r, col)];
                    for j in 0..n {
                        a[(r, j)] -= f * a[(col, j)];
                        inv[(r, j)] -= f * inv[(col, j)];
                    }
                }
            }
        }
        let want = linalg::mul(
            linalg::mul(kt.as_ref(), inv.as_ref()).unwrap().as_ref(),
            y.matrix(),
        )
        .unwrap();
        assert!(max_rel_diff(got.as_ref(), want.as_ref()) < 1e-8);
    }

    #[test]
    fn predictor_residual_is_small() {
        let u = pseudo(30, 6, 7);
        let y = encode_labels(&labels(30, 3), 3).unwrap();
        let k = elliptic::elliptic_kernel_matrix(u.as_ref(), u.as_ref()).unwrap();
        let fit = KernelRidgePredictor::fit(k.as_ref(), &y, 0.05).unwrap();
        assert!(fit.relative_residual(k.as_ref(), &y).unwrap() <= 1e-8);
    }

    #[test]
    fn argmax_examples() {
        let m = linalg::from_rows(&[vec![0.1, 0.9]]).unwrap();
        assert_eq!(argmax_labels(m.as_ref()).unwrap(), vec![2]);
        let m = linalg::from_rows(&[vec![0.5, 0.5]]).unwrap();
        assert_eq!(argmax_labels(m.as_ref()).unwrap(), vec![1]);
        let m = linalg::from_rows(&[vec![1.0, 0.0, 0.0], vec![0.0, 0.0, 1.0]]).unwrap();
        assert_eq!(argmax_labels(m.as_ref()).unwrap(), vec![1, 3]);
        let m = linalg::from_rows(&[vec![0.0, f64::NAN]]).unwrap();
        assert!(argmax_labels(m.as_ref()).is_err());
    }

    #[test]
    fn error_examples() {
        assert_eq!(classification_error(&[1, 2, 3], &[1, 2, 3]).unwrap(), 0.0);
        assert_eq!(classification_error(&[1, 2], &[2, 1]).unwrap(), 1.0);
        assert_eq!(classification_error(&[1, 2, 3, 4], &[1, 2, 3, 1]).unwrap(), 0.25);
        assert!(classification_error(&[1], &[1, 2]).is_err());
        assert!(classification_error(&[], &[]).is_err());
    }

    #[test]
    fn beta_norm_shrinks_with_gamma() {
        let u = pseudo(25, 8, 8);
        let y = encode_labels(&labels(25, 3), 3).unwrap();
        let mut last = f64::INFINITY;
        for e in -4..=3 {
            let gamma = 10f64.powi(e);
            let norm = linalg::frobenius(ridge_fit(u.as_ref(), &y, gamma).unwrap().beta());
            assert!(norm <= last * (1.0 + 1e-12));
            last = norm;
        }
    }

    #[test]
    fn interpolation_when_underdetermined() {
        let u = pseudo(6, 10, 9);
        let y = encode_labels(&labels(6, 3), 3).unwrap();
        let m = ridge_fit(u.as_ref(), &y, 1e-12).unwrap();
        let pred = ridge_predict(u.as_ref(), &m).unwrap();
        assert!(max_rel_diff(pred.as_ref(), y.matrix()) < 1e-6);
    }
}
