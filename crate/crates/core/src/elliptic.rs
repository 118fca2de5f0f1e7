//! Complete elliptic integrals and the elliptic kernel.
//!
//! Integrals use the *parameter* convention:
//!
//! ```text
//! K(m) = ∫₀^{π/2} dt / √(1 − m sin²t)      E(m) = ∫₀^{π/2} √(1 − m sin²t) dt
//! ```
//!
//! for `m ≤ 1`. Both are evaluated with the arithmetic-geometric mean on
//! `[0, 1)`; negative parameters are first mapped into `(0, 1)` with the
//! imaginary-modulus transformation `m ↦ m / (m − 1)`.
//!
//! The kernel is the large-`N` limit of `⟨|Wu|, |Wv|⟩ / N` for a complex
//! Gaussian `W` whose real and imaginary parts each have unit variance:
//!
//! ```text
//! k(u, v) = ‖u‖‖v‖/2 · { −sin²θ K(cos²θ) + 2E(cos²θ)
//!                         + |sinθ| (2E(−cos²θ/sin²θ) − K(−cos²θ/sin²θ)) }
//! ```
//!
//! so that `k(u, u) = 2‖u‖²` and `k(u, v) = π/2` for orthogonal unit vectors.

use std::f64::consts::FRAC_PI_2;

use faer::{Mat, MatRef};

use crate::linalg;
use crate::{Error, Result};

/// Largest parameter accepted by [`complete_k`].
pub const K_PARAMETER_LIMIT: f64 = 1.0 - 1e-15;

/// Below this `|sin θ|` the kernel switches to its small-angle expansion.
pub const SMALL_ANGLE_SINE: f64 = 1e-6;

const AGM_MAX_ITER: usize = 64;

/// Parameter `m` of a complete elliptic integral; finite and at most 1.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct EllipticParam(f64);

impl EllipticParam {
    pub fn new(m: f64) -> Result<Self> {
        if !m.is_finite() || m > 1.0 {
            return Err(Error::Domain(m));
        }
        Ok(Self(m))
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

impl TryFrom<f64> for EllipticParam {
    type Error = Error;

    fn try_from(m: f64) -> Result<Self> {
        Self::new(m)
    }
}

/// `(K, E)` for `m ∈ [0, 1)` given `m` and its complement `m1 = 1 − m`.
fn agm_unit(m: f64, m1: f64) -> (f64, f64) {
    let mut a = 1.0f64;
    let mut b = m1.sqrt();
    let mut weight = 0.5;
    let mut sum = 0.5 * m;
    for _ in 0..AGM_MAX_ITER {
        if (a - b).abs() <= f64::EPSILON * a {
            break;
        }
        let c = 0.5 * (a - b);
        let next_a = 0.5 * (a + b);
        b = (a * b).sqrt();
        a = next_a;
        weight *= 2.0;
        sum += weight * c * c;
    }
    let k = FRAC_PI_2 / a;
    (k, k * (1.0 - sum))
}

/// `(K(m), E(m))` for `m < 1`.
fn ke(m: f64) -> (f64, f64) {
    if m >= 0.0 {
        agm_unit(m, 1.0 - m)
    } else {
        // K(m) = K(m')/√(1−m), E(m) = √(1−m)·E(m') with m' = −m/(1−m).
        let m1 = 1.0 - m;
        let root = m1.sqrt();
        let (k, e) = agm_unit(-m / m1, 1.0 / m1);
        (k / root, e * root)
    }
}

/// Complete elliptic integral of the first kind.
///
/// Fails with [`Error::Domain`] for `m > 1 − 1e−15`, where `K` diverges.
pub fn complete_k(m: EllipticParam) -> Result<f64> {
    if m.0 > K_PARAMETER_LIMIT {
        return Err(Error::Domain(m.0));
    }
    Ok(ke(m.0).0)
}

/// Complete elliptic integral of the second kind; `E(1) = 1`.
pub fn complete_e(m: EllipticParam) -> f64 {
    if m.0 == 1.0 {
        return 1.0;
    }
    ke(m.0).1
}

/// Both integrals from one AGM run.
pub fn complete_ke(m: EllipticParam) -> Result<(f64, f64)> {
    if m.0 > K_PARAMETER_LIMIT {
        return Err(Error::Domain(m.0));
    }
    Ok(ke(m.0))
}

/// Two vectors with their norms and the cosine of the angle between them.
#[derive(Debug, Clone, Copy)]
pub struct KernelPair<'a> {
    u: &'a [f64],
    v: &'a [f64],
    norm_u: f64,
    norm_v: f64,
    cos_theta: f64,
}

fn dot(u: &[f64], v: &[f64]) -> f64 {
    u.iter().zip(v).map(|(a, b)| a * b).sum()
}

/// `dot / (norm_u · norm_v)` clamped into `[−1, 1]`; zero when a norm is zero.
fn cosine(dot: f64, norm_u: f64, norm_v: f64) -> f64 {
    if norm_u == 0.0 || norm_v == 0.0 {
        return 0.0;
    }
    (dot / (norm_u * norm_v)).clamp(-1.0, 1.0)
}

impl<'a> KernelPair<'a> {
    pub fn new(u: &'a [f64], v: &'a [f64]) -> Result<Self> {
        if u.len() != v.len() {
            return Err(Error::dim(format!(
                "kernel arguments have lengths {} and {}",
                u.len(),
                v.len()
            )));
        }
        if u.iter().chain(v).any(|x| x.is_nan()) {
            return Err(Error::NonFinite("kernel argument"));
        }
        let norm_u = dot(u, u).sqrt();
        let norm_v = dot(v, v).sqrt();
        if !norm_u.is_finite() || !norm_v.is_finite() {
            return Err(Error::NonFinite("kernel argument norm"));
        }
        Ok(Self {
            u,
            v,
            norm_u,
            norm_v,
            cos_theta: cosine(dot(u, v), norm_u, norm_v),
        })
    }

    pub fn u(&self) -> &'a [f64] {
        self.u
    }

    pub fn v(&self) -> &'a [f64] {
        self.v
    }

    pub fn norms(&self) -> (f64, f64) {
        (self.norm_u, self.norm_v)
    }

    pub fn cos_theta(&self) -> f64 {
        self.cos_theta
    }
}

/// The braced factor evaluated term by term at the two elliptic parameters.
///
/// Valid for `|sin θ| ≥ SMALL_ANGLE_SINE`.
pub fn bracket_direct(cos_theta: f64) -> f64 {
    let c2 = cos_theta * cos_theta;
    let s2 = (1.0 - cos_theta) * (1.0 + cos_theta);
    let s = s2.sqrt();
    let (k_pos, e_pos) = ke(c2);
    let (k_neg, e_neg) = ke(-c2 / s2);
    -s2 * k_pos + 2.0 * e_pos + s * (2.0 * e_neg - k_neg)
}

/// Small-angle expansion of the braced factor: `4 − sin²θ + O(sin⁴θ log sinθ)`.
pub fn bracket_small_angle(cos_theta: f64) -> f64 {
    let s2 = (1.0 - cos_theta) * (1.0 + cos_theta);
    4.0 - s2
}

/// Kernel value from the norms and the angle cosine.
pub fn kernel_from_geometry(norm_u: f64, norm_v: f64, cos_theta: f64) -> f64 {
    if norm_u == 0.0 || norm_v == 0.0 {
        return 0.0;
    }
    let s2 = (1.0 - cos_theta) * (1.0 + cos_theta);
    let bracket = if s2.sqrt() < SMALL_ANGLE_SINE {
        bracket_small_angle(cos_theta)
    } else {
        bracket_direct(cos_theta)
    };
    0.5 * (norm_u * norm_v) * bracket
}

/// Elliptic kernel of one pair. Zero when either vector is zero.
pub fn elliptic_kernel(pair: &KernelPair<'_>) -> f64 {
    kernel_from_geometry(pair.norm_u, pair.norm_v, pair.cos_theta)
}

/// Convenience wrapper building the [`KernelPair`].
pub fn kernel(u: &[f64], v: &[f64]) -> Result<f64> {
    Ok(elliptic_kernel(&KernelPair::new(u, v)?))
}

fn row_norms(a: MatRef<'_, f64>) -> Vec<f64> {
    (0..a.nrows())
        .map(|i| {
            (0..a.ncols())
                .map(|j| a[(i, j)] * a[(i, j)])
                .sum::<f64>()
                .sqrt()
        })
        .collect()
}

fn check_finite(a: MatRef<'_, f64>, what: &'static str) -> Result<()> {
    if linalg::all_finite(a) {
        Ok(())
    } else {
        Err(Error::NonFinite(what))
    }
}

/// Kernel matrix `K_ij = k(a_i, b_j)` between the rows of `a` and `b`.
///
/// When `a` and `b` are views of the same storage the result is computed
/// once per unordered pair and is exactly symmetric.
pub fn elliptic_kernel_matrix(a: MatRef<'_, f64>, b: MatRef<'_, f64>) -> Result<Mat<f64>> {
    if a.ncols() != b.ncols() {
        return Err(Error::dim(format!(
            "kernel matrix operands have {} and {} columns",
            a.ncols(),
            b.ncols()
        )));
    }
    let same = a.nrows() == b.nrows()
        && a.row_stride() == b.row_stride()
        && a.col_stride() == b.col_stride()
        && std::ptr::eq(a.as_ptr(), b.as_ptr());
    if same {
        return elliptic_gram(a);
    }
    check_finite(a, "kernel matrix operand")?;
    check_finite(b, "kernel matrix operand")?;
    let norms_a = row_norms(a);
    let norms_b = row_norms(b);
    let dots = linalg::mul_transpose(a, b)?;
    let mut out = Mat::zeros(a.nrows(), b.nrows());
    linalg::par_fill_columns(&mut out, |j, col| {
        for (i, slot) in col.iter_mut().enumerate() {
            let c = cosine(dots[(i, j)], norms_a[i], norms_b[j]);
            *slot = kernel_from_geometry(norms_a[i], norms_b[j], c);
        }
    });
    Ok(out)
}

/// Symmetric kernel matrix of the rows of `a`.
pub fn elliptic_gram(a: MatRef<'_, f64>) -> Result<Mat<f64>> {
    check_finite(a, "kernel matrix operand")?;
    let norms = row_norms(a);
    let dots = linalg::gram_rows(a);
    let n = a.nrows();
    let mut out = Mat::zeros(n, n);
    // Column j holds rows i ≥ j; the strict upper half is mirrored afterwards.
    linalg::par_fill_columns(&mut out, |j, col| {
        for i in j..n {
            let c = cosine(dots[(i, j)], norms[i], norms[j]);
            col[i] = kernel_from_geometry(norms[i], norms[j], c);
        }
    });
    linalg::mirror_lower(&mut out);
    Ok(out)
}
