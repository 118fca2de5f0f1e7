//! Reference implementations used only by tests.
#![allow(dead_code)]

use std::path::PathBuf;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;

// Gauss-Kronrod 7/15 nodes and weights on [-1, 1].
const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

fn gk15(f: &dyn Fn(f64) -> f64, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut kronrod = WGK[7] * fc;
    let mut gauss = WG[3] * fc;
    for i in 0..7 {
        let x = h * XGK[i];
        let s = f(c - x) + f(c + x);
        kronrod += WGK[i] * s;
        if i % 2 == 1 {
            gauss += WG[i / 2] * s;
        }
    }
    (kronrod * h, ((kronrod - gauss) * h).abs())
}

/// Adaptive Gauss-Kronrod quadrature to relative tolerance `rtol`.
pub fn integrate(f: &dyn Fn(f64) -> f64, a: f64, b: f64, rtol: f64) -> f64 {
    fn recurse(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64, depth: u32) -> f64 {
        let (val, err) = gk15(f, a, b);
        if err <= tol || err <= 50.0 * f64::EPSILON * val.abs() || depth == 0 {
            return val;
        }
        let m = 0.5 * (a + b);
        recurse(f, a, m, 0.5 * tol, depth - 1) + recurse(f, m, b, 0.5 * tol, depth - 1)
    }
    let (first, _) = gk15(f, a, b);
    recurse(f, a, b, rtol * first.abs(), 40)
}

pub fn quad_k(m: f64) -> f64 {
    integrate(
        &|t: f64| 1.0 / (1.0 - m * t.sin().powi(2)).sqrt(),
        0.0,
        std::f64::consts::FRAC_PI_2,
        1e-13,
    )
}

pub fn quad_e(m: f64) -> f64 {
    integrate(
        &|t: f64| (1.0 - m * t.sin().powi(2)).sqrt(),
        0.0,
        std::f64::consts::FRAC_PI_2,
        1e-13,
    )
}

pub fn rng(seed: u64) -> ChaCha20Rng {
    ChaCha20Rng::seed_from_u64(seed)
}

pub fn gaussian_vec(rng: &mut ChaCha20Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.sample(StandardNormal)).collect()
}

/// Mean and standard error of `|⟨g,u⟩|·|⟨g,v⟩|` over `draws` complex
/// Gaussian `g` with unit-variance real and imaginary parts.
pub fn mc_kernel(u: &[f64], v: &[f64], draws: usize, seed: u64) -> (f64, f64) {
    let mut r = rng(seed);
    let p = u.len();
    let mut sum = 0.0;
    let mut sq = 0.0;
    let mut re = vec![0.0; p];
    let mut im = vec![0.0; p];
    for _ in 0..draws {
        for k in 0..p {
            re[k] = r.sample(StandardNormal);
            im[k] = r.sample(StandardNormal);
        }
        let (mut ur, mut ui, mut vr, mut vi) = (0.0, 0.0, 0.0, 0.0);
        for k in 0..p {
            ur += re[k] * u[k];
            ui += im[k] * u[k];
            vr += re[k] * v[k];
            vi += im[k] * v[k];
        }
        let s = ur.hypot(ui) * vr.hypot(vi);
        sum += s;
        sq += s * s;
    }
    let n = draws as f64;
    let mean = sum / n;
    let var = (sq / n - mean * mean) * n / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Elliptic kernel by quadrature. With `z₂ = c z₁ + s w` and rotation
/// invariance, `E|z₁||z₂| = E r·|c r + s ρ e^{iα}|` over independent
/// Rayleigh `r, ρ` (density `r e^{−r²/2}`) and uniform `α`.
pub fn quad_kernel(u: &[f64], v: &[f64]) -> f64 {
    let nu = u.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nv = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if nu == 0.0 || nv == 0.0 {
        return 0.0;
    }
    let c = (u.iter().zip(v).map(|(a, b)| a * b).sum::<f64>() / (nu * nv)).clamp(-1.0, 1.0);
    let s = (1.0 - c * c).max(0.0).sqrt();
    let pi = std::f64::consts::PI;
    let rayleigh = |r: f64| r * (-0.5 * r * r).exp();
    let value = integrate(
        &|r: f64| {
            let inner = integrate(
                &|rho: f64| {
                    // α ∈ [0, π] by symmetry.
                    let ang = integrate(
                        &|a: f64| {
                            (c * c * r * r + s * s * rho * rho + 2.0 * c * s * r * rho * a.cos())
                                .max(0.0)
                                .sqrt()
                        },
                        0.0,
                        pi,
                        1e-11,
                    ) / pi;
                    rayleigh(rho) * ang
                },
                0.0,
                12.0,
                1e-10,
            );
            rayleigh(r) * r * inner
        },
        0.0,
        12.0,
        1e-10,
    );
    nu * nv * value
}

/// Ordinary least squares slope and intercept of `y` on `x`.
pub fn ols(x: &[f64], y: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let slope = sxy / sxx;
    (slope, my - slope * mx)
}

/// Directory holding the four MNIST IDX files, if present.
pub fn mnist_dir() -> Option<PathBuf> {
    let dir = std::env::var_os("SPECKLE_RF_DATA")
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from("/root/mnist"));
    dir.join("train-images-idx3-ubyte").exists().then_some(dir)
}

/// Dense Gaussian-elimination solve of `a x = b` with partial pivoting.
pub fn gauss_solve(mut a: Vec<Vec<f64>>, mut b: Vec<Vec<f64>>) -> Vec<Vec<f64>> {
    let n = a.len();
    for col in 0..n {
        let piv = (col..n)
            .max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))
            .unwrap();
        a.swap(col, piv);
        b.swap(col, piv);
        for row in col + 1..n {
            let f = a[row][col] / a[col][col];
            if f == 0.0 {
                continue;
            }
            for k in col..n {
                a[row][k] -= f * a[col][k];
            }
            for k in 0..b[row].len() {
                b[row][k] -= f * b[col][k];
            }
        }
    }
    let m = b[0].len();
    let mut x = vec![vec![0.0; m]; n];
    for row in (0..n).rev() {
        for k in 0..m {
            let mut s = b[row][k];
            for j in row + 1..n {
                s -= a[row][j] * x[j][k];
            }
            x[row][k] = s / a[row][row];
        }
    }
    x
}
