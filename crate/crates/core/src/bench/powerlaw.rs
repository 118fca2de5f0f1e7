//! Least-squares power laws `err(N) ≈ err_inf + c·N^a` in log-log space.

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Exponent of the fixed-exponent variant.
pub const FIXED_EXPONENT: f64 = -2.0 / 3.0;

/// Fewest points accepted by [`fit_power_law`].
pub const MIN_POINTS: usize = 4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerLawFit {
    pub err_inf: f64,
    /// Amplitude `c` of the free fit.
    pub amplitude: f64,
    pub exponent: f64,
    /// RMS residual of the free fit in `ln(err − err_inf)`.
    pub residual: f64,
    /// Amplitude with the exponent held at [`FIXED_EXPONENT`].
    pub fixed_amplitude: f64,
    pub fixed_residual: f64,
    /// Feature counts that entered the fit.
    pub used: Vec<usize>,
    /// Feature counts dropped because `err ≤ err_inf`.
    pub excluded: Vec<usize>,
}

/// Fits `(N, mean error)` points. At least [`MIN_POINTS`] points are
/// required, and at least two must remain above the asymptote.
pub fn fit_power_law(points: &[(usize, f64)], err_inf: f64) -> Result<PowerLawFit> {
    if points.len() < MIN_POINTS {
        return Err(Error::InvalidArgument(format!(
            "a power-law fit needs at least {MIN_POINTS} points, got {}",
            points.len()
        )));
    }
    if !err_inf.is_finite() || points.iter().any(|&(n, e)| n == 0 || !e.is_finite()) {
        return Err(Error::InvalidArgument(
            "power-law points need positive N and finite errors".into(),
        ));
    }
    let (good, bad): (Vec<_>, Vec<_>) = points.iter().partition(|&&(_, e)| e - err_inf > 0.0);
    if good.len() < 2 {
        return Err(Error::InvalidArgument(format!(
            "only {} points lie above the asymptote {err_inf}",
            good.len()
        )));
    }
    let xs: Vec<f64> = good.iter().map(|&&(n, _)| (n as f64).ln()).collect();
    let ys: Vec<f64> = good.iter().map(|&&(_, e)| (e - err_inf).ln()).collect();
    let m = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / m;
    let my = ys.iter().sum::<f64>() / m;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::InvalidArgument("all points share one N".into()));
    }
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let exponent = sxy / sxx;
    let intercept = my - exponent * mx;
    let rms = |a: f64, b: f64| {
        (xs.iter()
            .zip(&ys)
            .map(|(x, y)| (y - a - b * x).powi(2))
            .sum::<f64>()
            / m)
            .sqrt()
    };
    let fixed_intercept = ys
        .iter()
        .zip(&xs)
        .map(|(y, x)| y - FIXED_EXPONENT * x)
        .sum::<f64>()
        / m;
    Ok(PowerLawFit {
        err_inf,
        amplitude: intercept.exp(),
        exponent,
        residual: rms(intercept, exponent),
        fixed_amplitude: fixed_intercept.exp(),
        fixed_residual: rms(fixed_intercept, FIXED_EXPONENT),
        used: good.iter().map(|&&(n, _)| n).collect(),
        excluded: bad.iter().map(|&&(n, _)| n).collect(),
    })
}
