//! Small statistics helpers: ordinary least squares, sample moments, and a
//! Jarque-Bera normality check.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum FitError {
    #[error("need at least two points, got {0}")]
    TooFewPoints(usize),
    #[error("x values are all identical; slope undefined")]
    DegenerateXs,
    #[error("x and y lengths differ ({0} vs {1})")]
    LengthMismatch(usize, usize),
}

/// Result of an ordinary least-squares straight-line fit.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
    /// Detrended residual standard deviation (n - 2 denominator).
    pub residual_std: f64,
}

/// Ordinary least squares of `ys` on `xs`. Exact on collinear input.
pub fn fit_linear(xs: &[f64], ys: &[f64]) -> Result<LinearFit, FitError> {
    if xs.len() != ys.len() {
        return Err(FitError::LengthMismatch(xs.len(), ys.len()));
    }
    let n = xs.len();
    if n < 2 {
        return Err(FitError::TooFewPoints(n));
    }
    let nf = n as f64;
    let x_mean = xs.iter().sum::<f64>() / nf;
    let y_mean = ys.iter().sum::<f64>() / nf;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    for (&x, &y) in xs.iter().zip(ys) {
        let dx = x - x_mean;
        sxx += dx * dx;
        sxy += dx * (y - y_mean);
    }
    if sxx == 0.0 {
        return Err(FitError::DegenerateXs);
    }
    let slope = sxy / sxx;
    let intercept = y_mean - slope * x_mean;
    let ss_res: f64 = xs
        .iter()
        .zip(ys)
        .map(|(&x, &y)| (y - intercept - slope * x).powi(2))
        .sum();
    let residual_std = if n > 2 {
        (ss_res / (nf - 2.0)).sqrt()
    } else {
        0.0
    };
    Ok(LinearFit {
        slope,
        intercept,
        residual_std,
    })
}

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Sample standard deviation (n - 1 denominator).
pub fn sample_std(xs: &[f64]) -> f64 {
    let n = xs.len();
    assert!(n >= 2, "sample std needs at least two values");
    let m = mean(xs);
    (xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
}

/// 95th percentile of the chi-squared distribution with 2 degrees of
/// freedom; the Jarque-Bera acceptance threshold at 5% significance.
pub const JARQUE_BERA_CRIT_5PCT: f64 = 5.991464547107979;

/// Jarque-Bera statistic `n * (S^2/6 + (K - 3)^2/24)`; asymptotically
/// chi-squared with 2 degrees of freedom under normality.
pub fn jarque_bera(xs: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let m = mean(xs);
    let m2 = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / n;
    let m3 = xs.iter().map(|x| (x - m).powi(3)).sum::<f64>() / n;
    let m4 = xs.iter().map(|x| (x - m).powi(4)).sum::<f64>() / n;
    let skew = m3 / m2.powf(1.5);
    let kurt = m4 / (m2 * m2);
    n * (skew * skew / 6.0 + (kurt - 3.0).powi(2) / 24.0)
}
