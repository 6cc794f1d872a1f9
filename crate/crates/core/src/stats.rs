//! Small statistical helpers: Kolmogorov–Smirnov distances, sample moments and
//! linear least squares with error propagation.

use crate::error::{Error, Result};
use nalgebra::{DMatrix, DVector};

/// Sorts a copy of `xs` (NaN-free input assumed).
pub fn sorted(xs: &[f64]) -> Vec<f64> {
    let mut v = xs.to_vec();
    v.sort_unstable_by(|a, b| a.total_cmp(b));
    v
}

/// One-sample KS distance between sorted data and a continuous CDF.
pub fn ks_one_sample(sorted: &[f64], cdf: impl Fn(f64) -> f64) -> f64 {
    let n = sorted.len() as f64;
    sorted
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = cdf(x);
            (f - i as f64 / n).abs().max(((i + 1) as f64 / n - f).abs())
        })
        .fold(0.0, f64::max)
}

/// Two-sample KS distance between sorted samples.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> f64 {
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j, mut d) = (0usize, 0usize, 0.0f64);
    while i < a.len() && j < b.len() {
        let x = a[i].min(b[j]);
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    d
}

/// Sample mean and standard error of the mean.
pub fn mean_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, f64::NAN);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Sample standard deviation (n - 1 denominator).
pub fn std_dev(xs: &[f64]) -> f64 {
    mean_se(xs).1 * (xs.len() as f64).sqrt()
}

/// Empirical quantile by linear interpolation of sorted data.
pub fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let i = pos.floor() as usize;
    let f = pos - i as f64;
    if i + 1 < sorted.len() {
        sorted[i] * (1.0 - f) + sorted[i + 1] * f
    } else {
        sorted[i]
    }
}

/// Result of an ordinary least-squares fit.
#[derive(Clone, Debug)]
pub struct LeastSquares {
    pub coefficients: Vec<f64>,
    /// Standard errors of the coefficients. Propagated from per-point errors
    /// when supplied, otherwise estimated from the residuals (NaN without
    /// spare degrees of freedom).
    pub standard_errors: Vec<f64>,
    pub residual_rms: f64,
    /// 2-norm condition number of the design matrix.
    pub condition: f64,
}

/// Ordinary least squares `y ≈ X β` where `rows` are the rows of `X`.
pub fn least_squares(rows: &[Vec<f64>], y: &[f64], point_se: Option<&[f64]>) -> Result<LeastSquares> {
    let n = rows.len();
    let p = rows.first().map_or(0, Vec::len);
    if n < p || p == 0 {
        return Err(Error::DegenerateFit(format!("{n} points for {p} parameters")));
    }
    let x = DMatrix::from_fn(n, p, |i, j| rows[i][j]);
    let yv = DVector::from_column_slice(y);
    let svd = x.clone().svd(true, true);
    let smax = svd.singular_values.max();
    let smin = svd.singular_values.min();
    let condition = if smin > 0.0 { smax / smin } else { f64::INFINITY };
    if !(smin > smax * 1e-14) {
        return Err(Error::DegenerateFit("rank-deficient design".into()));
    }
    let beta = svd
        .solve(&yv, 0.0)
        .map_err(|e| Error::DegenerateFit(e.to_string()))?;
    let resid = &yv - &x * &beta;
    let residual_rms = (resid.norm_squared() / n as f64).sqrt();

    let xtx_inv = (x.transpose() * &x)
        .try_inverse()
        .ok_or_else(|| Error::DegenerateFit("singular normal matrix".into()))?;
    let cov = match point_se {
        Some(se) => {
            let d = DMatrix::from_diagonal(&DVector::from_iterator(n, se.iter().map(|s| s * s)));
            &xtx_inv * x.transpose() * d * &x * &xtx_inv
        }
        None if n > p => &xtx_inv * (resid.norm_squared() / (n - p) as f64),
        None => DMatrix::from_element(p, p, f64::NAN),
    };
    Ok(LeastSquares {
        coefficients: beta.iter().copied().collect(),
        standard_errors: (0..p).map(|i| cov[(i, i)].sqrt()).collect(),
        residual_rms,
        condition,
    })
}
