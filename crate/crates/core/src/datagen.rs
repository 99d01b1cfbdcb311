//! Measurements from hidden signals: `x = c W^T h + b_d + e`.

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dictionary::Dictionary;
use crate::error::{dim, invalid, Result};
use crate::rng;
use crate::signals::SignalBatch;

/// Isotropic Gaussian noise with the same mean on every coordinate.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    pub mean: f64,
    pub std: f64,
}

impl NoiseSpec {
    pub fn new(mean: f64, std: f64) -> Result<Self> {
        if !(std >= 0.0) || !mean.is_finite() || !std.is_finite() {
            return Err(invalid(format!("noise needs finite mean and std >= 0, got ({mean}, {std})")));
        }
        Ok(NoiseSpec { mean, std })
    }
}

/// `N x n` measurements and the settings that produced them.
#[derive(Clone, Debug)]
pub struct DataBatch {
    pub x: Array2<f64>,
    pub source_seed: u64,
    pub scale_c: f64,
    pub b_d: Array1<f64>,
    pub noise: Option<NoiseSpec>,
}

impl DataBatch {
    /// Wraps observed data with no known generating settings.
    pub fn from_matrix(x: Array2<f64>) -> Self {
        let n = x.ncols();
        DataBatch { x, source_seed: 0, scale_c: 1.0, b_d: Array1::zeros(n), noise: None }
    }

    pub fn n_samples(&self) -> usize {
        self.x.nrows()
    }

    pub fn dim(&self) -> usize {
        self.x.ncols()
    }
}

/// Draws an `N x n` noise matrix. Row `i` uses stream `i` of `seed`.
pub fn sample_noise(n_samples: usize, n: usize, noise: NoiseSpec, seed: u64) -> Array2<f64> {
    let mut e = Array2::<f64>::zeros((n_samples, n));
    e.axis_iter_mut(Axis(0)).into_par_iter().enumerate().for_each(|(i, mut row)| {
        let mut rng = rng::stream(seed, i as u64);
        for v in row.iter_mut() {
            let z: f64 = rng.sample(StandardNormal);
            *v = noise.mean + noise.std * z;
        }
    });
    e
}

/// Applies the linear generating process to every signal in `h`.
///
/// Each row is `scale_c * W^T h + e + b_d`; the noise matrix is
/// `sample_noise(N, n, noise, seed)` so callers can reproduce it.
pub fn generate_data(
    w: &Dictionary,
    h: &SignalBatch,
    b_d: &Array1<f64>,
    scale_c: f64,
    noise: Option<NoiseSpec>,
    seed: u64,
) -> Result<DataBatch> {
    if h.dim() != w.m() {
        return Err(dim(format!("signals have {} dims but dictionary has {} rows", h.dim(), w.m())));
    }
    if b_d.len() != w.n() {
        return Err(dim(format!("b_d has length {}, expected {}", b_d.len(), w.n())));
    }
    let mut x = h.values.dot(&w.weights);
    x *= scale_c;
    if let Some(spec) = noise {
        x += &sample_noise(h.n_samples(), w.n(), spec, seed);
    }
    x += b_d;
    Ok(DataBatch { x, source_seed: seed, scale_c, b_d: b_d.clone(), noise })
}

/// Column-wise mean, summed in row order.
pub fn data_mean(x: &DataBatch) -> Result<Array1<f64>> {
    column_mean(x.x.view())
}

pub(crate) fn column_mean(x: ArrayView2<'_, f64>) -> Result<Array1<f64>> {
    let n_rows = x.nrows();
    if n_rows == 0 {
        return Err(invalid("mean of an empty batch"));
    }
    let mut acc = Array1::<f64>::zeros(x.ncols());
    for row in x.axis_iter(Axis(0)) {
        acc += &row;
    }
    acc /= n_rows as f64;
    Ok(acc)
}

/// Unbiased (`1 / (N - 1)`) sample covariance of the rows of `x`.
pub fn covariance(x: &DataBatch) -> Result<Array2<f64>> {
    let n_rows = x.n_samples();
    if n_rows < 2 {
        return Err(invalid("covariance needs at least two samples"));
    }
    let mean = data_mean(x)?;
    let centered = &x.x - &mean;
    let mut cov = centered.t().dot(&centered);
    cov /= (n_rows - 1) as f64;
    Ok(cov)
}

/// `min_alpha ||cov - alpha I||_F`, attained at `alpha = trace(cov) / n`.
pub fn sphericity_gap_of(cov: &Array2<f64>) -> Result<f64> {
    let n = cov.nrows();
    if n == 0 || cov.ncols() != n {
        return Err(dim("covariance must be a non-empty square matrix"));
    }
    let alpha = cov.diag().sum() / n as f64;
    let mut total = 0.0;
    for ((i, j), &v) in cov.indexed_iter() {
        let d = if i == j { v - alpha } else { v };
        total += d * d;
    }
    Ok(total.sqrt())
}

/// Distance of the empirical data covariance from the nearest multiple of
/// the identity.
pub fn sphericity_gap(x: &DataBatch) -> Result<f64> {
    sphericity_gap_of(&covariance(x)?)
}

/// Upper bound on the sphericity gap for data from a maximally incoherent
/// dictionary, given the signal variances `zeta`.
pub fn sphericity_bound(zeta: &Array1<f64>, n: usize) -> Result<f64> {
    if n == 0 {
        return Err(invalid("n must be at least 1"));
    }
    if zeta.iter().any(|&z| !(z >= 0.0)) {
        return Err(invalid("signal variances must be non-negative"));
    }
    // m ||zeta||_2^2 - ||zeta||_1^2, written as m * sum (zeta_i - mean)^2 to
    // avoid cancellation.
    let m = zeta.len() as f64;
    let mean = zeta.sum() / m;
    let spread: f64 = zeta.iter().map(|z| (z - mean) * (z - mean)).sum();
    Ok((m * spread / n as f64).sqrt())
}
