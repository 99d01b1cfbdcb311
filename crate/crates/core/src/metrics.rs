//! Recovery-quality metrics.

use ndarray::{Array1, Array2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{dim, invalid, Result};
use crate::signals::BinsParams;

/// Settings of the class-balanced recovery error.
///
/// `p_weighting` holds one activation probability shared by all hidden
/// dimensions, or one per dimension.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ApreConfig {
    pub epsilon: f64,
    pub p_weighting: Vec<f64>,
}

impl ApreConfig {
    /// Tolerance used for continuous signals.
    pub const CONTINUOUS_EPSILON: f64 = 0.1;
    /// Tolerance used for binary signals.
    pub const BINARY_EPSILON: f64 = 0.0;

    pub fn new(epsilon: f64, p_weighting: f64) -> Result<Self> {
        Self::per_dim(epsilon, vec![p_weighting])
    }

    pub fn per_dim(epsilon: f64, p_weighting: Vec<f64>) -> Result<Self> {
        if !(epsilon >= 0.0) {
            return Err(invalid(format!("epsilon must be >= 0, got {epsilon}")));
        }
        if p_weighting.is_empty() || p_weighting.iter().any(|&p| !(p > 0.0 && p < 1.0)) {
            return Err(invalid("weighting probabilities must lie strictly inside (0, 1)"));
        }
        Ok(ApreConfig { epsilon, p_weighting })
    }

    /// Weights and tolerance matching the signals' generating distribution.
    pub fn for_params(params: &BinsParams, m: usize) -> Result<Self> {
        let eps = if params.is_binary() { Self::BINARY_EPSILON } else { Self::CONTINUOUS_EPSILON };
        match params.dim() {
            Some(_) => Self::per_dim(eps, params.p_vec(m).to_vec()),
            None => Self::new(eps, params.p(0)),
        }
    }

    fn p_at(&self, j: usize) -> f64 {
        if self.p_weighting.len() == 1 {
            self.p_weighting[0]
        } else {
            self.p_weighting[j]
        }
    }
}

fn check_same_shape(h: &Array2<f64>, h_hat: &Array2<f64>) -> Result<()> {
    if h.dim() != h_hat.dim() {
        return Err(dim(format!("shapes differ: {:?} vs {:?}", h.dim(), h_hat.dim())));
    }
    Ok(())
}

/// Average percentage recovery error.
///
/// Each entry with `|h_hat - h| > epsilon` counts with weight `0.5 / p` when
/// the true entry is nonzero and `0.5 / (1 - p)` when it is zero, so a
/// predictor that is wrong everywhere scores 100 and the all-zero predictor
/// scores about 50. Terms are summed in row-major order.
pub fn apre(h: &Array2<f64>, h_hat: &Array2<f64>, cfg: &ApreConfig) -> Result<f64> {
    check_same_shape(h, h_hat)?;
    let (n_rows, m) = h.dim();
    if cfg.p_weighting.len() != 1 && cfg.p_weighting.len() != m {
        return Err(dim(format!("{} weighting probabilities for {m} dimensions", cfg.p_weighting.len())));
    }
    if n_rows == 0 || m == 0 {
        return Err(invalid("apre of an empty batch"));
    }
    let weights: Vec<(f64, f64)> = (0..m)
        .map(|j| {
            let p = cfg.p_at(j);
            (0.5 / p, 0.5 / (1.0 - p))
        })
        .collect();
    let mut total = 0.0;
    for (row, row_hat) in h.axis_iter(Axis(0)).zip(h_hat.axis_iter(Axis(0))) {
        for (j, (&t, &e)) in row.iter().zip(row_hat.iter()).enumerate() {
            if (e - t).abs() > cfg.epsilon {
                total += if t > 0.0 { weights[j].0 } else { weights[j].1 };
            }
        }
    }
    Ok(100.0 / (n_rows * m) as f64 * total)
}

/// Per-sample `(1/m) ||h_hat - h||_1`.
pub fn mean_l1_error(h: &Array2<f64>, h_hat: &Array2<f64>) -> Result<Array1<f64>> {
    check_same_shape(h, h_hat)?;
    let m = h.ncols() as f64;
    Ok(h.axis_iter(Axis(0))
        .zip(h_hat.axis_iter(Axis(0)))
        .map(|(row, row_hat)| {
            let mut s = 0.0;
            for (&t, &e) in row.iter().zip(row_hat.iter()) {
                s += (e - t).abs();
            }
            s / m
        })
        .collect())
}
