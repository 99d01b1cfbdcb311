//! Dictionary (weight matrix) generators and their coherence structure.
//!
//! A dictionary is an `m x n` matrix `W` whose rows are hidden-unit weight
//! vectors; data are produced as `x = W^T h`.

use ndarray::{Array2, ArrayView1, Axis};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{dim, invalid, Result};
use crate::rng;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Generator {
    /// Gaussian entries, orthonormalized along the shorter side, unit rows.
    OrthogonalizedGaussian,
    /// Gaussian entries, unit rows.
    PlainGaussian,
    /// Uniform `[0, 1]` entries, unit rows. Highly coherent.
    CoherentUniform,
    /// Supplied by the caller (hand-built or learned).
    Custom,
}

impl Generator {
    pub fn name(self) -> &'static str {
        match self {
            Generator::OrthogonalizedGaussian => "orthogonalized",
            Generator::PlainGaussian => "plain_gaussian",
            Generator::CoherentUniform => "coherent_uniform",
            Generator::Custom => "custom",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dictionary {
    pub weights: Array2<f64>,
    pub generator: Generator,
    pub seed: u64,
}

impl Dictionary {
    /// Wraps an arbitrary matrix. Rows are used as given.
    pub fn from_weights(weights: Array2<f64>) -> Self {
        Dictionary { weights, generator: Generator::Custom, seed: 0 }
    }

    /// Builds a custom dictionary from row vectors.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let m = rows.len();
        let n = rows.first().map_or(0, Vec::len);
        if m == 0 || n == 0 || rows.iter().any(|r| r.len() != n) {
            return Err(dim("rows must be non-empty and of equal length"));
        }
        let flat: Vec<f64> = rows.iter().flatten().copied().collect();
        let weights = Array2::from_shape_vec((m, n), flat).map_err(|e| dim(e.to_string()))?;
        Ok(Self::from_weights(weights))
    }

    /// Dispatches to the generator. `OrthogonalizedGaussian` with `m < n`
    /// orthonormalizes rows instead of columns.
    pub fn generate(generator: Generator, m: usize, n: usize, seed: u64) -> Result<Self> {
        match generator {
            Generator::OrthogonalizedGaussian if m < n => {
                check_shape(m, n)?;
                let g = gaussian(n, m, seed);
                let mut w = orthonormalize_columns(g).t().to_owned();
                normalize_rows(&mut w);
                Ok(Dictionary { weights: w, generator, seed })
            }
            Generator::OrthogonalizedGaussian => gen_orthogonalized_gaussian(m, n, seed),
            Generator::PlainGaussian => gen_plain_gaussian(m, n, seed),
            Generator::CoherentUniform => gen_coherent_uniform(m, n, seed),
            Generator::Custom => Err(invalid("custom dictionaries cannot be generated")),
        }
    }

    /// Number of hidden units (rows).
    pub fn m(&self) -> usize {
        self.weights.nrows()
    }

    /// Data dimension (columns).
    pub fn n(&self) -> usize {
        self.weights.ncols()
    }

    pub fn row(&self, i: usize) -> ArrayView1<'_, f64> {
        self.weights.row(i)
    }

    /// Largest deviation of a row norm from 1.
    pub fn max_row_norm_error(&self) -> f64 {
        self.weights
            .axis_iter(Axis(0))
            .map(|r| (r.dot(&r).sqrt() - 1.0).abs())
            .fold(0.0, f64::max)
    }
}

fn check_shape(m: usize, n: usize) -> Result<()> {
    if m == 0 || n == 0 {
        return Err(invalid("dictionary needs m >= 1 and n >= 1"));
    }
    Ok(())
}

fn gaussian(rows: usize, cols: usize, seed: u64) -> Array2<f64> {
    let mut rng = rng::stream(seed, 0);
    Array2::from_shape_simple_fn((rows, cols), || rng.sample(StandardNormal))
}

/// Rescales every nonzero row to unit l2 norm.
pub fn normalize_rows(w: &mut Array2<f64>) {
    for mut row in w.axis_iter_mut(Axis(0)) {
        let norm = row.dot(&row).sqrt();
        if norm > 0.0 {
            row /= norm;
        }
    }
}

/// Orthonormal basis of the column space via modified Gram-Schmidt with one
/// reorthogonalization pass. Equivalent to the Q factor of a QR
/// factorization whose R has a positive diagonal. Requires full column rank.
fn orthonormalize_columns(mut a: Array2<f64>) -> Array2<f64> {
    let k = a.ncols();
    for j in 0..k {
        for _pass in 0..2 {
            for i in 0..j {
                let (done, mut rest) = a.view_mut().split_at(Axis(1), j);
                let qi = done.column(i);
                let mut col = rest.column_mut(0);
                let r = qi.dot(&col);
                col.scaled_add(-r, &qi);
            }
        }
        let mut col = a.column_mut(j);
        let norm = col.dot(&col).sqrt();
        col /= norm;
    }
    a
}

/// Gaussian entries, columns orthonormalized, rows rescaled to unit length.
pub fn gen_orthogonalized_gaussian(m: usize, n: usize, seed: u64) -> Result<Dictionary> {
    check_shape(m, n)?;
    if m < n {
        return Err(invalid(format!("cannot orthonormalize {n} columns of length {m}")));
    }
    let mut w = orthonormalize_columns(gaussian(m, n, seed));
    normalize_rows(&mut w);
    Ok(Dictionary { weights: w, generator: Generator::OrthogonalizedGaussian, seed })
}

/// Gaussian entries with unit-length rows.
pub fn gen_plain_gaussian(m: usize, n: usize, seed: u64) -> Result<Dictionary> {
    check_shape(m, n)?;
    let mut w = gaussian(m, n, seed);
    normalize_rows(&mut w);
    Ok(Dictionary { weights: w, generator: Generator::PlainGaussian, seed })
}

/// Uniform `[0, 1]` entries with unit-length rows.
pub fn gen_coherent_uniform(m: usize, n: usize, seed: u64) -> Result<Dictionary> {
    check_shape(m, n)?;
    let mut rng = rng::stream(seed, 0);
    let mut w = Array2::from_shape_simple_fn((m, n), || rng.random::<f64>());
    normalize_rows(&mut w);
    Ok(Dictionary { weights: w, generator: Generator::CoherentUniform, seed })
}

/// Largest absolute cosine between two distinct rows.
pub fn coherence(w: &Dictionary) -> Result<f64> {
    if w.m() < 2 {
        return Err(invalid("coherence needs at least two rows"));
    }
    let mut unit = w.weights.clone();
    normalize_rows(&mut unit);
    let gram = unit.dot(&unit.t());
    let mut best = 0.0_f64;
    for i in 0..w.m() {
        for j in (i + 1)..w.m() {
            best = best.max(gram[[i, j]].abs());
        }
    }
    Ok(best.min(1.0))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GramMode {
    /// `a_ij = W_i . W_j` for all pairs.
    Binary,
    /// Off-diagonal as in `Binary`, diagonal `W_i . W_i - 1`.
    Continuous,
}

/// The `a_ij` cross-talk coefficients between hidden units.
#[derive(Clone, Debug, PartialEq)]
pub struct GramOffsets {
    pub a: Array2<f64>,
    pub mode: GramMode,
}

impl GramOffsets {
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.a[[i, j]]
    }
}

pub fn gram_offsets(w: &Dictionary, mode: GramMode) -> GramOffsets {
    let m = w.m();
    let mut a = w.weights.dot(&w.weights.t());
    // Mirror the upper triangle so the matrix is exactly symmetric.
    for i in 0..m {
        for j in 0..i {
            a[[i, j]] = a[[j, i]];
        }
    }
    if mode == GramMode::Continuous {
        for i in 0..m {
            a[[i, i]] -= 1.0;
        }
    }
    GramOffsets { a, mode }
}

/// Lower limit on the coherence of `m` unit vectors in `n` dimensions.
pub fn welch_bound(m: usize, n: usize) -> Result<f64> {
    if n == 0 || m <= n {
        return Err(invalid(format!("welch bound needs m > n >= 1, got m={m}, n={n}")));
    }
    let (m, n) = (m as f64, n as f64);
    Ok(((m - n) / (n * (m - 1.0))).sqrt())
}
