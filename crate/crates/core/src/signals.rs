//! Bounded independent non-negative sparse (BINS) hidden signals.
//!
//! Each hidden dimension `j` is exactly zero with probability `1 - p_j` and
//! otherwise drawn from a bounded density on `(0, l_max_j]` with conditional
//! mean `mu_h_j`.

use ndarray::{Array1, Array2, Axis};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{dim, invalid, Result};
use crate::rng;

/// Density of the nonzero part of a hidden unit.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum FcKind {
    /// Uniform on `(0, l_max]`, conditional mean `l_max / 2`.
    #[serde(rename = "uniform")]
    UniformOnZeroToLmax,
    /// Point mass at `l_max`; with `l_max = 1` the signal is binary.
    #[serde(rename = "dirac")]
    DiracAtLmax,
}

impl FcKind {
    fn conditional_mean(self, l_max: f64) -> f64 {
        match self {
            FcKind::UniformOnZeroToLmax => 0.5 * l_max,
            FcKind::DiracAtLmax => l_max,
        }
    }

    fn second_moment(self, l_max: f64) -> f64 {
        match self {
            FcKind::UniformOnZeroToLmax => l_max * l_max / 3.0,
            FcKind::DiracAtLmax => l_max * l_max,
        }
    }
}

/// A per-dimension value, or one scalar shared by every dimension.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PerDim {
    Scalar(f64),
    Vector(Vec<f64>),
}

impl PerDim {
    fn len(&self) -> Option<usize> {
        match self {
            PerDim::Scalar(_) => None,
            PerDim::Vector(v) => Some(v.len()),
        }
    }

    fn at(&self, j: usize) -> f64 {
        match self {
            PerDim::Scalar(x) => *x,
            PerDim::Vector(v) => v[j],
        }
    }

    fn values(&self) -> Box<dyn Iterator<Item = f64> + '_> {
        match self {
            PerDim::Scalar(x) => Box::new(std::iter::once(*x)),
            PerDim::Vector(v) => Box::new(v.iter().copied()),
        }
    }
}

impl From<f64> for PerDim {
    fn from(x: f64) -> Self {
        PerDim::Scalar(x)
    }
}

impl From<Vec<f64>> for PerDim {
    fn from(v: Vec<f64>) -> Self {
        PerDim::Vector(v)
    }
}

#[derive(Deserialize)]
struct RawBins {
    p: PerDim,
    fc: FcKind,
    #[serde(default)]
    mu_h: Option<PerDim>,
    l_max: PerDim,
}

/// Parameters of the BINS distribution.
///
/// Serializes as `{"p", "fc", "mu_h", "l_max"}` where every numeric field is
/// either a scalar or an array with one entry per hidden dimension.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawBins")]
pub struct BinsParams {
    p: PerDim,
    fc: FcKind,
    mu_h: PerDim,
    l_max: PerDim,
}

impl TryFrom<RawBins> for BinsParams {
    type Error = crate::Error;

    fn try_from(raw: RawBins) -> Result<Self> {
        match raw.mu_h {
            Some(mu_h) => BinsParams::with_mean(raw.p, raw.fc, mu_h, raw.l_max),
            None => BinsParams::new(raw.p, raw.fc, raw.l_max),
        }
    }
}

impl BinsParams {
    /// Builds parameters whose conditional mean follows from `fc` and `l_max`.
    pub fn new(p: impl Into<PerDim>, fc: FcKind, l_max: impl Into<PerDim>) -> Result<Self> {
        let l_max = l_max.into();
        let mu_h = match &l_max {
            PerDim::Scalar(l) => PerDim::Scalar(fc.conditional_mean(*l)),
            PerDim::Vector(v) => PerDim::Vector(v.iter().map(|&l| fc.conditional_mean(l)).collect()),
        };
        Self::with_mean(p, fc, mu_h, l_max)
    }

    /// Builds parameters from an explicit conditional mean, which must agree
    /// with the one implied by `fc`.
    pub fn with_mean(
        p: impl Into<PerDim>,
        fc: FcKind,
        mu_h: impl Into<PerDim>,
        l_max: impl Into<PerDim>,
    ) -> Result<Self> {
        let params = BinsParams { p: p.into(), fc, mu_h: mu_h.into(), l_max: l_max.into() };
        params.validate()?;
        Ok(params)
    }

    /// Continuous signals: uniform nonzero part on `(0, l_max]`.
    pub fn uniform(p: f64, l_max: f64) -> Result<Self> {
        Self::new(p, FcKind::UniformOnZeroToLmax, l_max)
    }

    /// Binary signals: nonzero part fixed at 1.
    pub fn binary(p: f64) -> Result<Self> {
        Self::new(p, FcKind::DiracAtLmax, 1.0)
    }

    fn validate(&self) -> Result<()> {
        let lens: Vec<usize> = [&self.p, &self.mu_h, &self.l_max].iter().filter_map(|v| v.len()).collect();
        if let Some(&first) = lens.first() {
            if first == 0 {
                return Err(invalid("BINS parameter vectors must not be empty"));
            }
            if lens.iter().any(|&l| l != first) {
                return Err(dim("BINS parameter vectors have different lengths"));
            }
        }
        if self.p.values().any(|p| !(0.0..=1.0).contains(&p)) {
            return Err(invalid("activation probability must lie in [0, 1]"));
        }
        let m = self.dim().unwrap_or(1);
        for j in 0..m {
            let (mu, l) = (self.mu_h.at(j), self.l_max.at(j));
            if !(mu > 0.0 && mu <= l && l.is_finite()) {
                return Err(invalid(format!("dimension {j}: need 0 < mu_h <= l_max, got mu_h={mu}, l_max={l}")));
            }
            let expected = self.fc.conditional_mean(l);
            if (mu - expected).abs() > 1e-12 * l.max(1.0) {
                return Err(invalid(format!(
                    "dimension {j}: mu_h={mu} inconsistent with {:?} (expected {expected})",
                    self.fc
                )));
            }
        }
        Ok(())
    }

    /// Number of dimensions fixed by the parameters, or `None` when every
    /// field is a broadcast scalar.
    pub fn dim(&self) -> Option<usize> {
        self.p.len().or(self.mu_h.len()).or(self.l_max.len())
    }

    /// Checks that the parameters can describe an `m`-dimensional signal.
    pub fn check_dim(&self, m: usize) -> Result<()> {
        match self.dim() {
            Some(d) if d != m => Err(dim(format!("BINS parameters have {d} dimensions, expected {m}"))),
            _ => Ok(()),
        }
    }

    pub fn fc(&self) -> FcKind {
        self.fc
    }

    pub fn p(&self, j: usize) -> f64 {
        self.p.at(j)
    }

    pub fn mu_h(&self, j: usize) -> f64 {
        self.mu_h.at(j)
    }

    pub fn l_max(&self, j: usize) -> f64 {
        self.l_max.at(j)
    }

    /// Activation probabilities expanded to `m` dimensions.
    pub fn p_vec(&self, m: usize) -> Array1<f64> {
        Array1::from_shape_fn(m, |j| self.p(j))
    }

    /// True when every nonzero entry is exactly 1.
    pub fn is_binary(&self) -> bool {
        self.fc == FcKind::DiracAtLmax && self.l_max.values().all(|l| l == 1.0)
    }

    /// `E[h_j] = p_j * mu_h_j`.
    pub fn signal_mean(&self, m: usize) -> Result<Array1<f64>> {
        self.check_dim(m)?;
        Ok(Array1::from_shape_fn(m, |j| self.p(j) * self.mu_h(j)))
    }

    /// `Var(h_j) = p_j E[v^2] - (p_j mu_h_j)^2`, the diagonal of the signal
    /// covariance.
    pub fn signal_variance(&self, m: usize) -> Result<Array1<f64>> {
        self.check_dim(m)?;
        Ok(Array1::from_shape_fn(m, |j| {
            let p = self.p(j);
            let mean = p * self.mu_h(j);
            p * self.fc.second_moment(self.l_max(j)) - mean * mean
        }))
    }
}

/// `N x m` matrix of hidden signals together with how it was drawn.
#[derive(Clone, Debug)]
pub struct SignalBatch {
    pub values: Array2<f64>,
    pub params: BinsParams,
    pub seed: u64,
}

impl SignalBatch {
    pub fn n_samples(&self) -> usize {
        self.values.nrows()
    }

    pub fn dim(&self) -> usize {
        self.values.ncols()
    }
}

/// Draws `n_samples` independent BINS signals of dimension `m`.
///
/// Row `i` uses stream `i` of `seed`, so the batch is identical however the
/// rows are scheduled.
pub fn sample_signals(params: &BinsParams, m: usize, n_samples: usize, seed: u64) -> Result<SignalBatch> {
    params.check_dim(m)?;
    if m == 0 || n_samples == 0 {
        return Err(invalid("need m >= 1 and n_samples >= 1"));
    }
    let mut values = Array2::<f64>::zeros((n_samples, m));
    values
        .axis_iter_mut(Axis(0))
        .into_par_iter()
        .enumerate()
        .for_each(|(i, mut row)| {
            let mut rng = rng::stream(seed, i as u64);
            for (j, h) in row.iter_mut().enumerate() {
                let u: f64 = rng.random();
                if u < params.p(j) {
                    let l = params.l_max(j);
                    *h = match params.fc {
                        // 1 - U with U in [0, 1) lands in (0, 1].
                        FcKind::UniformOnZeroToLmax => l * (1.0 - rng.random::<f64>()),
                        FcKind::DiracAtLmax => l,
                    };
                }
            }
        });
    Ok(SignalBatch { values, params: params.clone(), seed })
}
