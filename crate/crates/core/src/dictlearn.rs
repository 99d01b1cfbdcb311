//! Learning the generating dictionary from data alone.
//!
//! The auto-encoder has tied weights and no free bias. Data are centered
//! once with the empirical mean `x_bar`; each step minimizes the batch
//! objective
//!
//! ```text
//! (1/B) sum_b || W^T (s(W x~_b) - a_bar) - x~_b ||^2,   x~ = x - x_bar
//! ```
//!
//! where `a_bar` is the batch mean of the encoder outputs, then rescales
//! every row of `W` back to unit length (projected SGD).

use std::time::Instant;

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::datagen::{column_mean, DataBatch};
use crate::dictionary::{normalize_rows, Dictionary, Generator};
use crate::error::{dim, invalid, Error, Result};
use crate::metrics::{apre, ApreConfig};
use crate::recovery::{align_columns, recover_final, sigmoid, RecoveryConfig};
use crate::rng::{self, derive_seed};
use crate::signals::{BinsParams, SignalBatch};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrainActivation {
    Relu,
    /// `sigmoid(c (z + k))`, pushed towards 0/1 to mimic binarization.
    SaturatedSigmoid,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Init {
    OrthogonalizedGaussian,
    PlainGaussian,
    WarmStart(Array2<f64>),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub activation: TrainActivation,
    pub sigmoid_c: f64,
    pub sigmoid_k: f64,
    pub learning_rate: f64,
    /// Multiplies the learning rate after every epoch.
    pub lr_decay: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub init: Init,
    pub seed: u64,
}

impl TrainConfig {
    /// Settings that recover a 200 x 180 dictionary from 50k sparse samples.
    pub fn defaults_for(activation: TrainActivation) -> Self {
        let (learning_rate, lr_decay, epochs) = match activation {
            TrainActivation::Relu => (3.0, 0.97, 60),
            TrainActivation::SaturatedSigmoid => (2.0, 0.95, 40),
        };
        TrainConfig {
            activation,
            sigmoid_c: 6.0,
            sigmoid_k: -0.6,
            learning_rate,
            lr_decay,
            epochs,
            batch_size: 100,
            init: Init::OrthogonalizedGaussian,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0) || !self.learning_rate.is_finite() {
            return Err(invalid("learning rate must be positive"));
        }
        if !(self.lr_decay > 0.0) || self.lr_decay > 1.0 {
            return Err(invalid("lr_decay must lie in (0, 1]"));
        }
        if self.batch_size == 0 {
            return Err(invalid("batch size must be at least 1"));
        }
        if !self.sigmoid_c.is_finite() || !self.sigmoid_k.is_finite() {
            return Err(invalid("sigmoid constants must be finite"));
        }
        Ok(())
    }

    /// Encoder output and its derivative at pre-activation `z`.
    fn activation(&self, z: f64) -> (f64, f64) {
        match self.activation {
            TrainActivation::Relu => {
                if z > 0.0 {
                    (z, 1.0)
                } else {
                    (0.0, 0.0)
                }
            }
            TrainActivation::SaturatedSigmoid => {
                let s = sigmoid(self.sigmoid_c * (z + self.sigmoid_k));
                (s, self.sigmoid_c * s * (1.0 - s))
            }
        }
    }
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub dictionary: Dictionary,
    /// Mean reconstruction loss per data coordinate before the first step.
    pub initial_loss: f64,
    /// Mean batch loss of every epoch.
    pub epoch_loss: Vec<f64>,
    /// Largest row-norm deviation from 1 observed after any step.
    pub max_row_norm_error: f64,
    pub wall_time_secs: f64,
}

struct Step {
    loss: f64,
    grad: Array2<f64>,
}

/// Loss and gradient of one batch of centered data.
fn batch_step(w: &Array2<f64>, x: ArrayView2<'_, f64>, cfg: &TrainConfig, want_grad: bool) -> Step {
    let b = x.nrows() as f64;
    let n = x.ncols() as f64;
    let z = x.dot(&w.t());
    let mut a = Array2::<f64>::zeros(z.raw_dim());
    let mut da = Array2::<f64>::zeros(z.raw_dim());
    ndarray::Zip::from(&mut a).and(&mut da).and(&z).for_each(|a, d, &z| {
        let (v, g) = cfg.activation(z);
        *a = v;
        *d = g;
    });
    let a_bar = a.mean_axis(Axis(0)).expect("non-empty batch");
    let centered = &a - &a_bar;
    let mut resid = centered.dot(w);
    resid -= &x;
    let loss = resid.iter().map(|r| r * r).sum::<f64>() / (b * n);
    if !want_grad {
        return Step { loss, grad: Array2::zeros((0, 0)) };
    }
    let r_bar = resid.mean_axis(Axis(0)).expect("non-empty batch");
    let mut back = (&resid - &r_bar).dot(&w.t());
    back *= &da;
    let mut grad = centered.t().dot(&resid);
    grad += &back.t().dot(&x);
    grad *= 2.0 / b;
    Step { loss, grad }
}

fn batches(n_rows: usize, batch_size: usize) -> impl Iterator<Item = (usize, usize)> {
    (0..n_rows).step_by(batch_size).map(move |start| (start, (start + batch_size).min(n_rows)))
}

/// Mean per-coordinate reconstruction loss of `w` on centered data, batched
/// in row order.
pub fn reconstruction_loss(w: &Array2<f64>, centered: &Array2<f64>, cfg: &TrainConfig) -> f64 {
    let mut total = 0.0;
    for (start, end) in batches(centered.nrows(), cfg.batch_size) {
        let step = batch_step(w, centered.slice(ndarray::s![start..end, ..]), cfg, false);
        total += step.loss * (end - start) as f64;
    }
    total / centered.nrows() as f64
}

fn initial_weights(m: usize, n: usize, cfg: &TrainConfig) -> Result<Array2<f64>> {
    let seed = derive_seed(cfg.seed, 0);
    let mut w = match &cfg.init {
        Init::OrthogonalizedGaussian => Dictionary::generate(Generator::OrthogonalizedGaussian, m, n, seed)?.weights,
        Init::PlainGaussian => Dictionary::generate(Generator::PlainGaussian, m, n, seed)?.weights,
        Init::WarmStart(w0) => {
            if w0.dim() != (m, n) {
                return Err(dim(format!("warm start is {:?}, expected ({m}, {n})", w0.dim())));
            }
            w0.clone()
        }
    };
    normalize_rows(&mut w);
    Ok(w)
}

/// Learns an `m x n` dictionary from the rows of `x`.
pub fn train_autoencoder(x: &DataBatch, m: usize, cfg: &TrainConfig) -> Result<TrainOutcome> {
    cfg.validate()?;
    let (n_rows, n) = x.x.dim();
    if m == 0 {
        return Err(invalid("need at least one hidden unit"));
    }
    if n_rows < cfg.batch_size {
        return Err(invalid(format!("{n_rows} samples is fewer than one batch of {}", cfg.batch_size)));
    }
    let started = Instant::now();
    let mean = column_mean(x.x.view())?;
    let centered = &x.x - &mean;
    let mut w = initial_weights(m, n, cfg)?;
    let initial_loss = reconstruction_loss(&w, &centered, cfg);

    let mut order: Vec<usize> = (0..n_rows).collect();
    let shuffle_seed = derive_seed(cfg.seed, 1);
    let mut lr = cfg.learning_rate;
    let mut epoch_loss = Vec::with_capacity(cfg.epochs);
    let mut max_norm_err = 0.0_f64;
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng::stream(shuffle_seed, epoch as u64));
        let mut total = 0.0;
        for (start, end) in batches(n_rows, cfg.batch_size) {
            let batch = centered.select(Axis(0), &order[start..end]);
            let step = batch_step(&w, batch.view(), cfg, true);
            if !step.loss.is_finite() || step.grad.iter().any(|g| !g.is_finite()) {
                return Err(Error::Diverged { epoch, trace: epoch_loss });
            }
            total += step.loss * (end - start) as f64;
            w.scaled_add(-lr, &step.grad);
            normalize_rows(&mut w);
            for row in w.axis_iter(Axis(0)) {
                max_norm_err = max_norm_err.max((row.dot(&row).sqrt() - 1.0).abs());
            }
        }
        let mean_loss = total / n_rows as f64;
        if !mean_loss.is_finite() {
            return Err(Error::Diverged { epoch, trace: epoch_loss });
        }
        epoch_loss.push(mean_loss);
        lr *= cfg.lr_decay;
    }
    let dictionary = Dictionary { weights: w, generator: Generator::Custom, seed: cfg.seed };
    Ok(TrainOutcome {
        dictionary,
        initial_loss,
        epoch_loss,
        max_row_norm_error: max_norm_err,
        wall_time_secs: started.elapsed().as_secs_f64(),
    })
}

/// Percentiles of matched cosines.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Percentiles {
    pub p5: f64,
    pub p50: f64,
    pub p95: f64,
}

/// Pairing of learned rows to true rows.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MatchResult {
    /// `permutation[j]` is the learned row paired with true row `j`.
    pub permutation: Vec<usize>,
    /// Cosine of each pair, in true-row order.
    pub cosines: Vec<f64>,
    pub percentiles: Percentiles,
}

impl MatchResult {
    /// Fraction of pairs whose cosine is at least `threshold`.
    pub fn fraction_at_least(&self, threshold: f64) -> f64 {
        self.cosines.iter().filter(|&&c| c >= threshold).count() as f64 / self.cosines.len() as f64
    }
}

/// Linear-interpolation percentile (`q` in `[0, 100]`) of unsorted values.
pub fn percentile(values: &[f64], q: f64) -> f64 {
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let rank = q / 100.0 * (sorted.len() - 1) as f64;
    let lo = rank.floor() as usize;
    let hi = rank.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (rank - lo as f64)
}

/// Greedy pairing: repeatedly takes the unmatched (true, learned) pair with
/// the largest cosine. Ties go to the lowest true index, then the lowest
/// learned index.
pub fn greedy_match(w_true: &Dictionary, w_learned: &Dictionary) -> Result<MatchResult> {
    if w_true.weights.dim() != w_learned.weights.dim() {
        return Err(dim(format!(
            "dictionaries differ in shape: {:?} vs {:?}",
            w_true.weights.dim(),
            w_learned.weights.dim()
        )));
    }
    let m = w_true.m();
    if m == 0 {
        return Err(invalid("empty dictionaries"));
    }
    let mut a = w_true.weights.clone();
    let mut b = w_learned.weights.clone();
    normalize_rows(&mut a);
    normalize_rows(&mut b);
    let cos = a.dot(&b.t());
    let mut pairs: Vec<(usize, usize)> = (0..m).flat_map(|i| (0..m).map(move |j| (i, j))).collect();
    pairs.sort_by(|&(i1, j1), &(i2, j2)| cos[[i2, j2]].total_cmp(&cos[[i1, j1]]).then(i1.cmp(&i2)).then(j1.cmp(&j2)));

    let mut permutation = vec![usize::MAX; m];
    let mut taken = vec![false; m];
    let mut left = m;
    for (i, j) in pairs {
        if permutation[i] == usize::MAX && !taken[j] {
            permutation[i] = j;
            taken[j] = true;
            left -= 1;
            if left == 0 {
                break;
            }
        }
    }
    let cosines: Vec<f64> = (0..m).map(|i| cos[[i, permutation[i]]].clamp(-1.0, 1.0)).collect();
    let percentiles = Percentiles { p5: percentile(&cosines, 5.0), p50: percentile(&cosines, 50.0), p95: percentile(&cosines, 95.0) };
    Ok(MatchResult { permutation, cosines, percentiles })
}

/// APRE of closed-form recovery with the learned dictionary, after aligning
/// learned units to true units through `matching`.
///
/// Uses the empirical data mean; sigmoid outputs are binarized at the
/// configured threshold.
pub fn matched_apre(
    w_true: &Dictionary,
    w_learned: &Dictionary,
    matching: &MatchResult,
    h: &SignalBatch,
    x: &DataBatch,
    params: &BinsParams,
    cfg: &RecoveryConfig,
) -> Result<f64> {
    if w_true.weights.dim() != w_learned.weights.dim() {
        return Err(dim("dictionaries differ in shape"));
    }
    if matching.permutation.len() != w_true.m() || h.dim() != w_true.m() || h.n_samples() != x.n_samples() {
        return Err(dim("matching, signals and data are inconsistent"));
    }
    let mean = column_mean(x.x.view())?;
    let est = recover_final(w_learned, x, &mean, params, cfg)?;
    let aligned = align_columns(&est, &matching.permutation)?;
    apre(&h.values, &aligned, &ApreConfig::for_params(params, w_true.m())?)
}

/// Mean of a slice; convenience for loss summaries.
pub fn mean(values: &[f64]) -> f64 {
    Array1::from(values.to_vec()).mean().unwrap_or(f64::NAN)
}
