//! Probabilistic lower bounds on `P((1/m) ||h_hat - h||_1 <= delta)` for the
//! closed-form encoder, and a Monte-Carlo harness that measures the same
//! probability.
//!
//! The formulas are evaluated as stated: a bound can be negative (vacuous)
//! and is never clamped. A unit whose cross-talk denominator is zero has a
//! deterministic pre-activation and contributes no failure probability.

use std::fmt;
use std::io::Write;

use ndarray::{Array1, Array2, Axis};
use serde::{Deserialize, Serialize};

use crate::datagen::{sample_noise, DataBatch, NoiseSpec};
use crate::dictionary::{gram_offsets, Dictionary, GramMode};
use crate::error::{dim, invalid, Result};
use crate::metrics::mean_l1_error;
use crate::recovery::{encode, theoretical_bias_binary, theoretical_bias_continuous, Activation, RecoveryConfig};
use crate::rng::derive_seed;
use crate::signals::{sample_signals, BinsParams};

/// Denominators at or below this are rounding residue of an orthonormal
/// dictionary and count as zero.
const ZERO_DENOMINATOR: f64 = 1e-20;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundMode {
    BinaryNoiseless,
    BinaryNoisy,
    ContinuousNoiseless,
    ContinuousNoisy,
}

impl BoundMode {
    pub fn new(activation: Activation, noisy: bool) -> Self {
        match (activation, noisy) {
            (Activation::Sigmoid, false) => BoundMode::BinaryNoiseless,
            (Activation::Sigmoid, true) => BoundMode::BinaryNoisy,
            (Activation::Relu, false) => BoundMode::ContinuousNoiseless,
            (Activation::Relu, true) => BoundMode::ContinuousNoisy,
        }
    }

    pub fn is_binary(self) -> bool {
        matches!(self, BoundMode::BinaryNoiseless | BoundMode::BinaryNoisy)
    }
}

impl fmt::Display for BoundMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            BoundMode::BinaryNoiseless => "binary_noiseless",
            BoundMode::BinaryNoisy => "binary_noisy",
            BoundMode::ContinuousNoiseless => "continuous_noiseless",
            BoundMode::ContinuousNoisy => "continuous_noisy",
        };
        f.write_str(s)
    }
}

/// Per-unit quantities of the binary (sigmoid) bound.
#[derive(Clone, Debug)]
pub struct BinaryBoundTerms {
    p: Array1<f64>,
    a_diag: Array1<f64>,
    /// `sum_{j != i} a_ij^2`
    cross: Array1<f64>,
}

impl BinaryBoundTerms {
    pub fn new(w: &Dictionary, params: &BinsParams) -> Result<Self> {
        params.check_dim(w.m())?;
        if !params.is_binary() {
            return Err(invalid("binary bound needs Dirac signals with l_max = 1"));
        }
        let a = gram_offsets(w, GramMode::Binary).a;
        let m = w.m();
        let cross = Array1::from_shape_fn(m, |i| (0..m).filter(|&j| j != i).map(|j| a[[i, j]] * a[[i, j]]).sum());
        Ok(BinaryBoundTerms { p: params.p_vec(m), a_diag: a.diag().to_owned(), cross })
    }

    /// Lower bound with per-unit threshold shifts `shift_i = W_i . (e - E[e])`.
    pub fn evaluate(&self, delta: f64, shift: Option<&Array1<f64>>) -> Result<f64> {
        if !(delta > 0.0 && delta < 1.0) {
            return Err(invalid(format!("binary bound needs delta in (0, 1), got {delta}")));
        }
        let m = self.p.len();
        if let Some(s) = shift {
            if s.len() != m {
                return Err(dim("shift length differs from the number of units"));
            }
        }
        let dp = (delta / (1.0 - delta)).ln();
        let mut failure = 0.0;
        for i in 0..m {
            let s = self.cross[i];
            if s <= ZERO_DENOMINATOR {
                continue;
            }
            let t = dp - shift.map_or(0.0, |v| v[i]);
            let (p, aii) = (self.p[i], self.a_diag[i]);
            let off = t + p * aii;
            let on = t + (1.0 - p) * aii;
            failure += (1.0 - p) * (-2.0 * off * off / s).exp() + p * (-2.0 * on * on / s).exp();
        }
        Ok(1.0 - failure)
    }
}

/// Per-unit quantities of the continuous (ReLU) bound.
#[derive(Clone, Debug)]
pub struct ContinuousBoundTerms {
    g_plus: Array1<f64>,
    g_minus: Array1<f64>,
    /// `sum_j a_ij^2 l_max_j^2`
    spread: Array1<f64>,
}

impl ContinuousBoundTerms {
    pub fn new(w: &Dictionary, params: &BinsParams) -> Result<Self> {
        params.check_dim(w.m())?;
        let a = gram_offsets(w, GramMode::Continuous).a;
        let m = w.m();
        let weight: Vec<f64> = (0..m)
            .map(|j| {
                let p = params.p(j);
                (1.0 - p) * (params.l_max(j) - 2.0 * p * params.mu_h(j))
            })
            .collect();
        let mut g_plus = Array1::zeros(m);
        let mut g_minus = Array1::zeros(m);
        let mut spread = Array1::zeros(m);
        for i in 0..m {
            for j in 0..m {
                let aij = a[[i, j]];
                g_plus[i] += weight[j] * aij.max(0.0);
                g_minus[i] += weight[j] * (-aij).max(0.0);
                let l = params.l_max(j);
                spread[i] += aij * aij * l * l;
            }
        }
        Ok(ContinuousBoundTerms { g_plus, g_minus, spread })
    }

    pub fn evaluate(&self, delta: f64, shift: Option<&Array1<f64>>) -> Result<f64> {
        if !(delta >= 0.0) {
            return Err(invalid(format!("continuous bound needs delta >= 0, got {delta}")));
        }
        let m = self.spread.len();
        if let Some(s) = shift {
            if s.len() != m {
                return Err(dim("shift length differs from the number of units"));
            }
        }
        let mut failure = 0.0;
        for i in 0..m {
            let d = self.spread[i];
            if d <= ZERO_DENOMINATOR {
                continue;
            }
            let t = delta - shift.map_or(0.0, |v| v[i]);
            let up = t + self.g_plus[i];
            let down = t + self.g_minus[i];
            failure += (-2.0 * up * up / d).exp() + (-2.0 * down * down / d).exp();
        }
        Ok(1.0 - failure)
    }
}

fn noise_shift(w: &Dictionary, noise_dev: &Array1<f64>) -> Result<Array1<f64>> {
    if noise_dev.len() != w.n() {
        return Err(dim(format!("noise deviation has length {}, expected {}", noise_dev.len(), w.n())));
    }
    Ok(w.weights.dot(noise_dev))
}

/// Lower bound for noiseless binary signals recovered with a sigmoid.
pub fn bound_binary_noiseless(w: &Dictionary, params: &BinsParams, delta: f64) -> Result<f64> {
    BinaryBoundTerms::new(w, params)?.evaluate(delta, None)
}

/// Per-sample bound for binary signals with one realized noise deviation
/// `e - E[e]`.
pub fn bound_binary_noisy(w: &Dictionary, params: &BinsParams, delta: f64, noise_dev: &Array1<f64>) -> Result<f64> {
    let shift = noise_shift(w, noise_dev)?;
    BinaryBoundTerms::new(w, params)?.evaluate(delta, Some(&shift))
}

/// Lower bound for noiseless continuous signals recovered with a ReLU.
pub fn bound_continuous_noiseless(w: &Dictionary, params: &BinsParams, delta: f64) -> Result<f64> {
    ContinuousBoundTerms::new(w, params)?.evaluate(delta, None)
}

/// Per-sample bound for continuous signals with one realized noise deviation.
pub fn bound_continuous_noisy(w: &Dictionary, params: &BinsParams, delta: f64, noise_dev: &Array1<f64>) -> Result<f64> {
    let shift = noise_shift(w, noise_dev)?;
    ContinuousBoundTerms::new(w, params)?.evaluate(delta, Some(&shift))
}

enum Terms {
    Binary(BinaryBoundTerms),
    Continuous(ContinuousBoundTerms),
}

impl Terms {
    fn evaluate(&self, delta: f64, shift: Option<&Array1<f64>>) -> Result<f64> {
        match self {
            Terms::Binary(t) => t.evaluate(delta, shift),
            Terms::Continuous(t) => t.evaluate(delta, shift),
        }
    }
}

/// Theoretical and Monte-Carlo recovery probabilities over a grid of
/// tolerances.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub delta_grid: Vec<f64>,
    pub theoretical: Vec<f64>,
    pub empirical: Vec<f64>,
    pub n_samples: usize,
    pub mode: BoundMode,
}

impl BoundReport {
    /// Binomial standard error of the empirical estimate at grid point `k`.
    pub fn standard_error(&self, k: usize) -> f64 {
        binomial_se(self.empirical[k], self.n_samples)
    }

    /// Grid points where `theoretical > empirical + z * se`.
    pub fn dominance_violations(&self, z: f64) -> Vec<usize> {
        (0..self.delta_grid.len())
            .filter(|&k| self.theoretical[k] > self.empirical[k] + z * self.standard_error(k))
            .collect()
    }

    /// Writes `delta,theoretical,empirical,n_samples,mode` rows.
    pub fn write_csv<W: Write>(&self, out: W, with_header: bool) -> Result<()> {
        let mut wtr = csv::WriterBuilder::new().has_headers(false).from_writer(out);
        if with_header {
            wtr.write_record(["delta", "theoretical", "empirical", "n_samples", "mode"])?;
        }
        let mode = self.mode.to_string();
        for k in 0..self.delta_grid.len() {
            wtr.write_record([
                self.delta_grid[k].to_string(),
                self.theoretical[k].to_string(),
                self.empirical[k].to_string(),
                self.n_samples.to_string(),
                mode.clone(),
            ])?;
        }
        wtr.flush()?;
        Ok(())
    }
}

pub fn binomial_se(p: f64, n: usize) -> f64 {
    (p * (1.0 - p) / n as f64).sqrt()
}

/// Monte-Carlo check of the recovery bounds.
///
/// Samples signals (and noise when given), generates `x = W^T h + e`,
/// recovers with the theoretical bias shifted by `-W E[e]` (`c = 1`,
/// `delta_b = 0`; only `cfg.activation` is used) and records the empirical
/// CDF of the per-sample mean l1 error at each grid point. For noisy modes
/// the theoretical column averages the per-sample bound over the realized
/// noise.
pub fn empirical_recovery_prob(
    w: &Dictionary,
    params: &BinsParams,
    cfg: &RecoveryConfig,
    delta_grid: &[f64],
    n_samples: usize,
    seed: u64,
    noise: Option<NoiseSpec>,
) -> Result<BoundReport> {
    let mode = BoundMode::new(cfg.activation, noise.is_some());
    if mode.is_binary() && !params.is_binary() {
        return Err(invalid("sigmoid recovery needs binary signal parameters"));
    }
    if n_samples == 0 {
        return Err(invalid("need at least one Monte-Carlo sample"));
    }
    let (m, n) = (w.m(), w.n());
    let h = sample_signals(params, m, n_samples, derive_seed(seed, 1))?;
    let mut x = h.values.dot(&w.weights);
    let mut bias = if mode.is_binary() {
        theoretical_bias_binary(w, params)?
    } else {
        theoretical_bias_continuous(w, params)?
    };
    let mut shifts: Option<Array2<f64>> = None;
    if let Some(spec) = noise {
        let e = sample_noise(n_samples, n, spec, derive_seed(seed, 2));
        x += &e;
        let mean_e = Array1::from_elem(n, spec.mean);
        bias -= &w.weights.dot(&mean_e);
        shifts = Some((&e - &mean_e).dot(&w.weights.t()));
    }
    let data = DataBatch { x, source_seed: seed, scale_c: 1.0, b_d: Array1::zeros(n), noise };
    let h_hat = encode(w, &data, &bias, cfg.activation)?;
    let errors = mean_l1_error(&h.values, &h_hat)?;

    let terms = if mode.is_binary() {
        Terms::Binary(BinaryBoundTerms::new(w, params)?)
    } else {
        Terms::Continuous(ContinuousBoundTerms::new(w, params)?)
    };
    let mut theoretical = Vec::with_capacity(delta_grid.len());
    let mut empirical = Vec::with_capacity(delta_grid.len());
    for &delta in delta_grid {
        let hits = errors.iter().filter(|&&e| e <= delta).count();
        empirical.push(hits as f64 / n_samples as f64);
        let value = match &shifts {
            None => terms.evaluate(delta, None)?,
            Some(s) => {
                let mut total = 0.0;
                for row in s.axis_iter(Axis(0)) {
                    total += terms.evaluate(delta, Some(&row.to_owned()))?;
                }
                total / n_samples as f64
            }
        };
        theoretical.push(value);
    }
    Ok(BoundReport { delta_grid: delta_grid.to_vec(), theoretical, empirical, n_samples, mode })
}

/// Per-sample noisy bounds for every row of a realized noise matrix.
pub fn per_sample_noisy_bounds(
    w: &Dictionary,
    params: &BinsParams,
    mode: BoundMode,
    delta: f64,
    noise_dev: &Array2<f64>,
) -> Result<Array1<f64>> {
    if noise_dev.ncols() != w.n() {
        return Err(dim("noise deviation width differs from the data dimension"));
    }
    let terms = if mode.is_binary() {
        Terms::Binary(BinaryBoundTerms::new(w, params)?)
    } else {
        Terms::Continuous(ContinuousBoundTerms::new(w, params)?)
    };
    let shifts = noise_dev.dot(&w.weights.t());
    shifts
        .axis_iter(Axis(0))
        .map(|row| terms.evaluate(delta, Some(&row.to_owned())))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dictionary::gen_orthogonalized_gaussian;
    use approx::assert_abs_diff_eq;
    use ndarray::array;

    fn hand() -> Dictionary {
        let s = 0.6_f64;
        Dictionary::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0], vec![s, 0.8]]).unwrap()
    }

    #[test]
    fn orthonormal_rows_give_certain_bounds() {
        let w = gen_orthogonalized_gaussian(8, 8, 5).unwrap();
        let bin = BinsParams::binary(0.2).unwrap();
        let cont = BinsParams::uniform(0.2, 1.0).unwrap();
        let dev = Array1::from_elem(8, 0.3);
        for delta in [0.5, 0.7, 0.99] {
            assert_eq!(bound_binary_noiseless(&w, &bin, delta).unwrap(), 1.0);
            assert_eq!(bound_binary_noisy(&w, &bin, delta, &dev).unwrap(), 1.0);
        }
        for delta in [0.0, 0.1, 3.0] {
            assert_eq!(bound_continuous_noiseless(&w, &cont, delta).unwrap(), 1.0);
            assert_eq!(bound_continuous_noisy(&w, &cont, delta, &dev).unwrap(), 1.0);
        }
    }

    #[test]
    fn half_delta_removes_log_odds() {
        // delta = 0.5 makes ln(delta / (1 - delta)) vanish, so the bound is a
        // function of the dictionary alone.
        let w = hand();
        let params = BinsParams::binary(0.1).unwrap();
        let got = bound_binary_noiseless(&w, &params, 0.5).unwrap();
        let a = w.weights.dot(&w.weights.t());
        let mut failure = 0.0;
        for i in 0..3 {
            let s: f64 = (0..3).filter(|&j| j != i).map(|j| a[[i, j]] * a[[i, j]]).sum();
            failure += 0.9 * (-2.0 * (0.1 * a[[i, i]]).powi(2) / s).exp() + 0.1 * (-2.0 * (0.9 * a[[i, i]]).powi(2) / s).exp();
        }
        assert_abs_diff_eq!(got, 1.0 - failure, epsilon = 1e-14);
    }

    #[test]
    fn noisy_bounds_reduce_to_noiseless() {
        let w = hand();
        let bin = BinsParams::binary(0.1).unwrap();
        let cont = BinsParams::uniform(0.2, 1.0).unwrap();
        let zero = Array1::zeros(2);
        for delta in [0.3, 0.5, 0.8] {
            assert_eq!(bound_binary_noisy(&w, &bin, delta, &zero).unwrap(), bound_binary_noiseless(&w, &bin, delta).unwrap());
            assert_eq!(
                bound_continuous_noisy(&w, &cont, delta, &zero).unwrap(),
                bound_continuous_noiseless(&w, &cont, delta).unwrap()
            );
        }
        // A deviation orthogonal to every row has no effect.
        let w = Dictionary::from_rows(&[vec![1.0, 0.0, 0.0], vec![0.6, 0.8, 0.0]]).unwrap();
        let dev = array![0.0, 0.0, 0.37];
        let bin = BinsParams::binary(0.3).unwrap();
        let cont = BinsParams::uniform(0.3, 1.0).unwrap();
        assert_eq!(bound_binary_noisy(&w, &bin, 0.6, &dev).unwrap(), bound_binary_noiseless(&w, &bin, 0.6).unwrap());
        assert_eq!(bound_continuous_noisy(&w, &cont, 0.2, &dev).unwrap(), bound_continuous_noiseless(&w, &cont, 0.2).unwrap());
    }

    #[test]
    fn continuous_bound_tends_to_one() {
        let w = hand();
        let params = BinsParams::uniform(0.2, 1.0).unwrap();
        let far = bound_continuous_noiseless(&w, &params, 50.0).unwrap();
        assert_abs_diff_eq!(far, 1.0, epsilon = 1e-12);
        let mut prev = f64::NEG_INFINITY;
        for k in 0..20 {
            let b = bound_continuous_noiseless(&w, &params, k as f64 * 0.1).unwrap();
            assert!(b >= prev);
            prev = b;
        }
    }

    #[test]
    fn domain_errors() {
        let w = hand();
        let bin = BinsParams::binary(0.1).unwrap();
        assert!(bound_binary_noiseless(&w, &bin, 0.0).is_err());
        assert!(bound_binary_noiseless(&w, &bin, 1.0).is_err());
        assert!(bound_continuous_noiseless(&w, &bin, -0.1).is_err());
        assert!(bound_binary_noiseless(&w, &BinsParams::uniform(0.1, 1.0).unwrap(), 0.5).is_err());
        assert!(bound_binary_noisy(&w, &bin, 0.5, &Array1::zeros(3)).is_err());
        let cfg = RecoveryConfig::default_for(Activation::Sigmoid);
        assert!(empirical_recovery_prob(&w, &BinsParams::uniform(0.1, 1.0).unwrap(), &cfg, &[0.5], 10, 0, None).is_err());
    }

    #[test]
    fn exact_recovery_has_unit_empirical_probability() {
        let w = gen_orthogonalized_gaussian(10, 10, 2).unwrap();
        let params = BinsParams::uniform(0.3, 1.0).unwrap();
        let cfg = RecoveryConfig::default_for(Activation::Relu);
        let grid: Vec<f64> = (1..=5).map(|k| k as f64 * 0.01).collect();
        let report = empirical_recovery_prob(&w, &params, &cfg, &grid, 500, 3, None).unwrap();
        assert!(report.empirical.iter().all(|&p| p == 1.0));
        assert!(report.theoretical.iter().all(|&p| p == 1.0));
    }

    #[test]
    fn empirical_cdf_is_monotone_and_csv_has_header() {
        let w = hand();
        let params = BinsParams::binary(0.1).unwrap();
        let cfg = RecoveryConfig::default_for(Activation::Sigmoid);
        let grid: Vec<f64> = (1..20).map(|k| k as f64 / 20.0).collect();
        let report = empirical_recovery_prob(&w, &params, &cfg, &grid, 2000, 1, Some(NoiseSpec::new(5.0, 0.1).unwrap())).unwrap();
        assert!(report.empirical.windows(2).all(|p| p[0] <= p[1]));
        assert!(report.empirical.iter().all(|&p| (0.0..=1.0).contains(&p)));
        let mut buf = Vec::new();
        report.write_csv(&mut buf, true).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("delta,theoretical,empirical,n_samples,mode\n"));
        assert_eq!(text.lines().count(), grid.len() + 1);
        assert!(text.ends_with("binary_noisy\n"));
    }
}
