//! Closed-form auto-encoder signal recovery.
//!
//! The encoder is `h_hat = s(c W (x - E[x]) + beta + delta_b)` where `s` is
//! ReLU for continuous signals (with `beta_i = E[h_i]`) or the logistic
//! sigmoid for binary signals (with `beta = 0`).

use ndarray::{Array1, Array2, Axis, Zip};
use serde::{Deserialize, Serialize};

use crate::datagen::DataBatch;
use crate::dictionary::{gram_offsets, Dictionary, GramMode};
use crate::error::{dim, invalid, Result};
use crate::signals::BinsParams;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Relu,
    Sigmoid,
}

/// Encoder settings. JSON form: `{"activation", "c", "delta_b", "threshold"}`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawConfig", into = "RawConfig")]
pub struct RecoveryConfig {
    pub activation: Activation,
    pub scale_c: f64,
    pub delta_b: f64,
    /// Only used for `Sigmoid` when binarizing.
    pub binarize_threshold: f64,
}

#[derive(Serialize, Deserialize)]
struct RawConfig {
    activation: Activation,
    #[serde(default = "one")]
    c: f64,
    #[serde(default)]
    delta_b: f64,
    #[serde(default = "default_threshold")]
    threshold: f64,
}

fn one() -> f64 {
    1.0
}

fn default_threshold() -> f64 {
    RecoveryConfig::DEFAULT_THRESHOLD
}

impl TryFrom<RawConfig> for RecoveryConfig {
    type Error = crate::Error;

    fn try_from(raw: RawConfig) -> Result<Self> {
        RecoveryConfig::new(raw.activation, raw.c, raw.delta_b, raw.threshold)
    }
}

impl From<RecoveryConfig> for RawConfig {
    fn from(cfg: RecoveryConfig) -> Self {
        RawConfig { activation: cfg.activation, c: cfg.scale_c, delta_b: cfg.delta_b, threshold: cfg.binarize_threshold }
    }
}

impl RecoveryConfig {
    pub const DEFAULT_THRESHOLD: f64 = 0.55;

    pub fn new(activation: Activation, scale_c: f64, delta_b: f64, binarize_threshold: f64) -> Result<Self> {
        if !(scale_c > 0.0) || !scale_c.is_finite() {
            return Err(invalid(format!("scale c must be positive, got {scale_c}")));
        }
        if !delta_b.is_finite() {
            return Err(invalid("delta_b must be finite"));
        }
        if !(binarize_threshold > 0.0 && binarize_threshold < 1.0) {
            return Err(invalid(format!("threshold must lie in (0, 1), got {binarize_threshold}")));
        }
        Ok(RecoveryConfig { activation, scale_c, delta_b, binarize_threshold })
    }

    /// `c = 1`, `delta_b = 0`, threshold 0.55.
    pub fn default_for(activation: Activation) -> Self {
        RecoveryConfig { activation, scale_c: 1.0, delta_b: 0.0, binarize_threshold: Self::DEFAULT_THRESHOLD }
    }

    pub fn with_scale(mut self, scale_c: f64) -> Result<Self> {
        self.scale_c = scale_c;
        Self::new(self.activation, self.scale_c, self.delta_b, self.binarize_threshold)
    }

    pub fn with_delta_b(mut self, delta_b: f64) -> Result<Self> {
        self.delta_b = delta_b;
        Self::new(self.activation, self.scale_c, self.delta_b, self.binarize_threshold)
    }
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

fn check_params(w: &Dictionary, params: &BinsParams) -> Result<()> {
    params.check_dim(w.m())
}

/// Encoder bias for continuous signals: `b_i = -sum_j a_ij p_j mu_h_j` with
/// the continuous cross-talk coefficients.
pub fn theoretical_bias_continuous(w: &Dictionary, params: &BinsParams) -> Result<Array1<f64>> {
    check_params(w, params)?;
    let a = gram_offsets(w, GramMode::Continuous);
    let mean_h = params.signal_mean(w.m())?;
    Ok(-a.a.dot(&mean_h))
}

/// The same bias written through the data mean: `-W_i . E[x] + E[h_i]`.
pub fn theoretical_bias_continuous_via_mean(w: &Dictionary, params: &BinsParams) -> Result<Array1<f64>> {
    check_params(w, params)?;
    let mean_h = params.signal_mean(w.m())?;
    let mean_x = mean_h.dot(&w.weights);
    Ok(mean_h - w.weights.dot(&mean_x))
}

/// Encoder bias for binary signals: `b_i = -sum_j a_ij p_j`, diagonal
/// included.
pub fn theoretical_bias_binary(w: &Dictionary, params: &BinsParams) -> Result<Array1<f64>> {
    check_params(w, params)?;
    if !params.is_binary() {
        return Err(invalid("binary bias needs Dirac signals with l_max = 1"));
    }
    let a = gram_offsets(w, GramMode::Binary);
    Ok(-a.a.dot(&params.p_vec(w.m())))
}

/// Analytic data mean `c W^T E[h]`, the noiseless expectation of `x`.
pub fn analytic_data_mean(w: &Dictionary, params: &BinsParams, scale_c: f64) -> Result<Array1<f64>> {
    check_params(w, params)?;
    Ok(params.signal_mean(w.m())?.dot(&w.weights) * scale_c)
}

/// `s(W x + b)` for every row of `x`, with an explicit encoder bias.
pub fn encode(w: &Dictionary, x: &DataBatch, bias: &Array1<f64>, activation: Activation) -> Result<Array2<f64>> {
    if x.dim() != w.n() {
        return Err(dim(format!("data has {} columns, dictionary has {}", x.dim(), w.n())));
    }
    if bias.len() != w.m() {
        return Err(dim(format!("bias has length {}, expected {}", bias.len(), w.m())));
    }
    let mut pre = x.x.dot(&w.weights.t());
    pre += bias;
    match activation {
        Activation::Relu => pre.mapv_inplace(|z| z.max(0.0)),
        Activation::Sigmoid => pre.mapv_inplace(sigmoid),
    }
    Ok(pre)
}

/// `W (x - data_mean)` for every row: the part of the encoder that does not
/// depend on `c` or `delta_b`.
pub fn project(w: &Dictionary, x: &DataBatch, data_mean: &Array1<f64>) -> Result<Array2<f64>> {
    if x.dim() != w.n() {
        return Err(dim(format!("data has {} columns, dictionary has {}", x.dim(), w.n())));
    }
    if data_mean.len() != w.n() {
        return Err(dim(format!("data mean has length {}, expected {}", data_mean.len(), w.n())));
    }
    let centered = &x.x - data_mean;
    Ok(centered.dot(&w.weights.t()))
}

/// Finishes the encoder on a projection from [`project`].
pub fn activate(projection: &Array2<f64>, params: &BinsParams, cfg: &RecoveryConfig) -> Result<Array2<f64>> {
    let m = projection.ncols();
    params.check_dim(m)?;
    let mut out = projection * cfg.scale_c;
    match cfg.activation {
        Activation::Relu => {
            let offset = params.signal_mean(m)? + cfg.delta_b;
            Zip::from(out.rows_mut()).for_each(|mut row| {
                Zip::from(&mut row).and(&offset).for_each(|z, &o| *z = (*z + o).max(0.0));
            });
        }
        Activation::Sigmoid => out.mapv_inplace(|z| sigmoid(z + cfg.delta_b)),
    }
    Ok(out)
}

/// Closed-form recovery of the hidden signals behind `x`.
///
/// `data_mean` is the mean subtracted before projecting: the analytic
/// `W^T E[h]` when the generating process is known, or the empirical batch
/// mean when only data are observed. Sigmoid outputs are left unbinarized.
pub fn recover(
    w: &Dictionary,
    x: &DataBatch,
    data_mean: &Array1<f64>,
    params: &BinsParams,
    cfg: &RecoveryConfig,
) -> Result<Array2<f64>> {
    check_params(w, params)?;
    activate(&project(w, x, data_mean)?, params, cfg)
}

/// Maps each entry to 1 when it is at least `threshold`, else 0.
pub fn binarize(estimate: &Array2<f64>, threshold: f64) -> Result<Array2<f64>> {
    if !(threshold > 0.0 && threshold < 1.0) {
        return Err(invalid(format!("threshold must lie in (0, 1), got {threshold}")));
    }
    if estimate.iter().any(|&v| !(0.0..=1.0).contains(&v)) {
        return Err(invalid("binarize expects entries in [0, 1]"));
    }
    Ok(estimate.mapv(|v| if v >= threshold { 1.0 } else { 0.0 }))
}

/// Recovery followed by binarization for `Sigmoid` configurations.
pub fn recover_final(
    w: &Dictionary,
    x: &DataBatch,
    data_mean: &Array1<f64>,
    params: &BinsParams,
    cfg: &RecoveryConfig,
) -> Result<Array2<f64>> {
    let est = recover(w, x, data_mean, params, cfg)?;
    match cfg.activation {
        Activation::Relu => Ok(est),
        Activation::Sigmoid => binarize(&est, cfg.binarize_threshold),
    }
}

/// Permutes estimate columns so that column `j` holds learned unit
/// `assignment[j]`.
pub fn align_columns(estimate: &Array2<f64>, assignment: &[usize]) -> Result<Array2<f64>> {
    if assignment.len() != estimate.ncols() {
        return Err(dim("assignment length differs from estimate width"));
    }
    Ok(estimate.select(Axis(1), assignment))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datagen::generate_data;
    use crate::dictionary::gen_orthogonalized_gaussian;
    use crate::signals::{sample_signals, FcKind, SignalBatch};
    use approx::assert_abs_diff_eq;
    use ndarray::array;
    use std::f64::consts::FRAC_1_SQRT_2;

    fn two_rows() -> Dictionary {
        Dictionary::from_rows(&[vec![1.0, 0.0], vec![FRAC_1_SQRT_2, FRAC_1_SQRT_2]]).unwrap()
    }

    #[test]
    fn continuous_bias_cases() {
        let w = gen_orthogonalized_gaussian(5, 5, 1).unwrap();
        let b = theoretical_bias_continuous(&w, &BinsParams::uniform(0.3, 1.0).unwrap()).unwrap();
        assert!(b.iter().all(|v| v.abs() < 1e-9));
        let w = gen_orthogonalized_gaussian(9, 4, 1).unwrap();
        let b = theoretical_bias_continuous(&w, &BinsParams::uniform(0.0, 1.0).unwrap()).unwrap();
        assert!(b.iter().all(|&v| v == 0.0));

        let params = BinsParams::new(1.0, FcKind::DiracAtLmax, 1.0).unwrap();
        let b = theoretical_bias_continuous(&two_rows(), &params).unwrap();
        assert_abs_diff_eq!(b[0], -FRAC_1_SQRT_2, epsilon = 1e-15);
        assert_abs_diff_eq!(b[1], -FRAC_1_SQRT_2, epsilon = 1e-15);
        let alt = theoretical_bias_continuous_via_mean(&two_rows(), &params).unwrap();
        assert_abs_diff_eq!(alt[0], b[0], epsilon = 1e-12);
        assert_abs_diff_eq!(alt[1], b[1], epsilon = 1e-12);
    }

    #[test]
    fn binary_bias_cases() {
        let w = gen_orthogonalized_gaussian(6, 6, 2).unwrap();
        let b = theoretical_bias_binary(&w, &BinsParams::binary(0.0).unwrap()).unwrap();
        assert!(b.iter().all(|&v| v == 0.0));
        let b = theoretical_bias_binary(&w, &BinsParams::binary(0.15).unwrap()).unwrap();
        assert!(b.iter().all(|v| (v + 0.15).abs() < 1e-9));
        let b = theoretical_bias_binary(&two_rows(), &BinsParams::binary(0.5).unwrap()).unwrap();
        assert_abs_diff_eq!(b[0], -(1.0 + FRAC_1_SQRT_2) / 2.0, epsilon = 1e-15);
        assert_abs_diff_eq!(b[1], -0.853_553_390_593_273_7, epsilon = 1e-12);
        assert!(theoretical_bias_binary(&two_rows(), &BinsParams::uniform(0.5, 1.0).unwrap()).is_err());
        assert!(theoretical_bias_binary(&two_rows(), &BinsParams::new(0.5, FcKind::DiracAtLmax, 2.0).unwrap()).is_err());
    }

    #[test]
    fn relu_recovers_exactly_with_orthonormal_rows() {
        let m = 12;
        let params = BinsParams::uniform(0.3, 1.0).unwrap();
        let w = gen_orthogonalized_gaussian(m, m, 3).unwrap();
        let h = sample_signals(&params, m, 200, 4).unwrap();
        let x = generate_data(&w, &h, &Array1::zeros(m), 1.0, None, 0).unwrap();
        let mean = analytic_data_mean(&w, &params, 1.0).unwrap();
        let est = recover(&w, &x, &mean, &params, &RecoveryConfig::default_for(Activation::Relu)).unwrap();
        for (a, b) in est.iter().zip(h.values.iter()) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-9);
        }
    }

    #[test]
    fn sigmoid_hand_case_and_binarize() {
        let w = Dictionary::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap();
        let params = BinsParams::binary(0.5).unwrap();
        let x = DataBatch::from_matrix(array![[1.0, 0.0]]);
        let est = recover(&w, &x, &array![0.5, 0.5], &params, &RecoveryConfig::default_for(Activation::Sigmoid)).unwrap();
        assert_abs_diff_eq!(est[[0, 0]], 0.622_459_331_201_854_6, epsilon = 1e-12);
        assert_abs_diff_eq!(est[[0, 1]], 0.377_540_668_798_145_4, epsilon = 1e-12);
        let bin = binarize(&est, 0.55).unwrap();
        assert_eq!(bin, array![[1.0, 0.0]]);
        assert_eq!(binarize(&bin, 0.55).unwrap(), bin);
        assert_eq!(binarize(&Array2::from_elem((2, 3), 0.55), 0.55).unwrap(), Array2::from_elem((2, 3), 1.0));
        assert!(binarize(&array![[1.2]], 0.55).is_err());
        assert!(binarize(&array![[0.2]], 1.0).is_err());
    }

    #[test]
    fn mean_input_returns_signal_mean() {
        let params = BinsParams::uniform(0.2, 1.0).unwrap();
        let w = gen_orthogonalized_gaussian(10, 6, 3).unwrap();
        let mean = array![0.3, -0.1, 0.2, 0.0, 0.5, 1.0];
        let x = DataBatch::from_matrix(mean.clone().insert_axis(Axis(0)));
        let est = recover(&w, &x, &mean, &params, &RecoveryConfig::default_for(Activation::Relu)).unwrap();
        assert!(est.iter().all(|&v| v == 0.1));
    }

    #[test]
    fn sigmoid_increases_with_delta_b() {
        let params = BinsParams::binary(0.1).unwrap();
        let w = gen_orthogonalized_gaussian(20, 15, 3).unwrap();
        let h = sample_signals(&params, 20, 30, 1).unwrap();
        let x = generate_data(&w, &h, &Array1::zeros(15), 1.0, None, 0).unwrap();
        let mean = analytic_data_mean(&w, &params, 1.0).unwrap();
        let cfg = RecoveryConfig::default_for(Activation::Sigmoid);
        let lo = recover(&w, &x, &mean, &params, &cfg.with_delta_b(-0.3).unwrap()).unwrap();
        let hi = recover(&w, &x, &mean, &params, &cfg.with_delta_b(0.2).unwrap()).unwrap();
        assert!(lo.iter().zip(hi.iter()).all(|(a, b)| a < b));
    }

    #[test]
    fn dimension_errors() {
        let w = two_rows();
        let x = DataBatch::from_matrix(Array2::zeros((3, 3)));
        let params = BinsParams::binary(0.5).unwrap();
        let cfg = RecoveryConfig::default_for(Activation::Relu);
        assert!(recover(&w, &x, &Array1::zeros(3), &params, &cfg).is_err());
        let x = DataBatch::from_matrix(Array2::zeros((3, 2)));
        assert!(recover(&w, &x, &Array1::zeros(3), &params, &cfg).is_err());
        let wrong = BinsParams::new(vec![0.1, 0.2, 0.3], FcKind::DiracAtLmax, 1.0).unwrap();
        assert!(recover(&w, &x, &Array1::zeros(2), &wrong, &cfg).is_err());
        let h = SignalBatch { values: Array2::zeros((1, 3)), params: params.clone(), seed: 0 };
        assert!(generate_data(&w, &h, &Array1::zeros(2), 1.0, None, 0).is_err());
    }

    #[test]
    fn config_validation_and_json() {
        assert!(RecoveryConfig::new(Activation::Relu, 0.0, 0.0, 0.55).is_err());
        assert!(RecoveryConfig::new(Activation::Relu, 1.0, 0.0, 1.0).is_err());
        assert!(RecoveryConfig::new(Activation::Sigmoid, 1.0, 0.0, 0.0).is_err());
        let cfg = RecoveryConfig::new(Activation::Sigmoid, 1.5, -0.25, 0.6).unwrap();
        let text = serde_json::to_string(&cfg).unwrap();
        assert_eq!(text, r#"{"activation":"sigmoid","c":1.5,"delta_b":-0.25,"threshold":0.6}"#);
        assert_eq!(serde_json::from_str::<RecoveryConfig>(&text).unwrap(), cfg);
        let d: RecoveryConfig = serde_json::from_str(r#"{"activation":"relu"}"#).unwrap();
        assert_eq!(d, RecoveryConfig::default_for(Activation::Relu));
        assert!(serde_json::from_str::<RecoveryConfig>(r#"{"activation":"relu","c":-1}"#).is_err());
    }
}
