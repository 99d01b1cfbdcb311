//! Experiment harness: parameter schemas, grid runners, CSV and manifest
//! output.
//!
//! Every random quantity is seeded from the run seed, a role label and a
//! cell index, so results do not depend on thread scheduling and reruns
//! with the same spec write byte-identical CSVs.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use ndarray::Array1;
use rayon::prelude::*;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::bounds::{empirical_recovery_prob, BoundReport};
use crate::datagen::{column_mean, generate_data, NoiseSpec};
use crate::dictionary::{coherence, welch_bound, Dictionary, Generator};
use crate::dictlearn::{greedy_match, matched_apre, train_autoencoder, TrainActivation, TrainConfig};
use crate::error::{invalid, Result};
use crate::io::{save_dictionary, save_json};
use crate::metrics::{apre, ApreConfig};
use crate::recovery::{activate, analytic_data_mean, binarize, project, recover_final, Activation, RecoveryConfig};
use crate::rng::derive_seed;
use crate::signals::{sample_signals, BinsParams};

/// Version string written to manifests.
pub fn version_string() -> String {
    option_env!("AESR_GIT_DESCRIBE").map_or_else(|| format!("v{}", env!("CARGO_PKG_VERSION")), str::to_string)
}

const ROLE_DICT: u64 = 1;
const ROLE_SIGNALS: u64 = 2;
const ROLE_NOISE: u64 = 3;
const ROLE_TRAIN: u64 = 4;
const ROLE_BOUNDS: u64 = 5;

fn seed_for(seed: u64, role: u64, cell: u64) -> u64 {
    derive_seed(derive_seed(seed, role), cell)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SignalType {
    Continuous,
    Binary,
}

impl SignalType {
    pub const BOTH: [SignalType; 2] = [SignalType::Continuous, SignalType::Binary];

    pub fn name(self) -> &'static str {
        match self {
            SignalType::Continuous => "continuous",
            SignalType::Binary => "binary",
        }
    }

    /// Uniform `(0, l_max]` or binary signals with activation probability `p`.
    pub fn params(self, p: f64, l_max: f64) -> Result<BinsParams> {
        match self {
            SignalType::Continuous => BinsParams::uniform(p, l_max),
            SignalType::Binary => BinsParams::binary(p),
        }
    }

    pub fn activation(self) -> Activation {
        match self {
            SignalType::Continuous => Activation::Relu,
            SignalType::Binary => Activation::Sigmoid,
        }
    }

    fn train_activation(self) -> TrainActivation {
        match self {
            SignalType::Continuous => TrainActivation::Relu,
            SignalType::Binary => TrainActivation::SaturatedSigmoid,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    Heatmap,
    NoiseSweep,
    SparsitySweep,
    CoherenceSweep,
    DictRecovery,
    BoundsCheck,
}

impl ExperimentKind {
    pub fn name(self) -> &'static str {
        match self {
            ExperimentKind::Heatmap => "heatmap",
            ExperimentKind::NoiseSweep => "noise-sweep",
            ExperimentKind::SparsitySweep => "sparsity-sweep",
            ExperimentKind::CoherenceSweep => "coherence-sweep",
            ExperimentKind::DictRecovery => "dict-recovery",
            ExperimentKind::BoundsCheck => "bounds-check",
        }
    }
}

/// Command-line size overrides for scaled-down runs.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Overrides {
    pub m: Option<usize>,
    pub n: Option<usize>,
    pub samples: Option<usize>,
}

/// A fully described run. `parameters` is validated against the kind's
/// schema before any computation starts.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSpec {
    pub kind: ExperimentKind,
    #[serde(default = "empty_object")]
    pub parameters: serde_json::Value,
    #[serde(default)]
    pub seed: u64,
    pub output_dir: PathBuf,
}

fn empty_object() -> serde_json::Value {
    serde_json::Value::Object(Default::default())
}

fn linspace(lo: f64, hi: f64, steps: usize) -> Vec<f64> {
    if steps == 1 {
        return vec![lo];
    }
    let last = (steps - 1) as f64;
    (0..steps).map(|k| (lo * (last - k as f64) + hi * k as f64) / last).collect()
}

fn logspace(lo: f64, hi: f64, steps: usize) -> Vec<f64> {
    linspace(lo.log10(), hi.log10(), steps).into_iter().map(|e| 10f64.powf(e)).collect()
}

fn check_sizes(m: usize, n: usize, samples: usize) -> Result<()> {
    if m == 0 || n == 0 || samples == 0 {
        return Err(invalid("m, n and samples must all be positive"));
    }
    Ok(())
}

fn check_p(p: f64) -> Result<()> {
    if !(p > 0.0 && p < 1.0) {
        return Err(invalid(format!("p must lie strictly inside (0, 1), got {p}")));
    }
    Ok(())
}

fn recovery_apre(
    w: &Dictionary,
    params: &BinsParams,
    signal: SignalType,
    samples: usize,
    noise: Option<NoiseSpec>,
    signal_seed: u64,
    noise_seed: u64,
) -> Result<f64> {
    let h = sample_signals(params, w.m(), samples, signal_seed)?;
    let x = generate_data(w, &h, &Array1::zeros(w.n()), 1.0, noise, noise_seed)?;
    let mean = column_mean(x.x.view())?;
    let est = recover_final(w, &x, &mean, params, &RecoveryConfig::default_for(signal.activation()))?;
    apre(&h.values, &est, &ApreConfig::for_params(params, w.m())?)
}

// ---------------------------------------------------------------- heatmap

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HeatmapParams {
    pub m: usize,
    pub n: usize,
    pub p: f64,
    pub l_max: f64,
    pub samples: usize,
    pub c_min: f64,
    pub c_max: f64,
    pub c_steps: usize,
    pub delta_b_min: f64,
    pub delta_b_max: f64,
    pub delta_b_steps: usize,
}

impl Default for HeatmapParams {
    fn default() -> Self {
        HeatmapParams {
            m: 200,
            n: 180,
            p: 0.02,
            l_max: 1.0,
            samples: 5000,
            c_min: 0.1,
            c_max: 2.0,
            c_steps: 20,
            delta_b_min: -1.0,
            delta_b_max: 1.0,
            delta_b_steps: 21,
        }
    }
}

impl HeatmapParams {
    pub fn validate(&self) -> Result<()> {
        check_sizes(self.m, self.n, self.samples)?;
        check_p(self.p)?;
        if self.c_steps < 2 || self.delta_b_steps < 2 {
            return Err(invalid("heatmap grids need at least 2 points per axis"));
        }
        if !(self.c_min > 0.0 && self.c_max > self.c_min) || !(self.delta_b_max > self.delta_b_min) {
            return Err(invalid("heatmap ranges must be increasing with c > 0"));
        }
        Ok(())
    }

    pub fn c_grid(&self) -> Vec<f64> {
        linspace(self.c_min, self.c_max, self.c_steps)
    }

    pub fn delta_b_grid(&self) -> Vec<f64> {
        linspace(self.delta_b_min, self.delta_b_max, self.delta_b_steps)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HeatmapRow {
    pub signal_type: String,
    pub dict_type: String,
    pub c: f64,
    pub delta_b: f64,
    pub apre: f64,
}

/// Lowest-APRE cell of one heatmap. Ties go to the first cell in grid order
/// (c ascending, then delta_b ascending); `n_minimizers` counts them.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HeatmapArgmin {
    pub signal_type: String,
    pub dict_type: String,
    pub c: f64,
    pub delta_b: f64,
    pub apre: f64,
    pub n_minimizers: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct HeatmapResult {
    pub rows: Vec<HeatmapRow>,
    pub argmin: Vec<HeatmapArgmin>,
}

impl HeatmapResult {
    /// Rows of one `(signal_type, dict_type)` panel, in grid order.
    pub fn panel(&self, signal_type: &str, dict_type: &str) -> Vec<&HeatmapRow> {
        self.rows.iter().filter(|r| r.signal_type == signal_type && r.dict_type == dict_type).collect()
    }
}

pub const HEATMAP_DICTS: [Generator; 2] = [Generator::OrthogonalizedGaussian, Generator::CoherentUniform];

/// APRE over the `(c, delta_b)` grid for both signal types and both
/// dictionaries. Data are generated with unit scale; `c` and `delta_b` only
/// enter the encoder, and the analytic data mean is subtracted.
pub fn heatmap(params: &HeatmapParams, seed: u64) -> Result<HeatmapResult> {
    params.validate()?;
    let cs = params.c_grid();
    let dbs = params.delta_b_grid();
    let mut rows = Vec::new();
    let mut argmin = Vec::new();
    for (si, signal) in SignalType::BOTH.into_iter().enumerate() {
        let bins = signal.params(params.p, params.l_max)?;
        let h = sample_signals(&bins, params.m, params.samples, seed_for(seed, ROLE_SIGNALS, si as u64))?;
        let apre_cfg = ApreConfig::for_params(&bins, params.m)?;
        for (di, gen) in HEATMAP_DICTS.into_iter().enumerate() {
            let w = Dictionary::generate(gen, params.m, params.n, seed_for(seed, ROLE_DICT, di as u64))?;
            let x = generate_data(&w, &h, &Array1::zeros(params.n), 1.0, None, 0)?;
            let z = project(&w, &x, &analytic_data_mean(&w, &bins, 1.0)?)?;
            let cells: Vec<(f64, f64)> = cs.iter().flat_map(|&c| dbs.iter().map(move |&d| (c, d))).collect();
            let values: Vec<f64> = cells
                .par_iter()
                .map(|&(c, d)| {
                    let cfg = RecoveryConfig::default_for(signal.activation()).with_scale(c)?.with_delta_b(d)?;
                    let mut est = activate(&z, &bins, &cfg)?;
                    if signal == SignalType::Binary {
                        est = binarize(&est, cfg.binarize_threshold)?;
                    }
                    apre(&h.values, &est, &apre_cfg)
                })
                .collect::<Result<_>>()?;
            let best = values.iter().copied().fold(f64::INFINITY, f64::min);
            let first = values.iter().position(|&v| v == best).expect("non-empty grid");
            argmin.push(HeatmapArgmin {
                signal_type: signal.name().into(),
                dict_type: gen.name().into(),
                c: cells[first].0,
                delta_b: cells[first].1,
                apre: best,
                n_minimizers: values.iter().filter(|&&v| v == best).count(),
            });
            for (&(c, delta_b), apre) in cells.iter().zip(values) {
                rows.push(HeatmapRow { signal_type: signal.name().into(), dict_type: gen.name().into(), c, delta_b, apre });
            }
        }
    }
    Ok(HeatmapResult { rows, argmin })
}

// ------------------------------------------------------------ noise sweep

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoiseSweepParams {
    pub m: usize,
    pub n: usize,
    pub p: f64,
    pub l_max: f64,
    pub samples: usize,
    pub noise_mean: f64,
    pub std_min: f64,
    pub std_max: f64,
    pub std_steps: usize,
}

impl Default for NoiseSweepParams {
    fn default() -> Self {
        NoiseSweepParams {
            m: 200,
            n: 180,
            p: 0.02,
            l_max: 1.0,
            samples: 5000,
            noise_mean: 100.0,
            std_min: 0.001,
            std_max: 1.0,
            std_steps: 10,
        }
    }
}

impl NoiseSweepParams {
    pub fn validate(&self) -> Result<()> {
        check_sizes(self.m, self.n, self.samples)?;
        check_p(self.p)?;
        if !(self.std_min > 0.0 && self.std_max >= self.std_min) || self.std_steps == 0 {
            return Err(invalid("noise std range must be positive and increasing"));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoiseSweepRow {
    pub signal_type: String,
    pub noise_std: f64,
    pub apre: f64,
}

/// APRE against noise level at `c = 1`, `delta_b = 0` with the empirical
/// data mean. Signals and the standard-normal noise draws are shared across
/// the std grid.
pub fn noise_sweep(params: &NoiseSweepParams, seed: u64) -> Result<Vec<NoiseSweepRow>> {
    params.validate()?;
    let w = Dictionary::generate(Generator::OrthogonalizedGaussian, params.m, params.n, seed_for(seed, ROLE_DICT, 0))?;
    let stds = logspace(params.std_min, params.std_max, params.std_steps);
    let cells: Vec<(usize, SignalType, f64)> =
        SignalType::BOTH.into_iter().enumerate().flat_map(|(si, s)| stds.iter().map(move |&std| (si, s, std))).collect();
    cells
        .par_iter()
        .map(|&(si, signal, std)| {
            let bins = signal.params(params.p, params.l_max)?;
            let apre = recovery_apre(
                &w,
                &bins,
                signal,
                params.samples,
                Some(NoiseSpec::new(params.noise_mean, std)?),
                seed_for(seed, ROLE_SIGNALS, si as u64),
                seed_for(seed, ROLE_NOISE, si as u64),
            )?;
            Ok(NoiseSweepRow { signal_type: signal.name().into(), noise_std: std, apre })
        })
        .collect()
}

// --------------------------------------------------------- sparsity sweep

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoiseSetting {
    pub mean: f64,
    pub std: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SparsitySweepParams {
    pub m: usize,
    pub n: usize,
    pub l_max: f64,
    pub samples: usize,
    pub p_grid: Vec<f64>,
    /// Noisy settings swept in addition to the noiseless one.
    pub noise: Vec<NoiseSetting>,
}

impl Default for SparsitySweepParams {
    fn default() -> Self {
        SparsitySweepParams {
            m: 200,
            n: 180,
            l_max: 1.0,
            samples: 5000,
            p_grid: vec![0.02, 0.05, 0.1, 0.15, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.85, 0.9, 0.95, 0.98],
            noise: vec![NoiseSetting { mean: 100.0, std: 0.05 }, NoiseSetting { mean: 0.0, std: 0.05 }],
        }
    }
}

impl SparsitySweepParams {
    pub fn validate(&self) -> Result<()> {
        check_sizes(self.m, self.n, self.samples)?;
        if self.p_grid.is_empty() {
            return Err(invalid("p grid is empty"));
        }
        self.p_grid.iter().try_for_each(|&p| check_p(p))?;
        for s in &self.noise {
            NoiseSpec::new(s.mean, s.std)?;
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SparsitySweepRow {
    pub signal_type: String,
    pub generator: String,
    pub noise: String,
    pub p: f64,
    pub apre: f64,
}

pub const SPARSITY_GENERATORS: [Generator; 2] = [Generator::PlainGaussian, Generator::OrthogonalizedGaussian];

/// Label used in the `noise` column: `none` or `gaussian_<mean>_<std>`.
pub fn noise_label(noise: Option<&NoiseSetting>) -> String {
    match noise {
        None => "none".into(),
        Some(s) => format!("gaussian_{}_{}", s.mean, s.std),
    }
}

/// APRE against activation probability. Signals and noise draws are shared
/// across generators and noise settings at each `p`.
pub fn sparsity_sweep(params: &SparsitySweepParams, seed: u64) -> Result<Vec<SparsitySweepRow>> {
    params.validate()?;
    let dicts: Vec<Dictionary> = SPARSITY_GENERATORS
        .iter()
        .enumerate()
        .map(|(gi, &g)| Dictionary::generate(g, params.m, params.n, seed_for(seed, ROLE_DICT, gi as u64)))
        .collect::<Result<_>>()?;
    let mut noises: Vec<Option<&NoiseSetting>> = vec![None];
    noises.extend(params.noise.iter().map(Some));
    let mut cells = Vec::new();
    for (si, signal) in SignalType::BOTH.into_iter().enumerate() {
        for gi in 0..dicts.len() {
            for &noise in &noises {
                for (pi, &p) in params.p_grid.iter().enumerate() {
                    cells.push((si, signal, gi, noise, pi, p));
                }
            }
        }
    }
    cells
        .par_iter()
        .map(|&(si, signal, gi, noise, pi, p)| {
            let bins = signal.params(p, params.l_max)?;
            let cell = (si * params.p_grid.len() + pi) as u64;
            let spec = noise.map(|s| NoiseSpec::new(s.mean, s.std)).transpose()?;
            let apre = recovery_apre(
                &dicts[gi],
                &bins,
                signal,
                params.samples,
                spec,
                seed_for(seed, ROLE_SIGNALS, cell),
                seed_for(seed, ROLE_NOISE, cell),
            )?;
            Ok(SparsitySweepRow {
                signal_type: signal.name().into(),
                generator: SPARSITY_GENERATORS[gi].name().into(),
                noise: noise_label(noise),
                p,
                apre,
            })
        })
        .collect()
}

// -------------------------------------------------------- coherence sweep

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CoherenceSweepParams {
    pub m: usize,
    pub n_min: usize,
    pub n_max: usize,
    pub n_step: usize,
    pub seeds: usize,
}

impl Default for CoherenceSweepParams {
    fn default() -> Self {
        CoherenceSweepParams { m: 200, n_min: 100, n_max: 300, n_step: 20, seeds: 5 }
    }
}

impl CoherenceSweepParams {
    pub fn validate(&self) -> Result<()> {
        if self.m < 2 || self.n_min == 0 || self.n_max < self.n_min || self.n_step == 0 || self.seeds == 0 {
            return Err(invalid("coherence sweep needs m >= 2, 0 < n_min <= n_max, n_step >= 1, seeds >= 1"));
        }
        Ok(())
    }

    pub fn n_grid(&self) -> Vec<usize> {
        (self.n_min..=self.n_max).step_by(self.n_step).collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoherenceRow {
    pub generator: String,
    pub n: usize,
    pub seed: u64,
    pub coherence: f64,
}

/// Coherence of both Gaussian generators over a range of data dimensions.
/// Both generators share the Gaussian draw for a given `(n, seed)`.
pub fn coherence_sweep(params: &CoherenceSweepParams, seed: u64) -> Result<Vec<CoherenceRow>> {
    params.validate()?;
    let mut cells = Vec::new();
    for g in [Generator::OrthogonalizedGaussian, Generator::PlainGaussian] {
        for n in params.n_grid() {
            for s in 0..params.seeds as u64 {
                cells.push((g, n, s));
            }
        }
    }
    cells
        .par_iter()
        .map(|&(g, n, s)| {
            let dseed = seed_for(seed, ROLE_DICT, n as u64 * 1_000_003 + s);
            let w = Dictionary::generate(g, params.m, n, dseed)?;
            Ok(CoherenceRow { generator: g.name().into(), n, seed: s, coherence: coherence(&w)? })
        })
        .collect()
}

/// Welch bound for a sweep row, when defined (`n < m`).
pub fn welch_for(m: usize, n: usize) -> Option<f64> {
    welch_bound(m, n).ok()
}

// ----------------------------------------------------- dictionary recovery

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DictRecoveryParams {
    pub m: usize,
    pub n: usize,
    pub p: f64,
    pub l_max: f64,
    pub samples: usize,
    pub noise_mean: f64,
    /// Noise standard deviations; 0 means clean data.
    pub noise_stds: Vec<f64>,
    pub signal_types: Vec<SignalType>,
    pub learning_rate: Option<f64>,
    pub lr_decay: Option<f64>,
    pub epochs: Option<usize>,
    pub batch_size: Option<usize>,
}

impl Default for DictRecoveryParams {
    fn default() -> Self {
        DictRecoveryParams {
            m: 200,
            n: 180,
            p: 0.02,
            l_max: 1.0,
            samples: 50_000,
            noise_mean: 100.0,
            noise_stds: vec![0.0, 0.01, 0.02, 0.05, 0.1, 0.2],
            signal_types: SignalType::BOTH.to_vec(),
            learning_rate: None,
            lr_decay: None,
            epochs: None,
            batch_size: None,
        }
    }
}

impl DictRecoveryParams {
    pub fn validate(&self) -> Result<()> {
        check_sizes(self.m, self.n, self.samples)?;
        check_p(self.p)?;
        if self.noise_stds.iter().any(|&s| !(s >= 0.0)) {
            return Err(invalid("noise stds must be >= 0"));
        }
        for s in SignalType::BOTH {
            self.train_config(s, 0).validate()?;
        }
        Ok(())
    }

    pub fn train_config(&self, signal: SignalType, seed: u64) -> TrainConfig {
        let mut cfg = TrainConfig::defaults_for(signal.train_activation());
        if let Some(v) = self.learning_rate {
            cfg.learning_rate = v;
        }
        if let Some(v) = self.lr_decay {
            cfg.lr_decay = v;
        }
        if let Some(v) = self.epochs {
            cfg.epochs = v;
        }
        if let Some(v) = self.batch_size {
            cfg.batch_size = v;
        }
        cfg.seed = seed;
        cfg
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DictRecoveryRow {
    pub signal_type: String,
    pub noise_std: f64,
    pub cosine_p5: f64,
    pub cosine_p50: f64,
    pub cosine_p95: f64,
    pub matched_apre: f64,
}

/// One training run with its learned dictionary.
#[derive(Clone, Debug)]
pub struct TrainingRecord {
    pub row: DictRecoveryRow,
    pub config: TrainConfig,
    pub initial_loss: f64,
    pub epoch_loss: Vec<f64>,
    pub fraction_cos_099: f64,
    pub wall_time_secs: f64,
    pub learned: Dictionary,
}

#[derive(Serialize)]
struct RunRecord<'a> {
    signal_type: &'a str,
    noise_std: f64,
    config: &'a TrainConfig,
    initial_loss: f64,
    epoch_loss: &'a [f64],
    fraction_cos_099: f64,
    wall_time_secs: f64,
}

/// Trains one auto-encoder per `(signal type, noise std)` and scores it
/// against the generating dictionary. The true dictionary and signals are
/// shared across noise levels; the standard-normal noise draws too.
pub fn dict_recovery(params: &DictRecoveryParams, seed: u64) -> Result<(Vec<DictRecoveryRow>, Vec<TrainingRecord>)> {
    params.validate()?;
    let w_true = Dictionary::generate(Generator::OrthogonalizedGaussian, params.m, params.n, seed_for(seed, ROLE_DICT, 0))?;
    let mut rows = Vec::new();
    let mut records = Vec::new();
    for &signal in &params.signal_types {
        let si = signal as u64;
        let bins = signal.params(params.p, params.l_max)?;
        let h = sample_signals(&bins, params.m, params.samples, seed_for(seed, ROLE_SIGNALS, si))?;
        for &std in &params.noise_stds {
            let noise = if std > 0.0 { Some(NoiseSpec::new(params.noise_mean, std)?) } else { None };
            let x = generate_data(&w_true, &h, &Array1::zeros(params.n), 1.0, noise, seed_for(seed, ROLE_NOISE, si))?;
            let cfg = params.train_config(signal, seed_for(seed, ROLE_TRAIN, si));
            let out = train_autoencoder(&x, params.m, &cfg)?;
            let matching = greedy_match(&w_true, &out.dictionary)?;
            let score = matched_apre(
                &w_true,
                &out.dictionary,
                &matching,
                &h,
                &x,
                &bins,
                &RecoveryConfig::default_for(signal.activation()),
            )?;
            let row = DictRecoveryRow {
                signal_type: signal.name().into(),
                noise_std: std,
                cosine_p5: matching.percentiles.p5,
                cosine_p50: matching.percentiles.p50,
                cosine_p95: matching.percentiles.p95,
                matched_apre: score,
            };
            rows.push(row.clone());
            records.push(TrainingRecord {
                row,
                config: cfg,
                initial_loss: out.initial_loss,
                epoch_loss: out.epoch_loss,
                fraction_cos_099: matching.fraction_at_least(0.99),
                wall_time_secs: out.wall_time_secs,
                learned: out.dictionary,
            });
        }
    }
    Ok((rows, records))
}

// ------------------------------------------------------------ bounds check

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BoundsCheckParams {
    pub m: usize,
    pub n: usize,
    pub p: f64,
    /// Activation probability for the small hand-built matrix.
    pub hand_p: f64,
    pub l_max: f64,
    pub samples: usize,
    pub noise_mean: f64,
    pub noise_std: f64,
    pub grid_points: usize,
    /// Continuous grid is `0, step, 2 step, ...`.
    pub continuous_delta_step: f64,
}

impl Default for BoundsCheckParams {
    fn default() -> Self {
        BoundsCheckParams {
            m: 200,
            n: 180,
            p: 0.02,
            hand_p: 0.2,
            l_max: 1.0,
            samples: 10_000,
            noise_mean: 100.0,
            noise_std: 0.01,
            grid_points: 20,
            continuous_delta_step: 0.05,
        }
    }
}

impl BoundsCheckParams {
    pub fn validate(&self) -> Result<()> {
        check_sizes(self.m, self.n, self.samples)?;
        check_p(self.p)?;
        check_p(self.hand_p)?;
        NoiseSpec::new(self.noise_mean, self.noise_std)?;
        if self.grid_points == 0 || !(self.continuous_delta_step > 0.0) {
            return Err(invalid("bounds grid needs at least one point and a positive step"));
        }
        Ok(())
    }

    /// Evenly spaced midpoints inside `(0, 1)`.
    pub fn binary_grid(&self) -> Vec<f64> {
        let k = self.grid_points as f64;
        (0..self.grid_points).map(|i| (i as f64 + 0.5) / k).collect()
    }

    pub fn continuous_grid(&self) -> Vec<f64> {
        (0..self.grid_points).map(|i| i as f64 * self.continuous_delta_step).collect()
    }
}

/// The fixed 3 x 2 matrix used as a small bounds case.
pub fn hand_matrix() -> Dictionary {
    Dictionary::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0], vec![0.6, 0.8]]).expect("valid rows")
}

/// Reports for all four modes on one dictionary.
#[derive(Clone, Debug)]
pub struct BoundsCase {
    pub name: String,
    pub reports: Vec<BoundReport>,
}

/// Theoretical vs Monte-Carlo recovery probability for the incoherent and
/// coherent dictionaries of the heatmap configuration and the hand matrix.
pub fn bounds_check(params: &BoundsCheckParams, seed: u64) -> Result<Vec<BoundsCase>> {
    params.validate()?;
    let cases: Vec<(&str, Dictionary, f64)> = vec![
        (
            "incoherent",
            Dictionary::generate(Generator::OrthogonalizedGaussian, params.m, params.n, seed_for(seed, ROLE_DICT, 0))?,
            params.p,
        ),
        (
            "coherent",
            Dictionary::generate(Generator::CoherentUniform, params.m, params.n, seed_for(seed, ROLE_DICT, 1))?,
            params.p,
        ),
        ("hand_3x2", hand_matrix(), params.hand_p),
    ];
    let noise = NoiseSpec::new(params.noise_mean, params.noise_std)?;
    cases
        .into_iter()
        .enumerate()
        .map(|(ci, (name, w, p))| {
            let mut reports = Vec::new();
            for (si, signal) in SignalType::BOTH.into_iter().enumerate() {
                let bins = signal.params(p, params.l_max)?;
                let grid = match signal {
                    SignalType::Binary => params.binary_grid(),
                    SignalType::Continuous => params.continuous_grid(),
                };
                for (ni, noise) in [None, Some(noise)].into_iter().enumerate() {
                    let cell = (ci * 4 + si * 2 + ni) as u64;
                    reports.push(empirical_recovery_prob(
                        &w,
                        &bins,
                        &RecoveryConfig::default_for(signal.activation()),
                        &grid,
                        params.samples,
                        seed_for(seed, ROLE_BOUNDS, cell),
                        noise,
                    )?);
                }
            }
            Ok(BoundsCase { name: name.into(), reports })
        })
        .collect()
}

// ---------------------------------------------------------------- running

fn parse_params<T: DeserializeOwned + Default>(value: &serde_json::Value) -> Result<T> {
    if value.is_null() {
        return Ok(T::default());
    }
    Ok(serde_json::from_value(value.clone())?)
}

fn write_rows<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut wtr = csv::Writer::from_path(path)?;
    for row in rows {
        wtr.serialize(row)?;
    }
    wtr.flush()?;
    Ok(())
}

#[derive(Serialize)]
struct Manifest<'a, P: Serialize> {
    kind: ExperimentKind,
    parameters: &'a P,
    seed: u64,
    seeds: Vec<(&'static str, u64)>,
    version: String,
    wall_time_secs: f64,
    outputs: &'a [String],
}

/// Files written by one run, relative to the output directory.
#[derive(Clone, Debug, PartialEq)]
pub struct RunSummary {
    pub kind: ExperimentKind,
    pub output_dir: PathBuf,
    pub outputs: Vec<String>,
    pub wall_time_secs: f64,
}

fn role_seeds(seed: u64) -> Vec<(&'static str, u64)> {
    vec![
        ("dictionary", derive_seed(seed, ROLE_DICT)),
        ("signals", derive_seed(seed, ROLE_SIGNALS)),
        ("noise", derive_seed(seed, ROLE_NOISE)),
        ("training", derive_seed(seed, ROLE_TRAIN)),
        ("bounds", derive_seed(seed, ROLE_BOUNDS)),
    ]
}

macro_rules! with_params {
    ($spec:expr, $overrides:expr, $ty:ty, |$p:ident| $body:expr) => {{
        let mut $p: $ty = parse_params(&$spec.parameters)?;
        $p.apply($overrides);
        $p.validate()?;
        $body
    }};
}

trait ApplyOverrides {
    fn apply(&mut self, o: &Overrides);
}

macro_rules! sized_overrides {
    ($($ty:ty),*) => {$(
        impl ApplyOverrides for $ty {
            fn apply(&mut self, o: &Overrides) {
                if let Some(m) = o.m { self.m = m; }
                if let Some(n) = o.n { self.n = n; }
                if let Some(s) = o.samples { self.samples = s; }
            }
        }
    )*};
}

sized_overrides!(HeatmapParams, NoiseSweepParams, SparsitySweepParams, DictRecoveryParams, BoundsCheckParams);

impl ApplyOverrides for CoherenceSweepParams {
    fn apply(&mut self, o: &Overrides) {
        if let Some(m) = o.m {
            self.m = m;
        }
        if let Some(n) = o.n {
            self.n_min = n;
            self.n_max = n;
        }
    }
}

/// Validates the spec, runs it and writes CSVs plus `manifest.json` into
/// `spec.output_dir`.
pub fn run_experiment(spec: &ExperimentSpec, overrides: &Overrides) -> Result<RunSummary> {
    let started = Instant::now();
    let dir = &spec.output_dir;
    let seed = spec.seed;
    // Parse and validate before touching the file system.
    let (outputs, params_json): (Vec<String>, serde_json::Value) = match spec.kind {
        ExperimentKind::Heatmap => with_params!(spec, overrides, HeatmapParams, |p| {
            fs::create_dir_all(dir)?;
            let res = heatmap(&p, seed)?;
            write_rows(&dir.join("heatmap.csv"), &res.rows)?;
            write_rows(&dir.join("heatmap_argmin.csv"), &res.argmin)?;
            (vec!["heatmap.csv".into(), "heatmap_argmin.csv".into()], serde_json::to_value(&p)?)
        }),
        ExperimentKind::NoiseSweep => with_params!(spec, overrides, NoiseSweepParams, |p| {
            fs::create_dir_all(dir)?;
            write_rows(&dir.join("noise_sweep.csv"), &noise_sweep(&p, seed)?)?;
            (vec!["noise_sweep.csv".into()], serde_json::to_value(&p)?)
        }),
        ExperimentKind::SparsitySweep => with_params!(spec, overrides, SparsitySweepParams, |p| {
            fs::create_dir_all(dir)?;
            write_rows(&dir.join("sparsity_sweep.csv"), &sparsity_sweep(&p, seed)?)?;
            (vec!["sparsity_sweep.csv".into()], serde_json::to_value(&p)?)
        }),
        ExperimentKind::CoherenceSweep => with_params!(spec, overrides, CoherenceSweepParams, |p| {
            fs::create_dir_all(dir)?;
            write_rows(&dir.join("coherence_sweep.csv"), &coherence_sweep(&p, seed)?)?;
            (vec!["coherence_sweep.csv".into()], serde_json::to_value(&p)?)
        }),
        ExperimentKind::DictRecovery => with_params!(spec, overrides, DictRecoveryParams, |p| {
            fs::create_dir_all(dir)?;
            let (rows, records) = dict_recovery(&p, seed)?;
            write_rows(&dir.join("dict_recovery.csv"), &rows)?;
            let mut outputs = vec!["dict_recovery.csv".to_string()];
            for rec in &records {
                let stem = format!("dict_{}_std{}", rec.row.signal_type, rec.row.noise_std);
                save_dictionary(&dir.join(format!("{stem}.csv")), &rec.learned)?;
                save_json(
                    &dir.join(format!("{stem}_run.json")),
                    &RunRecord {
                        signal_type: &rec.row.signal_type,
                        noise_std: rec.row.noise_std,
                        config: &rec.config,
                        initial_loss: rec.initial_loss,
                        epoch_loss: &rec.epoch_loss,
                        fraction_cos_099: rec.fraction_cos_099,
                        wall_time_secs: rec.wall_time_secs,
                    },
                )?;
                outputs.push(format!("{stem}.csv"));
                outputs.push(format!("{stem}_run.json"));
            }
            (outputs, serde_json::to_value(&p)?)
        }),
        ExperimentKind::BoundsCheck => with_params!(spec, overrides, BoundsCheckParams, |p| {
            fs::create_dir_all(dir)?;
            let mut outputs = Vec::new();
            for case in bounds_check(&p, seed)? {
                let name = format!("bounds_{}.csv", case.name);
                let mut file = std::io::BufWriter::new(fs::File::create(dir.join(&name))?);
                for (k, report) in case.reports.iter().enumerate() {
                    report.write_csv(&mut file, k == 0)?;
                }
                std::io::Write::flush(&mut file)?;
                outputs.push(name);
            }
            (outputs, serde_json::to_value(&p)?)
        }),
    };
    let wall_time_secs = started.elapsed().as_secs_f64();
    save_json(
        &dir.join("manifest.json"),
        &Manifest {
            kind: spec.kind,
            parameters: &params_json,
            seed,
            seeds: role_seeds(seed),
            version: version_string(),
            wall_time_secs,
            outputs: &outputs,
        },
    )?;
    Ok(RunSummary { kind: spec.kind, output_dir: dir.clone(), outputs, wall_time_secs })
}
