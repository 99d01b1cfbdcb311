use ndarray::{Array1, Array2};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use aesr::bounds::{bound_binary_noisy, bound_continuous_noisy};
use aesr::datagen::generate_data;
use aesr::dictionary::{coherence, gram_offsets, welch_bound, Dictionary, GramMode, Generator};
use aesr::dictlearn::greedy_match;
use aesr::metrics::{apre, mean_l1_error, ApreConfig};
use aesr::recovery::{
    binarize, encode, theoretical_bias_binary, theoretical_bias_continuous, theoretical_bias_continuous_via_mean,
    Activation,
};
use aesr::signals::{sample_signals, BinsParams, SignalBatch};

fn generator() -> impl Strategy<Value = Generator> {
    prop_oneof![
        Just(Generator::OrthogonalizedGaussian),
        Just(Generator::PlainGaussian),
        Just(Generator::CoherentUniform),
    ]
}

fn matrix(rows: usize, cols: usize, seed: u64, lo: f64, hi: f64) -> Array2<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Array2::from_shape_fn((rows, cols), |_| rng.random_range(lo..hi))
}

fn hand() -> Dictionary {
    Dictionary::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0], vec![0.6, 0.8]]).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 48, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn generated_rows_have_unit_norm(g in generator(), m in 2usize..40, n in 1usize..40, seed in any::<u64>()) {
        let w = Dictionary::generate(g, m, n, seed).unwrap();
        prop_assert!(w.max_row_norm_error() <= 1e-9);
    }

    #[test]
    fn gram_offsets_are_symmetric(g in generator(), m in 2usize..30, n in 1usize..30, seed in any::<u64>()) {
        let w = Dictionary::generate(g, m, n, seed).unwrap();
        for mode in [GramMode::Binary, GramMode::Continuous] {
            let a = gram_offsets(&w, mode).a;
            prop_assert!(a == a.t());
        }
    }

    #[test]
    fn coherence_is_at_least_welch(g in generator(), n in 1usize..30, extra in 1usize..30, seed in any::<u64>()) {
        let m = n + extra;
        let w = Dictionary::generate(g, m, n, seed).unwrap();
        prop_assert!(coherence(&w).unwrap() >= welch_bound(m, n).unwrap() - 1e-12);
    }

    #[test]
    fn apre_stays_in_percent_range_when_weights_match_sparsity(m in 1usize..12, rows in 2usize..20, seed in any::<u64>(), eps in 0.0f64..2.0) {
        let mut h = matrix(rows, m, seed, -1.0, 1.0).mapv(|v| v.max(0.0));
        h.row_mut(0).fill(0.0);
        h.row_mut(1).fill(0.5);
        let rate: Vec<f64> = h.columns().into_iter().map(|c| c.iter().filter(|&&v| v > 0.0).count() as f64 / rows as f64).collect();
        let h_hat = matrix(rows, m, seed ^ 1, -1.0, 2.0);
        let v = apre(&h, &h_hat, &ApreConfig::per_dim(eps, rate).unwrap()).unwrap();
        prop_assert!((0.0..=100.0 + 1e-9).contains(&v));
    }

    #[test]
    fn l1_error_tracks_constant_offsets(m in 1usize..12, rows in 1usize..20, seed in any::<u64>()) {
        let h = matrix(rows, m, seed, 0.0, 1.0);
        prop_assert!(mean_l1_error(&h, &h).unwrap().iter().all(|&e| e == 0.0));
        let err = mean_l1_error(&h, &(&h + 0.5)).unwrap();
        prop_assert!(err.iter().all(|&e| (e - 0.5).abs() < 1e-12));
    }

    #[test]
    fn binarize_is_idempotent(m in 1usize..10, rows in 1usize..10, seed in any::<u64>(), t in 0.05f64..0.95) {
        let est = matrix(rows, m, seed, 0.0, 1.0);
        let once = binarize(&est, t).unwrap();
        prop_assert_eq!(binarize(&once, t).unwrap(), once);
    }

    #[test]
    fn greedy_match_is_permutation_equivariant(m in 2usize..15, n in 2usize..15, seed in any::<u64>(), shuffle in any::<u64>()) {
        let truth = Dictionary::generate(Generator::PlainGaussian, m, n, seed).unwrap();
        let learned = Dictionary::generate(Generator::PlainGaussian, m, n, seed ^ 0x5555).unwrap();
        let mut perm: Vec<usize> = (0..m).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(shuffle);
        for i in (1..m).rev() {
            perm.swap(i, rng.random_range(0..=i));
        }
        let permuted = Dictionary::from_weights(learned.weights.select(ndarray::Axis(0), &perm));
        let base = greedy_match(&truth, &learned).unwrap();
        let moved = greedy_match(&truth, &permuted).unwrap();
        // Row k of `permuted` is row perm[k] of `learned`.
        for i in 0..m {
            prop_assert_eq!(perm[moved.permutation[i]], base.permutation[i]);
        }
        let mut a = base.cosines.clone();
        let mut b = moved.cosines.clone();
        a.sort_by(f64::total_cmp);
        b.sort_by(f64::total_cmp);
        prop_assert_eq!(a, b);
    }

    #[test]
    fn bias_shift_cancels_data_offset(m in 2usize..20, n in 2usize..20, seed in any::<u64>(), sigmoid in any::<bool>()) {
        let w = Dictionary::generate(Generator::OrthogonalizedGaussian, m, n, seed).unwrap();
        let params = BinsParams::binary(0.2).unwrap();
        let h = sample_signals(&params, m, 50, seed ^ 3).unwrap();
        let b_d = matrix(1, n, seed ^ 4, -5.0, 5.0).row(0).to_owned();
        let bias = theoretical_bias_binary(&w, &params).unwrap();
        let activation = if sigmoid { Activation::Sigmoid } else { Activation::Relu };
        let plain = generate_data(&w, &h, &Array1::zeros(n), 1.0, None, 0).unwrap();
        let shifted = generate_data(&w, &h, &b_d, 1.0, None, 0).unwrap();
        let a = encode(&w, &plain, &bias, activation).unwrap();
        let b = encode(&w, &shifted, &(&bias - &w.weights.dot(&b_d)), activation).unwrap();
        prop_assert!(a.iter().zip(b.iter()).all(|(x, y)| (x - y).abs() <= 1e-12));
    }

    #[test]
    fn data_is_linear_in_signals(m in 2usize..12, n in 2usize..12, seed in any::<u64>(), alpha in -3.0f64..3.0, beta in -3.0f64..3.0) {
        let w = Dictionary::generate(Generator::PlainGaussian, m, n, seed).unwrap();
        let params = BinsParams::uniform(0.3, 1.0).unwrap();
        let h1 = sample_signals(&params, m, 20, seed ^ 1).unwrap();
        let h2 = sample_signals(&params, m, 20, seed ^ 2).unwrap();
        let zero = Array1::zeros(n);
        let x1 = generate_data(&w, &h1, &zero, 1.0, None, 0).unwrap().x;
        let x2 = generate_data(&w, &h2, &zero, 1.0, None, 0).unwrap().x;
        let mix = SignalBatch { values: &h1.values * alpha + &h2.values * beta, params, seed: 0 };
        let x = generate_data(&w, &mix, &zero, 1.0, None, 0).unwrap().x;
        let expected = x1 * alpha + x2 * beta;
        prop_assert!(x.iter().zip(expected.iter()).all(|(a, b)| (a - b).abs() <= 1e-9));
    }
}

#[test]
fn bias_forms_agree_on_large_dictionaries() {
    let params = BinsParams::uniform(0.02, 1.0).unwrap();
    for seed in 0..10 {
        let w = Dictionary::generate(Generator::OrthogonalizedGaussian, 200, 180, seed).unwrap();
        let a = theoretical_bias_continuous(&w, &params).unwrap();
        let b = theoretical_bias_continuous_via_mean(&w, &params).unwrap();
        let worst = a.iter().zip(b.iter()).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
        assert!(worst <= 1e-9, "seed {seed}: {worst}");
    }
}

/// Fraction of samples with mean l1 error at most `delta` when `x = W^T h + e`
/// for a fixed `e`, recovered with the theoretical bias.
fn monte_carlo(w: &Dictionary, params: &BinsParams, e: &Array1<f64>, delta: f64, activation: Activation) -> f64 {
    let n_samples = 100_000;
    let h = sample_signals(params, w.m(), n_samples, 77).unwrap();
    let mut x = generate_data(w, &h, &Array1::zeros(w.n()), 1.0, None, 0).unwrap();
    x.x += e;
    let bias = match activation {
        Activation::Relu => theoretical_bias_continuous(w, params).unwrap(),
        Activation::Sigmoid => theoretical_bias_binary(w, params).unwrap(),
    };
    let est = encode(w, &x, &bias, activation).unwrap();
    let err = mean_l1_error(&h.values, &est).unwrap();
    err.iter().filter(|&&v| v <= delta).count() as f64 / n_samples as f64
}

fn se(p: f64) -> f64 {
    (p * (1.0 - p) / 100_000.0).sqrt()
}

#[test]
fn hand_binary_bound_is_dominated_by_monte_carlo() {
    let w = hand();
    let params = BinsParams::binary(0.1).unwrap();
    for e in [Array1::zeros(2), ndarray::array![0.1, 0.0]] {
        let bound = bound_binary_noisy(&w, &params, 0.5, &e).unwrap();
        let mc = monte_carlo(&w, &params, &e, 0.5, Activation::Sigmoid);
        assert!(bound <= mc + 3.0 * se(mc), "e = {e}: bound {bound}, monte carlo {mc}");
    }
}

#[test]
fn hand_continuous_bound_is_dominated_by_monte_carlo() {
    let w = hand();
    let params = BinsParams::uniform(0.2, 1.0).unwrap();
    for e in [Array1::zeros(2), ndarray::array![0.1, 0.0]] {
        let bound = bound_continuous_noisy(&w, &params, 0.1, &e).unwrap();
        let mc = monte_carlo(&w, &params, &e, 0.1, Activation::Relu);
        assert!(bound <= mc + 3.0 * se(mc), "e = {e}: bound {bound}, monte carlo {mc}");
    }
}
