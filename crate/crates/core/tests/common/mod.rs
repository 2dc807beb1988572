#![allow(dead_code)]

use eegxai::data::{generate_synthetic, Dataset, GroundTruth, SynthConfig};
use eegxai::nn::{train, Activation, DenseLayer, NetworkSpec, TrainConfig};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// Random dense net with `widths = [in, h1, .., out]`; hidden layers use `hidden`.
pub fn random_net(rng: &mut ChaCha8Rng, widths: &[usize], hidden: Activation, bias_scale: f64) -> NetworkSpec {
    let n = widths.len() - 1;
    let layers = widths
        .windows(2)
        .enumerate()
        .map(|(l, w)| {
            let (cols, rows) = (w[0], w[1]);
            let scale = (3.0 / cols as f64).sqrt();
            let weights: Vec<f64> = (0..rows * cols).map(|_| rng.random_range(-scale..scale)).collect();
            let biases = (0..rows)
                .map(|_| if bias_scale > 0.0 { rng.random_range(-bias_scale..bias_scale) } else { 0.0 })
                .collect();
            let act = if l + 1 == n { Activation::Identity } else { hidden };
            DenseLayer::from_row_major(rows, cols, &weights, biases, act).unwrap()
        })
        .collect();
    NetworkSpec::new(layers).unwrap()
}

pub fn random_input(rng: &mut ChaCha8Rng, d: usize) -> Vec<f64> {
    (0..d).map(|_| rng.random_range(-2.0..2.0)).collect()
}

/// Smallest |pre-activation| over all rectifier units.
pub fn kink_distance(net: &NetworkSpec, x: &[f64]) -> f64 {
    let trace = net.forward(x).unwrap();
    net.layers()
        .iter()
        .zip(&trace.layers)
        .filter(|(l, _)| l.activation() == Activation::Rectifier)
        .flat_map(|(_, t)| t.pre_activation.iter().map(|v| v.abs()))
        .fold(f64::INFINITY, f64::min)
}

/// Central finite-difference gradient of one logit.
pub fn finite_difference(net: &NetworkSpec, x: &[f64], class: usize, h: f64) -> Vec<f64> {
    let mut probe = x.to_vec();
    (0..x.len())
        .map(|i| {
            probe[i] = x[i] + h;
            let up = net.logits(&probe).unwrap()[class];
            probe[i] = x[i] - h;
            let down = net.logits(&probe).unwrap()[class];
            probe[i] = x[i];
            (up - down) / (2.0 * h)
        })
        .collect()
}

/// A model trained on session 1 of a generated dataset.
pub struct Planted {
    pub data: Dataset,
    pub truth: GroundTruth,
    /// Session-1 samples used for fitting (includes the validation split).
    pub fit: Dataset,
    /// Held-out session-1 samples.
    pub intra: Dataset,
    /// All session-2 samples.
    pub inter: Dataset,
    pub net: NetworkSpec,
}

pub fn planted_config(seed: u64, samples_per_class: usize) -> SynthConfig {
    SynthConfig {
        samples_per_class_per_session: samples_per_class,
        n_sessions: 2,
        n_informative: 20,
        class_separation: 1.0,
        noise_sigma: 0.5,
        session_shift: 0.5,
        seed,
        ..SynthConfig::default()
    }
}

pub fn planted(cfg: &SynthConfig, max_epochs: usize) -> Planted {
    let (data, truth) = generate_synthetic(cfg).unwrap();
    let (fit, intra) = data.session(1).stratified_split(0.2, cfg.seed).unwrap();
    let train_cfg = TrainConfig {
        max_epochs,
        seed: cfg.seed,
        ..TrainConfig::default()
    };
    let (net, _) = train(&fit, &train_cfg).unwrap();
    let inter = data.session(2);
    Planted {
        data,
        truth,
        fit,
        intra,
        inter,
        net,
    }
}

pub fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Sample standard deviation.
pub fn std_dev(v: &[f64]) -> f64 {
    let m = mean(v);
    (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (v.len() as f64 - 1.0)).sqrt()
}
