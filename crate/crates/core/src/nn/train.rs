//! Mini-batch training: softmax cross-entropy, Adam, early stopping on the
//! validation loss and plateau learning-rate decay.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::kernels::{axpy, log_sum_exp, softmax};
use super::network::{Activation, NetworkSpec};
use super::optim::{adam_step, AdamState};
use crate::data::Dataset;
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub hidden_layers: Vec<usize>,
    pub learning_rate: f64,
    /// Epochs without validation improvement before stopping.
    pub patience: usize,
    /// Epochs without validation improvement before the learning rate decays.
    pub plateau_window: usize,
    pub plateau_factor: f64,
    pub validation_fraction: f64,
    pub max_epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            hidden_layers: vec![128, 256, 128],
            learning_rate: 0.01,
            patience: 20,
            plateau_window: 10,
            plateau_factor: 0.1,
            validation_fraction: 0.10,
            max_epochs: 200,
            batch_size: 64,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: &str| Err(Error::InvalidConfig(m.to_string()));
        if !(self.validation_fraction > 0.0 && self.validation_fraction < 1.0) {
            return fail("validation_fraction must lie in (0, 1)");
        }
        if !(self.plateau_factor > 0.0 && self.plateau_factor < 1.0) {
            return fail("plateau_factor must lie in (0, 1)");
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return fail("learning_rate must be positive");
        }
        if self.batch_size == 0 {
            return fail("batch_size must be positive");
        }
        if self.hidden_layers.contains(&0) {
            return fail("hidden layer widths must be positive");
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub validation_loss: f64,
    pub validation_accuracy: f64,
    pub learning_rate: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LrEvent {
    pub epoch: usize,
    pub from: f64,
    pub to: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub epochs: Vec<EpochRecord>,
    /// Epoch (1-based) with the lowest validation loss; its weights are returned.
    pub best_epoch: Option<usize>,
    /// Last epoch run, 0 when no epoch ran.
    pub final_epoch: usize,
    pub stopped_early: bool,
    pub lr_events: Vec<LrEvent>,
    pub n_train: usize,
    pub n_validation: usize,
}

/// Parameter gradients laid out like the network's layers.
struct Gradients {
    columns: Vec<Vec<f64>>,
    biases: Vec<Vec<f64>>,
}

impl Gradients {
    fn zeros_like(net: &NetworkSpec) -> Self {
        Self {
            columns: net.layers().iter().map(|l| vec![0.0; l.columns().len()]).collect(),
            biases: net.layers().iter().map(|l| vec![0.0; l.n_outputs()]).collect(),
        }
    }

    fn clear(&mut self) {
        for g in self.columns.iter_mut().chain(self.biases.iter_mut()) {
            g.fill(0.0);
        }
    }
}

/// Adds `scale · ∂CE/∂θ` for one sample into `grads`; returns the sample's loss.
fn accumulate_sample(
    net: &NetworkSpec,
    x: &[f64],
    label: usize,
    scale: f64,
    grads: &mut Gradients,
) -> f64 {
    let trace = net.forward_unchecked(x);
    let loss = log_sum_exp(&trace.logits) - trace.logits[label];
    let mut delta = trace.probabilities.clone();
    delta[label] -= 1.0;
    for d in &mut delta {
        *d *= scale;
    }
    let layers = net.layers();
    for l in (0..layers.len()).rev() {
        let input = trace.layer_input(l);
        let n_out = layers[l].n_outputs();
        axpy(1.0, &delta, &mut grads.biases[l]);
        let gcols = &mut grads.columns[l];
        for (j, &a) in input.iter().enumerate() {
            if a != 0.0 {
                axpy(a, &delta, &mut gcols[j * n_out..(j + 1) * n_out]);
            }
        }
        if l > 0 {
            let mut prev = layers[l].transpose_apply(&delta);
            let act = layers[l - 1].activation();
            if act == Activation::Rectifier {
                for (p, &z) in prev.iter_mut().zip(&trace.layers[l - 1].pre_activation) {
                    *p *= act.derivative(z);
                }
            }
            delta = prev;
        }
    }
    loss
}

/// Mean cross-entropy and accuracy over a dataset.
pub fn evaluate_loss(net: &NetworkSpec, data: &Dataset) -> (f64, f64) {
    let mut loss = 0.0;
    let mut correct = 0usize;
    for s in data.samples() {
        let logits = net.forward_unchecked(&s.features).logits;
        loss += log_sum_exp(&logits) - logits[s.label];
        let probs = softmax(&logits);
        if super::kernels::argmax(&probs) == s.label {
            correct += 1;
        }
    }
    let n = data.len().max(1) as f64;
    (loss / n, correct as f64 / n)
}

/// Trains a rectifier MLP on `dataset`; returns the best-validation weights.
pub fn train(dataset: &Dataset, config: &TrainConfig) -> Result<(NetworkSpec, TrainReport)> {
    config.validate()?;
    if dataset.is_empty() {
        return Err(Error::EmptyDataset("training set has no samples".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut net = NetworkSpec::init_mlp(
        dataset.n_features(),
        &config.hidden_layers,
        dataset.n_classes(),
        &mut rng,
    )?;
    let (train_set, val_set) = dataset.stratified_split(config.validation_fraction, config.seed)?;

    let mut report = TrainReport {
        epochs: Vec::new(),
        best_epoch: None,
        final_epoch: 0,
        stopped_early: false,
        lr_events: Vec::new(),
        n_train: train_set.len(),
        n_validation: val_set.len(),
    };
    if config.max_epochs == 0 {
        return Ok((net, report));
    }
    if train_set.is_empty() {
        return Err(Error::EmptyDataset("no samples left for training after the validation split".into()));
    }

    let mut adam: Vec<(AdamState, AdamState)> = net
        .layers()
        .iter()
        .map(|l| (AdamState::new(l.columns().len()), AdamState::new(l.n_outputs())))
        .collect();
    let mut grads = Gradients::zeros_like(&net);
    let mut lr = config.learning_rate;
    let mut best_loss = f64::INFINITY;
    let mut best_net = net.clone();
    let mut since_best = 0usize;
    let mut since_plateau = 0usize;
    let mut order: Vec<usize> = (0..train_set.len()).collect();

    for epoch in 1..=config.max_epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for batch in order.chunks(config.batch_size) {
            grads.clear();
            let scale = 1.0 / batch.len() as f64;
            for &i in batch {
                let s = &train_set.samples()[i];
                epoch_loss += accumulate_sample(&net, &s.features, s.label, scale, &mut grads);
            }
            for (l, layer) in net.layers_mut().iter_mut().enumerate() {
                let (w_state, b_state) = &mut adam[l];
                adam_step(layer.columns_mut(), &grads.columns[l], w_state, lr)?;
                adam_step(layer.biases_mut(), &grads.biases[l], b_state, lr)?;
            }
        }
        let train_loss = epoch_loss / train_set.len() as f64;
        let (val_loss, val_acc) = evaluate_loss(&net, &val_set);
        if !train_loss.is_finite() || !val_loss.is_finite() {
            return Err(Error::TrainingDiverged { epoch });
        }
        report.epochs.push(EpochRecord {
            epoch,
            train_loss,
            validation_loss: val_loss,
            validation_accuracy: val_acc,
            learning_rate: lr,
        });
        report.final_epoch = epoch;

        if val_loss < best_loss {
            best_loss = val_loss;
            best_net = net.clone();
            report.best_epoch = Some(epoch);
            since_best = 0;
            since_plateau = 0;
        } else {
            since_best += 1;
            since_plateau += 1;
            if since_best >= config.patience {
                report.stopped_early = true;
                break;
            }
            if since_plateau >= config.plateau_window {
                let new_lr = lr * config.plateau_factor;
                report.lr_events.push(LrEvent {
                    epoch,
                    from: lr,
                    to: new_lr,
                });
                lr = new_lr;
                since_plateau = 0;
            }
        }
    }
    Ok((best_net, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{FeatureLayout, Sample};
    use rand_distr::{Distribution, Normal};

    /// Two Gaussian blobs in 4-D centred at ±1.5 on every axis.
    pub(crate) fn blobs(n: usize, seed: u64) -> Dataset {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let noise = Normal::new(0.0, 0.5).unwrap();
        let samples = (0..n)
            .map(|i| {
                let label = i % 2;
                let centre = if label == 0 { -1.5 } else { 1.5 };
                Sample {
                    features: (0..4).map(|_| centre + noise.sample(&mut rng)).collect(),
                    label,
                    subject: 1,
                    session: 1,
                    trial: 1,
                }
            })
            .collect();
        Dataset::new(FeatureLayout::new(4, 1).unwrap(), 2, samples).unwrap()
    }

    fn quick_config(seed: u64) -> TrainConfig {
        TrainConfig {
            hidden_layers: vec![16, 16],
            max_epochs: 60,
            batch_size: 16,
            seed,
            ..TrainConfig::default()
        }
    }

    #[test]
    fn separable_blobs_are_learned() {
        let data = blobs(200, 1);
        let (net, report) = train(&data, &quick_config(7)).unwrap();
        let (_, acc) = evaluate_loss(&net, &data);
        assert!(acc >= 0.99, "training accuracy {acc}");
        assert!(report.final_epoch > 0);
    }

    #[test]
    fn zero_epochs_returns_initial_net() {
        let data = blobs(40, 2);
        let cfg = TrainConfig {
            max_epochs: 0,
            ..quick_config(3)
        };
        let (net, report) = train(&data, &cfg).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let fresh = NetworkSpec::init_mlp(4, &[16, 16], 2, &mut rng).unwrap();
        assert_eq!(net, fresh);
        assert!(report.epochs.is_empty());
        assert_eq!(report.final_epoch, 0);
    }

    #[test]
    fn seeded_training_is_bitwise_reproducible() {
        let data = blobs(120, 4);
        let cfg = TrainConfig {
            max_epochs: 15,
            ..quick_config(11)
        };
        let (a, ra) = train(&data, &cfg).unwrap();
        let (b, rb) = train(&data, &cfg).unwrap();
        assert_eq!(a.to_json().unwrap(), b.to_json().unwrap());
        assert_eq!(ra, rb);
    }

    #[test]
    fn early_stopping_respects_patience() {
        // random labels: validation loss cannot keep improving
        let mut data = blobs(120, 5);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let relabelled: Vec<Sample> = data
            .samples()
            .iter()
            .map(|s| Sample {
                label: usize::from(rand::Rng::random_bool(&mut rng, 0.5)),
                ..s.clone()
            })
            .collect();
        data = Dataset::new(data.layout(), 2, relabelled).unwrap();
        let cfg = TrainConfig {
            patience: 5,
            plateau_window: 3,
            max_epochs: 200,
            ..quick_config(2)
        };
        let (_, report) = train(&data, &cfg).unwrap();
        assert!(report.stopped_early);
        let best = report.best_epoch.unwrap();
        assert!(report.final_epoch - best <= cfg.patience);
        assert!(!report.lr_events.is_empty());
        for e in &report.lr_events {
            assert!((e.to - e.from * 0.1).abs() < 1e-18);
        }
    }

    #[test]
    fn empty_dataset_is_an_error() {
        let empty = Dataset::new(FeatureLayout::new(4, 1).unwrap(), 2, vec![]).unwrap();
        assert!(matches!(train(&empty, &quick_config(0)), Err(Error::EmptyDataset(_))));
    }

    #[test]
    fn diverging_training_is_reported() {
        let data = blobs(60, 6);
        let cfg = TrainConfig {
            learning_rate: 1e300,
            max_epochs: 5,
            ..quick_config(1)
        };
        assert!(matches!(train(&data, &cfg), Err(Error::TrainingDiverged { .. })));
    }
}
