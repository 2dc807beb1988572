//! Labelled differential-entropy feature vectors and their provenance.
//!
//! Features are laid out channel-major: index `channel * n_bands + band`, with
//! bands ordered delta, theta, alpha, beta, gamma.

mod io;
mod synth;

use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::NetworkSpec;

pub use io::{load_dataset, save_dataset};
pub use synth::{generate_synthetic, GroundTruth, SessionTruth, SynthConfig};

pub const BAND_NAMES: [&str; 5] = ["delta", "theta", "alpha", "beta", "gamma"];
pub const SEED_CHANNELS: usize = 62;
pub const SEED_CLASSES: usize = 3;

/// Shape of the channel × band feature grid.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct FeatureLayout {
    pub n_channels: usize,
    pub n_bands: usize,
}

impl Default for FeatureLayout {
    fn default() -> Self {
        Self {
            n_channels: SEED_CHANNELS,
            n_bands: BAND_NAMES.len(),
        }
    }
}

impl FeatureLayout {
    pub fn new(n_channels: usize, n_bands: usize) -> Result<Self> {
        if n_channels == 0 || n_bands == 0 {
            return Err(Error::InvalidConfig("layout needs at least one channel and band".into()));
        }
        Ok(Self { n_channels, n_bands })
    }

    pub fn n_features(&self) -> usize {
        self.n_channels * self.n_bands
    }

    #[inline]
    pub fn index(&self, channel: usize, band: usize) -> usize {
        channel * self.n_bands + band
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Sample {
    pub features: Vec<f64>,
    pub label: usize,
    pub subject: u32,
    pub session: u32,
    pub trial: u32,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    layout: FeatureLayout,
    n_classes: usize,
    samples: Vec<Sample>,
}

impl Dataset {
    pub fn new(layout: FeatureLayout, n_classes: usize, samples: Vec<Sample>) -> Result<Self> {
        if n_classes == 0 {
            return Err(Error::InvalidConfig("dataset needs at least one class".into()));
        }
        let d = layout.n_features();
        for (i, s) in samples.iter().enumerate() {
            if s.features.len() != d {
                return Err(Error::Shape(format!(
                    "sample {i} has {} features, layout needs {d}",
                    s.features.len()
                )));
            }
            if s.features.iter().any(|v| !v.is_finite()) {
                return Err(Error::Domain(format!("sample {i} has a non-finite feature")));
            }
            if s.label >= n_classes {
                return Err(Error::Domain(format!(
                    "sample {i} has label {} outside 0..{n_classes}",
                    s.label
                )));
            }
        }
        Ok(Self {
            layout,
            n_classes,
            samples,
        })
    }

    pub fn layout(&self) -> FeatureLayout {
        self.layout
    }

    pub fn n_classes(&self) -> usize {
        self.n_classes
    }

    pub fn n_features(&self) -> usize {
        self.layout.n_features()
    }

    pub fn samples(&self) -> &[Sample] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn labels(&self) -> Vec<usize> {
        self.samples.iter().map(|s| s.label).collect()
    }

    pub fn sessions(&self) -> Vec<u32> {
        let set: BTreeSet<u32> = self.samples.iter().map(|s| s.session).collect();
        set.into_iter().collect()
    }

    /// Samples at `indices`, in the given order.
    pub fn subset(&self, indices: &[usize]) -> Dataset {
        Dataset {
            layout: self.layout,
            n_classes: self.n_classes,
            samples: indices.iter().map(|&i| self.samples[i].clone()).collect(),
        }
    }

    pub fn filter<F: Fn(&Sample) -> bool>(&self, keep: F) -> Dataset {
        Dataset {
            layout: self.layout,
            n_classes: self.n_classes,
            samples: self.samples.iter().filter(|s| keep(s)).cloned().collect(),
        }
    }

    pub fn session(&self, session: u32) -> Dataset {
        self.filter(|s| s.session == session)
    }

    /// Splits into (train, validation) with per-class proportions.
    pub fn stratified_split(&self, fraction: f64, seed: u64) -> Result<(Dataset, Dataset)> {
        let (train, val) = stratified_split(&self.labels(), self.n_classes, fraction, seed)?;
        Ok((self.subset(&train), self.subset(&val)))
    }

    /// Seeded subsample of at most `n` samples, kept in original order.
    pub fn sample_at_most(&self, n: usize, seed: u64) -> Dataset {
        if self.len() <= n {
            return self.clone();
        }
        let mut idx: Vec<usize> = (0..self.len()).collect();
        idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        idx.truncate(n);
        idx.sort_unstable();
        self.subset(&idx)
    }
}

/// Per-class random split; returns sorted (train, validation) indices.
///
/// Each class contributes `max(1, round(n_c · fraction))` validation samples,
/// so every class in `0..n_classes` must be present.
pub fn stratified_split(
    labels: &[usize],
    n_classes: usize,
    fraction: f64,
    seed: u64,
) -> Result<(Vec<usize>, Vec<usize>)> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(Error::InvalidConfig(format!(
            "split fraction must lie in (0, 1), got {fraction}"
        )));
    }
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); n_classes];
    for (i, &label) in labels.iter().enumerate() {
        if label >= n_classes {
            return Err(Error::Stratification(format!("label {label} outside 0..{n_classes}")));
        }
        by_class[label].push(i);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut train = Vec::with_capacity(labels.len());
    let mut val = Vec::new();
    for (class, mut members) in by_class.into_iter().enumerate() {
        if members.is_empty() {
            return Err(Error::Stratification(format!("class {class} has no samples")));
        }
        members.shuffle(&mut rng);
        let n_val = ((members.len() as f64 * fraction).round() as usize).clamp(1, members.len());
        val.extend_from_slice(&members[..n_val]);
        train.extend_from_slice(&members[n_val..]);
    }
    train.sort_unstable();
    val.sort_unstable();
    Ok((train, val))
}

/// Samples the network labels correctly, in original order.
pub fn filter_correct(net: &NetworkSpec, dataset: &Dataset) -> Result<Dataset> {
    check_width(net, dataset)?;
    let mut keep = Vec::new();
    for (i, s) in dataset.samples.iter().enumerate() {
        if net.predict(&s.features)?.0 == s.label {
            keep.push(i);
        }
    }
    Ok(dataset.subset(&keep))
}

/// Fraction of samples the network labels correctly.
pub fn accuracy(net: &NetworkSpec, dataset: &Dataset) -> Result<f64> {
    if dataset.is_empty() {
        return Err(Error::EmptyDataset("accuracy of an empty dataset".into()));
    }
    Ok(filter_correct(net, dataset)?.len() as f64 / dataset.len() as f64)
}

fn check_width(net: &NetworkSpec, dataset: &Dataset) -> Result<()> {
    if net.n_inputs() != dataset.n_features() {
        return Err(Error::Shape(format!(
            "network expects {} inputs, dataset has {} features",
            net.n_inputs(),
            dataset.n_features()
        )));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{Activation, DenseLayer};

    fn labelled(labels: &[usize], n_classes: usize) -> Dataset {
        let layout = FeatureLayout::new(2, 1).unwrap();
        let samples = labels
            .iter()
            .enumerate()
            .map(|(i, &label)| Sample {
                features: vec![i as f64, -(i as f64)],
                label,
                subject: 1,
                session: 1,
                trial: 1,
            })
            .collect();
        Dataset::new(layout, n_classes, samples).unwrap()
    }

    #[test]
    fn split_exact_proportions() {
        let labels: Vec<usize> = (0..20).map(|i| i % 2).collect();
        let (train, val) = stratified_split(&labels, 2, 0.1, 0).unwrap();
        assert_eq!(val.len(), 2);
        assert_eq!(val.iter().filter(|&&i| labels[i] == 0).count(), 1);
        assert_eq!(train.len(), 18);
    }

    #[test]
    fn split_single_class() {
        let (train, val) = stratified_split(&[0; 10], 1, 0.1, 4).unwrap();
        assert_eq!((train.len(), val.len()), (9, 1));
    }

    #[test]
    fn split_is_a_partition_and_seeded() {
        let labels: Vec<usize> = (0..90).map(|i| i % 3).collect();
        let (t1, v1) = stratified_split(&labels, 3, 0.2, 9).unwrap();
        let (t2, v2) = stratified_split(&labels, 3, 0.2, 9).unwrap();
        assert_eq!((&t1, &v1), (&t2, &v2));
        let mut all: Vec<usize> = t1.iter().chain(&v1).copied().collect();
        all.sort_unstable();
        assert_eq!(all, (0..90).collect::<Vec<_>>());
        let (_, v3) = stratified_split(&labels, 3, 0.2, 10).unwrap();
        assert_ne!(v1, v3);
    }

    #[test]
    fn split_rejects_missing_class() {
        assert!(matches!(
            stratified_split(&[0, 0, 2], 3, 0.5, 0),
            Err(Error::Stratification(_))
        ));
    }

    #[test]
    fn filter_with_constant_classifier() {
        // logits (0, 0): ties resolve to class 0 for every input
        let layer =
            DenseLayer::from_rows(&[vec![0.0, 0.0], vec![0.0, 0.0]], vec![0.0, 0.0], Activation::Identity)
                .unwrap();
        let net = NetworkSpec::new(vec![layer]).unwrap();
        let data = labelled(&[0, 1, 1, 0, 1], 2);
        let kept = filter_correct(&net, &data).unwrap();
        assert_eq!(kept.labels(), vec![0, 0]);
        assert_eq!(kept.samples()[1].features, vec![3.0, -3.0]);
        let acc = accuracy(&net, &data).unwrap();
        assert_eq!((acc * data.len() as f64).round() as usize, kept.len());
    }

    #[test]
    fn dataset_validation() {
        let layout = FeatureLayout::new(2, 1).unwrap();
        let bad = Sample {
            features: vec![1.0],
            label: 0,
            subject: 1,
            session: 1,
            trial: 1,
        };
        assert!(Dataset::new(layout, 2, vec![bad]).is_err());
        let bad_label = Sample {
            features: vec![1.0, 2.0],
            label: 5,
            subject: 1,
            session: 1,
            trial: 1,
        };
        assert!(Dataset::new(layout, 2, vec![bad_label]).is_err());
    }
}
