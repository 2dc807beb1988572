//! Synthetic SEED-style sessions with planted class signal.
//!
//! Each class has a ±1 sign pattern over a fixed set `S` of informative
//! features; the class mean is `class_separation · pattern` on `S` and zero
//! elsewhere. Every session after the first re-draws the pattern on a
//! `session_shift` fraction of `S`, always to a pattern different from the
//! first session's.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{Dataset, FeatureLayout, Sample};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub n_channels: usize,
    pub n_bands: usize,
    pub classes: usize,
    pub samples_per_class_per_session: usize,
    pub n_sessions: usize,
    pub n_informative: usize,
    pub class_separation: f64,
    pub session_shift: f64,
    pub noise_sigma: f64,
    pub trials_per_class: usize,
    pub subject: u32,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            n_channels: 62,
            n_bands: 5,
            classes: 3,
            samples_per_class_per_session: 600,
            n_sessions: 3,
            n_informative: 20,
            class_separation: 1.0,
            session_shift: 0.5,
            noise_sigma: 0.5,
            trials_per_class: 5,
            subject: 1,
            seed: 0,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: &str| Err(Error::InvalidConfig(m.to_string()));
        if self.n_channels == 0 || self.n_bands == 0 {
            return fail("n_channels and n_bands must be positive");
        }
        if self.classes < 2 {
            return fail("need at least two classes");
        }
        if self.n_sessions == 0 || self.samples_per_class_per_session == 0 {
            return fail("n_sessions and samples_per_class_per_session must be positive");
        }
        if self.n_informative == 0 || self.n_informative > self.n_channels * self.n_bands {
            return fail("n_informative must lie in 1..=n_channels·n_bands");
        }
        if !(0.0..=1.0).contains(&self.session_shift) {
            return fail("session_shift must lie in [0, 1]");
        }
        if !(self.noise_sigma > 0.0 && self.noise_sigma.is_finite()) {
            return fail("noise_sigma must be positive and finite");
        }
        if !self.class_separation.is_finite() {
            return fail("class_separation must be finite");
        }
        if self.trials_per_class == 0 {
            return fail("trials_per_class must be positive");
        }
        Ok(())
    }
}

/// Planted signal for one session.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SessionTruth {
    /// Sorted informative feature indices (`S`).
    pub informative_indices: Vec<usize>,
    /// Members of `S` whose sign pattern differs from the first session.
    pub shifted_indices: Vec<usize>,
    /// One mean vector per class over all features.
    pub class_means: Vec<Vec<f64>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub sessions: BTreeMap<u32, SessionTruth>,
}

impl GroundTruth {
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let text = serde_json::to_string_pretty(self)? + "\n";
        fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }
}

fn draw_column(rng: &mut ChaCha8Rng, classes: usize) -> Vec<f64> {
    loop {
        let col: Vec<f64> = (0..classes)
            .map(|_| if rng.random_bool(0.5) { 1.0 } else { -1.0 })
            .collect();
        // a column on which every class agrees carries no class signal
        if col.iter().any(|&v| v != col[0]) {
            return col;
        }
    }
}

/// Generates all sessions and the planted ground truth. Deterministic in `cfg.seed`.
pub fn generate_synthetic(cfg: &SynthConfig) -> Result<(Dataset, GroundTruth)> {
    cfg.validate()?;
    let layout = FeatureLayout::new(cfg.n_channels, cfg.n_bands)?;
    let d = layout.n_features();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);

    let mut informative = index::sample(&mut rng, d, cfg.n_informative).into_vec();
    informative.sort_unstable();

    // base pattern: columns indexed by position in `informative`
    let base: Vec<Vec<f64>> = loop {
        let cols: Vec<Vec<f64>> = (0..informative.len())
            .map(|_| draw_column(&mut rng, cfg.classes))
            .collect();
        let rows_distinct = (0..cfg.classes).all(|a| {
            (a + 1..cfg.classes).all(|b| cols.iter().any(|col| col[a] != col[b]))
        });
        if rows_distinct {
            break cols;
        }
    };

    let n_shift = (cfg.session_shift * cfg.n_informative as f64).round() as usize;
    let normal = Normal::new(0.0, cfg.noise_sigma)
        .map_err(|e| Error::InvalidConfig(format!("noise_sigma: {e}")))?;

    let mut truth = BTreeMap::new();
    let mut samples = Vec::with_capacity(
        cfg.n_sessions * cfg.classes * cfg.samples_per_class_per_session,
    );
    for s in 0..cfg.n_sessions {
        let session = s as u32 + 1;
        let mut pattern = base.clone();
        let mut shifted = Vec::new();
        if s > 0 && n_shift > 0 {
            let mut picks = index::sample(&mut rng, informative.len(), n_shift).into_vec();
            picks.sort_unstable();
            for p in picks {
                pattern[p] = loop {
                    let col = draw_column(&mut rng, cfg.classes);
                    if col != base[p] {
                        break col;
                    }
                };
                shifted.push(informative[p]);
            }
        }
        let class_means: Vec<Vec<f64>> = (0..cfg.classes)
            .map(|c| {
                let mut mean = vec![0.0; d];
                for (p, &f) in informative.iter().enumerate() {
                    mean[f] = cfg.class_separation * pattern[p][c];
                }
                mean
            })
            .collect();

        let n = cfg.samples_per_class_per_session;
        for (c, mean) in class_means.iter().enumerate() {
            for j in 0..n {
                let trial = 1 + c * cfg.trials_per_class + j * cfg.trials_per_class / n;
                let features = mean.iter().map(|&m| m + normal.sample(&mut rng)).collect();
                samples.push(Sample {
                    features,
                    label: c,
                    subject: cfg.subject,
                    session,
                    trial: trial as u32,
                });
            }
        }
        truth.insert(
            session,
            SessionTruth {
                informative_indices: informative.clone(),
                shifted_indices: shifted,
                class_means,
            },
        );
    }
    let dataset = Dataset::new(layout, cfg.classes, samples)?;
    Ok((dataset, GroundTruth { sessions: truth }))
}
