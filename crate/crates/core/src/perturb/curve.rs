use rayon::prelude::*;

use super::{Direction, ScoreKind};
use crate::components::{ComponentRanking, ComponentScheme, RankDirection};
use crate::error::{Error, Result};
use crate::nn::{argmax, softmax, NetworkSpec, Scratch};

/// Component orderings for a set of samples.
#[derive(Clone, Copy, Debug)]
pub enum Rankings<'a> {
    /// One ordering per sample, aligned with the sample slice.
    PerSample(&'a [ComponentRanking]),
    /// One ordering applied to every sample.
    Shared(&'a ComponentRanking),
}

impl<'a> Rankings<'a> {
    fn get(&self, i: usize) -> &'a ComponentRanking {
        match *self {
            Rankings::PerSample(r) => &r[i],
            Rankings::Shared(r) => r,
        }
    }

    fn validate(&self, n_samples: usize, scheme: &ComponentScheme) -> Result<()> {
        let all: &[ComponentRanking] = match self {
            Rankings::PerSample(r) => {
                if r.len() != n_samples {
                    return Err(Error::Shape(format!(
                        "{} rankings for {n_samples} samples",
                        r.len()
                    )));
                }
                r
            }
            Rankings::Shared(r) => std::slice::from_ref(*r),
        };
        let k = scheme.n_components();
        for r in all {
            let mut seen = vec![false; k];
            let valid = r.order.len() == k
                && r.order.iter().all(|&c| c < k && !std::mem::replace(&mut seen[c], true));
            if !valid {
                return Err(Error::Shape(format!(
                    "ranking is not a permutation of the {k} {} components",
                    scheme.kind()
                )));
            }
        }
        Ok(())
    }
}

/// Per-step accuracy and mean score of a perturbation run.
#[derive(Clone, Debug, PartialEq)]
pub struct CurveValues {
    pub accuracy: Vec<f64>,
    pub mean_score: Vec<f64>,
}

fn score_of(logits: &[f64], class: usize, kind: ScoreKind) -> f64 {
    match kind {
        ScoreKind::Probability => softmax(logits)[class],
        ScoreKind::Logit => logits[class],
    }
}

/// Runs `step_inputs` for every sample and reduces per step in sample order.
fn run_curve<F>(
    net: &NetworkSpec,
    samples: &[&[f64]],
    n_steps: usize,
    score: ScoreKind,
    step_inputs: F,
) -> Result<CurveValues>
where
    F: Fn(usize, &[f64], &mut dyn FnMut(&[f64])) + Sync,
{
    if samples.is_empty() {
        return Err(Error::EmptyDataset("perturbation curve over zero samples".into()));
    }
    if let Some(x) = samples.iter().find(|x| x.len() != net.n_inputs()) {
        return Err(Error::Shape(format!(
            "sample has {} features, network expects {}",
            x.len(),
            net.n_inputs()
        )));
    }
    let per_sample: Vec<Vec<(bool, f64)>> = samples
        .par_iter()
        .enumerate()
        .map(|(i, x)| {
            let mut scratch = Scratch::default();
            let reference = argmax(net.logits_with(x, &mut scratch));
            let mut points = Vec::with_capacity(n_steps + 1);
            step_inputs(i, x, &mut |input: &[f64]| {
                let logits = net.logits_with(input, &mut scratch);
                points.push((argmax(logits) == reference, score_of(logits, reference, score)));
            });
            debug_assert_eq!(points.len(), n_steps + 1);
            points
        })
        .collect();
    let n = samples.len() as f64;
    let mut accuracy = vec![0.0; n_steps + 1];
    let mut mean_score = vec![0.0; n_steps + 1];
    for points in &per_sample {
        for (k, &(hit, s)) in points.iter().enumerate() {
            if hit {
                accuracy[k] += 1.0;
            }
            mean_score[k] += s;
        }
    }
    for (a, s) in accuracy.iter_mut().zip(mean_score.iter_mut()) {
        *a /= n;
        *s /= n;
    }
    Ok(CurveValues {
        accuracy,
        mean_score,
    })
}

/// Inputs visited by a removal curve: `x`, then `x` with the first 1, 2, …, K
/// ranked components set to zero.
pub fn masked_sequence(x: &[f64], ranking: &ComponentRanking, scheme: &ComponentScheme) -> Vec<Vec<f64>> {
    let mut current = x.to_vec();
    let mut out = vec![current.clone()];
    for &c in &ranking.order {
        for &f in scheme.members(c) {
            current[f] = 0.0;
        }
        out.push(current.clone());
    }
    out
}

/// MoRF or LeRF curve: at step `k` the first `k` components of each sample's
/// ranking are zeroed. Accuracy and score refer to the unperturbed prediction.
pub fn perturbation_curve(
    net: &NetworkSpec,
    samples: &[&[f64]],
    rankings: Rankings<'_>,
    scheme: &ComponentScheme,
    direction: Direction,
    score: ScoreKind,
) -> Result<CurveValues> {
    let expected = match direction {
        Direction::Morf => RankDirection::Descending,
        Direction::Lerf => RankDirection::Ascending,
        Direction::SingleComponent => {
            return Err(Error::InvalidConfig(
                "use single_component_curve for single-component curves".into(),
            ))
        }
    };
    if scheme.n_features() != net.n_inputs() {
        return Err(Error::Shape("scheme and network widths differ".into()));
    }
    rankings.validate(samples.len(), scheme)?;
    let mismatched = match rankings {
        Rankings::PerSample(r) => r.iter().any(|r| r.direction != expected),
        Rankings::Shared(r) => r.direction != expected,
    };
    if mismatched {
        return Err(Error::InvalidConfig(format!(
            "{direction} curve needs a {expected:?} ranking"
        )));
    }
    run_curve(net, samples, scheme.n_components(), score, |i, x, emit| {
        let mut current = x.to_vec();
        emit(&current);
        for &c in &rankings.get(i).order {
            for &f in scheme.members(c) {
                current[f] = 0.0;
            }
            emit(&current);
        }
    })
}

/// Single-component curve: step 0 is the unperturbed input, step `k` keeps
/// only the `k`-th ranked component and zeroes everything else.
pub fn single_component_curve(
    net: &NetworkSpec,
    samples: &[&[f64]],
    rankings: Rankings<'_>,
    scheme: &ComponentScheme,
    score: ScoreKind,
) -> Result<CurveValues> {
    if scheme.n_features() != net.n_inputs() {
        return Err(Error::Shape("scheme and network widths differ".into()));
    }
    rankings.validate(samples.len(), scheme)?;
    run_curve(net, samples, scheme.n_components(), score, |i, x, emit| {
        emit(x);
        let mut only = vec![0.0; x.len()];
        for &c in &rankings.get(i).order {
            for &f in scheme.members(c) {
                only[f] = x[f];
            }
            emit(&only);
            for &f in scheme.members(c) {
                only[f] = 0.0;
            }
        }
    })
}
