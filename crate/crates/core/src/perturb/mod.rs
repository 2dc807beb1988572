//! Perturbation curves and the faithfulness metrics computed from them.
//!
//! Components are removed by setting their features to exactly zero. A MoRF
//! curve removes components most-relevant first, a LeRF curve least-relevant
//! first, and a single-component curve keeps only the k-th ranked component.

mod curve;
mod protocol;
mod report;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::attribution::Method;
use crate::components::SchemeKind;
use crate::error::{Error, Result};

pub use curve::{
    masked_sequence, perturbation_curve, single_component_curve, CurveValues, Rankings,
};
pub use protocol::{
    run_protocol, EvalSplit, ExperimentResult, MetricRow, ProtocolConfig, SplitCounts,
};
pub use report::{read_metrics_csv, summarize_metrics, write_summary_csv, SummaryRow};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    Morf,
    Lerf,
    SingleComponent,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RelevanceMode {
    /// Relevance computed on the evaluated input itself.
    Real,
    /// One ordering from relevance averaged over training-session samples.
    Presumed,
    /// Uniformly random orderings.
    Random,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SessionMode {
    Intra,
    Inter,
}

/// What the curve's `mean_score` tracks for the originally predicted class.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScoreKind {
    #[default]
    Probability,
    Logit,
}

/// Where a curve's component ordering came from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Explainer {
    Method(Method),
    Random,
}

macro_rules! named_enum {
    ($ty:ty { $($variant:ident => $name:literal),+ $(,)? }) => {
        impl $ty {
            pub fn name(self) -> &'static str {
                match self {
                    $(Self::$variant => $name),+
                }
            }
        }

        impl fmt::Display for $ty {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(self.name())
            }
        }

        impl FromStr for $ty {
            type Err = Error;

            fn from_str(s: &str) -> Result<Self> {
                match s {
                    $($name => Ok(Self::$variant),)+
                    other => Err(Error::InvalidConfig(format!(
                        concat!("unknown ", stringify!($ty), " `{}`"),
                        other
                    ))),
                }
            }
        }
    };
}

named_enum!(Direction { Morf => "morf", Lerf => "lerf", SingleComponent => "single_component" });
named_enum!(RelevanceMode { Real => "real", Presumed => "presumed", Random => "random" });
named_enum!(SessionMode { Intra => "intra", Inter => "inter" });
named_enum!(ScoreKind { Probability => "probability", Logit => "logit" });

impl Explainer {
    pub fn name(self) -> &'static str {
        match self {
            Explainer::Method(m) => m.name(),
            Explainer::Random => "random",
        }
    }
}

impl fmt::Display for Explainer {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Explainer {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s == "random" {
            Ok(Explainer::Random)
        } else {
            s.parse().map(Explainer::Method)
        }
    }
}

/// A labelled perturbation curve over steps `0..=K`.
#[derive(Clone, Debug, PartialEq)]
pub struct PerturbationCurve {
    pub explainer: Explainer,
    pub scheme: SchemeKind,
    pub direction: Direction,
    pub relevance_mode: RelevanceMode,
    pub session_mode: SessionMode,
    pub accuracy: Vec<f64>,
    pub mean_score: Vec<f64>,
}

impl PerturbationCurve {
    /// Number of perturbation steps `K` (the curve holds `K + 1` points).
    pub fn steps(&self) -> usize {
        self.mean_score.len().saturating_sub(1)
    }
}

/// Area over the perturbation curve: `1/(K+1) · Σ_k (s_0 − s_k)`.
pub fn aopc(curve: &PerturbationCurve) -> f64 {
    aopc_values(&curve.mean_score)
}

pub fn aopc_values(scores: &[f64]) -> f64 {
    let Some(&first) = scores.first() else {
        return 0.0;
    };
    scores.iter().map(|&s| first - s).sum::<f64>() / scores.len() as f64
}

/// Area between perturbation curves: `1/(K+1) · Σ_k (lerf_k − morf_k)`.
///
/// Positive when removing the least relevant components first preserves the
/// score longer than removing the most relevant first.
pub fn abpc(morf: &PerturbationCurve, lerf: &PerturbationCurve) -> Result<f64> {
    if morf.scheme != lerf.scheme {
        return Err(Error::Shape(format!(
            "abpc needs curves over one scheme, got {} and {}",
            morf.scheme, lerf.scheme
        )));
    }
    abpc_values(&morf.mean_score, &lerf.mean_score)
}

pub fn abpc_values(morf: &[f64], lerf: &[f64]) -> Result<f64> {
    if morf.len() != lerf.len() || morf.is_empty() {
        return Err(Error::Shape(format!(
            "abpc needs curves of equal nonzero length, got {} and {}",
            morf.len(),
            lerf.len()
        )));
    }
    Ok(lerf.iter().zip(morf).map(|(l, m)| l - m).sum::<f64>() / morf.len() as f64)
}
