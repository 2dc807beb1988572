//! Input attribution for dense classifiers and perturbation-based
//! faithfulness evaluation on EEG differential-entropy features.
//!
//! The pipeline mirrors how the pieces are used together:
//!
//! 1. [`data`] generates or loads labelled 62 × 5 feature vectors grouped by session.
//! 2. [`nn`] trains a rectifier MLP classifier on one session.
//! 3. [`attribution`] explains individual predictions (saliency, guided
//!    backpropagation, LRP z-rule, integrated gradients, DeepLIFT rescale).
//! 4. [`components`] groups feature relevance into features, bands or channels.
//! 5. [`perturb`] removes components in relevance order and measures how fast
//!    the classifier degrades (MoRF/LeRF curves, AOPC, ABPC), both inside the
//!    training session and on a shifted session.

pub mod attribution;
pub mod cli;
pub mod components;
pub mod data;
mod error;
pub mod nn;
pub mod perturb;

pub use error::{Error, Result};
