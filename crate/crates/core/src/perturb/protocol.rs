//! Intra-/inter-session evaluation with real, presumed and random relevance.

use std::collections::BTreeMap;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::curve::{perturbation_curve, single_component_curve, CurveValues, Rankings};
use super::{
    abpc_values, aopc_values, Direction, Explainer, PerturbationCurve, RelevanceMode, ScoreKind,
    SessionMode,
};
use crate::attribution::{attribute_batch, AttributionParams, Method, RelevanceMap};
use crate::components::{
    aggregate_values, mean_relevance, rank_components, ComponentRanking, ComponentRelevance,
    ComponentScheme, RankDirection, SchemeKind,
};
use crate::data::{filter_correct, Dataset};
use crate::error::{Error, Result};
use crate::nn::NetworkSpec;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ProtocolConfig {
    pub methods: Vec<Method>,
    pub schemes: Vec<SchemeKind>,
    /// Attribution-based modes to run (`real`, `presumed`).
    pub relevance_modes: Vec<RelevanceMode>,
    /// Also emit curves for uniformly random orderings.
    pub include_random: bool,
    pub directions: Vec<Direction>,
    pub attribution: AttributionParams,
    /// Rank by relevance magnitude instead of signed relevance.
    pub abs_relevance: bool,
    pub score: ScoreKind,
    /// Average presumed relevance per predicted class instead of over all samples.
    pub presumed_per_class: bool,
    /// Cap on correctly classified samples evaluated per split; 0 disables it.
    pub max_eval_samples: usize,
    /// Cap on correctly classified training samples averaged for presumed
    /// relevance; 0 disables it.
    pub max_reference_samples: usize,
    pub seed: u64,
}

impl Default for ProtocolConfig {
    fn default() -> Self {
        Self {
            methods: Method::EXPLAINERS.to_vec(),
            schemes: SchemeKind::ALL.to_vec(),
            relevance_modes: vec![RelevanceMode::Real],
            include_random: true,
            directions: vec![Direction::Morf, Direction::Lerf, Direction::SingleComponent],
            attribution: AttributionParams::default(),
            abs_relevance: false,
            score: ScoreKind::Probability,
            presumed_per_class: false,
            max_eval_samples: 100,
            max_reference_samples: 300,
            seed: 0,
        }
    }
}

impl ProtocolConfig {
    fn validate(&self) -> Result<()> {
        if self.relevance_modes.contains(&RelevanceMode::Random) {
            return Err(Error::InvalidConfig(
                "random orderings are controlled by include_random, not relevance_modes".into(),
            ));
        }
        if self.schemes.is_empty() || self.directions.is_empty() {
            return Err(Error::InvalidConfig("need at least one scheme and one direction".into()));
        }
        if self.methods.is_empty() && !self.include_random {
            return Err(Error::InvalidConfig("nothing to evaluate: no methods and no random baseline".into()));
        }
        Ok(())
    }
}

/// One evaluation set and the session relation it has to the training data.
#[derive(Clone, Copy, Debug)]
pub struct EvalSplit<'a> {
    pub session_mode: SessionMode,
    pub data: &'a Dataset,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplitCounts {
    pub total: usize,
    pub correct: usize,
    pub evaluated: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MetricRow {
    pub explainer: Explainer,
    pub scheme: SchemeKind,
    pub session_mode: SessionMode,
    pub relevance_mode: RelevanceMode,
    pub aopc: Option<f64>,
    pub abpc: Option<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentResult {
    pub curves: Vec<PerturbationCurve>,
    pub metrics: Vec<MetricRow>,
    pub counts: BTreeMap<SessionMode, SplitCounts>,
    pub reference_samples: usize,
    pub config: ProtocolConfig,
}

impl ExperimentResult {
    pub fn curve(
        &self,
        explainer: Explainer,
        scheme: SchemeKind,
        direction: Direction,
        relevance_mode: RelevanceMode,
        session_mode: SessionMode,
    ) -> Option<&PerturbationCurve> {
        self.curves.iter().find(|c| {
            c.explainer == explainer
                && c.scheme == scheme
                && c.direction == direction
                && c.relevance_mode == relevance_mode
                && c.session_mode == session_mode
        })
    }

    pub fn metric(
        &self,
        explainer: Explainer,
        scheme: SchemeKind,
        relevance_mode: RelevanceMode,
        session_mode: SessionMode,
    ) -> Option<&MetricRow> {
        self.metrics.iter().find(|m| {
            m.explainer == explainer
                && m.scheme == scheme
                && m.relevance_mode == relevance_mode
                && m.session_mode == session_mode
        })
    }

    /// `method,scheme,direction,relevance_mode,session_mode,step,accuracy,mean_score`
    pub fn write_curves_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut w = csv::Writer::from_path(path)?;
        w.write_record([
            "method",
            "scheme",
            "direction",
            "relevance_mode",
            "session_mode",
            "step",
            "accuracy",
            "mean_score",
        ])?;
        for c in &self.curves {
            for (k, (acc, score)) in c.accuracy.iter().zip(&c.mean_score).enumerate() {
                w.write_record([
                    c.explainer.name(),
                    c.scheme.name(),
                    c.direction.name(),
                    c.relevance_mode.name(),
                    c.session_mode.name(),
                    &k.to_string(),
                    &acc.to_string(),
                    &score.to_string(),
                ])?;
            }
        }
        w.flush().map_err(|e| Error::io(path, e))
    }

    /// `method,scheme,session_mode,relevance_mode,aopc,abpc`; absent metrics are empty.
    pub fn write_metrics_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["method", "scheme", "session_mode", "relevance_mode", "aopc", "abpc"])?;
        let fmt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        for m in &self.metrics {
            w.write_record([
                m.explainer.name(),
                m.scheme.name(),
                m.session_mode.name(),
                m.relevance_mode.name(),
                &fmt(m.aopc),
                &fmt(m.abpc),
            ])?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }
}

/// Component relevance of every sample for one method and scheme.
fn component_scores(
    maps: &[RelevanceMap],
    scheme: &ComponentScheme,
    abs: bool,
) -> Result<Vec<ComponentRelevance>> {
    maps.iter()
        .map(|m| {
            if abs {
                let v: Vec<f64> = m.values.iter().map(|x| x.abs()).collect();
                aggregate_values(&v, scheme)
            } else {
                aggregate_values(&m.values, scheme)
            }
        })
        .collect()
}

fn explain_all(
    net: &NetworkSpec,
    data: &Dataset,
    method: Method,
    params: &AttributionParams,
) -> Result<Vec<RelevanceMap>> {
    let inputs: Vec<(&[f64], usize)> = data
        .samples()
        .iter()
        .map(|s| (s.features.as_slice(), s.label))
        .collect();
    attribute_batch(net, &inputs, method, params)
}

/// Orderings consumed by each curve direction.
struct DirectedRankings {
    descending: Vec<ComponentRanking>,
    ascending: Vec<ComponentRanking>,
    shared: bool,
}

impl DirectedRankings {
    fn from_scores(scores: &[ComponentRelevance], shared: bool) -> Self {
        Self {
            descending: scores
                .iter()
                .map(|s| rank_components(s, RankDirection::Descending))
                .collect(),
            ascending: scores
                .iter()
                .map(|s| rank_components(s, RankDirection::Ascending))
                .collect(),
            shared,
        }
    }

    fn random(n_samples: usize, n_components: usize, rng: &mut ChaCha8Rng) -> Self {
        let mut descending = Vec::with_capacity(n_samples);
        let mut ascending = Vec::with_capacity(n_samples);
        for _ in 0..n_samples {
            let mut order: Vec<usize> = (0..n_components).collect();
            order.shuffle(rng);
            let mut reversed = order.clone();
            reversed.reverse();
            descending.push(ComponentRanking {
                order,
                direction: RankDirection::Descending,
            });
            ascending.push(ComponentRanking {
                order: reversed,
                direction: RankDirection::Ascending,
            });
        }
        Self {
            descending,
            ascending,
            shared: false,
        }
    }

    fn pick(&self, direction: Direction) -> Rankings<'_> {
        let set = match direction {
            Direction::Lerf => &self.ascending,
            Direction::Morf | Direction::SingleComponent => &self.descending,
        };
        if self.shared {
            Rankings::Shared(&set[0])
        } else {
            Rankings::PerSample(set)
        }
    }
}

/// Per-class presumed rankings expanded to one ranking per evaluation sample.
fn per_class_rankings(
    reference: &[ComponentRelevance],
    reference_labels: &[usize],
    eval_labels: &[usize],
    n_classes: usize,
) -> Result<DirectedRankings> {
    let mut class_means = Vec::with_capacity(n_classes);
    for c in 0..n_classes {
        let members: Vec<ComponentRelevance> = reference
            .iter()
            .zip(reference_labels)
            .filter(|(_, &l)| l == c)
            .map(|(r, _)| r.clone())
            .collect();
        class_means.push(if members.is_empty() {
            None
        } else {
            Some(mean_relevance(&members)?)
        });
    }
    let overall = mean_relevance(reference)?;
    let scores: Vec<ComponentRelevance> = eval_labels
        .iter()
        .map(|&l| class_means[l].clone().unwrap_or_else(|| overall.clone()))
        .collect();
    Ok(DirectedRankings::from_scores(&scores, false))
}

fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Runs the full protocol.
///
/// Every evaluation split is first reduced to the samples `net` classifies
/// correctly. Real mode ranks components per sample from that sample's own
/// relevance; presumed mode applies one ranking built from the mean relevance
/// of correctly classified `train` samples; random mode draws a fresh
/// permutation per sample from `config.seed`.
pub fn run_protocol(
    net: &NetworkSpec,
    train: &Dataset,
    evals: &[EvalSplit<'_>],
    config: &ProtocolConfig,
) -> Result<ExperimentResult> {
    config.validate()?;
    let layout = train.layout();
    for split in evals {
        if split.data.layout() != layout {
            return Err(Error::Shape("training and evaluation data use different feature layouts".into()));
        }
    }
    let schemes: Vec<ComponentScheme> = config
        .schemes
        .iter()
        .map(|&k| ComponentScheme::new(k, layout))
        .collect();
    let wants_presumed = config.relevance_modes.contains(&RelevanceMode::Presumed);
    let wants_real = config.relevance_modes.contains(&RelevanceMode::Real);

    // presumed relevance: per-scheme component scores of the reference samples
    let mut reference_samples = 0;
    let mut reference_scores: BTreeMap<(Method, SchemeKind), Vec<ComponentRelevance>> = BTreeMap::new();
    let mut reference_labels = Vec::new();
    if wants_presumed && !config.methods.is_empty() {
        let mut reference = filter_correct(net, train)?;
        if reference.is_empty() {
            return Err(Error::Protocol(format!(
                "filter_correct left no correctly classified training samples (0 of {}) for presumed relevance",
                train.len()
            )));
        }
        if config.max_reference_samples > 0 {
            reference = reference.sample_at_most(config.max_reference_samples, config.seed);
        }
        reference_samples = reference.len();
        reference_labels = reference.labels();
        for &method in &config.methods {
            let maps = explain_all(net, &reference, method, &config.attribution)?;
            for scheme in &schemes {
                reference_scores.insert(
                    (method, scheme.kind()),
                    component_scores(&maps, scheme, config.abs_relevance)?,
                );
            }
        }
    }

    let mut curves = Vec::new();
    let mut metrics = Vec::new();
    let mut counts = BTreeMap::new();

    for (split_idx, split) in evals.iter().enumerate() {
        let correct = filter_correct(net, split.data)?;
        if correct.is_empty() {
            return Err(Error::Protocol(format!(
                "filter_correct left no correctly classified samples in the {} evaluation set (0 of {})",
                split.session_mode,
                split.data.len()
            )));
        }
        let evaluated = match config.max_eval_samples {
            0 => correct.clone(),
            cap => correct.sample_at_most(cap, config.seed ^ (split_idx as u64 + 1)),
        };
        counts.insert(
            split.session_mode,
            SplitCounts {
                total: split.data.len(),
                correct: correct.len(),
                evaluated: evaluated.len(),
            },
        );
        let inputs: Vec<&[f64]> = evaluated.samples().iter().map(|s| s.features.as_slice()).collect();
        let labels = evaluated.labels();

        let real_maps: Vec<(Method, Vec<RelevanceMap>)> = if wants_real {
            config
                .methods
                .iter()
                .map(|&m| Ok((m, explain_all(net, &evaluated, m, &config.attribution)?)))
                .collect::<Result<_>>()?
        } else {
            Vec::new()
        };

        for (scheme_idx, scheme) in schemes.iter().enumerate() {
            let mut emit = |explainer: Explainer, mode: RelevanceMode, rankings: &DirectedRankings| -> Result<()> {
                let mut by_direction: BTreeMap<Direction, CurveValues> = BTreeMap::new();
                for &direction in &config.directions {
                    let values = match direction {
                        Direction::SingleComponent => single_component_curve(
                            net,
                            &inputs,
                            rankings.pick(direction),
                            scheme,
                            config.score,
                        )?,
                        _ => perturbation_curve(
                            net,
                            &inputs,
                            rankings.pick(direction),
                            scheme,
                            direction,
                            config.score,
                        )?,
                    };
                    curves.push(PerturbationCurve {
                        explainer,
                        scheme: scheme.kind(),
                        direction,
                        relevance_mode: mode,
                        session_mode: split.session_mode,
                        accuracy: values.accuracy.clone(),
                        mean_score: values.mean_score.clone(),
                    });
                    by_direction.insert(direction, values);
                }
                let morf = by_direction.get(&Direction::Morf);
                let lerf = by_direction.get(&Direction::Lerf);
                let aopc = morf.map(|c| aopc_values(&c.mean_score));
                let abpc = match (morf, lerf) {
                    (Some(m), Some(l)) => Some(abpc_values(&m.mean_score, &l.mean_score)?),
                    _ => None,
                };
                metrics.push(MetricRow {
                    explainer,
                    scheme: scheme.kind(),
                    session_mode: split.session_mode,
                    relevance_mode: mode,
                    aopc,
                    abpc,
                });
                Ok(())
            };

            for &method in &config.methods {
                for &mode in &config.relevance_modes {
                    let rankings = match mode {
                        RelevanceMode::Real => {
                            let maps = &real_maps.iter().find(|(m, _)| *m == method).expect("computed above").1;
                            let scores = component_scores(maps, scheme, config.abs_relevance)?;
                            DirectedRankings::from_scores(&scores, false)
                        }
                        RelevanceMode::Presumed => {
                            let reference = &reference_scores[&(method, scheme.kind())];
                            if config.presumed_per_class {
                                per_class_rankings(reference, &reference_labels, &labels, train.n_classes())?
                            } else {
                                DirectedRankings::from_scores(&[mean_relevance(reference)?], true)
                            }
                        }
                        RelevanceMode::Random => unreachable!("rejected by validate"),
                    };
                    emit(Explainer::Method(method), mode, &rankings)?;
                }
            }
            if config.include_random {
                let stream = (split_idx * schemes.len() + scheme_idx) as u64;
                let mut rng = stream_rng(config.seed, stream);
                let rankings = DirectedRankings::random(inputs.len(), scheme.n_components(), &mut rng);
                emit(Explainer::Random, RelevanceMode::Random, &rankings)?;
            }
        }
    }

    Ok(ExperimentResult {
        curves,
        metrics,
        counts,
        reference_samples,
        config: config.clone(),
    })
}
