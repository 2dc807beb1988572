//! Grouping feature relevance into features, frequency bands or channels.

use std::cmp::Ordering::Equal;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::attribution::RelevanceMap;
use crate::data::FeatureLayout;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SchemeKind {
    Feature,
    Band,
    Channel,
}

impl SchemeKind {
    pub const ALL: [SchemeKind; 3] = [SchemeKind::Feature, SchemeKind::Band, SchemeKind::Channel];

    pub fn name(self) -> &'static str {
        match self {
            SchemeKind::Feature => "feature",
            SchemeKind::Band => "band",
            SchemeKind::Channel => "channel",
        }
    }
}

impl fmt::Display for SchemeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SchemeKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "feature" => Ok(SchemeKind::Feature),
            "band" => Ok(SchemeKind::Band),
            "channel" | "electrode" => Ok(SchemeKind::Channel),
            other => Err(Error::InvalidConfig(format!("unknown scheme `{other}`"))),
        }
    }
}

/// A partition of the feature indices into perturbation units.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ComponentScheme {
    kind: SchemeKind,
    n_features: usize,
    membership: Vec<Vec<usize>>,
}

impl ComponentScheme {
    pub fn new(kind: SchemeKind, layout: FeatureLayout) -> Self {
        let membership = match kind {
            SchemeKind::Feature => (0..layout.n_features()).map(|f| vec![f]).collect(),
            SchemeKind::Band => (0..layout.n_bands)
                .map(|b| (0..layout.n_channels).map(|c| layout.index(c, b)).collect())
                .collect(),
            SchemeKind::Channel => (0..layout.n_channels)
                .map(|c| (0..layout.n_bands).map(|b| layout.index(c, b)).collect())
                .collect(),
        };
        Self {
            kind,
            n_features: layout.n_features(),
            membership,
        }
    }

    pub fn kind(&self) -> SchemeKind {
        self.kind
    }

    pub fn n_components(&self) -> usize {
        self.membership.len()
    }

    pub fn n_features(&self) -> usize {
        self.n_features
    }

    pub fn members(&self, component: usize) -> &[usize] {
        &self.membership[component]
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ComponentRelevance {
    pub kind: SchemeKind,
    pub scores: Vec<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RankDirection {
    /// Most relevant first.
    Descending,
    /// Least relevant first.
    Ascending,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ComponentRanking {
    pub order: Vec<usize>,
    pub direction: RankDirection,
}

/// Mean of the feature relevances belonging to each component.
pub fn aggregate(map: &RelevanceMap, scheme: &ComponentScheme) -> Result<ComponentRelevance> {
    aggregate_values(&map.values, scheme)
}

pub fn aggregate_values(values: &[f64], scheme: &ComponentScheme) -> Result<ComponentRelevance> {
    if values.len() != scheme.n_features {
        return Err(Error::Shape(format!(
            "relevance has {} features, {} scheme covers {}",
            values.len(),
            scheme.kind,
            scheme.n_features
        )));
    }
    let scores = scheme
        .membership
        .iter()
        .map(|m| m.iter().map(|&f| values[f]).sum::<f64>() / m.len() as f64)
        .collect();
    Ok(ComponentRelevance {
        kind: scheme.kind,
        scores,
    })
}

/// Stable sort by score; equal scores keep ascending component index.
pub fn rank_components(rel: &ComponentRelevance, direction: RankDirection) -> ComponentRanking {
    let mut order: Vec<usize> = (0..rel.scores.len()).collect();
    let s = &rel.scores;
    match direction {
        RankDirection::Descending => order.sort_by(|&a, &b| s[b].partial_cmp(&s[a]).unwrap_or(Equal)),
        RankDirection::Ascending => order.sort_by(|&a, &b| s[a].partial_cmp(&s[b]).unwrap_or(Equal)),
    }
    ComponentRanking { order, direction }
}

/// Elementwise mean of component relevances sharing one scheme.
pub fn mean_relevance(maps: &[ComponentRelevance]) -> Result<ComponentRelevance> {
    let first = maps
        .first()
        .ok_or_else(|| Error::EmptyDataset("mean relevance of an empty list".into()))?;
    let n = first.scores.len();
    let mut sum = vec![0.0; n];
    for m in maps {
        if m.kind != first.kind || m.scores.len() != n {
            return Err(Error::Shape(format!(
                "cannot average {} relevance with {} relevance",
                m.kind, first.kind
            )));
        }
        for (acc, v) in sum.iter_mut().zip(&m.scores) {
            *acc += v;
        }
    }
    let k = maps.len() as f64;
    Ok(ComponentRelevance {
        kind: first.kind,
        scores: sum.into_iter().map(|v| v / k).collect(),
    })
}

/// Writes `scheme,component_id,score` rows.
pub fn write_component_csv(path: impl AsRef<Path>, rels: &[ComponentRelevance]) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["scheme", "component_id", "score"])?;
    for rel in rels {
        for (c, score) in rel.scores.iter().enumerate() {
            w.write_record([rel.kind.name(), &c.to_string(), &score.to_string()])?;
        }
    }
    w.flush().map_err(|e| Error::io(path, e))
}
