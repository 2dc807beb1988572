//! Per-feature relevance for one input and one target logit.
//!
//! All methods explain the pre-softmax logit of the target class. Saliency
//! returns gradient magnitudes; every other method returns signed values.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{dot, Activation, ForwardTrace, NetworkSpec, Scratch};

/// Threshold below which DeepLIFT falls back to the local gradient.
const DEEPLIFT_DELTA_FLOOR: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Saliency,
    GuidedBp,
    LrpZ,
    IntegratedGradients,
    Deeplift,
    Occlusion,
}

impl Method {
    /// The five explainers compared by the evaluation protocol.
    pub const EXPLAINERS: [Method; 5] = [
        Method::Saliency,
        Method::GuidedBp,
        Method::LrpZ,
        Method::IntegratedGradients,
        Method::Deeplift,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::Saliency => "saliency",
            Method::GuidedBp => "guided_bp",
            Method::LrpZ => "lrp_z",
            Method::IntegratedGradients => "integrated_gradients",
            Method::Deeplift => "deeplift",
            Method::Occlusion => "occlusion",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let m = match s {
            "saliency" => Method::Saliency,
            "guided_bp" | "guided_backprop" => Method::GuidedBp,
            "lrp_z" | "lrp" => Method::LrpZ,
            "integrated_gradients" | "ig" => Method::IntegratedGradients,
            "deeplift" => Method::Deeplift,
            "occlusion" => Method::Occlusion,
            other => return Err(Error::InvalidConfig(format!("unknown method `{other}`"))),
        };
        Ok(m)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RelevanceMap {
    pub values: Vec<f64>,
    pub target_class: usize,
    pub method: Method,
}

impl RelevanceMap {
    fn checked(values: Vec<f64>, target_class: usize, method: Method) -> Result<Self> {
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Numeric(format!("{method} relevance of feature {i} is not finite")));
        }
        Ok(Self {
            values,
            target_class,
            method,
        })
    }

    pub fn sum(&self) -> f64 {
        self.values.iter().sum()
    }
}

/// Reference input for path- and difference-based methods.
#[derive(Clone, Debug, PartialEq)]
pub struct Baseline {
    reference: Vec<f64>,
}

impl Baseline {
    pub fn zeros(d: usize) -> Self {
        Self {
            reference: vec![0.0; d],
        }
    }

    pub fn new(reference: Vec<f64>) -> Result<Self> {
        if reference.iter().any(|v| !v.is_finite()) {
            return Err(Error::Domain("baseline must be finite".into()));
        }
        Ok(Self { reference })
    }

    pub fn values(&self) -> &[f64] {
        &self.reference
    }

    fn check(&self, d: usize) -> Result<()> {
        if self.reference.len() != d {
            return Err(Error::Shape(format!(
                "baseline has {} features, input has {d}",
                self.reference.len()
            )));
        }
        Ok(())
    }
}

/// Tunables shared by the dispatching [`attribute`] entry point.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AttributionParams {
    pub ig_steps: usize,
    pub lrp_epsilon: f64,
    /// `None` means the all-zero baseline.
    pub baseline: Option<Vec<f64>>,
}

impl Default for AttributionParams {
    fn default() -> Self {
        Self {
            ig_steps: 50,
            lrp_epsilon: 1e-6,
            baseline: None,
        }
    }
}

impl AttributionParams {
    pub fn baseline_for(&self, d: usize) -> Result<Baseline> {
        match &self.baseline {
            Some(v) => Baseline::new(v.clone()),
            None => Ok(Baseline::zeros(d)),
        }
    }
}

fn prepare(net: &NetworkSpec, x: &[f64], class: usize) -> Result<ForwardTrace> {
    net.check_class(class)?;
    net.forward(x)
}

pub fn saliency(net: &NetworkSpec, x: &[f64], class: usize) -> Result<RelevanceMap> {
    let trace = prepare(net, x, class)?;
    let grad = net.gradient_from_trace(&trace, class);
    RelevanceMap::checked(grad.into_iter().map(f64::abs).collect(), class, Method::Saliency)
}

/// Backward pass that only lets positive signal through active rectifiers.
pub fn guided_backprop(net: &NetworkSpec, x: &[f64], class: usize) -> Result<RelevanceMap> {
    let trace = prepare(net, x, class)?;
    let mut seed = vec![0.0; net.n_classes()];
    seed[class] = 1.0;
    let values = net.backpropagate(seed, |l, k, s| {
        if trace.layers[l].pre_activation[k] > 0.0 && s >= 0.0 {
            s
        } else {
            0.0
        }
    });
    RelevanceMap::checked(values, class, Method::GuidedBp)
}

/// LRP z-rule with an ε stabiliser: `R_j = Σ_k a_j w_jk / (z_k + sign(z_k)·ε) · R_k`.
///
/// Biases enter `z_k` but are not redistributed, so relevance is conserved
/// exactly only for bias-free networks. `sign(0)` is taken as `+1`.
pub fn lrp_z(net: &NetworkSpec, x: &[f64], class: usize, epsilon: f64) -> Result<RelevanceMap> {
    if !(epsilon > 0.0 && epsilon.is_finite()) {
        return Err(Error::InvalidConfig(format!("lrp epsilon must be positive, got {epsilon}")));
    }
    let trace = prepare(net, x, class)?;
    let mut relevance = vec![0.0; net.n_classes()];
    relevance[class] = trace.logits[class];
    for (l, layer) in net.layers().iter().enumerate().rev() {
        let z = &trace.layers[l].pre_activation;
        let ratio: Vec<f64> = relevance
            .iter()
            .zip(z)
            .map(|(&r, &zk)| {
                let stab = if zk >= 0.0 { epsilon } else { -epsilon };
                r / (zk + stab)
            })
            .collect();
        let input = trace.layer_input(l);
        relevance = input
            .iter()
            .enumerate()
            .map(|(j, &a)| if a == 0.0 { 0.0 } else { a * dot(layer.column(j), &ratio) })
            .collect();
        if relevance.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric(format!("non-finite relevance below layer {l}")));
        }
    }
    RelevanceMap::checked(relevance, class, Method::LrpZ)
}

/// Path-integrated gradients along the straight line from the baseline,
/// midpoint Riemann rule with `steps` evaluations.
pub fn integrated_gradients(
    net: &NetworkSpec,
    x: &[f64],
    class: usize,
    baseline: &Baseline,
    steps: usize,
) -> Result<RelevanceMap> {
    if steps == 0 {
        return Err(Error::InvalidConfig("integrated gradients needs at least one step".into()));
    }
    prepare(net, x, class)?;
    baseline.check(x.len())?;
    let reference = baseline.values();
    let delta: Vec<f64> = x.iter().zip(reference).map(|(a, b)| a - b).collect();
    let mut total = vec![0.0; x.len()];
    let mut point = vec![0.0; x.len()];
    for s in 0..steps {
        let alpha = (s as f64 + 0.5) / steps as f64;
        for ((p, &r), &d) in point.iter_mut().zip(reference).zip(&delta) {
            *p = r + alpha * d;
        }
        let trace = net.forward_unchecked(&point);
        for (t, g) in total.iter_mut().zip(net.gradient_from_trace(&trace, class)) {
            *t += g;
        }
    }
    let values = total
        .iter()
        .zip(&delta)
        .map(|(g, d)| d * g / steps as f64)
        .collect();
    RelevanceMap::checked(values, class, Method::IntegratedGradients)
}

/// DeepLIFT with the Rescale rule: multipliers `Δpost/Δpre` at rectifiers,
/// weights at linear maps, then `R_i = m_i · (x_i − x_ref_i)`.
pub fn deeplift_rescale(
    net: &NetworkSpec,
    x: &[f64],
    class: usize,
    baseline: &Baseline,
) -> Result<RelevanceMap> {
    let trace = prepare(net, x, class)?;
    baseline.check(x.len())?;
    let reference = net.forward(baseline.values())?;
    let mut seed = vec![0.0; net.n_classes()];
    seed[class] = 1.0;
    let multipliers = net.backpropagate(seed, |l, k, s| {
        let (now, then) = (&trace.layers[l], &reference.layers[l]);
        let d_pre = now.pre_activation[k] - then.pre_activation[k];
        if d_pre.abs() > DEEPLIFT_DELTA_FLOOR {
            s * (now.post_activation[k] - then.post_activation[k]) / d_pre
        } else {
            s * Activation::Rectifier.derivative(now.pre_activation[k])
        }
    });
    let values = multipliers
        .iter()
        .zip(x.iter().zip(baseline.values()))
        .map(|(m, (a, b))| m * (a - b))
        .collect();
    RelevanceMap::checked(values, class, Method::Deeplift)
}

/// Brute-force occlusion: change in the target logit when one feature is zeroed.
pub fn occlusion(net: &NetworkSpec, x: &[f64], class: usize) -> Result<RelevanceMap> {
    let trace = prepare(net, x, class)?;
    let full = trace.logits[class];
    let mut scratch = Scratch::default();
    let mut probe = x.to_vec();
    let mut values = vec![0.0; x.len()];
    for i in 0..x.len() {
        if x[i] == 0.0 {
            continue;
        }
        probe[i] = 0.0;
        values[i] = full - net.logits_with(&probe, &mut scratch)[class];
        probe[i] = x[i];
    }
    RelevanceMap::checked(values, class, Method::Occlusion)
}

/// Runs `method` with the given parameters.
pub fn attribute(
    net: &NetworkSpec,
    x: &[f64],
    class: usize,
    method: Method,
    params: &AttributionParams,
) -> Result<RelevanceMap> {
    match method {
        Method::Saliency => saliency(net, x, class),
        Method::GuidedBp => guided_backprop(net, x, class),
        Method::LrpZ => lrp_z(net, x, class, params.lrp_epsilon),
        Method::IntegratedGradients => {
            integrated_gradients(net, x, class, &params.baseline_for(x.len())?, params.ig_steps)
        }
        Method::Deeplift => deeplift_rescale(net, x, class, &params.baseline_for(x.len())?),
        Method::Occlusion => occlusion(net, x, class),
    }
}

/// Explains every `(input, class)` pair; results are in input order.
pub fn attribute_batch(
    net: &NetworkSpec,
    inputs: &[(&[f64], usize)],
    method: Method,
    params: &AttributionParams,
) -> Result<Vec<RelevanceMap>> {
    inputs
        .par_iter()
        .map(|&(x, class)| attribute(net, x, class, method, params))
        .collect()
}

/// One row of a relevance file.
#[derive(Clone, Debug, PartialEq)]
pub struct RelevanceRecord {
    pub sample_id: usize,
    pub map: RelevanceMap,
}

/// Writes `method,sample_id,target_class,f000..` rows.
pub fn write_relevance_csv(path: impl AsRef<Path>, records: &[RelevanceRecord]) -> Result<()> {
    let path = path.as_ref();
    let d = records.first().map_or(0, |r| r.map.values.len());
    let mut w = csv::Writer::from_path(path)?;
    let mut header = vec!["method".to_string(), "sample_id".into(), "target_class".into()];
    header.extend((0..d).map(|i| format!("f{i:03}")));
    w.write_record(&header)?;
    for r in records {
        if r.map.values.len() != d {
            return Err(Error::Shape("relevance maps of different lengths".into()));
        }
        let mut row = vec![
            r.map.method.name().to_string(),
            r.sample_id.to_string(),
            r.map.target_class.to_string(),
        ];
        row.extend(r.map.values.iter().map(f64::to_string));
        w.write_record(&row)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_relevance_csv(path: impl AsRef<Path>) -> Result<Vec<RelevanceRecord>> {
    let mut reader = csv::Reader::from_path(path.as_ref())?;
    let mut out = Vec::new();
    for record in reader.records() {
        let record = record?;
        let line = record.position().map_or(0, |p| p.line());
        let err = |message: String| Error::Parse { line, message };
        if record.len() < 3 {
            return Err(err("relevance row needs method,sample_id,target_class".into()));
        }
        let method: Method = record[0].parse().map_err(|e: Error| err(e.to_string()))?;
        let sample_id = record[1].parse().map_err(|_| err("bad sample_id".into()))?;
        let target_class = record[2].parse().map_err(|_| err("bad target_class".into()))?;
        let values = record
            .iter()
            .skip(3)
            .map(|v| v.parse::<f64>().map_err(|_| err(format!("bad value `{v}`"))))
            .collect::<Result<Vec<_>>>()?;
        out.push(RelevanceRecord {
            sample_id,
            map: RelevanceMap {
                values,
                target_class,
                method,
            },
        });
    }
    Ok(out)
}
