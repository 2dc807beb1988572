//! Joining metric tables from several runs into one summary.

use std::collections::BTreeMap;
use std::path::Path;

use super::{Explainer, MetricRow, RelevanceMode, SessionMode};
use crate::components::SchemeKind;
use crate::error::{Error, Result};

/// Mean and sample standard deviation of a metric over runs.
#[derive(Clone, Debug, PartialEq)]
pub struct SummaryRow {
    pub explainer: Explainer,
    pub scheme: SchemeKind,
    pub session_mode: SessionMode,
    pub relevance_mode: RelevanceMode,
    pub n_runs: usize,
    pub aopc_mean: Option<f64>,
    pub aopc_std: Option<f64>,
    pub abpc_mean: Option<f64>,
    pub abpc_std: Option<f64>,
}

fn parse_field<T: std::str::FromStr<Err = Error>>(field: &str) -> Result<T> {
    field.parse()
}

fn parse_optional(field: &str, line: u64) -> Result<Option<f64>> {
    if field.is_empty() {
        return Ok(None);
    }
    let v: f64 = field.parse().map_err(|_| Error::Parse {
        line,
        message: format!("`{field}` is not a number"),
    })?;
    if !v.is_finite() {
        return Err(Error::Parse {
            line,
            message: format!("non-finite metric `{field}`"),
        });
    }
    Ok(Some(v))
}

/// Reads a metrics table written by [`super::ExperimentResult::write_metrics_csv`].
pub fn read_metrics_csv(path: impl AsRef<Path>) -> Result<Vec<MetricRow>> {
    let path = path.as_ref();
    let mut r = csv::Reader::from_path(path)?;
    let expected = ["method", "scheme", "session_mode", "relevance_mode", "aopc", "abpc"];
    let header = r.headers()?.clone();
    if header.iter().ne(expected) {
        return Err(Error::Parse {
            line: 1,
            message: format!("expected header {}", expected.join(",")),
        });
    }
    let mut rows = Vec::new();
    for record in r.records() {
        let record = record?;
        let line = record.position().map_or(0, |p| p.line());
        let with_line = |e: Error| Error::Parse {
            line,
            message: e.to_string(),
        };
        rows.push(MetricRow {
            explainer: parse_field(&record[0]).map_err(with_line)?,
            scheme: parse_field(&record[1]).map_err(with_line)?,
            session_mode: parse_field(&record[2]).map_err(with_line)?,
            relevance_mode: parse_field(&record[3]).map_err(with_line)?,
            aopc: parse_optional(&record[4], line)?,
            abpc: parse_optional(&record[5], line)?,
        });
    }
    Ok(rows)
}

/// Order-independent mean and sample std (`None` below one or two values).
fn mean_std(values: &mut [f64]) -> (Option<f64>, Option<f64>) {
    if values.is_empty() {
        return (None, None);
    }
    values.sort_by(f64::total_cmp);
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let std = (values.len() > 1)
        .then(|| (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt());
    (Some(mean), std)
}

/// Groups rows by (method, scheme, session mode, relevance mode).
///
/// Values are sorted before reduction, so the result does not depend on the
/// order in which runs were supplied.
pub fn summarize_metrics(rows: &[MetricRow]) -> Vec<SummaryRow> {
    type Key = (Explainer, SchemeKind, SessionMode, RelevanceMode);
    let mut groups: BTreeMap<Key, (usize, Vec<f64>, Vec<f64>)> = BTreeMap::new();
    for r in rows {
        let g = groups
            .entry((r.explainer, r.scheme, r.session_mode, r.relevance_mode))
            .or_default();
        g.0 += 1;
        g.1.extend(r.aopc);
        g.2.extend(r.abpc);
    }
    groups
        .into_iter()
        .map(|((explainer, scheme, session_mode, relevance_mode), (n, mut aopc, mut abpc))| {
            let (aopc_mean, aopc_std) = mean_std(&mut aopc);
            let (abpc_mean, abpc_std) = mean_std(&mut abpc);
            SummaryRow {
                explainer,
                scheme,
                session_mode,
                relevance_mode,
                n_runs: n,
                aopc_mean,
                aopc_std,
                abpc_mean,
                abpc_std,
            }
        })
        .collect()
}

pub fn write_summary_csv(path: impl AsRef<Path>, rows: &[SummaryRow]) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv::Writer::from_path(path)?;
    w.write_record([
        "method",
        "scheme",
        "session_mode",
        "relevance_mode",
        "n_runs",
        "aopc_mean",
        "aopc_std",
        "abpc_mean",
        "abpc_std",
    ])?;
    let fmt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    for r in rows {
        w.write_record([
            r.explainer.name(),
            r.scheme.name(),
            r.session_mode.name(),
            r.relevance_mode.name(),
            &r.n_runs.to_string(),
            &fmt(r.aopc_mean),
            &fmt(r.aopc_std),
            &fmt(r.abpc_mean),
            &fmt(r.abpc_std),
        ])?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}
