//! Dataset CSV format.
//!
//! ```text
//! # layout=channel-major channels=62 bands=delta,theta,alpha,beta,gamma classes=3
//! subject,session,trial,label,f000,f001,...,f309
//! 1,1,1,0,0.25,...
//! ```
//!
//! The `#` line is optional; without it the 62 × 5 channel-major layout with
//! three classes is assumed. A `layout=band-major` file is remapped to
//! channel-major on load.

use std::fs;
use std::io::Write;
use std::path::Path;

use super::{Dataset, FeatureLayout, Sample, BAND_NAMES, SEED_CLASSES};
use crate::error::{Error, Result};

const ID_COLUMNS: [&str; 4] = ["subject", "session", "trial", "label"];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Order {
    ChannelMajor,
    BandMajor,
}

struct Header {
    layout: FeatureLayout,
    n_classes: usize,
    order: Order,
}

fn feature_column(i: usize) -> String {
    format!("f{i:03}")
}

fn parse_header_comment(line: &str) -> Result<Header> {
    let mut header = Header {
        layout: FeatureLayout::default(),
        n_classes: SEED_CLASSES,
        order: Order::ChannelMajor,
    };
    let bad = |message: String| Error::Parse { line: 1, message };
    for token in line.trim_start_matches('#').split_whitespace() {
        let (key, value) = token
            .split_once('=')
            .ok_or_else(|| bad(format!("expected key=value in layout line, got `{token}`")))?;
        match key {
            "layout" => {
                header.order = match value {
                    "channel-major" => Order::ChannelMajor,
                    "band-major" => Order::BandMajor,
                    other => return Err(bad(format!("unknown layout `{other}`"))),
                }
            }
            "channels" => {
                header.layout.n_channels =
                    value.parse().map_err(|_| bad(format!("bad channel count `{value}`")))?
            }
            "bands" => header.layout.n_bands = value.split(',').count(),
            "classes" => {
                header.n_classes =
                    value.parse().map_err(|_| bad(format!("bad class count `{value}`")))?
            }
            other => return Err(bad(format!("unknown layout key `{other}`"))),
        }
    }
    if header.layout.n_channels == 0 || header.n_classes == 0 {
        return Err(bad("channel and class counts must be positive".into()));
    }
    Ok(header)
}

/// Reads and validates a dataset CSV, naming the offending line on failure.
pub fn load_dataset(path: impl AsRef<Path>) -> Result<Dataset> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_dataset(&text)
}

pub(crate) fn parse_dataset(text: &str) -> Result<Dataset> {
    let (header, body, line_offset) = match text.strip_prefix('#') {
        Some(_) => {
            let (first, rest) = text.split_once('\n').unwrap_or((text, ""));
            (parse_header_comment(first)?, rest, 1)
        }
        None => (
            Header {
                layout: FeatureLayout::default(),
                n_classes: SEED_CLASSES,
                order: Order::ChannelMajor,
            },
            text,
            0,
        ),
    };
    let d = header.layout.n_features();

    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(body.as_bytes());

    let columns = reader.headers()?.clone();
    let header_line = line_offset + 1;
    let expected: Vec<String> = ID_COLUMNS
        .iter()
        .map(|s| s.to_string())
        .chain((0..d).map(feature_column))
        .collect();
    if columns.len() != expected.len() {
        return Err(Error::Parse {
            line: header_line,
            message: format!(
                "header has {} columns, expected {} (4 id columns + {d} features)",
                columns.len(),
                expected.len()
            ),
        });
    }
    if let Some((got, want)) = columns.iter().zip(&expected).find(|(g, w)| g != w) {
        return Err(Error::Parse {
            line: header_line,
            message: format!("unexpected column `{got}`, expected `{want}`"),
        });
    }

    let mut samples = Vec::new();
    for record in reader.records() {
        let record = record?;
        let line = line_offset + record.position().map_or(0, |p| p.line());
        let err = |message: String| Error::Parse { line, message };
        if record.len() != expected.len() {
            return Err(err(format!(
                "row has {} columns, expected {}",
                record.len(),
                expected.len()
            )));
        }
        let id = |i: usize| -> Result<u32> {
            record[i]
                .parse()
                .map_err(|_| err(format!("bad {} `{}`", ID_COLUMNS[i], &record[i])))
        };
        let (subject, session, trial) = (id(0)?, id(1)?, id(2)?);
        let label: usize = record[3]
            .parse()
            .map_err(|_| err(format!("bad label `{}`", &record[3])))?;
        if label >= header.n_classes {
            return Err(err(format!("unknown label {label} (classes 0..{})", header.n_classes)));
        }
        let mut raw = Vec::with_capacity(d);
        for (j, field) in record.iter().skip(4).enumerate() {
            let v: f64 = field
                .parse()
                .map_err(|_| err(format!("bad value `{field}` in {}", feature_column(j))))?;
            if !v.is_finite() {
                return Err(err(format!("non-finite value in {}", feature_column(j))));
            }
            raw.push(v);
        }
        let features = match header.order {
            Order::ChannelMajor => raw,
            Order::BandMajor => {
                let l = header.layout;
                let mut out = vec![0.0; d];
                for b in 0..l.n_bands {
                    for c in 0..l.n_channels {
                        out[l.index(c, b)] = raw[b * l.n_channels + c];
                    }
                }
                out
            }
        };
        samples.push(Sample {
            features,
            label,
            subject,
            session,
            trial,
        });
    }
    Dataset::new(header.layout, header.n_classes, samples)
}

pub(crate) fn render_dataset(dataset: &Dataset) -> String {
    let layout = dataset.layout();
    let bands: Vec<String> = if layout.n_bands == BAND_NAMES.len() {
        BAND_NAMES.iter().map(|s| s.to_string()).collect()
    } else {
        (0..layout.n_bands).map(|b| format!("b{b}")).collect()
    };
    let mut out = format!(
        "# layout=channel-major channels={} bands={} classes={}\n",
        layout.n_channels,
        bands.join(","),
        dataset.n_classes()
    );
    let mut writer = csv::Writer::from_writer(Vec::new());
    let header: Vec<String> = ID_COLUMNS
        .iter()
        .map(|s| s.to_string())
        .chain((0..layout.n_features()).map(feature_column))
        .collect();
    writer.write_record(&header).expect("in-memory write");
    for s in dataset.samples() {
        let mut row = vec![
            s.subject.to_string(),
            s.session.to_string(),
            s.trial.to_string(),
            s.label.to_string(),
        ];
        row.extend(s.features.iter().map(|v| v.to_string()));
        writer.write_record(&row).expect("in-memory write");
    }
    let bytes = writer.into_inner().expect("in-memory flush");
    out.push_str(std::str::from_utf8(&bytes).expect("csv output is utf-8"));
    out
}

pub fn save_dataset(dataset: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    file.write_all(render_dataset(dataset).as_bytes())
        .map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn header(d: usize) -> String {
        let mut h = ID_COLUMNS.join(",");
        for i in 0..d {
            h.push(',');
            h.push_str(&feature_column(i));
        }
        h
    }

    fn row(d: usize, label: usize) -> String {
        let mut r = format!("1,1,3,{label}");
        for i in 0..d {
            r.push_str(&format!(",{}", i as f64 * 0.01));
        }
        r
    }

    #[test]
    fn minimal_file_loads_one_sample() {
        let text = format!("{}\n{}\n", header(310), row(310, 2));
        let ds = parse_dataset(&text).unwrap();
        assert_eq!(ds.len(), 1);
        assert_eq!(ds.samples()[0].label, 2);
        assert_eq!(ds.samples()[0].trial, 3);
        assert_eq!(ds.samples()[0].features[309], 3.09);
    }

    #[test]
    fn short_row_reports_its_line() {
        let text = format!("{}\n{}\n{}\n", header(310), row(310, 0), row(309, 1));
        match parse_dataset(&text) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("expected parse error, got {other:?}"),
        }
        let with_comment = format!("# layout=channel-major\n{text}");
        match parse_dataset(&with_comment) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 4),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn rejects_bad_values() {
        for bad in ["1,1,1,3", "1,1,1,x", "1,1,1,0"] {
            let mut r = bad.to_string();
            let nan = bad.ends_with(",0");
            for i in 0..310 {
                r.push_str(if nan && i == 7 { ",NaN" } else { ",0.5" });
            }
            let text = format!("{}\n{r}\n", header(310));
            assert!(
                matches!(parse_dataset(&text), Err(Error::Parse { line: 2, .. })),
                "{bad}"
            );
        }
    }

    #[test]
    fn rejects_wrong_header() {
        let text = format!("{}\n{}\n", header(309), row(309, 0));
        assert!(matches!(parse_dataset(&text), Err(Error::Parse { line: 1, .. })));
    }

    #[test]
    fn band_major_is_remapped() {
        // 2 channels × 2 bands, band-major: c0b0, c1b0, c0b1, c1b1
        let text = "# layout=band-major channels=2 bands=x,y classes=2\n\
                    subject,session,trial,label,f000,f001,f002,f003\n\
                    1,1,1,1,10,11,20,21\n";
        let ds = parse_dataset(text).unwrap();
        assert_eq!(ds.layout(), FeatureLayout::new(2, 2).unwrap());
        assert_eq!(ds.samples()[0].features, vec![10.0, 20.0, 11.0, 21.0]);
    }
}
