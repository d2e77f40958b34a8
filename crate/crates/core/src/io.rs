//! File formats: recordings as CSV with a leading time column, annotations
//! and models as JSON, detector and sweep output as CSV tables.
//!
//! Floating-point values are written with 17 significant digits so every
//! file reads back bit-exactly.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use ndarray::Array2;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::detector::{SweepResult, WindowResult, REPORTED_EIGENVALUES};
use crate::dyca::{DycaDiagnostics, DycaModel};
use crate::signal::{Signal, SignalError};
use crate::synth::{validate_events, Event, EventError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum IoError {
    #[error("{path}: {message}")]
    Io { path: String, message: String },
    #[error("{path}:{line}:{column}: {message}")]
    Parse {
        path: String,
        line: u64,
        column: usize,
        message: String,
    },
    #[error("{path}: non-uniform sampling, interval ending on line {line} deviates by {relative_error:e} (relative)")]
    NonUniformSampling {
        path: String,
        line: u64,
        relative_error: f64,
    },
    #[error("{path}:{line}:{column}: non-finite sample")]
    NonFiniteSample { path: String, line: u64, column: usize },
    #[error("{path}: events [{}, {}) and [{}, {}) overlap", .first.0, .first.1, .second.0, .second.1)]
    Overlap {
        path: String,
        first: (f64, f64),
        second: (f64, f64),
    },
    #[error("{path}: {source}")]
    Signal { path: String, source: SignalError },
}

/// Relative tolerance on sample-interval jitter.
pub const SAMPLING_TOLERANCE: f64 = 1e-6;
/// Marker for undefined values in CSV output.
pub const NA: &str = "NA";

pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| NA.to_string(), fmt_f64)
}

fn io_err(path: &str, e: impl std::fmt::Display) -> IoError {
    IoError::Io {
        path: path.to_string(),
        message: e.to_string(),
    }
}

fn open(path: &Path) -> Result<BufReader<File>, IoError> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|e| io_err(&path.display().to_string(), e))
}

fn create(path: &Path) -> Result<BufWriter<File>, IoError> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| io_err(&path.display().to_string(), e))
}

/// Reads `time,<ch1>,<ch2>,…`; the sample rate comes from the time column.
pub fn read_recording(path: &Path) -> Result<Signal, IoError> {
    read_recording_from(open(path)?, &path.display().to_string())
}

pub fn read_recording_from(reader: impl Read, name: &str) -> Result<Signal, IoError> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let header = rdr.headers().map_err(|e| csv_err(name, e))?.clone();
    if header.len() < 2 || !header[0].eq_ignore_ascii_case("time") {
        return Err(IoError::Parse {
            path: name.to_string(),
            line: 1,
            column: 1,
            message: "header must start with `time` followed by at least one channel".into(),
        });
    }
    let channels = header.len() - 1;
    let names: Vec<String> = header.iter().skip(1).map(str::to_string).collect();
    let mut times = Vec::new();
    let mut lines = Vec::new();
    let mut values: Vec<f64> = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| csv_err(name, e))?;
        let line = rec.position().map_or(0, |p| p.line());
        if rec.len() != header.len() {
            return Err(IoError::Parse {
                path: name.to_string(),
                line,
                column: rec.len().min(header.len()) + 1,
                message: format!("expected {} fields, found {}", header.len(), rec.len()),
            });
        }
        for (col, field) in rec.iter().enumerate() {
            let v: f64 = field.parse().map_err(|_| IoError::Parse {
                path: name.to_string(),
                line,
                column: col + 1,
                message: format!("`{field}` is not a number"),
            })?;
            if !v.is_finite() {
                return Err(IoError::NonFiniteSample {
                    path: name.to_string(),
                    line,
                    column: col + 1,
                });
            }
            if col == 0 {
                times.push(v);
            } else {
                values.push(v);
            }
        }
        lines.push(line);
    }
    let t = times.len();
    if t < 3 {
        return Err(IoError::Parse {
            path: name.to_string(),
            line: lines.last().copied().unwrap_or(1),
            column: 1,
            message: format!("need at least 3 samples, found {t}"),
        });
    }
    let mean_dt = (times[t - 1] - times[0]) / (t - 1) as f64;
    if !(mean_dt > 0.0) {
        return Err(IoError::Parse {
            path: name.to_string(),
            line: lines[t - 1],
            column: 1,
            message: "time column must increase".into(),
        });
    }
    let (worst, rel) = (1..t)
        .map(|i| (i, ((times[i] - times[i - 1]) - mean_dt).abs() / mean_dt))
        .fold((0, 0.0f64), |acc, x| if x.1 > acc.1 { x } else { acc });
    if rel > SAMPLING_TOLERANCE {
        return Err(IoError::NonUniformSampling {
            path: name.to_string(),
            line: lines[worst],
            relative_error: rel,
        });
    }
    let data = Array2::from_shape_vec((t, channels), values)
        .expect("row lengths checked")
        .reversed_axes()
        .as_standard_layout()
        .to_owned();
    Signal::new(data, 1.0 / mean_dt)
        .and_then(|s| s.with_channel_names(names))
        .map_err(|source| IoError::Signal {
            path: name.to_string(),
            source,
        })
}

fn csv_err(name: &str, e: csv::Error) -> IoError {
    let line = e.position().map_or(0, |p| p.line());
    IoError::Parse {
        path: name.to_string(),
        line,
        column: 0,
        message: e.to_string(),
    }
}

pub fn write_recording(path: &Path, signal: &Signal) -> Result<(), IoError> {
    let name = path.display().to_string();
    let mut w = create(path)?;
    write_recording_to(&mut w, signal).map_err(|e| io_err(&name, e))?;
    w.flush().map_err(|e| io_err(&name, e))
}

pub fn write_recording_to(w: &mut (impl Write + ?Sized), signal: &Signal) -> std::io::Result<()> {
    let labels = signal.channel_labels();
    writeln!(w, "time,{}", labels.join(","))?;
    let fs = signal.sample_rate_hz();
    let data = signal.data();
    let mut line = String::new();
    for i in 0..signal.n_samples() {
        line.clear();
        line.push_str(&fmt_f64(i as f64 / fs));
        for c in 0..signal.n_channels() {
            line.push(',');
            line.push_str(&fmt_f64(data[[c, i]]));
        }
        writeln!(w, "{line}")?;
    }
    Ok(())
}

/// `[{"start_s": …, "end_s": …, "label": …}, …]`
pub fn read_annotations(path: &Path) -> Result<Vec<Event>, IoError> {
    let mut text = String::new();
    open(path)?
        .read_to_string(&mut text)
        .map_err(|e| io_err(&path.display().to_string(), e))?;
    parse_annotations(&text, &path.display().to_string())
}

pub fn parse_annotations(text: &str, name: &str) -> Result<Vec<Event>, IoError> {
    let events: Vec<Event> = serde_json::from_str(text).map_err(|e| IoError::Parse {
        path: name.to_string(),
        line: e.line() as u64,
        column: e.column(),
        message: e.to_string(),
    })?;
    validate_events(&events, None).map_err(|e| match e {
        EventError::Overlap { first, second } => IoError::Overlap {
            path: name.to_string(),
            first,
            second,
        },
        other => IoError::Parse {
            path: name.to_string(),
            line: 0,
            column: 0,
            message: other.to_string(),
        },
    })?;
    Ok(events)
}

pub fn write_annotations(path: &Path, events: &[Event]) -> Result<(), IoError> {
    write_json(path, &events)
}

pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<(), IoError> {
    let name = path.display().to_string();
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, value).map_err(|e| io_err(&name, e))?;
    writeln!(w).and_then(|_| w.flush()).map_err(|e| io_err(&name, e))
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T, IoError> {
    let name = path.display().to_string();
    serde_json::from_reader(open(path)?).map_err(|e| IoError::Parse {
        path: name,
        line: e.line() as u64,
        column: e.column(),
        message: e.to_string(),
    })
}

/// Serializable view of a [`DycaModel`]; matrices are stored column-wise,
/// one inner array per vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelDocument {
    pub channels: Vec<String>,
    pub sample_rate_hz: f64,
    pub start_s: f64,
    pub end_s: f64,
    pub eigenvalues: Vec<f64>,
    pub m: usize,
    pub u_vectors: Vec<Vec<f64>>,
    pub v_vectors: Vec<Vec<f64>>,
    pub basis: Vec<Vec<f64>>,
    pub linear_coeffs: Option<Vec<Vec<f64>>>,
    pub diagnostics: DycaDiagnostics,
}

fn columns(a: &Array2<f64>) -> Vec<Vec<f64>> {
    a.columns().into_iter().map(|c| c.to_vec()).collect()
}

fn from_columns(cols: &[Vec<f64>], rows: usize) -> Result<Array2<f64>, String> {
    if cols.iter().any(|c| c.len() != rows) {
        return Err(format!("every vector must have {rows} entries"));
    }
    let flat: Vec<f64> = cols.iter().flatten().copied().collect();
    Array2::from_shape_vec((cols.len(), rows), flat)
        .map(|a| a.reversed_axes().as_standard_layout().to_owned())
        .map_err(|e| e.to_string())
}

impl ModelDocument {
    pub fn new(model: &DycaModel, signal: &Signal, start_s: f64) -> Self {
        Self {
            channels: signal.channel_labels(),
            sample_rate_hz: signal.sample_rate_hz(),
            start_s,
            end_s: start_s + signal.duration_seconds(),
            eigenvalues: model.eigenvalues.to_vec(),
            m: model.m,
            u_vectors: columns(&model.u_vectors),
            v_vectors: columns(&model.v_vectors),
            basis: columns(&model.basis),
            linear_coeffs: model
                .linear_coeffs
                .as_ref()
                .map(|a| a.rows().into_iter().map(|r| r.to_vec()).collect()),
            diagnostics: model.diagnostics.clone(),
        }
    }

    pub fn into_model(self) -> Result<DycaModel, String> {
        let n = self.channels.len();
        let linear_coeffs = match self.linear_coeffs {
            Some(rows) => Some(
                from_columns(&rows, rows.first().map_or(0, Vec::len))?
                    .reversed_axes()
                    .as_standard_layout()
                    .to_owned(),
            ),
            None => None,
        };
        Ok(DycaModel {
            eigenvalues: self.eigenvalues.into(),
            u_vectors: from_columns(&self.u_vectors, n)?,
            m: self.m,
            basis: from_columns(&self.basis, n)?,
            v_vectors: from_columns(&self.v_vectors, n)?,
            linear_coeffs,
            diagnostics: self.diagnostics,
        })
    }
}

pub const WINDOW_HEADER: [&str; 8] = [
    "window_index",
    "start_s",
    "lambda1",
    "lambda2",
    "lambda3",
    "decision",
    "label",
    "failure",
];

pub fn write_windows_to(w: &mut (impl Write + ?Sized), results: &[WindowResult]) -> std::io::Result<()> {
    writeln!(w, "{}", WINDOW_HEADER.join(","))?;
    for r in results {
        let mut fields = vec![r.window.index.to_string(), fmt_f64(r.start_s)];
        for i in 0..REPORTED_EIGENVALUES {
            fields.push(fmt_opt(r.eigenvalues.get(i).copied()));
        }
        fields.push(u8::from(r.decision).to_string());
        fields.push(r.label.map_or_else(|| NA.to_string(), |l| u8::from(l).to_string()));
        fields.push(
            r.failure
                .as_deref()
                .map_or_else(String::new, |f| format!("\"{}\"", f.replace('"', "'"))),
        );
        writeln!(w, "{}", fields.join(","))?;
    }
    Ok(())
}

/// Per-window rows as written by [`write_windows_to`].
#[derive(Debug, Clone, PartialEq)]
pub struct WindowRow {
    pub window_index: usize,
    pub start_s: f64,
    pub eigenvalues: [Option<f64>; 3],
    pub decision: bool,
    pub label: Option<bool>,
    pub failure: Option<String>,
}

pub fn read_windows_from(reader: impl Read, name: &str) -> Result<Vec<WindowRow>, IoError> {
    let mut rdr = csv::Reader::from_reader(reader);
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| csv_err(name, e))?;
        let line = rec.position().map_or(0, |p| p.line());
        let field = |i: usize| rec.get(i).unwrap_or("");
        let bad = |i: usize| IoError::Parse {
            path: name.to_string(),
            line,
            column: i + 1,
            message: format!("cannot parse `{}`", field(i)),
        };
        let opt = |i: usize| -> Result<Option<f64>, IoError> {
            match field(i) {
                NA => Ok(None),
                s => s.parse().map(Some).map_err(|_| bad(i)),
            }
        };
        let flag = |i: usize| -> Result<Option<bool>, IoError> {
            match field(i) {
                "1" => Ok(Some(true)),
                "0" => Ok(Some(false)),
                NA => Ok(None),
                _ => Err(bad(i)),
            }
        };
        out.push(WindowRow {
            window_index: field(0).parse().map_err(|_| bad(0))?,
            start_s: field(1).parse().map_err(|_| bad(1))?,
            eigenvalues: [opt(2)?, opt(3)?, opt(4)?],
            decision: flag(5)?.ok_or_else(|| bad(5))?,
            label: flag(6)?,
            failure: Some(field(7).to_string()).filter(|s| !s.is_empty()),
        });
    }
    Ok(out)
}

/// Header of the sweep table for `datasets` datasets.
pub fn sweep_header(datasets: usize) -> Vec<String> {
    let mut h = vec!["threshold".to_string()];
    for m in ["spc", "fdr", "fnr"] {
        for s in ["mean", "std", "n"] {
            h.push(format!("{m}_{s}"));
        }
    }
    for d in 1..=datasets {
        for m in ["spc", "fdr", "fnr", "tp", "fp", "tn", "fn"] {
            h.push(format!("d{d}_{m}"));
        }
    }
    h
}

pub fn write_sweep_to(w: &mut (impl Write + ?Sized), sweep: &SweepResult) -> std::io::Result<()> {
    let datasets = sweep.rows.first().map_or(0, |r| r.per_dataset.len());
    writeln!(w, "{}", sweep_header(datasets).join(","))?;
    for row in &sweep.rows {
        let mut f = vec![fmt_f64(row.threshold)];
        for s in [&row.spc, &row.fdr, &row.fnr] {
            f.push(fmt_opt(s.mean));
            f.push(fmt_opt(s.std));
            f.push(s.defined.to_string());
        }
        for r in &row.per_dataset {
            f.extend([fmt_opt(r.spc), fmt_opt(r.fdr), fmt_opt(r.fnr)]);
            f.extend([r.tp, r.fp, r.tn, r.fn_].map(|c| c.to_string()));
        }
        writeln!(w, "{}", f.join(","))?;
    }
    Ok(())
}

/// Numeric CSV table with `NA` as the missing marker.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<Option<f64>>>,
}

impl Table {
    pub fn column(&self, name: &str) -> Option<Vec<Option<f64>>> {
        let i = self.header.iter().position(|h| h == name)?;
        Some(self.rows.iter().map(|r| r[i]).collect())
    }
}

pub fn read_table_from(reader: impl Read, name: &str) -> Result<Table, IoError> {
    let mut rdr = csv::Reader::from_reader(reader);
    let header: Vec<String> = rdr
        .headers()
        .map_err(|e| csv_err(name, e))?
        .iter()
        .map(str::to_string)
        .collect();
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| csv_err(name, e))?;
        let line = rec.position().map_or(0, |p| p.line());
        let row = rec
            .iter()
            .enumerate()
            .map(|(i, f)| match f {
                NA => Ok(None),
                s => s.parse().map(Some).map_err(|_| IoError::Parse {
                    path: name.to_string(),
                    line,
                    column: i + 1,
                    message: format!("`{s}` is not a number"),
                }),
            })
            .collect::<Result<_, _>>()?;
        rows.push(row);
    }
    Ok(Table { header, rows })
}

/// Writes a numeric table (one row per sample for trajectory exports).
pub fn write_table_to(
    w: &mut (impl Write + ?Sized),
    header: &[String],
    rows: impl Iterator<Item = Vec<f64>>,
) -> std::io::Result<()> {
    writeln!(w, "{}", header.join(","))?;
    for r in rows {
        let f: Vec<String> = r.into_iter().map(fmt_f64).collect();
        writeln!(w, "{}", f.join(","))?;
    }
    Ok(())
}

/// Writes `time,<names…>` rows for a (projected) signal.
pub fn write_amplitudes_to(
    w: &mut (impl Write + ?Sized),
    signal: &Signal,
    names: &[String],
    start_s: f64,
) -> std::io::Result<()> {
    let mut header = vec!["time".to_string()];
    header.extend(names.iter().cloned());
    let fs = signal.sample_rate_hz();
    let data = signal.data();
    write_table_to(
        w,
        &header,
        (0..signal.n_samples()).map(|i| {
            let mut row = vec![start_s + i as f64 / fs];
            row.extend(data.column(i).iter().copied());
            row
        }),
    )
}

/// Opens `path` for writing, or stdout when `None`.
pub fn output(path: Option<&Path>) -> Result<Box<dyn Write>, IoError> {
    Ok(match path {
        Some(p) => Box::new(create(p)?),
        None => Box::new(BufWriter::new(std::io::stdout())),
    })
}
