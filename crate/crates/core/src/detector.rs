//! Windowed DyCA eigenvalue detector and its evaluation.
//!
//! Each window gets the three largest DyCA eigenvalues; a window is flagged
//! when the top `k` of them exceed a threshold. Ground truth marks a window
//! positive only when it lies wholly inside an annotated event.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dyca::{dyca_spectrum, DycaOptions};
use crate::signal::{sliding_windows, Signal, SignalError, WindowConfig, WindowView};
use crate::synth::{validate_events, AnnotatedRecording, Event, EventError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DetectorError {
    #[error(transparent)]
    Signal(#[from] SignalError),
    #[error(transparent)]
    Event(#[from] EventError),
    #[error("invalid detector configuration: {0}")]
    Config(String),
    #[error("window {index} has no ground-truth label")]
    MissingLabel { index: usize },
    #[error("invalid threshold grid: {0}")]
    Grid(String),
    #[error("threshold sweep needs at least one dataset")]
    NoDatasets,
}

/// How the top-`k` eigenvalues are combined against the threshold.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Combination {
    /// Every one of the top `k` must exceed the threshold.
    #[default]
    And,
    /// At least one of the top `k` must exceed it.
    Or,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetectorConfig {
    pub window: WindowConfig,
    pub threshold: f64,
    pub k_eigenvalues: usize,
    pub combination: Combination,
    pub dyca: DycaOptions,
}

impl Default for DetectorConfig {
    fn default() -> Self {
        Self {
            window: WindowConfig::default(),
            threshold: 0.9,
            k_eigenvalues: 2,
            combination: Combination::And,
            dyca: DycaOptions::default(),
        }
    }
}

/// Number of eigenvalues kept per window.
pub const REPORTED_EIGENVALUES: usize = 3;

impl DetectorConfig {
    pub fn validate(&self) -> Result<(), DetectorError> {
        if !(self.threshold > 0.0 && self.threshold < 1.0) {
            return Err(DetectorError::Config(format!(
                "threshold must lie in (0, 1), got {}",
                self.threshold
            )));
        }
        if !(1..=REPORTED_EIGENVALUES).contains(&self.k_eigenvalues) {
            return Err(DetectorError::Config(format!(
                "k_eigenvalues must be 1, 2 or 3, got {}",
                self.k_eigenvalues
            )));
        }
        Ok(())
    }

    /// Decision for one window's (descending) eigenvalues.
    pub fn decide(&self, eigenvalues: &[f64], threshold: f64) -> bool {
        if eigenvalues.len() < self.k_eigenvalues {
            return false;
        }
        let top = &eigenvalues[..self.k_eigenvalues];
        match self.combination {
            Combination::And => top.iter().all(|&l| l > threshold),
            Combination::Or => top.iter().any(|&l| l > threshold),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowResult {
    pub window: WindowView,
    pub start_s: f64,
    /// Up to three largest eigenvalues, descending; empty when the fit failed.
    pub eigenvalues: Vec<f64>,
    pub decision: bool,
    pub label: Option<bool>,
    /// Set when DyCA failed on this window; the decision is then negative.
    pub failure: Option<String>,
}

/// Whole-window containment labels. Window `[start, start + W)` is positive
/// iff it lies inside a single event interval.
pub fn label_windows(windows: &[WindowView], events: &[Event], sample_rate_hz: f64) -> Vec<bool> {
    const SLACK: f64 = 1e-9;
    windows
        .iter()
        .map(|w| {
            let (a, b) = (w.start_seconds(sample_rate_hz), w.end_seconds(sample_rate_hz));
            events.iter().any(|e| a >= e.start_s - SLACK && b <= e.end_s + SLACK)
        })
        .collect()
}

/// A window and its leading eigenvalues, or the reason the fit failed.
pub type WindowEigenvalues = (WindowView, Result<Vec<f64>, String>);

/// Up to `count` leading eigenvalues of every window, computed in parallel
/// and returned in window order. Failed windows carry the error message.
pub fn window_eigenvalues(
    signal: &Signal,
    window: &WindowConfig,
    opts: &DycaOptions,
    count: usize,
) -> Result<Vec<WindowEigenvalues>, DetectorError> {
    let windows = sliding_windows(signal, window)?;
    Ok(windows
        .into_par_iter()
        .map(|w| {
            let eig = signal
                .window(&w)
                .map_err(|e| e.to_string())
                .and_then(|part| dyca_spectrum(&part, opts).map_err(|e| e.to_string()))
                .map(|s| s.eigenvalues.iter().take(count).map(|l| l.clamp(0.0, 1.0)).collect());
            (w, eig)
        })
        .collect())
}

/// Runs the detector over a signal. With events, every window also carries
/// its ground-truth label.
pub fn detect(
    signal: &Signal,
    events: Option<&[Event]>,
    cfg: &DetectorConfig,
) -> Result<Vec<WindowResult>, DetectorError> {
    cfg.validate()?;
    if let Some(ev) = events {
        validate_events(ev, None)?;
    }
    let fs = signal.sample_rate_hz();
    let eig = window_eigenvalues(signal, &cfg.window, &cfg.dyca, REPORTED_EIGENVALUES)?;
    let views: Vec<WindowView> = eig.iter().map(|(w, _)| *w).collect();
    let labels = events.map(|ev| label_windows(&views, ev, fs));
    Ok(eig
        .into_iter()
        .enumerate()
        .map(|(i, (window, res))| {
            let (eigenvalues, failure) = match res {
                Ok(v) => (v, None),
                Err(msg) => (Vec::new(), Some(msg)),
            };
            WindowResult {
                window,
                start_s: window.start_seconds(fs),
                decision: cfg.decide(&eigenvalues, cfg.threshold),
                eigenvalues,
                label: labels.as_ref().map(|l| l[i]),
                failure,
            }
        })
        .collect())
}

pub fn detect_recording(rec: &AnnotatedRecording, cfg: &DetectorConfig) -> Result<Vec<WindowResult>, DetectorError> {
    detect(&rec.signal, Some(&rec.events), cfg)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    /// `tn / (tn + fp)`; `None` when undefined.
    pub spc: Option<f64>,
    /// `fp / (fp + tp)`
    pub fdr: Option<f64>,
    /// `fn / (fn + tp)`
    pub fnr: Option<f64>,
    /// Fraction of windows labelled positive.
    pub prevalence: Option<f64>,
}

impl MetricsReport {
    pub fn from_counts(tp: usize, fp: usize, tn: usize, fn_: usize) -> Self {
        let ratio = |num: usize, den: usize| (den > 0).then(|| num as f64 / den as f64);
        Self {
            tp,
            fp,
            tn,
            fn_,
            spc: ratio(tn, tn + fp),
            fdr: ratio(fp, fp + tp),
            fnr: ratio(fn_, fn_ + tp),
            prevalence: ratio(tp + fn_, tp + fp + tn + fn_),
        }
    }

    pub fn total(&self) -> usize {
        self.tp + self.fp + self.tn + self.fn_
    }
}

pub fn compute_metrics(results: &[WindowResult]) -> Result<MetricsReport, DetectorError> {
    metrics_at(results, |r| r.decision)
}

fn metrics_at(
    results: &[WindowResult],
    decide: impl Fn(&WindowResult) -> bool,
) -> Result<MetricsReport, DetectorError> {
    let (mut tp, mut fp, mut tn, mut fn_) = (0, 0, 0, 0);
    for r in results {
        let label = r.label.ok_or(DetectorError::MissingLabel { index: r.window.index })?;
        match (decide(r), label) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, false) => tn += 1,
            (false, true) => fn_ += 1,
        }
    }
    Ok(MetricsReport::from_counts(tp, fp, tn, fn_))
}

/// Metrics at each threshold of the grid, reusing the stored eigenvalues.
pub fn metrics_over_grid(
    results: &[WindowResult],
    cfg: &DetectorConfig,
    grid: &[f64],
) -> Result<Vec<MetricsReport>, DetectorError> {
    grid.iter()
        .map(|&t| metrics_at(results, |r| cfg.decide(&r.eigenvalues, t)))
        .collect()
}

/// Mean and sample standard deviation over the datasets where a metric is
/// defined.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub mean: Option<f64>,
    pub std: Option<f64>,
    /// Datasets contributing to the statistics.
    pub defined: usize,
}

impl Summary {
    fn of(values: impl Iterator<Item = Option<f64>>) -> Self {
        let v: Vec<f64> = values.flatten().collect();
        let n = v.len();
        if n == 0 {
            return Self {
                mean: None,
                std: None,
                defined: 0,
            };
        }
        let mean = v.iter().sum::<f64>() / n as f64;
        let std = if n == 1 {
            0.0
        } else {
            (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
        };
        Self {
            mean: Some(mean),
            std: Some(std),
            defined: n,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub threshold: f64,
    pub spc: Summary,
    pub fdr: Summary,
    pub fnr: Summary,
    /// One report per dataset, in input order.
    pub per_dataset: Vec<MetricsReport>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub k_eigenvalues: usize,
    pub combination: Combination,
    pub rows: Vec<SweepRow>,
    /// With one dataset the standard deviations are reported as 0.
    pub single_dataset: bool,
}

impl SweepResult {
    pub fn thresholds(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.threshold).collect()
    }

    /// Row with the lowest mean miss rate among those whose mean specificity
    /// reaches `min_spc`; ties go to the lower threshold.
    pub fn best_at_specificity(&self, min_spc: f64) -> Option<&SweepRow> {
        self.rows
            .iter()
            .filter(|r| r.spc.mean.is_some_and(|s| s >= min_spc) && r.fnr.mean.is_some())
            .min_by(|a, b| a.fnr.mean.unwrap().total_cmp(&b.fnr.mean.unwrap()))
    }
}

/// `0.50, 0.505, …, 0.995`.
pub fn default_grid() -> Vec<f64> {
    (0..100).map(|i| (500 + 5 * i) as f64 / 1000.0).collect()
}

pub fn validate_grid(grid: &[f64]) -> Result<(), DetectorError> {
    if grid.is_empty() {
        return Err(DetectorError::Grid("grid is empty".into()));
    }
    if let Some(t) = grid.iter().find(|t| !(t.is_finite())) {
        return Err(DetectorError::Grid(format!("non-finite threshold {t}")));
    }
    if let Some(w) = grid.windows(2).find(|w| w[1] <= w[0]) {
        return Err(DetectorError::Grid(format!(
            "thresholds must increase strictly ({} then {})",
            w[0], w[1]
        )));
    }
    Ok(())
}

/// Sweep over stored per-dataset window results.
pub fn sweep_results(
    per_dataset: &[Vec<WindowResult>],
    cfg: &DetectorConfig,
    grid: &[f64],
) -> Result<SweepResult, DetectorError> {
    if per_dataset.is_empty() {
        return Err(DetectorError::NoDatasets);
    }
    validate_grid(grid)?;
    cfg.validate()?;
    let per_threshold: Vec<Vec<MetricsReport>> = per_dataset
        .iter()
        .map(|r| metrics_over_grid(r, cfg, grid))
        .collect::<Result<_, _>>()?;
    let rows = grid
        .iter()
        .enumerate()
        .map(|(i, &threshold)| {
            let reports: Vec<MetricsReport> = per_threshold.iter().map(|d| d[i]).collect();
            SweepRow {
                threshold,
                spc: Summary::of(reports.iter().map(|r| r.spc)),
                fdr: Summary::of(reports.iter().map(|r| r.fdr)),
                fnr: Summary::of(reports.iter().map(|r| r.fnr)),
                per_dataset: reports,
            }
        })
        .collect();
    Ok(SweepResult {
        k_eigenvalues: cfg.k_eigenvalues,
        combination: cfg.combination,
        rows,
        single_dataset: per_dataset.len() == 1,
    })
}

/// Runs the detector once per dataset, then evaluates every threshold of the
/// grid on the cached eigenvalues.
pub fn threshold_sweep(
    datasets: &[AnnotatedRecording],
    cfg: &DetectorConfig,
    grid: &[f64],
) -> Result<SweepResult, DetectorError> {
    if datasets.is_empty() {
        return Err(DetectorError::NoDatasets);
    }
    validate_grid(grid)?;
    let results: Vec<Vec<WindowResult>> = datasets
        .iter()
        .map(|d| detect_recording(d, cfg))
        .collect::<Result<_, _>>()?;
    sweep_results(&results, cfg, grid)
}
