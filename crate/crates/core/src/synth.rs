//! Synthetic ground truth: Shilnikov-type trajectories, random embeddings and
//! annotated recordings with stochastic background and deterministic bursts.

use ndarray::{s, Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::{frobenius_norm, orthonormalize};
use crate::signal::{Signal, SignalError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SynthError {
    #[error(transparent)]
    Signal(#[from] SignalError),
    #[error("invalid parameters: {0}")]
    BadParams(String),
    #[error("bad integration step: {0}")]
    BadStep(String),
    #[error("trajectory diverged at t = {time_seconds} s (|x| = {magnitude:e})")]
    TrajectoryDiverged { time_seconds: f64, magnitude: f64 },
    #[error("mixing matrix has rank {rank} < {columns} columns")]
    RankDeficientMixing { rank: usize, columns: usize },
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("bursts [{}, {}) and [{}, {}) overlap", .first.0, .first.1, .second.0, .second.1)]
    OverlappingBursts { first: (f64, f64), second: (f64, f64) },
    #[error("burst [{start}, {end}) lies outside [0, {duration}]")]
    BurstOutOfRange { start: f64, end: f64, duration: f64 },
    #[error(transparent)]
    Event(#[from] EventError),
    #[error("unsupported scenario version {0} (expected {SCENARIO_VERSION})")]
    UnsupportedVersion(u32),
}

/// Parameters of `ẋ₁ = x₂, ẋ₂ = x₃, ẋ₃ = −γx₁ − βx₂ − αx₃ + μx₁²`.
///
/// The system runs in its own time units; `time_scale` model units elapse per
/// second of recording, which sets the dominant frequency of the output.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ShilnikovParams {
    pub mu: f64,
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub initial_state: [f64; 3],
    /// Largest allowed RK4 step in seconds of recording time.
    pub step_seconds: f64,
    pub time_scale: f64,
}

impl Default for ShilnikovParams {
    /// Saddle-focus at the origin (eigenvalues ≈ −1.49, 0.345 ± 2.43i) with a
    /// bounded chaotic attractor that repeatedly returns close to it.
    fn default() -> Self {
        Self {
            mu: 1.0,
            alpha: 0.8,
            beta: 5.0,
            gamma: 9.0,
            initial_state: [0.05, 0.0, 0.0],
            step_seconds: 1.0 / 2048.0,
            time_scale: 30.0,
        }
    }
}

impl ShilnikovParams {
    #[inline]
    fn field(&self, x: [f64; 3]) -> [f64; 3] {
        [
            x[1],
            x[2],
            -self.gamma * x[0] - self.beta * x[1] - self.alpha * x[2] + self.mu * x[0] * x[0],
        ]
    }

    /// Upper bound (in Hz of recording time) on the frequencies of the
    /// linearization at the origin, from the Cauchy bound on the roots of
    /// `s³ + αs² + βs + γ`.
    pub fn characteristic_frequency(&self) -> f64 {
        let bound = 1.0 + self.alpha.abs().max(self.beta.abs()).max(self.gamma.abs());
        self.time_scale * bound / (2.0 * std::f64::consts::PI)
    }

    pub fn validate(&self) -> Result<(), SynthError> {
        let finite = [self.mu, self.alpha, self.beta, self.gamma, self.time_scale]
            .iter()
            .chain(self.initial_state.iter())
            .all(|v| v.is_finite());
        if !finite {
            return Err(SynthError::BadParams("non-finite coefficient or state".into()));
        }
        if !(self.time_scale > 0.0) {
            return Err(SynthError::BadParams(format!(
                "time_scale must be positive, got {}",
                self.time_scale
            )));
        }
        if !(self.step_seconds > 0.0 && self.step_seconds.is_finite()) {
            return Err(SynthError::BadStep(format!(
                "step_seconds must be positive, got {}",
                self.step_seconds
            )));
        }
        let product = self.step_seconds * self.characteristic_frequency();
        if product >= 0.1 {
            return Err(SynthError::BadStep(format!(
                "step {} s times characteristic frequency {:.3} Hz = {product:.3} >= 0.1",
                self.step_seconds,
                self.characteristic_frequency()
            )));
        }
        Ok(())
    }

    fn rk4(&self, x: [f64; 3], h: f64) -> [f64; 3] {
        let add = |a: [f64; 3], b: [f64; 3], c: f64| [a[0] + c * b[0], a[1] + c * b[1], a[2] + c * b[2]];
        let k1 = self.field(x);
        let k2 = self.field(add(x, k1, h / 2.0));
        let k3 = self.field(add(x, k2, h / 2.0));
        let k4 = self.field(add(x, k3, h));
        let mut out = x;
        for i in 0..3 {
            out[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
        out
    }
}

const DIVERGENCE_LIMIT: f64 = 1e6;

/// Integrates with classical RK4 and samples at `sample_rate_hz`. The step is
/// shrunk from `step_seconds` so that a whole number of steps fits one sample
/// interval. The first sample is the initial state.
pub fn shilnikov_trajectory(
    p: &ShilnikovParams,
    duration_seconds: f64,
    sample_rate_hz: f64,
) -> Result<Signal, SynthError> {
    p.validate()?;
    if !(sample_rate_hz > 0.0 && sample_rate_hz.is_finite()) {
        return Err(SignalError::BadSampleRate(sample_rate_hz).into());
    }
    let samples = (duration_seconds * sample_rate_hz).round();
    if !(samples >= 3.0) {
        return Err(SynthError::BadParams(format!(
            "{duration_seconds} s at {sample_rate_hz} Hz gives fewer than 3 samples"
        )));
    }
    let samples = samples as usize;
    let interval = 1.0 / sample_rate_hz;
    let substeps = (interval / p.step_seconds).ceil().max(1.0) as usize;
    let h = interval / substeps as f64 * p.time_scale;

    let mut out = Array2::zeros((3, samples));
    let mut x = p.initial_state;
    for i in 0..samples {
        for c in 0..3 {
            out[[c, i]] = x[c];
        }
        for _ in 0..substeps {
            x = p.rk4(x, h);
        }
        let magnitude = x.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if !(magnitude <= DIVERGENCE_LIMIT) {
            return Err(SynthError::TrajectoryDiverged {
                time_seconds: (i + 1) as f64 * interval,
                magnitude,
            });
        }
    }
    Ok(Signal::new(out, sample_rate_hz)?)
}

/// `q(t) = mixing · x(t) + noise_sigma · ξ(t)` with i.i.d. standard normal `ξ`.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingSpec {
    pub target_dim: usize,
    /// `N × n`, the spatial patterns as columns.
    pub mixing: Array2<f64>,
    pub noise_sigma: f64,
    pub seed: u64,
}

impl EmbeddingSpec {
    pub fn new(mixing: Array2<f64>, noise_sigma: f64, seed: u64) -> Result<Self, SynthError> {
        let (n_big, n) = mixing.dim();
        if n == 0 || n_big < n {
            return Err(SynthError::Dimension(format!(
                "mixing must be N × n with N >= n >= 1, got {n_big} × {n}"
            )));
        }
        if !(noise_sigma >= 0.0 && noise_sigma.is_finite()) {
            return Err(SynthError::BadParams(format!(
                "noise_sigma must be non-negative, got {noise_sigma}"
            )));
        }
        let (_, kept) = orthonormalize(mixing.view(), 1e-10);
        if kept.len() < n {
            return Err(SynthError::RankDeficientMixing {
                rank: kept.len(),
                columns: n,
            });
        }
        Ok(Self {
            target_dim: n_big,
            mixing,
            noise_sigma,
            seed,
        })
    }

    /// Orthonormal columns scaled by `√N`, so unit-variance sources give an
    /// average channel power equal to the number of sources.
    pub fn random_orthonormal(
        target_dim: usize,
        sources: usize,
        noise_sigma: f64,
        seed: u64,
    ) -> Result<Self, SynthError> {
        if sources == 0 || target_dim < sources {
            return Err(SynthError::Dimension(format!(
                "need N >= n >= 1, got N = {target_dim}, n = {sources}"
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        loop {
            let g = gaussian_matrix(&mut rng, target_dim, sources);
            let (q, kept) = orthonormalize(g.view(), 1e-8);
            if kept.len() == sources {
                let mixing = q * (target_dim as f64).sqrt();
                return Self::new(mixing, noise_sigma, rng.random());
            }
        }
    }

    /// RMS per channel of `mixing · x` for unit-variance, uncorrelated sources.
    pub fn reference_rms(&self) -> f64 {
        frobenius_norm(self.mixing.view()) / (self.target_dim as f64).sqrt()
    }

    /// Sets `noise_sigma` so that unit-variance sources reach the given SNR.
    pub fn with_snr_db(mut self, snr_db: f64) -> Self {
        self.noise_sigma = self.reference_rms() / 10f64.powf(snr_db / 20.0);
        self
    }
}

fn gaussian_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Array2<f64> {
    Array2::from_shape_simple_fn((rows, cols), || StandardNormal.sample(rng))
}

pub fn embed(sources: &Signal, spec: &EmbeddingSpec) -> Result<Signal, SynthError> {
    let clean = embed_clean(sources, spec)?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut data = clean.into_data();
    if spec.noise_sigma > 0.0 {
        for v in data.iter_mut() {
            let e: f64 = StandardNormal.sample(&mut rng);
            *v += spec.noise_sigma * e;
        }
    }
    Ok(Signal::new(data, sources.sample_rate_hz())?)
}

fn embed_clean(sources: &Signal, spec: &EmbeddingSpec) -> Result<Signal, SynthError> {
    if sources.n_channels() != spec.mixing.ncols() {
        return Err(SynthError::Dimension(format!(
            "{} sources but mixing has {} columns",
            sources.n_channels(),
            spec.mixing.ncols()
        )));
    }
    let (_, kept) = orthonormalize(spec.mixing.view(), 1e-10);
    if kept.len() < spec.mixing.ncols() {
        return Err(SynthError::RankDeficientMixing {
            rank: kept.len(),
            columns: spec.mixing.ncols(),
        });
    }
    Ok(Signal::new(spec.mixing.dot(&sources.data()), sources.sample_rate_hz())?)
}

/// Stochastic activity present throughout a recording.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BackgroundSpec {
    /// Number of latent Gaussian sources, spread over the channels by a random
    /// Gaussian mixing. Zero means independent noise on every channel.
    pub sources: usize,
    /// Channel RMS relative to [`EmbeddingSpec::reference_rms`].
    pub rms_ratio: f64,
    /// Optional AR(1) coefficient for the latent processes.
    pub ar_coeff: Option<f64>,
}

impl Default for BackgroundSpec {
    fn default() -> Self {
        Self {
            sources: 4,
            rms_ratio: 1.0,
            ar_coeff: None,
        }
    }
}

impl BackgroundSpec {
    fn validate(&self) -> Result<(), SynthError> {
        if !(self.rms_ratio >= 0.0 && self.rms_ratio.is_finite()) {
            return Err(SynthError::BadParams(format!(
                "background rms_ratio must be non-negative, got {}",
                self.rms_ratio
            )));
        }
        if let Some(a) = self.ar_coeff {
            if !(a.abs() < 1.0) {
                return Err(SynthError::BadParams(format!(
                    "AR(1) coefficient must satisfy |a| < 1, got {a}"
                )));
            }
        }
        Ok(())
    }

    fn generate(&self, channels: usize, samples: usize, target_rms: f64, rng: &mut ChaCha8Rng) -> Array2<f64> {
        if self.rms_ratio == 0.0 {
            return Array2::zeros((channels, samples));
        }
        let latent_count = if self.sources == 0 { channels } else { self.sources };
        let mut latent = gaussian_matrix(rng, latent_count, samples);
        if let Some(a) = self.ar_coeff {
            let gain = (1.0 - a * a).sqrt();
            for mut row in latent.rows_mut() {
                let mut prev = row[0];
                for v in row.iter_mut().skip(1) {
                    prev = a * prev + gain * *v;
                    *v = prev;
                }
            }
        }
        let mut out = if self.sources == 0 {
            latent
        } else {
            gaussian_matrix(rng, channels, latent_count).dot(&latent)
        };
        let rms = (out.iter().map(|v| v * v).sum::<f64>() / out.len() as f64).sqrt();
        if rms > 0.0 {
            out *= self.rms_ratio * target_rms / rms;
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Burst {
    pub start_seconds: f64,
    pub duration_seconds: f64,
    pub params: ShilnikovParams,
}

impl Burst {
    pub fn end_seconds(&self) -> f64 {
        self.start_seconds + self.duration_seconds
    }
}

pub const SEIZURE_LABEL: &str = "seizure";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Event {
    pub start_s: f64,
    pub end_s: f64,
    pub label: String,
}

impl Event {
    pub fn seizure(start_s: f64, end_s: f64) -> Self {
        Self {
            start_s,
            end_s,
            label: SEIZURE_LABEL.to_string(),
        }
    }

    pub fn duration(&self) -> f64 {
        self.end_s - self.start_s
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EventError {
    #[error("event {index} has start {start} >= end {end}")]
    Inverted { index: usize, start: f64, end: f64 },
    #[error("event {index} bound is not finite")]
    NonFinite { index: usize },
    #[error("event {index} [{start}, {end}) exceeds the recording [0, {duration}]")]
    OutOfRange {
        index: usize,
        start: f64,
        end: f64,
        duration: f64,
    },
    #[error("events [{}, {}) and [{}, {}) overlap", .first.0, .first.1, .second.0, .second.1)]
    Overlap { first: (f64, f64), second: (f64, f64) },
}

/// Checks ordering of each interval and pairwise disjointness; with a
/// duration, also containment in `[0, duration]`.
pub fn validate_events(events: &[Event], duration: Option<f64>) -> Result<(), EventError> {
    for (index, e) in events.iter().enumerate() {
        if !(e.start_s.is_finite() && e.end_s.is_finite()) {
            return Err(EventError::NonFinite { index });
        }
        if e.start_s >= e.end_s {
            return Err(EventError::Inverted {
                index,
                start: e.start_s,
                end: e.end_s,
            });
        }
        if let Some(d) = duration {
            if e.start_s < 0.0 || e.end_s > d {
                return Err(EventError::OutOfRange {
                    index,
                    start: e.start_s,
                    end: e.end_s,
                    duration: d,
                });
            }
        }
    }
    let mut sorted: Vec<&Event> = events.iter().collect();
    sorted.sort_by(|a, b| a.start_s.total_cmp(&b.start_s));
    for pair in sorted.windows(2) {
        if pair[1].start_s < pair[0].end_s {
            return Err(EventError::Overlap {
                first: (pair[0].start_s, pair[0].end_s),
                second: (pair[1].start_s, pair[1].end_s),
            });
        }
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct AnnotatedRecording {
    pub signal: Signal,
    pub events: Vec<Event>,
    /// Generator parameters, free-form.
    pub provenance: serde_json::Value,
}

impl AnnotatedRecording {
    pub fn new(signal: Signal, events: Vec<Event>, provenance: serde_json::Value) -> Result<Self, SynthError> {
        validate_events(&events, Some(signal.duration_seconds()))?;
        Ok(Self {
            signal,
            events,
            provenance,
        })
    }
}

/// Cross-fade length at each burst boundary.
pub const RAMP_SECONDS: f64 = 0.5;
/// Transient discarded before a burst's trajectory is used.
pub const BURN_IN_SECONDS: f64 = 2.0;

/// Builds a labelled recording: background activity everywhere, each burst's
/// trajectory (centred, scaled to unit RMS per source, embedded noiselessly)
/// faded in with raised-cosine ramps, then sensor noise at `spec.noise_sigma`.
pub fn compose_recording(
    background_seconds: f64,
    bursts: &[Burst],
    spec: &EmbeddingSpec,
    background: &BackgroundSpec,
    sample_rate_hz: f64,
) -> Result<AnnotatedRecording, SynthError> {
    compose_recording_with_sources(background_seconds, bursts, spec, background, sample_rate_hz).map(|(rec, _)| rec)
}

/// Deterministic sources of one burst as they enter the recording, ramps
/// included.
#[derive(Debug, Clone, PartialEq)]
pub struct BurstSources {
    pub first_sample: usize,
    pub sources: Signal,
}

/// [`compose_recording`], also returning the ground-truth sources.
pub fn compose_recording_with_sources(
    background_seconds: f64,
    bursts: &[Burst],
    spec: &EmbeddingSpec,
    background: &BackgroundSpec,
    sample_rate_hz: f64,
) -> Result<(AnnotatedRecording, Vec<BurstSources>), SynthError> {
    if !(sample_rate_hz > 0.0 && sample_rate_hz.is_finite()) {
        return Err(SignalError::BadSampleRate(sample_rate_hz).into());
    }
    background.validate()?;
    let samples = (background_seconds * sample_rate_hz).round();
    if !(samples >= 3.0) {
        return Err(SynthError::BadParams(format!(
            "{background_seconds} s at {sample_rate_hz} Hz gives fewer than 3 samples"
        )));
    }
    let samples = samples as usize;
    let duration = samples as f64 / sample_rate_hz;
    check_bursts(bursts, duration)?;

    let channels = spec.target_dim;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut data = background.generate(channels, samples, spec.reference_rms(), &mut rng);
    let mut truth = Vec::with_capacity(bursts.len());

    for burst in bursts {
        let first = (burst.start_seconds * sample_rate_hz).ceil() as usize;
        let last = ((burst.end_seconds() * sample_rate_hz).ceil() as usize).min(samples);
        if last <= first {
            continue;
        }
        let len = last - first;
        let burn = (BURN_IN_SECONDS * sample_rate_hz).round() as usize;
        let traj = shilnikov_trajectory(
            &burst.params,
            (burn + len.max(3)) as f64 / sample_rate_hz,
            sample_rate_hz,
        )?;
        let mut x = traj.into_data().slice(s![.., burn..burn + len]).to_owned();
        for mut row in x.rows_mut() {
            let mean = row.mean().unwrap_or(0.0);
            row -= mean;
            let rms = (row.dot(&row) / len as f64).sqrt();
            if rms > 0.0 {
                row /= rms;
            }
        }
        let ramp = ramp_envelope(len, sample_rate_hz, burst.duration_seconds);
        let x = x * &ramp;
        let mut target = data.slice_mut(s![.., first..last]);
        target += &spec.mixing.dot(&x);
        truth.push(BurstSources {
            first_sample: first,
            sources: Signal::new(x, sample_rate_hz)?,
        });
    }

    if spec.noise_sigma > 0.0 {
        for v in data.iter_mut() {
            let e: f64 = StandardNormal.sample(&mut rng);
            *v += spec.noise_sigma * e;
        }
    }

    let events = bursts
        .iter()
        .map(|b| Event::seizure(b.start_seconds, b.end_seconds()))
        .collect();
    let provenance = serde_json::json!({
        "generator": "compose_recording",
        "duration_seconds": duration,
        "sample_rate_hz": sample_rate_hz,
        "channels": channels,
        "noise_sigma": spec.noise_sigma,
        "embedding_seed": spec.seed,
        "background": background,
        "bursts": bursts,
    });
    let rec = AnnotatedRecording::new(Signal::new(data, sample_rate_hz)?, events, provenance)?;
    Ok((rec, truth))
}

fn check_bursts(bursts: &[Burst], duration: f64) -> Result<(), SynthError> {
    for b in bursts {
        let (start, end) = (b.start_seconds, b.end_seconds());
        if !(start >= 0.0 && b.duration_seconds > 0.0 && end <= duration + 1e-9) {
            return Err(SynthError::BurstOutOfRange { start, end, duration });
        }
    }
    let mut sorted: Vec<&Burst> = bursts.iter().collect();
    sorted.sort_by(|a, b| a.start_seconds.total_cmp(&b.start_seconds));
    for pair in sorted.windows(2) {
        if pair[1].start_seconds < pair[0].end_seconds() {
            return Err(SynthError::OverlappingBursts {
                first: (pair[0].start_seconds, pair[0].end_seconds()),
                second: (pair[1].start_seconds, pair[1].end_seconds()),
            });
        }
    }
    Ok(())
}

fn ramp_envelope(len: usize, fs: f64, duration: f64) -> Array1<f64> {
    let ramp = RAMP_SECONDS.min(duration / 2.0);
    Array1::from_shape_fn(len, |i| {
        let t = i as f64 / fs;
        let edge = t.min(duration - t).max(0.0);
        if edge >= ramp {
            1.0
        } else {
            0.5 * (1.0 - (std::f64::consts::PI * edge / ramp).cos())
        }
    })
}

pub const SCENARIO_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BurstWindow {
    pub start_seconds: f64,
    pub duration_seconds: f64,
}

/// Versioned, serializable description of a synthetic recording.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub version: u32,
    pub name: String,
    pub duration_seconds: f64,
    pub sample_rate_hz: f64,
    pub channels: usize,
    pub snr_db: f64,
    pub seed: u64,
    pub bursts: Vec<BurstWindow>,
    pub shilnikov: ShilnikovParams,
    pub background: BackgroundSpec,
    /// Standard deviation of the per-burst perturbation of the initial state.
    pub initial_jitter: f64,
}

impl Default for Scenario {
    /// 411 s at 256 Hz, 20 channels, 20 dB, bursts of 4 s and 12 s: about
    /// 2.6 % of 3 s windows lie wholly inside a burst.
    fn default() -> Self {
        Self {
            version: SCENARIO_VERSION,
            name: "default".into(),
            duration_seconds: 411.0,
            sample_rate_hz: 256.0,
            channels: 20,
            snr_db: 20.0,
            seed: 1,
            bursts: vec![
                BurstWindow {
                    start_seconds: 95.0,
                    duration_seconds: 4.0,
                },
                BurstWindow {
                    start_seconds: 262.0,
                    duration_seconds: 12.0,
                },
            ],
            shilnikov: ShilnikovParams::default(),
            background: BackgroundSpec::default(),
            initial_jitter: 0.01,
        }
    }
}

impl Scenario {
    /// Six recordings of 350–470 s (mean 411 s) with bursts of 4–25 s.
    pub fn evaluation_suite(seed: u64) -> Vec<Scenario> {
        let layouts: [(f64, &[(f64, f64)]); 6] = [
            (411.0, &[(95.0, 4.0), (262.0, 12.0)]),
            (380.0, &[(170.0, 8.0)]),
            (470.0, &[(301.0, 25.0)]),
            (350.0, &[(60.0, 6.0), (233.0, 10.0)]),
            (420.0, &[(140.0, 15.0)]),
            (435.0, &[(88.0, 5.0), (310.0, 20.0)]),
        ];
        layouts
            .iter()
            .enumerate()
            .map(|(i, (duration, bursts))| Scenario {
                name: format!("suite-{}", i + 1),
                duration_seconds: *duration,
                seed: seed.wrapping_mul(1000).wrapping_add(i as u64 + 1),
                bursts: bursts
                    .iter()
                    .map(|&(start_seconds, duration_seconds)| BurstWindow {
                        start_seconds,
                        duration_seconds,
                    })
                    .collect(),
                ..Scenario::default()
            })
            .collect()
    }

    pub fn build(&self) -> Result<AnnotatedRecording, SynthError> {
        self.build_with_sources().map(|(rec, _)| rec)
    }

    pub fn build_with_sources(&self) -> Result<(AnnotatedRecording, Vec<BurstSources>), SynthError> {
        if self.version != SCENARIO_VERSION {
            return Err(SynthError::UnsupportedVersion(self.version));
        }
        if !(self.initial_jitter >= 0.0 && self.initial_jitter.is_finite()) {
            return Err(SynthError::BadParams(format!(
                "initial_jitter must be non-negative, got {}",
                self.initial_jitter
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let spec = EmbeddingSpec::random_orthonormal(self.channels, 3, 0.0, rng.random())?.with_snr_db(self.snr_db);
        let bursts: Vec<Burst> = self
            .bursts
            .iter()
            .map(|b| {
                let mut params = self.shilnikov;
                for v in params.initial_state.iter_mut() {
                    let e: f64 = StandardNormal.sample(&mut rng);
                    *v += self.initial_jitter * e;
                }
                Burst {
                    start_seconds: b.start_seconds,
                    duration_seconds: b.duration_seconds,
                    params,
                }
            })
            .collect();
        let (mut rec, truth) = compose_recording_with_sources(
            self.duration_seconds,
            &bursts,
            &spec,
            &self.background,
            self.sample_rate_hz,
        )?;
        rec.provenance = serde_json::json!({ "scenario": self, "composition": rec.provenance });
        Ok((rec, truth))
    }

    /// Ground-truth spatial patterns of the deterministic sources.
    pub fn mixing(&self) -> Result<Array2<f64>, SynthError> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        Ok(EmbeddingSpec::random_orthonormal(self.channels, 3, 0.0, rng.random())?.mixing)
    }
}
