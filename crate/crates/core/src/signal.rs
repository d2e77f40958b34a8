//! Uniformly sampled multichannel signals, derivative estimation and
//! sliding-window extraction.
//!
//! Samples are stored channel-major (`channels × timesteps`), so every row of
//! [`Signal::data`] is one channel. All the correlation machinery downstream
//! consumes channels as rows.

use ndarray::{s, Array2, ArrayView1, ArrayView2, Axis};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Minimum number of samples a signal must carry (central differences need
/// three).
pub const MIN_SAMPLES: usize = 3;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SignalError {
    #[error("non-finite sample {value} at channel {channel}, index {index}")]
    NonFiniteSample { channel: usize, index: usize, value: f64 },
    #[error(
        "signal has {channels} channel(s) and {samples} sample(s); need at least 1 channel and {MIN_SAMPLES} samples"
    )]
    EmptySignal { channels: usize, samples: usize },
    #[error("sample rate must be positive and finite, got {0}")]
    BadSampleRate(f64),
    #[error("expected {expected} channel names, got {got}")]
    ChannelNameCount { expected: usize, got: usize },
    #[error("window of {window} samples is longer than the signal ({samples} samples)")]
    WindowLongerThanSignal { window: usize, samples: usize },
    #[error("invalid window configuration: {0}")]
    BadWindow(String),
    #[error("sample range {start}..{end} outside signal of {samples} samples")]
    OutOfRange { start: usize, end: usize, samples: usize },
}

/// A uniformly sampled multichannel time series.
#[derive(Debug, Clone, PartialEq)]
pub struct Signal {
    data: Array2<f64>,
    sample_rate_hz: f64,
    channel_names: Option<Vec<String>>,
}

impl Signal {
    /// Builds a signal from a `channels × timesteps` matrix.
    pub fn new(data: Array2<f64>, sample_rate_hz: f64) -> Result<Self, SignalError> {
        if !(sample_rate_hz.is_finite() && sample_rate_hz > 0.0) {
            return Err(SignalError::BadSampleRate(sample_rate_hz));
        }
        let (channels, samples) = data.dim();
        if channels == 0 || samples < MIN_SAMPLES {
            return Err(SignalError::EmptySignal { channels, samples });
        }
        for ((channel, index), &value) in data.indexed_iter() {
            if !value.is_finite() {
                return Err(SignalError::NonFiniteSample { channel, index, value });
            }
        }
        Ok(Self {
            data,
            sample_rate_hz,
            channel_names: None,
        })
    }

    pub fn with_channel_names(mut self, names: Vec<String>) -> Result<Self, SignalError> {
        if names.len() != self.n_channels() {
            return Err(SignalError::ChannelNameCount {
                expected: self.n_channels(),
                got: names.len(),
            });
        }
        self.channel_names = Some(names);
        Ok(self)
    }

    pub fn n_channels(&self) -> usize {
        self.data.nrows()
    }

    pub fn n_samples(&self) -> usize {
        self.data.ncols()
    }

    pub fn sample_rate_hz(&self) -> f64 {
        self.sample_rate_hz
    }

    pub fn duration_seconds(&self) -> f64 {
        self.n_samples() as f64 / self.sample_rate_hz
    }

    pub fn data(&self) -> ArrayView2<'_, f64> {
        self.data.view()
    }

    pub fn into_data(self) -> Array2<f64> {
        self.data
    }

    pub fn channel(&self, index: usize) -> ArrayView1<'_, f64> {
        self.data.row(index)
    }

    pub fn channel_names(&self) -> Option<&[String]> {
        self.channel_names.as_deref()
    }

    /// Channel names, falling back to `ch0`, `ch1`, ... when none were given.
    pub fn channel_labels(&self) -> Vec<String> {
        match &self.channel_names {
            Some(names) => names.clone(),
            None => (0..self.n_channels()).map(|i| format!("ch{i}")).collect(),
        }
    }

    /// Copies samples `start..start + len` into a new signal.
    pub fn slice(&self, start: usize, len: usize) -> Result<Signal, SignalError> {
        let end = start + len;
        if end > self.n_samples() {
            return Err(SignalError::OutOfRange {
                start,
                end,
                samples: self.n_samples(),
            });
        }
        let data = self.data.slice(s![.., start..end]).to_owned();
        let mut out = Signal::new(data, self.sample_rate_hz)?;
        out.channel_names = self.channel_names.clone();
        Ok(out)
    }

    /// Copies the samples covered by `window`.
    pub fn window(&self, window: &WindowView) -> Result<Signal, SignalError> {
        self.slice(window.start_index, window.length)
    }

    /// Samples between two times in seconds, `[start_s, end_s)`.
    pub fn time_range(&self, start_s: f64, end_s: f64) -> Result<Signal, SignalError> {
        let start = (start_s * self.sample_rate_hz).round().max(0.0) as usize;
        let end = ((end_s * self.sample_rate_hz).round() as usize).min(self.n_samples());
        if end <= start {
            return Err(SignalError::OutOfRange {
                start,
                end,
                samples: self.n_samples(),
            });
        }
        self.slice(start, end - start)
    }
}

/// Finite-difference scheme used for the time derivative.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DerivativeScheme {
    /// Second-order central differences, first-order one-sided endpoints.
    #[default]
    Central,
    /// Fourth-order five-point stencil in the interior, central differences
    /// next to the boundary and one-sided differences at the endpoints.
    FivePoint,
}

/// Derivative with the default central-difference scheme.
pub fn estimate_derivative(s: &Signal) -> Signal {
    estimate_derivative_with(s, DerivativeScheme::Central)
}

pub fn estimate_derivative_with(s: &Signal, scheme: DerivativeScheme) -> Signal {
    let fs = s.sample_rate_hz;
    let t = s.n_samples();
    let mut out = Array2::<f64>::zeros(s.data.dim());
    for (src, mut dst) in s.data.axis_iter(Axis(0)).zip(out.axis_iter_mut(Axis(0))) {
        dst[0] = (src[1] - src[0]) * fs;
        dst[t - 1] = (src[t - 1] - src[t - 2]) * fs;
        for i in 1..t - 1 {
            dst[i] = (src[i + 1] - src[i - 1]) * fs * 0.5;
        }
        if scheme == DerivativeScheme::FivePoint && t >= 5 {
            for i in 2..t - 2 {
                dst[i] = (-src[i + 2] + 8.0 * src[i + 1] - 8.0 * src[i - 1] + src[i - 2]) * fs / 12.0;
            }
        }
    }
    Signal {
        data: out,
        sample_rate_hz: fs,
        channel_names: s.channel_names.clone(),
    }
}

/// Sliding-window geometry in seconds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WindowConfig {
    pub window_seconds: f64,
    pub overlap_fraction: f64,
}

impl Default for WindowConfig {
    fn default() -> Self {
        Self {
            window_seconds: 3.0,
            overlap_fraction: 0.9,
        }
    }
}

impl WindowConfig {
    /// Window length and step in samples at the given rate.
    pub fn samples(&self, sample_rate_hz: f64) -> Result<(usize, usize), SignalError> {
        if !(self.window_seconds.is_finite() && self.window_seconds > 0.0) {
            return Err(SignalError::BadWindow(format!(
                "window_seconds must be positive, got {}",
                self.window_seconds
            )));
        }
        if !(0.0..1.0).contains(&self.overlap_fraction) {
            return Err(SignalError::BadWindow(format!(
                "overlap_fraction must be in [0, 1), got {}",
                self.overlap_fraction
            )));
        }
        let len = (self.window_seconds * sample_rate_hz).round() as usize;
        if len < MIN_SAMPLES {
            return Err(SignalError::BadWindow(format!(
                "window of {len} samples is shorter than {MIN_SAMPLES}"
            )));
        }
        let step = ((len as f64 * (1.0 - self.overlap_fraction)).round() as usize).max(1);
        Ok((len, step))
    }
}

/// One window of a sliding-window pass.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct WindowView {
    pub start_index: usize,
    pub length: usize,
    pub index: usize,
}

impl WindowView {
    pub fn end_index(&self) -> usize {
        self.start_index + self.length
    }

    pub fn start_seconds(&self, sample_rate_hz: f64) -> f64 {
        self.start_index as f64 / sample_rate_hz
    }

    pub fn end_seconds(&self, sample_rate_hz: f64) -> f64 {
        self.end_index() as f64 / sample_rate_hz
    }
}

pub fn sliding_windows(s: &Signal, cfg: &WindowConfig) -> Result<Vec<WindowView>, SignalError> {
    windows_for_length(s.n_samples(), s.sample_rate_hz, cfg)
}

/// Windows over a signal of `samples` samples; trailing samples that do not
/// fill a whole window are dropped.
pub fn windows_for_length(
    samples: usize,
    sample_rate_hz: f64,
    cfg: &WindowConfig,
) -> Result<Vec<WindowView>, SignalError> {
    let (length, step) = cfg.samples(sample_rate_hz)?;
    if length > samples {
        return Err(SignalError::WindowLongerThanSignal {
            window: length,
            samples,
        });
    }
    let count = (samples - length) / step + 1;
    Ok((0..count)
        .map(|index| WindowView {
            start_index: index * step,
            length,
            index,
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array1;
    use proptest::prelude::*;
    use std::f64::consts::PI;

    fn sine(fs: f64, seconds: f64) -> Signal {
        let t = (fs * seconds) as usize;
        let data = Array2::from_shape_fn((1, t), |(_, i)| (2.0 * PI * i as f64 / fs).sin());
        Signal::new(data, fs).unwrap()
    }

    fn max_interior_error(fs: f64) -> f64 {
        let d = estimate_derivative(&sine(fs, 1.0));
        (1..d.n_samples() - 1)
            .map(|i| {
                let t = i as f64 / fs;
                (d.data[[0, i]] - 2.0 * PI * (2.0 * PI * t).cos()).abs()
            })
            .fold(0.0, f64::max)
    }

    #[test]
    fn constructor_contract() {
        let s = Signal::new(Array2::zeros((2, 100)), 100.0).unwrap();
        assert_eq!((s.n_channels(), s.n_samples()), (2, 100));

        let mut bad = Array2::zeros((2, 10));
        bad[[1, 4]] = f64::NAN;
        assert!(matches!(
            Signal::new(bad, 100.0),
            Err(SignalError::NonFiniteSample {
                channel: 1,
                index: 4,
                ..
            })
        ));
        assert!(matches!(
            Signal::new(Array2::zeros((1, 2)), 100.0),
            Err(SignalError::EmptySignal { samples: 2, .. })
        ));
        assert!(matches!(
            Signal::new(Array2::zeros((1, 5)), 0.0),
            Err(SignalError::BadSampleRate(_))
        ));
    }

    #[test]
    fn derivative_of_constant_is_zero() {
        let s = Signal::new(Array2::from_elem((2, 50), 3.25), 10.0).unwrap();
        assert!(estimate_derivative(&s).data.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn derivative_of_ramp_is_exact_everywhere() {
        let fs = 250.0;
        let data = Array2::from_shape_fn((1, 40), |(_, i)| i as f64 / fs);
        let d = estimate_derivative(&Signal::new(data, fs).unwrap());
        for &v in d.data.iter() {
            assert!((v - 1.0).abs() < 1e-10, "{v}");
        }
    }

    #[test]
    fn derivative_exact_for_quadratics_in_interior() {
        let fs = 20.0;
        let data = Array2::from_shape_fn((1, 30), |(_, i)| {
            let t = i as f64 / fs;
            2.0 * t * t - t + 0.5
        });
        let d = estimate_derivative(&Signal::new(data, fs).unwrap());
        for i in 1..29 {
            let t = i as f64 / fs;
            assert!((d.data[[0, i]] - (4.0 * t - 1.0)).abs() < 1e-10);
        }
    }

    #[test]
    fn central_differences_converge_at_second_order() {
        let coarse = max_interior_error(1000.0);
        let fine = max_interior_error(2000.0);
        assert!(coarse < 1e-3, "max error {coarse}");
        let ratio = coarse / fine;
        assert!((ratio - 4.0).abs() < 0.2, "ratio {ratio}");
    }

    #[test]
    fn five_point_is_fourth_order() {
        let err = |fs: f64| {
            let d = estimate_derivative_with(&sine(fs, 1.0), DerivativeScheme::FivePoint);
            (2..d.n_samples() - 2)
                .map(|i| (d.data[[0, i]] - 2.0 * PI * (2.0 * PI * i as f64 / fs).cos()).abs())
                .fold(0.0, f64::max)
        };
        let ratio = err(100.0) / err(200.0);
        assert!((ratio - 16.0).abs() < 1.0, "ratio {ratio}");
    }

    #[test]
    fn window_counts() {
        let cfg = WindowConfig::default();
        let ws = windows_for_length(41_100, 100.0, &cfg).unwrap();
        assert_eq!(cfg.samples(100.0).unwrap(), (300, 30));
        assert_eq!(ws.len(), 1361);

        let exact = windows_for_length(300, 100.0, &cfg).unwrap();
        assert_eq!(exact.len(), 1);
        assert_eq!(exact[0].start_index, 0);

        let cfg0 = WindowConfig {
            window_seconds: 3.0,
            overlap_fraction: 0.0,
        };
        let starts: Vec<_> = windows_for_length(10, 1.0, &cfg0)
            .unwrap()
            .iter()
            .map(|w| w.start_index)
            .collect();
        assert_eq!(starts, vec![0, 3, 6]);
    }

    #[test]
    fn window_longer_than_signal() {
        assert!(matches!(
            windows_for_length(100, 100.0, &WindowConfig::default()),
            Err(SignalError::WindowLongerThanSignal {
                window: 300,
                samples: 100
            })
        ));
    }

    proptest! {
        #[test]
        fn derivative_is_linear(
            xs in proptest::collection::vec(-10.0f64..10.0, 8..40),
            alpha in -5.0f64..5.0,
            beta in -5.0f64..5.0,
        ) {
            let n = xs.len();
            let x = Array1::from(xs.clone());
            let y = Array1::from_iter(xs.iter().rev().map(|v| v.sin()));
            let mk = |a: &Array1<f64>| Signal::new(a.clone().insert_axis(Axis(0)), 7.0).unwrap();
            let combo = &x * alpha + &y * beta;
            let lhs = estimate_derivative(&mk(&combo));
            let dx = estimate_derivative(&mk(&x));
            let dy = estimate_derivative(&mk(&y));
            for i in 0..n {
                let rhs = alpha * dx.data[[0, i]] + beta * dy.data[[0, i]];
                prop_assert!((lhs.data[[0, i]] - rhs).abs() <= 1e-9 * (1.0 + rhs.abs()));
            }
        }

        #[test]
        fn windows_form_arithmetic_progression(
            samples in 3usize..5000,
            secs in 0.03f64..2.0,
            overlap in 0.0f64..0.99,
        ) {
            let cfg = WindowConfig { window_seconds: secs, overlap_fraction: overlap };
            if let Ok((len, step)) = cfg.samples(100.0) {
                match windows_for_length(samples, 100.0, &cfg) {
                    Ok(ws) => {
                        prop_assert_eq!(ws.len(), (samples - len) / step + 1);
                        for (i, w) in ws.iter().enumerate() {
                            prop_assert_eq!(w.start_index, i * step);
                            prop_assert!(w.end_index() <= samples);
                        }
                    }
                    Err(_) => prop_assert!(len > samples),
                }
            }
        }
    }
}
