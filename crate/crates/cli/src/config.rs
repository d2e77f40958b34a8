use std::path::Path;

use clap::Args;
use dyca::detector::{default_grid, validate_grid, Combination, DetectorConfig};
use dyca::{BackgroundSpec, DerivativeScheme, DycaOptions, IcaOptions, Scenario, WindowConfig};
use serde::{Deserialize, Serialize};

use crate::CliError;

/// Every tunable of the pipeline. Each field is both a `--flag` and a key of
/// the TOML config file; flags win over the file, the file over defaults.
#[derive(Debug, Clone, Default, PartialEq, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Window length in seconds [default: 3]
    #[arg(long, global = true)]
    pub window_s: Option<f64>,
    /// Fractional window overlap in [0, 1) [default: 0.9]
    #[arg(long, global = true)]
    pub overlap: Option<f64>,
    /// Detection threshold in (0, 1) [default: 0.9]
    #[arg(long, global = true)]
    pub threshold: Option<f64>,
    /// Number of leading eigenvalues that must exceed the threshold [default: 2]
    #[arg(long, global = true)]
    pub k: Option<usize>,
    /// `and` or `or` across the top-k eigenvalues [default: and]
    #[arg(long, global = true)]
    pub combination: Option<String>,
    /// Threshold grid `start:stop:step` (inclusive) or a comma list [default: 0.5:0.995:0.005]
    #[arg(long, global = true)]
    pub grid: Option<String>,

    /// Eigenvalue level counted as deterministic when fitting [default: 0.9]
    #[arg(long, global = true)]
    pub determinism_threshold: Option<f64>,
    #[arg(long, global = true)]
    pub min_components: Option<usize>,
    #[arg(long, global = true)]
    pub max_components: Option<usize>,
    /// Ridge scale for an ill-conditioned derivative correlation [default: 1e-8]
    #[arg(long, global = true)]
    pub regularization_scale: Option<f64>,
    /// `central` or `five-point` [default: central]
    #[arg(long, global = true)]
    pub derivative: Option<String>,

    /// Scenario overrides for `synth`.
    #[arg(long, global = true)]
    pub channels: Option<usize>,
    #[arg(long, global = true)]
    pub snr_db: Option<f64>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[arg(long, global = true)]
    pub duration_s: Option<f64>,
    #[arg(long, global = true)]
    pub sample_rate_hz: Option<f64>,
    #[arg(long, global = true)]
    pub background_sources: Option<usize>,
    #[arg(long, global = true)]
    pub background_rms_ratio: Option<f64>,
    #[arg(long, global = true)]
    pub background_ar: Option<f64>,

    /// Number of projected components for `project` [default: 3]
    #[arg(long, global = true)]
    pub components: Option<usize>,
    #[arg(long, global = true)]
    pub ica_max_iter: Option<usize>,
    #[arg(long, global = true)]
    pub ica_tol: Option<f64>,
    #[arg(long, global = true)]
    pub ica_seed: Option<u64>,
}

macro_rules! overlay {
    ($top:expr, $base:expr, $($f:ident),*) => {
        RunConfig { $($f: $top.$f.or($base.$f)),* }
    };
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::input(e.to_string(), path))?;
        toml::from_str(&text).map_err(|e| CliError::input(format!("config: {}", e.message()), path))
    }

    /// Values from `self`, falling back to `base`.
    pub fn over(self, base: RunConfig) -> RunConfig {
        overlay!(
            self,
            base,
            window_s,
            overlap,
            threshold,
            k,
            combination,
            grid,
            determinism_threshold,
            min_components,
            max_components,
            regularization_scale,
            derivative,
            channels,
            snr_db,
            seed,
            duration_s,
            sample_rate_hz,
            background_sources,
            background_rms_ratio,
            background_ar,
            components,
            ica_max_iter,
            ica_tol,
            ica_seed
        )
    }

    pub fn dyca_options(&self) -> Result<DycaOptions, CliError> {
        let d = DycaOptions::default();
        let derivative = match self.derivative.as_deref() {
            None | Some("central") => DerivativeScheme::Central,
            Some("five-point") => DerivativeScheme::FivePoint,
            Some(other) => {
                return Err(CliError::input_key(
                    format!("unknown derivative scheme `{other}`"),
                    "derivative",
                ))
            }
        };
        Ok(DycaOptions {
            determinism_threshold: self.determinism_threshold.unwrap_or(d.determinism_threshold),
            min_components: self.min_components.unwrap_or(d.min_components),
            max_components: self.max_components.or(d.max_components),
            regularization_scale: self.regularization_scale.unwrap_or(d.regularization_scale),
            derivative,
        })
    }

    pub fn detector_config(&self) -> Result<DetectorConfig, CliError> {
        let d = DetectorConfig::default();
        let combination = match self.combination.as_deref() {
            None | Some("and") => Combination::And,
            Some("or") => Combination::Or,
            Some(other) => {
                return Err(CliError::input_key(
                    format!("unknown combination `{other}`"),
                    "combination",
                ))
            }
        };
        let cfg = DetectorConfig {
            window: WindowConfig {
                window_seconds: self.window_s.unwrap_or(d.window.window_seconds),
                overlap_fraction: self.overlap.unwrap_or(d.window.overlap_fraction),
            },
            threshold: self.threshold.unwrap_or(d.threshold),
            k_eigenvalues: self.k.unwrap_or(d.k_eigenvalues),
            combination,
            dyca: self.dyca_options()?,
        };
        cfg.validate()
            .map_err(|e| CliError::input_key(e.to_string(), "threshold/k"))?;
        Ok(cfg)
    }

    pub fn grid(&self) -> Result<Vec<f64>, CliError> {
        let grid = match &self.grid {
            None => default_grid(),
            Some(text) => parse_grid(text).map_err(|m| CliError::input_key(m, "grid"))?,
        };
        validate_grid(&grid).map_err(|e| CliError::input_key(e.to_string(), "grid"))?;
        Ok(grid)
    }

    pub fn ica_options(&self) -> IcaOptions {
        let d = IcaOptions::default();
        IcaOptions {
            max_iter: self.ica_max_iter.unwrap_or(d.max_iter),
            tol: self.ica_tol.unwrap_or(d.tol),
            seed: self.ica_seed.unwrap_or(d.seed),
        }
    }

    pub fn apply_to_scenario(&self, mut s: Scenario) -> Scenario {
        if let Some(v) = self.channels {
            s.channels = v;
        }
        if let Some(v) = self.snr_db {
            s.snr_db = v;
        }
        if let Some(v) = self.seed {
            s.seed = v;
        }
        if let Some(v) = self.duration_s {
            s.duration_seconds = v;
        }
        if let Some(v) = self.sample_rate_hz {
            s.sample_rate_hz = v;
        }
        let BackgroundSpec {
            sources,
            rms_ratio,
            ar_coeff,
        } = s.background;
        s.background = BackgroundSpec {
            sources: self.background_sources.unwrap_or(sources),
            rms_ratio: self.background_rms_ratio.unwrap_or(rms_ratio),
            ar_coeff: self.background_ar.or(ar_coeff),
        };
        s
    }
}

/// `start:stop:step` with `stop` included when it lies on the grid, or a
/// comma-separated list.
pub fn parse_grid(text: &str) -> Result<Vec<f64>, String> {
    let num = |s: &str| s.trim().parse::<f64>().map_err(|_| format!("`{s}` is not a number"));
    if text.contains(':') {
        let parts: Vec<&str> = text.split(':').collect();
        let [a, b, step] = parts[..] else {
            return Err(format!("grid `{text}` must be start:stop:step"));
        };
        let (a, b, step) = (num(a)?, num(b)?, num(step)?);
        if step.is_nan() || step <= 0.0 || b < a {
            return Err(format!("grid `{text}` needs step > 0 and stop >= start"));
        }
        let count = ((b - a) / step + 1e-9).floor() as usize + 1;
        // Round to the step's decimal precision so 0.5 + 99·0.005 prints as 0.995.
        let scale = 1e12;
        Ok((0..count)
            .map(|i| ((a + i as f64 * step) * scale).round() / scale)
            .collect())
    } else {
        text.split(',').map(num).collect()
    }
}
