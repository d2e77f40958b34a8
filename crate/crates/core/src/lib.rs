//! Dynamical Component Analysis for multichannel recordings, with a windowed
//! eigenvalue detector for low-dimensional deterministic episodes.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod baselines;
pub mod detector;
pub mod dyca;
pub mod io;
pub mod linalg;
pub mod signal;
pub mod synth;

pub use baselines::{
    baseline_project, best_ica, ica_fit, pca_fit, trajectory_angle_degrees, BaselineError, BaselineModel, IcaModel,
    IcaOptions, PcaModel,
};
pub use detector::{
    compute_metrics, default_grid, detect, detect_recording, label_windows, threshold_sweep, Combination,
    DetectorConfig, DetectorError, MetricsReport, Summary, SweepResult, SweepRow, WindowResult,
};
pub use dyca::{
    correlation_matrices, cost_function, dyca_fit, dyca_spectrum, estimate_linear_coeffs, min_cost, project,
    CorrelationTriple, DycaDiagnostics, DycaError, DycaModel, DycaOptions, DycaSpectrum, LinearFit,
};
pub use io::{read_annotations, read_recording, write_annotations, write_recording, IoError};
pub use linalg::{EigPair, LinalgError, SymMatrix};
pub use signal::{
    estimate_derivative, estimate_derivative_with, sliding_windows, DerivativeScheme, Signal, SignalError,
    WindowConfig, WindowView,
};
pub use synth::{
    compose_recording, compose_recording_with_sources, embed, shilnikov_trajectory, validate_events,
    AnnotatedRecording, BackgroundSpec, Burst, BurstSources, BurstWindow, EmbeddingSpec, Event, EventError, Scenario,
    ShilnikovParams, SynthError,
};

/// Any error raised by this crate.
#[derive(Debug, thiserror::Error, Clone, PartialEq)]
pub enum Error {
    #[error(transparent)]
    Signal(#[from] SignalError),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error(transparent)]
    Dyca(#[from] DycaError),
    #[error(transparent)]
    Synth(#[from] SynthError),
    #[error(transparent)]
    Baseline(#[from] BaselineError),
    #[error(transparent)]
    Detector(#[from] DetectorError),
    #[error(transparent)]
    Io(#[from] IoError),
}

impl Error {
    /// True for failures of the numerics on otherwise valid input.
    pub fn is_numerical(&self) -> bool {
        match self {
            Error::Linalg(_) => true,
            Error::Dyca(e) => matches!(
                e,
                DycaError::Linalg(_)
                    | DycaError::DegenerateCorrelation(_)
                    | DycaError::ZeroDenominator
                    | DycaError::RankDeficientBasis { .. }
                    | DycaError::RankDeficientRegressors
            ),
            Error::Synth(e) => matches!(e, SynthError::TrajectoryDiverged { .. }),
            Error::Baseline(e) => matches!(e, BaselineError::Linalg(_) | BaselineError::WhiteningFailed { .. }),
            _ => false,
        }
    }
}
