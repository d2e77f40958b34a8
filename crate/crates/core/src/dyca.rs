//! Dynamical Component Analysis.
//!
//! Given a multichannel signal `q(t)` and its derivative `q̇(t)`, DyCA looks
//! for projection vectors `u` such that `q̇ᵀu` is (nearly) a linear
//! combination of the projections `qᵀv`. With the time-averaged correlation
//! matrices
//!
//! ```text
//! C0 = ⟨q qᵀ⟩,   C1 = ⟨q̇ qᵀ⟩,   C2 = ⟨q̇ q̇ᵀ⟩
//! ```
//!
//! the stationary points of the normalized cost
//!
//! ```text
//! D(u, v, a) = ⟨(q̇ᵀu − Σⱼ aⱼ qᵀvⱼ)²⟩ / ⟨(q̇ᵀu)²⟩
//! ```
//!
//! solve the generalized symmetric-definite eigenproblem
//! `C1 C0⁻¹ C1ᵀ u = λ C2 u`, and at an eigenvector the minimum over `(v, a)`
//! is exactly `1 − λ`. Eigenvalues close to one therefore count directions in
//! which the signal obeys a linear differential equation. For each such `u`
//! the companion vector `v = C1⁻¹ C2 u` completes the projection space
//! `span{u₁…u_m, v₁…v_m}`.

use ndarray::{Array1, Array2, ArrayView1, Axis};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::{
    self, cholesky, frobenius_norm, gen_sym_def_eig_with_factor, orthonormalize, solve, LinalgError, SymMatrix,
};
use crate::signal::{estimate_derivative_with, DerivativeScheme, Signal, SignalError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DycaError {
    #[error(transparent)]
    Signal(#[from] SignalError),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error("signal and derivative shapes differ: {0:?} vs {1:?}")]
    ShapeMismatch((usize, usize), (usize, usize)),
    #[error("DyCA needs at least 2 channels, got {0}")]
    TooFewChannels(usize),
    #[error("{samples} samples is too few for {channels} channels (need at least {})", 2 * channels)]
    TooFewSamples { samples: usize, channels: usize },
    #[error("derivative correlation matrix is degenerate: {0}")]
    DegenerateCorrelation(String),
    #[error("cost function denominator ⟨(q̇ᵀu)²⟩ is zero")]
    ZeroDenominator,
    #[error("projection basis of {columns} columns has rank {rank}")]
    RankDeficientBasis { columns: usize, rank: usize },
    #[error("linear-coefficient regressors are all zero")]
    RankDeficientRegressors,
    #[error("invalid options: {0}")]
    InvalidOptions(String),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
}

/// The three time-averaged correlation matrices.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrelationTriple {
    /// `⟨q qᵀ⟩`
    pub c0: SymMatrix,
    /// `⟨q̇ qᵀ⟩`, not symmetric in general.
    pub c1: Array2<f64>,
    /// `⟨q̇ q̇ᵀ⟩`
    pub c2: SymMatrix,
    pub sample_count: usize,
}

pub fn correlation_matrices(q: &Signal, qdot: &Signal) -> Result<CorrelationTriple, DycaError> {
    let (a, b) = (q.data(), qdot.data());
    if a.dim() != b.dim() {
        return Err(DycaError::ShapeMismatch(a.dim(), b.dim()));
    }
    let t = a.ncols() as f64;
    let c0 = SymMatrix::new(a.dot(&a.t()) / t)?;
    let c1 = b.dot(&a.t()) / t;
    let c2 = SymMatrix::new(b.dot(&b.t()) / t)?;
    Ok(CorrelationTriple {
        c0,
        c1,
        c2,
        sample_count: a.ncols(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DycaOptions {
    /// Eigenvalues at or above this count as deterministic directions.
    pub determinism_threshold: f64,
    pub min_components: usize,
    /// Upper bound on `m`; `None` means the channel count.
    pub max_components: Option<usize>,
    /// Ridge added to an ill-conditioned `C2`, relative to `trace(C2) / N`.
    pub regularization_scale: f64,
    pub derivative: DerivativeScheme,
}

impl Default for DycaOptions {
    fn default() -> Self {
        Self {
            determinism_threshold: 0.9,
            min_components: 1,
            max_components: None,
            regularization_scale: 1e-8,
            derivative: DerivativeScheme::Central,
        }
    }
}

impl DycaOptions {
    pub fn validate(&self, channels: usize) -> Result<(), DycaError> {
        let t = self.determinism_threshold;
        if !(t > 0.0 && t < 1.0) {
            return Err(DycaError::InvalidOptions(format!(
                "determinism_threshold must lie in (0, 1), got {t}"
            )));
        }
        let max = self.max_components.unwrap_or(channels);
        if self.min_components == 0 || self.min_components > max || max > channels {
            return Err(DycaError::InvalidOptions(format!(
                "need 1 <= min_components ({}) <= max_components ({max}) <= channels ({channels})",
                self.min_components
            )));
        }
        if !(self.regularization_scale >= 0.0 && self.regularization_scale.is_finite()) {
            return Err(DycaError::InvalidOptions(format!(
                "regularization_scale must be non-negative, got {}",
                self.regularization_scale
            )));
        }
        Ok(())
    }
}

/// `C2` is treated as ill-conditioned when the squared ratio of its smallest
/// to largest Cholesky pivot drops below this.
const C2_CONDITION_LIMIT: f64 = 1e12;
/// Columns of the spanning set that fall below this relative residual during
/// orthonormalization are considered dependent.
const BASIS_RANK_TOLERANCE: f64 = 1e-6;
const PINV_CUTOFF: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct DycaDiagnostics {
    /// Eigenvalues before clamping to `[0, 1]`.
    pub raw_eigenvalues: Vec<f64>,
    pub c0_regularized: bool,
    pub c0_condition: f64,
    pub c2_regularized: bool,
    pub c2_ridge: f64,
    /// `‖A u − λ B u‖₂ / (‖A‖_F + ‖B‖_F)` per eigenpair.
    pub generalized_residuals: Vec<f64>,
    /// `‖C1 v − C2 u‖₂ / ‖C2 u‖₂` per retained pair.
    pub v_residuals: Vec<f64>,
    /// Columns dropped from the spanning set as linearly dependent.
    pub dependent_basis_columns: usize,
    /// Per-row residual ratios of the linear-coefficient fit.
    pub linear_fit_residual_ratios: Vec<f64>,
}

/// Spectrum of the DyCA pencil for one signal.
#[derive(Debug, Clone, PartialEq)]
pub struct DycaSpectrum {
    /// Raw generalized eigenvalues, descending.
    pub eigenvalues: Array1<f64>,
    /// Generalized eigenvectors, C2-orthonormal columns.
    pub u_vectors: Array2<f64>,
    /// `C0⁻¹ C1ᵀ`, the inner least-squares map `u ↦ argmin_w ⟨(q̇ᵀu − qᵀw)²⟩`.
    pub inner_map: Array2<f64>,
    pub correlations: CorrelationTriple,
    pub diagnostics: DycaDiagnostics,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DycaModel {
    /// Eigenvalues, descending, clamped to `[0, 1]`.
    pub eigenvalues: Array1<f64>,
    pub u_vectors: Array2<f64>,
    /// Number of deterministic directions retained.
    pub m: usize,
    /// Orthonormal basis of `span{u₁…u_m, v₁…v_m}`; normally `2m` columns.
    pub basis: Array2<f64>,
    /// `v_i = C1⁻¹ C2 u_i` for the retained directions.
    pub v_vectors: Array2<f64>,
    /// Least-squares estimate of the linear part of the amplitude dynamics.
    pub linear_coeffs: Option<Array2<f64>>,
    pub diagnostics: DycaDiagnostics,
}

impl DycaModel {
    /// Orthonormal basis of `span{u₁, u₂, v₁}` for three-dimensional
    /// trajectory plots.
    pub fn trajectory_basis(&self) -> Result<Array2<f64>, DycaError> {
        if self.u_vectors.ncols() < 2 {
            return Err(DycaError::Dimension(
                "trajectory basis needs at least 2 channels".into(),
            ));
        }
        let mut cols = Array2::zeros((self.u_vectors.nrows(), 3));
        cols.column_mut(0).assign(&self.u_vectors.column(0));
        cols.column_mut(1).assign(&self.u_vectors.column(1));
        cols.column_mut(2).assign(&self.v_vectors.column(0));
        let (q, kept) = orthonormalize(cols.view(), BASIS_RANK_TOLERANCE);
        if kept.len() < 3 {
            return Err(DycaError::RankDeficientBasis {
                columns: 3,
                rank: kept.len(),
            });
        }
        Ok(q)
    }
}

/// Correlations, pencil and generalized eigenpairs. This is the cheap part of
/// [`dyca_fit`] and all the windowed detector needs.
pub fn dyca_spectrum(q: &Signal, opts: &DycaOptions) -> Result<DycaSpectrum, DycaError> {
    let n = q.n_channels();
    if n < 2 {
        return Err(DycaError::TooFewChannels(n));
    }
    if q.n_samples() < 2 * n {
        return Err(DycaError::TooFewSamples {
            samples: q.n_samples(),
            channels: n,
        });
    }
    opts.validate(n)?;
    let qdot = estimate_derivative_with(q, opts.derivative);
    let corr = correlation_matrices(q, &qdot)?;

    let mut inner = solve(&corr.c0.view().to_owned(), &corr.c1.t().to_owned())?;
    if inner.regularized {
        // Singular C0: the ridge would amplify rounding into its null space,
        // so take the minimum-norm minimizer instead.
        if let Some(pinv) = pseudo_inverse(&corr.c0)? {
            inner.x = pinv.dot(&corr.c1.t());
        }
    }
    let a = SymMatrix::new(corr.c1.dot(&inner.x))?;

    let (l, ridge) = factor_c2(&corr.c2, opts.regularization_scale)?;
    let b = if ridge > 0.0 {
        corr.c2.shifted(ridge)
    } else {
        corr.c2.clone()
    };
    let eig = gen_sym_def_eig_with_factor(&a, &l)?;

    let scale = frobenius_norm(a.view()) + frobenius_norm(b.view());
    let generalized_residuals = (0..n)
        .map(|i| {
            let u = eig.eigenvectors.column(i);
            let r = a.view().dot(&u) - b.view().dot(&u) * eig.eigenvalues[i];
            r.dot(&r).sqrt() / scale
        })
        .collect();

    let diagnostics = DycaDiagnostics {
        raw_eigenvalues: eig.eigenvalues.to_vec(),
        c0_regularized: inner.regularized,
        c0_condition: inner.condition,
        c2_regularized: ridge > 0.0,
        c2_ridge: ridge,
        generalized_residuals,
        ..Default::default()
    };
    Ok(DycaSpectrum {
        eigenvalues: eig.eigenvalues,
        u_vectors: eig.eigenvectors,
        inner_map: inner.x,
        correlations: corr,
        diagnostics,
    })
}

/// Moore–Penrose inverse of a PSD matrix, dropping eigenvalues below
/// `1e-12` of the largest. `None` for a zero matrix.
fn pseudo_inverse(c: &SymMatrix) -> Result<Option<Array2<f64>>, DycaError> {
    let n = c.order();
    let eig = linalg::sym_eig(c)?;
    let top = eig.eigenvalues[0];
    if !(top > 0.0) {
        return Ok(None);
    }
    let mut pinv = Array2::<f64>::zeros((n, n));
    for (k, &s) in eig.eigenvalues.iter().enumerate() {
        if s > PINV_CUTOFF * top {
            let v = eig.eigenvectors.column(k);
            for i in 0..n {
                for j in 0..n {
                    pinv[[i, j]] += v[i] * v[j] / s;
                }
            }
        }
    }
    Ok(Some(pinv))
}

fn factor_c2(c2: &SymMatrix, scale: f64) -> Result<(Array2<f64>, f64), DycaError> {
    if let Ok(l) = cholesky(c2) {
        let diag = l.diag();
        let lo = diag.iter().fold(f64::INFINITY, |m, &v| m.min(v));
        let hi = diag.iter().fold(0.0f64, |m, &v| m.max(v));
        if (hi / lo).powi(2) <= C2_CONDITION_LIMIT {
            return Ok((l, 0.0));
        }
    }
    let trace = c2.trace();
    let ridge = scale * trace / c2.order() as f64;
    if !(ridge > 0.0) {
        return Err(DycaError::DegenerateCorrelation(format!(
            "trace(C2) = {trace:e}; signal has no measurable derivative"
        )));
    }
    cholesky(&c2.shifted(ridge))
        .map(|l| (l, ridge))
        .map_err(|e| DycaError::DegenerateCorrelation(format!("C2 not positive definite after ridge {ridge:e}: {e}")))
}

/// Fits DyCA to a whole signal.
pub fn dyca_fit(q: &Signal, opts: &DycaOptions) -> Result<DycaModel, DycaError> {
    let spectrum = dyca_spectrum(q, opts)?;
    let n = q.n_channels();
    let mut diagnostics = spectrum.diagnostics;

    let above = spectrum
        .eigenvalues
        .iter()
        .filter(|&&l| l >= opts.determinism_threshold)
        .count();
    let m = above.clamp(opts.min_components, opts.max_components.unwrap_or(n));

    let corr = &spectrum.correlations;
    let mut v_vectors = Array2::zeros((n, m));
    for i in 0..m {
        let u = spectrum.u_vectors.column(i);
        let lambda = spectrum.eigenvalues[i];
        // C1 w = λ C2 u holds for w = C0⁻¹C1ᵀu, so v = w / λ; the direct solve
        // against C1 is only needed when λ vanishes.
        let v = if lambda.abs() > 1e-12 {
            spectrum.inner_map.dot(&u) / lambda
        } else {
            let rhs = corr.c2.view().dot(&u).insert_axis(Axis(1));
            solve(&corr.c1, &rhs)?.x.column(0).to_owned()
        };
        let c2u = corr.c2.view().dot(&u);
        let r = corr.c1.dot(&v) - &c2u;
        diagnostics
            .v_residuals
            .push(r.dot(&r).sqrt() / c2u.dot(&c2u).sqrt().max(f64::MIN_POSITIVE));
        v_vectors.column_mut(i).assign(&v);
    }

    let mut span = Array2::zeros((n, 2 * m));
    for i in 0..m {
        span.column_mut(i).assign(&spectrum.u_vectors.column(i));
        span.column_mut(m + i).assign(&v_vectors.column(i));
    }
    let (basis, kept) = orthonormalize(span.view(), BASIS_RANK_TOLERANCE);
    diagnostics.dependent_basis_columns = 2 * m - kept.len();

    let linear_coeffs = match project(q, &basis) {
        Ok(amplitudes) => {
            let rows = m.min(amplitudes.n_channels());
            match estimate_linear_coeffs_with(&amplitudes, rows, opts.derivative) {
                Ok(fit) => {
                    diagnostics.linear_fit_residual_ratios = fit.residual_ratios;
                    Some(fit.coeffs)
                }
                Err(_) => None,
            }
        }
        Err(_) => None,
    };

    Ok(DycaModel {
        eigenvalues: spectrum.eigenvalues.mapv(|l| l.clamp(0.0, 1.0)),
        u_vectors: spectrum.u_vectors,
        m,
        basis,
        v_vectors,
        linear_coeffs,
        diagnostics,
    })
}

/// `⟨(q̇ᵀu − Σⱼ aⱼ qᵀvⱼ)²⟩ / ⟨(q̇ᵀu)²⟩` with central-difference derivatives.
pub fn cost_function(u: ArrayView1<'_, f64>, v_list: &[Array1<f64>], a: &[f64], q: &Signal) -> Result<f64, DycaError> {
    cost_function_with(u, v_list, a, q, DerivativeScheme::Central)
}

pub fn cost_function_with(
    u: ArrayView1<'_, f64>,
    v_list: &[Array1<f64>],
    a: &[f64],
    q: &Signal,
    scheme: DerivativeScheme,
) -> Result<f64, DycaError> {
    let n = q.n_channels();
    if u.len() != n || v_list.iter().any(|v| v.len() != n) {
        return Err(DycaError::Dimension(format!(
            "projection vectors must have {n} entries"
        )));
    }
    if v_list.len() != a.len() {
        return Err(DycaError::Dimension(format!(
            "{} v-vectors but {} coefficients",
            v_list.len(),
            a.len()
        )));
    }
    let qdot = estimate_derivative_with(q, scheme);
    let mut w = Array1::<f64>::zeros(n);
    for (v, &aj) in v_list.iter().zip(a) {
        w.scaled_add(aj, v);
    }
    let lhs = u.dot(&qdot.data());
    let rhs = w.dot(&q.data());
    let t = q.n_samples() as f64;
    let num = (&lhs - &rhs).mapv(|r| r * r).sum() / t;
    let den = lhs.mapv(|r| r * r).sum() / t;
    if !(den > 0.0) {
        return Err(DycaError::ZeroDenominator);
    }
    Ok(num / den)
}

/// Minimum of the cost over `(v, a)` for a fixed `u`, together with the
/// minimizing combination `w = Σⱼ aⱼ vⱼ = C0⁻¹ C1ᵀ u`.
pub fn min_cost(u: ArrayView1<'_, f64>, q: &Signal) -> Result<(f64, Array1<f64>), DycaError> {
    let qdot = estimate_derivative_with(q, DerivativeScheme::Central);
    let corr = correlation_matrices(q, &qdot)?;
    let rhs = corr.c1.t().dot(&u).insert_axis(Axis(1));
    let w = solve(&corr.c0.view().to_owned(), &rhs)?.x.column(0).to_owned();
    let d = cost_function(u, std::slice::from_ref(&w), &[1.0], q)?;
    Ok((d, w))
}

/// Amplitudes `x(t)` of `q` in the given basis: `basisᵀ q` for an orthonormal
/// basis, the least-squares coordinates otherwise.
pub fn project(q: &Signal, basis: &Array2<f64>) -> Result<Signal, DycaError> {
    if basis.nrows() != q.n_channels() {
        return Err(DycaError::Dimension(format!(
            "basis has {} rows, signal has {} channels",
            basis.nrows(),
            q.n_channels()
        )));
    }
    let k = basis.ncols();
    let (_, kept) = orthonormalize(basis.view(), 1e-10);
    if k == 0 || kept.len() < k {
        return Err(DycaError::RankDeficientBasis {
            columns: k,
            rank: kept.len(),
        });
    }
    let gram = basis.t().dot(basis);
    let coords = basis.t().dot(&q.data());
    let orthonormal = linalg::max_abs((&gram - &Array2::<f64>::eye(k)).view()) < 1e-10;
    let x = if orthonormal { coords } else { solve(&gram, &coords)?.x };
    Ok(Signal::new(x, q.sample_rate_hz())?)
}

/// Coefficients of the linear amplitude equations `ẋᵢ = Σₖ aᵢₖ xₖ`, `i < m`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearFit {
    /// `m × n`
    pub coeffs: Array2<f64>,
    /// `⟨(ẋᵢ − Σₖ aᵢₖ xₖ)²⟩ / ⟨ẋᵢ²⟩` per row (0 when `ẋᵢ ≡ 0`).
    pub residual_ratios: Vec<f64>,
}

pub fn estimate_linear_coeffs(amplitudes: &Signal, m: usize) -> Result<LinearFit, DycaError> {
    estimate_linear_coeffs_with(amplitudes, m, DerivativeScheme::Central)
}

/// Least squares with the minimum-norm solution when the regressors are
/// collinear.
pub fn estimate_linear_coeffs_with(
    amplitudes: &Signal,
    m: usize,
    scheme: DerivativeScheme,
) -> Result<LinearFit, DycaError> {
    let n = amplitudes.n_channels();
    if m > n {
        return Err(DycaError::Dimension(format!(
            "asked for {m} linear rows from {n} amplitudes"
        )));
    }
    let xdot = estimate_derivative_with(amplitudes, scheme);
    let corr = correlation_matrices(amplitudes, &xdot)?;
    let pinv = pseudo_inverse(&corr.c0)?.ok_or(DycaError::RankDeficientRegressors)?;
    let coeffs = corr.c1.slice(ndarray::s![0..m, ..]).dot(&pinv);
    let x = amplitudes.data();
    let d = xdot.data();
    let residual_ratios = (0..m)
        .map(|i| {
            let pred = coeffs.row(i).dot(&x);
            let target = d.row(i);
            let num: f64 = target.iter().zip(&pred).map(|(a, b)| (a - b).powi(2)).sum();
            let den: f64 = target.iter().map(|a| a * a).sum();
            if den > 0.0 {
                num / den
            } else {
                0.0
            }
        })
        .collect();
    Ok(LinearFit {
        coeffs,
        residual_ratios,
    })
}
