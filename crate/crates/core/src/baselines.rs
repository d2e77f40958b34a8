//! PCA and FastICA projections used as reference points for DyCA, plus the
//! trajectory-space angle used to compare projections with known sources.

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::{principal_angles, sym_eig, LinalgError, SymMatrix};
use crate::signal::{Signal, SignalError};
use crate::synth::Event;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BaselineError {
    #[error(transparent)]
    Signal(#[from] SignalError),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error("requested {k} components but only {available} are available")]
    KTooLarge { k: usize, available: usize },
    #[error("covariance is rank deficient: component {index} has variance {variance:e}")]
    WhiteningFailed { index: usize, variance: f64 },
    #[error("model expects {expected} channels, signal has {got}")]
    ChannelMismatch { expected: usize, got: usize },
    #[error("invalid argument: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PcaModel {
    /// `N × k`, orthonormal columns.
    pub components: Array2<f64>,
    /// Descending.
    pub explained_variance: Array1<f64>,
    pub mean: Array1<f64>,
    /// Trace of the covariance.
    pub total_variance: f64,
}

fn centered(q: &Signal) -> (Array2<f64>, Array1<f64>) {
    let data = q.data();
    let mean = data.mean_axis(Axis(1)).expect("signal has samples");
    let c = &data - &mean.view().insert_axis(Axis(1));
    (c, mean)
}

fn covariance(c: ArrayView2<'_, f64>) -> Result<SymMatrix, LinalgError> {
    SymMatrix::new(c.dot(&c.t()) / c.ncols() as f64)
}

/// Top-`k` eigenvectors of the mean-centred covariance (divisor `T`).
pub fn pca_fit(q: &Signal, k: usize) -> Result<PcaModel, BaselineError> {
    let n = q.n_channels();
    if k == 0 || k > n {
        return Err(BaselineError::KTooLarge { k, available: n });
    }
    let (c, mean) = centered(q);
    let cov = covariance(c.view())?;
    let eig = sym_eig(&cov)?;
    Ok(PcaModel {
        components: eig.eigenvectors.slice(ndarray::s![.., ..k]).to_owned(),
        explained_variance: eig.eigenvalues.slice(ndarray::s![..k]).mapv(|v| v.max(0.0)),
        mean,
        total_variance: cov.trace(),
    })
}

impl PcaModel {
    pub fn transform(&self, q: &Signal, k: usize) -> Result<Signal, BaselineError> {
        check_k(k, self.components.ncols())?;
        check_channels(self.mean.len(), q)?;
        let c = &q.data() - &self.mean.view().insert_axis(Axis(1));
        let basis = self.components.slice(ndarray::s![.., ..k]);
        Ok(Signal::new(basis.t().dot(&c), q.sample_rate_hz())?)
    }

    pub fn inverse_transform(&self, x: &Signal) -> Result<Signal, BaselineError> {
        let k = x.n_channels();
        check_k(k, self.components.ncols())?;
        let basis = self.components.slice(ndarray::s![.., ..k]);
        let q = basis.dot(&x.data()) + self.mean.view().insert_axis(Axis(1));
        Ok(Signal::new(q, x.sample_rate_hz())?)
    }
}

fn check_k(k: usize, available: usize) -> Result<(), BaselineError> {
    if k == 0 || k > available {
        return Err(BaselineError::KTooLarge { k, available });
    }
    Ok(())
}

fn check_channels(expected: usize, q: &Signal) -> Result<(), BaselineError> {
    if q.n_channels() != expected {
        return Err(BaselineError::ChannelMismatch {
            expected,
            got: q.n_channels(),
        });
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IcaOptions {
    pub max_iter: usize,
    pub tol: f64,
    /// Seed for the initial rotation.
    pub seed: u64,
}

impl Default for IcaOptions {
    fn default() -> Self {
        Self {
            max_iter: 500,
            tol: 1e-6,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IcaModel {
    pub mean: Array1<f64>,
    /// `k × N`, maps centred data to unit-covariance coordinates.
    pub whitening: Array2<f64>,
    /// `k × k` orthogonal rotation found by the fixed-point iteration.
    pub rotation: Array2<f64>,
    /// `k × N`, `rotation · whitening`.
    pub unmixing: Array2<f64>,
    pub iterations_used: usize,
    pub converged: bool,
}

/// Relative eigenvalue floor below which whitening is refused.
const WHITENING_FLOOR: f64 = 1e-12;

/// Symmetric fixed-point FastICA with the `tanh` contrast on the top-`k`
/// whitened principal subspace.
pub fn ica_fit(q: &Signal, k: usize, opts: &IcaOptions) -> Result<IcaModel, BaselineError> {
    let n = q.n_channels();
    if k == 0 || k > n {
        return Err(BaselineError::KTooLarge { k, available: n });
    }
    if opts.max_iter == 0 || !(opts.tol > 0.0) {
        return Err(BaselineError::Invalid(format!(
            "need max_iter >= 1 and tol > 0, got {} and {}",
            opts.max_iter, opts.tol
        )));
    }
    let (c, mean) = centered(q);
    let eig = sym_eig(&covariance(c.view())?)?;
    let top = eig.eigenvalues[0].max(0.0);
    let mut whitening = Array2::zeros((k, n));
    for i in 0..k {
        let variance = eig.eigenvalues[i];
        if !(variance > WHITENING_FLOOR * top) {
            return Err(BaselineError::WhiteningFailed { index: i, variance });
        }
        whitening
            .row_mut(i)
            .assign(&(&eig.eigenvectors.column(i) / variance.sqrt()));
    }
    let z = whitening.dot(&c);
    let t = z.ncols() as f64;

    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let init = Array2::from_shape_simple_fn((k, k), || StandardNormal.sample(&mut rng));
    let mut w = symmetric_decorrelation(&init)?;
    let mut converged = false;
    let mut iterations_used = 0;
    for it in 1..=opts.max_iter {
        iterations_used = it;
        let y = w.dot(&z);
        let g = y.mapv(f64::tanh);
        let g_prime_mean = g.mapv(|v| 1.0 - v * v).mean_axis(Axis(1)).expect("non-empty");
        let mut next = g.dot(&z.t()) / t;
        for i in 0..k {
            let wi = w.row(i).to_owned();
            next.row_mut(i).scaled_add(-g_prime_mean[i], &wi);
        }
        let next = symmetric_decorrelation(&next)?;
        let change = (0..k)
            .map(|i| (1.0 - next.row(i).dot(&w.row(i)).abs()).abs())
            .fold(0.0f64, f64::max);
        w = next;
        if change < opts.tol {
            converged = true;
            break;
        }
    }
    Ok(IcaModel {
        unmixing: w.dot(&whitening),
        mean,
        whitening,
        rotation: w,
        iterations_used,
        converged,
    })
}

/// `(W Wᵀ)^{-1/2} W`
fn symmetric_decorrelation(w: &Array2<f64>) -> Result<Array2<f64>, BaselineError> {
    let eig = sym_eig(&SymMatrix::new(w.dot(&w.t()))?)?;
    let k = w.nrows();
    let mut inv_sqrt = Array2::<f64>::zeros((k, k));
    for (j, &s) in eig.eigenvalues.iter().enumerate() {
        if !(s > 0.0) {
            return Err(BaselineError::Invalid("singular ICA iterate".into()));
        }
        let v = eig.eigenvectors.column(j);
        for a in 0..k {
            for b in 0..k {
                inv_sqrt[[a, b]] += v[a] * v[b] / s.sqrt();
            }
        }
    }
    Ok(inv_sqrt.dot(w))
}

impl IcaModel {
    pub fn components(&self) -> usize {
        self.unmixing.nrows()
    }

    pub fn transform(&self, q: &Signal, k: usize) -> Result<Signal, BaselineError> {
        check_k(k, self.components())?;
        check_channels(self.mean.len(), q)?;
        let c = &q.data() - &self.mean.view().insert_axis(Axis(1));
        let rows = self.unmixing.slice(ndarray::s![..k, ..]);
        Ok(Signal::new(rows.dot(&c), q.sample_rate_hz())?)
    }

    /// Keeps only the listed components, in the given order.
    pub fn select(&self, indices: &[usize]) -> Result<IcaModel, BaselineError> {
        let k = self.components();
        if let Some(&bad) = indices.iter().find(|&&i| i >= k) {
            return Err(BaselineError::KTooLarge {
                k: bad + 1,
                available: k,
            });
        }
        Ok(IcaModel {
            mean: self.mean.clone(),
            whitening: self.whitening.clone(),
            rotation: self.rotation.select(Axis(0), indices),
            unmixing: self.unmixing.select(Axis(0), indices),
            iterations_used: self.iterations_used,
            converged: self.converged,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum BaselineModel {
    Pca(PcaModel),
    Ica(IcaModel),
}

impl From<PcaModel> for BaselineModel {
    fn from(m: PcaModel) -> Self {
        BaselineModel::Pca(m)
    }
}

impl From<IcaModel> for BaselineModel {
    fn from(m: IcaModel) -> Self {
        BaselineModel::Ica(m)
    }
}

/// First `k` amplitude channels of a fitted baseline.
pub fn baseline_project(q: &Signal, model: &BaselineModel, k: usize) -> Result<Signal, BaselineError> {
    match model {
        BaselineModel::Pca(m) => m.transform(q, k),
        BaselineModel::Ica(m) => m.transform(q, k),
    }
}

/// Variance inside the events divided by variance outside, per channel.
/// Channels with no samples on one side get `NaN`.
pub fn ictal_variance_ratios(amplitudes: &Signal, events: &[Event]) -> Vec<f64> {
    let fs = amplitudes.sample_rate_hz();
    let inside: Vec<bool> = (0..amplitudes.n_samples())
        .map(|i| {
            let t = i as f64 / fs;
            events.iter().any(|e| t >= e.start_s && t < e.end_s)
        })
        .collect();
    amplitudes
        .data()
        .rows()
        .into_iter()
        .map(|row| {
            let var = |want: bool| {
                let v: Vec<f64> = row
                    .iter()
                    .zip(&inside)
                    .filter(|(_, &m)| m == want)
                    .map(|(&x, _)| x)
                    .collect();
                if v.len() < 2 {
                    return f64::NAN;
                }
                let mean = v.iter().sum::<f64>() / v.len() as f64;
                v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / v.len() as f64
            };
            var(true) / var(false)
        })
        .collect()
}

/// Component indices sorted by descending ictal variance ratio.
pub fn rank_by_ictal_variance(amplitudes: &Signal, events: &[Event]) -> Vec<usize> {
    let ratios = ictal_variance_ratios(amplitudes, events);
    let mut idx: Vec<usize> = (0..ratios.len()).collect();
    idx.sort_by(|&a, &b| {
        let key = |i: usize| {
            if ratios[i].is_nan() {
                f64::NEG_INFINITY
            } else {
                ratios[i]
            }
        };
        key(b).total_cmp(&key(a))
    });
    idx
}

/// The `k` ICA components whose amplitudes grow most inside the events.
pub fn best_ica(q: &Signal, events: &[Event], k: usize, opts: &IcaOptions) -> Result<IcaModel, BaselineError> {
    let full = ica_fit(q, q.n_channels(), opts)?;
    check_k(k, full.components())?;
    let amps = full.transform(q, full.components())?;
    let order = rank_by_ictal_variance(&amps, events);
    full.select(&order[..k])
}

/// Largest principal angle, in degrees, between the time-series spaces
/// spanned by the (mean-removed) rows of `x` and of `sources`. It is zero
/// exactly when each source is a linear combination of the projected
/// amplitudes and vice versa, so it measures whether a projection reproduces
/// the source trajectory up to an invertible linear map.
pub fn trajectory_angle_degrees(x: ArrayView2<'_, f64>, sources: ArrayView2<'_, f64>) -> Result<f64, BaselineError> {
    if x.ncols() != sources.ncols() {
        return Err(BaselineError::Invalid(format!(
            "trajectories have {} and {} samples",
            x.ncols(),
            sources.ncols()
        )));
    }
    let center = |a: ArrayView2<'_, f64>| {
        let m = a.mean_axis(Axis(1)).expect("non-empty");
        (&a - &m.insert_axis(Axis(1))).reversed_axes()
    };
    let angles = principal_angles(center(x).view(), center(sources).view())?;
    Ok(angles.last().copied().unwrap_or(0.0).to_degrees())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::max_abs;
    use ndarray::array;
    use rand::Rng;

    fn gaussian(rows: usize, cols: usize, seed: u64) -> Array2<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Array2::from_shape_simple_fn((rows, cols), || StandardNormal.sample(&mut rng))
    }

    fn uniform(rows: usize, cols: usize, seed: u64) -> Array2<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = 3f64.sqrt();
        Array2::from_shape_simple_fn((rows, cols), || rng.random_range(-a..a))
    }

    #[test]
    fn isotropic_variances_are_equal() {
        let q = Signal::new(gaussian(4, 50_000, 1), 10.0).unwrap();
        let m = pca_fit(&q, 4).unwrap();
        let (lo, hi) = (m.explained_variance[3], m.explained_variance[0]);
        assert!(hi / lo < 1.05, "{:?}", m.explained_variance);
    }

    #[test]
    fn principal_axis_of_line() {
        let noise = gaussian(2, 2000, 2) * 0.01;
        let line = Array2::from_shape_fn((2, 2000), |(c, i)| (c + 1) as f64 * i as f64 / 2000.0);
        let m = pca_fit(&Signal::new(line + noise, 1.0).unwrap(), 1).unwrap();
        let c = m.components.column(0);
        let s5 = 5f64.sqrt();
        assert!((c[0].abs() - 1.0 / s5).abs() < 1e-3 && (c[1].abs() - 2.0 / s5).abs() < 1e-3);
        assert!(c[0] * c[1] > 0.0);
    }

    #[test]
    fn full_pca_round_trips() {
        let q = Signal::new(gaussian(5, 300, 3) + 2.0, 1.0).unwrap();
        let m = pca_fit(&q, 5).unwrap();
        let back = m.inverse_transform(&m.transform(&q, 5).unwrap()).unwrap();
        assert!(max_abs((&back.data() - &q.data()).view()) < 1e-10);
        assert!((m.explained_variance.sum() - m.total_variance).abs() < 1e-8);
        let g = m.components.t().dot(&m.components);
        assert!(max_abs((&g - &Array2::<f64>::eye(5)).view()) < 1e-8);
    }

    #[test]
    fn pca_rejects_large_k() {
        let q = Signal::new(gaussian(3, 30, 4), 1.0).unwrap();
        assert_eq!(pca_fit(&q, 4), Err(BaselineError::KTooLarge { k: 4, available: 3 }));
        let m = pca_fit(&q, 2).unwrap();
        assert!(matches!(
            baseline_project(&q, &m.into(), 3),
            Err(BaselineError::KTooLarge { .. })
        ));
    }

    fn pattern_error(p: &Array2<f64>) -> f64 {
        // Normalize rows by their largest entry; every entry off that pattern
        // should vanish.
        let mut worst = 0.0f64;
        for row in p.rows() {
            let (imax, big) = row.iter().enumerate().fold(
                (0, 0.0f64),
                |(i, m), (j, &v)| if v.abs() > m { (j, v.abs()) } else { (i, m) },
            );
            for (j, &v) in row.iter().enumerate() {
                if j != imax {
                    worst = worst.max(v.abs() / big);
                }
            }
        }
        worst
    }

    #[test]
    fn ica_unmixes_uniform_sources() {
        let s = uniform(2, 20_000, 5);
        let mixing = array![[1.0, 0.5], [0.5, 1.0]];
        let q = Signal::new(mixing.dot(&s), 100.0).unwrap();
        let m = ica_fit(&q, 2, &IcaOptions::default()).unwrap();
        assert!(m.converged);
        let err = pattern_error(&m.unmixing.dot(&mixing));
        assert!(err <= 0.05, "{err}");
        let r = m.rotation.dot(&m.rotation.t());
        assert!(max_abs((&r - &Array2::<f64>::eye(2)).view()) < 1e-6);
    }

    #[test]
    fn ica_on_independent_white_input_is_signed_permutation() {
        let s = uniform(3, 20_000, 6);
        let m = ica_fit(&Signal::new(s.clone(), 1.0).unwrap(), 3, &IcaOptions::default()).unwrap();
        assert!(pattern_error(&m.unmixing) <= 0.05);
    }

    #[test]
    fn ica_output_is_white() {
        let q = Signal::new(gaussian(4, 5000, 7), 1.0).unwrap();
        let m = ica_fit(
            &q,
            3,
            &IcaOptions {
                seed: 3,
                ..Default::default()
            },
        )
        .unwrap();
        let y = m.transform(&q, 3).unwrap();
        assert!(y.data().iter().all(|v| v.is_finite()));
        let (c, _) = centered(&y);
        let cov = c.dot(&c.t()) / c.ncols() as f64;
        assert!(max_abs((&cov - &Array2::<f64>::eye(3)).view()) < 1e-6);
    }

    #[test]
    fn ica_is_seed_deterministic() {
        let q = Signal::new(uniform(3, 3000, 8), 1.0).unwrap();
        let a = ica_fit(&q, 3, &IcaOptions::default()).unwrap();
        let b = ica_fit(&q, 3, &IcaOptions::default()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn whitening_fails_on_rank_deficient_data() {
        let row = gaussian(1, 100, 9);
        let q = Signal::new(ndarray::concatenate![Axis(0), row, row], 1.0).unwrap();
        assert!(matches!(
            ica_fit(&q, 2, &IcaOptions::default()),
            Err(BaselineError::WhiteningFailed { index: 1, .. })
        ));
    }

    #[test]
    fn ictal_ranking() {
        let mut a = gaussian(3, 1000, 10);
        for i in 500..700 {
            a[[2, i]] *= 5.0;
            a[[0, i]] *= 2.0;
        }
        let amps = Signal::new(a, 100.0).unwrap();
        assert_eq!(
            rank_by_ictal_variance(&amps, &[Event::seizure(5.0, 7.0)]),
            vec![2, 0, 1]
        );
    }

    #[test]
    fn trajectory_angle_ignores_invertible_maps() {
        let s = gaussian(3, 400, 11);
        let map = array![[1.0, 2.0, 0.0], [0.0, 1.0, -1.0], [3.0, 0.0, 1.0]];
        let x = map.dot(&s) + 4.0;
        assert!(trajectory_angle_degrees(x.view(), s.view()).unwrap() < 1e-6);
        let other = gaussian(3, 400, 12);
        assert!(trajectory_angle_degrees(other.view(), s.view()).unwrap() > 45.0);
    }
}
