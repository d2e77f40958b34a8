//! Dense real linear algebra: Cholesky, cyclic Jacobi eigensolver, the
//! Cholesky-reduced generalized symmetric-definite eigenproblem, pivoted LU
//! solves with ridge fallback, and subspace utilities.

use ndarray::{Array1, Array2, ArrayView2, Axis};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LinalgError {
    #[error("matrix is not positive definite (pivot {pivot} = {value:e})")]
    NotPositiveDefinite { pivot: usize, value: f64 },
    #[error("symmetric eigensolver did not converge after {sweeps} sweeps (off-diagonal norm {off_norm:e})")]
    NoConvergence { sweeps: usize, off_norm: f64 },
    #[error("matrix is exactly singular (zero pivot at {pivot})")]
    ExactlySingular { pivot: usize },
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("non-finite entry in {0}")]
    NonFinite(&'static str),
}

/// Off-diagonal threshold of the Jacobi sweep, relative to the Frobenius norm.
pub const JACOBI_TOLERANCE: f64 = 1e-12;
pub const JACOBI_MAX_SWEEPS: usize = 100;
/// Condition number above which [`solve`] falls back to a ridge.
pub const SOLVE_CONDITION_LIMIT: f64 = 1e12;
/// Ridge scale used by [`solve`], relative to `trace / n`.
pub const SOLVE_RIDGE_SCALE: f64 = 1e-10;

/// A symmetric matrix. Construction symmetrizes the input as `(A + Aᵀ) / 2`.
#[derive(Debug, Clone, PartialEq)]
pub struct SymMatrix(Array2<f64>);

impl SymMatrix {
    pub fn new(a: Array2<f64>) -> Result<Self, LinalgError> {
        if a.nrows() != a.ncols() {
            return Err(LinalgError::Dimension(format!(
                "symmetric matrix must be square, got {}x{}",
                a.nrows(),
                a.ncols()
            )));
        }
        if a.iter().any(|v| !v.is_finite()) {
            return Err(LinalgError::NonFinite("symmetric matrix"));
        }
        let sym = (&a + &a.t()) * 0.5;
        Ok(Self(sym))
    }

    pub fn identity(n: usize) -> Self {
        Self(Array2::eye(n))
    }

    pub fn order(&self) -> usize {
        self.0.nrows()
    }

    pub fn view(&self) -> ArrayView2<'_, f64> {
        self.0.view()
    }

    pub fn into_inner(self) -> Array2<f64> {
        self.0
    }

    pub fn trace(&self) -> f64 {
        self.0.diag().sum()
    }

    /// Returns `self + shift · I`.
    pub fn shifted(&self, shift: f64) -> Self {
        let mut a = self.0.clone();
        a.diag_mut().mapv_inplace(|d| d + shift);
        Self(a)
    }
}

/// Eigenvalues sorted descending, eigenvector `i` in column `i`.
#[derive(Debug, Clone, PartialEq)]
pub struct EigPair {
    pub eigenvalues: Array1<f64>,
    pub eigenvectors: Array2<f64>,
}

impl EigPair {
    fn sorted(values: Array1<f64>, vectors: Array2<f64>) -> Self {
        let mut order: Vec<usize> = (0..values.len()).collect();
        order.sort_by(|&i, &j| values[j].total_cmp(&values[i]));
        let eigenvalues = order.iter().map(|&i| values[i]).collect();
        let mut eigenvectors = vectors.select(Axis(1), &order);
        for mut col in eigenvectors.axis_iter_mut(Axis(1)) {
            fix_sign(col.view_mut());
        }
        Self {
            eigenvalues,
            eigenvectors,
        }
    }
}

/// Sign convention: the first component of largest magnitude is positive.
fn fix_sign(mut v: ndarray::ArrayViewMut1<'_, f64>) {
    let mut best = 0;
    for i in 1..v.len() {
        if v[i].abs() > v[best].abs() {
            best = i;
        }
    }
    if !v.is_empty() && v[best] < 0.0 {
        v.mapv_inplace(|x| -x);
    }
}

pub fn frobenius_norm(a: ArrayView2<'_, f64>) -> f64 {
    a.iter().map(|v| v * v).sum::<f64>().sqrt()
}

pub fn max_abs(a: ArrayView2<'_, f64>) -> f64 {
    a.iter().fold(0.0, |m, v| m.max(v.abs()))
}

/// Lower-triangular `L` with `L Lᵀ = a`.
pub fn cholesky(a: &SymMatrix) -> Result<Array2<f64>, LinalgError> {
    let n = a.order();
    let a = &a.0;
    let mut l = Array2::<f64>::zeros((n, n));
    for j in 0..n {
        let mut d = a[[j, j]];
        for k in 0..j {
            d -= l[[j, k]] * l[[j, k]];
        }
        if !(d > 0.0) {
            return Err(LinalgError::NotPositiveDefinite { pivot: j, value: d });
        }
        let djj = d.sqrt();
        l[[j, j]] = djj;
        for i in j + 1..n {
            let mut s = a[[i, j]];
            for k in 0..j {
                s -= l[[i, k]] * l[[j, k]];
            }
            l[[i, j]] = s / djj;
        }
    }
    Ok(l)
}

/// Solves `L X = B` for lower-triangular `L`.
pub fn forward_substitute(l: &Array2<f64>, b: &Array2<f64>) -> Array2<f64> {
    let n = l.nrows();
    let mut x = b.clone();
    for col in 0..x.ncols() {
        for i in 0..n {
            let mut s = x[[i, col]];
            for k in 0..i {
                s -= l[[i, k]] * x[[k, col]];
            }
            x[[i, col]] = s / l[[i, i]];
        }
    }
    x
}

/// Solves `Lᵀ X = B` for lower-triangular `L`.
pub fn back_substitute_transposed(l: &Array2<f64>, b: &Array2<f64>) -> Array2<f64> {
    let n = l.nrows();
    let mut x = b.clone();
    for col in 0..x.ncols() {
        for i in (0..n).rev() {
            let mut s = x[[i, col]];
            for k in i + 1..n {
                s -= l[[k, i]] * x[[k, col]];
            }
            x[[i, col]] = s / l[[i, i]];
        }
    }
    x
}

/// Full spectrum of a symmetric matrix by cyclic Jacobi rotations.
pub fn sym_eig(a: &SymMatrix) -> Result<EigPair, LinalgError> {
    let n = a.order();
    let mut m = a.0.clone();
    let mut v = Array2::<f64>::eye(n);
    let norm = frobenius_norm(m.view());
    let tol = JACOBI_TOLERANCE * norm;

    let off_norm = |m: &Array2<f64>| {
        let mut s = 0.0;
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    s += m[[i, j]] * m[[i, j]];
                }
            }
        }
        s.sqrt()
    };

    let mut sweeps = 0;
    loop {
        let off = off_norm(&m);
        if off <= tol || norm == 0.0 {
            break;
        }
        if sweeps == JACOBI_MAX_SWEEPS {
            return Err(LinalgError::NoConvergence { sweeps, off_norm: off });
        }
        sweeps += 1;
        for p in 0..n {
            for q in p + 1..n {
                let apq = m[[p, q]];
                if apq == 0.0 {
                    continue;
                }
                let theta = (m[[q, q]] - m[[p, p]]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                m[[p, p]] -= t * apq;
                m[[q, q]] += t * apq;
                m[[p, q]] = 0.0;
                m[[q, p]] = 0.0;
                for r in 0..n {
                    if r != p && r != q {
                        let arp = m[[r, p]];
                        let arq = m[[r, q]];
                        let np = c * arp - s * arq;
                        let nq = s * arp + c * arq;
                        m[[r, p]] = np;
                        m[[p, r]] = np;
                        m[[r, q]] = nq;
                        m[[q, r]] = nq;
                    }
                }
                for r in 0..n {
                    let vrp = v[[r, p]];
                    let vrq = v[[r, q]];
                    v[[r, p]] = c * vrp - s * vrq;
                    v[[r, q]] = s * vrp + c * vrq;
                }
            }
        }
    }
    Ok(EigPair::sorted(m.diag().to_owned(), v))
}

/// Solves `A u = λ B u` for symmetric `A` and symmetric positive definite `B`
/// by reduction to `L⁻¹ A L⁻ᵀ y = λ y` with `B = L Lᵀ`, `u = L⁻ᵀ y`.
/// Eigenvectors come out B-orthonormal.
pub fn gen_sym_def_eig(a: &SymMatrix, b: &SymMatrix) -> Result<EigPair, LinalgError> {
    if a.order() != b.order() {
        return Err(LinalgError::Dimension(format!(
            "pencil orders differ: {} vs {}",
            a.order(),
            b.order()
        )));
    }
    let l = cholesky(b)?;
    gen_sym_def_eig_with_factor(a, &l)
}

/// Same as [`gen_sym_def_eig`] with a precomputed Cholesky factor of `B`.
pub fn gen_sym_def_eig_with_factor(a: &SymMatrix, l: &Array2<f64>) -> Result<EigPair, LinalgError> {
    let x = forward_substitute(l, &a.0);
    let c = forward_substitute(l, &x.t().to_owned());
    let reduced = sym_eig(&SymMatrix::new(c)?)?;
    let u = back_substitute_transposed(l, &reduced.eigenvectors);
    Ok(EigPair::sorted(reduced.eigenvalues, u))
}

/// Result of [`solve`].
#[derive(Debug, Clone, PartialEq)]
pub struct Solution {
    pub x: Array2<f64>,
    /// Set when the ridge fallback was used.
    pub regularized: bool,
    /// 1-norm condition estimate of the unregularized matrix (infinite when
    /// it is exactly singular).
    pub condition: f64,
}

struct Lu {
    lu: Array2<f64>,
    perm: Vec<usize>,
}

fn lu_factor(a: &Array2<f64>) -> Result<Lu, LinalgError> {
    let n = a.nrows();
    let mut lu = a.clone();
    let mut perm: Vec<usize> = (0..n).collect();
    for k in 0..n {
        let mut p = k;
        for i in k + 1..n {
            if lu[[i, k]].abs() > lu[[p, k]].abs() {
                p = i;
            }
        }
        if lu[[p, k]] == 0.0 {
            return Err(LinalgError::ExactlySingular { pivot: k });
        }
        if p != k {
            for j in 0..n {
                lu.swap([k, j], [p, j]);
            }
            perm.swap(k, p);
        }
        let pivot = lu[[k, k]];
        for i in k + 1..n {
            let f = lu[[i, k]] / pivot;
            lu[[i, k]] = f;
            for j in k + 1..n {
                lu[[i, j]] -= f * lu[[k, j]];
            }
        }
    }
    Ok(Lu { lu, perm })
}

impl Lu {
    fn solve(&self, rhs: &Array2<f64>) -> Array2<f64> {
        let n = self.lu.nrows();
        let mut x = rhs.select(Axis(0), &self.perm);
        for col in 0..x.ncols() {
            for i in 0..n {
                let mut s = x[[i, col]];
                for k in 0..i {
                    s -= self.lu[[i, k]] * x[[k, col]];
                }
                x[[i, col]] = s;
            }
            for i in (0..n).rev() {
                let mut s = x[[i, col]];
                for k in i + 1..n {
                    s -= self.lu[[i, k]] * x[[k, col]];
                }
                x[[i, col]] = s / self.lu[[i, i]];
            }
        }
        x
    }
}

fn norm1(a: &Array2<f64>) -> f64 {
    a.axis_iter(Axis(1))
        .map(|c| c.iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// Partial-pivot LU solve of `a x = rhs`. When the 1-norm condition number
/// exceeds [`SOLVE_CONDITION_LIMIT`] (or a pivot vanishes) the system is
/// re-solved with `a + εI`, `ε = 1e-10 · |trace(a)| / n`, and flagged.
pub fn solve(a: &Array2<f64>, rhs: &Array2<f64>) -> Result<Solution, LinalgError> {
    let n = a.nrows();
    if a.ncols() != n {
        return Err(LinalgError::Dimension(format!(
            "solve needs a square matrix, got {}x{}",
            n,
            a.ncols()
        )));
    }
    if rhs.nrows() != n {
        return Err(LinalgError::Dimension(format!(
            "right-hand side has {} rows, matrix has {}",
            rhs.nrows(),
            n
        )));
    }
    let condition = match lu_factor(a) {
        Ok(lu) => {
            let inv = lu.solve(&Array2::eye(n));
            let cond = norm1(a) * norm1(&inv);
            if cond.is_finite() && cond <= SOLVE_CONDITION_LIMIT {
                return Ok(Solution {
                    x: lu.solve(rhs),
                    regularized: false,
                    condition: cond,
                });
            }
            cond
        }
        Err(_) => f64::INFINITY,
    };
    let scale = a.diag().sum().abs() / n as f64;
    let eps = SOLVE_RIDGE_SCALE * if scale > 0.0 { scale } else { max_abs(a.view()) };
    let mut reg = a.clone();
    reg.diag_mut().mapv_inplace(|d| d + eps);
    let lu = lu_factor(&reg)?;
    Ok(Solution {
        x: lu.solve(rhs),
        regularized: true,
        condition,
    })
}

/// Modified Gram–Schmidt (two passes) over the columns of `cols`. Columns
/// whose residual falls below `rel_tol` times their original norm are
/// dropped; returns the orthonormal columns and the indices that were kept.
pub fn orthonormalize(cols: ArrayView2<'_, f64>, rel_tol: f64) -> (Array2<f64>, Vec<usize>) {
    let n = cols.nrows();
    let mut basis: Vec<Array1<f64>> = Vec::new();
    let mut kept = Vec::new();
    for (j, c) in cols.axis_iter(Axis(1)).enumerate() {
        let original = c.dot(&c).sqrt();
        if original == 0.0 {
            continue;
        }
        let mut v = c.to_owned();
        for _ in 0..2 {
            for q in &basis {
                let proj = q.dot(&v);
                v.scaled_add(-proj, q);
            }
        }
        let norm = v.dot(&v).sqrt();
        if norm > rel_tol * original {
            basis.push(v / norm);
            kept.push(j);
        }
    }
    let mut out = Array2::zeros((n, basis.len()));
    for (j, q) in basis.iter().enumerate() {
        out.column_mut(j).assign(q);
    }
    (out, kept)
}

/// Principal angles (radians, ascending) between the column spaces of `a`
/// and `b`. Computed from sines, which keeps small angles accurate.
pub fn principal_angles(a: ArrayView2<'_, f64>, b: ArrayView2<'_, f64>) -> Result<Vec<f64>, LinalgError> {
    if a.nrows() != b.nrows() {
        return Err(LinalgError::Dimension(format!(
            "subspaces live in different spaces: {} vs {} rows",
            a.nrows(),
            b.nrows()
        )));
    }
    let (qa, _) = orthonormalize(a, 1e-12);
    let (qb, _) = orthonormalize(b, 1e-12);
    let (qa, qb) = if qb.ncols() > qa.ncols() { (qb, qa) } else { (qa, qb) };
    if qb.ncols() == 0 {
        return Ok(Vec::new());
    }
    let residual = &qb - &qa.dot(&qa.t().dot(&qb));
    let gram = SymMatrix::new(residual.t().dot(&residual))?;
    let eig = sym_eig(&gram)?;
    let mut angles: Vec<f64> = eig
        .eigenvalues
        .iter()
        .map(|&s2| s2.max(0.0).sqrt().min(1.0).asin())
        .collect();
    angles.sort_by(|x, y| x.total_cmp(y));
    Ok(angles)
}

/// Largest principal angle in degrees.
pub fn max_principal_angle_degrees(a: ArrayView2<'_, f64>, b: ArrayView2<'_, f64>) -> Result<f64, LinalgError> {
    Ok(principal_angles(a, b)?.last().copied().unwrap_or(0.0).to_degrees())
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_matrix(rng: &mut ChaCha8Rng, r: usize, c: usize) -> Array2<f64> {
        Array2::from_shape_fn((r, c), |_| rng.random_range(-1.0..1.0))
    }

    fn random_spd(rng: &mut ChaCha8Rng, n: usize) -> SymMatrix {
        let m = random_matrix(rng, n, n);
        SymMatrix::new(m.t().dot(&m) + Array2::<f64>::eye(n)).unwrap()
    }

    /// Determinant by Gaussian elimination, independent of the LU code above.
    fn det(mut a: Array2<f64>) -> f64 {
        let n = a.nrows();
        let mut d = 1.0;
        for k in 0..n {
            let p = (k..n)
                .max_by(|&i, &j| a[[i, k]].abs().total_cmp(&a[[j, k]].abs()))
                .unwrap();
            if a[[p, k]] == 0.0 {
                return 0.0;
            }
            if p != k {
                for j in 0..n {
                    a.swap([k, j], [p, j]);
                }
                d = -d;
            }
            d *= a[[k, k]];
            for i in k + 1..n {
                let f = a[[i, k]] / a[[k, k]];
                for j in k..n {
                    a[[i, j]] -= f * a[[k, j]];
                }
            }
        }
        d
    }

    #[test]
    fn cholesky_examples() {
        assert_eq!(cholesky(&SymMatrix::identity(3)).unwrap(), Array2::<f64>::eye(3));
        let l = cholesky(&SymMatrix::new(array![[4.0, 2.0], [2.0, 3.0]]).unwrap()).unwrap();
        let expected = array![[2.0, 0.0], [1.0, 2f64.sqrt()]];
        assert!(max_abs((&l - &expected).view()) < 1e-15);
    }

    #[test]
    fn cholesky_reconstructs_random_spd() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for n in 1..9 {
            let a = random_spd(&mut rng, n);
            let l = cholesky(&a).unwrap();
            let err = max_abs((&l.dot(&l.t()) - &a.view()).view()) / max_abs(a.view());
            assert!(err < 1e-10, "n={n} err={err}");
        }
    }

    #[test]
    fn cholesky_reports_failing_pivot() {
        let a = SymMatrix::new(array![[1.0, 2.0], [2.0, 1.0]]).unwrap();
        assert!(matches!(
            cholesky(&a),
            Err(LinalgError::NotPositiveDefinite { pivot: 1, .. })
        ));
    }

    #[test]
    fn sym_eig_diagonal_and_swap() {
        let e = sym_eig(&SymMatrix::new(Array2::from_diag(&array![3.0, 1.0, 2.0])).unwrap()).unwrap();
        assert_eq!(e.eigenvalues.to_vec(), vec![3.0, 2.0, 1.0]);
        assert_eq!(e.eigenvectors.column(0).to_vec(), vec![1.0, 0.0, 0.0]);
        assert_eq!(e.eigenvectors.column(1).to_vec(), vec![0.0, 0.0, 1.0]);

        let e = sym_eig(&SymMatrix::new(array![[0.0, 1.0], [1.0, 0.0]]).unwrap()).unwrap();
        let h = 0.5f64.sqrt();
        assert!((e.eigenvalues[0] - 1.0).abs() < 1e-14 && (e.eigenvalues[1] + 1.0).abs() < 1e-14);
        assert!((e.eigenvectors[[0, 0]] - h).abs() < 1e-14 && (e.eigenvectors[[1, 0]] - h).abs() < 1e-14);
        assert!((e.eigenvectors[[0, 1]].abs() - h).abs() < 1e-14);
        assert!((e.eigenvectors[[0, 1]] + e.eigenvectors[[1, 1]]).abs() < 1e-14);
    }

    #[test]
    fn sym_eig_trace_determinant_residual_orthonormality() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for n in 2..10 {
            let m = random_matrix(&mut rng, n, n);
            let a = SymMatrix::new(&m + &m.t()).unwrap();
            let e = sym_eig(&a).unwrap();
            let sum: f64 = e.eigenvalues.sum();
            assert!((sum - a.trace()).abs() < 1e-8);
            let prod: f64 = e.eigenvalues.product();
            let d = det(a.view().to_owned());
            assert!((prod - d).abs() <= 1e-6 * d.abs().max(1e-12), "{prod} vs {d}");
            let v = &e.eigenvectors;
            assert!(max_abs((&v.t().dot(v) - &Array2::<f64>::eye(n)).view()) < 1e-8);
            let fro = frobenius_norm(a.view());
            for i in 0..n {
                let r = a.view().dot(&v.column(i)) - &v.column(i) * e.eigenvalues[i];
                assert!(r.dot(&r).sqrt() <= 1e-8 * fro);
            }
            for w in e.eigenvalues.windows(2) {
                assert!(w[0] >= w[1]);
            }
        }
    }

    #[test]
    fn sign_convention_is_deterministic() {
        let a = SymMatrix::new(array![[2.0, -1.0, 0.0], [-1.0, 2.0, -1.0], [0.0, -1.0, 2.0]]).unwrap();
        let e = sym_eig(&a).unwrap();
        for col in e.eigenvectors.axis_iter(Axis(1)) {
            let big = col.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            let first = col.iter().find(|v| (v.abs() - big).abs() < 1e-12).unwrap();
            assert!(*first > 0.0);
        }
    }

    #[test]
    fn generalized_trivial_cases() {
        let a = SymMatrix::new(Array2::from_diag(&array![2.0, 1.0])).unwrap();
        let e = gen_sym_def_eig(&a, &SymMatrix::identity(2)).unwrap();
        assert!((e.eigenvalues[0] - 2.0).abs() < 1e-14 && (e.eigenvalues[1] - 1.0).abs() < 1e-14);

        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let b = random_spd(&mut rng, 5);
        let e = gen_sym_def_eig(&b, &b).unwrap();
        assert!(e.eigenvalues.iter().all(|l| (l - 1.0).abs() < 1e-10));
    }

    #[test]
    fn generalized_residual_and_b_orthonormality() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for n in 2..8 {
            let m = random_matrix(&mut rng, n, n - 1);
            let a = SymMatrix::new(m.dot(&m.t())).unwrap(); // singular PSD
            let b = random_spd(&mut rng, n);
            let e = gen_sym_def_eig(&a, &b).unwrap();
            let scale = frobenius_norm(a.view()) + frobenius_norm(b.view());
            for i in 0..n {
                let u = e.eigenvectors.column(i);
                let r = a.view().dot(&u) - b.view().dot(&u) * e.eigenvalues[i];
                assert!(r.dot(&r).sqrt() <= 1e-7 * scale);
            }
            let g = e.eigenvectors.t().dot(&b.view()).dot(&e.eigenvectors);
            assert!(max_abs((&g - &Array2::<f64>::eye(n)).view()) < 1e-8);
        }
    }

    #[test]
    fn generalized_with_identity_matches_standard() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let m = random_matrix(&mut rng, 6, 6);
        let a = SymMatrix::new(&m + &m.t()).unwrap();
        let g = gen_sym_def_eig(&a, &SymMatrix::identity(6)).unwrap();
        let s = sym_eig(&a).unwrap();
        for i in 0..6 {
            assert!((g.eigenvalues[i] - s.eigenvalues[i]).abs() < 1e-8);
            let dot = g.eigenvectors.column(i).dot(&s.eigenvectors.column(i));
            assert!((dot.abs() - 1.0).abs() < 1e-8);
        }
    }

    #[test]
    fn solve_examples() {
        let rhs = array![[1.0, -2.0], [3.0, 0.5]];
        let s = solve(&Array2::eye(2), &rhs).unwrap();
        assert_eq!(s.x, rhs);
        assert!(!s.regularized);
        let s = solve(&array![[2.0, 0.0], [0.0, 4.0]], &array![[2.0], [4.0]]).unwrap();
        assert!(max_abs((&s.x - &array![[1.0], [1.0]]).view()) < 1e-15);
    }

    #[test]
    fn solve_residual_on_random_systems() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        for n in 1..12 {
            let a = random_matrix(&mut rng, n, n) + Array2::<f64>::eye(n) * 3.0;
            let r = random_matrix(&mut rng, n, 3);
            let s = solve(&a, &r).unwrap();
            let res = max_abs((&a.dot(&s.x) - &r).view());
            assert!(res <= 1e-9 * max_abs(r.view()));
        }
    }

    #[test]
    fn solve_regularizes_near_singular_and_rejects_zero() {
        let a = array![[1.0, 1.0], [1.0, 1.0 + 1e-15]];
        let s = solve(&a, &array![[1.0], [1.0]]).unwrap();
        assert!(s.regularized);
        assert!(s.condition > SOLVE_CONDITION_LIMIT);
        assert!(matches!(
            solve(&Array2::zeros((2, 2)), &array![[1.0], [1.0]]),
            Err(LinalgError::ExactlySingular { .. })
        ));
    }

    #[test]
    fn orthonormalize_drops_dependent_columns() {
        let cols = array![[1.0, 2.0, 0.0], [0.0, 0.0, 1.0], [0.0, 0.0, 0.0]];
        let (q, kept) = orthonormalize(cols.view(), 1e-10);
        assert_eq!(kept, vec![0, 2]);
        assert!(max_abs((&q.t().dot(&q) - &Array2::<f64>::eye(2)).view()) < 1e-15);
    }

    #[test]
    fn principal_angles_of_planes() {
        let a = array![[1.0, 0.0], [0.0, 1.0], [0.0, 0.0]];
        let t = 0.3f64;
        let b = array![[1.0, 0.0], [0.0, t.cos()], [0.0, t.sin()]];
        let ang = principal_angles(a.view(), b.view()).unwrap();
        assert!(ang[0].abs() < 1e-12);
        assert!((ang[1] - t).abs() < 1e-12);
    }
}
