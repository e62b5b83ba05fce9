//! Dense matrix kernel: SVD, operator norms, condition numbers and the
//! analytic bounds used by the condition-number and loss-threshold studies.
//!
//! Matrices are `nalgebra` dense matrices. The condition number is computed
//! from an LU factorization that skips structural zeros plus two Lanczos
//! runs (on `AᵀA` and on `A⁻¹A⁻ᵀ`), which keeps the sparse Bellman matrices
//! of the appendix studies cheap at `N = 2¹⁰` while remaining exact for
//! general dense input.

use nalgebra::{ComplexField, DMatrix};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

pub type RealMatrix = DMatrix<f64>;
pub type ComplexMatrix = DMatrix<Complex64>;

/// Default magnitude below which an entry counts as a structural zero.
pub const ZERO_TOL: f64 = 1e-12;

/// Singular values (descending) with left/right singular vectors, `A = U Σ Vᵀ`.
#[derive(Debug, Clone)]
pub struct SvdResult<T: ComplexField<RealField = f64>> {
    pub singular_values: Vec<f64>,
    pub u: DMatrix<T>,
    pub v_t: DMatrix<T>,
}

impl<T: ComplexField<RealField = f64>> SvdResult<T> {
    pub fn reconstruct(&self) -> DMatrix<T> {
        let k = self.singular_values.len();
        let mut us = self.u.clone();
        for (j, &s) in self.singular_values.iter().enumerate().take(k) {
            us.column_mut(j).scale_mut(s);
        }
        us * &self.v_t
    }
}

pub fn svd<T: ComplexField<RealField = f64>>(a: &DMatrix<T>) -> Result<SvdResult<T>> {
    if a.iter().any(|x| !x.clone().modulus().is_finite()) {
        return Err(Error::InvalidConfig("matrix has non-finite entries".into()));
    }
    if a.is_empty() {
        return Ok(SvdResult {
            singular_values: Vec::new(),
            u: DMatrix::zeros(a.nrows(), 0),
            v_t: DMatrix::zeros(0, a.ncols()),
        });
    }
    let dec = nalgebra::SVD::try_new(a.clone(), true, true, f64::EPSILON, 100_000)
        .ok_or(Error::SvdNoConvergence)?;
    let u = dec.u.ok_or(Error::SvdNoConvergence)?;
    let v_t = dec.v_t.ok_or(Error::SvdNoConvergence)?;
    Ok(SvdResult {
        singular_values: dec.singular_values.iter().copied().collect(),
        u,
        v_t,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NormKind {
    /// Maximum absolute row sum.
    Inf,
    /// Maximum absolute column sum.
    One,
    /// Largest singular value.
    Spectral,
}

pub fn norm<T: ComplexField<RealField = f64>>(a: &DMatrix<T>, which: NormKind) -> f64 {
    match which {
        NormKind::Inf => (0..a.nrows())
            .map(|i| a.row(i).iter().map(|x| x.clone().modulus()).sum::<f64>())
            .fold(0.0, f64::max),
        NormKind::One => (0..a.ncols())
            .map(|j| a.column(j).iter().map(|x| x.clone().modulus()).sum::<f64>())
            .fold(0.0, f64::max),
        NormKind::Spectral => {
            if a.is_empty() {
                return 0.0;
            }
            a.clone().singular_values().max()
        }
    }
}

/// Upper bound on `‖A⁻¹‖` from diagonal dominance.
///
/// `Inf` uses row dominance `1 / minᵢ(|Aᵢᵢ| − Σ_{j≠i}|Aᵢⱼ|)`, `One` the same
/// with column off-diagonals, and `Spectral` the Hölder combination
/// `√(b_inf · b_one)`. Returns `None` when a dominance margin is not positive.
pub fn inverse_norm_bound<T: ComplexField<RealField = f64>>(
    a: &DMatrix<T>,
    which: NormKind,
) -> Option<f64> {
    let n = a.nrows();
    if n == 0 || a.ncols() != n {
        return None;
    }
    let margin = |by_rows: bool| -> f64 {
        (0..n)
            .map(|i| {
                let diag = a[(i, i)].clone().modulus();
                let off: f64 = (0..n)
                    .filter(|&j| j != i)
                    .map(|j| {
                        let x = if by_rows { &a[(i, j)] } else { &a[(j, i)] };
                        x.clone().modulus()
                    })
                    .sum();
                diag - off
            })
            .fold(f64::INFINITY, f64::min)
    };
    let bound = |by_rows: bool| {
        let m = margin(by_rows);
        (m > 0.0).then(|| 1.0 / m)
    };
    match which {
        NormKind::Inf => bound(true),
        NormKind::One => bound(false),
        NormKind::Spectral => Some((bound(true)? * bound(false)?).sqrt()),
    }
}

/// `κ ≤ √(N + γ N log₂N) · √(1+γ)/(1−γ)` for general local dynamics.
pub fn bound_general_local(n: usize, gamma: f64) -> f64 {
    let nf = n as f64;
    (nf + gamma * nf * nf.log2()).sqrt() * (1.0 + gamma).sqrt() / (1.0 - gamma)
}

/// `κ ≤ (1+γ)/(1−γ)` for uniform local dynamics.
pub fn bound_uniform_local(gamma: f64) -> f64 {
    (1.0 + gamma) / (1.0 - gamma)
}

/// Empirical `√(log₂N + γ log₂²N) · √(1+γ)/(1−γ)` curve.
pub fn bound_empirical(n: usize, gamma: f64) -> f64 {
    let l = (n as f64).log2();
    (l + gamma * l * l).sqrt() * (1.0 + gamma).sqrt() / (1.0 - gamma)
}

/// Global-cost level `ε²/κ²` that guarantees trace distance `ε`.
pub fn loss_threshold_bound(epsilon: f64, kappa: f64) -> f64 {
    epsilon * epsilon / (kappa * kappa)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SparsityStats {
    pub max_row_nnz: usize,
    pub max_col_nnz: usize,
    pub total_nnz: usize,
}

pub fn sparsity_stats<T: ComplexField<RealField = f64>>(
    a: &DMatrix<T>,
    zero_tol: f64,
) -> SparsityStats {
    let mut rows = vec![0usize; a.nrows()];
    let mut cols = vec![0usize; a.ncols()];
    for j in 0..a.ncols() {
        for i in 0..a.nrows() {
            if a[(i, j)].clone().modulus() > zero_tol {
                rows[i] += 1;
                cols[j] += 1;
            }
        }
    }
    SparsityStats {
        max_row_nnz: rows.iter().copied().max().unwrap_or(0),
        max_col_nnz: cols.iter().copied().max().unwrap_or(0),
        total_nnz: rows.iter().sum(),
    }
}

/// `κ = σ_max / σ_min` of a real square matrix.
pub fn condition_number(a: &RealMatrix) -> Result<f64> {
    let (smax, smin) = extreme_singular_values(a)?;
    Ok(smax / smin)
}

/// `(σ_max, σ_min)` of a real square matrix, without a full SVD.
pub fn extreme_singular_values(a: &RealMatrix) -> Result<(f64, f64)> {
    let n = a.nrows();
    if a.ncols() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: a.ncols(),
        });
    }
    if n == 0 {
        return Err(Error::Singular);
    }
    if a.iter().any(|x| !x.is_finite()) {
        return Err(Error::InvalidConfig("matrix has non-finite entries".into()));
    }
    let sparse = RowLists::from_dense(a);
    let (mut lam_max, converged) = lanczos_largest(n, PLAIN_LANCZOS_STEPS, |x, y| {
        sparse.gram_apply(x, y)
    });
    if !converged {
        lam_max = refine_top_of_gram(a, &sparse)?.max(lam_max);
    }
    let smax = lam_max.sqrt();
    if smax == 0.0 {
        return Err(Error::Singular);
    }
    let lu = SparseLu::factor(a)?;
    let mut tmp = vec![0.0; n];
    let (mu_max, _) = lanczos_largest(n, n, |x, y| {
        lu.solve_transpose(x, &mut tmp);
        lu.solve(&tmp, y);
    });
    let smin = 1.0 / mu_max.sqrt();
    if !smin.is_finite() || smin <= 1e-14 * smax {
        return Err(Error::Singular);
    }
    Ok((smax, smin))
}

/// Krylov steps on `AᵀA` before switching to shift-invert.
const PLAIN_LANCZOS_STEPS: usize = 60;

/// Largest eigenvalue of `AᵀA` by Lanczos on `(sI − AᵀA)⁻¹` with the shift
/// `s` just above the Hölder bound `‖A‖₁‖A‖_∞ ≥ σ_max²`. Used when the top of
/// the spectrum is too clustered for plain Lanczos.
fn refine_top_of_gram(a: &RealMatrix, sparse: &RowLists) -> Result<f64> {
    let n = a.nrows();
    let holder = norm(a, NormKind::One) * norm(a, NormKind::Inf);
    let shift = holder * (1.0 + 1e-12) + f64::MIN_POSITIVE;
    let lu = SparseLu::factor(&sparse.shifted_gram(shift))?;
    let (mu, _) = lanczos_largest(n, n, |x, y| lu.solve(x, y));
    Ok(shift - 1.0 / mu)
}

/// Nonzero entries of each row, used for matrix-vector products.
struct RowLists {
    rows: Vec<Vec<(usize, f64)>>,
    ncols: usize,
}

impl RowLists {
    fn from_dense(a: &RealMatrix) -> Self {
        let rows = (0..a.nrows())
            .map(|i| {
                (0..a.ncols())
                    .filter_map(|j| {
                        let v = a[(i, j)];
                        (v != 0.0).then_some((j, v))
                    })
                    .collect()
            })
            .collect();
        Self {
            rows,
            ncols: a.ncols(),
        }
    }

    /// Dense `shift·I − AᵀA`.
    fn shifted_gram(&self, shift: f64) -> RealMatrix {
        let n = self.ncols;
        let mut m = RealMatrix::from_diagonal_element(n, n, shift);
        for row in &self.rows {
            for &(j, vj) in row {
                for &(k, vk) in row {
                    m[(j, k)] -= vj * vk;
                }
            }
        }
        m
    }

    /// `y = Aᵀ A x`.
    fn gram_apply(&self, x: &[f64], y: &mut [f64]) {
        y[..self.ncols].fill(0.0);
        for row in &self.rows {
            let ax: f64 = row.iter().map(|&(j, v)| v * x[j]).sum();
            for &(j, v) in row {
                y[j] += v * ax;
            }
        }
    }
}

/// LU factorization `PA = LU` with threshold partial pivoting.
///
/// Elimination skips zero multipliers and zero pivot-row entries, so banded
/// and ring-structured matrices factor in near-linear time.
struct SparseLu {
    n: usize,
    /// Logical row `k` of `PA` is physical row `order[k]` of `A`.
    order: Vec<usize>,
    lower: Vec<Vec<(usize, f64)>>,
    upper: Vec<Vec<(usize, f64)>>,
    diag: Vec<f64>,
}

impl SparseLu {
    const PIVOT_THRESHOLD: f64 = 0.1;

    fn factor(a: &RealMatrix) -> Result<Self> {
        let n = a.nrows();
        let mut w = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                w[i * n + j] = a[(i, j)];
            }
        }
        let scale = a.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        let mut order: Vec<usize> = (0..n).collect();
        let mut cols = Vec::with_capacity(n);
        for k in 0..n {
            let mut best = k;
            let mut best_abs = 0.0;
            for (r, &phys) in order.iter().enumerate().skip(k) {
                let v = w[phys * n + k].abs();
                if v > best_abs {
                    best_abs = v;
                    best = r;
                }
            }
            if best_abs <= f64::EPSILON * scale * 1e-4 || best_abs == 0.0 {
                return Err(Error::Singular);
            }
            if w[order[k] * n + k].abs() < Self::PIVOT_THRESHOLD * best_abs {
                order.swap(k, best);
            }
            let pk = order[k];
            let pivot = w[pk * n + k];
            cols.clear();
            cols.extend((k + 1..n).filter(|&j| w[pk * n + j] != 0.0));
            for &pi in &order[k + 1..] {
                let v = w[pi * n + k];
                if v == 0.0 {
                    continue;
                }
                let m = v / pivot;
                w[pi * n + k] = m;
                for &j in &cols {
                    w[pi * n + j] -= m * w[pk * n + j];
                }
            }
        }
        let mut lower = Vec::with_capacity(n);
        let mut upper = Vec::with_capacity(n);
        let mut diag = Vec::with_capacity(n);
        for (k, &phys) in order.iter().enumerate() {
            let row = &w[phys * n..(phys + 1) * n];
            lower.push(
                (0..k)
                    .filter_map(|j| (row[j] != 0.0).then_some((j, row[j])))
                    .collect(),
            );
            upper.push(
                (k + 1..n)
                    .filter_map(|j| (row[j] != 0.0).then_some((j, row[j])))
                    .collect(),
            );
            diag.push(row[k]);
        }
        Ok(Self {
            n,
            order,
            lower,
            upper,
            diag,
        })
    }

    /// `A x = b`.
    fn solve(&self, b: &[f64], x: &mut [f64]) {
        let n = self.n;
        let mut y: Vec<f64> = self.order.iter().map(|&p| b[p]).collect();
        for k in 0..n {
            let s: f64 = self.lower[k].iter().map(|&(j, l)| l * y[j]).sum();
            y[k] -= s;
        }
        for k in (0..n).rev() {
            let s: f64 = self.upper[k].iter().map(|&(j, u)| u * y[j]).sum();
            y[k] = (y[k] - s) / self.diag[k];
        }
        x[..n].copy_from_slice(&y);
    }

    /// `Aᵀ x = b`, using `Aᵀ = Uᵀ Lᵀ P`.
    fn solve_transpose(&self, b: &[f64], x: &mut [f64]) {
        let n = self.n;
        let mut z = b[..n].to_vec();
        for k in 0..n {
            z[k] /= self.diag[k];
            let zk = z[k];
            for &(j, u) in &self.upper[k] {
                z[j] -= u * zk;
            }
        }
        for k in (0..n).rev() {
            let zk = z[k];
            for &(j, l) in &self.lower[k] {
                z[j] -= l * zk;
            }
        }
        for (k, &p) in self.order.iter().enumerate() {
            x[p] = z[k];
        }
    }
}

/// Largest eigenvalue of a symmetric positive semi-definite operator by
/// Lanczos with full reorthogonalization.
///
/// Stops once the Ritz residual `β_k |s_k|` drops below `1e-11 θ`, which
/// bounds the eigenvalue error by the same amount.
/// Largest eigenvalue of a symmetric positive semidefinite operator and
/// whether the residual test passed within `max_steps`.
fn lanczos_largest(
    n: usize,
    max_steps: usize,
    mut apply: impl FnMut(&[f64], &mut [f64]),
) -> (f64, bool) {
    const TOL: f64 = 1e-9;
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_1a2c_2052_0001);
    let mut q: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
    let qn = dot(&q, &q).sqrt();
    q.iter_mut().for_each(|v| *v /= qn);

    let mut basis: Vec<Vec<f64>> = vec![q];
    let mut alpha: Vec<f64> = Vec::new();
    let mut beta: Vec<f64> = Vec::new();
    let mut w = vec![0.0; n];
    let mut theta = 0.0;
    let steps = max_steps.min(n);
    for k in 0..steps {
        apply(&basis[k], &mut w);
        let a = dot(&w, &basis[k]);
        alpha.push(a);
        for _ in 0..2 {
            for qj in &basis {
                let c = dot(&w, qj);
                axpy(-c, qj, &mut w);
            }
        }
        let b = dot(&w, &w).sqrt();
        let last_step = k + 1 == steps;
        if k < 24 || k % 4 == 3 || last_step || b == 0.0 {
            let (t, last) = tridiagonal_top(&alpha, &beta);
            theta = t;
            // an exhausted Krylov space is an invariant subspace
            if b * last.abs() <= TOL * theta.abs() || b <= f64::EPSILON * theta.abs() || k + 1 == n
            {
                return (theta, true);
            }
        }
        if last_step {
            break;
        }
        beta.push(b);
        basis.push(w.iter().map(|v| v / b).collect());
    }
    (theta, false)
}

/// Largest eigenvalue of the symmetric tridiagonal matrix and the last
/// component of its eigenvector.
fn tridiagonal_top(alpha: &[f64], beta: &[f64]) -> (f64, f64) {
    let k = alpha.len();
    let t = DMatrix::from_fn(k, k, |i, j| {
        if i == j {
            alpha[i]
        } else if i + 1 == j {
            beta[i]
        } else if j + 1 == i {
            beta[j]
        } else {
            0.0
        }
    });
    let eig = t.symmetric_eigen();
    let (idx, &val) = eig
        .eigenvalues
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1))
        .expect("non-empty tridiagonal");
    (val, eig.eigenvectors[(k - 1, idx)])
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    y.iter_mut().zip(x).for_each(|(yi, xi)| *yi += alpha * xi);
}
