//! Dense row-major design matrix and the shared linear-algebra kernels:
//! residuals, full gradients and restricted least squares.
//!
//! Rows are stored contiguously because every budgeted selector streams whole
//! rows (`grad += r_i * x_i`); keeping a row in one cache run is what makes
//! partial accumulation cheap.  Row l2 and l-inf norms are precomputed once
//! at construction since the sampling distributions and the error-bound
//! stopping rule read them on every call.

use crate::error::{Error, Result};
use crate::work::WorkCounter;

/// Dense `n x d` matrix with contiguous rows and cached row norms.
#[derive(Debug, Clone, PartialEq)]
pub struct DesignMatrix {
    n: usize,
    d: usize,
    entries: Vec<f64>,
    row_l2: Vec<f64>,
    row_linf: Vec<f64>,
}

impl DesignMatrix {
    /// Builds a matrix from row-major `entries` (`entries[i * d + j]`).
    ///
    /// Rejects empty shapes, length mismatches and non-finite values.
    pub fn from_rows(n: usize, d: usize, entries: Vec<f64>) -> Result<Self> {
        if n == 0 || d == 0 {
            return Err(Error::InvalidArgument(format!(
                "matrix shape must be positive, got {n} x {d}"
            )));
        }
        if entries.len() != n * d {
            return Err(Error::DimensionMismatch(format!(
                "expected {} entries for a {n} x {d} matrix, got {}",
                n * d,
                entries.len()
            )));
        }
        if let Some(bad) = entries.iter().find(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "matrix entries must be finite, found {bad}"
            )));
        }
        let mut row_l2 = Vec::with_capacity(n);
        let mut row_linf = Vec::with_capacity(n);
        for i in 0..n {
            let row = &entries[i * d..(i + 1) * d];
            let sq: f64 = row.iter().map(|v| v * v).sum();
            row_l2.push(sq.sqrt());
            row_linf.push(row.iter().fold(0.0f64, |m, v| m.max(v.abs())));
        }
        Ok(Self { n, d, entries, row_l2, row_linf })
    }

    pub fn n_rows(&self) -> usize {
        self.n
    }

    pub fn n_cols(&self) -> usize {
        self.d
    }

    /// Row `i` as a contiguous slice.
    pub fn row(&self, i: usize) -> &[f64] {
        &self.entries[i * self.d..(i + 1) * self.d]
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries[i * self.d + j]
    }

    /// Cached `||x_i||_2` per row.
    pub fn row_l2_norms(&self) -> &[f64] {
        &self.row_l2
    }

    /// Cached `||x_i||_inf` per row.
    pub fn row_linf_norms(&self) -> &[f64] {
        &self.row_linf
    }

    /// Copies column `j` into `out` (length `n`). Strided access; used only
    /// by the Frank-Wolfe update, which touches one column per iteration.
    pub fn copy_column(&self, j: usize, out: &mut Vec<f64>) {
        out.clear();
        out.extend((0..self.n).map(|i| self.entries[i * self.d + j]));
    }

    /// Gathers `support` columns into a column-major `n x s` workspace
    /// (column `c` occupies `out[c * n..(c + 1) * n]`).
    fn gather_columns(&self, support: &[usize], out: &mut Vec<f64>) {
        out.clear();
        out.reserve(support.len() * self.n);
        for &j in support {
            for i in 0..self.n {
                out.push(self.entries[i * self.d + j]);
            }
        }
    }
}

/// Residual `r = Xw - y`, kept so that `X^T r` is exactly the gradient of
/// `0.5 * ||Xw - y||^2`.
#[derive(Debug, Clone, PartialEq)]
pub struct ResidualVector {
    values: Vec<f64>,
}

impl ResidualVector {
    /// Wraps raw residual values, rejecting non-finite entries.
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if let Some(bad) = values.iter().find(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "residual entries must be finite, found {bad}"
            )));
        }
        Ok(Self { values })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// True when every entry is exactly zero, i.e. the gradient is zero and
    /// selectors have nothing to find.
    pub fn is_zero(&self) -> bool {
        self.values.iter().all(|&v| v == 0.0)
    }

    pub fn norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }
}

/// Sparse coefficient vector over a strictly increasing support.
///
/// Explicit zeros are pruned at construction, so `nnz()` always equals the
/// number of stored coefficients.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseIterate {
    d: usize,
    support: Vec<usize>,
    coefficients: Vec<f64>,
}

impl SparseIterate {
    /// The zero vector in dimension `d`.
    pub fn zero(d: usize) -> Self {
        Self { d, support: Vec::new(), coefficients: Vec::new() }
    }

    /// Builds an iterate from parallel `support` / `coefficients` lists.
    ///
    /// The support must be strictly increasing and in range; zero
    /// coefficients are dropped.
    pub fn new(d: usize, support: Vec<usize>, coefficients: Vec<f64>) -> Result<Self> {
        if support.len() != coefficients.len() {
            return Err(Error::DimensionMismatch(format!(
                "support has {} indices but {} coefficients",
                support.len(),
                coefficients.len()
            )));
        }
        let mut kept_support = Vec::with_capacity(support.len());
        let mut kept_coeffs = Vec::with_capacity(coefficients.len());
        let mut last: Option<usize> = None;
        for (&j, &c) in support.iter().zip(&coefficients) {
            if j >= d {
                return Err(Error::InvalidArgument(format!(
                    "support index {j} out of range for dimension {d}"
                )));
            }
            if let Some(prev) = last {
                if j <= prev {
                    return Err(Error::InvalidArgument(format!(
                        "support must be strictly increasing, saw {prev} then {j}"
                    )));
                }
            }
            last = Some(j);
            if !c.is_finite() {
                return Err(Error::InvalidArgument(format!(
                    "coefficient at index {j} is not finite: {c}"
                )));
            }
            if c != 0.0 {
                kept_support.push(j);
                kept_coeffs.push(c);
            }
        }
        Ok(Self { d, support: kept_support, coefficients: kept_coeffs })
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn support(&self) -> &[usize] {
        &self.support
    }

    pub fn coefficients(&self) -> &[f64] {
        &self.coefficients
    }

    pub fn nnz(&self) -> usize {
        self.support.len()
    }

    pub fn get(&self, j: usize) -> f64 {
        match self.support.binary_search(&j) {
            Ok(pos) => self.coefficients[pos],
            Err(_) => 0.0,
        }
    }

    pub fn to_dense(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.d];
        for (&j, &c) in self.support.iter().zip(&self.coefficients) {
            out[j] = c;
        }
        out
    }

    pub fn l1_norm(&self) -> f64 {
        self.coefficients.iter().map(|c| c.abs()).sum()
    }
}

/// Computes `r = Xw - y` touching only the `|support|` active columns.
///
/// Charges `n * |support|` MACs.  An empty support costs nothing and returns
/// `-y`.
pub fn compute_residual(
    x: &DesignMatrix,
    y: &[f64],
    w: &SparseIterate,
    counter: &mut WorkCounter,
) -> Result<ResidualVector> {
    if y.len() != x.n_rows() {
        return Err(Error::DimensionMismatch(format!(
            "y has length {} but the matrix has {} rows",
            y.len(),
            x.n_rows()
        )));
    }
    if w.dim() != x.n_cols() {
        return Err(Error::DimensionMismatch(format!(
            "iterate dimension {} does not match {} columns",
            w.dim(),
            x.n_cols()
        )));
    }
    let n = x.n_rows();
    let mut values = Vec::with_capacity(n);
    for i in 0..n {
        let row = x.row(i);
        let mut acc = -y[i];
        for (&j, &c) in w.support().iter().zip(w.coefficients()) {
            acc += row[j] * c;
        }
        values.push(acc);
    }
    counter.charge((n * w.nnz()) as u64);
    ResidualVector::new(values)
}

/// Full gradient `X^T r` computed as the row accumulation `sum_i r_i x_i`.
///
/// Charges `n * d` MACs.
pub fn full_gradient(x: &DesignMatrix, r: &ResidualVector, counter: &mut WorkCounter) -> Result<Vec<f64>> {
    if r.len() != x.n_rows() {
        return Err(Error::DimensionMismatch(format!(
            "residual has length {} but the matrix has {} rows",
            r.len(),
            x.n_rows()
        )));
    }
    let d = x.n_cols();
    let mut grad = vec![0.0; d];
    for (i, &ri) in r.values().iter().enumerate() {
        let row = x.row(i);
        for j in 0..d {
            grad[j] += ri * row[j];
        }
    }
    counter.charge((x.n_rows() * d) as u64);
    Ok(grad)
}

/// Result of a restricted least-squares solve.
#[derive(Debug, Clone, PartialEq)]
pub struct RestrictedSolve {
    pub iterate: SparseIterate,
    /// Ridge value added to the normal equations when the plain factorization
    /// failed; `None` for a clean solve.
    pub ridge: Option<f64>,
}

/// Solves `min_w ||X_S w - y||_2` over the columns in `support` and returns
/// the solution embedded as a `SparseIterate`.
///
/// Uses the normal equations with a Cholesky factorization.  When the Gram
/// matrix is not numerically positive definite (rank-deficient support or
/// `|support| > n`) an additive ridge of `1e-10 * trace / s` is applied and
/// escalated by 100x until the factorization succeeds; the ridge used is
/// reported in the result.
///
/// Charges `n*s^2 + n*s + s^3` MACs for gathering the Gram system and
/// solving it (`s = |support|`).
pub fn restricted_least_squares(
    x: &DesignMatrix,
    y: &[f64],
    support: &[usize],
    counter: &mut WorkCounter,
) -> Result<RestrictedSolve> {
    if support.is_empty() {
        return Err(Error::InvalidArgument("restricted solve needs a nonempty support".into()));
    }
    if y.len() != x.n_rows() {
        return Err(Error::DimensionMismatch(format!(
            "y has length {} but the matrix has {} rows",
            y.len(),
            x.n_rows()
        )));
    }
    let mut sorted: Vec<usize> = support.to_vec();
    sorted.sort_unstable();
    for pair in sorted.windows(2) {
        if pair[0] == pair[1] {
            return Err(Error::InvalidArgument(format!(
                "support contains duplicate index {}",
                pair[0]
            )));
        }
    }
    if let Some(&max) = sorted.last() {
        if max >= x.n_cols() {
            return Err(Error::InvalidArgument(format!(
                "support index {max} out of range for {} columns",
                x.n_cols()
            )));
        }
    }

    let n = x.n_rows();
    let s = sorted.len();
    let mut cols = Vec::new();
    x.gather_columns(&sorted, &mut cols);

    // Normal equations: G = X_S^T X_S, b = X_S^T y.
    let mut gram = vec![0.0; s * s];
    let mut rhs = vec![0.0; s];
    for a in 0..s {
        let ca = &cols[a * n..(a + 1) * n];
        for b in a..s {
            let cb = &cols[b * n..(b + 1) * n];
            let dot: f64 = ca.iter().zip(cb).map(|(u, v)| u * v).sum();
            gram[a * s + b] = dot;
            gram[b * s + a] = dot;
        }
        rhs[a] = ca.iter().zip(y).map(|(u, v)| u * v).sum();
    }

    let trace: f64 = (0..s).map(|a| gram[a * s + a]).sum();
    let base_ridge = 1e-10 * trace / s as f64;
    let mut ridge_used = None;
    let mut coeffs = None;
    for attempt in 0..6 {
        let ridge = if attempt == 0 { 0.0 } else { base_ridge * 100f64.powi(attempt - 1) };
        let mut g = gram.clone();
        for a in 0..s {
            g[a * s + a] += ridge;
        }
        if let Some(sol) = cholesky_solve(&g, &rhs, s) {
            if attempt > 0 {
                ridge_used = Some(ridge);
            }
            coeffs = Some(sol);
            break;
        }
    }
    let coeffs = coeffs.ok_or_else(|| {
        Error::InvalidArgument("restricted solve failed even with ridge regularization".into())
    })?;

    counter.charge((n * s * s + n * s + s * s * s) as u64);
    Ok(RestrictedSolve {
        iterate: SparseIterate::new(x.n_cols(), sorted, coeffs)?,
        ridge: ridge_used,
    })
}

/// In-place Cholesky solve of `G z = b` for a symmetric `s x s` system.
/// Returns `None` when `G` is not numerically positive definite.
fn cholesky_solve(g: &[f64], b: &[f64], s: usize) -> Option<Vec<f64>> {
    let mut l = vec![0.0; s * s];
    for a in 0..s {
        for c in 0..=a {
            let mut sum = g[a * s + c];
            for k in 0..c {
                sum -= l[a * s + k] * l[c * s + k];
            }
            if a == c {
                if sum <= 0.0 || !sum.is_finite() {
                    return None;
                }
                l[a * s + a] = sum.sqrt();
            } else {
                l[a * s + c] = sum / l[c * s + c];
            }
        }
    }
    // Forward then backward substitution.
    let mut z = b.to_vec();
    for a in 0..s {
        for k in 0..a {
            z[a] -= l[a * s + k] * z[k];
        }
        z[a] /= l[a * s + a];
    }
    for a in (0..s).rev() {
        for k in a + 1..s {
            z[a] -= l[k * s + a] * z[k];
        }
        z[a] /= l[a * s + a];
    }
    Some(z)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::make_rng;
    use rand::Rng as _;

    fn random_matrix(n: usize, d: usize, seed: u64) -> DesignMatrix {
        let mut rng = make_rng(seed);
        let entries: Vec<f64> = (0..n * d).map(|_| rng.gen_range(-1.0..1.0)).collect();
        DesignMatrix::from_rows(n, d, entries).unwrap()
    }

    #[test]
    fn rejects_bad_shapes_and_values() {
        assert!(DesignMatrix::from_rows(0, 3, vec![]).is_err());
        assert!(DesignMatrix::from_rows(2, 2, vec![1.0; 3]).is_err());
        assert!(DesignMatrix::from_rows(1, 2, vec![1.0, f64::NAN]).is_err());
        assert!(ResidualVector::new(vec![0.0, f64::INFINITY]).is_err());
    }

    #[test]
    fn row_norms_match_direct_computation() {
        let x = random_matrix(17, 9, 3);
        for i in 0..17 {
            let row = x.row(i);
            let l2 = row.iter().map(|v| v * v).sum::<f64>().sqrt();
            let linf = row.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            let rel = (x.row_l2_norms()[i] - l2).abs() / l2.max(1e-300);
            assert!(rel <= 1e-12);
            assert_eq!(x.row_linf_norms()[i], linf);
        }
    }

    #[test]
    fn sparse_iterate_prunes_zeros_and_validates() {
        let w = SparseIterate::new(6, vec![1, 3, 5], vec![2.0, 0.0, -1.0]).unwrap();
        assert_eq!(w.support(), &[1, 5]);
        assert_eq!(w.nnz(), 2);
        assert_eq!(w.to_dense(), vec![0.0, 2.0, 0.0, 0.0, 0.0, -1.0]);
        assert_eq!(w.get(3), 0.0);
        assert_eq!(w.get(5), -1.0);
        assert!((w.l1_norm() - 3.0).abs() < 1e-15);
        assert!(SparseIterate::new(6, vec![3, 3], vec![1.0, 1.0]).is_err());
        assert!(SparseIterate::new(6, vec![4, 2], vec![1.0, 1.0]).is_err());
        assert!(SparseIterate::new(6, vec![6], vec![1.0]).is_err());
    }

    #[test]
    fn residual_matches_dense_oracle_and_charges_work() {
        let x = random_matrix(11, 7, 5);
        let mut rng = make_rng(6);
        let y: Vec<f64> = (0..11).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let w = SparseIterate::new(7, vec![0, 2, 6], vec![0.5, -1.25, 2.0]).unwrap();

        let mut counter = WorkCounter::new();
        let r = compute_residual(&x, &y, &w, &mut counter).unwrap();
        assert_eq!(counter.total(), 11 * 3);

        // Oracle: dense mat-vec minus y.
        let dense = w.to_dense();
        for i in 0..11 {
            let expect: f64 = x.row(i).iter().zip(&dense).map(|(a, b)| a * b).sum::<f64>() - y[i];
            assert!((r.values()[i] - expect).abs() <= 1e-12);
        }
    }

    #[test]
    fn residual_with_empty_support_is_minus_y_for_free() {
        let x = random_matrix(5, 4, 8);
        let y = vec![1.0, -2.0, 3.0, -4.0, 5.0];
        let mut counter = WorkCounter::new();
        let r = compute_residual(&x, &y, &SparseIterate::zero(4), &mut counter).unwrap();
        assert_eq!(counter.total(), 0);
        assert_eq!(r.values(), &[-1.0, 2.0, -3.0, 4.0, -5.0]);
    }

    #[test]
    fn full_gradient_matches_column_dot_oracle() {
        let x = random_matrix(23, 13, 9);
        let mut rng = make_rng(10);
        let r = ResidualVector::new((0..23).map(|_| rng.gen_range(-2.0..2.0)).collect()).unwrap();

        let mut counter = WorkCounter::new();
        let grad = full_gradient(&x, &r, &mut counter).unwrap();
        assert_eq!(counter.total(), 23 * 13);

        // Oracle accumulates per column, the implementation per row; both must
        // agree to rounding.
        for j in 0..13 {
            let expect: f64 = (0..23).map(|i| x.get(i, j) * r.values()[i]).sum();
            assert!((grad[j] - expect).abs() <= 1e-12 * expect.abs().max(1.0));
        }
    }

    #[test]
    fn row_accumulation_is_order_invariant() {
        let x = random_matrix(40, 6, 11);
        let mut rng = make_rng(12);
        let r: Vec<f64> = (0..40).map(|_| rng.gen_range(-1.0..1.0)).collect();

        let mut reference = vec![0.0; 6];
        for i in 0..40 {
            for j in 0..6 {
                reference[j] += r[i] * x.get(i, j);
            }
        }
        // Several random permutations of the accumulation order.
        let mut order: Vec<usize> = (0..40).collect();
        for _ in 0..10 {
            for i in (1..order.len()).rev() {
                let k = rng.gen_range(0..=i);
                order.swap(i, k);
            }
            let mut acc = vec![0.0; 6];
            for &i in &order {
                for j in 0..6 {
                    acc[j] += r[i] * x.get(i, j);
                }
            }
            for j in 0..6 {
                let scale = reference[j].abs().max(1.0);
                assert!((acc[j] - reference[j]).abs() <= 1e-10 * scale);
            }
        }
    }

    #[test]
    fn restricted_solve_leaves_residual_orthogonal_to_support() {
        let x = random_matrix(30, 10, 13);
        let mut rng = make_rng(14);
        let y: Vec<f64> = (0..30).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let support = vec![1, 4, 7, 9];

        let mut counter = WorkCounter::new();
        let solve = restricted_least_squares(&x, &y, &support, &mut counter).unwrap();
        assert!(solve.ridge.is_none());
        assert_eq!(counter.total(), (30 * 16 + 30 * 4 + 64) as u64);

        let mut scratch = WorkCounter::new();
        let r = compute_residual(&x, &y, &solve.iterate, &mut scratch).unwrap();
        let y_norm = y.iter().map(|v| v * v).sum::<f64>().sqrt();
        for &j in &support {
            let dot: f64 = (0..30).map(|i| x.get(i, j) * r.values()[i]).sum();
            let col_norm: f64 = (0..30).map(|i| x.get(i, j).powi(2)).sum::<f64>().sqrt();
            assert!(dot.abs() <= 1e-8 * y_norm * col_norm, "gradient {dot} not annihilated on support");
        }
    }

    #[test]
    fn restricted_solve_matches_small_hand_system() {
        // Two orthogonal columns: solution is the per-column projection.
        let x = DesignMatrix::from_rows(4, 2, vec![1.0, 0.0, 1.0, 0.0, 0.0, 1.0, 0.0, 1.0]).unwrap();
        let y = vec![2.0, 4.0, 6.0, 8.0];
        let mut counter = WorkCounter::new();
        let solve = restricted_least_squares(&x, &y, &[0, 1], &mut counter).unwrap();
        let w = solve.iterate.to_dense();
        assert!((w[0] - 3.0).abs() <= 1e-12);
        assert!((w[1] - 7.0).abs() <= 1e-12);
    }

    #[test]
    fn rank_deficient_support_falls_back_to_ridge() {
        // Duplicate column content (not duplicate indices) makes the Gram
        // matrix singular.
        let mut entries = Vec::new();
        for i in 0..6 {
            let v = i as f64 + 1.0;
            entries.extend_from_slice(&[v, v, 2.0 * v]);
        }
        let x = DesignMatrix::from_rows(6, 3, entries).unwrap();
        let y = vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0];
        let mut counter = WorkCounter::new();
        let solve = restricted_least_squares(&x, &y, &[0, 1, 2], &mut counter).unwrap();
        assert!(solve.ridge.is_some());
        // The fitted values must still be close to the projection onto the
        // (one-dimensional) column space.
        let mut scratch = WorkCounter::new();
        let r = compute_residual(&x, &y, &solve.iterate, &mut scratch).unwrap();
        let fit_err = r.norm();
        // Direct projection onto the single direction v = (1..6).
        let v: Vec<f64> = (1..=6).map(|i| i as f64).collect();
        let coef = v.iter().zip(&y).map(|(a, b)| a * b).sum::<f64>()
            / v.iter().map(|a| a * a).sum::<f64>();
        let proj_err: f64 = v
            .iter()
            .zip(&y)
            .map(|(a, b)| (coef * a - b).powi(2))
            .sum::<f64>()
            .sqrt();
        assert!((fit_err - proj_err).abs() <= 1e-6);
    }

    #[test]
    fn overcomplete_support_is_solved_with_ridge() {
        let x = random_matrix(4, 8, 15);
        let mut rng = make_rng(16);
        let y: Vec<f64> = (0..4).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let support: Vec<usize> = (0..8).collect();
        let mut counter = WorkCounter::new();
        let solve = restricted_least_squares(&x, &y, &support, &mut counter).unwrap();
        assert!(solve.ridge.is_some());
        // With more columns than rows the fit should be essentially exact.
        let mut scratch = WorkCounter::new();
        let r = compute_residual(&x, &y, &solve.iterate, &mut scratch).unwrap();
        assert!(r.norm() <= 1e-4);
    }

    #[test]
    fn restricted_solve_rejects_bad_supports() {
        let x = random_matrix(5, 3, 17);
        let y = vec![0.0; 5];
        let mut c = WorkCounter::new();
        assert!(restricted_least_squares(&x, &y, &[], &mut c).is_err());
        assert!(restricted_least_squares(&x, &y, &[0, 0], &mut c).is_err());
        assert!(restricted_least_squares(&x, &y, &[3], &mut c).is_err());
    }
}
