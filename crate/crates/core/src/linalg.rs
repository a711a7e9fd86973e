//! Dense matrix kernels shared by the estimators.
//!
//! Matrices are `nalgebra::DMatrix<f64>`. The `vec` operator stacks ROWS one
//! underneath another, so that `vec(A B C) = (A ⊗ C') vec(B)`. Column-stacking
//! would silently transpose every Kronecker identity in this crate.

use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{Error, Result};

pub type Matrix = DMatrix<f64>;

/// Largest absolute entry, `0.0` for an empty matrix.
pub fn max_abs(a: &Matrix) -> f64 {
    a.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
}

/// `(A + A') / 2`.
pub fn symmetrize(a: &Matrix) -> Matrix {
    (a + a.transpose()) * 0.5
}

pub(crate) fn check_finite(a: &Matrix, what: &str) -> Result<()> {
    if a.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("{what} contains non-finite entries")))
    }
}

/// Thin singular value decomposition `A = U diag(s) V'`.
#[derive(Debug, Clone)]
pub struct Svd {
    pub u: Matrix,
    pub singular_values: Vec<f64>,
    pub v: Matrix,
}

/// One-sided Jacobi SVD. Accurate on rank-deficient input, which the
/// pseudoinverse depends on; cost is fine for the small dense matrices used
/// here.
pub fn svd(a: &Matrix) -> Svd {
    let (rows, cols) = a.shape();
    if rows < cols {
        let t = svd(&a.transpose());
        return Svd { u: t.v, singular_values: t.singular_values, v: t.u };
    }
    let mut u = a.clone();
    let mut v = Matrix::identity(cols, cols);
    for _sweep in 0..80 {
        let mut rotated = false;
        for i in 0..cols {
            for j in (i + 1)..cols {
                let alpha = u.column(i).norm_squared();
                let beta = u.column(j).norm_squared();
                let gamma = u.column(i).dot(&u.column(j));
                if gamma == 0.0 || gamma.abs() <= f64::EPSILON * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                for m in [&mut u, &mut v] {
                    for r in 0..m.nrows() {
                        let (x, y) = (m[(r, i)], m[(r, j)]);
                        m[(r, i)] = c * x - s * y;
                        m[(r, j)] = s * x + c * y;
                    }
                }
            }
        }
        if !rotated {
            break;
        }
    }
    let singular_values: Vec<f64> = (0..cols).map(|j| u.column(j).norm()).collect();
    for (j, &s) in singular_values.iter().enumerate() {
        if s > 0.0 {
            u.column_mut(j).unscale_mut(s);
        }
    }
    Svd { u, singular_values, v }
}

/// Singular values below `max(rows, cols) * s_max * eps` are treated as zero.
fn svd_cutoff(rows: usize, cols: usize, s_max: f64) -> f64 {
    rows.max(cols) as f64 * s_max * f64::EPSILON
}

fn kept(rows: usize, cols: usize, sv: &[f64]) -> impl Iterator<Item = (usize, f64)> + '_ {
    let s_max = sv.iter().cloned().fold(0.0, f64::max);
    let cut = svd_cutoff(rows, cols, s_max);
    sv.iter().copied().enumerate().filter(move |&(_, s)| s > cut && s > 0.0)
}

/// Moore–Penrose pseudoinverse.
pub fn pinv(a: &Matrix) -> Matrix {
    let (rows, cols) = a.shape();
    let mut g = Matrix::zeros(cols, rows);
    if rows == 0 || cols == 0 {
        return g;
    }
    let d = svd(a);
    for (k, s) in kept(rows, cols, &d.singular_values) {
        g += (d.v.column(k) * d.u.column(k).transpose()) / s;
    }
    g
}

/// Numerical rank using the same cutoff as [`pinv`].
pub fn rank(a: &Matrix) -> usize {
    let (rows, cols) = a.shape();
    if rows == 0 || cols == 0 {
        return 0;
    }
    kept(rows, cols, &svd(a).singular_values).count()
}

/// Orthogonal projector `X (X'X)⁻ X'` onto the column space of a full column
/// rank `X`.
pub fn projector(x: &Matrix) -> Result<Matrix> {
    let r = rank(x);
    if r < x.ncols() {
        return Err(Error::RankDeficient { block: "operand".into(), rank: r, cols: x.ncols() });
    }
    // U_r U_r' from the SVD equals X (X'X)⁻ X' and is symmetric bit for bit.
    let d = svd(x);
    let mut p = Matrix::zeros(x.nrows(), x.nrows());
    for (k, _) in kept(x.nrows(), x.ncols(), &d.singular_values) {
        p += d.u.column(k) * d.u.column(k).transpose();
    }
    Ok(p)
}

/// Lower-triangular Cholesky factor `A = L L'` of a symmetric positive
/// definite matrix.
#[derive(Debug, Clone)]
pub struct SpdFactor {
    lower: Matrix,
}

impl SpdFactor {
    /// Factors `a`, rejecting pivots below `dim * eps * max(diag(a))`.
    pub fn new(a: &Matrix) -> Result<Self> {
        let scale = a.diagonal().iter().cloned().fold(0.0, f64::max);
        Self::with_floor(a, a.nrows() as f64 * f64::EPSILON * scale)
    }

    /// Factors `a`; any pivot `<= floor` fails with the pivot index.
    pub fn with_floor(a: &Matrix, floor: f64) -> Result<Self> {
        let n = a.nrows();
        if a.ncols() != n {
            return Err(Error::Shape(format!("cannot factor a {}x{} matrix", n, a.ncols())));
        }
        let mut l = Matrix::zeros(n, n);
        for j in 0..n {
            let mut d = a[(j, j)];
            for k in 0..j {
                d -= l[(j, k)] * l[(j, k)];
            }
            if !(d > floor) {
                return Err(Error::NotPositiveDefinite { pivot: j, value: d });
            }
            let d = d.sqrt();
            l[(j, j)] = d;
            for i in (j + 1)..n {
                let mut s = a[(i, j)];
                for k in 0..j {
                    s -= l[(i, k)] * l[(j, k)];
                }
                l[(i, j)] = s / d;
            }
        }
        Ok(Self { lower: l })
    }

    pub fn dim(&self) -> usize {
        self.lower.nrows()
    }

    pub fn lower(&self) -> &Matrix {
        &self.lower
    }

    /// `L L'`.
    pub fn reconstruct(&self) -> Matrix {
        &self.lower * self.lower.transpose()
    }

    /// Solves `A X = B` by forward then backward substitution.
    pub fn solve(&self, b: &Matrix) -> Matrix {
        let n = self.dim();
        assert_eq!(b.nrows(), n, "right-hand side has wrong row count");
        let l = &self.lower;
        let mut x = b.clone();
        for c in 0..x.ncols() {
            for i in 0..n {
                let mut s = x[(i, c)];
                for k in 0..i {
                    s -= l[(i, k)] * x[(k, c)];
                }
                x[(i, c)] = s / l[(i, i)];
            }
            for i in (0..n).rev() {
                let mut s = x[(i, c)];
                for k in (i + 1)..n {
                    s -= l[(k, i)] * x[(k, c)];
                }
                x[(i, c)] = s / l[(i, i)];
            }
        }
        x
    }

    /// Explicit inverse; only for callers that must return the matrix itself.
    pub fn inverse(&self) -> Matrix {
        symmetrize(&self.solve(&Matrix::identity(self.dim(), self.dim())))
    }
}

/// Solves `A X = B` for symmetric positive definite `A`.
pub fn spd_solve(a: &Matrix, b: &Matrix) -> Result<Matrix> {
    if b.nrows() != a.nrows() {
        return Err(Error::Shape(format!(
            "spd_solve: A is {}x{}, B has {} rows",
            a.nrows(),
            a.ncols(),
            b.nrows()
        )));
    }
    Ok(SpdFactor::new(a)?.solve(b))
}

/// Kronecker product with the blockwise `(a_ij B)` layout.
pub fn kron(a: &Matrix, b: &Matrix) -> Matrix {
    let (ar, ac) = a.shape();
    let (br, bc) = b.shape();
    let mut out = Matrix::zeros(ar * br, ac * bc);
    for i in 0..ar {
        for j in 0..ac {
            let aij = a[(i, j)];
            if aij != 0.0 {
                out.view_mut((i * br, j * bc), (br, bc)).copy_from(&(b * aij));
            }
        }
    }
    out
}

/// Row-stacking vec: `[a_11, a_12, …, a_1c, a_21, …]'` as an `rc × 1` matrix.
pub fn vec_rows(a: &Matrix) -> Matrix {
    let (r, c) = a.shape();
    Matrix::from_fn(r * c, 1, |idx, _| a[(idx / c, idx % c)])
}

/// Inverse of [`vec_rows`].
pub fn unvec_rows(v: &Matrix, rows: usize, cols: usize) -> Result<Matrix> {
    if v.len() != rows * cols {
        return Err(Error::Shape(format!("cannot reshape {} entries to {rows}x{cols}", v.len())));
    }
    Ok(Matrix::from_fn(rows, cols, |i, j| v[i * cols + j]))
}

fn sym_power(a: &Matrix, tol: f64, inverse: bool) -> Option<Matrix> {
    let eig = SymmetricEigen::new(symmetrize(a));
    let scale = eig.eigenvalues.iter().fold(0.0_f64, |m, v| m.max(v.abs())).max(1.0);
    if eig.eigenvalues.iter().any(|&l| l <= tol * scale) {
        return None;
    }
    let d = eig.eigenvalues.map(|l| if inverse { 1.0 / l.sqrt() } else { l.sqrt() });
    let v = &eig.eigenvectors;
    Some(symmetrize(&(v * Matrix::from_diagonal(&d) * v.transpose())))
}

/// Symmetric square root of a positive definite matrix; `None` when an
/// eigenvalue falls below `tol` (relative to the spectral scale, floored at 1).
pub fn sym_sqrt(a: &Matrix, tol: f64) -> Option<Matrix> {
    sym_power(a, tol, false)
}

/// Symmetric inverse square root `A^{-1/2}`; same failure rule as [`sym_sqrt`].
pub fn sym_inv_sqrt(a: &Matrix, tol: f64) -> Option<Matrix> {
    sym_power(a, tol, true)
}
