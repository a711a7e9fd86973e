//! Large-sample inference for the two-stage GLS coefficients.
//!
//! `√n vec(Θ̂_i − Θ_i)` is asymptotically normal with covariance
//! `R_i⁻¹ ⊗ (Z_i'Σ⁻¹Z_i)⁻¹`, where `R_i = lim n⁻¹ X_i'X_i`. The plug-in version
//! replaces `R_i⁻¹` by `n (X_i'X_i)⁻¹` and `Σ` by `Σ̂`. For a null hypothesis
//! `C Θ_i V' = 0` the standardized statistic
//!
//! ```text
//! (C n(X_i'X_i)⁻¹ C')^{-1/2} √n C Θ̂_i V' (V (Z_i'Σ̂⁻¹Z_i)⁻¹ V')^{-1/2}
//! ```
//!
//! is asymptotically `N_{s×t}(0, I)`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimation::{profile_gram_inverse, CovarianceEstimate, FitResult};
use crate::linalg::{kron, sym_inv_sqrt, Matrix};
use crate::model::ModelSpec;
use crate::stats::{CrossCovariance, MarginalStats};

/// Eigenvalues of a standardizer below this (relative) bound count as
/// singular.
pub const STANDARDIZER_TOL: f64 = 1e-12;

/// Null hypothesis `C Θ_block V' = 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct Hypothesis {
    pub block: usize,
    /// `s × m_i`.
    pub c: Matrix,
    /// `t × q_i`.
    pub v: Matrix,
}

impl Hypothesis {
    pub fn new(block: usize, c: Matrix, v: Matrix) -> Self {
        Self { block, c, v }
    }

    fn check(&self, spec: &ModelSpec) -> Result<()> {
        if self.block >= spec.k() {
            return Err(Error::InvalidArgument(format!("block {} out of range (k = {})", self.block, spec.k())));
        }
        let b = spec.block(self.block);
        if self.c.ncols() != b.m() || self.v.ncols() != b.profile.q() || self.c.nrows() == 0 || self.v.nrows() == 0 {
            return Err(Error::Shape(format!(
                "hypothesis is ({}x{}, {}x{}), block {} needs (s x {}, t x {})",
                self.c.nrows(),
                self.c.ncols(),
                self.v.nrows(),
                self.v.ncols(),
                self.block,
                b.m(),
                b.profile.q()
            )));
        }
        Ok(())
    }
}

/// `n (X_i'X_i)⁻¹`, the plug-in `R_i⁻¹`.
pub fn row_factor(spec: &ModelSpec, i: usize) -> Matrix {
    spec.xtx_factor(i).inverse() * spec.n() as f64
}

/// Plug-in covariance factors `(n (X_i'X_i)⁻¹, (Z_i'Σ̂⁻¹Z_i)⁻¹)`; their
/// Kronecker product is the covariance of `√n vec(Θ̂_i − Θ_i)`.
pub fn coeff_asymptotic_covariance(spec: &ModelSpec, cov: &CovarianceEstimate, i: usize) -> Result<(Matrix, Matrix)> {
    if i >= spec.k() {
        return Err(Error::InvalidArgument(format!("block {i} out of range (k = {})", spec.k())));
    }
    Ok((row_factor(spec, i), profile_gram_inverse(cov, spec, i)?))
}

/// `kron(row, column)` for block `i`.
pub fn coeff_asymptotic_kron(spec: &ModelSpec, cov: &CovarianceEstimate, i: usize) -> Result<Matrix> {
    let (r, c) = coeff_asymptotic_covariance(spec, cov, i)?;
    Ok(kron(&r, &c))
}

pub fn standardized_statistic(fit: &FitResult, spec: &ModelSpec, hyp: &Hypothesis) -> Result<Matrix> {
    hyp.check(spec)?;
    let (row, col) = coeff_asymptotic_covariance(spec, &fit.covariance, hyp.block)?;
    let left = sym_inv_sqrt(&(&hyp.c * row * hyp.c.transpose()), STANDARDIZER_TOL)
        .ok_or(Error::NonsingularityViolated { which: "row (C n(X'X)^-1 C')" })?;
    let right = sym_inv_sqrt(&(&hyp.v * col * hyp.v.transpose()), STANDARDIZER_TOL)
        .ok_or(Error::NonsingularityViolated { which: "column (V (Z'S^-1 Z)^-1 V')" })?;
    let centre = &hyp.c * &fit.coefficients[hyp.block] * hyp.v.transpose();
    Ok(left * centre * right * (spec.n() as f64).sqrt())
}

/// Orthonormal rows spanning the orthogonal complement of the row space of
/// `theta`, i.e. a `V` with `theta V' = 0`. Empty when `theta` has full
/// column rank.
pub fn null_space_rows(theta: &Matrix) -> Matrix {
    let q = theta.ncols();
    let mut basis: Vec<nalgebra::DVector<f64>> = Vec::new();
    let candidates = theta.row_iter().map(|r| r.transpose()).chain((0..q).map(|j| {
        let mut e = nalgebra::DVector::zeros(q);
        e[j] = 1.0;
        e
    }));
    let mut row_rank = None;
    for (idx, mut v) in candidates.enumerate() {
        if idx == theta.nrows() {
            row_rank = Some(basis.len());
        }
        for _ in 0..2 {
            for b in &basis {
                let d = b.dot(&v);
                v -= b * d;
            }
        }
        let norm = v.norm();
        if norm > 1e-10 {
            basis.push(v / norm);
        }
    }
    let skip = row_rank.unwrap_or(basis.len());
    let rest = &basis[skip..];
    Matrix::from_fn(rest.len(), q, |i, j| rest[i][j])
}

/// `Cov(e ⊗ e)` for Gaussian rows with covariance `sigma`:
/// `σ_ac σ_bd + σ_ad σ_bc` at `(a p + b, c p + d)`.
pub fn gaussian_phi2(sigma: &Matrix) -> Matrix {
    let p = sigma.nrows();
    Matrix::from_fn(p * p, p * p, |ab, cd| {
        let (a, b, c, d) = (ab / p, ab % p, cd / p, cd % p);
        sigma[(a, c)] * sigma[(b, d)] + sigma[(a, d)] * sigma[(b, c)]
    })
}

/// Empirical `Cov(e_l ⊗ e_l)` over the rows of a residual matrix.
pub fn phi2_from_residuals(resid: &Matrix) -> Matrix {
    let p = resid.ncols();
    let draws = Matrix::from_fn(resid.nrows(), p * p, |l, ab| resid[(l, ab / p)] * resid[(l, ab % p)]);
    crate::stats::covariance(&draws)
}

/// Monte Carlo comparison of a block's coefficient law with the asymptotic
/// theory.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AsymptoticReport {
    pub block: usize,
    pub n: usize,
    pub seed: u64,
    pub replications: usize,
    pub failures: usize,
    #[serde(with = "crate::serde_matrix")]
    pub row_factor: Matrix,
    #[serde(with = "crate::serde_matrix")]
    pub column_factor: Matrix,
    /// `kron(row_factor, column_factor)` evaluated at the true covariance.
    #[serde(with = "crate::serde_matrix")]
    pub theoretical: Matrix,
    /// Empirical covariance of `√n vec(Θ̂_i − Θ_i)`.
    #[serde(with = "crate::serde_matrix")]
    pub empirical: Matrix,
    /// `max |empirical − theoretical| / max |theoretical|`.
    pub relative_error: f64,
    /// Cross-covariance with every other block, in block order.
    pub cross_block: Vec<(usize, CrossCovariance)>,
    /// Cross-covariance between `√n vec(Θ̂_i)` and `√n vec(Σ̂)`.
    pub sigma_cross: CrossCovariance,
    /// Empirical covariance of `√n vec(Σ̂ − Σ)` across replications.
    #[serde(with = "crate::serde_matrix")]
    pub sigma_law: Matrix,
    /// `Cov(e ⊗ e)` estimated from residual rows, averaged over replications.
    #[serde(with = "crate::serde_matrix")]
    pub phi2_empirical: Matrix,
    /// Gaussian closed form `Cov(e ⊗ e)` from the true covariance.
    #[serde(with = "crate::serde_matrix")]
    pub phi2_gaussian: Matrix,
    /// Moments of each entry of `√n vec(Θ̂_i − Θ_i)`.
    pub marginals: Vec<MarginalStats>,
    /// Moments of each standardized-statistic entry under a true null.
    pub statistic: Vec<MarginalStats>,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimation::fit_with_covariance;
    use crate::linalg::max_abs;
    use crate::model::{build_polynomial_profile, DesignBlock};
    use crate::CoefficientSet;
    use nalgebra::dmatrix;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    const T5: [f64; 4] = [-1.0, -0.5, 0.5, 1.0];

    fn serial(rho: f64) -> Matrix {
        Matrix::from_fn(4, 4, |i, j| rho.powi((i as i32 - j as i32).abs()))
    }

    /// 4x4 inverse by cofactor expansion, independent of any factorization.
    fn adjugate_inverse(a: &Matrix) -> Matrix {
        let n = a.nrows();
        let minor = |r: usize, c: usize| {
            let m = Matrix::from_fn(n - 1, n - 1, |i, j| a[(i + (i >= r) as usize, j + (j >= c) as usize)]);
            det(&m)
        };
        fn det(m: &Matrix) -> f64 {
            let n = m.nrows();
            if n == 1 {
                return m[(0, 0)];
            }
            (0..n)
                .map(|j| {
                    let sub = Matrix::from_fn(n - 1, n - 1, |i, k| m[(i + 1, k + (k >= j) as usize)]);
                    let sign = if j % 2 == 0 { 1.0 } else { -1.0 };
                    sign * m[(0, j)] * det(&sub)
                })
                .sum()
        }
        let d = det(a);
        Matrix::from_fn(n, n, |i, j| {
            let sign = if (i + j) % 2 == 0 { 1.0 } else { -1.0 };
            sign * minor(j, i) / d
        })
    }

    #[test]
    fn standardized_design_gives_identity_factors() {
        // X'X = n I with n = 8: two orthogonal ±1 columns in one block.
        let x = Matrix::from_fn(8, 2, |i, j| if j == 0 { 1.0 } else if i % 2 == 0 { 1.0 } else { -1.0 });
        // Orthonormal Z columns.
        let z0 = build_polynomial_profile(&T5, 1).unwrap();
        let q = crate::linalg::svd(z0.matrix()).u;
        let b = crate::linalg::pinv(z0.matrix()) * &q;
        let z = z0.reparameterized(&b).unwrap();
        assert!(max_abs(&(z.matrix().transpose() * z.matrix() - Matrix::identity(2, 2))) < 1e-12);
        let spec = ModelSpec::validate(vec![DesignBlock::new(x, z, "std")]).unwrap();
        let cov = CovarianceEstimate::from_matrix(Matrix::identity(4, 4), spec.r()).unwrap();
        let (r, c) = coeff_asymptotic_covariance(&spec, &cov, 0).unwrap();
        assert!(max_abs(&(r - Matrix::identity(2, 2))) < 1e-12);
        assert!(max_abs(&(c - Matrix::identity(2, 2))) < 1e-12);
    }

    #[test]
    fn indicator_row_factor_is_two() {
        let spec = ModelSpec::grouped(&[20, 20], &T5, &[1, 3]).unwrap();
        for i in 0..2 {
            assert!((row_factor(&spec, i)[(0, 0)] - 2.0).abs() < 1e-14);
        }
    }

    #[test]
    fn column_factor_matches_cofactor_inverse() {
        let spec = ModelSpec::grouped(&[20, 20], &T5, &[1, 3]).unwrap();
        let s0 = serial(0.5);
        let cov = CovarianceEstimate::from_matrix(s0.clone(), spec.r()).unwrap();
        let (_, col) = coeff_asymptotic_covariance(&spec, &cov, 0).unwrap();
        let z = spec.block(0).profile.matrix();
        let inner = z.transpose() * adjugate_inverse(&s0) * z;
        let expect = adjugate_inverse(&inner);
        assert!(max_abs(&(col - expect)) < 1e-12);
    }

    fn sample_fit(seed: u64) -> (ModelSpec, FitResult) {
        let spec = ModelSpec::grouped(&[12, 12], &T5, &[1, 3]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let y = Matrix::from_fn(24, 4, |_, _| rng.random_range(-1.0..1.0));
        let f = crate::fit(&y, &spec).unwrap();
        (spec, f)
    }

    #[test]
    fn zero_estimate_gives_zero_statistic() {
        let (spec, mut f) = sample_fit(1);
        f.coefficients = CoefficientSet(vec![Matrix::zeros(1, 2), Matrix::zeros(1, 4)]);
        let h = Hypothesis::new(1, dmatrix![1.0], dmatrix![1.0, 0.0, 0.0, 0.0; 0.0, 1.0, 1.0, 0.0]);
        let s = standardized_statistic(&f, &spec, &h).unwrap();
        assert_eq!(s.shape(), (1, 2));
        assert_eq!(max_abs(&s), 0.0);
    }

    #[test]
    fn scalar_statistic_reduces_to_z() {
        let (spec, f) = sample_fit(2);
        let c = dmatrix![1.0];
        let v = dmatrix![0.0, 1.0, 0.0, 0.0];
        let s = standardized_statistic(&f, &spec, &Hypothesis::new(1, c.clone(), v.clone())).unwrap();
        let (row, col) = coeff_asymptotic_covariance(&spec, &f.covariance, 1).unwrap();
        let n = spec.n() as f64;
        let num = n.sqrt() * (&c * &f.coefficients[1] * v.transpose())[(0, 0)];
        let den = ((&c * row * c.transpose())[(0, 0)] * (&v * col * v.transpose())[(0, 0)]).sqrt();
        assert!((s[(0, 0)] - num / den).abs() < 1e-12);
    }

    #[test]
    fn statistic_is_scale_invariant() {
        let (spec, f) = sample_fit(3);
        let c = dmatrix![1.0];
        let v = dmatrix![1.0, 0.5, 0.0, -1.0; 0.0, 1.0, 2.0, 0.0];
        let base = standardized_statistic(&f, &spec, &Hypothesis::new(1, c.clone(), v.clone())).unwrap();
        let scaled = standardized_statistic(&f, &spec, &Hypothesis::new(1, &c * -3.5, &v * 0.02)).unwrap();
        // a, b of mixed sign flip the statistic's sign only through sign(a) sign(b).
        assert!(max_abs(&(base + scaled)) < 1e-10);
        let scaled = standardized_statistic(&f, &spec, &Hypothesis::new(1, &c * 7.0, &v * 40.0)).unwrap();
        let base = standardized_statistic(&f, &spec, &Hypothesis::new(1, c, v)).unwrap();
        assert!(max_abs(&(base - scaled)) < 1e-10);
    }

    #[test]
    fn singular_standardizer_reported() {
        let (spec, f) = sample_fit(4);
        let v = dmatrix![1.0, 0.0, 0.0, 0.0; 2.0, 0.0, 0.0, 0.0];
        let err = standardized_statistic(&f, &spec, &Hypothesis::new(1, dmatrix![1.0], v));
        assert!(matches!(err, Err(Error::NonsingularityViolated { which }) if which.starts_with("column")));
        let err = standardized_statistic(&f, &spec, &Hypothesis::new(1, dmatrix![0.0], dmatrix![1.0, 0.0, 0.0, 0.0]));
        assert!(matches!(err, Err(Error::NonsingularityViolated { which }) if which.starts_with("row")));
    }

    #[test]
    fn null_space_annihilates_theta() {
        let theta = dmatrix![3.0, 2.0, -3.0, 2.0];
        let v = null_space_rows(&theta);
        assert_eq!(v.shape(), (3, 4));
        assert!(max_abs(&(&theta * v.transpose())) < 1e-12);
        assert!(max_abs(&(&v * v.transpose() - Matrix::identity(3, 3))) < 1e-12);
        assert_eq!(null_space_rows(&Matrix::identity(2, 2)).nrows(), 0);
    }

    #[test]
    fn gaussian_phi2_diagonal_case() {
        let s = Matrix::from_diagonal(&nalgebra::dvector![1.0, 2.0]);
        let phi = gaussian_phi2(&s);
        // Var(e1^2) = 2, Var(e2^2) = 8, Var(e1 e2) = 2, Cov(e1e2, e2e1) = 2.
        assert_eq!(phi[(0, 0)], 2.0);
        assert_eq!(phi[(3, 3)], 8.0);
        assert_eq!(phi[(1, 1)], 2.0);
        assert_eq!(phi[(1, 2)], 2.0);
        assert_eq!(phi[(0, 3)], 0.0);
    }

    #[test]
    fn identity_plugin_matches_fit_with_true_sigma() {
        let spec = ModelSpec::grouped(&[12, 12], &T5, &[1, 3]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let y = Matrix::from_fn(24, 4, |_, _| rng.random_range(-1.0..1.0));
        let cov = CovarianceEstimate::from_matrix(serial(0.3), spec.r()).unwrap();
        let f = fit_with_covariance(&y, &spec, cov.clone()).unwrap();
        assert_eq!(f.covariance, cov);
        let k = coeff_asymptotic_kron(&spec, &cov, 1).unwrap();
        assert_eq!(k.shape(), (4, 4));
    }
}
