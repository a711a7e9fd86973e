//! Two-stage generalized least squares for the additive growth curve model.
//!
//! Stage one is the quadratic covariance estimator
//! `Σ̂ = Y'WY`, `W = (I − Σ_i P_{X_i}) / r`, `r = n − Σ_i rank(X_i)`.
//! Stage two plugs `Σ̂` into the GLS criterion, which for orthogonal designs
//! decouples into one oblique projection per block:
//!
//! ```text
//! H_i   = Σ̂⁻¹ Z_i (Z_i' Σ̂⁻¹ Z_i)⁻¹ Z_i'
//! μ̂     = Σ_i P_{X_i} Y H_i
//! Θ̂_i   = (X_i'X_i)⁻¹ X_i' Y H_i Z_i (Z_i'Z_i)⁻¹
//! ```

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, kron, max_abs, pinv, symmetrize, unvec_rows, vec_rows, Matrix, SpdFactor};
use crate::model::{CoefficientSet, ModelSpec, ProfileMatrix};

/// Largest `n * p` accepted by [`fit_vec_form`] unless overridden.
pub const DEFAULT_VEC_FORM_LIMIT: usize = 4096;

/// First-stage covariance estimate together with its Cholesky factor.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(try_from = "CovarianceRepr", into = "CovarianceRepr")]
pub struct CovarianceEstimate {
    sigma_hat: Matrix,
    r: usize,
    factor: SpdFactor,
}

#[derive(Serialize, Deserialize)]
struct CovarianceRepr {
    #[serde(with = "crate::serde_matrix")]
    sigma_hat: Matrix,
    r: usize,
}

impl From<CovarianceEstimate> for CovarianceRepr {
    fn from(c: CovarianceEstimate) -> Self {
        Self { sigma_hat: c.sigma_hat, r: c.r }
    }
}

impl TryFrom<CovarianceRepr> for CovarianceEstimate {
    type Error = Error;
    fn try_from(c: CovarianceRepr) -> Result<Self> {
        Self::from_matrix(c.sigma_hat, c.r)
    }
}

impl PartialEq for CovarianceEstimate {
    fn eq(&self, other: &Self) -> bool {
        self.sigma_hat == other.sigma_hat && self.r == other.r
    }
}

impl CovarianceEstimate {
    /// Wraps an arbitrary symmetric positive definite matrix, e.g. a known
    /// covariance, so it can stand in for `Σ̂`.
    pub fn from_matrix(sigma: Matrix, r: usize) -> Result<Self> {
        if !sigma.is_square() {
            return Err(Error::Shape(format!("covariance is {}x{}", sigma.nrows(), sigma.ncols())));
        }
        linalg::check_finite(&sigma, "covariance")?;
        let sigma = symmetrize(&sigma);
        let factor = SpdFactor::new(&sigma)?;
        Ok(Self { sigma_hat: sigma, r, factor })
    }

    pub fn sigma_hat(&self) -> &Matrix {
        &self.sigma_hat
    }

    /// Divisor `r = n − Σ rank(X_i)`.
    pub fn r(&self) -> usize {
        self.r
    }

    pub fn factor(&self) -> &SpdFactor {
        &self.factor
    }

    pub fn p(&self) -> usize {
        self.sigma_hat.nrows()
    }

    /// `Σ̂⁻¹ B`.
    pub fn solve(&self, b: &Matrix) -> Matrix {
        self.factor.solve(b)
    }
}

/// True when the residual projection of `y` is at rounding level, i.e. the
/// observations lie in the mean space and `Σ̂` carries no information.
fn residual_is_degenerate(y: &Matrix, resid: &Matrix) -> bool {
    let scale = y.norm();
    resid.norm() <= 64.0 * (y.nrows() * y.ncols()) as f64 * f64::EPSILON * scale
}

fn covariance_from_quadratic(sigma: Matrix, r: usize) -> Result<CovarianceEstimate> {
    CovarianceEstimate::from_matrix(sigma, r).map_err(|e| match e {
        Error::NotPositiveDefinite { .. } => Error::DegenerateCovariance,
        other => other,
    })
}

/// `Σ̂(Y) = Y' (I − Σ_i P_{X_i}) Y / r`.
pub fn quadratic_covariance(y: &Matrix, spec: &ModelSpec) -> Result<CovarianceEstimate> {
    spec.check_observations(y)?;
    let resid = spec.residual_projection(y);
    if residual_is_degenerate(y, &resid) {
        return Err(Error::DegenerateCovariance);
    }
    let r = spec.r();
    let sigma = symmetrize(&(y.transpose() * &resid)) / r as f64;
    covariance_from_quadratic(sigma, r)
}

/// `Σ̂⁻¹ Z` and the factor of `Z' Σ̂⁻¹ Z`.
fn gls_parts(cov: &CovarianceEstimate, z: &Matrix, block: usize) -> Result<(Matrix, SpdFactor)> {
    if z.nrows() != cov.p() {
        return Err(Error::Shape(format!("profile has {} rows, covariance is {}x{}", z.nrows(), cov.p(), cov.p())));
    }
    let g = cov.solve(z);
    let gram = symmetrize(&(z.transpose() * &g));
    let f = SpdFactor::new(&gram).map_err(|_| Error::IllConditionedProfile(block))?;
    Ok((g, f))
}

/// `H = Σ̂⁻¹ Z (Z' Σ̂⁻¹ Z)⁻¹ Z'`, the oblique projector with `Z'H = Z'`.
pub fn h_matrix(cov: &CovarianceEstimate, z: &ProfileMatrix) -> Result<Matrix> {
    h_matrix_for_block(cov, z.matrix(), 0)
}

pub(crate) fn h_matrix_for_block(cov: &CovarianceEstimate, z: &Matrix, block: usize) -> Result<Matrix> {
    let (g, f) = gls_parts(cov, z, block)?;
    Ok(g * f.solve(&z.transpose()))
}

/// `(Z' Σ̂⁻¹ Z)⁻¹` for block `block` of `spec`.
pub fn profile_gram_inverse(cov: &CovarianceEstimate, spec: &ModelSpec, block: usize) -> Result<Matrix> {
    let z = spec.block(block).profile.matrix();
    let (_, f) = gls_parts(cov, z, block)?;
    Ok(f.inverse())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub coefficients: CoefficientSet,
    #[serde(with = "crate::serde_matrix")]
    pub mean_hat: Matrix,
    #[serde(with = "crate::serde_matrix")]
    pub residual: Matrix,
    pub rmss: f64,
    pub aic: f64,
    pub n_params: usize,
    pub covariance: CovarianceEstimate,
}

impl FitResult {
    fn assemble(y: &Matrix, spec: &ModelSpec, coefficients: CoefficientSet, mean_hat: Matrix, covariance: CovarianceEstimate) -> Result<Self> {
        let residual = y - &mean_hat;
        let rmss = residual.norm_squared();
        let n_params = spec.n_params();
        let aic = aic(rmss, spec.n(), n_params)?;
        Ok(Self { coefficients, mean_hat, residual, rmss, aic, n_params, covariance })
    }
}

/// Two-stage GLS fit with `Σ̂` from [`quadratic_covariance`].
pub fn fit(y: &Matrix, spec: &ModelSpec) -> Result<FitResult> {
    let cov = quadratic_covariance(y, spec)?;
    fit_with_covariance(y, spec, cov)
}

/// GLS fit with a caller-supplied covariance in place of `Σ̂`.
pub fn fit_with_covariance(y: &Matrix, spec: &ModelSpec, cov: CovarianceEstimate) -> Result<FitResult> {
    spec.check_observations(y)?;
    if cov.p() != spec.p() {
        return Err(Error::Shape(format!("covariance is {0}x{0}, model has p = {1}", cov.p(), spec.p())));
    }
    let mut coefs = Vec::with_capacity(spec.k());
    let mut mean_hat = Matrix::zeros(spec.n(), spec.p());
    for (i, block) in spec.blocks().iter().enumerate() {
        let z = block.profile.matrix();
        let (g, gram) = gls_parts(&cov, z, i)?;
        // H Z (Z'Z)⁻¹ collapses to Σ̂⁻¹ Z (Z'Σ̂⁻¹Z)⁻¹.
        let right = gram.solve(&g.transpose()).transpose();
        let theta = spec.block_ls(i, y) * right;
        mean_hat += &block.x * &theta * z.transpose();
        coefs.push(theta);
    }
    FitResult::assemble(y, spec, CoefficientSet(coefs), mean_hat, cov)
}

/// Independent route to the fit through the vectorized form
/// `vec(μ̂) = Σ_i [P_{X_i} ⊗ Z_i (Z_i'Σ̂⁻¹Z_i)⁺ Z_i'Σ̂⁻¹] vec(Y)`, built from
/// explicit `np × np` operators and pseudoinverses.
pub fn fit_vec_form(y: &Matrix, spec: &ModelSpec) -> Result<FitResult> {
    fit_vec_form_with_limit(y, spec, DEFAULT_VEC_FORM_LIMIT)
}

pub fn fit_vec_form_with_limit(y: &Matrix, spec: &ModelSpec, limit: usize) -> Result<FitResult> {
    spec.check_observations(y)?;
    let (n, p) = (spec.n(), spec.p());
    if n * p > limit {
        return Err(Error::SizeLimit { size: n * p, limit });
    }
    let mut w = Matrix::identity(n, n);
    let mut projectors = Vec::with_capacity(spec.k());
    for b in spec.blocks() {
        let proj = &b.x * pinv(&b.x);
        w -= &proj;
        projectors.push(proj);
    }
    let wy = &w * y;
    if residual_is_degenerate(y, &wy) {
        return Err(Error::DegenerateCovariance);
    }
    let sigma = y.transpose() * &wy / spec.r() as f64;
    let sigma_inv = pinv(&sigma);
    let mut op = Matrix::zeros(n * p, n * p);
    for (proj, b) in projectors.iter().zip(spec.blocks()) {
        let z = b.profile.matrix();
        let core = pinv(&(z.transpose() * &sigma_inv * z));
        let right = z * core * z.transpose() * &sigma_inv;
        op += kron(proj, &right);
    }
    let mean_hat = unvec_rows(&(op * vec_rows(y)), n, p)?;
    let coefs = spec
        .blocks()
        .iter()
        .map(|b| pinv(&b.x) * &mean_hat * pinv(b.profile.matrix()).transpose())
        .collect();
    let cov = covariance_from_quadratic(sigma, spec.r())?;
    FitResult::assemble(y, spec, CoefficientSet(coefs), mean_hat, cov)
}

/// Residual matrix sum of squares `tr((Y − μ̂)'(Y − μ̂))`.
pub fn rmss(y: &Matrix, mean_hat: &Matrix) -> Result<f64> {
    if y.shape() != mean_hat.shape() {
        return Err(Error::Shape("observation and fitted mean differ in shape".into()));
    }
    Ok((y - mean_hat).norm_squared())
}

/// `n ln(RMSS) + 2(n_params + 1) − n ln(n)`.
pub fn aic(rmss: f64, n: usize, n_params: usize) -> Result<f64> {
    if !(rmss > 0.0) {
        return Err(Error::NonpositiveRmss(rmss));
    }
    let n = n as f64;
    Ok(n * rmss.ln() + 2.0 * (n_params as f64 + 1.0) - n * n.ln())
}

/// Largest entry of `X_i'(Y − μ̂) Σ̂⁻¹ Z_i` over all blocks; zero at the GLS
/// solution.
pub fn normal_equation_residual(y: &Matrix, spec: &ModelSpec, fit: &FitResult) -> f64 {
    let resid = y - &fit.mean_hat;
    let scaled = fit.covariance.solve(&resid.transpose()).transpose();
    spec.blocks()
        .iter()
        .map(|b| max_abs(&(b.x.transpose() * &scaled * b.profile.matrix())))
        .fold(0.0, f64::max)
}
