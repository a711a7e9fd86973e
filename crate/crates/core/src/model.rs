//! Design blocks of the additive growth curve model
//! `Y = Σ_i X_i Θ_i Z_i' + E` with mutually orthogonal `X_i`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, max_abs, Matrix, SpdFactor};

/// Default relative tolerance for the `X_i'X_j = 0` check.
pub const DEFAULT_ORTHOGONALITY_TOL: f64 = 1e-10;

/// `p × q` monomial basis: column `j` holds `t^j`.
#[derive(Debug, Clone, PartialEq)]
pub struct ProfileMatrix {
    timepoints: Vec<f64>,
    degree: usize,
    matrix: Matrix,
}

impl ProfileMatrix {
    pub fn timepoints(&self) -> &[f64] {
        &self.timepoints
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    /// Number of columns, `degree + 1`.
    pub fn q(&self) -> usize {
        self.degree + 1
    }

    pub fn p(&self) -> usize {
        self.timepoints.len()
    }

    pub fn matrix(&self) -> &Matrix {
        &self.matrix
    }

    /// Replaces the basis by `Z B` for an invertible `q × q` matrix `B`. The
    /// column space (and hence every fitted mean) is unchanged.
    pub fn reparameterized(&self, b: &Matrix) -> Result<Self> {
        if b.shape() != (self.q(), self.q()) {
            return Err(Error::Shape(format!("basis change must be {0}x{0}", self.q())));
        }
        Ok(Self { timepoints: self.timepoints.clone(), degree: self.degree, matrix: &self.matrix * b })
    }
}

pub fn build_polynomial_profile(timepoints: &[f64], degree: usize) -> Result<ProfileMatrix> {
    if timepoints.is_empty() {
        return Err(Error::InvalidArgument("profile needs at least one timepoint".into()));
    }
    if let Some(t) = timepoints.iter().find(|t| !t.is_finite()) {
        return Err(Error::InvalidArgument(format!("timepoint {t} is not finite")));
    }
    for (i, a) in timepoints.iter().enumerate() {
        if timepoints[..i].contains(a) {
            return Err(Error::DegenerateTimepoints(*a));
        }
    }
    let matrix = Matrix::from_fn(timepoints.len(), degree + 1, |i, j| timepoints[i].powi(j as i32));
    Ok(ProfileMatrix { timepoints: timepoints.to_vec(), degree, matrix })
}

/// One 0/1 indicator column per group, groups laid out contiguously in
/// input order.
pub fn build_group_indicator(group_sizes: &[usize]) -> Result<Vec<Matrix>> {
    if group_sizes.is_empty() {
        return Err(Error::EmptyDesign);
    }
    if let Some(i) = group_sizes.iter().position(|&s| s == 0) {
        return Err(Error::InvalidArgument(format!("group {i} has size 0")));
    }
    let n: usize = group_sizes.iter().sum();
    let mut start = 0;
    Ok(group_sizes
        .iter()
        .map(|&size| {
            let x = Matrix::from_fn(n, 1, |row, _| if (start..start + size).contains(&row) { 1.0 } else { 0.0 });
            start += size;
            x
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct DesignBlock {
    pub x: Matrix,
    pub profile: ProfileMatrix,
    pub label: String,
}

impl DesignBlock {
    pub fn new(x: Matrix, profile: ProfileMatrix, label: impl Into<String>) -> Self {
        Self { x, profile, label: label.into() }
    }

    pub fn m(&self) -> usize {
        self.x.ncols()
    }
}

/// A validated set of design blocks.
#[derive(Debug, Clone)]
pub struct ModelSpec {
    blocks: Vec<DesignBlock>,
    xtx: Vec<SpdFactor>,
    n: usize,
    p: usize,
    r: usize,
}

impl PartialEq for ModelSpec {
    fn eq(&self, other: &Self) -> bool {
        self.blocks == other.blocks && self.n == other.n && self.p == other.p && self.r == other.r
    }
}

impl ModelSpec {
    pub fn validate(blocks: Vec<DesignBlock>) -> Result<Self> {
        Self::validate_with_tol(blocks, DEFAULT_ORTHOGONALITY_TOL)
    }

    /// Orthogonality passes when
    /// `max|X_i'X_j| <= tol * max(1, max|X_i| * max|X_j| * n)`.
    pub fn validate_with_tol(blocks: Vec<DesignBlock>, tol: f64) -> Result<Self> {
        let first = blocks.first().ok_or(Error::EmptyDesign)?;
        let n = first.x.nrows();
        let p = first.profile.p();
        for (i, b) in blocks.iter().enumerate() {
            if b.x.nrows() != n {
                return Err(Error::Shape(format!("block {i} has {} rows, block 0 has {n}", b.x.nrows())));
            }
            if b.x.ncols() == 0 {
                return Err(Error::Shape(format!("block {i} has no columns")));
            }
            linalg::check_finite(&b.x, "design matrix")?;
            if b.profile.timepoints() != first.profile.timepoints() {
                return Err(Error::MixedTimepoints(i));
            }
            if b.profile.q() > p {
                return Err(Error::ProfileTooWide { block: i, q: b.profile.q(), p });
            }
            let zr = linalg::rank(b.profile.matrix());
            if zr < b.profile.q() {
                return Err(Error::RankDeficient { block: format!("{} (profile)", b.label), rank: zr, cols: b.profile.q() });
            }
            let xr = linalg::rank(&b.x);
            if xr < b.m() {
                return Err(Error::RankDeficient { block: b.label.clone(), rank: xr, cols: b.m() });
            }
        }
        for i in 0..blocks.len() {
            for j in (i + 1)..blocks.len() {
                let (xi, xj) = (&blocks[i].x, &blocks[j].x);
                let cross = max_abs(&(xi.transpose() * xj));
                let bound = tol * (max_abs(xi) * max_abs(xj) * n as f64).max(1.0);
                if cross > bound {
                    return Err(Error::NotOrthogonal { i, j, max_cross: cross });
                }
            }
        }
        let m: usize = blocks.iter().map(DesignBlock::m).sum();
        if m + p > n {
            return Err(Error::InsufficientResidualDof { r: n.saturating_sub(m), p });
        }
        let xtx = blocks
            .iter()
            .map(|b| SpdFactor::new(&(b.x.transpose() * &b.x)))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { blocks, xtx, n, p, r: n - m })
    }

    /// Indicator design over contiguous groups with one polynomial degree
    /// per group.
    pub fn grouped(group_sizes: &[usize], timepoints: &[f64], degrees: &[usize]) -> Result<Self> {
        if degrees.len() != group_sizes.len() {
            return Err(Error::Shape(format!(
                "{} degrees given for {} groups",
                degrees.len(),
                group_sizes.len()
            )));
        }
        let xs = build_group_indicator(group_sizes)?;
        let blocks = xs
            .into_iter()
            .zip(degrees)
            .enumerate()
            .map(|(i, (x, &d))| Ok(DesignBlock::new(x, build_polynomial_profile(timepoints, d)?, format!("group{}", i + 1))))
            .collect::<Result<Vec<_>>>()?;
        Self::validate(blocks)
    }

    /// A classical growth curve model `Y = X Θ Z' + E`: a single block whose
    /// design holds one indicator column per group.
    pub fn shared_profile(group_sizes: &[usize], timepoints: &[f64], degree: usize) -> Result<Self> {
        let cols = build_group_indicator(group_sizes)?;
        let n = cols[0].nrows();
        let x = Matrix::from_fn(n, cols.len(), |i, j| cols[j][i]);
        let block = DesignBlock::new(x, build_polynomial_profile(timepoints, degree)?, "shared");
        Self::validate(vec![block])
    }

    pub fn blocks(&self) -> &[DesignBlock] {
        &self.blocks
    }

    pub fn block(&self, i: usize) -> &DesignBlock {
        &self.blocks[i]
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn k(&self) -> usize {
        self.blocks.len()
    }

    /// Residual degrees of freedom `n − Σ rank(X_i)`.
    pub fn r(&self) -> usize {
        self.r
    }

    pub fn timepoints(&self) -> &[f64] {
        self.blocks[0].profile.timepoints()
    }

    /// Number of mean parameters `Σ m_i q_i`.
    pub fn n_params(&self) -> usize {
        self.blocks.iter().map(|b| b.m() * b.profile.q()).sum()
    }

    /// Cholesky factor of `X_i'X_i`.
    pub fn xtx_factor(&self, i: usize) -> &SpdFactor {
        &self.xtx[i]
    }

    /// `(X_i'X_i)^{-1} X_i' Y` without forming an `n × n` projector.
    pub fn block_ls(&self, i: usize, y: &Matrix) -> Matrix {
        self.xtx[i].solve(&(self.blocks[i].x.transpose() * y))
    }

    /// `P_{X_i} Y`.
    pub fn project(&self, i: usize, y: &Matrix) -> Matrix {
        &self.blocks[i].x * self.block_ls(i, y)
    }

    /// `(I − Σ_i P_{X_i}) Y`.
    pub fn residual_projection(&self, y: &Matrix) -> Matrix {
        let mut out = y.clone();
        for i in 0..self.k() {
            out -= self.project(i, y);
        }
        out
    }

    /// `Σ_i X_i Θ_i Z_i'`.
    pub fn mean(&self, coefs: &CoefficientSet) -> Result<Matrix> {
        coefs.check_conforms(self)?;
        let mut mu = Matrix::zeros(self.n, self.p);
        for (b, theta) in self.blocks.iter().zip(coefs.iter()) {
            mu += &b.x * theta * b.profile.matrix().transpose();
        }
        Ok(mu)
    }

    pub(crate) fn check_observations(&self, y: &Matrix) -> Result<()> {
        if y.shape() != (self.n, self.p) {
            return Err(Error::Shape(format!(
                "observations are {}x{}, model expects {}x{}",
                y.nrows(),
                y.ncols(),
                self.n,
                self.p
            )));
        }
        linalg::check_finite(y, "observation matrix")
    }
}

/// Regression coefficients `Θ_1, …, Θ_k`, the `i`-th of shape `m_i × q_i`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct CoefficientSet(#[serde(with = "crate::serde_matrix::list")] pub Vec<Matrix>);

impl CoefficientSet {
    pub fn iter(&self) -> std::slice::Iter<'_, Matrix> {
        self.0.iter()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn check_conforms(&self, spec: &ModelSpec) -> Result<()> {
        if self.0.len() != spec.k() {
            return Err(Error::Shape(format!("{} coefficient blocks for {} design blocks", self.0.len(), spec.k())));
        }
        for (i, (theta, b)) in self.0.iter().zip(spec.blocks()).enumerate() {
            if theta.shape() != (b.m(), b.profile.q()) {
                return Err(Error::Shape(format!(
                    "coefficient block {i} is {}x{}, expected {}x{}",
                    theta.nrows(),
                    theta.ncols(),
                    b.m(),
                    b.profile.q()
                )));
            }
        }
        Ok(())
    }
}

impl std::ops::Index<usize> for CoefficientSet {
    type Output = Matrix;
    fn index(&self, i: usize) -> &Matrix {
        &self.0[i]
    }
}
