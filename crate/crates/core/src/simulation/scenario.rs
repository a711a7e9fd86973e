use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{Matrix, SpdFactor};
use crate::model::{CoefficientSet, ModelSpec};

use super::rng::replication_rng;

/// Timepoints of the two-group drug-trial scenario.
pub const TRIAL_TIMEPOINTS: [f64; 4] = [-1.0, -0.5, 0.5, 1.0];

/// `ρ^{|i−j|}` serial correlation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SerialCorrelation {
    pub rho: f64,
    pub p: usize,
}

impl SerialCorrelation {
    pub fn new(rho: f64, p: usize) -> Result<Self> {
        if !(0.0..1.0).contains(&rho) {
            return Err(Error::InvalidCorrelation(rho));
        }
        Ok(Self { rho, p })
    }

    pub fn matrix(&self) -> Matrix {
        Matrix::from_fn(self.p, self.p, |i, j| self.rho.powi((i as i32 - j as i32).abs()))
    }
}

/// `p × p` matrix with entries `rho^{|i−j|}`; `rho` must lie in `[0, 1)`.
pub fn serial_sigma(rho: f64, p: usize) -> Result<Matrix> {
    Ok(SerialCorrelation::new(rho, p)?.matrix())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CovarianceModel {
    Serial(SerialCorrelation),
    Explicit(#[serde(with = "crate::serde_matrix")] Matrix),
}

impl CovarianceModel {
    pub fn matrix(&self) -> Matrix {
        match self {
            CovarianceModel::Serial(s) => s.matrix(),
            CovarianceModel::Explicit(m) => m.clone(),
        }
    }

    pub fn rho(&self) -> Option<f64> {
        match self {
            CovarianceModel::Serial(s) => Some(s.rho),
            CovarianceModel::Explicit(_) => None,
        }
    }
}

/// Law of the standardized row noise `z`; rows are `mean + z L'`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorLaw {
    #[default]
    Gaussian,
    /// `U(0, √3)` magnitude with an independent random sign: unit variance,
    /// symmetric, zero third moments.
    SymmetricUniform,
}

impl ErrorLaw {
    fn draw<R: Rng + ?Sized>(self, rng: &mut R) -> f64 {
        match self {
            ErrorLaw::Gaussian => rng.sample(StandardNormal),
            ErrorLaw::SymmetricUniform => {
                let m = rng.random::<f64>() * 3f64.sqrt();
                if rng.random::<bool>() {
                    m
                } else {
                    -m
                }
            }
        }
    }
}

/// Which coefficient vector drives the cubic group.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GroupTwoTruth {
    /// `3 + 2t − 3t² + 2t³`.
    #[default]
    Displayed,
    /// `3 + 2t + t² − t³`.
    PolynomialText,
}

impl GroupTwoTruth {
    pub fn coefficients(self) -> [f64; 4] {
        match self {
            GroupTwoTruth::Displayed => [3.0, 2.0, -3.0, 2.0],
            GroupTwoTruth::PolynomialText => [3.0, 2.0, 1.0, -1.0],
        }
    }
}

/// A data-generating process over contiguous groups, each with a polynomial
/// mean (monomial coefficients, lowest order first) and common row
/// covariance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationScenario {
    pub group_sizes: Vec<usize>,
    pub timepoints: Vec<f64>,
    pub coefficients: Vec<Vec<f64>>,
    pub covariance: CovarianceModel,
    pub error_law: ErrorLaw,
    pub seed: u64,
}

impl SimulationScenario {
    /// Placebo group with mean `4 + 2t`, treated group cubic, `n/2` each,
    /// serial correlation `rho`.
    pub fn two_group(n: usize, rho: f64, seed: u64) -> Result<Self> {
        Self::two_group_with(n, rho, seed, GroupTwoTruth::default())
    }

    pub fn two_group_with(n: usize, rho: f64, seed: u64, truth: GroupTwoTruth) -> Result<Self> {
        if n < 2 || n % 2 != 0 {
            return Err(Error::InvalidArgument(format!("n = {n} must be even and at least 2")));
        }
        let s = Self {
            group_sizes: vec![n / 2, n / 2],
            timepoints: TRIAL_TIMEPOINTS.to_vec(),
            coefficients: vec![vec![4.0, 2.0], truth.coefficients().to_vec()],
            covariance: CovarianceModel::Serial(SerialCorrelation::new(rho, TRIAL_TIMEPOINTS.len())?),
            error_law: ErrorLaw::Gaussian,
            seed,
        };
        s.check()?;
        Ok(s)
    }

    pub fn with_error_law(mut self, law: ErrorLaw) -> Self {
        self.error_law = law;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    /// Same process with equal groups totalling `n`.
    pub fn with_total_n(&self, n: usize) -> Result<Self> {
        let k = self.group_sizes.len();
        if n % k != 0 || n == 0 {
            return Err(Error::InvalidArgument(format!("n = {n} does not split into {k} equal groups")));
        }
        let mut s = self.clone();
        s.group_sizes = vec![n / k; k];
        s.check()?;
        Ok(s)
    }

    pub fn check(&self) -> Result<()> {
        if self.group_sizes.is_empty() || self.group_sizes.len() != self.coefficients.len() {
            return Err(Error::InvalidArgument("one coefficient vector per group is required".into()));
        }
        if self.coefficients.iter().any(Vec::is_empty) {
            return Err(Error::InvalidArgument("empty coefficient vector".into()));
        }
        let p = self.p();
        let sigma = self.covariance.matrix();
        if sigma.shape() != (p, p) {
            return Err(Error::Shape(format!("covariance must be {p}x{p}")));
        }
        if let CovarianceModel::Serial(s) = self.covariance {
            SerialCorrelation::new(s.rho, s.p)?;
        }
        SpdFactor::new(&sigma)?;
        Ok(())
    }

    pub fn n(&self) -> usize {
        self.group_sizes.iter().sum()
    }

    pub fn p(&self) -> usize {
        self.timepoints.len()
    }

    pub fn rho(&self) -> Option<f64> {
        self.covariance.rho()
    }

    pub fn sigma(&self) -> Matrix {
        self.covariance.matrix()
    }

    pub fn true_degrees(&self) -> Vec<usize> {
        self.coefficients.iter().map(|c| c.len() - 1).collect()
    }

    /// The additive model with each group's true degree.
    pub fn true_spec(&self) -> Result<ModelSpec> {
        ModelSpec::grouped(&self.group_sizes, &self.timepoints, &self.true_degrees())
    }

    pub fn true_coefficients(&self) -> CoefficientSet {
        CoefficientSet(self.coefficients.iter().map(|c| Matrix::from_row_slice(1, c.len(), c)).collect())
    }

    /// `n × p` mean matrix.
    pub fn mean(&self) -> Matrix {
        let mut rows = Vec::with_capacity(self.n());
        for (size, coef) in self.group_sizes.iter().zip(&self.coefficients) {
            let mu: Vec<f64> = self
                .timepoints
                .iter()
                .map(|&t| coef.iter().rev().fold(0.0, |acc, c| acc * t + c))
                .collect();
            rows.extend(std::iter::repeat(mu).take(*size));
        }
        Matrix::from_fn(self.n(), self.p(), |i, j| rows[i][j])
    }

    /// Observation matrix for replication 0.
    pub fn generate(&self) -> Result<Matrix> {
        self.generate_replication(0)
    }

    pub fn generate_replication(&self, index: u64) -> Result<Matrix> {
        let factor = SpdFactor::new(&self.sigma())?;
        let mut rng = replication_rng(self.seed, index);
        Ok(self.generate_with(&factor, &mut rng))
    }

    pub(crate) fn generate_with<R: Rng + ?Sized>(&self, factor: &SpdFactor, rng: &mut R) -> Matrix {
        let (n, p) = (self.n(), self.p());
        let z = Matrix::from_fn(n, p, |_, _| self.error_law.draw(rng));
        self.mean() + z * factor.lower().transpose()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::max_abs;
    use crate::stats::{column_means, covariance};
    use nalgebra::dmatrix;

    #[test]
    fn serial_sigma_examples() {
        assert_eq!(serial_sigma(0.0, 3).unwrap(), Matrix::identity(3, 3));
        let s = serial_sigma(0.5, 4).unwrap();
        assert_eq!(s.row(0).iter().copied().collect::<Vec<_>>(), vec![1.0, 0.5, 0.25, 0.125]);
        assert_eq!(serial_sigma(0.8, 2).unwrap(), dmatrix![1.0, 0.8; 0.8, 1.0]);
        assert!(matches!(serial_sigma(1.0, 4), Err(Error::InvalidCorrelation(_))));
        assert!(matches!(serial_sigma(-0.1, 4), Err(Error::InvalidCorrelation(_))));
    }

    #[test]
    fn group_means() {
        let s = SimulationScenario::two_group(4, 0.5, 1).unwrap();
        let mu = s.mean();
        assert_eq!(mu.row(0).iter().copied().collect::<Vec<_>>(), vec![2.0, 3.0, 5.0, 6.0]);
        // 3 + 2t - 3t^2 + 2t^3 at t = -1, -0.5, 0.5, 1
        assert_eq!(mu.row(3).iter().copied().collect::<Vec<_>>(), vec![-4.0, 1.0, 3.5, 4.0]);
        let p = SimulationScenario::two_group_with(4, 0.5, 1, GroupTwoTruth::PolynomialText).unwrap();
        // 3 + 2t + t^2 - t^3
        assert_eq!(p.mean().row(3).iter().copied().collect::<Vec<_>>(), vec![3.0, 2.375, 4.125, 5.0]);
    }

    #[test]
    fn true_mean_matches_model_mean() {
        let s = SimulationScenario::two_group(10, 0.5, 1).unwrap();
        let spec = s.true_spec().unwrap();
        assert_eq!(spec.mean(&s.true_coefficients()).unwrap(), s.mean());
    }

    #[test]
    fn fixed_seed_is_deterministic() {
        let s = SimulationScenario::two_group(20, 0.5, 42).unwrap();
        assert_eq!(s.generate().unwrap(), s.generate().unwrap());
        assert_ne!(s.generate().unwrap(), s.clone().with_seed(43).generate().unwrap());
    }

    #[test]
    fn odd_n_rejected() {
        assert!(SimulationScenario::two_group(21, 0.5, 1).is_err());
    }

    fn group_one_rows(law: ErrorLaw) -> (SimulationScenario, Matrix) {
        let s = SimulationScenario::two_group(20_000, 0.5, 2024).unwrap().with_error_law(law);
        let y = s.generate().unwrap();
        let g1 = y.rows(0, 10_000).into_owned();
        (s, g1)
    }

    #[test]
    fn empirical_mean_and_covariance() {
        for law in [ErrorLaw::Gaussian, ErrorLaw::SymmetricUniform] {
            let (s, g1) = group_one_rows(law);
            let means = column_means(&g1);
            let expect = [2.0, 3.0, 5.0, 6.0];
            let bound = 4.0 / (10_000f64).sqrt();
            for (m, e) in means.iter().zip(expect) {
                assert!((m - e).abs() < bound, "{law:?}: mean {m} vs {e}");
            }
            let c = covariance(&g1);
            assert!(max_abs(&(c - s.sigma())) < 0.05, "{law:?}");
        }
    }

    #[test]
    fn uniform_law_is_symmetric() {
        let (_, g1) = group_one_rows(ErrorLaw::SymmetricUniform);
        let centred = g1.column(0).map(|v| v - 2.0);
        let xs: Vec<f64> = centred.iter().copied().collect();
        let m = crate::stats::MarginalStats::from_sample(&xs);
        assert!(m.skewness.abs() < 0.06);
        // Uniform has excess kurtosis −1.2.
        assert!((m.excess_kurtosis + 1.2).abs() < 0.1);
    }
}
