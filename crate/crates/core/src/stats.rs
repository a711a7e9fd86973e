//! Summary statistics over Monte Carlo draws.

use serde::{Deserialize, Serialize};

use crate::linalg::Matrix;

/// Neumaier-compensated running sum.
#[derive(Debug, Clone, Copy, Default)]
pub struct CompensatedSum {
    sum: f64,
    carry: f64,
}

impl CompensatedSum {
    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.carry += (self.sum - t) + x;
        } else {
            self.carry += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.carry
    }
}

impl FromIterator<f64> for CompensatedSum {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        let mut s = Self::default();
        iter.into_iter().for_each(|x| s.add(x));
        s
    }
}

pub fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    xs.iter().copied().collect::<CompensatedSum>().value() / xs.len() as f64
}

/// First four moments of a univariate sample.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MarginalStats {
    pub mean: f64,
    /// Unbiased sample variance.
    pub variance: f64,
    pub skewness: f64,
    pub excess_kurtosis: f64,
}

impl MarginalStats {
    pub fn from_sample(xs: &[f64]) -> Self {
        let n = xs.len() as f64;
        let m = mean(xs);
        let central = |k: i32| xs.iter().map(|x| (x - m).powi(k)).collect::<CompensatedSum>().value() / n;
        let m2 = central(2);
        let m3 = central(3);
        let m4 = central(4);
        Self {
            mean: m,
            variance: m2 * n / (n - 1.0),
            skewness: m3 / m2.powf(1.5),
            excess_kurtosis: m4 / (m2 * m2) - 3.0,
        }
    }
}

/// Column means of a draws matrix (one draw per row).
pub fn column_means(draws: &Matrix) -> Vec<f64> {
    (0..draws.ncols())
        .map(|j| draws.column(j).iter().copied().collect::<CompensatedSum>().value() / draws.nrows() as f64)
        .collect()
}

/// Sample covariance (divisor N − 1) of the columns of `a` against the
/// columns of `b`, rows being paired draws.
pub fn cross_covariance(a: &Matrix, b: &Matrix) -> Matrix {
    assert_eq!(a.nrows(), b.nrows(), "paired draws required");
    let n = a.nrows() as f64;
    let ma = column_means(a);
    let mb = column_means(b);
    Matrix::from_fn(a.ncols(), b.ncols(), |i, j| {
        (0..a.nrows())
            .map(|r| (a[(r, i)] - ma[i]) * (b[(r, j)] - mb[j]))
            .collect::<CompensatedSum>()
            .value()
            / (n - 1.0)
    })
}

pub fn covariance(a: &Matrix) -> Matrix {
    let c = cross_covariance(a, a);
    (&c + c.transpose()) * 0.5
}

/// Cross-covariance together with a per-entry standard error, estimated
/// from the spread of the centred products `(a_i − ā_i)(b_j − b̄_j)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrossCovariance {
    #[serde(with = "crate::serde_matrix")]
    pub covariance: Matrix,
    #[serde(with = "crate::serde_matrix")]
    pub std_error: Matrix,
    /// Largest `|covariance / std_error|`.
    pub max_abs_z: f64,
}

impl CrossCovariance {
    pub fn new(a: &Matrix, b: &Matrix) -> Self {
        let covariance = cross_covariance(a, b);
        let n = a.nrows();
        let ma = column_means(a);
        let mb = column_means(b);
        let std_error = Matrix::from_fn(a.ncols(), b.ncols(), |i, j| {
            let prods: Vec<f64> = (0..n).map(|r| (a[(r, i)] - ma[i]) * (b[(r, j)] - mb[j])).collect();
            MarginalStats::from_sample(&prods).variance.sqrt() / (n as f64).sqrt()
        });
        let max_abs_z = covariance
            .iter()
            .zip(std_error.iter())
            .map(|(c, s)| if *s > 0.0 { (c / s).abs() } else { 0.0 })
            .fold(0.0, f64::max);
        Self { covariance, std_error, max_abs_z }
    }
}
