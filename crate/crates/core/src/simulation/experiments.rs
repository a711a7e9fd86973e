//! Monte Carlo experiments: AIC model comparison, consistency, unbiasedness
//! and asymptotic normality.
//!
//! Replication `j` of an experiment always uses stream `j` of a generator
//! seeded from the scenario seed and the sample size, and per-replication
//! results are collected in index order before any aggregation. Serial,
//! parallel and pooled runs therefore produce identical aggregates.

use std::ops::Range;
use std::time::Instant;

use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimation::{fit, profile_gram_inverse, CovarianceEstimate};
use crate::inference::{null_space_rows, phi2_from_residuals, row_factor, standardized_statistic, AsymptoticReport, Hypothesis};
use crate::linalg::{kron, max_abs, vec_rows, Matrix, SpdFactor};
use crate::model::ModelSpec;
use crate::stats::{covariance, mean, CrossCovariance, MarginalStats};

use super::rng::{derive_seed, replication_rng};
use super::scenario::SimulationScenario;

pub const DEFAULT_AIC_REPLICATIONS: usize = 500;
pub const DEFAULT_NORMALITY_REPLICATIONS: usize = 5000;
/// Experiments abort when more than this fraction of replications fail.
pub const MAX_FAILURE_RATE: f64 = 0.01;

const TAG_AIC: u64 = 0x4149_43;
const TAG_CONSISTENCY: u64 = 0x434f_4e53;
const TAG_NORMALITY: u64 = 0x4e4f_524d;
const TAG_BIAS: u64 = 0x4249_4153;

fn stream_seed(scenario: &SimulationScenario, tag: u64, n: usize) -> u64 {
    derive_seed(derive_seed(scenario.seed, tag), n as u64)
}

/// Worker pool honouring `AGCM_THREADS`.
fn pool() -> Result<rayon::ThreadPool> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(cap) = std::env::var("AGCM_THREADS").ok().and_then(|v| v.trim().parse::<usize>().ok()) {
        if cap > 0 {
            builder = builder.num_threads(cap);
        }
    }
    builder.build().map_err(|e| Error::InvalidArgument(format!("thread pool: {e}")))
}

/// Runs `work` for each replication index in `range`, returning results in
/// index order.
fn replicate<T, F>(seed: u64, range: Range<u64>, work: F) -> Result<Vec<Result<T>>>
where
    T: Send,
    F: Fn(&mut ChaCha8Rng) -> Result<T> + Sync,
{
    let pool = pool()?;
    Ok(pool.install(|| {
        range
            .into_par_iter()
            .map(|j| {
                let mut rng = replication_rng(seed, j);
                work(&mut rng)
            })
            .collect()
    }))
}

fn check_failures(failed: usize, total: usize) -> Result<()> {
    if total == 0 || failed as f64 > MAX_FAILURE_RATE * total as f64 {
        return Err(Error::ExperimentUnstable { failed, total });
    }
    Ok(())
}

fn split_ok<T>(results: Vec<Result<T>>) -> (Vec<T>, usize) {
    let total = results.len();
    let ok: Vec<T> = results.into_iter().flatten().collect();
    let failed = total - ok.len();
    (ok, failed)
}

fn check_replications(n_rep: usize) -> Result<()> {
    if n_rep == 0 {
        return Err(Error::InvalidArgument("at least one replication is required".into()));
    }
    Ok(())
}

/// Values for the underfit, overfit and additive candidate models.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelTriple<T> {
    pub underfit: T,
    pub overfit: T,
    pub additive: T,
}

impl<T> ModelTriple<T> {
    pub fn map<U>(&self, mut f: impl FnMut(&T) -> U) -> ModelTriple<U> {
        ModelTriple { underfit: f(&self.underfit), overfit: f(&self.overfit), additive: f(&self.additive) }
    }
}

/// The three candidate models of the AIC comparison at the scenario's group
/// sizes: a shared profile of the lowest true degree, a shared profile of
/// the highest true degree, and the additive model with each group's true
/// degree.
pub fn candidate_models(scenario: &SimulationScenario) -> Result<ModelTriple<ModelSpec>> {
    let degrees = scenario.true_degrees();
    let lo = *degrees.iter().min().expect("scenario has groups");
    let hi = *degrees.iter().max().expect("scenario has groups");
    Ok(ModelTriple {
        underfit: ModelSpec::shared_profile(&scenario.group_sizes, &scenario.timepoints, lo)?,
        overfit: ModelSpec::shared_profile(&scenario.group_sizes, &scenario.timepoints, hi)?,
        additive: scenario.true_spec()?,
    })
}

/// Per-replication AICs for a contiguous range of replication indices.
/// Partials over disjoint adjacent ranges merge into the full-run result.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McPartial {
    pub n: usize,
    pub start: u64,
    /// One entry per replication index; `None` marks a failed replication.
    pub draws: Vec<Option<ModelTriple<f64>>>,
    pub n_params: ModelTriple<usize>,
    pub elapsed_secs: f64,
}

impl McPartial {
    pub fn end(&self) -> u64 {
        self.start + self.draws.len() as u64
    }

    /// Appends `other`, which must start where `self` ends.
    pub fn merge(mut self, other: McPartial) -> Result<McPartial> {
        if other.n != self.n || other.start != self.end() {
            return Err(Error::InvalidArgument(format!(
                "cannot pool replications {}..{} (n = {}) after {}..{} (n = {})",
                other.start,
                other.end(),
                other.n,
                self.start,
                self.end(),
                self.n
            )));
        }
        self.draws.extend(other.draws);
        self.elapsed_secs += other.elapsed_secs;
        Ok(self)
    }

    pub fn into_report(self, scenario: &SimulationScenario, retain_draws: bool) -> Result<McReport> {
        let total = self.draws.len();
        let ok: Vec<ModelTriple<f64>> = self.draws.into_iter().flatten().collect();
        let failures = total - ok.len();
        check_failures(failures, total)?;
        let column = |f: fn(&ModelTriple<f64>) -> f64| ok.iter().map(f).collect::<Vec<f64>>();
        let cols = ModelTriple {
            underfit: column(|d| d.underfit),
            overfit: column(|d| d.overfit),
            additive: column(|d| d.additive),
        };
        Ok(McReport {
            n: self.n,
            rho: scenario.rho(),
            seed: scenario.seed,
            replications: total,
            failures,
            n_params: self.n_params,
            aic: cols.map(|c| mean(c)),
            summaries: cols.map(|c| MarginalStats::from_sample(c)),
            draws: retain_draws.then_some(ok),
            elapsed_secs: self.elapsed_secs,
        })
    }
}

/// Averaged AICs of the three candidates at one sample size.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McReport {
    pub n: usize,
    pub rho: Option<f64>,
    pub seed: u64,
    pub replications: usize,
    pub failures: usize,
    pub n_params: ModelTriple<usize>,
    /// Arithmetic mean of the per-replication AICs.
    pub aic: ModelTriple<f64>,
    pub summaries: ModelTriple<MarginalStats>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub draws: Option<Vec<ModelTriple<f64>>>,
    pub elapsed_secs: f64,
}

impl McReport {
    /// `AIC(ψ_u) − AIC(ψ_a)`.
    pub fn underfit_gap(&self) -> f64 {
        self.aic.underfit - self.aic.additive
    }

    /// `AIC(ψ_o) − AIC(ψ_a)`.
    pub fn overfit_gap(&self) -> f64 {
        self.aic.overfit - self.aic.additive
    }
}

/// Replications `range` of the AIC comparison at total sample size `n`.
pub fn mc_aic_range(scenario: &SimulationScenario, n: usize, range: Range<u64>) -> Result<McPartial> {
    let sc = scenario.with_total_n(n)?;
    let models = candidate_models(&sc)?;
    let factor = SpdFactor::new(&sc.sigma())?;
    let start = range.start;
    let clock = Instant::now();
    let results = replicate(stream_seed(scenario, TAG_AIC, n), range, |rng| {
        let y = sc.generate_with(&factor, rng);
        Ok(ModelTriple {
            underfit: fit(&y, &models.underfit)?.aic,
            overfit: fit(&y, &models.overfit)?.aic,
            additive: fit(&y, &models.additive)?.aic,
        })
    })?;
    Ok(McPartial {
        n,
        start,
        draws: results.into_iter().map(Result::ok).collect(),
        n_params: models.map(ModelSpec::n_params),
        elapsed_secs: clock.elapsed().as_secs_f64(),
    })
}

/// AIC comparison of the candidate models at every `n` in `n_grid`.
pub fn mc_aic(scenario: &SimulationScenario, n_grid: &[usize], replications: usize) -> Result<Vec<McReport>> {
    check_replications(replications)?;
    if n_grid.is_empty() {
        return Err(Error::EmptyGrid);
    }
    n_grid
        .iter()
        .map(|&n| mc_aic_range(scenario, n, 0..replications as u64)?.into_report(scenario, false))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConsistencyRow {
    pub n: usize,
    pub replications: usize,
    pub failures: usize,
    /// Mean of `‖Σ̂ − Σ₀‖_max`.
    pub sigma_error: f64,
    /// Mean of `‖Θ̂_i − Θ_i‖_max`, per block.
    pub coefficient_error: Vec<f64>,
    /// Mean of `‖(Z_i'Σ̂⁻¹Z_i)⁻¹ − (Z_i'Σ₀⁻¹Z_i)⁻¹‖_max`, per block.
    pub column_factor_error: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConsistencyReport {
    pub seed: u64,
    pub rows: Vec<ConsistencyRow>,
}

impl ConsistencyReport {
    pub fn sigma_errors(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.sigma_error).collect()
    }

    pub fn coefficient_errors(&self, block: usize) -> Vec<f64> {
        self.rows.iter().map(|r| r.coefficient_error[block]).collect()
    }
}

/// Number of adjacent pairs with `xs[j+1] >= xs[j]`.
pub fn count_inversions(xs: &[f64]) -> usize {
    xs.windows(2).filter(|w| w[1] >= w[0]).count()
}

/// Estimation error of the true model as the sample size grows.
pub fn consistency_sweep(scenario: &SimulationScenario, n_grid: &[usize], replications: usize) -> Result<ConsistencyReport> {
    check_replications(replications)?;
    if n_grid.is_empty() {
        return Err(Error::EmptyGrid);
    }
    if n_grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidArgument("n grid must be strictly increasing".into()));
    }
    let mut rows = Vec::with_capacity(n_grid.len());
    for &n in n_grid {
        let sc = scenario.with_total_n(n)?;
        let spec = sc.true_spec()?;
        let truth = sc.true_coefficients();
        let sigma0 = sc.sigma();
        let factor = SpdFactor::new(&sigma0)?;
        let true_cov = CovarianceEstimate::from_matrix(sigma0.clone(), spec.r())?;
        let true_col: Vec<Matrix> =
            (0..spec.k()).map(|i| profile_gram_inverse(&true_cov, &spec, i)).collect::<Result<_>>()?;
        let results = replicate(stream_seed(scenario, TAG_CONSISTENCY, n), 0..replications as u64, |rng| {
            let y = sc.generate_with(&factor, rng);
            let f = fit(&y, &spec)?;
            let sigma_err = max_abs(&(f.covariance.sigma_hat() - &sigma0));
            let mut errs = Vec::with_capacity(2 * spec.k());
            for i in 0..spec.k() {
                errs.push(max_abs(&(&f.coefficients[i] - &truth[i])));
            }
            for (i, col) in true_col.iter().enumerate() {
                errs.push(max_abs(&(profile_gram_inverse(&f.covariance, &spec, i)? - col)));
            }
            Ok((sigma_err, errs))
        })?;
        let (ok, failures) = split_ok(results);
        check_failures(failures, replications)?;
        let k = spec.k();
        let avg = |j: usize| mean(&ok.iter().map(|(_, e)| e[j]).collect::<Vec<_>>());
        rows.push(ConsistencyRow {
            n,
            replications,
            failures,
            sigma_error: mean(&ok.iter().map(|(s, _)| *s).collect::<Vec<_>>()),
            coefficient_error: (0..k).map(avg).collect(),
            column_factor_error: (k..2 * k).map(avg).collect(),
        });
    }
    Ok(ConsistencyReport { seed: scenario.seed, rows })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BiasBlock {
    /// `mean(Θ̂_i) − Θ_i`, row-stacked.
    pub mean_error: Vec<f64>,
    /// Empirical standard error of each mean.
    pub std_error: Vec<f64>,
    /// Largest `|mean_error / std_error|`.
    pub max_abs_z: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BiasReport {
    pub n: usize,
    pub seed: u64,
    pub replications: usize,
    pub failures: usize,
    pub blocks: Vec<BiasBlock>,
}

impl BiasReport {
    pub fn max_abs_z(&self) -> f64 {
        self.blocks.iter().map(|b| b.max_abs_z).fold(0.0, f64::max)
    }
}

/// Monte Carlo mean of `Θ̂_i − Θ_i` for the true model at the scenario's
/// current group sizes.
pub fn bias_check(scenario: &SimulationScenario, replications: usize) -> Result<BiasReport> {
    check_replications(replications)?;
    let spec = scenario.true_spec()?;
    let truth = scenario.true_coefficients();
    let factor = SpdFactor::new(&scenario.sigma())?;
    let n = scenario.n();
    let results = replicate(stream_seed(scenario, TAG_BIAS, n), 0..replications as u64, |rng| {
        let y = scenario.generate_with(&factor, rng);
        let f = fit(&y, &spec)?;
        Ok((0..spec.k()).map(|i| vec_rows(&(&f.coefficients[i] - &truth[i]))).collect::<Vec<_>>())
    })?;
    let (ok, failures) = split_ok(results);
    check_failures(failures, replications)?;
    let blocks = (0..spec.k())
        .map(|i| {
            let d = ok[0][i].nrows();
            let draws = Matrix::from_fn(ok.len(), d, |r, c| ok[r][i][c]);
            let stats: Vec<MarginalStats> = (0..d)
                .map(|c| MarginalStats::from_sample(&draws.column(c).iter().copied().collect::<Vec<_>>()))
                .collect();
            let mean_error: Vec<f64> = stats.iter().map(|s| s.mean).collect();
            let std_error: Vec<f64> = stats.iter().map(|s| (s.variance / ok.len() as f64).sqrt()).collect();
            let max_abs_z = mean_error
                .iter()
                .zip(&std_error)
                .map(|(m, s)| if *s > 0.0 { (m / s).abs() } else { 0.0 })
                .fold(0.0, f64::max);
            BiasBlock { mean_error, std_error, max_abs_z }
        })
        .collect();
    Ok(BiasReport { n, seed: scenario.seed, replications, failures, blocks })
}

struct NormalityDraw {
    /// `√n vec(Θ̂_j − Θ_j)` for every block.
    coefficients: Vec<nalgebra::DVector<f64>>,
    /// `√n vec(Σ̂ − Σ₀)`.
    sigma: nalgebra::DVector<f64>,
    /// Standardized statistic under the true null, row-stacked.
    statistic: nalgebra::DVector<f64>,
    phi2: Matrix,
}

fn mean_matrix<'a>(ms: impl ExactSizeIterator<Item = &'a Matrix>) -> Matrix {
    let count = ms.len() as f64;
    let mut acc: Option<Matrix> = None;
    for m in ms {
        acc = Some(match acc {
            Some(a) => a + m,
            None => m.clone(),
        });
    }
    acc.map_or_else(|| Matrix::zeros(0, 0), |a| a / count)
}

fn rows_matrix(draws: &[&nalgebra::DVector<f64>]) -> Matrix {
    let d = draws.first().map_or(0, |v| v.nrows());
    Matrix::from_fn(draws.len(), d, |r, c| draws[r][c])
}

/// Compares the Monte Carlo law of `√n vec(Θ̂_i − Θ_i)` at total sample size
/// `n` with the limit `R_i⁻¹ ⊗ (Z_i'Σ₀⁻¹Z_i)⁻¹`, and screens the
/// standardized statistic for `C = I`, `V` spanning the null space of
/// `Θ_i`.
pub fn normality_check(
    scenario: &SimulationScenario,
    n: usize,
    replications: usize,
    block: usize,
) -> Result<AsymptoticReport> {
    if replications < 1000 {
        return Err(Error::InvalidArgument(format!("normality check needs at least 1000 replications, got {replications}")));
    }
    let sc = scenario.with_total_n(n)?;
    let spec = sc.true_spec()?;
    if block >= spec.k() {
        return Err(Error::InvalidArgument(format!("block {block} out of range (k = {})", spec.k())));
    }
    let truth = sc.true_coefficients();
    let sigma0 = sc.sigma();
    let factor = SpdFactor::new(&sigma0)?;
    let true_cov = CovarianceEstimate::from_matrix(sigma0.clone(), spec.r())?;
    let row = row_factor(&spec, block);
    let column = profile_gram_inverse(&true_cov, &spec, block)?;
    let theoretical = kron(&row, &column);
    let m = spec.block(block).m();
    let v = null_space_rows(&truth[block]);
    let hypothesis = (v.nrows() > 0).then(|| Hypothesis::new(block, Matrix::identity(m, m), v));
    let root_n = (n as f64).sqrt();

    let results = replicate(stream_seed(scenario, TAG_NORMALITY, n), 0..replications as u64, |rng| {
        let y = sc.generate_with(&factor, rng);
        let f = fit(&y, &spec)?;
        let coefficients =
            (0..spec.k()).map(|j| vec_rows(&(&f.coefficients[j] - &truth[j])).column(0) * root_n).collect();
        let sigma = vec_rows(&(f.covariance.sigma_hat() - &sigma0)).column(0) * root_n;
        let statistic = match &hypothesis {
            Some(h) => vec_rows(&standardized_statistic(&f, &spec, h)?).column(0).into_owned(),
            None => nalgebra::DVector::zeros(0),
        };
        Ok(NormalityDraw { coefficients, sigma, statistic, phi2: phi2_from_residuals(&f.residual) })
    })?;
    let (ok, failures) = split_ok(results);
    check_failures(failures, replications)?;

    let own = rows_matrix(&ok.iter().map(|d| &d.coefficients[block]).collect::<Vec<_>>());
    let empirical = covariance(&own);
    let relative_error = max_abs(&(&empirical - &theoretical)) / max_abs(&theoretical);
    let cross_block = (0..spec.k())
        .filter(|&j| j != block)
        .map(|j| {
            let other = rows_matrix(&ok.iter().map(|d| &d.coefficients[j]).collect::<Vec<_>>());
            (j, CrossCovariance::new(&own, &other))
        })
        .collect();
    let sigma_draws = rows_matrix(&ok.iter().map(|d| &d.sigma).collect::<Vec<_>>());
    let sigma_cross = CrossCovariance::new(&own, &sigma_draws);
    let column_stats = |a: &Matrix| -> Vec<MarginalStats> {
        (0..a.ncols()).map(|c| MarginalStats::from_sample(&a.column(c).iter().copied().collect::<Vec<_>>())).collect()
    };
    let statistic = rows_matrix(&ok.iter().map(|d| &d.statistic).collect::<Vec<_>>());

    Ok(AsymptoticReport {
        block,
        n,
        seed: scenario.seed,
        replications,
        failures,
        row_factor: row,
        column_factor: column,
        theoretical,
        empirical,
        relative_error,
        cross_block,
        sigma_cross,
        sigma_law: covariance(&sigma_draws),
        phi2_empirical: mean_matrix(ok.iter().map(|d| &d.phi2)),
        phi2_gaussian: crate::inference::gaussian_phi2(&sigma0),
        marginals: column_stats(&own),
        statistic: column_stats(&statistic),
    })
}
