use std::path::PathBuf;
use std::process::ExitCode;

use agcm::data::{dental_dataset, load_csv, CsvSchema, LongitudinalDataset};
use agcm::report::{self, FitReport, SimulatedData};
use agcm::selection::{select_degrees_with_tol, DEFAULT_TIE_TOL};
use agcm::simulation::{
    bias_check, consistency_sweep, mc_aic, normality_check, ErrorLaw, GroupTwoTruth, SimulationScenario,
    DEFAULT_AIC_REPLICATIONS, DEFAULT_NORMALITY_REPLICATIONS,
};
use agcm::{fit, Error, ErrorKind};
use clap::{Args, Parser, Subcommand, ValueEnum};

/// Additive growth curve models: fitting, AIC degree selection and Monte
/// Carlo diagnostics.
///
/// Timepoints are used exactly as given in the CSV header. Fitted values,
/// RMSS and AIC do not depend on how time is coded, because a full
/// polynomial basis spans the same column space under any affine recoding.
#[derive(Parser, Debug)]
#[command(name = "agcm", version)]
struct Cli {
    /// Seed for randomized commands; a fresh seed is drawn and reported when
    /// omitted.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Output file (stdout when omitted). With `--format svg` the chart data
    /// is also written next to it with a `.csv` extension.
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    #[arg(long, global = true, value_enum, default_value_t = Format::Text)]
    format: Format,

    /// Absolute AIC difference treated as a tie in `select`.
    #[arg(long, global = true, default_value_t = DEFAULT_TIE_TOL)]
    tol: f64,

    #[command(subcommand)]
    command: Command,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
enum Format {
    Json,
    Text,
    Csv,
    Svg,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Fit the additive model with explicit per-group degrees.
    Fit {
        #[command(flatten)]
        input: Input,
        /// Comma-separated degrees, one per group in layout order.
        #[arg(long, value_delimiter = ',', required = true)]
        degrees: Vec<usize>,
    },
    /// Fit every degree combination up to the given maxima and pick the
    /// minimum-AIC model.
    Select {
        #[command(flatten)]
        input: Input,
        /// Comma-separated maximum degrees, one per group (degrees start at 1).
        #[arg(long, value_delimiter = ',', default_value = "3,3")]
        max_degrees: Vec<usize>,
    },
    /// Generate one dataset from the two-group scenario.
    Simulate {
        #[command(flatten)]
        scenario: ScenarioArgs,
        /// Total sample size (even).
        #[arg(long, default_value_t = 40)]
        n: usize,
    },
    /// Average AIC of the underfit, overfit and additive models over
    /// replications, for each sample size.
    McAic {
        #[command(flatten)]
        scenario: ScenarioArgs,
        #[arg(long, value_delimiter = ',', default_value = "20,40,80,160,320")]
        n_grid: Vec<usize>,
        #[arg(long, default_value_t = DEFAULT_AIC_REPLICATIONS)]
        replications: usize,
    },
    /// Consistency, normality or unbiasedness diagnostics.
    Diag {
        #[arg(value_enum)]
        suite: Suite,
        #[command(flatten)]
        scenario: ScenarioArgs,
        /// Sample sizes for the consistency sweep.
        #[arg(long, value_delimiter = ',', default_value = "40,160,640")]
        n_grid: Vec<usize>,
        /// Sample size for the normality and bias checks.
        #[arg(long, default_value_t = 400)]
        n: usize,
        #[arg(long, default_value_t = DEFAULT_NORMALITY_REPLICATIONS)]
        replications: usize,
        /// Block (1-based) examined by the normality check.
        #[arg(long, default_value_t = 1)]
        block: usize,
    },
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
enum Suite {
    Consistency,
    Normality,
    Bias,
}

#[derive(Args, Debug)]
struct Input {
    /// CSV file with one row per subject.
    #[arg(long, conflicts_with = "dental", required_unless_present = "dental")]
    data: Option<PathBuf>,
    /// Use the embedded dental dataset.
    #[arg(long)]
    dental: bool,
    #[arg(long, default_value = "group")]
    group_column: String,
    /// Comma-separated group labels fixing the layout order.
    #[arg(long, value_delimiter = ',')]
    groups: Option<Vec<String>>,
}

impl Input {
    fn load(&self) -> agcm::Result<LongitudinalDataset> {
        match &self.data {
            Some(path) => {
                let schema = CsvSchema { group_column: self.group_column.clone(), groups: self.groups.clone() };
                load_csv(path, &schema)
            }
            None => Ok(dental_dataset()),
        }
    }
}

#[derive(Args, Debug)]
struct ScenarioArgs {
    /// Serial correlation of the errors, in [0, 1).
    #[arg(long, default_value_t = 0.5)]
    rho: f64,
    #[arg(long, value_enum, default_value_t = Law::Gaussian)]
    errors: Law,
    /// True cubic for the second group: `displayed` is 3 + 2t - 3t^2 + 2t^3,
    /// `polynomial` is 3 + 2t + t^2 - t^3.
    #[arg(long, value_enum, default_value_t = Truth::Displayed)]
    truth: Truth,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
enum Law {
    Gaussian,
    Uniform,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
enum Truth {
    Displayed,
    Polynomial,
}

impl ScenarioArgs {
    fn build(&self, n: usize, seed: u64) -> agcm::Result<SimulationScenario> {
        let truth = match self.truth {
            Truth::Displayed => GroupTwoTruth::Displayed,
            Truth::Polynomial => GroupTwoTruth::PolynomialText,
        };
        let law = match self.errors {
            Law::Gaussian => ErrorLaw::Gaussian,
            Law::Uniform => ErrorLaw::SymmetricUniform,
        };
        Ok(SimulationScenario::two_group_with(n, self.rho, seed, truth)?.with_error_law(law))
    }
}

/// Rendered outputs; the first goes to `--out` or stdout.
struct Output {
    main: String,
    sidecar_csv: Option<String>,
}

impl From<String> for Output {
    fn from(main: String) -> Self {
        Self { main, sidecar_csv: None }
    }
}

fn unsupported(format: Format, command: &str) -> Error {
    Error::InvalidArgument(format!("format {format:?} is not available for {command}").to_lowercase())
}

fn seed_or_fresh(seed: Option<u64>) -> u64 {
    seed.unwrap_or_else(|| {
        let now = std::time::SystemTime::now().duration_since(std::time::UNIX_EPOCH).unwrap_or_default();
        let s = agcm::simulation::rng::derive_seed(now.as_nanos() as u64, u64::from(std::process::id()));
        eprintln!("seed: {s}");
        s
    })
}

fn run(cli: &Cli) -> agcm::Result<Output> {
    let format = cli.format;
    match &cli.command {
        Command::Fit { input, degrees } => {
            let data = input.load()?;
            let spec = data.spec(degrees)?;
            let result = fit(&data.y, &spec)?;
            let labels: Vec<String> = data.group_labels().iter().map(|s| s.to_string()).collect();
            Ok(match format {
                Format::Text => report::fit_table(&result, &labels).into(),
                Format::Csv => report::fit_csv(&result).into(),
                Format::Json => report::to_json(&FitReport {
                    groups: labels,
                    degrees: degrees.clone(),
                    timepoints: data.timepoints.clone(),
                    fit: result,
                })?
                .into(),
                Format::Svg => return Err(unsupported(format, "fit")),
            })
        }
        Command::Select { input, max_degrees } => {
            let data = input.load()?;
            let result = select_degrees_with_tol(&data, max_degrees, cli.tol)?;
            Ok(match format {
                Format::Text => report::selection_table(&result).into(),
                Format::Csv => report::selection_csv(&result).into(),
                Format::Json => report::to_json(&result)?.into(),
                Format::Svg => return Err(unsupported(format, "select")),
            })
        }
        Command::Simulate { scenario, n } => {
            let seed = seed_or_fresh(cli.seed);
            let sc = scenario.build(*n, seed)?;
            let y = sc.generate()?;
            let labels = ["placebo", "treated"];
            let rows = (0..y.nrows())
                .map(|i| {
                    let g = usize::from(i >= sc.group_sizes[0]);
                    (labels[g].to_string(), y.row(i).iter().copied().collect())
                })
                .collect();
            let data = LongitudinalDataset::from_rows(sc.timepoints.clone(), rows, None)?;
            Ok(match format {
                Format::Csv | Format::Text => data.to_csv_string("group")?.into(),
                Format::Json => report::to_json(&SimulatedData { scenario: sc, data })?.into(),
                Format::Svg => return Err(unsupported(format, "simulate")),
            })
        }
        Command::McAic { scenario, n_grid, replications } => {
            let seed = seed_or_fresh(cli.seed);
            let first = n_grid.first().copied().ok_or(Error::EmptyGrid)?;
            let sc = scenario.build(first, seed)?;
            let reports = mc_aic(&sc, n_grid, *replications)?;
            Ok(match format {
                Format::Text => report::mc_table(&reports).into(),
                Format::Csv => report::mc_csv(&reports).into(),
                Format::Json => report::to_json(&reports)?.into(),
                Format::Svg => Output {
                    main: report::mc_svg(&reports, &format!("Average AIC, rho = {}", scenario.rho)),
                    sidecar_csv: Some(report::mc_csv(&reports)),
                },
            })
        }
        Command::Diag { suite, scenario, n_grid, n, replications, block } => {
            let seed = seed_or_fresh(cli.seed);
            match suite {
                Suite::Consistency => {
                    let first = n_grid.first().copied().ok_or(Error::EmptyGrid)?;
                    let r = consistency_sweep(&scenario.build(first, seed)?, n_grid, *replications)?;
                    Ok(match format {
                        Format::Text => report::consistency_table(&r).into(),
                        Format::Csv => report::consistency_csv(&r).into(),
                        Format::Json => report::to_json(&r)?.into(),
                        Format::Svg => return Err(unsupported(format, "diag")),
                    })
                }
                Suite::Normality => {
                    if *block == 0 {
                        return Err(Error::InvalidArgument("blocks are numbered from 1".into()));
                    }
                    let r = normality_check(&scenario.build(*n, seed)?, *n, *replications, block - 1)?;
                    Ok(match format {
                        Format::Text => report::normality_text(&r).into(),
                        Format::Json => report::to_json(&r)?.into(),
                        _ => return Err(unsupported(format, "diag normality")),
                    })
                }
                Suite::Bias => {
                    let r = bias_check(&scenario.build(*n, seed)?, *replications)?;
                    Ok(match format {
                        Format::Json => report::to_json(&r)?.into(),
                        Format::Text => {
                            let mut s = format!("n = {} replications = {} failures = {}\n", r.n, r.replications, r.failures);
                            for (i, b) in r.blocks.iter().enumerate() {
                                s.push_str(&format!("block {}: max |mean error| / SE = {:.3}\n", i + 1, b.max_abs_z));
                            }
                            s.into()
                        }
                        _ => return Err(unsupported(format, "diag bias")),
                    })
                }
            }
        }
    }
}

fn emit(cli: &Cli, output: Output) -> agcm::Result<()> {
    match &cli.out {
        Some(path) => {
            report::write_file(path, &output.main)?;
            if let Some(csv) = output.sidecar_csv {
                report::write_file(&path.with_extension("csv"), &csv)?;
            }
        }
        None => print!("{}", output.main),
    }
    Ok(())
}

fn exit_code(e: &Error) -> u8 {
    match e.kind() {
        ErrorKind::Validation => 2,
        ErrorKind::Numeric => 3,
        ErrorKind::Io => 4,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli).and_then(|out| emit(&cli, out)) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
