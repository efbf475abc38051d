//! Command-line front end. Every subcommand is a thin adapter over the library.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use nalgebra::DVector;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::estimators::{fit, Fitter};
use crate::filters::{verify_catalog, FilterSpec, Method};
use crate::inference::{coverage_experiment, wild_bootstrap, BootstrapOptions, CoverageConfig};
use crate::io::{read_json, read_matrix, read_vector, write_text};
use crate::simulation::{run_experiment, table_csv, threshold_grid, threshold_sweep, SimulationConfig};
use crate::solvers::{Scheme, SolverConfig, StoppingRule};
use crate::spectral::RegressionProblem;

#[derive(Debug, Parser)]
#[command(name = "specreg", version, about = "Spectral-filter regression, debiasing and bootstrap inference")]
pub struct Cli {
    /// Worker threads for parallel sections (default: all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit one method to X.csv and Y.csv and print the estimate bundle.
    Fit(FitArgs),
    /// Run a simulation (or coverage study) described by a JSON config.
    Simulate(SimulateArgs),
    /// Wild-bootstrap confidence regions for a closed-form fit.
    Bootstrap(BootstrapArgs),
    /// Error of a thresholded estimate against a known truth over a grid.
    Sweep(SweepArgs),
    /// Check the generator conditions for every method.
    VerifyFilters(VerifyArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MethodName {
    #[value(alias = "ls")]
    LeastSquares,
    #[value(alias = "sc")]
    SpectralCutoff,
    Ridge,
    Landweber,
    Showalter,
    Soar,
    #[value(alias = "hbf")]
    HeavyBall,
    #[value(alias = "far")]
    Fractional,
    #[value(alias = "ark")]
    Accelerated,
    Nesterov,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum StopName {
    Discrepancy,
    Aosr,
    Fixed,
}

/// Method and hyperparameters, mirroring [`FilterSpec`] and [`SolverConfig`].
#[derive(Debug, Clone, Args)]
pub struct MethodArgs {
    #[arg(long, value_enum)]
    pub method: MethodName,
    /// Regularization parameter for closed-form fits.
    #[arg(long)]
    pub alpha: Option<f64>,
    /// Raw step size Δt.
    #[arg(long)]
    pub dt: Option<f64>,
    #[arg(long, default_value_t = 5.0)]
    pub eta: f64,
    #[arg(long, default_value_t = 1.5)]
    pub kappa: f64,
    #[arg(long, default_value_t = 0.5)]
    pub s_star: f64,
    #[arg(long, default_value_t = 1.0)]
    pub rho: f64,
    #[arg(long, default_value_t = 0.5)]
    pub vartheta: f64,
    #[arg(long, default_value_t = 5.0)]
    pub omega: f64,
    /// Run the iterative solver with this stopping rule instead of the closed form.
    #[arg(long, value_enum)]
    pub stop: Option<StopName>,
    #[arg(long, default_value_t = 1.0)]
    pub varsigma: f64,
    /// ‖e‖ for the discrepancy principle.
    #[arg(long)]
    pub noise_norm: Option<f64>,
    /// Lower clamp for `--stop aosr`.
    #[arg(long, default_value_t = 1)]
    pub k_min: usize,
    #[arg(long, default_value_t = 5000)]
    pub k_max: usize,
    /// Step count for `--stop fixed`.
    #[arg(long)]
    pub k: Option<usize>,
    /// True coefficients (CSV), required by `--stop aosr`.
    #[arg(long)]
    pub truth: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct FitArgs {
    #[command(flatten)]
    pub method: MethodArgs,
    /// Hard threshold b_n.
    #[arg(long, default_value_t = 0.0)]
    pub bn: f64,
    #[arg(long)]
    pub output: Option<PathBuf>,
    pub x: PathBuf,
    pub y: PathBuf,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long)]
    pub config: PathBuf,
    /// Master seed; overrides the one in the config.
    #[arg(long)]
    pub seed: u64,
    /// Treat the config as a coverage study.
    #[arg(long)]
    pub coverage: bool,
    #[arg(long)]
    pub output: Option<PathBuf>,
    /// Also write the per-method table of the first replicate as CSV.
    #[arg(long)]
    pub table: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct BootstrapArgs {
    #[command(flatten)]
    pub method: MethodArgs,
    #[arg(long)]
    pub bn: f64,
    #[arg(long = "B", alias = "replicates", default_value_t = 500)]
    pub replicates: usize,
    #[arg(long, default_value_t = 0.05)]
    pub alpha_star: f64,
    #[arg(long)]
    pub seed: u64,
    #[arg(long)]
    pub output: Option<PathBuf>,
    pub x: PathBuf,
    pub y: PathBuf,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    /// Estimate to threshold (CSV vector).
    #[arg(long)]
    pub estimate: PathBuf,
    #[arg(long)]
    pub truth: PathBuf,
    #[arg(long, default_value_t = 5e-4)]
    pub step: f64,
    /// Per-threshold curve as CSV (`b,error`).
    #[arg(long)]
    pub curve: Option<PathBuf>,
    #[arg(long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct VerifyArgs {
    /// Qualification order d.
    #[arg(long, default_value_t = 1.0)]
    pub d: f64,
    #[arg(long)]
    pub output: Option<PathBuf>,
}

/// Process exit status for an error: 2 bad arguments, 3 unreadable input, 4 numerical failure.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Input(_) => 2,
        Error::Parse { .. } | Error::Io { .. } => 3,
        Error::RankZero | Error::ClosedFormUnavailable { .. } | Error::Divergence { .. } | Error::Contract(_) => 4,
    }
}

/// Single-line JSON error record.
pub fn error_json(kind: &str, message: &str) -> String {
    serde_json::json!({ "error": kind, "message": message }).to_string()
}

impl MethodArgs {
    fn method(&self, dt: f64) -> Method {
        match self.method {
            MethodName::LeastSquares => Method::LeastSquares,
            MethodName::SpectralCutoff => Method::SpectralCutoff,
            MethodName::Ridge => Method::Ridge,
            MethodName::Landweber => Method::Landweber { dt },
            MethodName::Showalter => Method::Showalter,
            MethodName::Soar => Method::Soar {
                s_star: self.s_star,
                rho: self.rho,
            },
            MethodName::HeavyBall => Method::HeavyBall { eta: self.eta },
            MethodName::Fractional => Method::Fractional { vartheta: self.vartheta },
            MethodName::Accelerated => Method::Accelerated { kappa: self.kappa },
            MethodName::Nesterov => Method::Nesterov { dt, omega: self.omega },
        }
    }

    fn scheme(&self) -> Result<Scheme> {
        Ok(match self.method {
            MethodName::Landweber => Scheme::Landweber,
            MethodName::Showalter => Scheme::Showalter,
            MethodName::Soar => Scheme::Soar {
                s_star: self.s_star,
                rho: self.rho,
                extrapolated: false,
            },
            MethodName::HeavyBall => Scheme::HeavyBall { eta: self.eta },
            MethodName::Fractional => Scheme::Fractional { vartheta: self.vartheta },
            MethodName::Accelerated => Scheme::Accelerated { kappa: self.kappa },
            MethodName::Nesterov => Scheme::Nesterov { omega: self.omega },
            other => {
                return Err(Error::Input(format!("{other:?} has no iterative solver; drop --stop")));
            }
        })
    }

    /// Closed-form filter for the flags, ignoring `--stop`.
    pub fn filter_spec(&self) -> Result<FilterSpec> {
        if self.method == MethodName::LeastSquares {
            return Ok(FilterSpec::least_squares());
        }
        let alpha = self
            .alpha
            .ok_or_else(|| Error::Input("--alpha is required for a closed-form fit".into()))?;
        let needs_dt = matches!(self.method, MethodName::Landweber | MethodName::Nesterov);
        let dt = match (needs_dt, self.dt) {
            (true, None) => return Err(Error::Input("--dt is required for this method".into())),
            (_, dt) => dt.unwrap_or(1.0),
        };
        FilterSpec::new(self.method(dt), alpha)
    }

    pub fn fitter(&self, p: usize) -> Result<Fitter> {
        let Some(stop) = self.stop else {
            return Ok(Fitter::Spectral(self.filter_spec()?));
        };
        let dt = self
            .dt
            .ok_or_else(|| Error::Input("--dt is required for an iterative fit".into()))?;
        let config = SolverConfig::new(self.scheme()?, dt)?;
        let rule = match stop {
            StopName::Discrepancy => {
                let norm = self
                    .noise_norm
                    .ok_or_else(|| Error::Input("--noise-norm is required for --stop discrepancy".into()))?;
                StoppingRule::discrepancy(self.varsigma, norm, self.k_max)
            }
            StopName::Aosr => {
                let path = self
                    .truth
                    .as_ref()
                    .ok_or_else(|| Error::Input("--truth is required for --stop aosr".into()))?;
                StoppingRule::adjusted_optimal(read_vector(path)?, self.k_min, self.k_max)
            }
            StopName::Fixed => StoppingRule::fixed(
                self.k
                    .ok_or_else(|| Error::Input("--k is required for --stop fixed".into()))?,
            ),
        };
        rule.validate(p)?;
        Ok(Fitter::Iterative { config, stop: rule })
    }
}

fn load_problem(x: &Path, y: &Path) -> Result<RegressionProblem> {
    let x = read_matrix(x)?;
    let y = read_vector(y)?;
    RegressionProblem::new(x, y)
}

fn emit<T: Serialize>(value: &T, output: Option<&Path>) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| Error::Contract(e.to_string()))?;
    text.push('\n');
    match output {
        Some(path) => write_text(path, &text),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

/// Execute a parsed invocation.
pub fn dispatch(cli: Cli) -> Result<()> {
    if let Some(threads) = cli.threads {
        if threads == 0 {
            return Err(Error::Input("--threads must be at least 1".into()));
        }
        // Fails only if a pool already exists, which the thread count cannot change anyway.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(threads).build_global();
    }
    match cli.command {
        Command::Fit(args) => {
            let problem = load_problem(&args.x, &args.y)?;
            let fitter = args.method.fitter(problem.p())?;
            let bundle = fit(&problem, &fitter, args.bn)?;
            emit(&bundle, args.output.as_deref())
        }
        Command::Simulate(args) => {
            if args.coverage {
                let mut config: CoverageConfig = read_json(&args.config)?;
                config.seed = args.seed;
                let report = coverage_experiment(&config)?;
                return emit(&report, args.output.as_deref());
            }
            let mut config: SimulationConfig = read_json(&args.config)?;
            config.seed = args.seed;
            let reports = run_experiment(&config)?;
            if let Some(path) = &args.table {
                write_text(path, &table_csv(&reports[0])?)?;
            }
            emit(&reports, args.output.as_deref())
        }
        Command::Bootstrap(args) => {
            if args.method.stop.is_some() {
                return Err(Error::Input("bootstrap uses the closed form; pass --alpha instead of --stop".into()));
            }
            let problem = load_problem(&args.x, &args.y)?;
            let spec = args.method.filter_spec()?;
            let options = BootstrapOptions {
                alpha_star: args.alpha_star,
                replicates: args.replicates,
                seed: args.seed,
            };
            let report = wild_bootstrap(&problem, &spec, args.bn, &options)?;
            emit(&report, args.output.as_deref())
        }
        Command::Sweep(args) => {
            let estimate: DVector<f64> = read_vector(&args.estimate)?;
            let truth = read_vector(&args.truth)?;
            let sweep = threshold_sweep(&estimate, &truth, &threshold_grid(&estimate, args.step)?)?;
            if let Some(path) = &args.curve {
                let mut text = String::from("b,error\n");
                for (b, e) in sweep.grid.iter().zip(&sweep.curve) {
                    text.push_str(&format!("{b},{e}\n"));
                }
                write_text(path, &text)?;
            }
            emit(&sweep, args.output.as_deref())
        }
        Command::VerifyFilters(args) => {
            let reports = verify_catalog(args.d)?;
            emit(&reports, args.output.as_deref())
        }
    }
}

/// Parse `args`, run, and return the process exit status. Errors go to stderr as one JSON line.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{e}");
                return 0;
            }
            let msg = e.to_string();
            let first = msg.lines().next().unwrap_or("invalid arguments").trim_start_matches("error: ");
            eprintln!("{}", error_json("arguments", first));
            return 2;
        }
    };
    match dispatch(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("{}", error_json(e.kind(), &e.to_string()));
            exit_code(&e)
        }
    }
}
