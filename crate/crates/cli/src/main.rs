//! `robest`: optimally robust one-step estimates, influence curve grids,
//! cniper points and contamination simulations from the command line.

mod ingest;
mod output;

use std::fs;
use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Args, Parser, Subcommand, ValueEnum};
use thiserror::Error;

use robest::cniper::cniper_points;
use robest::data::Dataset;
use robest::expectation::{Expectation, ExpectationConfig};
use robest::family::{Gamma, Model, NormalLocationScale, Poisson};
use robest::ic::{IcCache, InfluenceCurve, Neighborhood, SolverConfig};
use robest::mc::{mc_compare, Contaminant, ContaminationScenario, Estimator};
use robest::onestep::{roptest_pipeline, OneStepConfig};
use robest::rmx::{RadiusInterval, RmxSearch, DEFAULT_RMX_TOL};
use robest::start::{start_estimate, StartMethod};

use crate::ingest::ingest;
use crate::output::Format;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Data(String),
    #[error("{0}")]
    Core(#[from] robest::Error),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        use robest::Error as E;
        match self {
            CliError::Usage(_) => 2,
            CliError::Data(_) => 3,
            CliError::Core(e) => match e {
                E::InvalidParameter { .. }
                | E::InvalidInterval(..)
                | E::InvalidBounds(_)
                | E::InvalidConfig(_)
                | E::InvalidTangent(_)
                | E::UnsupportedDimension(_) => 2,
                E::InvalidData(_) | E::OutsideSupport { .. } | E::DegenerateScale(_) => 3,
                _ => 4,
            },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ModelName {
    NormalLocScale,
    Gamma,
    Poisson,
}

impl ModelName {
    fn model(self) -> Model {
        match self {
            ModelName::NormalLocScale => Arc::new(NormalLocationScale),
            ModelName::Gamma => Arc::new(Gamma),
            ModelName::Poisson => Arc::new(Poisson),
        }
    }

    /// Decimals of the human-readable output.
    fn decimals(self) -> usize {
        match self {
            ModelName::Poisson => 4,
            _ => 2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum NeighborName {
    /// Contamination
    C,
    /// Total variation
    V,
}

impl From<NeighborName> for Neighborhood {
    fn from(n: NeighborName) -> Self {
        match n {
            NeighborName::C => Neighborhood::Contamination,
            NeighborName::V => Neighborhood::TotalVariation,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum StartName {
    Cvm,
    MedianMad,
    Mle,
}

impl From<StartName> for StartMethod {
    fn from(s: StartName) -> Self {
        match s {
            StartName::Cvm => StartMethod::Cvm,
            StartName::MedianMad => StartMethod::MedianMad,
            StartName::Mle => StartMethod::Mle,
        }
    }
}

#[derive(Parser)]
#[command(name = "robest", version, about = "Optimally robust estimation on shrinking neighborhoods")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct ModelArgs {
    /// Ideal model (the gamma model has no embedded dataset; pass a file with --data)
    #[arg(long, value_enum)]
    model: ModelName,
    /// Neighborhood type: c (contamination) or v (total variation)
    #[arg(long, value_enum, default_value = "c")]
    neighbor: NeighborName,
}

#[derive(Args, Clone)]
struct OutputArgs {
    #[arg(long, value_enum, default_value = "human")]
    output: Format,
    /// Write to this file instead of standard output
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Start estimate, radius-minmax influence curve and one-step estimate
    Fit {
        #[command(flatten)]
        model: ModelArgs,
        /// Lower bound of the contamination fraction
        #[arg(long)]
        eps_lower: f64,
        /// Upper bound of the contamination fraction
        #[arg(long)]
        eps_upper: f64,
        #[arg(long, value_enum, default_value = "cvm")]
        start: StartName,
        /// CSV file (one column, or value,count) or embedded:copper / embedded:polonium
        #[arg(long)]
        data: String,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Influence curve on a grid, as CSV
    Ic {
        #[command(flatten)]
        model: ModelArgs,
        /// Parameter value; otherwise the start estimate from --data
        #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
        theta: Option<Vec<f64>>,
        #[arg(long)]
        data: Option<String>,
        #[arg(long, value_enum, default_value = "cvm")]
        start: StartName,
        /// Fixed radius
        #[arg(long, conflicts_with_all = ["eps_lower", "eps_upper"])]
        radius: Option<f64>,
        #[arg(long, requires = "eps_upper")]
        eps_lower: Option<f64>,
        #[arg(long, requires = "eps_lower")]
        eps_upper: Option<f64>,
        /// Sample size for the radius interval when --theta is given
        #[arg(long)]
        n: Option<u64>,
        /// Number of grid points (continuous models)
        #[arg(long, default_value_t = 201)]
        grid: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Cniper points and the ideal probability of the region beyond them
    Cniper {
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long, value_delimiter = ',', allow_negative_numbers = true, required = true)]
        theta: Vec<f64>,
        /// Contamination fraction s; the radius is √n·s
        #[arg(long)]
        size: f64,
        #[arg(long)]
        n: u64,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Monte Carlo n·MSE of estimators under Dirac contamination
    Simulate {
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long, value_delimiter = ',', allow_negative_numbers = true, required = true)]
        theta: Vec<f64>,
        /// Contamination fraction
        #[arg(long, default_value_t = 0.0)]
        size: f64,
        /// Position of the contaminating point mass
        #[arg(long, allow_negative_numbers = true)]
        dirac: Option<f64>,
        #[arg(long)]
        n: usize,
        #[arg(long, default_value_t = 1000)]
        reps: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Comma-separated list from mle, cvm, median-mad, rmx
        #[arg(long, value_delimiter = ',', default_value = "mle,rmx")]
        estimators: Vec<String>,
        /// Contamination fraction bounds of the rmx estimator
        #[arg(long)]
        eps_lower: Option<f64>,
        #[arg(long)]
        eps_upper: Option<f64>,
        /// Start of the rmx estimator
        #[arg(long, value_enum, default_value = "cvm")]
        start: StartName,
        #[command(flatten)]
        output: OutputArgs,
    },
}

fn emit(text: &str, out: Option<&PathBuf>) -> Result<(), CliError> {
    match out {
        Some(path) => fs::write(path, text).map_err(|e| CliError::Usage(format!("cannot write {}: {e}", path.display()))),
        None => {
            let mut stdout = std::io::stdout().lock();
            // a closed pipe is not an error worth reporting
            let _ = stdout.write_all(text.as_bytes());
            Ok(())
        }
    }
}

fn check_theta(model: &Model, theta: &[f64]) -> Result<(), CliError> {
    if theta.len() != model.dim() {
        return Err(CliError::Usage(format!(
            "--theta needs {} value(s) ({}) for {}",
            model.dim(),
            model.param_names().join(", "),
            model.name()
        )));
    }
    Ok(model.validate(theta)?)
}

fn check_median_mad(name: ModelName, start: StartName) -> Result<(), CliError> {
    if start == StartName::MedianMad && name != ModelName::NormalLocScale {
        return Err(CliError::Usage("--start median-mad is only available for normal-loc-scale".into()));
    }
    Ok(())
}

fn check_eps(lo: f64, up: f64) -> Result<(), CliError> {
    if !(0.0..0.5).contains(&lo) || !(up > lo && up <= 0.5) {
        return Err(CliError::Usage(format!(
            "need 0 <= --eps-lower < --eps-upper <= 0.5, got {lo} and {up}"
        )));
    }
    Ok(())
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Fit {
            model,
            eps_lower,
            eps_upper,
            start,
            data,
            output,
        } => {
            check_eps(eps_lower, eps_upper)?;
            check_median_mad(model.model, start)?;
            let data = ingest(&data)?;
            let family = model.model.model();
            let config = OneStepConfig {
                neighborhood: model.neighbor.into(),
                ..OneStepConfig::default()
            };
            let report = roptest_pipeline(&family, &data, eps_lower, eps_upper, start.into(), &config)?;
            let text = output::fit(&family, &data, eps_lower, eps_upper, &report, output.output, model.model.decimals());
            emit(&text, output.out.as_ref())
        }
        Command::Ic {
            model,
            theta,
            data,
            start,
            radius,
            eps_lower,
            eps_upper,
            n,
            grid,
            out,
        } => {
            check_median_mad(model.model, start)?;
            let family = model.model.model();
            let data = data.as_deref().map(ingest).transpose()?;
            let theta = match (theta, &data) {
                (Some(t), _) => {
                    check_theta(&family, &t)?;
                    t
                }
                (None, Some(d)) => start_estimate(start.into(), &*family, d)?,
                (None, None) => return Err(CliError::Usage("ic needs --theta or --data".into())),
            };
            let neighborhood: Neighborhood = model.neighbor.into();
            let solver = SolverConfig::default();
            let cache = IcCache::new();
            let ic: InfluenceCurve = match (radius, eps_lower, eps_upper) {
                (Some(r), _, _) => cache.solve(&family, &theta, r, neighborhood, &solver)?.0,
                (None, Some(lo), Some(up)) => {
                    check_eps(lo, up)?;
                    let size = n.or(data.as_ref().map(Dataset::n)).ok_or_else(|| {
                        CliError::Usage("an eps interval with --theta needs the sample size --n".into())
                    })?;
                    let iv = RadiusInterval::from_fractions(lo, up, size)?;
                    RmxSearch::new(family.clone(), neighborhood, solver, &cache)
                        .rmx_ic(&theta, iv, DEFAULT_RMX_TOL)?
                        .ic
                }
                _ => return Err(CliError::Usage("ic needs --radius or --eps-lower/--eps-upper".into())),
            };
            if grid == 0 {
                return Err(CliError::Usage("--grid must be at least 1".into()));
            }
            let points = grid_points(&family, &theta, grid)?;
            let text = output::ic_grid(&ic, &points)?;
            emit(&text, out.as_ref())
        }
        Command::Cniper {
            model,
            theta,
            size,
            n,
            output,
        } => {
            if model.neighbor == NeighborName::V {
                return Err(CliError::Usage("cniper points are defined for contamination only".into()));
            }
            if !(size > 0.0 && size <= 1.0) || n == 0 {
                return Err(CliError::Usage(format!("need 0 < --size <= 1 and --n >= 1, got {size} and {n}")));
            }
            let family = model.model.model();
            check_theta(&family, &theta)?;
            let r = (n as f64).sqrt() * size;
            let report = cniper_points(&family, &theta, r, &SolverConfig::default())?;
            let text = output::cniper(&family, size, n, &report, output.output);
            emit(&text, output.out.as_ref())
        }
        Command::Simulate {
            model,
            theta,
            size,
            dirac,
            n,
            reps,
            seed,
            estimators,
            eps_lower,
            eps_upper,
            start,
            output,
        } => {
            check_median_mad(model.model, start)?;
            let family = model.model.model();
            check_theta(&family, &theta)?;
            let contaminant = match dirac {
                Some(a) => Contaminant::Dirac(a),
                None if size == 0.0 => Contaminant::Dirac(0.0),
                None => return Err(CliError::Usage("--size > 0 needs a contaminant, e.g. --dirac 28.95".into())),
            };
            let scenario = ContaminationScenario::new(family.clone(), theta, size, contaminant, n, seed)?;
            let mut list = Vec::new();
            for name in &estimators {
                list.push(match name.as_str() {
                    "mle" => Estimator::mle(family.clone()),
                    "cvm" => Estimator::start(family.clone(), StartMethod::Cvm),
                    "median-mad" => {
                        check_median_mad(model.model, StartName::MedianMad)?;
                        Estimator::start(family.clone(), StartMethod::MedianMad)
                    }
                    "rmx" => {
                        let (lo, up) = eps_lower.zip(eps_upper).ok_or_else(|| {
                            CliError::Usage("the rmx estimator needs --eps-lower and --eps-upper".into())
                        })?;
                        check_eps(lo, up)?;
                        Estimator::rmx(family.clone(), lo, up, model.neighbor.into(), start.into())
                    }
                    other => {
                        return Err(CliError::Usage(format!(
                            "unknown estimator '{other}' (expected mle, cvm, median-mad, rmx)"
                        )))
                    }
                });
            }
            let table = mc_compare(&scenario, &list, reps, seed)?;
            let text = output::simulation(&family, &table, output.output);
            emit(&text, output.out.as_ref())
        }
    }
}

/// Evenly spaced points between the 0.001 and 0.999 quantiles, the median
/// for a single point, or the lattice points of the summation range.
fn grid_points(family: &Model, theta: &[f64], grid: usize) -> Result<Vec<f64>, CliError> {
    if grid == 1 {
        return Ok(vec![family.quantile(theta, 0.5)]);
    }
    if family.support().is_lattice() {
        let e = Expectation::new(&**family, theta, ExpectationConfig::default())?;
        let (points, _) = e.lattice().expect("lattice family");
        return Ok(points.to_vec());
    }
    let (lo, hi) = (family.quantile(theta, 0.001), family.quantile(theta, 0.999));
    Ok((0..grid)
        .map(|i| lo + (hi - lo) * i as f64 / (grid - 1) as f64)
        .collect())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            if let CliError::Core(robest::Error::SolverFailure { history, .. }) = &e {
                eprintln!("residual history: {history:?}");
            }
            ExitCode::from(e.exit_code())
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exit_codes() {
        assert_eq!(CliError::Usage("x".into()).exit_code(), 2);
        assert_eq!(CliError::Data("x".into()).exit_code(), 3);
        assert_eq!(CliError::from(robest::Error::InvalidData("x".into())).exit_code(), 3);
        assert_eq!(CliError::from(robest::Error::InvalidBounds("x".into())).exit_code(), 2);
        let solver = robest::Error::SolverFailure {
            sweeps: 3,
            reason: "x".into(),
            history: vec![],
        };
        assert_eq!(CliError::from(solver).exit_code(), 4);
    }

    #[test]
    fn cli_definition_is_consistent() {
        use clap::CommandFactory;
        Cli::command().debug_assert();
    }
}
