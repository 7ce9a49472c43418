//! Command-line interface. Every subcommand reads a JSON config and writes
//! its results atomically.
//!
//! Exit status: 0 success, 2 bad input or configuration, 3 convergence
//! failure, 4 identifiability failure, 1 anything else.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::design::Side;
use crate::error::{Error, Result};
use crate::eval::{run_cv, run_temporal_holdout, standard_models, ComparisonReport, CvPlan};
use crate::inference::compute_vcov;
use crate::io::config::{write_simulation, RunConfig};
use crate::io::export::{edges_csv, export_influence};
use crate::io::schema::{from_json, predictions_csv, read_predictions, to_json, FitReport, ScoresFile, FIT_SCHEMA};
use crate::io::write_atomic;
use crate::scoring::score_forecast_with;
use crate::sim::{simulate, stability_check, SimConfig};
use crate::sir::{fit_sir, predict_mu, SirData};
use crate::tensor::Mask;

pub const EXIT_OTHER: i32 = 1;
pub const EXIT_INPUT: i32 = 2;
pub const EXIT_CONVERGENCE: i32 = 3;
pub const EXIT_IDENTIFIABILITY: i32 = 4;

#[derive(Debug, Parser)]
#[command(name = "sirnet", version, about = "Social influence regression for dyadic count networks")]
pub struct Cli {
    /// Worker threads (defaults to all cores). Results do not depend on it.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct ConfigArg {
    /// Run configuration (JSON).
    #[arg(long, short)]
    pub config: PathBuf,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum SideArg {
    Sender,
    Receiver,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit the model and write estimates with both standard-error sets.
    Fit {
        #[command(flatten)]
        cfg: ConfigArg,
        #[arg(long, default_value = "fit.json")]
        out: PathBuf,
        /// Extra random starts, overriding the config.
        #[arg(long)]
        multi_start: Option<usize>,
    },
    /// Write fitted rates for every modeled cell.
    Predict {
        #[command(flatten)]
        cfg: ConfigArg,
        #[arg(long, default_value = "fit.json")]
        fit: PathBuf,
        #[arg(long, default_value = "predictions.csv")]
        out: PathBuf,
    },
    /// Score a predictions CSV against the observed counts.
    Score {
        #[command(flatten)]
        cfg: ConfigArg,
        #[arg(long, default_value = "predictions.csv")]
        predictions: PathBuf,
        #[arg(long, default_value = "scores.json")]
        out: PathBuf,
    },
    /// Random time-slice cross-validation against the plain GLM.
    Cv {
        #[command(flatten)]
        cfg: ConfigArg,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        k: Option<usize>,
        #[arg(long)]
        m: Option<usize>,
        #[arg(long, default_value = "cv_report.json")]
        out: PathBuf,
    },
    /// Forecast the last x periods for each horizon x.
    Holdout {
        #[command(flatten)]
        cfg: ConfigArg,
        #[arg(long, value_delimiter = ',')]
        horizons: Option<Vec<usize>>,
        #[arg(long, default_value = "holdout_report.json")]
        out: PathBuf,
    },
    /// Simulate a panel and write events, covariates and a run config.
    Simulate {
        /// Simulation configuration (JSON).
        #[arg(long, short)]
        config: PathBuf,
        #[arg(long, default_value = ".")]
        out_dir: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        /// Only run the stability pilot and print its report.
        #[arg(long)]
        check: bool,
    },
    /// Write the influence network of one period as an edge list.
    ExportInfluence {
        #[command(flatten)]
        cfg: ConfigArg,
        #[arg(long, default_value = "fit.json")]
        fit: PathBuf,
        #[arg(long, value_enum, default_value = "sender")]
        side: SideArg,
        /// Response period (YYYY-MM); the influence matrix is the one
        /// acting on the preceding period's network.
        #[arg(long)]
        period: String,
        #[arg(long, default_value_t = 0.0)]
        threshold: f64,
        #[arg(long, default_value = "influence_edges.csv")]
        out: PathBuf,
    },
}

/// Runs the CLI and returns the process exit status.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_INPUT } else { 0 };
        }
    };
    let outcome = match cli.threads {
        Some(k) => match rayon::ThreadPoolBuilder::new().num_threads(k).build() {
            Ok(pool) => pool.install(|| dispatch(cli.command)),
            Err(e) => Err(Error::Config(e.to_string())),
        },
        None => dispatch(cli.command),
    };
    match outcome {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

pub fn exit_code(e: &Error) -> i32 {
    match e.root() {
        Error::Input { .. }
        | Error::Config(_)
        | Error::Io(_)
        | Error::Json(_)
        | Error::Csv(_)
        | Error::InvalidTensor(_)
        | Error::InvalidArgument(_)
        | Error::DimensionMismatch(_)
        | Error::InsufficientPeriods { .. }
        | Error::InfeasiblePlan(_)
        | Error::Unstable { .. } => EXIT_INPUT,
        Error::NotConverged | Error::Divergence(_) => EXIT_CONVERGENCE,
        Error::NonIdentifiable { .. }
        | Error::NonInvertibleInformation { .. }
        | Error::SingularDesign { .. }
        | Error::BoundaryMle(_) => EXIT_IDENTIFIABILITY,
        _ => EXIT_OTHER,
    }
}

fn dispatch(command: Command) -> Result<i32> {
    match command {
        Command::Fit { cfg, out, multi_start } => {
            let mut config = RunConfig::load(&cfg.config)?;
            if let Some(k) = multi_start {
                config.estimator.multi_start = k;
            }
            cmd_fit(&config, &out)
        }
        Command::Predict { cfg, fit, out } => {
            let config = RunConfig::load(&cfg.config)?;
            let (data, report) = load_fit(&config, &fit)?;
            let mu = predict_mu(&report.params, &data, &Mask::none())?;
            let periods: Vec<usize> = (0..data.modeled_periods()).collect();
            write_atomic(&out, &predictions_csv(&mu, &data, &periods)?)?;
            println!("wrote {} rates to {}", data.modeled_periods() * data.n() * (data.n() - 1), out.display());
            Ok(0)
        }
        Command::Score { cfg, predictions, out } => {
            let config = RunConfig::load(&cfg.config)?;
            let data = config.load_data()?;
            let file = std::fs::File::open(&predictions)?;
            let (y, mu) = read_predictions(file, &predictions.display().to_string(), &data)?;
            let scores = score_forecast_with(&y, &mu, &config.scoring)?;
            write_atomic(&out, &to_json(&ScoresFile::new(scores.clone()))?)?;
            println!(
                "{} cells  DS {:.6}  Log {:.6}  Brier {:.6}  Spherical {:.6}  RMSE {:.6}",
                scores.cells, scores.dawid_sebastiani, scores.logarithmic, scores.brier, scores.spherical, scores.rmse
            );
            Ok(0)
        }
        Command::Cv { cfg, seed, k, m, out } => {
            let mut config = RunConfig::load(&cfg.config)?;
            if let Some(s) = seed {
                config.cv.seed = s;
            }
            if let Some(k) = k {
                config.cv.k = k;
            }
            if let Some(m) = m {
                config.cv.m = m;
            }
            let data = config.load_data()?;
            let plan = CvPlan::from_settings(data.modeled_periods(), &config.cv)?;
            let mut report = run_cv(&standard_models(&config.estimator), &data, &plan, &config.scoring)?;
            finish_report(&config, &mut report, &out)?;
            Ok(0)
        }
        Command::Holdout { cfg, horizons, out } => {
            let mut config = RunConfig::load(&cfg.config)?;
            if let Some(h) = horizons {
                config.holdout.horizons = h;
            }
            let data = config.load_data()?;
            let mut report = run_temporal_holdout(
                &standard_models(&config.estimator),
                &data,
                &config.holdout.horizons,
                &config.scoring,
            )?;
            finish_report(&config, &mut report, &out)?;
            Ok(0)
        }
        Command::Simulate {
            config,
            out_dir,
            seed,
            check,
        } => {
            let text = std::fs::read(&config)?;
            let mut sim_config: SimConfig =
                serde_json::from_slice(&text).map_err(|e| Error::Config(format!("{}: {e}", config.display())))?;
            if let Some(s) = seed {
                sim_config.seed = s;
            }
            if check {
                let report = stability_check(&sim_config)?;
                println!("{}", serde_json::to_string_pretty(&report)?);
                return Ok(if report.stable { 0 } else { EXIT_INPUT });
            }
            let sim = simulate(&sim_config)?;
            write_simulation(&sim, &out_dir)?;
            write_atomic(&out_dir.join("truth.json"), &to_json(&sim_config.truth)?)?;
            println!(
                "simulated {} actors x {} periods into {}",
                sim.y.n(),
                sim.y.periods(),
                out_dir.display()
            );
            Ok(0)
        }
        Command::ExportInfluence {
            cfg,
            fit,
            side,
            period,
            threshold,
            out,
        } => {
            let config = RunConfig::load(&cfg.config)?;
            let (data, report) = load_fit(&config, &fit)?;
            let labels = data.response().period_labels();
            let t = labels
                .iter()
                .position(|l| *l == period)
                .and_then(|k| k.checked_sub(1))
                .ok_or_else(|| Error::Config(format!("period {period} is not a modeled response period")))?;
            let side = match side {
                SideArg::Sender => Side::Sender,
                SideArg::Receiver => Side::Receiver,
            };
            let edges = export_influence(&report.params, &data, side, t, threshold)?;
            write_atomic(&out, &edges_csv(&edges)?)?;
            println!("wrote {} edges to {}", edges.len(), out.display());
            Ok(0)
        }
    }
}

fn cmd_fit(config: &RunConfig, out: &Path) -> Result<i32> {
    let data = config.load_data()?;
    let mask = Mask::none();
    let fit = fit_sir(&data, &mask, &config.estimator)?;
    let vcov = compute_vcov(&fit, &data, &mask);
    let code = match &vcov {
        _ if !fit.converged => EXIT_CONVERGENCE,
        _ if fit.influence_degenerate => EXIT_IDENTIFIABILITY,
        Err(e) => exit_code(e),
        Ok(_) => 0,
    };
    if let Err(e) = &vcov {
        eprintln!("warning: no standard errors: {e}");
    }
    let report = FitReport::new(&fit, &data, &config.estimator, vcov);
    write_atomic(out, &to_json(&report)?)?;
    print_fit(&report);
    if !fit.converged {
        eprintln!("error: not converged after {} outer iterations", fit.outer_iterations);
    }
    Ok(code)
}

fn print_fit(r: &FitReport) {
    println!(
        "loglik {:.6}  outer iterations {}  converged {}  cells {}",
        r.loglik, r.outer_iterations, r.converged, r.observations
    );
    let estimates = r.params.to_psi();
    match &r.inference {
        Some(v) => {
            println!("{:<28} {:>12} {:>12} {:>12}", "parameter", "estimate", "se(hess)", "se(sand)");
            for (k, name) in v.names.iter().enumerate() {
                println!(
                    "{:<28} {:>12.6} {:>12.6} {:>12.6}",
                    name, estimates[k], v.se_hessian[k], v.se_sandwich[k]
                );
            }
        }
        None => {
            println!("theta {:?}", r.params.theta);
            println!("alpha {:?}", r.params.alpha);
            println!("beta  {:?}", r.params.beta);
        }
    }
}

fn load_fit(config: &RunConfig, path: &Path) -> Result<(SirData, FitReport)> {
    let data = config.load_data()?;
    let report: FitReport = from_json(&std::fs::read(path)?, FIT_SCHEMA)?;
    report.check_compatible(&data)?;
    Ok((data, report))
}

fn finish_report(config: &RunConfig, report: &mut ComparisonReport, out: &Path) -> Result<()> {
    if let Some(path) = config.baseline_path() {
        let file = std::fs::File::open(&path)?;
        report.attach_external(file, &path.display().to_string())?;
    }
    write_atomic(out, &to_json(report)?)?;
    println!("{:<8} {:<18} {:>12} {:>12} {:>12}", "model", "rule", "mean", "min", "max");
    for (model, rules) in &report.summary {
        for (rule, s) in rules {
            println!("{model:<8} {rule:<18} {:>12.6} {:>12.6} {:>12.6}", s.mean, s.min, s.max);
        }
    }
    let n = report.folds.len();
    for rule in ["dawid_sebastiani", "logarithmic"] {
        println!("sir beats glm on {rule} in {} of {n} splits", report.wins("sir", "glm", rule));
    }
    Ok(())
}
