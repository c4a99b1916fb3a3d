//! The `ark` command line.

use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use log::info;

use super::config::{SimConfig, PRESETS};
use super::io;
use super::sim::run_simulation;
use crate::datagen::{Family, GroundTruth};
use crate::diagnostics::{empirical_kl_t_vs_gaussian, CouplingReport};
use crate::error::{Error, Result};
use crate::knockoffs::{gaussian_knockoffs, WorkingModel};
use crate::linalg::SymMatrix;
use crate::selection::{fdr_threshold, kfwer_threshold, score, Rule};
use crate::stats::{default_method, knockoff_stats, AugmentedDesign, Regularization, StatMethod};

#[derive(Debug, Parser)]
#[command(name = "ark", version, about = "Approximate model-X knockoffs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Format {
    Csv,
    Json,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run a Monte Carlo simulation and write replications and summary tables.
    Simulate {
        /// TOML configuration file.
        #[arg(long, required_unless_present = "preset", conflicts_with = "preset")]
        config: Option<PathBuf>,
        /// Built-in configuration (setting1, setting2, t-linear, t-logistic, each with a -desk variant).
        #[arg(long)]
        preset: Option<String>,
        /// Overrides the configured seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Overrides the configured replication count.
        #[arg(long)]
        replications: Option<usize>,
        #[arg(long)]
        threads: Option<usize>,
        #[arg(long, default_value = ".")]
        out: PathBuf,
        #[arg(long, value_enum, default_value = "csv")]
        format: Format,
    },
    /// Generate Gaussian knockoffs for a feature matrix.
    Knockoffs {
        /// Feature matrix (CSV, no header).
        #[arg(long)]
        x: PathBuf,
        /// Known covariance (CSV); the shrinkage estimate of `x` is used otherwise.
        #[arg(long)]
        sigma: Option<PathBuf>,
        /// Response (one value per line); when given, statistics are written too.
        #[arg(long)]
        y: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "linear")]
        family: FamilyArg,
        /// Statistic for `--y` (defaults to the family's debiased statistic).
        #[arg(long)]
        statistic: Option<StatMethod>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
    /// Apply a selection rule to a vector of statistics.
    Select {
        /// Statistics: a `j,w,...` table or one value per line.
        #[arg(long)]
        w: PathBuf,
        #[arg(long, value_enum, default_value = "fdr")]
        rule: RuleArg,
        #[arg(long, default_value_t = 0.2)]
        q: f64,
        /// Required for `--rule kfwer`.
        #[arg(long)]
        k: Option<usize>,
        #[arg(long, default_value_t = 0, value_parser = clap::value_parser!(u8).range(0..=1))]
        offset: u8,
        /// 1-based indices of the true signals, for scoring.
        #[arg(long)]
        truth: Option<PathBuf>,
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
    /// Coupling diagnostics for a pair of knockoff matrices.
    Diagnose {
        #[arg(long)]
        x_hat: PathBuf,
        #[arg(long)]
        x_tilde: PathBuf,
        /// Original features, for the per-feature KL statistics (needs `--nu`).
        #[arg(long, requires = "nu")]
        x: Option<PathBuf>,
        #[arg(long)]
        nu: Option<f64>,
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum FamilyArg {
    Linear,
    Logistic,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum RuleArg {
    Fdr,
    Kfwer,
}

/// Parses `argv` (program name first) and runs the subcommand.
/// Returns 0 on success, 1 for usage and configuration errors, 2 for numerical failures.
pub fn cli_main<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    match run(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_numerical() { 2 } else { 1 }
        }
    }
}

fn ensure_dir(out: &Path) -> Result<()> {
    std::fs::create_dir_all(out)?;
    Ok(())
}

fn run(cmd: Command) -> Result<()> {
    match cmd {
        Command::Simulate { config, preset, seed, replications, threads, out, format } => {
            let mut cfg = match (config, preset) {
                (Some(path), _) => SimConfig::from_file(&path)?,
                (None, Some(name)) => SimConfig::preset(&name)?,
                (None, None) => {
                    return Err(Error::Config(format!("--config is required (or --preset, one of {})", PRESETS.join(", "))));
                }
            };
            if let Some(s) = seed {
                cfg.seed = s;
            }
            if let Some(r) = replications {
                cfg.replications = r;
            }
            cfg.validate()?;
            ensure_dir(&out)?;
            let report = run_simulation(cfg, threads)?;
            info!("finished in {:.1}s", report.wall_seconds);
            match format {
                Format::Csv => {
                    io::write_replications(&out.join("replications.csv"), &report)?;
                    io::write_summary(&out.join("summary.csv"), &report)?;
                }
                Format::Json => io::write_report_json(&out.join("report.json"), &report)?,
            }
            println!(
                "fdr = {:.4} (mcse {:.4}), power = {:.4}, {} of {} replications completed",
                report.fdr,
                report.fdr_mcse,
                report.power,
                report.completed,
                report.config.replications
            );
            Ok(())
        }
        Command::Knockoffs { x, sigma, y, family, statistic, seed, out } => {
            let x = io::read_matrix(&x)?;
            let model = match sigma {
                Some(path) => WorkingModel::from_covariance(SymMatrix::new(io::read_matrix(&path)?)?)?,
                None => WorkingModel::estimate(x.view())?,
            };
            if model.dim() != x.ncols() {
                return Err(Error::DimensionMismatch(format!(
                    "covariance is {0}x{0} but x has {1} columns",
                    model.dim(),
                    x.ncols()
                )));
            }
            let bundle = gaussian_knockoffs(x.view(), &model, seed)?;
            ensure_dir(&out)?;
            io::write_matrix(&out.join("x_hat.csv"), &bundle.x_hat)?;
            if let Some(ypath) = y {
                let yv = ndarray::Array1::from(io::read_stats(&ypath)?);
                let family = match family {
                    FamilyArg::Linear => Family::Linear,
                    FamilyArg::Logistic => Family::Logistic,
                };
                let design = AugmentedDesign::new(x.view(), bundle.x_hat.view())?;
                let reg = Regularization::default_for(&design, yv.view(), family)?;
                let method = statistic.unwrap_or_else(|| default_method(family));
                let res = knockoff_stats(&design, yv.view(), method, family, &reg)?;
                io::write_stats(&out.join("w.csv"), &res.stats)?;
            }
            println!("r = {}", bundle.r);
            Ok(())
        }
        Command::Select { w, rule, q, k, offset, truth, out } => {
            let w = io::read_stats(&w)?;
            let sel = match rule {
                RuleArg::Fdr => fdr_threshold(&w, q, offset)?,
                RuleArg::Kfwer => {
                    let k = k.ok_or_else(|| Error::Config("--k is required for --rule kfwer".into()))?;
                    kfwer_threshold(&w, k, q)?
                }
            };
            let scored = match truth {
                Some(path) => {
                    let support = io::read_support(&path)?;
                    let mut beta = vec![0.0; w.len()];
                    for j in support {
                        *beta.get_mut(j).ok_or_else(|| {
                            Error::InvalidParameter(format!("truth index {} exceeds {} statistics", j + 1, w.len()))
                        })? = 1.0;
                    }
                    Some(score(&sel, &GroundTruth::from_beta(beta)))
                }
                None => None,
            };
            ensure_dir(&out)?;
            io::write_selection(&out.join("selection.csv"), &sel, scored)?;
            let idx: Vec<String> = sel.selected.iter().map(|j| (j + 1).to_string()).collect();
            let label = match sel.rule {
                Rule::Fdr => "fdr",
                Rule::Kfwer => "kfwer",
            };
            println!("{label}: threshold = {}, selected = [{}]", sel.threshold, idx.join(" "));
            Ok(())
        }
        Command::Diagnose { x_hat, x_tilde, x, nu, out } => {
            let x_hat = io::read_matrix(&x_hat)?;
            let x_tilde = io::read_matrix(&x_tilde)?;
            let mut report = CouplingReport::from_pair(x_hat.view(), x_tilde.view())?;
            ensure_dir(&out)?;
            if let (Some(xp), Some(nu)) = (x, nu) {
                let x = io::read_matrix(&xp)?;
                let kl = empirical_kl_t_vs_gaussian(x.view(), x_hat.view(), nu)?;
                io::write_kl(&out.join("kl.csv"), kl.as_slice().unwrap_or(&kl.to_vec()))?;
                report.kl_stats = Some(kl.to_vec());
            }
            io::write_coupling(&out.join("coupling.json"), &report)?;
            println!("norm_1_2 = {}", report.norm_1_2);
            Ok(())
        }
    }
}
