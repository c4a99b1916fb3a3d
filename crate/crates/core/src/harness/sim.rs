//! Monte Carlo replications of the knockoff pipeline: draw features and
//! response, build knockoffs from the working model, compute statistics,
//! select, and score against the ground truth.

use std::time::Instant;

use log::{info, warn};
use ndarray::Array2;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{FeatureModel, SimConfig, WorkingModelKind};
use crate::datagen::{make_truth, sample_gaussian_with_factor, sample_response, sample_t_with_factor, Family, GroundTruth};
use crate::error::{Error, Result};
use crate::knockoffs::{gaussian_knockoffs, WorkingModel};
use crate::linalg::SymMatrix;
use crate::rng::{derive_seed, tag};
use crate::selection::{false_discoveries, fdr_threshold, kfwer_threshold, score};
use crate::stats::{knockoff_stats, AugmentedDesign, Regularization, StatMethod};

/// Everything shared across replications of one configuration.
pub struct Simulation {
    pub config: SimConfig,
    pub family: Family,
    pub features: FeatureModel,
    pub method: StatMethod,
    /// Covariance (Gaussian) or scale matrix (t) of the features.
    pub sigma: SymMatrix,
    chol: Array2<f64>,
    oracle: Option<WorkingModel>,
    fixed_truth: Option<GroundTruth>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicationRow {
    pub rep: usize,
    pub fdp: f64,
    pub power: f64,
    pub n_selected: usize,
    pub false_discoveries: usize,
    pub threshold: f64,
    pub max_kkt: f64,
    pub r: f64,
    pub kfwer_n_selected: Option<usize>,
    pub kfwer_false_discoveries: Option<usize>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SimReport {
    pub config: SimConfig,
    pub fdr: f64,
    pub fdr_mcse: f64,
    pub power: f64,
    pub power_mcse: f64,
    pub mean_selected: f64,
    pub max_kkt: f64,
    /// Fraction of replications with at least `k` false discoveries.
    pub kfwer: Option<f64>,
    pub kfwer_mcse: Option<f64>,
    pub completed: usize,
    pub failures: Vec<(usize, String)>,
    pub rows: Vec<ReplicationRow>,
    #[serde(skip)]
    pub wall_seconds: f64,
}

fn mean_and_mcse(v: impl Iterator<Item = f64> + Clone) -> (f64, f64) {
    let n = v.clone().count() as f64;
    let mean = v.clone().sum::<f64>() / n;
    if n < 2.0 {
        return (mean, f64::NAN);
    }
    let var = v.map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

impl Simulation {
    pub fn new(config: SimConfig) -> Result<Self> {
        config.validate()?;
        let family = config.resolved_family();
        let features = config.resolved_features();
        let sigma = config.resolved_covariance().sigma(config.p)?;
        let chol = sigma.cholesky()?;
        let oracle = match config.resolved_working_model() {
            WorkingModelKind::Estimated => None,
            WorkingModelKind::Oracle => {
                let cov = match (features, config.nu) {
                    (FeatureModel::T, Some(nu)) => sigma.scaled(nu / (nu - 2.0)),
                    _ => sigma.clone(),
                };
                Some(WorkingModel::from_covariance(cov)?)
            }
        };
        let fixed_truth = if config.fixed_beta {
            Some(make_truth(config.p, config.resolved_n_signals(), config.resolved_magnitude(), config.seed)?)
        } else {
            None
        };
        Ok(Self { family, features, method: config.resolved_statistic(), sigma, chol, oracle, fixed_truth, config })
    }

    fn features(&self, seed_rep: u64) -> Result<Array2<f64>> {
        let n = self.config.n;
        Ok(match self.features {
            FeatureModel::Gaussian => sample_gaussian_with_factor(n, &self.chol, derive_seed(seed_rep, &[tag::FEATURES])),
            FeatureModel::T => {
                let nu = self.config.nu.ok_or_else(|| Error::Config("t features need `nu`".into()))?;
                sample_t_with_factor(n, &self.chol, nu, seed_rep)?.x
            }
        })
    }

    pub fn run_replication(&self, rep: usize) -> Result<ReplicationRow> {
        let c = &self.config;
        let seed_rep = derive_seed(c.seed, &[tag::REPLICATION, rep as u64]);
        let drawn;
        let truth = match &self.fixed_truth {
            Some(t) => t,
            None => {
                drawn = make_truth(c.p, c.resolved_n_signals(), c.resolved_magnitude(), seed_rep)?;
                &drawn
            }
        };
        let x = self.features(seed_rep)?;
        let y = sample_response(x.view(), truth, self.family, seed_rep)?;
        let estimated;
        let model = match &self.oracle {
            Some(m) => m,
            None => {
                estimated = WorkingModel::estimate(x.view())?;
                &estimated
            }
        };
        let bundle = gaussian_knockoffs(x.view(), model, seed_rep)?;
        let design = AugmentedDesign::new(x.view(), bundle.x_hat.view())?;
        let reg = Regularization::default_for(&design, y.view(), self.family)?;
        let res = knockoff_stats(&design, y.view(), self.method, self.family, &reg)?;
        let sel = fdr_threshold(&res.stats.w, c.q, c.offset)?;
        let (fdp, power) = score(&sel, truth);
        let kf = match c.kfwer {
            Some(k) => Some(kfwer_threshold(&res.stats.w, k.k, k.q)?),
            None => None,
        };
        Ok(ReplicationRow {
            rep,
            fdp,
            power,
            n_selected: sel.n_selected(),
            false_discoveries: false_discoveries(&sel, truth),
            threshold: sel.threshold,
            max_kkt: res.max_kkt,
            r: bundle.r,
            kfwer_n_selected: kf.as_ref().map(|o| o.n_selected()),
            kfwer_false_discoveries: kf.as_ref().map(|o| false_discoveries(o, truth)),
        })
    }

    /// Runs every replication on the current rayon pool. Individual failures
    /// are recorded; the run fails only if nothing completes.
    pub fn run(&self) -> Result<SimReport> {
        let start = Instant::now();
        let reps = self.config.replications;
        info!("running {reps} replications of {} (n = {}, p = {})", self.config.setting, self.config.n, self.config.p);
        let results: Vec<(usize, Result<ReplicationRow>)> =
            (0..reps).into_par_iter().map(|rep| (rep, self.run_replication(rep))).collect();
        // results arrive in index order regardless of scheduling
        let mut rows = Vec::with_capacity(reps);
        let mut failures = Vec::new();
        for (rep, r) in results {
            match r {
                Ok(row) => rows.push(row),
                Err(e) => {
                    let e = Error::Replication { rep, source: Box::new(e) };
                    warn!("{e}");
                    failures.push((rep, e.to_string()));
                }
            }
        }
        if rows.is_empty() {
            return Err(Error::AllReplicationsFailed(reps));
        }
        let (fdr, fdr_mcse) = mean_and_mcse(rows.iter().map(|r| r.fdp));
        let (power, power_mcse) = mean_and_mcse(rows.iter().map(|r| r.power));
        let mean_selected = rows.iter().map(|r| r.n_selected as f64).sum::<f64>() / rows.len() as f64;
        let max_kkt = rows.iter().map(|r| r.max_kkt).fold(0.0, f64::max);
        let (kfwer, kfwer_mcse) = match self.config.kfwer {
            Some(k) => {
                let (m, s) = mean_and_mcse(
                    rows.iter().map(|r| if r.kfwer_false_discoveries.unwrap_or(0) >= k.k { 1.0 } else { 0.0 }),
                );
                (Some(m), Some(s))
            }
            None => (None, None),
        };
        Ok(SimReport {
            config: self.config.clone(),
            fdr,
            fdr_mcse,
            power,
            power_mcse,
            mean_selected,
            max_kkt,
            kfwer,
            kfwer_mcse,
            completed: rows.len(),
            failures,
            rows,
            wall_seconds: start.elapsed().as_secs_f64(),
        })
    }
}

/// Runs `config`, on a dedicated pool when `threads` is given.
pub fn run_simulation(config: SimConfig, threads: Option<usize>) -> Result<SimReport> {
    let sim = Simulation::new(config)?;
    match threads {
        Some(t) => rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build()
            .map_err(|e| Error::Config(format!("cannot build thread pool: {e}")))?
            .install(|| sim.run()),
        None => sim.run(),
    }
}
