use std::path::Path;
use std::time::Instant;

use log::info;
use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use super::config::{DatasetConfig, ExperimentConfig};
use super::report::{score_lists, Report, RunRow, SelectionRow};
use crate::baselines::{mean_variance_select, top_n_select, MvStrategy};
use crate::data::synthetic::generate;
use crate::data::{candidate_set, parse_ratings, sample_target_users, split_train_test, RatingDataset, SplitDataset};
use crate::dro::{padm_solve, Formulation, PadmSettings, UserProblem};
use crate::error::{Error, Result};
use crate::moments::{pairwise_covariance, user_covariance, CovarianceTable, ShrinkageConfig};
use crate::predictor::{fit_mf, predicted_mean_vector, FactorModel};

/// One selection rule with its parameters fixed.
#[derive(Debug, Clone, PartialEq)]
pub enum MethodPoint {
    TopN,
    MeanVariance {
        alpha: f64,
        strategy: MvStrategy,
    },
    Dro {
        kappa1: f64,
        kappa2: f64,
        formulation: Formulation,
    },
}

impl MethodPoint {
    pub fn name(&self) -> &'static str {
        match self {
            MethodPoint::TopN => "top_n",
            MethodPoint::MeanVariance { .. } => "mv",
            MethodPoint::Dro { .. } => "dro",
        }
    }

    pub fn param(&self, n: usize) -> String {
        match self {
            MethodPoint::TopN => format!("N={n}"),
            MethodPoint::MeanVariance { alpha, .. } => format!("N={n};alpha={alpha}"),
            MethodPoint::Dro { kappa1, kappa2, .. } => format!("N={n};k1={kappa1};k2={kappa2}"),
        }
    }

    /// Positions of the chosen candidates.
    pub fn select(&self, input: &UserInput, n: usize, padm: &PadmSettings) -> Result<Vec<usize>> {
        let z = match self {
            MethodPoint::TopN => top_n_select(&input.mu, n)?,
            MethodPoint::MeanVariance { alpha, strategy } => mean_variance_select(&input.mu, &input.sigma, *alpha, n, *strategy)?,
            MethodPoint::Dro {
                kappa1,
                kappa2,
                formulation,
            } => {
                let prob = UserProblem::new(
                    input.candidates.clone(),
                    input.mu.clone(),
                    input.sigma.clone(),
                    n,
                    (*kappa1, *kappa2),
                    *formulation,
                )?;
                padm_solve(&prob, padm)?.z
            }
        };
        Ok((0..z.len()).filter(|&i| z[i] == 1.0).collect())
    }

    pub fn roster(cfg: &ExperimentConfig) -> Vec<MethodPoint> {
        let mut out = Vec::new();
        if cfg.methods.top_n {
            out.push(MethodPoint::TopN);
        }
        if let Some(mv) = &cfg.methods.mean_variance {
            out.extend(mv.alphas.iter().map(|&alpha| MethodPoint::MeanVariance {
                alpha,
                strategy: mv.strategy,
            }));
        }
        if let Some(dro) = &cfg.methods.dro {
            out.extend(dro.kappas.iter().map(|&(kappa1, kappa2)| MethodPoint::Dro {
                kappa1,
                kappa2,
                formulation: dro.formulation,
            }));
        }
        out
    }
}

/// Estimates for one target user over their candidate items.
#[derive(Debug, Clone)]
pub struct UserInput {
    pub user: usize,
    pub candidates: Vec<usize>,
    pub mu: DVector<f64>,
    pub sigma: DMatrix<f64>,
}

pub fn prepare_users(
    split: &SplitDataset,
    model: &FactorModel,
    table: &CovarianceTable,
    users: &[usize],
    shrinkage: &ShrinkageConfig,
) -> Result<Vec<UserInput>> {
    users
        .par_iter()
        .map(|&user| {
            let candidates = candidate_set(user, split)?;
            let mu = predicted_mean_vector(model, user, &candidates)?;
            let sigma = user_covariance(table, &candidates, shrinkage)?.matrix;
            Ok(UserInput {
                user,
                candidates,
                mu,
                sigma,
            })
        })
        .collect()
}

/// Item ids of the chosen positions, best prediction first.
pub fn rank_selection(input: &UserInput, picked: &[usize]) -> Vec<usize> {
    let mut order = picked.to_vec();
    order.sort_by(|&a, &b| input.mu[b].total_cmp(&input.mu[a]).then(a.cmp(&b)));
    order.into_iter().map(|p| input.candidates[p]).collect()
}

fn load_dataset(cfg: &DatasetConfig) -> Result<RatingDataset> {
    match cfg {
        DatasetConfig::File { path, schema } => {
            let (ds, report) = parse_ratings(path, schema)?;
            info!("{}: {} ratings, {report:?}", path.display(), ds.len());
            Ok(ds)
        }
        DatasetConfig::Synthetic(s) => generate(s),
    }
}

fn thread_pool() -> Result<rayon::ThreadPool> {
    let threads = match std::env::var("RECSEL_THREADS") {
        Ok(v) => v
            .parse()
            .map_err(|_| Error::Config(format!("RECSEL_THREADS={v} is not a thread count")))?,
        Err(_) => 0,
    };
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::Config(e.to_string()))
}

/// Runs every configured method on every run. With `out_dir` set the report
/// files are rewritten after each completed run, so a failure leaves the
/// results of the runs before it on disk.
pub fn run_experiment(cfg: &ExperimentConfig, out_dir: Option<&Path>) -> Result<Report> {
    cfg.validate()?;
    let ds = load_dataset(&cfg.dataset).map_err(|e| e.in_stage("load"))?;
    if !(ds.scale.0..=ds.scale.1).contains(&cfg.threshold) {
        return Err(Error::Config(format!(
            "threshold {} outside rating scale {:?}",
            cfg.threshold, ds.scale
        )));
    }
    let pool = thread_pool()?;
    let roster = MethodPoint::roster(cfg);
    let mut report = Report::default();
    for r in 0..cfg.runs {
        let seed = cfg.base_seed + r as u64;
        let label = |stage: &str| format!("run {r}: {stage}");
        let split = split_train_test(&ds, cfg.split_ratio, seed, cfg.min_ratings).map_err(|e| e.in_stage(label("split")))?;
        let mf = crate::predictor::MfConfig {
            seed,
            ..cfg.predictor.clone()
        };
        let model = fit_mf(&split.train, &mf).map_err(|e| e.in_stage(label("predictor")))?;
        let table = pairwise_covariance(&split.train).map_err(|e| e.in_stage(label("covariance")))?;
        let n_max = *cfg.list_sizes.iter().max().expect("validated nonempty");
        let users = sample_target_users(&split, cfg.users_per_run, n_max, seed).map_err(|e| e.in_stage(label("users")))?;
        let inputs = pool
            .install(|| prepare_users(&split, &model, &table, &users, &cfg.shrinkage))
            .map_err(|e| e.in_stage(label("estimates")))?;
        info!("run {r}: {} users, train rmse {:?}", inputs.len(), model.train_rmse.last());

        for &n in &cfg.list_sizes {
            for method in &roster {
                let param = method.param(n);
                let picks: Vec<(Vec<usize>, f64)> = pool.install(|| {
                    inputs
                        .par_iter()
                        .map(|input| {
                            let start = Instant::now();
                            let picked = method.select(input, n, &cfg.padm).map_err(|e| {
                                e.in_stage(format!("run {r}: {} {param} user {}", method.name(), split.user_token(input.user)))
                            })?;
                            let secs = if cfg.timing { start.elapsed().as_secs_f64() } else { 0.0 };
                            Ok((rank_selection(input, &picked), secs))
                        })
                        .collect::<Result<Vec<_>>>()
                })?;
                let lists: Vec<(usize, Vec<usize>)> = inputs.iter().zip(&picks).map(|(i, p)| (i.user, p.0.clone())).collect();
                let (f1, diversity) = score_lists(&split, &lists, cfg.threshold)?;
                let times: Vec<f64> = picks.iter().map(|p| p.1).collect();
                info!(
                    "run {r}: {} {param}: f1 {:.4}, diversity {:.4}",
                    method.name(),
                    mean(&f1),
                    diversity
                );
                for (user, items) in &lists {
                    for (rank, &item) in items.iter().enumerate() {
                        report.selections.push(SelectionRow {
                            run: r,
                            user_id: split.user_token(*user).to_owned(),
                            method: method.name().into(),
                            param: param.clone(),
                            rank: rank + 1,
                            item_id: split.item_token(item).to_owned(),
                        });
                    }
                }
                report.runs.push(RunRow {
                    run: r,
                    method: method.name().into(),
                    param,
                    f1: mean(&f1),
                    diversity,
                    times,
                });
            }
        }
        report.aggregate();
        if let Some(dir) = out_dir {
            report.write(dir)?;
        }
    }
    Ok(report)
}

pub(crate) fn mean(v: &[f64]) -> f64 {
    if v.is_empty() {
        0.0
    } else {
        v.iter().sum::<f64>() / v.len() as f64
    }
}
