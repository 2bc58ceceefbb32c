use crate::config::{ConfigError, RunConfig, SweepParameter};
use rayon::prelude::*;
use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use tsec_core::arm_space::{enumerate_arms, write_arms_csv};
use tsec_core::bandit::write_regret_csv;
use tsec_core::engine::write_armsets_csv;
use tsec_core::portfolio::{self, load_prices, write_rewards_csv, write_wealth_csv};
use tsec_core::study::{
    child_rng, regret_rows, replicate_truth, run_replicate, summarize, write_summary_csv, Method, ReplicateResult,
    StudyConfig,
};
use tsec_core::Error;

/// Seed stream of the portfolio backtest.
const BACKTEST_STREAM: u64 = 6;

pub struct Context {
    pub seed: u64,
    pub out: PathBuf,
    pub workers: usize,
}

#[derive(Debug)]
pub enum Failure {
    Config(String),
    Runtime(String),
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        Failure::Config(e.0)
    }
}

fn runtime(e: impl std::fmt::Display) -> Failure {
    Failure::Runtime(e.to_string())
}

fn config_err(e: Error) -> Failure {
    Failure::Config(e.to_string())
}

fn create(path: &Path) -> Result<BufWriter<File>, Failure> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| runtime(format!("cannot create {}: {e}", dir.display())))?;
    }
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| runtime(format!("cannot create {}: {e}", path.display())))
}

fn pool(workers: usize) -> Result<rayon::ThreadPool, Failure> {
    rayon::ThreadPoolBuilder::new().num_threads(workers).build().map_err(runtime)
}

/// Runs every replicate on the worker pool; results come back in
/// replicate order, so output does not depend on the worker count.
fn run_study(study: &StudyConfig, ctx: &Context) -> Result<Vec<ReplicateResult>, Failure> {
    let seed = ctx.seed;
    pool(ctx.workers)?
        .install(|| {
            (0..study.replicates)
                .into_par_iter()
                .map(|r| run_replicate(study, seed, r))
                .collect::<Result<Vec<_>, _>>()
        })
        .map_err(runtime)
}

fn write_study(dir: &Path, results: &[ReplicateResult], dump_chain: bool) -> Result<(), Failure> {
    write_regret_csv(&regret_rows(results), create(&dir.join("regret.csv"))?).map_err(runtime)?;
    let histories: Vec<_> = results
        .iter()
        .filter_map(|r| r.run(Method::Tsec).map(|m| (r.replicate, &m.history)))
        .collect();
    write_armsets_csv(&histories, create(&dir.join("armsets.csv"))?).map_err(runtime)?;
    for r in results {
        let path = dir.join("truth").join(format!("replicate_{}.csv", r.replicate));
        r.truth.write_csv(create(&path)?).map_err(runtime)?;
    }
    if dump_chain {
        let chain = results
            .first()
            .and_then(|r| r.run(Method::Tsec))
            .and_then(|m| m.final_chain.as_ref());
        if let Some(chain) = chain {
            chain.write_csv(create(&dir.join("chain.csv"))?).map_err(runtime)?;
        }
    }
    Ok(())
}

fn study_config(cfg: &RunConfig) -> Result<StudyConfig, Failure> {
    let mut study = cfg.study()?;
    study.keep_final_chain = cfg.study.dump_chain.unwrap_or(false);
    study.validate().map_err(config_err)?;
    Ok(study)
}

pub fn simulate(cfg: &RunConfig, ctx: &Context) -> Result<(), Failure> {
    let study = study_config(cfg)?;
    let results = run_study(&study, ctx)?;
    write_study(&ctx.out, &results, study.keep_final_chain)?;
    eprintln!(
        "simulate: {} replicates x {} methods written to {}",
        results.len(),
        study.methods.len(),
        ctx.out.display()
    );
    Ok(())
}

pub fn sweep(cfg: &RunConfig, ctx: &Context) -> Result<(), Failure> {
    let sweep = cfg
        .sweep
        .as_ref()
        .ok_or_else(|| Failure::Config("sweep needs a [sweep] section".into()))?;
    if sweep.values.is_empty() {
        return Err(Failure::Config("sweep.values is empty".into()));
    }
    // Only the swept points are validated; the base point may be invalid alone.
    let mut base = cfg.study()?;
    base.keep_final_chain = cfg.study.dump_chain.unwrap_or(false);
    let label = match sweep.parameter {
        SweepParameter::NumFactors => "num_factors",
        SweepParameter::ActiveSetSize => "active_set_size",
    };
    let points = &sweep.values;
    let studies: Vec<StudyConfig> = points
        .iter()
        .map(|&v| {
            let mut s = base.clone();
            match sweep.parameter {
                SweepParameter::NumFactors => s.num_factors = v,
                SweepParameter::ActiveSetSize => s.tsec.active_set_size = v,
            }
            s.validate()
                .map_err(|e| Failure::Config(format!("sweep point {label}={v}: {e}")))?;
            Ok(s)
        })
        .collect::<Result<_, Failure>>()?;
    let mut summary = Vec::new();
    for (v, study) in points.iter().zip(&studies) {
        let results = run_study(study, ctx)?;
        write_study(&ctx.out.join(format!("{label}_{v}")), &results, study.keep_final_chain)?;
        summary.extend(summarize(&v.to_string(), &results));
        eprintln!("sweep: {label}={v} done");
    }
    write_summary_csv(&summary, create(&ctx.out.join("summary.csv"))?).map_err(runtime)?;
    Ok(())
}

pub fn backtest(cfg: &RunConfig, ctx: &Context) -> Result<(), Failure> {
    let config = cfg.backtest()?;
    config.validate().map_err(config_err)?;
    let (prices_path, industries_path) = cfg.price_paths()?;
    let (prices, report) = load_prices(&prices_path, &industries_path).map_err(runtime)?;
    for (ticker, date) in &report.filled {
        eprintln!("backtest: forward-filled {ticker} on {date}");
    }
    let mut rng = child_rng(ctx.seed, 0, BACKTEST_STREAM);
    let outcome = portfolio::backtest(&prices, &config, &mut rng).map_err(runtime)?;
    write_wealth_csv(&outcome, create(&ctx.out.join("wealth.csv"))?).map_err(runtime)?;
    write_rewards_csv(&outcome.rewards, create(&ctx.out.join("rewards.csv"))?).map_err(runtime)?;
    write_armsets_csv(&[(0, &outcome.history)], create(&ctx.out.join("armsets.csv"))?).map_err(runtime)?;
    for s in &outcome.wealth {
        eprintln!("backtest: {} final wealth {:.4}", s.method, s.wealth.last().copied().unwrap_or(1.0));
    }
    Ok(())
}

pub fn truth_gen(cfg: &RunConfig, ctx: &Context) -> Result<(), Failure> {
    let study = study_config(cfg)?;
    let space = study.space().map_err(config_err)?;
    let arms = enumerate_arms(&space).map_err(runtime)?;
    write_arms_csv(&space, &arms, create(&ctx.out.join("arms.csv"))?).map_err(runtime)?;
    for r in 0..study.replicates {
        let truth = replicate_truth(&study, ctx.seed, r).map_err(runtime)?;
        let path = ctx.out.join("truth").join(format!("replicate_{r}.csv"));
        truth.write_csv(create(&path)?).map_err(runtime)?;
    }
    eprintln!("truth-gen: {} truths written to {}", study.replicates, ctx.out.display());
    Ok(())
}
