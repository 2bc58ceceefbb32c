//! Browser bindings. Each export returns a JSON string; the plain Rust
//! functions behind them are usable natively.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use tsec_core::arm_space::{enumerate_arms, DesignLayout, FactorSpace};
use tsec_core::engine::row_quantiles;
use tsec_core::probit::{posterior_mu_matrix, run_chain, ChainSettings, TrialLedger};
use tsec_core::study::{child_rng, run_replicate, StudyConfig, TRUTH_STREAM};
use tsec_core::truth::{build_env, sample_truth, SpikeSlabSpec};
use tsec_core::{Error, Result};
use wasm_bindgen::prelude::*;

/// Largest factor count the page accepts for the hand-entered fit.
pub const MAX_FIT_FACTORS: usize = 4;

#[derive(Debug, Serialize)]
pub struct Curve {
    pub method: String,
    /// Cumulative regret after each period.
    pub cumulative: Vec<f64>,
}

#[derive(Debug, Serialize)]
pub struct RegretCurves {
    pub num_arms: usize,
    pub mu_star: f64,
    pub curves: Vec<Curve>,
}

#[derive(Debug, Clone, Copy)]
pub struct StudyParams {
    pub num_factors: usize,
    pub active_set_size: usize,
    pub runs_per_period: usize,
    pub periods_per_switch: usize,
    pub switches: usize,
    pub effect_scale: f64,
    pub seed: u64,
}

/// One replicate of every method on a shared simulated truth.
pub fn regret_curves(p: StudyParams) -> Result<RegretCurves> {
    let mut config = StudyConfig {
        num_factors: p.num_factors,
        replicates: 1,
        ..StudyConfig::default()
    };
    config.tsec.active_set_size = p.active_set_size;
    config.tsec.runs_per_period = p.runs_per_period;
    config.tsec.periods_per_switch = p.periods_per_switch;
    config.tsec.switches = p.switches;
    config.truth.effect_scale = p.effect_scale;
    config.validate()?;
    let rep = run_replicate(&config, p.seed, 0)?;
    Ok(RegretCurves {
        num_arms: config.space()?.num_arms(),
        mu_star: rep.mu_star,
        curves: rep
            .runs
            .iter()
            .map(|m| Curve {
                method: m.method.name().to_string(),
                cumulative: m.regret.iter().map(|r| r.cumulative).collect(),
            })
            .collect(),
    })
}

#[derive(Debug, Serialize)]
pub struct ArmFit {
    pub levels: Vec<u8>,
    pub mean: f64,
    pub lower: f64,
    pub upper: f64,
}

/// Probit-model posterior of every arm of a 2^M space from per-arm counts,
/// with a central 90% interval.
pub fn fit_counts(num_factors: usize, successes: &[u32], failures: &[u32], seed: u64) -> Result<Vec<ArmFit>> {
    if num_factors == 0 || num_factors > MAX_FIT_FACTORS {
        return Err(Error::Validation(format!("fit needs 1..={MAX_FIT_FACTORS} factors")));
    }
    let space = FactorSpace::binary(num_factors)?;
    let arms = enumerate_arms(&space)?;
    if successes.len() != arms.len() || failures.len() != arms.len() {
        return Err(Error::Validation(format!("expected counts for {} arms", arms.len())));
    }
    let mut ledger = TrialLedger::new();
    for (a, (&s, &f)) in successes.iter().zip(failures).enumerate() {
        if s + f > 0 {
            ledger.record_counts(a, 1, 1, u64::from(s), u64::from(f));
        }
    }
    let layout = DesignLayout::new(&space);
    let settings = ChainSettings {
        iterations: 4000,
        burn_in: 1000,
        stride: 2,
        ..ChainSettings::default()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let chain = run_chain(&ledger, &space, &layout, &settings, None, &mut rng)?;
    let mu = posterior_mu_matrix(&chain.betas(), &arms, &layout)?;
    let upper = row_quantiles(&mu, 0.05);
    let lower = row_quantiles(&mu, 0.95);
    Ok(arms
        .iter()
        .enumerate()
        .map(|(a, arm)| ArmFit {
            levels: arm.levels().to_vec(),
            mean: mu.row(a).mean(),
            lower: lower[a],
            upper: upper[a],
        })
        .collect())
}

#[derive(Debug, Serialize)]
pub struct TruthHistogram {
    pub num_arms: usize,
    pub mu_star: f64,
    /// Arm counts over equal-width bins of [0, 1].
    pub counts: Vec<usize>,
}

/// Distribution of true reward probabilities over all arms of one draw.
pub fn truth_histogram(num_factors: usize, effect_scale: f64, bins: usize, seed: u64) -> Result<TruthHistogram> {
    if bins == 0 {
        return Err(Error::Validation("need at least one bin".into()));
    }
    let space = FactorSpace::binary(num_factors)?;
    let spec = SpikeSlabSpec {
        effect_scale,
        ..SpikeSlabSpec::default()
    };
    spec.validate()?;
    let truth = sample_truth(&space, &spec, &mut child_rng(seed, 0, TRUTH_STREAM))?;
    let env = build_env(&truth, &space)?;
    let mut counts = vec![0; bins];
    for &m in env.mu() {
        counts[((m * bins as f64) as usize).min(bins - 1)] += 1;
    }
    Ok(TruthHistogram {
        num_arms: space.num_arms(),
        mu_star: env.mu_star(),
        counts,
    })
}

fn to_json<T: Serialize>(r: Result<T>) -> std::result::Result<String, JsError> {
    let v = r.map_err(|e| JsError::new(&e.to_string()))?;
    serde_json::to_string(&v).map_err(|e| JsError::new(&e.to_string()))
}

#[wasm_bindgen(js_name = regretCurves)]
#[allow(clippy::too_many_arguments)]
pub fn regret_curves_js(
    num_factors: usize,
    active_set_size: usize,
    runs_per_period: usize,
    periods_per_switch: usize,
    switches: usize,
    effect_scale: f64,
    seed: u32,
) -> std::result::Result<String, JsError> {
    to_json(regret_curves(StudyParams {
        num_factors,
        active_set_size,
        runs_per_period,
        periods_per_switch,
        switches,
        effect_scale,
        seed: u64::from(seed),
    }))
}

#[wasm_bindgen(js_name = fitCounts)]
pub fn fit_counts_js(
    num_factors: usize,
    successes: Vec<u32>,
    failures: Vec<u32>,
    seed: u32,
) -> std::result::Result<String, JsError> {
    to_json(fit_counts(num_factors, &successes, &failures, u64::from(seed)))
}

#[wasm_bindgen(js_name = truthHistogram)]
pub fn truth_histogram_js(
    num_factors: usize,
    effect_scale: f64,
    bins: usize,
    seed: u32,
) -> std::result::Result<String, JsError> {
    to_json(truth_histogram(num_factors, effect_scale, bins, u64::from(seed)))
}
