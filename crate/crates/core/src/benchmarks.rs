//! Standard Thompson-sampling baselines with different active-set policies.
//!
//! All three start from a random regular fraction and run Beta-Bernoulli
//! Thompson sampling inside the active set, updating after every pull.
//! - B1 never changes the active set.
//! - B2 drops arms whose probability of being best falls under a threshold
//!   and refills with uniformly random inactive arms.
//! - B3 re-picks the K arms with the highest probability of being best over
//!   the whole space, with never-played arms at Beta(1, 1).

use crate::arm_space::{random_arm_subset, random_regular_fraction, Arm, FactorSpace};
use crate::bandit::{
    beta_update, cumulative_regret, prob_best, ts_select, AllocationRecord, BernoulliEnv, BetaState, Environment,
    RegretPoint,
};
use crate::engine::{top_k_uniform, SwitchHistory};
use crate::error::{invalid, Result};
use rand::seq::index;
use rand::Rng;
use std::collections::BTreeSet;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BenchmarkVariant {
    B1,
    B2,
    B3,
}

impl BenchmarkVariant {
    pub fn name(&self) -> &'static str {
        match self {
            BenchmarkVariant::B1 => "B1",
            BenchmarkVariant::B2 => "B2",
            BenchmarkVariant::B3 => "B3",
        }
    }
}

#[derive(Debug, Clone)]
pub struct BenchmarkConfig {
    pub variant: BenchmarkVariant,
    pub active_set_size: usize,
    pub runs_per_period: usize,
    pub periods_per_switch: usize,
    pub switches: usize,
    /// q in 2^(M−q); must satisfy K = 2^(M−q) on two-level spaces.
    pub fraction_power: usize,
    /// B2 discards arms whose probability of being best is below this.
    pub discard_threshold: f64,
    /// Monte Carlo rounds for probability-of-best estimates.
    pub prob_best_rounds: usize,
    /// Keep Beta counts of discarded arms so a re-added arm resumes them.
    pub retain_discarded_state: bool,
    /// Fixed first active set in place of a random fraction.
    pub initial_arms: Option<Vec<usize>>,
}

impl Default for BenchmarkConfig {
    fn default() -> Self {
        Self {
            variant: BenchmarkVariant::B1,
            active_set_size: 16,
            runs_per_period: 100,
            periods_per_switch: 50,
            switches: 5,
            fraction_power: 6,
            discard_threshold: 0.05,
            prob_best_rounds: 1000,
            retain_discarded_state: true,
            initial_arms: None,
        }
    }
}

impl BenchmarkConfig {
    pub fn validate(&self, space: &FactorSpace) -> Result<()> {
        let k = self.active_set_size;
        if k < 1 || k > space.num_arms() {
            return Err(invalid(format!("active set size {k} must lie in 1..={}", space.num_arms())));
        }
        if space.is_two_level() {
            let m = space.num_factors();
            if self.fraction_power >= m || (1usize << (m - self.fraction_power)) != k {
                return Err(invalid(format!(
                    "active set size {k} is not 2^({m}-{})",
                    self.fraction_power
                )));
            }
            let basic = m - self.fraction_power;
            let words = (1usize << basic) - basic - 1;
            if self.fraction_power > words {
                return Err(invalid(format!(
                    "no regular 2^({m}-{}) fraction exists: {basic} basic factors give only {words} generator words",
                    self.fraction_power
                )));
            }
        }
        if self.runs_per_period == 0 || self.periods_per_switch == 0 || self.switches == 0 {
            return Err(invalid("runs, periods and switches must be positive"));
        }
        if !(self.discard_threshold > 0.0 && self.discard_threshold < 1.0) {
            return Err(invalid(format!(
                "discard threshold must lie in (0, 1), got {}",
                self.discard_threshold
            )));
        }
        if self.prob_best_rounds == 0 {
            return Err(invalid("need at least one probability-of-best round"));
        }
        if let Some(arms) = &self.initial_arms {
            crate::engine::check_arm_set(space, arms, k)?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct BenchmarkOutcome {
    pub records: Vec<AllocationRecord>,
    pub history: SwitchHistory,
    pub states: BetaState,
    pub regret: Vec<RegretPoint>,
}

fn initial_set<R: Rng + ?Sized>(space: &FactorSpace, config: &BenchmarkConfig, rng: &mut R) -> Result<Vec<usize>> {
    if let Some(arms) = &config.initial_arms {
        return Ok(arms.clone());
    }
    let arms = if space.is_two_level() {
        random_regular_fraction(space, config.fraction_power, rng)?
    } else {
        random_arm_subset(space, config.active_set_size, rng)?
    };
    Ok(arms.iter().map(Arm::index).collect())
}

fn play_period<E: Environment, R: Rng + ?Sized>(
    states: &mut BetaState,
    active: &[usize],
    runs: usize,
    switch: u32,
    period: u32,
    env: &mut E,
    rng: &mut R,
) -> Result<AllocationRecord> {
    let mut rec = AllocationRecord::new(switch, period);
    for _ in 0..runs {
        let a = ts_select(states, active, rng)?;
        let y = env.pull(a, rng);
        beta_update(states, a, y);
        rec.add(a, y);
    }
    Ok(rec)
}

/// B2 switch rule; returns the new active set.
fn discard_and_refill<R: Rng + ?Sized>(
    states: &mut BetaState,
    active: &[usize],
    config: &BenchmarkConfig,
    rng: &mut R,
) -> Result<Vec<usize>> {
    let probs = prob_best(states, active, config.prob_best_rounds, rng)?;
    let (mut keep, mut drop): (Vec<(usize, f64)>, Vec<(usize, f64)>) = active
        .iter()
        .copied()
        .zip(probs)
        .partition(|&(_, p)| p >= config.discard_threshold);
    let current: BTreeSet<usize> = active.iter().copied().collect();
    let pool: Vec<usize> = (0..states.num_arms()).filter(|a| !current.contains(a)).collect();
    let fresh = drop.len().min(pool.len());
    if fresh < drop.len() {
        // Not enough inactive arms: keep the most promising discards.
        drop.sort_by(|a, b| b.1.total_cmp(&a.1));
        keep.extend(drop.drain(..drop.len() - fresh));
    }
    let mut next: Vec<usize> = keep.into_iter().map(|(a, _)| a).collect();
    for i in index::sample(rng, pool.len(), fresh) {
        let a = pool[i];
        if !config.retain_discarded_state {
            states.reset(a);
        }
        next.push(a);
    }
    if !config.retain_discarded_state {
        for (a, _) in drop {
            states.reset(a);
        }
    }
    Ok(next)
}

/// Runs one baseline on `env`; `config.variant` selects the switch rule.
pub fn run_benchmark<R: Rng + ?Sized>(
    space: &FactorSpace,
    env: &BernoulliEnv,
    config: &BenchmarkConfig,
    rng: &mut R,
) -> Result<BenchmarkOutcome> {
    config.validate(space)?;
    if env.num_arms() != space.num_arms() {
        return Err(invalid("environment and arm space disagree on the number of arms"));
    }
    let mut env_mut = env.clone();
    let mut states = BetaState::uniform(space.num_arms());
    let mut active = initial_set(space, config, rng)?;
    let mut history = SwitchHistory::default();
    history.push(1, &active);
    let mut records = Vec::with_capacity(config.switches * config.periods_per_switch);
    let all: Vec<usize> = (0..space.num_arms()).collect();

    for s in 1..=config.switches as u32 {
        for t in 1..=config.periods_per_switch as u32 {
            records.push(play_period(
                &mut states,
                &active,
                config.runs_per_period,
                s,
                t,
                &mut env_mut,
                rng,
            )?);
        }
        if s == config.switches as u32 {
            break;
        }
        match config.variant {
            BenchmarkVariant::B1 => {}
            BenchmarkVariant::B2 => {
                active = discard_and_refill(&mut states, &active, config, rng)?;
            }
            BenchmarkVariant::B3 => {
                let probs = prob_best(&states, &all, config.prob_best_rounds, rng)?;
                active = top_k_uniform(&probs, config.active_set_size, rng);
            }
        }
        history.push(s + 1, &active);
    }
    let regret = cumulative_regret(env, &records);
    Ok(BenchmarkOutcome {
        records,
        history,
        states,
        regret,
    })
}

pub fn run_benchmark1<R: Rng + ?Sized>(
    space: &FactorSpace,
    env: &BernoulliEnv,
    config: &BenchmarkConfig,
    rng: &mut R,
) -> Result<BenchmarkOutcome> {
    run_benchmark(space, env, &BenchmarkConfig { variant: BenchmarkVariant::B1, ..config.clone() }, rng)
}

pub fn run_benchmark2<R: Rng + ?Sized>(
    space: &FactorSpace,
    env: &BernoulliEnv,
    config: &BenchmarkConfig,
    rng: &mut R,
) -> Result<BenchmarkOutcome> {
    run_benchmark(space, env, &BenchmarkConfig { variant: BenchmarkVariant::B2, ..config.clone() }, rng)
}

pub fn run_benchmark3<R: Rng + ?Sized>(
    space: &FactorSpace,
    env: &BernoulliEnv,
    config: &BenchmarkConfig,
    rng: &mut R,
) -> Result<BenchmarkOutcome> {
    run_benchmark(space, env, &BenchmarkConfig { variant: BenchmarkVariant::B3, ..config.clone() }, rng)
}
