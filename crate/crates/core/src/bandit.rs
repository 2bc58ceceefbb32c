//! Bernoulli environments, Beta-Bernoulli Thompson sampling and regret
//! accounting under arm-budget constraints.

use crate::error::{invalid, Result};
use rand::Rng;
use rand_distr::{Beta, Distribution};
use std::collections::BTreeMap;
use std::io::Write;

/// Anything that yields a binary reward when an arm is played.
pub trait Environment {
    fn num_arms(&self) -> usize;
    fn pull<R: Rng + ?Sized>(&mut self, arm: usize, rng: &mut R) -> bool;
}

/// Independent Bernoulli arms with known success probabilities.
#[derive(Debug, Clone)]
pub struct BernoulliEnv {
    mu: Vec<f64>,
    mu_star: f64,
    optimal: Vec<usize>,
}

impl BernoulliEnv {
    pub fn new(mu: Vec<f64>) -> Result<Self> {
        if mu.is_empty() {
            return Err(invalid("environment needs at least one arm"));
        }
        if let Some(a) = mu.iter().position(|m| !(0.0..=1.0).contains(m)) {
            return Err(invalid(format!("mu[{a}] = {} outside [0, 1]", mu[a])));
        }
        let mu_star = mu.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let optimal = (0..mu.len()).filter(|&a| mu[a] == mu_star).collect();
        Ok(Self { mu, mu_star, optimal })
    }

    pub fn mu(&self) -> &[f64] {
        &self.mu
    }

    pub fn mu_star(&self) -> f64 {
        self.mu_star
    }

    pub fn optimal_arms(&self) -> &[usize] {
        &self.optimal
    }
}

impl Environment for BernoulliEnv {
    fn num_arms(&self) -> usize {
        self.mu.len()
    }

    fn pull<R: Rng + ?Sized>(&mut self, arm: usize, rng: &mut R) -> bool {
        pull(self, arm, rng)
    }
}

/// One Bernoulli(μ_a) draw.
pub fn pull<R: Rng + ?Sized>(env: &BernoulliEnv, arm: usize, rng: &mut R) -> bool {
    rng.random::<f64>() < env.mu[arm]
}

/// Beta(α, β) posterior per arm, starting from Beta(1, 1).
#[derive(Debug, Clone, PartialEq)]
pub struct BetaState {
    alpha: Vec<f64>,
    beta: Vec<f64>,
}

impl BetaState {
    pub fn uniform(num_arms: usize) -> Self {
        Self {
            alpha: vec![1.0; num_arms],
            beta: vec![1.0; num_arms],
        }
    }

    pub fn num_arms(&self) -> usize {
        self.alpha.len()
    }

    pub fn params(&self, arm: usize) -> (f64, f64) {
        (self.alpha[arm], self.beta[arm])
    }

    pub fn set(&mut self, arm: usize, alpha: f64, beta: f64) {
        self.alpha[arm] = alpha;
        self.beta[arm] = beta;
    }

    pub fn reset(&mut self, arm: usize) {
        self.set(arm, 1.0, 1.0);
    }

    /// α + β − 2.
    pub fn observations(&self, arm: usize) -> f64 {
        self.alpha[arm] + self.beta[arm] - 2.0
    }

    fn draw<R: Rng + ?Sized>(&self, arm: usize, rng: &mut R) -> f64 {
        let (a, b) = self.params(arm);
        if a == 1.0 && b == 1.0 {
            return rng.random();
        }
        Beta::new(a, b)
            .expect("Beta parameters stay at or above 1")
            .sample(rng)
    }
}

/// Increments α on a success and β on a failure.
pub fn beta_update(states: &mut BetaState, arm: usize, reward: bool) {
    if reward {
        states.alpha[arm] += 1.0;
    } else {
        states.beta[arm] += 1.0;
    }
}

/// Index of the maximum, ties broken uniformly at random.
pub(crate) fn argmax_uniform<R: Rng + ?Sized>(values: &[f64], rng: &mut R) -> usize {
    let mut best = f64::NEG_INFINITY;
    let mut pick = 0;
    let mut ties = 0u32;
    for (i, &v) in values.iter().enumerate() {
        if v > best {
            best = v;
            pick = i;
            ties = 1;
        } else if v == best {
            ties += 1;
            // Reservoir sampling over the tied set.
            if rng.random_range(0..ties) == 0 {
                pick = i;
            }
        }
    }
    pick
}

/// Thompson draw over `candidates`; returns the winning arm index.
pub fn ts_select<R: Rng + ?Sized>(states: &BetaState, candidates: &[usize], rng: &mut R) -> Result<usize> {
    if candidates.is_empty() {
        return Err(invalid("Thompson sampling needs at least one candidate arm"));
    }
    let draws: Vec<f64> = candidates.iter().map(|&a| states.draw(a, rng)).collect();
    Ok(candidates[argmax_uniform(&draws, rng)])
}

/// Monte Carlo probability that each candidate has the largest mean.
///
/// Each of `rounds` rounds draws once from every candidate's posterior; a
/// round's win is split evenly among tied maxima.
pub fn prob_best<R: Rng + ?Sized>(
    states: &BetaState,
    candidates: &[usize],
    rounds: usize,
    rng: &mut R,
) -> Result<Vec<f64>> {
    if candidates.is_empty() {
        return Err(invalid("need at least one candidate arm"));
    }
    if rounds == 0 {
        return Err(invalid("need at least one Monte Carlo round"));
    }
    let mut wins = vec![0.0; candidates.len()];
    let mut draws = vec![0.0; candidates.len()];
    let mut tied = Vec::new();
    for _ in 0..rounds {
        for (d, &a) in draws.iter_mut().zip(candidates) {
            *d = states.draw(a, rng);
        }
        let max = draws.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        tied.clear();
        tied.extend((0..draws.len()).filter(|&i| draws[i] == max));
        let share = 1.0 / tied.len() as f64;
        for &i in &tied {
            wins[i] += share;
        }
    }
    Ok(wins.into_iter().map(|w| w / rounds as f64).collect())
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ArmTally {
    pub runs: u64,
    pub successes: u64,
}

/// Runs per arm in one (switch, period) cell.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AllocationRecord {
    pub switch: u32,
    pub period: u32,
    pub arms: BTreeMap<usize, ArmTally>,
}

impl AllocationRecord {
    pub fn new(switch: u32, period: u32) -> Self {
        Self {
            switch,
            period,
            arms: BTreeMap::new(),
        }
    }

    pub fn add(&mut self, arm: usize, reward: bool) {
        let t = self.arms.entry(arm).or_default();
        t.runs += 1;
        t.successes += reward as u64;
    }

    pub fn total_runs(&self) -> u64 {
        self.arms.values().map(|t| t.runs).sum()
    }

    pub fn runs(&self, arm: usize) -> u64 {
        self.arms.get(&arm).map_or(0, |t| t.runs)
    }
}

/// Σ_a n_a (μ* − μ_a) for one period.
pub fn period_regret(env: &BernoulliEnv, record: &AllocationRecord) -> f64 {
    record
        .arms
        .iter()
        .map(|(&a, t)| t.runs as f64 * (env.mu_star - env.mu[a]))
        .sum()
}

/// Σ_a n_a μ_a for one period.
pub fn period_expected_reward(env: &BernoulliEnv, record: &AllocationRecord) -> f64 {
    record.arms.iter().map(|(&a, t)| t.runs as f64 * env.mu[a]).sum()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegretPoint {
    pub switch: u32,
    pub period: u32,
    pub period_regret: f64,
    pub cumulative: f64,
}

/// Running sum of [`period_regret`] over the records in order.
pub fn cumulative_regret(env: &BernoulliEnv, records: &[AllocationRecord]) -> Vec<RegretPoint> {
    let mut total = 0.0;
    records
        .iter()
        .map(|rec| {
            let r = period_regret(env, rec);
            total += r;
            RegretPoint {
                switch: rec.switch,
                period: rec.period,
                period_regret: r,
                cumulative: total,
            }
        })
        .collect()
}

/// One row of regret.csv.
#[derive(Debug, Clone, PartialEq)]
pub struct RegretRow {
    pub method: String,
    pub replicate: usize,
    pub point: RegretPoint,
}

/// Writes `method, replicate, s, t, period_regret, cum_regret`.
pub fn write_regret_csv<W: Write>(rows: &[RegretRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["method", "replicate", "s", "t", "period_regret", "cum_regret"])?;
    for row in rows {
        w.write_record([
            row.method.clone(),
            row.replicate.to_string(),
            row.point.switch.to_string(),
            row.point.period.to_string(),
            row.point.period_regret.to_string(),
            row.point.cumulative.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Plays `pulls` rounds of standard Thompson sampling over every arm of
/// `env`, updating after each pull. Returns the arm played at each step.
pub fn run_standard_ts<E: Environment, R: Rng + ?Sized>(
    env: &mut E,
    pulls: usize,
    rng: &mut R,
) -> Result<Vec<usize>> {
    let candidates: Vec<usize> = (0..env.num_arms()).collect();
    let mut states = BetaState::uniform(env.num_arms());
    let mut played = Vec::with_capacity(pulls);
    for _ in 0..pulls {
        let a = ts_select(&states, &candidates, rng)?;
        let y = env.pull(a, rng);
        beta_update(&mut states, a, y);
        played.push(a);
    }
    Ok(played)
}
