//! Thompson sampling under an arm-budget constraint.
//!
//! Each time period refits the probit interaction model on every trial so
//! far, thins the chain to one draw per run and plays, for each draw, the
//! active arm with the largest sampled reward probability. At the end of a
//! switch block the active set is replaced by the K arms (out of all N) with
//! the largest posterior (1 − α) quantile.

use crate::arm_space::{random_arm_subset, random_regular_fraction, Arm, DesignLayout, FactorSpace};
use crate::bandit::{argmax_uniform, cumulative_regret, AllocationRecord, BernoulliEnv, Environment, RegretPoint};
use crate::error::{invalid, Result};
use crate::probit::{linear_predictor_matrix, run_chain, thin, ChainInit, ChainSettings, EffectVector, PosteriorChain, Trial, TrialLedger};
use nalgebra::DMatrix;
use rand::seq::{index, SliceRandom};
use rand::Rng;
use std::collections::BTreeSet;
use std::io::Write;

/// How the first active set is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InitDesign {
    RandomSubset,
    /// A random regular two-level fraction when one with K runs exists,
    /// otherwise a random subset.
    RegularFraction,
}

#[derive(Debug, Clone)]
pub struct TsecConfig {
    /// K: arms that may receive runs within one switch block.
    pub active_set_size: usize,
    /// n: runs per time period.
    pub runs_per_period: usize,
    /// T: time periods per switch block.
    pub periods_per_switch: usize,
    /// S: number of switch blocks.
    pub switches: usize,
    /// Upper-quantile level used when switching arms.
    pub alpha: f64,
    pub init_design: InitDesign,
    /// Fixed first active set; overrides `init_design` when present.
    pub initial_arms: Option<Vec<usize>>,
    pub mcmc: ChainSettings,
}

impl Default for TsecConfig {
    fn default() -> Self {
        Self {
            active_set_size: 16,
            runs_per_period: 100,
            periods_per_switch: 50,
            switches: 5,
            alpha: 0.05,
            init_design: InitDesign::RegularFraction,
            initial_arms: None,
            mcmc: ChainSettings::default(),
        }
    }
}

impl TsecConfig {
    pub fn validate(&self, space: &FactorSpace) -> Result<()> {
        let k = self.active_set_size;
        if k < 1 || k > space.num_arms() {
            return Err(invalid(format!(
                "active set size {k} must lie in 1..={}",
                space.num_arms()
            )));
        }
        if self.runs_per_period < k {
            return Err(invalid(format!(
                "runs per period ({}) must be at least the active set size ({k})",
                self.runs_per_period
            )));
        }
        if self.periods_per_switch == 0 || self.switches == 0 {
            return Err(invalid("need at least one switch and one period per switch"));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(invalid(format!("alpha must lie in (0, 1), got {}", self.alpha)));
        }
        if let Some(arms) = &self.initial_arms {
            check_arm_set(space, arms, k)?;
        }
        self.mcmc.validate()
    }
}

/// Checks that `arms` holds exactly `k` distinct arms of `space`.
pub fn check_arm_set(space: &FactorSpace, arms: &[usize], k: usize) -> Result<()> {
    if arms.len() != k {
        return Err(invalid(format!("initial arm set has {} arms, expected {k}", arms.len())));
    }
    if let Some(a) = arms.iter().find(|&&a| a >= space.num_arms()) {
        return Err(invalid(format!("initial arm {a} outside the arm space")));
    }
    if arms.iter().collect::<BTreeSet<_>>().len() != k {
        return Err(invalid("initial arm set repeats an arm"));
    }
    Ok(())
}

/// Active set of one switch block and how it differs from the previous one.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SwitchEntry {
    pub switch: u32,
    pub active: Vec<usize>,
    pub added: Vec<usize>,
    pub removed: Vec<usize>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SwitchHistory {
    pub entries: Vec<SwitchEntry>,
}

impl SwitchHistory {
    pub fn push(&mut self, switch: u32, active: &[usize]) {
        let now: BTreeSet<usize> = active.iter().copied().collect();
        let before: BTreeSet<usize> = self
            .entries
            .last()
            .map(|e| e.active.iter().copied().collect())
            .unwrap_or_default();
        self.entries.push(SwitchEntry {
            switch,
            active: active.to_vec(),
            added: now.difference(&before).copied().collect(),
            removed: before.difference(&now).copied().collect(),
        });
    }

    pub fn active(&self, switch: u32) -> Option<&[usize]> {
        self.entries
            .iter()
            .find(|e| e.switch == switch)
            .map(|e| e.active.as_slice())
    }
}

/// One row of armsets.csv.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ArmAction {
    Kept,
    Added,
    Removed,
}

impl ArmAction {
    pub fn as_str(&self) -> &'static str {
        match self {
            ArmAction::Kept => "kept",
            ArmAction::Added => "added",
            ArmAction::Removed => "removed",
        }
    }
}

/// Writes `replicate, s, arm_index, action` for each history.
pub fn write_armsets_csv<W: Write>(histories: &[(usize, &SwitchHistory)], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["replicate", "s", "arm_index", "action"])?;
    for (rep, hist) in histories {
        for e in &hist.entries {
            let added: BTreeSet<usize> = e.added.iter().copied().collect();
            let mut rows: Vec<(usize, ArmAction)> = e
                .active
                .iter()
                .map(|&a| (a, if added.contains(&a) { ArmAction::Added } else { ArmAction::Kept }))
                .chain(e.removed.iter().map(|&a| (a, ArmAction::Removed)))
                .collect();
            rows.sort_by_key(|&(a, _)| a);
            for (a, action) in rows {
                w.write_record([rep.to_string(), e.switch.to_string(), a.to_string(), action.as_str().into()])?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

/// The fraction power q with 2^(M−q) = K, when such a regular fraction exists.
pub fn fraction_power_for(space: &FactorSpace, k: usize) -> Option<usize> {
    if !space.is_two_level() || !k.is_power_of_two() {
        return None;
    }
    let m = space.num_factors();
    let basic = k.trailing_zeros() as usize;
    if basic >= m || basic < 2 {
        return None;
    }
    let q = m - basic;
    let words = (1usize << basic) - basic - 1;
    (q <= words).then_some(q)
}

/// Draws a first active set of `k` arms under `design`.
pub fn initial_arms<R: Rng + ?Sized>(space: &FactorSpace, k: usize, design: InitDesign, rng: &mut R) -> Result<Vec<Arm>> {
    match (design, fraction_power_for(space, k)) {
        (InitDesign::RegularFraction, Some(q)) => random_regular_fraction(space, q, rng),
        _ => random_arm_subset(space, k, rng),
    }
}

/// Picks 𝒜_1 and plays ⌊n/K⌋ runs on every active arm, with the remaining
/// `n mod K` runs going one each to a uniformly chosen subset of arms.
pub fn initialize<E: Environment, R: Rng + ?Sized>(
    space: &FactorSpace,
    config: &TsecConfig,
    env: &mut E,
    rng: &mut R,
) -> Result<(Vec<usize>, TrialLedger, AllocationRecord)> {
    config.validate(space)?;
    let k = config.active_set_size;
    let n = config.runs_per_period;
    let active: Vec<usize> = match &config.initial_arms {
        Some(arms) => arms.clone(),
        None => initial_arms(space, k, config.init_design, rng)?
            .iter()
            .map(Arm::index)
            .collect(),
    };
    let mut runs = vec![n / k; k];
    for i in index::sample(rng, k, n % k) {
        runs[i] += 1;
    }
    let mut ledger = TrialLedger::new();
    let mut record = AllocationRecord::new(1, 1);
    for (&arm, &count) in active.iter().zip(&runs) {
        for _ in 0..count {
            let y = env.pull(arm, rng);
            ledger.record(Trial {
                arm,
                switch: 1,
                period: 1,
                reward: y,
            });
            record.add(arm, y);
        }
    }
    Ok((active, ledger, record))
}

/// Plays one run per draw on the active arm with the largest sampled reward
/// probability. Φ is monotone, so arms are compared on the linear predictor,
/// which avoids spurious ties where Φ saturates.
#[allow(clippy::too_many_arguments)]
pub fn allocate_period<E: Environment, R: Rng + ?Sized>(
    draws: &[EffectVector],
    active: &[usize],
    space: &FactorSpace,
    layout: &DesignLayout,
    env: &mut E,
    switch: u32,
    period: u32,
    ledger: &mut TrialLedger,
    rng: &mut R,
) -> Result<AllocationRecord> {
    if active.is_empty() {
        return Err(invalid("active arm set is empty"));
    }
    let columns: Vec<Vec<usize>> = active
        .iter()
        .map(|&a| Ok(layout.active_columns(space.arm(a)?.levels())))
        .collect::<Result<_>>()?;
    let mut record = AllocationRecord::new(switch, period);
    let mut eta = vec![0.0; active.len()];
    for beta in draws {
        if beta.len() != layout.dimension() {
            return Err(invalid("draw length does not match the layout"));
        }
        for (e, cols) in eta.iter_mut().zip(&columns) {
            *e = beta.linear_predictor(cols);
        }
        let arm = active[argmax_uniform(&eta, rng)];
        let y = env.pull(arm, rng);
        ledger.record(Trial {
            arm,
            switch,
            period,
            reward: y,
        });
        record.add(arm, y);
    }
    Ok(record)
}

/// 1-based order-statistic index ⌈(1 − α)·count⌉, clamped to 1..=count.
pub fn quantile_index(count: usize, alpha: f64) -> usize {
    // The small offset keeps products like 0.95·20 from rounding up past 19.
    let raw = ((1.0 - alpha) * count as f64 - 1e-9).ceil();
    (raw.max(1.0) as usize).min(count)
}

/// Upper (1 − α) empirical quantile of every row.
pub fn row_quantiles(matrix: &DMatrix<f64>, alpha: f64) -> Vec<f64> {
    let cols = matrix.ncols();
    let k = quantile_index(cols, alpha) - 1;
    let mut buf = vec![0.0; cols];
    (0..matrix.nrows())
        .map(|i| {
            for (j, b) in buf.iter_mut().enumerate() {
                *b = matrix[(i, j)];
            }
            *buf.select_nth_unstable_by(k, f64::total_cmp).1
        })
        .collect()
}

/// Indices of the `k` largest scores, ties broken uniformly at random.
pub fn top_k_uniform<R: Rng + ?Sized>(scores: &[f64], k: usize, rng: &mut R) -> Vec<usize> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.shuffle(rng);
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    order.truncate(k);
    order
}

/// K-argmax over rows of a `[arms × draws]` matrix by row quantile.
pub fn select_from_matrix<R: Rng + ?Sized>(
    matrix: &DMatrix<f64>,
    k: usize,
    alpha: f64,
    rng: &mut R,
) -> Result<Vec<usize>> {
    if matrix.ncols() == 0 {
        return Err(invalid("need at least one posterior draw"));
    }
    if k > matrix.nrows() {
        return Err(invalid(format!("cannot pick {k} of {} arms", matrix.nrows())));
    }
    Ok(top_k_uniform(&row_quantiles(matrix, alpha), k, rng))
}

const SELECTION_CHUNK: usize = 4096;

/// New active set: the `k` arms of the whole space with the largest posterior
/// (1 − α) quantile of μ_a. Quantiles are taken on linear predictors, which
/// ranks arms identically because Φ is strictly increasing.
pub fn select_arm_set<R: Rng + ?Sized>(
    draws: &[EffectVector],
    space: &FactorSpace,
    layout: &DesignLayout,
    k: usize,
    alpha: f64,
    rng: &mut R,
) -> Result<Vec<usize>> {
    if draws.is_empty() {
        return Err(invalid("need at least one posterior draw"));
    }
    let n = space.num_arms();
    if k < 1 || k > n {
        return Err(invalid(format!("cannot pick {k} of {n} arms")));
    }
    let mut scores = Vec::with_capacity(n);
    for start in (0..n).step_by(SELECTION_CHUNK) {
        let arms: Vec<Arm> = (start..(start + SELECTION_CHUNK).min(n))
            .map(|i| space.arm(i))
            .collect::<Result<_>>()?;
        let eta = linear_predictor_matrix(draws, &arms, layout)?;
        scores.extend(row_quantiles(&eta, alpha));
    }
    Ok(top_k_uniform(&scores, k, rng))
}

/// Step-by-step TSEC state, usable with any [`Environment`].
#[derive(Debug)]
pub struct TsecDriver<'a> {
    space: &'a FactorSpace,
    layout: DesignLayout,
    config: TsecConfig,
    active: Vec<usize>,
    ledger: TrialLedger,
    history: SwitchHistory,
    warm: Option<ChainInit>,
    last_chain: Option<PosteriorChain>,
}

impl<'a> TsecDriver<'a> {
    /// Initializes 𝒜_1 and plays the equal-allocation first period (1, 1).
    pub fn start<E: Environment, R: Rng + ?Sized>(
        space: &'a FactorSpace,
        config: TsecConfig,
        env: &mut E,
        rng: &mut R,
    ) -> Result<(Self, AllocationRecord)> {
        let (active, ledger, record) = initialize(space, &config, env, rng)?;
        let mut history = SwitchHistory::default();
        history.push(1, &active);
        let driver = Self {
            space,
            layout: DesignLayout::new(space),
            config,
            active,
            ledger,
            history,
            warm: None,
            last_chain: None,
        };
        Ok((driver, record))
    }

    fn refit<R: Rng + ?Sized>(&mut self, rng: &mut R) -> Result<&PosteriorChain> {
        let chain = run_chain(&self.ledger, self.space, &self.layout, &self.config.mcmc, self.warm.as_ref(), rng)?;
        self.warm = chain.posterior_mean();
        Ok(self.last_chain.insert(chain))
    }

    /// Refits the model and allocates the n runs of period (switch, period).
    pub fn play_period<E: Environment, R: Rng + ?Sized>(
        &mut self,
        switch: u32,
        period: u32,
        env: &mut E,
        rng: &mut R,
    ) -> Result<AllocationRecord> {
        let n = self.config.runs_per_period;
        let draws = {
            let chain = self.refit(rng)?;
            thin(chain, n, rng)?
        };
        allocate_period(
            &draws,
            &self.active,
            self.space,
            &self.layout,
            env,
            switch,
            period,
            &mut self.ledger,
            rng,
        )
    }

    /// Refits on all data and replaces the active set for block `next_switch`.
    pub fn switch_arm_set<R: Rng + ?Sized>(&mut self, next_switch: u32, rng: &mut R) -> Result<()> {
        let draws = self.refit(rng)?.betas();
        self.active = select_arm_set(
            &draws,
            self.space,
            &self.layout,
            self.config.active_set_size,
            self.config.alpha,
            rng,
        )?;
        self.history.push(next_switch, &self.active);
        Ok(())
    }

    pub fn active(&self) -> &[usize] {
        &self.active
    }

    pub fn ledger(&self) -> &TrialLedger {
        &self.ledger
    }

    pub fn history(&self) -> &SwitchHistory {
        &self.history
    }

    pub fn layout(&self) -> &DesignLayout {
        &self.layout
    }

    pub fn last_chain(&self) -> Option<&PosteriorChain> {
        self.last_chain.as_ref()
    }

    pub fn into_parts(self) -> (TrialLedger, SwitchHistory) {
        (self.ledger, self.history)
    }
}

#[derive(Debug, Clone)]
pub struct TsecOutcome {
    pub records: Vec<AllocationRecord>,
    pub history: SwitchHistory,
    pub ledger: TrialLedger,
    pub regret: Vec<RegretPoint>,
}

/// Runs every period of every switch block on `env`.
///
/// Period (1, 1) is the equal-allocation initialization; all later periods
/// are model-driven. The active set is reselected after the last period of
/// every block except the final one.
pub fn run_with<E: Environment, R: Rng + ?Sized>(
    space: &FactorSpace,
    env: &mut E,
    config: &TsecConfig,
    rng: &mut R,
    mut on_period: impl FnMut(&TsecDriver<'_>, &AllocationRecord),
) -> Result<(Vec<AllocationRecord>, TrialLedger, SwitchHistory)> {
    let (mut driver, first) = TsecDriver::start(space, config.clone(), env, rng)?;
    on_period(&driver, &first);
    let mut records = vec![first];
    let switches = config.switches as u32;
    for s in 1..=switches {
        for t in 1..=config.periods_per_switch as u32 {
            if s == 1 && t == 1 {
                continue;
            }
            let rec = driver.play_period(s, t, env, rng)?;
            on_period(&driver, &rec);
            records.push(rec);
        }
        if s < switches {
            driver.switch_arm_set(s + 1, rng)?;
        }
    }
    let (ledger, history) = driver.into_parts();
    Ok((records, ledger, history))
}

/// [`run_with`] on a Bernoulli environment, with regret accounting.
pub fn run<R: Rng + ?Sized>(
    space: &FactorSpace,
    env: &BernoulliEnv,
    config: &TsecConfig,
    rng: &mut R,
) -> Result<TsecOutcome> {
    let mut env_mut = env.clone();
    let (records, ledger, history) = run_with(space, &mut env_mut, config, rng, |_, _| {})?;
    let regret = cumulative_regret(env, &records);
    Ok(TsecOutcome {
        records,
        history,
        ledger,
        regret,
    })
}
