//! Historical backtest: TSEC over industry-strategy arms against the four
//! pure strategies.

use super::data::PriceTable;
use super::strategy::{first_usable_row, industry_weights, reward_from_sharpe, sharpe, Lookback, StrategyCode};
use crate::arm_space::FactorSpace;
use crate::bandit::{AllocationRecord, Environment};
use crate::engine::{InitDesign, SwitchHistory, TsecConfig, TsecDriver};
use crate::error::{invalid, Result};
use chrono::NaiveDate;
use rand::Rng;
use std::collections::HashMap;
use std::io::Write;

#[derive(Debug, Clone)]
pub struct BacktestConfig {
    /// M: industries, which must match the price table.
    pub num_industries: usize,
    /// K, n, T and S of the bandit, plus its sampler settings.
    pub tsec: TsecConfig,
    /// Trading days per period.
    pub rebalance_days: usize,
    /// τ: Sharpe ratio needed for a reward of 1.
    pub sharpe_threshold: f64,
    /// Use Sharpe > τ instead of Sharpe ≥ τ.
    pub strict_threshold: bool,
    /// W: trailing trading days for mean-variance estimates.
    pub estimation_window: usize,
    /// λ of the mean-variance utility.
    pub risk_aversion: f64,
    /// First rebalance date; defaults to the first date with enough history.
    pub start_date: Option<NaiveDate>,
}

impl Default for BacktestConfig {
    fn default() -> Self {
        Self {
            num_industries: 5,
            tsec: TsecConfig {
                active_set_size: 75,
                runs_per_period: 100,
                periods_per_switch: 1,
                switches: 20,
                init_design: InitDesign::RandomSubset,
                ..TsecConfig::default()
            },
            rebalance_days: 30,
            sharpe_threshold: 0.05,
            strict_threshold: false,
            estimation_window: 60,
            risk_aversion: 1.0,
            start_date: None,
        }
    }
}

impl BacktestConfig {
    pub fn lookback(&self) -> Lookback {
        Lookback {
            window: self.estimation_window,
            period: self.rebalance_days,
            risk_aversion: self.risk_aversion,
        }
    }

    pub fn space(&self) -> Result<FactorSpace> {
        FactorSpace::uniform(self.num_industries, 4)
    }

    pub fn total_periods(&self) -> usize {
        self.tsec.switches * self.tsec.periods_per_switch
    }

    pub fn validate(&self) -> Result<()> {
        if self.estimation_window < 2 {
            return Err(invalid("estimation window must be at least 2 trading days"));
        }
        // A Sharpe ratio needs two daily returns.
        if self.rebalance_days < 2 {
            return Err(invalid("rebalance period must be at least 2 trading days"));
        }
        if !self.sharpe_threshold.is_finite() {
            return Err(invalid("Sharpe threshold must be finite"));
        }
        if !(self.risk_aversion > 0.0 && self.risk_aversion.is_finite()) {
            return Err(invalid("risk aversion must be positive"));
        }
        self.tsec.validate(&self.space()?)
    }
}

/// Per-period view of the market: the rebalance row and the sleeve return
/// series of every (industry, strategy).
#[derive(Debug, Clone)]
pub struct PeriodMarket {
    pub as_of: usize,
    pub end: usize,
    // sleeves[industry][strategy level − 1] = daily returns over the period
    sleeves: Vec<[Vec<f64>; 4]>,
}

/// Outcome of holding one arm through one period.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ArmPeriod {
    pub sharpe: f64,
    pub reward: bool,
    /// Compounded return over the period.
    pub period_return: f64,
}

impl PeriodMarket {
    /// Weights fixed at the close of `as_of`, held for `days` trading days.
    pub fn new(prices: &PriceTable, as_of: usize, days: usize, lookback: &Lookback) -> Result<Self> {
        let end = as_of + days;
        if end >= prices.dates().len() {
            return Err(invalid(format!(
                "period starting {} runs past the last date",
                prices.dates()[as_of.min(prices.dates().len() - 1)]
            )));
        }
        let sleeves = (0..prices.industries().len())
            .map(|ind| {
                let tickers = &prices.industries()[ind].tickers;
                let mut out: [Vec<f64>; 4] = Default::default();
                for code in StrategyCode::ALL {
                    let w = industry_weights(code, prices, ind, as_of, lookback)?;
                    out[code.level() as usize - 1] = (as_of + 1..=end)
                        .map(|row| {
                            tickers
                                .iter()
                                .zip(&w.assets)
                                .map(|(&t, wi)| wi * prices.daily_return(t, row))
                                .sum()
                        })
                        .collect();
                }
                Ok(out)
            })
            .collect::<Result<_>>()?;
        Ok(Self { as_of, end, sleeves })
    }

    /// Daily returns of the arm: equal capital per industry sleeve.
    pub fn arm_return_series(&self, levels: &[u8]) -> Result<Vec<f64>> {
        if levels.len() != self.sleeves.len() {
            return Err(invalid(format!(
                "arm has {} levels but the market has {} industries",
                levels.len(),
                self.sleeves.len()
            )));
        }
        let days = self.end - self.as_of;
        let m = levels.len() as f64;
        let mut out = vec![0.0; days];
        for (ind, &l) in levels.iter().enumerate() {
            let code = StrategyCode::from_level(l)?;
            for (o, r) in out.iter_mut().zip(&self.sleeves[ind][code.level() as usize - 1]) {
                *o += r;
            }
        }
        out.iter_mut().for_each(|o| *o /= m);
        Ok(out)
    }

    pub fn evaluate(&self, levels: &[u8], tau: f64, strict: bool) -> Result<ArmPeriod> {
        let series = self.arm_return_series(levels)?;
        let sr = sharpe(&series)?;
        Ok(ArmPeriod {
            sharpe: sr,
            reward: reward_from_sharpe(sr, tau, strict),
            period_return: compound(&series),
        })
    }
}

/// Daily returns of an arm held from the close of `as_of` for `days` rows.
pub fn arm_return_series(
    prices: &PriceTable,
    levels: &[u8],
    as_of: usize,
    days: usize,
    lookback: &Lookback,
) -> Result<Vec<f64>> {
    PeriodMarket::new(prices, as_of, days, lookback)?.arm_return_series(levels)
}

/// Binary reward of an arm over one period (Sharpe ≥ τ).
pub fn period_reward(
    prices: &PriceTable,
    levels: &[u8],
    as_of: usize,
    days: usize,
    lookback: &Lookback,
    tau: f64,
) -> Result<bool> {
    Ok(PeriodMarket::new(prices, as_of, days, lookback)?.evaluate(levels, tau, false)?.reward)
}

/// Π(1 + r) − 1.
pub fn compound(returns: &[f64]) -> f64 {
    returns.iter().fold(1.0, |acc, r| acc * (1.0 + r)) - 1.0
}

/// Rows at which periods 1..=count are rebalanced.
pub fn rebalance_rows(prices: &PriceTable, config: &BacktestConfig) -> Result<Vec<usize>> {
    let first = first_usable_row(&config.lookback());
    let dates = prices.dates();
    let start = match config.start_date {
        None => first,
        Some(d) => {
            let row = dates.partition_point(|x| *x < d);
            if row < first {
                let hint = dates.get(first).map_or("none".to_string(), |d| d.to_string());
                return Err(invalid(format!("start date {d} lacks history; first usable date is {hint}")));
            }
            row
        }
    };
    let count = config.total_periods();
    let last_end = start + count * config.rebalance_days;
    if last_end >= dates.len() {
        return Err(invalid(format!(
            "{count} periods of {} trading days from row {start} need {} dates, have {}",
            config.rebalance_days,
            last_end + 1,
            dates.len()
        )));
    }
    Ok((0..count).map(|p| start + p * config.rebalance_days).collect())
}

/// One period's arm outcomes, evaluated lazily. Rewards are deterministic.
struct PeriodEnv<'a> {
    space: &'a FactorSpace,
    market: PeriodMarket,
    tau: f64,
    strict: bool,
    cache: HashMap<usize, ArmPeriod>,
}

impl PeriodEnv<'_> {
    fn outcome(&mut self, arm: usize) -> ArmPeriod {
        if let Some(o) = self.cache.get(&arm) {
            return *o;
        }
        let levels = self.space.arm(arm).expect("engine plays valid arms");
        let o = self
            .market
            .evaluate(levels.levels(), self.tau, self.strict)
            .expect("validated period has at least two days");
        self.cache.insert(arm, o);
        o
    }
}

impl Environment for PeriodEnv<'_> {
    fn num_arms(&self) -> usize {
        self.space.num_arms()
    }

    fn pull<R: Rng + ?Sized>(&mut self, arm: usize, _rng: &mut R) -> bool {
        self.outcome(arm).reward
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RewardRow {
    pub period: usize,
    pub arm_index: usize,
    pub sharpe: f64,
    pub reward: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct WealthSeries {
    pub method: String,
    /// Starts at 1.0, then one value per period end.
    pub wealth: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct BacktestOutcome {
    /// Rebalance date of period 1 followed by every period's end date.
    pub dates: Vec<NaiveDate>,
    /// TSEC first, then the pure strategies in code order.
    pub wealth: Vec<WealthSeries>,
    /// One row per arm played in each period.
    pub rewards: Vec<RewardRow>,
    pub records: Vec<AllocationRecord>,
    pub history: SwitchHistory,
}

pub const TSEC_METHOD: &str = "tsec";

/// Runs TSEC and the four single-strategy baselines over the same periods.
///
/// Each of the n runs in a period is one capital unit placed on the arm
/// the engine picks; TSEC wealth grows by the capital-weighted mean period
/// return. Baseline `c` holds arm (c, …, c) with full capital.
pub fn backtest<R: Rng + ?Sized>(prices: &PriceTable, config: &BacktestConfig, rng: &mut R) -> Result<BacktestOutcome> {
    config.validate()?;
    if prices.industries().len() != config.num_industries {
        return Err(invalid(format!(
            "price table has {} industries, config expects {}",
            prices.industries().len(),
            config.num_industries
        )));
    }
    let space = config.space()?;
    let lookback = config.lookback();
    let rows = rebalance_rows(prices, config)?;
    let market = |row: usize| PeriodMarket::new(prices, row, config.rebalance_days, &lookback);

    let mut dates = vec![prices.dates()[rows[0]]];
    let mut tsec_wealth = vec![1.0];
    let mut base_wealth: Vec<Vec<f64>> = vec![vec![1.0]; 4];
    let mut rewards = Vec::new();
    let mut records = Vec::new();

    let mut settle = |period: usize, env: &mut PeriodEnv<'_>, record: AllocationRecord| {
        let total = record.total_runs() as f64;
        let mut ret = 0.0;
        for (&arm, tally) in &record.arms {
            let o = env.outcome(arm);
            ret += tally.runs as f64 * o.period_return;
            rewards.push(RewardRow {
                period,
                arm_index: arm,
                sharpe: o.sharpe,
                reward: o.reward,
            });
        }
        let last = *tsec_wealth.last().expect("seeded");
        tsec_wealth.push(last * (1.0 + ret / total));
        for (c, w) in base_wealth.iter_mut().enumerate() {
            let levels = vec![c as u8 + 1; config.num_industries];
            let r = env.market.evaluate(&levels, config.sharpe_threshold, config.strict_threshold)?;
            let last = *w.last().expect("seeded");
            w.push(last * (1.0 + r.period_return));
        }
        dates.push(prices.dates()[env.market.end]);
        records.push(record);
        Ok::<(), crate::Error>(())
    };

    let mut env = PeriodEnv {
        space: &space,
        market: market(rows[0])?,
        tau: config.sharpe_threshold,
        strict: config.strict_threshold,
        cache: HashMap::new(),
    };
    let (mut driver, first) = TsecDriver::start(&space, config.tsec.clone(), &mut env, rng)?;
    settle(1, &mut env, first)?;
    let t_max = config.tsec.periods_per_switch;
    let s_max = config.tsec.switches;
    for s in 1..=s_max {
        for t in 1..=t_max {
            if s == 1 && t == 1 {
                continue;
            }
            let period = (s - 1) * t_max + t;
            env.market = market(rows[period - 1])?;
            env.cache.clear();
            let rec = driver.play_period(s as u32, t as u32, &mut env, rng)?;
            settle(period, &mut env, rec)?;
        }
        if s < s_max {
            driver.switch_arm_set(s as u32 + 1, rng)?;
        }
    }
    let (_, history) = driver.into_parts();

    let mut wealth = vec![WealthSeries {
        method: TSEC_METHOD.to_string(),
        wealth: tsec_wealth,
    }];
    for (c, w) in StrategyCode::ALL.iter().zip(base_wealth) {
        wealth.push(WealthSeries {
            method: c.name().to_string(),
            wealth: w,
        });
    }
    Ok(BacktestOutcome {
        dates,
        wealth,
        rewards,
        records,
        history,
    })
}

/// `date, method, wealth`, grouped by method.
pub fn write_wealth_csv<W: Write>(outcome: &BacktestOutcome, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["date", "method", "wealth"])?;
    for series in &outcome.wealth {
        for (d, v) in outcome.dates.iter().zip(&series.wealth) {
            w.write_record([d.to_string(), series.method.clone(), v.to_string()])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// `period, arm_index, sharpe, reward`.
pub fn write_rewards_csv<W: Write>(rows: &[RewardRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["period", "arm_index", "sharpe", "reward"])?;
    for r in rows {
        w.write_record([
            r.period.to_string(),
            r.arm_index.to_string(),
            r.sharpe.to_string(),
            (r.reward as u8).to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}
