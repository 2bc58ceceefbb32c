//! Industry-strategy portfolio application.
//!
//! Each arm assigns one of four strategies to every industry; a period's
//! reward is 1 when the arm's daily Sharpe ratio over the period clears a
//! threshold.

pub mod backtest;
pub mod data;
pub mod strategy;

pub use backtest::{
    arm_return_series, backtest, compound, period_reward, rebalance_rows, write_rewards_csv, write_wealth_csv, ArmPeriod, BacktestConfig,
    BacktestOutcome, PeriodMarket, RewardRow, WealthSeries, TSEC_METHOD,
};
pub use data::{load_prices, read_prices, synthetic_market, weekday_calendar, Industry, PriceTable, ValidationReport};
pub use strategy::{
    industry_weights, mean_variance_weights, mv_objective, reward_from_sharpe, sharpe, value_weights, Lookback,
    SleeveWeights, StrategyCode,
};
