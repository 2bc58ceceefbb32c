//! Per-industry investment strategies and return statistics.

use super::data::PriceTable;
use crate::error::{invalid, Result};
use nalgebra::{DMatrix, DVector};

/// Strategy applied to one industry sleeve; the code doubles as the arm level.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum StrategyCode {
    MeanVariance = 1,
    SoldAll = 2,
    EquallyWeighted = 3,
    ValueWeighted = 4,
}

impl StrategyCode {
    pub const ALL: [StrategyCode; 4] = [
        StrategyCode::MeanVariance,
        StrategyCode::SoldAll,
        StrategyCode::EquallyWeighted,
        StrategyCode::ValueWeighted,
    ];

    pub fn from_level(level: u8) -> Result<Self> {
        Self::ALL
            .get((level as usize).wrapping_sub(1))
            .copied()
            .ok_or_else(|| invalid(format!("strategy level {level} outside 1..=4")))
    }

    pub fn level(self) -> u8 {
        self as u8
    }

    pub fn name(self) -> &'static str {
        match self {
            StrategyCode::MeanVariance => "mean_variance",
            StrategyCode::SoldAll => "sold_all",
            StrategyCode::EquallyWeighted => "equally_weighted",
            StrategyCode::ValueWeighted => "value_weighted",
        }
    }
}

/// Asset weights of a sleeve plus its cash share.
#[derive(Debug, Clone, PartialEq)]
pub struct SleeveWeights {
    pub assets: Vec<f64>,
    pub cash: f64,
}

impl SleeveWeights {
    pub fn equal(n: usize) -> Self {
        Self {
            assets: vec![1.0 / n as f64; n],
            cash: 0.0,
        }
    }
}

/// Inputs the strategies look back on.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Lookback {
    /// Trailing trading days used for the mean-variance estimates.
    pub window: usize,
    /// Trading days in one rebalance period, for the value-weighted rule.
    pub period: usize,
    pub risk_aversion: f64,
}

/// Earliest row at which every strategy has enough history.
pub fn first_usable_row(lookback: &Lookback) -> usize {
    lookback.window.max(lookback.period)
}

/// Weights chosen at the close of `as_of` for the tickers of `industry`.
pub fn industry_weights(
    strategy: StrategyCode,
    prices: &PriceTable,
    industry: usize,
    as_of: usize,
    lookback: &Lookback,
) -> Result<SleeveWeights> {
    let first = first_usable_row(lookback);
    if as_of < first || as_of >= prices.dates().len() {
        let hint = prices
            .dates()
            .get(first)
            .map_or_else(|| "none (series too short)".to_string(), |d| d.to_string());
        return Err(invalid(format!("insufficient history; first usable date is {hint}")));
    }
    let tickers = &prices.industries()[industry].tickers;
    let n = tickers.len();
    Ok(match strategy {
        StrategyCode::SoldAll => SleeveWeights {
            assets: vec![0.0; n],
            cash: 1.0,
        },
        StrategyCode::EquallyWeighted => SleeveWeights::equal(n),
        StrategyCode::ValueWeighted => {
            let prior: Vec<f64> = tickers
                .iter()
                .map(|&t| prices.price(t, as_of) / prices.price(t, as_of - lookback.period) - 1.0)
                .collect();
            value_weights(&prior)
        }
        StrategyCode::MeanVariance => {
            let rows = as_of + 1 - lookback.window..=as_of;
            let returns: Vec<Vec<f64>> = tickers
                .iter()
                .map(|&t| rows.clone().map(|r| prices.daily_return(t, r)).collect())
                .collect();
            let (mean, cov) = sample_moments(&returns)?;
            SleeveWeights {
                assets: mean_variance_weights(&mean, &cov, lookback.risk_aversion)?,
                cash: 0.0,
            }
        }
    })
}

/// Weights proportional to max(return, 0); equal weights when none is positive.
pub fn value_weights(prior_returns: &[f64]) -> SleeveWeights {
    let clamped: Vec<f64> = prior_returns.iter().map(|r| r.max(0.0)).collect();
    let total: f64 = clamped.iter().sum();
    if total > 0.0 {
        SleeveWeights {
            assets: clamped.iter().map(|c| c / total).collect(),
            cash: 0.0,
        }
    } else {
        SleeveWeights::equal(prior_returns.len())
    }
}

/// Sample mean and (n − 1)-normalized covariance of per-asset series.
pub fn sample_moments(series: &[Vec<f64>]) -> Result<(DVector<f64>, DMatrix<f64>)> {
    let k = series.len();
    let n = series.first().map_or(0, Vec::len);
    if k == 0 || n < 2 || series.iter().any(|s| s.len() != n) {
        return Err(invalid("need equal-length series with at least two observations"));
    }
    let mean = DVector::from_iterator(k, series.iter().map(|s| s.iter().sum::<f64>() / n as f64));
    let cov = DMatrix::from_fn(k, k, |i, j| {
        series[i]
            .iter()
            .zip(&series[j])
            .map(|(a, b)| (a - mean[i]) * (b - mean[j]))
            .sum::<f64>()
            / (n - 1) as f64
    });
    Ok((mean, cov))
}

/// Quadratic utility wᵀμ − λ·wᵀΣw.
pub fn mv_objective(w: &[f64], mean: &DVector<f64>, cov: &DMatrix<f64>, risk_aversion: f64) -> f64 {
    let w = DVector::from_column_slice(w);
    w.dot(mean) - risk_aversion * (cov * &w).dot(&w)
}

/// Largest number of assets the exhaustive active-set search accepts.
pub const MAX_MV_ASSETS: usize = 16;

/// Long-only, fully invested maximizer of wᵀμ − λ·wᵀΣw.
///
/// Every nonempty support is tried: on a support the equality-constrained
/// problem is a linear KKT system, and the best nonnegative solution over
/// all supports is the global optimum. Σ gets a ridge of 1e−8·trace(Σ).
pub fn mean_variance_weights(mean: &DVector<f64>, cov: &DMatrix<f64>, risk_aversion: f64) -> Result<Vec<f64>> {
    let k = mean.len();
    if k == 0 || k > MAX_MV_ASSETS || cov.shape() != (k, k) {
        return Err(invalid(format!("mean-variance needs 1..={MAX_MV_ASSETS} assets and a matching covariance")));
    }
    if !(risk_aversion > 0.0 && risk_aversion.is_finite()) {
        return Err(invalid("risk aversion must be positive"));
    }
    let ridge = 1e-8 * cov.trace().max(f64::MIN_POSITIVE);
    let mut sigma = cov.clone();
    for i in 0..k {
        sigma[(i, i)] += ridge;
    }
    let mut best: Option<(f64, Vec<f64>)> = None;
    for mask in 1u32..(1 << k) {
        let support: Vec<usize> = (0..k).filter(|i| mask >> i & 1 == 1).collect();
        let s = support.len();
        let mut kkt = DMatrix::zeros(s + 1, s + 1);
        let mut rhs = DVector::zeros(s + 1);
        for (a, &i) in support.iter().enumerate() {
            for (b, &j) in support.iter().enumerate() {
                kkt[(a, b)] = 2.0 * risk_aversion * sigma[(i, j)];
            }
            kkt[(a, s)] = 1.0;
            kkt[(s, a)] = 1.0;
            rhs[a] = mean[i];
        }
        rhs[s] = 1.0;
        let Some(sol) = kkt.lu().solve(&rhs) else {
            continue;
        };
        if sol.iter().any(|v| !v.is_finite()) || (0..s).any(|a| sol[a] < -1e-12) {
            continue;
        }
        let mut w = vec![0.0; k];
        for (a, &i) in support.iter().enumerate() {
            w[i] = sol[a].max(0.0);
        }
        let total: f64 = w.iter().sum();
        w.iter_mut().for_each(|v| *v /= total);
        let value = mv_objective(&w, mean, &sigma, risk_aversion);
        if best.as_ref().is_none_or(|(b, _)| value > *b) {
            best = Some((value, w));
        }
    }
    best.map(|(_, w)| w)
        .ok_or_else(|| crate::error::Error::Sampler("mean-variance search found no feasible support".into()))
}

/// Mean over sample standard deviation. A standard deviation that is zero
/// up to rounding yields +∞, −∞ or 0 according to the sign of the mean.
pub fn sharpe(returns: &[f64]) -> Result<f64> {
    let n = returns.len();
    if n < 2 {
        return Err(invalid("Sharpe ratio needs at least two observations"));
    }
    let mean = returns.iter().sum::<f64>() / n as f64;
    let var = returns.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    let sd = var.sqrt();
    if sd <= 1e-10 * mean.abs() || sd == 0.0 {
        return Ok(if mean > 0.0 {
            f64::INFINITY
        } else if mean < 0.0 {
            f64::NEG_INFINITY
        } else {
            0.0
        });
    }
    Ok(mean / sd)
}

/// Relative slack under which a Sharpe ratio counts as equal to τ.
pub const THRESHOLD_TIE_TOLERANCE: f64 = 1e-12;

/// Binary reward: Sharpe ≥ τ (or > τ when `strict`). Values within
/// [`THRESHOLD_TIE_TOLERANCE`] of τ count as ties.
pub fn reward_from_sharpe(sr: f64, tau: f64, strict: bool) -> bool {
    let slack = THRESHOLD_TIE_TOLERANCE * tau.abs().max(1.0);
    if strict {
        sr > tau + slack
    } else {
        sr >= tau - slack
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::portfolio::data::weekday_calendar;
    use chrono::NaiveDate;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn flat_table(days: usize) -> PriceTable {
        let dates = weekday_calendar(NaiveDate::from_ymd_opt(2020, 1, 1).unwrap(), days);
        let members = (0..5).map(|t| (format!("T{t}"), vec![10.0; days])).collect();
        PriceTable::new(dates, vec![("x".into(), members)]).unwrap()
    }

    const LB: Lookback = Lookback {
        window: 10,
        period: 5,
        risk_aversion: 1.0,
    };

    #[test]
    fn codes_round_trip() {
        for c in StrategyCode::ALL {
            assert_eq!(StrategyCode::from_level(c.level()).unwrap(), c);
        }
        assert!(StrategyCode::from_level(0).is_err());
        assert!(StrategyCode::from_level(5).is_err());
    }

    #[test]
    fn sold_all_and_equal() {
        let t = flat_table(20);
        let s = industry_weights(StrategyCode::SoldAll, &t, 0, 12, &LB).unwrap();
        assert_eq!(s.assets, vec![0.0; 5]);
        assert_eq!(s.cash, 1.0);
        let e = industry_weights(StrategyCode::EquallyWeighted, &t, 0, 12, &LB).unwrap();
        assert_eq!(e.assets, vec![0.2; 5]);
        assert_eq!(e.cash, 0.0);
    }

    #[test]
    fn value_weights_clamp_and_normalize() {
        let w = value_weights(&[0.02, 0.02, -0.01, 0.0, 0.0]);
        assert_eq!(w.assets, vec![0.5, 0.5, 0.0, 0.0, 0.0]);
        assert_eq!(value_weights(&[-0.1, 0.0]).assets, vec![0.5, 0.5]);
    }

    #[test]
    fn insufficient_history_names_first_date() {
        let t = flat_table(20);
        let err = industry_weights(StrategyCode::SoldAll, &t, 0, 9, &LB).unwrap_err();
        assert!(err.to_string().contains(&t.dates()[10].to_string()), "{err}");
    }

    #[test]
    fn symmetric_assets_get_equal_weights() {
        let mean = DVector::from_element(5, 0.001);
        let cov = DMatrix::identity(5, 5) * 0.0004;
        let w = mean_variance_weights(&mean, &cov, 1.0).unwrap();
        assert!(w.iter().all(|v| (v - 0.2).abs() < 1e-6), "{w:?}");
    }

    #[test]
    fn dominant_mean_takes_everything() {
        let mean = DVector::from_vec(vec![1.0, 0.0, 0.0]);
        let cov = DMatrix::identity(3, 3) * 0.01;
        let w = mean_variance_weights(&mean, &cov, 1.0).unwrap();
        assert!((w[0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn two_asset_closed_form() {
        // Uncorrelated, unequal variance, equal mean: w ∝ 1/σ².
        let mean = DVector::from_element(2, 0.0);
        let cov = DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 3.0]));
        let w = mean_variance_weights(&mean, &cov, 1.0).unwrap();
        assert!((w[0] - 0.75).abs() < 1e-6 && (w[1] - 0.25).abs() < 1e-6, "{w:?}");
    }

    #[test]
    fn flat_prices_do_not_break_mean_variance() {
        let t = flat_table(20);
        let w = industry_weights(StrategyCode::MeanVariance, &t, 0, 12, &LB).unwrap();
        assert!((w.assets.iter().sum::<f64>() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn sharpe_cases() {
        let a = 0.02 / 2f64.sqrt();
        let sr = sharpe(&[0.001 + a, 0.001 - a]).unwrap();
        assert!((sr - 0.05).abs() < 1e-12);
        assert!(reward_from_sharpe(sr, 0.05, false));
        assert_eq!(sharpe(&[0.0; 5]).unwrap(), 0.0);
        assert_eq!(sharpe(&[0.001; 5]).unwrap(), f64::INFINITY);
        assert_eq!(sharpe(&[-0.001; 5]).unwrap(), f64::NEG_INFINITY);
        assert!(sharpe(&[0.1]).is_err());
        assert!(!reward_from_sharpe(-0.2, 0.05, false));
        assert!(reward_from_sharpe(f64::INFINITY, 0.05, false));
        assert!(!reward_from_sharpe(0.0, 0.05, false));
        assert!(!reward_from_sharpe(0.05, 0.05, true));
    }

    fn random_moments(rng: &mut ChaCha8Rng, k: usize) -> (DVector<f64>, DMatrix<f64>) {
        let mean = DVector::from_fn(k, |_, _| rng.random_range(-0.5..0.5));
        let a = DMatrix::from_fn(k, k, |_, _| rng.random_range(-1.0..1.0));
        (mean, &a * a.transpose() * 0.5)
    }

    #[test]
    fn kkt_solution_beats_random_simplex_points() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..5 {
            let (mean, cov) = random_moments(&mut rng, 5);
            let w = mean_variance_weights(&mean, &cov, 1.0).unwrap();
            let best = mv_objective(&w, &mean, &cov, 1.0);
            for _ in 0..2000 {
                let e: Vec<f64> = (0..5).map(|_| -rng.random::<f64>().ln()).collect();
                let s: f64 = e.iter().sum();
                let p: Vec<f64> = e.iter().map(|v| v / s).collect();
                assert!(mv_objective(&p, &mean, &cov, 1.0) <= best + 1e-9);
            }
        }
    }

    proptest! {
        #[test]
        fn weights_are_on_the_simplex(seed in any::<u64>(), k in 1usize..6) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let (mean, cov) = random_moments(&mut rng, k);
            let w = mean_variance_weights(&mean, &cov, 1.0).unwrap();
            prop_assert!(w.iter().all(|&v| v >= 0.0));
            prop_assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        }

        #[test]
        fn value_weights_are_on_the_simplex(r in proptest::collection::vec(-1.0f64..1.0, 1..8)) {
            let w = value_weights(&r);
            prop_assert!(w.assets.iter().all(|&v| v >= 0.0));
            prop_assert!((w.assets.iter().sum::<f64>() + w.cash - 1.0).abs() < 1e-9);
        }
    }
}
