//! TOML run configuration. Every section and key is optional; missing
//! values take the library defaults.

use chrono::NaiveDate;
use serde::Deserialize;
use std::path::{Path, PathBuf};
use tsec_core::engine::{InitDesign, TsecConfig};
use tsec_core::portfolio::BacktestConfig;
use tsec_core::probit::{ChainSettings, Hyperparams};
use tsec_core::study::{Method, StudyConfig};
use tsec_core::truth::{Mixture, SpikeSlabSpec};

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub study: StudySection,
    #[serde(default)]
    pub tsec: TsecSection,
    #[serde(default)]
    pub mcmc: McmcSection,
    #[serde(default)]
    pub benchmarks: BenchmarkSection,
    #[serde(default)]
    pub truth: TruthSection,
    #[serde(default)]
    pub sweep: Option<SweepSection>,
    #[serde(default)]
    pub backtest: BacktestSection,
    /// Directory that relative paths resolve against.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StudySection {
    pub num_factors: Option<usize>,
    pub replicates: Option<usize>,
    pub methods: Option<Vec<String>>,
    pub shared_initial_design: Option<bool>,
    /// Write the final TSEC chain of replicate 0.
    pub dump_chain: Option<bool>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TsecSection {
    pub active_set_size: Option<usize>,
    pub runs_per_period: Option<usize>,
    pub periods_per_switch: Option<usize>,
    pub switches: Option<usize>,
    pub alpha: Option<f64>,
    pub init_design: Option<String>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct McmcSection {
    pub iterations: Option<usize>,
    pub burn_in: Option<usize>,
    pub stride: Option<usize>,
    pub r_grid_size: Option<usize>,
    pub fixed_tau2: Option<f64>,
    pub fixed_r: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BenchmarkSection {
    pub discard_threshold: Option<f64>,
    pub prob_best_rounds: Option<usize>,
    pub retain_discarded_state: Option<bool>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TruthSection {
    pub main_spike_sd: Option<f64>,
    pub main_slab_sd: Option<f64>,
    pub main_active: Option<f64>,
    pub two_factor_spike_sd: Option<f64>,
    pub two_factor_slab_sd: Option<f64>,
    /// Activity probability by active-parent count: none, one, both.
    pub two_factor_active: Option<[f64; 3]>,
    pub three_factor_spike_sd: Option<f64>,
    pub three_factor_slab_sd: Option<f64>,
    /// Activity probability by active-parent count: none .. all three.
    pub three_factor_active: Option<[f64; 4]>,
    pub intercept: Option<f64>,
    pub effect_scale: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepParameter {
    NumFactors,
    ActiveSetSize,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSection {
    pub parameter: SweepParameter,
    pub values: Vec<usize>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BacktestSection {
    pub prices: Option<PathBuf>,
    pub industries: Option<PathBuf>,
    pub num_industries: Option<usize>,
    pub active_set_size: Option<usize>,
    pub runs_per_period: Option<usize>,
    pub periods_per_switch: Option<usize>,
    pub switches: Option<usize>,
    pub alpha: Option<f64>,
    pub rebalance_days: Option<usize>,
    pub sharpe_threshold: Option<f64>,
    pub strict_threshold: Option<bool>,
    pub estimation_window: Option<usize>,
    pub risk_aversion: Option<f64>,
    pub start_date: Option<String>,
}

#[derive(Debug)]
pub struct ConfigError(pub String);

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl RunConfig {
    pub fn load(path: Option<&Path>) -> Result<Self, ConfigError> {
        let Some(path) = path else {
            return Ok(Self {
                base_dir: PathBuf::from("."),
                ..Self::default()
            });
        };
        let text = std::fs::read_to_string(path)
            .map_err(|e| ConfigError(format!("cannot read {}: {e}", path.display())))?;
        let mut cfg = Self::parse(&text).map_err(|e| ConfigError(format!("{}: {}", path.display(), e.0)))?;
        cfg.base_dir = path.parent().map_or_else(|| PathBuf::from("."), Path::to_path_buf);
        Ok(cfg)
    }

    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        toml::from_str(text).map_err(|e| ConfigError(e.to_string()))
    }

    fn mcmc(&self) -> Result<ChainSettings, ConfigError> {
        let d = ChainSettings::default();
        let m = &self.mcmc;
        let fixed_hyper = match (m.fixed_tau2, m.fixed_r) {
            (None, None) => None,
            (Some(t), Some(r)) => Some(Hyperparams::new(t, r).map_err(|e| ConfigError(e.to_string()))?),
            _ => return Err(ConfigError("mcmc.fixed_tau2 and mcmc.fixed_r must be set together".into())),
        };
        Ok(ChainSettings {
            iterations: m.iterations.unwrap_or(d.iterations),
            burn_in: m.burn_in.unwrap_or(d.burn_in),
            stride: m.stride.unwrap_or(d.stride),
            r_grid_size: m.r_grid_size.unwrap_or(d.r_grid_size),
            fixed_hyper,
        })
    }

    pub fn study(&self) -> Result<StudyConfig, ConfigError> {
        let d = StudyConfig::default();
        let t = &self.tsec;
        let init_design = match t.init_design.as_deref() {
            None | Some("regular_fraction") => InitDesign::RegularFraction,
            Some("random_subset") => InitDesign::RandomSubset,
            Some(other) => {
                return Err(ConfigError(format!(
                    "tsec.init_design must be regular_fraction or random_subset, got {other:?}"
                )))
            }
        };
        let methods = match &self.study.methods {
            None => d.methods.clone(),
            Some(names) => names
                .iter()
                .map(|n| Method::parse(n).map_err(|e| ConfigError(e.to_string())))
                .collect::<Result<_, _>>()?,
        };
        let b = &self.benchmarks;
        Ok(StudyConfig {
            num_factors: self.study.num_factors.unwrap_or(d.num_factors),
            tsec: TsecConfig {
                active_set_size: t.active_set_size.unwrap_or(d.tsec.active_set_size),
                runs_per_period: t.runs_per_period.unwrap_or(d.tsec.runs_per_period),
                periods_per_switch: t.periods_per_switch.unwrap_or(d.tsec.periods_per_switch),
                switches: t.switches.unwrap_or(d.tsec.switches),
                alpha: t.alpha.unwrap_or(d.tsec.alpha),
                init_design,
                initial_arms: None,
                mcmc: self.mcmc()?,
            },
            discard_threshold: b.discard_threshold.unwrap_or(d.discard_threshold),
            prob_best_rounds: b.prob_best_rounds.unwrap_or(d.prob_best_rounds),
            retain_discarded_state: b.retain_discarded_state.unwrap_or(d.retain_discarded_state),
            truth: self.truth(),
            replicates: self.study.replicates.unwrap_or(d.replicates),
            methods,
            shared_initial_design: self.study.shared_initial_design.unwrap_or(d.shared_initial_design),
            keep_final_chain: false,
        })
    }

    fn truth(&self) -> SpikeSlabSpec {
        let d = SpikeSlabSpec::default();
        let t = &self.truth;
        SpikeSlabSpec {
            main: Mixture {
                spike_sd: t.main_spike_sd.unwrap_or(d.main.spike_sd),
                slab_sd: t.main_slab_sd.unwrap_or(d.main.slab_sd),
            },
            main_active: t.main_active.unwrap_or(d.main_active),
            two_factor: Mixture {
                spike_sd: t.two_factor_spike_sd.unwrap_or(d.two_factor.spike_sd),
                slab_sd: t.two_factor_slab_sd.unwrap_or(d.two_factor.slab_sd),
            },
            two_factor_active: t.two_factor_active.unwrap_or(d.two_factor_active),
            three_factor: Mixture {
                spike_sd: t.three_factor_spike_sd.unwrap_or(d.three_factor.spike_sd),
                slab_sd: t.three_factor_slab_sd.unwrap_or(d.three_factor.slab_sd),
            },
            three_factor_active: t.three_factor_active.unwrap_or(d.three_factor_active),
            intercept: t.intercept.unwrap_or(d.intercept),
            effect_scale: t.effect_scale.unwrap_or(d.effect_scale),
        }
    }

    pub fn backtest(&self) -> Result<BacktestConfig, ConfigError> {
        let d = BacktestConfig::default();
        let b = &self.backtest;
        let start_date = b
            .start_date
            .as_deref()
            .map(|s| {
                NaiveDate::parse_from_str(s, "%Y-%m-%d")
                    .map_err(|e| ConfigError(format!("backtest.start_date {s:?}: {e}")))
            })
            .transpose()?;
        Ok(BacktestConfig {
            num_industries: b.num_industries.unwrap_or(d.num_industries),
            tsec: TsecConfig {
                active_set_size: b.active_set_size.unwrap_or(d.tsec.active_set_size),
                runs_per_period: b.runs_per_period.unwrap_or(d.tsec.runs_per_period),
                periods_per_switch: b.periods_per_switch.unwrap_or(d.tsec.periods_per_switch),
                switches: b.switches.unwrap_or(d.tsec.switches),
                alpha: b.alpha.unwrap_or(d.tsec.alpha),
                mcmc: self.mcmc()?,
                ..d.tsec
            },
            rebalance_days: b.rebalance_days.unwrap_or(d.rebalance_days),
            sharpe_threshold: b.sharpe_threshold.unwrap_or(d.sharpe_threshold),
            strict_threshold: b.strict_threshold.unwrap_or(d.strict_threshold),
            estimation_window: b.estimation_window.unwrap_or(d.estimation_window),
            risk_aversion: b.risk_aversion.unwrap_or(d.risk_aversion),
            start_date,
        })
    }

    /// Price and industry files, resolved against the config directory.
    pub fn price_paths(&self) -> Result<(PathBuf, PathBuf), ConfigError> {
        let resolve = |p: &Option<PathBuf>, key: &str| {
            p.as_ref()
                .map(|p| if p.is_absolute() { p.clone() } else { self.base_dir.join(p) })
                .ok_or_else(|| ConfigError(format!("backtest.{key} is required")))
        };
        Ok((resolve(&self.backtest.prices, "prices")?, resolve(&self.backtest.industries, "industries")?))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_config_gives_defaults() {
        let cfg = RunConfig::parse("").unwrap();
        let s = cfg.study().unwrap();
        assert_eq!(s.num_factors, 6);
        assert_eq!(s.tsec.active_set_size, 8);
        assert_eq!(s.replicates, 20);
        let b = cfg.backtest().unwrap();
        assert_eq!(b.tsec.active_set_size, 75);
        assert_eq!(b.sharpe_threshold, 0.05);
    }

    #[test]
    fn sections_override_defaults() {
        let cfg = RunConfig::parse(
            r#"
            [study]
            num_factors = 10
            methods = ["tsec", "B1"]
            [tsec]
            active_set_size = 16
            init_design = "random_subset"
            [mcmc]
            fixed_tau2 = 1.0
            fixed_r = 0.5
            [truth]
            effect_scale = 0.1
            two_factor_active = [0.0, 0.1, 0.2]
            [sweep]
            parameter = "active_set_size"
            values = [16, 32, 64]
            [backtest]
            sharpe_threshold = 10.0
            start_date = "2010-06-01"
            "#,
        )
        .unwrap();
        let s = cfg.study().unwrap();
        assert_eq!(s.num_factors, 10);
        assert_eq!(s.methods, vec![Method::Tsec, Method::B1]);
        assert_eq!(s.tsec.init_design, InitDesign::RandomSubset);
        assert_eq!(s.tsec.mcmc.fixed_hyper.unwrap().r, 0.5);
        assert_eq!(s.truth.effect_scale, 0.1);
        assert_eq!(s.truth.two_factor_active, [0.0, 0.1, 0.2]);
        let sweep = cfg.sweep.as_ref().unwrap();
        assert_eq!(sweep.parameter, SweepParameter::ActiveSetSize);
        let b = cfg.backtest().unwrap();
        assert_eq!(b.sharpe_threshold, 10.0);
        assert_eq!(b.start_date, NaiveDate::from_ymd_opt(2010, 6, 1));
    }

    #[test]
    fn rejects_unknown_keys_and_bad_values() {
        assert!(RunConfig::parse("[study]\nbogus = 1\n").is_err());
        assert!(RunConfig::parse("[tsec]\ninit_design = \"latin\"\n").unwrap().study().is_err());
        assert!(RunConfig::parse("[mcmc]\nfixed_tau2 = 1.0\n").unwrap().study().is_err());
        assert!(RunConfig::parse("[study]\nmethods = [\"B9\"]\n").unwrap().study().is_err());
        assert!(RunConfig::parse("[backtest]\nstart_date = \"June\"\n").unwrap().backtest().is_err());
    }
}
