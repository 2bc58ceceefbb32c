//! Replicated website-optimization study: one simulated truth per
//! replicate, shared by TSEC and the three baselines.

use crate::arm_space::FactorSpace;
use crate::bandit::{cumulative_regret, AllocationRecord, RegretPoint, RegretRow};
use crate::probit::PosteriorChain;
use crate::benchmarks::{run_benchmark, BenchmarkConfig, BenchmarkVariant};
use crate::arm_space::Arm;
use crate::engine::{self, initial_arms, InitDesign, SwitchHistory, TsecConfig};
use crate::error::{invalid, Result};
use crate::truth::{build_env, sample_truth, SpikeSlabSpec, TruthEffects};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::io::Write;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Method {
    Tsec,
    B1,
    B2,
    B3,
}

impl Method {
    pub const ALL: [Method; 4] = [Method::Tsec, Method::B1, Method::B2, Method::B3];

    pub fn name(self) -> &'static str {
        match self {
            Method::Tsec => "TSEC",
            Method::B1 => "B1",
            Method::B2 => "B2",
            Method::B3 => "B3",
        }
    }

    /// Seed stream of the method; stream 0 is the truth.
    pub fn stream(self) -> u64 {
        match self {
            Method::Tsec => 1,
            Method::B1 => 2,
            Method::B2 => 3,
            Method::B3 => 4,
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|m| m.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| invalid(format!("unknown method {s:?}")))
    }
}

pub const TRUTH_STREAM: u64 = 0;
/// Stream of the shared first active set.
pub const DESIGN_STREAM: u64 = 5;

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Child seed for (replicate, stream): SplitMix64 applied in turn to the
/// master seed, the replicate index and the stream id.
pub fn derive_seed(master: u64, replicate: u64, stream: u64) -> u64 {
    splitmix(splitmix(splitmix(master) ^ replicate) ^ stream)
}

pub fn child_rng(master: u64, replicate: u64, stream: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(master, replicate, stream))
}

#[derive(Debug, Clone)]
pub struct StudyConfig {
    /// M binary factors.
    pub num_factors: usize,
    /// K, n, T, S shared by every method, plus TSEC's own settings.
    pub tsec: TsecConfig,
    pub discard_threshold: f64,
    pub prob_best_rounds: usize,
    pub retain_discarded_state: bool,
    pub truth: SpikeSlabSpec,
    pub replicates: usize,
    pub methods: Vec<Method>,
    /// Start every method of a replicate from the same first active set.
    pub shared_initial_design: bool,
    /// Keep TSEC's last posterior chain in [`MethodRun::final_chain`].
    pub keep_final_chain: bool,
}

impl Default for StudyConfig {
    fn default() -> Self {
        let b = BenchmarkConfig::default();
        Self {
            num_factors: 6,
            tsec: TsecConfig {
                active_set_size: 8,
                runs_per_period: 50,
                periods_per_switch: 10,
                switches: 4,
                ..TsecConfig::default()
            },
            discard_threshold: b.discard_threshold,
            prob_best_rounds: b.prob_best_rounds,
            retain_discarded_state: b.retain_discarded_state,
            truth: SpikeSlabSpec::default(),
            replicates: 20,
            methods: Method::ALL.to_vec(),
            shared_initial_design: true,
            keep_final_chain: false,
        }
    }
}

impl StudyConfig {
    pub fn space(&self) -> Result<FactorSpace> {
        FactorSpace::binary(self.num_factors)
    }

    pub fn benchmark(&self, variant: BenchmarkVariant) -> BenchmarkConfig {
        let k = self.tsec.active_set_size;
        let basic = if k.is_power_of_two() { k.trailing_zeros() as usize } else { 0 };
        BenchmarkConfig {
            variant,
            active_set_size: k,
            runs_per_period: self.tsec.runs_per_period,
            periods_per_switch: self.tsec.periods_per_switch,
            switches: self.tsec.switches,
            fraction_power: self.num_factors.saturating_sub(basic),
            discard_threshold: self.discard_threshold,
            prob_best_rounds: self.prob_best_rounds,
            retain_discarded_state: self.retain_discarded_state,
            initial_arms: self.tsec.initial_arms.clone(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let space = self.space()?;
        self.tsec.validate(&space)?;
        self.truth.validate()?;
        if self.replicates == 0 {
            return Err(invalid("need at least one replicate"));
        }
        if self.methods.is_empty() {
            return Err(invalid("need at least one method"));
        }
        let baselines = self.methods.iter().any(|m| *m != Method::Tsec);
        if baselines {
            self.benchmark(BenchmarkVariant::B1).validate(&space)?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct MethodRun {
    pub method: Method,
    pub records: Vec<AllocationRecord>,
    pub history: SwitchHistory,
    pub regret: Vec<RegretPoint>,
    pub final_chain: Option<PosteriorChain>,
}

impl MethodRun {
    pub fn final_regret(&self) -> f64 {
        self.regret.last().map_or(0.0, |p| p.cumulative)
    }
}

#[derive(Debug, Clone)]
pub struct ReplicateResult {
    pub replicate: usize,
    pub truth: TruthEffects,
    pub mu_star: f64,
    pub runs: Vec<MethodRun>,
}

impl ReplicateResult {
    pub fn run(&self, method: Method) -> Option<&MethodRun> {
        self.runs.iter().find(|r| r.method == method)
    }
}

/// The truth of one replicate, drawn from its own seed stream.
pub fn replicate_truth(config: &StudyConfig, master_seed: u64, replicate: usize) -> Result<TruthEffects> {
    let space = config.space()?;
    sample_truth(&space, &config.truth, &mut child_rng(master_seed, replicate as u64, TRUTH_STREAM))
}

/// Draws the replicate's truth and runs every configured method on it.
pub fn run_replicate(config: &StudyConfig, master_seed: u64, replicate: usize) -> Result<ReplicateResult> {
    config.validate()?;
    let space = config.space()?;
    let r = replicate as u64;
    let truth = replicate_truth(config, master_seed, replicate)?;
    let env = build_env(&truth, &space)?;
    let mut config = config.clone();
    if config.shared_initial_design && config.tsec.initial_arms.is_none() {
        let mut rng = child_rng(master_seed, r, DESIGN_STREAM);
        // Baselines always start from a regular fraction.
        let design = if config.methods.iter().any(|m| *m != Method::Tsec) {
            InitDesign::RegularFraction
        } else {
            config.tsec.init_design
        };
        let arms = initial_arms(&space, config.tsec.active_set_size, design, &mut rng)?;
        config.tsec.initial_arms = Some(arms.iter().map(Arm::index).collect());
    }
    let mut runs = Vec::with_capacity(config.methods.len());
    for &method in &config.methods {
        let mut rng = child_rng(master_seed, r, method.stream());
        let mut final_chain = None;
        let (records, history, regret) = match method {
            Method::Tsec => {
                let mut env_mut = env.clone();
                let keep = config.keep_final_chain;
                let (records, _, history) = engine::run_with(&space, &mut env_mut, &config.tsec, &mut rng, |d, _| {
                    if keep {
                        final_chain = d.last_chain().cloned();
                    }
                })?;
                let regret = cumulative_regret(&env, &records);
                (records, history, regret)
            }
            Method::B1 | Method::B2 | Method::B3 => {
                let variant = match method {
                    Method::B1 => BenchmarkVariant::B1,
                    Method::B2 => BenchmarkVariant::B2,
                    _ => BenchmarkVariant::B3,
                };
                let o = run_benchmark(&space, &env, &config.benchmark(variant), &mut rng)?;
                (o.records, o.history, o.regret)
            }
        };
        runs.push(MethodRun {
            method,
            records,
            history,
            regret,
            final_chain,
        });
    }
    Ok(ReplicateResult {
        replicate,
        truth,
        mu_star: env.mu_star(),
        runs,
    })
}

/// Flattens replicate results into regret.csv rows.
pub fn regret_rows(results: &[ReplicateResult]) -> Vec<RegretRow> {
    results
        .iter()
        .flat_map(|res| {
            res.runs.iter().flat_map(move |run| {
                run.regret.iter().map(move |p| RegretRow {
                    method: run.method.name().to_string(),
                    replicate: res.replicate,
                    point: *p,
                })
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub sweep_value: String,
    pub method: Method,
    pub mean_final_regret: f64,
    pub ci_half_width: f64,
}

/// Mean and 1.96·(sample sd / √R); the half-width is 0 for one replicate.
pub fn mean_ci(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    (mean, 1.96 * (var / n as f64).sqrt())
}

/// One summary row per method present in `results`, in [`Method::ALL`] order.
pub fn summarize(sweep_value: &str, results: &[ReplicateResult]) -> Vec<SummaryRow> {
    Method::ALL
        .into_iter()
        .filter_map(|m| {
            let finals: Vec<f64> = results.iter().filter_map(|r| r.run(m)).map(MethodRun::final_regret).collect();
            (!finals.is_empty()).then(|| {
                let (mean, half) = mean_ci(&finals);
                SummaryRow {
                    sweep_value: sweep_value.to_string(),
                    method: m,
                    mean_final_regret: mean,
                    ci_half_width: half,
                }
            })
        })
        .collect()
}

/// `sweep_value, method, mean_final_regret, ci_half_width`.
pub fn write_summary_csv<W: Write>(rows: &[SummaryRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["sweep_value", "method", "mean_final_regret", "ci_half_width"])?;
    for r in rows {
        w.write_record([
            r.sweep_value.clone(),
            r.method.name().to_string(),
            r.mean_final_regret.to_string(),
            r.ci_half_width.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::probit::ChainSettings;
    use std::collections::HashSet;

    fn quick() -> StudyConfig {
        StudyConfig {
            num_factors: 4,
            tsec: TsecConfig {
                active_set_size: 8,
                runs_per_period: 16,
                periods_per_switch: 3,
                switches: 2,
                mcmc: ChainSettings {
                    iterations: 150,
                    burn_in: 50,
                    stride: 2,
                    ..ChainSettings::default()
                },
                ..TsecConfig::default()
            },
            prob_best_rounds: 100,
            replicates: 2,
            ..StudyConfig::default()
        }
    }

    #[test]
    fn seeds_are_distinct_and_stable() {
        let mut seen = HashSet::new();
        for r in 0..50 {
            for s in 0..5 {
                assert!(seen.insert(derive_seed(7, r, s)));
            }
        }
        assert_eq!(derive_seed(7, 3, 1), derive_seed(7, 3, 1));
        assert_ne!(derive_seed(7, 3, 1), derive_seed(8, 3, 1));
    }

    #[test]
    fn replicate_is_reproducible_and_shares_truth() {
        let cfg = quick();
        let a = run_replicate(&cfg, 11, 0).unwrap();
        let b = run_replicate(&cfg, 11, 0).unwrap();
        assert_eq!(a.truth.effects, b.truth.effects);
        assert_eq!(a.runs.len(), 4);
        for (x, y) in a.runs.iter().zip(&b.runs) {
            assert_eq!(x.regret, y.regret);
            assert_eq!(x.regret.len(), 6);
        }
        let tsec_only = StudyConfig {
            methods: vec![Method::Tsec],
            ..cfg
        };
        let c = run_replicate(&tsec_only, 11, 0).unwrap();
        assert_eq!(c.run(Method::Tsec).unwrap().regret, a.run(Method::Tsec).unwrap().regret);
        assert!(c.runs[0].final_chain.is_none());
        let keep = StudyConfig {
            keep_final_chain: true,
            ..tsec_only
        };
        let d = run_replicate(&keep, 11, 0).unwrap();
        assert!(d.runs[0].final_chain.as_ref().is_some_and(|ch| !ch.draws.is_empty()));
        assert_eq!(d.runs[0].regret, a.run(Method::Tsec).unwrap().regret);
    }

    #[test]
    fn regret_rows_count() {
        let cfg = quick();
        let res: Vec<_> = (0..2).map(|r| run_replicate(&cfg, 1, r).unwrap()).collect();
        assert_eq!(regret_rows(&res).len(), 4 * 2 * 6);
        let summary = summarize("16", &res);
        assert_eq!(summary.len(), 4);
        assert!(summary.iter().all(|s| s.ci_half_width >= 0.0));
    }

    #[test]
    fn ci_formula() {
        let (m, h) = mean_ci(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(m, 2.5);
        let sd = (5.0f64 / 3.0).sqrt();
        assert!((h - 1.96 * sd / 2.0).abs() < 1e-12);
        assert_eq!(mean_ci(&[3.0]), (3.0, 0.0));
    }

    #[test]
    fn rejects_bad_budget_for_baselines() {
        let cfg = StudyConfig {
            tsec: TsecConfig {
                active_set_size: 6,
                ..quick().tsec
            },
            ..quick()
        };
        assert!(cfg.validate().is_err());
        let tsec_only = StudyConfig {
            methods: vec![Method::Tsec],
            ..cfg
        };
        assert!(tsec_only.validate().is_ok());
    }

    #[test]
    fn method_names_parse() {
        for m in Method::ALL {
            assert_eq!(Method::parse(&m.name().to_lowercase()).unwrap(), m);
        }
        assert!(Method::parse("B4").is_err());
    }
}
