//! Simulated ground truth for the website-optimization study.
//!
//! Effects are drawn from spike-and-slab mixtures whose activity
//! probabilities follow effect heredity: an interaction is likelier active
//! when its parent main effects are. The truth includes three-factor
//! interactions, which the fitted two-factor model cannot represent.

use crate::arm_space::{enumerate_arms, Arm, FactorSpace};
use crate::bandit::BernoulliEnv;
use crate::error::{invalid, Result};
use crate::normal;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use std::io::Write;

/// Spike and slab standard deviations of one effect tier.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Mixture {
    pub spike_sd: f64,
    pub slab_sd: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpikeSlabSpec {
    pub main: Mixture,
    pub main_active: f64,
    pub two_factor: Mixture,
    /// Activity probability indexed by the number of active parents (0..=2).
    pub two_factor_active: [f64; 3],
    pub three_factor: Mixture,
    /// Activity probability indexed by the number of active parents (0..=3).
    pub three_factor_active: [f64; 4],
    pub intercept: f64,
    /// Multiplies every drawn effect value.
    pub effect_scale: f64,
}

impl Default for SpikeSlabSpec {
    fn default() -> Self {
        Self {
            main: Mixture {
                spike_sd: 1.0,
                slab_sd: 10.0,
            },
            main_active: 0.41,
            two_factor: Mixture {
                spike_sd: 0.278,
                slab_sd: 2.78,
            },
            two_factor_active: [0.0048, 0.045, 0.33],
            three_factor: Mixture {
                spike_sd: 0.137,
                slab_sd: 1.37,
            },
            three_factor_active: [0.012, 0.035, 0.067, 0.15],
            intercept: 0.0,
            effect_scale: 1.0,
        }
    }
}

impl SpikeSlabSpec {
    pub fn validate(&self) -> Result<()> {
        let probs = std::iter::once(self.main_active)
            .chain(self.two_factor_active)
            .chain(self.three_factor_active);
        for p in probs {
            if !(0.0..=1.0).contains(&p) {
                return Err(invalid(format!("activity probability {p} outside [0, 1]")));
            }
        }
        for m in [self.main, self.two_factor, self.three_factor] {
            if !(m.spike_sd > 0.0 && m.slab_sd > 0.0) {
                return Err(invalid("spike and slab standard deviations must be positive"));
            }
        }
        if !(self.effect_scale > 0.0 && self.effect_scale.is_finite()) {
            return Err(invalid("effect scale must be positive"));
        }
        if !self.intercept.is_finite() {
            return Err(invalid("intercept must be finite"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EffectKind {
    Main,
    TwoFactor,
    ThreeFactor,
}

impl EffectKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            EffectKind::Main => "ME",
            EffectKind::TwoFactor => "2FI",
            EffectKind::ThreeFactor => "3FI",
        }
    }
}

/// One drawn effect with its provenance.
#[derive(Debug, Clone, PartialEq)]
pub struct Effect {
    pub kind: EffectKind,
    /// 0-based factors, ascending.
    pub factors: Vec<usize>,
    /// Levels (≥ 2) matching `factors`.
    pub levels: Vec<u8>,
    pub active: bool,
    /// Active parent main effects when the activity flag was drawn.
    pub active_parents: usize,
    pub value: f64,
}

impl Effect {
    fn applies_to(&self, x: &[u8]) -> bool {
        self.factors.iter().zip(&self.levels).all(|(&f, &l)| x[f] == l)
    }
}

/// Ground-truth effects plus dense lookup tables for fast evaluation.
#[derive(Debug, Clone)]
pub struct TruthEffects {
    levels: Vec<u8>,
    pub intercept: f64,
    pub effects: Vec<Effect>,
    // Value per (factor, level-1); level-1 cells hold 0.
    main_table: Vec<Vec<f64>>,
    // Value per factor pair, row-major over (level_a-1, level_b-1).
    pair_table: Vec<Vec<f64>>,
    triple_table: Vec<Vec<f64>>,
}

fn pair_id(m: usize, a: usize, b: usize) -> usize {
    a * (2 * m - a - 1) / 2 + (b - a - 1)
}

fn triples(m: usize) -> impl Iterator<Item = (usize, usize, usize)> {
    (0..m).flat_map(move |a| (a + 1..m).flat_map(move |b| (b + 1..m).map(move |c| (a, b, c))))
}

fn draw_value<R: Rng + ?Sized>(mix: Mixture, active: bool, rng: &mut R) -> f64 {
    let sd = if active { mix.slab_sd } else { mix.spike_sd };
    Normal::new(0.0, sd).expect("validated sd").sample(rng)
}

/// Draws a full ground truth for `space`.
pub fn sample_truth<R: Rng + ?Sized>(space: &FactorSpace, spec: &SpikeSlabSpec, rng: &mut R) -> Result<TruthEffects> {
    spec.validate()?;
    let lv = space.levels().to_vec();
    let m = lv.len();
    let scale = spec.effect_scale;
    let mut effects = Vec::new();

    let mut main_table: Vec<Vec<f64>> = lv.iter().map(|&l| vec![0.0; l as usize]).collect();
    let mut main_flag: Vec<Vec<bool>> = lv.iter().map(|&l| vec![false; l as usize]).collect();
    for f in 0..m {
        for l in 2..=lv[f] {
            let active = rng.random::<f64>() < spec.main_active;
            let value = scale * draw_value(spec.main, active, rng);
            main_table[f][l as usize - 1] = value;
            main_flag[f][l as usize - 1] = active;
            effects.push(Effect {
                kind: EffectKind::Main,
                factors: vec![f],
                levels: vec![l],
                active,
                active_parents: 0,
                value,
            });
        }
    }

    let mut pair_table = Vec::with_capacity(m * m.saturating_sub(1) / 2);
    for a in 0..m {
        for b in a + 1..m {
            let (la, lb) = (lv[a] as usize, lv[b] as usize);
            let mut cells = vec![0.0; la * lb];
            for x in 2..=la {
                for y in 2..=lb {
                    let parents = main_flag[a][x - 1] as usize + main_flag[b][y - 1] as usize;
                    let active = rng.random::<f64>() < spec.two_factor_active[parents];
                    let value = scale * draw_value(spec.two_factor, active, rng);
                    cells[(x - 1) * lb + (y - 1)] = value;
                    effects.push(Effect {
                        kind: EffectKind::TwoFactor,
                        factors: vec![a, b],
                        levels: vec![x as u8, y as u8],
                        active,
                        active_parents: parents,
                        value,
                    });
                }
            }
            pair_table.push(cells);
        }
    }

    let mut triple_table = Vec::new();
    for (a, b, c) in triples(m) {
        let (la, lb, lc) = (lv[a] as usize, lv[b] as usize, lv[c] as usize);
        let mut cells = vec![0.0; la * lb * lc];
        for x in 2..=la {
            for y in 2..=lb {
                for z in 2..=lc {
                    let parents = main_flag[a][x - 1] as usize
                        + main_flag[b][y - 1] as usize
                        + main_flag[c][z - 1] as usize;
                    let active = rng.random::<f64>() < spec.three_factor_active[parents];
                    let value = scale * draw_value(spec.three_factor, active, rng);
                    cells[((x - 1) * lb + (y - 1)) * lc + (z - 1)] = value;
                    effects.push(Effect {
                        kind: EffectKind::ThreeFactor,
                        factors: vec![a, b, c],
                        levels: vec![x as u8, y as u8, z as u8],
                        active,
                        active_parents: parents,
                        value,
                    });
                }
            }
        }
        triple_table.push(cells);
    }

    Ok(TruthEffects {
        levels: lv,
        intercept: spec.intercept,
        effects,
        main_table,
        pair_table,
        triple_table,
    })
}

impl TruthEffects {
    /// Linear predictor of an arm under the truth.
    pub fn linear_predictor(&self, arm: &Arm) -> Result<f64> {
        let x = arm.levels();
        let m = self.levels.len();
        if x.len() != m || x.iter().zip(&self.levels).any(|(&v, &l)| v < 1 || v > l) {
            return Err(invalid("arm does not belong to the truth's factor space"));
        }
        let idx: Vec<usize> = x.iter().map(|&v| v as usize - 1).collect();
        let mut eta = self.intercept;
        for f in 0..m {
            eta += self.main_table[f][idx[f]];
        }
        for a in 0..m {
            for b in a + 1..m {
                let lb = self.levels[b] as usize;
                eta += self.pair_table[pair_id(m, a, b)][idx[a] * lb + idx[b]];
            }
        }
        for (t, (a, b, c)) in triples(m).enumerate() {
            let (lb, lc) = (self.levels[b] as usize, self.levels[c] as usize);
            eta += self.triple_table[t][(idx[a] * lb + idx[b]) * lc + idx[c]];
        }
        Ok(eta)
    }

    /// Slow reference evaluation: sums every effect whose cell the arm hits.
    pub fn linear_predictor_by_scan(&self, arm: &Arm) -> f64 {
        self.intercept
            + self
                .effects
                .iter()
                .filter(|e| e.applies_to(arm.levels()))
                .map(|e| e.value)
                .sum::<f64>()
    }

    /// Writes `effect_kind, factors, levels, active, value`; factors are
    /// 1-based and `;`-separated.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["effect_kind", "factors", "levels", "active", "value"])?;
        w.write_record(["intercept", "", "", "1", &self.intercept.to_string()])?;
        for e in &self.effects {
            let join = |v: Vec<String>| v.join(";");
            w.write_record([
                e.kind.as_str().to_string(),
                join(e.factors.iter().map(|f| (f + 1).to_string()).collect()),
                join(e.levels.iter().map(u8::to_string).collect()),
                (e.active as u8).to_string(),
                e.value.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// True reward probability Φ(η) of an arm.
pub fn true_mu(truth: &TruthEffects, arm: &Arm) -> Result<f64> {
    Ok(normal::cdf(truth.linear_predictor(arm)?))
}

/// Tabulates true μ over every arm of `space`.
pub fn build_env(truth: &TruthEffects, space: &FactorSpace) -> Result<BernoulliEnv> {
    if truth.levels != space.levels() {
        return Err(invalid("truth was drawn for a different factor space"));
    }
    let mu = enumerate_arms(space)?
        .iter()
        .map(|a| true_mu(truth, a))
        .collect::<Result<Vec<_>>>()?;
    BernoulliEnv::new(mu)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn zero_truth(space: &FactorSpace) -> TruthEffects {
        let spec = SpikeSlabSpec::default();
        let mut t = sample_truth(space, &spec, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        for e in &mut t.effects {
            e.value = 0.0;
        }
        for v in t.main_table.iter_mut().chain(&mut t.pair_table).chain(&mut t.triple_table) {
            v.fill(0.0);
        }
        t
    }

    #[test]
    fn effect_counts_for_binary_space() {
        let space = FactorSpace::binary(10).unwrap();
        let t = sample_truth(&space, &SpikeSlabSpec::default(), &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        let count = |k| t.effects.iter().filter(|e| e.kind == k).count();
        assert_eq!(count(EffectKind::Main), 10);
        assert_eq!(count(EffectKind::TwoFactor), 45);
        assert_eq!(count(EffectKind::ThreeFactor), 120);
    }

    #[test]
    fn parent_counts_match_main_flags() {
        let space = FactorSpace::new(vec![2, 3, 2, 2]).unwrap();
        let t = sample_truth(&space, &SpikeSlabSpec::default(), &mut ChaCha8Rng::seed_from_u64(2)).unwrap();
        let main_active = |f: usize, l: u8| {
            t.effects
                .iter()
                .find(|e| e.kind == EffectKind::Main && e.factors == [f] && e.levels == [l])
                .unwrap()
                .active
        };
        for e in t.effects.iter().filter(|e| e.kind != EffectKind::Main) {
            let expected = e
                .factors
                .iter()
                .zip(&e.levels)
                .filter(|(&f, &l)| main_active(f, l))
                .count();
            assert_eq!(e.active_parents, expected);
        }
    }

    #[test]
    fn zero_truth_gives_one_half() {
        let space = FactorSpace::binary(4).unwrap();
        let t = zero_truth(&space);
        let env = build_env(&t, &space).unwrap();
        assert_eq!(env.mu().len(), 16);
        assert!(env.mu().iter().all(|&m| m == 0.5));
        assert_eq!(env.mu_star(), 0.5);
    }

    #[test]
    fn single_main_effect() {
        let space = FactorSpace::binary(4).unwrap();
        let mut t = zero_truth(&space);
        t.main_table[0][1] = normal::quantile(0.8);
        let hi = space.arm_from_levels(&[2, 1, 1, 1]).unwrap();
        let base = space.arm_from_levels(&[1, 1, 1, 1]).unwrap();
        assert!((true_mu(&t, &hi).unwrap() - 0.8).abs() < 1e-12);
        assert_eq!(true_mu(&t, &base).unwrap(), 0.5);
    }

    #[test]
    fn table_lookup_matches_scan() {
        for levels in [vec![2u8, 2, 2, 2], vec![3, 2, 4, 2, 3]] {
            let space = FactorSpace::new(levels).unwrap();
            let t = sample_truth(&space, &SpikeSlabSpec::default(), &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
            for arm in enumerate_arms(&space).unwrap() {
                let a = t.linear_predictor(&arm).unwrap();
                let b = t.linear_predictor_by_scan(&arm);
                assert!((a - b).abs() < 1e-12 * (1.0 + a.abs()));
            }
        }
    }

    #[test]
    fn env_invariants_and_determinism() {
        let space = FactorSpace::binary(5).unwrap();
        let spec = SpikeSlabSpec::default();
        let t1 = sample_truth(&space, &spec, &mut ChaCha8Rng::seed_from_u64(4)).unwrap();
        let t2 = sample_truth(&space, &spec, &mut ChaCha8Rng::seed_from_u64(4)).unwrap();
        assert_eq!(t1.effects, t2.effects);
        let env = build_env(&t1, &space).unwrap();
        assert!(env.mu().iter().all(|m| (0.0..=1.0).contains(m)));
        assert!(env.mu().iter().all(|&m| m <= env.mu_star()));
        assert!(build_env(&t1, &FactorSpace::binary(4).unwrap()).is_err());
    }

    #[test]
    fn effect_scale_multiplies_values() {
        let space = FactorSpace::binary(4).unwrap();
        let base = SpikeSlabSpec::default();
        let half = SpikeSlabSpec { effect_scale: 0.5, ..base.clone() };
        let a = sample_truth(&space, &base, &mut ChaCha8Rng::seed_from_u64(5)).unwrap();
        let b = sample_truth(&space, &half, &mut ChaCha8Rng::seed_from_u64(5)).unwrap();
        for (x, y) in a.effects.iter().zip(&b.effects) {
            assert_eq!(x.active, y.active);
            assert!((0.5 * x.value - y.value).abs() < 1e-12);
        }
        assert!(SpikeSlabSpec { effect_scale: 0.0, ..base }.validate().is_err());
    }

    #[test]
    fn truth_csv_starts_with_intercept() {
        let space = FactorSpace::binary(2).unwrap();
        let t = zero_truth(&space);
        let mut buf = Vec::new();
        t.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "effect_kind,factors,levels,active,value");
        assert_eq!(lines[1], "intercept,,,1,0");
        assert!(lines[4].starts_with("2FI,1;2,2;2,"));
        assert_eq!(lines.len(), 5);
    }
}
