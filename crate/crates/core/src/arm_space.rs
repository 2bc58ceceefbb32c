//! Factorial arm spaces, baseline-coded feature layouts and initial designs.
//!
//! Arms are indexed in mixed-radix order with factor 1 as the most
//! significant digit. Levels are 1-based; level 1 is the baseline whose main
//! effects and interactions are constrained to zero, so it owns no column.

use crate::error::{invalid, Error, Result};
use rand::seq::{index, SliceRandom};
use rand::Rng;
use std::io::Write;

/// Largest arm space that [`enumerate_arms`] will materialize.
pub const MAX_ARMS: usize = 1 << 20;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FactorSpace {
    levels: Vec<u8>,
    num_arms: usize,
}

impl FactorSpace {
    pub fn new(levels: Vec<u8>) -> Result<Self> {
        if levels.is_empty() {
            return Err(invalid("a factor space needs at least one factor"));
        }
        if let Some(m) = levels.iter().position(|&l| l < 2) {
            return Err(invalid(format!(
                "factor {} has {} level(s); at least 2 are required",
                m + 1,
                levels[m]
            )));
        }
        let total: u128 = levels.iter().map(|&l| l as u128).product();
        if total > MAX_ARMS as u128 {
            return Err(Error::Capacity {
                arms: total,
                limit: MAX_ARMS,
            });
        }
        Ok(Self {
            levels,
            num_arms: total as usize,
        })
    }

    /// `num_factors` factors with `levels` levels each.
    pub fn uniform(num_factors: usize, levels: u8) -> Result<Self> {
        Self::new(vec![levels; num_factors])
    }

    pub fn binary(num_factors: usize) -> Result<Self> {
        Self::uniform(num_factors, 2)
    }

    pub fn num_factors(&self) -> usize {
        self.levels.len()
    }

    pub fn levels(&self) -> &[u8] {
        &self.levels
    }

    pub fn num_arms(&self) -> usize {
        self.num_arms
    }

    pub fn is_two_level(&self) -> bool {
        self.levels.iter().all(|&l| l == 2)
    }

    /// Decodes a mixed-radix index into an arm.
    pub fn arm(&self, index: usize) -> Result<Arm> {
        if index >= self.num_arms {
            return Err(invalid(format!(
                "arm index {index} out of range for {} arms",
                self.num_arms
            )));
        }
        let mut rest = index;
        let mut levels = vec![0u8; self.levels.len()];
        for (slot, &radix) in levels.iter_mut().zip(&self.levels).rev() {
            *slot = (rest % radix as usize) as u8 + 1;
            rest /= radix as usize;
        }
        Ok(Arm { index, levels })
    }

    /// Builds an arm from 1-based levels, validating each coordinate.
    pub fn arm_from_levels(&self, levels: &[u8]) -> Result<Arm> {
        self.check_levels(levels)?;
        let index = levels
            .iter()
            .zip(&self.levels)
            .fold(0usize, |acc, (&x, &radix)| acc * radix as usize + (x as usize - 1));
        Ok(Arm {
            index,
            levels: levels.to_vec(),
        })
    }

    fn check_levels(&self, levels: &[u8]) -> Result<()> {
        if levels.len() != self.levels.len() {
            return Err(invalid(format!(
                "arm has {} coordinates, space has {} factors",
                levels.len(),
                self.levels.len()
            )));
        }
        for (m, (&x, &l)) in levels.iter().zip(&self.levels).enumerate() {
            if x < 1 || x > l {
                return Err(invalid(format!(
                    "level {x} of factor {} outside 1..={l}",
                    m + 1
                )));
            }
        }
        Ok(())
    }
}

/// One level combination of a [`FactorSpace`].
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Arm {
    index: usize,
    levels: Vec<u8>,
}

impl Arm {
    pub fn index(&self) -> usize {
        self.index
    }

    /// 1-based level of every factor.
    pub fn levels(&self) -> &[u8] {
        &self.levels
    }
}

/// All arms of the space in index order.
pub fn enumerate_arms(space: &FactorSpace) -> Result<Vec<Arm>> {
    if space.num_arms > MAX_ARMS {
        return Err(Error::Capacity {
            arms: space.num_arms as u128,
            limit: MAX_ARMS,
        });
    }
    (0..space.num_arms).map(|i| space.arm(i)).collect()
}

/// What a feature column measures.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Column {
    Intercept,
    /// Main effect of `factor` (0-based) at `level` (≥ 2).
    Main { factor: usize, level: u8 },
    /// Two-factor interaction, `factors.0 < factors.1`, both levels ≥ 2.
    Interaction {
        factors: (usize, usize),
        levels: (u8, u8),
    },
}

/// Prior tier of a column under the effect-hierarchy prior.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Tier {
    Intercept,
    Main,
    Interaction,
}

impl Column {
    pub fn tier(&self) -> Tier {
        match self {
            Column::Intercept => Tier::Intercept,
            Column::Main { .. } => Tier::Main,
            Column::Interaction { .. } => Tier::Interaction,
        }
    }
}

/// Column map of the baseline-constrained two-factor interaction model.
#[derive(Debug, Clone)]
pub struct DesignLayout {
    levels: Vec<u8>,
    columns: Vec<Column>,
    main_offset: Vec<usize>,
    // Indexed by pair id (see `pair_id`).
    pair_offset: Vec<usize>,
}

impl DesignLayout {
    pub fn new(space: &FactorSpace) -> Self {
        let levels = space.levels().to_vec();
        let m = levels.len();
        let mut columns = vec![Column::Intercept];
        let mut main_offset = Vec::with_capacity(m);
        for (factor, &l) in levels.iter().enumerate() {
            main_offset.push(columns.len());
            for level in 2..=l {
                columns.push(Column::Main { factor, level });
            }
        }
        let mut pair_offset = Vec::with_capacity(m * m.saturating_sub(1) / 2);
        for a in 0..m {
            for b in (a + 1)..m {
                pair_offset.push(columns.len());
                for la in 2..=levels[a] {
                    for lb in 2..=levels[b] {
                        columns.push(Column::Interaction {
                            factors: (a, b),
                            levels: (la, lb),
                        });
                    }
                }
            }
        }
        Self {
            levels,
            columns,
            main_offset,
            pair_offset,
        }
    }

    pub fn dimension(&self) -> usize {
        self.columns.len()
    }

    pub fn columns(&self) -> &[Column] {
        &self.columns
    }

    pub fn tiers(&self) -> Vec<Tier> {
        self.columns.iter().map(Column::tier).collect()
    }

    fn pair_id(&self, a: usize, b: usize) -> usize {
        // Row-major index of (a, b), a < b, in the strict upper triangle.
        let m = self.levels.len();
        a * (2 * m - a - 1) / 2 + (b - a - 1)
    }

    /// Indices of the columns equal to 1 for `levels`; always starts with the
    /// intercept column 0, then main effects, then interactions, ascending.
    pub fn active_columns(&self, levels: &[u8]) -> Vec<usize> {
        let m = self.levels.len();
        let mut cols = Vec::with_capacity(1 + m + m * (m.saturating_sub(1)) / 2);
        cols.push(0);
        for (factor, &x) in levels.iter().enumerate() {
            if x >= 2 {
                cols.push(self.main_offset[factor] + (x as usize - 2));
            }
        }
        for a in 0..m {
            if levels[a] < 2 {
                continue;
            }
            for b in (a + 1)..m {
                if levels[b] < 2 {
                    continue;
                }
                let width = self.levels[b] as usize - 1;
                cols.push(
                    self.pair_offset[self.pair_id(a, b)]
                        + (levels[a] as usize - 2) * width
                        + (levels[b] as usize - 2),
                );
            }
        }
        cols
    }
}

/// p = 1 + Σ (L_m − 1) + Σ_{m<m'} (L_m − 1)(L_m' − 1).
pub fn layout_dimension(space: &FactorSpace) -> usize {
    let free: Vec<usize> = space.levels().iter().map(|&l| l as usize - 1).collect();
    let mains: usize = free.iter().sum();
    let pairs: usize = (0..free.len())
        .flat_map(|a| (a + 1..free.len()).map(move |b| (a, b)))
        .map(|(a, b)| free[a] * free[b])
        .sum();
    1 + mains + pairs
}

/// Dense 0/1 feature row of `arm`.
pub fn encode_arm(space: &FactorSpace, layout: &DesignLayout, arm: &Arm) -> Result<Vec<f64>> {
    space.check_levels(arm.levels())?;
    if layout.levels != space.levels() {
        return Err(invalid("layout was built for a different factor space"));
    }
    let mut row = vec![0.0; layout.dimension()];
    for c in layout.active_columns(arm.levels()) {
        row[c] = 1.0;
    }
    Ok(row)
}

/// A random regular two-level fraction with `2^(M-q)` runs.
///
/// Picks `M - q` basic factors uniformly at random and runs their full
/// factorial in ±1 coding. Each remaining factor is aliased with the product
/// of a uniformly chosen subset (size ≥ 2) of the basic columns; the whole set
/// of generators is redrawn until all words are distinct. Coding −1 maps to
/// level 1 and +1 to level 2.
pub fn random_regular_fraction<R: Rng + ?Sized>(
    space: &FactorSpace,
    q: usize,
    rng: &mut R,
) -> Result<Vec<Arm>> {
    if !space.is_two_level() {
        return Err(invalid("regular fractions need every factor at two levels"));
    }
    let m = space.num_factors();
    if q < 1 || q >= m {
        return Err(invalid(format!("fraction power q={q} must lie in 1..{m}")));
    }
    let basic = m - q;
    // Number of words of size ≥ 2 over the basic factors.
    let words = (1usize << basic) - basic - 1;
    if q > words {
        return Err(invalid(format!(
            "a 2^({m}-{q}) regular fraction does not exist: only {words} generator words"
        )));
    }

    let mut factors: Vec<usize> = (0..m).collect();
    factors.shuffle(rng);
    let (basic_factors, added_factors) = factors.split_at(basic);

    let candidate_words: Vec<u32> = (0u32..(1 << basic))
        .filter(|w| w.count_ones() >= 2)
        .collect();
    let generators: Vec<u32> = loop {
        let draw: Vec<u32> = (0..q)
            .map(|_| candidate_words[rng.random_range(0..candidate_words.len())])
            .collect();
        let mut sorted = draw.clone();
        sorted.sort_unstable();
        sorted.dedup();
        if sorted.len() == q {
            break draw;
        }
    };

    let mut arms = Vec::with_capacity(1 << basic);
    for run in 0u32..(1 << basic) {
        // Bit k of `run` set means basic column k is at +1.
        let mut levels = vec![1u8; m];
        for (k, &f) in basic_factors.iter().enumerate() {
            if run >> k & 1 == 1 {
                levels[f] = 2;
            }
        }
        for (&f, &word) in added_factors.iter().zip(&generators) {
            // Product of ±1 entries is +1 iff an even number are −1.
            let minus = (word & !run).count_ones();
            if minus % 2 == 0 {
                levels[f] = 2;
            }
        }
        arms.push(space.arm_from_levels(&levels)?);
    }
    Ok(arms)
}

/// `k` distinct arms, uniform over k-subsets, in random order.
pub fn random_arm_subset<R: Rng + ?Sized>(
    space: &FactorSpace,
    k: usize,
    rng: &mut R,
) -> Result<Vec<Arm>> {
    let n = space.num_arms();
    if k < 1 || k > n {
        return Err(invalid(format!("subset size {k} must lie in 1..={n}")));
    }
    index::sample(rng, n, k)
        .into_iter()
        .map(|i| space.arm(i))
        .collect()
}

/// Writes arms as CSV with columns `arm_index, x_1, …, x_M`.
pub fn write_arms_csv<W: Write>(space: &FactorSpace, arms: &[Arm], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["arm_index".to_string()];
    header.extend((1..=space.num_factors()).map(|m| format!("x_{m}")));
    w.write_record(&header)?;
    for arm in arms {
        let mut rec = vec![arm.index().to_string()];
        rec.extend(arm.levels().iter().map(|l| l.to_string()));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

/// ±1 coding of an arm in a two-level space (level 1 → −1, level 2 → +1).
pub fn plus_minus(arm: &Arm) -> Vec<i8> {
    arm.levels()
        .iter()
        .map(|&l| if l == 1 { -1 } else { 1 })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::collections::HashSet;

    #[test]
    fn enumerate_counts() {
        assert_eq!(enumerate_arms(&FactorSpace::binary(2).unwrap()).unwrap().len(), 4);
        assert_eq!(
            enumerate_arms(&FactorSpace::uniform(5, 4).unwrap()).unwrap().len(),
            1024
        );
        assert_eq!(enumerate_arms(&FactorSpace::binary(10).unwrap()).unwrap().len(), 1024);
    }

    #[test]
    fn mixed_radix_order_is_factor_one_major() {
        let space = FactorSpace::new(vec![2, 3]).unwrap();
        let arms = enumerate_arms(&space).unwrap();
        let levels: Vec<Vec<u8>> = arms.iter().map(|a| a.levels().to_vec()).collect();
        assert_eq!(
            levels,
            vec![
                vec![1, 1],
                vec![1, 2],
                vec![1, 3],
                vec![2, 1],
                vec![2, 2],
                vec![2, 3]
            ]
        );
    }

    #[test]
    fn oversized_space_is_a_capacity_error() {
        let err = FactorSpace::binary(21).unwrap_err();
        assert!(matches!(err, Error::Capacity { .. }));
        assert!(FactorSpace::binary(20).is_ok());
    }

    #[test]
    fn baseline_arm_encodes_to_intercept_only() {
        let space = FactorSpace::new(vec![3, 2, 4]).unwrap();
        let layout = DesignLayout::new(&space);
        let row = encode_arm(&space, &layout, &space.arm(0).unwrap()).unwrap();
        assert_eq!(row[0], 1.0);
        assert_eq!(row.iter().sum::<f64>(), 1.0);
    }

    #[test]
    fn two_by_two_expansion() {
        let space = FactorSpace::binary(2).unwrap();
        let layout = DesignLayout::new(&space);
        assert_eq!(layout.dimension(), 4);
        let arm = space.arm_from_levels(&[2, 2]).unwrap();
        let row = encode_arm(&space, &layout, &arm).unwrap();
        assert_eq!(row, vec![1.0, 1.0, 1.0, 1.0]);
        assert_eq!(
            layout.columns()[3],
            Column::Interaction {
                factors: (0, 1),
                levels: (2, 2)
            }
        );
        let arm = space.arm_from_levels(&[2, 1]).unwrap();
        assert_eq!(encode_arm(&space, &layout, &arm).unwrap(), vec![1.0, 1.0, 0.0, 0.0]);
    }

    #[test]
    fn all_high_binary_arm_has_seven_ones() {
        let space = FactorSpace::binary(3).unwrap();
        let layout = DesignLayout::new(&space);
        let arm = space.arm_from_levels(&[2, 2, 2]).unwrap();
        let row = encode_arm(&space, &layout, &arm).unwrap();
        assert_eq!(row.iter().sum::<f64>(), 7.0);
    }

    #[test]
    fn encode_rejects_bad_levels() {
        let space = FactorSpace::binary(3).unwrap();
        assert!(space.arm_from_levels(&[1, 3, 1]).is_err());
        assert!(space.arm_from_levels(&[0, 1, 1]).is_err());
        assert!(space.arm_from_levels(&[1, 1]).is_err());
        let layout = DesignLayout::new(&space);
        let forged = Arm {
            index: 0,
            levels: vec![1, 1, 5],
        };
        assert!(encode_arm(&space, &layout, &forged).is_err());
    }

    #[test]
    fn dimension_examples() {
        assert_eq!(layout_dimension(&FactorSpace::binary(1).unwrap()), 2);
        assert_eq!(layout_dimension(&FactorSpace::binary(10).unwrap()), 56);
        assert_eq!(layout_dimension(&FactorSpace::uniform(5, 4).unwrap()), 106);
    }

    #[test]
    fn interaction_columns_match_their_labels() {
        let space = FactorSpace::new(vec![3, 2, 4, 3]).unwrap();
        let layout = DesignLayout::new(&space);
        for arm in enumerate_arms(&space).unwrap() {
            for c in layout.active_columns(arm.levels()) {
                let x = arm.levels();
                let ok = match layout.columns()[c] {
                    Column::Intercept => true,
                    Column::Main { factor, level } => x[factor] == level,
                    Column::Interaction { factors, levels } => {
                        x[factors.0] == levels.0 && x[factors.1] == levels.1
                    }
                };
                assert!(ok, "column {c} misfires for {:?}", x);
            }
        }
    }

    fn fraction_is_closed(arms: &[Arm]) -> bool {
        let set: HashSet<Vec<i8>> = arms.iter().map(plus_minus).collect();
        set.iter().all(|a| {
            set.iter().all(|b| {
                let prod: Vec<i8> = a.iter().zip(b).map(|(x, y)| x * y).collect();
                set.contains(&prod)
            })
        })
    }

    #[test]
    fn sixteen_run_fraction_is_balanced_and_regular() {
        let space = FactorSpace::binary(10).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..20 {
            let arms = random_regular_fraction(&space, 6, &mut rng).unwrap();
            assert_eq!(arms.len(), 16);
            let distinct: HashSet<usize> = arms.iter().map(Arm::index).collect();
            assert_eq!(distinct.len(), 16);
            for m in 0..10 {
                let high = arms.iter().filter(|a| a.levels()[m] == 2).count();
                assert_eq!(high, 8);
            }
            assert!(fraction_is_closed(&arms));
        }
    }

    #[test]
    fn three_factor_half_fraction() {
        // With two basic factors the only word of size ≥ 2 is their product,
        // so every run satisfies x_c = x_a · x_b for the generated factor c.
        let space = FactorSpace::binary(3).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut seen = HashSet::new();
        for _ in 0..50 {
            let arms = random_regular_fraction(&space, 1, &mut rng).unwrap();
            assert_eq!(arms.len(), 4);
            let pm: Vec<Vec<i8>> = arms.iter().map(plus_minus).collect();
            let all_even = pm.iter().all(|r| r[0] * r[1] * r[2] == 1);
            let all_odd = pm.iter().all(|r| r[0] * r[1] * r[2] == -1);
            assert!(all_even ^ all_odd);
            assert!(all_even, "defining relation is I = ABC with a + sign");
            for m in 0..3 {
                assert_eq!(pm.iter().filter(|r| r[m] == 1).count(), 2);
            }
            let mut idx: Vec<usize> = arms.iter().map(Arm::index).collect();
            idx.sort();
            seen.insert(idx);
        }
        assert_eq!(seen.len(), 1);
    }

    #[test]
    fn fraction_argument_errors() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let space = FactorSpace::binary(3).unwrap();
        assert!(random_regular_fraction(&space, 3, &mut rng).is_err());
        assert!(random_regular_fraction(&space, 0, &mut rng).is_err());
        // One basic factor admits no words of size two.
        assert!(random_regular_fraction(&space, 2, &mut rng).is_err());
        let mixed = FactorSpace::new(vec![2, 3, 2]).unwrap();
        assert!(random_regular_fraction(&mixed, 1, &mut rng).is_err());
    }

    #[test]
    fn subsets() {
        let space = FactorSpace::binary(4).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut all: Vec<usize> = random_arm_subset(&space, 16, &mut rng)
            .unwrap()
            .iter()
            .map(Arm::index)
            .collect();
        all.sort();
        assert_eq!(all, (0..16).collect::<Vec<_>>());
        assert_eq!(random_arm_subset(&space, 1, &mut rng).unwrap().len(), 1);
        assert!(random_arm_subset(&space, 17, &mut rng).is_err());
        assert!(random_arm_subset(&space, 0, &mut rng).is_err());

        let a = random_arm_subset(&space, 5, &mut ChaCha8Rng::seed_from_u64(77)).unwrap();
        let b = random_arm_subset(&space, 5, &mut ChaCha8Rng::seed_from_u64(77)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn arms_csv_layout() {
        let space = FactorSpace::binary(2).unwrap();
        let arms = enumerate_arms(&space).unwrap();
        let mut buf = Vec::new();
        write_arms_csv(&space, &arms[2..], &mut buf).unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            "arm_index,x_1,x_2\n2,2,1\n3,2,2\n"
        );
    }

    fn space_strategy() -> impl Strategy<Value = FactorSpace> {
        prop::collection::vec(2u8..=5, 1..=6).prop_map(|l| FactorSpace::new(l).unwrap())
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(50))]

        #[test]
        fn index_level_bijection(space in space_strategy(), seed in any::<u64>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            for _ in 0..20 {
                let i = rng.random_range(0..space.num_arms());
                let arm = space.arm(i).unwrap();
                prop_assert_eq!(space.arm_from_levels(arm.levels()).unwrap().index(), i);
            }
        }

        #[test]
        fn dimension_closed_form_matches_layout(space in space_strategy()) {
            prop_assert_eq!(layout_dimension(&space), DesignLayout::new(&space).dimension());
        }

        #[test]
        fn rows_have_one_entry_per_block(space in space_strategy(), seed in any::<u64>()) {
            let layout = DesignLayout::new(&space);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let arm = space.arm(rng.random_range(0..space.num_arms())).unwrap();
            let row = encode_arm(&space, &layout, &arm).unwrap();
            let m = space.num_factors();
            let mut main_hits = vec![0; m];
            let mut pair_hits = std::collections::HashMap::new();
            let mut intercept = 0;
            for (c, &v) in row.iter().enumerate() {
                if v == 0.0 { continue; }
                match layout.columns()[c] {
                    Column::Intercept => intercept += 1,
                    Column::Main { factor, .. } => main_hits[factor] += 1,
                    Column::Interaction { factors, .. } => *pair_hits.entry(factors).or_insert(0) += 1,
                }
            }
            prop_assert_eq!(intercept, 1);
            prop_assert!(main_hits.iter().all(|&h| h <= 1));
            prop_assert!(pair_hits.values().all(|&h| h <= 1));
        }
    }
}
