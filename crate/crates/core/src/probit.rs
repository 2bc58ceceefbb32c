//! Bayesian probit two-factor-interaction model.
//!
//! The prior is `β_j ~ N(0, τ² c_j(r))` with `c_j = 1, r, r²` for the
//! intercept, main-effect and interaction tiers. Posterior sampling uses the
//! Albert–Chib augmentation: one truncated-normal latent per Bernoulli trial,
//! a conjugate Gaussian update for β, an inverse-gamma draw for τ² under the
//! `1/τ²` hyperprior and a grid draw for r under a uniform hyperprior.

use crate::arm_space::{Arm, DesignLayout, FactorSpace, Tier};
use crate::error::{invalid, Error, Result};
use crate::normal;
use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};
use std::collections::BTreeMap;
use std::io::Write;

/// Free probit coefficients aligned to a [`DesignLayout`].
#[derive(Debug, Clone, PartialEq)]
pub struct EffectVector(Vec<f64>);

impl EffectVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if let Some(j) = values.iter().position(|v| !v.is_finite()) {
            return Err(invalid(format!("coefficient {j} is not finite")));
        }
        Ok(Self(values))
    }

    pub fn zeros(dimension: usize) -> Self {
        Self(vec![0.0; dimension])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    /// Linear predictor of a sparse 0/1 row given by its active columns.
    #[inline]
    pub fn linear_predictor(&self, active: &[usize]) -> f64 {
        active.iter().map(|&c| self.0[c]).sum()
    }
}

/// Prior scale τ² and hierarchy decay r.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Hyperparams {
    pub tau2: f64,
    pub r: f64,
}

impl Hyperparams {
    pub fn new(tau2: f64, r: f64) -> Result<Self> {
        if !(tau2 > 0.0 && tau2.is_finite()) {
            return Err(invalid(format!("tau2 must be positive, got {tau2}")));
        }
        if !(r > 0.0 && r < 1.0) {
            return Err(invalid(format!("r must lie in (0, 1), got {r}")));
        }
        Ok(Self { tau2, r })
    }
}

impl Default for Hyperparams {
    fn default() -> Self {
        Self { tau2: 1.0, r: 0.5 }
    }
}

/// Per-column prior variance multipliers c_j(r).
#[derive(Debug, Clone)]
pub struct PriorMultipliers {
    tiers: Vec<Tier>,
}

impl PriorMultipliers {
    pub fn new(tiers: Vec<Tier>) -> Self {
        Self { tiers }
    }

    pub fn from_layout(layout: &DesignLayout) -> Self {
        Self::new(layout.tiers())
    }

    pub fn tiers(&self) -> &[Tier] {
        &self.tiers
    }

    pub fn multiplier(tier: Tier, r: f64) -> f64 {
        match tier {
            Tier::Intercept => 1.0,
            Tier::Main => r,
            Tier::Interaction => r * r,
        }
    }

    /// Prior variance τ²·c_j(r) of every column.
    pub fn variances(&self, hyper: Hyperparams) -> Vec<f64> {
        self.tiers
            .iter()
            .map(|&t| hyper.tau2 * Self::multiplier(t, hyper.r))
            .collect()
    }
}

/// One Bernoulli observation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Trial {
    pub arm: usize,
    pub switch: u32,
    pub period: u32,
    pub reward: bool,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ArmCounts {
    pub successes: u64,
    pub failures: u64,
}

impl ArmCounts {
    pub fn total(&self) -> u64 {
        self.successes + self.failures
    }
}

/// Every observation made so far, with per-arm tallies.
#[derive(Debug, Clone, Default)]
pub struct TrialLedger {
    rows: Vec<Trial>,
    counts: BTreeMap<usize, ArmCounts>,
}

impl TrialLedger {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn record(&mut self, trial: Trial) {
        let c = self.counts.entry(trial.arm).or_default();
        if trial.reward {
            c.successes += 1;
        } else {
            c.failures += 1;
        }
        self.rows.push(trial);
    }

    /// Appends `successes` and `failures` trials on one arm.
    pub fn record_counts(&mut self, arm: usize, switch: u32, period: u32, successes: u64, failures: u64) {
        for k in 0..successes + failures {
            self.record(Trial {
                arm,
                switch,
                period,
                reward: k < successes,
            });
        }
    }

    pub fn rows(&self) -> &[Trial] {
        &self.rows
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn counts(&self) -> &BTreeMap<usize, ArmCounts> {
        &self.counts
    }
}

#[derive(Debug, Clone)]
pub struct ChainSettings {
    pub iterations: usize,
    pub burn_in: usize,
    pub stride: usize,
    pub r_grid_size: usize,
    /// Holds (τ², r) fixed and skips their updates when set.
    pub fixed_hyper: Option<Hyperparams>,
}

impl Default for ChainSettings {
    fn default() -> Self {
        Self {
            iterations: 2000,
            burn_in: 500,
            stride: 3,
            r_grid_size: 200,
            fixed_hyper: None,
        }
    }
}

impl ChainSettings {
    pub fn validate(&self) -> Result<()> {
        if self.iterations <= self.burn_in {
            return Err(invalid(format!(
                "chain length {} must exceed burn-in {}",
                self.iterations, self.burn_in
            )));
        }
        if self.stride == 0 {
            return Err(invalid("thinning stride must be at least 1"));
        }
        if self.retained() == 0 {
            return Err(invalid("chain settings retain no draws"));
        }
        if self.r_grid_size == 0 {
            return Err(invalid("r grid needs at least one point"));
        }
        Ok(())
    }

    pub fn retained(&self) -> usize {
        (self.iterations - self.burn_in) / self.stride
    }
}

/// Starting point of a chain.
#[derive(Debug, Clone)]
pub struct ChainInit {
    pub beta: EffectVector,
    pub hyper: Hyperparams,
}

#[derive(Debug, Clone)]
pub struct PosteriorDraw {
    /// 0-based sweep index this draw was taken at.
    pub iteration: usize,
    pub beta: EffectVector,
    pub hyper: Hyperparams,
}

#[derive(Debug, Clone)]
pub struct PosteriorChain {
    pub draws: Vec<PosteriorDraw>,
    pub iterations: usize,
    pub burn_in: usize,
    pub stride: usize,
    /// Number of τ² updates that hit the all-zero-β fallback.
    pub degenerate_tau2: usize,
}

impl PosteriorChain {
    pub fn betas(&self) -> Vec<EffectVector> {
        self.draws.iter().map(|d| d.beta.clone()).collect()
    }

    /// Componentwise posterior mean, used to warm-start the next refit.
    pub fn posterior_mean(&self) -> Option<ChainInit> {
        let first = self.draws.first()?;
        let n = self.draws.len() as f64;
        let mut beta = vec![0.0; first.beta.len()];
        let (mut tau2, mut r) = (0.0, 0.0);
        for d in &self.draws {
            for (acc, v) in beta.iter_mut().zip(d.beta.as_slice()) {
                *acc += v / n;
            }
            tau2 += d.hyper.tau2 / n;
            r += d.hyper.r / n;
        }
        Some(ChainInit {
            beta: EffectVector(beta),
            hyper: Hyperparams { tau2, r },
        })
    }

    /// Trace dump: `iteration, tau2, r, beta_0, …, beta_{p-1}`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let p = self.draws.first().map_or(0, |d| d.beta.len());
        let mut header = vec!["iteration".to_string(), "tau2".into(), "r".into()];
        header.extend((0..p).map(|j| format!("beta_{j}")));
        w.write_record(&header)?;
        for d in &self.draws {
            let mut rec = vec![
                d.iteration.to_string(),
                d.hyper.tau2.to_string(),
                d.hyper.r.to_string(),
            ];
            rec.extend(d.beta.as_slice().iter().map(f64::to_string));
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Φ(row · β).
pub fn mu_of_arm(beta: &EffectVector, row: &[f64]) -> Result<f64> {
    if row.len() != beta.len() {
        return Err(invalid(format!(
            "feature row has length {}, coefficients {}",
            row.len(),
            beta.len()
        )));
    }
    let eta: f64 = row.iter().zip(beta.as_slice()).map(|(x, b)| x * b).sum();
    Ok(normal::cdf(eta))
}

/// Result of a τ² update.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tau2Draw {
    pub value: f64,
    /// Set when β was identically zero and the fallback range was used.
    pub degenerate: bool,
}

/// Range of the log-uniform fallback used when β is identically zero.
pub const TAU2_FALLBACK: (f64, f64) = (1e-6, 1e6);

/// Inverse-gamma shape and rate of τ² | β, r.
pub fn tau2_conditional(beta: &EffectVector, tiers: &[Tier], r: f64) -> (f64, f64) {
    let quad: f64 = beta
        .as_slice()
        .iter()
        .zip(tiers)
        .map(|(b, &t)| b * b / PriorMultipliers::multiplier(t, r))
        .sum();
    (beta.len() as f64 / 2.0, quad / 2.0)
}

/// Draws τ² from IG(p/2, Σ β_j² / (2 c_j(r))).
pub fn sample_tau2<R: Rng + ?Sized>(
    beta: &EffectVector,
    tiers: &[Tier],
    r: f64,
    rng: &mut R,
) -> Result<Tau2Draw> {
    if !(r > 0.0 && r < 1.0) {
        return Err(invalid(format!("r must lie in (0, 1), got {r}")));
    }
    if tiers.len() != beta.len() {
        return Err(invalid("tier tags and coefficients differ in length"));
    }
    let (shape, rate) = tau2_conditional(beta, tiers, r);
    if rate <= 0.0 || shape <= 0.0 {
        let (lo, hi) = TAU2_FALLBACK;
        let u: f64 = rng.random();
        let value = (lo.ln() + u * (hi.ln() - lo.ln())).exp();
        return Ok(Tau2Draw {
            value,
            degenerate: true,
        });
    }
    let precision = Gamma::new(shape, 1.0 / rate)
        .map_err(|e| Error::Sampler(format!("tau2 gamma({shape}, {rate}): {e}")))?
        .sample(rng);
    Ok(Tau2Draw {
        value: 1.0 / precision,
        degenerate: false,
    })
}

/// Unnormalized log full conditional of r at each grid midpoint.
pub fn r_log_density(beta: &EffectVector, tiers: &[Tier], tau2: f64, grid_size: usize) -> Vec<f64> {
    let (mut n_main, mut n_pair, mut a, mut b) = (0.0, 0.0, 0.0, 0.0);
    for (v, &t) in beta.as_slice().iter().zip(tiers) {
        match t {
            Tier::Intercept => {}
            Tier::Main => {
                n_main += 1.0;
                a += v * v;
            }
            Tier::Interaction => {
                n_pair += 1.0;
                b += v * v;
            }
        }
    }
    (1..=grid_size)
        .map(|k| {
            let r = (k as f64 - 0.5) / grid_size as f64;
            -(n_main / 2.0) * r.ln() - n_pair * r.ln() - a / (2.0 * tau2 * r) - b / (2.0 * tau2 * r * r)
        })
        .collect()
}

/// Grid draw of r from its full conditional under a uniform prior.
pub fn sample_r<R: Rng + ?Sized>(
    beta: &EffectVector,
    tiers: &[Tier],
    tau2: f64,
    grid_size: usize,
    rng: &mut R,
) -> Result<f64> {
    if !(tau2 > 0.0) {
        return Err(invalid(format!("tau2 must be positive, got {tau2}")));
    }
    if grid_size == 0 {
        return Err(invalid("r grid needs at least one point"));
    }
    if tiers.len() != beta.len() {
        return Err(invalid("tier tags and coefficients differ in length"));
    }
    let logf = r_log_density(beta, tiers, tau2, grid_size);
    let max = logf.iter().copied().filter(|v| v.is_finite()).fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return Err(Error::Sampler("r full conditional is not finite on the grid".into()));
    }
    let weights: Vec<f64> = logf
        .iter()
        .map(|&v| if v.is_finite() { (v - max).exp() } else { 0.0 })
        .collect();
    let total: f64 = weights.iter().sum();
    let mut u = rng.random::<f64>() * total;
    let mut pick = grid_size - 1;
    for (k, w) in weights.iter().enumerate() {
        if u < *w {
            pick = k;
            break;
        }
        u -= w;
    }
    Ok((pick as f64 + 0.5) / grid_size as f64)
}

/// Latents drawn in one sweep, handed to an instrumentation observer.
#[derive(Debug)]
pub struct LatentSweep<'a> {
    pub iteration: usize,
    /// (reward, latent) per trial, grouped by arm.
    pub latents: &'a [(bool, f64)],
}

struct ArmGroup {
    columns: Vec<usize>,
    successes: u64,
    failures: u64,
}

/// Runs the augmented Gibbs sampler on every trial in `ledger`.
pub fn run_chain<R: Rng + ?Sized>(
    ledger: &TrialLedger,
    space: &FactorSpace,
    layout: &DesignLayout,
    settings: &ChainSettings,
    init: Option<&ChainInit>,
    rng: &mut R,
) -> Result<PosteriorChain> {
    run_chain_observed(ledger, space, layout, settings, init, rng, None)
}

/// [`run_chain`] with an optional hook that sees every latent sweep.
pub fn run_chain_observed<R: Rng + ?Sized>(
    ledger: &TrialLedger,
    space: &FactorSpace,
    layout: &DesignLayout,
    settings: &ChainSettings,
    init: Option<&ChainInit>,
    rng: &mut R,
    mut observer: Option<&mut dyn FnMut(&LatentSweep<'_>)>,
) -> Result<PosteriorChain> {
    settings.validate()?;
    if ledger.is_empty() {
        return Err(invalid("cannot fit the model to an empty ledger"));
    }
    let p = layout.dimension();
    let tiers = layout.tiers();

    let groups: Vec<ArmGroup> = ledger
        .counts()
        .iter()
        .map(|(&arm, c)| {
            Ok(ArmGroup {
                columns: layout.active_columns(space.arm(arm)?.levels()),
                successes: c.successes,
                failures: c.failures,
            })
        })
        .collect::<Result<_>>()?;

    // XᵀX only depends on which arms were played and how often.
    let mut gram = DMatrix::<f64>::zeros(p, p);
    for g in &groups {
        let n = (g.successes + g.failures) as f64;
        for &i in &g.columns {
            for &j in &g.columns {
                gram[(i, j)] += n;
            }
        }
    }

    let (mut beta, mut hyper) = match init {
        Some(init) => {
            if init.beta.len() != p {
                return Err(invalid(format!(
                    "initial coefficients have length {}, layout {p}",
                    init.beta.len()
                )));
            }
            (init.beta.clone(), init.hyper)
        }
        None => (EffectVector::zeros(p), Hyperparams::default()),
    };
    if let Some(fixed) = settings.fixed_hyper {
        hyper = fixed;
    }

    let mut chain = PosteriorChain {
        draws: Vec::with_capacity(settings.retained()),
        iterations: settings.iterations,
        burn_in: settings.burn_in,
        stride: settings.stride,
        degenerate_tau2: 0,
    };
    let mut latent_buf: Vec<(bool, f64)> = Vec::new();
    let mut xtz = DVector::<f64>::zeros(p);
    let mut xi = DVector::<f64>::zeros(p);

    for iter in 0..settings.iterations {
        // (a) latents
        xtz.fill(0.0);
        latent_buf.clear();
        for g in &groups {
            let eta = beta.linear_predictor(&g.columns);
            let mut sum = 0.0;
            for _ in 0..g.successes {
                let z = eta + normal::sample_truncated_below(-eta, rng);
                let z = z.max(0.0);
                sum += z;
                if observer.is_some() {
                    latent_buf.push((true, z));
                }
            }
            for _ in 0..g.failures {
                let z = eta - normal::sample_truncated_below(eta, rng);
                let z = z.min(0.0);
                sum += z;
                if observer.is_some() {
                    latent_buf.push((false, z));
                }
            }
            for &c in &g.columns {
                xtz[c] += sum;
            }
        }
        if let Some(obs) = observer.as_deref_mut() {
            obs(&LatentSweep {
                iteration: iter,
                latents: &latent_buf,
            });
        }

        // (b) β | z, τ², r
        let mut precision = gram.clone();
        for (j, &t) in tiers.iter().enumerate() {
            precision[(j, j)] += 1.0 / (hyper.tau2 * PriorMultipliers::multiplier(t, hyper.r));
        }
        let chol = match precision.clone().cholesky() {
            Some(c) => c,
            None => {
                for j in 0..p {
                    precision[(j, j)] += 1e-10;
                }
                precision.cholesky().ok_or_else(|| {
                    Error::Sampler(format!(
                        "posterior precision not positive definite at sweep {iter} \
                         (tau2={}, r={}, p={p}, trials={})",
                        hyper.tau2,
                        hyper.r,
                        ledger.len()
                    ))
                })?
            }
        };
        let mean = chol.solve(&xtz);
        for v in xi.iter_mut() {
            *v = rng.sample(StandardNormal);
        }
        let noise = chol
            .l_dirty()
            .tr_solve_lower_triangular(&xi)
            .ok_or_else(|| Error::Sampler(format!("triangular solve failed at sweep {iter}")))?;
        let next: Vec<f64> = mean.iter().zip(noise.iter()).map(|(m, e)| m + e).collect();
        beta = EffectVector::new(next)
            .map_err(|_| Error::Sampler(format!("non-finite coefficients at sweep {iter}")))?;

        // (c), (d) hyperparameters
        if settings.fixed_hyper.is_none() {
            let t = sample_tau2(&beta, &tiers, hyper.r, rng)?;
            if t.degenerate {
                chain.degenerate_tau2 += 1;
            }
            hyper.tau2 = t.value;
            hyper.r = sample_r(&beta, &tiers, hyper.tau2, settings.r_grid_size, rng)?;
        }

        if iter >= settings.burn_in && (iter - settings.burn_in + 1).is_multiple_of(settings.stride) {
            chain.draws.push(PosteriorDraw {
                iteration: iter,
                beta: beta.clone(),
                hyper,
            });
        }
    }
    Ok(chain)
}

/// Picks `n` draws at evenly spaced positions and shuffles them.
///
/// With at least `n` retained draws position `k` is `⌊k·len/n⌋`; with fewer,
/// positions wrap around (`k mod len`).
pub fn thin<R: Rng + ?Sized>(chain: &PosteriorChain, n: usize, rng: &mut R) -> Result<Vec<EffectVector>> {
    let len = chain.draws.len();
    if len == 0 {
        return Err(invalid("cannot thin an empty chain"));
    }
    let mut out: Vec<EffectVector> = thin_positions(len, n)
        .into_iter()
        .map(|i| chain.draws[i].beta.clone())
        .collect();
    out.shuffle(rng);
    Ok(out)
}

pub(crate) fn thin_positions(len: usize, n: usize) -> Vec<usize> {
    if len >= n {
        (0..n).map(|k| k * len / n).collect()
    } else {
        (0..n).map(|k| k % len).collect()
    }
}

fn stack(draws: &[EffectVector], arms: &[Arm], space_layout: &DesignLayout) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    if draws.is_empty() || arms.is_empty() {
        return Err(invalid("need at least one draw and one arm"));
    }
    let p = space_layout.dimension();
    if let Some(d) = draws.iter().find(|d| d.len() != p) {
        return Err(invalid(format!("draw has length {}, layout {p}", d.len())));
    }
    let mut x = DMatrix::<f64>::zeros(arms.len(), p);
    for (i, arm) in arms.iter().enumerate() {
        for c in space_layout.active_columns(arm.levels()) {
            x[(i, c)] = 1.0;
        }
    }
    let b = DMatrix::from_fn(p, draws.len(), |j, k| draws[k].as_slice()[j]);
    Ok((x, b))
}

/// Linear predictors `[arms × draws]` as one dense product.
pub fn linear_predictor_matrix(
    draws: &[EffectVector],
    arms: &[Arm],
    layout: &DesignLayout,
) -> Result<DMatrix<f64>> {
    let (x, b) = stack(draws, arms, layout)?;
    Ok(x * b)
}

/// Reward probabilities `[arms × draws]`: Φ of [`linear_predictor_matrix`].
pub fn posterior_mu_matrix(draws: &[EffectVector], arms: &[Arm], layout: &DesignLayout) -> Result<DMatrix<f64>> {
    Ok(linear_predictor_matrix(draws, arms, layout)?.map(normal::cdf))
}
