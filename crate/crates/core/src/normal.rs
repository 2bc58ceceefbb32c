//! Standard normal CDF, quantile function and a one-sided truncated sampler.

use rand::Rng;
use rand_distr::StandardNormal;
use statrs::function::erf::erfc_inv;
use std::f64::consts::{PI, SQRT_2};

/// Standard normal CDF.
#[inline]
pub fn cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x / SQRT_2)
}

/// Standard normal density.
#[inline]
pub fn pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * PI).sqrt()
}

/// Standard normal quantile function, defined on (0, 1).
///
/// The rational approximation is polished with one Halley step against
/// [`cdf`], which brings the relative error in `p` down to a few ulps.
pub fn quantile(p: f64) -> f64 {
    let x = -SQRT_2 * erfc_inv(2.0 * p);
    if !x.is_finite() {
        return x;
    }
    let d = pdf(x);
    if d == 0.0 {
        return x;
    }
    let step = (cdf(x) - p) / d;
    x - step / (1.0 + 0.5 * x * step)
}

/// Draws `X ~ N(0, 1)` conditioned on `X >= lower`.
///
/// For `lower <= 0` this rejects plain normal draws (acceptance at least
/// 1/2). Above zero it uses Robert's translated-exponential proposal with
/// the optimal rate, whose acceptance is at least 0.76 and tends to 1 in
/// the tail.
pub fn sample_truncated_below<R: Rng + ?Sized>(lower: f64, rng: &mut R) -> f64 {
    if lower <= 0.0 {
        loop {
            let x: f64 = rng.sample(StandardNormal);
            if x >= lower {
                return x;
            }
        }
    }
    let rate = 0.5 * (lower + (lower * lower + 4.0).sqrt());
    loop {
        // 1 - U lies in (0, 1], so the log is finite.
        let z = lower - (1.0 - rng.random::<f64>()).ln() / rate;
        let accept = (-0.5 * (z - rate) * (z - rate)).exp();
        if rng.random::<f64>() < accept {
            return z;
        }
    }
}

/// Draws `X ~ N(0, 1)` conditioned on `X <= upper`.
pub fn sample_truncated_above<R: Rng + ?Sized>(upper: f64, rng: &mut R) -> f64 {
    -sample_truncated_below(-upper, rng)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn cdf_reference_points() {
        assert_eq!(cdf(0.0), 0.5);
        assert!((cdf(1.6448536269514722) - 0.95).abs() < 1e-12);
        assert!((cdf(-1.959963984540054) - 0.025).abs() < 1e-12);
        assert!(cdf(-40.0) >= 0.0 && cdf(40.0) <= 1.0);
    }

    #[test]
    fn quantile_inverts_cdf() {
        for &p in &[1e-12, 1e-6, 0.01, 0.3, 0.5, 0.77, 0.999, 1.0 - 1e-9] {
            let x = quantile(p);
            assert!((cdf(x) - p).abs() <= 1e-12 * p.max(1e-3), "p={p}");
        }
    }

    // Moments of the lower-truncated standard normal: mean = φ(a)/(1-Φ(a)).
    fn truncated_mean(a: f64) -> f64 {
        pdf(a) / cdf(-a)
    }

    #[test]
    fn truncated_draws_respect_bound_and_mean() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for &a in &[-3.0, -0.5, 0.0, 1.0, 4.0, 5.5, 9.0, 30.0] {
            let n = 40_000;
            let mut sum = 0.0;
            for _ in 0..n {
                let x = sample_truncated_below(a, &mut rng);
                assert!(x >= a, "draw {x} below bound {a}");
                sum += x;
            }
            let mean = sum / n as f64;
            let expected = truncated_mean(a);
            assert!(
                (mean - expected).abs() < 0.02,
                "a={a}: mean {mean} vs {expected}"
            );
        }
    }

    #[test]
    fn truncated_cdf_matches() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for &a in &[-2.0, -0.3, 0.0, 0.4, 2.5] {
            let n = 100_000;
            let draws: Vec<f64> = (0..n).map(|_| sample_truncated_below(a, &mut rng)).collect();
            for q in [a + 0.05, a + 0.3, a + 1.0, a + 2.0] {
                let emp = draws.iter().filter(|&&x| x <= q).count() as f64 / n as f64;
                let exact = (cdf(q) - cdf(a)) / cdf(-a);
                assert!((emp - exact).abs() < 0.006, "a={a} q={q}: {emp} vs {exact}");
            }
        }
    }

    #[test]
    fn upper_truncation_mirrors() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..1000 {
            assert!(sample_truncated_above(-2.0, &mut rng) <= -2.0);
            assert!(sample_truncated_above(7.0, &mut rng) <= 7.0);
        }
    }
}
