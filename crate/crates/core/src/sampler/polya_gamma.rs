//! Exact PG(1, c) draws.
//!
//! Devroye-style alternating-series sampler for `J*(1, z)` with `z = |c| / 2`,
//! returning `J*/4 ~ PG(1, c)`. The proposal mixes a truncated exponential on
//! `(t, inf)` with a truncated inverse-Gaussian on `(0, t)`, `t = 0.64`.
//! For very large `|c|` the series coefficients lose precision, so a truncated
//! sum of Gamma variates with an analytic tail mean is used instead.

use std::f64::consts::PI;

use rand::Rng;
use rand_distr::{Distribution, Exp1, StandardNormal};

use crate::stats::log_std_normal_cdf;

const TRUNC: f64 = 0.64;
const TRUNC_RECIP: f64 = 1.0 / TRUNC;
/// Above this `|c|` the Gamma-sum fallback is used.
const FALLBACK_ABS_C: f64 = 1.0e4;
const FALLBACK_TERMS: usize = 200;

/// One draw from PG(1, c).
pub fn polya_gamma_draw<R: Rng + ?Sized>(c: f64, rng: &mut R) -> f64 {
    debug_assert!(c.is_finite());
    if c.abs() > FALLBACK_ABS_C {
        return gamma_sum_draw(c, rng);
    }
    let z = 0.5 * c.abs();
    let fz = 0.125 * PI * PI + 0.5 * z * z;
    let exp_mass = texpon_mass(z, fz);
    loop {
        let x = if rng.random::<f64>() < exp_mass {
            let e: f64 = Exp1.sample(rng);
            TRUNC + e / fz
        } else {
            truncated_inverse_gaussian(z, rng)
        };

        let mut s = series_coef(0, x);
        let y = rng.random::<f64>() * s;
        let mut n = 0;
        loop {
            n += 1;
            if n % 2 == 1 {
                s -= series_coef(n, x);
                if y <= s {
                    return 0.25 * x;
                }
            } else {
                s += series_coef(n, x);
                if y > s {
                    break;
                }
            }
        }
    }
}

/// Mean of PG(1, c): `tanh(c/2) / (2c)`, with limit 1/4 at zero.
pub fn polya_gamma_mean(c: f64) -> f64 {
    if c.abs() < 1e-8 {
        0.25 - c * c / 48.0
    } else {
        (0.5 * c).tanh() / (2.0 * c)
    }
}

/// Variance of PG(1, c): `(sinh c - c) / (4 c^3 cosh^2(c/2))`, limit 1/24 at zero.
pub fn polya_gamma_variance(c: f64) -> f64 {
    let c = c.abs();
    if c < 1e-3 {
        // Taylor expansion around zero.
        1.0 / 24.0 - c * c / 120.0
    } else {
        // sinh(c) / cosh^2(c/2) = 2 tanh(c/2), which stays finite for large c.
        let ch = (0.5 * c).cosh();
        (2.0 * (0.5 * c).tanh() - c / (ch * ch)) / (4.0 * c.powi(3))
    }
}

/// Probability that the proposal comes from the exponential piece.
fn texpon_mass(z: f64, fz: f64) -> f64 {
    let t = TRUNC;
    let b = (t * z - 1.0) / t.sqrt();
    let a = -(t * z + 1.0) / t.sqrt();
    let x0 = fz.ln() + fz * t;
    let xb = x0 - z + log_std_normal_cdf(b);
    let xa = x0 + z + log_std_normal_cdf(a);
    let q_over_p = 4.0 / PI * (xb.exp() + xa.exp());
    1.0 / (1.0 + q_over_p)
}

/// Inverse-Gaussian(1/z, 1) truncated to (0, TRUNC).
fn truncated_inverse_gaussian<R: Rng + ?Sized>(z: f64, rng: &mut R) -> f64 {
    let t = TRUNC;
    if TRUNC_RECIP > z {
        // Mean beyond the truncation point: propose from the z = 0 case and
        // accept with exp(-z^2 x / 2).
        loop {
            let (mut e1, mut e2): (f64, f64) = (Exp1.sample(rng), Exp1.sample(rng));
            while e1 * e1 > 2.0 * e2 / t {
                e1 = Exp1.sample(rng);
                e2 = Exp1.sample(rng);
            }
            let r = 1.0 + e1 * t;
            let x = t / (r * r);
            let alpha = (-0.5 * z * z * x).exp();
            if rng.random::<f64>() <= alpha {
                return x;
            }
        }
    } else {
        let mu = 1.0 / z;
        loop {
            let n: f64 = StandardNormal.sample(rng);
            let y = n * n;
            let mu_y = mu * y;
            let half_mu = 0.5 * mu;
            let mut x = mu + half_mu * mu_y - half_mu * (4.0 * mu_y + mu_y * mu_y).sqrt();
            if rng.random::<f64>() > mu / (mu + x) {
                x = mu * mu / x;
            }
            if x < t {
                return x;
            }
        }
    }
}

/// Coefficient `a_n(x)` of the alternating series for the `J*(1)` density.
fn series_coef(n: usize, x: f64) -> f64 {
    let k = (n as f64 + 0.5) * PI;
    if x > TRUNC {
        k * (-0.5 * k * k * x).exp()
    } else if x > 0.0 {
        let h = n as f64 + 0.5;
        (-1.5 * ((0.5 * PI).ln() + x.ln()) + k.ln() - 2.0 * h * h / x).exp()
    } else {
        0.0
    }
}

/// `PG(1, c) = (1 / 2 pi^2) sum_k g_k / ((k - 1/2)^2 + c^2 / (4 pi^2))`, `g_k ~ Exp(1)`,
/// truncated after `FALLBACK_TERMS` terms; the remaining terms are replaced by
/// their expectation.
fn gamma_sum_draw<R: Rng + ?Sized>(c: f64, rng: &mut R) -> f64 {
    let d2 = (c / (2.0 * PI)).powi(2);
    let mut sum = 0.0;
    for k in 1..=FALLBACK_TERMS {
        let h = k as f64 - 0.5;
        let g: f64 = Exp1.sample(rng);
        sum += g / (h * h + d2);
    }
    // sum_{k > K} 1 / ((k - 1/2)^2 + d^2) ~ (pi/2 - atan(K / d)) / d
    let d = d2.sqrt();
    let tail = (0.5 * PI - (FALLBACK_TERMS as f64 / d).atan()) / d;
    (sum + tail) / (2.0 * PI * PI)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn check_mean(c: f64, draws: usize, seed: u64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let xs: Vec<f64> = (0..draws).map(|_| polya_gamma_draw(c, &mut rng)).collect();
        assert!(xs.iter().all(|&x| x > 0.0 && x.is_finite()));
        let mean = xs.iter().sum::<f64>() / draws as f64;
        let se = (polya_gamma_variance(c) / draws as f64).sqrt();
        let target = polya_gamma_mean(c);
        assert!((mean - target).abs() < 3.0 * se, "c = {c}: mean {mean}, target {target}, se {se}");
    }

    #[test]
    fn mean_at_zero() {
        check_mean(0.0, 10_000, 1);
    }

    #[test]
    fn mean_at_one() {
        assert!((polya_gamma_mean(1.0) - 0.231_058_6).abs() < 1e-6);
        check_mean(1.0, 10_000, 2);
    }

    #[test]
    fn mean_for_large_tilts() {
        check_mean(30.0, 5_000, 3);
        check_mean(-200.0, 5_000, 4);
    }

    #[test]
    fn fallback_matches_moments() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let c = 2.0e4;
        let n = 4_000;
        let mean = (0..n).map(|_| polya_gamma_draw(c, &mut rng)).sum::<f64>() / n as f64;
        let se = (polya_gamma_variance(c) / n as f64).sqrt();
        assert!((mean - polya_gamma_mean(c)).abs() < 3.0 * se + 1e-9);
    }

    #[test]
    fn variance_limits() {
        assert!((polya_gamma_variance(0.0) - 1.0 / 24.0).abs() < 1e-15);
        // Continuity across the Taylor switch.
        assert!((polya_gamma_variance(0.999e-3) - polya_gamma_variance(1.001e-3)).abs() < 1e-9);
    }
}
