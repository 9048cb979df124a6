//! Standard-normal cdf, tail, and truncated-normal sampling.
//!
//! Cell probabilities `Φ(b) − Φ(a)` are always formed from whichever tail
//! keeps both terms small, so narrow cells far from the origin do not lose
//! their digits to cancellation against 1.

use libm::erfc;
use rand::Rng;
use statrs::function::erf::erfc_inv;
use std::f64::consts::{FRAC_1_SQRT_2, PI, SQRT_2};

const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;

/// Beyond this many standard deviations the truncated sampler switches from
/// inverse-cdf to rejection from an exponential envelope.
pub const TAIL_SWITCH: f64 = 5.0;

/// Above this point `ln Q(x)` uses the asymptotic series; erfc underflows
/// around x ≈ 38.
const LN_SF_ASYMPTOTIC: f64 = 30.0;

#[inline]
pub fn pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * PI).sqrt()
}

#[inline]
pub fn ln_pdf(x: f64) -> f64 {
    -0.5 * x * x - LN_SQRT_2PI
}

/// Log density of `N(mean, var)` at `x`.
#[inline]
pub fn ln_density(x: f64, mean: f64, var: f64) -> f64 {
    let d = x - mean;
    -0.5 * d * d / var - 0.5 * var.ln() - LN_SQRT_2PI
}

/// Φ(x).
#[inline]
pub fn cdf(x: f64) -> f64 {
    0.5 * erfc(-x * FRAC_1_SQRT_2)
}

/// Upper tail Q(x) = 1 − Φ(x), accurate far into the right tail.
#[inline]
pub fn sf(x: f64) -> f64 {
    0.5 * erfc(x * FRAC_1_SQRT_2)
}

/// ln Q(x).
pub fn ln_sf(x: f64) -> f64 {
    if x < LN_SF_ASYMPTOTIC {
        return sf(x).ln();
    }
    // Mills-ratio series: Q(x) ≈ φ(x)/x · (1 − 1/x² + 3/x⁴ − 15/x⁶ + 105/x⁸)
    let r = 1.0 / (x * x);
    let series = 1.0 - r * (1.0 - r * (3.0 - r * (15.0 - 105.0 * r)));
    ln_pdf(x) - x.ln() + series.ln()
}

/// ln Φ(x).
#[inline]
pub fn ln_cdf(x: f64) -> f64 {
    ln_sf(-x)
}

/// Φ⁻¹(p) for p in (0, 1).
pub fn quantile(p: f64) -> f64 {
    debug_assert!(p > 0.0 && p < 1.0);
    -SQRT_2 * erfc_inv(2.0 * p)
}

/// Q⁻¹(q): the point with upper-tail mass q. Precise for tiny q.
#[inline]
fn sf_inverse(q: f64) -> f64 {
    SQRT_2 * erfc_inv(2.0 * q)
}

/// P(a < Z ≤ b) for a standard normal Z, with a ≤ b.
pub fn interval_prob(a: f64, b: f64) -> f64 {
    if a >= b {
        return 0.0;
    }
    let p = if a >= 0.0 {
        sf(a) - sf(b)
    } else if b <= 0.0 {
        sf(-b) - sf(-a)
    } else {
        1.0 - sf(-a) - sf(b)
    };
    p.max(0.0)
}

/// ln P(a < Z ≤ b), finite whenever the interval has positive width.
pub fn ln_interval_prob(a: f64, b: f64) -> f64 {
    if a >= b {
        return f64::NEG_INFINITY;
    }
    if a >= 0.0 {
        let la = ln_sf(a);
        la + ln_1m_exp(ln_sf(b) - la)
    } else if b <= 0.0 {
        let lb = ln_sf(-b);
        lb + ln_1m_exp(ln_sf(-a) - lb)
    } else {
        (-(sf(-a) + sf(b))).ln_1p()
    }
}

/// ln(1 − eˣ) for x ≤ 0.
#[inline]
fn ln_1m_exp(x: f64) -> f64 {
    if x > -std::f64::consts::LN_2 {
        (-x.exp_m1()).ln()
    } else {
        (-x.exp()).ln_1p()
    }
}

/// Draw from `N(0,1)` truncated to `(lo, hi)`; either bound may be infinite.
pub fn sample_truncated_standard<R: Rng + ?Sized>(lo: f64, hi: f64, rng: &mut R) -> f64 {
    debug_assert!(lo < hi, "empty truncation interval ({lo}, {hi})");
    if lo >= TAIL_SWITCH {
        return sample_right_tail(lo, hi, rng);
    }
    if hi <= -TAIL_SWITCH {
        return -sample_right_tail(-hi, -lo, rng);
    }
    loop {
        let x = if lo >= 0.0 {
            // both tail masses are small: invert the upper tail
            let (qlo, qhi) = (sf(lo), sf(hi));
            let u: f64 = rng.random();
            sf_inverse(qhi + u * (qlo - qhi))
        } else if hi <= 0.0 {
            let (qlo, qhi) = (sf(-hi), sf(-lo));
            let u: f64 = rng.random();
            -sf_inverse(qlo + u * (qhi - qlo))
        } else {
            let (plo, phi) = (cdf(lo), cdf(hi));
            let u: f64 = rng.random();
            quantile((plo + u * (phi - plo)).clamp(f64::MIN_POSITIVE, 1.0 - f64::EPSILON / 2.0))
        };
        if x > lo && x < hi {
            return x;
        }
        // rounding put the draw on (or past) a bound; redraw
    }
}

/// Draw from `N(mean, sd²)` truncated to `(lo, hi)`.
pub fn sample_truncated<R: Rng + ?Sized>(mean: f64, sd: f64, lo: f64, hi: f64, rng: &mut R) -> f64 {
    let a = (lo - mean) / sd;
    let b = (hi - mean) / sd;
    loop {
        let x = mean + sd * sample_truncated_standard(a, b, rng);
        if x > lo && x < hi {
            return x;
        }
    }
}

/// Z | lo < Z < hi with lo ≥ TAIL_SWITCH.
///
/// Narrow intervals use a uniform proposal with acceptance
/// exp((lo² − x²)/2); wide ones use Robert's translated-exponential
/// proposal with the optimal rate.
fn sample_right_tail<R: Rng + ?Sized>(lo: f64, hi: f64, rng: &mut R) -> f64 {
    let width = hi - lo;
    let rate = 0.5 * (lo + (lo * lo + 4.0).sqrt());
    // The exponential proposal lands in (lo, hi) with probability 1 − e^{−rate·width}.
    if width.is_finite() && rate * width < 1.0 {
        loop {
            let x = lo + width * rng.random::<f64>();
            let u: f64 = rng.random();
            if u.ln() <= 0.5 * (lo * lo - x * x) && x > lo && x < hi {
                return x;
            }
        }
    }
    loop {
        let e: f64 = -(1.0 - rng.random::<f64>()).ln() / rate;
        let x = lo + e;
        if x >= hi || x <= lo {
            continue;
        }
        let u: f64 = rng.random();
        let d = x - rate;
        if u.ln() <= -0.5 * d * d {
            return x;
        }
    }
}
