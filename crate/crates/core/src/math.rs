//! Small numerical helpers shared by the density code.

use std::sync::OnceLock;

use statrs::function::erf::erfc;

pub use statrs::function::gamma::ln_gamma;

/// `ln(2π) / 2`
pub const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_7;

/// `ln k!`, from an exact-product table for `k ≤ 170` and log-Γ beyond.
pub fn ln_factorial(k: u64) -> f64 {
    static TABLE: OnceLock<Vec<f64>> = OnceLock::new();
    let table = TABLE.get_or_init(|| {
        let mut out = Vec::with_capacity(171);
        let mut f = 1.0f64;
        for i in 0..=170u32 {
            if i > 1 {
                f *= i as f64;
            }
            out.push(f.ln());
        }
        out
    });
    match table.get(k as usize) {
        Some(&v) => v,
        None => ln_gamma(k as f64 + 1.0),
    }
}

/// Stirling remainder `ln Γ(x) - [(x - 1/2) ln x - x + ln √(2π)]` for large `x`.
fn stirling_tail(x: f64) -> f64 {
    let x2 = x * x;
    (1.0 / 12.0 - (1.0 / 360.0 - 1.0 / (1260.0 * x2)) / x2) / x
}

/// `ln Γ(r + k) - ln Γ(r)`, without the cancellation of the plain difference
/// when `r` is large.
pub fn ln_rising(r: f64, k: u64) -> f64 {
    if k == 0 {
        return 0.0;
    }
    let kf = k as f64;
    if r < 1e3 {
        return ln_gamma(r + kf) - ln_gamma(r);
    }
    let s = r + kf;
    (r - 0.5) * (kf / r).ln_1p() + kf * s.ln() - kf + stirling_tail(s) - stirling_tail(r)
}

/// Standard normal CDF, accurate in both tails.
pub fn std_normal_cdf(z: f64) -> f64 {
    0.5 * erfc(-z / std::f64::consts::SQRT_2)
}

/// `ln(exp(a) + exp(b))` without overflow.
pub fn log_add_exp(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let (hi, lo) = if a >= b { (a, b) } else { (b, a) };
    hi + (lo - hi).exp().ln_1p()
}

/// `ln Σ exp(x_i)`; returns `-inf` for an empty slice or all `-inf` inputs.
pub fn log_sum_exp(xs: &[f64]) -> f64 {
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    if max == f64::INFINITY {
        return f64::INFINITY;
    }
    let s: f64 = xs.iter().map(|&x| (x - max).exp()).sum();
    max + s.ln()
}

/// Logistic function `1 / (1 + e^{-x})`.
pub fn logistic(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}
