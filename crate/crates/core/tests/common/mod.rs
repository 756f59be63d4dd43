//! Independent reference computations shared by the integration tests.
//!
//! Nothing here calls the library's density code: pmfs come from their
//! term-ratio recurrences, densities from their textbook formulas, and
//! integrals from composite Simpson quadrature.

#![allow(dead_code)]

use std::f64::consts::PI;

use losmix::convolution::ConvolutiveLongStay;
use losmix::dist::{ContDistSpec, ContFamily, CountDistSpec};
use losmix::mixture::MixtureModel;

pub fn normal_pdf(x: f64, mu: f64, sigma: f64) -> f64 {
    let z = (x - mu) / sigma;
    (-0.5 * z * z).exp() / (sigma * (2.0 * PI).sqrt())
}

pub fn lognormal_pdf(x: f64, mu: f64, sigma: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    normal_pdf(x.ln(), mu, sigma) / x
}

pub fn cont_pdf_ref(spec: &ContDistSpec, x: f64) -> f64 {
    match spec.family {
        ContFamily::Normal => normal_pdf(x, spec.mu, spec.sigma),
        ContFamily::LogNormal => lognormal_pdf(x, spec.mu, spec.sigma),
    }
}

/// Probabilities `P(K = k)` for `k = 0, 1, ...` until the accumulated mass
/// reaches `1 - tail` (or the finite support ends).
pub fn pmf_vec(spec: &CountDistSpec, tail: f64) -> Vec<f64> {
    match spec {
        CountDistSpec::Multinomial { weights } => weights.clone(),
        CountDistSpec::Binomial { n, p } => {
            let n = *n;
            let q = 1.0 - p;
            if q == 0.0 {
                let mut out = vec![0.0; n as usize + 1];
                out[n as usize] = 1.0;
                return out;
            }
            // C(n, k) p^k q^(n-k) by the ratio p (n - k + 1) / (k q).
            let mut out = Vec::with_capacity(n as usize + 1);
            let mut t = q.powi(n as i32);
            out.push(t);
            for k in 1..=n {
                t *= p * (n - k + 1) as f64 / (k as f64 * q);
                out.push(t);
            }
            out
        }
        CountDistSpec::Poisson { lambda } => series(|k, prev| prev * lambda / k as f64, (-lambda).exp(), tail),
        CountDistSpec::NegBin { r, p } => {
            series(|k, prev| prev * (r + k as f64 - 1.0) / k as f64 * (1.0 - p), p.powf(*r), tail)
        }
        CountDistSpec::Cmp { lambda, nu } => {
            // Unnormalized terms t_k = t_{k-1} λ / k^ν, summed until they vanish.
            let mut terms = vec![1.0f64];
            let mut k = 1u64;
            loop {
                let t = terms[k as usize - 1] * lambda / (k as f64).powf(*nu);
                terms.push(t);
                let z: f64 = terms.iter().sum();
                if (k as f64) > *lambda && t < 1e-18 * z {
                    break;
                }
                k += 1;
            }
            let z: f64 = terms.iter().sum();
            terms.into_iter().map(|t| t / z).collect()
        }
    }
}

fn series(next: impl Fn(u64, f64) -> f64, first: f64, tail: f64) -> Vec<f64> {
    let mut out = vec![first];
    let mut acc = first;
    let mut k = 1u64;
    while acc < 1.0 - tail || k < 5 {
        let t = next(k, out[k as usize - 1]);
        out.push(t);
        acc += t;
        k += 1;
        if k > 1_000_000 {
            break;
        }
    }
    out
}

/// Brute-force convolution `Σ_k P(K = k) f_E(y - k)`.
pub fn conv_pdf_oracle(count: &CountDistSpec, cont: &ContDistSpec, y: f64) -> f64 {
    pmf_vec(count, 1e-16)
        .iter()
        .enumerate()
        .map(|(k, p)| p * cont_pdf_ref(cont, y - k as f64))
        .sum()
}

/// Negative binomial recovery-period density written out term by term:
/// `Σ_k [Π_{j<k} (r + j) / k!] p^r (1 - p)^k φ((y - k - m) / σ) / σ`.
pub fn negbin_normal_oracle(r: f64, p: f64, m: f64, sigma: f64, y: f64) -> f64 {
    let mut total = 0.0;
    let mut coef = 1.0; // Π_{j<k} (r + j) / k!
    let mut qk = 1.0; // (1 - p)^k
    let pr = p.powf(r);
    for k in 0..2000u32 {
        if k > 0 {
            coef *= (r + (k - 1) as f64) / k as f64;
            qk *= 1.0 - p;
        }
        let z = (y - k as f64 - m) / sigma;
        total += coef * pr * qk * (-0.5 * z * z).exp() / (sigma * (2.0 * PI).sqrt());
        if coef * pr * qk < 1e-300 {
            break;
        }
    }
    total
}

/// Composite Simpson rule on `n` (rounded up to even) panels.
pub fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
    let n = n + n % 2;
    let h = (b - a) / n as f64;
    let mut s = f(a) + f(b);
    for i in 1..n {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        s += w * f(a + i as f64 * h);
    }
    s * h / 3.0
}

pub fn lognormal(mu: f64, sigma: f64) -> ContDistSpec {
    ContDistSpec::lognormal(mu, sigma).unwrap()
}

pub fn normal(mu: f64, sigma: f64) -> ContDistSpec {
    ContDistSpec::normal(mu, sigma).unwrap()
}

pub fn long(count: CountDistSpec, cont: ContDistSpec) -> ConvolutiveLongStay {
    ConvolutiveLongStay::new(count, cont).unwrap()
}

/// The reference model of the recovery studies: π = 0.3, LogNormal(−1, 0.5)
/// short stays, NegBin(2, 0.4) lag plus Normal(4, 1) recovery.
pub fn reference_model() -> MixtureModel {
    MixtureModel::new(
        0.3,
        lognormal(-1.0, 0.5),
        long(CountDistSpec::negbin(2.0, 0.4).unwrap(), normal(4.0, 1.0)),
    )
    .unwrap()
}

/// One count law of each family, with parameters typical of discharge lags.
pub fn count_zoo() -> Vec<CountDistSpec> {
    vec![
        CountDistSpec::negbin(2.0, 0.4).unwrap(),
        CountDistSpec::poisson(2.5).unwrap(),
        CountDistSpec::cmp(3.0, 1.4).unwrap(),
        CountDistSpec::binomial(10, 0.3).unwrap(),
        CountDistSpec::multinomial(vec![0.2, 0.5, 0.1, 0.2]).unwrap(),
    ]
}

/// One recovery law of each family.
pub fn cont_zoo() -> Vec<ContDistSpec> {
    vec![normal(4.0, 1.0), lognormal(1.0, 0.4)]
}

/// Kolmogorov distance computed from scratch against a model CDF.
pub fn ks_oracle(data: &[f64], cdf: impl Fn(f64) -> f64) -> f64 {
    let mut x = data.to_vec();
    x.sort_by(f64::total_cmp);
    let n = x.len() as f64;
    x.iter()
        .map(|&v| {
            let f = cdf(v);
            let hi = x.partition_point(|w| *w <= v) as f64 / n;
            let lo = x.partition_point(|w| *w < v) as f64 / n;
            (f - lo).abs().max((f - hi).abs())
        })
        .fold(0.0, f64::max)
}
