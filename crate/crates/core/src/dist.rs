//! Elementary probability laws used by the length-of-stay model.
//!
//! Continuous laws ([`ContDistSpec`]) describe the short-stay duration and the
//! recovery period of a long stay. Count laws ([`CountDistSpec`]) describe the
//! integer discharge lag. Everything is evaluated in log-space first; the
//! natural-scale functions exponentiate.
//!
//! `ContDistSpec` and `CountDistSpec` keep their fields public so they can be
//! pattern matched, but the density methods assume valid parameters. Build
//! them through the checked constructors (or deserialize them, which validates
//! too) and use the free functions `cont_pdf`, `count_pmf`, ... for values of
//! unknown origin.

use rand::Rng;
use rand_distr::{Binomial, Distribution, Gamma, Poisson, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{LosError, Result};
use crate::math::{ln_factorial, ln_rising, log_add_exp, std_normal_cdf, LN_SQRT_2PI};

/// Default relative tolerance for the CMP normalizing series.
pub const CMP_DEFAULT_TOL: f64 = 1e-12;
/// Hard cap on the number of series / support terms.
pub const MAX_TERMS: usize = 1_000_000;
/// Rounding allowance on the total mass of a [`PmfTable`].
const MASS_SLACK: f64 = 1e-9;
/// Largest count mode a [`PmfTable`] is built around.
pub const MAX_MODE: u64 = 1 << 32;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ContFamily {
    Normal,
    LogNormal,
}

/// A Normal or Log-normal law. For `LogNormal`, `mu` and `sigma` live on the
/// log scale.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawCont")]
pub struct ContDistSpec {
    pub family: ContFamily,
    pub mu: f64,
    pub sigma: f64,
}

#[derive(Deserialize)]
struct RawCont {
    family: ContFamily,
    mu: f64,
    sigma: f64,
}

impl TryFrom<RawCont> for ContDistSpec {
    type Error = LosError;
    fn try_from(raw: RawCont) -> Result<Self> {
        ContDistSpec::new(raw.family, raw.mu, raw.sigma)
    }
}

impl ContDistSpec {
    pub fn new(family: ContFamily, mu: f64, sigma: f64) -> Result<Self> {
        let spec = ContDistSpec { family, mu, sigma };
        spec.validate()?;
        Ok(spec)
    }

    pub fn normal(mu: f64, sigma: f64) -> Result<Self> {
        Self::new(ContFamily::Normal, mu, sigma)
    }

    pub fn lognormal(mu: f64, sigma: f64) -> Result<Self> {
        Self::new(ContFamily::LogNormal, mu, sigma)
    }

    pub fn validate(&self) -> Result<()> {
        if !self.mu.is_finite() {
            return Err(LosError::domain(format!("{:?} mu must be finite, got {}", self.family, self.mu)));
        }
        if !(self.sigma > 0.0 && self.sigma.is_finite()) {
            return Err(LosError::domain(format!(
                "{:?} sigma must be positive and finite, got {}",
                self.family, self.sigma
            )));
        }
        Ok(())
    }

    pub fn ln_pdf(&self, x: f64) -> f64 {
        match self.family {
            ContFamily::Normal => {
                let z = (x - self.mu) / self.sigma;
                -0.5 * z * z - self.sigma.ln() - LN_SQRT_2PI
            }
            ContFamily::LogNormal => {
                if x <= 0.0 {
                    return f64::NEG_INFINITY;
                }
                let lx = x.ln();
                let z = (lx - self.mu) / self.sigma;
                -0.5 * z * z - self.sigma.ln() - LN_SQRT_2PI - lx
            }
        }
    }

    pub fn pdf(&self, x: f64) -> f64 {
        self.ln_pdf(x).exp()
    }

    pub fn cdf(&self, x: f64) -> f64 {
        match self.family {
            ContFamily::Normal => std_normal_cdf((x - self.mu) / self.sigma),
            ContFamily::LogNormal => {
                if x <= 0.0 {
                    0.0
                } else {
                    std_normal_cdf((x.ln() - self.mu) / self.sigma)
                }
            }
        }
    }

    pub fn mean(&self) -> f64 {
        match self.family {
            ContFamily::Normal => self.mu,
            ContFamily::LogNormal => (self.mu + 0.5 * self.sigma * self.sigma).exp(),
        }
    }

    pub fn variance(&self) -> f64 {
        let s2 = self.sigma * self.sigma;
        match self.family {
            ContFamily::Normal => s2,
            ContFamily::LogNormal => (s2.exp() - 1.0) * (2.0 * self.mu + s2).exp(),
        }
    }

    /// Smallest and largest `x` where the density is not negligible: the
    /// location plus or minus `width` scale units, on the log scale for
    /// `LogNormal`.
    pub fn effective_range(&self, width: f64) -> (f64, f64) {
        match self.family {
            ContFamily::Normal => (self.mu - width * self.sigma, self.mu + width * self.sigma),
            ContFamily::LogNormal => (
                (self.mu - width * self.sigma).exp(),
                (self.mu + width * self.sigma).exp(),
            ),
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let z: f64 = rng.sample(StandardNormal);
        let x = self.mu + self.sigma * z;
        match self.family {
            ContFamily::Normal => x,
            ContFamily::LogNormal => x.exp(),
        }
    }
}

/// One of the five discharge-lag laws.
///
/// `NegBin` uses the `Γ(r+k) / (Γ(r) k!) p^r (1-p)^k` form (number of failures
/// before the `r`-th success). `Multinomial` puts mass `weights[k]` on `k`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", try_from = "RawCount")]
pub enum CountDistSpec {
    NegBin { r: f64, p: f64 },
    Poisson { lambda: f64 },
    #[serde(rename = "CMP")]
    Cmp { lambda: f64, nu: f64 },
    Binomial { n: u64, p: f64 },
    Multinomial { weights: Vec<f64> },
}

#[derive(Deserialize)]
#[serde(tag = "family")]
enum RawCount {
    NegBin { r: f64, p: f64 },
    Poisson { lambda: f64 },
    #[serde(rename = "CMP")]
    Cmp { lambda: f64, nu: f64 },
    Binomial { n: u64, p: f64 },
    Multinomial { weights: Vec<f64> },
}

impl TryFrom<RawCount> for CountDistSpec {
    type Error = LosError;
    fn try_from(raw: RawCount) -> Result<Self> {
        let spec = match raw {
            RawCount::NegBin { r, p } => CountDistSpec::NegBin { r, p },
            RawCount::Poisson { lambda } => CountDistSpec::Poisson { lambda },
            RawCount::Cmp { lambda, nu } => CountDistSpec::Cmp { lambda, nu },
            RawCount::Binomial { n, p } => CountDistSpec::Binomial { n, p },
            RawCount::Multinomial { weights } => CountDistSpec::Multinomial { weights },
        };
        spec.validate()?;
        Ok(spec)
    }
}

impl CountDistSpec {
    pub fn negbin(r: f64, p: f64) -> Result<Self> {
        Self::checked(CountDistSpec::NegBin { r, p })
    }

    pub fn poisson(lambda: f64) -> Result<Self> {
        Self::checked(CountDistSpec::Poisson { lambda })
    }

    pub fn cmp(lambda: f64, nu: f64) -> Result<Self> {
        Self::checked(CountDistSpec::Cmp { lambda, nu })
    }

    pub fn binomial(n: u64, p: f64) -> Result<Self> {
        Self::checked(CountDistSpec::Binomial { n, p })
    }

    pub fn multinomial(weights: Vec<f64>) -> Result<Self> {
        Self::checked(CountDistSpec::Multinomial { weights })
    }

    fn checked(spec: Self) -> Result<Self> {
        spec.validate()?;
        Ok(spec)
    }

    pub fn family_name(&self) -> &'static str {
        match self {
            CountDistSpec::NegBin { .. } => "NegBin",
            CountDistSpec::Poisson { .. } => "Poisson",
            CountDistSpec::Cmp { .. } => "CMP",
            CountDistSpec::Binomial { .. } => "Binomial",
            CountDistSpec::Multinomial { .. } => "Multinomial",
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |what: String| Err(LosError::domain(what));
        match *self {
            CountDistSpec::NegBin { r, p } => {
                if !(r > 0.0 && r.is_finite()) {
                    return bad(format!("NegBin r must be positive, got {r}"));
                }
                if !(p > 0.0 && p < 1.0) {
                    return bad(format!("NegBin p must lie in (0, 1), got {p}"));
                }
            }
            CountDistSpec::Poisson { lambda } => {
                // lambda = 0 is accepted as the point mass at zero.
                if !(lambda >= 0.0 && lambda.is_finite()) {
                    return bad(format!("Poisson lambda must be non-negative, got {lambda}"));
                }
            }
            CountDistSpec::Cmp { lambda, nu } => {
                if !(lambda > 0.0 && lambda.is_finite()) {
                    return bad(format!("CMP lambda must be positive, got {lambda}"));
                }
                if !(nu > 0.0 && nu.is_finite()) {
                    return bad(format!("CMP nu must be positive, got {nu}"));
                }
            }
            CountDistSpec::Binomial { p, .. } => {
                if !(0.0..=1.0).contains(&p) {
                    return bad(format!("Binomial p must lie in [0, 1], got {p}"));
                }
            }
            CountDistSpec::Multinomial { ref weights } => {
                if weights.is_empty() {
                    return bad("Multinomial needs at least one weight".into());
                }
                if weights.iter().any(|w| !(*w >= 0.0 && w.is_finite())) {
                    return bad("Multinomial weights must be non-negative and finite".into());
                }
                let total: f64 = weights.iter().sum();
                if (total - 1.0).abs() > 1e-12 {
                    return bad(format!("Multinomial weights must sum to 1, got {total}"));
                }
            }
        }
        Ok(())
    }

    /// Largest support point for finite-support families.
    pub fn support_max(&self) -> Option<u64> {
        match self {
            CountDistSpec::Binomial { n, .. } => Some(*n),
            CountDistSpec::Multinomial { weights } => Some(weights.len() as u64 - 1),
            _ => None,
        }
    }

    /// Log pmf at `k`. For CMP the log normalizer must be supplied (see
    /// [`cmp_log_normalizer`]); other families ignore it.
    pub fn ln_pmf_with(&self, k: u64, cmp_ln_z: f64) -> f64 {
        let kf = k as f64;
        match *self {
            CountDistSpec::NegBin { r, p } => {
                ln_rising(r, k) - ln_factorial(k) + r * p.ln() + kf * (-p).ln_1p()
            }
            CountDistSpec::Poisson { lambda } => {
                if lambda == 0.0 {
                    if k == 0 {
                        0.0
                    } else {
                        f64::NEG_INFINITY
                    }
                } else {
                    kf * lambda.ln() - lambda - ln_factorial(k)
                }
            }
            CountDistSpec::Cmp { lambda, nu } => kf * lambda.ln() - nu * ln_factorial(k) - cmp_ln_z,
            CountDistSpec::Binomial { n, p } => {
                if k > n {
                    return f64::NEG_INFINITY;
                }
                let nk = (n - k) as f64;
                let choose = ln_factorial(n) - ln_factorial(k) - ln_factorial(n - k);
                let a = if k == 0 { 0.0 } else { kf * p.ln() };
                let b = if n == k { 0.0 } else { nk * (-p).ln_1p() };
                choose + a + b
            }
            CountDistSpec::Multinomial { ref weights } => match weights.get(k as usize) {
                Some(&w) => w.ln(),
                None => f64::NEG_INFINITY,
            },
        }
    }

    /// Log pmf at `k`, computing the CMP normalizer on demand.
    pub fn ln_pmf(&self, k: u64) -> Result<f64> {
        let ln_z = match *self {
            CountDistSpec::Cmp { lambda, nu } => cmp_log_normalizer(lambda, nu, CMP_DEFAULT_TOL)?,
            _ => 0.0,
        };
        Ok(self.ln_pmf_with(k, ln_z))
    }

    pub fn pmf(&self, k: u64) -> Result<f64> {
        Ok(self.ln_pmf(k)?.exp())
    }

    /// A mode of the pmf (for finite families, the first arg-max).
    pub fn mode(&self) -> u64 {
        match *self {
            CountDistSpec::NegBin { r, p } => {
                if r > 1.0 {
                    ((r - 1.0) * (1.0 - p) / p).floor() as u64
                } else {
                    0
                }
            }
            CountDistSpec::Poisson { lambda } => lambda.floor() as u64,
            CountDistSpec::Cmp { lambda, nu } => lambda.powf(1.0 / nu).floor() as u64,
            CountDistSpec::Binomial { n, p } => (((n + 1) as f64 * p).floor() as u64).min(n),
            CountDistSpec::Multinomial { ref weights } => {
                let mut best = 0;
                for (k, w) in weights.iter().enumerate() {
                    if *w > weights[best] {
                        best = k;
                    }
                }
                best as u64
            }
        }
    }

    pub fn mean(&self) -> Result<f64> {
        Ok(match *self {
            CountDistSpec::NegBin { r, p } => r * (1.0 - p) / p,
            CountDistSpec::Poisson { lambda } => lambda,
            CountDistSpec::Binomial { n, p } => n as f64 * p,
            CountDistSpec::Multinomial { ref weights } => {
                weights.iter().enumerate().map(|(k, w)| k as f64 * w).sum()
            }
            CountDistSpec::Cmp { .. } => {
                let t = PmfTable::new(self, 1e-15)?;
                t.iter().map(|(k, p)| k as f64 * p).sum::<f64>() / t.mass()
            }
        })
    }

    pub fn variance(&self) -> Result<f64> {
        Ok(match *self {
            CountDistSpec::NegBin { r, p } => r * (1.0 - p) / (p * p),
            CountDistSpec::Poisson { lambda } => lambda,
            CountDistSpec::Binomial { n, p } => n as f64 * p * (1.0 - p),
            _ => {
                let t = PmfTable::new(self, 1e-15)?;
                let m = t.iter().map(|(k, p)| k as f64 * p).sum::<f64>() / t.mass();
                t.iter().map(|(k, p)| (k as f64 - m).powi(2) * p).sum::<f64>() / t.mass()
            }
        })
    }

    /// `P(K ≤ k)` by direct summation of the pmf.
    pub fn cdf(&self, k: u64) -> Result<f64> {
        let ln_z = match *self {
            CountDistSpec::Cmp { lambda, nu } => cmp_log_normalizer(lambda, nu, CMP_DEFAULT_TOL)?,
            _ => 0.0,
        };
        let mode = self.mode();
        let mut acc = 0.0;
        for j in 0..=k {
            let p = self.ln_pmf_with(j, ln_z).exp();
            acc += p;
            if j > mode && p < 1e-300 {
                break;
            }
        }
        Ok(acc.min(1.0))
    }

    /// Draw one value. Infinite-support families other than NegBin/Poisson
    /// fall back to inverse-CDF sampling over a truncated table.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<u64> {
        Ok(match *self {
            CountDistSpec::Poisson { lambda } => sample_poisson(lambda, rng),
            CountDistSpec::NegBin { r, p } => {
                let gamma = Gamma::new(r, (1.0 - p) / p)
                    .map_err(|e| LosError::domain(format!("NegBin sampler: {e}")))?;
                let lambda = gamma.sample(rng);
                sample_poisson(lambda, rng)
            }
            CountDistSpec::Binomial { n, p } => {
                if n == 0 {
                    0
                } else {
                    Binomial::new(n, p)
                        .map_err(|e| LosError::domain(format!("Binomial sampler: {e}")))?
                        .sample(rng)
                }
            }
            CountDistSpec::Cmp { .. } | CountDistSpec::Multinomial { .. } => {
                PmfTable::new(self, 1e-14)?.sample(rng)
            }
        })
    }
}

fn sample_poisson<R: Rng + ?Sized>(lambda: f64, rng: &mut R) -> u64 {
    if lambda <= 0.0 {
        return 0;
    }
    match Poisson::new(lambda) {
        Ok(d) => d.sample(rng) as u64,
        Err(_) => 0,
    }
}

/// `ln Z(λ, ν)` where `Z = Σ_j λ^j / (j!)^ν`, summed in log-space.
///
/// Summation stops once a geometric bound on the remaining tail falls below
/// `tol` times the partial sum. More than [`MAX_TERMS`] terms is an error.
pub fn cmp_log_normalizer(lambda: f64, nu: f64, tol: f64) -> Result<f64> {
    if !(nu > 0.0) {
        return Err(LosError::domain(format!("CMP series diverges for nu = {nu}")));
    }
    if !(lambda >= 0.0 && lambda.is_finite()) {
        return Err(LosError::domain(format!("CMP lambda must be non-negative, got {lambda}")));
    }
    if !(tol > 0.0) {
        return Err(LosError::domain(format!("tolerance must be positive, got {tol}")));
    }
    if lambda == 0.0 {
        return Ok(0.0);
    }
    let ln_lambda = lambda.ln();
    let mut ln_sum = 0.0; // j = 0 term is 1
    let mut ln_term = 0.0;
    let ln_tol = tol.ln();
    for j in 1..MAX_TERMS {
        let jf = j as f64;
        ln_term += ln_lambda - nu * jf.ln();
        ln_sum = log_add_exp(ln_sum, ln_term);
        // ratio of the next term to this one; ratios decrease in j
        let ln_ratio = ln_lambda - nu * (jf + 1.0).ln();
        if ln_ratio < 0.0 {
            let ratio = ln_ratio.exp();
            let ln_tail = ln_term + ln_ratio - (-ratio).ln_1p();
            if ln_tail < ln_tol + ln_sum {
                return Ok(ln_sum);
            }
        }
    }
    Err(LosError::Truncation {
        cap: MAX_TERMS,
        mass: f64::NAN,
    })
}

pub fn cmp_normalizer(lambda: f64, nu: f64, tol: f64) -> Result<f64> {
    Ok(cmp_log_normalizer(lambda, nu, tol)?.exp())
}

/// The pmf of a count law on a contiguous window `[k_lo, k_hi]` holding at
/// least `1 - tol` of the mass.
///
/// The window is grown from the mode towards whichever neighbour carries more
/// mass. Finite-support families always get their full support.
#[derive(Debug, Clone)]
pub struct PmfTable {
    k_lo: u64,
    ln_pmf: Vec<f64>,
    pmf: Vec<f64>,
    mass: f64,
    point: Option<u64>,
}

impl PmfTable {
    pub fn new(spec: &CountDistSpec, tol: f64) -> Result<Self> {
        spec.validate()?;
        if !(tol > 0.0 && tol < 1.0) {
            return Err(LosError::domain(format!("truncation tolerance must lie in (0, 1), got {tol}")));
        }
        let ln_z = match *spec {
            CountDistSpec::Cmp { lambda, nu } => cmp_log_normalizer(lambda, nu, CMP_DEFAULT_TOL.min(tol * 1e-2))?,
            _ => 0.0,
        };
        let lp = |k: u64| spec.ln_pmf_with(k, ln_z);

        if let Some(kmax) = spec.support_max() {
            if kmax as usize >= MAX_TERMS {
                return Err(LosError::Truncation { cap: MAX_TERMS, mass: f64::NAN });
            }
            let ln_pmf: Vec<f64> = (0..=kmax).map(lp).collect();
            let pmf: Vec<f64> = ln_pmf.iter().map(|l| l.exp()).collect();
            let mass = pmf.iter().sum();
            return Self::assemble(0, ln_pmf, pmf, mass);
        }

        let mode = spec.mode();
        if mode > MAX_MODE {
            return Err(LosError::Truncation { cap: MAX_TERMS, mass: 0.0 });
        }
        let mut lo = mode;
        let mut hi = mode;
        let mut left: Vec<f64> = Vec::new(); // ln pmf for lo-1, lo-2, ... (reversed)
        let mut right: Vec<f64> = vec![lp(mode)];
        let mut mass = right[0].exp();
        let mut next_lo = if lo > 0 { lp(lo - 1) } else { f64::NEG_INFINITY };
        let mut next_hi = lp(hi + 1);
        while mass < 1.0 - tol {
            if left.len() + right.len() >= MAX_TERMS {
                return Err(LosError::Truncation { cap: MAX_TERMS, mass });
            }
            if next_lo == f64::NEG_INFINITY && next_hi.exp() == 0.0 {
                break;
            }
            if next_lo > next_hi {
                left.push(next_lo);
                mass += next_lo.exp();
                lo -= 1;
                next_lo = if lo > 0 { lp(lo - 1) } else { f64::NEG_INFINITY };
            } else {
                right.push(next_hi);
                mass += next_hi.exp();
                hi += 1;
                next_hi = lp(hi + 1);
            }
        }
        left.reverse();
        left.extend(right);
        let ln_pmf = left;
        let pmf: Vec<f64> = ln_pmf.iter().map(|l| l.exp()).collect();
        Self::assemble(lo, ln_pmf, pmf, mass)
    }

    fn assemble(k_lo: u64, ln_pmf: Vec<f64>, pmf: Vec<f64>, mass: f64) -> Result<Self> {
        // More than unit mass means the pmf lost precision at these parameters.
        if !(mass <= 1.0 + MASS_SLACK) {
            return Err(LosError::domain(format!("pmf table has total mass {mass}")));
        }
        let mut nonzero = pmf.iter().enumerate().filter(|(_, p)| **p > 0.0);
        let point = match (nonzero.next(), nonzero.next()) {
            (Some((i, _)), None) => Some(k_lo + i as u64),
            _ => None,
        };
        Ok(PmfTable { k_lo, ln_pmf, pmf, mass, point })
    }

    /// The single support point when all the mass sits on one value.
    pub fn point_mass(&self) -> Option<u64> {
        self.point
    }

    pub fn k_lo(&self) -> u64 {
        self.k_lo
    }

    pub fn k_hi(&self) -> u64 {
        self.k_lo + self.pmf.len() as u64 - 1
    }

    pub fn len(&self) -> usize {
        self.pmf.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pmf.is_empty()
    }

    /// Total mass held by the window.
    pub fn mass(&self) -> f64 {
        self.mass
    }

    pub fn ln_pmf_slice(&self) -> &[f64] {
        &self.ln_pmf
    }

    pub fn pmf_slice(&self) -> &[f64] {
        &self.pmf
    }

    pub fn pmf(&self, k: u64) -> f64 {
        if k < self.k_lo {
            return 0.0;
        }
        self.pmf.get((k - self.k_lo) as usize).copied().unwrap_or(0.0)
    }

    pub fn ln_pmf(&self, k: u64) -> f64 {
        if k < self.k_lo {
            return f64::NEG_INFINITY;
        }
        self.ln_pmf
            .get((k - self.k_lo) as usize)
            .copied()
            .unwrap_or(f64::NEG_INFINITY)
    }

    /// `(k, pmf(k))` over the window.
    pub fn iter(&self) -> impl Iterator<Item = (u64, f64)> + '_ {
        self.pmf.iter().enumerate().map(move |(i, &p)| (self.k_lo + i as u64, p))
    }

    /// Inverse-CDF draw from the (renormalized) window.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> u64 {
        let u: f64 = rng.random::<f64>() * self.mass;
        let mut acc = 0.0;
        for (k, p) in self.iter() {
            acc += p;
            if u < acc {
                return k;
            }
        }
        self.k_hi()
    }
}

/// Checked density of a continuous law.
pub fn cont_pdf(spec: &ContDistSpec, x: f64) -> Result<f64> {
    spec.validate()?;
    Ok(spec.pdf(x))
}

pub fn cont_cdf(spec: &ContDistSpec, x: f64) -> Result<f64> {
    spec.validate()?;
    Ok(spec.cdf(x))
}

pub fn cont_sample<R: Rng + ?Sized>(spec: &ContDistSpec, n: usize, rng: &mut R) -> Result<Vec<f64>> {
    spec.validate()?;
    Ok((0..n).map(|_| spec.sample(rng)).collect())
}

/// Checked probability mass of a count law.
pub fn count_pmf(spec: &CountDistSpec, k: u64) -> Result<f64> {
    spec.validate()?;
    spec.pmf(k)
}

pub fn count_cdf(spec: &CountDistSpec, k: u64) -> Result<f64> {
    spec.validate()?;
    spec.cdf(k)
}

pub fn count_mean(spec: &CountDistSpec) -> Result<f64> {
    spec.validate()?;
    spec.mean()
}

pub fn count_sample<R: Rng + ?Sized>(spec: &CountDistSpec, n: usize, rng: &mut R) -> Result<Vec<u64>> {
    spec.validate()?;
    match spec {
        CountDistSpec::Cmp { .. } | CountDistSpec::Multinomial { .. } => {
            let table = PmfTable::new(spec, 1e-14)?;
            Ok((0..n).map(|_| table.sample(rng)).collect())
        }
        _ => (0..n).map(|_| spec.sample(rng)).collect(),
    }
}
