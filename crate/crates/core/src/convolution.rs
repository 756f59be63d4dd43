//! The long-stay law `Y_L = K + E`: an integer discharge lag plus a continuous
//! recovery period.
//!
//! The density is the infinite sum `Σ_k f_E(y - k) P(K = k)`. It is evaluated
//! over the [`PmfTable`] window of `K` (mass at least `1 - trunc_tol`), and
//! within that window only for the `k` whose shift puts `y - k` within
//! [`SKIP_WIDTH`] scale units of the recovery-period location. Terms outside
//! that band are below double precision relative to the retained ones.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dist::{ContDistSpec, ContFamily, CountDistSpec, PmfTable};
use crate::error::{LosError, Result};
use crate::math::{log_sum_exp, LN_SQRT_2PI};

pub const DEFAULT_TRUNC_TOL: f64 = 1e-10;
/// Half-width, in scale units of `E`, of the band of retained terms.
pub const SKIP_WIDTH: f64 = 10.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawLong")]
pub struct ConvolutiveLongStay {
    pub count: CountDistSpec,
    pub cont: ContDistSpec,
    #[serde(default = "default_trunc_tol")]
    pub trunc_tol: f64,
}

fn default_trunc_tol() -> f64 {
    DEFAULT_TRUNC_TOL
}

#[derive(Deserialize)]
struct RawLong {
    count: CountDistSpec,
    cont: ContDistSpec,
    #[serde(default = "default_trunc_tol")]
    trunc_tol: f64,
}

impl TryFrom<RawLong> for ConvolutiveLongStay {
    type Error = LosError;
    fn try_from(raw: RawLong) -> Result<Self> {
        ConvolutiveLongStay::with_tol(raw.count, raw.cont, raw.trunc_tol)
    }
}

impl ConvolutiveLongStay {
    pub fn new(count: CountDistSpec, cont: ContDistSpec) -> Result<Self> {
        Self::with_tol(count, cont, DEFAULT_TRUNC_TOL)
    }

    pub fn with_tol(count: CountDistSpec, cont: ContDistSpec, trunc_tol: f64) -> Result<Self> {
        let model = ConvolutiveLongStay { count, cont, trunc_tol };
        model.validate()?;
        Ok(model)
    }

    pub fn validate(&self) -> Result<()> {
        self.count.validate()?;
        self.cont.validate()?;
        if !(self.trunc_tol > 0.0 && self.trunc_tol <= 1e-3) {
            return Err(LosError::domain(format!(
                "trunc_tol must lie in (0, 1e-3], got {}",
                self.trunc_tol
            )));
        }
        Ok(())
    }

    /// The truncated pmf of the discharge lag.
    pub fn table(&self) -> Result<PmfTable> {
        PmfTable::new(&self.count, self.trunc_tol)
    }

    /// Index range (into the table) of terms inside the retained band.
    fn band(&self, y: f64, table: &PmfTable) -> (usize, usize) {
        let (lo_x, hi_x) = self.cont.effective_range(SKIP_WIDTH);
        // y - k in [lo_x, hi_x]  <=>  k in [y - hi_x, y - lo_x]
        let k_min = (y - hi_x).ceil();
        let mut k_max = (y - lo_x).floor();
        if self.cont.family == ContFamily::LogNormal && k_max >= y {
            k_max = y.ceil() - 1.0;
        }
        let lo = table.k_lo() as f64;
        let hi = table.k_hi() as f64;
        let a = k_min.max(lo);
        let b = k_max.min(hi);
        if !(a <= b) {
            return (1, 0);
        }
        ((a - lo) as usize, (b - lo) as usize)
    }

    /// Log density at `y`, given the lag table from [`Self::table`].
    ///
    /// When `posterior` is supplied it receives `(k, P(K = k | Y_L = y))` for
    /// every retained term; the weights sum to one.
    pub fn ln_pdf_terms(
        &self,
        y: f64,
        table: &PmfTable,
        mut posterior: Option<&mut Vec<(u64, f64)>>,
    ) -> f64 {
        if let Some(out) = posterior.as_deref_mut() {
            out.clear();
        }
        if let Some(k) = table.point_mass() {
            let l = self.cont.ln_pdf(y - k as f64) + table.ln_pmf(k);
            if let Some(out) = posterior {
                out.push((k, 1.0));
            }
            return l;
        }
        let pmf = table.pmf_slice();
        let (a, b) = self.band(y, table);
        let mut sum = 0.0;
        if a <= b {
            let k0 = table.k_lo() as f64;
            match self.cont.family {
                ContFamily::Normal => {
                    let inv_s = 1.0 / self.cont.sigma;
                    for (i, &p) in pmf.iter().enumerate().take(b + 1).skip(a) {
                        let z = (y - (k0 + i as f64) - self.cont.mu) * inv_s;
                        let t = p * (-0.5 * z * z).exp();
                        sum += t;
                        if let Some(out) = posterior.as_deref_mut() {
                            out.push((table.k_lo() + i as u64, t));
                        }
                    }
                    sum *= inv_s;
                    if let Some(out) = posterior.as_deref_mut() {
                        for w in out.iter_mut() {
                            w.1 *= inv_s;
                        }
                    }
                }
                ContFamily::LogNormal => {
                    for (i, &p) in pmf.iter().enumerate().take(b + 1).skip(a) {
                        let x = y - (k0 + i as f64);
                        let t = if x > 0.0 {
                            let lx = x.ln();
                            let z = (lx - self.cont.mu) / self.cont.sigma;
                            p * (-0.5 * z * z - lx).exp() / self.cont.sigma
                        } else {
                            0.0
                        };
                        sum += t;
                        if let Some(out) = posterior.as_deref_mut() {
                            out.push((table.k_lo() + i as u64, t));
                        }
                    }
                }
            }
        }
        let ln_sqrt = LN_SQRT_2PI;
        if sum > 1e-280 {
            if let Some(out) = posterior {
                for w in out.iter_mut() {
                    w.1 /= sum;
                }
            }
            return sum.ln() - ln_sqrt;
        }
        // Nothing usable in the band: exact log-space sum over the window.
        let ln_terms: Vec<f64> = table
            .ln_pmf_slice()
            .iter()
            .enumerate()
            .map(|(i, &lp)| lp + self.cont.ln_pdf(y - (table.k_lo() + i as u64) as f64))
            .collect();
        let total = log_sum_exp(&ln_terms);
        if let Some(out) = posterior {
            out.clear();
            if total > f64::NEG_INFINITY {
                for (i, &lt) in ln_terms.iter().enumerate() {
                    let w = (lt - total).exp();
                    if w > 0.0 {
                        out.push((table.k_lo() + i as u64, w));
                    }
                }
            }
        }
        total
    }

    pub fn ln_pdf_with(&self, y: f64, table: &PmfTable) -> f64 {
        self.ln_pdf_terms(y, table, None)
    }

    pub fn pdf_with(&self, y: f64, table: &PmfTable) -> f64 {
        self.ln_pdf_with(y, table).exp()
    }

    pub fn cdf_with(&self, y: f64, table: &PmfTable) -> f64 {
        let s: f64 = table
            .iter()
            .map(|(k, p)| p * self.cont.cdf(y - k as f64))
            .sum();
        s.clamp(0.0, 1.0)
    }

    pub fn pdf(&self, y: f64) -> Result<f64> {
        Ok(self.pdf_with(y, &self.table()?))
    }

    pub fn ln_pdf(&self, y: f64) -> Result<f64> {
        Ok(self.ln_pdf_with(y, &self.table()?))
    }

    pub fn cdf(&self, y: f64) -> Result<f64> {
        Ok(self.cdf_with(y, &self.table()?))
    }

    /// `E[K] + E[E]`.
    pub fn mean(&self) -> Result<f64> {
        Ok(self.count.mean()? + self.cont.mean())
    }

    pub fn variance(&self) -> Result<f64> {
        Ok(self.count.variance()? + self.cont.variance())
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<f64> {
        let k = self.count.sample(rng)?;
        Ok(k as f64 + self.cont.sample(rng))
    }
}

pub fn conv_pdf(model: &ConvolutiveLongStay, y: f64) -> Result<f64> {
    model.validate()?;
    model.pdf(y)
}

pub fn conv_cdf(model: &ConvolutiveLongStay, y: f64) -> Result<f64> {
    model.validate()?;
    model.cdf(y)
}

pub fn conv_mean(model: &ConvolutiveLongStay) -> Result<f64> {
    model.validate()?;
    model.mean()
}

/// `n` independent draws of `K + E`.
pub fn conv_sample<R: Rng + ?Sized>(model: &ConvolutiveLongStay, n: usize, rng: &mut R) -> Result<Vec<f64>> {
    model.validate()?;
    match model.count {
        CountDistSpec::Cmp { .. } | CountDistSpec::Multinomial { .. } => {
            let table = PmfTable::new(&model.count, 1e-14)?;
            Ok((0..n)
                .map(|_| table.sample(rng) as f64 + model.cont.sample(rng))
                .collect())
        }
        _ => (0..n).map(|_| model.sample(rng)).collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::math::ln_gamma;

    const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

    fn brute(model: &ConvolutiveLongStay, y: f64, kmax: u64) -> f64 {
        (0..=kmax)
            .map(|k| model.cont.pdf(y - k as f64) * model.count.pmf(k).unwrap())
            .sum()
    }

    #[test]
    fn point_mass_lag_collapses_to_recovery_density() {
        let m = ConvolutiveLongStay::new(
            CountDistSpec::negbin(1.0, 1.0 - 1e-15).unwrap(),
            ContDistSpec::normal(4.0, 1.0).unwrap(),
        )
        .unwrap();
        assert!((m.pdf(4.0).unwrap() - INV_SQRT_2PI).abs() < 1e-12);

        let b0 = ConvolutiveLongStay::new(
            CountDistSpec::binomial(0, 0.5).unwrap(),
            ContDistSpec::lognormal(0.0, 1.0).unwrap(),
        )
        .unwrap();
        assert!((b0.pdf(1.0).unwrap() - INV_SQRT_2PI).abs() < 1e-15);

        let shifted = ConvolutiveLongStay::new(
            CountDistSpec::multinomial(vec![0.0, 0.0, 1.0]).unwrap(),
            ContDistSpec::normal(1.0, 0.7).unwrap(),
        )
        .unwrap();
        for &y in &[-1.0, 2.5, 3.0, 7.1] {
            assert_eq!(shifted.pdf(y).unwrap(), shifted.cont.pdf(y - 2.0));
        }
    }

    #[test]
    fn poisson_normal_matches_brute_force() {
        let m = ConvolutiveLongStay::new(
            CountDistSpec::poisson(2.0).unwrap(),
            ContDistSpec::normal(3.0, 0.8).unwrap(),
        )
        .unwrap();
        let oracle = brute(&m, 5.0, 60);
        assert!((m.pdf(5.0).unwrap() - oracle).abs() < 1e-12);
    }

    #[test]
    fn negbin_normal_matches_explicit_sum() {
        let (r, p, mu, s) = (2.0f64, 0.4f64, 4.0f64, 1.0f64);
        let m = ConvolutiveLongStay::new(
            CountDistSpec::negbin(r, p).unwrap(),
            ContDistSpec::normal(mu, s).unwrap(),
        )
        .unwrap();
        for &y in &[0.5, 3.3, 7.0, 15.2] {
            let mut direct = 0.0;
            let mut fact = 1.0f64;
            for k in 0..150u32 {
                if k > 0 {
                    fact *= k as f64;
                }
                let kf = k as f64;
                let g = (ln_gamma(r + kf) - ln_gamma(r)).exp() / fact;
                direct += (-(y - kf - mu).powi(2) / (2.0 * s * s)).exp() / (s * (2.0 * std::f64::consts::PI).sqrt())
                    * g
                    * p.powf(r)
                    * (1.0 - p).powf(kf);
            }
            assert!((m.pdf(y).unwrap() - direct).abs() < 1e-12, "y={y} {} {direct}", m.pdf(y).unwrap());
        }
    }

    #[test]
    fn lognormal_recovery_ignores_nonpositive_shifts() {
        let m = ConvolutiveLongStay::new(
            CountDistSpec::poisson(3.0).unwrap(),
            ContDistSpec::lognormal(0.5, 0.4).unwrap(),
        )
        .unwrap();
        // y = 2 exactly: k = 2 gives y - k = 0 which has zero density
        let oracle: f64 = (0..2u64)
            .map(|k| m.cont.pdf(2.0 - k as f64) * m.count.pmf(k).unwrap())
            .sum();
        assert!((m.pdf(2.0).unwrap() - oracle).abs() < 1e-14);
        assert_eq!(m.pdf(-0.5).unwrap(), 0.0);
    }

    #[test]
    fn far_tail_uses_log_space() {
        let m = ConvolutiveLongStay::new(
            CountDistSpec::poisson(2.0).unwrap(),
            ContDistSpec::normal(3.0, 0.5).unwrap(),
        )
        .unwrap();
        let l = m.ln_pdf(200.0).unwrap();
        assert!(l.is_finite() && l < -1000.0);
        let mut post = Vec::new();
        m.ln_pdf_terms(200.0, &m.table().unwrap(), Some(&mut post));
        let s: f64 = post.iter().map(|w| w.1).sum();
        assert!((s - 1.0).abs() < 1e-12);
    }

    #[test]
    fn posterior_weights_sum_to_one() {
        let m = ConvolutiveLongStay::new(
            CountDistSpec::negbin(2.0, 0.4).unwrap(),
            ContDistSpec::normal(4.0, 1.0).unwrap(),
        )
        .unwrap();
        let t = m.table().unwrap();
        let mut post = Vec::new();
        let l = m.ln_pdf_terms(6.3, &t, Some(&mut post));
        assert!((l - m.ln_pdf_with(6.3, &t)).abs() == 0.0);
        let s: f64 = post.iter().map(|w| w.1).sum();
        assert!((s - 1.0).abs() < 1e-14);
    }

    #[test]
    fn means() {
        let m = ConvolutiveLongStay::new(
            CountDistSpec::negbin(2.0, 0.4).unwrap(),
            ContDistSpec::normal(4.0, 1.0).unwrap(),
        )
        .unwrap();
        assert!((m.mean().unwrap() - 7.0).abs() < 1e-12);
        let z = ConvolutiveLongStay::new(
            CountDistSpec::poisson(0.0).unwrap(),
            ContDistSpec::normal(2.5, 0.3).unwrap(),
        )
        .unwrap();
        assert_eq!(z.mean().unwrap(), 2.5);
        let l = ConvolutiveLongStay::new(
            CountDistSpec::poisson(2.0).unwrap(),
            ContDistSpec::lognormal(0.0, 0.5).unwrap(),
        )
        .unwrap();
        assert!((l.mean().unwrap() - (2.0 + 0.125f64.exp())).abs() < 1e-12);
    }

    #[test]
    fn cdf_limits() {
        let m = ConvolutiveLongStay::new(
            CountDistSpec::poisson(0.0).unwrap(),
            ContDistSpec::normal(0.0, 1.0).unwrap(),
        )
        .unwrap();
        assert_eq!(m.cdf(0.0).unwrap(), 0.5);
        let n = ConvolutiveLongStay::new(
            CountDistSpec::negbin(2.0, 0.4).unwrap(),
            ContDistSpec::normal(4.0, 1.0).unwrap(),
        )
        .unwrap();
        let sd = n.variance().unwrap().sqrt();
        assert!((n.cdf(7.0 + 50.0 * sd).unwrap() - 1.0).abs() < 1e-6);
    }

    #[test]
    fn trunc_tol_range() {
        let c = CountDistSpec::poisson(1.0).unwrap();
        let e = ContDistSpec::normal(0.0, 1.0).unwrap();
        assert!(ConvolutiveLongStay::with_tol(c.clone(), e, 1e-2).is_err());
        assert!(ConvolutiveLongStay::with_tol(c, e, 0.0).is_err());
    }
}
