//! Goodness of fit: empirical CDF, Kolmogorov distance and the single-family
//! baselines (log-normal, gamma, Weibull) a fitted mixture is compared with.

use serde::{Deserialize, Serialize};
use statrs::function::gamma::{digamma, gamma_lr};

use crate::error::{LosError, Result};
use crate::math::std_normal_cdf;
use crate::optim::brent_root;

/// Sorted sample defining a right-continuous step CDF.
#[derive(Debug, Clone, PartialEq)]
pub struct EcdfView {
    sorted: Vec<f64>,
}

impl EcdfView {
    pub fn new(data: &[f64]) -> Result<Self> {
        if data.is_empty() {
            return Err(LosError::Shape("empirical CDF of an empty sample".into()));
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(LosError::DataDomain {
                row: i + 1,
                reason: format!("value {} is not finite", data[i]),
            });
        }
        let mut sorted = data.to_vec();
        sorted.sort_by(f64::total_cmp);
        Ok(EcdfView { sorted })
    }

    pub fn n(&self) -> usize {
        self.sorted.len()
    }

    pub fn values(&self) -> &[f64] {
        &self.sorted
    }

    /// Fraction of the sample at or below `x`.
    pub fn eval(&self, x: f64) -> f64 {
        self.sorted.partition_point(|v| *v <= x) as f64 / self.n() as f64
    }
}

/// Slack allowed when checking that a model CDF is monotone and in `[0, 1]`.
const CDF_SLACK: f64 = 1e-12;

/// `sup_x |F_n(x) - F(x)|` for a continuous model CDF `F`.
///
/// The supremum is attained at a sample point, on one side or the other of
/// its jump, so both gaps are checked at each distinct value. Tied values
/// make a single jump of height `multiplicity / n`.
pub fn kolmogorov_distance<F: Fn(f64) -> f64>(ecdf: &EcdfView, cdf: F) -> Result<f64> {
    let n = ecdf.n() as f64;
    let xs = ecdf.values();
    let mut d: f64 = 0.0;
    let mut prev_f = f64::NEG_INFINITY;
    let mut below = 0usize;
    let mut i = 0;
    while i < xs.len() {
        let x = xs[i];
        let mut j = i;
        while j < xs.len() && xs[j] == x {
            j += 1;
        }
        let f = cdf(x);
        if !(-CDF_SLACK..=1.0 + CDF_SLACK).contains(&f) {
            return Err(LosError::ModelValidity(format!("model CDF at {x} is {f}")));
        }
        if f < prev_f - CDF_SLACK {
            return Err(LosError::ModelValidity(format!(
                "model CDF decreases at {x} ({prev_f} then {f})"
            )));
        }
        prev_f = prev_f.max(f);
        let lo = below as f64 / n;
        let hi = j as f64 / n;
        d = d.max((f - lo).abs()).max((f - hi).abs());
        below = j;
        i = j;
    }
    Ok(d.clamp(0.0, 1.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BaselineFamily {
    LogNormal,
    Gamma,
    Weibull,
}

impl BaselineFamily {
    pub const ALL: [BaselineFamily; 3] = [BaselineFamily::LogNormal, BaselineFamily::Gamma, BaselineFamily::Weibull];
}

/// A fitted single-family baseline.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family")]
pub enum BaselineSpec {
    LogNormal { mu: f64, sigma: f64 },
    Gamma { shape: f64, rate: f64 },
    Weibull { shape: f64, scale: f64 },
}

impl BaselineSpec {
    pub fn label(&self) -> &'static str {
        match self {
            BaselineSpec::LogNormal { .. } => "LogNormal",
            BaselineSpec::Gamma { .. } => "Gamma",
            BaselineSpec::Weibull { .. } => "Weibull",
        }
    }

    pub fn cdf(&self, x: f64) -> f64 {
        if x <= 0.0 {
            return 0.0;
        }
        match *self {
            BaselineSpec::LogNormal { mu, sigma } => std_normal_cdf((x.ln() - mu) / sigma),
            BaselineSpec::Gamma { shape, rate } => gamma_lr(shape, rate * x),
            BaselineSpec::Weibull { shape, scale } => -(-(x / scale).powf(shape)).exp_m1(),
        }
    }
}

fn degenerate(family: &str, reason: &str) -> LosError {
    LosError::DegenerateFit {
        family: family.to_string(),
        reason: reason.to_string(),
    }
}

/// Maximum likelihood fit of a two-parameter family to positive data.
///
/// Gamma and Weibull shapes solve their profile score equations with a
/// bracketing root finder; the other parameter then has a closed form.
pub fn fit_baseline(data: &[f64], family: BaselineFamily) -> Result<BaselineSpec> {
    if data.is_empty() {
        return Err(LosError::Shape("cannot fit a baseline to no data".into()));
    }
    if let Some(i) = data.iter().position(|y| !(*y > 0.0 && y.is_finite())) {
        return Err(LosError::DataDomain {
            row: i + 1,
            reason: format!("baseline fits need positive values, got {}", data[i]),
        });
    }
    let n = data.len() as f64;
    let logs: Vec<f64> = data.iter().map(|y| y.ln()).collect();
    let mean_log = logs.iter().sum::<f64>() / n;
    let name = format!("{family:?}");
    if data.iter().all(|y| *y == data[0]) {
        return Err(degenerate(&name, "all observations are equal"));
    }
    match family {
        BaselineFamily::LogNormal => {
            let var = logs.iter().map(|l| (l - mean_log).powi(2)).sum::<f64>() / n;
            if !(var > 0.0) {
                return Err(degenerate(&name, "zero variance of log values"));
            }
            Ok(BaselineSpec::LogNormal { mu: mean_log, sigma: var.sqrt() })
        }
        BaselineFamily::Gamma => {
            let mean = data.iter().sum::<f64>() / n;
            let s = mean.ln() - mean_log;
            if !(s > 0.0) {
                return Err(degenerate(&name, "no spread on the log scale"));
            }
            // ln k - ψ(k) decreases from +inf to 0.
            let score = |k: f64| k.ln() - digamma(k) - s;
            let (mut lo, mut hi) = (1e-3, 1e3);
            while score(lo) < 0.0 && lo > 1e-300 {
                lo *= 1e-3;
            }
            while score(hi) > 0.0 && hi < 1e300 {
                hi *= 1e3;
            }
            let shape = brent_root(score, lo, hi, 1e-10 * lo)
                .ok_or_else(|| degenerate(&name, "shape equation has no root"))?;
            Ok(BaselineSpec::Gamma { shape, rate: shape / mean })
        }
        BaselineFamily::Weibull => {
            let ymax = data.iter().copied().fold(0.0, f64::max);
            let z: Vec<f64> = data.iter().map(|y| y / ymax).collect();
            let lz: Vec<f64> = z.iter().map(|v| v.ln()).collect();
            let mean_lz = lz.iter().sum::<f64>() / n;
            // Σ z^k ln z / Σ z^k - 1/k - mean(ln z) is increasing in k.
            let score = |k: f64| {
                let (mut a, mut b) = (0.0, 0.0);
                for (zi, li) in z.iter().zip(&lz) {
                    let p = zi.powf(k);
                    a += p * li;
                    b += p;
                }
                a / b - 1.0 / k - mean_lz
            };
            let (mut lo, mut hi) = (1e-2, 1e2);
            while score(lo) > 0.0 && lo > 1e-12 {
                lo *= 1e-2;
            }
            while score(hi) < 0.0 && hi < 1e8 {
                hi *= 1e2;
            }
            let shape = brent_root(score, lo, hi, 1e-10 * lo)
                .ok_or_else(|| degenerate(&name, "shape equation has no root"))?;
            let mk = z.iter().map(|v| v.powf(shape)).sum::<f64>() / n;
            Ok(BaselineSpec::Weibull { shape, scale: ymax * mk.powf(1.0 / shape) })
        }
    }
}

/// One line of a comparison table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GofRow {
    pub group: String,
    pub label: String,
    pub n: usize,
    pub distance: f64,
}

/// A labelled model CDF to compare against data.
pub type LabeledCdf<'a> = (String, Box<dyn Fn(f64) -> f64 + 'a>);

/// Kolmogorov distance of each model to `data`, sorted ascending (stable,
/// so equal distances keep their input order).
pub fn compare(group: &str, data: &[f64], models: &[LabeledCdf<'_>]) -> Result<Vec<GofRow>> {
    let ecdf = EcdfView::new(data)?;
    let mut rows = models
        .iter()
        .map(|(label, cdf)| {
            Ok(GofRow {
                group: group.to_string(),
                label: label.clone(),
                n: ecdf.n(),
                distance: kolmogorov_distance(&ecdf, cdf)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    rows.sort_by(|a, b| a.distance.total_cmp(&b.distance));
    Ok(rows)
}
