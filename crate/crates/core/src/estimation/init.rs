use rand::Rng;
use rand_distr::StandardNormal;

use super::layout::Layout;
use super::{fit_rng, FitConfig, InitStrategy};
use crate::dist::{ContFamily, CountDistSpec};
use crate::error::{LosError, Result};
use crate::mixture::{LosData, MixtureModel};

/// Starting models plus any warnings raised while building them.
#[derive(Debug, Clone)]
pub struct Initialization {
    pub starts: Vec<MixtureModel>,
    pub warnings: Vec<String>,
}

/// Standard deviation of the jitter added to each unconstrained coordinate.
const JITTER_SD: f64 = 0.2;

pub fn initialize(data: &LosData, template: &MixtureModel, config: &FitConfig) -> Result<Initialization> {
    if data.is_empty() {
        return Err(LosError::Init("no observations".into()));
    }
    match config.init {
        InitStrategy::UserSupplied => Ok(Initialization {
            starts: vec![template.clone()],
            warnings: Vec::new(),
        }),
        InitStrategy::QuantileSplit { threshold_days } => {
            let (m, warnings) = quantile_split(data, template, threshold_days, &config.fixed)?;
            Ok(Initialization { starts: vec![m], warnings })
        }
        InitStrategy::MultiStart { k, threshold_days } => {
            let (base, warnings) = quantile_split(data, template, threshold_days, &config.fixed)?;
            let layout = Layout::full(&base, &config.fixed);
            let theta = layout.pack(&base);
            let mut rng = fit_rng(config.seed);
            let mut starts = vec![base.clone()];
            while starts.len() < k {
                let jittered: Vec<f64> = theta
                    .iter()
                    .map(|v| v + JITTER_SD * rng.sample::<f64, _>(StandardNormal))
                    .collect();
                starts.push(layout.unpack(&jittered, &base)?);
            }
            Ok(Initialization { starts, warnings })
        }
    }
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

fn variance(xs: &[f64]) -> f64 {
    let m = mean(xs);
    xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / xs.len() as f64
}

/// Empirical quantile by linear interpolation of the sorted sample.
fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let i = pos.floor() as usize;
    let f = pos - i as f64;
    if i + 1 < sorted.len() {
        sorted[i] * (1.0 - f) + sorted[i + 1] * f
    } else {
        sorted[i]
    }
}

/// Moment-based start: stays below `threshold` seed the short component,
/// the rest the long one. The long stays' lower decile locates the recovery
/// period, the excess of their mean over it gives the mean lag, and a quarter
/// of their variance is attributed to the recovery period.
pub fn quantile_split(
    data: &LosData,
    template: &MixtureModel,
    threshold: f64,
    fixed: &[crate::covariates::Target],
) -> Result<(MixtureModel, Vec<String>)> {
    let mut warnings = Vec::new();
    let all: Vec<f64> = data.y.clone();
    let mut short: Vec<f64> = all.iter().copied().filter(|&y| y < threshold).collect();
    let mut long: Vec<f64> = all.iter().copied().filter(|&y| y >= threshold).collect();
    let split_ok = short.len() >= 2 && long.len() >= 2;
    if !split_ok {
        warnings.push(format!(
            "split at {threshold} days left {} short and {} long stays; starting both components from all stays",
            short.len(),
            long.len()
        ));
        if short.len() < 2 {
            short = all.clone();
        }
        if long.len() < 2 {
            long = all.clone();
        }
    }

    let mut m = template.base();
    m.pi = if split_ok {
        (long.len() as f64 / all.len() as f64).clamp(0.02, 0.98)
    } else {
        0.5
    };

    let logs: Vec<f64> = short.iter().map(|y| y.ln()).collect();
    m.short.mu = mean(&logs);
    m.short.sigma = variance(&logs).sqrt().max(0.05);

    long.sort_by(f64::total_cmp);
    let v = variance(&long).max(1e-4);
    let loc = quantile(&long, 0.1);
    let mut count_mean = (mean(&long) - loc).max(0.5);
    if let Some(kmax) = m.long.count.support_max() {
        count_mean = count_mean.min(0.9 * kmax as f64).max(0.1 * kmax as f64);
    }
    let cont_var = 0.25 * v;
    let count_var = (v - cont_var).max(count_mean * 1.001);
    match m.long.cont.family {
        ContFamily::Normal => {
            m.long.cont.mu = loc;
            m.long.cont.sigma = cont_var.sqrt().max(0.05);
        }
        ContFamily::LogNormal => {
            let level = loc.max(0.1);
            let s2 = (1.0 + cont_var / (level * level)).ln().max(1e-4);
            m.long.cont.mu = level.ln() - 0.5 * s2;
            m.long.cont.sigma = s2.sqrt();
        }
    }
    m.long.count = match m.long.count {
        CountDistSpec::NegBin { .. } => {
            let p = count_mean / count_var;
            CountDistSpec::NegBin { r: count_mean * p / (1.0 - p), p }
        }
        CountDistSpec::Poisson { .. } => CountDistSpec::Poisson { lambda: count_mean },
        CountDistSpec::Cmp { .. } => CountDistSpec::Cmp { lambda: count_mean, nu: 1.0 },
        CountDistSpec::Binomial { n, p } => {
            if n == 0 {
                CountDistSpec::Binomial { n, p }
            } else {
                CountDistSpec::Binomial { n, p: (count_mean / n as f64).clamp(0.05, 0.95) }
            }
        }
        CountDistSpec::Multinomial { ref weights } => {
            let pois = CountDistSpec::Poisson { lambda: count_mean };
            let raw: Vec<f64> = (0..weights.len() as u64)
                .map(|k| pois.ln_pmf_with(k, 0.0).exp().max(1e-6))
                .collect();
            let total: f64 = raw.iter().sum();
            CountDistSpec::Multinomial { weights: raw.iter().map(|w| w / total).collect() }
        }
    };

    for &t in fixed {
        if let Some(v) = template.get(t) {
            m.set(t, v)?;
        }
    }
    let mut maps = Vec::with_capacity(template.parameter_maps.len());
    for map in &template.parameter_maps {
        let mut map = map.clone();
        if !fixed.contains(&map.target) {
            let value = m.get(map.target).expect("validated template");
            map.beta.iter_mut().for_each(|b| *b = 0.0);
            map.beta[0] = map.link.inverse(value);
        }
        maps.push(map);
    }
    m.parameter_maps = maps;
    m.validate().map_err(|e| LosError::Init(format!("moment start is invalid: {e}")))?;
    Ok((m, warnings))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::convolution::ConvolutiveLongStay;
    use crate::dist::ContDistSpec;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn truth() -> MixtureModel {
        MixtureModel::new(
            0.3,
            ContDistSpec::lognormal(-1.0, 0.5).unwrap(),
            ConvolutiveLongStay::new(
                CountDistSpec::negbin(2.0, 0.4).unwrap(),
                ContDistSpec::normal(4.0, 1.0).unwrap(),
            )
            .unwrap(),
        )
        .unwrap()
    }

    #[test]
    fn split_separates_short_and_long() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let data = LosData::from_y(truth().sample(5000, &mut rng).unwrap()).unwrap();
        let (m, w) = quantile_split(&data, &truth(), 1.0, &[]).unwrap();
        assert!(w.is_empty());
        assert!(m.short.mean() < 1.0);
        assert!((m.pi - 0.3).abs() < 0.05);
    }

    #[test]
    fn empty_side_falls_back() {
        let data = LosData::from_y(vec![0.2, 0.3, 0.5, 0.4]).unwrap();
        let (m, w) = quantile_split(&data, &truth(), 1.0, &[]).unwrap();
        assert_eq!(w.len(), 1);
        assert!(m.validate().is_ok());
    }

    #[test]
    fn multistart_is_deterministic() {
        let data = LosData::from_y(vec![0.2, 0.3, 0.5, 3.0, 5.0, 7.5, 6.0]).unwrap();
        let config = FitConfig {
            init: InitStrategy::MultiStart { k: 4, threshold_days: 1.0 },
            seed: 9,
            ..Default::default()
        };
        let a = initialize(&data, &truth(), &config).unwrap();
        let b = initialize(&data, &truth(), &config).unwrap();
        assert_eq!(a.starts, b.starts);
        assert_eq!(a.starts.len(), 4);
        assert_ne!(a.starts[1], a.starts[2]);
    }
}
