//! EM with the latent pair (class, discharge lag).
//!
//! The E-step yields the class posterior (by summing the joint over the lag)
//! and, for each row, the posterior of the lag given a long stay. The M-step
//! then only involves the single-component densities: the lag law is fitted
//! to the posterior-weighted lag histogram and the recovery period to the
//! weighted residuals `y_i - c`.

use std::collections::BTreeMap;

use rayon::prelude::*;

use super::em::{e_step, run_em, Blocks, EOut, EmAlgorithm, Responsibilities};
use super::layout::Block;
use super::{FitConfig, FitResult};
use crate::dist::{cmp_log_normalizer, ContFamily, CountDistSpec, CMP_DEFAULT_TOL};
use crate::error::{LosError, Result};
use crate::math::ln_gamma;
use crate::mixture::{LosData, MixtureModel, Resolved, RowGroups};
use crate::optim::brent_min;

/// `(k, P(K = k | y_i, long))` pairs per observation.
pub type CountPosterior = Vec<Vec<(u64, f64)>>;

/// Class posteriors and lag posteriors under `model`.
pub fn em2d_e_step(model: &MixtureModel, data: &LosData) -> Result<(Responsibilities, CountPosterior)> {
    model.validate()?;
    data.check_positive()?;
    let groups = RowGroups::new(model, &data.design)?;
    let e = e_step(model, data, &groups, true)?;
    if let Some(i) = e.gamma.iter().position(|g| g[0].is_nan()) {
        return Err(LosError::DegeneratePoint { row: data.rows[i], y: data.y[i] });
    }
    Ok((e.gamma, e.post.unwrap_or_default()))
}

struct TwoLatent<'a> {
    data: &'a LosData,
    config: &'a FitConfig,
    groups: RowGroups,
}

/// Posterior-weighted lag histogram per row group.
fn lag_histograms(e: &EOut, groups: &RowGroups) -> Vec<BTreeMap<u64, f64>> {
    let mut h = vec![BTreeMap::new(); groups.len()];
    let post = e.post.as_ref().expect("two-latent E-step keeps lag posteriors");
    for (i, (g, p)) in e.gamma.iter().zip(post).enumerate() {
        if g[1] <= 0.0 {
            continue;
        }
        let hist = &mut h[groups.group_of(i)];
        for &(k, w) in p {
            *hist.entry(k).or_insert(0.0) += g[1] * w;
        }
    }
    h
}

fn ln_pmf_for(count: &CountDistSpec) -> Option<impl Fn(u64) -> f64 + '_> {
    let ln_z = match *count {
        CountDistSpec::Cmp { lambda, nu } => cmp_log_normalizer(lambda, nu, CMP_DEFAULT_TOL).ok()?,
        _ => 0.0,
    };
    Some(move |k| count.ln_pmf_with(k, ln_z))
}

impl TwoLatent<'_> {
    fn blocks(&self) -> Blocks<'_> {
        Blocks { data: self.data, config: self.config, groups: &self.groups }
    }

    fn update_count(&self, model: &MixtureModel, e: &EOut) -> Result<MixtureModel> {
        let hists = lag_histograms(e, &self.groups);
        let q = |m: &MixtureModel| {
            let Ok(ms) = Resolved::models(m, &self.data.design, &self.groups) else {
                return f64::NEG_INFINITY;
            };
            let mut total = 0.0;
            for (mg, hist) in ms.iter().zip(&hists) {
                let Some(lp) = ln_pmf_for(&mg.long.count) else {
                    return f64::NEG_INFINITY;
                };
                for (&k, &w) in hist {
                    if w > 0.0 {
                        total += w * lp(k);
                    }
                }
            }
            total
        };
        let b = self.blocks();
        if !b.closed_form(model, Block::Count) {
            return b.maximize(model, &[Block::Count], q);
        }
        let hist = &hists[0];
        let w: f64 = hist.values().sum();
        if !(w > 0.0) {
            return Err(LosError::ComponentStarvation("long"));
        }
        let cbar = hist.iter().map(|(&k, &v)| k as f64 * v).sum::<f64>() / w;
        let new_count = match model.long.count {
            CountDistSpec::Poisson { .. } => Some(CountDistSpec::Poisson { lambda: cbar.max(1e-12) }),
            CountDistSpec::Binomial { n, .. } if n > 0 => Some(CountDistSpec::Binomial {
                n,
                p: (cbar / n as f64).clamp(1e-12, 1.0 - 1e-12),
            }),
            CountDistSpec::Binomial { .. } => None,
            CountDistSpec::Multinomial { ref weights } => {
                let mut out = vec![0.0; weights.len()];
                for (&k, &v) in hist {
                    if let Some(slot) = out.get_mut(k as usize) {
                        *slot += v / w;
                    }
                }
                let total: f64 = out.iter().sum();
                out.iter_mut().for_each(|x| *x /= total);
                Some(CountDistSpec::Multinomial { weights: out })
            }
            CountDistSpec::NegBin { .. } if cbar > 1e-12 => {
                // Profile likelihood in r, with p = r / (r + mean lag).
                let profile = |u: f64| {
                    let r = u.exp();
                    let p = r / (r + cbar);
                    let (lp, lq) = (p.ln(), (-p).ln_1p());
                    let lg_r = ln_gamma(r);
                    -hist
                        .iter()
                        .map(|(&k, &v)| v * (ln_gamma(r + k as f64) - lg_r + r * lp + k as f64 * lq))
                        .sum::<f64>()
                };
                let (u, _) = brent_min(profile, (1e-4f64).ln(), (1e6f64).ln(), 1e-12);
                let r = u.exp();
                Some(CountDistSpec::NegBin { r, p: r / (r + cbar) })
            }
            CountDistSpec::NegBin { .. } => None,
            CountDistSpec::Cmp { .. } => return b.maximize(model, &[Block::Count], q),
        };
        let Some(count) = new_count else {
            return Ok(model.clone());
        };
        if count.validate().is_err() {
            return Ok(model.clone());
        }
        let mut m = model.clone();
        m.long.count = count;
        Ok(b.better(model, m, q))
    }

    fn update_cont(&self, model: &MixtureModel, e: &EOut) -> Result<MixtureModel> {
        let post = e.post.as_ref().expect("two-latent E-step keeps lag posteriors");
        let y = &self.data.y;
        let family = model.long.cont.family;
        let resid = |yi: f64, k: u64| -> f64 {
            let x = yi - k as f64;
            match family {
                ContFamily::Normal => x,
                ContFamily::LogNormal => x.ln(),
            }
        };
        let q = |m: &MixtureModel| {
            let Ok(ms) = Resolved::models(m, &self.data.design, &self.groups) else {
                return f64::NEG_INFINITY;
            };
            let terms: Vec<f64> = e
                .gamma
                .par_iter()
                .zip(post.par_iter())
                .enumerate()
                .map(|(i, (g, p))| {
                    if g[1] <= 0.0 {
                        return 0.0;
                    }
                    let cont = &ms[self.groups.group_of(i)].long.cont;
                    g[1] * p
                        .iter()
                        .filter(|(_, w)| *w > 0.0)
                        .map(|&(k, w)| w * cont.ln_pdf(y[i] - k as f64))
                        .sum::<f64>()
                })
                .collect();
            terms.iter().sum()
        };
        let b = self.blocks();
        if !b.closed_form(model, Block::Cont) {
            return b.maximize(model, &[Block::Cont], q);
        }
        let mut w = 0.0;
        let mut s1 = 0.0;
        for (i, (g, p)) in e.gamma.iter().zip(post).enumerate() {
            for &(k, pw) in p {
                let wt = g[1] * pw;
                if wt > 0.0 {
                    w += wt;
                    s1 += wt * resid(y[i], k);
                }
            }
        }
        if !(w > 0.0) {
            return Err(LosError::ComponentStarvation("long"));
        }
        let mu = s1 / w;
        let mut s2 = 0.0;
        for (i, (g, p)) in e.gamma.iter().zip(post).enumerate() {
            for &(k, pw) in p {
                let wt = g[1] * pw;
                if wt > 0.0 {
                    s2 += wt * (resid(y[i], k) - mu).powi(2);
                }
            }
        }
        let var = s2 / w;
        if !(var > 0.0) {
            return Ok(model.clone());
        }
        let mut m = model.clone();
        m.long.cont.mu = mu;
        m.long.cont.sigma = var.sqrt();
        Ok(b.better(model, m, q))
    }
}

impl EmAlgorithm for TwoLatent<'_> {
    fn e_step(&self, model: &MixtureModel) -> Result<EOut> {
        e_step(model, self.data, &self.groups, true)
    }

    fn m_step(&self, model: &MixtureModel, e: &EOut) -> Result<MixtureModel> {
        let b = self.blocks();
        let m = b.update_mixing(model, e)?;
        let m = b.update_short(&m, e)?;
        let m = self.update_count(&m, e)?;
        self.update_cont(&m, e)
    }
}

/// Two-latent EM from `start`.
pub fn fit_em2d(data: &LosData, start: &MixtureModel, config: &FitConfig) -> Result<FitResult> {
    let groups = RowGroups::new(start, &data.design)?;
    let alg = TwoLatent { data, config, groups };
    run_em(&alg, start, config, true)
}
