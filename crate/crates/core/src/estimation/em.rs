//! Classical EM over the short/long class label, plus the iteration driver
//! and block updates shared with the two-latent variant.

use rayon::prelude::*;

use super::layout::{Block, Layout};
use super::{FitConfig, FitResult};
use crate::covariates::Target;
use crate::error::{LosError, Result};
use crate::mixture::{LosData, MixtureModel, Resolved, RowGroups};
use crate::optim::{minimize, OptOptions};

/// `[P(short | y_i), P(long | y_i)]` per observation.
pub type Responsibilities = Vec<[f64; 2]>;

/// Output of an E-step: the observed-data log-likelihood at the model it was
/// computed for, the class posteriors and, for the two-latent variant, the
/// lag posteriors of each row.
pub(super) struct EOut {
    pub loglik: f64,
    pub gamma: Responsibilities,
    pub post: Option<Vec<Vec<(u64, f64)>>>,
}

impl EOut {
    fn sums(&self) -> (f64, f64) {
        self.gamma
            .iter()
            .fold((0.0, 0.0), |(a, b), g| (a + g[0], b + g[1]))
    }

    /// Row index of the first observation with zero model density.
    fn degenerate_row(&self) -> Option<usize> {
        self.gamma.iter().position(|g| g[0].is_nan())
    }
}

/// Per-row log density, class posteriors and lag posterior.
type RowPosterior = (f64, [f64; 2], Vec<(u64, f64)>);

pub(super) fn e_step(
    model: &MixtureModel,
    data: &LosData,
    groups: &RowGroups,
    with_post: bool,
) -> Result<EOut> {
    let resolved = Resolved::new(model, &data.design, groups)?;
    let rows: Vec<RowPosterior> = data
        .y
        .par_iter()
        .enumerate()
        .map(|(i, &y)| {
            let g = groups.group_of(i);
            let m = &resolved.models[g];
            let mut post = Vec::new();
            let ls = m.short.ln_pdf(y);
            let ll = m
                .long
                .ln_pdf_terms(y, &resolved.tables[g], with_post.then_some(&mut post));
            let a = (-m.pi).ln_1p() + ls;
            let b = m.pi.ln() + ll;
            let total = crate::math::log_add_exp(a, b);
            if total == f64::NEG_INFINITY || total.is_nan() {
                return (f64::NEG_INFINITY, [f64::NAN, f64::NAN], post);
            }
            // Exponentiate the smaller posterior; the other is its complement.
            let gamma = if a <= b {
                let g0 = (a - total).exp();
                [g0, 1.0 - g0]
            } else {
                let g1 = (b - total).exp();
                [1.0 - g1, g1]
            };
            (total, gamma, post)
        })
        .collect();
    let mut loglik = 0.0;
    let mut gamma = Vec::with_capacity(rows.len());
    let mut post = Vec::with_capacity(if with_post { rows.len() } else { 0 });
    for (l, g, p) in rows {
        loglik += l;
        gamma.push(g);
        if with_post {
            post.push(p);
        }
    }
    Ok(EOut {
        loglik,
        gamma,
        post: with_post.then_some(post),
    })
}

/// Class posteriors of each observation under `model`.
pub fn em_e_step(model: &MixtureModel, data: &LosData) -> Result<Responsibilities> {
    model.validate()?;
    data.check_positive()?;
    let groups = RowGroups::new(model, &data.design)?;
    let e = e_step(model, data, &groups, false)?;
    if let Some(i) = e.degenerate_row() {
        return Err(LosError::DegeneratePoint { row: data.rows[i], y: data.y[i] });
    }
    Ok(e.gamma)
}

/// One classical M-step from given responsibilities, starting the numerical
/// long-stay update at `template`.
pub fn em_m_step(
    data: &LosData,
    responsibilities: &Responsibilities,
    template: &MixtureModel,
    config: &FitConfig,
) -> Result<MixtureModel> {
    if responsibilities.len() != data.len() {
        return Err(LosError::Shape(format!(
            "{} responsibility rows for {} observations",
            responsibilities.len(),
            data.len()
        )));
    }
    let groups = RowGroups::new(template, &data.design)?;
    let e = EOut {
        loglik: f64::NAN,
        gamma: responsibilities.clone(),
        post: None,
    };
    Classical { data, config, groups }.m_step(template, &e)
}

/// One EM iteration split into its two halves.
pub(super) trait EmAlgorithm {
    fn e_step(&self, model: &MixtureModel) -> Result<EOut>;
    fn m_step(&self, model: &MixtureModel, e: &EOut) -> Result<MixtureModel>;
}

pub(super) struct Classical<'a> {
    pub data: &'a LosData,
    pub config: &'a FitConfig,
    pub groups: RowGroups,
}

impl EmAlgorithm for Classical<'_> {
    fn e_step(&self, model: &MixtureModel) -> Result<EOut> {
        e_step(model, self.data, &self.groups, false)
    }

    fn m_step(&self, model: &MixtureModel, e: &EOut) -> Result<MixtureModel> {
        let b = Blocks { data: self.data, config: self.config, groups: &self.groups };
        let m = b.update_mixing(model, e)?;
        let m = b.update_short(&m, e)?;
        b.update_long(&m, e)
    }
}

/// Alternate E- and M-steps from `start`. Every accepted update raises the
/// log-likelihood; an update that would lower it ends the run.
pub(super) fn run_em<A: EmAlgorithm>(
    alg: &A,
    start: &MixtureModel,
    config: &FitConfig,
    keep_post: bool,
) -> Result<FitResult> {
    let layout = Layout::full(start, &config.fixed);
    let mut cur = start.clone();
    let mut e_cur = alg.e_step(&cur)?;
    if !e_cur.loglik.is_finite() {
        return Err(LosError::Init(format!("log-likelihood at the start is {}", e_cur.loglik)));
    }
    let mut trace = vec![e_cur.loglik];
    let mut next = alg.m_step(&cur, &e_cur)?;
    let mut iterations = 0;
    let mut converged = false;
    let mut quiet = false;
    let mut secant = Secant::default();
    let mut last_gain = f64::INFINITY;
    let mut reason = String::from("iteration limit reached");
    while iterations < config.max_iters {
        iterations += 1;
        let e_next = alg.e_step(&next)?;
        if !(e_next.loglik >= e_cur.loglik) {
            converged = e_cur.loglik - e_next.loglik < config.loglik_tol;
            reason = "update did not increase the log-likelihood".into();
            break;
        }
        let plain_gain = e_next.loglik - e_cur.loglik;
        let (cand, e_cand, remaining) = if config.accelerate {
            let (m, e, second_gain) = secant.step(alg, &layout, &cur, next, e_next)?;
            (m, e, projected_gain(plain_gain, second_gain, config.loglik_tol))
        } else {
            let r = projected_gain(last_gain, plain_gain, config.loglik_tol);
            last_gain = plain_gain;
            (next, e_next, r)
        };
        let dl = e_cand.loglik - e_cur.loglik;
        let th_old = layout.pack(&cur);
        let th_new = layout.pack(&cand);
        let dtheta = th_old
            .iter()
            .zip(&th_new)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        cur = cand;
        e_cur = e_cand;
        trace.push(e_cur.loglik);
        // A single small step can be a lull in slow progress, so two in a
        // row are required, and plain EM steps must not promise more than
        // the tolerance if continued.
        let small = if remaining >= config.loglik_tol {
            None
        } else if dl < config.loglik_tol {
            Some("log-likelihood change below tolerance")
        } else if dtheta < config.param_tol {
            Some("parameter change below tolerance")
        } else {
            None
        };
        match small {
            Some(why) if quiet => {
                converged = true;
                reason = why.into();
                break;
            }
            Some(_) => quiet = true,
            None => quiet = false,
        }
        next = alg.m_step(&cur, &e_cur)?;
    }
    Ok(FitResult {
        method: config.method,
        loglik: e_cur.loglik,
        loglik_trace: trace,
        converged,
        reason,
        iterations,
        n_restarts_used: 1,
        best_start: 0,
        seed: config.seed,
        warnings: Vec::new(),
        responsibilities: Some(e_cur.gamma),
        count_posterior: if keep_post { e_cur.post } else { None },
        model: cur,
    })
}

/// Log-likelihood still to come from plain EM steps whose gains shrink
/// geometrically at the ratio of the last two, `d1` then `d2`. Gains far
/// below `tol` count as exhausted.
fn projected_gain(d1: f64, d2: f64, tol: f64) -> f64 {
    if !(d2 > 1e-2 * tol) {
        return 0.0;
    }
    let c = d2 / d1;
    if c < 1.0 {
        d2 * c / (1.0 - c)
    } else {
        f64::INFINITY
    }
}

/// Number of secant pairs kept by the quasi-Newton extrapolation.
const SECANT_PAIRS: usize = 3;

/// Quasi-Newton extrapolation of the EM map from the last few pairs
/// `u = F(θ) - θ`, `v = F(F(θ)) - F(θ)` in the unconstrained parameters.
#[derive(Default)]
struct Secant {
    u: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl Secant {
    /// `next` is one EM step from `cur` and `e_next` its E-step. Returns a
    /// point whose log-likelihood is at least that of `next`, with the gain
    /// of a second plain EM step from `next`.
    fn step<A: EmAlgorithm>(
        &mut self,
        alg: &A,
        layout: &Layout,
        cur: &MixtureModel,
        next: MixtureModel,
        e_next: EOut,
    ) -> Result<(MixtureModel, EOut, f64)> {
        let next2 = alg.m_step(&next, &e_next)?;
        let e2 = alg.e_step(&next2)?;
        let gain = e2.loglik - e_next.loglik;
        let (m, e) = self.extrapolate(alg, layout, cur, next, e_next, next2, e2)?;
        Ok((m, e, gain))
    }

    #[allow(clippy::too_many_arguments)]
    fn extrapolate<A: EmAlgorithm>(
        &mut self,
        alg: &A,
        layout: &Layout,
        cur: &MixtureModel,
        next: MixtureModel,
        e_next: EOut,
        next2: MixtureModel,
        e2: EOut,
    ) -> Result<(MixtureModel, EOut)> {
        let (best, e_best) = if e2.loglik >= e_next.loglik {
            (next2.clone(), e2)
        } else {
            (next.clone(), e_next)
        };
        let t0 = layout.pack(cur);
        let t1 = layout.pack(&next);
        let t2 = layout.pack(&next2);
        let u: Vec<f64> = t1.iter().zip(&t0).map(|(a, b)| a - b).collect();
        let v: Vec<f64> = t2.iter().zip(&t1).map(|(a, b)| a - b).collect();
        if u.iter().all(|x| *x == 0.0) {
            return Ok((best, e_best));
        }
        if self.u.len() == SECANT_PAIRS {
            self.u.remove(0);
            self.v.remove(0);
        }
        self.u.push(u.clone());
        self.v.push(v);
        // θ' = F(θ) + V (UᵀU - UᵀV)⁻¹ Uᵀ u
        let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
        let a: Vec<Vec<f64>> = self
            .u
            .iter()
            .map(|ui| self.v.iter().zip(&self.u).map(|(vj, uj)| dot(ui, uj) - dot(ui, vj)).collect())
            .collect();
        let rhs: Vec<f64> = self.u.iter().map(|ui| dot(ui, &u)).collect();
        let Some(c) = solve(a, rhs) else {
            self.u.clear();
            self.v.clear();
            return Ok((best, e_best));
        };
        let mut t = t1;
        for (cj, vj) in c.iter().zip(&self.v) {
            for (ti, vi) in t.iter_mut().zip(vj) {
                *ti += cj * vi;
            }
        }
        if t.iter().all(|x| x.is_finite()) {
            if let Ok(m) = layout.unpack(&t, cur) {
                if let Ok(e) = alg.e_step(&m) {
                    if e.loglik.is_finite() && e.loglik >= e_best.loglik {
                        return Ok((m, e));
                    }
                }
            }
        }
        Ok((best, e_best))
    }
}

/// Gaussian elimination with partial pivoting; `None` when singular.
fn solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Option<Vec<f64>> {
    let n = b.len();
    let scale = a.iter().flatten().fold(0.0f64, |m, x| m.max(x.abs()));
    if !(scale > 0.0) {
        return None;
    }
    for col in 0..n {
        let piv = (col..n).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))?;
        if !(a[piv][col].abs() > 1e-14 * scale) {
            return None;
        }
        a.swap(col, piv);
        b.swap(col, piv);
        let (upper, lower) = a.split_at_mut(col + 1);
        let pivot = &upper[col];
        for (i, r) in lower.iter_mut().enumerate() {
            let f = r[col] / pivot[col];
            for (x, p) in r[col..].iter_mut().zip(&pivot[col..]) {
                *x -= f * p;
            }
            b[col + 1 + i] -= f * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let s: f64 = (row + 1..n).map(|k| a[row][k] * x[k]).sum();
        x[row] = (b[row] - s) / a[row][row];
    }
    Some(x)
}

/// Block updates shared by both EM variants.
pub(super) struct Blocks<'a> {
    pub data: &'a LosData,
    pub config: &'a FitConfig,
    pub groups: &'a RowGroups,
}

impl Blocks<'_> {
    /// Whether every parameter of `block` is free and covariate-free, so that
    /// its closed-form update applies.
    pub fn closed_form(&self, model: &MixtureModel, block: Block) -> bool {
        model
            .targets()
            .into_iter()
            .filter(|t| Block::of(*t) == block && *t != Target::N)
            .all(|t| !self.config.fixed.contains(&t) && model.map_for(t).is_none())
    }

    /// Numerically maximize `q` over the free parameters of `blocks`; keep
    /// the old parameters unless `q` improves.
    pub fn maximize<Q: Fn(&MixtureModel) -> f64>(
        &self,
        model: &MixtureModel,
        blocks: &[Block],
        q: Q,
    ) -> Result<MixtureModel> {
        let layout = Layout::new(model, &self.config.fixed, blocks);
        if layout.is_empty() {
            return Ok(model.clone());
        }
        let objective = |theta: &[f64]| match layout.unpack(theta, model) {
            Ok(m) => -q(&m),
            Err(_) => f64::INFINITY,
        };
        let opts = OptOptions {
            max_iters: 200,
            gtol: 1e-6,
            ..Default::default()
        };
        let r = minimize(self.config.optimizer, objective, &layout.pack(model), &opts);
        let candidate = layout.unpack(&r.x, model)?;
        Ok(self.better(model, candidate, q))
    }

    /// `candidate` if it does not lower `q`, else `old`.
    pub fn better<Q: Fn(&MixtureModel) -> f64>(&self, old: &MixtureModel, candidate: MixtureModel, q: Q) -> MixtureModel {
        let (qo, qn) = (q(old), q(&candidate));
        if qn >= qo || (qn.is_finite() && !qo.is_finite()) {
            candidate
        } else {
            old.clone()
        }
    }

    fn resolved_models(&self, model: &MixtureModel) -> Option<Vec<MixtureModel>> {
        Resolved::models(model, &self.data.design, self.groups).ok()
    }

    pub fn update_mixing(&self, model: &MixtureModel, e: &EOut) -> Result<MixtureModel> {
        if self.config.fixed.contains(&Target::Pi) {
            return Ok(model.clone());
        }
        let (s0, s1) = e.sums();
        if !(s1 > 0.0) {
            return Err(LosError::ComponentStarvation("long"));
        }
        if !(s0 > 0.0) {
            return Err(LosError::ComponentStarvation("short"));
        }
        if self.closed_form(model, Block::Mixing) {
            let mut m = model.clone();
            m.pi = s1 / (s0 + s1);
            return Ok(m);
        }
        let mut w = vec![[0.0f64; 2]; self.groups.len()];
        for (i, g) in e.gamma.iter().enumerate() {
            let k = self.groups.group_of(i);
            w[k][0] += g[0];
            w[k][1] += g[1];
        }
        let q = |m: &MixtureModel| match self.resolved_models(m) {
            Some(ms) => ms
                .iter()
                .zip(&w)
                .map(|(mg, wg)| wg[0] * (-mg.pi).ln_1p() + wg[1] * mg.pi.ln())
                .sum(),
            None => f64::NEG_INFINITY,
        };
        self.maximize(model, &[Block::Mixing], q)
    }

    pub fn update_short(&self, model: &MixtureModel, e: &EOut) -> Result<MixtureModel> {
        let (s0, _) = e.sums();
        if Layout::new(model, &self.config.fixed, &[Block::Short]).is_empty() {
            return Ok(model.clone());
        }
        if !(s0 > 0.0) {
            return Err(LosError::ComponentStarvation("short"));
        }
        let y = &self.data.y;
        let q = |m: &MixtureModel| match self.resolved_models(m) {
            Some(ms) => e
                .gamma
                .iter()
                .zip(y)
                .enumerate()
                .filter(|(_, (g, _))| g[0] > 0.0)
                .map(|(i, (g, &yi))| g[0] * ms[self.groups.group_of(i)].short.ln_pdf(yi))
                .sum(),
            None => f64::NEG_INFINITY,
        };
        if self.closed_form(model, Block::Short) {
            let mu = e.gamma.iter().zip(y).map(|(g, yi)| g[0] * yi.ln()).sum::<f64>() / s0;
            let var = e
                .gamma
                .iter()
                .zip(y)
                .map(|(g, yi)| g[0] * (yi.ln() - mu).powi(2))
                .sum::<f64>()
                / s0;
            if !(var > 0.0) {
                return Ok(model.clone());
            }
            let mut m = model.clone();
            m.short.mu = mu;
            m.short.sigma = var.sqrt();
            return Ok(self.better(model, m, q));
        }
        self.maximize(model, &[Block::Short], q)
    }

    /// Classical long-stay update: maximize `Σ_i γ_i ln f_L(y_i)` jointly over
    /// the lag and recovery parameters.
    fn update_long(&self, model: &MixtureModel, e: &EOut) -> Result<MixtureModel> {
        if Layout::new(model, &self.config.fixed, &[Block::Count, Block::Cont]).is_empty() {
            return Ok(model.clone());
        }
        let (_, s1) = e.sums();
        if !(s1 > 0.0) {
            return Err(LosError::ComponentStarvation("long"));
        }
        let y = &self.data.y;
        let q = |m: &MixtureModel| {
            let Ok(res) = Resolved::new(m, &self.data.design, self.groups) else {
                return f64::NEG_INFINITY;
            };
            let terms: Vec<f64> = e
                .gamma
                .par_iter()
                .zip(y.par_iter())
                .enumerate()
                .map(|(i, (g, &yi))| {
                    if g[1] > 0.0 {
                        let k = self.groups.group_of(i);
                        g[1] * res.models[k].long.ln_pdf_with(yi, &res.tables[k])
                    } else {
                        0.0
                    }
                })
                .collect();
            terms.iter().sum()
        };
        self.maximize(model, &[Block::Count, Block::Cont], q)
    }
}

/// Classical EM from `start`.
pub fn fit_em(data: &LosData, start: &MixtureModel, config: &FitConfig) -> Result<FitResult> {
    let groups = RowGroups::new(start, &data.design)?;
    let alg = Classical { data, config, groups };
    run_em(&alg, start, config, false)
}
