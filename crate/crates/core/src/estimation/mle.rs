use super::layout::Layout;
use super::{FitConfig, FitResult};
use crate::error::{LosError, Result};
use crate::mixture::{LosData, MixtureModel};
use crate::optim::{minimize, OptOptions};

/// Gradient tolerance on the total log-likelihood, per coordinate scaled by
/// `max(1, |θ_j|)`.
const MLE_GTOL: f64 = 1e-4;

/// Direct maximization of the observed-data log-likelihood over the
/// unconstrained parameterization, starting from `start`.
pub fn fit_mle(data: &LosData, start: &MixtureModel, config: &FitConfig) -> Result<FitResult> {
    let layout = Layout::full(start, &config.fixed);
    let l0 = start.loglik(data)?;
    if !l0.is_finite() {
        return Err(LosError::Init(format!("log-likelihood at the start is {l0}")));
    }
    let objective = |theta: &[f64]| match layout.unpack(theta, start) {
        Ok(m) => m.loglik(data).map(|l| -l).unwrap_or(f64::INFINITY),
        Err(_) => f64::INFINITY,
    };
    let opts = OptOptions {
        max_iters: config.max_iters,
        gtol: MLE_GTOL,
        ..Default::default()
    };
    let r = minimize(config.optimizer, objective, &layout.pack(start), &opts);
    let model = layout.unpack(&r.x, start)?;
    let loglik = model.loglik(data)?;
    let mut trace = vec![l0];
    trace.extend(r.trace.iter().map(|f| -f));
    Ok(FitResult {
        method: config.method,
        model,
        loglik,
        loglik_trace: trace,
        converged: r.converged,
        reason: r.reason,
        iterations: r.iters,
        n_restarts_used: 1,
        best_start: 0,
        seed: config.seed,
        warnings: Vec::new(),
        responsibilities: None,
        count_posterior: None,
    })
}
