//! Parameter estimation: direct maximum likelihood, classical EM and the
//! two-latent-variable EM (class and discharge lag).
//!
//! All three share initialization ([`initialize`]), the unconstrained
//! parameterization ([`Layout`]) and the stopping rules in [`FitConfig`].

mod em;
mod em2d;
mod init;
mod layout;
mod mle;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::covariates::Target;
use crate::error::{LosError, Result};
use crate::mixture::{LosData, MixtureModel};
use crate::optim::Optimizer;

pub use em::{em_e_step, em_m_step, fit_em, Responsibilities};
pub use em2d::{em2d_e_step, fit_em2d, CountPosterior};
pub use init::{initialize, quantile_split, Initialization};
pub use layout::{Block, Layout};
pub use mle::fit_mle;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Method {
    #[serde(rename = "MLE", alias = "mle")]
    Mle,
    #[serde(rename = "EM", alias = "em")]
    Em,
    #[serde(rename = "EM2D", alias = "em2d")]
    Em2d,
}

impl std::str::FromStr for Method {
    type Err = LosError;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "mle" => Ok(Method::Mle),
            "em" => Ok(Method::Em),
            "em2d" | "2d-em" => Ok(Method::Em2d),
            _ => Err(LosError::Config(format!("unknown method `{s}` (MLE, EM or EM2D)"))),
        }
    }
}

fn default_threshold() -> f64 {
    1.0
}

/// How starting values are chosen.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind")]
pub enum InitStrategy {
    /// Stays shorter than the threshold seed the short component.
    QuantileSplit {
        #[serde(default = "default_threshold")]
        threshold_days: f64,
    },
    /// Start from the template model as given.
    UserSupplied,
    /// The quantile split plus `k - 1` jittered copies; the best fit wins.
    MultiStart {
        k: usize,
        #[serde(default = "default_threshold")]
        threshold_days: f64,
    },
}

impl Default for InitStrategy {
    fn default() -> Self {
        InitStrategy::QuantileSplit { threshold_days: 1.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FitConfig {
    pub method: Method,
    pub max_iters: usize,
    /// Absolute change in total log-likelihood that ends an EM run.
    pub loglik_tol: f64,
    /// Largest change of any unconstrained coordinate that ends an EM run.
    pub param_tol: f64,
    pub optimizer: Optimizer,
    pub init: InitStrategy,
    pub seed: u64,
    /// Parameters held at their template values.
    pub fixed: Vec<Target>,
    /// Quasi-Newton extrapolation between EM steps (each cycle is still monotone).
    pub accelerate: bool,
}

impl Default for FitConfig {
    fn default() -> Self {
        FitConfig {
            method: Method::Mle,
            max_iters: 500,
            loglik_tol: 1e-6,
            param_tol: 1e-6,
            optimizer: Optimizer::QuasiNewtonFD,
            init: InitStrategy::default(),
            seed: 0,
            fixed: Vec::new(),
            accelerate: true,
        }
    }
}

impl FitConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_iters < 1 {
            return Err(LosError::Config("max_iters must be at least 1".into()));
        }
        if !(self.loglik_tol > 0.0 && self.param_tol > 0.0) {
            return Err(LosError::Config("tolerances must be positive".into()));
        }
        match self.init {
            InitStrategy::MultiStart { k: 0, .. } => {
                Err(LosError::Config("MultiStart needs k >= 1".into()))
            }
            InitStrategy::QuantileSplit { threshold_days } | InitStrategy::MultiStart { threshold_days, .. }
                if !(threshold_days > 0.0) =>
            {
                Err(LosError::Config("threshold_days must be positive".into()))
            }
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub method: Method,
    pub model: MixtureModel,
    pub loglik: f64,
    pub loglik_trace: Vec<f64>,
    pub converged: bool,
    pub reason: String,
    pub iterations: usize,
    pub n_restarts_used: usize,
    /// Index of the start that produced the reported fit.
    pub best_start: usize,
    pub seed: u64,
    #[serde(default)]
    pub warnings: Vec<String>,
    /// `[P(short | y_i), P(long | y_i)]` per observation (EM methods only).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub responsibilities: Option<Responsibilities>,
    /// `P(K = k | y_i, long)` per observation (two-latent EM only).
    #[serde(skip)]
    pub count_posterior: Option<CountPosterior>,
}

/// Fit `template`'s structure to `data` with the configured method and
/// starting strategy. With several starts the highest log-likelihood wins
/// (ties go to the earliest start).
pub fn fit(data: &LosData, template: &MixtureModel, config: &FitConfig) -> Result<FitResult> {
    config.validate()?;
    template.validate()?;
    if data.is_empty() {
        return Err(LosError::Init("no observations to fit".into()));
    }
    data.check_positive()?;
    let Initialization { starts, warnings } = initialize(data, template, config)?;
    let mut best: Option<FitResult> = None;
    let mut errors = Vec::new();
    for (i, start) in starts.iter().enumerate() {
        let run = match config.method {
            Method::Mle => fit_mle(data, start, config),
            Method::Em => fit_em(data, start, config),
            Method::Em2d => fit_em2d(data, start, config),
        };
        match run {
            Ok(mut r) => {
                r.best_start = i;
                if best.as_ref().is_none_or(|b| r.loglik > b.loglik) {
                    best = Some(r);
                }
            }
            Err(e) => errors.push(format!("start {i}: {e}")),
        }
    }
    let mut result = best.ok_or_else(|| LosError::Init(errors.join("; ")))?;
    result.n_restarts_used = starts.len();
    result.seed = config.seed;
    result.warnings.extend(warnings);
    result.warnings.extend(errors);
    Ok(result)
}

/// Fresh generator for everything random in a fit.
pub(crate) fn fit_rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
