use serde::{Deserialize, Serialize};

use crate::error::{LosError, Result};
use crate::math::{logistic, logit};

/// A model parameter that may be driven by covariates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Target {
    /// Probability of a long stay.
    #[serde(rename = "pi")]
    Pi,
    #[serde(rename = "mu_S")]
    MuS,
    #[serde(rename = "sigma_S")]
    SigmaS,
    #[serde(rename = "p")]
    P,
    #[serde(rename = "r")]
    R,
    #[serde(rename = "lambda")]
    Lambda,
    #[serde(rename = "nu")]
    Nu,
    #[serde(rename = "n")]
    N,
    /// Location of the recovery period.
    #[serde(rename = "m")]
    M,
    /// Scale of the recovery period.
    #[serde(rename = "sigma")]
    Sigma,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Domain {
    UnitInterval,
    Positive,
    Real,
    Integer,
}

impl Target {
    pub fn domain(self) -> Domain {
        match self {
            Target::Pi | Target::P => Domain::UnitInterval,
            Target::SigmaS | Target::R | Target::Lambda | Target::Nu | Target::Sigma => Domain::Positive,
            Target::MuS | Target::M => Domain::Real,
            Target::N => Domain::Integer,
        }
    }

    pub fn default_link(self) -> Link {
        match self.domain() {
            Domain::UnitInterval => Link::LogitInverse,
            Domain::Positive => Link::Exp,
            Domain::Real | Domain::Integer => Link::Identity,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Target::Pi => "pi",
            Target::MuS => "mu_S",
            Target::SigmaS => "sigma_S",
            Target::P => "p",
            Target::R => "r",
            Target::Lambda => "lambda",
            Target::Nu => "nu",
            Target::N => "n",
            Target::M => "m",
            Target::Sigma => "sigma",
        }
    }

    pub fn contains(self, v: f64) -> bool {
        match self.domain() {
            Domain::UnitInterval => v > 0.0 && v < 1.0,
            Domain::Positive => v > 0.0 && v.is_finite(),
            Domain::Real => v.is_finite(),
            Domain::Integer => v >= 0.0 && v.fract() == 0.0,
        }
    }
}

/// Transform `h` taking a linear predictor to a parameter value.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Link {
    Identity,
    Exp,
    LogitInverse,
    Softplus,
}

// Linear predictors are clamped so that outputs stay finite and strictly
// inside the open target domain.
const EXP_CLAMP: f64 = 700.0;
const LOGIT_CLAMP: f64 = 36.0;

impl Link {
    pub fn apply(self, eta: f64) -> f64 {
        match self {
            Link::Identity => eta,
            Link::Exp => eta.clamp(-EXP_CLAMP, EXP_CLAMP).exp(),
            Link::LogitInverse => logistic(eta.clamp(-LOGIT_CLAMP, LOGIT_CLAMP)),
            Link::Softplus => {
                let e = eta.clamp(-EXP_CLAMP, f64::MAX);
                if e > 30.0 {
                    e + (-e).exp().ln_1p()
                } else {
                    e.exp().ln_1p()
                }
            }
        }
    }

    /// Linear predictor producing `value`.
    pub fn inverse(self, value: f64) -> f64 {
        match self {
            Link::Identity => value,
            Link::Exp => value.ln(),
            Link::LogitInverse => logit(value),
            Link::Softplus => {
                if value > 30.0 {
                    value + (-(-value).exp()).ln_1p()
                } else {
                    value.exp_m1().ln()
                }
            }
        }
    }

    /// Whether the link's range fits inside the target's domain.
    pub fn compatible_with(self, target: Target) -> bool {
        match target.domain() {
            Domain::UnitInterval => self == Link::LogitInverse,
            Domain::Positive => matches!(self, Link::Exp | Link::Softplus),
            Domain::Real => true,
            Domain::Integer => false,
        }
    }

    pub fn check(self, target: Target) -> Result<()> {
        if self.compatible_with(target) {
            Ok(())
        } else {
            Err(LosError::domain(format!(
                "link {self:?} cannot drive parameter `{}`",
                target.name()
            )))
        }
    }
}
