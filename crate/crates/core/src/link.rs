//! Link functions mapping a per-period hazard to the linear-predictor scale.
//!
//! `Link::inverse` is the inverse link `g`, turning `eta_k + x'beta` into a
//! hazard probability. Hazards are clamped to `[HAZARD_EPS, 1 - HAZARD_EPS]`
//! so that log terms stay finite.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Lower and upper clamp applied to every hazard.
pub const HAZARD_EPS: f64 = 1e-12;

/// Linear predictors under the log link must stay below `-LOG_LINK_MARGIN`.
pub const LOG_LINK_MARGIN: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Link {
    /// Discrete logistic model.
    Logit,
    /// Discrete relative risk model.
    Log,
    /// Grouped relative risk model (complementary log-log).
    Cloglog,
}

/// Inverse-link quantities at one linear predictor, used by the likelihood.
///
/// With `g` the hazard, the derivative of `r*log(g) + (1-r)*log(1-g)` with
/// respect to the linear predictor is `score_factor * (r - g)` and
/// the second derivative is `score_factor_deriv * (r - g) - score_factor^2 * g * (1 - g)`.
#[derive(Debug, Clone, Copy)]
pub(crate) struct LinkEval {
    /// Hazard `g(x)`, unclamped.
    pub hazard: f64,
    /// `1 - g(x)`, computed without cancellation.
    pub complement: f64,
    /// `g'(x) / (g (1 - g))`.
    pub score_factor: f64,
    /// Derivative of `score_factor` with respect to `x`.
    pub score_factor_deriv: f64,
}

impl Link {
    pub const ALL: [Link; 3] = [Link::Logit, Link::Log, Link::Cloglog];

    pub fn name(self) -> &'static str {
        match self {
            Link::Logit => "logit",
            Link::Log => "log",
            Link::Cloglog => "cloglog",
        }
    }

    pub fn check_domain(self, x: f64) -> Result<()> {
        let ok = match self {
            Link::Log => x < 0.0,
            _ => x.is_finite(),
        };
        if ok && !x.is_nan() {
            Ok(())
        } else {
            Err(Error::Domain {
                link: self.name(),
                value: x,
            })
        }
    }

    /// Hazard `g(x)` clamped to `[HAZARD_EPS, 1 - HAZARD_EPS]`.
    pub fn inverse(self, x: f64) -> Result<f64> {
        self.check_domain(x)?;
        Ok(clamp_hazard(self.raw_inverse(x)))
    }

    /// Exact first derivative of the (unclamped) inverse link.
    pub fn inverse_derivative(self, x: f64) -> Result<f64> {
        self.check_domain(x)?;
        Ok(match self {
            Link::Logit => {
                let g = logistic(x);
                g * logistic(-x)
            }
            Link::Log => x.exp(),
            Link::Cloglog => {
                let t = x.exp();
                t * (-t).exp()
            }
        })
    }

    /// The link `h` itself, mapping a probability in (0, 1) to the linear scale.
    pub fn link(self, p: f64) -> Result<f64> {
        if !(p > 0.0 && p < 1.0) {
            return Err(Error::InvalidData(format!("{p} is not a probability in (0, 1)")));
        }
        Ok(match self {
            Link::Logit => (p / (1.0 - p)).ln(),
            Link::Log => p.ln(),
            Link::Cloglog => (-(-p).ln_1p()).ln(),
        })
    }

    fn raw_inverse(self, x: f64) -> f64 {
        match self {
            Link::Logit => logistic(x),
            Link::Log => x.exp(),
            Link::Cloglog => -(-x.exp()).exp_m1(),
        }
    }

    /// Caller guarantees `x` is inside the domain.
    pub(crate) fn eval(self, x: f64) -> LinkEval {
        match self {
            Link::Logit => LinkEval {
                hazard: logistic(x),
                complement: logistic(-x),
                score_factor: 1.0,
                score_factor_deriv: 0.0,
            },
            Link::Log => {
                let g = x.exp();
                let q = -x.exp_m1();
                LinkEval {
                    hazard: g,
                    complement: q,
                    score_factor: 1.0 / q,
                    score_factor_deriv: g / (q * q),
                }
            }
            Link::Cloglog => {
                let t = x.exp();
                let g = -(-t).exp_m1();
                let q = (-t).exp();
                // s = t / g expands as 1 + t/2 + t^2/12 for small t
                let (s, ds) = if t < 1e-5 {
                    (1.0 + 0.5 * t + t * t / 12.0, 0.5 * t + t * t / 6.0)
                } else {
                    (t / g, t * (g - t * q) / (g * g))
                };
                LinkEval {
                    hazard: g,
                    complement: q,
                    score_factor: s,
                    score_factor_deriv: ds,
                }
            }
        }
    }
}

impl fmt::Display for Link {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Link {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "logit" => Ok(Link::Logit),
            "log" => Ok(Link::Log),
            "cloglog" => Ok(Link::Cloglog),
            other => Err(Error::InvalidConfig(format!(
                "unknown link '{other}' (expected logit, log or cloglog)"
            ))),
        }
    }
}

pub(crate) fn clamp_hazard(g: f64) -> f64 {
    g.clamp(HAZARD_EPS, 1.0 - HAZARD_EPS)
}

pub fn logistic(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}
