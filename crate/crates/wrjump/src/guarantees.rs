//! Quantitative well-posedness constants as a reference calculator.
//!
//! The correlation-function construction behind the microscopic dynamics
//! works on an ascending scale of Banach spaces indexed by `theta`; moving
//! from index `theta` to `theta' > theta` buys a time horizon
//!
//! ```text
//! T(theta', theta) = (theta' - theta) / (4 alpha) * exp(-c e^{theta'}),
//! ```
//!
//! where `alpha = max_i alpha_i` and `c = max_i <phi_i>`. For fixed `theta`
//! the best achievable horizon is
//!
//! ```text
//! tau(theta) = delta(theta) / (4 alpha) * exp(-1 / delta(theta)),
//! ```
//!
//! attained at `theta' = theta + delta(theta)`, with `delta(theta)` the
//! unique positive solution of `delta e^delta = exp(-theta - ln c)`. The
//! one-step operator bound underlying these formulas is also exposed.
//! Without interaction (`c = 0`) the scheme imposes no horizon at all;
//! `delta`/`tau` are then undefined and reported as such.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::kinetic::ModelParams;

/// The two model constants entering every horizon formula.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct BanachScaleParams {
    /// `max_i alpha_i` (total jump rates)
    pub alpha: f64,
    /// `max_i <phi_i>` (potential masses)
    pub c: f64,
}

impl BanachScaleParams {
    pub fn new(alpha: f64, c: f64) -> Result<Self> {
        if !(alpha > 0.0) || !alpha.is_finite() {
            return Err(Error::InvalidConfig(format!(
                "alpha must be positive, got {alpha}"
            )));
        }
        if !(c >= 0.0) || !c.is_finite() {
            return Err(Error::InvalidConfig(format!(
                "c must be nonnegative, got {c}"
            )));
        }
        Ok(Self { alpha, c })
    }

    pub fn from_model(model: &ModelParams) -> Result<Self> {
        Self::new(model.alpha_max(), model.c_max())
    }
}

/// Horizon bought by the scale step `theta -> theta'`.
pub fn horizon_t(theta_prime: f64, theta: f64, params: &BanachScaleParams) -> Result<f64> {
    if !(theta < theta_prime) {
        return Err(Error::ThetaOrdering {
            lo: theta,
            hi: theta_prime,
        });
    }
    Ok((theta_prime - theta) / (4.0 * params.alpha) * (-params.c * theta_prime.exp()).exp())
}

/// The optimal scale increment at `theta`: the unique positive root of
/// `delta e^delta = exp(-theta - ln c)`, strictly decreasing in `theta`.
/// Solved by bisection on the monotone log form plus a Newton polish;
/// residual below 1e-13.
pub fn delta_theta(theta: f64, params: &BanachScaleParams) -> Result<f64> {
    if params.c == 0.0 {
        return Err(Error::UnboundedHorizon);
    }
    // delta e^delta = w  <=>  ln delta + delta = ln w
    let ln_w = -theta - params.c.ln();
    let g = |d: f64| d.ln() + d - ln_w;
    let mut lo = 1e-300_f64;
    let mut hi = 1.0_f64.max(ln_w);
    while g(hi) < 0.0 {
        hi *= 2.0;
    }
    for _ in 0..400 {
        let mid = 0.5 * (lo + hi);
        if g(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-16 * hi {
            break;
        }
    }
    let mut d = 0.5 * (lo + hi);
    for _ in 0..4 {
        // Newton on f(d) = d e^d - w in log form
        let step = (d.ln() + d - ln_w) / (1.0 / d + 1.0);
        d -= step;
        if step.abs() < 1e-16 * d {
            break;
        }
    }
    Ok(d)
}

/// Maximal horizon from scale index `theta`:
/// `tau(theta) = sup_{theta' > theta} T(theta', theta)`, in closed form
/// `delta(theta)/(4 alpha) exp(-1/delta(theta))`.
pub fn tau_theta(theta: f64, params: &BanachScaleParams) -> Result<f64> {
    let d = delta_theta(theta, params)?;
    Ok(d / (4.0 * params.alpha) * (-1.0 / d).exp())
}

/// One-step bound on the hierarchy operator between scale indices
/// `theta'' < theta`:
/// `(4 / (e (theta - theta''))) max_i alpha_i exp(<phi_i> e^{theta''})`.
pub fn operator_norm_bound(theta: f64, theta_dd: f64, model: &ModelParams) -> Result<f64> {
    if !(theta_dd < theta) {
        return Err(Error::ThetaOrdering {
            lo: theta_dd,
            hi: theta,
        });
    }
    let e_tdd = theta_dd.exp();
    let m = (0..2)
        .map(|i| model.alpha(i) * (model.phi_mass(i) * e_tdd).exp())
        .fold(f64::NEG_INFINITY, f64::max);
    Ok(4.0 / (std::f64::consts::E * (theta - theta_dd)) * m)
}

/// Everything the `bounds` pipeline reports for one `theta`.
#[derive(Debug, Clone, Serialize)]
pub struct BoundsReport {
    pub alpha: f64,
    pub c: f64,
    pub theta: f64,
    pub theta_prime: f64,
    pub theta_dd: Option<f64>,
    /// `None` when `c = 0` (unbounded horizon)
    pub delta: Option<f64>,
    pub tau: Option<f64>,
    pub horizon: f64,
    pub norm_bound: Option<f64>,
    pub unbounded_horizon: bool,
}

/// Evaluate all constants at `theta`. `theta_prime` defaults to the optimal
/// `theta + delta(theta)`; the norm bound is reported when `theta_dd` is
/// given.
pub fn bounds_report(
    theta: f64,
    theta_prime: Option<f64>,
    theta_dd: Option<f64>,
    params: &BanachScaleParams,
    model: Option<&ModelParams>,
) -> Result<BoundsReport> {
    let (delta, tau) = if params.c == 0.0 {
        (None, None)
    } else {
        (
            Some(delta_theta(theta, params)?),
            Some(tau_theta(theta, params)?),
        )
    };
    let tp = match theta_prime {
        Some(v) => v,
        None => theta + delta.unwrap_or(1.0),
    };
    let horizon = horizon_t(tp, theta, params)?;
    let norm_bound = match (theta_dd, model) {
        (Some(tdd), Some(m)) => Some(operator_norm_bound(theta, tdd, m)?),
        _ => None,
    };
    Ok(BoundsReport {
        alpha: params.alpha,
        c: params.c,
        theta,
        theta_prime: tp,
        theta_dd,
        delta,
        tau,
        horizon,
        norm_bound,
        unbounded_horizon: params.c == 0.0,
    })
}
