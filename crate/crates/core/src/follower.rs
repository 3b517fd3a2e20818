//! Stage-II best response of a mobile user to a posted price.
//!
//! The payoff is strictly concave in the contribution `x`, so the best
//! response is the root of
//! `(delta - cost) * (F(tau - x) - 1) + p - cost = 0` clipped to `[0, tau]`.
//! Solving for `x` gives
//!
//! ```text
//! x*(p) = 0                                         p <  p_thr
//!       = tau - F^-1((delta - p) / (delta - cost))  p_thr <= p <= delta
//!       = tau                                       p >  delta
//! ```
//!
//! with threshold `p_thr = cost + (delta - cost) * (1 - F(tau))`.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::MuProfile;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Region {
    BelowThreshold,
    Interior,
    AboveDelta,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BestResponse {
    pub x_star: f64,
    pub region: Region,
    /// `dx*/dp`; zero outside the interior region.
    pub dx_dp: f64,
    /// `d2x*/dp2`; zero outside the interior region.
    pub d2x_dp2: f64,
}

/// Lowest price at which the user is willing to contribute anything.
pub fn price_threshold(mu: &MuProfile) -> f64 {
    mu.cost() + mu.margin() * (1.0 - mu.demand().cdf(mu.tau()))
}

pub fn best_response(mu: &MuProfile, p: f64) -> Result<BestResponse> {
    if !(p >= 0.0) {
        return Err(Error::domain(format!("price must be >= 0, got {p}")));
    }
    if p > mu.delta() {
        return Ok(BestResponse {
            x_star: mu.tau(),
            region: Region::AboveDelta,
            dx_dp: 0.0,
            d2x_dp2: 0.0,
        });
    }
    if p < price_threshold(mu) {
        return Ok(BestResponse {
            x_star: 0.0,
            region: Region::BelowThreshold,
            dx_dp: 0.0,
            d2x_dp2: 0.0,
        });
    }
    let margin = mu.margin();
    let ratio = ((mu.delta() - p) / margin).clamp(0.0, 1.0);
    let kept = mu.demand().quantile(ratio);
    let f = mu.demand().density(kept);
    let f_slope = mu.demand().density_slope(kept);
    Ok(BestResponse {
        x_star: (mu.tau() - kept).clamp(0.0, mu.tau()),
        region: Region::Interior,
        dx_dp: 1.0 / (f * margin),
        d2x_dp2: f_slope / (f.powi(3) * margin * margin),
    })
}

/// Marginal payoff `dU_n/dx` at contribution `x` and price `p`.
pub fn foc_residual(mu: &MuProfile, x: f64, p: f64) -> f64 {
    mu.margin() * (mu.demand().cdf(mu.tau() - x) - 1.0) + p - mu.cost()
}

/// Component-wise best responses to a price vector.
pub fn best_responses(mus: &[MuProfile], p: &[f64]) -> Result<Vec<BestResponse>> {
    Error::check_len(mus.len(), p.len())?;
    mus.iter().zip(p).map(|(mu, &pn)| best_response(mu, pn)).collect()
}
