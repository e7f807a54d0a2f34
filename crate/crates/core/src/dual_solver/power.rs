use std::f64::consts::LN_2;

use crate::error::{Error, Result};

/// Water-filling power `[(1+delta)*w/(2*tau) - 1/alpha]^+`.
pub fn optimal_power(w: f64, delta: f64, tau: f64, alpha_eq: f64) -> Result<f64> {
    if !(tau > 0.0) {
        return Err(Error::UnboundedWaterLevel(tau));
    }
    Ok(water_fill(level(w, delta, tau), alpha_eq))
}

/// `((1+delta)*w/2)*log2(1 + alpha*g) - tau*g` at the optimal power `g`.
pub fn z_metric(w: f64, delta: f64, tau: f64, alpha_eq: f64) -> Result<f64> {
    if !(tau > 0.0) {
        return Err(Error::UnboundedWaterLevel(tau));
    }
    let c = 0.5 * (1.0 + delta) * w;
    Ok(z_at_level(c, c / tau, tau, alpha_eq))
}

#[inline]
pub(crate) fn level(w: f64, delta: f64, tau: f64) -> f64 {
    (1.0 + delta) * w / (2.0 * tau)
}

#[inline]
pub(crate) fn water_fill(level: f64, alpha: f64) -> f64 {
    (level - 1.0 / alpha).max(0.0)
}

/// Z for a pair whose user has rate coefficient `c = (1+delta)*w/2` and water
/// level `c/tau`. Uses `1 + alpha*g = alpha*level` on the active branch.
#[inline]
pub(crate) fn z_at_level(c: f64, level: f64, tau: f64, alpha: f64) -> f64 {
    let al = alpha * level;
    if al <= 1.0 {
        return 0.0;
    }
    let g = level - 1.0 / alpha;
    (c * al.ln() / LN_2 - tau * g).max(0.0)
}
