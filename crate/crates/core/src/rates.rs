//! Two-hop rate kernels: equivalent gain of a decode-and-forward pair, mode
//! selection, the weighted rate term and the source/relay power split.

use serde::{Deserialize, Serialize};

use crate::dual_solver::{Allocation, CellProblem};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum LinkMode {
    Relay,
    Direct,
}

/// The relay branch needs `a_fm > a_fk` for a nonnegative relay power share.
pub fn relay_admissible(a_fm: f64, a_mk: f64, a_fk: f64) -> bool {
    a_fm > a_fk && a_fm + a_mk - a_fk > 0.0
}

/// Relay mode: `a_fm*a_mk / (a_fm + a_mk - a_fk)`; direct mode: `a_fk`.
pub fn equivalent_gain(a_fm: f64, a_mk: f64, a_fk: f64, mode: LinkMode) -> Result<f64> {
    match mode {
        LinkMode::Direct => Ok(a_fk),
        LinkMode::Relay if relay_admissible(a_fm, a_mk, a_fk) => {
            Ok(a_fm * a_mk / (a_fm + a_mk - a_fk))
        }
        LinkMode::Relay => Err(Error::RelayInadmissible { a_fm, a_mk, a_fk }),
    }
}

/// Picks the mode with the larger equivalent gain; ties go to direct mode.
pub fn select_mode(a_fm: f64, a_mk: f64, a_fk: f64) -> (LinkMode, f64) {
    match equivalent_gain(a_fm, a_mk, a_fk, LinkMode::Relay) {
        Ok(relay) if relay > a_fk => (LinkMode::Relay, relay),
        _ => (LinkMode::Direct, a_fk),
    }
}

/// `(w/2) * log2(1 + alpha*p)`, in bits/s/Hz.
pub fn weighted_rate_term(w: f64, alpha_eq: f64, p: f64) -> f64 {
    0.5 * w * (alpha_eq * p).ln_1p() / std::f64::consts::LN_2
}

/// Splits aggregate pair power into (BS power, relay power).
pub fn power_split(p_agg: f64, a_fm: f64, a_mk: f64, a_fk: f64, mode: LinkMode) -> Result<(f64, f64)> {
    match mode {
        LinkMode::Direct => Ok((p_agg, 0.0)),
        LinkMode::Relay if relay_admissible(a_fm, a_mk, a_fk) => {
            let den = a_fm + a_mk - a_fk;
            Ok((p_agg * a_mk / den, p_agg * (a_fm - a_fk) / den))
        }
        LinkMode::Relay => Err(Error::RelayInadmissible { a_fm, a_mk, a_fk }),
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RateSummary {
    pub total: f64,
    /// `[cell][user]`, indexed like the problems' users.
    pub user_rates: Vec<Vec<f64>>,
}

/// Sum-weighted rate of an allocation, recomputing every equivalent gain from
/// the problems' gain tables.
pub fn sum_weighted_rate(allocation: &Allocation, problems: &[CellProblem]) -> RateSummary {
    let mut total = 0.0;
    let mut user_rates = Vec::with_capacity(problems.len());
    for (cell, problem) in allocation.cells.iter().zip(problems) {
        let mut rates = vec![0.0; problem.users()];
        for pair in &cell.pairs {
            let alpha = problem.pair_gain(pair.first, pair.second, pair.user, pair.relay);
            let r = weighted_rate_term(problem.weights[pair.user], alpha, pair.power);
            rates[pair.user] += r;
            total += r;
        }
        user_rates.push(rates);
    }
    RateSummary { total, user_rates }
}
