//! Exact power allocation for a fixed assignment of pairs to users.
//!
//! With the assignment fixed, the problem is concave in the powers and the
//! users decouple for a given tau: an unconstrained user fills to `w_k/(2 tau)`,
//! a user with an active min-rate constraint fills to the level that gives
//! exactly `r_min`, which does not depend on tau. The budget then fixes tau.

use crate::rates::weighted_rate_term;

use super::power::water_fill;

#[derive(Clone, Debug, PartialEq)]
pub(crate) struct Recovered {
    pub powers: Vec<f64>,
    pub tau: f64,
    pub delta: Vec<f64>,
    pub objective: f64,
    pub user_rates: Vec<f64>,
    /// Every constrained user reaches `r_min`.
    pub min_rate_met: bool,
}

/// Water level at which a single user with gains `alphas` reaches `rate`
/// bits/s/Hz, or `None` when the user has no pairs.
pub(crate) fn level_for_rate(w: f64, alphas: &[f64], rate: f64) -> Option<f64> {
    if alphas.is_empty() {
        return None;
    }
    if rate <= 0.0 {
        return Some(0.0);
    }
    let mut sorted: Vec<f64> = alphas.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    // rate(L) = (w/2) * sum_{i<j} log2(alpha_i L) on the j strongest pairs
    let mut log_sum = 0.0;
    for j in 1..=sorted.len() {
        log_sum += sorted[j - 1].log2();
        let level = ((2.0 * rate / w - log_sum) / j as f64).exp2();
        let above = level * sorted[j - 1] > 1.0;
        let below_next = j == sorted.len() || level * sorted[j] <= 1.0;
        if above && below_next {
            return Some(level);
        }
    }
    None
}

/// Water-fills `budget` over `pairs = (user, alpha)` with per-user min-rate
/// constraints for the users flagged in `constrained`. Falls back to the
/// unconstrained allocation, with `min_rate_met = false`, when the
/// constraints cannot all be met on this assignment.
pub(crate) fn recover(
    pairs: &[(usize, f64)],
    weights: &[f64],
    budget: f64,
    r_min: f64,
    constrained: &[bool],
) -> Recovered {
    let users = weights.len();
    let mut floor = vec![0.0; users];
    let mut met = true;
    if r_min > 0.0 {
        for k in (0..users).filter(|&k| constrained[k]) {
            let alphas: Vec<f64> = pairs.iter().filter(|p| p.0 == k).map(|p| p.1).collect();
            match level_for_rate(weights[k], &alphas, r_min) {
                Some(level) => floor[k] = level,
                None => met = false,
            }
        }
        let required: f64 = pairs.iter().map(|&(k, a)| water_fill(floor[k], a)).sum();
        if required > budget * (1.0 + 1e-12) {
            met = false;
        }
        if !met {
            floor.iter_mut().for_each(|f| *f = 0.0);
        }
    }

    // total power at lambda = 1/(2 tau)
    let used = |lambda: f64| -> f64 {
        pairs
            .iter()
            .map(|&(k, a)| water_fill((weights[k] * lambda).max(floor[k]), a))
            .sum()
    };
    let mut lo = 0.0;
    let mut hi = 1.0;
    while used(hi) < budget {
        hi *= 2.0;
        if !hi.is_finite() {
            break;
        }
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if used(mid) < budget {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    // the power curve is linear in lambda between breakpoints; solve it exactly
    let probe = 0.5 * (lo + hi);
    let (mut slope, mut offset) = (0.0, 0.0);
    for &(k, a) in pairs {
        let free = weights[k] * probe;
        if free >= floor[k] && free * a > 1.0 {
            slope += weights[k];
            offset -= 1.0 / a;
        } else {
            offset += water_fill(floor[k], a);
        }
    }
    let mut lambda = if slope > 0.0 { (budget - offset) / slope } else { hi };
    if !(lambda >= lo && lambda <= hi) || lambda <= 0.0 {
        lambda = if lo > 0.0 { lo } else { hi };
    }

    let levels: Vec<f64> = (0..users).map(|k| (weights[k] * lambda).max(floor[k])).collect();
    let powers: Vec<f64> = pairs.iter().map(|&(k, a)| water_fill(levels[k], a)).collect();
    let mut user_rates = vec![0.0; users];
    let mut objective = 0.0;
    for (&(k, a), &g) in pairs.iter().zip(&powers) {
        let r = weighted_rate_term(weights[k], a, g);
        user_rates[k] += r;
        objective += r;
    }
    let delta = (0..users)
        .map(|k| (levels[k] / (weights[k] * lambda) - 1.0).max(0.0))
        .collect();
    Recovered {
        powers,
        tau: 1.0 / (2.0 * lambda),
        delta,
        objective,
        user_rates,
        min_rate_met: met,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn level_for_rate_hits_target() {
        let w = 1.5;
        let alphas = [0.2, 3.0, 0.9, 0.05];
        for rate in [0.01, 0.5, 2.0, 7.0] {
            let level = level_for_rate(w, &alphas, rate).unwrap();
            let got: f64 = alphas
                .iter()
                .map(|&a| weighted_rate_term(w, a, water_fill(level, a)))
                .sum();
            assert!((got - rate).abs() < 1e-10, "rate {rate}: {got}");
        }
        assert_eq!(level_for_rate(1.0, &[], 1.0), None);
    }

    #[test]
    fn unconstrained_fill_meets_budget_and_kkt() {
        let pairs = [(0, 0.3), (1, 2.0), (0, 5.0), (1, 0.01), (1, 0.7)];
        let weights = [1.0, 2.0];
        let r = recover(&pairs, &weights, 3.0, 0.0, &[false, false]);
        let total: f64 = r.powers.iter().sum();
        assert!((total - 3.0).abs() < 1e-12);
        for (&(k, a), &g) in pairs.iter().zip(&r.powers) {
            if g > 0.0 {
                let resid = (1.0 + r.delta[k]) * 0.5 * weights[k] * a / (1.0 + a * g) - r.tau;
                assert!(resid.abs() < 1e-12);
            } else {
                // inactive pairs sit below the water level
                assert!(0.5 * weights[k] * a <= r.tau * (1.0 + 1e-12));
            }
        }
        assert!(r.min_rate_met);
    }

    #[test]
    fn min_rate_lifts_weak_user() {
        let pairs = [(0, 0.2), (1, 5.0), (1, 4.0), (0, 0.1)];
        let weights = [1.0, 2.0];
        let free = recover(&pairs, &weights, 4.0, 0.0, &[false, false]);
        let target = free.user_rates[0] + 0.3;
        let r = recover(&pairs, &weights, 4.0, target, &[true, true]);
        assert!(r.min_rate_met);
        assert!((r.user_rates[0] - target).abs() < 1e-9);
        assert!(r.user_rates[1] >= target);
        assert!(r.delta[0] > 0.0);
        assert!(r.objective <= free.objective + 1e-12);
        assert!((r.powers.iter().sum::<f64>() - 4.0).abs() < 1e-9);
    }

    #[test]
    fn infeasible_target_falls_back() {
        let pairs = [(0, 0.01), (1, 0.02)];
        let r = recover(&pairs, &[1.0, 1.0], 1.0, 5.0, &[true, true]);
        assert!(!r.min_rate_met);
        assert!((r.powers.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        let starved = recover(&[(0, 1.0)], &[1.0, 1.0], 1.0, 0.1, &[true, true]);
        assert!(!starved.min_rate_met);
    }
}
