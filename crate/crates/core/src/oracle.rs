//! Brute-force reference solutions for desk-size instances.
//!
//! Deliberately shares nothing with the dual solver beyond the data types:
//! equivalent gains are recomputed here, the budget is met by bisection on the
//! water level, and every matching is enumerated.

use crate::channel::{CellGains, ChannelGains};
use crate::dual_solver::{build_problems, Allocation, CellAllocation, CellProblem, PairAssignment};
use crate::error::{Error, Result};
use crate::model::ScenarioConfig;

pub const MAX_EXHAUSTIVE_UNITS: usize = 5;
pub const MAX_GRID_UNITS: usize = 3;
pub const MAX_GRID_USERS: usize = 2;
pub const MIN_GRID_RESOLUTION: usize = 16;

/// Relay equivalent gain written as `1/alpha = 1/a_fm + 1/a_mk - a_fk/(a_fm a_mk)`.
fn relay_gain(a_fm: f64, a_mk: f64, a_fk: f64) -> Option<f64> {
    if a_fm <= a_fk {
        return None;
    }
    let inv = 1.0 / a_fm + 1.0 / a_mk - a_fk / (a_fm * a_mk);
    (inv > 0.0).then(|| 1.0 / inv)
}

#[derive(Clone, Copy, Debug)]
struct Tuple {
    user: usize,
    relay: Option<usize>,
    alpha: f64,
}

/// For each user, the strongest tuple on `(u, v)`; a weaker tuple for the
/// same user can never do better.
fn user_options(g: &CellGains, u: usize, v: usize) -> Vec<Tuple> {
    (0..g.users)
        .map(|k| {
            let mut best = Tuple {
                user: k,
                relay: None,
                alpha: g.fk(u, k),
            };
            for m in 0..g.relays {
                if let Some(a) = relay_gain(g.fm(u, m), g.mk(v, m, k), g.fk(u, k)) {
                    if a > best.alpha {
                        best = Tuple {
                            user: k,
                            relay: Some(m),
                            alpha: a,
                        };
                    }
                }
            }
            best
        })
        .collect()
}

fn rate(w: f64, alpha: f64, p: f64) -> f64 {
    0.5 * w * (1.0 + alpha * p).log2()
}

/// Weighted water-filling of `budget` over channels `(w, alpha)` by bisection
/// on the level `mu`: `p_i = [w_i mu - 1/alpha_i]^+`.
fn water_fill(channels: &[(f64, f64)], budget: f64) -> Vec<f64> {
    let used = |mu: f64| -> f64 { channels.iter().map(|(w, a)| (w * mu - 1.0 / a).max(0.0)).sum() };
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    while used(hi) < budget {
        hi *= 2.0;
    }
    for _ in 0..2000 {
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
    let mut p: Vec<f64> = channels.iter().map(|(w, a)| (w * hi - 1.0 / a).max(0.0)).collect();
    // trim the bisection overshoot off the active channels
    let excess = p.iter().sum::<f64>() - budget;
    let active = p.iter().filter(|x| **x > 0.0).count();
    if excess > 0.0 && active > 0 {
        for x in p.iter_mut().filter(|x| **x > 0.0) {
            *x = (*x - excess / active as f64).max(0.0);
        }
    }
    p
}

fn permutations(n: usize) -> Vec<Vec<usize>> {
    if n == 0 {
        return vec![Vec::new()];
    }
    let mut out = Vec::new();
    for rest in permutations(n - 1) {
        for pos in 0..=rest.len() {
            let mut p = rest.clone();
            p.insert(pos, n - 1);
            out.push(p);
        }
    }
    out
}

/// Every way to pick one option per pair (mixed radix counter).
fn for_each_choice(options: &[Vec<Tuple>], mut f: impl FnMut(&[Tuple])) {
    let mut idx = vec![0usize; options.len()];
    let mut picked: Vec<Tuple> = options.iter().map(|o| o[0]).collect();
    loop {
        f(&picked);
        let mut i = 0;
        loop {
            if i == options.len() {
                return;
            }
            idx[i] += 1;
            if idx[i] < options[i].len() {
                picked[i] = options[i][idx[i]];
                break;
            }
            idx[i] = 0;
            picked[i] = options[i][0];
            i += 1;
        }
    }
}

fn allocation_of(g: &CellGains, perm: &[usize], picked: &[Tuple], powers: &[f64]) -> CellAllocation {
    CellAllocation {
        bands: g.bands.clone(),
        n: g.n,
        pairs: (0..perm.len())
            .map(|u| PairAssignment {
                first: u,
                second: perm[u],
                user: picked[u].user,
                relay: picked[u].relay,
                power: powers[u],
            })
            .collect(),
    }
}

fn check_units(p: &CellProblem, limit: usize) -> Result<()> {
    if p.units() > limit {
        return Err(Error::InstanceTooLarge {
            what: "units per hop",
            value: p.units(),
            limit,
        });
    }
    Ok(())
}

/// Global optimum of one cell without min-rate constraints.
pub fn exhaustive_cell(problem: &CellProblem) -> Result<(CellAllocation, f64)> {
    check_units(problem, MAX_EXHAUSTIVE_UNITS)?;
    let g = &problem.gains;
    let u = g.units();
    let mut best: Option<(CellAllocation, f64)> = None;
    for perm in permutations(u) {
        let options: Vec<Vec<Tuple>> = (0..u).map(|i| user_options(g, i, perm[i])).collect();
        for_each_choice(&options, |picked| {
            let channels: Vec<(f64, f64)> = picked.iter().map(|o| (problem.weights[o.user], o.alpha)).collect();
            let powers = water_fill(&channels, problem.power_budget);
            let obj: f64 = channels.iter().zip(&powers).map(|((w, a), p)| rate(*w, *a, *p)).sum();
            if best.as_ref().is_none_or(|b| obj > b.1) {
                best = Some((allocation_of(g, &perm, picked, &powers), obj));
            }
        });
    }
    Ok(best.expect("at least one matching"))
}

/// Global optimum of every cell with `R_min = 0`. Instances with a positive
/// min rate go through [`grid_solve_min_rate`].
pub fn exhaustive_solve(scenario: &ScenarioConfig, gains: &ChannelGains) -> Result<(Allocation, f64)> {
    if scenario.r_min > 0.0 {
        return Err(Error::InvalidScenario(vec![
            "the exact oracle needs r_min = 0; use the grid oracle".into(),
        ]));
    }
    let problems = build_problems(scenario, gains)?;
    for p in &problems {
        check_units(p, MAX_EXHAUSTIVE_UNITS)?;
    }
    let mut cells = Vec::with_capacity(problems.len());
    let mut total = 0.0;
    for p in &problems {
        let (c, obj) = exhaustive_cell(p)?;
        cells.push(c);
        total += obj;
    }
    Ok((Allocation { cells }, total))
}

/// Compositions of `total` into `parts` nonnegative integers.
fn compositions(total: usize, parts: usize, f: &mut impl FnMut(&[usize])) {
    fn rec(left: usize, slot: usize, cur: &mut Vec<usize>, f: &mut impl FnMut(&[usize])) {
        if slot + 1 == cur.len() {
            cur[slot] = left;
            f(cur);
            return;
        }
        for j in 0..=left {
            cur[slot] = j;
            rec(left - j, slot + 1, cur, f);
        }
    }
    if parts == 0 {
        return;
    }
    let mut cur = vec![0; parts];
    rec(total, 0, &mut cur, f);
}

/// Best allocation of one cell meeting `r_min` for every user, with each
/// pair's power on the grid `P * j / resolution`. `None` when no grid point
/// is feasible.
pub fn grid_cell(problem: &CellProblem, resolution: usize) -> Result<Option<(CellAllocation, f64)>> {
    check_units(problem, MAX_GRID_UNITS)?;
    if problem.users() > MAX_GRID_USERS {
        return Err(Error::InstanceTooLarge {
            what: "users",
            value: problem.users(),
            limit: MAX_GRID_USERS,
        });
    }
    if resolution < MIN_GRID_RESOLUTION {
        return Err(Error::InvalidScenario(vec![format!(
            "grid resolution {resolution} is below {MIN_GRID_RESOLUTION}"
        )]));
    }
    let g = &problem.gains;
    let u = g.units();
    let step = problem.power_budget / resolution as f64;
    let mut best: Option<(CellAllocation, f64)> = None;
    for perm in permutations(u) {
        let options: Vec<Vec<Tuple>> = (0..u).map(|i| user_options(g, i, perm[i])).collect();
        for_each_choice(&options, |picked| {
            // rates only grow with power, so the whole budget is spent
            compositions(resolution, u, &mut |js: &[usize]| {
                let mut per_user = vec![0.0; problem.users()];
                let powers: Vec<f64> = js.iter().map(|j| *j as f64 * step).collect();
                for (o, p) in picked.iter().zip(&powers) {
                    per_user[o.user] += rate(problem.weights[o.user], o.alpha, *p);
                }
                if per_user.iter().any(|r| *r < problem.r_min) {
                    return;
                }
                let obj: f64 = per_user.iter().sum();
                if best.as_ref().is_none_or(|b| obj > b.1) {
                    best = Some((allocation_of(g, &perm, picked, &powers), obj));
                }
            });
        });
    }
    Ok(best)
}

/// Grid search over every matching and tuple choice, keeping allocations that
/// meet the min rate. `None` when some cell has no feasible grid point.
pub fn grid_solve_min_rate(
    scenario: &ScenarioConfig,
    gains: &ChannelGains,
    resolution: usize,
) -> Result<Option<(Allocation, f64)>> {
    let problems = build_problems(scenario, gains)?;
    let mut cells = Vec::with_capacity(problems.len());
    let mut total = 0.0;
    for p in &problems {
        match grid_cell(p, resolution)? {
            Some((c, obj)) => {
                cells.push(c);
                total += obj;
            }
            None => return Ok(None),
        }
    }
    Ok(Some((Allocation { cells }, total)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dual_solver::tiny_problem;
    use crate::model::Band;

    #[test]
    fn permutation_count() {
        assert_eq!(permutations(4).len(), 24);
        let mut all = permutations(3);
        all.sort();
        all.dedup();
        assert_eq!(all.len(), 6);
    }

    #[test]
    fn single_unit_gets_whole_budget_on_best_tuple() {
        let mut p = tiny_problem(1, 2, 2, 8);
        p.gains = p.gains.restrict(&[Band::E]);
        let (alloc, obj) = exhaustive_cell(&p).unwrap();
        let pair = alloc.pairs[0];
        assert!((pair.power - p.power_budget).abs() < 1e-9 * p.power_budget);
        let best = (0..p.users())
            .flat_map(|k| user_options(&p.gains, 0, 0).into_iter().filter(move |o| o.user == k))
            .map(|o| rate(p.weights[o.user], o.alpha, p.power_budget))
            .fold(0.0, f64::max);
        assert!((obj - best).abs() < 1e-9);
    }

    #[test]
    fn cross_pairing_found_when_it_wins() {
        // unit 0 strong on hop 1 but weak on hop 2, unit 1 the reverse
        let mut p = tiny_problem(1, 1, 1, 0);
        for u in 0..2 {
            *p.gains.fk_mut(u, 0) = 1e-3;
        }
        *p.gains.fm_mut(0, 0) = 30.0;
        *p.gains.fm_mut(1, 0) = 0.05;
        *p.gains.mk_mut(0, 0, 0) = 0.05;
        *p.gains.mk_mut(1, 0, 0) = 30.0;
        let (alloc, _) = exhaustive_cell(&p).unwrap();
        assert_eq!(alloc.pairing(), vec![1, 0]);
    }

    #[test]
    fn water_fill_meets_budget() {
        let ch = [(1.0, 0.3), (2.0, 5.0), (1.5, 0.01)];
        for budget in [0.01, 1.0, 40.0] {
            let p = water_fill(&ch, budget);
            assert!((p.iter().sum::<f64>() - budget).abs() <= 1e-9 * budget);
            assert!(p.iter().all(|x| *x >= 0.0));
        }
    }

    #[test]
    fn rejects_large_instances() {
        let p = tiny_problem(3, 1, 1, 0);
        assert!(matches!(exhaustive_cell(&p), Err(Error::InstanceTooLarge { value: 6, .. })));
        let q = tiny_problem(2, 1, 1, 0);
        assert!(matches!(grid_cell(&q, 16), Err(Error::InstanceTooLarge { .. })));
        let r = tiny_problem(1, 1, 3, 0);
        assert!(matches!(grid_cell(&r, 16), Err(Error::InstanceTooLarge { what: "users", .. })));
    }

    /// Grid rounding moves each pair's power by at most `U * P / G`; the
    /// rate slope is bounded by `(w/2) alpha / ln 2`.
    fn grid_tolerance(p: &CellProblem, resolution: usize) -> f64 {
        let u = p.units();
        let max_slope = (0..u)
            .flat_map(|a| (0..u).map(move |b| (a, b)))
            .flat_map(|(a, b)| user_options(&p.gains, a, b))
            .map(|o| 0.5 * p.weights[o.user] * o.alpha / std::f64::consts::LN_2)
            .fold(0.0, f64::max);
        u as f64 * max_slope * u as f64 * p.power_budget / resolution as f64
    }

    #[test]
    fn grid_agrees_with_exact_without_min_rate() {
        for seed in 0..5 {
            let mut p = tiny_problem(1, 1, 2, seed);
            p.gains = p.gains.restrict(&[Band::V, Band::E]);
            let (_, exact) = exhaustive_cell(&p).unwrap();
            let (_, grid) = grid_cell(&p, 64).unwrap().unwrap();
            assert!(grid <= exact + 1e-9);
            assert!(exact - grid <= grid_tolerance(&p, 64), "seed {seed}: {exact} vs {grid}");
        }
    }

    #[test]
    fn min_rate_above_capacity_is_infeasible() {
        let mut p = tiny_problem(1, 1, 2, 3);
        let (_, exact) = exhaustive_cell(&p).unwrap();
        p.r_min = exact + 1.0;
        assert!(grid_cell(&p, 16).unwrap().is_none());
    }

    #[test]
    fn min_rate_costs_objective() {
        let mut hits = 0;
        for seed in 0..10 {
            let mut p = tiny_problem(1, 1, 2, seed);
            let (_, free) = grid_cell(&p, 32).unwrap().unwrap();
            p.r_min = 1.0;
            if let Some((alloc, obj)) = grid_cell(&p, 32).unwrap() {
                hits += 1;
                assert!(obj <= free + 1e-12);
                let mut per_user = vec![0.0; 2];
                for pair in &alloc.pairs {
                    per_user[pair.user] += rate(p.weights[pair.user], p.pair_gain(pair.first, pair.second, pair.user, pair.relay), pair.power);
                }
                assert!(per_user.iter().all(|r| *r >= 1.0));
            }
        }
        assert!(hits > 0);
    }
}
