//! Dual-decomposition solver for joint pairing, relay, band and power allocation.
//!
//! Cells share no resources, so each cell is solved on its own. An iteration
//! evaluates Z for every (first-hop unit, second-hop unit) pair under the
//! current multipliers, matches units to maximize total Z, water-fills power
//! and takes a projected subgradient step on `tau` (power budget) and `delta`
//! (min rates). Every new assignment is re-solved exactly for power, and the
//! best such primal point is reported.

mod assignment;
mod power;
mod problem;
mod recovery;

use std::f64::consts::LN_2;

pub use assignment::assign_pairs;
pub use power::{optimal_power, z_metric};
pub use problem::{
    best_tuple_per_pair, build_problems, Allocation, CellAllocation, CellProblem, PairAssignment,
    PairChoice, PairScores,
};

pub(crate) use assignment::{flatten_square, matching_total, Hungarian};
pub(crate) use problem::TupleTable;
pub(crate) use recovery::recover;

#[cfg(test)]
pub(crate) use assignment::tests::brute_force_max;
#[cfg(test)]
pub(crate) use problem::tests::tiny_problem;

use crate::channel::ChannelGains;
use crate::error::Result;
use crate::greedy::greedy_matching;
use crate::model::{AssignmentMethod, ScenarioConfig, SolverConfig, StepRule};

/// Smallest tau used to evaluate powers; the projection may reach zero.
const TAU_FLOOR: f64 = 1e-12;

/// Lagrange multipliers of every cell.
#[derive(Clone, Debug, PartialEq)]
pub struct DualState {
    pub tau: Vec<f64>,
    /// `[cell][user]`
    pub delta: Vec<Vec<f64>>,
    pub iteration: usize,
}

impl DualState {
    /// `tau_l = K_l * w_max / (2 P_l)`, `delta = 0`.
    pub fn initial(problems: &[CellProblem]) -> DualState {
        DualState {
            tau: problems.iter().map(initial_tau).collect(),
            delta: problems.iter().map(|p| vec![0.0; p.users()]).collect(),
            iteration: 1,
        }
    }

    pub fn is_nonnegative(&self) -> bool {
        self.tau.iter().chain(self.delta.iter().flatten()).all(|x| *x >= 0.0)
    }
}

fn initial_tau(p: &CellProblem) -> f64 {
    let w_max = p.weights.iter().copied().fold(0.0, f64::max);
    p.users() as f64 * w_max / (2.0 * p.power_budget)
}

/// Power consumption and per-user rates of the current iterate.
#[derive(Clone, Debug, PartialEq)]
pub struct AllocationStats {
    pub power_used: Vec<f64>,
    /// `[cell][user]`
    pub user_rates: Vec<Vec<f64>>,
}

/// One projected subgradient step on every multiplier:
/// `tau <- [tau - s(n) (P - sum g)]^+`, `delta <- [delta - s(n) (rate - R_min)]^+`.
/// Under [`StepRule::Normalized`] the tau step is additionally scaled by `tau / P`.
pub fn subgradient_step(state: &DualState, stats: &AllocationStats, scenario: &ScenarioConfig) -> DualState {
    let rule = scenario.solver.step;
    let mut next = state.clone();
    for (l, cell) in scenario.cells.iter().enumerate() {
        next.tau[l] = step_tau(state.tau[l], rule, state.iteration, cell.power_budget(), stats.power_used[l]);
        for (d, rate) in next.delta[l].iter_mut().zip(&stats.user_rates[l]) {
            *d = step_delta(*d, rule, state.iteration, *rate, scenario.r_min);
        }
    }
    next.iteration += 1;
    next
}

fn step_tau(tau: f64, rule: StepRule, n: usize, budget: f64, used: f64) -> f64 {
    let s = rule.step(n);
    let next = match rule {
        StepRule::Additive { .. } => tau - s * (budget - used),
        StepRule::Normalized { .. } => tau - s * (tau / budget) * (budget - used),
    };
    next.max(0.0)
}

fn step_delta(delta: f64, rule: StepRule, n: usize, rate: f64, r_min: f64) -> f64 {
    (delta - rule.step(n) * (rate - r_min)).max(0.0)
}

fn relative_change(new: f64, old: f64) -> f64 {
    if new == old {
        0.0
    } else {
        (new - old).abs() / new.abs()
    }
}

/// How second-hop units are matched to first-hop units inside the loop.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PairingRule {
    Optimal,
    Greedy,
    Identity,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SolveOptions {
    pub pairing: PairingRule,
    pub trace: bool,
}

impl SolveOptions {
    pub fn new(pairing: PairingRule) -> SolveOptions {
        SolveOptions { pairing, trace: false }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TraceRow {
    pub iteration: usize,
    pub tau: f64,
    pub delta: Vec<f64>,
    /// Dual function at the iterate's multipliers.
    pub dual_objective: f64,
    /// Best primal objective found so far.
    pub primal_objective: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CellReport {
    pub converged: bool,
    pub iterations: usize,
    /// Multipliers consistent with the reported powers (stationarity holds).
    pub tau: f64,
    pub delta: Vec<f64>,
    /// Multipliers at the end of the subgradient loop.
    pub loop_tau: f64,
    pub loop_delta: Vec<f64>,
    pub objective: f64,
    /// Smallest dual function value seen; an upper bound on this cell's optimum.
    pub dual_objective: f64,
    pub user_rates: Vec<f64>,
    pub power_used: f64,
    pub power_budget: f64,
    pub min_rate_feasible: bool,
    /// Users whose min rate is out of reach even with the whole budget.
    pub unreachable_users: Vec<usize>,
    pub delta_cap_hit: bool,
    pub trace: Vec<TraceRow>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SolveReport {
    pub converged: bool,
    pub iterations: usize,
    pub objective: f64,
    pub dual_objective: f64,
    pub min_rate_feasible: bool,
    pub power_feasible: bool,
    pub final_state: DualState,
    pub cells: Vec<CellReport>,
}

impl SolveReport {
    pub fn from_cells(cells: Vec<CellReport>) -> SolveReport {
        SolveReport {
            converged: cells.iter().all(|c| c.converged),
            iterations: cells.iter().map(|c| c.iterations).max().unwrap_or(0),
            objective: cells.iter().map(|c| c.objective).sum(),
            dual_objective: cells.iter().map(|c| c.dual_objective).sum(),
            min_rate_feasible: cells.iter().all(|c| c.min_rate_feasible),
            power_feasible: cells
                .iter()
                .all(|c| c.power_used <= c.power_budget * (1.0 + 1e-9)),
            final_state: DualState {
                tau: cells.iter().map(|c| c.loop_tau).collect(),
                delta: cells.iter().map(|c| c.loop_delta.clone()).collect(),
                iteration: cells.iter().map(|c| c.iterations).max().unwrap_or(0),
            },
            cells,
        }
    }

    /// `(dual - primal) / dual`.
    pub fn relative_gap(&self) -> f64 {
        if self.dual_objective > 0.0 {
            (self.dual_objective - self.objective) / self.dual_objective
        } else {
            0.0
        }
    }

    pub fn min_user_rate(&self) -> f64 {
        self.cells
            .iter()
            .flat_map(|c| c.user_rates.iter().copied())
            .fold(f64::INFINITY, f64::min)
    }

    /// Largest `|(1+delta)(w/2) alpha/(1+alpha g) - tau|` over pairs with `g > 0`.
    pub fn max_stationarity_residual(&self, allocation: &Allocation, problems: &[CellProblem]) -> f64 {
        let mut worst: f64 = 0.0;
        for ((cell, problem), rep) in allocation.cells.iter().zip(problems).zip(&self.cells) {
            for pair in cell.pairs.iter().filter(|p| p.power > 0.0) {
                let alpha = problem.pair_gain(pair.first, pair.second, pair.user, pair.relay);
                let lhs = (1.0 + rep.delta[pair.user]) * 0.5 * problem.weights[pair.user] * alpha
                    / (1.0 + alpha * pair.power);
                worst = worst.max((lhs - rep.tau).abs());
            }
        }
        worst
    }
}

/// Solves every cell of the scenario with the configured assignment method.
pub fn solve(scenario: &ScenarioConfig, gains: &ChannelGains) -> Result<(Allocation, SolveReport)> {
    let pairing = match scenario.solver.assignment_method {
        AssignmentMethod::OptimalMatching => PairingRule::Optimal,
        AssignmentMethod::Greedy => PairingRule::Greedy,
    };
    solve_with(scenario, gains, SolveOptions::new(pairing))
}

pub fn solve_with(
    scenario: &ScenarioConfig,
    gains: &ChannelGains,
    opts: SolveOptions,
) -> Result<(Allocation, SolveReport)> {
    let problems = build_problems(scenario, gains)?;
    Ok(solve_problems(&problems, &scenario.solver, opts))
}

pub fn solve_problems(
    problems: &[CellProblem],
    cfg: &SolverConfig,
    opts: SolveOptions,
) -> (Allocation, SolveReport) {
    let (cells, reports): (Vec<_>, Vec<_>) = problems.iter().map(|p| solve_cell(p, cfg, opts)).unzip();
    (Allocation { cells }, SolveReport::from_cells(reports))
}

/// Lagrangian maximizer over assignments for fixed multipliers, with the
/// per-pair term in the same units as the rates. Returns the matched total
/// and the pairs; `rule` picks how units are matched.
fn lagrangian_matching(
    table: &TupleTable,
    problem: &CellProblem,
    rule: PairingRule,
    tau: f64,
    delta: &[f64],
    hungarian: &mut Hungarian,
) -> (f64, Vec<(usize, usize, PairChoice)>) {
    let n = table.units;
    let tau_bits = tau / LN_2;
    let coef: Vec<f64> = problem
        .weights
        .iter()
        .zip(delta)
        .map(|(w, d)| 0.5 * (1.0 + d) * w)
        .collect();
    let levels: Vec<f64> = coef.iter().map(|c| c / tau).collect();
    let pair_value = |u: usize, v: usize| -> (f64, usize) {
        let base = (u * n + v) * table.users;
        let mut best = (0.0, 0);
        for k in 0..table.users {
            let a = table.alpha[base + k];
            let al = a * levels[k];
            if al > 1.0 {
                let z = coef[k] * al.log2() - tau_bits * (levels[k] - 1.0 / a);
                if z > best.0 {
                    best = (z, k);
                }
            }
        }
        best
    };
    let (z, user): (Vec<f64>, Vec<usize>) = match rule {
        PairingRule::Identity => (0..n).map(|u| pair_value(u, u)).unzip(),
        _ => (0..n * n).map(|i| pair_value(i / n, i % n)).unzip(),
    };
    let (total, perm): (f64, Vec<usize>) = match rule {
        PairingRule::Identity => (z.iter().sum(), (0..n).collect()),
        PairingRule::Optimal => {
            let perm = hungarian.solve_max(n, &z);
            (matching_total(n, &z, &perm), perm)
        }
        PairingRule::Greedy => {
            let perm = greedy_matching(n, &z);
            (matching_total(n, &z, &perm), perm)
        }
    };
    let pairs = (0..n)
        .map(|u| {
            let idx = if rule == PairingRule::Identity { u } else { u * n + perm[u] };
            (u, perm[u], table.choice(u, perm[u], user[idx]))
        })
        .collect();
    (total, pairs)
}

/// Dual function `max_assignment sum Z + tau P - R sum delta` of one cell. The
/// maximization runs over every matching the scheme allows, so the value
/// bounds the scheme's optimum from above.
fn dual_function(
    table: &TupleTable,
    problem: &CellProblem,
    pairing: PairingRule,
    tau: f64,
    delta: &[f64],
    hungarian: &mut Hungarian,
) -> f64 {
    let rule = match pairing {
        PairingRule::Identity => PairingRule::Identity,
        PairingRule::Optimal | PairingRule::Greedy => PairingRule::Optimal,
    };
    let (inner, _) = lagrangian_matching(table, problem, rule, tau, delta, hungarian);
    inner + tau / LN_2 * problem.power_budget - problem.r_min * delta.iter().sum::<f64>()
}

/// Rounds of the post-loop polish: re-match at the recovered multipliers,
/// recover powers for the new assignment, repeat until the assignment repeats.
const POLISH_ROUNDS: usize = 50;

struct Candidate {
    pairs: Vec<(usize, usize, PairChoice)>,
    powers: Vec<f64>,
    tau: f64,
    delta: Vec<f64>,
    objective: f64,
    user_rates: Vec<f64>,
    feasible: bool,
}

impl Candidate {
    fn better_than(&self, other: &Candidate) -> bool {
        (self.feasible, self.objective) > (other.feasible, other.objective)
    }
}

fn recover_candidate(problem: &CellProblem, pairs: Vec<(usize, usize, PairChoice)>, constrained: &[bool]) -> Candidate {
    let flat: Vec<(usize, f64)> = pairs.iter().map(|(_, _, c)| (c.user, c.alpha)).collect();
    let r = recover(&flat, &problem.weights, problem.power_budget, problem.r_min, constrained);
    let feasible = r.min_rate_met && !(problem.r_min > 0.0 && constrained.iter().any(|c| !c));
    Candidate {
        pairs,
        powers: r.powers,
        tau: r.tau,
        delta: r.delta,
        objective: r.objective,
        user_rates: r.user_rates,
        feasible,
    }
}

/// Users for which `r_min` is out of reach even when they get every unit and
/// the whole budget.
fn unreachable_users(problem: &CellProblem, table: &TupleTable, diagonal_only: bool) -> Vec<usize> {
    if problem.r_min <= 0.0 {
        return Vec::new();
    }
    (0..problem.users())
        .filter(|&k| {
            let pairs: Vec<(usize, f64)> = (0..problem.units())
                .map(|u| (0, table.best_alpha_for_user(u, k, diagonal_only)))
                .collect();
            let alone = recover(&pairs, &[problem.weights[k]], problem.power_budget, 0.0, &[false]);
            alone.objective < problem.r_min
        })
        .collect()
}

pub(crate) fn solve_cell(problem: &CellProblem, cfg: &SolverConfig, opts: SolveOptions) -> (CellAllocation, CellReport) {
    let identity = opts.pairing == PairingRule::Identity;
    let table = TupleTable::build(problem, identity);
    let (n, users) = (problem.units(), problem.users());
    let unreachable = unreachable_users(problem, &table, identity);
    let constrained: Vec<bool> = (0..users)
        .map(|k| problem.r_min > 0.0 && !unreachable.contains(&k))
        .collect();

    let mut tau = initial_tau(problem);
    let mut delta = vec![0.0; users];
    let mut hungarian = Hungarian::default();
    let (mut z, mut best_user) = (Vec::with_capacity(n * n), Vec::with_capacity(n * n));
    let mut coef = vec![0.0; users];
    let mut levels = vec![0.0; users];
    let mut best: Option<Candidate> = None;
    let mut last_key: Vec<(usize, usize, PairChoice)> = Vec::new();
    let mut trace = Vec::new();
    let mut dual_best = f64::INFINITY;
    let (mut converged, mut cap_hit) = (false, false);
    let mut iterations = 0;

    for it in 1..=cfg.max_iterations {
        iterations = it;
        let t = tau.max(TAU_FLOOR);
        for k in 0..users {
            coef[k] = 0.5 * (1.0 + delta[k]) * problem.weights[k];
            levels[k] = coef[k] / t;
        }
        let perm: Vec<usize> = match opts.pairing {
            PairingRule::Identity => {
                z.clear();
                best_user.clear();
                for u in 0..n {
                    let (s, k) = table.best_on_pair(u, u, &coef, &levels, t);
                    z.push(s);
                    best_user.push(k);
                }
                (0..n).collect()
            }
            PairingRule::Optimal => {
                table.scores(&coef, &levels, t, &mut z, &mut best_user);
                hungarian.solve_max(n, &z)
            }
            PairingRule::Greedy => {
                table.scores(&coef, &levels, t, &mut z, &mut best_user);
                greedy_matching(n, &z)
            }
        };
        let pairs: Vec<(usize, usize, PairChoice)> = (0..n)
            .map(|u| {
                let v = perm[u];
                let idx = if identity { u } else { u * n + v };
                (u, v, table.choice(u, v, best_user[idx]))
            })
            .collect();

        let mut used = 0.0;
        let mut rates = vec![0.0; users];
        for (_, _, c) in &pairs {
            let g = power::water_fill(levels[c.user], c.alpha);
            used += g;
            rates[c.user] += crate::rates::weighted_rate_term(problem.weights[c.user], c.alpha, g);
        }

        if pairs != last_key {
            let cand = recover_candidate(problem, pairs.clone(), &constrained);
            if best.as_ref().is_none_or(|b| cand.better_than(b)) {
                best = Some(cand);
            }
            last_key = pairs;
        }

        if opts.trace {
            let d = dual_function(&table, problem, opts.pairing, t, &delta, &mut hungarian);
            dual_best = dual_best.min(d);
            trace.push(TraceRow {
                iteration: it,
                tau: t,
                delta: delta.clone(),
                dual_objective: d,
                primal_objective: best.as_ref().map_or(0.0, |b| b.objective),
            });
        }

        let next_tau = step_tau(tau, cfg.step, it, problem.power_budget, used);
        let next_delta: Vec<f64> = (0..users)
            .map(|k| {
                if constrained[k] {
                    step_delta(delta[k], cfg.step, it, rates[k], problem.r_min)
                } else {
                    0.0
                }
            })
            .collect();
        let tau_done = relative_change(next_tau, tau) < cfg.eps_tau;
        let delta_done = next_delta
            .iter()
            .zip(&delta)
            .all(|(a, b)| relative_change(*a, *b) < cfg.eps_delta);
        tau = next_tau;
        delta = next_delta;
        if delta.iter().any(|d| *d > cfg.delta_cap) {
            cap_hit = true;
            break;
        }
        if tau_done && delta_done {
            converged = true;
            break;
        }
    }

    let mut best = best.expect("at least one iteration");
    let loop_dual = dual_function(&table, problem, opts.pairing, tau.max(TAU_FLOOR), &delta, &mut hungarian);
    dual_best = dual_best.min(loop_dual);

    let mut visited = vec![best.pairs.clone()];
    let (mut anchor_tau, mut anchor_delta) = (best.tau, best.delta.clone());
    for _ in 0..POLISH_ROUNDS {
        dual_best = dual_best.min(dual_function(&table, problem, opts.pairing, anchor_tau, &anchor_delta, &mut hungarian));
        let (_, pairs) = lagrangian_matching(&table, problem, opts.pairing, anchor_tau, &anchor_delta, &mut hungarian);
        if visited.contains(&pairs) {
            break;
        }
        visited.push(pairs.clone());
        let cand = recover_candidate(problem, pairs, &constrained);
        (anchor_tau, anchor_delta) = (cand.tau, cand.delta.clone());
        if cand.better_than(&best) {
            best = cand;
        }
    }

    let alloc_pairs: Vec<PairAssignment> = best
        .pairs
        .iter()
        .zip(&best.powers)
        .map(|(&(u, v, c), &g)| PairAssignment {
            first: u,
            second: v,
            user: c.user,
            relay: c.relay,
            power: g,
        })
        .collect();
    let power_used = best.powers.iter().sum();
    let allocation = CellAllocation {
        bands: problem.gains.bands.clone(),
        n: problem.gains.n,
        pairs: alloc_pairs,
    };
    let report = CellReport {
        converged,
        iterations,
        tau: best.tau,
        delta: best.delta,
        loop_tau: tau,
        loop_delta: delta,
        objective: best.objective,
        dual_objective: dual_best,
        user_rates: best.user_rates,
        power_used,
        power_budget: problem.power_budget,
        min_rate_feasible: best.feasible && !cap_hit,
        unreachable_users: unreachable,
        delta_cap_hit: cap_hit,
        trace,
    };
    (allocation, report)
}

/// Read-only check of an allocation against the pairing, power and min-rate
/// constraints.
#[derive(Clone, Debug, PartialEq)]
pub struct FeasibilityRecord {
    pub cells: Vec<CellFeasibility>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CellFeasibility {
    pub matching_valid: bool,
    pub power_used: f64,
    pub power_budget: f64,
    pub power_ok: bool,
    pub user_rates: Vec<f64>,
    pub rate_ok: Vec<bool>,
}

impl FeasibilityRecord {
    pub fn all_ok(&self) -> bool {
        self.cells
            .iter()
            .all(|c| c.matching_valid && c.power_ok && c.rate_ok.iter().all(|x| *x))
    }
}

/// `rel_tol` applies to the budget, `abs_tol` to the rates.
pub fn check_feasibility(
    allocation: &Allocation,
    problems: &[CellProblem],
    rel_tol: f64,
    abs_tol: f64,
) -> FeasibilityRecord {
    let rates = crate::rates::sum_weighted_rate(allocation, problems);
    let cells = allocation
        .cells
        .iter()
        .zip(problems)
        .zip(rates.user_rates)
        .map(|((cell, problem), user_rates)| {
            let power_used = cell.total_power();
            CellFeasibility {
                matching_valid: cell.is_perfect_matching() && cell.pairs.iter().all(|p| p.power >= 0.0),
                power_used,
                power_budget: problem.power_budget,
                power_ok: power_used <= problem.power_budget * (1.0 + rel_tol),
                rate_ok: user_rates.iter().map(|r| *r >= problem.r_min - abs_tol).collect(),
                user_rates,
            }
        })
        .collect();
    FeasibilityRecord { cells }
}
