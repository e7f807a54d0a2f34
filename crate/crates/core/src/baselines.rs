//! Comparison schemes: equal power, no subcarrier pairing, and band-restricted
//! operation (E-band only, LTE only).

use crate::channel::{CellGains, ChannelGains};
use crate::dual_solver::{
    build_problems, solve_problems, Allocation, CellAllocation, CellProblem, CellReport, Hungarian, PairAssignment,
    PairingRule, SolveOptions, SolveReport, TupleTable,
};
use crate::error::{Error, Result};
use crate::model::{Band, ScenarioConfig};
use crate::rates::weighted_rate_term;

/// Every pair gets `P_l / U`; the tuple and the pairing still maximize the
/// resulting rate.
pub fn solve_equal_power(scenario: &ScenarioConfig, gains: &ChannelGains) -> Result<(Allocation, SolveReport)> {
    let problems = build_problems(scenario, gains)?;
    Ok(equal_power_problems(&problems))
}

pub fn equal_power_problems(problems: &[CellProblem]) -> (Allocation, SolveReport) {
    let (cells, reports): (Vec<_>, Vec<_>) = problems.iter().map(equal_power_cell).unzip();
    (Allocation { cells }, SolveReport::from_cells(reports))
}

fn equal_power_cell(problem: &CellProblem) -> (CellAllocation, CellReport) {
    let table = TupleTable::build(problem, false);
    let n = problem.units();
    let power = problem.power_budget / n as f64;
    let mut rate = Vec::with_capacity(n * n);
    let mut user = Vec::with_capacity(n * n);
    for u in 0..n {
        for v in 0..n {
            let mut best = (f64::NEG_INFINITY, 0);
            for k in 0..problem.users() {
                let r = weighted_rate_term(problem.weights[k], table.choice(u, v, k).alpha, power);
                if r > best.0 {
                    best = (r, k);
                }
            }
            rate.push(best.0);
            user.push(best.1);
        }
    }
    let perm = Hungarian::default().solve_max(n, &rate);
    let mut user_rates = vec![0.0; problem.users()];
    let pairs: Vec<PairAssignment> = (0..n)
        .map(|u| {
            let v = perm[u];
            let c = table.choice(u, v, user[u * n + v]);
            user_rates[c.user] += rate[u * n + v];
            PairAssignment {
                first: u,
                second: v,
                user: c.user,
                relay: c.relay,
                power,
            }
        })
        .collect();
    let objective = user_rates.iter().sum();
    let report = fixed_power_report(problem, objective, user_rates, power * n as f64);
    let alloc = CellAllocation {
        bands: problem.gains.bands.clone(),
        n: problem.gains.n,
        pairs,
    };
    (alloc, report)
}

/// Report for a scheme without multipliers; the dual bound is the objective itself.
fn fixed_power_report(problem: &CellProblem, objective: f64, user_rates: Vec<f64>, power_used: f64) -> CellReport {
    let users = problem.users();
    CellReport {
        converged: true,
        iterations: 0,
        tau: 0.0,
        delta: vec![0.0; users],
        loop_tau: 0.0,
        loop_delta: vec![0.0; users],
        objective,
        dual_objective: objective,
        min_rate_feasible: user_rates.iter().all(|r| *r >= problem.r_min - 1e-9),
        user_rates,
        power_used,
        power_budget: problem.power_budget,
        unreachable_users: Vec::new(),
        delta_cap_hit: false,
        trace: Vec::new(),
    }
}

/// Dual loop with the second hop forced onto the first hop's unit.
pub fn solve_no_pairing(scenario: &ScenarioConfig, gains: &ChannelGains) -> Result<(Allocation, SolveReport)> {
    let problems = build_problems(scenario, gains)?;
    Ok(solve_problems(&problems, &scenario.solver, SolveOptions::new(PairingRule::Identity)))
}

/// Full dual solver with every cell limited to `bands`.
pub fn solve_band_restricted(
    scenario: &ScenarioConfig,
    gains: &ChannelGains,
    bands: &[Band],
) -> Result<(Allocation, SolveReport)> {
    let mut problems = build_problems(scenario, gains)?;
    for (l, p) in problems.iter_mut().enumerate() {
        let restricted = p.gains.restrict(bands);
        if restricted.bands.is_empty() {
            return Err(Error::EmptyBandSet { cell: l });
        }
        p.gains = restricted;
    }
    Ok(solve_problems(&problems, &scenario.solver, SolveOptions::new(PairingRule::Optimal)))
}

pub fn solve_e_only(scenario: &ScenarioConfig, gains: &ChannelGains) -> Result<(Allocation, SolveReport)> {
    solve_band_restricted(scenario, gains, &[Band::E])
}

/// LTE-only network: small cells have no LTE interface and stay idle; their
/// users join the macro cell on its LTE subcarriers. The allocation holds a
/// single cell.
pub fn solve_lte_only(scenario: &ScenarioConfig, gains: &ChannelGains) -> Result<(Allocation, SolveReport)> {
    let problem = lte_only_problem(scenario, gains)?;
    Ok(solve_problems(
        std::slice::from_ref(&problem),
        &scenario.solver,
        SolveOptions::new(PairingRule::Optimal),
    ))
}

/// Macro LTE problem with every small-cell user appended, using the
/// fallback gains drawn for them.
pub fn lte_only_problem(scenario: &ScenarioConfig, gains: &ChannelGains) -> Result<CellProblem> {
    let problems = build_problems(scenario, gains)?;
    let host = scenario.lte_macro().ok_or(Error::EmptyBandSet { cell: 0 })?;
    let macro_gains = problems[host].gains.restrict(&[Band::Lte]);
    let n = macro_gains.n;
    let relays = macro_gains.relays;

    let mut guests: Vec<(usize, &CellGains)> = Vec::new();
    for (l, g) in gains.cells.iter().enumerate() {
        if l == host {
            continue;
        }
        match &g.fallback {
            Some(fb) if fb.macro_cell == host && fb.relays == relays => guests.push((l, g)),
            _ => {
                return Err(Error::InvalidScenario(vec![format!(
                    "cell {l} has no LTE fallback gains towards the macro cell"
                )]))
            }
        }
    }

    let users = macro_gains.users + guests.iter().map(|(_, g)| g.users).sum::<usize>();
    let mut merged = CellGains::zeros(vec![Band::Lte], n, relays, users);
    merged.alpha_fm.clone_from(&macro_gains.alpha_fm);
    let mut weights = problems[host].weights.clone();
    let mut origin = problems[host].user_origin.clone();
    for i in 0..n {
        for k in 0..macro_gains.users {
            *merged.fk_mut(i, k) = macro_gains.fk(i, k);
            for m in 0..relays {
                *merged.mk_mut(i, m, k) = macro_gains.mk(i, m, k);
            }
        }
    }
    let mut offset = macro_gains.users;
    for (l, g) in &guests {
        let fb = g.fallback.as_ref().expect("checked above");
        for i in 0..n {
            for k in 0..g.users {
                *merged.fk_mut(i, offset + k) = fb.alpha_fk[i * g.users + k];
                for m in 0..relays {
                    *merged.mk_mut(i, m, offset + k) = fb.alpha_mk[(i * relays + m) * g.users + k];
                }
            }
        }
        weights.extend_from_slice(&problems[*l].weights);
        origin.extend_from_slice(&problems[*l].user_origin);
        offset += g.users;
    }
    Ok(CellProblem {
        gains: merged,
        weights,
        power_budget: problems[host].power_budget,
        r_min: scenario.r_min,
        scenario_cell: host,
        user_origin: origin,
    })
}
