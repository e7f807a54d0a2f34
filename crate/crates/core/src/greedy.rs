//! Greedy activity selection as a cheap replacement for the optimal
//! assignment step.

use crate::channel::ChannelGains;
use crate::dual_solver::{flatten_square, solve_with, Allocation, PairingRule, SolveOptions, SolveReport};
use crate::error::Result;
use crate::model::ScenarioConfig;

/// Greedy perfect matching: candidates by Z descending (ties by first, then
/// second index), accepted when neither endpoint is taken.
pub fn greedy_assign(scores: &[Vec<f64>]) -> Result<Vec<usize>> {
    let (n, flat) = flatten_square(scores)?;
    Ok(greedy_matching(n, &flat))
}

pub(crate) fn greedy_matching(n: usize, scores: &[f64]) -> Vec<usize> {
    let mut order: Vec<u32> = (0..(n * n) as u32).collect();
    order.sort_by(|&a, &b| scores[b as usize].total_cmp(&scores[a as usize]).then(a.cmp(&b)));
    let mut row_used = vec![false; n];
    let mut col_used = vec![false; n];
    let mut result = vec![usize::MAX; n];
    let mut left = n;
    for idx in order {
        let (u, v) = (idx as usize / n, idx as usize % n);
        if row_used[u] || col_used[v] {
            continue;
        }
        row_used[u] = true;
        col_used[v] = true;
        result[u] = v;
        left -= 1;
        if left == 0 {
            break;
        }
    }
    result
}

/// The dual solver with greedy matching inside every iteration.
pub fn solve_greedy(scenario: &ScenarioConfig, gains: &ChannelGains) -> Result<(Allocation, SolveReport)> {
    solve_with(scenario, gains, SolveOptions::new(PairingRule::Greedy))
}
