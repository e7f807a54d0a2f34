//! Maximum-weight perfect matching between first-hop and second-hop units.
//!
//! Dense O(n^3) Hungarian method (shortest augmenting paths with potentials)
//! on `cost = -score`.

use crate::error::{Error, Result};

/// Validates a row-major square score matrix and flattens it.
pub(crate) fn flatten_square(rows: &[Vec<f64>]) -> Result<(usize, Vec<f64>)> {
    let n = rows.len();
    for (row, r) in rows.iter().enumerate() {
        if r.len() != n {
            return Err(Error::NonSquare {
                rows: n,
                row,
                cols: r.len(),
            });
        }
    }
    Ok((n, rows.iter().flatten().copied().collect()))
}

/// Maximum-total-score perfect matching; `result[first] = second`.
pub fn assign_pairs(scores: &[Vec<f64>]) -> Result<Vec<usize>> {
    let (n, flat) = flatten_square(scores)?;
    Ok(Hungarian::default().solve_max(n, &flat))
}

/// Reusable buffers for repeated solves of the same size.
#[derive(Default, Debug)]
pub(crate) struct Hungarian {
    u: Vec<f64>,
    v: Vec<f64>,
    p: Vec<usize>,
    way: Vec<usize>,
    minv: Vec<f64>,
    used: Vec<bool>,
}

impl Hungarian {
    pub fn solve_max(&mut self, n: usize, scores: &[f64]) -> Vec<usize> {
        debug_assert_eq!(scores.len(), n * n);
        if n == 0 {
            return Vec::new();
        }
        let cost = |i: usize, j: usize| -scores[i * n + j];
        self.u.clear();
        self.u.resize(n + 1, 0.0);
        self.v.clear();
        self.v.resize(n + 1, 0.0);
        self.p.clear();
        self.p.resize(n + 1, 0);
        self.way.clear();
        self.way.resize(n + 1, 0);
        for i in 1..=n {
            self.p[0] = i;
            let mut j0 = 0usize;
            self.minv.clear();
            self.minv.resize(n + 1, f64::INFINITY);
            self.used.clear();
            self.used.resize(n + 1, false);
            loop {
                self.used[j0] = true;
                let i0 = self.p[j0];
                let mut delta = f64::INFINITY;
                let mut j1 = 0usize;
                for j in 1..=n {
                    if self.used[j] {
                        continue;
                    }
                    let cur = cost(i0 - 1, j - 1) - self.u[i0] - self.v[j];
                    if cur < self.minv[j] {
                        self.minv[j] = cur;
                        self.way[j] = j0;
                    }
                    if self.minv[j] < delta {
                        delta = self.minv[j];
                        j1 = j;
                    }
                }
                for j in 0..=n {
                    if self.used[j] {
                        self.u[self.p[j]] += delta;
                        self.v[j] -= delta;
                    } else {
                        self.minv[j] -= delta;
                    }
                }
                j0 = j1;
                if self.p[j0] == 0 {
                    break;
                }
            }
            loop {
                let j1 = self.way[j0];
                self.p[j0] = self.p[j1];
                j0 = j1;
                if j0 == 0 {
                    break;
                }
            }
        }
        let mut assignment = vec![0usize; n];
        for j in 1..=n {
            if self.p[j] > 0 {
                assignment[self.p[j] - 1] = j - 1;
            }
        }
        assignment
    }
}

pub(crate) fn matching_total(n: usize, scores: &[f64], perm: &[usize]) -> f64 {
    (0..n).map(|i| scores[i * n + perm[i]]).sum()
}

#[cfg(test)]
pub(crate) mod tests {
    use proptest::prelude::*;

    use super::*;

    /// Best total over all permutations (Heap's algorithm).
    pub(crate) fn brute_force_max(rows: &[Vec<f64>]) -> f64 {
        let n = rows.len();
        let mut perm: Vec<usize> = (0..n).collect();
        let total = |p: &[usize]| (0..n).map(|i| rows[i][p[i]]).sum::<f64>();
        let mut best = total(&perm);
        let mut c = vec![0usize; n];
        let mut i = 0;
        while i < n {
            if c[i] < i {
                if i % 2 == 0 {
                    perm.swap(0, i);
                } else {
                    perm.swap(c[i], i);
                }
                best = best.max(total(&perm));
                c[i] += 1;
                i = 0;
            } else {
                c[i] = 0;
                i += 1;
            }
        }
        best
    }

    fn total(rows: &[Vec<f64>], perm: &[usize]) -> f64 {
        perm.iter().enumerate().map(|(i, j)| rows[i][*j]).sum()
    }

    #[test]
    fn two_by_two() {
        let rows = vec![vec![3.0, 1.0], vec![2.0, 2.0]];
        let perm = assign_pairs(&rows).unwrap();
        assert_eq!(perm, vec![0, 1]);
        assert_eq!(total(&rows, &perm), 5.0);
    }

    #[test]
    fn diagonal_dominant_gives_identity() {
        let rows: Vec<Vec<f64>> = (0..6)
            .map(|i| (0..6).map(|j| if i == j { 10.0 } else { 1.0 }).collect())
            .collect();
        assert_eq!(assign_pairs(&rows).unwrap(), (0..6).collect::<Vec<_>>());
    }

    #[test]
    fn three_by_three_matches_enumeration() {
        let rows = vec![
            vec![0.7, 2.2, 1.1],
            vec![1.9, 0.3, 2.5],
            vec![2.4, 1.6, 0.2],
        ];
        let perm = assign_pairs(&rows).unwrap();
        assert!((total(&rows, &perm) - brute_force_max(&rows)).abs() < 1e-12);
        assert!((brute_force_max(&rows) - (2.2 + 2.5 + 2.4)).abs() < 1e-12);
    }

    #[test]
    fn rejects_non_square() {
        let rows = vec![vec![1.0, 2.0], vec![3.0]];
        assert!(matches!(assign_pairs(&rows), Err(Error::NonSquare { row: 1, .. })));
        assert_eq!(assign_pairs(&[]).unwrap(), Vec::<usize>::new());
    }

    fn square(max_n: usize) -> impl Strategy<Value = Vec<Vec<f64>>> {
        (1..=max_n).prop_flat_map(|n| prop::collection::vec(prop::collection::vec(0.0f64..10.0, n), n))
    }

    proptest! {
        #[test]
        fn optimal_against_all_permutations(rows in square(5)) {
            let perm = assign_pairs(&rows).unwrap();
            let mut seen = vec![false; rows.len()];
            for &j in &perm {
                prop_assert!(!seen[j]);
                seen[j] = true;
            }
            let best = brute_force_max(&rows);
            prop_assert_eq!(total(&rows, &perm), best);
        }
    }
}
