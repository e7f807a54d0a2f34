use crate::channel::{CellGains, ChannelGains};
use crate::error::{Error, Result};
use crate::model::{Band, ScenarioConfig};
use crate::rates::{relay_admissible, LinkMode};

use super::power::z_at_level;

/// One independently solvable cell: its gain tables, user weights, power
/// budget and min-rate target.
#[derive(Clone, Debug, PartialEq)]
pub struct CellProblem {
    pub gains: CellGains,
    pub weights: Vec<f64>,
    pub power_budget: f64,
    pub r_min: f64,
    /// Scenario cell whose base station transmits.
    pub scenario_cell: usize,
    /// `(scenario cell, user)` for each user of the problem.
    pub user_origin: Vec<(usize, usize)>,
}

impl CellProblem {
    pub fn from_scenario(scenario: &ScenarioConfig, gains: &ChannelGains, cell: usize) -> CellProblem {
        let cfg = &scenario.cells[cell];
        CellProblem {
            gains: gains.cells[cell].clone(),
            weights: scenario.weights(cell),
            power_budget: cfg.power_budget(),
            r_min: scenario.r_min,
            scenario_cell: cell,
            user_origin: (0..cfg.num_users).map(|k| (cell, k)).collect(),
        }
    }

    pub fn units(&self) -> usize {
        self.gains.units()
    }

    pub fn users(&self) -> usize {
        self.gains.users
    }

    pub fn relays(&self) -> usize {
        self.gains.relays
    }

    /// Equivalent gain of a serving tuple on the pair `(first, second)`.
    /// Relay tuples are expected to be admissible.
    pub fn pair_gain(&self, first: usize, second: usize, user: usize, relay: Option<usize>) -> f64 {
        let a_fk = self.gains.fk(first, user);
        match relay {
            None => a_fk,
            Some(m) => {
                let a_fm = self.gains.fm(first, m);
                let a_mk = self.gains.mk(second, m, user);
                a_fm * a_mk / (a_fm + a_mk - a_fk)
            }
        }
    }
}

/// One problem per scenario cell, over every band the cell supports.
pub fn build_problems(scenario: &ScenarioConfig, gains: &ChannelGains) -> Result<Vec<CellProblem>> {
    if gains.cells.len() != scenario.cells.len() {
        return Err(Error::InvalidScenario(vec![format!(
            "gain tables for {} cells, scenario has {}",
            gains.cells.len(),
            scenario.cells.len()
        )]));
    }
    for (l, (c, g)) in scenario.cells.iter().zip(&gains.cells).enumerate() {
        if g.n != scenario.subcarriers_per_band || g.relays != c.num_relays || g.users != c.num_users {
            return Err(Error::InvalidScenario(vec![format!(
                "cell {l}: gain table shape does not match the scenario"
            )]));
        }
    }
    Ok((0..scenario.cells.len())
        .map(|l| CellProblem::from_scenario(scenario, gains, l))
        .collect())
}

/// Best serving choice of one user on one ordered pair of units.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PairChoice {
    pub user: usize,
    pub relay: Option<usize>,
    pub alpha: f64,
}

impl PairChoice {
    pub fn mode(&self) -> LinkMode {
        if self.relay.is_some() {
            LinkMode::Relay
        } else {
            LinkMode::Direct
        }
    }
}

const DIRECT: u32 = u32::MAX;

/// For every `(first, second, user)` the largest equivalent gain over direct
/// mode and all admissible relays. Z is nondecreasing in the gain, so this is
/// all the per-iteration search needs. Ties keep direct mode, then the lowest
/// relay.
#[derive(Clone, Debug)]
pub(crate) struct TupleTable {
    pub units: usize,
    pub users: usize,
    pub alpha: Vec<f64>,
    relay: Vec<u32>,
}

impl TupleTable {
    pub fn build(problem: &CellProblem, diagonal_only: bool) -> TupleTable {
        let (units, users, relays) = (problem.units(), problem.users(), problem.relays());
        let g = &problem.gains;
        let mut alpha = vec![0.0; units * units * users];
        let mut relay = vec![DIRECT; units * units * users];
        for u in 0..units {
            for v in 0..units {
                if diagonal_only && u != v {
                    continue;
                }
                for k in 0..users {
                    let a_fk = g.fk(u, k);
                    let mut best = a_fk;
                    let mut best_relay = DIRECT;
                    for m in 0..relays {
                        let (a_fm, a_mk) = (g.fm(u, m), g.mk(v, m, k));
                        if relay_admissible(a_fm, a_mk, a_fk) {
                            let eq = a_fm * a_mk / (a_fm + a_mk - a_fk);
                            if eq > best {
                                best = eq;
                                best_relay = m as u32;
                            }
                        }
                    }
                    let idx = (u * units + v) * users + k;
                    alpha[idx] = best;
                    relay[idx] = best_relay;
                }
            }
        }
        TupleTable {
            units,
            users,
            alpha,
            relay,
        }
    }

    #[inline]
    pub fn choice(&self, u: usize, v: usize, k: usize) -> PairChoice {
        let idx = (u * self.units + v) * self.users + k;
        PairChoice {
            user: k,
            relay: (self.relay[idx] != DIRECT).then_some(self.relay[idx] as usize),
            alpha: self.alpha[idx],
        }
    }

    /// Best user on `(u, v)` and its Z under the given per-user coefficients
    /// `c_k = (1+delta_k) w_k / 2` and water levels `c_k / tau`.
    #[inline]
    pub fn best_on_pair(&self, u: usize, v: usize, coef: &[f64], levels: &[f64], tau: f64) -> (f64, usize) {
        let base = (u * self.units + v) * self.users;
        let mut best = (f64::NEG_INFINITY, 0);
        for k in 0..self.users {
            let z = z_at_level(coef[k], levels[k], tau, self.alpha[base + k]);
            if z > best.0 {
                best = (z, k);
            }
        }
        best
    }

    /// Z matrix (row-major, first hop by second hop) and per-entry best user.
    pub fn scores(&self, coef: &[f64], levels: &[f64], tau: f64, z: &mut Vec<f64>, user: &mut Vec<usize>) {
        let n = self.units;
        z.clear();
        user.clear();
        for u in 0..n {
            for v in 0..n {
                let (s, k) = self.best_on_pair(u, v, coef, levels, tau);
                z.push(s);
                user.push(k);
            }
        }
    }

    /// Largest gain any tuple offers user `k` on first-hop unit `u`.
    pub fn best_alpha_for_user(&self, u: usize, k: usize, diagonal_only: bool) -> f64 {
        if diagonal_only {
            return self.alpha[(u * self.units + u) * self.users + k];
        }
        (0..self.units)
            .map(|v| self.alpha[(u * self.units + v) * self.users + k])
            .fold(0.0, f64::max)
    }
}

/// Per-pair maximiser of Z over users, relays and modes.
#[derive(Clone, Debug, PartialEq)]
pub struct PairScores {
    pub n: usize,
    /// Row-major `[first][second]`.
    pub z: Vec<f64>,
    pub choice: Vec<PairChoice>,
}

impl PairScores {
    pub fn rows(&self) -> Vec<Vec<f64>> {
        self.z.chunks(self.n).map(<[f64]>::to_vec).collect()
    }
}

/// Evaluates every `(first, second)` pair of a cell under multipliers
/// `(tau, delta)`. Ties keep the lowest user, then direct mode, then the
/// lowest relay.
pub fn best_tuple_per_pair(problem: &CellProblem, tau: f64, delta: &[f64]) -> Result<PairScores> {
    if !(tau > 0.0) {
        return Err(Error::UnboundedWaterLevel(tau));
    }
    let table = TupleTable::build(problem, false);
    let coef: Vec<f64> = problem
        .weights
        .iter()
        .zip(delta)
        .map(|(w, d)| 0.5 * (1.0 + d) * w)
        .collect();
    let levels: Vec<f64> = coef.iter().map(|c| c / tau).collect();
    let (mut z, mut user) = (Vec::new(), Vec::new());
    table.scores(&coef, &levels, tau, &mut z, &mut user);
    let n = table.units;
    let choice = (0..n * n)
        .map(|idx| table.choice(idx / n, idx % n, user[idx]))
        .collect();
    Ok(PairScores { n, z, choice })
}

/// One matched pair of units and the tuple it carries.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PairAssignment {
    pub first: usize,
    pub second: usize,
    pub user: usize,
    pub relay: Option<usize>,
    /// Aggregate (BS + relay) power of the pair.
    pub power: f64,
}

impl PairAssignment {
    pub fn mode(&self) -> LinkMode {
        if self.relay.is_some() {
            LinkMode::Relay
        } else {
            LinkMode::Direct
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CellAllocation {
    pub bands: Vec<Band>,
    pub n: usize,
    /// Indexed by first-hop unit.
    pub pairs: Vec<PairAssignment>,
}

impl CellAllocation {
    pub fn units(&self) -> usize {
        self.bands.len() * self.n
    }

    pub fn unit_label(&self, unit: usize) -> (Band, usize) {
        (self.bands[unit / self.n], unit % self.n)
    }

    /// First-hop unit to second-hop unit.
    pub fn pairing(&self) -> Vec<usize> {
        self.pairs.iter().map(|p| p.second).collect()
    }

    pub fn total_power(&self) -> f64 {
        self.pairs.iter().map(|p| p.power).sum()
    }

    pub fn is_perfect_matching(&self) -> bool {
        let u = self.units();
        let mut seen = vec![false; u];
        self.pairs.len() == u
            && self.pairs.iter().enumerate().all(|(i, p)| {
                p.first == i && p.second < u && !std::mem::replace(&mut seen[p.second], true)
            })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Allocation {
    /// One entry per solved problem.
    pub cells: Vec<CellAllocation>,
}
