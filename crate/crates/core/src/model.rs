//! Scenario description: cells, bands, link geometry, user weights and solver knobs.
//!
//! A [`ScenarioConfig`] is plain data that round-trips through TOML. The shipped
//! preset (`presets/baseline.toml`, available as [`ScenarioConfig::baseline`]) carries
//! the three-cell deployment with its pathloss table and simulation parameters.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const BASELINE_PRESET: &str = include_str!("../presets/baseline.toml");

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Band {
    V,
    E,
    #[serde(rename = "LTE")]
    Lte,
}

impl Band {
    pub const ALL: [Band; 3] = [Band::V, Band::E, Band::Lte];

    pub fn index(self) -> usize {
        match self {
            Band::V => 0,
            Band::E => 1,
            Band::Lte => 2,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Band::V => "V",
            Band::E => "E",
            Band::Lte => "LTE",
        }
    }

    pub fn parse(s: &str) -> Option<Band> {
        match s.trim() {
            "V" | "v" => Some(Band::V),
            "E" | "e" => Some(Band::E),
            "LTE" | "lte" => Some(Band::Lte),
            _ => None,
        }
    }
}

impl fmt::Display for Band {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Propagation environment; selects the indoor or outdoor pathloss columns.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Environment {
    Indoor,
    Outdoor,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PropagationVariant {
    pub beta: f64,
    pub shadow_sigma_db: f64,
}

/// Per-band entry of the pathloss table, with both environment variants.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BandParams {
    pub carrier_ghz: f64,
    pub f0_ghz: f64,
    pub gamma: f64,
    pub indoor: PropagationVariant,
    pub outdoor: PropagationVariant,
}

impl BandParams {
    pub fn resolve(&self, env: Environment) -> BandPropagationParams {
        let variant = match env {
            Environment::Indoor => self.indoor,
            Environment::Outdoor => self.outdoor,
        };
        BandPropagationParams {
            beta: variant.beta,
            gamma: self.gamma,
            shadow_sigma_db: variant.shadow_sigma_db,
            carrier_ghz: self.carrier_ghz,
            f0_ghz: self.f0_ghz,
        }
    }
}

/// Pathloss parameters for one band in one environment.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BandPropagationParams {
    pub beta: f64,
    pub gamma: f64,
    pub shadow_sigma_db: f64,
    pub carrier_ghz: f64,
    pub f0_ghz: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CellKind {
    Macro,
    Small,
}

impl CellKind {
    /// Small base stations serve indoor users, the macro serves outdoor users.
    pub fn environment(self) -> Environment {
        match self {
            CellKind::Macro => Environment::Outdoor,
            CellKind::Small => Environment::Indoor,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CellConfig {
    pub kind: CellKind,
    pub bands: Vec<Band>,
    /// Total transmit power relative to unit noise power per subcarrier, in dB.
    pub power_budget_db: f64,
    pub d0_ref_m: f64,
    pub relay_link_interval_m: [f64; 2],
    pub direct_link_interval_m: [f64; 2],
    pub num_relays: usize,
    pub num_users: usize,
}

impl CellConfig {
    /// Linear, noise-normalized power budget.
    pub fn power_budget(&self) -> f64 {
        10f64.powf(self.power_budget_db / 10.0)
    }

    pub fn supports(&self, band: Band) -> bool {
        self.bands.contains(&band)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WeightRule {
    /// `w_k = 1 + (k-1)/(K-1)`, `w = 1` for a single user.
    Linear,
    Uniform,
    /// Explicit weights by user index; each cell uses the first `K_l` entries.
    Explicit(Vec<f64>),
}

/// Step size `s(n) = scale / sqrt(n)` and how it is applied to the multipliers.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case")]
pub enum StepRule {
    /// Plain projected subgradient on both tau and delta.
    Additive { scale: f64 },
    /// Tau moves by `s(n) * tau / P` times its subgradient, i.e. a relative
    /// step on the budget slack; delta moves additively.
    Normalized { scale: f64 },
}

impl StepRule {
    pub fn step(&self, n: usize) -> f64 {
        let scale = match *self {
            StepRule::Additive { scale } | StepRule::Normalized { scale } => scale,
        };
        scale / (n.max(1) as f64).sqrt()
    }
}

impl Default for StepRule {
    fn default() -> Self {
        StepRule::Normalized { scale: 0.5 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AssignmentMethod {
    OptimalMatching,
    Greedy,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverConfig {
    pub eps_tau: f64,
    pub eps_delta: f64,
    pub step: StepRule,
    pub max_iterations: usize,
    pub assignment_method: AssignmentMethod,
    /// A min-rate multiplier above this value declares the instance infeasible.
    pub delta_cap: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            eps_tau: 1e-4,
            eps_delta: 1e-4,
            step: StepRule::default(),
            max_iterations: 5000,
            assignment_method: AssignmentMethod::OptimalMatching,
            delta_cap: 1e4,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub seed: u64,
    pub subcarriers_per_band: usize,
    pub r_min: f64,
    pub weight_rule: WeightRule,
    #[serde(default)]
    pub solver: SolverConfig,
    pub bands: BTreeMap<Band, BandParams>,
    pub cells: Vec<CellConfig>,
}

impl ScenarioConfig {
    /// The shipped three-cell preset (one macro, two small cells).
    pub fn baseline() -> ScenarioConfig {
        ScenarioConfig::from_toml_str(BASELINE_PRESET).expect("shipped preset parses")
    }

    pub fn from_toml_str(s: &str) -> Result<ScenarioConfig> {
        Ok(toml::from_str(s)?)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<ScenarioConfig> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        ScenarioConfig::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("scenario serializes")
    }

    /// Resolved pathloss parameters for `band` in cell `cell`.
    pub fn propagation(&self, cell: usize, band: Band) -> Option<BandPropagationParams> {
        let env = self.cells.get(cell)?.kind.environment();
        self.bands.get(&band).map(|p| p.resolve(env))
    }

    pub fn weights(&self, cell: usize) -> Vec<f64> {
        assign_weights(self.cells[cell].num_users, &self.weight_rule)
    }

    /// Index of the macro cell that can absorb other cells' users over LTE.
    pub fn lte_macro(&self) -> Option<usize> {
        self.cells
            .iter()
            .position(|c| c.kind == CellKind::Macro && c.supports(Band::Lte))
    }

    /// Applies `f` to every cell.
    pub fn for_each_cell(mut self, f: impl Fn(&mut CellConfig)) -> ScenarioConfig {
        self.cells.iter_mut().for_each(f);
        self
    }

    pub fn validate(&self) -> Result<()> {
        let violations = validate_scenario(self);
        if violations.is_empty() {
            Ok(())
        } else {
            Err(Error::InvalidScenario(
                violations.iter().map(|v| v.to_string()).collect(),
            ))
        }
    }
}

pub fn assign_weights(num_users: usize, rule: &WeightRule) -> Vec<f64> {
    match rule {
        WeightRule::Linear if num_users > 1 => {
            let span = (num_users - 1) as f64;
            (0..num_users).map(|k| 1.0 + k as f64 / span).collect()
        }
        WeightRule::Linear | WeightRule::Uniform => vec![1.0; num_users],
        WeightRule::Explicit(w) => w.iter().copied().take(num_users).collect(),
    }
}

/// Links of the users of a small cell to the LTE macro cell. Only used when a
/// scheme idles the small cells and hands their users to the macro.
#[derive(Clone, Debug, PartialEq)]
pub struct MacroFallback {
    pub macro_cell: usize,
    pub d_bs_user: Vec<f64>,
    /// `[macro relay][user]`
    pub d_relay_user: Vec<Vec<f64>>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CellTopology {
    pub d_bs_relay: Vec<f64>,
    /// `[relay][user]`
    pub d_relay_user: Vec<Vec<f64>>,
    pub d_bs_user: Vec<f64>,
    pub weights: Vec<f64>,
    pub fallback: Option<MacroFallback>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Topology {
    pub cells: Vec<CellTopology>,
}

fn check_interval([lo, hi]: [f64; 2]) -> Result<()> {
    if lo.is_finite() && hi.is_finite() && lo > 0.0 && lo <= hi {
        Ok(())
    } else {
        Err(Error::InvalidInterval { lo, hi })
    }
}

fn draw<R: Rng + ?Sized>(rng: &mut R, [lo, hi]: [f64; 2]) -> f64 {
    if lo == hi {
        lo
    } else {
        rng.random_range(lo..=hi)
    }
}

/// Draws every link distance uniformly from its cell's interval.
///
/// Draw order is fixed: per cell, BS-relay, then relay-user (relay-major),
/// then BS-user, then the macro fallback links of small cells.
pub fn sample_topology<R: Rng + ?Sized>(config: &ScenarioConfig, rng: &mut R) -> Result<Topology> {
    for cell in &config.cells {
        check_interval(cell.relay_link_interval_m)?;
        check_interval(cell.direct_link_interval_m)?;
    }
    let lte_macro = config.lte_macro();
    let mut cells = Vec::with_capacity(config.cells.len());
    for (l, cell) in config.cells.iter().enumerate() {
        let relay = cell.relay_link_interval_m;
        let direct = cell.direct_link_interval_m;
        let d_bs_relay = (0..cell.num_relays).map(|_| draw(rng, relay)).collect();
        let d_relay_user = (0..cell.num_relays)
            .map(|_| (0..cell.num_users).map(|_| draw(rng, relay)).collect())
            .collect();
        let d_bs_user = (0..cell.num_users).map(|_| draw(rng, direct)).collect();
        let fallback = match lte_macro {
            Some(m) if m != l && !cell.supports(Band::Lte) => {
                let host = &config.cells[m];
                let d_bs_user = (0..cell.num_users)
                    .map(|_| draw(rng, host.direct_link_interval_m))
                    .collect();
                let d_relay_user = (0..host.num_relays)
                    .map(|_| {
                        (0..cell.num_users)
                            .map(|_| draw(rng, host.relay_link_interval_m))
                            .collect()
                    })
                    .collect();
                Some(MacroFallback {
                    macro_cell: m,
                    d_bs_user,
                    d_relay_user,
                })
            }
            _ => None,
        };
        cells.push(CellTopology {
            d_bs_relay,
            d_relay_user,
            d_bs_user,
            weights: config.weights(l),
            fallback,
        });
    }
    Ok(Topology { cells })
}

#[derive(Clone, Debug, PartialEq)]
pub enum Violation {
    NoSubcarriers,
    NoCells,
    BadMinRate(f64),
    MacroWithoutLte { cell: usize },
    SmallWithLte { cell: usize },
    EmptyBands { cell: usize },
    DuplicateBand { cell: usize, band: Band },
    BadPowerBudget { cell: usize },
    BadReferenceDistance { cell: usize },
    BadInterval { cell: usize, which: &'static str },
    NoRelays { cell: usize },
    NoUsers { cell: usize },
    MissingBandParams(Band),
    BadBandParams { band: Band, field: &'static str },
    BadWeights(String),
    BadSolver(&'static str),
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::NoSubcarriers => write!(f, "subcarriers_per_band must be at least 1"),
            Violation::NoCells => write!(f, "scenario has no cells"),
            Violation::BadMinRate(r) => write!(f, "r_min must be finite and >= 0, got {r}"),
            Violation::MacroWithoutLte { cell } => {
                write!(f, "cell {cell}: macro cell must include the LTE band")
            }
            Violation::SmallWithLte { cell } => {
                write!(f, "cell {cell}: small cell must not include the LTE band")
            }
            Violation::EmptyBands { cell } => write!(f, "cell {cell}: no bands"),
            Violation::DuplicateBand { cell, band } => {
                write!(f, "cell {cell}: band {band} listed twice")
            }
            Violation::BadPowerBudget { cell } => {
                write!(f, "cell {cell}: power budget must be finite")
            }
            Violation::BadReferenceDistance { cell } => {
                write!(f, "cell {cell}: reference distance must be positive")
            }
            Violation::BadInterval { cell, which } => {
                write!(f, "cell {cell}: {which} interval must satisfy 0 < low <= high")
            }
            Violation::NoRelays { cell } => write!(f, "cell {cell}: needs at least one relay"),
            Violation::NoUsers { cell } => write!(f, "cell {cell}: needs at least one user"),
            Violation::MissingBandParams(b) => write!(f, "no propagation parameters for band {b}"),
            Violation::BadBandParams { band, field } => {
                write!(f, "band {band}: invalid {field}")
            }
            Violation::BadWeights(msg) => write!(f, "weights: {msg}"),
            Violation::BadSolver(msg) => write!(f, "solver: {msg}"),
        }
    }
}

/// Lists every invariant violation; an empty list means the scenario is runnable.
pub fn validate_scenario(config: &ScenarioConfig) -> Vec<Violation> {
    let mut out = Vec::new();
    if config.subcarriers_per_band == 0 {
        out.push(Violation::NoSubcarriers);
    }
    if config.cells.is_empty() {
        out.push(Violation::NoCells);
    }
    if !(config.r_min.is_finite() && config.r_min >= 0.0) {
        out.push(Violation::BadMinRate(config.r_min));
    }
    let interval_ok = |[lo, hi]: [f64; 2]| lo.is_finite() && hi.is_finite() && lo > 0.0 && lo <= hi;
    for (l, cell) in config.cells.iter().enumerate() {
        match cell.kind {
            CellKind::Macro if !cell.supports(Band::Lte) => {
                out.push(Violation::MacroWithoutLte { cell: l })
            }
            CellKind::Small if cell.supports(Band::Lte) => {
                out.push(Violation::SmallWithLte { cell: l })
            }
            _ => {}
        }
        if cell.bands.is_empty() {
            out.push(Violation::EmptyBands { cell: l });
        }
        for (i, b) in cell.bands.iter().enumerate() {
            if cell.bands[..i].contains(b) {
                out.push(Violation::DuplicateBand { cell: l, band: *b });
            }
        }
        if !cell.power_budget_db.is_finite() {
            out.push(Violation::BadPowerBudget { cell: l });
        }
        if !(cell.d0_ref_m.is_finite() && cell.d0_ref_m > 0.0) {
            out.push(Violation::BadReferenceDistance { cell: l });
        }
        if !interval_ok(cell.relay_link_interval_m) {
            out.push(Violation::BadInterval { cell: l, which: "relay link" });
        }
        if !interval_ok(cell.direct_link_interval_m) {
            out.push(Violation::BadInterval { cell: l, which: "direct link" });
        }
        if cell.num_relays == 0 {
            out.push(Violation::NoRelays { cell: l });
        }
        if cell.num_users == 0 {
            out.push(Violation::NoUsers { cell: l });
        }
    }
    for band in Band::ALL {
        let used = config.cells.iter().any(|c| c.supports(band));
        match config.bands.get(&band) {
            None if used => out.push(Violation::MissingBandParams(band)),
            None => {}
            Some(p) => {
                let positive = |x: f64| x.is_finite() && x > 0.0;
                if !positive(p.carrier_ghz) {
                    out.push(Violation::BadBandParams { band, field: "carrier_ghz" });
                }
                if !positive(p.f0_ghz) {
                    out.push(Violation::BadBandParams { band, field: "f0_ghz" });
                }
                if !p.gamma.is_finite() {
                    out.push(Violation::BadBandParams { band, field: "gamma" });
                }
                for v in [p.indoor, p.outdoor] {
                    if !positive(v.beta) {
                        out.push(Violation::BadBandParams { band, field: "beta" });
                    }
                    if !(v.shadow_sigma_db.is_finite() && v.shadow_sigma_db >= 0.0) {
                        out.push(Violation::BadBandParams { band, field: "shadow_sigma_db" });
                    }
                }
            }
        }
    }
    if let WeightRule::Explicit(w) = &config.weight_rule {
        let need = config.cells.iter().map(|c| c.num_users).max().unwrap_or(0);
        if w.len() < need {
            out.push(Violation::BadWeights(format!(
                "explicit list has {} entries, cells need {need}",
                w.len()
            )));
        }
        if w.iter().any(|x| !(x.is_finite() && *x > 0.0)) {
            out.push(Violation::BadWeights("weights must be finite and positive".into()));
        }
    }
    let s = &config.solver;
    if !(s.eps_tau > 0.0 && s.eps_delta > 0.0) {
        out.push(Violation::BadSolver("tolerances must be positive"));
    }
    if s.max_iterations == 0 {
        out.push(Violation::BadSolver("max_iterations must be at least 1"));
    }
    let scale = match s.step {
        StepRule::Additive { scale } | StepRule::Normalized { scale } => scale,
    };
    if !(scale.is_finite() && scale > 0.0) {
        out.push(Violation::BadSolver("step scale must be positive"));
    }
    if let StepRule::Normalized { scale } = s.step {
        if scale >= 1.0 {
            out.push(Violation::BadSolver("normalized step scale must be below 1"));
        }
    }
    if !(s.delta_cap > 0.0) {
        out.push(Violation::BadSolver("delta_cap must be positive"));
    }
    out
}

#[cfg(test)]
mod tests {
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    use super::*;

    #[test]
    fn linear_weights() {
        let w = assign_weights(4, &WeightRule::Linear);
        let expected = [1.0, 4.0 / 3.0, 5.0 / 3.0, 2.0];
        for (a, b) in w.iter().zip(expected) {
            assert!((a - b).abs() < 1e-15);
        }
        assert_eq!(assign_weights(1, &WeightRule::Linear), vec![1.0]);
        assert_eq!(assign_weights(2, &WeightRule::Uniform), vec![1.0, 1.0]);
    }

    #[test]
    fn linear_sum_is_three_halves_k() {
        for k in 2..40 {
            let w = assign_weights(k, &WeightRule::Linear);
            let sum: f64 = w.iter().sum();
            assert!((sum - 1.5 * k as f64).abs() < 1e-12);
            assert!(w.windows(2).all(|p| p[0] <= p[1]));
            assert!(w.iter().all(|x| (1.0..=2.0).contains(x)));
        }
    }

    #[test]
    fn baseline_preset_is_valid() {
        let cfg = ScenarioConfig::baseline();
        assert!(validate_scenario(&cfg).is_empty(), "{:?}", validate_scenario(&cfg));
        assert_eq!(cfg.cells.len(), 3);
        assert_eq!(cfg.cells[0].kind, CellKind::Macro);
        assert!((cfg.cells[0].power_budget() - 39.810717055).abs() < 1e-6);
        assert!((cfg.cells[1].power_budget() - 1.995262315).abs() < 1e-6);
        for c in &cfg.cells {
            let mut bands = c.bands.clone();
            bands.sort();
            match c.kind {
                CellKind::Macro => assert_eq!(bands, vec![Band::V, Band::E, Band::Lte]),
                CellKind::Small => assert_eq!(bands, vec![Band::V, Band::E]),
            }
        }
    }

    #[test]
    fn toml_round_trip() {
        let cfg = ScenarioConfig::baseline();
        let back = ScenarioConfig::from_toml_str(&cfg.to_toml_string()).unwrap();
        assert_eq!(cfg, back);
    }

    #[test]
    fn violations_reported() {
        let mut cfg = ScenarioConfig::baseline();
        cfg.cells[1].bands.push(Band::Lte);
        let v = validate_scenario(&cfg);
        assert!(v.contains(&Violation::SmallWithLte { cell: 1 }));

        let mut cfg = ScenarioConfig::baseline();
        cfg.subcarriers_per_band = 0;
        assert!(validate_scenario(&cfg).contains(&Violation::NoSubcarriers));

        let mut cfg = ScenarioConfig::baseline();
        cfg.cells[0].bands.retain(|b| *b != Band::Lte);
        cfg.cells[2].relay_link_interval_m = [30.0, 10.0];
        cfg.bands.remove(&Band::E);
        let v = validate_scenario(&cfg);
        assert!(v.contains(&Violation::MacroWithoutLte { cell: 0 }));
        assert!(v.contains(&Violation::BadInterval { cell: 2, which: "relay link" }));
        assert!(v.contains(&Violation::MissingBandParams(Band::E)));
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn topology_within_intervals_and_deterministic() {
        let cfg = ScenarioConfig::baseline();
        let a = sample_topology(&cfg, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        let b = sample_topology(&cfg, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        assert_eq!(a, b);
        for (cell, topo) in cfg.cells.iter().zip(&a.cells) {
            let [rlo, rhi] = cell.relay_link_interval_m;
            let [dlo, dhi] = cell.direct_link_interval_m;
            let relay_ok = |d: &f64| (rlo..=rhi).contains(d);
            assert!(topo.d_bs_relay.iter().all(relay_ok));
            assert!(topo.d_relay_user.iter().flatten().all(relay_ok));
            assert!(topo.d_bs_user.iter().all(|d| (dlo..=dhi).contains(d)));
            assert_eq!(topo.d_bs_relay.len(), cell.num_relays);
            assert_eq!(topo.d_bs_user.len(), cell.num_users);
        }
        // small cell direct links in [10, 50] m, macro relay links in [100, 300] m
        assert!(a.cells[1].d_bs_user.iter().all(|d| (10.0..=50.0).contains(d)));
        assert!(a.cells[0].d_bs_relay.iter().all(|d| (100.0..=300.0).contains(d)));
        assert!(a.cells[0].fallback.is_none());
        let fb = a.cells[1].fallback.as_ref().unwrap();
        assert_eq!(fb.macro_cell, 0);
        assert!(fb.d_bs_user.iter().all(|d| (50.0..=500.0).contains(d)));
    }

    #[test]
    fn inverted_interval_rejected() {
        let mut cfg = ScenarioConfig::baseline();
        cfg.cells[0].direct_link_interval_m = [500.0, 50.0];
        let err = sample_topology(&cfg, &mut ChaCha8Rng::seed_from_u64(1)).unwrap_err();
        assert!(matches!(err, Error::InvalidInterval { .. }));
        cfg.cells[0].direct_link_interval_m = [0.0, 50.0];
        assert!(sample_topology(&cfg, &mut ChaCha8Rng::seed_from_u64(1)).is_err());
    }
}
