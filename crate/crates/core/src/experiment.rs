//! Seeded Monte Carlo experiments: parameter sweeps over drops, every scheme
//! run on the same gains, CSV output and per-point summaries.

use std::fmt;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::baselines::{solve_e_only, solve_equal_power, solve_lte_only, solve_no_pairing};
use crate::channel::{generate_gains, ChannelGains};
use crate::dual_solver::{solve_with, Allocation, PairingRule, SolveOptions, SolveReport};
use crate::error::{Error, Result};
use crate::greedy::solve_greedy;
use crate::model::{sample_topology, Band, CellKind, ScenarioConfig};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    Dual,
    Greedy,
    Ep,
    NoPairing,
    LteOnly,
    EOnly,
}

impl Scheme {
    pub const ALL: [Scheme; 6] = [
        Scheme::Dual,
        Scheme::Greedy,
        Scheme::Ep,
        Scheme::NoPairing,
        Scheme::LteOnly,
        Scheme::EOnly,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Scheme::Dual => "dual",
            Scheme::Greedy => "greedy",
            Scheme::Ep => "ep",
            Scheme::NoPairing => "no_pairing",
            Scheme::LteOnly => "lte_only",
            Scheme::EOnly => "e_only",
        }
    }

    pub fn parse(s: &str) -> Option<Scheme> {
        Scheme::ALL.into_iter().find(|x| x.name() == s.trim())
    }

    pub fn run(self, scenario: &ScenarioConfig, gains: &ChannelGains) -> Result<(Allocation, SolveReport)> {
        self.run_traced(scenario, gains, false)
    }

    fn run_traced(self, scenario: &ScenarioConfig, gains: &ChannelGains, trace: bool) -> Result<(Allocation, SolveReport)> {
        match self {
            Scheme::Dual if trace => solve_with(
                scenario,
                gains,
                SolveOptions {
                    pairing: PairingRule::Optimal,
                    trace,
                },
            ),
            Scheme::Dual => solve_with(scenario, gains, SolveOptions::new(PairingRule::Optimal)),
            Scheme::Greedy => solve_greedy(scenario, gains),
            Scheme::Ep => solve_equal_power(scenario, gains),
            Scheme::NoPairing => solve_no_pairing(scenario, gains),
            Scheme::LteOnly => solve_lte_only(scenario, gains),
            Scheme::EOnly => solve_e_only(scenario, gains),
        }
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Link-distance ranges applied to both the relay and the direct links.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DistanceBucket {
    pub small_m: [f64; 2],
    pub macro_m: [f64; 2],
}

impl DistanceBucket {
    pub fn label(&self) -> String {
        format!(
            "small {}-{} m / macro {}-{} m",
            self.small_m[0], self.small_m[1], self.macro_m[0], self.macro_m[1]
        )
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Sweep {
    None,
    /// Subcarriers per band.
    Subcarriers { values: Vec<usize> },
    /// Users per cell.
    Users { values: Vec<usize> },
    Distance { buckets: Vec<DistanceBucket> },
}

impl Sweep {
    pub fn param(&self) -> &'static str {
        match self {
            Sweep::None => "none",
            Sweep::Subcarriers { .. } => "N",
            Sweep::Users { .. } => "K",
            Sweep::Distance { .. } => "distance",
        }
    }

    pub fn len(&self) -> usize {
        match self {
            Sweep::None => 1,
            Sweep::Subcarriers { values } | Sweep::Users { values } => values.len(),
            Sweep::Distance { buckets } => buckets.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// CSV label of point `i`.
    pub fn label(&self, i: usize) -> String {
        match self {
            Sweep::None => "-".into(),
            Sweep::Subcarriers { values } | Sweep::Users { values } => values[i].to_string(),
            Sweep::Distance { buckets } => buckets[i].label(),
        }
    }

    /// Scenario at sweep point `i`.
    pub fn apply(&self, base: &ScenarioConfig, i: usize) -> ScenarioConfig {
        match self {
            Sweep::None => base.clone(),
            Sweep::Subcarriers { values } => ScenarioConfig {
                subcarriers_per_band: values[i],
                ..base.clone()
            },
            Sweep::Users { values } => {
                let k = values[i];
                base.clone().for_each_cell(|c| c.num_users = k)
            }
            Sweep::Distance { buckets } => {
                let b = buckets[i].clone();
                base.clone().for_each_cell(|c| {
                    let range = match c.kind {
                        CellKind::Macro => b.macro_m,
                        CellKind::Small => b.small_m,
                    };
                    c.relay_link_interval_m = range;
                    c.direct_link_interval_m = range;
                })
            }
        }
    }
}

/// Per-cell overrides applied before the sweep.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Overrides {
    pub subcarriers_per_band: Option<usize>,
    pub num_users: Option<usize>,
    pub num_relays: Option<usize>,
}

impl Overrides {
    pub fn apply(&self, base: &ScenarioConfig) -> ScenarioConfig {
        let mut s = base.clone();
        if let Some(n) = self.subcarriers_per_band {
            s.subcarriers_per_band = n;
        }
        let (k, m) = (self.num_users, self.num_relays);
        s.for_each_cell(|c| {
            if let Some(k) = k {
                c.num_users = k;
            }
            if let Some(m) = m {
                c.num_relays = m;
            }
        })
    }
}

/// A shipped experiment definition (`presets/fig*.toml`).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentPreset {
    pub name: String,
    pub schemes: Vec<Scheme>,
    pub drops: usize,
    #[serde(default)]
    pub overrides: Overrides,
    pub sweep: Sweep,
}

const PRESETS: [(&str, &str); 4] = [
    ("fig3", include_str!("../presets/fig3.toml")),
    ("fig4", include_str!("../presets/fig4.toml")),
    ("fig5", include_str!("../presets/fig5.toml")),
    ("fig6", include_str!("../presets/fig6.toml")),
];

impl ExperimentPreset {
    pub fn names() -> impl Iterator<Item = &'static str> {
        PRESETS.iter().map(|(n, _)| *n)
    }

    pub fn builtin(name: &str) -> Option<ExperimentPreset> {
        PRESETS
            .iter()
            .find(|(n, _)| *n == name)
            .map(|(_, text)| toml::from_str(text).expect("shipped experiment preset parses"))
    }

    pub fn into_spec(self, base: &ScenarioConfig) -> ExperimentSpec {
        ExperimentSpec {
            scenario: self.overrides.apply(base),
            schemes: self.schemes,
            sweep: self.sweep,
            drops: self.drops,
            seed: base.seed,
            workers: 1,
            trace: false,
            timing: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentSpec {
    pub scenario: ScenarioConfig,
    pub schemes: Vec<Scheme>,
    pub sweep: Sweep,
    pub drops: usize,
    pub seed: u64,
    pub workers: usize,
    /// Keep the dual solver's iteration trace.
    pub trace: bool,
    /// Record wall time per row; makes the output run-dependent.
    pub timing: bool,
}

impl ExperimentSpec {
    pub fn new(scenario: ScenarioConfig, schemes: Vec<Scheme>, sweep: Sweep, drops: usize) -> ExperimentSpec {
        ExperimentSpec {
            seed: scenario.seed,
            scenario,
            schemes,
            sweep,
            drops,
            workers: 1,
            trace: false,
            timing: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        if self.drops == 0 {
            problems.push("drops must be at least 1".to_string());
        }
        if self.schemes.is_empty() {
            problems.push("no schemes selected".to_string());
        }
        if self.sweep.is_empty() {
            problems.push("sweep has no values".to_string());
        }
        if let Sweep::Subcarriers { values } | Sweep::Users { values } = &self.sweep {
            if values.contains(&0) {
                problems.push(format!("{} sweep values must be positive", self.sweep.param()));
            }
        }
        if !problems.is_empty() {
            return Err(Error::InvalidScenario(problems));
        }
        for i in 0..self.sweep.len() {
            let s = self.sweep.apply(&self.scenario, i);
            s.validate()?;
            if self.schemes.contains(&Scheme::LteOnly) && s.lte_macro().is_none() {
                problems.push("lte_only needs a macro cell with the LTE band".into());
            }
            if self.schemes.contains(&Scheme::EOnly) {
                if let Some(l) = s.cells.iter().position(|c| !c.supports(Band::E)) {
                    problems.push(format!("e_only needs the E band in every cell; cell {l} lacks it"));
                }
            }
        }
        problems.dedup();
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::InvalidScenario(problems))
        }
    }
}

/// Topology stream depends on the drop only, so every sweep point sees the
/// same drops (common random numbers); gains also depend on the sweep point.
pub fn drop_rngs(seed: u64, sweep_index: usize, drop: usize) -> (ChaCha8Rng, ChaCha8Rng) {
    let mut topo = ChaCha8Rng::seed_from_u64(seed);
    topo.set_stream(drop as u64);
    let mut gains = ChaCha8Rng::seed_from_u64(seed);
    gains.set_stream(((sweep_index as u64 + 1) << 32) | drop as u64);
    (topo, gains)
}

/// Gains for one (sweep point, drop).
pub fn drop_gains(scenario: &ScenarioConfig, seed: u64, sweep_index: usize, drop: usize) -> Result<ChannelGains> {
    let (mut topo_rng, mut gain_rng) = drop_rngs(seed, sweep_index, drop);
    let topo = sample_topology(scenario, &mut topo_rng)?;
    generate_gains(scenario, &topo, &mut gain_rng)
}

impl ExperimentSpec {
    /// Gains of sweep point `i` in drop `drop`. A subcarrier sweep draws once
    /// at the largest N and hands each point the first N subcarriers per band,
    /// so larger points only add resources.
    pub fn point_gains(&self, scenarios: &[ScenarioConfig], i: usize, drop: usize) -> Result<ChannelGains> {
        match &self.sweep {
            Sweep::Subcarriers { values } => {
                let widest = (0..values.len()).max_by_key(|&j| (values[j], usize::MAX - j)).unwrap_or(i);
                let full = drop_gains(&scenarios[widest], self.seed, 0, drop)?;
                Ok(full.truncate_subcarriers(values[i]))
            }
            _ => drop_gains(&scenarios[i], self.seed, i, drop),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub scheme: Scheme,
    pub sweep: String,
    pub drop: usize,
    /// Sum-weighted rate, bits/s/Hz.
    pub objective: f64,
    pub dual_objective: f64,
    pub min_user_rate: f64,
    /// Units allocated per band over both hops.
    pub units_v: usize,
    pub units_e: usize,
    pub units_lte: usize,
    /// Units carrying power: first hops with `g > 0`, second hops of relay
    /// pairs with `g > 0`.
    pub active_v: usize,
    pub active_e: usize,
    pub active_lte: usize,
    pub converged: bool,
    pub min_rate_feasible: bool,
    pub iterations: usize,
    pub gains_fingerprint: String,
    pub wall_ms: Option<f64>,
}

impl ResultRow {
    pub fn relative_gap(&self) -> f64 {
        if self.dual_objective > 0.0 {
            (self.dual_objective - self.objective) / self.dual_objective
        } else {
            0.0
        }
    }

    /// Share of the active units that sit in the V band.
    pub fn v_fraction(&self) -> f64 {
        let active = self.active_v + self.active_e + self.active_lte;
        if active == 0 {
            0.0
        } else {
            self.active_v as f64 / active as f64
        }
    }

    pub fn units_total(&self) -> usize {
        self.units_v + self.units_e + self.units_lte
    }
}

#[derive(Default)]
struct BandCounts {
    units: [usize; 3],
    active: [usize; 3],
}

fn band_counts(allocation: &Allocation) -> BandCounts {
    let mut c = BandCounts::default();
    for cell in &allocation.cells {
        for p in &cell.pairs {
            let first = cell.unit_label(p.first).0.index();
            let second = cell.unit_label(p.second).0.index();
            c.units[first] += 1;
            c.units[second] += 1;
            if p.power > 0.0 {
                c.active[first] += 1;
                if p.relay.is_some() {
                    c.active[second] += 1;
                }
            }
        }
    }
    c
}

fn make_row(
    scheme: Scheme,
    sweep: String,
    drop: usize,
    fingerprint: u64,
    allocation: &Allocation,
    report: &SolveReport,
    wall_ms: Option<f64>,
) -> ResultRow {
    let counts = band_counts(allocation);
    ResultRow {
        scheme,
        sweep,
        drop,
        objective: report.objective,
        dual_objective: report.dual_objective,
        min_user_rate: report.min_user_rate(),
        units_v: counts.units[0],
        units_e: counts.units[1],
        units_lte: counts.units[2],
        active_v: counts.active[0],
        active_e: counts.active[1],
        active_lte: counts.active[2],
        converged: report.converged,
        min_rate_feasible: report.min_rate_feasible,
        iterations: report.iterations,
        gains_fingerprint: format!("{fingerprint:016x}"),
        wall_ms,
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub scheme: Scheme,
    pub sweep: String,
    pub drop: usize,
    pub cell: usize,
    pub iteration: usize,
    pub tau: f64,
    /// Per-user multipliers joined with `;`.
    pub delta: String,
    pub dual_objective: f64,
    pub primal_objective: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct ExperimentOutput {
    pub rows: Vec<ResultRow>,
    pub trace: Vec<TraceRecord>,
}

fn run_drop(spec: &ExperimentSpec, scenarios: &[ScenarioConfig], sweep_index: usize, drop: usize) -> Result<ExperimentOutput> {
    let scenario = &scenarios[sweep_index];
    let gains = spec.point_gains(scenarios, sweep_index, drop)?;
    let fingerprint = gains.fingerprint();
    let label = spec.sweep.label(sweep_index);
    let mut out = ExperimentOutput::default();
    for &scheme in &spec.schemes {
        let start = Instant::now();
        let (alloc, report) = scheme.run_traced(scenario, &gains, spec.trace)?;
        let wall = spec.timing.then(|| start.elapsed().as_secs_f64() * 1e3);
        out.rows.push(make_row(scheme, label.clone(), drop, fingerprint, &alloc, &report, wall));
        for (cell, rep) in report.cells.iter().enumerate() {
            for t in &rep.trace {
                out.trace.push(TraceRecord {
                    scheme,
                    sweep: label.clone(),
                    drop,
                    cell,
                    iteration: t.iteration,
                    tau: t.tau,
                    delta: t.delta.iter().map(|d| d.to_string()).collect::<Vec<_>>().join(";"),
                    dual_objective: t.dual_objective,
                    primal_objective: t.primal_objective,
                });
            }
        }
    }
    Ok(out)
}

/// Runs every (sweep point, drop) in parallel on `spec.workers` threads.
/// Rows come out ordered by sweep point, drop, then scheme.
pub fn run_experiment(spec: &ExperimentSpec) -> Result<ExperimentOutput> {
    spec.validate()?;
    let scenarios: Vec<ScenarioConfig> = (0..spec.sweep.len()).map(|i| spec.sweep.apply(&spec.scenario, i)).collect();
    let jobs: Vec<(usize, usize)> = (0..scenarios.len())
        .flat_map(|i| (0..spec.drops).map(move |d| (i, d)))
        .collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(spec.workers.max(1))
        .build()
        .map_err(|e| Error::InvalidScenario(vec![format!("thread pool: {e}")]))?;
    let parts: Vec<Result<ExperimentOutput>> = pool.install(|| {
        jobs.par_iter()
            .map(|&(i, d)| run_drop(spec, &scenarios, i, d))
            .collect()
    });
    let mut out = ExperimentOutput::default();
    for part in parts {
        let part = part?;
        out.rows.extend(part.rows);
        out.trace.extend(part.trace);
    }
    Ok(out)
}

const ROWS_COMMENT: &str = "# floats use the shortest decimal that round-trips to the same f64; wall_ms is empty unless timing is on";

fn io_err(path: &Path, e: impl Into<std::io::Error>) -> Error {
    Error::Io {
        path: path.to_path_buf(),
        source: e.into(),
    }
}

fn csv_err(path: &Path, e: csv::Error) -> Error {
    let line = e.position().map_or(0, |p| p.line() as usize);
    match e.into_kind() {
        csv::ErrorKind::Io(source) => Error::Io {
            path: path.to_path_buf(),
            source,
        },
        other => Error::Parse {
            path: path.to_path_buf(),
            line,
            msg: format!("{other:?}"),
        },
    }
}

fn to_csv<T: Serialize>(comment: &str, header: &[&str], records: &[T]) -> std::result::Result<Vec<u8>, csv::Error> {
    let mut buf = Vec::new();
    buf.extend_from_slice(comment.as_bytes());
    buf.push(b'\n');
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(buf);
    w.write_record(header)?;
    for r in records {
        w.serialize(r)?;
    }
    w.into_inner().map_err(|e| csv::Error::from(e.into_error()))
}

const ROW_HEADER: [&str; 17] = [
    "scheme",
    "sweep",
    "drop",
    "objective",
    "dual_objective",
    "min_user_rate",
    "units_v",
    "units_e",
    "units_lte",
    "active_v",
    "active_e",
    "active_lte",
    "converged",
    "min_rate_feasible",
    "iterations",
    "gains_fingerprint",
    "wall_ms",
];

pub fn rows_to_csv(rows: &[ResultRow]) -> Vec<u8> {
    to_csv(ROWS_COMMENT, &ROW_HEADER, rows).expect("in-memory csv write")
}

pub fn emit_csv(rows: &[ResultRow], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, rows_to_csv(rows)).map_err(|e| io_err(path, e))
}

pub fn rows_from_csv(data: &[u8], path: &Path) -> Result<Vec<ResultRow>> {
    let mut r = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(data);
    r.deserialize().map(|row| row.map_err(|e| csv_err(path, e))).collect()
}

pub fn parse_csv(path: impl AsRef<Path>) -> Result<Vec<ResultRow>> {
    let path = path.as_ref();
    let data = std::fs::read(path).map_err(|e| io_err(path, e))?;
    rows_from_csv(&data, path)
}

pub fn trace_to_csv(trace: &[TraceRecord]) -> Vec<u8> {
    let header = [
        "scheme",
        "sweep",
        "drop",
        "cell",
        "iteration",
        "tau",
        "delta",
        "dual_objective",
        "primal_objective",
    ];
    to_csv("# dual solver iterations; delta lists per-user multipliers", &header, trace).expect("in-memory csv write")
}

/// Mean and sample standard deviation of one (scheme, sweep point).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub scheme: Scheme,
    pub sweep: String,
    pub drops: usize,
    pub mean_objective: f64,
    pub std_objective: f64,
    pub mean_min_user_rate: f64,
    pub mean_v_fraction: f64,
    pub mean_relative_gap: f64,
    pub converged_fraction: f64,
    pub feasible_fraction: f64,
}

pub fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// One summary row per (scheme, sweep point), in first-appearance order.
pub fn summarize(rows: &[ResultRow]) -> Vec<SummaryRow> {
    let mut keys: Vec<(Scheme, String)> = Vec::new();
    for r in rows {
        let key = (r.scheme, r.sweep.clone());
        if !keys.contains(&key) {
            keys.push(key);
        }
    }
    keys.into_iter()
        .map(|(scheme, sweep)| {
            let group: Vec<&ResultRow> = rows.iter().filter(|r| r.scheme == scheme && r.sweep == sweep).collect();
            let col = |f: fn(&ResultRow) -> f64| group.iter().map(|r| f(r)).collect::<Vec<f64>>();
            let (mean_objective, std_objective) = mean_std(&col(|r| r.objective));
            let n = group.len() as f64;
            SummaryRow {
                scheme,
                sweep,
                drops: group.len(),
                mean_objective,
                std_objective,
                mean_min_user_rate: mean_std(&col(|r| r.min_user_rate)).0,
                mean_v_fraction: mean_std(&col(ResultRow::v_fraction)).0,
                mean_relative_gap: mean_std(&col(ResultRow::relative_gap)).0,
                converged_fraction: group.iter().filter(|r| r.converged).count() as f64 / n,
                feasible_fraction: group.iter().filter(|r| r.min_rate_feasible).count() as f64 / n,
            }
        })
        .collect()
}

pub fn summary_to_csv(summary: &[SummaryRow]) -> Vec<u8> {
    let header = [
        "scheme",
        "sweep",
        "drops",
        "mean_objective",
        "std_objective",
        "mean_min_user_rate",
        "mean_v_fraction",
        "mean_relative_gap",
        "converged_fraction",
        "feasible_fraction",
    ];
    to_csv("# per (scheme, sweep point); std is the sample standard deviation", &header, summary)
        .expect("in-memory csv write")
}

/// `<out>.summary.csv` and `<out>.trace.csv` next to the main file.
pub fn sibling_path(out: &Path, suffix: &str) -> PathBuf {
    let stem = out.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    out.with_file_name(format!("{stem}.{suffix}.csv"))
}

/// Writes rows, summary and (if present) trace; returns the paths written.
pub fn write_outputs(output: &ExperimentOutput, out: &Path) -> Result<Vec<PathBuf>> {
    emit_csv(&output.rows, out)?;
    let summary = sibling_path(out, "summary");
    std::fs::write(&summary, summary_to_csv(&summarize(&output.rows))).map_err(|e| io_err(&summary, e))?;
    let mut written = vec![out.to_path_buf(), summary];
    if !output.trace.is_empty() {
        let trace = sibling_path(out, "trace");
        std::fs::write(&trace, trace_to_csv(&output.trace)).map_err(|e| io_err(&trace, e))?;
        written.push(trace);
    }
    Ok(written)
}
