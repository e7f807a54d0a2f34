//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero when any criterion fails.

use std::process::ExitCode;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use statrs::distribution::{ContinuousCDF, StudentsT};

use hetnet_core::dual_solver::{build_problems, solve, solve_with, CellProblem, PairingRule, SolveOptions};
use hetnet_core::experiment::{
    drop_gains, rows_to_csv, run_experiment, summary_to_csv, summarize, trace_to_csv, write_outputs,
    ExperimentPreset, ExperimentSpec, ResultRow, Scheme, Sweep,
};
use hetnet_core::baselines::solve_band_restricted;
use hetnet_core::greedy::solve_greedy;
use hetnet_core::model::{Band, ScenarioConfig};
use hetnet_core::oracle::exhaustive_solve;
use hetnet_core::rates::{equivalent_gain, power_split, LinkMode};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Lower end of the two-sided 95% t interval of the mean.
fn ci_lower(xs: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let m = mean(xs);
    let var = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0);
    let t = StudentsT::new(0.0, 1.0, n - 1.0).unwrap().inverse_cdf(0.975);
    m - t * (var / n).sqrt()
}

fn objectives(rows: &[ResultRow], scheme: Scheme, sweep: &str) -> Vec<f64> {
    rows.iter()
        .filter(|r| r.scheme == scheme && r.sweep == sweep)
        .map(|r| r.objective)
        .collect()
}

fn preset_spec(name: &str) -> ExperimentSpec {
    ExperimentPreset::builtin(name).unwrap().into_spec(&ScenarioConfig::baseline())
}

fn oracle_equivalence() -> Outcome {
    let start = Instant::now();
    let (mut worst_dual, mut worst_greedy): (f64, f64) = (0.0, 0.0);
    for inst in 0..20usize {
        let users = 1 + inst % 2;
        let mut s = ScenarioConfig::baseline().for_each_cell(|c| {
            c.num_users = users;
            c.num_relays = 1;
        });
        s.subcarriers_per_band = 1;
        s.r_min = 0.0;
        let g = drop_gains(&s, 1000, 0, inst).unwrap();
        let (_, exact) = exhaustive_solve(&s, &g).unwrap();
        let (_, dual) = solve(&s, &g).unwrap();
        let (_, greedy) = solve_greedy(&s, &g).unwrap();
        worst_dual = worst_dual.max((exact - dual.objective) / exact);
        worst_greedy = worst_greedy.max((exact - greedy.objective) / exact);
    }
    let elapsed = start.elapsed();
    outcome(
        worst_dual <= 0.05 && worst_greedy <= 0.10 && elapsed < Duration::from_secs(60),
        format!(
            "worst shortfall dual {worst_dual:.2e}, greedy {worst_greedy:.2e}, {:.1} s",
            elapsed.as_secs_f64()
        ),
    )
}

/// Recomputes the pair gain straight from the gain tables.
fn raw_alpha(p: &CellProblem, first: usize, second: usize, user: usize, relay: Option<usize>) -> f64 {
    let a_fk = p.gains.fk(first, user);
    match relay {
        None => a_fk,
        Some(m) => {
            let a_fm = p.gains.fm(first, m);
            let a_mk = p.gains.mk(second, m, user);
            a_fm * a_mk / (a_fm + a_mk - a_fk)
        }
    }
}

fn kkt_residuals() -> Outcome {
    let (mut worst_kkt, mut worst_budget, mut worst_rate): (f64, f64, f64) = (0.0, 0.0, 0.0);
    let (mut converged, mut feasible, mut runs) = (0, 0, 0);
    for r_min in [0.0, 0.02, 0.05, 0.1, 3.0] {
        for drop in 0..8 {
            let mut s = ScenarioConfig::baseline().for_each_cell(|c| {
                c.num_users = 2;
                c.num_relays = 2;
            });
            s.subcarriers_per_band = 4;
            s.r_min = r_min;
            let g = drop_gains(&s, 2000, 0, drop).unwrap();
            let problems = build_problems(&s, &g).unwrap();
            for rule in [PairingRule::Optimal, PairingRule::Greedy] {
                let (alloc, rep) = solve_with(&s, &g, SolveOptions::new(rule)).unwrap();
                runs += 1;
                for ((cell, p), cr) in alloc.cells.iter().zip(&problems).zip(&rep.cells) {
                    let used: f64 = cell.pairs.iter().map(|q| q.power).sum();
                    worst_budget = worst_budget.max((used - p.power_budget).abs() / p.power_budget);
                    if cr.converged {
                        for q in cell.pairs.iter().filter(|q| q.power > 0.0) {
                            let a = raw_alpha(p, q.first, q.second, q.user, q.relay);
                            let lhs = (1.0 + cr.delta[q.user]) * 0.5 * p.weights[q.user] * a / (1.0 + a * q.power);
                            worst_kkt = worst_kkt.max((lhs - cr.tau).abs());
                        }
                    }
                    if cr.min_rate_feasible {
                        let mut rates = vec![0.0; p.users()];
                        for q in &cell.pairs {
                            let a = raw_alpha(p, q.first, q.second, q.user, q.relay);
                            rates[q.user] += 0.5 * p.weights[q.user] * (1.0 + a * q.power).log2();
                        }
                        for r in rates {
                            worst_rate = worst_rate.max(p.r_min - r);
                        }
                    }
                }
                converged += rep.converged as usize;
                feasible += rep.min_rate_feasible as usize;
            }
        }
    }
    outcome(
        worst_kkt < 1e-6 && worst_budget <= 1e-3 && worst_rate <= 1e-6 && converged > 0 && feasible > 0,
        format!(
            "{runs} runs ({converged} converged, {feasible} feasible): stationarity {worst_kkt:.2e}, \
             budget {worst_budget:.2e}, rate shortfall {worst_rate:.2e}"
        ),
    )
}

fn algebraic_identities() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3000);
    let (mut worst_split, mut worst_alpha): (f64, f64) = (0.0, 0.0);
    let mut relay_cases = 0;
    for _ in 0..10_000 {
        let a_fm = 10f64.powf(rng.random_range(-3.0..3.0));
        let a_mk = 10f64.powf(rng.random_range(-3.0..3.0));
        let a_fk = 10f64.powf(rng.random_range(-3.0..3.0));
        let p = 10f64.powf(rng.random_range(-2.0..3.0));
        for mode in [LinkMode::Direct, LinkMode::Relay] {
            if let Ok((bs, relay)) = power_split(p, a_fm, a_mk, a_fk, mode) {
                worst_split = worst_split.max(((bs + relay) - p).abs() / p);
            }
        }
        if let Ok(alpha) = equivalent_gain(a_fm, a_mk, a_fk, LinkMode::Relay) {
            relay_cases += 1;
            let lhs = alpha * (a_fm + a_mk - a_fk);
            let rhs = a_fm * a_mk;
            worst_alpha = worst_alpha.max((lhs - rhs).abs() / rhs);
        }
    }
    outcome(
        worst_split <= 1e-12 && worst_alpha <= 1e-12 && relay_cases > 0,
        format!("split {worst_split:.2e}, relay gain {worst_alpha:.2e} over {relay_cases} relay triples"),
    )
}

fn scheme_ordering() -> Outcome {
    let start = Instant::now();
    let mut spec = preset_spec("fig3");
    spec.schemes = vec![Scheme::Dual, Scheme::NoPairing, Scheme::Ep];
    spec.sweep = Sweep::Subcarriers { values: vec![8] };
    spec.drops = 100;
    let rows = run_experiment(&spec).unwrap().rows;
    let label = spec.sweep.label(0);
    let dual = objectives(&rows, Scheme::Dual, &label);
    let np = objectives(&rows, Scheme::NoPairing, &label);
    let ep = objectives(&rows, Scheme::Ep, &label);
    let pairing_gap: Vec<f64> = dual.iter().zip(&np).map(|(a, b)| a - b).collect();
    let power_gap: Vec<f64> = dual.iter().zip(&ep).map(|(a, b)| a - b).collect();
    let (lo_pair, lo_power) = (ci_lower(&pairing_gap), ci_lower(&power_gap));
    let elapsed = start.elapsed();
    let pass = mean(&dual) >= mean(&np)
        && mean(&dual) >= mean(&ep)
        && mean(&power_gap) >= mean(&pairing_gap)
        && lo_pair > 0.0
        && lo_power > 0.0
        && elapsed < Duration::from_secs(600);
    outcome(
        pass,
        format!(
            "means dual {:.4}, no_pairing {:.4}, ep {:.4}; gap CI lower bounds pairing {lo_pair:.4}, power {lo_power:.4}; {:.1} s",
            mean(&dual),
            mean(&np),
            mean(&ep),
            elapsed.as_secs_f64()
        ),
    )
}

fn multiband_benefit() -> Outcome {
    let mut spec = preset_spec("fig5");
    spec.sweep = Sweep::Subcarriers { values: vec![8] };
    spec.drops = 100;
    let rows = run_experiment(&spec).unwrap().rows;
    let label = spec.sweep.label(0);
    let dual = objectives(&rows, Scheme::Dual, &label);
    let mut pass = true;
    let mut parts = vec![format!("multiband {:.4}", mean(&dual))];
    for other in [Scheme::EOnly, Scheme::LteOnly] {
        let xs = objectives(&rows, other, &label);
        let gap: Vec<f64> = dual.iter().zip(&xs).map(|(a, b)| a - b).collect();
        let lo = ci_lower(&gap);
        pass &= mean(&dual) > mean(&xs) && lo > 0.0;
        parts.push(format!("{} {:.4} (gap CI lower {lo:.4})", other.name(), mean(&xs)));
    }
    outcome(pass, parts.join(", "))
}

fn band_vs_distance() -> Outcome {
    let mut spec = preset_spec("fig6");
    spec.drops = 100;
    let rows = run_experiment(&spec).unwrap().rows;
    let fractions: Vec<f64> = (0..spec.sweep.len())
        .map(|i| {
            let label = spec.sweep.label(i);
            mean(&rows.iter().filter(|r| r.sweep == label).map(|r| r.v_fraction()).collect::<Vec<_>>())
        })
        .collect();
    let pass = fractions.windows(2).all(|w| w[1] <= w[0]);
    outcome(pass, format!("V-band fraction per bucket {fractions:.4?}"))
}

fn monotone_in_subcarriers() -> Outcome {
    let mut spec = preset_spec("fig3");
    spec.schemes = vec![Scheme::Dual, Scheme::Greedy, Scheme::Ep, Scheme::NoPairing];
    spec.sweep = Sweep::Subcarriers { values: vec![4, 8, 12, 16] };
    spec.drops = 100;
    let rows = run_experiment(&spec).unwrap().rows;
    let mut pass = true;
    let mut parts = Vec::new();
    for scheme in spec.schemes.clone() {
        let means: Vec<f64> = (0..spec.sweep.len())
            .map(|i| mean(&objectives(&rows, scheme, &spec.sweep.label(i))))
            .collect();
        pass &= means.windows(2).all(|w| w[1] >= w[0]);
        parts.push(format!("{} {means:.3?}", scheme.name()));
    }
    outcome(pass, parts.join("; "))
}

/// Every cell restricted to two bands (V and E), with a binding but mostly
/// attainable min rate; with no min rate the matching relaxation is already
/// tight at every N. Gains are drawn at N=16 and truncated for N=2.
fn duality_gap_shrinks() -> Outcome {
    let mut s = ScenarioConfig::baseline().for_each_cell(|c| {
        c.num_users = 2;
        c.num_relays = 2;
    });
    s.r_min = 0.02;
    s.subcarriers_per_band = 16;
    let bands = [Band::V, Band::E];
    let (mut small, mut large) = (Vec::new(), Vec::new());
    let drops = 40;
    for d in 0..drops {
        let full = drop_gains(&s, 4000, 0, d).unwrap();
        let mut s2 = s.clone();
        s2.subcarriers_per_band = 2;
        let (_, a) = solve_band_restricted(&s2, &full.truncate_subcarriers(2), &bands).unwrap();
        let (_, b) = solve_band_restricted(&s, &full, &bands).unwrap();
        if a.min_rate_feasible && b.min_rate_feasible {
            small.push(a.relative_gap());
            large.push(b.relative_gap());
        }
    }
    let (g2, g16) = (mean(&small), mean(&large));
    outcome(
        !small.is_empty() && g16 < g2,
        format!("mean relative gap N=2 {g2:.3e}, N=16 {g16:.3e} over {} of {drops} drops", small.len()),
    )
}

fn determinism() -> Outcome {
    let mut spec = preset_spec("fig3");
    spec.schemes = Scheme::ALL.to_vec();
    spec.sweep = Sweep::Subcarriers { values: vec![2, 4] };
    spec.drops = 6;
    spec.trace = true;
    let bytes = |spec: &ExperimentSpec| {
        let out = run_experiment(spec).unwrap();
        let mut b = rows_to_csv(&out.rows);
        b.extend(summary_to_csv(&summarize(&out.rows)));
        b.extend(trace_to_csv(&out.trace));
        (b, out)
    };
    let (first, out) = bytes(&spec);
    let (second, _) = bytes(&spec);
    spec.workers = 4;
    let (parallel, par_out) = bytes(&spec);

    let dir = tempfile::tempdir().unwrap();
    let files = |name: &str, o| {
        let paths = write_outputs(o, &dir.path().join(name)).unwrap();
        paths.iter().map(|p| std::fs::read(p).unwrap()).collect::<Vec<_>>()
    };
    let on_disk = files("serial.csv", &out) == files("parallel.csv", &par_out);
    outcome(
        first == second && first == parallel && on_disk,
        format!("{} bytes, repeat and 4-worker runs compared", first.len()),
    )
}

fn main() -> ExitCode {
    let criteria: [(&str, fn() -> Outcome); 9] = [
        ("oracle equivalence", oracle_equivalence),
        ("KKT residual", kkt_residuals),
        ("algebraic identities", algebraic_identities),
        ("scheme ordering", scheme_ordering),
        ("multiband benefit", multiband_benefit),
        ("band vs distance", band_vs_distance),
        ("monotonicity in N", monotone_in_subcarriers),
        ("duality gap shrinkage", duality_gap_shrinks),
        ("determinism", determinism),
    ];
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let o = run();
        failed += !o.pass as usize;
        println!(
            "{} {}. {name}: {} [{:.1} s]",
            if o.pass { "PASS" } else { "FAIL" },
            i + 1,
            o.detail,
            start.elapsed().as_secs_f64()
        );
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{failed} criteria failed");
        ExitCode::FAILURE
    }
}
