//! Acceptance suite. Prints one PASS/FAIL line per criterion.
//!
//! Criteria listed in `KNOWN_FAILURES` still run at full tolerance and print
//! FAIL; they only stop the process from exiting non-zero. Set
//! `ACCEPTANCE_ONLY=name,name` to run a subset.

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::time::Instant;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use vsqs_core::evolve::{initial_state, propagate_fixed, target_spectrum, IntegratorConfig};
use vsqs_core::experiments::*;
use vsqs_core::operators::{apply_terms, build_dense, exact_ground, Axis, PauliTerm, TermList};
use vsqs_core::problems::{
    data_dir, format_hamiltonian, generate_triangular_ising, load_hamiltonian, parse_hamiltonian, AnnealProblem,
    NoiseSpec,
};
use vsqs_core::schedule::{assemble, Parameterization, Role, ScheduleParams, ScheduleSpec};
use vsqs_core::vsqs::{minimize, time_accounting, InitStrategy, Objective, ObjectiveMode, OptimizerConfig};

const KNOWN_FAILURES: &[&str] = &["step_halving", "h2_vsqs_knee", "cobyla_trace"];

const H2_GRID: [&str; 12] =
    ["0.50", "0.75", "1.00", "1.25", "1.50", "1.80", "2.00", "2.50", "2.80", "3.00", "3.30", "3.60"];

type Outcome = (bool, String);

/// Largest norm drift seen by any propagation in the suite.
#[derive(Default)]
struct Drift(f64);

impl Drift {
    fn see(&mut self, d: f64) {
        self.0 = self.0.max(d);
    }
}

fn load(name: &str) -> AnnealProblem {
    AnnealProblem::from_file(data_dir().join(name)).unwrap()
}

fn h2(d: &str) -> AnnealProblem {
    load(&format!("h2_d{d}.ham"))
}

fn tca(p: &AnnealProblem, m: &Method, grid: &[f64], resolution: f64, drift: &mut Drift) -> TcaResult {
    let r = compute_tca(p, m, &IntegratorConfig::default(), grid, resolution, CHEMICAL_ACCURACY).unwrap();
    drift.see(r.max_norm_drift);
    r
}

fn show(t: Option<f64>) -> String {
    t.map_or("none".into(), |t| format!("{t:.3}"))
}

fn random_terms(rng: &mut ChaCha8Rng) -> TermList {
    let n = rng.gen_range(1..=6);
    let count = rng.gen_range(1..=12);
    let terms: Vec<PauliTerm> = (0..count)
        .map(|_| {
            let factors: Vec<(usize, Axis)> = (0..n)
                .filter_map(|q| match rng.gen_range(0..4) {
                    0 => None,
                    1 => Some((q, Axis::X)),
                    2 => Some((q, Axis::Y)),
                    _ => Some((q, Axis::Z)),
                })
                .collect();
            PauliTerm::from_factors(rng.gen_range(-1.0..1.0), &factors).unwrap()
        })
        .collect();
    TermList::new(n, terms).unwrap()
}

fn operator_oracle(_: &mut Drift) -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let (mut worst_apply, mut worst_residual, mut worst_ortho) = (0.0f64, 0.0f64, 0.0f64);
    for _ in 0..100 {
        let terms = random_terms(&mut rng);
        let mut psi: Vec<Complex64> =
            (0..terms.dim()).map(|_| Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))).collect();
        let norm = psi.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        psi.iter_mut().for_each(|z| *z /= norm);
        let fast = apply_terms(&terms, &psi).unwrap();
        let dense = build_dense(&terms).unwrap() * nalgebra::DVector::from_column_slice(&psi);
        for (a, b) in fast.iter().zip(dense.iter()) {
            worst_apply = worst_apply.max((a - b).norm());
        }
        let g = exact_ground(&terms, 1e-8).unwrap();
        for (i, v) in g.ground_space.iter().enumerate() {
            let hv = apply_terms(&terms, v).unwrap();
            let r = hv.iter().zip(v).map(|(a, b)| (a - b * g.ground_energy).norm_sqr()).sum::<f64>().sqrt();
            worst_residual = worst_residual.max(r);
            for (j, w) in g.ground_space.iter().enumerate() {
                let dot: Complex64 = v.iter().zip(w).map(|(a, b)| a.conj() * b).sum();
                let expect = if i == j { 1.0 } else { 0.0 };
                worst_ortho = worst_ortho.max((dot - expect).norm());
            }
        }
    }
    (
        worst_apply <= 1e-12 && worst_residual < 1e-8 && worst_ortho < 1e-10,
        format!(
            "max |Hψ diff| {worst_apply:.1e}, max residual {worst_residual:.1e}, max orthonormality {worst_ortho:.1e}"
        ),
    )
}

fn step_halving(drift: &mut Drift) -> Outcome {
    let p = h2("1.00");
    let target = target_spectrum(&p).unwrap();
    let psi0 = initial_state(&p).unwrap();
    let s = vsqs_core::schedule::ScheduleSet::standard_asp(12.9, p.term_counts());
    let mut energy = |steps| {
        let r = propagate_fixed(&p, &s, steps, &psi0, Some(&target)).unwrap();
        drift.see(r.norm_drift);
        r.energy
    };
    // Richardson extrapolation of two fine runs; a single very fine run carries
    // more rounding than the difference being measured
    let reference = (4.0 * energy(1290 * 64) - energy(1290 * 32)) / 3.0;
    let coarse = (energy(1290) - reference).abs();
    let fine = (energy(2580) - reference).abs();
    (coarse >= 4.0 * fine, format!("H2 T=12.9: error {coarse:.3e} -> {fine:.3e}, ratio {:.4}", coarse / fine))
}

fn h2_standard_tca(drift: &mut Drift) -> Outcome {
    let r = tca(&h2("1.00"), &Method::Standard, &linear_grid(1.0, 40.0, 40), 0.01, drift);
    let ok = r.t_ca.is_some_and(|t| (6.5..=19.4).contains(&t));
    (ok, format!("T_CA {} (band [6.5, 19.4])", show(r.t_ca)))
}

fn h2_vsqs_knee(drift: &mut Drift) -> Outcome {
    let p = h2("1.00");
    let grid = linear_grid(0.05, 2.0, 40);
    let at = |bound: f64, drift: &mut Drift| {
        tca(&p, &Method::Vsqs(VsqsMethod::new((5, 1, 1), bound)), &grid, 0.01, drift).t_ca
    };
    let (b10, b1, b100) = (at(10.0, drift), at(1.0, drift), at(100.0, drift));
    let ok10 = b10.is_some_and(|t| (0.1..=0.3).contains(&t));
    let ok1 = b1.is_some_and(|t| (0.55..=1.65).contains(&t));
    let ok100 = matches!((b10, b100), (Some(a), Some(b)) if (a - b).abs() <= 0.01);
    (
        ok10 && ok1 && ok100,
        format!(
            "bound 10: {} [{}], bound 1: {} [{}], bound 100: {} [{}]",
            show(b10),
            verdict(ok10),
            show(b1),
            verdict(ok1),
            show(b100),
            verdict(ok100)
        ),
    )
}

fn verdict(ok: bool) -> &'static str {
    if ok {
        "ok"
    } else {
        "fail"
    }
}

fn h2_ordering(drift: &mut Drift) -> Outcome {
    let standard_grid = linear_grid(0.5, 200.0, 400);
    let vsqs_grid = linear_grid(0.05, 2.0, 40);
    let groupings = [(5, 1, 1), (5, 2, 4), (10, 2, 4)];
    let mut ok = true;
    let mut parts = Vec::new();
    for d in H2_GRID {
        let p = h2(d);
        let Some(t_std) = tca(&p, &Method::Standard, &standard_grid, 0.05, drift).t_ca else {
            parts.push(format!("d={d}: standard never"));
            continue;
        };
        let mut worst = 0.0f64;
        for g in groupings {
            let grid: Vec<f64> = vsqs_grid.iter().copied().filter(|t| *t < t_std).collect();
            let t = if grid.is_empty() {
                None
            } else {
                tca(&p, &Method::Vsqs(VsqsMethod::new(g, 10.0)), &grid, 0.01, drift).t_ca
            };
            match t {
                Some(t) if t < t_std => worst = worst.max(t),
                _ => {
                    ok = false;
                    worst = f64::INFINITY;
                }
            }
        }
        parts.push(format!("d={d}: {worst:.2}<{t_std:.2}"));
    }
    (ok, format!("max VSQS T_CA < standard T_CA per d: {}", parts.join(", ")))
}

fn p4_ordering(drift: &mut Drift) -> Outcome {
    let p = load("p4_d2.00.ham");
    let vsqs = |g| {
        let mut m = VsqsMethod::new(g, 10.0);
        m.optimizer = OptimizerConfig { tolerance: 1e-9, max_iterations: 400, ..Default::default() };
        Method::Vsqs(m)
    };
    // coarse grids, no bisection
    let runs: [(&str, Method, Vec<f64>); 4] = [
        ("(5,6,10)", vsqs((5, 6, 10)), vec![1.0, 2.0]),
        ("(5,1,1)", vsqs((5, 1, 1)), vec![5.0, 10.0, 20.0, 40.0]),
        ("(2,1,1)", vsqs((2, 1, 1)), vec![20.0, 50.0, 100.0, 200.0]),
        ("standard", Method::Standard, linear_grid(100.0, 600.0, 21)),
    ];
    let mut times = Vec::new();
    let mut parts = Vec::new();
    for (label, m, grid) in &runs {
        let t = tca(&p, m, grid, f64::INFINITY, drift).t_ca;
        parts.push(format!("{label} {}", show(t)));
        times.push(t.unwrap_or(f64::INFINITY));
    }
    let ordered = times.windows(2).all(|w| w[0] < w[1]) && times[3].is_finite();
    let bands = times[0] <= 2.0 && times[3] >= 200.0;
    (ordered && bands, format!("T_CA grid points: {}", parts.join(", ")))
}

fn ising(drift: &mut Drift) -> Outcome {
    let p = load("ising_n8_seed1.ham");
    let mut m = VsqsMethod::new((5, 1, 1), 1000.0);
    m.navigator_groups = 7;
    m.mode = ObjectiveMode::NegSuccess;
    m.optimizer = OptimizerConfig { max_iterations: 100, ..Default::default() };
    m.init = InitStrategy::AspCurve { jitter: 0.05, navigator_spread: 1.0, seed: 0 };
    let r = run_point(&p, &Method::Vsqs(m), 0.01, &IntegratorConfig::default()).unwrap();
    drift.see(r.norm_drift);
    let p_vsqs = r.success_probability.unwrap();
    let grid = linear_grid(2.5, 47.5, 19);
    let rows = sweep_energy_vs_t(&p, &Method::Standard, &grid, &IntegratorConfig::default()).unwrap();
    let mut best_std = (0.0, 0.0);
    for row in &rows {
        let r = row.outcome.as_ref().unwrap();
        drift.see(r.norm_drift);
        let s = r.success_probability.unwrap();
        if s > best_std.1 {
            best_std = (row.total_time, s);
        }
    }
    (
        p_vsqs > 0.99 && best_std.1 < 0.99,
        format!("VSQS S=5 T=0.01: p={p_vsqs:.5}; standard max p over T<50: {:.4} at T={}", best_std.1, best_std.0),
    )
}

fn cobyla_trace(drift: &mut Drift) -> Outcome {
    let p = load("ising_n8_seed1.ham");
    let mut m = VsqsMethod::new((2, 1, 1), 10.0);
    m.navigator_groups = 7;
    m.mode = ObjectiveMode::NegSuccess;
    m.optimizer = OptimizerConfig::simplex(1.0, 100);
    m.init = InitStrategy::AspCurve { jitter: 0.05, navigator_spread: 1.0, seed: 0 };
    let r = run_point(&p, &Method::Vsqs(m), 1.0, &IntegratorConfig::default()).unwrap();
    drift.see(r.norm_drift);
    let s = r.success_probability.unwrap();
    (
        s >= 0.5 && r.iterations <= 100,
        format!("p={s:.4} after {} iterations ({} evaluations)", r.iterations, r.evaluations),
    )
}

fn accounting(_: &mut Drift) -> Outcome {
    let ok = [1usize, 2, 10, 100].iter().all(|&m| {
        let a = time_accounting(0.759, 1.0, 24, m, 0.99).unwrap();
        a.n_add == 4 && a.total_anneal_time == (24 * m + 4) as f64
    });
    (ok, "N_add = 4, total = 24M + 4 for M in {1, 2, 10, 100}".into())
}

fn noise(drift: &mut Drift) -> Outcome {
    let p = h2("1.00");
    let mut ok = true;
    let mut parts = Vec::new();
    for (mean, std, seed) in [(0.0, 0.1, 0u64), (0.2, 0.2, 1000)] {
        let rows = noise_histogram(
            &p,
            50,
            NoiseSpec { mean, std, seed },
            &NoiseExperiment::default(),
            &IntegratorConfig::default(),
        )
        .unwrap();
        rows.iter().for_each(|r| drift.see(r.norm_drift));
        let within = rows.iter().filter(|r| r.failure.is_none() && r.vsqs_within).count();
        let e_std: Vec<f64> = rows.iter().map(|r| r.e_standard).collect();
        let e_vsqs: Vec<f64> = rows.iter().map(|r| r.e_vsqs).collect();
        let ratio = sample_std(&e_std) / sample_std(&e_vsqs);
        ok &= within * 100 >= 95 * rows.len() && ratio >= 10.0;
        parts.push(format!("N({mean}, {std}): {within}/50 within CA, stddev ratio {ratio:.1e}"));
    }
    (ok, parts.join("; "))
}

fn appendix_b(drift: &mut Drift) -> Outcome {
    let rows =
        sweep_energy_vs_t(&h2("2.50"), &Method::Standard, &linear_grid(1.0, 40.0, 40), &IntegratorConfig::default())
            .unwrap();
    let energies: Vec<f64> = rows
        .iter()
        .map(|r| {
            let r = r.outcome.as_ref().unwrap();
            drift.see(r.norm_drift);
            r.energy
        })
        .collect();
    let rises = energies.windows(2).filter(|w| w[1] > w[0]).count();
    (rises > 0, format!("{rises} rises in E(T) over 40 points"))
}

fn property_suite(drift: &mut Drift) -> Outcome {
    let mut failures = Vec::new();
    let mut rng = ChaCha8Rng::seed_from_u64(7);

    for _ in 0..200 {
        let split = rng.gen_range(1..=7);
        let total = rng.gen_range(0.01..50.0);
        let param = if rng.gen_bool(0.5) { Parameterization::BangBang } else { Parameterization::PiecewiseLinear };
        let spec = ScheduleSpec::new((split, 2, 3), 2, 10.0, [4, 5, 3]).unwrap().with_parameterization(param);
        let params: Vec<f64> = spec.bounds(total).iter().map(|(lo, hi)| rng.gen_range(*lo..=*hi)).collect();
        let set = assemble(&spec, &ScheduleParams(params), total).unwrap();
        for role in Role::ALL {
            let (start, end) = role.endpoints();
            for g in 0..spec.groups(role) {
                if set.group_value(role, g, 0.0).unwrap() != start || set.group_value(role, g, total).unwrap() != end {
                    failures.push(format!("boundary {role:?} S={split} T={total}"));
                }
            }
        }
    }

    let p = h2("2.50");
    let target = target_spectrum(&p).unwrap();
    let spec = ScheduleSpec::new((5, 1, 1), 0, 10.0, p.term_counts()).unwrap();
    for _ in 0..50 {
        let total = rng.gen_range(0.05..3.0);
        let params: Vec<f64> = spec.bounds(total).iter().map(|(lo, hi)| rng.gen_range(*lo..=*hi)).collect();
        let set = assemble(&spec, &ScheduleParams(params), total).unwrap();
        let r = propagate_fixed(&p, &set, 400, &initial_state(&p).unwrap(), Some(&target)).unwrap();
        drift.see(r.norm_drift);
        if r.energy < target.ground_energy - 1e-9 {
            failures.push(format!("variational floor at T={total}"));
        }
    }

    let p = h2("1.00");
    let spec = ScheduleSpec::new((5, 1, 1), 0, 2.0, p.term_counts()).unwrap();
    let obj = Objective::new(&p, &spec, 0.3, &IntegratorConfig::default(), ObjectiveMode::Energy).unwrap();
    let bounds = spec.bounds(0.3);
    let x0 = InitStrategy::default().initial_params(&spec, 0.3).unwrap();
    for cfg in [OptimizerConfig { max_iterations: 30, ..Default::default() }, OptimizerConfig::simplex(1e-3, 80)] {
        let seen = std::sync::Mutex::new(Vec::new());
        let f = |x: &[f64]| {
            seen.lock().unwrap().push(x.to_vec());
            obj.evaluate(x)
        };
        let r = minimize(&f, &x0, &bounds, &cfg).unwrap();
        if r.objective_trace.windows(2).any(|w| w[1].1 > w[0].1) {
            failures.push(format!("monotone trace {:?}", cfg.method));
        }
        let inside =
            seen.into_inner().unwrap().iter().all(|x| x.iter().zip(&bounds).all(|(v, (lo, hi))| v >= lo && v <= hi));
        if !inside {
            failures.push(format!("bound feasibility {:?}", cfg.method));
        }
    }

    let mut files: Vec<PathBuf> = H2_GRID.iter().map(|d| data_dir().join(format!("h2_d{d}.ham"))).collect();
    files.push(data_dir().join("p4_d2.00.ham"));
    files.push(data_dir().join("ising_n8_seed1.ham"));
    for path in &files {
        let file = load_hamiltonian(path).unwrap();
        let back = parse_hamiltonian(&format_hamiltonian(&file), None).unwrap();
        if back != file {
            failures.push(format!("round trip {}", path.display()));
        }
    }

    let csv = || {
        let rows = sweep_energy_vs_t(
            &h2("1.50"),
            &Method::Vsqs(VsqsMethod::new((5, 1, 1), 10.0)),
            &[0.2, 1.0],
            &IntegratorConfig::default(),
        )
        .unwrap();
        sweep_table(&rows).to_csv()
    };
    if csv() != csv() {
        failures.push("sweep determinism".into());
    }
    let ising = || format_hamiltonian(&generate_triangular_ising(4, 1).unwrap().to_hamiltonian_file());
    if ising() != ising() {
        failures.push("ising generation determinism".into());
    }

    let ok = failures.is_empty();
    let detail = if ok {
        "boundaries, variational floor, monotone trace, bound feasibility, round trip, determinism".to_string()
    } else {
        failures.join("; ")
    };
    (ok, detail)
}

fn main() {
    let only: Option<Vec<String>> =
        std::env::var("ACCEPTANCE_ONLY").ok().map(|s| s.split(',').map(|x| x.trim().to_string()).collect());
    let criteria: [(&str, fn(&mut Drift) -> Outcome); 11] = [
        ("operator_oracle", operator_oracle),
        ("step_halving", step_halving),
        ("h2_standard_tca", h2_standard_tca),
        ("h2_vsqs_knee", h2_vsqs_knee),
        ("h2_ordering", h2_ordering),
        ("p4_ordering", p4_ordering),
        ("ising_success", ising),
        ("cobyla_trace", cobyla_trace),
        ("time_accounting", accounting),
        ("control_noise", noise),
        ("appendix_b", appendix_b),
    ];
    let mut drift = Drift::default();
    let mut results = BTreeMap::new();
    let mut report = |name: &str, (ok, detail): Outcome, secs: f64| {
        let known = KNOWN_FAILURES.contains(&name);
        let tag = match (ok, known) {
            (true, false) => "PASS",
            (true, true) => "XPASS",
            (false, true) => "FAIL (known)",
            (false, false) => "FAIL",
        };
        println!("{tag:<12} {name:<16} {secs:>7.1}s  {detail}");
        results.insert(name.to_string(), ok || known);
    };
    let selected = |name: &str| only.as_ref().map_or(true, |o| o.iter().any(|x| x == name));
    for (name, run) in criteria {
        if !selected(name) {
            continue;
        }
        let start = Instant::now();
        let outcome = run(&mut drift);
        report(name, outcome, start.elapsed().as_secs_f64());
    }
    if selected("property_suite") {
        let start = Instant::now();
        let outcome = property_suite(&mut drift);
        report("property_suite", outcome, start.elapsed().as_secs_f64());
    }
    report("unitarity", (drift.0 < 1e-7, format!("max norm drift {:.1e} over all runs above", drift.0)), 0.0);
    if results.values().any(|ok| !ok) {
        std::process::exit(1);
    }
}
