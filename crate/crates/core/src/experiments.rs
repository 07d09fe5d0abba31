//! Figure-level drivers: energy sweeps, time to chemical accuracy, bond-length
//! scans, success curves, schedule exports and control-error histograms.
//!
//! Every driver returns plain rows; [`Table`] turns them into CSV and
//! [`write_outputs`] adds the JSON metadata sidecar.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evolve::{initial_state, propagate, target_spectrum, IntegratorConfig};
use crate::problems::{navigator_gucc, perturb_couplings, AnnealProblem, NoiseSpec};
use crate::schedule::{Parameterization, Role, ScheduleSet, ScheduleSpec};
use crate::vsqs::{run_vsqs, InitStrategy, ObjectiveMode, OptimizerConfig};

/// 1 kcal/mol in Hartree.
pub const CHEMICAL_ACCURACY: f64 = 1.5936e-3;

/// How the schedule is chosen at each annealing time.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Method {
    Standard,
    Vsqs(VsqsMethod),
}

impl Method {
    pub fn label(&self) -> String {
        match self {
            Method::Standard => "standard".into(),
            Method::Vsqs(v) => format!("vsqs({},{},{})", v.split_count, v.initial_groups, v.final_groups),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct VsqsMethod {
    pub split_count: usize,
    pub initial_groups: usize,
    pub final_groups: usize,
    pub navigator_groups: usize,
    pub amplitude_bound: f64,
    pub parameterization: Parameterization,
    pub optimizer: OptimizerConfig,
    pub init: InitStrategy,
    pub mode: ObjectiveMode,
    pub restarts: usize,
}

impl Default for VsqsMethod {
    fn default() -> Self {
        VsqsMethod {
            split_count: 5,
            initial_groups: 1,
            final_groups: 1,
            navigator_groups: 0,
            amplitude_bound: 10.0,
            parameterization: Parameterization::PiecewiseLinear,
            optimizer: OptimizerConfig::default(),
            init: InitStrategy::default(),
            mode: ObjectiveMode::Energy,
            restarts: 0,
        }
    }
}

impl VsqsMethod {
    pub fn new((s, i, f): (usize, usize, usize), amplitude_bound: f64) -> Self {
        VsqsMethod { split_count: s, initial_groups: i, final_groups: f, amplitude_bound, ..Default::default() }
    }

    pub fn spec(&self, problem: &AnnealProblem) -> Result<ScheduleSpec> {
        Ok(ScheduleSpec::new(
            (self.split_count, self.initial_groups, self.final_groups),
            self.navigator_groups,
            self.amplitude_bound,
            problem.term_counts(),
        )?
        .with_parameterization(self.parameterization))
    }
}

/// Outcome of one annealing time under one method.
#[derive(Clone, Debug)]
pub struct PointResult {
    pub total_time: f64,
    pub energy: f64,
    /// `energy - exact ground energy` of the accurate final Hamiltonian.
    pub error: f64,
    pub success_probability: Option<f64>,
    pub converged: bool,
    pub iterations: usize,
    pub evaluations: usize,
    pub steps: usize,
    pub norm_drift: f64,
    /// `(iteration, best objective)` of the optimizer; empty for standard runs.
    pub trace: Vec<(usize, f64)>,
    pub schedules: ScheduleSet,
    pub final_state: Vec<Complex64>,
}

pub fn run_point(
    problem: &AnnealProblem,
    method: &Method,
    total_time: f64,
    integrator: &IntegratorConfig,
) -> Result<PointResult> {
    if !(total_time >= 0.0) {
        return Err(Error::config("annealing time must be non-negative"));
    }
    match method {
        Method::Standard => {
            let target = target_spectrum(problem)?;
            let schedules = ScheduleSet::standard_asp(total_time, problem.term_counts());
            let r = propagate(problem, &schedules, integrator, &initial_state(problem)?, Some(&target))?;
            Ok(PointResult {
                total_time,
                energy: r.energy,
                error: r.energy - target.ground_energy,
                success_probability: r.success_probability,
                converged: true,
                iterations: 0,
                evaluations: 0,
                steps: r.steps_used,
                norm_drift: r.norm_drift,
                trace: Vec::new(),
                schedules,
                final_state: r.final_state,
            })
        }
        Method::Vsqs(v) => {
            let spec = v.spec(problem)?;
            let r = run_vsqs(problem, &spec, total_time, &v.optimizer, integrator, &v.init, v.mode, v.restarts)?;
            Ok(PointResult {
                total_time,
                energy: r.evolution.energy,
                error: r.energy_error(),
                success_probability: r.evolution.success_probability,
                converged: r.run.converged,
                iterations: r.run.iterations,
                evaluations: r.run.evaluations,
                steps: r.evolution.steps_used,
                norm_drift: r.evolution.norm_drift,
                trace: r.run.objective_trace,
                schedules: r.schedules,
                final_state: r.evolution.final_state,
            })
        }
    }
}

#[derive(Clone, Debug)]
pub struct SweepRow {
    pub total_time: f64,
    pub outcome: std::result::Result<PointResult, String>,
}

fn check_grid(grid: &[f64]) -> Result<()> {
    if grid.iter().any(|t| !(*t > 0.0) || !t.is_finite()) {
        return Err(Error::config("annealing times must be positive"));
    }
    if grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::config("annealing time grid must be strictly increasing"));
    }
    Ok(())
}

/// `count` evenly spaced times from `start` to `stop` inclusive.
pub fn linear_grid(start: f64, stop: f64, count: usize) -> Vec<f64> {
    match count {
        0 => Vec::new(),
        1 => vec![start],
        _ => (0..count).map(|k| start + (stop - start) * k as f64 / (count - 1) as f64).collect(),
    }
}

/// One run per grid point, evaluated concurrently, rows in grid order.
/// A failing point is recorded in its row and the sweep continues.
pub fn sweep_energy_vs_t(
    problem: &AnnealProblem,
    method: &Method,
    grid: &[f64],
    integrator: &IntegratorConfig,
) -> Result<Vec<SweepRow>> {
    check_grid(grid)?;
    Ok(grid
        .par_iter()
        .map(|&t| SweepRow {
            total_time: t,
            outcome: run_point(problem, method, t, integrator).map_err(|e| e.to_string()),
        })
        .collect())
}

#[derive(Clone, Debug, Serialize)]
pub struct TcaResult {
    /// First annealing time within the threshold, `None` when never reached.
    pub t_ca: Option<f64>,
    pub best_error: f64,
    pub best_time: f64,
    /// Every `(T, error)` evaluated, in evaluation order.
    pub probes: Vec<(f64, f64)>,
    pub max_norm_drift: f64,
}

/// Smallest grid time whose energy error is within `threshold`, refined by
/// bisection against the preceding grid point down to `resolution`. Grid
/// points are evaluated in batches of the thread-pool size, so the first
/// crossing is found without scanning past it by more than one batch.
pub fn compute_tca(
    problem: &AnnealProblem,
    method: &Method,
    integrator: &IntegratorConfig,
    grid: &[f64],
    resolution: f64,
    threshold: f64,
) -> Result<TcaResult> {
    check_grid(grid)?;
    if !(resolution > 0.0) {
        return Err(Error::config("resolution must be positive"));
    }
    let drift = std::sync::atomic::AtomicU64::new(0);
    let error_at = |t: f64| {
        run_point(problem, method, t, integrator).map(|r| {
            drift.fetch_max(r.norm_drift.to_bits(), std::sync::atomic::Ordering::Relaxed);
            r.error.abs()
        })
    };
    let mut probes = Vec::new();
    let batch = rayon::current_num_threads().max(1);
    let mut crossing = None;
    'scan: for (b, chunk) in grid.chunks(batch).enumerate() {
        let errors = chunk.par_iter().map(|&t| error_at(t)).collect::<Result<Vec<f64>>>()?;
        for (k, (&t, e)) in chunk.iter().zip(errors).enumerate() {
            probes.push((t, e));
            if e <= threshold {
                crossing = Some(b * batch + k);
                break 'scan;
            }
        }
    }
    let best = |probes: &[(f64, f64)]| {
        probes.iter().copied().min_by(|a, b| a.1.total_cmp(&b.1)).unwrap_or((f64::NAN, f64::INFINITY))
    };
    let Some(i) = crossing else {
        let (best_time, best_error) = best(&probes);
        let max_norm_drift = f64::from_bits(drift.into_inner());
        return Ok(TcaResult { t_ca: None, best_error, best_time, probes, max_norm_drift });
    };
    if i == 0 {
        let (best_time, best_error) = best(&probes);
        let max_norm_drift = f64::from_bits(drift.into_inner());
        return Ok(TcaResult { t_ca: Some(grid[0]), best_error, best_time, probes, max_norm_drift });
    }
    let (mut lo, mut hi) = (grid[i - 1], grid[i]);
    while hi - lo > resolution {
        let mid = 0.5 * (lo + hi);
        let e = error_at(mid)?;
        probes.push((mid, e));
        if e <= threshold {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    let (best_time, best_error) = best(&probes);
    let max_norm_drift = f64::from_bits(drift.into_inner());
    Ok(TcaResult { t_ca: Some(hi), best_error, best_time, probes, max_norm_drift })
}

#[derive(Clone, Debug)]
pub struct BondRow {
    pub bond_length: f64,
    pub method: String,
    pub outcome: std::result::Result<TcaResult, String>,
}

/// T_CA for every `(d, file)` under every labelled method. Missing or
/// malformed files are recorded per row.
pub fn bond_length_scan(
    files: &[(f64, PathBuf)],
    methods: &[(String, Method)],
    integrator: &IntegratorConfig,
    grid: &[f64],
    resolution: f64,
    threshold: f64,
) -> Result<Vec<BondRow>> {
    check_grid(grid)?;
    let mut rows = Vec::new();
    for (d, path) in files {
        let problem = AnnealProblem::from_file(path);
        for (label, method) in methods {
            let outcome = match &problem {
                Ok(p) => compute_tca(p, method, integrator, grid, resolution, threshold).map_err(|e| e.to_string()),
                Err(e) => Err(e.to_string()),
            };
            rows.push(BondRow { bond_length: *d, method: label.clone(), outcome });
        }
    }
    Ok(rows)
}

/// Success probability per optimizer iteration (`-objective` in
/// [`ObjectiveMode::NegSuccess`]).
pub fn success_trace(result: &PointResult) -> Vec<(usize, f64)> {
    result.trace.iter().map(|&(i, v)| (i, -v)).collect()
}

/// Densely sampled schedule values with a navigator sign-change marker.
#[derive(Clone, Debug, PartialEq)]
pub struct ScheduleTable {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<f64>>,
    /// Per row: some navigator schedule changed sign since the previous row.
    pub sign_change: Vec<bool>,
    /// Some navigator schedule takes both signs over the run.
    pub non_stoquastic: bool,
}

impl ScheduleTable {
    pub fn to_table(&self) -> Table {
        let mut columns = self.columns.clone();
        columns.push("nav_sign_change".into());
        let rows = self
            .rows
            .iter()
            .zip(&self.sign_change)
            .map(|(r, s)| {
                let mut cells: Vec<String> = r.iter().map(|v| num(*v)).collect();
                cells.push((*s as u8).to_string());
                cells
            })
            .collect();
        Table { columns, rows }
    }
}

/// Samples every group schedule at `intervals * samples_per_interval + 1`
/// equally spaced times, endpoints included.
pub fn export_schedules(
    schedules: &ScheduleSet,
    intervals: usize,
    samples_per_interval: usize,
) -> Result<ScheduleTable> {
    let n = intervals.max(1) * samples_per_interval.max(1);
    let total = schedules.total_time;
    let mut columns = vec!["t".to_string()];
    for role in Role::ALL {
        for g in 0..schedules.schedules(role).len() {
            columns.push(format!("{}{g}", role.label()));
        }
    }
    let nav_start = 1 + schedules.initial.len() + schedules.final_.len();
    let mut rows = Vec::with_capacity(n + 1);
    for k in 0..=n {
        let t = if k == n { total } else { total * k as f64 / n as f64 };
        let mut row = vec![t];
        for role in Role::ALL {
            for s in schedules.schedules(role) {
                row.push(s.value(t, total)?);
            }
        }
        rows.push(row);
    }
    let mut sign_change = vec![false; rows.len()];
    let mut seen_pos = vec![false; columns.len()];
    let mut seen_neg = vec![false; columns.len()];
    let mut last_sign = vec![0.0f64; columns.len()];
    for (k, row) in rows.iter().enumerate() {
        for c in nav_start..columns.len() {
            let s = if row[c] > 0.0 {
                1.0
            } else if row[c] < 0.0 {
                -1.0
            } else {
                0.0
            };
            if s != 0.0 {
                if s * last_sign[c] < 0.0 {
                    sign_change[k] = true;
                }
                last_sign[c] = s;
            }
            seen_pos[c] |= s > 0.0;
            seen_neg[c] |= s < 0.0;
        }
    }
    let non_stoquastic = (nav_start..columns.len()).any(|c| seen_pos[c] && seen_neg[c]);
    Ok(ScheduleTable { columns, rows, sign_change, non_stoquastic })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NoiseExperiment {
    pub standard_time: f64,
    pub vsqs_time: f64,
    /// Navigator groups are forced to one per GUCC word.
    pub vsqs: VsqsMethod,
    pub threshold: f64,
}

impl Default for NoiseExperiment {
    fn default() -> Self {
        NoiseExperiment {
            standard_time: 20.0,
            vsqs_time: 1.0,
            vsqs: VsqsMethod::new((10, 2, 4), 10.0),
            threshold: CHEMICAL_ACCURACY,
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct HistogramRow {
    pub trial: usize,
    pub seed: u64,
    pub e_standard: f64,
    pub e_vsqs: f64,
    pub ground_energy: f64,
    pub standard_within: bool,
    pub vsqs_within: bool,
    pub norm_drift: f64,
    pub failure: Option<String>,
}

/// Per trial: perturb the final couplings with seed `noise.seed + trial`,
/// then run standard ASP and VSQS with the GUCC navigator. Both energies are
/// measured against the accurate couplings.
pub fn noise_histogram(
    problem: &AnnealProblem,
    trials: usize,
    noise: NoiseSpec,
    cfg: &NoiseExperiment,
    integrator: &IntegratorConfig,
) -> Result<Vec<HistogramRow>> {
    if trials == 0 {
        return Err(Error::config("at least one trial is required"));
    }
    noise.draws(0)?;
    let ground = target_spectrum(problem)?.ground_energy;
    Ok((0..trials)
        .into_par_iter()
        .map(|trial| {
            let seed = noise.seed.wrapping_add(trial as u64);
            let outcome = (|| -> Result<(f64, f64, f64)> {
                let noisy = perturb_couplings(problem, NoiseSpec { seed, ..noise })?;
                let standard = run_point(&noisy, &Method::Standard, cfg.standard_time, integrator)?;
                let nav = navigator_gucc(&noisy)?;
                let groups = nav.schedulable_count();
                let with_nav = noisy.with_navigator(nav)?;
                let method = Method::Vsqs(VsqsMethod { navigator_groups: groups, ..cfg.vsqs.clone() });
                let vsqs = run_point(&with_nav, &method, cfg.vsqs_time, integrator)?;
                Ok((standard.energy, vsqs.energy, standard.norm_drift.max(vsqs.norm_drift)))
            })();
            let (e_standard, e_vsqs, norm_drift, failure) = match outcome {
                Ok((s, v, d)) => (s, v, d, None),
                Err(e) => (f64::NAN, f64::NAN, f64::NAN, Some(e.to_string())),
            };
            HistogramRow {
                trial,
                seed,
                e_standard,
                e_vsqs,
                ground_energy: ground,
                standard_within: (e_standard - ground).abs() <= cfg.threshold,
                vsqs_within: (e_vsqs - ground).abs() <= cfg.threshold,
                norm_drift,
                failure,
            }
        })
        .collect())
}

/// Generator parameters for a triangular Ising instance.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct IsingSource {
    pub per_layer: usize,
    pub seed: u64,
}

/// Navigator Hamiltonian attached before a VSQS run.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NavigatorSource {
    /// Whatever the problem carries (edge navigator for Ising files).
    #[default]
    Problem,
    Gucc,
    None,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MethodKind {
    Standard,
    #[default]
    Vsqs,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub start: f64,
    pub stop: f64,
    pub count: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BondFile {
    pub d: f64,
    pub path: PathBuf,
}

/// Full parameter surface of one CLI invocation, loadable from TOML.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub problem: Option<PathBuf>,
    pub ising: Option<IsingSource>,
    pub navigator: NavigatorSource,
    pub method: MethodKind,
    pub vsqs: VsqsMethod,
    pub integrator: IntegratorConfig,
    pub times: Vec<f64>,
    pub grid: Option<GridSpec>,
    /// Single annealing time for traces, schedule exports and accounting.
    pub t: Option<f64>,
    pub tmax: Option<f64>,
    pub grid_points: usize,
    pub resolution: f64,
    pub threshold: f64,
    pub shots: Option<u64>,
    pub shot_seed: u64,
    pub trials: usize,
    pub noise: NoiseSpec,
    pub noise_experiment: NoiseExperiment,
    pub samples_per_interval: usize,
    pub bond_files: Vec<BondFile>,
    pub compare_standard: bool,
    pub target_probability: f64,
    pub repetitions: usize,
    pub out: Option<PathBuf>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            problem: None,
            ising: None,
            navigator: NavigatorSource::Problem,
            method: MethodKind::Vsqs,
            vsqs: VsqsMethod::default(),
            integrator: IntegratorConfig::default(),
            times: Vec::new(),
            grid: None,
            t: None,
            tmax: None,
            grid_points: 20,
            resolution: 0.01,
            threshold: CHEMICAL_ACCURACY,
            shots: None,
            shot_seed: 0,
            trials: 50,
            noise: NoiseSpec { mean: 0.0, std: 0.1, seed: 0 },
            noise_experiment: NoiseExperiment::default(),
            samples_per_interval: 20,
            bond_files: Vec::new(),
            compare_standard: true,
            target_probability: 0.99,
            repetitions: 1,
            out: None,
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        self.integrator.validate()?;
        self.vsqs.optimizer.validate()?;
        if !(self.resolution > 0.0) {
            return Err(Error::config("resolution must be positive"));
        }
        if !(self.threshold >= 0.0) {
            return Err(Error::config("threshold must be non-negative"));
        }
        if self.shots == Some(0) {
            return Err(Error::config("shots must be positive"));
        }
        check_grid(&self.time_grid()?)
    }

    pub fn method(&self) -> Method {
        match self.method {
            MethodKind::Standard => Method::Standard,
            MethodKind::Vsqs => Method::Vsqs(self.vsqs.clone()),
        }
    }

    /// Explicit `times`, else `grid`, else `grid_points` even steps up to `tmax`.
    pub fn time_grid(&self) -> Result<Vec<f64>> {
        if !self.times.is_empty() {
            return Ok(self.times.clone());
        }
        if let Some(g) = self.grid {
            return Ok(linear_grid(g.start, g.stop, g.count));
        }
        if let Some(tmax) = self.tmax {
            if !(tmax > 0.0) || self.grid_points == 0 {
                return Err(Error::config("tmax and grid_points must be positive"));
            }
            let n = self.grid_points;
            return Ok(linear_grid(tmax / n as f64, tmax, n));
        }
        Ok(Vec::new())
    }

    /// Loads or generates the problem and attaches the configured navigator.
    pub fn load_problem(&self) -> Result<AnnealProblem> {
        let problem = match (&self.problem, self.ising) {
            (Some(path), None) => AnnealProblem::from_file(path)?,
            (None, Some(s)) => crate::problems::generate_triangular_ising(s.per_layer, s.seed)?,
            (Some(_), Some(_)) => {
                return Err(Error::config("give either a problem file or an Ising generator, not both"))
            }
            (None, None) => return Err(Error::config("no problem given")),
        };
        attach_navigator(problem, self.navigator)
    }
}

pub fn attach_navigator(problem: AnnealProblem, source: NavigatorSource) -> Result<AnnealProblem> {
    match source {
        NavigatorSource::Problem => Ok(problem),
        NavigatorSource::None => Ok(problem.without_navigator()),
        NavigatorSource::Gucc => {
            let nav = navigator_gucc(&problem)?;
            problem.with_navigator(nav)
        }
    }
}

/// One line of the `validate` report.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

fn check(name: &str, passed: bool, detail: String) -> Check {
    Check { name: name.into(), passed, detail }
}

/// Invariant suite run on a loaded problem: file round-trip, matrix-free
/// against dense application, eigenpair residuals of the oracle and an
/// initial state that is a ground state of `h_ini`.
pub fn validate_problem(problem: &AnnealProblem) -> Result<Vec<Check>> {
    use crate::operators::{apply_terms, build_dense, exact_ground, norm, DEFAULT_DEGENERACY_TOL};
    use crate::problems::{format_hamiltonian, parse_hamiltonian};
    use rand::{Rng, SeedableRng};

    let mut checks = Vec::new();
    let file = problem.to_hamiltonian_file();
    let reparsed = parse_hamiltonian(&format_hamiltonian(&file), None)?;
    let same = reparsed.h_ini == file.h_ini && reparsed.h_fin == file.h_fin && reparsed.metadata == file.metadata;
    checks.push(check("file round-trip", same, String::new()));

    let dim = problem.h_fin.dim();
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0);
    let psi: Vec<Complex64> =
        (0..dim).map(|_| Complex64::new(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5)).collect();
    let mut lists = vec![("ini", &problem.h_ini), ("fin", &problem.h_fin)];
    if let Some(nav) = &problem.h_nav {
        lists.push(("nav", nav));
    }
    for (label, terms) in lists {
        let fast = apply_terms(terms, &psi)?;
        let slow = build_dense(terms)? * nalgebra::DVector::from_column_slice(&psi);
        let diff = fast.iter().zip(slow.iter()).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
        checks.push(check(
            &format!("{label}: matrix-free vs dense"),
            diff <= 1e-12,
            format!("max deviation {diff:.2e}"),
        ));
    }

    for (label, terms) in [("ini", &problem.h_ini), ("fin", &problem.accurate_h_fin)] {
        let spectrum = exact_ground(terms, DEFAULT_DEGENERACY_TOL)?;
        let mut worst = 0.0f64;
        for v in &spectrum.ground_space {
            let hv = apply_terms(terms, v)?;
            let r: Vec<Complex64> = hv.iter().zip(v).map(|(a, b)| a - b * spectrum.ground_energy).collect();
            worst = worst.max(norm(&r));
        }
        checks.push(check(
            &format!("{label}: ground eigenpair residual"),
            worst <= 1e-9,
            format!("E0 = {:.12}, degeneracy {}, residual {worst:.2e}", spectrum.ground_energy, spectrum.degeneracy()),
        ));
    }

    let psi0 = initial_state(problem)?;
    let e0 = crate::operators::expectation(&problem.h_ini, &psi0)?;
    let ini_ground = exact_ground(&problem.h_ini, DEFAULT_DEGENERACY_TOL)?.ground_energy;
    let gap = (e0 - ini_ground).abs();
    checks.push(check(
        "initial state is a ground state of h_ini",
        gap <= 1e-9 && (norm(&psi0) - 1.0).abs() <= 1e-12,
        format!("energy offset {gap:.2e}"),
    ));
    Ok(checks)
}

/// Sample standard deviation (`n - 1` denominator).
pub fn sample_std(values: &[f64]) -> f64 {
    let n = values.len();
    if n < 2 {
        return 0.0;
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
}

/// Header plus string cells; values are written with Rust's shortest
/// round-trip float formatting so identical runs give identical bytes.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Table {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(columns: &[&str]) -> Self {
        Table { columns: columns.iter().map(|c| c.to_string()).collect(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    pub fn to_csv(&self) -> String {
        let mut out = self.columns.join(",");
        out.push('\n');
        for r in &self.rows {
            let _ = writeln!(out, "{}", r.join(","));
        }
        out
    }
}

/// Shortest round-trip decimal, in exponent form outside `[1e-4, 1e6)`.
pub fn num(x: f64) -> String {
    let a = x.abs();
    if a == 0.0 || !a.is_finite() || (1e-4..1e6).contains(&a) {
        x.to_string()
    } else {
        format!("{x:e}")
    }
}

pub fn fmt_opt(v: Option<f64>) -> String {
    v.map(num).unwrap_or_default()
}

pub fn sweep_table(rows: &[SweepRow]) -> Table {
    let mut t = Table::new(&[
        "T",
        "energy",
        "error",
        "success_probability",
        "converged",
        "iterations",
        "evaluations",
        "steps",
        "failure",
    ]);
    for r in rows {
        match &r.outcome {
            Ok(p) => t.push(vec![
                num(r.total_time),
                num(p.energy),
                num(p.error),
                fmt_opt(p.success_probability),
                p.converged.to_string(),
                p.iterations.to_string(),
                p.evaluations.to_string(),
                p.steps.to_string(),
                String::new(),
            ]),
            Err(e) => {
                let mut cells = vec![num(r.total_time)];
                cells.extend(std::iter::repeat(String::new()).take(7));
                cells.push(csv_text(e));
                t.push(cells);
            }
        }
    }
    t
}

pub fn histogram_table(rows: &[HistogramRow]) -> Table {
    let mut t = Table::new(&[
        "trial",
        "seed",
        "e_standard",
        "e_vsqs",
        "ground_energy",
        "standard_within_ca",
        "vsqs_within_ca",
        "failure",
    ]);
    for r in rows {
        t.push(vec![
            r.trial.to_string(),
            r.seed.to_string(),
            num(r.e_standard),
            num(r.e_vsqs),
            num(r.ground_energy),
            r.standard_within.to_string(),
            r.vsqs_within.to_string(),
            r.failure.as_deref().map(csv_text).unwrap_or_default(),
        ]);
    }
    t
}

/// Free text made safe for an unquoted CSV cell.
pub fn csv_text(s: &str) -> String {
    s.replace([',', '\n', '\r'], ";")
}

/// Writes `table` to `path` and `metadata` to `path` with `.json` appended.
pub fn write_outputs(path: &Path, table: &Table, metadata: &serde_json::Value) -> Result<PathBuf> {
    let io = |p: &Path| {
        let p = p.to_path_buf();
        move |source| Error::Io { path: p, source }
    };
    std::fs::write(path, table.to_csv()).map_err(io(path))?;
    let mut sidecar = path.as_os_str().to_owned();
    sidecar.push(".json");
    let sidecar = PathBuf::from(sidecar);
    let text = serde_json::to_string_pretty(metadata).map_err(|e| Error::config(e.to_string()))?;
    std::fs::write(&sidecar, text + "\n").map_err(io(&sidecar))?;
    Ok(sidecar)
}
