use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use vsqs_core::evolve::{measure_energy, target_spectrum};
use vsqs_core::experiments::{
    bond_length_scan, compute_tca, csv_text, export_schedules, fmt_opt, histogram_table, noise_histogram, num,
    run_point, sample_std, success_trace, sweep_energy_vs_t, sweep_table, validate_problem, write_outputs, BondFile,
    ExperimentConfig, GridSpec, IsingSource, Method, MethodKind, NavigatorSource, Table,
};
use vsqs_core::problems::{generate_triangular_ising, write_hamiltonian, AnnealProblem};
use vsqs_core::schedule::Parameterization;
use vsqs_core::vsqs::{time_accounting, InitStrategy, ObjectiveMode, OptimizerMethod};

#[derive(Parser)]
#[command(name = "vsqs", version, about = "Variationally scheduled adiabatic state preparation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Energy against annealing time, one run per grid point.
    Sweep(RunArgs),
    /// Time to chemical accuracy.
    Tca(RunArgs),
    /// Time to chemical accuracy across bond lengths.
    Bondscan(RunArgs),
    /// Success probability curve and optimizer trace.
    Success(RunArgs),
    /// Sampled schedule functions of one optimized run.
    Schedules(RunArgs),
    /// Energies under Gaussian control error on the final couplings.
    Noisehist(RunArgs),
    /// Write a triangular Ising instance.
    IsingGen(IsingArgs),
    /// Run the invariant suite on a Hamiltonian file.
    Validate(ValidateArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum MethodArg {
    Standard,
    Vsqs,
}

#[derive(Clone, Copy, ValueEnum)]
enum NavArg {
    Problem,
    Gucc,
    None,
}

#[derive(Clone, Copy, ValueEnum)]
enum OptArg {
    Gradient,
    Simplex,
}

#[derive(Clone, Copy, ValueEnum)]
enum ObjArg {
    Energy,
    NegSuccess,
}

#[derive(Clone, Copy, ValueEnum)]
enum ParamArg {
    PiecewiseLinear,
    BangBang,
}

#[derive(Args, Default)]
struct RunArgs {
    /// TOML file with any of the options below.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    problem: Option<PathBuf>,
    /// Generate a triangular Ising instance with this seed instead of loading a file.
    #[arg(long)]
    ising_seed: Option<u64>,
    #[arg(long)]
    per_layer: Option<usize>,
    #[arg(long, value_enum)]
    navigator: Option<NavArg>,
    #[arg(long, value_enum)]
    method: Option<MethodArg>,
    /// Group numbers S,I,F.
    #[arg(long, value_parser = parse_triple)]
    schedule: Option<(usize, usize, usize)>,
    #[arg(long)]
    nav_groups: Option<usize>,
    #[arg(long)]
    bound: Option<f64>,
    #[arg(long, value_enum)]
    parameterization: Option<ParamArg>,
    #[arg(long, value_enum)]
    optimizer: Option<OptArg>,
    #[arg(long)]
    tol: Option<f64>,
    #[arg(long)]
    max_iter: Option<usize>,
    #[arg(long)]
    restarts: Option<usize>,
    #[arg(long, value_enum)]
    objective: Option<ObjArg>,
    #[arg(long)]
    init_seed: Option<u64>,
    /// Half-width of the uniform navigator knot initialization.
    #[arg(long)]
    nav_spread: Option<f64>,
    /// Comma-separated annealing times.
    #[arg(long, value_delimiter = ',')]
    times: Vec<f64>,
    /// Evenly spaced grid `start:stop:count`.
    #[arg(long, value_parser = parse_grid)]
    grid: Option<GridSpec>,
    #[arg(long)]
    t: Option<f64>,
    #[arg(long)]
    tmax: Option<f64>,
    #[arg(long)]
    grid_points: Option<usize>,
    #[arg(long)]
    resolution: Option<f64>,
    #[arg(long)]
    threshold: Option<f64>,
    #[arg(long)]
    shots: Option<u64>,
    #[arg(long)]
    trials: Option<usize>,
    #[arg(long, allow_hyphen_values = true)]
    noise_mean: Option<f64>,
    #[arg(long)]
    noise_std: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    samples: Option<usize>,
    /// Repetitions M of each optimizer iteration for time accounting.
    #[arg(long)]
    repetitions: Option<usize>,
    /// Bond-length files `d=path`; defaults to every h2_d*.ham in --data-dir.
    #[arg(long = "bond-file", value_parser = parse_bond_file)]
    bond_files: Vec<BondFile>,
    #[arg(long, default_value = "data")]
    data_dir: PathBuf,
    /// Skip the standard-ASP reference in bondscan.
    #[arg(long)]
    no_standard: bool,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct IsingArgs {
    #[arg(long, default_value_t = 4)]
    per_layer: usize,
    #[arg(long)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ValidateArgs {
    #[arg(long)]
    problem: PathBuf,
}

fn parse_triple(s: &str) -> Result<(usize, usize, usize), String> {
    let v: Vec<usize> = s
        .split(',')
        .map(|x| x.trim().parse().map_err(|_| format!("bad group number {x:?}")))
        .collect::<Result<_, _>>()?;
    match v[..] {
        [a, b, c] => Ok((a, b, c)),
        _ => Err("expected S,I,F".into()),
    }
}

fn parse_grid(s: &str) -> Result<GridSpec, String> {
    let parts: Vec<&str> = s.split(':').collect();
    if parts.len() != 3 {
        return Err("expected start:stop:count".into());
    }
    let f = |x: &str| x.parse::<f64>().map_err(|e| e.to_string());
    Ok(GridSpec { start: f(parts[0])?, stop: f(parts[1])?, count: parts[2].parse().map_err(|e| format!("{e}"))? })
}

fn parse_bond_file(s: &str) -> Result<BondFile, String> {
    let (d, path) = s.split_once('=').ok_or("expected d=path")?;
    Ok(BondFile { d: d.parse().map_err(|e| format!("{e}"))?, path: path.into() })
}

/// Failure classes mapped to exit codes 2 and 1.
enum Failure {
    Config(anyhow::Error),
    Rows(usize),
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Config(e)
    }
}

impl From<vsqs_core::Error> for Failure {
    fn from(e: vsqs_core::Error) -> Self {
        Failure::Config(e.into())
    }
}

fn resolve(args: &RunArgs) -> anyhow::Result<ExperimentConfig> {
    let mut cfg = match &args.config {
        Some(path) => {
            let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))?
        }
        None => ExperimentConfig::default(),
    };
    if let Some(p) = &args.problem {
        cfg.problem = Some(p.clone());
        cfg.ising = None;
    }
    if let Some(seed) = args.ising_seed {
        let per_layer = args.per_layer.or(cfg.ising.map(|s| s.per_layer)).unwrap_or(4);
        cfg.ising = Some(IsingSource { per_layer, seed });
        cfg.problem = None;
    } else if let (Some(n), Some(s)) = (args.per_layer, cfg.ising.as_mut()) {
        s.per_layer = n;
    }
    if let Some(n) = args.navigator {
        cfg.navigator = match n {
            NavArg::Problem => NavigatorSource::Problem,
            NavArg::Gucc => NavigatorSource::Gucc,
            NavArg::None => NavigatorSource::None,
        };
    }
    if let Some(m) = args.method {
        cfg.method = match m {
            MethodArg::Standard => MethodKind::Standard,
            MethodArg::Vsqs => MethodKind::Vsqs,
        };
    }
    let v = &mut cfg.vsqs;
    if let Some((s, i, f)) = args.schedule {
        (v.split_count, v.initial_groups, v.final_groups) = (s, i, f);
    }
    if let Some(n) = args.nav_groups {
        v.navigator_groups = n;
    }
    if let Some(b) = args.bound {
        v.amplitude_bound = b;
    }
    if let Some(p) = args.parameterization {
        v.parameterization = match p {
            ParamArg::PiecewiseLinear => Parameterization::PiecewiseLinear,
            ParamArg::BangBang => Parameterization::BangBang,
        };
    }
    if let Some(o) = args.optimizer {
        v.optimizer.method = match o {
            OptArg::Gradient => OptimizerMethod::Gradient,
            OptArg::Simplex => OptimizerMethod::Simplex,
        };
    }
    if let Some(t) = args.tol {
        v.optimizer.tolerance = t;
    }
    if let Some(n) = args.max_iter {
        v.optimizer.max_iterations = n;
    }
    if let Some(n) = args.restarts {
        v.restarts = n;
    }
    if let Some(o) = args.objective {
        v.mode = match o {
            ObjArg::Energy => ObjectiveMode::Energy,
            ObjArg::NegSuccess => ObjectiveMode::NegSuccess,
        };
    }
    if args.init_seed.is_some() || args.nav_spread.is_some() {
        if let InitStrategy::AspCurve { navigator_spread, seed, .. } = &mut v.init {
            if let Some(s) = args.init_seed {
                *seed = s;
            }
            if let Some(s) = args.nav_spread {
                *navigator_spread = s;
            }
        }
    }
    if !args.times.is_empty() {
        cfg.times = args.times.clone();
        cfg.grid = None;
    }
    if let Some(g) = args.grid {
        cfg.grid = Some(g);
        cfg.times.clear();
    }
    macro_rules! set {
        ($($field:ident <- $arg:expr),* $(,)?) => {$(if let Some(x) = $arg { cfg.$field = x; })*};
    }
    set!(
        tmax <- args.tmax.map(Some),
        t <- args.t.map(Some),
        grid_points <- args.grid_points,
        resolution <- args.resolution,
        threshold <- args.threshold,
        shots <- args.shots.map(Some),
        trials <- args.trials,
        samples_per_interval <- args.samples,
        repetitions <- args.repetitions,
        out <- args.out.clone().map(Some),
    );
    if let Some(m) = args.noise_mean {
        cfg.noise.mean = m;
    }
    if let Some(s) = args.noise_std {
        cfg.noise.std = s;
    }
    if let Some(s) = args.seed {
        cfg.noise.seed = s;
        cfg.shot_seed = s;
    }
    if !args.bond_files.is_empty() {
        cfg.bond_files = args.bond_files.clone();
    }
    if args.no_standard {
        cfg.compare_standard = false;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn problem_json(p: &AnnealProblem) -> serde_json::Value {
    json!({ "name": p.name, "n_qubits": p.n_qubits(), "term_counts": p.term_counts(), "metadata": p.metadata })
}

/// CSV to `cfg.out` with a JSON sidecar, or to stdout without one.
fn emit(cfg: &ExperimentConfig, table: &Table, meta: serde_json::Value) -> anyhow::Result<()> {
    match &cfg.out {
        Some(path) => {
            write_outputs(path, table, &meta)?;
        }
        None => print!("{}", table.to_csv()),
    }
    Ok(())
}

fn with_suffix(path: &Path, suffix: &str) -> PathBuf {
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    path.with_file_name(format!("{stem}.{suffix}.csv"))
}

fn base_meta(command: &str, cfg: &ExperimentConfig, problem: &AnnealProblem) -> serde_json::Value {
    json!({ "command": command, "config": cfg, "problem": problem_json(problem) })
}

fn sweep(cfg: &ExperimentConfig) -> Result<(), Failure> {
    let problem = cfg.load_problem()?;
    let rows = sweep_energy_vs_t(&problem, &cfg.method(), &cfg.time_grid()?, &cfg.integrator)?;
    let mut table = sweep_table(&rows);
    if let Some(shots) = cfg.shots {
        table.columns.push("energy_sampled".into());
        for (k, (row, cells)) in rows.iter().zip(table.rows.iter_mut()).enumerate() {
            let sampled = match &row.outcome {
                Ok(p) => measure_energy(&p.final_state, &problem.accurate_h_fin, Some(shots), cfg.shot_seed + k as u64)
                    .map(num)?,
                Err(_) => String::new(),
            };
            cells.push(sampled);
        }
    }
    let failures = rows.iter().filter(|r| r.outcome.is_err()).count();
    let mut meta = base_meta("sweep", cfg, &problem);
    meta["ground_energy"] = json!(target_spectrum(&problem)?.ground_energy);
    meta["failed_rows"] = json!(failures);
    emit(cfg, &table, meta)?;
    if failures > 0 {
        return Err(Failure::Rows(failures));
    }
    Ok(())
}

fn tca(cfg: &ExperimentConfig) -> Result<(), Failure> {
    let problem = cfg.load_problem()?;
    let grid = cfg.time_grid()?;
    if grid.is_empty() {
        return Err(Failure::Config(anyhow!("tca needs --tmax, --grid or --times")));
    }
    let r = compute_tca(&problem, &cfg.method(), &cfg.integrator, &grid, cfg.resolution, cfg.threshold)
        .map_err(|e| Failure::Config(e.into()))?;
    let mut table = Table::new(&["T", "abs_error"]);
    for (t, e) in &r.probes {
        table.push(vec![num(*t), num(*e)]);
    }
    match r.t_ca {
        Some(t) => eprintln!("T_CA = {t}"),
        None => eprintln!("not reached; best error {:.3e} at T = {}", r.best_error, r.best_time),
    }
    let mut meta = base_meta("tca", cfg, &problem);
    meta["t_ca"] = json!(r.t_ca);
    meta["best_error"] = json!(r.best_error);
    meta["best_time"] = json!(r.best_time);
    emit(cfg, &table, meta)?;
    Ok(())
}

fn discover_bond_files(dir: &Path) -> anyhow::Result<Vec<BondFile>> {
    let mut files = Vec::new();
    for entry in std::fs::read_dir(dir).with_context(|| format!("reading {}", dir.display()))? {
        let path = entry?.path();
        let name = path.file_name().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
        if let Some(d) = name.strip_prefix("h2_d").and_then(|r| r.strip_suffix(".ham")) {
            if let Ok(d) = d.parse() {
                files.push(BondFile { d, path });
            }
        }
    }
    files.sort_by(|a, b| a.d.total_cmp(&b.d));
    Ok(files)
}

fn bondscan(cfg: &ExperimentConfig, data_dir: &Path) -> Result<(), Failure> {
    let files = if cfg.bond_files.is_empty() { discover_bond_files(data_dir)? } else { cfg.bond_files.clone() };
    if files.is_empty() {
        return Err(Failure::Config(anyhow!("no bond-length files")));
    }
    let grid = cfg.time_grid()?;
    if grid.is_empty() {
        return Err(Failure::Config(anyhow!("bondscan needs --tmax, --grid or --times")));
    }
    let method = cfg.method();
    let mut methods = vec![(method.label(), method.clone())];
    if cfg.compare_standard && method != Method::Standard {
        methods.push(("standard".into(), Method::Standard));
    }
    let pairs: Vec<(f64, PathBuf)> = files.iter().map(|f| (f.d, f.path.clone())).collect();
    let rows = bond_length_scan(&pairs, &methods, &cfg.integrator, &grid, cfg.resolution, cfg.threshold)?;
    let mut table = Table::new(&["d", "method", "t_ca", "best_error", "failure"]);
    let mut failures = 0;
    for r in &rows {
        match &r.outcome {
            Ok(t) => table.push(vec![
                num(r.bond_length),
                r.method.clone(),
                fmt_opt(t.t_ca),
                num(t.best_error),
                String::new(),
            ]),
            Err(e) => {
                failures += 1;
                table.push(vec![num(r.bond_length), r.method.clone(), String::new(), String::new(), csv_text(e)]);
            }
        }
    }
    let meta = json!({ "command": "bondscan", "config": cfg, "files": files.len(), "failed_rows": failures });
    emit(cfg, &table, meta)?;
    if failures > 0 {
        return Err(Failure::Rows(failures));
    }
    Ok(())
}

fn success(cfg: &ExperimentConfig) -> Result<(), Failure> {
    let problem = cfg.load_problem()?;
    let grid = cfg.time_grid()?;
    let rows = sweep_energy_vs_t(&problem, &Method::Standard, &grid, &cfg.integrator)?;
    let mut table = Table::new(&["T", "success_probability", "failure"]);
    let mut failures = 0;
    for r in &rows {
        match &r.outcome {
            Ok(p) => table.push(vec![num(r.total_time), fmt_opt(p.success_probability), String::new()]),
            Err(e) => {
                failures += 1;
                table.push(vec![num(r.total_time), String::new(), csv_text(e)]);
            }
        }
    }
    let mut meta = base_meta("success", cfg, &problem);
    if let Some(t) = cfg.t {
        let vsqs =
            Method::Vsqs(vsqs_core::experiments::VsqsMethod { mode: ObjectiveMode::NegSuccess, ..cfg.vsqs.clone() });
        let r = run_point(&problem, &vsqs, t, &cfg.integrator)?;
        let p = r.success_probability.unwrap_or(0.0);
        let mut trace = Table::new(&["iteration", "success_probability"]);
        for (i, v) in success_trace(&r) {
            trace.push(vec![i.to_string(), num(v)]);
        }
        let accounting = time_accounting(p, t, r.iterations, cfg.repetitions, cfg.target_probability).ok();
        meta["vsqs"] = json!({
            "T": t, "success_probability": p, "iterations": r.iterations,
            "evaluations": r.evaluations, "converged": r.converged, "time_accounting": accounting,
        });
        eprintln!("VSQS at T = {t}: p = {p:.6} after {} iterations", r.iterations);
        if let Some(out) = &cfg.out {
            let path = with_suffix(out, "trace");
            std::fs::write(&path, trace.to_csv()).with_context(|| format!("writing {}", path.display()))?;
        }
    }
    emit(cfg, &table, meta)?;
    if failures > 0 {
        return Err(Failure::Rows(failures));
    }
    Ok(())
}

fn schedules(cfg: &ExperimentConfig) -> Result<(), Failure> {
    let problem = cfg.load_problem()?;
    let t = cfg.t.ok_or_else(|| anyhow!("schedules needs --t"))?;
    let r = run_point(&problem, &cfg.method(), t, &cfg.integrator)?;
    let exported = export_schedules(&r.schedules, cfg.vsqs.split_count, cfg.samples_per_interval)?;
    let mut meta = base_meta("schedules", cfg, &problem);
    meta["non_stoquastic"] = json!(exported.non_stoquastic);
    meta["energy"] = json!(r.energy);
    meta["success_probability"] = json!(r.success_probability);
    emit(cfg, &exported.to_table(), meta)?;
    Ok(())
}

fn noisehist(cfg: &ExperimentConfig) -> Result<(), Failure> {
    let mut cfg = cfg.clone();
    cfg.navigator = NavigatorSource::None;
    let problem = cfg.load_problem()?;
    let rows = noise_histogram(&problem, cfg.trials, cfg.noise, &cfg.noise_experiment, &cfg.integrator)?;
    let ok: Vec<_> = rows.iter().filter(|r| r.failure.is_none()).collect();
    let failures = rows.len() - ok.len();
    let std_standard = sample_std(&ok.iter().map(|r| r.e_standard).collect::<Vec<_>>());
    let std_vsqs = sample_std(&ok.iter().map(|r| r.e_vsqs).collect::<Vec<_>>());
    let within = ok.iter().filter(|r| r.vsqs_within).count();
    let mut meta = base_meta("noisehist", &cfg, &problem);
    meta["std_standard"] = json!(std_standard);
    meta["std_vsqs"] = json!(std_vsqs);
    meta["vsqs_within_fraction"] = json!(within as f64 / rows.len() as f64);
    meta["failed_rows"] = json!(failures);
    emit(&cfg, &histogram_table(&rows), meta)?;
    if failures > 0 {
        return Err(Failure::Rows(failures));
    }
    Ok(())
}

fn ising_gen(args: &IsingArgs) -> Result<(), Failure> {
    let p = generate_triangular_ising(args.per_layer, args.seed)?;
    write_hamiltonian(&p.to_hamiltonian_file(), &args.out)?;
    Ok(())
}

fn validate(args: &ValidateArgs) -> Result<(), Failure> {
    let problem = AnnealProblem::from_file(&args.problem)?;
    let checks = validate_problem(&problem)?;
    let mut failed = 0;
    for c in &checks {
        failed += usize::from(!c.passed);
        let status = if c.passed { "ok  " } else { "FAIL" };
        if c.detail.is_empty() {
            println!("{status} {}", c.name);
        } else {
            println!("{status} {}: {}", c.name, c.detail);
        }
    }
    if failed > 0 {
        return Err(Failure::Rows(failed));
    }
    Ok(())
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Sweep(a) => sweep(&resolve(&a)?),
        Command::Tca(a) => tca(&resolve(&a)?),
        Command::Bondscan(a) => bondscan(&resolve(&a)?, &a.data_dir),
        Command::Success(a) => success(&resolve(&a)?),
        Command::Schedules(a) => schedules(&resolve(&a)?),
        Command::Noisehist(a) => noisehist(&resolve(&a)?),
        Command::IsingGen(a) => ising_gen(&a),
        Command::Validate(a) => validate(&a),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = std::env::var("VSQS_THREADS").ok().and_then(|v| v.parse::<usize>().ok()) {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build_global() {
            eprintln!("warning: {e}");
        }
    }
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Rows(n)) => {
            eprintln!("{n} row(s) failed");
            ExitCode::from(1)
        }
        Err(Failure::Config(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
