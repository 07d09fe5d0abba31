//! The hybrid loop: schedule knots in, terminal energy (or success
//! probability) out, a bound-constrained classical optimizer in between.

use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evolve::{
    initial_state, initial_steps, propagate, propagate_fixed, propagate_from, target_spectrum, EvolutionResult,
    IntegratorConfig,
};
use crate::operators::SpectrumResult;
use crate::problems::AnnealProblem;
use crate::schedule::{assemble, Parameterization, Role, ScheduleParams, ScheduleSet, ScheduleSpec};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OptimizerMethod {
    /// Quasi-Newton (L-BFGS) with finite-difference gradients and projection onto the box.
    #[default]
    Gradient,
    /// Derivative-free linear-model trust region over a simplex (COBYLA-like).
    Simplex,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OptimizerConfig {
    pub method: OptimizerMethod,
    /// Gradient: relative objective decrease below which iteration stops.
    /// Simplex: final trust-region radius.
    pub tolerance: f64,
    /// Gradient: quasi-Newton iterations. Simplex: objective evaluations.
    pub max_iterations: usize,
    pub finite_difference_step: f64,
    /// Simplex starting radius.
    pub initial_radius: f64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        OptimizerConfig {
            method: OptimizerMethod::Gradient,
            tolerance: 1e-6,
            max_iterations: 200,
            finite_difference_step: 1e-7,
            initial_radius: 1.0,
        }
    }
}

impl OptimizerConfig {
    pub fn simplex(tolerance: f64, max_iterations: usize) -> Self {
        OptimizerConfig { method: OptimizerMethod::Simplex, tolerance, max_iterations, ..Default::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.tolerance > 0.0) {
            return Err(Error::config("optimizer tolerance must be positive"));
        }
        if !(self.finite_difference_step > 0.0) {
            return Err(Error::config("finite difference step must be positive"));
        }
        if !(self.initial_radius > 0.0) {
            return Err(Error::config("initial radius must be positive"));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct OptimizationRun {
    pub best_params: Vec<f64>,
    pub best_objective: f64,
    /// `(iteration, best objective so far)`; iteration 0 is the initial point.
    pub objective_trace: Vec<(usize, f64)>,
    pub evaluations: usize,
    pub iterations: usize,
    pub converged: bool,
    pub elapsed_seconds: f64,
}

/// Counts evaluations and enforces the box on every probe.
struct Counted<'a, F> {
    f: &'a F,
    bounds: &'a [(f64, f64)],
    evaluations: std::sync::atomic::AtomicUsize,
}

impl<'a, F: Fn(&[f64]) -> Result<f64> + Sync> Counted<'a, F> {
    fn eval(&self, x: &[f64]) -> Result<f64> {
        debug_assert!(x.iter().zip(self.bounds).all(|(v, (lo, hi))| *v >= *lo && *v <= *hi));
        self.evaluations.fetch_add(1, std::sync::atomic::Ordering::Relaxed);
        let v = (self.f)(x)?;
        if v.is_nan() {
            return Err(Error::config("objective returned NaN"));
        }
        Ok(v)
    }

    fn count(&self) -> usize {
        self.evaluations.load(std::sync::atomic::Ordering::Relaxed)
    }
}

fn clip(x: &mut [f64], bounds: &[(f64, f64)]) {
    for (v, &(lo, hi)) in x.iter_mut().zip(bounds) {
        *v = v.clamp(lo, hi);
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Minimizes `f` over the box `bounds` starting from `x0` (clipped into the box).
pub fn minimize<F>(f: &F, x0: &[f64], bounds: &[(f64, f64)], cfg: &OptimizerConfig) -> Result<OptimizationRun>
where
    F: Fn(&[f64]) -> Result<f64> + Sync,
{
    cfg.validate()?;
    if x0.len() != bounds.len() {
        return Err(Error::ParameterCount { expected: bounds.len(), got: x0.len() });
    }
    if bounds.iter().any(|(lo, hi)| !(lo <= hi)) {
        return Err(Error::config("empty optimizer box"));
    }
    let start = Instant::now();
    let counted = Counted { f, bounds, evaluations: 0.into() };
    let mut x = x0.to_vec();
    clip(&mut x, bounds);
    let mut run = if x.is_empty() {
        let v = counted.eval(&x)?;
        OptimizationRun {
            best_params: x,
            best_objective: v,
            objective_trace: vec![(0, v)],
            evaluations: 0,
            iterations: 0,
            converged: true,
            elapsed_seconds: 0.0,
        }
    } else {
        match cfg.method {
            OptimizerMethod::Gradient => lbfgs(&counted, x, cfg)?,
            OptimizerMethod::Simplex => linear_trust_region(&counted, x, cfg)?,
        }
    };
    run.evaluations = counted.count();
    run.elapsed_seconds = start.elapsed().as_secs_f64();
    Ok(run)
}

fn gradient<F: Fn(&[f64]) -> Result<f64> + Sync>(f: &Counted<'_, F>, x: &[f64], fx: f64, h: f64) -> Result<Vec<f64>> {
    (0..x.len())
        .into_par_iter()
        .map(|i| {
            let (lo, hi) = f.bounds[i];
            let step = h * x[i].abs().max(1.0);
            let mut probe = x.to_vec();
            // backward difference against the upper bound
            let signed = if x[i] + step <= hi {
                step
            } else if x[i] - step >= lo {
                -step
            } else {
                0.0
            };
            if signed == 0.0 {
                return Ok(0.0);
            }
            probe[i] = x[i] + signed;
            Ok((f.eval(&probe)? - fx) / signed)
        })
        .collect()
}

fn lbfgs<F: Fn(&[f64]) -> Result<f64> + Sync>(
    f: &Counted<'_, F>,
    mut x: Vec<f64>,
    cfg: &OptimizerConfig,
) -> Result<OptimizationRun> {
    const MEMORY: usize = 10;
    let bounds = f.bounds;
    let n = x.len();
    let mut fx = f.eval(&x)?;
    let mut g = gradient(f, &x, fx, cfg.finite_difference_step)?;
    let mut trace = vec![(0, fx)];
    let mut history: Vec<(Vec<f64>, Vec<f64>)> = Vec::new();
    let mut converged = false;
    let mut iterations = 0;

    for iter in 1..=cfg.max_iterations {
        iterations = iter;
        let projected: f64 =
            (0..n).map(|i| (x[i] - (x[i] - g[i]).clamp(bounds[i].0, bounds[i].1)).abs()).fold(0.0, f64::max);
        if projected < 1e-10 {
            converged = true;
            break;
        }
        // two-loop recursion
        let mut d: Vec<f64> = g.iter().map(|v| -v).collect();
        let mut alphas = Vec::with_capacity(history.len());
        for (s, y) in history.iter().rev() {
            let a = dot(s, &d) / dot(y, s);
            d.iter_mut().zip(y).for_each(|(di, yi)| *di -= a * yi);
            alphas.push(a);
        }
        if let Some((s, y)) = history.last() {
            let gamma = dot(s, y) / dot(y, y);
            d.iter_mut().for_each(|di| *di *= gamma);
        }
        for ((s, y), a) in history.iter().zip(alphas.iter().rev()) {
            let b = dot(y, &d) / dot(y, s);
            d.iter_mut().zip(s).for_each(|(di, si)| *di += (a - b) * si);
        }
        // drop components pushing into active bounds
        for i in 0..n {
            if (x[i] <= bounds[i].0 && d[i] < 0.0) || (x[i] >= bounds[i].1 && d[i] > 0.0) {
                d[i] = 0.0;
            }
        }
        if dot(&d, &g) >= 0.0 {
            history.clear();
            d = g.iter().map(|v| -v).collect();
            for i in 0..n {
                if (x[i] <= bounds[i].0 && d[i] < 0.0) || (x[i] >= bounds[i].1 && d[i] > 0.0) {
                    d[i] = 0.0;
                }
            }
        }
        let mut alpha = if history.is_empty() { (1.0 / dot(&d, &d).sqrt()).min(1.0) } else { 1.0 };
        let project = |alpha: f64| {
            let mut trial: Vec<f64> = x.iter().zip(&d).map(|(xi, di)| xi + alpha * di).collect();
            clip(&mut trial, bounds);
            trial
        };
        let mut accepted: Option<(Vec<f64>, f64)> = None;
        for attempt in 0..40 {
            let trial = project(alpha);
            let step: Vec<f64> = trial.iter().zip(&x).map(|(a, b)| a - b).collect();
            if step.iter().all(|s| *s == 0.0) {
                break;
            }
            let ft = f.eval(&trial)?;
            if ft <= fx + 1e-4 * dot(&g, &step).min(0.0) && ft < fx {
                accepted = Some((trial, ft));
                if attempt == 0 {
                    // the full step was fine; keep doubling while it pays
                    for _ in 0..30 {
                        let longer = project(alpha * 2.0);
                        if longer == accepted.as_ref().unwrap().0 {
                            break;
                        }
                        let fl = f.eval(&longer)?;
                        if fl >= accepted.as_ref().unwrap().1 {
                            break;
                        }
                        alpha *= 2.0;
                        accepted = Some((longer, fl));
                    }
                }
                break;
            }
            alpha *= 0.5;
        }
        let Some((x_new, f_new)) = accepted else {
            // no decrease along the search direction
            converged = true;
            break;
        };
        let g_new = gradient(f, &x_new, f_new, cfg.finite_difference_step)?;
        let s: Vec<f64> = x_new.iter().zip(&x).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = g_new.iter().zip(&g).map(|(a, b)| a - b).collect();
        if dot(&s, &y) > 1e-12 * dot(&y, &y).sqrt() * dot(&s, &s).sqrt() {
            history.push((s, y));
            if history.len() > MEMORY {
                history.remove(0);
            }
        }
        let relative = (fx - f_new) / fx.abs().max(f_new.abs()).max(1.0);
        x = x_new;
        fx = f_new;
        g = g_new;
        trace.push((iter, fx));
        if relative <= cfg.tolerance {
            converged = true;
            break;
        }
    }
    Ok(OptimizationRun {
        best_params: x,
        best_objective: fx,
        objective_trace: trace,
        evaluations: 0,
        iterations,
        converged,
        elapsed_seconds: 0.0,
    })
}

/// `base + step`, reflected through `base` if it leaves the box, then clipped.
fn place(base: &[f64], step: &[f64], bounds: &[(f64, f64)]) -> Vec<f64> {
    let fits = |sign: f64| {
        base.iter().zip(step).zip(bounds).all(|((b, d), (lo, hi))| (b + sign * d) >= *lo && (b + sign * d) <= *hi)
    };
    let sign = if fits(1.0) || !fits(-1.0) { 1.0 } else { -1.0 };
    let mut v: Vec<f64> = base.iter().zip(step).map(|(b, d)| b + sign * d).collect();
    clip(&mut v, bounds);
    v
}

/// Powell-style linear-approximation trust region restricted to a box.
///
/// The simplex of `n + 1` evaluated points defines a linear model; each
/// iteration steps a distance `rho` down the model gradient. Poor steps
/// trigger either a geometry repair of the simplex or a halving of `rho`,
/// and the run ends when a poor step occurs at `rho = tolerance` on an
/// acceptable simplex.
fn linear_trust_region<F: Fn(&[f64]) -> Result<f64> + Sync>(
    f: &Counted<'_, F>,
    x0: Vec<f64>,
    cfg: &OptimizerConfig,
) -> Result<OptimizationRun> {
    let bounds = f.bounds;
    let n = x0.len();
    let rho_end = cfg.tolerance;
    let mut rho = cfg.initial_radius.max(rho_end);
    let budget = cfg.max_iterations.max(1);

    let mut trace = Vec::new();
    let mut best = f64::INFINITY;
    let mut evals = 0usize;
    let mut evaluate = |x: &[f64], trace: &mut Vec<(usize, f64)>| -> Result<f64> {
        let v = f.eval(x)?;
        best = best.min(v);
        trace.push((evals, best));
        evals += 1;
        Ok(v)
    };

    let f0 = evaluate(&x0, &mut trace)?;
    let mut vertices = vec![(x0.clone(), f0)];
    for i in 0..n {
        if trace.len() >= budget {
            break;
        }
        let mut e = vec![0.0; n];
        e[i] = rho;
        let v = place(&x0, &e, bounds);
        let fv = evaluate(&v, &mut trace)?;
        vertices.push((v, fv));
    }
    let mut converged = false;
    let mut repairs = 0usize;

    while trace.len() < budget && vertices.len() == n + 1 {
        let pivot = (0..=n).min_by(|&a, &b| vertices[a].1.total_cmp(&vertices[b].1)).unwrap();
        vertices.swap(0, pivot);
        let (x_best, f_best) = vertices[0].clone();
        let edges = DMatrix::from_fn(n, n, |r, c| vertices[r + 1].0[c] - x_best[c]);
        let Some(inverse) = edges.clone().try_inverse() else {
            // collapsed simplex: rebuild it around the best point
            for i in 0..n {
                let mut e = vec![0.0; n];
                e[i] = rho;
                let v = place(&x_best, &e, bounds);
                if trace.len() >= budget {
                    break;
                }
                let fv = evaluate(&v, &mut trace)?;
                vertices[i + 1] = (v, fv);
            }
            continue;
        };
        // distance of each vertex from the pivot, and from the face opposite it
        let veta: Vec<f64> = (0..n).map(|j| edges.row(j).norm()).collect();
        let vsig: Vec<f64> = (0..n).map(|j| 1.0 / inverse.column(j).norm()).collect();
        let acceptable = veta.iter().all(|&d| d <= 1.1 * rho) && vsig.iter().all(|&d| d >= 0.25 * rho);

        let rhs = DVector::from_fn(n, |r, _| vertices[r + 1].1 - f_best);
        let g = &inverse * rhs;
        let gnorm = g.norm();
        let mut poor = true;
        // descent direction with components into active bounds removed
        let dir: Vec<f64> = x_best
            .iter()
            .zip(g.iter())
            .zip(bounds)
            .map(|((x, gi), (lo, hi))| if (*x <= *lo && *gi > 0.0) || (*x >= *hi && *gi < 0.0) { 0.0 } else { -gi })
            .collect();
        let dnorm = dot(&dir, &dir).sqrt();
        if gnorm > 0.0 && dnorm > 0.0 {
            let mut trial: Vec<f64> = x_best.iter().zip(&dir).map(|(x, di)| x + rho * di / dnorm).collect();
            clip(&mut trial, bounds);
            let d: Vec<f64> = trial.iter().zip(&x_best).map(|(a, b)| a - b).collect();
            let predicted = -g.iter().zip(&d).map(|(gi, di)| gi * di).sum::<f64>();
            if predicted > 0.0 && dot(&d, &d).sqrt() >= 0.1 * rho {
                let ft = evaluate(&trial, &mut trace)?;
                let ratio = (f_best - ft) / predicted;
                // replace the vertex whose swap best preserves simplex volume
                let coeffs = inverse.transpose() * DVector::from_column_slice(&d);
                let (j, c) = (0..n)
                    .map(|j| (j, coeffs[j].abs() * (veta[j] / rho).max(1.0)))
                    .max_by(|a, b| a.1.total_cmp(&b.1))
                    .unwrap();
                if ft < f_best || c > 1.0 {
                    vertices[j + 1] = (trial, ft);
                }
                poor = ratio <= 0.1;
            }
        }
        if !poor {
            repairs = 0;
            continue;
        }
        // clipping can undo a repair on a face of the box, so cap the streak
        if !acceptable && repairs < n {
            repairs += 1;
            if trace.len() >= budget {
                break;
            }
            let j = if veta.iter().any(|&d| d > 1.1 * rho) {
                (0..n).max_by(|&a, &b| veta[a].total_cmp(&veta[b])).unwrap()
            } else {
                (0..n).min_by(|&a, &b| vsig[a].total_cmp(&vsig[b])).unwrap()
            };
            let col = inverse.column(j);
            let scale = 0.5 * rho / col.norm();
            let sign = if g.dot(&col) > 0.0 { -1.0 } else { 1.0 };
            let step: Vec<f64> = col.iter().map(|c| sign * scale * c).collect();
            let v = place(&x_best, &step, bounds);
            let fv = evaluate(&v, &mut trace)?;
            vertices[j + 1] = (v, fv);
            continue;
        }
        repairs = 0;
        if rho <= rho_end {
            converged = true;
            break;
        }
        rho = if rho > 3.0 * rho_end { 0.5 * rho } else { rho_end };
    }
    let pivot = (0..vertices.len()).min_by(|&a, &b| vertices[a].1.total_cmp(&vertices[b].1)).unwrap();
    let (best_params, best_objective) = vertices.swap_remove(pivot);
    Ok(OptimizationRun {
        best_params,
        best_objective,
        iterations: trace.len(),
        objective_trace: trace,
        evaluations: 0,
        converged,
        elapsed_seconds: 0.0,
    })
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ObjectiveMode {
    #[default]
    Energy,
    NegSuccess,
}

/// Refinement tolerance used to calibrate the objective's slice count.
pub const OBJECTIVE_REFINEMENT_TOLERANCE: f64 = 1e-6;

/// Fixed-step objective for one `(problem, spec, T)`.
///
/// The slice count is calibrated once: the refined count at the standard-ASP
/// knots (at [`OBJECTIVE_REFINEMENT_TOLERANCE`] or the integrator's own
/// tolerance, whichever is looser), raised to cover the worst-case Hamiltonian
/// norm allowed by the bound. Keeping it fixed makes the objective a smooth
/// function of the knots.
pub struct Objective<'a> {
    pub problem: &'a AnnealProblem,
    pub spec: &'a ScheduleSpec,
    pub total_time: f64,
    pub mode: ObjectiveMode,
    pub steps: usize,
    pub initial_state: Vec<Complex64>,
    pub target: SpectrumResult,
}

impl<'a> Objective<'a> {
    pub fn new(
        problem: &'a AnnealProblem,
        spec: &'a ScheduleSpec,
        total_time: f64,
        integrator: &IntegratorConfig,
        mode: ObjectiveMode,
    ) -> Result<Self> {
        spec.validate()?;
        integrator.validate()?;
        let initial_state = initial_state(problem)?;
        let target = target_spectrum(problem)?;
        let reference = assemble(spec, &ScheduleParams::standard_asp_knots(spec), total_time)
            .or_else(|_| assemble(spec, &even_switches(spec, total_time), total_time))?;
        let loose = IntegratorConfig {
            refinement_tolerance: integrator.refinement_tolerance.max(OBJECTIVE_REFINEMENT_TOLERANCE),
            ..integrator.clone()
        };
        let calibrated =
            if total_time > 0.0 { propagate(problem, &reference, &loose, &initial_state, None)?.steps_used } else { 0 };
        let worst = match spec.parameterization {
            Parameterization::PiecewiseLinear => {
                let mut extreme = ScheduleParams::standard_asp_knots(spec);
                extreme.0.iter_mut().for_each(|v| *v = spec.amplitude_bound);
                assemble(spec, &extreme, total_time)?
            }
            Parameterization::BangBang => reference.clone(),
        };
        let by_norm = initial_steps(problem, &worst, integrator)?;
        Ok(Objective { problem, spec, total_time, mode, steps: calibrated.max(by_norm), initial_state, target })
    }

    pub fn schedules(&self, params: &[f64]) -> Result<ScheduleSet> {
        assemble(self.spec, &ScheduleParams(params.to_vec()), self.total_time)
    }

    pub fn evolve(&self, params: &[f64]) -> Result<EvolutionResult> {
        let s = self.schedules(params)?;
        propagate_fixed(self.problem, &s, self.steps, &self.initial_state, Some(&self.target))
    }

    pub fn evaluate(&self, params: &[f64]) -> Result<f64> {
        let r = self.evolve(params)?;
        Ok(match self.mode {
            ObjectiveMode::Energy => r.energy,
            ObjectiveMode::NegSuccess => -r.success_probability.unwrap_or(0.0),
        })
    }

    /// Propagation at `params` with full step-halving refinement, starting
    /// from the calibrated slice count.
    pub fn evolve_refined(&self, params: &[f64], integrator: &IntegratorConfig) -> Result<EvolutionResult> {
        let s = self.schedules(params)?;
        propagate_from(self.problem, &s, integrator, self.steps, &self.initial_state, Some(&self.target))
    }
}

fn even_switches(spec: &ScheduleSpec, total_time: f64) -> ScheduleParams {
    let s = spec.split_count as f64;
    let per: Vec<f64> = (1..spec.split_count).map(|i| total_time * i as f64 / s).collect();
    ScheduleParams(per.iter().copied().cycle().take(spec.param_len()).collect())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum InitStrategy {
    /// Standard-ASP knots with uniform jitter; navigator knots uniform in
    /// `[-navigator_spread, navigator_spread]`. Bang-bang switches start evenly
    /// spaced and are jittered by `jitter * T`.
    AspCurve {
        jitter: f64,
        navigator_spread: f64,
        seed: u64,
    },
    Explicit {
        params: Vec<f64>,
    },
}

impl Default for InitStrategy {
    fn default() -> Self {
        InitStrategy::AspCurve { jitter: 0.05, navigator_spread: 0.05, seed: 0 }
    }
}

impl InitStrategy {
    pub fn with_seed(&self, new_seed: u64) -> Self {
        match self {
            InitStrategy::AspCurve { jitter, navigator_spread, .. } => {
                InitStrategy::AspCurve { jitter: *jitter, navigator_spread: *navigator_spread, seed: new_seed }
            }
            other => other.clone(),
        }
    }

    pub fn initial_params(&self, spec: &ScheduleSpec, total_time: f64) -> Result<Vec<f64>> {
        match self {
            InitStrategy::Explicit { params } => {
                if params.len() != spec.param_len() {
                    return Err(Error::ParameterCount { expected: spec.param_len(), got: params.len() });
                }
                Ok(params.clone())
            }
            &InitStrategy::AspCurve { jitter, navigator_spread, seed } => {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let mut v = match spec.parameterization {
                    Parameterization::PiecewiseLinear => ScheduleParams::standard_asp_knots(spec).0,
                    Parameterization::BangBang => even_switches(spec, total_time).0,
                };
                let scale = match spec.parameterization {
                    Parameterization::PiecewiseLinear => 1.0,
                    Parameterization::BangBang => total_time,
                };
                let nav_start = spec.offset(Role::Navigator, 0);
                for (i, x) in v.iter_mut().enumerate() {
                    let is_nav = i >= nav_start && spec.parameterization == Parameterization::PiecewiseLinear;
                    let spread = if is_nav { navigator_spread } else { jitter * scale };
                    if spread > 0.0 {
                        *x += rng.gen_range(-spread..=spread);
                    }
                }
                let bounds = spec.bounds(total_time);
                clip(&mut v, &bounds);
                Ok(v)
            }
        }
    }
}

#[derive(Clone, Debug)]
pub struct VsqsResult {
    pub run: OptimizationRun,
    pub evolution: EvolutionResult,
    pub schedules: ScheduleSet,
    pub ground_energy: f64,
    /// Fixed slice count used inside the optimization loop.
    pub objective_steps: usize,
}

impl VsqsResult {
    pub fn energy_error(&self) -> f64 {
        self.evolution.energy - self.ground_energy
    }
}

/// Initializes knots, optimizes them, and re-propagates the best schedule with
/// full refinement. With `restarts > 0` the loop is rerun from freshly seeded
/// initial knots and the lowest objective wins.
#[allow(clippy::too_many_arguments)]
pub fn run_vsqs(
    problem: &AnnealProblem,
    spec: &ScheduleSpec,
    total_time: f64,
    optimizer: &OptimizerConfig,
    integrator: &IntegratorConfig,
    init: &InitStrategy,
    mode: ObjectiveMode,
    restarts: usize,
) -> Result<VsqsResult> {
    let objective = Objective::new(problem, spec, total_time, integrator, mode)?;
    let bounds = spec.bounds(total_time);
    let f = |x: &[f64]| objective.evaluate(x);
    let mut best: Option<OptimizationRun> = None;
    for r in 0..=restarts {
        let strategy = match init {
            InitStrategy::AspCurve { seed, .. } => init.with_seed(seed.wrapping_add(r as u64)),
            other => other.clone(),
        };
        let x0 = strategy.initial_params(spec, total_time)?;
        let run = minimize(&f, &x0, &bounds, optimizer)?;
        if best.as_ref().map_or(true, |b| run.best_objective < b.best_objective) {
            best = Some(run);
        }
    }
    let run = best.expect("at least one run");
    let evolution = objective.evolve_refined(&run.best_params, integrator)?;
    let schedules = objective.schedules(&run.best_params)?;
    Ok(VsqsResult {
        ground_energy: objective.target.ground_energy,
        objective_steps: objective.steps,
        run,
        evolution,
        schedules,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TimeAccounting {
    pub p_single: f64,
    pub t_single: f64,
    pub n_opt: usize,
    pub m: usize,
    pub n_add: usize,
    pub total_anneal_time: f64,
    pub achieved_probability: f64,
}

/// Repetitions needed to boost a single-shot success probability to
/// `target_probability`, and the total annealing time including the `n_opt`
/// optimizer iterations of `m` shots each.
pub fn time_accounting(
    p_single: f64,
    t_single: f64,
    n_opt: usize,
    m: usize,
    target_probability: f64,
) -> Result<TimeAccounting> {
    if !(p_single > 0.0 && p_single <= 1.0) {
        return Err(Error::config("single-run success probability must be in (0, 1]"));
    }
    if !(target_probability > 0.0 && target_probability < 1.0) {
        return Err(Error::config("target probability must be in (0, 1)"));
    }
    let achieved = |n: usize| 1.0 - (1.0 - p_single).powi(n as i32);
    let mut n_add = if p_single >= 1.0 {
        1
    } else {
        ((1.0 - target_probability).ln() / (1.0 - p_single).ln()).ceil().max(1.0) as usize
    };
    // guard the logarithm against rounding either way
    while n_add > 1 && achieved(n_add - 1) >= target_probability {
        n_add -= 1;
    }
    while achieved(n_add) < target_probability {
        n_add += 1;
    }
    Ok(TimeAccounting {
        p_single,
        t_single,
        n_opt,
        m,
        n_add,
        total_anneal_time: t_single * (n_opt * m + n_add) as f64,
        achieved_probability: achieved(n_add),
    })
}
