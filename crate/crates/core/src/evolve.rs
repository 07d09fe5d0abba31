//! Time-ordered propagation under `H(t) = sum_g s_g(t) H_g` and terminal
//! measurement.
//!
//! Each slice uses the midpoint Hamiltonian `H(t_k + dt/2)` and its exact
//! exponential: a dense eigendecomposition for registers up to
//! [`DENSE_SLICE_MAX_DIM`], a converged Lanczos exponential above that. The
//! slice count is doubled until the terminal energy stops moving by more than
//! the refinement tolerance.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::operators::{
    exact_ground, inner, norm, qubitwise_commuting_groups, Axis, CompiledPauli, SpectrumResult, TermList,
    DEFAULT_DEGENERACY_TOL,
};
use crate::problems::AnnealProblem;
use crate::schedule::{Role, ScheduleSet};

pub const DENSE_SLICE_MAX_DIM: usize = 16;

/// Minimum number of slices in any non-trivial propagation.
const MIN_STEPS: usize = 4;
/// Upper bound on `dt * ||H||` for the starting slice count.
const MAX_PHASE_PER_STEP: f64 = 0.5;
const KRYLOV_TOL: f64 = 1e-14;
const KRYLOV_MAX_DIM: usize = 48;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct IntegratorConfig {
    pub base_steps_per_unit_time: usize,
    pub refinement_tolerance: f64,
    pub max_refinements: usize,
}

impl Default for IntegratorConfig {
    fn default() -> Self {
        IntegratorConfig { base_steps_per_unit_time: 100, refinement_tolerance: 1e-8, max_refinements: 8 }
    }
}

impl IntegratorConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.refinement_tolerance > 0.0) {
            return Err(Error::config("refinement tolerance must be positive"));
        }
        if self.base_steps_per_unit_time == 0 {
            return Err(Error::config("base steps per unit time must be positive"));
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct EvolutionResult {
    pub final_state: Vec<Complex64>,
    /// `<psi|H_fin|psi>` against the accurate couplings, identity offset included.
    pub energy: f64,
    pub success_probability: Option<f64>,
    /// `| ||psi(T)|| - 1 |`.
    pub norm_drift: f64,
    pub steps_used: usize,
    pub refinements: usize,
}

/// `H(t) = sum_s v_s(t) H_s`, one fixed operator `H_s` per schedule slot
/// (a role's group), each stored as per-flip-mask amplitude tables so that
/// `H_s x = sum_f out[b ^ f] += amp_f[b] x[b]`.
pub struct DrivenHamiltonian<'a> {
    schedules: &'a ScheduleSet,
    dim: usize,
    slots: Vec<(Role, usize)>,
    /// Sum of `|coefficient|` per slot.
    slot_weights: Vec<f64>,
    tables: SlotTables,
}

enum SlotTables {
    DenseReal(Vec<DMatrix<f64>>),
    DenseComplex(Vec<DMatrix<Complex64>>),
    /// `(flip, [(slot, amplitudes)])`
    Sparse(Vec<(usize, Vec<(usize, Vec<Complex64>)>)>),
}

impl<'a> DrivenHamiltonian<'a> {
    pub fn new(problem: &AnnealProblem, schedules: &'a ScheduleSet) -> Result<Self> {
        let counts = problem.term_counts();
        let mut slots = Vec::new();
        let mut slot_of = std::collections::HashMap::new();
        // (slot, compiled word, coefficient)
        let mut entries: Vec<(usize, CompiledPauli, f64)> = Vec::new();

        let roles: [(Role, Option<&TermList>); 3] = [
            (Role::Initial, Some(&problem.h_ini)),
            (Role::Final, Some(&problem.h_fin)),
            (Role::Navigator, problem.h_nav.as_ref()),
        ];
        for (ri, (role, terms)) in roles.into_iter().enumerate() {
            let Some(terms) = terms else { continue };
            let assignment = schedules.assignment.for_role(role);
            if assignment.is_empty() {
                // role switched off (e.g. navigator with zero groups)
                if role != Role::Navigator && counts[ri] > 0 {
                    return Err(Error::config(format!("no schedule assignment for {role:?} terms")));
                }
                continue;
            }
            if assignment.len() != counts[ri] {
                return Err(Error::config(format!(
                    "{role:?}: schedule assigns {} terms, problem has {}",
                    assignment.len(),
                    counts[ri]
                )));
            }
            for (k, t) in terms.schedulable().enumerate() {
                let g = assignment[k];
                if g >= schedules.schedules(role).len() {
                    return Err(Error::config(format!("{role:?}: missing schedule for group {g}")));
                }
                let slot = *slot_of.entry((role, g)).or_insert_with(|| {
                    slots.push((role, g));
                    slots.len() - 1
                });
                entries.push((slot, t.word.compile(), t.coefficient));
            }
        }
        let dim = problem.h_fin.dim();
        let mut slot_weights = vec![0.0; slots.len()];
        for (s, _, c) in &entries {
            slot_weights[*s] += c.abs();
        }
        let tables = if dim <= DENSE_SLICE_MAX_DIM {
            if entries.iter().all(|(_, p, _)| p.is_real()) {
                let mut mats = vec![DMatrix::<f64>::zeros(dim, dim); slots.len()];
                for (s, p, c) in &entries {
                    for b in 0..dim {
                        mats[*s][(b ^ p.flip, b)] += c * p.amplitude(b).re;
                    }
                }
                SlotTables::DenseReal(mats)
            } else {
                let mut mats = vec![DMatrix::from_element(dim, dim, ZERO); slots.len()];
                for (s, p, c) in &entries {
                    for b in 0..dim {
                        mats[*s][(b ^ p.flip, b)] += p.amplitude(b) * *c;
                    }
                }
                SlotTables::DenseComplex(mats)
            }
        } else {
            let mut sparse: Vec<(usize, Vec<(usize, Vec<Complex64>)>)> = Vec::new();
            for (s, p, c) in &entries {
                let fi = match sparse.iter().position(|(f, _)| *f == p.flip) {
                    Some(i) => i,
                    None => {
                        sparse.push((p.flip, Vec::new()));
                        sparse.len() - 1
                    }
                };
                let per_slot = &mut sparse[fi].1;
                let si = match per_slot.iter().position(|(slot, _)| slot == s) {
                    Some(i) => i,
                    None => {
                        per_slot.push((*s, vec![ZERO; dim]));
                        per_slot.len() - 1
                    }
                };
                for (b, a) in per_slot[si].1.iter_mut().enumerate() {
                    *a += p.amplitude(b) * *c;
                }
            }
            SlotTables::Sparse(sparse)
        };
        Ok(DrivenHamiltonian { schedules, dim, slots, slot_weights, tables })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Schedule value of every slot at time `t`.
    pub fn slot_values_at(&self, t: f64) -> Result<Vec<f64>> {
        self.slots.iter().map(|&(role, g)| self.schedules.group_value(role, g, t)).collect()
    }

    /// Upper bound on `||H(t)||` over the whole run.
    pub fn norm_bound(&self) -> f64 {
        self.slots
            .iter()
            .zip(&self.slot_weights)
            .map(|(&(role, g), w)| self.schedules.schedules(role)[g].max_abs() * w)
            .sum()
    }

    /// `out = H x` for the given slot values.
    pub fn apply(&self, values: &[f64], x: &[Complex64], out: &mut [Complex64]) {
        match &self.tables {
            SlotTables::DenseReal(mats) => {
                out.fill(ZERO);
                for (m, &v) in mats.iter().zip(values) {
                    for c in 0..self.dim {
                        for r in 0..self.dim {
                            out[r] += x[c] * (m[(r, c)] * v);
                        }
                    }
                }
            }
            SlotTables::DenseComplex(mats) => {
                out.fill(ZERO);
                for (m, &v) in mats.iter().zip(values) {
                    for c in 0..self.dim {
                        for r in 0..self.dim {
                            out[r] += x[c] * m[(r, c)] * v;
                        }
                    }
                }
            }
            SlotTables::Sparse(_) => {
                let op = self.slice_operator(values);
                apply_flips(&op, x, out);
            }
        }
    }

    /// `psi <- exp(-i H dt) psi` for fixed slot values.
    pub fn step(&self, values: &[f64], psi: &mut [Complex64], dt: f64) {
        match &self.tables {
            SlotTables::DenseReal(mats) => {
                let mut h = DMatrix::<f64>::zeros(self.dim, self.dim);
                for (m, &v) in mats.iter().zip(values) {
                    if v != 0.0 {
                        h += m * v;
                    }
                }
                let u = h.map(|x| Complex64::new(0.0, -x * dt)).exp();
                let out = u * DVector::from_column_slice(psi);
                psi.copy_from_slice(out.as_slice());
            }
            SlotTables::DenseComplex(mats) => {
                let mut h = DMatrix::from_element(self.dim, self.dim, ZERO);
                for (m, &v) in mats.iter().zip(values) {
                    if v != 0.0 {
                        h += m * Complex64::new(v, 0.0);
                    }
                }
                let u = (h * Complex64::new(0.0, -dt)).exp();
                let out = u * DVector::from_column_slice(psi);
                psi.copy_from_slice(out.as_slice());
            }
            SlotTables::Sparse(_) => {
                let op = self.slice_operator(values);
                krylov_exp(&|x: &[Complex64], out: &mut [Complex64]| apply_flips(&op, x, out), psi, dt, 0);
            }
        }
    }

    fn slice_operator(&self, values: &[f64]) -> Vec<(usize, Vec<Complex64>)> {
        let SlotTables::Sparse(sparse) = &self.tables else { unreachable!() };
        sparse
            .iter()
            .map(|(flip, per_slot)| {
                let mut amp = vec![ZERO; self.dim];
                for (s, table) in per_slot {
                    let v = values[*s];
                    if v != 0.0 {
                        amp.iter_mut().zip(table).for_each(|(a, t)| *a += t * v);
                    }
                }
                (*flip, amp)
            })
            .collect()
    }
}

fn apply_flips(op: &[(usize, Vec<Complex64>)], x: &[Complex64], out: &mut [Complex64]) {
    out.fill(ZERO);
    for (flip, amp) in op {
        if *flip == 0 {
            out.iter_mut().zip(amp.iter().zip(x)).for_each(|(o, (a, xb))| *o += a * xb);
        } else {
            for (b, (a, xb)) in amp.iter().zip(x).enumerate() {
                out[b ^ flip] += a * xb;
            }
        }
    }
}

/// `psi <- exp(-i H dt) psi` by a Lanczos projection, halving `dt` when the
/// Krylov space does not resolve the exponential.
fn krylov_exp(apply: &dyn Fn(&[Complex64], &mut [Complex64]), psi: &mut [Complex64], dt: f64, depth: usize) {
    let dim = psi.len();
    let beta0 = norm(psi);
    if beta0 == 0.0 || dt == 0.0 {
        return;
    }
    let m_max = KRYLOV_MAX_DIM.min(dim);
    let mut basis: Vec<Vec<Complex64>> = vec![psi.iter().map(|a| a / beta0).collect()];
    let mut alpha: Vec<f64> = Vec::new();
    let mut beta: Vec<f64> = Vec::new();
    let mut w = vec![ZERO; dim];
    let mut y: Vec<Complex64> = Vec::new();
    let mut converged = false;
    let mut previous_estimate = f64::INFINITY;
    for j in 0..m_max {
        apply(&basis[j], &mut w);
        let a = inner(&basis[j], &w).re;
        for (wi, vi) in w.iter_mut().zip(&basis[j]) {
            *wi -= vi * a;
        }
        if j > 0 {
            let b = beta[j - 1];
            for (wi, vi) in w.iter_mut().zip(&basis[j - 1]) {
                *wi -= vi * b;
            }
        }
        // full reorthogonalization
        for v in &basis {
            let o = inner(v, &w);
            for (wi, vi) in w.iter_mut().zip(v) {
                *wi -= vi * o;
            }
        }
        alpha.push(a);
        let b = norm(&w);
        let invariant = b <= 1e-14 * (1.0 + a.abs());
        let last = j + 1 == m_max;
        if invariant || last || j >= 2 {
            y = tridiagonal_exp(&alpha, &beta, dt);
            // a single small tail coefficient can be accidental
            let estimate = b * y[j].norm();
            if invariant || (estimate < KRYLOV_TOL && previous_estimate < KRYLOV_TOL) {
                converged = true;
                break;
            }
            previous_estimate = estimate;
        }
        if last {
            break;
        }
        beta.push(b);
        basis.push(w.iter().map(|x| x / b).collect());
    }
    if !converged && depth < 20 {
        krylov_exp(apply, psi, dt / 2.0, depth + 1);
        krylov_exp(apply, psi, dt / 2.0, depth + 1);
        return;
    }
    psi.fill(ZERO);
    for (v, &c) in basis.iter().zip(&y) {
        let c = c * beta0;
        for (p, vi) in psi.iter_mut().zip(v) {
            *p += vi * c;
        }
    }
}

/// `exp(-i dt T) e_1` for the symmetric tridiagonal `T(alpha, beta)`.
fn tridiagonal_exp(alpha: &[f64], beta: &[f64], dt: f64) -> Vec<Complex64> {
    let m = alpha.len();
    let mut t = DMatrix::<f64>::zeros(m, m);
    for i in 0..m {
        t[(i, i)] = alpha[i];
        if i + 1 < m {
            t[(i, i + 1)] = beta[i];
            t[(i + 1, i)] = beta[i];
        }
    }
    t.map(|x| Complex64::new(0.0, -x * dt)).exp().column(0).iter().copied().collect()
}

fn check_initial(problem: &AnnealProblem, state: &[Complex64]) -> Result<()> {
    let dim = problem.h_fin.dim();
    if state.len() != dim {
        return Err(Error::DimensionMismatch { expected: dim, got: state.len() });
    }
    let n = norm(state);
    if (n - 1.0).abs() > 1e-9 {
        return Err(Error::NotNormalized { norm: n });
    }
    Ok(())
}

/// `<psi|H|psi>` without a normalization check.
fn raw_expectation(terms: &TermList, state: &[Complex64]) -> f64 {
    let mut out = vec![ZERO; state.len()];
    for t in terms.terms() {
        t.word.compile().accumulate(t.coefficient, state, &mut out);
    }
    inner(state, &out).re
}

fn finish(
    problem: &AnnealProblem,
    state: Vec<Complex64>,
    target: Option<&SpectrumResult>,
    steps_used: usize,
    refinements: usize,
) -> EvolutionResult {
    EvolutionResult {
        energy: raw_expectation(&problem.accurate_h_fin, &state),
        success_probability: target.map(|g| success_probability(&state, &g.ground_space)),
        norm_drift: (norm(&state) - 1.0).abs(),
        final_state: state,
        steps_used,
        refinements,
    }
}

/// Propagation with a fixed number of midpoint slices.
pub fn propagate_fixed(
    problem: &AnnealProblem,
    schedules: &ScheduleSet,
    steps: usize,
    initial_state: &[Complex64],
    target: Option<&SpectrumResult>,
) -> Result<EvolutionResult> {
    check_initial(problem, initial_state)?;
    let total = schedules.total_time;
    let mut psi = initial_state.to_vec();
    if total == 0.0 || steps == 0 {
        return Ok(finish(problem, psi, target, 0, 0));
    }
    let driven = DrivenHamiltonian::new(problem, schedules)?;
    let dt = total / steps as f64;
    for k in 0..steps {
        let t_mid = ((k as f64 + 0.5) * dt).min(total);
        let v = driven.slot_values_at(t_mid)?;
        driven.step(&v, &mut psi, dt);
    }
    Ok(finish(problem, psi, target, steps, 0))
}

/// Starting slice count for a run of `total` time.
pub fn initial_steps(problem: &AnnealProblem, schedules: &ScheduleSet, cfg: &IntegratorConfig) -> Result<usize> {
    let total = schedules.total_time;
    if total == 0.0 {
        return Ok(0);
    }
    let driven = DrivenHamiltonian::new(problem, schedules)?;
    let by_rate = (cfg.base_steps_per_unit_time as f64 * total).ceil();
    let by_norm = (total * driven.norm_bound() / MAX_PHASE_PER_STEP).ceil();
    Ok((by_rate.max(by_norm) as usize).max(MIN_STEPS))
}

/// Propagation with step-halving until the terminal energy changes by less
/// than `cfg.refinement_tolerance`. The state is never renormalized.
pub fn propagate(
    problem: &AnnealProblem,
    schedules: &ScheduleSet,
    cfg: &IntegratorConfig,
    initial_state: &[Complex64],
    target: Option<&SpectrumResult>,
) -> Result<EvolutionResult> {
    propagate_from(problem, schedules, cfg, 0, initial_state, target)
}

/// As [`propagate`], with the refinement ladder starting at no fewer than
/// `min_steps` slices.
pub fn propagate_from(
    problem: &AnnealProblem,
    schedules: &ScheduleSet,
    cfg: &IntegratorConfig,
    min_steps: usize,
    initial_state: &[Complex64],
    target: Option<&SpectrumResult>,
) -> Result<EvolutionResult> {
    cfg.validate()?;
    check_initial(problem, initial_state)?;
    let n0 = initial_steps(problem, schedules, cfg)?;
    if n0 == 0 {
        return propagate_fixed(problem, schedules, 0, initial_state, target);
    }
    let n0 = n0.max(min_steps);
    let mut previous = propagate_fixed(problem, schedules, n0, initial_state, target)?;
    let mut last_change = f64::INFINITY;
    for r in 1..=cfg.max_refinements {
        let mut next = propagate_fixed(problem, schedules, n0 << r, initial_state, target)?;
        last_change = (next.energy - previous.energy).abs();
        next.refinements = r;
        if last_change < cfg.refinement_tolerance {
            return Ok(next);
        }
        previous = next;
    }
    Err(Error::NotConverged { refinements: cfg.max_refinements, last_change })
}

/// Ground state of the initial Hamiltonian (first oracle vector when degenerate).
pub fn initial_state(problem: &AnnealProblem) -> Result<Vec<Complex64>> {
    let g = exact_ground(&problem.h_ini, DEFAULT_DEGENERACY_TOL)?;
    Ok(g.ground_space[0].clone())
}

/// Oracle ground energy and ground space of the accurate final Hamiltonian.
pub fn target_spectrum(problem: &AnnealProblem) -> Result<SpectrumResult> {
    exact_ground(&problem.accurate_h_fin, DEFAULT_DEGENERACY_TOL)
}

/// Total weight of `state` on the (possibly degenerate) ground space.
pub fn success_probability(state: &[Complex64], ground_space: &[Vec<Complex64>]) -> f64 {
    ground_space.iter().map(|g| inner(g, state).norm_sqr()).sum::<f64>().clamp(0.0, 1.0)
}

/// Energy against `accurate_terms`. Without `shots` this is the exact
/// expectation; with `shots`, each qubit-wise commuting group is sampled
/// `shots` times in its rotated basis and Pauli words are estimated from
/// outcome parities. The identity offset is always added exactly.
pub fn measure_energy(
    state: &[Complex64],
    accurate_terms: &TermList,
    shots: Option<u64>,
    rng_seed: u64,
) -> Result<f64> {
    if state.len() != accurate_terms.dim() {
        return Err(Error::DimensionMismatch { expected: accurate_terms.dim(), got: state.len() });
    }
    let n = norm(state);
    if (n - 1.0).abs() > 1e-9 {
        return Err(Error::NotNormalized { norm: n });
    }
    let Some(shots) = shots else {
        return Ok(raw_expectation(accurate_terms, state));
    };
    if shots == 0 {
        return Err(Error::config("shot count must be positive"));
    }
    let schedulable: Vec<_> = accurate_terms.schedulable().cloned().collect();
    let sub = TermList::new(accurate_terms.n_qubits(), schedulable.clone())?;
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let mut energy = accurate_terms.identity_offset();
    for group in qubitwise_commuting_groups(&sub) {
        let mut rotated = state.to_vec();
        let mut bases: Vec<Option<Axis>> = vec![None; accurate_terms.n_qubits()];
        for &i in &group {
            for &(q, a) in schedulable[i].word.factors() {
                bases[q] = Some(a);
            }
        }
        for (q, b) in bases.iter().enumerate() {
            match b {
                Some(Axis::X) => hadamard(&mut rotated, q),
                Some(Axis::Y) => {
                    s_dagger(&mut rotated, q);
                    hadamard(&mut rotated, q);
                }
                _ => {}
            }
        }
        let cumulative: Vec<f64> = rotated
            .iter()
            .scan(0.0, |acc, a| {
                *acc += a.norm_sqr();
                Some(*acc)
            })
            .collect();
        let total = *cumulative.last().unwrap();
        let mut parity_sums = vec![0i64; group.len()];
        let masks: Vec<usize> =
            group.iter().map(|&i| schedulable[i].word.factors().iter().fold(0, |m, &(q, _)| m | (1 << q))).collect();
        for _ in 0..shots {
            let r = rng.gen::<f64>() * total;
            let outcome = cumulative.partition_point(|&c| c <= r).min(cumulative.len() - 1);
            for (s, m) in parity_sums.iter_mut().zip(&masks) {
                *s += if (outcome & m).count_ones() % 2 == 0 { 1 } else { -1 };
            }
        }
        for (&i, &s) in group.iter().zip(&parity_sums) {
            energy += schedulable[i].coefficient * s as f64 / shots as f64;
        }
    }
    Ok(energy)
}

fn hadamard(state: &mut [Complex64], qubit: usize) {
    let bit = 1 << qubit;
    let r = std::f64::consts::FRAC_1_SQRT_2;
    for b in 0..state.len() {
        if b & bit == 0 {
            let (a0, a1) = (state[b], state[b | bit]);
            state[b] = (a0 + a1) * r;
            state[b | bit] = (a0 - a1) * r;
        }
    }
}

fn s_dagger(state: &mut [Complex64], qubit: usize) {
    let bit = 1 << qubit;
    for (b, a) in state.iter_mut().enumerate() {
        if b & bit != 0 {
            *a *= Complex64::new(0.0, -1.0);
        }
    }
}
