//! Schedule functions and their (S, I, F) parameterization.
//!
//! Every schedulable term of the initial, final and navigator Hamiltonians is
//! assigned to a group of its role, and each group owns one schedule. For the
//! piecewise-linear form a group carries `S - 1` free interior knots; the
//! endpoints are fixed by the role so the boundary conditions hold exactly.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Initial,
    Final,
    Navigator,
}

impl Role {
    pub const ALL: [Role; 3] = [Role::Initial, Role::Final, Role::Navigator];

    /// Schedule value at `t = 0` and `t = T`.
    pub fn endpoints(self) -> (f64, f64) {
        match self {
            Role::Initial => (1.0, 0.0),
            Role::Final => (0.0, 1.0),
            Role::Navigator => (0.0, 0.0),
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Role::Initial => "A",
            Role::Final => "B",
            Role::Navigator => "C",
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Parameterization {
    #[default]
    PiecewiseLinear,
    BangBang,
}

/// Term-to-group map per role, indexed by schedulable (non-identity) term order.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroupAssignment {
    pub initial: Vec<usize>,
    pub final_: Vec<usize>,
    pub navigator: Vec<usize>,
}

impl GroupAssignment {
    /// One term per group up to the group count, then round-robin in term order.
    pub fn round_robin(counts: [usize; 3], groups: [usize; 3]) -> Self {
        // zero groups switches the role off entirely
        let rr = |n: usize, g: usize| if g == 0 { Vec::new() } else { (0..n).map(|k| k % g).collect() };
        GroupAssignment {
            initial: rr(counts[0], groups[0]),
            final_: rr(counts[1], groups[1]),
            navigator: rr(counts[2], groups[2]),
        }
    }

    pub fn for_role(&self, role: Role) -> &[usize] {
        match role {
            Role::Initial => &self.initial,
            Role::Final => &self.final_,
            Role::Navigator => &self.navigator,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScheduleSpec {
    pub split_count: usize,
    pub initial_groups: usize,
    pub final_groups: usize,
    pub navigator_groups: usize,
    pub amplitude_bound: f64,
    pub parameterization: Parameterization,
    pub assignment: GroupAssignment,
}

impl ScheduleSpec {
    /// Spec with the default round-robin assignment for the given schedulable
    /// term counts `[initial, final, navigator]`.
    pub fn new(
        (split_count, initial_groups, final_groups): (usize, usize, usize),
        navigator_groups: usize,
        amplitude_bound: f64,
        term_counts: [usize; 3],
    ) -> Result<Self> {
        let spec = ScheduleSpec {
            split_count,
            initial_groups,
            final_groups,
            navigator_groups,
            amplitude_bound,
            parameterization: Parameterization::PiecewiseLinear,
            assignment: GroupAssignment::round_robin(term_counts, [initial_groups, final_groups, navigator_groups]),
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn with_parameterization(mut self, p: Parameterization) -> Self {
        self.parameterization = p;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.split_count == 0 {
            return Err(Error::config("split count S must be positive"));
        }
        if !(self.amplitude_bound > 0.0) {
            return Err(Error::config("amplitude bound must be positive"));
        }
        for role in Role::ALL {
            let groups = self.groups(role);
            let assigned = self.assignment.for_role(role);
            if role != Role::Navigator && groups == 0 {
                return Err(Error::config(format!("{role:?} group count must be positive")));
            }
            if groups > assigned.len() {
                return Err(Error::config(format!(
                    "{role:?}: {groups} groups for only {} schedulable terms",
                    assigned.len()
                )));
            }
            if let Some(&bad) = assigned.iter().find(|&&g| g >= groups) {
                return Err(Error::config(format!("{role:?}: term mapped to missing group {bad}")));
            }
        }
        Ok(())
    }

    pub fn groups(&self, role: Role) -> usize {
        match role {
            Role::Initial => self.initial_groups,
            Role::Final => self.final_groups,
            Role::Navigator => self.navigator_groups,
        }
    }

    pub fn total_groups(&self) -> usize {
        self.initial_groups + self.final_groups + self.navigator_groups
    }

    /// Free parameters per group (interior knots or switch times).
    pub fn free_per_group(&self) -> usize {
        self.split_count - 1
    }

    pub fn param_len(&self) -> usize {
        self.free_per_group() * self.total_groups()
    }

    /// Offset of a group's parameters in the flattened vector
    /// (initial groups, then final, then navigator).
    pub fn offset(&self, role: Role, group: usize) -> usize {
        let before = match role {
            Role::Initial => 0,
            Role::Final => self.initial_groups,
            Role::Navigator => self.initial_groups + self.final_groups,
        };
        (before + group) * self.free_per_group()
    }

    /// Optimizer box: knot amplitudes within the bound, or switch times in `[0, T]`.
    pub fn bounds(&self, total_time: f64) -> Vec<(f64, f64)> {
        let b = match self.parameterization {
            Parameterization::PiecewiseLinear => (-self.amplitude_bound, self.amplitude_bound),
            Parameterization::BangBang => (0.0, total_time),
        };
        vec![b; self.param_len()]
    }
}

/// Flattened free parameters, laid out as described by [`ScheduleSpec::offset`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScheduleParams(pub Vec<f64>);

impl ScheduleParams {
    pub fn group<'a>(&'a self, spec: &ScheduleSpec, role: Role, group: usize) -> &'a [f64] {
        let o = spec.offset(role, group);
        &self.0[o..o + spec.free_per_group()]
    }

    /// Knots sampled from the standard ASP curve, the usual warm start.
    pub fn standard_asp_knots(spec: &ScheduleSpec) -> Self {
        let s = spec.split_count as f64;
        let mut v = Vec::with_capacity(spec.param_len());
        for role in Role::ALL {
            for _ in 0..spec.groups(role) {
                for i in 1..spec.split_count {
                    let u = (i as f64 / s).powi(2);
                    v.push(match role {
                        Role::Initial => 1.0 - u,
                        Role::Final => u,
                        Role::Navigator => 0.0,
                    });
                }
            }
        }
        ScheduleParams(v)
    }
}

/// Linear interpolation of `knots` (length `S + 1`, endpoints included) on
/// equal intervals `((i-1)T/S, iT/S]`.
pub fn eval_piecewise_linear(knots: &[f64], t: f64, total: f64, split: usize) -> Result<f64> {
    if knots.len() != split + 1 || split == 0 {
        return Err(Error::ParameterCount { expected: split + 1, got: knots.len() });
    }
    if !(0.0..=total).contains(&t) {
        return Err(Error::TimeOutOfRange { t, total });
    }
    if total == 0.0 || t == 0.0 {
        return Ok(knots[0]);
    }
    if t == total {
        return Ok(knots[split]);
    }
    let u = t * split as f64 / total;
    let i = (u.ceil() as usize).clamp(1, split);
    let w = (u - (i - 1) as f64).clamp(0.0, 1.0);
    Ok((1.0 - w) * knots[i - 1] + w * knots[i])
}

/// Piecewise-constant schedule that toggles between 0 and 1 at each switch
/// time. The value at `t = T` is the role endpoint.
pub fn eval_bang_bang(switch_times: &[f64], start_level: f64, end_value: f64, t: f64, total: f64) -> Result<f64> {
    if switch_times.windows(2).any(|w| w[1] <= w[0]) || switch_times.iter().any(|&s| !(0.0..=total).contains(&s)) {
        return Err(Error::NonMonotoneSwitches);
    }
    if !(0.0..=total).contains(&t) {
        return Err(Error::TimeOutOfRange { t, total });
    }
    if t == total {
        return Ok(end_value);
    }
    if t == 0.0 {
        return Ok(start_level);
    }
    let flips = switch_times.iter().take_while(|&&s| s <= t).count();
    Ok(if flips % 2 == 0 { start_level } else { 1.0 - start_level })
}

/// Standard ASP schedule `A = 1 - (t/T)^2`, `B = (t/T)^2`.
pub fn standard_asp(t: f64, total: f64) -> Result<(f64, f64)> {
    if !(0.0..=total).contains(&t) {
        return Err(Error::TimeOutOfRange { t, total });
    }
    if total == 0.0 {
        return Ok((1.0, 0.0));
    }
    let b = (t / total).powi(2);
    Ok((1.0 - b, b))
}

#[derive(Clone, Debug, PartialEq)]
pub enum Schedule {
    PiecewiseLinear { knots: Vec<f64> },
    BangBang { switches: Vec<f64>, start: f64, end: f64 },
    StandardAsp(Role),
    Constant(f64),
}

impl Schedule {
    pub fn value(&self, t: f64, total: f64) -> Result<f64> {
        match self {
            Schedule::PiecewiseLinear { knots } => eval_piecewise_linear(knots, t, total, knots.len() - 1),
            Schedule::BangBang { switches, start, end } => eval_bang_bang(switches, *start, *end, t, total),
            Schedule::StandardAsp(role) => {
                let (a, b) = standard_asp(t, total)?;
                Ok(match role {
                    Role::Initial => a,
                    Role::Final => b,
                    Role::Navigator => 0.0,
                })
            }
            Schedule::Constant(v) => Ok(*v),
        }
    }

    /// Upper bound on `|value(t)|` over the run.
    pub fn max_abs(&self) -> f64 {
        match self {
            Schedule::PiecewiseLinear { knots } => knots.iter().fold(0.0, |m, k| m.max(k.abs())),
            Schedule::BangBang { start, end, .. } => start.abs().max(end.abs()).max(1.0),
            Schedule::StandardAsp(_) => 1.0,
            Schedule::Constant(v) => v.abs(),
        }
    }
}

/// Evaluable schedules for every group of every role over a fixed total time.
#[derive(Clone, Debug, PartialEq)]
pub struct ScheduleSet {
    pub total_time: f64,
    pub initial: Vec<Schedule>,
    pub final_: Vec<Schedule>,
    pub navigator: Vec<Schedule>,
    pub assignment: GroupAssignment,
}

impl ScheduleSet {
    /// `A = 1 - (t/T)^2` on every initial term, `B = (t/T)^2` on every final
    /// term, navigator off.
    pub fn standard_asp(total_time: f64, term_counts: [usize; 3]) -> Self {
        ScheduleSet {
            total_time,
            initial: vec![Schedule::StandardAsp(Role::Initial)],
            final_: vec![Schedule::StandardAsp(Role::Final)],
            navigator: Vec::new(),
            assignment: GroupAssignment::round_robin(term_counts, [1, 1, 0]),
        }
    }

    /// Reversed anneal: the final Hamiltonian is switched off and the initial one on.
    pub fn reversed_asp(total_time: f64, term_counts: [usize; 3]) -> Self {
        let mut s = Self::standard_asp(total_time, term_counts);
        s.initial = vec![Schedule::StandardAsp(Role::Final)];
        s.final_ = vec![Schedule::StandardAsp(Role::Initial)];
        s
    }

    pub fn schedules(&self, role: Role) -> &[Schedule] {
        match role {
            Role::Initial => &self.initial,
            Role::Final => &self.final_,
            Role::Navigator => &self.navigator,
        }
    }

    pub fn group_value(&self, role: Role, group: usize, t: f64) -> Result<f64> {
        self.schedules(role)[group].value(t, self.total_time)
    }

    /// Schedule applied to a role's `term`-th schedulable term.
    pub fn term_schedule(&self, role: Role, term: usize) -> &Schedule {
        &self.schedules(role)[self.assignment.for_role(role)[term]]
    }

    pub fn term_value(&self, role: Role, term: usize, t: f64) -> Result<f64> {
        self.term_schedule(role, term).value(t, self.total_time)
    }
}

/// Builds the schedule set for `params` under `spec`.
pub fn assemble(spec: &ScheduleSpec, params: &ScheduleParams, total_time: f64) -> Result<ScheduleSet> {
    spec.validate()?;
    if params.0.len() != spec.param_len() {
        return Err(Error::ParameterCount { expected: spec.param_len(), got: params.0.len() });
    }
    if !(total_time >= 0.0) {
        return Err(Error::config("total time must be non-negative"));
    }
    let build = |role: Role| -> Vec<Schedule> {
        let (start, end) = role.endpoints();
        (0..spec.groups(role))
            .map(|g| {
                let free = params.group(spec, role, g);
                match spec.parameterization {
                    Parameterization::PiecewiseLinear => {
                        let mut knots = Vec::with_capacity(free.len() + 2);
                        knots.push(start);
                        knots.extend_from_slice(free);
                        knots.push(end);
                        Schedule::PiecewiseLinear { knots }
                    }
                    Parameterization::BangBang => {
                        // the optimizer sees an unordered set of switch times
                        let mut switches: Vec<f64> = free.iter().map(|s| s.clamp(0.0, total_time)).collect();
                        switches.sort_by(f64::total_cmp);
                        switches.dedup();
                        let level = match role {
                            Role::Initial => 1.0,
                            Role::Final | Role::Navigator => 0.0,
                        };
                        Schedule::BangBang { switches, start: level, end }
                    }
                }
            })
            .collect()
    };
    Ok(ScheduleSet {
        total_time,
        initial: build(Role::Initial),
        final_: build(Role::Final),
        navigator: build(Role::Navigator),
        assignment: spec.assignment.clone(),
    })
}
