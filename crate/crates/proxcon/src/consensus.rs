//! The iteration driver: doubly stochastic mixing, per-agent local
//! solves with a diminishing coefficient schedule, the
//! change-below-tolerance termination rule, convergence diagnostics,
//! and a centralized reference solver.
//!
//! Execution is iteration-synchronous: all local solves within an
//! iteration may run concurrently (enable via [`RunConfig::parallel`]),
//! and a barrier precedes the next mixing step. Results do not depend
//! on the execution order; identical configs produce identical traces
//! regardless of the parallelism setting.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{ConvexSet, DecisionVector, DykstraState, InteriorPoint, ProblemSpec};
use crate::network::{
    mixing_preserves_mean, validate_connectivity, validate_weights, NetworkSchedule, WeightMatrix,
};
use crate::prox::{feasible_probes, local_solve_with_state, ProxRequest, ProxSettings};
use crate::seed::mix_seed;

/// Constant proximal coefficient of the argmin and centralized solvers.
/// Keeps every inner solve in the strongly-anchored fast regime; the
/// outer proximal-point chain supplies the anchoring-free limit.
const CENTRAL_PROX_COEFF: f64 = 1e2;
const CENTRAL_MAX_OUTER: usize = 5_000;
/// Outer budget of the per-agent argmin used for default initial points.
const INIT_MAX_OUTER: usize = 12;

/// The coefficient sequence c(k). Both families are positive and
/// non-increasing; the harmonic family additionally satisfies
/// sum c = inf and sum c^2 < inf by construction. Explicit sequences
/// are validated for positivity and monotonicity only, and extend past
/// their end with the final value.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StepSchedule {
    /// c(k) = alpha / (k + 1).
    Harmonic { alpha: f64 },
    Explicit { values: Vec<f64> },
}

impl StepSchedule {
    pub fn value(&self, k: usize) -> f64 {
        match self {
            StepSchedule::Harmonic { alpha } => alpha / (k as f64 + 1.0),
            StepSchedule::Explicit { values } => values[k.min(values.len() - 1)],
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            StepSchedule::Harmonic { alpha } => {
                if !(*alpha > 0.0) {
                    return Err(Error::InvalidInput("harmonic alpha must be > 0".into()));
                }
            }
            StepSchedule::Explicit { values } => {
                if values.is_empty() {
                    return Err(Error::InvalidInput(
                        "explicit step schedule is empty".into(),
                    ));
                }
                if values.iter().any(|c| !(*c > 0.0)) {
                    return Err(Error::InvalidInput("step sizes must be > 0".into()));
                }
                if values.windows(2).any(|w| w[1] > w[0]) {
                    return Err(Error::InvalidInput(
                        "step sizes must be non-increasing".into(),
                    ));
                }
            }
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TraceVerbosity {
    /// Record nothing per iteration.
    Off,
    /// Record scalar diagnostics and averages.
    Summary,
    /// Additionally keep every iterate and mixing output, plus the
    /// feasible average when an interior point is available.
    Full,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub max_iterations: usize,
    /// Per-agent threshold on ||x_i(k+1) - x_i(k)||.
    pub iterate_tolerance: f64,
    /// Consecutive quiet iterations required of every agent before
    /// termination; defaults to T times the diameter of the
    /// recurring-edge graph.
    pub termination_window: Option<usize>,
    pub inner_tol: f64,
    pub max_inner_iters: usize,
    pub projection_tol: f64,
    pub trace: TraceVerbosity,
    /// Run the m local solves of each iteration concurrently.
    pub parallel: bool,
    /// Proceed despite failed pre-run validation.
    pub skip_validation: bool,
    /// Feasible probe points per agent for per-solve variational
    /// certificates; 0 disables them.
    pub certificate_probes: usize,
    pub seed: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            max_iterations: 1_000,
            iterate_tolerance: 1e-6,
            termination_window: None,
            inner_tol: 1e-8,
            max_inner_iters: 20_000,
            projection_tol: 1e-10,
            trace: TraceVerbosity::Summary,
            parallel: false,
            skip_validation: false,
            certificate_probes: 0,
            seed: 0,
        }
    }
}

impl RunConfig {
    fn prox_settings(&self) -> ProxSettings {
        ProxSettings {
            tol: self.inner_tol,
            max_inner_iters: self.max_inner_iters,
            projection_tol: self.projection_tol,
        }
    }
}

/// Per-iteration record of a run. Arrays indexed by the state k have
/// length `iterations() + 1`; arrays indexed by the step taken at k
/// have length `iterations()`.
#[derive(Clone, Debug, Default)]
pub struct IterationTrace {
    pub verbosity: Option<TraceVerbosity>,
    /// Width of the consensus block.
    pub shared_len: usize,
    /// c(k) per step.
    pub step_sizes: Vec<f64>,
    /// x_i(k) snapshots (Full only).
    pub states: Vec<Vec<DecisionVector>>,
    /// z_i(k) mixing outputs (Full only).
    pub mixed: Vec<Vec<DecisionVector>>,
    /// ||e_i(k+1)|| = ||x_i(k+1) - z_i(k)|| per agent, per step.
    pub error_norms: Vec<Vec<f64>>,
    /// v(k): the average of the consensus blocks.
    pub averages: Vec<DecisionVector>,
    /// max_i ||x_i(k) - v(k)|| over the consensus block.
    pub consensus_residuals: Vec<f64>,
    /// f_i(x_i(k)) per agent.
    pub objectives: Vec<Vec<f64>>,
    /// Running sum of sum_i ||e_i(k)||^2 through each step.
    pub cumulative_error_sq: Vec<f64>,
    /// v_bar(k) (Full + interior point only).
    pub feasible_averages: Vec<DecisionVector>,
    /// eps(k) = sum_i dist(v(k), X_i) alongside each v_bar(k).
    pub feasibility_gaps: Vec<f64>,
}

impl IterationTrace {
    pub fn iterations(&self) -> usize {
        self.step_sizes.len()
    }

    /// Writes the trace as CSV with one row per (iteration, agent).
    /// Iterate components are included only under Full verbosity.
    pub fn write_csv(&self, out: &mut dyn Write) -> std::io::Result<()> {
        let with_states = !self.states.is_empty();
        let dim = if with_states { self.states[0][0].dim() } else { 0 };
        write!(out, "k,agent")?;
        for j in 0..dim {
            write!(out, ",x{j}")?;
        }
        writeln!(out, ",error_norm,consensus_residual,objective")?;
        let records = self.objectives.len();
        for k in 0..records {
            let agents = self.objectives[k].len();
            for i in 0..agents {
                write!(out, "{k},{i}")?;
                if with_states {
                    for j in 0..dim {
                        write!(out, ",{}", self.states[k][i][j])?;
                    }
                }
                if k < self.error_norms.len() {
                    write!(out, ",{}", self.error_norms[k][i])?;
                } else {
                    write!(out, ",")?;
                }
                writeln!(
                    out,
                    ",{},{}",
                    self.consensus_residuals[k], self.objectives[k][i]
                )?;
            }
        }
        Ok(())
    }
}

/// Outcome of a run. `converged` means the termination rule fired:
/// every agent's iterate change stayed at or below the tolerance for a
/// full window of consecutive iterations.
#[derive(Clone, Debug)]
pub struct RunResult {
    pub final_states: Vec<DecisionVector>,
    pub converged: bool,
    pub iterations: usize,
    pub final_consensus_residual: f64,
    pub final_average: DecisionVector,
    /// sum_i f_i(v); absent under a partial-coupling split.
    pub average_objective: Option<f64>,
    pub final_feasible_average: Option<DecisionVector>,
    /// sum_i f_i(v_bar) when an interior point is available.
    pub feasible_average_objective: Option<f64>,
    /// Worst per-solve variational-certificate violation seen, when
    /// certificates were enabled.
    pub max_certificate_violation: Option<f64>,
    pub trace: IterationTrace,
}

/// z_i = sum_j a(i, j) x_j for every agent.
pub fn mix(a: &WeightMatrix, states: &[DecisionVector]) -> Result<Vec<DecisionVector>> {
    if states.len() != a.size() {
        return Err(Error::DimensionMismatch {
            expected: a.size(),
            got: states.len(),
        });
    }
    let n = states.first().map(|s| s.dim()).unwrap_or(0);
    for s in states {
        if s.dim() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: s.dim(),
            });
        }
    }
    Ok(mix_prefix(a, states, n))
}

/// Mixes only the leading `len` coordinates of each state.
fn mix_prefix(a: &WeightMatrix, states: &[DecisionVector], len: usize) -> Vec<DecisionVector> {
    let m = states.len();
    let mut out = Vec::with_capacity(m);
    for i in 0..m {
        let mut z = vec![0.0; len];
        for j in 0..m {
            let w = a.get(i, j);
            if w != 0.0 {
                for (acc, &v) in z.iter_mut().zip(states[j].iter().take(len)) {
                    *acc += w * v;
                }
            }
        }
        out.push(z.into());
    }
    out
}

struct AdvanceOutput {
    new_states: Vec<DecisionVector>,
    mixed: Vec<DecisionVector>,
    /// e_i(k+1) over the consensus block.
    errors: Vec<DecisionVector>,
    worst_certificate: Option<f64>,
}

/// One synchronous iteration: mix, then solve every agent's subproblem.
#[allow(clippy::too_many_arguments)]
fn advance(
    problem: &ProblemSpec,
    weights: &WeightMatrix,
    c: f64,
    states: &[DecisionVector],
    settings: ProxSettings,
    probes: Option<&[Vec<DecisionVector>]>,
    projections: &mut [DykstraState],
    parallel: bool,
    iteration: usize,
) -> Result<AdvanceOutput> {
    let shared = problem.shared_len();
    let mixed = mix_prefix(weights, states, shared);
    debug_assert!(
        mixing_preserves_mean(weights, states, 1e-9 * (1.0 + states[0].norm())),
        "mixing failed to preserve the iterate mean"
    );
    let run_agent = |(i, projection): (usize, &mut DykstraState)| -> Result<(DecisionVector, Option<f64>)> {
        let agent = &problem.agents[i];
        let request = ProxRequest {
            objective: &agent.objective,
            constraint: &agent.constraint,
            anchor: &mixed[i],
            step: c,
            warm_start: Some(&states[i]),
            probes: probes.map(|p| p[i].as_slice()),
            settings,
        };
        local_solve_with_state(&request, projection)
            .map(|r| (r.minimizer, r.optimality_certificate))
            .map_err(|e| Error::AgentSolve {
                agent: i,
                iteration,
                source: Box::new(e),
            })
    };

    let solved: Vec<(DecisionVector, Option<f64>)> = if parallel {
        projections
            .par_iter_mut()
            .enumerate()
            .map(run_agent)
            .collect::<Result<Vec<_>>>()?
    } else {
        projections
            .iter_mut()
            .enumerate()
            .map(run_agent)
            .collect::<Result<Vec<_>>>()?
    };

    let mut new_states = Vec::with_capacity(solved.len());
    let mut worst_certificate: Option<f64> = None;
    for (x, cert) in solved {
        if let Some(value) = cert {
            worst_certificate = Some(worst_certificate.map_or(value, |w: f64| w.max(value)));
        }
        new_states.push(x);
    }
    let errors: Vec<DecisionVector> = new_states
        .iter()
        .zip(mixed.iter())
        .map(|(x, z)| {
            x.iter()
                .take(shared)
                .zip(z.iter())
                .map(|(a, b)| a - b)
                .collect::<Vec<_>>()
                .into()
        })
        .collect();
    Ok(AdvanceOutput {
        new_states,
        mixed,
        errors,
        worst_certificate,
    })
}

/// One step of the iteration from the given states: mixing with the
/// schedule's matrix at `k` followed by every agent's local solve with
/// c(k). Returns the new states and the errors e_i(k+1).
pub fn step(
    problem: &ProblemSpec,
    schedule: &NetworkSchedule,
    steps: &StepSchedule,
    k: usize,
    states: &[DecisionVector],
) -> Result<(Vec<DecisionVector>, Vec<DecisionVector>)> {
    if states.len() != problem.num_agents() {
        return Err(Error::DimensionMismatch {
            expected: problem.num_agents(),
            got: states.len(),
        });
    }
    for (i, (agent, x)) in problem.agents.iter().zip(states).enumerate() {
        if !agent.constraint.contains(x, 1e-6)? {
            return Err(Error::InvalidInput(format!(
                "agent {i}: state is not feasible for its constraint set"
            )));
        }
    }
    let mut projections = vec![DykstraState::default(); states.len()];
    let out = advance(
        problem,
        &schedule.matrix(k),
        steps.value(k),
        states,
        ProxSettings::default(),
        None,
        &mut projections,
        false,
        k,
    )?;
    Ok((out.new_states, out.errors))
}

struct TraceBuilder {
    trace: IterationTrace,
    verbosity: TraceVerbosity,
    record_feasible: bool,
    projection_tol: f64,
}

impl TraceBuilder {
    fn new(problem: &ProblemSpec, config: &RunConfig) -> Self {
        let verbosity = config.trace;
        let record_feasible = matches!(verbosity, TraceVerbosity::Full)
            && problem.interior.is_some()
            && problem.shared_len() == problem.dimension;
        TraceBuilder {
            trace: IterationTrace {
                verbosity: Some(verbosity),
                shared_len: problem.shared_len(),
                ..IterationTrace::default()
            },
            verbosity,
            record_feasible,
            projection_tol: config.projection_tol,
        }
    }

    fn record_state(&mut self, problem: &ProblemSpec, states: &[DecisionVector]) -> Result<()> {
        if matches!(self.verbosity, TraceVerbosity::Off) {
            return Ok(());
        }
        let shared = problem.shared_len();
        let v = average_prefix(states, shared);
        let residual = consensus_residual(states, &v, shared);
        let mut objectives = Vec::with_capacity(states.len());
        for (agent, x) in problem.agents.iter().zip(states) {
            objectives.push(agent.objective.evaluate(x)?);
        }
        if self.record_feasible {
            let interior = problem.interior.as_ref().expect("checked in new");
            let sets: Vec<&ConvexSet> = problem.agents.iter().map(|a| &a.constraint).collect();
            let (v_bar, gap) = feasible_average_impl(&v, interior, &sets, self.projection_tol)?;
            self.trace.feasible_averages.push(v_bar);
            self.trace.feasibility_gaps.push(gap);
        }
        if matches!(self.verbosity, TraceVerbosity::Full) {
            self.trace.states.push(states.to_vec());
        }
        self.trace.averages.push(v);
        self.trace.consensus_residuals.push(residual);
        self.trace.objectives.push(objectives);
        Ok(())
    }

    fn record_step(&mut self, c: f64, mixed: Vec<DecisionVector>, errors: &[DecisionVector]) {
        if matches!(self.verbosity, TraceVerbosity::Off) {
            return;
        }
        let step_sq: f64 = errors
            .iter()
            .map(|e| {
                let n = e.norm();
                n * n
            })
            .sum();
        let total = self.trace.cumulative_error_sq.last().copied().unwrap_or(0.0) + step_sq;
        self.trace.step_sizes.push(c);
        self.trace
            .error_norms
            .push(errors.iter().map(|e| e.norm()).collect());
        self.trace.cumulative_error_sq.push(total);
        if matches!(self.verbosity, TraceVerbosity::Full) {
            self.trace.mixed.push(mixed);
        }
    }
}

fn average_prefix(states: &[DecisionVector], len: usize) -> DecisionVector {
    let m = states.len() as f64;
    let mut v = vec![0.0; len];
    for x in states {
        for (acc, &xi) in v.iter_mut().zip(x.iter().take(len)) {
            *acc += xi;
        }
    }
    for acc in v.iter_mut() {
        *acc /= m;
    }
    v.into()
}

fn consensus_residual(states: &[DecisionVector], v: &DecisionVector, len: usize) -> f64 {
    states
        .iter()
        .map(|x| {
            x.iter()
                .take(len)
                .zip(v.iter())
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                .sqrt()
        })
        .fold(0.0f64, f64::max)
}

/// Runs the distributed iteration until the termination rule fires or
/// the iteration budget is exhausted. Deterministic given the config.
pub fn run(
    problem: &ProblemSpec,
    schedule: &NetworkSchedule,
    steps: &StepSchedule,
    config: &RunConfig,
) -> Result<RunResult> {
    let m = problem.num_agents();
    let mut violations: Vec<String> = Vec::new();
    if let Err(e) = problem.validate() {
        violations.push(e.to_string());
    }
    if let Err(e) = steps.validate() {
        violations.push(e.to_string());
    }
    if schedule.num_agents() != m {
        violations.push(format!(
            "schedule has {} agents but the problem has {m}",
            schedule.num_agents()
        ));
    }
    let horizon = (2 * schedule.period()).max(schedule.intercommunication_bound() + 1);
    for k in 0..horizon {
        for violation in validate_weights(&schedule.matrix(k), schedule.eta()) {
            violations.push(format!("weight matrix at k={k}: {violation}"));
        }
    }
    let report = validate_connectivity(schedule, horizon.max(16));
    violations.extend(report.violations.iter().cloned());
    if !violations.is_empty() && !config.skip_validation {
        return Err(Error::ValidationFailed(violations));
    }

    let window = config
        .termination_window
        .unwrap_or_else(|| {
            schedule.intercommunication_bound() * report.diameter.unwrap_or(m).max(1)
        })
        .max(1);

    let settings = config.prox_settings();
    let mut states = resolve_initial_states(problem, config)?;

    let probe_sets: Option<Vec<Vec<DecisionVector>>> = if config.certificate_probes > 0 {
        let mut all = Vec::with_capacity(m);
        for (i, agent) in problem.agents.iter().enumerate() {
            all.push(feasible_probes(
                &agent.constraint,
                config.certificate_probes,
                mix_seed(config.seed, i as u64),
            )?);
        }
        Some(all)
    } else {
        None
    };

    let mut builder = TraceBuilder::new(problem, config);
    builder.record_state(problem, &states)?;

    let mut quiet = vec![0usize; m];
    let mut converged = false;
    let mut iterations = 0usize;
    let mut worst_certificate: Option<f64> = None;
    let mut projections = vec![DykstraState::default(); m];

    for k in 0..config.max_iterations {
        let out = advance(
            problem,
            &schedule.matrix(k),
            steps.value(k),
            &states,
            settings,
            probe_sets.as_deref(),
            &mut projections,
            config.parallel,
            k,
        )?;
        if let Some(cert) = out.worst_certificate {
            worst_certificate = Some(worst_certificate.map_or(cert, |w: f64| w.max(cert)));
        }
        for (i, (old, new)) in states.iter().zip(&out.new_states).enumerate() {
            if old.distance_to(new) <= config.iterate_tolerance {
                quiet[i] += 1;
            } else {
                quiet[i] = 0;
            }
        }
        builder.record_step(steps.value(k), out.mixed, &out.errors);
        states = out.new_states;
        builder.record_state(problem, &states)?;
        iterations = k + 1;
        if quiet.iter().all(|&q| q >= window) {
            converged = true;
            break;
        }
    }

    let shared = problem.shared_len();
    let v = average_prefix(&states, shared);
    let residual = consensus_residual(&states, &v, shared);
    let full_coupling = shared == problem.dimension;
    let average_objective = if full_coupling {
        let mut total = 0.0;
        for agent in &problem.agents {
            total += agent.objective.evaluate(&v)?;
        }
        Some(total)
    } else {
        None
    };
    let (final_feasible_average, feasible_average_objective) =
        match (&problem.interior, full_coupling) {
            (Some(interior), true) => {
                let sets: Vec<&ConvexSet> =
                    problem.agents.iter().map(|a| &a.constraint).collect();
                let (v_bar, _) = feasible_average_impl(&v, interior, &sets, config.projection_tol)?;
                let mut total = 0.0;
                for agent in &problem.agents {
                    total += agent.objective.evaluate(&v_bar)?;
                }
                (Some(v_bar), Some(total))
            }
            _ => (None, None),
        };

    Ok(RunResult {
        final_states: states,
        converged,
        iterations,
        final_consensus_residual: residual,
        final_average: v,
        average_objective,
        final_feasible_average,
        feasible_average_objective,
        max_certificate_violation: worst_certificate,
        trace: builder.trace,
    })
}

/// argmin of a convex objective over a compact set, by proximal-point
/// iterations with a constant coefficient starting from the projection
/// of the bounding-box center. Deterministic; stops once consecutive
/// iterates move at most `tol` or the outer budget runs out (returning
/// the best feasible iterate either way).
fn argmin_over_set(
    objective: &crate::model::ObjectiveTerm,
    constraint: &ConvexSet,
    settings: ProxSettings,
    tol: f64,
    max_outer: usize,
) -> Result<DecisionVector> {
    let (lo, hi) = constraint.bounding_box()?;
    let center: DecisionVector = lo
        .iter()
        .zip(hi.iter())
        .map(|(l, u)| 0.5 * (l + u))
        .collect::<Vec<_>>()
        .into();
    let mut projections = DykstraState::default();
    let mut x = constraint.project(&center, settings.projection_tol)?;
    for _ in 0..max_outer {
        let result = local_solve_with_state(
            &ProxRequest {
                objective,
                constraint,
                anchor: &x,
                step: CENTRAL_PROX_COEFF,
                warm_start: Some(&x),
                probes: None,
                settings,
            },
            &mut projections,
        )?;
        let change = result.minimizer.distance_to(&x);
        x = result.minimizer;
        if change <= tol {
            break;
        }
    }
    Ok(x)
}

fn resolve_initial_states(
    problem: &ProblemSpec,
    config: &RunConfig,
) -> Result<Vec<DecisionVector>> {
    let settings = config.prox_settings();
    let resolve_one = |(i, agent): (usize, &crate::model::AgentSpec)| {
        if let Some(x0) = &agent.initial {
            return Ok(x0.clone());
        }
        argmin_over_set(
            &agent.objective,
            &agent.constraint,
            settings,
            config.inner_tol.max(1e-9) * 10.0,
            INIT_MAX_OUTER,
        )
        .map_err(|e| Error::AgentSolve {
            agent: i,
            iteration: 0,
            source: Box::new(e),
        })
    };
    if config.parallel {
        problem
            .agents
            .par_iter()
            .enumerate()
            .map(resolve_one)
            .collect()
    } else {
        problem.agents.iter().enumerate().map(resolve_one).collect()
    }
}

/// The feasible average v_bar = (eps x_bar + rho v) / (eps + rho), where
/// eps = sum_i dist(v, X_i). Always lies in the intersection of the
/// sets. Returns (v_bar, eps).
pub fn feasible_average(
    v: &DecisionVector,
    interior: &InteriorPoint,
    sets: &[&ConvexSet],
    tol: f64,
) -> Result<(DecisionVector, f64)> {
    feasible_average_impl(v, interior, sets, tol)
}

fn feasible_average_impl(
    v: &DecisionVector,
    interior: &InteriorPoint,
    sets: &[&ConvexSet],
    tol: f64,
) -> Result<(DecisionVector, f64)> {
    if !(interior.radius > 0.0) {
        return Err(Error::MissingInterior(
            "interior radius must be positive".into(),
        ));
    }
    let mut gap = 0.0;
    for set in sets {
        gap += set.distance(v, tol)?;
    }
    let rho = interior.radius;
    let scale = gap + rho;
    let mut v_bar = DecisionVector::zeros(v.dim());
    v_bar.add_scaled(gap / scale, &interior.center);
    v_bar.add_scaled(rho / scale, v);
    Ok((v_bar, gap))
}

/// Evaluates the per-iteration inequality linking consecutive iterates,
/// the step errors, and the feasible average against a known minimizer:
/// returns LHS - RHS of
///
/// ```text
/// 2 c(k) sum_i f_i(vbar(k+1)) + sum_i ||e_i(k+1)||^2
///       + sum_i ||x_i(k+1) - x*||^2
///   <=  2 c(k) sum_i f_i(x*) + sum_i ||x_i(k) - x*||^2
///       + 2 L c(k) sum_i ||x_i(k+1) - vbar(k+1)||
/// ```
///
/// Non-positive (within solver tolerance) whenever the assumptions
/// hold. Needs a Full trace recorded with an interior point.
pub fn lemma5_inequality_check(
    problem: &ProblemSpec,
    trace: &IterationTrace,
    k: usize,
    x_star: &DecisionVector,
    lipschitz_bound: f64,
) -> Result<f64> {
    if trace.states.is_empty() {
        return Err(Error::InvalidInput(
            "inequality check needs a Full trace with recorded states".into(),
        ));
    }
    if trace.feasible_averages.is_empty() {
        return Err(Error::MissingInterior(
            "inequality check needs feasible averages; supply an interior point".into(),
        ));
    }
    if k + 1 >= trace.states.len() {
        return Err(Error::InvalidInput(format!(
            "iteration {k} out of range; trace holds {} states",
            trace.states.len()
        )));
    }
    let c = trace.step_sizes[k];
    let states_k = &trace.states[k];
    let states_next = &trace.states[k + 1];
    let v_bar = &trace.feasible_averages[k + 1];

    let mut lhs = 0.0;
    let mut rhs = 0.0;
    for (i, agent) in problem.agents.iter().enumerate() {
        lhs += 2.0 * c * agent.objective.evaluate(v_bar)?;
        let e = trace.error_norms[k][i];
        lhs += e * e;
        let dist_next = states_next[i].distance_to(x_star);
        lhs += dist_next * dist_next;

        rhs += 2.0 * c * agent.objective.evaluate(x_star)?;
        let dist_k = states_k[i].distance_to(x_star);
        rhs += dist_k * dist_k;
        rhs += 2.0 * lipschitz_bound * c * states_next[i].distance_to(v_bar);
    }
    Ok(lhs - rhs)
}

/// Estimates max_i Lip(f_i on X_i) by sampling feasible point pairs and
/// maximizing the difference quotient, with a 10% safety margin.
pub fn estimate_lipschitz(problem: &ProblemSpec, pairs: usize, seed: u64) -> Result<f64> {
    let mut worst = 0.0f64;
    for (i, agent) in problem.agents.iter().enumerate() {
        let probes = feasible_probes(
            &agent.constraint,
            2 * pairs,
            mix_seed(seed, 0x11c0 + i as u64),
        )?;
        for pair in probes.chunks_exact(2) {
            let gap = pair[0].distance_to(&pair[1]);
            if gap > 1e-9 {
                let df = (agent.objective.evaluate(&pair[0])?
                    - agent.objective.evaluate(&pair[1])?)
                .abs();
                worst = worst.max(df / gap);
            }
        }
    }
    Ok(worst * 1.1)
}

/// Solves the pooled problem min sum_i f_i over the intersection of all
/// agent sets by proximal-point iterations with a constant coefficient,
/// stopping when consecutive iterates move at most `tol`.
pub fn centralized_solve(problem: &ProblemSpec, tol: f64) -> Result<DecisionVector> {
    centralized_solve_from(problem, tol, None)
}

/// [`centralized_solve`] seeded with a starting point (a near-feasible
/// hint makes the first pooled projection cheap); defaults to the
/// pooled bounding-box center.
pub fn centralized_solve_from(
    problem: &ProblemSpec,
    tol: f64,
    start: Option<&DecisionVector>,
) -> Result<DecisionVector> {
    if !(tol > 0.0) {
        return Err(Error::InvalidInput("tolerance must be > 0".into()));
    }
    let (objective, constraint) = problem.pooled();
    let settings = ProxSettings {
        tol: (tol * 1e-2).clamp(1e-12, 1e-8),
        max_inner_iters: 200_000,
        projection_tol: (tol * 1e-3).clamp(1e-12, 1e-9),
    };
    let seed_point: DecisionVector = match start {
        Some(x0) => x0.clone(),
        None => {
            let (lo, hi) = constraint.bounding_box()?;
            lo.iter()
                .zip(hi.iter())
                .map(|(l, u)| 0.5 * (l + u))
                .collect::<Vec<_>>()
                .into()
        }
    };
    let mut projections = DykstraState::default();
    let mut x = constraint.project(&seed_point, settings.projection_tol)?;
    for _ in 0..CENTRAL_MAX_OUTER {
        let result = local_solve_with_state(
            &ProxRequest {
                objective: &objective,
                constraint: &constraint,
                anchor: &x,
                step: CENTRAL_PROX_COEFF,
                warm_start: Some(&x),
                probes: None,
                settings,
            },
            &mut projections,
        )?;
        let change = result.minimizer.distance_to(&x);
        x = result.minimizer;
        if change <= tol {
            return Ok(x);
        }
    }
    Err(Error::NonConvergence {
        iterations: CENTRAL_MAX_OUTER,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{AgentSpec, ObjectiveTerm};
    use crate::prox::local_solve;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn interval_agent(lo: f64, hi: f64, objective: ObjectiveTerm) -> AgentSpec {
        AgentSpec {
            objective,
            constraint: ConvexSet::Box {
                lower: vec![lo].into(),
                upper: vec![hi].into(),
            },
            initial: None,
            shared_len: None,
        }
    }

    /// f1 = (x-1)^2 on [0,2], f2 = |x| on [0.5,3]; pooled minimizer 0.5.
    fn two_interval_problem() -> ProblemSpec {
        ProblemSpec {
            dimension: 1,
            agents: vec![
                interval_agent(
                    0.0,
                    2.0,
                    ObjectiveTerm::QuadraticDiagonal {
                        curvature: vec![2.0].into(),
                        gradient: vec![-2.0].into(),
                    },
                ),
                interval_agent(0.5, 3.0, ObjectiveTerm::L1 { weight: 1.0 }),
            ],
            interior: Some(InteriorPoint {
                center: vec![1.25].into(),
                radius: 0.4,
            }),
        }
    }

    #[test]
    fn mix_identity_and_uniform() {
        let states: Vec<DecisionVector> = vec![vec![0.0].into(), vec![2.0].into()];
        let id = WeightMatrix::identity(2);
        let z = mix(&id, &states).unwrap();
        assert_eq!(z[0].as_slice(), &[0.0]);
        assert_eq!(z[1].as_slice(), &[2.0]);

        // uniform mixing produces the average for every agent
        let uni = WeightMatrix::uniform(2);
        let z = mix(&uni, &states).unwrap();
        assert_eq!(z[0].as_slice(), &[1.0]);
        assert_eq!(z[1].as_slice(), &[1.0]);

        // hand arithmetic for an explicit matrix
        let w = WeightMatrix::new(2, vec![0.5, 0.5, 0.5, 0.5]).unwrap();
        let z = mix(&w, &states).unwrap();
        assert_eq!(z[0].as_slice(), &[1.0]);
        assert_eq!(z[1].as_slice(), &[1.0]);
    }

    #[test]
    fn step_identity_network_keeps_feasible_zero_objective_states() {
        let problem = ProblemSpec {
            dimension: 1,
            agents: vec![
                interval_agent(0.0, 2.0, ObjectiveTerm::zero()),
                interval_agent(0.5, 3.0, ObjectiveTerm::zero()),
            ],
            interior: None,
        };
        let schedule =
            NetworkSchedule::explicit_periodic(vec![WeightMatrix::identity(2)]).unwrap();
        let steps = StepSchedule::Harmonic { alpha: 1.0 };
        let states: Vec<DecisionVector> = vec![vec![1.0].into(), vec![2.5].into()];
        let (new_states, errors) = step(&problem, &schedule, &steps, 0, &states).unwrap();
        for (old, new) in states.iter().zip(&new_states) {
            assert!(old.distance_to(new) < 1e-7);
        }
        for e in errors {
            assert!(e.norm() < 1e-7);
        }
    }

    #[test]
    fn single_agent_reduces_to_proximal_point() {
        // argmin (x-1)^2 over [0,3] is 1; grid oracle confirms
        let problem = ProblemSpec {
            dimension: 1,
            agents: vec![interval_agent(
                0.0,
                3.0,
                ObjectiveTerm::QuadraticDiagonal {
                    curvature: vec![2.0].into(),
                    gradient: vec![-2.0].into(),
                },
            )],
            interior: None,
        };
        let schedule = NetworkSchedule::complete_uniform(1).unwrap();
        let steps = StepSchedule::Harmonic { alpha: 1.0 };
        let config = RunConfig {
            max_iterations: 400,
            iterate_tolerance: 1e-10,
            ..RunConfig::default()
        };
        let result = run(&problem, &schedule, &steps, &config).unwrap();
        let mut best = (f64::INFINITY, 0.0);
        for i in 0..=300_000 {
            let x = 3.0 * i as f64 / 300_000.0;
            let v = (x - 1.0) * (x - 1.0);
            if v < best.0 {
                best = (v, x);
            }
        }
        assert!((result.final_states[0][0] - best.1).abs() < 1e-3);
    }

    #[test]
    fn identical_agents_collapse_to_single_agent() {
        let objective = ObjectiveTerm::QuadraticDiagonal {
            curvature: vec![2.0].into(),
            gradient: vec![-3.0].into(),
        };
        let problem = ProblemSpec {
            dimension: 1,
            agents: (0..4)
                .map(|_| interval_agent(0.0, 1.2, objective.clone()))
                .collect(),
            interior: None,
        };
        let schedule = NetworkSchedule::ring_alternating_pairs(4).unwrap();
        let steps = StepSchedule::Harmonic { alpha: 1.0 };
        let config = RunConfig {
            max_iterations: 500,
            iterate_tolerance: 1e-12,
            ..RunConfig::default()
        };
        let result = run(&problem, &schedule, &steps, &config).unwrap();
        // argmin of x^2 - 3x on [0, 1.2] clamps to 1.2
        for x in &result.final_states {
            assert!((x[0] - 1.2).abs() < 1e-3, "got {}", x[0]);
        }
    }

    #[test]
    fn two_interval_instance_converges_to_pooled_minimizer() {
        let problem = two_interval_problem();
        let schedule = NetworkSchedule::complete_uniform(2).unwrap();
        let steps = StepSchedule::Harmonic { alpha: 1.0 };
        let config = RunConfig {
            max_iterations: 3_000,
            iterate_tolerance: 1e-12,
            trace: TraceVerbosity::Full,
            ..RunConfig::default()
        };
        let result = run(&problem, &schedule, &steps, &config).unwrap();
        for x in &result.final_states {
            assert!((x[0] - 0.5).abs() < 2e-3, "agent at {}", x[0]);
        }
        // mean preservation sum_i z_i = sum_i x_i holds per iteration
        let trace = &result.trace;
        for k in 0..trace.iterations() {
            let x_sum: f64 = trace.states[k].iter().map(|x| x[0]).sum();
            let z_sum: f64 = trace.mixed[k].iter().map(|z| z[0]).sum();
            assert!((x_sum - z_sum).abs() < 1e-10);
        }
    }

    #[test]
    fn hand_simulated_first_iteration() {
        // x1(0) = argmin f1 = 1, x2(0) = argmin |x| on [0.5,3] = 0.5;
        // z_i(0) = 0.75; c(0) = 1;
        // x1(1) = argmin (x-1)^2 + (x-0.75)^2/2 = (2*1 + 0.75/1)/(2+1) -> 11/12
        // x2(1) = max(0.5, 0.75 - 1) = 0.5
        let problem = two_interval_problem();
        let schedule = NetworkSchedule::complete_uniform(2).unwrap();
        let steps = StepSchedule::Harmonic { alpha: 1.0 };
        let config = RunConfig {
            max_iterations: 1,
            iterate_tolerance: 1e-12,
            inner_tol: 1e-12,
            ..RunConfig::default()
        };
        let result = run(&problem, &schedule, &steps, &config).unwrap();
        assert!((result.final_states[0][0] - 11.0 / 12.0).abs() < 1e-6);
        assert!((result.final_states[1][0] - 0.5).abs() < 1e-6);
    }

    #[test]
    fn feasible_average_examples() {
        let problem = two_interval_problem();
        let sets: Vec<&ConvexSet> = problem.agents.iter().map(|a| &a.constraint).collect();
        let interior = problem.interior.as_ref().unwrap();
        // v already feasible: eps = 0, v_bar = v
        let v: DecisionVector = vec![1.0].into();
        let (v_bar, gap) = feasible_average(&v, interior, &sets, 1e-10).unwrap();
        assert_eq!(gap, 0.0);
        assert!((v_bar[0] - 1.0).abs() < 1e-15);
        // hand arithmetic: X1=[0,2], X2=[1,3], xbar=1.5, rho=0.4, v=0:
        // eps = 0 + 1 = 1, v_bar = (1*1.5 + 0.4*0)/1.4 = 15/14
        let sets_owned = [
            ConvexSet::Box {
                lower: vec![0.0].into(),
                upper: vec![2.0].into(),
            },
            ConvexSet::Box {
                lower: vec![1.0].into(),
                upper: vec![3.0].into(),
            },
        ];
        let set_refs: Vec<&ConvexSet> = sets_owned.iter().collect();
        let interior = InteriorPoint {
            center: vec![1.5].into(),
            radius: 0.4,
        };
        let (v_bar, gap) =
            feasible_average(&vec![0.0].into(), &interior, &set_refs, 1e-10).unwrap();
        assert!((gap - 1.0).abs() < 1e-12);
        assert!((v_bar[0] - 15.0 / 14.0).abs() < 1e-12);
        assert!(v_bar[0] >= 1.0 && v_bar[0] <= 2.0);
    }

    #[test]
    fn feasible_average_membership_property() {
        // random 2-D polyhedral instance built around a known interior ball
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let center: DecisionVector = vec![0.25, -0.5].into();
        let rho = 0.3;
        let mut sets = Vec::new();
        for _ in 0..3 {
            let mut members = vec![ConvexSet::Box {
                lower: vec![center[0] - 2.0, center[1] - 2.0].into(),
                upper: vec![center[0] + 2.0, center[1] + 2.0].into(),
            }];
            for _ in 0..4 {
                let a: Vec<f64> = (0..2).map(|_| rng.gen_range(-1.0..1.0)).collect();
                let norm = (a[0] * a[0] + a[1] * a[1]).sqrt();
                if norm < 1e-3 {
                    continue;
                }
                let a = vec![a[0] / norm, a[1] / norm];
                // offset keeps the ball strictly inside the halfspace
                let offset =
                    a[0] * center[0] + a[1] * center[1] + rho + rng.gen_range(0.05..0.8);
                members.push(ConvexSet::Halfspace {
                    normal: a.into(),
                    offset,
                });
            }
            sets.push(ConvexSet::Intersection(members));
        }
        let set_refs: Vec<&ConvexSet> = sets.iter().collect();
        let interior = InteriorPoint {
            center: center.clone(),
            radius: rho,
        };
        for _ in 0..1000 {
            let v: DecisionVector =
                vec![rng.gen_range(-2.0..2.5), rng.gen_range(-3.0..2.0)].into();
            let (v_bar, _) = feasible_average(&v, &interior, &set_refs, 1e-10).unwrap();
            for set in &set_refs {
                assert!(
                    set.contains(&v_bar, 1e-7).unwrap(),
                    "feasible average left a member set"
                );
            }
        }
    }

    #[test]
    fn lemma5_zero_objective_is_projection_nonexpansiveness() {
        let problem = ProblemSpec {
            dimension: 1,
            agents: vec![interval_agent(0.0, 2.0, ObjectiveTerm::zero())],
            interior: Some(InteriorPoint {
                center: vec![1.0].into(),
                radius: 0.5,
            }),
        };
        let schedule = NetworkSchedule::complete_uniform(1).unwrap();
        let steps = StepSchedule::Harmonic { alpha: 1.0 };
        let config = RunConfig {
            max_iterations: 10,
            iterate_tolerance: 0.0,
            trace: TraceVerbosity::Full,
            ..RunConfig::default()
        };
        let result = run(&problem, &schedule, &steps, &config).unwrap();
        let x_star: DecisionVector = vec![1.5].into();
        for k in 0..result.trace.iterations() {
            let residual =
                lemma5_inequality_check(&problem, &result.trace, k, &x_star, 0.0).unwrap();
            assert!(residual <= 1e-8, "residual {residual} at k={k}");
        }
    }

    #[test]
    fn lemma5_holds_on_two_interval_instance() {
        let problem = two_interval_problem();
        let schedule = NetworkSchedule::complete_uniform(2).unwrap();
        let steps = StepSchedule::Harmonic { alpha: 1.0 };
        let config = RunConfig {
            max_iterations: 60,
            iterate_tolerance: 1e-12,
            inner_tol: 1e-10,
            trace: TraceVerbosity::Full,
            ..RunConfig::default()
        };
        let result = run(&problem, &schedule, &steps, &config).unwrap();
        let x_star: DecisionVector = vec![0.5].into();
        // f1 has Lipschitz constant 2 on [0,2]; f2 has 1
        let l_bar = 2.0;
        for k in 0..result.trace.iterations() {
            let residual =
                lemma5_inequality_check(&problem, &result.trace, k, &x_star, l_bar).unwrap();
            assert!(residual <= 1e-8, "residual {residual} at k={k}");
        }
    }

    #[test]
    fn centralized_two_interval() {
        let problem = two_interval_problem();
        let x = centralized_solve(&problem, 1e-9).unwrap();
        assert!((x[0] - 0.5).abs() < 1e-6);
    }

    #[test]
    fn centralized_unconstrained_quadratic_mean() {
        // f_i = 1/2 h_i (x - a_i)^2 inside a wide box: minimizer is the
        // curvature-weighted mean sum(h a)/sum(h)
        let data = [(2.0, 1.0), (1.0, -0.5), (4.0, 2.0)];
        let agents: Vec<AgentSpec> = data
            .iter()
            .map(|&(h, a)| AgentSpec {
                objective: ObjectiveTerm::QuadraticDiagonal {
                    curvature: vec![h].into(),
                    gradient: vec![-h * a].into(),
                },
                constraint: ConvexSet::Box {
                    lower: vec![-100.0].into(),
                    upper: vec![100.0].into(),
                },
                initial: None,
                shared_len: None,
            })
            .collect();
        let problem = ProblemSpec {
            dimension: 1,
            agents,
            interior: None,
        };
        let expected: f64 = data.iter().map(|(h, a)| h * a).sum::<f64>()
            / data.iter().map(|(h, _)| h).sum::<f64>();
        let x = centralized_solve(&problem, 1e-10).unwrap();
        assert!((x[0] - expected).abs() < 1e-6, "{} vs {expected}", x[0]);
    }

    #[test]
    fn centralized_single_agent_matches_prox_limit() {
        let problem = ProblemSpec {
            dimension: 1,
            agents: vec![interval_agent(
                0.0,
                3.0,
                ObjectiveTerm::QuadraticDiagonal {
                    curvature: vec![2.0].into(),
                    gradient: vec![-2.0].into(),
                },
            )],
            interior: None,
        };
        let x = centralized_solve(&problem, 1e-10).unwrap();
        let limit = local_solve(&ProxRequest {
            objective: &problem.agents[0].objective,
            constraint: &problem.agents[0].constraint,
            anchor: &vec![1.5].into(),
            step: 1e6,
            warm_start: None,
            probes: None,
            settings: ProxSettings::default(),
        })
        .unwrap();
        assert!(x.distance_to(&limit.minimizer) < 1e-3);
    }

    #[test]
    fn run_refuses_invalid_network_without_override() {
        let problem = two_interval_problem();
        let schedule =
            NetworkSchedule::explicit_periodic(vec![WeightMatrix::identity(2)]).unwrap();
        let steps = StepSchedule::Harmonic { alpha: 1.0 };
        let config = RunConfig::default();
        match run(&problem, &schedule, &steps, &config) {
            Err(Error::ValidationFailed(violations)) => {
                assert!(violations.iter().any(|v| v.contains("strongly connected")));
            }
            other => panic!("expected ValidationFailed, got {other:?}"),
        }
        let override_config = RunConfig {
            skip_validation: true,
            max_iterations: 5,
            ..RunConfig::default()
        };
        run(&problem, &schedule, &steps, &override_config).unwrap();
    }

    #[test]
    fn partial_coupling_shares_only_the_shared_block() {
        // two agents agree on y (coordinate 0) and keep private u_i
        // (coordinate 1): f_i(y, u) = (y - t_i)^2 + (u - p_i)^2
        let make = |t: f64, p: f64| AgentSpec {
            objective: ObjectiveTerm::QuadraticDiagonal {
                curvature: vec![2.0, 2.0].into(),
                gradient: vec![-2.0 * t, -2.0 * p].into(),
            },
            constraint: ConvexSet::Box {
                lower: vec![-5.0, -5.0].into(),
                upper: vec![5.0, 5.0].into(),
            },
            initial: None,
            shared_len: Some(1),
        };
        let problem = ProblemSpec {
            dimension: 2,
            agents: vec![make(1.0, -2.0), make(3.0, 4.0)],
            interior: None,
        };
        let schedule = NetworkSchedule::complete_uniform(2).unwrap();
        let steps = StepSchedule::Harmonic { alpha: 2.0 };
        let config = RunConfig {
            max_iterations: 2_000,
            iterate_tolerance: 1e-12,
            ..RunConfig::default()
        };
        let result = run(&problem, &schedule, &steps, &config).unwrap();
        // consensus on y at the average of the targets (2.0); private
        // blocks at their own targets
        for x in &result.final_states {
            assert!((x[0] - 2.0).abs() < 5e-3, "shared block at {}", x[0]);
        }
        assert!((result.final_states[0][1] + 2.0).abs() < 1e-4);
        assert!((result.final_states[1][1] - 4.0).abs() < 1e-4);
        assert!(result.average_objective.is_none());
    }

    #[test]
    fn parallel_and_serial_traces_match_bitwise() {
        let problem = two_interval_problem();
        let schedule = NetworkSchedule::complete_uniform(2).unwrap();
        let steps = StepSchedule::Harmonic { alpha: 1.0 };
        let base = RunConfig {
            max_iterations: 100,
            iterate_tolerance: 1e-12,
            trace: TraceVerbosity::Full,
            ..RunConfig::default()
        };
        let serial = run(&problem, &schedule, &steps, &base).unwrap();
        let parallel_config = RunConfig {
            parallel: true,
            ..base
        };
        let parallel = run(&problem, &schedule, &steps, &parallel_config).unwrap();
        assert_eq!(serial.iterations, parallel.iterations);
        for (a, b) in serial.final_states.iter().zip(&parallel.final_states) {
            assert_eq!(a.as_slice(), b.as_slice());
        }
        for (a, b) in serial
            .trace
            .consensus_residuals
            .iter()
            .zip(&parallel.trace.consensus_residuals)
        {
            assert_eq!(a, b);
        }
    }

    #[test]
    fn trace_csv_shape() {
        let problem = two_interval_problem();
        let schedule = NetworkSchedule::complete_uniform(2).unwrap();
        let steps = StepSchedule::Harmonic { alpha: 1.0 };
        let config = RunConfig {
            max_iterations: 3,
            iterate_tolerance: 1e-12,
            trace: TraceVerbosity::Full,
            ..RunConfig::default()
        };
        let result = run(&problem, &schedule, &steps, &config).unwrap();
        let mut buf = Vec::new();
        result.trace.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(
            lines.next().unwrap(),
            "k,agent,x0,error_norm,consensus_residual,objective"
        );
        // 4 state records (k = 0..=3) x 2 agents
        assert_eq!(lines.count(), 8);
    }
}
