//! An L1-regularized multi-agent regression benchmark, end to end:
//! signal generation, scenario sampling, epigraph problem construction,
//! the distributed run, and probabilistic certification of the result.
//!
//! Each of m agents holds private samples (delta, s_i(delta)) of an
//! unknown function and the network fits one cosine expansion to all of
//! them: with x = (x_1..x_d, t) the agents minimize
//! `t + lambda ||x||_1` subject to
//! `|sum_l x_l cos(l delta) - s_i(delta)| <= t` at every sampled delta.
//! The absolute value splits into two halfspaces per sample, and a wide
//! box keeps the sets compact without binding at the solution.

use std::f64::consts::PI;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::consensus::{centralized_solve_from, run, RunConfig, RunResult, StepSchedule};
use crate::error::Result;
use crate::model::{ConvexSet, DecisionVector, InteriorPoint, ObjectiveTerm, ProblemSpec};
use crate::network::NetworkSchedule;
use crate::scenario::{
    build_scenario_program, epsilon_naive, epsilon_tight, estimate_violation, EpsilonReport,
    ScenarioConfig, UncertainConstraintFamily, ViolationReport,
};
use crate::seed::mix_seed;

/// Step-size numerator of the benchmark run: c(k) = 0.05 / (k + 1).
pub const BENCH_STEP_ALPHA: f64 = 0.05;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RegressionConfig {
    pub agents: usize,
    /// Number of cosine terms d; the decision space has dimension d+1.
    pub cosine_terms: usize,
    pub regularization: f64,
    pub samples_per_agent: usize,
    /// Half-width of the compactness box; large enough not to bind.
    pub box_half_width: f64,
    /// Co-sinusoids per unknown signal.
    pub signal_components: usize,
    /// Overall confidence budget for the epsilon reports.
    pub confidence: f64,
    pub signal_seed: u64,
    pub scenario_seed: u64,
    pub validation_seed: u64,
    /// Fresh draws for the empirical violation estimate.
    pub validation_samples: usize,
    /// Solve the pooled problem centrally and report the objective gap.
    pub oracle_comparison: bool,
}

impl Default for RegressionConfig {
    fn default() -> Self {
        Self {
            agents: 6,
            cosine_terms: 50,
            regularization: 0.001,
            samples_per_agent: 4_500,
            box_half_width: 1e3,
            signal_components: 10,
            confidence: 1e-5,
            signal_seed: 1,
            scenario_seed: 2,
            validation_seed: 3,
            validation_samples: 80_000,
            oracle_comparison: false,
        }
    }
}

impl RegressionConfig {
    /// A reduced instance that runs in seconds and admits a centralized
    /// oracle comparison.
    pub fn desk_scale() -> Self {
        Self {
            cosine_terms: 10,
            samples_per_agent: 300,
            validation_samples: 20_000,
            oracle_comparison: true,
            ..Self::default()
        }
    }

    pub fn dimension(&self) -> usize {
        self.cosine_terms + 1
    }

    pub fn scenario_config(&self) -> ScenarioConfig {
        // the support bound excludes the epigraph variable
        ScenarioConfig::uniform(
            self.agents,
            self.samples_per_agent as u64,
            self.confidence,
            self.cosine_terms as u64,
        )
    }
}

/// The hidden signal of one agent: a sum of randomly phase-shifted
/// co-sinusoids, fixed by the signal seed.
fn signal_phases(cfg: &RegressionConfig, agent: usize) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(cfg.signal_seed, agent as u64));
    (0..cfg.signal_components)
        .map(|_| rng.gen_range(0.0..2.0 * PI))
        .collect()
}

pub fn signal_value(cfg: &RegressionConfig, agent: usize, delta: f64) -> f64 {
    signal_phases(cfg, agent)
        .iter()
        .enumerate()
        .map(|(p, phase)| ((p + 1) as f64 * delta + phase).cos())
        .sum()
}

fn signal_value_from_phases(phases: &[f64], delta: f64) -> f64 {
    phases
        .iter()
        .enumerate()
        .map(|(p, phase)| ((p + 1) as f64 * delta + phase).cos())
        .sum()
}

/// Builds the epigraph problem and its uncertainty family. Every
/// sampled delta contributes the two halfspaces of the absolute-value
/// split; each agent additionally keeps the compactness box. The
/// objective is split evenly: f_i(x) = (t + lambda ||x||_1) / m.
pub fn build_regression_problem(
    cfg: &RegressionConfig,
) -> Result<(ProblemSpec, UncertainConstraintFamily)> {
    let n = cfg.dimension();
    let d = cfg.cosine_terms;
    let m = cfg.agents;

    let share = 1.0 / m as f64;
    let mut epigraph_gradient = vec![0.0; n];
    epigraph_gradient[d] = share;
    let objective = ObjectiveTerm::Sum(vec![
        ObjectiveTerm::Linear {
            gradient: epigraph_gradient.into(),
        },
        ObjectiveTerm::L1 {
            weight: cfg.regularization * share,
        },
    ]);
    let objectives = vec![objective; m];

    let bounds = cfg.box_half_width;
    let base_box = ConvexSet::Box {
        lower: vec![-bounds; n].into(),
        upper: vec![bounds; n].into(),
    };

    let mut agent_sets: Vec<Box<dyn Fn(f64) -> ConvexSet + Send + Sync>> = Vec::with_capacity(m);
    for agent in 0..m {
        let phases = signal_phases(cfg, agent);
        agent_sets.push(Box::new(move |delta: f64| {
            let s = signal_value_from_phases(&phases, delta);
            let mut plus = Vec::with_capacity(d + 1);
            let mut minus = Vec::with_capacity(d + 1);
            for l in 1..=d {
                let c = (l as f64 * delta).cos();
                plus.push(c);
                minus.push(-c);
            }
            plus.push(-1.0);
            minus.push(-1.0);
            ConvexSet::Intersection(vec![
                ConvexSet::Halfspace {
                    normal: plus.into(),
                    offset: s,
                },
                ConvexSet::Halfspace {
                    normal: minus.into(),
                    offset: -s,
                },
            ])
        }));
    }

    let family = UncertainConstraintFamily::new(
        Box::new(|rng: &mut ChaCha8Rng| rng.gen_range(-PI..PI)),
        agent_sets,
        vec![Some(base_box); m],
    )?;

    let scenarios = family.sample_scenarios(&vec![cfg.samples_per_agent; m], cfg.scenario_seed)?;

    // interior ball on the epigraph axis: every signal is bounded by the
    // component count, so a tall enough epigraph value clears all
    // halfspaces with margin
    let rho = 0.5;
    let peak = cfg.signal_components as f64;
    let mut center = vec![0.0; n];
    center[d] = peak + 1.0 + rho * (n as f64).sqrt();
    let interior = InteriorPoint {
        center: center.into(),
        radius: rho,
    };

    let problem = build_scenario_program(&objectives, &family, &scenarios, n, Some(interior))?;
    Ok((problem, family))
}

/// Everything the benchmark produced: the converged epigraph value, the
/// consensus state, the a-priori bounds, and the fresh-sample check.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BenchmarkSummary {
    /// x^(d+1) at the certified point.
    pub worst_case_error: f64,
    /// x^(d+1) of each agent's final iterate.
    pub agent_worst_errors: Vec<f64>,
    pub consensus_residual: f64,
    pub iterations: usize,
    pub converged: bool,
    pub epsilon_naive: EpsilonReport,
    pub epsilon_tight: EpsilonReport,
    pub violation: ViolationReport,
    /// The feasible average of the final iterates.
    pub certified_point: DecisionVector,
    /// Pooled objective at the certified point.
    pub certified_objective: f64,
    /// Pooled objective at each agent's final iterate.
    pub agent_objectives: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub centralized_objective: Option<f64>,
    /// |certified - centralized| / max(1, |centralized|).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub oracle_gap: Option<f64>,
}

/// Runs the full pipeline on the ring of alternating communicating
/// pairs with c(k) = 0.05/(k+1), then certifies the solution: the
/// naive and tight epsilon bounds plus an empirical violation estimate
/// on fresh scenarios.
pub fn run_benchmark(cfg: &RegressionConfig, run_config: &RunConfig) -> Result<BenchmarkSummary> {
    run_benchmark_detailed(cfg, run_config).map(|(summary, _)| summary)
}

/// Like [`run_benchmark`] but also hands back the raw run result so the
/// caller can emit the iteration trace.
pub fn run_benchmark_detailed(
    cfg: &RegressionConfig,
    run_config: &RunConfig,
) -> Result<(BenchmarkSummary, RunResult)> {
    let (problem, family) = build_regression_problem(cfg)?;
    let schedule = NetworkSchedule::ring_alternating_pairs(cfg.agents)?;
    let steps = StepSchedule::Harmonic {
        alpha: BENCH_STEP_ALPHA,
    };
    let result = run(&problem, &schedule, &steps, run_config)?;
    let summary = summarize(cfg, &problem, &family, &result)?;
    Ok((summary, result))
}

fn summarize(
    cfg: &RegressionConfig,
    problem: &ProblemSpec,
    family: &UncertainConstraintFamily,
    result: &RunResult,
) -> Result<BenchmarkSummary> {
    let d = cfg.cosine_terms;
    let certified_point = result
        .final_feasible_average
        .clone()
        .unwrap_or_else(|| result.final_average.clone());

    let pooled_objective = |x: &DecisionVector| -> Result<f64> {
        let mut total = 0.0;
        for agent in &problem.agents {
            total += agent.objective.evaluate(x)?;
        }
        Ok(total)
    };

    let scenario_cfg = cfg.scenario_config();
    let naive = epsilon_naive(&scenario_cfg)?;
    let tight = epsilon_tight(&scenario_cfg)?;
    let violation = estimate_violation(
        &certified_point,
        family,
        cfg.validation_samples,
        cfg.validation_seed,
    )?;

    let mut agent_objectives = Vec::with_capacity(problem.num_agents());
    for x in &result.final_states {
        agent_objectives.push(pooled_objective(x)?);
    }

    let (centralized_objective, oracle_gap) = if cfg.oracle_comparison {
        let x_star = centralized_solve_from(problem, 1e-6, Some(&certified_point))?;
        let central = pooled_objective(&x_star)?;
        let certified = pooled_objective(&certified_point)?;
        let gap = (certified - central).abs() / central.abs().max(1.0);
        (Some(central), Some(gap))
    } else {
        (None, None)
    };

    Ok(BenchmarkSummary {
        worst_case_error: certified_point[d],
        agent_worst_errors: result.final_states.iter().map(|x| x[d]).collect(),
        consensus_residual: result.final_consensus_residual,
        iterations: result.iterations,
        converged: result.converged,
        epsilon_naive: naive,
        epsilon_tight: tight,
        violation,
        certified_objective: pooled_objective(&certified_point)?,
        certified_point,
        agent_objectives,
        centralized_objective,
        oracle_gap,
    })
}
