//! Experiment ingestion, command dispatch, and artifact emission.
//!
//! Experiments are JSON documents (schema in
//! `schemas/experiment-config.schema.json`): exactly one of a `problem`
//! or a `benchmark` block, plus network, step-schedule, run, scenario
//! and output blocks as the commands require. Artifacts are a summary
//! JSON and a trace CSV; run artifacts embed the resolved config and
//! seeds, with the execution-only parallelism hint normalized so that
//! identical configs and seeds produce byte-identical summaries across
//! parallelism settings.
//!
//! Exit codes: 0 success, 1 validation failure, 2 non-convergence or
//! numeric failure, 3 I/O or schema error.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::bench::{run_benchmark_detailed, RegressionConfig};
use crate::consensus::{run, RunConfig, RunResult, StepSchedule};
use crate::error::{Error, Result};
use crate::model::{DecisionVector, ProblemSpec};
use crate::network::{
    validate_connectivity, validate_weights, NetworkSchedule, WeightMatrix,
};
use crate::scenario::{
    epsilon_common, epsilon_common_improved, epsilon_naive, epsilon_tight, estimate_violation,
    invert_sample_size, EpsilonReport, InversionMode, ScenarioConfig,
};

/// Names the directory that relative artifact paths resolve against.
pub const OUTPUT_DIR_ENV: &str = "PROXCON_OUTPUT_DIR";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub problem: Option<ProblemSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub benchmark: Option<RegressionConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub network: Option<NetworkBlock>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub steps: Option<StepSchedule>,
    #[serde(default)]
    pub run: RunConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scenario: Option<ScenarioBlock>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<OutputBlock>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkBlock {
    pub agents: usize,
    pub kind: NetworkKind,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NetworkKind {
    CompleteUniform,
    RingAlternatingPairs,
    /// Row-major m-by-m matrices repeated periodically.
    ExplicitPeriodic { matrices: Vec<Vec<f64>> },
}

impl NetworkBlock {
    pub fn build(&self) -> Result<NetworkSchedule> {
        match &self.kind {
            NetworkKind::CompleteUniform => NetworkSchedule::complete_uniform(self.agents),
            NetworkKind::RingAlternatingPairs => {
                NetworkSchedule::ring_alternating_pairs(self.agents)
            }
            NetworkKind::ExplicitPeriodic { matrices } => {
                let mats: Result<Vec<WeightMatrix>> = matrices
                    .iter()
                    .map(|m| WeightMatrix::new(self.agents, m.clone()))
                    .collect();
                NetworkSchedule::explicit_periodic(mats?)
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioBlock {
    pub sample_counts: Vec<u64>,
    /// Overall confidence budget beta.
    pub beta: f64,
    /// Per-agent split of beta; defaults to the even split beta/m.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub confidence_shares: Option<Vec<f64>>,
    pub support_bound: u64,
}

impl ScenarioBlock {
    pub fn to_config(&self) -> Result<ScenarioConfig> {
        let m = self.sample_counts.len();
        if m == 0 {
            return Err(Error::Config("scenario.sample_counts is empty".into()));
        }
        let shares = match &self.confidence_shares {
            Some(shares) => {
                let total: f64 = shares.iter().sum();
                if (total - self.beta).abs() > 1e-12 * self.beta.max(1.0) {
                    return Err(Error::Config(format!(
                        "scenario.confidence_shares sum to {total}, expected beta = {}",
                        self.beta
                    )));
                }
                shares.clone()
            }
            None => vec![self.beta / m as f64; m],
        };
        let cfg = ScenarioConfig {
            sample_counts: self.sample_counts.clone(),
            confidence_shares: shares,
            support_bound: self.support_bound,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    fn uniform_samples(&self) -> Result<u64> {
        let first = self.sample_counts[0];
        if self.sample_counts.iter().any(|&n| n != first) {
            return Err(Error::Config(
                "this calculator needs uniform per-agent sample counts".into(),
            ));
        }
        Ok(first)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputBlock {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trace_csv: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub summary_json: Option<PathBuf>,
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        let config: ExperimentConfig = serde_json::from_str(&text)?;
        config.check_blocks()?;
        Ok(config)
    }

    fn check_blocks(&self) -> Result<()> {
        match (&self.problem, &self.benchmark) {
            (Some(_), Some(_)) => Err(Error::Config(
                "config has both a problem and a benchmark block; pick one".into(),
            )),
            (None, None) => Err(Error::Config(
                "config needs a problem or a benchmark block".into(),
            )),
            _ => Ok(()),
        }
    }

    fn network(&self) -> Result<&NetworkBlock> {
        self.network
            .as_ref()
            .ok_or_else(|| Error::Config("config needs a network block".into()))
    }

    fn steps(&self) -> Result<&StepSchedule> {
        self.steps
            .as_ref()
            .ok_or_else(|| Error::Config("config needs a steps block".into()))
    }

    fn scenario(&self) -> Result<&ScenarioBlock> {
        self.scenario
            .as_ref()
            .ok_or_else(|| Error::Config("config needs a scenario block".into()))
    }

    fn problem(&self) -> Result<&ProblemSpec> {
        self.problem
            .as_ref()
            .ok_or_else(|| Error::Config("this command needs a problem block".into()))
    }

    fn benchmark(&self) -> Result<&RegressionConfig> {
        self.benchmark
            .as_ref()
            .ok_or_else(|| Error::Config("this command needs a benchmark block".into()))
    }

    /// The config as embedded in artifacts: execution-only knobs
    /// normalized so summaries are reproducible across hosts.
    fn resolved_for_artifact(&self) -> ExperimentConfig {
        let mut resolved = self.clone();
        resolved.run.parallel = false;
        resolved
    }
}

/// One CLI invocation.
#[derive(Clone, Debug)]
pub enum CliCommand {
    /// Print assumption reports; nonzero exit on any violation.
    Validate,
    /// Execute the distributed run; write trace CSV and summary JSON.
    Run {
        trace_csv: Option<PathBuf>,
        summary_json: Option<PathBuf>,
    },
    /// Print violation-probability bounds.
    Epsilon { method: EpsilonSelector },
    /// Invert a bound for the smallest sufficient sample count.
    SampleSize {
        target: f64,
        mode: SampleSizeMode,
        cap: u64,
    },
    /// Estimate the violation probability of a stored solution.
    Violation {
        solution: PathBuf,
        samples: Option<usize>,
        seed: Option<u64>,
    },
    /// Run the regression benchmark pipeline.
    Bench {
        trace_csv: Option<PathBuf>,
        summary_json: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EpsilonSelector {
    Common,
    CommonImproved,
    Naive,
    Tight,
    All,
}

impl std::str::FromStr for EpsilonSelector {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "common" => Ok(Self::Common),
            "common-improved" | "common_improved" => Ok(Self::CommonImproved),
            "naive" => Ok(Self::Naive),
            "tight" => Ok(Self::Tight),
            "all" => Ok(Self::All),
            other => Err(format!(
                "unknown method '{other}' (expected common | common-improved | naive | tight | all)"
            )),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SampleSizeMode {
    Common,
    TightUniform,
}

impl std::str::FromStr for SampleSizeMode {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "common" => Ok(Self::Common),
            "tight-uniform" | "tight_uniform" => Ok(Self::TightUniform),
            other => Err(format!(
                "unknown mode '{other}' (expected common | tight-uniform)"
            )),
        }
    }
}

/// Summary JSON written by the `run` command.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RunSummary {
    pub config: ExperimentConfig,
    pub converged: bool,
    pub iterations: usize,
    pub final_consensus_residual: f64,
    pub final_states: Vec<DecisionVector>,
    pub final_average: DecisionVector,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub average_objective: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub feasible_average: Option<DecisionVector>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub feasible_average_objective: Option<f64>,
    pub agent_objectives: Vec<f64>,
}

fn exit_code_for(error: &Error) -> i32 {
    match error {
        Error::ValidationFailed(_) => 1,
        Error::NonConvergence { .. }
        | Error::ProxNotConverged { .. }
        | Error::AgentSolve { .. }
        | Error::EmptyIntersection { .. }
        | Error::ProjectionNotConverged { .. }
        | Error::TargetUnreachable { .. } => 2,
        _ => 3,
    }
}

/// Resolves a relative artifact path against `PROXCON_OUTPUT_DIR` when
/// set.
pub fn resolve_output_path(path: &Path) -> PathBuf {
    if path.is_relative() {
        if let Ok(dir) = std::env::var(OUTPUT_DIR_ENV) {
            if !dir.is_empty() {
                return Path::new(&dir).join(path);
            }
        }
    }
    path.to_path_buf()
}

/// Loads the config, executes the command, writes artifacts, and maps
/// the outcome to an exit status.
pub fn dispatch(command: &CliCommand, config_path: &Path) -> i32 {
    let config = match ExperimentConfig::load(config_path) {
        Ok(config) => config,
        Err(e) => {
            eprintln!("error: {e}");
            return 3;
        }
    };
    let outcome = match command {
        CliCommand::Validate => cmd_validate(&config),
        CliCommand::Run {
            trace_csv,
            summary_json,
        } => cmd_run(&config, trace_csv.as_deref(), summary_json.as_deref()),
        CliCommand::Epsilon { method } => cmd_epsilon(&config, *method),
        CliCommand::SampleSize { target, mode, cap } => {
            cmd_sample_size(&config, *target, *mode, *cap)
        }
        CliCommand::Violation {
            solution,
            samples,
            seed,
        } => cmd_violation(&config, solution, *samples, *seed),
        CliCommand::Bench {
            trace_csv,
            summary_json,
        } => cmd_bench(&config, trace_csv.as_deref(), summary_json.as_deref()),
    };
    match outcome {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code_for(&e)
        }
    }
}

fn cmd_validate(config: &ExperimentConfig) -> Result<i32> {
    let mut violations: Vec<String> = Vec::new();

    match config.steps() {
        Ok(steps) => {
            if let Err(e) = steps.validate() {
                violations.push(format!("step schedule: {e}"));
            } else {
                println!("step schedule: ok");
            }
        }
        Err(e) => violations.push(e.to_string()),
    }

    match config.network().and_then(|block| block.build()) {
        Ok(schedule) => {
            let horizon = (2 * schedule.period()).max(schedule.intercommunication_bound() + 1);
            let mut weight_ok = true;
            for k in 0..horizon {
                for violation in validate_weights(&schedule.matrix(k), schedule.eta()) {
                    violations.push(format!("weights at k={k}: {violation}"));
                    weight_ok = false;
                }
            }
            if weight_ok {
                println!(
                    "weights: doubly stochastic with eta = {} over one period",
                    schedule.eta()
                );
            }
            let report = validate_connectivity(&schedule, horizon.max(16));
            if report.strongly_connected {
                println!(
                    "connectivity: strongly connected, diameter {}, max recurrence gap {} (T = {})",
                    report.diameter.unwrap_or(0),
                    report.max_recurrence_gap,
                    schedule.intercommunication_bound()
                );
            }
            violations.extend(report.violations.iter().map(|v| format!("connectivity: {v}")));
        }
        Err(e) => violations.push(e.to_string()),
    }

    if let Some(problem) = &config.problem {
        match problem.validate() {
            Ok(()) => println!(
                "problem: {} agents in dimension {}, feasibility checks passed",
                problem.num_agents(),
                problem.dimension
            ),
            Err(e) => violations.push(format!("problem: {e}")),
        }
    }

    if violations.is_empty() {
        println!("all checks passed");
        Ok(0)
    } else {
        for v in &violations {
            println!("violation: {v}");
        }
        Ok(1)
    }
}

fn cmd_run(
    config: &ExperimentConfig,
    trace_csv: Option<&Path>,
    summary_json: Option<&Path>,
) -> Result<i32> {
    let problem = config.problem()?;
    let schedule = config.network()?.build()?;
    let steps = config.steps()?;
    let result = run(problem, &schedule, steps, &config.run)?;

    let mut agent_objectives = Vec::with_capacity(problem.num_agents());
    for (agent, x) in problem.agents.iter().zip(&result.final_states) {
        agent_objectives.push(agent.objective.evaluate(x)?);
    }
    let summary = RunSummary {
        config: config.resolved_for_artifact(),
        converged: result.converged,
        iterations: result.iterations,
        final_consensus_residual: result.final_consensus_residual,
        final_states: result.final_states.clone(),
        final_average: result.final_average.clone(),
        average_objective: result.average_objective,
        feasible_average: result.final_feasible_average.clone(),
        feasible_average_objective: result.feasible_average_objective,
        agent_objectives,
    };
    write_artifacts(config, &summary, &result, trace_csv, summary_json)?;
    println!(
        "run: {} after {} iterations, consensus residual {:.3e}",
        if result.converged {
            "converged"
        } else {
            "iteration budget exhausted"
        },
        result.iterations,
        result.final_consensus_residual
    );
    Ok(if result.converged { 0 } else { 2 })
}

fn write_artifacts(
    config: &ExperimentConfig,
    summary: &impl Serialize,
    result: &RunResult,
    trace_csv: Option<&Path>,
    summary_json: Option<&Path>,
) -> Result<()> {
    let output = config.output.clone().unwrap_or(OutputBlock {
        trace_csv: None,
        summary_json: None,
    });
    let trace_path = trace_csv
        .map(Path::to_path_buf)
        .or(output.trace_csv.clone());
    let summary_path = summary_json
        .map(Path::to_path_buf)
        .or(output.summary_json.clone());
    if let Some(path) = trace_path {
        let path = resolve_output_path(&path);
        let mut file = fs::File::create(&path)?;
        result.trace.write_csv(&mut file)?;
        println!("trace written to {}", path.display());
    }
    if let Some(path) = summary_path {
        let path = resolve_output_path(&path);
        fs::write(&path, serde_json::to_string_pretty(summary)?)?;
        println!("summary written to {}", path.display());
    }
    Ok(())
}

fn cmd_epsilon(config: &ExperimentConfig, method: EpsilonSelector) -> Result<i32> {
    let block = config.scenario()?;
    let cfg = block.to_config()?;
    let mut reports: Vec<EpsilonReport> = Vec::new();
    let wants = |m: EpsilonSelector| method == m || method == EpsilonSelector::All;
    if wants(EpsilonSelector::Common) {
        reports.push(epsilon_common(
            block.uniform_samples()?,
            block.support_bound,
            block.beta,
        )?);
    }
    if wants(EpsilonSelector::CommonImproved) {
        reports.push(epsilon_common_improved(
            block.uniform_samples()?,
            block.support_bound,
            block.beta,
        )?);
    }
    if wants(EpsilonSelector::Naive) {
        reports.push(epsilon_naive(&cfg)?);
    }
    if wants(EpsilonSelector::Tight) {
        reports.push(epsilon_tight(&cfg)?);
    }
    println!("{}", serde_json::to_string_pretty(&reports)?);
    Ok(0)
}

fn cmd_sample_size(
    config: &ExperimentConfig,
    target: f64,
    mode: SampleSizeMode,
    cap: u64,
) -> Result<i32> {
    let block = config.scenario()?;
    let inversion_mode = match mode {
        SampleSizeMode::Common => InversionMode::Common,
        SampleSizeMode::TightUniform => InversionMode::TightUniform {
            agents: block.sample_counts.len(),
        },
    };
    let report = invert_sample_size(target, block.beta, block.support_bound, inversion_mode, cap)?;
    println!("{}", serde_json::to_string_pretty(&report)?);
    Ok(0)
}

#[derive(Deserialize)]
#[serde(untagged)]
enum SolutionFile {
    Bare(Vec<f64>),
    Tagged { x: Vec<f64> },
}

fn cmd_violation(
    config: &ExperimentConfig,
    solution: &Path,
    samples: Option<usize>,
    seed: Option<u64>,
) -> Result<i32> {
    let bench_cfg = config.benchmark()?;
    let (_, family) = crate::bench::build_regression_problem(bench_cfg)?;
    let text = fs::read_to_string(solution)?;
    let parsed: SolutionFile = serde_json::from_str(&text)?;
    let entries = match parsed {
        SolutionFile::Bare(v) => v,
        SolutionFile::Tagged { x } => x,
    };
    let x = DecisionVector::new(entries)?;
    if x.dim() != bench_cfg.dimension() {
        return Err(Error::Config(format!(
            "solution has dimension {}, benchmark needs {}",
            x.dim(),
            bench_cfg.dimension()
        )));
    }
    let report = estimate_violation(
        &x,
        &family,
        samples.unwrap_or(bench_cfg.validation_samples),
        seed.unwrap_or(bench_cfg.validation_seed),
    )?;
    println!("{}", serde_json::to_string_pretty(&report)?);
    Ok(0)
}

/// Summary JSON written by the `bench` command.
#[derive(Serialize)]
struct BenchArtifact<'a> {
    config: ExperimentConfig,
    summary: &'a crate::bench::BenchmarkSummary,
}

fn cmd_bench(
    config: &ExperimentConfig,
    trace_csv: Option<&Path>,
    summary_json: Option<&Path>,
) -> Result<i32> {
    let bench_cfg = config.benchmark()?;
    let (summary, result) = run_benchmark_detailed(bench_cfg, &config.run)?;
    let artifact = BenchArtifact {
        config: config.resolved_for_artifact(),
        summary: &summary,
    };
    write_artifacts(config, &artifact, &result, trace_csv, summary_json)?;
    println!(
        "bench: worst-case error {:.4}, consensus residual {:.3e} after {} iterations",
        summary.worst_case_error, summary.consensus_residual, summary.iterations
    );
    println!(
        "bench: epsilon_naive = {:.4}, epsilon_tight = {:.4}, empirical violation = {:.4} (95% CI [{:.4}, {:.4}])",
        summary.epsilon_naive.value,
        summary.epsilon_tight.value,
        summary.violation.estimate,
        summary.violation.interval.0,
        summary.violation.interval.1
    );
    if let Some(gap) = summary.oracle_gap {
        println!("bench: centralized objective gap {:.3e}", gap);
    }
    Ok(if summary.converged { 0 } else { 2 })
}
