//! Desk-scale run of the L1-regularized regression benchmark: builds
//! the scenario program, runs the ring-of-pairs network, and certifies
//! the converged solution with the epsilon bounds and a fresh-sample
//! violation estimate.

use proxcon::bench::{run_benchmark, RegressionConfig};
use proxcon::consensus::{RunConfig, TraceVerbosity};

fn main() {
    let cfg = RegressionConfig::desk_scale();
    let run_config = RunConfig {
        max_iterations: 500,
        iterate_tolerance: 5e-4,
        inner_tol: 1e-8,
        trace: TraceVerbosity::Summary,
        parallel: true,
        ..RunConfig::default()
    };
    println!(
        "benchmark: m = {}, d = {}, N_i = {}, lambda = {}",
        cfg.agents, cfg.cosine_terms, cfg.samples_per_agent, cfg.regularization
    );
    let start = std::time::Instant::now();
    let summary = run_benchmark(&cfg, &run_config).expect("benchmark run");
    println!("elapsed: {:.1?}", start.elapsed());
    println!(
        "converged: {} after {} iterations, consensus residual {:.3e}",
        summary.converged, summary.iterations, summary.consensus_residual
    );
    println!("worst-case approximation error: {:.4}", summary.worst_case_error);
    println!(
        "per-agent epigraph values: {:?}",
        summary
            .agent_worst_errors
            .iter()
            .map(|v| (v * 1e4).round() / 1e4)
            .collect::<Vec<_>>()
    );
    println!(
        "epsilon_naive = {:.4}, epsilon_tight = {:.4}",
        summary.epsilon_naive.value, summary.epsilon_tight.value
    );
    println!(
        "empirical violation = {:.4} over {} fresh samples (95% CI [{:.4}, {:.4}])",
        summary.violation.estimate,
        summary.violation.samples,
        summary.violation.interval.0,
        summary.violation.interval.1
    );
    if let (Some(central), Some(gap)) = (summary.centralized_objective, summary.oracle_gap) {
        println!(
            "centralized objective = {:.6}, certified objective = {:.6}, gap = {:.3e}",
            central, summary.certified_objective, gap
        );
    }
}
