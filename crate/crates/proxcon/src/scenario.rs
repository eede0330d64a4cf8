//! Probabilistic-feasibility calculators for scenario programs: the
//! common-resource bound, its binomial-root refinement, the per-agent
//! union bound, the tight bound via exact integer budget maximization,
//! sample-size inversion, scenario-program construction, and
//! Monte-Carlo violation estimation with Clopper-Pearson intervals.
//!
//! All binomial coefficients are evaluated in log-gamma arithmetic, so
//! the calculators stay finite up to sample counts around 1e7 and
//! support bounds around 1e3. Epsilon values are clamped to [0, 1]; a
//! clamped (trivial) bound is flagged on the report.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{AgentSpec, ConvexSet, DecisionVector, InteriorPoint, ObjectiveTerm, ProblemSpec};
use crate::seed::mix_seed;

/// Membership slack when counting constraint violations.
const VIOLATION_TOL: f64 = 1e-9;
/// Samples per deterministic shard in violation estimation.
const SHARD_SIZE: usize = 1024;

/// Per-agent sample counts N_i, per-agent confidence shares beta_i
/// (summing to the overall confidence budget beta), and the bound d on
/// the support-set cardinality of the pooled scenario program.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub sample_counts: Vec<u64>,
    pub confidence_shares: Vec<f64>,
    pub support_bound: u64,
}

impl ScenarioConfig {
    /// The even split beta_i = beta / m with N_i = n for every agent.
    pub fn uniform(agents: usize, samples: u64, beta: f64, support_bound: u64) -> Self {
        Self {
            sample_counts: vec![samples; agents],
            confidence_shares: vec![beta / agents as f64; agents],
            support_bound,
        }
    }

    pub fn num_agents(&self) -> usize {
        self.sample_counts.len()
    }

    /// The overall confidence budget beta = sum_i beta_i.
    pub fn beta(&self) -> f64 {
        self.confidence_shares.iter().sum()
    }

    pub fn validate(&self) -> Result<()> {
        if self.sample_counts.is_empty() {
            return Err(Error::InvalidInput("scenario config has no agents".into()));
        }
        if self.sample_counts.len() != self.confidence_shares.len() {
            return Err(Error::DimensionMismatch {
                expected: self.sample_counts.len(),
                got: self.confidence_shares.len(),
            });
        }
        if self.sample_counts.iter().any(|&n| n == 0) {
            return Err(Error::InvalidInput("sample counts must be positive".into()));
        }
        for &b in &self.confidence_shares {
            if !(b > 0.0 && b < 1.0) {
                return Err(Error::InvalidInput(format!(
                    "confidence share {b} outside (0,1)"
                )));
            }
        }
        let beta = self.beta();
        if !(beta > 0.0 && beta < 1.0) {
            return Err(Error::InvalidInput(format!(
                "total confidence budget {beta} outside (0,1)"
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EpsilonMethod {
    Common,
    CommonImproved,
    Naive,
    Tight,
}

/// A violation-probability bound together with how it was obtained.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EpsilonReport {
    pub method: EpsilonMethod,
    /// The bound, clamped to [0, 1].
    pub value: f64,
    /// True when any contributing term hit the trivial bound 1.
    pub trivial: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub per_agent: Option<Vec<f64>>,
    /// The maximizing budget allocation (tight method only).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub allocation: Option<Vec<u64>>,
    /// Residual of the binomial-tail root (improved method only).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub root_residual: Option<f64>,
    pub sample_counts: Vec<u64>,
    pub confidence_shares: Vec<f64>,
    pub support_bound: u64,
}

/// ln Gamma(x) for x > 0 (Lanczos approximation, g = 7).
pub fn ln_gamma(x: f64) -> f64 {
    const COEFFS: [f64; 8] = [
        676.5203681218851,
        -1259.1392167224028,
        771.32342877765313,
        -176.61502916214059,
        12.507343278686905,
        -0.13857109526572012,
        9.9843695780195716e-6,
        1.5056327351493116e-7,
    ];
    debug_assert!(x > 0.0);
    if x < 0.5 {
        // reflection keeps small arguments accurate
        return std::f64::consts::PI.ln()
            - (std::f64::consts::PI * x).sin().ln()
            - ln_gamma(1.0 - x);
    }
    let z = x - 1.0;
    let mut acc = 0.99999999999980993;
    for (i, c) in COEFFS.iter().enumerate() {
        acc += c / (z + (i + 1) as f64);
    }
    let t = z + 7.5;
    0.5 * (2.0 * std::f64::consts::PI).ln() + (z + 0.5) * t.ln() - t + acc.ln()
}

/// ln C(n, k).
pub fn ln_binomial(n: u64, k: u64) -> f64 {
    if k > n {
        return f64::NEG_INFINITY;
    }
    if k == 0 || k == n {
        return 0.0;
    }
    ln_gamma(n as f64 + 1.0) - ln_gamma(k as f64 + 1.0) - ln_gamma((n - k) as f64 + 1.0)
}

fn check_beta(beta: f64) -> Result<()> {
    if !(beta > 0.0 && beta < 1.0) {
        return Err(Error::InvalidInput(format!(
            "confidence parameter {beta} outside (0,1)"
        )));
    }
    Ok(())
}

/// The common-resource bound
/// `1 - (beta / C(N, d))^(1 / (N - d))`,
/// valid when all agents share the same N scenarios. Returns the
/// trivial bound 1 (flagged) when N <= d.
pub fn epsilon_common(samples: u64, support_bound: u64, beta: f64) -> Result<EpsilonReport> {
    check_beta(beta)?;
    let (value, trivial) = epsilon_common_value(samples, support_bound, beta);
    Ok(EpsilonReport {
        method: EpsilonMethod::Common,
        value,
        trivial,
        per_agent: None,
        allocation: None,
        root_residual: None,
        sample_counts: vec![samples],
        confidence_shares: vec![beta],
        support_bound,
    })
}

fn epsilon_common_value(samples: u64, support_bound: u64, beta: f64) -> (f64, bool) {
    if samples <= support_bound {
        return (1.0, true);
    }
    let exponent = (beta.ln() - ln_binomial(samples, support_bound)) / (samples - support_bound) as f64;
    ((-f64::exp_m1(exponent)).clamp(0.0, 1.0), false)
}

/// ln of the lower binomial tail sum_{k=0}^{d-1} C(n,k) e^k (1-e)^(n-k),
/// evaluated by log-sum-exp.
fn ln_binomial_tail(samples: u64, support_bound: u64, eps: f64) -> f64 {
    let ln_eps = eps.ln();
    let ln_one_minus = (-eps).ln_1p();
    let mut terms = Vec::with_capacity(support_bound as usize);
    for k in 0..support_bound {
        terms.push(
            ln_binomial(samples, k) + k as f64 * ln_eps + (samples - k) as f64 * ln_one_minus,
        );
    }
    let peak = terms.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if peak == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    peak + terms.iter().map(|t| (t - peak).exp()).sum::<f64>().ln()
}

/// The refined common-resource bound: the root of
/// `sum_{k=0}^{d-1} C(N,k) e^k (1-e)^(N-k) = beta` in (0, 1), found by
/// bisection on the log-domain tail. Tighter than [`epsilon_common`].
pub fn epsilon_common_improved(
    samples: u64,
    support_bound: u64,
    beta: f64,
) -> Result<EpsilonReport> {
    check_beta(beta)?;
    if support_bound == 0 {
        return Err(Error::InvalidInput(
            "improved bound needs support_bound >= 1".into(),
        ));
    }
    if samples <= support_bound {
        return Ok(EpsilonReport {
            method: EpsilonMethod::CommonImproved,
            value: 1.0,
            trivial: true,
            per_agent: None,
            allocation: None,
            root_residual: None,
            sample_counts: vec![samples],
            confidence_shares: vec![beta],
            support_bound,
        });
    }
    let ln_beta = beta.ln();
    let tail = |eps: f64| ln_binomial_tail(samples, support_bound, eps);
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    // the tail decreases from 1 at eps=0 to 0 at eps=1, so a sign
    // change is guaranteed for beta in (0,1)
    if tail(f64::MIN_POSITIVE.sqrt()) < ln_beta {
        return Err(Error::InvalidInput(
            "binomial tail equation has no sign change".into(),
        ));
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if tail(mid) > ln_beta {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let root = 0.5 * (lo + hi);
    let residual = (ln_binomial_tail(samples, support_bound, root).exp() - beta).abs();
    Ok(EpsilonReport {
        method: EpsilonMethod::CommonImproved,
        value: root.clamp(0.0, 1.0),
        trivial: false,
        per_agent: None,
        allocation: None,
        root_residual: Some(residual),
        sample_counts: vec![samples],
        confidence_shares: vec![beta],
        support_bound,
    })
}

/// The per-agent local bound allowing k of the support constraints:
/// `1 - (beta_i / ((d+1) C(N_i, k)))^(1 / (N_i - k))` for 0 <= k <= d.
/// Returns exactly 1 when N_i <= k (the trivial bound).
pub fn epsilon_i_k(samples: u64, beta_i: f64, support_bound: u64, k: u64) -> Result<f64> {
    check_beta(beta_i)?;
    if k > support_bound {
        return Err(Error::InvalidInput(format!(
            "allocation {k} exceeds the support bound {support_bound}"
        )));
    }
    if samples <= k {
        return Ok(1.0);
    }
    let exponent = (beta_i.ln() - ((support_bound + 1) as f64).ln() - ln_binomial(samples, k))
        / (samples - k) as f64;
    Ok((-f64::exp_m1(exponent)).clamp(0.0, 1.0))
}

/// The union bound with each agent charged the full support bound:
/// epsilon_i = 1 - (beta_i / C(N_i, d))^(1/(N_i - d)), summed over
/// agents and clamped to [0, 1]. Conservative; grows linearly with the
/// number of agents.
pub fn epsilon_naive(cfg: &ScenarioConfig) -> Result<EpsilonReport> {
    cfg.validate()?;
    let mut per_agent = Vec::with_capacity(cfg.num_agents());
    let mut trivial = false;
    for (&n, &beta_i) in cfg.sample_counts.iter().zip(&cfg.confidence_shares) {
        let (value, term_trivial) = epsilon_common_value(n, cfg.support_bound, beta_i);
        trivial |= term_trivial;
        per_agent.push(value);
    }
    let total: f64 = per_agent.iter().sum();
    Ok(EpsilonReport {
        method: EpsilonMethod::Naive,
        value: total.clamp(0.0, 1.0),
        trivial: trivial || total >= 1.0,
        per_agent: Some(per_agent),
        allocation: None,
        root_residual: None,
        sample_counts: cfg.sample_counts.clone(),
        confidence_shares: cfg.confidence_shares.clone(),
        support_bound: cfg.support_bound,
    })
}

/// The tight bound: the exact maximum of sum_i epsilon_i(d_i) over
/// nonnegative integer allocations with sum_i d_i <= d, solved by
/// dynamic programming over (agent, remaining budget). Reports the
/// maximizing allocation.
pub fn epsilon_tight(cfg: &ScenarioConfig) -> Result<EpsilonReport> {
    cfg.validate()?;
    let m = cfg.num_agents();
    let d = cfg.support_bound as usize;

    // per-agent value tables eps_i(0..=d)
    let mut values = Vec::with_capacity(m);
    for (&n, &beta_i) in cfg.sample_counts.iter().zip(&cfg.confidence_shares) {
        let row: Result<Vec<f64>> = (0..=d as u64)
            .map(|k| epsilon_i_k(n, beta_i, cfg.support_bound, k))
            .collect();
        values.push(row?);
    }

    let mut best = vec![0.0f64; d + 1];
    let mut choice = vec![vec![0usize; d + 1]; m];
    for (i, row) in values.iter().enumerate() {
        let mut next = vec![f64::NEG_INFINITY; d + 1];
        for budget in 0..=d {
            for take in 0..=budget {
                let candidate = best[budget - take] + row[take];
                if candidate > next[budget] {
                    next[budget] = candidate;
                    choice[i][budget] = take;
                }
            }
        }
        best = next;
    }
    let value = best[d];

    let mut allocation = vec![0u64; m];
    let mut budget = d;
    for i in (0..m).rev() {
        let take = choice[i][budget];
        allocation[i] = take as u64;
        budget -= take;
    }
    let per_agent: Vec<f64> = allocation
        .iter()
        .enumerate()
        .map(|(i, &k)| values[i][k as usize])
        .collect();

    Ok(EpsilonReport {
        method: EpsilonMethod::Tight,
        value: value.clamp(0.0, 1.0),
        trivial: value >= 1.0 || per_agent.iter().any(|&v| v >= 1.0),
        per_agent: Some(per_agent),
        allocation: Some(allocation),
        root_residual: None,
        sample_counts: cfg.sample_counts.clone(),
        confidence_shares: cfg.confidence_shares.clone(),
        support_bound: cfg.support_bound,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InversionMode {
    /// Invert the common-resource bound for the shared sample count.
    Common,
    /// Invert the tight bound with uniform per-agent counts and an even
    /// confidence split.
    TightUniform { agents: usize },
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SampleSizeReport {
    pub mode: InversionMode,
    /// The least per-agent (or shared) sample count meeting the target.
    pub samples: u64,
    pub achieved_epsilon: f64,
    pub target_epsilon: f64,
    pub beta: f64,
    pub support_bound: u64,
}

/// Finds the smallest sample count whose bound meets `eps_target`, by
/// monotone bisection, and verifies minimality by re-evaluation.
pub fn invert_sample_size(
    eps_target: f64,
    beta: f64,
    support_bound: u64,
    mode: InversionMode,
    cap: u64,
) -> Result<SampleSizeReport> {
    check_beta(beta)?;
    if !(eps_target > 0.0 && eps_target < 1.0) {
        return Err(Error::InvalidInput(format!(
            "target epsilon {eps_target} outside (0,1)"
        )));
    }
    let evaluate = |n: u64| -> Result<f64> {
        match mode {
            InversionMode::Common => Ok(epsilon_common_value(n, support_bound, beta).0),
            InversionMode::TightUniform { agents } => {
                let cfg = ScenarioConfig::uniform(agents, n, beta, support_bound);
                Ok(epsilon_tight(&cfg)?.value)
            }
        }
    };

    let mut lo = support_bound + 1;
    if evaluate(lo)? <= eps_target {
        let achieved = evaluate(lo)?;
        return Ok(SampleSizeReport {
            mode,
            samples: lo,
            achieved_epsilon: achieved,
            target_epsilon: eps_target,
            beta,
            support_bound,
        });
    }
    let mut hi = lo;
    loop {
        hi = (hi * 2).min(cap);
        if evaluate(hi)? <= eps_target {
            break;
        }
        if hi == cap {
            return Err(Error::TargetUnreachable { cap });
        }
    }
    while lo + 1 < hi {
        let mid = lo + (hi - lo) / 2;
        if evaluate(mid)? <= eps_target {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    let achieved = evaluate(hi)?;
    debug_assert!(achieved <= eps_target);
    debug_assert!(evaluate(hi - 1)? > eps_target);
    Ok(SampleSizeReport {
        mode,
        samples: hi,
        achieved_epsilon: achieved,
        target_epsilon: eps_target,
        beta,
        support_bound,
    })
}

type DeltaSampler = Box<dyn Fn(&mut ChaCha8Rng) -> f64 + Send + Sync>;
type AgentSetMap = Box<dyn Fn(f64) -> ConvexSet + Send + Sync>;

/// A family of uncertainty-dependent constraint sets X_i(delta) with a
/// common sampling law for the scalar uncertainty delta, plus optional
/// deterministic members (e.g. a compactness box) per agent.
pub struct UncertainConstraintFamily {
    draw: DeltaSampler,
    agent_sets: Vec<AgentSetMap>,
    deterministic: Vec<Option<ConvexSet>>,
}

impl UncertainConstraintFamily {
    pub fn new(
        draw: DeltaSampler,
        agent_sets: Vec<AgentSetMap>,
        deterministic: Vec<Option<ConvexSet>>,
    ) -> Result<Self> {
        if agent_sets.len() != deterministic.len() {
            return Err(Error::DimensionMismatch {
                expected: agent_sets.len(),
                got: deterministic.len(),
            });
        }
        if agent_sets.is_empty() {
            return Err(Error::InvalidInput("family has no agents".into()));
        }
        Ok(Self {
            draw,
            agent_sets,
            deterministic,
        })
    }

    pub fn num_agents(&self) -> usize {
        self.agent_sets.len()
    }

    /// The sampled constraint set of one agent, including its
    /// deterministic members.
    pub fn set_for(&self, agent: usize, delta: f64) -> ConvexSet {
        let sampled = (self.agent_sets[agent])(delta);
        match &self.deterministic[agent] {
            Some(base) => ConvexSet::Intersection(vec![base.clone(), sampled]),
            None => sampled,
        }
    }

    pub fn deterministic_for(&self, agent: usize) -> Option<&ConvexSet> {
        self.deterministic[agent].as_ref()
    }

    /// Draws i.i.d. scenario sets per agent from independent seeded
    /// streams.
    pub fn sample_scenarios(&self, counts: &[usize], seed: u64) -> Result<Vec<Vec<f64>>> {
        if counts.len() != self.num_agents() {
            return Err(Error::DimensionMismatch {
                expected: self.num_agents(),
                got: counts.len(),
            });
        }
        Ok(counts
            .iter()
            .enumerate()
            .map(|(i, &n)| {
                let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(seed, i as u64));
                (0..n).map(|_| (self.draw)(&mut rng)).collect()
            })
            .collect())
    }

    /// True when x violates the joint constraint at delta, i.e. when
    /// some agent's set X_i(delta) does not contain x.
    pub fn violates(&self, x: &DecisionVector, delta: f64, tol: f64) -> Result<bool> {
        for agent in 0..self.num_agents() {
            if let Some(base) = &self.deterministic[agent] {
                if !base.contains(x, tol)? {
                    return Ok(true);
                }
            }
            let sampled = (self.agent_sets[agent])(delta);
            if !sampled.contains(x, tol)? {
                return Ok(true);
            }
        }
        Ok(false)
    }
}

/// Replaces every agent's constraint set with the intersection of its
/// sampled scenario sets (plus deterministic members), yielding a
/// problem runnable by the consensus driver. Passing the same scenario
/// list for every agent reproduces the common-resource program.
pub fn build_scenario_program(
    objectives: &[ObjectiveTerm],
    family: &UncertainConstraintFamily,
    scenarios: &[Vec<f64>],
    dimension: usize,
    interior: Option<InteriorPoint>,
) -> Result<ProblemSpec> {
    let m = family.num_agents();
    if objectives.len() != m {
        return Err(Error::DimensionMismatch {
            expected: m,
            got: objectives.len(),
        });
    }
    if scenarios.len() != m {
        return Err(Error::DimensionMismatch {
            expected: m,
            got: scenarios.len(),
        });
    }
    let mut agents = Vec::with_capacity(m);
    for (i, (objective, draws)) in objectives.iter().zip(scenarios).enumerate() {
        let mut members = Vec::with_capacity(draws.len() + 1);
        if let Some(base) = family.deterministic_for(i) {
            members.push(base.clone());
        }
        for &delta in draws {
            members.push((family.agent_sets[i])(delta));
        }
        let constraint = match members.len() {
            0 => {
                return Err(Error::InvalidInput(format!(
                    "agent {i}: no scenario and no deterministic member"
                )))
            }
            1 => members.pop().expect("one member"),
            _ => ConvexSet::Intersection(members),
        };
        // cheap emptiness probe: project the bounding-box center
        if let Ok((lo, hi)) = constraint.bounding_box() {
            let center: DecisionVector = lo
                .iter()
                .zip(hi.iter())
                .map(|(l, u)| 0.5 * (l + u))
                .collect::<Vec<_>>()
                .into();
            if let Err(Error::EmptyIntersection { residual }) = constraint.project(&center, 1e-6)
            {
                return Err(Error::AgentSolve {
                    agent: i,
                    iteration: 0,
                    source: Box::new(Error::EmptyIntersection { residual }),
                });
            }
        }
        agents.push(AgentSpec {
            objective: objective.clone(),
            constraint,
            initial: None,
            shared_len: None,
        });
    }
    Ok(ProblemSpec {
        dimension,
        agents,
        interior,
    })
}

/// Empirical violation probability of a candidate point over fresh
/// i.i.d. uncertainty draws, with a 95% Clopper-Pearson interval.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ViolationReport {
    pub estimate: f64,
    pub violations: u64,
    pub samples: u64,
    /// 95% Clopper-Pearson confidence interval for the violation
    /// probability.
    pub interval: (f64, f64),
}

/// Estimates P{x violates the joint constraint} over `samples` fresh
/// draws. Samples are processed in fixed-size shards with per-shard
/// seeded streams, so the count is identical serial or parallel.
pub fn estimate_violation(
    x: &DecisionVector,
    family: &UncertainConstraintFamily,
    samples: usize,
    seed: u64,
) -> Result<ViolationReport> {
    if samples == 0 {
        return Err(Error::InvalidInput("need at least one sample".into()));
    }
    let shards: Vec<(usize, usize)> = (0..samples.div_ceil(SHARD_SIZE))
        .map(|s| (s, SHARD_SIZE.min(samples - s * SHARD_SIZE)))
        .collect();
    let counts: Result<Vec<u64>> = shards
        .par_iter()
        .map(|&(shard, len)| {
            let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(seed, shard as u64));
            let mut violations = 0u64;
            for _ in 0..len {
                let delta = (family.draw)(&mut rng);
                if family.violates(x, delta, VIOLATION_TOL)? {
                    violations += 1;
                }
            }
            Ok(violations)
        })
        .collect();
    let violations: u64 = counts?.iter().sum();
    let estimate = violations as f64 / samples as f64;
    let interval = clopper_pearson(violations, samples as u64, 0.05);
    Ok(ViolationReport {
        estimate,
        violations,
        samples: samples as u64,
        interval,
    })
}

/// Two-sided Clopper-Pearson interval at level `alpha`.
fn clopper_pearson(successes: u64, trials: u64, alpha: f64) -> (f64, f64) {
    let k = successes;
    let n = trials;
    let lower = if k == 0 {
        0.0
    } else {
        beta_inv(alpha / 2.0, k as f64, (n - k + 1) as f64)
    };
    let upper = if k == n {
        1.0
    } else {
        beta_inv(1.0 - alpha / 2.0, (k + 1) as f64, (n - k) as f64)
    };
    (lower, upper)
}

/// Quantile of the Beta(a, b) distribution by bisection on the
/// regularized incomplete beta function.
fn beta_inv(p: f64, a: f64, b: f64) -> f64 {
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if reg_inc_beta(mid, a, b) < p {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Regularized incomplete beta function I_x(a, b) via the Lentz
/// continued-fraction expansion.
fn reg_inc_beta(x: f64, a: f64, b: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    if x >= 1.0 {
        return 1.0;
    }
    let ln_front = ln_gamma(a + b) - ln_gamma(a) - ln_gamma(b) + a * x.ln() + b * (-x).ln_1p();
    let front = ln_front.exp();
    if x < (a + 1.0) / (a + b + 2.0) {
        front * beta_cf(x, a, b) / a
    } else {
        1.0 - front * beta_cf(1.0 - x, b, a) / b
    }
}

fn beta_cf(x: f64, a: f64, b: f64) -> f64 {
    const MAX_ITER: usize = 300;
    const TINY: f64 = 1e-300;
    let mut c = 1.0;
    let mut d = 1.0 - (a + b) * x / (a + 1.0);
    if d.abs() < TINY {
        d = TINY;
    }
    d = 1.0 / d;
    let mut h = d;
    for m in 1..=MAX_ITER {
        let m_f = m as f64;
        // even step
        let numerator = m_f * (b - m_f) * x / ((a + 2.0 * m_f - 1.0) * (a + 2.0 * m_f));
        d = 1.0 + numerator * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + numerator / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        h *= d * c;
        // odd step
        let numerator =
            -(a + m_f) * (a + b + m_f) * x / ((a + 2.0 * m_f) * (a + 2.0 * m_f + 1.0));
        d = 1.0 + numerator * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + numerator / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        let delta = d * c;
        h *= delta;
        if (delta - 1.0).abs() < 1e-14 {
            break;
        }
    }
    h
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    /// Independent oracle for ln C(n, k): a direct product-of-ratios
    /// log sum, no gamma function involved.
    fn ln_binomial_direct(n: u64, k: u64) -> f64 {
        let k = k.min(n - k);
        (1..=k)
            .map(|j| (((n - k + j) as f64) / j as f64).ln())
            .sum()
    }

    #[test]
    fn ln_gamma_matches_factorials() {
        let mut factorial = 1.0f64;
        for n in 1..=20u64 {
            factorial *= n as f64;
            let rel = (ln_gamma(n as f64 + 1.0) - factorial.ln()).abs() / factorial.ln().max(1.0);
            assert!(rel < 1e-12, "n={n}");
        }
    }

    #[test]
    fn ln_binomial_matches_direct_route() {
        for &(n, k) in &[(10u64, 3u64), (100, 50), (4500, 50), (1_000_000, 500)] {
            let a = ln_binomial(n, k);
            let b = ln_binomial_direct(n, k);
            assert!((a - b).abs() / b.abs() < 1e-10, "({n},{k}): {a} vs {b}");
        }
    }

    #[test]
    fn epsilon_common_zero_support() {
        // d = 0: the binomial term is 1, so eps = 1 - beta^(1/N)
        let report = epsilon_common(100, 0, 0.01).unwrap();
        let expected = 1.0 - 0.01f64.powf(1.0 / 100.0);
        assert!((report.value - expected).abs() < 1e-14);
        assert!(!report.trivial);
    }

    #[test]
    fn epsilon_common_trivial_flag() {
        let report = epsilon_common(10, 10, 0.1).unwrap();
        assert_eq!(report.value, 1.0);
        assert!(report.trivial);
    }

    #[test]
    fn epsilon_common_paper_configuration() {
        // high-precision oracle via the direct binomial route
        let n = 4500u64;
        let d = 50u64;
        let beta = 1e-5f64;
        let expected = 1.0
            - f64::exp((beta.ln() - ln_binomial_direct(n, d)) / (n - d) as f64);
        let report = epsilon_common(n, d, beta).unwrap();
        assert!((report.value - expected).abs() < 1e-9);
        assert!(report.value > 0.0 && report.value < 1.0);
    }

    #[test]
    fn epsilon_common_beta_to_one_limit() {
        // beta -> 1: eps -> 1 - (1/C(N,d))^(1/(N-d))
        let n = 200u64;
        let d = 5u64;
        let limit = 1.0 - f64::exp(-ln_binomial(n, d) / (n - d) as f64);
        let report = epsilon_common(n, d, 1.0 - 1e-12).unwrap();
        assert!((report.value - limit).abs() < 1e-9);
    }

    #[test]
    fn epsilon_improved_degree_one_closed_form() {
        // d = 1: the tail is (1-e)^N = beta, so e = 1 - beta^(1/N)
        let report = epsilon_common_improved(500, 1, 1e-4).unwrap();
        let expected = 1.0 - 1e-4f64.powf(1.0 / 500.0);
        assert!((report.value - expected).abs() < 1e-12);
        assert!(report.root_residual.unwrap() <= 1e-12);
    }

    #[test]
    fn epsilon_improved_tightens_the_explicit_bound() {
        let explicit = epsilon_common(4500, 50, 1e-5).unwrap();
        let improved = epsilon_common_improved(4500, 50, 1e-5).unwrap();
        assert!(improved.value <= explicit.value);
        assert!(improved.root_residual.unwrap() <= 1e-12);
    }

    #[test]
    fn epsilon_i_k_zero_allocation() {
        // k = 0: C(N,0) = 1, so eps = 1 - (beta_i/(d+1))^(1/N)
        let v = epsilon_i_k(4500, 1e-6, 50, 0).unwrap();
        let expected = 1.0 - (1e-6f64 / 51.0).powf(1.0 / 4500.0);
        assert!((v - expected).abs() < 1e-12);
    }

    #[test]
    fn epsilon_i_k_monotone_in_allocation() {
        let mut prev = -1.0;
        for k in 0..=50u64 {
            let v = epsilon_i_k(4500, 1e-5 / 6.0, 50, k).unwrap();
            assert!(v > prev, "k={k}");
            prev = v;
        }
    }

    #[test]
    fn epsilon_i_k_decreasing_in_samples() {
        let mut prev = f64::INFINITY;
        for n in [1_000u64, 2_000, 4_000, 6_000, 8_000, 10_000] {
            let v = epsilon_i_k(n, 1e-5 / 6.0, 50, 8).unwrap();
            assert!(v < prev, "n={n}");
            prev = v;
        }
    }

    #[test]
    fn naive_single_agent_collapses_to_common() {
        let cfg = ScenarioConfig::uniform(1, 800, 1e-4, 20);
        let naive = epsilon_naive(&cfg).unwrap();
        let common = epsilon_common(800, 20, 1e-4).unwrap();
        assert!((naive.value - common.value).abs() < 1e-15);
    }

    #[test]
    fn naive_two_identical_agents_doubles() {
        let cfg = ScenarioConfig::uniform(2, 2_000, 1e-4, 10);
        let report = epsilon_naive(&cfg).unwrap();
        let per = report.per_agent.as_ref().unwrap();
        assert!((per[0] - per[1]).abs() < 1e-15);
        assert!((report.value - 2.0 * per[0]).abs() < 1e-15);
    }

    #[test]
    fn paper_numbers_naive_and_tight() {
        let cfg = ScenarioConfig::uniform(6, 4500, 1e-5, 50);
        let naive = epsilon_naive(&cfg).unwrap();
        assert!(
            (naive.value - 0.37).abs() <= 0.005,
            "naive = {}",
            naive.value
        );
        let tight = epsilon_tight(&cfg).unwrap();
        assert!(
            (tight.value - 0.097).abs() <= 0.005,
            "tight = {}",
            tight.value
        );
        assert!(tight.value < naive.value);
        // even confidence split and equal counts push the allocation to
        // d/m, i.e. 8s and 9s summing to 50
        let allocation = tight.allocation.as_ref().unwrap();
        assert_eq!(allocation.iter().sum::<u64>(), 50);
        for &a in allocation {
            assert!(a == 8 || a == 9, "allocation {allocation:?}");
        }
    }

    #[test]
    fn tight_single_agent_takes_whole_budget() {
        let cfg = ScenarioConfig::uniform(1, 900, 1e-4, 12);
        let tight = epsilon_tight(&cfg).unwrap();
        let direct = epsilon_i_k(900, 1e-4, 12, 12).unwrap();
        assert!((tight.value - direct).abs() < 1e-15);
        assert_eq!(tight.allocation.as_ref().unwrap(), &vec![12]);
    }

    /// Exhaustive enumeration over all allocations with sum <= d.
    fn brute_force_tight(cfg: &ScenarioConfig) -> f64 {
        fn recurse(
            cfg: &ScenarioConfig,
            agent: usize,
            remaining: u64,
            acc: f64,
            best: &mut f64,
        ) {
            if agent == cfg.num_agents() {
                *best = best.max(acc);
                return;
            }
            for take in 0..=remaining {
                let v = epsilon_i_k(
                    cfg.sample_counts[agent],
                    cfg.confidence_shares[agent],
                    cfg.support_bound,
                    take,
                )
                .unwrap();
                recurse(cfg, agent + 1, remaining - take, acc + v, best);
            }
        }
        let mut best = f64::NEG_INFINITY;
        recurse(cfg, 0, cfg.support_bound, 0.0, &mut best);
        best
    }

    #[test]
    fn tight_matches_brute_force_on_random_configs() {
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        for _ in 0..60 {
            let m = rng.gen_range(1..=4usize);
            let d = rng.gen_range(0..=10u64);
            let beta = 10f64.powf(rng.gen_range(-8.0..-1.0));
            let counts: Vec<u64> = (0..m).map(|_| rng.gen_range(12..4000)).collect();
            let shares: Vec<f64> = {
                let raw: Vec<f64> = (0..m).map(|_| rng.gen_range(0.1..1.0)).collect();
                let total: f64 = raw.iter().sum();
                raw.iter().map(|r| beta * r / total).collect()
            };
            let cfg = ScenarioConfig {
                sample_counts: counts,
                confidence_shares: shares,
                support_bound: d,
            };
            let dp = epsilon_tight(&cfg).unwrap();
            let brute = brute_force_tight(&cfg);
            assert!(
                (dp.value - brute.clamp(0.0, 1.0)).abs() < 1e-12,
                "dp {} vs brute {brute}",
                dp.value
            );
        }
    }

    #[test]
    fn inversion_minimality_contract() {
        let report =
            invert_sample_size(0.05, 1e-5, 10, InversionMode::Common, 100_000_000).unwrap();
        let at = epsilon_common_value(report.samples, 10, 1e-5).0;
        let before = epsilon_common_value(report.samples - 1, 10, 1e-5).0;
        assert!(at <= 0.05);
        assert!(before > 0.05);
    }

    #[test]
    fn inversion_zero_support_closed_form() {
        // d = 0: eps = 1 - beta^(1/N) <= t iff N >= ln beta / ln(1 - t)
        let beta = 1e-6f64;
        let target = 0.01f64;
        let expected = (beta.ln() / (1.0 - target).ln()).ceil() as u64;
        let report =
            invert_sample_size(target, beta, 0, InversionMode::Common, 100_000_000).unwrap();
        assert_eq!(report.samples, expected);
    }

    #[test]
    fn inversion_tight_uniform_paper_consistency() {
        // At the paper's configuration the tight bound evaluates to
        // ~0.1007, so inverting at exactly that level must not need
        // more samples than 4500, and inverting at 0.097 lands close
        // above it.
        let cfg = ScenarioConfig::uniform(6, 4500, 1e-5, 50);
        let at_4500 = epsilon_tight(&cfg).unwrap().value;
        let mode = InversionMode::TightUniform { agents: 6 };
        let loose =
            invert_sample_size(at_4500 + 1e-9, 1e-5, 50, mode, 10_000_000).unwrap();
        assert!(loose.samples <= 4500);
        let strict = invert_sample_size(0.097, 1e-5, 50, mode, 10_000_000).unwrap();
        assert!(
            strict.samples >= 4500 && strict.samples <= 5200,
            "samples = {}",
            strict.samples
        );
        assert!(strict.achieved_epsilon <= 0.097);
    }

    #[test]
    fn unreachable_target_errors() {
        match invert_sample_size(1e-9, 0.5, 5, InversionMode::Common, 4_096) {
            Err(Error::TargetUnreachable { cap }) => assert_eq!(cap, 4_096),
            other => panic!("expected TargetUnreachable, got {other:?}"),
        }
    }

    fn toy_family() -> UncertainConstraintFamily {
        // X_i(delta) = { x in R : x >= delta } for both agents, with a
        // [-10, 10] compactness box; delta ~ Uniform[0, 1]
        let agent = |_i: usize| -> AgentSetMap {
            Box::new(|delta: f64| ConvexSet::Halfspace {
                normal: vec![-1.0].into(),
                offset: -delta,
            })
        };
        UncertainConstraintFamily::new(
            Box::new(|rng: &mut ChaCha8Rng| rng.gen_range(0.0..1.0)),
            vec![agent(0), agent(1)],
            vec![
                Some(ConvexSet::Box {
                    lower: vec![-10.0].into(),
                    upper: vec![10.0].into(),
                }),
                Some(ConvexSet::Box {
                    lower: vec![-10.0].into(),
                    upper: vec![10.0].into(),
                }),
            ],
        )
        .unwrap()
    }

    #[test]
    fn violation_zero_for_deep_interior_point() {
        let family = toy_family();
        let report =
            estimate_violation(&vec![5.0].into(), &family, 4_000, 7).unwrap();
        assert_eq!(report.violations, 0);
        assert_eq!(report.estimate, 0.0);
        assert_eq!(report.interval.0, 0.0);
        // k = 0 upper bound closed form: 1 - (alpha/2)^(1/M)
        let expected_upper = 1.0 - (0.025f64).powf(1.0 / 4_000.0);
        assert!((report.interval.1 - expected_upper).abs() < 1e-6);
    }

    #[test]
    fn violation_one_for_always_infeasible_point() {
        let family = toy_family();
        // -5 violates x >= delta for every delta in [0,1]
        let report = estimate_violation(&vec![-5.0].into(), &family, 2_000, 7).unwrap();
        assert_eq!(report.estimate, 1.0);
        assert_eq!(report.interval.1, 1.0);
    }

    #[test]
    fn violation_estimate_tracks_the_law() {
        let family = toy_family();
        // x = 0.7 violates iff delta > 0.7: probability 0.3
        let report = estimate_violation(&vec![0.7].into(), &family, 50_000, 99).unwrap();
        assert!((report.estimate - 0.3).abs() < 0.01, "{}", report.estimate);
        assert!(report.interval.0 < 0.3 && 0.3 < report.interval.1);
    }

    #[test]
    fn violation_sharding_is_deterministic() {
        let family = toy_family();
        let a = estimate_violation(&vec![0.5].into(), &family, 10_000, 5).unwrap();
        let b = estimate_violation(&vec![0.5].into(), &family, 10_000, 5).unwrap();
        assert_eq!(a.violations, b.violations);
    }

    #[test]
    fn incomplete_beta_known_values() {
        // I_x(1, b) = 1 - (1-x)^b
        for &(x, b) in &[(0.2f64, 3.0f64), (0.5, 7.0), (0.9, 2.0)] {
            let expected = 1.0 - (1.0 - x).powf(b);
            assert!((reg_inc_beta(x, 1.0, b) - expected).abs() < 1e-12);
        }
        // symmetry of Beta(2,2) at its median
        assert!((reg_inc_beta(0.5, 2.0, 2.0) - 0.5).abs() < 1e-12);
    }

    #[test]
    fn scenario_program_construction() {
        let family = toy_family();
        let objectives = vec![
            ObjectiveTerm::Linear {
                gradient: vec![1.0].into(),
            };
            2
        ];
        // zero scenarios: deterministic members only
        let empty = build_scenario_program(
            &objectives,
            &family,
            &[vec![], vec![]],
            1,
            None,
        )
        .unwrap();
        for agent in &empty.agents {
            assert_eq!(agent.constraint.leaves().len(), 1);
        }
        // common-resource mode: both agents share the same draws
        let shared = vec![0.25, 0.5, 0.75];
        let program = build_scenario_program(
            &objectives,
            &family,
            &[shared.clone(), shared.clone()],
            1,
            None,
        )
        .unwrap();
        for agent in &program.agents {
            // box + 3 scenario halfspaces
            assert_eq!(agent.constraint.leaves().len(), 4);
        }
        assert_eq!(
            program.agents[0].constraint.leaves()[1],
            program.agents[1].constraint.leaves()[1]
        );
        // minimizing x over { x >= max(draws) } lands on 0.75
        let solved = crate::consensus::centralized_solve(&program, 1e-9).unwrap();
        assert!((solved[0] - 0.75).abs() < 1e-6);
    }
}
