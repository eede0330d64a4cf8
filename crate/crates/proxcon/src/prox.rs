//! The per-agent local solve: minimize f(x) + ||z - x||^2 / (2c) over a
//! convex compact set X.
//!
//! The inner method splits the problem into its three oracles — the
//! gradient of the smooth part (the quadratic penalty plus any diagonal
//! quadratic/linear objective parts), the proximal step of the L1 part
//! (soft thresholding), and the constraint projection (Dykstra) — and
//! iterates the corresponding three-operator fixed-point scheme with a
//! fixed step 1/(h_max + 1/c). The scheme is deterministic: identical
//! requests produce bit-identical results.
//!
//! With probe points supplied, the result carries a variational
//! optimality certificate: the returned x+ must satisfy
//! `f(x+) - (z - x+).x+ / c <= f(y) - (z - x+).y / c` for every feasible
//! probe y, up to the reported violation.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{ConvexSet, DecisionVector, DykstraState, ObjectiveTerm};

/// Tolerances and budgets for the inner solver.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProxSettings {
    /// Fixed-point residual target.
    pub tol: f64,
    pub max_inner_iters: usize,
    /// Dykstra tolerance for constraint projections.
    pub projection_tol: f64,
}

impl Default for ProxSettings {
    fn default() -> Self {
        Self {
            tol: 1e-8,
            max_inner_iters: 20_000,
            projection_tol: 1e-10,
        }
    }
}

/// One local subproblem. The anchor's length decides how many leading
/// coordinates the quadratic penalty covers: the full dimension for an
/// ordinary solve, or the shared block under a partial-coupling split,
/// in which case the trailing coordinates are the agent's private block
/// and enter only through the objective and the constraint.
#[derive(Clone, Copy)]
pub struct ProxRequest<'a> {
    pub objective: &'a ObjectiveTerm,
    pub constraint: &'a ConvexSet,
    /// z, the mixing output this solve is anchored to.
    pub anchor: &'a DecisionVector,
    /// c > 0, the proximal coefficient.
    pub step: f64,
    /// Inner initial point; defaults to the zero-padded anchor.
    pub warm_start: Option<&'a DecisionVector>,
    /// Feasible points for the variational certificate; `None` skips it.
    pub probes: Option<&'a [DecisionVector]>,
    pub settings: ProxSettings,
}

#[derive(Clone, Debug)]
pub struct ProxResult {
    pub minimizer: DecisionVector,
    pub inner_iterations: usize,
    /// Final fixed-point residual of the inner splitting operator.
    pub fixed_point_residual: f64,
    /// Largest violation of the variational inequality over the probes.
    pub optimality_certificate: Option<f64>,
}

/// Componentwise sign(z_j) * max(|z_j| - theta, 0).
pub fn soft_threshold(z: &[f64], theta: f64) -> Vec<f64> {
    z.iter()
        .map(|&v| v.signum() * (v.abs() - theta).max(0.0))
        .collect()
}

/// Solves `argmin_{x in X} f(x) + ||z - x||^2 / (2c)`.
///
/// On success the minimizer is feasible (it is a projection output) and
/// the fixed-point residual is at most `settings.tol`. Exhausting the
/// iteration budget returns [`Error::ProxNotConverged`] carrying the
/// best iterate.
pub fn local_solve(req: &ProxRequest) -> Result<ProxResult> {
    local_solve_with_state(req, &mut DykstraState::default())
}

/// [`local_solve`] with caller-owned projection state: callers that
/// solve a sequence of nearby subproblems over the same constraint set
/// (the consensus driver, proximal-point chains) keep Dykstra's dual
/// corrections warm across calls.
pub fn local_solve_with_state(
    req: &ProxRequest,
    projections: &mut DykstraState,
) -> Result<ProxResult> {
    let n = req.constraint.dimension();
    let penalized = req.anchor.dim();
    if penalized > n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: penalized,
        });
    }
    if !(req.step > 0.0) {
        return Err(Error::InvalidInput(
            "proximal coefficient must be > 0".into(),
        ));
    }
    if !(req.settings.tol > 0.0) {
        return Err(Error::InvalidInput("inner tolerance must be > 0".into()));
    }
    let objective = req.objective.canonical(n)?;
    let c = req.step;

    let mut w: DecisionVector = match req.warm_start {
        Some(x0) => {
            if x0.dim() != n {
                return Err(Error::DimensionMismatch {
                    expected: n,
                    got: x0.dim(),
                });
            }
            x0.clone()
        }
        None => {
            let mut padded = req.anchor.as_slice().to_vec();
            padded.resize(n, 0.0);
            padded.into()
        }
    };

    // The projection tolerance tracks the splitting residual: loose
    // while far from the fixed point, tightening geometrically to the
    // configured floor as the residual shrinks. Far-field projections
    // onto many-member intersections are the expensive ones, and they
    // do not need more accuracy than the current iterate error.
    let floor = req.settings.projection_tol;
    let proj_tol = |residual: f64| (residual * 1e-2).clamp(floor, 1e-4f64.max(floor));

    let (mut feasible, mut slack) = req
        .constraint
        .project_approx(&w, proj_tol(f64::INFINITY), projections)?;

    // Lipschitz constant of the smooth part and the fixed inner step.
    // The step is capped at a multiple of the local feasible scale of
    // the starting point: the splitting converges to the same minimizer
    // for any positive step below 2/L, but an uncapped step makes the
    // governing sequence travel a distance proportional to c when the
    // L1 threshold and gradient kicks dwarf the feasible region.
    let h_max = objective.curvature.iter().cloned().fold(0.0f64, f64::max);
    let local_scale = 1.0 + feasible.norm() + w.distance_to(&feasible);
    let gamma = (c / (1.0 + c * h_max)).min(local_scale);
    let theta = gamma * objective.l1_weight;
    let mut residual = f64::INFINITY;
    for iteration in 1..=req.settings.max_inner_iters {
        let mut residual_sq = 0.0;
        {
            let w_entries = w.as_mut_slice();
            for j in 0..n {
                let xj = feasible[j];
                let mut grad = objective.curvature[j] * xj + objective.gradient[j];
                if j < penalized {
                    grad += (xj - req.anchor[j]) / c;
                }
                let arg = 2.0 * xj - w_entries[j] - gamma * grad;
                let shifted = arg.signum() * (arg.abs() - theta).max(0.0);
                let delta = shifted - xj;
                residual_sq += delta * delta;
                w_entries[j] += delta;
            }
        }
        residual = residual_sq.sqrt();
        // the certified projection error is the accuracy floor of the
        // splitting; stopping below it would chase projection noise
        if residual <= req.settings.tol.max(2.0 * slack) {
            let certificate = match req.probes {
                Some(probes) => Some(variational_certificate(
                    req.objective,
                    req.anchor,
                    c,
                    &feasible,
                    probes,
                )?),
                None => None,
            };
            return Ok(ProxResult {
                minimizer: feasible,
                inner_iterations: iteration,
                fixed_point_residual: residual.max(slack),
                optimality_certificate: certificate,
            });
        }
        let (next, achieved) = req
            .constraint
            .project_approx(&w, proj_tol(residual), projections)?;
        feasible = next;
        slack = achieved;
    }
    Err(Error::ProxNotConverged {
        iterations: req.settings.max_inner_iters,
        residual,
        best: Box::new(feasible),
    })
}

/// Local solve under a partial-coupling split: the anchor covers the
/// shared block only. Returns the shared and private blocks of the
/// joint minimizer; only the shared block is exposed to mixing.
pub fn local_solve_partial(req: &ProxRequest) -> Result<(DecisionVector, DecisionVector)> {
    let shared_len = req.anchor.dim();
    let result = local_solve(req)?;
    let entries = result.minimizer.into_vec();
    let (shared, private) = entries.split_at(shared_len);
    Ok((shared.to_vec().into(), private.to_vec().into()))
}

/// Max over probes y of
/// `[f(x+) - (z - x+).x+ / c] - [f(y) - (z - x+).y / c]`,
/// the violation of the variational optimality characterization of the
/// exact prox. Inner products run over the penalized block.
pub fn variational_certificate(
    objective: &ObjectiveTerm,
    anchor: &DecisionVector,
    c: f64,
    x_plus: &DecisionVector,
    probes: &[DecisionVector],
) -> Result<f64> {
    let penalized = anchor.dim();
    let dual: Vec<f64> = (0..penalized)
        .map(|j| (anchor[j] - x_plus[j]) / c)
        .collect();
    let pairing =
        |x: &DecisionVector| -> f64 { dual.iter().zip(x.iter()).map(|(d, v)| d * v).sum() };
    let base = objective.evaluate(x_plus)? - pairing(x_plus);
    let mut worst = f64::NEG_INFINITY;
    for y in probes {
        let value = objective.evaluate(y)? - pairing(y);
        worst = worst.max(base - value);
    }
    Ok(worst)
}

/// Deterministic feasible probe points: uniform samples from the set's
/// bounding box projected onto the set.
pub fn feasible_probes(
    constraint: &ConvexSet,
    count: usize,
    seed: u64,
) -> Result<Vec<DecisionVector>> {
    let (lower, upper) = constraint.bounding_box()?;
    let n = constraint.dimension();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut probes = Vec::with_capacity(count);
    for _ in 0..count {
        let draw: Vec<f64> = (0..n)
            .map(|j| {
                if upper[j] > lower[j] {
                    rng.gen_range(lower[j]..upper[j])
                } else {
                    lower[j]
                }
            })
            .collect();
        probes.push(constraint.project(&draw.into(), 1e-10)?);
    }
    Ok(probes)
}
