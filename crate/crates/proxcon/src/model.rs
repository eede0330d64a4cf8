//! Domain types: decision vectors, convex constraint sets with exact
//! membership/projection/distance, and convex (possibly nonsmooth)
//! objective terms.
//!
//! Constraint sets form a closed algebra of four primitives. The three
//! leaf variants have closed-form Euclidean projections; intersections
//! are projected with Dykstra's alternating-projection scheme, which
//! converges to the exact Euclidean projection onto the intersection.
//! All types are immutable after construction and safe to share across
//! threads; every operation is a pure function.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Hard cap on Dykstra cycles before giving up.
const DYKSTRA_MAX_CYCLES: usize = 50_000;
/// Cycles per stagnation window of the empty-intersection guard.
const DYKSTRA_STALL_WINDOW: usize = 2_000;
/// Cycles without certificate improvement before settling for the best
/// certified point.
const DYKSTRA_BEST_STALL: usize = 600;

/// A point x in R^n. Entries are finite by construction.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct DecisionVector(Vec<f64>);

impl DecisionVector {
    pub fn new(entries: Vec<f64>) -> Result<Self> {
        if entries.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput(
                "decision vector entries must be finite".into(),
            ));
        }
        Ok(Self(entries))
    }

    pub fn zeros(n: usize) -> Self {
        Self(vec![0.0; n])
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub(crate) fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.0
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }

    pub fn dot(&self, other: &Self) -> f64 {
        debug_assert_eq!(self.dim(), other.dim());
        self.0.iter().zip(&other.0).map(|(a, b)| a * b).sum()
    }

    pub fn norm(&self) -> f64 {
        self.dot(self).sqrt()
    }

    pub fn distance_to(&self, other: &Self) -> f64 {
        debug_assert_eq!(self.dim(), other.dim());
        self.0
            .iter()
            .zip(&other.0)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt()
    }

    /// self += alpha * other
    pub fn add_scaled(&mut self, alpha: f64, other: &Self) {
        debug_assert_eq!(self.dim(), other.dim());
        for (a, b) in self.0.iter_mut().zip(&other.0) {
            *a += alpha * b;
        }
    }

    pub fn sub(&self, other: &Self) -> Self {
        debug_assert_eq!(self.dim(), other.dim());
        Self(self.0.iter().zip(&other.0).map(|(a, b)| a - b).collect())
    }

    /// Euclidean norm of the leading `len` coordinates.
    pub fn prefix_norm(&self, len: usize) -> f64 {
        self.0[..len].iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// Distance restricted to the leading `len` coordinates.
    pub fn prefix_distance_to(&self, other: &Self, len: usize) -> f64 {
        self.0[..len]
            .iter()
            .zip(&other.0[..len])
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt()
    }
}

impl From<Vec<f64>> for DecisionVector {
    fn from(entries: Vec<f64>) -> Self {
        debug_assert!(entries.iter().all(|v| v.is_finite()));
        Self(entries)
    }
}

impl std::ops::Deref for DecisionVector {
    type Target = [f64];

    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl std::ops::Index<usize> for DecisionVector {
    type Output = f64;

    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

/// A convex subset of R^n.
///
/// `Box`, `Halfspace` (a.x <= b) and `Ball` have exact closed-form
/// projections and distances. `Intersection` is handled by Dykstra's
/// algorithm over the flattened list of primitive members.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConvexSet {
    Box {
        lower: DecisionVector,
        upper: DecisionVector,
    },
    Halfspace {
        normal: DecisionVector,
        offset: f64,
    },
    Ball {
        center: DecisionVector,
        radius: f64,
    },
    Intersection(Vec<ConvexSet>),
}

impl ConvexSet {
    pub fn dimension(&self) -> usize {
        match self {
            ConvexSet::Box { lower, .. } => lower.dim(),
            ConvexSet::Halfspace { normal, .. } => normal.dim(),
            ConvexSet::Ball { center, .. } => center.dim(),
            ConvexSet::Intersection(members) => {
                members.first().map(|m| m.dimension()).unwrap_or(0)
            }
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            ConvexSet::Box { lower, upper } => {
                if lower.dim() != upper.dim() {
                    return Err(Error::DimensionMismatch {
                        expected: lower.dim(),
                        got: upper.dim(),
                    });
                }
                if lower.iter().zip(upper.iter()).any(|(l, u)| l > u) {
                    return Err(Error::InvalidInput(
                        "box lower bound exceeds upper bound".into(),
                    ));
                }
            }
            ConvexSet::Halfspace { normal, offset } => {
                if normal.norm() == 0.0 {
                    return Err(Error::InvalidInput("halfspace normal is zero".into()));
                }
                if !offset.is_finite() {
                    return Err(Error::InvalidInput("halfspace offset must be finite".into()));
                }
            }
            ConvexSet::Ball { radius, .. } => {
                if !(*radius >= 0.0) {
                    return Err(Error::InvalidInput("ball radius must be >= 0".into()));
                }
            }
            ConvexSet::Intersection(members) => {
                if members.is_empty() {
                    return Err(Error::InvalidInput("intersection has no members".into()));
                }
                let n = members[0].dimension();
                for m in members {
                    m.validate()?;
                    if m.dimension() != n {
                        return Err(Error::DimensionMismatch {
                            expected: n,
                            got: m.dimension(),
                        });
                    }
                }
            }
        }
        Ok(())
    }

    /// Structural compactness check: the set is bounded when it contains
    /// at least one Box or Ball member.
    pub fn is_bounded(&self) -> bool {
        match self {
            ConvexSet::Box { .. } | ConvexSet::Ball { .. } => true,
            ConvexSet::Halfspace { .. } => false,
            ConvexSet::Intersection(members) => members.iter().any(|m| m.is_bounded()),
        }
    }

    /// Flattens nested intersections into a list of primitive leaves.
    pub fn leaves(&self) -> Vec<&ConvexSet> {
        let mut out = Vec::new();
        self.collect_leaves(&mut out);
        out
    }

    fn collect_leaves<'a>(&'a self, out: &mut Vec<&'a ConvexSet>) {
        match self {
            ConvexSet::Intersection(members) => {
                for m in members {
                    m.collect_leaves(out);
                }
            }
            leaf => out.push(leaf),
        }
    }

    /// Exact distance for primitive sets; `None` for intersections.
    fn primitive_distance(&self, z: &DecisionVector) -> Option<f64> {
        match self {
            ConvexSet::Box { lower, upper } => {
                let d2: f64 = z
                    .iter()
                    .zip(lower.iter().zip(upper.iter()))
                    .map(|(&v, (&l, &u))| {
                        let c = v.clamp(l, u);
                        (v - c) * (v - c)
                    })
                    .sum();
                Some(d2.sqrt())
            }
            ConvexSet::Halfspace { normal, offset } => {
                let excess = normal.dot(z) - offset;
                if excess <= 0.0 {
                    Some(0.0)
                } else {
                    Some(excess / normal.norm())
                }
            }
            ConvexSet::Ball { center, radius } => {
                let d2: f64 = z
                    .iter()
                    .zip(center.iter())
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum();
                if d2 <= radius * radius {
                    Some(0.0)
                } else {
                    Some(d2.sqrt() - radius)
                }
            }
            ConvexSet::Intersection(_) => None,
        }
    }

    /// Exact violation test for primitives, cheaper than computing the
    /// distance (no square roots).
    fn primitive_violated(&self, x: &DecisionVector) -> bool {
        match self {
            ConvexSet::Box { lower, upper } => x
                .iter()
                .zip(lower.iter().zip(upper.iter()))
                .any(|(&v, (&l, &u))| v < l || v > u),
            ConvexSet::Halfspace { normal, offset } => normal.dot(x) > *offset,
            ConvexSet::Ball { center, radius } => {
                let d2: f64 = x
                    .iter()
                    .zip(center.iter())
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum();
                d2 > radius * radius
            }
            ConvexSet::Intersection(_) => unreachable!("not a primitive"),
        }
    }

    /// Complementarity defect of a Dykstra correction at `x`: the sum
    /// of multiplier-times-slack products of the correction's implied
    /// dual variables. Zero exactly when the correction is supported on
    /// active faces, and `||x - P(z)||^2 <= 2 * total defect` for
    /// feasible x by QP weak duality.
    fn complementarity_defect(&self, x: &DecisionVector, corr: &DecisionVector) -> f64 {
        match self {
            ConvexSet::Box { lower, upper } => corr
                .iter()
                .zip(x.iter())
                .zip(lower.iter().zip(upper.iter()))
                .map(|((&c, &v), (&l, &u))| {
                    if c > 0.0 {
                        c * (u - v).max(0.0)
                    } else {
                        -c * (v - l).max(0.0)
                    }
                })
                .sum(),
            ConvexSet::Halfspace { normal, offset } => {
                let mu = (corr.dot(normal) / normal.dot(normal)).max(0.0);
                mu * (offset - normal.dot(x)).max(0.0)
            }
            ConvexSet::Ball { center, radius } => {
                let dist = x.distance_to(center);
                corr.norm() * (radius - dist).max(0.0)
            }
            ConvexSet::Intersection(_) => unreachable!("not a primitive"),
        }
    }

    /// Projection of a Dykstra correction onto the normal cone of the
    /// set at `x` (with an activity slack): the part of the correction
    /// a true projection is allowed to keep.
    fn normal_component(&self, x: &DecisionVector, corr: &DecisionVector, activity: f64) -> DecisionVector {
        match self {
            ConvexSet::Box { lower, upper } => corr
                .iter()
                .zip(x.iter())
                .zip(lower.iter().zip(upper.iter()))
                .map(|((&c, &v), (&l, &u))| {
                    if c > 0.0 && v >= u - activity {
                        c
                    } else if c < 0.0 && v <= l + activity {
                        c
                    } else {
                        0.0
                    }
                })
                .collect::<Vec<_>>()
                .into(),
            ConvexSet::Halfspace { normal, offset } => {
                let slack = offset - normal.dot(x);
                if slack <= activity * normal.norm() {
                    let t = (corr.dot(normal) / normal.dot(normal)).max(0.0);
                    let mut out = DecisionVector::zeros(x.dim());
                    out.add_scaled(t, normal);
                    out
                } else {
                    DecisionVector::zeros(x.dim())
                }
            }
            ConvexSet::Ball { center, radius } => {
                if *radius == 0.0 {
                    return corr.clone();
                }
                let mut dir = x.clone();
                dir.add_scaled(-1.0, center);
                let dist = dir.norm();
                if dist + activity >= *radius && dist > 0.0 {
                    let t = (corr.dot(&dir) / (dist * dist)).max(0.0);
                    let mut out = DecisionVector::zeros(x.dim());
                    out.add_scaled(t, &dir);
                    out
                } else {
                    DecisionVector::zeros(x.dim())
                }
            }
            ConvexSet::Intersection(_) => unreachable!("not a primitive"),
        }
    }

    fn project_primitive(&self, z: &DecisionVector) -> DecisionVector {
        match self {
            ConvexSet::Box { lower, upper } => z
                .iter()
                .zip(lower.iter().zip(upper.iter()))
                .map(|(&v, (&l, &u))| v.clamp(l, u))
                .collect::<Vec<_>>()
                .into(),
            ConvexSet::Halfspace { normal, offset } => {
                let excess = normal.dot(z) - offset;
                if excess <= 0.0 {
                    z.clone()
                } else {
                    let mut out = z.clone();
                    out.add_scaled(-excess / normal.dot(normal), normal);
                    out
                }
            }
            ConvexSet::Ball { center, radius } => {
                let dist = z.distance_to(center);
                if dist <= *radius {
                    z.clone()
                } else {
                    let mut out = center.clone();
                    let scale = radius / dist;
                    for (o, (&zi, &ci)) in
                        out.0.iter_mut().zip(z.iter().zip(center.iter()))
                    {
                        *o = ci + scale * (zi - ci);
                    }
                    out
                }
            }
            ConvexSet::Intersection(_) => unreachable!("not a primitive"),
        }
    }

    /// Membership test: distance to the set is at most `tol`. Exact for
    /// primitives; for intersections this checks every member within
    /// `tol`, which coincides with the distance criterion at `tol = 0`.
    pub fn contains(&self, x: &DecisionVector, tol: f64) -> Result<bool> {
        self.check_dim(x)?;
        if tol < 0.0 {
            return Err(Error::InvalidInput("tolerance must be >= 0".into()));
        }
        match self {
            ConvexSet::Intersection(_) => {
                for leaf in self.leaves() {
                    if leaf.primitive_distance(x).expect("leaf is primitive") > tol {
                        return Ok(false);
                    }
                }
                Ok(true)
            }
            prim => Ok(prim.primitive_distance(x).expect("primitive") <= tol),
        }
    }

    /// Euclidean projection of `z` onto the set. Closed form for
    /// primitives; Dykstra's alternating projections for intersections,
    /// run until the correction-based error certificate drops below
    /// `tol`.
    pub fn project(&self, z: &DecisionVector, tol: f64) -> Result<DecisionVector> {
        self.project_with_state(z, tol, &mut DykstraState::default())
    }

    /// Projection that carries Dykstra's dual corrections across calls.
    /// For polyhedral intersections the corrections are the dual
    /// variables of the projection QP, so re-using them warm-starts the
    /// next projection; a hot loop projecting nearby points repeatedly
    /// converges in a handful of cycles instead of hundreds. The state
    /// is ignored (cold start) when any member is non-polyhedral.
    pub fn project_with_state(
        &self,
        z: &DecisionVector,
        tol: f64,
        state: &mut DykstraState,
    ) -> Result<DecisionVector> {
        let (point, achieved) = self.project_approx(z, tol, state)?;
        if achieved > tol.max(1e-14) {
            return Err(Error::ProjectionNotConverged {
                cycles: DYKSTRA_MAX_CYCLES,
                residual: achieved,
            });
        }
        Ok(point)
    }

    /// Best-effort projection: returns the projected point together
    /// with its certified error bound. The bound is at most `tol` when
    /// the geometry allows it within the cycle budget; for degenerate
    /// intersections (near-parallel members splitting one multiplier)
    /// the bound honestly reports the accuracy floor reached instead of
    /// failing.
    pub(crate) fn project_approx(
        &self,
        z: &DecisionVector,
        tol: f64,
        state: &mut DykstraState,
    ) -> Result<(DecisionVector, f64)> {
        self.check_dim(z)?;
        match self {
            ConvexSet::Intersection(_) => {
                if tol <= 0.0 {
                    return Err(Error::InvalidInput(
                        "intersection projection needs tol > 0".into(),
                    ));
                }
                dykstra(&self.leaves(), z, tol, state)
            }
            prim => Ok((prim.project_primitive(z), 0.0)),
        }
    }

    /// dist(z, X) = ||z - P_X(z)||. For intersections the distance is
    /// computed through the best projection available within the cycle
    /// budget; its error is bounded by the projection's certificate, so
    /// the reported value can exceed `tol` in accuracy only on
    /// degenerate geometry.
    pub fn distance(&self, z: &DecisionVector, tol: f64) -> Result<f64> {
        match self {
            ConvexSet::Intersection(_) => {
                let (p, _achieved) = self.project_approx(z, tol, &mut DykstraState::default())?;
                Ok(z.distance_to(&p))
            }
            prim => {
                self.check_dim(z)?;
                Ok(prim.primitive_distance(z).expect("primitive"))
            }
        }
    }

    /// Tightest axis-aligned box known to contain the set, derived from
    /// its bounded members. Errors when the set has no bounded member.
    pub fn bounding_box(&self) -> Result<(DecisionVector, DecisionVector)> {
        let n = self.dimension();
        let mut lower = vec![f64::NEG_INFINITY; n];
        let mut upper = vec![f64::INFINITY; n];
        for leaf in self.leaves() {
            match leaf {
                ConvexSet::Box { lower: l, upper: u } => {
                    for i in 0..n {
                        lower[i] = lower[i].max(l[i]);
                        upper[i] = upper[i].min(u[i]);
                    }
                }
                ConvexSet::Ball { center, radius } => {
                    for i in 0..n {
                        lower[i] = lower[i].max(center[i] - radius);
                        upper[i] = upper[i].min(center[i] + radius);
                    }
                }
                _ => {}
            }
        }
        if lower.iter().any(|v| !v.is_finite()) || upper.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput(
                "set has no bounded member; bounding box undefined".into(),
            ));
        }
        Ok((lower.into(), upper.into()))
    }

    fn check_dim(&self, x: &DecisionVector) -> Result<()> {
        let n = self.dimension();
        if x.dim() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: x.dim(),
            });
        }
        Ok(())
    }
}

/// Dykstra's alternating projections onto an intersection of primitives.
///
/// Members whose correction is zero and which already contain the point
/// are skipped; for those the projection is the identity and the
/// correction stays zero, so skipping is exact. A residual that stops
/// shrinking while the iterate is still far from feasibility signals an
/// empty intersection.
/// Reusable dual corrections for warm-started projections onto the
/// same intersection.
#[derive(Clone, Debug, Default)]
pub struct DykstraState {
    corrections: Vec<Option<DecisionVector>>,
}

/// Dykstra maintains z = x + sum_j c_j exactly. If x is feasible and
/// every correction lies in its member's normal cone at x, then x IS
/// the projection of z. Projecting the corrections onto those cones
/// yields a point z_hat whose exact projection is x, and by
/// nonexpansiveness `||x - P(z)|| <= ||z - z_hat||`, which is the
/// computable certificate this loop stops on (plus a feasibility term
/// for the slack in x itself).
fn dykstra(
    leaves: &[&ConvexSet],
    z: &DecisionVector,
    tol: f64,
    state: &mut DykstraState,
) -> Result<(DecisionVector, f64)> {
    let polyhedral = leaves
        .iter()
        .all(|l| matches!(l, ConvexSet::Box { .. } | ConvexSet::Halfspace { .. }));
    if !polyhedral || state.corrections.len() != leaves.len() {
        state.corrections.clear();
        state.corrections.resize(leaves.len(), None);
    }
    let corrections = &mut state.corrections;
    // the invariant z = x + sum_j c_j holds from the start
    let mut x = z.clone();
    for corr in corrections.iter().flatten() {
        x.add_scaled(-1.0, corr);
    }
    // Sweep order is reshuffled (deterministically) every cycle: cyclic
    // sweeps propagate corrections poorly between near-parallel
    // members, while shuffled sweeps break those chains.
    let mut order: Vec<u32> = (0..leaves.len() as u32).collect();
    let mut order_rng = ChaCha8Rng::seed_from_u64(0x00d1_ce0f_d1ce_0fu64);
    let mut settled = 0usize;
    let mut window_feas = f64::INFINITY;
    let mut window_min = f64::INFINITY;
    let mut best_certificate = f64::INFINITY;
    let mut best_point: Option<DecisionVector> = None;
    let mut since_best = 0usize;
    let mut certificate_runs = 0usize;
    let max_violation = |x: &DecisionVector| {
        leaves
            .iter()
            .map(|l| l.primitive_distance(x).expect("primitive"))
            .fold(0.0f64, f64::max)
    };

    for cycle in 0..DYKSTRA_MAX_CYCLES {
        if cycle > 0 {
            for i in (1..order.len()).rev() {
                let j = order_rng.gen_range(0..=i);
                order.swap(i, j);
            }
        }
        for &idx in &order {
            let leaf = leaves[idx as usize];
            let corr = &mut corrections[idx as usize];
            match corr {
                None => {
                    if leaf.primitive_violated(&x) {
                        let projected = leaf.project_primitive(&x);
                        let mut c = x.clone();
                        c.add_scaled(-1.0, &projected);
                        *corr = Some(c);
                        x = projected;
                    }
                }
                Some(c) => {
                    let mut y = x.clone();
                    y.add_scaled(1.0, c);
                    let projected = leaf.project_primitive(&y);
                    let mut new_c = y;
                    new_c.add_scaled(-1.0, &projected);
                    x = projected;
                    if new_c.norm() == 0.0 {
                        *corr = None;
                    } else {
                        *corr = Some(new_c);
                    }
                }
            }
        }
        let feas = max_violation(&x);
        if feas <= tol.max(1e-3 * (1.0 + x.norm())) {
            // two error bounds: the normal-cone defect of the
            // corrections, and the complementarity (duality-gap) route,
            // which stays sharp when near-parallel members split one
            // multiplier between them
            let activity = (4.0 * feas).max(1e-9 * (1.0 + x.norm()));
            let mut gap = DecisionVector::zeros(x.dim());
            let mut defect = 0.0;
            for (leaf, corr) in leaves.iter().zip(corrections.iter()) {
                if let Some(c) = corr {
                    let kept = leaf.normal_component(&x, c, activity);
                    gap.add_scaled(1.0, c);
                    gap.add_scaled(-1.0, &kept);
                    defect += leaf.complementarity_defect(&x, c);
                }
            }
            certificate_runs += 1;
            let certificate = gap.norm().min((2.0 * defect.max(0.0)).sqrt()) + 10.0 * feas;
            if certificate < best_certificate {
                if certificate <= tol.max(1e-14) {
                    return Ok((x, certificate));
                }
                since_best = 0;
                best_certificate = certificate;
                best_point = Some(x.clone());
            }
        }
        // The certificate has stopped improving although refinement is
        // well underway: degenerate duals cap the reachable accuracy,
        // so hand back the best point early.
        since_best += 1;
        if since_best >= DYKSTRA_BEST_STALL && certificate_runs >= 50 && best_point.is_some() {
            return Ok((best_point.expect("checked"), best_certificate));
        }
        // Empty-intersection guard: no feasible point has ever been
        // certified and the windowed violation minimum stops improving
        // while staying above the numerical scale. A slowly creeping
        // but improving residual keeps going.
        window_min = window_min.min(feas);
        settled += 1;
        if settled % DYKSTRA_STALL_WINDOW == 0 {
            let gap_floor = (1e-5 * (1.0 + x.norm())).max(10.0 * tol.max(1e-14));
            if best_point.is_none() && window_min > gap_floor && window_min > 0.99 * window_feas {
                corrections.clear();
                return Err(Error::EmptyIntersection {
                    residual: window_min,
                });
            }
            window_feas = window_min;
            window_min = f64::INFINITY;
        }
    }
    // Budget exhausted: hand back the best certified point seen. Its
    // feasibility is at most a tenth of the certificate by
    // construction.
    match best_point {
        Some(point) => Ok((point, best_certificate)),
        None => {
            let feas = max_violation(&x);
            corrections.clear();
            Err(Error::ProjectionNotConverged {
                cycles: DYKSTRA_MAX_CYCLES,
                residual: feas,
            })
        }
    }
}

/// A convex objective term, closed under summation.
///
/// `QuadraticDiagonal` is f(x) = 1/2 sum_j h_j x_j^2 + g.x with h >= 0,
/// `Linear` is g.x, and `L1` is weight * ||x||_1.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ObjectiveTerm {
    Linear {
        gradient: DecisionVector,
    },
    QuadraticDiagonal {
        curvature: DecisionVector,
        gradient: DecisionVector,
    },
    L1 {
        weight: f64,
    },
    Sum(Vec<ObjectiveTerm>),
}

impl ObjectiveTerm {
    pub fn zero() -> Self {
        ObjectiveTerm::Sum(Vec::new())
    }

    pub fn validate(&self, n: usize) -> Result<()> {
        match self {
            ObjectiveTerm::Linear { gradient } => {
                if gradient.dim() != n {
                    return Err(Error::DimensionMismatch {
                        expected: n,
                        got: gradient.dim(),
                    });
                }
            }
            ObjectiveTerm::QuadraticDiagonal { curvature, gradient } => {
                if curvature.dim() != n || gradient.dim() != n {
                    return Err(Error::DimensionMismatch {
                        expected: n,
                        got: curvature.dim().max(gradient.dim()),
                    });
                }
                if curvature.iter().any(|&h| h < 0.0) {
                    return Err(Error::InvalidInput(
                        "quadratic curvature must be >= 0 for convexity".into(),
                    ));
                }
            }
            ObjectiveTerm::L1 { weight } => {
                if !(*weight >= 0.0) {
                    return Err(Error::InvalidInput("L1 weight must be >= 0".into()));
                }
            }
            ObjectiveTerm::Sum(terms) => {
                for t in terms {
                    t.validate(n)?;
                }
            }
        }
        Ok(())
    }

    /// f(x). `Sum` evaluates as the sum of its members.
    pub fn evaluate(&self, x: &DecisionVector) -> Result<f64> {
        match self {
            ObjectiveTerm::Linear { gradient } => {
                check_dims(gradient.dim(), x.dim())?;
                Ok(gradient.dot(x))
            }
            ObjectiveTerm::QuadraticDiagonal { curvature, gradient } => {
                check_dims(curvature.dim(), x.dim())?;
                check_dims(gradient.dim(), x.dim())?;
                let quad: f64 = curvature
                    .iter()
                    .zip(x.iter())
                    .map(|(&h, &v)| 0.5 * h * v * v)
                    .sum();
                Ok(quad + gradient.dot(x))
            }
            ObjectiveTerm::L1 { weight } => {
                Ok(weight * x.iter().map(|v| v.abs()).sum::<f64>())
            }
            ObjectiveTerm::Sum(terms) => {
                let mut total = 0.0;
                for t in terms {
                    total += t.evaluate(x)?;
                }
                Ok(total)
            }
        }
    }

    /// An element of the subdifferential at `x`. For the L1 term the
    /// coordinate subgradient at 0 is 0 (the minimum-norm element).
    pub fn subgradient(&self, x: &DecisionVector) -> Result<DecisionVector> {
        match self {
            ObjectiveTerm::Linear { gradient } => {
                check_dims(gradient.dim(), x.dim())?;
                Ok(gradient.clone())
            }
            ObjectiveTerm::QuadraticDiagonal { curvature, gradient } => {
                check_dims(curvature.dim(), x.dim())?;
                check_dims(gradient.dim(), x.dim())?;
                Ok(curvature
                    .iter()
                    .zip(x.iter())
                    .zip(gradient.iter())
                    .map(|((&h, &v), &g)| h * v + g)
                    .collect::<Vec<_>>()
                    .into())
            }
            ObjectiveTerm::L1 { weight } => Ok(x
                .iter()
                .map(|&v| weight * sign0(v))
                .collect::<Vec<_>>()
                .into()),
            ObjectiveTerm::Sum(terms) => {
                let mut total = DecisionVector::zeros(x.dim());
                for t in terms {
                    let g = t.subgradient(x)?;
                    total.add_scaled(1.0, &g);
                }
                Ok(total)
            }
        }
    }

    /// Splits the term into its smooth diagonal-quadratic/linear part and
    /// the total L1 weight. The smooth part is 1/2 sum h_j x_j^2 + g.x.
    pub fn canonical(&self, n: usize) -> Result<CanonicalObjective> {
        let mut out = CanonicalObjective {
            curvature: vec![0.0; n],
            gradient: vec![0.0; n],
            l1_weight: 0.0,
        };
        self.accumulate(n, &mut out)?;
        Ok(out)
    }

    fn accumulate(&self, n: usize, out: &mut CanonicalObjective) -> Result<()> {
        match self {
            ObjectiveTerm::Linear { gradient } => {
                check_dims(gradient.dim(), n)?;
                for (o, &g) in out.gradient.iter_mut().zip(gradient.iter()) {
                    *o += g;
                }
            }
            ObjectiveTerm::QuadraticDiagonal { curvature, gradient } => {
                check_dims(curvature.dim(), n)?;
                check_dims(gradient.dim(), n)?;
                for (o, &h) in out.curvature.iter_mut().zip(curvature.iter()) {
                    *o += h;
                }
                for (o, &g) in out.gradient.iter_mut().zip(gradient.iter()) {
                    *o += g;
                }
            }
            ObjectiveTerm::L1 { weight } => out.l1_weight += weight,
            ObjectiveTerm::Sum(terms) => {
                for t in terms {
                    t.accumulate(n, out)?;
                }
            }
        }
        Ok(())
    }
}

/// Normal form of an objective: smooth part 1/2 h.x^2 + g.x plus an L1
/// penalty with a single pooled weight.
#[derive(Clone, Debug)]
pub struct CanonicalObjective {
    pub curvature: Vec<f64>,
    pub gradient: Vec<f64>,
    pub l1_weight: f64,
}

fn sign0(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

fn check_dims(expected: usize, got: usize) -> Result<()> {
    if expected != got {
        return Err(Error::DimensionMismatch { expected, got });
    }
    Ok(())
}

/// One agent of the multi-agent problem: a convex objective over a
/// compact convex constraint set, with an optional feasible starting
/// point and an optional consensus split.
///
/// When `shared_len` is set, only coordinates `[0, shared_len)` are
/// exchanged and averaged by the network; the remaining coordinates are
/// the agent's private block.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AgentSpec {
    pub objective: ObjectiveTerm,
    pub constraint: ConvexSet,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial: Option<DecisionVector>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub shared_len: Option<usize>,
}

/// A ball of radius `radius` around `center` contained in the common
/// feasible set; required by the feasible-average construction.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InteriorPoint {
    pub center: DecisionVector,
    pub radius: f64,
}

/// The full problem: m agents over a shared decision space R^n,
/// minimizing the sum of agent objectives over the intersection of the
/// agent constraint sets.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProblemSpec {
    pub dimension: usize,
    pub agents: Vec<AgentSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub interior: Option<InteriorPoint>,
}

impl ProblemSpec {
    pub fn num_agents(&self) -> usize {
        self.agents.len()
    }

    /// Width of the consensus block (the full dimension when no agent
    /// declares a split).
    pub fn shared_len(&self) -> usize {
        self.agents
            .first()
            .and_then(|a| a.shared_len)
            .unwrap_or(self.dimension)
    }

    pub fn validate(&self) -> Result<()> {
        if self.agents.is_empty() {
            return Err(Error::InvalidInput("problem has no agents".into()));
        }
        let n = self.dimension;
        let split = self.agents[0].shared_len;
        for (i, agent) in self.agents.iter().enumerate() {
            agent.constraint.validate()?;
            agent.objective.validate(n)?;
            if agent.constraint.dimension() != n {
                return Err(Error::DimensionMismatch {
                    expected: n,
                    got: agent.constraint.dimension(),
                });
            }
            if !agent.constraint.is_bounded() {
                return Err(Error::InvalidInput(format!(
                    "agent {i}: constraint set has no bounded member (compactness required)"
                )));
            }
            if agent.shared_len != split {
                return Err(Error::InvalidInput(
                    "agents disagree on the shared/private split".into(),
                ));
            }
            if let Some(s) = agent.shared_len {
                if s == 0 || s > n {
                    return Err(Error::InvalidInput(format!(
                        "agent {i}: shared_len {s} out of range 1..={n}"
                    )));
                }
            }
            if let Some(x0) = &agent.initial {
                if x0.dim() != n {
                    return Err(Error::DimensionMismatch {
                        expected: n,
                        got: x0.dim(),
                    });
                }
                if !agent.constraint.contains(x0, 1e-7)? {
                    return Err(Error::InvalidInput(format!(
                        "agent {i}: initial point is not feasible"
                    )));
                }
            }
        }
        if let Some(interior) = &self.interior {
            self.probe_interior(interior)?;
        }
        Ok(())
    }

    /// Probes the interior ball on sampled directions: the axis
    /// directions plus 32 seeded random unit vectors.
    fn probe_interior(&self, interior: &InteriorPoint) -> Result<()> {
        let n = self.dimension;
        if interior.center.dim() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: interior.center.dim(),
            });
        }
        if !(interior.radius > 0.0) {
            return Err(Error::InvalidInput("interior radius must be > 0".into()));
        }
        let mut dirs: Vec<Vec<f64>> = Vec::new();
        for i in 0..n {
            let mut d = vec![0.0; n];
            d[i] = 1.0;
            dirs.push(d.clone());
            d[i] = -1.0;
            dirs.push(d);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(0x5ca1ab1e);
        for _ in 0..32 {
            let d: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let norm = d.iter().map(|v| v * v).sum::<f64>().sqrt();
            if norm > 1e-9 {
                dirs.push(d.iter().map(|v| v / norm).collect());
            }
        }
        for d in &dirs {
            let mut probe = interior.center.clone();
            probe.add_scaled(interior.radius, &d.clone().into());
            for (i, agent) in self.agents.iter().enumerate() {
                if !agent.constraint.contains(&probe, 1e-9)? {
                    return Err(Error::InvalidInput(format!(
                        "interior ball leaves agent {i}'s constraint set"
                    )));
                }
            }
        }
        Ok(())
    }

    /// The pooled single-agent problem: f = sum f_i over the
    /// intersection of all agent sets.
    pub fn pooled(&self) -> (ObjectiveTerm, ConvexSet) {
        let objective =
            ObjectiveTerm::Sum(self.agents.iter().map(|a| a.objective.clone()).collect());
        let constraint =
            ConvexSet::Intersection(self.agents.iter().map(|a| a.constraint.clone()).collect());
        (objective, constraint)
    }
}
