//! Time-varying communication graphs as schedules of doubly stochastic
//! weight matrices, with validators for the connectivity and weight
//! assumptions and the mixing-product contraction diagnostic.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::DecisionVector;

/// Tolerance on row/column sums for construction-exact matrices.
pub const STOCHASTICITY_TOL: f64 = 1e-12;
/// Looser tolerance for accumulated products of weight matrices.
pub const PRODUCT_STOCHASTICITY_TOL: f64 = 1e-10;

/// An m-by-m mixing matrix. Entry `(i, j)` is the weight agent `i`
/// applies to agent `j`'s iterate, so mixing is `z_i = sum_j a(i,j) x_j`
/// and valid matrices are doubly stochastic with rows as the receiving
/// side.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WeightMatrix {
    m: usize,
    /// Row-major entries.
    entries: Vec<f64>,
}

impl WeightMatrix {
    pub fn new(m: usize, entries: Vec<f64>) -> Result<Self> {
        if entries.len() != m * m {
            return Err(Error::InvalidInput(format!(
                "weight matrix needs {} entries, got {}",
                m * m,
                entries.len()
            )));
        }
        if entries.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("weight entries must be finite".into()));
        }
        Ok(Self { m, entries })
    }

    pub fn identity(m: usize) -> Self {
        let mut entries = vec![0.0; m * m];
        for i in 0..m {
            entries[i * m + i] = 1.0;
        }
        Self { m, entries }
    }

    /// The complete averaging matrix with every entry 1/m.
    pub fn uniform(m: usize) -> Self {
        Self {
            m,
            entries: vec![1.0 / m as f64; m * m],
        }
    }

    pub fn size(&self) -> usize {
        self.m
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries[i * self.m + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.entries[i * self.m..(i + 1) * self.m]
    }

    pub fn entries(&self) -> &[f64] {
        &self.entries
    }

    /// Matrix product `self * other`.
    pub fn multiply(&self, other: &WeightMatrix) -> WeightMatrix {
        assert_eq!(self.m, other.m);
        let m = self.m;
        let mut out = vec![0.0; m * m];
        for i in 0..m {
            for k in 0..m {
                let a = self.entries[i * m + k];
                if a == 0.0 {
                    continue;
                }
                for j in 0..m {
                    out[i * m + j] += a * other.entries[k * m + j];
                }
            }
        }
        WeightMatrix { m, entries: out }
    }

    /// Directed edges (j, i): agent i receives from agent j, i.e. the
    /// weight `(i, j)` is positive. Self-loops included.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for i in 0..self.m {
            for j in 0..self.m {
                if self.get(i, j) > 0.0 {
                    out.push((j, i));
                }
            }
        }
        out
    }

    fn violations_with_tol(&self, eta: f64, tol: f64) -> Vec<WeightViolation> {
        let m = self.m;
        let mut out = Vec::new();
        for i in 0..m {
            for j in 0..m {
                let v = self.get(i, j);
                if v < 0.0 {
                    out.push(WeightViolation::NegativeEntry { row: i, col: j, value: v });
                } else if v > 0.0 && v < eta && i != j {
                    out.push(WeightViolation::EntryBelowEta { row: i, col: j, value: v });
                }
            }
            let diag = self.get(i, i);
            if diag < eta {
                out.push(WeightViolation::DiagonalBelowEta { agent: i, value: diag });
            }
            let row_sum: f64 = self.row(i).iter().sum();
            if (row_sum - 1.0).abs() > tol {
                out.push(WeightViolation::RowSum { row: i, sum: row_sum });
            }
        }
        for j in 0..m {
            let col_sum: f64 = (0..m).map(|i| self.get(i, j)).sum();
            if (col_sum - 1.0).abs() > tol {
                out.push(WeightViolation::ColumnSum { col: j, sum: col_sum });
            }
        }
        out
    }
}

/// A single violated weight condition. Violations are data, not errors.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum WeightViolation {
    NegativeEntry { row: usize, col: usize, value: f64 },
    EntryBelowEta { row: usize, col: usize, value: f64 },
    DiagonalBelowEta { agent: usize, value: f64 },
    RowSum { row: usize, sum: f64 },
    ColumnSum { col: usize, sum: f64 },
}

impl fmt::Display for WeightViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            WeightViolation::NegativeEntry { row, col, value } => {
                write!(f, "entry ({row},{col}) is negative: {value}")
            }
            WeightViolation::EntryBelowEta { row, col, value } => {
                write!(f, "nonzero entry ({row},{col}) = {value} is below eta")
            }
            WeightViolation::DiagonalBelowEta { agent, value } => {
                write!(f, "diagonal entry of agent {agent} = {value} is below eta")
            }
            WeightViolation::RowSum { row, sum } => {
                write!(f, "row {row} sums to {sum}, expected 1")
            }
            WeightViolation::ColumnSum { col, sum } => {
                write!(f, "column {col} sums to {sum}, expected 1")
            }
        }
    }
}

/// Checks a single matrix against the weight assumptions: nonnegative,
/// doubly stochastic within `1e-12`, diagonal at least `eta`, every
/// nonzero entry at least `eta`. Returns the empty list when all hold.
pub fn validate_weights(a: &WeightMatrix, eta: f64) -> Vec<WeightViolation> {
    a.violations_with_tol(eta, STOCHASTICITY_TOL)
}

/// The built-in schedule families. All shipped schedules are periodic.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScheduleKind {
    /// The constant complete averaging matrix with entries 1/m.
    CompleteUniform,
    /// Disjoint adjacent pairs on a ring exchange with weights 1/2 each,
    /// alternating between the even and odd pairings each step.
    RingAlternatingPairs,
    /// A user-provided finite list of matrices repeated forever.
    ExplicitPeriodic(Vec<WeightMatrix>),
}

/// A time-varying network: a map from the iteration index to a doubly
/// stochastic weight matrix, plus the metadata (eta, T) under which the
/// schedule satisfies the weight and connectivity assumptions.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NetworkSchedule {
    kind: ScheduleKind,
    m: usize,
    /// Uniform lower bound on nonzero and diagonal weights.
    eta: f64,
    /// Intercommunication bound: every recurring edge reappears within
    /// this many iterations.
    t_bound: usize,
    period: usize,
}

impl NetworkSchedule {
    /// The weight matrix used at iteration `k`.
    pub fn matrix(&self, k: usize) -> WeightMatrix {
        match &self.kind {
            ScheduleKind::CompleteUniform => WeightMatrix::uniform(self.m),
            ScheduleKind::RingAlternatingPairs => ring_phase_matrix(self.m, k % 2),
            ScheduleKind::ExplicitPeriodic(mats) => mats[k % mats.len()].clone(),
        }
    }

    pub fn num_agents(&self) -> usize {
        self.m
    }

    pub fn eta(&self) -> f64 {
        self.eta
    }

    pub fn intercommunication_bound(&self) -> usize {
        self.t_bound
    }

    pub fn period(&self) -> usize {
        self.period
    }

    pub fn kind(&self) -> &ScheduleKind {
        &self.kind
    }

    /// The constant 1/m complete-graph schedule.
    pub fn complete_uniform(m: usize) -> Result<Self> {
        if m < 1 {
            return Err(Error::InvalidInput("need at least one agent".into()));
        }
        Ok(Self {
            kind: ScheduleKind::CompleteUniform,
            m,
            eta: 1.0 / m as f64,
            t_bound: 1,
            period: 1,
        })
    }

    /// The ring of alternating communicating pairs. Even steps pair
    /// (0,1), (2,3), ...; odd steps rotate the pairing by one. Pairs mix
    /// with weight 1/2 each, so eta = 1/2 and every ring edge recurs
    /// within T = 2 steps.
    pub fn ring_alternating_pairs(m: usize) -> Result<Self> {
        if m < 2 || m % 2 != 0 {
            return Err(Error::InvalidInput(
                "ring_alternating_pairs needs an even number of agents >= 2".into(),
            ));
        }
        Ok(Self {
            kind: ScheduleKind::RingAlternatingPairs,
            m,
            eta: 0.5,
            t_bound: 2,
            period: 2,
        })
    }

    /// A periodic schedule from explicit matrices. Each matrix must be
    /// doubly stochastic with a strictly positive diagonal; eta is the
    /// smallest nonzero weight observed and T defaults to the period.
    pub fn explicit_periodic(matrices: Vec<WeightMatrix>) -> Result<Self> {
        if matrices.is_empty() {
            return Err(Error::InvalidInput("explicit schedule has no matrices".into()));
        }
        let m = matrices[0].size();
        let mut eta = f64::INFINITY;
        for (k, mat) in matrices.iter().enumerate() {
            if mat.size() != m {
                return Err(Error::InvalidInput(format!(
                    "matrix {k} has size {} but expected {m}",
                    mat.size()
                )));
            }
            for i in 0..m {
                for j in 0..m {
                    let v = mat.get(i, j);
                    if v > 0.0 {
                        eta = eta.min(v);
                    }
                }
            }
            let violations = mat.violations_with_tol(f64::MIN_POSITIVE, STOCHASTICITY_TOL);
            if !violations.is_empty() {
                return Err(Error::ValidationFailed(
                    violations
                        .iter()
                        .map(|v| format!("matrix {k}: {v}"))
                        .collect(),
                ));
            }
        }
        let period = matrices.len();
        Ok(Self {
            kind: ScheduleKind::ExplicitPeriodic(matrices),
            m,
            eta,
            t_bound: period,
            period,
        })
    }
}

fn ring_phase_matrix(m: usize, phase: usize) -> WeightMatrix {
    let mut entries = vec![0.0; m * m];
    let mut paired = vec![false; m];
    let mut idx = phase % 2;
    for _ in 0..m / 2 {
        let i = idx % m;
        let j = (idx + 1) % m;
        entries[i * m + i] = 0.5;
        entries[i * m + j] = 0.5;
        entries[j * m + j] = 0.5;
        entries[j * m + i] = 0.5;
        paired[i] = true;
        paired[j] = true;
        idx += 2;
    }
    for i in 0..m {
        if !paired[i] {
            entries[i * m + i] = 1.0;
        }
    }
    WeightMatrix { m, entries }
}

/// What the connectivity validator learned about a schedule over its
/// observation horizon.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ConnectivityReport {
    pub strongly_connected: bool,
    /// Diameter of the recurring-edge graph; `None` when not strongly
    /// connected.
    pub diameter: Option<usize>,
    /// Largest observed gap between consecutive activations of a
    /// recurring edge.
    pub max_recurrence_gap: usize,
    pub violations: Vec<String>,
}

/// Approximates the recurring edge set over a finite horizon (exact for
/// periodic schedules), checks strong connectivity by reachability, and
/// reports the graph diameter and the largest recurrence gap. A gap
/// exceeding the schedule's intercommunication bound is flagged.
///
/// The horizon is raised internally to at least two periods.
pub fn validate_connectivity(schedule: &NetworkSchedule, horizon: usize) -> ConnectivityReport {
    let m = schedule.num_agents();
    let horizon = horizon
        .max(2 * schedule.period())
        .max(schedule.intercommunication_bound() + 1)
        .max(2);

    // occurrence times per directed edge (j, i), self-loops excluded
    let mut occurrences: BTreeMap<(usize, usize), Vec<usize>> = BTreeMap::new();
    for k in 0..horizon {
        for (j, i) in schedule.matrix(k).edges() {
            if j != i {
                occurrences.entry((j, i)).or_default().push(k);
            }
        }
    }

    // Recurring edges: for periodic schedules every edge seen in one
    // period recurs; in general require at least two occurrences.
    let period = schedule.period();
    let recurring: Vec<(usize, usize)> = occurrences
        .iter()
        .filter(|(_, times)| period > 0 || times.len() >= 2)
        .map(|(e, _)| *e)
        .collect();

    let mut max_gap = 0usize;
    for edge in &recurring {
        let times = &occurrences[edge];
        // for a periodic schedule the occurrence pattern repeats with the
        // period, so the wrap-around gap is covered by scanning two periods
        let mut prev = times[0];
        let mut gap = times[0] + 1; // first activation counts from k = 0
        for &t in &times[1..] {
            gap = gap.max(t - prev);
            prev = t;
        }
        max_gap = max_gap.max(gap);
    }

    let mut adj = vec![vec![false; m]; m];
    for &(j, i) in &recurring {
        adj[j][i] = true;
    }

    let (strongly_connected, diameter) = digraph_diameter(&adj);

    let mut violations = Vec::new();
    if !strongly_connected {
        violations.push("recurring-edge graph is not strongly connected".to_string());
    }
    if max_gap > schedule.intercommunication_bound() {
        violations.push(format!(
            "recurrence gap {max_gap} exceeds the intercommunication bound {}",
            schedule.intercommunication_bound()
        ));
    }

    ConnectivityReport {
        strongly_connected,
        diameter: if strongly_connected { Some(diameter) } else { None },
        max_recurrence_gap: max_gap,
        violations,
    }
}

/// BFS all-pairs shortest paths on the directed graph; returns whether
/// it is strongly connected and its diameter (0 for a single node).
fn digraph_diameter(adj: &[Vec<bool>]) -> (bool, usize) {
    let m = adj.len();
    let mut diameter = 0usize;
    for src in 0..m {
        let mut dist = vec![usize::MAX; m];
        dist[src] = 0;
        let mut queue = std::collections::VecDeque::from([src]);
        while let Some(u) = queue.pop_front() {
            for v in 0..m {
                if adj[u][v] && dist[v] == usize::MAX {
                    dist[v] = dist[u] + 1;
                    queue.push_back(v);
                }
            }
        }
        for &d in &dist {
            if d == usize::MAX {
                return (false, 0);
            }
            diameter = diameter.max(d);
        }
    }
    (true, diameter)
}

/// The ordered product of the schedule's matrices from step `s` through
/// step `k`: the state-propagation operator whose entry `(i, j)` is the
/// total influence of agent `j`'s state at step `s` on agent `i`'s mixed
/// state after step `k`. Doubly stochastic whenever the factors are.
pub fn phi_product(schedule: &NetworkSchedule, k: usize, s: usize) -> Result<WeightMatrix> {
    if k < s {
        return Err(Error::InvalidInput(format!(
            "phi_product needs k >= s, got k={k}, s={s}"
        )));
    }
    let mut product = schedule.matrix(s);
    for step in s + 1..=k {
        product = schedule.matrix(step).multiply(&product);
    }
    Ok(product)
}

/// The geometric contraction envelope of mixing products for a schedule
/// with m agents, weight floor eta and intercommunication bound T:
/// every entry of the product over steps s..k is within
/// `lambda * q^(k-s)` of 1/m, where
///
/// ```text
/// lambda = 2 (1 + eta^{-(m-1)T}) / (1 - eta^{(m-1)T})
/// q      = (1 - eta^{(m-1)T})^{1 / ((m-1)T)}
/// ```
pub fn contraction_bound(m: usize, eta: f64, t_bound: usize) -> Result<(f64, f64)> {
    if m < 2 {
        return Err(Error::InvalidInput("contraction bound needs m >= 2".into()));
    }
    if !(eta > 0.0 && eta < 1.0) {
        return Err(Error::InvalidInput(format!(
            "contraction bound needs eta in (0,1), got {eta}"
        )));
    }
    if t_bound < 1 {
        return Err(Error::InvalidInput("contraction bound needs T >= 1".into()));
    }
    let exponent = ((m - 1) * t_bound) as f64;
    let ln_pow = exponent * eta.ln();
    // 1 - eta^exponent, accurate when the power is tiny
    let one_minus = -f64::exp_m1(ln_pow);
    let lambda = 2.0 * (1.0 + (-ln_pow).exp()) / one_minus;
    // q = (1 - eta^exponent)^(1/exponent), kept strictly below one even
    // when the closed form rounds to 1.0 in f64
    let q = ((-ln_pow.exp()).ln_1p() / exponent)
        .exp()
        .min(1.0 - f64::EPSILON);
    Ok((lambda, q))
}

/// Mean preservation: column sums of A * X equal column sums of X for a
/// doubly stochastic A. Exposed for diagnostics; the consensus driver
/// checks it every iteration.
pub fn mixing_preserves_mean(a: &WeightMatrix, states: &[DecisionVector], tol: f64) -> bool {
    let m = states.len();
    if m == 0 {
        return true;
    }
    let n = states[0].dim();
    let mut before = vec![0.0; n];
    for x in states {
        for (acc, &v) in before.iter_mut().zip(x.iter()) {
            *acc += v;
        }
    }
    // after = sum_i z_i with z_i = sum_j a(i,j) x_j
    let mut after = vec![0.0; n];
    for i in 0..m {
        for j in 0..m {
            let w = a.get(i, j);
            if w != 0.0 {
                for (acc, &v) in after.iter_mut().zip(states[j].iter()) {
                    *acc += w * v;
                }
            }
        }
    }
    before
        .iter()
        .zip(after.iter())
        .all(|(b, a)| (b - a).abs() <= tol)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn identity_passes_weight_checks() {
        let a = WeightMatrix::identity(3);
        assert!(validate_weights(&a, 0.5).is_empty());
    }

    #[test]
    fn uniform_at_eta_boundary() {
        let a = WeightMatrix::uniform(4);
        assert!(validate_weights(&a, 0.25).is_empty());
    }

    #[test]
    fn deficient_column_flags_violation() {
        // hand-built counterexample: column 0 sums to 0.9
        let a = WeightMatrix::new(
            2,
            vec![
                0.5, 0.5, //
                0.4, 0.6,
            ],
        )
        .unwrap();
        let violations = validate_weights(&a, 0.1);
        assert!(violations
            .iter()
            .any(|v| matches!(v, WeightViolation::ColumnSum { col: 0, .. })));
    }

    #[test]
    fn complete_uniform_schedule() {
        let s = NetworkSchedule::complete_uniform(3).unwrap();
        for k in [0, 1, 17] {
            let a = s.matrix(k);
            for i in 0..3 {
                for j in 0..3 {
                    assert!((a.get(i, j) - 1.0 / 3.0).abs() < 1e-15);
                }
            }
        }
        let report = validate_connectivity(&s, 4);
        assert!(report.strongly_connected);
        assert_eq!(report.diameter, Some(1));
        assert!(report.violations.is_empty());
    }

    #[test]
    fn ring_alternating_pairs_structure() {
        let s = NetworkSchedule::ring_alternating_pairs(6).unwrap();
        let even = s.matrix(0);
        // pairs (0,1), (2,3), (4,5) mix with 1/2
        assert_eq!(even.get(0, 1), 0.5);
        assert_eq!(even.get(1, 0), 0.5);
        assert_eq!(even.get(2, 3), 0.5);
        assert_eq!(even.get(4, 5), 0.5);
        assert_eq!(even.get(1, 2), 0.0);
        let odd = s.matrix(1);
        // pairs (1,2), (3,4), (5,0)
        assert_eq!(odd.get(1, 2), 0.5);
        assert_eq!(odd.get(3, 4), 0.5);
        assert_eq!(odd.get(5, 0), 0.5);
        assert_eq!(odd.get(0, 1), 0.0);
        for k in 0..4 {
            assert!(validate_weights(&s.matrix(k), 0.5).is_empty());
        }
        let report = validate_connectivity(&s, 8);
        assert!(report.strongly_connected);
        assert!(report.max_recurrence_gap <= 2);
        assert!(report.violations.is_empty());
        assert_eq!(report.diameter, Some(3));
    }

    #[test]
    fn odd_ring_rejected() {
        assert!(NetworkSchedule::ring_alternating_pairs(5).is_err());
    }

    #[test]
    fn identity_schedule_fails_connectivity() {
        let s = NetworkSchedule::explicit_periodic(vec![WeightMatrix::identity(3)]).unwrap();
        let report = validate_connectivity(&s, 10);
        assert!(!report.strongly_connected);
        assert!(!report.violations.is_empty());
    }

    #[test]
    fn starved_agent_detected() {
        // agent 2 never receives from anyone: row 2 = e_2 in every matrix,
        // and nothing maps into it except itself
        let a = WeightMatrix::new(
            3,
            vec![
                0.5, 0.5, 0.0, //
                0.5, 0.5, 0.0, //
                0.0, 0.0, 1.0,
            ],
        )
        .unwrap();
        let s = NetworkSchedule::explicit_periodic(vec![a]).unwrap();
        let report = validate_connectivity(&s, 10);
        assert!(!report.strongly_connected);
    }

    #[test]
    fn phi_product_single_factor() {
        let s = NetworkSchedule::ring_alternating_pairs(6).unwrap();
        let phi = phi_product(&s, 3, 3).unwrap();
        assert_eq!(phi, s.matrix(3));
        assert!(phi_product(&s, 2, 3).is_err());
    }

    #[test]
    fn phi_product_identity_and_uniform() {
        let id = NetworkSchedule::explicit_periodic(vec![WeightMatrix::identity(4)]).unwrap();
        let phi = phi_product(&id, 9, 2).unwrap();
        assert_eq!(phi, WeightMatrix::identity(4));

        // the averaging matrix is idempotent
        let uni = NetworkSchedule::complete_uniform(4).unwrap();
        let phi = phi_product(&uni, 7, 0).unwrap();
        let direct = WeightMatrix::uniform(4).multiply(&WeightMatrix::uniform(4));
        for (a, b) in phi.entries().iter().zip(direct.entries()) {
            assert!((a - b).abs() < 1e-14);
            assert!((a - 0.25).abs() < 1e-14);
        }
    }

    #[test]
    fn phi_products_stay_doubly_stochastic() {
        let s = NetworkSchedule::ring_alternating_pairs(6).unwrap();
        for s0 in 0..3 {
            for k in s0..s0 + 20 {
                let phi = phi_product(&s, k, s0).unwrap();
                assert!(phi
                    .violations_with_tol(f64::MIN_POSITIVE, PRODUCT_STOCHASTICITY_TOL)
                    .is_empty());
            }
        }
    }

    #[test]
    fn contraction_bound_closed_form() {
        // hand evaluation: m=2, eta=0.5, T=1 -> lambda = 2(1+2)/(1-0.5) = 12, q = 0.5
        let (lambda, q) = contraction_bound(2, 0.5, 1).unwrap();
        assert!((lambda - 12.0).abs() < 1e-12);
        assert!((q - 0.5).abs() < 1e-12);
    }

    #[test]
    fn contraction_q_in_unit_interval() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..200 {
            let m = rng.gen_range(2..8);
            let eta = rng.gen_range(0.01..0.99);
            let t = rng.gen_range(1..5);
            let (lambda, q) = contraction_bound(m, eta, t).unwrap();
            assert!(q > 0.0 && q < 1.0, "q = {q}");
            assert!(lambda > 0.0);
        }
        assert!(contraction_bound(1, 0.5, 1).is_err());
        assert!(contraction_bound(2, 1.0, 1).is_err());
    }

    #[test]
    fn ring_schedule_satisfies_contraction_bound() {
        // brute-force product check against lambda q^{k-s}
        let s = NetworkSchedule::ring_alternating_pairs(6).unwrap();
        let (lambda, q) = contraction_bound(6, s.eta(), s.intercommunication_bound()).unwrap();
        let m = 6.0;
        for s0 in 0..2 {
            let mut phi = s.matrix(s0);
            for k in s0..=s0 + 50 {
                if k > s0 {
                    phi = s.matrix(k).multiply(&phi);
                }
                let bound = lambda * q.powi((k - s0) as i32);
                for &e in phi.entries() {
                    assert!(
                        (e - 1.0 / m).abs() <= bound + 1e-12,
                        "entry {e} at lag {} exceeds bound {bound}",
                        k - s0
                    );
                }
            }
        }
    }

    #[test]
    fn mean_preserved_under_mixing() {
        let s = NetworkSchedule::ring_alternating_pairs(6).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let states: Vec<DecisionVector> = (0..6)
            .map(|_| {
                vec![rng.gen_range(-5.0..5.0), rng.gen_range(-5.0..5.0)].into()
            })
            .collect();
        for k in 0..4 {
            assert!(mixing_preserves_mean(&s.matrix(k), &states, 1e-10));
        }
    }
}
