//! The planner's mixed-integer quadratic program: tracking objective,
//! Euler-dynamics chaining, state bounds, terminal hover, and one-polyhedron-
//! per-step membership.
//!
//! The integer part is a per-step categorical choice (which polyhedron holds
//! `p_k`), searched by branch-and-bound: a node fixes a subset of steps and
//! solves the convex relaxation with membership rows only on the fixed
//! steps, which is a valid lower bound. Indicator constraints are realized
//! structurally (rows exist only on fixed branches), so there is no big-M
//! arithmetic anywhere. An exhaustive-enumeration oracle solves every
//! assignment through the full-space QP for cross-checking.

use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corridor::TemporalSafeCorridor;
use crate::dynamics::{check_with_tol, step, AgentState, JerkInput, Limits};
use crate::linalg::Mat;
use crate::qp::{solve_qp_warm, QpOutcome, QpProblem};
use crate::real::{real, Real};
use crate::vec3::Vec3;

#[derive(Debug, Error, PartialEq)]
pub enum MpcError {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("assignment space too large: {0} exceeds the enumeration guard")]
    TooManyAssignments(usize),
    #[error("numerical failure in QP subsolver: {0}")]
    Numerical(String),
}

/// Diagonal objective weights: per-state error, per-input, terminal.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Weights<T> {
    pub r_x: [T; 9],
    pub r_u: [T; 3],
    pub r_n: [T; 9],
}

impl<T: Real> Default for Weights<T> {
    /// Benchmark weights: position tracking 5, terminal position 50, input
    /// 0.005; velocity/acceleration channels unweighted.
    fn default() -> Self {
        let z = T::zero();
        let five: T = real(5.0);
        let fifty: T = real(50.0);
        let ru: T = real(0.005);
        Self {
            r_x: [five, five, five, z, z, z, z, z, z],
            r_u: [ru, ru, ru],
            r_n: [fifty, fifty, fifty, z, z, z, z, z, z],
        }
    }
}

/// One MIQP instance: initial state, references for steps `0..=N`, a safe
/// corridor per step `1..=N`, bounds, weights and discretization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MpcProblem<T> {
    pub x0: AgentState<T>,
    pub refs: Vec<AgentState<T>>,
    pub tsc: TemporalSafeCorridor<T>,
    pub limits: Limits<T>,
    pub weights: Weights<T>,
    pub h: T,
    pub n: usize,
}

impl<T: Real> MpcProblem<T> {
    fn validate(&self) -> Result<(), MpcError> {
        if self.refs.len() != self.n + 1 {
            return Err(MpcError::DimensionMismatch(format!(
                "expected {} references, got {}",
                self.n + 1,
                self.refs.len()
            )));
        }
        if self.tsc.corridors.len() != self.n {
            return Err(MpcError::DimensionMismatch(format!(
                "expected {} corridors, got {}",
                self.n,
                self.tsc.corridors.len()
            )));
        }
        if self.tsc.corridors.iter().any(|c| c.polyhedra.is_empty()) {
            return Err(MpcError::DimensionMismatch("empty corridor".into()));
        }
        let nonneg = |w: &[T]| w.iter().all(|v| *v >= T::zero());
        if !nonneg(&self.weights.r_x) || !nonneg(&self.weights.r_u) || !nonneg(&self.weights.r_n)
        {
            return Err(MpcError::DimensionMismatch("negative weight".into()));
        }
        if !(self.h > T::zero()) || self.n == 0 {
            return Err(MpcError::DimensionMismatch("need h > 0 and N >= 1".into()));
        }
        Ok(())
    }

    /// The tracking objective evaluated on a candidate trajectory.
    pub fn objective_value(&self, states: &[AgentState<T>], inputs: &[JerkInput<T>]) -> T {
        let mut total = T::zero();
        for k in 0..self.n {
            let dx = diff9(&states[k], &self.refs[k]);
            for c in 0..9 {
                total += self.weights.r_x[c] * dx[c] * dx[c];
            }
            let j = inputs[k].j;
            for c in 0..3 {
                total += self.weights.r_u[c] * j[c] * j[c];
            }
        }
        let dx = diff9(&states[self.n], &self.refs[self.n]);
        for c in 0..9 {
            total += self.weights.r_n[c] * dx[c] * dx[c];
        }
        total
    }
}

fn diff9<T: Real>(a: &AgentState<T>, b: &AgentState<T>) -> [T; 9] {
    let av = a.to_array();
    let bv = b.to_array();
    let mut out = [T::zero(); 9];
    for c in 0..9 {
        out[c] = av[c] - bv[c];
    }
    out
}

/// One polyhedron index per step `1..=N`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Assignment {
    pub chosen: Vec<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum MpcStatus {
    Optimal,
    Infeasible,
    Timeout,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SolveStats {
    pub nodes: usize,
    pub qp_iterations: usize,
    pub wall_time_ms: f64,
    /// Count of child relaxations that came in below their parent bound
    /// (beyond rounding); stays zero when the bounding logic is sound.
    pub bound_violations: usize,
    /// Nodes whose relaxation hit a numerical failure. Internal nodes are
    /// branched without a bound update; failed leaves are dropped, which
    /// can cost optimality on pathological instances (tracked, never
    /// silent).
    pub numerical_failures: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MpcSolution<T> {
    pub states: Vec<AgentState<T>>,
    pub inputs: Vec<JerkInput<T>>,
    pub assignment: Assignment,
    pub objective: T,
    pub status: MpcStatus,
    pub stats: SolveStats,
}

impl<T: Real> MpcSolution<T> {
    fn unsolved(status: MpcStatus, stats: SolveStats) -> Self {
        Self {
            states: vec![],
            inputs: vec![],
            assignment: Assignment { chosen: vec![] },
            objective: T::infinity(),
            status,
            stats,
        }
    }
}

const STATE_DIM: usize = 9;
const INPUT_DIM: usize = 3;

/// Euler transition matrix of the drag model.
fn a_matrix<T: Real>(h: T, d_lin: Vec3<T>) -> Mat<T> {
    let mut a = Mat::zeros(STATE_DIM, STATE_DIM);
    for i in 0..3 {
        a[(i, i)] = T::one();
        a[(i, 3 + i)] = h;
        a[(3 + i, 3 + i)] = T::one() - h * d_lin[i];
        a[(3 + i, 6 + i)] = h;
        a[(6 + i, 6 + i)] = T::one();
    }
    a
}

fn b_matrix<T: Real>(h: T) -> Mat<T> {
    let mut b = Mat::zeros(STATE_DIM, INPUT_DIM);
    for i in 0..3 {
        b[(6 + i, i)] = h;
    }
    b
}

fn accel_bounds<T: Real>(limits: &Limits<T>) -> ([T; 3], [T; 3]) {
    (
        [-limits.a_x_max, -limits.a_y_max, limits.a_z_min],
        [limits.a_x_max, limits.a_y_max, limits.a_z_max],
    )
}

/// Builds the convex QP for a fixed polyhedron assignment, in the full
/// variable space `x_1..x_N, u_0..u_{N-1}` with explicit dynamics equality
/// rows. This is the enumeration oracle's route.
pub fn build_qp<T: Real>(
    problem: &MpcProblem<T>,
    assignment: &Assignment,
) -> Result<QpProblem<T>, MpcError> {
    problem.validate()?;
    let n = problem.n;
    if assignment.chosen.len() != n {
        return Err(MpcError::DimensionMismatch(format!(
            "assignment length {} != N = {n}",
            assignment.chosen.len()
        )));
    }
    for (k, &p) in assignment.chosen.iter().enumerate() {
        if p >= problem.tsc.corridors[k].polyhedra.len() {
            return Err(MpcError::DimensionMismatch(format!(
                "step {} chose polyhedron {p} of {}",
                k + 1,
                problem.tsc.corridors[k].polyhedra.len()
            )));
        }
    }
    let nv = (STATE_DIM + INPUT_DIM) * n;
    let x_var = |k: usize, c: usize| (k - 1) * STATE_DIM + c; // k in 1..=N
    let u_var = |k: usize, c: usize| STATE_DIM * n + k * INPUT_DIM + c; // k in 0..N

    // objective
    let mut p_mat = Mat::zeros(nv, nv);
    let mut q = vec![T::zero(); nv];
    let two: T = real(2.0);
    for k in 1..=n {
        let w = if k == n { &problem.weights.r_n } else { &problem.weights.r_x };
        let r = problem.refs[k].to_array();
        for c in 0..STATE_DIM {
            let i = x_var(k, c);
            p_mat[(i, i)] = two * w[c];
            q[i] = -two * w[c] * r[c];
        }
    }
    for k in 0..n {
        for c in 0..INPUT_DIM {
            let i = u_var(k, c);
            p_mat[(i, i)] = two * problem.weights.r_u[c];
        }
    }

    let a_d = a_matrix(problem.h, problem.limits.d_lin);
    let b_d = b_matrix(problem.h);
    let a_x0 = a_d.mul_vec(&problem.x0.to_array());

    let membership_rows: usize = assignment
        .chosen
        .iter()
        .enumerate()
        .map(|(k, &p)| problem.tsc.corridors[k].polyhedra[p].halfspaces.len())
        .sum();
    let m = STATE_DIM * n + 3 + 3 * n + INPUT_DIM * n + membership_rows;
    let mut a = Mat::zeros(m, nv);
    let mut l = vec![T::zero(); m];
    let mut u = vec![T::zero(); m];
    let mut row = 0usize;

    // dynamics: x_{k+1} - A x_k - B u_k = (k == 0 ? A x0 : 0)
    for k in 0..n {
        for c in 0..STATE_DIM {
            a[(row, x_var(k + 1, c))] = T::one();
            if k >= 1 {
                for j in 0..STATE_DIM {
                    let v = a_d[(c, j)];
                    if v != T::zero() {
                        a[(row, x_var(k, j))] = -v;
                    }
                }
            }
            for j in 0..INPUT_DIM {
                let v = b_d[(c, j)];
                if v != T::zero() {
                    a[(row, u_var(k, j))] = -v;
                }
            }
            let rhs = if k == 0 { a_x0[c] } else { T::zero() };
            l[row] = rhs;
            u[row] = rhs;
            row += 1;
        }
    }
    // terminal velocity
    for c in 0..3 {
        a[(row, x_var(n, 3 + c))] = T::one();
        l[row] = T::zero();
        u[row] = T::zero();
        row += 1;
    }
    // acceleration bounds on x_1..x_N
    let (a_lo, a_hi) = accel_bounds(&problem.limits);
    for k in 1..=n {
        for c in 0..3 {
            a[(row, x_var(k, 6 + c))] = T::one();
            l[row] = a_lo[c];
            u[row] = a_hi[c];
            row += 1;
        }
    }
    // jerk bounds on u_0..u_{N-1}
    let j_max = [problem.limits.j_x_max, problem.limits.j_y_max, problem.limits.j_z_max];
    for k in 0..n {
        for c in 0..3 {
            a[(row, u_var(k, c))] = T::one();
            l[row] = -j_max[c];
            u[row] = j_max[c];
            row += 1;
        }
    }
    // polyhedron membership on p_k
    for (k0, &p) in assignment.chosen.iter().enumerate() {
        let poly = &problem.tsc.corridors[k0].polyhedra[p];
        for hs in &poly.halfspaces {
            for c in 0..3 {
                a[(row, x_var(k0 + 1, c))] = hs.normal[c];
            }
            l[row] = T::neg_infinity();
            u[row] = hs.offset;
            row += 1;
        }
    }
    debug_assert_eq!(row, m);
    Ok(QpProblem { p: p_mat, q, a, l, u })
}

/// Splits a full-space QP solution vector into states (prepending `x0`) and
/// inputs.
fn split_full_solution<T: Real>(problem: &MpcProblem<T>, x: &[T]) -> (Vec<AgentState<T>>, Vec<JerkInput<T>>) {
    let n = problem.n;
    let mut states = Vec::with_capacity(n + 1);
    states.push(problem.x0);
    for k in 0..n {
        let mut arr = [T::zero(); 9];
        arr.copy_from_slice(&x[k * STATE_DIM..(k + 1) * STATE_DIM]);
        states.push(AgentState::from_array(arr));
    }
    let base = STATE_DIM * n;
    let inputs = (0..n)
        .map(|k| {
            JerkInput::new(Vec3::new(
                x[base + k * INPUT_DIM],
                x[base + k * INPUT_DIM + 1],
                x[base + k * INPUT_DIM + 2],
            ))
        })
        .collect();
    (states, inputs)
}

/// Guard on the enumeration oracle's assignment space.
pub const ENUMERATION_GUARD: usize = 10_000;

const QP_TOL: f64 = 1e-8;

/// Solves every assignment in lexicographic order through the full-space QP
/// and returns the best feasible solution (earliest wins ties).
pub fn enumerate_oracle<T: Real>(problem: &MpcProblem<T>) -> Result<MpcSolution<T>, MpcError> {
    problem.validate()?;
    let started = Instant::now();
    let n = problem.n;
    let sizes: Vec<usize> = problem.tsc.corridors.iter().map(|c| c.polyhedra.len()).collect();
    let total: usize = sizes.iter().product();
    if total > ENUMERATION_GUARD {
        return Err(MpcError::TooManyAssignments(total));
    }
    let mut best: Option<MpcSolution<T>> = None;
    let mut stats = SolveStats::default();
    let mut chosen = vec![0usize; n];
    loop {
        let assignment = Assignment { chosen: chosen.clone() };
        let qp = build_qp(problem, &assignment)?;
        stats.nodes += 1;
        match solve_qp_warm(&qp, real(QP_TOL), None) {
            Ok(QpOutcome::Solved(sol)) => {
                stats.qp_iterations += sol.iterations;
                let (states, inputs) = split_full_solution(problem, &sol.x);
                let objective = problem.objective_value(&states, &inputs);
                let better = best.as_ref().map_or(true, |b| objective < b.objective);
                if better {
                    best = Some(MpcSolution {
                        states,
                        inputs,
                        assignment,
                        objective,
                        status: MpcStatus::Optimal,
                        stats: SolveStats::default(),
                    });
                }
            }
            Ok(QpOutcome::Infeasible(_)) => {}
            Ok(QpOutcome::Unbounded) => {
                return Err(MpcError::Numerical("unbounded relaxation".into()));
            }
            Err(e) => return Err(MpcError::Numerical(e.to_string())),
        }
        // next assignment, lexicographic with the last step fastest
        let mut pos = n;
        loop {
            if pos == 0 {
                break;
            }
            pos -= 1;
            chosen[pos] += 1;
            if chosen[pos] < sizes[pos] {
                break;
            }
            chosen[pos] = 0;
            if pos == 0 {
                pos = usize::MAX;
                break;
            }
        }
        if pos == usize::MAX || (pos == 0 && chosen.iter().all(|&c| c == 0)) {
            break;
        }
    }
    stats.wall_time_ms = started.elapsed().as_secs_f64() * 1e3;
    Ok(match best {
        Some(mut sol) => {
            sol.stats = stats;
            sol
        }
        None => MpcSolution::unsolved(MpcStatus::Infeasible, stats),
    })
}

/// Branch-and-bound configuration.
#[derive(Debug, Clone)]
pub struct BnbConfig<T> {
    /// Absolute optimality gap of the returned incumbent.
    pub tol: T,
    /// Wall-time budget in seconds; `None` runs to proven optimality (or the
    /// node limit). Time-based stopping trades determinism for latency.
    pub time_budget: Option<f64>,
    pub node_limit: usize,
}

impl<T: Real> Default for BnbConfig<T> {
    fn default() -> Self {
        Self { tol: real(1e-6), time_budget: None, node_limit: 10_000 }
    }
}

/// Condensed form of the MPC QP: states eliminated through the dynamics, so
/// decision variables are the stacked jerks `u in R^{3N}`.
struct Condensed<T> {
    /// x_stack = gamma * u + phi, rows are x_1..x_N.
    gamma: Mat<T>,
    phi: Vec<T>,
    h_mat: Mat<T>,
    g: Vec<T>,
    /// Rows common to every node: terminal velocity, acceleration, jerk.
    base_a: Vec<Vec<T>>,
    base_l: Vec<T>,
    base_u: Vec<T>,
}

fn condense<T: Real>(problem: &MpcProblem<T>) -> Condensed<T> {
    let n = problem.n;
    let nu = INPUT_DIM * n;
    let a_d = a_matrix(problem.h, problem.limits.d_lin);
    let b_d = b_matrix(problem.h);

    // gamma and phi by forward recursion:
    // x_{k+1} rows = A * x_k rows + B on u_k's columns
    let mut gamma = Mat::zeros(STATE_DIM * n, nu);
    let mut phi = vec![T::zero(); STATE_DIM * n];
    let x0 = problem.x0.to_array();
    let mut prev_phi: Vec<T> = a_d.mul_vec(&x0);
    let mut prev_rows = Mat::zeros(STATE_DIM, nu);
    for c in 0..STATE_DIM {
        for j in 0..INPUT_DIM {
            prev_rows[(c, j)] = b_d[(c, j)];
        }
    }
    for k in 1..=n {
        let base = (k - 1) * STATE_DIM;
        for c in 0..STATE_DIM {
            phi[base + c] = prev_phi[c];
            for j in 0..nu {
                gamma[(base + c, j)] = prev_rows[(c, j)];
            }
        }
        if k < n {
            // next = A * prev (+ B on u_k columns)
            let mut next_rows = Mat::zeros(STATE_DIM, nu);
            for c in 0..STATE_DIM {
                for j in 0..nu {
                    let mut acc = T::zero();
                    for t in 0..STATE_DIM {
                        let av = a_d[(c, t)];
                        if av != T::zero() {
                            acc += av * prev_rows[(t, j)];
                        }
                    }
                    next_rows[(c, j)] = acc;
                }
            }
            for c in 0..STATE_DIM {
                for j in 0..INPUT_DIM {
                    next_rows[(c, k * INPUT_DIM + j)] += b_d[(c, j)];
                }
            }
            prev_rows = next_rows;
            prev_phi = a_d.mul_vec(&prev_phi);
        }
    }

    // objective: sum_k (x_k - r_k)' W_k (x_k - r_k) + u' R_u u + const
    // H = 2 (gamma' W gamma + R_u_block), g = 2 gamma' W (phi - r_stack)
    let two: T = real(2.0);
    let mut w_diag = vec![T::zero(); STATE_DIM * n];
    let mut r_stack = vec![T::zero(); STATE_DIM * n];
    for k in 1..=n {
        let w = if k == n { &problem.weights.r_n } else { &problem.weights.r_x };
        let r = problem.refs[k].to_array();
        for c in 0..STATE_DIM {
            w_diag[(k - 1) * STATE_DIM + c] = w[c];
            r_stack[(k - 1) * STATE_DIM + c] = r[c];
        }
    }
    let mut h_mat = Mat::zeros(nu, nu);
    let mut g = vec![T::zero(); nu];
    for rowi in 0..STATE_DIM * n {
        let w = w_diag[rowi];
        if w == T::zero() {
            continue;
        }
        let grow = gamma.row(rowi);
        let resid = phi[rowi] - r_stack[rowi];
        for i in 0..nu {
            let gi = grow[i];
            if gi == T::zero() {
                continue;
            }
            let wgi = two * w * gi;
            for j in i..nu {
                h_mat[(i, j)] += wgi * grow[j];
            }
            g[i] += wgi * resid;
        }
    }
    for i in 0..nu {
        for j in 0..i {
            h_mat[(i, j)] = h_mat[(j, i)];
        }
    }
    for k in 0..n {
        for c in 0..INPUT_DIM {
            let i = k * INPUT_DIM + c;
            h_mat[(i, i)] += two * problem.weights.r_u[c];
        }
    }

    // base constraint rows
    let mut base_a = Vec::new();
    let mut base_l = Vec::new();
    let mut base_u = Vec::new();
    // terminal velocity: v components of x_N
    for c in 0..3 {
        let rowi = (n - 1) * STATE_DIM + 3 + c;
        base_a.push(gamma.row(rowi).to_vec());
        base_l.push(-phi[rowi]);
        base_u.push(-phi[rowi]);
    }
    // acceleration bounds
    let (a_lo, a_hi) = accel_bounds(&problem.limits);
    for k in 1..=n {
        for c in 0..3 {
            let rowi = (k - 1) * STATE_DIM + 6 + c;
            base_a.push(gamma.row(rowi).to_vec());
            base_l.push(a_lo[c] - phi[rowi]);
            base_u.push(a_hi[c] - phi[rowi]);
        }
    }
    // jerk bounds (identity rows over u)
    let j_max = [problem.limits.j_x_max, problem.limits.j_y_max, problem.limits.j_z_max];
    for k in 0..n {
        for c in 0..3 {
            let mut rowv = vec![T::zero(); nu];
            rowv[k * INPUT_DIM + c] = T::one();
            base_a.push(rowv);
            base_l.push(-j_max[c]);
            base_u.push(j_max[c]);
        }
    }

    Condensed { gamma, phi, h_mat, g, base_a, base_l, base_u }
}

impl<T: Real> Condensed<T> {
    /// Membership row for one halfspace of step `k` (1-based).
    fn membership_row(
        &self,
        problem: &MpcProblem<T>,
        k: usize,
        poly: usize,
        hs: usize,
    ) -> (Vec<T>, T) {
        let nu = self.g.len();
        let h = &problem.tsc.corridors[k - 1].polyhedra[poly].halfspaces[hs];
        let mut rowv = vec![T::zero(); nu];
        let mut rhs = h.offset;
        for c in 0..3 {
            let rowi = (k - 1) * STATE_DIM + c;
            let nc = h.normal[c];
            if nc != T::zero() {
                for j in 0..nu {
                    rowv[j] += nc * self.gamma.row(rowi)[j];
                }
                rhs -= nc * self.phi[rowi];
            }
        }
        (rowv, rhs)
    }

    fn node_qp(&self, problem: &MpcProblem<T>, fixed: &[Option<usize>]) -> QpProblem<T> {
        let mut rows = self.base_a.clone();
        let mut l = self.base_l.clone();
        let mut u = self.base_u.clone();
        for (k0, choice) in fixed.iter().enumerate() {
            if let Some(p) = choice {
                let nh = problem.tsc.corridors[k0].polyhedra[*p].halfspaces.len();
                for hs in 0..nh {
                    let (rowv, rhs) = self.membership_row(problem, k0 + 1, *p, hs);
                    rows.push(rowv);
                    l.push(T::neg_infinity());
                    u.push(rhs);
                }
            }
        }
        QpProblem {
            p: self.h_mat.clone(),
            q: self.g.clone(),
            a: Mat::from_rows(&rows),
            l,
            u,
        }
    }
}

/// Reconstructs the trajectory from stacked jerks by stepping the dynamics.
fn rollout<T: Real>(problem: &MpcProblem<T>, u: &[T]) -> (Vec<AgentState<T>>, Vec<JerkInput<T>>) {
    let n = problem.n;
    let mut states = Vec::with_capacity(n + 1);
    let mut inputs = Vec::with_capacity(n);
    states.push(problem.x0);
    for k in 0..n {
        let j = JerkInput::new(Vec3::new(
            u[k * INPUT_DIM],
            u[k * INPUT_DIM + 1],
            u[k * INPUT_DIM + 2],
        ));
        let next = step(states.last().unwrap(), &j, problem.h, problem.limits.d_lin);
        inputs.push(j);
        states.push(next);
    }
    (states, inputs)
}

struct Node<T> {
    fixed: Vec<Option<usize>>,
    lb: T,
    warm: Option<(Vec<T>, Vec<T>)>,
    seq: u64,
}

/// Tolerance under which a relaxed position counts as inside a polyhedron.
const MEMBERSHIP_TOL: f64 = 1e-7;

/// Branch-and-bound over per-step polyhedron choices. Best-first on the
/// node lower bound with deterministic tie-breaking; returns an incumbent
/// within `config.tol` of the optimum, an infeasibility verdict, or a
/// timeout carrying the best incumbent found.
pub fn solve_bnb<T: Real>(
    problem: &MpcProblem<T>,
    config: &BnbConfig<T>,
) -> Result<MpcSolution<T>, MpcError> {
    problem.validate()?;
    let started = Instant::now();
    let n = problem.n;
    let cond = condense(problem);
    let mut stats = SolveStats::default();

    let mut queue: Vec<Node<T>> = vec![Node {
        fixed: vec![None; n],
        lb: T::neg_infinity(),
        warm: None,
        seq: 0,
    }];
    let mut next_seq = 1u64;
    let mut incumbent: Option<MpcSolution<T>> = None;
    let mem_tol: T = real(MEMBERSHIP_TOL);

    let finishing = |mut solution: Option<MpcSolution<T>>,
                     status_if_none: MpcStatus,
                     mut stats: SolveStats,
                     started: Instant|
     -> MpcSolution<T> {
        stats.wall_time_ms = started.elapsed().as_secs_f64() * 1e3;
        match solution.take() {
            Some(mut s) => {
                s.stats = stats;
                s
            }
            None => MpcSolution::unsolved(status_if_none, stats),
        }
    };

    while let Some(pos) = pop_best(&queue) {
        let node = queue.swap_remove(pos);
        // optimality: best-first means every remaining bound is >= this one
        if let Some(inc) = &incumbent {
            if node.lb >= inc.objective - config.tol {
                return Ok(finishing(incumbent, MpcStatus::Optimal, stats, started));
            }
        }
        if stats.nodes >= config.node_limit {
            return Ok(finishing(incumbent, MpcStatus::Timeout, stats, started));
        }
        if let Some(budget) = config.time_budget {
            if started.elapsed().as_secs_f64() > budget {
                return Ok(finishing(incumbent, MpcStatus::Timeout, stats, started));
            }
        }
        stats.nodes += 1;

        let qp = cond.node_qp(problem, &node.fixed);
        let warm = node.warm.as_ref().map(|(x, y)| {
            // dual vector length changes as membership rows are added;
            // keep the primal, pad the dual
            let mut y2 = y.clone();
            y2.resize(qp.num_rows(), T::zero());
            (x.clone(), y2)
        });
        let outcome = solve_qp_warm(
            &qp,
            real(QP_TOL),
            warm.as_ref().map(|(x, y)| (x.as_slice(), y.as_slice())),
        );
        let sol = match outcome {
            Err(_) => {
                // cannot bound or certify this node; leaves are dropped,
                // internal nodes are branched on the first unfixed step
                // with the parent's bound
                stats.numerical_failures += 1;
                if let Some(k_star) = (1..=n).find(|k| node.fixed[k - 1].is_none()) {
                    for pi in 0..problem.tsc.corridors[k_star - 1].polyhedra.len() {
                        let mut fixed = node.fixed.clone();
                        fixed[k_star - 1] = Some(pi);
                        queue.push(Node {
                            fixed,
                            lb: node.lb,
                            warm: node.warm.clone(),
                            seq: next_seq,
                        });
                        next_seq += 1;
                    }
                }
                continue;
            }
            Ok(QpOutcome::Infeasible(_)) => continue,
            Ok(QpOutcome::Unbounded) => {
                return Err(MpcError::Numerical("unbounded relaxation".into()))
            }
            Ok(QpOutcome::Solved(s)) => s,
        };
        stats.qp_iterations += sol.iterations;
        let (states, inputs) = rollout(problem, &sol.x);
        let relax_obj = problem.objective_value(&states, &inputs);
        if relax_obj < node.lb - real(1e-6) {
            stats.bound_violations += 1;
            debug_assert!(false, "child bound {relax_obj} below parent {lb}", lb = node.lb);
        }
        if let Some(inc) = &incumbent {
            if relax_obj >= inc.objective - config.tol {
                continue;
            }
        }

        // violation of each unfixed step's position against its corridor
        let mut worst_step = None;
        let mut worst_violation = T::neg_infinity();
        for k in 1..=n {
            if node.fixed[k - 1].is_some() {
                continue;
            }
            let p_k = states[k].p;
            let best = problem.tsc.corridors[k - 1]
                .polyhedra
                .iter()
                .map(|poly| poly.violation(p_k).max(T::zero()))
                .fold(T::infinity(), T::min);
            if best > worst_violation {
                worst_violation = best;
                worst_step = Some(k);
            }
        }

        let all_inside = worst_step.is_none() || worst_violation <= mem_tol;
        if all_inside {
            // relaxed solution is feasible for the MIQP: pick the nearest
            // polyhedron for every unfixed step
            let chosen: Vec<usize> = (1..=n)
                .map(|k| match node.fixed[k - 1] {
                    Some(p) => p,
                    None => {
                        let p_k = states[k].p;
                        let mut best_p = 0;
                        let mut best_v = T::infinity();
                        for (pi, poly) in
                            problem.tsc.corridors[k - 1].polyhedra.iter().enumerate()
                        {
                            let v = poly.violation(p_k);
                            if v < best_v {
                                best_v = v;
                                best_p = pi;
                            }
                        }
                        best_p
                    }
                })
                .collect();
            let better = incumbent.as_ref().map_or(true, |inc| relax_obj < inc.objective);
            if better {
                incumbent = Some(MpcSolution {
                    states,
                    inputs,
                    assignment: Assignment { chosen },
                    objective: relax_obj,
                    status: MpcStatus::Optimal,
                    stats: SolveStats::default(),
                });
            }
            continue;
        }

        // branch on the most-violating unfixed step, children ordered by
        // increasing violation
        let k_star = worst_step.unwrap();
        let p_star = states[k_star].p;
        let mut order: Vec<(usize, T)> = problem.tsc.corridors[k_star - 1]
            .polyhedra
            .iter()
            .enumerate()
            .map(|(pi, poly)| (pi, poly.violation(p_star).max(T::zero())))
            .collect();
        order.sort_by(|a, b| a.1.partial_cmp(&b.1).unwrap().then(a.0.cmp(&b.0)));
        for (pi, _) in order {
            let mut fixed = node.fixed.clone();
            fixed[k_star - 1] = Some(pi);
            queue.push(Node {
                fixed,
                lb: relax_obj,
                warm: Some((sol.x.clone(), sol.y.clone())),
                seq: next_seq,
            });
            next_seq += 1;
        }
    }

    let status = if incumbent.is_some() { MpcStatus::Optimal } else { MpcStatus::Infeasible };
    Ok(finishing(incumbent, status, stats, started))
}

fn pop_best<T: Real>(queue: &[Node<T>]) -> Option<usize> {
    if queue.is_empty() {
        return None;
    }
    let mut best = 0usize;
    for i in 1..queue.len() {
        let a = &queue[i];
        let b = &queue[best];
        let better = match a.lb.partial_cmp(&b.lb).unwrap() {
            std::cmp::Ordering::Less => true,
            std::cmp::Ordering::Greater => false,
            std::cmp::Ordering::Equal => a.seq < b.seq,
        };
        if better {
            best = i;
        }
    }
    Some(best)
}

/// One audit finding from [`check_solution`].
#[derive(Debug, Clone, PartialEq)]
pub struct SolutionViolation {
    pub kind: &'static str,
    pub detail: String,
}

/// Audits an optimal solution against every constraint of the formulation
/// plus an objective recomputation. Report-only.
pub fn check_solution<T: Real>(
    problem: &MpcProblem<T>,
    solution: &MpcSolution<T>,
    tol: T,
) -> Vec<SolutionViolation> {
    let mut out = Vec::new();
    let n = problem.n;
    if solution.status != MpcStatus::Optimal {
        out.push(SolutionViolation {
            kind: "status",
            detail: format!("expected optimal, got {:?}", solution.status),
        });
        return out;
    }
    if solution.states.len() != n + 1 || solution.inputs.len() != n {
        out.push(SolutionViolation {
            kind: "dimensions",
            detail: format!(
                "{} states / {} inputs for N = {n}",
                solution.states.len(),
                solution.inputs.len()
            ),
        });
        return out;
    }
    // x_0 = X_0
    let d0 = diff9(&solution.states[0], &problem.x0);
    let d0max = d0.iter().fold(T::zero(), |m, v| m.max(v.abs()));
    if d0max > tol {
        out.push(SolutionViolation {
            kind: "initial_state",
            detail: format!("|x_0 - X_0| = {d0max}"),
        });
    }
    // dynamics chaining
    for k in 0..n {
        let pred = step(&solution.states[k], &solution.inputs[k], problem.h, problem.limits.d_lin);
        let d = diff9(&solution.states[k + 1], &pred);
        let dmax = d.iter().fold(T::zero(), |m, v| m.max(v.abs()));
        if dmax > tol {
            out.push(SolutionViolation {
                kind: "dynamics",
                detail: format!("step {k}: residual {dmax}"),
            });
        }
    }
    // terminal hover
    let vn = solution.states[n].v.norm();
    if vn > tol {
        out.push(SolutionViolation { kind: "terminal_velocity", detail: format!("|v_N| = {vn}") });
    }
    // bounds: acceleration of x_{k+1} paired with jerk u_k
    for k in 0..n {
        for v in check_with_tol(&solution.states[k + 1], &solution.inputs[k], &problem.limits, tol)
        {
            out.push(SolutionViolation {
                kind: "bounds",
                detail: format!("step {}: {} exceeded by {}", k + 1, v.bound, v.excess),
            });
        }
    }
    // membership
    if solution.assignment.chosen.len() != n {
        out.push(SolutionViolation {
            kind: "assignment",
            detail: format!("{} choices for N = {n}", solution.assignment.chosen.len()),
        });
    } else {
        for k in 1..=n {
            let p = solution.assignment.chosen[k - 1];
            match problem.tsc.corridors[k - 1].polyhedra.get(p) {
                Some(poly) => {
                    if !poly.contains(solution.states[k].p, tol) {
                        out.push(SolutionViolation {
                            kind: "membership",
                            detail: format!(
                                "step {k}: position outside polyhedron {p} by {}",
                                poly.violation(solution.states[k].p)
                            ),
                        });
                    }
                }
                None => out.push(SolutionViolation {
                    kind: "assignment",
                    detail: format!("step {k}: polyhedron {p} does not exist"),
                }),
            }
        }
    }
    // objective recomputation
    let recomputed = problem.objective_value(&solution.states, &solution.inputs);
    let scale = T::one().max(solution.objective.abs());
    if (recomputed - solution.objective).abs() > real::<T>(1e-9) * scale {
        out.push(SolutionViolation {
            kind: "objective",
            detail: format!("stored {} vs recomputed {recomputed}", solution.objective),
        });
    }
    out
}

pub const MPC_SCHEMA: &str = "mpc/v1";

/// On-disk form of a problem (and optionally its solution), for failure
/// reproduction.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MpcFile<T> {
    pub schema: String,
    pub problem: MpcProblem<T>,
    pub solution: Option<MpcSolution<T>>,
}

impl<T: Real + Serialize + for<'de> Deserialize<'de>> MpcFile<T> {
    pub fn new(problem: MpcProblem<T>, solution: Option<MpcSolution<T>>) -> Self {
        Self { schema: MPC_SCHEMA.to_string(), problem, solution }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("mpc serialization")
    }

    pub fn from_json(s: &str) -> Result<Self, MpcError> {
        let file: Self =
            serde_json::from_str(s).map_err(|e| MpcError::DimensionMismatch(e.to_string()))?;
        if file.schema != MPC_SCHEMA {
            return Err(MpcError::DimensionMismatch(format!(
                "unsupported schema {:?}",
                file.schema
            )));
        }
        Ok(file)
    }
}
