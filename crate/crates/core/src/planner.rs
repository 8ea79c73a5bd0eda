//! The receding-horizon loop: each simulated step builds a temporal
//! occupancy grid, advances the reference window, generates the temporal
//! safe corridor, solves the MIQP, and commits the solution (or skips and
//! replans one state deeper into the last committed trajectory).
//!
//! The plant follows planned states exactly, so a new solution's initial
//! state is always the committed state the agent reaches when the current
//! step ends. Skips offset that initial state one index further per
//! consecutive failure, up to the committed horizon's end.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::corridor::{generate_tsc, TemporalSafeCorridor};
use crate::dynamics::{AgentState, JerkInput, Limits};
use crate::global_path::{distance_map, push_path, shortest_path, to_polyline};
use crate::grid::TogBuilder;
use crate::miqp::{solve_bnb, BnbConfig, MpcProblem, MpcStatus, Weights};
use crate::real::{real, Real};
use crate::reference::{advance_window, sample_window, Polyline, ReferenceWindow};
use crate::vec3::Vec3;
use crate::world::World;

/// Speed below which the agent counts as hovering for the success check.
const HOVER_SPEED: f64 = 0.1;



/// How iteration overruns are decided.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TimingMode {
    /// Solve outcomes depend only on the node budget: runs reproduce
    /// bit-identically on any machine. Wall times are still measured and
    /// reported.
    Simulated,
    /// A solve is additionally discarded when its wall time exceeds the
    /// planning step, trading reproducibility for real-time fidelity.
    Wallclock,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlannerConfig<T> {
    pub n: usize,
    pub h: T,
    pub v_samp: T,
    pub thresh_dist: T,
    pub limits: Limits<T>,
    pub weights: Weights<T>,
    pub max_polyhedra: usize,
    pub clearance: T,
    pub goal_tolerance: T,
    pub max_failure_offset: usize,
    pub agent_radius: T,
    pub timing: TimingMode,
    pub node_limit: usize,
    pub bnb_tol: T,
    /// Overrides the default iteration cap (4x the straight-line time).
    pub max_iterations: Option<usize>,
    /// Consecutive failed advance checks after which the reference window
    /// re-anchors at the agent's position (the first-iteration
    /// initialization applied again); a frozen window otherwise deadlocks
    /// when tracking has been pushed far off the sampled references.
    pub stall_reanchor_iters: usize,
    /// Fault-injection hook: iterations whose solve is forced to report a
    /// timeout, for exercising the skip rule deterministically.
    pub force_timeout_iters: Vec<u64>,
    /// Keep each iteration's safe corridor in the mission record (for
    /// debug dumps).
    pub collect_corridors: bool,
}

impl<T: Real> Default for PlannerConfig<T> {
    /// Benchmark parameters: N = 7, h = 100 ms, reference sampling 2 m/s,
    /// advance threshold 0.4 m, clearance push 0.4 m, drone radius 0.2 m.
    fn default() -> Self {
        Self {
            n: 7,
            h: real(0.1),
            v_samp: real(2.0),
            thresh_dist: real(0.4),
            limits: Limits::default(),
            weights: Weights::default(),
            max_polyhedra: 6,
            clearance: real(0.4),
            goal_tolerance: real(0.5),
            max_failure_offset: 7,
            agent_radius: real(0.2),
            timing: TimingMode::Simulated,
            node_limit: 10_000,
            bnb_tol: real(1e-6),
            max_iterations: None,
            stall_reanchor_iters: 12,
            force_timeout_iters: vec![],
            collect_corridors: false,
        }
    }
}

/// Committed trajectory: states `0..=N` and the inputs between them.
#[derive(Debug, Clone, PartialEq)]
pub struct CommittedTrajectory<T> {
    pub states: Vec<AgentState<T>>,
    pub inputs: Vec<JerkInput<T>>,
}

impl<T: Real> CommittedTrajectory<T> {
    fn hover(at: Vec3<T>, n: usize) -> Self {
        Self {
            states: vec![AgentState::at_rest(at); n + 1],
            inputs: vec![JerkInput::zero(); n],
        }
    }
}

#[derive(Debug, Clone)]
pub struct PlannerState<T> {
    pub committed: CommittedTrajectory<T>,
    pub failure_offset: usize,
    pub window: ReferenceWindow<T>,
    pub iteration: u64,
    /// Consecutive accepted iterations whose advance check failed.
    pub stall_count: usize,
    /// The most recent problem the solver failed on (numerical failure),
    /// kept for offline reproduction via the mpc/v1 serialization.
    pub last_failed_problem: Option<Box<MpcProblem<T>>>,
    /// Final position of the last accepted solution, pending the
    /// reference-window advance check at the next iteration.
    pending_advance: Option<Vec3<T>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum IterationStatus {
    Committed,
    SkippedTimeout,
    SkippedInfeasible,
    SkippedSolverError,
}

impl IterationStatus {
    pub fn as_str(&self) -> &'static str {
        match self {
            IterationStatus::Committed => "ok",
            IterationStatus::SkippedTimeout => "skip_timeout",
            IterationStatus::SkippedInfeasible => "skip_infeasible",
            IterationStatus::SkippedSolverError => "skip_error",
        }
    }
}

/// Everything observable about one planning iteration.
#[derive(Debug, Clone)]
pub struct IterationReport<T> {
    pub iteration: u64,
    pub status: IterationStatus,
    /// Index into the previous committed trajectory used as the initial
    /// state (1 + the failure offset at entry).
    pub x0_index: usize,
    pub failure_offset_after: usize,
    pub objective: Option<T>,
    pub corridor_ms: f64,
    pub solver_ms: f64,
    pub total_ms: f64,
    /// Present when [`PlannerConfig::collect_corridors`] is set.
    pub tsc: Option<TemporalSafeCorridor<T>>,
}

#[derive(Debug)]
pub enum IterationOutcome<T> {
    Continue(IterationReport<T>),
    MissionFailed { reason: String },
}

/// One row of the mission trace: the state executed during the iteration
/// and the jerk applied over it.
#[derive(Debug, Clone)]
pub struct TraceRow<T> {
    pub iter: u64,
    pub t: T,
    pub state: AgentState<T>,
    pub jerk: Vec3<T>,
    pub status: IterationStatus,
    pub corridor_ms: f64,
    pub solver_ms: f64,
    pub total_ms: f64,
}

#[derive(Debug, Clone)]
pub struct MissionRecord<T> {
    pub rows: Vec<TraceRow<T>>,
    pub success: bool,
    pub failure_reason: Option<String>,
    /// Ground-truth collisions of committed states at their own times.
    pub state_collisions: usize,
    /// Committed-segment midpoints that touch ground truth (flagged only:
    /// point-wise corridor constraints do not bind between steps).
    pub midpoint_flags: usize,
    pub final_state: AgentState<T>,
    /// One safe corridor per iteration when
    /// [`PlannerConfig::collect_corridors`] is set.
    pub corridors: Vec<TemporalSafeCorridor<T>>,
}

/// Receding-horizon planner bound to one world and one global path.
pub struct Planner<'w, T> {
    tog_builder: TogBuilder<'w, T>,
    polyline: Polyline<T>,
    pub cfg: PlannerConfig<T>,
}

impl<'w, T: Real> Planner<'w, T> {
    /// Computes the global path once (the map is known beforehand) and
    /// prepares the reusable static occupancy layer.
    pub fn new(
        world: &'w World<T>,
        start: Vec3<T>,
        goal: Vec3<T>,
        cfg: PlannerConfig<T>,
    ) -> Result<Self, String> {
        let tog_builder = TogBuilder::new(world);
        let tog0 = tog_builder.build(T::zero(), cfg.n, cfg.h);
        let grid0 = &tog0.grids[0];
        let start_cell = grid0
            .world_to_voxel(start)
            .map_err(|e| format!("start out of bounds: {e}"))?;
        let goal_cell = grid0
            .world_to_voxel(goal)
            .map_err(|e| format!("goal out of bounds: {e}"))?;
        let path = shortest_path(grid0, start_cell, goal_cell)
            .map_err(|e| format!("global path: {e}"))?;
        let field = distance_map(grid0);
        let pushed = push_path(&path, grid0, &field, cfg.clearance)
            .map_err(|e| format!("clearance push: {e}"))?;
        let line_points =
            to_polyline(&pushed, grid0).map_err(|e| format!("polyline: {e}"))?;
        let polyline = Polyline::new(&line_points).map_err(|e| format!("polyline: {e}"))?;
        Ok(Self { tog_builder, polyline, cfg })
    }

    pub fn polyline(&self) -> &Polyline<T> {
        &self.polyline
    }

    /// Initial planner state: agent hovering at `start`, reference window
    /// anchored at the nearest point of the global path.
    pub fn bootstrap(&self, start: Vec3<T>) -> PlannerState<T> {
        let offset = self.polyline.project(start);
        let window = sample_window(&self.polyline, offset, self.cfg.v_samp, self.cfg.h, self.cfg.n);
        PlannerState {
            committed: CommittedTrajectory::hover(start, self.cfg.n),
            failure_offset: 0,
            window,
            iteration: 0,
            stall_count: 0,
            last_failed_problem: None,
            pending_advance: None,
        }
    }

    /// Runs one planning iteration. `t_now` is the absolute time of the
    /// initial state handed to the solver (the state the agent reaches when
    /// the currently-executing step completes).
    pub fn plan_iteration(
        &self,
        t_now: T,
        state: &mut PlannerState<T>,
    ) -> IterationOutcome<T> {
        let total_start = Instant::now();
        let cfg = &self.cfg;
        let x0_index = 1 + state.failure_offset;
        if x0_index >= state.committed.states.len() {
            return IterationOutcome::MissionFailed {
                reason: "committed trajectory exhausted".into(),
            };
        }
        let x0 = state.committed.states[x0_index];

        // reference window advance (only after an accepted solve); a long
        // streak of failed checks re-anchors the window at the agent
        if let Some(achieved) = state.pending_advance.take() {
            let before = state.window.arc_offset;
            state.window = advance_window(
                &state.window,
                achieved,
                cfg.thresh_dist,
                &self.polyline,
                cfg.v_samp,
                cfg.h,
                cfg.n,
            );
            let at_end = before >= self.polyline.total_length();
            if state.window.arc_offset > before || at_end {
                state.stall_count = 0;
            } else {
                state.stall_count += 1;
                if state.stall_count >= cfg.stall_reanchor_iters {
                    let offset = self.polyline.project(x0.p);
                    state.window =
                        sample_window(&self.polyline, offset, cfg.v_samp, cfg.h, cfg.n);
                    state.stall_count = 0;
                }
            }
        }

        // temporal occupancy grid + safe corridor, timed together
        let corridor_start = Instant::now();
        let tog = self.tog_builder.build(t_now, cfg.n, cfg.h);
        let tsc = match generate_tsc(
            &tog,
            x0.p,
            cfg.limits.v_max,
            &state.window.points[1..=cfg.n],
            cfg.max_polyhedra,
        ) {
            Ok(tsc) => tsc,
            Err(e) => {
                return IterationOutcome::MissionFailed { reason: format!("corridor: {e}") }
            }
        };
        let corridor_ms = corridor_start.elapsed().as_secs_f64() * 1e3;

        let kept_tsc = cfg.collect_corridors.then(|| tsc.clone());
        let refs: Vec<AgentState<T>> = state
            .window
            .points
            .iter()
            .map(|&p| AgentState::at_rest(p))
            .collect();
        let problem = MpcProblem {
            x0,
            refs,
            tsc,
            limits: cfg.limits,
            weights: cfg.weights,
            h: cfg.h,
            n: cfg.n,
        };

        let solver_start = Instant::now();
        let forced_timeout = cfg.force_timeout_iters.contains(&state.iteration);
        let mut solver_error = false;
        let solved = if forced_timeout {
            None
        } else {
            let bnb_cfg = BnbConfig {
                tol: cfg.bnb_tol,
                time_budget: match cfg.timing {
                    TimingMode::Simulated => None,
                    TimingMode::Wallclock => Some(cfg.h.to_f64().unwrap()),
                },
                node_limit: cfg.node_limit,
            };
            match solve_bnb(&problem, &bnb_cfg) {
                Ok(sol) => Some(sol),
                Err(_) => {
                    // a subsolver breakdown discards the iteration like a
                    // timeout; the instance is kept for reproduction
                    solver_error = true;
                    state.last_failed_problem = Some(Box::new(problem.clone()));
                    None
                }
            }
        };
        let solver_ms = solver_start.elapsed().as_secs_f64() * 1e3;

        let within_budget = match cfg.timing {
            TimingMode::Simulated => true,
            TimingMode::Wallclock => solver_ms <= cfg.h.to_f64().unwrap() * 1e3,
        };
        let (status, objective) = match &solved {
            Some(sol) if sol.status == MpcStatus::Optimal && within_budget => {
                (IterationStatus::Committed, Some(sol.objective))
            }
            Some(sol) if sol.status == MpcStatus::Infeasible => {
                (IterationStatus::SkippedInfeasible, None)
            }
            None if solver_error => (IterationStatus::SkippedSolverError, None),
            _ => (IterationStatus::SkippedTimeout, None),
        };

        match status {
            IterationStatus::Committed => {
                let sol = solved.unwrap();
                state.pending_advance = Some(sol.states[cfg.n].p);
                state.committed = CommittedTrajectory { states: sol.states, inputs: sol.inputs };
                state.failure_offset = 0;
            }
            _ => {
                state.failure_offset = (state.failure_offset + 1).min(cfg.max_failure_offset);
            }
        }
        state.iteration += 1;

        IterationOutcome::Continue(IterationReport {
            iteration: state.iteration - 1,
            status,
            x0_index,
            failure_offset_after: state.failure_offset,
            objective,
            corridor_ms,
            solver_ms,
            total_ms: total_start.elapsed().as_secs_f64() * 1e3,
            tsc: kept_tsc,
        })
    }
}

/// Runs a full mission: plans every `h` of simulated time, advances the
/// agent one committed step per iteration (perfect tracking), audits every
/// committed state against ground truth, and stops on goal+hover, failure,
/// collision or the iteration cap.
pub fn run_mission<T: Real>(
    world: &World<T>,
    start: Vec3<T>,
    goal: Vec3<T>,
    cfg: PlannerConfig<T>,
) -> MissionRecord<T> {
    let fail = |reason: String| MissionRecord {
        rows: vec![],
        success: false,
        failure_reason: Some(reason),
        state_collisions: 0,
        midpoint_flags: 0,
        final_state: AgentState::at_rest(start),
        corridors: vec![],
    };
    if world.collision_check(start, T::zero(), cfg.agent_radius) {
        return fail("start position collides at t = 0".into());
    }
    if world.collision_check(goal, T::zero(), cfg.agent_radius) {
        return fail("goal position collides at t = 0".into());
    }
    let h = cfg.h;
    let planner = match Planner::new(world, start, goal, cfg) {
        Ok(p) => p,
        Err(reason) => return fail(reason),
    };
    let cfg = &planner.cfg;
    let cap = cfg.max_iterations.unwrap_or_else(|| {
        let straight = (goal - start).norm();
        let iters = (straight / cfg.v_samp / h).ceil().to_usize().unwrap_or(1).max(1);
        4 * iters
    });

    let mut state = planner.bootstrap(start);
    let mut rows: Vec<TraceRow<T>> = Vec::new();
    let mut corridors: Vec<TemporalSafeCorridor<T>> = Vec::new();
    let mut state_collisions = 0usize;
    let mut midpoint_flags = 0usize;
    let mut success = false;
    let mut failure_reason = None;
    let mut current = state.committed.states[0];

    for i in 0..cap {
        let t: T = real::<T>(i as f64) * h;
        current = state.committed.states[state.failure_offset];

        // success: inside the goal ball and hovering
        if (current.p - goal).norm() <= cfg.goal_tolerance
            && current.v.norm() < real(HOVER_SPEED)
        {
            success = true;
            break;
        }

        let exec_offset = state.failure_offset;
        if exec_offset >= state.committed.inputs.len() {
            failure_reason = Some("committed trajectory exhausted".into());
            break;
        }
        let jerk = state.committed.inputs[exec_offset].j;
        let t_x0: T = real::<T>((i + 1) as f64) * h;
        let outcome = planner.plan_iteration(t_x0, &mut state);
        let report = match outcome {
            IterationOutcome::Continue(r) => r,
            IterationOutcome::MissionFailed { reason } => {
                failure_reason = Some(reason);
                break;
            }
        };

        if let Some(tsc) = report.tsc {
            corridors.push(tsc);
        }
        rows.push(TraceRow {
            iter: report.iteration,
            t,
            state: current,
            jerk,
            status: report.status,
            corridor_ms: report.corridor_ms,
            solver_ms: report.solver_ms,
            total_ms: report.total_ms,
        });

        // audit the newly committed trajectory at its own absolute times
        if report.status == IterationStatus::Committed {
            let traj = &state.committed;
            for (k, s) in traj.states.iter().enumerate() {
                let tk = t_x0 + real::<T>(k as f64) * h;
                if world.collision_check(s.p, tk, cfg.agent_radius) {
                    state_collisions += 1;
                }
            }
            for k in 0..traj.states.len() - 1 {
                let mid = (traj.states[k].p + traj.states[k + 1].p) * real(0.5);
                let tm = t_x0 + (real::<T>(k as f64) + real(0.5)) * h;
                if world.collision_check(mid, tm, cfg.agent_radius) {
                    midpoint_flags += 1;
                }
            }
        }
        if state_collisions > 0 {
            failure_reason = Some("committed state collides with ground truth".into());
            break;
        }
    }

    if !success && failure_reason.is_none() {
        failure_reason = Some(format!("iteration cap {cap} reached"));
    }
    MissionRecord {
        rows,
        success,
        failure_reason: if success { None } else { failure_reason },
        state_collisions,
        midpoint_flags,
        final_state: current,
        corridors,
    }
}

/// Trace CSV: `iter,t,px,...,jz,status,corridor_ms,solver_ms,total_ms`.
pub fn trace_to_csv<T: Real>(rows: &[TraceRow<T>]) -> String {
    let mut out = String::from(
        "iter,t,px,py,pz,vx,vy,vz,ax,ay,az,jx,jy,jz,status,corridor_ms,solver_ms,total_ms\n",
    );
    for r in rows {
        let s = &r.state;
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}\n",
            r.iter,
            r.t,
            s.p.x,
            s.p.y,
            s.p.z,
            s.v.x,
            s.v.y,
            s.v.z,
            s.a.x,
            s.a.y,
            s.a.z,
            r.jerk.x,
            r.jerk.y,
            r.jerk.z,
            r.status.as_str(),
            r.corridor_ms,
            r.solver_ms,
            r.total_ms
        ));
    }
    out
}
