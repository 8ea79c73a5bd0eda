//! Batch experiment harness: seeded worlds, missions, and per-run metrics
//! with mean / max / standard-deviation aggregates.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::planner::{run_mission, MissionRecord, PlannerConfig};
use crate::real::{real, Real};
use crate::vec3::Vec3;
use crate::world::{generate_world, WorldConfig, PRNG_NAME};

#[derive(Debug, Error, PartialEq)]
pub enum SimError {
    #[error("trace has no rows")]
    EmptyTrace,
}

/// Per-mission metrics. The jerk cost is the sum of per-step L2 jerk norms
/// over the executed inputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MissionResult<T> {
    pub seed: u64,
    pub success: bool,
    pub flight_distance: T,
    pub flight_time: T,
    pub mean_velocity: T,
    pub max_velocity: T,
    pub jerk_cost: T,
    pub comp_time_mean_ms: f64,
    pub comp_time_max_ms: f64,
    pub comp_time_std_ms: f64,
    pub state_collisions: usize,
    pub midpoint_flags: usize,
    pub failure_reason: Option<String>,
}

impl<T: Real> MissionResult<T> {
    /// Fields that must reproduce across identical runs (everything except
    /// measured wall times).
    pub fn deterministic_eq(&self, other: &Self) -> bool {
        self.seed == other.seed
            && self.success == other.success
            && self.flight_distance == other.flight_distance
            && self.flight_time == other.flight_time
            && self.mean_velocity == other.mean_velocity
            && self.max_velocity == other.max_velocity
            && self.jerk_cost == other.jerk_cost
            && self.state_collisions == other.state_collisions
            && self.midpoint_flags == other.midpoint_flags
            && self.failure_reason == other.failure_reason
    }
}

/// Distills a mission record into metrics. Deterministic apart from the
/// computation-time fields.
pub fn compute_metrics<T: Real>(
    record: &MissionRecord<T>,
    h: T,
    seed: u64,
) -> Result<MissionResult<T>, SimError> {
    if record.rows.is_empty() {
        return Err(SimError::EmptyTrace);
    }
    let mut positions: Vec<Vec3<T>> = record.rows.iter().map(|r| r.state.p).collect();
    positions.push(record.final_state.p);
    let flight_distance = positions
        .windows(2)
        .map(|w| (w[1] - w[0]).norm())
        .fold(T::zero(), |a, b| a + b);
    let flight_time = real::<T>(record.rows.len() as f64) * h;
    let mean_velocity = if flight_time > T::zero() {
        flight_distance / flight_time
    } else {
        T::zero()
    };
    let max_velocity = record
        .rows
        .iter()
        .map(|r| r.state.v.norm())
        .chain(std::iter::once(record.final_state.v.norm()))
        .fold(T::zero(), T::max);
    let jerk_cost = record
        .rows
        .iter()
        .map(|r| r.jerk.norm())
        .fold(T::zero(), |a, b| a + b);
    let times: Vec<f64> = record.rows.iter().map(|r| r.total_ms).collect();
    let n = times.len() as f64;
    let mean = times.iter().sum::<f64>() / n;
    let max = times.iter().fold(0.0f64, |a, &b| a.max(b));
    let var = times.iter().map(|t| (t - mean) * (t - mean)).sum::<f64>() / n;
    Ok(MissionResult {
        seed,
        success: record.success,
        flight_distance,
        flight_time,
        mean_velocity,
        max_velocity,
        jerk_cost,
        comp_time_mean_ms: mean,
        comp_time_max_ms: max,
        comp_time_std_ms: var.sqrt(),
        state_collisions: record.state_collisions,
        midpoint_flags: record.midpoint_flags,
        failure_reason: record.failure_reason.clone(),
    })
}

/// mean / max / population standard deviation of one metric across runs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricAggregate {
    pub mean: f64,
    pub max: f64,
    pub std: f64,
}

impl MetricAggregate {
    pub fn over(values: &[f64]) -> Self {
        if values.is_empty() {
            return Self { mean: 0.0, max: 0.0, std: 0.0 };
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let max = values.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b));
        let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        Self { mean, max, std: var.sqrt() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchAggregate {
    pub successes: usize,
    pub total: usize,
    pub flight_distance: MetricAggregate,
    pub flight_velocity: MetricAggregate,
    pub flight_time: MetricAggregate,
    pub computation_ms: MetricAggregate,
    pub jerk_cost: MetricAggregate,
}

pub const REPORT_SCHEMA: &str = "report/v1";

/// Versioned batch report: full configuration echo for provenance plus
/// per-seed results and aggregates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchReport<T> {
    pub schema: String,
    pub prng: String,
    pub jerk_cost_definition: String,
    pub world_config: WorldConfig,
    pub planner_config: PlannerConfig<T>,
    pub start: Vec3<T>,
    pub goal: Vec3<T>,
    pub seeds: Vec<u64>,
    pub results: Vec<MissionResult<T>>,
    pub aggregate: BatchAggregate,
}

pub fn aggregate_results<T: Real>(results: &[MissionResult<T>]) -> BatchAggregate {
    let f = |get: fn(&MissionResult<T>) -> f64| -> Vec<f64> {
        results.iter().map(get).collect()
    };
    BatchAggregate {
        successes: results.iter().filter(|r| r.success).count(),
        total: results.len(),
        flight_distance: MetricAggregate::over(&f(|r| r.flight_distance.to_f64().unwrap())),
        flight_velocity: MetricAggregate::over(&f(|r| r.mean_velocity.to_f64().unwrap())),
        flight_time: MetricAggregate::over(&f(|r| r.flight_time.to_f64().unwrap())),
        computation_ms: MetricAggregate::over(&f(|r| r.comp_time_mean_ms)),
        jerk_cost: MetricAggregate::over(&f(|r| r.jerk_cost.to_f64().unwrap())),
    }
}

/// Runs one mission per seed (independent worlds) and aggregates. `jobs`
/// bounds the number of worker threads; results keep seed order either way.
pub fn run_batch<T: Real + Serialize + for<'de> Deserialize<'de>>(
    seeds: &[u64],
    world_cfg: &WorldConfig,
    planner_cfg: &PlannerConfig<T>,
    start: Vec3<T>,
    goal: Vec3<T>,
    jobs: usize,
) -> (Vec<(MissionResult<T>, MissionRecord<T>)>, BatchReport<T>) {
    assert!(!seeds.is_empty(), "need at least one seed");
    let jobs = jobs.max(1).min(seeds.len());
    let run_one = |seed: u64| -> (MissionResult<T>, MissionRecord<T>) {
        let world = generate_world::<T>(seed, world_cfg).expect("world config validated");
        let record = run_mission(&world, start, goal, planner_cfg.clone());
        let result = compute_metrics(&record, planner_cfg.h, seed).unwrap_or(MissionResult {
            seed,
            success: false,
            flight_distance: T::zero(),
            flight_time: T::zero(),
            mean_velocity: T::zero(),
            max_velocity: T::zero(),
            jerk_cost: T::zero(),
            comp_time_mean_ms: 0.0,
            comp_time_max_ms: 0.0,
            comp_time_std_ms: 0.0,
            state_collisions: record.state_collisions,
            midpoint_flags: record.midpoint_flags,
            failure_reason: record.failure_reason.clone(),
        });
        (result, record)
    };

    let mut outcomes: Vec<Option<(MissionResult<T>, MissionRecord<T>)>> =
        (0..seeds.len()).map(|_| None).collect();
    if jobs == 1 {
        for (i, &seed) in seeds.iter().enumerate() {
            outcomes[i] = Some(run_one(seed));
        }
    } else {
        let next = std::sync::atomic::AtomicUsize::new(0);
        let outcomes_mx: Vec<std::sync::Mutex<Option<(MissionResult<T>, MissionRecord<T>)>>> =
            (0..seeds.len()).map(|_| std::sync::Mutex::new(None)).collect();
        std::thread::scope(|scope| {
            for _ in 0..jobs {
                scope.spawn(|| loop {
                    let i = next.fetch_add(1, std::sync::atomic::Ordering::SeqCst);
                    if i >= seeds.len() {
                        break;
                    }
                    *outcomes_mx[i].lock().unwrap() = Some(run_one(seeds[i]));
                });
            }
        });
        for (slot, mx) in outcomes.iter_mut().zip(outcomes_mx) {
            *slot = mx.into_inner().unwrap();
        }
    }
    let outcomes: Vec<(MissionResult<T>, MissionRecord<T>)> =
        outcomes.into_iter().map(|o| o.expect("every seed ran")).collect();

    let results: Vec<MissionResult<T>> = outcomes.iter().map(|(r, _)| r.clone()).collect();
    let aggregate = aggregate_results(&results);
    let report = BatchReport {
        schema: REPORT_SCHEMA.to_string(),
        prng: PRNG_NAME.to_string(),
        jerk_cost_definition: "sum over executed steps of ||j_k||_2".to_string(),
        world_config: world_cfg.clone(),
        planner_config: planner_cfg.clone(),
        start,
        goal,
        seeds: seeds.to_vec(),
        results,
        aggregate,
    };
    (outcomes, report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::AgentState;
    use crate::planner::{IterationStatus, TraceRow};

    fn row(t: f64, p: [f64; 3], v: [f64; 3], j: [f64; 3], ms: f64) -> TraceRow<f64> {
        TraceRow {
            iter: 0,
            t,
            state: AgentState {
                p: Vec3::new(p[0], p[1], p[2]),
                v: Vec3::new(v[0], v[1], v[2]),
                a: Vec3::zero(),
            },
            jerk: Vec3::new(j[0], j[1], j[2]),
            status: IterationStatus::Committed,
            corridor_ms: ms / 2.0,
            solver_ms: ms / 2.0,
            total_ms: ms,
        }
    }

    fn record(rows: Vec<TraceRow<f64>>, last: AgentState<f64>) -> MissionRecord<f64> {
        MissionRecord {
            rows,
            success: true,
            failure_reason: None,
            state_collisions: 0,
            midpoint_flags: 0,
            final_state: last,
            corridors: vec![],
        }
    }

    #[test]
    fn stationary_trace_zero_metrics() {
        let rows = vec![
            row(0.0, [1.0, 1.0, 1.0], [0.0; 3], [0.0; 3], 1.0),
            row(0.1, [1.0, 1.0, 1.0], [0.0; 3], [0.0; 3], 1.0),
        ];
        let last = rows.last().unwrap().state;
        let m = compute_metrics(&record(rows, last), 0.1, 0).unwrap();
        assert_eq!(m.flight_distance, 0.0);
        assert_eq!(m.jerk_cost, 0.0);
        assert_eq!(m.mean_velocity, 0.0);
    }

    #[test]
    fn constant_velocity_metrics() {
        // 2 m/s along x for 10 s at h = 0.1 -> 100 rows, 20 m
        let h = 0.1;
        let rows: Vec<_> = (0..100)
            .map(|i| {
                row(
                    i as f64 * h,
                    [2.0 * i as f64 * h, 0.0, 0.0],
                    [2.0, 0.0, 0.0],
                    [0.0; 3],
                    1.0,
                )
            })
            .collect();
        let final_state = AgentState {
            p: Vec3::new(20.0, 0.0, 0.0),
            v: Vec3::new(2.0, 0.0, 0.0),
            a: Vec3::zero(),
        };
        let m = compute_metrics(&record(rows, final_state), h, 0).unwrap();
        assert!((m.flight_distance - 20.0).abs() < 1e-9);
        assert!((m.flight_time - 10.0).abs() < 1e-12);
        assert!((m.mean_velocity - 2.0).abs() < 1e-9);
        assert!((m.max_velocity - 2.0).abs() < 1e-12);
        // invariant: mean_velocity * flight_time = flight_distance
        assert!((m.mean_velocity * m.flight_time - m.flight_distance).abs() < 1e-6);
    }

    #[test]
    fn jerk_cost_is_sum_of_norms() {
        let rows = vec![
            row(0.0, [0.0; 3], [0.0; 3], [3.0, 4.0, 0.0], 1.0), // norm 5
            row(0.1, [0.0; 3], [0.0; 3], [0.0, 0.0, 2.0], 1.0), // norm 2
            row(0.2, [0.0; 3], [0.0; 3], [1.0, 2.0, 2.0], 1.0), // norm 3
        ];
        let last = rows.last().unwrap().state;
        let m = compute_metrics(&record(rows, last), 0.1, 0).unwrap();
        assert!((m.jerk_cost - 10.0).abs() < 1e-12);
    }

    #[test]
    fn empty_trace_rejected() {
        let rec = MissionRecord::<f64> {
            rows: vec![],
            success: false,
            failure_reason: None,
            state_collisions: 0,
            midpoint_flags: 0,
            final_state: AgentState::at_rest(Vec3::zero()),
            corridors: vec![],
        };
        assert_eq!(compute_metrics(&rec, 0.1, 0), Err(SimError::EmptyTrace));
    }

    #[test]
    fn aggregate_consistency() {
        let mk = |d: f64, v: f64| MissionResult::<f64> {
            seed: 0,
            success: true,
            flight_distance: d,
            flight_time: d / v,
            mean_velocity: v,
            max_velocity: v,
            jerk_cost: 1.0,
            comp_time_mean_ms: 5.0,
            comp_time_max_ms: 9.0,
            comp_time_std_ms: 1.0,
            state_collisions: 0,
            midpoint_flags: 0,
            failure_reason: None,
        };
        let results = vec![mk(10.0, 2.0), mk(12.0, 2.5), mk(14.0, 3.0)];
        let agg = aggregate_results(&results);
        let mean_d: f64 = results.iter().map(|r| r.flight_distance).sum::<f64>() / 3.0;
        assert!((agg.flight_distance.mean - mean_d).abs() < 1e-9);
        assert_eq!(agg.flight_distance.max, 14.0);
        assert_eq!(agg.successes, 3);
        let var: f64 = results
            .iter()
            .map(|r| (r.flight_distance - mean_d).powi(2))
            .sum::<f64>()
            / 3.0;
        assert!((agg.flight_distance.std - var.sqrt()).abs() < 1e-9);
    }

    #[test]
    fn small_batch_reproducible_and_parallel_consistent() {
        let world_cfg = WorldConfig {
            extent: [10.0, 6.0, 6.0],
            n_static: 10,
            n_dynamic: 8,
            ..WorldConfig::default()
        };
        let cfg = PlannerConfig::<f64>::default();
        let start = Vec3::new(1.0, 3.0, 3.0);
        let goal = Vec3::new(9.0, 3.0, 3.0);
        let seeds = [11u64, 12];
        let (a, _) = run_batch(&seeds, &world_cfg, &cfg, start, goal, 1);
        let (b, _) = run_batch(&seeds, &world_cfg, &cfg, start, goal, 2);
        for ((ra, _), (rb, _)) in a.iter().zip(&b) {
            assert!(ra.deterministic_eq(rb), "{ra:?} vs {rb:?}");
        }
    }
}
