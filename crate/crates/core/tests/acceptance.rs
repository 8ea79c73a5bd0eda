//! Acceptance suite: every release gate runs here, one pass/fail line per
//! criterion (run with `--nocapture` to see them).
//!
//! The expensive shared artifacts — the randomized solver cross-check and
//! the five-seed benchmark batch — are computed once and reused across
//! criteria.

mod common;

use std::sync::OnceLock;
use std::time::Instant;

use common::{box_poly, dijkstra_cost, random_instance, rng};
use rand::Rng;

use tscmpc::corridor::{generate_tsc, reachable_box};
use tscmpc::global_path::{distance_map, penalized_cost, push_path, shortest_path};
use tscmpc::grid::{build_tog, rasterize_instant, TogBuilder, VoxelGrid, VoxelIdx};
use tscmpc::miqp::{check_solution, enumerate_oracle, solve_bnb, BnbConfig, MpcSolution, MpcStatus};
use tscmpc::planner::{
    run_mission, trace_to_csv, IterationOutcome, IterationStatus, Planner, PlannerConfig,
};
use tscmpc::sim::run_batch;
use tscmpc::world::{generate_world, WorldConfig};
use tscmpc::{MpcProblem64, Vec3d};

const BENCHMARK_SEEDS: [u64; 5] = [13, 19, 33, 40, 62];

fn benchmark_start() -> Vec3d {
    Vec3d::new(1.0, 6.0, 6.0)
}

fn benchmark_goal() -> Vec3d {
    Vec3d::new(49.0, 6.0, 6.0)
}

// ----- shared artifact: randomized solver cross-check --------------------

struct CrossCheck {
    cases: Vec<(MpcProblem64, MpcSolution<f64>, MpcSolution<f64>)>,
    elapsed_s: f64,
}

fn cross_check() -> &'static CrossCheck {
    static CELL: OnceLock<CrossCheck> = OnceLock::new();
    CELL.get_or_init(|| {
        let started = Instant::now();
        let mut generator = rng(2024);
        let mut cases = Vec::with_capacity(200);
        for _ in 0..200 {
            let problem = random_instance(&mut generator);
            let bnb = solve_bnb(&problem, &BnbConfig::default()).expect("bnb solve");
            let oracle = enumerate_oracle(&problem).expect("oracle solve");
            cases.push((problem, bnb, oracle));
        }
        CrossCheck { cases, elapsed_s: started.elapsed().as_secs_f64() }
    })
}

// ----- shared artifact: the five-seed benchmark batch --------------------

type BatchOutcome = (
    Vec<(tscmpc::MissionResult64, tscmpc::planner::MissionRecord<f64>)>,
    tscmpc::sim::BatchReport<f64>,
);

fn run_benchmark_batch() -> BatchOutcome {
    run_batch(
        &BENCHMARK_SEEDS,
        &WorldConfig::default(),
        &PlannerConfig::default(),
        benchmark_start(),
        benchmark_goal(),
        1,
    )
}

fn benchmark_batch() -> &'static BatchOutcome {
    static CELL: OnceLock<BatchOutcome> = OnceLock::new();
    CELL.get_or_init(run_benchmark_batch)
}

// ----- criteria -----------------------------------------------------------

#[test]
fn criterion_1_oracle_equivalence() {
    let check = cross_check();
    let mut optimal = 0;
    let mut infeasible = 0;
    for (i, (_, bnb, oracle)) in check.cases.iter().enumerate() {
        assert_eq!(
            bnb.status, oracle.status,
            "instance {i}: bnb {:?} vs oracle {:?}",
            bnb.status, oracle.status
        );
        match bnb.status {
            MpcStatus::Optimal => {
                optimal += 1;
                let gap = (bnb.objective - oracle.objective).abs();
                assert!(
                    gap <= 1e-6,
                    "instance {i}: objective gap {gap} (bnb {} oracle {})",
                    bnb.objective,
                    oracle.objective
                );
                assert_eq!(bnb.stats.bound_violations, 0, "instance {i}");
                assert_eq!(bnb.stats.numerical_failures, 0, "instance {i}");
            }
            MpcStatus::Infeasible => infeasible += 1,
            MpcStatus::Timeout => panic!("instance {i}: unexpected timeout"),
        }
    }
    assert!(optimal > 0 && infeasible > 0, "regimes not both exercised");
    assert!(
        check.elapsed_s < 60.0,
        "cross-check took {:.1} s (budget 60 s)",
        check.elapsed_s
    );
    println!(
        "criterion 1 PASS: 200 instances, {optimal} optimal / {infeasible} infeasible, \
         status + objective agreement within 1e-6, {:.1} s",
        check.elapsed_s
    );
}

#[test]
fn criterion_2_constraint_audit() {
    let check = cross_check();
    let mut audited = 0;
    for (i, (problem, bnb, oracle)) in check.cases.iter().enumerate() {
        for (label, sol) in [("bnb", bnb), ("oracle", oracle)] {
            if sol.status == MpcStatus::Optimal {
                let violations = check_solution(problem, sol, 1e-6);
                assert!(
                    violations.is_empty(),
                    "instance {i} ({label}): {violations:?}"
                );
                audited += 1;
            }
        }
    }
    println!("criterion 2 PASS: {audited} optimal solutions audited clean at 1e-6");
}

#[test]
fn criterion_3_mission_success_at_paper_scale() {
    let (outcomes, report) = benchmark_batch();
    let successes = report.aggregate.successes;
    assert!(
        successes >= 4,
        "only {successes}/5 missions succeeded: {:?}",
        report
            .results
            .iter()
            .map(|r| (r.seed, r.success, r.failure_reason.clone()))
            .collect::<Vec<_>>()
    );
    for (result, record) in outcomes {
        if result.success {
            assert_eq!(
                result.state_collisions, 0,
                "seed {}: ground-truth collision in successful run",
                result.seed
            );
            assert_eq!(record.state_collisions, 0);
        }
    }
    let mean_v = report.aggregate.flight_velocity.mean;
    assert!(
        (1.5..=4.0).contains(&mean_v),
        "mean flight velocity {mean_v} outside [1.5, 4.0]"
    );
    let mean_t = report.aggregate.flight_time.mean;
    assert!(mean_t <= 40.0, "mean flight time {mean_t} > 40 s");
    println!(
        "criterion 3 PASS: {successes}/5 success, zero collisions, mean velocity \
         {mean_v:.2} m/s, mean flight time {mean_t:.1} s"
    );
}

#[test]
fn criterion_4_timing_sanity_soft() {
    let (outcomes, _) = benchmark_batch();
    let mut corridor = Vec::new();
    let mut solver = Vec::new();
    let mut total = Vec::new();
    for (_, record) in outcomes {
        for row in &record.rows {
            corridor.push(row.corridor_ms);
            solver.push(row.solver_ms);
            total.push(row.total_ms);
        }
    }
    let stats = |v: &mut Vec<f64>| -> (f64, f64, f64, f64, f64) {
        v.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let q = |p: f64| v[(p * (v.len() - 1) as f64).round() as usize];
        (v[0], q(0.25), q(0.5), q(0.75), v[v.len() - 1])
    };
    let c = stats(&mut corridor);
    let s = stats(&mut solver);
    let t = stats(&mut total);
    let report = format!(
        "per-iteration ms (min/p25/median/p75/max): corridor {:.1}/{:.1}/{:.1}/{:.1}/{:.1}, \
         solver {:.1}/{:.1}/{:.1}/{:.1}/{:.1}, total {:.1}/{:.1}/{:.1}/{:.1}/{:.1}",
        c.0, c.1, c.2, c.3, c.4, s.0, s.1, s.2, s.3, s.4, t.0, t.1, t.2, t.3, t.4
    );
    if t.2 <= 100.0 {
        println!("criterion 4 PASS: median iteration {:.1} ms <= 100 ms; {report}", t.2);
    } else {
        // soft criterion: hardware-dependent, downgraded to a warning
        println!(
            "criterion 4 WARNING: median iteration {:.1} ms exceeds 100 ms; {report}",
            t.2
        );
    }
}

#[test]
fn criterion_5_corridor_safety() {
    let mut sampler = rng(77);
    let mut polyhedra_checked = 0usize;
    let mut worlds: Vec<(tscmpc::World64, Vec3d)> = Vec::new();
    for seed in [13u64, 19] {
        let world = generate_world(seed, &WorldConfig::default()).unwrap();
        worlds.push((world, benchmark_start()));
    }
    // the table-caption variant: 250 static / 250 dynamic
    let big = WorldConfig { n_static: 250, n_dynamic: 250, ..WorldConfig::default() };
    let world = generate_world(7, &big).unwrap();
    let builder = TogBuilder::new(&world);
    let g = builder.grid_template();
    let agent = (0..)
        .map(|i| Vec3d::new(5.0 + 0.3 * i as f64, 6.0, 6.0))
        .find(|p| g.world_to_voxel(*p).map(|c| g.is_free(c)).unwrap_or(false))
        .unwrap();
    worlds.push((world, agent));

    for (world, agent) in &worlds {
        for t0 in [0.0, 1.3] {
            let tog = build_tog(world, t0, 7, 0.1);
            let refs: Vec<Vec3d> = (1..=7)
                .map(|k| *agent + Vec3d::new(0.2 * k as f64, 0.0, 0.0))
                .collect();
            let Ok(tsc) = generate_tsc(&tog, *agent, 4.0, &refs, 6) else {
                continue;
            };
            for (i, (sc, grid)) in tsc.corridors.iter().zip(&tog.grids).enumerate() {
                let region = reachable_box(*agent, 4.0, i + 1, 0.1, grid);
                for poly in &sc.polyhedra {
                    polyhedra_checked += 1;
                    // exhaustive voxel-center check over the region
                    for cell in region.iter() {
                        let center = grid.voxel_to_world(cell).unwrap();
                        if poly.contains(center, 0.0) {
                            assert!(
                                grid.is_free(cell),
                                "occupied voxel center inside polyhedron (step {})",
                                i + 1
                            );
                        }
                    }
                    // 1000 random interior points per polyhedron
                    let lo = Vec3d::new(
                        -poly.halfspaces[1].offset,
                        -poly.halfspaces[3].offset,
                        -poly.halfspaces[5].offset,
                    );
                    let hi = Vec3d::new(
                        poly.halfspaces[0].offset,
                        poly.halfspaces[2].offset,
                        poly.halfspaces[4].offset,
                    );
                    for _ in 0..1000 {
                        let p = Vec3d::new(
                            lo.x + (hi.x - lo.x) * sampler.gen_range(0.001..0.999),
                            lo.y + (hi.y - lo.y) * sampler.gen_range(0.001..0.999),
                            lo.z + (hi.z - lo.z) * sampler.gen_range(0.001..0.999),
                        );
                        assert!(poly.contains(p, 1e-12));
                        let cell = grid.world_to_voxel(p).unwrap();
                        assert!(grid.is_free(cell), "occupied sample inside polyhedron");
                    }
                }
            }
        }
    }
    assert!(polyhedra_checked > 50, "only {polyhedra_checked} polyhedra audited");
    println!(
        "criterion 5 PASS: {polyhedra_checked} polyhedra audited (exhaustive centers + \
         1000-point sampling), zero occupied points"
    );
}

#[test]
fn criterion_6_swept_occupancy_soundness() {
    let cfg = WorldConfig {
        extent: [20.0, 20.0, 20.0],
        n_static: 0,
        n_dynamic: 50,
        ..WorldConfig::default()
    };
    let world = generate_world::<f64>(4242, &cfg).unwrap();
    assert_eq!(world.dynamic_obstacles.len(), 50);
    let (t0, steps, ts) = (0.7, 5usize, 0.1);
    let tog = build_tog(&world, t0, steps, ts);
    let dt_sample = ts / 8.0;
    let fine = dt_sample / 4.0;
    let mut footprint_voxels = 0usize;
    for ob in &world.dynamic_obstacles {
        for (k, grid) in tog.grids.iter().enumerate() {
            let t_a = t0 + k as f64 * ts;
            let t_b = t0 + (k + 1) as f64 * ts;
            let mut t = t_a;
            loop {
                let mut inst = VoxelGrid::covering(world.extent, world.voxel_size);
                rasterize_instant(&mut inst, &ob.shape, ob.position(t));
                for idx in inst.iter_occupied() {
                    footprint_voxels += 1;
                    assert!(
                        grid.is_occupied(idx),
                        "interval {k}: ground-truth voxel {idx:?} at t={t} missing from TOG"
                    );
                }
                if t >= t_b {
                    break;
                }
                t = (t + fine).min(t_b);
            }
        }
    }
    println!(
        "criterion 6 PASS: 50 dynamic obstacles, {footprint_voxels} fine-sampled footprint \
         voxels all contained in the TOG"
    );
}

#[test]
fn criterion_7_path_optimality() {
    let mut generator = rng(1313);
    let mut ties = 0;
    let mut no_path = 0;
    for trial in 0..50 {
        let mut grid = VoxelGrid::new(Vec3d::zero(), 0.3, [12, 12, 12]);
        for x in 0..12i64 {
            for y in 0..12i64 {
                for z in 0..12i64 {
                    if generator.gen::<f64>() < 0.2 {
                        grid.set_occupied(VoxelIdx::new(x, y, z), true);
                    }
                }
            }
        }
        let start = VoxelIdx::new(0, 0, 0);
        let goal = VoxelIdx::new(11, 11, 11);
        grid.set_occupied(start, false);
        grid.set_occupied(goal, false);
        let oracle = dijkstra_cost(&grid, start, goal);
        match shortest_path(&grid, start, goal) {
            Ok(path) => {
                let oc = oracle.unwrap_or_else(|| panic!("trial {trial}: oracle disagrees"));
                assert_eq!(path.cost, oc, "trial {trial}: cost not an exact tie");
                ties += 1;
                // clearance push: free cells, endpoints preserved, penalized
                // cost never increases
                let field = distance_map(&grid);
                let pushed = push_path(&path, &grid, &field, 0.4).unwrap();
                assert_eq!(pushed.cells.first(), path.cells.first());
                assert_eq!(pushed.cells.last(), path.cells.last());
                for &c in &pushed.cells {
                    assert!(grid.is_free(c), "trial {trial}: pushed path hits occupied cell");
                }
                assert!(
                    penalized_cost(&pushed, &field, 0.4)
                        <= penalized_cost(&path, &field, 0.4) + 1e-12,
                    "trial {trial}: penalized cost increased"
                );
            }
            Err(_) => {
                assert!(oracle.is_none(), "trial {trial}: reachability mismatch");
                no_path += 1;
            }
        }
    }
    println!(
        "criterion 7 PASS: 50 random grids, {ties} exact cost ties, {no_path} agreed \
         unreachable, pushed paths collision-free with non-increasing penalized cost"
    );
}

#[test]
fn criterion_8_determinism() {
    let (outcomes_a, _) = benchmark_batch();
    let (outcomes_b, _) = run_benchmark_batch();
    let strip_timing = |csv: &str| -> String {
        csv.lines()
            .map(|line| line.split(',').take(15).collect::<Vec<_>>().join(","))
            .collect::<Vec<_>>()
            .join("\n")
    };
    for ((ra, rec_a), (rb, rec_b)) in outcomes_a.iter().zip(&outcomes_b) {
        assert!(ra.deterministic_eq(rb), "seed {}: results differ", ra.seed);
        let csv_a = strip_timing(&trace_to_csv(&rec_a.rows));
        let csv_b = strip_timing(&trace_to_csv(&rec_b.rows));
        assert_eq!(csv_a, csv_b, "seed {}: traces differ beyond timing", ra.seed);
    }
    println!(
        "criterion 8 PASS: two full benchmark runs byte-identical modulo the three timing columns"
    );
}

#[test]
fn criterion_9_failure_skip_semantics() {
    let cfg_w = WorldConfig {
        extent: [20.0, 6.0, 6.0],
        n_static: 0,
        n_dynamic: 0,
        ..WorldConfig::default()
    };
    let world = generate_world::<f64>(1, &cfg_w).unwrap();
    let start = Vec3d::new(1.0, 3.0, 3.0);
    let goal = Vec3d::new(18.0, 3.0, 3.0);
    let mut cfg = PlannerConfig::default();
    cfg.force_timeout_iters = vec![3, 4];
    let planner = Planner::new(&world, start, goal, cfg).unwrap();
    let mut state = planner.bootstrap(start);
    let mut log = Vec::new();
    for i in 0..8u64 {
        let before = state.committed.clone();
        let t_x0 = (i as f64 + 1.0) * 0.1;
        match planner.plan_iteration(t_x0, &mut state) {
            IterationOutcome::Continue(r) => {
                if r.status == IterationStatus::Committed {
                    // receding-horizon consistency: exact state handoff
                    assert_eq!(state.committed.states[0], before.states[r.x0_index]);
                }
                log.push((r.status, r.x0_index, r.failure_offset_after));
            }
            IterationOutcome::MissionFailed { reason } => panic!("unexpected failure: {reason}"),
        }
    }
    // iterations 3 and 4 time out: offsets become 1 then 2, X_0 moves one
    // state deeper each time, and iteration 5 recovers
    assert_eq!(log[3].0, IterationStatus::SkippedTimeout);
    assert_eq!(log[3].2, 1, "offset after first forced timeout");
    assert_eq!(log[4].0, IterationStatus::SkippedTimeout);
    assert_eq!(log[4].1, 2, "X_0 index during second forced timeout");
    assert_eq!(log[4].2, 2, "offset after second forced timeout");
    assert_eq!(log[5].0, IterationStatus::Committed);
    assert_eq!(log[5].1, 3, "recovery plans from one state deeper still");
    assert_eq!(log[5].2, 0, "offset resets after recovery");
    // full-mission sanity with the same injection
    let mut cfg = PlannerConfig::default();
    cfg.force_timeout_iters = vec![3, 4];
    let record = run_mission(&world, start, goal, cfg);
    assert!(record.success, "mission should recover: {:?}", record.failure_reason);
    println!(
        "criterion 9 PASS: forced timeouts at iterations 3, 4 produce offsets 1 then 2, \
         recovery resumes from the offset state and the mission completes"
    );
}
