use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use tscmpc::corridor::{Halfspace, Polyhedron, SafeCorridor, TemporalSafeCorridor};
use tscmpc::dynamics::{AgentState, Limits};
use tscmpc::miqp::{build_qp, enumerate_oracle, Assignment, MpcProblem, Weights};
use tscmpc::qp::{solve_qp, QpOutcome};
use tscmpc::Vec3;

pub fn box_poly(lo: [f64; 3], hi: [f64; 3]) -> Polyhedron<f64> {
    let mut halfspaces = Vec::new();
    for axis in 0..3 {
        let mut n = Vec3::zero();
        n[axis] = 1.0;
        halfspaces.push(Halfspace { normal: n, offset: hi[axis] });
        let mut n = Vec3::zero();
        n[axis] = -1.0;
        halfspaces.push(Halfspace { normal: n, offset: -lo[axis] });
    }
    Polyhedron { halfspaces }
}

/// Randomized small MIQP instance: unit-scale geometry, occasional
/// unreachable corridors and occasional unbounded limits, zero and nonzero
/// weights across all state channels.
pub fn random_instance(rng: &mut ChaCha8Rng) -> MpcProblem<f64> {
    let n = rng.gen_range(1..=4usize);
    let h = 0.1;
    let x0 = AgentState {
        p: Vec3::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)),
        v: Vec3::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)),
        a: Vec3::new(rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0)),
    };
    let mut refs = Vec::with_capacity(n + 1);
    let mut ref_p = x0.p;
    for _ in 0..=n {
        refs.push(AgentState::at_rest(ref_p));
        ref_p = ref_p
            + Vec3::new(
                rng.gen_range(-0.3..0.5),
                rng.gen_range(-0.3..0.3),
                rng.gen_range(-0.3..0.3),
            );
    }

    // unreachable ("far") corridors exercise the infeasible path; they are
    // only generated alongside finite limits, since unbounded jerk would
    // make 50-meter jumps optimal and the resulting solutions are scaled
    // far outside anything the planner can produce
    let unbounded = rng.gen_bool(0.3);
    let mut corridors = Vec::with_capacity(n);
    for k in 1..=n {
        let p_k = rng.gen_range(1..=3usize);
        let far = !unbounded && rng.gen_bool(0.12);
        let polyhedra = (0..p_k)
            .map(|_| {
                let mut center = refs[k].p
                    + Vec3::new(
                        rng.gen_range(-0.6..0.6),
                        rng.gen_range(-0.6..0.6),
                        rng.gen_range(-0.6..0.6),
                    );
                if far {
                    center = center + Vec3::new(50.0, 50.0, 50.0);
                }
                let half = [
                    rng.gen_range(0.4..1.4),
                    rng.gen_range(0.4..1.4),
                    rng.gen_range(0.4..1.4),
                ];
                box_poly(
                    [center.x - half[0], center.y - half[1], center.z - half[2]],
                    [center.x + half[0], center.y + half[1], center.z + half[2]],
                )
            })
            .collect();
        corridors.push(SafeCorridor { polyhedra });
    }

    let limits = if unbounded {
        Limits::unbounded()
    } else {
        let a_xy = rng.gen_range(5.0..25.0);
        let a_z = rng.gen_range(4.0..15.0);
        let j = rng.gen_range(30.0..120.0);
        Limits {
            a_x_max: a_xy,
            a_y_max: a_xy,
            a_z_max: a_z,
            a_z_min: -a_z,
            j_x_max: j,
            j_y_max: j,
            j_z_max: j,
            v_max: 4.0,
            d_lin: Vec3::new(
                rng.gen_range(0.0..2.0),
                rng.gen_range(0.0..2.0),
                rng.gen_range(0.0..2.0),
            ),
        }
    };

    let wpos = rng.gen_range(0.0..8.0);
    let wvel = if rng.gen_bool(0.5) { 0.0 } else { rng.gen_range(0.0..0.5) };
    let weights = Weights {
        r_x: [wpos, wpos, wpos, wvel, wvel, wvel, 0.0, 0.0, 0.0],
        r_u: [rng.gen_range(0.001..0.1); 3],
        r_n: [rng.gen_range(1.0..60.0), rng.gen_range(1.0..60.0), rng.gen_range(1.0..60.0), 0.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    };

    MpcProblem {
        x0,
        refs,
        tsc: TemporalSafeCorridor { corridors, time_step: h },
        limits,
        weights,
        h,
        n,
    }
}

/// Deterministic RNG for test data.
pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}


fn main() {
    let mut generator = rng(2024);
    for i in 0..200 {
        let problem = random_instance(&mut generator);
        if i == 35 {
            // p_1 is fixed by the dynamics; check membership directly
            let p1 = problem.x0.p + problem.x0.v * problem.h;
            for (pi, poly) in problem.tsc.corridors[0].polyhedra.iter().enumerate() {
                println!("p1 violation vs corridor-1 poly {pi}: {:.4}", poly.violation(p1));
            }
            let p2 = p1 + (problem.x0.v + (problem.x0.a) * problem.h) * problem.h;
            for (pi, poly) in problem.tsc.corridors[1].polyhedra.iter().enumerate() {
                println!("p2 violation vs corridor-2 poly {pi}: {:.4}", poly.violation(p2));
            }
        }
        if let Err(e) = enumerate_oracle(&problem) {
            println!("instance {i}: {e}");
            println!("N = {} limits unbounded: {} jmax {}", problem.n, problem.limits.j_x_max.is_infinite(), problem.limits.j_x_max);
            println!("x0 {:?}", problem.x0);
            for (k, c) in problem.tsc.corridors.iter().enumerate() {
                let far = c.polyhedra.iter().any(|p| p.halfspaces[0].offset > 20.0);
                println!("  corridor {}: P={} far={}", k + 1, c.polyhedra.len(), far);
            }
            let sizes: Vec<usize> = problem.tsc.corridors.iter().map(|c| c.polyhedra.len()).collect();
            let mut chosen = vec![0usize; problem.n];
            'outer: loop {
                let qp = build_qp(&problem, &Assignment { chosen: chosen.clone() }).unwrap();
                match solve_qp(&qp, 1e-8) {
                    Ok(QpOutcome::Solved(s)) => println!("  {:?} solved obj {:.4} it {}", chosen, s.objective, s.iterations),
                    Ok(QpOutcome::Infeasible(_)) => println!("  {:?} infeasible", chosen),
                    Ok(QpOutcome::Unbounded) => println!("  {:?} unbounded", chosen),
                    Err(e) => println!("  {:?} ERROR {e}", chosen),
                }
                let mut pos = problem.n;
                loop {
                    if pos == 0 { break 'outer; }
                    pos -= 1;
                    chosen[pos] += 1;
                    if chosen[pos] < sizes[pos] { break; }
                    chosen[pos] = 0;
                    if pos == 0 { break 'outer; }
                }
            }
            return;
        }
    }
    println!("all instances pass");
}
