//! Shared helpers and independent oracles for the integration suites.
//!
//! The oracles here deliberately avoid the library's solver/search paths:
//! Dijkstra re-derives shortest-path costs, and the MIQP instances are
//! generated from scratch so the enumeration oracle and branch-and-bound
//! can be cross-checked on identical inputs.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use tscmpc::corridor::{Halfspace, Polyhedron, SafeCorridor, TemporalSafeCorridor};
use tscmpc::dynamics::{AgentState, Limits};
use tscmpc::grid::{VoxelGrid, VoxelIdx};
use tscmpc::miqp::{MpcProblem, Weights};
use tscmpc::Vec3;

/// Plain Dijkstra over the 26-connected free-cell graph with Euclidean edge
/// weights; returns the canonical metric cost (step-class counts) so exact
/// float ties with the planner are meaningful.
pub fn dijkstra_cost(grid: &VoxelGrid<f64>, start: VoxelIdx, goal: VoxelIdx) -> Option<f64> {
    if !grid.is_free(start) || !grid.is_free(goal) {
        return None;
    }
    let dims = grid.dims();
    let n = dims[0] * dims[1] * dims[2];
    let lin = |c: VoxelIdx| -> usize {
        (c.x as usize * dims[1] + c.y as usize) * dims[2] + c.z as usize
    };
    let unlin = |i: usize| -> VoxelIdx {
        VoxelIdx::new(
            (i / (dims[1] * dims[2])) as i64,
            ((i / dims[2]) % dims[1]) as i64,
            (i % dims[2]) as i64,
        )
    };
    let vs = grid.voxel_size();
    let mut dist = vec![f64::INFINITY; n];
    let mut steps = vec![[0usize; 3]; n];
    let mut done = vec![false; n];
    dist[lin(start)] = 0.0;
    loop {
        let mut best = usize::MAX;
        let mut best_d = f64::INFINITY;
        for i in 0..n {
            if !done[i] && dist[i] < best_d {
                best_d = dist[i];
                best = i;
            }
        }
        if best == usize::MAX {
            return None;
        }
        if unlin(best) == goal {
            let s = steps[best];
            return Some(
                vs * (s[0] as f64
                    + s[1] as f64 * std::f64::consts::SQRT_2
                    + s[2] as f64 * 3.0f64.sqrt()),
            );
        }
        done[best] = true;
        let at = unlin(best);
        for dx in -1i64..=1 {
            for dy in -1i64..=1 {
                for dz in -1i64..=1 {
                    if dx == 0 && dy == 0 && dz == 0 {
                        continue;
                    }
                    let nb = VoxelIdx::new(at.x + dx, at.y + dy, at.z + dz);
                    if !grid.is_free(nb) {
                        continue;
                    }
                    let cls = (dx.abs() + dy.abs() + dz.abs()) as usize;
                    let w = match cls {
                        1 => vs,
                        2 => vs * std::f64::consts::SQRT_2,
                        _ => vs * 3.0f64.sqrt(),
                    };
                    let ni = lin(nb);
                    let nd = best_d + w;
                    if nd < dist[ni] {
                        dist[ni] = nd;
                        let mut sc = steps[best];
                        sc[cls - 1] += 1;
                        steps[ni] = sc;
                    }
                }
            }
        }
    }
}

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
