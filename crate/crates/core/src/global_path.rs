//! Global grid path: shortest 26-connected path to the goal, then a re-plan
//! on a clearance-penalized cost map that pushes the path away from
//! obstacles where possible.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use thiserror::Error;

use crate::grid::{VoxelGrid, VoxelIdx};
use crate::real::{real, Real};
use crate::vec3::Vec3;

#[derive(Debug, Error, PartialEq)]
pub enum PathError {
    #[error("goal unreachable from start")]
    NoPath,
    #[error("start or goal cell occupied or out of bounds")]
    InvalidEndpoint,
    #[error("path has no cells")]
    EmptyPath,
}

/// Extra metric length accepted per meter of clearance deficit when pushing
/// the path away from obstacles.
pub const CLEARANCE_PENALTY_WEIGHT: f64 = 2.0;

/// 26-connected grid path with its metric length.
#[derive(Debug, Clone, PartialEq)]
pub struct GridPath<T> {
    pub cells: Vec<VoxelIdx>,
    pub cost: T,
}

/// Per-cell Euclidean distance (meters) to the nearest occupied cell center.
#[derive(Debug, Clone)]
pub struct DistanceField<T> {
    dims: [usize; 3],
    voxel_size: T,
    dist: Vec<T>,
}

impl<T: Real> DistanceField<T> {
    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    pub fn get(&self, idx: VoxelIdx) -> T {
        let i = (idx.x as usize * self.dims[1] + idx.y as usize) * self.dims[2] + idx.z as usize;
        self.dist[i]
    }
}

const NEIGHBORS_26: [[i64; 3]; 26] = {
    let mut out = [[0i64; 3]; 26];
    let mut n = 0;
    let mut dx = -1i64;
    while dx <= 1 {
        let mut dy = -1i64;
        while dy <= 1 {
            let mut dz = -1i64;
            while dz <= 1 {
                if dx != 0 || dy != 0 || dz != 0 {
                    out[n] = [dx, dy, dz];
                    n += 1;
                }
                dz += 1;
            }
            dy += 1;
        }
        dx += 1;
    }
    out
};

/// Metric length of a 26-connected path, computed canonically from the step
/// class counts so that equal step multisets always yield the identical
/// float regardless of traversal order.
pub fn path_metric_cost<T: Real>(cells: &[VoxelIdx], voxel_size: T) -> T {
    let mut counts = [0usize; 3];
    for w in cells.windows(2) {
        let d = (w[1].x - w[0].x).abs() + (w[1].y - w[0].y).abs() + (w[1].z - w[0].z).abs();
        debug_assert!((1..=3).contains(&d), "cells not 26-adjacent");
        counts[(d - 1) as usize] += 1;
    }
    let c1: T = real(counts[0] as f64);
    let c2: T = real(counts[1] as f64);
    let c3: T = real(counts[2] as f64);
    voxel_size * (c1 + c2 * real(std::f64::consts::SQRT_2) + c3 * real(3.0f64.sqrt()))
}

fn step_cost<T: Real>(delta_abs_sum: i64, voxel_size: T) -> T {
    match delta_abs_sum {
        1 => voxel_size,
        2 => voxel_size * real(std::f64::consts::SQRT_2),
        _ => voxel_size * real(3.0f64.sqrt()),
    }
}

struct HeapEntry<T> {
    f: T,
    g: T,
    cell: usize,
}

impl<T: Real> PartialEq for HeapEntry<T> {
    fn eq(&self, other: &Self) -> bool {
        self.f == other.f && self.g == other.g && self.cell == other.cell
    }
}
impl<T: Real> Eq for HeapEntry<T> {}
impl<T: Real> Ord for HeapEntry<T> {
    fn cmp(&self, other: &Self) -> Ordering {
        // reversed: BinaryHeap is a max-heap, we want smallest f first;
        // ties broken on g then cell index for determinism
        other
            .f
            .partial_cmp(&self.f)
            .unwrap()
            .then(other.g.partial_cmp(&self.g).unwrap())
            .then(other.cell.cmp(&self.cell))
    }
}
impl<T: Real> PartialOrd for HeapEntry<T> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

fn linear(dims: [usize; 3], idx: VoxelIdx) -> usize {
    (idx.x as usize * dims[1] + idx.y as usize) * dims[2] + idx.z as usize
}

fn unlinear(dims: [usize; 3], i: usize) -> VoxelIdx {
    let z = i % dims[2];
    let y = (i / dims[2]) % dims[1];
    let x = i / (dims[1] * dims[2]);
    VoxelIdx::new(x as i64, y as i64, z as i64)
}

/// A* over free cells with 26-connectivity and Euclidean edge weights.
/// `extra_cost(cell)` is added on arrival at each cell (zero for the plain
/// shortest path; clearance deficit for the pushed re-plan).
fn astar<T: Real>(
    grid: &VoxelGrid<T>,
    start: VoxelIdx,
    goal: VoxelIdx,
    extra_cost: impl Fn(VoxelIdx) -> T,
) -> Result<Vec<VoxelIdx>, PathError> {
    if !grid.is_free(start) || !grid.is_free(goal) {
        return Err(PathError::InvalidEndpoint);
    }
    let dims = grid.dims();
    let vs = grid.voxel_size();
    let n = dims[0] * dims[1] * dims[2];
    let goal_pos = grid.voxel_to_world(goal).unwrap();
    let heuristic = |idx: VoxelIdx| -> T {
        (grid.voxel_to_world(idx).unwrap() - goal_pos).norm()
    };

    let mut g_score = vec![T::infinity(); n];
    let mut parent = vec![usize::MAX; n];
    let mut closed = vec![false; n];
    let mut heap = BinaryHeap::new();

    let s = linear(dims, start);
    g_score[s] = T::zero();
    heap.push(HeapEntry { f: heuristic(start), g: T::zero(), cell: s });

    while let Some(HeapEntry { g, cell, .. }) = heap.pop() {
        if closed[cell] || g > g_score[cell] {
            continue;
        }
        closed[cell] = true;
        let idx = unlinear(dims, cell);
        if idx == goal {
            let mut cells = vec![idx];
            let mut cur = cell;
            while parent[cur] != usize::MAX {
                cur = parent[cur];
                cells.push(unlinear(dims, cur));
            }
            cells.reverse();
            return Ok(cells);
        }
        for d in NEIGHBORS_26 {
            let nb = VoxelIdx::new(idx.x + d[0], idx.y + d[1], idx.z + d[2]);
            if !grid.is_free(nb) {
                continue;
            }
            let ni = linear(dims, nb);
            if closed[ni] {
                continue;
            }
            let dsum = d[0].abs() + d[1].abs() + d[2].abs();
            let tentative = g + step_cost(dsum, vs) + extra_cost(nb);
            if tentative < g_score[ni] {
                g_score[ni] = tentative;
                parent[ni] = cell;
                heap.push(HeapEntry { f: tentative + heuristic(nb), g: tentative, cell: ni });
            }
        }
    }
    Err(PathError::NoPath)
}

/// Minimum-metric-length 26-connected path between free cells.
pub fn shortest_path<T: Real>(
    grid: &VoxelGrid<T>,
    start: VoxelIdx,
    goal: VoxelIdx,
) -> Result<GridPath<T>, PathError> {
    let cells = astar(grid, start, goal, |_| T::zero())?;
    let cost = path_metric_cost(&cells, grid.voxel_size());
    Ok(GridPath { cells, cost })
}

/// Squared-distance sentinel for cells with no occupied cell in sight.
const EDT_INF: f64 = 1e20;

/// One-dimensional squared distance transform (lower envelope of parabolas).
fn edt_1d<T: Real>(f: &[T], out: &mut [T]) {
    let n = f.len();
    let mut v = vec![0usize; n]; // parabola sites
    let mut z = vec![T::zero(); n + 1]; // boundaries
    let mut k = 0usize;
    v[0] = 0;
    z[0] = T::neg_infinity();
    z[1] = T::infinity();
    for q in 1..n {
        let fq = f[q] + real::<T>((q * q) as f64);
        loop {
            let p = v[k];
            let fp = f[p] + real::<T>((p * p) as f64);
            let s = (fq - fp) / (real::<T>(2.0) * real::<T>((q - p) as f64));
            if s <= z[k] {
                if k == 0 {
                    break;
                }
                k -= 1;
            } else {
                k += 1;
                v[k] = q;
                z[k] = s;
                z[k + 1] = T::infinity();
                break;
            }
        }
    }
    let mut k = 0usize;
    for q in 0..n {
        let qa: T = real(q as f64);
        while z[k + 1] < qa {
            k += 1;
        }
        let p = v[k];
        let d: T = qa - real(p as f64);
        out[q] = d * d + f[p];
    }
}

/// Exact Euclidean distance transform over cell centers. Occupied cells get
/// zero; an all-free grid yields a finite sentinel of twice the grid
/// diagonal.
pub fn distance_map<T: Real>(grid: &VoxelGrid<T>) -> DistanceField<T> {
    let dims = grid.dims();
    let [dx, dy, dz] = dims;
    let n = dx * dy * dz;
    let inf: T = real(EDT_INF);
    let mut d2 = vec![inf; n];
    for idx in grid.iter_occupied() {
        d2[linear(dims, idx)] = T::zero();
    }
    // pass along z (contiguous), then y, then x
    let mut buf_in = vec![T::zero(); dx.max(dy).max(dz)];
    let mut buf_out = vec![T::zero(); dx.max(dy).max(dz)];
    for x in 0..dx {
        for y in 0..dy {
            let base = (x * dy + y) * dz;
            buf_in[..dz].copy_from_slice(&d2[base..base + dz]);
            edt_1d(&buf_in[..dz], &mut buf_out[..dz]);
            d2[base..base + dz].copy_from_slice(&buf_out[..dz]);
        }
    }
    for x in 0..dx {
        for z in 0..dz {
            for y in 0..dy {
                buf_in[y] = d2[(x * dy + y) * dz + z];
            }
            edt_1d(&buf_in[..dy], &mut buf_out[..dy]);
            for y in 0..dy {
                d2[(x * dy + y) * dz + z] = buf_out[y];
            }
        }
    }
    for y in 0..dy {
        for z in 0..dz {
            for x in 0..dx {
                buf_in[x] = d2[(x * dy + y) * dz + z];
            }
            edt_1d(&buf_in[..dx], &mut buf_out[..dx]);
            for x in 0..dx {
                d2[(x * dy + y) * dz + z] = buf_out[x];
            }
        }
    }
    let vs = grid.voxel_size();
    let diag_sq: T = real((dx * dx + dy * dy + dz * dz) as f64);
    let sentinel = vs * diag_sq.sqrt() * real(2.0);
    let threshold: T = real(EDT_INF * 0.5);
    let dist = d2
        .into_iter()
        .map(|v| if v >= threshold { sentinel } else { vs * v.sqrt() })
        .collect();
    DistanceField { dims, voxel_size: vs, dist }
}

/// Clearance deficit of a cell: how far below `clearance` its obstacle
/// distance falls.
fn deficit<T: Real>(field: &DistanceField<T>, idx: VoxelIdx, clearance: T) -> T {
    (clearance - field.get(idx)).max(T::zero())
}

/// Metric length plus weighted clearance deficits over every cell of the
/// path (start included).
pub fn penalized_cost<T: Real>(
    path: &GridPath<T>,
    field: &DistanceField<T>,
    clearance: T,
) -> T {
    let w: T = real(CLEARANCE_PENALTY_WEIGHT);
    let penalty: T = path
        .cells
        .iter()
        .map(|&c| deficit(field, c, clearance))
        .fold(T::zero(), |acc, d| acc + d);
    path_metric_cost(&path.cells, field.voxel_size) + w * penalty
}

/// Re-plans the path on a cost map that charges `CLEARANCE_PENALTY_WEIGHT`
/// per meter of clearance deficit, trading extra length for distance from
/// obstacles where the map allows it. Endpoints are preserved and the
/// penalized cost never exceeds the input path's.
pub fn push_path<T: Real>(
    path: &GridPath<T>,
    grid: &VoxelGrid<T>,
    field: &DistanceField<T>,
    clearance: T,
) -> Result<GridPath<T>, PathError> {
    let (start, goal) = match (path.cells.first(), path.cells.last()) {
        (Some(&s), Some(&g)) => (s, g),
        _ => return Err(PathError::EmptyPath),
    };
    let w: T = real(CLEARANCE_PENALTY_WEIGHT);
    let cells = astar(grid, start, goal, |c| w * deficit(field, c, clearance))?;
    let cost = path_metric_cost(&cells, grid.voxel_size());
    Ok(GridPath { cells, cost })
}

/// Cell centers of the path in order, consecutive duplicates removed.
pub fn to_polyline<T: Real>(
    path: &GridPath<T>,
    grid: &VoxelGrid<T>,
) -> Result<Vec<Vec3<T>>, PathError> {
    if path.cells.is_empty() {
        return Err(PathError::EmptyPath);
    }
    let mut out: Vec<Vec3<T>> = Vec::with_capacity(path.cells.len());
    for &c in &path.cells {
        let p = grid.voxel_to_world(c).map_err(|_| PathError::InvalidEndpoint)?;
        if out.last() != Some(&p) {
            out.push(p);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn empty_grid(n: usize) -> VoxelGrid<f64> {
        VoxelGrid::new(Vec3::zero(), 0.3, [n, n, n])
    }

    /// Plain Dijkstra over the same move set; the independent cost oracle.
    fn dijkstra_cost(grid: &VoxelGrid<f64>, start: VoxelIdx, goal: VoxelIdx) -> Option<f64> {
        if !grid.is_free(start) || !grid.is_free(goal) {
            return None;
        }
        let dims = grid.dims();
        let n = dims[0] * dims[1] * dims[2];
        let mut dist = vec![f64::INFINITY; n];
        let mut steps: Vec<[usize; 3]> = vec![[0; 3]; n];
        let mut done = vec![false; n];
        dist[linear(dims, start)] = 0.0;
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
            done[best] = true;
            let idx = unlinear(dims, best);
            if idx == goal {
                let s = steps[best];
                return Some(
                    0.3 * (s[0] as f64
                        + s[1] as f64 * std::f64::consts::SQRT_2
                        + s[2] as f64 * 3.0f64.sqrt()),
                );
            }
            for d in NEIGHBORS_26 {
                let nb = VoxelIdx::new(idx.x + d[0], idx.y + d[1], idx.z + d[2]);
                if !grid.is_free(nb) {
                    continue;
                }
                let ni = linear(dims, nb);
                let cls = (d[0].abs() + d[1].abs() + d[2].abs()) as usize - 1;
                let nd = best_d + step_cost(cls as i64 + 1, 0.3);
                if nd < dist[ni] {
                    dist[ni] = nd;
                    let mut s = steps[best];
                    s[cls] += 1;
                    steps[ni] = s;
                }
            }
        }
    }

    #[test]
    fn single_cell_path_costs_zero() {
        let g = empty_grid(4);
        let p = shortest_path(&g, VoxelIdx::new(1, 1, 1), VoxelIdx::new(1, 1, 1)).unwrap();
        assert_eq!(p.cells.len(), 1);
        assert_eq!(p.cost, 0.0);
    }

    #[test]
    fn empty_grid_diagonal_chain_optimal() {
        let g = empty_grid(10);
        let p = shortest_path(&g, VoxelIdx::new(0, 0, 0), VoxelIdx::new(9, 9, 9)).unwrap();
        let expected = 9.0 * 3.0f64.sqrt() * 0.3;
        assert!((p.cost - expected).abs() < 1e-12, "{} vs {expected}", p.cost);
        assert_eq!(p.cells.len(), 10);
    }

    #[test]
    fn enclosed_goal_is_no_path() {
        let mut g = empty_grid(7);
        // shell around (3,3,3)
        for dx in -1..=1i64 {
            for dy in -1..=1i64 {
                for dz in -1..=1i64 {
                    if dx != 0 || dy != 0 || dz != 0 {
                        g.set_occupied(VoxelIdx::new(3 + dx, 3 + dy, 3 + dz), true);
                    }
                }
            }
        }
        assert_eq!(
            shortest_path(&g, VoxelIdx::new(0, 0, 0), VoxelIdx::new(3, 3, 3)),
            Err(PathError::NoPath)
        );
    }

    #[test]
    fn occupied_endpoint_rejected() {
        let mut g = empty_grid(4);
        g.set_occupied(VoxelIdx::new(0, 0, 0), true);
        assert_eq!(
            shortest_path(&g, VoxelIdx::new(0, 0, 0), VoxelIdx::new(2, 2, 2)),
            Err(PathError::InvalidEndpoint)
        );
    }

    #[test]
    fn astar_matches_dijkstra_on_random_grids() {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        for trial in 0..12 {
            let mut g = empty_grid(8);
            for x in 0..8i64 {
                for y in 0..8i64 {
                    for z in 0..8i64 {
                        if rng.gen::<f64>() < 0.2 {
                            g.set_occupied(VoxelIdx::new(x, y, z), true);
                        }
                    }
                }
            }
            let start = VoxelIdx::new(0, 0, 0);
            let goal = VoxelIdx::new(7, 7, 7);
            g.set_occupied(start, false);
            g.set_occupied(goal, false);
            let oracle = dijkstra_cost(&g, start, goal);
            match shortest_path(&g, start, goal) {
                Ok(p) => {
                    let oc = oracle.expect("oracle disagrees on reachability");
                    assert_eq!(p.cost, oc, "trial {trial}: cost mismatch");
                }
                Err(PathError::NoPath) => assert!(oracle.is_none(), "trial {trial}"),
                Err(e) => panic!("unexpected: {e:?}"),
            }
        }
    }

    #[test]
    fn distance_map_single_obstacle_neighbors() {
        let mut g = empty_grid(5);
        g.set_occupied(VoxelIdx::new(2, 2, 2), true);
        let f = distance_map(&g);
        assert_eq!(f.get(VoxelIdx::new(2, 2, 2)), 0.0);
        for d in [[1i64, 0, 0], [-1, 0, 0], [0, 1, 0], [0, -1, 0], [0, 0, 1], [0, 0, -1]] {
            let v = f.get(VoxelIdx::new(2 + d[0], 2 + d[1], 2 + d[2]));
            assert!((v - 0.3).abs() < 1e-12, "{v}");
        }
        let diag = f.get(VoxelIdx::new(3, 3, 3));
        assert!((diag - 0.3 * 3.0f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn distance_map_full_and_empty() {
        let mut g = empty_grid(3);
        for x in 0..3i64 {
            for y in 0..3i64 {
                for z in 0..3i64 {
                    g.set_occupied(VoxelIdx::new(x, y, z), true);
                }
            }
        }
        let f = distance_map(&g);
        for x in 0..3i64 {
            assert_eq!(f.get(VoxelIdx::new(x, 1, 1)), 0.0);
        }

        let g = empty_grid(3);
        let f = distance_map(&g);
        let diag = 0.3 * (27.0f64).sqrt();
        for x in 0..3i64 {
            let v = f.get(VoxelIdx::new(x, 0, 2));
            assert!(v >= diag, "sentinel {v} below diagonal {diag}");
            assert!(v.is_finite());
        }
    }

    #[test]
    fn distance_map_matches_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..8 {
            let mut g = empty_grid(8);
            let mut occupied = Vec::new();
            for x in 0..8i64 {
                for y in 0..8i64 {
                    for z in 0..8i64 {
                        if rng.gen::<f64>() < 0.1 {
                            g.set_occupied(VoxelIdx::new(x, y, z), true);
                            occupied.push([x, y, z]);
                        }
                    }
                }
            }
            if occupied.is_empty() {
                continue;
            }
            let f = distance_map(&g);
            for x in 0..8i64 {
                for y in 0..8i64 {
                    for z in 0..8i64 {
                        let brute = occupied
                            .iter()
                            .map(|o| {
                                let dx = (o[0] - x) as f64;
                                let dy = (o[1] - y) as f64;
                                let dz = (o[2] - z) as f64;
                                0.3 * (dx * dx + dy * dy + dz * dz).sqrt()
                            })
                            .fold(f64::INFINITY, f64::min);
                        let got = f.get(VoxelIdx::new(x, y, z));
                        assert!((got - brute).abs() < 1e-9, "at ({x},{y},{z}): {got} vs {brute}");
                    }
                }
            }
        }
    }

    fn wall_corridor() -> VoxelGrid<f64> {
        // 20 x 7 x 1 corridor with a wall along y=0
        let mut g = VoxelGrid::new(Vec3::zero(), 0.3, [20, 7, 1]);
        for x in 0..20i64 {
            g.set_occupied(VoxelIdx::new(x, 0, 0), true);
        }
        g
    }

    #[test]
    fn push_path_gains_clearance_in_wide_corridor() {
        let g = wall_corridor();
        let field = distance_map(&g);
        let start = VoxelIdx::new(0, 1, 0);
        let goal = VoxelIdx::new(19, 1, 0);
        let direct = shortest_path(&g, start, goal).unwrap();
        let clearance = 0.4;
        let pushed = push_path(&direct, &g, &field, clearance).unwrap();
        assert_eq!(pushed.cells.first(), Some(&start));
        assert_eq!(pushed.cells.last(), Some(&goal));
        // interior of the pushed path reaches the clearance target
        for &c in &pushed.cells[2..pushed.cells.len() - 2] {
            assert!(field.get(c) >= clearance, "cell {c:?} at {}", field.get(c));
        }
        assert!(
            penalized_cost(&pushed, &field, clearance)
                <= penalized_cost(&direct, &field, clearance) + 1e-12
        );
    }

    #[test]
    fn push_path_zero_clearance_keeps_shortest_cost() {
        let g = wall_corridor();
        let field = distance_map(&g);
        let direct = shortest_path(&g, VoxelIdx::new(0, 3, 0), VoxelIdx::new(19, 3, 0)).unwrap();
        let pushed = push_path(&direct, &g, &field, 0.0).unwrap();
        assert_eq!(pushed.cost, direct.cost);
    }

    #[test]
    fn push_path_narrow_corridor_unchanged() {
        // 1-cell-wide free corridor: no room to push
        let mut g = VoxelGrid::new(Vec3::zero(), 0.3, [10, 3, 3]);
        for x in 0..10i64 {
            for y in 0..3i64 {
                for z in 0..3i64 {
                    if !(y == 1 && z == 1) {
                        g.set_occupied(VoxelIdx::new(x, y, z), true);
                    }
                }
            }
        }
        let field = distance_map(&g);
        let direct = shortest_path(&g, VoxelIdx::new(0, 1, 1), VoxelIdx::new(9, 1, 1)).unwrap();
        let pushed = push_path(&direct, &g, &field, 0.4).unwrap();
        assert_eq!(pushed.cells, direct.cells);
        assert!(
            penalized_cost(&pushed, &field, 0.4) <= penalized_cost(&direct, &field, 0.4) + 1e-12
        );
    }

    #[test]
    fn push_path_never_touches_occupied() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        for _ in 0..6 {
            let mut g = empty_grid(10);
            for x in 0..10i64 {
                for y in 0..10i64 {
                    for z in 0..10i64 {
                        if rng.gen::<f64>() < 0.15 {
                            g.set_occupied(VoxelIdx::new(x, y, z), true);
                        }
                    }
                }
            }
            let start = VoxelIdx::new(0, 0, 0);
            let goal = VoxelIdx::new(9, 9, 9);
            g.set_occupied(start, false);
            g.set_occupied(goal, false);
            let Ok(direct) = shortest_path(&g, start, goal) else { continue };
            let field = distance_map(&g);
            let pushed = push_path(&direct, &g, &field, 0.4).unwrap();
            for &c in &pushed.cells {
                assert!(g.is_free(c));
            }
        }
    }

    #[test]
    fn polyline_from_cells() {
        let g = empty_grid(5);
        let path = GridPath {
            cells: vec![VoxelIdx::new(0, 0, 0), VoxelIdx::new(1, 0, 0), VoxelIdx::new(2, 0, 0)],
            cost: 0.6,
        };
        let line = to_polyline(&path, &g).unwrap();
        assert_eq!(line.len(), 3);
        assert!((line[1] - line[0] - Vec3::new(0.3, 0.0, 0.0)).norm() < 1e-12);

        // L-shaped path keeps its corner
        let path = GridPath {
            cells: vec![VoxelIdx::new(0, 0, 0), VoxelIdx::new(1, 0, 0), VoxelIdx::new(1, 1, 0)],
            cost: 0.6,
        };
        assert_eq!(to_polyline(&path, &g).unwrap().len(), 3);

        let single = GridPath { cells: vec![VoxelIdx::new(2, 2, 2)], cost: 0.0 };
        assert_eq!(to_polyline(&single, &g).unwrap().len(), 1);

        let empty = GridPath::<f64> { cells: vec![], cost: 0.0 };
        assert_eq!(to_polyline(&empty, &g), Err(PathError::EmptyPath));
    }
}
