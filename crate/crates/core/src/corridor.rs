//! Safe corridors: convex decomposition of the reachable free space.
//!
//! Each planning step gets a set of axis-aligned box polyhedra grown
//! greedily from seed voxels inside the step's reachable region. Boxes keep
//! the safety audit voxel-exact and the optimizer constraints sparse; the
//! `Polyhedron` type carries general halfspaces so the decomposition can be
//! upgraded without touching the solver.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::global_path::distance_map;
use crate::grid::{TemporalOccupancyGrid, VoxelGrid, VoxelIdx};
use crate::real::{real, Real};
use crate::vec3::Vec3;

#[derive(Debug, Error, PartialEq)]
pub enum CorridorError {
    #[error("seed voxel is occupied")]
    SeedOccupied,
    #[error("no free voxel in region at step {step}")]
    NoFreeSpace { step: usize },
}

/// Fraction of a region's free voxels that the decomposition targets before
/// it stops adding polyhedra.
pub const COVERAGE_TARGET: f64 = 0.95;

/// One halfspace `normal . x <= offset`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Halfspace<T> {
    pub normal: Vec3<T>,
    pub offset: T,
}

/// Bounded convex region as an intersection of halfspaces.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Polyhedron<T> {
    pub halfspaces: Vec<Halfspace<T>>,
}

impl<T: Real> Polyhedron<T> {
    /// Closed-set membership with tolerance on every face.
    pub fn contains(&self, point: Vec3<T>, tol: T) -> bool {
        self.halfspaces
            .iter()
            .all(|h| h.normal.dot(point) <= h.offset + tol)
    }

    /// Largest violation of any face at `point` (<= 0 when inside).
    pub fn violation(&self, point: Vec3<T>) -> T {
        self.halfspaces
            .iter()
            .map(|h| h.normal.dot(point) - h.offset)
            .fold(T::neg_infinity(), T::max)
    }

    fn from_world_box(lo: Vec3<T>, hi: Vec3<T>) -> Self {
        let mut halfspaces = Vec::with_capacity(6);
        for axis in 0..3 {
            let mut n = Vec3::zero();
            n[axis] = T::one();
            halfspaces.push(Halfspace { normal: n, offset: hi[axis] });
            let mut n = Vec3::zero();
            n[axis] = -T::one();
            halfspaces.push(Halfspace { normal: n, offset: -lo[axis] });
        }
        Self { halfspaces }
    }
}

/// Set of polyhedra covering (part of) one step's free space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SafeCorridor<T> {
    pub polyhedra: Vec<Polyhedron<T>>,
}

/// One safe corridor per horizon step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TemporalSafeCorridor<T> {
    pub corridors: Vec<SafeCorridor<T>>,
    pub time_step: T,
}

pub const TSC_SCHEMA: &str = "tsc/v1";

#[derive(Debug, Serialize, Deserialize)]
struct TscFile<T> {
    schema: String,
    time_step: T,
    corridors: Vec<Vec<Vec<Halfspace<T>>>>,
}

impl<T: Real + Serialize + for<'de> Deserialize<'de>> TemporalSafeCorridor<T> {
    pub fn to_json(&self) -> String {
        let file = TscFile {
            schema: TSC_SCHEMA.to_string(),
            time_step: self.time_step,
            corridors: self
                .corridors
                .iter()
                .map(|c| c.polyhedra.iter().map(|p| p.halfspaces.clone()).collect())
                .collect(),
        };
        serde_json::to_string_pretty(&file).expect("tsc serialization")
    }

    pub fn from_json(s: &str) -> Result<Self, String> {
        let file: TscFile<T> = serde_json::from_str(s).map_err(|e| e.to_string())?;
        if file.schema != TSC_SCHEMA {
            return Err(format!("unsupported schema {:?}", file.schema));
        }
        Ok(Self {
            time_step: file.time_step,
            corridors: file
                .corridors
                .into_iter()
                .map(|c| SafeCorridor {
                    polyhedra: c.into_iter().map(|halfspaces| Polyhedron { halfspaces }).collect(),
                })
                .collect(),
        })
    }
}

/// Inclusive axis-aligned voxel index range; empty when `lo > hi` on any
/// axis.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct VoxelRange {
    pub lo: VoxelIdx,
    pub hi: VoxelIdx,
}

impl VoxelRange {
    pub fn is_empty(&self) -> bool {
        self.lo.x > self.hi.x || self.lo.y > self.hi.y || self.lo.z > self.hi.z
    }

    pub fn contains(&self, idx: VoxelIdx) -> bool {
        !self.is_empty()
            && idx.x >= self.lo.x
            && idx.x <= self.hi.x
            && idx.y >= self.lo.y
            && idx.y <= self.hi.y
            && idx.z >= self.lo.z
            && idx.z <= self.hi.z
    }

    pub fn contains_range(&self, other: &VoxelRange) -> bool {
        other.is_empty()
            || (self.contains(other.lo) && self.contains(other.hi))
    }

    pub fn dims(&self) -> [usize; 3] {
        if self.is_empty() {
            return [0, 0, 0];
        }
        [
            (self.hi.x - self.lo.x + 1) as usize,
            (self.hi.y - self.lo.y + 1) as usize,
            (self.hi.z - self.lo.z + 1) as usize,
        ]
    }

    pub fn iter(&self) -> impl Iterator<Item = VoxelIdx> + '_ {
        let r = *self;
        (r.lo.x..=r.hi.x).flat_map(move |x| {
            (r.lo.y..=r.hi.y)
                .flat_map(move |y| (r.lo.z..=r.hi.z).map(move |z| VoxelIdx::new(x, y, z)))
        })
    }
}

/// Voxel range covering the cube of half-extent `d_reach = v_max * k *
/// time_step` centered on the agent, clipped to the grid.
pub fn reachable_box<T: Real>(
    agent_pos: Vec3<T>,
    v_max: T,
    k: usize,
    time_step: T,
    grid: &VoxelGrid<T>,
) -> VoxelRange {
    assert!(k >= 1, "step index is 1-based");
    let d_reach = v_max * real(k as f64) * time_step;
    let dims = grid.dims();
    let vs = grid.voxel_size();
    let origin = grid.origin();
    let mut lo = [0i64; 3];
    let mut hi = [0i64; 3];
    for c in 0..3 {
        let a = ((agent_pos[c] - d_reach - origin[c]) / vs).floor();
        let b = ((agent_pos[c] + d_reach - origin[c]) / vs).floor();
        lo[c] = a.to_i64().unwrap_or(i64::MAX).max(0);
        hi[c] = b.to_i64().unwrap_or(i64::MIN).min(dims[c] as i64 - 1);
    }
    VoxelRange {
        lo: VoxelIdx::new(lo[0], lo[1], lo[2]),
        hi: VoxelIdx::new(hi[0], hi[1], hi[2]),
    }
}

/// Greedily grows an axis-aligned free box from `seed` inside `region`,
/// always extending the face that adds the most free voxels, and converts
/// the result to six halfspaces at the box's outer faces.
pub fn grow_box_polyhedron<T: Real>(
    grid: &VoxelGrid<T>,
    seed: VoxelIdx,
    region: &VoxelRange,
) -> Result<Polyhedron<T>, CorridorError> {
    let (lo, hi) = grow_box_cells(grid, seed, region)?;
    Ok(box_to_polyhedron(grid, lo, hi))
}

fn box_to_polyhedron<T: Real>(grid: &VoxelGrid<T>, lo: VoxelIdx, hi: VoxelIdx) -> Polyhedron<T> {
    let vs = grid.voxel_size();
    let origin = grid.origin();
    let lo_w = Vec3::new(
        origin.x + real::<T>(lo.x as f64) * vs,
        origin.y + real::<T>(lo.y as f64) * vs,
        origin.z + real::<T>(lo.z as f64) * vs,
    );
    let hi_w = Vec3::new(
        origin.x + real::<T>((hi.x + 1) as f64) * vs,
        origin.y + real::<T>((hi.y + 1) as f64) * vs,
        origin.z + real::<T>((hi.z + 1) as f64) * vs,
    );
    Polyhedron::from_world_box(lo_w, hi_w)
}

/// Box growth in index space; returns the inclusive cell bounds.
fn grow_box_cells<T: Real>(
    grid: &VoxelGrid<T>,
    seed: VoxelIdx,
    region: &VoxelRange,
) -> Result<(VoxelIdx, VoxelIdx), CorridorError> {
    if !region.contains(seed) || !grid.is_free(seed) {
        return Err(CorridorError::SeedOccupied);
    }
    let mut lo = seed;
    let mut hi = seed;
    loop {
        // candidate layers: (axis, direction)
        let mut best: Option<(usize, i64, i64)> = None; // axis, dir, gain
        for (axis, dir) in [(0, -1i64), (0, 1), (1, -1), (1, 1), (2, -1), (2, 1)] {
            let coord = if dir < 0 { lo.axis(axis) - 1 } else { hi.axis(axis) + 1 };
            let within = match axis {
                0 => coord >= region.lo.x && coord <= region.hi.x,
                1 => coord >= region.lo.y && coord <= region.hi.y,
                _ => coord >= region.lo.z && coord <= region.hi.z,
            };
            if !within {
                continue;
            }
            if !layer_free(grid, lo, hi, axis, coord) {
                continue;
            }
            let d = [
                (hi.x - lo.x + 1) as i64,
                (hi.y - lo.y + 1) as i64,
                (hi.z - lo.z + 1) as i64,
            ];
            let gain = match axis {
                0 => d[1] * d[2],
                1 => d[0] * d[2],
                _ => d[0] * d[1],
            };
            if best.map_or(true, |(_, _, g)| gain > g) {
                best = Some((axis, dir, gain));
            }
        }
        let Some((axis, dir, _)) = best else { break };
        match (axis, dir < 0) {
            (0, true) => lo.x -= 1,
            (0, false) => hi.x += 1,
            (1, true) => lo.y -= 1,
            (1, false) => hi.y += 1,
            (2, true) => lo.z -= 1,
            (2, false) => hi.z += 1,
            _ => unreachable!(),
        }
    }
    Ok((lo, hi))
}

/// Whether the one-cell-thick layer at `coord` along `axis` (spanning the
/// box's extent on the other axes) is entirely free.
fn layer_free<T: Real>(
    grid: &VoxelGrid<T>,
    lo: VoxelIdx,
    hi: VoxelIdx,
    axis: usize,
    coord: i64,
) -> bool {
    let (a_lo, a_hi, b_lo, b_hi) = match axis {
        0 => (lo.y, hi.y, lo.z, hi.z),
        1 => (lo.x, hi.x, lo.z, hi.z),
        _ => (lo.x, hi.x, lo.y, hi.y),
    };
    for a in a_lo..=a_hi {
        for b in b_lo..=b_hi {
            let idx = match axis {
                0 => VoxelIdx::new(coord, a, b),
                1 => VoxelIdx::new(a, coord, b),
                _ => VoxelIdx::new(a, b, coord),
            };
            if !grid.is_free(idx) {
                return false;
            }
        }
    }
    true
}

/// Decomposes the free voxels of `region` into box polyhedra: priority seeds
/// first (deduplicated, skipping covered or occupied ones), then repeatedly
/// the uncovered free voxel farthest from obstacles, until coverage reaches
/// [`COVERAGE_TARGET`] or `max_polyhedra` boxes exist.
pub fn generate_safe_corridor<T: Real>(
    grid: &VoxelGrid<T>,
    region: &VoxelRange,
    priority_seeds: &[VoxelIdx],
    max_polyhedra: usize,
) -> Result<SafeCorridor<T>, CorridorError> {
    let dims = region.dims();
    let total = dims[0] * dims[1] * dims[2];
    if total == 0 {
        return Err(CorridorError::NoFreeSpace { step: 0 });
    }
    let rlin = |idx: VoxelIdx| -> usize {
        (((idx.x - region.lo.x) as usize * dims[1]) + (idx.y - region.lo.y) as usize) * dims[2]
            + (idx.z - region.lo.z) as usize
    };
    let free: Vec<VoxelIdx> = region.iter().filter(|&c| grid.is_free(c)).collect();
    if free.is_empty() {
        return Err(CorridorError::NoFreeSpace { step: 0 });
    }
    let mut covered = vec![false; total];
    let mut covered_count = 0usize;
    let mut polyhedra = Vec::new();
    let mut boxes: Vec<(VoxelIdx, VoxelIdx)> = Vec::new();

    let grow_from = |seed: VoxelIdx,
                         covered: &mut Vec<bool>,
                         covered_count: &mut usize,
                         polyhedra: &mut Vec<Polyhedron<T>>,
                         boxes: &mut Vec<(VoxelIdx, VoxelIdx)>|
     -> Result<(), CorridorError> {
        let (lo, hi) = grow_box_cells(grid, seed, region)?;
        for x in lo.x..=hi.x {
            for y in lo.y..=hi.y {
                for z in lo.z..=hi.z {
                    let i = rlin(VoxelIdx::new(x, y, z));
                    if !covered[i] {
                        covered[i] = true;
                        *covered_count += 1;
                    }
                }
            }
        }
        polyhedra.push(box_to_polyhedron(grid, lo, hi));
        boxes.push((lo, hi));
        Ok(())
    };

    // priority seeds
    let mut seen = Vec::new();
    for &seed in priority_seeds {
        if polyhedra.len() >= max_polyhedra {
            break;
        }
        if seen.contains(&seed) || !region.contains(seed) || !grid.is_free(seed) {
            continue;
        }
        seen.push(seed);
        if covered[rlin(seed)] {
            continue;
        }
        grow_from(seed, &mut covered, &mut covered_count, &mut polyhedra, &mut boxes)?;
    }

    // distance-ordered fill of the remaining free space
    let target = (real::<T>(COVERAGE_TARGET) * real::<T>(free.len() as f64))
        .ceil()
        .to_usize()
        .unwrap_or(free.len());
    if covered_count < target && polyhedra.len() < max_polyhedra {
        let sub = region_subgrid(grid, region);
        let field = distance_map(&sub);
        while covered_count < target && polyhedra.len() < max_polyhedra {
            let mut best: Option<(T, VoxelIdx)> = None;
            for &c in &free {
                if covered[rlin(c)] {
                    continue;
                }
                let d = field.get(VoxelIdx::new(
                    c.x - region.lo.x,
                    c.y - region.lo.y,
                    c.z - region.lo.z,
                ));
                let better = match best {
                    None => true,
                    Some((bd, _)) => d > bd,
                };
                if better {
                    best = Some((d, c));
                }
            }
            let Some((_, seed)) = best else { break };
            grow_from(seed, &mut covered, &mut covered_count, &mut polyhedra, &mut boxes)?;
        }
    }

    Ok(SafeCorridor { polyhedra })
}

/// Copies the region into a standalone grid (origin shifted to the region's
/// corner) for local distance-field queries.
fn region_subgrid<T: Real>(grid: &VoxelGrid<T>, region: &VoxelRange) -> VoxelGrid<T> {
    let dims = region.dims();
    let vs = grid.voxel_size();
    let origin = grid.origin();
    let sub_origin = Vec3::new(
        origin.x + real::<T>(region.lo.x as f64) * vs,
        origin.y + real::<T>(region.lo.y as f64) * vs,
        origin.z + real::<T>(region.lo.z as f64) * vs,
    );
    let mut sub = VoxelGrid::new(sub_origin, vs, dims);
    for c in region.iter() {
        if grid.is_occupied(c) {
            sub.set_occupied(
                VoxelIdx::new(c.x - region.lo.x, c.y - region.lo.y, c.z - region.lo.z),
                true,
            );
        }
    }
    sub
}

/// Builds the temporal safe corridor: for each step `k` (1-based over the
/// TOG's grids) the step's reachable region is decomposed, seeded by the
/// agent's cell and the step's reference point cell.
pub fn generate_tsc<T: Real>(
    tog: &TemporalOccupancyGrid<T>,
    agent_pos: Vec3<T>,
    v_max: T,
    reference_points: &[Vec3<T>],
    max_polyhedra: usize,
) -> Result<TemporalSafeCorridor<T>, CorridorError> {
    assert!(!tog.is_empty(), "TOG must be nonempty");
    assert_eq!(
        reference_points.len(),
        tog.len(),
        "one reference point per TOG step"
    );
    let mut corridors = Vec::with_capacity(tog.len());
    for (i, grid) in tog.grids.iter().enumerate() {
        let k = i + 1;
        let region = reachable_box(agent_pos, v_max, k, tog.time_step, grid);
        let mut seeds = Vec::with_capacity(2);
        if let Ok(c) = grid.world_to_voxel(agent_pos) {
            seeds.push(c);
        }
        if let Ok(c) = grid.world_to_voxel(reference_points[i]) {
            seeds.push(c);
        }
        let corridor = generate_safe_corridor(grid, &region, &seeds, max_polyhedra)
            .map_err(|_| CorridorError::NoFreeSpace { step: k })?;
        corridors.push(corridor);
    }
    Ok(TemporalSafeCorridor { corridors, time_step: tog.time_step })
}

/// Closed-set point membership test with tolerance.
pub fn contains<T: Real>(poly: &Polyhedron<T>, point: Vec3<T>, tol: T) -> bool {
    poly.contains(point, tol)
}
