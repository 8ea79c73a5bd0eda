//! Voxel occupancy grids and temporal occupancy grids.
//!
//! A temporal occupancy grid (TOG) is a sequence of grids, one per planning
//! interval; grid `k` marks every voxel any obstacle touches at any time in
//! `[start_time + k*time_step, start_time + (k+1)*time_step]`. Moving
//! obstacles are rasterized by sweeping: each sampling sub-interval marks the
//! axis-aligned hull of the obstacle's extreme poses, which over-approximates
//! the swept volume for straight-line inter-sample motion.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::real::{real, Real};
use crate::vec3::Vec3;
use crate::world::{DynamicObstacle, ObstacleShape, World};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Axis {
    X,
    Y,
    Z,
}

impl std::fmt::Display for Axis {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Axis::X => write!(f, "x"),
            Axis::Y => write!(f, "y"),
            Axis::Z => write!(f, "z"),
        }
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum GridError {
    #[error("point outside grid on axis {0}")]
    OutOfBounds(Axis),
}

/// Integer voxel coordinates. Signed so that out-of-grid arithmetic stays
/// representable before bounds checks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct VoxelIdx {
    pub x: i64,
    pub y: i64,
    pub z: i64,
}

impl VoxelIdx {
    pub fn new(x: i64, y: i64, z: i64) -> Self {
        Self { x, y, z }
    }

    pub fn to_array(self) -> [i64; 3] {
        [self.x, self.y, self.z]
    }

    pub fn axis(self, i: usize) -> i64 {
        match i {
            0 => self.x,
            1 => self.y,
            _ => self.z,
        }
    }
}

/// Dense boolean occupancy grid over a regular cube partition of space.
#[derive(Debug, Clone, PartialEq)]
pub struct VoxelGrid<T> {
    origin: Vec3<T>,
    voxel_size: T,
    dims: [usize; 3],
    occupancy: Vec<bool>,
}

impl<T: Real> VoxelGrid<T> {
    pub fn new(origin: Vec3<T>, voxel_size: T, dims: [usize; 3]) -> Self {
        assert!(voxel_size > T::zero(), "voxel_size must be > 0");
        assert!(dims.iter().all(|&d| d >= 1), "dims components must be >= 1");
        Self {
            origin,
            voxel_size,
            dims,
            occupancy: vec![false; dims[0] * dims[1] * dims[2]],
        }
    }

    /// Grid covering `[0, extent]` with `dims = ceil(extent / voxel_size)`.
    pub fn covering(extent: Vec3<T>, voxel_size: T) -> Self {
        let dims = [
            (extent.x / voxel_size).ceil().to_usize().unwrap().max(1),
            (extent.y / voxel_size).ceil().to_usize().unwrap().max(1),
            (extent.z / voxel_size).ceil().to_usize().unwrap().max(1),
        ];
        Self::new(Vec3::zero(), voxel_size, dims)
    }

    pub fn origin(&self) -> Vec3<T> {
        self.origin
    }

    pub fn voxel_size(&self) -> T {
        self.voxel_size
    }

    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    pub fn len(&self) -> usize {
        self.occupancy.len()
    }

    pub fn is_empty(&self) -> bool {
        self.occupancy.is_empty()
    }

    fn linear(&self, idx: VoxelIdx) -> Option<usize> {
        if !self.in_bounds(idx) {
            return None;
        }
        Some(
            (idx.x as usize * self.dims[1] + idx.y as usize) * self.dims[2] + idx.z as usize,
        )
    }

    pub fn in_bounds(&self, idx: VoxelIdx) -> bool {
        idx.x >= 0
            && idx.y >= 0
            && idx.z >= 0
            && (idx.x as usize) < self.dims[0]
            && (idx.y as usize) < self.dims[1]
            && (idx.z as usize) < self.dims[2]
    }

    pub fn is_occupied(&self, idx: VoxelIdx) -> bool {
        match self.linear(idx) {
            Some(i) => self.occupancy[i],
            None => false,
        }
    }

    pub fn is_free(&self, idx: VoxelIdx) -> bool {
        matches!(self.linear(idx), Some(i) if !self.occupancy[i])
    }

    pub fn set_occupied(&mut self, idx: VoxelIdx, value: bool) {
        if let Some(i) = self.linear(idx) {
            self.occupancy[i] = value;
        }
    }

    pub fn count_occupied(&self) -> usize {
        self.occupancy.iter().filter(|&&o| o).count()
    }

    /// Voxel containing the point, or the offending axis if outside the grid.
    pub fn world_to_voxel(&self, point: Vec3<T>) -> Result<VoxelIdx, GridError> {
        let mut out = [0i64; 3];
        for (c, axis) in [(0, Axis::X), (1, Axis::Y), (2, Axis::Z)] {
            let rel = (point[c] - self.origin[c]) / self.voxel_size;
            let i = rel.floor();
            let i = i.to_i64().ok_or(GridError::OutOfBounds(axis))?;
            if i < 0 || i as usize >= self.dims[c] {
                return Err(GridError::OutOfBounds(axis));
            }
            out[c] = i;
        }
        Ok(VoxelIdx::new(out[0], out[1], out[2]))
    }

    /// Center of the voxel.
    pub fn voxel_to_world(&self, idx: VoxelIdx) -> Result<Vec3<T>, GridError> {
        if !self.in_bounds(idx) {
            let axis = if idx.x < 0 || idx.x as usize >= self.dims[0] {
                Axis::X
            } else if idx.y < 0 || idx.y as usize >= self.dims[1] {
                Axis::Y
            } else {
                Axis::Z
            };
            return Err(GridError::OutOfBounds(axis));
        }
        let half = real::<T>(0.5);
        Ok(Vec3::new(
            self.origin.x + (real::<T>(idx.x as f64) + half) * self.voxel_size,
            self.origin.y + (real::<T>(idx.y as f64) + half) * self.voxel_size,
            self.origin.z + (real::<T>(idx.z as f64) + half) * self.voxel_size,
        ))
    }

    pub fn iter_occupied(&self) -> impl Iterator<Item = VoxelIdx> + '_ {
        let [_, dy, dz] = self.dims;
        self.occupancy.iter().enumerate().filter_map(move |(i, &o)| {
            o.then(|| {
                let z = i % dz;
                let y = (i / dz) % dy;
                let x = i / (dy * dz);
                VoxelIdx::new(x as i64, y as i64, z as i64)
            })
        })
    }

    /// Marks every voxel touched by the closed world-space box `[lo, hi]`,
    /// clipped to the grid.
    pub fn mark_box(&mut self, lo: Vec3<T>, hi: Vec3<T>) {
        self.mark_box_dilated(lo, hi, 0);
    }

    /// Like [`mark_box`](Self::mark_box) but widens the touched index range
    /// by `pad` cells per side. The unpadded range is clipped to the grid
    /// first, so the result is bit-identical to marking the box and then
    /// dilating the grid.
    pub fn mark_box_dilated(&mut self, lo: Vec3<T>, hi: Vec3<T>, pad: i64) {
        let mut lo_i = [0i64; 3];
        let mut hi_i = [0i64; 3];
        for c in 0..3 {
            let a = ((lo[c] - self.origin[c]) / self.voxel_size).floor();
            let b = ((hi[c] - self.origin[c]) / self.voxel_size).floor();
            let a = a.to_i64().unwrap_or(i64::MAX).max(0);
            let b = b.to_i64().unwrap_or(i64::MIN).min(self.dims[c] as i64 - 1);
            if a > b {
                return;
            }
            lo_i[c] = (a - pad).max(0);
            hi_i[c] = (b + pad).min(self.dims[c] as i64 - 1);
        }
        for x in lo_i[0]..=hi_i[0] {
            for y in lo_i[1]..=hi_i[1] {
                let base = (x as usize * self.dims[1] + y as usize) * self.dims[2];
                for z in lo_i[2]..=hi_i[2] {
                    self.occupancy[base + z as usize] = true;
                }
            }
        }
    }

    /// Text dump: `dims X Y Z voxel S origin OX OY OZ` header then one
    /// `x y z` line per occupied voxel in lexicographic order.
    pub fn dump_text(&self) -> String {
        let mut out = format!(
            "dims {} {} {} voxel {} origin {} {} {}\n",
            self.dims[0],
            self.dims[1],
            self.dims[2],
            self.voxel_size,
            self.origin.x,
            self.origin.y,
            self.origin.z
        );
        // storage order is x-major with z fastest, which is already
        // lexicographic in (x, y, z)
        for idx in self.iter_occupied() {
            out.push_str(&format!("{} {} {}\n", idx.x, idx.y, idx.z));
        }
        out
    }
}

/// Minkowski dilation of the occupied set with a cube of half-extent
/// `radius_voxels` (Chebyshev ball), clipped at grid borders.
pub fn inflate<T: Real>(grid: &VoxelGrid<T>, radius_voxels: usize) -> VoxelGrid<T> {
    if radius_voxels == 0 {
        return grid.clone();
    }
    let [dx, dy, dz] = grid.dims;
    let r = radius_voxels as i64;
    // separable: dilate along each axis in turn
    let mut cur = grid.occupancy.clone();
    let strides = [dy * dz, dz, 1usize];
    let lens = [dx, dy, dz];
    for axis in 0..3 {
        let mut next = vec![false; cur.len()];
        let n = lens[axis] as i64;
        let stride = strides[axis];
        // iterate all cells; for each occupied cell smear +-r along the axis
        for x in 0..dx {
            for y in 0..dy {
                for z in 0..dz {
                    let i = (x * dy + y) * dz + z;
                    if !cur[i] {
                        continue;
                    }
                    let pos = [x as i64, y as i64, z as i64][axis];
                    let lo = (pos - r).max(0);
                    let hi = (pos + r).min(n - 1);
                    let base = i - pos as usize * stride;
                    for k in lo..=hi {
                        next[base + k as usize * stride] = true;
                    }
                }
            }
        }
        cur = next;
    }
    let mut out = grid.clone();
    out.occupancy = cur;
    out
}

/// Marks the footprint of an obstacle shape at a single pose (its cube's min
/// corner at `pose`), clipped to the grid. Cell size equals the grid's voxel
/// size; a voxel is marked if the cell's closed box touches it.
pub fn rasterize_instant<T: Real>(grid: &mut VoxelGrid<T>, shape: &ObstacleShape, pose: Vec3<T>) {
    rasterize_pose_pair(grid, shape, pose, pose);
}

/// Marks every voxel touched by the hull of the shape's boxes at two poses.
/// For motion that is straight between the poses this covers the entire
/// swept volume.
pub fn rasterize_pose_pair<T: Real>(
    grid: &mut VoxelGrid<T>,
    shape: &ObstacleShape,
    pose_a: Vec3<T>,
    pose_b: Vec3<T>,
) {
    let vs = grid.voxel_size();
    let lo_pose = pose_a.min(pose_b);
    let hi_pose = pose_a.max(pose_b);
    for &[x, y, z] in &shape.cells {
        let off = Vec3::from_f64(x as f64, y as f64, z as f64) * vs;
        let lo = lo_pose + off;
        let hi = hi_pose + off + Vec3::splat(vs);
        grid.mark_box(lo, hi);
    }
}

/// Sweeps a moving obstacle over `[t0, t1]`, sampling the pose every
/// `dt_sample` (both endpoints included) and marking the hull of each
/// consecutive pose pair. Never clears cells; out-of-grid parts are clipped.
pub fn rasterize_swept_obstacle<T: Real>(
    grid: &mut VoxelGrid<T>,
    shape: &ObstacleShape,
    pose_fn: impl Fn(T) -> Vec3<T>,
    t0: T,
    t1: T,
    dt_sample: T,
) {
    assert!(t1 > t0, "t1 must be > t0");
    assert!(dt_sample > T::zero(), "dt_sample must be > 0");
    let mut prev = pose_fn(t0);
    let mut k = 1usize;
    loop {
        let t = t0 + real::<T>(k as f64) * dt_sample;
        let t = if t >= t1 { t1 } else { t };
        let cur = pose_fn(t);
        rasterize_pose_pair(grid, shape, prev, cur);
        if t >= t1 {
            break;
        }
        prev = cur;
        k += 1;
    }
}

/// Sequence of occupancy grids covering consecutive time intervals.
#[derive(Debug, Clone, PartialEq)]
pub struct TemporalOccupancyGrid<T> {
    pub grids: Vec<VoxelGrid<T>>,
    pub time_step: T,
    pub start_time: T,
}

impl<T: Real> TemporalOccupancyGrid<T> {
    pub fn len(&self) -> usize {
        self.grids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grids.is_empty()
    }
}

/// Number of sweep samples per TOG interval.
const SWEEP_SUBDIVISIONS: usize = 8;

/// Builds the temporal occupancy grid for `num_steps` intervals of
/// `time_step` starting at `t_now`: per interval, static footprints plus
/// swept dynamic footprints, inflated by one voxel.
///
/// Dynamic sweeps subdivide each interval and use the exact extreme poses of
/// the sinusoidal motion on each sub-interval, so the marked set contains the
/// true footprint at every instant of the interval.
pub fn build_tog<T: Real>(
    world: &World<T>,
    t_now: T,
    num_steps: usize,
    time_step: T,
) -> TemporalOccupancyGrid<T> {
    assert!(num_steps >= 1, "num_steps must be >= 1");
    let builder = TogBuilder::new(world);
    builder.build(t_now, num_steps, time_step)
}

/// Reusable TOG builder: the static (inflated) layer is rasterized once and
/// cloned into every interval, then dynamic sweeps are marked pre-dilated.
/// Dilation distributes over union, so the result is identical to inflating
/// the combined raw grid.
pub struct TogBuilder<'w, T> {
    world: &'w World<T>,
    static_inflated: VoxelGrid<T>,
}

impl<'w, T: Real> TogBuilder<'w, T> {
    pub fn new(world: &'w World<T>) -> Self {
        let mut grid = VoxelGrid::covering(world.extent, world.voxel_size);
        for ob in &world.static_obstacles {
            rasterize_instant(&mut grid, &ob.shape, ob.anchor);
        }
        let static_inflated = inflate(&grid, 1);
        Self { world, static_inflated }
    }

    pub fn grid_template(&self) -> &VoxelGrid<T> {
        &self.static_inflated
    }

    pub fn build(&self, t_now: T, num_steps: usize, time_step: T) -> TemporalOccupancyGrid<T> {
        let grids = (0..num_steps)
            .map(|k| {
                let t_a = t_now + real::<T>(k as f64) * time_step;
                let t_b = t_now + real::<T>((k + 1) as f64) * time_step;
                let mut grid = self.static_inflated.clone();
                for ob in &self.world.dynamic_obstacles {
                    sweep_dynamic_inflated(&mut grid, ob, t_a, t_b);
                }
                grid
            })
            .collect();
        TemporalOccupancyGrid { grids, time_step, start_time: t_now }
    }
}

/// Marks the swept footprint of one dynamic obstacle over `[t_a, t_b]`,
/// already dilated by one voxel (the box is padded by a voxel on each side).
fn sweep_dynamic_inflated<T: Real>(
    grid: &mut VoxelGrid<T>,
    ob: &DynamicObstacle<T>,
    t_a: T,
    t_b: T,
) {
    if ob.shape.is_empty() {
        return;
    }
    let vs = grid.voxel_size();
    let dt = (t_b - t_a) / real(SWEEP_SUBDIVISIONS as f64);
    for s in 0..SWEEP_SUBDIVISIONS {
        let sa = t_a + real::<T>(s as f64) * dt;
        let sb = if s + 1 == SWEEP_SUBDIVISIONS {
            t_b
        } else {
            t_a + real::<T>((s + 1) as f64) * dt
        };
        let (pose_lo, pose_hi) = ob.position_extremes(sa, sb);
        let lo_pose = pose_lo.min(pose_hi);
        let hi_pose = pose_lo.max(pose_hi);
        for &[x, y, z] in &ob.shape.cells {
            let off = Vec3::from_f64(x as f64, y as f64, z as f64) * vs;
            let lo = lo_pose + off;
            let hi = hi_pose + off + Vec3::splat(vs);
            grid.mark_box_dilated(lo, hi, 1);
        }
    }
}

/// Reference TOG construction following the definition directly: raw static
/// plus swept dynamic footprints unioned first, inflation applied after.
/// Used to validate the production builder; the two agree bit for bit.
pub fn build_tog_reference<T: Real>(
    world: &World<T>,
    t_now: T,
    num_steps: usize,
    time_step: T,
) -> TemporalOccupancyGrid<T> {
    assert!(num_steps >= 1);
    let grids = (0..num_steps)
        .map(|k| {
            let t_a = t_now + real::<T>(k as f64) * time_step;
            let t_b = t_now + real::<T>((k + 1) as f64) * time_step;
            let mut grid = VoxelGrid::covering(world.extent, world.voxel_size);
            for ob in &world.static_obstacles {
                rasterize_instant(&mut grid, &ob.shape, ob.anchor);
            }
            for ob in &world.dynamic_obstacles {
                if ob.shape.is_empty() {
                    continue;
                }
                let dt = (t_b - t_a) / real(SWEEP_SUBDIVISIONS as f64);
                for s in 0..SWEEP_SUBDIVISIONS {
                    let sa = t_a + real::<T>(s as f64) * dt;
                    let sb = if s + 1 == SWEEP_SUBDIVISIONS {
                        t_b
                    } else {
                        t_a + real::<T>((s + 1) as f64) * dt
                    };
                    let (pa, pb) = ob.position_extremes(sa, sb);
                    rasterize_pose_pair(&mut grid, &ob.shape, pa, pb);
                }
            }
            inflate(&grid, 1)
        })
        .collect();
    TemporalOccupancyGrid { grids, time_step, start_time: t_now }
}
