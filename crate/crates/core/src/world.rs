//! Ground-truth simulated environments: randomized static blocks and
//! oscillating dynamic obstacles, with exact pose queries at any time.
//!
//! Worlds are generated from a seed through a portable PRNG (ChaCha8 via
//! `rand_chacha`, draws taken as `f64`), so the same `(seed, config)` pair
//! reproduces the identical world on any platform. Static and dynamic
//! obstacles draw from decoupled streams of the generator, so changing one
//! count never perturbs the other population.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::real::{real, Real};
use crate::vec3::Vec3;

/// Name of the generator recorded in output metadata.
pub const PRNG_NAME: &str = "chacha8";

#[derive(Debug, Error, PartialEq)]
pub enum WorldError {
    #[error("invalid world config: {0}")]
    Config(String),
}

/// Voxelized obstacle template: occupied cell offsets inside a cube of
/// `side_voxels` cells per edge.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObstacleShape {
    pub side_voxels: u32,
    pub cells: Vec<[u32; 3]>,
}

impl ObstacleShape {
    pub fn new(side_voxels: u32, cells: Vec<[u32; 3]>) -> Self {
        debug_assert!(cells
            .iter()
            .all(|c| c.iter().all(|&v| v < side_voxels)));
        Self { side_voxels, cells }
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StaticObstacle<T> {
    pub shape: ObstacleShape,
    pub anchor: Vec3<T>,
}

/// Obstacle oscillating sinusoidally along a line:
/// position(t) = anchor + direction * half_length * sin(omega * t + phase).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DynamicObstacle<T> {
    pub shape: ObstacleShape,
    pub anchor: Vec3<T>,
    pub direction: Vec3<T>,
    pub half_length: T,
    pub omega: T,
    pub phase: T,
}

impl<T: Real> DynamicObstacle<T> {
    /// Exact pose of the obstacle cube's min corner at time `t`.
    pub fn position(&self, t: T) -> Vec3<T> {
        let s = (self.omega * t + self.phase).sin();
        self.anchor + self.direction * (self.half_length * s)
    }

    /// Peak speed of the oscillation, `omega * half_length`.
    pub fn max_speed(&self) -> T {
        self.omega * self.half_length
    }

    /// Extreme poses over a time interval.
    ///
    /// Because the motion is a sinusoid along a fixed line, the set of poses
    /// over `[t_a, t_b]` is exactly the segment between the poses at the
    /// interval's min and max of `sin`; this evaluates those bounds exactly
    /// (endpoints plus any interior critical points).
    pub fn position_extremes(&self, t_a: T, t_b: T) -> (Vec3<T>, Vec3<T>) {
        let theta_a = self.omega * t_a + self.phase;
        let theta_b = self.omega * t_b + self.phase;
        let mut s_min = theta_a.sin().min(theta_b.sin());
        let mut s_max = theta_a.sin().max(theta_b.sin());
        // critical points: theta = pi/2 + k*pi inside (theta_a, theta_b)
        let half_pi: T = real(std::f64::consts::FRAC_PI_2);
        let pi: T = real(std::f64::consts::PI);
        let k_lo = ((theta_a - half_pi) / pi).ceil();
        let k_hi = ((theta_b - half_pi) / pi).floor();
        let mut k = k_lo;
        while k <= k_hi {
            let s = (half_pi + k * pi).sin(); // +1 or -1
            s_min = s_min.min(s);
            s_max = s_max.max(s);
            k += T::one();
        }
        (
            self.anchor + self.direction * (self.half_length * s_min),
            self.anchor + self.direction * (self.half_length * s_max),
        )
    }
}

/// Generation parameters. Defaults reproduce the benchmark setup: a
/// 50 m x 12 m x 12 m map at 0.3 m voxels, 200 static and 200 dynamic
/// obstacles fitting in 1.5 m cubes with 10% cell occupancy, line lengths
/// up to 5 m and frequencies in [pi/7, pi/4] rad/s.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorldConfig {
    pub extent: [f64; 3],
    pub voxel_size: f64,
    pub n_static: usize,
    pub n_dynamic: usize,
    pub cube_side_voxels: u32,
    pub p_occ: f64,
    pub max_line_length: f64,
    pub omega_min: f64,
    pub omega_max: f64,
}

impl Default for WorldConfig {
    fn default() -> Self {
        Self {
            extent: [50.0, 12.0, 12.0],
            voxel_size: 0.3,
            n_static: 200,
            n_dynamic: 200,
            cube_side_voxels: 5,
            p_occ: 0.1,
            max_line_length: 5.0,
            omega_min: std::f64::consts::PI / 7.0,
            omega_max: std::f64::consts::PI / 4.0,
        }
    }
}

impl WorldConfig {
    fn validate(&self) -> Result<(), WorldError> {
        if self.extent.iter().any(|&e| !(e > 0.0)) {
            return Err(WorldError::Config("extent components must be > 0".into()));
        }
        if !(self.voxel_size > 0.0) {
            return Err(WorldError::Config("voxel_size must be > 0".into()));
        }
        if self.cube_side_voxels == 0 {
            return Err(WorldError::Config("cube_side_voxels must be >= 1".into()));
        }
        if !(0.0..=1.0).contains(&self.p_occ) {
            return Err(WorldError::Config("p_occ must be in [0, 1]".into()));
        }
        if self.max_line_length < 0.0 {
            return Err(WorldError::Config("max_line_length must be >= 0".into()));
        }
        if !(self.omega_min > 0.0) || self.omega_max < self.omega_min {
            return Err(WorldError::Config("need 0 < omega_min <= omega_max".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct World<T> {
    pub extent: Vec3<T>,
    pub voxel_size: T,
    pub static_obstacles: Vec<StaticObstacle<T>>,
    pub dynamic_obstacles: Vec<DynamicObstacle<T>>,
    pub seed: u64,
}

fn draw_shape(rng: &mut ChaCha8Rng, side: u32, p_occ: f64) -> ObstacleShape {
    let mut cells = Vec::new();
    for x in 0..side {
        for y in 0..side {
            for z in 0..side {
                if rng.gen::<f64>() < p_occ {
                    cells.push([x, y, z]);
                }
            }
        }
    }
    ObstacleShape { side_voxels: side, cells }
}

fn draw_in<T: Real>(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> T {
    real(lo + (hi - lo) * rng.gen::<f64>())
}

fn draw_anchor<T: Real>(rng: &mut ChaCha8Rng, extent: &[f64; 3]) -> Vec3<T> {
    let x = draw_in(rng, 0.0, extent[0]);
    let y = draw_in(rng, 0.0, extent[1]);
    let z = draw_in(rng, 0.0, extent[2]);
    Vec3::new(x, y, z)
}

/// Uniform direction on the unit sphere from two uniform draws.
fn draw_direction<T: Real>(rng: &mut ChaCha8Rng) -> Vec3<T> {
    let z = -1.0 + 2.0 * rng.gen::<f64>();
    let theta = 2.0 * std::f64::consts::PI * rng.gen::<f64>();
    let r = (1.0 - z * z).max(0.0).sqrt();
    Vec3::from_f64(r * theta.cos(), r * theta.sin(), z)
}

/// Draws a world deterministically from `(seed, config)`.
pub fn generate_world<T: Real>(seed: u64, config: &WorldConfig) -> Result<World<T>, WorldError> {
    config.validate()?;

    let mut rng_static = ChaCha8Rng::seed_from_u64(seed);
    rng_static.set_stream(1);
    let mut rng_dynamic = ChaCha8Rng::seed_from_u64(seed);
    rng_dynamic.set_stream(2);

    // static obstacles live on the voxel lattice (the map is a voxel grid);
    // dynamic obstacles move continuously so their anchors stay unquantized
    let vs = config.voxel_size;
    let static_obstacles = (0..config.n_static)
        .map(|_| {
            let shape = draw_shape(&mut rng_static, config.cube_side_voxels, config.p_occ);
            let anchor: Vec3<T> = draw_anchor(&mut rng_static, &config.extent);
            let anchor = Vec3::new(
                (anchor.x / real(vs)).floor() * real(vs),
                (anchor.y / real(vs)).floor() * real(vs),
                (anchor.z / real(vs)).floor() * real(vs),
            );
            StaticObstacle { shape, anchor }
        })
        .collect();

    let dynamic_obstacles = (0..config.n_dynamic)
        .map(|_| {
            let shape = draw_shape(&mut rng_dynamic, config.cube_side_voxels, config.p_occ);
            let anchor = draw_anchor(&mut rng_dynamic, &config.extent);
            let direction = draw_direction(&mut rng_dynamic);
            let half_length: T = draw_in(&mut rng_dynamic, 0.0, config.max_line_length);
            let half_length = half_length * real(0.5);
            let omega = draw_in(&mut rng_dynamic, config.omega_min, config.omega_max);
            let phase = draw_in(&mut rng_dynamic, 0.0, 2.0 * std::f64::consts::PI);
            DynamicObstacle { shape, anchor, direction, half_length, omega, phase }
        })
        .collect();

    Ok(World {
        extent: Vec3::from_f64(config.extent[0], config.extent[1], config.extent[2]),
        voxel_size: real(config.voxel_size),
        static_obstacles,
        dynamic_obstacles,
        seed,
    })
}

/// Squared distance from a point to an axis-aligned box.
fn point_box_dist_sq<T: Real>(p: Vec3<T>, lo: Vec3<T>, hi: Vec3<T>) -> T {
    let mut d = T::zero();
    for i in 0..3 {
        let gap = (lo[i] - p[i]).max(T::zero()).max(p[i] - hi[i]);
        d += gap * gap;
    }
    d
}

fn sphere_hits_shape<T: Real>(
    shape: &ObstacleShape,
    pose: Vec3<T>,
    vs: T,
    point: Vec3<T>,
    radius: T,
) -> bool {
    if shape.cells.is_empty() {
        return false;
    }
    // cheap reject against the whole cube
    let side: T = real(shape.side_voxels as f64);
    let cube_hi = pose + Vec3::splat(side * vs);
    let r_sq = radius * radius;
    if point_box_dist_sq(point, pose, cube_hi) > r_sq {
        return false;
    }
    shape.cells.iter().any(|&[x, y, z]| {
        let off = Vec3::from_f64(x as f64, y as f64, z as f64);
        let lo = pose + off * vs;
        let hi = lo + Vec3::splat(vs);
        point_box_dist_sq(point, lo, hi) <= r_sq
    })
}

impl<T: Real> World<T> {
    /// True iff the agent sphere overlaps (or touches) any occupied obstacle
    /// cell at exact time `t`.
    pub fn collision_check(&self, point: Vec3<T>, t: T, agent_radius: T) -> bool {
        let vs = self.voxel_size;
        if self
            .static_obstacles
            .iter()
            .any(|ob| sphere_hits_shape(&ob.shape, ob.anchor, vs, point, agent_radius))
        {
            return true;
        }
        self.dynamic_obstacles
            .iter()
            .any(|ob| sphere_hits_shape(&ob.shape, ob.position(t), vs, point, agent_radius))
    }
}

/// Versioned on-disk form of a [`World`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorldFile<T> {
    pub schema: String,
    pub prng: String,
    pub world: World<T>,
}

pub const WORLD_SCHEMA: &str = "world/v1";

impl<T: Real + Serialize + for<'de> Deserialize<'de>> World<T> {
    pub fn to_json(&self) -> String {
        let file = WorldFile {
            schema: WORLD_SCHEMA.to_string(),
            prng: PRNG_NAME.to_string(),
            world: self.clone(),
        };
        serde_json::to_string_pretty(&file).expect("world serialization")
    }

    pub fn from_json(s: &str) -> Result<Self, WorldError> {
        let file: WorldFile<T> =
            serde_json::from_str(s).map_err(|e| WorldError::Config(format!("parse: {e}")))?;
        if file.schema != WORLD_SCHEMA {
            return Err(WorldError::Config(format!(
                "unsupported schema {:?}",
                file.schema
            )));
        }
        Ok(file.world)
    }
}
