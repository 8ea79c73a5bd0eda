//! Receding-horizon trajectory planning for a jerk-controlled point-mass
//! agent in dynamic 3D voxel worlds.
//!
//! The pipeline: build a temporal occupancy grid from the world, decompose
//! the reachable free space into a temporal safe corridor, sample a local
//! reference window along a clearance-pushed global grid path, and solve a
//! mixed-integer quadratic program (native branch-and-bound over per-step
//! polyhedron choices with a convex QP subsolver) each planning step.
//!
//! All core math is generic over the scalar type ([`Real`], `f32` or `f64`);
//! the `*64` aliases below fix the default `f64` lane.

pub mod corridor;
pub mod dynamics;
pub mod global_path;
pub mod grid;
pub mod linalg;
pub mod miqp;
pub mod planner;
pub mod qp;
pub mod real;
pub mod reference;
pub mod sim;
pub mod vec3;
pub mod world;

pub use real::Real;
pub use vec3::Vec3;

/// Default-lane aliases.
pub type Vec3d = Vec3<f64>;
pub type VoxelGrid64 = grid::VoxelGrid<f64>;
pub type Tog64 = grid::TemporalOccupancyGrid<f64>;
pub type World64 = world::World<f64>;
pub type Tsc64 = corridor::TemporalSafeCorridor<f64>;
pub type AgentState64 = dynamics::AgentState<f64>;
pub type Limits64 = dynamics::Limits<f64>;
pub type MpcProblem64 = miqp::MpcProblem<f64>;
pub type MpcSolution64 = miqp::MpcSolution<f64>;
pub type PlannerConfig64 = planner::PlannerConfig<f64>;
pub type MissionResult64 = sim::MissionResult<f64>;
