//! Reactive multi-resolution obstacle avoidance for a point robot.
//!
//! Occupied space is stored in an [`octree::OccupancyOctree`]. Around the
//! robot, [`extraction::extract_obstacles`] selects obstacle cells whose size
//! grows with distance, each cell becomes a Riemannian motion policy
//! ([`rmp`]), and the fused acceleration drives a double integrator
//! ([`sim`]). [`analysis`] holds the evaluation studies and the benchmark
//! harness.
//!
//! All numeric code is generic over [`Real`] (`f32` or `f64`); the aliases
//! below fix the common double precision instantiations.

pub mod analysis;
pub mod extraction;
pub mod geometry;
pub mod octree;
pub mod rmp;
pub mod scalar;
pub mod sim;

pub use scalar::Real;

pub type Aabb = geometry::Aabb<f64>;
pub type OccupancyOctree = octree::OccupancyOctree<f64>;
pub type ObstacleCell = extraction::ObstacleCell<f64>;
pub type ResolutionSchedule = extraction::ResolutionSchedule<f64>;
pub type Policy = rmp::Policy<f64>;
pub type ObstaclePolicyParams = rmp::ObstaclePolicyParams<f64>;
pub type AttractorParams = rmp::AttractorParams<f64>;
pub type NavigationParams = rmp::NavigationParams<f64>;
pub type RobotState = sim::RobotState<f64>;
pub type SimConfig = sim::SimConfig<f64>;
pub type Variant = sim::Variant<f64>;
pub type EpisodeResult = sim::EpisodeResult<f64>;

pub type Aabb32 = geometry::Aabb<f32>;
pub type OccupancyOctree32 = octree::OccupancyOctree<f32>;
pub type Policy32 = rmp::Policy<f32>;
pub type NavigationParams32 = rmp::NavigationParams<f32>;
