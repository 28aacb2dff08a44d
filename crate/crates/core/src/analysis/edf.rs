use nalgebra::Vector3;

use crate::geometry::Aabb;
use crate::octree::{NodeAddress, OccupancyOctree};
use crate::scalar::Real;

/// Euclidean distance from `point` to the surface of the nearest occupied
/// finest cell, capped at `truncation`.
///
/// Linear scan over every occupied cell; meant as a reference oracle. Points
/// outside the map return `truncation`.
pub fn edf_distance<T: Real>(map: &OccupancyOctree<T>, point: &Vector3<T>, truncation: T) -> T {
    if map.cell_index(point).is_none() {
        return truncation;
    }
    let side = map.min_cell_size();
    map.occupied_cells()
        .into_iter()
        .map(|index| Aabb::cube(map.center(&NodeAddress::new(0, index)), side).distance_to(point))
        .fold(truncation, |best, d| best.min(d))
}
