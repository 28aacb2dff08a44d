//! Multi-resolution obstacle extraction.
//!
//! The octree is walked from the root towards the leaves. A node is expanded
//! only while the robot is within the node's resolution radius
//! [`ResolutionSchedule::max_distance`]; beyond that radius the node itself is
//! emitted as one coarse obstacle cell. Nearby obstacles therefore appear at
//! full resolution and distant ones as progressively larger summary cells.

use nalgebra::Vector3;

use crate::octree::{NodeRef, OccupancyOctree};
use crate::scalar::Real;

/// A terminal node handed to the policy layer: one avoidance policy per cell.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ObstacleCell<T: Real> {
    pub center: Vector3<T>,
    pub height: u8,
    pub side_length: T,
}

impl<T: Real> ObstacleCell<T> {
    fn from_node(node: &NodeRef<'_, T>) -> Self {
        Self {
            center: node.center(),
            height: node.height(),
            side_length: node.side_length(),
        }
    }
}

/// Distance below which a node of a given height is refined into its children:
/// `base^(height / exponent_divisor) - offset`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ResolutionSchedule<T: Real> {
    pub base: T,
    pub exponent_divisor: T,
    pub offset: T,
}

impl<T: Real> Default for ResolutionSchedule<T> {
    fn default() -> Self {
        Self {
            base: T::lit(3.0),
            exponent_divisor: T::lit(3.0),
            offset: T::lit(0.25),
        }
    }
}

impl<T: Real> ResolutionSchedule<T> {
    pub fn max_distance(&self, height: u8) -> T {
        self.base.powf(T::lit(height as f64) / self.exponent_divisor) - self.offset
    }
}

/// Refinement radius for `height` with the default schedule, `3^(h/3) - 0.25` m.
pub fn d_max<T: Real>(height: u8) -> T {
    ResolutionSchedule::default().max_distance(height)
}

/// Multi-resolution obstacle cells around `robot_pos`.
///
/// Every occupied finest cell is covered by exactly one emitted cell. Occupied
/// leaves reached by the recursion are always emitted, including those closer
/// than the finest refinement radius.
pub fn extract_obstacles<T: Real>(
    map: &OccupancyOctree<T>,
    robot_pos: &Vector3<T>,
    schedule: &ResolutionSchedule<T>,
) -> Vec<ObstacleCell<T>> {
    let mut out = Vec::new();
    extract_obstacles_into(map, robot_pos, schedule, &mut out);
    out
}

/// Same as [`extract_obstacles`] but reuses `out`, which is cleared first.
pub fn extract_obstacles_into<T: Real>(
    map: &OccupancyOctree<T>,
    robot_pos: &Vector3<T>,
    schedule: &ResolutionSchedule<T>,
    out: &mut Vec<ObstacleCell<T>>,
) {
    out.clear();
    // max_distance per height, indexed by height
    let radii: Vec<T> = (0..map.num_levels()).map(|h| schedule.max_distance(h)).collect();
    recurse(map.root(), robot_pos, &radii, out);
}

fn recurse<T: Real>(node: NodeRef<'_, T>, robot_pos: &Vector3<T>, radii: &[T], out: &mut Vec<ObstacleCell<T>>) {
    if !node.has_occupied_descendant() {
        return;
    }
    let distance = (node.center() - robot_pos).norm();
    if radii[node.height() as usize] < distance {
        out.push(ObstacleCell::from_node(&node));
        return;
    }
    match node.children() {
        Some(children) => {
            for child in children {
                recurse(child, robot_pos, radii, out);
            }
        }
        None => out.push(ObstacleCell::from_node(&node)),
    }
}

/// Finest-resolution baseline: every occupied finest cell whose center lies
/// within `radius` of `robot_pos`.
pub fn extract_fixed_resolution<T: Real>(
    map: &OccupancyOctree<T>,
    robot_pos: &Vector3<T>,
    radius: T,
) -> Vec<ObstacleCell<T>> {
    let mut out = Vec::new();
    extract_fixed_resolution_into(map, robot_pos, radius, &mut out);
    out
}

pub fn extract_fixed_resolution_into<T: Real>(
    map: &OccupancyOctree<T>,
    robot_pos: &Vector3<T>,
    radius: T,
    out: &mut Vec<ObstacleCell<T>>,
) {
    out.clear();
    let cell_side = map.min_cell_size();
    let mut stack = vec![map.root()];
    while let Some(node) = stack.pop() {
        if !node.has_occupied_descendant() || node.aabb().distance_to(robot_pos) > radius {
            continue;
        }
        if let Some(children) = node.children() {
            stack.extend(children.into_iter().rev());
            continue;
        }
        if node.height() == 0 {
            if (node.center() - robot_pos).norm() <= radius {
                out.push(ObstacleCell::from_node(&node));
            }
            continue;
        }
        // Collapsed coarse obstacle (unknown space treated as occupied):
        // enumerate its finest cells inside the ball.
        let base = node.address().index.map(|i| i << node.height());
        let span = 1u32 << node.height();
        for dx in 0..span {
            for dy in 0..span {
                for dz in 0..span {
                    let address = crate::octree::NodeAddress::new(0, [base[0] + dx, base[1] + dy, base[2] + dz]);
                    let center = map.center(&address);
                    if (center - robot_pos).norm() <= radius {
                        out.push(ObstacleCell {
                            center,
                            height: 0,
                            side_length: cell_side,
                        });
                    }
                }
            }
        }
    }
}

/// Which traversal [`worst_case_visited_cells`] counts for.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VisitMode {
    Hierarchical,
    Fixed,
}

/// Lattice points of an integer grid inside a ball of `radius` (grid units)
/// centered on a lattice point.
fn lattice_ball_count(radius: f64) -> u64 {
    if radius < 0.0 {
        return 0;
    }
    let r2 = radius * radius;
    let n = radius.floor() as i64;
    let mut count = 0u64;
    for i in -n..=n {
        let ri = r2 - (i * i) as f64;
        if ri < 0.0 {
            continue;
        }
        let m = ri.sqrt().floor() as i64;
        for j in -m..=m {
            let rj = ri - (j * j) as f64;
            if rj < 0.0 {
                continue;
            }
            let k = rj.sqrt().floor() as u64;
            count += 2 * k + 1;
        }
    }
    count
}

/// Worst-case number of cells a query of the given perceptive `radius` has to
/// visit. The fixed mode counts finest cells in the ball; the hierarchical mode
/// counts, for each height, the cells of that height lying in the shell between
/// the previous and the current refinement radius.
pub fn worst_case_visited_cells(
    radius: f64,
    min_cell_size: f64,
    mode: VisitMode,
    schedule: &ResolutionSchedule<f64>,
) -> u64 {
    match mode {
        VisitMode::Fixed => lattice_ball_count(radius / min_cell_size),
        VisitMode::Hierarchical => {
            let mut total = 0u64;
            let mut inner = 0.0f64;
            for height in 0u8..64 {
                if height > 0 && inner >= radius {
                    break;
                }
                let outer = schedule.max_distance(height).min(radius);
                let side = min_cell_size * 2f64.powi(height as i32);
                let shell = if height == 0 {
                    lattice_ball_count(outer / side)
                } else {
                    lattice_ball_count(outer / side) - lattice_ball_count(inner / side)
                };
                total += shell;
                inner = schedule.max_distance(height);
            }
            total
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Aabb;
    use crate::octree::{build_from_boxes, OctreeBuilder, OctreeConfig};

    #[test]
    fn d_max_values() {
        assert!((d_max::<f64>(0) - 0.75).abs() < 1e-12);
        assert!((d_max::<f64>(3) - 2.75).abs() < 1e-12);
        assert!((d_max::<f64>(9) - 26.75).abs() < 1e-9);
        assert!((d_max::<f32>(3) - 2.75).abs() < 1e-5);
    }

    #[test]
    fn empty_map_yields_nothing() {
        let map = build_from_boxes(
            &[],
            Aabb::from_arrays([0.0; 3], [10.0; 3]),
            0.1,
            OctreeConfig::default(),
        )
        .unwrap();
        let cells = extract_obstacles(&map, &Vector3::repeat(5.0), &ResolutionSchedule::default());
        assert!(cells.is_empty());
        assert!(extract_fixed_resolution(&map, &Vector3::repeat(5.0), 3.0).is_empty());
    }

    #[test]
    fn single_cell_emitted_once_at_hand_traced_height() {
        let mut builder =
            OctreeBuilder::new(Aabb::from_arrays([0.0; 3], [20.0; 3]), 0.1, OctreeConfig::default()).unwrap();
        let g = builder.grid_min();
        let index = [g[0] + 150, g[1] + 100, g[2] + 100];
        builder.insert_cell(index).unwrap();
        let map = builder.build();
        let leaf = crate::octree::NodeAddress::new(0, index);
        let leaf_center = map.center(&leaf);
        let robot = leaf_center - Vector3::new(5.0, 0.0, 0.0);

        // walk the ancestor chain from the root: first ancestor beyond its radius wins
        let mut expected = 0;
        for h in (0..map.num_levels()).rev() {
            let c = map.center(&leaf.ancestor_at(h));
            if d_max::<f64>(h) < (c - robot).norm() {
                expected = h;
                break;
            }
        }
        let cells = extract_obstacles(&map, &robot, &ResolutionSchedule::default());
        assert_eq!(cells.len(), 1);
        assert_eq!(cells[0].height, expected);
        assert!(expected >= 4, "5 m exceeds d_max(4) = 4.08 m, got {expected}");
        assert_eq!(cells[0].center, map.center(&leaf.ancestor_at(expected)));
    }

    #[test]
    fn fixed_radius_excludes_far_obstacles() {
        let map = build_from_boxes(
            &[Aabb::from_arrays([3.0, 0.0, 0.0], [4.0, 1.0, 1.0])],
            Aabb::from_arrays([0.0; 3], [6.4; 3]),
            0.1,
            OctreeConfig::default(),
        )
        .unwrap();
        let robot = Vector3::new(0.95, 0.5, 0.5);
        assert!(extract_fixed_resolution(&map, &robot, 1.0).is_empty());
        assert_eq!(
            extract_fixed_resolution(&map, &Vector3::new(3.5, 0.5, 0.5), 5.0).len(),
            1000
        );
    }

    #[test]
    fn fixed_radius_expands_collapsed_unknown_space() {
        let map = build_from_boxes(
            &[],
            Aabb::from_arrays([0.0; 3], [1.0; 3]),
            0.1,
            OctreeConfig {
                num_levels: 6,
                unknown_as_occupied: true,
            },
        )
        .unwrap();
        let robot = Vector3::new(0.95, 0.5, 0.5);
        let cells = extract_fixed_resolution(&map, &robot, 0.3);
        // unknown cells just past x = 1.0
        assert!(!cells.is_empty());
        assert!(cells.iter().all(|c| c.center.x > 1.0 && c.height == 0));
    }

    #[test]
    fn lattice_count_small_radii() {
        assert_eq!(lattice_ball_count(0.0), 1);
        assert_eq!(lattice_ball_count(1.0), 7);
        assert_eq!(lattice_ball_count(1.5), 27 - 8);
        assert_eq!(lattice_ball_count(2.0), 33);
    }
}
