#![allow(dead_code)]

use std::collections::HashSet;

use nalgebra::{Matrix3, SymmetricEigen, Vector3};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rmpnav_core::octree::{NodeAddress, OctreeBuilder, OctreeConfig};
use rmpnav_core::{Aabb, ObstacleCell, OccupancyOctree};

/// Random map: a few solid boxes plus scattered single cells.
pub fn random_map(rng: &mut ChaCha8Rng, max_side: f64) -> OccupancyOctree {
    let side: [f64; 3] = std::array::from_fn(|_| rng.random_range(1.0..max_side));
    let bounds = Aabb::from_arrays([0.0; 3], side);
    let mut builder = OctreeBuilder::new(bounds, 0.1, OctreeConfig::default()).unwrap();
    for _ in 0..rng.random_range(0..6) {
        let lo: [f64; 3] = std::array::from_fn(|a| rng.random_range(0.0..side[a]));
        let hi: [f64; 3] = std::array::from_fn(|a| (lo[a] + rng.random_range(0.05..2.0)).min(side[a]));
        builder.insert_box(&Aabb::from_arrays(lo, hi));
    }
    let g = builder.grid_min();
    let dims = builder.grid_dims();
    for _ in 0..rng.random_range(0..400) {
        let index: [u32; 3] = std::array::from_fn(|a| g[a] + rng.random_range(0..dims[a]));
        builder.insert_cell(index).unwrap();
    }
    builder.build()
}

/// Node address of an emitted cell, recovered from its center and height.
pub fn address_of(map: &OccupancyOctree, cell: &ObstacleCell) -> NodeAddress {
    let side = map.side_length(cell.height);
    let rel = (cell.center - map.origin()) / side;
    NodeAddress::new(cell.height, std::array::from_fn(|a| rel[a].floor() as u32))
}

/// Brute-force coverage check: for every occupied finest cell, the number of
/// emitted cells that are an ancestor of it or the cell itself. Returns the
/// offending cells (count != 1) and emitted cells that cover nothing.
pub fn coverage_violations(map: &OccupancyOctree, cells: &[ObstacleCell]) -> (Vec<[u32; 3]>, usize) {
    let emitted: HashSet<NodeAddress> = cells.iter().map(|c| address_of(map, c)).collect();
    let occupied = map.occupied_cells();
    let mut bad = Vec::new();
    let mut used = HashSet::new();
    for &index in &occupied {
        let mut hits = 0;
        for h in 0..map.num_levels() {
            let a = NodeAddress::new(0, index).ancestor_at(h);
            if emitted.contains(&a) {
                hits += 1;
                used.insert(a);
            }
        }
        if hits != 1 {
            bad.push(index);
        }
    }
    let dangling = emitted.len() - used.len() + (cells.len() - emitted.len());
    (bad, dangling)
}

pub fn random_vector(rng: &mut ChaCha8Rng, scale: f64) -> Vector3<f64> {
    Vector3::from_fn(|_, _| rng.random_range(-scale..scale))
}

/// Random symmetric positive definite matrix, eigenvalues at least `floor`.
pub fn random_spd(rng: &mut ChaCha8Rng, floor: f64) -> Matrix3<f64> {
    let b = Matrix3::from_fn(|_, _| rng.random_range(-1.0..1.0));
    b * b.transpose() + Matrix3::identity() * floor
}

pub fn min_eigenvalue(m: &Matrix3<f64>) -> f64 {
    SymmetricEigen::new(*m).eigenvalues.min()
}

pub fn is_psd(m: &Matrix3<f64>) -> bool {
    let tol = 1e-12 * m.norm().max(1.0);
    (m - m.transpose()).norm() <= tol && min_eigenvalue(m) >= -tol
}
