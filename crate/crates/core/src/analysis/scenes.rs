//! Box-based scenes and a procedural indoor scene generator.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::geometry::Aabb;
use crate::octree::{build_from_boxes, MapError, OccupancyOctree, OctreeConfig};
use crate::scalar::Real;

/// A set of axis-aligned boxes inside `bounds`.
#[derive(Debug, Clone, PartialEq)]
pub struct Scene<T: Real> {
    pub bounds: Aabb<T>,
    pub min_cell_size: T,
    pub boxes: Vec<Aabb<T>>,
}

impl<T: Real> Scene<T> {
    pub fn build(&self, config: OctreeConfig) -> Result<OccupancyOctree<T>, MapError> {
        build_from_boxes(&self.boxes, self.bounds, self.min_cell_size, config)
    }
}

/// Closed room with floor, ceiling, free-standing wall segments, pillars and
/// low furniture blocks.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProceduralScene {
    pub size: [f64; 3],
    pub min_cell_size: f64,
    /// Full-height wall segments, alternating between x and y orientation.
    pub wall_segments: usize,
    /// Segment length range (m).
    pub wall_length: [f64; 2],
    /// Full-height pillars per square metre of floor.
    pub pillar_density: f64,
    /// Low boxes per square metre of floor.
    pub furniture_density: f64,
}

impl Default for ProceduralScene {
    fn default() -> Self {
        Self {
            size: [14.0, 14.0, 3.0],
            min_cell_size: 0.1,
            wall_segments: 4,
            wall_length: [2.0, 5.0],
            pillar_density: 0.05,
            furniture_density: 0.02,
        }
    }
}

impl ProceduralScene {
    pub fn generate<T: Real>(&self, seed: u64) -> Scene<T> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let [w, d, h] = self.size;
        let t = self.min_cell_size;
        let mut boxes: Vec<[f64; 6]> = vec![
            [0.0, 0.0, 0.0, w, d, t],
            [0.0, 0.0, h - t, w, d, h],
            [0.0, 0.0, 0.0, t, d, h],
            [w - t, 0.0, 0.0, w, d, h],
            [0.0, 0.0, 0.0, w, t, h],
            [0.0, d - t, 0.0, w, d, h],
        ];

        let thickness = 2.0 * t;
        for i in 0..self.wall_segments {
            let along_x = i % 2 == 0;
            let (span, across) = if along_x { (w, d) } else { (d, w) };
            let len = rng
                .random_range(self.wall_length[0]..self.wall_length[1])
                .min(span - 3.0);
            let lo = rng.random_range(1.0..span - 1.0 - len);
            let at = rng.random_range(1.0..across - 1.0 - thickness);
            boxes.push(if along_x {
                [lo, at, 0.0, lo + len, at + thickness, h]
            } else {
                [at, lo, 0.0, at + thickness, lo + len, h]
            });
        }

        let area = w * d;
        let pillars = (self.pillar_density * area).round() as usize;
        for _ in 0..pillars {
            let s = rng.random_range(0.3..0.8);
            let x = rng.random_range(1.0..w - 1.0 - s);
            let y = rng.random_range(1.0..d - 1.0 - s);
            boxes.push([x, y, 0.0, x + s, y + s, h]);
        }
        let furniture = (self.furniture_density * area).round() as usize;
        for _ in 0..furniture {
            let sx = rng.random_range(0.4..1.5);
            let sy = rng.random_range(0.4..1.5);
            let sz = rng.random_range(0.4..1.2);
            let x = rng.random_range(1.0..w - 1.0 - sx);
            let y = rng.random_range(1.0..d - 1.0 - sy);
            boxes.push([x, y, 0.0, x + sx, y + sy, sz]);
        }

        let to_aabb = |b: [f64; 6]| {
            Aabb::from_arrays(
                [T::lit(b[0]), T::lit(b[1]), T::lit(b[2])],
                [T::lit(b[3]), T::lit(b[4]), T::lit(b[5])],
            )
        };
        Scene {
            bounds: to_aabb([0.0, 0.0, 0.0, w, d, h]),
            min_cell_size: T::lit(t),
            boxes: boxes.into_iter().map(to_aabb).collect(),
        }
    }
}
