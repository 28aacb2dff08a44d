//! Axis-aligned boxes in world coordinates.

use nalgebra::Vector3;

use crate::scalar::Real;

/// Axis-aligned box given by its minimum and maximum corners (metres).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Aabb<T: Real> {
    pub min: Vector3<T>,
    pub max: Vector3<T>,
}

impl<T: Real> Aabb<T> {
    pub fn new(min: Vector3<T>, max: Vector3<T>) -> Self {
        Self { min, max }
    }

    pub fn from_arrays(min: [T; 3], max: [T; 3]) -> Self {
        Self::new(Vector3::from(min), Vector3::from(max))
    }

    /// Box of side `side` centered on `center`.
    pub fn cube(center: Vector3<T>, side: T) -> Self {
        let half = Vector3::repeat(side * T::lit(0.5));
        Self::new(center - half, center + half)
    }

    /// True when every extent is strictly positive and finite.
    pub fn is_nonempty(&self) -> bool {
        (0..3).all(|i| self.min[i].is_finite() && self.max[i].is_finite() && self.max[i] > self.min[i])
    }

    pub fn extent(&self) -> Vector3<T> {
        self.max - self.min
    }

    pub fn center(&self) -> Vector3<T> {
        (self.min + self.max) * T::lit(0.5)
    }

    pub fn contains(&self, p: &Vector3<T>) -> bool {
        (0..3).all(|i| p[i] >= self.min[i] && p[i] <= self.max[i])
    }

    /// Euclidean distance from `p` to the box surface, zero inside.
    pub fn distance_to(&self, p: &Vector3<T>) -> T {
        let mut sq = T::zero();
        for i in 0..3 {
            let below = self.min[i] - p[i];
            let above = p[i] - self.max[i];
            let gap = below.max(above).max(T::zero());
            sq += gap * gap;
        }
        sq.sqrt()
    }
}
