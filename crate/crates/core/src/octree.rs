//! Hierarchical occupancy map.
//!
//! The map is a pointerless octree stored in a flat arena. Height 0 is the
//! finest resolution; the root sits at height `num_levels - 1`. Every node
//! caches whether any cell in its subtree is an obstacle so the extractor can
//! skip empty space in O(1).
//!
//! Interior nodes follow the max-occupancy convention: a node is `Occupied`
//! if any descendant leaf is occupied, otherwise `Unknown` if any descendant
//! is unknown, otherwise `Free`. Uniformly free (or uniformly unknown)
//! subtrees are collapsed into a single childless node.

use nalgebra::Vector3;
use thiserror::Error;

use crate::geometry::Aabb;
use crate::scalar::Real;

/// Deepest tree supported by the 63-bit Morton keys used during construction.
pub const MAX_LEVELS: u8 = 21;

const NO_CHILDREN: u32 = u32::MAX;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Occupancy {
    Occupied,
    Free,
    Unknown,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MapError {
    #[error("map bounds must be finite with positive extent on every axis")]
    EmptyBounds,
    #[error("minimum cell size must be positive and finite, got {0}")]
    InvalidCellSize(f64),
    #[error("num_levels must lie in 1..={max}, got {0}", max = MAX_LEVELS)]
    InvalidLevels(u8),
    #[error("bounds need {needed} cells along one axis but {num_levels} levels hold at most {capacity}")]
    Capacity { needed: u64, capacity: u64, num_levels: u8 },
    #[error("cell index {index:?} lies outside the {dims:?} grid")]
    CellOutOfGrid { index: [u32; 3], dims: [u32; 3] },
}

/// Construction options shared by every map builder.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OctreeConfig {
    pub num_levels: u8,
    /// Treat unknown space as an obstacle for extraction purposes.
    pub unknown_as_occupied: bool,
}

impl Default for OctreeConfig {
    fn default() -> Self {
        Self {
            num_levels: 10,
            unknown_as_occupied: false,
        }
    }
}

/// Location of a node: its height and its integer grid index at that height.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NodeAddress {
    pub height: u8,
    pub index: [u32; 3],
}

impl NodeAddress {
    pub fn new(height: u8, index: [u32; 3]) -> Self {
        Self { height, index }
    }

    /// Child address for `octant` in `0..8`; bit 0 selects +x, bit 1 +y, bit 2 +z.
    pub fn child(&self, octant: usize) -> Self {
        debug_assert!(self.height > 0 && octant < 8);
        let [x, y, z] = self.index;
        Self {
            height: self.height - 1,
            index: [
                2 * x + (octant & 1) as u32,
                2 * y + ((octant >> 1) & 1) as u32,
                2 * z + ((octant >> 2) & 1) as u32,
            ],
        }
    }

    /// Ancestor of this address at `height` (which must not be below our own).
    pub fn ancestor_at(&self, height: u8) -> Self {
        debug_assert!(height >= self.height);
        let shift = height - self.height;
        Self {
            height,
            index: self.index.map(|i| i >> shift),
        }
    }

    pub fn is_ancestor_or_self_of(&self, other: &NodeAddress) -> bool {
        self.height >= other.height && other.ancestor_at(self.height) == *self
    }
}

#[derive(Debug, Clone, Copy)]
struct Node {
    occupancy: Occupancy,
    any_occupied: bool,
    first_child: u32,
}

impl Node {
    fn leaf(occupancy: Occupancy, any_occupied: bool) -> Self {
        Self {
            occupancy,
            any_occupied,
            first_child: NO_CHILDREN,
        }
    }
}

/// Immutable hierarchical occupancy map. Safe to share between threads.
#[derive(Debug, Clone)]
pub struct OccupancyOctree<T: Real> {
    origin: Vector3<T>,
    min_cell_size: T,
    num_levels: u8,
    grid_min: [u32; 3],
    grid_dims: [u32; 3],
    unknown_as_occupied: bool,
    nodes: Vec<Node>,
    occupied_count: usize,
}

/// Borrowed view of one node together with its address.
#[derive(Debug, Clone, Copy)]
pub struct NodeRef<'a, T: Real> {
    tree: &'a OccupancyOctree<T>,
    id: u32,
    address: NodeAddress,
}

impl<'a, T: Real> NodeRef<'a, T> {
    fn node(&self) -> &'a Node {
        &self.tree.nodes[self.id as usize]
    }

    pub fn address(&self) -> NodeAddress {
        self.address
    }

    pub fn height(&self) -> u8 {
        self.address.height
    }

    pub fn occupancy(&self) -> Occupancy {
        self.node().occupancy
    }

    /// Whether this node itself counts as an obstacle (`IsOcc`).
    pub fn is_occupied(&self) -> bool {
        self.tree.is_obstacle(self.node().occupancy)
    }

    /// Whether this node or anything below it is an obstacle (`HasOccChild`).
    /// Reads the cached aggregate.
    pub fn has_occupied_descendant(&self) -> bool {
        self.node().any_occupied
    }

    pub fn is_leaf(&self) -> bool {
        self.node().first_child == NO_CHILDREN
    }

    pub fn center(&self) -> Vector3<T> {
        self.tree.center(&self.address)
    }

    pub fn side_length(&self) -> T {
        self.tree.side_length(self.address.height)
    }

    pub fn aabb(&self) -> Aabb<T> {
        Aabb::cube(self.center(), self.side_length())
    }

    /// The eight children in octant order, or `None` for a childless node.
    pub fn children(&self) -> Option<[NodeRef<'a, T>; 8]> {
        let first = self.node().first_child;
        if first == NO_CHILDREN {
            return None;
        }
        let tree = self.tree;
        let parent = self.address;
        Some(std::array::from_fn(|octant| NodeRef {
            tree,
            id: first + octant as u32,
            address: parent.child(octant),
        }))
    }
}

impl<T: Real> OccupancyOctree<T> {
    pub fn origin(&self) -> Vector3<T> {
        self.origin
    }

    pub fn min_cell_size(&self) -> T {
        self.min_cell_size
    }

    pub fn num_levels(&self) -> u8 {
        self.num_levels
    }

    pub fn root_height(&self) -> u8 {
        self.num_levels - 1
    }

    /// First finest-cell index of the mapped grid along each axis.
    pub fn grid_min(&self) -> [u32; 3] {
        self.grid_min
    }

    /// Number of finest cells inside the mapped bounds along each axis.
    pub fn grid_dims(&self) -> [u32; 3] {
        self.grid_dims
    }

    pub fn in_grid(&self, index: [u32; 3]) -> bool {
        (0..3).all(|a| index[a] >= self.grid_min[a] && index[a] - self.grid_min[a] < self.grid_dims[a])
    }

    pub fn unknown_as_occupied(&self) -> bool {
        self.unknown_as_occupied
    }

    /// Cell-aligned bounds of the mapped region.
    pub fn bounds(&self) -> Aabb<T> {
        let c = self.min_cell_size;
        let lo = Vector3::from_fn(|a, _| T::lit(self.grid_min[a] as f64));
        let dims = Vector3::from_fn(|a, _| T::lit(self.grid_dims[a] as f64));
        Aabb::new(self.origin + lo * c, self.origin + (lo + dims) * c)
    }

    pub fn occupied_count(&self) -> usize {
        self.occupied_count
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    /// Approximate heap footprint of the node arena in bytes.
    pub fn memory_bytes(&self) -> usize {
        self.nodes.capacity() * std::mem::size_of::<Node>()
    }

    pub fn side_length(&self, height: u8) -> T {
        self.min_cell_size * T::lit(2f64.powi(height as i32))
    }

    pub fn center(&self, address: &NodeAddress) -> Vector3<T> {
        let side = self.side_length(address.height);
        let half = T::lit(0.5);
        Vector3::new(
            self.origin.x + (T::lit(address.index[0] as f64) + half) * side,
            self.origin.y + (T::lit(address.index[1] as f64) + half) * side,
            self.origin.z + (T::lit(address.index[2] as f64) + half) * side,
        )
    }

    pub fn is_obstacle(&self, occupancy: Occupancy) -> bool {
        match occupancy {
            Occupancy::Occupied => true,
            Occupancy::Unknown => self.unknown_as_occupied,
            Occupancy::Free => false,
        }
    }

    pub fn root(&self) -> NodeRef<'_, T> {
        NodeRef {
            tree: self,
            id: 0,
            address: NodeAddress::new(self.root_height(), [0, 0, 0]),
        }
    }

    /// Finest-cell index containing `point`, or `None` outside the mapped grid.
    pub fn cell_index(&self, point: &Vector3<T>) -> Option<[u32; 3]> {
        let mut index = [0u32; 3];
        for axis in 0..3 {
            let lo = self.grid_min[axis];
            let rel = (point[axis] - self.origin[axis]) / self.min_cell_size - T::lit(lo as f64);
            if !rel.is_finite() || rel < T::zero() {
                return None;
            }
            let dim = self.grid_dims[axis];
            let cell = rel.floor().as_f64();
            if cell >= dim as f64 {
                // A point exactly on the upper face belongs to the last cell.
                if rel.as_f64() <= dim as f64 {
                    index[axis] = lo + dim - 1;
                    continue;
                }
                return None;
            }
            index[axis] = lo + cell as u32;
        }
        Some(index)
    }

    /// Deepest stored node on the path to `address` (the node itself if it exists).
    pub fn locate(&self, address: &NodeAddress) -> NodeRef<'_, T> {
        let mut node = self.root();
        while node.height() > address.height {
            let Some(children) = node.children() else {
                break;
            };
            let next = address.ancestor_at(node.height() - 1);
            let octant = (next.index[0] & 1) as usize
                | (((next.index[1] & 1) as usize) << 1)
                | (((next.index[2] & 1) as usize) << 2);
            node = children[octant];
        }
        node
    }

    /// Occupancy of the finest cell containing `point`; `Unknown` outside the map.
    pub fn query_occupancy(&self, point: &Vector3<T>) -> Occupancy {
        match self.cell_index(point) {
            Some(index) => self.cell_occupancy(index),
            None => Occupancy::Unknown,
        }
    }

    pub fn cell_occupancy(&self, index: [u32; 3]) -> Occupancy {
        if !self.in_grid(index) {
            return Occupancy::Unknown;
        }
        self.locate(&NodeAddress::new(0, index)).occupancy()
    }

    /// Visits every stored node depth-first, parents before children.
    pub fn for_each_node(&self, mut visit: impl FnMut(NodeRef<'_, T>)) {
        let mut stack = vec![self.root()];
        while let Some(node) = stack.pop() {
            visit(node);
            if let Some(children) = node.children() {
                stack.extend(children.into_iter().rev());
            }
        }
    }

    /// Indices of all occupied finest cells, in depth-first octant order.
    pub fn occupied_cells(&self) -> Vec<[u32; 3]> {
        let mut cells = Vec::with_capacity(self.occupied_count);
        let mut stack = vec![self.root()];
        while let Some(node) = stack.pop() {
            if node.occupancy() != Occupancy::Occupied {
                continue;
            }
            match node.children() {
                Some(children) => stack.extend(children.into_iter().rev()),
                None => cells.push(node.address().index),
            }
        }
        cells
    }

    /// Distance from `point` to the surface of the nearest occupied finest
    /// cell, capped at `truncation`. Zero inside an occupied cell.
    ///
    /// Branch-and-bound over the hierarchy: subtrees without occupied cells or
    /// farther than the current best are skipped.
    pub fn nearest_occupied_distance(&self, point: &Vector3<T>, truncation: T) -> T {
        let mut best = truncation;
        let mut stack = vec![self.root()];
        while let Some(node) = stack.pop() {
            if node.occupancy() != Occupancy::Occupied {
                continue;
            }
            let dist = node.aabb().distance_to(point);
            if dist >= best {
                continue;
            }
            match node.children() {
                Some(children) => stack.extend(children),
                None => best = dist,
            }
        }
        best
    }
}

fn morton_encode(index: [u32; 3]) -> u64 {
    fn spread(v: u32) -> u64 {
        let mut x = (v as u64) & 0x1f_ffff;
        x = (x | (x << 32)) & 0x1f00000000ffff;
        x = (x | (x << 16)) & 0x1f0000ff0000ff;
        x = (x | (x << 8)) & 0x100f00f00f00f00f;
        x = (x | (x << 4)) & 0x10c30c30c30c30c3;
        x = (x | (x << 2)) & 0x1249249249249249;
        x
    }
    spread(index[0]) | (spread(index[1]) << 1) | (spread(index[2]) << 2)
}

/// Collects occupied finest cells and assembles the octree.
#[derive(Debug, Clone)]
pub struct OctreeBuilder<T: Real> {
    origin: Vector3<T>,
    min_cell_size: T,
    config: OctreeConfig,
    grid_min: [u32; 3],
    grid_dims: [u32; 3],
    occupied: Vec<u64>,
}

impl<T: Real> OctreeBuilder<T> {
    /// Prepares a map covering `bounds`.
    ///
    /// The grid is centered on the center of the height `root - 2` node that
    /// touches the root center, snapped to a 16-cell lattice (node alignment
    /// relative to `bounds.min` is kept up to height 4). Robots inside a grid
    /// of up to about 14 m then stay within `d_max` of the centers of the root
    /// and of its containing child, so those two levels are always refined.
    pub fn new(bounds: Aabb<T>, min_cell_size: T, config: OctreeConfig) -> Result<Self, MapError> {
        if !bounds.is_nonempty() {
            return Err(MapError::EmptyBounds);
        }
        if !(min_cell_size.is_finite() && min_cell_size > T::zero()) {
            return Err(MapError::InvalidCellSize(min_cell_size.as_f64()));
        }
        if config.num_levels == 0 || config.num_levels > MAX_LEVELS {
            return Err(MapError::InvalidLevels(config.num_levels));
        }
        let capacity = 1u64 << (config.num_levels - 1);
        let extent = bounds.extent();
        let mut grid_dims = [0u32; 3];
        for axis in 0..3 {
            let cells = (extent[axis] / min_cell_size).as_f64();
            let needed = ((cells - 1e-6).ceil() as u64).max(1);
            if needed > capacity {
                return Err(MapError::Capacity {
                    needed,
                    capacity,
                    num_levels: config.num_levels,
                });
            }
            grid_dims[axis] = needed as u32;
        }
        let grid_min = grid_dims.map(|d| {
            let d = d as u64;
            let centered = (3 * capacity / 8).saturating_sub(d / 2) / 16 * 16;
            centered.min(capacity - d) as u32
        });
        let shift = Vector3::from_fn(|a, _| T::lit(grid_min[a] as f64)) * min_cell_size;
        Ok(Self {
            origin: bounds.min - shift,
            min_cell_size,
            config,
            grid_min,
            grid_dims,
            occupied: Vec::new(),
        })
    }

    pub fn grid_min(&self) -> [u32; 3] {
        self.grid_min
    }

    pub fn grid_dims(&self) -> [u32; 3] {
        self.grid_dims
    }

    /// Marks the finest cell `index`, given in tree coordinates (see [`Self::grid_min`]).
    pub fn insert_cell(&mut self, index: [u32; 3]) -> Result<(), MapError> {
        if (0..3).any(|a| index[a] < self.grid_min[a] || index[a] - self.grid_min[a] >= self.grid_dims[a]) {
            return Err(MapError::CellOutOfGrid {
                index,
                dims: self.grid_dims,
            });
        }
        self.occupied.push(morton_encode(index));
        Ok(())
    }

    /// Marks every finest cell whose center lies inside `aabb` (boundary inclusive).
    /// Returns the number of cells touched, duplicates included.
    pub fn insert_box(&mut self, aabb: &Aabb<T>) -> usize {
        let mut lo = [0u32; 3];
        let mut hi = [0u32; 3];
        for axis in 0..3 {
            let scale = self.min_cell_size;
            let first = ((aabb.min[axis] - self.origin[axis]) / scale).as_f64() - 0.5;
            let last = ((aabb.max[axis] - self.origin[axis]) / scale).as_f64() - 0.5;
            let bottom = self.grid_min[axis] as f64;
            let first = (first - 1e-9).ceil().max(bottom);
            let last = (last + 1e-9).floor();
            let top = bottom + (self.grid_dims[axis] - 1) as f64;
            if last < bottom || first > top || first > last {
                return 0;
            }
            lo[axis] = first as u32;
            hi[axis] = last.min(top) as u32;
        }
        let mut count = 0;
        for x in lo[0]..=hi[0] {
            for y in lo[1]..=hi[1] {
                for z in lo[2]..=hi[2] {
                    self.occupied.push(morton_encode([x, y, z]));
                    count += 1;
                }
            }
        }
        count
    }

    /// Marks the finest cell containing `point`. Returns `false` if it lies
    /// outside the mapped grid.
    pub fn insert_point(&mut self, point: &Vector3<T>) -> bool {
        let mut index = [0u32; 3];
        for axis in 0..3 {
            let lo = self.grid_min[axis];
            let rel = ((point[axis] - self.origin[axis]) / self.min_cell_size).as_f64() - lo as f64;
            let dim = self.grid_dims[axis];
            if !rel.is_finite() || rel < 0.0 || rel > dim as f64 {
                return false;
            }
            index[axis] = lo + (rel.floor() as u32).min(dim - 1);
        }
        self.occupied.push(morton_encode(index));
        true
    }

    pub fn build(mut self) -> OccupancyOctree<T> {
        self.occupied.sort_unstable();
        self.occupied.dedup();
        let mut nodes = Vec::with_capacity(1 + self.occupied.len() * 2);
        nodes.push(Node::leaf(Occupancy::Free, false));
        let root_height = self.config.num_levels - 1;
        let mut assembly = Assembly {
            nodes,
            grid_min: self.grid_min,
            grid_dims: self.grid_dims,
            unknown_as_occupied: self.config.unknown_as_occupied,
        };
        assembly.build(0, NodeAddress::new(root_height, [0, 0, 0]), &self.occupied);
        let mut nodes = assembly.nodes;
        nodes.shrink_to_fit();
        OccupancyOctree {
            origin: self.origin,
            min_cell_size: self.min_cell_size,
            num_levels: self.config.num_levels,
            grid_min: self.grid_min,
            grid_dims: self.grid_dims,
            unknown_as_occupied: self.config.unknown_as_occupied,
            nodes,
            occupied_count: self.occupied.len(),
        }
    }
}

struct Assembly {
    nodes: Vec<Node>,
    grid_min: [u32; 3],
    grid_dims: [u32; 3],
    unknown_as_occupied: bool,
}

impl Assembly {
    fn is_obstacle(&self, occupancy: Occupancy) -> bool {
        occupancy == Occupancy::Occupied || (occupancy == Occupancy::Unknown && self.unknown_as_occupied)
    }

    /// Fills node `id` at `address`; `codes` are the sorted Morton keys of the
    /// occupied cells inside it.
    fn build(&mut self, id: u32, address: NodeAddress, codes: &[u64]) {
        let h = address.height as u32;
        let span = 1u64 << h;
        let mut inside = true;
        let mut outside = false;
        for axis in 0..3 {
            let lo = address.index[axis] as u64 * span;
            let grid_lo = self.grid_min[axis] as u64;
            let grid_hi = grid_lo + self.grid_dims[axis] as u64;
            if lo >= grid_hi || lo + span <= grid_lo {
                outside = true;
            } else if lo < grid_lo || lo + span > grid_hi {
                inside = false;
            }
        }

        if codes.is_empty() && (outside || inside) {
            let occupancy = if outside { Occupancy::Unknown } else { Occupancy::Free };
            self.nodes[id as usize] = Node::leaf(occupancy, self.is_obstacle(occupancy));
            return;
        }
        if h == 0 {
            // A leaf either lies fully inside the grid or fully outside it.
            self.nodes[id as usize] = Node::leaf(Occupancy::Occupied, true);
            return;
        }

        let first_child = self.nodes.len() as u32;
        self.nodes
            .extend(std::iter::repeat_n(Node::leaf(Occupancy::Free, false), 8));
        let shift = 3 * (h - 1);
        let mut rest = codes;
        for octant in 0..8u64 {
            let split = rest.partition_point(|&code| (code >> shift) & 7 == octant);
            let (mine, tail) = rest.split_at(split);
            rest = tail;
            self.build(first_child + octant as u32, address.child(octant as usize), mine);
        }

        let children = &self.nodes[first_child as usize..first_child as usize + 8];
        let mut any_occupied = false;
        let mut has_occupied = false;
        let mut has_unknown = false;
        let mut uniform = true;
        for child in children {
            any_occupied |= child.any_occupied;
            has_occupied |= child.occupancy == Occupancy::Occupied;
            has_unknown |= child.occupancy == Occupancy::Unknown;
            uniform &= child.first_child == NO_CHILDREN
                && child.occupancy == children[0].occupancy
                && child.occupancy != Occupancy::Occupied;
        }
        let occupancy = if has_occupied {
            Occupancy::Occupied
        } else if has_unknown {
            Occupancy::Unknown
        } else {
            Occupancy::Free
        };
        if uniform && first_child as usize + 8 == self.nodes.len() {
            self.nodes.truncate(first_child as usize);
            self.nodes[id as usize] = Node::leaf(occupancy, self.is_obstacle(occupancy));
            return;
        }
        self.nodes[id as usize] = Node {
            occupancy,
            any_occupied: any_occupied || self.is_obstacle(occupancy),
            first_child,
        };
    }
}

/// Builds a map whose occupied cells are the finest cells with centers inside any box.
pub fn build_from_boxes<T: Real>(
    boxes: &[Aabb<T>],
    bounds: Aabb<T>,
    min_cell_size: T,
    config: OctreeConfig,
) -> Result<OccupancyOctree<T>, MapError> {
    let mut builder = OctreeBuilder::new(bounds, min_cell_size, config)?;
    for b in boxes {
        builder.insert_box(b);
    }
    Ok(builder.build())
}

/// Map built from a point cloud, plus the number of points rejected as out of bounds.
#[derive(Debug, Clone)]
pub struct PointCloudMap<T: Real> {
    pub map: OccupancyOctree<T>,
    pub rejected: usize,
}

/// Builds a map whose occupied cells are exactly the finest cells containing a point.
pub fn build_from_points<T: Real>(
    points: &[Vector3<T>],
    min_cell_size: T,
    bounds: Aabb<T>,
    config: OctreeConfig,
) -> Result<PointCloudMap<T>, MapError> {
    let mut builder = OctreeBuilder::new(bounds, min_cell_size, config)?;
    let rejected = points.iter().filter(|p| !builder.insert_point(p)).count();
    Ok(PointCloudMap {
        map: builder.build(),
        rejected,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit_bounds(side: f64) -> Aabb<f64> {
        Aabb::from_arrays([0.0; 3], [side; 3])
    }

    /// Recursive OR over leaves, ignoring the cached flag.
    fn brute_any(node: NodeRef<'_, f64>) -> bool {
        match node.children() {
            Some(children) => children.into_iter().any(brute_any),
            None => node.is_occupied(),
        }
    }

    #[test]
    fn one_cubic_metre_box_marks_1000_cells() {
        let boxes = [Aabb::from_arrays([1.0; 3], [2.0; 3])];
        let map = build_from_boxes(&boxes, unit_bounds(4.0), 0.1, OctreeConfig::default()).unwrap();
        assert_eq!(map.occupied_count(), 1000);
        assert_eq!(map.occupied_cells().len(), 1000);
    }

    #[test]
    fn empty_scene_has_no_occupied_root() {
        let map = build_from_boxes(&[], unit_bounds(4.0), 0.1, OctreeConfig::default()).unwrap();
        assert!(!map.root().has_occupied_descendant());
        assert_eq!(map.occupied_count(), 0);
    }

    #[test]
    fn aligned_block_forms_single_full_height_two_node() {
        // 4x4x4 cells starting at a multiple of 0.4 m
        let boxes = [Aabb::from_arrays([0.8; 3], [1.2; 3])];
        let map = build_from_boxes(&boxes, unit_bounds(3.2), 0.1, OctreeConfig::default()).unwrap();
        assert_eq!(map.occupied_count(), 64);
        let mut full = Vec::new();
        map.for_each_node(|node| {
            if node.height() == 2 {
                let mut leaves = 0;
                let mut stack = vec![node];
                while let Some(n) = stack.pop() {
                    match n.children() {
                        Some(c) => stack.extend(c),
                        None => leaves += (n.occupancy() == Occupancy::Occupied) as usize,
                    }
                }
                if leaves == 64 {
                    full.push(node.address());
                }
            }
        });
        let g = map.grid_min().map(|v| v / 4);
        assert_eq!(full, vec![NodeAddress::new(2, [g[0] + 2, g[1] + 2, g[2] + 2])]);
    }

    #[test]
    fn single_point_and_duplicates() {
        let bounds = unit_bounds(2.0);
        let p = Vector3::new(0.55, 0.55, 0.55);
        let one = build_from_points(&[p], 0.1, bounds, OctreeConfig::default()).unwrap();
        assert_eq!(one.map.occupied_count(), 1);
        let two = build_from_points(
            &[p, Vector3::new(0.52, 0.58, 0.51)],
            0.1,
            bounds,
            OctreeConfig::default(),
        )
        .unwrap();
        assert_eq!(two.map.occupied_count(), 1);
        assert_eq!(two.rejected, 0);
    }

    #[test]
    fn out_of_bounds_points_are_counted() {
        let cloud = [
            Vector3::new(0.5, 0.5, 0.5),
            Vector3::new(-0.1, 0.5, 0.5),
            Vector3::new(0.5, 9.0, 0.5),
        ];
        let built = build_from_points(&cloud, 0.1, unit_bounds(2.0), OctreeConfig::default()).unwrap();
        assert_eq!(built.rejected, 2);
        assert_eq!(built.map.occupied_count(), 1);
    }

    #[test]
    fn queries_inside_outside_and_beyond_bounds() {
        let boxes = [Aabb::from_arrays([1.0; 3], [2.0; 3])];
        let map = build_from_boxes(&boxes, unit_bounds(4.0), 0.1, OctreeConfig::default()).unwrap();
        assert_eq!(map.query_occupancy(&Vector3::repeat(1.5)), Occupancy::Occupied);
        assert_eq!(map.query_occupancy(&Vector3::repeat(3.0)), Occupancy::Free);
        assert_eq!(map.query_occupancy(&Vector3::repeat(4.5)), Occupancy::Unknown);
        assert_eq!(map.query_occupancy(&Vector3::new(-0.01, 1.0, 1.0)), Occupancy::Unknown);
    }

    #[test]
    fn capacity_error_when_bounds_exceed_tree() {
        let err = OctreeBuilder::new(unit_bounds(60.0), 0.1, OctreeConfig::default()).unwrap_err();
        assert!(matches!(
            err,
            MapError::Capacity {
                needed: 600,
                capacity: 512,
                ..
            }
        ));
        assert!(OctreeBuilder::new(unit_bounds(51.2), 0.1, OctreeConfig::default()).is_ok());
    }

    #[test]
    fn rejects_degenerate_inputs() {
        let flat = Aabb::from_arrays([0.0; 3], [1.0, 1.0, 0.0]);
        assert_eq!(
            OctreeBuilder::new(flat, 0.1, OctreeConfig::default()).unwrap_err(),
            MapError::EmptyBounds
        );
        assert!(matches!(
            OctreeBuilder::new(unit_bounds(1.0), 0.0, OctreeConfig::default()),
            Err(MapError::InvalidCellSize(_))
        ));
        let cfg = OctreeConfig {
            num_levels: 0,
            ..Default::default()
        };
        assert!(matches!(
            OctreeBuilder::new(unit_bounds(1.0), 0.1, cfg),
            Err(MapError::InvalidLevels(0))
        ));
    }

    #[test]
    fn single_deep_leaf_flags_every_ancestor() {
        let mut builder = OctreeBuilder::new(
            unit_bounds(12.8),
            0.1,
            OctreeConfig {
                num_levels: 8,
                ..Default::default()
            },
        )
        .unwrap();
        builder.insert_cell([77, 3, 100]).unwrap();
        let map = builder.build();
        let leaf = NodeAddress::new(0, [77, 3, 100]);
        for h in 0..map.num_levels() {
            let node = map.locate(&leaf.ancestor_at(h));
            assert_eq!(node.height(), h);
            assert!(node.has_occupied_descendant());
        }
        // a sibling subtree stays collapsed and free
        let other = map.locate(&NodeAddress::new(3, [0, 12, 0]));
        assert!(!other.has_occupied_descendant());
        assert_eq!(other.occupancy(), Occupancy::Free);
    }

    #[test]
    fn free_subtrees_are_collapsed() {
        let mut builder = OctreeBuilder::new(
            unit_bounds(25.6),
            0.1,
            OctreeConfig {
                num_levels: 9,
                ..Default::default()
            },
        )
        .unwrap();
        builder.insert_cell([0, 0, 0]).unwrap();
        let map = builder.build();
        // one path of 8 interior nodes with 8 children each
        assert_eq!(map.node_count(), 1 + 8 * 8);
    }

    #[test]
    fn aggregation_matches_recursive_or() {
        let mut builder = OctreeBuilder::new(
            Aabb::from_arrays([0.0; 3], [3.0, 2.5, 1.7]),
            0.1,
            OctreeConfig {
                num_levels: 6,
                ..Default::default()
            },
        )
        .unwrap();
        let mut state = 12345u64;
        for _ in 0..300 {
            state = state
                .wrapping_mul(6364136223846793005)
                .wrapping_add(1442695040888963407);
            let x = (state >> 33) as u32 % 30;
            let y = (state >> 20) as u32 % 25;
            let z = (state >> 7) as u32 % 17;
            builder.insert_cell([x, y, z]).unwrap();
        }
        let map = builder.build();
        map.for_each_node(|node| assert_eq!(node.has_occupied_descendant(), brute_any(node)));
    }

    #[test]
    fn unknown_space_outside_bounds_and_flag() {
        let bounds = Aabb::from_arrays([0.0; 3], [1.0, 1.0, 1.0]);
        let cfg = OctreeConfig {
            num_levels: 5,
            unknown_as_occupied: false,
        };
        let map = build_from_boxes(&[], bounds, 0.1, cfg).unwrap();
        assert_eq!(map.root().occupancy(), Occupancy::Unknown);
        assert!(!map.root().has_occupied_descendant());

        let cfg = OctreeConfig {
            num_levels: 5,
            unknown_as_occupied: true,
        };
        let map = build_from_boxes(&[], bounds, 0.1, cfg).unwrap();
        assert!(map.root().has_occupied_descendant());
        map.for_each_node(|node| assert_eq!(node.has_occupied_descendant(), brute_any(node)));
    }

    #[test]
    fn child_centers_offset_by_half_child_side() {
        let map = build_from_boxes(
            &[Aabb::from_arrays([0.0; 3], [0.3; 3])],
            unit_bounds(1.6),
            0.1,
            OctreeConfig {
                num_levels: 5,
                ..Default::default()
            },
        )
        .unwrap();
        map.for_each_node(|node| {
            if let Some(children) = node.children() {
                for child in children {
                    let offset = child.center() - node.center();
                    let half = child.side_length() / 2.0;
                    for a in 0..3 {
                        assert!((offset[a].abs() - half).abs() < 1e-12);
                    }
                }
            }
        });
    }

    #[test]
    fn nearest_distance_matches_scan() {
        let boxes = [
            Aabb::from_arrays([1.0, 1.0, 0.0], [1.3, 2.0, 0.5]),
            Aabb::from_arrays([2.5, 0.2, 0.8], [2.7, 0.4, 1.0]),
        ];
        let map = build_from_boxes(
            &boxes,
            unit_bounds(3.2),
            0.1,
            OctreeConfig {
                num_levels: 6,
                ..Default::default()
            },
        )
        .unwrap();
        let cells = map.occupied_cells();
        for p in [
            Vector3::new(0.1, 0.1, 0.1),
            Vector3::new(2.0, 1.5, 0.3),
            Vector3::new(1.15, 1.5, 0.2),
            Vector3::new(3.1, 3.1, 3.1),
        ] {
            let scan = cells
                .iter()
                .map(|&c| Aabb::cube(map.center(&NodeAddress::new(0, c)), 0.1).distance_to(&p))
                .fold(2.0f64, f64::min);
            assert!((map.nearest_occupied_distance(&p, 2.0) - scan).abs() < 1e-12);
        }
    }

    #[test]
    fn works_in_single_precision() {
        let boxes = [Aabb::from_arrays([1.0f32; 3], [2.0; 3])];
        let map = build_from_boxes(
            &boxes,
            Aabb::from_arrays([0.0; 3], [4.0; 3]),
            0.1f32,
            OctreeConfig::default(),
        )
        .unwrap();
        assert_eq!(map.occupied_count(), 1000);
        assert_eq!(map.query_occupancy(&Vector3::repeat(1.5f32)), Occupancy::Occupied);
    }
}
