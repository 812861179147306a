//! Scene data: point clouds, density maps, annotated floorplans and padded
//! training targets.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::DataError;
use crate::geometry::{ensure_ccw, signed_area, Point2, VertexSeq};

/// Number of semantic room classes; the empty class is index `NUM_ROOM_TYPES`.
pub const NUM_ROOM_TYPES: usize = 16;

/// 3D points in meters, `z` is the gravity axis.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PointCloud {
    pub points: Vec<[f64; 3]>,
}

/// Axis-aligned 2D box in world units.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bounds {
    pub min_x: f64,
    pub min_y: f64,
    pub max_x: f64,
    pub max_y: f64,
}

impl Bounds {
    pub fn new(min_x: f64, min_y: f64, max_x: f64, max_y: f64) -> Self {
        Self {
            min_x,
            min_y,
            max_x,
            max_y,
        }
    }

    fn is_valid(&self) -> bool {
        self.max_x > self.min_x && self.max_y > self.min_y
    }

    /// Pixel `(col, row)` for a world point, `None` outside the box.
    /// The upper edge is inclusive and maps to the last pixel.
    pub fn pixel_of(&self, x: f64, y: f64, width: usize, height: usize) -> Option<(usize, usize)> {
        if !(x >= self.min_x && x <= self.max_x && y >= self.min_y && y <= self.max_y) {
            return None;
        }
        let u = (x - self.min_x) / (self.max_x - self.min_x) * width as f64;
        let v = (y - self.min_y) / (self.max_y - self.min_y) * height as f64;
        let col = (libm::floor(u) as usize).min(width - 1);
        let row = (libm::floor(v) as usize).min(height - 1);
        Some((col, row))
    }
}

/// Optional filtering applied during projection.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct ProjectionOptions {
    /// Keep only points with `z` in this closed range.
    pub z_range: Option<(f64, f64)>,
}

/// Top-down point density normalized by the maximum bin count.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityMap {
    pub width: usize,
    pub height: usize,
    /// Row-major, row index = image `y`.
    pub values: Vec<f32>,
}

impl DensityMap {
    pub fn zeros(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            values: vec![0.0; width * height],
        }
    }

    pub fn get(&self, col: usize, row: usize) -> f32 {
        self.values[row * self.width + col]
    }
}

/// Per-pixel point counts; shared by the density map and the occupancy grid.
pub fn bin_counts(
    cloud: &PointCloud,
    bounds: &Bounds,
    width: usize,
    height: usize,
    options: &ProjectionOptions,
) -> Result<Vec<u32>, DataError> {
    if cloud.points.is_empty() {
        return Err(DataError::EmptyCloud);
    }
    if !bounds.is_valid() || width == 0 || height == 0 {
        return Err(DataError::InvalidBounds);
    }
    let mut counts = vec![0u32; width * height];
    for &[x, y, z] in &cloud.points {
        if let Some((lo, hi)) = options.z_range {
            if !(z >= lo && z <= hi) {
                continue;
            }
        }
        if let Some((col, row)) = bounds.pixel_of(x, y, width, height) {
            counts[row * width + col] += 1;
        }
    }
    Ok(counts)
}

/// Projects a cloud along `z` and divides each pixel count by the maximum
/// count. Points outside `bounds` are ignored.
pub fn project_to_density(
    cloud: &PointCloud,
    bounds: &Bounds,
    width: usize,
    height: usize,
    options: &ProjectionOptions,
) -> Result<DensityMap, DataError> {
    let counts = bin_counts(cloud, bounds, width, height, options)?;
    let max = counts.iter().copied().max().unwrap_or(0);
    if max == 0 {
        return Err(DataError::NoPointsInBounds);
    }
    let inv = 1.0 / max as f64;
    Ok(DensityMap {
        width,
        height,
        values: counts.iter().map(|&c| (c as f64 * inv) as f32).collect(),
    })
}

/// A 2-point line element (door or window) in pixel coordinates.
pub type Line = [Point2; 2];

#[derive(Debug, Clone, PartialEq)]
pub struct Room {
    /// CCW corners in pixel coordinates.
    pub corners: VertexSeq,
    pub room_type: u32,
}

/// Annotated scene in pixel coordinates.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Floorplan {
    pub width: usize,
    pub height: usize,
    pub rooms: Vec<Room>,
    pub doors: Vec<Line>,
    pub windows: Vec<Line>,
}

impl Floorplan {
    pub fn new(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            ..Self::default()
        }
    }

    /// Checks room invariants: at least three vertices, no repeated
    /// consecutive vertex, positive (CCW) area, coordinates inside the map.
    pub fn validate(&self) -> Result<(), DataError> {
        let (w, h) = (self.width as f64, self.height as f64);
        for (index, room) in self.rooms.iter().enumerate() {
            let pts = room.corners.points();
            let bad = |source| DataError::InvalidRoom { index, source };
            if pts.len() < 3 || has_repeated_vertex(pts) {
                return Err(bad(crate::GeometryError::Degenerate));
            }
            if signed_area(&room.corners) <= 0.0 {
                return Err(bad(crate::GeometryError::Degenerate));
            }
            if pts
                .iter()
                .any(|p| !p.is_finite() || p.x < 0.0 || p.y < 0.0 || p.x > w || p.y > h)
            {
                return Err(bad(crate::GeometryError::Degenerate));
            }
        }
        Ok(())
    }

    /// Reorients clockwise rooms in place; returns how many were flipped.
    pub fn orient_rooms(&mut self) -> Result<usize, DataError> {
        let mut flipped = 0;
        for (index, room) in self.rooms.iter_mut().enumerate() {
            let ccw = ensure_ccw(&room.corners)
                .map_err(|source| DataError::InvalidRoom { index, source })?;
            if ccw != room.corners {
                flipped += 1;
                room.corners = ccw;
            }
        }
        Ok(flipped)
    }

    pub fn to_normalized(&self, p: Point2) -> Point2 {
        Point2::new(p.x / self.width as f64, p.y / self.height as f64)
    }

    pub fn to_pixels(&self, p: Point2) -> Point2 {
        Point2::new(p.x * self.width as f64, p.y * self.height as f64)
    }

    /// Room polygons mapped to `[0, 1]`.
    pub fn normalized_rooms(&self) -> Vec<VertexSeq> {
        self.rooms
            .iter()
            .map(|r| r.corners.map(|p| self.to_normalized(p)))
            .collect()
    }
}

fn has_repeated_vertex(pts: &[Point2]) -> bool {
    let n = pts.len();
    (0..n).any(|i| pts[i] == pts[(i + 1) % n])
}

/// Groundtruth polygons padded to `m` slots of `n` vertices.
///
/// Padding vertices hold the sentinel `(0, 0)` with label 0; they are
/// excluded from every coordinate term through `lengths`.
#[derive(Debug, Clone, PartialEq)]
pub struct PaddedTargets {
    pub m: usize,
    pub n: usize,
    /// `m * n` normalized coordinates, row-major by polygon.
    pub coords: Vec<Point2>,
    /// `m * n` validity labels in `{0, 1}`.
    pub labels: Vec<u8>,
    /// Vertex count per slot, 0 for padded slots.
    pub lengths: Vec<usize>,
    /// Semantic class per slot, `None` for padded slots.
    pub types: Vec<Option<u32>>,
    /// Number of real polygons; they occupy the first `gt_count` slots.
    pub gt_count: usize,
}

impl PaddedTargets {
    pub fn from_polygons(
        polygons: &[VertexSeq],
        types: Option<&[u32]>,
        m: usize,
        n: usize,
    ) -> Result<Self, DataError> {
        if polygons.len() > m {
            return Err(DataError::TooManyPolygons {
                rooms: polygons.len(),
                capacity: m,
            });
        }
        let mut coords = vec![Point2::default(); m * n];
        let mut labels = vec![0u8; m * n];
        let mut lengths = vec![0usize; m];
        let mut slot_types = vec![None; m];
        for (index, poly) in polygons.iter().enumerate() {
            if poly.len() > n {
                return Err(DataError::TooManyVertices {
                    index,
                    vertices: poly.len(),
                    capacity: n,
                });
            }
            for (k, &p) in poly.iter().enumerate() {
                coords[index * n + k] = p;
                labels[index * n + k] = 1;
            }
            lengths[index] = poly.len();
            slot_types[index] = Some(types.map_or(0, |t| t[index]));
        }
        Ok(Self {
            m,
            n,
            coords,
            labels,
            lengths,
            types: slot_types,
            gt_count: polygons.len(),
        })
    }

    pub fn coords_row(&self, slot: usize) -> &[Point2] {
        &self.coords[slot * self.n..(slot + 1) * self.n]
    }

    pub fn labels_row(&self, slot: usize) -> &[u8] {
        &self.labels[slot * self.n..(slot + 1) * self.n]
    }

    /// The unpadded vertex prefix of slot `slot`.
    pub fn polygon(&self, slot: usize) -> &[Point2] {
        &self.coords_row(slot)[..self.lengths[slot]]
    }

    /// Inverse of padding: the real polygons in slot order.
    pub fn unpad(&self) -> Vec<VertexSeq> {
        (0..self.gt_count)
            .map(|s| VertexSeq(self.polygon(s).to_vec()))
            .collect()
    }
}

/// Normalizes a scene's rooms to `[0, 1]` and pads them.
pub fn pad_targets(plan: &Floorplan, m: usize, n: usize) -> Result<PaddedTargets, DataError> {
    let polys = plan.normalized_rooms();
    let types: Vec<u32> = plan.rooms.iter().map(|r| r.room_type).collect();
    PaddedTargets::from_polygons(&polys, Some(&types), m, n)
}
