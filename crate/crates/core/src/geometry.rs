//! Polygon and line primitives.
//!
//! Coordinates follow the image convention: origin at the top-left corner,
//! `x` to the right, `y` downward. Normalized coordinates live in `[0, 1]`
//! on both axes.
//!
//! Orientation is defined purely algebraically: a vertex sequence is
//! *counter-clockwise* (CCW) when its shoelace area
//! `0.5 * Σ (x_i * y_{i+1} - x_{i+1} * y_i)` is positive in the stored
//! `(x, y)` values. With `y` pointing down this appears clockwise on screen;
//! every module in this crate uses the same definition.

use alloc::vec;
use alloc::vec::Vec;
use core::ops::{Add, Index, Mul, Sub};

use crate::error::GeometryError;

/// A 2D point. Normalized unless stated otherwise.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Point2 {
    pub x: f64,
    pub y: f64,
}

impl Point2 {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn dot(self, other: Self) -> f64 {
        self.x * other.x + self.y * other.y
    }

    /// z-component of the 3D cross product.
    pub fn cross(self, other: Self) -> f64 {
        self.x * other.y - self.y * other.x
    }

    pub fn norm(self) -> f64 {
        libm::sqrt(self.dot(self))
    }

    pub fn distance(self, other: Self) -> f64 {
        (self - other).norm()
    }

    pub fn l1_distance(self, other: Self) -> f64 {
        libm::fabs(self.x - other.x) + libm::fabs(self.y - other.y)
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }
}

impl Add for Point2 {
    type Output = Self;
    fn add(self, rhs: Self) -> Self {
        Self::new(self.x + rhs.x, self.y + rhs.y)
    }
}

impl Sub for Point2 {
    type Output = Self;
    fn sub(self, rhs: Self) -> Self {
        Self::new(self.x - rhs.x, self.y - rhs.y)
    }
}

impl Mul<f64> for Point2 {
    type Output = Self;
    fn mul(self, rhs: f64) -> Self {
        Self::new(self.x * rhs, self.y * rhs)
    }
}

impl From<(f64, f64)> for Point2 {
    fn from((x, y): (f64, f64)) -> Self {
        Self::new(x, y)
    }
}

impl From<[f64; 2]> for Point2 {
    fn from([x, y]: [f64; 2]) -> Self {
        Self::new(x, y)
    }
}

/// An ordered vertex sequence. Consecutive vertices are connected; closed
/// polygons additionally connect the last vertex back to the first.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct VertexSeq(pub Vec<Point2>);

impl VertexSeq {
    pub fn new(points: Vec<Point2>) -> Self {
        Self(points)
    }

    pub fn from_xy(points: &[(f64, f64)]) -> Self {
        Self(points.iter().copied().map(Point2::from).collect())
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn points(&self) -> &[Point2] {
        &self.0
    }

    pub fn iter(&self) -> core::slice::Iter<'_, Point2> {
        self.0.iter()
    }

    /// Edges `(v_i, v_{i+1})` including the closing edge.
    pub fn closed_edges(&self) -> impl Iterator<Item = (Point2, Point2)> + '_ {
        let n = self.0.len();
        (0..n).map(move |i| (self.0[i], self.0[(i + 1) % n]))
    }

    pub fn reversed(&self) -> Self {
        let mut pts = self.0.clone();
        pts.reverse();
        Self(pts)
    }

    /// Rotates the start index: element `i` of the result is `self[(i + shift) % n]`.
    pub fn rotated(&self, shift: usize) -> Self {
        let mut pts = self.0.clone();
        if !pts.is_empty() {
            let s = shift % pts.len();
            pts.rotate_left(s);
        }
        Self(pts)
    }

    pub fn map(&self, f: impl Fn(Point2) -> Point2) -> Self {
        Self(self.0.iter().copied().map(f).collect())
    }

    pub fn centroid(&self) -> Point2 {
        if self.0.is_empty() {
            return Point2::default();
        }
        let sum = self.0.iter().fold(Point2::default(), |acc, &p| acc + p);
        sum * (1.0 / self.0.len() as f64)
    }
}

impl Index<usize> for VertexSeq {
    type Output = Point2;
    fn index(&self, i: usize) -> &Point2 {
        &self.0[i]
    }
}

impl From<Vec<Point2>> for VertexSeq {
    fn from(points: Vec<Point2>) -> Self {
        Self(points)
    }
}

/// Shoelace signed area; positive for CCW (see module docs). Returns 0 for
/// fewer than three vertices or collinear input.
pub fn signed_area(poly: &VertexSeq) -> f64 {
    if poly.len() < 3 {
        return 0.0;
    }
    0.5 * poly.closed_edges().map(|(a, b)| a.cross(b)).sum::<f64>()
}

/// Returns `poly` or its reversal so that the signed area is positive.
pub fn ensure_ccw(poly: &VertexSeq) -> Result<VertexSeq, GeometryError> {
    let area = signed_area(poly);
    if poly.len() < 3 || area == 0.0 || !area.is_finite() {
        return Err(GeometryError::Degenerate);
    }
    Ok(if area > 0.0 { poly.clone() } else { poly.reversed() })
}

/// Sum of per-vertex L1 distances between `gt` rotated by `shift` and `pred`.
fn rotation_cost(gt: &[Point2], pred: &[Point2], shift: usize) -> f64 {
    let n = gt.len();
    (0..n).map(|i| gt[(i + shift) % n].l1_distance(pred[i])).sum()
}

/// Minimum over cyclic rotations of `gt` of the summed L1 distance to `pred`,
/// together with the minimizing rotation (lowest shift on ties).
///
/// Orientation is not searched: `gt` is expected to be CCW already, so only
/// its starting vertex varies.
pub fn best_rotation(gt: &[Point2], pred: &[Point2]) -> Result<(usize, f64), GeometryError> {
    if gt.len() != pred.len() {
        return Err(GeometryError::LengthMismatch {
            expected: gt.len(),
            found: pred.len(),
        });
    }
    let mut best = (0, f64::INFINITY);
    for shift in 0..gt.len() {
        let cost = rotation_cost(gt, pred, shift);
        if cost < best.1 {
            best = (shift, cost);
        }
    }
    if gt.is_empty() {
        best.1 = 0.0;
    }
    Ok(best)
}

pub fn cyclic_coord_distance(gt: &VertexSeq, pred: &VertexSeq) -> Result<f64, GeometryError> {
    best_rotation(gt.points(), pred.points()).map(|(_, d)| d)
}

/// Subgradient of the cyclic distance with respect to `pred`, using the
/// minimizing rotation. Exact wherever that rotation is unique and no
/// coordinate difference is zero.
pub fn cyclic_coord_distance_grad(
    gt: &[Point2],
    pred: &[Point2],
) -> Result<(f64, Vec<[f64; 2]>), GeometryError> {
    let (shift, dist) = best_rotation(gt, pred)?;
    let n = gt.len();
    let grad = (0..n)
        .map(|i| {
            let d = pred[i] - gt[(i + shift) % n];
            [sign(d.x), sign(d.y)]
        })
        .collect();
    Ok((dist, grad))
}

fn sign(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Square occupancy grid, row-major, row index = y.
#[derive(Debug, Clone, PartialEq)]
pub struct RasterMask {
    resolution: usize,
    cells: Vec<f64>,
}

impl RasterMask {
    pub fn zeros(resolution: usize) -> Self {
        Self {
            resolution,
            cells: vec![0.0; resolution * resolution],
        }
    }

    pub fn resolution(&self) -> usize {
        self.resolution
    }

    pub fn cells(&self) -> &[f64] {
        &self.cells
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.cells[row * self.resolution + col]
    }

    pub fn sum(&self) -> f64 {
        self.cells.iter().sum()
    }
}

/// Normalized center of cell `(row, col)`.
#[inline]
fn cell_center(row: usize, col: usize, resolution: usize) -> Point2 {
    let r = resolution as f64;
    Point2::new((col as f64 + 0.5) / r, (row as f64 + 0.5) / r)
}

/// Even-odd point-in-polygon test.
pub fn contains_even_odd(poly: &[Point2], p: Point2) -> bool {
    let n = poly.len();
    if n < 3 {
        return false;
    }
    let mut inside = false;
    let mut j = n - 1;
    for i in 0..n {
        let (a, b) = (poly[i], poly[j]);
        if (a.y > p.y) != (b.y > p.y) {
            let x_cross = a.x + (p.y - a.y) * (b.x - a.x) / (b.y - a.y);
            if p.x < x_cross {
                inside = !inside;
            }
        }
        j = i;
    }
    inside
}

/// Cells whose center is inside the polygon (even-odd rule) are 1.
pub fn rasterize_hard(poly: &VertexSeq, resolution: usize) -> RasterMask {
    let mut mask = RasterMask::zeros(resolution);
    if poly.len() < 3 || signed_area(poly) == 0.0 {
        return mask;
    }
    let pts = poly.points();
    // Scanline fill: for each row collect edge crossings at the cell-center y.
    let mut xs: Vec<f64> = Vec::new();
    let r = resolution as f64;
    for row in 0..resolution {
        let y = (row as f64 + 0.5) / r;
        xs.clear();
        let n = pts.len();
        let mut j = n - 1;
        for i in 0..n {
            let (a, b) = (pts[i], pts[j]);
            if (a.y > y) != (b.y > y) {
                xs.push(a.x + (y - a.y) * (b.x - a.x) / (b.y - a.y));
            }
            j = i;
        }
        xs.sort_by(|a, b| a.total_cmp(b));
        for pair in xs.chunks_exact(2) {
            // inside iff pair[0] <= center < pair[1], as in `contains_even_odd`
            let start = first_center_at_or_after(pair[0], resolution);
            let end = first_center_at_or_after(pair[1], resolution);
            for col in start..end {
                mask.cells[row * resolution + col] = 1.0;
            }
        }
    }
    mask
}

/// Smallest column whose center is `>= x`, in `0..=resolution`.
fn first_center_at_or_after(x: f64, resolution: usize) -> usize {
    let r = resolution as f64;
    let center = |col: usize| (col as f64 + 0.5) / r;
    let guess = libm::ceil(x * r - 0.5).clamp(0.0, r) as usize;
    let mut col = guess;
    while col > 0 && center(col - 1) >= x {
        col -= 1;
    }
    while col < resolution && center(col) < x {
        col += 1;
    }
    col
}

/// Raster IoU of two closed polygons at `resolution`. Degenerate inputs give 0.
pub fn polygon_iou(a: &VertexSeq, b: &VertexSeq, resolution: usize) -> f64 {
    let ma = rasterize_hard(a, resolution);
    let mb = rasterize_hard(b, resolution);
    mask_iou(&ma, &mb)
}

pub fn mask_iou(a: &RasterMask, b: &RasterMask) -> f64 {
    let (mut inter, mut union) = (0.0, 0.0);
    for (&x, &y) in a.cells.iter().zip(&b.cells) {
        inter += x.min(y);
        union += x.max(y);
    }
    if union == 0.0 {
        0.0
    } else {
        inter / union
    }
}

/// Closest point on segment `ab` to `p`, as (distance, parameter t).
#[inline]
fn segment_projection(p: Point2, a: Point2, b: Point2) -> (f64, f64) {
    let ab = b - a;
    let len2 = ab.dot(ab);
    let t = if len2 > 0.0 {
        ((p - a).dot(ab) / len2).clamp(0.0, 1.0)
    } else {
        0.0
    };
    let q = a + ab * t;
    ((p - q).norm(), t)
}

/// Euclidean distance from `p` to segment `ab`.
pub fn point_segment_distance(p: Point2, a: Point2, b: Point2) -> f64 {
    segment_projection(p, a, b).0
}

/// Nearest-edge query used by the soft rasterizer.
struct NearestEdge {
    edge: usize,
    distance: f64,
    t: f64,
}

fn nearest_edge(pts: &[Point2], p: Point2) -> NearestEdge {
    let n = pts.len();
    let mut best = NearestEdge {
        edge: 0,
        distance: f64::INFINITY,
        t: 0.0,
    };
    for i in 0..n {
        let (d, t) = segment_projection(p, pts[i], pts[(i + 1) % n]);
        if d < best.distance {
            best = NearestEdge { edge: i, distance: d, t };
        }
    }
    best
}

#[inline]
pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + libm::exp(-x))
    } else {
        let e = libm::exp(x);
        e / (1.0 + e)
    }
}

/// Signed-distance soft rasterizer: `sigmoid(sd / temperature)` per cell,
/// where `sd` is positive inside (even-odd) and negative outside.
pub fn rasterize_soft(
    poly: &VertexSeq,
    resolution: usize,
    temperature: f64,
) -> Result<RasterMask, GeometryError> {
    if !(temperature > 0.0) {
        return Err(GeometryError::NonPositiveTemperature(temperature));
    }
    let mut mask = RasterMask::zeros(resolution);
    let pts = poly.points();
    if pts.len() < 3 {
        return Ok(mask);
    }
    for row in 0..resolution {
        for col in 0..resolution {
            let c = cell_center(row, col, resolution);
            let near = nearest_edge(pts, c);
            let sd = if contains_even_odd(pts, c) {
                near.distance
            } else {
                -near.distance
            };
            mask.cells[row * resolution + col] = sigmoid(sd / temperature);
        }
    }
    Ok(mask)
}

/// Vector-Jacobian product of the soft rasterizer: given `upstream[cell]`
/// (dL/dmask), returns dL/dvertex for every vertex of `poly`.
pub fn rasterize_soft_vjp(
    poly: &VertexSeq,
    resolution: usize,
    temperature: f64,
    upstream: &[f64],
) -> Result<Vec<[f64; 2]>, GeometryError> {
    if !(temperature > 0.0) {
        return Err(GeometryError::NonPositiveTemperature(temperature));
    }
    if upstream.len() != resolution * resolution {
        return Err(GeometryError::LengthMismatch {
            expected: resolution * resolution,
            found: upstream.len(),
        });
    }
    let pts = poly.points();
    let n = pts.len();
    let mut grad = vec![[0.0; 2]; n];
    if n < 3 {
        return Ok(grad);
    }
    for row in 0..resolution {
        for col in 0..resolution {
            let g_up = upstream[row * resolution + col];
            if g_up == 0.0 {
                continue;
            }
            let c = cell_center(row, col, resolution);
            let near = nearest_edge(pts, c);
            if near.distance == 0.0 {
                continue;
            }
            let s = if contains_even_odd(pts, c) { 1.0 } else { -1.0 };
            let v = sigmoid(s * near.distance / temperature);
            // d value / d sd
            let dv = v * (1.0 - v) / temperature * g_up * s;
            let (a, b) = (pts[near.edge], pts[(near.edge + 1) % n]);
            let q = a + (b - a) * near.t;
            let u = (c - q) * (1.0 / near.distance);
            // d dist / d a = -(1 - t) u, d dist / d b = -t u
            let wa = -(1.0 - near.t) * dv;
            let wb = -near.t * dv;
            let ia = near.edge;
            let ib = (near.edge + 1) % n;
            grad[ia][0] += wa * u.x;
            grad[ia][1] += wa * u.y;
            grad[ib][0] += wb * u.x;
            grad[ib][1] += wb * u.y;
        }
    }
    Ok(grad)
}

/// Douglas-Peucker simplification of an open polyline. Removed vertices lie
/// strictly closer than `epsilon` to the segment that replaces them, so
/// `epsilon == 0` keeps every vertex.
pub fn douglas_peucker(line: &VertexSeq, epsilon: f64) -> VertexSeq {
    let pts = line.points();
    if pts.len() <= 2 {
        return line.clone();
    }
    let keep = dp_keep_mask(pts, epsilon);
    VertexSeq(
        pts.iter()
            .zip(&keep)
            .filter_map(|(&p, &k)| k.then_some(p))
            .collect(),
    )
}

fn dp_keep_mask(pts: &[Point2], epsilon: f64) -> Vec<bool> {
    let mut keep = vec![false; pts.len()];
    keep[0] = true;
    keep[pts.len() - 1] = true;
    let mut stack = vec![(0usize, pts.len() - 1)];
    while let Some((first, last)) = stack.pop() {
        if last <= first + 1 {
            continue;
        }
        let (mut max_d, mut max_i) = (-1.0, first + 1);
        for (i, &p) in pts.iter().enumerate().take(last).skip(first + 1) {
            let d = point_segment_distance(p, pts[first], pts[last]);
            if d > max_d {
                max_d = d;
                max_i = i;
            }
        }
        if max_d >= epsilon {
            keep[max_i] = true;
            stack.push((first, max_i));
            stack.push((max_i, last));
        }
    }
    keep
}

/// Douglas-Peucker for a closed polygon: split at the two mutually farthest
/// vertices, simplify both chains and rejoin. The result keeps the input's
/// starting vertex if it survives, otherwise starts at the first survivor.
pub fn douglas_peucker_closed(poly: &VertexSeq, epsilon: f64) -> VertexSeq {
    let pts = poly.points();
    let n = pts.len();
    if n <= 3 {
        return poly.clone();
    }
    let (mut ia, mut ib, mut best) = (0, 0, -1.0);
    for i in 0..n {
        for j in i + 1..n {
            let d = pts[i].distance(pts[j]);
            if d > best {
                best = d;
                ia = i;
                ib = j;
            }
        }
    }
    let first: Vec<Point2> = pts[ia..=ib].to_vec();
    let mut second: Vec<Point2> = pts[ib..].to_vec();
    second.extend_from_slice(&pts[..=ia]);
    let keep_first = dp_keep_mask(&first, epsilon);
    let keep_second = dp_keep_mask(&second, epsilon);
    let mut keep = vec![false; n];
    for (k, &flag) in keep_first.iter().enumerate() {
        keep[ia + k] |= flag;
    }
    for (k, &flag) in keep_second.iter().enumerate() {
        keep[(ib + k) % n] |= flag;
    }
    VertexSeq(
        pts.iter()
            .zip(&keep)
            .filter_map(|(&p, &k)| k.then_some(p))
            .collect(),
    )
}

/// Interior angle in degrees at vertex `i` of a CCW polygon, in `[0, 360)`.
pub fn interior_angle_deg(poly: &[Point2], i: usize) -> f64 {
    let n = poly.len();
    let v = poly[i];
    let prev = poly[(i + n - 1) % n] - v;
    let next = poly[(i + 1) % n] - v;
    let mut a = libm::atan2(next.cross(prev), next.dot(prev)).to_degrees();
    if a < 0.0 {
        a += 360.0;
    }
    a
}
