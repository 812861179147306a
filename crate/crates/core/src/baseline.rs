//! Learning-free reconstruction: occupancy grid, morphological closing,
//! boundary tracing of each connected component, Douglas-Peucker.

use alloc::collections::VecDeque;
use alloc::vec;
use alloc::vec::Vec;

use crate::data::{bin_counts, Bounds, DensityMap, Floorplan, PointCloud, ProjectionOptions, Room};
use crate::error::DataError;
use crate::geometry::{douglas_peucker_closed, ensure_ccw, Point2, VertexSeq};

/// Binary image, row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Grid {
    pub width: usize,
    pub height: usize,
    pub cells: Vec<bool>,
}

impl Grid {
    pub fn new(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            cells: vec![false; width * height],
        }
    }

    pub fn get(&self, col: usize, row: usize) -> bool {
        self.cells[row * self.width + col]
    }

    pub fn set(&mut self, col: usize, row: usize, v: bool) {
        self.cells[row * self.width + col] = v;
    }

    /// Fills the half-open pixel rectangle `[c0, c1) x [r0, r1)`.
    pub fn fill_rect(&mut self, c0: usize, r0: usize, c1: usize, r1: usize) {
        for r in r0..r1.min(self.height) {
            for c in c0..c1.min(self.width) {
                self.set(c, r, true);
            }
        }
    }

    pub fn count(&self) -> usize {
        self.cells.iter().filter(|&&c| c).count()
    }
}

/// A pixel is occupied when at least one point lands in it.
pub fn occupancy_from_cloud(cloud: &PointCloud, bounds: &Bounds, size: usize) -> Result<Grid, DataError> {
    let counts = bin_counts(cloud, bounds, size, size, &ProjectionOptions::default())?;
    Ok(Grid {
        width: size,
        height: size,
        cells: counts.into_iter().map(|c| c > 0).collect(),
    })
}

pub fn occupancy_from_density(map: &DensityMap) -> Grid {
    Grid {
        width: map.width,
        height: map.height,
        cells: map.values.iter().map(|&v| v > 0.0).collect(),
    }
}

fn morph(grid: &Grid, kernel: usize, dilate: bool) -> Grid {
    let r = (kernel / 2) as i64;
    let mut out = Grid::new(grid.width, grid.height);
    for row in 0..grid.height as i64 {
        for col in 0..grid.width as i64 {
            let mut acc = !dilate;
            'window: for dr in -r..=r {
                for dc in -r..=r {
                    let (c, rr) = (col + dc, row + dr);
                    if c < 0 || rr < 0 || c >= grid.width as i64 || rr >= grid.height as i64 {
                        continue;
                    }
                    let v = grid.get(c as usize, rr as usize);
                    if dilate && v {
                        acc = true;
                        break 'window;
                    }
                    if !dilate && !v {
                        acc = false;
                        break 'window;
                    }
                }
            }
            out.set(col as usize, row as usize, acc);
        }
    }
    out
}

pub fn dilate(grid: &Grid, kernel: usize) -> Grid {
    morph(grid, kernel, true)
}

pub fn erode(grid: &Grid, kernel: usize) -> Grid {
    morph(grid, kernel, false)
}

/// Dilation followed by erosion with a `kernel x kernel` square.
/// Neighborhoods are clipped to the image.
pub fn morph_close(grid: &Grid, kernel: usize) -> Grid {
    erode(&dilate(grid, kernel), kernel)
}

/// 4-connected component labels (0 = background) and the component count.
pub fn label_components(grid: &Grid) -> (Vec<u32>, u32) {
    let (w, h) = (grid.width, grid.height);
    let mut labels = vec![0u32; w * h];
    let mut next = 0;
    let mut queue = VecDeque::new();
    for start in 0..w * h {
        if !grid.cells[start] || labels[start] != 0 {
            continue;
        }
        next += 1;
        labels[start] = next;
        queue.push_back(start);
        while let Some(i) = queue.pop_front() {
            let (c, r) = (i % w, i / w);
            let mut visit = |j: usize| {
                if grid.cells[j] && labels[j] == 0 {
                    labels[j] = next;
                    queue.push_back(j);
                }
            };
            if c > 0 {
                visit(i - 1);
            }
            if c + 1 < w {
                visit(i + 1);
            }
            if r > 0 {
                visit(i - w);
            }
            if r + 1 < h {
                visit(i + w);
            }
        }
    }
    (labels, next)
}

/// Traces the outer boundary of the component containing pixel `start`
/// along pixel edges. `start` must be its first pixel in row-major order.
/// Returns corner points with collinear runs merged, positive shoelace area.
fn trace_outer(labels: &[u32], w: usize, h: usize, start: usize) -> Vec<Point2> {
    let id = labels[start];
    let inside = |c: i64, r: i64| c >= 0 && r >= 0 && (c as usize) < w && (r as usize) < h && labels[r as usize * w + c as usize] == id;
    let (sx, sy) = ((start % w) as i64, (start / w) as i64);
    // walk along the top edge of the start pixel, component on the left of
    // the direction in (x, y) coordinates
    let (mut x, mut y, mut dx, mut dy) = (sx, sy, 1i64, 0i64);
    let mut pts = Vec::new();
    loop {
        x += dx;
        y += dy;
        // left of (dx, dy) is (-dy, dx); pixel with min corner at
        // p + 0.5 d + 0.5 l - (0.5, 0.5)
        let (lx, ly) = (-dy, dx);
        let left_ahead = pixel_at(x, y, dx + lx, dy + ly);
        let right_ahead = pixel_at(x, y, dx - lx, dy - ly);
        let (ndx, ndy) = if !inside(left_ahead.0, left_ahead.1) {
            (lx, ly)
        } else if inside(right_ahead.0, right_ahead.1) {
            (-lx, -ly)
        } else {
            (dx, dy)
        };
        if (ndx, ndy) != (dx, dy) {
            pts.push(Point2::new(x as f64, y as f64));
        }
        dx = ndx;
        dy = ndy;
        if (x, y, dx, dy) == (sx, sy, 1, 0) {
            break;
        }
    }
    // the start corner is pushed last; put it first
    pts.rotate_right(1);
    pts
}

// pixel whose center is the corner (x, y) offset by half of (ox, oy)
fn pixel_at(x: i64, y: i64, ox: i64, oy: i64) -> (i64, i64) {
    // ox, oy in {-1, 1}: center = (x + ox/2, y + oy/2) = min corner + 0.5
    (x + (ox - 1) / 2, y + (oy - 1) / 2)
}

/// One closed outer polygon per 4-connected foreground component, in pixel
/// corner coordinates, ordered by the component's first pixel.
pub fn vectorize(grid: &Grid) -> Vec<VertexSeq> {
    let (labels, count) = label_components(grid);
    let mut seen = vec![false; count as usize + 1];
    let mut out = Vec::new();
    for (i, &l) in labels.iter().enumerate() {
        if l == 0 || seen[l as usize] {
            continue;
        }
        seen[l as usize] = true;
        out.push(VertexSeq(trace_outer(&labels, grid.width, grid.height, i)));
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default))]
pub struct BaselineConfig {
    pub kernel: usize,
    pub epsilon_px: f64,
}

impl Default for BaselineConfig {
    fn default() -> Self {
        Self {
            kernel: 3,
            epsilon_px: 3.0,
        }
    }
}

/// Close, vectorize, simplify. Polygons that collapse below three vertices
/// are dropped.
pub fn run_baseline_on_grid(grid: &Grid, config: &BaselineConfig) -> Floorplan {
    let closed = morph_close(grid, config.kernel);
    let mut plan = Floorplan::new(grid.width, grid.height);
    for poly in vectorize(&closed) {
        let simple = douglas_peucker_closed(&poly, config.epsilon_px);
        if simple.len() < 3 {
            continue;
        }
        if let Ok(corners) = ensure_ccw(&simple) {
            plan.rooms.push(Room { corners, room_type: 0 });
        }
    }
    plan
}

pub fn run_baseline(map: &DensityMap, config: &BaselineConfig) -> Floorplan {
    run_baseline_on_grid(&occupancy_from_density(map), config)
}

pub fn run_baseline_on_cloud(
    cloud: &PointCloud,
    bounds: &Bounds,
    size: usize,
    config: &BaselineConfig,
) -> Result<Floorplan, DataError> {
    match occupancy_from_cloud(cloud, bounds, size) {
        Ok(grid) => Ok(run_baseline_on_grid(&grid, config)),
        Err(DataError::EmptyCloud) => Ok(Floorplan::new(size, size)),
        Err(e) => Err(e),
    }
}

/// Rasterizes a traced polygon back at pixel resolution, for checks.
pub fn grid_of_polygon(poly: &VertexSeq, width: usize, height: usize) -> Grid {
    let mut g = Grid::new(width, height);
    for r in 0..height {
        for c in 0..width {
            let p = Point2::new(c as f64 + 0.5, r as f64 + 0.5);
            g.set(c, r, crate::geometry::contains_even_odd(poly.points(), p));
        }
    }
    g
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::signed_area;

    #[test]
    fn single_pixel_traces_unit_square() {
        let mut g = Grid::new(4, 4);
        g.set(1, 2, true);
        let polys = vectorize(&g);
        assert_eq!(polys.len(), 1);
        assert_eq!(
            polys[0].points(),
            &[Point2::new(1.0, 2.0), Point2::new(2.0, 2.0), Point2::new(2.0, 3.0), Point2::new(1.0, 3.0)]
        );
        assert_eq!(signed_area(&polys[0]), 1.0);
    }

    #[test]
    fn solid_square_unchanged_by_closing() {
        let mut g = Grid::new(20, 20);
        g.fill_rect(5, 5, 15, 15);
        assert_eq!(morph_close(&g, 3), g);
    }

    #[test]
    fn closing_fills_small_holes_only() {
        let mut g = Grid::new(30, 30);
        g.fill_rect(2, 2, 28, 28);
        g.set(8, 8, false);
        for r in 15..20 {
            for c in 15..20 {
                g.set(c, r, false);
            }
        }
        let closed = morph_close(&g, 3);
        assert!(closed.get(8, 8));
        assert!(!closed.get(17, 17));
        assert!(!closed.get(15, 15));
    }

    #[test]
    fn components_and_shapes() {
        let mut g = Grid::new(40, 40);
        g.fill_rect(2, 2, 12, 10);
        g.fill_rect(20, 20, 35, 38);
        let polys = vectorize(&g);
        assert_eq!(polys.len(), 2);
        assert!(polys.iter().all(|p| p.len() == 4));

        let mut l = Grid::new(40, 40);
        l.fill_rect(5, 5, 30, 15);
        l.fill_rect(5, 15, 15, 30);
        let plan = run_baseline_on_grid(&l, &BaselineConfig::default());
        assert_eq!(plan.rooms.len(), 1);
        assert_eq!(plan.rooms[0].corners.len(), 6);
    }

    #[test]
    fn diagonal_pixels_are_separate() {
        let mut g = Grid::new(6, 6);
        g.set(1, 1, true);
        g.set(2, 2, true);
        assert_eq!(vectorize(&g).len(), 2);
    }

    #[test]
    fn traced_polygon_reproduces_component() {
        let mut g = Grid::new(24, 24);
        g.fill_rect(3, 3, 20, 8);
        g.fill_rect(3, 8, 6, 20);
        g.fill_rect(10, 8, 12, 14);
        g.set(12, 13, true);
        let polys = vectorize(&g);
        assert_eq!(polys.len(), 1);
        assert_eq!(grid_of_polygon(&polys[0], 24, 24), g);
    }

    #[test]
    fn empty_input() {
        assert!(vectorize(&Grid::new(8, 8)).is_empty());
        let plan = run_baseline_on_cloud(&PointCloud::default(), &Bounds::new(0.0, 0.0, 1.0, 1.0), 16, &BaselineConfig::default()).unwrap();
        assert!(plan.rooms.is_empty());
    }
}
