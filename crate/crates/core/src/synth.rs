//! Deterministic synthetic scenes for desk-scale training.
//!
//! A rectangular footprint is split guillotine-style into rooms, rooms are
//! inset by half the wall thickness and optionally get notched (Manhattan) or
//! chamfered (non-Manhattan) corners. The point cloud samples wall surfaces
//! densely and floors sparsely, with positional noise and dropped wall
//! chunks to mimic scan gaps.

use alloc::format;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::data::{
    project_to_density, Bounds, DensityMap, Floorplan, Line, PointCloud, ProjectionOptions, Room,
};
use crate::error::DataError;
use crate::geometry::{contains_even_odd, signed_area, Point2, VertexSeq};

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default))]
pub struct SynthConfig {
    /// Square map size in pixels.
    pub map_size: usize,
    /// Inclusive room-count range.
    pub rooms: (usize, usize),
    /// Inclusive per-room vertex-count range (4..=12).
    pub vertices: (usize, usize),
    /// Probability that a room uses chamfered (non-Manhattan) corners.
    pub non_manhattan_ratio: f64,
    pub wall_thickness_px: f64,
    /// Standard deviation of point jitter in pixels.
    pub noise_px: f64,
    /// Probability of dropping each wall chunk.
    pub dropout: f64,
    pub dropout_chunk_px: f64,
    /// Wall samples per pixel of wall length.
    pub wall_points_per_px: f64,
    /// Floor samples per square pixel.
    pub floor_points_per_px2: f64,
    pub margin_px: f64,
    pub min_room_px: f64,
    /// Footprint side as a fraction of the map, sampled per axis.
    pub footprint_fraction: (f64, f64),
    /// Emit doors between adjacent rooms and windows on exterior walls.
    pub openings: bool,
    pub meters_per_px: f64,
    pub max_attempts: usize,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            map_size: 256,
            rooms: (1, 4),
            vertices: (4, 8),
            non_manhattan_ratio: 0.3,
            wall_thickness_px: 6.0,
            noise_px: 0.7,
            dropout: 0.1,
            dropout_chunk_px: 8.0,
            wall_points_per_px: 24.0,
            floor_points_per_px2: 1.5,
            margin_px: 12.0,
            min_room_px: 40.0,
            footprint_fraction: (0.5, 0.9),
            openings: false,
            meters_per_px: 0.025,
            max_attempts: 64,
        }
    }
}

impl SynthConfig {
    /// Default scene statistics on a `size x size` map: pixel lengths scale
    /// with the map, world extent and per-area sampling stay fixed.
    pub fn for_map_size(size: usize) -> Self {
        let base = Self::default();
        let f = size as f64 / base.map_size as f64;
        Self {
            map_size: size,
            wall_thickness_px: base.wall_thickness_px * f,
            noise_px: base.noise_px * f,
            dropout_chunk_px: base.dropout_chunk_px * f,
            wall_points_per_px: base.wall_points_per_px / f,
            floor_points_per_px2: base.floor_points_per_px2 / (f * f),
            margin_px: base.margin_px * f,
            min_room_px: base.min_room_px * f,
            meters_per_px: base.meters_per_px / f,
            ..base
        }
    }

    fn validate(&self) -> Result<(), DataError> {
        let bad = |msg: &str| Err(DataError::InvalidConfig(msg.into()));
        if self.rooms.0 == 0 || self.rooms.0 > self.rooms.1 {
            return bad("room range must satisfy 1 <= min <= max");
        }
        if self.vertices.0 < 4 || self.vertices.0 > self.vertices.1 || self.vertices.1 > 12 {
            return bad("vertex range must satisfy 4 <= min <= max <= 12");
        }
        if !(0.0..=1.0).contains(&self.dropout) || !(0.0..=1.0).contains(&self.non_manhattan_ratio) {
            return bad("probabilities must lie in [0, 1]");
        }
        if self.noise_px < 0.0 || self.wall_thickness_px < 0.0 || self.map_size < 8 {
            return bad("sizes must be non-negative and the map at least 8 px");
        }
        let (lo, hi) = self.footprint_fraction;
        if !(lo > 0.0 && lo <= hi && hi <= 1.0) {
            return bad("footprint fraction must satisfy 0 < lo <= hi <= 1");
        }
        if self.wall_points_per_px <= 0.0 || self.dropout_chunk_px <= 0.0 || self.meters_per_px <= 0.0 {
            return bad("sampling densities and scales must be positive");
        }
        Ok(())
    }
}

/// A generated scene. Floorplan coordinates are pixels of the density map.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthScene {
    pub cloud: PointCloud,
    pub density: DensityMap,
    pub plan: Floorplan,
}

impl SynthScene {
    /// World bounds of the cloud, mapping exactly onto the density map.
    pub fn bounds(&self, config: &SynthConfig) -> Bounds {
        let s = config.map_size as f64 * config.meters_per_px;
        Bounds::new(0.0, 0.0, s, s)
    }
}

#[derive(Debug, Clone, Copy)]
struct Rect {
    x0: f64,
    y0: f64,
    x1: f64,
    y1: f64,
}

impl Rect {
    fn w(&self) -> f64 {
        self.x1 - self.x0
    }
    fn h(&self) -> f64 {
        self.y1 - self.y0
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum CornerCut {
    None,
    Chamfer(f64),
    Notch(f64, f64),
}

pub fn generate_synthetic(seed: u64, config: &SynthConfig) -> Result<SynthScene, DataError> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let room_count = rng.random_range(config.rooms.0..=config.rooms.1);
    for _ in 0..config.max_attempts {
        if let Some(cells) = try_layout(&mut rng, config, room_count) {
            return Ok(build_scene(&mut rng, config, &cells));
        }
    }
    Err(DataError::Unsatisfiable {
        attempts: config.max_attempts,
    })
}

fn try_layout(rng: &mut ChaCha8Rng, cfg: &SynthConfig, count: usize) -> Option<Vec<Rect>> {
    let size = cfg.map_size as f64;
    let (lo, hi) = cfg.footprint_fraction;
    let fw = size * rng.random_range(lo..=hi);
    let fh = size * rng.random_range(lo..=hi);
    let slack_x = size - 2.0 * cfg.margin_px - fw;
    let slack_y = size - 2.0 * cfg.margin_px - fh;
    if slack_x < 0.0 || slack_y < 0.0 {
        return None;
    }
    let x0 = cfg.margin_px + rng.random_range(0.0..=slack_x);
    let y0 = cfg.margin_px + rng.random_range(0.0..=slack_y);
    let mut cells = alloc::vec![Rect {
        x0,
        y0,
        x1: x0 + fw,
        y1: y0 + fh,
    }];
    let min_side = cfg.min_room_px + cfg.wall_thickness_px;
    while cells.len() < count {
        let (idx, _) = cells
            .iter()
            .enumerate()
            .map(|(i, c)| (i, c.w() * c.h()))
            .fold((0, -1.0), |best, cur| if cur.1 > best.1 { cur } else { best });
        let cell = cells[idx];
        let ratio = rng.random_range(0.35..=0.65);
        let (a, b) = if cell.w() >= cell.h() {
            let cut = cell.x0 + cell.w() * ratio;
            (Rect { x1: cut, ..cell }, Rect { x0: cut, ..cell })
        } else {
            let cut = cell.y0 + cell.h() * ratio;
            (Rect { y1: cut, ..cell }, Rect { y0: cut, ..cell })
        };
        if [a, b].iter().any(|r| r.w() < min_side || r.h() < min_side) {
            return None;
        }
        cells[idx] = a;
        cells.push(b);
    }
    Some(cells)
}

/// Picks corner cuts adding `extra` vertices. Chamfers add one vertex,
/// notches two.
fn plan_cuts(rng: &mut ChaCha8Rng, extra: usize, non_manhattan: bool) -> [CornerCut; 4] {
    let mut cuts = [CornerCut::None; 4];
    let (chamfers, notches) = if non_manhattan {
        if extra == 0 {
            (0, 0)
        } else if extra <= 4 && rng.random_bool(0.5) {
            (extra, 0)
        } else {
            let c = if extra % 2 == 1 { 1 } else { 2 };
            (c, (extra - c) / 2)
        }
    } else {
        (0, extra / 2)
    };
    let mut order = [0usize, 1, 2, 3];
    order.shuffle(rng);
    for (k, &corner) in order.iter().enumerate().take(chamfers + notches) {
        cuts[corner] = if k < chamfers {
            CornerCut::Chamfer(rng.random_range(0.15..=0.35))
        } else {
            CornerCut::Notch(rng.random_range(0.2..=0.4), rng.random_range(0.2..=0.4))
        };
    }
    cuts
}

fn room_polygon(rect: &Rect, cuts: &[CornerCut; 4]) -> VertexSeq {
    // CCW in the image frame (positive shoelace area).
    let corners = [
        Point2::new(rect.x0, rect.y0),
        Point2::new(rect.x1, rect.y0),
        Point2::new(rect.x1, rect.y1),
        Point2::new(rect.x0, rect.y1),
    ];
    let mut out = Vec::with_capacity(12);
    for i in 0..4 {
        let c = corners[i];
        let prev = corners[(i + 3) % 4];
        let next = corners[(i + 1) % 4];
        let len_in = c.distance(prev);
        let len_out = c.distance(next);
        let u_in = (c - prev) * (1.0 / len_in);
        let u_out = (next - c) * (1.0 / len_out);
        match cuts[i] {
            CornerCut::None => out.push(c),
            CornerCut::Chamfer(f) => {
                let d = f * len_in.min(len_out);
                out.push(c - u_in * d);
                out.push(c + u_out * d);
            }
            CornerCut::Notch(fa, fb) => {
                let a = fa * len_in;
                let b = fb * len_out;
                out.push(c - u_in * a);
                out.push(c - u_in * a + u_out * b);
                out.push(c + u_out * b);
            }
        }
    }
    VertexSeq(out)
}

fn room_type(area_fraction: f64, rectangular: bool) -> u32 {
    let bucket = libm::floor(area_fraction * 8.0).clamp(0.0, 7.0) as u32;
    bucket + if rectangular { 0 } else { 8 }
}

fn build_scene(rng: &mut ChaCha8Rng, cfg: &SynthConfig, cells: &[Rect]) -> SynthScene {
    let half = cfg.wall_thickness_px / 2.0;
    let mut polys = Vec::with_capacity(cells.len());
    for cell in cells {
        let inner = Rect {
            x0: cell.x0 + half,
            y0: cell.y0 + half,
            x1: cell.x1 - half,
            y1: cell.y1 - half,
        };
        let target = rng.random_range(cfg.vertices.0..=cfg.vertices.1);
        let non_manhattan = rng.random_bool(cfg.non_manhattan_ratio);
        let mut extra = target - 4;
        if !non_manhattan && extra % 2 == 1 {
            // Manhattan rooms have an even vertex count; stay inside the range.
            extra = if target > cfg.vertices.0 { extra - 1 } else { extra + 1 };
            if 4 + extra > cfg.vertices.1 {
                extra -= 2;
            }
        }
        let cuts = plan_cuts(rng, extra.min(8), non_manhattan);
        polys.push((room_polygon(&inner, &cuts), cuts.iter().all(|c| *c == CornerCut::None)));
    }

    let total: f64 = polys.iter().map(|(p, _)| signed_area(p)).sum();
    let mut plan = Floorplan::new(cfg.map_size, cfg.map_size);
    for (poly, rect) in &polys {
        plan.rooms.push(Room {
            room_type: room_type(signed_area(poly) / total, *rect),
            corners: poly.clone(),
        });
    }
    if cfg.openings {
        place_openings(rng, cells, &mut plan);
    }
    let cloud = sample_cloud(rng, cfg, &plan);
    let s = cfg.map_size as f64 * cfg.meters_per_px;
    let density = project_to_density(
        &cloud,
        &Bounds::new(0.0, 0.0, s, s),
        cfg.map_size,
        cfg.map_size,
        &ProjectionOptions::default(),
    )
    .unwrap_or_else(|_| DensityMap::zeros(cfg.map_size, cfg.map_size));
    SynthScene {
        cloud,
        density,
        plan,
    }
}

fn place_openings(rng: &mut ChaCha8Rng, cells: &[Rect], plan: &mut Floorplan) {
    let eps = 1e-9;
    // Doors on walls shared by two cells.
    for i in 0..cells.len() {
        for j in i + 1..cells.len() {
            let (a, b) = (cells[i], cells[j]);
            let shared_x = (a.x1 - b.x0).abs() < eps || (b.x1 - a.x0).abs() < eps;
            let shared_y = (a.y1 - b.y0).abs() < eps || (b.y1 - a.y0).abs() < eps;
            if shared_x {
                let x = if (a.x1 - b.x0).abs() < eps { a.x1 } else { a.x0 };
                let (lo, hi) = (a.y0.max(b.y0), a.y1.min(b.y1));
                if let Some(door) = centered_span(rng, lo, hi, 14.0, 22.0) {
                    plan.doors.push([Point2::new(x, door.0), Point2::new(x, door.1)]);
                }
            } else if shared_y {
                let y = if (a.y1 - b.y0).abs() < eps { a.y1 } else { a.y0 };
                let (lo, hi) = (a.x0.max(b.x0), a.x1.min(b.x1));
                if let Some(door) = centered_span(rng, lo, hi, 14.0, 22.0) {
                    plan.doors.push([Point2::new(door.0, y), Point2::new(door.1, y)]);
                }
            }
        }
    }
    // Windows on exterior walls of the footprint.
    let fx0 = cells.iter().map(|c| c.x0).fold(f64::INFINITY, f64::min);
    let fy0 = cells.iter().map(|c| c.y0).fold(f64::INFINITY, f64::min);
    let fx1 = cells.iter().map(|c| c.x1).fold(f64::NEG_INFINITY, f64::max);
    let fy1 = cells.iter().map(|c| c.y1).fold(f64::NEG_INFINITY, f64::max);
    for c in cells {
        let sides: [(bool, bool, f64, f64, f64); 4] = [
            ((c.y0 - fy0).abs() < eps, true, c.y0, c.x0, c.x1),
            ((c.y1 - fy1).abs() < eps, true, c.y1, c.x0, c.x1),
            ((c.x0 - fx0).abs() < eps, false, c.x0, c.y0, c.y1),
            ((c.x1 - fx1).abs() < eps, false, c.x1, c.y0, c.y1),
        ];
        for (exterior, horizontal, at, lo, hi) in sides {
            if !exterior || !rng.random_bool(0.5) {
                continue;
            }
            if let Some((s, e)) = centered_span(rng, lo, hi, 16.0, 30.0) {
                let line: Line = if horizontal {
                    [Point2::new(s, at), Point2::new(e, at)]
                } else {
                    [Point2::new(at, s), Point2::new(at, e)]
                };
                plan.windows.push(line);
            }
        }
    }
}

/// A span of random length in the middle 40% of `[lo, hi]`.
fn centered_span(rng: &mut ChaCha8Rng, lo: f64, hi: f64, min_len: f64, max_len: f64) -> Option<(f64, f64)> {
    let len = rng.random_range(min_len..=max_len);
    let span = hi - lo;
    if span < len / 0.4 {
        return None;
    }
    let mid = lo + span * rng.random_range(0.4..=0.6);
    Some((mid - len / 2.0, mid + len / 2.0))
}

fn near_line(p: Point2, line: &Line, reach: f64) -> bool {
    crate::geometry::point_segment_distance(p, line[0], line[1]) <= reach
}

fn sample_cloud(rng: &mut ChaCha8Rng, cfg: &SynthConfig, plan: &Floorplan) -> PointCloud {
    let mpp = cfg.meters_per_px;
    let noise = Normal::new(0.0, cfg.noise_px.max(0.0)).expect("finite noise");
    let reach = cfg.wall_thickness_px / 2.0 + 1.5;
    let mut points = Vec::new();
    let mut push = |rng: &mut ChaCha8Rng, p: Point2, z: f64| {
        let (dx, dy) = if cfg.noise_px > 0.0 {
            (noise.sample(rng), noise.sample(rng))
        } else {
            (0.0, 0.0)
        };
        points.push([(p.x + dx) * mpp, (p.y + dy) * mpp, z]);
    };
    for room in &plan.rooms {
        for (a, b) in room.corners.closed_edges() {
            let len = a.distance(b);
            let chunks = libm::ceil(len / cfg.dropout_chunk_px).max(1.0) as usize;
            for c in 0..chunks {
                if cfg.dropout > 0.0 && rng.random_bool(cfg.dropout) {
                    continue;
                }
                let t0 = c as f64 / chunks as f64;
                let t1 = (c + 1) as f64 / chunks as f64;
                let n = libm::ceil((t1 - t0) * len * cfg.wall_points_per_px).max(1.0) as usize;
                for k in 0..n {
                    let t = t0 + (t1 - t0) * (k as f64 + rng.random::<f64>()) / n as f64;
                    let p = a + (b - a) * t;
                    if plan.doors.iter().any(|d| near_line(p, d, reach)) {
                        continue;
                    }
                    if plan.windows.iter().any(|w| near_line(p, w, reach)) && rng.random_bool(0.6) {
                        continue;
                    }
                    let z = rng.random_range(0.0..2.6);
                    push(rng, p, z);
                }
            }
        }
        let (mut x0, mut y0, mut x1, mut y1) = (f64::MAX, f64::MAX, f64::MIN, f64::MIN);
        for p in room.corners.iter() {
            x0 = x0.min(p.x);
            y0 = y0.min(p.y);
            x1 = x1.max(p.x);
            y1 = y1.max(p.y);
        }
        let count = libm::round(signed_area(&room.corners) * cfg.floor_points_per_px2) as usize;
        let mut placed = 0;
        let mut tries = 0;
        while placed < count && tries < count * 8 + 16 {
            tries += 1;
            let p = Point2::new(rng.random_range(x0..=x1), rng.random_range(y0..=y1));
            if contains_even_odd(room.corners.points(), p) {
                push(rng, p, 0.0);
                placed += 1;
            }
        }
    }
    PointCloud { points }
}

/// Human-readable summary, handy in logs.
pub fn describe(plan: &Floorplan) -> alloc::string::String {
    let verts: Vec<usize> = plan.rooms.iter().map(|r| r.corners.len()).collect();
    format!(
        "{} rooms (vertices {:?}), {} doors, {} windows",
        plan.rooms.len(),
        verts,
        plan.doors.len(),
        plan.windows.len()
    )
}
