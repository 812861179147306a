//! Floorplan drawings. SVG is the primary output; PNG goes through
//! tiny-skia and can carry the density map as a gray background.
//!
//! Room colors come from a fixed 16-entry palette indexed by a hash of the
//! room centroid rounded to whole pixels, so the same room gets the same
//! color across runs and across gt/prediction pairs.

use std::f64::consts::FRAC_PI_2;
use std::fmt::Write as _;
use std::path::Path;

use floorplan_core::data::{DensityMap, Floorplan, Line};
use floorplan_core::doors::{plot_door_arcs, Quadrant};
use floorplan_core::geometry::VertexSeq;
use tiny_skia::{Color, FillRule, LineCap, Paint, PathBuilder, Pixmap, Stroke, StrokeDash, Transform};

use crate::error::{Error, Result};

pub const PALETTE: [[u8; 3]; 16] = [
    [230, 25, 75],
    [60, 180, 75],
    [255, 225, 25],
    [0, 130, 200],
    [245, 130, 48],
    [145, 30, 180],
    [70, 240, 240],
    [240, 50, 230],
    [210, 245, 60],
    [250, 190, 212],
    [0, 128, 128],
    [220, 190, 255],
    [170, 110, 40],
    [255, 250, 200],
    [128, 0, 0],
    [170, 255, 195],
];

const WALL: [u8; 3] = [20, 20, 20];
const DOOR: [u8; 3] = [200, 60, 20];
const WINDOW: [u8; 3] = [30, 90, 220];
const ROOM_ALPHA: f64 = 0.55;
const DASH: [f32; 2] = [4.0, 3.0];
const ARC_SEGMENTS: usize = 16;

/// Palette index of a room.
pub fn room_color(corners: &VertexSeq) -> usize {
    let c = corners.centroid();
    // FNV-1a over the rounded centroid.
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for v in [c.x.round() as i64, c.y.round() as i64] {
        for b in v.to_le_bytes() {
            h ^= b as u64;
            h = h.wrapping_mul(0x0100_0000_01b3);
        }
    }
    (h % PALETTE.len() as u64) as usize
}

fn hex([r, g, b]: [u8; 3]) -> String {
    format!("#{r:02x}{g:02x}{b:02x}")
}

fn arc_points(q: &Quadrant) -> Vec<(f64, f64)> {
    let a0 = (q.start.y - q.center.y).atan2(q.start.x - q.center.x);
    // With y down, clockwise on screen is increasing atan2 angle.
    let sweep = if q.clockwise { FRAC_PI_2 } else { -FRAC_PI_2 };
    (0..=ARC_SEGMENTS)
        .map(|i| {
            let a = a0 + sweep * i as f64 / ARC_SEGMENTS as f64;
            (q.center.x + q.radius * a.cos(), q.center.y + q.radius * a.sin())
        })
        .collect()
}

pub fn render_svg(plan: &Floorplan) -> String {
    let mut s = String::new();
    let (w, h) = (plan.width, plan.height);
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}">"#
    );
    let _ = writeln!(s, r#"<rect width="{w}" height="{h}" fill="white"/>"#);
    for r in &plan.rooms {
        let pts: Vec<String> = r.corners.iter().map(|p| format!("{:.2},{:.2}", p.x, p.y)).collect();
        let _ = writeln!(
            s,
            r#"<polygon points="{}" fill="{}" fill-opacity="{ROOM_ALPHA}" stroke="{}" stroke-width="1.5" data-type="{}"/>"#,
            pts.join(" "),
            hex(PALETTE[room_color(&r.corners)]),
            hex(WALL),
            r.room_type
        );
    }
    for [a, b] in &plan.windows {
        let _ = writeln!(
            s,
            r#"<line x1="{:.2}" y1="{:.2}" x2="{:.2}" y2="{:.2}" stroke="{}" stroke-width="2" stroke-dasharray="{} {}"/>"#,
            a.x,
            a.y,
            b.x,
            b.y,
            hex(WINDOW),
            DASH[0],
            DASH[1]
        );
    }
    for arc in plot_door_arcs(&plan.doors).arcs {
        let [a, b] = plan.doors[arc.door];
        let _ = writeln!(
            s,
            r#"<line x1="{:.2}" y1="{:.2}" x2="{:.2}" y2="{:.2}" stroke="{}" stroke-width="2"/>"#,
            a.x,
            a.y,
            b.x,
            b.y,
            hex(DOOR)
        );
        for q in &arc.quadrants {
            let _ = writeln!(
                s,
                r#"<path d="M {:.2} {:.2} A {:.2} {:.2} 0 0 {} {:.2} {:.2}" fill="none" stroke="{}" stroke-width="1"/>"#,
                q.start.x,
                q.start.y,
                q.radius,
                q.radius,
                u8::from(q.clockwise),
                q.end.x,
                q.end.y,
                hex(DOOR)
            );
        }
    }
    s.push_str("</svg>\n");
    s
}

fn paint(rgb: [u8; 3], alpha: f64) -> Paint<'static> {
    let mut p = Paint::default();
    p.set_color(Color::from_rgba8(rgb[0], rgb[1], rgb[2], (alpha * 255.0).round() as u8));
    p.anti_alias = true;
    p
}

fn stroke(width: f32, dashed: bool) -> Stroke {
    Stroke {
        width,
        line_cap: LineCap::Butt,
        dash: if dashed { StrokeDash::new(DASH.to_vec(), 0.0) } else { None },
        ..Stroke::default()
    }
}

fn polyline(points: &[(f64, f64)], close: bool) -> Option<tiny_skia::Path> {
    let mut pb = PathBuilder::new();
    let (first, rest) = points.split_first()?;
    pb.move_to(first.0 as f32, first.1 as f32);
    for p in rest {
        pb.line_to(p.0 as f32, p.1 as f32);
    }
    if close {
        pb.close();
    }
    pb.finish()
}

fn line_path([a, b]: &Line) -> Option<tiny_skia::Path> {
    polyline(&[(a.x, a.y), (b.x, b.y)], false)
}

/// Rasterizes the plan, optionally over a density map of the same size.
pub fn render_pixmap(plan: &Floorplan, background: Option<&DensityMap>) -> Result<Pixmap> {
    let mut pm = Pixmap::new(plan.width as u32, plan.height as u32)
        .ok_or_else(|| Error::Render(format!("cannot allocate a {}x{} image", plan.width, plan.height)))?;
    pm.fill(Color::WHITE);
    if let Some(d) = background {
        if (d.width, d.height) != (plan.width, plan.height) {
            return Err(Error::Render("background size differs from the plan".into()));
        }
        for (px, v) in pm.pixels_mut().iter_mut().zip(&d.values) {
            let g = (255.0 * (1.0 - v.clamp(0.0, 1.0))).round() as u8;
            *px = tiny_skia::PremultipliedColorU8::from_rgba(g, g, g, 255).expect("opaque");
        }
    }
    let id = Transform::identity();
    for r in &plan.rooms {
        let pts: Vec<(f64, f64)> = r.corners.iter().map(|p| (p.x, p.y)).collect();
        if let Some(path) = polyline(&pts, true) {
            pm.fill_path(&path, &paint(PALETTE[room_color(&r.corners)], ROOM_ALPHA), FillRule::EvenOdd, id, None);
            pm.stroke_path(&path, &paint(WALL, 1.0), &stroke(1.5, false), id, None);
        }
    }
    for l in &plan.windows {
        if let Some(path) = line_path(l) {
            pm.stroke_path(&path, &paint(WINDOW, 1.0), &stroke(2.0, true), id, None);
        }
    }
    for arc in plot_door_arcs(&plan.doors).arcs {
        if let Some(path) = line_path(&plan.doors[arc.door]) {
            pm.stroke_path(&path, &paint(DOOR, 1.0), &stroke(2.0, false), id, None);
        }
        for q in &arc.quadrants {
            if let Some(path) = polyline(&arc_points(q), false) {
                pm.stroke_path(&path, &paint(DOOR, 1.0), &stroke(1.0, false), id, None);
            }
        }
    }
    Ok(pm)
}

pub fn render_png(plan: &Floorplan, background: Option<&DensityMap>) -> Result<Vec<u8>> {
    render_pixmap(plan, background)?
        .encode_png()
        .map_err(|e| Error::Render(e.to_string()))
}

/// Writes SVG for `.svg` paths and PNG otherwise.
pub fn render_to_file(plan: &Floorplan, background: Option<&DensityMap>, path: &Path) -> Result<()> {
    let bytes = match path.extension().and_then(|e| e.to_str()) {
        Some(e) if e.eq_ignore_ascii_case("svg") => render_svg(plan).into_bytes(),
        _ => render_png(plan, background)?,
    };
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}
