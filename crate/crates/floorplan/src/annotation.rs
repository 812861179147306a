//! Annotation JSON:
//!
//! ```json
//! {"width": 256, "height": 256,
//!  "rooms": [{"corners": [[x, y], ...], "type": 3}],
//!  "doors": [[[x1, y1], [x2, y2]]], "windows": []}
//! ```
//!
//! Coordinates are pixels, rooms counter-clockwise in the image frame
//! (positive shoelace area with y pointing down).

use std::path::Path;

use floorplan_core::data::{Floorplan, Line, Room};
use floorplan_core::geometry::{signed_area, Point2, VertexSeq};
use serde_json::{json, Map, Value};

use crate::error::{Error, Result};

/// What to do with clockwise rooms.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Orientation {
    /// Reverse them and report a warning.
    #[default]
    AutoCorrect,
    Reject,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Loaded {
    pub plan: Floorplan,
    pub warnings: Vec<String>,
}

struct Ctx<'a> {
    source: &'a str,
}

impl Ctx<'_> {
    fn err(&self, pointer: &str, message: impl Into<String>) -> Error {
        Error::Annotation {
            path: self.source.to_string(),
            pointer: if pointer.is_empty() { "/".into() } else { pointer.into() },
            message: message.into(),
        }
    }

    fn object<'v>(&self, v: &'v Value, ptr: &str) -> Result<&'v Map<String, Value>> {
        v.as_object().ok_or_else(|| self.err(ptr, "expected an object"))
    }

    fn array<'v>(&self, v: &'v Value, ptr: &str) -> Result<&'v Vec<Value>> {
        v.as_array().ok_or_else(|| self.err(ptr, "expected an array"))
    }

    fn dim(&self, obj: &Map<String, Value>, key: &str) -> Result<usize> {
        let ptr = format!("/{key}");
        let v = obj.get(key).ok_or_else(|| self.err("", format!("missing \"{key}\"")))?;
        match v.as_u64() {
            Some(n) if n > 0 => Ok(n as usize),
            _ => Err(self.err(&ptr, "expected a positive integer")),
        }
    }

    fn point(&self, v: &Value, ptr: &str) -> Result<Point2> {
        let a = self.array(v, ptr)?;
        if a.len() != 2 {
            return Err(self.err(ptr, format!("expected [x, y], found {} values", a.len())));
        }
        let coord = |i: usize| {
            a[i].as_f64()
                .filter(|x| x.is_finite())
                .ok_or_else(|| self.err(&format!("{ptr}/{i}"), "expected a finite number"))
        };
        Ok(Point2::new(coord(0)?, coord(1)?))
    }

    fn in_bounds(&self, p: Point2, w: usize, h: usize, ptr: &str) -> Result<()> {
        if p.x < 0.0 || p.y < 0.0 || p.x > w as f64 || p.y > h as f64 {
            return Err(self.err(ptr, format!("point ({}, {}) outside the {w}x{h} map", p.x, p.y)));
        }
        Ok(())
    }

    fn lines(&self, obj: &Map<String, Value>, key: &str, w: usize, h: usize) -> Result<Vec<Line>> {
        let Some(v) = obj.get(key) else {
            return Ok(Vec::new());
        };
        let ptr = format!("/{key}");
        let mut out = Vec::new();
        for (i, l) in self.array(v, &ptr)?.iter().enumerate() {
            let lp = format!("{ptr}/{i}");
            let pts = self.array(l, &lp)?;
            if pts.len() != 2 {
                return Err(self.err(&lp, format!("expected two endpoints, found {}", pts.len())));
            }
            let a = self.point(&pts[0], &format!("{lp}/0"))?;
            let b = self.point(&pts[1], &format!("{lp}/1"))?;
            self.in_bounds(a, w, h, &format!("{lp}/0"))?;
            self.in_bounds(b, w, h, &format!("{lp}/1"))?;
            out.push([a, b]);
        }
        Ok(out)
    }
}

/// Parses annotation JSON. `source` names the input in error messages.
pub fn parse_annotations(text: &str, source: &str, policy: Orientation) -> Result<Loaded> {
    let ctx = Ctx { source };
    let root: Value = serde_json::from_str(text).map_err(|e| ctx.err("", format!("invalid JSON: {e}")))?;
    let obj = ctx.object(&root, "")?;
    let width = ctx.dim(obj, "width")?;
    let height = ctx.dim(obj, "height")?;
    let rooms_v = obj.get("rooms").ok_or_else(|| ctx.err("", "missing \"rooms\""))?;
    let mut plan = Floorplan::new(width, height);
    let mut warnings = Vec::new();
    for (i, r) in ctx.array(rooms_v, "/rooms")?.iter().enumerate() {
        let rp = format!("/rooms/{i}");
        let ro = ctx.object(r, &rp)?;
        let corners_v = ro
            .get("corners")
            .ok_or_else(|| ctx.err(&rp, "missing \"corners\""))?;
        let cp = format!("{rp}/corners");
        let mut pts = Vec::new();
        for (k, c) in ctx.array(corners_v, &cp)?.iter().enumerate() {
            let p = ctx.point(c, &format!("{cp}/{k}"))?;
            ctx.in_bounds(p, width, height, &format!("{cp}/{k}"))?;
            pts.push(p);
        }
        if pts.len() < 3 {
            return Err(ctx.err(&cp, format!("a room needs at least 3 corners, found {}", pts.len())));
        }
        let n = pts.len();
        if let Some(k) = (0..n).find(|&k| pts[k] == pts[(k + 1) % n]) {
            return Err(ctx.err(&format!("{cp}/{}", (k + 1) % n), "repeated consecutive corner"));
        }
        let room_type = match ro.get("type") {
            None => 0,
            Some(t) => t
                .as_u64()
                .and_then(|t| u32::try_from(t).ok())
                .ok_or_else(|| ctx.err(&format!("{rp}/type"), "expected a non-negative integer"))?,
        };
        let mut corners = VertexSeq(pts);
        let area = signed_area(&corners);
        if area == 0.0 {
            return Err(ctx.err(&cp, "room has zero area"));
        }
        if area < 0.0 {
            match policy {
                Orientation::Reject => return Err(ctx.err(&cp, "room is clockwise")),
                Orientation::AutoCorrect => {
                    corners.0.reverse();
                    warnings.push(format!("{source}: {cp}: clockwise room reversed"));
                }
            }
        }
        plan.rooms.push(Room { corners, room_type });
    }
    plan.doors = ctx.lines(obj, "doors", width, height)?;
    plan.windows = ctx.lines(obj, "windows", width, height)?;
    Ok(Loaded { plan, warnings })
}

pub fn load_annotations(path: &Path, policy: Orientation) -> Result<Loaded> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_annotations(&text, &path.display().to_string(), policy)
}

fn point_json(p: Point2) -> Value {
    json!([p.x, p.y])
}

pub fn to_json(plan: &Floorplan) -> Value {
    let rooms: Vec<Value> = plan
        .rooms
        .iter()
        .map(|r| {
            json!({
                "corners": r.corners.iter().map(|&p| point_json(p)).collect::<Vec<_>>(),
                "type": r.room_type,
            })
        })
        .collect();
    let lines = |ls: &[Line]| -> Vec<Value> { ls.iter().map(|l| json!([point_json(l[0]), point_json(l[1])])).collect() };
    json!({
        "width": plan.width,
        "height": plan.height,
        "rooms": rooms,
        "doors": lines(&plan.doors),
        "windows": lines(&plan.windows),
    })
}

pub fn save_annotations(plan: &Floorplan, path: &Path) -> Result<()> {
    let text = serde_json::to_string_pretty(&to_json(plan))?;
    std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
}
