//! Door symbols for rendering: each door line becomes one or two quarter
//! circles depending on its length relative to the median door length.
//!
//! Coordinates are image pixels (origin top-left, y down). "Clockwise" is
//! as seen on screen.

use alloc::vec::Vec;

use crate::data::Line;
use crate::geometry::Point2;

/// Doors at least this many medians long are drawn as double doors.
pub const DOUBLE_DOOR_FACTOR: f64 = 1.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DoorAxis {
    /// `|dy| > |dx|`
    Vertical,
    Horizontal,
}

/// A quarter circle from `start` to `end` around `center`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Quadrant {
    pub center: Point2,
    pub radius: f64,
    pub start: Point2,
    pub end: Point2,
    pub clockwise: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DoorArc {
    /// Index into the input line list.
    pub door: usize,
    pub axis: DoorAxis,
    /// Ordered endpoints `(e1, e2)` after the per-axis swap.
    pub e1: Point2,
    pub e2: Point2,
    pub double: bool,
    pub quadrants: Vec<Quadrant>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct DoorArcs {
    pub arcs: Vec<DoorArc>,
    /// Indices of zero-length lines that were not drawn.
    pub skipped: Vec<usize>,
}

/// Median of the values; the mean of the two middle ones for even counts.
pub fn median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let mid = v.len() / 2;
    Some(if v.len() % 2 == 0 {
        (v[mid - 1] + v[mid]) / 2.0
    } else {
        v[mid]
    })
}

// 90 degree screen rotations with y pointing down.
fn rot_cw(v: Point2) -> Point2 {
    Point2::new(-v.y, v.x)
}

fn rot_ccw(v: Point2) -> Point2 {
    Point2::new(v.y, -v.x)
}

pub fn plot_door_arcs(doors: &[Line]) -> DoorArcs {
    let lengths: Vec<f64> = doors.iter().map(|[a, b]| a.distance(*b)).collect();
    let mut out = DoorArcs::default();
    let Some(m) = median(&lengths) else {
        return out;
    };
    for (i, (&[p1, p2], &len)) in doors.iter().zip(&lengths).enumerate() {
        if len == 0.0 {
            out.skipped.push(i);
            continue;
        }
        let (dx, dy) = (p2.x - p1.x, p2.y - p1.y);
        let double = len >= DOUBLE_DOOR_FACTOR * m;
        let (axis, e1, e2) = if dy.abs() > dx.abs() {
            let (e1, e2) = if p2.y > p1.y { (p1, p2) } else { (p2, p1) };
            (DoorAxis::Vertical, e1, e2)
        } else {
            let (e1, e2) = if p2.x > p1.x { (p2, p1) } else { (p1, p2) };
            (DoorAxis::Horizontal, e1, e2)
        };
        let quadrants = if !double {
            let clockwise = axis == DoorAxis::Vertical;
            let v = e2 - e1;
            let turned = if clockwise { rot_cw(v) } else { rot_ccw(v) };
            alloc::vec![Quadrant {
                center: e1,
                radius: len,
                start: e2,
                end: e1 + turned,
                clockwise,
            }]
        } else {
            let r = len / 2.0;
            let u = (e2 - e1) * (1.0 / len);
            // Right of e1->e2 for vertical doors, left for horizontal ones.
            let side = if axis == DoorAxis::Vertical { rot_cw(u) } else { rot_ccw(u) };
            let first_cw = axis == DoorAxis::Vertical;
            alloc::vec![
                Quadrant {
                    center: e1,
                    radius: r,
                    start: e1 + u * r,
                    end: e1 + side * r,
                    clockwise: first_cw,
                },
                Quadrant {
                    center: e2,
                    radius: r,
                    start: e2 - u * r,
                    end: e2 + side * r,
                    clockwise: !first_cw,
                },
            ]
        };
        out.arcs.push(DoorArc {
            door: i,
            axis,
            e1,
            e2,
            double,
            quadrants,
        });
    }
    out
}
