//! Turning raw predictions into floorplans: keep the vertices whose validity
//! clears the threshold, in sequence order, and nothing else.

use alloc::vec::Vec;

use crate::data::{Floorplan, Line, Room, NUM_ROOM_TYPES};
use crate::geometry::{Point2, VertexSeq};
use crate::matching::Prediction;

/// Class index layout of a semantic head: room types first, then the
/// optional door and window classes, then the empty class.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ClassLayout {
    pub room_types: usize,
    pub lines: bool,
}

impl ClassLayout {
    pub const ROOMS: Self = Self {
        room_types: NUM_ROOM_TYPES,
        lines: false,
    };
    pub const ROOMS_AND_LINES: Self = Self {
        room_types: NUM_ROOM_TYPES,
        lines: true,
    };

    pub fn classes(&self) -> usize {
        self.room_types + if self.lines { 3 } else { 1 }
    }

    pub fn door(&self) -> Option<u32> {
        self.lines.then_some(self.room_types as u32)
    }

    pub fn window(&self) -> Option<u32> {
        self.lines.then_some(self.room_types as u32 + 1)
    }

    pub fn empty(&self) -> u32 {
        self.classes() as u32 - 1
    }
}

pub const DEFAULT_THRESHOLD: f64 = 0.5;

/// Valid vertices of prediction row `k`, in order.
pub fn valid_vertices(pred: &Prediction, k: usize, threshold: f64) -> Vec<Point2> {
    pred.coords_row(k)
        .iter()
        .zip(pred.probs_row(k))
        .filter(|(_, &p)| p >= threshold)
        .map(|(&c, _)| c)
        .collect()
}

fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = i;
        }
    }
    best
}

/// Decodes polygon rows into a floorplan in pixel coordinates.
///
/// Without type logits every room gets type 0. With a line-aware layout,
/// rows classified as door or window become lines when exactly two
/// vertices are valid.
pub fn decode_to_floorplan(
    pred: &Prediction,
    threshold: f64,
    layout: ClassLayout,
    width: usize,
    height: usize,
) -> Floorplan {
    let mut plan = Floorplan::new(width, height);
    let scale = |p: Point2| Point2::new(p.x * width as f64, p.y * height as f64);
    for k in 0..pred.m {
        let verts = valid_vertices(pred, k, threshold);
        let class = pred.type_logits_row(k).map(|r| argmax(r) as u32);
        let is_door = class.is_some() && class == layout.door();
        let is_window = class.is_some() && class == layout.window();
        if is_door || is_window {
            if let [a, b] = verts[..] {
                let line: Line = [scale(a), scale(b)];
                if is_door {
                    plan.doors.push(line);
                } else {
                    plan.windows.push(line);
                }
            }
            continue;
        }
        if verts.len() >= 3 {
            plan.rooms.push(Room {
                corners: VertexSeq(verts.into_iter().map(scale).collect()),
                room_type: class.unwrap_or(0),
            });
        }
    }
    plan
}

/// Decodes a dedicated line head (two vertices per row) into doors and
/// windows. Rows need both endpoints valid.
pub fn decode_lines(
    pred: &Prediction,
    threshold: f64,
    layout: ClassLayout,
    width: usize,
    height: usize,
) -> (Vec<Line>, Vec<Line>) {
    let (mut doors, mut windows) = (Vec::new(), Vec::new());
    let scale = |p: Point2| Point2::new(p.x * width as f64, p.y * height as f64);
    for k in 0..pred.m {
        let verts = valid_vertices(pred, k, threshold);
        let [a, b] = verts[..] else { continue };
        let class = pred.type_logits_row(k).map(|r| argmax(r) as u32);
        let line = [scale(a), scale(b)];
        if class == layout.door() {
            doors.push(line);
        } else if class == layout.window() {
            windows.push(line);
        }
    }
    (doors, windows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn square_pred(probs: Vec<f64>) -> Prediction {
        let coords = vec![
            Point2::new(0.1, 0.1),
            Point2::new(0.5, 0.1),
            Point2::new(0.5, 0.5),
            Point2::new(0.1, 0.5),
            Point2::new(0.0, 0.0),
        ];
        Prediction::new(1, 5, coords, probs)
    }

    #[test]
    fn all_invalid_is_empty() {
        let plan = decode_to_floorplan(&square_pred(vec![0.0; 5]), 0.5, ClassLayout::ROOMS, 100, 100);
        assert!(plan.rooms.is_empty());
    }

    #[test]
    fn keeps_valid_vertices_in_order() {
        let plan = decode_to_floorplan(&square_pred(vec![0.9, 0.8, 0.5, 0.7, 0.1]), 0.5, ClassLayout::ROOMS, 100, 100);
        assert_eq!(plan.rooms.len(), 1);
        let pts = plan.rooms[0].corners.points();
        assert_eq!(pts.len(), 4);
        assert_eq!(pts[2], Point2::new(50.0, 50.0));
    }

    #[test]
    fn two_vertex_room_dropped() {
        let plan = decode_to_floorplan(&square_pred(vec![0.9, 0.8, 0.1, 0.2, 0.1]), 0.5, ClassLayout::ROOMS, 100, 100);
        assert!(plan.rooms.is_empty());
    }

    #[test]
    fn two_vertex_door_kept() {
        let layout = ClassLayout::ROOMS_AND_LINES;
        let mut logits = vec![0.0; layout.classes()];
        logits[layout.door().unwrap() as usize] = 5.0;
        let pred = square_pred(vec![0.9, 0.8, 0.1, 0.2, 0.1]).with_type_logits(logits, layout.classes());
        let plan = decode_to_floorplan(&pred, 0.5, layout, 100, 100);
        assert_eq!(plan.doors.len(), 1);
        assert!(plan.rooms.is_empty());
    }
}
