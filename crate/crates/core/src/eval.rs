//! Precision/recall/F1 at room, corner, angle, semantic-room and
//! door/window level.
//!
//! Rooms are paired greedily in groundtruth order by raster IoU. Corners
//! and angles are only counted inside paired rooms; their precision and
//! recall denominators are the total predicted and groundtruth corner
//! counts. Scenes aggregate by summing counts.

use alloc::vec;
use alloc::vec::Vec;

use crate::data::{Floorplan, Line};
use crate::geometry::{interior_angle_deg, mask_iou, rasterize_hard, Point2, RasterMask};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum LineMatchMode {
    /// Both endpoints within the threshold under the better pairing.
    Endpoints,
    /// Midpoints within the threshold.
    Midpoint,
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default))]
pub struct EvalThresholds {
    /// Minimum IoU for a room pair.
    pub room_iou: f64,
    /// Corner distance in pixels (strict).
    pub corner_px: f64,
    /// Interior angle difference in degrees (inclusive).
    pub angle_deg: f64,
    /// Door/window distance in pixels (strict).
    pub line_px: f64,
    pub line_mode: LineMatchMode,
}

impl Default for EvalThresholds {
    fn default() -> Self {
        Self {
            room_iou: 0.5,
            corner_px: 10.0,
            angle_deg: 5.0,
            line_px: 10.0,
            line_mode: LineMatchMode::Endpoints,
        }
    }
}

/// Raw counts behind one precision/recall pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Counts {
    pub matched: usize,
    pub predicted: usize,
    pub groundtruth: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Prf {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

fn ratio(a: usize, b: usize) -> f64 {
    if b == 0 {
        0.0
    } else {
        a as f64 / b as f64
    }
}

impl Counts {
    pub fn prf(&self) -> Prf {
        let precision = ratio(self.matched, self.predicted);
        let recall = ratio(self.matched, self.groundtruth);
        let f1 = if precision == 0.0 || recall == 0.0 {
            0.0
        } else {
            2.0 * precision * recall / (precision + recall)
        };
        Prf { precision, recall, f1 }
    }
}

impl core::ops::AddAssign for Counts {
    fn add_assign(&mut self, o: Self) {
        self.matched += o.matched;
        self.predicted += o.predicted;
        self.groundtruth += o.groundtruth;
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RoomPair {
    pub gt: usize,
    pub pred: usize,
    pub iou: f64,
}

fn room_masks(plan: &Floorplan, resolution: usize) -> Vec<RasterMask> {
    let s = resolution as f64;
    plan.rooms
        .iter()
        .map(|r| rasterize_hard(&r.corners.map(|p| Point2::new(p.x / s, p.y / s)), resolution))
        .collect()
}

/// One-to-one greedy assignment over all candidate pairs, best score first
/// (ties by lower gt, then lower pred index). Independent of element order
/// up to exact ties.
fn greedy_pairs(
    rows: usize,
    cols: usize,
    score: impl Fn(usize, usize) -> Option<f64>,
    higher_is_better: bool,
) -> Vec<(usize, usize, f64)> {
    let mut cand: Vec<(usize, usize, f64)> = (0..rows)
        .flat_map(|i| (0..cols).map(move |j| (i, j)))
        .filter_map(|(i, j)| score(i, j).map(|s| (i, j, s)))
        .collect();
    cand.sort_by(|a, b| {
        let ord = if higher_is_better { b.2.total_cmp(&a.2) } else { a.2.total_cmp(&b.2) };
        ord.then(a.0.cmp(&b.0)).then(a.1.cmp(&b.1))
    });
    let (mut row_used, mut col_used) = (vec![false; rows], vec![false; cols]);
    let mut out = Vec::new();
    for (i, j, s) in cand {
        if !row_used[i] && !col_used[j] {
            row_used[i] = true;
            col_used[j] = true;
            out.push((i, j, s));
        }
    }
    out.sort_by_key(|&(i, _, _)| i);
    out
}

/// For each groundtruth room in order, the unused prediction with the
/// highest IoU; pairs below `min_iou` are dropped. Ties go to the lower
/// prediction index.
pub fn match_rooms(gt: &Floorplan, pred: &Floorplan, min_iou: f64) -> Vec<RoomPair> {
    // a square pixel grid covering both plans
    let resolution = gt.width.max(gt.height).max(pred.width).max(pred.height).max(1);
    let gm = room_masks(gt, resolution);
    let pm = room_masks(pred, resolution);
    let mut used = vec![false; pm.len()];
    let mut pairs = Vec::new();
    for (g, gmask) in gm.iter().enumerate() {
        let mut best: Option<(usize, f64)> = None;
        for (p, pmask) in pm.iter().enumerate() {
            if used[p] {
                continue;
            }
            let iou = mask_iou(gmask, pmask);
            if best.is_none_or(|(_, b)| iou > b) {
                best = Some((p, iou));
            }
        }
        if let Some((p, iou)) = best {
            if iou >= min_iou {
                used[p] = true;
                pairs.push(RoomPair { gt: g, pred: p, iou });
            }
        }
    }
    pairs
}

/// Greedy nearest corner pairs `(gt_index, pred_index)` strictly closer
/// than `max_dist`.
pub fn match_corners(gt: &[Point2], pred: &[Point2], max_dist: f64) -> Vec<(usize, usize)> {
    greedy_pairs(
        gt.len(),
        pred.len(),
        |i, j| {
            let d = gt[i].distance(pred[j]);
            (d < max_dist).then_some(d)
        },
        false,
    )
    .into_iter()
    .map(|(i, j, _)| (i, j))
    .collect()
}

fn line_distance(a: &Line, b: &Line, mode: LineMatchMode) -> f64 {
    match mode {
        LineMatchMode::Endpoints => {
            let straight = a[0].distance(b[0]).max(a[1].distance(b[1]));
            let swapped = a[0].distance(b[1]).max(a[1].distance(b[0]));
            straight.min(swapped)
        }
        LineMatchMode::Midpoint => {
            let ma = (a[0] + a[1]) * 0.5;
            let mb = (b[0] + b[1]) * 0.5;
            ma.distance(mb)
        }
    }
}

/// Greedy one-to-one line matching, nearest first.
pub fn line_counts(gt: &[Line], pred: &[Line], th: &EvalThresholds) -> Counts {
    let matched = greedy_pairs(
        gt.len(),
        pred.len(),
        |i, j| {
            let d = line_distance(&gt[i], &pred[j], th.line_mode);
            (d < th.line_px).then_some(d)
        },
        false,
    )
    .len();
    Counts {
        matched,
        predicted: pred.len(),
        groundtruth: gt.len(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SceneCounts {
    pub room: Counts,
    pub room_semantic: Counts,
    pub corner: Counts,
    pub angle: Counts,
    pub door: Counts,
    pub window: Counts,
}

impl core::ops::AddAssign for SceneCounts {
    fn add_assign(&mut self, o: Self) {
        self.room += o.room;
        self.room_semantic += o.room_semantic;
        self.corner += o.corner;
        self.angle += o.angle;
        self.door += o.door;
        self.window += o.window;
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Metrics {
    pub room: Prf,
    pub room_semantic: Prf,
    pub corner: Prf,
    pub angle: Prf,
    pub door: Prf,
    pub window: Prf,
}

impl SceneCounts {
    pub fn metrics(&self) -> Metrics {
        Metrics {
            room: self.room.prf(),
            room_semantic: self.room_semantic.prf(),
            corner: self.corner.prf(),
            angle: self.angle.prf(),
            door: self.door.prf(),
            window: self.window.prf(),
        }
    }
}

/// Interior angle that does not depend on the vertex order's orientation.
fn room_angle(pts: &[Point2], i: usize) -> f64 {
    let a = interior_angle_deg(pts, i);
    if polygon_area(pts) < 0.0 {
        360.0 - a
    } else {
        a
    }
}

fn polygon_area(pts: &[Point2]) -> f64 {
    let n = pts.len();
    (0..n).map(|i| pts[i].cross(pts[(i + 1) % n])).sum::<f64>() / 2.0
}

fn corner_count(plan: &Floorplan) -> usize {
    plan.rooms.iter().map(|r| r.corners.len()).sum()
}

/// Counts for one scene.
pub fn evaluate_scene(gt: &Floorplan, pred: &Floorplan, th: &EvalThresholds) -> SceneCounts {
    let pairs = match_rooms(gt, pred, th.room_iou);
    let (n_gt, n_pred) = (gt.rooms.len(), pred.rooms.len());
    let mut corners = 0;
    let mut angles = 0;
    let mut semantic = 0;
    for pair in &pairs {
        let g = &gt.rooms[pair.gt];
        let p = &pred.rooms[pair.pred];
        if g.room_type == p.room_type {
            semantic += 1;
        }
        let gp = g.corners.points();
        let pp = p.corners.points();
        for (i, j) in match_corners(gp, pp, th.corner_px) {
            corners += 1;
            let diff = (room_angle(gp, i) - room_angle(pp, j)).abs();
            if diff <= th.angle_deg {
                angles += 1;
            }
        }
    }
    let (cg, cp) = (corner_count(gt), corner_count(pred));
    SceneCounts {
        room: Counts { matched: pairs.len(), predicted: n_pred, groundtruth: n_gt },
        room_semantic: Counts { matched: semantic, predicted: n_pred, groundtruth: n_gt },
        corner: Counts { matched: corners, predicted: cp, groundtruth: cg },
        angle: Counts { matched: angles, predicted: cp, groundtruth: cg },
        door: line_counts(&gt.doors, &pred.doors, th),
        window: line_counts(&gt.windows, &pred.windows, th),
    }
}

/// Summed counts over paired scenes.
pub fn evaluate_corpus<'a, I>(pairs: I, th: &EvalThresholds) -> SceneCounts
where
    I: IntoIterator<Item = (&'a Floorplan, &'a Floorplan)>,
{
    let mut total = SceneCounts::default();
    for (g, p) in pairs {
        total += evaluate_scene(g, p, th);
    }
    total
}

/// Mean IoU of paired rooms over groundtruth rooms (unpaired count as 0).
pub fn mean_room_iou(gt: &Floorplan, pred: &Floorplan) -> f64 {
    if gt.rooms.is_empty() {
        return 0.0;
    }
    let pairs = match_rooms(gt, pred, 0.0);
    pairs.iter().map(|p| p.iou).sum::<f64>() / gt.rooms.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Room;
    use crate::geometry::VertexSeq;

    fn rect(x0: f64, y0: f64, x1: f64, y1: f64, t: u32) -> Room {
        Room {
            corners: VertexSeq::from_xy(&[(x0, y0), (x1, y0), (x1, y1), (x0, y1)]),
            room_type: t,
        }
    }

    fn plan(rooms: Vec<Room>) -> Floorplan {
        Floorplan { rooms, ..Floorplan::new(256, 256) }
    }

    #[test]
    fn self_evaluation_is_perfect() {
        let mut p = plan(vec![rect(10.0, 10.0, 100.0, 90.0, 1), rect(110.0, 10.0, 200.0, 120.0, 2)]);
        p.doors.push([Point2::new(100.0, 40.0), Point2::new(100.0, 60.0)]);
        let m = evaluate_scene(&p, &p, &EvalThresholds::default()).metrics();
        for prf in [m.room, m.room_semantic, m.corner, m.angle, m.door] {
            assert_eq!(prf, Prf { precision: 1.0, recall: 1.0, f1: 1.0 });
        }
        // no windows on either side
        assert_eq!(m.window.f1, 0.0);
    }

    #[test]
    fn room_prf_arithmetic() {
        let c = Counts { matched: 2, predicted: 4, groundtruth: 3 };
        let prf = c.prf();
        assert_eq!(prf.precision, 0.5);
        assert_eq!(prf.recall, 2.0 / 3.0);
        assert!((prf.f1 - 4.0 / 7.0).abs() < 1e-15);
        assert_eq!(Counts::default().prf(), Prf::default());
    }

    #[test]
    fn empty_prediction() {
        let g = plan(vec![rect(10.0, 10.0, 100.0, 90.0, 1)]);
        assert!(match_rooms(&g, &plan(vec![]), 0.5).is_empty());
        assert_eq!(evaluate_scene(&g, &plan(vec![]), &EvalThresholds::default()).room.prf().recall, 0.0);
    }

    #[test]
    fn extra_corner_on_wall_costs_precision() {
        let g = plan(vec![rect(10.0, 10.0, 100.0, 90.0, 1)]);
        let mut p = g.clone();
        p.rooms[0].corners = VertexSeq::from_xy(&[(10.0, 10.0), (55.0, 10.0), (100.0, 10.0), (100.0, 90.0), (10.0, 90.0)]);
        let c = evaluate_scene(&g, &p, &EvalThresholds::default());
        assert_eq!(c.corner.prf().precision, 4.0 / 5.0);
        assert_eq!(c.corner.prf().recall, 1.0);
    }

    #[test]
    fn corner_threshold_boundary() {
        let g = [Point2::new(50.0, 50.0)];
        assert_eq!(match_corners(&g, &[Point2::new(59.9, 50.0)], 10.0).len(), 1);
        assert!(match_corners(&g, &[Point2::new(60.1, 50.0)], 10.0).is_empty());
    }

    #[test]
    fn wrong_label_counts_only_geometrically() {
        let g = plan(vec![rect(10.0, 10.0, 100.0, 90.0, 1)]);
        let p = plan(vec![rect(10.0, 10.0, 100.0, 90.0, 4)]);
        let c = evaluate_scene(&g, &p, &EvalThresholds::default());
        assert_eq!(c.room.matched, 1);
        assert_eq!(c.room_semantic.matched, 0);
    }

    #[test]
    fn swapped_and_offset_lines() {
        let th = EvalThresholds::default();
        let g = [[Point2::new(0.0, 0.0), Point2::new(30.0, 0.0)]];
        let swapped = [[Point2::new(30.0, 0.0), Point2::new(0.0, 0.0)]];
        assert_eq!(line_counts(&g, &swapped, &th).matched, 1);
        let off = [[Point2::new(0.0, 11.0), Point2::new(30.0, 11.0)]];
        assert_eq!(line_counts(&g, &off, &th).matched, 0);
    }

    #[test]
    fn rotation_and_order_invariance() {
        let g = plan(vec![rect(10.0, 10.0, 100.0, 90.0, 1), rect(110.0, 10.0, 200.0, 120.0, 2)]);
        let mut p = plan(vec![rect(112.0, 12.0, 198.0, 118.0, 2), rect(12.0, 9.0, 101.0, 93.0, 1)]);
        let th = EvalThresholds::default();
        let a = evaluate_scene(&g, &p, &th);
        p.rooms[0].corners = p.rooms[0].corners.rotated(3);
        p.rooms.reverse();
        assert_eq!(a, evaluate_scene(&g, &p, &th));
    }
}
