//! Evaluation report JSON: thresholds, aggregate and per-scene precision,
//! recall and F1 at every level, plus the raw counts behind them.

use floorplan_core::data::Floorplan;
use floorplan_core::eval::{evaluate_scene, mean_room_iou, Counts, EvalThresholds, SceneCounts};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Level {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub matched: usize,
    pub predicted: usize,
    pub groundtruth: usize,
}

impl From<Counts> for Level {
    fn from(c: Counts) -> Self {
        let p = c.prf();
        Self {
            precision: p.precision,
            recall: p.recall,
            f1: p.f1,
            matched: c.matched,
            predicted: c.predicted,
            groundtruth: c.groundtruth,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Levels {
    pub room: Level,
    pub room_semantic: Level,
    pub corner: Level,
    pub angle: Level,
    pub door: Level,
    pub window: Level,
}

impl From<&SceneCounts> for Levels {
    fn from(c: &SceneCounts) -> Self {
        Self {
            room: c.room.into(),
            room_semantic: c.room_semantic.into(),
            corner: c.corner.into(),
            angle: c.angle.into(),
            door: c.door.into(),
            window: c.window.into(),
        }
    }
}

impl Levels {
    fn all(&self) -> [(&'static str, &Level); 6] {
        [
            ("room", &self.room),
            ("room_semantic", &self.room_semantic),
            ("corner", &self.corner),
            ("angle", &self.angle),
            ("door", &self.door),
            ("window", &self.window),
        ]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneReport {
    pub name: String,
    pub metrics: Levels,
    pub mean_room_iou: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Report {
    pub tool_version: String,
    pub thresholds: EvalThresholds,
    pub scene_count: usize,
    pub aggregate: Levels,
    pub mean_room_iou: f64,
    pub scenes: Vec<SceneReport>,
}

/// Evaluates named (groundtruth, prediction) pairs. Aggregates sum counts
/// over scenes.
pub fn build_report(pairs: &[(String, &Floorplan, &Floorplan)], th: &EvalThresholds) -> Report {
    let mut total = SceneCounts::default();
    let mut scenes = Vec::with_capacity(pairs.len());
    let mut iou_sum = 0.0;
    for (name, gt, pred) in pairs {
        let c = evaluate_scene(gt, pred, th);
        total += c;
        let iou = mean_room_iou(gt, pred);
        iou_sum += iou;
        scenes.push(SceneReport {
            name: name.clone(),
            metrics: (&c).into(),
            mean_room_iou: iou,
        });
    }
    Report {
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        thresholds: *th,
        scene_count: pairs.len(),
        aggregate: (&total).into(),
        mean_room_iou: if pairs.is_empty() { 0.0 } else { iou_sum / pairs.len() as f64 },
        scenes,
    }
}

fn check_level(path: &str, l: &Level) -> Result<()> {
    let bad = |m: String| Err(Error::Config(format!("report {path}: {m}")));
    for (k, v) in [("precision", l.precision), ("recall", l.recall), ("f1", l.f1)] {
        if !(0.0..=1.0).contains(&v) {
            return bad(format!("{k} = {v} outside [0, 1]"));
        }
    }
    if l.matched > l.predicted || l.matched > l.groundtruth {
        return bad("more matches than elements".into());
    }
    let expect = Level::from(Counts {
        matched: l.matched,
        predicted: l.predicted,
        groundtruth: l.groundtruth,
    });
    if (expect.f1 - l.f1).abs() > 1e-9 || (expect.precision - l.precision).abs() > 1e-9 {
        return bad("scores disagree with counts".into());
    }
    Ok(())
}

/// Checks a report document against the schema and its internal
/// consistency (scores recomputed from counts, per-scene counts summing to
/// the aggregate).
pub fn validate_report(text: &str) -> Result<Report> {
    let r: Report = serde_json::from_str(text).map_err(|e| Error::Config(format!("report: {e}")))?;
    if r.scene_count != r.scenes.len() {
        return Err(Error::Config("report: scene_count does not match scenes".into()));
    }
    for (name, l) in r.aggregate.all() {
        check_level(&format!("/aggregate/{name}"), l)?;
    }
    for (i, s) in r.scenes.iter().enumerate() {
        for (name, l) in s.metrics.all() {
            check_level(&format!("/scenes/{i}/metrics/{name}"), l)?;
        }
    }
    let agg = r.aggregate.all();
    for (k, (name, a)) in agg.iter().enumerate() {
        let sum: usize = r.scenes.iter().map(|s| s.metrics.all()[k].1.matched).sum();
        if sum != a.matched {
            return Err(Error::Config(format!("report: /aggregate/{name} does not sum the scenes")));
        }
    }
    Ok(r)
}

#[cfg(test)]
mod tests {
    use super::*;
    use floorplan_core::data::Room;
    use floorplan_core::geometry::VertexSeq;

    fn square(x: f64) -> Room {
        Room {
            corners: VertexSeq::from_xy(&[(x, 10.0), (x + 40.0, 10.0), (x + 40.0, 50.0), (x, 50.0)]),
            room_type: 1,
        }
    }

    fn pair() -> (Floorplan, Floorplan) {
        let mut gt = Floorplan::new(128, 128);
        gt.rooms = vec![square(10.0), square(60.0)];
        let mut pred = Floorplan::new(128, 128);
        pred.rooms = vec![square(10.0)];
        (gt, pred)
    }

    #[test]
    fn aggregate_sums_scene_counts() {
        let (gt, pred) = pair();
        let r = build_report(
            &[("a".into(), &gt, &pred), ("b".into(), &gt, &gt)],
            &EvalThresholds::default(),
        );
        assert_eq!(r.scene_count, 2);
        assert_eq!((r.aggregate.room.matched, r.aggregate.room.groundtruth), (3, 4));
        assert_eq!(r.aggregate.room.precision, 1.0);
        assert_eq!(r.aggregate.room.recall, 0.75);
        assert_eq!(r.scenes[1].metrics.corner.f1, 1.0);
    }

    #[test]
    fn serialized_report_validates() {
        let (gt, pred) = pair();
        let r = build_report(&[("a".into(), &gt, &pred)], &EvalThresholds::default());
        let text = serde_json::to_string(&r).unwrap();
        assert_eq!(validate_report(&text).unwrap(), r);
    }

    #[test]
    fn tampered_reports_are_rejected() {
        let (gt, pred) = pair();
        let r = build_report(&[("a".into(), &gt, &pred)], &EvalThresholds::default());
        let mut bad = r.clone();
        bad.aggregate.room.f1 = 0.9;
        assert!(validate_report(&serde_json::to_string(&bad).unwrap()).is_err());
        let mut bad = r.clone();
        bad.aggregate.corner.matched += 1;
        bad.aggregate.corner.predicted += 1;
        bad.aggregate.corner.groundtruth += 1;
        bad.aggregate.corner = Level::from(Counts {
            matched: bad.aggregate.corner.matched,
            predicted: bad.aggregate.corner.predicted,
            groundtruth: bad.aggregate.corner.groundtruth,
        });
        assert!(validate_report(&serde_json::to_string(&bad).unwrap()).is_err());
        let mut v: serde_json::Value = serde_json::to_value(&r).unwrap();
        v["extra"] = 1.into();
        assert!(validate_report(&v.to_string()).is_err());
    }
}
