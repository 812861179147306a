//! Acceptance checks. Prints one PASS/FAIL line per criterion; with
//! `ACCEPTANCE_STRICT=1` the process also exits non-zero if any fails.
//! The training experiments run at 128x128 on the CPU and take most of the
//! runtime.

use std::time::Instant;

use candle_core::{DType, Device};
use floorplan_core::baseline::{run_baseline, BaselineConfig};
use floorplan_core::data::{Floorplan, Line, PaddedTargets, Room};
use floorplan_core::doors::{plot_door_arcs, DoorAxis};
use floorplan_core::eval::{evaluate_scene, mean_room_iou, Counts, EvalThresholds, SceneCounts};
use floorplan_core::geometry::{best_rotation, cyclic_coord_distance, ensure_ccw, Point2, VertexSeq};
use floorplan_core::losses::{
    coord_loss, raster_dice_loss, room_type_loss, total_loss, vertex_cls_loss, LossConfig, RasterConfig,
};
use floorplan_core::matching::{cost_matrix, match_polygons, CostWeights, MatchAssignment, Prediction};
use floorplan_core::synth::{generate_synthetic, SynthConfig};
use floorplan_nn::train::{evaluate, train, MatchingCost, RunFiles, Sample, TrainConfig};
use floorplan_nn::{FloorplanModel, ModelConfig, QueryMode};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const EXPERIMENT_SIZE: usize = 128;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn star_polygon(rng: &mut ChaCha8Rng, n: usize) -> VertexSeq {
    let c = Point2::new(rng.random_range(0.3..0.7), rng.random_range(0.3..0.7));
    let mut angles: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..std::f64::consts::TAU)).collect();
    angles.sort_by(f64::total_cmp);
    let pts = angles
        .iter()
        .map(|a| {
            let r = rng.random_range(0.08..0.25);
            Point2::new(c.x + r * a.cos(), c.y + r * a.sin())
        })
        .collect();
    ensure_ccw(&VertexSeq(pts)).unwrap()
}

fn permutations(n: usize) -> Vec<Vec<usize>> {
    if n == 0 {
        return vec![vec![]];
    }
    let mut out = Vec::new();
    for p in permutations(n - 1) {
        for i in 0..=p.len() {
            let mut q = p.clone();
            q.insert(i, n - 1);
            out.push(q);
        }
    }
    out
}

fn random_prediction(rng: &mut ChaCha8Rng, m: usize, n: usize) -> Prediction {
    let coords = (0..m * n)
        .map(|_| Point2::new(rng.random_range(0.05..0.95), rng.random_range(0.05..0.95)))
        .collect();
    let probs = (0..m * n).map(|_| rng.random_range(0.05..0.95)).collect();
    Prediction::new(m, n, coords, probs)
}

fn matching_oracle() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(500);
    let mut worst: f64 = 0.0;
    let mut cyclic_mismatch = 0;
    for _ in 0..500 {
        let m = rng.random_range(1..=5);
        let n = rng.random_range(3..=6);
        let real = rng.random_range(0..=m);
        let polys: Vec<VertexSeq> = (0..real)
            .map(|_| {
                let k = rng.random_range(3..=n);
                star_polygon(&mut rng, k)
            })
            .collect();
        let gt = PaddedTargets::from_polygons(&polys, None, m, n).unwrap();
        let pred = random_prediction(&mut rng, m, n);
        let w = CostWeights::default();
        let got = match_polygons(&gt, &pred, &w).unwrap();
        let costs = cost_matrix(&gt, &pred, &w).unwrap();
        let best = permutations(m)
            .iter()
            .map(|p| p.iter().enumerate().map(|(s, &k)| costs[s][k].total()).sum::<f64>())
            .fold(f64::INFINITY, f64::min);
        // equal up to summation order among tied assignments
        worst = worst.max((got.total - best).abs() / best.max(1.0));
        for (s, poly) in polys.iter().enumerate() {
            let pred_poly = VertexSeq(pred.coords_row(got.perm[s])[..poly.len()].to_vec());
            let brute = (0..poly.len())
                .map(|r| poly.rotated(r).iter().zip(pred_poly.iter()).map(|(a, b)| a.l1_distance(*b)).sum::<f64>())
                .fold(f64::INFINITY, f64::min);
            if cyclic_coord_distance(poly, &pred_poly).unwrap() != brute {
                cyclic_mismatch += 1;
            }
        }
    }
    let secs = start.elapsed().as_secs_f64();
    outcome(
        worst <= 1e-12 && cyclic_mismatch == 0 && secs < 30.0,
        format!("500 instances, max relative gap hungarian vs exhaustive = {worst:e}, cyclic mismatches = {cyclic_mismatch}, {secs:.1}s"),
    )
}

fn gradient_suite() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(20);
    let (m, n) = (3, 5);
    let classes = 17;
    let cfg = LossConfig {
        raster: Some(RasterConfig::default()),
        room_types: true,
        ..LossConfig::default()
    };
    let mut checked = 0;
    let mut kinks = 0;
    let mut worst: f64 = 0.0;
    let mut instances = 0;
    while instances < 20 {
        let real = rng.random_range(1..=m);
        let polys: Vec<VertexSeq> = (0..real)
            .map(|_| {
                let k = rng.random_range(3..=n);
                star_polygon(&mut rng, k)
            })
            .collect();
        let types: Vec<u32> = (0..real).map(|_| rng.random_range(0..16)).collect();
        let gt = PaddedTargets::from_polygons(&polys, Some(&types), m, n).unwrap();
        let logits: Vec<f64> = (0..m * classes).map(|_| rng.random_range(-2.0..2.0)).collect();
        let pred = random_prediction(&mut rng, m, n).with_type_logits(logits, classes);
        let assignment = match_polygons(&gt, &pred, &CostWeights::default()).unwrap();
        // only points where every rotation argmin is unique
        let unique = (0..real).all(|s| {
            let len = gt.lengths[s];
            let p = &pred.coords_row(assignment.perm[s])[..len];
            let (_, best) = best_rotation(gt.polygon(s), p).unwrap();
            let ties = (0..len)
                .filter(|&r| {
                    let c: f64 = (0..len).map(|i| gt.polygon(s)[(i + r) % len].l1_distance(p[i])).sum();
                    c - best < 1e-4
                })
                .count();
            ties == 1
        });
        if !unique {
            continue;
        }
        instances += 1;
        let loss = |p: &Prediction, a: &MatchAssignment| total_loss(&gt, p, a, &cfg, false).unwrap().0.total;
        let (_, grad) = total_loss(&gt, &pred, &assignment, &cfg, true).unwrap();
        let grad = grad.unwrap();
        let h = 1e-6;
        let rel = |num: f64, ana: f64| (num - ana).abs() / num.abs().max(ana.abs()).max(1e-3);
        for i in 0..m * n {
            for axis in 0..2 {
                let eval = |d: f64| {
                    let mut p = pred.clone();
                    if axis == 0 {
                        p.coords[i].x += d;
                    } else {
                        p.coords[i].y += d;
                    }
                    loss(&p, &assignment)
                };
                let num = (eval(h) - eval(-h)) / (2.0 * h);
                // the soft mask has kinks where a cell's nearest edge
                // changes; a difference quotient straddling one is not a
                // derivative, detected by disagreement with a 10x smaller step
                let fine = (eval(h / 10.0) - eval(-h / 10.0)) / (0.2 * h);
                if rel(num, fine) > 1e-4 {
                    kinks += 1;
                    continue;
                }
                worst = worst.max(rel(num, grad.coords[i][axis]));
                checked += 1;
            }
            let eval = |d: f64| {
                let mut p = pred.clone();
                p.probs[i] += d;
                loss(&p, &assignment)
            };
            worst = worst.max(rel((eval(h) - eval(-h)) / (2.0 * h), grad.probs[i]));
            checked += 1;
        }
        let tl = grad.type_logits.unwrap();
        for (i, &g) in tl.iter().enumerate() {
            let eval = |d: f64| {
                let mut p = pred.clone();
                p.type_logits.as_mut().unwrap()[i] += d;
                loss(&p, &assignment)
            };
            worst = worst.max(rel((eval(h) - eval(-h)) / (2.0 * h), g));
            checked += 1;
        }
    }
    let secs = start.elapsed().as_secs_f64();
    outcome(
        worst < 1e-3 && secs < 120.0,
        format!("20 instances, {checked} partials ({kinks} skipped at kinks), max relative error {worst:.2e}, {secs:.1}s"),
    )
}

fn loss_goldens() -> Outcome {
    let mut fails = Vec::new();
    let mut count = 0;
    let mut check = |name: &str, got: f64, want: f64, tol: f64| {
        count += 1;
        if (got - want).abs() > tol {
            fails.push(format!("{name}: {got} != {want}"));
        }
    };
    check("bce perfect", vertex_cls_loss(&[1, 0, 1], &[1.0, 0.0, 1.0]), 0.0, 1e-6);
    check("bce uniform", vertex_cls_loss(&[1, 0, 1, 0], &[0.5; 4]), std::f64::consts::LN_2, 1e-6);
    check("bce (1,0)/(0.9,0.2)", vertex_cls_loss(&[1, 0], &[0.9, 0.2]), 0.164_252, 1e-6);
    let tri = [Point2::new(0.2, 0.2), Point2::new(0.6, 0.2), Point2::new(0.3, 0.7)];
    let shifted: Vec<Point2> = tri.iter().map(|p| Point2::new(p.x + 0.1, p.y)).collect();
    check("l1 perfect", coord_loss(&tri, &tri).unwrap(), 0.0, 1e-12);
    check("l1 offset triangle", coord_loss(&tri, &shifted).unwrap(), 0.1, 1e-6);
    let sq = VertexSeq::from_xy(&[(0.0, 0.0), (1.0, 0.0), (1.0, 1.0), (0.0, 1.0)]);
    let sq_shift = sq.map(|p| Point2::new(p.x + 0.1, p.y));
    check("cyclic square shift", cyclic_coord_distance(&sq, &sq_shift).unwrap(), 0.4, 1e-6);
    let big = [
        Point2::new(0.1, 0.1),
        Point2::new(0.9, 0.1),
        Point2::new(0.9, 0.9),
        Point2::new(0.1, 0.9),
    ];
    let dice = raster_dice_loss(&big, &big, &RasterConfig::default()).unwrap();
    // a soft mask never reaches zero Dice loss exactly
    check("dice self", dice.max(0.05), 0.05, 0.0);
    let small = [
        Point2::new(0.05, 0.05),
        Point2::new(0.3, 0.05),
        Point2::new(0.3, 0.3),
        Point2::new(0.05, 0.3),
    ];
    let far: Vec<Point2> = small.iter().map(|p| Point2::new(p.x + 0.6, p.y + 0.6)).collect();
    check("dice disjoint", raster_dice_loss(&small, &far, &RasterConfig::default()).unwrap(), 1.0, 1e-3);
    let t = PaddedTargets::from_polygons(&[VertexSeq(tri.to_vec())], Some(&[3]), 2, 3).unwrap();
    let a = MatchAssignment {
        perm: vec![0, 1],
        per_pair: vec![Default::default(); 2],
        total: 0.0,
    };
    let pred = Prediction::new(2, 3, t.coords.clone(), vec![1.0; 6]).with_type_logits(vec![0.0; 34], 17);
    check("ce uniform 17", room_type_loss(&t, &pred, &a).unwrap(), 17f64.ln(), 1e-6);
    let mut onehot = vec![0.0; 34];
    onehot[3] = 60.0;
    onehot[17 + 16] = 60.0;
    let pred = pred.with_type_logits(onehot, 17);
    check("ce perfect", room_type_loss(&t, &pred, &a).unwrap(), 0.0, 1e-6);
    // pair cost of the offset triangle with perfect probabilities
    let gt = PaddedTargets::from_polygons(&[VertexSeq(tri.to_vec())], None, 1, 3).unwrap();
    let p = Prediction::new(1, 3, shifted.clone(), vec![1.0; 3]);
    check("pair cost", match_polygons(&gt, &p, &CostWeights::default()).unwrap().total, 1.5, 1e-6);
    let cfg = LossConfig {
        raster: None,
        ..LossConfig::default()
    };
    let assign = match_polygons(&gt, &p, &CostWeights::default()).unwrap();
    check("total λcoord·L1", total_loss(&gt, &p, &assign, &cfg, false).unwrap().0.total, 0.5, 1e-6);
    outcome(fails.is_empty(), if fails.is_empty() { format!("{count} golden values") } else { fails.join("; ") })
}

fn rect(x0: f64, y0: f64, x1: f64, y1: f64, t: u32) -> Room {
    Room {
        corners: VertexSeq::from_xy(&[(x0, y0), (x1, y0), (x1, y1), (x0, y1)]),
        room_type: t,
    }
}

fn plan(rooms: Vec<Room>) -> Floorplan {
    Floorplan {
        rooms,
        ..Floorplan::new(256, 256)
    }
}

fn c(matched: usize, predicted: usize, groundtruth: usize) -> Counts {
    Counts {
        matched,
        predicted,
        groundtruth,
    }
}

fn metric_goldens() -> Outcome {
    let th = EvalThresholds::default();
    let shift = |r: &Room, dx: f64, dy: f64| Room {
        corners: r.corners.map(|p| Point2::new(p.x + dx, p.y + dy)),
        room_type: r.room_type,
    };
    let a = rect(20.0, 20.0, 120.0, 120.0, 1);
    let b = rect(130.0, 20.0, 230.0, 120.0, 2);
    let d = rect(20.0, 130.0, 120.0, 230.0, 3);
    let mut scenes: Vec<(&str, Floorplan, Floorplan, SceneCounts)> = Vec::new();

    // 1. identical scene with a door
    let mut g1 = plan(vec![a.clone(), b.clone()]);
    g1.doors.push([Point2::new(120.0, 50.0), Point2::new(120.0, 70.0)]);
    scenes.push((
        "identical",
        g1.clone(),
        g1,
        SceneCounts {
            room: c(2, 2, 2),
            room_semantic: c(2, 2, 2),
            corner: c(8, 8, 8),
            angle: c(8, 8, 8),
            door: c(1, 1, 1),
            window: c(0, 0, 0),
        },
    ));

    // 2. three gt rooms, four predictions, two of them junk
    let g2 = plan(vec![a.clone(), b.clone(), d.clone()]);
    let p2 = plan(vec![
        a.clone(),
        b.clone(),
        rect(140.0, 140.0, 180.0, 180.0, 0),
        rect(190.0, 190.0, 240.0, 240.0, 0),
    ]);
    scenes.push((
        "3 gt / 4 pred",
        g2,
        p2,
        SceneCounts {
            room: c(2, 4, 3),
            room_semantic: c(2, 4, 3),
            corner: c(8, 16, 12),
            angle: c(8, 16, 12),
            ..Default::default()
        },
    ));

    // 3. second room shifted by 60 px: IoU 40/160 < 0.5
    let g3 = plan(vec![a.clone(), b.clone()]);
    let p3 = plan(vec![a.clone(), shift(&b, 0.0, 60.0)]);
    scenes.push((
        "room below IoU threshold",
        g3,
        p3,
        SceneCounts {
            room: c(1, 2, 2),
            room_semantic: c(1, 2, 2),
            corner: c(4, 8, 8),
            angle: c(4, 8, 8),
            ..Default::default()
        },
    ));

    // 4. whole room shifted 9.9 px: every corner matches, angles unchanged
    let g4 = plan(vec![a.clone()]);
    scenes.push((
        "corners at 9.9 px",
        g4.clone(),
        plan(vec![shift(&a, 9.9, 0.0)]),
        SceneCounts {
            room: c(1, 1, 1),
            room_semantic: c(1, 1, 1),
            corner: c(4, 4, 4),
            angle: c(4, 4, 4),
            ..Default::default()
        },
    ));

    // 5. shifted 10.1 px: the room still matches, no corner does
    scenes.push((
        "corners at 10.1 px",
        g4,
        plan(vec![shift(&a, 10.1, 0.0)]),
        SceneCounts {
            room: c(1, 1, 1),
            room_semantic: c(1, 1, 1),
            corner: c(0, 4, 4),
            angle: c(0, 4, 4),
            ..Default::default()
        },
    ));

    // 6. one corner pulled 9.5 px down: atan(0.095) = 5.43 deg at that corner
    //    and its successor, so 2 of 4 angles survive; wrong type; swapped
    //    door endpoints still count; window 11 px off does not
    let mut g6 = plan(vec![rect(50.0, 50.0, 150.0, 150.0, 4)]);
    g6.doors.push([Point2::new(50.0, 80.0), Point2::new(50.0, 110.0)]);
    g6.windows.push([Point2::new(70.0, 50.0), Point2::new(110.0, 50.0)]);
    let mut p6 = plan(vec![Room {
        corners: VertexSeq::from_xy(&[(50.0, 50.0), (150.0, 50.0), (150.0, 159.5), (50.0, 150.0)]),
        room_type: 5,
    }]);
    p6.doors.push([Point2::new(50.0, 110.0), Point2::new(50.0, 80.0)]);
    p6.windows.push([Point2::new(70.0, 39.0), Point2::new(110.0, 39.0)]);
    scenes.push((
        "angles, types, openings",
        g6,
        p6,
        SceneCounts {
            room: c(1, 1, 1),
            room_semantic: c(0, 1, 1),
            corner: c(4, 4, 4),
            angle: c(2, 4, 4),
            door: c(1, 1, 1),
            window: c(0, 1, 1),
        },
    ));

    let mut fails = Vec::new();
    for (name, g, p, want) in &scenes {
        let got = evaluate_scene(g, p, &th);
        if &got != want {
            fails.push(format!("{name}: got {got:?}"));
        }
    }
    // P/R/F1 arithmetic on scene 2
    let prf = evaluate_scene(&scenes[1].1, &scenes[1].2, &th).metrics().room;
    if prf.precision != 0.5 || prf.recall != 2.0 / 3.0 || (prf.f1 - 4.0 / 7.0).abs() > 1e-15 {
        fails.push(format!("3 gt / 4 pred scores {prf:?}"));
    }
    outcome(fails.is_empty(), if fails.is_empty() { "6 scenes, all levels".into() } else { fails.join("; ") })
}

/// Line-by-line transcription of the door-arc procedure, y pointing down.
struct OracleArc {
    vertical: bool,
    e1: Point2,
    e2: Point2,
    double: bool,
    radius: f64,
    clockwise: bool,
}

fn door_oracle(doors: &[Line]) -> Vec<Option<OracleArc>> {
    let mut lens: Vec<f64> = doors.iter().map(|l| l[0].distance(l[1])).collect();
    let raw = lens.clone();
    lens.sort_by(f64::total_cmp);
    let k = lens.len();
    let m = if k % 2 == 1 { lens[k / 2] } else { (lens[k / 2 - 1] + lens[k / 2]) / 2.0 };
    doors
        .iter()
        .zip(raw)
        .map(|(l, len)| {
            if len == 0.0 {
                return None;
            }
            let ((x1, y1), (x2, y2)) = ((l[0].x, l[0].y), (l[1].x, l[1].y));
            if (y2 - y1).abs() > (x2 - x1).abs() {
                let (e1, e2) = if y2 > y1 { (l[0], l[1]) } else { (l[1], l[0]) };
                Some(if len < 1.5 * m {
                    OracleArc { vertical: true, e1, e2, double: false, radius: len, clockwise: true }
                } else {
                    OracleArc { vertical: true, e1, e2, double: true, radius: len / 2.0, clockwise: true }
                })
            } else {
                let (e1, e2) = if x2 > x1 { (l[1], l[0]) } else { (l[0], l[1]) };
                Some(if len < 1.5 * m {
                    OracleArc { vertical: false, e1, e2, double: false, radius: len, clockwise: false }
                } else {
                    OracleArc { vertical: false, e1, e2, double: true, radius: len / 2.0, clockwise: false }
                })
            }
        })
        .collect()
}

fn door_arcs() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut fails = 0;
    let mut arcs_checked = 0;
    for _ in 0..1000 {
        let count = rng.random_range(1..8);
        let doors: Vec<Line> = (0..count)
            .map(|_| {
                let a = Point2::new(rng.random_range(0.0..256.0_f64).round(), rng.random_range(0.0..256.0_f64).round());
                let len = if rng.random_bool(0.05) { 0.0 } else { rng.random_range(5.0..60.0) };
                let ang = rng.random_range(0.0..std::f64::consts::TAU);
                [a, Point2::new(a.x + len * ang.cos(), a.y + len * ang.sin())]
            })
            .collect();
        let got = plot_door_arcs(&doors);
        let want = door_oracle(&doors);
        let mut it = got.arcs.iter();
        for (i, w) in want.iter().enumerate() {
            let Some(w) = w else {
                fails += usize::from(!got.skipped.contains(&i));
                continue;
            };
            arcs_checked += 1;
            let Some(a) = it.next() else {
                fails += 1;
                continue;
            };
            let right = |q: &floorplan_core::doors::Quadrant| {
                let d = a.e2 - a.e1;
                let v = q.end - q.center;
                d.x * v.y - d.y * v.x
            };
            let mut ok = a.door == i
                && (a.axis == DoorAxis::Vertical) == w.vertical
                && a.e1 == w.e1
                && a.e2 == w.e2
                && a.double == w.double
                && a.quadrants.iter().all(|q| (q.radius - w.radius).abs() < 1e-12);
            if !w.double {
                let q = &a.quadrants[0];
                ok &= a.quadrants.len() == 1 && q.center == w.e1 && q.start == w.e2 && q.clockwise == w.clockwise;
            } else {
                ok &= a.quadrants.len() == 2 && a.quadrants[0].center == w.e1 && a.quadrants[1].center == w.e2;
                // right of e1->e2 for vertical doors, left for horizontal
                ok &= a.quadrants.iter().all(|q| if w.vertical { right(q) > 0.0 } else { right(q) < 0.0 });
            }
            fails += usize::from(!ok);
        }
    }
    outcome(fails == 0, format!("1000 random door sets, {arcs_checked} arcs, {fails} mismatches"))
}

fn forward_speed() -> Outcome {
    let cfg = ModelConfig::desk();
    let model = FloorplanModel::new(cfg, 0, DType::F32, &Device::Cpu).unwrap();
    let s = generate_synthetic(0, &SynthConfig::default()).unwrap();
    let x = model.batch(&[&s.density]).unwrap();
    model.forward(&x).unwrap();
    let mut times: Vec<f64> = (0..7)
        .map(|_| {
            let t = Instant::now();
            model.forward(&x).unwrap();
            t.elapsed().as_secs_f64() * 1e3
        })
        .collect();
    times.sort_by(f64::total_cmp);
    let median = times[3];
    outcome(median < 100.0, format!("median forward {median:.1} ms at 256x256 (plain, desk scale)"))
}

fn scenes(seeds: std::ops::Range<u64>, cfg: &SynthConfig) -> Vec<Sample> {
    seeds
        .map(|s| {
            let scene = generate_synthetic(s, cfg).unwrap();
            Sample {
                density: scene.density,
                plan: scene.plan,
            }
        })
        .collect()
}

fn experiment_model() -> ModelConfig {
    ModelConfig {
        input_size: EXPERIMENT_SIZE,
        ..ModelConfig::desk()
    }
}

fn experiment_train(epochs: usize, seed: u64) -> TrainConfig {
    TrainConfig {
        epochs,
        batch_size: 4,
        lr: 5e-4,
        eval_every: 5,
        seed,
        ..TrainConfig::default()
    }
}

fn scores(model: &FloorplanModel, data: &[Sample]) -> floorplan_core::eval::Metrics {
    evaluate(model, data, 0.5, 8, &EvalThresholds::default()).unwrap().0.metrics()
}

struct Overfit {
    model: FloorplanModel,
    outcome: Outcome,
}

fn overfit() -> Overfit {
    let synth = SynthConfig::for_map_size(EXPERIMENT_SIZE);
    let train_set = scenes(0..50, &synth);
    let held_out = scenes(10_000..10_050, &synth);
    let model = FloorplanModel::new(experiment_model(), 0, DType::F32, &Device::Cpu).unwrap();
    let start = Instant::now();
    // validating on the training set keeps the epoch with the best fit
    let report = train(&model, &experiment_train(200, 0), &train_set, Some(&train_set), &RunFiles::default()).unwrap();
    let fit = scores(&model, &train_set);
    let held = scores(&model, &held_out);
    let minutes = start.elapsed().as_secs_f64() / 60.0;
    let pass = fit.room.f1 >= 0.95 && held.room.f1 >= 0.80 && held.corner.f1 >= 0.60;
    Overfit {
        model,
        outcome: outcome(
            pass,
            format!(
                "train room F1 {:.3} (best epoch {}), held-out room F1 {:.3}, corner F1 {:.3}, angle F1 {:.3}; {minutes:.1} min",
                fit.room.f1, report.best_epoch, held.room.f1, held.corner.f1, held.angle.f1
            ),
        ),
    }
}

fn baseline(model: &FloorplanModel) -> Outcome {
    let rect_cfg = SynthConfig {
        rooms: (1, 1),
        vertices: (4, 4),
        non_manhattan_ratio: 0.0,
        noise_px: 0.0,
        dropout: 0.0,
        ..SynthConfig::default()
    };
    let bcfg = BaselineConfig::default();
    let rects = scenes(40_000..40_020, &rect_cfg);
    let iou = rects
        .iter()
        .map(|s| mean_room_iou(&s.plan, &run_baseline(&s.density, &bcfg)))
        .sum::<f64>()
        / rects.len() as f64;

    let odd_cfg = SynthConfig {
        non_manhattan_ratio: 1.0,
        ..SynthConfig::for_map_size(EXPERIMENT_SIZE)
    };
    let odd = scenes(30_000..30_050, &odd_cfg);
    let th = EvalThresholds::default();
    let mut base = SceneCounts::default();
    for s in &odd {
        base += evaluate_scene(&s.plan, &run_baseline(&s.density, &bcfg), &th);
    }
    let base_angle = base.metrics().angle.f1;
    let model_angle = scores(model, &odd).angle.f1;
    outcome(
        iou >= 0.9 && base_angle < model_angle,
        format!(
            "rectangles: baseline mean IoU {iou:.3}; non-rectangular: angle F1 baseline {base_angle:.3} vs model {model_angle:.3}"
        ),
    )
}

fn ablations() -> Outcome {
    let synth = SynthConfig::for_map_size(EXPERIMENT_SIZE);
    let train_set = scenes(0..50, &synth);
    let val = scenes(20_000..20_025, &synth);
    let test = scenes(10_000..10_050, &synth);
    let epochs = 40;
    let run = |model_cfg: ModelConfig, train_cfg: TrainConfig, seed: u64| {
        let model = FloorplanModel::new(model_cfg, seed, DType::F32, &Device::Cpu).unwrap();
        train(&model, &train_cfg, &train_set, Some(&val), &RunFiles::default()).unwrap();
        scores(&model, &test)
    };
    let (mut two, mut single, mut mask) = (Vec::new(), Vec::new(), Vec::new());
    for seed in 0..3 {
        let start = Instant::now();
        two.push(run(experiment_model(), experiment_train(epochs, seed), seed));
        single.push(run(
            ModelConfig {
                query_mode: QueryMode::SingleLevel,
                ..experiment_model()
            },
            experiment_train(epochs, seed),
            seed,
        ));
        mask.push(run(
            experiment_model(),
            TrainConfig {
                matching: MatchingCost::Mask,
                lambda_coord: 0.0,
                ..experiment_train(epochs, seed)
            },
            seed,
        ));
        eprintln!("  ablation seed {seed} done in {:.1} min", start.elapsed().as_secs_f64() / 60.0);
    }
    let mean = |v: &[floorplan_core::eval::Metrics], f: fn(&floorplan_core::eval::Metrics) -> f64| {
        v.iter().map(f).sum::<f64>() / v.len() as f64
    };
    let room = |m: &floorplan_core::eval::Metrics| m.room.f1;
    let corner = |m: &floorplan_core::eval::Metrics| m.corner.f1;
    let (two_room, single_room) = (mean(&two, room), mean(&single, room));
    let (full_corner, mask_corner) = (mean(&two, corner), mean(&mask, corner));
    outcome(
        two_room > single_room && mask_corner < full_corner,
        format!(
            "3 seeds: room F1 two-level {two_room:.3} vs single-level {single_room:.3}; corner F1 full loss {full_corner:.3} vs mask cost without L1 {mask_corner:.3}"
        ),
    )
}

struct Run {
    filters: Vec<String>,
    results: Vec<(&'static str, bool)>,
}

impl Run {
    fn wants(&self, name: &str) -> bool {
        self.filters.is_empty() || self.filters.iter().any(|f| name.contains(f.as_str()))
    }

    fn check(&mut self, name: &'static str, f: impl FnOnce() -> Outcome) {
        if self.wants(name) {
            let o = f();
            println!("{} {name}: {}", if o.pass { "PASS" } else { "FAIL" }, o.detail);
            self.results.push((name, o.pass));
        }
    }
}

/// Positional arguments select criteria by substring; harness flags such as
/// `--nocapture` are ignored.
fn main() {
    let args: Vec<String> = std::env::args().skip(1).collect();
    if args.iter().any(|a| a == "--list") {
        return;
    }
    let mut run = Run {
        filters: args.into_iter().filter(|a| !a.starts_with('-')).collect(),
        results: Vec::new(),
    };
    run.check("matching oracle", matching_oracle);
    run.check("loss gradients vs finite differences", gradient_suite);
    run.check("loss golden values", loss_goldens);
    run.check("metric golden scenes", metric_goldens);
    run.check("door arcs vs transcription oracle", door_arcs);
    run.check("forward pass speed", forward_speed);
    if run.wants("overfit and held-out") || run.wants("baseline") {
        eprintln!("  training the overfit model (200 epochs)...");
        let fit = overfit();
        run.check("overfit and held-out", || fit.outcome);
        run.check("baseline", || baseline(&fit.model));
    }
    if run.wants("ablation directions") {
        eprintln!("  running ablations (3 seeds x 3 configurations)...");
        run.check("ablation directions", ablations);
    }
    let failed = run.results.iter().filter(|(_, ok)| !ok).count();
    println!("{} of {} criteria passed", run.results.len() - failed, run.results.len());
    // failures are reported above; set ACCEPTANCE_STRICT=1 to turn them into
    // a failing exit status
    if failed > 0 && std::env::var_os("ACCEPTANCE_STRICT").is_some_and(|v| v == "1") {
        std::process::exit(1);
    }
}
