use candle_core::{DType, Device, Tensor, Var};
use floorplan_core::data::DensityMap;
use floorplan_core::synth::{generate_synthetic, SynthConfig};
use floorplan_nn::checkpoint::{load_model, read_checkpoint, save_checkpoint, CheckpointMeta};
use floorplan_nn::train::{train, RunFiles, Sample, TrainConfig, Trainer};
use floorplan_nn::{AttentionMode, FloorplanModel, ModelConfig, ModelError, QueryMode, Variant};

fn tiny(variant: Variant) -> ModelConfig {
    ModelConfig {
        input_size: 64,
        num_polygons: 4,
        num_corners: 6,
        num_lines: 5,
        hidden_dim: 32,
        heads: 2,
        sampling_points: 2,
        encoder_layers: 1,
        decoder_layers: 2,
        ffn_dim: 64,
        backbone_channels: [8, 16, 32, 64],
        ..ModelConfig::for_variant(variant)
    }
}

fn input(size: usize, seed: u64, dtype: DType) -> Tensor {
    let s = generate_synthetic(seed, &SynthConfig::for_map_size(size)).unwrap();
    Tensor::from_vec(s.density.values, (1, 1, size, size), &Device::Cpu)
        .unwrap()
        .to_dtype(dtype)
        .unwrap()
}

fn samples(n: usize, offset: u64) -> Vec<Sample> {
    let cfg = SynthConfig {
        vertices: (4, 6),
        ..SynthConfig::for_map_size(64)
    };
    (0..n as u64)
        .map(|i| {
            let s = generate_synthetic(offset + i, &cfg).unwrap();
            Sample {
                density: s.density,
                plan: s.plan,
            }
        })
        .collect()
}

fn host(t: &Tensor) -> Vec<f64> {
    t.to_dtype(DType::F64).unwrap().flatten_all().unwrap().to_vec1().unwrap()
}

#[test]
fn output_shapes_for_every_variant() {
    for v in [Variant::Plain, Variant::SdTq, Variant::TdTq, Variant::TdSq] {
        let cfg = tiny(v);
        let model = FloorplanModel::new(cfg.clone(), 0, DType::F32, &Device::Cpu).unwrap();
        let x = Tensor::cat(&[input(64, 1, DType::F32), input(64, 2, DType::F32)], 0).unwrap();
        let out = model.forward(&x).unwrap();
        assert_eq!(out.rooms.len(), cfg.decoder_layers);
        let last = out.rooms.last().unwrap();
        assert_eq!(last.coords.dims(), &[2, cfg.num_polygons, cfg.num_corners, 2]);
        assert_eq!(last.logits.dims(), &[2, cfg.num_polygons, cfg.num_corners]);
        assert_eq!(last.types.is_some(), cfg.polygon_layout().is_some(), "{v:?}");
        match (&out.lines, v.has_line_decoder()) {
            (Some(lines), true) => {
                let l = lines.last().unwrap();
                assert_eq!(l.coords.dims(), &[2, cfg.num_lines, 2, 2]);
                assert_eq!(l.types.as_ref().unwrap().dims(), &[2, cfg.num_lines, 3]);
            }
            (None, false) => {}
            _ => panic!("{v:?}: line decoder presence"),
        }
        for c in host(&last.coords) {
            assert!((0.0..=1.0).contains(&c));
        }
    }
}

#[test]
fn same_seed_same_outputs() {
    let x = input(64, 3, DType::F32);
    let a = FloorplanModel::new(tiny(Variant::Plain), 9, DType::F32, &Device::Cpu).unwrap();
    let b = FloorplanModel::new(tiny(Variant::Plain), 9, DType::F32, &Device::Cpu).unwrap();
    let c = FloorplanModel::new(tiny(Variant::Plain), 10, DType::F32, &Device::Cpu).unwrap();
    let oa = host(&a.forward(&x).unwrap().rooms[1].coords);
    assert_eq!(oa, host(&b.forward(&x).unwrap().rooms[1].coords));
    assert_ne!(oa, host(&c.forward(&x).unwrap().rooms[1].coords));
}

fn content_var(model: &FloorplanModel) -> Var {
    model
        .params()
        .named()
        .iter()
        .find(|(k, _)| k.ends_with("content") && !k.contains("line"))
        .map(|(_, v)| v.clone())
        .expect("polygon query content")
}

/// Perturbs the queries of polygon 0 and returns the largest change seen in
/// the coordinates of polygon 1.
fn cross_polygon_change(attention: AttentionMode) -> f64 {
    let cfg = ModelConfig {
        attention,
        ..tiny(Variant::Plain)
    };
    let n = cfg.num_corners;
    let model = FloorplanModel::new(cfg, 4, DType::F64, &Device::Cpu).unwrap();
    let x = input(64, 5, DType::F64);
    let before = model.forward(&x).unwrap();
    let var = content_var(&model);
    let mut data: Vec<Vec<f64>> = var.as_tensor().to_vec2().unwrap();
    for row in data.iter_mut().take(n) {
        for v in row.iter_mut() {
            *v += 0.5;
        }
    }
    var.set(&Tensor::new(data, &Device::Cpu).unwrap()).unwrap();
    let after = model.forward(&x).unwrap();
    let poly1 = |t: &Tensor| host(&t.narrow(1, 1, 1).unwrap());
    let mut worst: f64 = 0.0;
    for (b, a) in before.rooms.iter().zip(&after.rooms) {
        for (p, q) in poly1(&b.coords).iter().zip(poly1(&a.coords)) {
            worst = worst.max((p - q).abs());
        }
        for (p, q) in poly1(&b.logits).iter().zip(poly1(&a.logits)) {
            worst = worst.max((p - q).abs());
        }
    }
    worst
}

#[test]
fn intra_polygon_mask_blocks_cross_polygon_influence() {
    assert_eq!(cross_polygon_change(AttentionMode::IntraPolygon), 0.0);
    assert!(cross_polygon_change(AttentionMode::InterPolygon) > 1e-6);
}

#[test]
fn gradient_through_reference_points_matches_finite_differences() {
    let cfg = tiny(Variant::Plain);
    let model = FloorplanModel::new(cfg.clone(), 2, DType::F64, &Device::Cpu).unwrap();
    let x = input(64, 6, DType::F64);
    let (m, n) = (cfg.num_polygons, cfg.num_corners);
    let weights = Tensor::rand(0.0f64, 1.0, (1, m, n, 2), &Device::Cpu).unwrap();
    let lw = Tensor::rand(0.0f64, 1.0, (1, m, n), &Device::Cpu).unwrap();
    // First-layer outputs only: later layers see detached coordinates. The
    // logits reach the initial coordinates only through the positional
    // queries and the deformable sampling locations.
    let objective = || -> Tensor {
        let out = model.forward(&x).unwrap();
        let l0 = &out.rooms[0];
        ((&l0.coords * &weights).unwrap().sum_all().unwrap() * 1e-3 + (&l0.logits * &lw).unwrap().sum_all().unwrap())
            .unwrap()
    };
    let var = model
        .params()
        .named()
        .iter()
        .find(|(k, _)| k.ends_with("init_coords") && !k.contains("line"))
        .map(|(_, v)| v.clone())
        .unwrap();
    let grads = objective().backward().unwrap();
    let analytic: Vec<f64> = host(grads.get(var.as_tensor()).unwrap());
    let base: Vec<f64> = host(var.as_tensor());
    let h = 1e-5;
    for idx in [0, 3, 7, 12, 2 * n + 1, 2 * (m * n) - 1] {
        let eval = |delta: f64| {
            let mut v = base.clone();
            v[idx] += delta;
            var.set(&Tensor::from_vec(v, var.as_tensor().dims(), &Device::Cpu).unwrap()).unwrap();
            objective().to_scalar::<f64>().unwrap()
        };
        let fd = (eval(h) - eval(-h)) / (2.0 * h);
        var.set(&Tensor::from_vec(base.clone(), var.as_tensor().dims(), &Device::Cpu).unwrap())
            .unwrap();
        let a = analytic[idx];
        assert!(a.abs() > 1e-4, "entry {idx}: gradient vanished");
        assert!(
            (fd - a).abs() <= 1e-4 * fd.abs().max(a.abs()).max(1e-3),
            "entry {idx}: analytic {a}, numeric {fd}"
        );
    }
}

#[test]
fn checkpoint_round_trip_and_mismatch() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.safetensors");
    let cfg = tiny(Variant::TdTq);
    let model = FloorplanModel::new(cfg.clone(), 3, DType::F32, &Device::Cpu).unwrap();
    save_checkpoint(&path, &model, &CheckpointMeta::new(&cfg, 7, None)).unwrap();
    let (back, meta) = load_model(&path, Some(&cfg), DType::F32, &Device::Cpu).unwrap();
    assert_eq!(meta.epoch, 7);
    assert_eq!(meta.model, cfg);
    let x = input(64, 8, DType::F32);
    let a = model.forward(&x).unwrap();
    let b = back.forward(&x).unwrap();
    assert_eq!(host(&a.rooms[1].coords), host(&b.rooms[1].coords));
    assert_eq!(
        host(&a.lines.as_ref().unwrap()[1].logits),
        host(&b.lines.as_ref().unwrap()[1].logits)
    );
    assert_eq!(read_checkpoint(&path).unwrap().tensors.len(), model.params().len());

    let other = ModelConfig {
        num_polygons: 5,
        ..cfg.clone()
    };
    let err = load_model(&path, Some(&other), DType::F32, &Device::Cpu).err().unwrap();
    assert!(matches!(err, ModelError::ConfigMismatch(_)), "{err}");

    std::fs::write(&path, b"garbage").unwrap();
    assert!(load_model(&path, None, DType::F32, &Device::Cpu).is_err());
}

#[test]
fn learning_rate_drops_once() {
    let cfg = TrainConfig {
        epochs: 10,
        lr: 1e-3,
        ..TrainConfig::default()
    };
    assert_eq!(cfg.lr_at(0), 1e-3);
    assert_eq!(cfg.lr_at(7), 1e-3);
    assert!((cfg.lr_at(8) - 1e-4).abs() < 1e-15);
    assert!((cfg.lr_at(9) - 1e-4).abs() < 1e-15);
}

#[test]
fn two_epoch_runs_are_deterministic() {
    let data = samples(4, 0);
    let val = samples(2, 100);
    let cfg = TrainConfig {
        epochs: 2,
        batch_size: 2,
        ..TrainConfig::default()
    };
    let run = || {
        let model = FloorplanModel::new(tiny(Variant::Plain), 0, DType::F32, &Device::Cpu).unwrap();
        let rep = train(&model, &cfg, &data, Some(&val), &RunFiles::default()).unwrap();
        let out = host(&model.forward(&input(64, 1, DType::F32)).unwrap().rooms[1].coords);
        (rep.history.iter().map(|h| h.loss.total).collect::<Vec<_>>(), out)
    };
    let (a, b) = (run(), run());
    assert_eq!(a, b);
    assert!(a.0.iter().all(|l| l.is_finite()));
}

#[test]
fn training_log_has_one_line_per_epoch() {
    let dir = tempfile::tempdir().unwrap();
    let log = dir.path().join("log.jsonl");
    let model = FloorplanModel::new(tiny(Variant::TdTq), 0, DType::F32, &Device::Cpu).unwrap();
    let cfg = TrainConfig {
        epochs: 2,
        batch_size: 2,
        ..TrainConfig::default()
    };
    let files = RunFiles {
        log: Some(log.clone()),
        ..RunFiles::default()
    };
    train(&model, &cfg, &samples(2, 0), Some(&samples(1, 50)), &files).unwrap();
    let text = std::fs::read_to_string(log).unwrap();
    let lines: Vec<serde_json::Value> = text.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(lines.len(), 2);
    assert_eq!(lines[1]["epoch"], 1);
    assert!(lines[1]["validation"]["room"]["f1"].is_number());
}

#[test]
fn loss_decreases_on_a_fixed_batch() {
    let data = samples(2, 20);
    let batch: Vec<&Sample> = data.iter().collect();
    let mut decreased = 0;
    for seed in 0..5 {
        let model = FloorplanModel::new(tiny(Variant::Plain), seed, DType::F32, &Device::Cpu).unwrap();
        let cfg = TrainConfig {
            lr: 5e-4,
            seed,
            ..TrainConfig::default()
        };
        let mut trainer = Trainer::new(&model, cfg).unwrap();
        let first = trainer.loss(&batch).unwrap().total;
        for step in 0..50 {
            trainer.step(&batch, step).unwrap();
        }
        let last = trainer.loss(&batch).unwrap().total;
        if last < first {
            decreased += 1;
        }
    }
    assert!(decreased >= 4, "loss decreased for {decreased} of 5 seeds");
}

#[test]
fn single_level_queries_predict_whole_polygons() {
    let cfg = ModelConfig {
        query_mode: QueryMode::SingleLevel,
        ..tiny(Variant::Plain)
    };
    let model = FloorplanModel::new(cfg.clone(), 0, DType::F32, &Device::Cpu).unwrap();
    let names: Vec<&String> = model.params().named().keys().collect();
    let content = names.iter().find(|k| k.ends_with("content")).unwrap();
    assert_eq!(model.params().named()[*content].as_tensor().dims(), &[cfg.num_polygons, cfg.hidden_dim]);
    let plans = model
        .predict(&[&DensityMap::zeros(64, 64)], 0.5)
        .unwrap();
    assert_eq!(plans.len(), 1);
}
