//! One check per acceptance criterion. Each prints a single PASS/FAIL line;
//! the test fails if any criterion fails.

mod common;

use std::io::Write;
use std::path::Path;
use std::time::Instant;

use rand::Rng;

use common::{network_grad_error, op_suite, rng};
use contrail_core::autodiff::{ParamStore, Tape, Tensor};
use contrail_core::falsecolor::{
    ash_rgb, compute_channel_stats, default_model_channels, model_input_stack, normalize_range, BandCube, BandId,
    CalibrationWindow, SpreadMode,
};
use contrail_core::maskops::{
    elongation, rle_decode, rle_encode, validate_track, BitMask, ComponentTrack, Pixel, RuleOptions,
};
use contrail_core::metrics::{confusion, dice, dice_aggregate, dice_global, iou, Aggregation, EvalReport};
use contrail_core::models::{adamw_step, train, ModelConfig, Network, OptState, Sample, TrainConfig};
use contrail_core::npy::{read_npy, write_npy, ArrayData, DenseArray};
use contrail_core::pipeline::{
    evaluate_submission, load_model, predict_dir, synth_generate, train_from_dir, validate_labels, write_record,
    write_submission, SyntheticSceneSpec, TrainSettings, HISTORY_FILE,
};

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

fn report(id: usize, name: &str, o: &Outcome) {
    // Written straight to stdout so the lines show up without --nocapture.
    let tag = if o.pass { "PASS" } else { "FAIL" };
    let mut out = std::io::stdout().lock();
    writeln!(out, "acceptance {tag} {id:>2} {name}: {}", o.detail).unwrap();
}

fn gradient_suite() -> Outcome {
    let start = Instant::now();
    let seeds = [1, 2, 3];
    let (op_err, worst) = op_suite(&seeds);
    let mut e2e: f64 = 0.0;
    for seed in seeds {
        e2e = e2e.max(network_grad_error(&ModelConfig::unet_tiny(3, 4, 2), seed));
        e2e = e2e.max(network_grad_error(&ModelConfig::upernet_mini(3, 4, 2), seed));
    }
    let secs = start.elapsed().as_secs_f64();
    outcome(
        op_err <= 1e-3 && e2e <= 1e-4 && secs < 60.0,
        format!("per-op max rel err {op_err:.2e} [{worst}] (<= 1e-3), end-to-end {e2e:.2e} (<= 1e-4), 3 seeds, {secs:.1} s (< 60 s)"),
    )
}

fn ce(weights: [f64; 2]) -> f64 {
    let mut t = Tape::new();
    // equal logits: p = 0.5 for the true (positive) class
    let z = t.constant(Tensor::new(vec![1, 2, 1, 1], vec![0.3, 0.3]).unwrap());
    let l = t.weighted_cross_entropy(z, &[1], &weights).unwrap();
    t.value(l).item().unwrap()
}

fn loss_oracle() -> Outcome {
    let weighted = ce([1.0, 10.0]);
    let plain = ce([1.0, 1.0]);
    outcome(
        (weighted - 6.9315).abs() <= 1e-4 && (plain - std::f64::consts::LN_2).abs() <= 1e-6,
        format!("w=10: {weighted:.6} (6.9315 +- 1e-4), w=(1,1): {plain:.9} (ln 2 +- 1e-6)"),
    )
}

fn optimizer_oracle() -> Outcome {
    let cfg = TrainConfig::default();
    let grads = [1.0, -0.5, 0.25, 2.0, -3.0, 0.0, 0.7, -0.1, 1.5, -2.2];
    let mut ps = ParamStore::<f64>::new();
    ps.push("theta", Tensor::scalar(0.0));
    let mut st = OptState::new(&ps);
    let (lr, b1, b2, eps, wd) = (cfg.learning_rate, cfg.beta1, cfg.beta2, cfg.eps, cfg.weight_decay);
    let (mut th, mut m, mut v) = (0.0f64, 0.0f64, 0.0f64);
    let mut worst: f64 = 0.0;
    let mut first = f64::NAN;
    for (k, &g) in grads.iter().enumerate() {
        adamw_step(&mut ps, &[Tensor::scalar(g)], &mut st, &cfg, lr).unwrap();
        let t = (k + 1) as i32;
        m = b1 * m + (1.0 - b1) * g;
        v = b2 * v + (1.0 - b2) * g * g;
        let mh = m / (1.0 - b1.powi(t));
        let vh = v / (1.0 - b2.powi(t));
        th = th - lr * mh / (vh.sqrt() + eps) - lr * wd * th;
        let got = ps.get(0).value.data()[0];
        if k == 0 {
            first = got;
        }
        worst = worst.max((got - th).abs());
    }
    let derived = -2.5e-4 / (1.0 + 1e-8);
    outcome(
        worst <= 1e-10 && (first - derived).abs() <= 1e-18 && (first - -2.49999e-4).abs() < 1e-9,
        format!("10 steps max |diff| {worst:.1e} (<= 1e-10); theta1 = {first:.10e} (~ -2.49999e-4)"),
    )
}

fn random_mask(r: &mut impl Rng, h: usize, w: usize, density: f64) -> BitMask {
    BitMask::from_bits(h, w, (0..h * w).map(|_| r.random_bool(density)).collect()).unwrap()
}

fn codec_suite() -> Outcome {
    let mut r = rng(40);
    let mut masks = vec![
        BitMask::new(7, 5).unwrap(),
        BitMask::from_bits(7, 5, vec![true; 35]).unwrap(),
        BitMask::from_pixels(7, 5, [(3, 2)]).unwrap(),
        BitMask::from_bits(6, 6, (0..36).map(|i| (i / 6 + i % 6) % 2 == 0).collect()).unwrap(),
        BitMask::from_bits(1, 1, vec![true]).unwrap(),
    ];
    while masks.len() < 1000 {
        let (h, w) = (r.random_range(1..20), r.random_range(1..20));
        let d = r.random_range(0.0..=1.0);
        masks.push(random_mask(&mut r, h, w, d));
    }
    let rle_ok = masks.iter().filter(|m| {
        let (h, w) = m.dims();
        rle_decode(&rle_encode(m), h, w).as_ref() == Ok(*m)
    });
    let rle_ok = rle_ok.count();

    // submission written to disk, rescored from files vs in memory
    let tmp = tempfile::tempdir().unwrap();
    let recs = synth_generate::<f32>(&SyntheticSceneSpec { seed: 41, ..SyntheticSceneSpec::default() }, 50).unwrap();
    let mut preds = Vec::new();
    for rec in &recs {
        write_record(tmp.path(), rec).unwrap();
        let mut p = rec.label().clone();
        let (h, w) = p.dims();
        for _ in 0..30 {
            let (i, j) = (r.random_range(0..h), r.random_range(0..w));
            let cur = p.get(i, j);
            p.set(i, j, !cur);
        }
        preds.push((rec.record_id.clone(), p));
    }
    let sub = tmp.path().join("submission.csv");
    std::fs::write(&sub, write_submission(&preds).unwrap()).unwrap();
    let from_files = evaluate_submission(&std::fs::read_to_string(&sub).unwrap(), tmp.path()).unwrap();
    let in_memory =
        EvalReport::from_pairs(preds.iter().zip(&recs).map(|((id, p), rec)| (id.as_str(), p, rec.label()))).unwrap();
    let diff = (from_files.global_dice - in_memory.global_dice).abs().max(
        from_files
            .per_record
            .iter()
            .zip(&in_memory.per_record)
            .map(|(a, b)| (a.dice - b.dice).abs().max((a.iou - b.iou).abs()))
            .fold(0.0, f64::max),
    );
    outcome(
        rle_ok == 1000 && diff <= 1e-12 && from_files.per_record.len() == 50,
        format!("RLE roundtrip {rle_ok}/1000 (incl. empty/full/single/checkerboard); submission rescoring |diff| {diff:.1e} (<= 1e-12), global dice {:.4}", from_files.global_dice),
    )
}

fn metric_oracle() -> Outcome {
    let mut r = rng(50);
    let mut worst: f64 = 0.0;
    let mut identity: f64 = 0.0;
    for _ in 0..100 {
        let (h, w) = (r.random_range(1..16), r.random_range(1..16));
        let (da, db) = (r.random_range(0.0..=1.0), r.random_range(0.0..=1.0));
        let a = random_mask(&mut r, h, w, da);
        let b = random_mask(&mut r, h, w, db);
        let (mut tp, mut fp, mut fnn) = (0.0f64, 0.0f64, 0.0f64);
        for i in 0..h {
            for j in 0..w {
                match (a.get(i, j), b.get(i, j)) {
                    (true, true) => tp += 1.0,
                    (true, false) => fp += 1.0,
                    (false, true) => fnn += 1.0,
                    _ => {}
                }
            }
        }
        let (bd, bi) = if tp + fp + fnn == 0.0 {
            (1.0, 1.0)
        } else {
            (2.0 * tp / (2.0 * tp + fp + fnn), tp / (tp + fp + fnn))
        };
        let c = confusion(&a, &b).unwrap();
        worst = worst.max((dice(&c) - bd).abs()).max((iou(&c) - bi).abs());
        identity = identity.max((dice(&c) - 2.0 * iou(&c) / (1.0 + iou(&c))).abs());
    }
    let one = BitMask::from_pixels(1, 2, [(0, 0)]).unwrap();
    let none = BitMask::new(1, 2).unwrap();
    let pairs = [(&one, &one), (&none, &one)];
    let global = dice_global(pairs).unwrap();
    let mean = dice_aggregate(pairs, Aggregation::PerImageMean).unwrap();
    outcome(
        worst == 0.0 && identity <= 1e-12 && global == 2.0 / 3.0 && mean == 0.5,
        format!("100 pairs vs brute force max |diff| {worst:.1e}; identity {identity:.1e} (<= 1e-12); global {global:.6} vs mean {mean}"),
    )
}

fn false_color_oracle() -> Outcome {
    let mut r = rng(60);
    let bands = vec![BandId::IR_8_4, BandId::IR_11_2, BandId::IR_12_3];
    let clamp01 = |x: f64| x.clamp(0.0, 1.0);
    let mut worst: f64 = 0.0;
    for _ in 0..20 {
        let (f, h, w) = (r.random_range(1..3), r.random_range(1..9), r.random_range(1..9));
        let vals: Vec<f64> = (0..f * 3 * h * w).map(|_| r.random_range(230.0..315.0)).collect();
        let cube = BandCube::new(f, bands.clone(), h, w, vals.clone()).unwrap();
        for frame in 0..f {
            let img = ash_rgb(&cube, frame).unwrap();
            for i in 0..h {
                for j in 0..w {
                    let at = |b: usize| vals[((frame * 3 + b) * h + i) * w + j];
                    let (b11, b14, b15) = (at(0), at(1), at(2));
                    let want = [
                        clamp01((b15 - b14 + 4.0) / 6.0),
                        clamp01((b14 - b11 + 4.0) / 9.0),
                        clamp01((b14 - 243.0) / 60.0),
                    ];
                    let got = img.pixel(i, j);
                    for k in 0..3 {
                        worst = worst.max((got[k] - want[k]).abs());
                    }
                }
            }
        }
    }
    let (red, green, blue) = (
        CalibrationWindow::<f64>::ash_red(),
        CalibrationWindow::<f64>::ash_green(),
        CalibrationWindow::<f64>::ash_blue(),
    );
    let ends = [
        normalize_range(-4.0, &red),
        normalize_range(2.0, &red),
        normalize_range(-4.0, &green),
        normalize_range(5.0, &green),
        normalize_range(243.0, &blue),
        normalize_range(303.0, &blue),
    ];
    // whole-image boundary check: BT14 = 243, differences at the lower ends,
    // and the mirror case at the upper ends
    let lo = BandCube::new(1, bands.clone(), 1, 1, vec![247.0, 243.0, 239.0]).unwrap();
    let hi = BandCube::new(1, bands, 1, 1, vec![298.0, 303.0, 305.0]).unwrap();
    let lo_px = ash_rgb(&lo, 0).unwrap().pixel(0, 0);
    let hi_px = ash_rgb(&hi, 0).unwrap().pixel(0, 0);
    let exact = ends == [0.0, 1.0, 0.0, 1.0, 0.0, 1.0] && lo_px == [0.0; 3] && hi_px == [1.0; 3];
    outcome(
        worst <= 1e-6 && exact,
        format!("random cubes vs scalar loop max |diff| {worst:.1e} (<= 1e-6); window ends {ends:?}; corner pixels {lo_px:?} / {hi_px:?}"),
    )
}

fn rect(h: usize, w: usize) -> Vec<Pixel> {
    (0..h).flat_map(|r| (0..w).map(move |c| (r, c))).collect()
}

fn geometry_oracle() -> Outcome {
    let e26 = elongation(&rect(2, 6)).unwrap();
    let mut r = rng(70);
    let mut inv: f64 = 0.0;
    for _ in 0..200 {
        let n = r.random_range(1..40);
        let px: Vec<Pixel> = (0..n).map(|_| (r.random_range(0..12), r.random_range(0..12))).collect();
        let e = elongation(&px).unwrap();
        let maps: [fn(Pixel) -> Pixel; 7] = [
            |(a, b)| (b, 11 - a),
            |(a, b)| (11 - a, 11 - b),
            |(a, b)| (11 - b, a),
            |(a, b)| (a, 11 - b),
            |(a, b)| (11 - a, b),
            |(a, b)| (b, a),
            |(a, b)| (11 - b, 11 - a),
        ];
        for f in maps {
            let q: Vec<Pixel> = px.iter().map(|&p| f(p)).collect();
            inv = inv.max((elongation(&q).unwrap() - e).abs() / e.max(1.0));
        }
    }

    // planted contrails, checked through the files on disk
    let tmp = tempfile::tempdir().unwrap();
    for rec in synth_generate::<f32>(&SyntheticSceneSpec { seed: 71, ..SyntheticSceneSpec::default() }, 100).unwrap() {
        write_record(tmp.path(), &rec).unwrap();
    }
    let labels = validate_labels(tmp.path(), &RuleOptions::default()).unwrap();
    let planted_ok = labels.tracks_checked > 0 && labels.tracks_valid == labels.tracks_checked && labels.records_skipped.is_empty();

    // random discs of area >= 10
    let (mut discs, mut failed) = (0, 0);
    while discs < 500 {
        let radius = r.random_range(1.5..8.0);
        let (cy, cx) = (r.random_range(10.0..22.0), r.random_range(10.0..22.0));
        let px: Vec<Pixel> = (0..32usize)
            .flat_map(|i| (0..32usize).map(move |j| (i, j)))
            .filter(|&(i, j)| (i as f64 - cy).powi(2) + (j as f64 - cx).powi(2) <= radius * radius)
            .collect();
        if px.len() < 10 {
            continue;
        }
        discs += 1;
        let track = ComponentTrack::new(32, 32, vec![(1, px.clone()), (2, px)]).unwrap();
        if !validate_track(&track, None, &RuleOptions::default()).elongation_ok {
            failed += 1;
        }
    }
    let disc_rate = failed as f64 / discs as f64;
    outcome(
        (e26 - 3.0).abs() <= 0.01 && inv <= 1e-6 && planted_ok && disc_rate >= 0.95,
        format!(
            "2x6 rectangle {e26:.6}; dihedral invariance {inv:.1e} (<= 1e-6); planted tracks valid {}/{}; discs failing elongation {:.1}% (>= 95%)",
            labels.tracks_valid,
            labels.tracks_checked,
            100.0 * disc_rate
        ),
    )
}

fn samples(recs: &[contrail_core::pipeline::RecordBundle<f32>], stats_from: usize) -> Vec<Sample<f32>> {
    let channels = default_model_channels();
    let frames: Vec<_> = recs[..stats_from].iter().map(|r| (&r.cube, r.labeled_frame())).collect();
    let stats = compute_channel_stats(&frames, &channels, SpreadMode::StdDev).unwrap();
    recs.iter()
        .map(|r| Sample {
            input: model_input_stack(&r.cube, r.labeled_frame(), &channels, &stats).unwrap(),
            mask: r.label().clone(),
        })
        .collect()
}

fn trainability() -> Outcome {
    let spec = SyntheticSceneSpec { seed: 80, ..SyntheticSceneSpec::default() };
    let recs = synth_generate::<f32>(&spec, 250).unwrap();
    let data = samples(&recs, 200);
    let (train_set, val_set) = data.split_at(200);
    let cfg = TrainConfig::default();
    let mut net = Network::<f32>::build(&ModelConfig::unet_tiny(6, 8, 3), 0).unwrap();
    let start = Instant::now();
    let out = train(&mut net, train_set, val_set, &cfg, |_, _| Ok(())).unwrap();
    let secs = start.elapsed().as_secs_f64();
    let dice_curve: Vec<f64> = out.history.iter().filter_map(|h| h.val_dice).collect();
    let best = dice_curve.iter().copied().fold(0.0, f64::max);
    let reached = dice_curve.iter().position(|&d| d >= 0.80).map(|e| e + 1);
    let last = *dice_curve.last().unwrap();

    // single-example overfit
    let one = &train_set[..1];
    let overfit_cfg = TrainConfig {
        epochs: 200,
        batch_size: 1,
        ..TrainConfig::default()
    };
    let mut small = Network::<f32>::build(&ModelConfig::unet_tiny(6, 8, 3), 1).unwrap();
    let o = train(&mut small, one, &[], &overfit_cfg, |_, _| Ok(())).unwrap();
    let initial = o.step_losses[0];
    let target: Vec<usize> = one[0].mask.bits().iter().map(|&b| usize::from(b)).collect();
    let x = Tensor::stack(&[&one[0].input]).unwrap();
    let mut tape = Tape::new();
    let (l, _) = small.loss(&mut tape, &x, &target, &[1.0, 10.0]).unwrap();
    let final_loss = tape.value(l).item().unwrap() as f64;
    let ratio = final_loss / initial;

    outcome(
        reached.is_some() && secs < 600.0 && ratio < 0.1,
        format!(
            "val global dice >= 0.80 at epoch {} (best {best:.4}, final {last:.4}) in {secs:.0} s (< 600 s); overfit loss {initial:.4} -> {final_loss:.4} ({:.1}% < 10%) in 200 steps",
            reached.map_or("never".to_string(), |e| e.to_string()),
            100.0 * ratio
        ),
    )
}

fn pipeline_run(root: &Path) -> (Vec<u8>, Vec<u8>, Vec<(u64, u64, Option<u64>, u64)>) {
    let data = root.join("data");
    let test = root.join("test");
    let ckpt = root.join("ckpt");
    let spec = SyntheticSceneSpec { seed: 90, ..SyntheticSceneSpec::default() };
    for rec in synth_generate::<f32>(&spec, 16).unwrap() {
        write_record(&data, &rec).unwrap();
    }
    for rec in synth_generate::<f32>(&SyntheticSceneSpec { seed: 91, ..spec }, 4).unwrap() {
        write_record(&test, &rec).unwrap();
    }
    let settings = TrainSettings::from_toml("base_width = 4\ndepth = 2\nepochs = 2\nfolds = 4\nseed = 9\n").unwrap();
    let out = train_from_dir::<f32>(&settings, &data, &ckpt).unwrap();
    let models = vec![load_model::<f32>(&ckpt).unwrap(), load_model::<f32>(&ckpt.join("epochs/epoch_001")).unwrap()];
    let sub = write_submission(&predict_dir(&models, &test, 0.75).unwrap()).unwrap();
    let history_bits = out
        .history
        .iter()
        .map(|h| (h.epoch as u64, h.loss.to_bits(), h.val_dice.map(f64::to_bits), h.lr.to_bits()))
        .collect();
    (sub.into_bytes(), std::fs::read(ckpt.join(HISTORY_FILE)).unwrap(), history_bits)
}

fn determinism() -> Outcome {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let ra = pipeline_run(a.path());
    let rb = pipeline_run(b.path());
    outcome(
        ra.0 == rb.0 && ra.1 == rb.1 && ra.2 == rb.2,
        format!(
            "submission bytes identical: {} ({} bytes); history.csv identical: {}; history bit-identical: {}",
            ra.0 == rb.0,
            ra.0.len(),
            ra.1 == rb.1,
            ra.2 == rb.2
        ),
    )
}

fn npy_golden() -> Outcome {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures");
    let arr = |shape: Vec<usize>, data| DenseArray::new(shape, data).unwrap();
    let cases = [
        ("f32_2x2.npy", arr(vec![2, 2], ArrayData::F32(vec![1.0, 2.0, 3.0, 4.0]))),
        ("f64_scalar.npy", arr(vec![], ArrayData::F64(vec![5.0]))),
        ("f64_empty.npy", arr(vec![0], ArrayData::F64(vec![]))),
        ("i64_2x3.npy", arr(vec![2, 3], ArrayData::I64(vec![-2, -1, 0, 1, 2, 3]))),
        ("u8_3.npy", arr(vec![3], ArrayData::U8(vec![0, 7, 255]))),
        ("bool_2x2.npy", arr(vec![2, 2], ArrayData::Bool(vec![true, false, false, true]))),
    ];
    let (mut parsed, mut written) = (0, 0);
    for (name, want) in &cases {
        let bytes = std::fs::read(dir.join(name)).unwrap();
        parsed += usize::from(read_npy(&bytes).ok().as_ref() == Some(want));
        written += usize::from(write_npy(want).unwrap() == bytes);
    }
    let fortran = read_npy(&std::fs::read(dir.join("f32_fortran_2x3.npy")).unwrap()).unwrap();
    let fortran_ok = fortran.shape() == [2, 3] && fortran.data == ArrayData::F32(vec![0.0, 1.0, 2.0, 3.0, 4.0, 5.0]);
    outcome(
        parsed == cases.len() && written == cases.len() && fortran_ok,
        format!("{parsed}/{} fixtures parse exactly, {written}/{} rewritten byte-identical, fortran-order fixture {}", cases.len(), cases.len(), if fortran_ok { "ok" } else { "wrong" }),
    )
}

#[test]
fn acceptance() {
    let criteria: [(&str, fn() -> Outcome); 10] = [
        ("gradient suite", gradient_suite),
        ("loss oracle", loss_oracle),
        ("optimizer oracle", optimizer_oracle),
        ("codec suite", codec_suite),
        ("metric oracle", metric_oracle),
        ("false-color oracle", false_color_oracle),
        ("geometry oracle", geometry_oracle),
        ("trainability", trainability),
        ("determinism", determinism),
        ("npy golden files", npy_golden),
    ];
    let mut failed = Vec::new();
    for (i, (name, check)) in criteria.iter().enumerate() {
        let o = check();
        report(i + 1, name, &o);
        if !o.pass {
            failed.push(*name);
        }
    }
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
