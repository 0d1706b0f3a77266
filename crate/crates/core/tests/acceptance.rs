//! Acceptance suite. Runs every criterion in order, prints one PASS/FAIL
//! line each, and fails if any criterion fails. Criteria 6 to 8 train desk
//! models and dominate the runtime.

mod common;

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::{Duration, Instant};

use ccrcnn::config::{LabelConfig, ModelConfig, TrainConfig};
use ccrcnn::dataio::{generate_synthetic, Dataset, Split, SynthConfig};
use ccrcnn::dethead::{
    anchor_grid, assign_labels, classification_loss, decode_span, derive_alpha, encode_span,
    logistic_loss, smooth_l1, Anchor, LabelClass,
};
use ccrcnn::geomeval::{
    ap_range, average_precision, iou_1d, iou_thresholds, match_detections, nms, sort_detections,
    ApMode, Detection, Interval,
};
use ccrcnn::gradsuite::{run_suite, SuiteOptions};
use ccrcnn::nnengine::count_params;
use ccrcnn::tmatch::{
    detect_tm, mad, normalized_cc, sliding_cc, split_templates, spread_indices, tm_baseline,
    TmConfig,
};
use ccrcnn::trainer::{evaluate, mean_map, run_ablation, train, Trainer, Variant};
use ccrcnn::Network;
use common::{
    det, iou_by_counting, naive_ap, naive_flags, naive_label, naive_nms, naive_sliding_cc,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Epochs per ablation run; the criterion fixes seeds and variants but not
/// the schedule, and nine 20-epoch runs would take hours on one core.
const ABLATION_EPOCHS: usize = 4;
const ABLATION_SEEDS: [u64; 3] = [1, 2, 3];
const SINGLE_SCALE: usize = 1;

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

fn rand_interval(rng: &mut ChaCha8Rng) -> Interval {
    let b = rng.gen_range(0..200);
    Interval::new(b, b + rng.gen_range(1..60)).unwrap()
}

fn rand_dets(rng: &mut ChaCha8Rng, max: usize) -> Vec<Detection> {
    let n = rng.gen_range(0..=max);
    (0..n)
        .map(|_| {
            Detection::new(
                rand_interval(rng),
                f64::from(rng.gen_range(0u8..6)) / 5.0,
                Some(rng.gen_range(0..3)),
            )
        })
        .collect()
}

fn gradient_fidelity() -> Outcome {
    let t = Instant::now();
    let cases = run_suite(&SuiteOptions::default()).unwrap();
    let elapsed = t.elapsed();
    let worst = cases
        .iter()
        .map(|c| c.report.max_rel_error)
        .fold(0.0, f64::max);
    let failed: Vec<&str> = cases
        .iter()
        .filter(|c| !c.passed())
        .map(|c| c.name.as_str())
        .collect();
    let checked: usize = cases.iter().map(|c| c.report.checked).sum();
    outcome(
        failed.is_empty() && elapsed < Duration::from_secs(120),
        format!(
            "{} cases x 100 trials, {checked} coordinates, max rel err {worst:.2e}, {:.1}s, failed {failed:?}",
            cases.len(),
            elapsed.as_secs_f64()
        ),
    )
}

fn evaluator_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut mismatches = 0;
    for _ in 0..500 {
        let dets = rand_dets(&mut rng, 12);
        let gts: Vec<Interval> = (0..rng.gen_range(1..=6))
            .map(|_| rand_interval(&mut rng))
            .collect();
        for tau in iou_thresholds() {
            let flags = naive_flags(&dets, &gts, tau);
            let mut s = dets.clone();
            sort_detections(&mut s);
            if match_detections(&s, &gts, tau) != flags
                || average_precision(&dets, &gts, tau).unwrap() != naive_ap(&flags, gts.len())
            {
                mismatches += 1;
            }
        }
    }
    let gts = [
        Interval::new(0, 100).unwrap(),
        Interval::new(200, 300).unwrap(),
    ];
    let hand = average_precision(
        &[det(0, 100, 0.9), det(400, 500, 0.8), det(200, 300, 0.7)],
        &gts,
        0.5,
    )
    .unwrap();
    let hand_ok = (hand - 5.0 / 6.0).abs() <= 1e-12;
    outcome(
        mismatches == 0 && hand_ok,
        format!(
            "500 instances x 10 thresholds, {mismatches} mismatches; [TP,FP,TP] AP = {hand:.15}"
        ),
    )
}

fn geometry_oracles() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let mut bad = [0usize; 4];
    for _ in 0..1000 {
        let (a, b) = (rand_interval(&mut rng), rand_interval(&mut rng));
        if iou_1d(&a, &b) != iou_by_counting(&a, &b) {
            bad[0] += 1;
        }
    }
    for _ in 0..1000 {
        let dets = rand_dets(&mut rng, 20);
        let thr = [0.0, 0.05, 0.3, 0.5][rng.gen_range(0..4)];
        if nms(&dets, thr) != naive_nms(&dets, thr) {
            bad[1] += 1;
        }
    }
    let cfg = LabelConfig::default();
    for _ in 0..1000 {
        let gts: Vec<Interval> = (0..rng.gen_range(0..5))
            .map(|_| rand_interval(&mut rng))
            .collect();
        let stride = [4usize, 8, 16][rng.gen_range(0..3)];
        let size = [8.0, 16.0, 32.0, 64.0][rng.gen_range(0..4)];
        let anchors = anchor_grid(size, stride, 256, 0).unwrap();
        let labels = assign_labels(&anchors, &gts, &cfg).unwrap();
        let ok = anchors.iter().zip(&labels).all(|(a, l)| {
            let (class, matched) = naive_label(a.center, a.width, &gts, 0.5, 0.3);
            let expect = [
                LabelClass::Positive,
                LabelClass::Negative,
                LabelClass::Neutral,
            ][class as usize];
            l.class == expect && (expect != LabelClass::Positive || l.matched_gt == matched)
        });
        if !ok {
            bad[2] += 1;
        }
    }
    for _ in 0..1000 {
        let a = Anchor {
            center: rng.gen_range(-1e4..1e4),
            width: rng.gen_range(16.0..8192.0),
            scale_index: 0,
            node_index: 0,
        };
        let w = a.width * rng.gen_range(-(8f64.ln())..8f64.ln()).exp();
        let c = a.center + rng.gen_range(-2.0..2.0) * a.width;
        let (tx, tw) = encode_span(&a, c, w).unwrap();
        let (c2, w2) = decode_span(&a, tx, tw);
        let ok = (tx - (c - a.center) / a.width).abs() <= 1e-9
            && (tw - (w / a.width).ln()).abs() <= 1e-9
            && (c2 - (a.center + tx * a.width)).abs() <= 1e-9 * c.abs().max(1.0)
            && (w2 - a.width * tw.exp()).abs() <= 1e-9 * w;
        if !ok {
            bad[3] += 1;
        }
    }
    outcome(
        bad.iter().all(|&b| b == 0),
        format!(
            "mismatches over 1000 cases each: IoU {}, NMS {}, labels {}, encode/decode {}",
            bad[0], bad[1], bad[2], bad[3]
        ),
    )
}

fn loss_identities() -> Outcome {
    let mut worst: f64 = 0.0;
    for i in -400..=400 {
        let d = f64::from(i) / 20.0;
        for pos in [true, false] {
            worst =
                worst.max((classification_loss(d, pos, 0.5) - 0.5 * logistic_loss(d, pos)).abs());
        }
    }
    let alpha = derive_alpha(0.0, 0.1).unwrap();
    let sl = [smooth_l1(0.0), smooth_l1(0.5), smooth_l1(2.0)];
    let ok = worst <= 1e-12 && (alpha - 0.55).abs() <= 1e-12 && sl == [0.0, 0.125, 1.5];
    outcome(
        ok,
        format!(
            "alpha=0.5 max deviation {worst:.1e}; derive_alpha(0, 0.1) = {alpha}; smooth-L1 {sl:?}"
        ),
    )
}

fn architecture_ledger() -> Outcome {
    let cfg = ModelConfig::full();
    let l = cfg.segment_length;
    let outs: Vec<usize> = cfg.backbone.stage_channels().iter().map(|s| s.1).collect();
    let dims_ok = outs == vec![96, 168, 240, 240, 240, 240, 240, 240, 240];
    let seg: Vec<f32> = (0..l)
        .map(|i| ((i * 37 % 101) as f32 / 50.0) - 1.0)
        .collect();
    let pyr = ccrcnn::backbone::build_and_forward(&cfg.backbone, &seg, 0).unwrap();
    let maps_ok = pyr.maps.len() == 7
        && pyr
            .maps
            .iter()
            .enumerate()
            .all(|(i, m)| m.shape() == (l / (16 << i), 240));
    let stride_ok = (0..cfg.backbone.num_stages()).all(|s| cfg.backbone.stage_stride(s) == 4 << s)
        && cfg.backbone.stage_stride(8) == 1024;
    let mut net = Network::<f32>::new(&cfg).unwrap();
    let n = count_params(&mut net);
    let count_ok = (2_500_000..=3_500_000).contains(&n);
    outcome(
        dims_ok && maps_ok && stride_ok && count_ok,
        format!(
            "stage widths {outs:?} ({}), maps L/16..L/1024 x 240 ({}), strides L/4..L/1024 ({}), parameters {n} ({})",
            ok_word(dims_ok),
            ok_word(maps_ok),
            ok_word(stride_ok),
            if count_ok { "in [2.5M, 3.5M]" } else { "outside [2.5M, 3.5M]" }
        ),
    )
}

fn ok_word(b: bool) -> &'static str {
    if b {
        "ok"
    } else {
        "MISMATCH"
    }
}

fn end_to_end(ds: &Dataset) -> (Outcome, Network<f32>, f64) {
    let t = Instant::now();
    let tc = TrainConfig::default();
    let out = train(
        Network::new(&ModelConfig::desk()).unwrap(),
        ds,
        &tc,
        None,
        &mut |m| {
            eprintln!(
                "  [6] epoch {} loss {:.5} val mAP {:.4}",
                m.epoch,
                m.loss,
                m.val_map.unwrap_or(f64::NAN)
            );
        },
    )
    .unwrap();
    let (r, _) = evaluate(&out.network, ds, Split::Test, tc.overlap, tc.ap_mode).unwrap();
    let elapsed = t.elapsed();
    let pass = r.ap50() >= 0.80 && r.map >= 0.35 && elapsed <= Duration::from_secs(30 * 60);
    let o = outcome(
        pass,
        format!(
            "{} epochs, best epoch {:?}; test AP50 {:.4}, mAP {:.4}; {:.1} min on {} threads",
            tc.epochs,
            out.best_epoch,
            r.ap50(),
            r.map,
            elapsed.as_secs_f64() / 60.0,
            rayon::current_num_threads()
        ),
    );
    (o, out.network, r.map)
}

fn ablation_ordering(ds: &Dataset) -> Outcome {
    let variants = [
        Variant::FULL,
        Variant::new(false, None),
        Variant::new(true, Some(SINGLE_SCALE)),
    ];
    let tc = TrainConfig {
        epochs: ABLATION_EPOCHS,
        ..TrainConfig::default()
    };
    let rows = run_ablation(
        ds,
        &ModelConfig::desk(),
        &tc,
        &variants,
        &ABLATION_SEEDS,
        &mut |r| {
            eprintln!(
                "  [7] {} seed {}: test mAP {:.4}",
                r.variant, r.seed, r.test_map
            );
        },
    )
    .unwrap();
    let m: Vec<f64> = variants
        .iter()
        .map(|v| mean_map(&rows, v).unwrap())
        .collect();
    let (ctx, noctx, single) = (m[0], m[1], m[2]);
    outcome(
        ctx - noctx >= 0.02 && ctx - single >= 0.02,
        format!(
            "mean test mAP over seeds {ABLATION_SEEDS:?} ({ABLATION_EPOCHS} epochs): context-multiscale {ctx:.4}, \
             nocontext-multiscale {noctx:.4} (gap {:+.1} pts), context-scale{SINGLE_SCALE} {single:.4} (gap {:+.1} pts)",
            100.0 * (ctx - noctx),
            100.0 * (ctx - single)
        ),
    )
}

/// Exact copies of the baseline's templates pasted into fresh noise.
fn exact_copy_recall(ds: &Dataset) -> (f64, f64) {
    let templates = split_templates(ds, Split::Train).unwrap();
    let cfg = TmConfig::default();
    let chosen: Vec<_> = spread_indices(templates.len(), cfg.max_templates)
        .into_iter()
        .map(|i| templates[i].clone())
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let gap = 3000;
    let total: usize = chosen.iter().map(|t| t.len() + gap).sum::<usize>() + gap;
    let normal = rand_distr::Normal::new(0.0, SynthConfig::default().noise_sigma).unwrap();
    let mut wave: Vec<f64> = (0..total).map(|_| rng.sample(normal)).collect();
    let mut gts = Vec::new();
    let mut at = gap;
    for t in &chosen {
        wave[at..at + t.len()].copy_from_slice(t.samples());
        gts.push(Interval::new(at as i64, (at + t.len()) as i64).unwrap());
        at += t.len() + gap;
    }
    let dets = detect_tm(&chosen, &wave, &cfg).unwrap();
    let r = ap_range(&dets, &gts).unwrap();
    (r.tp as f64 / gts.len() as f64, r.ap50())
}

fn baseline_ordering(ds: &Dataset, net_map: f64) -> Outcome {
    let (tm, _) = tm_baseline(ds, Split::Test, &TmConfig::default(), ApMode::default()).unwrap();
    let (recall, ap50) = exact_copy_recall(ds);
    outcome(
        net_map - tm.map >= 0.20 && recall >= 0.5,
        format!(
            "network mAP {net_map:.4} vs TM (mu=8) mAP {:.4}: gap {:+.1} pts; TM on exact copies: recall@.50 {recall:.3}, AP50 {ap50:.3}",
            tm.map,
            100.0 * (net_map - tm.map)
        ),
    )
}

fn tm_unit_fidelity() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut cc_err: f64 = 0.0;
    let mut slide_err: f64 = 0.0;
    for _ in 0..200 {
        let n = rng.gen_range(2..64);
        let a: Vec<f64> = (0..n).map(|_| rng.gen_range(-5.0..5.0)).collect();
        let neg: Vec<f64> = a.iter().map(|v| -v).collect();
        cc_err = cc_err.max((normalized_cc(&a, &a).unwrap() - 1.0).abs());
        cc_err = cc_err.max((normalized_cc(&a, &neg).unwrap() + 1.0).abs());
        let w: Vec<f64> = (0..rng.gen_range(n..n + 300))
            .map(|_| rng.gen_range(-3.0..3.0))
            .collect();
        for zm in [false, true] {
            let fast = sliding_cc(&a, &w, zm).unwrap().values;
            let slow = naive_sliding_cc(&a, &w, zm);
            slide_err = fast
                .iter()
                .zip(&slow)
                .map(|(x, y)| (x - y).abs())
                .fold(slide_err, f64::max);
        }
    }
    let m = mad(&[1.0, 2.0, 3.0, 4.0, 5.0]).unwrap();
    outcome(
        cc_err <= 1e-12 && slide_err <= 1e-9 && m == 1.0,
        format!("CC extremes err {cc_err:.1e}; sliding vs naive err {slide_err:.1e}; MAD {{1..5}} = {m}"),
    )
}

fn determinism(ds: &Dataset) -> Outcome {
    let again = generate_synthetic(&SynthConfig::default()).unwrap();
    let same_data = again
        .waveform
        .iter()
        .map(|v| v.to_bits())
        .eq(ds.waveform.iter().map(|v| v.to_bits()))
        && again.events == ds.events
        && (again.train.clone(), again.val.clone(), again.test.clone())
            == (ds.train.clone(), ds.val.clone(), ds.test.clone());
    let epoch0 = || {
        let tc = TrainConfig {
            seed: 21,
            max_segments_per_epoch: Some(24),
            ..TrainConfig::default()
        };
        let mut t = Trainer::new(Network::new(&ModelConfig::desk()).unwrap(), &tc);
        t.run_epoch(ds, 0, None).unwrap()
    };
    let (a, b) = (epoch0(), epoch0());
    outcome(
        same_data && a.to_bits() == b.to_bits(),
        format!("datasets bit-identical: {same_data}; epoch-0 losses {a:.10} / {b:.10}"),
    )
}

#[test]
fn acceptance() {
    let start = Instant::now();
    let mut lines = Vec::new();
    let mut record = |id: usize, name: &str, f: &mut dyn FnMut() -> Outcome| {
        let t = Instant::now();
        let o = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            outcome(false, format!("panicked: {msg}"))
        });
        let line = format!(
            "criterion {id:>2} {:<34} {}  [{:.1}s] {}",
            name,
            if o.pass { "PASS" } else { "FAIL" },
            t.elapsed().as_secs_f64(),
            o.detail
        );
        println!("{line}");
        eprintln!("{line}");
        lines.push((o.pass, line));
    };

    record(1, "gradient fidelity", &mut gradient_fidelity);
    record(2, "evaluator oracle equivalence", &mut evaluator_oracle);
    record(3, "geometry oracles", &mut geometry_oracles);
    record(4, "loss identities", &mut loss_identities);
    record(5, "architecture ledger", &mut architecture_ledger);
    let ds = generate_synthetic(&SynthConfig::default()).unwrap();
    let mut trained_map = None;
    record(6, "end-to-end desk learning", &mut || {
        let (o, _net, map) = end_to_end(&ds);
        trained_map = Some(map);
        o
    });
    record(7, "ablation ordering", &mut || ablation_ordering(&ds));
    record(8, "baseline ordering", &mut || match trained_map {
        Some(m) => baseline_ordering(&ds, m),
        None => outcome(false, "no trained model from criterion 6"),
    });
    record(9, "template-matching unit fidelity", &mut tm_unit_fidelity);
    record(10, "determinism", &mut || determinism(&ds));

    let passed = lines.iter().filter(|l| l.0).count();
    let summary = format!(
        "acceptance: {passed}/{} criteria passed in {:.1} min",
        lines.len(),
        start.elapsed().as_secs_f64() / 60.0
    );
    println!("{summary}");
    let report: String = lines
        .iter()
        .map(|l| format!("{}\n", l.1))
        .collect::<String>()
        + &summary
        + "\n";
    let _ = std::fs::write(
        std::path::Path::new(env!("CARGO_TARGET_TMPDIR")).join("acceptance.txt"),
        report,
    );
    let failed: Vec<&String> = lines.iter().filter(|l| !l.0).map(|l| &l.1).collect();
    assert!(
        failed.is_empty(),
        "failed criteria:\n{}",
        failed
            .iter()
            .map(|s| s.as_str())
            .collect::<Vec<_>>()
            .join("\n")
    );
}
