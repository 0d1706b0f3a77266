use ccrcnn::dataio::{
    event_envelope, generate_synthetic, load_dataset, normalize_segment, read_waveform,
    save_dataset, segment_offsets, write_waveform, SynthConfig,
};
use ccrcnn::Error;
use proptest::prelude::*;

proptest! {
    #[test]
    fn segmentation_covers_every_sample(total in 1usize..3000, seg_frac in 0.05f64..1.0, overlap in prop::sample::select(vec![0.0, 0.25, 0.5, 0.75])) {
        let seg = ((total as f64 * seg_frac) as usize).max(1);
        let offs = segment_offsets(total, seg, overlap).unwrap();
        let mut cover = vec![0usize; total];
        for &o in &offs {
            prop_assert!(o + seg <= total);
            for c in &mut cover[o..o + seg] {
                *c += 1;
            }
        }
        prop_assert!(cover.iter().all(|&c| c >= 1));
        let hop = (((1.0 - overlap) * seg as f64).round() as usize).max(1);
        // interior samples, away from the right-aligned tail, are covered
        // ceil(seg / hop) or one fewer times
        let k = seg.div_ceil(hop);
        let tail = *offs.last().unwrap();
        for &c in cover.iter().take(tail).skip(seg) {
            prop_assert!(c == k || c + 1 == k, "coverage {} vs {}", c, k);
        }
    }

    #[test]
    fn normalization_is_standard(v in prop::collection::vec(-100f32..100.0, 2..500)) {
        let n = normalize_segment(&v);
        let mean = n.iter().map(|&x| f64::from(x)).sum::<f64>() / n.len() as f64;
        prop_assert!(mean.abs() < 1e-5);
        let var = n.iter().map(|&x| (f64::from(x) - mean).powi(2)).sum::<f64>() / n.len() as f64;
        let spread = v.iter().cloned().fold(f32::MIN, f32::max) - v.iter().cloned().fold(f32::MAX, f32::min);
        if spread > 1e-3 {
            prop_assert!((var.sqrt() - 1.0).abs() < 1e-4);
        }
    }
}

#[test]
fn worked_segmentation_and_normalization() {
    assert_eq!(segment_offsets(100, 40, 0.5).unwrap(), vec![0, 20, 40, 60]);
    assert_eq!(segment_offsets(100, 25, 0.0).unwrap(), vec![0, 25, 50, 75]);
    assert_eq!(segment_offsets(100, 100, 0.5).unwrap(), vec![0]);
    assert_eq!(normalize_segment(&[1.0, 1.0, 1.0]), vec![0.0, 0.0, 0.0]);
    assert_eq!(normalize_segment(&[0.0, 2.0]), vec![-1.0, 1.0]);
}

#[test]
fn default_synthetic_statistics() {
    let cfg = SynthConfig::default();
    let ds = generate_synthetic(&cfg).unwrap();
    assert_eq!(ds.events.len(), 1000);
    let mut lens: Vec<i64> = ds.events.iter().map(|e| e.len()).collect();
    lens.sort_unstable();
    let median = (lens[499] + lens[500]) as f64 / 2.0;
    assert!((median - 1500.0).abs() <= 150.0, "median {median}");
    assert!(lens[0] >= 200 && lens[999] <= 8192);
    for w in ds.events.windows(2) {
        assert!(w[1].begin - w[0].end >= cfg.min_gap as i64);
    }
    assert_eq!(
        (ds.train.len(), ds.val.len(), ds.test.len()),
        (800, 100, 100)
    );
    assert_eq!(generate_synthetic(&cfg).unwrap(), ds);
}

#[test]
fn empty_and_infeasible_configs() {
    let ds = generate_synthetic(&SynthConfig {
        event_count: 0,
        total_length: 5000,
        ..SynthConfig::default()
    })
    .unwrap();
    assert!(ds.events.is_empty());
    assert_eq!(ds.waveform.len(), 5000);
    let err = generate_synthetic(&SynthConfig {
        total_length: 10_000,
        ..SynthConfig::default()
    })
    .unwrap_err();
    assert!(
        matches!(err, Error::Config(_) | Error::InvalidArgument(_)),
        "{err}"
    );
}

#[test]
fn ground_truth_bounds_the_envelope_support() {
    for n in [3usize, 10, 200, 1500, 8192] {
        let env = event_envelope(n);
        assert_eq!(env.len(), n);
        assert!(env
            .iter()
            .all(|&v| (0.05 - 1e-12..=1.0 + 1e-12).contains(&v)));
        assert!((env[0] - 0.05).abs() < 1e-9 && (env[n - 1] - 0.05).abs() < 1e-9);
    }
}

#[test]
fn dataset_files_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = SynthConfig {
        total_length: 200_000,
        event_count: 40,
        ..SynthConfig::default()
    };
    let ds = generate_synthetic(&cfg).unwrap();
    let manifest = save_dataset(dir.path(), &ds, Some(&cfg)).unwrap();
    let back = load_dataset(&manifest).unwrap();
    assert_eq!(back, ds);
    let p = dir.path().join("empty.wv1d");
    write_waveform(&p, &[]).unwrap();
    assert!(read_waveform(&p).unwrap().is_empty());
}
