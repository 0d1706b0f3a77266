use ccrcnn::backbone::{build_and_forward, Backbone};
use ccrcnn::config::ModelConfig;
use ccrcnn::nnengine::{count_params, Mode, Tensor};

#[test]
fn full_preset_layer_table() {
    let cfg = ModelConfig::full();
    let l = cfg.segment_length;
    let stages: Vec<(usize, usize)> = cfg.backbone.stage_channels();
    let outs: Vec<usize> = stages.iter().map(|s| s.1).collect();
    assert_eq!(outs, vec![96, 168, 240, 240, 240, 240, 240, 240, 240]);
    let ins: Vec<usize> = stages.iter().map(|s| s.0).collect();
    assert_eq!(ins, vec![24, 96, 168, 120, 120, 120, 120, 120, 120]);
    let seg: Vec<f32> = (0..l)
        .map(|i| ((i * 37 % 101) as f32 / 50.0) - 1.0)
        .collect();
    let pyr = build_and_forward(&cfg.backbone, &seg, 0).unwrap();
    assert_eq!(pyr.maps.len(), 7);
    for (i, m) in pyr.maps.iter().enumerate() {
        assert_eq!(m.shape(), (l / (16 << i), 240), "scale {i}");
        assert_eq!(pyr.strides[i], 16 << i);
    }
}

#[test]
fn stride_of_each_scale_by_impulse_shift() {
    let cfg = ModelConfig::desk();
    let net = Backbone::<f64>::new(&cfg.backbone, 5).unwrap();
    let l = 4096;
    let run = |pos: Option<usize>| {
        let mut x = Tensor::zeros(l, 1);
        if let Some(p) = pos {
            x.set(p, 0, 1.0);
        }
        net.forward(&x, Mode::Infer, cfg.backbone.num_scales - 1)
            .unwrap()
            .0
    };
    let base = run(None);
    let support = |maps: &[Tensor<f64>], s: usize| -> Vec<usize> {
        (0..maps[s].length())
            .filter(|&t| {
                maps[s]
                    .row(t)
                    .iter()
                    .zip(base.maps[s].row(t))
                    .any(|(a, b)| (a - b).abs() > 1e-12)
            })
            .collect()
    };
    for s in 0..cfg.backbone.num_scales {
        let stride = cfg.scale_stride(s);
        let p = 2048;
        let a = run(Some(p));
        let b = run(Some(p + stride));
        let sa = support(&a.maps, s);
        let sb = support(&b.maps, s);
        assert!(!sa.is_empty());
        let shifted: Vec<usize> = sa
            .iter()
            .map(|t| t + 1)
            .filter(|&t| t < a.maps[s].length())
            .collect();
        let sb_in: Vec<usize> = sb.iter().copied().filter(|&t| t > 0).collect();
        assert_eq!(shifted, sb_in, "scale {s} stride {stride}");
    }
}

#[test]
fn parameter_counts_are_reported() {
    let mut full = ccrcnn::Network::<f32>::new(&ModelConfig::full()).unwrap();
    let mut desk = ccrcnn::Network::<f32>::new(&ModelConfig::desk()).unwrap();
    let nf = count_params(&mut full);
    let nd = count_params(&mut desk);
    let backbone = count_params(&mut full.backbone);
    // stem conv + BN, then per dense layer BN(c) + conv3(c -> k), transitions BN + 1x1
    let mut expect = 7 * 24 + 24 + 2 * 24;
    let cfg = ModelConfig::full().backbone;
    for (i, &(cin, _)) in cfg.stage_channels().iter().enumerate() {
        let k = cfg.growth_rates[i];
        for layer in 0..cfg.layers_per_block {
            let c = cin + layer * k;
            expect += 2 * c + 3 * c * k + k;
        }
        if i > 0 {
            if let Some(out) = cfg.transition_compress[i - 1] {
                let prev = cfg.stage_channels()[i - 1].1;
                expect += 2 * prev + prev * out + out;
            }
        }
    }
    assert_eq!(backbone, expect);
    assert!(nf > nd);
    println!("trainable parameters: full {nf} (backbone {backbone}), desk {nd}");
}
