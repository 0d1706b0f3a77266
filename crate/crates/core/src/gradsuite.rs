//! Seeded finite-difference suite over every layer type, the backbone, the
//! head stack and the joint loss. Shared by the `gradcheck` command and the
//! integration tests.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::backbone::fragments::BackboneFragment;
use crate::config::{BackboneConfig, LossParams};
use crate::dethead::fragments::{HeadStackFragment, JointLossFragment};
use crate::dethead::SampledProposal;
use crate::error::Result;
use crate::nnengine::fragments::{
    BatchNormFragment, ConcatFragment, ConvBnReluFragment, ConvFragment, Stateless,
    StatelessFragment,
};
use crate::nnengine::{grad_check, GradCheckConfig, GradCheckReport, GradFragment, Tensor};

#[derive(Debug, Clone)]
pub struct SuiteOptions {
    pub trials: u64,
    pub tolerance: f64,
    /// Feature width of the desk-scale head cases.
    pub desk_channels: usize,
    /// Coordinates sampled per array in the desk-scale cases.
    pub desk_coords: usize,
}

impl Default for SuiteOptions {
    fn default() -> Self {
        Self {
            trials: 100,
            tolerance: 1e-4,
            desk_channels: 64,
            desk_coords: 4,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SuiteCase {
    pub name: String,
    pub report: GradCheckReport,
    pub tolerance: f64,
}

impl SuiteCase {
    pub fn passed(&self) -> bool {
        self.report.passed(self.tolerance) && self.report.checked > 0
    }
}

fn input(rng: &mut ChaCha8Rng, len: usize, ch: usize) -> Tensor<f64> {
    Tensor::from_fn(len, ch, |_, _| rng.gen_range(-2.0..2.0))
}

fn run_case<F: GradFragment<f64>>(
    opts: &SuiteOptions,
    name: &str,
    max_coords: Option<usize>,
    mut build: impl FnMut(&mut ChaCha8Rng) -> Result<(F, Tensor<f64>)>,
) -> Result<SuiteCase> {
    let mut total: Option<GradCheckReport> = None;
    for seed in 0..opts.trials {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (mut frag, x) = build(&mut rng)?;
        let cfg = GradCheckConfig {
            seed,
            max_coords,
            ..GradCheckConfig::default()
        };
        let r = grad_check(&mut frag, &x, &cfg)?;
        total = Some(match total {
            None => r,
            Some(t) => t.merge(r),
        });
    }
    Ok(SuiteCase {
        name: name.to_string(),
        report: total.unwrap_or(GradCheckReport {
            max_rel_error: 0.0,
            worst: None,
            checked: 0,
            skipped: 0,
            non_finite: false,
        }),
        tolerance: opts.tolerance,
    })
}

fn tiny_backbone(compress: bool) -> BackboneConfig {
    if compress {
        BackboneConfig {
            stem_channels: 4,
            stem_kernel: 5,
            growth_rates: vec![2, 2, 2],
            layers_per_block: 2,
            transition_compress: vec![Some(4), Some(4)],
            num_scales: 3,
            proposal_feature_dim: 8,
        }
    } else {
        BackboneConfig {
            stem_channels: 3,
            stem_kernel: 7,
            growth_rates: vec![2, 3],
            layers_per_block: 2,
            transition_compress: vec![None],
            num_scales: 1,
            proposal_feature_dim: 13,
        }
    }
}

fn random_samples(rng: &mut ChaCha8Rng, lengths: &[usize], count: usize) -> Vec<SampledProposal> {
    (0..count)
        .map(|_| {
            let scale = rng.gen_range(0..lengths.len());
            let positive = rng.gen_bool(0.5);
            SampledProposal {
                scale,
                node: rng.gen_range(0..lengths[scale]),
                positive,
                targets: positive.then(|| (rng.gen_range(-1.5..1.5), rng.gen_range(-1.5..1.5))),
            }
        })
        .collect()
}

fn random_loss_params(rng: &mut ChaCha8Rng) -> LossParams {
    LossParams {
        alpha: rng.gen_range(0.3..0.7),
        lambda: rng.gen_range(0.5..2.0),
        ..LossParams::default()
    }
}

/// Runs every case; each case merges its trials into one report.
pub fn run_suite(opts: &SuiteOptions) -> Result<Vec<SuiteCase>> {
    let mut cases = Vec::new();
    cases.push(run_case(opts, "conv", None, |rng| {
        let k = rng.gen_range(1..=4);
        let stride = rng.gen_range(1..=2);
        let dil = rng.gen_range(1..=3);
        let pad = rng.gen_range(0..=2);
        Ok((
            ConvFragment::random(rng, k, 2, 3, stride, dil, pad)?,
            input(rng, 12, 2),
        ))
    })?);
    cases.push(run_case(opts, "linear", None, |rng| {
        Ok((
            ConvFragment::random(rng, 1, 3, 2, 1, 1, 0)?,
            input(rng, 6, 3),
        ))
    })?);
    cases.push(run_case(opts, "batchnorm", None, |rng| {
        Ok((BatchNormFragment::random(rng, 3), input(rng, 10, 3)))
    })?);
    for (name, kind) in [
        ("relu", Stateless::Relu),
        ("sigmoid", Stateless::Sigmoid),
        (
            "maxpool",
            Stateless::MaxPool {
                size: 3,
                stride: 2,
                padding: 1,
            },
        ),
        ("avgpool", Stateless::AvgPool { size: 2, stride: 2 }),
    ] {
        cases.push(run_case(opts, name, None, |rng| {
            Ok((StatelessFragment::new(kind), input(rng, 10, 2)))
        })?);
    }
    cases.push(run_case(opts, "concat", None, |rng| {
        Ok((
            ConcatFragment {
                conv: ConvFragment::random(rng, 3, 2, 2, 1, 1, 1)?,
            },
            input(rng, 8, 2),
        ))
    })?);
    cases.push(run_case(opts, "conv-bn-relu", None, |rng| {
        let conv = ConvFragment::random(rng, 3, 2, 3, 1, 2, 2)?;
        Ok((
            ConvBnReluFragment::new(conv, BatchNormFragment::random(rng, 3)),
            input(rng, 10, 2),
        ))
    })?);
    for (name, compress) in [("backbone/compressing", true), ("backbone/pooling", false)] {
        let cfg = tiny_backbone(compress);
        cases.push(run_case(opts, name, None, |rng| {
            let seed = rng.gen();
            Ok((BackboneFragment::new(&cfg, seed)?, input(rng, 64, 1)))
        })?);
    }
    cases.push(run_case(opts, "heads", None, |rng| {
        Ok((
            HeadStackFragment::random(rng, 3, vec![6, 3], false)?,
            input(rng, 9, 3),
        ))
    })?);
    cases.push(run_case(opts, "context+heads", None, |rng| {
        Ok((
            HeadStackFragment::random(rng, 3, vec![8, 4], true)?,
            input(rng, 12, 3),
        ))
    })?);
    cases.push(run_case(opts, "joint-loss", None, |rng| {
        let lengths = vec![8, 4];
        let stack = HeadStackFragment::random(rng, 3, lengths.clone(), true)?;
        let samples = random_samples(rng, &lengths, 8);
        let params = random_loss_params(rng);
        Ok((
            JointLossFragment::new(stack, samples, params),
            input(rng, 12, 3),
        ))
    })?);

    let f = opts.desk_channels;
    let desk_lengths = vec![32, 16];
    let rows: usize = desk_lengths.iter().sum();
    let coords = Some(opts.desk_coords);
    cases.push(run_case(opts, "desk context+heads", coords, |rng| {
        let stack =
            HeadStackFragment::with_dilations(rng, f, desk_lengths.clone(), Some(vec![4, 8, 12]))?;
        Ok((stack, input(rng, rows, f)))
    })?);
    cases.push(run_case(opts, "desk joint-loss", coords, |rng| {
        let stack =
            HeadStackFragment::with_dilations(rng, f, desk_lengths.clone(), Some(vec![4, 8, 12]))?;
        let samples = random_samples(rng, &desk_lengths, 16);
        let params = random_loss_params(rng);
        Ok((
            JointLossFragment::new(stack, samples, params),
            input(rng, rows, f),
        ))
    })?);
    Ok(cases)
}
