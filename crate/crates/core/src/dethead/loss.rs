use crate::config::LossParams;
use crate::error::{Error, Result};

/// `ln(1 + e^x)` without overflow.
pub fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Standard logistic loss `ln(1 + e^{-t d})` for `t = +1` (positive) or `-1`.
pub fn logistic_loss(d: f64, positive: bool) -> f64 {
    if positive {
        softplus(-d)
    } else {
        softplus(d)
    }
}

/// Logistic loss weighted by `alpha` for positives and `1 - alpha` for
/// negatives.
pub fn classification_loss(d: f64, positive: bool, alpha: f64) -> f64 {
    let w = if positive { alpha } else { 1.0 - alpha };
    w * logistic_loss(d, positive)
}

/// Derivative of [`classification_loss`] with respect to `d`.
pub fn classification_loss_grad(d: f64, positive: bool, alpha: f64) -> f64 {
    if positive {
        -alpha * sigmoid(-d)
    } else {
        (1.0 - alpha) * sigmoid(d)
    }
}

/// Weight that makes the classifier robust to label flips with rates
/// `rho_plus` (positives) and `rho_minus` (negatives).
pub fn derive_alpha(rho_plus: f64, rho_minus: f64) -> Result<f64> {
    for (name, r) in [("rho_plus", rho_plus), ("rho_minus", rho_minus)] {
        if !(0.0..1.0).contains(&r) {
            return Err(Error::InvalidArgument(format!(
                "{name} = {r} outside [0, 1)"
            )));
        }
    }
    Ok((1.0 - rho_plus + rho_minus) / 2.0)
}

pub fn smooth_l1(x: f64) -> f64 {
    if x.abs() < 1.0 {
        0.5 * x * x
    } else {
        x.abs() - 0.5
    }
}

pub fn regression_loss(d: f64, t: f64) -> f64 {
    smooth_l1(t - d)
}

/// Derivative of [`regression_loss`] with respect to `d`.
pub fn regression_loss_grad(d: f64, t: f64) -> f64 {
    let x = t - d;
    if x.abs() < 1.0 {
        -x
    } else {
        -x.signum()
    }
}

/// One sampled proposal: where it lives and what it should predict.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SampledProposal {
    pub scale: usize,
    pub node: usize,
    pub positive: bool,
    pub targets: Option<(f64, f64)>,
}

/// Network outputs at one proposal.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ProposalOutput {
    pub logit: f64,
    pub dx: f64,
    pub dw: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LossBreakdown {
    pub total: f64,
    pub classification: f64,
    /// Unweighted regression sum (before `lambda`), averaged like the total.
    pub regression: f64,
}

fn check_batch(outputs: &[ProposalOutput], samples: &[SampledProposal]) -> Result<()> {
    if samples.is_empty() {
        return Err(Error::InvalidArgument(
            "joint loss over an empty sample".into(),
        ));
    }
    if outputs.len() != samples.len() {
        return Err(Error::shape(
            "joint loss outputs",
            samples.len(),
            outputs.len(),
        ));
    }
    if let Some(s) = samples.iter().find(|s| s.positive && s.targets.is_none()) {
        return Err(Error::InvalidArgument(format!(
            "positive proposal at scale {} node {} lacks targets",
            s.scale, s.node
        )));
    }
    Ok(())
}

/// Mean over the sample of classification loss plus `lambda` times the
/// regression loss of positives. Logits are clamped to `±logit_clamp`.
pub fn joint_loss(
    outputs: &[ProposalOutput],
    samples: &[SampledProposal],
    params: &LossParams,
    logit_clamp: f64,
) -> Result<LossBreakdown> {
    check_batch(outputs, samples)?;
    let n = samples.len() as f64;
    let mut cls = 0.0;
    let mut reg = 0.0;
    for (o, s) in outputs.iter().zip(samples) {
        let d = o.logit.clamp(-logit_clamp, logit_clamp);
        cls += classification_loss(d, s.positive, params.alpha);
        if let (true, Some((tx, tw))) = (s.positive, s.targets) {
            reg += regression_loss(o.dx, tx) + regression_loss(o.dw, tw);
        }
    }
    Ok(LossBreakdown {
        total: (cls + params.lambda * reg) / n,
        classification: cls / n,
        regression: reg / n,
    })
}

/// [`joint_loss`] plus its gradient at every proposal. The clamp passes
/// gradients straight through.
pub fn joint_loss_with_grads(
    outputs: &[ProposalOutput],
    samples: &[SampledProposal],
    params: &LossParams,
    logit_clamp: f64,
) -> Result<(LossBreakdown, Vec<ProposalOutput>)> {
    let loss = joint_loss(outputs, samples, params, logit_clamp)?;
    let n = samples.len() as f64;
    let grads = outputs
        .iter()
        .zip(samples)
        .map(|(o, s)| {
            let d = o.logit.clamp(-logit_clamp, logit_clamp);
            let mut g = ProposalOutput {
                logit: classification_loss_grad(d, s.positive, params.alpha) / n,
                dx: 0.0,
                dw: 0.0,
            };
            if let (true, Some((tx, tw))) = (s.positive, s.targets) {
                g.dx = params.lambda * regression_loss_grad(o.dx, tx) / n;
                g.dw = params.lambda * regression_loss_grad(o.dw, tw) / n;
            }
            g
        })
        .collect();
    Ok((loss, grads))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn classification_examples() {
        let ln2 = std::f64::consts::LN_2;
        assert!((classification_loss(0.0, true, 0.5) - 0.5 * ln2).abs() < 1e-15);
        assert!((classification_loss(0.0, false, 0.55) - 0.45 * ln2).abs() < 1e-15);
        assert!((classification_loss(-800.0, true, 0.5) - 400.0).abs() < 1e-9);
    }

    #[test]
    fn alpha_examples() {
        assert_eq!(derive_alpha(0.0, 0.0).unwrap(), 0.5);
        assert!((derive_alpha(0.0, 0.1).unwrap() - 0.55).abs() < 1e-15);
        assert!((derive_alpha(0.0, 0.2).unwrap() - 0.6).abs() < 1e-15);
        assert!(derive_alpha(1.0, 0.0).is_err());
        assert!(derive_alpha(0.0, -0.1).is_err());
    }

    #[test]
    fn smooth_l1_examples() {
        assert_eq!(regression_loss(0.0, 0.0), 0.0);
        assert_eq!(regression_loss(0.0, 0.5), 0.125);
        assert_eq!(regression_loss(0.0, 2.0), 1.5);
    }

    fn pos(tx: f64, tw: f64) -> SampledProposal {
        SampledProposal {
            scale: 0,
            node: 0,
            positive: true,
            targets: Some((tx, tw)),
        }
    }

    #[test]
    fn joint_examples() {
        let p = LossParams::default();
        let neg = SampledProposal {
            scale: 0,
            node: 1,
            positive: false,
            targets: None,
        };
        let outs = [ProposalOutput {
            logit: -1.0,
            dx: 3.0,
            dw: 3.0,
        }; 2];
        let l = joint_loss(&outs, &[neg, neg], &p, 20.0).unwrap();
        assert_eq!(l.total, classification_loss(-1.0, false, 0.5));
        let perfect = [ProposalOutput {
            logit: f64::INFINITY,
            dx: 0.3,
            dw: -0.2,
        }];
        let l = joint_loss(&perfect, &[pos(0.3, -0.2)], &p, 20.0).unwrap();
        assert!(l.total < 1e-8 + 0.5 * softplus(-20.0));
        assert!(joint_loss(&[], &[], &p, 20.0).is_err());
    }

    #[test]
    fn lambda_is_linear() {
        let outs = [ProposalOutput {
            logit: 0.2,
            dx: 0.1,
            dw: 1.7,
        }];
        let s = [pos(-0.4, 0.2)];
        let mut p = LossParams::default();
        let a = joint_loss(&outs, &s, &p, 20.0).unwrap();
        p.lambda = 2.0;
        let b = joint_loss(&outs, &s, &p, 20.0).unwrap();
        assert!((b.total - a.total - a.regression).abs() < 1e-15);
    }

    #[test]
    fn gradients_match_differences() {
        let p = LossParams {
            alpha: 0.6,
            lambda: 1.3,
            ..LossParams::default()
        };
        let s = [
            pos(0.4, -0.3),
            SampledProposal {
                scale: 1,
                node: 2,
                positive: false,
                targets: None,
            },
        ];
        let outs = vec![
            ProposalOutput {
                logit: 0.7,
                dx: 0.1,
                dw: 2.0,
            },
            ProposalOutput {
                logit: -0.4,
                dx: 0.0,
                dw: 0.0,
            },
        ];
        let (_, g) = joint_loss_with_grads(&outs, &s, &p, 20.0).unwrap();
        let h = 1e-6;
        for i in 0..2 {
            for field in 0..3 {
                let bump = |delta: f64| {
                    let mut o = outs.clone();
                    match field {
                        0 => o[i].logit += delta,
                        1 => o[i].dx += delta,
                        _ => o[i].dw += delta,
                    }
                    joint_loss(&o, &s, &p, 20.0).unwrap().total
                };
                let num = (bump(h) - bump(-h)) / (2.0 * h);
                let ana = [g[i].logit, g[i].dx, g[i].dw][field];
                assert!((num - ana).abs() < 1e-8, "{i} {field}: {num} vs {ana}");
            }
        }
    }
}
