use rand::seq::SliceRandom;
use rand::Rng;

use super::{LabelClass, ProposalLabel, SampledProposal};

/// Per scale, draws up to `quota` proposals: `min(#positives, quota / 2)`
/// positives, the rest negatives, topped up with neutrals (as negatives)
/// when negatives run out. Scales whose labels are missing contribute
/// nothing.
pub fn sample_proposals<R: Rng + ?Sized>(
    labels: &[Option<Vec<ProposalLabel>>],
    quotas: &[usize],
    rng: &mut R,
) -> Vec<SampledProposal> {
    let mut out = Vec::new();
    for (scale, (labels, &quota)) in labels.iter().zip(quotas).enumerate() {
        let Some(labels) = labels else { continue };
        let mut pos = Vec::new();
        let mut neg = Vec::new();
        let mut neutral = Vec::new();
        for (node, l) in labels.iter().enumerate() {
            match l.class {
                LabelClass::Positive => pos.push(node),
                LabelClass::Negative => neg.push(node),
                LabelClass::Neutral => neutral.push(node),
            }
        }
        let n_pos = pos.len().min(quota / 2);
        let (pos, _) = pos.partial_shuffle(rng, n_pos);
        for &node in pos.iter() {
            out.push(SampledProposal {
                scale,
                node,
                positive: true,
                targets: labels[node].targets,
            });
        }
        let mut need = quota - n_pos;
        for pool in [&mut neg, &mut neutral] {
            let take = need.min(pool.len());
            let (chosen, _) = pool.partial_shuffle(rng, take);
            for &node in chosen.iter() {
                out.push(SampledProposal {
                    scale,
                    node,
                    positive: false,
                    targets: None,
                });
            }
            need -= take;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn labels(p: usize, n: usize, z: usize) -> Vec<ProposalLabel> {
        let mk = |class, targets| ProposalLabel {
            class,
            matched_gt: None,
            targets,
            best_iou: 0.0,
        };
        let mut v = vec![mk(LabelClass::Positive, Some((0.0, 0.0))); p];
        v.extend(vec![mk(LabelClass::Negative, None); n]);
        v.extend(vec![mk(LabelClass::Neutral, None); z]);
        v
    }

    fn counts(s: &[SampledProposal]) -> (usize, usize) {
        let p = s.iter().filter(|x| x.positive).count();
        (p, s.len() - p)
    }

    #[test]
    fn quota_rules() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let s = sample_proposals(&[Some(labels(10, 200, 0))], &[64], &mut rng);
        assert_eq!(counts(&s), (10, 54));
        let s = sample_proposals(&[Some(labels(100, 200, 0))], &[64], &mut rng);
        assert_eq!(counts(&s), (32, 32));
        let s = sample_proposals(&[Some(labels(0, 20, 100))], &[64], &mut rng);
        assert_eq!(counts(&s), (0, 64));
        let s = sample_proposals(&[Some(labels(0, 3, 2))], &[64], &mut rng);
        assert_eq!(counts(&s), (0, 5));
        let mut nodes: Vec<_> = s.iter().map(|x| x.node).collect();
        nodes.sort_unstable();
        nodes.dedup();
        assert_eq!(nodes.len(), 5);
    }

    #[test]
    fn seeded_and_skips_inactive_scales() {
        let l = vec![None, Some(labels(5, 50, 5))];
        let a = sample_proposals(&l, &[8, 8], &mut ChaCha8Rng::seed_from_u64(3));
        let b = sample_proposals(&l, &[8, 8], &mut ChaCha8Rng::seed_from_u64(3));
        assert_eq!(a, b);
        assert!(a.iter().all(|s| s.scale == 1));
    }
}
