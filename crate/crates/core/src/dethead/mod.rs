//! Anchors, labels, offset codec, contextual block, sibling heads, losses,
//! proposal sampling and detection decoding.

mod anchors;
mod codec;
mod context;
mod detect;
pub mod fragments;
mod labels;
mod loss;
mod sampling;

pub use anchors::{anchor_grid, generate_anchors, Anchor};
pub use codec::{decode_offsets, decode_span, encode_offsets, encode_span, Decoded};
pub use context::{ContextBlock, ContextBranch, ContextCache, SiblingHeads};
pub use detect::{decode_candidates, detect_from_outputs, DecodeStats, ScaleOutput};
pub use labels::{assign_labels, assign_labels_with_ignore, LabelClass, ProposalLabel};
pub use loss::{
    classification_loss, classification_loss_grad, derive_alpha, joint_loss, joint_loss_with_grads,
    logistic_loss, regression_loss, regression_loss_grad, smooth_l1, softplus, LossBreakdown,
    ProposalOutput, SampledProposal,
};
pub use sampling::sample_proposals;
