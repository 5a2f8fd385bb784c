//! Gradient-saliency importance, ensemble voting, baseline masks and forward
//! selection.

mod importance;
mod mask;
mod sffs;
mod vote;

pub use importance::{importance, ImportanceSource, ImportanceVector, SaliencyScalar};
pub use mask::{FeatureMask, MaskOrigin};
pub use sffs::{sffs, sffs_model_count, ProxyConfig, SffsResult};
pub use vote::{
    bottom_n, least_important_mask, lowest_mask, majority_vote_select, member_importances,
    random_mask, top_n, VoteTally,
};
