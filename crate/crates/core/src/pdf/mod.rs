//! Depth supervision: a probabilistic term on the per-pixel bin distribution,
//! metric terms on the decoded expected depth, and an ordinal ranking term on
//! sampled pixel pairs.

mod batch;
mod bins;
mod found;
mod prob;
mod ranking;
mod total;

pub use batch::DepthSupervisionBatch;
pub use bins::DepthBinSpec;
pub use found::{
    foundation_loss, foundation_loss_backward, foundation_loss_on_depth, foundation_loss_on_depth_backward,
    smooth_l1, smooth_l1_grad, FoundationLoss,
};
pub use prob::{
    expected_depth, expected_depth_backward, gaussian_target, kl_prob_loss, kl_prob_loss_backward, MaskedLoss,
    PROB_FLOOR, TARGET_FLOOR,
};
pub use ranking::{
    background_pools, dilated_ring, dynamic_threshold, edge_pools, EdgePool, pair_rank_loss, pair_rank_loss_grad,
    relative_loss, relative_loss_backward, sample_edge_pairs, sample_global_pairs, Pixel, PixelPair,
    RankingConfig, RelativeLoss,
};
pub use total::{
    default_sigma, total_depth_loss, total_depth_loss_backward, DepthLossReport, DepthLossWeights, DEFAULT_BETA,
};
