//! Learned iterative registration: hard elimination, per-pair similarity over a
//! distance-augmented tensor, validity-weighted Procrustes, and the training losses.

mod elimination;
mod losses;
mod model;
mod register;
mod sampling;
mod similarity;
mod train;

pub use elimination::{hard_eliminate, hybrid_weights, median, median_weights, pick_correspondences, significance_scores, top_k, HybridPass};
pub use losses::{
    bce_loss, hybrid_labels, hybrid_loss, matching_loss, matching_targets, negative_entropy_loss, row_negative_entropy, BCE_CLAMP,
};
pub use model::{IdamConfig, IdamModel, PAIR_FEATURE_DIM, SIGNIFICANCE_HIDDEN, SIMILARITY_HIDDEN, VALIDITY_HIDDEN};
pub use register::{register, register_with, RegisterOptions};
pub use sampling::{balanced_sample, BalancedSample, SAMPLING_EPS};
pub use similarity::{
    build_augmented_tensor, euclidean_channels, similarity_forward, AugmentedTensor, SimilarityOutput, SimilarityPass, COINCIDENT_TOL,
};
pub use train::{pair_loss, sample_pair, train, EpochLosses, FrozenSteps, PairLoss, SampledPair, TrainConfig, TrainPair};
