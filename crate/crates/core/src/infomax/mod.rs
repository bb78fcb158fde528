//! InfoMax objectives, negative samplers, augmentations and the
//! conditional-negative bound check.

mod augment;
mod cgd;
mod losses;
mod negatives;
mod ppr;

pub use augment::{augment, Augmentation, SubgraphView};
pub use cgd::{random_cgd_instance, verify_cgd_bound, CgdReport};
pub use losses::{
    gd_loss, gd_loss_value, infonce_loss, infonce_loss_value, khop_loss, khop_loss_value,
    LossWeights,
};
pub use negatives::{
    cross_subgraph_negatives, row_permutation, shuffle_negatives, NegativeSampler,
};
pub use ppr::{ppr_diffusion, ppr_matrix, DEFAULT_DENSE_CAP};
