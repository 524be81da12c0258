//! Comparison methods: Gaussian low-pass filtering with decimation, PCA and
//! locally linear embedding.

mod lle;
mod lpf;
mod pca;

pub use lle::{lle_embed, lle_weights, LleParams, LleWeights};
pub use lpf::{lpf_compress, LpfSpec};
pub use pca::{pca_apply, pca_fit, PcaModel};
