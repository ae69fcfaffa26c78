//! Sparse reconstruction-based classification with localized block dictionaries.
//!
//! Images are cut into small blocks, each block is sparse-coded against a
//! class-labeled dictionary, and the per-block class evidence is fused into a
//! single decision. Because blocks are drawn from anywhere in the image the
//! classifier tolerates targets that are shifted or rescaled relative to the
//! training imagery.

pub mod classifier;
pub mod dictionary;
pub mod error;
pub mod harness;
pub mod imaging;
pub mod rng;
pub mod sparse_solver;

pub use classifier::{
    block_posterior, class_residuals, classify_global, classify_lpm, delta_k, fuse_majority,
    fuse_ml, BlockEvidence, BlockPosterior, BlockScorer, Fusion, LpmDecision, ResidualScores,
};
pub use dictionary::{
    build_concatenated, init_atoms, learn_odl, odl_step, LabeledDictionary, OdlConfig, OdlState,
};
pub use error::{Error, Result};
pub use imaging::{
    add_salt_pepper, extract_block, grid_blocks, load_pgm, sample_blocks, save_pgm, vectorize,
    Block, BlockShape, BlockVector, SonarImage,
};
pub use sparse_solver::{
    objective, soft_threshold, solve_l1, SolverConfig, SparseCode, SparseCoder,
};
