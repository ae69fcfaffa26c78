//! Residual scoring, block posteriors and decision fusion.
//!
//! Each test block is sparse-coded against the whole labeled dictionary. For
//! every class the coefficients outside that class are masked out and the
//! reciprocal of the resulting reconstruction error becomes the class score.
//! Scores are normalized into per-block posteriors, which are combined either
//! by summed log-probabilities or by majority vote.

use ndarray::ArrayView1;
use serde::{Deserialize, Serialize};

use crate::dictionary::LabeledDictionary;
use crate::error::{Error, Result};
use crate::imaging::{extract_block, vectorize, BlockVector, OriginSampler, SonarImage};
use crate::sparse_solver::{SolverConfig, SparseCode, SparseCoder};

/// Class residuals are clamped to this floor before taking reciprocals.
pub const RESIDUAL_FLOOR: f64 = 1e-9;

/// Attempts allowed per requested block when skipping all-zero blocks.
const RESAMPLE_FACTOR: usize = 10;

/// Per-class scores `r_k = 1 / ‖y − D δ_k(β)‖` for one block.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResidualScores {
    pub r: Vec<f64>,
}

/// Normalized class probabilities for one block.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockPosterior {
    pub p: Vec<f64>,
}

impl BlockPosterior {
    pub fn argmax(&self) -> usize {
        argmax(&self.p)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Fusion {
    /// Maximum likelihood: argmax of summed log-posteriors.
    Ml,
    Majority,
}

impl std::str::FromStr for Fusion {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ml" => Ok(Fusion::Ml),
            "majority" => Ok(Fusion::Majority),
            other => Err(Error::param(
                "fusion",
                format!("unknown rule `{other}` (expected ml or majority)"),
            )),
        }
    }
}

/// What one scored block contributed to a decision.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockEvidence {
    pub origin: (usize, usize),
    pub p: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

/// Fused decision over the blocks of one test image.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LpmDecision {
    pub predicted: usize,
    pub fusion: Fusion,
    pub log_scores: Vec<f64>,
    pub blocks: Vec<BlockEvidence>,
}

impl LpmDecision {
    pub fn num_blocks(&self) -> usize {
        self.blocks.len()
    }

    pub fn posteriors(&self) -> Vec<BlockPosterior> {
        self.blocks
            .iter()
            .map(|b| BlockPosterior { p: b.p.clone() })
            .collect()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }
}

/// First index of the maximum, so ties go to the smallest class.
fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (k, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = k;
        }
    }
    best
}

/// Keeps the coefficients of class `k` and zeroes the rest.
pub fn delta_k(beta: &[f64], labels: &[usize], k: usize, num_classes: usize) -> Result<Vec<f64>> {
    if k >= num_classes {
        return Err(Error::param(
            "k",
            format!("class {k} outside 0..{num_classes}"),
        ));
    }
    if beta.len() != labels.len() {
        return Err(Error::Shape(format!(
            "{} coefficients for {} labels",
            beta.len(),
            labels.len()
        )));
    }
    Ok(beta
        .iter()
        .zip(labels)
        .map(|(&b, &l)| if l == k { b } else { 0.0 })
        .collect())
}

/// Reciprocal class-restricted reconstruction errors.
pub fn class_residuals(
    dict: &LabeledDictionary,
    y: &BlockVector,
    beta: &[f64],
) -> Result<ResidualScores> {
    if y.len() != dict.dim() || beta.len() != dict.num_atoms() {
        return Err(Error::Shape(format!(
            "dictionary is {}x{}, y has {} entries, beta has {}",
            dict.dim(),
            dict.num_atoms(),
            y.len(),
            beta.len()
        )));
    }
    let atoms = dict.atoms();
    let r = (0..dict.num_classes())
        .map(|k| {
            let mut residual = y.values.clone();
            for j in dict.class_range(k) {
                let b = beta[j];
                if b != 0.0 {
                    for (e, a) in residual.iter_mut().zip(atoms.column(j)) {
                        *e -= a * b;
                    }
                }
            }
            let norm = ArrayView1::from(&residual[..])
                .dot(&ArrayView1::from(&residual[..]))
                .sqrt();
            1.0 / norm.max(RESIDUAL_FLOOR)
        })
        .collect();
    Ok(ResidualScores { r })
}

/// `p_k = r_k / Σ r`.
pub fn block_posterior(scores: &ResidualScores) -> BlockPosterior {
    let total: f64 = scores.r.iter().sum();
    BlockPosterior {
        p: scores.r.iter().map(|r| r / total).collect(),
    }
}

fn check_posteriors(posteriors: &[BlockPosterior]) -> Result<usize> {
    let k = posteriors
        .first()
        .map(|p| p.p.len())
        .ok_or_else(|| Error::param("posteriors", "at least one block posterior is required"))?;
    if posteriors.iter().any(|p| p.p.len() != k) {
        return Err(Error::Shape("posteriors disagree in class count".into()));
    }
    Ok(k)
}

/// Summed log-posteriors per class and their argmax.
pub fn fuse_ml(posteriors: &[BlockPosterior]) -> Result<(usize, Vec<f64>)> {
    let k = check_posteriors(posteriors)?;
    let mut log_scores = vec![0.0; k];
    for post in posteriors {
        for (s, p) in log_scores.iter_mut().zip(&post.p) {
            *s += p.ln();
        }
    }
    Ok((argmax(&log_scores), log_scores))
}

/// Modal per-block argmax.
pub fn fuse_majority(posteriors: &[BlockPosterior]) -> Result<usize> {
    let k = check_posteriors(posteriors)?;
    let mut votes = vec![0usize; k];
    for post in posteriors {
        votes[post.argmax()] += 1;
    }
    let mut best = 0;
    for c in 1..k {
        if votes[c] > votes[best] {
            best = c;
        }
    }
    Ok(best)
}

/// Scores blocks against a fixed dictionary; the Gram matrix is built once.
#[derive(Debug, Clone)]
pub struct BlockScorer<'d> {
    dict: &'d LabeledDictionary,
    coder: SparseCoder<'d>,
}

impl<'d> BlockScorer<'d> {
    pub fn new(dict: &'d LabeledDictionary) -> Result<Self> {
        Ok(Self {
            dict,
            coder: SparseCoder::new(dict.atoms())?,
        })
    }

    pub fn dictionary(&self) -> &'d LabeledDictionary {
        self.dict
    }

    pub fn score(
        &self,
        y: &BlockVector,
        solver: &SolverConfig,
    ) -> Result<(SparseCode, ResidualScores)> {
        let code = self.coder.code(&y.values, solver)?;
        let scores = class_residuals(self.dict, y, &code.beta)?;
        Ok((code, scores))
    }

    /// Whole-image SRC: one vector, one solve, argmax of the class scores.
    pub fn classify_global(
        &self,
        image: &SonarImage,
        solver: &SolverConfig,
    ) -> Result<(usize, ResidualScores)> {
        let shape = self.dict.block_shape();
        if shape != image.shape() {
            return Err(Error::Shape(format!(
                "image is {}x{}, dictionary expects {}x{}",
                image.height(),
                image.width(),
                shape.m,
                shape.n
            )));
        }
        let y = vectorize(&extract_block(image, (0, 0), shape)?)?;
        let (_, scores) = self.score(&y, solver)?;
        Ok((argmax(&scores.r), scores))
    }

    /// Samples `block_count` blocks, scores each, and fuses the posteriors.
    pub fn classify_lpm(
        &self,
        image: &SonarImage,
        block_count: usize,
        solver: &SolverConfig,
        fusion: Fusion,
        seed: u64,
    ) -> Result<LpmDecision> {
        if block_count == 0 {
            return Err(Error::param(
                "block_count",
                "at least one test block is required",
            ));
        }
        let shape = self.dict.block_shape();
        let mut sampler = OriginSampler::new(image, shape, seed)?;
        let mut blocks = Vec::with_capacity(block_count);
        let mut posteriors = Vec::with_capacity(block_count);
        for _ in 0..RESAMPLE_FACTOR * block_count {
            if blocks.len() == block_count {
                break;
            }
            let origin = sampler.next_origin();
            let y = match vectorize(&extract_block(image, origin, shape)?) {
                Ok(y) => y,
                Err(Error::DegenerateBlock { .. }) => continue,
                Err(e) => return Err(e),
            };
            let (code, scores) = self.score(&y, solver)?;
            let posterior = block_posterior(&scores);
            blocks.push(BlockEvidence {
                origin,
                p: posterior.p.clone(),
                iterations: code.iterations,
                converged: code.converged,
            });
            posteriors.push(posterior);
        }
        if posteriors.is_empty() {
            return Err(Error::DegenerateBlock { row: 0, col: 0 }.context(format!(
                "all {} sampled test blocks were empty",
                RESAMPLE_FACTOR * block_count
            )));
        }
        let (ml_class, log_scores) = fuse_ml(&posteriors)?;
        let predicted = match fusion {
            Fusion::Ml => ml_class,
            Fusion::Majority => fuse_majority(&posteriors)?,
        };
        Ok(LpmDecision {
            predicted,
            fusion,
            log_scores,
            blocks,
        })
    }
}

/// Whole-image SRC against a dictionary of vectorized training images.
pub fn classify_global(
    dict: &LabeledDictionary,
    image: &SonarImage,
    solver: &SolverConfig,
) -> Result<(usize, ResidualScores)> {
    BlockScorer::new(dict)?.classify_global(image, solver)
}

/// Block-based classification with fused per-block evidence.
pub fn classify_lpm(
    dict: &LabeledDictionary,
    image: &SonarImage,
    block_count: usize,
    solver: &SolverConfig,
    fusion: Fusion,
    seed: u64,
) -> Result<LpmDecision> {
    BlockScorer::new(dict)?.classify_lpm(image, block_count, solver, fusion, seed)
}
