//! Class-labeled dictionaries and per-class online dictionary learning.
//!
//! A [`LabeledDictionary`] stores unit-norm atoms as matrix columns with the
//! atoms of each class stored contiguously, in class order. Dictionaries are
//! built either by stacking vectorized training blocks directly or by
//! condensing each class's blocks with online dictionary learning.

use std::ops::Range;

use ndarray::{s, Array1, Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imaging::{vectorize, Block, BlockShape, BlockVector};
use crate::rng::{derive_seed, SplitMix64};
use crate::sparse_solver::{SolverConfig, SparseCoder, UNIT_NORM_TOL};

const CONTAINER_MAGIC: &[u8; 4] = b"SRCD";
const CONTAINER_VERSION: u32 = 1;
const HEADER_LEN: usize = 4 + 6 * 4;

/// Atoms below this curvature are skipped during an update sweep.
pub const DEAD_ATOM_FLOOR: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDictionary {
    atoms: Array2<f64>,
    labels: Vec<usize>,
    num_classes: usize,
    block_shape: BlockShape,
}

impl LabeledDictionary {
    /// Validates every invariant: label count, class contiguity and coverage, unit-norm atoms.
    pub fn new(
        atoms: Array2<f64>,
        labels: Vec<usize>,
        num_classes: usize,
        block_shape: BlockShape,
    ) -> Result<Self> {
        if num_classes < 2 {
            return Err(Error::param(
                "num_classes",
                format!("need at least 2 classes, got {num_classes}"),
            ));
        }
        if atoms.nrows() != block_shape.len() {
            return Err(Error::Shape(format!(
                "atoms have {} rows but block shape {}x{} has {} pixels",
                atoms.nrows(),
                block_shape.m,
                block_shape.n,
                block_shape.len()
            )));
        }
        if labels.len() != atoms.ncols() {
            return Err(Error::Shape(format!(
                "{} labels for {} atoms",
                labels.len(),
                atoms.ncols()
            )));
        }
        if let Some(j) = labels.iter().position(|&l| l >= num_classes) {
            return Err(Error::param(
                "labels",
                format!("atom {j} has class {} >= {num_classes}", labels[j]),
            ));
        }
        let ordered = labels.first() == Some(&0)
            && labels.last() == Some(&(num_classes - 1))
            && labels.windows(2).all(|w| w[1] == w[0] || w[1] == w[0] + 1);
        if !ordered {
            return Err(Error::param(
                "labels",
                "class columns must be contiguous, in class order, and cover every class",
            ));
        }
        for (j, col) in atoms.columns().into_iter().enumerate() {
            let norm = col.dot(&col).sqrt();
            if (norm - 1.0).abs() > UNIT_NORM_TOL {
                return Err(Error::Contract(format!("atom {j} has norm {norm}")));
            }
        }
        Ok(Self {
            atoms,
            labels,
            num_classes,
            block_shape,
        })
    }

    /// Concatenates per-class atom matrices in class order.
    pub fn from_class_atoms(per_class: &[Array2<f64>], block_shape: BlockShape) -> Result<Self> {
        let views: Vec<ArrayView2<f64>> = per_class.iter().map(|a| a.view()).collect();
        let atoms = ndarray::concatenate(Axis(1), &views)
            .map_err(|e| Error::Shape(format!("class dictionaries disagree in dimension: {e}")))?;
        let labels = per_class
            .iter()
            .enumerate()
            .flat_map(|(k, a)| std::iter::repeat(k).take(a.ncols()))
            .collect();
        Self::new(atoms, labels, per_class.len(), block_shape)
    }

    pub fn atoms(&self) -> ArrayView2<'_, f64> {
        self.atoms.view()
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn block_shape(&self) -> BlockShape {
        self.block_shape
    }

    pub fn num_atoms(&self) -> usize {
        self.labels.len()
    }

    pub fn dim(&self) -> usize {
        self.atoms.nrows()
    }

    /// Column range owned by class `k`.
    pub fn class_range(&self, k: usize) -> Range<usize> {
        let start = self.labels.partition_point(|&l| l < k);
        let end = self.labels.partition_point(|&l| l <= k);
        start..end
    }

    pub fn class_atoms(&self, k: usize) -> ArrayView2<'_, f64> {
        let r = self.class_range(k);
        self.atoms.slice(s![.., r])
    }

    /// Serializes to the `SRCD` container: little-endian header, u32 labels, column-major f64 atoms.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(HEADER_LEN + 4 * self.labels.len() + 8 * self.atoms.len());
        out.extend_from_slice(CONTAINER_MAGIC);
        for v in [
            CONTAINER_VERSION,
            self.atoms.nrows() as u32,
            self.atoms.ncols() as u32,
            self.num_classes as u32,
            self.block_shape.m as u32,
            self.block_shape.n as u32,
        ] {
            out.extend_from_slice(&v.to_le_bytes());
        }
        for &l in &self.labels {
            out.extend_from_slice(&(l as u32).to_le_bytes());
        }
        for col in self.atoms.columns() {
            for v in col {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < HEADER_LEN {
            return Err(Error::format(
                "header",
                format!("{} bytes, need {HEADER_LEN}", bytes.len()),
            ));
        }
        if &bytes[..4] != CONTAINER_MAGIC {
            return Err(Error::format("magic", "expected SRCD"));
        }
        let field =
            |i: usize| u32::from_le_bytes(bytes[4 + 4 * i..8 + 4 * i].try_into().unwrap()) as usize;
        let version = field(0);
        if version != CONTAINER_VERSION as usize {
            return Err(Error::format(
                "version",
                format!("unsupported version {version}"),
            ));
        }
        let (rows, cols, k, m, n) = (field(1), field(2), field(3), field(4), field(5));
        if m == 0 || n == 0 || rows != m * n {
            return Err(Error::format(
                "rows",
                format!("{rows} rows inconsistent with block {m}x{n}"),
            ));
        }
        let expected = HEADER_LEN + 4 * cols + 8 * rows * cols;
        if bytes.len() != expected {
            return Err(Error::format(
                "payload",
                format!("expected {expected} bytes, found {}", bytes.len()),
            ));
        }
        let mut pos = HEADER_LEN;
        let labels = (0..cols)
            .map(|_| {
                let v = u32::from_le_bytes(bytes[pos..pos + 4].try_into().unwrap()) as usize;
                pos += 4;
                v
            })
            .collect();
        let mut atoms = Array2::zeros((rows, cols));
        for c in 0..cols {
            for r in 0..rows {
                atoms[[r, c]] = f64::from_le_bytes(bytes[pos..pos + 8].try_into().unwrap());
                pos += 8;
            }
        }
        Self::new(atoms, labels, k, BlockShape { m, n })
    }
}

fn block_shape_of(blocks_by_class: &[Vec<Block>]) -> Result<BlockShape> {
    let shape = blocks_by_class
        .iter()
        .flatten()
        .next()
        .map(|b| b.shape)
        .ok_or_else(|| Error::param("blocks_by_class", "no blocks supplied"))?;
    for (k, blocks) in blocks_by_class.iter().enumerate() {
        for b in blocks {
            if b.shape != shape {
                return Err(Error::Shape(format!(
                    "class {k} block is {}x{}, expected {}x{}",
                    b.shape.m, b.shape.n, shape.m, shape.n
                )));
            }
            if let Some(label) = b.label {
                if label != k {
                    return Err(Error::param(
                        "label",
                        format!("block labeled {label} listed under class {k}"),
                    ));
                }
            }
        }
    }
    Ok(shape)
}

fn columns_from(vectors: &[BlockVector]) -> Array2<f64> {
    let dim = vectors.first().map_or(0, |v| v.len());
    let mut out = Array2::zeros((dim, vectors.len()));
    for (j, v) in vectors.iter().enumerate() {
        out.column_mut(j).assign(&Array1::from(v.values.clone()));
    }
    out
}

/// Stacks every vectorized block, class by class.
pub fn build_concatenated(blocks_by_class: &[Vec<Block>]) -> Result<LabeledDictionary> {
    let shape = block_shape_of(blocks_by_class)?;
    let mut per_class = Vec::with_capacity(blocks_by_class.len());
    for (k, blocks) in blocks_by_class.iter().enumerate() {
        if blocks.is_empty() {
            return Err(Error::param(
                "blocks_by_class",
                format!("class {k} has no blocks"),
            ));
        }
        let vectors = blocks.iter().map(vectorize).collect::<Result<Vec<_>>>()?;
        per_class.push(columns_from(&vectors));
    }
    LabeledDictionary::from_class_atoms(&per_class, shape)
}

/// Picks `count` distinct samples uniformly at random as initial atoms.
pub fn init_atoms(samples: &[BlockVector], count: usize, seed: u64) -> Result<Array2<f64>> {
    if count == 0 || count > samples.len() {
        return Err(Error::param(
            "count",
            format!("cannot choose {count} atoms from {} samples", samples.len()),
        ));
    }
    let mut order: Vec<usize> = (0..samples.len()).collect();
    let mut rng = SplitMix64::new(seed);
    // Partial Fisher-Yates: the first `count` slots become a uniform sample without replacement.
    for i in 0..count {
        let j = i + rng.below(samples.len() - i);
        order.swap(i, j);
    }
    let chosen: Vec<BlockVector> = order[..count].iter().map(|&i| samples[i].clone()).collect();
    Ok(columns_from(&chosen))
}

fn default_odl_lambda() -> f64 {
    0.1
}
fn default_epochs() -> usize {
    5
}
fn default_batch_size() -> usize {
    1
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OdlConfig {
    pub atoms_per_class: usize,
    #[serde(default = "default_odl_lambda")]
    pub lambda: f64,
    #[serde(default = "default_epochs")]
    pub epochs: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_batch_size")]
    pub batch_size: usize,
}

impl OdlConfig {
    pub fn new(atoms_per_class: usize) -> Self {
        Self {
            atoms_per_class,
            lambda: default_odl_lambda(),
            epochs: default_epochs(),
            seed: 0,
            batch_size: default_batch_size(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.atoms_per_class == 0 {
            return Err(Error::param("atoms_per_class", "must be at least 1"));
        }
        if !(self.lambda > 0.0 && self.lambda.is_finite()) {
            return Err(Error::param("lambda", "must be positive"));
        }
        if self.batch_size == 0 {
            return Err(Error::param("batch_size", "must be at least 1"));
        }
        Ok(())
    }
}

/// Running sufficient statistics of the surrogate objective plus the working atoms.
#[derive(Debug, Clone, PartialEq)]
pub struct OdlState {
    /// Σ ααᵀ, atoms × atoms.
    pub a: Array2<f64>,
    /// Σ xαᵀ, signal dim × atoms.
    pub b: Array2<f64>,
    pub atoms: Array2<f64>,
}

impl OdlState {
    pub fn new(atoms: Array2<f64>) -> Self {
        let (dim, k) = atoms.dim();
        Self {
            a: Array2::zeros((k, k)),
            b: Array2::zeros((dim, k)),
            atoms,
        }
    }

    /// Sparse code of `sample` against the working atoms.
    pub fn encode(
        &self,
        sample: &BlockVector,
        lambda: f64,
        solver: &SolverConfig,
    ) -> Result<Vec<f64>> {
        let coder = SparseCoder::new_unchecked(self.atoms.view())?;
        let cfg = SolverConfig {
            lambda,
            epsilon: None,
            ..*solver
        };
        Ok(coder.code(&sample.values, &cfg)?.beta)
    }

    pub fn accumulate(&mut self, sample: &BlockVector, code: &[f64]) {
        for (i, &ai) in code.iter().enumerate() {
            if ai == 0.0 {
                continue;
            }
            for (j, &aj) in code.iter().enumerate() {
                if aj != 0.0 {
                    self.a[[i, j]] += ai * aj;
                }
            }
            for (r, &x) in sample.values.iter().enumerate() {
                self.b[[r, i]] += x * ai;
            }
        }
    }

    /// One block-coordinate sweep over the atoms, projecting each onto the unit ball.
    pub fn update_atoms(&mut self) {
        let k = self.atoms.ncols();
        for j in 0..k {
            let ajj = self.a[[j, j]];
            if ajj < DEAD_ATOM_FLOOR {
                continue;
            }
            let d_aj = self.atoms.dot(&self.a.column(j));
            let mut u = &self.b.column(j) - &d_aj;
            u /= ajj;
            u += &self.atoms.column(j);
            let norm = u.dot(&u).sqrt();
            if norm > 1.0 {
                u /= norm;
            }
            self.atoms.column_mut(j).assign(&u);
        }
    }

    /// `½ tr(DᵀDA) − tr(DᵀB)`, the quantity each atom sweep minimizes.
    pub fn surrogate(&self) -> f64 {
        let gram = self.atoms.t().dot(&self.atoms);
        let quad = (&gram * &self.a).sum();
        let lin = (&self.atoms * &self.b).sum();
        0.5 * quad - lin
    }

    /// Rescales every nonzero atom to exactly unit norm.
    pub fn renormalize(&mut self) {
        for mut col in self.atoms.columns_mut() {
            let norm = col.dot(&col).sqrt();
            if norm > 0.0 {
                col /= norm;
            }
        }
    }
}

/// Codes one sample, folds it into the statistics, and sweeps the atoms.
pub fn odl_step(
    mut state: OdlState,
    sample: &BlockVector,
    lambda: f64,
    solver: &SolverConfig,
) -> Result<OdlState> {
    if !(lambda > 0.0) {
        return Err(Error::param("lambda", "must be positive"));
    }
    if sample.len() != state.atoms.nrows() {
        return Err(Error::Shape(format!(
            "sample has {} entries, atoms have {}",
            sample.len(),
            state.atoms.nrows()
        )));
    }
    let code = state.encode(sample, lambda, solver)?;
    state.accumulate(sample, &code);
    state.update_atoms();
    Ok(state)
}

/// Learns one class's atoms from its vectorized samples.
pub fn learn_class_atoms(
    samples: &[BlockVector],
    config: &OdlConfig,
    solver: &SolverConfig,
) -> Result<Array2<f64>> {
    config.validate()?;
    let atoms = init_atoms(samples, config.atoms_per_class, derive_seed(config.seed, 0))?;
    let mut state = OdlState::new(atoms);
    let mut order: Vec<usize> = (0..samples.len()).collect();
    for epoch in 0..config.epochs {
        let mut rng = SplitMix64::new(derive_seed(config.seed, 1 + epoch as u64));
        rng.shuffle(&mut order);
        for batch in order.chunks(config.batch_size) {
            for &i in batch {
                let code = state.encode(&samples[i], config.lambda, solver)?;
                state.accumulate(&samples[i], &code);
            }
            state.update_atoms();
        }
        state.renormalize();
    }
    Ok(state.atoms)
}

/// Condenses each class's blocks into `atoms_per_class` learned atoms.
///
/// Classes are learned independently with the same seed stream, so a class's
/// atoms depend only on its own blocks.
pub fn learn_odl(
    blocks_by_class: &[Vec<Block>],
    config: &OdlConfig,
    solver: &SolverConfig,
) -> Result<LabeledDictionary> {
    config.validate()?;
    let shape = block_shape_of(blocks_by_class)?;
    let mut per_class = Vec::with_capacity(blocks_by_class.len());
    for (k, blocks) in blocks_by_class.iter().enumerate() {
        let samples: Vec<BlockVector> = blocks.iter().filter_map(|b| vectorize(b).ok()).collect();
        if samples.len() < config.atoms_per_class {
            return Err(Error::param(
                "atoms_per_class",
                format!(
                    "class {k} has {} usable blocks, fewer than {} atoms",
                    samples.len(),
                    config.atoms_per_class
                ),
            ));
        }
        per_class.push(learn_class_atoms(&samples, config, solver)?);
    }
    LabeledDictionary::from_class_atoms(&per_class, shape)
}
