use serde::{Deserialize, Serialize};

use crate::classifier::Fusion;
use crate::dictionary::OdlConfig;
use crate::error::{Error, Result};
use crate::imaging::BlockShape;
use crate::sparse_solver::SolverConfig;

use super::scene::{MAX_SCALE, MIN_SCALE};

/// One way of building a dictionary and classifying with it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Arm {
    /// Sampled training blocks condensed by online dictionary learning.
    LpmDl,
    /// The same number of sampled training blocks, used as-is.
    LpmRandom,
    /// Whole training images as atoms, whole test images as signals.
    GlobalSrc,
}

impl Arm {
    pub fn name(&self) -> &'static str {
        match self {
            Arm::LpmDl => "lpm_dl",
            Arm::LpmRandom => "lpm_random",
            Arm::GlobalSrc => "global_src",
        }
    }
}

impl std::str::FromStr for Arm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "lpm_dl" => Ok(Arm::LpmDl),
            "lpm_random" => Ok(Arm::LpmRandom),
            "global_src" => Ok(Arm::GlobalSrc),
            other => Err(Error::param("arms", format!("unknown arm `{other}`"))),
        }
    }
}

/// Dictionary-learning settings; atoms per class is set on the experiment.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OdlSettings {
    pub lambda: f64,
    pub epochs: usize,
    pub batch_size: usize,
}

impl Default for OdlSettings {
    fn default() -> Self {
        let d = OdlConfig::new(1);
        Self {
            lambda: d.lambda,
            epochs: d.epochs,
            batch_size: d.batch_size,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    /// (height, width) of every scene.
    pub image_size: (usize, usize),
    /// Training images per class.
    pub num_train_images: usize,
    /// Test images per class.
    pub num_test_images: usize,
    pub blocks_per_train_image: usize,
    pub atoms_per_class: usize,
    /// Blocks drawn from each test image.
    pub test_blocks: usize,
    pub block_shape: BlockShape,
    pub trials: usize,
    pub solver: SolverConfig,
    pub odl: OdlSettings,
    pub fusion: Fusion,
    pub arms: Vec<Arm>,
    pub noise_densities: Vec<f64>,
    /// Speckle variance of every scene.
    pub clutter_level: f64,
    /// Largest test-target translation as a fraction of the image size.
    pub max_shift: f64,
    /// Range of test-target scale factors.
    pub scale_range: (f64, f64),
    /// Classify the training images themselves instead of fresh test scenes.
    pub test_on_train: bool,
    pub seed: u64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            image_size: (128, 128),
            num_train_images: 18,
            num_test_images: 20,
            blocks_per_train_image: 18,
            atoms_per_class: 60,
            test_blocks: 30,
            block_shape: BlockShape { m: 60, n: 20 },
            trials: 10,
            solver: SolverConfig::default(),
            odl: OdlSettings::default(),
            fusion: Fusion::Ml,
            arms: vec![Arm::LpmDl, Arm::LpmRandom, Arm::GlobalSrc],
            noise_densities: Vec::new(),
            clutter_level: 1.0,
            max_shift: 0.25,
            scale_range: (MIN_SCALE, MAX_SCALE),
            test_on_train: false,
            seed: 2015,
        }
    }
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let config: Self = serde_json::from_str(text)?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        let counts = [
            ("num_train_images", self.num_train_images),
            ("num_test_images", self.num_test_images),
            ("blocks_per_train_image", self.blocks_per_train_image),
            ("atoms_per_class", self.atoms_per_class),
            ("test_blocks", self.test_blocks),
            ("trials", self.trials),
        ];
        for (name, v) in counts {
            if v == 0 {
                return Err(Error::param(name, "must be at least 1"));
            }
        }
        if self.arms.is_empty() {
            return Err(Error::param("arms", "at least one arm is required"));
        }
        let (h, w) = self.image_size;
        if self.block_shape.m == 0
            || self.block_shape.n == 0
            || self.block_shape.m > h
            || self.block_shape.n > w
        {
            return Err(Error::param(
                "block_shape",
                "must be nonempty and fit inside the image",
            ));
        }
        let uses_blocks = self.arms.iter().any(|a| *a != Arm::GlobalSrc);
        if uses_blocks && self.atoms_per_class > self.num_train_images * self.blocks_per_train_image
        {
            return Err(Error::param(
                "atoms_per_class",
                "exceeds the number of training blocks sampled per class",
            ));
        }
        if let Some(d) = self
            .noise_densities
            .iter()
            .find(|d| !(0.0..=1.0).contains(*d))
        {
            return Err(Error::param(
                "noise_densities",
                format!("{d} outside [0, 1]"),
            ));
        }
        if !(0.0..=0.5).contains(&self.max_shift) {
            return Err(Error::param("max_shift", "must lie in [0, 0.5]"));
        }
        let (lo, hi) = self.scale_range;
        if !(MIN_SCALE <= lo && lo <= hi && hi <= MAX_SCALE) {
            return Err(Error::param(
                "scale_range",
                format!("must satisfy {MIN_SCALE} <= lo <= hi <= {MAX_SCALE}"),
            ));
        }
        if !(self.clutter_level >= 0.0) {
            return Err(Error::param("clutter_level", "must be nonnegative"));
        }
        self.solver.validate()?;
        self.odl_config(0).validate()?;
        Ok(())
    }

    pub fn odl_config(&self, seed: u64) -> OdlConfig {
        OdlConfig {
            atoms_per_class: self.atoms_per_class,
            lambda: self.odl.lambda,
            epochs: self.odl.epochs,
            seed,
            batch_size: self.odl.batch_size,
        }
    }
}
