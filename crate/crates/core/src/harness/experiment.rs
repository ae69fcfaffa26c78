//! Seeded experiment orchestration and accuracy bookkeeping.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::classifier::BlockScorer;
use crate::dictionary::{build_concatenated, init_atoms, learn_odl, LabeledDictionary};
use crate::error::{Error, Result};
use crate::imaging::{
    add_salt_pepper, extract_block, sample_blocks, vectorize, Block, BlockVector, SonarImage,
};
use crate::rng::{derive_seed, SplitMix64};

use super::config::{Arm, ExperimentConfig};
use super::scene::{generate_scene, Pose, SceneSpec, TARGET_HALF_EXTENT};

pub const NUM_CLASSES: usize = 2;

// Seed stream tags.
const TAG_TRAIN: u64 = 1;
const TAG_TEST: u64 = 2;
const TAG_TRAIN_BLOCKS: u64 = 3;
const TAG_TEST_BLOCKS: u64 = 4;
const TAG_NOISE: u64 = 5;
const TAG_ODL: u64 = 6;
const TAG_POSE: u64 = 7;

fn image_seed(trial_seed: u64, tag: u64, class_id: usize, index: usize) -> u64 {
    derive_seed(
        derive_seed(derive_seed(trial_seed, tag), class_id as u64),
        index as u64,
    )
}

/// One rendered scene with its ground truth.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub image: SonarImage,
    pub spec: SceneSpec,
}

impl Sample {
    pub fn class_id(&self) -> usize {
        self.spec.class_id
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub train: Vec<Sample>,
    pub test: Vec<Sample>,
}

/// Ranges of test-target centers allowed by `max_shift` and by the image border.
pub fn pose_box(config: &ExperimentConfig, scale: f64) -> ((f64, f64), (f64, f64)) {
    let (h, w) = config.image_size;
    let half = TARGET_HALF_EXTENT * scale;
    let axis = |size: usize| {
        let center = size as f64 / 2.0;
        let shift = config.max_shift * size as f64;
        (
            (center - shift).max(half),
            (center + shift).min(size as f64 - half),
        )
    };
    (axis(h), axis(w))
}

/// Canonical training scenes and randomly posed test scenes for one trial.
pub fn make_dataset(config: &ExperimentConfig, trial_seed: u64) -> Result<Dataset> {
    let (h, w) = config.image_size;
    let mut train = Vec::new();
    let mut test = Vec::new();
    for class_id in 0..NUM_CLASSES {
        for i in 0..config.num_train_images {
            let spec = SceneSpec {
                class_id,
                image_size: config.image_size,
                target_pose: Pose::centered(h, w),
                clutter_level: config.clutter_level,
                seed: image_seed(trial_seed, TAG_TRAIN, class_id, i),
            };
            train.push(Sample {
                image: generate_scene(&spec)?,
                spec,
            });
        }
    }
    if config.test_on_train {
        test = train.clone();
    } else {
        for class_id in 0..NUM_CLASSES {
            for i in 0..config.num_test_images {
                let mut rng = SplitMix64::new(image_seed(trial_seed, TAG_POSE, class_id, i));
                let (lo, hi) = config.scale_range;
                let scale = rng.uniform(lo, hi);
                let ((r0, r1), (c0, c1)) = pose_box(config, scale);
                let pose = Pose {
                    row: rng.uniform(r0, r1),
                    col: rng.uniform(c0, c1),
                    scale,
                };
                let spec = SceneSpec {
                    class_id,
                    image_size: config.image_size,
                    target_pose: pose,
                    clutter_level: config.clutter_level,
                    seed: image_seed(trial_seed, TAG_TEST, class_id, i),
                };
                test.push(Sample {
                    image: generate_scene(&spec)?,
                    spec,
                });
            }
        }
    }
    Ok(Dataset { train, test })
}

/// A training image and its class.
pub type LabeledImage<'a> = (&'a SonarImage, usize);

fn check_labels(train: &[LabeledImage]) -> Result<()> {
    if let Some((_, k)) = train.iter().find(|(_, k)| *k >= NUM_CLASSES) {
        return Err(Error::param(
            "class_id",
            format!("{k} is not a known class"),
        ));
    }
    Ok(())
}

/// Training blocks grouped by class, each labeled with its source image's class.
pub fn training_blocks(
    config: &ExperimentConfig,
    train: &[LabeledImage],
    trial_seed: u64,
) -> Result<Vec<Vec<Block>>> {
    check_labels(train)?;
    let mut by_class = vec![Vec::new(); NUM_CLASSES];
    for (i, &(image, class_id)) in train.iter().enumerate() {
        let seed = image_seed(trial_seed, TAG_TRAIN_BLOCKS, class_id, i);
        let blocks = sample_blocks(
            image,
            config.blocks_per_train_image,
            config.block_shape,
            seed,
        )?;
        by_class[class_id].extend(blocks.into_iter().map(|b| b.with_label(class_id)));
    }
    Ok(by_class)
}

/// Builds the dictionary an arm classifies with.
pub fn train_arm(
    arm: Arm,
    config: &ExperimentConfig,
    train: &[LabeledImage],
    trial_seed: u64,
) -> Result<LabeledDictionary> {
    let odl_seed = derive_seed(trial_seed, TAG_ODL);
    match arm {
        Arm::LpmDl => {
            let blocks = training_blocks(config, train, trial_seed)?;
            learn_odl(&blocks, &config.odl_config(odl_seed), &config.solver)
        }
        Arm::LpmRandom => {
            // Same sampled blocks and the same atom draw that seeds learning, without refinement.
            let blocks = training_blocks(config, train, trial_seed)?;
            let mut per_class = Vec::with_capacity(NUM_CLASSES);
            for class_blocks in &blocks {
                let vectors: Vec<BlockVector> = class_blocks
                    .iter()
                    .filter_map(|b| vectorize(b).ok())
                    .collect();
                per_class.push(init_atoms(
                    &vectors,
                    config.atoms_per_class,
                    derive_seed(odl_seed, 0),
                )?);
            }
            LabeledDictionary::from_class_atoms(&per_class, config.block_shape)
        }
        Arm::GlobalSrc => {
            check_labels(train)?;
            let mut by_class = vec![Vec::new(); NUM_CLASSES];
            for &(image, class_id) in train {
                let whole = extract_block(image, (0, 0), image.shape())?;
                by_class[class_id].push(whole.with_label(class_id));
            }
            build_concatenated(&by_class)
        }
    }
}

/// Mean and population standard deviation of per-trial accuracies.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccuracySummary {
    pub mean: f64,
    pub std: f64,
    pub trials: Vec<f64>,
}

impl AccuracySummary {
    pub fn from_trials(trials: Vec<f64>) -> Self {
        let n = trials.len().max(1) as f64;
        let mean = trials.iter().sum::<f64>() / n;
        let var = trials.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / n;
        Self {
            mean,
            std: var.sqrt(),
            trials,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArmMetrics {
    pub arm: Arm,
    pub overall: AccuracySummary,
    pub per_class: Vec<AccuracySummary>,
    /// `confusion[true][predicted]`, summed over trials.
    pub confusion: Vec<Vec<usize>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub arms: Vec<ArmMetrics>,
}

impl Metrics {
    pub fn arm(&self, arm: Arm) -> Option<&ArmMetrics> {
        self.arms.iter().find(|m| m.arm == arm)
    }
}

/// Wall-clock seconds per arm. Kept out of [`Metrics`] so reports stay reproducible.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Timings {
    pub seconds: Vec<(Arm, f64)>,
}

#[derive(Debug, Clone, Default)]
struct ArmTally {
    trial_confusions: Vec<Vec<Vec<usize>>>,
    seconds: f64,
}

impl ArmTally {
    fn finish(self, arm: Arm) -> ArmMetrics {
        let mut confusion = vec![vec![0usize; NUM_CLASSES]; NUM_CLASSES];
        let mut overall = Vec::new();
        let mut per_class = vec![Vec::new(); NUM_CLASSES];
        for trial in &self.trial_confusions {
            let mut correct = 0;
            let mut total = 0;
            for (t, row) in trial.iter().enumerate() {
                let n: usize = row.iter().sum();
                correct += row[t];
                total += n;
                per_class[t].push(if n == 0 {
                    0.0
                } else {
                    row[t] as f64 / n as f64
                });
                for (p, &v) in row.iter().enumerate() {
                    confusion[t][p] += v;
                }
            }
            overall.push(correct as f64 / total.max(1) as f64);
        }
        ArmMetrics {
            arm,
            overall: AccuracySummary::from_trials(overall),
            per_class: per_class
                .into_iter()
                .map(AccuracySummary::from_trials)
                .collect(),
            confusion,
        }
    }
}

fn classify_all(
    arm: Arm,
    config: &ExperimentConfig,
    scorer: &BlockScorer,
    test: &[SonarImage],
    labels: &[usize],
    trial_seed: u64,
) -> Result<Vec<Vec<usize>>> {
    let mut confusion = vec![vec![0usize; NUM_CLASSES]; NUM_CLASSES];
    for (j, (image, &truth)) in test.iter().zip(labels).enumerate() {
        let predicted = match arm {
            Arm::GlobalSrc => scorer.classify_global(image, &config.solver)?.0,
            Arm::LpmDl | Arm::LpmRandom => {
                let seed = image_seed(trial_seed, TAG_TEST_BLOCKS, truth, j);
                scorer
                    .classify_lpm(
                        image,
                        config.test_blocks,
                        &config.solver,
                        config.fusion,
                        seed,
                    )?
                    .predicted
            }
        };
        confusion[truth][predicted] += 1;
    }
    Ok(confusion)
}

/// Trains every arm once per trial and scores the test set at each noise level.
///
/// `None` leaves test images untouched; `Some(d)` applies salt-and-pepper noise
/// of density `d` with a per-image seed that does not depend on `d`.
fn evaluate(config: &ExperimentConfig, levels: &[Option<f64>]) -> Result<(Vec<Metrics>, Timings)> {
    config.validate()?;
    let mut tallies: Vec<Vec<ArmTally>> =
        vec![vec![ArmTally::default(); config.arms.len()]; levels.len()];
    for trial in 0..config.trials {
        let trial_seed = derive_seed(config.seed, trial as u64);
        let annotate =
            |arm: Arm| move |e: Error| e.context(format!("arm {} trial {trial}", arm.name()));
        let dataset =
            make_dataset(config, trial_seed).map_err(|e| e.context(format!("trial {trial}")))?;
        let labels: Vec<usize> = dataset.test.iter().map(Sample::class_id).collect();
        let train: Vec<LabeledImage> = dataset
            .train
            .iter()
            .map(|s| (&s.image, s.class_id()))
            .collect();
        let noisy: Vec<Vec<SonarImage>> = levels
            .iter()
            .map(|level| {
                dataset
                    .test
                    .iter()
                    .enumerate()
                    .map(|(j, s)| match level {
                        None => Ok(s.image.clone()),
                        Some(d) => add_salt_pepper(
                            &s.image,
                            *d,
                            image_seed(trial_seed, TAG_NOISE, s.class_id(), j),
                        ),
                    })
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<_>>()?;
        for (a, &arm) in config.arms.iter().enumerate() {
            let started = Instant::now();
            let dict = train_arm(arm, config, &train, trial_seed).map_err(annotate(arm))?;
            let scorer = BlockScorer::new(&dict).map_err(annotate(arm))?;
            for (l, images) in noisy.iter().enumerate() {
                let confusion = classify_all(arm, config, &scorer, images, &labels, trial_seed)
                    .map_err(annotate(arm))?;
                tallies[l][a].trial_confusions.push(confusion);
            }
            tallies[0][a].seconds += started.elapsed().as_secs_f64();
        }
    }
    let timings = Timings {
        seconds: config
            .arms
            .iter()
            .zip(&tallies[0])
            .map(|(&arm, t)| (arm, t.seconds))
            .collect(),
    };
    let metrics = tallies
        .into_iter()
        .map(|level| Metrics {
            arms: config
                .arms
                .iter()
                .zip(level)
                .map(|(&arm, tally)| tally.finish(arm))
                .collect(),
        })
        .collect();
    Ok((metrics, timings))
}

/// Runs every configured arm over `trials` seeded trials on clean test images.
pub fn run_experiment(config: &ExperimentConfig) -> Result<Metrics> {
    run_experiment_timed(config).map(|(m, _)| m)
}

pub fn run_experiment_timed(config: &ExperimentConfig) -> Result<(Metrics, Timings)> {
    let (mut metrics, timings) = evaluate(config, &[None])?;
    Ok((metrics.remove(0), timings))
}

/// Repeats the experiment with test images corrupted at each density in
/// `config.noise_densities`, in ascending order. Training data and all seeds
/// are shared across densities.
pub fn noise_sweep(config: &ExperimentConfig) -> Result<Vec<(f64, Metrics)>> {
    noise_sweep_timed(config).map(|(m, _)| m)
}

pub fn noise_sweep_timed(config: &ExperimentConfig) -> Result<(Vec<(f64, Metrics)>, Timings)> {
    if config.noise_densities.is_empty() {
        return Err(Error::param(
            "noise_densities",
            "a noise sweep needs at least one density",
        ));
    }
    let mut densities = config.noise_densities.clone();
    densities.sort_by(f64::total_cmp);
    let levels: Vec<Option<f64>> = densities.iter().map(|&d| Some(d)).collect();
    let (metrics, timings) = evaluate(config, &levels)?;
    Ok((densities.into_iter().zip(metrics).collect(), timings))
}
