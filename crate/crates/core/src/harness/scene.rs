//! Synthetic sonar-like scenes.
//!
//! Backgrounds are seafloor speckle around a mean of 0.3. Mine-like targets
//! (class 0) are a bright rectangular highlight followed in range by a sharp
//! dark shadow. Non-mine targets (class 1) are a dimmer elliptical highlight
//! with a diffuse shadow that brightens toward its rim. Range runs down the
//! rows, so shadows sit below the highlight.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imaging::SonarImage;
use crate::rng::SplitMix64;

pub const BACKGROUND_LEVEL: f64 = 0.3;
pub const MINE_HIGHLIGHT: f64 = 0.9;
pub const MINE_SHADOW: f64 = 0.05;
pub const ROCK_HIGHLIGHT: f64 = 0.6;
/// Darkest point of the graded non-mine shadow.
pub const ROCK_SHADOW_CORE: f64 = 0.05;

/// Half-extent of the target footprint (highlight plus shadow) at scale 1.
pub const TARGET_HALF_EXTENT: f64 = 24.0;

pub const MIN_SCALE: f64 = 0.75;
pub const MAX_SCALE: f64 = 1.25;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pose {
    pub row: f64,
    pub col: f64,
    pub scale: f64,
}

impl Pose {
    pub fn centered(height: usize, width: usize) -> Self {
        Self {
            row: height as f64 / 2.0,
            col: width as f64 / 2.0,
            scale: 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SceneSpec {
    /// 0 = mine-like, 1 = non-mine-like.
    pub class_id: usize,
    /// (height, width).
    pub image_size: (usize, usize),
    pub target_pose: Pose,
    /// Variance of the multiplicative speckle.
    pub clutter_level: f64,
    pub seed: u64,
}

impl SceneSpec {
    pub fn validate(&self) -> Result<()> {
        if self.class_id > 1 {
            return Err(Error::param(
                "class_id",
                format!("{} is neither 0 nor 1", self.class_id),
            ));
        }
        let (h, w) = self.image_size;
        if h == 0 || w == 0 {
            return Err(Error::param("image_size", "must be at least 1x1"));
        }
        if !(self.clutter_level >= 0.0 && self.clutter_level.is_finite()) {
            return Err(Error::param(
                "clutter_level",
                "must be finite and nonnegative",
            ));
        }
        let pose = self.target_pose;
        if !(MIN_SCALE..=MAX_SCALE).contains(&pose.scale) {
            return Err(Error::param(
                "scale",
                format!("{} outside [{MIN_SCALE}, {MAX_SCALE}]", pose.scale),
            ));
        }
        let half = TARGET_HALF_EXTENT * pose.scale;
        if pose.row - half < 0.0
            || pose.row + half > h as f64
            || pose.col - half < 0.0
            || pose.col + half > w as f64
        {
            return Err(Error::Bounds {
                requested: format!(
                    "target centered at ({}, {}) with half-extent {half}",
                    pose.row, pose.col
                ),
                available: format!("image {h}x{w}"),
            });
        }
        Ok(())
    }
}

/// Which part of the target a pixel falls in, in target-local coordinates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Region {
    Background,
    Highlight,
    /// Shadow intensity before speckle.
    Shadow(f64),
}

/// Geometry of the class template. `range` and `cross` are unscaled offsets
/// from the target center along and across the range axis.
pub fn region(class_id: usize, range: f64, cross: f64) -> Region {
    // Units of the half-extent; both templates fill the same footprint.
    let u = cross / TARGET_HALF_EXTENT;
    let v = range / TARGET_HALF_EXTENT;
    if class_id == 0 {
        if !(-1.0..1.0).contains(&u) {
            return Region::Background;
        }
        if (-1.0..-0.25).contains(&v) {
            Region::Highlight
        } else if (-0.25..1.0).contains(&v) {
            Region::Shadow(MINE_SHADOW)
        } else {
            Region::Background
        }
    } else {
        let hl = (u / 0.85).powi(2) + ((v + 0.45) / 0.5).powi(2);
        if hl <= 1.0 {
            return Region::Highlight;
        }
        let sh = (u / 0.95).powi(2) + ((v - 0.35) / 0.65).powi(2);
        if sh <= 1.0 {
            Region::Shadow(ROCK_SHADOW_CORE + (BACKGROUND_LEVEL - ROCK_SHADOW_CORE) * sh)
        } else {
            Region::Background
        }
    }
}

/// Renders one scene. Identical specs give identical images.
pub fn generate_scene(spec: &SceneSpec) -> Result<SonarImage> {
    spec.validate()?;
    let (h, w) = spec.image_size;
    let pose = spec.target_pose;
    let mut rng = SplitMix64::new(spec.seed);
    let sigma2 = (1.0 + spec.clutter_level).ln();
    let sigma = sigma2.sqrt();
    let highlight = if spec.class_id == 0 {
        MINE_HIGHLIGHT
    } else {
        ROCK_HIGHLIGHT
    };
    let mut pixels = Vec::with_capacity(h * w);
    for r in 0..h {
        for c in 0..w {
            let range = (r as f64 - pose.row) / pose.scale;
            let cross = (c as f64 - pose.col) / pose.scale;
            let base = match region(spec.class_id, range, cross) {
                Region::Background => BACKGROUND_LEVEL,
                Region::Highlight => highlight,
                Region::Shadow(v) => v,
            };
            // Log-normal speckle with unit mean and variance `clutter_level`.
            let speckle = if sigma > 0.0 {
                (sigma * rng.normal() - 0.5 * sigma2).exp()
            } else {
                1.0
            };
            pixels.push((base * speckle).clamp(0.0, 1.0));
        }
    }
    SonarImage::new(w, h, pixels)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(class_id: usize, clutter: f64) -> SceneSpec {
        SceneSpec {
            class_id,
            image_size: (128, 128),
            target_pose: Pose::centered(128, 128),
            clutter_level: clutter,
            seed: 42,
        }
    }

    #[test]
    fn noiseless_mine_geometry() {
        let img = generate_scene(&spec(0, 0.0)).unwrap();
        let count = |v: f64| img.pixels().iter().filter(|&&p| p == v).count();
        assert_eq!(count(MINE_HIGHLIGHT), 48 * 18);
        assert_eq!(count(MINE_SHADOW), 48 * 30);
        assert_eq!(count(BACKGROUND_LEVEL), 128 * 128 - 48 * 48);
        for r in 0..128 {
            for c in 0..128 {
                let expected = if !(40..88).contains(&r) || !(40..88).contains(&c) {
                    BACKGROUND_LEVEL
                } else if r < 58 {
                    MINE_HIGHLIGHT
                } else {
                    MINE_SHADOW
                };
                assert_eq!(img.get(r, c), expected, "({r}, {c})");
            }
        }
    }

    #[test]
    fn deterministic_per_seed() {
        let a = generate_scene(&spec(1, 0.4)).unwrap();
        let b = generate_scene(&spec(1, 0.4)).unwrap();
        assert_eq!(a, b);
        let mut other = spec(1, 0.4);
        other.seed = 43;
        assert_ne!(a, generate_scene(&other).unwrap());
    }

    #[test]
    fn classes_differ_inside_target() {
        let mine = generate_scene(&spec(0, 0.2)).unwrap();
        let rock = generate_scene(&spec(1, 0.2)).unwrap();
        // Mean over the mine highlight rectangle.
        let mean = |img: &SonarImage| {
            let mut s = 0.0;
            let mut n = 0.0;
            for r in 40..58 {
                for c in 40..88 {
                    s += img.get(r, c);
                    n += 1.0;
                }
            }
            s / n
        };
        assert!(mean(&mine) - mean(&rock) > 0.2);
    }

    #[test]
    fn rejects_out_of_bounds_target() {
        let mut s = spec(0, 0.0);
        s.target_pose.col = 10.0;
        assert!(matches!(generate_scene(&s), Err(Error::Bounds { .. })));
        let mut s = spec(0, 0.0);
        s.target_pose.scale = 3.0;
        assert!(generate_scene(&s).is_err());
        let mut s = spec(2, 0.0);
        s.class_id = 2;
        assert!(generate_scene(&s).is_err());
    }

    #[test]
    fn speckle_has_background_mean() {
        let mut s = spec(0, 0.3);
        s.image_size = (256, 256);
        s.target_pose = Pose::centered(256, 256);
        let img = generate_scene(&s).unwrap();
        let bg: Vec<f64> = (0..256)
            .flat_map(|r| (0..40).map(move |c| (r, c)))
            .map(|(r, c)| img.get(r, c))
            .collect();
        let mean = bg.iter().sum::<f64>() / bg.len() as f64;
        assert!((mean - BACKGROUND_LEVEL).abs() < 0.01, "mean {mean}");
    }
}
