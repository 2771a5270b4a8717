use rand::Rng;
use serde::{Deserialize, Serialize};

use super::stream_rng;
use crate::error::{Error, Result};
use crate::geometry::{iou, BBox};
use crate::records::GroundTruthObject;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthWorldConfig {
    /// Images in the unlabeled pool.
    pub num_images: usize,
    /// Held-out images used only for evaluation.
    #[serde(default = "default_test_images")]
    pub num_test_images: usize,
    pub num_classes: usize,
    pub min_objects: usize,
    pub max_objects: usize,
    #[serde(default = "default_side")]
    pub width: u32,
    #[serde(default = "default_side")]
    pub height: u32,
    /// Per-class difficulty `h_c`: labeled objects needed for competence 0.5.
    pub difficulty: Vec<f64>,
    /// Relative class frequencies; uniform when absent.
    #[serde(default)]
    pub class_weights: Option<Vec<f64>>,
    #[serde(default = "default_min_frac")]
    pub min_box_frac: f64,
    #[serde(default = "default_max_frac")]
    pub max_box_frac: f64,
    /// Largest IoU allowed between two objects of the same image.
    #[serde(default = "default_max_overlap")]
    pub max_overlap: f64,
    pub seed: u64,
}

fn default_test_images() -> usize {
    200
}
fn default_side() -> u32 {
    256
}
fn default_min_frac() -> f64 {
    0.1
}
fn default_max_frac() -> f64 {
    0.35
}
fn default_max_overlap() -> f64 {
    0.3
}

impl SynthWorldConfig {
    /// A world with `k` classes, the last `hard` of which are difficult.
    pub fn with_hard_classes(num_images: usize, k: usize, hard: usize, seed: u64) -> Self {
        let difficulty = (0..k).map(|c| if c + hard >= k { 60.0 } else { 10.0 }).collect();
        SynthWorldConfig {
            num_images,
            num_test_images: default_test_images(),
            num_classes: k,
            min_objects: 1,
            max_objects: 6,
            width: default_side(),
            height: default_side(),
            difficulty,
            class_weights: None,
            min_box_frac: default_min_frac(),
            max_box_frac: default_max_frac(),
            max_overlap: default_max_overlap(),
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if self.num_images == 0 || self.num_classes == 0 || self.width == 0 || self.height == 0 {
            return bad("image count, class count and image size must be positive");
        }
        if self.min_objects == 0 || self.max_objects < self.min_objects {
            return bad("objects per image must satisfy 1 <= min <= max");
        }
        if self.difficulty.len() != self.num_classes || self.difficulty.iter().any(|h| !h.is_finite() || *h <= 0.0) {
            return bad("difficulty needs one positive finite value per class");
        }
        if let Some(w) = &self.class_weights {
            if w.len() != self.num_classes
                || w.iter().any(|x| !x.is_finite() || *x < 0.0)
                || w.iter().sum::<f64>() <= 0.0
            {
                return bad("class weights need one non-negative value per class");
            }
        }
        if !(0.0 < self.min_box_frac && self.min_box_frac <= self.max_box_frac && self.max_box_frac <= 1.0) {
            return bad("box fractions must satisfy 0 < min <= max <= 1");
        }
        Ok(())
    }

    pub fn class_weights(&self) -> Vec<f64> {
        let w = self
            .class_weights
            .clone()
            .unwrap_or_else(|| vec![1.0; self.num_classes]);
        let total: f64 = w.iter().sum();
        w.into_iter().map(|x| x / total).collect()
    }
}

/// One image of the synthetic world with its ground truth.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthImage {
    pub id: String,
    pub width: u32,
    pub height: u32,
    pub objects: Vec<GroundTruthObject>,
}

#[derive(Debug, Clone)]
pub struct World {
    pub config: SynthWorldConfig,
    pub pool: Vec<SynthImage>,
    pub test: Vec<SynthImage>,
}

impl World {
    pub fn pool_ids(&self) -> Vec<String> {
        self.pool.iter().map(|i| i.id.clone()).collect()
    }

    pub fn image(&self, id: &str) -> Option<&SynthImage> {
        self.pool.iter().find(|i| i.id == id)
    }
}

const PLACEMENT_RETRIES: usize = 200;

fn generate_image(cfg: &SynthWorldConfig, weights: &[f64], id: String) -> Result<SynthImage> {
    let mut rng = stream_rng("world", &[cfg.seed], &id);
    let n = rng.random_range(cfg.min_objects..=cfg.max_objects);
    let (w, h) = (f64::from(cfg.width), f64::from(cfg.height));
    let mut objects: Vec<GroundTruthObject> = Vec::with_capacity(n);
    for _ in 0..n {
        let u: f64 = rng.random();
        let mut acc = 0.0;
        let mut class_index = weights.len() - 1;
        for (c, p) in weights.iter().enumerate() {
            acc += p;
            if u < acc {
                class_index = c;
                break;
            }
        }
        let mut placed = None;
        for _ in 0..PLACEMENT_RETRIES {
            let bw = w * rng.random_range(cfg.min_box_frac..=cfg.max_box_frac);
            let bh = h * rng.random_range(cfg.min_box_frac..=cfg.max_box_frac);
            let x = rng.random_range(0.0..=(w - bw));
            let y = rng.random_range(0.0..=(h - bh));
            let b = BBox::new(x, y, x + bw, y + bh)?;
            if objects.iter().all(|o| iou(&o.bbox, &b) <= cfg.max_overlap) {
                placed = Some(b);
                break;
            }
        }
        let bbox = placed.ok_or_else(|| {
            Error::Simulation(format!(
                "could not place object in {id} after {PLACEMENT_RETRIES} tries"
            ))
        })?;
        objects.push(GroundTruthObject { bbox, class_index });
    }
    Ok(SynthImage {
        id,
        width: cfg.width,
        height: cfg.height,
        objects,
    })
}

/// Builds the pool and test split. Deterministic in `cfg.seed`.
pub fn generate_world(cfg: &SynthWorldConfig) -> Result<World> {
    cfg.validate()?;
    let weights = cfg.class_weights();
    let pool = (0..cfg.num_images)
        .map(|i| generate_image(cfg, &weights, format!("img{i:05}")))
        .collect::<Result<Vec<_>>>()?;
    let test = (0..cfg.num_test_images)
        .map(|i| generate_image(cfg, &weights, format!("test{i:05}")))
        .collect::<Result<Vec<_>>>()?;
    Ok(World {
        config: cfg.clone(),
        pool,
        test,
    })
}
