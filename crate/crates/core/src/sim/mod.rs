//! Seeded synthetic world and parametric detector.
//!
//! The simulated detector's behaviour on a class depends only on how many
//! labeled objects of that class it has seen, through the competence
//! `s_c = n_c / (n_c + h_c)`. Records come out in the regular pool format, so
//! the scoring and selection code cannot tell them apart from real pools.

mod calibration;
mod detector;
mod experiment;
mod world;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

pub use calibration::{Calibration, DEFAULT_SIGMAS};
pub use detector::{simulate_detections, DetectorState, SimOptions};
pub use experiment::{evaluate, run_campaign, run_experiment, ExperimentConfig, ExperimentResult, MethodRun};
pub use world::{generate_world, SynthImage, SynthWorldConfig, World};

/// Independent random stream keyed by a tag, numeric keys and an image id.
pub(crate) fn stream_rng(tag: &str, keys: &[u64], id: &str) -> ChaCha8Rng {
    let mut h = Sha256::new();
    h.update(tag.as_bytes());
    h.update([0u8]);
    for k in keys {
        h.update(k.to_le_bytes());
    }
    h.update(id.as_bytes());
    let digest = h.finalize();
    let mut seed = [0u8; 32];
    seed.copy_from_slice(&digest);
    ChaCha8Rng::from_seed(seed)
}
