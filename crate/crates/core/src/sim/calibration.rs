use serde::{Deserialize, Serialize};

/// Noise standard deviations (pixel values in `[0, 255]`) for the six noise levels.
pub const DEFAULT_SIGMAS: [f64; 6] = [8.0, 16.0, 24.0, 32.0, 40.0, 48.0];

/// Constants of the simulated detector. The defaults are frozen: the
/// directional campaign tests depend on them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Calibration {
    /// Miss probability at zero competence; scales with `1 - s`.
    pub miss_max: f64,
    /// Per-object false-positive probability at zero competence.
    pub fp_max: f64,
    /// Corner jitter of final boxes, as a fraction of the box size, at zero competence.
    pub loc_error: f64,
    /// Corner jitter between a final box and its proposal, relative to box size.
    pub proposal_jitter: f64,
    /// Extra corner jitter per unit of pixel-noise sigma, relative to box size.
    pub noise_response: f64,
    /// Probability that a box disappears at the strongest noise level, at zero competence.
    pub vanish_max: f64,
    /// Probability of predicting a wrong class at zero competence.
    pub misclass_max: f64,
    /// Spread of the confidence around its mean, at zero competence.
    pub conf_noise: f64,
    /// How strongly localization error lowers confidence.
    pub conf_loc_penalty: f64,
    /// Upper end of false-positive confidence, as a fraction of the usable range.
    pub fp_conf_scale: f64,
    /// Background clutter: independent chances per image of a false positive
    /// unrelated to the objects present. Each slot fires with probability
    /// `clutter_rate * (1 - mean competence)`.
    pub clutter_slots: usize,
    pub clutter_rate: f64,
}

impl Default for Calibration {
    fn default() -> Self {
        Calibration {
            miss_max: 0.5,
            fp_max: 0.4,
            loc_error: 0.25,
            proposal_jitter: 0.25,
            noise_response: 0.005,
            vanish_max: 0.3,
            misclass_max: 0.3,
            conf_noise: 0.15,
            conf_loc_penalty: 1.0,
            fp_conf_scale: 0.6,
            clutter_slots: 2,
            clutter_rate: 0.7,
        }
    }
}
