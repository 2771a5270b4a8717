use std::collections::BTreeSet;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::calibration::{Calibration, DEFAULT_SIGMAS};
use super::stream_rng;
use super::world::SynthImage;
use crate::error::{Error, Result};
use crate::geometry::{iou, BBox};
use crate::records::{ClassDistribution, Detection, ImageRecord, NoisyPass};

/// What the simulated detector has learned so far: labeled object counts per class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectorState {
    counts: Vec<u64>,
    difficulty: Vec<f64>,
    labeled: BTreeSet<String>,
}

impl DetectorState {
    pub fn new(difficulty: Vec<f64>) -> Result<Self> {
        if difficulty.is_empty() || difficulty.iter().any(|h| !h.is_finite() || *h <= 0.0) {
            return Err(Error::Config("difficulty needs positive finite values".into()));
        }
        Ok(DetectorState {
            counts: vec![0; difficulty.len()],
            difficulty,
            labeled: BTreeSet::new(),
        })
    }

    pub fn num_classes(&self) -> usize {
        self.counts.len()
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn labeled(&self) -> &BTreeSet<String> {
        &self.labeled
    }

    /// `n_c / (n_c + h_c)`.
    pub fn competence(&self, class_index: usize) -> f64 {
        let n = self.counts[class_index] as f64;
        n / (n + self.difficulty[class_index])
    }

    /// Adds the objects of newly labeled images. Fails if any image was labeled before.
    pub fn train_update<'a>(&self, images: impl IntoIterator<Item = &'a SynthImage>) -> Result<DetectorState> {
        let mut next = self.clone();
        for img in images {
            if !next.labeled.insert(img.id.clone()) {
                return Err(Error::Simulation(format!("image `{}` is already labeled", img.id)));
            }
            for o in &img.objects {
                let slot = next.counts.get_mut(o.class_index).ok_or_else(|| {
                    Error::Simulation(format!("class {} out of range in `{}`", o.class_index, img.id))
                })?;
                *slot += 1;
            }
        }
        Ok(next)
    }

    /// A state whose competence is `s` for every class, for limit-case checks.
    pub fn with_uniform_competence(num_classes: usize, s: f64) -> Self {
        // s = n / (n + h) with n = 1  =>  h = (1 - s) / s
        let (counts, difficulty) = if s <= 0.0 {
            (vec![0; num_classes], vec![1.0; num_classes])
        } else if s >= 1.0 {
            (vec![1; num_classes], vec![f64::MIN_POSITIVE; num_classes])
        } else {
            (vec![1; num_classes], vec![(1.0 - s) / s; num_classes])
        };
        DetectorState {
            counts,
            difficulty,
            labeled: BTreeSet::new(),
        }
    }
}

/// Per-call switches for the simulated detector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimOptions {
    #[serde(default = "default_sigmas")]
    pub sigmas: Vec<f64>,
    /// Single-shot detector: no proposals, so no tightness estimates.
    #[serde(default)]
    pub ssd_mode: bool,
    #[serde(default = "yes")]
    pub include_ground_truth: bool,
    #[serde(default = "yes")]
    pub with_noise: bool,
}

fn default_sigmas() -> Vec<f64> {
    DEFAULT_SIGMAS.to_vec()
}

fn yes() -> bool {
    true
}

impl Default for SimOptions {
    fn default() -> Self {
        SimOptions {
            sigmas: DEFAULT_SIGMAS.to_vec(),
            ssd_mode: false,
            include_ground_truth: true,
            with_noise: true,
        }
    }
}

impl SimOptions {
    pub fn validate(&self) -> Result<()> {
        if self.sigmas.iter().any(|s| !s.is_finite() || *s <= 0.0) || self.sigmas.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Config("sigmas must be positive and strictly ascending".into()));
        }
        Ok(())
    }
}

fn normals4(rng: &mut ChaCha8Rng) -> [f64; 4] {
    std::array::from_fn(|_| {
        let z: f64 = rng.sample(StandardNormal);
        z.clamp(-3.0, 3.0)
    })
}

/// Moves each corner by a truncated Gaussian scaled to the box size. Falls
/// back to the input box if the result degenerates at the image border.
fn jitter(b: &BBox, z: &[f64; 4], scale: f64, width: f64, height: f64) -> BBox {
    if scale <= 0.0 {
        return *b;
    }
    let (sx, sy) = (scale * b.width(), scale * b.height());
    let x0 = b.x_min() + z[0] * sx;
    let y0 = b.y_min() + z[1] * sy;
    let x1 = (b.x_max() + z[2] * sx).max(x0 + 1.0);
    let y1 = (b.y_max() + z[3] * sy).max(y0 + 1.0);
    BBox::new(
        x0.clamp(0.0, width),
        y0.clamp(0.0, height),
        x1.clamp(0.0, width),
        y1.clamp(0.0, height),
    )
    .unwrap_or(*b)
}

/// Lowest `P_max` the simulator emits; keeps the argmax unambiguous.
fn confidence_floor(k: usize) -> f64 {
    (1.5 / (k as f64 + 0.5) + 0.01).min(0.51)
}

fn distribution(k: usize, class_index: usize, p: f64, spread: &[f64]) -> ClassDistribution {
    let mut probs = vec![0.0; k];
    probs[class_index] = p;
    if k > 1 {
        let weights: Vec<f64> = (0..k)
            .filter(|&i| i != class_index)
            .map(|i| 1.0 + 0.5 * spread[i])
            .collect();
        let total: f64 = weights.iter().sum();
        let rest = (1.0 - p).max(0.0);
        let mut w = weights.iter();
        for (i, slot) in probs.iter_mut().enumerate() {
            if i != class_index {
                *slot = rest * w.next().expect("one weight per other class") / total;
            }
        }
    }
    ClassDistribution::new(probs, None).expect("simulated distribution is valid")
}

/// Random draws for one hypothesis, taken up front in a fixed order so that
/// the same image sees the same numbers whatever the competence.
struct Draws {
    u_miss: f64,
    z_loc: [f64; 4],
    z_prop: [f64; 4],
    u_mis: f64,
    u_mis_class: f64,
    z_conf: f64,
    spread: Vec<f64>,
    u_fp: f64,
    fp_box: [f64; 4],
    u_fp_conf: f64,
    fp_spread: Vec<f64>,
    z_fp_prop: [f64; 4],
    levels: Vec<(f64, [f64; 4], f64, [f64; 4])>,
}

impl Draws {
    fn take(rng: &mut ChaCha8Rng, k: usize, levels: usize) -> Self {
        Draws {
            u_miss: rng.random(),
            z_loc: normals4(rng),
            z_prop: normals4(rng),
            u_mis: rng.random(),
            u_mis_class: rng.random(),
            z_conf: rng.sample(StandardNormal),
            spread: (0..k).map(|_| rng.random()).collect(),
            u_fp: rng.random(),
            fp_box: std::array::from_fn(|_| rng.random()),
            u_fp_conf: rng.random(),
            fp_spread: (0..k).map(|_| rng.random()).collect(),
            z_fp_prop: normals4(rng),
            levels: (0..levels)
                .map(|_| (rng.random(), normals4(rng), rng.random(), normals4(rng)))
                .collect(),
        }
    }
}

/// Random draws for one background-clutter slot.
struct ClutterDraws {
    u_present: f64,
    u_class: f64,
    bbox: [f64; 4],
    u_conf: f64,
    spread: Vec<f64>,
    z_prop: [f64; 4],
    levels: Vec<(f64, [f64; 4])>,
}

impl ClutterDraws {
    fn take(rng: &mut ChaCha8Rng, k: usize, levels: usize) -> Self {
        ClutterDraws {
            u_present: rng.random(),
            u_class: rng.random(),
            bbox: std::array::from_fn(|_| rng.random()),
            u_conf: rng.random(),
            spread: (0..k).map(|_| rng.random()).collect(),
            z_prop: normals4(rng),
            levels: (0..levels).map(|_| (rng.random(), normals4(rng))).collect(),
        }
    }
}

#[derive(Clone, Copy)]
enum Source {
    Object(usize),
    ObjectFalsePositive(usize),
    Clutter(usize),
}

struct Hypothesis {
    det: Detection,
    proposal: BBox,
    competence: f64,
    source: Source,
}

fn random_box(u: &[f64; 4], w: f64, h: f64) -> BBox {
    let bw = w * (0.1 + 0.25 * u[0]);
    let bh = h * (0.1 + 0.25 * u[1]);
    let x = u[2] * (w - bw);
    let y = u[3] * (h - bh);
    BBox::new(x, y, x + bw, y + bh).expect("random box is valid")
}

/// Emits a pool record for `image` as seen by a detector in `state`.
///
/// `keys` select the random stream (e.g. campaign seed and round); the same
/// keys and image always produce the same record.
pub fn simulate_detections(
    state: &DetectorState,
    image: &SynthImage,
    calib: &Calibration,
    opts: &SimOptions,
    keys: &[u64],
) -> ImageRecord {
    let k = state.num_classes();
    let (w, h) = (f64::from(image.width), f64::from(image.height));
    let p_floor = confidence_floor(k);
    let mut rng = stream_rng("detect", keys, &image.id);
    let draws: Vec<Draws> = image
        .objects
        .iter()
        .map(|_| Draws::take(&mut rng, k, opts.sigmas.len()))
        .collect();
    let clutter: Vec<ClutterDraws> = (0..calib.clutter_slots)
        .map(|_| ClutterDraws::take(&mut rng, k, opts.sigmas.len()))
        .collect();

    let mut hyps: Vec<Hypothesis> = Vec::new();
    for (oi, (o, d)) in image.objects.iter().zip(&draws).enumerate() {
        let s = state.competence(o.class_index);
        let weak = 1.0 - s;

        if d.u_miss >= calib.miss_max * weak {
            let bbox = jitter(&o.bbox, &d.z_loc, calib.loc_error * weak, w, h);
            let misclassified = k > 1 && d.u_mis < calib.misclass_max * weak;
            let class_index = if misclassified {
                let other = ((d.u_mis_class * (k - 1) as f64) as usize).min(k - 2);
                if other >= o.class_index {
                    other + 1
                } else {
                    other
                }
            } else {
                o.class_index
            };
            let loc_err = 1.0 - iou(&bbox, &o.bbox);
            let mut q = s * (1.0 - calib.conf_loc_penalty * loc_err).max(0.0);
            if misclassified {
                q *= 0.5;
            }
            let p = (p_floor + (1.0 - p_floor) * q + calib.conf_noise * weak * d.z_conf).clamp(p_floor, 1.0);
            hyps.push(Hypothesis {
                det: Detection::new(bbox, distribution(k, class_index, p, &d.spread), None),
                proposal: jitter(&bbox, &d.z_prop, calib.proposal_jitter * weak, w, h),
                competence: s,
                source: Source::Object(oi),
            });
        }

        if d.u_fp < calib.fp_max * weak {
            let bbox = random_box(&d.fp_box, w, h);
            let p = p_floor + (1.0 - p_floor) * calib.fp_conf_scale * d.u_fp_conf;
            hyps.push(Hypothesis {
                det: Detection::new(bbox, distribution(k, o.class_index, p, &d.fp_spread), None),
                proposal: jitter(&bbox, &d.z_fp_prop, calib.proposal_jitter * weak, w, h),
                competence: s,
                source: Source::ObjectFalsePositive(oi),
            });
        }
    }

    let mean_competence = (0..k).map(|c| state.competence(c)).sum::<f64>() / k as f64;
    for (ci, c) in clutter.iter().enumerate() {
        if c.u_present >= calib.clutter_rate * (1.0 - mean_competence) {
            continue;
        }
        let class_index = ((c.u_class * k as f64) as usize).min(k - 1);
        let s = state.competence(class_index);
        let bbox = random_box(&c.bbox, w, h);
        let p = p_floor + (1.0 - p_floor) * calib.fp_conf_scale * c.u_conf;
        hyps.push(Hypothesis {
            det: Detection::new(bbox, distribution(k, class_index, p, &c.spread), None),
            proposal: jitter(&bbox, &c.z_prop, calib.proposal_jitter * (1.0 - s), w, h),
            competence: s,
            source: Source::Clutter(ci),
        });
    }

    let mut proposals = Vec::new();
    let mut reference = Vec::with_capacity(hyps.len());
    for hyp in &hyps {
        let mut det = hyp.det.clone();
        if !opts.ssd_mode {
            det.proposal_index = Some(proposals.len());
            proposals.push(hyp.proposal);
        }
        reference.push(det);
    }

    let mut noisy = Vec::new();
    if opts.with_noise {
        let sigma_max = opts.sigmas.last().copied().unwrap_or(1.0);
        for (li, &sigma) in opts.sigmas.iter().enumerate() {
            let mut detections = Vec::new();
            for hyp in &hyps {
                let weak = 1.0 - hyp.competence;
                let (u_vanish, z) = match hyp.source {
                    Source::Object(o) => (&draws[o].levels[li].0, &draws[o].levels[li].1),
                    Source::ObjectFalsePositive(o) => (&draws[o].levels[li].2, &draws[o].levels[li].3),
                    Source::Clutter(c) => (&clutter[c].levels[li].0, &clutter[c].levels[li].1),
                };
                if *u_vanish < calib.vanish_max * weak * sigma / sigma_max {
                    continue;
                }
                let bbox = jitter(&hyp.det.bbox, z, calib.noise_response * sigma * weak, w, h);
                detections.push(Detection::new(bbox, hyp.det.dist.clone(), None));
            }
            noisy.push(NoisyPass {
                level: li as u32 + 1,
                sigma,
                detections,
            });
        }
    }

    ImageRecord {
        image_id: image.id.clone(),
        width: image.width,
        height: image.height,
        proposals,
        reference,
        noisy,
        ground_truth: opts.include_ground_truth.then(|| image.objects.clone()),
    }
}
