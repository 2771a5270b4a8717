//! Per-box and per-image informativeness metrics.
//!
//! Every method maps an image to one real value where higher means "select
//! first". Methods whose natural score selects low values (stability,
//! tightness and the weighted-sum variants) are negated to fit.

use std::fmt;
use std::io::{Read, Write};
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::geometry::iou;
use crate::records::{Detection, GroundTruthObject, ImageRecord, NoisyPass};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum MethodName {
    Random,
    Classification,
    Stability,
    StabilityClassification,
    TightnessClassification,
    TightnessClassificationGt,
    ThreeInOne,
    TightnessMinAbsDiff,
    TightnessWsumJ,
    TightnessWsumT,
}

impl MethodName {
    pub const ALL: [MethodName; 10] = [
        MethodName::Random,
        MethodName::Classification,
        MethodName::Stability,
        MethodName::StabilityClassification,
        MethodName::TightnessClassification,
        MethodName::TightnessClassificationGt,
        MethodName::ThreeInOne,
        MethodName::TightnessMinAbsDiff,
        MethodName::TightnessWsumJ,
        MethodName::TightnessWsumT,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            MethodName::Random => "R",
            MethodName::Classification => "C",
            MethodName::Stability => "LS",
            MethodName::StabilityClassification => "LS+C",
            MethodName::TightnessClassification => "LT/C",
            MethodName::TightnessClassificationGt => "LT/C(GT)",
            MethodName::ThreeInOne => "3in1",
            MethodName::TightnessMinAbsDiff => "LT-minabs-diff",
            MethodName::TightnessWsumJ => "LT-wsum-j",
            MethodName::TightnessWsumT => "LT-wsum-t",
        }
    }

    /// Command-line spelling, e.g. `ls_c` for `LS+C`.
    pub fn slug(&self) -> String {
        normalize(self.as_str())
    }

    pub fn needs_noise(&self) -> bool {
        matches!(
            self,
            MethodName::Stability | MethodName::StabilityClassification | MethodName::ThreeInOne
        )
    }

    pub fn needs_proposals(&self) -> bool {
        matches!(
            self,
            MethodName::TightnessClassification
                | MethodName::ThreeInOne
                | MethodName::TightnessMinAbsDiff
                | MethodName::TightnessWsumJ
                | MethodName::TightnessWsumT
        )
    }

    pub fn needs_ground_truth(&self) -> bool {
        matches!(self, MethodName::TightnessClassificationGt)
    }
}

fn normalize(s: &str) -> String {
    s.trim()
        .to_ascii_lowercase()
        .chars()
        .filter(|c| *c != ')')
        .map(|c| {
            if matches!(c, '+' | '/' | '-' | '(' | ' ') {
                '_'
            } else {
                c
            }
        })
        .collect()
}

impl FromStr for MethodName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let key = normalize(s);
        MethodName::ALL
            .into_iter()
            .find(|m| m.slug() == key)
            .ok_or_else(|| Error::UnknownMethod(s.to_string()))
    }
}

impl TryFrom<String> for MethodName {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<MethodName> for String {
    fn from(m: MethodName) -> Self {
        m.as_str().to_string()
    }
}

impl fmt::Display for MethodName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// A scoring method together with its weights.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Method {
    pub name: MethodName,
    #[serde(default = "one")]
    pub lambda: f64,
    #[serde(default = "one")]
    pub lambda_ls: f64,
    #[serde(default = "one")]
    pub lambda_lt: f64,
    #[serde(default)]
    pub seed: u64,
}

fn one() -> f64 {
    1.0
}

impl Method {
    pub fn new(name: MethodName) -> Self {
        Method {
            name,
            lambda: 1.0,
            lambda_ls: 1.0,
            lambda_lt: 1.0,
            seed: 0,
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<()> {
        for (n, w) in [
            ("lambda", self.lambda),
            ("lambda_ls", self.lambda_ls),
            ("lambda_lt", self.lambda_lt),
        ] {
            if !w.is_finite() {
                return Err(Error::Config(format!("{n} must be finite, got {w}")));
            }
        }
        Ok(())
    }
}

impl From<MethodName> for Method {
    fn from(name: MethodName) -> Self {
        Method::new(name)
    }
}

/// Informativeness of one image under one method; `value` is `None` when the
/// method cannot judge the image.
#[derive(Debug, Clone, PartialEq)]
pub struct Score {
    pub image_id: String,
    pub method: MethodName,
    pub value: Option<f64>,
}

impl Score {
    pub fn defined(&self) -> bool {
        self.value.is_some()
    }
}

/// Classification uncertainty of one box: `1 - P_max`.
pub fn u_box(d: &Detection) -> f64 {
    1.0 - d.p_max()
}

/// Maximum box uncertainty over the reference detections.
pub fn u_image(r: &ImageRecord) -> Option<f64> {
    r.reference.iter().map(u_box).reduce(f64::max)
}

/// IoU between the final box and the proposal it was refined from.
pub fn tightness_box(d: &Detection, r: &ImageRecord) -> Option<f64> {
    r.proposal_for(d).map(|p| iou(&d.bbox, p))
}

/// Best IoU against any ground-truth box; 0 with no ground truth objects.
pub fn tightness_box_gt(d: &Detection, gts: &[GroundTruthObject]) -> f64 {
    gts.iter().map(|g| iou(&d.bbox, &g.bbox)).fold(0.0, f64::max)
}

/// Box score `|T + P_max - 1|`; near zero when classification and localization disagree.
pub fn j_box(t: f64, p_max: f64) -> f64 {
    (t + p_max - 1.0).abs()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TightnessSource {
    /// Tightness against the linked region proposal.
    Proposal,
    /// Tightness against the best-matching ground-truth box.
    GroundTruth,
}

/// `(P_max, T)` for every reference detection that has the needed tightness
/// source. `None` if the source is missing for the whole record.
fn tightness_pairs(r: &ImageRecord, source: TightnessSource) -> Option<Vec<(f64, f64)>> {
    match source {
        TightnessSource::Proposal => Some(
            r.reference
                .iter()
                .filter_map(|d| tightness_box(d, r).map(|t| (d.p_max(), t)))
                .collect(),
        ),
        TightnessSource::GroundTruth => {
            let gts = r.ground_truth.as_deref()?;
            Some(
                r.reference
                    .iter()
                    .map(|d| (d.p_max(), tightness_box_gt(d, gts)))
                    .collect(),
            )
        }
    }
}

/// Image tightness score: minimum `J` over eligible boxes.
pub fn t_image(r: &ImageRecord, source: TightnessSource) -> Option<f64> {
    tightness_pairs(r, source)?
        .into_iter()
        .map(|(p, t)| j_box(t, p))
        .reduce(f64::min)
}

/// The detection in `pass` with the highest positive IoU against `reference`;
/// earliest wins on ties.
pub fn correspondence<'a>(reference: &Detection, pass: &'a NoisyPass) -> Option<(&'a Detection, f64)> {
    let mut best: Option<(&Detection, f64)> = None;
    for d in &pass.detections {
        let v = iou(&reference.bbox, &d.bbox);
        if v > 0.0 && best.is_none_or(|(_, b)| v > b) {
            best = Some((d, v));
        }
    }
    best
}

/// Mean IoU between a reference box and its corresponding boxes across all
/// noise levels. Levels without a corresponding box count as 0.
pub fn s_box(reference: &Detection, noisy: &[NoisyPass]) -> Option<f64> {
    if noisy.is_empty() {
        return None;
    }
    let sum: f64 = noisy
        .iter()
        .map(|p| correspondence(reference, p).map_or(0.0, |(_, v)| v))
        .sum();
    Some(sum / noisy.len() as f64)
}

/// `P_max`-weighted mean of `s_box` over the reference detections.
pub fn s_image(r: &ImageRecord) -> Option<f64> {
    if r.reference.is_empty() || r.noisy.is_empty() {
        return None;
    }
    let (mut num, mut den) = (0.0, 0.0);
    for d in &r.reference {
        let w = d.p_max();
        num += w * s_box(d, &r.noisy)?;
        den += w;
    }
    (den > 0.0).then(|| (num / den).clamp(0.0, 1.0))
}

/// Uniform value in `[0, 1)` derived from `(seed, image_id)`.
pub fn random_value(seed: u64, image_id: &str) -> f64 {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update(image_id.as_bytes());
    let digest = h.finalize();
    let mut bytes = [0u8; 8];
    bytes.copy_from_slice(&digest[..8]);
    (u64::from_le_bytes(bytes) >> 11) as f64 / (1u64 << 53) as f64
}

fn score_value(m: &Method, r: &ImageRecord) -> Option<f64> {
    use MethodName::*;
    match m.name {
        Random => Some(random_value(m.seed, &r.image_id)),
        Classification => u_image(r),
        Stability => s_image(r).map(|s| -s),
        StabilityClassification => Some(u_image(r)? - m.lambda * s_image(r)?),
        TightnessClassification => t_image(r, TightnessSource::Proposal).map(|t| -t),
        TightnessClassificationGt => t_image(r, TightnessSource::GroundTruth).map(|t| -t),
        ThreeInOne => {
            let u = u_image(r)?;
            let s = s_image(r)?;
            let t = t_image(r, TightnessSource::Proposal)?;
            Some(u - m.lambda_ls * s - m.lambda_lt * t)
        }
        TightnessMinAbsDiff => {
            let pairs = tightness_pairs(r, TightnessSource::Proposal)?;
            let min_neg = pairs.iter().map(|(p, t)| -(p - t).abs()).reduce(f64::min)?;
            Some(-min_neg)
        }
        TightnessWsumJ => {
            let pairs = tightness_pairs(r, TightnessSource::Proposal)?;
            if pairs.is_empty() {
                return None;
            }
            Some(-pairs.iter().map(|(p, t)| p * j_box(*t, *p)).sum::<f64>())
        }
        TightnessWsumT => {
            let pairs = tightness_pairs(r, TightnessSource::Proposal)?;
            if pairs.is_empty() {
                return None;
            }
            Some(-pairs.iter().map(|(p, t)| p * t).sum::<f64>())
        }
    }
}

pub fn informativeness(m: &Method, r: &ImageRecord) -> Score {
    Score {
        image_id: r.image_id.clone(),
        method: m.name,
        value: score_value(m, r).filter(|v| v.is_finite()),
    }
}

/// Scores every record in parallel; output order follows input order.
pub fn score_records(m: &Method, records: &[ImageRecord]) -> Vec<Score> {
    records.par_iter().map(|r| informativeness(m, r)).collect()
}

pub fn write_scores_csv<W: Write>(scores: &[Score], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["image_id", "method", "value", "defined"])
        .map_err(|e| Error::Csv(e.to_string()))?;
    for s in scores {
        let value = s.value.map(|v| format!("{v:.6}")).unwrap_or_default();
        w.write_record([
            s.image_id.as_str(),
            s.method.as_str(),
            value.as_str(),
            if s.defined() { "true" } else { "false" },
        ])
        .map_err(|e| Error::Csv(e.to_string()))?;
    }
    w.flush().map_err(|e| Error::Csv(e.to_string()))
}

pub fn read_scores_csv<R: Read>(input: R) -> Result<Vec<Score>> {
    let mut rdr = csv::Reader::from_reader(input);
    let mut out = Vec::new();
    for (i, row) in rdr.records().enumerate() {
        let row_no = i + 2;
        let bad = |m: String| Error::Csv(format!("row {row_no}: {m}"));
        let row = row.map_err(|e| bad(e.to_string()))?;
        if row.len() != 4 {
            return Err(bad(format!("expected 4 fields, found {}", row.len())));
        }
        let method: MethodName = row[1].parse().map_err(|e: Error| bad(e.to_string()))?;
        let defined = match &row[3] {
            "true" => true,
            "false" => false,
            other => return Err(bad(format!("bad `defined` flag `{other}`"))),
        };
        let value = if defined {
            Some(
                row[2]
                    .parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| bad(format!("bad value `{}`", &row[2])))?,
            )
        } else {
            None
        };
        out.push(Score {
            image_id: row[0].to_string(),
            method,
            value,
        });
    }
    Ok(out)
}
