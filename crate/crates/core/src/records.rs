//! Detector output data model and the JSONL pool reader.
//!
//! One line of a pool file holds one image:
//!
//! ```json
//! {"image_id": "img_0001", "width": 500, "height": 375,
//!  "proposals": [[x1, y1, x2, y2], ...],
//!  "reference": [{"box": [...], "probs": [...], "background_prob": 0.1, "proposal_index": 0}],
//!  "noisy": [{"level": 1, "sigma": 8.0, "detections": [...]}],
//!  "ground_truth": [{"box": [...], "class": 3}]}
//! ```
//!
//! `background_prob`, `proposal_index` and `ground_truth` are optional. Boxes
//! that stick out of the frame are clamped; detections whose foreground
//! `P_max` falls below the confidence floor are dropped.

use std::collections::HashSet;
use std::fs;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::BBox;

pub const DEFAULT_CONFIDENCE_FLOOR: f64 = 0.05;
const SUM_TOLERANCE: f64 = 1e-6;

/// Foreground class probabilities plus an optional background mass.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassDistribution {
    probs: Vec<f64>,
    background_prob: Option<f64>,
}

impl ClassDistribution {
    pub fn new(probs: Vec<f64>, background_prob: Option<f64>) -> Result<Self> {
        Self::check(&probs, background_prob).map_err(|(_, m)| Error::record("", "probs", m))?;
        Ok(ClassDistribution { probs, background_prob })
    }

    /// Returns the offending field name and a message.
    fn check(probs: &[f64], background: Option<f64>) -> std::result::Result<(), (&'static str, String)> {
        if probs.is_empty() {
            return Err(("probs", "empty probability list".into()));
        }
        if let Some(p) = probs.iter().find(|p| !(0.0..=1.0).contains(*p)) {
            return Err(("probs", format!("probability {p} outside [0, 1]")));
        }
        let sum: f64 = probs.iter().sum();
        match background {
            Some(bg) => {
                if !(0.0..=1.0).contains(&bg) {
                    return Err(("background_prob", format!("probability {bg} outside [0, 1]")));
                }
                if (sum + bg - 1.0).abs() > SUM_TOLERANCE {
                    return Err((
                        "background_prob",
                        format!("foreground + background sums to {}", sum + bg),
                    ));
                }
            }
            None => {
                if sum > 1.0 + SUM_TOLERANCE {
                    return Err(("probs", format!("probabilities sum to {sum} > 1")));
                }
            }
        }
        Ok(())
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn background_prob(&self) -> Option<f64> {
        self.background_prob
    }

    pub fn num_classes(&self) -> usize {
        self.probs.len()
    }

    /// Highest foreground probability and its class; ties go to the lowest index.
    pub fn pmax(&self) -> (f64, usize) {
        pmax(&self.probs).expect("validated distribution is non-empty")
    }
}

/// Highest foreground probability and its class index, lowest index on ties.
pub fn pmax(probs: &[f64]) -> Result<(f64, usize)> {
    let mut best: Option<(f64, usize)> = None;
    for (i, &p) in probs.iter().enumerate() {
        match best {
            Some((bp, _)) if p <= bp => {}
            _ => best = Some((p, i)),
        }
    }
    best.ok_or_else(|| Error::record("", "probs", "empty probability list"))
}

#[derive(Debug, Clone, PartialEq)]
pub struct Detection {
    pub bbox: BBox,
    pub dist: ClassDistribution,
    pub proposal_index: Option<usize>,
}

impl Detection {
    pub fn new(bbox: BBox, dist: ClassDistribution, proposal_index: Option<usize>) -> Self {
        Detection {
            bbox,
            dist,
            proposal_index,
        }
    }

    pub fn p_max(&self) -> f64 {
        self.dist.pmax().0
    }

    pub fn predicted_class(&self) -> usize {
        self.dist.pmax().1
    }
}

/// Detections on one noise-corrupted copy of the image.
#[derive(Debug, Clone, PartialEq)]
pub struct NoisyPass {
    pub level: u32,
    pub sigma: f64,
    pub detections: Vec<Detection>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GroundTruthObject {
    pub bbox: BBox,
    pub class_index: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ImageRecord {
    pub image_id: String,
    pub width: u32,
    pub height: u32,
    pub proposals: Vec<BBox>,
    pub reference: Vec<Detection>,
    pub noisy: Vec<NoisyPass>,
    pub ground_truth: Option<Vec<GroundTruthObject>>,
}

impl ImageRecord {
    pub fn proposal_for(&self, det: &Detection) -> Option<&BBox> {
        det.proposal_index.and_then(|i| self.proposals.get(i))
    }

    pub fn to_json_line(&self) -> String {
        serde_json::to_string(&RawRecord::from(self)).expect("record serializes")
    }
}

/// Ingest settings.
#[derive(Debug, Clone)]
pub struct ParseOptions {
    /// Detections with foreground `P_max` below this are dropped.
    pub confidence_floor: f64,
    /// Expected number of foreground classes, e.g. from a class manifest.
    pub num_classes: Option<usize>,
}

impl Default for ParseOptions {
    fn default() -> Self {
        ParseOptions {
            confidence_floor: DEFAULT_CONFIDENCE_FLOOR,
            num_classes: None,
        }
    }
}

/// A parsed record along with non-fatal notes (clamped boxes, dropped detections).
#[derive(Debug, Clone)]
pub struct Parsed {
    pub record: ImageRecord,
    pub warnings: Vec<String>,
}

pub fn parse_record(line: &str) -> Result<ImageRecord> {
    parse_record_with(line, &ParseOptions::default()).map(|p| p.record)
}

pub fn parse_record_with(line: &str, opts: &ParseOptions) -> Result<Parsed> {
    let value: serde_json::Value = serde_json::from_str(line)?;
    let image_id = value.get("image_id").and_then(|v| v.as_str()).unwrap_or("").to_string();
    let raw: RawRecord =
        serde_json::from_value(value).map_err(|e| Error::record(&image_id, "<schema>", e.to_string()))?;
    raw.validate(opts)
}

// Wire format.

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawDetection {
    #[serde(rename = "box")]
    bbox: [f64; 4],
    probs: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    background_prob: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    proposal_index: Option<usize>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawNoisyPass {
    level: u32,
    sigma: f64,
    detections: Vec<RawDetection>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawGroundTruth {
    #[serde(rename = "box")]
    bbox: [f64; 4],
    class: usize,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawRecord {
    image_id: String,
    width: u32,
    height: u32,
    #[serde(default)]
    proposals: Vec<[f64; 4]>,
    #[serde(default)]
    reference: Vec<RawDetection>,
    #[serde(default)]
    noisy: Vec<RawNoisyPass>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    ground_truth: Option<Vec<RawGroundTruth>>,
}

impl From<&Detection> for RawDetection {
    fn from(d: &Detection) -> Self {
        RawDetection {
            bbox: d.bbox.coords(),
            probs: d.dist.probs.clone(),
            background_prob: d.dist.background_prob,
            proposal_index: d.proposal_index,
        }
    }
}

impl From<&ImageRecord> for RawRecord {
    fn from(r: &ImageRecord) -> Self {
        RawRecord {
            image_id: r.image_id.clone(),
            width: r.width,
            height: r.height,
            proposals: r.proposals.iter().map(BBox::coords).collect(),
            reference: r.reference.iter().map(RawDetection::from).collect(),
            noisy: r
                .noisy
                .iter()
                .map(|p| RawNoisyPass {
                    level: p.level,
                    sigma: p.sigma,
                    detections: p.detections.iter().map(RawDetection::from).collect(),
                })
                .collect(),
            ground_truth: r.ground_truth.as_ref().map(|gts| {
                gts.iter()
                    .map(|g| RawGroundTruth {
                        bbox: g.bbox.coords(),
                        class: g.class_index,
                    })
                    .collect()
            }),
        }
    }
}

struct Validator<'a> {
    id: &'a str,
    width: f64,
    height: f64,
    floor: f64,
    num_classes: Option<usize>,
    num_proposals: usize,
    warnings: Vec<String>,
}

impl Validator<'_> {
    fn err(&self, path: impl Into<String>, message: impl Into<String>) -> Error {
        Error::record(self.id, path, message)
    }

    fn bbox(&mut self, c: [f64; 4], path: &str) -> Result<BBox> {
        let b = BBox::new(c[0], c[1], c[2], c[3]).map_err(|e| self.err(path, e.to_string()))?;
        let clamped = b
            .clamp_to(self.width, self.height)
            .map_err(|_| self.err(path, format!("box {c:?} lies outside the image")))?;
        if clamped != b {
            self.warnings
                .push(format!("{}: {path}: box {c:?} clamped to image bounds", self.id));
        }
        Ok(clamped)
    }

    /// `None` when the detection falls below the confidence floor.
    fn detection(&mut self, raw: RawDetection, path: &str) -> Result<Option<Detection>> {
        let bbox = self.bbox(raw.bbox, &format!("{path}.box"))?;
        ClassDistribution::check(&raw.probs, raw.background_prob)
            .map_err(|(field, m)| self.err(format!("{path}.{field}"), m))?;
        match self.num_classes {
            Some(k) if k != raw.probs.len() => {
                return Err(self.err(
                    format!("{path}.probs"),
                    format!("expected {k} class probabilities, found {}", raw.probs.len()),
                ))
            }
            None => self.num_classes = Some(raw.probs.len()),
            _ => {}
        }
        if let Some(i) = raw.proposal_index {
            if i >= self.num_proposals {
                return Err(self.err(
                    format!("{path}.proposal_index"),
                    format!("index {i} but only {} proposals", self.num_proposals),
                ));
            }
        }
        let dist = ClassDistribution {
            probs: raw.probs,
            background_prob: raw.background_prob,
        };
        if dist.pmax().0 < self.floor {
            self.warnings
                .push(format!("{}: {path}: dropped below confidence floor", self.id));
            return Ok(None);
        }
        Ok(Some(Detection {
            bbox,
            dist,
            proposal_index: raw.proposal_index,
        }))
    }

    fn detections(&mut self, raws: Vec<RawDetection>, prefix: &str) -> Result<Vec<Detection>> {
        let mut out = Vec::with_capacity(raws.len());
        for (i, raw) in raws.into_iter().enumerate() {
            if let Some(d) = self.detection(raw, &format!("{prefix}[{i}]"))? {
                out.push(d);
            }
        }
        Ok(out)
    }
}

impl RawRecord {
    fn validate(self, opts: &ParseOptions) -> Result<Parsed> {
        let id = self.image_id.clone();
        if id.is_empty() {
            return Err(Error::record("", "image_id", "empty image id"));
        }
        if self.width == 0 || self.height == 0 {
            return Err(Error::record(&id, "width/height", "image dimensions must be positive"));
        }
        let mut v = Validator {
            id: &id,
            width: f64::from(self.width),
            height: f64::from(self.height),
            floor: opts.confidence_floor,
            num_classes: opts.num_classes,
            num_proposals: self.proposals.len(),
            warnings: Vec::new(),
        };

        let proposals = self
            .proposals
            .iter()
            .enumerate()
            .map(|(i, c)| v.bbox(*c, &format!("proposals[{i}]")))
            .collect::<Result<Vec<_>>>()?;
        let reference = v.detections(self.reference, "reference")?;

        let mut noisy = Vec::with_capacity(self.noisy.len());
        for (i, p) in self.noisy.into_iter().enumerate() {
            let path = format!("noisy[{i}]");
            if !p.sigma.is_finite() || p.sigma <= 0.0 {
                return Err(v.err(format!("{path}.sigma"), format!("sigma {} must be positive", p.sigma)));
            }
            let detections = v.detections(p.detections, &format!("{path}.detections"))?;
            noisy.push(NoisyPass {
                level: p.level,
                sigma: p.sigma,
                detections,
            });
        }
        noisy.sort_by_key(|p| p.level);
        for w in noisy.windows(2) {
            if w[0].level == w[1].level {
                return Err(v.err("noisy", format!("duplicate noise level {}", w[0].level)));
            }
            if w[1].sigma <= w[0].sigma {
                return Err(v.err(
                    "noisy",
                    format!(
                        "sigma must increase with level (level {} -> {})",
                        w[0].level, w[1].level
                    ),
                ));
            }
        }
        for (expect, p) in (1u32..).zip(&noisy) {
            if p.level != expect {
                return Err(v.err(
                    "noisy",
                    format!("noise levels must cover 1..N without gaps; missing level {expect}"),
                ));
            }
        }

        let ground_truth = match self.ground_truth {
            None => None,
            Some(gts) => {
                let mut out = Vec::with_capacity(gts.len());
                for (i, g) in gts.into_iter().enumerate() {
                    let path = format!("ground_truth[{i}]");
                    let bbox = v.bbox(g.bbox, &format!("{path}.box"))?;
                    if let Some(k) = v.num_classes {
                        if g.class >= k {
                            return Err(v.err(
                                format!("{path}.class"),
                                format!("class {} out of range for {k} classes", g.class),
                            ));
                        }
                    }
                    out.push(GroundTruthObject {
                        bbox,
                        class_index: g.class,
                    });
                }
                Some(out)
            }
        };

        let warnings = v.warnings;
        Ok(Parsed {
            record: ImageRecord {
                image_id: self.image_id,
                width: self.width,
                height: self.height,
                proposals,
                reference,
                noisy,
                ground_truth,
            },
            warnings,
        })
    }
}

/// A collection of image records with unique ids.
#[derive(Debug, Clone, Default)]
pub struct Pool {
    pub records: Vec<ImageRecord>,
    pub warnings: Vec<String>,
}

impl Pool {
    pub fn from_records(records: Vec<ImageRecord>) -> Result<Self> {
        let mut seen = HashSet::new();
        for r in &records {
            if !seen.insert(r.image_id.as_str()) {
                return Err(Error::DuplicateImage(r.image_id.clone()));
            }
        }
        Ok(Pool {
            records,
            warnings: Vec::new(),
        })
    }

    /// Parses JSONL text. Blank lines are skipped; errors carry 1-based line numbers.
    pub fn parse(text: &str, opts: &ParseOptions) -> Result<Self> {
        let lines: Vec<(usize, &str)> = text
            .lines()
            .enumerate()
            .filter(|(_, l)| !l.trim().is_empty())
            .map(|(i, l)| (i + 1, l))
            .collect();
        let parsed: Vec<Result<Parsed>> = lines
            .par_iter()
            .map(|(n, l)| {
                parse_record_with(l, opts).map_err(|e| Error::Line {
                    line: *n,
                    source: Box::new(e),
                })
            })
            .collect();
        let mut records = Vec::with_capacity(parsed.len());
        let mut warnings = Vec::new();
        let mut seen = HashSet::new();
        for (p, (n, _)) in parsed.into_iter().zip(&lines) {
            let p = p?;
            if !seen.insert(p.record.image_id.clone()) {
                return Err(Error::Line {
                    line: *n,
                    source: Box::new(Error::DuplicateImage(p.record.image_id)),
                });
            }
            warnings.extend(p.warnings);
            records.push(p.record);
        }
        Ok(Pool { records, warnings })
    }

    pub fn load(path: &Path, opts: &ParseOptions) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Pool::parse(&text, opts)
    }

    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for r in &self.records {
            out.push_str(&r.to_json_line());
            out.push('\n');
        }
        out
    }

    pub fn get(&self, image_id: &str) -> Option<&ImageRecord> {
        self.records.iter().find(|r| r.image_id == image_id)
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }
}

/// Reads a class-name manifest: a JSON array of names aligned with `probs`.
pub fn load_class_names(path: &Path) -> Result<Vec<String>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let names: Vec<String> = serde_json::from_str(&text)?;
    if names.is_empty() {
        return Err(Error::Config("class manifest is empty".into()));
    }
    Ok(names)
}
