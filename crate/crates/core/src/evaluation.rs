//! Detection matching, average precision, difficulty analysis and relative
//! label saving between learning curves.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{iou, BBox};
use crate::records::{Detection, GroundTruthObject};

pub const DEFAULT_IOU_THRESHOLD: f64 = 0.5;
pub const DIFFICULT_AP_THRESHOLD: f64 = 0.40;

/// A detection reduced to what evaluation needs: its box, argmax class, and confidence.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalDetection {
    pub bbox: BBox,
    pub class_index: usize,
    pub confidence: f64,
}

impl From<&Detection> for EvalDetection {
    fn from(d: &Detection) -> Self {
        let (confidence, class_index) = d.dist.pmax();
        EvalDetection {
            bbox: d.bbox,
            class_index,
            confidence,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ClassMatches {
    /// `(confidence, is_true_positive)` in match order.
    pub hits: Vec<(f64, bool)>,
    pub gt_count: usize,
}

impl ClassMatches {
    pub fn true_positives(&self) -> usize {
        self.hits.iter().filter(|(_, tp)| *tp).count()
    }
}

/// Per-class match outcomes, accumulated over any number of images.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct MatchResult {
    pub classes: BTreeMap<usize, ClassMatches>,
}

impl MatchResult {
    pub fn merge(&mut self, other: MatchResult) {
        for (c, m) in other.classes {
            let e = self.classes.entry(c).or_default();
            e.hits.extend(m.hits);
            e.gt_count += m.gt_count;
        }
    }

    pub fn class(&self, class_index: usize) -> Option<&ClassMatches> {
        self.classes.get(&class_index)
    }
}

/// Greedy matching within one image. Per class, detections are visited by
/// descending confidence and each claims the unmatched ground-truth box with
/// the highest IoU at or above `iou_threshold`.
pub fn match_detections(dets: &[EvalDetection], gts: &[GroundTruthObject], iou_threshold: f64) -> MatchResult {
    let mut result = MatchResult::default();
    for g in gts {
        result.classes.entry(g.class_index).or_default().gt_count += 1;
    }
    let mut order: Vec<&EvalDetection> = dets.iter().collect();
    order.sort_by(|a, b| b.confidence.total_cmp(&a.confidence));
    let mut taken = vec![false; gts.len()];
    for d in order {
        let mut best: Option<(usize, f64)> = None;
        for (gi, g) in gts.iter().enumerate() {
            if taken[gi] || g.class_index != d.class_index {
                continue;
            }
            let v = iou(&d.bbox, &g.bbox);
            if v >= iou_threshold && best.is_none_or(|(_, b)| v > b) {
                best = Some((gi, v));
            }
        }
        if let Some((gi, _)) = best {
            taken[gi] = true;
        }
        result
            .classes
            .entry(d.class_index)
            .or_default()
            .hits
            .push((d.confidence, best.is_some()));
    }
    result
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ApVariant {
    /// Area under the precision envelope (precision made non-increasing in
    /// recall), all-point interpolation as in VOC2010 and later.
    #[default]
    Interpolated,
    /// Mean over ground-truth objects of the raw precision at the rank where
    /// each was recalled; missed objects contribute 0.
    PrefixPrecision,
}

/// Average precision for one class. `None` if the class has no ground truth.
pub fn average_precision(m: &MatchResult, class_index: usize, variant: ApVariant) -> Option<f64> {
    let cm = m.class(class_index)?;
    ap_from_hits(&cm.hits, cm.gt_count, variant)
}

pub fn ap_from_hits(hits: &[(f64, bool)], gt_count: usize, variant: ApVariant) -> Option<f64> {
    if gt_count == 0 {
        return None;
    }
    let mut sorted = hits.to_vec();
    sorted.sort_by(|a, b| b.0.total_cmp(&a.0));
    let mut tp = 0usize;
    // (recall, precision) at each true positive
    let mut points = Vec::new();
    for (rank, (_, hit)) in sorted.iter().enumerate() {
        if *hit {
            tp += 1;
            points.push((tp as f64 / gt_count as f64, tp as f64 / (rank + 1) as f64));
        }
    }
    let ap = match variant {
        ApVariant::PrefixPrecision => points.iter().map(|(_, p)| p).sum::<f64>() / gt_count as f64,
        ApVariant::Interpolated => {
            let mut envelope = 0.0f64;
            let mut area = 0.0;
            for i in (0..points.len()).rev() {
                envelope = envelope.max(points[i].1);
                let lower = if i == 0 { 0.0 } else { points[i - 1].0 };
                area += (points[i].0 - lower) * envelope;
            }
            area
        }
    };
    Some(ap.clamp(0.0, 1.0))
}

/// Per-class AP for every class that has ground truth.
pub fn per_class_ap(m: &MatchResult, variant: ApVariant) -> BTreeMap<usize, f64> {
    m.classes
        .keys()
        .filter_map(|&c| average_precision(m, c, variant).map(|ap| (c, ap)))
        .collect()
}

/// Mean over classes with a defined AP.
pub fn mean_ap(per_class: &BTreeMap<usize, f64>) -> Option<f64> {
    if per_class.is_empty() {
        None
    } else {
        Some(per_class.values().sum::<f64>() / per_class.len() as f64)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClasswiseReport {
    pub threshold: f64,
    /// Classes whose baseline AP falls below the threshold.
    pub difficult: Vec<usize>,
    pub non_difficult: Vec<usize>,
    /// Mean AP change (method minus baseline) over each group; `None` for an empty group.
    pub difficult_delta: Option<f64>,
    pub non_difficult_delta: Option<f64>,
}

/// Splits classes by the baseline's AP and reports the mean improvement per group.
pub fn classwise_report(
    baseline: &BTreeMap<usize, f64>,
    method: &BTreeMap<usize, f64>,
    threshold: f64,
) -> Result<ClasswiseReport> {
    if baseline.is_empty() {
        return Err(Error::Evaluation("missing baseline per-class AP".into()));
    }
    let mut difficult = Vec::new();
    let mut non_difficult = Vec::new();
    let (mut dd, mut nd) = (Vec::new(), Vec::new());
    for (&c, &base) in baseline {
        let Some(&ap) = method.get(&c) else {
            return Err(Error::Evaluation(format!("class {c} missing from compared method")));
        };
        if base < threshold {
            difficult.push(c);
            dd.push(ap - base);
        } else {
            non_difficult.push(c);
            nd.push(ap - base);
        }
    }
    let mean = |v: &[f64]| (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64);
    Ok(ClasswiseReport {
        threshold,
        difficult_delta: mean(&dd),
        non_difficult_delta: mean(&nd),
        difficult,
        non_difficult,
    })
}

/// mAP as a function of the number of labeled images.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LearningCurve {
    pub method: String,
    pub points: Vec<(usize, f64)>,
}

impl LearningCurve {
    pub fn new(method: impl Into<String>, points: Vec<(usize, f64)>) -> Result<Self> {
        let c = LearningCurve {
            method: method.into(),
            points,
        };
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        if self.points.windows(2).any(|w| w[1].0 <= w[0].0) {
            return Err(Error::Evaluation(format!(
                "curve `{}` labels must be strictly increasing",
                self.method
            )));
        }
        if self.points.iter().any(|(_, m)| !m.is_finite()) {
            return Err(Error::Evaluation(format!(
                "curve `{}` has a non-finite mAP",
                self.method
            )));
        }
        Ok(())
    }

    pub fn final_map(&self) -> Option<f64> {
        self.points.last().map(|p| p.1)
    }

    /// Smallest label count at which the linearly interpolated curve reaches `target`.
    pub fn labels_to_reach(&self, target: f64) -> Option<f64> {
        let (n0, m0) = *self.points.first()?;
        if m0 >= target {
            return Some(n0 as f64);
        }
        for w in self.points.windows(2) {
            let ((na, ma), (nb, mb)) = (w[0], w[1]);
            if mb >= target {
                let frac = (target - ma) / (mb - ma);
                return Some(na as f64 + frac * (nb as f64 - na as f64));
            }
        }
        None
    }

    /// Point-wise mean of curves sharing the same label grid.
    pub fn mean(method: impl Into<String>, curves: &[LearningCurve]) -> Result<LearningCurve> {
        let first = curves
            .first()
            .ok_or_else(|| Error::Evaluation("no curves to average".into()))?;
        let grid: Vec<usize> = first.points.iter().map(|p| p.0).collect();
        for c in curves {
            if c.points.iter().map(|p| p.0).ne(grid.iter().copied()) {
                return Err(Error::Evaluation("curves use different label grids".into()));
            }
        }
        let n = curves.len() as f64;
        let points = grid
            .iter()
            .enumerate()
            .map(|(i, &labels)| (labels, curves.iter().map(|c| c.points[i].1).sum::<f64>() / n))
            .collect();
        LearningCurve::new(method, points)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SavingPoint {
    pub labels: usize,
    pub map: f64,
    /// `None` when the method never reaches this mAP.
    pub saving: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SavingReport {
    pub method: String,
    pub points: Vec<SavingPoint>,
    /// Mean over the points that could be evaluated.
    pub average: Option<f64>,
    /// Set when any point was skipped.
    pub flagged: bool,
}

/// Relative saving of labels against a passive baseline, evaluated on the
/// passive curve's grid. For each passive mAP value, the label count needed
/// by each curve is the first crossing of its linear interpolation; saving is
/// `(passive - method) / passive`, negative when the method needs more.
pub fn relative_saving(passive: &LearningCurve, method: &LearningCurve) -> Result<SavingReport> {
    passive.validate()?;
    method.validate()?;
    if passive.points.len() < 2 || method.points.len() < 2 {
        return Err(Error::Evaluation("saving needs curves with at least 2 points".into()));
    }
    let points: Vec<SavingPoint> = passive
        .points
        .iter()
        .map(|&(labels, map)| {
            let own = passive.labels_to_reach(map).unwrap_or(labels as f64);
            let saving = method.labels_to_reach(map).map(|n| (own - n) / own);
            SavingPoint { labels, map, saving }
        })
        .collect();
    let defined: Vec<f64> = points.iter().filter_map(|p| p.saving).collect();
    Ok(SavingReport {
        method: method.method.clone(),
        flagged: defined.len() < points.len(),
        average: (!defined.is_empty()).then(|| defined.iter().sum::<f64>() / defined.len() as f64),
        points,
    })
}
