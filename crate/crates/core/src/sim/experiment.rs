use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::calibration::Calibration;
use super::detector::{simulate_detections, DetectorState, SimOptions};
use super::world::World;
use crate::error::{Error, Result};
use crate::evaluation::{
    match_detections, mean_ap, per_class_ap, ApVariant, EvalDetection, LearningCurve, MatchResult,
    DEFAULT_IOU_THRESHOLD,
};
use crate::scoring::{score_records, Method, MethodName};
use crate::selection::{CampaignState, InitialLabeled, RoundRecord, UndefinedPlacement};

const EVAL_STREAM: u64 = 0xE7A1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub methods: Vec<Method>,
    /// Size of the random initial labeled set.
    pub initial: usize,
    pub batch_size: usize,
    pub rounds: usize,
    pub seeds: Vec<u64>,
    #[serde(default)]
    pub calibration: Calibration,
    #[serde(default)]
    pub sim: SimOptions,
    #[serde(default = "default_iou")]
    pub iou_threshold: f64,
    #[serde(default)]
    pub ap_variant: ApVariant,
    #[serde(default)]
    pub undefined: UndefinedPlacement,
}

fn default_iou() -> f64 {
    DEFAULT_IOU_THRESHOLD
}

impl ExperimentConfig {
    pub fn new(methods: &[MethodName], initial: usize, batch_size: usize, rounds: usize, seeds: Vec<u64>) -> Self {
        ExperimentConfig {
            methods: methods.iter().map(|m| Method::new(*m)).collect(),
            initial,
            batch_size,
            rounds,
            seeds,
            calibration: Calibration::default(),
            sim: SimOptions::default(),
            iou_threshold: DEFAULT_IOU_THRESHOLD,
            ap_variant: ApVariant::default(),
            undefined: UndefinedPlacement::default(),
        }
    }

    pub fn validate(&self, pool_size: usize) -> Result<()> {
        if self.methods.is_empty() || self.seeds.is_empty() {
            return Err(Error::Config("need at least one method and one seed".into()));
        }
        for m in &self.methods {
            m.validate()?;
        }
        self.sim.validate()?;
        if self.batch_size == 0 && self.rounds > 0 {
            return Err(Error::Config("batch size must be positive".into()));
        }
        if self.initial + self.batch_size * self.rounds > pool_size {
            return Err(Error::Config(format!(
                "budget of {} initial + {} x {} exceeds pool of {pool_size}",
                self.initial, self.rounds, self.batch_size
            )));
        }
        if !(0.0 < self.iou_threshold && self.iou_threshold < 1.0) {
            return Err(Error::Config("IoU threshold must lie in (0, 1)".into()));
        }
        Ok(())
    }
}

/// One campaign: a method under one seed.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MethodRun {
    pub method: MethodName,
    pub seed: u64,
    pub curve: LearningCurve,
    pub history: Vec<RoundRecord>,
    /// Per-class AP after the last round.
    pub per_class_ap: BTreeMap<usize, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentResult {
    /// Ordered by seed, then method as configured.
    pub runs: Vec<MethodRun>,
    /// Curves averaged over seeds, one per method.
    pub mean_curves: Vec<LearningCurve>,
}

impl ExperimentResult {
    pub fn runs_for(&self, method: MethodName) -> impl Iterator<Item = &MethodRun> {
        self.runs.iter().filter(move |r| r.method == method)
    }

    pub fn mean_curve(&self, method: MethodName) -> Option<&LearningCurve> {
        self.mean_curves.iter().find(|c| c.method == method.as_str())
    }
}

/// mAP and per-class AP of `state` on the world's test split. The random
/// stream depends only on `seed`, so methods are compared on identical draws.
pub fn evaluate(
    world: &World,
    state: &DetectorState,
    cfg: &ExperimentConfig,
    seed: u64,
) -> (f64, BTreeMap<usize, f64>) {
    let opts = SimOptions {
        with_noise: false,
        include_ground_truth: false,
        ..cfg.sim.clone()
    };
    let partial: Vec<MatchResult> = world
        .test
        .par_iter()
        .map(|img| {
            let r = simulate_detections(state, img, &cfg.calibration, &opts, &[seed, EVAL_STREAM]);
            let dets: Vec<EvalDetection> = r.reference.iter().map(EvalDetection::from).collect();
            match_detections(&dets, &img.objects, cfg.iou_threshold)
        })
        .collect();
    let mut total = MatchResult::default();
    for m in partial {
        total.merge(m);
    }
    let per_class = per_class_ap(&total, cfg.ap_variant);
    (mean_ap(&per_class).unwrap_or(0.0), per_class)
}

/// Runs one campaign: random initial set, then rounds of simulate, score,
/// select, train and evaluate.
pub fn run_campaign(world: &World, method: &Method, cfg: &ExperimentConfig, seed: u64) -> Result<MethodRun> {
    let pool_ids = world.pool_ids();
    let initial = InitialLabeled::Random {
        count: cfg.initial,
        seed,
    }
    .resolve(&pool_ids)?;
    let mut campaign = CampaignState::new(&pool_ids, &initial)?;
    let by_id: BTreeMap<&str, &super::SynthImage> = world.pool.iter().map(|i| (i.id.as_str(), i)).collect();
    let lookup = |id: &String| {
        by_id
            .get(id.as_str())
            .copied()
            .ok_or_else(|| Error::Simulation(format!("unknown image `{id}`")))
    };

    let mut detector = DetectorState::new(world.config.difficulty.clone())?
        .train_update(initial.iter().map(lookup).collect::<Result<Vec<_>>>()?)?;
    let (map, mut per_class) = evaluate(world, &detector, cfg, seed);
    let mut points = vec![(campaign.labeled.len(), map)];

    let method = Method {
        seed: method.seed.wrapping_add(seed),
        ..*method
    };
    for round in 1..=cfg.rounds {
        let unlabeled: Vec<&super::SynthImage> = campaign.unlabeled.iter().map(lookup).collect::<Result<Vec<_>>>()?;
        let records: Vec<_> = unlabeled
            .par_iter()
            .map(|img| simulate_detections(&detector, img, &cfg.calibration, &cfg.sim, &[seed, round as u64]))
            .collect();
        let scores = score_records(&method, &records);
        let (next, selected) = campaign.select_round(&scores, cfg.batch_size, cfg.undefined)?;
        campaign = next;
        detector = detector.train_update(selected.iter().map(lookup).collect::<Result<Vec<_>>>()?)?;
        let (map, pc) = evaluate(world, &detector, cfg, seed);
        per_class = pc;
        points.push((campaign.labeled.len(), map));
    }

    Ok(MethodRun {
        method: method.name,
        seed,
        curve: LearningCurve::new(method.name.as_str(), points)?,
        history: campaign.history,
        per_class_ap: per_class,
    })
}

/// Every configured method under every seed, plus seed-averaged curves.
/// Results do not depend on the number of worker threads.
pub fn run_experiment(world: &World, cfg: &ExperimentConfig) -> Result<ExperimentResult> {
    cfg.validate(world.pool.len())?;
    let jobs: Vec<(u64, &Method)> = cfg
        .seeds
        .iter()
        .flat_map(|s| cfg.methods.iter().map(move |m| (*s, m)))
        .collect();
    let runs = jobs
        .par_iter()
        .map(|(seed, m)| run_campaign(world, m, cfg, *seed))
        .collect::<Result<Vec<_>>>()?;
    let mean_curves = cfg
        .methods
        .iter()
        .map(|m| {
            let curves: Vec<LearningCurve> = runs
                .iter()
                .filter(|r| r.method == m.name)
                .map(|r| r.curve.clone())
                .collect();
            LearningCurve::mean(m.name.as_str(), &curves)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ExperimentResult { runs, mean_curves })
}
