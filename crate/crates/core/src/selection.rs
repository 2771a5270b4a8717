//! Ranking, round-by-round selection, and selection-overlap analysis.

use std::cmp::Ordering;
use std::collections::{BTreeSet, HashSet};
use std::io::{BufRead, Write};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scoring::{Method, Score};

/// Where images with an undefined score go in a ranking.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UndefinedPlacement {
    #[default]
    Last,
    First,
}

/// Orders image ids by descending score. Undefined scores are grouped at the
/// end (or start); ties break by ascending image id.
pub fn rank(scores: &[Score], placement: UndefinedPlacement) -> Result<Vec<String>> {
    let mut seen = HashSet::with_capacity(scores.len());
    for s in scores {
        if !seen.insert(s.image_id.as_str()) {
            return Err(Error::DuplicateImage(s.image_id.clone()));
        }
    }
    let mut order: Vec<&Score> = scores.iter().collect();
    order.sort_by(|a, b| compare(a, b, placement));
    Ok(order.into_iter().map(|s| s.image_id.clone()).collect())
}

fn compare(a: &Score, b: &Score, placement: UndefinedPlacement) -> Ordering {
    let by_value = match (a.value, b.value) {
        (Some(x), Some(y)) => y.total_cmp(&x),
        (Some(_), None) => match placement {
            UndefinedPlacement::Last => Ordering::Less,
            UndefinedPlacement::First => Ordering::Greater,
        },
        (None, Some(_)) => match placement {
            UndefinedPlacement::Last => Ordering::Greater,
            UndefinedPlacement::First => Ordering::Less,
        },
        (None, None) => Ordering::Equal,
    };
    by_value.then_with(|| a.image_id.cmp(&b.image_id))
}

/// One line of a campaign history file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RoundRecord {
    pub round: usize,
    pub method: String,
    pub selected: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitialLabeled {
    Explicit(Vec<String>),
    Random { count: usize, seed: u64 },
}

impl InitialLabeled {
    /// Resolves to concrete ids. Random draws are uniform without replacement
    /// over the sorted pool, so the result does not depend on pool order.
    pub fn resolve(&self, pool_ids: &[String]) -> Result<Vec<String>> {
        match self {
            InitialLabeled::Explicit(ids) => Ok(ids.clone()),
            InitialLabeled::Random { count, seed } => {
                if *count > pool_ids.len() {
                    return Err(Error::Selection(format!(
                        "initial set of {count} exceeds pool of {}",
                        pool_ids.len()
                    )));
                }
                let mut ids: Vec<String> = pool_ids.to_vec();
                ids.sort();
                let mut rng = ChaCha8Rng::seed_from_u64(*seed);
                ids.shuffle(&mut rng);
                ids.truncate(*count);
                Ok(ids)
            }
        }
    }

    pub fn len(&self) -> usize {
        match self {
            InitialLabeled::Explicit(ids) => ids.len(),
            InitialLabeled::Random { count, .. } => *count,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CampaignConfig {
    pub method: Method,
    pub initial: InitialLabeled,
    pub batch_size: usize,
    pub rounds: usize,
    #[serde(default)]
    pub undefined: UndefinedPlacement,
}

impl CampaignConfig {
    pub fn validate(&self, pool_size: usize) -> Result<()> {
        self.method.validate()?;
        if self.batch_size == 0 {
            return Err(Error::Config("batch size must be positive".into()));
        }
        let needed = self.batch_size * self.rounds + self.initial.len();
        if needed > pool_size {
            return Err(Error::Config(format!(
                "budget of {} initial + {} x {} exceeds pool of {pool_size}",
                self.initial.len(),
                self.rounds,
                self.batch_size
            )));
        }
        Ok(())
    }
}

/// Labeled/unlabeled partition of a pool plus the append-only round history.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CampaignState {
    pub labeled: Vec<String>,
    pub unlabeled: BTreeSet<String>,
    pub history: Vec<RoundRecord>,
}

impl CampaignState {
    pub fn new(pool_ids: &[String], initial: &[String]) -> Result<Self> {
        let mut unlabeled: BTreeSet<String> = BTreeSet::new();
        for id in pool_ids {
            if !unlabeled.insert(id.clone()) {
                return Err(Error::DuplicateImage(id.clone()));
            }
        }
        let mut labeled = Vec::with_capacity(initial.len());
        for id in initial {
            if !unlabeled.remove(id) {
                return Err(Error::Selection(format!(
                    "initial id `{id}` is not in the pool or is repeated"
                )));
            }
            labeled.push(id.clone());
        }
        Ok(CampaignState {
            labeled,
            unlabeled,
            history: Vec::new(),
        })
    }

    pub fn pool_size(&self) -> usize {
        self.labeled.len() + self.unlabeled.len()
    }

    pub fn is_labeled(&self, id: &str) -> bool {
        self.labeled.iter().any(|l| l == id)
    }

    /// Moves the top `k` of the ranking into the labeled set and returns the
    /// new state with the selected ids. `self` is left untouched.
    pub fn select_round(
        &self,
        scores: &[Score],
        k: usize,
        placement: UndefinedPlacement,
    ) -> Result<(CampaignState, Vec<String>)> {
        if k > self.unlabeled.len() {
            return Err(Error::Selection(format!(
                "batch of {k} exceeds {} unlabeled images",
                self.unlabeled.len()
            )));
        }
        for s in scores {
            if !self.unlabeled.contains(&s.image_id) {
                return Err(Error::Selection(format!(
                    "score for `{}` which is labeled or not in the pool",
                    s.image_id
                )));
            }
        }
        let ranking = rank(scores, placement)?;
        if ranking.len() != self.unlabeled.len() {
            return Err(Error::Selection(format!(
                "{} scores for {} unlabeled images",
                ranking.len(),
                self.unlabeled.len()
            )));
        }
        if k == 0 {
            return Ok((self.clone(), Vec::new()));
        }
        let selected: Vec<String> = ranking.into_iter().take(k).collect();
        let mut next = self.clone();
        for id in &selected {
            next.unlabeled.remove(id);
            next.labeled.push(id.clone());
        }
        let method = scores.first().map(|s| s.method.to_string()).unwrap_or_default();
        next.history.push(RoundRecord {
            round: self.history.len() + 1,
            method,
            selected: selected.clone(),
        });
        Ok((next, selected))
    }
}

/// Percentage of `a` also present in `b`. Both must be non-empty and equal in size.
pub fn overlap_ratio(a: &[String], b: &[String]) -> Result<f64> {
    let sa: HashSet<&str> = a.iter().map(String::as_str).collect();
    let sb: HashSet<&str> = b.iter().map(String::as_str).collect();
    if sa.len() != a.len() || sb.len() != b.len() {
        return Err(Error::Selection("selection contains repeated ids".into()));
    }
    if sa.is_empty() || sa.len() != sb.len() {
        return Err(Error::Selection(format!(
            "overlap needs equal non-empty selections, got {} and {}",
            sa.len(),
            sb.len()
        )));
    }
    let shared = sa.intersection(&sb).count();
    Ok(100.0 * shared as f64 / sa.len() as f64)
}

/// Pairwise overlap ratios between named selections.
pub fn overlap_matrix(selections: &[(String, Vec<String>)]) -> Result<Vec<Vec<f64>>> {
    selections
        .iter()
        .map(|(_, a)| selections.iter().map(|(_, b)| overlap_ratio(a, b)).collect())
        .collect()
}

pub fn write_history<W: Write>(history: &[RoundRecord], mut out: W) -> Result<()> {
    for r in history {
        let line = serde_json::to_string(r)?;
        writeln!(out, "{line}").map_err(|e| Error::io("<history>", e))?;
    }
    Ok(())
}

pub fn read_history<R: BufRead>(input: R) -> Result<Vec<RoundRecord>> {
    let mut out = Vec::new();
    for (i, line) in input.lines().enumerate() {
        let line = line.map_err(|e| Error::io("<history>", e))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: RoundRecord = serde_json::from_str(&line).map_err(|e| Error::Line {
            line: i + 1,
            source: Box::new(Error::Json(e)),
        })?;
        out.push(rec);
    }
    Ok(out)
}
