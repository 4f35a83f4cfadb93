//! Ranking agreement: overlap rate and NDCG against external quality scores.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};
use crate::selection::rank_scores;

/// Externally supplied per-seed quality (higher is better), e.g. a reward
/// model score. Opaque to the engine.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QualityTable {
    pub prompt_id: String,
    pub scores: BTreeMap<u64, f64>,
}

impl QualityTable {
    pub fn new(prompt_id: impl Into<String>, scores: BTreeMap<u64, f64>) -> Result<Self> {
        let t = Self {
            prompt_id: prompt_id.into(),
            scores,
        };
        t.validate()?;
        Ok(t)
    }

    pub fn validate(&self) -> Result<()> {
        if self.scores.is_empty() {
            return Err(Error::Validation(format!(
                "quality table for {:?} is empty",
                self.prompt_id
            )));
        }
        if let Some((seed, v)) = self.scores.iter().find(|(_, v)| !v.is_finite()) {
            return Err(Error::Validation(format!(
                "quality for seed {seed} of {:?} is not finite ({v})",
                self.prompt_id
            )));
        }
        Ok(())
    }

    /// Seeds of the `k` best quality scores (ties ascend by seed).
    pub fn top_k(&self, k: usize) -> Result<Vec<u64>> {
        Ok(rank_scores(&self.scores, k)?.selected)
    }
}

/// Quality tables keyed by prompt id.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct QualitySet(BTreeMap<String, QualityTable>);

impl QualitySet {
    pub fn new(tables: impl IntoIterator<Item = QualityTable>) -> Result<Self> {
        let mut map = BTreeMap::new();
        for t in tables {
            t.validate()?;
            let id = t.prompt_id.clone();
            if map.insert(id.clone(), t).is_some() {
                return Err(Error::Schema(format!("duplicate quality table for {id:?}")));
            }
        }
        Ok(Self(map))
    }

    /// Accepts a single table, an array of tables or `{"tables": [...]}`.
    pub fn from_json(text: &str) -> Result<Self> {
        let schema = |e: serde_json::Error| Error::Schema(format!("quality: {e}"));
        let mut doc: Value = serde_json::from_str(text).map_err(schema)?;
        if let Some(tables) = doc.get_mut("tables") {
            doc = tables.take();
        }
        if doc.is_array() {
            Self::new(serde_json::from_value::<Vec<QualityTable>>(doc).map_err(schema)?)
        } else {
            Self::new([serde_json::from_value::<QualityTable>(doc).map_err(schema)?])
        }
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn get(&self, prompt_id: &str) -> Option<&QualityTable> {
        self.0.get(prompt_id)
    }

    pub fn require(&self, prompt_id: &str) -> Result<&QualityTable> {
        self.get(prompt_id)
            .ok_or_else(|| Error::usage(format!("no quality table for prompt {prompt_id:?}")))
    }

    pub fn iter(&self) -> impl Iterator<Item = &QualityTable> {
        self.0.values()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Fraction of seeds shared by two equally long top-K lists.
pub fn overlap_rate(predicted: &[u64], truth: &[u64]) -> Result<f64> {
    if predicted.is_empty() {
        return Err(Error::usage("overlap needs K >= 1"));
    }
    if predicted.len() != truth.len() {
        return Err(Error::usage(format!(
            "top-K lists differ in length ({} vs {})",
            predicted.len(),
            truth.len()
        )));
    }
    let a: HashSet<u64> = predicted.iter().copied().collect();
    let b: HashSet<u64> = truth.iter().copied().collect();
    if a.len() != predicted.len() || b.len() != truth.len() {
        return Err(Error::usage("top-K list contains a duplicate seed"));
    }
    Ok(a.intersection(&b).count() as f64 / predicted.len() as f64)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Gain {
    /// `rel`
    #[default]
    Linear,
    /// `2^rel - 1`
    Exponential,
}

impl Gain {
    fn apply(self, rel: f64) -> f64 {
        match self {
            Gain::Linear => rel,
            Gain::Exponential => rel.exp2() - 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct NdcgOptions {
    pub gain: Gain,
    /// Score only the first `cutoff` positions; `None` scores the full list.
    pub cutoff: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NdcgResult {
    pub ndcg: f64,
    pub dcg: f64,
    pub idcg: f64,
    /// Amount subtracted from every relevance when the pool minimum was
    /// negative.
    pub relevance_shift: Option<f64>,
}

fn discounted(gains: impl Iterator<Item = f64>, cutoff: usize) -> f64 {
    gains
        .take(cutoff)
        .enumerate()
        .map(|(i, g)| g / ((i + 2) as f64).log2())
        .sum()
}

/// NDCG of `predicted` (best first) against `relevance`. Returns 1 when
/// every relevance is zero.
pub fn ndcg(predicted: &[u64], relevance: &QualityTable, options: NdcgOptions) -> Result<NdcgResult> {
    relevance.validate()?;
    let seeds: BTreeSet<u64> = predicted.iter().copied().collect();
    if seeds.len() != predicted.len()
        || predicted.len() != relevance.scores.len()
        || !seeds.iter().all(|s| relevance.scores.contains_key(s))
    {
        return Err(Error::usage(format!(
            "predicted order is not a permutation of the {} seeds in the quality table for {:?}",
            relevance.scores.len(),
            relevance.prompt_id
        )));
    }

    let min = relevance.scores.values().cloned().fold(f64::INFINITY, f64::min);
    let shift = (min < 0.0).then_some(min);
    let rel = |seed: &u64| relevance.scores[seed] - shift.unwrap_or(0.0);

    let cutoff = options.cutoff.unwrap_or(predicted.len());
    let dcg = discounted(predicted.iter().map(|s| options.gain.apply(rel(s))), cutoff);

    let mut ideal: Vec<f64> = relevance.scores.keys().map(rel).collect();
    ideal.sort_by(|a, b| b.total_cmp(a));
    let idcg = discounted(ideal.into_iter().map(|r| options.gain.apply(r)), cutoff);

    let value = if idcg == 0.0 { 1.0 } else { dcg / idcg };
    Ok(NdcgResult {
        ndcg: value,
        dcg,
        idcg,
        relevance_shift: shift,
    })
}
