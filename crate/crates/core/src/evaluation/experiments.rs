//! Experiment drivers: agreement of one pool with its quality table, the
//! timestep sweep and the token-type ablation.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::metrics::{ndcg, overlap_rate, NdcgOptions, NdcgResult, QualitySet, QualityTable};
use crate::annotation::{Annotations, TokenCategory};
use crate::error::{Error, Result};
use crate::io::SeedRecord;
use crate::scoring::{score_pool, ScoringConfig};
use crate::selection::rank;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalOptions {
    /// K for the overlap rate and the selected-quality mean.
    pub k: usize,
    pub ndcg: NdcgOptions,
}

impl Default for EvalOptions {
    fn default() -> Self {
        Self {
            k: 3,
            ndcg: NdcgOptions::default(),
        }
    }
}

/// How well one scored pool agrees with its external quality ranking.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Agreement {
    pub prompt_id: String,
    pub timestep_index: usize,
    pub token_category: TokenCategory,
    pub order: Vec<u64>,
    pub selected: Vec<u64>,
    pub truth_top_k: Vec<u64>,
    pub overlap: f64,
    pub ndcg: NdcgResult,
    pub mean_selected_quality: f64,
}

/// Restricts `quality` to the seeds present in the pool.
fn quality_for_pool(quality: &QualityTable, seeds: &[u64]) -> Result<QualityTable> {
    let mut scores = BTreeMap::new();
    for &s in seeds {
        let v = quality.scores.get(&s).ok_or_else(|| {
            Error::usage(format!(
                "quality table for {:?} has no entry for seed {s}",
                quality.prompt_id
            ))
        })?;
        scores.insert(s, *v);
    }
    QualityTable::new(quality.prompt_id.clone(), scores)
}

/// Scores, ranks and compares one pool.
pub fn evaluate_pool(
    records: &[SeedRecord],
    annotations: &Annotations,
    category: TokenCategory,
    scoring: &ScoringConfig,
    quality: &QualityTable,
    options: &EvalOptions,
) -> Result<Agreement> {
    let table = score_pool(records, annotations, category, scoring)?;
    if table.prompt_id != quality.prompt_id {
        return Err(Error::usage(format!(
            "pool is for prompt {:?} but quality table is for {:?}",
            table.prompt_id, quality.prompt_id
        )));
    }
    let k = options.k.min(table.len());
    let ranking = rank(&table, k)?;
    let order = ranking.order();
    let quality = quality_for_pool(quality, &order)?;
    let truth_top_k = quality.top_k(k)?;
    let overlap = overlap_rate(&ranking.selected, &truth_top_k)?;
    let ndcg = ndcg(&order, &quality, options.ndcg)?;
    let mean_selected_quality =
        ranking.selected.iter().map(|s| quality.scores[s]).sum::<f64>() / k as f64;
    Ok(Agreement {
        prompt_id: table.prompt_id,
        timestep_index: table.timestep_index,
        token_category: category,
        order,
        selected: ranking.selected,
        truth_top_k,
        overlap,
        ndcg,
        mean_selected_quality,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub timestep_index: usize,
    pub ndcg: Option<f64>,
    pub overlap: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

/// One row per timestep for a single prompt. A timestep whose pool failed
/// to load or score yields a row carrying the error; the sweep continues.
pub fn timestep_sweep(
    pools: &BTreeMap<usize, Result<Vec<SeedRecord>>>,
    annotations: &Annotations,
    category: TokenCategory,
    scoring: &ScoringConfig,
    quality: &QualityTable,
    options: &EvalOptions,
) -> Result<Vec<SweepRow>> {
    if pools.len() < 2 {
        return Err(Error::usage(format!(
            "a timestep sweep needs at least 2 distinct timesteps, got {}",
            pools.len()
        )));
    }
    scoring.validate()?;
    let entries: Vec<_> = pools.iter().collect();
    let rows = entries
        .par_iter()
        .map(|(&t, pool)| {
            let outcome = pool.as_ref().map_err(|e| e.to_string()).and_then(|records| {
                evaluate_pool(records, annotations, category, scoring, quality, options)
                    .map_err(|e| e.to_string())
            });
            match outcome {
                Ok(a) => SweepRow {
                    timestep_index: t,
                    ndcg: Some(a.ndcg.ndcg),
                    overlap: Some(a.overlap),
                    error: None,
                },
                Err(msg) => SweepRow {
                    timestep_index: t,
                    ndcg: None,
                    overlap: None,
                    error: Some(msg),
                },
            }
        })
        .collect();
    Ok(rows)
}

/// Per-category means across prompts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub category: TokenCategory,
    pub prompts: usize,
    pub ndcg: Option<f64>,
    pub overlap: Option<f64>,
    pub mean_selected_quality: Option<f64>,
    /// Prompts with no tokens in this category.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub absent: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationReport {
    pub rows: Vec<AblationRow>,
    pub cells: Vec<Agreement>,
}

fn mean(values: impl Iterator<Item = f64>) -> Option<f64> {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    (n > 0).then(|| sum / n as f64)
}

/// Runs the same pools under each token category. `records` may span
/// several prompts, each at a single timestep. A category that is empty for
/// a prompt marks that cell absent instead of failing.
pub fn token_ablation(
    records: &[SeedRecord],
    annotations: &Annotations,
    categories: &[TokenCategory],
    scoring: &ScoringConfig,
    quality: &QualitySet,
    options: &EvalOptions,
) -> Result<AblationReport> {
    if categories.is_empty() {
        return Err(Error::usage("no token categories requested"));
    }
    scoring.validate()?;
    let mut pools: BTreeMap<&str, Vec<SeedRecord>> = BTreeMap::new();
    for r in records {
        pools.entry(r.prompt_id()).or_default().push(r.clone());
    }
    if pools.is_empty() {
        return Err(Error::usage("no records to evaluate"));
    }

    let jobs: Vec<(TokenCategory, &str)> = categories
        .iter()
        .flat_map(|&c| pools.keys().map(move |&p| (c, p)))
        .collect();
    let cells: Vec<Result<Option<Agreement>>> = jobs
        .par_iter()
        .map(|&(category, prompt)| {
            if annotations.require(prompt)?.tokens(category).is_empty() {
                return Ok(None);
            }
            let q = quality.require(prompt)?;
            evaluate_pool(&pools[prompt], annotations, category, scoring, q, options).map(Some)
        })
        .collect();

    let mut rows = Vec::with_capacity(categories.len());
    let mut kept = Vec::new();
    let mut results = jobs.iter().zip(cells);
    for &category in categories {
        let mut present = Vec::new();
        let mut absent = Vec::new();
        for ((_, prompt), cell) in results.by_ref().take(pools.len()) {
            match cell? {
                Some(a) => present.push(a),
                None => absent.push(prompt.to_string()),
            }
        }
        rows.push(AblationRow {
            category,
            prompts: present.len(),
            ndcg: mean(present.iter().map(|a| a.ndcg.ndcg)),
            overlap: mean(present.iter().map(|a| a.overlap)),
            mean_selected_quality: mean(present.iter().map(|a| a.mean_selected_quality)),
            absent,
        });
        kept.extend(present);
    }
    Ok(AblationReport { rows, cells: kept })
}
