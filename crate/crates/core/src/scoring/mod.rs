//! Core-token concentration scores for U-Net and DiT captures.

pub mod dit;
pub mod kernel;
pub mod unet;

use std::collections::{BTreeMap, BTreeSet};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::annotation::{Annotations, TokenCategory};
use crate::error::{Error, Result};
use crate::io::{SeedRecord, TensorKind};

pub use dit::{score_dit, text_token_profile};
pub use kernel::{gaussian_kernel_1d, gaussian_kernel_2d, smooth_1d, smooth_2d, Kernel1d, Kernel2d};
pub use unet::{aggregate_unet, score_aggregated, score_unet, score_unet_aggregated, sharpen};

/// Softmax temperature and smoothing parameters. One `(kernel_radius, sigma)`
/// pair serves both the 2D and the 1D smoothing paths.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoringConfig {
    pub beta: f64,
    pub kernel_radius: usize,
    pub sigma: f64,
    /// Allow BOS (index 0) and EOS (index n-1) in U-Net token sets.
    pub include_special_tokens: bool,
}

impl Default for ScoringConfig {
    fn default() -> Self {
        Self {
            beta: 100.0,
            kernel_radius: 1,
            sigma: 1.0,
            include_special_tokens: false,
        }
    }
}

impl ScoringConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.beta.is_finite() && self.beta > 0.0) {
            return Err(Error::usage(format!("beta must be positive, got {}", self.beta)));
        }
        if !(self.sigma.is_finite() && self.sigma > 0.0) {
            return Err(Error::usage(format!("sigma must be positive, got {}", self.sigma)));
        }
        Ok(())
    }
}

pub(crate) fn check_token_set(
    token_set: &BTreeSet<usize>,
    token_count: usize,
    exclude_special: bool,
) -> Result<()> {
    if token_set.is_empty() {
        return Err(Error::usage("token set is empty"));
    }
    for &i in token_set {
        if i >= token_count {
            return Err(Error::Index {
                index: i,
                detail: format!("is outside 0..{token_count}"),
            });
        }
        if exclude_special && (i == 0 || i + 1 == token_count) {
            return Err(Error::Index {
                index: i,
                detail: "is a BOS/EOS position (set include_special_tokens to allow it)".into(),
            });
        }
    }
    Ok(())
}

/// Per-seed scores for one prompt at one screening step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreTable {
    pub prompt_id: String,
    pub timestep_index: usize,
    pub token_category: TokenCategory,
    pub config: ScoringConfig,
    pub scores: BTreeMap<u64, f64>,
}

impl ScoreTable {
    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }
}

/// Scores one record, dispatching on its tensor kind.
pub fn score_record(
    record: &SeedRecord,
    token_set: &BTreeSet<usize>,
    config: &ScoringConfig,
) -> Result<f64> {
    let meta = &record.meta;
    let score = match meta.tensor_kind {
        TensorKind::StackedQn => {
            let spatial = meta
                .spatial
                .ok_or_else(|| Error::shape("stacked_qn record lacks spatial"))?;
            score_unet(&record.tensor, spatial, token_set, config)
        }
        TensorKind::AggregatedHwn => score_unet_aggregated(&record.tensor, token_set, config),
        TensorKind::DitJoint => {
            let m = meta
                .image_token_count
                .ok_or_else(|| Error::shape("dit_joint record lacks image_token_count"))?;
            score_dit(&record.tensor, m, token_set, config)
        }
    }
    .map_err(|e| e.in_record(meta.label()))?;

    if !(score.is_finite() && (0.0..=1.0).contains(&score)) {
        return Err(Error::Internal(format!(
            "score {score} for {} is outside [0, 1]",
            meta.label()
        )));
    }
    Ok(score)
}

/// Scores every seed of one screening pool. Seeds are scored in parallel;
/// the table is keyed by seed so its content is independent of scheduling.
pub fn score_pool(
    records: &[SeedRecord],
    annotations: &Annotations,
    token_category: TokenCategory,
    config: &ScoringConfig,
) -> Result<ScoreTable> {
    config.validate()?;
    let first = records
        .first()
        .ok_or_else(|| Error::usage("cannot score an empty pool"))?;
    let prompt_id = first.meta.prompt_id.clone();
    let timestep_index = first.meta.timestep_index;
    for r in records {
        if r.meta.prompt_id != prompt_id {
            return Err(Error::usage(format!(
                "pool mixes prompts {prompt_id:?} and {:?}",
                r.meta.prompt_id
            )));
        }
        if r.meta.timestep_index != timestep_index {
            return Err(Error::usage(format!(
                "pool for {prompt_id:?} mixes timesteps {timestep_index} and {}",
                r.meta.timestep_index
            )));
        }
    }

    let annotation = annotations.require(&prompt_id)?;
    let token_set = annotation.tokens(token_category);
    if token_set.is_empty() {
        return Err(Error::usage(format!(
            "prompt {prompt_id:?} has no {token_category} tokens"
        )));
    }
    for r in records {
        if r.meta.token_count != annotation.token_count {
            return Err(Error::Consistency {
                record: r.meta.label(),
                detail: format!(
                    "token_count {} disagrees with annotation token_count {}",
                    r.meta.token_count, annotation.token_count
                ),
            });
        }
    }

    let results: Vec<Result<f64>> = records
        .par_iter()
        .map(|r| score_record(r, token_set, config))
        .collect();

    let mut scores = BTreeMap::new();
    for (r, res) in records.iter().zip(results) {
        if scores.insert(r.seed(), res?).is_some() {
            return Err(Error::usage(format!(
                "seed {} appears twice in pool {prompt_id:?}",
                r.seed()
            )));
        }
    }

    Ok(ScoreTable {
        prompt_id,
        timestep_index,
        token_category,
        config: *config,
        scores,
    })
}
