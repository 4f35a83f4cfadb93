//! Synthetic attention pools with a planted seed-quality signal.
//!
//! # Generator
//!
//! All randomness comes from Xoshiro256** seeded through SplitMix64
//! (`seed_from_u64(rng_seed)`). A uniform draw is
//! `(next_u64() >> 11) * 2^-53`, in `[0, 1)`. One draw is consumed per
//! logit, in seed order and then row-major tensor order, whether or not
//! `noise_scale` is zero.
//!
//! # Planted model
//!
//! Seed `i` of `N` gets the bonus `delta * i / (N - 1)` (zero when `N = 1`).
//! Every logit is `noise_scale * u`; core-token logits also get the bonus.
//! Each attention row is the softmax of its logits, so rows are
//! non-negative and sum to one.
//!
//! * U-Net: a `(m, h*w, n)` stack. Every location row is planted.
//! * DiT: a `(M + N, M + N)` joint matrix. Only image-query rows are planted,
//!   on the text-key columns of the core tokens.

mod suite;

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};

use rand_core::{RngCore, SeedableRng};
use rand_xoshiro::Xoshiro256StarStar;
use serde::{Deserialize, Serialize};

use crate::annotation::{Annotations, TokenAnnotation, TokenCategory};
use crate::error::{Error, Result};
use crate::evaluation::QualityTable;
use crate::io::{write_manifest, write_tensor_file, AttnTensor, ModelFamily, SeedManifest, SeedRecord, TensorKind};

pub use suite::{generate_fixture_suite, generate_invalid_fixtures, FixtureExpectation, FIXTURE_NAMES};

/// Portable uniform stream used by every generator in this module.
#[derive(Debug, Clone)]
pub struct UniformStream(Xoshiro256StarStar);

impl UniformStream {
    pub fn new(seed: u64) -> Self {
        Self(Xoshiro256StarStar::seed_from_u64(seed))
    }

    /// Uniform in `[0, 1)` with 53 random bits.
    pub fn next_f64(&mut self) -> f64 {
        (self.0.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "model_family", rename_all = "lowercase")]
pub enum SynthLayout {
    Unet { spatial: (usize, usize), stacked: usize },
    Dit { image_tokens: usize, hooked_layer: usize },
}

impl SynthLayout {
    pub fn family(&self) -> ModelFamily {
        match self {
            SynthLayout::Unet { .. } => ModelFamily::Unet,
            SynthLayout::Dit { .. } => ModelFamily::Dit,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub prompt_id: String,
    pub pool_size: usize,
    pub token_count: usize,
    pub core: BTreeSet<usize>,
    /// Bonus of the best seed; seeds are spaced linearly from 0.
    pub planted_gap: f64,
    pub noise_scale: f64,
    pub rng_seed: u64,
    pub layout: SynthLayout,
    /// Seed `i` of the pool is `seed_base + i`.
    pub seed_base: u64,
    pub timestep_index: usize,
    pub total_steps: usize,
}

impl SynthSpec {
    /// A 10-seed U-Net pool captured at step 10 of 50.
    pub fn unet(prompt_id: impl Into<String>, spatial: (usize, usize), token_count: usize, core: impl IntoIterator<Item = usize>) -> Self {
        Self {
            prompt_id: prompt_id.into(),
            pool_size: 10,
            token_count,
            core: core.into_iter().collect(),
            planted_gap: 0.5,
            noise_scale: 0.01,
            rng_seed: 0,
            layout: SynthLayout::Unet { spatial, stacked: 1 },
            seed_base: 0,
            timestep_index: 10,
            total_steps: 50,
        }
    }

    /// A 10-seed DiT pool hooked at block 12, captured at step 10 of 50.
    pub fn dit(prompt_id: impl Into<String>, image_tokens: usize, token_count: usize, core: impl IntoIterator<Item = usize>) -> Self {
        Self {
            layout: SynthLayout::Dit {
                image_tokens,
                hooked_layer: 12,
            },
            ..Self::unet(prompt_id, (1, 1), token_count, core)
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::usage(format!("synth spec {:?}: {msg}", self.prompt_id)));
        if self.pool_size == 0 {
            return bad("pool_size must be at least 1".into());
        }
        if !(self.planted_gap.is_finite() && self.planted_gap >= 0.0) {
            return bad(format!("planted_gap must be finite and >= 0, got {}", self.planted_gap));
        }
        if !(self.noise_scale.is_finite() && self.noise_scale >= 0.0) {
            return bad(format!("noise_scale must be finite and >= 0, got {}", self.noise_scale));
        }
        if self.token_count == 0 {
            return bad("token_count must be at least 1".into());
        }
        if self.core.is_empty() {
            return bad("core token set is empty".into());
        }
        if let Some(&i) = self.core.iter().find(|&&i| i >= self.token_count) {
            return bad(format!("core index {i} is outside 0..{}", self.token_count));
        }
        if !(1 <= self.timestep_index && self.timestep_index <= self.total_steps) {
            return bad(format!(
                "timestep_index {} outside 1..={}",
                self.timestep_index, self.total_steps
            ));
        }
        match self.layout {
            SynthLayout::Unet { spatial: (h, w), stacked } => {
                if h == 0 || w == 0 || stacked == 0 {
                    return bad("spatial sizes and stacked count must be at least 1".into());
                }
                if self.core.iter().any(|&i| i == 0 || i + 1 == self.token_count) {
                    return bad("U-Net core tokens may not include BOS/EOS".into());
                }
            }
            SynthLayout::Dit { image_tokens, .. } => {
                if image_tokens == 0 {
                    return bad("image_tokens must be at least 1".into());
                }
            }
        }
        if self.seed_base.checked_add(self.pool_size as u64 - 1).is_none() {
            return bad("seed range overflows u64".into());
        }
        Ok(())
    }

    pub fn bonus(&self, index: usize) -> f64 {
        if self.pool_size == 1 {
            0.0
        } else {
            self.planted_gap * index as f64 / (self.pool_size - 1) as f64
        }
    }

    pub fn seeds(&self) -> impl Iterator<Item = u64> + '_ {
        (0..self.pool_size as u64).map(move |i| self.seed_base + i)
    }

    /// Relevance of each seed is its bonus.
    pub fn quality_table(&self) -> Result<QualityTable> {
        let scores = self.seeds().enumerate().map(|(i, s)| (s, self.bonus(i))).collect();
        QualityTable::new(self.prompt_id.clone(), scores)
    }

    /// Core tokens plus the remaining non-special indices split round-robin
    /// into adjectives, verbs and prepositions.
    pub fn annotation(&self) -> TokenAnnotation {
        let mut a = TokenAnnotation::new(self.prompt_id.clone(), self.token_count, self.core.iter().copied());
        let rest = [TokenCategory::Adjectives, TokenCategory::Verbs, TokenCategory::Prepositions];
        let n = self.token_count;
        let free = (1..n.saturating_sub(1)).filter(|i| !self.core.contains(i));
        for (j, i) in free.enumerate() {
            a.tokens_mut(rest[j % 3]).insert(i);
        }
        a
    }

    fn meta(&self, seed: u64) -> SeedManifest {
        let (tensor_kind, spatial, image_token_count, hooked_layer) = match self.layout {
            SynthLayout::Unet { spatial, .. } => (TensorKind::StackedQn, Some(spatial), None, None),
            SynthLayout::Dit {
                image_tokens,
                hooked_layer,
            } => (TensorKind::DitJoint, None, Some(image_tokens), Some(hooked_layer)),
        };
        SeedManifest {
            prompt_id: self.prompt_id.clone(),
            prompt_text: format!("synthetic prompt {}", self.prompt_id),
            seed,
            timestep_index: self.timestep_index,
            total_steps: self.total_steps,
            model_family: self.layout.family(),
            tensor_kind,
            spatial,
            token_count: self.token_count,
            image_token_count,
            hooked_layer,
            tensor_path: PathBuf::from(format!(
                "tensors/{}_t{}_s{}.attn",
                self.prompt_id, self.timestep_index, seed
            )),
        }
    }
}

fn softmax_row(logits: &[f64], out: &mut Vec<f32>) {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let z: f64 = logits.iter().map(|&l| (l - max).exp()).sum();
    out.extend(logits.iter().map(|&l| ((l - max).exp() / z) as f32));
}

fn generate_tensor(spec: &SynthSpec, bonus: f64, rng: &mut UniformStream) -> Result<AttnTensor> {
    let n = spec.token_count;
    let eps = spec.noise_scale;
    let mut logits = vec![0.0f64; n];
    match spec.layout {
        SynthLayout::Unet {
            spatial: (h, w),
            stacked,
        } => {
            let rows = stacked * h * w;
            let mut data = Vec::with_capacity(rows * n);
            for _ in 0..rows {
                for (i, l) in logits.iter_mut().enumerate() {
                    *l = eps * rng.next_f64();
                    if spec.core.contains(&i) {
                        *l += bonus;
                    }
                }
                softmax_row(&logits, &mut data);
            }
            AttnTensor::new(vec![stacked, h * w, n], data)
        }
        SynthLayout::Dit { image_tokens, .. } => {
            let side = image_tokens + n;
            let mut row = vec![0.0f64; side];
            let mut data = Vec::with_capacity(side * side);
            for r in 0..side {
                for (c, l) in row.iter_mut().enumerate() {
                    *l = eps * rng.next_f64();
                    if r < image_tokens && c >= image_tokens && spec.core.contains(&(c - image_tokens)) {
                        *l += bonus;
                    }
                }
                softmax_row(&row, &mut data);
            }
            AttnTensor::new(vec![side, side], data)
        }
    }
}

/// A generated pool and everything needed to evaluate it.
#[derive(Debug, Clone)]
pub struct SynthPool {
    pub spec: SynthSpec,
    pub records: Vec<SeedRecord>,
    /// Seeds by descending bonus; ties ascend by seed.
    pub ground_truth: Vec<u64>,
    /// Relevance of each seed is its planted bonus.
    pub quality: QualityTable,
    pub annotation: TokenAnnotation,
}

impl SynthPool {
    pub fn annotations(&self) -> Annotations {
        Annotations::new([self.annotation.clone()]).expect("synth annotation is valid")
    }
}

/// Generates one pool. Pure in `spec`.
pub fn generate_pool(spec: &SynthSpec) -> Result<SynthPool> {
    spec.validate()?;
    let mut rng = UniformStream::new(spec.rng_seed);
    let mut records = Vec::with_capacity(spec.pool_size);
    for (i, seed) in spec.seeds().enumerate() {
        let tensor = generate_tensor(spec, spec.bonus(i), &mut rng)?;
        records.push(SeedRecord::new(spec.meta(seed), tensor)?);
    }
    let mut ground_truth: Vec<u64> = spec.seeds().collect();
    if spec.planted_gap > 0.0 {
        ground_truth.reverse();
    }
    Ok(SynthPool {
        spec: spec.clone(),
        records,
        ground_truth,
        quality: spec.quality_table()?,
        annotation: spec.annotation(),
    })
}

/// One pool per timestep. Timestep `j` (ascending) of `T` uses
/// `planted_gap * (j + 1) / T` and `rng_seed + j`; the quality table is the
/// one of the full gap.
pub fn generate_sweep(spec: &SynthSpec, timesteps: &[usize]) -> Result<Vec<SynthPool>> {
    let mut ts: Vec<usize> = timesteps.to_vec();
    ts.sort_unstable();
    ts.dedup();
    if ts.len() != timesteps.len() {
        return Err(Error::usage("sweep timesteps must be distinct"));
    }
    spec.validate()?;
    let full = spec.quality_table()?;
    let count = ts.len() as f64;
    ts.iter()
        .enumerate()
        .map(|(j, &t)| {
            let s = SynthSpec {
                planted_gap: spec.planted_gap * (j + 1) as f64 / count,
                rng_seed: spec.rng_seed.wrapping_add(j as u64),
                timestep_index: t,
                ..spec.clone()
            };
            let mut pool = generate_pool(&s)?;
            pool.quality = full.clone();
            Ok(pool)
        })
        .collect()
}

fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| Error::Internal(e.to_string()))?;
    fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
}

/// Writes pools (sharing one prompt or not) into `dir`: `tensors/`,
/// `manifest.json`, `annotations.json`, `quality.json` and
/// `ground_truth.json`. Returns the manifest path.
pub fn write_pools(pools: &[SynthPool], dir: impl AsRef<Path>) -> Result<PathBuf> {
    let dir = dir.as_ref();
    let tensors = dir.join("tensors");
    fs::create_dir_all(&tensors).map_err(|e| Error::io(&tensors, e))?;

    let mut metas = Vec::new();
    let mut annotations = std::collections::BTreeMap::new();
    let mut quality = std::collections::BTreeMap::new();
    let mut truth = Vec::new();
    for pool in pools {
        for r in &pool.records {
            write_tensor_file(&r.tensor, dir.join(&r.meta.tensor_path))?;
            metas.push(r.meta.clone());
        }
        annotations.insert(pool.spec.prompt_id.clone(), pool.annotation.clone());
        quality.insert(pool.spec.prompt_id.clone(), pool.quality.clone());
        truth.push(serde_json::json!({
            "prompt_id": pool.spec.prompt_id,
            "timestep_index": pool.spec.timestep_index,
            "order": pool.ground_truth,
        }));
    }
    let manifest = dir.join("manifest.json");
    write_manifest(&manifest, &metas)?;
    write_json(&dir.join("annotations.json"), &annotations.values().collect::<Vec<_>>())?;
    write_json(&dir.join("quality.json"), &quality.values().collect::<Vec<_>>())?;
    write_json(&dir.join("ground_truth.json"), &truth)?;
    write_json(
        &dir.join("spec.json"),
        &pools.iter().map(|p| &p.spec).collect::<Vec<_>>(),
    )?;
    Ok(manifest)
}
