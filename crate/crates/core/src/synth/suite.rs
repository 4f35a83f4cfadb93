//! The frozen fixture suite and hand-corrupted inputs for `validate`.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{generate_pool, generate_sweep, write_json, write_pools, SynthLayout, SynthPool, SynthSpec};
use crate::error::{Error, Result};
use crate::io::{write_manifest, write_tensor_file, AttnTensor, ModelFamily, SeedManifest, TensorKind};
use crate::oracle;
use crate::scoring::ScoringConfig;
use crate::selection::rank_scores;

pub const FIXTURE_NAMES: [&str; 6] = [
    "trivial",
    "planted-strong",
    "noise-only",
    "dit-variant",
    "degenerate-shapes",
    "timestep-sweep",
];

/// Oracle scores and the resulting top 3 for one pool of a fixture.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FixtureExpectation {
    pub prompt_id: String,
    pub timestep_index: usize,
    pub config: ScoringConfig,
    pub oracle_scores: BTreeMap<u64, f64>,
    pub expected_top3: Vec<u64>,
    pub ground_truth: Vec<u64>,
}

fn fixture_pools(name: &str) -> Result<Vec<SynthPool>> {
    let unet = |prompt: &str, spatial, stacked, n, core: &[usize], gap, noise, seed, pool| SynthSpec {
        pool_size: pool,
        planted_gap: gap,
        noise_scale: noise,
        rng_seed: seed,
        layout: SynthLayout::Unet { spatial, stacked },
        ..SynthSpec::unet(prompt, spatial, n, core.iter().copied())
    };
    Ok(match name {
        "trivial" => vec![generate_pool(&unet("trivial", (2, 2), 1, 5, &[2], 0.0, 0.0, 1, 4))?],
        "planted-strong" => vec![generate_pool(&unet("planted", (8, 8), 2, 16, &[3, 4], 0.5, 0.01, 2, 10))?],
        "noise-only" => vec![generate_pool(&unet("noise", (4, 4), 1, 8, &[3], 0.0, 1.0, 3, 10))?],
        "dit-variant" => vec![generate_pool(&SynthSpec {
            rng_seed: 4,
            ..SynthSpec::dit("dit", 16, 8, [2, 3])
        })?],
        "degenerate-shapes" => vec![generate_pool(&unet("degenerate", (1, 5), 1, 4, &[1, 2], 0.5, 0.01, 5, 3))?],
        "timestep-sweep" => generate_sweep(&unet("sweep", (4, 4), 1, 8, &[3], 0.5, 0.05, 6, 10), &[10, 20, 30, 40])?,
        other => return Err(Error::usage(format!("unknown fixture {other:?}"))),
    })
}

fn oracle_scores(pool: &SynthPool, config: &ScoringConfig) -> BTreeMap<u64, f64> {
    let core: Vec<usize> = pool.spec.core.iter().copied().collect();
    let n = pool.spec.token_count;
    pool.records
        .iter()
        .map(|r| {
            let data = r.tensor.data();
            let s = match pool.spec.layout {
                SynthLayout::Unet { spatial: (h, w), stacked } => oracle::unet_score(
                    data,
                    stacked,
                    h,
                    w,
                    n,
                    &core,
                    config.beta,
                    config.kernel_radius,
                    config.sigma,
                ),
                SynthLayout::Dit { image_tokens, .. } => oracle::dit_score(
                    data,
                    image_tokens + n,
                    image_tokens,
                    &core,
                    config.kernel_radius,
                    config.sigma,
                ),
            };
            (r.seed(), s)
        })
        .collect()
}

/// Writes every fixture under `dir/<name>/` together with an
/// `expected.json` of oracle scores. Returns the manifest paths.
pub fn generate_fixture_suite(dir: impl AsRef<Path>) -> Result<Vec<PathBuf>> {
    let dir = dir.as_ref();
    let config = ScoringConfig::default();
    let mut manifests = Vec::new();
    for name in FIXTURE_NAMES {
        let pools = fixture_pools(name)?;
        let sub = dir.join(name);
        manifests.push(write_pools(&pools, &sub)?);
        let expected = pools
            .iter()
            .map(|p| {
                let oracle_scores = oracle_scores(p, &config);
                let expected_top3 = rank_scores(&oracle_scores, 3)?.selected;
                Ok(FixtureExpectation {
                    prompt_id: p.spec.prompt_id.clone(),
                    timestep_index: p.spec.timestep_index,
                    config,
                    oracle_scores,
                    expected_top3,
                    ground_truth: p.ground_truth.clone(),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        write_json(&sub.join("expected.json"), &expected)?;
    }
    Ok(manifests)
}

/// Writes three inputs that `validate` must reject, one per subdirectory:
/// `truncated` (a tensor file cut short), `row-sum` (a DiT row summing to
/// 1.2) and `shape-mismatch` (a 16x16x76 map declared with 77 tokens).
/// Returns `(name, manifest path)` pairs.
pub fn generate_invalid_fixtures(dir: impl AsRef<Path>) -> Result<Vec<(String, PathBuf)>> {
    let dir = dir.as_ref();
    let mut out = Vec::new();

    let truncated = dir.join("truncated");
    let pool = generate_pool(&SynthSpec {
        pool_size: 2,
        ..SynthSpec::unet("trunc", (4, 4), 8, [3])
    })?;
    let manifest = write_pools(std::slice::from_ref(&pool), &truncated)?;
    let victim = truncated.join(&pool.records[1].meta.tensor_path);
    let bytes = fs::read(&victim).map_err(|e| Error::io(&victim, e))?;
    fs::write(&victim, &bytes[..bytes.len() - 6]).map_err(|e| Error::io(&victim, e))?;
    out.push(("truncated".to_string(), manifest));

    let row_sum = dir.join("row-sum");
    let pool = generate_pool(&SynthSpec {
        pool_size: 1,
        ..SynthSpec::dit("rowsum", 16, 8, [2])
    })?;
    let manifest = write_pools(std::slice::from_ref(&pool), &row_sum)?;
    let rec = &pool.records[0];
    let side = 24;
    let mut data = rec.tensor.data().to_vec();
    let sum: f64 = data[..side].iter().map(|&v| v as f64).sum();
    for v in &mut data[..side] {
        *v = (*v as f64 * 1.2 / sum) as f32;
    }
    write_tensor_file(&AttnTensor::new(vec![side, side], data)?, row_sum.join(&rec.meta.tensor_path))?;
    out.push(("row-sum".to_string(), manifest));

    let mismatch = dir.join("shape-mismatch");
    fs::create_dir_all(mismatch.join("tensors")).map_err(|e| Error::io(&mismatch, e))?;
    let meta = SeedManifest {
        prompt_id: "mismatch".into(),
        prompt_text: "synthetic prompt mismatch".into(),
        seed: 0,
        timestep_index: 10,
        total_steps: 50,
        model_family: ModelFamily::Unet,
        tensor_kind: TensorKind::AggregatedHwn,
        spatial: Some((16, 16)),
        token_count: 77,
        image_token_count: None,
        hooked_layer: None,
        tensor_path: PathBuf::from("tensors/mismatch_s0.attn"),
    };
    let tensor = AttnTensor::new(vec![16, 16, 76], vec![1.0 / 76.0; 16 * 16 * 76])?;
    write_tensor_file(&tensor, mismatch.join(&meta.tensor_path))?;
    let manifest = mismatch.join("manifest.json");
    write_manifest(&manifest, &[meta])?;
    out.push(("shape-mismatch".to_string(), manifest));

    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::io::{validate_manifest, DiagnosticKind};

    #[test]
    fn invalid_fixtures_each_yield_one_diagnostic() {
        let dir = tempfile::tempdir().unwrap();
        let fixtures = generate_invalid_fixtures(dir.path()).unwrap();
        let want = [
            DiagnosticKind::Truncated,
            DiagnosticKind::RowSum,
            DiagnosticKind::Shape,
        ];
        for ((name, manifest), kind) in fixtures.iter().zip(want) {
            let report = validate_manifest(manifest);
            assert_eq!(report.diagnostics.len(), 1, "{name}: {:?}", report.diagnostics);
            assert_eq!(report.diagnostics[0].kind, kind, "{name}");
        }
    }

    #[test]
    fn suite_is_clean_and_planted_fixture_recovers_truth() {
        let dir = tempfile::tempdir().unwrap();
        let manifests = generate_fixture_suite(dir.path()).unwrap();
        assert_eq!(manifests.len(), FIXTURE_NAMES.len());
        for m in &manifests {
            let report = validate_manifest(m);
            assert!(report.is_clean(), "{}: {:?}", m.display(), report.diagnostics);
        }
        let text = fs::read_to_string(dir.path().join("planted-strong/expected.json")).unwrap();
        let exp: Vec<FixtureExpectation> = serde_json::from_str(&text).unwrap();
        assert_eq!(exp[0].expected_top3, exp[0].ground_truth[..3]);
    }
}
