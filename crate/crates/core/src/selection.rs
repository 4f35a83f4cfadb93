//! Seed ranking, top-K retention and coarse NFE accounting.
//!
//! One NFE is one full forward pass of the denoising model. Screening `N`
//! seeds to step `t` and finishing `K` of them to step `T` costs
//! `(N*t + K*(T-t)) / K` NFE per kept image; on DiT backbones the last
//! screening step stops after block `l*` of `L` and is charged `l*/L`.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::ModelFamily;
use crate::scoring::ScoreTable;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RankedSeed {
    pub seed: u64,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankingResult {
    /// Descending by score; ties ascend by seed.
    pub ordering: Vec<RankedSeed>,
    pub selected: Vec<u64>,
    pub k: usize,
    /// Groups of two or more seeds that share an exact score.
    pub tie_groups: Vec<Vec<u64>>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

impl RankingResult {
    pub fn order(&self) -> Vec<u64> {
        self.ordering.iter().map(|r| r.seed).collect()
    }
}

/// Orders seeds by descending score, ascending seed on ties, and keeps the
/// first `k`. A `k` larger than the pool keeps the whole pool and records a
/// warning.
pub fn rank_scores(scores: &BTreeMap<u64, f64>, k: usize) -> Result<RankingResult> {
    if k < 1 {
        return Err(Error::usage("K must be at least 1"));
    }
    if scores.is_empty() {
        return Err(Error::usage("cannot rank an empty score table"));
    }
    if let Some((seed, s)) = scores.iter().find(|(_, s)| !s.is_finite()) {
        return Err(Error::Validation(format!("seed {seed} has non-finite score {s}")));
    }

    let mut ordering: Vec<RankedSeed> = scores
        .iter()
        .map(|(&seed, &score)| RankedSeed { seed, score })
        .collect();
    ordering.sort_by(|a, b| b.score.total_cmp(&a.score).then(a.seed.cmp(&b.seed)));

    let tie_groups = ordering
        .chunk_by(|a, b| a.score == b.score)
        .filter(|g| g.len() > 1)
        .map(|g| g.iter().map(|r| r.seed).collect())
        .collect();

    let mut warnings = Vec::new();
    if k > ordering.len() {
        warnings.push(format!(
            "K = {k} exceeds pool size {}; keeping the whole pool",
            ordering.len()
        ));
    }
    let selected = ordering.iter().take(k).map(|r| r.seed).collect();

    Ok(RankingResult {
        ordering,
        selected,
        k,
        tie_groups,
        warnings,
    })
}

pub fn rank(table: &ScoreTable, k: usize) -> Result<RankingResult> {
    rank_scores(&table.scores, k).map_err(|e| match e {
        Error::Usage(msg) => Error::Usage(format!("{msg} (prompt {:?})", table.prompt_id)),
        other => other,
    })
}

fn check_schedule(pool: usize, keep: usize, t: usize, total: usize) -> Result<()> {
    if !(1 <= t && t <= total) {
        return Err(Error::usage(format!("need 1 <= t <= T, got t = {t}, T = {total}")));
    }
    if !(1 <= keep && keep <= pool) {
        return Err(Error::usage(format!("need 1 <= K <= N, got K = {keep}, N = {pool}")));
    }
    Ok(())
}

/// Coarse NFE per kept image for U-Net screening.
pub fn nfe_unet(pool: usize, keep: usize, t: usize, total: usize) -> Result<f64> {
    check_schedule(pool, keep, t, total)?;
    let (n, k, t, tt) = (pool as f64, keep as f64, t as f64, total as f64);
    Ok((n * t + k * (tt - t)) / k)
}

/// Coarse NFE per kept image for DiT screening with a truncated final
/// screening step that stops after block `hooked_layer` of `total_layers`.
pub fn nfe_dit(
    pool: usize,
    keep: usize,
    t: usize,
    total: usize,
    hooked_layer: usize,
    total_layers: usize,
) -> Result<f64> {
    check_schedule(pool, keep, t, total)?;
    if !(1 <= hooked_layer && hooked_layer <= total_layers) {
        return Err(Error::usage(format!(
            "need 1 <= l* <= L, got l* = {hooked_layer}, L = {total_layers}"
        )));
    }
    let (n, k, t, tt) = (pool as f64, keep as f64, t as f64, total as f64);
    let partial = hooked_layer as f64 / total_layers as f64;
    Ok((n * (t - 1.0 + partial) + k * (tt - t)) / k)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NfeReport {
    pub pool_size: usize,
    pub keep: usize,
    pub screen_step: usize,
    pub total_steps: usize,
    pub model_family: ModelFamily,
    pub hooked_layer: Option<usize>,
    pub total_layers: Option<usize>,
    pub nfe_per_image: f64,
}

impl NfeReport {
    /// `layers` is `(l*, L)` and is required for DiT.
    pub fn compute(
        pool_size: usize,
        keep: usize,
        screen_step: usize,
        total_steps: usize,
        model_family: ModelFamily,
        layers: Option<(usize, usize)>,
    ) -> Result<Self> {
        let nfe_per_image = match (model_family, layers) {
            (ModelFamily::Unet, _) => nfe_unet(pool_size, keep, screen_step, total_steps)?,
            (ModelFamily::Dit, Some((l, big_l))) => {
                nfe_dit(pool_size, keep, screen_step, total_steps, l, big_l)?
            }
            (ModelFamily::Dit, None) => {
                return Err(Error::usage("DiT NFE needs the hooked layer l* and layer count L"))
            }
        };
        let (hooked_layer, total_layers) = match model_family {
            ModelFamily::Dit => (layers.map(|l| l.0), layers.map(|l| l.1)),
            ModelFamily::Unet => (None, None),
        };
        Ok(Self {
            pool_size,
            keep,
            screen_step,
            total_steps,
            model_family,
            hooked_layer,
            total_layers,
            nfe_per_image,
        })
    }
}

/// Seed-selection and noise-optimization methods with documented coarse NFE.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BaselineMethod {
    Random,
    Golden,
    Ns,
    Initno,
    Ae,
    Nd,
    Npnet,
    Core2,
}

impl BaselineMethod {
    pub const ALL: [BaselineMethod; 8] = [
        BaselineMethod::Random,
        BaselineMethod::Golden,
        BaselineMethod::Ns,
        BaselineMethod::Initno,
        BaselineMethod::Ae,
        BaselineMethod::Nd,
        BaselineMethod::Npnet,
        BaselineMethod::Core2,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            BaselineMethod::Random => "random",
            BaselineMethod::Golden => "golden",
            BaselineMethod::Ns => "ns",
            BaselineMethod::Initno => "initno",
            BaselineMethod::Ae => "ae",
            BaselineMethod::Nd => "nd",
            BaselineMethod::Npnet => "npnet",
            BaselineMethod::Core2 => "core2",
        }
    }
}

impl fmt::Display for BaselineMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for BaselineMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let lower = s.to_ascii_lowercase();
        BaselineMethod::ALL
            .into_iter()
            .find(|m| m.as_str() == lower)
            .ok_or_else(|| Error::usage(format!("unknown baseline method {s:?}")))
    }
}

/// Constants the baseline formulas draw on. Each formula reads only the
/// fields it needs and reports the first missing one.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct BaselineParams {
    /// Denoising steps per generated image (`T`).
    pub total_steps: Option<u32>,
    /// Validation prompts used for the golden-seed search.
    pub validation_prompts: Option<u32>,
    /// Candidate seeds (golden) or noise candidates (ns) per prompt.
    pub candidates: Option<u32>,
    /// Images reported per prompt.
    pub images_per_prompt: Option<u32>,
    /// DDIM inversion steps per candidate (ns).
    pub inversion_steps: Option<u32>,
    /// Restart rounds of initial-noise optimization (initno).
    pub restarts: Option<u32>,
    /// Optimization steps per restart round (initno).
    pub optimization_steps: Option<u32>,
    /// Denoising steps that carry an extra attention/loss pass (ae).
    pub guided_steps: Option<u32>,
    /// Outer noise-optimization epochs (nd).
    pub epochs: Option<u32>,
}

impl BaselineParams {
    /// The comparison settings used for the published NFE column.
    pub fn reference_setting() -> Self {
        Self {
            total_steps: Some(50),
            validation_prompts: Some(100),
            candidates: Some(10),
            images_per_prompt: Some(3),
            inversion_steps: Some(50),
            restarts: Some(5),
            optimization_steps: Some(10),
            guided_steps: Some(25),
            epochs: Some(10),
        }
    }

    /// Sets a field by its name (or its short symbol).
    pub fn set(&mut self, key: &str, value: u32) -> Result<()> {
        let slot = match key {
            "T" | "total_steps" | "steps" => &mut self.total_steps,
            "V" | "validation_prompts" => &mut self.validation_prompts,
            "N" | "C" | "candidates" | "seeds" => &mut self.candidates,
            "K" | "images_per_prompt" | "keep" => &mut self.images_per_prompt,
            "inversion_steps" => &mut self.inversion_steps,
            "R" | "restarts" => &mut self.restarts,
            "optimization_steps" | "opt_steps" => &mut self.optimization_steps,
            "guided_steps" => &mut self.guided_steps,
            "E" | "epochs" => &mut self.epochs,
            other => return Err(Error::usage(format!("unknown baseline parameter {other:?}"))),
        };
        *slot = Some(value);
        Ok(())
    }

    fn need(value: Option<u32>, name: &str, method: BaselineMethod) -> Result<f64> {
        match value {
            Some(v) if v > 0 => Ok(v as f64),
            Some(_) => Err(Error::usage(format!("{method}: parameter {name} must be positive"))),
            None => Err(Error::usage(format!("{method}: missing parameter {name}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineNfe {
    pub method: BaselineMethod,
    pub nfe: f64,
    /// `†` extra evaluation/optimization overhead, `*` separately trained module.
    pub flags: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
}

pub fn nfe_baseline(method: BaselineMethod, params: &BaselineParams) -> Result<BaselineNfe> {
    use BaselineMethod::*;
    let need = |v, name| BaselineParams::need(v, name, method);
    let steps = need(params.total_steps, "total_steps")?;

    let (nfe, flags, notes): (f64, &str, Vec<&str>) = match method {
        Random => (steps, "", vec![]),
        Golden => {
            let v = need(params.validation_prompts, "validation_prompts")?;
            let s = need(params.candidates, "candidates")?;
            let k = need(params.images_per_prompt, "images_per_prompt")?;
            (
                steps + v * s * steps / (v * k),
                "†",
                vec!["validation-set seed search amortized over reported images; reward-model evaluation during the search is not counted"],
            )
        }
        Ns => {
            let c = need(params.candidates, "candidates")?;
            let inv = need(params.inversion_steps, "inversion_steps")?;
            let k = need(params.images_per_prompt, "images_per_prompt")?;
            (c * (steps + inv) / k, "", vec![])
        }
        Initno => {
            let r = need(params.restarts, "restarts")?;
            let o = need(params.optimization_steps, "optimization_steps")?;
            (
                r * o + steps,
                "†",
                vec!["upper bound: threshold-based early stopping can end optimization sooner"],
            )
        }
        Ae => {
            let g = need(params.guided_steps, "guided_steps")?;
            (
                steps + g,
                "†",
                vec!["threshold-triggered iterative refinement steps are not counted"],
            )
        }
        Nd => {
            let e = need(params.epochs, "epochs")?;
            (
                e * steps + steps,
                "†",
                vec!["gradient-cache updates and VQA-based scoring are not counted"],
            )
        }
        Npnet => (
            steps,
            "†*",
            vec!["one auxiliary noise-prediction pass before sampling; its training cost is not counted"],
        ),
        Core2 => (
            steps,
            "†*",
            vec!["a refinement branch runs inside every step; its module training cost is not counted"],
        ),
    };

    Ok(BaselineNfe {
        method,
        nfe,
        flags: flags.to_string(),
        notes: notes.into_iter().map(String::from).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn scores(pairs: &[(u64, f64)]) -> BTreeMap<u64, f64> {
        pairs.iter().cloned().collect()
    }

    #[test]
    fn rank_orders_and_selects() {
        let r = rank_scores(&scores(&[(1, 0.3), (2, 0.5), (3, 0.4)]), 2).unwrap();
        assert_eq!(r.order(), vec![2, 3, 1]);
        assert_eq!(r.selected, vec![2, 3]);
        assert!(r.tie_groups.is_empty());
    }

    #[test]
    fn ties_break_by_smaller_seed() {
        let r = rank_scores(&scores(&[(7, 0.4), (2, 0.4)]), 1).unwrap();
        assert_eq!(r.selected, vec![2]);
        assert_eq!(r.tie_groups, vec![vec![2, 7]]);
    }

    #[test]
    fn k_bounds() {
        let s = scores(&[(1, 0.1), (2, 0.2)]);
        assert!(matches!(rank_scores(&s, 0), Err(Error::Usage(_))));
        let r = rank_scores(&s, 5).unwrap();
        assert_eq!(r.selected.len(), 2);
        assert_eq!(r.warnings.len(), 1);
        assert!(rank_scores(&BTreeMap::new(), 1).is_err());
    }

    #[test]
    fn nfe_formulas() {
        assert_abs_diff_eq!(nfe_unet(10, 3, 10, 50).unwrap(), 220.0 / 3.0, epsilon = 1e-12);
        assert_abs_diff_eq!(nfe_unet(10, 3, 10, 50).unwrap(), 73.33, epsilon = 0.01);
        assert_eq!(nfe_unet(7, 7, 13, 50).unwrap(), 50.0);
        assert_eq!(nfe_unet(10, 1, 10, 50).unwrap(), 140.0);

        assert_abs_diff_eq!(nfe_dit(10, 3, 10, 50, 12, 30).unwrap(), 71.33, epsilon = 0.01);
        assert_abs_diff_eq!(
            nfe_dit(10, 3, 10, 50, 30, 30).unwrap(),
            nfe_unet(10, 3, 10, 50).unwrap(),
            epsilon = 1e-12
        );
        assert_abs_diff_eq!(
            nfe_dit(10, 3, 10, 50, 18, 38).unwrap(),
            (10.0 * (9.0 + 18.0 / 38.0) + 120.0) / 3.0,
            epsilon = 1e-12
        );
        assert_abs_diff_eq!(nfe_dit(10, 3, 10, 50, 18, 38).unwrap(), 71.58, epsilon = 0.005);
    }

    #[test]
    fn nfe_bounds_are_usage_errors() {
        assert!(nfe_unet(10, 3, 0, 50).is_err());
        assert!(nfe_unet(10, 3, 51, 50).is_err());
        assert!(nfe_unet(10, 11, 10, 50).is_err());
        assert!(nfe_unet(10, 0, 10, 50).is_err());
        assert!(nfe_dit(10, 3, 10, 50, 0, 30).is_err());
        assert!(nfe_dit(10, 3, 10, 50, 31, 30).is_err());
    }

    #[test]
    fn baseline_reference_values() {
        let p = BaselineParams::reference_setting();
        let get = |m| nfe_baseline(m, &p).unwrap();
        assert_abs_diff_eq!(get(BaselineMethod::Golden).nfe, 216.7, epsilon = 0.05);
        assert_eq!(get(BaselineMethod::Golden).flags, "†");
        assert_abs_diff_eq!(get(BaselineMethod::Ns).nfe, 333.3, epsilon = 0.05);
        assert_eq!(get(BaselineMethod::Random).nfe, 50.0);
        assert_eq!(get(BaselineMethod::Initno).nfe, 100.0);
        assert_eq!(get(BaselineMethod::Ae).nfe, 75.0);
        assert_eq!(get(BaselineMethod::Nd).nfe, 550.0);
        assert_eq!(get(BaselineMethod::Npnet).nfe, 50.0);
        assert_eq!(get(BaselineMethod::Core2).flags, "†*");
    }

    #[test]
    fn baseline_missing_param_is_named() {
        let p = BaselineParams {
            total_steps: Some(50),
            ..Default::default()
        };
        match nfe_baseline(BaselineMethod::Golden, &p) {
            Err(Error::Usage(msg)) => assert!(msg.contains("validation_prompts"), "{msg}"),
            other => panic!("{other:?}"),
        }
        assert!(nfe_baseline(BaselineMethod::Random, &BaselineParams::default()).is_err());
    }

    proptest! {
        #[test]
        fn rank_is_permutation_and_monotone_invariant(
            vals in prop::collection::vec(0u8..20, 1..15),
            k in 1usize..20,
        ) {
            let s: BTreeMap<u64, f64> = vals.iter().enumerate()
                .map(|(i, &v)| (i as u64 * 3 + 1, v as f64 / 20.0)).collect();
            let r = rank_scores(&s, k).unwrap();
            let mut seeds = r.order();
            prop_assert_eq!(r.selected.len(), k.min(s.len()));
            prop_assert_eq!(&r.selected[..], &seeds[..r.selected.len()]);
            for w in r.ordering.windows(2) {
                prop_assert!(w[0].score > w[1].score || (w[0].score == w[1].score && w[0].seed < w[1].seed));
            }
            let transformed: BTreeMap<u64, f64> = s.iter().map(|(&k, &v)| (k, (3.0 * v).exp() - 7.0)).collect();
            let r2 = rank_scores(&transformed, k).unwrap();
            prop_assert_eq!(r2.order(), r.order());
            seeds.sort();
            prop_assert_eq!(seeds, s.keys().cloned().collect::<Vec<_>>());
        }

        #[test]
        fn nfe_monotonicity(pool in 1usize..40, keep_frac in 0.0f64..1.0, t in 1usize..50, l in 1usize..30) {
            let keep = ((pool as f64 * keep_frac) as usize).max(1);
            let total = 50;
            let base = nfe_unet(pool, keep, t, total).unwrap();
            prop_assert!(base >= total as f64 - 1e-9);
            prop_assert_eq!(base == total as f64, pool == keep);
            prop_assert!(nfe_unet(pool + 1, keep, t, total).unwrap() > base);
            if pool > keep && t < total {
                prop_assert!(nfe_unet(pool, keep, t + 1, total).unwrap() > base);
            }
            if l < 30 {
                prop_assert!(nfe_dit(pool, keep, t, total, l, 30).unwrap() < base);
            }
        }
    }
}
