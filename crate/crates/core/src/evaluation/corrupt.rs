//! Noisy-annotation robustness: replace the core tokens of a random subset
//! of prompts with random non-core tokens.

use rand::seq::index;
use rand::Rng;
use rand_core::SeedableRng;
use rand_xoshiro::Xoshiro256StarStar;
use serde::{Deserialize, Serialize};

use crate::annotation::{Annotations, TokenCategory};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorruptionReport {
    pub annotations: Vec<crate::annotation::TokenAnnotation>,
    pub corrupted: Vec<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

/// Picks `ceil(fraction * prompts)` prompts uniformly and replaces each of
/// their core indices with a distinct random index that is neither core nor
/// BOS/EOS. Drawn indices leave the other categories so the sets stay
/// disjoint. Deterministic in `rng_seed`.
pub fn corrupt_annotations(
    annotations: &Annotations,
    fraction: f64,
    rng_seed: u64,
) -> Result<CorruptionReport> {
    if !(0.0..=1.0).contains(&fraction) {
        return Err(Error::usage(format!("fraction must lie in [0, 1], got {fraction}")));
    }
    let mut rng = Xoshiro256StarStar::seed_from_u64(rng_seed);
    let mut items: Vec<_> = annotations.iter().cloned().collect();
    let count = ((fraction * items.len() as f64) - 1e-9).ceil().max(0.0) as usize;
    let mut chosen = index::sample(&mut rng, items.len(), count.min(items.len())).into_vec();
    chosen.sort_unstable();

    let mut corrupted = Vec::new();
    let mut warnings = Vec::new();
    for i in chosen {
        let a = &mut items[i];
        let candidates: Vec<usize> = (0..a.token_count)
            .filter(|&t| !a.is_special(t) && !a.core.contains(&t))
            .collect();
        if a.token_count <= 3 || candidates.is_empty() {
            warnings.push(format!(
                "prompt {:?} skipped: no replacement candidates (token_count {})",
                a.prompt_id, a.token_count
            ));
            continue;
        }
        let want = a.core.len();
        if candidates.len() < want {
            warnings.push(format!(
                "prompt {:?}: only {} replacement candidates for {} core tokens",
                a.prompt_id,
                candidates.len(),
                want
            ));
        }
        let drawn: Vec<usize> = if candidates.len() <= want {
            candidates.clone()
        } else {
            let mut picks = Vec::with_capacity(want);
            let mut pool = candidates.clone();
            for _ in 0..want {
                let j = rng.random_range(0..pool.len());
                picks.push(pool.swap_remove(j));
            }
            picks
        };
        for cat in [TokenCategory::Adjectives, TokenCategory::Verbs, TokenCategory::Prepositions] {
            let set = a.tokens_mut(cat);
            for t in &drawn {
                set.remove(t);
            }
        }
        a.core = drawn.into_iter().collect();
        corrupted.push(a.prompt_id.clone());
    }

    Ok(CorruptionReport {
        annotations: items,
        corrupted,
        warnings,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::annotation::TokenAnnotation;

    fn set(n: usize) -> Annotations {
        Annotations::new((0..n).map(|i| {
            let mut a = TokenAnnotation::new(format!("p{i}"), 12, [2, 5]);
            a.adjectives = [1, 3].into();
            a.verbs = [6].into();
            a
        }))
        .unwrap()
    }

    #[test]
    fn fraction_zero_is_identity() {
        let a = set(4);
        let r = corrupt_annotations(&a, 0.0, 7).unwrap();
        assert!(r.corrupted.is_empty());
        assert_eq!(r.annotations, a.iter().cloned().collect::<Vec<_>>());
    }

    #[test]
    fn fraction_one_corrupts_every_prompt() {
        let a = set(4);
        let r = corrupt_annotations(&a, 1.0, 7).unwrap();
        assert_eq!(r.corrupted.len(), 4);
        for (orig, new) in a.iter().zip(&r.annotations) {
            assert_eq!(new.core.len(), orig.core.len());
            assert!(new.core.is_disjoint(&orig.core));
            assert!(new.core.iter().all(|&t| t != 0 && t != 11));
            new.validate().unwrap();
        }
    }

    #[test]
    fn half_rounds_up_and_is_reproducible() {
        let a = set(5);
        let r1 = corrupt_annotations(&a, 0.5, 42).unwrap();
        let r2 = corrupt_annotations(&a, 0.5, 42).unwrap();
        assert_eq!(r1, r2);
        assert_eq!(r1.corrupted.len(), 3);
        let r3 = corrupt_annotations(&a, 0.5, 43).unwrap();
        assert_eq!(r3.corrupted.len(), 3);
    }

    #[test]
    fn short_prompts_are_skipped_with_warning() {
        let a = Annotations::new([TokenAnnotation::new("tiny", 3, [1])]).unwrap();
        let r = corrupt_annotations(&a, 1.0, 1).unwrap();
        assert!(r.corrupted.is_empty());
        assert_eq!(r.warnings.len(), 1);
        assert_eq!(r.annotations[0].core, [1].into());
    }

    #[test]
    fn bad_fraction_is_usage_error() {
        assert!(matches!(corrupt_annotations(&set(1), 1.5, 0), Err(Error::Usage(_))));
        assert!(corrupt_annotations(&set(1), f64::NAN, 0).is_err());
    }
}
