//! DiT joint self-attention path: image-to-text column means, 1D smoothing,
//! core-token averaging.

use std::collections::BTreeSet;

use ndarray::Array1;

use super::kernel::{gaussian_kernel_1d, smooth_1d};
use super::{check_token_set, ScoringConfig};
use crate::error::{Error, Result};
use crate::io::AttnTensor;

/// Mean attention each text token receives from the `image_tokens` image rows
/// of a `(M+N, M+N)` joint matrix. Returns a length-`N` profile.
pub fn text_token_profile(joint: &AttnTensor, image_tokens: usize) -> Result<Array1<f64>> {
    let view = joint.view2()?;
    let (rows, cols) = view.dim();
    if rows != cols {
        return Err(Error::shape(format!("joint matrix must be square, got {rows}x{cols}")));
    }
    if image_tokens == 0 || image_tokens >= rows {
        return Err(Error::shape(format!(
            "image token count {image_tokens} must be in 1..{rows}"
        )));
    }
    let text = rows - image_tokens;
    let mut profile = Array1::<f64>::zeros(text);
    for row in view.rows().into_iter().take(image_tokens) {
        for (acc, &v) in profile.iter_mut().zip(row.iter().skip(image_tokens)) {
            *acc += v as f64;
        }
    }
    let inv = 1.0 / image_tokens as f64;
    profile.mapv_inplace(|v| v * inv);
    Ok(profile)
}

/// Core-token concentration for a DiT capture. Token indices address the
/// text segment, `0..N`.
pub fn score_dit(
    joint: &AttnTensor,
    image_tokens: usize,
    token_set: &BTreeSet<usize>,
    config: &ScoringConfig,
) -> Result<f64> {
    config.validate()?;
    let profile = text_token_profile(joint, image_tokens)?;
    check_token_set(token_set, profile.len(), false)?;
    let kernel = gaussian_kernel_1d(config.kernel_radius, config.sigma);
    let smoothed = smooth_1d(profile.view(), &kernel);
    let total: f64 = token_set.iter().map(|&i| smoothed[i]).sum();
    Ok(total / token_set.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn joint_with_block(m: usize, n: usize, c: f32) -> AttnTensor {
        let side = m + n;
        let mut data = vec![0.0f32; side * side];
        for r in 0..side {
            for col in 0..side {
                data[r * side + col] = if r < m && col >= m { c } else { 0.01 };
            }
        }
        AttnTensor::new(vec![side, side], data).unwrap()
    }

    #[test]
    fn constant_block_scores_constant() {
        let j = joint_with_block(4, 6, 0.125);
        let cfg = ScoringConfig::default();
        for set in [BTreeSet::from([0]), BTreeSet::from([1, 4, 5])] {
            assert_abs_diff_eq!(score_dit(&j, 4, &set, &cfg).unwrap(), 0.125, epsilon = 1e-7);
        }
    }

    #[test]
    fn hand_built_m2_n3() {
        #[rustfmt::skip]
        let data = vec![
            0.10f32, 0.20, 0.30, 0.25, 0.15,
            0.30,    0.10, 0.05, 0.35, 0.20,
            0.20,    0.20, 0.20, 0.20, 0.20,
            0.20,    0.20, 0.20, 0.20, 0.20,
            0.20,    0.20, 0.20, 0.20, 0.20,
        ];
        let j = AttnTensor::new(vec![5, 5], data.clone()).unwrap();
        let cfg = ScoringConfig::default();
        let got = score_dit(&j, 2, &BTreeSet::from([1]), &cfg).unwrap();

        let col = |c: usize| (data[c] as f64 + data[5 + c] as f64) / 2.0;
        let prof = [col(2), col(3), col(4)];
        let e = (-0.5f64).exp();
        let (wc, we) = (1.0 / (1.0 + 2.0 * e), e / (1.0 + 2.0 * e));
        let want = we * prof[0] + wc * prof[1] + we * prof[2];
        assert_abs_diff_eq!(got, want, epsilon = 1e-7);
    }

    #[test]
    fn shape_errors() {
        let j = joint_with_block(2, 3, 0.1);
        let cfg = ScoringConfig::default();
        let set = BTreeSet::from([0]);
        assert!(matches!(score_dit(&j, 5, &set, &cfg), Err(Error::Shape(_))));
        assert!(matches!(score_dit(&j, 0, &set, &cfg), Err(Error::Shape(_))));
        assert!(matches!(
            score_dit(&j, 2, &BTreeSet::from([3]), &cfg),
            Err(Error::Index { index: 3, .. })
        ));
        let rect = AttnTensor::new(vec![2, 3], vec![0.1; 6]).unwrap();
        assert!(matches!(score_dit(&rect, 1, &set, &cfg), Err(Error::Shape(_))));
    }
}
