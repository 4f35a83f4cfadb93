//! U-Net cross-attention path: aggregate, sharpen, smooth, pool.

use std::collections::BTreeSet;

use ndarray::{Array2, Array3, ArrayView3, Axis};

use super::kernel::{gaussian_kernel_2d, smooth_2d};
use super::{check_token_set, ScoringConfig};
use crate::error::{Error, Result};
use crate::io::AttnTensor;

/// Averages a stacked `(m, h*w, n)` capture over its first axis and lays the
/// query axis out as `(h, w)`.
pub fn aggregate_unet(stacked: &AttnTensor, spatial: (usize, usize)) -> Result<Array3<f64>> {
    let view = stacked.view3()?;
    let (m, q, n) = view.dim();
    let (h, w) = spatial;
    if h == 0 || w == 0 || h * w != q {
        return Err(Error::shape(format!(
            "spatial {h}x{w} does not match query dimension {q}"
        )));
    }
    let mut acc = Array2::<f64>::zeros((q, n));
    for map in view.axis_iter(Axis(0)) {
        acc.zip_mut_with(&map, |a, &v| *a += v as f64);
    }
    let inv = 1.0 / m as f64;
    acc.mapv_inplace(|v| v * inv);
    Ok(acc
        .into_shape_with_order((h, w, n))
        .expect("q = h * w"))
}

/// Temperature softmax over the token axis at every spatial location.
pub fn sharpen(aggregated: ArrayView3<'_, f64>, beta: f64) -> Array3<f64> {
    let mut out = aggregated.to_owned();
    for mut lane in out.lanes_mut(Axis(2)) {
        let max = lane.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        lane.mapv_inplace(|v| (beta * (v - max)).exp());
        let total = lane.sum();
        lane.mapv_inplace(|v| v / total);
    }
    out
}

/// Core-token concentration for an aggregated `(h, w, n)` map.
pub fn score_aggregated(
    aggregated: ArrayView3<'_, f64>,
    token_set: &BTreeSet<usize>,
    config: &ScoringConfig,
) -> Result<f64> {
    config.validate()?;
    let (h, w, n) = aggregated.dim();
    check_token_set(token_set, n, !config.include_special_tokens)?;

    let sharpened = sharpen(aggregated, config.beta);
    let kernel = gaussian_kernel_2d(config.kernel_radius, config.sigma);
    let cells = (h * w) as f64;
    let total: f64 = token_set
        .iter()
        .map(|&i| {
            let slice = sharpened.index_axis(Axis(2), i);
            let smoothed = if config.kernel_radius == 0 {
                slice.to_owned()
            } else {
                smooth_2d(slice, &kernel)
            };
            smoothed.sum() / cells
        })
        .sum();
    Ok(total / token_set.len() as f64)
}

/// Score of a stacked `(m, h*w, n)` capture.
pub fn score_unet(
    stacked: &AttnTensor,
    spatial: (usize, usize),
    token_set: &BTreeSet<usize>,
    config: &ScoringConfig,
) -> Result<f64> {
    let aggregated = aggregate_unet(stacked, spatial)?;
    score_aggregated(aggregated.view(), token_set, config)
}

/// Score of an `(h, w, n)` tensor that was averaged upstream.
pub fn score_unet_aggregated(
    aggregated: &AttnTensor,
    token_set: &BTreeSet<usize>,
    config: &ScoringConfig,
) -> Result<f64> {
    let map = aggregated.view3()?.mapv(|v| v as f64);
    score_aggregated(map.view(), token_set, config)
}
