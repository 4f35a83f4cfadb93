//! Normalized Gaussian kernels and reflection-padded smoothing.
//!
//! Padding mirrors about the border element without repeating it
//! (`-1 -> 1`, `len -> len - 2`), folding repeatedly when the kernel is
//! wider than the axis. A length-1 axis replicates its single element.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};

/// Maps a possibly out-of-range offset onto `0..len` by mirror reflection.
pub fn reflect_index(i: isize, len: usize) -> usize {
    debug_assert!(len > 0);
    if len == 1 {
        return 0;
    }
    let period = 2 * (len as isize - 1);
    let m = i.rem_euclid(period);
    if m < len as isize {
        m as usize
    } else {
        (period - m) as usize
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Kernel1d {
    radius: usize,
    weights: Array1<f64>,
}

impl Kernel1d {
    pub fn radius(&self) -> usize {
        self.radius
    }

    pub fn weights(&self) -> ArrayView1<'_, f64> {
        self.weights.view()
    }

    /// Weight at signed offset `d` from the center.
    pub fn at(&self, d: isize) -> f64 {
        self.weights[(d + self.radius as isize) as usize]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Kernel2d {
    radius: usize,
    weights: Array2<f64>,
}

impl Kernel2d {
    pub fn radius(&self) -> usize {
        self.radius
    }

    pub fn weights(&self) -> ArrayView2<'_, f64> {
        self.weights.view()
    }

    pub fn at(&self, dy: isize, dx: isize) -> f64 {
        let r = self.radius as isize;
        self.weights[[(dy + r) as usize, (dx + r) as usize]]
    }
}

/// `2k+1` taps proportional to `exp(-d^2 / (2 sigma^2))`, summing to 1.
pub fn gaussian_kernel_1d(k: usize, sigma: f64) -> Kernel1d {
    assert!(sigma > 0.0 && sigma.is_finite(), "sigma must be positive and finite");
    let denom = 2.0 * sigma * sigma;
    let r = k as isize;
    let mut w = Array1::from_iter((-r..=r).map(|d| (-((d * d) as f64) / denom).exp()));
    let total = w.sum();
    w /= total;
    Kernel1d { radius: k, weights: w }
}

/// `(2k+1) x (2k+1)` taps proportional to `exp(-(dy^2 + dx^2) / (2 sigma^2))`,
/// summing to 1.
pub fn gaussian_kernel_2d(k: usize, sigma: f64) -> Kernel2d {
    assert!(sigma > 0.0 && sigma.is_finite(), "sigma must be positive and finite");
    let denom = 2.0 * sigma * sigma;
    let size = 2 * k + 1;
    let r = k as isize;
    let mut w = Array2::from_shape_fn((size, size), |(y, x)| {
        let dy = y as isize - r;
        let dx = x as isize - r;
        (-((dy * dy + dx * dx) as f64) / denom).exp()
    });
    let total = w.sum();
    w /= total;
    Kernel2d { radius: k, weights: w }
}

/// Reflection-padded 2D convolution of `field` with a symmetric kernel.
///
/// Each output is accumulated as `center + sum(w * (tap - center))` and
/// clamped to the range of its taps, so constant fields come back bit-exact
/// and no output leaves the min/max of the values it mixes.
pub fn smooth_2d(field: ArrayView2<'_, f64>, kernel: &Kernel2d) -> Array2<f64> {
    let (h, w) = field.dim();
    if kernel.radius == 0 {
        let c = kernel.weights[[0, 0]];
        return field.mapv(|v| v * c);
    }
    let r = kernel.radius as isize;
    let rows: Vec<Vec<usize>> = (0..h as isize)
        .map(|y| (-r..=r).map(|d| reflect_index(y + d, h)).collect())
        .collect();
    let cols: Vec<Vec<usize>> = (0..w as isize)
        .map(|x| (-r..=r).map(|d| reflect_index(x + d, w)).collect())
        .collect();

    Array2::from_shape_fn((h, w), |(y, x)| {
        let center = field[[y, x]];
        let (mut lo, mut hi) = (center, center);
        let mut acc = 0.0;
        for (ky, &sy) in rows[y].iter().enumerate() {
            for (kx, &sx) in cols[x].iter().enumerate() {
                let v = field[[sy, sx]];
                lo = lo.min(v);
                hi = hi.max(v);
                acc += kernel.weights[[ky, kx]] * (v - center);
            }
        }
        (center + acc).clamp(lo, hi)
    })
}

/// Reflection-padded 1D convolution; same accumulation scheme as [`smooth_2d`].
pub fn smooth_1d(signal: ArrayView1<'_, f64>, kernel: &Kernel1d) -> Array1<f64> {
    let n = signal.len();
    let r = kernel.radius as isize;
    Array1::from_shape_fn(n, |i| {
        let center = signal[i];
        let (mut lo, mut hi) = (center, center);
        let mut acc = 0.0;
        for d in -r..=r {
            let v = signal[reflect_index(i as isize + d, n)];
            lo = lo.min(v);
            hi = hi.max(v);
            acc += kernel.at(d) * (v - center);
        }
        (center + acc).clamp(lo, hi)
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use ndarray::array;
    use proptest::prelude::*;

    #[test]
    fn reflection_convention() {
        assert_eq!(reflect_index(-1, 5), 1);
        assert_eq!(reflect_index(-2, 5), 2);
        assert_eq!(reflect_index(5, 5), 3);
        assert_eq!(reflect_index(6, 5), 2);
        assert_eq!(reflect_index(2, 5), 2);
        // wider than the axis: keeps folding
        assert_eq!(reflect_index(-3, 2), 1);
        assert_eq!(reflect_index(3, 2), 1);
        assert_eq!(reflect_index(-7, 1), 0);
    }

    #[test]
    fn radius_zero_is_unit() {
        assert_eq!(gaussian_kernel_2d(0, 1.0).weights(), array![[1.0]]);
        assert_eq!(gaussian_kernel_1d(0, 3.0).weights(), array![1.0]);
    }

    #[test]
    fn k1_sigma1_closed_form() {
        let e = std::f64::consts::E;
        let norm = 1.0 + 4.0 * e.powf(-0.5) + 4.0 * e.powf(-1.0);
        let center = 1.0 / norm;
        let kern = gaussian_kernel_2d(1, 1.0);
        assert_abs_diff_eq!(kern.at(0, 0), center, epsilon = 1e-15);
        assert_abs_diff_eq!(kern.at(0, 1), center * e.powf(-0.5), epsilon = 1e-15);
        assert_abs_diff_eq!(kern.at(-1, -1), center * e.powf(-1.0), epsilon = 1e-15);
        assert_abs_diff_eq!(kern.at(0, 0), 0.204180, epsilon = 1e-6);
        assert_abs_diff_eq!(kern.at(1, 0), 0.123841, epsilon = 1e-6);
        assert_abs_diff_eq!(kern.at(1, 1), 0.075114, epsilon = 1e-6);
        assert_abs_diff_eq!(kern.weights().sum(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn delta_3x3_folds_back_under_reflection() {
        let kern = gaussian_kernel_2d(1, 1.0);
        let mut f = Array2::zeros((3, 3));
        f[[1, 1]] = 1.0;
        let out = smooth_2d(f.view(), &kern);
        let (c, e, k) = (kern.at(0, 0), kern.at(0, 1), kern.at(1, 1));
        assert_abs_diff_eq!(out[[1, 1]], c, epsilon = 1e-15);
        assert_abs_diff_eq!(out[[0, 1]], 2.0 * e, epsilon = 1e-15);
        assert_abs_diff_eq!(out[[2, 1]], 2.0 * e, epsilon = 1e-15);
        assert_abs_diff_eq!(out[[0, 0]], 4.0 * k, epsilon = 1e-15);
    }

    #[test]
    fn delta_5x5_reproduces_kernel() {
        let kern = gaussian_kernel_2d(1, 1.0);
        let mut f = Array2::zeros((5, 5));
        f[[2, 2]] = 1.0;
        let out = smooth_2d(f.view(), &kern);
        for y in 0..5 {
            for x in 0..5 {
                let (dy, dx) = (y as isize - 2, x as isize - 2);
                let want = if dy.abs() <= 1 && dx.abs() <= 1 {
                    kern.at(dy, dx)
                } else {
                    0.0
                };
                assert_abs_diff_eq!(out[[y, x]], want, epsilon = 1e-15);
            }
        }
    }

    #[test]
    fn one_wide_axis_replicates() {
        let kern = gaussian_kernel_2d(1, 1.0);
        let f = array![[0.2, 0.8, 0.5]];
        let out = smooth_2d(f.view(), &kern);
        // Along y every tap lands on row 0, so the result equals a 1D pass
        // with the column marginals of the kernel.
        let col: Vec<f64> = (0..3).map(|kx| kern.weights().column(kx).sum()).collect();
        let want0 = col[0] * 0.8 + col[1] * 0.2 + col[2] * 0.8;
        assert_abs_diff_eq!(out[[0, 0]], want0, epsilon = 1e-15);
    }

    proptest! {
        #[test]
        fn kernels_normalized_and_flip_symmetric(k in 0usize..6, sigma in 0.05f64..8.0) {
            let k2 = gaussian_kernel_2d(k, sigma);
            prop_assert!((k2.weights().sum() - 1.0).abs() < 1e-9);
            let w = k2.weights();
            prop_assert!(w.iter().all(|&v| v >= 0.0));
            prop_assert_eq!(w.to_owned(), w.t().to_owned());
            let flipped_y = w.slice(ndarray::s![..;-1, ..]).to_owned();
            let flipped_x = w.slice(ndarray::s![.., ..;-1]).to_owned();
            prop_assert_eq!(&flipped_y, &w.to_owned());
            prop_assert_eq!(&flipped_x, &w.to_owned());

            let k1 = gaussian_kernel_1d(k, sigma);
            prop_assert!((k1.weights().sum() - 1.0).abs() < 1e-9);
            let rev = k1.weights().slice(ndarray::s![..;-1]).to_owned();
            prop_assert_eq!(rev, k1.weights().to_owned());
        }

        #[test]
        fn smoothing_is_bounded_and_fixes_constants(
            h in 1usize..7, w in 1usize..7, k in 0usize..4, sigma in 0.3f64..3.0,
            vals in prop::collection::vec(0.0f64..1.0, 36), c in 0.0f64..5.0,
        ) {
            let f = Array2::from_shape_fn((h, w), |(y, x)| vals[y * 6 + x]);
            let kern = gaussian_kernel_2d(k, sigma);
            let out = smooth_2d(f.view(), &kern);
            let lo = f.iter().cloned().fold(f64::INFINITY, f64::min);
            let hi = f.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            for &v in out.iter() {
                prop_assert!(v >= lo && v <= hi);
            }
            let flat = Array2::from_elem((h, w), c);
            let smoothed = smooth_2d(flat.view(), &kern);
            prop_assert!(smoothed.iter().all(|&v| v == c));
        }
    }
}
