//! Brute-force reference scorer.
//!
//! Plain nested loops over the raw row-major buffer, with its own kernel,
//! softmax and reflection code. Nothing here calls into [`crate::scoring`];
//! the two are kept apart so one can check the other. Also used to produce
//! the expected scores shipped with the synthetic fixture suite.

fn reflect(mut i: i64, len: usize) -> usize {
    let len = len as i64;
    if len == 1 {
        return 0;
    }
    loop {
        if i < 0 {
            i = -i;
        } else if i >= len {
            i = 2 * (len - 1) - i;
        } else {
            return i as usize;
        }
    }
}

fn gauss(d2: i64, sigma: f64) -> f64 {
    (-(d2 as f64) / (2.0 * sigma * sigma)).exp()
}

/// Reference U-Net score for a stacked `(m, h*w, n)` buffer.
#[allow(clippy::too_many_arguments)]
pub fn unet_score(
    data: &[f32],
    m: usize,
    h: usize,
    w: usize,
    n: usize,
    token_set: &[usize],
    beta: f64,
    k: usize,
    sigma: f64,
) -> f64 {
    assert_eq!(data.len(), m * h * w * n);
    let at = |j: usize, y: usize, x: usize, i: usize| data[(j * h * w + y * w + x) * n + i] as f64;

    // aggregate
    let mut agg = vec![0.0f64; h * w * n];
    for y in 0..h {
        for x in 0..w {
            for i in 0..n {
                let mut s = 0.0;
                for j in 0..m {
                    s += at(j, y, x, i);
                }
                agg[(y * w + x) * n + i] = s / m as f64;
            }
        }
    }

    // softmax along tokens
    let mut prob = vec![0.0f64; h * w * n];
    for cell in 0..h * w {
        let row = &agg[cell * n..(cell + 1) * n];
        let mut mx = f64::NEG_INFINITY;
        for &v in row {
            if v > mx {
                mx = v;
            }
        }
        let mut z = 0.0;
        for &v in row {
            z += (beta * (v - mx)).exp();
        }
        for i in 0..n {
            prob[cell * n + i] = (beta * (row[i] - mx)).exp() / z;
        }
    }

    // kernel
    let r = k as i64;
    let mut norm = 0.0;
    for dy in -r..=r {
        for dx in -r..=r {
            norm += gauss(dy * dy + dx * dx, sigma);
        }
    }

    let mut total = 0.0;
    for &i in token_set {
        let mut sum = 0.0;
        for y in 0..h {
            for x in 0..w {
                let mut acc = 0.0;
                for dy in -r..=r {
                    for dx in -r..=r {
                        let sy = reflect(y as i64 + dy, h);
                        let sx = reflect(x as i64 + dx, w);
                        acc += gauss(dy * dy + dx * dx, sigma) / norm * prob[(sy * w + sx) * n + i];
                    }
                }
                sum += acc;
            }
        }
        total += sum / (h * w) as f64;
    }
    total / token_set.len() as f64
}

/// Reference DiT score for a `(side, side)` joint buffer.
pub fn dit_score(
    data: &[f32],
    side: usize,
    image_tokens: usize,
    token_set: &[usize],
    k: usize,
    sigma: f64,
) -> f64 {
    assert_eq!(data.len(), side * side);
    let text = side - image_tokens;
    let mut profile = vec![0.0f64; text];
    for (i, p) in profile.iter_mut().enumerate() {
        let mut s = 0.0;
        for j in 0..image_tokens {
            s += data[j * side + image_tokens + i] as f64;
        }
        *p = s / image_tokens as f64;
    }

    let r = k as i64;
    let mut norm = 0.0;
    for d in -r..=r {
        norm += gauss(d * d, sigma);
    }

    let mut total = 0.0;
    for &i in token_set {
        let mut acc = 0.0;
        for d in -r..=r {
            acc += gauss(d * d, sigma) / norm * profile[reflect(i as i64 + d, text)];
        }
        total += acc;
    }
    total / token_set.len() as f64
}
