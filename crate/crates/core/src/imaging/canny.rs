use std::collections::VecDeque;

use super::{EdgeMap, Image, ImageError};

/// Thresholds are fractions of the largest gradient magnitude in the image.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CannyParams {
    pub sigma: f64,
    pub low: f64,
    pub high: f64,
}

impl Default for CannyParams {
    fn default() -> Self {
        CannyParams {
            sigma: 1.4,
            low: 0.1,
            high: 0.3,
        }
    }
}

fn gaussian_kernel(sigma: f64) -> Vec<f64> {
    let half = (3.0 * sigma).ceil() as isize;
    let mut k: Vec<f64> = (-half..=half)
        .map(|i| (-((i * i) as f64) / (2.0 * sigma * sigma)).exp())
        .collect();
    let sum: f64 = k.iter().sum();
    k.iter_mut().for_each(|v| *v /= sum);
    k
}

/// Separable blur with edge clamping.
fn blur(img: &Image, sigma: f64) -> Vec<f64> {
    let (w, h) = (img.width, img.height);
    let k = gaussian_kernel(sigma);
    let half = (k.len() / 2) as isize;
    let clamp = |v: isize, n: usize| v.clamp(0, n as isize - 1) as usize;
    let mut tmp = vec![0.0; w * h];
    for y in 0..h {
        let row = &img.pixels[y * w..(y + 1) * w];
        for x in 0..w {
            tmp[y * w + x] = k
                .iter()
                .enumerate()
                .map(|(i, kv)| kv * row[clamp(x as isize + i as isize - half, w)])
                .sum();
        }
    }
    let mut out = vec![0.0; w * h];
    for y in 0..h {
        for x in 0..w {
            out[y * w + x] = k
                .iter()
                .enumerate()
                .map(|(i, kv)| kv * tmp[clamp(y as isize + i as isize - half, h) * w + x])
                .sum();
        }
    }
    out
}

/// Gaussian blur, Sobel gradients, four-direction non-maximum suppression
/// and 8-connected hysteresis. The one-pixel image border never holds edges.
pub fn canny(img: &Image, params: CannyParams) -> Result<EdgeMap, ImageError> {
    let CannyParams { sigma, low, high } = params;
    if !(sigma > 0.0) || !(low >= 0.0) || !(low <= high) {
        return Err(ImageError::InvalidArgument(format!(
            "canny needs sigma > 0 and 0 <= low <= high (sigma={sigma}, low={low}, high={high})"
        )));
    }
    let (w, h) = (img.width, img.height);
    let mut edges = EdgeMap::empty(w, h);
    if w < 3 || h < 3 {
        return Ok(edges);
    }
    let b = blur(img, sigma);
    let mut mag = vec![0.0; w * h];
    let mut dir = vec![0u8; w * h];
    let mut max_mag: f64 = 0.0;
    for y in 1..h - 1 {
        for x in 1..w - 1 {
            let p = |dx: isize, dy: isize| {
                b[(y as isize + dy) as usize * w + (x as isize + dx) as usize]
            };
            let gx = (p(1, -1) + 2.0 * p(1, 0) + p(1, 1)) - (p(-1, -1) + 2.0 * p(-1, 0) + p(-1, 1));
            let gy = (p(-1, 1) + 2.0 * p(0, 1) + p(1, 1)) - (p(-1, -1) + 2.0 * p(0, -1) + p(1, -1));
            let m = gx.hypot(gy);
            let i = y * w + x;
            mag[i] = m;
            max_mag = max_mag.max(m);
            let mut angle = gy.atan2(gx).to_degrees();
            if angle < 0.0 {
                angle += 180.0;
            }
            dir[i] = if !(22.5..157.5).contains(&angle) {
                0
            } else if angle < 67.5 {
                1
            } else if angle < 112.5 {
                2
            } else {
                3
            };
        }
    }
    if max_mag <= 1e-9 {
        return Ok(edges);
    }
    let (lo_abs, hi_abs) = (low * max_mag, high * max_mag);

    // Non-maximum suppression. The neighbour behind the gradient may tie,
    // the one ahead must be strictly smaller, so plateaus keep one pixel.
    let mut thin = vec![0.0; w * h];
    for y in 1..h - 1 {
        for x in 1..w - 1 {
            let i = y * w + x;
            let m = mag[i];
            if m <= 0.0 {
                continue;
            }
            let (behind, ahead) = match dir[i] {
                0 => (i - 1, i + 1),
                1 => (i - w - 1, i + w + 1),
                2 => (i - w, i + w),
                _ => (i - w + 1, i + w - 1),
            };
            if m >= mag[behind] && m > mag[ahead] {
                thin[i] = m;
            }
        }
    }

    let mut queue = VecDeque::new();
    for (i, &m) in thin.iter().enumerate() {
        if m >= hi_abs && m > 0.0 {
            edges.mask[i] = true;
            queue.push_back(i);
        }
    }
    while let Some(i) = queue.pop_front() {
        let (x, y) = ((i % w) as isize, (i / w) as isize);
        for dy in -1..=1 {
            for dx in -1..=1 {
                let (nx, ny) = (x + dx, y + dy);
                if nx < 0 || ny < 0 || nx >= w as isize || ny >= h as isize {
                    continue;
                }
                let j = ny as usize * w + nx as usize;
                if !edges.mask[j] && thin[j] >= lo_abs && thin[j] > 0.0 {
                    edges.mask[j] = true;
                    queue.push_back(j);
                }
            }
        }
    }
    Ok(edges)
}
