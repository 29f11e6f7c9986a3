use crate::error::{Error, Result};
use crate::image::{quantize_u8, ImageVector, Shape};

/// Keys cubic convolution kernel with `a = −0.5`.
fn cubic(x: f64) -> f64 {
    let a = -0.5;
    let x = x.abs();
    if x < 1.0 {
        ((a + 2.0) * x - (a + 3.0)) * x * x + 1.0
    } else if x < 2.0 {
        (((x - 5.0) * x + 8.0) * x - 4.0) * a
    } else {
        0.0
    }
}

/// Per output sample: `(first source index, weights)`. The kernel is widened
/// by the reduction factor when shrinking, which low-pass filters first.
fn axis_weights(n_in: usize, n_out: usize) -> Vec<Vec<(usize, f64)>> {
    let scale = n_in as f64 / n_out as f64;
    let support = scale.max(1.0);
    (0..n_out)
        .map(|o| {
            let center = (o as f64 + 0.5) * scale - 0.5;
            let lo = (center - 2.0 * support).floor() as isize;
            let hi = (center + 2.0 * support).ceil() as isize;
            let mut taps: Vec<(usize, f64)> = (lo..=hi)
                .map(|i| {
                    let w = cubic((i as f64 - center) / support);
                    (i.clamp(0, n_in as isize - 1) as usize, w)
                })
                .filter(|(_, w)| *w != 0.0)
                .collect();
            let total: f64 = taps.iter().map(|(_, w)| w).sum();
            taps.iter_mut().for_each(|(_, w)| *w /= total);
            taps
        })
        .collect()
}

/// Separable bicubic resampling to `height × width`.
pub fn bicubic_resize(x: &ImageVector, height: usize, width: usize) -> Result<ImageVector> {
    let src = x.shape();
    if src.is_empty() || height == 0 || width == 0 {
        return Err(Error::Empty("image"));
    }
    let ch = src.channels;
    let wx = axis_weights(src.width, width);
    let wy = axis_weights(src.height, height);
    let mid_shape = Shape::new(src.height, width, ch);
    let mut mid = vec![0.0; mid_shape.len()];
    let data = x.as_slice();
    for y in 0..src.height {
        for (ox, taps) in wx.iter().enumerate() {
            for c in 0..ch {
                mid[mid_shape.index(y, ox, c)] = taps.iter().map(|&(i, w)| w * data[src.index(y, i, c)]).sum();
            }
        }
    }
    let out_shape = Shape::new(height, width, ch);
    let mut out = vec![0.0; out_shape.len()];
    for (oy, taps) in wy.iter().enumerate() {
        for ox in 0..width {
            for c in 0..ch {
                out[out_shape.index(oy, ox, c)] = taps.iter().map(|&(i, w)| w * mid[mid_shape.index(i, ox, c)]).sum();
            }
        }
    }
    ImageVector::new(out_shape, out)
}

/// Stores at 8 bits, shrinks by `factor`, enlarges back, stores again.
pub fn down_up(x: &ImageVector, factor: usize) -> Result<ImageVector> {
    if factor == 0 {
        return Err(Error::InvalidDegradation("resize factor must be positive".into()));
    }
    let shape = x.shape();
    let stored = x.quantized();
    let small_h = ((shape.height as f64 / factor as f64).round() as usize).max(1);
    let small_w = ((shape.width as f64 / factor as f64).round() as usize).max(1);
    let small = bicubic_resize(&stored, small_h, small_w)?;
    let back = bicubic_resize(&small, shape.height, shape.width)?;
    Ok(back.map(|v| f64::from(quantize_u8(v)) / 255.0))
}
