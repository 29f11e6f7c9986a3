//! JPEG-like lossy storage: 8×8 block DCT, quantization with the scaled
//! standard luminance table, dequantization, inverse DCT. No color transform,
//! chroma subsampling or entropy coding; each channel is coded as its own plane.

use std::f64::consts::PI;
use std::sync::OnceLock;

use crate::error::{Error, Result};
use crate::image::{quantize_u8, ImageVector};

const N: usize = 8;

/// Standard luminance quantization table, row-major.
#[rustfmt::skip]
pub const LUMINANCE_TABLE: [u16; 64] = [
    16, 11, 10, 16, 24, 40, 51, 61,
    12, 12, 14, 19, 26, 58, 60, 55,
    14, 13, 16, 24, 40, 57, 69, 56,
    14, 17, 22, 29, 51, 87, 80, 62,
    18, 22, 37, 56, 68, 109, 103, 77,
    24, 35, 55, 64, 81, 104, 113, 92,
    49, 64, 78, 87, 103, 121, 120, 101,
    72, 92, 95, 98, 112, 100, 103, 99,
];

fn check_quality(quality: u8) -> Result<()> {
    if !(1..=100).contains(&quality) {
        return Err(Error::InvalidDegradation(format!("jpeg quality {quality} outside [1, 100]")));
    }
    Ok(())
}

/// Percentage applied to the base table: `5000/Q` below 50, `200 − 2Q` above.
pub fn quality_scale(quality: u8) -> Result<u32> {
    check_quality(quality)?;
    let q = u32::from(quality);
    Ok(if q < 50 { 5000 / q } else { 200 - 2 * q })
}

pub fn quantization_table(quality: u8) -> Result<[u16; 64]> {
    let scale = quality_scale(quality)?;
    Ok(LUMINANCE_TABLE.map(|b| ((u32::from(b) * scale + 50) / 100).clamp(1, 255) as u16))
}

/// `basis[u][x] = c(u)/2 · cos((2x+1)uπ/16)`, the orthonormal 8-point DCT-II.
fn basis() -> &'static [[f64; N]; N] {
    static BASIS: OnceLock<[[f64; N]; N]> = OnceLock::new();
    BASIS.get_or_init(|| {
        let mut b = [[0.0; N]; N];
        for (u, row) in b.iter_mut().enumerate() {
            let c = if u == 0 { (0.5f64).sqrt() } else { 1.0 };
            for (x, v) in row.iter_mut().enumerate() {
                *v = 0.5 * c * (((2 * x + 1) * u) as f64 * PI / 16.0).cos();
            }
        }
        b
    })
}

pub(crate) fn forward_dct(block: &[f64; 64]) -> [f64; 64] {
    let b = basis();
    let mut tmp = [0.0; 64];
    for y in 0..N {
        for u in 0..N {
            tmp[y * N + u] = (0..N).map(|x| b[u][x] * block[y * N + x]).sum();
        }
    }
    let mut out = [0.0; 64];
    for v in 0..N {
        for u in 0..N {
            out[v * N + u] = (0..N).map(|y| b[v][y] * tmp[y * N + u]).sum();
        }
    }
    out
}

pub(crate) fn inverse_dct(coef: &[f64; 64]) -> [f64; 64] {
    let b = basis();
    let mut tmp = [0.0; 64];
    for y in 0..N {
        for u in 0..N {
            tmp[y * N + u] = (0..N).map(|v| b[v][y] * coef[v * N + u]).sum();
        }
    }
    let mut out = [0.0; 64];
    for y in 0..N {
        for x in 0..N {
            out[y * N + x] = (0..N).map(|u| b[u][x] * tmp[y * N + u]).sum();
        }
    }
    out
}

/// Half-sample symmetric reflection of an out-of-range index.
fn reflect(i: usize, n: usize) -> usize {
    let period = 2 * n;
    let m = i % period;
    if m < n {
        m
    } else {
        period - 1 - m
    }
}

/// Compress-decompress round trip at `quality`. Planes whose sides are not
/// multiples of 8 are reflect-padded and cropped back.
pub fn jpeg_like(x: &ImageVector, quality: u8) -> Result<ImageVector> {
    let table = quantization_table(quality)?;
    let shape = x.shape();
    let (h, w, ch) = (shape.height, shape.width, shape.channels);
    if shape.is_empty() {
        return Err(Error::Empty("image"));
    }
    let pixels = x.to_u8();
    let mut out = vec![0.0; shape.len()];
    for c in 0..ch {
        for by in (0..h).step_by(N) {
            for bx in (0..w).step_by(N) {
                let mut block = [0.0; 64];
                for (i, v) in block.iter_mut().enumerate() {
                    let y = reflect(by + i / N, h);
                    let xx = reflect(bx + i % N, w);
                    *v = f64::from(pixels[shape.index(y, xx, c)]) - 128.0;
                }
                let mut coef = forward_dct(&block);
                for (k, q) in coef.iter_mut().zip(&table) {
                    let q = f64::from(*q);
                    *k = (*k / q).round() * q;
                }
                let rec = inverse_dct(&coef);
                for (i, v) in rec.iter().enumerate() {
                    let (y, xx) = (by + i / N, bx + i % N);
                    if y < h && xx < w {
                        out[shape.index(y, xx, c)] = f64::from(quantize_u8((v + 128.0) / 255.0)) / 255.0;
                    }
                }
            }
        }
    }
    x.with_data(out)
}
