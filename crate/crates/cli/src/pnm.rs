//! Binary PNM: P5 (grayscale) and P6 (RGB), 8 bits per sample.

use std::path::Path;

use diffsteg::{ImageVector, Shape};

use crate::error::{data, CliError, Result};

pub fn decode(bytes: &[u8]) -> Result<ImageVector> {
    let mut pos = 0;
    let magic = token(bytes, &mut pos)?;
    let channels = match magic {
        b"P5" => 1,
        b"P6" => 3,
        other => return Err(data(format!("not a binary PNM (magic `{}`)", String::from_utf8_lossy(other)))),
    };
    let width = number(bytes, &mut pos, "width")?;
    let height = number(bytes, &mut pos, "height")?;
    let maxval = number(bytes, &mut pos, "maxval")?;
    if maxval != 255 {
        return Err(data(format!("only 8-bit PNM is supported (maxval {maxval})")));
    }
    if width == 0 || height == 0 {
        return Err(data("PNM has zero width or height"));
    }
    // Exactly one whitespace byte separates the header from the raster.
    match bytes.get(pos) {
        Some(b) if b.is_ascii_whitespace() => pos += 1,
        _ => return Err(data("PNM header is not terminated by whitespace")),
    }
    let shape = Shape { height, width, channels };
    let raster = &bytes[pos..];
    if raster.len() < shape.len() {
        return Err(data(format!("PNM raster truncated: {} of {} bytes", raster.len(), shape.len())));
    }
    Ok(ImageVector::from_u8(shape, &raster[..shape.len()])?)
}

fn skip_space_and_comments(bytes: &[u8], pos: &mut usize) {
    while let Some(&b) = bytes.get(*pos) {
        if b == b'#' {
            while bytes.get(*pos).is_some_and(|&c| c != b'\n') {
                *pos += 1;
            }
        } else if b.is_ascii_whitespace() {
            *pos += 1;
        } else {
            break;
        }
    }
}

fn token<'a>(bytes: &'a [u8], pos: &mut usize) -> Result<&'a [u8]> {
    skip_space_and_comments(bytes, pos);
    let start = *pos;
    while bytes.get(*pos).is_some_and(|b| !b.is_ascii_whitespace() && *b != b'#') {
        *pos += 1;
    }
    if start == *pos {
        return Err(data("PNM header ended early"));
    }
    Ok(&bytes[start..*pos])
}

fn number(bytes: &[u8], pos: &mut usize, what: &str) -> Result<usize> {
    let tok = token(bytes, pos)?;
    std::str::from_utf8(tok)
        .ok()
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| data(format!("bad PNM {what} `{}`", String::from_utf8_lossy(tok))))
}

pub fn encode(image: &ImageVector) -> Result<Vec<u8>> {
    let shape = image.shape();
    let magic = match shape.channels {
        1 => "P5",
        3 => "P6",
        c => return Err(data(format!("PNM holds 1 or 3 channels, image has {c}"))),
    };
    let mut out = format!("{magic}\n{} {}\n255\n", shape.width, shape.height).into_bytes();
    out.extend(image.to_u8());
    Ok(out)
}

pub fn read(path: &Path) -> Result<ImageVector> {
    let bytes = std::fs::read(path).map_err(|e| CliError::io(path, e))?;
    decode(&bytes).map_err(|e| data(format!("{}: {e}", path.display())))
}

pub fn write(path: &Path, image: &ImageVector) -> Result<()> {
    let bytes = encode(image)?;
    std::fs::write(path, bytes).map_err(|e| CliError::io(path, e))
}

/// `pgm` for grayscale, `ppm` for color.
pub fn extension(shape: Shape) -> &'static str {
    if shape.channels == 1 {
        "pgm"
    } else {
        "ppm"
    }
}
