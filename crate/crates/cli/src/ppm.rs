//! Binary netpbm codecs: P6 (RGB, maxval 255) for images and P5
//! (grayscale, maxval 255) for depth maps. Decode maps byte v to
//! v/255.0; encode rounds clamp(f,0,1)*255, so a write/read round trip
//! moves any sample by at most 1/510.

use std::fs;
use std::path::Path;

use priornet_core::fmath;
use priornet_core::physics::{DepthMap, Image};

use crate::error::CliError;

pub fn read_image(path: &Path) -> Result<Image, CliError> {
    let bytes = fs::read(path).map_err(|e| CliError::io(path, e))?;
    let (w, h, payload) = parse_header(path, &bytes, b"P6", 3)?;
    // file layout is row-major interleaved RGB; storage is planar
    let mut data = vec![0.0f32; 3 * w * h];
    for y in 0..h {
        for x in 0..w {
            for c in 0..3 {
                data[(c * h + y) * w + x] = payload[(y * w + x) * 3 + c] as f32 / 255.0;
            }
        }
    }
    Ok(Image::new(h, w, data))
}

pub fn write_image(image: &Image, path: &Path) -> Result<(), CliError> {
    let (h, w) = (image.height(), image.width());
    let mut out = format!("P6\n{w} {h}\n255\n").into_bytes();
    out.reserve(3 * w * h);
    for y in 0..h {
        for x in 0..w {
            for c in 0..3 {
                out.push(quantize(image.get(c, y, x)));
            }
        }
    }
    fs::write(path, out).map_err(|e| CliError::io(path, e))
}

pub fn read_depth(path: &Path) -> Result<DepthMap, CliError> {
    let bytes = fs::read(path).map_err(|e| CliError::io(path, e))?;
    let (w, h, payload) = parse_header(path, &bytes, b"P5", 1)?;
    let data = payload.iter().map(|v| *v as f32 / 255.0).collect();
    Ok(DepthMap::new(h, w, data))
}

pub fn write_depth(depth: &DepthMap, path: &Path) -> Result<(), CliError> {
    let (h, w) = (depth.height(), depth.width());
    let mut out = format!("P5\n{w} {h}\n255\n").into_bytes();
    out.extend(depth.data().iter().map(|v| quantize(*v)));
    fs::write(path, out).map_err(|e| CliError::io(path, e))
}

fn quantize(v: f32) -> u8 {
    fmath::round(v.clamp(0.0, 1.0) * 255.0) as u8
}

/// Parse `magic width height 255<ws>` and return (width, height, payload).
fn parse_header<'a>(
    path: &Path,
    bytes: &'a [u8],
    magic: &[u8; 2],
    samples: usize,
) -> Result<(usize, usize, &'a [u8]), CliError> {
    if bytes.len() < 2 || &bytes[..2] != magic {
        return Err(CliError::format(
            path,
            format!("bad magic: expected {}", core::str::from_utf8(magic).unwrap()),
        ));
    }
    let mut cursor = 2;
    let width = next_number(path, bytes, &mut cursor)?;
    let height = next_number(path, bytes, &mut cursor)?;
    let maxval = next_number(path, bytes, &mut cursor)?;
    if maxval != 255 {
        return Err(CliError::format(path, format!("maxval {maxval} != 255")));
    }
    // exactly one whitespace byte separates the header from the payload
    if cursor >= bytes.len() || !bytes[cursor].is_ascii_whitespace() {
        return Err(CliError::format(path, "missing header terminator"));
    }
    cursor += 1;
    if width == 0 || height == 0 {
        return Err(CliError::format(path, "zero image dimension"));
    }
    let need = width * height * samples;
    let payload = &bytes[cursor..];
    if payload.len() < need {
        return Err(CliError::format(
            path,
            format!("truncated payload: {} of {need} bytes", payload.len()),
        ));
    }
    Ok((width, height, &payload[..need]))
}

/// Skip whitespace and `#` comments, then read a decimal token.
fn next_number(path: &Path, bytes: &[u8], cursor: &mut usize) -> Result<usize, CliError> {
    loop {
        while *cursor < bytes.len() && bytes[*cursor].is_ascii_whitespace() {
            *cursor += 1;
        }
        if *cursor < bytes.len() && bytes[*cursor] == b'#' {
            while *cursor < bytes.len() && bytes[*cursor] != b'\n' {
                *cursor += 1;
            }
            continue;
        }
        break;
    }
    let start = *cursor;
    while *cursor < bytes.len() && bytes[*cursor].is_ascii_digit() {
        *cursor += 1;
    }
    if start == *cursor {
        return Err(CliError::format(path, "malformed header number"));
    }
    core::str::from_utf8(&bytes[start..*cursor])
        .ok()
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| CliError::format(path, "malformed header number"))
}
