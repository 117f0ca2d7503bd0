//! Binary PPM (P6, maxval 255) images as `[3, h, w]` tensors in [0, 1].

use clue_tensor::Tensor;

use crate::error::{DataError, Result};

fn err(offset: usize, msg: impl Into<String>) -> DataError {
    DataError::format("ppm", offset, msg)
}

/// Header token reader that skips whitespace and `#` comments.
fn next_token(bytes: &[u8], pos: &mut usize) -> Result<(usize, usize)> {
    loop {
        match bytes.get(*pos) {
            Some(b) if b.is_ascii_whitespace() => *pos += 1,
            Some(b'#') => {
                while bytes.get(*pos).is_some_and(|&b| b != b'\n') {
                    *pos += 1;
                }
            }
            Some(_) => break,
            None => return Err(err(*pos, "truncated header")),
        }
    }
    let start = *pos;
    while bytes.get(*pos).is_some_and(|b| !b.is_ascii_whitespace() && *b != b'#') {
        *pos += 1;
    }
    Ok((start, *pos))
}

fn header_number(bytes: &[u8], pos: &mut usize, what: &str) -> Result<usize> {
    let (s, e) = next_token(bytes, pos)?;
    std::str::from_utf8(&bytes[s..e])
        .ok()
        .filter(|t| t.bytes().all(|b| b.is_ascii_digit()))
        .and_then(|t| t.parse::<usize>().ok())
        .ok_or_else(|| err(s, format!("invalid {what}")))
}

pub fn parse_ppm(bytes: &[u8]) -> Result<Tensor<f32>> {
    if !bytes.starts_with(b"P6") {
        return Err(err(0, "missing P6 magic"));
    }
    let mut pos = 2;
    if !bytes.get(pos).is_some_and(|b| b.is_ascii_whitespace() || *b == b'#') {
        return Err(err(pos, "magic not followed by whitespace"));
    }
    let width = header_number(bytes, &mut pos, "width")?;
    let height = header_number(bytes, &mut pos, "height")?;
    let maxval_at = pos;
    let maxval = header_number(bytes, &mut pos, "maxval")?;
    if width == 0 || height == 0 {
        return Err(err(maxval_at, "zero image dimension"));
    }
    if maxval != 255 {
        return Err(err(maxval_at, format!("maxval {maxval} unsupported, expected 255")));
    }
    match bytes.get(pos) {
        Some(b) if b.is_ascii_whitespace() => pos += 1,
        _ => return Err(err(pos, "missing whitespace after maxval")),
    }
    let n = width
        .checked_mul(height)
        .and_then(|p| p.checked_mul(3))
        .filter(|&n| n <= (1 << 28))
        .ok_or_else(|| err(maxval_at, "image too large"))?;
    let pixels = bytes
        .get(pos..pos + n)
        .ok_or_else(|| err(bytes.len(), format!("truncated pixel data, need {n} bytes")))?;
    if bytes.len() > pos + n {
        return Err(err(pos + n, "trailing bytes after pixel data"));
    }
    let plane = width * height;
    let mut data = vec![0f32; n];
    for (i, rgb) in pixels.chunks_exact(3).enumerate() {
        for (c, &v) in rgb.iter().enumerate() {
            data[c * plane + i] = f32::from(v) / 255.0;
        }
    }
    Ok(Tensor::new(vec![3, height, width], data).expect("ppm shape"))
}

pub fn quantize(v: f32) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

/// Encodes a `[3, h, w]` image, quantizing each value as `round(v * 255)`.
pub fn encode_ppm(img: &Tensor<f32>) -> Result<Vec<u8>> {
    let &[3, h, w] = img.shape() else {
        return Err(DataError::Input(format!(
            "image must have shape [3, h, w], got {:?}",
            img.shape()
        )));
    };
    let mut out = format!("P6\n{w} {h}\n255\n").into_bytes();
    let plane = w * h;
    out.reserve(3 * plane);
    let d = img.data();
    for i in 0..plane {
        for c in 0..3 {
            out.push(quantize(d[c * plane + i]));
        }
    }
    Ok(out)
}
