//! RIFF/WAVE PCM16 mono reader and writer.

use std::path::Path;

use crate::error::{AudioError, Result};
use crate::Waveform;

const PCM: u16 = 1;

fn format_err(offset: usize, msg: impl Into<String>) -> AudioError {
    AudioError::Format {
        offset,
        msg: msg.into(),
    }
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| format_err(self.pos, format!("truncated {what}")))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u16(&mut self, what: &str) -> Result<u16> {
        let b = self.take(2, what)?;
        Ok(u16::from_le_bytes([b[0], b[1]]))
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        let b = self.take(4, what)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }
}

/// Decodes a PCM16 mono WAV byte stream. Samples are mapped to [-1, 1) by /32768.
pub fn parse_wav(bytes: &[u8]) -> Result<Waveform> {
    let mut cur = Cursor { bytes, pos: 0 };
    if cur.take(4, "RIFF tag")? != b"RIFF" {
        return Err(format_err(0, "missing RIFF tag"));
    }
    cur.u32("RIFF size")?;
    if cur.take(4, "WAVE tag")? != b"WAVE" {
        return Err(format_err(8, "missing WAVE tag"));
    }

    let mut sample_rate = None;
    loop {
        let chunk_start = cur.pos;
        if chunk_start >= bytes.len() {
            return Err(format_err(chunk_start, "no data chunk"));
        }
        let id = cur.take(4, "chunk id")?;
        let size = cur.u32("chunk size")? as usize;
        let body_start = cur.pos;
        let body = cur.take(size, "chunk body")?;
        // chunks are word aligned
        if size % 2 == 1 && cur.pos < bytes.len() {
            cur.pos += 1;
        }
        match id {
            b"fmt " => {
                if size < 16 {
                    return Err(format_err(body_start, "fmt chunk shorter than 16 bytes"));
                }
                let mut f = Cursor { bytes: body, pos: 0 };
                let format = f.u16("format tag")?;
                let channels = f.u16("channel count")?;
                let rate = f.u32("sample rate")?;
                f.u32("byte rate")?;
                f.u16("block align")?;
                let bits = f.u16("bits per sample")?;
                if format != PCM {
                    return Err(format_err(body_start, format!("format tag {format} is not PCM")));
                }
                if channels != 1 {
                    return Err(format_err(
                        body_start + 2,
                        format!("{channels} channels, expected mono"),
                    ));
                }
                if rate == 0 {
                    return Err(format_err(body_start + 4, "sample rate is zero"));
                }
                if bits != 16 {
                    return Err(format_err(
                        body_start + 14,
                        format!("{bits} bits per sample, expected 16"),
                    ));
                }
                sample_rate = Some(rate);
            }
            b"data" => {
                let rate = sample_rate
                    .ok_or_else(|| format_err(chunk_start, "data chunk before fmt chunk"))?;
                if !size.is_multiple_of(2) {
                    return Err(format_err(body_start, "odd data length for 16-bit samples"));
                }
                let samples = body
                    .chunks_exact(2)
                    .map(|b| f64::from(i16::from_le_bytes([b[0], b[1]])) / 32768.0)
                    .collect();
                return Waveform::new(samples, rate);
            }
            _ => {}
        }
    }
}

/// Encodes samples as PCM16 mono, quantizing with `round(x * 32768)` clamped to the i16 range.
pub fn encode_wav(w: &Waveform) -> Vec<u8> {
    let data_len = w.samples().len() * 2;
    let mut out = Vec::with_capacity(44 + data_len);
    out.extend_from_slice(b"RIFF");
    out.extend_from_slice(&((36 + data_len) as u32).to_le_bytes());
    out.extend_from_slice(b"WAVE");
    out.extend_from_slice(b"fmt ");
    out.extend_from_slice(&16u32.to_le_bytes());
    out.extend_from_slice(&PCM.to_le_bytes());
    out.extend_from_slice(&1u16.to_le_bytes());
    out.extend_from_slice(&w.sample_rate().to_le_bytes());
    out.extend_from_slice(&(w.sample_rate() * 2).to_le_bytes());
    out.extend_from_slice(&2u16.to_le_bytes());
    out.extend_from_slice(&16u16.to_le_bytes());
    out.extend_from_slice(b"data");
    out.extend_from_slice(&(data_len as u32).to_le_bytes());
    for &s in w.samples() {
        let q = (s * 32768.0).round().clamp(-32768.0, 32767.0) as i16;
        out.extend_from_slice(&q.to_le_bytes());
    }
    out
}

pub fn read_wav(path: &Path) -> Result<Waveform> {
    let bytes = std::fs::read(path).map_err(|source| AudioError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_wav(&bytes)
}

pub fn write_wav(path: &Path, w: &Waveform) -> Result<()> {
    std::fs::write(path, encode_wav(w)).map_err(|source| AudioError::Io {
        path: path.to_path_buf(),
        source,
    })
}
