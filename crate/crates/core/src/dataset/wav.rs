//! Minimal RIFF/WAVE mono reader and writer.
//!
//! Reads 16-bit PCM and 32/64-bit IEEE float (plain or extensible format
//! tags). Every format error carries the byte offset where parsing stopped.

use std::path::Path;

use crate::{Error, Result, Waveform};

const FORMAT_PCM: u16 = 1;
const FORMAT_FLOAT: u16 = 3;
const FORMAT_EXTENSIBLE: u16 = 0xFFFE;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WavEncoding {
    /// 16-bit PCM; samples are clipped to [-1, 1].
    Pcm16,
    /// 32-bit IEEE float.
    Float32,
}

fn fail<T>(offset: usize, message: impl Into<String>) -> Result<T> {
    Err(Error::Format {
        offset: offset as u64,
        message: message.into(),
    })
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.bytes.len() - self.pos < n {
            return fail(self.pos, format!("truncated {what}"));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u16(&mut self, what: &str) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2, what)?.try_into().unwrap()))
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }
}

struct Format {
    tag: u16,
    fs: u32,
    bits: u16,
}

/// Parses an in-memory WAV file.
pub fn parse_wav(bytes: &[u8]) -> Result<Waveform> {
    let mut c = Cursor { bytes, pos: 0 };
    if c.take(4, "RIFF header")? != b"RIFF" {
        return fail(0, "missing RIFF tag");
    }
    c.u32("RIFF size")?;
    if c.take(4, "WAVE tag")? != b"WAVE" {
        return fail(8, "missing WAVE tag");
    }
    let mut format: Option<Format> = None;
    loop {
        let chunk_at = c.pos;
        let id = c.take(4, "chunk id")?;
        let size = c.u32("chunk size")? as usize;
        let body_at = c.pos;
        match id {
            b"fmt " => {
                if size < 16 {
                    return fail(chunk_at, format!("fmt chunk of {size} bytes"));
                }
                let mut tag = c.u16("format tag")?;
                let channels = c.u16("channel count")?;
                let fs = c.u32("sample rate")?;
                c.u32("byte rate")?;
                c.u16("block align")?;
                let bits = c.u16("bits per sample")?;
                if tag == FORMAT_EXTENSIBLE {
                    if size < 26 {
                        return fail(chunk_at, "extensible fmt chunk too short");
                    }
                    c.take(8, "extension header")?;
                    tag = c.u16("sub-format")?;
                }
                if channels != 1 {
                    return fail(body_at + 2, format!("{channels} channels, expected mono"));
                }
                if fs == 0 {
                    return fail(body_at + 4, "zero sample rate");
                }
                match (tag, bits) {
                    (FORMAT_PCM, 16) | (FORMAT_FLOAT, 32) | (FORMAT_FLOAT, 64) => {}
                    _ => {
                        return fail(
                            body_at,
                            format!("unsupported encoding: tag {tag}, {bits} bits"),
                        )
                    }
                }
                format = Some(Format { tag, fs, bits });
                c.pos = body_at;
                c.take(size, "fmt chunk")?;
            }
            b"data" => {
                let Some(fmt) = &format else {
                    return fail(chunk_at, "data chunk before fmt chunk");
                };
                let width = fmt.bits as usize / 8;
                if size % width != 0 {
                    return fail(chunk_at + 4, format!("data size {size} not a multiple of {width}"));
                }
                let data = c.take(size, "sample data")?;
                let samples = data
                    .chunks_exact(width)
                    .map(|b| match (fmt.tag, fmt.bits) {
                        (FORMAT_PCM, 16) => i16::from_le_bytes([b[0], b[1]]) as f64 / 32768.0,
                        (_, 32) => f32::from_le_bytes(b.try_into().unwrap()) as f64,
                        _ => f64::from_le_bytes(b.try_into().unwrap()),
                    })
                    .collect();
                return Ok(Waveform::new(samples, fmt.fs as f64));
            }
            _ => {
                c.take(size, "chunk body")?;
            }
        }
        if size % 2 == 1 && c.pos < bytes.len() {
            c.pos += 1;
        }
    }
}

pub fn read_wav(path: &Path) -> Result<Waveform> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    parse_wav(&bytes)
}

pub fn encode_wav(wave: &Waveform, encoding: WavEncoding) -> Vec<u8> {
    let (tag, bits) = match encoding {
        WavEncoding::Pcm16 => (FORMAT_PCM, 16u16),
        WavEncoding::Float32 => (FORMAT_FLOAT, 32u16),
    };
    let width = bits as u32 / 8;
    let data_len = wave.len() as u32 * width;
    let fs = wave.fs_hz.round() as u32;
    let mut out = Vec::with_capacity(44 + data_len as usize);
    out.extend_from_slice(b"RIFF");
    out.extend_from_slice(&(36 + data_len).to_le_bytes());
    out.extend_from_slice(b"WAVEfmt ");
    out.extend_from_slice(&16u32.to_le_bytes());
    out.extend_from_slice(&tag.to_le_bytes());
    out.extend_from_slice(&1u16.to_le_bytes());
    out.extend_from_slice(&fs.to_le_bytes());
    out.extend_from_slice(&(fs * width).to_le_bytes());
    out.extend_from_slice(&(width as u16).to_le_bytes());
    out.extend_from_slice(&bits.to_le_bytes());
    out.extend_from_slice(b"data");
    out.extend_from_slice(&data_len.to_le_bytes());
    for &v in &wave.samples {
        match encoding {
            WavEncoding::Pcm16 => {
                let q = (v.clamp(-1.0, 1.0) * 32768.0).round().clamp(-32768.0, 32767.0) as i16;
                out.extend_from_slice(&q.to_le_bytes());
            }
            WavEncoding::Float32 => out.extend_from_slice(&(v as f32).to_le_bytes()),
        }
    }
    out
}

pub fn write_wav(path: &Path, wave: &Waveform, encoding: WavEncoding) -> Result<()> {
    std::fs::write(path, encode_wav(wave, encoding)).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pcm16_round_trip_is_exact_after_quantization() {
        let w = Waveform::new(vec![0.0, 0.5, -0.25, 0.999, -1.0], 16000.0);
        let once = parse_wav(&encode_wav(&w, WavEncoding::Pcm16)).unwrap();
        assert_eq!(once.fs_hz, 16000.0);
        assert_eq!(once.samples[1], 0.5);
        assert_eq!(once.samples[4], -1.0);
        let twice = parse_wav(&encode_wav(&once, WavEncoding::Pcm16)).unwrap();
        assert_eq!(once, twice);
    }

    #[test]
    fn float_round_trip() {
        let w = Waveform::new(vec![0.125, -3.5], 8000.0);
        assert_eq!(parse_wav(&encode_wav(&w, WavEncoding::Float32)).unwrap(), w);
    }

    #[test]
    fn errors_report_offsets() {
        let good = encode_wav(&Waveform::new(vec![0.1; 4], 16000.0), WavEncoding::Pcm16);
        let mut bad = good.clone();
        bad[0] = b'X';
        assert!(matches!(parse_wav(&bad), Err(Error::Format { offset: 0, .. })));

        let mut stereo = good.clone();
        stereo[22] = 2;
        assert!(matches!(parse_wav(&stereo), Err(Error::Format { offset: 22, .. })));

        let truncated = &good[..good.len() - 3];
        assert!(matches!(parse_wav(truncated), Err(Error::Format { offset: 44, .. })));
    }

    #[test]
    fn skips_unknown_chunks() {
        let good = encode_wav(&Waveform::new(vec![0.5; 3], 16000.0), WavEncoding::Pcm16);
        let mut with_list = good[..36].to_vec();
        with_list.extend_from_slice(b"LIST");
        with_list.extend_from_slice(&3u32.to_le_bytes());
        with_list.extend_from_slice(b"abc\0");
        with_list.extend_from_slice(&good[36..]);
        assert_eq!(parse_wav(&with_list).unwrap().samples, vec![0.5; 3]);
    }
}
