//! RIFF/WAVE reading and writing for 16- and 24-bit PCM and 32-bit float.

use std::fs;
use std::path::Path;

use stn::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BitDepth {
    Pcm16,
    Pcm24,
    Float32,
}

impl BitDepth {
    fn bytes(self) -> usize {
        match self {
            BitDepth::Pcm16 => 2,
            BitDepth::Pcm24 => 3,
            BitDepth::Float32 => 4,
        }
    }

    fn format_tag(self) -> u16 {
        match self {
            BitDepth::Float32 => FORMAT_FLOAT,
            _ => FORMAT_PCM,
        }
    }
}

impl std::str::FromStr for BitDepth {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "pcm16" => Ok(BitDepth::Pcm16),
            "pcm24" => Ok(BitDepth::Pcm24),
            "float32" => Ok(BitDepth::Float32),
            other => Err(Error::Parameter(format!(
                "unknown bit depth {other:?} (expected pcm16, pcm24 or float32)"
            ))),
        }
    }
}

/// Deinterleaved audio with samples in `[-1, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct AudioBuffer {
    pub channels: Vec<Vec<f64>>,
    pub sample_rate: f64,
    pub source_bit_depth: BitDepth,
}

impl AudioBuffer {
    pub fn new(channels: Vec<Vec<f64>>, sample_rate: f64, source_bit_depth: BitDepth) -> Result<Self> {
        let buf = AudioBuffer {
            channels,
            sample_rate,
            source_bit_depth,
        };
        buf.validate()?;
        Ok(buf)
    }

    pub fn validate(&self) -> Result<()> {
        if self.channels.is_empty() {
            return Err(Error::Parameter("audio needs at least one channel".into()));
        }
        if self.channels.iter().any(|c| c.len() != self.channels[0].len()) {
            return Err(Error::Parameter("channels differ in length".into()));
        }
        if !(self.sample_rate > 0.0 && self.sample_rate.is_finite()) {
            return Err(Error::Parameter("sample rate must be positive".into()));
        }
        if self.sample_rate.fract() != 0.0 || self.sample_rate > u32::MAX as f64 {
            return Err(Error::Parameter("sample rate must be a whole number of Hz".into()));
        }
        Ok(())
    }

    pub fn frames(&self) -> usize {
        self.channels[0].len()
    }
}

const FORMAT_PCM: u16 = 1;
const FORMAT_FLOAT: u16 = 3;
const FORMAT_EXTENSIBLE: u16 = 0xFFFE;

struct Reader<'a> {
    bytes: &'a [u8],
    path: &'a Path,
}

impl Reader<'_> {
    fn fail(&self, offset: usize, message: impl Into<String>) -> Error {
        Error::Format {
            path: self.path.to_path_buf(),
            offset: offset as u64,
            message: message.into(),
        }
    }

    fn take(&self, offset: usize, len: usize) -> Result<&[u8]> {
        self.bytes
            .get(offset..offset + len)
            .ok_or_else(|| self.fail(offset, "unexpected end of file"))
    }

    fn u16(&self, offset: usize) -> Result<u16> {
        let b = self.take(offset, 2)?;
        Ok(u16::from_le_bytes([b[0], b[1]]))
    }

    fn u32(&self, offset: usize) -> Result<u32> {
        let b = self.take(offset, 4)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }
}

struct Format {
    channels: usize,
    sample_rate: u32,
    depth: BitDepth,
}

fn parse_fmt(r: &Reader, at: usize, size: usize) -> Result<Format> {
    if size < 16 {
        return Err(r.fail(at, format!("fmt chunk too short ({size} bytes)")));
    }
    let mut tag = r.u16(at)?;
    let channels = r.u16(at + 2)? as usize;
    let sample_rate = r.u32(at + 4)?;
    let block_align = r.u16(at + 12)? as usize;
    let bits = r.u16(at + 14)?;
    if tag == FORMAT_EXTENSIBLE {
        if size < 40 {
            return Err(r.fail(at, "extensible fmt chunk too short"));
        }
        // the sub-format GUID starts with the plain format tag
        tag = r.u16(at + 24)?;
    }
    let depth = match (tag, bits) {
        (FORMAT_PCM, 16) => BitDepth::Pcm16,
        (FORMAT_PCM, 24) => BitDepth::Pcm24,
        (FORMAT_FLOAT, 32) => BitDepth::Float32,
        _ => {
            return Err(r.fail(
                at,
                format!("unsupported encoding: format {tag} with {bits} bits per sample"),
            ))
        }
    };
    if channels == 0 {
        return Err(r.fail(at + 2, "zero channels"));
    }
    if sample_rate == 0 {
        return Err(r.fail(at + 4, "zero sample rate"));
    }
    if block_align != channels * depth.bytes() {
        return Err(r.fail(at + 12, format!("block alignment {block_align} does not match format")));
    }
    Ok(Format {
        channels,
        sample_rate,
        depth,
    })
}

fn decode(bytes: &[u8], depth: BitDepth) -> f64 {
    match depth {
        BitDepth::Pcm16 => i16::from_le_bytes([bytes[0], bytes[1]]) as f64 / 32768.0,
        BitDepth::Pcm24 => {
            let v = i32::from_le_bytes([0, bytes[0], bytes[1], bytes[2]]) >> 8;
            v as f64 / 8_388_608.0
        }
        BitDepth::Float32 => f32::from_le_bytes([bytes[0], bytes[1], bytes[2], bytes[3]]) as f64,
    }
}

pub fn read_wav(path: impl AsRef<Path>) -> Result<AudioBuffer> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let r = Reader { bytes: &bytes, path };
    if r.take(0, 4)? != b"RIFF" {
        return Err(r.fail(0, "missing RIFF signature"));
    }
    if r.take(8, 4)? != b"WAVE" {
        return Err(r.fail(8, "missing WAVE signature"));
    }

    let mut format: Option<Format> = None;
    let mut pos = 12;
    while pos + 8 <= bytes.len() {
        let id = r.take(pos, 4)?;
        let size = r.u32(pos + 4)? as usize;
        let body = pos + 8;
        match id {
            b"fmt " => format = Some(parse_fmt(&r, body, size)?),
            b"data" => {
                let fmt = format
                    .as_ref()
                    .ok_or_else(|| r.fail(pos, "data chunk before fmt chunk"))?;
                let data = r.take(body, size)?;
                let frame = fmt.channels * fmt.depth.bytes();
                if size % frame != 0 {
                    return Err(r.fail(pos + 4, format!("data size {size} is not a whole number of frames")));
                }
                let width = fmt.depth.bytes();
                let mut channels = vec![Vec::with_capacity(size / frame); fmt.channels];
                for chunk in data.chunks_exact(frame) {
                    for (c, s) in channels.iter_mut().zip(chunk.chunks_exact(width)) {
                        c.push(decode(s, fmt.depth));
                    }
                }
                return AudioBuffer::new(channels, fmt.sample_rate as f64, fmt.depth);
            }
            _ => {}
        }
        pos = body + size + (size & 1);
    }
    Err(r.fail(bytes.len(), "no data chunk"))
}

/// Quantises with round-half-away-from-zero and clipping for PCM targets.
fn encode(v: f64, depth: BitDepth, out: &mut Vec<u8>) {
    match depth {
        BitDepth::Pcm16 => {
            let q = (v * 32768.0).round().clamp(-32768.0, 32767.0) as i16;
            out.extend_from_slice(&q.to_le_bytes());
        }
        BitDepth::Pcm24 => {
            let q = (v * 8_388_608.0).round().clamp(-8_388_608.0, 8_388_607.0) as i32;
            out.extend_from_slice(&q.to_le_bytes()[..3]);
        }
        BitDepth::Float32 => out.extend_from_slice(&(v as f32).to_le_bytes()),
    }
}

pub fn write_wav(path: impl AsRef<Path>, buffer: &AudioBuffer, depth: BitDepth) -> Result<()> {
    let path = path.as_ref();
    buffer.validate()?;
    let channels = buffer.channels.len();
    let width = depth.bytes();
    let data_len = buffer.frames() * channels * width;
    let riff_len = 4 + (8 + 16) + (8 + data_len);
    if riff_len > u32::MAX as usize {
        return Err(Error::Parameter("audio too long for a WAV file".into()));
    }
    let rate = buffer.sample_rate as u32;

    let mut out = Vec::with_capacity(riff_len + 8);
    out.extend_from_slice(b"RIFF");
    out.extend_from_slice(&(riff_len as u32).to_le_bytes());
    out.extend_from_slice(b"WAVEfmt ");
    out.extend_from_slice(&16u32.to_le_bytes());
    out.extend_from_slice(&depth.format_tag().to_le_bytes());
    out.extend_from_slice(&(channels as u16).to_le_bytes());
    out.extend_from_slice(&rate.to_le_bytes());
    out.extend_from_slice(&(rate * (channels * width) as u32).to_le_bytes());
    out.extend_from_slice(&((channels * width) as u16).to_le_bytes());
    out.extend_from_slice(&((width * 8) as u16).to_le_bytes());
    out.extend_from_slice(b"data");
    out.extend_from_slice(&(data_len as u32).to_le_bytes());
    for i in 0..buffer.frames() {
        for c in &buffer.channels {
            encode(c[i], depth, &mut out);
        }
    }
    fs::write(path, out).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quantise(v: f64, depth: BitDepth) -> Vec<u8> {
        let mut out = Vec::new();
        encode(v, depth, &mut out);
        out
    }

    #[test]
    fn pcm16_clipping_and_rounding() {
        assert_eq!(quantise(1.5, BitDepth::Pcm16), 32767i16.to_le_bytes());
        assert_eq!(quantise(-1.5, BitDepth::Pcm16), (-32768i16).to_le_bytes());
        // 0.5 LSB rounds away from zero in both directions
        assert_eq!(quantise(0.5 / 32768.0, BitDepth::Pcm16), 1i16.to_le_bytes());
        assert_eq!(quantise(-0.5 / 32768.0, BitDepth::Pcm16), (-1i16).to_le_bytes());
    }

    #[test]
    fn decode_full_scale() {
        assert_eq!(decode(&32767i16.to_le_bytes(), BitDepth::Pcm16), 32767.0 / 32768.0);
        assert_eq!(decode(&(-32768i16).to_le_bytes(), BitDepth::Pcm16), -1.0);
        let neg = (-8_388_608i32).to_le_bytes();
        assert_eq!(decode(&neg[..3], BitDepth::Pcm24), -1.0);
        let pos = 8_388_607i32.to_le_bytes();
        assert_eq!(decode(&pos[..3], BitDepth::Pcm24), 8_388_607.0 / 8_388_608.0);
    }

    #[test]
    fn pcm24_code_round_trips() {
        for code in [-8_388_608i32, -1, 0, 1, 12345, 8_388_607] {
            let v = code as f64 / 8_388_608.0;
            let bytes = quantise(v, BitDepth::Pcm24);
            assert_eq!(decode(&bytes, BitDepth::Pcm24), v);
        }
    }

    #[test]
    fn buffer_invariants() {
        assert!(AudioBuffer::new(vec![], 44100.0, BitDepth::Pcm16).is_err());
        assert!(AudioBuffer::new(vec![vec![0.0; 3], vec![0.0; 2]], 44100.0, BitDepth::Pcm16).is_err());
        assert!(AudioBuffer::new(vec![vec![0.0; 3]], 0.0, BitDepth::Pcm16).is_err());
        assert!(AudioBuffer::new(vec![vec![0.0; 3]], 44100.0, BitDepth::Pcm16).is_ok());
    }

    #[test]
    fn bit_depth_names() {
        assert_eq!("pcm24".parse::<BitDepth>().unwrap(), BitDepth::Pcm24);
        assert!("pcm8".parse::<BitDepth>().is_err());
    }
}
