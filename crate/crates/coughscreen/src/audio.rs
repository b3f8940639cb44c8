//! WAV parsing, encoding, normalization, and fixed-length segmentation.
//!
//! Everything downstream of this module works on one canonical audio form:
//! mono PCM at 16 kHz with amplitudes in `[-1, 1]`. [`parse_wav`] accepts
//! 8- or 16-bit PCM RIFF/WAVE streams, [`normalize`] converts any clip to the
//! canonical form, and [`slice`] cuts a canonical clip into the 0.99 s
//! segments the feature extractor consumes.

use thiserror::Error;

/// Sample rate of the canonical normalized form, in Hz.
pub const CANONICAL_SAMPLE_RATE: u32 = 16_000;

/// Samples per analysis segment: 0.99 s at 16 kHz.
pub const SEGMENT_SAMPLES: usize = 15_840;

#[derive(Debug, Error)]
pub enum AudioError {
    #[error("malformed RIFF stream: {0}")]
    MalformedRiff(&'static str),
    #[error("unsupported encoding: {0}")]
    UnsupportedEncoding(String),
    #[error("data chunk truncated: declares {declared} bytes, only {available} present")]
    TruncatedData { declared: usize, available: usize },
    #[error("clip has no samples")]
    EmptyClip,
    #[error("clip is not normalized ({channels} channel(s) at {sample_rate} Hz)")]
    NotNormalized { channels: u16, sample_rate: u32 },
    #[error("invalid clip: {0}")]
    InvalidClip(&'static str),
}

/// Decoded PCM audio. Samples are stored interleaved, one frame per channel
/// group, each amplitude in `[-1, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct AudioClip {
    samples: Vec<f64>,
    sample_rate: u32,
    channels: u16,
}

impl AudioClip {
    pub fn new(samples: Vec<f64>, sample_rate: u32, channels: u16) -> Result<Self, AudioError> {
        if sample_rate == 0 {
            return Err(AudioError::InvalidClip("sample rate must be positive"));
        }
        if channels == 0 {
            return Err(AudioError::InvalidClip("channel count must be positive"));
        }
        if samples.len() % channels as usize != 0 {
            return Err(AudioError::InvalidClip(
                "sample count must be a multiple of the channel count",
            ));
        }
        if !samples.iter().all(|s| s.is_finite() && s.abs() <= 1.0) {
            return Err(AudioError::InvalidClip("amplitudes must lie in [-1, 1]"));
        }
        Ok(Self {
            samples,
            sample_rate,
            channels,
        })
    }

    /// Single-channel clip.
    pub fn mono(samples: Vec<f64>, sample_rate: u32) -> Result<Self, AudioError> {
        Self::new(samples, sample_rate, 1)
    }

    /// Interleaved samples.
    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    pub fn channels(&self) -> u16 {
        self.channels
    }

    /// Number of sample frames (samples per channel).
    pub fn frames(&self) -> usize {
        self.samples.len() / self.channels as usize
    }

    pub fn duration_seconds(&self) -> f64 {
        self.frames() as f64 / self.sample_rate as f64
    }

    /// True when the clip is already in the canonical mono/16 kHz form.
    pub fn is_canonical(&self) -> bool {
        self.channels == 1 && self.sample_rate == CANONICAL_SAMPLE_RATE
    }
}

/// A 0.99 s window of a canonical clip: exactly [`SEGMENT_SAMPLES`] samples.
#[derive(Debug, Clone, PartialEq)]
pub struct Segment {
    samples: Vec<f64>,
    source_clip_id: String,
    index: usize,
}

impl Segment {
    pub fn new(samples: Vec<f64>, source_clip_id: &str, index: usize) -> Result<Self, AudioError> {
        if samples.len() != SEGMENT_SAMPLES {
            return Err(AudioError::InvalidClip(
                "segment must contain exactly 15,840 samples",
            ));
        }
        if !samples.iter().all(|s| s.is_finite() && s.abs() <= 1.0) {
            return Err(AudioError::InvalidClip("amplitudes must lie in [-1, 1]"));
        }
        Ok(Self {
            samples,
            source_clip_id: source_clip_id.to_string(),
            index,
        })
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn source_clip_id(&self) -> &str {
        &self.source_clip_id
    }

    pub fn index(&self) -> usize {
        self.index
    }
}

const RIFF_MAGIC: &[u8; 4] = b"RIFF";
const WAVE_MAGIC: &[u8; 4] = b"WAVE";
const FMT_CHUNK: &[u8; 4] = b"fmt ";
const DATA_CHUNK: &[u8; 4] = b"data";
const FORMAT_PCM: u16 = 1;

fn read_u16(bytes: &[u8], at: usize) -> Option<u16> {
    Some(u16::from_le_bytes(bytes.get(at..at + 2)?.try_into().ok()?))
}

fn read_u32(bytes: &[u8], at: usize) -> Option<u32> {
    Some(u32::from_le_bytes(bytes.get(at..at + 4)?.try_into().ok()?))
}

struct FmtChunk {
    channels: u16,
    sample_rate: u32,
    bits_per_sample: u16,
}

/// Parse a RIFF/WAVE byte stream into an [`AudioClip`].
///
/// Accepts PCM (format tag 1) at 8 or 16 bits per sample. 16-bit values map
/// to `v / 32768`, 8-bit values use the unsigned offset-128 convention.
/// Unknown chunks are skipped. All reads are bounds-checked; malformed or
/// truncated input yields an error, never a partial clip.
pub fn parse_wav(bytes: &[u8]) -> Result<AudioClip, AudioError> {
    if bytes.len() < 12 || &bytes[0..4] != RIFF_MAGIC {
        return Err(AudioError::MalformedRiff("missing RIFF header"));
    }
    if &bytes[8..12] != WAVE_MAGIC {
        return Err(AudioError::MalformedRiff("missing WAVE form type"));
    }

    let mut fmt: Option<FmtChunk> = None;
    let mut offset = 12usize;
    while offset < bytes.len() {
        if offset + 8 > bytes.len() {
            return Err(AudioError::MalformedRiff("dangling chunk header"));
        }
        let chunk_id: [u8; 4] = bytes[offset..offset + 4].try_into().unwrap();
        let chunk_len = read_u32(bytes, offset + 4).unwrap() as usize;
        let body_start = offset + 8;

        if &chunk_id == FMT_CHUNK {
            if chunk_len < 16 || body_start + 16 > bytes.len() {
                return Err(AudioError::MalformedRiff("fmt chunk too short"));
            }
            let format_tag = read_u16(bytes, body_start).unwrap();
            if format_tag != FORMAT_PCM {
                return Err(AudioError::UnsupportedEncoding(format!(
                    "format tag {format_tag} (only PCM is supported)"
                )));
            }
            let channels = read_u16(bytes, body_start + 2).unwrap();
            let sample_rate = read_u32(bytes, body_start + 4).unwrap();
            let bits_per_sample = read_u16(bytes, body_start + 14).unwrap();
            if channels == 0 {
                return Err(AudioError::MalformedRiff("zero channel count"));
            }
            if sample_rate == 0 {
                return Err(AudioError::MalformedRiff("zero sample rate"));
            }
            if bits_per_sample != 8 && bits_per_sample != 16 {
                return Err(AudioError::UnsupportedEncoding(format!(
                    "{bits_per_sample} bits per sample (only 8 and 16 are supported)"
                )));
            }
            fmt = Some(FmtChunk {
                channels,
                sample_rate,
                bits_per_sample,
            });
        } else if &chunk_id == DATA_CHUNK {
            let fmt = fmt
                .as_ref()
                .ok_or(AudioError::MalformedRiff("data chunk precedes fmt chunk"))?;
            let available = bytes.len() - body_start;
            if chunk_len > available {
                return Err(AudioError::TruncatedData {
                    declared: chunk_len,
                    available,
                });
            }
            let data = &bytes[body_start..body_start + chunk_len];
            let bytes_per_sample = (fmt.bits_per_sample / 8) as usize;
            let frame_bytes = bytes_per_sample * fmt.channels as usize;
            if chunk_len % frame_bytes != 0 {
                return Err(AudioError::MalformedRiff(
                    "data chunk does not contain whole frames",
                ));
            }
            let samples: Vec<f64> = match fmt.bits_per_sample {
                16 => data
                    .chunks_exact(2)
                    .map(|b| i16::from_le_bytes([b[0], b[1]]) as f64 / 32768.0)
                    .collect(),
                8 => data.iter().map(|&b| (b as f64 - 128.0) / 128.0).collect(),
                _ => unreachable!(),
            };
            return AudioClip::new(samples, fmt.sample_rate, fmt.channels);
        }

        // Chunks are word-aligned: odd sizes carry a pad byte.
        let advance = chunk_len
            .checked_add(chunk_len % 2)
            .and_then(|l| l.checked_add(8))
            .ok_or(AudioError::MalformedRiff("chunk size overflow"))?;
        offset += advance;
    }
    Err(AudioError::MalformedRiff("no data chunk"))
}

/// Serialize a clip as 16-bit little-endian PCM RIFF/WAVE (44-byte header).
///
/// Amplitudes quantize to `round(s * 32768)` clamped to the i16 range, so
/// `parse_wav(write_wav(c))` reproduces `c` within 1/32768 per sample.
pub fn write_wav(clip: &AudioClip) -> Vec<u8> {
    let data_len = clip.samples.len() * 2;
    let channels = clip.channels as u32;
    let byte_rate = clip.sample_rate * channels * 2;
    let block_align = (channels * 2) as u16;

    let mut out = Vec::with_capacity(44 + data_len);
    out.extend_from_slice(RIFF_MAGIC);
    out.extend_from_slice(&(36 + data_len as u32).to_le_bytes());
    out.extend_from_slice(WAVE_MAGIC);
    out.extend_from_slice(FMT_CHUNK);
    out.extend_from_slice(&16u32.to_le_bytes());
    out.extend_from_slice(&FORMAT_PCM.to_le_bytes());
    out.extend_from_slice(&clip.channels.to_le_bytes());
    out.extend_from_slice(&clip.sample_rate.to_le_bytes());
    out.extend_from_slice(&byte_rate.to_le_bytes());
    out.extend_from_slice(&block_align.to_le_bytes());
    out.extend_from_slice(&16u16.to_le_bytes());
    out.extend_from_slice(DATA_CHUNK);
    out.extend_from_slice(&(data_len as u32).to_le_bytes());
    for &s in &clip.samples {
        let q = (s * 32768.0).round().clamp(-32768.0, 32767.0) as i16;
        out.extend_from_slice(&q.to_le_bytes());
    }
    out
}

/// Convert a clip to the canonical form: mono (channel mean), 16 kHz
/// (linear-interpolation resampling), amplitudes clamped to `[-1, 1]`.
///
/// Output length is `round(frames * 16000 / sample_rate)`. A clip already in
/// canonical form is returned unchanged, which makes `normalize` idempotent.
pub fn normalize(clip: &AudioClip) -> Result<AudioClip, AudioError> {
    if clip.samples.is_empty() {
        return Err(AudioError::EmptyClip);
    }
    if clip.is_canonical() {
        return Ok(clip.clone());
    }

    let frames = clip.frames();
    let ch = clip.channels as usize;
    let mono: Vec<f64> = (0..frames)
        .map(|f| clip.samples[f * ch..(f + 1) * ch].iter().sum::<f64>() / ch as f64)
        .collect();

    let out_len = (frames as f64 * CANONICAL_SAMPLE_RATE as f64 / clip.sample_rate as f64).round()
        as usize;
    if out_len == 0 {
        return Err(AudioError::EmptyClip);
    }
    let mut out = Vec::with_capacity(out_len);
    for i in 0..out_len {
        let pos = i as f64 * clip.sample_rate as f64 / CANONICAL_SAMPLE_RATE as f64;
        let j = pos.floor() as usize;
        let frac = pos - j as f64;
        let a = mono[j.min(frames - 1)];
        let b = mono[(j + 1).min(frames - 1)];
        out.push((a * (1.0 - frac) + b * frac).clamp(-1.0, 1.0));
    }
    AudioClip::mono(out, CANONICAL_SAMPLE_RATE)
}

/// Cut a canonical clip into consecutive non-overlapping 0.99 s segments.
/// A trailing remainder shorter than one segment is discarded.
pub fn slice(clip: &AudioClip, clip_id: &str) -> Result<Vec<Segment>, AudioError> {
    if !clip.is_canonical() {
        return Err(AudioError::NotNormalized {
            channels: clip.channels,
            sample_rate: clip.sample_rate,
        });
    }
    clip.samples
        .chunks_exact(SEGMENT_SAMPLES)
        .enumerate()
        .map(|(i, w)| Segment::new(w.to_vec(), clip_id, i))
        .collect()
}
