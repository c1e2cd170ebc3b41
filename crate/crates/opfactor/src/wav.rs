//! RIFF/WAVE decoding and encoding for uncompressed PCM.
//!
//! Integer PCM of 8 (unsigned), 16, 24 and 32 bits and IEEE float of 32
//! bits are accepted, mono or stereo. Integer samples are divided by the
//! type's full-scale value (128, 32768, 2^23, 2^31) and stereo is averaged
//! per frame. Float samples outside [-1, 1] are clamped. Chunks other than
//! `fmt ` and `data` are skipped.

use opfactor_core::AudioClip;

const FORMAT_PCM: u16 = 1;
const FORMAT_IEEE_FLOAT: u16 = 3;
const FORMAT_EXTENSIBLE: u16 = 0xFFFE;

#[derive(Debug, thiserror::Error)]
pub enum WavError {
    #[error("malformed wav: {0}")]
    Malformed(String),
    #[error("unsupported wav format: {0}")]
    Unsupported(String),
    #[error("wav file contains no audio frames")]
    EmptyAudio,
}

fn malformed(msg: impl Into<String>) -> WavError {
    WavError::Malformed(msg.into())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SampleFormat {
    U8,
    I16,
    I24,
    I32,
    F32,
}

impl SampleFormat {
    pub fn bytes(self) -> usize {
        match self {
            SampleFormat::U8 => 1,
            SampleFormat::I16 => 2,
            SampleFormat::I24 => 3,
            SampleFormat::I32 | SampleFormat::F32 => 4,
        }
    }

    fn format_tag(self) -> u16 {
        match self {
            SampleFormat::F32 => FORMAT_IEEE_FLOAT,
            _ => FORMAT_PCM,
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct Fmt {
    channels: u16,
    sample_rate: u32,
    format: SampleFormat,
}

fn u16_at(b: &[u8], at: usize) -> u16 {
    u16::from_le_bytes([b[at], b[at + 1]])
}

fn u32_at(b: &[u8], at: usize) -> u32 {
    u32::from_le_bytes([b[at], b[at + 1], b[at + 2], b[at + 3]])
}

fn parse_fmt(body: &[u8]) -> Result<Fmt, WavError> {
    if body.len() < 16 {
        return Err(malformed("fmt chunk shorter than 16 bytes"));
    }
    let mut tag = u16_at(body, 0);
    let channels = u16_at(body, 2);
    let sample_rate = u32_at(body, 4);
    let block_align = u16_at(body, 12);
    let bits = u16_at(body, 14);
    if tag == FORMAT_EXTENSIBLE {
        if body.len() < 40 {
            return Err(malformed("extensible fmt chunk shorter than 40 bytes"));
        }
        // first two bytes of the sub-format GUID carry the actual format tag
        tag = u16_at(body, 24);
    }
    if channels == 0 {
        return Err(malformed("zero channels"));
    }
    if sample_rate == 0 {
        return Err(malformed("zero sample rate"));
    }
    if channels > 2 {
        return Err(WavError::Unsupported(format!("{channels} channels")));
    }
    let format = match (tag, bits) {
        (FORMAT_PCM, 8) => SampleFormat::U8,
        (FORMAT_PCM, 16) => SampleFormat::I16,
        (FORMAT_PCM, 24) => SampleFormat::I24,
        (FORMAT_PCM, 32) => SampleFormat::I32,
        (FORMAT_IEEE_FLOAT, 32) => SampleFormat::F32,
        (FORMAT_PCM | FORMAT_IEEE_FLOAT, b) => {
            return Err(WavError::Unsupported(format!("{b}-bit samples with format tag {tag}")))
        }
        (t, _) => return Err(WavError::Unsupported(format!("format tag {t:#06x}"))),
    };
    if block_align as usize != format.bytes() * channels as usize {
        return Err(malformed(format!(
            "block align {block_align} does not match {channels} x {bits}-bit"
        )));
    }
    Ok(Fmt {
        channels,
        sample_rate,
        format,
    })
}

fn sample_at(b: &[u8], format: SampleFormat) -> Result<f64, WavError> {
    Ok(match format {
        SampleFormat::U8 => (b[0] as f64 - 128.0) / 128.0,
        SampleFormat::I16 => i16::from_le_bytes([b[0], b[1]]) as f64 / 32768.0,
        SampleFormat::I24 => {
            // sign-extend through the top byte of an i32
            (i32::from_le_bytes([0, b[0], b[1], b[2]]) >> 8) as f64 / 8_388_608.0
        }
        SampleFormat::I32 => i32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64 / 2_147_483_648.0,
        SampleFormat::F32 => {
            let v = f32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64;
            if !v.is_finite() {
                return Err(malformed("non-finite float sample"));
            }
            v.clamp(-1.0, 1.0)
        }
    })
}

/// Decodes a WAV byte stream into a mono clip.
pub fn decode_wav(bytes: &[u8]) -> Result<AudioClip, WavError> {
    if bytes.len() < 12 || &bytes[0..4] != b"RIFF" || &bytes[8..12] != b"WAVE" {
        return Err(malformed("missing RIFF/WAVE header"));
    }
    let mut fmt: Option<Fmt> = None;
    let mut data: Option<&[u8]> = None;
    let mut pos = 12;
    while pos + 8 <= bytes.len() {
        let id = &bytes[pos..pos + 4];
        let size = u32_at(bytes, pos + 4) as usize;
        let start = pos + 8;
        let end = start.saturating_add(size);
        match id {
            b"fmt " => {
                if end > bytes.len() {
                    return Err(malformed("truncated fmt chunk"));
                }
                fmt = Some(parse_fmt(&bytes[start..end])?);
            }
            b"data" => {
                // streaming writers may leave the size unset; take what is there
                data = Some(&bytes[start..end.min(bytes.len())]);
                if fmt.is_some() {
                    break;
                }
            }
            _ => {}
        }
        // chunks are padded to even length
        pos = end.saturating_add(size & 1);
    }
    let fmt = fmt.ok_or_else(|| malformed("no fmt chunk"))?;
    let data = data.ok_or_else(|| malformed("no data chunk"))?;

    let width = fmt.format.bytes();
    let frame_bytes = width * fmt.channels as usize;
    let frames = data.len() / frame_bytes;
    if frames == 0 {
        return Err(WavError::EmptyAudio);
    }
    let mut samples = Vec::with_capacity(frames);
    for frame in data.chunks_exact(frame_bytes) {
        let mut acc = 0.0;
        for ch in frame.chunks_exact(width) {
            acc += sample_at(ch, fmt.format)?;
        }
        samples.push(acc / fmt.channels as f64);
    }
    AudioClip::new(samples, fmt.sample_rate).map_err(|e| malformed(e.to_string()))
}

fn quantize(x: f64, full_scale: f64, min: f64, max: f64) -> f64 {
    (x * full_scale).round().clamp(min, max)
}

/// Encodes interleaved samples (values in [-1, 1]) as a canonical WAV.
pub fn encode_wav_interleaved(
    samples: &[f64],
    channels: u16,
    sample_rate: u32,
    format: SampleFormat,
) -> Vec<u8> {
    let width = format.bytes();
    let data_len = samples.len() * width;
    let mut out = Vec::with_capacity(44 + data_len + 1);
    out.extend_from_slice(b"RIFF");
    out.extend_from_slice(&((36 + data_len + (data_len & 1)) as u32).to_le_bytes());
    out.extend_from_slice(b"WAVE");
    out.extend_from_slice(b"fmt ");
    out.extend_from_slice(&16u32.to_le_bytes());
    out.extend_from_slice(&format.format_tag().to_le_bytes());
    out.extend_from_slice(&channels.to_le_bytes());
    out.extend_from_slice(&sample_rate.to_le_bytes());
    let block_align = width as u32 * channels as u32;
    out.extend_from_slice(&(sample_rate * block_align).to_le_bytes());
    out.extend_from_slice(&(block_align as u16).to_le_bytes());
    out.extend_from_slice(&((width * 8) as u16).to_le_bytes());
    out.extend_from_slice(b"data");
    out.extend_from_slice(&(data_len as u32).to_le_bytes());
    for &s in samples {
        let s = s.clamp(-1.0, 1.0);
        match format {
            SampleFormat::U8 => out.push((quantize(s, 128.0, -128.0, 127.0) + 128.0) as u8),
            SampleFormat::I16 => {
                out.extend_from_slice(&(quantize(s, 32768.0, -32768.0, 32767.0) as i16).to_le_bytes())
            }
            SampleFormat::I24 => {
                let v = quantize(s, 8_388_608.0, -8_388_608.0, 8_388_607.0) as i32;
                out.extend_from_slice(&v.to_le_bytes()[..3]);
            }
            SampleFormat::I32 => out.extend_from_slice(
                &(quantize(s, 2_147_483_648.0, -2_147_483_648.0, 2_147_483_647.0) as i32).to_le_bytes(),
            ),
            SampleFormat::F32 => out.extend_from_slice(&(s as f32).to_le_bytes()),
        }
    }
    if data_len & 1 == 1 {
        out.push(0);
    }
    out
}

/// Encodes a mono clip.
pub fn encode_wav(clip: &AudioClip, format: SampleFormat) -> Vec<u8> {
    encode_wav_interleaved(clip.samples(), 1, clip.sample_rate(), format)
}
