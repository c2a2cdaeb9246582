//! 16-bit PCM mono WAV reading and writing with fixed amplitude conventions.
//!
//! Integer samples map to amplitude on read by dividing by 32768; amplitudes
//! encode on write as `round(a * 32767)` clamped to `[-32768, 32767]`. The
//! conventions are asymmetric on purpose: reading can never produce a value
//! outside `[-1, 1]`, and writing never overflows `i16`. Consequences the
//! rest of the crate relies on:
//!
//! * `read(write(b))` equals `clamp(round(b[i] * 32767)) / 32768` exactly,
//!   sample for sample.
//! * For amplitudes already on the 1/32768 grid (anything previously read
//!   from a 16-bit file) the round-trip error is at most 1/32768 per sample.
//! * For arbitrary amplitudes `a` in `[-1, 1]` the round-trip error is at
//!   most `(0.5 + |a|) / 32768 <= 1.5/32768`.
//!
//! Unsupported encodings (compressed, multi-channel, non-16-bit) are
//! rejected with distinct errors, never reinterpreted. Resampling is out of
//! scope: when two files disagree on sample rate the caller gets a hard
//! error, because silently resampling would corrupt downstream SNR math.

use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum AudioError {
    #[error("cannot read {path}: {source}")]
    Read {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("cannot write {path}: {source}")]
    Write {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("{path}: not a RIFF/WAVE file")]
    NotWave { path: PathBuf },
    #[error("{path}: missing {chunk} chunk")]
    MissingChunk { path: PathBuf, chunk: &'static str },
    #[error("{path}: audio format {format} is not integer PCM")]
    NotPcm { path: PathBuf, format: u16 },
    #[error("{path}: {channels} channels, only mono is supported")]
    NotMono { path: PathBuf, channels: u16 },
    #[error("{path}: {bits}-bit samples, only 16-bit is supported")]
    NotSixteenBit { path: PathBuf, bits: u16 },
    #[error("{path}: data chunk truncated: header declares {declared} bytes, {available} available")]
    TruncatedData {
        path: PathBuf,
        declared: u64,
        available: u64,
    },
    #[error("{path}: header declares a zero sample rate")]
    ZeroSampleRate { path: PathBuf },
    #[error("sample {index} is {value}, not finite")]
    NotFinite { index: usize, value: f32 },
    #[error("sample {index} is {value}, outside [-1, 1]; clip handling was skipped upstream")]
    OutOfRange { index: usize, value: f32 },
    #[error("sample rate must be positive")]
    InvalidSampleRate,
}

/// Single-channel PCM audio held as float amplitudes.
///
/// Buffers are immutable after construction; every operation on them is pure
/// and safe to call from any number of threads.
#[derive(Debug, Clone, PartialEq)]
pub struct AudioBuffer {
    samples: Vec<f32>,
    sample_rate: u32,
    source_path: Option<PathBuf>,
}

impl AudioBuffer {
    /// Builds a buffer, rejecting non-finite samples and a zero sample rate.
    ///
    /// Amplitudes are expected in `[-1, 1]`; a transient overshoot (an
    /// unmixed intermediate) is tolerated here but rejected by
    /// [`write_wav`], so no out-of-range value ever reaches disk.
    pub fn new(samples: Vec<f32>, sample_rate: u32) -> Result<Self, AudioError> {
        if sample_rate == 0 {
            return Err(AudioError::InvalidSampleRate);
        }
        for (index, &value) in samples.iter().enumerate() {
            if !value.is_finite() {
                return Err(AudioError::NotFinite { index, value });
            }
        }
        Ok(Self {
            samples,
            sample_rate,
            source_path: None,
        })
    }

    fn with_source(mut self, path: &Path) -> Self {
        self.source_path = Some(path.to_path_buf());
        self
    }

    pub fn samples(&self) -> &[f32] {
        &self.samples
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    pub fn source_path(&self) -> Option<&Path> {
        self.source_path.as_deref()
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Sample count divided by sample rate.
    pub fn duration_seconds(&self) -> f64 {
        self.samples.len() as f64 / f64::from(self.sample_rate)
    }

    /// Largest absolute amplitude, 0.0 for an empty buffer.
    pub fn peak(&self) -> f32 {
        self.samples.iter().fold(0.0f32, |m, &s| m.max(s.abs()))
    }
}

const FMT_CHUNK: &str = "fmt ";
const DATA_CHUNK: &str = "data";

struct WavHeader {
    sample_rate: u32,
    data_offset: usize,
    data_len: usize,
}

fn parse_header(path: &Path, bytes: &[u8]) -> Result<WavHeader, AudioError> {
    let not_wave = || AudioError::NotWave {
        path: path.to_path_buf(),
    };
    if bytes.len() < 12 || &bytes[0..4] != b"RIFF" || &bytes[8..12] != b"WAVE" {
        return Err(not_wave());
    }

    let mut fmt: Option<(u16, u16, u32, u16)> = None; // format, channels, rate, bits
    let mut data: Option<(usize, usize)> = None;
    let mut pos = 12usize;
    while pos + 8 <= bytes.len() {
        let id = &bytes[pos..pos + 4];
        let size = u32::from_le_bytes(bytes[pos + 4..pos + 8].try_into().unwrap()) as usize;
        let body = pos + 8;
        if id == FMT_CHUNK.as_bytes() {
            if size < 16 || body + 16 > bytes.len() {
                return Err(not_wave());
            }
            let f = &bytes[body..body + 16];
            fmt = Some((
                u16::from_le_bytes([f[0], f[1]]),
                u16::from_le_bytes([f[2], f[3]]),
                u32::from_le_bytes([f[4], f[5], f[6], f[7]]),
                u16::from_le_bytes([f[14], f[15]]),
            ));
        } else if id == DATA_CHUNK.as_bytes() {
            if body + size > bytes.len() {
                return Err(AudioError::TruncatedData {
                    path: path.to_path_buf(),
                    declared: size as u64,
                    available: (bytes.len() - body) as u64,
                });
            }
            data = Some((body, size));
        }
        // Chunks are word-aligned: odd sizes carry a pad byte.
        pos = body + size + (size & 1);
    }

    let (format, channels, sample_rate, bits) = fmt.ok_or(AudioError::MissingChunk {
        path: path.to_path_buf(),
        chunk: FMT_CHUNK,
    })?;
    if format != 1 {
        return Err(AudioError::NotPcm {
            path: path.to_path_buf(),
            format,
        });
    }
    if channels != 1 {
        return Err(AudioError::NotMono {
            path: path.to_path_buf(),
            channels,
        });
    }
    if bits != 16 {
        return Err(AudioError::NotSixteenBit {
            path: path.to_path_buf(),
            bits,
        });
    }
    if sample_rate == 0 {
        return Err(AudioError::ZeroSampleRate {
            path: path.to_path_buf(),
        });
    }
    let (data_offset, data_len) = data.ok_or(AudioError::MissingChunk {
        path: path.to_path_buf(),
        chunk: DATA_CHUNK,
    })?;
    if data_len % 2 != 0 {
        // A 16-bit stream must be an even number of bytes; a dangling byte
        // means the writer was cut off.
        return Err(AudioError::TruncatedData {
            path: path.to_path_buf(),
            declared: data_len as u64,
            available: (data_len - 1) as u64,
        });
    }
    Ok(WavHeader {
        sample_rate,
        data_offset,
        data_len,
    })
}

/// Reads a 16-bit PCM mono RIFF/WAVE file.
///
/// Integer sample `i` becomes amplitude `i / 32768`, so the result always
/// lies in `[-1.0, 1.0)` on the positive side and reaches `-1.0` exactly at
/// `i = -32768`.
pub fn read_wav(path: impl AsRef<Path>) -> Result<AudioBuffer, AudioError> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|source| AudioError::Read {
        path: path.to_path_buf(),
        source,
    })?;
    let header = parse_header(path, &bytes)?;
    let data = &bytes[header.data_offset..header.data_offset + header.data_len];
    let samples: Vec<f32> = data
        .chunks_exact(2)
        .map(|pair| f32::from(i16::from_le_bytes([pair[0], pair[1]])) / 32768.0)
        .collect();
    Ok(AudioBuffer::new(samples, header.sample_rate)?.with_source(path))
}

/// Duration of a WAV file from its header alone, without decoding samples.
pub fn wav_duration_seconds(path: impl AsRef<Path>) -> Result<f64, AudioError> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|source| AudioError::Read {
        path: path.to_path_buf(),
        source,
    })?;
    let header = parse_header(path, &bytes)?;
    Ok((header.data_len / 2) as f64 / f64::from(header.sample_rate))
}

fn quantize(a: f32) -> i16 {
    (f64::from(a) * 32767.0).round().clamp(-32768.0, 32767.0) as i16
}

/// Writes a buffer as a 16-bit PCM mono WAV file.
///
/// Amplitude `a` encodes as `round(a * 32767)` clamped to
/// `[-32768, 32767]`. Samples outside `[-1, 1]` are an error rather than a
/// silent clip: they mean clip handling was skipped upstream.
pub fn write_wav(buffer: &AudioBuffer, path: impl AsRef<Path>) -> Result<(), AudioError> {
    let path = path.as_ref();
    for (index, &value) in buffer.samples.iter().enumerate() {
        if value.abs() > 1.0 {
            return Err(AudioError::OutOfRange { index, value });
        }
    }

    let data_len = buffer.samples.len() * 2;
    let mut out = Vec::with_capacity(44 + data_len);
    out.extend_from_slice(b"RIFF");
    out.extend_from_slice(&(36 + data_len as u32).to_le_bytes());
    out.extend_from_slice(b"WAVE");
    out.extend_from_slice(b"fmt ");
    out.extend_from_slice(&16u32.to_le_bytes());
    out.extend_from_slice(&1u16.to_le_bytes()); // PCM
    out.extend_from_slice(&1u16.to_le_bytes()); // mono
    out.extend_from_slice(&buffer.sample_rate.to_le_bytes());
    out.extend_from_slice(&(buffer.sample_rate * 2).to_le_bytes()); // byte rate
    out.extend_from_slice(&2u16.to_le_bytes()); // block align
    out.extend_from_slice(&16u16.to_le_bytes());
    out.extend_from_slice(b"data");
    out.extend_from_slice(&(data_len as u32).to_le_bytes());
    for &s in &buffer.samples {
        out.extend_from_slice(&quantize(s).to_le_bytes());
    }

    fs::write(path, out).map_err(|source| AudioError::Write {
        path: path.to_path_buf(),
        source,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};

    fn tmp_wav(name: &str) -> PathBuf {
        let dir = std::env::temp_dir().join("noisebench-audio-tests");
        fs::create_dir_all(&dir).unwrap();
        dir.join(name)
    }

    /// Hand-built header for crafting unsupported encodings.
    fn raw_wav(format: u16, channels: u16, rate: u32, bits: u16, data: &[u8]) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(b"RIFF");
        out.extend_from_slice(&(36 + data.len() as u32).to_le_bytes());
        out.extend_from_slice(b"WAVE");
        out.extend_from_slice(b"fmt ");
        out.extend_from_slice(&16u32.to_le_bytes());
        out.extend_from_slice(&format.to_le_bytes());
        out.extend_from_slice(&channels.to_le_bytes());
        out.extend_from_slice(&rate.to_le_bytes());
        out.extend_from_slice(&(rate * u32::from(channels) * u32::from(bits) / 8).to_le_bytes());
        out.extend_from_slice(&(channels * bits / 8).to_le_bytes());
        out.extend_from_slice(&bits.to_le_bytes());
        out.extend_from_slice(b"data");
        out.extend_from_slice(&(data.len() as u32).to_le_bytes());
        out.extend_from_slice(data);
        out
    }

    #[test]
    fn duration_from_sample_count() {
        let b = AudioBuffer::new(vec![0.0; 16000], 16000).unwrap();
        assert_eq!(b.duration_seconds(), 1.0);
        let b = AudioBuffer::new(vec![0.0; 8000], 16000).unwrap();
        assert_eq!(b.duration_seconds(), 0.5);
        let b = AudioBuffer::new(vec![], 16000).unwrap();
        assert_eq!(b.duration_seconds(), 0.0);
    }

    #[test]
    fn read_maps_extremes() {
        let path = tmp_wav("extremes.wav");
        let data: Vec<u8> = [(-32768i16), 0, 32767]
            .iter()
            .flat_map(|s| s.to_le_bytes())
            .collect();
        fs::write(&path, raw_wav(1, 1, 16000, 16, &data)).unwrap();
        let b = read_wav(&path).unwrap();
        assert_eq!(b.samples(), &[-1.0, 0.0, 32767.0 / 32768.0]);
        assert_eq!(b.sample_rate(), 16000);
        assert_eq!(b.source_path(), Some(path.as_path()));
    }

    #[test]
    fn write_encodes_boundaries() {
        let path = tmp_wav("boundaries.wav");
        let b = AudioBuffer::new(vec![1.0, 0.0, -1.0], 8000).unwrap();
        write_wav(&b, &path).unwrap();
        let bytes = fs::read(&path).unwrap();
        let ints: Vec<i16> = bytes[44..]
            .chunks_exact(2)
            .map(|p| i16::from_le_bytes([p[0], p[1]]))
            .collect();
        assert_eq!(ints, vec![32767, 0, -32767]);
    }

    #[test]
    fn round_trip_matches_documented_quantizer() {
        let mut rng = StdRng::seed_from_u64(11);
        for case in 0..20 {
            let n = rng.random_range(1..2000);
            let samples: Vec<f32> = (0..n).map(|_| rng.random_range(-1.0f32..=1.0)).collect();
            let b = AudioBuffer::new(samples.clone(), 16000).unwrap();
            let path = tmp_wav(&format!("quant{case}.wav"));
            write_wav(&b, &path).unwrap();
            let back = read_wav(&path).unwrap();
            assert_eq!(back.len(), b.len());
            for (i, (&a, &r)) in samples.iter().zip(back.samples()).enumerate() {
                // Independent restatement of the write convention.
                let expected =
                    (f64::from(a) * 32767.0).round().clamp(-32768.0, 32767.0) as f32 / 32768.0;
                assert_eq!(r, expected, "case {case} sample {i}");
                // Provable worst-case bound for arbitrary amplitudes.
                assert!((f64::from(a) - f64::from(r)).abs() <= 1.5 / 32768.0);
            }
        }
    }

    #[test]
    fn round_trip_on_grid_is_within_one_step() {
        // Amplitudes that came from a 16-bit file round-trip to within one
        // quantization step.
        let mut rng = StdRng::seed_from_u64(12);
        let samples: Vec<f32> = (0..5000)
            .map(|_| f32::from(rng.random_range(-32768i32..=32767) as i16) / 32768.0)
            .collect();
        let b = AudioBuffer::new(samples.clone(), 16000).unwrap();
        let path = tmp_wav("grid.wav");
        write_wav(&b, &path).unwrap();
        let back = read_wav(&path).unwrap();
        for (&a, &r) in samples.iter().zip(back.samples()) {
            assert!((f64::from(a) - f64::from(r)).abs() <= 1.0 / 32767.0);
        }
    }

    #[test]
    fn header_only_duration_matches_full_read() {
        let path = tmp_wav("hdr.wav");
        let b = AudioBuffer::new(vec![0.25; 12345], 16000).unwrap();
        write_wav(&b, &path).unwrap();
        assert_eq!(wav_duration_seconds(&path).unwrap(), b.duration_seconds());
    }

    #[test]
    fn rejects_unsupported_encodings() {
        let cases: [(u16, u16, u16); 3] = [(3, 1, 16), (1, 2, 16), (1, 1, 8)];
        for (i, (format, channels, bits)) in cases.into_iter().enumerate() {
            let path = tmp_wav(&format!("bad{i}.wav"));
            fs::write(&path, raw_wav(format, channels, 16000, bits, &[0u8; 8])).unwrap();
            let err = read_wav(&path).unwrap_err();
            match (format, channels, bits) {
                (3, _, _) => assert!(matches!(err, AudioError::NotPcm { format: 3, .. })),
                (_, 2, _) => assert!(matches!(err, AudioError::NotMono { channels: 2, .. })),
                _ => assert!(matches!(err, AudioError::NotSixteenBit { bits: 8, .. })),
            }
        }
    }

    #[test]
    fn rejects_truncated_data_chunk() {
        let path = tmp_wav("trunc.wav");
        let mut bytes = raw_wav(1, 1, 16000, 16, &[0u8; 64]);
        bytes.truncate(bytes.len() - 10);
        fs::write(&path, bytes).unwrap();
        match read_wav(&path).unwrap_err() {
            AudioError::TruncatedData {
                declared,
                available,
                ..
            } => {
                assert_eq!(declared, 64);
                assert_eq!(available, 54);
            }
            other => panic!("expected TruncatedData, got {other}"),
        }
    }

    #[test]
    fn rejects_garbage_and_missing_files() {
        let path = tmp_wav("garbage.wav");
        fs::write(&path, b"definitely not audio").unwrap();
        assert!(matches!(read_wav(&path), Err(AudioError::NotWave { .. })));
        assert!(matches!(
            read_wav(tmp_wav("does-not-exist.wav")),
            Err(AudioError::Read { .. })
        ));
    }

    #[test]
    fn write_rejects_out_of_range() {
        let b = AudioBuffer::new(vec![0.0, 1.25], 16000).unwrap();
        let err = write_wav(&b, tmp_wav("oor.wav")).unwrap_err();
        assert!(matches!(err, AudioError::OutOfRange { index: 1, .. }));
    }

    #[test]
    fn constructor_rejects_bad_inputs() {
        assert!(matches!(
            AudioBuffer::new(vec![f32::NAN], 16000),
            Err(AudioError::NotFinite { index: 0, .. })
        ));
        assert!(matches!(
            AudioBuffer::new(vec![], 0),
            Err(AudioError::InvalidSampleRate)
        ));
    }
}
