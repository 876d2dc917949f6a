//! Binary IQ import/export: interleaved little-endian 32-bit float pairs with
//! a sidecar text header. Used for sensor snapshot blocks (one channel per
//! row) and single-channel modem waveforms.
//!
//! Payload layout: sample-major, channel-interleaved. For channels c and
//! samples t the byte stream is re(c0,t0) im(c0,t0) re(c1,t0) ... as f32 LE.
//!
//! Header (text, one `key value` pair per line):
//! ```text
//! riss-iq v1
//! channels 4
//! samples 5000
//! sample_rate 1600000
//! seed 42
//! ```

use std::fs;
use std::path::Path;

use nalgebra::DMatrix;
use thiserror::Error;

use crate::C64;

#[derive(Debug, Error)]
pub enum IqError {
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("header line {line}: {message}")]
    Header { line: usize, message: String },
    #[error("payload holds {got} bytes, header implies {want}")]
    PayloadSize { want: usize, got: usize },
    #[error("data shape {rows}×{cols} does not match header {channels}×{samples}")]
    Shape { rows: usize, cols: usize, channels: usize, samples: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct IqHeader {
    pub channels: usize,
    pub samples: usize,
    pub sample_rate: f64,
    pub seed: u64,
}

impl IqHeader {
    pub fn render(&self) -> String {
        format!(
            "riss-iq v1\nchannels {}\nsamples {}\nsample_rate {}\nseed {}\n",
            self.channels, self.samples, self.sample_rate, self.seed
        )
    }

    pub fn parse(text: &str) -> Result<IqHeader, IqError> {
        let mut lines = text.lines().enumerate();
        let mut expect = |key: &str| -> Result<String, IqError> {
            let (idx, line) = lines
                .next()
                .ok_or_else(|| IqError::Header { line: 0, message: "truncated".into() })?;
            let rest = line.strip_prefix(key).ok_or_else(|| IqError::Header {
                line: idx + 1,
                message: format!("expected `{key}`, got `{line}`"),
            })?;
            Ok(rest.trim().to_string())
        };
        let version = expect("riss-iq")?;
        if version != "v1" {
            return Err(IqError::Header { line: 1, message: format!("unknown version {version}") });
        }
        let parse_usize = |s: String, line: usize| {
            s.parse::<usize>()
                .map_err(|e| IqError::Header { line, message: e.to_string() })
        };
        let channels = parse_usize(expect("channels")?, 2)?;
        let samples = parse_usize(expect("samples")?, 3)?;
        let sample_rate = expect("sample_rate")?
            .parse::<f64>()
            .map_err(|e| IqError::Header { line: 4, message: e.to_string() })?;
        let seed = expect("seed")?
            .parse::<u64>()
            .map_err(|e| IqError::Header { line: 5, message: e.to_string() })?;
        Ok(IqHeader { channels, samples, sample_rate, seed })
    }
}

/// Rows are channels, columns are samples.
pub fn encode_payload(data: &DMatrix<C64>) -> Vec<u8> {
    let mut out = Vec::with_capacity(data.len() * 8);
    for t in 0..data.ncols() {
        for c in 0..data.nrows() {
            let z = data[(c, t)];
            out.extend_from_slice(&(z.re as f32).to_le_bytes());
            out.extend_from_slice(&(z.im as f32).to_le_bytes());
        }
    }
    out
}

pub fn decode_payload(header: &IqHeader, bytes: &[u8]) -> Result<DMatrix<C64>, IqError> {
    let want = header.channels * header.samples * 8;
    if bytes.len() != want {
        return Err(IqError::PayloadSize { want, got: bytes.len() });
    }
    let mut data = DMatrix::<C64>::zeros(header.channels, header.samples);
    let mut k = 0;
    for t in 0..header.samples {
        for c in 0..header.channels {
            let re = f32::from_le_bytes(bytes[k..k + 4].try_into().unwrap());
            let im = f32::from_le_bytes(bytes[k + 4..k + 8].try_into().unwrap());
            data[(c, t)] = C64::new(re as f64, im as f64);
            k += 8;
        }
    }
    Ok(data)
}

/// Writes `<base>.iq` (payload) and `<base>.iqh` (header).
pub fn save_iq(
    base: &Path,
    header: &IqHeader,
    data: &DMatrix<C64>,
) -> Result<(), IqError> {
    if data.nrows() != header.channels || data.ncols() != header.samples {
        return Err(IqError::Shape {
            rows: data.nrows(),
            cols: data.ncols(),
            channels: header.channels,
            samples: header.samples,
        });
    }
    fs::write(base.with_extension("iqh"), header.render())?;
    fs::write(base.with_extension("iq"), encode_payload(data))?;
    Ok(())
}

pub fn load_iq(base: &Path) -> Result<(IqHeader, DMatrix<C64>), IqError> {
    let header = IqHeader::parse(&fs::read_to_string(base.with_extension("iqh"))?)?;
    let bytes = fs::read(base.with_extension("iq"))?;
    let data = decode_payload(&header, &bytes)?;
    Ok((header, data))
}

/// Single-channel convenience for modem waveforms.
pub fn waveform_matrix(samples: &[C64]) -> DMatrix<C64> {
    DMatrix::from_fn(1, samples.len(), |_, t| samples[t])
}
