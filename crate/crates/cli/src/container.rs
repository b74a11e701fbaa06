//! Binary hologram container.
//!
//! Layout, all little-endian:
//!
//! ```text
//! magic      8 bytes  "WSPLHOLO"
//! version    u32      1
//! ny, nx     u32, u32
//! pitch      f64
//! wavelength f64 × 3
//! frames     u32
//! mode       u8       0 rp_structured, 1 rp_spatial, 2 sp_smooth
//! reserved   3 bytes  zero
//! seed       u64
//! digest     32 bytes scene SHA-256
//! samples    f32 (re, im) pairs, channel-major, then frame, then row-major pixels
//! ```

use std::path::Path;

use ndarray::Array2;
use num_complex::Complex64;

use wavesplat_core::compositor::TimeMultiplexedHologram;
use wavesplat_core::WaveField;

use crate::error::{CliError, CliResult};

pub const MAGIC: &[u8; 8] = b"WSPLHOLO";
pub const VERSION: u32 = 1;
const HEADER_LEN: usize = 8 + 4 + 8 + 8 + 24 + 4 + 4 + 8 + 32;

/// Header fields of a container, independent of the sample payload.
#[derive(Debug, Clone, PartialEq)]
pub struct Header {
    pub ny: usize,
    pub nx: usize,
    pub pitch: f64,
    pub wavelengths: [f64; 3],
    pub frames: usize,
    pub mode_code: u8,
    pub seed: u64,
    pub scene_digest: [u8; 32],
}

impl Header {
    pub fn mode_name(&self) -> &'static str {
        match self.mode_code {
            0 => "rp_structured",
            1 => "rp_spatial",
            _ => "sp_smooth",
        }
    }
}

#[derive(Debug, Clone)]
pub struct Container {
    pub header: Header,
    /// `channels[c][t]`, at the SLM plane.
    pub channels: Vec<Vec<WaveField>>,
}

pub fn encode(h: &TimeMultiplexedHologram) -> Vec<u8> {
    let (ny, nx) = h.shape();
    let frames = h.n_frames();
    let mut out = Vec::with_capacity(HEADER_LEN + 3 * frames * ny * nx * 8);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(ny as u32).to_le_bytes());
    out.extend_from_slice(&(nx as u32).to_le_bytes());
    let first = &h.channels[0][0];
    out.extend_from_slice(&first.pitch.to_le_bytes());
    for ch in &h.channels {
        out.extend_from_slice(&ch[0].wavelength.to_le_bytes());
    }
    out.extend_from_slice(&(frames as u32).to_le_bytes());
    out.extend_from_slice(&[h.mode.code(), 0, 0, 0]);
    out.extend_from_slice(&h.seed.to_le_bytes());
    let mut digest = [0u8; 32];
    if let Ok(d) = hex::decode(&h.scene_digest) {
        let n = d.len().min(32);
        digest[..n].copy_from_slice(&d[..n]);
    }
    out.extend_from_slice(&digest);
    for ch in &h.channels {
        for f in ch {
            for c in f.samples.iter() {
                out.extend_from_slice(&(c.re as f32).to_le_bytes());
                out.extend_from_slice(&(c.im as f32).to_le_bytes());
            }
        }
    }
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    at: usize,
}

impl Reader<'_> {
    fn take<const N: usize>(&mut self) -> [u8; N] {
        let v: [u8; N] = self.bytes[self.at..self.at + N].try_into().expect("length checked");
        self.at += N;
        v
    }
    fn u32(&mut self) -> u32 {
        u32::from_le_bytes(self.take())
    }
    fn f64(&mut self) -> f64 {
        f64::from_le_bytes(self.take())
    }
}

pub fn decode(bytes: &[u8], path: &Path) -> CliResult<Container> {
    let err = |m: String| CliError::format(path, m);
    if bytes.len() < HEADER_LEN {
        return Err(err(format!("file is {} bytes, shorter than the {HEADER_LEN}-byte header", bytes.len())));
    }
    if &bytes[..8] != MAGIC {
        return Err(err("not a hologram container (bad magic)".into()));
    }
    let mut r = Reader { bytes, at: 8 };
    let version = r.u32();
    if version != VERSION {
        return Err(err(format!("unsupported container version {version}")));
    }
    let (ny, nx) = (r.u32() as usize, r.u32() as usize);
    let pitch = r.f64();
    let wavelengths = [r.f64(), r.f64(), r.f64()];
    let frames = r.u32() as usize;
    let [mode_code, ..] = r.take::<4>();
    let seed = u64::from_le_bytes(r.take());
    let scene_digest = r.take::<32>();
    if mode_code > 2 {
        return Err(err(format!("unknown mode code {mode_code}")));
    }
    let expected = HEADER_LEN + 3 * frames * ny * nx * 8;
    if bytes.len() != expected {
        return Err(err(format!(
            "payload holds {} bytes, header ({ny}x{nx}, {frames} frames) implies {expected}",
            bytes.len()
        )));
    }
    let mut channels = Vec::with_capacity(3);
    for wl in wavelengths {
        let mut frames_out = Vec::with_capacity(frames);
        for _ in 0..frames {
            let samples = Array2::from_shape_fn((ny, nx), |_| {
                let re = f32::from_le_bytes(r.take());
                let im = f32::from_le_bytes(r.take());
                Complex64::new(re as f64, im as f64)
            });
            frames_out.push(WaveField::from_samples(samples, pitch, wl, 0.0));
        }
        channels.push(frames_out);
    }
    Ok(Container {
        header: Header {
            ny,
            nx,
            pitch,
            wavelengths,
            frames,
            mode_code,
            seed,
            scene_digest,
        },
        channels,
    })
}

impl Container {
    pub fn read(path: &Path) -> CliResult<Self> {
        let bytes = std::fs::read(path).map_err(|e| CliError::io(path, e))?;
        decode(&bytes, path)
    }

    /// Rebuilds the in-memory hologram the core reconstruction routines take.
    pub fn to_hologram(&self) -> TimeMultiplexedHologram {
        use wavesplat_core::compositor::ModeTag;
        use wavesplat_core::spectral::KernelKind;
        let mode = match self.header.mode_code {
            0 => ModeTag::RpStructured(KernelKind::Custom),
            1 => ModeTag::RpSpatial,
            _ => ModeTag::SpSmooth,
        };
        TimeMultiplexedHologram {
            channels: self.channels.clone(),
            mode,
            seed: self.header.seed,
            scene_digest: hex::encode(self.header.scene_digest),
        }
    }
}
