//! Image export (PNG for display, PFM for lossless floats) and the run manifest.

use std::io::Write;
use std::path::{Path, PathBuf};

use ndarray::Array2;
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::{CliError, CliResult};

pub const DISPLAY_GAMMA: f64 = 2.2;

/// Linear values in `[0, peak]` to 8-bit display levels with gamma encoding.
pub fn to_display(v: f64, peak: f64) -> u8 {
    let x = if peak > 0.0 { (v / peak).clamp(0.0, 1.0) } else { 0.0 };
    (x.powf(1.0 / DISPLAY_GAMMA) * 255.0).round() as u8
}

/// One to three equally sized planes; one plane is written as grayscale.
pub fn png_bytes(planes: &[&Array2<f64>], peak: f64) -> Vec<u8> {
    let (h, w) = planes[0].dim();
    let color = planes.len() > 1;
    let mut data = Vec::with_capacity(h * w * if color { 3 } else { 1 });
    for r in 0..h {
        for c in 0..w {
            if color {
                for k in 0..3 {
                    data.push(planes.get(k).map_or(0, |p| to_display(p[(r, c)], peak)));
                }
            } else {
                data.push(to_display(planes[0][(r, c)], peak));
            }
        }
    }
    gray_or_rgb_png(&data, w, h, color)
}

pub fn png_gray8(img: &Array2<u8>) -> Vec<u8> {
    let (h, w) = img.dim();
    gray_or_rgb_png(&img.iter().copied().collect::<Vec<_>>(), w, h, false)
}

fn gray_or_rgb_png(data: &[u8], w: usize, h: usize, color: bool) -> Vec<u8> {
    let mut out = Vec::new();
    {
        let mut enc = png::Encoder::new(&mut out, w as u32, h as u32);
        enc.set_color(if color { png::ColorType::Rgb } else { png::ColorType::Grayscale });
        enc.set_depth(png::BitDepth::Eight);
        let mut writer = enc.write_header().expect("in-memory PNG header");
        writer.write_image_data(data).expect("in-memory PNG data");
    }
    out
}

/// Portable float map: `Pf` for one plane, `PF` for three. Little-endian,
/// rows stored bottom to top as the format requires.
pub fn pfm_bytes(planes: &[&Array2<f64>]) -> Vec<u8> {
    let (h, w) = planes[0].dim();
    let color = planes.len() > 1;
    let mut out = format!("{}\n{w} {h}\n-1.0\n", if color { "PF" } else { "Pf" }).into_bytes();
    for r in (0..h).rev() {
        for c in 0..w {
            if color {
                for k in 0..3 {
                    let v = planes.get(k).map_or(0.0, |p| p[(r, c)]);
                    out.extend_from_slice(&(v as f32).to_le_bytes());
                }
            } else {
                out.extend_from_slice(&(planes[0][(r, c)] as f32).to_le_bytes());
            }
        }
    }
    out
}

/// Planes of a PFM or PNG image (PNG levels scaled to `[0, 1]`, gamma left in place).
pub fn read_image(path: &Path) -> CliResult<Vec<Array2<f64>>> {
    let bytes = std::fs::read(path).map_err(|e| CliError::io(path, e))?;
    if bytes.starts_with(b"Pf") || bytes.starts_with(b"PF") {
        parse_pfm(&bytes).ok_or_else(|| CliError::format(path, "malformed PFM"))
    } else if bytes.starts_with(b"\x89PNG") {
        parse_png(&bytes).map_err(|m| CliError::format(path, m))
    } else {
        Err(CliError::format(path, "unrecognized image format (expected PNG or PFM)"))
    }
}

fn parse_pfm(bytes: &[u8]) -> Option<Vec<Array2<f64>>> {
    let mut fields = Vec::new();
    let mut at = 0;
    while fields.len() < 4 {
        while bytes.get(at)?.is_ascii_whitespace() {
            at += 1;
        }
        let start = at;
        while !bytes.get(at)?.is_ascii_whitespace() {
            at += 1;
        }
        fields.push(std::str::from_utf8(&bytes[start..at]).ok()?.to_string());
    }
    at += 1;
    let channels = match fields[0].as_str() {
        "Pf" => 1,
        "PF" => 3,
        _ => return None,
    };
    let w: usize = fields[1].parse().ok()?;
    let h: usize = fields[2].parse().ok()?;
    let little = fields[3].parse::<f64>().ok()? < 0.0;
    let body = bytes.get(at..)?;
    if body.len() != w * h * channels * 4 {
        return None;
    }
    let value = |i: usize| {
        let b: [u8; 4] = body[4 * i..4 * i + 4].try_into().expect("4 bytes");
        (if little { f32::from_le_bytes(b) } else { f32::from_be_bytes(b) }) as f64
    };
    Some(
        (0..channels)
            .map(|k| Array2::from_shape_fn((h, w), |(r, c)| value(((h - 1 - r) * w + c) * channels + k)))
            .collect(),
    )
}

fn parse_png(bytes: &[u8]) -> Result<Vec<Array2<f64>>, String> {
    let mut dec = png::Decoder::new(std::io::Cursor::new(bytes));
    dec.set_transformations(png::Transformations::EXPAND | png::Transformations::STRIP_16);
    let mut reader = dec.read_info().map_err(|e| e.to_string())?;
    let mut buf = vec![0; reader.output_buffer_size().ok_or("PNG too large")?];
    let info = reader.next_frame(&mut buf).map_err(|e| e.to_string())?;
    let (w, h) = (info.width as usize, info.height as usize);
    let stride = info.color_type.samples();
    let planes = match info.color_type {
        png::ColorType::Grayscale | png::ColorType::GrayscaleAlpha => 1,
        _ => 3,
    };
    Ok((0..planes)
        .map(|k| Array2::from_shape_fn((h, w), |(r, c)| buf[(r * w + c) * stride + k] as f64 / 255.0))
        .collect())
}

#[derive(Debug, Serialize)]
pub struct FileEntry {
    pub path: String,
    pub bytes: u64,
    pub sha256: String,
}

#[derive(Debug, Serialize)]
pub struct Manifest {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: String,
    pub config_digest: String,
    pub seed: u64,
    pub frames: usize,
    pub mode: String,
    pub timings_ms: Vec<(String, f64)>,
    pub files: Vec<FileEntry>,
}

/// Collects the files a command writes so the manifest can hash each one.
pub struct OutputDir {
    pub dir: PathBuf,
    files: Vec<FileEntry>,
}

impl OutputDir {
    pub fn create(dir: &Path) -> CliResult<Self> {
        std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
        Ok(OutputDir {
            dir: dir.to_path_buf(),
            files: Vec::new(),
        })
    }

    pub fn write(&mut self, name: &str, bytes: &[u8]) -> CliResult<PathBuf> {
        let path = self.dir.join(name);
        let mut f = std::fs::File::create(&path).map_err(|e| CliError::io(&path, e))?;
        f.write_all(bytes).map_err(|e| CliError::io(&path, e))?;
        self.files.push(FileEntry {
            path: name.to_string(),
            bytes: bytes.len() as u64,
            sha256: hex::encode(Sha256::digest(bytes)),
        });
        Ok(path)
    }

    pub fn finish(mut self, mut manifest: Manifest) -> CliResult<PathBuf> {
        manifest.files = std::mem::take(&mut self.files);
        let json = serde_json::to_vec_pretty(&manifest).expect("manifest serializes");
        let path = self.dir.join("manifest.json");
        std::fs::write(&path, json).map_err(|e| CliError::io(&path, e))?;
        Ok(path)
    }
}
