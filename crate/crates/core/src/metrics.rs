//! Image quality metrics on linear intensity images.

use std::ops::Range;

use ndarray::{s, Array2};

use crate::error::{Error, Result};

/// Returned for identical inputs.
pub const PSNR_CAP_DB: f64 = 120.0;

const SSIM_WINDOW: usize = 11;
const SSIM_SIGMA: f64 = 1.5;

fn same_shape(a: &Array2<f64>, b: &Array2<f64>) -> Result<()> {
    if a.dim() != b.dim() {
        return Err(Error::ShapeMismatch {
            expected: a.dim(),
            actual: b.dim(),
        });
    }
    if a.is_empty() {
        return Err(Error::InvalidArgument("empty image".into()));
    }
    Ok(())
}

pub fn mse(a: &Array2<f64>, b: &Array2<f64>) -> Result<f64> {
    same_shape(a, b)?;
    Ok(a.iter().zip(b.iter()).map(|(x, y)| (x - y).powi(2)).sum::<f64>() / a.len() as f64)
}

/// `10·log10(peak²/MSE)`, capped at [`PSNR_CAP_DB`].
pub fn psnr(a: &Array2<f64>, b: &Array2<f64>, peak: f64) -> Result<f64> {
    if !(peak > 0.0) {
        return Err(Error::InvalidArgument("peak must be positive".into()));
    }
    let m = mse(a, b)?;
    if m == 0.0 {
        return Ok(PSNR_CAP_DB);
    }
    Ok((10.0 * (peak * peak / m).log10()).min(PSNR_CAP_DB))
}

fn gaussian_window() -> Array2<f64> {
    let half = (SSIM_WINDOW / 2) as f64;
    let g: Vec<f64> = (0..SSIM_WINDOW)
        .map(|i| (-(i as f64 - half).powi(2) / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp())
        .collect();
    let total: f64 = g.iter().sum();
    Array2::from_shape_fn((SSIM_WINDOW, SSIM_WINDOW), |(r, c)| g[r] * g[c] / (total * total))
}

/// Mean SSIM over all valid 11×11 Gaussian-weighted windows (σ = 1.5),
/// with `C₁ = (0.01·L)²` and `C₂ = (0.03·L)²` for dynamic range `L`.
pub fn ssim(a: &Array2<f64>, b: &Array2<f64>, dynamic_range: f64) -> Result<f64> {
    same_shape(a, b)?;
    let (ny, nx) = a.dim();
    if ny < SSIM_WINDOW || nx < SSIM_WINDOW {
        return Err(Error::InvalidArgument(format!("SSIM needs images of at least {SSIM_WINDOW}x{SSIM_WINDOW}")));
    }
    if !(dynamic_range > 0.0) {
        return Err(Error::InvalidArgument("dynamic range must be positive".into()));
    }
    let c1 = (0.01 * dynamic_range).powi(2);
    let c2 = (0.03 * dynamic_range).powi(2);
    let w = gaussian_window();
    let (oy, ox) = (ny - SSIM_WINDOW + 1, nx - SSIM_WINDOW + 1);
    let mut total = 0.0;
    for r in 0..oy {
        for c in 0..ox {
            let pa = a.slice(s![r..r + SSIM_WINDOW, c..c + SSIM_WINDOW]);
            let pb = b.slice(s![r..r + SSIM_WINDOW, c..c + SSIM_WINDOW]);
            let (mut ma, mut mb) = (0.0, 0.0);
            for ((x, y), k) in pa.iter().zip(pb.iter()).zip(w.iter()) {
                ma += k * x;
                mb += k * y;
            }
            let (mut va, mut vb, mut cab) = (0.0, 0.0, 0.0);
            for ((x, y), k) in pa.iter().zip(pb.iter()).zip(w.iter()) {
                va += k * (x - ma) * (x - ma);
                vb += k * (y - mb) * (y - mb);
                cab += k * (x - ma) * (y - mb);
            }
            total += ((2.0 * ma * mb + c1) * (2.0 * cab + c2)) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
        }
    }
    Ok(total / (oy * ox) as f64)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Region {
    pub rows: Range<usize>,
    pub cols: Range<usize>,
}

impl Region {
    pub fn new(rows: Range<usize>, cols: Range<usize>) -> Self {
        Region { rows, cols }
    }

    pub fn full(shape: (usize, usize)) -> Self {
        Region::new(0..shape.0, 0..shape.1)
    }
}

/// `std/mean` of the pixels in `region` (population standard deviation).
pub fn speckle_contrast(img: &Array2<f64>, region: &Region) -> Result<f64> {
    let (ny, nx) = img.dim();
    if region.rows.is_empty() || region.cols.is_empty() {
        return Err(Error::InvalidArgument("empty region".into()));
    }
    if region.rows.end > ny || region.cols.end > nx {
        return Err(Error::InvalidArgument(format!("region {region:?} exceeds a {ny}x{nx} image")));
    }
    let patch = img.slice(s![region.rows.clone(), region.cols.clone()]);
    let n = patch.len() as f64;
    let mean = patch.sum() / n;
    if mean == 0.0 {
        return Err(Error::InvalidArgument("region has zero mean".into()));
    }
    let var = patch.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    Ok(var.sqrt() / mean)
}
