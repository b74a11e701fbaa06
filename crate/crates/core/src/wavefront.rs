//! Rasterized amplitude footprints and unit-phase primitive wavefronts.

use ndarray::{s, Array2};
use num_complex::Complex64;

use crate::error::Result;
use crate::field::{pixel_coord, OpticsConfig, WaveField};
use crate::splat::GaussianPrimitive;

/// Amplitudes below this are flushed to zero.
pub const FLUSH: f64 = 1e-6;
/// Eigenvalue floor of the projected covariance, in pixels.
pub const MIN_SIGMA_PX: f64 = 0.3;

pub type Cov2 = [[f64; 2]; 2];

/// Top-left 2×2 block of `R·diag(s₀², s₁², 0)·Rᵀ` (no regularization).
pub fn projected_covariance(p: &GaussianPrimitive) -> Cov2 {
    let r = &p.rot;
    let s2 = [p.scales[0] * p.scales[0], p.scales[1] * p.scales[1]];
    let mut c = [[0.0; 2]; 2];
    for (i, row) in c.iter_mut().enumerate() {
        for (j, v) in row.iter_mut().enumerate() {
            *v = (0..2).map(|a| r[i][a] * s2[a] * r[j][a]).sum();
        }
    }
    c
}

/// Projected covariance with eigenvalues floored at `(0.3·pitch)²`.
pub fn project_covariance(p: &GaussianPrimitive, pitch: f64) -> Cov2 {
    regularize(projected_covariance(p), (MIN_SIGMA_PX * pitch).powi(2))
}

fn regularize(c: Cov2, floor: f64) -> Cov2 {
    let (a, b, d) = (c[0][0], 0.5 * (c[0][1] + c[1][0]), c[1][1]);
    let mean = 0.5 * (a + d);
    let rad = (0.25 * (a - d) * (a - d) + b * b).sqrt();
    let (l1, l2) = (mean + rad, mean - rad);
    if l2 >= floor {
        return [[a, b], [b, d]];
    }
    // unit eigenvector for l1
    let (vx, vy) = if b.abs() > 1e-300 {
        let n = ((l1 - d).powi(2) + b * b).sqrt();
        ((l1 - d) / n, b / n)
    } else if a >= d {
        (1.0, 0.0)
    } else {
        (0.0, 1.0)
    };
    let (m1, m2) = (l1.max(floor), l2.max(floor));
    [
        [m1 * vx * vx + m2 * vy * vy, (m1 - m2) * vx * vy],
        [(m1 - m2) * vx * vy, m1 * vy * vy + m2 * vx * vx],
    ]
}

/// Real amplitude `a_i(x)` stored over its bounding window only.
#[derive(Debug, Clone, PartialEq)]
pub struct PrimitiveFootprint {
    /// Full grid shape `(ny, nx)`.
    pub shape: (usize, usize),
    /// Top-left pixel of `window` in the full grid.
    pub origin: (usize, usize),
    pub window: Array2<f64>,
    pub plane_z: f64,
    pub primitive_id: u64,
    /// `None` for footprints not produced by rasterizing a Gaussian.
    pub cov2d: Option<Cov2>,
}

impl PrimitiveFootprint {
    /// Wraps a full-grid amplitude map. Values must lie in `[0, 1]`.
    pub fn from_dense(amplitude: Array2<f64>, plane_z: f64, primitive_id: u64) -> Self {
        PrimitiveFootprint {
            shape: amplitude.dim(),
            origin: (0, 0),
            window: amplitude,
            plane_z,
            primitive_id,
            cov2d: None,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.window.is_empty() || self.window.iter().all(|v| *v == 0.0)
    }

    /// Row/column ranges of the window in the full grid.
    pub fn bounds(&self) -> (std::ops::Range<usize>, std::ops::Range<usize>) {
        let (h, w) = self.window.dim();
        (self.origin.0..self.origin.0 + h, self.origin.1..self.origin.1 + w)
    }

    pub fn to_dense(&self) -> Array2<f64> {
        let mut out = Array2::zeros(self.shape);
        let (rows, cols) = self.bounds();
        out.slice_mut(s![rows, cols]).assign(&self.window);
        out
    }

    pub fn sum(&self) -> f64 {
        self.window.sum()
    }
}

/// Samples `exp(−½ dᵀ Σ⁻¹ d)` at pixel centers, flushing values below [`FLUSH`].
///
/// A primitive whose flush ellipse misses the grid yields an empty footprint
/// (`is_empty()` is true).
pub fn rasterize_gaussian(p: &GaussianPrimitive, cfg: &OpticsConfig) -> PrimitiveFootprint {
    let pitch = cfg.pixel_pitch;
    let (ny, nx) = cfg.shape();
    let cov = project_covariance(p, pitch);
    let det = cov[0][0] * cov[1][1] - cov[0][1] * cov[1][0];
    let inv = [[cov[1][1] / det, -cov[0][1] / det], [-cov[1][0] / det, cov[0][0] / det]];
    // Mahalanobis radius where the Gaussian reaches the flush level
    let r2 = -2.0 * FLUSH.ln();
    let (hx, hy) = ((r2 * cov[0][0]).sqrt(), (r2 * cov[1][1]).sqrt());
    let [mx, my, z] = p.mean;

    let to_index = |coord: f64, n: usize| coord / pitch + (n / 2) as f64;
    let c_lo = to_index(mx - hx, nx).ceil().max(0.0);
    let c_hi = to_index(mx + hx, nx).floor().min(nx as f64 - 1.0);
    let r_lo = to_index(my - hy, ny).ceil().max(0.0);
    let r_hi = to_index(my + hy, ny).floor().min(ny as f64 - 1.0);

    if !(c_lo <= c_hi && r_lo <= r_hi) {
        return PrimitiveFootprint {
            shape: (ny, nx),
            origin: (0, 0),
            window: Array2::zeros((0, 0)),
            plane_z: z,
            primitive_id: p.id,
            cov2d: Some(cov),
        };
    }
    let (r0, c0) = (r_lo as usize, c_lo as usize);
    let (h, w) = (r_hi as usize - r0 + 1, c_hi as usize - c0 + 1);
    let window = Array2::from_shape_fn((h, w), |(r, c)| {
        let dx = pixel_coord(c0 + c, nx, pitch) - mx;
        let dy = pixel_coord(r0 + r, ny, pitch) - my;
        let q = dx * (inv[0][0] * dx + inv[0][1] * dy) + dy * (inv[1][0] * dx + inv[1][1] * dy);
        let a = (-0.5 * q).exp();
        if a < FLUSH {
            0.0
        } else {
            a
        }
    });
    PrimitiveFootprint {
        shape: (ny, nx),
        origin: (r0, c0),
        window,
        plane_z: z,
        primitive_id: p.id,
        cov2d: Some(cov),
    }
}

/// `a(x)·e^{i·k·z}` on the full grid for the given channel's wavelength.
pub fn primitive_wavefront(fp: &PrimitiveFootprint, cfg: &OpticsConfig, channel: usize) -> Result<WaveField> {
    let k = cfg.wavenumber(channel)?;
    let phase = Complex64::from_polar(1.0, k * fp.plane_z);
    let samples = fp.to_dense().mapv(|a| phase * a);
    Ok(WaveField::from_samples(samples, cfg.pixel_pitch, cfg.wavelength(channel)?, fp.plane_z))
}
