//! Angular emission kernels `Q(k)` and random-phase modulations.

use std::f64::consts::PI;

use ndarray::{Array2, Zip};
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::field::{frequency_grid, ifft2_centered, WaveField};
use crate::rng::{DrawKey, TAG_SPATIAL, TAG_SPECTRAL};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum KernelKind {
    Uniform,
    /// Binary disc of radius `radius` (rad/m).
    Pupil { radius: f64 },
    SphericalHarmonic { l: i32, m: i32 },
    Custom,
}

/// Non-negative amplitude on the centered frequency grid, scaled so `Σq²/N = 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralKernel {
    pub q: Array2<f64>,
    pub kind: KernelKind,
    /// Factor applied to the raw profile to reach unit mean square.
    pub normalization: f64,
}

impl SpectralKernel {
    fn normalized(raw: Array2<f64>, kind: KernelKind) -> Result<Self> {
        if raw.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("kernel".into()));
        }
        if raw.iter().any(|v| *v < 0.0) {
            return Err(Error::InvalidArgument("kernel values must be non-negative".into()));
        }
        let energy: f64 = raw.iter().map(|v| v * v).sum();
        if energy <= 0.0 {
            return Err(Error::EmptyKernel(format!("{kind:?}")));
        }
        let normalization = (raw.len() as f64 / energy).sqrt();
        Ok(SpectralKernel {
            q: raw * normalization,
            kind,
            normalization,
        })
    }

    pub fn shape(&self) -> (usize, usize) {
        self.q.dim()
    }

    /// Fraction of bins with nonzero weight.
    pub fn support_fraction(&self) -> f64 {
        self.q.iter().filter(|v| **v > 0.0).count() as f64 / self.q.len() as f64
    }
}

pub fn kernel_uniform(shape: (usize, usize)) -> SpectralKernel {
    SpectralKernel {
        q: Array2::ones(shape),
        kind: KernelKind::Uniform,
        normalization: 1.0,
    }
}

/// `P(k, r)`: 1 where `‖k‖ ≤ r`, else 0. Fails when `r` is below one bin step.
pub fn kernel_pupil(shape: (usize, usize), pitch: f64, radius: f64) -> Result<SpectralKernel> {
    let grid = frequency_grid(shape, pitch);
    let (dky, dkx) = grid.step();
    let min_step = [dky, dkx].into_iter().filter(|s| *s > 0.0).fold(f64::INFINITY, f64::min);
    if !(radius > 0.0) || radius < min_step {
        return Err(Error::EmptyKernel(format!("pupil radius {radius} rad/m is below one bin ({min_step} rad/m)")));
    }
    let r2 = radius * radius;
    let raw = grid.radial_sq().mapv(|k2| if k2 <= r2 { 1.0 } else { 0.0 });
    SpectralKernel::normalized(raw, KernelKind::Pupil { radius })
}

/// `|Y_l^m(k̂)|` over the propagating band, zero elsewhere.
pub fn kernel_sh(shape: (usize, usize), pitch: f64, wavelength: f64, l: i32, m: i32) -> Result<SpectralKernel> {
    if !(0..=2).contains(&l) || m.abs() > l {
        return Err(Error::UnsupportedHarmonic { l, m });
    }
    let raw = sh_profile(shape, pitch, wavelength, l, m)?;
    SpectralKernel::normalized(raw, KernelKind::SphericalHarmonic { l, m })
}

/// Unnormalized `|Y_l^m(k̂)|` on the grid.
pub fn sh_profile(shape: (usize, usize), pitch: f64, wavelength: f64, l: i32, m: i32) -> Result<Array2<f64>> {
    let k = 2.0 * PI / wavelength;
    let grid = frequency_grid(shape, pitch);
    let mut out = Array2::zeros(shape);
    for ((r, c), v) in out.indexed_iter_mut() {
        let (kx, ky) = grid.at(r, c);
        let kz2 = k * k - kx * kx - ky * ky;
        if kz2 >= 0.0 {
            *v = real_sh(l, m, [kx / k, ky / k, kz2.sqrt() / k])?.abs();
        }
    }
    Ok(out)
}

/// Real spherical harmonics (no Condon–Shortley phase) for `l ≤ 2` at a unit direction.
pub fn real_sh(l: i32, m: i32, dir: [f64; 3]) -> Result<f64> {
    let [x, y, z] = dir;
    let c1 = (3.0 / (4.0 * PI)).sqrt();
    let c2 = 0.5 * (15.0 / PI).sqrt();
    let v = match (l, m) {
        (0, 0) => 0.5 / PI.sqrt(),
        (1, -1) => c1 * y,
        (1, 0) => c1 * z,
        (1, 1) => c1 * x,
        (2, -2) => c2 * x * y,
        (2, -1) => c2 * y * z,
        (2, 0) => 0.25 * (5.0 / PI).sqrt() * (3.0 * z * z - 1.0),
        (2, 1) => c2 * x * z,
        (2, 2) => 0.5 * c2 * (x * x - y * y),
        _ => return Err(Error::UnsupportedHarmonic { l, m }),
    };
    Ok(v)
}

/// Kernel from an arbitrary non-negative profile (normalized here).
pub fn kernel_custom(q: Array2<f64>) -> Result<SpectralKernel> {
    SpectralKernel::normalized(q, KernelKind::Custom)
}

/// Kernel from a flat little-endian `f64` grid in row-major order.
pub fn kernel_from_f64_le(bytes: &[u8], shape: (usize, usize)) -> Result<SpectralKernel> {
    let n = shape.0 * shape.1;
    if bytes.len() != 8 * n {
        return Err(Error::InvalidArgument(format!(
            "kernel file holds {} bytes, expected {} for a {}x{} grid",
            bytes.len(),
            8 * n,
            shape.0,
            shape.1
        )));
    }
    let values: Vec<f64> = bytes
        .chunks_exact(8)
        .map(|b| f64::from_le_bytes(b.try_into().expect("8-byte chunk")))
        .collect();
    kernel_custom(Array2::from_shape_vec(shape, values).expect("length checked"))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DrawMode {
    Structured,
    Spatial,
}

/// One sampled modulation `m(x)`.
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseDraw {
    pub modulation: Array2<Complex64>,
    pub key: DrawKey,
    pub mode: DrawMode,
}

impl PhaseDraw {
    pub fn t(&self) -> u64 {
        self.key.t
    }
}

/// `m = F⁻¹{q·e^{iφ}}` with `φ(k)` iid `U(−π, π)` keyed by `key`.
pub fn sample_structured(kernel: &SpectralKernel, key: DrawKey) -> PhaseDraw {
    let phases = key.phases(TAG_SPECTRAL, kernel.q.len());
    let phases = Array2::from_shape_vec(kernel.shape(), phases).expect("one phase per bin");
    let mut draw = structured_from_phases(kernel, &phases).expect("shapes agree");
    draw.key = key;
    draw
}

/// Structured modulation with caller-supplied spectral phases.
pub fn structured_from_phases(kernel: &SpectralKernel, phases: &Array2<f64>) -> Result<PhaseDraw> {
    if phases.dim() != kernel.shape() {
        return Err(Error::ShapeMismatch {
            expected: kernel.shape(),
            actual: phases.dim(),
        });
    }
    let mut spec = Array2::<Complex64>::zeros(kernel.shape());
    Zip::from(&mut spec)
        .and(&kernel.q)
        .and(phases)
        .for_each(|s, q, p| *s = Complex64::from_polar(*q, *p));
    Ok(PhaseDraw {
        modulation: ifft2_centered(&spec),
        key: DrawKey::default(),
        mode: DrawMode::Structured,
    })
}

/// `m(x) = e^{iφ(x)}` with `φ` iid `U(−π, π)` per pixel.
pub fn sample_spatial(shape: (usize, usize), key: DrawKey) -> PhaseDraw {
    let phases = key.phases(TAG_SPATIAL, shape.0 * shape.1);
    let modulation = Array2::from_shape_vec(shape, phases)
        .expect("one phase per pixel")
        .mapv(|p| Complex64::from_polar(1.0, p));
    PhaseDraw {
        modulation,
        key,
        mode: DrawMode::Spatial,
    }
}

pub fn modulate(u: &WaveField, d: &PhaseDraw) -> Result<WaveField> {
    if u.shape() != d.modulation.dim() {
        return Err(Error::ShapeMismatch {
            expected: u.shape(),
            actual: d.modulation.dim(),
        });
    }
    Ok(u.with_samples(&u.samples * &d.modulation))
}
