//! Sampled complex fields, centered unitary transforms and frequency grids.
//!
//! Conventions used throughout the crate:
//! * arrays are row-major `(row, col) = (y, x)`;
//! * pixel `c` of an axis with `n` samples sits at `(c - n/2) * pitch`, so the
//!   pixel with index `n/2` is the optical axis;
//! * spectra are DC-centered (bin `n/2` is zero frequency) and the transform
//!   pair is unitary (`1/sqrt(N)` each way).

use std::collections::HashMap;
use std::f64::consts::PI;
use std::sync::{Arc, Mutex, OnceLock};

use ndarray::{Array2, Zip};
use num_complex::Complex64;
use rustfft::{Fft, FftDirection, FftPlanner};

use crate::error::{Error, Result};

/// Default pixel pitch of the reference phase SLM (8 µm).
pub const DEFAULT_PITCH: f64 = 8e-6;
/// Default red/green/blue laser lines in meters.
pub const DEFAULT_WAVELENGTHS: [f64; 3] = [638e-9, 520e-9, 450e-9];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OpticsConfig {
    pub pixel_pitch: f64,
    pub wavelengths: [f64; 3],
    pub grid_ny: usize,
    pub grid_nx: usize,
}

impl OpticsConfig {
    pub fn new(pixel_pitch: f64, wavelengths: [f64; 3], grid_ny: usize, grid_nx: usize) -> Result<Self> {
        let cfg = OpticsConfig {
            pixel_pitch,
            wavelengths,
            grid_ny,
            grid_nx,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Square grid at the default pitch and wavelengths.
    pub fn square(n: usize) -> Self {
        OpticsConfig {
            pixel_pitch: DEFAULT_PITCH,
            wavelengths: DEFAULT_WAVELENGTHS,
            grid_ny: n,
            grid_nx: n,
        }
    }

    /// 1920×1080 SLM at 8 µm.
    pub fn full_hd() -> Self {
        OpticsConfig {
            pixel_pitch: DEFAULT_PITCH,
            wavelengths: DEFAULT_WAVELENGTHS,
            grid_ny: 1080,
            grid_nx: 1920,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.pixel_pitch.is_finite() && self.pixel_pitch > 0.0) {
            return Err(Error::InvalidOptics(format!("pixel pitch must be > 0, got {}", self.pixel_pitch)));
        }
        if let Some(w) = self.wavelengths.iter().find(|w| !(w.is_finite() && **w > 0.0)) {
            return Err(Error::InvalidOptics(format!("wavelengths must be > 0, got {w}")));
        }
        if self.grid_ny < 2 || self.grid_nx < 2 {
            return Err(Error::InvalidOptics(format!(
                "grid must be at least 2x2, got {}x{}",
                self.grid_ny, self.grid_nx
            )));
        }
        Ok(())
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.grid_ny, self.grid_nx)
    }

    pub fn wavelength(&self, channel: usize) -> Result<f64> {
        self.wavelengths
            .get(channel)
            .copied()
            .ok_or(Error::InvalidChannel(channel))
    }

    pub fn wavenumber(&self, channel: usize) -> Result<f64> {
        Ok(2.0 * PI / self.wavelength(channel)?)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct WaveField {
    pub samples: Array2<Complex64>,
    pub pitch: f64,
    pub wavelength: f64,
    pub plane_z: f64,
}

impl WaveField {
    pub fn zeros(shape: (usize, usize), pitch: f64, wavelength: f64, plane_z: f64) -> Self {
        WaveField {
            samples: Array2::zeros(shape),
            pitch,
            wavelength,
            plane_z,
        }
    }

    pub fn from_samples(samples: Array2<Complex64>, pitch: f64, wavelength: f64, plane_z: f64) -> Self {
        WaveField {
            samples,
            pitch,
            wavelength,
            plane_z,
        }
    }

    pub fn shape(&self) -> (usize, usize) {
        self.samples.dim()
    }

    pub fn wavenumber(&self) -> f64 {
        2.0 * PI / self.wavelength
    }

    /// Σ|u|² · pitch².
    pub fn energy(&self) -> f64 {
        self.samples.iter().map(|c| c.norm_sqr()).sum::<f64>() * self.pitch * self.pitch
    }

    /// Σ|u|² without the area element.
    pub fn sum_sq(&self) -> f64 {
        self.samples.iter().map(|c| c.norm_sqr()).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.samples.iter().all(|c| c.re.is_finite() && c.im.is_finite())
    }

    pub fn with_samples(&self, samples: Array2<Complex64>) -> Self {
        WaveField {
            samples,
            pitch: self.pitch,
            wavelength: self.wavelength,
            plane_z: self.plane_z,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpectrumField {
    pub samples: Array2<Complex64>,
    pub pitch: f64,
    pub wavelength: f64,
    pub plane_z: f64,
}

impl SpectrumField {
    /// Frequency bin step `(Δf_y, Δf_x)` in cycles per meter.
    pub fn freq_step(&self) -> (f64, f64) {
        let (ny, nx) = self.samples.dim();
        (1.0 / (ny as f64 * self.pitch), 1.0 / (nx as f64 * self.pitch))
    }
}

pub fn make_field(cfg: &OpticsConfig, channel: usize, plane_z: f64) -> Result<WaveField> {
    cfg.validate()?;
    let wavelength = cfg.wavelength(channel)?;
    Ok(WaveField::zeros(cfg.shape(), cfg.pixel_pitch, wavelength, plane_z))
}

pub fn spectrum(f: &WaveField) -> SpectrumField {
    SpectrumField {
        samples: fft2_centered(&f.samples),
        pitch: f.pitch,
        wavelength: f.wavelength,
        plane_z: f.plane_z,
    }
}

pub fn inverse_spectrum(s: &SpectrumField) -> WaveField {
    WaveField {
        samples: ifft2_centered(&s.samples),
        pitch: s.pitch,
        wavelength: s.wavelength,
        plane_z: s.plane_z,
    }
}

pub fn intensity(f: &WaveField) -> Array2<f64> {
    f.samples.mapv(|c| c.norm_sqr())
}

/// Angular spatial frequencies of the centered spectral layout, in rad/m.
#[derive(Debug, Clone, PartialEq)]
pub struct FrequencyGrid {
    pub ky: Vec<f64>,
    pub kx: Vec<f64>,
}

impl FrequencyGrid {
    pub fn shape(&self) -> (usize, usize) {
        (self.ky.len(), self.kx.len())
    }

    pub fn at(&self, row: usize, col: usize) -> (f64, f64) {
        (self.kx[col], self.ky[row])
    }

    pub fn step(&self) -> (f64, f64) {
        (axis_step(&self.ky), axis_step(&self.kx))
    }

    /// |k⊥|² for every bin.
    pub fn radial_sq(&self) -> Array2<f64> {
        Array2::from_shape_fn(self.shape(), |(r, c)| self.kx[c] * self.kx[c] + self.ky[r] * self.ky[r])
    }
}

fn axis_step(axis: &[f64]) -> f64 {
    if axis.len() > 1 {
        axis[1] - axis[0]
    } else {
        0.0
    }
}

pub fn frequency_axis(n: usize, pitch: f64) -> Vec<f64> {
    let dk = 2.0 * PI / (n as f64 * pitch);
    (0..n).map(|j| (j as f64 - (n / 2) as f64) * dk).collect()
}

pub fn frequency_grid(shape: (usize, usize), pitch: f64) -> FrequencyGrid {
    FrequencyGrid {
        ky: frequency_axis(shape.0, pitch),
        kx: frequency_axis(shape.1, pitch),
    }
}

/// Physical coordinate of pixel `index` on an axis of `n` samples.
#[inline]
pub fn pixel_coord(index: usize, n: usize, pitch: f64) -> f64 {
    (index as f64 - (n / 2) as f64) * pitch
}

/// Relative L2 distance ‖a − b‖ / ‖b‖ (absolute when `b` is zero).
pub fn rel_l2(a: &Array2<Complex64>, b: &Array2<Complex64>) -> f64 {
    let mut num = 0.0;
    let mut den = 0.0;
    Zip::from(a).and(b).for_each(|x, y| {
        num += (x - y).norm_sqr();
        den += y.norm_sqr();
    });
    if den == 0.0 {
        num.sqrt()
    } else {
        (num / den).sqrt()
    }
}

pub fn rel_l2_real(a: &Array2<f64>, b: &Array2<f64>) -> f64 {
    let mut num = 0.0;
    let mut den = 0.0;
    Zip::from(a).and(b).for_each(|x, y| {
        num += (x - y) * (x - y);
        den += y * y;
    });
    if den == 0.0 {
        num.sqrt()
    } else {
        (num / den).sqrt()
    }
}

type PlanKey = (usize, bool);
type PlanCache = (FftPlanner<f64>, HashMap<PlanKey, Arc<dyn Fft<f64>>>);

fn plan(len: usize, forward: bool) -> Arc<dyn Fft<f64>> {
    static PLANS: OnceLock<Mutex<PlanCache>> = OnceLock::new();
    let cache = PLANS.get_or_init(|| Mutex::new((FftPlanner::new(), HashMap::new())));
    let mut guard = cache.lock().expect("fft plan cache poisoned");
    let (planner, plans) = &mut *guard;
    plans
        .entry((len, forward))
        .or_insert_with(|| {
            let dir = if forward { FftDirection::Forward } else { FftDirection::Inverse };
            planner.plan_fft(len, dir)
        })
        .clone()
}

/// Unnormalized 2D DFT in place on a standard-layout array.
fn fft2_in_place(data: &mut Array2<Complex64>, forward: bool) {
    let (ny, nx) = data.dim();
    if !data.is_standard_layout() {
        *data = data.as_standard_layout().into_owned();
    }
    let row_fft = plan(nx, forward);
    let col_fft = plan(ny, forward);
    let mut scratch = vec![Complex64::default(); row_fft.get_inplace_scratch_len().max(col_fft.get_inplace_scratch_len())];
    let buf = data.as_slice_mut().expect("standard layout");
    for row in buf.chunks_exact_mut(nx) {
        row_fft.process_with_scratch(row, &mut scratch);
    }
    let mut col = vec![Complex64::default(); ny * nx];
    for r in 0..ny {
        for c in 0..nx {
            col[c * ny + r] = buf[r * nx + c];
        }
    }
    for column in col.chunks_exact_mut(ny) {
        col_fft.process_with_scratch(column, &mut scratch);
    }
    for r in 0..ny {
        for c in 0..nx {
            buf[r * nx + c] = col[c * ny + r];
        }
    }
}

/// Moves index 0 to the center (`forward`) or back (`!forward`).
pub fn fftshift(a: &Array2<Complex64>, forward: bool) -> Array2<Complex64> {
    let (ny, nx) = a.dim();
    let (sy, sx) = (ny / 2, nx / 2);
    if forward {
        Array2::from_shape_fn((ny, nx), |(r, c)| a[((r + ny - sy) % ny, (c + nx - sx) % nx)])
    } else {
        Array2::from_shape_fn((ny, nx), |(r, c)| a[((r + sy) % ny, (c + sx) % nx)])
    }
}

/// Unitary forward transform with the zero frequency moved to the center.
pub fn fft2_centered(a: &Array2<Complex64>) -> Array2<Complex64> {
    let mut out = a.to_owned();
    fft2_in_place(&mut out, true);
    let scale = 1.0 / ((a.len() as f64).sqrt());
    let mut out = fftshift(&out, true);
    out.mapv_inplace(|c| c * scale);
    out
}

/// Inverse of [`fft2_centered`].
pub fn ifft2_centered(a: &Array2<Complex64>) -> Array2<Complex64> {
    let mut out = fftshift(a, false);
    fft2_in_place(&mut out, false);
    let scale = 1.0 / ((a.len() as f64).sqrt());
    out.mapv_inplace(|c| c * scale);
    out
}
