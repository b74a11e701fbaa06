//! Angular-spectrum free-space propagation and power spectral densities.

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use ndarray::{s, Array2, Zip};
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::field::{fft2_centered, frequency_grid, ifft2_centered, rel_l2, WaveField};

/// When to apply the band-limiting mask to the transfer function.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum BandLimit {
    Off,
    On,
    /// On only when `|z|` exceeds `N·pitch²/λ` for the shorter grid axis,
    /// i.e. once the mask starts to bind.
    #[default]
    Auto,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AsmKernel {
    pub transfer: Array2<Complex64>,
    pub z: f64,
    pub wavelength: f64,
    pub band_limited: bool,
}

/// Transfer function `H(k; z)` on the centered frequency grid.
///
/// Evanescent bins (`|k⊥| ≥ 2π/λ`) are zero. With `band_limited`, bins with
/// `|f_x| ≥ 1/(λ·√((2·Δf_x·z)² + 1))` (and likewise in y) are zeroed as well.
pub fn asm_kernel(shape: (usize, usize), pitch: f64, wavelength: f64, z: f64, band_limited: bool) -> AsmKernel {
    let grid = frequency_grid(shape, pitch);
    let k = 2.0 * std::f64::consts::PI / wavelength;
    let k2 = k * k;
    let limit = |n: usize| {
        let df = 1.0 / (n as f64 * pitch);
        1.0 / (wavelength * ((2.0 * df * z).powi(2) + 1.0).sqrt())
    };
    let (fy_lim, fx_lim) = (limit(shape.0), limit(shape.1));
    let two_pi = 2.0 * std::f64::consts::PI;
    let transfer = Array2::from_shape_fn(shape, |(r, c)| {
        let (kx, ky) = grid.at(r, c);
        let kp2 = kx * kx + ky * ky;
        if kp2 >= k2 {
            return Complex64::default();
        }
        if band_limited && ((kx / two_pi).abs() >= fx_lim || (ky / two_pi).abs() >= fy_lim) {
            return Complex64::default();
        }
        Complex64::from_polar(1.0, z * (k2 - kp2).sqrt())
    });
    AsmKernel {
        transfer,
        z,
        wavelength,
        band_limited,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
struct KernelKey {
    shape: (usize, usize),
    pitch: u64,
    wavelength: u64,
    z: u64,
    band_limited: bool,
}

const KERNEL_CACHE_CAP: usize = 96;

fn cached_kernel(shape: (usize, usize), pitch: f64, wavelength: f64, z: f64, band_limited: bool) -> Arc<AsmKernel> {
    static CACHE: OnceLock<Mutex<HashMap<KernelKey, Arc<AsmKernel>>>> = OnceLock::new();
    let key = KernelKey {
        shape,
        pitch: pitch.to_bits(),
        wavelength: wavelength.to_bits(),
        z: z.to_bits(),
        band_limited,
    };
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    if let Some(k) = cache.lock().expect("kernel cache poisoned").get(&key) {
        return k.clone();
    }
    let kernel = Arc::new(asm_kernel(shape, pitch, wavelength, z, band_limited));
    let mut guard = cache.lock().expect("kernel cache poisoned");
    if guard.len() >= KERNEL_CACHE_CAP {
        guard.clear();
    }
    guard.entry(key).or_insert(kernel).clone()
}

/// Propagation settings. `Propagator::default()` is what [`propagate`] uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Propagator {
    pub band_limit: BandLimit,
    /// Propagate on a 2× zero-padded grid and crop back.
    pub pad: bool,
}

impl Propagator {
    pub fn exact() -> Self {
        Propagator {
            band_limit: BandLimit::Off,
            pad: false,
        }
    }

    pub fn padded() -> Self {
        Propagator {
            band_limit: BandLimit::Off,
            pad: true,
        }
    }

    /// Whether the mask is applied for a grid of `shape` at distance `z`.
    pub fn band_limited(&self, shape: (usize, usize), pitch: f64, wavelength: f64, z: f64) -> bool {
        match self.band_limit {
            BandLimit::Off => false,
            BandLimit::On => true,
            BandLimit::Auto => {
                let n = shape.0.min(shape.1) as f64;
                z.abs() > n * pitch * pitch / wavelength
            }
        }
    }

    pub fn kernel(&self, shape: (usize, usize), pitch: f64, wavelength: f64, z: f64) -> Arc<AsmKernel> {
        let bl = self.band_limited(shape, pitch, wavelength, z);
        cached_kernel(shape, pitch, wavelength, z, bl)
    }

    /// Propagates `f` by the signed distance `z`. Grid shape and pitch are preserved.
    pub fn propagate(&self, f: &WaveField, z: f64) -> WaveField {
        if z == 0.0 {
            return f.clone();
        }
        let samples = if self.pad {
            let (ny, nx) = f.shape();
            let mut padded = Array2::<Complex64>::zeros((2 * ny, 2 * nx));
            let (oy, ox) = (ny / 2, nx / 2);
            padded.slice_mut(s![oy..oy + ny, ox..ox + nx]).assign(&f.samples);
            let out = self.apply(&padded, f.pitch, f.wavelength, z);
            out.slice(s![oy..oy + ny, ox..ox + nx]).to_owned()
        } else {
            self.apply(&f.samples, f.pitch, f.wavelength, z)
        };
        WaveField {
            samples,
            pitch: f.pitch,
            wavelength: f.wavelength,
            plane_z: f.plane_z + z,
        }
    }

    fn apply(&self, samples: &Array2<Complex64>, pitch: f64, wavelength: f64, z: f64) -> Array2<Complex64> {
        let kernel = self.kernel(samples.dim(), pitch, wavelength, z);
        let mut spec = fft2_centered(samples);
        Zip::from(&mut spec).and(&kernel.transfer).for_each(|s, h| *s *= h);
        ifft2_centered(&spec)
    }

    /// Zeroes every spectral bin the transfer function at `z` does not pass.
    pub fn band_project(&self, f: &WaveField, z: f64) -> WaveField {
        let kernel = self.kernel(f.shape(), f.pitch, f.wavelength, z);
        let mut spec = fft2_centered(&f.samples);
        Zip::from(&mut spec).and(&kernel.transfer).for_each(|s, h| {
            if *h == Complex64::default() {
                *s = Complex64::default();
            }
        });
        f.with_samples(ifft2_centered(&spec))
    }

    pub fn round_trip_check(&self, f: &WaveField, z: f64) -> RoundTrip {
        let unpadded = Propagator { pad: false, ..*self };
        let back = unpadded.propagate(&unpadded.propagate(f, z), -z);
        let projected = if z == 0.0 { f.clone() } else { unpadded.band_project(f, z) };
        let lost: f64 = back
            .samples
            .iter()
            .zip(f.samples.iter())
            .map(|(a, b)| (a - b).norm_sqr())
            .sum();
        let total = f.sum_sq();
        RoundTrip {
            residual: rel_l2(&back.samples, &projected.samples),
            out_of_band_fraction: if total > 0.0 { lost / total } else { 0.0 },
        }
    }
}

/// Result of propagating forward and back by the same distance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RoundTrip {
    /// Relative L2 distance to the band-projected input; ~0 for a unitary band.
    pub residual: f64,
    /// ‖back − f‖² / ‖f‖²: the energy fraction the transfer function drops.
    pub out_of_band_fraction: f64,
}

pub fn propagate(f: &WaveField, z: f64) -> WaveField {
    Propagator::default().propagate(f, z)
}

pub fn round_trip_check(f: &WaveField, z: f64) -> RoundTrip {
    Propagator::default().round_trip_check(f, z)
}

/// |spectrum(f)|² per bin.
pub fn psd(f: &WaveField) -> Array2<f64> {
    fft2_centered(&f.samples).mapv(|c| c.norm_sqr())
}

/// Monte-Carlo mean PSD over `n_draws` fields produced by `sampler(draw)`.
pub fn expected_psd<F>(sampler: F, n_draws: usize, exec: Execution) -> Result<Array2<f64>>
where
    F: Fn(usize) -> WaveField + Sync + Send,
{
    if n_draws == 0 {
        return Err(Error::InvalidArgument("expected_psd needs at least one draw".into()));
    }
    let total = exec
        .map_reduce(n_draws, |i| psd(&sampler(i)), |a, b| a + b)
        .expect("n_draws > 0");
    Ok(total / n_draws as f64)
}
