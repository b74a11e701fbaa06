//! Observables from time-multiplexed holograms: focal stacks, STFT light fields
//! and epipolar images.

use std::f64::consts::PI;

use ndarray::{s, Array2, Array4, ArrayView2};
use num_complex::Complex64;

use crate::compositor::TimeMultiplexedHologram;
use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::field::{intensity, WaveField};
use crate::propagation::Propagator;

#[derive(Debug, Clone, PartialEq)]
pub struct FocalStack {
    pub depths: Vec<f64>,
    /// Channels present in `slices`, in order.
    pub channels: Vec<usize>,
    /// `slices[i][d]`: mean intensity of channel `channels[i]` at `depths[d]`.
    pub slices: Vec<Vec<Array2<f64>>>,
    pub frames_used: usize,
}

impl FocalStack {
    pub fn slice(&self, channel: usize, depth_index: usize) -> Option<&Array2<f64>> {
        let i = self.channels.iter().position(|c| *c == channel)?;
        self.slices[i].get(depth_index)
    }
}

/// All channels, default propagator, default execution.
pub fn focal_stack(h: &TimeMultiplexedHologram, depths: &[f64]) -> Result<FocalStack> {
    focal_stack_with(h, depths, &[0, 1, 2], Propagator::default(), Execution::default())
}

/// `slice(z) = (1/T)·Σ_t |P(u_t; z)|²` for the listed channels.
pub fn focal_stack_with(
    h: &TimeMultiplexedHologram,
    depths: &[f64],
    channels: &[usize],
    propagator: Propagator,
    exec: Execution,
) -> Result<FocalStack> {
    check_depths(depths)?;
    let frames: Vec<&[WaveField]> = channels.iter().map(|c| h.frames(*c)).collect::<Result<_>>()?;
    let t_count = h.n_frames();
    if t_count == 0 {
        return Err(Error::InvalidArgument("hologram has no frames".into()));
    }
    let nd = depths.len();
    let flat = exec.map(channels.len() * nd, |j| {
        let (ci, d) = (j / nd, j % nd);
        mean_intensity(frames[ci], depths[d], propagator)
    });
    let mut slices: Vec<Vec<Array2<f64>>> = vec![Vec::with_capacity(nd); channels.len()];
    for (j, img) in flat.into_iter().enumerate() {
        slices[j / nd].push(img);
    }
    Ok(FocalStack {
        depths: depths.to_vec(),
        channels: channels.to_vec(),
        slices,
        frames_used: t_count,
    })
}

/// Mean over frames of `|P(u_t; z)|²`, accumulated in frame order.
pub fn mean_intensity(frames: &[WaveField], z: f64, propagator: Propagator) -> Array2<f64> {
    let mut acc = Array2::<f64>::zeros(frames[0].shape());
    for f in frames {
        acc += &intensity(&propagator.propagate(f, z));
    }
    acc / frames.len() as f64
}

fn check_depths(depths: &[f64]) -> Result<()> {
    if depths.is_empty() {
        return Err(Error::InvalidArgument("depth list is empty".into()));
    }
    if depths.iter().any(|z| !z.is_finite()) {
        return Err(Error::NonFinite("depth list".into()));
    }
    if depths.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidArgument("depths must be strictly increasing".into()));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub enum ViewGrid {
    /// `vy × vx` centers uniformly spanning `[−π/p, π/p)` at bin midpoints.
    Uniform { vy: usize, vx: usize },
    /// One view per DFT bin of the window (a complete, energy-preserving set).
    FullBins,
    /// Explicit centers in rad/m.
    Explicit { ky: Vec<f64>, kx: Vec<f64> },
}

#[derive(Debug, Clone, PartialEq)]
pub struct LightFieldParams {
    pub window_size: usize,
    pub stride: usize,
    pub views: ViewGrid,
}

impl Default for LightFieldParams {
    fn default() -> Self {
        LightFieldParams {
            window_size: 64,
            stride: 32,
            views: ViewGrid::Uniform { vy: 10, vx: 10 },
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LightField {
    /// `(view_y, view_x, window_row, window_col)`, linear intensity.
    pub views: Array4<f64>,
    pub view_ky: Vec<f64>,
    pub view_kx: Vec<f64>,
    pub window_size: usize,
    pub stride: usize,
    /// Top-left pixel of each window along y and x.
    pub origins_y: Vec<usize>,
    pub origins_x: Vec<usize>,
}

impl LightField {
    pub fn view(&self, vy: usize, vx: usize) -> ArrayView2<'_, f64> {
        self.views.slice(s![vy, vx, .., ..])
    }

    /// Total energy of each view, `(vy, vx)`.
    pub fn view_energy(&self) -> Array2<f64> {
        let (vy, vx, _, _) = self.views.dim();
        Array2::from_shape_fn((vy, vx), |(a, b)| self.view(a, b).sum())
    }
}

/// Periodic Hann window; at 50% overlap its shifts sum to one.
pub fn hann(n: usize) -> Vec<f64> {
    (0..n).map(|i| 0.5 * (1.0 - (2.0 * PI * i as f64 / n as f64).cos())).collect()
}

fn uniform_centers(v: usize, pitch: f64) -> Vec<f64> {
    let band = 2.0 * PI / pitch;
    (0..v).map(|j| -PI / pitch + (j as f64 + 0.5) * band / v as f64).collect()
}

fn bin_centers(w: usize, pitch: f64) -> Vec<f64> {
    (0..w).map(|j| 2.0 * PI * (j as f64 - (w / 2) as f64) / (w as f64 * pitch)).collect()
}

/// Windowed Fourier transform of channel `channel`, averaged in intensity over frames.
///
/// Each view is normalized by `1/W²` in intensity (unitary over the window), so with
/// [`ViewGrid::FullBins`] the view energies sum to `Σ_x |u|²·Σ_{x₀} w²(x − x₀)`.
pub fn light_field_stft(
    h: &TimeMultiplexedHologram,
    channel: usize,
    params: &LightFieldParams,
    exec: Execution,
) -> Result<LightField> {
    let frames = h.frames(channel)?;
    if frames.is_empty() {
        return Err(Error::InvalidArgument("hologram has no frames".into()));
    }
    let (ny, nx) = frames[0].shape();
    let pitch = frames[0].pitch;
    let w = params.window_size;
    if w == 0 || w > ny || w > nx {
        return Err(Error::InvalidArgument(format!("window size {w} does not fit a {ny}x{nx} grid")));
    }
    if params.stride == 0 {
        return Err(Error::InvalidArgument("stride must be at least 1".into()));
    }
    let (ky, kx) = match &params.views {
        ViewGrid::Uniform { vy, vx } => {
            if *vy == 0 || *vx == 0 {
                return Err(Error::InvalidArgument("view grid must be non-empty".into()));
            }
            (uniform_centers(*vy, pitch), uniform_centers(*vx, pitch))
        }
        ViewGrid::FullBins => (bin_centers(w, pitch), bin_centers(w, pitch)),
        ViewGrid::Explicit { ky, kx } => (ky.clone(), kx.clone()),
    };
    let nyquist = PI / pitch;
    if ky.is_empty() || kx.is_empty() {
        return Err(Error::InvalidArgument("view grid must be non-empty".into()));
    }
    if let Some(k) = ky.iter().chain(&kx).find(|k| k.abs() > nyquist * (1.0 + 1e-12)) {
        return Err(Error::InvalidArgument(format!("view frequency {k} rad/m exceeds Nyquist {nyquist} rad/m")));
    }

    let origins = |n: usize| (0..=(n - w) / params.stride).map(|j| j * params.stride).collect::<Vec<_>>();
    let (oy, ox) = (origins(ny), origins(nx));
    let win = hann(w);
    let basis = |ks: &[f64]| {
        Array2::from_shape_fn((ks.len(), w), |(a, i)| Complex64::from_polar(1.0, -ks[a] * i as f64 * pitch))
    };
    let (ey, ex) = (basis(&ky), basis(&kx));
    let norm = 1.0 / ((w * w) as f64 * frames.len() as f64);

    let (pny, pnx) = (oy.len(), ox.len());
    let (vy, vx) = (ky.len(), kx.len());
    let cells = exec.map(pny * pnx, |j| {
        let (r0, c0) = (oy[j / pnx], ox[j % pnx]);
        let mut acc = Array2::<f64>::zeros((vy, vx));
        let mut patch = Array2::<Complex64>::zeros((w, w));
        for f in frames {
            for r in 0..w {
                for c in 0..w {
                    patch[(r, c)] = f.samples[(r0 + r, c0 + c)] * (win[r] * win[c]);
                }
            }
            // rows first: tmp[r][b] = Σ_c patch[r][c]·ex[b][c]
            let tmp = patch.dot(&ex.t());
            let spec = ey.dot(&tmp);
            acc.zip_mut_with(&spec, |a, s| *a += s.norm_sqr());
        }
        acc * norm
    });

    let mut views = Array4::<f64>::zeros((vy, vx, pny, pnx));
    for (j, cell) in cells.into_iter().enumerate() {
        let (py, px) = (j / pnx, j % pnx);
        views.slice_mut(s![.., .., py, px]).assign(&cell);
    }
    Ok(LightField {
        views,
        view_ky: ky,
        view_kx: kx,
        window_size: w,
        stride: params.stride,
        origins_y: oy,
        origins_x: ox,
    })
}

/// Horizontal epipolar image at the central view row: `(view_x, window_col)`.
pub fn epipolar(lf: &LightField, row: usize) -> Result<Array2<f64>> {
    epipolar_at(lf, lf.views.dim().0 / 2, row)
}

/// One window row stacked across the horizontal views of view row `view_row`.
pub fn epipolar_at(lf: &LightField, view_row: usize, row: usize) -> Result<Array2<f64>> {
    let (vy, _, py, _) = lf.views.dim();
    if row >= py {
        return Err(Error::InvalidArgument(format!("row {row} out of range (light field has {py} window rows)")));
    }
    if view_row >= vy {
        return Err(Error::InvalidArgument(format!("view row {view_row} out of range ({vy} view rows)")));
    }
    Ok(lf.views.slice(s![view_row, .., row, ..]).to_owned())
}
