//! Bandwidth and defocus statistics.

use std::fmt;

use ndarray::Array2;

use crate::compositor::TimeMultiplexedHologram;
use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::field::{fft2_centered, frequency_grid, intensity, pixel_coord, WaveField};
use crate::propagation::Propagator;

/// Energy-normalized second moment of `weights` about its centroid, using
/// per-axis coordinates `ys` and `xs`.
fn central_moment(weights: &Array2<f64>, ys: &[f64], xs: &[f64]) -> Result<f64> {
    let total: f64 = weights.sum();
    if !(total > 0.0) || !total.is_finite() {
        return Err(Error::ZeroEnergy);
    }
    let (mut my, mut mx) = (0.0, 0.0);
    for ((r, c), w) in weights.indexed_iter() {
        my += w * ys[r];
        mx += w * xs[c];
    }
    my /= total;
    mx /= total;
    let mut acc = 0.0;
    for ((r, c), w) in weights.indexed_iter() {
        acc += w * ((ys[r] - my).powi(2) + (xs[c] - mx).powi(2));
    }
    Ok(acc / total)
}

/// `σ² = Σ|x − x̄|²·I(x) / Σ I(x)` in m², centered at the intensity centroid.
pub fn intensity_variance(f: &WaveField) -> Result<f64> {
    image_variance(&intensity(f), f.pitch)
}

/// [`intensity_variance`] for an intensity image sampled at `pitch`.
pub fn image_variance(img: &Array2<f64>, pitch: f64) -> Result<f64> {
    let (ny, nx) = img.dim();
    let ys: Vec<f64> = (0..ny).map(|i| pixel_coord(i, ny, pitch)).collect();
    let xs: Vec<f64> = (0..nx).map(|i| pixel_coord(i, nx, pitch)).collect();
    central_moment(img, &ys, &xs)
}

/// Central second moment of `|k|` under the power spectrum, in rad²/m².
pub fn angular_moment(f: &WaveField) -> Result<f64> {
    let grid = frequency_grid(f.shape(), f.pitch);
    let psd = fft2_centered(&f.samples).mapv(|c| c.norm_sqr());
    central_moment(&psd, &grid.ky, &grid.kx)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VariancePrediction {
    pub total: f64,
    pub spatial: f64,
    pub angular_moment: f64,
    /// `(z/k)²·angular_moment`.
    pub angular_term: f64,
}

/// `σ²(z) ≈ σ²(0) + (z/k)²·⟨|k − k̄|²⟩`.
pub fn predicted_variance(u: &WaveField, z: f64) -> Result<VariancePrediction> {
    let spatial = intensity_variance(u)?;
    let angular_moment = angular_moment(u)?;
    let angular_term = (z / u.wavenumber()).powi(2) * angular_moment;
    Ok(VariancePrediction {
        total: spatial + angular_term,
        spatial,
        angular_moment,
        angular_term,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct VarianceReport {
    pub depths: Vec<f64>,
    pub measured: Vec<f64>,
    pub predicted: Vec<f64>,
    pub spatial_term: f64,
    /// Coefficient of z² in the prediction, m²/m².
    pub angular_coefficient: f64,
}

impl VarianceReport {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("depth_m,measured_m2,predicted_m2\n");
        for i in 0..self.depths.len() {
            s.push_str(&format!("{:e},{:e},{:e}\n", self.depths[i], self.measured[i], self.predicted[i]));
        }
        s
    }

    pub fn fit(&self) -> Result<QuadraticFit> {
        quadratic_fit(&self.depths, &self.measured)
    }
}

impl fmt::Display for VarianceReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "spatial term      {:.6e} m^2", self.spatial_term)?;
        writeln!(f, "angular coeff     {:.6e} m^2/m^2", self.angular_coefficient)?;
        writeln!(f, "{:>12}  {:>14}  {:>14}  {:>8}", "depth [mm]", "measured [m2]", "predicted [m2]", "ratio")?;
        for i in 0..self.depths.len() {
            writeln!(
                f,
                "{:>12.4}  {:>14.6e}  {:>14.6e}  {:>8.4}",
                self.depths[i] * 1e3,
                self.measured[i],
                self.predicted[i],
                self.measured[i] / self.predicted[i]
            )?;
        }
        Ok(())
    }
}

/// Measured and predicted `σ²(z)` of `u` at each depth.
pub fn variance_report(u: &WaveField, depths: &[f64], propagator: Propagator, exec: Execution) -> Result<VarianceReport> {
    if depths.is_empty() {
        return Err(Error::InvalidArgument("depth list is empty".into()));
    }
    let base = predicted_variance(u, 0.0)?;
    let coeff = base.angular_moment / u.wavenumber().powi(2);
    let measured = exec
        .map(depths.len(), |i| intensity_variance(&propagator.propagate(u, depths[i])))
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    Ok(VarianceReport {
        depths: depths.to_vec(),
        measured,
        predicted: depths.iter().map(|z| base.spatial + coeff * z * z).collect(),
        spatial_term: base.spatial,
        angular_coefficient: coeff,
    })
}

/// Least-squares `y ≈ c0 + c1·x + c2·x²`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadraticFit {
    pub c0: f64,
    pub c1: f64,
    pub c2: f64,
    pub r_squared: f64,
}

impl QuadraticFit {
    pub fn eval(&self, x: f64) -> f64 {
        self.c0 + self.c1 * x + self.c2 * x * x
    }
}

pub fn quadratic_fit(x: &[f64], y: &[f64]) -> Result<QuadraticFit> {
    if x.len() != y.len() || x.len() < 3 {
        return Err(Error::InvalidArgument("quadratic fit needs at least three (x, y) pairs".into()));
    }
    // scale x to [−1, 1] for conditioning
    let scale = x.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if scale == 0.0 {
        return Err(Error::InvalidArgument("quadratic fit needs distinct x values".into()));
    }
    let mut ata = [[0.0; 3]; 3];
    let mut aty = [0.0; 3];
    for (xi, yi) in x.iter().zip(y) {
        let t = xi / scale;
        let row = [1.0, t, t * t];
        for i in 0..3 {
            aty[i] += row[i] * yi;
            for j in 0..3 {
                ata[i][j] += row[i] * row[j];
            }
        }
    }
    let c = solve3(ata, aty).ok_or_else(|| Error::InvalidArgument("quadratic fit is singular".into()))?;
    let fit = QuadraticFit {
        c0: c[0],
        c1: c[1] / scale,
        c2: c[2] / (scale * scale),
        r_squared: 0.0,
    };
    let mean = y.iter().sum::<f64>() / y.len() as f64;
    let ss_tot: f64 = y.iter().map(|v| (v - mean).powi(2)).sum();
    let ss_res: f64 = x.iter().zip(y).map(|(a, b)| (b - fit.eval(*a)).powi(2)).sum();
    let r_squared = if ss_tot > 0.0 { 1.0 - ss_res / ss_tot } else { 1.0 };
    Ok(QuadraticFit { r_squared, ..fit })
}

/// Gaussian elimination with partial pivoting.
fn solve3(mut a: [[f64; 3]; 3], mut b: [f64; 3]) -> Option<[f64; 3]> {
    for col in 0..3 {
        let piv = (col..3).max_by(|i, j| a[*i][col].abs().total_cmp(&a[*j][col].abs()))?;
        if a[piv][col].abs() < 1e-300 {
            return None;
        }
        a.swap(col, piv);
        b.swap(col, piv);
        for row in col + 1..3 {
            let f = a[row][col] / a[col][col];
            for k in col..3 {
                a[row][k] -= f * a[col][k];
            }
            b[row] -= f * b[col];
        }
    }
    let mut x = [0.0; 3];
    for row in (0..3).rev() {
        let s: f64 = (row + 1..3).map(|k| a[row][k] * x[k]).sum();
        x[row] = (b[row] - s) / a[row][row];
    }
    Some(x)
}

#[derive(Debug, Clone, PartialEq)]
pub struct BandwidthReport {
    /// Fraction of propagating-band bins whose mean PSD exceeds 10% of the band mean.
    pub coverage: f64,
    /// Coefficient of variation of the mean PSD over the band.
    pub cov: f64,
    /// Mean PSD per integer bin radius from DC.
    pub radial_profile: Vec<f64>,
    pub band_bins: usize,
    pub mean_psd: Array2<f64>,
}

impl fmt::Display for BandwidthReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "band bins   {}", self.band_bins)?;
        writeln!(f, "coverage    {:.4}", self.coverage)?;
        writeln!(f, "psd cov     {:.4}", self.cov)?;
        writeln!(f, "radius  mean_psd")?;
        for (r, v) in self.radial_profile.iter().enumerate() {
            writeln!(f, "{r:>6}  {v:.6e}")?;
        }
        Ok(())
    }
}

/// Mean over frames of `|spectrum|²`.
pub fn mean_psd(frames: &[WaveField], exec: Execution) -> Result<Array2<f64>> {
    if frames.is_empty() {
        return Err(Error::InvalidArgument("no frames".into()));
    }
    let total = exec
        .map_reduce(frames.len(), |t| fft2_centered(&frames[t].samples).mapv(|c| c.norm_sqr()), |a, b| a + b)
        .expect("non-empty");
    Ok(total / frames.len() as f64)
}

pub fn bandwidth_report(h: &TimeMultiplexedHologram, channel: usize) -> Result<BandwidthReport> {
    bandwidth_report_frames(h.frames(channel)?, Execution::default())
}

pub fn bandwidth_report_frames(frames: &[WaveField], exec: Execution) -> Result<BandwidthReport> {
    let mean = mean_psd(frames, exec)?;
    let f0 = &frames[0];
    let (ny, nx) = f0.shape();
    let grid = frequency_grid((ny, nx), f0.pitch);
    let k2 = f0.wavenumber().powi(2);
    let mut band = Vec::new();
    let (cy, cx) = ((ny / 2) as f64, (nx / 2) as f64);
    let max_r = ((cy * cy + cx * cx).sqrt()).ceil() as usize + 1;
    let mut ring_sum = vec![0.0; max_r];
    let mut ring_n = vec![0usize; max_r];
    for ((r, c), v) in mean.indexed_iter() {
        let (kx, ky) = grid.at(r, c);
        if kx * kx + ky * ky > k2 {
            continue;
        }
        band.push(*v);
        let rad = ((r as f64 - cy).powi(2) + (c as f64 - cx).powi(2)).sqrt().round() as usize;
        ring_sum[rad] += v;
        ring_n[rad] += 1;
    }
    let n = band.len() as f64;
    let m = band.iter().sum::<f64>() / n;
    if !(m > 0.0) {
        return Err(Error::ZeroEnergy);
    }
    let sd = (band.iter().map(|v| (v - m).powi(2)).sum::<f64>() / n).sqrt();
    let last = ring_n.iter().rposition(|c| *c > 0).map_or(0, |i| i + 1);
    Ok(BandwidthReport {
        coverage: band.iter().filter(|v| **v > 0.1 * m).count() as f64 / n,
        cov: sd / m,
        radial_profile: (0..last)
            .map(|i| if ring_n[i] > 0 { ring_sum[i] / ring_n[i] as f64 } else { 0.0 })
            .collect(),
        band_bins: band.len(),
        mean_psd: mean,
    })
}
