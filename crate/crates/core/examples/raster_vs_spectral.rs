//! Compares a rasterized Gaussian footprint with one synthesized from its
//! analytic spectrum, over a range of widths and sub-pixel offsets.
//!
//! cargo run --release -p wavesplat-core --example raster_vs_spectral

use std::f64::consts::PI;

use ndarray::Array2;
use num_complex::Complex64;

use wavesplat_core::field::{frequency_grid, ifft2_centered, rel_l2};
use wavesplat_core::splat::GaussianPrimitive;
use wavesplat_core::wavefront::{project_covariance, rasterize_gaussian};
use wavesplat_core::OpticsConfig;

fn spectral_footprint(p: &GaussianPrimitive, cfg: &OpticsConfig) -> Array2<Complex64> {
    let (ny, nx) = cfg.shape();
    let pitch = cfg.pixel_pitch;
    let cov = project_covariance(p, pitch);
    let det = cov[0][0] * cov[1][1] - cov[0][1] * cov[1][0];
    let grid = frequency_grid((ny, nx), pitch);
    let [mx, my, _] = p.mean;
    let (ox, oy) = ((nx / 2) as f64 * pitch, (ny / 2) as f64 * pitch);
    let scale = 2.0 * PI * det.sqrt() / (((ny * nx) as f64).sqrt() * pitch * pitch);
    let spec = Array2::from_shape_fn((ny, nx), |(r, c)| {
        let (kx, ky) = grid.at(r, c);
        let quad = kx * (cov[0][0] * kx + cov[0][1] * ky) + ky * (cov[1][0] * kx + cov[1][1] * ky);
        // continuous transform, shifted to the mean and to the unshifted pixel origin
        Complex64::from_polar(scale * (-0.5 * quad).exp(), -(kx * (mx + ox) + ky * (my + oy)))
    });
    ifft2_centered(&spec)
}

fn main() {
    let cfg = OpticsConfig::square(256);
    let p = cfg.pixel_pitch;
    println!("{:>8}  {:>8}  {:>12}", "sigma_px", "offset", "rel_l2");
    for sigma in [0.5, 1.0, 2.0, 4.0, 8.0, 16.0] {
        for offset in [0.0, 0.25, 0.5] {
            let prim = GaussianPrimitive::isotropic(0, [offset * p, -offset * p, 0.0], sigma * p, 1.0, [1.0; 3]);
            let raster = rasterize_gaussian(&prim, &cfg).to_dense().mapv(|a| Complex64::new(a, 0.0));
            let synth = spectral_footprint(&prim, &cfg);
            println!("{sigma:>8.2}  {offset:>8.2}  {:>12.3e}", rel_l2(&synth, &raster));
        }
    }
}
