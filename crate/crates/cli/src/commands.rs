use std::path::{Path, PathBuf};
use std::time::Instant;

use ndarray::{s, Array2};

use wavesplat_core::analysis::bandwidth_report_frames;
use wavesplat_core::compositor::{time_multiplex, CompositeRequest};
use wavesplat_core::encode::{encode, reconstruct_encoded, EncodeProblem};
use wavesplat_core::field::intensity;
use wavesplat_core::metrics::{psnr, ssim};
use wavesplat_core::reconstruct::{epipolar, focal_stack_with, light_field_stft};
use wavesplat_core::splat::{activate, load_ply, sort_and_bin, to_hologram_space};
use wavesplat_core::{Execution, Propagator};

use crate::config::LoadedConfig;
use crate::container::{self, Container};
use crate::error::{CliError, CliResult};
use crate::export::{pfm_bytes, png_bytes, png_gray8, read_image, Manifest, OutputDir};

pub const HOLOGRAM_FILE: &str = "hologram.wsh";

pub struct Context {
    pub cfg: LoadedConfig,
    pub exec: Execution,
    timings: Vec<(String, f64)>,
}

impl Context {
    pub fn new(cfg: LoadedConfig, exec: Execution) -> Self {
        Context {
            cfg,
            exec,
            timings: Vec::new(),
        }
    }

    fn timed<T>(&mut self, stage: &str, f: impl FnOnce() -> T) -> T {
        let start = Instant::now();
        let v = f();
        self.timings.push((stage.to_string(), start.elapsed().as_secs_f64() * 1e3));
        v
    }

    fn manifest(&mut self, command: &str, seed: u64, frames: usize, mode: &str) -> Manifest {
        Manifest {
            tool: "wavesplat",
            version: env!("CARGO_PKG_VERSION"),
            command: command.to_string(),
            config_digest: self.cfg.digest.clone(),
            seed,
            frames,
            mode: mode.to_string(),
            timings_ms: std::mem::take(&mut self.timings),
            files: Vec::new(),
        }
    }

    fn hologram_path(&self, explicit: Option<&Path>) -> PathBuf {
        explicit.map_or_else(|| self.cfg.out_dir().join(HOLOGRAM_FILE), Path::to_path_buf)
    }

    /// Reads a container and checks it against the configured optics.
    fn load_hologram(&mut self, explicit: Option<&Path>) -> CliResult<Container> {
        let path = self.hologram_path(explicit);
        let c = self.timed("read_hologram", || Container::read(&path))?;
        let o = &self.cfg.config.optics;
        let h = &c.header;
        if [h.ny, h.nx] != o.grid {
            return Err(CliError::Config(format!(
                "{} is {}x{} but the config grid is {}x{}",
                path.display(),
                h.ny,
                h.nx,
                o.grid[0],
                o.grid[1]
            )));
        }
        let close = |a: f64, b: f64| (a - b).abs() <= 1e-12 * b.abs();
        if !close(h.pitch, o.pitch) || !h.wavelengths.iter().zip(&o.wavelengths).all(|(a, b)| close(*a, *b)) {
            return Err(CliError::Config(format!(
                "{} was written with pitch {:e} and wavelengths {:?}, config has {:e} and {:?}",
                path.display(),
                h.pitch,
                h.wavelengths,
                o.pitch,
                o.wavelengths
            )));
        }
        Ok(c)
    }
}

pub fn hologram(ctx: &mut Context) -> CliResult<()> {
    let c = ctx.cfg.config.clone();
    let scene_path = c
        .scene
        .as_ref()
        .map(|p| ctx.cfg.resolve(p))
        .ok_or_else(|| CliError::Config("`scene` is required for the hologram command".into()))?;
    let bytes = std::fs::read(&scene_path).map_err(|e| CliError::io(&scene_path, e))?;
    let raw = load_ply(&bytes).map_err(|e| CliError::format(&scene_path, e.to_string()))?;
    let prims = raw
        .iter()
        .enumerate()
        .map(|(i, r)| activate(r, i as u64))
        .collect::<wavesplat_core::Result<Vec<_>>>()
        .map_err(|e| CliError::format(&scene_path, e.to_string()))?;

    let mode = ctx.cfg.mode()?;
    let mut scene = to_hologram_space(&prims, &c.optics()?, &c.mapping())?;
    scene.color_domain = c.color_domain();
    if scene.primitives.is_empty() {
        return Err(CliError::Config(format!(
            "no primitive of {} falls inside the SLM aperture after mapping",
            scene_path.display()
        )));
    }
    let scene = sort_and_bin(&scene, mode.required_order(), None)?;
    let mut req = CompositeRequest::new(scene, mode, c.frames, c.seed);
    req.binning = c.binning();
    req.exec = ctx.exec;
    let h = ctx.timed("composite", || time_multiplex(&req))?;

    let mut out = OutputDir::create(&ctx.cfg.out_dir())?;
    out.write(HOLOGRAM_FILE, &container::encode(&h))?;
    let manifest = ctx.manifest("hologram", c.seed, c.frames, h.mode.name());
    let path = out.finish(manifest)?;
    println!(
        "hologram: {} primitives, {} frames x 3 channels -> {}",
        req.scene.primitives.len(),
        h.n_frames(),
        path.parent().unwrap_or(Path::new(".")).join(HOLOGRAM_FILE).display()
    );
    Ok(())
}

fn peak(imgs: &[&Array2<f64>]) -> f64 {
    imgs.iter().flat_map(|a| a.iter()).cloned().fold(0.0, f64::max)
}

fn write_image(out: &mut OutputDir, stem: &str, planes: &[&Array2<f64>], peak: f64) -> CliResult<()> {
    out.write(&format!("{stem}.png"), &png_bytes(planes, peak))?;
    out.write(&format!("{stem}.pfm"), &pfm_bytes(planes))?;
    Ok(())
}

pub fn focal_stack(ctx: &mut Context, hologram: Option<&Path>) -> CliResult<()> {
    let c = ctx.cfg.config.clone();
    let cont = ctx.load_hologram(hologram)?;
    let h = cont.to_hologram();
    let depths = &c.outputs.depths;
    let channels = &c.outputs.channels;
    let exec = ctx.exec;
    let stack = ctx.timed("focal_stack", || focal_stack_with(&h, depths, channels, Propagator::default(), exec))?;

    let mut out = OutputDir::create(&ctx.cfg.out_dir())?;
    let all: Vec<&Array2<f64>> = stack.slices.iter().flatten().collect();
    let global = peak(&all);
    for (d, z) in depths.iter().enumerate() {
        for (ci, ch) in channels.iter().enumerate() {
            let img = &stack.slices[ci][d];
            write_image(&mut out, &format!("focal_d{d:02}_c{ch}"), &[img], global)?;
        }
        if channels.as_slice() == [0, 1, 2] {
            let planes: Vec<&Array2<f64>> = (0..3).map(|ci| &stack.slices[ci][d]).collect();
            out.write(&format!("focal_d{d:02}_rgb.png"), &png_bytes(&planes, global))?;
        }
        println!("focal slice {d}: z = {:.4} mm", z * 1e3);
    }
    let manifest = ctx.manifest("focalstack", cont.header.seed, cont.header.frames, cont.header.mode_name());
    out.finish(manifest)?;
    Ok(())
}

pub fn light_field(ctx: &mut Context, hologram: Option<&Path>) -> CliResult<()> {
    let c = ctx.cfg.config.clone();
    let cont = ctx.load_hologram(hologram)?;
    let h = cont.to_hologram();
    let params = c.light_field_params();
    let mut out = OutputDir::create(&ctx.cfg.out_dir())?;
    for &ch in &c.outputs.channels {
        let exec = ctx.exec;
        let lf = ctx.timed(&format!("light_field_c{ch}"), || light_field_stft(&h, ch, &params, exec))?;
        let (vy, vx, py, px) = lf.views.dim();
        // views tiled in a vy × vx grid, each view py × px patches
        let mut mosaic = Array2::<f64>::zeros((vy * py, vx * px));
        for a in 0..vy {
            for b in 0..vx {
                mosaic.slice_mut(s![a * py..(a + 1) * py, b * px..(b + 1) * px]).assign(&lf.view(a, b));
            }
        }
        write_image(&mut out, &format!("lightfield_c{ch}"), &[&mosaic], peak(&[&mosaic]))?;
        let epi = epipolar(&lf, py / 2)?;
        write_image(&mut out, &format!("epipolar_c{ch}"), &[&epi], peak(&[&epi]))?;

        let energy = lf.view_energy();
        let mut csv = String::from("view_row,view_col,ky_rad_per_m,kx_rad_per_m,energy\n");
        for ((a, b), e) in energy.indexed_iter() {
            csv.push_str(&format!("{a},{b},{:e},{:e},{e:e}\n", lf.view_ky[a], lf.view_kx[b]));
        }
        out.write(&format!("view_energy_c{ch}.csv"), csv.as_bytes())?;
        let max = energy.iter().cloned().fold(0.0, f64::max);
        let min = energy.iter().cloned().fold(f64::INFINITY, f64::min);
        println!("channel {ch}: {vy}x{vx} views, min/max view energy {:.4}", min / max);
    }
    let manifest = ctx.manifest("lightfield", cont.header.seed, cont.header.frames, cont.header.mode_name());
    out.finish(manifest)?;
    Ok(())
}

pub fn analyze(ctx: &mut Context, hologram: Option<&Path>) -> CliResult<()> {
    let c = ctx.cfg.config.clone();
    let cont = ctx.load_hologram(hologram)?;
    let mut out = OutputDir::create(&ctx.cfg.out_dir())?;
    println!("channel  coverage  psd_cov  band_bins");
    for &ch in &c.outputs.channels {
        let exec = ctx.exec;
        let report = ctx.timed(&format!("bandwidth_c{ch}"), || bandwidth_report_frames(&cont.channels[ch], exec))?;
        println!("{ch:>7}  {:>8.4}  {:>7.4}  {:>9}", report.coverage, report.cov, report.band_bins);
        out.write(&format!("bandwidth_c{ch}.txt"), report.to_string().as_bytes())?;
        let log_psd = report.mean_psd.mapv(|v| (v.max(1e-30)).log10());
        let lo = log_psd.iter().cloned().fold(f64::INFINITY, f64::min).max(peak(&[&log_psd]) - 8.0);
        let shown = log_psd.mapv(|v| (v - lo).max(0.0));
        out.write(&format!("psd_c{ch}.png"), &png_bytes(&[&shown], peak(&[&shown])))?;
        out.write(&format!("psd_c{ch}.pfm"), &pfm_bytes(&[&report.mean_psd]))?;
    }
    let manifest = ctx.manifest("analyze", cont.header.seed, cont.header.frames, cont.header.mode_name());
    out.finish(manifest)?;
    Ok(())
}

pub fn encode_phase(ctx: &mut Context, hologram: Option<&Path>) -> CliResult<()> {
    let c = ctx.cfg.config.clone();
    let e = &c.encode;
    let cont = ctx.load_hologram(hologram)?;
    let frames = &cont.channels[e.channel];
    let frame = frames.get(e.frame - 1).ok_or_else(|| {
        CliError::Config(format!("encode.frame = {} but the hologram has {} frames", e.frame, frames.len()))
    })?;
    let propagator = Propagator::default();
    // the phase SLM only reaches what the transfer function at this distance passes
    let target = propagator.band_project(frame, e.distance);
    let mut prob = EncodeProblem::new(target.clone());
    prob.distance = e.distance;
    prob.iterations = e.iterations;
    prob.step_size = e.step_size;
    prob.channel = e.channel;
    prob.init = wavesplat_core::encode::Init::Random(c.seed);
    let pattern = ctx.timed("encode", || encode(&prob))?;

    let mut out = OutputDir::create(&ctx.cfg.out_dir())?;
    out.write("phase.png", &png_gray8(&pattern.to_gray8()))?;
    out.write("phase.pfm", &pfm_bytes(&[&pattern.phase]))?;
    let mut csv = String::from("iteration,loss\n0,");
    csv.push_str(&format!("{:e}\n", pattern.initial_loss));
    for (i, l) in pattern.loss_trace.iter().enumerate() {
        csv.push_str(&format!("{},{l:e}\n", i + 1));
    }
    out.write("loss.csv", csv.as_bytes())?;

    let depths: Vec<f64> = c.outputs.depths.iter().map(|d| d + e.distance).collect();
    let stack = ctx.timed("reconstruct", || reconstruct_encoded(&pattern.phase, &prob, &depths))?;
    println!(
        "encode: loss {:.4e} -> {:.4e} in {} iterations",
        pattern.initial_loss,
        pattern.best_loss(),
        pattern.loss_trace.len()
    );
    println!("depth_mm  psnr_db");
    for (d, z) in c.outputs.depths.iter().enumerate() {
        let img = stack.slice(e.channel, d).expect("stack holds the encoded channel");
        let reference = intensity(&propagator.propagate(&target, *z));
        let p = psnr(img, &reference, peak(&[&reference]))?;
        println!("{:>8.3}  {p:>7.2}", z * 1e3);
        write_image(&mut out, &format!("encoded_d{d:02}"), &[img], peak(&[&reference]))?;
    }
    let manifest = ctx.manifest("encode", c.seed, 1, cont.header.mode_name());
    out.finish(manifest)?;
    Ok(())
}

/// Compares two images plane by plane and prints a PSNR/SSIM table.
pub fn metrics(a: &Path, b: &Path) -> CliResult<()> {
    let ia = read_image(a)?;
    let ib = read_image(b)?;
    if ia.len() != ib.len() || ia[0].dim() != ib[0].dim() {
        return Err(CliError::format(
            a,
            format!(
                "{} planes of {:?} vs {} planes of {:?} in {}",
                ia.len(),
                ia[0].dim(),
                ib.len(),
                ib[0].dim(),
                b.display()
            ),
        ));
    }
    let is_png = |p: &Path| p.extension().is_some_and(|e| e.eq_ignore_ascii_case("png"));
    println!("plane  psnr_db   ssim");
    for (k, (x, y)) in ia.iter().zip(&ib).enumerate() {
        let range = if is_png(a) && is_png(b) { 1.0 } else { peak(&[y]).max(f64::MIN_POSITIVE) };
        let p = psnr(x, y, range)?;
        let q = ssim(x, y, range)?;
        println!("{k:>5}  {p:>7.2}  {q:.4}");
    }
    Ok(())
}
