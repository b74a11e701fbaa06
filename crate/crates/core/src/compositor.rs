//! Wave-domain compositing: the random-phase back-to-front recurrence and
//! smooth-phase alpha wave blending, plus time multiplexing.

use std::collections::BTreeMap;

use ndarray::{s, Array2, Zip};
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::field::{OpticsConfig, WaveField};
use crate::propagation::Propagator;
use crate::rng::DrawKey;
use crate::spectral::{sample_spatial, sample_structured, KernelKind, SpectralKernel};
use crate::splat::{sort_and_bin, ColorDomain, DepthOrder, GaussianPrimitive, HologramScene};
use crate::wavefront::{rasterize_gaussian, PrimitiveFootprint};

#[derive(Debug, Clone, PartialEq)]
pub enum Mode {
    /// Random phase shaped by an angular emission kernel.
    RpStructured(SpectralKernel),
    /// Random phase drawn independently per pixel.
    RpSpatial,
    /// Deterministic smooth-phase alpha wave blending.
    SpSmooth,
}

/// Copyable summary of a [`Mode`] kept with the output.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ModeTag {
    RpStructured(KernelKind),
    RpSpatial,
    SpSmooth,
}

impl ModeTag {
    pub fn code(self) -> u8 {
        match self {
            ModeTag::RpStructured(_) => 0,
            ModeTag::RpSpatial => 1,
            ModeTag::SpSmooth => 2,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            ModeTag::RpStructured(_) => "rp_structured",
            ModeTag::RpSpatial => "rp_spatial",
            ModeTag::SpSmooth => "sp_smooth",
        }
    }
}

impl Mode {
    pub fn tag(&self) -> ModeTag {
        match self {
            Mode::RpStructured(k) => ModeTag::RpStructured(k.kind),
            Mode::RpSpatial => ModeTag::RpSpatial,
            Mode::SpSmooth => ModeTag::SpSmooth,
        }
    }

    pub fn is_random_phase(&self) -> bool {
        !matches!(self, Mode::SpSmooth)
    }

    pub fn required_order(&self) -> DepthOrder {
        if self.is_random_phase() {
            DepthOrder::BackToFront
        } else {
            DepthOrder::FrontToBack
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Binning {
    /// Every primitive on its own plane.
    #[default]
    Exact,
    /// At most `n` planes; one propagation per plane.
    Layered(usize),
}

#[derive(Debug, Clone)]
pub struct CompositeRequest {
    pub scene: HologramScene,
    pub mode: Mode,
    pub frames: usize,
    pub seed: u64,
    pub binning: Binning,
    pub propagator: Propagator,
    /// Per-primitive kernels replacing the scene-wide one in structured mode.
    pub kernel_overrides: BTreeMap<u64, SpectralKernel>,
    pub exec: Execution,
}

impl CompositeRequest {
    pub fn new(scene: HologramScene, mode: Mode, frames: usize, seed: u64) -> Self {
        CompositeRequest {
            scene,
            mode,
            frames,
            seed,
            binning: Binning::Exact,
            propagator: Propagator::default(),
            kernel_overrides: BTreeMap::new(),
            exec: Execution::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.scene.optics.validate()?;
        if self.scene.primitives.is_empty() {
            return Err(Error::EmptyScene);
        }
        if self.frames == 0 {
            return Err(Error::InvalidArgument("frame count must be at least 1".into()));
        }
        if self.mode == Mode::SpSmooth && self.frames != 1 {
            return Err(Error::InvalidArgument(format!(
                "sp_smooth is deterministic and requires frames = 1 (got {})",
                self.frames
            )));
        }
        if self.scene.order != self.mode.required_order() {
            return Err(Error::InvalidArgument(format!(
                "{} needs {:?} depth order, scene is {:?}",
                self.mode.tag().name(),
                self.mode.required_order(),
                self.scene.order
            )));
        }
        if let Binning::Layered(0) = self.binning {
            return Err(Error::InvalidArgument("layered binning needs at least one layer".into()));
        }
        let shape = self.scene.optics.shape();
        let kernels = match &self.mode {
            Mode::RpStructured(k) => Some(k),
            _ => None,
        };
        for k in kernels.into_iter().chain(self.kernel_overrides.values()) {
            if k.shape() != shape {
                return Err(Error::ShapeMismatch {
                    expected: shape,
                    actual: k.shape(),
                });
            }
        }
        for p in &self.scene.primitives {
            p.validate()?;
        }
        Ok(())
    }
}

/// `√(max(0, 1 − o·a))` on the full grid.
pub fn transmittance_mask(fp: &PrimitiveFootprint, opacity: f64) -> Array2<f64> {
    fp.to_dense().mapv(|a| mask_value(opacity, a))
}

#[inline]
fn mask_value(opacity: f64, a: f64) -> f64 {
    (1.0 - opacity * a).max(0.0).sqrt()
}

struct Layer {
    z: f64,
    /// Indices into `Prepared::prims`, in compositing order.
    members: Vec<usize>,
}

/// A validated request with all footprints rasterized.
pub struct Prepared<'a> {
    req: &'a CompositeRequest,
    prims: Vec<GaussianPrimitive>,
    footprints: Vec<PrimitiveFootprint>,
    layers: Vec<Layer>,
}

pub fn prepare(req: &CompositeRequest) -> Result<Prepared<'_>> {
    prepare_with(req, |p, optics| Ok(rasterize_gaussian(p, optics)))
}

/// Like [`prepare`] but with caller-supplied amplitude footprints keyed by primitive id.
///
/// Opacity, color and depth still come from the scene's primitives.
pub fn prepare_with_footprints<'a>(
    req: &'a CompositeRequest,
    footprints: &BTreeMap<u64, PrimitiveFootprint>,
) -> Result<Prepared<'a>> {
    let shape = req.scene.optics.shape();
    prepare_with(req, |p, _| {
        let fp = footprints
            .get(&p.id)
            .ok_or_else(|| Error::InvalidArgument(format!("no footprint for primitive {}", p.id)))?;
        if fp.shape != shape {
            return Err(Error::ShapeMismatch {
                expected: shape,
                actual: fp.shape,
            });
        }
        if fp.window.iter().any(|a| !(0.0..=1.0).contains(a)) {
            return Err(Error::InvalidArgument(format!("footprint {} leaves [0, 1]", p.id)));
        }
        Ok(fp.clone())
    })
}

fn prepare_with<F>(req: &CompositeRequest, footprint: F) -> Result<Prepared<'_>>
where
    F: Fn(&GaussianPrimitive, &OpticsConfig) -> Result<PrimitiveFootprint> + Sync + Send,
{
    req.validate()?;
    let n_layers = match req.binning {
        Binning::Exact => None,
        Binning::Layered(n) => Some(n),
    };
    let sorted = sort_and_bin(&req.scene, req.scene.order, n_layers)?;
    let optics = sorted.optics;
    let footprints = req
        .exec
        .map(sorted.primitives.len(), |i| footprint(&sorted.primitives[i], &optics))
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    let index: BTreeMap<u64, usize> = sorted.primitives.iter().enumerate().map(|(i, p)| (p.id, i)).collect();
    let layers = match &sorted.layers {
        None => sorted
            .primitives
            .iter()
            .enumerate()
            .map(|(i, p)| Layer {
                z: p.mean[2],
                members: vec![i],
            })
            .collect(),
        Some(ls) => ls
            .iter()
            .map(|l| Layer {
                z: l.z,
                members: l.members.iter().map(|id| index[id]).collect(),
            })
            .collect(),
    };
    Ok(Prepared {
        req,
        prims: sorted.primitives,
        footprints,
        layers,
    })
}

impl<'a> Prepared<'a> {
    pub fn optics(&self) -> &OpticsConfig {
        &self.req.scene.optics
    }

    pub fn footprints(&self) -> &[PrimitiveFootprint] {
        &self.footprints
    }

    pub fn primitives(&self) -> &[GaussianPrimitive] {
        &self.prims
    }

    fn color_amplitude(&self, p: &GaussianPrimitive, channel: usize) -> f64 {
        let c = p.color[channel];
        match self.req.scene.color_domain {
            ColorDomain::Intensity => c.max(0.0).sqrt(),
            ColorDomain::Amplitude => c,
        }
    }

    fn kernel_for(&self, id: u64) -> Option<&SpectralKernel> {
        match &self.req.mode {
            Mode::RpStructured(k) => Some(self.req.kernel_overrides.get(&id).unwrap_or(k)),
            _ => None,
        }
    }

    /// The modulation the request's mode draws for primitive `i` in frame `t`.
    fn draw(&self, i: usize, channel: usize, t: u64) -> Array2<Complex64> {
        let p = &self.prims[i];
        let key = DrawKey::new(self.req.seed, DrawKey::primitive_scope(channel, p.id), t);
        match self.kernel_for(p.id) {
            Some(k) => sample_structured(k, key).modulation,
            None => sample_spatial(self.optics().shape(), key).modulation,
        }
    }

    /// Random-phase frame `t` for one channel.
    pub fn rp_frame(&self, channel: usize, t: u64) -> Result<WaveField> {
        if !self.req.mode.is_random_phase() {
            return Err(Error::InvalidArgument("rp_frame called on a smooth-phase request".into()));
        }
        self.rp_frame_with(channel, |i| self.draw(i, channel, t))
    }

    /// Back-to-front recurrence with a caller-supplied modulation per primitive index.
    pub fn rp_frame_with<F>(&self, channel: usize, modulation: F) -> Result<WaveField>
    where
        F: Fn(usize) -> Array2<Complex64>,
    {
        let optics = self.optics();
        let k = optics.wavenumber(channel)?;
        let wl = optics.wavelength(channel)?;
        let prop = self.req.propagator;
        let first_z = self.layers.first().map(|l| l.z).ok_or(Error::EmptyScene)?;
        let mut g = WaveField::zeros(optics.shape(), optics.pixel_pitch, wl, first_z);

        for (li, layer) in self.layers.iter().enumerate() {
            let carrier = Complex64::from_polar(1.0, k * layer.z);
            for &i in &layer.members {
                let p = &self.prims[i];
                let fp = &self.footprints[i];
                if fp.is_empty() {
                    continue;
                }
                let m = modulation(i);
                let weight = self.color_amplitude(p, channel);
                let (rows, cols) = fp.bounds();
                let mut gw = g.samples.slice_mut(s![rows.clone(), cols.clone()]);
                Zip::from(&mut gw)
                    .and(&fp.window)
                    .and(m.slice(s![rows, cols]))
                    .for_each(|gv, &a, &mv| {
                        let oa = p.opacity * a;
                        let emit = carrier * mv * (weight * oa.sqrt());
                        *gv = *gv * mask_value(p.opacity, a) + emit;
                    });
            }
            let next_z = self.layers.get(li + 1).map_or(0.0, |l| l.z);
            g = prop.propagate(&g, next_z - layer.z);
        }
        g.plane_z = 0.0;
        check_finite(&g, "random-phase frame")?;
        Ok(g)
    }

    /// Smooth-phase term of each layer on its own plane, with on-axis transmittance.
    fn sp_layer_terms(&self, channel: usize) -> Result<Vec<WaveField>> {
        let optics = self.optics();
        let k = optics.wavenumber(channel)?;
        let wl = optics.wavelength(channel)?;
        let mut trans = Array2::<f64>::ones(optics.shape());
        let mut terms = Vec::with_capacity(self.layers.len());
        for layer in &self.layers {
            let carrier = Complex64::from_polar(1.0, k * layer.z);
            let mut term = WaveField::zeros(optics.shape(), optics.pixel_pitch, wl, layer.z);
            for &i in &layer.members {
                let p = &self.prims[i];
                let fp = &self.footprints[i];
                if fp.is_empty() {
                    continue;
                }
                let weight = self.color_amplitude(p, channel);
                let (rows, cols) = fp.bounds();
                Zip::from(term.samples.slice_mut(s![rows.clone(), cols.clone()]))
                    .and(trans.slice_mut(s![rows, cols]))
                    .and(&fp.window)
                    .for_each(|u, tr, &a| {
                        let oa = p.opacity * a;
                        *u += carrier * (weight * oa * *tr);
                        *tr *= (1.0 - oa).max(0.0);
                    });
            }
            terms.push(term);
        }
        Ok(terms)
    }

    /// Alpha wave blending as a direct sum of independently propagated terms.
    pub fn sp(&self, channel: usize) -> Result<WaveField> {
        if self.req.mode.is_random_phase() {
            return Err(Error::InvalidArgument("sp called on a random-phase request".into()));
        }
        let terms = self.sp_layer_terms(channel)?;
        let prop = self.req.propagator;
        let mut out = self
            .req
            .exec
            .map_reduce(
                terms.len(),
                |j| prop.propagate(&terms[j], -terms[j].plane_z).samples,
                |a, b| a + b,
            )
            .ok_or(Error::EmptyScene)?;
        if out.iter().any(|c| !c.is_finite()) {
            out.fill(Complex64::default());
            return Err(Error::NonFinite("smooth-phase field".into()));
        }
        let optics = self.optics();
        Ok(WaveField::from_samples(out, optics.pixel_pitch, optics.wavelength(channel)?, 0.0))
    }

    /// Same sum evaluated recursively from the back: `g ← term + P(g; z_front − z_back)`.
    pub fn sp_recursive(&self, channel: usize) -> Result<WaveField> {
        let terms = self.sp_layer_terms(channel)?;
        let prop = self.req.propagator;
        let mut iter = terms.into_iter().rev();
        let mut g = iter.next().ok_or(Error::EmptyScene)?;
        for term in iter {
            let moved = prop.propagate(&g, term.plane_z - g.plane_z);
            g = term.with_samples(&term.samples + &moved.samples);
        }
        let mut out = prop.propagate(&g, -g.plane_z);
        out.plane_z = 0.0;
        check_finite(&out, "smooth-phase field")?;
        Ok(out)
    }
}

fn check_finite(f: &WaveField, what: &str) -> Result<()> {
    if f.is_finite() {
        Ok(())
    } else {
        Err(Error::NonFinite(what.into()))
    }
}

/// Frame `t` (1-based) of a random-phase request on one channel.
pub fn composite_rp_frame(req: &CompositeRequest, channel: usize, t: u64) -> Result<WaveField> {
    prepare(req)?.rp_frame(channel, t)
}

/// Smooth-phase SLM field of one channel.
pub fn composite_sp(req: &CompositeRequest, channel: usize) -> Result<WaveField> {
    prepare(req)?.sp(channel)
}

/// `T` SLM-plane frames per color channel, with provenance.
#[derive(Debug, Clone)]
pub struct TimeMultiplexedHologram {
    /// `channels[c][t]`, all at `plane_z = 0`.
    pub channels: Vec<Vec<WaveField>>,
    pub mode: ModeTag,
    pub seed: u64,
    pub scene_digest: String,
}

impl TimeMultiplexedHologram {
    pub fn n_frames(&self) -> usize {
        self.channels.first().map_or(0, Vec::len)
    }

    pub fn shape(&self) -> (usize, usize) {
        self.channels
            .first()
            .and_then(|c| c.first())
            .map_or((0, 0), WaveField::shape)
    }

    pub fn frames(&self, channel: usize) -> Result<&[WaveField]> {
        self.channels
            .get(channel)
            .map(Vec::as_slice)
            .ok_or(Error::InvalidChannel(channel))
    }

    /// Checks the per-channel shape/pitch/wavelength invariants.
    pub fn validate(&self) -> Result<()> {
        let shape = self.shape();
        let t = self.n_frames();
        if t == 0 {
            return Err(Error::InvalidArgument("hologram has no frames".into()));
        }
        for (c, frames) in self.channels.iter().enumerate() {
            if frames.len() != t {
                return Err(Error::InvalidArgument(format!("channel {c} has {} frames, expected {t}", frames.len())));
            }
            let head = &frames[0];
            for f in frames {
                if f.shape() != shape {
                    return Err(Error::ShapeMismatch {
                        expected: shape,
                        actual: f.shape(),
                    });
                }
                if f.pitch != head.pitch || f.wavelength != head.wavelength {
                    return Err(Error::InvalidArgument(format!("channel {c} mixes pitch or wavelength")));
                }
            }
        }
        Ok(())
    }
}

/// Runs every (channel, frame) pair. Frames are numbered `t = 1..=T`.
pub fn time_multiplex(req: &CompositeRequest) -> Result<TimeMultiplexedHologram> {
    let prep = prepare(req)?;
    let t_count = req.frames;
    let jobs = 3 * t_count;
    let results = req.exec.map(jobs, |j| {
        let (channel, t) = (j / t_count, (j % t_count) as u64 + 1);
        if req.mode.is_random_phase() {
            prep.rp_frame(channel, t)
        } else {
            prep.sp(channel)
        }
    });
    let mut channels: Vec<Vec<WaveField>> = (0..3).map(|_| Vec::with_capacity(t_count)).collect();
    for (j, r) in results.into_iter().enumerate() {
        channels[j / t_count].push(r?);
    }
    Ok(TimeMultiplexedHologram {
        channels,
        mode: req.mode.tag(),
        seed: req.seed,
        scene_digest: req.scene.digest(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::{intensity, rel_l2};
    use crate::spectral::kernel_uniform;
    use approx::assert_relative_eq;

    const P: f64 = 8e-6;

    fn scene(prims: Vec<GaussianPrimitive>, n: usize, order: DepthOrder) -> HologramScene {
        let s = HologramScene::new(prims, OpticsConfig::square(n));
        sort_and_bin(&s, order, None).unwrap()
    }

    fn blob(id: u64, x: f64, z: f64, sigma_px: f64, o: f64) -> GaussianPrimitive {
        GaussianPrimitive::isotropic(id, [x * P, 0.0, z], sigma_px * P, o, [1.0, 0.6, 0.3])
    }

    fn flat(n: usize, rows: std::ops::Range<usize>, cols: std::ops::Range<usize>, id: u64, z: f64) -> PrimitiveFootprint {
        let mut a = Array2::zeros((n, n));
        a.slice_mut(s![rows, cols]).fill(1.0);
        PrimitiveFootprint::from_dense(a, z, id)
    }

    #[test]
    fn mask_examples() {
        let fp = PrimitiveFootprint::from_dense(Array2::from_elem((2, 2), 1.0), 0.0, 0);
        assert!(transmittance_mask(&fp, 1.0).iter().all(|v| *v == 0.0));
        assert!(transmittance_mask(&fp, 0.0).iter().all(|v| *v == 1.0));
        let half = PrimitiveFootprint::from_dense(Array2::from_elem((2, 2), 0.5), 0.0, 0);
        assert_relative_eq!(transmittance_mask(&half, 0.5)[(0, 0)], 0.75f64.sqrt());
        // rounding above one must not produce NaN
        let over = PrimitiveFootprint::from_dense(Array2::from_elem((1, 1), 1.0 + 1e-16), 0.0, 0);
        assert_eq!(transmittance_mask(&over, 1.0)[(0, 0)], 0.0);
    }

    #[test]
    fn validation() {
        let s = scene(vec![blob(0, 0.0, 0.01, 4.0, 1.0)], 32, DepthOrder::FrontToBack);
        assert!(CompositeRequest::new(s.clone(), Mode::SpSmooth, 1, 0).validate().is_ok());
        assert!(CompositeRequest::new(s.clone(), Mode::SpSmooth, 8, 0).validate().is_err());
        assert!(CompositeRequest::new(s.clone(), Mode::RpSpatial, 4, 0).validate().is_err());
        let b = scene(vec![blob(0, 0.0, 0.01, 4.0, 1.0)], 32, DepthOrder::BackToFront);
        assert!(CompositeRequest::new(b.clone(), Mode::RpSpatial, 0, 0).validate().is_err());
        assert!(CompositeRequest::new(b.clone(), Mode::RpStructured(kernel_uniform((16, 16))), 1, 0)
            .validate()
            .is_err());
        let mut empty = b;
        empty.primitives.clear();
        assert!(matches!(
            CompositeRequest::new(empty, Mode::RpSpatial, 1, 0).validate(),
            Err(Error::EmptyScene)
        ));
    }

    #[test]
    fn zero_opacity_gives_zero_field() {
        let prims = (0..4).map(|i| blob(i, i as f64 * 3.0, 0.01 + i as f64 * 1e-3, 4.0, 0.0)).collect();
        let req = CompositeRequest::new(scene(prims, 32, DepthOrder::BackToFront), Mode::RpSpatial, 1, 3);
        let g = composite_rp_frame(&req, 1, 1).unwrap();
        assert!(g.samples.iter().all(|c| *c == Complex64::default()));
    }

    #[test]
    fn emission_is_linear_in_color_amplitude() {
        let prims: Vec<_> = (0..3).map(|i| blob(i, i as f64 * 4.0 - 4.0, 0.01 + i as f64 * 2e-3, 5.0, 0.7)).collect();
        let mut s = scene(prims, 32, DepthOrder::BackToFront);
        s.color_domain = ColorDomain::Amplitude;
        let mut doubled = s.clone();
        for p in &mut doubled.primitives {
            p.color = p.color.map(|c| 2.0 * c);
        }
        let k = kernel_uniform((32, 32));
        let a = composite_rp_frame(&CompositeRequest::new(s, Mode::RpStructured(k.clone()), 1, 5), 0, 2).unwrap();
        let b = composite_rp_frame(&CompositeRequest::new(doubled, Mode::RpStructured(k), 1, 5), 0, 2).unwrap();
        assert_eq!(b.samples, a.samples.mapv(|c| c * 2.0));
    }

    #[test]
    fn single_flat_primitive_refocuses() {
        let n = 64;
        let z = 5e-3;
        let s = scene(vec![blob(0, 0.0, z, 1.0, 1.0)], n, DepthOrder::BackToFront);
        let mut req = CompositeRequest::new(s, Mode::RpSpatial, 1, 0);
        req.propagator = Propagator::exact();
        let fps = BTreeMap::from([(0, flat(n, 20..44, 16..40, 0, z))]);
        let prep = prepare_with_footprints(&req, &fps).unwrap();
        // unit modulation stands in for a forced φ ≡ 0
        let g0 = prep.rp_frame_with(0, |_| Array2::from_elem((n, n), Complex64::new(1.0, 0.0))).unwrap();
        assert_eq!(g0.plane_z, 0.0);
        let back = req.propagator.propagate(&g0, z);
        let a = fps[&0].to_dense();
        for (v, a) in back.samples.iter().zip(a.iter()) {
            if *a >= 0.1 {
                assert!((v.norm() - a).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn opaque_occluder_blocks_background() {
        let n = 32;
        let (zf, zb) = (0.01, 0.012);
        let mut front = blob(0, 0.0, zf, 1.0, 1.0);
        front.color = [0.0; 3];
        let back = blob(1, 0.0, zb, 1.0, 0.8);
        let fps = BTreeMap::from([
            (0, flat(n, 0..n, 0..n, 0, zf)),
            (1, flat(n, 8..24, 8..24, 1, zb)),
        ]);
        let alone = CompositeRequest::new(scene(vec![back.clone()], n, DepthOrder::BackToFront), Mode::RpSpatial, 1, 1);
        let only = BTreeMap::from([(1, fps[&1].clone())]);
        let e_alone = prepare_with_footprints(&alone, &only).unwrap().rp_frame(0, 1).unwrap().sum_sq();
        let both = CompositeRequest::new(scene(vec![front, back], n, DepthOrder::BackToFront), Mode::RpSpatial, 1, 1);
        let e_both = prepare_with_footprints(&both, &fps).unwrap().rp_frame(0, 1).unwrap().sum_sq();
        assert!(e_alone > 0.0);
        assert!(e_both < 1e-6 * e_alone);
    }

    #[test]
    fn layered_with_one_primitive_per_layer_is_exact() {
        let prims: Vec<_> = (0..5).map(|i| blob(i, i as f64 * 2.0 - 4.0, 0.01 + i as f64 * 1e-3, 3.0, 0.6)).collect();
        let s = scene(prims, 32, DepthOrder::BackToFront);
        let k = kernel_uniform((32, 32));
        let exact = CompositeRequest::new(s.clone(), Mode::RpStructured(k.clone()), 1, 9);
        let mut layered = CompositeRequest::new(s, Mode::RpStructured(k), 1, 9);
        layered.binning = Binning::Layered(5);
        for ch in 0..3 {
            assert_eq!(
                composite_rp_frame(&exact, ch, 1).unwrap().samples,
                composite_rp_frame(&layered, ch, 1).unwrap().samples
            );
        }
    }

    #[test]
    fn layered_binning_merges_planes() {
        let prims: Vec<_> = (0..6).map(|i| blob(i, i as f64 - 3.0, 0.01 + (i / 3) as f64 * 1e-3 + i as f64 * 1e-6, 3.0, 0.6)).collect();
        let s = scene(prims, 32, DepthOrder::BackToFront);
        let mut req = CompositeRequest::new(s, Mode::RpSpatial, 1, 1);
        req.binning = Binning::Layered(2);
        let prep = prepare(&req).unwrap();
        assert_eq!(prep.layers.len(), 2);
        assert!(prep.layers[0].z > prep.layers[1].z);
        assert!(prep.rp_frame(0, 1).unwrap().is_finite());
    }

    #[test]
    fn sp_two_stacked_half_opaque() {
        let n = 8;
        let mut prims = vec![blob(0, 0.0, 0.0, 1.0, 0.5), blob(1, 0.0, 0.0, 1.0, 0.5)];
        for p in &mut prims {
            p.color = [1.0; 3];
        }
        let req = CompositeRequest::new(scene(prims, n, DepthOrder::FrontToBack), Mode::SpSmooth, 1, 0);
        let fps = BTreeMap::from([(0, flat(n, 0..n, 0..n, 0, 0.0)), (1, flat(n, 0..n, 0..n, 1, 0.0))]);
        let u = prepare_with_footprints(&req, &fps).unwrap().sp(0).unwrap();
        // front contributes 0.5, the rear 0.5·(1 − 0.5)
        for v in u.samples.iter() {
            assert!((v - Complex64::new(0.75, 0.0)).norm() < 1e-15);
        }
    }

    #[test]
    fn sp_single_primitive_refocuses() {
        let n = 64;
        let z = 0.012;
        let p = GaussianPrimitive::isotropic(0, [0.0, 0.0, z], 5.0 * P, 1.0, [1.0; 3]);
        let mut req = CompositeRequest::new(scene(vec![p], n, DepthOrder::FrontToBack), Mode::SpSmooth, 1, 0);
        req.propagator = Propagator::exact();
        let prep = prepare(&req).unwrap();
        let u = prep.sp(2).unwrap();
        let back = req.propagator.propagate(&u, z);
        let a = prep.footprints()[0].to_dense();
        for (v, a) in back.samples.iter().zip(a.iter()) {
            assert!((v.norm() - a).abs() < 1e-6);
        }
    }

    #[test]
    fn sp_direct_sum_equals_recursion() {
        let prims: Vec<_> = (0..6)
            .map(|i| blob(i, (i as f64 - 3.0) * 3.0, 0.008 + i as f64 * 1.7e-3, 4.0, 0.4 + 0.1 * i as f64))
            .collect();
        let mut req = CompositeRequest::new(scene(prims, 64, DepthOrder::FrontToBack), Mode::SpSmooth, 1, 0);
        req.propagator = Propagator::exact();
        let prep = prepare(&req).unwrap();
        for ch in 0..3 {
            let a = prep.sp(ch).unwrap();
            let b = prep.sp_recursive(ch).unwrap();
            assert!(rel_l2(&b.samples, &a.samples) < 1e-9);
        }
    }

    #[test]
    fn multiplex_matches_single_frames_and_is_deterministic() {
        let prims: Vec<_> = (0..3).map(|i| blob(i, i as f64 * 5.0 - 5.0, 0.01 + i as f64 * 1e-3, 4.0, 0.9)).collect();
        let s = scene(prims, 32, DepthOrder::BackToFront);
        let req = CompositeRequest::new(s.clone(), Mode::RpStructured(kernel_uniform((32, 32))), 1, 7);
        let h = time_multiplex(&req).unwrap();
        assert_eq!(h.n_frames(), 1);
        h.validate().unwrap();
        for ch in 0..3 {
            assert_eq!(h.channels[ch][0].samples, composite_rp_frame(&req, ch, 1).unwrap().samples);
            assert_eq!(h.channels[ch][0].wavelength, s.optics.wavelengths[ch]);
        }
        let mut req4 = CompositeRequest::new(s, Mode::RpSpatial, 4, 7);
        let a = time_multiplex(&req4).unwrap();
        req4.exec = Execution::Sequential;
        let b = time_multiplex(&req4).unwrap();
        for ch in 0..3 {
            for t in 0..4 {
                assert_eq!(a.channels[ch][t].samples, b.channels[ch][t].samples);
            }
            assert_ne!(a.channels[ch][0].samples, a.channels[ch][1].samples);
        }
        req4.seed = 8;
        let c = time_multiplex(&req4).unwrap();
        assert_ne!(a.channels[0][0].samples, c.channels[0][0].samples);
        assert_eq!(a.mode, ModeTag::RpSpatial);
        assert_eq!(a.scene_digest, c.scene_digest);
    }

    #[test]
    fn per_primitive_kernel_override() {
        let prims: Vec<_> = (0..2).map(|i| blob(i, i as f64 * 6.0 - 3.0, 0.01 + i as f64 * 1e-3, 4.0, 0.9)).collect();
        let s = scene(prims, 32, DepthOrder::BackToFront);
        let base = CompositeRequest::new(s, Mode::RpStructured(kernel_uniform((32, 32))), 1, 7);
        let mut over = base.clone();
        over.kernel_overrides.insert(
            1,
            crate::spectral::kernel_pupil((32, 32), P, 0.3 * std::f64::consts::PI / P).unwrap(),
        );
        let a = composite_rp_frame(&base, 0, 1).unwrap();
        let b = composite_rp_frame(&over, 0, 1).unwrap();
        assert!(rel_l2(&a.samples, &b.samples) > 1e-3);
        over.kernel_overrides.insert(0, kernel_uniform((8, 8)));
        assert!(over.validate().is_err());
    }

    #[test]
    fn sp_matches_intensity_of_collapsed_blend() {
        let n = 32;
        let prims: Vec<_> = (0..4).map(|i| blob(i, i as f64 * 2.0 - 3.0, 0.0, 4.0, 0.6)).collect();
        let req = CompositeRequest::new(scene(prims, n, DepthOrder::FrontToBack), Mode::SpSmooth, 1, 0);
        let prep = prepare(&req).unwrap();
        let u = prep.sp(0).unwrap();
        let mut blend = Array2::<f64>::zeros((n, n));
        let mut trans = Array2::<f64>::ones((n, n));
        for (p, fp) in prep.primitives().iter().zip(prep.footprints()) {
            let a = fp.to_dense();
            Zip::from(&mut blend).and(&mut trans).and(&a).for_each(|b, t, a| {
                *b += p.color[0].sqrt() * p.opacity * a * *t;
                *t *= 1.0 - p.opacity * a;
            });
        }
        let i = intensity(&u);
        for (x, b) in i.iter().zip(blend.iter()) {
            assert!((x.sqrt() - b).abs() <= 1e-12);
        }
    }
}
