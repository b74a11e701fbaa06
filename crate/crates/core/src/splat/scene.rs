use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::field::OpticsConfig;
use crate::splat::ply::RawSplat;
use crate::wavefront::projected_covariance;

/// Zeroth-order real spherical harmonic, `1 / (2√π)`.
pub const SH_C0: f64 = 0.282_094_791_773_878_14;

/// A 2D Gaussian lying on a plane parallel to the SLM.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianPrimitive {
    /// Meters in hologram space; z is the distance from the SLM plane.
    pub mean: [f64; 3],
    /// Columns 0 and 1 are the in-plane axes matching `scales`; column 2 is the normal.
    pub rot: [[f64; 3]; 3],
    pub scales: [f64; 2],
    pub opacity: f64,
    pub color: [f64; 3],
    pub id: u64,
}

impl GaussianPrimitive {
    /// Checks the rotation, opacity, scale and color invariants.
    pub fn validate(&self) -> Result<()> {
        let r = &self.rot;
        for i in 0..3 {
            for j in 0..3 {
                let dot: f64 = (0..3).map(|k| r[k][i] * r[k][j]).sum();
                let expect = if i == j { 1.0 } else { 0.0 };
                if (dot - expect).abs() > 1e-6 {
                    return Err(Error::InvalidArgument(format!("primitive {}: rotation is not orthonormal", self.id)));
                }
            }
        }
        if (det3(r) - 1.0).abs() > 1e-6 {
            return Err(Error::InvalidArgument(format!("primitive {}: rotation has det != 1", self.id)));
        }
        if !(0.0..=1.0).contains(&self.opacity) {
            return Err(Error::InvalidArgument(format!("primitive {}: opacity outside [0, 1]", self.id)));
        }
        if self.scales.iter().any(|s| !(s.is_finite() && *s > 0.0)) {
            return Err(Error::InvalidArgument(format!("primitive {}: scales must be > 0", self.id)));
        }
        if self.color.iter().any(|c| !(c.is_finite() && *c >= 0.0)) || self.mean.iter().any(|m| !m.is_finite()) {
            return Err(Error::NonFinite(format!("primitive {}", self.id)));
        }
        Ok(())
    }

    /// Flat, axis-aligned primitive; handy for synthetic scenes.
    pub fn isotropic(id: u64, mean: [f64; 3], sigma: f64, opacity: f64, color: [f64; 3]) -> Self {
        GaussianPrimitive {
            mean,
            rot: IDENTITY,
            scales: [sigma, sigma],
            opacity,
            color,
            id,
        }
    }
}

pub(crate) const IDENTITY: [[f64; 3]; 3] = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];

fn det3(m: &[[f64; 3]; 3]) -> f64 {
    m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1]) - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
        + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
}

fn matmul3(a: &[[f64; 3]; 3], b: &[[f64; 3]; 3]) -> [[f64; 3]; 3] {
    let mut out = [[0.0; 3]; 3];
    for (i, row) in out.iter_mut().enumerate() {
        for (j, v) in row.iter_mut().enumerate() {
            *v = (0..3).map(|k| a[i][k] * b[k][j]).sum();
        }
    }
    out
}

fn quat_to_matrix(q: [f64; 4]) -> Option<[[f64; 3]; 3]> {
    let norm = q.iter().map(|v| v * v).sum::<f64>().sqrt();
    if !(norm.is_finite() && norm > 0.0) {
        return None;
    }
    let [w, x, y, z] = q.map(|v| v / norm);
    Some([
        [1.0 - 2.0 * (y * y + z * z), 2.0 * (x * y - w * z), 2.0 * (x * z + w * y)],
        [2.0 * (x * y + w * z), 1.0 - 2.0 * (x * x + z * z), 2.0 * (y * z - w * x)],
        [2.0 * (x * z - w * y), 2.0 * (y * z + w * x), 1.0 - 2.0 * (x * x + y * y)],
    ])
}

/// Applies the trainer's storage activations. The result is in scene units.
pub fn activate(raw: &RawSplat, id: u64) -> Result<GaussianPrimitive> {
    let rot = quat_to_matrix(raw.rotation_quat)
        .ok_or_else(|| Error::InvalidArgument(format!("splat {id}: zero or non-finite quaternion")))?;
    let opacity = 1.0 / (1.0 + (-raw.opacity_logit).exp());
    let scales: Vec<f64> = raw.log_scales.iter().map(|s| s.exp()).collect();

    // Keep the two largest axes; the dropped axis becomes the plane normal.
    let kept: [usize; 3] = match scales.len() {
        2 => [0, 1, 2],
        3 => {
            let drop = (0..3)
                .min_by(|&a, &b| scales[a].total_cmp(&scales[b]).then(b.cmp(&a)))
                .expect("three scales");
            match drop {
                0 => [1, 2, 0],
                1 => [0, 2, 1],
                _ => [0, 1, 2],
            }
        }
        n => return Err(Error::InvalidArgument(format!("splat {id}: expected 2 or 3 scales, got {n}"))),
    };
    let mut r = [[0.0; 3]; 3];
    for (dst, &src) in kept.iter().enumerate() {
        for row in 0..3 {
            r[row][dst] = rot[row][src];
        }
    }
    if det3(&r) < 0.0 {
        for row in r.iter_mut() {
            row[2] = -row[2];
        }
    }
    let color = raw.sh_dc.map(|c| (c * SH_C0 + 0.5).max(0.0));
    let prim = GaussianPrimitive {
        mean: raw.position,
        rot: r,
        scales: [scales[kept[0]], scales[kept[1]]],
        opacity,
        color,
        id,
    };
    if prim.mean.iter().chain(&prim.scales).chain(&prim.color).any(|v| !v.is_finite()) || !opacity.is_finite() {
        return Err(Error::NonFinite(format!("activated splat {id}")));
    }
    Ok(prim)
}

/// Affine map from trainer scene units into metric hologram space.
#[derive(Debug, Clone, PartialEq)]
pub struct SceneMapping {
    /// View rotation applied before translation (row-major).
    pub rotation: [[f64; 3]; 3],
    pub translation: [f64; 3],
    /// Meters per scene unit in x and y.
    pub lateral_scale: f64,
    /// `[near, far]` camera-space depths mapped onto `z_holo`.
    pub z_scene: [f64; 2],
    /// `[near, far]` distances from the SLM in meters.
    pub z_holo: [f64; 2],
    /// Extra border around the SLM aperture kept during culling, meters.
    pub margin: f64,
}

impl Default for SceneMapping {
    fn default() -> Self {
        SceneMapping {
            rotation: IDENTITY,
            translation: [0.0; 3],
            lateral_scale: 1e-3,
            z_scene: [0.0, 1.0],
            z_holo: [0.01, 0.03],
            margin: 0.0,
        }
    }
}

impl SceneMapping {
    fn validate(&self) -> Result<()> {
        if !(self.lateral_scale.is_finite() && self.lateral_scale > 0.0) {
            return Err(Error::DegenerateMapping(format!("lateral scale {} must be > 0", self.lateral_scale)));
        }
        if !(self.z_scene[1] > self.z_scene[0]) {
            return Err(Error::DegenerateMapping(format!("scene z range {:?} is empty or inverted", self.z_scene)));
        }
        if !(self.z_holo[1] > self.z_holo[0]) {
            return Err(Error::DegenerateMapping(format!("hologram z range {:?} is empty or inverted", self.z_holo)));
        }
        if !(self.margin.is_finite() && self.margin >= 0.0) {
            return Err(Error::DegenerateMapping("margin must be >= 0".into()));
        }
        let r = &self.rotation;
        let rtr = matmul3(&transpose3(r), r);
        let orthonormal = (0..3).all(|i| (0..3).all(|j| (rtr[i][j] - if i == j { 1.0 } else { 0.0 }).abs() < 1e-6));
        if !orthonormal || (det3(r) - 1.0).abs() > 1e-6 {
            return Err(Error::DegenerateMapping("view rotation is not a proper rotation".into()));
        }
        Ok(())
    }

    fn map_z(&self, z: f64) -> f64 {
        let [zn, zf] = self.z_scene;
        let [hn, hf] = self.z_holo;
        hn + (z - zn) * (hf - hn) / (zf - zn)
    }
}

fn transpose3(m: &[[f64; 3]; 3]) -> [[f64; 3]; 3] {
    let mut t = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            t[i][j] = m[j][i];
        }
    }
    t
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum DepthOrder {
    /// Nearest the SLM first; the order smooth-phase blending uses.
    #[default]
    FrontToBack,
    /// Farthest from the SLM first; the order the random-phase recurrence uses.
    BackToFront,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ColorDomain {
    /// Colors are intensity contributions (square-rooted for random phase).
    #[default]
    Intensity,
    /// Colors are field amplitudes.
    Amplitude,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DepthLayer {
    pub z: f64,
    /// Primitive ids, in the scene's order.
    pub members: Vec<u64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HologramScene {
    pub primitives: Vec<GaussianPrimitive>,
    pub order: DepthOrder,
    pub layers: Option<Vec<DepthLayer>>,
    pub optics: OpticsConfig,
    pub color_domain: ColorDomain,
}

impl HologramScene {
    /// Wraps primitives without sorting or binning.
    pub fn new(primitives: Vec<GaussianPrimitive>, optics: OpticsConfig) -> Self {
        HologramScene {
            primitives,
            order: DepthOrder::FrontToBack,
            layers: None,
            optics,
            color_domain: ColorDomain::Intensity,
        }
    }

    /// SHA-256 over optics, ordering and every primitive field, hex encoded.
    pub fn digest(&self) -> String {
        let mut h = Sha256::new();
        let o = &self.optics;
        h.update(o.pixel_pitch.to_le_bytes());
        for w in o.wavelengths {
            h.update(w.to_le_bytes());
        }
        h.update((o.grid_ny as u64).to_le_bytes());
        h.update((o.grid_nx as u64).to_le_bytes());
        h.update([self.order as u8, self.color_domain as u8]);
        for p in &self.primitives {
            h.update(p.id.to_le_bytes());
            for v in p.mean.iter().chain(p.rot.iter().flatten()).chain(&p.scales).chain(&p.color) {
                h.update(v.to_le_bytes());
            }
            h.update(p.opacity.to_le_bytes());
        }
        if let Some(layers) = &self.layers {
            for l in layers {
                h.update(l.z.to_le_bytes());
                for id in &l.members {
                    h.update(id.to_le_bytes());
                }
            }
        }
        h.finalize().iter().map(|b| format!("{b:02x}")).collect()
    }
}

/// Maps scene-space primitives into hologram space and culls those whose 3σ
/// lateral footprint misses the SLM aperture (plus `mapping.margin`).
pub fn to_hologram_space(prims: &[GaussianPrimitive], optics: &OpticsConfig, mapping: &SceneMapping) -> Result<HologramScene> {
    optics.validate()?;
    mapping.validate()?;
    let s = mapping.lateral_scale;
    let p = optics.pixel_pitch;
    let half = |n: usize| ((n / 2) as f64 * p + 0.5 * p, (n - 1 - n / 2) as f64 * p + 0.5 * p);
    let (x_lo, x_hi) = half(optics.grid_nx);
    let (y_lo, y_hi) = half(optics.grid_ny);
    let m = mapping.margin;

    let mut out = Vec::with_capacity(prims.len());
    for prim in prims {
        let r = &mapping.rotation;
        let cam: [f64; 3] = std::array::from_fn(|i| (0..3).map(|k| r[i][k] * prim.mean[k]).sum::<f64>() + mapping.translation[i]);
        let mapped = GaussianPrimitive {
            mean: [s * cam[0], s * cam[1], mapping.map_z(cam[2])],
            rot: matmul3(r, &prim.rot),
            scales: [s * prim.scales[0], s * prim.scales[1]],
            opacity: prim.opacity,
            color: prim.color,
            id: prim.id,
        };
        let cov = projected_covariance(&mapped);
        let (sx, sy) = (3.0 * cov[0][0].max(0.0).sqrt(), 3.0 * cov[1][1].max(0.0).sqrt());
        let [mx, my, _] = mapped.mean;
        let hits = mx + sx >= -x_lo - m && mx - sx <= x_hi + m && my + sy >= -y_lo - m && my - sy <= y_hi + m;
        if hits {
            out.push(mapped);
        }
    }
    Ok(HologramScene::new(out, *optics))
}

/// Sorts primitives by depth (ties by id) and optionally bins them into at
/// most `n_layers` planes. `None` keeps one plane per primitive.
pub fn sort_and_bin(scene: &HologramScene, order: DepthOrder, n_layers: Option<usize>) -> Result<HologramScene> {
    if scene.primitives.is_empty() {
        return Err(Error::EmptyScene);
    }
    let mut prims = scene.primitives.clone();
    prims.sort_by(|a, b| {
        let by_z = match order {
            DepthOrder::FrontToBack => a.mean[2].total_cmp(&b.mean[2]),
            DepthOrder::BackToFront => b.mean[2].total_cmp(&a.mean[2]),
        };
        by_z.then(a.id.cmp(&b.id))
    });

    let layers = match n_layers {
        None => None,
        Some(0) => return Err(Error::InvalidArgument("n_layers must be >= 1".into())),
        Some(n) => {
            let (zmin, zmax) = prims
                .iter()
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), p| (lo.min(p.mean[2]), hi.max(p.mean[2])));
            let planes: Vec<f64> = if n == 1 || zmax == zmin {
                vec![zmin]
            } else {
                (0..n).map(|j| zmin + (zmax - zmin) * j as f64 / (n - 1) as f64).collect()
            };
            let mut groups: Vec<Vec<&GaussianPrimitive>> = vec![Vec::new(); planes.len()];
            for p in &prims {
                groups[nearest_plane(&planes, p.mean[2])].push(p);
            }
            let mut layers: Vec<DepthLayer> = groups
                .into_iter()
                .filter(|g| !g.is_empty())
                .map(|g| DepthLayer {
                    z: g.iter().map(|p| p.mean[2]).sum::<f64>() / g.len() as f64,
                    members: g.iter().map(|p| p.id).collect(),
                })
                .collect();
            if order == DepthOrder::BackToFront {
                layers.reverse();
            }
            Some(layers)
        }
    };

    Ok(HologramScene {
        primitives: prims,
        order,
        layers,
        optics: scene.optics,
        color_domain: scene.color_domain,
    })
}

fn nearest_plane(planes: &[f64], z: f64) -> usize {
    let mut best = 0;
    for (j, pz) in planes.iter().enumerate() {
        if (z - pz).abs() < (z - planes[best]).abs() {
            best = j;
        }
    }
    best
}
