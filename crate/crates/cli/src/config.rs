//! Declarative run configuration (TOML).

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use wavesplat_core::compositor::{Binning, Mode};
use wavesplat_core::field::{DEFAULT_PITCH, DEFAULT_WAVELENGTHS};
use wavesplat_core::reconstruct::{LightFieldParams, ViewGrid};
use wavesplat_core::spectral::{kernel_from_f64_le, kernel_pupil, kernel_sh, kernel_uniform, SpectralKernel};
use wavesplat_core::splat::{ColorDomain, SceneMapping};
use wavesplat_core::OpticsConfig;

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// PLY file, relative to the config file.
    pub scene: Option<PathBuf>,
    #[serde(default)]
    pub optics: OpticsSection,
    #[serde(default)]
    pub mapping: MappingSection,
    #[serde(default = "default_mode")]
    pub mode: ModeName,
    #[serde(default)]
    pub kernel: KernelSpec,
    #[serde(default = "default_frames")]
    pub frames: usize,
    #[serde(default)]
    pub seed: u64,
    /// Number of depth planes; absent means one plane per primitive.
    pub layers: Option<usize>,
    #[serde(default)]
    pub color_domain: ColorDomainName,
    #[serde(default)]
    pub outputs: OutputsSection,
    #[serde(default)]
    pub encode: EncodeSection,
    /// Export directory, relative to the config file.
    #[serde(default = "default_out")]
    pub out: PathBuf,
}

fn default_mode() -> ModeName {
    ModeName::RpStructured
}

fn default_frames() -> usize {
    1
}

fn default_out() -> PathBuf {
    PathBuf::from("out")
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "snake_case")]
pub enum ModeName {
    RpStructured,
    RpSpatial,
    SpSmooth,
}

#[derive(Debug, Clone, Copy, Default, Serialize, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "snake_case")]
pub enum ColorDomainName {
    #[default]
    Intensity,
    Amplitude,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct OpticsSection {
    pub pitch: f64,
    pub wavelengths: [f64; 3],
    /// `[rows, cols]`.
    pub grid: [usize; 2],
}

impl Default for OpticsSection {
    fn default() -> Self {
        OpticsSection {
            pitch: DEFAULT_PITCH,
            wavelengths: DEFAULT_WAVELENGTHS,
            grid: [256, 256],
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct MappingSection {
    pub rotation: [[f64; 3]; 3],
    pub translation: [f64; 3],
    pub lateral_scale: f64,
    pub z_scene: [f64; 2],
    pub z_holo: [f64; 2],
    pub margin: f64,
}

impl Default for MappingSection {
    fn default() -> Self {
        let m = SceneMapping::default();
        MappingSection {
            rotation: m.rotation,
            translation: m.translation,
            lateral_scale: m.lateral_scale,
            z_scene: m.z_scene,
            z_holo: m.z_holo,
            margin: m.margin,
        }
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize, PartialEq)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum KernelSpec {
    #[default]
    Uniform,
    /// Radius as a fraction of the Nyquist frequency `π/p`.
    Pupil { radius: f64 },
    Sh { l: i32, m: i32 },
    /// Raw little-endian f64 grid, relative to the config file.
    Custom { path: PathBuf },
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct OutputsSection {
    /// Refocus depths in meters from the SLM.
    pub depths: Vec<f64>,
    pub channels: Vec<usize>,
    pub window: usize,
    pub stride: usize,
    /// `[rows, cols]` of the uniform view grid.
    pub views: [usize; 2],
}

impl Default for OutputsSection {
    fn default() -> Self {
        OutputsSection {
            depths: vec![0.01, 0.02, 0.03],
            channels: vec![0, 1, 2],
            window: 64,
            stride: 32,
            views: [10, 10],
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct EncodeSection {
    pub distance: f64,
    pub iterations: usize,
    pub step_size: f64,
    pub channel: usize,
    /// 1-based frame of the hologram to encode.
    pub frame: usize,
}

impl Default for EncodeSection {
    fn default() -> Self {
        EncodeSection {
            distance: wavesplat_core::encode::DEFAULT_DISTANCE,
            iterations: 500,
            step_size: 1.0,
            channel: 1,
            frame: 1,
        }
    }
}

/// A parsed config plus the directory its relative paths resolve against.
#[derive(Debug, Clone)]
pub struct LoadedConfig {
    pub config: RunConfig,
    pub base: PathBuf,
    /// SHA-256 of the raw file followed by the applied overrides.
    pub digest: String,
}

#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub frames: Option<usize>,
    pub out: Option<PathBuf>,
}

impl LoadedConfig {
    pub fn load(path: &Path, overrides: &Overrides) -> CliResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        let mut config: RunConfig =
            toml::from_str(&text).map_err(|e| CliError::Config(format!("{}: {}", path.display(), e.message())))?;
        let mut h = Sha256::new();
        h.update(text.as_bytes());
        if let Some(s) = overrides.seed {
            config.seed = s;
            h.update(format!("seed={s}"));
        }
        if let Some(t) = overrides.frames {
            config.frames = t;
            h.update(format!("frames={t}"));
        }
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        let mut loaded = LoadedConfig {
            config,
            base,
            digest: hex::encode(h.finalize()),
        };
        if let Some(out) = &overrides.out {
            // command-line paths are relative to the working directory
            loaded.config.out = std::path::absolute(out).map_err(|e| CliError::io(out, e))?;
        }
        loaded.config.validate()?;
        Ok(loaded)
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base.join(p)
        }
    }

    pub fn out_dir(&self) -> PathBuf {
        self.resolve(&self.config.out)
    }

    pub fn kernel(&self) -> CliResult<SpectralKernel> {
        let c = &self.config;
        let shape = (c.optics.grid[0], c.optics.grid[1]);
        let k = match &c.kernel {
            KernelSpec::Uniform => kernel_uniform(shape),
            KernelSpec::Pupil { radius } => kernel_pupil(shape, c.optics.pitch, radius * std::f64::consts::PI / c.optics.pitch)?,
            KernelSpec::Sh { l, m } => kernel_sh(shape, c.optics.pitch, c.optics.wavelengths[1], *l, *m)?,
            KernelSpec::Custom { path } => {
                let path = self.resolve(path);
                let bytes = std::fs::read(&path).map_err(|e| CliError::io(&path, e))?;
                kernel_from_f64_le(&bytes, shape).map_err(|e| CliError::format(&path, e.to_string()))?
            }
        };
        Ok(k)
    }

    pub fn mode(&self) -> CliResult<Mode> {
        Ok(match self.config.mode {
            ModeName::RpStructured => Mode::RpStructured(self.kernel()?),
            ModeName::RpSpatial => Mode::RpSpatial,
            ModeName::SpSmooth => Mode::SpSmooth,
        })
    }
}

impl RunConfig {
    pub fn validate(&self) -> CliResult<()> {
        let bad = |m: String| Err(CliError::Config(m));
        self.optics().map_err(|e| CliError::Config(e.to_string()))?;
        if self.frames == 0 {
            return bad("frames must be at least 1".into());
        }
        if self.mode == ModeName::SpSmooth && self.frames != 1 {
            return bad(format!("mode sp_smooth is deterministic and requires frames = 1 (got {})", self.frames));
        }
        if self.layers == Some(0) {
            return bad("layers must be at least 1".into());
        }
        if let KernelSpec::Pupil { radius } = self.kernel {
            if !(radius > 0.0 && radius.is_finite()) {
                return bad(format!("pupil radius must be > 0 (got {radius})"));
            }
        }
        let o = &self.outputs;
        if o.depths.iter().any(|z| !z.is_finite()) || o.depths.windows(2).any(|w| w[1] <= w[0]) {
            return bad("outputs.depths must be finite and strictly increasing".into());
        }
        if o.channels.is_empty() || o.channels.iter().any(|c| *c > 2) {
            return bad("outputs.channels must list channels 0, 1 or 2".into());
        }
        if o.window == 0 || o.stride == 0 || o.views.contains(&0) {
            return bad("outputs.window, outputs.stride and outputs.views must be positive".into());
        }
        let e = &self.encode;
        if e.channel > 2 || e.frame == 0 || e.iterations == 0 || !(e.step_size > 0.0) || !e.distance.is_finite() {
            return bad("encode section: channel in 0..=2, frame >= 1, iterations >= 1, step_size > 0".into());
        }
        Ok(())
    }

    pub fn optics(&self) -> wavesplat_core::Result<OpticsConfig> {
        OpticsConfig::new(self.optics.pitch, self.optics.wavelengths, self.optics.grid[0], self.optics.grid[1])
    }

    pub fn mapping(&self) -> SceneMapping {
        let m = &self.mapping;
        SceneMapping {
            rotation: m.rotation,
            translation: m.translation,
            lateral_scale: m.lateral_scale,
            z_scene: m.z_scene,
            z_holo: m.z_holo,
            margin: m.margin,
        }
    }

    pub fn binning(&self) -> Binning {
        match self.layers {
            None => Binning::Exact,
            Some(n) => Binning::Layered(n),
        }
    }

    pub fn color_domain(&self) -> ColorDomain {
        match self.color_domain {
            ColorDomainName::Intensity => ColorDomain::Intensity,
            ColorDomainName::Amplitude => ColorDomain::Amplitude,
        }
    }

    pub fn light_field_params(&self) -> LightFieldParams {
        LightFieldParams {
            window_size: self.outputs.window,
            stride: self.outputs.stride,
            views: ViewGrid::Uniform {
                vy: self.outputs.views[0],
                vx: self.outputs.views[1],
            },
        }
    }
}
