//! Phase-only encoding of complex SLM fields by gradient descent with
//! complex-field supervision at a fixed distance.

use std::f64::consts::PI;

use ndarray::{Array2, Zip};
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::field::WaveField;
use crate::propagation::Propagator;
use crate::reconstruct::FocalStack;
use crate::rng::DrawKey;

/// Default supervision distance between the phase SLM and the target plane.
pub const DEFAULT_DISTANCE: f64 = 0.04;

const MAX_HALVINGS: usize = 40;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Init {
    Zero,
    Random(u64),
}

#[derive(Debug, Clone)]
pub struct EncodeProblem {
    /// Complex field the phase pattern must produce at `distance`.
    pub target: WaveField,
    pub distance: f64,
    pub iterations: usize,
    /// Step in units of `1/(2|s|²)`, the inverse curvature scale of the loss.
    pub step_size: f64,
    pub init: Init,
    pub scale_free: bool,
    pub propagator: Propagator,
    /// Color channel the target belongs to; carried into reconstructions.
    pub channel: usize,
}

impl EncodeProblem {
    pub fn new(target: WaveField) -> Self {
        EncodeProblem {
            target,
            distance: DEFAULT_DISTANCE,
            iterations: 500,
            step_size: 1.0,
            init: Init::Random(0),
            scale_free: true,
            propagator: Propagator::default(),
            channel: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.iterations == 0 {
            return Err(Error::InvalidArgument("iterations must be at least 1".into()));
        }
        if !(self.step_size > 0.0 && self.step_size.is_finite()) {
            return Err(Error::InvalidArgument("step size must be positive".into()));
        }
        if !self.distance.is_finite() {
            return Err(Error::NonFinite("encode distance".into()));
        }
        if !self.target.is_finite() {
            return Err(Error::NonFinite("encode target".into()));
        }
        Ok(())
    }

    pub fn initial_phase(&self) -> Array2<f64> {
        let shape = self.target.shape();
        match self.init {
            Init::Zero => Array2::zeros(shape),
            Init::Random(seed) => {
                let ph = DrawKey::new(seed, u64::MAX, 0).phases(0x0045_4e43, shape.0 * shape.1);
                Array2::from_shape_vec(shape, ph).expect("one phase per pixel")
            }
        }
    }

    fn forward(&self, phase: &Array2<f64>) -> WaveField {
        let v = phase.mapv(|t| Complex64::from_polar(1.0, t));
        let slm = WaveField::from_samples(v, self.target.pitch, self.target.wavelength, self.target.plane_z - self.distance);
        self.propagator.propagate(&slm, self.distance)
    }

    fn scale(&self, pred: &WaveField) -> Result<Complex64> {
        if !self.scale_free {
            return Ok(Complex64::new(1.0, 0.0));
        }
        let mut num = Complex64::default();
        let mut den = 0.0;
        Zip::from(&pred.samples).and(&self.target.samples).for_each(|p, t| {
            num += p.conj() * t;
            den += p.norm_sqr();
        });
        if den == 0.0 {
            return Err(Error::ZeroEnergy);
        }
        Ok(num / den)
    }
}

#[derive(Debug, Clone)]
pub struct LossEval {
    pub loss: f64,
    pub gradient: Array2<f64>,
    /// Complex scale applied to the prediction (1 without `scale_free`).
    pub scale: Complex64,
}

/// `Σ|s·P(e^{iθ}; z) − target|²` and its gradient with respect to `θ`.
pub fn encode_loss(phase: &Array2<f64>, prob: &EncodeProblem) -> Result<LossEval> {
    if phase.dim() != prob.target.shape() {
        return Err(Error::ShapeMismatch {
            expected: prob.target.shape(),
            actual: phase.dim(),
        });
    }
    let pred = prob.forward(phase);
    let s = prob.scale(&pred)?;
    let residual = Zip::from(&pred.samples)
        .and(&prob.target.samples)
        .map_collect(|p, t| s * p - t);
    let loss: f64 = residual.iter().map(|r| r.norm_sqr()).sum();
    // the adjoint of propagation by z is propagation by −z
    let back = prob.propagator.propagate(&pred.with_samples(residual), -prob.distance);
    let gradient = Zip::from(phase)
        .and(&back.samples)
        .map_collect(|t, w| -2.0 * (s * Complex64::from_polar(1.0, *t) * w.conj()).im);
    Ok(LossEval { loss, gradient, scale: s })
}

#[derive(Debug, Clone, PartialEq)]
pub struct PhasePattern {
    /// Wrapped to `[−π, π)`.
    pub phase: Array2<f64>,
    pub initial_loss: f64,
    /// Best loss after each iteration (non-increasing).
    pub loss_trace: Vec<f64>,
    /// Complex scale at the returned phase.
    pub scale: Complex64,
}

impl PhasePattern {
    pub fn best_loss(&self) -> f64 {
        self.loss_trace.last().copied().unwrap_or(self.initial_loss)
    }

    /// 8-bit gray levels, `[−π, π)` mapped linearly onto `[0, 255]`.
    pub fn to_gray8(&self) -> Array2<u8> {
        self.phase
            .mapv(|t| (((t + PI) / (2.0 * PI)) * 256.0).floor().clamp(0.0, 255.0) as u8)
    }
}

pub fn wrap_phase(t: f64) -> f64 {
    let w = (t + PI).rem_euclid(2.0 * PI) - PI;
    if w >= PI {
        -PI
    } else {
        w
    }
}

/// Gradient descent with step halving whenever a step would raise the loss.
pub fn encode(prob: &EncodeProblem) -> Result<PhasePattern> {
    prob.validate()?;
    let mut phase = prob.initial_phase();
    let mut eval = encode_loss(&phase, prob)?;
    if !eval.loss.is_finite() {
        return Err(Error::Diverged { iteration: 0 });
    }
    let initial_loss = eval.loss;
    let mut step = prob.step_size;
    let mut trace = Vec::with_capacity(prob.iterations);
    for it in 1..=prob.iterations {
        let curvature = 2.0 * eval.scale.norm_sqr().max(f64::MIN_POSITIVE);
        let mut accepted = None;
        for _ in 0..MAX_HALVINGS {
            let eta = step / curvature;
            let trial = Zip::from(&phase).and(&eval.gradient).map_collect(|t, g| t - eta * g);
            let next = encode_loss(&trial, prob)?;
            if !next.loss.is_finite() {
                return Err(Error::Diverged { iteration: it });
            }
            if next.loss <= eval.loss {
                accepted = Some((trial, next));
                break;
            }
            step *= 0.5;
        }
        // with no decreasing step left the iterate is stationary to machine precision
        if let Some((p, e)) = accepted {
            phase = p;
            eval = e;
        }
        trace.push(eval.loss);
    }
    Ok(PhasePattern {
        phase: phase.mapv(wrap_phase),
        initial_loss,
        loss_trace: trace,
        scale: eval.scale,
    })
}

/// Focal stack of `e^{iθ}` at depths measured from the phase SLM.
///
/// The field is formed as `s·P(e^{iθ}; z_t)` on the target plane and then
/// propagated by `d − z_t`, so it is directly comparable to stacks of the target.
pub fn reconstruct_encoded(phase: &Array2<f64>, prob: &EncodeProblem, depths: &[f64]) -> Result<FocalStack> {
    if depths.is_empty() {
        return Err(Error::InvalidArgument("depth list is empty".into()));
    }
    if depths.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidArgument("depths must be strictly increasing".into()));
    }
    let pred = prob.forward(phase);
    let s = prob.scale(&pred)?;
    let field = pred.with_samples(pred.samples.mapv(|p| s * p));
    let slices = Execution::default().map(depths.len(), |i| {
        crate::field::intensity(&prob.propagator.propagate(&field, depths[i] - prob.distance))
    });
    Ok(FocalStack {
        depths: depths.to_vec(),
        channels: vec![prob.channel],
        slices: vec![slices],
        frames_used: 1,
    })
}
