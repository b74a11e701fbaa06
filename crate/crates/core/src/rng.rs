//! Counter-keyed random phases.
//!
//! Every draw is a pure function of `(seed, scope, t, tag)`. Nothing depends on
//! evaluation order, so frames and primitives can be generated on any thread.

use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::f64::consts::PI;

/// Logical coordinates of one draw.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct DrawKey {
    pub seed: u64,
    /// Distinguishes independent streams within a frame (primitive, channel, ...).
    pub scope: u64,
    pub t: u64,
}

/// Stream tags so spectral and spatial draws with the same key never coincide.
pub(crate) const TAG_SPECTRAL: u64 = 0x5350_4543;
pub(crate) const TAG_SPATIAL: u64 = 0x5350_4154;

impl DrawKey {
    pub fn new(seed: u64, scope: u64, t: u64) -> Self {
        DrawKey { seed, scope, t }
    }

    /// Scope for one primitive on one color channel.
    pub fn primitive_scope(channel: usize, primitive_id: u64) -> u64 {
        splitmix64(primitive_id ^ splitmix64(channel as u64 + 1))
    }

    fn rng(&self, tag: u64) -> ChaCha8Rng {
        let mut state = splitmix64(self.seed ^ 0x9e37_79b9_7f4a_7c15);
        state = splitmix64(state ^ self.scope);
        state = splitmix64(state ^ self.t);
        state = splitmix64(state ^ tag);
        let mut bytes = [0u8; 32];
        for chunk in bytes.chunks_exact_mut(8) {
            state = splitmix64(state);
            chunk.copy_from_slice(&state.to_le_bytes());
        }
        ChaCha8Rng::from_seed(bytes)
    }

    /// `n` phases iid uniform on `[−π, π)`, one per bin in row-major order.
    pub fn phases(&self, tag: u64, n: usize) -> Vec<f64> {
        let mut rng = self.rng(tag);
        (0..n).map(|_| unit_to_phase(rng.next_u64())).collect()
    }

    /// Phase of bin `index` alone; equals `phases(tag, n)[index]` for any `n > index`.
    pub fn phase_at(&self, tag: u64, index: usize) -> f64 {
        let mut rng = self.rng(tag);
        // each u64 consumes two 32-bit words of the stream
        rng.set_word_pos(2 * index as u128);
        unit_to_phase(rng.next_u64())
    }
}

fn unit_to_phase(x: u64) -> f64 {
    let u = (x >> 11) as f64 * (1.0 / (1u64 << 53) as f64);
    2.0 * PI * u - PI
}

pub(crate) fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}
