//! Counter-based random streams: one independent substream per `(path, step)`.

use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

/// Word offset between consecutive steps of one path (2^20 words per step).
const STEP_STRIDE_BITS: u32 = 20;

/// Standard normal generator positioned at `(seed, stream, step)`.
///
/// The draws depend only on those three numbers, so parallel and serial
/// schedules produce identical samples.
pub struct NormalStream(ChaCha8Rng);

impl NormalStream {
    pub fn new(seed: u64, stream: u64, step: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        rng.set_word_pos(u128::from(step) << STEP_STRIDE_BITS);
        Self(rng)
    }

    pub fn next(&mut self) -> f64 {
        self.0.sample(StandardNormal)
    }

    pub fn fill(&mut self, out: &mut [f64]) {
        for v in out {
            *v = self.next();
        }
    }

    pub fn uniform(&mut self) -> f64 {
        self.0.random::<f64>()
    }
}
