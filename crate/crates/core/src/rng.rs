//! Seeded, splittable random streams.
//!
//! Every consumer of randomness derives its generator from a user seed
//! plus a fixed stream id, so that e.g. changing the noise level never
//! changes which points get sampled.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

pub mod stream {
    pub const SAMPLE: u64 = 1;
    pub const NOISE: u64 = 2;
    pub const INIT: u64 = 3;
    pub const BATCH: u64 = 4;
    pub const DIAMETER: u64 = 5;
}

/// Generator for `(seed, stream)`.
pub fn seeded(seed: u64, stream: u64) -> Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Serializable position of a generator.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct RngState {
    pub seed: [u8; 32],
    pub stream: u64,
    pub word_pos: u128,
}

impl RngState {
    pub fn capture(rng: &Rng) -> Self {
        RngState {
            seed: rng.get_seed(),
            stream: rng.get_stream(),
            word_pos: rng.get_word_pos(),
        }
    }

    pub fn restore(&self) -> Rng {
        let mut rng = ChaCha8Rng::from_seed(self.seed);
        rng.set_stream(self.stream);
        rng.set_word_pos(self.word_pos);
        rng
    }

    pub fn to_hex(&self) -> String {
        let mut s: String = self.seed.iter().map(|b| format!("{b:02x}")).collect();
        s.push_str(&format!(":{:x}:{:x}", self.stream, self.word_pos));
        s
    }

    pub fn from_hex(s: &str) -> Option<Self> {
        let mut parts = s.split(':');
        let seed_hex = parts.next()?;
        let stream = u64::from_str_radix(parts.next()?, 16).ok()?;
        let word_pos = u128::from_str_radix(parts.next()?, 16).ok()?;
        if seed_hex.len() != 64 || parts.next().is_some() {
            return None;
        }
        let mut seed = [0u8; 32];
        for (i, b) in seed.iter_mut().enumerate() {
            *b = u8::from_str_radix(&seed_hex[2 * i..2 * i + 2], 16).ok()?;
        }
        Some(RngState {
            seed,
            stream,
            word_pos,
        })
    }
}
