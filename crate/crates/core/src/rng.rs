//! Seeded, portable random streams.
//!
//! Every random draw in the toolkit comes from a ChaCha8 stream keyed by
//! `(seed, sample, purpose)`. `ChaCha8Rng::seed_from_u64(seed)` fixes the
//! key and [`stream_id`] picks one of its 2⁶⁴ independent streams, so a
//! sample's noise does not depend on how many other samples were drawn or
//! in which order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// What a random stream is used for. Each variant maps to a distinct
/// stream family.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Purpose {
    /// Node coordinates of a synthetic sensor graph.
    Points,
    /// Observation noise at the given σ (in hundredths, to keep it integral).
    Noise { sigma_centi: u32 },
    /// Noise2Noise re-noising in the given epoch.
    Noise2Noise { epoch: u32 },
    /// Probe signals for condition checks.
    Probe,
}

impl Purpose {
    pub fn noise(sigma: f64) -> Self {
        Purpose::Noise {
            sigma_centi: libm::round(sigma * 100.0) as u32,
        }
    }

    fn code(self) -> (u64, u64) {
        match self {
            Purpose::Points => (1, 0),
            Purpose::Noise { sigma_centi } => (2, sigma_centi as u64),
            Purpose::Noise2Noise { epoch } => (3, epoch as u64),
            Purpose::Probe => (4, 0),
        }
    }
}

/// `purpose (8 bits) | sample (24 bits) | sub-index (32 bits)`.
pub fn stream_id(sample: u32, purpose: Purpose) -> u64 {
    let (code, sub) = purpose.code();
    (code << 56) | ((sample as u64 & 0xff_ffff) << 32) | (sub & 0xffff_ffff)
}

pub fn stream(seed: u64, sample: u32, purpose: Purpose) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream_id(sample, purpose));
    rng
}
