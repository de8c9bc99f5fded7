//! Counter-style random streams.
//!
//! Each stream is a ChaCha8 generator keyed by `(seed, domain)` and positioned
//! on stream `index`, so draws for subject `i` never depend on how work is
//! split between threads.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Separates independent uses of the same user seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Domain {
    Population,
    Survey,
}

impl Domain {
    fn tag(self) -> u64 {
        match self {
            Domain::Population => 0x706f_7075_6c61_7469,
            Domain::Survey => 0x7375_7276_6579_0000,
        }
    }
}

pub fn stream(seed: u64, domain: Domain, salt: u64, index: u64) -> ChaCha8Rng {
    let mut key = [0u8; 32];
    key[..8].copy_from_slice(&seed.to_le_bytes());
    key[8..16].copy_from_slice(&domain.tag().to_le_bytes());
    key[16..24].copy_from_slice(&salt.to_le_bytes());
    let mut rng = ChaCha8Rng::from_seed(key);
    rng.set_stream(index);
    rng
}

/// Uniform on the open interval (0, 1).
#[inline]
pub fn open_unit(rng: &mut impl RngCore) -> f64 {
    ((rng.next_u64() >> 11) as f64 + 0.5) * (1.0 / (1u64 << 53) as f64)
}
