//! Counter-based random streams.
//!
//! Every stochastic step draws from its own ChaCha stream addressed by a
//! `(domain, major, minor)` coordinate, so results never depend on which
//! worker thread ran which realization or in what order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Which part of the program a stream belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Domain {
    Simulation = 1,
    Emission = 2,
    Sweep = 3,
    Parameters = 4,
    Initialization = 5,
    Validation = 6,
}

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Source of independent, reproducible streams derived from one master seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Streams {
    master: u64,
}

impl Streams {
    pub fn new(master: u64) -> Self {
        Self { master }
    }

    pub fn master(&self) -> u64 {
        self.master
    }

    /// Stream for coordinate `(domain, major, minor)`.
    ///
    /// The key depends on `(master, domain)` and the ChaCha stream id packs
    /// `major` (upper 32 bits) and `minor` (lower 32 bits), so distinct
    /// coordinates never share a keystream.
    pub fn stream(&self, domain: Domain, major: u64, minor: u64) -> ChaCha8Rng {
        debug_assert!(major <= u32::MAX as u64 && minor <= u32::MAX as u64);
        let mut sm = self.master ^ (domain as u64).wrapping_mul(0xA076_1D64_78BD_642F);
        let mut key = [0u8; 32];
        for chunk in key.chunks_exact_mut(8) {
            chunk.copy_from_slice(&splitmix64(&mut sm).to_le_bytes());
        }
        let mut rng = ChaCha8Rng::from_seed(key);
        rng.set_stream(((major & 0xFFFF_FFFF) << 32) | (minor & 0xFFFF_FFFF));
        rng
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn same_coordinate_same_stream() {
        let s = Streams::new(42);
        let a: Vec<u64> = (0..8).map(|_| 0).scan(s.stream(Domain::Sweep, 3, 7), |r, _: u64| Some(r.random())).collect();
        let b: Vec<u64> = (0..8).map(|_| 0).scan(s.stream(Domain::Sweep, 3, 7), |r, _: u64| Some(r.random())).collect();
        assert_eq!(a, b);
    }

    #[test]
    fn coordinates_are_distinct() {
        let s = Streams::new(42);
        let first = |d, a, b| -> u64 { s.stream(d, a, b).random() };
        let x = first(Domain::Sweep, 3, 7);
        assert_ne!(x, first(Domain::Sweep, 7, 3));
        assert_ne!(x, first(Domain::Sweep, 3, 8));
        assert_ne!(x, first(Domain::Parameters, 3, 7));
        assert_ne!(x, Streams::new(43).stream(Domain::Sweep, 3, 7).random::<u64>());
    }
}
