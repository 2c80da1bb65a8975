//! Deterministic, splittable random streams.
//!
//! Every stream is identified by a 64-bit key. The root key is the user seed;
//! a child's key is derived from its parent's key and a text label, so the
//! same `(seed, path)` always yields the same sequence and splitting never
//! advances the parent.
//!
//! The generator is fully specified here so that any implementation can
//! reproduce it bit for bit:
//!
//! ```text
//! splitmix64(s):  s += 0x9E3779B97F4A7C15
//!                 z  = s
//!                 z  = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9
//!                 z  = (z ^ (z >> 27)) * 0x94D049BB133111EB
//!                 return z ^ (z >> 31)
//!
//! fnv1a64(label): h = 0xCBF29CE484222325
//!                 for each UTF-8 byte b: h = (h ^ b) * 0x100000001B3
//!
//! child key:      key' = splitmix64_once(key ^ fnv1a64(label))
//!
//! seeding:        s = key; s0..s3 = four successive splitmix64(s) outputs
//!
//! xoshiro256**:   out = rotl(s1 * 5, 7) * 9
//!                 t   = s1 << 17
//!                 s2 ^= s0; s3 ^= s1; s1 ^= s2; s0 ^= s3
//!                 s2 ^= t;  s3 = rotl(s3, 45)
//!
//! uniform f64:    (next_u64 >> 11) * 2^-53   in [0, 1)
//! ```
//!
//! All multiplications and additions wrap modulo 2^64.

use std::fmt;

use rand_core::RngCore;
use thiserror::Error;

const GOLDEN_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;
const FNV_OFFSET: u64 = 0xCBF2_9CE4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01B3;

/// Substream labels used by a simulation run.
pub mod labels {
    pub const INIT: &str = "init";
    pub const SELECTION: &str = "selection";
    pub const SHRINK: &str = "shrink";
    pub const FLIP: &str = "flip";

    /// Children of [`INIT`] so the graph rejection loop cannot shift the
    /// initial-state draws.
    pub const INIT_GRAPH: &str = "graph";
    pub const INIT_STATES: &str = "states";

    /// Label of the `index`-th run of a seed batch.
    pub fn run(index: usize) -> String {
        format!("run-{index}")
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum RngError {
    #[error("stream label must be nonempty")]
    EmptyLabel,
}

#[inline]
fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(GOLDEN_GAMMA);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn fnv1a64(label: &str) -> u64 {
    label
        .bytes()
        .fold(FNV_OFFSET, |h, b| (h ^ u64::from(b)).wrapping_mul(FNV_PRIME))
}

/// Where a stream came from: root seed plus the labels used to reach it.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Origin {
    pub seed: u64,
    pub path: Vec<String>,
}

impl fmt::Display for Origin {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.seed)?;
        for label in &self.path {
            write!(f, "/{label}")?;
        }
        Ok(())
    }
}

/// A single-owner xoshiro256** stream with a derivable identity.
#[derive(Clone, Debug)]
pub struct RngStream {
    key: u64,
    s: [u64; 4],
    origin: Origin,
}

impl RngStream {
    /// Root stream for `seed`.
    pub fn new(seed: u64) -> Self {
        Self::from_key(
            seed,
            Origin {
                seed,
                path: Vec::new(),
            },
        )
    }

    fn from_key(key: u64, origin: Origin) -> Self {
        let mut sm = key;
        let s = [
            splitmix64(&mut sm),
            splitmix64(&mut sm),
            splitmix64(&mut sm),
            splitmix64(&mut sm),
        ];
        Self { key, s, origin }
    }

    /// Derives an independent child stream. The parent is not advanced.
    pub fn split(&self, label: &str) -> Result<Self, RngError> {
        if label.is_empty() {
            return Err(RngError::EmptyLabel);
        }
        let mut mixed = self.key ^ fnv1a64(label);
        let key = splitmix64(&mut mixed);
        let mut origin = self.origin.clone();
        origin.path.push(label.to_owned());
        Ok(Self::from_key(key, origin))
    }

    pub fn origin(&self) -> &Origin {
        &self.origin
    }

    #[inline]
    pub fn next_raw(&mut self) -> u64 {
        let s = &mut self.s;
        let out = s[1].wrapping_mul(5).rotate_left(7).wrapping_mul(9);
        let t = s[1] << 17;
        s[2] ^= s[0];
        s[3] ^= s[1];
        s[1] ^= s[2];
        s[0] ^= s[3];
        s[2] ^= t;
        s[3] = s[3].rotate_left(45);
        out
    }

    /// Uniform draw in `[0, 1)` with 53 bits of precision.
    #[inline]
    pub fn uniform(&mut self) -> f64 {
        (self.next_raw() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Bernoulli trial; consumes exactly one uniform draw.
    #[inline]
    pub fn bernoulli(&mut self, p: f64) -> bool {
        self.uniform() < p
    }
}

impl RngCore for RngStream {
    fn next_u32(&mut self) -> u32 {
        (self.next_raw() >> 32) as u32
    }

    fn next_u64(&mut self) -> u64 {
        self.next_raw()
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        for chunk in dst.chunks_mut(8) {
            let bytes = self.next_raw().to_le_bytes();
            chunk.copy_from_slice(&bytes[..chunk.len()]);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn draws(rng: &mut RngStream, k: usize) -> Vec<u64> {
        (0..k).map(|_| rng.next_raw()).collect()
    }

    #[test]
    fn same_seed_same_sequence() {
        let a = draws(&mut RngStream::new(42), 1000);
        let b = draws(&mut RngStream::new(42), 1000);
        assert_eq!(a, b);
    }

    #[test]
    fn neighbouring_seeds_differ_early() {
        let a = draws(&mut RngStream::new(42), 16);
        let b = draws(&mut RngStream::new(43), 16);
        assert!(a.iter().zip(&b).any(|(x, y)| x != y));
    }

    #[test]
    fn splitmix_reference_values() {
        // First outputs of splitmix64 seeded with 0, as published with the
        // reference implementation.
        let mut s = 0u64;
        assert_eq!(splitmix64(&mut s), 0xE220_A839_7B1D_CDAF);
        assert_eq!(splitmix64(&mut s), 0x6E78_9E6A_A1B9_65F4);
        assert_eq!(splitmix64(&mut s), 0x06C4_5D18_8009_454F);
    }

    #[test]
    fn uniform_mean_within_three_sigma() {
        let mut rng = RngStream::new(42);
        let n = 100_000;
        let mean = (0..n).map(|_| rng.uniform()).sum::<f64>() / n as f64;
        assert!((0.497..=0.503).contains(&mean), "mean {mean}");
    }

    #[test]
    fn uniform_in_unit_interval() {
        let mut rng = RngStream::new(7);
        for _ in 0..10_000 {
            let u = rng.uniform();
            assert!((0.0..1.0).contains(&u));
        }
    }

    #[test]
    fn split_is_deterministic() {
        let root = RngStream::new(9);
        let a = draws(&mut root.split(labels::SELECTION).unwrap(), 100);
        let b = draws(&mut root.split(labels::SELECTION).unwrap(), 100);
        assert_eq!(a, b);
    }

    #[test]
    fn split_labels_give_distinct_streams() {
        let root = RngStream::new(9);
        let a = draws(&mut root.split(labels::SELECTION).unwrap(), 16);
        let b = draws(&mut root.split(labels::SHRINK).unwrap(), 16);
        assert!(a.iter().zip(&b).any(|(x, y)| x != y));
        let parent = draws(&mut root.clone(), 16);
        assert_ne!(a, parent);
    }

    #[test]
    fn split_does_not_advance_parent() {
        let mut untouched = RngStream::new(5);
        let mut split_from = RngStream::new(5);
        let _child = split_from.split("flip").unwrap();
        assert_eq!(untouched.next_raw(), split_from.next_raw());
    }

    #[test]
    fn empty_label_rejected() {
        assert_eq!(
            RngStream::new(1).split("").unwrap_err(),
            RngError::EmptyLabel
        );
    }

    #[test]
    fn origin_records_path() {
        let child = RngStream::new(3)
            .split(&labels::run(2))
            .unwrap()
            .split(labels::FLIP)
            .unwrap();
        assert_eq!(child.origin().to_string(), "3/run-2/flip");
    }

    #[test]
    fn fill_bytes_matches_words() {
        let mut a = RngStream::new(11);
        let mut b = RngStream::new(11);
        let mut buf = [0u8; 12];
        a.fill_bytes(&mut buf);
        assert_eq!(&buf[..8], &b.next_raw().to_le_bytes());
        assert_eq!(&buf[8..], &b.next_raw().to_le_bytes()[..4]);
    }
}
