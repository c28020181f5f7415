//! Deterministic seeding.
//!
//! Every random stream in the crate is a `ChaCha8Rng` seeded from a 64-bit
//! value. Sub-streams are derived with [`derive_seed`], a fixed integer mix
//! that does not depend on the platform, the standard library hasher, or the
//! order in which work is scheduled.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

pub fn seeded(seed: u64) -> Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// FNV-1a over the bytes of a label.
pub fn label_hash(label: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in label.bytes() {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01B3);
    }
    h
}

/// Component of a derived seed.
#[derive(Debug, Clone, Copy)]
pub enum SeedPart<'a> {
    Label(&'a str),
    Index(u64),
}

impl<'a> From<&'a str> for SeedPart<'a> {
    fn from(s: &'a str) -> Self {
        SeedPart::Label(s)
    }
}

impl From<u64> for SeedPart<'_> {
    fn from(v: u64) -> Self {
        SeedPart::Index(v)
    }
}

impl From<usize> for SeedPart<'_> {
    fn from(v: usize) -> Self {
        SeedPart::Index(v as u64)
    }
}

/// Stable mix of a master seed with an ordered list of labels and indices.
pub fn derive_seed(master: u64, parts: &[SeedPart<'_>]) -> u64 {
    let mut acc = splitmix64(master);
    for part in parts {
        let v = match *part {
            SeedPart::Label(s) => label_hash(s),
            SeedPart::Index(i) => splitmix64(i ^ 0x5851_F42D_4C95_7F2D),
        };
        acc = splitmix64(acc ^ v);
    }
    acc
}

#[macro_export]
macro_rules! seed {
    ($master:expr $(, $part:expr)* $(,)?) => {
        $crate::rng::derive_seed($master, &[$($crate::rng::SeedPart::from($part)),*])
    };
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng as _;

    #[test]
    fn derived_seeds_are_stable_and_distinct() {
        let a = derive_seed(7, &["lr".into(), 64usize.into(), 3usize.into()]);
        let b = derive_seed(7, &["lr".into(), 64usize.into(), 3usize.into()]);
        let c = derive_seed(7, &["lr".into(), 64usize.into(), 4usize.into()]);
        let d = derive_seed(7, &["dt".into(), 64usize.into(), 3usize.into()]);
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert_ne!(a, d);
        assert_eq!(seed!(7, "lr", 64usize, 3usize), a);
    }

    #[test]
    fn part_order_matters() {
        assert_ne!(seed!(1, 2u64, 3u64), seed!(1, 3u64, 2u64));
    }

    #[test]
    fn seeded_rng_replays() {
        let mut r1 = seeded(99);
        let mut r2 = seeded(99);
        let a: Vec<u64> = (0..8).map(|_| r1.random()).collect();
        let b: Vec<u64> = (0..8).map(|_| r2.random()).collect();
        assert_eq!(a, b);
    }
}
