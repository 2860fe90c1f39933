//! Derivation of independent RNG streams from one master seed.
//!
//! Every stochastic component (zone noise, load noise, random structures,
//! failure draws) takes its own stream keyed by the master seed and a short
//! label path, so results do not depend on evaluation order or thread count.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

/// One component of a derivation path.
#[derive(Debug, Clone, Copy)]
pub enum SeedPart<'a> {
    Label(&'a str),
    Index(u64),
    Signed(i64),
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

impl From<i64> for SeedPart<'_> {
    fn from(v: i64) -> Self {
        SeedPart::Signed(v)
    }
}

pub fn derive_seed(master: u64, path: &[SeedPart<'_>]) -> u64 {
    let mut hasher = Sha256::new();
    hasher.update(master.to_le_bytes());
    for part in path {
        // Tagged and length-prefixed so distinct paths never collide.
        match part {
            SeedPart::Label(s) => {
                hasher.update([0u8]);
                hasher.update((s.len() as u64).to_le_bytes());
                hasher.update(s.as_bytes());
            }
            SeedPart::Index(v) => {
                hasher.update([1u8]);
                hasher.update(v.to_le_bytes());
            }
            SeedPart::Signed(v) => {
                hasher.update([2u8]);
                hasher.update(v.to_le_bytes());
            }
        }
    }
    let digest = hasher.finalize();
    let mut bytes = [0u8; 8];
    bytes.copy_from_slice(&digest[..8]);
    u64::from_le_bytes(bytes)
}

pub fn derived_rng(master: u64, path: &[SeedPart<'_>]) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(master, path))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn derivation_is_stable_and_path_sensitive() {
        let a = derive_seed(7, &["zone".into(), 3usize.into()]);
        assert_eq!(a, derive_seed(7, &["zone".into(), 3usize.into()]));
        assert_ne!(a, derive_seed(7, &["zone".into(), 4usize.into()]));
        assert_ne!(a, derive_seed(8, &["zone".into(), 3usize.into()]));
        assert_ne!(
            derive_seed(1, &["ab".into(), "c".into()]),
            derive_seed(1, &["a".into(), "bc".into()])
        );
    }
}
