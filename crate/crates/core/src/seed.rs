//! Seed derivation.
//!
//! Every random stream in the pipeline is derived from one master seed and a
//! purpose string, e.g. `derive(master, "synthgen/segment/BU1/GEO1")`. The
//! derivation is SHA-256 over the little-endian master seed, a `0x00`
//! separator and the UTF-8 purpose; the first eight digest bytes, read
//! little-endian, form the sub-seed. Re-running any single stage with the same
//! master seed therefore reproduces its stream without replaying the others.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

pub fn derive(master: u64, purpose: &str) -> u64 {
    let mut hasher = Sha256::new();
    hasher.update(master.to_le_bytes());
    hasher.update([0u8]);
    hasher.update(purpose.as_bytes());
    let digest = hasher.finalize();
    let mut bytes = [0u8; 8];
    bytes.copy_from_slice(&digest[..8]);
    u64::from_le_bytes(bytes)
}

pub fn rng(master: u64, purpose: &str) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive(master, purpose))
}
