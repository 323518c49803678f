//! Seed derivation. Every random stream in the pipeline is a ChaCha8 stream
//! seeded from `(component name, master seed)`, so streams are independent
//! and adding a consumer never perturbs another one.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

pub type Rng = ChaCha8Rng;

pub fn derive_seed(master: u64, component: &str) -> u64 {
    let mut h = Sha256::new();
    h.update(master.to_le_bytes());
    h.update(component.as_bytes());
    let digest = h.finalize();
    u64::from_le_bytes(digest[..8].try_into().unwrap())
}

pub fn rng_for(master: u64, component: &str) -> Rng {
    Rng::seed_from_u64(derive_seed(master, component))
}
