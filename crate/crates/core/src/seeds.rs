//! Labelled, independent random streams derived from one experiment seed.

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use sha2::{Digest, Sha256};

/// Hashes length-prefixed labels into a 32-byte seed.
pub fn derive_seed(parts: &[&[u8]]) -> [u8; 32] {
    let mut hasher = Sha256::new();
    for part in parts {
        hasher.update((part.len() as u64).to_be_bytes());
        hasher.update(part);
    }
    hasher.finalize().into()
}

pub fn stream(parts: &[&[u8]]) -> ChaCha20Rng {
    ChaCha20Rng::from_seed(derive_seed(parts))
}

/// Stream for `purpose` at `(seed, round, client)`.
pub fn client_stream(seed: u64, round: u64, client: u64, purpose: &str) -> ChaCha20Rng {
    stream(&[
        &seed.to_be_bytes(),
        &round.to_be_bytes(),
        &client.to_be_bytes(),
        purpose.as_bytes(),
    ])
}
