//! Content hashing shared by the vector cache and scripted clients.

use sha2::{Digest, Sha256};

/// Lowercase hex SHA-256 of a UTF-8 string. This is the key format for
/// precomputed vector files and hashed prompt scripts.
pub fn sha256_hex(text: &str) -> String {
    let mut hasher = Sha256::new();
    hasher.update(text.as_bytes());
    hex::encode(hasher.finalize())
}
