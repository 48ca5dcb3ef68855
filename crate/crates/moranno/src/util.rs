//! Small shared helpers: hashing for derived seeds and checksums.

/// FNV-1a 64-bit hash.
pub fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf29ce484222325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x100000001b3);
    }
    h
}

/// Derive a child seed from a base seed, a purpose tag, and an index.
///
/// Keeps independent random streams (corpus items, noise draws, splits)
/// reproducible and order-independent of one another.
pub fn derive_seed(base: u64, tag: &str, index: u64) -> u64 {
    let mut bytes = Vec::with_capacity(8 + tag.len() + 8);
    bytes.extend_from_slice(&base.to_le_bytes());
    bytes.extend_from_slice(tag.as_bytes());
    bytes.extend_from_slice(&index.to_le_bytes());
    fnv1a64(&bytes)
}

/// Checksum a stream of f64 values by their bit patterns.
pub fn f64_checksum(values: impl Iterator<Item = f64>) -> u64 {
    let mut h: u64 = 0xcbf29ce484222325;
    for v in values {
        for b in v.to_le_bytes() {
            h ^= b as u64;
            h = h.wrapping_mul(0x100000001b3);
        }
    }
    h
}
