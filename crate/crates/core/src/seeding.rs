//! Deterministic derivation of per-task random streams from a master seed.

/// Derives an independent 64-bit seed from a master seed and two stream
/// labels (for example iteration and sample index). SplitMix64 finalization
/// keeps the outputs well spread even for adjacent labels, and the result
/// is identical across platforms.
pub fn derive_stream_seed(master: u64, label_a: u64, label_b: u64) -> u64 {
    let mut z = master
        ^ label_a.wrapping_mul(0x9E37_79B9_7F4A_7C15)
        ^ label_b.wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Order-insensitive 64-bit fingerprint input helper: folds bytes with FNV-1a.
pub fn fnv1a(bytes: impl IntoIterator<Item = u8>) -> u64 {
    let mut hash = 0xCBF2_9CE4_8422_2325u64;
    for b in bytes {
        hash ^= b as u64;
        hash = hash.wrapping_mul(0x0000_0100_0000_01B3);
    }
    hash
}
