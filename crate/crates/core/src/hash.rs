//! Stable, seedable 64-bit hashing. Used wherever a value must not change
//! between Rust releases (feature hashing, failure injection, gene masks).

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

pub(crate) fn fnv1a(seed: u64, bytes: &[u8]) -> u64 {
    let mut h = FNV_OFFSET ^ splitmix(seed);
    for &b in bytes {
        h ^= u64::from(b);
        h = h.wrapping_mul(FNV_PRIME);
    }
    splitmix(h)
}

/// Finalizer from splitmix64; spreads FNV output over all bits.
pub(crate) fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Uniform value in `[0, 1)` derived from a hash.
pub(crate) fn unit_interval(h: u64) -> f64 {
    (h >> 11) as f64 / (1u64 << 53) as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stable_and_seed_sensitive() {
        assert_eq!(fnv1a(1, b"abc"), fnv1a(1, b"abc"));
        assert_ne!(fnv1a(1, b"abc"), fnv1a(2, b"abc"));
        let u = unit_interval(fnv1a(9, b"x"));
        assert!((0.0..1.0).contains(&u));
    }
}
