//! Deterministic, non-cryptographic mixing used for the toy key schedule and
//! for counter-based noise decisions.

/// The splitmix64 finaliser.
pub fn mix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Keyed two-argument mix; not symmetric.
pub fn mix(a: u64, b: u64) -> u64 {
    mix64(a ^ mix64(b))
}

/// FNV-1a over UTF-8 bytes.
pub fn hash_str(s: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in s.bytes() {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// Message integrity tag over a packet's layer list.
pub fn mic<S: AsRef<str>>(session_key: u64, layers: &[S]) -> u64 {
    let mut h = 0u64;
    for l in layers {
        h = mix(h, hash_str(l.as_ref()));
    }
    mix(session_key, h)
}

/// Uniform draw in [0, 1) from a 64-bit value.
pub fn unit_interval(x: u64) -> f64 {
    (x >> 11) as f64 / (1u64 << 53) as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn frozen_values() {
        // Reference values of the published splitmix64 sequence seeded with 0.
        assert_eq!(mix64(0), 0xE220_A839_7B1D_CDAF);
        assert_eq!(mix64(0x9E37_79B9_7F4A_7C15), 0x6E78_9E6A_A1B9_65F4);
    }

    #[test]
    fn mix_is_order_sensitive() {
        assert_ne!(mix(1, 2), mix(2, 1));
    }

    #[test]
    fn unit_interval_is_bounded() {
        assert!(unit_interval(u64::MAX) < 1.0);
        assert_eq!(unit_interval(0), 0.0);
    }
}
