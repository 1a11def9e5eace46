//! Checksums used by the checkpoint and container formats.

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

/// 64-bit FNV-1a over a byte slice.
pub fn fnv1a64(bytes: &[u8]) -> u64 {
    bytes.iter().fold(FNV_OFFSET, |h, &b| (h ^ u64::from(b)).wrapping_mul(FNV_PRIME))
}

/// Checksum of a parameter vector: FNV-1a over the little-endian bytes of
/// each value, in order.
pub fn params_checksum(params: &[f64]) -> u64 {
    params.iter().fold(FNV_OFFSET, |h, v| {
        v.to_le_bytes()
            .iter()
            .fold(h, |h, &b| (h ^ u64::from(b)).wrapping_mul(FNV_PRIME))
    })
}

pub fn crc32(bytes: &[u8]) -> u32 {
    crc32fast::hash(bytes)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fnv_reference_values() {
        assert_eq!(fnv1a64(b""), 0xcbf2_9ce4_8422_2325);
        assert_eq!(fnv1a64(b"a"), 0xaf63_dc4c_8601_ec8c);
    }

    #[test]
    fn params_checksum_matches_byte_form() {
        let p = [1.5, -0.25, 3.0];
        let bytes: Vec<u8> = p.iter().flat_map(|v: &f64| v.to_le_bytes()).collect();
        assert_eq!(params_checksum(&p), fnv1a64(&bytes));
        assert_ne!(params_checksum(&[0.0]), params_checksum(&[-0.0]));
    }
}
