//! Fixed-width bit packing.

use super::bits::{BitReader, BitWriter};
use crate::error::Result;

/// Bits needed for the largest value, never less than one.
pub fn minimal_width(values: &[u64]) -> u32 {
    let max = values.iter().copied().max().unwrap_or(0);
    (64 - max.leading_zeros()).max(1)
}

/// Packs each value in `width` bits, most significant bit first.
pub fn encode(values: &[u64], width: u32) -> Vec<u8> {
    let mut w = BitWriter::with_capacity((values.len() as u64 * u64::from(width)).div_ceil(8) as usize);
    for &v in values {
        w.write(v, width);
    }
    w.finish()
}

pub fn decode(bytes: &[u8], count: usize, width: u32) -> Result<Vec<u64>> {
    let mut r = BitReader::new(bytes);
    (0..count).map(|_| r.read(width)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn width_floor_is_one() {
        assert_eq!(minimal_width(&[0, 0, 0]), 1);
        assert_eq!(minimal_width(&[]), 1);
        assert_eq!(minimal_width(&[1]), 1);
        assert_eq!(minimal_width(&[2]), 2);
        assert_eq!(minimal_width(&[255, 3]), 8);
        assert_eq!(minimal_width(&[u64::MAX]), 64);
    }

    #[test]
    fn packs_tightly() {
        let v = vec![5u64; 100];
        assert_eq!(encode(&v, 3).len(), 38);
    }

    proptest! {
        #[test]
        fn round_trip(values in prop::collection::vec(any::<u64>(), 0..200), shift in 0u32..64) {
            let values: Vec<u64> = values.into_iter().map(|v| v >> shift).collect();
            let w = minimal_width(&values);
            let bytes = encode(&values, w);
            prop_assert_eq!(decode(&bytes, values.len(), w).unwrap(), values);
        }
    }
}
