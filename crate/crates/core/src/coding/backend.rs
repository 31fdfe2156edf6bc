//! General-purpose lossless back end applied after entropy coding.

use std::io::Read;

use crate::error::{Error, Result};

const ZSTD_LEVEL: i32 = 3;

/// Dictionary coder identifier. The numeric id is what archives record.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum Backend {
    /// Bytes stored as-is.
    None,
    #[default]
    Zstd,
}

impl Backend {
    pub fn id(self) -> u8 {
        match self {
            Backend::None => 0,
            Backend::Zstd => 1,
        }
    }

    pub fn from_id(id: u8) -> Result<Self> {
        match id {
            0 => Ok(Backend::None),
            1 => Ok(Backend::Zstd),
            other => Err(Error::corrupt(format!("unknown backend codec id {other}"))),
        }
    }

    pub fn compress(self, bytes: &[u8]) -> Vec<u8> {
        match self {
            Backend::None => bytes.to_vec(),
            Backend::Zstd => {
                zstd::bulk::compress(bytes, ZSTD_LEVEL).expect("zstd compression of an in-memory buffer")
            }
        }
    }

    pub fn decompress(self, bytes: &[u8]) -> Result<Vec<u8>> {
        self.decompress_limited(bytes, usize::MAX)
    }

    /// Fails with a corrupt-stream error when the output would exceed `limit`.
    pub fn decompress_limited(self, bytes: &[u8], limit: usize) -> Result<Vec<u8>> {
        match self {
            Backend::None => {
                if bytes.len() > limit {
                    return Err(Error::corrupt("stored block larger than declared"));
                }
                Ok(bytes.to_vec())
            }
            Backend::Zstd => {
                let dec = zstd::stream::read::Decoder::with_buffer(bytes)
                    .map_err(|e| Error::corrupt(format!("zstd: {e}")))?;
                let mut out = Vec::new();
                dec.take(limit.saturating_add(1) as u64)
                    .read_to_end(&mut out)
                    .map_err(|e| Error::corrupt(format!("zstd: {e}")))?;
                if out.len() > limit {
                    return Err(Error::corrupt("zstd output larger than declared"));
                }
                Ok(out)
            }
        }
    }
}

pub fn backend_compress(backend: Backend, bytes: &[u8]) -> Vec<u8> {
    backend.compress(bytes)
}

pub fn backend_decompress(backend: Backend, bytes: &[u8]) -> Result<Vec<u8>> {
    backend.decompress(bytes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn zeros_compress_well() {
        let zeros = vec![0u8; 1 << 20];
        let c = Backend::Zstd.compress(&zeros);
        assert!(c.len() < 1024, "{} bytes", c.len());
        assert_eq!(Backend::Zstd.decompress(&c).unwrap(), zeros);
    }

    #[test]
    fn empty_round_trips() {
        for b in [Backend::None, Backend::Zstd] {
            let c = b.compress(&[]);
            assert!(c.len() <= 16);
            assert!(b.decompress(&c).unwrap().is_empty());
        }
    }

    #[test]
    fn garbage_is_corrupt() {
        assert!(matches!(
            Backend::Zstd.decompress(&[1, 2, 3, 4, 5]),
            Err(Error::CorruptStream(_))
        ));
    }

    #[test]
    fn limit_is_enforced() {
        let c = Backend::Zstd.compress(&[7u8; 1000]);
        assert!(Backend::Zstd.decompress_limited(&c, 999).is_err());
        assert_eq!(Backend::Zstd.decompress_limited(&c, 1000).unwrap().len(), 1000);
    }

    #[test]
    fn ids_round_trip() {
        for b in [Backend::None, Backend::Zstd] {
            assert_eq!(Backend::from_id(b.id()).unwrap(), b);
        }
        assert!(Backend::from_id(9).is_err());
    }

    proptest! {
        #[test]
        fn round_trip(bytes in prop::collection::vec(any::<u8>(), 0..2000)) {
            for b in [Backend::None, Backend::Zstd] {
                prop_assert_eq!(b.decompress(&b.compress(&bytes)).unwrap(), bytes.clone());
            }
        }
    }
}
