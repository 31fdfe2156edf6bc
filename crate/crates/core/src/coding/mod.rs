//! Lossless integer stream coding.
//!
//! An integer sequence goes through three stages: an optional delta
//! transform (with zig-zag mapping of signed values), either canonical
//! Huffman or fixed-width packing, whichever has the smaller expected length,
//! and finally the general-purpose [`Backend`] coder. Every choice is
//! recorded in the stream header.
//!
//! Stream layout (little-endian):
//!
//! | field          | encoding                                                |
//! |----------------|---------------------------------------------------------|
//! | tag            | `u8`: bits 0-1 scheme (0 fixed, 1 Huffman), bit 4 delta, bit 5 zig-zag |
//! | symbol count   | varint                                                  |
//! | scheme header  | fixed: width `u8`; Huffman: table (see [`huffman`])     |
//! | backend        | `u8` codec id applied to the payload (0 = none)         |
//! | payload length | varint                                                  |
//! | payload        | bytes                                                   |

mod backend;
mod bits;
mod delta;
pub mod fixed;
pub mod huffman;

pub use backend::{backend_compress, backend_decompress, Backend};
pub use delta::{delta_decode, delta_encode, unzigzag, zigzag};
pub use huffman::HuffmanTable;

use crate::error::{Error, Result};
use crate::wire::{self, Reader};
use bits::BitReader;
use huffman::Histogram;

/// Entropy coding scheme of a stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Scheme {
    FixedLength,
    Huffman,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SchemeHeader {
    FixedLength { width: u8 },
    Huffman(HuffmanTable),
}

impl SchemeHeader {
    pub fn scheme(&self) -> Scheme {
        match self {
            SchemeHeader::FixedLength { .. } => Scheme::FixedLength,
            SchemeHeader::Huffman(_) => Scheme::Huffman,
        }
    }

    fn serialized_len(&self) -> usize {
        match self {
            SchemeHeader::FixedLength { .. } => 1,
            SchemeHeader::Huffman(t) => t.serialized_len(),
        }
    }
}

const TAG_HUFFMAN: u8 = 1;
const TAG_DELTA: u8 = 1 << 4;
const TAG_ZIGZAG: u8 = 1 << 5;
const TAG_KNOWN: u8 = 0b11 | TAG_DELTA | TAG_ZIGZAG;

/// A coded integer sequence, ready to serialize.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CodedStream {
    delta: bool,
    zigzag: bool,
    symbol_count: usize,
    header: SchemeHeader,
    backend: Backend,
    payload: Vec<u8>,
}

impl CodedStream {
    pub fn scheme(&self) -> Scheme {
        self.header.scheme()
    }

    pub fn scheme_header(&self) -> &SchemeHeader {
        &self.header
    }

    pub fn symbol_count(&self) -> usize {
        self.symbol_count
    }

    pub fn delta_coded(&self) -> bool {
        self.delta
    }

    /// Backend actually applied to the payload (`None` when it did not help).
    pub fn backend(&self) -> Backend {
        self.backend
    }

    pub fn payload(&self) -> &[u8] {
        &self.payload
    }

    /// Scheme header plus entropy-coded payload in bits, before the backend
    /// stage.
    pub fn pre_backend_bits(&self) -> Result<u64> {
        let raw = self.backend.decompress(&self.payload)?;
        Ok((self.header.serialized_len() + raw.len()) as u64 * 8)
    }

    pub fn encoded_len(&self) -> usize {
        1 + wire::varint_len(self.symbol_count as u64)
            + self.header.serialized_len()
            + 1
            + wire::varint_len(self.payload.len() as u64)
            + self.payload.len()
    }

    pub fn write(&self, out: &mut Vec<u8>) {
        let mut tag = match self.header {
            SchemeHeader::FixedLength { .. } => 0,
            SchemeHeader::Huffman(_) => TAG_HUFFMAN,
        };
        if self.delta {
            tag |= TAG_DELTA;
        }
        if self.zigzag {
            tag |= TAG_ZIGZAG;
        }
        out.push(tag);
        wire::put_varint(out, self.symbol_count as u64);
        match &self.header {
            SchemeHeader::FixedLength { width } => out.push(*width),
            SchemeHeader::Huffman(t) => t.write(out),
        }
        out.push(self.backend.id());
        wire::put_varint(out, self.payload.len() as u64);
        out.extend_from_slice(&self.payload);
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.encoded_len());
        self.write(&mut out);
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader::new(bytes);
        let s = CodedStream::read(&mut r)?;
        if r.remaining() != 0 {
            return Err(Error::corrupt("trailing bytes after stream"));
        }
        Ok(s)
    }

    pub(crate) fn read(r: &mut Reader<'_>) -> Result<Self> {
        let tag = r.u8()?;
        if tag & !TAG_KNOWN != 0 || tag & 0b11 > TAG_HUFFMAN {
            return Err(Error::corrupt(format!("unknown stream tag {tag:#04x}")));
        }
        let symbol_count = r.varint_usize(1 << 40, "symbol count")?;
        let header = if tag & 0b11 == TAG_HUFFMAN {
            let max_entries = symbol_count.min(r.remaining() / 2);
            SchemeHeader::Huffman(HuffmanTable::read(r, max_entries)?)
        } else {
            let width = r.u8()?;
            if !(1..=64).contains(&width) {
                return Err(Error::corrupt(format!("fixed width {width}")));
            }
            SchemeHeader::FixedLength { width }
        };
        if let SchemeHeader::Huffman(t) = &header {
            if symbol_count > 0 && t.entries().is_empty() {
                return Err(Error::corrupt("empty huffman table for a non-empty stream"));
            }
        }
        let backend = Backend::from_id(r.u8()?)?;
        let len = r.varint_usize(r.remaining(), "payload length")?;
        let payload = r.bytes(len)?.to_vec();
        Ok(CodedStream {
            delta: tag & TAG_DELTA != 0,
            zigzag: tag & TAG_ZIGZAG != 0,
            symbol_count,
            header,
            backend,
            payload,
        })
    }
}

/// Which transforms [`encode_stream`] may use.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StreamOptions {
    /// Consider delta coding. Disabled for data that is already a difference.
    pub allow_delta: bool,
    pub backend: Backend,
}

impl StreamOptions {
    pub fn new(backend: Backend) -> Self {
        StreamOptions {
            allow_delta: true,
            backend,
        }
    }

    pub fn without_delta(backend: Backend) -> Self {
        StreamOptions {
            allow_delta: false,
            backend,
        }
    }
}

/// Expected size in bits of coding `symbols` with `scheme`: scheme header
/// plus payload. Computed from the histogram alone.
pub fn expected_length(symbols: &[u64], scheme: Scheme) -> Result<u64> {
    if symbols.is_empty() {
        return Err(Error::EmptyInput);
    }
    Ok(match scheme {
        Scheme::FixedLength => fixed_bits(symbols),
        Scheme::Huffman => {
            let hist = huffman::histogram(symbols);
            let table = HuffmanTable::from_histogram(&hist);
            huffman_bits(&hist, &table)
        }
    })
}

fn fixed_bits(symbols: &[u64]) -> u64 {
    8 + symbols.len() as u64 * u64::from(fixed::minimal_width(symbols))
}

fn huffman_bits(hist: &Histogram, table: &HuffmanTable) -> u64 {
    table.serialized_len() as u64 * 8 + huffman::payload_bits(hist, table)
}

struct Plan {
    delta: bool,
    zigzag: bool,
    symbols: Vec<u64>,
    bits: u64,
    huffman: Option<(Histogram, HuffmanTable)>,
}

fn plans_for(symbols: Vec<u64>, delta: bool, zigzag: bool) -> [Plan; 2] {
    let hist = huffman::histogram(&symbols);
    let table = HuffmanTable::from_histogram(&hist);
    let hbits = huffman_bits(&hist, &table);
    let fbits = fixed_bits(&symbols);
    [
        Plan {
            delta,
            zigzag,
            symbols: Vec::new(),
            bits: fbits,
            huffman: None,
        },
        Plan {
            delta,
            zigzag,
            symbols,
            bits: hbits,
            huffman: Some((hist, table)),
        },
    ]
}

/// Codes `values`, choosing transform and scheme by expected length.
///
/// Ties prefer delta coding, then fixed-length packing.
pub fn encode_stream(values: &[i64], opts: StreamOptions) -> CodedStream {
    if values.is_empty() {
        return CodedStream {
            delta: false,
            zigzag: false,
            symbol_count: 0,
            header: SchemeHeader::FixedLength { width: 1 },
            backend: Backend::None,
            payload: Vec::new(),
        };
    }

    let mut candidates: Vec<Plan> = Vec::with_capacity(4);
    if opts.allow_delta {
        let syms = delta_encode(values).into_iter().map(zigzag).collect();
        candidates.extend(plans_for(syms, true, true));
    }
    let signed = values.iter().any(|&v| v < 0);
    let syms = if signed {
        values.iter().map(|&v| zigzag(v)).collect()
    } else {
        values.iter().map(|&v| v as u64).collect()
    };
    candidates.extend(plans_for(syms, false, signed));

    // Fixed-length plans borrow the symbols of their Huffman sibling.
    let best = (0..candidates.len())
        .min_by_key(|&i| (candidates[i].bits, i))
        .unwrap();
    let sibling = best | 1;
    let symbols = std::mem::take(&mut candidates[sibling].symbols);
    let plan = &candidates[best];

    let (header, raw) = match &plan.huffman {
        None => {
            let width = fixed::minimal_width(&symbols);
            (
                SchemeHeader::FixedLength { width: width as u8 },
                fixed::encode(&symbols, width),
            )
        }
        Some((hist, table)) => {
            let bits = huffman::payload_bits(hist, table);
            (SchemeHeader::Huffman(table.clone()), table.encode(&symbols, bits))
        }
    };

    let (backend, payload) = match opts.backend {
        Backend::None => (Backend::None, raw),
        b => {
            let packed = b.compress(&raw);
            if packed.len() < raw.len() {
                (b, packed)
            } else {
                (Backend::None, raw)
            }
        }
    };

    CodedStream {
        delta: plan.delta,
        zigzag: plan.zigzag,
        symbol_count: values.len(),
        header,
        backend,
        payload,
    }
}

/// Inverse of [`encode_stream`]. When `expected_count` is given, the stream
/// must declare exactly that many symbols.
pub fn decode_stream(stream: &CodedStream, expected_count: Option<usize>) -> Result<Vec<i64>> {
    let count = stream.symbol_count;
    if let Some(expected) = expected_count {
        if expected != count {
            return Err(Error::CountMismatch {
                expected,
                found: count,
            });
        }
    }
    let max_bits_per_symbol = match &stream.header {
        SchemeHeader::FixedLength { width } => u64::from(*width),
        SchemeHeader::Huffman(_) => u64::from(huffman::MAX_CODE_LEN),
    };
    // At most one extra byte of slack so surplus data is reported as a
    // count mismatch rather than silently ignored.
    let limit = (count as u64 * max_bits_per_symbol).div_ceil(8) + 8;
    let raw = stream
        .backend
        .decompress_limited(&stream.payload, usize::try_from(limit).unwrap_or(usize::MAX))?;
    if (raw.len() as u64) * 8 < count as u64 {
        return Err(Error::corrupt("payload too short for declared symbol count"));
    }

    let symbols = match &stream.header {
        SchemeHeader::FixedLength { width } => {
            let width = u32::from(*width);
            let need = (count as u64 * u64::from(width)).div_ceil(8) as usize;
            if raw.len() < need {
                return Err(Error::corrupt("fixed-length payload truncated"));
            }
            if raw.len() > need {
                return Err(Error::CountMismatch {
                    expected: count,
                    found: (raw.len() as u64 * 8 / u64::from(width)) as usize,
                });
            }
            fixed::decode(&raw, count, width)?
        }
        SchemeHeader::Huffman(table) => {
            let dec = table.decoder();
            let mut r = BitReader::new(&raw);
            let mut out = Vec::with_capacity(count);
            for _ in 0..count {
                out.push(dec.decode(&mut r)?);
            }
            if r.total_bits() - r.position() >= 8 {
                let mut extra = 0;
                while r.total_bits() - r.position() >= 8 && dec.decode(&mut r).is_ok() {
                    extra += 1;
                }
                return Err(Error::CountMismatch {
                    expected: count,
                    found: count + extra,
                });
            }
            out
        }
    };

    let mut values: Vec<i64> = if stream.zigzag {
        symbols.into_iter().map(unzigzag).collect()
    } else {
        symbols
            .into_iter()
            .map(|s| i64::try_from(s).map_err(|_| Error::corrupt("unsigned symbol exceeds i64")))
            .collect::<Result<_>>()?
    };
    if stream.delta {
        values = delta_decode(&values);
    }
    Ok(values)
}
