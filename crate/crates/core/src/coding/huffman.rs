//! Length-limited canonical Huffman coding over `u64` symbols.
//!
//! The table is serialized as the number of distinct symbols followed by
//! `(symbol delta, code length)` pairs in ascending symbol order. Codes are
//! canonical: ordered by (length, symbol), so the lengths alone determine
//! them.

use std::cmp::Reverse;
use std::collections::{BinaryHeap, HashMap};

use super::bits::{BitReader, BitWriter};
use crate::error::{Error, Result};
use crate::wire::{self, Reader};

pub const MAX_CODE_LEN: u8 = 32;
const LUT_BITS: u32 = 11;

/// Distinct symbols in ascending order with their occurrence counts.
#[derive(Debug, Clone, PartialEq, Eq)]
pub(crate) struct Histogram {
    pub symbols: Vec<u64>,
    pub counts: Vec<u64>,
}

pub(crate) fn histogram(values: &[u64]) -> Histogram {
    let max = values.iter().copied().max().unwrap_or(0);
    if max < 4096 || max < 2 * values.len() as u64 {
        let mut dense = vec![0u64; max as usize + 1];
        for &v in values {
            dense[v as usize] += 1;
        }
        let (symbols, counts) = dense
            .into_iter()
            .enumerate()
            .filter(|&(_, c)| c > 0)
            .map(|(s, c)| (s as u64, c))
            .unzip();
        return Histogram { symbols, counts };
    }
    let mut sorted = values.to_vec();
    sorted.sort_unstable();
    let mut symbols = Vec::new();
    let mut counts: Vec<u64> = Vec::new();
    for v in sorted {
        if symbols.last() == Some(&v) {
            *counts.last_mut().unwrap() += 1;
        } else {
            symbols.push(v);
            counts.push(1);
        }
    }
    Histogram { symbols, counts }
}

/// Huffman code lengths for the given weights, capped at [`MAX_CODE_LEN`].
/// A single symbol gets length 1. Ties resolve by position, so the result is
/// deterministic.
pub(crate) fn code_lengths(counts: &[u64]) -> Vec<u8> {
    match counts.len() {
        0 => return Vec::new(),
        1 => return vec![1],
        _ => {}
    }
    let mut weights = counts.to_vec();
    loop {
        let lens = tree_depths(&weights);
        if lens.iter().all(|&l| l <= u32::from(MAX_CODE_LEN)) {
            return lens.into_iter().map(|l| l as u8).collect();
        }
        // Flatten the distribution and rebuild; terminates once all weights
        // reach 1, where depth is ceil(log2 k).
        for w in &mut weights {
            *w = (*w >> 1).max(1);
        }
    }
}

fn tree_depths(weights: &[u64]) -> Vec<u32> {
    let k = weights.len();
    let mut parent = vec![0usize; 2 * k - 1];
    let mut heap: BinaryHeap<Reverse<(u64, usize)>> = weights
        .iter()
        .enumerate()
        .map(|(i, &w)| Reverse((w, i)))
        .collect();
    let mut next = k;
    while heap.len() > 1 {
        let Reverse((wa, a)) = heap.pop().unwrap();
        let Reverse((wb, b)) = heap.pop().unwrap();
        parent[a] = next;
        parent[b] = next;
        heap.push(Reverse((wa.saturating_add(wb), next)));
        next += 1;
    }
    let root = next - 1;
    let mut depth = vec![0u32; 2 * k - 1];
    // Children are always created before their parent.
    for node in (0..root).rev() {
        depth[node] = depth[parent[node]] + 1;
    }
    depth.truncate(k);
    depth
}

/// Code-length table for a set of symbols.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HuffmanTable {
    /// `(symbol, code length)`, ascending by symbol.
    entries: Vec<(u64, u8)>,
}

impl HuffmanTable {
    pub(crate) fn from_histogram(hist: &Histogram) -> Self {
        let lens = code_lengths(&hist.counts);
        HuffmanTable {
            entries: hist.symbols.iter().copied().zip(lens).collect(),
        }
    }

    pub fn entries(&self) -> &[(u64, u8)] {
        &self.entries
    }

    pub(crate) fn serialized_len(&self) -> usize {
        let mut prev = 0u64;
        let mut n = wire::varint_len(self.entries.len() as u64);
        for &(s, _) in &self.entries {
            n += wire::varint_len(s - prev) + 1;
            prev = s;
        }
        n
    }

    pub(crate) fn write(&self, out: &mut Vec<u8>) {
        wire::put_varint(out, self.entries.len() as u64);
        let mut prev = 0u64;
        for &(s, l) in &self.entries {
            wire::put_varint(out, s - prev);
            out.push(l);
            prev = s;
        }
    }

    /// Reads a table with at most `max_entries` symbols and validates that
    /// it describes a prefix code.
    pub(crate) fn read(r: &mut Reader<'_>, max_entries: usize) -> Result<Self> {
        let k = r.varint_usize(max_entries, "huffman table size")?;
        let mut entries = Vec::with_capacity(k);
        let mut prev = 0u64;
        for i in 0..k {
            let delta = r.varint()?;
            if i > 0 && delta == 0 {
                return Err(Error::corrupt("huffman symbols not strictly increasing"));
            }
            let s = prev
                .checked_add(delta)
                .ok_or_else(|| Error::corrupt("huffman symbol overflow"))?;
            let l = r.u8()?;
            if l == 0 || l > MAX_CODE_LEN {
                return Err(Error::corrupt(format!("huffman code length {l}")));
            }
            entries.push((s, l));
            prev = s;
        }
        let kraft: u64 = entries
            .iter()
            .map(|&(_, l)| 1u64 << (MAX_CODE_LEN - l))
            .sum();
        if kraft > 1u64 << MAX_CODE_LEN {
            return Err(Error::corrupt("huffman lengths oversubscribe the code space"));
        }
        Ok(HuffmanTable { entries })
    }

    /// Canonical `(code, length)` per entry, aligned with `entries`.
    fn codes(&self) -> Vec<(u64, u8)> {
        let mut count = [0u64; MAX_CODE_LEN as usize + 1];
        for &(_, l) in &self.entries {
            count[l as usize] += 1;
        }
        let mut next = first_codes(&count);
        self.entries
            .iter()
            .map(|&(_, l)| {
                let c = next[l as usize];
                next[l as usize] += 1;
                (c, l)
            })
            .collect()
    }

    pub(crate) fn encode(&self, values: &[u64], payload_bits: u64) -> Vec<u8> {
        let codes = self.codes();
        let mut w = BitWriter::with_capacity(payload_bits.div_ceil(8) as usize);
        let dense = self.entries.last().map_or(true, |&(s, _)| s < 1 << 16);
        if dense {
            let max = self.entries.last().map_or(0, |e| e.0) as usize;
            let mut lut = vec![(0u64, 0u8); max + 1];
            for (&(s, _), &c) in self.entries.iter().zip(&codes) {
                lut[s as usize] = c;
            }
            for &v in values {
                let (c, l) = lut[v as usize];
                w.write(c, u32::from(l));
            }
        } else {
            let map: HashMap<u64, (u64, u8)> = self
                .entries
                .iter()
                .map(|e| e.0)
                .zip(codes.iter().copied())
                .collect();
            for v in values {
                let (c, l) = map[v];
                w.write(c, u32::from(l));
            }
        }
        w.finish()
    }

    pub(crate) fn decoder(&self) -> Decoder {
        Decoder::new(self)
    }
}

fn first_codes(count: &[u64; MAX_CODE_LEN as usize + 1]) -> [u64; MAX_CODE_LEN as usize + 1] {
    let mut first = [0u64; MAX_CODE_LEN as usize + 1];
    let mut code = 0u64;
    for len in 1..=MAX_CODE_LEN as usize {
        code = (code + count[len - 1]) << 1;
        first[len] = code;
    }
    first
}

/// Builds a table for `values` and codes them. Streams normally go through
/// [`encode_stream`](super::encode_stream), which also picks the scheme.
pub fn encode(values: &[u64]) -> (HuffmanTable, Vec<u8>) {
    let hist = histogram(values);
    let table = HuffmanTable::from_histogram(&hist);
    let bits = payload_bits(&hist, &table);
    let bytes = table.encode(values, bits);
    (table, bytes)
}

/// Decodes exactly `count` symbols.
pub fn decode(table: &HuffmanTable, bytes: &[u8], count: usize) -> Result<Vec<u64>> {
    if count > 0 && table.entries.is_empty() {
        return Err(Error::corrupt("symbols coded with an empty huffman table"));
    }
    let decoder = table.decoder();
    let mut r = BitReader::new(bytes);
    (0..count).map(|_| decoder.decode(&mut r)).collect()
}

/// Sum of `count * length` over the histogram.
pub(crate) fn payload_bits(hist: &Histogram, table: &HuffmanTable) -> u64 {
    hist.counts
        .iter()
        .zip(&table.entries)
        .map(|(&c, &(_, l))| c * u64::from(l))
        .sum()
}

pub(crate) struct Decoder {
    /// Packed `(canonical index << 6) | length`; 0 marks a miss.
    lut: Vec<u64>,
    sorted: Vec<u64>,
    first_code: [u64; MAX_CODE_LEN as usize + 1],
    first_index: [u64; MAX_CODE_LEN as usize + 1],
    count: [u64; MAX_CODE_LEN as usize + 1],
    max_len: u32,
}

impl Decoder {
    fn new(table: &HuffmanTable) -> Self {
        let mut count = [0u64; MAX_CODE_LEN as usize + 1];
        for &(_, l) in &table.entries {
            count[l as usize] += 1;
        }
        let first_code = first_codes(&count);
        let mut first_index = [0u64; MAX_CODE_LEN as usize + 1];
        let mut acc = 0;
        for len in 1..=MAX_CODE_LEN as usize {
            first_index[len] = acc;
            acc += count[len];
        }
        let mut order: Vec<usize> = (0..table.entries.len()).collect();
        order.sort_by_key(|&i| (table.entries[i].1, table.entries[i].0));
        let sorted: Vec<u64> = order.iter().map(|&i| table.entries[i].0).collect();

        let mut lut = vec![0u64; 1 << LUT_BITS];
        let mut max_len = 0;
        for (idx, &i) in order.iter().enumerate() {
            let len = u32::from(table.entries[i].1);
            max_len = max_len.max(len);
            if len <= LUT_BITS {
                let code = first_code[len as usize] + (idx as u64 - first_index[len as usize]);
                let start = (code << (LUT_BITS - len)) as usize;
                let span = 1usize << (LUT_BITS - len);
                let packed = ((idx as u64) << 6) | u64::from(len);
                lut[start..start + span].fill(packed);
            }
        }
        Decoder {
            lut,
            sorted,
            first_code,
            first_index,
            count,
            max_len,
        }
    }

    #[inline]
    pub(crate) fn decode(&self, r: &mut BitReader<'_>) -> Result<u64> {
        let e = self.lut[r.peek(LUT_BITS) as usize];
        if e != 0 {
            r.consume((e & 0x3f) as u32)?;
            return Ok(self.sorted[(e >> 6) as usize]);
        }
        for len in LUT_BITS + 1..=self.max_len {
            let code = r.peek(len);
            let l = len as usize;
            if code >= self.first_code[l] && code - self.first_code[l] < self.count[l] {
                r.consume(len)?;
                return Ok(self.sorted[(self.first_index[l] + code - self.first_code[l]) as usize]);
            }
        }
        Err(Error::corrupt("invalid huffman code"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn encode_decode(values: &[u64]) -> Vec<u64> {
        let hist = histogram(values);
        let table = HuffmanTable::from_histogram(&hist);
        let bits = payload_bits(&hist, &table);
        let bytes = table.encode(values, bits);
        assert_eq!(bytes.len() as u64, bits.div_ceil(8));
        let dec = table.decoder();
        let mut r = BitReader::new(&bytes);
        values.iter().map(|_| dec.decode(&mut r).unwrap()).collect()
    }

    #[test]
    fn single_symbol_gets_one_bit() {
        assert_eq!(code_lengths(&[100]), vec![1]);
        let v = vec![7u64; 100];
        assert_eq!(encode_decode(&v), v);
    }

    #[test]
    fn skewed_lengths() {
        // 900/50/50: the frequent symbol gets 1 bit, the others 2.
        assert_eq!(code_lengths(&[900, 50, 50]), vec![1, 2, 2]);
    }

    #[test]
    fn canonical_codes_follow_length_then_symbol() {
        let table = HuffmanTable {
            entries: vec![(0, 2), (1, 1), (2, 3), (3, 3)],
        };
        assert_eq!(
            table.codes(),
            vec![(0b10, 2), (0b0, 1), (0b110, 3), (0b111, 3)]
        );
    }

    #[test]
    fn lengths_are_capped() {
        // Fibonacci weights produce a maximally skewed tree.
        let mut w = vec![1u64, 1];
        while w.len() < 60 {
            let n = w[w.len() - 1] + w[w.len() - 2];
            w.push(n);
        }
        let lens = code_lengths(&w);
        assert!(lens.iter().all(|&l| l <= MAX_CODE_LEN));
        let kraft: f64 = lens.iter().map(|&l| 0.5f64.powi(l as i32)).sum();
        assert!(kraft <= 1.0 + 1e-12);
        let values: Vec<u64> = (0..60).collect();
        assert_eq!(encode_decode(&values), values);
    }

    #[test]
    fn long_codes_use_slow_path() {
        let mut w = vec![1u64, 1];
        while w.len() < 25 {
            let n = w[w.len() - 1] + w[w.len() - 2];
            w.push(n);
        }
        assert!(code_lengths(&w).iter().any(|&l| u32::from(l) > LUT_BITS));
        let values: Vec<u64> = (0..25).rev().collect();
        assert_eq!(encode_decode(&values), values);
    }

    #[test]
    fn sparse_large_symbols() {
        let values = vec![u64::MAX, 1 << 40, 5, u64::MAX, 1 << 40, u64::MAX];
        assert_eq!(encode_decode(&values), values);
    }

    #[test]
    fn table_round_trip_and_size() {
        let hist = histogram(&[3, 3, 9, 1000, 3]);
        let table = HuffmanTable::from_histogram(&hist);
        let mut buf = Vec::new();
        table.write(&mut buf);
        assert_eq!(buf.len(), table.serialized_len());
        let back = HuffmanTable::read(&mut Reader::new(&buf), 10).unwrap();
        assert_eq!(back, table);
    }

    #[test]
    fn oversubscribed_table_is_rejected() {
        let mut buf = Vec::new();
        wire::put_varint(&mut buf, 3);
        for s in 0..3 {
            wire::put_varint(&mut buf, u64::from(s != 0));
            buf.push(1);
        }
        assert!(HuffmanTable::read(&mut Reader::new(&buf), 10).is_err());
    }

    proptest! {
        #[test]
        fn round_trip(values in prop::collection::vec(0u64..50, 1..500)) {
            prop_assert_eq!(encode_decode(&values), values);
        }

        #[test]
        fn round_trip_wide(values in prop::collection::vec(any::<u64>(), 1..100)) {
            prop_assert_eq!(encode_decode(&values), values);
        }
    }
}
