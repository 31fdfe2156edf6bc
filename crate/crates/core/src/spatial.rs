//! Block-wise spatial codec.
//!
//! Quantized space is cut into aligned cubes of `p` cells per side. A
//! particle with cells `q` lies in block `bid = q / p` (per dimension) at
//! offset `rel = q mod p`. Block coordinates are linearized row-major with
//! the first dimension fastest:
//!
//! ```text
//! block_id = bid[0] + bn[0] * bid[1] + bn[0] * bn[1] * bid[2] + ...
//! ```
//!
//! Only non-empty blocks are stored, as three kinds of streams: the sorted
//! block ids, the particle count of each block, and the per-dimension
//! relative positions written block by block. An optional fourth stream
//! holds, for each particle in input order, the rank of its block; it lets
//! the decoder restore the original particle order.
//!
//! Grouping is a single counting pass keyed by block id, so the cost is
//! `O(N + B log B)` for `B` occupied blocks; particles are never sorted.

use std::collections::HashMap;

use rayon::prelude::*;

use crate::coding::{decode_stream, encode_stream, Backend, CodedStream, StreamOptions};
use crate::error::{Error, Result};
use crate::model::{CompressedFrame, Frame, Method, Precision, QuantGrid, QuantizedFrame};
use crate::quantizer::{self, MAX_CELL};
use crate::wire::{self, Reader};

/// Upper bound on the number of addressable blocks.
pub const MAX_BLOCKS: u64 = 1 << 62;

/// Block grid geometry: edge length `p` (in cells) and block count per
/// dimension.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BlockLayout {
    p: u32,
    bn: Vec<u64>,
}

impl BlockLayout {
    pub fn new(p: u32, bn: Vec<u64>) -> Result<Self> {
        if p == 0 {
            return Err(Error::InvalidConfig("block size must be at least 1".into()));
        }
        if bn.is_empty() {
            return Err(Error::ShapeMismatch("block layout needs a dimension".into()));
        }
        let layout = BlockLayout { p, bn };
        if layout.total_blocks().is_none() {
            return Err(Error::QuantRangeOverflow(format!(
                "block grid {:?} exceeds the block id space",
                layout.bn
            )));
        }
        Ok(layout)
    }

    /// Smallest layout covering every cell of `qframe`.
    pub fn covering(qframe: &QuantizedFrame, p: u32) -> Result<Self> {
        if p == 0 {
            return Err(Error::InvalidConfig("block size must be at least 1".into()));
        }
        let dims = qframe.dims();
        let mut max = vec![-1i64; dims];
        for cell in qframe.values().chunks_exact(dims) {
            for (m, &c) in max.iter_mut().zip(cell) {
                if c < 0 {
                    return Err(Error::InvalidConfig(
                        "spatial coding needs cells quantized against the frame's own minima".into(),
                    ));
                }
                *m = (*m).max(c);
            }
        }
        let bn = max
            .into_iter()
            .map(|m| (m + 1) as u64)
            .map(|extent| extent.div_ceil(u64::from(p)))
            .collect();
        BlockLayout::new(p, bn)
    }

    pub fn p(&self) -> u32 {
        self.p
    }

    pub fn bn(&self) -> &[u64] {
        &self.bn
    }

    /// Block edge in coordinate units.
    pub fn block_size(&self, eb: f64) -> f64 {
        2.0 * eb * f64::from(self.p)
    }

    /// Number of blocks in the grid, if it fits [`MAX_BLOCKS`].
    pub fn total_blocks(&self) -> Option<u64> {
        self.bn
            .iter()
            .try_fold(1u64, |acc, &b| acc.checked_mul(b))
            .filter(|&t| t <= MAX_BLOCKS)
    }

    /// Linearized block id and in-block offset of one particle.
    #[inline]
    pub fn locate(&self, cell: &[i64], rel: &mut [u32]) -> u64 {
        let p = i64::from(self.p);
        let mut id = 0u64;
        let mut stride = 1u64;
        for (k, &c) in cell.iter().enumerate() {
            let bid = (c / p) as u64;
            rel[k] = (c % p) as u32;
            id += bid * stride;
            stride *= self.bn[k];
        }
        id
    }

    /// Per-dimension block coordinates of a linearized id.
    pub fn block_coords(&self, mut id: u64, out: &mut [u64]) {
        for (k, &b) in self.bn.iter().enumerate() {
            out[k] = id % b;
            id /= b;
        }
    }
}

/// Per-particle block ids and relative positions, in input order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BlockAssignments {
    pub block_ids: Vec<u64>,
    /// Row-major `N x d` offsets inside the block, each in `[0, p)`.
    pub rel: Vec<u32>,
}

/// Assigns every particle to its block in one pass.
pub fn assign_blocks(qframe: &QuantizedFrame, p: u32) -> Result<(BlockLayout, BlockAssignments)> {
    let layout = BlockLayout::covering(qframe, p)?;
    let dims = qframe.dims();
    let mut rel = vec![0u32; qframe.values().len()];
    let block_ids = qframe
        .values()
        .chunks_exact(dims)
        .zip(rel.chunks_exact_mut(dims))
        .map(|(cell, r)| layout.locate(cell, r))
        .collect();
    Ok((layout, BlockAssignments { block_ids, rel }))
}

/// The streams stored for a frame.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BlockStreams {
    /// Ids of non-empty blocks, strictly increasing.
    pub block_ids: Vec<u64>,
    /// Particles per stored block, all at least 1.
    pub counts: Vec<u64>,
    /// One stream per dimension, particles grouped block by block.
    pub rel: Vec<Vec<u32>>,
    /// Block rank of each particle in input order.
    pub order: Option<Vec<u32>>,
}

/// Groups particles by block. Within a block, particles keep their input
/// order.
pub fn build_streams(assign: &BlockAssignments, dims: usize, order_preserving: bool) -> BlockStreams {
    let n = assign.block_ids.len();

    // Slot = first-encounter index of each distinct block.
    let mut slot_of = Vec::with_capacity(n);
    let mut distinct: Vec<u64> = Vec::new();
    let max_id = assign.block_ids.iter().copied().max().unwrap_or(0);
    if max_id < 4 * n as u64 + 1024 {
        let mut dense = vec![u32::MAX; max_id as usize + 1];
        for &id in &assign.block_ids {
            let s = &mut dense[id as usize];
            if *s == u32::MAX {
                *s = distinct.len() as u32;
                distinct.push(id);
            }
            slot_of.push(*s);
        }
    } else {
        let mut map: HashMap<u64, u32> = HashMap::new();
        for &id in &assign.block_ids {
            let s = *map.entry(id).or_insert_with(|| {
                distinct.push(id);
                (distinct.len() - 1) as u32
            });
            slot_of.push(s);
        }
    }

    let mut by_id: Vec<u32> = (0..distinct.len() as u32).collect();
    by_id.sort_unstable_by_key(|&s| distinct[s as usize]);
    let mut rank_of_slot = vec![0u32; distinct.len()];
    for (rank, &s) in by_id.iter().enumerate() {
        rank_of_slot[s as usize] = rank as u32;
    }
    let block_ids: Vec<u64> = by_id.iter().map(|&s| distinct[s as usize]).collect();

    let ranks: Vec<u32> = slot_of.iter().map(|&s| rank_of_slot[s as usize]).collect();
    let mut counts = vec![0u64; block_ids.len()];
    for &r in &ranks {
        counts[r as usize] += 1;
    }
    let mut next = Vec::with_capacity(counts.len());
    let mut acc = 0usize;
    for &c in &counts {
        next.push(acc);
        acc += c as usize;
    }
    let mut rel = vec![vec![0u32; n]; dims];
    for (i, &r) in ranks.iter().enumerate() {
        let dst = next[r as usize];
        next[r as usize] += 1;
        for (k, stream) in rel.iter_mut().enumerate() {
            stream[dst] = assign.rel[i * dims + k];
        }
    }

    BlockStreams {
        block_ids,
        counts,
        rel,
        order: order_preserving.then_some(ranks),
    }
}

/// Rebuilds cell indices from the streams, in input order when an order
/// stream is present and block-major order otherwise. Inputs must already be
/// validated.
fn rebuild_cells(layout: &BlockLayout, streams: &BlockStreams, dims: usize) -> Vec<i64> {
    let n = streams.rel.first().map_or(0, Vec::len);
    let p = i64::from(layout.p);
    let mut bid = vec![0u64; dims];
    let mut block_major = vec![0i64; n * dims];
    let mut start = Vec::with_capacity(streams.counts.len());
    let mut at = 0usize;
    for (&id, &count) in streams.block_ids.iter().zip(&streams.counts) {
        start.push(at);
        layout.block_coords(id, &mut bid);
        for j in at..at + count as usize {
            for k in 0..dims {
                block_major[j * dims + k] = bid[k] as i64 * p + i64::from(streams.rel[k][j]);
            }
        }
        at += count as usize;
    }
    match &streams.order {
        None => block_major,
        Some(order) => {
            let mut out = vec![0i64; n * dims];
            for (i, &r) in order.iter().enumerate() {
                let src = start[r as usize];
                start[r as usize] += 1;
                out[i * dims..(i + 1) * dims]
                    .copy_from_slice(&block_major[src * dims..(src + 1) * dims]);
            }
            out
        }
    }
}

/// Settings for one spatial compression.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SpatialOptions {
    pub order_preserving: bool,
    pub backend: Backend,
    pub precision: Precision,
}

impl Default for SpatialOptions {
    fn default() -> Self {
        SpatialOptions {
            order_preserving: true,
            backend: Backend::Zstd,
            precision: Precision::F64,
        }
    }
}

/// Parsed fixed part of a spatial payload.
#[derive(Debug, Clone, PartialEq)]
pub struct SpatialHeader {
    pub grid: QuantGrid,
    pub precision: Precision,
    pub layout: BlockLayout,
    pub particles: usize,
    pub order_preserving: bool,
}

impl SpatialHeader {
    fn write(&self, out: &mut Vec<u8>) {
        self.grid.write_record(self.precision, out);
        wire::put_varint(out, u64::from(self.layout.p));
        for &b in &self.layout.bn {
            wire::put_varint(out, b);
        }
        wire::put_varint(out, self.particles as u64);
        out.push(u8::from(self.order_preserving));
    }

    pub(crate) fn parse(r: &mut Reader<'_>) -> Result<Self> {
        let (grid, precision) = QuantGrid::read_record(r)?;
        let p = u32::try_from(r.varint()?).map_err(|_| Error::corrupt("block size exceeds u32"))?;
        let bn = (0..grid.dims()).map(|_| r.varint()).collect::<Result<Vec<_>>>()?;
        let layout = BlockLayout::new(p, bn).map_err(|e| Error::corrupt(e.to_string()))?;
        let particles = r.varint_usize(1 << 40, "particle count")?;
        let order_preserving = match r.u8()? {
            0 => false,
            1 => true,
            f => return Err(Error::corrupt(format!("order flag {f}"))),
        };
        Ok(SpatialHeader {
            grid,
            precision,
            layout,
            particles,
            order_preserving,
        })
    }
}

/// Compressed frame plus the reconstruction a decoder will produce.
#[derive(Debug, Clone)]
pub struct Encoded {
    pub frame: CompressedFrame,
    pub reconstructed: Frame,
}

/// Spatially compresses one frame. See [`encode_spatial`] for the variant
/// that also returns the reconstruction.
pub fn compress_spatial(frame: &Frame, eb: f64, p: u32, opts: SpatialOptions) -> Result<CompressedFrame> {
    Ok(encode_spatial(frame, eb, p, opts)?.frame)
}

pub fn encode_spatial(frame: &Frame, eb: f64, p: u32, opts: SpatialOptions) -> Result<Encoded> {
    let qframe = quantizer::quantize_with(frame, eb, None, opts.precision)?;
    let dims = frame.dims();
    let (layout, assign) = assign_blocks(&qframe, p)?;
    let streams = build_streams(&assign, dims, opts.order_preserving);

    let header = SpatialHeader {
        grid: qframe.grid().clone(),
        precision: opts.precision,
        layout,
        particles: frame.len(),
        order_preserving: opts.order_preserving,
    };
    let mut payload = Vec::new();
    header.write(&mut payload);

    let mut raw: Vec<Vec<i64>> = Vec::with_capacity(dims + 3);
    raw.push(streams.block_ids.iter().map(|&v| v as i64).collect());
    raw.push(streams.counts.iter().map(|&v| v as i64).collect());
    for s in &streams.rel {
        raw.push(s.iter().map(|&v| i64::from(v)).collect());
    }
    if let Some(order) = &streams.order {
        raw.push(order.iter().map(|&v| i64::from(v)).collect());
    }
    let coded: Vec<CodedStream> = raw
        .par_iter()
        .map(|s| encode_stream(s, StreamOptions::new(opts.backend)))
        .collect();
    for c in &coded {
        c.write(&mut payload);
    }

    let reconstructed = if opts.order_preserving {
        quantizer::dequantize_values(qframe.grid(), qframe.values(), frame.index())
    } else {
        let cells = rebuild_cells(&header.layout, &streams, dims);
        quantizer::dequantize_values(qframe.grid(), &cells, frame.index())
    };
    let cf = CompressedFrame::from_payload(Method::Spatial, frame.index(), payload)?;
    Ok(Encoded {
        frame: cf,
        reconstructed,
    })
}

/// Decodes a spatial frame. Any inconsistency between the streams is
/// reported as a corrupt stream; no partial frame is returned.
pub fn decompress_spatial(cf: &CompressedFrame) -> Result<Frame> {
    if cf.method() != Method::Spatial {
        return Err(Error::corrupt("not a spatial frame"));
    }
    let mut r = Reader::new(cf.payload());
    let header = SpatialHeader::parse(&mut r)?;
    let dims = header.grid.dims();
    let n = header.particles;
    let total = header.layout.total_blocks().expect("checked by BlockLayout::new");

    let block_ids = decode_stream(&CodedStream::read(&mut r)?, None)?;
    let b = block_ids.len();
    if b > n || (n > 0 && b == 0) {
        return Err(Error::corrupt(format!("{b} blocks for {n} particles")));
    }
    let mut prev = None;
    for &id in &block_ids {
        if id < 0 || id as u64 >= total || prev.is_some_and(|p| id <= p) {
            return Err(Error::corrupt("block ids out of range or not increasing"));
        }
        prev = Some(id);
    }
    let counts = decode_stream(&CodedStream::read(&mut r)?, Some(b))?;
    let mut sum = 0u64;
    for &c in &counts {
        if c < 1 {
            return Err(Error::corrupt("empty block stored"));
        }
        sum = sum.saturating_add(c as u64);
    }
    if sum != n as u64 {
        return Err(Error::corrupt(format!("block counts sum to {sum}, expected {n}")));
    }
    let mut rel = Vec::with_capacity(dims);
    for _ in 0..dims {
        let s = decode_stream(&CodedStream::read(&mut r)?, Some(n))?;
        if s.iter().any(|&v| v < 0 || v >= i64::from(header.layout.p)) {
            return Err(Error::corrupt("relative position outside its block"));
        }
        rel.push(s.into_iter().map(|v| v as u32).collect::<Vec<_>>());
    }
    let order = if header.order_preserving {
        let s = decode_stream(&CodedStream::read(&mut r)?, Some(n))?;
        let mut seen = vec![0u64; b];
        for &v in &s {
            if v < 0 || v as usize >= b {
                return Err(Error::corrupt("order stream references a missing block"));
            }
            seen[v as usize] += 1;
        }
        if seen.iter().zip(&counts).any(|(&s, &c)| s != c as u64) {
            return Err(Error::corrupt("order stream disagrees with block counts"));
        }
        Some(s.into_iter().map(|v| v as u32).collect())
    } else {
        None
    };
    if r.remaining() != 0 {
        return Err(Error::corrupt("trailing bytes in spatial payload"));
    }

    let streams = BlockStreams {
        block_ids: block_ids.into_iter().map(|v| v as u64).collect(),
        counts: counts.into_iter().map(|v| v as u64).collect(),
        rel,
        order,
    };
    let cells = rebuild_cells(&header.layout, &streams, dims);
    if cells.iter().any(|c| c.abs() >= MAX_CELL) {
        return Err(Error::corrupt("cell index out of range"));
    }
    Ok(quantizer::dequantize_values(&header.grid, &cells, cf.frame_index()))
}
