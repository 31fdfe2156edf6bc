//! Data model shared by every codec: frames, quantization grids, compressed
//! frames, archive layout and codec configuration.

use std::fmt;

use crate::coding::Backend;
use crate::error::{Error, Result};
use crate::wire::{self, Reader};

/// One time step of `N` particles with `d` coordinates each, stored
/// row-major (`coords[i * d + k]` is coordinate `k` of particle `i`).
///
/// Every coordinate is finite. Extra per-particle fields such as velocity
/// can be carried as additional dimensions.
#[derive(Clone, PartialEq)]
pub struct Frame {
    index: u64,
    dims: usize,
    coords: Vec<f64>,
}

impl Frame {
    pub fn new(index: u64, dims: usize, coords: Vec<f64>) -> Result<Self> {
        if dims == 0 {
            return Err(Error::ShapeMismatch("a frame needs at least one dimension".into()));
        }
        if coords.len() % dims != 0 {
            return Err(Error::DimensionMismatch {
                expected: dims,
                found: coords.len() % dims,
            });
        }
        let frame = Frame { index, dims, coords };
        validate_frame(&frame)?;
        Ok(frame)
    }

    /// Builds a frame from per-particle rows. The first row fixes `d`.
    pub fn from_rows<R: AsRef<[f64]>>(index: u64, rows: &[R]) -> Result<Self> {
        let Some(first) = rows.first() else {
            return Err(Error::ShapeMismatch(
                "cannot infer dimensions from zero rows, use Frame::empty".into(),
            ));
        };
        let dims = first.as_ref().len();
        let mut coords = Vec::with_capacity(dims * rows.len());
        for row in rows {
            let row = row.as_ref();
            if row.len() != dims {
                return Err(Error::DimensionMismatch {
                    expected: dims,
                    found: row.len(),
                });
            }
            coords.extend_from_slice(row);
        }
        Frame::new(index, dims, coords)
    }

    pub fn empty(index: u64, dims: usize) -> Result<Self> {
        Frame::new(index, dims, Vec::new())
    }

    /// Caller guarantees the frame invariants.
    pub(crate) fn from_parts(index: u64, dims: usize, coords: Vec<f64>) -> Self {
        debug_assert!(dims > 0 && coords.len() % dims == 0);
        Frame { index, dims, coords }
    }

    pub fn index(&self) -> u64 {
        self.index
    }

    pub fn dims(&self) -> usize {
        self.dims
    }

    /// Number of particles.
    pub fn len(&self) -> usize {
        self.coords.len() / self.dims
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    pub fn coords(&self) -> &[f64] {
        &self.coords
    }

    pub fn into_coords(self) -> Vec<f64> {
        self.coords
    }

    pub fn particle(&self, i: usize) -> &[f64] {
        &self.coords[i * self.dims..(i + 1) * self.dims]
    }

    pub fn particles(&self) -> std::slice::ChunksExact<'_, f64> {
        self.coords.chunks_exact(self.dims)
    }

    pub fn with_index(mut self, index: u64) -> Self {
        self.index = index;
        self
    }

    /// Per-dimension minima, or zeros for an empty frame.
    pub fn minima(&self) -> Vec<f64> {
        if self.is_empty() {
            return vec![0.0; self.dims];
        }
        let mut mins = vec![f64::INFINITY; self.dims];
        for p in self.particles() {
            for (m, &x) in mins.iter_mut().zip(p) {
                if x < *m {
                    *m = x;
                }
            }
        }
        mins
    }

    /// Per-dimension maxima, or zeros for an empty frame.
    pub fn maxima(&self) -> Vec<f64> {
        if self.is_empty() {
            return vec![0.0; self.dims];
        }
        let mut maxs = vec![f64::NEG_INFINITY; self.dims];
        for p in self.particles() {
            for (m, &x) in maxs.iter_mut().zip(p) {
                if x > *m {
                    *m = x;
                }
            }
        }
        maxs
    }
}

impl fmt::Debug for Frame {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Frame")
            .field("index", &self.index)
            .field("dims", &self.dims)
            .field("particles", &self.len())
            .finish()
    }
}

/// Checks the frame invariants: `d >= 1`, whole rows, finite values.
pub fn validate_frame(frame: &Frame) -> Result<()> {
    if frame.dims == 0 {
        return Err(Error::ShapeMismatch("a frame needs at least one dimension".into()));
    }
    if frame.coords.len() % frame.dims != 0 {
        return Err(Error::DimensionMismatch {
            expected: frame.dims,
            found: frame.coords.len() % frame.dims,
        });
    }
    if let Some(pos) = frame.coords.iter().position(|x| !x.is_finite()) {
        return Err(Error::NonFiniteCoordinate {
            particle: pos / frame.dims,
            dim: pos % frame.dims,
        });
    }
    Ok(())
}

/// Width of the scalars in the source data. Coordinates are always processed
/// as `f64`; this only records what to write back out.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Precision {
    F32,
    #[default]
    F64,
}

impl Precision {
    pub fn bytes(self) -> usize {
        match self {
            Precision::F32 => 4,
            Precision::F64 => 8,
        }
    }

    pub(crate) fn tag(self) -> u8 {
        match self {
            Precision::F32 => 4,
            Precision::F64 => 8,
        }
    }

    pub(crate) fn from_tag(tag: u8) -> Result<Self> {
        match tag {
            4 => Ok(Precision::F32),
            8 => Ok(Precision::F64),
            t => Err(Error::corrupt(format!("unknown precision tag {t}"))),
        }
    }
}

/// Uniform quantization grid: cells of width `2 * eb` anchored at `minima`.
#[derive(Debug, Clone, PartialEq)]
pub struct QuantGrid {
    eb: f64,
    minima: Vec<f64>,
}

impl QuantGrid {
    pub fn new(eb: f64, minima: Vec<f64>) -> Result<Self> {
        if !(eb > 0.0 && eb.is_finite()) {
            return Err(Error::NonPositiveErrorBound(eb));
        }
        if minima.is_empty() {
            return Err(Error::ShapeMismatch("grid needs at least one dimension".into()));
        }
        if minima.iter().any(|m| !m.is_finite()) {
            return Err(Error::corrupt("non-finite grid origin"));
        }
        Ok(QuantGrid { eb, minima })
    }

    pub fn eb(&self) -> f64 {
        self.eb
    }

    pub fn minima(&self) -> &[f64] {
        &self.minima
    }

    pub fn dims(&self) -> usize {
        self.minima.len()
    }

    pub(crate) fn write_record(&self, precision: Precision, out: &mut Vec<u8>) {
        wire::put_varint(out, self.minima.len() as u64);
        wire::put_f64(out, self.eb);
        for &m in &self.minima {
            wire::put_f64(out, m);
        }
        out.push(precision.tag());
    }

    pub(crate) fn read_record(r: &mut Reader<'_>) -> Result<(Self, Precision)> {
        let dims = r.varint_usize(u16::MAX as usize, "dimension count")?;
        if dims == 0 {
            return Err(Error::corrupt("grid record with zero dimensions"));
        }
        let eb = r.f64()?;
        let minima = (0..dims).map(|_| r.f64()).collect::<Result<Vec<_>>>()?;
        let precision = Precision::from_tag(r.u8()?)?;
        let grid = QuantGrid::new(eb, minima).map_err(|e| Error::corrupt(e.to_string()))?;
        Ok((grid, precision))
    }
}

/// Integer cell indices of a frame on a [`QuantGrid`], row-major like
/// [`Frame`]. Values are signed because a temporal reference can be quantized
/// on another frame's grid.
#[derive(Debug, Clone, PartialEq)]
pub struct QuantizedFrame {
    pub(crate) grid: QuantGrid,
    pub(crate) q: Vec<i64>,
}

impl QuantizedFrame {
    pub fn new(grid: QuantGrid, q: Vec<i64>) -> Result<Self> {
        if q.len() % grid.dims() != 0 {
            return Err(Error::DimensionMismatch {
                expected: grid.dims(),
                found: q.len() % grid.dims(),
            });
        }
        Ok(QuantizedFrame { grid, q })
    }

    pub fn grid(&self) -> &QuantGrid {
        &self.grid
    }

    pub fn values(&self) -> &[i64] {
        &self.q
    }

    pub fn dims(&self) -> usize {
        self.grid.dims()
    }

    pub fn len(&self) -> usize {
        self.q.len() / self.grid.dims()
    }

    pub fn is_empty(&self) -> bool {
        self.q.is_empty()
    }
}

/// Which codec produced a compressed frame.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Method {
    Spatial,
    Temporal,
}

impl Method {
    pub(crate) fn tag(self) -> u8 {
        match self {
            Method::Spatial => 0,
            Method::Temporal => 1,
        }
    }

    pub(crate) fn from_tag(tag: u8) -> Result<Self> {
        match tag {
            0 => Ok(Method::Spatial),
            1 => Ok(Method::Temporal),
            t => Err(Error::corrupt(format!("unknown method tag {t}"))),
        }
    }
}

/// One compressed frame. The payload is self-describing; the remaining
/// fields are parsed from (or written into) its header.
#[derive(Debug, Clone, PartialEq)]
pub struct CompressedFrame {
    method: Method,
    frame_index: u64,
    reference: Option<u64>,
    particle_count: usize,
    grid: QuantGrid,
    precision: Precision,
    payload: Vec<u8>,
}

impl CompressedFrame {
    /// Parses the payload header and checks the method/reference invariants.
    pub fn from_payload(method: Method, frame_index: u64, payload: Vec<u8>) -> Result<Self> {
        let (grid, precision, particle_count, reference) = match method {
            Method::Spatial => {
                let h = crate::spatial::SpatialHeader::parse(&mut Reader::new(&payload))?;
                (h.grid, h.precision, h.particles, None)
            }
            Method::Temporal => {
                let h = crate::temporal::TemporalHeader::parse(&mut Reader::new(&payload))?;
                if h.reference >= frame_index {
                    return Err(Error::corrupt(format!(
                        "frame {frame_index} references later frame {}",
                        h.reference
                    )));
                }
                (h.grid, h.precision, h.particles, Some(h.reference))
            }
        };
        Ok(CompressedFrame {
            method,
            frame_index,
            reference,
            particle_count,
            grid,
            precision,
            payload,
        })
    }

    pub fn method(&self) -> Method {
        self.method
    }

    pub fn frame_index(&self) -> u64 {
        self.frame_index
    }

    pub fn reference(&self) -> Option<u64> {
        self.reference
    }

    pub fn particle_count(&self) -> usize {
        self.particle_count
    }

    pub fn grid(&self) -> &QuantGrid {
        &self.grid
    }

    /// Half-width of this frame's quantization grid. It sits a rounding
    /// margin below the bound the frame was compressed under (`eb`, or
    /// `eb / kappa` for a scaled anchor).
    pub fn effective_eb(&self) -> f64 {
        self.grid.eb
    }

    pub fn precision(&self) -> Precision {
        self.precision
    }

    pub fn payload(&self) -> &[u8] {
        &self.payload
    }

    pub fn into_payload(self) -> Vec<u8> {
        self.payload
    }

    pub fn len(&self) -> usize {
        self.payload.len()
    }

    pub fn is_empty(&self) -> bool {
        self.payload.is_empty()
    }
}

/// Block edge length `p` in quantization cells.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum BlockSize {
    /// Sweep `2^k` candidates once on a sample of the first frame.
    #[default]
    Auto,
    /// Re-run the sweep on the first frame of every batch.
    AutoPerBatch,
    Fixed(u32),
}

/// Error-bound divisor for anchor frames.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum AnchorScale {
    /// Use [`DEFAULT_ANCHOR_SCALE`] when the first two frames show high
    /// temporal correlation, otherwise 1.
    #[default]
    Auto,
    Fixed(u32),
}

pub const DEFAULT_ANCHOR_SCALE: u32 = 5;

#[derive(Debug, Clone, PartialEq)]
pub struct CodecConfig {
    /// Absolute error bound.
    pub eb: f64,
    pub batch_size: usize,
    pub block_size: BlockSize,
    pub anchor_scale: AnchorScale,
    pub order_preserving: bool,
    pub backend: Backend,
    pub precision: Precision,
}

impl CodecConfig {
    pub fn new(eb: f64) -> Self {
        CodecConfig {
            eb,
            batch_size: 16,
            block_size: BlockSize::Auto,
            anchor_scale: AnchorScale::Auto,
            order_preserving: true,
            backend: Backend::Zstd,
            precision: Precision::F64,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.eb > 0.0 && self.eb.is_finite()) {
            return Err(Error::NonPositiveErrorBound(self.eb));
        }
        if self.batch_size == 0 {
            return Err(Error::InvalidConfig("batch size must be at least 1".into()));
        }
        if self.block_size == BlockSize::Fixed(0) {
            return Err(Error::InvalidConfig("block size must be at least 1".into()));
        }
        if self.anchor_scale == AnchorScale::Fixed(0) {
            return Err(Error::InvalidConfig("anchor scale must be at least 1".into()));
        }
        Ok(())
    }
}

/// Dataset-level facts recorded in the archive header.
#[derive(Debug, Clone, PartialEq)]
pub struct ArchiveInfo {
    pub dims: usize,
    pub frame_count: u64,
    pub batch_size: usize,
    pub eb: f64,
    /// Anchor divisor actually applied (1 when scaling is inactive).
    pub kappa: u32,
    /// Block size chosen for the dataset (per-batch choices live in payloads).
    pub block_size: u32,
    pub precision: Precision,
    pub backend: Backend,
    pub order_preserving: bool,
    pub eb_scaling_active: bool,
}

/// Where a frame lives inside an archive.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Location {
    Batch { batch: usize, slot: usize },
    Anchor { slot: usize },
}

/// Compressed dataset: per-batch frame lists plus the separate anchor array.
///
/// Construction checks that every frame appears exactly once, anchors are
/// spatial batch-first frames, and every temporal frame references either its
/// predecessor or (when batch-first) an earlier anchor.
#[derive(Debug, Clone, PartialEq)]
pub struct Archive {
    info: ArchiveInfo,
    batches: Vec<Vec<CompressedFrame>>,
    anchors: Vec<CompressedFrame>,
    locations: Vec<Location>,
}

impl Archive {
    pub fn new(
        info: ArchiveInfo,
        batches: Vec<Vec<CompressedFrame>>,
        anchors: Vec<CompressedFrame>,
    ) -> Result<Self> {
        if info.batch_size == 0 {
            return Err(Error::corrupt("batch size 0"));
        }
        let count = usize::try_from(info.frame_count)
            .map_err(|_| Error::corrupt("frame count exceeds address space"))?;
        let expected_batches = count.div_ceil(info.batch_size);
        if batches.len() != expected_batches {
            return Err(Error::corrupt(format!(
                "{} batches for {count} frames of batch size {}",
                batches.len(),
                info.batch_size
            )));
        }
        let mut locations: Vec<Option<Location>> = vec![None; count];
        let mut place = |cf: &CompressedFrame, loc: Location| -> Result<()> {
            let idx = cf.frame_index as usize;
            if cf.frame_index >= info.frame_count {
                return Err(Error::corrupt(format!("frame index {idx} out of range")));
            }
            if locations[idx].replace(loc).is_some() {
                return Err(Error::corrupt(format!("frame {idx} stored twice")));
            }
            if cf.grid.dims() != info.dims {
                return Err(Error::corrupt(format!("frame {idx} has wrong dimension count")));
            }
            Ok(())
        };
        for (slot, cf) in anchors.iter().enumerate() {
            if cf.method != Method::Spatial || cf.frame_index % info.batch_size as u64 != 0 {
                return Err(Error::corrupt(format!(
                    "anchor slot {slot} holds frame {} which is not a spatial batch-first frame",
                    cf.frame_index
                )));
            }
            place(cf, Location::Anchor { slot })?;
        }
        for (batch, frames) in batches.iter().enumerate() {
            for (slot, cf) in frames.iter().enumerate() {
                if cf.frame_index as usize / info.batch_size != batch {
                    return Err(Error::corrupt(format!(
                        "frame {} filed under batch {batch}",
                        cf.frame_index
                    )));
                }
                place(cf, Location::Batch { batch, slot })?;
            }
        }
        let locations = locations
            .into_iter()
            .enumerate()
            .map(|(i, l)| l.ok_or_else(|| Error::corrupt(format!("frame {i} missing"))))
            .collect::<Result<Vec<_>>>()?;

        let archive = Archive {
            info,
            batches,
            anchors,
            locations,
        };
        for cf in archive.frames() {
            if let Some(r) = cf.reference {
                check_reference(cf.frame_index, r, archive.info.batch_size, |i| {
                    archive.location(i).map(|l| matches!(l, Location::Anchor { .. }))
                })?;
            }
        }
        Ok(archive)
    }

    pub fn info(&self) -> &ArchiveInfo {
        &self.info
    }

    pub fn frame_count(&self) -> u64 {
        self.info.frame_count
    }

    pub fn batches(&self) -> &[Vec<CompressedFrame>] {
        &self.batches
    }

    pub fn anchors(&self) -> &[CompressedFrame] {
        &self.anchors
    }

    pub fn location(&self, index: u64) -> Option<Location> {
        self.locations.get(usize::try_from(index).ok()?).copied()
    }

    pub fn get(&self, index: u64) -> Option<&CompressedFrame> {
        Some(match self.location(index)? {
            Location::Batch { batch, slot } => &self.batches[batch][slot],
            Location::Anchor { slot } => &self.anchors[slot],
        })
    }

    /// All compressed frames in index order.
    pub fn frames(&self) -> impl Iterator<Item = &CompressedFrame> + '_ {
        (0..self.info.frame_count).map(|i| self.get(i).expect("index table is complete"))
    }

    /// Sum of payload sizes.
    pub fn payload_bytes(&self) -> usize {
        self.frames().map(CompressedFrame::len).sum()
    }

    pub fn count_by_method(&self, method: Method) -> usize {
        self.frames().filter(|f| f.method == method).count()
    }
}

/// Enforces the reference rule that bounds retrieval cost: a temporal frame
/// refers to its predecessor, except a batch-first frame, which refers to an
/// earlier anchor.
pub(crate) fn check_reference(
    index: u64,
    reference: u64,
    batch_size: usize,
    is_anchor: impl Fn(u64) -> Option<bool>,
) -> Result<()> {
    let batch_first = index % batch_size as u64 == 0;
    let ok = if batch_first {
        reference < index && is_anchor(reference) == Some(true)
    } else {
        reference + 1 == index
    };
    if ok {
        Ok(())
    } else {
        Err(Error::corrupt(format!(
            "frame {index} has an illegal reference to frame {reference}"
        )))
    }
}
