//! Closed-loop temporal codec.
//!
//! The current frame is quantized on its own grid. The reference frame,
//! already in its reconstructed form, is quantized on that same grid, and
//! only the per-particle cell differences are stored. The decoder repeats the
//! reference quantization exactly, so reconstructions agree bit for bit and
//! the error bound holds for every frame regardless of chain length.
//!
//! Particle `i` of the current frame is matched with particle `i` of the
//! reference; both frames must have the same particle count.

use rayon::prelude::*;

use crate::coding::{decode_stream, encode_stream, Backend, CodedStream, StreamOptions};
use crate::error::{Error, Result};
use crate::model::{CompressedFrame, Frame, Method, Precision, QuantGrid};
use crate::quantizer::{self, MAX_CELL};
use crate::spatial::Encoded;
use crate::wire::{self, Reader};

/// Parsed fixed part of a temporal payload.
#[derive(Debug, Clone, PartialEq)]
pub struct TemporalHeader {
    pub grid: QuantGrid,
    pub precision: Precision,
    pub reference: u64,
    pub particles: usize,
}

impl TemporalHeader {
    fn write(&self, out: &mut Vec<u8>) {
        self.grid.write_record(self.precision, out);
        wire::put_varint(out, self.reference);
        wire::put_varint(out, self.particles as u64);
    }

    pub(crate) fn parse(r: &mut Reader<'_>) -> Result<Self> {
        let (grid, precision) = QuantGrid::read_record(r)?;
        let reference = r.varint()?;
        let particles = r.varint_usize(1 << 40, "particle count")?;
        Ok(TemporalHeader {
            grid,
            precision,
            reference,
            particles,
        })
    }
}

fn check_pair(current: &Frame, reference: &Frame) -> Result<()> {
    if current.dims() != reference.dims() {
        return Err(Error::DimensionMismatch {
            expected: current.dims(),
            found: reference.dims(),
        });
    }
    if current.len() != reference.len() {
        return Err(Error::ParticleCountMismatch {
            current: current.len(),
            reference: reference.len(),
        });
    }
    Ok(())
}

/// Compresses `current` against the reconstructed `reference`, which is
/// recorded as frame `reference_index`.
pub fn compress_temporal(
    current: &Frame,
    reference: &Frame,
    reference_index: u64,
    eb: f64,
    backend: Backend,
    precision: Precision,
) -> Result<CompressedFrame> {
    Ok(encode_temporal(current, reference, reference_index, eb, backend, precision)?.frame)
}

pub fn encode_temporal(
    current: &Frame,
    reference: &Frame,
    reference_index: u64,
    eb: f64,
    backend: Backend,
    precision: Precision,
) -> Result<Encoded> {
    check_pair(current, reference)?;
    if reference_index >= current.index() {
        return Err(Error::InvalidConfig(format!(
            "frame {} cannot reference frame {reference_index}",
            current.index()
        )));
    }
    let qcur = quantizer::quantize_with(current, eb, None, precision)?;
    let qref = quantizer::quantize_on(reference, qcur.grid())?;
    let dims = current.dims();

    let header = TemporalHeader {
        grid: qcur.grid().clone(),
        precision,
        reference: reference_index,
        particles: current.len(),
    };
    let mut payload = Vec::new();
    header.write(&mut payload);

    let coded: Vec<CodedStream> = (0..dims)
        .into_par_iter()
        .map(|k| {
            let residuals: Vec<i64> = qcur
                .values()
                .iter()
                .zip(qref.values())
                .skip(k)
                .step_by(dims)
                .map(|(&c, &r)| c - r)
                .collect();
            encode_stream(&residuals, StreamOptions::without_delta(backend))
        })
        .collect();
    for c in &coded {
        c.write(&mut payload);
    }

    let reconstructed = quantizer::dequantize_values(qcur.grid(), qcur.values(), current.index());
    let frame = CompressedFrame::from_payload(Method::Temporal, current.index(), payload)?;
    Ok(Encoded {
        frame,
        reconstructed,
    })
}

/// Decodes a temporal frame given the reconstruction of its reference.
pub fn decompress_temporal(cf: &CompressedFrame, reference: &Frame) -> Result<Frame> {
    if cf.method() != Method::Temporal {
        return Err(Error::corrupt("not a temporal frame"));
    }
    let mut r = Reader::new(cf.payload());
    let header = TemporalHeader::parse(&mut r)?;
    let dims = header.grid.dims();
    let n = header.particles;
    if reference.dims() != dims {
        return Err(Error::DimensionMismatch {
            expected: dims,
            found: reference.dims(),
        });
    }
    if reference.len() != n {
        return Err(Error::ParticleCountMismatch {
            current: n,
            reference: reference.len(),
        });
    }
    let mut q = quantizer::quantize_on(reference, &header.grid)?.q;
    for k in 0..dims {
        let residuals = decode_stream(&CodedStream::read(&mut r)?, Some(n))?;
        for (cell, res) in q.iter_mut().skip(k).step_by(dims).zip(residuals) {
            *cell = cell
                .checked_add(res)
                .filter(|c| c.abs() < MAX_CELL)
                .ok_or_else(|| Error::corrupt("residual leaves the quantization range"))?;
        }
    }
    if r.remaining() != 0 {
        return Err(Error::corrupt("trailing bytes in temporal payload"));
    }
    Ok(quantizer::dequantize_values(&header.grid, &q, cf.frame_index()))
}
