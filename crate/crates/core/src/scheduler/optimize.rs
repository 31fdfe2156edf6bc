//! Dataset-level parameter choices: block size and anchor scaling.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::model::Frame;
use crate::spatial::{compress_spatial, encode_spatial, SpatialOptions};
use crate::temporal::compress_temporal;

use super::fsm::Correlation;

/// Largest exponent in the `2^k` block-size sweep.
pub const MAX_BLOCK_EXP: u32 = 16;

/// Particles kept when sampling a frame for the sweep.
pub const SAMPLE_LIMIT: usize = 1_000_000;

/// Every `stride`-th particle, with the stride chosen so at most `limit`
/// remain.
pub fn subsample(frame: &Frame, limit: usize) -> Frame {
    if frame.len() <= limit {
        return frame.clone();
    }
    let stride = frame.len().div_ceil(limit.max(1));
    let coords = frame
        .particles()
        .step_by(stride)
        .flatten()
        .copied()
        .collect();
    Frame::from_parts(frame.index(), frame.dims(), coords)
}

/// Compressed size of `sample` for each candidate block size, in order.
/// Candidates that fail to compress report `None`.
pub fn sweep_block_sizes(
    sample: &Frame,
    eb: f64,
    candidates: &[u32],
    opts: SpatialOptions,
) -> Vec<Option<usize>> {
    candidates
        .par_iter()
        .map(|&p| compress_spatial(sample, eb, p, opts).ok().map(|cf| cf.len()))
        .collect()
}

/// Picks the `p = 2^k` (`0 <= k <= 16`) giving the smallest spatial payload
/// for a subsample of `sample`. Ties go to the smaller `p`. Every candidate
/// is evaluated because size is not unimodal in `p`.
pub fn optimize_block_size(sample: &Frame, eb: f64, opts: SpatialOptions) -> Result<u32> {
    if sample.is_empty() {
        return Err(Error::EmptyInput);
    }
    let sample = subsample(sample, SAMPLE_LIMIT);
    let candidates: Vec<u32> = (0..=MAX_BLOCK_EXP).map(|k| 1 << k).collect();
    let sizes = sweep_block_sizes(&sample, eb, &candidates, opts);
    let best = candidates
        .iter()
        .zip(&sizes)
        .filter_map(|(&p, s)| s.map(|s| (s, p)))
        .min();
    match best {
        Some((_, p)) => Ok(p),
        // Every candidate failed; surface the reason.
        None => compress_spatial(&sample, eb, 1, opts).map(|_| 1),
    }
}

/// Compresses `second` both ways against `first` at `eb`. Correlation is
/// high when the temporal payload is at most half the spatial one. Frames
/// with different particle counts are never correlated.
pub fn detect_temporal_correlation(
    first: &Frame,
    second: &Frame,
    eb: f64,
    p: u32,
    opts: SpatialOptions,
) -> Result<Correlation> {
    if first.len() != second.len() || first.dims() != second.dims() {
        return Ok(Correlation::Low);
    }
    let reference = encode_spatial(first, eb, p, opts)?.reconstructed;
    let second = second.clone().with_index(first.index() + 1);
    let reference = reference.with_index(first.index());
    let spatial = compress_spatial(&second, eb, p, opts)?.len();
    let temporal = match compress_temporal(&second, &reference, first.index(), eb, opts.backend, opts.precision) {
        Ok(cf) => cf.len(),
        Err(Error::QuantRangeOverflow(_)) => return Ok(Correlation::Low),
        Err(e) => return Err(e),
    };
    log::debug!("correlation probe: spatial {spatial} bytes, temporal {temporal} bytes");
    Ok(if 2 * temporal <= spatial {
        Correlation::High
    } else {
        Correlation::Low
    })
}
