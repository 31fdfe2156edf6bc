//! Error-bounded uniform scalar quantization.
//!
//! A coordinate `x` maps to the cell `q = floor((x - min) / (2 eb))` and is
//! reconstructed at the cell midpoint `(2q + 1) eb + min`, so the
//! reconstruction error never exceeds `eb`.
//!
//! Both directions run in `f64`, so the midpoint and the subtraction that
//! produce a reconstruction each round. A point sitting exactly on a cell
//! boundary would then miss the bound by an ulp. [`quantize`] therefore
//! builds its grid with a half-width a few ulps below `eb` (the margin scales
//! with the coordinate magnitude), and verifies every cell with the exact
//! expression the decoder uses, moving to the neighbouring cell when the
//! floor landed one off. The bound holds for the floating-point values
//! actually produced, not just in exact arithmetic.
//!
//! For `f32` sources, [`quantize_with`] also reserves an `f32` ulp so the
//! bound survives writing the reconstruction back at single precision.

use crate::error::{Error, Result};
use crate::model::{Frame, Precision, QuantGrid, QuantizedFrame};

/// Largest cell index magnitude accepted. Keeps `2q + 1` exactly
/// representable in an `f64` mantissa.
pub const MAX_CELL: i64 = 1 << 52;

#[inline]
pub(crate) fn reconstruct(q: i64, min: f64, eb: f64) -> f64 {
    (2.0 * q as f64 + 1.0) * eb + min
}

fn ulp(x: f64) -> f64 {
    let x = x.abs();
    f64::from_bits(x.to_bits() + 1) - x
}

fn ulp_f32(x: f64) -> f64 {
    let x = (x.abs() as f32).max(f32::MIN_POSITIVE);
    f64::from(f32::from_bits(x.to_bits() + 1) - x)
}

/// Grid half-width used for a requested bound `eb` on coordinates of
/// magnitude at most `magnitude`.
pub fn grid_half_width(eb: f64, magnitude: f64, precision: Precision) -> Result<f64> {
    if !(eb > 0.0 && eb.is_finite()) {
        return Err(Error::NonPositiveErrorBound(eb));
    }
    let mut half = eb - 4.0 * ulp(magnitude) - 4.0 * ulp(eb);
    if precision == Precision::F32 {
        // Rounding to f32 moves a value by at most half an f32 ulp of the
        // magnitude; reserve a full one.
        half -= ulp_f32(magnitude + eb);
    }
    if !(half >= 0.5 * eb) {
        return Err(Error::QuantRangeOverflow(format!(
            "error bound {eb} is below the float resolution of coordinates near {magnitude}"
        )));
    }
    Ok(half)
}

#[inline]
fn floor_cell(x: f64, min: f64, eb: f64) -> Option<i64> {
    let t = ((x - min) / (2.0 * eb)).floor();
    (t.abs() < MAX_CELL as f64).then_some(t as i64)
}

#[inline]
fn bounded_cell(x: f64, min: f64, eb: f64, bound: f64, precision: Precision) -> Option<i64> {
    let q = floor_cell(x, min, eb)?;
    let within = |c: i64| {
        let r = reconstruct(c, min, eb);
        (x - r).abs() <= bound && (precision == Precision::F64 || (x - f64::from(r as f32)).abs() <= bound)
    };
    [q, q + 1, q - 1].into_iter().find(|&c| c.abs() < MAX_CELL && within(c))
}

fn overflow(frame: &Frame, i: usize, grid: &QuantGrid) -> Error {
    let dims = frame.dims();
    let k = i % dims;
    Error::QuantRangeOverflow(format!(
        "particle {} dimension {k}: value {} with origin {} and eb {} \
         does not fit the quantization range",
        i / dims,
        frame.coords()[i],
        grid.minima()[k],
        grid.eb()
    ))
}

/// Quantizes `frame` so that every reconstruction lies within `eb`, using
/// the given per-dimension origin or the frame's own minima when `minima` is
/// `None`. The grid's half-width is `eb` minus a rounding margin.
pub fn quantize(frame: &Frame, eb: f64, minima: Option<&[f64]>) -> Result<QuantizedFrame> {
    quantize_with(frame, eb, minima, Precision::F64)
}

/// [`quantize`] for data that will be written back at `precision`.
pub fn quantize_with(
    frame: &Frame,
    eb: f64,
    minima: Option<&[f64]>,
    precision: Precision,
) -> Result<QuantizedFrame> {
    let minima = match minima {
        Some(m) => {
            if m.len() != frame.dims() {
                return Err(Error::DimensionMismatch {
                    expected: frame.dims(),
                    found: m.len(),
                });
            }
            m.to_vec()
        }
        None => frame.minima(),
    };
    let magnitude = frame
        .coords()
        .iter()
        .chain(&minima)
        .fold(0.0f64, |m, &x| m.max(x.abs()));
    let grid = QuantGrid::new(grid_half_width(eb, magnitude, precision)?, minima)?;
    let dims = frame.dims();
    let mins = grid.minima();
    let half = grid.eb();
    let mut q = Vec::with_capacity(frame.coords().len());
    for (i, &x) in frame.coords().iter().enumerate() {
        match bounded_cell(x, mins[i % dims], half, eb, precision) {
            Some(c) => q.push(c),
            None => return Err(overflow(frame, i, &grid)),
        }
    }
    Ok(QuantizedFrame { grid, q })
}

/// Maps `frame` onto an existing grid by flooring. No bound is implied;
/// this is how a temporal reference is expressed in the current frame's
/// cells. Cells may be negative when the grid origin lies above some
/// coordinates.
pub fn quantize_on(frame: &Frame, grid: &QuantGrid) -> Result<QuantizedFrame> {
    if grid.dims() != frame.dims() {
        return Err(Error::DimensionMismatch {
            expected: grid.dims(),
            found: frame.dims(),
        });
    }
    let dims = frame.dims();
    let mins = grid.minima();
    let mut q = Vec::with_capacity(frame.coords().len());
    for (i, &x) in frame.coords().iter().enumerate() {
        match floor_cell(x, mins[i % dims], grid.eb()) {
            Some(c) => q.push(c),
            None => return Err(overflow(frame, i, grid)),
        }
    }
    Ok(QuantizedFrame {
        grid: grid.clone(),
        q,
    })
}

/// Reconstructs cell midpoints. The returned frame has index 0.
pub fn dequantize(qframe: &QuantizedFrame) -> Frame {
    dequantize_values(&qframe.grid, &qframe.q, 0)
}

pub(crate) fn dequantize_values(grid: &QuantGrid, q: &[i64], index: u64) -> Frame {
    let dims = grid.dims();
    let eb = grid.eb();
    let mins = grid.minima();
    let coords = q
        .iter()
        .enumerate()
        .map(|(i, &c)| reconstruct(c, mins[i % dims], eb))
        .collect();
    Frame::from_parts(index, dims, coords)
}
