//! Quality and performance measures.
//!
//! PSNR uses the value range of the original data over all dimensions
//! together. Identical inputs give `f64::INFINITY`, printed as `inf`.

use std::collections::HashMap;
use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::model::Frame;

fn check_shapes(original: &[Frame], reconstructed: &[Frame]) -> Result<()> {
    if original.len() != reconstructed.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} original frames, {} reconstructed",
            original.len(),
            reconstructed.len()
        )));
    }
    for (i, (a, b)) in original.iter().zip(reconstructed).enumerate() {
        if a.dims() != b.dims() || a.len() != b.len() {
            return Err(Error::ShapeMismatch(format!(
                "frame {i}: {}x{} vs {}x{}",
                a.len(),
                a.dims(),
                b.len(),
                b.dims()
            )));
        }
    }
    Ok(())
}

fn scalar_pairs<'a>(original: &'a [Frame], reconstructed: &'a [Frame]) -> impl Iterator<Item = (f64, f64)> + 'a {
    original
        .iter()
        .zip(reconstructed)
        .flat_map(|(a, b)| a.coords().iter().copied().zip(b.coords().iter().copied()))
}

/// Largest absolute difference over all scalars.
pub fn max_error(original: &[Frame], reconstructed: &[Frame]) -> Result<f64> {
    check_shapes(original, reconstructed)?;
    Ok(scalar_pairs(original, reconstructed).fold(0.0, |m, (a, b)| m.max((a - b).abs())))
}

/// Sum by recursive halving; the result does not depend on thread count.
pub fn pairwise_sum(values: &[f64]) -> f64 {
    const LEAF: usize = 128;
    if values.len() <= LEAF {
        return values.iter().sum();
    }
    let (a, b) = values.split_at(values.len() / 2);
    pairwise_sum(a) + pairwise_sum(b)
}

fn psnr_of(pairs: impl Iterator<Item = (f64, f64)>) -> Result<f64> {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    let squares: Vec<f64> = pairs
        .map(|(a, b)| {
            lo = lo.min(a);
            hi = hi.max(a);
            (a - b) * (a - b)
        })
        .collect();
    if squares.is_empty() {
        return Err(Error::EmptyInput);
    }
    let range = hi - lo;
    if range == 0.0 {
        return Err(Error::ZeroRange);
    }
    let mse = pairwise_sum(&squares) / squares.len() as f64;
    if mse == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(20.0 * (range / mse.sqrt()).log10())
}

/// Peak signal-to-noise ratio in dB.
pub fn psnr(original: &[Frame], reconstructed: &[Frame]) -> Result<f64> {
    check_shapes(original, reconstructed)?;
    psnr_of(scalar_pairs(original, reconstructed))
}

/// PSNR of each dimension on its own, using that dimension's range.
pub fn psnr_per_dimension(original: &[Frame], reconstructed: &[Frame]) -> Result<Vec<f64>> {
    check_shapes(original, reconstructed)?;
    let dims = original.first().map_or(0, Frame::dims);
    (0..dims)
        .map(|k| {
            psnr_of(original.iter().zip(reconstructed).flat_map(move |(a, b)| {
                a.coords()
                    .iter()
                    .skip(k)
                    .step_by(dims)
                    .copied()
                    .zip(b.coords().iter().skip(k).step_by(dims).copied())
            }))
        })
        .collect()
}

/// Bytes per second. Zero bytes give 0; a non-positive duration gives
/// infinity.
pub fn throughput(bytes: u64, seconds: f64) -> f64 {
    if bytes == 0 {
        0.0
    } else if seconds > 0.0 {
        bytes as f64 / seconds
    } else {
        f64::INFINITY
    }
}

/// Average stored bits per scalar.
pub fn bit_rate(compressed_bytes: u64, scalars: u64) -> f64 {
    8.0 * compressed_bytes as f64 / scalars as f64
}

pub fn compression_ratio(original_bytes: u64, compressed_bytes: u64) -> f64 {
    original_bytes as f64 / compressed_bytes as f64
}

/// Shannon entropy in bits per symbol of the empirical distribution.
pub fn shannon_entropy(values: &[i64]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    let mut counts: HashMap<i64, u64> = HashMap::new();
    for &v in values {
        *counts.entry(v).or_default() += 1;
    }
    let n = values.len() as f64;
    let mut terms: Vec<f64> = counts
        .values()
        .map(|&c| {
            let p = c as f64 / n;
            -p * p.log2()
        })
        .collect();
    // Hash order varies between runs; sort for a reproducible sum.
    terms.sort_by(f64::total_cmp);
    pairwise_sum(&terms)
}

/// Formats a PSNR value, writing infinity as `inf`.
pub fn format_psnr(psnr: f64) -> String {
    if psnr.is_infinite() {
        "inf".into()
    } else {
        format!("{psnr:.4}")
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QualityReport {
    pub max_abs_error: f64,
    pub psnr: f64,
    pub compression_ratio: f64,
    /// Bits per scalar.
    pub bit_rate: f64,
    /// Bytes per second, measured on the original size.
    pub compress_throughput: f64,
    pub decompress_throughput: f64,
}

/// Sizes and timings of one compression run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunStats {
    pub original_bytes: u64,
    pub compressed_bytes: u64,
    pub compress_seconds: f64,
    pub decompress_seconds: f64,
}

impl QualityReport {
    pub const FIELDS: [&'static str; 6] = [
        "max_abs_error",
        "psnr",
        "compression_ratio",
        "bit_rate",
        "compress_throughput",
        "decompress_throughput",
    ];

    /// PSNR falls back to infinity for constant data, where it is undefined.
    pub fn compute(original: &[Frame], reconstructed: &[Frame], run: RunStats) -> Result<Self> {
        let max_abs_error = max_error(original, reconstructed)?;
        let psnr = match psnr(original, reconstructed) {
            Err(Error::ZeroRange | Error::EmptyInput) if max_abs_error == 0.0 => f64::INFINITY,
            r => r?,
        };
        let scalars: u64 = original.iter().map(|f| f.coords().len() as u64).sum();
        Ok(QualityReport {
            max_abs_error,
            psnr,
            compression_ratio: compression_ratio(run.original_bytes, run.compressed_bytes),
            bit_rate: bit_rate(run.compressed_bytes, scalars),
            compress_throughput: throughput(run.original_bytes, run.compress_seconds),
            decompress_throughput: throughput(run.original_bytes, run.decompress_seconds),
        })
    }

    fn values(&self) -> [String; 6] {
        [
            format!("{:e}", self.max_abs_error),
            format_psnr(self.psnr),
            format!("{:.6}", self.compression_ratio),
            format!("{:.6}", self.bit_rate),
            format!("{:.1}", self.compress_throughput),
            format!("{:.1}", self.decompress_throughput),
        ]
    }

    pub fn csv_header() -> String {
        Self::FIELDS.join(",")
    }

    pub fn to_csv_row(&self) -> String {
        self.values().join(",")
    }

    /// One `key=value` per line.
    pub fn to_key_value(&self) -> String {
        let mut out = String::new();
        for (k, v) in Self::FIELDS.iter().zip(self.values()) {
            writeln!(out, "{k}={v}").expect("writing to a String");
        }
        out
    }
}
