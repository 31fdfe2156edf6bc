use std::fs::File;
use std::fmt::Display;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;
use std::time::Instant;

use lcp::metrics::{self, format_psnr, QualityReport, RunStats};
use lcp::model::{AnchorScale, BlockSize};
use lcp::scheduler::Counting;
use lcp::synth::SynthParams;
use lcp::{ArchiveReader, CodecConfig, Error, Frame, Method};

use crate::input::{read_frames, Format, FrameWriter, Shape};
use crate::{BoundArgs, CliError, CodecArgs};

/// Prints a line; a closed pipe (for example `| head`) is not an error.
fn emit(line: impl Display) -> Result<(), CliError> {
    match writeln!(std::io::stdout().lock(), "{line}") {
        Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => Err(CliError::io(Path::new("<stdout>"), e)),
        _ => Ok(()),
    }
}

fn create(path: &Path) -> Result<BufWriter<File>, CliError> {
    File::create(path).map(BufWriter::new).map_err(|e| CliError::io(path, e))
}

fn original_bytes(frames: &[Frame], format: Format) -> u64 {
    let scalars: usize = frames.iter().map(|f| f.coords().len()).sum();
    (scalars * format.precision().bytes()) as u64
}

fn absolute_bound(bound: &BoundArgs, frames: &[Frame]) -> Result<f64, CliError> {
    if let Some(eb) = bound.eb {
        return Ok(eb);
    }
    let rel = bound.eb_rel.expect("clap requires one of --eb and --eb-rel");
    if !(rel > 0.0 && rel.is_finite()) {
        return Err(CliError::Usage(format!("--eb-rel must be positive, got {rel}")));
    }
    let (lo, hi) = frames
        .iter()
        .flat_map(|f| f.coords())
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &x| (lo.min(x), hi.max(x)));
    if !(hi > lo) {
        return Err(CliError::Usage("--eb-rel needs data with a non-zero value range".into()));
    }
    let eb = rel * (hi - lo);
    log::info!("relative bound {rel} over range {} gives eb = {eb:e}", hi - lo);
    Ok(eb)
}

pub fn compress(
    source: &Path,
    format: Format,
    shape: Option<Shape>,
    bound: &BoundArgs,
    codec: &CodecArgs,
    archive_path: &Path,
) -> Result<(), CliError> {
    let frames = read_frames(source, format, shape)?;
    let config = CodecConfig {
        eb: absolute_bound(bound, &frames)?,
        batch_size: codec.batch,
        block_size: codec.block_size,
        anchor_scale: codec.anchor_scale,
        order_preserving: !codec.no_order,
        precision: format.precision(),
        ..CodecConfig::new(1.0)
    };
    let start = Instant::now();
    let (archive, report) = lcp::compress_dataset_with_report(&frames, &config)?;
    let written = lcp::write_archive(&archive, create(archive_path)?)?;
    let seconds = start.elapsed().as_secs_f64();

    let scalars: u64 = frames.iter().map(|f| f.coords().len() as u64).sum();
    emit(format_args!(
        "frames={} spatial={} temporal={} anchors={} block_size={} kappa={} ratio={:.4} bit_rate={:.4} seconds={:.3}",
        archive.frame_count(),
        archive.count_by_method(Method::Spatial),
        archive.count_by_method(Method::Temporal),
        archive.anchors().len(),
        report.block_size,
        report.kappa,
        metrics::compression_ratio(original_bytes(&frames, format), written),
        metrics::bit_rate(written, scalars),
        seconds,
    ))
}

pub fn decompress(
    archive_path: &Path,
    frames: Option<(u64, u64)>,
    format: Option<Format>,
    output: &Path,
) -> Result<(), CliError> {
    let file = File::open(archive_path).map_err(|e| CliError::io(archive_path, e))?;
    let reader = ArchiveReader::new(BufReader::new(file))?;
    let info = reader.info().clone();
    let (first, last) = match frames {
        Some(r) => r,
        None if info.frame_count == 0 => (0, 0),
        None => (0, info.frame_count - 1),
    };
    if frames.is_some() && last >= info.frame_count {
        return Err(Error::FrameNotFound(last).into());
    }
    let range = if info.frame_count == 0 { 0..0 } else { first..last + 1 };

    let mut source = Counting::new(reader);
    let out = lcp::decompress_range(&mut source, range)?;
    let format = format.unwrap_or(Format::for_precision(info.precision));
    let mut writer = FrameWriter::new(create(output)?, format);
    for f in &out {
        writer.write(f).map_err(|e| CliError::io(output, e))?;
    }
    writer.finish().map_err(|e| CliError::io(output, e))?;
    emit(format_args!("frames={} decoded={}", out.len(), source.touches))
}

fn is_archive(path: &Path) -> Result<bool, CliError> {
    let mut magic = [0u8; 4];
    let mut file = File::open(path).map_err(|e| CliError::io(path, e))?;
    match file.read_exact(&mut magic) {
        Ok(()) => Ok(magic == lcp::container::MAGIC),
        Err(e) if e.kind() == std::io::ErrorKind::UnexpectedEof => Ok(false),
        Err(e) => Err(CliError::io(path, e)),
    }
}

fn psnr_or_inf(original: &[Frame], other: &[Frame], max_err: f64) -> Result<String, CliError> {
    match metrics::psnr(original, other) {
        Ok(p) => Ok(format_psnr(p)),
        Err(Error::ZeroRange | Error::EmptyInput) if max_err == 0.0 => Ok("inf".into()),
        Err(e) => Err(e.into()),
    }
}

pub fn metrics(
    original: &Path,
    format: Format,
    shape: Option<Shape>,
    other: &Path,
    other_format: Option<Format>,
    csv: bool,
) -> Result<(), CliError> {
    let frames = read_frames(original, format, shape)?;
    let mut fields: Vec<(String, String)> = Vec::new();
    let reconstructed = if is_archive(other)? {
        let file = File::open(other).map_err(|e| CliError::io(other, e))?;
        let compressed = file.metadata().map_err(|e| CliError::io(other, e))?.len();
        let start = Instant::now();
        let archive = lcp::read_archive(BufReader::new(file))?;
        let back = lcp::decompress_all(&archive)?;
        let seconds = start.elapsed().as_secs_f64();
        let original = original_bytes(&frames, format);
        let scalars: u64 = frames.iter().map(|f| f.coords().len() as u64).sum();
        fields.push(("compression_ratio".into(), format!("{:.6}", metrics::compression_ratio(original, compressed))));
        fields.push(("bit_rate".into(), format!("{:.6}", metrics::bit_rate(compressed, scalars))));
        fields.push((
            "decompress_throughput".into(),
            format!("{:.1}", metrics::throughput(original, seconds)),
        ));
        back
    } else {
        read_frames(other, other_format.unwrap_or(format), shape)?
    };

    let max_err = metrics::max_error(&frames, &reconstructed)?;
    let mut out = vec![
        ("max_abs_error".to_string(), format!("{max_err:e}")),
        ("psnr".to_string(), psnr_or_inf(&frames, &reconstructed, max_err)?),
    ];
    for (k, p) in metrics::psnr_per_dimension(&frames, &reconstructed)?.into_iter().enumerate() {
        out.push((format!("psnr_dim{k}"), format_psnr(p)));
    }
    out.extend(fields);

    if csv {
        let keys: Vec<&str> = out.iter().map(|(k, _)| k.as_str()).collect();
        let values: Vec<&str> = out.iter().map(|(_, v)| v.as_str()).collect();
        emit(keys.join(","))?;
        emit(values.join(","))?;
    } else {
        for (k, v) in out {
            emit(format_args!("{k}={v}"))?;
        }
    }
    Ok(())
}

pub fn gen(params: &SynthParams, format: Format, output: &Path) -> Result<(), CliError> {
    let frames = lcp::synth::generate(params)?;
    let mut writer = FrameWriter::new(create(output)?, format);
    for f in &frames {
        writer.write(f).map_err(|e| CliError::io(output, e))?;
    }
    writer.finish().map_err(|e| CliError::io(output, e))?;
    emit(format_args!("shape={},{},{}", params.particles, params.dims, params.frames))
}

pub struct BenchGrid {
    pub ebs: Vec<f64>,
    pub block_sizes: Vec<BlockSize>,
    pub batches: Vec<usize>,
    pub anchor_scale: AnchorScale,
    pub order_preserving: bool,
    pub timing: bool,
}

fn block_size_label(b: BlockSize) -> String {
    match b {
        BlockSize::Auto => "auto".into(),
        BlockSize::AutoPerBatch => "auto-batch".into(),
        BlockSize::Fixed(p) => p.to_string(),
    }
}

pub fn bench(source: &Path, format: Format, shape: Option<Shape>, grid: &BenchGrid) -> Result<(), CliError> {
    let frames = read_frames(source, format, shape)?;
    let original = original_bytes(&frames, format);
    let mut header = "eb,block_size,batch,chosen_p,kappa,max_abs_error,psnr,compression_ratio,bit_rate".to_string();
    if grid.timing {
        header.push_str(",compress_throughput,decompress_throughput");
    }
    emit(header)?;
    for &eb in &grid.ebs {
        for &block_size in &grid.block_sizes {
            for &batch in &grid.batches {
                let config = CodecConfig {
                    eb,
                    batch_size: batch,
                    block_size,
                    anchor_scale: grid.anchor_scale,
                    order_preserving: grid.order_preserving,
                    precision: format.precision(),
                    ..CodecConfig::new(eb)
                };
                let start = Instant::now();
                let (archive, report) = lcp::compress_dataset_with_report(&frames, &config)?;
                let bytes = lcp::container::to_bytes(&archive)?;
                let compress_seconds = start.elapsed().as_secs_f64();
                let start = Instant::now();
                let back = lcp::decompress_all(&lcp::container::from_bytes(&bytes)?)?;
                let decompress_seconds = start.elapsed().as_secs_f64();
                let run = RunStats {
                    original_bytes: original,
                    compressed_bytes: bytes.len() as u64,
                    compress_seconds,
                    decompress_seconds,
                };
                let q = QualityReport::compute(&frames, &back, run)?;
                let mut row = format!(
                    "{eb:e},{},{batch},{},{},{:e},{},{:.6},{:.6}",
                    block_size_label(block_size),
                    report.block_size,
                    report.kappa,
                    q.max_abs_error,
                    format_psnr(q.psnr),
                    q.compression_ratio,
                    q.bit_rate,
                );
                if grid.timing {
                    row.push_str(&format!(",{:.1},{:.1}", q.compress_throughput, q.decompress_throughput));
                }
                emit(row)?;
            }
        }
    }
    Ok(())
}
