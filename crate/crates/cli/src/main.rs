use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use lcp::model::{AnchorScale, BlockSize};
use lcp::synth::SynthModel;

mod commands;
mod input;

use input::{Format, Shape};

/// Error-bounded lossy compression for multi-frame particle data.
///
/// Exit codes: 0 ok, 1 I/O failure, 2 usage or invalid input, 3 frame not
/// found, 4 corrupt archive, 5 quantization overflow. Set LCP_LOG (for
/// example LCP_LOG=info) to see codec decisions.
#[derive(Debug, Parser)]
#[command(name = "lcp", version)]
struct Cli {
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct InputArgs {
    #[arg(long, value_enum, default_value = "raw-f32")]
    format: Format,

    /// Particles per frame, dimensions and frame count for raw input.
    #[arg(long, value_name = "N,d,F")]
    shape: Option<Shape>,
}

#[derive(Debug, Args)]
#[group(required = true, multiple = false)]
struct BoundArgs {
    /// Absolute error bound.
    #[arg(long)]
    eb: Option<f64>,

    /// Error bound relative to the global value range.
    #[arg(long)]
    eb_rel: Option<f64>,
}

#[derive(Debug, Args)]
struct CodecArgs {
    #[arg(long, default_value_t = 16)]
    batch: usize,

    /// `auto` or a block size in quantization cells.
    #[arg(long, default_value = "auto", value_parser = parse_block_size)]
    block_size: BlockSize,

    /// `auto` or the anchor error-bound divisor.
    #[arg(long, default_value = "auto", value_parser = parse_anchor_scale)]
    anchor_scale: AnchorScale,

    /// Allow particles to be reordered inside a frame.
    #[arg(long)]
    no_order: bool,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Compress a dataset into an archive.
    Compress {
        #[command(flatten)]
        input: InputArgs,
        #[command(flatten)]
        bound: BoundArgs,
        #[command(flatten)]
        codec: CodecArgs,
        source: PathBuf,
        archive: PathBuf,
    },
    /// Decompress an archive or an inclusive frame range of it.
    Decompress {
        /// Frames to extract, `a..b` inclusive or a single index.
        #[arg(long, value_parser = parse_frames)]
        frames: Option<(u64, u64)>,
        /// Output format (default: raw at the source precision).
        #[arg(long, value_enum)]
        format: Option<Format>,
        archive: PathBuf,
        output: PathBuf,
    },
    /// Compare an original dataset with an archive or reconstructed file.
    Metrics {
        #[command(flatten)]
        input: InputArgs,
        /// Format of a reconstructed file (default: same as the original).
        #[arg(long, value_enum)]
        other_format: Option<Format>,
        /// Print one CSV header and row instead of key=value lines.
        #[arg(long)]
        csv: bool,
        original: PathBuf,
        other: PathBuf,
    },
    /// Write a seeded synthetic dataset.
    Gen {
        #[arg(value_enum)]
        model: Model,
        #[arg(long, value_parser = input::parse_count)]
        n: usize,
        #[arg(long, value_parser = input::parse_count)]
        frames: usize,
        #[arg(long, default_value_t = 3)]
        dims: usize,
        /// Per-frame displacement scale.
        #[arg(long, default_value_t = 1e-3)]
        step: f64,
        /// Cluster count for the clusters model.
        #[arg(long, default_value_t = 8)]
        k: usize,
        #[arg(long = "box", default_value_t = 10.0)]
        box_size: f64,
        #[arg(long)]
        seed: u64,
        #[arg(long, value_enum, default_value = "raw-f32")]
        format: Format,
        output: PathBuf,
    },
    /// Sweep error bounds, block sizes and batch sizes; print CSV.
    Bench {
        #[command(flatten)]
        input: InputArgs,
        #[arg(long, value_delimiter = ',', default_value = "1e-1,1e-2,1e-3")]
        eb: Vec<f64>,
        #[arg(long, value_delimiter = ',', default_value = "auto", value_parser = parse_block_size)]
        block_size: Vec<BlockSize>,
        #[arg(long, value_delimiter = ',', default_value = "16")]
        batch: Vec<usize>,
        #[arg(long, default_value = "auto", value_parser = parse_anchor_scale)]
        anchor_scale: AnchorScale,
        #[arg(long)]
        no_order: bool,
        /// Leave out the throughput columns so output is reproducible.
        #[arg(long)]
        no_timing: bool,
        source: PathBuf,
    },
}

#[derive(Debug, Clone, Copy, clap::ValueEnum)]
enum Model {
    Static,
    Drift,
    Brownian,
    Clusters,
    Uniform,
}

impl From<Model> for SynthModel {
    fn from(m: Model) -> Self {
        match m {
            Model::Static => SynthModel::Static,
            Model::Drift => SynthModel::Drift,
            Model::Brownian => SynthModel::Brownian,
            Model::Clusters => SynthModel::Clusters,
            Model::Uniform => SynthModel::Uniform,
        }
    }
}

fn parse_block_size(s: &str) -> Result<BlockSize, String> {
    match s {
        "auto" => Ok(BlockSize::Auto),
        "auto-batch" => Ok(BlockSize::AutoPerBatch),
        _ => match s.parse::<u32>() {
            Ok(p) if p > 0 => Ok(BlockSize::Fixed(p)),
            _ => Err(format!("expected auto, auto-batch or a positive integer, got {s:?}")),
        },
    }
}

fn parse_anchor_scale(s: &str) -> Result<AnchorScale, String> {
    match s {
        "auto" => Ok(AnchorScale::Auto),
        _ => match s.parse::<u32>() {
            Ok(k) if k > 0 => Ok(AnchorScale::Fixed(k)),
            _ => Err(format!("expected auto or a positive integer, got {s:?}")),
        },
    }
}

fn parse_frames(s: &str) -> Result<(u64, u64), String> {
    let bad = || format!("expected a..b or an index, got {s:?}");
    let (a, b) = match s.split_once("..") {
        Some((a, b)) => (a.trim().parse().map_err(|_| bad())?, b.trim().parse().map_err(|_| bad())?),
        None => {
            let i = s.trim().parse().map_err(|_| bad())?;
            (i, i)
        }
    };
    if a > b {
        return Err(format!("empty range {s:?}"));
    }
    Ok((a, b))
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Codec(#[from] lcp::Error),
}

impl CliError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    fn exit_code(&self) -> u8 {
        use lcp::Error as E;
        match self {
            CliError::Usage(_) => 2,
            CliError::Io { .. } => 1,
            CliError::Codec(e) => match e.root() {
                E::Io(_) | E::SinkFailure(_) => 1,
                E::FrameNotFound(_) => 3,
                E::CorruptStream(_)
                | E::CountMismatch { .. }
                | E::BadMagic
                | E::UnsupportedVersion(_)
                | E::ChecksumMismatch(_) => 4,
                E::QuantRangeOverflow(_) => 5,
                _ => 2,
            },
        }
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Usage(format!("--threads: {e}")))?;
    }
    match cli.command {
        Command::Compress {
            input,
            bound,
            codec,
            source,
            archive,
        } => commands::compress(&source, input.format, input.shape, &bound, &codec, &archive),
        Command::Decompress {
            frames,
            format,
            archive,
            output,
        } => commands::decompress(&archive, frames, format, &output),
        Command::Metrics {
            input,
            other_format,
            csv,
            original,
            other,
        } => commands::metrics(&original, input.format, input.shape, &other, other_format, csv),
        Command::Gen {
            model,
            n,
            frames,
            dims,
            step,
            k,
            box_size,
            seed,
            format,
            output,
        } => {
            let params = lcp::synth::SynthParams {
                model: model.into(),
                particles: n,
                frames,
                dims,
                step,
                clusters: k,
                box_size,
                seed,
            };
            commands::gen(&params, format, &output)
        }
        Command::Bench {
            input,
            eb,
            block_size,
            batch,
            anchor_scale,
            no_order,
            no_timing,
            source,
        } => {
            let grid = commands::BenchGrid {
                ebs: eb,
                block_sizes: block_size,
                batches: batch,
                anchor_scale,
                order_preserving: !no_order,
                timing: !no_timing,
            };
            commands::bench(&source, input.format, input.shape, &grid)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("LCP_LOG", "warn"))
        .format_timestamp(None)
        .init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => e.exit(),
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let _ = writeln!(std::io::stderr(), "lcp: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn frame_ranges() {
        assert_eq!(parse_frames("17..17"), Ok((17, 17)));
        assert_eq!(parse_frames("3..9"), Ok((3, 9)));
        assert_eq!(parse_frames("4"), Ok((4, 4)));
        assert!(parse_frames("9..3").is_err());
        assert!(parse_frames("a..3").is_err());
    }

    #[test]
    fn exit_codes() {
        let code = |e: lcp::Error| CliError::Codec(e).exit_code();
        assert_eq!(code(lcp::Error::FrameNotFound(3)), 3);
        assert_eq!(code(lcp::Error::BadMagic), 4);
        assert_eq!(code(lcp::Error::QuantRangeOverflow("x".into())), 5);
        assert_eq!(code(lcp::Error::NonPositiveErrorBound(0.0)), 2);
        assert_eq!(CliError::Usage("x".into()).exit_code(), 2);
    }

    #[test]
    fn cli_definition_is_consistent() {
        use clap::CommandFactory;
        Cli::command().debug_assert();
    }
}
