//! Error-bounded lossy compression for multi-frame particle data.
//!
//! Every reconstructed coordinate lies within a user-chosen absolute bound
//! `eb` of the original. A frame is coded either spatially (quantize, group
//! particles into blocks, entropy-code the block streams) or temporally (code
//! the cell differences against the previous reconstructed frame). A small
//! state machine picks between the two while keeping trial compressions
//! rare. Frames are grouped into batches so any single frame can be decoded
//! from its batch plus at most one anchor frame.
//!
//! ```
//! use lcp::{compress_dataset, decompress_all, CodecConfig, Frame};
//!
//! let frames: Vec<Frame> = (0..4)
//!     .map(|t| {
//!         let coords = (0..300).map(|i| (i as f64).sin() + 0.001 * t as f64).collect();
//!         Frame::new(t, 3, coords).unwrap()
//!     })
//!     .collect();
//! let archive = compress_dataset(&frames, &CodecConfig::new(1e-3)).unwrap();
//! let restored = decompress_all(&archive).unwrap();
//! assert!(lcp::metrics::max_error(&frames, &restored).unwrap() <= 1e-3);
//! ```

pub mod coding;
pub mod container;
pub mod error;
pub mod metrics;
pub mod model;
pub mod quantizer;
pub mod scheduler;
pub mod spatial;
pub mod synth;
pub mod temporal;
mod wire;

pub use container::{read_archive, read_header, write_archive, ArchiveReader};
pub use error::{Error, Result};
pub use model::{
    AnchorScale, Archive, ArchiveInfo, BlockSize, CodecConfig, CompressedFrame, Frame, Location, Method,
    Precision, QuantGrid, QuantizedFrame,
};
pub use scheduler::{
    compress_dataset, compress_dataset_with_report, decompress_all, decompress_frame, decompress_range,
};
pub use coding::Backend;

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    pub struct Introduction;
    #[doc = include_str!("../../../book/src/quantization.md")]
    pub struct Quantization;
    #[doc = include_str!("../../../book/src/spatial.md")]
    pub struct Spatial;
    #[doc = include_str!("../../../book/src/coding.md")]
    pub struct Coding;
    #[doc = include_str!("../../../book/src/temporal.md")]
    pub struct Temporal;
    #[doc = include_str!("../../../book/src/selection.md")]
    pub struct Selection;
    #[doc = include_str!("../../../book/src/batches.md")]
    pub struct Batches;
    #[doc = include_str!("../../../book/src/container.md")]
    pub struct Container;
    #[doc = include_str!("../../../book/src/cli.md")]
    pub struct Cli;
    #[doc = include_str!("../../../README.md")]
    pub struct Readme;
}
