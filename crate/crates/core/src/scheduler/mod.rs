//! Multi-frame compression.
//!
//! Frames are grouped into batches of `batch_size` consecutive frames. Inside
//! a batch each frame may be coded temporally against its predecessor. The
//! first frame of a batch may only refer to the most recent *anchor*: a
//! batch-first frame that was coded spatially. Anchors are kept in their own
//! array, so decoding any frame needs at most its batch's chain plus one
//! anchor.
//!
//! When the first two frames are strongly correlated, anchors are coded with
//! the tighter bound `eb / kappa`. Every frame still meets `eb`.

mod fsm;
mod optimize;
mod retrieve;

pub use fsm::{
    fsm_step, select_method, Correlation, FrameCodec, FsmState, Observed, Selection, SelectionInput,
    SelectionTrace, SelectorCache, SizeSlot, MAX_SKIP,
};
pub use optimize::{
    detect_temporal_correlation, optimize_block_size, subsample, sweep_block_sizes, MAX_BLOCK_EXP,
    SAMPLE_LIMIT,
};
pub use retrieve::{decompress_all, decompress_frame, decompress_range, Counting, FrameSource};

use crate::error::{Error, Result};
use crate::model::{
    AnchorScale, Archive, ArchiveInfo, BlockSize, CodecConfig, CompressedFrame, Frame, Method,
    DEFAULT_ANCHOR_SCALE,
};
use crate::spatial::{encode_spatial, Encoded, SpatialOptions};
use crate::temporal::encode_temporal;

/// The spatial and temporal codecs with fixed settings.
#[derive(Debug, Clone, Copy)]
pub struct LcpCodec {
    pub block_size: u32,
    pub spatial: SpatialOptions,
}

impl FrameCodec for LcpCodec {
    type Output = Encoded;

    fn spatial(&mut self, frame: &Frame, eb: f64) -> Result<Encoded> {
        encode_spatial(frame, eb, self.block_size, self.spatial)
    }

    fn temporal(&mut self, frame: &Frame, reference: &Frame, reference_index: u64, eb: f64) -> Result<Encoded> {
        encode_temporal(
            frame,
            reference,
            reference_index,
            eb,
            self.spatial.backend,
            self.spatial.precision,
        )
    }

    fn size(output: &Encoded) -> usize {
        output.frame.len()
    }
}

/// One frame's record in a [`CompressionReport`].
#[derive(Debug, Clone, PartialEq)]
pub struct FrameReport {
    pub index: u64,
    pub batch_first: bool,
    /// Bound handed to the spatial codec.
    pub spatial_eb: f64,
    pub block_size: u32,
    pub size: usize,
    pub trace: SelectionTrace,
}

/// Decisions taken while compressing a dataset.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct CompressionReport {
    /// Block size used for the first batch.
    pub block_size: u32,
    pub kappa: u32,
    pub correlation: Correlation,
    pub frames: Vec<FrameReport>,
}

impl CompressionReport {
    /// Temporal runs whose output was thrown away.
    pub fn wasted_temporal_runs(&self) -> usize {
        self.frames.iter().filter(|f| f.trace.wasted_temporal_run()).count()
    }
}

fn check_shapes(frames: &[Frame]) -> Result<()> {
    let Some(first) = frames.first() else {
        return Ok(());
    };
    for (i, f) in frames.iter().enumerate() {
        if f.dims() != first.dims() {
            return Err(Error::DimensionMismatch {
                expected: first.dims(),
                found: f.dims(),
            }
            .in_frame(i as u64));
        }
    }
    Ok(())
}

fn choose_block_size(config: &CodecConfig, sample: &Frame, opts: SpatialOptions) -> Result<u32> {
    match config.block_size {
        BlockSize::Fixed(p) => Ok(p),
        BlockSize::Auto | BlockSize::AutoPerBatch => {
            if sample.is_empty() {
                return Ok(1);
            }
            let p = optimize_block_size(sample, config.eb, opts)?;
            log::info!("block size sweep on frame {} chose p = {p}", sample.index());
            Ok(p)
        }
    }
}

/// Compresses a dataset. Frames are renumbered `0..len` by position.
pub fn compress_dataset(frames: &[Frame], config: &CodecConfig) -> Result<Archive> {
    Ok(compress_dataset_with_report(frames, config)?.0)
}

/// [`compress_dataset`], also returning the per-frame decisions.
pub fn compress_dataset_with_report(
    frames: &[Frame],
    config: &CodecConfig,
) -> Result<(Archive, CompressionReport)> {
    config.validate()?;
    check_shapes(frames)?;
    let opts = SpatialOptions {
        order_preserving: config.order_preserving,
        backend: config.backend,
        precision: config.precision,
    };
    let mut report = CompressionReport {
        kappa: 1,
        ..Default::default()
    };
    let frames: Vec<Frame> = frames.iter().enumerate().map(|(i, f)| f.clone().with_index(i as u64)).collect();
    let dims = frames.first().map_or(0, Frame::dims);

    let mut codec = LcpCodec {
        block_size: match frames.first() {
            Some(f) => choose_block_size(config, f, opts).map_err(|e| e.in_frame(0))?,
            None => 1,
        },
        spatial: opts,
    };
    report.block_size = codec.block_size;

    let mut cache = SelectorCache::default();
    report.kappa = match config.anchor_scale {
        AnchorScale::Fixed(k) => k,
        AnchorScale::Auto => {
            if frames.len() >= 2 {
                let c = detect_temporal_correlation(&frames[0], &frames[1], config.eb, codec.block_size, opts)
                    .map_err(|e| e.in_frame(1))?;
                cache.temporal_correlation = c;
                report.correlation = c;
                log::info!("temporal correlation {c:?}");
            }
            if cache.temporal_correlation == Correlation::High {
                DEFAULT_ANCHOR_SCALE
            } else {
                1
            }
        }
    };
    let anchor_eb = config.eb / f64::from(report.kappa);

    let batch_size = config.batch_size;
    let mut batches: Vec<Vec<CompressedFrame>> = Vec::new();
    let mut anchors = Vec::new();
    let mut state = FsmState::ForcedSpatial;
    let mut previous: Option<Frame> = None;

    for (b, batch) in frames.chunks(batch_size).enumerate() {
        if b > 0 && config.block_size == BlockSize::AutoPerBatch {
            codec.block_size = choose_block_size(config, &batch[0], opts).map_err(|e| e.in_frame(batch[0].index()))?;
        }
        let mut stored = Vec::with_capacity(batch.len());
        for (slot, frame) in batch.iter().enumerate() {
            let index = frame.index();
            let batch_first = slot == 0;
            // Held outside the cache while the selector borrows it mutably.
            let anchor = cache.last_anchor.take();
            let reference = if batch_first {
                anchor.as_ref().map(|(i, f)| (f, *i))
            } else {
                previous.as_ref().map(|f| (f, index - 1))
            };
            let spatial_eb = if batch_first { anchor_eb } else { config.eb };
            let input = SelectionInput {
                frame,
                reference,
                eb: config.eb,
                spatial_eb,
                slot: if batch_first { SizeSlot::Anchor } else { SizeSlot::Frame },
            };
            let selection = select_method(&mut codec, input, state, &mut cache).map_err(|e| e.in_frame(index))?;
            cache.last_anchor = anchor;
            state = selection.next_state;
            let Encoded { frame: cf, reconstructed } = selection.output;
            log::debug!("frame {index}: {:?} {} bytes", selection.method, cf.len());
            report.frames.push(FrameReport {
                index,
                batch_first,
                spatial_eb,
                block_size: codec.block_size,
                size: cf.len(),
                trace: selection.trace,
            });
            if batch_first && selection.method == Method::Spatial {
                anchors.push(cf);
                cache.last_anchor = Some((index, reconstructed.clone()));
            } else {
                stored.push(cf);
            }
            previous = Some(reconstructed);
        }
        batches.push(stored);
    }

    let info = ArchiveInfo {
        dims,
        frame_count: frames.len() as u64,
        batch_size,
        eb: config.eb,
        kappa: report.kappa,
        block_size: report.block_size,
        precision: config.precision,
        backend: config.backend,
        order_preserving: config.order_preserving,
        eb_scaling_active: report.kappa > 1,
    };
    Ok((Archive::new(info, batches, anchors)?, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn noise(seed: u64, n: usize) -> Frame {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Frame::new(0, 3, (0..n * 3).map(|_| rng.gen::<f64>() * 4.0).collect()).unwrap()
    }

    fn config(eb: f64, batch: usize) -> CodecConfig {
        CodecConfig {
            block_size: BlockSize::Fixed(16),
            batch_size: batch,
            ..CodecConfig::new(eb)
        }
    }

    #[test]
    fn static_frames_are_temporal_after_the_first() {
        let f = noise(1, 500);
        let frames = vec![f; 32];
        let archive = compress_dataset(&frames, &config(1e-3, 16)).unwrap();
        assert_eq!(archive.anchors().len(), 1);
        assert_eq!(archive.anchors()[0].frame_index(), 0);
        assert_eq!(archive.count_by_method(Method::Temporal), 31);
        assert_eq!(archive.get(16).unwrap().reference(), Some(0));
        assert_eq!(archive.get(17).unwrap().reference(), Some(16));
    }

    #[test]
    fn noise_frames_are_all_spatial() {
        let frames: Vec<Frame> = (0..32).map(|s| noise(s, 500)).collect();
        // With tiny blocks every noise particle sits alone and the order
        // stream makes spatial lose; the block-size sweep avoids that.
        let (archive, report) = compress_dataset_with_report(&frames, &CodecConfig::new(1e-3)).unwrap();
        assert!(report.block_size >= 256);
        assert_eq!(report.correlation, Correlation::Low);
        assert_eq!(archive.count_by_method(Method::Spatial), 32);
        let anchors: Vec<u64> = archive.anchors().iter().map(CompressedFrame::frame_index).collect();
        assert_eq!(anchors, vec![0, 16]);
    }

    #[test]
    fn every_frame_round_trips() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut f = noise(2, 300);
        let mut frames = Vec::new();
        for _ in 0..20 {
            frames.push(f.clone());
            let coords = f.coords().iter().map(|x| x + (rng.gen::<f64>() - 0.5) * 1e-3).collect();
            f = Frame::new(0, 3, coords).unwrap();
        }
        for batch in [1, 3, 8] {
            let eb = 1e-3;
            let archive = compress_dataset(&frames, &config(eb, batch)).unwrap();
            let all = decompress_all(&archive).unwrap();
            for (i, (orig, rec)) in frames.iter().zip(&all).enumerate() {
                assert_eq!(rec.index(), i as u64);
                for (a, b) in orig.coords().iter().zip(rec.coords()) {
                    assert!((a - b).abs() <= eb);
                }
                assert_eq!(&archive.decompress_frame(i as u64).unwrap(), rec);
            }
        }
    }

    #[test]
    fn particle_count_change_falls_back_to_spatial() {
        let frames = vec![noise(1, 100), noise(1, 100), noise(1, 50), noise(1, 50)];
        let archive = compress_dataset(&frames, &config(1e-2, 4)).unwrap();
        assert_eq!(archive.get(1).unwrap().method(), Method::Temporal);
        assert_eq!(archive.get(2).unwrap().method(), Method::Spatial);
        let all = decompress_all(&archive).unwrap();
        assert_eq!(all[3].len(), 50);
    }

    #[test]
    fn dimension_change_is_rejected() {
        let frames = vec![noise(1, 10), Frame::new(0, 2, vec![0.0; 4]).unwrap()];
        let err = compress_dataset(&frames, &config(1e-2, 4)).unwrap_err();
        assert!(matches!(err, Error::Frame { index: 1, .. }));
    }

    #[test]
    fn empty_dataset() {
        let archive = compress_dataset(&[], &CodecConfig::new(0.1)).unwrap();
        assert_eq!(archive.frame_count(), 0);
        assert!(decompress_all(&archive).unwrap().is_empty());
    }

    #[test]
    fn retrieval_touches_at_most_batch_plus_one() {
        let frames = vec![noise(3, 200); 40];
        let archive = compress_dataset(&frames, &config(1e-3, 16)).unwrap();
        for i in 0..40u64 {
            let mut src = Counting::new(&archive);
            decompress_frame(&mut src, i).unwrap();
            assert!(src.touches <= 17);
            if i == 0 {
                assert_eq!(src.touches, 1);
            }
            if i == 31 {
                assert_eq!(src.touches, 17);
            }
        }
        assert!(matches!(archive.decompress_frame(40), Err(Error::FrameNotFound(40))));
    }

    #[test]
    fn anchors_use_the_scaled_bound() {
        let frames = vec![noise(4, 300); 8];
        let cfg = CodecConfig {
            anchor_scale: AnchorScale::Auto,
            ..config(1e-2, 4)
        };
        let (archive, report) = compress_dataset_with_report(&frames, &cfg).unwrap();
        assert_eq!(report.correlation, Correlation::High);
        assert_eq!(report.kappa, 5);
        assert!(archive.info().eb_scaling_active);
        let anchor = &archive.anchors()[0];
        assert!(anchor.effective_eb() <= 1e-2 / 5.0);
        assert!(anchor.effective_eb() > 0.99 * 1e-2 / 5.0);
    }
}
