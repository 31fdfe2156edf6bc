//! Method-selection state machine.
//!
//! Testing the temporal codec on a frame that ends up spatial is wasted
//! work. After a spatial win the machine skips the test for a growing number
//! of frames (1, 3, 7, 15, then 31 at the cap) before comparing again, so on
//! data where spatial always wins roughly one frame in 32 pays for a test.
//! Any temporal win switches to [`FsmState::TemporalRun`], where the
//! temporal run is the compression itself and comparison is free.

use crate::error::{Error, Result};
use crate::model::{Frame, Method};

/// Longest skip cycle.
pub const MAX_SKIP: u32 = 32;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum FsmState {
    /// Spatial without testing, then [`FsmState::Compare`].
    ForcedSpatial,
    /// Test the temporal codec against the cached spatial size.
    Compare,
    /// Cycle of `k` frames: `remaining` untested spatial frames, then a
    /// compare point (`remaining == 0`).
    SkipS { k: u32, remaining: u32 },
    /// The temporal codec won last time; keep using it while it beats the
    /// cached spatial size.
    TemporalRun,
}

impl FsmState {
    /// Whether this state runs the temporal codec.
    pub fn tests_temporal(self) -> bool {
        match self {
            FsmState::ForcedSpatial => false,
            FsmState::Compare | FsmState::TemporalRun => true,
            FsmState::SkipS { remaining, .. } => remaining == 0,
        }
    }

    fn skip(k: u32) -> Self {
        let k = k.min(MAX_SKIP);
        FsmState::SkipS { k, remaining: k - 1 }
    }
}

/// Outcome observed for one frame.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Observed {
    SChosen,
    TChosen,
}

impl From<Method> for Observed {
    fn from(m: Method) -> Self {
        match m {
            Method::Spatial => Observed::SChosen,
            Method::Temporal => Observed::TChosen,
        }
    }
}

pub fn fsm_step(state: FsmState, observed: Observed) -> FsmState {
    use FsmState::*;
    match (state, observed) {
        (ForcedSpatial, _) => Compare,
        (_, Observed::TChosen) => TemporalRun,
        (Compare, Observed::SChosen) => FsmState::skip(2),
        (SkipS { k, remaining: 0 }, Observed::SChosen) => FsmState::skip(2 * k),
        (SkipS { k, remaining }, Observed::SChosen) => SkipS {
            k,
            remaining: remaining - 1,
        },
        (TemporalRun, Observed::SChosen) => Compare,
    }
}

/// Degree of frame-to-frame redundancy found by the correlation probe.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum Correlation {
    High,
    Low,
    #[default]
    Unknown,
}

/// Which cached spatial size a comparison uses. Anchors are compressed under
/// a tighter bound, so their sizes are tracked separately.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SizeSlot {
    Frame,
    Anchor,
}

#[derive(Debug, Clone, Default)]
pub struct SelectorCache {
    /// Size of the most recent spatially compressed non-anchor frame.
    pub last_spatial_size: Option<usize>,
    /// Same, for batch-first frames compressed under the anchor bound.
    pub last_anchor_spatial_size: Option<usize>,
    /// Index and reconstruction of the most recent anchor.
    pub last_anchor: Option<(u64, Frame)>,
    pub temporal_correlation: Correlation,
}

impl SelectorCache {
    pub fn spatial_size(&self, slot: SizeSlot) -> Option<usize> {
        match slot {
            SizeSlot::Frame => self.last_spatial_size,
            SizeSlot::Anchor => self.last_anchor_spatial_size,
        }
    }

    fn record_spatial(&mut self, slot: SizeSlot, size: usize) {
        match slot {
            SizeSlot::Frame => self.last_spatial_size = Some(size),
            SizeSlot::Anchor => self.last_anchor_spatial_size = Some(size),
        }
    }
}

/// The two codecs as seen by the selector. Implemented by
/// [`LcpCodec`](super::LcpCodec) and by test doubles.
pub trait FrameCodec {
    type Output;

    fn spatial(&mut self, frame: &Frame, eb: f64) -> Result<Self::Output>;

    fn temporal(&mut self, frame: &Frame, reference: &Frame, reference_index: u64, eb: f64) -> Result<Self::Output>;

    fn size(output: &Self::Output) -> usize;
}

/// One frame's selection problem.
#[derive(Debug, Clone, Copy)]
pub struct SelectionInput<'a> {
    pub frame: &'a Frame,
    /// Reconstructed reference and its index, if any.
    pub reference: Option<(&'a Frame, u64)>,
    /// Bound for the temporal codec.
    pub eb: f64,
    /// Bound for the spatial codec (tighter for anchors).
    pub spatial_eb: f64,
    pub slot: SizeSlot,
}

/// What the selector did for one frame.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SelectionTrace {
    pub state: FsmState,
    pub method: Method,
    pub spatial_size: Option<usize>,
    pub temporal_size: Option<usize>,
    /// Cached spatial size the temporal result was compared with.
    pub cached_spatial_size: Option<usize>,
}

impl SelectionTrace {
    /// The temporal codec ran but its output was discarded.
    pub fn wasted_temporal_run(&self) -> bool {
        self.temporal_size.is_some() && self.method == Method::Spatial
    }
}

#[derive(Debug)]
pub struct Selection<O> {
    pub method: Method,
    pub output: O,
    pub next_state: FsmState,
    pub trace: SelectionTrace,
}

/// Chooses and runs the codec for one frame. Outputs produced while
/// comparing are returned, never recomputed.
pub fn select_method<C: FrameCodec>(
    codec: &mut C,
    input: SelectionInput<'_>,
    state: FsmState,
    cache: &mut SelectorCache,
) -> Result<Selection<C::Output>> {
    let cached = cache.spatial_size(input.slot);
    let mut trace = SelectionTrace {
        state,
        method: Method::Spatial,
        spatial_size: None,
        temporal_size: None,
        cached_spatial_size: cached,
    };

    let temporal = match input.reference {
        Some((reference, index)) if state.tests_temporal() => {
            match codec.temporal(input.frame, reference, index, input.eb) {
                Ok(t) => Some(t),
                Err(Error::ParticleCountMismatch { .. } | Error::QuantRangeOverflow(_)) => None,
                Err(e) => return Err(e),
            }
        }
        _ => None,
    };

    let (method, output) = match temporal {
        Some(t) => {
            let t_size = C::size(&t);
            trace.temporal_size = Some(t_size);
            if cached.is_some_and(|s| t_size <= s) {
                (Method::Temporal, t)
            } else {
                let s = codec.spatial(input.frame, input.spatial_eb)?;
                let s_size = C::size(&s);
                trace.spatial_size = Some(s_size);
                cache.record_spatial(input.slot, s_size);
                if t_size <= s_size {
                    (Method::Temporal, t)
                } else {
                    (Method::Spatial, s)
                }
            }
        }
        None => {
            let s = codec.spatial(input.frame, input.spatial_eb)?;
            let s_size = C::size(&s);
            trace.spatial_size = Some(s_size);
            cache.record_spatial(input.slot, s_size);
            (Method::Spatial, s)
        }
    };
    trace.method = method;
    Ok(Selection {
        method,
        output,
        next_state: fsm_step(state, method.into()),
        trace,
    })
}
