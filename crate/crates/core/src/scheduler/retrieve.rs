//! Frame retrieval from an in-memory archive or a seekable file.

use std::borrow::Cow;
use std::collections::HashMap;
use std::ops::Range;

use crate::error::{Error, Result};
use crate::model::{Archive, CompressedFrame, Frame, Method};
use crate::spatial::decompress_spatial;
use crate::temporal::decompress_temporal;

/// Anything that can hand out compressed frames by index.
pub trait FrameSource {
    fn frame_count(&self) -> u64;

    fn fetch(&mut self, index: u64) -> Result<Cow<'_, CompressedFrame>>;
}

impl FrameSource for &Archive {
    fn frame_count(&self) -> u64 {
        Archive::frame_count(self)
    }

    fn fetch(&mut self, index: u64) -> Result<Cow<'_, CompressedFrame>> {
        self.get(index).map(Cow::Borrowed).ok_or(Error::FrameNotFound(index))
    }
}

/// Wraps a source and counts fetches.
#[derive(Debug)]
pub struct Counting<S> {
    pub inner: S,
    pub touches: usize,
}

impl<S> Counting<S> {
    pub fn new(inner: S) -> Self {
        Counting { inner, touches: 0 }
    }
}

impl<S: FrameSource> FrameSource for Counting<S> {
    fn frame_count(&self) -> u64 {
        self.inner.frame_count()
    }

    fn fetch(&mut self, index: u64) -> Result<Cow<'_, CompressedFrame>> {
        self.touches += 1;
        self.inner.fetch(index)
    }
}

fn fetch_owned<S: FrameSource + ?Sized>(source: &mut S, index: u64) -> Result<CompressedFrame> {
    let cf = source.fetch(index)?.into_owned();
    if cf.frame_index() != index {
        return Err(Error::corrupt(format!(
            "index entry {index} holds frame {}",
            cf.frame_index()
        )));
    }
    Ok(cf)
}

/// Reconstructs `index`, stopping the reference walk at any frame already in
/// `cache`. Newly decoded frames are added to the cache only when `keep` is
/// set.
fn reconstruct<S: FrameSource + ?Sized>(
    source: &mut S,
    index: u64,
    cache: &mut HashMap<u64, Frame>,
    keep: bool,
) -> Result<Frame> {
    if let Some(f) = cache.get(&index) {
        return Ok(f.clone());
    }
    let mut chain = Vec::new();
    let mut at = index;
    let mut base = loop {
        if let Some(f) = cache.get(&at) {
            break f.clone();
        }
        let cf = fetch_owned(source, at)?;
        match (cf.method(), cf.reference()) {
            (Method::Spatial, _) => {
                let f = decompress_spatial(&cf).map_err(|e| e.in_frame(at))?;
                if keep {
                    cache.insert(at, f.clone());
                }
                break f;
            }
            (Method::Temporal, Some(r)) => {
                chain.push(cf);
                at = r;
            }
            (Method::Temporal, None) => unreachable!("temporal frames always carry a reference"),
        }
    };
    while let Some(cf) = chain.pop() {
        let i = cf.frame_index();
        base = decompress_temporal(&cf, &base).map_err(|e| e.in_frame(i))?;
        if keep {
            cache.insert(i, base.clone());
        }
    }
    Ok(base)
}

/// Decodes one frame, following references back to a spatial frame. At most
/// `batch_size + 1` compressed frames are fetched.
pub fn decompress_frame<S: FrameSource + ?Sized>(source: &mut S, index: u64) -> Result<Frame> {
    if index >= source.frame_count() {
        return Err(Error::FrameNotFound(index));
    }
    reconstruct(source, index, &mut HashMap::new(), false)
}

/// Decodes a contiguous range, reusing reconstructions shared between the
/// requested frames' reference chains.
pub fn decompress_range<S: FrameSource + ?Sized>(source: &mut S, range: Range<u64>) -> Result<Vec<Frame>> {
    if range.end > source.frame_count() {
        return Err(Error::FrameNotFound(range.end - 1));
    }
    let mut cache = HashMap::new();
    let mut out = Vec::with_capacity(range.clone().count());
    for i in range {
        out.push(reconstruct(source, i, &mut cache, true)?);
    }
    Ok(out)
}

/// Decodes every frame in index order.
pub fn decompress_all(archive: &Archive) -> Result<Vec<Frame>> {
    let mut frames: Vec<Frame> = Vec::with_capacity(archive.frame_count() as usize);
    for cf in archive.frames() {
        let i = cf.frame_index();
        let f = match cf.reference() {
            None => decompress_spatial(cf),
            Some(r) => decompress_temporal(cf, &frames[r as usize]),
        }
        .map_err(|e| e.in_frame(i))?;
        frames.push(f);
    }
    Ok(frames)
}

impl Archive {
    /// Decodes one frame. See [`decompress_frame`].
    pub fn decompress_frame(&self, index: u64) -> Result<Frame> {
        decompress_frame(&mut &*self, index)
    }
}
