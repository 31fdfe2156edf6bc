//! On-disk archive format.
//!
//! A file is a CRC-protected header followed by one record per compressed
//! frame: anchors first (in slot order), then each batch in order. The
//! header's index table gives every frame's location and byte range, so a
//! reader can seek straight to the records it needs. Each record carries its
//! own CRC. All integers are little-endian; floats are stored as their
//! IEEE-754 bit patterns. `FORMAT.md` in the repository root has the
//! byte-level layout.

use std::borrow::Cow;
use std::io::{self, Cursor, Read, Seek, SeekFrom, Write};

use crate::error::{Error, Result};
use crate::model::{
    check_reference, Archive, ArchiveInfo, CompressedFrame, Location, Method, Precision,
};
use crate::coding::Backend;
use crate::scheduler::FrameSource;

pub const MAGIC: [u8; 4] = *b"LCPA";
pub const VERSION: u16 = 1;

/// Bytes before the index table: magic, version, fixed fields.
const FIXED_HEADER: usize = 4 + 2 + 4 + 8 + 8 + 8 + 4 + 4 + 1 + 1 + 1 + 4;
const INDEX_ENTRY: usize = 1 + 4 + 4 + 8 + 4;
/// Method, frame index, payload length.
const RECORD_PREFIX: usize = 1 + 8 + 4;

const FLAG_ORDER: u8 = 1;
const FLAG_SCALING: u8 = 2;

/// One index-table row.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct IndexEntry {
    pub location: Location,
    /// Offset of the frame record from the start of the file.
    pub offset: u64,
    /// Record length including its prefix and CRC.
    pub length: u32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ContainerHeader {
    pub version: u16,
    pub info: ArchiveInfo,
    pub anchor_count: usize,
    /// One entry per frame, in frame-index order.
    pub index: Vec<IndexEntry>,
}

impl ContainerHeader {
    /// Header size in bytes, CRC included.
    pub fn encoded_len(&self) -> usize {
        FIXED_HEADER + INDEX_ENTRY * self.index.len() + 4
    }
}

fn record_len(cf: &CompressedFrame) -> usize {
    RECORD_PREFIX + cf.len() + 4
}

fn encode_header(header: &ContainerHeader) -> Vec<u8> {
    let info = &header.info;
    let mut out = Vec::with_capacity(header.encoded_len());
    out.extend_from_slice(&MAGIC);
    out.extend_from_slice(&header.version.to_le_bytes());
    out.extend_from_slice(&(info.dims as u32).to_le_bytes());
    out.extend_from_slice(&info.frame_count.to_le_bytes());
    out.extend_from_slice(&(info.batch_size as u64).to_le_bytes());
    out.extend_from_slice(&info.eb.to_bits().to_le_bytes());
    out.extend_from_slice(&info.kappa.to_le_bytes());
    out.extend_from_slice(&info.block_size.to_le_bytes());
    out.push(info.precision.tag());
    out.push(info.backend.id());
    let mut flags = 0;
    if info.order_preserving {
        flags |= FLAG_ORDER;
    }
    if info.eb_scaling_active {
        flags |= FLAG_SCALING;
    }
    out.push(flags);
    out.extend_from_slice(&(header.anchor_count as u32).to_le_bytes());
    for e in &header.index {
        let (tag, group, slot) = match e.location {
            Location::Batch { batch, slot } => (0u8, batch as u32, slot as u32),
            Location::Anchor { slot } => (1u8, 0, slot as u32),
        };
        out.push(tag);
        out.extend_from_slice(&group.to_le_bytes());
        out.extend_from_slice(&slot.to_le_bytes());
        out.extend_from_slice(&e.offset.to_le_bytes());
        out.extend_from_slice(&e.length.to_le_bytes());
    }
    let crc = crc32fast::hash(&out);
    out.extend_from_slice(&crc.to_le_bytes());
    out
}

fn encode_record(cf: &CompressedFrame, out: &mut Vec<u8>) {
    let start = out.len();
    out.push(cf.method().tag());
    out.extend_from_slice(&cf.frame_index().to_le_bytes());
    out.extend_from_slice(&(cf.len() as u32).to_le_bytes());
    out.extend_from_slice(cf.payload());
    let crc = crc32fast::hash(&out[start..]);
    out.extend_from_slice(&crc.to_le_bytes());
}

/// Builds the header for `archive` as it will be laid out by
/// [`write_archive`].
pub fn header_for(archive: &Archive) -> Result<ContainerHeader> {
    let count = archive.frame_count() as usize;
    let mut index = vec![None; count];
    let mut offset = (FIXED_HEADER + INDEX_ENTRY * count + 4) as u64;
    let sections = archive
        .anchors()
        .iter()
        .enumerate()
        .map(|(slot, cf)| (Location::Anchor { slot }, cf))
        .chain(archive.batches().iter().enumerate().flat_map(|(batch, frames)| {
            frames
                .iter()
                .enumerate()
                .map(move |(slot, cf)| (Location::Batch { batch, slot }, cf))
        }));
    for (location, cf) in sections {
        let length = u32::try_from(record_len(cf))
            .map_err(|_| Error::InvalidConfig(format!("frame {} exceeds 4 GiB", cf.frame_index())))?;
        index[cf.frame_index() as usize] = Some(IndexEntry {
            location,
            offset,
            length,
        });
        offset += u64::from(length);
    }
    Ok(ContainerHeader {
        version: VERSION,
        info: archive.info().clone(),
        anchor_count: archive.anchors().len(),
        index: index
            .into_iter()
            .map(|e| e.expect("archive covers every frame"))
            .collect(),
    })
}

/// Writes `archive` and returns the number of bytes written. Output is a
/// pure function of the archive.
pub fn write_archive<W: Write>(archive: &Archive, mut sink: W) -> Result<u64> {
    let header = header_for(archive)?;
    let bytes = encode_header(&header);
    sink.write_all(&bytes).map_err(Error::SinkFailure)?;
    let mut written = bytes.len() as u64;
    let mut record = Vec::new();
    let frames = archive
        .anchors()
        .iter()
        .chain(archive.batches().iter().flatten());
    for cf in frames {
        record.clear();
        encode_record(cf, &mut record);
        sink.write_all(&record).map_err(Error::SinkFailure)?;
        written += record.len() as u64;
    }
    sink.flush().map_err(Error::SinkFailure)?;
    Ok(written)
}

pub fn to_bytes(archive: &Archive) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    write_archive(archive, &mut out)?;
    Ok(out)
}

fn truncated(what: &str) -> Error {
    Error::ChecksumMismatch(format!("{what} (file truncated)"))
}

fn read_exact_or<R: Read>(source: &mut R, buf: &mut [u8], what: &str) -> Result<()> {
    source.read_exact(buf).map_err(|e| match e.kind() {
        io::ErrorKind::UnexpectedEof => truncated(what),
        _ => Error::Io(e),
    })
}

struct Fields<'a> {
    buf: &'a [u8],
    at: usize,
}

impl Fields<'_> {
    fn take<const N: usize>(&mut self) -> [u8; N] {
        let out = self.buf[self.at..self.at + N].try_into().expect("length checked");
        self.at += N;
        out
    }

    fn u8(&mut self) -> u8 {
        self.take::<1>()[0]
    }

    fn u32(&mut self) -> u32 {
        u32::from_le_bytes(self.take())
    }

    fn u64(&mut self) -> u64 {
        u64::from_le_bytes(self.take())
    }
}

/// Reads and validates the header. Leaves the source positioned after it.
pub fn read_header<R: Read + Seek>(source: &mut R) -> Result<ContainerHeader> {
    let file_len = source.seek(SeekFrom::End(0))?;
    source.seek(SeekFrom::Start(0))?;
    let mut fixed = [0u8; FIXED_HEADER];
    let mut magic = [0u8; 4];
    read_exact_or(source, &mut magic, "header")?;
    if magic != MAGIC {
        return Err(Error::BadMagic);
    }
    fixed[..4].copy_from_slice(&magic);
    read_exact_or(source, &mut fixed[4..6], "header")?;
    let version = u16::from_le_bytes([fixed[4], fixed[5]]);
    if version != VERSION {
        return Err(Error::UnsupportedVersion(version));
    }
    read_exact_or(source, &mut fixed[6..], "header")?;
    let mut f = Fields { buf: &fixed, at: 6 };
    let dims = f.u32() as usize;
    let frame_count = f.u64();
    let batch_size = f.u64();
    let eb = f64::from_bits(f.u64());
    let kappa = f.u32();
    let block_size = f.u32();
    let precision = f.u8();
    let backend = f.u8();
    let flags = f.u8();
    let anchor_count = f.u32() as usize;

    let index_bytes = frame_count
        .checked_mul(INDEX_ENTRY as u64)
        .filter(|&b| b + (FIXED_HEADER as u64) + 4 <= file_len)
        .ok_or_else(|| truncated("index table"))? as usize;
    let mut rest = vec![0u8; index_bytes + 4];
    read_exact_or(source, &mut rest, "index table")?;
    let mut hasher = crc32fast::Hasher::new();
    hasher.update(&fixed);
    hasher.update(&rest[..index_bytes]);
    let stored = u32::from_le_bytes(rest[index_bytes..].try_into().expect("4 bytes"));
    if hasher.finalize() != stored {
        return Err(Error::ChecksumMismatch("archive header".into()));
    }

    // The CRC matched, so anything odd from here on is a malformed writer.
    let bad = |msg: String| Error::corrupt(format!("archive header: {msg}"));
    if batch_size == 0 || batch_size > usize::MAX as u64 {
        return Err(bad(format!("batch size {batch_size}")));
    }
    let batch_size = batch_size as usize;
    if frame_count > 0 && dims == 0 {
        return Err(bad("zero dimensions".into()));
    }
    if !(eb > 0.0 && eb.is_finite()) || kappa == 0 || block_size == 0 {
        return Err(bad("invalid codec parameters".into()));
    }
    if flags & !(FLAG_ORDER | FLAG_SCALING) != 0 {
        return Err(bad(format!("unknown flags {flags:#x}")));
    }
    let info = ArchiveInfo {
        dims,
        frame_count,
        batch_size,
        eb,
        kappa,
        block_size,
        precision: Precision::from_tag(precision)?,
        backend: Backend::from_id(backend)?,
        order_preserving: flags & FLAG_ORDER != 0,
        eb_scaling_active: flags & FLAG_SCALING != 0,
    };

    let header_len = (FIXED_HEADER + index_bytes + 4) as u64;
    let mut f = Fields { buf: &rest, at: 0 };
    let mut index = Vec::with_capacity(frame_count as usize);
    let mut anchors_seen = 0;
    for i in 0..frame_count {
        let tag = f.u8();
        let group = f.u32() as usize;
        let slot = f.u32() as usize;
        let offset = f.u64();
        let length = f.u32();
        let location = match tag {
            0 if group as u64 == i / batch_size as u64 => Location::Batch { batch: group, slot },
            1 if i % batch_size as u64 == 0 && slot < anchor_count => {
                anchors_seen += 1;
                Location::Anchor { slot }
            }
            _ => return Err(bad(format!("frame {i} has an invalid location"))),
        };
        if (length as usize) < RECORD_PREFIX + 4 || offset < header_len {
            return Err(bad(format!("frame {i} has an invalid byte range")));
        }
        if offset + u64::from(length) > file_len {
            return Err(truncated(&format!("frame {i}")));
        }
        index.push(IndexEntry {
            location,
            offset,
            length,
        });
    }
    if anchors_seen != anchor_count {
        return Err(bad("anchor count disagrees with the index".into()));
    }
    Ok(ContainerHeader {
        version,
        info,
        anchor_count,
        index,
    })
}

fn parse_record(bytes: &[u8], expected_index: u64) -> Result<CompressedFrame> {
    let (body, crc) = bytes.split_at(bytes.len() - 4);
    if crc32fast::hash(body) != u32::from_le_bytes(crc.try_into().expect("4 bytes")) {
        return Err(Error::ChecksumMismatch(format!("frame {expected_index}")));
    }
    let method = Method::from_tag(body[0])?;
    let index = u64::from_le_bytes(body[1..9].try_into().expect("8 bytes"));
    let len = u32::from_le_bytes(body[9..13].try_into().expect("4 bytes")) as usize;
    if index != expected_index || len != body.len() - RECORD_PREFIX {
        return Err(Error::corrupt(format!("record for frame {expected_index} is inconsistent")));
    }
    CompressedFrame::from_payload(method, index, body[RECORD_PREFIX..].to_vec())
}

/// Random-access reader. Only the header is read up front; each
/// [`read_frame`](ArchiveReader::read_frame) seeks to one record.
#[derive(Debug)]
pub struct ArchiveReader<R> {
    source: R,
    header: ContainerHeader,
}

impl<R: Read + Seek> ArchiveReader<R> {
    pub fn new(mut source: R) -> Result<Self> {
        let header = read_header(&mut source)?;
        Ok(ArchiveReader { source, header })
    }

    pub fn header(&self) -> &ContainerHeader {
        &self.header
    }

    pub fn info(&self) -> &ArchiveInfo {
        &self.header.info
    }

    pub fn into_inner(self) -> R {
        self.source
    }

    pub fn read_frame(&mut self, index: u64) -> Result<CompressedFrame> {
        let entry = *usize::try_from(index)
            .ok()
            .and_then(|i| self.header.index.get(i))
            .ok_or(Error::FrameNotFound(index))?;
        self.source.seek(SeekFrom::Start(entry.offset))?;
        let mut bytes = vec![0u8; entry.length as usize];
        read_exact_or(&mut self.source, &mut bytes, &format!("frame {index}"))?;
        let cf = parse_record(&bytes, index)?;
        let is_anchor = matches!(entry.location, Location::Anchor { .. });
        if is_anchor && cf.method() != Method::Spatial {
            return Err(Error::corrupt(format!("anchor frame {index} is not spatial")));
        }
        if let Some(r) = cf.reference() {
            let index_table = &self.header.index;
            check_reference(index, r, self.header.info.batch_size, |i| {
                index_table
                    .get(i as usize)
                    .map(|e| matches!(e.location, Location::Anchor { .. }))
            })?;
        }
        if cf.grid().dims() != self.header.info.dims {
            return Err(Error::corrupt(format!("frame {index} has wrong dimension count")));
        }
        Ok(cf)
    }
}

impl<R: Read + Seek> FrameSource for ArchiveReader<R> {
    fn frame_count(&self) -> u64 {
        self.header.info.frame_count
    }

    fn fetch(&mut self, index: u64) -> Result<Cow<'_, CompressedFrame>> {
        self.read_frame(index).map(Cow::Owned)
    }
}

/// Reads a whole archive.
pub fn read_archive<R: Read + Seek>(source: R) -> Result<Archive> {
    let mut reader = ArchiveReader::new(source)?;
    let header = reader.header.clone();
    let batch_count = (header.info.frame_count as usize).div_ceil(header.info.batch_size);
    let mut batches: Vec<Vec<CompressedFrame>> = (0..batch_count).map(|_| Vec::new()).collect();
    let mut anchors: Vec<Option<CompressedFrame>> = vec![None; header.anchor_count];
    // Records in file order, so reads are sequential.
    let mut order: Vec<usize> = (0..header.index.len()).collect();
    order.sort_by_key(|&i| header.index[i].offset);
    let mut placed = Vec::with_capacity(order.len());
    for i in order {
        let cf = reader.read_frame(i as u64)?;
        placed.push((header.index[i].location, cf));
    }
    placed.sort_by_key(|(loc, _)| match *loc {
        Location::Anchor { slot } => (0, 0, slot),
        Location::Batch { batch, slot } => (1, batch, slot),
    });
    for (loc, cf) in placed {
        match loc {
            Location::Anchor { slot } => {
                if anchors[slot].replace(cf).is_some() {
                    return Err(Error::corrupt(format!("anchor slot {slot} used twice")));
                }
            }
            Location::Batch { batch, slot } => {
                if batches[batch].len() != slot {
                    return Err(Error::corrupt(format!("batch {batch} slots are not contiguous")));
                }
                batches[batch].push(cf);
            }
        }
    }
    let anchors = anchors
        .into_iter()
        .collect::<Option<Vec<_>>>()
        .ok_or_else(|| Error::corrupt("missing anchor slot"))?;
    Archive::new(header.info, batches, anchors)
}

pub fn from_bytes(bytes: &[u8]) -> Result<Archive> {
    read_archive(Cursor::new(bytes))
}
