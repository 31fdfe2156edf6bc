use std::fs::File;
use std::io::{BufReader, BufWriter};

use lcp::synth::{generate, SynthModel, SynthParams};
use lcp::{compress_dataset, read_archive, read_header, write_archive, ArchiveReader, CodecConfig, Error};

fn archive() -> lcp::Archive {
    let frames = generate(&SynthParams::new(SynthModel::Clusters, 800, 20, 5)).unwrap();
    let cfg = CodecConfig {
        batch_size: 8,
        ..CodecConfig::new(1e-3)
    };
    compress_dataset(&frames, &cfg).unwrap()
}

#[test]
fn file_round_trip() {
    let a = archive();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("run.lcp");
    let written = write_archive(&a, BufWriter::new(File::create(&path).unwrap())).unwrap();
    assert_eq!(written, std::fs::metadata(&path).unwrap().len());

    let back = read_archive(BufReader::new(File::open(&path).unwrap())).unwrap();
    assert_eq!(back, a);

    let header = read_header(&mut File::open(&path).unwrap()).unwrap();
    assert_eq!(header.info, *a.info());
    assert_eq!(header.index.len(), 20);
}

#[test]
fn reader_decodes_single_frames() {
    let a = archive();
    let bytes = lcp::container::to_bytes(&a).unwrap();
    let mut reader = ArchiveReader::new(std::io::Cursor::new(bytes)).unwrap();
    let want = a.decompress_frame(13).unwrap();
    assert_eq!(lcp::decompress_frame(&mut reader, 13).unwrap(), want);
    assert!(matches!(lcp::decompress_frame(&mut reader, 20), Err(Error::FrameNotFound(20))));
}

#[test]
fn damaged_files_are_detected() {
    let bytes = lcp::container::to_bytes(&archive()).unwrap();
    let mut bad = bytes.clone();
    let last = bad.len() - 10;
    bad[last] ^= 0x40;
    assert!(matches!(lcp::container::from_bytes(&bad), Err(Error::ChecksumMismatch(_))));

    let mut bad = bytes.clone();
    bad[..4].copy_from_slice(b"NOPE");
    assert!(matches!(lcp::container::from_bytes(&bad), Err(Error::BadMagic)));

    let cut = &bytes[..bytes.len() / 2];
    assert!(lcp::container::from_bytes(cut).is_err());
}
