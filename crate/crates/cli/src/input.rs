//! Raw binary and xyz text frame files.

use std::fmt;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;
use std::str::FromStr;

use lcp::{Frame, Precision};

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Format {
    #[value(name = "raw-f32")]
    RawF32,
    #[value(name = "raw-f64")]
    RawF64,
    /// Whitespace-separated scalars, one particle per line, blank line
    /// between frames.
    Xyz,
}

impl Format {
    pub fn precision(self) -> Precision {
        match self {
            Format::RawF32 => Precision::F32,
            Format::RawF64 | Format::Xyz => Precision::F64,
        }
    }

    pub fn for_precision(p: Precision) -> Self {
        match p {
            Precision::F32 => Format::RawF32,
            Precision::F64 => Format::RawF64,
        }
    }
}

/// Particles per frame, dimensions, frame count.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Shape {
    pub particles: usize,
    pub dims: usize,
    pub frames: usize,
}

impl FromStr for Shape {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let parts: Vec<&str> = s.split(',').map(str::trim).collect();
        let [n, d, f] = parts[..] else {
            return Err(format!("expected N,d,F, got {s:?}"));
        };
        let num = |v: &str| parse_count(v).map_err(|e| format!("{e} in shape {s:?}"));
        let shape = Shape {
            particles: num(n)?,
            dims: num(d)?,
            frames: num(f)?,
        };
        if shape.dims == 0 {
            return Err("shape needs at least one dimension".into());
        }
        Ok(shape)
    }
}

impl fmt::Display for Shape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{},{},{}", self.particles, self.dims, self.frames)
    }
}

/// Accepts plain integers and integral scientific notation such as `1e5`.
pub fn parse_count(s: &str) -> Result<usize, String> {
    if let Ok(v) = s.parse::<usize>() {
        return Ok(v);
    }
    match s.parse::<f64>() {
        Ok(v) if v >= 0.0 && v.fract() == 0.0 && v < 2f64.powi(53) => Ok(v as usize),
        _ => Err(format!("invalid count {s:?}")),
    }
}

fn open(path: &Path) -> Result<std::fs::File, CliError> {
    std::fs::File::open(path).map_err(|e| CliError::io(path, e))
}

pub fn read_frames(path: &Path, format: Format, shape: Option<Shape>) -> Result<Vec<Frame>, CliError> {
    match format {
        Format::RawF32 | Format::RawF64 => {
            let shape = shape.ok_or_else(|| CliError::Usage("raw formats need --shape N,d,F".into()))?;
            read_raw(path, format, shape)
        }
        Format::Xyz => {
            let frames = read_xyz(path)?;
            if let Some(s) = shape {
                let ok = frames.len() == s.frames
                    && frames.iter().all(|f| f.len() == s.particles && f.dims() == s.dims);
                if !ok {
                    return Err(CliError::Usage(format!("{} does not have shape {s}", path.display())));
                }
            }
            Ok(frames)
        }
    }
}

fn read_raw(path: &Path, format: Format, shape: Shape) -> Result<Vec<Frame>, CliError> {
    let width = format.precision().bytes();
    let mut bytes = Vec::new();
    open(path)?.read_to_end(&mut bytes).map_err(|e| CliError::io(path, e))?;
    let per_frame = shape.particles * shape.dims;
    let expected = shape
        .frames
        .checked_mul(per_frame)
        .and_then(|n| n.checked_mul(width))
        .ok_or_else(|| CliError::Usage(format!("shape {shape} is too large")))?;
    if bytes.len() != expected {
        return Err(CliError::Usage(format!(
            "{} has {} bytes, shape {shape} needs {expected}",
            path.display(),
            bytes.len()
        )));
    }
    let scalars: Vec<f64> = match format {
        Format::RawF32 => bytes
            .chunks_exact(4)
            .map(|b| f64::from(f32::from_le_bytes(b.try_into().expect("chunk of 4"))))
            .collect(),
        _ => bytes
            .chunks_exact(8)
            .map(|b| f64::from_le_bytes(b.try_into().expect("chunk of 8")))
            .collect(),
    };
    (0..shape.frames)
        .map(|t| {
            let coords = scalars[t * per_frame..(t + 1) * per_frame].to_vec();
            Frame::new(t as u64, shape.dims, coords).map_err(CliError::from)
        })
        .collect()
}

fn read_xyz(path: &Path) -> Result<Vec<Frame>, CliError> {
    let reader = BufReader::new(open(path)?);
    let mut frames = Vec::new();
    let mut coords = Vec::new();
    let mut dims = None;
    let finish = |coords: &mut Vec<f64>, frames: &mut Vec<Frame>, dims: Option<usize>| -> Result<(), CliError> {
        if !coords.is_empty() {
            let d = dims.expect("set with the first value");
            frames.push(Frame::new(frames.len() as u64, d, std::mem::take(coords))?);
        }
        Ok(())
    };
    for (n, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| CliError::io(path, e))?;
        let line = line.trim();
        if line.is_empty() {
            finish(&mut coords, &mut frames, dims)?;
            continue;
        }
        let start = coords.len();
        for tok in line.split_whitespace() {
            let v = tok.parse::<f64>().map_err(|_| {
                CliError::Usage(format!("{}:{}: not a number: {tok:?}", path.display(), n + 1))
            })?;
            coords.push(v);
        }
        let found = coords.len() - start;
        match dims {
            None => dims = Some(found),
            Some(d) if d != found => {
                return Err(CliError::Usage(format!(
                    "{}:{}: expected {d} values, found {found}",
                    path.display(),
                    n + 1
                )))
            }
            Some(_) => {}
        }
    }
    finish(&mut coords, &mut frames, dims)?;
    if frames.is_empty() {
        return Err(CliError::Usage(format!("{} holds no frames", path.display())));
    }
    Ok(frames)
}

/// Streams frames to `out` in `format`.
pub struct FrameWriter<W: Write> {
    out: W,
    format: Format,
    written: usize,
}

impl<W: Write> FrameWriter<W> {
    pub fn new(out: W, format: Format) -> Self {
        FrameWriter {
            out,
            format,
            written: 0,
        }
    }

    pub fn write(&mut self, frame: &Frame) -> std::io::Result<()> {
        match self.format {
            Format::RawF32 => {
                for &x in frame.coords() {
                    self.out.write_all(&(x as f32).to_le_bytes())?;
                }
            }
            Format::RawF64 => {
                for &x in frame.coords() {
                    self.out.write_all(&x.to_le_bytes())?;
                }
            }
            Format::Xyz => {
                if self.written > 0 {
                    writeln!(self.out)?;
                }
                for p in frame.particles() {
                    let line: Vec<String> = p.iter().map(f64::to_string).collect();
                    writeln!(self.out, "{}", line.join(" "))?;
                }
            }
        }
        self.written += 1;
        Ok(())
    }

    pub fn finish(mut self) -> std::io::Result<W> {
        self.out.flush()?;
        Ok(self.out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shape_parsing() {
        let s: Shape = "1e5, 3, 32".parse().unwrap();
        assert_eq!((s.particles, s.dims, s.frames), (100_000, 3, 32));
        assert!("10,3".parse::<Shape>().is_err());
        assert!("10,0,2".parse::<Shape>().is_err());
        assert!("1.5,3,2".parse::<Shape>().is_err());
    }

    #[test]
    fn xyz_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a.xyz");
        std::fs::write(&path, "0 1 2\n3 4 5\n\n\n6 7 8\n-1 0.5 1e-3\n").unwrap();
        let frames = read_frames(&path, Format::Xyz, None).unwrap();
        assert_eq!(frames.len(), 2);
        assert_eq!(frames[1].particle(1), &[-1.0, 0.5, 1e-3]);

        let mut w = FrameWriter::new(Vec::new(), Format::Xyz);
        frames.iter().for_each(|f| w.write(f).unwrap());
        let text = String::from_utf8(w.finish().unwrap()).unwrap();
        std::fs::write(&path, text).unwrap();
        assert_eq!(read_frames(&path, Format::Xyz, None).unwrap(), frames);
    }

    #[test]
    fn ragged_xyz_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a.xyz");
        std::fs::write(&path, "0 1 2\n3 4\n").unwrap();
        assert!(matches!(read_frames(&path, Format::Xyz, None), Err(CliError::Usage(_))));
    }

    #[test]
    fn raw_length_must_match_shape() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a.f32");
        std::fs::write(&path, [0u8; 4 * 6]).unwrap();
        let shape = |s: &str| Some(s.parse::<Shape>().unwrap());
        assert_eq!(read_frames(&path, Format::RawF32, shape("2,3,1")).unwrap().len(), 1);
        assert!(matches!(read_frames(&path, Format::RawF32, shape("2,3,2")), Err(CliError::Usage(_))));
        assert!(matches!(read_frames(&path, Format::RawF64, shape("2,3,1")), Err(CliError::Usage(_))));
    }
}
