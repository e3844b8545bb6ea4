//! Binary frame container.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! "CVM1"            magic
//! u16               format version (1)
//! [u8; 32]          SHA-256 of the run configuration (TOML)
//! u8                content kind
//! u32               frame count
//! per frame:
//!   u64             frame id
//!   u32             array count
//!   per array:      u64 length, then that many f64
//! ```
//!
//! Array order per kind:
//!
//! * `RawSymbols`: alice x, alice p, bob x, bob p, gamma x, gamma p (raw units).
//! * `RawWaveform`: alice x, alice p, bob x, bob p, rx re, rx im, [sample rate].
//! * `Received`: alice x, alice p, bob x, bob p, gamma x, gamma p (raw units),
//!   [delay, pilot mean, pilot std, pilot points] with NaN for absent values.
//! * `Processed`: alice x, alice p, bob x, bob p (aligned), gamma x, gamma p
//!   (SNU), displaced x, displaced p.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use num_complex::Complex64;

use super::run::{FrameRecord, PilotStats, RawFrame, RawPayload, ReceivedFrame};
use crate::channel::QuadSymbol;
use crate::dsp::Waveform;
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"CVM1";
pub const VERSION: u16 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u8)]
pub enum ContentKind {
    RawSymbols = 1,
    RawWaveform = 2,
    Received = 3,
    Processed = 4,
}

impl ContentKind {
    fn from_u8(v: u8) -> Result<Self> {
        Ok(match v {
            1 => Self::RawSymbols,
            2 => Self::RawWaveform,
            3 => Self::Received,
            4 => Self::Processed,
            other => return Err(Error::Format(format!("unknown content kind {other}"))),
        })
    }
}

/// One frame as stored: an id and its arrays.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameBlock {
    pub frame_id: u64,
    pub arrays: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Container {
    pub kind: ContentKind,
    pub digest: [u8; 32],
    pub frames: Vec<FrameBlock>,
}

pub fn write_container(path: &Path, c: &Container) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    w.write_all(&c.digest)?;
    w.write_all(&[c.kind as u8])?;
    let n = u32::try_from(c.frames.len()).map_err(|_| Error::Format("too many frames".into()))?;
    w.write_all(&n.to_le_bytes())?;
    for f in &c.frames {
        w.write_all(&f.frame_id.to_le_bytes())?;
        w.write_all(&(f.arrays.len() as u32).to_le_bytes())?;
        for a in &f.arrays {
            w.write_all(&(a.len() as u64).to_le_bytes())?;
            for v in a {
                w.write_all(&v.to_le_bytes())?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

fn read_exact<const N: usize>(r: &mut impl Read) -> Result<[u8; N]> {
    let mut buf = [0u8; N];
    r.read_exact(&mut buf).map_err(|e| match e.kind() {
        std::io::ErrorKind::UnexpectedEof => Error::Format("truncated container".into()),
        _ => Error::Io(e),
    })?;
    Ok(buf)
}

pub fn read_container(path: &Path) -> Result<Container> {
    let mut r = BufReader::new(File::open(path)?);
    if &read_exact::<4>(&mut r)? != MAGIC {
        return Err(Error::Format(format!("{} is not a CVM1 container", path.display())));
    }
    let version = u16::from_le_bytes(read_exact(&mut r)?);
    if version != VERSION {
        return Err(Error::Format(format!("unsupported container version {version}")));
    }
    let digest = read_exact::<32>(&mut r)?;
    let kind = ContentKind::from_u8(read_exact::<1>(&mut r)?[0])?;
    let n = u32::from_le_bytes(read_exact(&mut r)?);
    let mut frames = Vec::with_capacity(n as usize);
    for _ in 0..n {
        let frame_id = u64::from_le_bytes(read_exact(&mut r)?);
        let n_arrays = u32::from_le_bytes(read_exact(&mut r)?);
        let mut arrays = Vec::with_capacity(n_arrays as usize);
        for _ in 0..n_arrays {
            let len = u64::from_le_bytes(read_exact(&mut r)?) as usize;
            let mut bytes = vec![0u8; len * 8];
            r.read_exact(&mut bytes)
                .map_err(|_| Error::Format("truncated array".into()))?;
            arrays.push(
                bytes
                    .chunks_exact(8)
                    .map(|b| f64::from_le_bytes(b.try_into().expect("8-byte chunk")))
                    .collect(),
            );
        }
        frames.push(FrameBlock { frame_id, arrays });
    }
    let mut rest = [0u8; 1];
    if r.read(&mut rest)? != 0 {
        return Err(Error::Format("trailing bytes after last frame".into()));
    }
    Ok(Container { kind, digest, frames })
}

fn split(s: &[QuadSymbol]) -> [Vec<f64>; 2] {
    [s.iter().map(|q| q.x).collect(), s.iter().map(|q| q.p).collect()]
}

fn join(x: &[f64], p: &[f64]) -> Result<Vec<QuadSymbol>> {
    if x.len() != p.len() {
        return Err(Error::Format("quadrature arrays differ in length".into()));
    }
    Ok(x.iter().zip(p).map(|(x, p)| QuadSymbol::new(*x, *p)).collect())
}

fn expect_arrays(f: &FrameBlock, n: usize) -> Result<()> {
    if f.arrays.len() != n {
        return Err(Error::Format(format!(
            "frame {} holds {} arrays, expected {n}",
            f.frame_id,
            f.arrays.len()
        )));
    }
    Ok(())
}

fn opt(v: f64) -> Option<f64> {
    (!v.is_nan()).then_some(v)
}

impl RawFrame {
    pub fn kind(&self) -> ContentKind {
        match self.payload {
            RawPayload::Symbols(_) => ContentKind::RawSymbols,
            RawPayload::Waveform(_) => ContentKind::RawWaveform,
        }
    }

    pub fn to_block(&self) -> FrameBlock {
        let mut arrays: Vec<Vec<f64>> = split(&self.alice).into_iter().chain(split(&self.bob)).collect();
        match &self.payload {
            RawPayload::Symbols(g) => arrays.extend(split(g)),
            RawPayload::Waveform(w) => {
                arrays.push(w.samples.iter().map(|z| z.re).collect());
                arrays.push(w.samples.iter().map(|z| z.im).collect());
                arrays.push(vec![w.sample_rate]);
            }
        }
        FrameBlock {
            frame_id: self.frame_id,
            arrays,
        }
    }

    pub fn from_block(kind: ContentKind, f: &FrameBlock) -> Result<Self> {
        let a = &f.arrays;
        let payload = match kind {
            ContentKind::RawSymbols => {
                expect_arrays(f, 6)?;
                RawPayload::Symbols(join(&a[4], &a[5])?)
            }
            ContentKind::RawWaveform => {
                expect_arrays(f, 7)?;
                if a[4].len() != a[5].len() || a[6].len() != 1 {
                    return Err(Error::Format("malformed waveform arrays".into()));
                }
                let samples = a[4].iter().zip(&a[5]).map(|(r, i)| Complex64::new(*r, *i)).collect();
                RawPayload::Waveform(Waveform::new(samples, a[6][0]).map_err(|e| Error::Format(e.to_string()))?)
            }
            _ => return Err(Error::Format("container does not hold raw frames".into())),
        };
        Ok(Self {
            frame_id: f.frame_id,
            alice: join(&a[0], &a[1])?,
            bob: join(&a[2], &a[3])?,
            payload,
        })
    }
}

impl ReceivedFrame {
    pub fn to_block(&self) -> FrameBlock {
        let mut arrays: Vec<Vec<f64>> = split(&self.alice)
            .into_iter()
            .chain(split(&self.bob))
            .chain(split(&self.gamma_raw))
            .collect();
        let p = self.pilot;
        arrays.push(vec![
            self.delay.map_or(f64::NAN, |d| d as f64),
            p.map_or(f64::NAN, |p| p.mean),
            p.map_or(f64::NAN, |p| p.std),
            p.map_or(f64::NAN, |p| p.n_points as f64),
        ]);
        FrameBlock {
            frame_id: self.frame_id,
            arrays,
        }
    }

    pub fn from_block(f: &FrameBlock) -> Result<Self> {
        expect_arrays(f, 7)?;
        let a = &f.arrays;
        if a[6].len() != 4 {
            return Err(Error::Format("malformed frame metadata".into()));
        }
        let m = &a[6];
        let pilot = match (opt(m[1]), opt(m[2]), opt(m[3])) {
            (Some(mean), Some(std), Some(n)) => Some(PilotStats {
                mean,
                std,
                n_points: n as usize,
            }),
            _ => None,
        };
        Ok(Self {
            frame_id: f.frame_id,
            alice: join(&a[0], &a[1])?,
            bob: join(&a[2], &a[3])?,
            gamma_raw: join(&a[4], &a[5])?,
            delay: opt(m[0]).map(|d| d as usize),
            pilot,
        })
    }
}

impl FrameRecord {
    pub fn to_block(&self) -> FrameBlock {
        FrameBlock {
            frame_id: self.summary.frame_id,
            arrays: split(&self.alice)
                .into_iter()
                .chain(split(&self.bob))
                .chain(split(&self.gamma))
                .chain(split(&self.displaced))
                .collect(),
        }
    }
}

/// Processed symbol arrays read back from a container.
#[derive(Debug, Clone, PartialEq)]
pub struct ProcessedArrays {
    pub frame_id: u64,
    pub alice: Vec<QuadSymbol>,
    pub bob: Vec<QuadSymbol>,
    pub gamma: Vec<QuadSymbol>,
    pub displaced: Vec<QuadSymbol>,
}

impl ProcessedArrays {
    pub fn from_block(f: &FrameBlock) -> Result<Self> {
        expect_arrays(f, 8)?;
        let a = &f.arrays;
        Ok(Self {
            frame_id: f.frame_id,
            alice: join(&a[0], &a[1])?,
            bob: join(&a[2], &a[3])?,
            gamma: join(&a[4], &a[5])?,
            displaced: join(&a[6], &a[7])?,
        })
    }
}
