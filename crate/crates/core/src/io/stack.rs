//! Binary frame stacks with a JSON sidecar.
//!
//! Layout, little-endian:
//!
//! | offset | size | field                                   |
//! |--------|------|-----------------------------------------|
//! | 0      | 8    | magic `TBSTACK\0`                       |
//! | 8      | 4    | format version (u32)                    |
//! | 12     | 4    | rows (u32)                              |
//! | 16     | 4    | cols (u32)                              |
//! | 20     | 4    | frame count (u32)                       |
//! | 24     | 1    | kind (0 = pdc_on, 1 = background)       |
//! | 25     | 3    | zero padding                            |
//! | 28     | 32   | SHA-256 of the canonical config JSON    |
//! | 60     | ...  | counts as u32, row-major, frame-major   |
//!
//! The sidecar `<file>.json` holds the config itself and per-frame metadata.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::simulator::{ExperimentConfig, Frame, FrameKind};

pub const MAGIC: [u8; 8] = *b"TBSTACK\0";
pub const FORMAT_VERSION: u32 = 1;
pub const HEADER_LEN: u64 = 60;

pub type ConfigDigest = [u8; 32];

/// SHA-256 of the config's canonical (compact, field-ordered) JSON.
pub fn config_digest(config: &ExperimentConfig) -> Result<ConfigDigest> {
    let bytes = serde_json::to_vec(config)?;
    Ok(Sha256::digest(&bytes).into())
}

pub fn digest_hex(d: &ConfigDigest) -> String {
    hex::encode(d)
}

pub fn sidecar_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".json");
    PathBuf::from(s)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StackHeader {
    pub rows: u32,
    pub cols: u32,
    pub count: u32,
    pub kind: FrameKind,
    pub digest: ConfigDigest,
}

impl StackHeader {
    pub fn payload_len(&self) -> u64 {
        u64::from(self.rows) * u64::from(self.cols) * u64::from(self.count) * 4
    }

    fn frame_values(&self) -> usize {
        self.rows as usize * self.cols as usize
    }

    fn encode(&self) -> [u8; HEADER_LEN as usize] {
        let mut b = [0u8; HEADER_LEN as usize];
        b[0..8].copy_from_slice(&MAGIC);
        b[8..12].copy_from_slice(&FORMAT_VERSION.to_le_bytes());
        b[12..16].copy_from_slice(&self.rows.to_le_bytes());
        b[16..20].copy_from_slice(&self.cols.to_le_bytes());
        b[20..24].copy_from_slice(&self.count.to_le_bytes());
        b[24] = match self.kind {
            FrameKind::PdcOn => 0,
            FrameKind::Background => 1,
        };
        b[28..60].copy_from_slice(&self.digest);
        b
    }

    fn decode(b: &[u8], path: &Path) -> Result<Self> {
        let corrupt = |reason: String| Error::CorruptHeader {
            path: path.to_owned(),
            reason,
        };
        if b.len() < HEADER_LEN as usize {
            return Err(corrupt(format!("{} bytes, header needs {HEADER_LEN}", b.len())));
        }
        if b[0..8] != MAGIC {
            return Err(corrupt("bad magic".into()));
        }
        let word = |o: usize| u32::from_le_bytes(b[o..o + 4].try_into().unwrap());
        let version = word(8);
        if version != FORMAT_VERSION {
            return Err(corrupt(format!("unsupported version {version}")));
        }
        let kind = match b[24] {
            0 => FrameKind::PdcOn,
            1 => FrameKind::Background,
            k => return Err(corrupt(format!("unknown frame kind {k}"))),
        };
        if b[25..28] != [0, 0, 0] {
            return Err(corrupt("non-zero padding".into()));
        }
        let (rows, cols) = (word(12), word(16));
        if rows == 0 || cols == 0 {
            return Err(corrupt(format!("empty frame size {rows}x{cols}")));
        }
        Ok(Self {
            rows,
            cols,
            count: word(20),
            kind,
            digest: b[28..60].try_into().unwrap(),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrameMeta {
    pub pulse_index: u64,
    pub pulse_energy: f64,
    #[serde(default)]
    pub cosmic_rays: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sidecar {
    pub format_version: u32,
    pub kind: FrameKind,
    pub rows: u32,
    pub cols: u32,
    pub count: u32,
    pub config_digest: String,
    pub config: ExperimentConfig,
    pub frames: Vec<FrameMeta>,
}

fn to_u32(v: f64) -> Option<u32> {
    (v.fract() == 0.0 && (0.0..=u32::MAX as f64).contains(&v)).then_some(v as u32)
}

/// Incremental writer; frames may be pushed in chunks.
pub struct StackWriter {
    path: PathBuf,
    out: BufWriter<File>,
    header: StackHeader,
    config: ExperimentConfig,
    meta: Vec<FrameMeta>,
    buf: Vec<u8>,
}

impl StackWriter {
    pub fn create(path: &Path, config: &ExperimentConfig, kind: FrameKind) -> Result<Self> {
        let header = StackHeader {
            rows: u32::try_from(config.geometry.rows).map_err(|_| Error::Resource("too many rows".into()))?,
            cols: u32::try_from(config.geometry.cols).map_err(|_| Error::Resource("too many cols".into()))?,
            count: 0,
            kind,
            digest: config_digest(config)?,
        };
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut out = BufWriter::new(file);
        out.write_all(&header.encode()).map_err(|e| Error::io(path, e))?;
        Ok(Self {
            path: path.to_owned(),
            out,
            header,
            config: config.clone(),
            meta: Vec::new(),
            buf: Vec::new(),
        })
    }

    pub fn push(&mut self, frames: &[Frame]) -> Result<()> {
        for f in frames {
            let index = self.meta.len();
            if f.rows != self.header.rows as usize || f.cols != self.header.cols as usize || f.kind != self.header.kind {
                return Err(Error::Geometry(format!(
                    "frame {index} is a {}x{} {} frame, stack holds {}x{} {}",
                    f.rows,
                    f.cols,
                    f.kind.label(),
                    self.header.rows,
                    self.header.cols,
                    self.header.kind.label()
                )));
            }
            self.buf.clear();
            for &v in &f.counts {
                let c = to_u32(v).ok_or(Error::NonIntegerCounts { index })?;
                self.buf.extend_from_slice(&c.to_le_bytes());
            }
            self.out.write_all(&self.buf).map_err(|e| Error::io(&self.path, e))?;
            self.meta.push(FrameMeta {
                pulse_index: f.pulse_index,
                pulse_energy: f.pulse_energy,
                cosmic_rays: f.cosmic_rays,
            });
        }
        Ok(())
    }

    /// Patches the frame count, flushes and writes the sidecar.
    pub fn finish(mut self) -> Result<StackHeader> {
        self.header.count = u32::try_from(self.meta.len()).map_err(|_| Error::Resource("more than 2^32 frames".into()))?;
        let io = |e| Error::io(&self.path, e);
        self.out.flush().map_err(io)?;
        let file = self.out.get_mut();
        file.seek(SeekFrom::Start(0)).map_err(io)?;
        file.write_all(&self.header.encode()).map_err(io)?;
        file.sync_data().map_err(io)?;
        let sidecar = Sidecar {
            format_version: FORMAT_VERSION,
            kind: self.header.kind,
            rows: self.header.rows,
            cols: self.header.cols,
            count: self.header.count,
            config_digest: digest_hex(&self.header.digest),
            config: self.config,
            frames: self.meta,
        };
        let side = sidecar_path(&self.path);
        let mut text = serde_json::to_string_pretty(&sidecar)?;
        text.push('\n');
        std::fs::write(&side, text).map_err(|e| Error::io(&side, e))?;
        Ok(self.header)
    }
}

pub fn write_stack(path: &Path, frames: &[Frame], config: &ExperimentConfig) -> Result<StackHeader> {
    let kind = frames.first().map(|f| f.kind).unwrap_or(FrameKind::PdcOn);
    let mut w = StackWriter::create(path, config, kind)?;
    w.push(frames)?;
    w.finish()
}

/// Chunked reader. Sizes and digests are checked on open, so a damaged file
/// never yields frames.
pub struct StackReader {
    path: PathBuf,
    input: BufReader<File>,
    header: StackHeader,
    sidecar: Sidecar,
    next: usize,
    buf: Vec<u8>,
}

impl StackReader {
    pub fn open(path: &Path) -> Result<Self> {
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let len = file.metadata().map_err(|e| Error::io(path, e))?.len();
        let mut input = BufReader::new(file);
        let mut head = Vec::with_capacity(HEADER_LEN as usize);
        (&mut input)
            .take(HEADER_LEN)
            .read_to_end(&mut head)
            .map_err(|e| Error::io(path, e))?;
        let header = StackHeader::decode(&head, path)?;
        let expected = HEADER_LEN + header.payload_len();
        if len < expected {
            return Err(Error::TruncatedPayload {
                path: path.to_owned(),
                expected,
                found: len,
            });
        }
        if len > expected {
            return Err(Error::CorruptHeader {
                path: path.to_owned(),
                reason: format!("{} trailing bytes after the payload", len - expected),
            });
        }

        let side = sidecar_path(path);
        let text = std::fs::read_to_string(&side).map_err(|e| Error::io(&side, e))?;
        let sidecar: Sidecar = serde_json::from_str(&text)?;
        let recomputed = config_digest(&sidecar.config)?;
        if sidecar.config_digest != digest_hex(&header.digest) || recomputed != header.digest {
            return Err(Error::DigestMismatch { path: path.to_owned() });
        }
        if sidecar.frames.len() != header.count as usize
            || sidecar.kind != header.kind
            || (sidecar.rows, sidecar.cols, sidecar.count) != (header.rows, header.cols, header.count)
        {
            return Err(Error::CorruptHeader {
                path: side,
                reason: "sidecar does not describe this stack".into(),
            });
        }
        Ok(Self {
            path: path.to_owned(),
            input,
            header,
            sidecar,
            next: 0,
            buf: Vec::new(),
        })
    }

    pub fn header(&self) -> &StackHeader {
        &self.header
    }

    pub fn config(&self) -> &ExperimentConfig {
        &self.sidecar.config
    }

    pub fn remaining(&self) -> usize {
        self.header.count as usize - self.next
    }

    /// Up to `max` further frames; empty once the stack is exhausted.
    pub fn next_chunk(&mut self, max: usize) -> Result<Vec<Frame>> {
        let n = max.min(self.remaining());
        let values = self.header.frame_values();
        let mut frames = Vec::with_capacity(n);
        for _ in 0..n {
            self.buf.resize(values * 4, 0);
            self.input.read_exact(&mut self.buf).map_err(|e| Error::io(&self.path, e))?;
            let meta = self.sidecar.frames[self.next];
            frames.push(Frame {
                rows: self.header.rows as usize,
                cols: self.header.cols as usize,
                counts: self
                    .buf
                    .chunks_exact(4)
                    .map(|c| f64::from(u32::from_le_bytes(c.try_into().unwrap())))
                    .collect(),
                pulse_index: meta.pulse_index,
                pulse_energy: meta.pulse_energy,
                kind: self.header.kind,
                cosmic_rays: meta.cosmic_rays,
            });
            self.next += 1;
        }
        Ok(frames)
    }
}

#[derive(Debug, Clone)]
pub struct StackFile {
    pub header: StackHeader,
    pub config: ExperimentConfig,
    pub frames: Vec<Frame>,
}

pub fn read_stack(path: &Path) -> Result<StackFile> {
    let mut r = StackReader::open(path)?;
    let frames = r.next_chunk(usize::MAX)?;
    Ok(StackFile {
        header: r.header,
        config: r.sidecar.config,
        frames,
    })
}
