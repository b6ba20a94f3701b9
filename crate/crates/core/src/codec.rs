//! Block codecs: identity, zstd, deflate (zlib container) and snappy.

use std::cell::RefCell;
use std::fmt;
use std::io::{Read, Write};
use std::str::FromStr;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Algorithm {
    Identity,
    Zstd,
    Deflate,
    Snappy,
}

impl Algorithm {
    pub fn tag(self) -> u8 {
        match self {
            Algorithm::Identity => 0,
            Algorithm::Zstd => 1,
            Algorithm::Deflate => 2,
            Algorithm::Snappy => 3,
        }
    }

    pub fn from_tag(tag: u8) -> Result<Self> {
        Ok(match tag {
            0 => Algorithm::Identity,
            1 => Algorithm::Zstd,
            2 => Algorithm::Deflate,
            3 => Algorithm::Snappy,
            other => return Err(Error::Format(format!("unknown codec tag {other}"))),
        })
    }

    pub fn name(self) -> &'static str {
        match self {
            Algorithm::Identity => "identity",
            Algorithm::Zstd => "zstd",
            Algorithm::Deflate => "deflate",
            Algorithm::Snappy => "snappy",
        }
    }

    fn level_range(self) -> Option<(u8, u8)> {
        match self {
            Algorithm::Zstd => Some((1, 22)),
            Algorithm::Deflate => Some((1, 9)),
            Algorithm::Identity | Algorithm::Snappy => None,
        }
    }
}

/// An algorithm and, where it has one, a compression level.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct CodecSpec {
    algorithm: Algorithm,
    level: u8,
}

impl CodecSpec {
    pub const IDENTITY: CodecSpec = CodecSpec {
        algorithm: Algorithm::Identity,
        level: 0,
    };
    pub const SNAPPY: CodecSpec = CodecSpec {
        algorithm: Algorithm::Snappy,
        level: 0,
    };

    pub fn new(algorithm: Algorithm, level: Option<u8>) -> Result<Self> {
        match (algorithm.level_range(), level) {
            (Some((lo, hi)), Some(l)) if (lo..=hi).contains(&l) => Ok(Self { algorithm, level: l }),
            (Some((lo, hi)), Some(l)) => Err(Error::Config(format!(
                "{} level {l} outside {lo}..={hi}",
                algorithm.name()
            ))),
            (Some(_), None) => Err(Error::Config(format!("{} requires a level", algorithm.name()))),
            (None, Some(_)) => Err(Error::Config(format!("{} takes no level", algorithm.name()))),
            (None, None) => Ok(Self { algorithm, level: 0 }),
        }
    }

    pub fn zstd(level: u8) -> Result<Self> {
        Self::new(Algorithm::Zstd, Some(level))
    }

    pub fn deflate(level: u8) -> Result<Self> {
        Self::new(Algorithm::Deflate, Some(level))
    }

    pub fn algorithm(&self) -> Algorithm {
        self.algorithm
    }

    /// Level, or `None` for identity and snappy.
    pub fn level(&self) -> Option<u8> {
        self.algorithm.level_range().map(|_| self.level)
    }

    /// Level byte as stored in block headers (0 when the codec has none).
    pub fn level_byte(&self) -> u8 {
        self.level
    }

    pub fn from_tag_bytes(algo: u8, level: u8) -> Result<Self> {
        let algorithm = Algorithm::from_tag(algo)?;
        let level = algorithm.level_range().map(|_| level);
        Self::new(algorithm, level).map_err(|e| Error::Format(e.to_string()))
    }

    pub fn compress(&self, raw: &[u8]) -> Result<Vec<u8>> {
        compress(raw, *self)
    }

    pub fn decompress(&self, data: &[u8]) -> Result<Vec<u8>> {
        decompress(data, *self)
    }
}

impl fmt::Display for CodecSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.level() {
            Some(l) => write!(f, "{}:{l}", self.algorithm.name()),
            None => f.write_str(self.algorithm.name()),
        }
    }
}

impl FromStr for CodecSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (name, level) = match s.split_once(':') {
            Some((n, l)) => {
                let level = l
                    .parse::<u8>()
                    .map_err(|_| Error::Config(format!("bad codec level in {s:?}")))?;
                (n, Some(level))
            }
            None => (s, None),
        };
        let algorithm = match name {
            "identity" => Algorithm::Identity,
            "zstd" => Algorithm::Zstd,
            "deflate" => Algorithm::Deflate,
            "snappy" => Algorithm::Snappy,
            other => return Err(Error::Config(format!("unknown codec {other:?}"))),
        };
        Self::new(algorithm, level)
    }
}

thread_local! {
    static ZSTD_COMPRESSOR: RefCell<Option<(i32, zstd::bulk::Compressor<'static>)>> =
        const { RefCell::new(None) };
    static ZSTD_DECOMPRESSOR: RefCell<Option<zstd::bulk::Decompressor<'static>>> =
        const { RefCell::new(None) };
}

fn zstd_compress(raw: &[u8], level: i32) -> Result<Vec<u8>> {
    ZSTD_COMPRESSOR.with(|cell| {
        let mut slot = cell.borrow_mut();
        if slot.as_ref().map(|(l, _)| *l) != Some(level) {
            let mut c =
                zstd::bulk::Compressor::new(level).map_err(|e| Error::Config(format!("zstd level {level}: {e}")))?;
            c.include_checksum(true)
                .map_err(|e| Error::Config(format!("zstd checksum flag: {e}")))?;
            *slot = Some((level, c));
        }
        let (_, c) = slot.as_mut().expect("initialized above");
        c.compress(raw)
            .map_err(|e| Error::Integrity(format!("zstd compression failed: {e}")))
    })
}

fn zstd_decompress(data: &[u8], raw_len: Option<usize>) -> Result<Vec<u8>> {
    let capacity = match raw_len {
        Some(n) => n,
        None => match zstd::zstd_safe::get_frame_content_size(data) {
            Ok(Some(n)) if n <= (1u64 << 34) => n as usize,
            _ => return zstd::stream::decode_all(data).map_err(|e| Error::Integrity(format!("zstd: {e}"))),
        },
    };
    ZSTD_DECOMPRESSOR.with(|cell| {
        let mut slot = cell.borrow_mut();
        if slot.is_none() {
            *slot = Some(zstd::bulk::Decompressor::new().map_err(|e| Error::Integrity(format!("zstd context: {e}")))?);
        }
        let d = slot.as_mut().expect("initialized above");
        d.decompress(data, capacity)
            .map_err(|e| Error::Integrity(format!("zstd: {e}")))
    })
}

pub fn compress(raw: &[u8], spec: CodecSpec) -> Result<Vec<u8>> {
    match spec.algorithm {
        Algorithm::Identity => Ok(raw.to_vec()),
        Algorithm::Zstd => zstd_compress(raw, i32::from(spec.level)),
        Algorithm::Deflate => {
            let mut enc = flate2::write::ZlibEncoder::new(
                Vec::with_capacity(raw.len() / 2 + 64),
                flate2::Compression::new(u32::from(spec.level)),
            );
            enc.write_all(raw)
                .and_then(|_| enc.finish())
                .map_err(|e| Error::io("deflate compression", e))
        }
        Algorithm::Snappy => snap::raw::Encoder::new()
            .compress_vec(raw)
            .map_err(|e| Error::Integrity(format!("snappy compression failed: {e}"))),
    }
}

pub fn decompress(data: &[u8], spec: CodecSpec) -> Result<Vec<u8>> {
    decompress_sized(data, spec, None)
}

/// Decompresses and, when `raw_len` is given, checks the output length.
pub fn decompress_sized(data: &[u8], spec: CodecSpec, raw_len: Option<usize>) -> Result<Vec<u8>> {
    let out = match spec.algorithm {
        Algorithm::Identity => data.to_vec(),
        Algorithm::Zstd => zstd_decompress(data, raw_len)?,
        Algorithm::Deflate => {
            let mut out = Vec::with_capacity(raw_len.unwrap_or(data.len() * 3));
            flate2::read::ZlibDecoder::new(data)
                .read_to_end(&mut out)
                .map_err(|e| Error::Integrity(format!("deflate: {e}")))?;
            out
        }
        Algorithm::Snappy => snap::raw::Decoder::new()
            .decompress_vec(data)
            .map_err(|e| Error::Integrity(format!("snappy: {e}")))?,
    };
    if let Some(n) = raw_len {
        if out.len() != n {
            return Err(Error::Integrity(format!(
                "decompressed {} bytes, expected {n}",
                out.len()
            )));
        }
    }
    Ok(out)
}

/// `compressed / raw`; lower is better.
pub fn compression_ratio(compressed_size: u64, raw_size: u64) -> Result<f64> {
    if raw_size == 0 {
        return Err(Error::UndefinedRatio);
    }
    Ok(compressed_size as f64 / raw_size as f64)
}
