//! On-disk layout of a table file.
//!
//! ```text
//! [data block]*  [bloom section]  [index block]  [footer, 64 bytes]
//!
//! data block   : [u8 algo][u8 level][u32 raw_len][payload][u32 crc32(payload)]
//! block entry  : [u8 kind][u32 key_len][u32 value_len][key][value]   (raw, pre-compression)
//! index block  : [u64 block_count]
//!                ([u64 offset][u64 payload_len][u32 key_len][first_key])*
//!                [u32 key_len][last_key]
//! footer       : 0  u64 bloom_offset
//!                8  u64 index_offset
//!                16 u64 entry_count
//!                24 u64 tombstone_count
//!                32 u64 raw_bytes_total        (sum of key + value lengths)
//!                40 u64 compressed_bytes_total (on-disk bytes of all data blocks)
//!                48 u32 target_block_size
//!                52 u8  algo, 53 u8 level
//!                54 u16 format_version
//!                56 u32 crc32(footer[0..56])
//!                60 "PPCS"
//! ```
//!
//! Integers are little-endian. The magic reads as 0x50504353 big-endian.

use crate::codec::CodecSpec;
use crate::error::{Error, Result};

pub const MAGIC: [u8; 4] = *b"PPCS";
pub const FORMAT_VERSION: u16 = 1;
pub const FOOTER_SIZE: usize = 64;
pub const BLOCK_HEADER_SIZE: usize = 6;
pub const BLOCK_TRAILER_SIZE: usize = 4;
pub const ENTRY_HEADER_SIZE: usize = 9;

pub(crate) const KIND_VALUE: u8 = 0;
pub(crate) const KIND_TOMBSTONE: u8 = 1;

/// Location and first key of one compressed data block.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BlockHandle {
    pub offset: u64,
    /// Compressed payload length, excluding the block header and CRC.
    pub length: u64,
    pub first_key: Vec<u8>,
}

impl BlockHandle {
    /// Bytes the block occupies on disk.
    pub fn extent(&self) -> u64 {
        self.length + (BLOCK_HEADER_SIZE + BLOCK_TRAILER_SIZE) as u64
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TableFooter {
    pub bloom_offset: u64,
    pub index_offset: u64,
    pub entry_count: u64,
    pub tombstone_count: u64,
    pub raw_bytes_total: u64,
    pub compressed_bytes_total: u64,
    pub target_block_size: u32,
    pub codec: CodecSpec,
    pub format_version: u16,
}

impl TableFooter {
    pub fn encode(&self) -> [u8; FOOTER_SIZE] {
        let mut out = [0u8; FOOTER_SIZE];
        out[0..8].copy_from_slice(&self.bloom_offset.to_le_bytes());
        out[8..16].copy_from_slice(&self.index_offset.to_le_bytes());
        out[16..24].copy_from_slice(&self.entry_count.to_le_bytes());
        out[24..32].copy_from_slice(&self.tombstone_count.to_le_bytes());
        out[32..40].copy_from_slice(&self.raw_bytes_total.to_le_bytes());
        out[40..48].copy_from_slice(&self.compressed_bytes_total.to_le_bytes());
        out[48..52].copy_from_slice(&self.target_block_size.to_le_bytes());
        out[52] = self.codec.algorithm().tag();
        out[53] = self.codec.level_byte();
        out[54..56].copy_from_slice(&self.format_version.to_le_bytes());
        let crc = crc32fast::hash(&out[0..56]);
        out[56..60].copy_from_slice(&crc.to_le_bytes());
        out[60..64].copy_from_slice(&MAGIC);
        out
    }

    pub fn decode(buf: &[u8]) -> Result<Self> {
        if buf.len() != FOOTER_SIZE {
            return Err(Error::Format(format!("footer must be {FOOTER_SIZE} bytes")));
        }
        if buf[60..64] != MAGIC {
            return Err(Error::Format("bad magic".into()));
        }
        let crc = u32::from_le_bytes(buf[56..60].try_into().expect("4 bytes"));
        if crc != crc32fast::hash(&buf[0..56]) {
            return Err(Error::Integrity("footer checksum mismatch".into()));
        }
        let u64_at = |at: usize| u64::from_le_bytes(buf[at..at + 8].try_into().expect("8 bytes"));
        let format_version = u16::from_le_bytes([buf[54], buf[55]]);
        if format_version != FORMAT_VERSION {
            return Err(Error::Format(format!("unsupported format version {format_version}")));
        }
        Ok(Self {
            bloom_offset: u64_at(0),
            index_offset: u64_at(8),
            entry_count: u64_at(16),
            tombstone_count: u64_at(24),
            raw_bytes_total: u64_at(32),
            compressed_bytes_total: u64_at(40),
            target_block_size: u32::from_le_bytes(buf[48..52].try_into().expect("4 bytes")),
            codec: CodecSpec::from_tag_bytes(buf[52], buf[53])?,
            format_version,
        })
    }
}

pub(crate) fn encode_index(handles: &[BlockHandle], last_key: &[u8]) -> Vec<u8> {
    let mut out = Vec::with_capacity(8 + handles.iter().map(|h| 20 + h.first_key.len()).sum::<usize>());
    out.extend_from_slice(&(handles.len() as u64).to_le_bytes());
    for h in handles {
        out.extend_from_slice(&h.offset.to_le_bytes());
        out.extend_from_slice(&h.length.to_le_bytes());
        out.extend_from_slice(&(h.first_key.len() as u32).to_le_bytes());
        out.extend_from_slice(&h.first_key);
    }
    out.extend_from_slice(&(last_key.len() as u32).to_le_bytes());
    out.extend_from_slice(last_key);
    out
}

pub(crate) fn decode_index(mut buf: &[u8]) -> Result<(Vec<BlockHandle>, Vec<u8>)> {
    let short = || Error::Format("index block truncated".into());
    fn take<'a>(buf: &mut &'a [u8], n: usize) -> Option<&'a [u8]> {
        if buf.len() < n {
            return None;
        }
        let (head, rest) = buf.split_at(n);
        *buf = rest;
        Some(head)
    }
    let count = u64::from_le_bytes(take(&mut buf, 8).ok_or_else(short)?.try_into().expect("8"));
    let mut handles = Vec::with_capacity(count.min(1 << 24) as usize);
    for _ in 0..count {
        let offset = u64::from_le_bytes(take(&mut buf, 8).ok_or_else(short)?.try_into().expect("8"));
        let length = u64::from_le_bytes(take(&mut buf, 8).ok_or_else(short)?.try_into().expect("8"));
        let klen = u32::from_le_bytes(take(&mut buf, 4).ok_or_else(short)?.try_into().expect("4"));
        let first_key = take(&mut buf, klen as usize).ok_or_else(short)?.to_vec();
        handles.push(BlockHandle {
            offset,
            length,
            first_key,
        });
    }
    let klen = u32::from_le_bytes(take(&mut buf, 4).ok_or_else(short)?.try_into().expect("4"));
    let last_key = take(&mut buf, klen as usize).ok_or_else(short)?.to_vec();
    if !buf.is_empty() {
        return Err(Error::Format("trailing bytes after index".into()));
    }
    for pair in handles.windows(2) {
        if pair[1].offset <= pair[0].offset || pair[1].first_key <= pair[0].first_key {
            return Err(Error::Format("index handles not strictly increasing".into()));
        }
    }
    Ok((handles, last_key))
}

/// One decoded entry inside a raw block; `value == None` is a tombstone.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct RawEntry<'a> {
    pub key: &'a [u8],
    pub value: Option<&'a [u8]>,
}

pub(crate) fn push_entry(block: &mut Vec<u8>, key: &[u8], value: Option<&[u8]>) {
    let (kind, val) = match value {
        Some(v) => (KIND_VALUE, v),
        None => (KIND_TOMBSTONE, &[][..]),
    };
    block.push(kind);
    block.extend_from_slice(&(key.len() as u32).to_le_bytes());
    block.extend_from_slice(&(val.len() as u32).to_le_bytes());
    block.extend_from_slice(key);
    block.extend_from_slice(val);
}

/// Parses the entry at `pos`; returns it and the position of the next one.
pub(crate) fn entry_at(block: &[u8], pos: usize) -> Result<(RawEntry<'_>, usize)> {
    let bad = || Error::Integrity("malformed entry inside block".into());
    let header = block.get(pos..pos + ENTRY_HEADER_SIZE).ok_or_else(bad)?;
    let kind = header[0];
    let klen = u32::from_le_bytes(header[1..5].try_into().expect("4")) as usize;
    let vlen = u32::from_le_bytes(header[5..9].try_into().expect("4")) as usize;
    let kstart = pos + ENTRY_HEADER_SIZE;
    let vstart = kstart.checked_add(klen).ok_or_else(bad)?;
    let end = vstart.checked_add(vlen).ok_or_else(bad)?;
    let key = block.get(kstart..vstart).ok_or_else(bad)?;
    let val = block.get(vstart..end).ok_or_else(bad)?;
    let value = match kind {
        KIND_VALUE => Some(val),
        KIND_TOMBSTONE => None,
        _ => return Err(bad()),
    };
    Ok((RawEntry { key, value }, end))
}
