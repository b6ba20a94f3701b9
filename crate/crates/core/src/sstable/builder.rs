use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use crate::codec::{self, CodecSpec};
use crate::error::{Error, IoContext, Result};

use super::bloom::{BloomFilter, KeyHash};
use super::format::{
    encode_index, push_entry, BlockHandle, TableFooter, BLOCK_HEADER_SIZE, BLOCK_TRAILER_SIZE, FORMAT_VERSION,
};

pub const MIN_BLOCK_SIZE: usize = 1024;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TableOptions {
    /// Raw (pre-compression) size at which a block is closed.
    pub target_block_size: usize,
    pub codec: CodecSpec,
    pub bits_per_key: f64,
}

impl TableOptions {
    pub fn new(target_block_size: usize, codec: CodecSpec, bits_per_key: f64) -> Result<Self> {
        if target_block_size < MIN_BLOCK_SIZE || target_block_size > u32::MAX as usize {
            return Err(Error::Config(format!(
                "target block size {target_block_size} outside {MIN_BLOCK_SIZE}..=4GiB"
            )));
        }
        if !(bits_per_key.is_finite() && bits_per_key > 0.0) {
            return Err(Error::Config(format!("bits_per_key must be > 0, got {bits_per_key}")));
        }
        Ok(Self {
            target_block_size,
            codec,
            bits_per_key,
        })
    }
}

/// What a finished table contains.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TableSummary {
    pub path: PathBuf,
    pub file_size: u64,
    pub block_count: usize,
    pub entry_count: u64,
    pub tombstone_count: u64,
    pub raw_bytes: u64,
    pub first_key: Option<Vec<u8>>,
    pub last_key: Option<Vec<u8>>,
}

/// Streams strictly increasing entries into a new table file.
pub struct TableBuilder {
    path: PathBuf,
    out: BufWriter<File>,
    opts: TableOptions,
    offset: u64,
    block: Vec<u8>,
    block_first_key: Option<Vec<u8>>,
    first_key: Option<Vec<u8>>,
    last_key: Option<Vec<u8>>,
    index: Vec<BlockHandle>,
    hashes: Vec<KeyHash>,
    entries: u64,
    tombstones: u64,
    raw_total: u64,
    compressed_total: u64,
}

impl TableBuilder {
    pub fn create(path: impl AsRef<Path>, opts: TableOptions) -> Result<Self> {
        let path = path.as_ref().to_path_buf();
        let file = File::create(&path).ctx("creating table", &path)?;
        Ok(Self {
            out: BufWriter::with_capacity(1 << 20, file),
            path,
            block: Vec::with_capacity(opts.target_block_size + 4096),
            opts,
            offset: 0,
            block_first_key: None,
            first_key: None,
            last_key: None,
            index: Vec::new(),
            hashes: Vec::new(),
            entries: 0,
            tombstones: 0,
            raw_total: 0,
            compressed_total: 0,
        })
    }

    /// Adds an entry; `None` records a tombstone.
    pub fn add(&mut self, key: &[u8], value: Option<&[u8]>) -> Result<()> {
        if let Some(prev) = &self.last_key {
            if key <= prev.as_slice() {
                return Err(Error::SortViolation(format!(
                    "key {:?} does not follow {:?} in {}",
                    String::from_utf8_lossy(key),
                    String::from_utf8_lossy(prev),
                    self.path.display()
                )));
            }
        }
        if self.block_first_key.is_none() {
            self.block_first_key = Some(key.to_vec());
        }
        if self.first_key.is_none() {
            self.first_key = Some(key.to_vec());
        }
        push_entry(&mut self.block, key, value);
        self.hashes.push(KeyHash::of(key));
        self.entries += 1;
        match value {
            Some(v) => self.raw_total += (key.len() + v.len()) as u64,
            None => {
                self.tombstones += 1;
                self.raw_total += key.len() as u64;
            }
        }
        match &mut self.last_key {
            Some(last) => {
                last.clear();
                last.extend_from_slice(key);
            }
            None => self.last_key = Some(key.to_vec()),
        }
        if self.block.len() >= self.opts.target_block_size {
            self.finish_block()?;
        }
        Ok(())
    }

    /// Raw bytes (keys + values) added so far.
    pub fn raw_bytes(&self) -> u64 {
        self.raw_total
    }

    pub fn entry_count(&self) -> u64 {
        self.entries
    }

    /// Bytes written to the file so far (closed blocks only).
    pub fn written_bytes(&self) -> u64 {
        self.offset
    }

    fn write(&mut self, bytes: &[u8]) -> Result<()> {
        let at = self.offset;
        self.out
            .write_all(bytes)
            .map_err(|e| Error::io(format!("writing {} at offset {at}", self.path.display()), e))?;
        self.offset += bytes.len() as u64;
        Ok(())
    }

    fn finish_block(&mut self) -> Result<()> {
        let Some(first_key) = self.block_first_key.take() else {
            return Ok(());
        };
        let payload = codec::compress(&self.block, self.opts.codec)?;
        let mut header = [0u8; BLOCK_HEADER_SIZE];
        header[0] = self.opts.codec.algorithm().tag();
        header[1] = self.opts.codec.level_byte();
        header[2..6].copy_from_slice(&(self.block.len() as u32).to_le_bytes());
        let crc = crc32fast::hash(&payload);
        let handle = BlockHandle {
            offset: self.offset,
            length: payload.len() as u64,
            first_key,
        };
        self.write(&header)?;
        self.write(&payload)?;
        self.write(&crc.to_le_bytes())?;
        self.compressed_total += (BLOCK_HEADER_SIZE + payload.len() + BLOCK_TRAILER_SIZE) as u64;
        self.index.push(handle);
        self.block.clear();
        Ok(())
    }

    pub fn finish(mut self) -> Result<TableSummary> {
        self.finish_block()?;
        let bloom_offset = self.offset;
        let bloom = BloomFilter::from_hashes(&self.hashes, self.opts.bits_per_key).to_bytes();
        self.write(&bloom)?;
        let index_offset = self.offset;
        let index = encode_index(&self.index, self.last_key.as_deref().unwrap_or_default());
        self.write(&index)?;
        let footer = TableFooter {
            bloom_offset,
            index_offset,
            entry_count: self.entries,
            tombstone_count: self.tombstones,
            raw_bytes_total: self.raw_total,
            compressed_bytes_total: self.compressed_total,
            target_block_size: self.opts.target_block_size as u32,
            codec: self.opts.codec,
            format_version: FORMAT_VERSION,
        };
        self.write(&footer.encode())?;
        self.out.flush().ctx("flushing table", &self.path)?;
        self.out.get_ref().sync_all().ctx("syncing table", &self.path)?;
        Ok(TableSummary {
            path: self.path,
            file_size: self.offset,
            block_count: self.index.len(),
            entry_count: self.entries,
            tombstone_count: self.tombstones,
            raw_bytes: self.raw_total,
            first_key: self.first_key,
            last_key: self.last_key,
        })
    }
}

/// Writes a complete table from key-ordered `(key, value)` pairs.
pub fn build_table<K, V, I>(path: impl AsRef<Path>, entries: I, opts: TableOptions) -> Result<TableSummary>
where
    K: AsRef<[u8]>,
    V: AsRef<[u8]>,
    I: IntoIterator<Item = (K, V)>,
{
    let mut builder = TableBuilder::create(path, opts)?;
    for (k, v) in entries {
        builder.add(k.as_ref(), Some(v.as_ref()))?;
    }
    builder.finish()
}
