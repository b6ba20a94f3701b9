use std::fs::File;
use std::os::unix::fs::FileExt;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use memmap2::Mmap;

use crate::codec::{self, CodecSpec};
use crate::error::{Error, IoContext, Result};

use super::bloom::BloomFilter;
use super::format::{
    decode_index, entry_at, BlockHandle, TableFooter, BLOCK_HEADER_SIZE, BLOCK_TRAILER_SIZE, FOOTER_SIZE,
};

/// A stored value or a deletion marker.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Cell {
    Value(Vec<u8>),
    Tombstone,
}

impl Cell {
    pub fn into_value(self) -> Option<Vec<u8>> {
        match self {
            Cell::Value(v) => Some(v),
            Cell::Tombstone => None,
        }
    }

    pub fn is_tombstone(&self) -> bool {
        matches!(self, Cell::Tombstone)
    }
}

/// Point-lookup instrumentation. Range scans are counted separately so that
/// compaction does not pollute lookup numbers.
#[derive(Debug, Default)]
pub struct ReadCounters {
    pub blocks_read: AtomicU64,
    pub bytes_decompressed: AtomicU64,
    pub bloom_rejections: AtomicU64,
    pub scan_blocks_read: AtomicU64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ReadCountersSnapshot {
    pub blocks_read: u64,
    pub bytes_decompressed: u64,
    pub bloom_rejections: u64,
    pub scan_blocks_read: u64,
}

impl ReadCounters {
    pub fn snapshot(&self) -> ReadCountersSnapshot {
        ReadCountersSnapshot {
            blocks_read: self.blocks_read.load(Ordering::Relaxed),
            bytes_decompressed: self.bytes_decompressed.load(Ordering::Relaxed),
            bloom_rejections: self.bloom_rejections.load(Ordering::Relaxed),
            scan_blocks_read: self.scan_blocks_read.load(Ordering::Relaxed),
        }
    }
}

enum Source {
    File(File),
    Mmap(Mmap),
}

impl Source {
    fn read_exact_at(&self, buf: &mut [u8], offset: u64) -> std::io::Result<()> {
        match self {
            Source::File(f) => f.read_exact_at(buf, offset),
            Source::Mmap(m) => {
                let start = offset as usize;
                let src = m
                    .get(start..start + buf.len())
                    .ok_or_else(|| std::io::Error::new(std::io::ErrorKind::UnexpectedEof, "read past end of map"))?;
                buf.copy_from_slice(src);
                Ok(())
            }
        }
    }
}

/// An open, immutable table. Safe to share across reader threads.
pub struct Table {
    path: PathBuf,
    source: Source,
    footer: TableFooter,
    index: Vec<BlockHandle>,
    last_key: Vec<u8>,
    bloom: BloomFilter,
    file_size: u64,
    counters: ReadCounters,
}

impl std::fmt::Debug for Table {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Table")
            .field("path", &self.path)
            .field("blocks", &self.index.len())
            .field("entries", &self.footer.entry_count)
            .finish()
    }
}

impl Table {
    pub fn open(path: impl AsRef<Path>) -> Result<Self> {
        Self::open_with(path, false)
    }

    pub fn open_with(path: impl AsRef<Path>, mmap: bool) -> Result<Self> {
        let path = path.as_ref().to_path_buf();
        let file = File::open(&path).ctx("opening table", &path)?;
        let file_size = file.metadata().ctx("stat table", &path)?.len();
        if file_size < FOOTER_SIZE as u64 {
            return Err(Error::Format(format!(
                "{} is truncated ({file_size} bytes)",
                path.display()
            )));
        }
        let source = if mmap {
            // SAFETY: table files are never written after `finish`; removing
            // one (compaction) unlinks it without invalidating live mappings.
            let map = unsafe { Mmap::map(&file) }.ctx("mapping table", &path)?;
            Source::Mmap(map)
        } else {
            Source::File(file)
        };
        let mut footer_buf = [0u8; FOOTER_SIZE];
        source
            .read_exact_at(&mut footer_buf, file_size - FOOTER_SIZE as u64)
            .ctx("reading footer of", &path)?;
        let footer = TableFooter::decode(&footer_buf).map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
        let footer_start = file_size - FOOTER_SIZE as u64;
        if footer.bloom_offset > footer.index_offset || footer.index_offset > footer_start {
            return Err(Error::Format(format!(
                "{}: section offsets out of range (truncated?)",
                path.display()
            )));
        }
        let mut bloom_buf = vec![0u8; (footer.index_offset - footer.bloom_offset) as usize];
        source
            .read_exact_at(&mut bloom_buf, footer.bloom_offset)
            .ctx("reading bloom of", &path)?;
        let bloom = BloomFilter::from_bytes(&bloom_buf)?;
        let mut index_buf = vec![0u8; (footer_start - footer.index_offset) as usize];
        source
            .read_exact_at(&mut index_buf, footer.index_offset)
            .ctx("reading index of", &path)?;
        let (index, last_key) = decode_index(&index_buf)?;
        if let Some(last) = index.last() {
            if last.offset + last.extent() > footer.bloom_offset {
                return Err(Error::Format(format!("{}: block past data end", path.display())));
            }
        }
        Ok(Self {
            path,
            source,
            footer,
            index,
            last_key,
            bloom,
            file_size,
            counters: ReadCounters::default(),
        })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn footer(&self) -> &TableFooter {
        &self.footer
    }

    pub fn codec(&self) -> CodecSpec {
        self.footer.codec
    }

    pub fn file_size(&self) -> u64 {
        self.file_size
    }

    pub fn entry_count(&self) -> u64 {
        self.footer.entry_count
    }

    pub fn block_handles(&self) -> &[BlockHandle] {
        &self.index
    }

    pub fn bloom(&self) -> &BloomFilter {
        &self.bloom
    }

    pub fn counters(&self) -> &ReadCounters {
        &self.counters
    }

    pub fn first_key(&self) -> Option<&[u8]> {
        self.index.first().map(|h| h.first_key.as_slice())
    }

    pub fn last_key(&self) -> Option<&[u8]> {
        (!self.index.is_empty()).then_some(self.last_key.as_slice())
    }

    /// Whether `[from, to]` (inclusive) intersects this table's key range.
    pub fn overlaps(&self, from: &[u8], to: &[u8]) -> bool {
        match (self.first_key(), self.last_key()) {
            (Some(lo), Some(hi)) => from <= hi && to >= lo,
            _ => false,
        }
    }

    /// Index of the block that could contain `key`: the last block whose
    /// first key is `<= key`.
    pub fn block_for(&self, key: &[u8]) -> Option<usize> {
        let n = self.index.partition_point(|h| h.first_key.as_slice() <= key);
        n.checked_sub(1)
    }

    /// Reads, verifies and decompresses one data block.
    pub fn read_block(&self, idx: usize) -> Result<Vec<u8>> {
        let handle = &self.index[idx];
        let mut buf = vec![0u8; handle.extent() as usize];
        self.source
            .read_exact_at(&mut buf, handle.offset)
            .map_err(|e| match e.kind() {
                std::io::ErrorKind::UnexpectedEof => {
                    Error::Format(format!("{}: block {idx} truncated", self.path.display()))
                }
                _ => Error::io(format!("reading block {idx} of {}", self.path.display()), e),
            })?;
        let (header, rest) = buf.split_at(BLOCK_HEADER_SIZE);
        let (payload, trailer) = rest.split_at(rest.len() - BLOCK_TRAILER_SIZE);
        let stored_crc = u32::from_le_bytes(trailer.try_into().expect("4 bytes"));
        if crc32fast::hash(payload) != stored_crc {
            return Err(Error::Integrity(format!(
                "{}: checksum mismatch in block {idx} at offset {}",
                self.path.display(),
                handle.offset
            )));
        }
        let spec = CodecSpec::from_tag_bytes(header[0], header[1])
            .map_err(|e| Error::Integrity(format!("block {idx}: {e}")))?;
        let raw_len = u32::from_le_bytes(header[2..6].try_into().expect("4 bytes")) as usize;
        codec::decompress_sized(payload, spec, Some(raw_len))
    }

    fn read_block_counted(&self, idx: usize) -> Result<Vec<u8>> {
        let block = self.read_block(idx)?;
        self.counters.blocks_read.fetch_add(1, Ordering::Relaxed);
        self.counters
            .bytes_decompressed
            .fetch_add(block.len() as u64, Ordering::Relaxed);
        Ok(block)
    }

    fn find_in_block(block: &[u8], key: &[u8]) -> Result<Option<Cell>> {
        let mut pos = 0;
        while pos < block.len() {
            let (entry, next) = entry_at(block, pos)?;
            match entry.key.cmp(key) {
                std::cmp::Ordering::Less => pos = next,
                std::cmp::Ordering::Equal => {
                    return Ok(Some(match entry.value {
                        Some(v) => Cell::Value(v.to_vec()),
                        None => Cell::Tombstone,
                    }))
                }
                std::cmp::Ordering::Greater => break,
            }
        }
        Ok(None)
    }

    /// Point lookup. Touches at most one data block, and none when the bloom
    /// filter or the index rule the key out.
    pub fn get(&self, key: &[u8]) -> Result<Option<Cell>> {
        if !self.bloom.may_contain(key) {
            self.counters.bloom_rejections.fetch_add(1, Ordering::Relaxed);
            return Ok(None);
        }
        if key > self.last_key.as_slice() {
            return Ok(None);
        }
        let Some(idx) = self.block_for(key) else {
            return Ok(None);
        };
        let block = self.read_block_counted(idx)?;
        Self::find_in_block(&block, key)
    }

    /// Lookup that folds tombstones into absence.
    pub fn get_value(&self, key: &[u8]) -> Result<Option<Vec<u8>>> {
        Ok(self.get(key)?.and_then(Cell::into_value))
    }

    /// Looks up a batch of keys sorted ascending (duplicates allowed),
    /// decompressing each needed block once.
    pub fn get_sorted(&self, keys: &[&[u8]]) -> Result<Vec<Option<Cell>>> {
        let mut out = vec![None; keys.len()];
        let mut current: Option<(usize, Vec<u8>)> = None;
        for (i, key) in keys.iter().enumerate() {
            if i > 0 && keys[i - 1] == *key {
                out[i] = out[i - 1].clone();
                continue;
            }
            if !self.bloom.may_contain(key) {
                self.counters.bloom_rejections.fetch_add(1, Ordering::Relaxed);
                continue;
            }
            if *key > self.last_key.as_slice() {
                continue;
            }
            let Some(idx) = self.block_for(key) else {
                continue;
            };
            if current.as_ref().map(|(b, _)| *b) != Some(idx) {
                current = Some((idx, self.read_block_counted(idx)?));
            }
            let (_, block) = current.as_ref().expect("set above");
            out[i] = Self::find_in_block(block, key)?;
        }
        Ok(out)
    }

    /// Entries with `from <= key < to`, in key order, tombstones included.
    pub fn scan(self: &Arc<Self>, from: &[u8], to: &[u8]) -> Result<Vec<(Vec<u8>, Cell)>> {
        if from > to {
            return Err(Error::Precondition("scan range has from > to".into()));
        }
        self.iter_range(Some(from), Some(to)).collect()
    }

    pub fn iter(self: &Arc<Self>) -> TableIter {
        self.iter_range(None, None)
    }

    /// Streaming iterator over `[from, to)`; `None` bounds are open.
    pub fn iter_range(self: &Arc<Self>, from: Option<&[u8]>, to: Option<&[u8]>) -> TableIter {
        let start_block = match from {
            Some(k) => self.block_for(k).unwrap_or(0),
            None => 0,
        };
        TableIter {
            table: Arc::clone(self),
            next_block: start_block,
            block: Vec::new(),
            pos: 0,
            from: from.map(<[u8]>::to_vec),
            to: to.map(<[u8]>::to_vec),
            done: false,
        }
    }
}

/// Owning iterator over a table's entries.
pub struct TableIter {
    table: Arc<Table>,
    next_block: usize,
    block: Vec<u8>,
    pos: usize,
    from: Option<Vec<u8>>,
    to: Option<Vec<u8>>,
    done: bool,
}

impl Iterator for TableIter {
    type Item = Result<(Vec<u8>, Cell)>;

    fn next(&mut self) -> Option<Self::Item> {
        loop {
            if self.done {
                return None;
            }
            if self.pos >= self.block.len() {
                if self.next_block >= self.table.index.len() {
                    self.done = true;
                    return None;
                }
                if let Some(to) = &self.to {
                    if self.table.index[self.next_block].first_key >= *to {
                        self.done = true;
                        return None;
                    }
                }
                match self.table.read_block(self.next_block) {
                    Ok(b) => {
                        self.table.counters.scan_blocks_read.fetch_add(1, Ordering::Relaxed);
                        self.block = b;
                        self.pos = 0;
                        self.next_block += 1;
                    }
                    Err(e) => {
                        self.done = true;
                        return Some(Err(e));
                    }
                }
                continue;
            }
            let (entry, next) = match entry_at(&self.block, self.pos) {
                Ok(x) => x,
                Err(e) => {
                    self.done = true;
                    return Some(Err(e));
                }
            };
            self.pos = next;
            if let Some(from) = &self.from {
                if entry.key < from.as_slice() {
                    continue;
                }
            }
            if let Some(to) = &self.to {
                if entry.key >= to.as_slice() {
                    self.done = true;
                    return None;
                }
            }
            let cell = match entry.value {
                Some(v) => Cell::Value(v.to_vec()),
                None => Cell::Tombstone,
            };
            return Some(Ok((entry.key.to_vec(), cell)));
        }
    }
}
