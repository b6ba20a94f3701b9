//! Two-level LSM store: memtable + WAL in front of L0 flush tables and a
//! non-overlapping L1 run.
//!
//! Lock order is writer → manifest → memtable → version. Readers take the
//! memtable read lock and then clone the current version, so a flush (which
//! swaps both under write locks) is observed either entirely or not at all.

mod compaction;
mod config;
mod manifest;
mod memtable;
mod wal;

use std::collections::HashSet;
use std::fs;
use std::path::Path;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex, MutexGuard, RwLock};
use std::thread::JoinHandle;

use crate::error::{Error, IoContext, Result};
use crate::key::PpcKey;
use crate::sstable::{Cell, ReadCountersSnapshot, Table, TableBuilder, TableOptions};

pub use config::{StoreConfig, GIB, KIB, MIB};
pub use manifest::{table_file_name, wal_file_name, Manifest};

use compaction::{split_points, write_outputs, EntryIter, MergeIter};
use manifest::{parse_file_name, FileKind};
use memtable::Memtable;
use wal::WalWriter;

/// Bytes charged per pending entry on top of its key and value when
/// projecting the compressed size of the memtable. Sized for the worst case
/// of one entry per block: entry and block headers, codec framing, an index
/// entry and bloom bits.
const ENTRY_OVERHEAD: u64 = 96;
/// Footer, bloom header and index trailer of the table a flush would add.
const TABLE_OVERHEAD: u64 = 256;

#[derive(Clone)]
struct LiveTable {
    seq: u64,
    table: Arc<Table>,
}

#[derive(Clone, Default)]
struct Version {
    /// Newest first.
    l0: Vec<LiveTable>,
    /// Sorted by key range, pairwise disjoint.
    l1: Vec<LiveTable>,
}

impl Version {
    fn tables(&self) -> impl Iterator<Item = (u8, &LiveTable)> {
        self.l0.iter().map(|t| (0, t)).chain(self.l1.iter().map(|t| (1, t)))
    }

    fn to_manifest(&self, next_seq: u64, wal_seq: u64) -> Manifest {
        Manifest {
            next_seq,
            wal_seq,
            tables: self.tables().map(|(l, t)| (l, t.seq)).collect(),
        }
    }

    fn l1_for(&self, key: &[u8]) -> Option<&LiveTable> {
        let i = self
            .l1
            .partition_point(|t| t.table.last_key().is_some_and(|last| last < key));
        self.l1
            .get(i)
            .filter(|t| t.table.first_key().is_some_and(|first| first <= key))
    }
}

struct WriterState {
    wal: WalWriter,
}

struct Inner {
    config: StoreConfig,
    opts: TableOptions,
    writer: Mutex<WriterState>,
    /// Guards manifest commits; holds the active WAL sequence.
    manifest: Mutex<u64>,
    mem: RwLock<Memtable>,
    version: RwLock<Arc<Version>>,
    next_seq: AtomicU64,
    compaction: Mutex<()>,
    background: Mutex<Option<JoinHandle<()>>>,
    background_error: Mutex<Option<String>>,
    /// Read counters of tables that compaction has retired.
    retired_reads: Mutex<ReadCountersSnapshot>,
}

/// Per-table part of [`EngineStats`].
#[derive(Debug, Clone, PartialEq)]
pub struct TableStats {
    pub seq: u64,
    pub level: u8,
    pub entries: u64,
    pub tombstones: u64,
    pub raw_bytes: u64,
    pub file_bytes: u64,
    pub blocks: usize,
    pub reads: ReadCountersSnapshot,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EngineStats {
    /// Entries stored in live tables plus the memtable. Versions shadowed by
    /// newer writes are counted until compaction removes them.
    pub entry_count: u64,
    pub tombstone_count: u64,
    /// Key + value bytes in live tables.
    pub raw_bytes: u64,
    /// On-disk size of live tables; this is what the capacity budget bounds.
    pub compressed_bytes: u64,
    /// `compressed_bytes / raw_bytes`, undefined while no table holds data.
    pub ratio: Option<f64>,
    pub memtable_entries: u64,
    pub memtable_bytes: u64,
    pub l0_tables: usize,
    pub l1_tables: usize,
    /// Point-lookup counters summed over live and retired tables.
    pub reads: ReadCountersSnapshot,
    pub tables: Vec<TableStats>,
}

/// The store handle. Cheap to share behind an `Arc`; all methods take `&self`.
pub struct Engine {
    inner: Arc<Inner>,
}

fn add_reads(a: &mut ReadCountersSnapshot, b: ReadCountersSnapshot) {
    a.blocks_read += b.blocks_read;
    a.bytes_decompressed += b.bytes_decompressed;
    a.bloom_rejections += b.bloom_rejections;
    a.scan_blocks_read += b.scan_blocks_read;
}

fn lock<T>(m: &Mutex<T>) -> MutexGuard<'_, T> {
    m.lock().unwrap_or_else(|p| p.into_inner())
}

impl Engine {
    pub fn open(config: StoreConfig) -> Result<Self> {
        config.validate()?;
        let dir = config.data_dir.clone();
        fs::create_dir_all(&dir).ctx("creating data dir", &dir)?;
        let _ = fs::remove_file(dir.join("MANIFEST.tmp"));

        let mut tables_on_disk = Vec::new();
        let mut wals_on_disk = Vec::new();
        for entry in fs::read_dir(&dir).ctx("listing", &dir)? {
            let entry = entry.ctx("listing", &dir)?;
            match entry.file_name().to_str().and_then(parse_file_name) {
                Some((FileKind::Table, s)) => tables_on_disk.push(s),
                Some((FileKind::Wal, s)) => wals_on_disk.push(s),
                None => {}
            }
        }
        let max_seen = tables_on_disk.iter().chain(&wals_on_disk).copied().max().unwrap_or(0);

        let manifest = match Manifest::load(&dir)? {
            Some(m) => m,
            None => {
                let wal_seq = wals_on_disk.iter().copied().min().unwrap_or(max_seen + 1);
                let m = Manifest {
                    next_seq: wal_seq.max(max_seen) + 1,
                    wal_seq,
                    tables: Vec::new(),
                };
                m.store(&dir)?;
                m
            }
        };
        let next_seq = manifest.next_seq.max(max_seen + 1);

        let mut version = Version::default();
        for &(level, seq) in &manifest.tables {
            let path = dir.join(table_file_name(seq));
            if !path.exists() {
                return Err(Error::Recovery(format!(
                    "table {} listed in the manifest is missing",
                    path.display()
                )));
            }
            let table = Table::open_with(&path, config.mmap_reads)
                .map_err(|e| Error::Recovery(format!("cannot open {}: {e}", path.display())))?;
            let live = LiveTable {
                seq,
                table: Arc::new(table),
            };
            if level == 0 {
                version.l0.push(live);
            } else {
                version.l1.push(live);
            }
        }
        version.l0.sort_by_key(|t| std::cmp::Reverse(t.seq));
        version.l1.sort_by(|a, b| a.table.first_key().cmp(&b.table.first_key()));
        for w in version.l1.windows(2) {
            if w[0].table.last_key() >= w[1].table.first_key() {
                return Err(Error::Recovery("manifest lists overlapping L1 tables".into()));
            }
        }

        let live: HashSet<u64> = manifest.tables.iter().map(|t| t.1).collect();
        for seq in tables_on_disk.iter().filter(|s| !live.contains(s)) {
            let path = dir.join(table_file_name(*seq));
            log::info!("removing orphan table {}", path.display());
            fs::remove_file(&path).ctx("removing orphan", &path)?;
        }
        wals_on_disk.sort_unstable();
        let mut replay = Vec::new();
        for &seq in &wals_on_disk {
            let path = dir.join(wal_file_name(seq));
            if seq < manifest.wal_seq {
                fs::remove_file(&path).ctx("removing retired WAL", &path)?;
            } else {
                replay.push(seq);
            }
        }

        let mut mem = Memtable::default();
        for &seq in &replay {
            let path = dir.join(wal_file_name(seq));
            let out = wal::replay(&path, |k, c| mem.insert(k, c))?;
            log::debug!("replayed {} records from {}", out.records, path.display());
        }
        let active = replay.last().copied().unwrap_or(manifest.wal_seq);
        let wal = WalWriter::open(&dir.join(wal_file_name(active)), config.sync_writes)?;

        let opts = config.table_options()?;
        let engine = Engine {
            inner: Arc::new(Inner {
                opts,
                writer: Mutex::new(WriterState { wal }),
                manifest: Mutex::new(manifest.wal_seq),
                mem: RwLock::new(mem),
                version: RwLock::new(Arc::new(version)),
                next_seq: AtomicU64::new(next_seq),
                compaction: Mutex::new(()),
                background: Mutex::new(None),
                background_error: Mutex::new(None),
                retired_reads: Mutex::new(ReadCountersSnapshot::default()),
                config,
            }),
        };
        if replay.len() > 1 {
            // An interrupted flush left several segments; fold them into a table.
            engine.flush()?;
        }
        Ok(engine)
    }

    pub fn config(&self) -> &StoreConfig {
        &self.inner.config
    }

    pub fn put(&self, key: &PpcKey, value: &[u8]) -> Result<()> {
        self.put_encoded(&key.encode(), value)
    }

    pub fn delete(&self, key: &PpcKey) -> Result<()> {
        self.delete_encoded(&key.encode())
    }

    pub fn get(&self, key: &PpcKey) -> Result<Option<Vec<u8>>> {
        self.get_encoded(&key.encode())
    }

    /// Put under an already-encoded key.
    pub fn put_encoded(&self, key: &[u8], value: &[u8]) -> Result<()> {
        self.inner.write(key, Cell::Value(value.to_vec()))
    }

    pub fn delete_encoded(&self, key: &[u8]) -> Result<()> {
        self.inner.write(key, Cell::Tombstone)
    }

    pub fn get_encoded(&self, key: &[u8]) -> Result<Option<Vec<u8>>> {
        let version = {
            let mem = self.inner.mem.read().unwrap_or_else(|p| p.into_inner());
            if let Some(cell) = mem.get(key) {
                return Ok(cell.clone().into_value());
            }
            self.inner.current()
        };
        for t in &version.l0 {
            if let Some(cell) = t.table.get(key)? {
                return Ok(cell.into_value());
            }
        }
        match version.l1_for(key) {
            Some(t) => Ok(t.table.get(key)?.and_then(Cell::into_value)),
            None => Ok(None),
        }
    }

    /// Positionally aligned batch lookup. Keys are visited in sorted order so
    /// each data block is decompressed at most once per table.
    pub fn multi_get<K: AsRef<[u8]>>(&self, keys: &[K]) -> Result<Vec<Option<Vec<u8>>>> {
        let mut out = vec![None; keys.len()];
        let mut resolved = 0usize;
        let mut pending = Vec::new();
        let version = {
            let mem = self.inner.mem.read().unwrap_or_else(|p| p.into_inner());
            for (i, k) in keys.iter().enumerate() {
                match mem.get(k.as_ref()) {
                    Some(cell) => {
                        out[i] = cell.clone().into_value();
                        resolved += 1;
                    }
                    None => pending.push(i),
                }
            }
            self.inner.current()
        };
        pending.sort_by(|&a, &b| keys[a].as_ref().cmp(keys[b].as_ref()));

        let mut lookup = |table: &Table, idx: &[usize], resolved: &mut usize| -> Result<Vec<usize>> {
            let ks: Vec<&[u8]> = idx.iter().map(|&i| keys[i].as_ref()).collect();
            let found = table.get_sorted(&ks).map_err(|e| Error::Batch {
                resolved: *resolved,
                source: Box::new(e),
            })?;
            let mut missing = Vec::new();
            for (&i, cell) in idx.iter().zip(found) {
                match cell {
                    Some(c) => {
                        out[i] = c.into_value();
                        *resolved += 1;
                    }
                    None => missing.push(i),
                }
            }
            Ok(missing)
        };

        for t in &version.l0 {
            if pending.is_empty() {
                break;
            }
            pending = lookup(&t.table, &pending, &mut resolved)?;
        }
        let mut p = 0;
        for t in &version.l1 {
            let (Some(first), Some(last)) = (t.table.first_key(), t.table.last_key()) else {
                continue;
            };
            while p < pending.len() && keys[pending[p]].as_ref() < first {
                p += 1;
            }
            let start = p;
            while p < pending.len() && keys[pending[p]].as_ref() <= last {
                p += 1;
            }
            if start < p {
                lookup(&t.table, &pending[start..p], &mut resolved)?;
            }
        }
        Ok(out)
    }

    /// Writes the memtable out as a new L0 table and retires its WAL.
    pub fn flush(&self) -> Result<()> {
        let mut w = lock(&self.inner.writer);
        self.inner.flush_locked(&mut w)
    }

    /// Merges all L0 tables (and the L1 tables they overlap) into L1,
    /// dropping tombstones and shadowed versions.
    pub fn compact(&self) -> Result<()> {
        self.inner.compact()
    }

    /// Waits for any running background compaction.
    pub fn wait_for_compaction(&self) -> Result<()> {
        let handle = lock(&self.inner.background).take();
        if let Some(h) = handle {
            let _ = h.join();
        }
        match lock(&self.inner.background_error).take() {
            Some(msg) => Err(Error::Recovery(format!("background compaction failed: {msg}"))),
            None => Ok(()),
        }
    }

    /// Flushes pending writes and stops background work.
    pub fn close(self) -> Result<()> {
        self.flush()?;
        self.wait_for_compaction()
    }

    pub fn stats(&self) -> EngineStats {
        let (memtable_entries, memtable_bytes, version) = {
            let mem = self.inner.mem.read().unwrap_or_else(|p| p.into_inner());
            (mem.len() as u64, mem.raw_bytes(), self.inner.current())
        };
        let mut reads = *lock(&self.inner.retired_reads);
        let mut tables = Vec::new();
        for (level, t) in version.tables() {
            let f = t.table.footer();
            let r = t.table.counters().snapshot();
            add_reads(&mut reads, r);
            tables.push(TableStats {
                seq: t.seq,
                level,
                entries: f.entry_count,
                tombstones: f.tombstone_count,
                raw_bytes: f.raw_bytes_total,
                file_bytes: t.table.file_size(),
                blocks: t.table.block_handles().len(),
                reads: r,
            });
        }
        let raw_bytes: u64 = tables.iter().map(|t| t.raw_bytes).sum();
        let compressed_bytes: u64 = tables.iter().map(|t| t.file_bytes).sum();
        EngineStats {
            entry_count: tables.iter().map(|t| t.entries).sum::<u64>() + memtable_entries,
            tombstone_count: tables.iter().map(|t| t.tombstones).sum(),
            raw_bytes,
            compressed_bytes,
            ratio: (raw_bytes > 0).then(|| compressed_bytes as f64 / raw_bytes as f64),
            memtable_entries,
            memtable_bytes,
            l0_tables: version.l0.len(),
            l1_tables: version.l1.len(),
            reads,
            tables,
        }
    }

    /// Visits every live key/value pair in key order.
    pub fn for_each_live(&self, mut f: impl FnMut(&[u8], &[u8]) -> Result<()>) -> Result<()> {
        for item in self.inner.merged_view(true)? {
            if let (key, Cell::Value(value)) = item? {
                f(&key, &value)?;
            }
        }
        Ok(())
    }

    /// All live keys in order.
    pub fn live_keys(&self) -> Result<Vec<Vec<u8>>> {
        let mut keys = Vec::new();
        self.for_each_live(|k, _| {
            keys.push(k.to_vec());
            Ok(())
        })?;
        Ok(keys)
    }

    /// Every entry physically present in the live tables, tombstones and
    /// shadowed versions included.
    pub fn table_scan(&self) -> Result<Vec<(Vec<u8>, Cell)>> {
        let version = self.inner.current();
        let mut out = Vec::new();
        for (_, t) in version.tables() {
            for item in t.table.iter() {
                out.push(item?);
            }
        }
        Ok(out)
    }

    /// Paths of the live table files.
    pub fn table_paths(&self) -> Vec<std::path::PathBuf> {
        self.inner
            .current()
            .tables()
            .map(|(_, t)| t.table.path().to_path_buf())
            .collect()
    }

    /// Codec and target block size the live tables were written with (taken
    /// from the first table), or `None` for a store without tables.
    pub fn table_layout(&self) -> Option<(crate::codec::CodecSpec, usize)> {
        let version = self.inner.current();
        let (_, t) = version.tables().next()?;
        Some((t.table.codec(), t.table.footer().target_block_size as usize))
    }

    /// Resets the point-lookup counters of live and retired tables.
    pub fn reset_read_counters(&self) {
        *lock(&self.inner.retired_reads) = ReadCountersSnapshot::default();
        for (_, t) in self.inner.current().tables() {
            let c = t.table.counters();
            c.blocks_read.store(0, Ordering::Relaxed);
            c.bytes_decompressed.store(0, Ordering::Relaxed);
            c.bloom_rejections.store(0, Ordering::Relaxed);
            c.scan_blocks_read.store(0, Ordering::Relaxed);
        }
    }
}

impl Drop for Engine {
    fn drop(&mut self) {
        // Unflushed writes stay in the WAL; only background work is awaited.
        if let Some(h) = lock(&self.inner.background).take() {
            let _ = h.join();
        }
    }
}

impl Inner {
    fn current(&self) -> Arc<Version> {
        Arc::clone(&self.version.read().unwrap_or_else(|p| p.into_inner()))
    }

    fn alloc_seq(&self) -> u64 {
        self.next_seq.fetch_add(1, Ordering::Relaxed)
    }

    fn dir(&self) -> &Path {
        &self.config.data_dir
    }

    fn write(self: &Arc<Self>, key: &[u8], cell: Cell) -> Result<()> {
        if key.is_empty() {
            return Err(Error::Precondition("empty key".into()));
        }
        let mut w = lock(&self.writer);
        let value_len = match &cell {
            Cell::Value(v) => v.len(),
            Cell::Tombstone => 0,
        };
        self.check_capacity((key.len() + value_len) as u64)?;
        w.wal.append(key, &cell)?;
        let mem_bytes = {
            let mut mem = self.mem.write().unwrap_or_else(|p| p.into_inner());
            mem.insert(key.to_vec(), cell);
            mem.raw_bytes()
        };
        if mem_bytes >= self.config.write_buffer_bytes || w.wal.bytes() >= self.config.max_wal_bytes {
            self.flush_locked(&mut w)?;
        }
        Ok(())
    }

    /// Projected on-disk size if the memtable plus `new_raw` were flushed at
    /// the running compression ratio.
    fn check_capacity(&self, new_raw: u64) -> Result<()> {
        let Some(capacity) = self.config.capacity_m else {
            return Ok(());
        };
        let version = self.current();
        let (mut file_bytes, mut raw) = (0u64, 0u64);
        for (_, t) in version.tables() {
            file_bytes += t.table.file_size();
            raw += t.table.footer().raw_bytes_total;
        }
        let ratio = if raw > 0 { file_bytes as f64 / raw as f64 } else { 1.0 };
        let (pending_raw, pending_entries) = {
            let mem = self.mem.read().unwrap_or_else(|p| p.into_inner());
            (mem.raw_bytes() + new_raw, mem.len() as u64 + 1)
        };
        let projected =
            file_bytes + (pending_raw as f64 * ratio).ceil() as u64 + pending_entries * ENTRY_OVERHEAD + TABLE_OVERHEAD;
        if projected > capacity {
            return Err(Error::Capacity { projected, capacity });
        }
        Ok(())
    }

    fn flush_locked(self: &Arc<Self>, w: &mut WriterState) -> Result<()> {
        let mem = self.mem.read().unwrap_or_else(|p| p.into_inner());
        if mem.is_empty() {
            return Ok(());
        }
        let seq = self.alloc_seq();
        let path = self.dir().join(table_file_name(seq));
        let mut builder = TableBuilder::create(&path, self.opts)?;
        for (k, cell) in mem.iter() {
            let value = match cell {
                Cell::Value(v) => Some(v.as_slice()),
                Cell::Tombstone => None,
            };
            builder.add(k, value)?;
        }
        builder.finish()?;
        drop(mem);
        let table = Arc::new(Table::open_with(&path, self.config.mmap_reads)?);

        let wal_seq = self.alloc_seq();
        let new_wal = WalWriter::open(&self.dir().join(wal_file_name(wal_seq)), self.config.sync_writes)?;
        {
            let mut active_wal = lock(&self.manifest);
            let mut next = (*self.current()).clone();
            next.l0.insert(0, LiveTable { seq, table });
            next.to_manifest(self.next_seq.load(Ordering::Relaxed), wal_seq)
                .store(self.dir())?;
            *active_wal = wal_seq;
            let mut mem = self.mem.write().unwrap_or_else(|p| p.into_inner());
            let mut v = self.version.write().unwrap_or_else(|p| p.into_inner());
            *v = Arc::new(next);
            mem.clear();
        }
        w.wal = new_wal;
        self.remove_wals_before(wal_seq)?;
        self.maybe_schedule_compaction();
        self.enforce_capacity_after_write();
        Ok(())
    }

    fn remove_wals_before(&self, seq: u64) -> Result<()> {
        for entry in fs::read_dir(self.dir()).ctx("listing", self.dir())? {
            let entry = entry.ctx("listing", self.dir())?;
            if let Some((FileKind::Wal, s)) = entry.file_name().to_str().and_then(parse_file_name) {
                if s < seq {
                    fs::remove_file(entry.path()).ctx("removing retired WAL", &entry.path())?;
                }
            }
        }
        Ok(())
    }

    fn enforce_capacity_after_write(&self) {
        if let Some(cap) = self.config.capacity_m {
            let used: u64 = self.current().tables().map(|(_, t)| t.table.file_size()).sum();
            if used > cap {
                log::warn!("live tables occupy {used} bytes, above the capacity budget of {cap}");
            }
        }
    }

    fn maybe_schedule_compaction(self: &Arc<Self>) {
        let trigger = self.config.l0_compaction_trigger;
        if trigger == 0 || self.current().l0.len() < trigger {
            return;
        }
        let mut bg = lock(&self.background);
        if bg.as_ref().is_some_and(|h| !h.is_finished()) {
            return;
        }
        if let Some(h) = bg.take() {
            let _ = h.join();
        }
        let inner = Arc::clone(self);
        *bg = Some(std::thread::spawn(move || {
            while inner.current().l0.len() >= trigger {
                if let Err(e) = inner.compact() {
                    log::error!("background compaction failed: {e}");
                    *lock(&inner.background_error) = Some(e.to_string());
                    break;
                }
            }
        }));
    }

    /// Sorted view over memtable (optionally) and all tables, newest first.
    fn merged_view(&self, with_memtable: bool) -> Result<MergeIter> {
        let mut sources: Vec<EntryIter> = Vec::new();
        let version = {
            let mem = self.mem.read().unwrap_or_else(|p| p.into_inner());
            if with_memtable {
                let snapshot: Vec<Result<(Vec<u8>, Cell)>> =
                    mem.iter().map(|(k, c)| Ok((k.clone(), c.clone()))).collect();
                sources.push(Box::new(snapshot.into_iter()));
            }
            self.current()
        };
        for t in &version.l0 {
            sources.push(Box::new(t.table.iter()));
        }
        let l1: Vec<Arc<Table>> = version.l1.iter().map(|t| Arc::clone(&t.table)).collect();
        sources.push(Box::new(l1.into_iter().flat_map(|t| t.iter())));
        MergeIter::new(sources)
    }

    fn compact(&self) -> Result<()> {
        let _only_one = lock(&self.compaction);
        let version = self.current();
        if version.l0.is_empty() {
            return Ok(());
        }

        // When every L0 table is tombstone-free and overlaps nothing (the
        // sorted bulk-load case), the tables move down without rewriting.
        // Otherwise all of L0 is merged: moving a subset could land a table
        // inside the key span of a merged output.
        let overlaps = |a: &Table, b: &Table| match (a.first_key(), a.last_key()) {
            (Some(lo), Some(hi)) => b.overlaps(lo, hi),
            _ => false,
        };
        let all_isolated = version.l0.iter().enumerate().all(|(i, t)| {
            t.table.footer().tombstone_count == 0
                && t.table.entry_count() > 0
                && !version
                    .l0
                    .iter()
                    .enumerate()
                    .any(|(j, o)| j != i && overlaps(&t.table, &o.table))
                && !version.l1.iter().any(|o| overlaps(&t.table, &o.table))
        });
        let (moved, merge_l0) = if all_isolated {
            (version.l0.clone(), Vec::new())
        } else {
            (Vec::new(), version.l0.clone())
        };

        let mut consumed_l1 = Vec::new();
        let mut outputs = Vec::new();
        let range = merge_l0
            .iter()
            .filter_map(|t| Some((t.table.first_key()?, t.table.last_key()?)))
            .fold(None::<(&[u8], &[u8])>, |acc, (lo, hi)| match acc {
                None => Some((lo, hi)),
                Some((a, b)) => Some((a.min(lo), b.max(hi))),
            });
        if let Some((lo, hi)) = range {
            consumed_l1 = version
                .l1
                .iter()
                .filter(|t| t.table.overlaps(lo, hi))
                .cloned()
                .collect();
            outputs = self.merge(&merge_l0, &consumed_l1)?;
        }

        let retired: Vec<LiveTable> = merge_l0.iter().chain(&consumed_l1).cloned().collect();
        {
            let active_wal = lock(&self.manifest);
            let current = self.current();
            let gone: HashSet<u64> = version.l0.iter().chain(&consumed_l1).map(|t| t.seq).collect();
            let mut next = Version {
                l0: current.l0.iter().filter(|t| !gone.contains(&t.seq)).cloned().collect(),
                l1: current.l1.iter().filter(|t| !gone.contains(&t.seq)).cloned().collect(),
            };
            next.l1.extend(moved);
            next.l1.extend(outputs);
            next.l1.sort_by(|a, b| a.table.first_key().cmp(&b.table.first_key()));
            next.to_manifest(self.next_seq.load(Ordering::Relaxed), *active_wal)
                .store(self.dir())?;
            *self.version.write().unwrap_or_else(|p| p.into_inner()) = Arc::new(next);
        }
        let mut totals = lock(&self.retired_reads);
        for t in retired {
            add_reads(&mut totals, t.table.counters().snapshot());
            let path = t.table.path().to_path_buf();
            // Readers holding the old version keep their open handles.
            fs::remove_file(&path).ctx("removing compacted table", &path)?;
        }
        drop(totals);
        self.enforce_capacity_after_write();
        Ok(())
    }

    /// Parallel merge of `l0` (newest first) over `l1` into new tables.
    fn merge(&self, l0: &[LiveTable], l1: &[LiveTable]) -> Result<Vec<LiveTable>> {
        let inputs: Vec<&Arc<Table>> = l0.iter().chain(l1).map(|t| &t.table).collect();
        let points = split_points(&inputs, self.config.compaction_threads);
        let mut bounds: Vec<Option<Vec<u8>>> = vec![None];
        bounds.extend(points.into_iter().map(Some));
        bounds.push(None);
        let next_seq = || self.alloc_seq();

        let results: Vec<Result<Vec<_>>> = std::thread::scope(|s| {
            let handles: Vec<_> = bounds
                .windows(2)
                .map(|w| {
                    let (lo, hi) = (w[0].clone(), w[1].clone());
                    let next_seq = &next_seq;
                    s.spawn(move || {
                        let mut sources: Vec<EntryIter> = l0
                            .iter()
                            .map(|t| Box::new(t.table.iter_range(lo.as_deref(), hi.as_deref())) as EntryIter)
                            .collect();
                        let run: Vec<Arc<Table>> = l1.iter().map(|t| Arc::clone(&t.table)).collect();
                        let (lo2, hi2) = (lo.clone(), hi.clone());
                        sources.push(Box::new(
                            run.into_iter()
                                .flat_map(move |t| t.iter_range(lo2.as_deref(), hi2.as_deref())),
                        ));
                        write_outputs(
                            MergeIter::new(sources)?,
                            self.dir(),
                            self.opts,
                            self.config.target_table_bytes,
                            next_seq,
                        )
                    })
                })
                .collect();
            handles
                .into_iter()
                .map(|h| {
                    h.join()
                        .unwrap_or_else(|_| Err(Error::Recovery("compaction worker panicked".into())))
                })
                .collect()
        });

        let mut summaries = Vec::new();
        let mut first_err = None;
        for r in results {
            match r {
                Ok(v) => summaries.extend(v),
                Err(e) => {
                    first_err.get_or_insert(e);
                }
            }
        }
        if let Some(e) = first_err {
            for (seq, _) in &summaries {
                let _ = fs::remove_file(self.dir().join(table_file_name(*seq)));
            }
            return Err(e);
        }
        summaries
            .into_iter()
            .map(|(seq, s)| {
                Ok(LiveTable {
                    seq,
                    table: Arc::new(Table::open_with(&s.path, self.config.mmap_reads)?),
                })
            })
            .collect()
    }
}

#[cfg(test)]
mod tests;
