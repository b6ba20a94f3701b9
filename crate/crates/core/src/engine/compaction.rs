use std::cmp::Reverse;
use std::collections::BinaryHeap;
use std::path::Path;
use std::sync::Arc;

use crate::error::Result;
use crate::sstable::{Cell, Table, TableBuilder, TableOptions, TableSummary};

use super::manifest::table_file_name;

pub(crate) type EntryIter = Box<dyn Iterator<Item = Result<(Vec<u8>, Cell)>> + Send>;

/// K-way merge of sorted sources. Sources are ranked by position: when several
/// hold the same key, the entry from the lowest-indexed (newest) source wins
/// and the rest are skipped.
pub(crate) struct MergeIter {
    sources: Vec<EntryIter>,
    heads: Vec<Option<Cell>>,
    heap: BinaryHeap<Reverse<(Vec<u8>, usize)>>,
    failed: bool,
}

impl MergeIter {
    pub fn new(sources: Vec<EntryIter>) -> Result<Self> {
        let n = sources.len();
        let mut m = Self {
            sources,
            heads: vec![None; n],
            heap: BinaryHeap::with_capacity(n),
            failed: false,
        };
        for i in 0..n {
            m.advance(i)?;
        }
        Ok(m)
    }

    fn advance(&mut self, i: usize) -> Result<()> {
        if let Some(item) = self.sources[i].next() {
            let (key, cell) = item?;
            self.heads[i] = Some(cell);
            self.heap.push(Reverse((key, i)));
        }
        Ok(())
    }
}

impl Iterator for MergeIter {
    type Item = Result<(Vec<u8>, Cell)>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.failed {
            return None;
        }
        let Reverse((key, i)) = self.heap.pop()?;
        let cell = self.heads[i].take().expect("head present for queued source");
        let mut step = self.advance(i);
        while step.is_ok() {
            match self.heap.peek() {
                Some(Reverse((k, _))) if *k == key => {
                    let Reverse((_, j)) = self.heap.pop().expect("peeked");
                    self.heads[j] = None;
                    step = self.advance(j);
                }
                _ => break,
            }
        }
        match step {
            Ok(()) => Some(Ok((key, cell))),
            Err(e) => {
                self.failed = true;
                Some(Err(e))
            }
        }
    }
}

/// Chooses up to `parts - 1` split keys from the block boundaries of the
/// inputs so that workers get similar numbers of blocks.
pub(crate) fn split_points(tables: &[&Arc<Table>], parts: usize) -> Vec<Vec<u8>> {
    if parts <= 1 {
        return Vec::new();
    }
    let mut firsts: Vec<&[u8]> = tables
        .iter()
        .flat_map(|t| t.block_handles().iter().map(|h| h.first_key.as_slice()))
        .collect();
    firsts.sort_unstable();
    firsts.dedup();
    let mut points: Vec<Vec<u8>> = (1..parts)
        .map(|i| firsts.get(i * firsts.len() / parts).map(|k| k.to_vec()))
        .collect::<Option<_>>()
        .unwrap_or_default();
    points.dedup();
    // a split at the very first key would leave an empty leading range
    if points.first().map(Vec::as_slice) == firsts.first().copied() {
        points.remove(0);
    }
    points
}

/// Writes the live (non-tombstone) entries of `merged` into tables of about
/// `target_table_bytes` raw bytes each.
pub(crate) fn write_outputs(
    merged: impl Iterator<Item = Result<(Vec<u8>, Cell)>>,
    dir: &Path,
    opts: TableOptions,
    target_table_bytes: u64,
    next_seq: &(dyn Fn() -> u64 + Sync),
) -> Result<Vec<(u64, TableSummary)>> {
    let mut done = Vec::new();
    let mut current: Option<(u64, TableBuilder)> = None;
    let result = (|| {
        for item in merged {
            let (key, cell) = item?;
            let Cell::Value(value) = cell else { continue };
            if current.is_none() {
                let seq = next_seq();
                current = Some((seq, TableBuilder::create(dir.join(table_file_name(seq)), opts)?));
            }
            let (_, builder) = current.as_mut().expect("just set");
            builder.add(&key, Some(&value))?;
            if builder.raw_bytes() >= target_table_bytes {
                let (seq, b) = current.take().expect("present");
                done.push((seq, b.finish()?));
            }
        }
        if let Some((seq, b)) = current.take() {
            done.push((seq, b.finish()?));
        }
        Ok(())
    })();
    match result {
        Ok(()) => Ok(done),
        Err(e) => {
            for (seq, _) in &done {
                let _ = std::fs::remove_file(dir.join(table_file_name(*seq)));
            }
            if let Some((seq, _)) = current {
                let _ = std::fs::remove_file(dir.join(table_file_name(seq)));
            }
            Err(e)
        }
    }
}
