//! Bounded-memory sort of `(key, value)` pairs by key.
//!
//! Pairs are buffered until `budget` bytes, sorted and spilled to run files
//! (`[u32 klen][u32 vlen][key][value]`*), then k-way merged. The sort is
//! stable: equal keys come out in insertion order, so a later duplicate
//! still overwrites an earlier one when the output is replayed into a store.

use std::cmp::Reverse;
use std::collections::BinaryHeap;
use std::fs::File;
use std::io::{BufReader, BufWriter, ErrorKind, Read, Write};
use std::path::{Path, PathBuf};

use crate::error::{Error, IoContext, Result};

type Pair = (Vec<u8>, Vec<u8>);

pub struct ExternalSorter {
    budget: usize,
    dir: tempfile::TempDir,
    runs: Vec<PathBuf>,
    buf: Vec<Pair>,
    buf_bytes: usize,
    total: u64,
}

impl ExternalSorter {
    /// Spill files go to a fresh directory under `tmp_parent` (or the system
    /// temp dir).
    pub fn new(budget: usize, tmp_parent: Option<&Path>) -> Result<Self> {
        let dir = match tmp_parent {
            Some(p) => tempfile::Builder::new().prefix("ppcs-sort").tempdir_in(p),
            None => tempfile::Builder::new().prefix("ppcs-sort").tempdir(),
        }
        .map_err(|e| Error::io("creating sort scratch dir", e))?;
        Ok(Self {
            budget: budget.max(1),
            dir,
            runs: Vec::new(),
            buf: Vec::new(),
            buf_bytes: 0,
            total: 0,
        })
    }

    pub fn push(&mut self, key: Vec<u8>, value: Vec<u8>) -> Result<()> {
        self.buf_bytes += key.len() + value.len() + 48;
        self.buf.push((key, value));
        self.total += 1;
        if self.buf_bytes >= self.budget {
            self.spill()?;
        }
        Ok(())
    }

    pub fn len(&self) -> u64 {
        self.total
    }

    pub fn is_empty(&self) -> bool {
        self.total == 0
    }

    pub fn spilled_runs(&self) -> usize {
        self.runs.len()
    }

    fn spill(&mut self) -> Result<()> {
        if self.buf.is_empty() {
            return Ok(());
        }
        self.buf.sort_by(|a, b| a.0.cmp(&b.0));
        let path = self.dir.path().join(format!("run-{:05}", self.runs.len()));
        let mut w = BufWriter::with_capacity(1 << 20, File::create(&path).ctx("creating", &path)?);
        for (k, v) in self.buf.drain(..) {
            w.write_all(&(k.len() as u32).to_le_bytes())
                .and_then(|_| w.write_all(&(v.len() as u32).to_le_bytes()))
                .and_then(|_| w.write_all(&k))
                .and_then(|_| w.write_all(&v))
                .ctx("writing", &path)?;
        }
        w.flush().ctx("writing", &path)?;
        self.runs.push(path);
        self.buf_bytes = 0;
        Ok(())
    }

    pub fn finish(mut self) -> Result<SortedPairs> {
        if self.runs.is_empty() {
            self.buf.sort_by(|a, b| a.0.cmp(&b.0));
            return Ok(SortedPairs::Memory(std::mem::take(&mut self.buf).into_iter()));
        }
        self.spill()?;
        let mut readers = Vec::with_capacity(self.runs.len());
        for p in &self.runs {
            readers.push(RunReader {
                path: p.clone(),
                r: BufReader::with_capacity(1 << 20, File::open(p).ctx("opening", p)?),
            });
        }
        let mut heads = Vec::with_capacity(readers.len());
        let mut heap = BinaryHeap::new();
        for (i, r) in readers.iter_mut().enumerate() {
            let head = r.next_pair()?;
            if let Some((k, _)) = &head {
                heap.push(Reverse((k.clone(), i)));
            }
            heads.push(head.map(|p| p.1));
        }
        Ok(SortedPairs::Merge(Merge {
            readers,
            heads,
            heap,
            _dir: self.dir,
            failed: false,
        }))
    }
}

struct RunReader {
    path: PathBuf,
    r: BufReader<File>,
}

impl RunReader {
    fn next_pair(&mut self) -> Result<Option<Pair>> {
        let mut hdr = [0u8; 8];
        match self.r.read_exact(&mut hdr) {
            Ok(()) => {}
            Err(e) if e.kind() == ErrorKind::UnexpectedEof => return Ok(None),
            Err(e) => return Err(Error::io_path("reading", &self.path, e)),
        }
        let kl = u32::from_le_bytes(hdr[..4].try_into().expect("4 bytes")) as usize;
        let vl = u32::from_le_bytes(hdr[4..].try_into().expect("4 bytes")) as usize;
        let mut k = vec![0u8; kl];
        let mut v = vec![0u8; vl];
        self.r
            .read_exact(&mut k)
            .and_then(|_| self.r.read_exact(&mut v))
            .ctx("reading", &self.path)?;
        Ok(Some((k, v)))
    }
}

pub struct Merge {
    readers: Vec<RunReader>,
    heads: Vec<Option<Vec<u8>>>,
    heap: BinaryHeap<Reverse<(Vec<u8>, usize)>>,
    _dir: tempfile::TempDir,
    failed: bool,
}

/// Output of [`ExternalSorter::finish`].
pub enum SortedPairs {
    Memory(std::vec::IntoIter<Pair>),
    Merge(Merge),
}

impl Iterator for SortedPairs {
    type Item = Result<Pair>;

    fn next(&mut self) -> Option<Self::Item> {
        match self {
            SortedPairs::Memory(it) => it.next().map(Ok),
            SortedPairs::Merge(m) => {
                if m.failed {
                    return None;
                }
                let Reverse((key, i)) = m.heap.pop()?;
                let value = m.heads[i].take().expect("queued run has a head");
                match m.readers[i].next_pair() {
                    Ok(Some((k, v))) => {
                        m.heap.push(Reverse((k, i)));
                        m.heads[i] = Some(v);
                    }
                    Ok(None) => {}
                    Err(e) => {
                        m.failed = true;
                        return Some(Err(e));
                    }
                }
                Some(Ok((key, value)))
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn run(pairs: &[Pair], budget: usize) -> (Vec<Pair>, usize) {
        let mut s = ExternalSorter::new(budget, None).unwrap();
        for (k, v) in pairs {
            s.push(k.clone(), v.clone()).unwrap();
        }
        let spilled = s.spilled_runs();
        (s.finish().unwrap().collect::<Result<_>>().unwrap(), spilled)
    }

    #[test]
    fn spills_and_merges() {
        let pairs: Vec<Pair> = (0..5000u32)
            .map(|i| {
                let k = (i.wrapping_mul(2654435761) % 1000).to_be_bytes().to_vec();
                (k, i.to_le_bytes().to_vec())
            })
            .collect();
        let (out, spilled) = run(&pairs, 4096);
        assert!(spilled > 10);
        let mut oracle = pairs.clone();
        oracle.sort_by(|a, b| a.0.cmp(&b.0)); // stable
        assert_eq!(out, oracle);
    }

    #[test]
    fn empty_input() {
        assert_eq!(run(&[], 100).0, vec![]);
    }

    proptest! {
        #[test]
        fn matches_stable_sort(pairs in prop::collection::vec(
            (prop::collection::vec(0u8..4, 0..3), prop::collection::vec(any::<u8>(), 0..20)), 0..300),
            budget in 64usize..2000)
        {
            let (out, _) = run(&pairs, budget);
            let mut oracle = pairs.clone();
            oracle.sort_by(|a, b| a.0.cmp(&b.0));
            prop_assert_eq!(out, oracle);
        }
    }
}
