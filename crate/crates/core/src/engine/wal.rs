//! Write-ahead log segments.
//!
//! Record: `[u32 payload_len][payload][u32 crc32(payload)]`, payload =
//! `[u8 op][u32 key_len][key][value]` with op 1 = put, 2 = delete. Each record
//! goes to the file in a single `write`, so an acknowledged record survives a
//! process crash. A torn or corrupt tail is cut off during replay.

use std::fs::{File, OpenOptions};
use std::io::{BufReader, ErrorKind, Read, Write};
use std::path::{Path, PathBuf};

use crate::error::{Error, IoContext, Result};
use crate::sstable::Cell;

const OP_PUT: u8 = 1;
const OP_DELETE: u8 = 2;
const MAX_RECORD: u32 = u32::MAX - 16;

pub(crate) fn encode_record(key: &[u8], cell: &Cell) -> Vec<u8> {
    let (op, value) = match cell {
        Cell::Value(v) => (OP_PUT, v.as_slice()),
        Cell::Tombstone => (OP_DELETE, &[][..]),
    };
    let payload_len = 1 + 4 + key.len() + value.len();
    let mut rec = Vec::with_capacity(payload_len + 8);
    rec.extend_from_slice(&(payload_len as u32).to_le_bytes());
    rec.push(op);
    rec.extend_from_slice(&(key.len() as u32).to_le_bytes());
    rec.extend_from_slice(key);
    rec.extend_from_slice(value);
    let crc = crc32fast::hash(&rec[4..]);
    rec.extend_from_slice(&crc.to_le_bytes());
    rec
}

fn decode_payload(payload: &[u8]) -> Option<(Vec<u8>, Cell)> {
    let op = *payload.first()?;
    let klen = u32::from_le_bytes(payload.get(1..5)?.try_into().ok()?) as usize;
    let key = payload.get(5..5 + klen)?.to_vec();
    let rest = &payload[5 + klen..];
    match op {
        OP_PUT => Some((key, Cell::Value(rest.to_vec()))),
        OP_DELETE if rest.is_empty() => Some((key, Cell::Tombstone)),
        _ => None,
    }
}

pub(crate) struct WalWriter {
    path: PathBuf,
    file: File,
    bytes: u64,
    sync: bool,
}

impl WalWriter {
    pub fn open(path: &Path, sync: bool) -> Result<Self> {
        let file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(path)
            .ctx("opening WAL", path)?;
        let bytes = file.metadata().ctx("stat WAL", path)?.len();
        Ok(Self {
            path: path.to_path_buf(),
            file,
            bytes,
            sync,
        })
    }

    pub fn append(&mut self, key: &[u8], cell: &Cell) -> Result<()> {
        let rec = encode_record(key, cell);
        if rec.len() as u64 > u64::from(MAX_RECORD) {
            return Err(Error::Config("record too large for the WAL".into()));
        }
        self.file.write_all(&rec).map_err(|e| {
            Error::io(
                format!("appending to {} at offset {}", self.path.display(), self.bytes),
                e,
            )
        })?;
        if self.sync {
            self.file.sync_data().ctx("syncing WAL", &self.path)?;
        }
        self.bytes += rec.len() as u64;
        Ok(())
    }

    pub fn bytes(&self) -> u64 {
        self.bytes
    }
}

#[derive(Debug, Default, PartialEq, Eq)]
pub(crate) struct ReplayOutcome {
    pub records: u64,
    /// Offset the file was cut at, when a bad tail was found.
    pub truncated_at: Option<u64>,
}

/// Feeds every intact record to `apply`, truncating the file after the last
/// intact one.
pub(crate) fn replay(path: &Path, mut apply: impl FnMut(Vec<u8>, Cell)) -> Result<ReplayOutcome> {
    let file = File::open(path).ctx("opening WAL", path)?;
    let len = file.metadata().ctx("stat WAL", path)?.len();
    let mut reader = BufReader::with_capacity(1 << 20, file);
    let mut offset = 0u64;
    let mut out = ReplayOutcome::default();
    let mut payload = Vec::new();
    loop {
        let mut len_buf = [0u8; 4];
        match read_full(&mut reader, &mut len_buf) {
            Ok(0) => break,
            Ok(4) => {}
            Ok(_) => {
                out.truncated_at = Some(offset);
                break;
            }
            Err(e) => return Err(Error::io_path("reading WAL", path, e)),
        }
        let plen = u32::from_le_bytes(len_buf) as u64;
        if plen < 5 || offset + 8 + plen > len {
            out.truncated_at = Some(offset);
            break;
        }
        payload.resize(plen as usize, 0);
        let mut crc_buf = [0u8; 4];
        if read_full(&mut reader, &mut payload).map_err(|e| Error::io_path("reading WAL", path, e))? != payload.len()
            || read_full(&mut reader, &mut crc_buf).map_err(|e| Error::io_path("reading WAL", path, e))? != 4
        {
            out.truncated_at = Some(offset);
            break;
        }
        if crc32fast::hash(&payload) != u32::from_le_bytes(crc_buf) {
            out.truncated_at = Some(offset);
            break;
        }
        let Some((key, cell)) = decode_payload(&payload) else {
            out.truncated_at = Some(offset);
            break;
        };
        apply(key, cell);
        out.records += 1;
        offset += 8 + plen;
    }
    if let Some(at) = out.truncated_at {
        log::warn!(
            "{}: discarding {} bytes of torn or corrupt WAL tail after {} records",
            path.display(),
            len - at,
            out.records
        );
        let f = OpenOptions::new().write(true).open(path).ctx("opening WAL", path)?;
        f.set_len(at).ctx("truncating WAL", path)?;
        f.sync_all().ctx("syncing WAL", path)?;
    }
    Ok(out)
}

fn read_full(r: &mut impl Read, buf: &mut [u8]) -> std::io::Result<usize> {
    let mut filled = 0;
    while filled < buf.len() {
        match r.read(&mut buf[filled..]) {
            Ok(0) => break,
            Ok(n) => filled += n,
            Err(e) if e.kind() == ErrorKind::Interrupted => {}
            Err(e) => return Err(e),
        }
    }
    Ok(filled)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn collect(path: &Path) -> (Vec<(Vec<u8>, Cell)>, ReplayOutcome) {
        let mut got = Vec::new();
        let out = replay(path, |k, c| got.push((k, c))).unwrap();
        (got, out)
    }

    #[test]
    fn append_and_replay() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("wal-000001.log");
        let mut w = WalWriter::open(&path, false).unwrap();
        w.append(b"k1", &Cell::Value(b"v1".to_vec())).unwrap();
        w.append(b"k2", &Cell::Tombstone).unwrap();
        w.append(b"k3", &Cell::Value(Vec::new())).unwrap();
        drop(w);
        let (got, out) = collect(&path);
        assert_eq!(
            out,
            ReplayOutcome {
                records: 3,
                truncated_at: None
            }
        );
        assert_eq!(got[1], (b"k2".to_vec(), Cell::Tombstone));
        assert_eq!(got[2], (b"k3".to_vec(), Cell::Value(Vec::new())));
    }

    #[test]
    fn torn_tail_is_truncated() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("wal.log");
        let mut w = WalWriter::open(&path, false).unwrap();
        w.append(b"a", &Cell::Value(b"1".to_vec())).unwrap();
        w.append(b"b", &Cell::Value(b"2".to_vec())).unwrap();
        let good = w.bytes();
        drop(w);
        let mut bytes = std::fs::read(&path).unwrap();
        let partial = encode_record(b"c", &Cell::Value(b"3333".to_vec()));
        bytes.extend_from_slice(&partial[..partial.len() - 3]);
        std::fs::write(&path, &bytes).unwrap();

        let (got, out) = collect(&path);
        assert_eq!(got.len(), 2);
        assert_eq!(out.truncated_at, Some(good));
        assert_eq!(std::fs::metadata(&path).unwrap().len(), good);

        // appending after truncation keeps the log readable
        let mut w = WalWriter::open(&path, false).unwrap();
        w.append(b"d", &Cell::Value(b"4".to_vec())).unwrap();
        drop(w);
        assert_eq!(collect(&path).0.len(), 3);
    }

    #[test]
    fn corrupt_record_cuts_the_log() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("wal.log");
        let mut w = WalWriter::open(&path, false).unwrap();
        for i in 0..5u8 {
            w.append(&[b'k', i], &Cell::Value(vec![i; 10])).unwrap();
        }
        drop(w);
        let mut bytes = std::fs::read(&path).unwrap();
        let rec = encode_record(b"k\x00", &Cell::Value(vec![0; 10])).len();
        bytes[2 * rec + 10] ^= 0xff;
        std::fs::write(&path, &bytes).unwrap();
        let (got, out) = collect(&path);
        assert_eq!(got.len(), 2);
        assert_eq!(out.truncated_at, Some(2 * rec as u64));
    }
}
