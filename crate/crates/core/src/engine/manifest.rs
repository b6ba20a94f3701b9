//! The `MANIFEST` file: the live table set and the active WAL segment.
//!
//! ```text
//! ppcs-manifest 1
//! sequence 42
//! wal 41
//! table 0 40
//! table 1 12
//! ```
//!
//! It is replaced atomically (write temp, fsync, rename, fsync dir).

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use crate::error::{Error, IoContext, Result};

pub const MANIFEST_NAME: &str = "MANIFEST";
const HEADER: &str = "ppcs-manifest 1";

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Manifest {
    /// Next unused file sequence number.
    pub next_seq: u64,
    pub wal_seq: u64,
    /// `(level, seq)` of each live table.
    pub tables: Vec<(u8, u64)>,
}

pub fn table_file_name(seq: u64) -> String {
    format!("tbl-{seq:06}.ppcs")
}

pub fn wal_file_name(seq: u64) -> String {
    format!("wal-{seq:06}.log")
}

/// Classifies a data-dir entry as a table or WAL file by sequence.
pub fn parse_file_name(name: &str) -> Option<(FileKind, u64)> {
    if let Some(rest) = name.strip_prefix("tbl-").and_then(|r| r.strip_suffix(".ppcs")) {
        return rest.parse().ok().map(|s| (FileKind::Table, s));
    }
    if let Some(rest) = name.strip_prefix("wal-").and_then(|r| r.strip_suffix(".log")) {
        return rest.parse().ok().map(|s| (FileKind::Wal, s));
    }
    None
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FileKind {
    Table,
    Wal,
}

impl Manifest {
    pub fn path(dir: &Path) -> PathBuf {
        dir.join(MANIFEST_NAME)
    }

    pub fn encode(&self) -> String {
        let mut s = format!("{HEADER}\nsequence {}\nwal {}\n", self.next_seq, self.wal_seq);
        for (level, seq) in &self.tables {
            s.push_str(&format!("table {level} {seq}\n"));
        }
        s
    }

    pub fn parse(text: &str) -> Result<Self> {
        let bad = |msg: String| Error::Recovery(format!("corrupt manifest: {msg}"));
        let mut lines = text.lines();
        if lines.next() != Some(HEADER) {
            return Err(bad("missing header".into()));
        }
        let mut m = Manifest::default();
        let (mut saw_seq, mut saw_wal) = (false, false);
        for line in lines {
            let fields: Vec<&str> = line.split_whitespace().collect();
            let num = |s: &str| s.parse::<u64>().map_err(|_| bad(format!("bad number in {line:?}")));
            match fields.as_slice() {
                [] => {}
                ["sequence", n] => {
                    m.next_seq = num(n)?;
                    saw_seq = true;
                }
                ["wal", n] => {
                    m.wal_seq = num(n)?;
                    saw_wal = true;
                }
                ["table", level, seq] => {
                    let level = match *level {
                        "0" => 0,
                        "1" => 1,
                        other => return Err(bad(format!("unknown level {other}"))),
                    };
                    m.tables.push((level, num(seq)?));
                }
                _ => return Err(bad(format!("unrecognized line {line:?}"))),
            }
        }
        if !saw_seq || !saw_wal {
            return Err(bad("missing sequence or wal line".into()));
        }
        let mut seqs: Vec<u64> = m.tables.iter().map(|t| t.1).collect();
        seqs.sort_unstable();
        if seqs.windows(2).any(|w| w[0] == w[1]) {
            return Err(bad("duplicate table".into()));
        }
        if seqs.last().is_some_and(|&s| s >= m.next_seq) || m.wal_seq >= m.next_seq {
            return Err(bad("file sequence beyond next sequence".into()));
        }
        Ok(m)
    }

    pub fn load(dir: &Path) -> Result<Option<Self>> {
        let path = Self::path(dir);
        match fs::read_to_string(&path) {
            Ok(text) => Self::parse(&text).map(Some),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(None),
            Err(e) => Err(Error::io_path("reading", &path, e)),
        }
    }

    pub fn store(&self, dir: &Path) -> Result<()> {
        let tmp = dir.join(format!("{MANIFEST_NAME}.tmp"));
        {
            let mut f = fs::File::create(&tmp).ctx("creating", &tmp)?;
            f.write_all(self.encode().as_bytes()).ctx("writing", &tmp)?;
            f.sync_all().ctx("syncing", &tmp)?;
        }
        let path = Self::path(dir);
        fs::rename(&tmp, &path).ctx("installing", &path)?;
        fs::File::open(dir)
            .and_then(|d| d.sync_all())
            .ctx("syncing directory", dir)?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_and_atomic_store() {
        let dir = tempfile::tempdir().unwrap();
        assert_eq!(Manifest::load(dir.path()).unwrap(), None);
        let m = Manifest {
            next_seq: 9,
            wal_seq: 8,
            tables: vec![(0, 7), (1, 3), (1, 4)],
        };
        m.store(dir.path()).unwrap();
        assert_eq!(Manifest::load(dir.path()).unwrap(), Some(m));
        assert!(!dir.path().join("MANIFEST.tmp").exists());
    }

    #[test]
    fn rejects_garbage() {
        for text in [
            "",
            "nope\n",
            "ppcs-manifest 1\nwal 1\n",
            "ppcs-manifest 1\nsequence 5\nwal 1\ntable 2 3\n",
            "ppcs-manifest 1\nsequence 5\nwal 1\ntable 0 3\ntable 1 3\n",
            "ppcs-manifest 1\nsequence 5\nwal 1\ntable 0 9\n",
            "ppcs-manifest 1\nsequence x\nwal 1\n",
        ] {
            assert!(matches!(Manifest::parse(text), Err(Error::Recovery(_))), "{text:?}");
        }
    }

    #[test]
    fn file_names() {
        assert_eq!(table_file_name(12), "tbl-000012.ppcs");
        assert_eq!(wal_file_name(3), "wal-000003.log");
        assert_eq!(parse_file_name("tbl-000012.ppcs"), Some((FileKind::Table, 12)));
        assert_eq!(parse_file_name("wal-1234567.log"), Some((FileKind::Wal, 1234567)));
        assert_eq!(parse_file_name("MANIFEST"), None);
    }
}
