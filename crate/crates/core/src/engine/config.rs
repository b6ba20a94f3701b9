use std::path::PathBuf;

use crate::codec::CodecSpec;
use crate::error::{Error, Result};
use crate::sstable::{TableOptions, MIN_BLOCK_SIZE};

pub const KIB: u64 = 1024;
pub const MIB: u64 = 1024 * KIB;
pub const GIB: u64 = 1024 * MIB;

/// Store tuning. Defaults follow a large-memory write-once/read-many node;
/// tests and desk runs scale the buffers down.
#[derive(Debug, Clone, PartialEq)]
pub struct StoreConfig {
    pub data_dir: PathBuf,
    pub codec: CodecSpec,
    /// Raw bytes at which a data block is closed.
    pub target_block_size: usize,
    /// Memtable size that triggers a flush.
    pub write_buffer_bytes: u64,
    /// WAL size that forces a flush even if the memtable is below its limit.
    pub max_wal_bytes: u64,
    pub compaction_threads: usize,
    pub bits_per_key: f64,
    /// Budget M on the compressed size of all live tables.
    pub capacity_m: Option<u64>,
    pub mmap_reads: bool,
    /// Raw size at which compaction starts a new output table.
    pub target_table_bytes: u64,
    /// Background compaction starts once this many L0 tables exist; 0 disables it.
    pub l0_compaction_trigger: usize,
    /// fsync the WAL after every record.
    pub sync_writes: bool,
}

impl StoreConfig {
    pub fn new(data_dir: impl Into<PathBuf>) -> Self {
        Self {
            data_dir: data_dir.into(),
            codec: CodecSpec::zstd(3).expect("valid level"),
            target_block_size: 64 * KIB as usize,
            write_buffer_bytes: 2 * GIB,
            max_wal_bytes: 64 * GIB,
            compaction_threads: 6,
            bits_per_key: 10.0,
            capacity_m: None,
            mmap_reads: false,
            target_table_bytes: 64 * MIB,
            l0_compaction_trigger: 4,
            sync_writes: false,
        }
    }

    pub fn with_codec(mut self, codec: CodecSpec) -> Self {
        self.codec = codec;
        self
    }

    pub fn with_block_size(mut self, bytes: usize) -> Self {
        self.target_block_size = bytes;
        self
    }

    pub fn with_write_buffer(mut self, bytes: u64) -> Self {
        self.write_buffer_bytes = bytes;
        self
    }

    pub fn with_capacity(mut self, bytes: u64) -> Self {
        self.capacity_m = Some(bytes);
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.write_buffer_bytes < MIB {
            return Err(Error::Config(format!(
                "write_buffer_bytes {} below 1 MiB",
                self.write_buffer_bytes
            )));
        }
        if self.compaction_threads == 0 {
            return Err(Error::Config("compaction_threads must be >= 1".into()));
        }
        if let Some(m) = self.capacity_m {
            if m < self.write_buffer_bytes {
                return Err(Error::Config(format!(
                    "capacity_m {m} smaller than write_buffer_bytes {}",
                    self.write_buffer_bytes
                )));
            }
        }
        if self.max_wal_bytes == 0 {
            return Err(Error::Config("max_wal_bytes must be > 0".into()));
        }
        if self.target_table_bytes < self.target_block_size as u64 {
            return Err(Error::Config("target_table_bytes smaller than a block".into()));
        }
        if self.target_block_size < MIN_BLOCK_SIZE {
            return Err(Error::Config(format!(
                "target_block_size {} below {MIN_BLOCK_SIZE}",
                self.target_block_size
            )));
        }
        self.table_options().map(|_| ())
    }

    pub(crate) fn table_options(&self) -> Result<TableOptions> {
        TableOptions::new(self.target_block_size, self.codec, self.bits_per_key)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_and_invariants() {
        let c = StoreConfig::new("/tmp/x");
        assert_eq!(c.write_buffer_bytes, 2 * GIB);
        assert_eq!(c.max_wal_bytes, 64 * GIB);
        assert_eq!(c.compaction_threads, 6);
        assert_eq!(c.bits_per_key, 10.0);
        c.validate().unwrap();

        let small = c.clone().with_write_buffer(MIB - 1);
        assert!(matches!(small.validate(), Err(Error::Config(_))));
        let tight = c.clone().with_write_buffer(4 * MIB).with_capacity(2 * MIB);
        assert!(matches!(tight.validate(), Err(Error::Config(_))));
        let mut zero = c;
        zero.compaction_threads = 0;
        assert!(zero.validate().is_err());
    }
}
