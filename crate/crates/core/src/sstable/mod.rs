//! Immutable sorted tables: key-ordered entries packed into independently
//! compressed blocks, plus a bloom filter and a block index.

mod bloom;
mod builder;
mod format;
mod table;

pub use bloom::BloomFilter;
pub use builder::{build_table, TableBuilder, TableOptions, TableSummary, MIN_BLOCK_SIZE};
pub use format::{
    BlockHandle, TableFooter, BLOCK_HEADER_SIZE, BLOCK_TRAILER_SIZE, ENTRY_HEADER_SIZE, FOOTER_SIZE, FORMAT_VERSION,
    MAGIC,
};
pub use table::{Cell, ReadCounters, ReadCountersSnapshot, Table, TableIter};
