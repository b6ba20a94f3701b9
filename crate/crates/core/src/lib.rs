pub mod bench;
pub mod codec;
pub mod corpus;
pub mod engine;
pub mod error;
pub mod key;
pub mod metrics;
pub mod sstable;
pub mod tier;
pub mod workload;

pub use error::{Error, Result};
