//! Source-code corpus records in the JSONL interchange format.
//!
//! One record per line:
//!
//! ```text
//! {"id": "<content id>", "names": [["main.py", 3], ...], "content": "<base64>", "lang": "python"}
//! ```
//!
//! `id`, `names` and `content` are required, `lang` is optional. Lines that
//! start with `#` are comments; blank lines are ignored. The reader streams:
//! it holds a single line in memory at a time.

use std::io::{BufRead, Write};

use base64::engine::general_purpose::STANDARD as BASE64;
use base64::Engine as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CorpusRecord {
    pub content_id: String,
    pub filename_candidates: Vec<(String, u64)>,
    pub content: Vec<u8>,
    pub language: Option<String>,
}

impl CorpusRecord {
    /// Most frequent candidate name; see [`canonical_filename`].
    pub fn canonical_name(&self) -> Result<&str> {
        canonical_filename(&self.filename_candidates)
    }
}

#[derive(Deserialize)]
struct WireRecordIn {
    id: String,
    names: Vec<(String, u64)>,
    content: String,
    #[serde(default)]
    lang: Option<String>,
}

#[derive(Serialize)]
struct WireRecordOut<'a> {
    id: &'a str,
    names: &'a [(String, u64)],
    content: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    lang: Option<&'a str>,
}

/// Picks the name with the highest count. Ties go to the byte-wise smallest
/// name, so the result does not depend on candidate order.
pub fn canonical_filename(candidates: &[(String, u64)]) -> Result<&str> {
    candidates
        .iter()
        .max_by(|(na, ca), (nb, cb)| ca.cmp(cb).then_with(|| nb.as_bytes().cmp(na.as_bytes())))
        .map(|(name, _)| name.as_str())
        .ok_or_else(|| Error::Precondition("empty filename candidate list".into()))
}

/// Streaming reader over a JSONL corpus.
///
/// Yields records in stream order. The first error is returned with its
/// 1-based line number and ends the stream; nothing after it is read.
pub struct RecordReader<R> {
    input: R,
    line: u64,
    buf: String,
    done: bool,
}

impl<R: BufRead> RecordReader<R> {
    pub fn new(input: R) -> Self {
        Self {
            input,
            line: 0,
            buf: String::new(),
            done: false,
        }
    }

    fn next_record(&mut self) -> Result<Option<CorpusRecord>> {
        loop {
            self.buf.clear();
            let n = self
                .input
                .read_line(&mut self.buf)
                .map_err(|e| Error::io(format!("reading corpus line {}", self.line + 1), e))?;
            if n == 0 {
                return Ok(None);
            }
            self.line += 1;
            let text = self.buf.trim_end_matches(['\n', '\r']);
            if text.trim().is_empty() || text.starts_with('#') {
                continue;
            }
            return parse_line(text, self.line).map(Some);
        }
    }
}

impl<R: BufRead> Iterator for RecordReader<R> {
    type Item = Result<CorpusRecord>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.done {
            return None;
        }
        match self.next_record() {
            Ok(Some(rec)) => Some(Ok(rec)),
            Ok(None) => {
                self.done = true;
                None
            }
            Err(e) => {
                self.done = true;
                Some(Err(e))
            }
        }
    }
}

/// Convenience wrapper: `parse_record_stream(reader)` is `RecordReader::new(reader)`.
pub fn parse_record_stream<R: BufRead>(input: R) -> RecordReader<R> {
    RecordReader::new(input)
}

fn parse_line(text: &str, line: u64) -> Result<CorpusRecord> {
    let wire: WireRecordIn = serde_json::from_str(text).map_err(|e| {
        use serde_json::error::Category;
        match e.classify() {
            Category::Data => Error::Schema {
                line,
                message: e.to_string(),
            },
            _ => Error::Parse {
                line,
                message: e.to_string(),
            },
        }
    })?;
    if wire.id.is_empty() {
        return Err(Error::Schema {
            line,
            message: "empty id".into(),
        });
    }
    if wire.names.is_empty() {
        return Err(Error::Schema {
            line,
            message: "empty names list".into(),
        });
    }
    let content = BASE64
        .decode(wire.content.as_bytes())
        .map_err(|source| Error::Decode { line, source })?;
    Ok(CorpusRecord {
        content_id: wire.id,
        filename_candidates: wire.names,
        content,
        language: wire.lang,
    })
}

/// Writes one record as a single JSONL line (newline included).
pub fn write_record<W: Write>(out: &mut W, record: &CorpusRecord) -> Result<()> {
    let wire = WireRecordOut {
        id: &record.content_id,
        names: &record.filename_candidates,
        content: BASE64.encode(&record.content),
        lang: record.language.as_deref(),
    };
    serde_json::to_writer(&mut *out, &wire).map_err(|e| Error::io("writing corpus record", e.into()))?;
    out.write_all(b"\n").map_err(|e| Error::io("writing corpus record", e))
}
