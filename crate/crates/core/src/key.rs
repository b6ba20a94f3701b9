//! Filename-derived sort keys.
//!
//! A key is `(extension, basename, content_id)`, encoded as
//! `extension 0x00 basename 0x00 content_id`. Because 0x00 sorts below every
//! byte the fields may contain, byte order on encodings equals tuple order,
//! so files sharing an extension (and then a basename) end up adjacent in the
//! table and inside the same compressed blocks.

use std::fmt;

use crate::error::{Error, Result};

pub const SEPARATOR: u8 = 0x00;

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct PpcKey {
    extension: Vec<u8>,
    basename: Vec<u8>,
    content_id: Vec<u8>,
}

impl PpcKey {
    pub fn new(
        extension: impl Into<Vec<u8>>,
        basename: impl Into<Vec<u8>>,
        content_id: impl Into<Vec<u8>>,
    ) -> Result<Self> {
        let key = Self {
            extension: extension.into(),
            basename: basename.into(),
            content_id: content_id.into(),
        };
        for (field, bytes) in [
            ("extension", &key.extension),
            ("basename", &key.basename),
            ("content id", &key.content_id),
        ] {
            if bytes.contains(&SEPARATOR) {
                return Err(Error::InvalidName(format!("{field} contains a 0x00 byte")));
            }
        }
        if key.basename.is_empty() {
            return Err(Error::InvalidName("empty basename".into()));
        }
        if key.content_id.is_empty() {
            return Err(Error::InvalidName("empty content id".into()));
        }
        Ok(key)
    }

    pub fn extension(&self) -> &[u8] {
        &self.extension
    }

    pub fn basename(&self) -> &[u8] {
        &self.basename
    }

    pub fn content_id(&self) -> &[u8] {
        &self.content_id
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.extension.len() + self.basename.len() + self.content_id.len() + 2);
        out.extend_from_slice(&self.extension);
        out.push(SEPARATOR);
        out.extend_from_slice(&self.basename);
        out.push(SEPARATOR);
        out.extend_from_slice(&self.content_id);
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        let seps = bytes.iter().filter(|&&b| b == SEPARATOR).count();
        if seps != 2 {
            return Err(Error::MalformedKey(format!("expected 2 separators, found {seps}")));
        }
        let mut parts = bytes.splitn(3, |&b| b == SEPARATOR);
        let ext = parts.next().unwrap_or_default();
        let base = parts.next().unwrap_or_default();
        let id = parts.next().unwrap_or_default();
        Self::new(ext, base, id).map_err(|e| Error::MalformedKey(e.to_string()))
    }

    /// Grouping prefix as it reads to humans, e.g. `h.doxygen` for `doxygen.h`.
    pub fn display_prefix(&self) -> String {
        let base = String::from_utf8_lossy(&self.basename);
        if self.extension.is_empty() {
            base.into_owned()
        } else {
            format!("{}.{}", String::from_utf8_lossy(&self.extension), base)
        }
    }
}

impl fmt::Display for PpcKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} {}",
            self.display_prefix(),
            String::from_utf8_lossy(&self.content_id)
        )
    }
}

/// Builds the key for a file from its canonical name and content id.
///
/// The extension is the text after the last `.`, lowercased. A name with no
/// dot, a trailing dot, or only a leading dot (`.gitignore`) has an empty
/// extension and keeps the whole name as basename.
pub fn derive_key(canonical_name: &str, content_id: &str) -> Result<PpcKey> {
    if canonical_name.is_empty() {
        return Err(Error::InvalidName("empty file name".into()));
    }
    if content_id.is_empty() {
        return Err(Error::InvalidName("empty content id".into()));
    }
    if canonical_name.as_bytes().contains(&SEPARATOR) || content_id.as_bytes().contains(&SEPARATOR) {
        return Err(Error::InvalidName("embedded 0x00 byte".into()));
    }
    let (ext, base) = match canonical_name.rfind('.') {
        Some(0) | None => (String::new(), canonical_name),
        Some(i) if i + 1 == canonical_name.len() => (String::new(), canonical_name),
        Some(i) => (canonical_name[i + 1..].to_lowercase(), &canonical_name[..i]),
    };
    PpcKey::new(ext, base, content_id)
}
