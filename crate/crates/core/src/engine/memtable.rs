use std::collections::BTreeMap;

use crate::sstable::Cell;

/// In-memory ordered write buffer. `raw_bytes` is the sum of key and value
/// lengths of the current contents (a tombstone counts its key only).
#[derive(Debug, Default)]
pub struct Memtable {
    map: BTreeMap<Vec<u8>, Cell>,
    raw_bytes: u64,
}

fn cell_size(key: &[u8], cell: &Cell) -> u64 {
    let v = match cell {
        Cell::Value(v) => v.len(),
        Cell::Tombstone => 0,
    };
    (key.len() + v) as u64
}

impl Memtable {
    pub fn insert(&mut self, key: Vec<u8>, cell: Cell) {
        self.raw_bytes += cell_size(&key, &cell);
        if let Some(old) = self.map.get(&key) {
            self.raw_bytes -= cell_size(&key, old);
        }
        self.map.insert(key, cell);
    }

    pub fn get(&self, key: &[u8]) -> Option<&Cell> {
        self.map.get(key)
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }

    pub fn raw_bytes(&self) -> u64 {
        self.raw_bytes
    }

    pub fn iter(&self) -> impl Iterator<Item = (&Vec<u8>, &Cell)> {
        self.map.iter()
    }

    pub fn clear(&mut self) {
        self.map.clear();
        self.raw_bytes = 0;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn size_tracks_overwrites_and_tombstones() {
        let mut m = Memtable::default();
        m.insert(b"b".to_vec(), Cell::Value(b"1234".to_vec()));
        m.insert(b"a".to_vec(), Cell::Value(b"12".to_vec()));
        assert_eq!(m.raw_bytes(), 8);
        m.insert(b"b".to_vec(), Cell::Value(b"1".to_vec()));
        assert_eq!(m.raw_bytes(), 5);
        m.insert(b"a".to_vec(), Cell::Tombstone);
        assert_eq!(m.raw_bytes(), 3);
        let keys: Vec<_> = m.iter().map(|(k, _)| k.clone()).collect();
        assert_eq!(keys, vec![b"a".to_vec(), b"b".to_vec()]);
        m.clear();
        assert!(m.is_empty());
        assert_eq!(m.raw_bytes(), 0);
    }
}
