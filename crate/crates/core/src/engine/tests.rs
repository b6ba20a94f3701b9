use std::collections::BTreeMap;

use rand::rngs::StdRng;
use rand::seq::SliceRandom;
use rand::{Rng, RngCore, SeedableRng};

use super::*;
use crate::codec::CodecSpec;

fn small(dir: &Path) -> StoreConfig {
    let mut c = StoreConfig::new(dir).with_write_buffer(MIB).with_block_size(4096);
    c.max_wal_bytes = 16 * MIB;
    c.compaction_threads = 2;
    c.target_table_bytes = 256 * KIB;
    c.l0_compaction_trigger = 0;
    c
}

fn k(i: u32) -> Vec<u8> {
    format!("rs\0file{i:06}\0id{i}").into_bytes()
}

fn v(i: u32, gen: u32) -> Vec<u8> {
    format!("fn f{i}() {{ /* gen {gen} */ }}\n")
        .repeat(1 + (i % 7) as usize)
        .into_bytes()
}

fn l1_disjoint(e: &Engine) -> bool {
    let ver = e.inner.current();
    ver.l1
        .windows(2)
        .all(|w| w[0].table.last_key() < w[1].table.first_key())
}

#[test]
fn empty_store() {
    let dir = tempfile::tempdir().unwrap();
    let e = Engine::open(small(dir.path())).unwrap();
    assert_eq!(e.get_encoded(b"anything").unwrap(), None);
    e.compact().unwrap();
    e.flush().unwrap();
    let s = e.stats();
    assert_eq!((s.entry_count, s.compressed_bytes, s.ratio), (0, 0, None));
    assert!(e.multi_get::<Vec<u8>>(&[]).unwrap().is_empty());
}

#[test]
fn bad_config_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small(dir.path()).with_write_buffer(4 * MIB).with_capacity(2 * MIB);
    assert!(matches!(Engine::open(cfg), Err(Error::Config(_))));
}

#[test]
fn put_overwrite_delete() {
    let dir = tempfile::tempdir().unwrap();
    let e = Engine::open(small(dir.path())).unwrap();
    let key = PpcKey::new("c", "main", "swh:1").unwrap();
    e.put(&key, b"v1").unwrap();
    assert_eq!(e.get(&key).unwrap().as_deref(), Some(&b"v1"[..]));
    e.put(&key, b"v2").unwrap();
    assert_eq!(e.get(&key).unwrap().as_deref(), Some(&b"v2"[..]));
    e.flush().unwrap();
    e.put(&key, b"v3").unwrap();
    assert_eq!(e.get(&key).unwrap().as_deref(), Some(&b"v3"[..]));
    e.delete(&key).unwrap();
    assert_eq!(e.get(&key).unwrap(), None);
    let never = PpcKey::new("c", "other", "swh:2").unwrap();
    e.delete(&never).unwrap();
    assert_eq!(e.get(&never).unwrap(), None);
    assert!(matches!(e.put_encoded(b"", b"x"), Err(Error::Precondition(_))));
}

#[test]
fn unflushed_writes_survive_a_crash() {
    let dir = tempfile::tempdir().unwrap();
    {
        let e = Engine::open(small(dir.path())).unwrap();
        for i in 0..1000 {
            e.put_encoded(&k(i), &v(i, 0)).unwrap();
        }
        // dropped without close: nothing flushed
        assert_eq!(e.stats().l0_tables, 0);
    }
    let e = Engine::open(small(dir.path())).unwrap();
    for i in 0..1000 {
        assert_eq!(e.get_encoded(&k(i)).unwrap(), Some(v(i, 0)), "key {i}");
    }
}

#[test]
fn crash_between_flushes_keeps_everything() {
    let dir = tempfile::tempdir().unwrap();
    {
        let e = Engine::open(small(dir.path())).unwrap();
        for i in 0..3000 {
            e.put_encoded(&k(i), &v(i, 0)).unwrap();
            if i % 1000 == 999 {
                e.flush().unwrap();
            }
        }
        for i in (0..3000).step_by(3) {
            e.delete_encoded(&k(i)).unwrap();
        }
    }
    let e = Engine::open(small(dir.path())).unwrap();
    assert_eq!(e.stats().l0_tables, 3);
    for i in 0..3000 {
        let want = (i % 3 != 0).then(|| v(i, 0));
        assert_eq!(e.get_encoded(&k(i)).unwrap(), want);
    }
}

#[test]
fn torn_wal_tail_is_dropped_on_open() {
    let dir = tempfile::tempdir().unwrap();
    {
        let e = Engine::open(small(dir.path())).unwrap();
        for i in 0..10 {
            e.put_encoded(&k(i), &v(i, 0)).unwrap();
        }
    }
    let wal = fs::read_dir(dir.path())
        .unwrap()
        .map(|e| e.unwrap().path())
        .find(|p| p.extension().is_some_and(|x| x == "log"))
        .unwrap();
    let mut bytes = fs::read(&wal).unwrap();
    bytes.extend_from_slice(&[0x40, 0, 0, 0, 1, 2, 3]);
    fs::write(&wal, &bytes).unwrap();
    let e = Engine::open(small(dir.path())).unwrap();
    for i in 0..10 {
        assert_eq!(e.get_encoded(&k(i)).unwrap(), Some(v(i, 0)));
    }
    e.put_encoded(&k(10), b"after").unwrap();
    drop(e);
    let e = Engine::open(small(dir.path())).unwrap();
    assert_eq!(e.get_encoded(&k(10)).unwrap().as_deref(), Some(&b"after"[..]));
}

#[test]
fn leftover_wal_segments_are_all_replayed() {
    let dir = tempfile::tempdir().unwrap();
    {
        let e = Engine::open(small(dir.path())).unwrap();
        e.put_encoded(&k(1), b"one").unwrap();
    }
    // a newer segment, as left by a flush interrupted before its manifest commit
    let m = Manifest::load(dir.path()).unwrap().unwrap();
    let mut w = WalWriter::open(&dir.path().join(wal_file_name(m.next_seq + 5)), false).unwrap();
    w.append(&k(2), &Cell::Value(b"two".to_vec())).unwrap();
    w.append(&k(1), &Cell::Value(b"uno".to_vec())).unwrap();
    drop(w);
    let e = Engine::open(small(dir.path())).unwrap();
    assert_eq!(e.get_encoded(&k(1)).unwrap().as_deref(), Some(&b"uno"[..]));
    assert_eq!(e.get_encoded(&k(2)).unwrap().as_deref(), Some(&b"two"[..]));
    drop(e);
    let logs = fs::read_dir(dir.path())
        .unwrap()
        .filter(|e| e.as_ref().unwrap().path().extension().is_some_and(|x| x == "log"))
        .count();
    assert_eq!(logs, 1);
}

#[test]
fn corrupt_or_incomplete_manifest_is_a_recovery_error() {
    let dir = tempfile::tempdir().unwrap();
    {
        let e = Engine::open(small(dir.path())).unwrap();
        e.put_encoded(&k(1), b"x").unwrap();
        e.flush().unwrap();
    }
    let path = dir.path().join("MANIFEST");
    let good = fs::read_to_string(&path).unwrap();
    fs::write(&path, "garbage\n").unwrap();
    assert!(matches!(Engine::open(small(dir.path())), Err(Error::Recovery(_))));

    fs::write(&path, &good).unwrap();
    let table = e_table_paths(dir.path());
    fs::remove_file(&table[0]).unwrap();
    assert!(matches!(Engine::open(small(dir.path())), Err(Error::Recovery(_))));
}

fn e_table_paths(dir: &Path) -> Vec<std::path::PathBuf> {
    fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|x| x == "ppcs"))
        .collect()
}

#[test]
fn orphan_tables_are_removed() {
    let dir = tempfile::tempdir().unwrap();
    {
        let e = Engine::open(small(dir.path())).unwrap();
        e.put_encoded(&k(1), b"x").unwrap();
        e.flush().unwrap();
    }
    let orphan = dir.path().join(table_file_name(999));
    fs::copy(&e_table_paths(dir.path())[0], &orphan).unwrap();
    let e = Engine::open(small(dir.path())).unwrap();
    assert!(!orphan.exists());
    assert_eq!(e.get_encoded(&k(1)).unwrap().as_deref(), Some(&b"x"[..]));
    // new files must not collide with the removed orphan's number
    e.put_encoded(&k(2), b"y").unwrap();
    e.flush().unwrap();
    assert!(e.inner.next_seq.load(Ordering::Relaxed) > 999);
}

#[test]
fn capacity_budget_rejects_the_overflowing_put() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small(dir.path()).with_capacity(MIB);
    let e = Engine::open(cfg).unwrap();
    let mut rng = StdRng::seed_from_u64(7);
    let mut stored = 0u32;
    let err = loop {
        let mut val = vec![0u8; 8 * 1024];
        rng.fill_bytes(&mut val);
        match e.put_encoded(&k(stored), &val) {
            Ok(()) => stored += 1,
            Err(err) => break err,
        }
        assert!(stored < 10_000, "capacity never enforced");
    };
    assert!(matches!(err, Error::Capacity { capacity, .. } if capacity == MIB));
    // the rejected put left no trace
    assert_eq!(e.get_encoded(&k(stored)).unwrap(), None);
    assert!(stored > 50);
    e.flush().unwrap();
    assert!(e.stats().compressed_bytes <= MIB);
    for i in 0..stored {
        assert!(e.get_encoded(&k(i)).unwrap().is_some());
    }
}

#[test]
fn compaction_purges_deleted_keys() {
    let dir = tempfile::tempdir().unwrap();
    let e = Engine::open(small(dir.path())).unwrap();
    for i in 0..100 {
        e.put_encoded(&k(i), &v(i, 0)).unwrap();
    }
    e.flush().unwrap();
    e.delete_encoded(&k(42)).unwrap();
    e.flush().unwrap();
    e.compact().unwrap();
    let scan = e.table_scan().unwrap();
    assert_eq!(scan.len(), 99);
    assert!(scan.iter().all(|(key, c)| *key != k(42) && !c.is_tombstone()));
    assert_eq!(e.get_encoded(&k(42)).unwrap(), None);
    assert_eq!(e.stats().tombstone_count, 0);
}

#[test]
fn compacting_overwrites_does_not_grow_the_store() {
    let dir = tempfile::tempdir().unwrap();
    let e = Engine::open(small(dir.path())).unwrap();
    for gen in 0..4 {
        for i in 0..1000 {
            e.put_encoded(&k(i), &v(i, gen)).unwrap();
        }
        e.flush().unwrap();
    }
    let before = e.stats().compressed_bytes;
    e.compact().unwrap();
    let after = e.stats();
    assert!(
        after.compressed_bytes <= before,
        "{} > {before}",
        after.compressed_bytes
    );
    assert_eq!(after.entry_count, 1000);
    for i in 0..1000 {
        assert_eq!(e.get_encoded(&k(i)).unwrap(), Some(v(i, 3)));
    }
}

#[test]
fn sorted_bulk_load_moves_tables_without_rewrite() {
    let dir = tempfile::tempdir().unwrap();
    let e = Engine::open(small(dir.path())).unwrap();
    for i in 0..3000 {
        e.put_encoded(&k(i), &v(i, 0)).unwrap();
        if i % 1000 == 999 {
            e.flush().unwrap();
        }
    }
    let before: Vec<_> = e.table_paths();
    e.compact().unwrap();
    let s = e.stats();
    assert_eq!((s.l0_tables, s.l1_tables), (0, 3));
    let mut after = e.table_paths();
    after.sort();
    let mut before = before;
    before.sort();
    assert_eq!(before, after);
    assert!(l1_disjoint(&e));
}

/// Random puts/deletes/flushes/compactions against a BTreeMap oracle.
#[test]
fn random_operations_match_a_map() {
    for (seed, threads, mmap) in [(1u64, 1usize, false), (2, 3, true), (3, 4, false)] {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = small(dir.path()).with_codec(CodecSpec::zstd(1).unwrap());
        cfg.compaction_threads = threads;
        cfg.mmap_reads = mmap;
        cfg.target_table_bytes = 16 * KIB;
        let mut e = Engine::open(cfg.clone()).unwrap();
        let mut oracle: BTreeMap<Vec<u8>, Vec<u8>> = BTreeMap::new();
        let mut rng = StdRng::seed_from_u64(seed);
        for step in 0..6000u32 {
            let i = rng.random_range(0..1500);
            match rng.random_range(0..100) {
                0..=64 => {
                    let val = v(i, step);
                    e.put_encoded(&k(i), &val).unwrap();
                    oracle.insert(k(i), val);
                }
                65..=89 => {
                    e.delete_encoded(&k(i)).unwrap();
                    oracle.remove(&k(i));
                }
                90..=95 => e.flush().unwrap(),
                96..=98 => e.compact().unwrap(),
                _ => {
                    drop(e);
                    e = Engine::open(cfg.clone()).unwrap();
                }
            }
        }
        for i in 0..1500 {
            assert_eq!(
                e.get_encoded(&k(i)).unwrap().as_ref(),
                oracle.get(&k(i)),
                "seed {seed} key {i}"
            );
        }
        e.flush().unwrap();
        e.compact().unwrap();
        assert!(l1_disjoint(&e));
        assert_eq!(e.stats().l0_tables, 0);
        let mut live = Vec::new();
        e.for_each_live(|key, val| {
            live.push((key.to_vec(), val.to_vec()));
            Ok(())
        })
        .unwrap();
        assert_eq!(live, oracle.into_iter().collect::<Vec<_>>());
    }
}

#[test]
fn multi_get_equals_get_loop() {
    let dir = tempfile::tempdir().unwrap();
    let e = Engine::open(small(dir.path())).unwrap();
    let mut rng = StdRng::seed_from_u64(11);
    // L1 data, overwritten partly in L0 and in the memtable, some deletes
    for i in 0..2000 {
        e.put_encoded(&k(i), &v(i, 0)).unwrap();
    }
    e.flush().unwrap();
    e.compact().unwrap();
    for i in (0..2000).step_by(5) {
        e.put_encoded(&k(i), &v(i, 1)).unwrap();
    }
    e.flush().unwrap();
    for i in (0..2000).step_by(7) {
        e.delete_encoded(&k(i)).unwrap();
    }
    for _ in 0..50 {
        let n = rng.random_range(0..150);
        let keys: Vec<Vec<u8>> = (0..n).map(|_| k(rng.random_range(0..2300))).collect();
        let batch = e.multi_get(&keys).unwrap();
        let single: Vec<_> = keys.iter().map(|key| e.get_encoded(key).unwrap()).collect();
        assert_eq!(batch, single);
    }
}

#[test]
fn sorted_batches_touch_no_more_blocks_than_shuffled_ones() {
    let dir = tempfile::tempdir().unwrap();
    let e = Engine::open(small(dir.path())).unwrap();
    for i in 0..5000 {
        e.put_encoded(&k(i), &v(i, 0)).unwrap();
    }
    e.flush().unwrap();
    e.compact().unwrap();
    let mut rng = StdRng::seed_from_u64(5);
    let mut keys: Vec<Vec<u8>> = (0..100).map(|_| k(rng.random_range(0..5000))).collect();
    keys.sort();
    let blocks = |keys: &[Vec<u8>]| {
        e.reset_read_counters();
        e.multi_get(keys).unwrap();
        e.stats().reads.blocks_read
    };
    let sorted = blocks(&keys);
    keys.shuffle(&mut rng);
    let shuffled = blocks(&keys);
    e.reset_read_counters();
    for key in &keys {
        e.get_encoded(key).unwrap();
    }
    let looped = e.stats().reads.blocks_read;
    assert!(sorted <= shuffled && sorted <= looped, "{sorted} {shuffled} {looped}");
    assert!(sorted < looped);
}

#[test]
fn readers_see_latest_or_previous_value_during_writes() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = small(dir.path());
    cfg.l0_compaction_trigger = 2;
    let e = Arc::new(Engine::open(cfg).unwrap());
    for i in 0..200 {
        e.put_encoded(&k(i), &0u32.to_le_bytes()).unwrap();
    }
    let stop = Arc::new(std::sync::atomic::AtomicBool::new(false));
    let readers: Vec<_> = (0..3)
        .map(|r| {
            let e = Arc::clone(&e);
            let stop = Arc::clone(&stop);
            std::thread::spawn(move || {
                let mut seen = vec![0u32; 200];
                let mut rng = StdRng::seed_from_u64(r);
                while !stop.load(Ordering::Relaxed) {
                    let i = rng.random_range(0..200u32);
                    let got = e.get_encoded(&k(i)).unwrap().expect("never deleted");
                    let gen = u32::from_le_bytes(got.try_into().unwrap());
                    assert!(gen >= seen[i as usize], "value went backwards");
                    seen[i as usize] = gen;
                }
            })
        })
        .collect();
    for gen in 1..=30u32 {
        for i in 0..200 {
            e.put_encoded(&k(i), &gen.to_le_bytes()).unwrap();
        }
        if gen % 3 == 0 {
            e.flush().unwrap();
        }
    }
    stop.store(true, Ordering::Relaxed);
    for r in readers {
        r.join().unwrap();
    }
    e.wait_for_compaction().unwrap();
    for i in 0..200 {
        assert_eq!(e.get_encoded(&k(i)).unwrap(), Some(30u32.to_le_bytes().to_vec()));
    }
}

#[test]
fn background_compaction_drains_l0() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = small(dir.path());
    cfg.l0_compaction_trigger = 2;
    let e = Engine::open(cfg).unwrap();
    for round in 0..4u32 {
        for i in 0..500 {
            e.put_encoded(&k(i), &v(i, round)).unwrap();
        }
        e.flush().unwrap();
    }
    e.wait_for_compaction().unwrap();
    assert!(e.stats().l0_tables < 2);
    assert!(l1_disjoint(&e));
    for i in 0..500 {
        assert_eq!(e.get_encoded(&k(i)).unwrap(), Some(v(i, 3)));
    }
    e.close().unwrap();
}

#[test]
fn memtable_limit_triggers_flush() {
    let dir = tempfile::tempdir().unwrap();
    let e = Engine::open(small(dir.path())).unwrap();
    let val = vec![b'x'; 10_000];
    for i in 0..250 {
        e.put_encoded(&k(i), &val).unwrap();
    }
    let s = e.stats();
    assert!(s.l0_tables >= 2);
    assert!(s.memtable_bytes < MIB);
    let ratio = s.ratio.unwrap();
    assert!(ratio > 0.0 && ratio < 0.1, "{ratio}");
}
