//! Two-tier lookup: the compressed engine in front of a slow archive that is
//! consulted only on a cache miss.

use std::collections::HashMap;
use std::io::BufRead;
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::Arc;
use std::time::Duration;

use crate::corpus::RecordReader;
use crate::engine::Engine;
use crate::error::{Error, Result};
use crate::key::{derive_key, PpcKey};

/// The slow tier, addressed by intrinsic content id.
pub trait BackendClient: Send + Sync {
    fn name(&self) -> &str;

    /// `Ok(None)` means the archive has no such content; `Err` is a
    /// transport failure.
    fn fetch(&self, content_id: &[u8]) -> Result<Option<Vec<u8>>>;
}

/// In-memory archive with a per-request latency and a bandwidth limit.
pub struct SimulatedBackend {
    name: String,
    contents: HashMap<Vec<u8>, Vec<u8>>,
    latency: Duration,
    bytes_per_sec: Option<f64>,
    available: AtomicBool,
    fetches: AtomicU64,
    bytes_served: AtomicU64,
}

impl SimulatedBackend {
    pub fn new(name: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            contents: HashMap::new(),
            latency: Duration::ZERO,
            bytes_per_sec: None,
            available: AtomicBool::new(true),
            fetches: AtomicU64::new(0),
            bytes_served: AtomicU64::new(0),
        }
    }

    pub fn with_latency(mut self, latency: Duration) -> Self {
        self.latency = latency;
        self
    }

    /// Bandwidth in bytes per second; must be positive.
    pub fn with_bandwidth(mut self, bytes_per_sec: f64) -> Result<Self> {
        if !(bytes_per_sec > 0.0 && bytes_per_sec.is_finite()) {
            return Err(Error::Config(format!("backend bandwidth {bytes_per_sec} must be > 0")));
        }
        self.bytes_per_sec = Some(bytes_per_sec);
        Ok(self)
    }

    pub fn insert(&mut self, content_id: impl Into<Vec<u8>>, content: Vec<u8>) {
        self.contents.insert(content_id.into(), content);
    }

    /// Loads every record of a JSONL corpus, keyed by content id.
    pub fn load_corpus(&mut self, input: impl BufRead) -> Result<usize> {
        let mut n = 0;
        for rec in RecordReader::new(input) {
            let rec = rec?;
            self.insert(rec.content_id.into_bytes(), rec.content);
            n += 1;
        }
        Ok(n)
    }

    pub fn set_available(&self, up: bool) {
        self.available.store(up, Ordering::SeqCst);
    }

    pub fn fetch_count(&self) -> u64 {
        self.fetches.load(Ordering::SeqCst)
    }

    pub fn bytes_served(&self) -> u64 {
        self.bytes_served.load(Ordering::SeqCst)
    }

    pub fn total_bytes(&self) -> u64 {
        self.contents.values().map(|v| v.len() as u64).sum()
    }

    pub fn len(&self) -> usize {
        self.contents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.contents.is_empty()
    }

    /// Minimum service time for a response of `bytes`.
    pub fn service_time(&self, bytes: usize) -> Duration {
        let transfer = self
            .bytes_per_sec
            .map_or(Duration::ZERO, |bw| Duration::from_secs_f64(bytes as f64 / bw));
        self.latency + transfer
    }
}

impl BackendClient for SimulatedBackend {
    fn name(&self) -> &str {
        &self.name
    }

    fn fetch(&self, content_id: &[u8]) -> Result<Option<Vec<u8>>> {
        self.fetches.fetch_add(1, Ordering::SeqCst);
        if !self.available.load(Ordering::SeqCst) {
            std::thread::sleep(self.latency);
            return Err(Error::Backend {
                backend: self.name.clone(),
                content_id: String::from_utf8_lossy(content_id).into_owned(),
                message: "backend unavailable".into(),
            });
        }
        let found = self.contents.get(content_id).cloned();
        let size = found.as_ref().map_or(0, Vec::len);
        std::thread::sleep(self.service_time(size));
        self.bytes_served.fetch_add(size as u64, Ordering::SeqCst);
        Ok(found)
    }
}

impl<B: BackendClient + ?Sized> BackendClient for Arc<B> {
    fn name(&self) -> &str {
        (**self).name()
    }

    fn fetch(&self, content_id: &[u8]) -> Result<Option<Vec<u8>>> {
        (**self).fetch(content_id)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AdmissionPolicy {
    AdmitAlways,
    AdmitNever,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Source {
    Cache,
    Backend,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct HitRateReport {
    pub hits: u64,
    pub misses: u64,
    /// `hits / (hits + misses)`; `None` for an empty window.
    pub hit_ratio: Option<f64>,
    pub backend_bytes: u64,
    pub admitted: u64,
    /// Admissions skipped because the capacity budget was full.
    pub admission_rejected: u64,
}

#[derive(Default)]
struct Window {
    hits: AtomicU64,
    misses: AtomicU64,
    backend_bytes: AtomicU64,
    admitted: AtomicU64,
    admission_rejected: AtomicU64,
}

pub struct TieredCache<B> {
    engine: Arc<Engine>,
    backend: B,
    policy: AdmissionPolicy,
    window: Window,
}

impl<B: BackendClient> TieredCache<B> {
    pub fn new(engine: Arc<Engine>, backend: B, policy: AdmissionPolicy) -> Self {
        Self {
            engine,
            backend,
            policy,
            window: Window::default(),
        }
    }

    pub fn engine(&self) -> &Arc<Engine> {
        &self.engine
    }

    pub fn backend(&self) -> &B {
        &self.backend
    }

    pub fn tiered_get(&self, key: &PpcKey) -> Result<(Option<Vec<u8>>, Source)> {
        if let Some(v) = self.engine.get(key)? {
            self.window.hits.fetch_add(1, Ordering::Relaxed);
            return Ok((Some(v), Source::Cache));
        }
        self.window.misses.fetch_add(1, Ordering::Relaxed);
        let fetched = self.backend.fetch(key.content_id()).map_err(|e| match e {
            e @ Error::Backend { .. } => e,
            other => Error::Backend {
                backend: self.backend.name().to_string(),
                content_id: String::from_utf8_lossy(key.content_id()).into_owned(),
                message: other.to_string(),
            },
        })?;
        let Some(value) = fetched else {
            return Ok((None, Source::Backend));
        };
        self.window
            .backend_bytes
            .fetch_add(value.len() as u64, Ordering::Relaxed);
        if self.policy == AdmissionPolicy::AdmitAlways {
            match self.engine.put(key, &value) {
                Ok(()) => {
                    self.window.admitted.fetch_add(1, Ordering::Relaxed);
                }
                Err(Error::Capacity { projected, capacity }) => {
                    log::debug!("not admitting: projected {projected} > capacity {capacity}");
                    self.window.admission_rejected.fetch_add(1, Ordering::Relaxed);
                }
                Err(e) => return Err(e),
            }
        }
        Ok((Some(value), Source::Backend))
    }

    /// Convenience: derive the key from a filename and content id first.
    pub fn tiered_get_by_name(&self, filename: &str, content_id: &str) -> Result<(Option<Vec<u8>>, Source)> {
        self.tiered_get(&derive_key(filename, content_id)?)
    }

    /// Counters since the previous report; reading resets the window.
    pub fn hit_rate_report(&self) -> HitRateReport {
        let take = |c: &AtomicU64| c.swap(0, Ordering::Relaxed);
        let hits = take(&self.window.hits);
        let misses = take(&self.window.misses);
        HitRateReport {
            hits,
            misses,
            hit_ratio: (hits + misses > 0).then(|| hits as f64 / (hits + misses) as f64),
            backend_bytes: take(&self.window.backend_bytes),
            admitted: take(&self.window.admitted),
            admission_rejected: take(&self.window.admission_rejected),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::{StoreConfig, MIB};
    use std::time::Instant;

    fn engine(dir: &std::path::Path, capacity: Option<u64>) -> Arc<Engine> {
        let mut cfg = StoreConfig::new(dir).with_write_buffer(MIB).with_block_size(4096);
        cfg.capacity_m = capacity;
        cfg.l0_compaction_trigger = 0;
        Arc::new(Engine::open(cfg).unwrap())
    }

    fn key(i: u32) -> PpcKey {
        derive_key(&format!("mod{i}.rs"), &format!("swh:1:cnt:{i:040}")).unwrap()
    }

    fn backend(n: u32, size: usize) -> Arc<SimulatedBackend> {
        let mut b = SimulatedBackend::new("archive");
        for i in 0..n {
            b.insert(
                key(i).content_id().to_vec(),
                format!("// file {i}\n").repeat(size / 12).into_bytes(),
            );
        }
        Arc::new(b)
    }

    #[test]
    fn hits_never_touch_the_backend() {
        let dir = tempfile::tempdir().unwrap();
        let e = engine(dir.path(), None);
        e.put(&key(1), b"cached").unwrap();
        let b = backend(0, 0);
        let t = TieredCache::new(e, Arc::clone(&b), AdmissionPolicy::AdmitAlways);
        for _ in 0..10 {
            assert_eq!(
                t.tiered_get(&key(1)).unwrap(),
                (Some(b"cached".to_vec()), Source::Cache)
            );
        }
        assert_eq!(b.fetch_count(), 0);
        let r = t.hit_rate_report();
        assert_eq!((r.hits, r.misses, r.hit_ratio), (10, 0, Some(1.0)));
    }

    #[test]
    fn admit_always_serves_second_call_from_cache() {
        let dir = tempfile::tempdir().unwrap();
        let b = backend(3, 1200);
        let t = TieredCache::new(engine(dir.path(), None), Arc::clone(&b), AdmissionPolicy::AdmitAlways);
        let (v1, s1) = t.tiered_get(&key(2)).unwrap();
        assert_eq!(s1, Source::Backend);
        let (v2, s2) = t.tiered_get(&key(2)).unwrap();
        assert_eq!((s2, &v2), (Source::Cache, &v1));
        assert_eq!(b.fetch_count(), 1);
        let r = t.hit_rate_report();
        assert_eq!((r.hits, r.misses, r.admitted), (1, 1, 1));
        assert_eq!(r.backend_bytes, v1.unwrap().len() as u64);
        assert_eq!(t.hit_rate_report(), HitRateReport::default());
    }

    #[test]
    fn admit_never_keeps_asking_the_backend() {
        let dir = tempfile::tempdir().unwrap();
        let b = backend(3, 100);
        let t = TieredCache::new(engine(dir.path(), None), Arc::clone(&b), AdmissionPolicy::AdmitNever);
        for _ in 0..4 {
            assert_eq!(t.tiered_get(&key(0)).unwrap().1, Source::Backend);
        }
        assert_eq!(b.fetch_count(), 4);
    }

    #[test]
    fn absent_everywhere_probes_once() {
        let dir = tempfile::tempdir().unwrap();
        let b = backend(1, 100);
        let t = TieredCache::new(engine(dir.path(), None), Arc::clone(&b), AdmissionPolicy::AdmitAlways);
        assert_eq!(t.tiered_get(&key(99)).unwrap(), (None, Source::Backend));
        assert_eq!(b.fetch_count(), 1);
    }

    #[test]
    fn backend_failure_is_an_error_not_a_miss() {
        let dir = tempfile::tempdir().unwrap();
        let b = backend(1, 100);
        b.set_available(false);
        let t = TieredCache::new(engine(dir.path(), None), Arc::clone(&b), AdmissionPolicy::AdmitAlways);
        let err = t.tiered_get(&key(0)).unwrap_err();
        assert!(matches!(err, Error::Backend { .. }), "{err}");
        assert_eq!(err.exit_code(), 3);
    }

    #[test]
    fn full_cache_downgrades_admission() {
        let dir = tempfile::tempdir().unwrap();
        // incompressible values so that a handful fill the 1 MiB budget
        let mut raw = SimulatedBackend::new("archive");
        let mut x = 0x9e3779b97f4a7c15u64;
        for i in 0..400 {
            let v: Vec<u8> = (0..8192)
                .map(|_| {
                    x ^= x << 13;
                    x ^= x >> 7;
                    x ^= x << 17;
                    x as u8
                })
                .collect();
            raw.insert(key(i).content_id().to_vec(), v);
        }
        let b = Arc::new(raw);
        let e = engine(dir.path(), Some(MIB));
        let t = TieredCache::new(Arc::clone(&e), Arc::clone(&b), AdmissionPolicy::AdmitAlways);
        for i in 0..400 {
            let (v, _) = t.tiered_get(&key(i)).unwrap();
            assert!(v.is_some());
        }
        let r = t.hit_rate_report();
        assert!(r.admission_rejected > 0);
        assert_eq!(r.admitted + r.admission_rejected, 400);
        e.flush().unwrap();
        assert!(e.stats().compressed_bytes <= MIB);
    }

    #[test]
    fn repeated_passes_converge_to_zero_fetches() {
        let dir = tempfile::tempdir().unwrap();
        let b = backend(200, 2000);
        assert!(b.total_bytes() < MIB);
        let t = TieredCache::new(
            engine(dir.path(), Some(4 * MIB)),
            Arc::clone(&b),
            AdmissionPolicy::AdmitAlways,
        );
        for i in 0..200 {
            t.tiered_get(&key(i)).unwrap();
        }
        assert_eq!(b.fetch_count(), 200);
        for i in 0..200 {
            assert_eq!(t.tiered_get(&key(i)).unwrap().1, Source::Cache);
        }
        assert_eq!(b.fetch_count(), 200);
    }

    #[test]
    fn service_time_respects_latency_and_bandwidth() {
        let mut b = SimulatedBackend::new("slow")
            .with_latency(Duration::from_millis(20))
            .with_bandwidth(1_000_000.0)
            .unwrap();
        b.insert(b"id".to_vec(), vec![0u8; 30_000]);
        let t0 = Instant::now();
        assert!(b.fetch(b"id").unwrap().is_some());
        assert!(t0.elapsed() >= Duration::from_millis(50));
        assert!(SimulatedBackend::new("x").with_bandwidth(0.0).is_err());
    }

    #[test]
    fn loads_from_corpus_jsonl() {
        let jsonl = concat!(
            r#"{"id":"swh:1:cnt:aa","names":[["a.py",1]],"content":"cHJpbnQoMSkK"}"#,
            "\n",
            r#"{"id":"swh:1:cnt:bb","names":[["b.py",1]],"content":""}"#,
            "\n"
        );
        let mut b = SimulatedBackend::new("archive");
        assert_eq!(b.load_corpus(jsonl.as_bytes()).unwrap(), 2);
        assert_eq!(b.fetch(b"swh:1:cnt:aa").unwrap().unwrap(), b"print(1)\n");
        assert_eq!(b.fetch(b"swh:1:cnt:bb").unwrap().unwrap(), b"");
    }
}
