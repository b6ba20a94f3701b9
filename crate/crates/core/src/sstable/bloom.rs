//! Bloom filter over encoded keys.
//!
//! Probes use double hashing (`h1 + i * h2`) over a 128-bit xxh3 digest with
//! a fixed seed, so filters are byte-identical across builds.
//!
//! Serialized layout: `[u32 k][u64 num_bits][bit bytes]`, little-endian.

use xxhash_rust::xxh3::xxh3_128_with_seed;

use crate::error::{Error, Result};

const HASH_SEED: u64 = 0x5050_4353_0b10_0f11;

#[derive(Debug, Clone, Copy)]
pub(crate) struct KeyHash(u64, u64);

impl KeyHash {
    pub(crate) fn of(key: &[u8]) -> Self {
        let h = xxh3_128_with_seed(key, HASH_SEED);
        KeyHash(h as u64, ((h >> 64) as u64) | 1)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BloomFilter {
    bits: Vec<u8>,
    num_bits: u64,
    k: u32,
}

impl BloomFilter {
    /// Hash count for a given density: `round(bits_per_key * ln 2)`, in 1..=30.
    pub fn optimal_k(bits_per_key: f64) -> u32 {
        ((bits_per_key * std::f64::consts::LN_2).round() as u32).clamp(1, 30)
    }

    pub(crate) fn from_hashes(hashes: &[KeyHash], bits_per_key: f64) -> Self {
        let k = Self::optimal_k(bits_per_key);
        if hashes.is_empty() {
            return Self {
                bits: Vec::new(),
                num_bits: 0,
                k,
            };
        }
        let num_bits = ((hashes.len() as f64 * bits_per_key).ceil() as u64).max(64);
        let mut filter = Self {
            bits: vec![0u8; num_bits.div_ceil(8) as usize],
            num_bits,
            k,
        };
        for h in hashes {
            filter.insert_hash(*h);
        }
        filter
    }

    pub fn build<'a>(keys: impl IntoIterator<Item = &'a [u8]>, bits_per_key: f64) -> Self {
        let hashes: Vec<KeyHash> = keys.into_iter().map(KeyHash::of).collect();
        Self::from_hashes(&hashes, bits_per_key)
    }

    fn insert_hash(&mut self, KeyHash(h1, h2): KeyHash) {
        for i in 0..u64::from(self.k) {
            let bit = h1.wrapping_add(i.wrapping_mul(h2)) % self.num_bits;
            self.bits[(bit / 8) as usize] |= 1 << (bit % 8);
        }
    }

    pub fn may_contain(&self, key: &[u8]) -> bool {
        if self.num_bits == 0 {
            return false;
        }
        let KeyHash(h1, h2) = KeyHash::of(key);
        (0..u64::from(self.k)).all(|i| {
            let bit = h1.wrapping_add(i.wrapping_mul(h2)) % self.num_bits;
            self.bits[(bit / 8) as usize] & (1 << (bit % 8)) != 0
        })
    }

    pub fn k(&self) -> u32 {
        self.k
    }

    pub fn num_bits(&self) -> u64 {
        self.num_bits
    }

    /// `(1 - e^(-kn/m))^k` for `n` inserted keys.
    pub fn expected_fp_rate(&self, n: u64) -> f64 {
        if self.num_bits == 0 {
            return 0.0;
        }
        let k = f64::from(self.k);
        (1.0 - (-k * n as f64 / self.num_bits as f64).exp()).powf(k)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(12 + self.bits.len());
        out.extend_from_slice(&self.k.to_le_bytes());
        out.extend_from_slice(&self.num_bits.to_le_bytes());
        out.extend_from_slice(&self.bits);
        out
    }

    pub fn from_bytes(data: &[u8]) -> Result<Self> {
        if data.len() < 12 {
            return Err(Error::Format("bloom section shorter than its header".into()));
        }
        let k = u32::from_le_bytes(data[0..4].try_into().expect("4 bytes"));
        let num_bits = u64::from_le_bytes(data[4..12].try_into().expect("8 bytes"));
        let bits = data[12..].to_vec();
        if bits.len() as u64 != num_bits.div_ceil(8) || k == 0 {
            return Err(Error::Format("bloom section size mismatch".into()));
        }
        Ok(Self { bits, num_bits, k })
    }
}
