//! Bit-array Bloom filter with a canonical byte form.
//!
//! The serialized form (`m ∥ k ∥ bits`, LSB-first within each byte) is the
//! MAC input for the owner's authenticator, so two filters built from the
//! same multiset of elements must serialize to identical bytes.

use sha2::{Digest, Sha256};

use crate::codec::Reader;
use crate::crypto::{digit_element, Key};
use crate::error::{Error, Result};

const INDEX_DOMAIN: &[u8] = b"dsse/bloom-index/v1";

/// Files per refresh period for a 10-minute upload interval over one year.
pub const FILES_PER_YEAR: u64 = 144 * 365;
/// Default element budget: one year of 15-keyword files plus room for the
/// digit embeddings written at refresh time.
pub const DEFAULT_CAPACITY: u64 = FILES_PER_YEAR * 15 + 150_000;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BloomParams {
    pub target_fp: f64,
    pub capacity: u64,
}

impl Default for BloomParams {
    fn default() -> Self {
        Self {
            target_fp: 2f64.powi(-30),
            capacity: DEFAULT_CAPACITY,
        }
    }
}

impl BloomParams {
    pub fn new(target_fp: f64, capacity: u64) -> Self {
        Self {
            target_fp,
            capacity,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.target_fp > 0.0 && self.target_fp < 1.0) {
            return Err(Error::usage(format!(
                "target false-positive rate must lie in (0,1), got {}",
                self.target_fp
            )));
        }
        if self.capacity == 0 {
            return Err(Error::usage("bloom capacity must be at least 1"));
        }
        let k = self.hash_count_unchecked();
        if k > 255 {
            return Err(Error::usage("target false-positive rate needs more than 255 hashes"));
        }
        if self.bit_count_unchecked() > u64::from(u32::MAX) {
            return Err(Error::usage("bloom filter would exceed 2^32 bits"));
        }
        Ok(())
    }

    fn hash_count_unchecked(&self) -> u64 {
        (-self.target_fp.log2()).ceil().max(1.0) as u64
    }

    fn bit_count_unchecked(&self) -> u64 {
        let k = self.hash_count_unchecked() as f64;
        ((self.capacity as f64) * k / std::f64::consts::LN_2).ceil() as u64
    }

    /// k = ceil(−log2 p).
    pub fn hash_count(&self) -> u32 {
        self.hash_count_unchecked() as u32
    }

    /// m = ceil(n·k / ln 2).
    pub fn bit_count(&self) -> u32 {
        self.bit_count_unchecked() as u32
    }

    /// Serialized size in bytes of a filter with these parameters.
    pub fn serialized_len(&self) -> usize {
        8 + (self.bit_count() as usize).div_ceil(8)
    }
}

#[derive(Clone, Debug)]
pub struct BloomFilter {
    bits: Vec<u8>,
    m: u32,
    k: u32,
    n_inserted: u64,
}

/// Equality is over the canonical form; the insertion count is local
/// bookkeeping and does not survive serialization.
impl PartialEq for BloomFilter {
    fn eq(&self, other: &Self) -> bool {
        self.m == other.m && self.k == other.k && self.bits == other.bits
    }
}

impl Eq for BloomFilter {}

impl BloomFilter {
    pub fn new(params: BloomParams) -> Result<Self> {
        params.validate()?;
        Ok(Self::with_dimensions(params.bit_count(), params.hash_count()))
    }

    fn with_dimensions(m: u32, k: u32) -> Self {
        Self {
            bits: vec![0u8; (m as usize).div_ceil(8)],
            m,
            k,
            n_inserted: 0,
        }
    }

    pub fn bit_count(&self) -> u32 {
        self.m
    }

    pub fn hash_count(&self) -> u32 {
        self.k
    }

    pub fn n_inserted(&self) -> u64 {
        self.n_inserted
    }

    pub fn popcount(&self) -> u64 {
        self.bits.iter().map(|b| u64::from(b.count_ones())).sum()
    }

    /// Theoretical false-positive rate `(1 − e^{−kn/m})^k` after `n` inserts.
    pub fn expected_fp_rate(&self, n: u64) -> f64 {
        let k = f64::from(self.k);
        (1.0 - (-k * n as f64 / f64::from(self.m)).exp()).powf(k)
    }

    fn for_each_index(&self, element: &[u8], mut f: impl FnMut(usize) -> bool) {
        let mut base = Sha256::new();
        base.update(INDEX_DOMAIN);
        base.update((element.len() as u32).to_be_bytes());
        base.update(element);
        for i in 0..self.k {
            let mut h = base.clone();
            h.update([i as u8]);
            let d = h.finalize();
            let v = u64::from_be_bytes(d[..8].try_into().unwrap());
            if !f((v % u64::from(self.m)) as usize) {
                return;
            }
        }
    }

    pub fn add(&mut self, element: &[u8]) {
        let mut idx = Vec::with_capacity(self.k as usize);
        self.for_each_index(element, |i| {
            idx.push(i);
            true
        });
        for i in idx {
            self.bits[i / 8] |= 1 << (i % 8);
        }
        self.n_inserted += 1;
    }

    pub fn contains(&self, element: &[u8]) -> bool {
        let mut hit = true;
        self.for_each_index(element, |i| {
            hit = self.bits[i / 8] & (1 << (i % 8)) != 0;
            hit
        });
        hit
    }

    pub(crate) fn set_inserted(&mut self, n: u64) {
        self.n_inserted = n;
    }

    /// The canonical form as two slices (`m ∥ k` header, then the bits), so
    /// callers can MAC it without copying the array.
    pub fn canonical_parts(&self) -> ([u8; 8], &[u8]) {
        let mut header = [0u8; 8];
        header[..4].copy_from_slice(&self.m.to_be_bytes());
        header[4..].copy_from_slice(&self.k.to_be_bytes());
        (header, &self.bits)
    }

    /// Toggles one bit in place. Only the adversarial server uses this.
    pub fn flip_bit(&mut self, index: u32) {
        let i = (index % self.m) as usize;
        self.bits[i / 8] ^= 1 << (i % 8);
    }

    pub fn serialized_len(&self) -> usize {
        8 + self.bits.len()
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.serialized_len());
        out.extend_from_slice(&self.m.to_be_bytes());
        out.extend_from_slice(&self.k.to_be_bytes());
        out.extend_from_slice(&self.bits);
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader::new(bytes);
        let m = r.u32()?;
        let k = r.u32()?;
        if m == 0 {
            return Err(Error::format(0, "bloom filter with zero bits"));
        }
        if k == 0 || k > 255 {
            return Err(Error::format(4, format!("invalid hash count {k}")));
        }
        let body_len = (m as usize).div_ceil(8);
        if r.remaining() != body_len {
            return Err(Error::format(
                8,
                format!("bit array is {} bytes, m = {m} needs {body_len}", r.remaining()),
            ));
        }
        let bits = r.take(body_len)?.to_vec();
        let spare = body_len * 8 - m as usize;
        if spare > 0 && bits[body_len - 1] >> (8 - spare) != 0 {
            return Err(Error::format(bytes.len() - 1, "padding bits set"));
        }
        Ok(Self {
            bits,
            m,
            k,
            n_inserted: 0,
        })
    }

    /// Stores a counter as one element per decimal digit,
    /// `F1(K, w ∥ pos ∥ digit_pos)` with pos 1 the least significant digit.
    pub fn embed_counter(&mut self, k_prf: &Key, keyword: &str, counter: u64) -> Result<()> {
        if counter == 0 {
            return Err(Error::usage("cannot embed a zero counter"));
        }
        for (pos, digit) in decimal_digits(counter) {
            self.add(&digit_element(k_prf, keyword, pos, digit));
        }
        Ok(())
    }

    pub fn extract_counter(&self, k_prf: &Key, keyword: &str) -> Result<Option<u64>> {
        self.extract_counter_counted(k_prf, keyword).map(|e| e.value)
    }

    /// Reconstructs an embedded counter, probing all ten digits at each
    /// position so that a false positive surfaces as an ambiguity error.
    pub fn extract_counter_counted(&self, k_prf: &Key, keyword: &str) -> Result<Extraction> {
        let mut value: u64 = 0;
        let mut scale: u64 = 1;
        let mut probes = 0u32;
        for pos in 1..=MAX_DIGITS + 1 {
            let mut found = None;
            for digit in 0..10u32 {
                probes += 1;
                if self.contains(&digit_element(k_prf, keyword, pos, digit)) {
                    if found.is_some() {
                        return Err(Error::AmbiguousDigit { pos });
                    }
                    found = Some(digit);
                }
            }
            let Some(digit) = found else {
                return Ok(Extraction {
                    value: (pos > 1).then_some(value),
                    probes,
                    positions: pos,
                });
            };
            if pos > MAX_DIGITS {
                return Err(Error::AmbiguousDigit { pos });
            }
            value = u64::from(digit)
                .checked_mul(scale)
                .and_then(|d| value.checked_add(d))
                .ok_or(Error::AmbiguousDigit { pos })?;
            scale = scale.saturating_mul(10);
        }
        unreachable!("loop returns at or before position {}", MAX_DIGITS + 1)
    }
}

const MAX_DIGITS: u32 = 20;

/// Result of a digit-extraction pass.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Extraction {
    pub value: Option<u64>,
    pub probes: u32,
    /// Digit positions probed, including the terminating empty one.
    pub positions: u32,
}

/// `(pos, digit)` pairs, least significant first.
pub fn decimal_digits(mut n: u64) -> Vec<(u32, u32)> {
    let mut out = Vec::new();
    let mut pos = 1;
    loop {
        out.push((pos, (n % 10) as u32));
        n /= 10;
        pos += 1;
        if n == 0 {
            return out;
        }
    }
}

pub fn num_digits(n: u64) -> u32 {
    decimal_digits(n).len() as u32
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::crypto::random_key;
    use proptest::prelude::*;
    use rand::{Rng, RngCore, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn small() -> BloomFilter {
        BloomFilter::new(BloomParams::new(2f64.powi(-30), 2_000)).unwrap()
    }

    #[test]
    fn parameters_follow_optimal_k_and_m() {
        let p = BloomParams::new(2f64.powi(-30), 1000);
        assert_eq!(p.hash_count(), 30);
        // 1000 * 30 / ln 2 = 43280.85...
        assert_eq!(p.bit_count(), 43_281);
        let per_elem = f64::from(p.bit_count()) / 1000.0;
        assert!((per_elem - 43.28).abs() < 0.01);
        let relaxed = BloomParams::new(0.01, 100_000);
        assert_eq!(relaxed.hash_count(), 7);
    }

    #[test]
    fn default_capacity_is_the_same_order_as_five_megabytes() {
        let bytes = BloomParams::default().serialized_len() as f64;
        assert!(bytes > 5e6 / 3.0 && bytes < 5e6 * 3.0, "{bytes}");
    }

    #[test]
    fn invalid_params_rejected() {
        assert!(matches!(BloomFilter::new(BloomParams::new(0.01, 0)), Err(Error::Usage(_))));
        assert!(matches!(BloomFilter::new(BloomParams::new(1.0, 10)), Err(Error::Usage(_))));
        assert!(matches!(BloomFilter::new(BloomParams::new(0.0, 10)), Err(Error::Usage(_))));
    }

    #[test]
    fn fresh_filter_is_empty() {
        let bf = small();
        assert_eq!(bf.popcount(), 0);
        assert!(!bf.contains(b"anything"));
        assert!(!bf.contains(b""));
    }

    #[test]
    fn add_then_verify_and_idempotence() {
        let mut bf = small();
        bf.add(b"e");
        assert!(bf.contains(b"e"));
        let snapshot = bf.to_bytes();
        bf.add(b"e");
        assert_eq!(bf.to_bytes(), snapshot);
        assert_eq!(bf.n_inserted(), 2);
        assert!(bf.popcount() <= u64::from(bf.hash_count()) * bf.n_inserted());
    }

    #[test]
    fn serialization_round_trip_and_length() {
        let mut bf = small();
        for i in 0..100u32 {
            bf.add(&i.to_be_bytes());
        }
        let bytes = bf.to_bytes();
        assert_eq!(bytes.len(), 8 + (bf.bit_count() as usize).div_ceil(8));
        assert_eq!(BloomFilter::from_bytes(&bytes).unwrap(), bf);
    }

    #[test]
    fn deserialize_rejects_bad_input() {
        let bytes = small().to_bytes();
        assert!(matches!(
            BloomFilter::from_bytes(&bytes[..bytes.len() - 1]),
            Err(Error::Format { .. })
        ));
        assert!(matches!(BloomFilter::from_bytes(&bytes[..6]), Err(Error::Format { .. })));
        let mut extra = bytes.clone();
        extra.push(0);
        assert!(matches!(BloomFilter::from_bytes(&extra), Err(Error::Format { .. })));
        let mut zero_k = bytes.clone();
        zero_k[4..8].copy_from_slice(&0u32.to_be_bytes());
        assert!(matches!(BloomFilter::from_bytes(&zero_k), Err(Error::Format { .. })));
    }

    #[test]
    fn deserialize_rejects_set_padding_bits() {
        let bf = BloomFilter::with_dimensions(12, 3);
        let mut bytes = bf.to_bytes();
        *bytes.last_mut().unwrap() = 0x80;
        assert!(matches!(BloomFilter::from_bytes(&bytes), Err(Error::Format { .. })));
    }

    #[test]
    fn identical_add_sequences_serialize_identically() {
        let mut a = small();
        let mut b = small();
        for e in [b"x".as_slice(), b"y", b"z"] {
            a.add(e);
        }
        for e in [b"z".as_slice(), b"x", b"y"] {
            b.add(e);
        }
        assert_eq!(a.to_bytes(), b.to_bytes());
    }

    #[test]
    fn embed_456_adds_exactly_three_digit_elements() {
        let k = [4u8; 16];
        let mut bf = small();
        bf.embed_counter(&k, "heartbeat:75", 456).unwrap();
        assert_eq!(bf.n_inserted(), 3);
        for (pos, d) in [(1, 6), (2, 5), (3, 4)] {
            assert!(bf.contains(&digit_element(&k, "heartbeat:75", pos, d)));
        }
        assert_eq!(bf.extract_counter(&k, "heartbeat:75").unwrap(), Some(456));
    }

    #[test]
    fn embed_single_digit_and_zero_digits() {
        let k = [4u8; 16];
        let mut bf = small();
        bf.embed_counter(&k, "a", 7).unwrap();
        assert_eq!(bf.n_inserted(), 1);
        bf.embed_counter(&k, "b", 100).unwrap();
        assert_eq!(bf.n_inserted(), 4);
        assert!(bf.contains(&digit_element(&k, "b", 1, 0)));
        assert!(bf.contains(&digit_element(&k, "b", 2, 0)));
        assert!(bf.contains(&digit_element(&k, "b", 3, 1)));
        assert_eq!(bf.extract_counter(&k, "a").unwrap(), Some(7));
        assert_eq!(bf.extract_counter(&k, "b").unwrap(), Some(100));
    }

    #[test]
    fn extract_absent_and_zero_counter_errors() {
        let k = [4u8; 16];
        let mut bf = small();
        let ex = bf.extract_counter_counted(&k, "never").unwrap();
        assert_eq!(ex.value, None);
        assert_eq!(ex.probes, 10);
        assert!(matches!(bf.embed_counter(&k, "w", 0), Err(Error::Usage(_))));
    }

    #[test]
    fn ambiguous_digit_is_reported() {
        let k = [4u8; 16];
        let mut bf = small();
        bf.embed_counter(&k, "w", 45).unwrap();
        bf.add(&digit_element(&k, "w", 2, 9));
        assert!(matches!(
            bf.extract_counter(&k, "w"),
            Err(Error::AmbiguousDigit { pos: 2 })
        ));
    }

    #[test]
    fn embed_extract_round_trip_random() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let k = random_key(&mut rng);
        let mut bf = BloomFilter::new(BloomParams::new(2f64.powi(-30), 8_000)).unwrap();
        let pairs: Vec<(String, u64)> = (0..1000)
            .map(|i| (format!("kw{i}:{}", rng.next_u32()), rng.gen_range(1..=10_000_000)))
            .collect();
        for (w, c) in &pairs {
            bf.embed_counter(&k, w, *c).unwrap();
        }
        for (w, c) in &pairs {
            assert_eq!(bf.extract_counter(&k, w).unwrap(), Some(*c));
        }
    }

    #[test]
    fn relaxed_fp_rate_is_near_theory() {
        let mut bf = BloomFilter::new(BloomParams::new(0.01, 10_000)).unwrap();
        for i in 0..10_000u64 {
            bf.add(&i.to_be_bytes());
        }
        let probes = 100_000u64;
        let hits = (0..probes)
            .filter(|i| bf.contains(&(1u64 << 40 | i).to_be_bytes()))
            .count() as f64;
        let rate = hits / probes as f64;
        let theory = bf.expected_fp_rate(10_000);
        assert!(rate < 2.0 * theory && rate > theory / 2.0, "{rate} vs {theory}");
    }

    proptest! {
        #[test]
        fn no_false_negatives(elems in proptest::collection::vec(proptest::collection::vec(any::<u8>(), 0..24), 1..60)) {
            let mut bf = BloomFilter::new(BloomParams::new(1e-6, 64)).unwrap();
            for e in &elems {
                bf.add(e);
            }
            for e in &elems {
                prop_assert!(bf.contains(e));
            }
            prop_assert_eq!(BloomFilter::from_bytes(&bf.to_bytes()).unwrap(), bf);
        }

        #[test]
        fn digits_reassemble(n in 1u64..u64::MAX) {
            let v: u64 = decimal_digits(n).iter().rev().fold(0, |acc, &(_, d)| acc * 10 + u64::from(d));
            prop_assert_eq!(v, n);
        }
    }
}
