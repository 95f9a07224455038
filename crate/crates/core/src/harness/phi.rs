//! Synthetic stream of personal-health records, one every period, each
//! carrying fifteen `attribute:value` keywords.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// A vital-sign attribute with an inclusive integer range.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Attribute {
    pub name: &'static str,
    pub lo: u32,
    pub hi: u32,
}

impl Attribute {
    const fn new(name: &'static str, lo: u32, hi: u32) -> Self {
        Self { name, lo, hi }
    }

    pub fn range_len(&self) -> u32 {
        self.hi - self.lo + 1
    }
}

/// Temperature and weight are in tenths (°C, kg); body fat in permille.
pub const ATTRIBUTES: [Attribute; 15] = [
    Attribute::new("heartbeat", 40, 180),
    Attribute::new("blood_sugar", 60, 400),
    Attribute::new("systolic", 80, 200),
    Attribute::new("diastolic", 40, 130),
    Attribute::new("temperature", 340, 420),
    Attribute::new("pulse_oxygen", 80, 100),
    Attribute::new("respiration_rate", 8, 40),
    Attribute::new("step_count", 0, 19_999),
    Attribute::new("calories", 0, 2_999),
    Attribute::new("sleep_minutes", 0, 600),
    Attribute::new("ecg_qt_ms", 300, 500),
    Attribute::new("weight", 400, 1_500),
    Attribute::new("skin_conductance", 0, 2_000),
    Attribute::new("body_fat_permille", 50, 500),
    Attribute::new("hrv_ms", 10, 200),
];

/// Upper bound on distinct keywords the stream can produce.
pub fn keyword_universe() -> u64 {
    ATTRIBUTES.iter().map(|a| u64::from(a.range_len())).sum()
}

/// 2020-09-13T12:26:40Z; the first record's timestamp.
pub const STREAM_START: u64 = 1_600_000_000;
/// One upload every ten minutes.
pub const DEFAULT_PERIOD: u64 = 600;
/// Twenty years of ten-minute uploads.
pub const TWENTY_YEARS_FILES: u64 = 1_051_200;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PhiFile {
    pub timestamp: u64,
    pub values: [u32; 15],
}

impl PhiFile {
    pub fn keywords(&self) -> Vec<String> {
        ATTRIBUTES
            .iter()
            .zip(self.values)
            .map(|(a, v)| format!("{}:{v}", a.name))
            .collect()
    }

    /// Plaintext record as uploaded (before encryption).
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut s = format!("t={}", self.timestamp);
        for (a, v) in ATTRIBUTES.iter().zip(self.values) {
            s.push(';');
            s.push_str(a.name);
            s.push('=');
            s.push_str(&v.to_string());
        }
        s.into_bytes()
    }
}

/// Deterministic record stream.
#[derive(Clone, Debug)]
pub struct PhiStream {
    rng: ChaCha8Rng,
    next: u64,
    n_files: u64,
    period: u64,
}

impl Iterator for PhiStream {
    type Item = PhiFile;

    fn next(&mut self) -> Option<PhiFile> {
        if self.next >= self.n_files {
            return None;
        }
        let timestamp = STREAM_START + self.next * self.period;
        self.next += 1;
        let mut values = [0u32; 15];
        for (v, a) in values.iter_mut().zip(&ATTRIBUTES) {
            *v = self.rng.gen_range(a.lo..=a.hi);
        }
        Some(PhiFile { timestamp, values })
    }

    fn size_hint(&self) -> (usize, Option<usize>) {
        let left = (self.n_files - self.next) as usize;
        (left, Some(left))
    }
}

impl ExactSizeIterator for PhiStream {}

pub fn synthesize_stream(seed: u64, n_files: u64, period: u64) -> PhiStream {
    PhiStream {
        rng: ChaCha8Rng::seed_from_u64(seed),
        next: 0,
        n_files,
        period,
    }
}
