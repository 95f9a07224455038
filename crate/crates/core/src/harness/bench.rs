//! Desk-scale timing and state-size measurements, printed next to the
//! reference figures of the original evaluation (2.5 GHz laptop, 1M files).

use std::fmt::Write as _;
use std::time::Instant;

use serde::Serialize;

use crate::bloom::{BloomParams, FILES_PER_YEAR};
use crate::chain::Mode;
use crate::error::Result;
use crate::owner::{aggregate_for, check_result, table_entry_bytes, Checks, Owner, OwnerConfig};
use crate::protocol::{filter_authenticator, BloomTriple};

use super::deployment::{run_bloom, Deployment};
use super::phi::{synthesize_stream, ATTRIBUTES, DEFAULT_PERIOD, TWENTY_YEARS_FILES};

/// Reference figures printed beside the measurements.
pub const REFERENCE_ADD_MS: f64 = 190.0;
pub const REFERENCE_NEW_SEARCH_MS: f64 = 2_000.0;
pub const REFERENCE_RECURRING_SEARCH_MS: f64 = 1_000.0;
pub const REFERENCE_VERIFY_1000_MS: f64 = 135.0;
pub const REFERENCE_BF_CHECK_MS: f64 = 55.0;
pub const REFERENCE_TBL_C_BYTES: f64 = 1.3e6;
pub const REFERENCE_BF_BYTES: f64 = 5e6;

#[derive(Clone, Debug, Serialize)]
pub struct BenchConfig {
    pub seed: u64,
    /// Repetitions per timed point (medians are reported).
    pub reps: usize,
    /// Files ingested to time `add_file`.
    pub add_samples: usize,
    /// Result size for the new-vs-recurring search comparison.
    pub search_ids: usize,
    /// Keyword pairs timed for the search comparison.
    pub search_rounds: usize,
    /// Result sizes timed for verification.
    pub verify_sizes: Vec<usize>,
    /// Files for the state-size projection.
    pub projection_files: u64,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            seed: 1,
            reps: 9,
            add_samples: 200,
            search_ids: 100,
            search_rounds: 15,
            verify_sizes: (1..=10).map(|i| i * 100).collect(),
            projection_files: TWENTY_YEARS_FILES,
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct TimingRow {
    pub name: String,
    pub measured_ms: f64,
    pub reference_ms: Option<f64>,
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
    pub r2: f64,
}

/// Least-squares line through `(x, y)`.
pub fn linear_fit(points: &[(f64, f64)]) -> LinearFit {
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = points.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let syy: f64 = points.iter().map(|p| (p.1 - my).powi(2)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss_res: f64 = points.iter().map(|p| (p.1 - (slope * p.0 + intercept)).powi(2)).sum();
    let r2 = if syy == 0.0 { 1.0 } else { 1.0 - ss_res / syy };
    LinearFit { slope, intercept, r2 }
}

pub fn median(values: &mut [f64]) -> f64 {
    values.sort_by(|a, b| a.total_cmp(b));
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        (values[n / 2 - 1] + values[n / 2]) / 2.0
    }
}

fn time_ms<R>(f: impl FnOnce() -> R) -> (f64, R) {
    let t = Instant::now();
    let r = f();
    (t.elapsed().as_secs_f64() * 1e3, r)
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct SizeReport {
    pub files: u64,
    pub keywords: u64,
    pub tbl_c_bytes: u64,
    pub bf_bytes: u64,
    /// Whether the numbers come from an actual ingestion rather than a
    /// projection over the synthesized keyword set.
    pub measured: bool,
}

impl SizeReport {
    pub fn tbl_c_ratio(&self) -> f64 {
        ratio(self.tbl_c_bytes as f64, REFERENCE_TBL_C_BYTES)
    }

    pub fn bf_ratio(&self) -> f64 {
        ratio(self.bf_bytes as f64, REFERENCE_BF_BYTES)
    }
}

/// Symmetric ratio, always ≥ 1.
fn ratio(a: f64, b: f64) -> f64 {
    if a > b {
        a / b
    } else {
        b / a
    }
}

/// Owner table and filter sizes after `n_files` records, computed from the
/// keyword set the stream produces without running any cryptography. The
/// filter is the default one-year filter the owner refreshes annually.
pub fn project_sizes(seed: u64, n_files: u64, mode: Mode) -> SizeReport {
    let mut seen: Vec<Vec<bool>> = ATTRIBUTES.iter().map(|a| vec![false; a.range_len() as usize]).collect();
    for f in synthesize_stream(seed, n_files, DEFAULT_PERIOD) {
        for (i, v) in f.values.iter().enumerate() {
            seen[i][(v - ATTRIBUTES[i].lo) as usize] = true;
        }
    }
    let mut keywords = 0u64;
    let mut tbl = 4u64;
    for (a, flags) in ATTRIBUTES.iter().zip(&seen) {
        for (off, _) in flags.iter().enumerate().filter(|(_, s)| **s) {
            let value = a.lo + off as u32;
            let len = a.name.len() + 1 + value.to_string().len();
            tbl += table_entry_bytes(mode, len) as u64;
            keywords += 1;
        }
    }
    SizeReport {
        files: n_files,
        keywords,
        tbl_c_bytes: tbl,
        bf_bytes: BloomParams::default().serialized_len() as u64,
        measured: false,
    }
}

/// Runs the owner over `n_files` records with the default filter,
/// refreshing once per simulated year, and reports the real sizes.
pub fn measure_sizes(seed: u64, n_files: u64) -> Result<SizeReport> {
    let mut owner = Owner::gen_key(OwnerConfig::new(Mode::Full))?;
    for (i, f) in synthesize_stream(seed, n_files, DEFAULT_PERIOD).enumerate() {
        owner.add_file(&f.to_bytes(), &f.keywords(), f.timestamp)?;
        if (i as u64 + 1).is_multiple_of(FILES_PER_YEAR) {
            owner.refresh_bloom(f.timestamp)?;
        }
    }
    Ok(SizeReport {
        files: n_files,
        keywords: owner.keyword_count() as u64,
        tbl_c_bytes: owner.table_bytes() as u64,
        bf_bytes: owner.bloom().map_or(0, |b| b.serialized_len() as u64),
        measured: true,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct BenchReport {
    pub config: BenchConfig,
    pub rows: Vec<TimingRow>,
    pub new_search_ms: f64,
    pub recurring_search_ms: f64,
    pub new_search_lookups: u64,
    pub recurring_search_lookups: u64,
    /// `(result size, median verify ms)`.
    pub verify_points: Vec<(usize, f64)>,
    pub verify_fit: LinearFit,
    pub sizes: SizeReport,
}

impl BenchReport {
    pub fn recurring_not_slower(&self) -> bool {
        self.recurring_search_ms <= self.new_search_ms
    }

    pub fn to_table(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "{:<44} {:>12} {:>12}", "operation", "measured", "reference");
        for r in &self.rows {
            let reference = r.reference_ms.map_or("-".to_owned(), |p| format!("{p:.0} ms"));
            let _ = writeln!(out, "{:<44} {:>9.3} ms {:>12}", r.name, r.measured_ms, reference);
        }
        let s = &self.sizes;
        let kind = if s.measured { "measured" } else { "projected" };
        let _ = writeln!(
            out,
            "{:<44} {:>9.2} MB {:>12}",
            format!("tbl_c, {} files ({kind}, {} keywords)", s.files, s.keywords),
            s.tbl_c_bytes as f64 / 1e6,
            "1.3 MB"
        );
        let _ = writeln!(out, "{:<44} {:>9.2} MB {:>12}", "bloom filter (one-year capacity)", s.bf_bytes as f64 / 1e6, "5 MB");
        let _ = writeln!(
            out,
            "search lookups: new {} / recurring {}; recurring <= new: {}",
            self.new_search_lookups,
            self.recurring_search_lookups,
            if self.recurring_not_slower() { "yes" } else { "no" }
        );
        let f = &self.verify_fit;
        let _ = writeln!(
            out,
            "verify time ~ {:.4} ms/file + {:.3} ms (R^2 = {:.3})",
            f.slope, f.intercept, f.r2
        );
        out
    }
}

fn bench_payload(i: usize) -> Vec<u8> {
    // Roughly the size of a synthesized record.
    format!("bench record {i:08} {}", "x".repeat(200)).into_bytes()
}

pub fn run_bench(config: &BenchConfig) -> Result<BenchReport> {
    let mut rows = Vec::new();

    // add_file: owner side plus server ingestion over the wire.
    let mut d = Deployment::in_process(Mode::Full, run_bloom(config.add_samples as u64))?;
    let mut add_ms: Vec<f64> = synthesize_stream(config.seed, config.add_samples as u64, DEFAULT_PERIOD)
        .map(|f| time_ms(|| d.ingest(&f)).0)
        .collect();
    rows.push(TimingRow {
        name: "add_file, 15 keywords (median)".into(),
        measured_ms: median(&mut add_ms),
        reference_ms: Some(REFERENCE_ADD_MS),
    });

    // New vs recurring search for the same result size. The recurring
    // keyword was searched when it had half its files.
    let half = config.search_ids / 2;
    let rounds = config.search_rounds;
    let mut d = Deployment::in_process(Mode::Full, run_bloom((rounds * config.search_ids) as u64))?;
    let mut t = d.now();
    let mut n = 0;
    let mut add = |d: &mut Deployment, kws: &[String]| -> Result<()> {
        t += DEFAULT_PERIOD;
        n += 1;
        d.ingest_raw(&bench_payload(n), kws, t).map(|_| ())
    };
    let (mut new_ms, mut rec_ms) = (Vec::new(), Vec::new());
    let (mut new_lookups, mut rec_lookups) = (0, 0);
    for r in 0..rounds {
        let (new_w, rec_w) = (format!("bench-new:{r}"), format!("bench-recurring:{r}"));
        for _ in 0..half {
            add(&mut d, &[new_w.clone(), rec_w.clone()])?;
        }
        d.owner_search(&rec_w)?;
        for _ in half..config.search_ids {
            add(&mut d, &[new_w.clone(), rec_w.clone()])?;
        }
        let order = if r % 2 == 0 { [&new_w, &rec_w] } else { [&rec_w, &new_w] };
        for w in order {
            let (ms, out) = time_ms(|| d.owner_search(w));
            let out = out?;
            if w == &new_w {
                new_ms.push(ms);
                new_lookups = out.lookups.unwrap_or(0);
            } else {
                rec_ms.push(ms);
                rec_lookups = out.lookups.unwrap_or(0);
            }
        }
    }
    let new_search_ms = median(&mut new_ms);
    let recurring_search_ms = median(&mut rec_ms);
    rows.push(TimingRow {
        name: format!("search, new keyword ({} ids)", config.search_ids),
        measured_ms: new_search_ms,
        reference_ms: Some(REFERENCE_NEW_SEARCH_MS),
    });
    rows.push(TimingRow {
        name: format!("search, recurring keyword ({} ids)", config.search_ids),
        measured_ms: recurring_search_ms,
        reference_ms: Some(REFERENCE_RECURRING_SEARCH_MS),
    });

    // Verification time against result size.
    let total: usize = config.verify_sizes.iter().sum();
    let mut d = Deployment::in_process(Mode::Full, run_bloom(total as u64))?;
    let mut t = d.now();
    let mut n = 0;
    let mut results = Vec::new();
    for &size in &config.verify_sizes {
        let w = format!("bench-verify:{size}");
        for _ in 0..size {
            t += 1;
            n += 1;
            d.ingest_raw(&bench_payload(n), &[w.as_str()], t)?;
        }
        results.push((size, w));
    }
    let now = d.now();
    let window = d.freshness_window();
    let k_mac = d.owner().keys().k_mac;
    let mut verify_points = Vec::new();
    let (mut bf_last, mut agg_last) = (0.0, 0.0);
    for (size, w) in &results {
        let resp = d.owner_search(w)?.response;
        let proof = resp.proof.as_ref();
        let counter = *size as u64;
        let mut totals = Vec::new();
        let (mut bf, mut agg) = (Vec::new(), Vec::new());
        for _ in 0..config.reps {
            let (ms, ok) = time_ms(|| {
                check_result(&k_mac, w, counter, &resp.ids, &resp.ciphertexts, proof, now, window, Checks::Full)
            });
            debug_assert!(ok.is_ok());
            totals.push(ms);
            bf.push(time_ms(|| proof.map(|p| p.bloom.authentic(&k_mac))).0);
            agg.push(time_ms(|| aggregate_for(&k_mac, w, &resp.ciphertexts)).0);
        }
        verify_points.push((*size, median(&mut totals)));
        bf_last = median(&mut bf);
        agg_last = median(&mut agg);
    }
    let verify_fit = linear_fit(
        &verify_points
            .iter()
            .map(|&(s, ms)| (s as f64, ms))
            .collect::<Vec<_>>(),
    );
    if let Some(&(size, ms)) = verify_points.last() {
        rows.push(TimingRow {
            name: format!("verify {size} files (total)"),
            measured_ms: ms,
            reference_ms: (size == 1000).then_some(REFERENCE_VERIFY_1000_MS),
        });
        rows.push(TimingRow {
            name: "  bloom filter check (run-sized filter)".into(),
            measured_ms: bf_last,
            reference_ms: None,
        });
        rows.push(TimingRow {
            name: "  aggregate MAC".into(),
            measured_ms: agg_last,
            reference_ms: None,
        });
    }

    // The filter check at the default one-year size.
    let default_bf = crate::bloom::BloomFilter::new(BloomParams::default())?.to_bytes();
    let triple = BloomTriple {
        sigma: filter_authenticator(&k_mac, &default_bf, now),
        bloom: default_bf,
        timestamp: now,
    };
    let mut bf_default: Vec<f64> = (0..config.reps.max(1)).map(|_| time_ms(|| triple.authentic(&k_mac)).0).collect();
    rows.push(TimingRow {
        name: "bloom filter check (default 5 MB filter)".into(),
        measured_ms: median(&mut bf_default),
        reference_ms: Some(REFERENCE_BF_CHECK_MS),
    });

    Ok(BenchReport {
        config: config.clone(),
        rows,
        new_search_ms,
        recurring_search_ms,
        new_search_lookups: new_lookups,
        recurring_search_lookups: rec_lookups,
        verify_points,
        verify_fit,
        sizes: project_sizes(config.seed, config.projection_files, Mode::Full),
    })
}
