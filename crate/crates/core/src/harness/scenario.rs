//! End-to-end runs: ingest a synthetic stream, query it (optionally while
//! the server misbehaves) and record every outcome.

use std::fmt::Write as _;
use std::io::Write as _;
use std::path::Path;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::chain::Mode;
use crate::error::{Error, Result};
use crate::server::Adversary;
use crate::transport::{InProcess, Transport};
use crate::user::UserCredentials;

use super::deployment::{run_bloom, user_query, Deployment, DEFAULT_FRESHNESS_WINDOW};
use super::phi::{synthesize_stream, DEFAULT_PERIOD};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum TransportKind {
    InProcess,
    /// A TCP server on an ephemeral loopback port.
    LoopbackTcp,
}

#[derive(Clone, Debug, Serialize)]
pub struct ScenarioConfig {
    pub mode: Mode,
    pub n_files: u64,
    /// Queries after ingestion; these are the ones the adversary attacks.
    pub queries: usize,
    /// Honest queries spread through ingestion.
    pub interleaved: usize,
    pub adversary: Adversary,
    pub seed: u64,
    pub period: u64,
    pub freshness_window: u64,
    /// Refresh the filter after every this many files (full mode).
    pub refresh_every: Option<u64>,
    /// Files ingested after the adversary is switched on and before the
    /// final queries.
    pub settle_files: u64,
    /// Users querying concurrently in the final phase (in-process only).
    pub threads: usize,
    pub transport: TransportKind,
    /// Query as an authorized user rather than as the owner (full mode).
    pub as_user: bool,
}

impl ScenarioConfig {
    pub fn new(mode: Mode, n_files: u64) -> Self {
        Self {
            mode,
            n_files,
            queries: 200,
            interleaved: 20,
            adversary: Adversary::Honest,
            seed: 1,
            period: DEFAULT_PERIOD,
            freshness_window: DEFAULT_FRESHNESS_WINDOW,
            refresh_every: None,
            settle_files: 4,
            threads: 1,
            transport: TransportKind::InProcess,
            as_user: mode == Mode::Full,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Interleaved,
    Final,
}

#[derive(Clone, Debug, Serialize)]
pub struct QueryRecord {
    pub phase: Phase,
    pub index: usize,
    pub keyword: String,
    pub owner_counter: u64,
    pub guessed_counter: Option<u64>,
    pub retried: bool,
    pub expected: usize,
    pub returned: usize,
    pub oracle_match: bool,
    pub verified: bool,
    pub failure: Option<String>,
    pub lookups: Option<u64>,
    pub probes: Option<u32>,
    pub probe_budget: Option<u32>,
    pub elapsed_us: u64,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
pub struct PhaseSummary {
    pub queries: usize,
    pub oracle_matches: usize,
    pub verified: usize,
    pub rejected: usize,
    pub errors: usize,
    pub lookups: u64,
    pub probes: u64,
}

#[derive(Clone, Debug, Serialize)]
pub struct ScenarioReport {
    pub config: ScenarioConfig,
    pub files_ingested: u64,
    pub keywords: usize,
    pub ingest_secs: f64,
    pub query_secs: f64,
    pub records: Vec<QueryRecord>,
}

impl ScenarioReport {
    pub fn summary(&self, phase: Phase) -> PhaseSummary {
        let mut s = PhaseSummary::default();
        for r in self.records.iter().filter(|r| r.phase == phase) {
            s.queries += 1;
            s.oracle_matches += r.oracle_match as usize;
            s.verified += r.verified as usize;
            s.rejected += !r.verified as usize;
            s.errors += (r.failure.is_some() && r.returned == 0 && !r.verified) as usize;
            s.lookups += r.lookups.unwrap_or(0);
            s.probes += u64::from(r.probes.unwrap_or(0));
        }
        s
    }

    /// Honest runs pass when every query matches the oracle and verifies;
    /// adversarial runs pass when every attacked query is rejected.
    pub fn passed(&self) -> bool {
        let inter = self.summary(Phase::Interleaved);
        let fin = self.summary(Phase::Final);
        let honest_ok = inter.verified == inter.queries && inter.oracle_matches == inter.queries;
        honest_ok
            && match self.config.adversary {
                Adversary::Honest => fin.verified == fin.queries && fin.oracle_matches == fin.queries,
                _ => fin.rejected == fin.queries,
            }
    }

    pub fn to_table(&self) -> String {
        let c = &self.config;
        let mut out = String::new();
        let _ = writeln!(
            out,
            "scenario mode={} files={} keywords={} adversary={} seed={} querier={}",
            c.mode,
            self.files_ingested,
            self.keywords,
            c.adversary,
            c.seed,
            if c.as_user { "user" } else { "owner" }
        );
        let _ = writeln!(
            out,
            "{:<12} {:>8} {:>13} {:>9} {:>9} {:>7} {:>9} {:>8}",
            "phase", "queries", "oracle_match", "verified", "rejected", "errors", "lookups", "probes"
        );
        for (name, phase) in [("interleaved", Phase::Interleaved), ("final", Phase::Final)] {
            let s = self.summary(phase);
            let _ = writeln!(
                out,
                "{:<12} {:>8} {:>13} {:>9} {:>9} {:>7} {:>9} {:>8}",
                name, s.queries, s.oracle_matches, s.verified, s.rejected, s.errors, s.lookups, s.probes
            );
        }
        let per_file = if self.files_ingested > 0 {
            self.ingest_secs * 1e3 / self.files_ingested as f64
        } else {
            0.0
        };
        let _ = writeln!(
            out,
            "ingest {:.2} s ({per_file:.2} ms/file), queries {:.2} s",
            self.ingest_secs, self.query_secs
        );
        let _ = writeln!(out, "result: {}", if self.passed() { "PASS" } else { "FAIL" });
        out
    }

    /// One JSON object per line: the config, every query, then a summary.
    pub fn write_records(&self, path: &Path) -> Result<()> {
        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        let json = |v: serde_json::Value| serde_json::to_string(&v).expect("serializable record");
        writeln!(f, "{}", json(serde_json::json!({ "type": "config", "config": self.config })))?;
        for r in &self.records {
            writeln!(f, "{}", json(serde_json::json!({ "type": "query", "record": r })))?;
        }
        writeln!(
            f,
            "{}",
            json(serde_json::json!({
                "type": "summary",
                "files_ingested": self.files_ingested,
                "keywords": self.keywords,
                "ingest_secs": self.ingest_secs,
                "query_secs": self.query_secs,
                "interleaved": self.summary(Phase::Interleaved),
                "final": self.summary(Phase::Final),
                "passed": self.passed(),
            }))
        )?;
        f.flush()?;
        Ok(())
    }
}

fn pick_keyword(rng: &mut ChaCha8Rng, words: &[String]) -> String {
    words[rng.gen_range(0..words.len())].clone()
}

struct Querier<'a> {
    creds: Option<&'a UserCredentials>,
}

fn record_query<T: Transport>(
    d: &mut Deployment<T>,
    q: &Querier<'_>,
    phase: Phase,
    index: usize,
    keyword: String,
) -> QueryRecord {
    let expected = d.oracle().query(&keyword);
    let owner_counter = d.owner().counter(&keyword).unwrap_or(0);
    let started = Instant::now();
    let mut rec = QueryRecord {
        phase,
        index,
        keyword,
        owner_counter,
        guessed_counter: None,
        retried: false,
        expected: expected.len(),
        returned: 0,
        oracle_match: false,
        verified: false,
        failure: None,
        lookups: None,
        probes: None,
        probe_budget: None,
        elapsed_us: 0,
    };
    let outcome = match q.creds {
        Some(c) => d.user_search(&c.name, &rec.keyword).map(|u| {
            rec.guessed_counter = u.guess.counter;
            rec.retried = u.retried;
            rec.probes = Some(u.guess.total_probes());
            rec.probe_budget = Some(u.guess.probe_budget());
            (u.response, u.lookups, u.verdict)
        }),
        None => d.owner_search(&rec.keyword).map(|o| (o.response, o.lookups, o.verdict)),
    };
    rec.elapsed_us = started.elapsed().as_micros() as u64;
    match outcome {
        Ok((response, lookups, verdict)) => {
            rec.returned = response.ids.len();
            rec.oracle_match = response.ids == expected;
            rec.lookups = lookups;
            rec.verified = verdict.is_ok();
            rec.failure = verdict.err().map(|f| format!("{f:?}"));
        }
        Err(e) => rec.failure = Some(e.to_string()),
    }
    rec
}

pub fn run_scenario(config: &ScenarioConfig) -> Result<ScenarioReport> {
    if config.n_files == 0 {
        return Err(Error::usage("scenario needs at least one file"));
    }
    if config.as_user && config.mode == Mode::Basic {
        return Err(Error::usage("users search through the filter, which basic mode lacks"));
    }
    let bloom = run_bloom(config.n_files + config.settle_files);
    match config.transport {
        TransportKind::InProcess => drive(Deployment::in_process(config.mode, bloom)?, config),
        TransportKind::LoopbackTcp => {
            if config.threads > 1 {
                return Err(Error::usage("concurrent queries are supported on the in-process transport"));
            }
            drive(Deployment::loopback_tcp(config.mode, bloom)?, config)
        }
    }
}

fn drive<T: Transport>(mut d: Deployment<T>, config: &ScenarioConfig) -> Result<ScenarioReport> {
    d.set_freshness_window(config.freshness_window);
    let users: Vec<UserCredentials> = (0..config.threads.max(1))
        .map(|i| d.add_user(&format!("user-{i}")))
        .collect();
    let querier = Querier {
        creds: config.as_user.then(|| &users[0]),
    };
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed ^ 0x9e37_79b9_7f4a_7c15);
    let mut records = Vec::new();
    let mut query_secs = 0.0;

    let stream = synthesize_stream(config.seed, config.n_files + config.settle_files, config.period);
    let gap = (config.n_files / (config.interleaved as u64 + 1)).max(1);
    let started = Instant::now();
    let mut ingested = 0u64;
    for file in stream {
        if ingested == config.n_files && config.adversary != Adversary::Honest {
            let server = d
                .server()
                .ok_or(Error::Unsupported("adversary needs a local server"))?;
            server.lock().set_adversary(config.adversary);
        }
        d.ingest(&file)?;
        ingested += 1;
        if config.mode == Mode::Full && config.refresh_every.is_some_and(|k| ingested.is_multiple_of(k)) {
            d.refresh()?;
        }
        let n_inter = records.len();
        if ingested <= config.n_files && ingested.is_multiple_of(gap) && n_inter < config.interleaved {
            let q0 = Instant::now();
            let mut words: Vec<String> = d.oracle().keywords().into_iter().map(str::to_owned).collect();
            words.sort_unstable();
            let w = pick_keyword(&mut rng, &words);
            records.push(record_query(&mut d, &querier, Phase::Interleaved, n_inter, w));
            query_secs += q0.elapsed().as_secs_f64();
        }
    }
    let ingest_secs = started.elapsed().as_secs_f64() - query_secs;

    let words: Vec<String> = d.oracle().keywords().into_iter().map(str::to_owned).collect();
    let plan: Vec<String> = (0..config.queries).map(|_| pick_keyword(&mut rng, &words)).collect();
    let q0 = Instant::now();
    if config.threads > 1 && config.as_user {
        records.extend(concurrent_queries(&d, &users, &plan)?);
    } else {
        for (i, w) in plan.into_iter().enumerate() {
            records.push(record_query(&mut d, &querier, Phase::Final, i, w));
        }
    }
    query_secs += q0.elapsed().as_secs_f64();

    Ok(ScenarioReport {
        config: config.clone(),
        files_ingested: ingested,
        keywords: d.oracle().keyword_count(),
        ingest_secs,
        query_secs,
        records,
    })
}

/// Splits the plan across users, each on its own thread and connection.
fn concurrent_queries<T: Transport>(
    d: &Deployment<T>,
    users: &[UserCredentials],
    plan: &[String],
) -> Result<Vec<QueryRecord>> {
    let server = d.server().ok_or(Error::Unsupported("concurrent queries need a local server"))?;
    let (now, window) = (d.now(), d.freshness_window());
    let expected: Vec<_> = plan
        .iter()
        .map(|w| (d.oracle().query(w), d.owner().counter(w).unwrap_or(0)))
        .collect();
    let mut records: Vec<QueryRecord> = std::thread::scope(|scope| {
        let handles: Vec<_> = users
            .iter()
            .enumerate()
            .map(|(t, creds)| {
                let mut transport = InProcess::new(server.clone());
                let expected = &expected;
                scope.spawn(move || {
                    let mut out = Vec::new();
                    for i in (t..plan.len()).step_by(users.len()) {
                        let (ids, owner_counter) = &expected[i];
                        let started = Instant::now();
                        let result = user_query(&mut transport, creds, &plan[i], now, window);
                        let mut rec = QueryRecord {
                            phase: Phase::Final,
                            index: i,
                            keyword: plan[i].clone(),
                            owner_counter: *owner_counter,
                            guessed_counter: None,
                            retried: false,
                            expected: ids.len(),
                            returned: 0,
                            oracle_match: false,
                            verified: false,
                            failure: None,
                            lookups: None,
                            probes: None,
                            probe_budget: None,
                            elapsed_us: started.elapsed().as_micros() as u64,
                        };
                        match result {
                            Ok(u) => {
                                rec.guessed_counter = u.guess.counter;
                                rec.retried = u.retried;
                                rec.probes = Some(u.guess.total_probes());
                                rec.probe_budget = Some(u.guess.probe_budget());
                                rec.returned = u.response.ids.len();
                                rec.oracle_match = &u.response.ids == ids;
                                rec.verified = u.verdict.is_ok();
                                rec.failure = u.verdict.err().map(|f| format!("{f:?}"));
                            }
                            Err(e) => rec.failure = Some(e.to_string()),
                        }
                        out.push(rec);
                    }
                    out
                })
            })
            .collect();
        handles.into_iter().flat_map(|h| h.join().expect("query thread panicked")).collect()
    });
    records.sort_by_key(|r| r.index);
    Ok(records)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(mode: Mode) -> ScenarioConfig {
        let mut c = ScenarioConfig::new(mode, 200);
        c.queries = 30;
        c.interleaved = 5;
        c
    }

    #[test]
    fn honest_runs_pass_in_both_modes() {
        for mode in [Mode::Basic, Mode::Full] {
            let r = run_scenario(&small(mode)).unwrap();
            assert!(r.passed(), "{}", r.to_table());
            assert_eq!(r.summary(Phase::Final).queries, 30);
            assert_eq!(r.summary(Phase::Interleaved).queries, 5);
        }
    }

    #[test]
    fn reports_are_deterministic_apart_from_timing() {
        let strip = |r: ScenarioReport| {
            r.records
                .into_iter()
                .map(|mut q| {
                    q.elapsed_us = 0;
                    serde_json::to_string(&q).unwrap()
                })
                .collect::<Vec<_>>()
        };
        let a = run_scenario(&small(Mode::Full)).unwrap();
        let b = run_scenario(&small(Mode::Full)).unwrap();
        assert_eq!(strip(a), strip(b));
    }

    #[test]
    fn every_attack_is_rejected() {
        for adversary in Adversary::ALL_ATTACKS {
            let mut c = small(Mode::Full);
            c.adversary = adversary;
            c.interleaved = 10;
            let r = run_scenario(&c).unwrap();
            assert!(r.passed(), "{}", r.to_table());
            assert_eq!(r.summary(Phase::Final).verified, 0);
        }
    }

    #[test]
    fn concurrent_users_and_refresh() {
        let mut c = small(Mode::Full);
        c.threads = 4;
        c.refresh_every = Some(64);
        let r = run_scenario(&c).unwrap();
        assert!(r.passed(), "{}", r.to_table());
        assert!(r.records.iter().any(|q| q.guessed_counter.is_some()));
    }

    #[test]
    fn records_are_json_lines() {
        let r = run_scenario(&small(Mode::Basic)).unwrap();
        let path = std::env::temp_dir().join(format!("dsse-records-{}.jsonl", std::process::id()));
        r.write_records(&path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        std::fs::remove_file(&path).ok();
        let lines: Vec<serde_json::Value> = text.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
        assert_eq!(lines.len(), 1 + 35 + 1);
        assert_eq!(lines[0]["type"], "config");
        assert_eq!(lines.last().unwrap()["passed"], true);
    }
}
