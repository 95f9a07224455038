use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Duration;

use clap::{Args, Parser, Subcommand, ValueEnum};

use dsse_core::bloom::BloomParams;
use dsse_core::harness::bench::{measure_sizes, run_bench, BenchConfig};
use dsse_core::harness::deployment::{user_query, DEFAULT_FRESHNESS_WINDOW};
use dsse_core::harness::phi::{synthesize_stream, DEFAULT_PERIOD, STREAM_START, TWENTY_YEARS_FILES};
use dsse_core::harness::scenario::{run_scenario, ScenarioConfig, TransportKind};
use dsse_core::owner::{check_result, Checks, Owner, OwnerConfig};
use dsse_core::server::{Adversary, Server, ServerConfig};
use dsse_core::transport::{serve, InProcess, SharedServer, TcpClient, Transport};
use dsse_core::crypto::se_decrypt;
use dsse_core::user::UserCredentials;
use dsse_core::wire::Response;
use dsse_core::{Error, Mode, Result};

#[derive(Parser)]
#[command(name = "dsse", version, about = "Forward-private searchable encryption: owner, server and user roles")]
struct Cli {
    /// Directory holding the owner, server and user state.
    #[arg(long, global = true, default_value = "dsse-state")]
    state: PathBuf,
    /// Talk to a server started with `dsse serve` instead of the local
    /// server snapshot.
    #[arg(long, global = true, value_name = "ADDR")]
    connect: Option<String>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Create owner keys and an empty server.
    GenKeys(GenKeys),
    /// Give a new user the keys and the current group key.
    Grant {
        #[arg(long)]
        user: String,
    },
    /// Upload synthesized health records.
    Ingest {
        #[arg(long, default_value_t = 100)]
        n: u64,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// Creates the state with this mode if it does not exist yet.
        #[arg(long)]
        mode: Option<Mode>,
        /// Rebuild the filter after the upload (full mode).
        #[arg(long)]
        refresh: bool,
    },
    /// Search one keyword and verify the result.
    Search {
        #[arg(long)]
        keyword: String,
        #[arg(long = "as", value_enum, default_value_t = Role::Owner)]
        role: Role,
        /// User name when searching as a user.
        #[arg(long)]
        user: Option<String>,
        /// Print the decrypted records.
        #[arg(long)]
        decrypt: bool,
    },
    /// List the owner's most frequent keywords.
    Keywords {
        #[arg(long, default_value_t = 10)]
        top: usize,
    },
    /// Re-check the last search result, optionally at another time.
    Verify {
        /// Unix time to verify at; defaults to the simulated clock.
        #[arg(long)]
        now: Option<u64>,
    },
    /// Rotate the group key, cutting a user off.
    Rotate {
        #[arg(long)]
        revoke: String,
    },
    /// Time the main operations and report state sizes.
    Bench {
        #[arg(long, default_value_t = 9)]
        reps: usize,
        /// Ingest the full twenty-year stream to measure sizes.
        #[arg(long)]
        long: bool,
    },
    /// Run an end-to-end scenario against an in-process server.
    Scenario(ScenarioArgs),
    /// Serve the state directory's server over TCP.
    Serve {
        #[arg(long, default_value = "127.0.0.1:7878")]
        listen: String,
        #[arg(long, default_value_t = Adversary::Honest)]
        adversary: Adversary,
        /// Seconds between snapshots of the server state.
        #[arg(long, default_value_t = 1)]
        save_every: u64,
    },
}

#[derive(Args)]
struct GenKeys {
    #[arg(long, default_value_t = Mode::Full)]
    mode: Mode,
    /// Filter capacity in elements.
    #[arg(long, default_value_t = 200_000)]
    capacity: u64,
    /// Target false-positive rate.
    #[arg(long, default_value_t = 2f64.powi(-30))]
    fp: f64,
    /// Overwrite an existing state directory.
    #[arg(long)]
    force: bool,
}

#[derive(Args)]
struct ScenarioArgs {
    #[arg(long, default_value_t = Mode::Full)]
    mode: Mode,
    #[arg(long, default_value_t = 10_000)]
    n: u64,
    #[arg(long, default_value_t = 200)]
    queries: usize,
    #[arg(long, default_value_t = 20)]
    interleaved: usize,
    #[arg(long, default_value_t = Adversary::Honest)]
    adversary: Adversary,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long)]
    refresh_every: Option<u64>,
    /// Concurrent querying users.
    #[arg(long, default_value_t = 1)]
    threads: usize,
    /// Run over a loopback TCP server instead of in process.
    #[arg(long)]
    tcp: bool,
    /// Query as the owner even in full mode.
    #[arg(long)]
    as_owner: bool,
    /// Write line-delimited JSON records here.
    #[arg(long)]
    records: Option<PathBuf>,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Role {
    Owner,
    User,
}

struct State {
    dir: PathBuf,
}

impl State {
    fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    fn read(&self, name: &str) -> Result<Vec<u8>> {
        fs::read(self.path(name)).map_err(|e| {
            Error::Usage(format!("cannot read {}: {e}", self.path(name).display()))
        })
    }

    fn write(&self, name: &str, bytes: &[u8]) -> Result<()> {
        let tmp = self.path(&format!("{name}.tmp"));
        fs::write(&tmp, bytes)?;
        fs::rename(tmp, self.path(name))?;
        Ok(())
    }

    fn owner(&self) -> Result<Owner> {
        Owner::from_bytes(&self.read("owner.bin")?)
    }

    fn server(&self) -> Result<Server> {
        Server::from_bytes(&self.read("server.bin")?)
    }

    fn user(&self, name: &str) -> Result<UserCredentials> {
        UserCredentials::from_bytes(&self.read(&format!("users/{name}.cred"))?)
    }

    fn save_user(&self, creds: &UserCredentials) -> Result<()> {
        fs::create_dir_all(self.path("users"))?;
        self.write(&format!("users/{}.cred", creds.name), &creds.to_bytes())
    }

    /// Simulated time: the timestamp of the newest upload.
    fn clock(&self) -> Result<u64> {
        match fs::read_to_string(self.path("clock")) {
            Ok(s) => s.trim().parse().map_err(|_| Error::Usage("corrupt clock file".into())),
            Err(_) => Ok(STREAM_START),
        }
    }

    fn set_clock(&self, now: u64) -> Result<()> {
        self.write("clock", now.to_string().as_bytes())
    }
}

/// The server as seen from a command: a TCP connection or the local
/// snapshot, which is written back when the command finishes.
enum Endpoint {
    Remote(TcpClient),
    Local(InProcess),
}

impl Endpoint {
    fn open(state: &State, connect: &Option<String>) -> Result<Self> {
        Ok(match connect {
            Some(addr) => Endpoint::Remote(TcpClient::connect(addr.as_str())?),
            None => Endpoint::Local(InProcess::new(SharedServer::new(state.server()?))),
        })
    }

    fn transport(&mut self) -> &mut dyn Transport {
        match self {
            Endpoint::Remote(t) => t,
            Endpoint::Local(t) => t,
        }
    }

    fn lookups(&self) -> Option<u64> {
        match self {
            Endpoint::Local(t) => Some(t.server().lock().stats().last_lookups),
            Endpoint::Remote(_) => None,
        }
    }

    fn close(self, state: &State) -> Result<()> {
        if let Endpoint::Local(t) = self {
            state.write("server.bin", &t.server().lock().to_bytes())?;
        }
        Ok(())
    }
}

fn gen_keys(state: &State, args: &GenKeys) -> Result<()> {
    if state.path("owner.bin").exists() && !args.force {
        return Err(Error::Usage(format!(
            "{} already holds keys; pass --force to replace them",
            state.dir.display()
        )));
    }
    fs::create_dir_all(&state.dir)?;
    let bloom = BloomParams::new(args.fp, args.capacity);
    let owner = Owner::gen_key(OwnerConfig::new(args.mode).with_bloom(bloom))?;
    let mut server = Server::new(ServerConfig::new(args.mode).with_bloom(bloom))?;
    if args.mode == Mode::Full {
        server.install_group_key(owner.group_key())?;
    }
    state.write("owner.bin", &owner.to_bytes())?;
    state.write("server.bin", &server.to_bytes())?;
    state.set_clock(STREAM_START)?;
    println!(
        "created {} mode keys in {} (filter {} bytes)",
        args.mode,
        state.dir.display(),
        bloom.serialized_len()
    );
    Ok(())
}

fn ingest(state: &State, connect: &Option<String>, n: u64, seed: u64, mode: Option<Mode>, refresh: bool) -> Result<()> {
    if !state.path("owner.bin").exists() {
        let capacity = (15 * n + 50_000).max(200_000);
        gen_keys(
            state,
            &GenKeys {
                mode: mode.unwrap_or(Mode::Full),
                capacity,
                fp: 2f64.powi(-30),
                force: false,
            },
        )?;
    }
    let mut owner = state.owner()?;
    if let Some(m) = mode {
        if m != owner.mode() {
            return Err(Error::Usage(format!("state is in {} mode, not {m}", owner.mode())));
        }
    }
    let mut endpoint = Endpoint::open(state, connect)?;
    let start = owner.last_timestamp().max(STREAM_START - DEFAULT_PERIOD) + DEFAULT_PERIOD;
    let mut now = state.clock()?;
    for f in synthesize_stream(seed, n, DEFAULT_PERIOD) {
        let t = start + (f.timestamp - STREAM_START);
        let payload = owner.add_file(&f.to_bytes(), &f.keywords(), t)?;
        endpoint.transport().add(payload)?;
        now = t;
    }
    if refresh {
        endpoint.transport().refresh(owner.refresh_bloom(now)?)?;
    }
    state.write("owner.bin", &owner.to_bytes())?;
    state.set_clock(now)?;
    endpoint.close(state)?;
    println!(
        "ingested {n} files (seed {seed}); {} keywords; clock {now}{}",
        owner.keyword_count(),
        if refresh { "; filter refreshed" } else { "" }
    );
    Ok(())
}

fn search(
    state: &State,
    connect: &Option<String>,
    keyword: &str,
    role: Role,
    user: Option<&str>,
    decrypt: bool,
) -> Result<bool> {
    let mut endpoint = Endpoint::open(state, connect)?;
    let now = state.clock()?;
    let window = DEFAULT_FRESHNESS_WINDOW;
    let (counter, response, verdict, k_se) = match role {
        Role::Owner => {
            let owner = state.owner()?;
            let response = endpoint.transport().search(owner.gen_token(keyword)?)?;
            let counter = owner.counter(keyword).unwrap_or(0);
            let checks = if owner.mode() == Mode::Full { Checks::Full } else { Checks::CounterKnown };
            let verdict = match owner.mode() {
                Mode::Full => owner.verify(keyword, &response.ids, &response.ciphertexts, response.proof.as_ref(), now, window, checks),
                Mode::Basic if response.ids.len() as u64 == counter => Ok(()),
                Mode::Basic => Err(dsse_core::VerifyFailure::Cardinality),
            };
            (counter, response, verdict, owner.keys().k_se)
        }
        Role::User => {
            let name = user.ok_or_else(|| Error::Usage("--as user needs --user NAME".into()))?;
            let creds = state.user(name)?;
            let out = user_query(endpoint.transport(), &creds, keyword, now, window)?;
            println!(
                "guessed counter {} ({} probes, embedded base {}){}",
                out.counter,
                out.guess.total_probes(),
                out.guess.base,
                if out.retried { ", retried once lower" } else { "" }
            );
            (out.counter, out.response, out.verdict, creds.k_se)
        }
    };
    let lookups = endpoint.lookups();
    // Keep the raw response for `dsse verify`.
    let mut meta = Vec::new();
    meta.extend_from_slice(&(keyword.len() as u32).to_be_bytes());
    meta.extend_from_slice(keyword.as_bytes());
    meta.extend_from_slice(&counter.to_be_bytes());
    meta.extend_from_slice(&Response::Search(response.clone()).encode());
    state.write("last-search.bin", &meta)?;
    endpoint.close(state)?;

    println!("{} result(s) for {keyword}", response.ids.len());
    for id in &response.ids {
        println!("  {id}");
    }
    if let Some(l) = lookups {
        println!("table lookups: {l}");
    }
    if decrypt {
        for c in &response.ciphertexts {
            println!("  {}", String::from_utf8_lossy(&se_decrypt(&k_se, c)?));
        }
    }
    match verdict {
        Ok(()) => println!("verification: ok"),
        Err(f) => println!("verification: FAILED ({f:?})"),
    }
    Ok(verdict.is_ok())
}

fn verify(state: &State, now: Option<u64>) -> Result<bool> {
    let bytes = state.read("last-search.bin")?;
    let bad = || Error::Usage("corrupt last-search.bin".into());
    let len = u32::from_be_bytes(bytes.get(..4).ok_or_else(bad)?.try_into().unwrap()) as usize;
    let keyword = std::str::from_utf8(bytes.get(4..4 + len).ok_or_else(bad)?).map_err(|_| bad())?;
    let counter = u64::from_be_bytes(bytes.get(4 + len..12 + len).ok_or_else(bad)?.try_into().unwrap());
    let Response::Search(response) = Response::decode(&bytes[12 + len..])? else {
        return Err(bad());
    };
    let owner = state.owner()?;
    let now = match now {
        Some(t) => t,
        None => state.clock()?,
    };
    let verdict = check_result(
        &owner.keys().k_mac,
        keyword,
        counter,
        &response.ids,
        &response.ciphertexts,
        response.proof.as_ref(),
        now,
        DEFAULT_FRESHNESS_WINDOW,
        Checks::Full,
    );
    match verdict {
        Ok(()) => println!("{keyword}: {} result(s) verified at counter {counter}", response.ids.len()),
        Err(f) => println!("{keyword}: verification FAILED ({f:?})"),
    }
    Ok(verdict.is_ok())
}

fn keywords(state: &State, top: usize) -> Result<()> {
    let owner = state.owner()?;
    let mut all: Vec<(&str, u64)> = owner.keywords().map(|(w, s)| (w, s.counter)).collect();
    all.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(b.0)));
    for (w, n) in all.iter().take(top) {
        println!("{n:>8}  {w}");
    }
    println!("{} keywords in total", all.len());
    Ok(())
}

fn grant(state: &State, name: &str) -> Result<()> {
    let mut owner = state.owner()?;
    let creds = owner.grant_user(name);
    state.save_user(&creds)?;
    state.write("owner.bin", &owner.to_bytes())?;
    println!("granted {name} (group key epoch {})", creds.group.epoch);
    Ok(())
}

fn rotate(state: &State, connect: &Option<String>, revoke: &str) -> Result<()> {
    let mut owner = state.owner()?;
    let rotation = owner.rotate_group_key(revoke);
    let mut endpoint = Endpoint::open(state, connect)?;
    endpoint.transport().rotate(rotation.group)?;
    for name in &rotation.recipients {
        let mut creds = state.user(name)?;
        creds.install_group_key(rotation.group);
        state.save_user(&creds)?;
    }
    state.write("owner.bin", &owner.to_bytes())?;
    endpoint.close(state)?;
    println!(
        "group key rotated to epoch {}; revoked {revoke}; re-keyed {}",
        rotation.group.epoch,
        if rotation.recipients.is_empty() { "nobody".to_owned() } else { rotation.recipients.join(", ") }
    );
    Ok(())
}

fn bench(reps: usize, long: bool) -> Result<()> {
    let config = BenchConfig {
        reps,
        ..BenchConfig::default()
    };
    let report = run_bench(&config)?;
    print!("{}", report.to_table());
    if long {
        let sizes = measure_sizes(config.seed, TWENTY_YEARS_FILES)?;
        println!(
            "measured at {} files: tbl_c {:.2} MB, filter {:.2} MB, {} keywords",
            sizes.files,
            sizes.tbl_c_bytes as f64 / 1e6,
            sizes.bf_bytes as f64 / 1e6,
            sizes.keywords
        );
    }
    Ok(())
}

fn scenario(args: &ScenarioArgs) -> Result<bool> {
    let mut config = ScenarioConfig::new(args.mode, args.n);
    config.queries = args.queries;
    config.interleaved = args.interleaved;
    config.adversary = args.adversary;
    config.seed = args.seed;
    config.refresh_every = args.refresh_every;
    config.threads = args.threads;
    config.transport = if args.tcp { TransportKind::LoopbackTcp } else { TransportKind::InProcess };
    config.as_user = args.mode == Mode::Full && !args.as_owner;
    let report = run_scenario(&config)?;
    print!("{}", report.to_table());
    if let Some(path) = &args.records {
        report.write_records(path)?;
        println!("records written to {}", path.display());
    }
    Ok(report.passed())
}

fn serve_state(state: &State, listen: &str, adversary: Adversary, save_every: u64) -> Result<()> {
    let mut server = state.server()?;
    server.set_adversary(adversary);
    let shared = SharedServer::new(server);
    let listener = std::net::TcpListener::bind(listen)?;
    println!(
        "serving {} mode state from {} on {} ({adversary})",
        shared.lock().mode(),
        state.dir.display(),
        listener.local_addr()?
    );
    let saver = shared.clone();
    let path = state.path("server.bin");
    std::thread::spawn(move || loop {
        std::thread::sleep(Duration::from_secs(save_every.max(1)));
        let bytes = saver.lock().to_bytes();
        let _ = write_atomic(&path, &bytes);
    });
    serve(listener, shared)
}

fn write_atomic(path: &Path, bytes: &[u8]) -> std::io::Result<()> {
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, bytes)?;
    fs::rename(tmp, path)
}

fn run(cli: Cli) -> Result<bool> {
    let state = State { dir: cli.state };
    let connect = cli.connect;
    match cli.command {
        Command::GenKeys(args) => gen_keys(&state, &args).map(|()| true),
        Command::Grant { user } => grant(&state, &user).map(|()| true),
        Command::Ingest { n, seed, mode, refresh } => ingest(&state, &connect, n, seed, mode, refresh).map(|()| true),
        Command::Search {
            keyword,
            role,
            user,
            decrypt,
        } => search(&state, &connect, &keyword, role, user.as_deref(), decrypt),
        Command::Keywords { top } => keywords(&state, top).map(|()| true),
        Command::Verify { now } => verify(&state, now),
        Command::Rotate { revoke } => rotate(&state, &connect, &revoke).map(|()| true),
        Command::Bench { reps, long } => bench(reps, long).map(|()| true),
        Command::Scenario(args) => scenario(&args),
        Command::Serve {
            listen,
            adversary,
            save_every,
        } => serve_state(&state, &listen, adversary, save_every).map(|()| true),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use clap::CommandFactory;

    #[test]
    fn cli_definition_is_consistent() {
        Cli::command().debug_assert();
    }

    #[test]
    fn state_directory_flow() {
        let dir = std::env::temp_dir().join(format!("dsse-cli-{}", std::process::id()));
        let _ = fs::remove_dir_all(&dir);
        let state = State { dir: dir.clone() };
        ingest(&state, &None, 30, 4, Some(Mode::Full), false).unwrap();
        grant(&state, "alice").unwrap();
        grant(&state, "eve").unwrap();
        let owner = state.owner().unwrap();
        let (w, _) = owner.keywords().next().unwrap();
        let w = w.to_owned();
        assert!(search(&state, &None, &w, Role::Owner, None, true).unwrap());
        assert!(verify(&state, None).unwrap());
        assert!(!verify(&state, Some(state.clock().unwrap() + 10_000)).unwrap());
        assert!(search(&state, &None, &w, Role::User, Some("alice"), false).unwrap());
        rotate(&state, &None, "eve").unwrap();
        assert!(matches!(
            search(&state, &None, &w, Role::User, Some("eve"), false),
            Err(Error::Remote(_))
        ));
        assert!(search(&state, &None, &w, Role::User, Some("alice"), false).unwrap());
        ingest(&state, &None, 5, 5, None, true).unwrap();
        assert!(search(&state, &None, &w, Role::User, Some("alice"), false).unwrap());
        fs::remove_dir_all(&dir).unwrap();
    }
}
