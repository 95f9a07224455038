//! A data owner, a server reached through a transport, and any number of
//! users, sharing a simulated clock.

use std::collections::BTreeMap;

use crate::bloom::BloomParams;
use crate::chain::Mode;
use crate::error::{Error, Result};
use crate::owner::{Checks, Owner, OwnerConfig, Rotation, VerifyFailure};
use crate::protocol::{FileId, SearchResponse};
use crate::server::{Server, ServerConfig};
use crate::transport::{spawn_server, InProcess, SharedServer, TcpClient, Transport};
use crate::user::{check_user_result, gen_token_user, token_for, CounterGuess, UserCredentials};
use crate::wire::ErrorCode;

use super::oracle::PlaintextOracle;
use super::phi::{PhiFile, STREAM_START};

/// Two upload periods: a filter older than this is considered replayed.
pub const DEFAULT_FRESHNESS_WINDOW: u64 = 1_200;

/// Filter parameters for a run of `n_files` records: every label plus room
/// for one refresh's digit embeddings.
pub fn run_bloom(n_files: u64) -> BloomParams {
    BloomParams::new(2f64.powi(-30), 15 * n_files + 50_000)
}

#[derive(Clone, Debug)]
pub struct OwnerSearch {
    pub counter: u64,
    pub response: SearchResponse,
    pub lookups: Option<u64>,
    pub verdict: std::result::Result<(), VerifyFailure>,
}

#[derive(Clone, Debug)]
pub struct UserSearch {
    pub guess: CounterGuess,
    /// Counter the token was built for (after any retry).
    pub counter: u64,
    pub retried: bool,
    pub response: SearchResponse,
    pub lookups: Option<u64>,
    pub verdict: std::result::Result<(), VerifyFailure>,
}

/// Fetches the filter, guesses the counter, searches and verifies. A
/// `NOT_FOUND` for the guessed counter is retried once one lower, which
/// absorbs a false positive just above the true counter.
pub fn user_query<T: Transport + ?Sized>(
    transport: &mut T,
    creds: &UserCredentials,
    keyword: &str,
    now: u64,
    freshness_window: u64,
) -> Result<UserSearch> {
    let triple = transport.get_bloom()?;
    let (token, guess) = gen_token_user(creds, &triple, keyword, now, freshness_window)?;
    let mut counter = guess.counter.expect("token implies a counter");
    let mut retried = false;
    let response = match transport.search(token) {
        Err(Error::Remote(ErrorCode::NotFound)) if counter > 1 => {
            counter -= 1;
            retried = true;
            transport.search(token_for(creds, keyword, counter))?
        }
        other => other?,
    };
    let verdict = check_user_result(
        creds,
        keyword,
        counter,
        &response.ids,
        &response.ciphertexts,
        response.proof.as_ref(),
        now,
        freshness_window,
    );
    Ok(UserSearch {
        guess,
        counter,
        retried,
        response,
        lookups: None,
        verdict,
    })
}

pub struct Deployment<T: Transport = InProcess> {
    owner: Owner,
    transport: T,
    server: Option<SharedServer>,
    users: BTreeMap<String, UserCredentials>,
    revoked: BTreeMap<String, UserCredentials>,
    oracle: PlaintextOracle,
    now: u64,
    window: u64,
}

fn start_pair(mode: Mode, bloom: BloomParams) -> Result<(Owner, SharedServer)> {
    let owner = Owner::gen_key(OwnerConfig::new(mode).with_bloom(bloom))?;
    let server = SharedServer::new(Server::new(ServerConfig::new(mode).with_bloom(bloom))?);
    Ok((owner, server))
}

impl Deployment<InProcess> {
    pub fn in_process(mode: Mode, bloom: BloomParams) -> Result<Self> {
        let (owner, server) = start_pair(mode, bloom)?;
        Self::with_transport(owner, InProcess::new(server.clone()), Some(server))
    }
}

impl Deployment<TcpClient> {
    /// Serves on an ephemeral loopback port and connects to it.
    pub fn loopback_tcp(mode: Mode, bloom: BloomParams) -> Result<Self> {
        let (owner, server) = start_pair(mode, bloom)?;
        let (addr, _) = spawn_server("127.0.0.1:0", server.clone())?;
        Self::with_transport(owner, TcpClient::connect(addr)?, Some(server))
    }
}

impl<T: Transport> Deployment<T> {
    /// Wires an owner to a server. In full mode the owner's group key is
    /// delivered to the server first. `server` is a local handle used for
    /// instrumentation only; it may be absent for remote servers.
    pub fn with_transport(owner: Owner, mut transport: T, server: Option<SharedServer>) -> Result<Self> {
        if owner.mode() == Mode::Full {
            match transport.rotate(owner.group_key()) {
                // A remote server may already hold this epoch.
                Ok(()) | Err(Error::Remote(ErrorCode::StaleEpoch)) => {}
                Err(e) => return Err(e),
            }
        }
        Ok(Self {
            owner,
            transport,
            server,
            users: BTreeMap::new(),
            revoked: BTreeMap::new(),
            oracle: PlaintextOracle::new(),
            now: STREAM_START,
            window: DEFAULT_FRESHNESS_WINDOW,
        })
    }

    pub fn mode(&self) -> Mode {
        self.owner.mode()
    }

    pub fn owner(&self) -> &Owner {
        &self.owner
    }

    pub fn transport(&mut self) -> &mut T {
        &mut self.transport
    }

    pub fn server(&self) -> Option<&SharedServer> {
        self.server.as_ref()
    }

    pub fn oracle(&self) -> &PlaintextOracle {
        &self.oracle
    }

    pub fn now(&self) -> u64 {
        self.now
    }

    pub fn advance_clock(&mut self, seconds: u64) {
        self.now += seconds;
    }

    pub fn freshness_window(&self) -> u64 {
        self.window
    }

    pub fn set_freshness_window(&mut self, seconds: u64) {
        self.window = seconds;
    }

    pub fn ingest(&mut self, file: &PhiFile) -> Result<FileId> {
        self.ingest_raw(&file.to_bytes(), &file.keywords(), file.timestamp)
    }

    pub fn ingest_raw<S: AsRef<str>>(&mut self, file: &[u8], keywords: &[S], timestamp: u64) -> Result<FileId> {
        let payload = self.owner.add_file(file, keywords, timestamp)?;
        let id = payload.file_id;
        self.transport.add(payload)?;
        self.oracle.add(id, keywords);
        self.now = self.now.max(timestamp);
        Ok(id)
    }

    /// Rebuilds the filter from current counters and uploads it.
    pub fn refresh(&mut self) -> Result<()> {
        let payload = self.owner.refresh_bloom(self.now)?;
        self.transport.refresh(payload)
    }

    pub fn add_user(&mut self, name: &str) -> UserCredentials {
        let creds = self.owner.grant_user(name);
        self.users.insert(name.to_owned(), creds.clone());
        creds
    }

    /// Credentials of a current or revoked user.
    pub fn user(&self, name: &str) -> Option<&UserCredentials> {
        self.users.get(name).or_else(|| self.revoked.get(name))
    }

    pub fn active_users(&self) -> impl Iterator<Item = &str> {
        self.users.keys().map(String::as_str)
    }

    /// Rotates the group key, delivers it to the server and to every user
    /// except `name`, who keeps the old key.
    pub fn revoke(&mut self, name: &str) -> Result<Rotation> {
        let rotation = self.owner.rotate_group_key(name);
        self.transport.rotate(rotation.group)?;
        if let Some(creds) = self.users.remove(name) {
            self.revoked.insert(name.to_owned(), creds);
        }
        for creds in self.users.values_mut() {
            creds.install_group_key(rotation.group);
        }
        Ok(rotation)
    }

    fn last_lookups(&self) -> Option<u64> {
        self.server.as_ref().map(|s| s.lock().stats().last_lookups)
    }

    pub fn owner_search(&mut self, keyword: &str) -> Result<OwnerSearch> {
        let token = self.owner.gen_token(keyword)?;
        let response = self.transport.search(token)?;
        let lookups = self.last_lookups();
        // Basic mode has no proof; the owner can still check the count.
        let verdict = match self.mode() {
            Mode::Basic if response.ids.len() as u64 == self.owner.counter(keyword).unwrap_or(0) => Ok(()),
            Mode::Basic => Err(VerifyFailure::Cardinality),
            Mode::Full => self.owner.verify(
                keyword,
                &response.ids,
                &response.ciphertexts,
                response.proof.as_ref(),
                self.now,
                self.window,
                Checks::Full,
            ),
        };
        Ok(OwnerSearch {
            counter: self.owner.counter(keyword).unwrap_or(0),
            response,
            lookups,
            verdict,
        })
    }

    pub fn user_search(&mut self, name: &str, keyword: &str) -> Result<UserSearch> {
        let creds = self
            .user(name)
            .cloned()
            .ok_or_else(|| Error::usage(format!("unknown user '{name}'")))?;
        let mut out = user_query(&mut self.transport, &creds, keyword, self.now, self.window)?;
        out.lookups = self.last_lookups();
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::phi::{synthesize_stream, DEFAULT_PERIOD};

    #[test]
    fn owner_and_user_agree_with_oracle() {
        let mut d = Deployment::in_process(Mode::Full, run_bloom(60)).unwrap();
        d.add_user("alice");
        for f in synthesize_stream(3, 60, DEFAULT_PERIOD) {
            d.ingest(&f).unwrap();
        }
        let words: Vec<String> = d.oracle().keywords().iter().take(20).map(|s| s.to_string()).collect();
        for w in &words {
            let o = d.owner_search(w).unwrap();
            assert_eq!(o.response.ids, d.oracle().query(w));
            assert!(o.verdict.is_ok());
            let u = d.user_search("alice", w).unwrap();
            assert_eq!(u.response.ids, d.oracle().query(w));
            assert_eq!(u.counter, d.oracle().count(w));
            assert_eq!(u.lookups, Some(1));
            assert!(u.verdict.is_ok(), "{w}: {:?}", u.verdict);
        }
    }

    #[test]
    fn revocation_over_tcp() {
        let mut d = Deployment::loopback_tcp(Mode::Full, run_bloom(10)).unwrap();
        d.add_user("alice");
        d.add_user("bob");
        for f in synthesize_stream(4, 10, DEFAULT_PERIOD) {
            d.ingest(&f).unwrap();
        }
        let w = d.oracle().keywords()[0].to_owned();
        d.revoke("bob").unwrap();
        assert!(matches!(d.user_search("bob", &w), Err(Error::Remote(ErrorCode::StaleEpoch))));
        assert!(d.user_search("alice", &w).unwrap().verdict.is_ok());
        assert_eq!(d.active_users().collect::<Vec<_>>(), vec!["alice"]);
    }

    #[test]
    fn refresh_keeps_users_working() {
        let mut d = Deployment::in_process(Mode::Full, run_bloom(30)).unwrap();
        d.add_user("u");
        let files: Vec<_> = synthesize_stream(5, 30, DEFAULT_PERIOD).collect();
        for f in &files[..20] {
            d.ingest(f).unwrap();
        }
        d.refresh().unwrap();
        for f in &files[20..] {
            d.ingest(f).unwrap();
        }
        for w in files[0].keywords().iter().chain(&files[29].keywords()) {
            let u = d.user_search("u", w).unwrap();
            assert_eq!(u.counter, d.oracle().count(w));
            assert!(u.verdict.is_ok());
        }
    }
}
