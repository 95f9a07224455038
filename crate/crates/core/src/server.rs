//! Cloud-server side: index ingestion, chain-walking search with proof
//! assembly, result merging, and an optional adversarial mode used to
//! exercise verification.

use std::collections::{HashMap, HashSet, VecDeque};

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::bloom::{BloomFilter, BloomParams};
use crate::chain::{unmask_entry, Mode};
use crate::codec::{Reader, Writer};
use crate::crypto::{GroupKey, Label, Tag, ZERO_BLOCK};
use crate::error::{Error, Result};
use crate::protocol::{
    AddPayload, BloomTriple, FileId, FilterAuth, Proof, RefreshPayload, SearchResponse,
    SearchToken,
};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ServerConfig {
    pub mode: Mode,
    pub bloom: BloomParams,
    /// Delete interior chain entries once a search has merged them into
    /// the head entry.
    pub prune_merged: bool,
}

impl ServerConfig {
    pub fn new(mode: Mode) -> Self {
        Self {
            mode,
            bloom: BloomParams::default(),
            prune_merged: false,
        }
    }

    pub fn with_bloom(mut self, bloom: BloomParams) -> Self {
        self.bloom = bloom;
        self
    }
}

/// How the server corrupts its responses.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Adversary {
    #[default]
    Honest,
    /// Omit the newest file id (and its ciphertext).
    DropResult,
    /// Answer with a cached result of another keyword, including its γ.
    SwapKeyword,
    /// Serve the filter triple captured when this mode was switched on.
    StaleBloom,
    /// Flip one filter bit, keep σ.
    FlipBloomBit,
    /// Replace γ in the proof with random bytes.
    ForgeGamma,
}

impl Adversary {
    pub const ALL_ATTACKS: [Adversary; 5] = [
        Adversary::DropResult,
        Adversary::SwapKeyword,
        Adversary::StaleBloom,
        Adversary::FlipBloomBit,
        Adversary::ForgeGamma,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Adversary::Honest => "honest",
            Adversary::DropResult => "drop_result",
            Adversary::SwapKeyword => "swap_keyword",
            Adversary::StaleBloom => "stale_bloom",
            Adversary::FlipBloomBit => "flip_bloom_bit",
            Adversary::ForgeGamma => "forge_gamma",
        }
    }
}

impl std::str::FromStr for Adversary {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        std::iter::once(Adversary::Honest)
            .chain(Adversary::ALL_ATTACKS)
            .find(|a| a.as_str() == s.replace('-', "_"))
            .ok_or_else(|| format!("unknown adversary behavior '{s}'"))
    }
}

impl std::fmt::Display for Adversary {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
enum StoredEntry {
    Chain { masked: Vec<u8>, file_id: FileId },
    /// Stop sign ⊥ followed by the ids found when this label was last the
    /// head of a search, newest first. γ of that head is kept so a repeat
    /// search can still produce a proof.
    Merged { gamma: Option<Tag>, ids: Vec<FileId> },
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
pub struct ServerStats {
    pub searches: u64,
    pub last_lookups: u64,
    pub total_lookups: u64,
}

#[derive(Clone, Debug)]
struct CachedResult {
    head: Label,
    ids: Vec<FileId>,
    gamma: Option<Tag>,
}

const RESULT_CACHE_LEN: usize = 256;

#[derive(Debug)]
pub struct Server {
    mode: Mode,
    prune_merged: bool,
    table: HashMap<Label, StoredEntry>,
    bloom: Option<BloomFilter>,
    auth: Option<FilterAuth>,
    files: HashMap<FileId, Vec<u8>>,
    group: Option<GroupKey>,
    stats: ServerStats,
    adversary: Adversary,
    stale: Option<BloomTriple>,
    cache: VecDeque<CachedResult>,
    rng: ChaCha8Rng,
}

impl Server {
    pub fn new(config: ServerConfig) -> Result<Self> {
        let bloom = match config.mode {
            Mode::Full => Some(BloomFilter::new(config.bloom)?),
            Mode::Basic => None,
        };
        Ok(Self {
            mode: config.mode,
            prune_merged: config.prune_merged,
            table: HashMap::new(),
            bloom,
            auth: None,
            files: HashMap::new(),
            group: None,
            stats: ServerStats::default(),
            adversary: Adversary::Honest,
            stale: None,
            cache: VecDeque::new(),
            rng: ChaCha8Rng::seed_from_u64(0x5eed),
        })
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn stats(&self) -> ServerStats {
        self.stats
    }

    pub fn entry_count(&self) -> usize {
        self.table.len()
    }

    pub fn file_count(&self) -> usize {
        self.files.len()
    }

    pub fn bloom(&self) -> Option<&BloomFilter> {
        self.bloom.as_ref()
    }

    pub fn group_epoch(&self) -> Option<u64> {
        self.group.map(|g| g.epoch)
    }

    pub fn contains_label(&self, label: &Label) -> bool {
        self.table.contains_key(label)
    }

    pub fn ciphertext(&self, id: &FileId) -> Option<&[u8]> {
        self.files.get(id).map(Vec::as_slice)
    }

    pub fn adversary(&self) -> Adversary {
        self.adversary
    }

    /// Installs a group key delivered by the owner. Epochs must increase.
    pub fn install_group_key(&mut self, group: GroupKey) -> Result<()> {
        if let Some(cur) = self.group {
            if group.epoch <= cur.epoch {
                return Err(Error::StaleEpoch {
                    got: group.epoch,
                    current: cur.epoch,
                });
            }
        }
        self.group = Some(group);
        Ok(())
    }

    pub fn add(&mut self, payload: AddPayload) -> Result<()> {
        let want = self.mode.masked_len();
        for e in &payload.entries {
            if e.masked.len() != want {
                let got = if e.masked.len() == Mode::Basic.masked_len() {
                    Mode::Basic
                } else {
                    Mode::Full
                };
                self.mode.expect(got)?;
                return Err(Error::format(0, format!("masked entry of {} bytes", e.masked.len())));
            }
        }
        let mut fresh = HashSet::with_capacity(payload.entries.len());
        for e in &payload.entries {
            if self.table.contains_key(&e.label) || !fresh.insert(e.label) {
                return Err(Error::DuplicateLabel);
            }
        }
        if self.files.contains_key(&payload.file_id) {
            return Err(Error::usage("duplicate file id"));
        }
        if self.mode == Mode::Full {
            let auth = payload
                .auth
                .ok_or_else(|| Error::usage("full-mode payload without filter authenticator"))?;
            if let Some(last) = self.auth {
                if auth.timestamp < last.timestamp {
                    return Err(Error::NonMonotonicTime {
                        got: auth.timestamp,
                        last: last.timestamp,
                    });
                }
            }
            let bf = self.bloom.as_mut().expect("full mode keeps a filter");
            for e in &payload.entries {
                bf.add(&e.label);
            }
            self.auth = Some(auth);
        }
        for e in payload.entries {
            self.table.insert(
                e.label,
                StoredEntry::Chain {
                    masked: e.masked,
                    file_id: payload.file_id,
                },
            );
        }
        self.files.insert(payload.file_id, payload.ciphertext);
        Ok(())
    }

    /// Replaces the filter wholesale with the owner's refreshed one.
    pub fn refresh(&mut self, payload: RefreshPayload) -> Result<()> {
        if self.mode != Mode::Full {
            return Err(Error::Unsupported("bloom refresh requires full mode"));
        }
        let bf = BloomFilter::from_bytes(&payload.bloom)?;
        if let Some(last) = self.auth {
            if payload.auth.timestamp < last.timestamp {
                return Err(Error::NonMonotonicTime {
                    got: payload.auth.timestamp,
                    last: last.timestamp,
                });
            }
        }
        self.bloom = Some(bf);
        self.auth = Some(payload.auth);
        Ok(())
    }

    fn honest_triple(&self) -> Result<BloomTriple> {
        let bf = self
            .bloom
            .as_ref()
            .ok_or(Error::Unsupported("bloom filter requires full mode"))?;
        let auth = self
            .auth
            .ok_or_else(|| Error::NotFound("no filter authenticator published yet".into()))?;
        Ok(BloomTriple {
            bloom: bf.to_bytes(),
            sigma: auth.sigma,
            timestamp: auth.timestamp,
        })
    }

    fn served_triple(&mut self) -> Result<BloomTriple> {
        match self.adversary {
            Adversary::StaleBloom => match &self.stale {
                Some(t) => Ok(t.clone()),
                None => self.honest_triple(),
            },
            Adversary::FlipBloomBit => {
                let mut t = self.honest_triple()?;
                let m = u32::from_be_bytes(t.bloom[..4].try_into().unwrap());
                let i = self.rng.gen_range(0..m) as usize;
                t.bloom[8 + i / 8] ^= 1 << (i % 8);
                Ok(t)
            }
            _ => self.honest_triple(),
        }
    }

    pub fn get_bloom(&mut self) -> Result<BloomTriple> {
        self.served_triple()
    }

    pub fn set_adversary(&mut self, behavior: Adversary) {
        if behavior == Adversary::StaleBloom {
            self.stale = self.honest_triple().ok();
        }
        self.adversary = behavior;
    }

    pub fn search(&mut self, token: &SearchToken) -> Result<SearchResponse> {
        match (self.mode, token) {
            (Mode::Basic, SearchToken::Sealed { .. }) => self.mode.expect(Mode::Full)?,
            (Mode::Full, SearchToken::Plain { .. }) => self.mode.expect(Mode::Basic)?,
            _ => {}
        }
        let (head, head_key) = token.open(self.group.as_ref())?;

        let mut ids = Vec::new();
        let mut head_gamma = None;
        let mut walked = Vec::new();
        let mut lookups = 0u64;
        let (mut label, mut key) = (head, head_key);
        let head_was_merged;
        loop {
            let Some(entry) = self.table.get(&label) else {
                self.stats.last_lookups = lookups;
                return Err(if lookups == 0 {
                    Error::NotFound("no index entry for token".into())
                } else {
                    Error::BrokenChain(format!("chain ends after {lookups} entries without a terminator"))
                });
            };
            lookups += 1;
            if lookups > self.table.len() as u64 + 1 {
                return Err(Error::BrokenChain("cycle in chain".into()));
            }
            match entry {
                StoredEntry::Chain { masked, file_id } => {
                    ids.push(*file_id);
                    let link = unmask_entry(self.mode, &key, &label, masked)?;
                    if lookups == 1 {
                        head_gamma = link.gamma;
                    }
                    if label != head {
                        walked.push(label);
                    }
                    label = link.prev_label;
                    key = link.prev_key;
                    if key == ZERO_BLOCK {
                        head_was_merged = false;
                        break;
                    }
                }
                StoredEntry::Merged { gamma, ids: older } => {
                    if lookups == 1 {
                        head_gamma = *gamma;
                    } else {
                        walked.push(label);
                    }
                    ids.extend_from_slice(older);
                    head_was_merged = lookups == 1;
                    break;
                }
            }
        }
        self.stats.searches += 1;
        self.stats.last_lookups = lookups;
        self.stats.total_lookups += lookups;

        if !head_was_merged {
            self.table.insert(
                head,
                StoredEntry::Merged {
                    gamma: head_gamma,
                    ids: ids.clone(),
                },
            );
            if self.prune_merged {
                for l in &walked {
                    self.table.remove(l);
                }
            }
        }
        self.remember(head, &ids, head_gamma);

        let mut response = SearchResponse {
            ciphertexts: self.ciphertexts_for(&ids)?,
            ids,
            proof: None,
        };
        if self.mode == Mode::Full {
            response.proof = Some(Proof {
                bloom: self.honest_triple()?,
                gamma: head_gamma.unwrap_or(ZERO_BLOCK),
            });
        }
        self.corrupt(head, &mut response)?;
        Ok(response)
    }

    fn ciphertexts_for(&self, ids: &[FileId]) -> Result<Vec<Vec<u8>>> {
        ids.iter()
            .map(|id| {
                self.files
                    .get(id)
                    .cloned()
                    .ok_or_else(|| Error::BrokenChain(format!("missing ciphertext for {id}")))
            })
            .collect()
    }

    fn remember(&mut self, head: Label, ids: &[FileId], gamma: Option<Tag>) {
        self.cache.retain(|c| c.head != head);
        if self.cache.len() == RESULT_CACHE_LEN {
            self.cache.pop_front();
        }
        self.cache.push_back(CachedResult {
            head,
            ids: ids.to_vec(),
            gamma,
        });
    }

    fn corrupt(&mut self, head: Label, response: &mut SearchResponse) -> Result<()> {
        match self.adversary {
            Adversary::Honest => {}
            Adversary::DropResult => {
                if !response.ids.is_empty() {
                    response.ids.remove(0);
                    response.ciphertexts.remove(0);
                }
            }
            Adversary::SwapKeyword => {
                let want = response.ids.len();
                let pick = self
                    .cache
                    .iter()
                    .filter(|c| c.head != head)
                    .min_by_key(|c| c.ids.len().abs_diff(want))
                    .cloned();
                if let Some(other) = pick {
                    // Pad or trim so the cardinality check alone cannot
                    // catch the replacement.
                    let mut ids: Vec<FileId> = other.ids.iter().copied().cycle().take(want).collect();
                    if ids.is_empty() {
                        ids = other.ids.clone();
                    }
                    response.ciphertexts = self.ciphertexts_for(&ids)?;
                    response.ids = ids;
                    if let (Some(p), Some(g)) = (response.proof.as_mut(), other.gamma) {
                        p.gamma = g;
                    }
                }
            }
            Adversary::StaleBloom | Adversary::FlipBloomBit => {
                if let Some(p) = response.proof.as_mut() {
                    p.bloom = self.served_triple()?;
                }
            }
            Adversary::ForgeGamma => {
                if let Some(p) = response.proof.as_mut() {
                    self.rng.fill_bytes(&mut p.gamma);
                }
            }
        }
        Ok(())
    }

    /// Length-prefixed snapshot of the persistent state (adversary state is
    /// not included).
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer::new();
        w.raw(SNAPSHOT_MAGIC).u8(self.mode.to_byte()).u8(self.prune_merged as u8);
        match self.group {
            Some(g) => w.u8(1).u64(g.epoch).raw(&g.key),
            None => w.u8(0),
        };
        match self.auth {
            Some(a) => w.u8(1).raw(&a.sigma).u64(a.timestamp),
            None => w.u8(0),
        };
        match &self.bloom {
            Some(bf) => w.u8(1).var(&bf.to_bytes()).u64(bf.n_inserted()),
            None => w.u8(0),
        };
        let mut labels: Vec<_> = self.table.keys().collect();
        labels.sort();
        w.u32(labels.len() as u32);
        for l in labels {
            w.raw(l);
            match &self.table[l] {
                StoredEntry::Chain { masked, file_id } => {
                    w.u8(0).var(masked).raw(&file_id.0);
                }
                StoredEntry::Merged { gamma, ids } => {
                    w.u8(1);
                    match gamma {
                        Some(g) => w.u8(1).raw(g),
                        None => w.u8(0),
                    };
                    w.u32(ids.len() as u32);
                    for id in ids {
                        w.raw(&id.0);
                    }
                }
            }
        }
        let mut ids: Vec<_> = self.files.keys().collect();
        ids.sort();
        w.u32(ids.len() as u32);
        for id in ids {
            w.raw(&id.0).var(&self.files[id]);
        }
        w.finish()
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader::new(bytes);
        if r.take(SNAPSHOT_MAGIC.len())? != SNAPSHOT_MAGIC {
            return Err(Error::format(0, "not a server snapshot"));
        }
        let at = r.offset();
        let mode = Mode::from_byte(r.u8()?, at)?;
        let prune_merged = r.u8()? != 0;
        let group = match r.u8()? {
            0 => None,
            _ => Some(GroupKey {
                epoch: r.u64()?,
                key: r.array()?,
            }),
        };
        let auth = match r.u8()? {
            0 => None,
            _ => Some(FilterAuth {
                sigma: r.array()?,
                timestamp: r.u64()?,
            }),
        };
        let bloom = match r.u8()? {
            0 => None,
            _ => {
                let mut bf = BloomFilter::from_bytes(r.var()?)?;
                bf.set_inserted(r.u64()?);
                Some(bf)
            }
        };
        let n = r.count(17)?;
        let mut table = HashMap::with_capacity(n);
        for _ in 0..n {
            let label: Label = r.array()?;
            let at = r.offset();
            let entry = match r.u8()? {
                0 => StoredEntry::Chain {
                    masked: r.var()?.to_vec(),
                    file_id: FileId(r.array()?),
                },
                1 => {
                    let gamma = match r.u8()? {
                        0 => None,
                        _ => Some(r.array()?),
                    };
                    let count = r.count(16)?;
                    let ids = (0..count)
                        .map(|_| r.array().map(FileId))
                        .collect::<Result<_>>()?;
                    StoredEntry::Merged { gamma, ids }
                }
                t => return Err(Error::format(at, format!("unknown entry tag {t}"))),
            };
            table.insert(label, entry);
        }
        let n = r.count(20)?;
        let mut files = HashMap::with_capacity(n);
        for _ in 0..n {
            let id = FileId(r.array()?);
            files.insert(id, r.var()?.to_vec());
        }
        r.finish()?;
        Ok(Self {
            mode,
            prune_merged,
            table,
            bloom,
            auth,
            files,
            group,
            stats: ServerStats::default(),
            adversary: Adversary::Honest,
            stale: None,
            cache: VecDeque::new(),
            rng: ChaCha8Rng::seed_from_u64(0x5eed),
        })
    }
}

const SNAPSHOT_MAGIC: &[u8] = b"DSSESRV1";

#[cfg(test)]
mod tests {
    use super::*;
    use crate::owner::{Owner, OwnerConfig};
    use rand_chacha::ChaCha8Rng;

    fn pair(mode: Mode) -> (Owner, Server) {
        let params = BloomParams::new(2f64.powi(-30), 2_000);
        let owner = Owner::gen_key_with_rng(
            OwnerConfig::new(mode).with_bloom(params),
            &mut ChaCha8Rng::seed_from_u64(3),
        )
        .unwrap();
        let mut server = Server::new(ServerConfig::new(mode).with_bloom(params)).unwrap();
        if mode == Mode::Full {
            server.install_group_key(owner.group_key()).unwrap();
        }
        (owner, server)
    }

    fn ingest(owner: &mut Owner, server: &mut Server, kws: &[&str], t: u64) -> FileId {
        let p = owner.add_file(format!("file@{t}").as_bytes(), kws, t).unwrap();
        let id = p.file_id;
        server.add(p).unwrap();
        id
    }

    #[test]
    fn add_grows_table_and_filter() {
        let (mut o, mut s) = pair(Mode::Full);
        let kws: Vec<String> = (0..15).map(|i| format!("a{i}:0")).collect();
        let p = o.add_file(b"x", &kws, 1).unwrap();
        s.add(p).unwrap();
        assert_eq!(s.entry_count(), 15);
        assert_eq!(s.bloom().unwrap().n_inserted(), 15);
        assert_eq!(s.bloom().unwrap(), o.bloom().unwrap());
    }

    #[test]
    fn duplicate_label_and_time_regressions_rejected() {
        let (mut o, mut s) = pair(Mode::Full);
        let p = o.add_file(b"x", &["w"], 10).unwrap();
        s.add(p.clone()).unwrap();
        let mut replay = p.clone();
        replay.file_id = FileId([9; 16]);
        assert!(matches!(s.add(replay), Err(Error::DuplicateLabel)));
        let older = o.add_file(b"y", &["v"], 5).unwrap();
        assert!(matches!(s.add(older), Err(Error::NonMonotonicTime { got: 5, last: 10 })));
    }

    #[test]
    fn basic_mode_ignores_filter_material() {
        let (mut o, mut s) = pair(Mode::Basic);
        ingest(&mut o, &mut s, &["w"], 10);
        ingest(&mut o, &mut s, &["w"], 5);
        assert!(s.bloom().is_none());
        assert!(matches!(s.get_bloom(), Err(Error::Unsupported(_))));
        let r = s.search(&o.gen_token("w").unwrap()).unwrap();
        assert_eq!(r.ids.len(), 2);
        assert!(r.proof.is_none());
    }

    #[test]
    fn mode_mismatch_is_rejected() {
        let (mut o, _) = pair(Mode::Full);
        let mut basic = Server::new(ServerConfig::new(Mode::Basic)).unwrap();
        let p = o.add_file(b"x", &["w"], 1).unwrap();
        assert!(matches!(basic.add(p), Err(Error::ModeMismatch { .. })));
        let tok = o.gen_token("w").unwrap();
        assert!(matches!(basic.search(&tok), Err(Error::ModeMismatch { .. })));
    }

    #[test]
    fn search_walks_then_merges() {
        let (mut o, mut s) = pair(Mode::Full);
        let ids: Vec<FileId> = (0..3).map(|t| ingest(&mut o, &mut s, &["w", "other"], t)).collect();
        let r = s.search(&o.gen_token("w").unwrap()).unwrap();
        assert_eq!(r.ids, vec![ids[2], ids[1], ids[0]]);
        assert_eq!(s.stats().last_lookups, 3);
        assert_eq!(r.proof.as_ref().unwrap().gamma, o.keyword_state("w").unwrap().gamma.unwrap());

        let again = s.search(&o.gen_token("w").unwrap()).unwrap();
        assert_eq!(s.stats().last_lookups, 1);
        assert_eq!(again.ids, r.ids);
        assert_eq!(again.proof.unwrap().gamma, r.proof.unwrap().gamma);

        let new_ids: Vec<FileId> = (3..5).map(|t| ingest(&mut o, &mut s, &["w"], t)).collect();
        let third = s.search(&o.gen_token("w").unwrap()).unwrap();
        assert_eq!(s.stats().last_lookups, 3);
        assert_eq!(third.ids[..2], [new_ids[1], new_ids[0]]);
        assert_eq!(third.ids.len(), 5);
        assert!(o.verify("w", &third.ids, &third.ciphertexts, third.proof.as_ref(), 5, 1200, crate::owner::Checks::Full).is_ok());
    }

    #[test]
    fn pruning_drops_interior_entries() {
        let params = BloomParams::new(2f64.powi(-30), 200);
        let mut o = Owner::gen_key(OwnerConfig::new(Mode::Basic).with_bloom(params)).unwrap();
        let mut cfg = ServerConfig::new(Mode::Basic);
        cfg.prune_merged = true;
        let mut s = Server::new(cfg).unwrap();
        for t in 0..4 {
            ingest(&mut o, &mut s, &["w"], t);
        }
        assert_eq!(s.entry_count(), 4);
        let r = s.search(&o.gen_token("w").unwrap()).unwrap();
        assert_eq!(s.entry_count(), 1);
        ingest(&mut o, &mut s, &["w"], 9);
        let r2 = s.search(&o.gen_token("w").unwrap()).unwrap();
        assert_eq!(r2.ids[1..], r.ids[..]);
        assert_eq!(s.entry_count(), 1);
    }

    #[test]
    fn unknown_token_and_stale_epoch() {
        let (mut o, mut s) = pair(Mode::Full);
        ingest(&mut o, &mut s, &["w"], 1);
        let stray = SearchToken::seal(&o.group_key(), &[1; 16], &[2; 16]);
        assert!(matches!(s.search(&stray), Err(Error::NotFound(_))));
        let old = o.gen_token("w").unwrap();
        o.grant_user("u");
        let rot = o.rotate_group_key("u");
        s.install_group_key(rot.group).unwrap();
        assert!(matches!(s.search(&old), Err(Error::StaleEpoch { got: 1, current: 2 })));
        assert!(s.search(&o.gen_token("w").unwrap()).is_ok());
        assert!(s.install_group_key(GroupKey { epoch: 2, key: [0; 16] }).is_err());
    }

    #[test]
    fn refresh_replaces_filter() {
        let (mut o, mut s) = pair(Mode::Full);
        ingest(&mut o, &mut s, &["w"], 1);
        let old_label = crate::crypto::chain_label(&o.keys().k_prf, "w", 1);
        assert!(s.bloom().unwrap().contains(&old_label));
        let payload = o.refresh_bloom(2).unwrap();
        s.refresh(payload.clone()).unwrap();
        assert_eq!(s.bloom().unwrap().to_bytes(), o.bloom().unwrap().to_bytes());
        assert!(!s.bloom().unwrap().contains(&old_label));
        assert!(s.contains_label(&old_label));
        let t = s.get_bloom().unwrap();
        assert_eq!((t.sigma, t.timestamp), (payload.auth.sigma, 2));
        let mut bad = payload;
        bad.bloom.pop();
        assert!(matches!(s.refresh(bad), Err(Error::Format { .. })));
    }

    #[test]
    fn adversaries_corrupt_responses() {
        let (mut o, mut s) = pair(Mode::Full);
        for t in 0..3 {
            ingest(&mut o, &mut s, &["a", "b"], t);
        }
        let honest_triple = s.get_bloom().unwrap();
        let honest = s.search(&o.gen_token("a").unwrap()).unwrap();

        s.set_adversary(Adversary::DropResult);
        let r = s.search(&o.gen_token("a").unwrap()).unwrap();
        assert_eq!(r.ids, honest.ids[1..]);

        s.set_adversary(Adversary::SwapKeyword);
        let r = s.search(&o.gen_token("b").unwrap()).unwrap();
        assert_eq!(r.ids, honest.ids);
        assert_eq!(r.proof.unwrap().gamma, o.keyword_state("a").unwrap().gamma.unwrap());

        s.set_adversary(Adversary::FlipBloomBit);
        let t = s.get_bloom().unwrap();
        assert_eq!(t.sigma, honest_triple.sigma);
        let diff: u32 = t.bloom.iter().zip(&honest_triple.bloom).map(|(a, b)| (a ^ b).count_ones()).sum();
        assert_eq!(diff, 1);

        s.set_adversary(Adversary::StaleBloom);
        ingest(&mut o, &mut s, &["a"], 10);
        assert_eq!(s.get_bloom().unwrap(), honest_triple);

        s.set_adversary(Adversary::ForgeGamma);
        let r = s.search(&o.gen_token("a").unwrap()).unwrap();
        assert_ne!(r.proof.unwrap().gamma, o.keyword_state("a").unwrap().gamma.unwrap());
    }

    #[test]
    fn snapshot_round_trip() {
        let (mut o, mut s) = pair(Mode::Full);
        for t in 0..3 {
            ingest(&mut o, &mut s, &["a", "b"], t);
        }
        s.search(&o.gen_token("a").unwrap()).unwrap();
        let bytes = s.to_bytes();
        let mut back = Server::from_bytes(&bytes).unwrap();
        assert_eq!(back.to_bytes(), bytes);
        let r = back.search(&o.gen_token("b").unwrap()).unwrap();
        assert_eq!(r.ids.len(), 3);
        assert!(Server::from_bytes(&bytes[..bytes.len() - 2]).is_err());
    }

    #[test]
    fn adversary_names_parse() {
        for a in Adversary::ALL_ATTACKS {
            assert_eq!(a.as_str().parse::<Adversary>().unwrap(), a);
        }
        assert_eq!("flip-bloom-bit".parse::<Adversary>().unwrap(), Adversary::FlipBloomBit);
        assert!("nope".parse::<Adversary>().is_err());
    }
}
