//! Data-owner (gateway) side: key generation, index construction, owner
//! tokens, result verification, group-key rotation and filter refresh.

use std::collections::{BTreeSet, HashMap, HashSet};

use rand::rngs::OsRng;
use rand::{CryptoRng, RngCore};

use crate::bloom::{BloomFilter, BloomParams};
use crate::chain::{mask_entry, ChainLink, Mode};
use crate::codec::{Reader, Writer};
use crate::crypto::{
    chain_key, chain_label, file_keyword_mac, se_encrypt, xor_in_place, GroupKey, Key,
    KeyBundle, Tag, ZERO_BLOCK,
};
use crate::error::{Error, Result};
use crate::protocol::{
    filter_authenticator, filter_authenticator_of, AddPayload, FileId, FilterAuth, IndexEntry, Proof, RefreshPayload,
    SearchToken,
};
use crate::user::UserCredentials;

/// Default counter bound handed to users.
pub const DEFAULT_MAX_COUNTER: u64 = 1 << 31;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OwnerConfig {
    pub mode: Mode,
    pub bloom: BloomParams,
}

impl OwnerConfig {
    pub fn new(mode: Mode) -> Self {
        Self {
            mode,
            bloom: BloomParams::default(),
        }
    }

    pub fn with_bloom(mut self, bloom: BloomParams) -> Self {
        self.bloom = bloom;
        self
    }
}

/// Per-keyword owner state: the counter and (full mode) the running
/// aggregate MAC γ.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct KeywordState {
    pub counter: u64,
    pub gamma: Option<Tag>,
}

/// Output of a group-key rotation. The new key goes to the server and to
/// every recipient over the trusted setup channel.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Rotation {
    pub group: GroupKey,
    pub revoked: String,
    pub recipients: Vec<String>,
}

/// Which of the verification checks to run.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Checks {
    /// Cardinality, aggregate MAC, filter MAC and freshness.
    Full,
    /// Cardinality and aggregate MAC only. Sound for the owner, who knows
    /// the true counter.
    CounterKnown,
}

/// Why a search result was rejected.
#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize)]
#[serde(rename_all = "snake_case")]
pub enum VerifyFailure {
    MissingProof,
    /// `|ciphertexts| ≠ |rst|`.
    Shape,
    Cardinality,
    AggregateMac,
    FilterMac,
    Stale,
}

/// Checks a search result against the expected counter and the proof.
pub fn check_result(
    k_mac: &Key,
    keyword: &str,
    counter: u64,
    ids: &[FileId],
    ciphertexts: &[Vec<u8>],
    proof: Option<&Proof>,
    now: u64,
    freshness_window: u64,
    checks: Checks,
) -> std::result::Result<(), VerifyFailure> {
    let proof = proof.ok_or(VerifyFailure::MissingProof)?;
    if ids.len() != ciphertexts.len() {
        return Err(VerifyFailure::Shape);
    }
    if ids.len() as u64 != counter {
        return Err(VerifyFailure::Cardinality);
    }
    if aggregate_for(k_mac, keyword, ciphertexts) != proof.gamma {
        return Err(VerifyFailure::AggregateMac);
    }
    if checks == Checks::Full {
        if !proof.bloom.authentic(k_mac) {
            return Err(VerifyFailure::FilterMac);
        }
        if !proof.bloom.fresh(now, freshness_window) {
            return Err(VerifyFailure::Stale);
        }
    }
    Ok(())
}

/// `⊕_i Mac(K_Mac, C_i ∥ w)`.
pub fn aggregate_for(k_mac: &Key, keyword: &str, ciphertexts: &[Vec<u8>]) -> Tag {
    let mut acc = ZERO_BLOCK;
    for c in ciphertexts {
        xor_in_place(&mut acc, &file_keyword_mac(k_mac, c, keyword));
    }
    acc
}

/// Boolean form of [`check_result`].
pub fn sse_verify(
    k_mac: &Key,
    keyword: &str,
    counter: u64,
    ids: &[FileId],
    ciphertexts: &[Vec<u8>],
    proof: Option<&Proof>,
    now: u64,
    freshness_window: u64,
    checks: Checks,
) -> bool {
    check_result(
        k_mac,
        keyword,
        counter,
        ids,
        ciphertexts,
        proof,
        now,
        freshness_window,
        checks,
    )
    .is_ok()
}

#[derive(Clone, Debug)]
pub struct Owner {
    mode: Mode,
    keys: KeyBundle,
    table: HashMap<String, KeywordState>,
    bloom_params: BloomParams,
    bloom: Option<BloomFilter>,
    last_refresh: u64,
    last_timestamp: u64,
    users: BTreeSet<String>,
}

impl Owner {
    pub fn gen_key(config: OwnerConfig) -> Result<Self> {
        Self::gen_key_with_rng(config, &mut OsRng)
    }

    pub fn gen_key_with_rng<R: RngCore + CryptoRng>(config: OwnerConfig, rng: &mut R) -> Result<Self> {
        let bloom = match config.mode {
            Mode::Full => Some(BloomFilter::new(config.bloom)?),
            Mode::Basic => None,
        };
        Ok(Self {
            mode: config.mode,
            keys: KeyBundle::generate(rng),
            table: HashMap::new(),
            bloom_params: config.bloom,
            bloom,
            last_refresh: 0,
            last_timestamp: 0,
            users: BTreeSet::new(),
        })
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn keys(&self) -> &KeyBundle {
        &self.keys
    }

    pub fn group_key(&self) -> GroupKey {
        self.keys.group
    }

    pub fn bloom_params(&self) -> BloomParams {
        self.bloom_params
    }

    pub fn keyword_state(&self, keyword: &str) -> Option<KeywordState> {
        self.table.get(keyword).copied()
    }

    pub fn counter(&self, keyword: &str) -> Option<u64> {
        self.table.get(keyword).map(|s| s.counter)
    }

    pub fn keyword_count(&self) -> usize {
        self.table.len()
    }

    pub fn keywords(&self) -> impl Iterator<Item = (&str, &KeywordState)> {
        self.table.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn bloom(&self) -> Option<&BloomFilter> {
        self.bloom.as_ref()
    }

    pub fn last_refresh(&self) -> u64 {
        self.last_refresh
    }

    pub fn last_timestamp(&self) -> u64 {
        self.last_timestamp
    }

    pub fn users(&self) -> impl Iterator<Item = &str> {
        self.users.iter().map(String::as_str)
    }

    /// Encrypts `file` and builds one chain entry per keyword.
    pub fn add_file<S: AsRef<str>>(&mut self, file: &[u8], keywords: &[S], now: u64) -> Result<AddPayload> {
        if file.is_empty() {
            return Err(Error::usage("file must be non-empty"));
        }
        if keywords.is_empty() {
            return Err(Error::usage("file must carry at least one keyword"));
        }
        let mut seen = HashSet::with_capacity(keywords.len());
        for w in keywords {
            let w = w.as_ref();
            if w.is_empty() {
                return Err(Error::usage("empty keyword"));
            }
            if !seen.insert(w) {
                return Err(Error::usage(format!("duplicate keyword '{w}'")));
            }
        }

        let k = self.keys.k_prf;
        let ciphertext = se_encrypt(&self.keys.k_se, file)?;
        let mut entries = Vec::with_capacity(keywords.len());
        for w in keywords {
            let w = w.as_ref();
            let (prev_counter, prev_key, prev_gamma) = match self.table.get(w) {
                Some(s) => (s.counter, chain_key(&k, w, s.counter), s.gamma.unwrap_or(ZERO_BLOCK)),
                None => (0, ZERO_BLOCK, ZERO_BLOCK),
            };
            let counter = prev_counter + 1;
            let key = chain_key(&k, w, counter);
            let label = chain_label(&k, w, counter);
            let gamma = match self.mode {
                Mode::Full => {
                    let mut g = prev_gamma;
                    xor_in_place(&mut g, &file_keyword_mac(&self.keys.k_mac, &ciphertext, w));
                    Some(g)
                }
                Mode::Basic => None,
            };
            let link = ChainLink {
                prev_label: chain_label(&k, w, prev_counter),
                prev_key,
                gamma,
            };
            let masked = mask_entry(self.mode, &key, &label, &link);
            if let Some(bf) = self.bloom.as_mut() {
                bf.add(&label);
            }
            self.table.insert(w.to_owned(), KeywordState { counter, gamma });
            entries.push(IndexEntry { label, masked });
        }

        let auth = self.bloom.as_ref().map(|bf| FilterAuth {
            sigma: filter_authenticator_of(&self.keys.k_mac, bf, now),
            timestamp: now,
        });
        self.last_timestamp = self.last_timestamp.max(now);
        Ok(AddPayload {
            file_id: FileId::random(),
            ciphertext,
            entries,
            auth,
        })
    }

    /// Search token for the latest counter of `keyword`.
    pub fn gen_token(&self, keyword: &str) -> Result<SearchToken> {
        let state = self
            .table
            .get(keyword)
            .ok_or_else(|| Error::NotFound(format!("keyword '{keyword}' was never added")))?;
        let label = chain_label(&self.keys.k_prf, keyword, state.counter);
        let key = chain_key(&self.keys.k_prf, keyword, state.counter);
        Ok(match self.mode {
            Mode::Basic => SearchToken::Plain { label, key },
            Mode::Full => SearchToken::seal(&self.keys.group, &label, &key),
        })
    }

    /// Verifies a result against the owner's own counter.
    pub fn verify(
        &self,
        keyword: &str,
        ids: &[FileId],
        ciphertexts: &[Vec<u8>],
        proof: Option<&Proof>,
        now: u64,
        freshness_window: u64,
        checks: Checks,
    ) -> std::result::Result<(), VerifyFailure> {
        let counter = self.counter(keyword).unwrap_or(0);
        check_result(
            &self.keys.k_mac,
            keyword,
            counter,
            ids,
            ciphertexts,
            proof,
            now,
            freshness_window,
            checks,
        )
    }

    /// Hands the long-term keys and the current group key to a new user.
    pub fn grant_user(&mut self, name: &str) -> UserCredentials {
        self.users.insert(name.to_owned());
        UserCredentials {
            name: name.to_owned(),
            k_prf: self.keys.k_prf,
            k_se: self.keys.k_se,
            k_mac: self.keys.k_mac,
            group: self.keys.group,
            max_counter: DEFAULT_MAX_COUNTER,
        }
    }

    pub fn rotate_group_key(&mut self, revoked: &str) -> Rotation {
        self.rotate_group_key_with_rng(revoked, &mut OsRng)
    }

    pub fn rotate_group_key_with_rng<R: RngCore + CryptoRng>(&mut self, revoked: &str, rng: &mut R) -> Rotation {
        self.users.remove(revoked);
        self.keys.group = GroupKey::generate(self.keys.group.epoch + 1, rng);
        Rotation {
            group: self.keys.group,
            revoked: revoked.to_owned(),
            recipients: self.users.iter().cloned().collect(),
        }
    }

    /// Replaces the owner filter with one holding only the digit
    /// embeddings of every current counter.
    pub fn refresh_bloom(&mut self, now: u64) -> Result<RefreshPayload> {
        if self.mode != Mode::Full {
            return Err(Error::Unsupported("bloom refresh requires full mode"));
        }
        let mut bf = BloomFilter::new(self.bloom_params)?;
        let mut words: Vec<_> = self.table.iter().collect();
        words.sort_by(|a, b| a.0.cmp(b.0));
        for (w, s) in words {
            bf.embed_counter(&self.keys.k_prf, w, s.counter)?;
        }
        let bytes = bf.to_bytes();
        let auth = FilterAuth {
            sigma: filter_authenticator(&self.keys.k_mac, &bytes, now),
            timestamp: now,
        };
        self.bloom = Some(bf);
        self.last_refresh = now;
        self.last_timestamp = self.last_timestamp.max(now);
        Ok(RefreshPayload { bloom: bytes, auth })
    }

    /// Size of the keyword table in the snapshot encoding.
    pub fn table_bytes(&self) -> usize {
        4 + self
            .table
            .keys()
            .map(|w| table_entry_bytes(self.mode, w.len()))
            .sum::<usize>()
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer::with_capacity(self.table_bytes() + 256);
        w.raw(SNAPSHOT_MAGIC).u8(self.mode.to_byte());
        w.raw(&self.keys.k_prf).raw(&self.keys.k_se).raw(&self.keys.k_mac);
        w.u64(self.keys.group.epoch).raw(&self.keys.group.key);
        w.u64(self.bloom_params.target_fp.to_bits()).u64(self.bloom_params.capacity);
        w.u64(self.last_refresh).u64(self.last_timestamp);
        w.u32(self.users.len() as u32);
        for u in &self.users {
            w.var(u.as_bytes());
        }
        let mut words: Vec<_> = self.table.iter().collect();
        words.sort_by(|a, b| a.0.cmp(b.0));
        w.u32(words.len() as u32);
        for (kw, s) in words {
            w.var(kw.as_bytes()).u64(s.counter);
            if self.mode == Mode::Full {
                w.raw(&s.gamma.unwrap_or(ZERO_BLOCK));
            }
        }
        match &self.bloom {
            Some(bf) => {
                w.u8(1).var(&bf.to_bytes()).u64(bf.n_inserted());
            }
            None => {
                w.u8(0);
            }
        }
        w.finish()
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader::new(bytes);
        if r.take(SNAPSHOT_MAGIC.len())? != SNAPSHOT_MAGIC {
            return Err(Error::format(0, "not an owner snapshot"));
        }
        let at = r.offset();
        let mode = Mode::from_byte(r.u8()?, at)?;
        let k_prf = r.array()?;
        let k_se = r.array()?;
        let k_mac = r.array()?;
        let group = GroupKey {
            epoch: r.u64()?,
            key: r.array()?,
        };
        let bloom_params = BloomParams::new(f64::from_bits(r.u64()?), r.u64()?);
        let last_refresh = r.u64()?;
        let last_timestamp = r.u64()?;
        let n_users = r.count(4)?;
        let mut users = BTreeSet::new();
        for _ in 0..n_users {
            users.insert(utf8(r.var()?, r.offset())?);
        }
        let n_words = r.count(12)?;
        let mut table = HashMap::with_capacity(n_words);
        for _ in 0..n_words {
            let kw = utf8(r.var()?, r.offset())?;
            let counter = r.u64()?;
            let gamma = match mode {
                Mode::Full => Some(r.array()?),
                Mode::Basic => None,
            };
            table.insert(kw, KeywordState { counter, gamma });
        }
        let bloom = match r.u8()? {
            0 => None,
            _ => {
                let mut bf = BloomFilter::from_bytes(r.var()?)?;
                bf.set_inserted(r.u64()?);
                Some(bf)
            }
        };
        r.finish()?;
        Ok(Self {
            mode,
            keys: KeyBundle {
                k_prf,
                k_se,
                k_mac,
                group,
            },
            table,
            bloom_params,
            bloom,
            last_refresh,
            last_timestamp,
            users,
        })
    }
}

const SNAPSHOT_MAGIC: &[u8] = b"DSSEOWN1";

/// Encoded size of one keyword-table row: `len ∥ w ∥ cnt [∥ γ]`.
pub fn table_entry_bytes(mode: Mode, keyword_len: usize) -> usize {
    4 + keyword_len + 8 + if mode == Mode::Full { 16 } else { 0 }
}

fn utf8(bytes: &[u8], offset: usize) -> Result<String> {
    String::from_utf8(bytes.to_vec()).map_err(|_| Error::format(offset, "invalid UTF-8"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chain::unmask_entry;
    use crate::crypto::se_decrypt;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn owner(mode: Mode) -> Owner {
        let cfg = OwnerConfig::new(mode).with_bloom(BloomParams::new(2f64.powi(-30), 1_000));
        Owner::gen_key_with_rng(cfg, &mut ChaCha8Rng::seed_from_u64(9)).unwrap()
    }

    #[test]
    fn gen_key_is_fresh_and_random() {
        let a = Owner::gen_key(OwnerConfig::new(Mode::Basic)).unwrap();
        let b = Owner::gen_key(OwnerConfig::new(Mode::Basic)).unwrap();
        assert_ne!(a.keys().k_prf, b.keys().k_prf);
        assert_eq!(a.keyword_count(), 0);
        assert_eq!(a.group_key().epoch, 1);
        assert!(a.bloom().is_none());
        assert_eq!(a.mode(), Mode::Basic);
    }

    #[test]
    fn first_entry_chains_to_counter_zero_with_zero_key() {
        for mode in [Mode::Basic, Mode::Full] {
            let mut o = owner(mode);
            let p = o.add_file(b"f1", &["heartbeat:75"], 10).unwrap();
            let k = o.keys().k_prf;
            let key1 = chain_key(&k, "heartbeat:75", 1);
            let link = unmask_entry(mode, &key1, &p.entries[0].label, &p.entries[0].masked).unwrap();
            assert_eq!(p.entries[0].label, chain_label(&k, "heartbeat:75", 1));
            assert_eq!(link.prev_label, chain_label(&k, "heartbeat:75", 0));
            assert_eq!(link.prev_key, ZERO_BLOCK);
        }
    }

    #[test]
    fn second_entry_unmasks_to_first() {
        let mut o = owner(Mode::Full);
        let p1 = o.add_file(b"f1", &["w"], 10).unwrap();
        let p2 = o.add_file(b"f2", &["w"], 20).unwrap();
        let k = o.keys().k_prf;
        assert_ne!(p1.entries[0].label, p2.entries[0].label);
        let link = unmask_entry(Mode::Full, &chain_key(&k, "w", 2), &p2.entries[0].label, &p2.entries[0].masked).unwrap();
        assert_eq!(link.prev_label, p1.entries[0].label);
        assert_eq!(link.prev_key, chain_key(&k, "w", 1));
        let expected = aggregate_for(&o.keys().k_mac, "w", &[p1.ciphertext.clone(), p2.ciphertext.clone()]);
        assert_eq!(link.gamma, Some(expected));
        assert_eq!(o.keyword_state("w").unwrap().gamma, Some(expected));
    }

    #[test]
    fn fifteen_keywords_give_fifteen_entries() {
        let mut o = owner(Mode::Full);
        let kws: Vec<String> = (0..15).map(|i| format!("attr{i}:1")).collect();
        let p = o.add_file(b"phi", &kws, 1).unwrap();
        assert_eq!(p.entries.len(), 15);
        let labels: HashSet<_> = p.entries.iter().map(|e| e.label).collect();
        assert_eq!(labels.len(), 15);
        assert!(p.entries.iter().all(|e| e.masked.len() == 48));
        let auth = p.auth.unwrap();
        assert_eq!(auth.timestamp, 1);
        assert_eq!(
            auth.sigma,
            filter_authenticator(&o.keys().k_mac, &o.bloom().unwrap().to_bytes(), 1)
        );
    }

    #[test]
    fn add_file_rejects_bad_input() {
        let mut o = owner(Mode::Basic);
        assert!(matches!(o.add_file(b"f", &["a", "a"], 1), Err(Error::Usage(_))));
        assert!(matches!(o.add_file(b"f", &[""], 1), Err(Error::Usage(_))));
        assert!(matches!(o.add_file(b"", &["a"], 1), Err(Error::Usage(_))));
        assert!(matches!(o.add_file::<&str>(b"f", &[], 1), Err(Error::Usage(_))));
        assert_eq!(o.keyword_count(), 0);
    }

    #[test]
    fn owner_token_contents() {
        let mut o = owner(Mode::Full);
        for i in 0..3 {
            o.add_file(format!("f{i}").as_bytes(), &["w"], i).unwrap();
        }
        let k = o.keys().k_prf;
        match o.gen_token("w").unwrap() {
            SearchToken::Sealed { epoch, body } => {
                assert_eq!(epoch, 1);
                let pt = se_decrypt(&o.group_key().key, &body).unwrap();
                assert_eq!(&pt[..16], &chain_label(&k, "w", 3));
                assert_eq!(&pt[16..], &chain_key(&k, "w", 3));
            }
            other => panic!("expected sealed token, got {other:?}"),
        }
        assert!(matches!(o.gen_token("nope"), Err(Error::NotFound(_))));

        let mut b = owner(Mode::Basic);
        b.add_file(b"f", &["w"], 0).unwrap();
        let kb = b.keys().k_prf;
        assert_eq!(
            b.gen_token("w").unwrap(),
            SearchToken::Plain {
                label: chain_label(&kb, "w", 1),
                key: chain_key(&kb, "w", 1)
            }
        );
    }

    #[test]
    fn rotation_increments_epoch_and_drops_user() {
        let mut o = owner(Mode::Full);
        o.grant_user("alice");
        o.grant_user("bob");
        let before = o.group_key();
        let rot = o.rotate_group_key("alice");
        assert_eq!(rot.group.epoch, before.epoch + 1);
        assert_ne!(rot.group.key, before.key);
        assert_eq!(rot.recipients, vec!["bob".to_string()]);
        assert_eq!(o.rotate_group_key("bob").group.epoch, before.epoch + 2);
    }

    #[test]
    fn refresh_embeds_current_counters() {
        let mut o = owner(Mode::Full);
        for i in 0..12u64 {
            let mut kws = vec!["a"];
            if i % 3 == 0 {
                kws.push("b");
            }
            o.add_file(b"x", &kws, i).unwrap();
        }
        let payload = o.refresh_bloom(100).unwrap();
        let bf = o.bloom().unwrap();
        // "a" = 12 (two digits) + "b" = 4 (one digit)
        assert_eq!(bf.n_inserted(), 3);
        assert_eq!(payload.bloom, bf.to_bytes());
        assert_eq!(bf.extract_counter(&o.keys().k_prf, "a").unwrap(), Some(12));
        assert_eq!(bf.extract_counter(&o.keys().k_prf, "b").unwrap(), Some(4));
        assert!(!bf.contains(&chain_label(&o.keys().k_prf, "a", 12)));
        o.add_file(b"y", &["a"], 101).unwrap();
        assert!(o.bloom().unwrap().contains(&chain_label(&o.keys().k_prf, "a", 13)));
        assert!(matches!(owner(Mode::Basic).refresh_bloom(1), Err(Error::Unsupported(_))));
    }

    #[test]
    fn snapshot_round_trip() {
        let mut o = owner(Mode::Full);
        o.grant_user("alice");
        o.add_file(b"f", &["a", "b"], 5).unwrap();
        let bytes = o.to_bytes();
        let back = Owner::from_bytes(&bytes).unwrap();
        assert_eq!(back.to_bytes(), bytes);
        assert_eq!(back.counter("a"), Some(1));
        assert_eq!(back.bloom().unwrap().n_inserted(), 2);
        assert!(Owner::from_bytes(&bytes[..bytes.len() - 1]).is_err());
        assert_eq!(o.table_bytes(), 4 + 2 * (4 + 1 + 8 + 16));
    }

    #[test]
    fn verify_checks_in_order() {
        let k = [1u8; 16];
        let cts = vec![b"c1".to_vec(), b"c2".to_vec()];
        let ids = vec![FileId([1; 16]), FileId([2; 16])];
        let bloom = vec![0, 0, 0, 8, 0, 0, 0, 1, 0];
        let proof = Proof {
            bloom: crate::protocol::BloomTriple {
                sigma: filter_authenticator(&k, &bloom, 50),
                bloom,
                timestamp: 50,
            },
            gamma: aggregate_for(&k, "w", &cts),
        };
        let run = |cnt, ids: &[FileId], cts: &[Vec<u8>], p: Option<&Proof>, now| {
            check_result(&k, "w", cnt, ids, cts, p, now, 100, Checks::Full)
        };
        assert_eq!(run(2, &ids, &cts, Some(&proof), 60), Ok(()));
        assert_eq!(run(2, &ids, &cts, None, 60), Err(VerifyFailure::MissingProof));
        assert_eq!(run(2, &ids[..1], &cts, Some(&proof), 60), Err(VerifyFailure::Shape));
        assert_eq!(run(3, &ids, &cts, Some(&proof), 60), Err(VerifyFailure::Cardinality));
        assert_eq!(
            check_result(&k, "v", 2, &ids, &cts, Some(&proof), 60, 100, Checks::Full),
            Err(VerifyFailure::AggregateMac)
        );
        let mut bad = proof.clone();
        bad.bloom.bloom[8] = 1;
        assert_eq!(run(2, &ids, &cts, Some(&bad), 60), Err(VerifyFailure::FilterMac));
        assert_eq!(
            check_result(&k, "w", 2, &ids, &cts, Some(&bad), 60, 100, Checks::CounterKnown),
            Ok(())
        );
        assert_eq!(run(2, &ids, &cts, Some(&proof), 151), Err(VerifyFailure::Stale));
    }
}
