//! Authorized-user logic: recover a keyword's counter from the server's
//! filter, build tokens without the owner, verify and decrypt results.

use serde::Serialize;

use crate::bloom::{num_digits, BloomFilter};
use crate::codec::{Reader, Writer};
use crate::crypto::{chain_key, chain_label, se_decrypt, GroupKey, Key};
use crate::error::{Error, Result};
use crate::owner::{check_result, Checks, VerifyFailure};
use crate::protocol::{BloomTriple, FileId, Proof, SearchToken};

/// Keys handed to a user by the owner.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct UserCredentials {
    pub name: String,
    pub k_prf: Key,
    pub k_se: Key,
    pub k_mac: Key,
    pub group: GroupKey,
    /// Upper bound on counters the guess will consider.
    pub max_counter: u64,
}

impl UserCredentials {
    /// Accepts a new group key delivered after a rotation.
    pub fn install_group_key(&mut self, group: GroupKey) {
        self.group = group;
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer::new();
        w.raw(CREDENTIALS_MAGIC)
            .var(self.name.as_bytes())
            .raw(&self.k_prf)
            .raw(&self.k_se)
            .raw(&self.k_mac)
            .u64(self.group.epoch)
            .raw(&self.group.key)
            .u64(self.max_counter);
        w.finish()
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader::new(bytes);
        if r.take(CREDENTIALS_MAGIC.len())? != CREDENTIALS_MAGIC {
            return Err(Error::format(0, "not a credentials file"));
        }
        let at = r.offset();
        let name = String::from_utf8(r.var()?.to_vec()).map_err(|_| Error::format(at, "user name is not UTF-8"))?;
        let creds = Self {
            name,
            k_prf: r.array()?,
            k_se: r.array()?,
            k_mac: r.array()?,
            group: GroupKey {
                epoch: r.u64()?,
                key: r.array()?,
            },
            max_counter: r.u64()?,
        };
        r.finish()?;
        Ok(creds)
    }
}

const CREDENTIALS_MAGIC: &[u8] = b"DSSEUSR1";

/// Outcome of a counter guess, with probe instrumentation.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
pub struct CounterGuess {
    pub counter: Option<u64>,
    /// Counter recovered from digit embeddings (0 when none were found).
    pub base: u64,
    /// Filter probes spent on digit extraction.
    pub extraction_probes: u32,
    /// Digit positions probed, including the terminating one.
    pub digit_positions: u32,
    /// Filter probes spent on the bracket and binary search.
    pub search_probes: u32,
}

impl CounterGuess {
    pub fn total_probes(&self) -> u32 {
        self.extraction_probes + self.search_probes
    }

    /// The largest probe count the guess is allowed for its result:
    /// `2·ceil(log2(distance + 2)) + 10·positions`.
    pub fn probe_budget(&self) -> u32 {
        let distance = self.counter.unwrap_or(self.base).saturating_sub(self.base);
        2 * ceil_log2(distance + 2) + 10 * self.digit_positions
    }
}

fn ceil_log2(n: u64) -> u32 {
    64 - (n - 1).leading_zeros()
}

/// Finds the largest `c` with `τ_c` in the filter, starting above any
/// counter embedded by the last refresh.
///
/// Probes `base+1, base+2, base+4, …` until a miss, then binary-searches
/// the last gap. Counters are consecutive, so the first miss bounds the
/// answer.
pub fn guess_counter(bf: &BloomFilter, k_prf: &Key, keyword: &str, max_counter: u64) -> Result<CounterGuess> {
    let extraction = bf.extract_counter_counted(k_prf, keyword)?;
    let base = extraction.value.unwrap_or(0);
    let mut guess = CounterGuess {
        counter: None,
        base,
        extraction_probes: extraction.probes,
        digit_positions: extraction.positions,
        search_probes: 0,
    };
    if base >= max_counter {
        return Err(Error::BoundExceeded(max_counter));
    }
    let mut probe = |c: u64| {
        guess.search_probes += 1;
        bf.contains(&chain_label(k_prf, keyword, c))
    };

    // `lo` is known present (or the base), `hi` known absent.
    let mut lo = base;
    let mut step = 1u64;
    let hi = loop {
        let c = base.saturating_add(step).min(max_counter);
        if !probe(c) {
            break c;
        }
        if c == max_counter {
            return Err(Error::BoundExceeded(max_counter));
        }
        lo = c;
        step = step.saturating_mul(2);
    };
    let mut hi = hi;
    while hi - lo > 1 {
        let mid = lo + (hi - lo) / 2;
        if probe(mid) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    guess.counter = (lo > 0).then_some(lo);
    Ok(guess)
}

/// Sealed token for `keyword` at an explicit counter.
pub fn token_for(creds: &UserCredentials, keyword: &str, counter: u64) -> SearchToken {
    SearchToken::seal(
        &creds.group,
        &chain_label(&creds.k_prf, keyword, counter),
        &chain_key(&creds.k_prf, keyword, counter),
    )
}

/// Checks the filter's authenticator and freshness, guesses the counter
/// and builds a token. Returns the token and the guess behind it.
pub fn gen_token_user(
    creds: &UserCredentials,
    triple: &BloomTriple,
    keyword: &str,
    now: u64,
    freshness_window: u64,
) -> Result<(SearchToken, CounterGuess)> {
    if !triple.authentic(&creds.k_mac) {
        return Err(Error::TamperedFilter);
    }
    if !triple.fresh(now, freshness_window) {
        return Err(Error::StaleFilter {
            timestamp: triple.timestamp,
            now,
        });
    }
    let bf = triple.filter()?;
    let guess = guess_counter(&bf, &creds.k_prf, keyword, creds.max_counter)?;
    let counter = guess
        .counter
        .ok_or_else(|| Error::NotFound(format!("keyword '{keyword}' is not in the filter")))?;
    Ok((token_for(creds, keyword, counter), guess))
}

/// Full verification against a guessed counter.
pub fn check_user_result(
    creds: &UserCredentials,
    keyword: &str,
    counter: u64,
    ids: &[FileId],
    ciphertexts: &[Vec<u8>],
    proof: Option<&Proof>,
    now: u64,
    freshness_window: u64,
) -> std::result::Result<(), VerifyFailure> {
    check_result(
        &creds.k_mac,
        keyword,
        counter,
        ids,
        ciphertexts,
        proof,
        now,
        freshness_window,
        Checks::Full,
    )
}

pub fn user_verify(
    creds: &UserCredentials,
    keyword: &str,
    counter: u64,
    ids: &[FileId],
    ciphertexts: &[Vec<u8>],
    proof: Option<&Proof>,
    now: u64,
    freshness_window: u64,
) -> bool {
    check_user_result(creds, keyword, counter, ids, ciphertexts, proof, now, freshness_window).is_ok()
}

pub fn user_decrypt(creds: &UserCredentials, ciphertexts: &[Vec<u8>]) -> Result<Vec<Vec<u8>>> {
    ciphertexts.iter().map(|c| se_decrypt(&creds.k_se, c)).collect()
}

/// Probe budget helper exposed for reports: digits of `n` plus the
/// terminating position.
pub fn digit_positions_for(n: u64) -> u32 {
    if n == 0 {
        1
    } else {
        num_digits(n) + 1
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bloom::BloomParams;
    use crate::chain::Mode;
    use crate::owner::{Owner, OwnerConfig};
    use crate::server::{Server, ServerConfig};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn setup() -> (Owner, Server, UserCredentials) {
        let params = BloomParams::new(2f64.powi(-30), 20_000);
        let mut owner = Owner::gen_key_with_rng(
            OwnerConfig::new(Mode::Full).with_bloom(params),
            &mut ChaCha8Rng::seed_from_u64(11),
        )
        .unwrap();
        let mut server = Server::new(ServerConfig::new(Mode::Full).with_bloom(params)).unwrap();
        server.install_group_key(owner.group_key()).unwrap();
        let creds = owner.grant_user("alice");
        (owner, server, creds)
    }

    fn add(owner: &mut Owner, server: &mut Server, kws: &[&str], t: u64) {
        let p = owner.add_file(format!("doc {t}").as_bytes(), kws, t).unwrap();
        server.add(p).unwrap();
    }

    #[test]
    fn ceil_log2_values() {
        assert_eq!(ceil_log2(1), 0);
        assert_eq!(ceil_log2(2), 1);
        assert_eq!(ceil_log2(3), 2);
        assert_eq!(ceil_log2(4), 2);
        assert_eq!(ceil_log2(1025), 11);
    }

    #[test]
    fn guess_matches_owner_within_budget() {
        let (mut o, mut s, creds) = setup();
        let mut t = 0;
        for target in [1u64, 5, 100, 4097] {
            let w = format!("k{target}");
            for _ in 0..target {
                t += 1;
                add(&mut o, &mut s, &[w.as_str()], t);
            }
            let g = guess_counter(s.bloom().unwrap(), &creds.k_prf, &w, creds.max_counter).unwrap();
            assert_eq!(g.counter, Some(target));
            assert_eq!(g.base, 0);
            assert!(g.total_probes() <= g.probe_budget(), "{g:?}");
        }
        let g = guess_counter(s.bloom().unwrap(), &creds.k_prf, "never", creds.max_counter).unwrap();
        assert_eq!(g.counter, None);
        assert_eq!(g.search_probes, 1);
    }

    #[test]
    fn post_refresh_guess_starts_from_embedding() {
        let (mut o, mut s, creds) = setup();
        for t in 1..=456 {
            add(&mut o, &mut s, &["hb:75"], t);
        }
        s.refresh(o.refresh_bloom(500).unwrap()).unwrap();
        let g = guess_counter(s.bloom().unwrap(), &creds.k_prf, "hb:75", creds.max_counter).unwrap();
        assert_eq!((g.counter, g.base, g.search_probes), (Some(456), 456, 1));
        for t in 501..505 {
            add(&mut o, &mut s, &["hb:75"], t);
        }
        let g = guess_counter(s.bloom().unwrap(), &creds.k_prf, "hb:75", creds.max_counter).unwrap();
        assert_eq!(g.counter, Some(460));
        assert_eq!(g.digit_positions, 4);
        assert!(g.total_probes() <= g.probe_budget());
    }

    #[test]
    fn bound_exceeded_at_max() {
        let (mut o, mut s, mut creds) = setup();
        for t in 1..=8 {
            add(&mut o, &mut s, &["w"], t);
        }
        creds.max_counter = 8;
        assert!(matches!(
            guess_counter(s.bloom().unwrap(), &creds.k_prf, "w", creds.max_counter),
            Err(Error::BoundExceeded(8))
        ));
        creds.max_counter = 9;
        let g = guess_counter(s.bloom().unwrap(), &creds.k_prf, "w", creds.max_counter).unwrap();
        assert_eq!(g.counter, Some(8));
    }

    #[test]
    fn user_token_equals_owner_token() {
        let (mut o, mut s, creds) = setup();
        for t in 1..=7 {
            add(&mut o, &mut s, &["a", "b"], t);
        }
        add(&mut o, &mut s, &["a"], 8);
        let triple = s.get_bloom().unwrap();
        for w in ["a", "b"] {
            let (tok, g) = gen_token_user(&creds, &triple, w, 8, 1200).unwrap();
            assert_eq!(Some(o.counter(w).unwrap()), g.counter);
            let group = o.group_key();
            assert_eq!(
                tok.open(Some(&group)).unwrap(),
                o.gen_token(w).unwrap().open(Some(&group)).unwrap()
            );
            let r = s.search(&tok).unwrap();
            assert!(user_verify(&creds, w, g.counter.unwrap(), &r.ids, &r.ciphertexts, r.proof.as_ref(), 8, 1200));
            let plain = user_decrypt(&creds, &r.ciphertexts).unwrap();
            assert_eq!(plain[0], format!("doc {}", if w == "a" { 8 } else { 7 }).into_bytes());
        }
        assert!(matches!(gen_token_user(&creds, &triple, "zzz", 8, 1200), Err(Error::NotFound(_))));
    }

    #[test]
    fn gate_rejects_tampered_or_stale_filter() {
        let (mut o, mut s, creds) = setup();
        add(&mut o, &mut s, &["a"], 100);
        let triple = s.get_bloom().unwrap();
        assert!(matches!(gen_token_user(&creds, &triple, "a", 1301, 1200), Err(Error::StaleFilter { .. })));
        let mut flipped = triple.clone();
        flipped.bloom[9] ^= 0x10;
        assert!(matches!(gen_token_user(&creds, &flipped, "a", 100, 1200), Err(Error::TamperedFilter)));
    }

    #[test]
    fn decrypt_rejects_tampering() {
        let (mut o, mut s, creds) = setup();
        add(&mut o, &mut s, &["a"], 1);
        let r = s.search(&o.gen_token("a").unwrap()).unwrap();
        let mut cts = r.ciphertexts.clone();
        let last = cts[0].len() - 1;
        cts[0][last] ^= 1;
        assert!(matches!(user_decrypt(&creds, &cts), Err(Error::Decryption)));
    }

    #[test]
    fn credentials_round_trip() {
        let (_, _, creds) = setup();
        let bytes = creds.to_bytes();
        assert_eq!(UserCredentials::from_bytes(&bytes).unwrap(), creds);
        assert!(UserCredentials::from_bytes(&bytes[..bytes.len() - 1]).is_err());
    }

    #[test]
    fn positions_helper() {
        assert_eq!(digit_positions_for(0), 1);
        assert_eq!(digit_positions_for(456), 4);
    }
}
