//! Keyed primitives with fixed output widths.
//!
//! Every PRF and MAC input that carries a keyword goes through
//! [`CanonicalInput`], whose encoding is injective across the three
//! domains (chain labels, chain-key derivation, counter-digit embedding).

use aes_gcm::aead::{Aead, KeyInit};
use aes_gcm::{Aes128Gcm, Nonce};
use hmac::{Hmac, Mac};
use rand::{CryptoRng, RngCore};
use sha2::{Digest, Sha256, Sha512};

use crate::error::{Error, Result};

/// Security parameter in bytes (128 bits).
pub const LAMBDA: usize = 16;

const NONCE_LEN: usize = 12;

/// A λ-byte secret key.
pub type Key = [u8; LAMBDA];
/// A λ-byte PRF output used as an index label (τ).
pub type Label = [u8; LAMBDA];
/// A λ-byte MAC tag.
pub type Tag = [u8; LAMBDA];

pub const ZERO_BLOCK: [u8; LAMBDA] = [0u8; LAMBDA];

/// The shared group key that wraps search tokens, versioned by epoch.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct GroupKey {
    pub epoch: u64,
    pub key: Key,
}

impl GroupKey {
    pub fn generate<R: RngCore + CryptoRng>(epoch: u64, rng: &mut R) -> Self {
        Self {
            epoch,
            key: random_key(rng),
        }
    }
}

/// The owner's secret material plus the current group key.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct KeyBundle {
    pub k_prf: Key,
    pub k_se: Key,
    pub k_mac: Key,
    pub group: GroupKey,
}

impl KeyBundle {
    pub fn generate<R: RngCore + CryptoRng>(rng: &mut R) -> Self {
        Self {
            k_prf: random_key(rng),
            k_se: random_key(rng),
            k_mac: random_key(rng),
            group: GroupKey::generate(1, rng),
        }
    }
}

pub fn random_key<R: RngCore + CryptoRng>(rng: &mut R) -> Key {
    let mut k = [0u8; LAMBDA];
    rng.fill_bytes(&mut k);
    k
}

/// Domain-separated PRF input: `tag ∥ len(w) ∥ w ∥ payload`, all integers
/// big-endian.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CanonicalInput<'a> {
    /// `w ∥ cnt`, the preimage of a chain label.
    ChainLabel { keyword: &'a str, counter: u64 },
    /// `w ∥ cnt`, hashed and then fed to the PRF to derive the chain key.
    KeyDerivation { keyword: &'a str, counter: u64 },
    /// `w ∥ pos ∥ digit` for counter embedding after a filter refresh.
    DigitEmbedding { keyword: &'a str, pos: u32, digit: u32 },
}

impl CanonicalInput<'_> {
    pub const TAG_CHAIN_LABEL: u8 = 0x01;
    pub const TAG_KEY_DERIVATION: u8 = 0x02;
    pub const TAG_DIGIT_EMBEDDING: u8 = 0x03;

    pub fn encode(&self) -> Vec<u8> {
        let (tag, keyword, payload) = match *self {
            CanonicalInput::ChainLabel { keyword, counter } => {
                (Self::TAG_CHAIN_LABEL, keyword, counter.to_be_bytes())
            }
            CanonicalInput::KeyDerivation { keyword, counter } => {
                (Self::TAG_KEY_DERIVATION, keyword, counter.to_be_bytes())
            }
            CanonicalInput::DigitEmbedding {
                keyword,
                pos,
                digit,
            } => {
                let mut p = [0u8; 8];
                p[..4].copy_from_slice(&pos.to_be_bytes());
                p[4..].copy_from_slice(&digit.to_be_bytes());
                (Self::TAG_DIGIT_EMBEDDING, keyword, p)
            }
        };
        let kw = keyword.as_bytes();
        let len = u32::try_from(kw.len()).expect("keyword longer than u32::MAX");
        let mut out = Vec::with_capacity(1 + 4 + kw.len() + 8);
        out.push(tag);
        out.extend_from_slice(&len.to_be_bytes());
        out.extend_from_slice(kw);
        out.extend_from_slice(&payload);
        out
    }
}

fn check_key(key: &[u8]) -> Result<()> {
    if key.len() != LAMBDA {
        return Err(Error::usage(format!(
            "key must be {LAMBDA} bytes, got {}",
            key.len()
        )));
    }
    Ok(())
}

fn hmac_sha256(key: &[u8], msg: &[u8]) -> Result<[u8; 32]> {
    check_key(key)?;
    let mut mac = <Hmac<Sha256> as Mac>::new_from_slice(key).expect("hmac accepts any key length");
    mac.update(msg);
    Ok(mac.finalize().into_bytes().into())
}

fn hmac_sha512(key: &[u8], msg: &[u8]) -> Result<[u8; 64]> {
    check_key(key)?;
    let mut mac = <Hmac<Sha512> as Mac>::new_from_slice(key).expect("hmac accepts any key length");
    mac.update(msg);
    Ok(mac.finalize().into_bytes().into())
}

/// F1: λ-byte PRF (HMAC-SHA-256, truncated).
pub fn prf1(key: &[u8], msg: &[u8]) -> Result<[u8; LAMBDA]> {
    let full = hmac_sha256(key, msg)?;
    Ok(full[..LAMBDA].try_into().unwrap())
}

/// F2: 2λ-byte PRF (HMAC-SHA-512, truncated).
pub fn prf2(key: &[u8], msg: &[u8]) -> Result<[u8; 2 * LAMBDA]> {
    let full = hmac_sha512(key, msg)?;
    Ok(full[..2 * LAMBDA].try_into().unwrap())
}

/// F3: 3λ-byte PRF (HMAC-SHA-512, truncated).
pub fn prf3(key: &[u8], msg: &[u8]) -> Result<[u8; 3 * LAMBDA]> {
    let full = hmac_sha512(key, msg)?;
    Ok(full[..3 * LAMBDA].try_into().unwrap())
}

/// H: SHA-256 truncated to λ bytes.
pub fn hash(msg: &[u8]) -> [u8; LAMBDA] {
    let d = Sha256::digest(msg);
    d[..LAMBDA].try_into().unwrap()
}

/// MAC generation (HMAC-SHA-256, truncated to λ bytes).
pub fn mac_generate(key: &[u8], msg: &[u8]) -> Result<Tag> {
    prf1(key, msg)
}

/// MAC over the concatenation of several parts, without materializing it.
pub fn mac_parts(key: &[u8], parts: &[&[u8]]) -> Result<Tag> {
    check_key(key)?;
    let mut mac = <Hmac<Sha256> as Mac>::new_from_slice(key).expect("hmac accepts any key length");
    for p in parts {
        mac.update(p);
    }
    let full: [u8; 32] = mac.finalize().into_bytes().into();
    Ok(full[..LAMBDA].try_into().unwrap())
}

/// XOR-fold of λ-byte tags. The empty aggregate is `0^λ`.
pub fn aggregate_mac<T: AsRef<[u8]>>(tags: &[T]) -> Result<Tag> {
    let mut acc = ZERO_BLOCK;
    for t in tags {
        let t = t.as_ref();
        if t.len() != LAMBDA {
            return Err(Error::usage(format!(
                "aggregate tag must be {LAMBDA} bytes, got {}",
                t.len()
            )));
        }
        xor_in_place(&mut acc, t);
    }
    Ok(acc)
}

pub fn xor_in_place(acc: &mut [u8], other: &[u8]) {
    debug_assert_eq!(acc.len(), other.len());
    acc.iter_mut().zip(other).for_each(|(a, b)| *a ^= b);
}

/// Authenticated encryption (AES-128-GCM) with a fresh random nonce,
/// output as `nonce ∥ ciphertext ∥ tag`.
pub fn se_encrypt(key: &[u8], plaintext: &[u8]) -> Result<Vec<u8>> {
    se_encrypt_with_rng(key, plaintext, &mut rand::thread_rng())
}

pub fn se_encrypt_with_rng<R: RngCore + CryptoRng>(
    key: &[u8],
    plaintext: &[u8],
    rng: &mut R,
) -> Result<Vec<u8>> {
    check_key(key)?;
    let cipher = Aes128Gcm::new_from_slice(key).expect("key length checked");
    let mut nonce = [0u8; NONCE_LEN];
    rng.fill_bytes(&mut nonce);
    let ct = cipher
        .encrypt(Nonce::from_slice(&nonce), plaintext)
        .map_err(|_| Error::usage("plaintext too long for AES-GCM"))?;
    let mut out = Vec::with_capacity(NONCE_LEN + ct.len());
    out.extend_from_slice(&nonce);
    out.extend_from_slice(&ct);
    Ok(out)
}

pub fn se_decrypt(key: &[u8], ciphertext: &[u8]) -> Result<Vec<u8>> {
    check_key(key)?;
    if ciphertext.len() < NONCE_LEN {
        return Err(Error::Decryption);
    }
    let cipher = Aes128Gcm::new_from_slice(key).expect("key length checked");
    let (nonce, body) = ciphertext.split_at(NONCE_LEN);
    cipher
        .decrypt(Nonce::from_slice(nonce), body)
        .map_err(|_| Error::Decryption)
}

/// τ_cnt = F1(K, w ∥ cnt).
pub fn chain_label(k_prf: &Key, keyword: &str, counter: u64) -> Label {
    let input = CanonicalInput::ChainLabel { keyword, counter }.encode();
    prf1(k_prf, &input).expect("fixed-size key")
}

/// K_cnt = F1(K, H(w ∥ cnt)).
pub fn chain_key(k_prf: &Key, keyword: &str, counter: u64) -> Key {
    let input = CanonicalInput::KeyDerivation { keyword, counter }.encode();
    prf1(k_prf, &hash(&input)).expect("fixed-size key")
}

/// F1(K, w ∥ pos ∥ digit).
pub fn digit_element(k_prf: &Key, keyword: &str, pos: u32, digit: u32) -> [u8; LAMBDA] {
    let input = CanonicalInput::DigitEmbedding {
        keyword,
        pos,
        digit,
    }
    .encode();
    prf1(k_prf, &input).expect("fixed-size key")
}

/// Per-file keyword MAC, `Mac(K_Mac, C ∥ w)`.
pub fn file_keyword_mac(k_mac: &Key, ciphertext: &[u8], keyword: &str) -> Tag {
    mac_parts(k_mac, &[ciphertext, keyword.as_bytes()]).expect("fixed-size key")
}
