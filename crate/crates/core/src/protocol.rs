//! Protocol objects exchanged between owner, server and users.

use std::fmt;

use crate::bloom::BloomFilter;
use crate::crypto::{mac_parts, se_decrypt, se_encrypt, GroupKey, Key, Label, Tag, LAMBDA};
use crate::error::{Error, Result};

/// Opaque 16-byte file identifier (a random v4 UUID).
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct FileId(pub [u8; 16]);

impl FileId {
    pub fn random() -> Self {
        FileId(uuid::Uuid::new_v4().into_bytes())
    }
}

impl fmt::Display for FileId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", uuid::Uuid::from_bytes(self.0))
    }
}

impl fmt::Debug for FileId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "FileId({self})")
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct IndexEntry {
    pub label: Label,
    /// 2λ bytes in basic mode, 3λ in full mode.
    pub masked: Vec<u8>,
}

/// `(σ, T)`: the owner's MAC over its filter and the upload timestamp.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct FilterAuth {
    pub sigma: Tag,
    pub timestamp: u64,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AddPayload {
    pub file_id: FileId,
    pub ciphertext: Vec<u8>,
    pub entries: Vec<IndexEntry>,
    /// Present in full mode only.
    pub auth: Option<FilterAuth>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RefreshPayload {
    pub bloom: Vec<u8>,
    pub auth: FilterAuth,
}

/// `σ = Mac(K_Mac, BF ∥ T)` with `T` as 8 big-endian bytes.
pub fn filter_authenticator(k_mac: &Key, bloom_bytes: &[u8], timestamp: u64) -> Tag {
    mac_parts(k_mac, &[bloom_bytes, &timestamp.to_be_bytes()]).expect("fixed-size key")
}

/// [`filter_authenticator`] computed over a filter without serializing it.
pub fn filter_authenticator_of(k_mac: &Key, bloom: &BloomFilter, timestamp: u64) -> Tag {
    let (header, bits) = bloom.canonical_parts();
    mac_parts(k_mac, &[&header, bits, &timestamp.to_be_bytes()]).expect("fixed-size key")
}

/// A serialized filter together with its authenticator, as served by
/// `GET_BLOOM` and embedded in every full-mode proof.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BloomTriple {
    pub bloom: Vec<u8>,
    pub sigma: Tag,
    pub timestamp: u64,
}

impl BloomTriple {
    pub fn authentic(&self, k_mac: &Key) -> bool {
        filter_authenticator(k_mac, &self.bloom, self.timestamp) == self.sigma
    }

    pub fn fresh(&self, now: u64, window: u64) -> bool {
        now.saturating_sub(self.timestamp) <= window
    }

    pub fn filter(&self) -> Result<BloomFilter> {
        BloomFilter::from_bytes(&self.bloom)
    }
}

/// `(σ, T, BF_s, γ_cnt)`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Proof {
    pub bloom: BloomTriple,
    pub gamma: Tag,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SearchResponse {
    /// Newest first.
    pub ids: Vec<FileId>,
    pub ciphertexts: Vec<Vec<u8>>,
    pub proof: Option<Proof>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum SearchToken {
    /// Basic mode: `(τ_cnt, K_cnt)` sent as is.
    Plain { label: Label, key: Key },
    /// Full mode: `SE.Enc(r, τ_cnt ∥ K_cnt)` tagged with the epoch of `r`.
    Sealed { epoch: u64, body: Vec<u8> },
}

impl SearchToken {
    pub fn seal(group: &GroupKey, label: &Label, key: &Key) -> Self {
        let mut pt = [0u8; 2 * LAMBDA];
        pt[..LAMBDA].copy_from_slice(label);
        pt[LAMBDA..].copy_from_slice(key);
        SearchToken::Sealed {
            epoch: group.epoch,
            body: se_encrypt(&group.key, &pt).expect("fixed-size key"),
        }
    }

    /// Recovers `(τ, K)`. Sealed tokens are checked against the epoch
    /// before any decryption is attempted.
    pub fn open(&self, group: Option<&GroupKey>) -> Result<(Label, Key)> {
        match self {
            SearchToken::Plain { label, key } => Ok((*label, *key)),
            SearchToken::Sealed { epoch, body } => {
                let group = group.ok_or(Error::Unsupported("no group key installed"))?;
                if *epoch != group.epoch {
                    return Err(Error::StaleEpoch {
                        got: *epoch,
                        current: group.epoch,
                    });
                }
                let pt = se_decrypt(&group.key, body)?;
                if pt.len() != 2 * LAMBDA {
                    return Err(Error::Decryption);
                }
                Ok((
                    pt[..LAMBDA].try_into().unwrap(),
                    pt[LAMBDA..].try_into().unwrap(),
                ))
            }
        }
    }
}
