//! Masked chain entries linking the index entries of one keyword.
//!
//! Basic mode: `μ = ⟨τ_prev ∥ K_prev⟩ ⊕ F2(K_cnt, τ_cnt)` (2λ bytes).
//! Full mode:  `μ = ⟨τ_prev ∥ K_prev ∥ γ_cnt⟩ ⊕ F3(K_cnt, τ_cnt)` (3λ bytes).

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::crypto::{prf2, prf3, xor_in_place, Key, Label, Tag, LAMBDA};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    /// Forward privacy only; tokens are sent in the clear by the owner.
    Basic,
    /// Adds group-key token wrapping, aggregate MACs and the bloom filter
    /// proof.
    Full,
}

impl Mode {
    pub fn masked_len(self) -> usize {
        match self {
            Mode::Basic => 2 * LAMBDA,
            Mode::Full => 3 * LAMBDA,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Basic => "basic",
            Mode::Full => "full",
        }
    }

    pub(crate) fn to_byte(self) -> u8 {
        match self {
            Mode::Basic => 0x01,
            Mode::Full => 0x02,
        }
    }

    pub(crate) fn from_byte(b: u8, offset: usize) -> Result<Self> {
        match b {
            0x01 => Ok(Mode::Basic),
            0x02 => Ok(Mode::Full),
            other => Err(Error::format(offset, format!("unknown mode byte {other:#04x}"))),
        }
    }

    pub(crate) fn expect(self, got: Mode) -> Result<()> {
        if self != got {
            return Err(Error::ModeMismatch {
                expected: self.as_str(),
                got: got.as_str(),
            });
        }
        Ok(())
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Mode {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "basic" => Ok(Mode::Basic),
            "full" => Ok(Mode::Full),
            other => Err(format!("unknown mode '{other}' (expected basic|full)")),
        }
    }
}

/// The plaintext triple hidden inside a chain entry.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ChainLink {
    pub prev_label: Label,
    pub prev_key: Key,
    /// Present only in full mode.
    pub gamma: Option<Tag>,
}

fn mask_for(mode: Mode, key: &Key, label: &Label) -> Vec<u8> {
    match mode {
        Mode::Basic => prf2(key, label).expect("fixed-size key").to_vec(),
        Mode::Full => prf3(key, label).expect("fixed-size key").to_vec(),
    }
}

pub fn mask_entry(mode: Mode, key: &Key, label: &Label, link: &ChainLink) -> Vec<u8> {
    let mut plain = Vec::with_capacity(mode.masked_len());
    plain.extend_from_slice(&link.prev_label);
    plain.extend_from_slice(&link.prev_key);
    if mode == Mode::Full {
        plain.extend_from_slice(&link.gamma.expect("full-mode entries carry an aggregate MAC"));
    }
    xor_in_place(&mut plain, &mask_for(mode, key, label));
    plain
}

pub fn unmask_entry(mode: Mode, key: &Key, label: &Label, masked: &[u8]) -> Result<ChainLink> {
    if masked.len() != mode.masked_len() {
        return Err(Error::BrokenChain(format!(
            "masked entry is {} bytes, {} mode expects {}",
            masked.len(),
            mode,
            mode.masked_len()
        )));
    }
    let mut plain = masked.to_vec();
    xor_in_place(&mut plain, &mask_for(mode, key, label));
    let prev_label = plain[..LAMBDA].try_into().unwrap();
    let prev_key = plain[LAMBDA..2 * LAMBDA].try_into().unwrap();
    let gamma = match mode {
        Mode::Basic => None,
        Mode::Full => Some(plain[2 * LAMBDA..].try_into().unwrap()),
    };
    Ok(ChainLink {
        prev_label,
        prev_key,
        gamma,
    })
}
