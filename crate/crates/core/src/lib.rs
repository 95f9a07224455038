//! Forward-private dynamic searchable symmetric encryption with delegated
//! verifiability.
//!
//! The data owner indexes files under per-keyword hash chains, the server
//! walks a chain given a search token, and authorized users recover the
//! latest counter from the server's authenticated Bloom filter so they can
//! search and verify results without contacting the owner.

// Verification takes the full result plus the policy inputs.
#![allow(clippy::too_many_arguments)]

pub mod bloom;
pub mod chain;
mod codec;
pub mod crypto;
pub mod error;
pub mod harness;
pub mod owner;
pub mod protocol;
pub mod server;
pub mod transport;
pub mod user;
pub mod wire;

pub use bloom::{BloomFilter, BloomParams};
pub use chain::Mode;
pub use error::{Error, Result};
pub use owner::{Checks, Owner, OwnerConfig, VerifyFailure};
pub use protocol::{BloomTriple, FileId, Proof, SearchResponse, SearchToken};
pub use server::{Adversary, Server, ServerConfig};
pub use user::{CounterGuess, UserCredentials};
