//! Simulation harness: synthetic record stream, plaintext oracle, a
//! three-party deployment, scenario runner and benchmarks.

pub mod bench;
pub mod deployment;
pub mod oracle;
pub mod phi;
pub mod scenario;

pub use deployment::{Deployment, OwnerSearch, UserSearch};
pub use oracle::PlaintextOracle;
pub use phi::{synthesize_stream, PhiFile};
pub use scenario::{run_scenario, ScenarioConfig, ScenarioReport};
