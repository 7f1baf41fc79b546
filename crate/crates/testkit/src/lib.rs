//! Test-only oracles and generators for the modeguard workspace.
//!
//! Everything here exists to check the production algorithms against slower,
//! more obviously correct implementations:
//!
//! - a declarative fixpoint points-to oracle that re-applies inference rules
//!   until nothing changes, with no worklist cleverness
//! - a brute-force reachability oracle over call graphs
//! - a seeded random module generator for differential testing
//! - path helpers for the shared firmware corpus

pub mod corpus;
pub mod gen;
pub mod oracle;

pub use corpus::{corpus_dir, load_corpus_module, toycopter_path, toyrover_path};
pub use gen::random_module_text;
pub use oracle::{
    address_taken_filter_oracle, callgraph_oracle, points_to_oracle, reachable_oracle,
    signature_filter_oracle,
};
