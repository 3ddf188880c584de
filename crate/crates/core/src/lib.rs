//! Query routing in an unstructured peer-to-peer overlay using knowledge
//! bases of formal concepts mined from each peer's query history.
//!
//! - [`fca`]: formal contexts, derivation operators, NextClosure.
//! - [`knowledge_base`]: query logs and static/incremental B(E1, E2) maintenance.
//! - [`routing`]: flooding and the learned peer selectors.
//! - [`simulator`]: TTL-bounded propagation, recall and the experiment loop.
//! - [`datagen`]: synthetic topical datasets and their TSV files.

pub mod config;
pub mod datagen;
pub mod fca;
pub mod ids;
pub mod knowledge_base;
pub mod report;
pub mod routing;
pub mod sets;
pub mod simulator;

pub use config::{MaintenanceMode, SimConfig, UpdateScope};
pub use datagen::{Dataset, GenParams};
pub use fca::{FormalConcept, FormalContext};
pub use ids::{DocId, PeerId, QueryId, TermId};
pub use knowledge_base::{KnowledgeBase, LogEntry, QueryLog};
pub use routing::{Query, Strategy};
pub use simulator::{run, IntervalMetrics, RunResult};
