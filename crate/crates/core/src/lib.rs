//! Hybrid pharmaceutical knowledge base and knowledge-grounded prescription
//! verification.
//!
//! The crate is organized along the data flow:
//!
//! - [`schema`]: versioned hybrid schema, knowledge stratification, and
//!   iterative schema refinement.
//! - [`ingest`]: section-aware extraction from Markdown into provenance-carrying
//!   facts, persisted with a unified entity identity.
//! - [`store`]: the relational + graph store with its vertex/row mapping.
//! - [`query`]: deterministic query IR, execution, and trace rendering.
//! - [`pest`]: patient-profile-driven evidence selection.
//! - [`audit`]: the verification chain producing findings and information gaps.
//! - [`eval`]: synthetic corpora, planted-error prescriptions, metrics, and
//!   scaling measurements.

pub mod audit;
pub mod eval;
pub mod ingest;
pub mod par;
pub mod pest;
pub mod query;
pub mod schema;
pub mod store;
pub mod value;

pub use store::{EntityId, HybridStore, Provenance};
pub use value::{ColumnType, NumRange, Value};
