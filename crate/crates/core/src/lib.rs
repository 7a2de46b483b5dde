//! Contract lifecycle tracking with first-class provenance.
//!
//! The crate is organized bottom-up:
//!
//! * [`provenance`]: values that carry the tree of observations and
//!   functions they were computed from, with optional per-node history
//!   snapshots and timestamps.
//! * [`state`]: contract state as an ordered key/value list whose updates
//!   chain the old and new value into the provenance tree.
//! * [`events`]: the bilateral transfer-event vocabulary and the operation
//!   constructors (new trade, terminate, amend, split, partial assignment,
//!   tear-up), plus a lint pass for suspicious operations.
//! * [`ledger`]: the interpreter that validates operations against a
//!   contract store and applies them atomically, logging every event.
//! * [`clocks`]: Lamport and vector clocks.
//! * [`replication`]: a deterministic simulation of replicated stores with
//!   last-writer-wins conflict resolution.

pub mod clocks;
pub mod events;
pub mod ledger;
pub mod provenance;
pub mod replication;
pub mod state;

pub use events::{Amount, EconId, EconRef, Event, Operation, PartyRef, Transfer};
pub use ledger::{Ledger, ValidationReport};
pub use provenance::{AugValue, CaptureConfig, ProvenanceNode};
pub use state::ContractState;
