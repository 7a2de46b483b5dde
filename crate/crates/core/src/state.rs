//! Contract state as an ordered sequence of (key, lineage-tracked value)
//! pairs.
//!
//! `update` preserves the position of existing keys and appends new keys at
//! the tail; replacing a value records an `areplace` node whose inputs are
//! the old and the new provenance, so the full replacement history of every
//! key stays reachable from the current state.

use serde::{Deserialize, Serialize};

use crate::provenance::{apply_n, AugValue, CaptureConfig};

/// One keyed entry of a contract state.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StateEntry {
    pub key: String,
    pub value: AugValue,
}

/// Ordered key/value state. Keys are pairwise distinct; order is
/// insertion order and never changes on replacement.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ContractState {
    entries: Vec<StateEntry>,
}

impl ContractState {
    pub fn new() -> Self {
        ContractState::default()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &StateEntry> {
        self.entries.iter()
    }

    /// Value for `key`; absence is an ordinary outcome, not an error.
    pub fn lookup(&self, key: &str) -> Option<&AugValue> {
        self.entries
            .iter()
            .find(|e| e.key == key)
            .map(|e| &e.value)
    }

    /// Returns a state where `key` maps to `v`.
    ///
    /// An existing entry keeps its position and its value becomes
    /// `AugValue{v.value, Derived "areplace" [old.prov, v.prov]}`
    /// (label `areplace1` plus snapshot under a history config). A new key
    /// appends `(key, v)` at the tail unchanged.
    pub fn update(&self, key: &str, v: AugValue, cfg: &CaptureConfig) -> ContractState {
        let mut entries = self.entries.clone();
        match entries.iter_mut().find(|e| e.key == key) {
            Some(entry) => {
                let replaced = apply_n(
                    &cfg.builtin_label("areplace"),
                    |values| Ok(values[1]),
                    &[entry.value.clone(), v],
                    cfg,
                )
                .expect("two inputs, infallible fn");
                entry.value = replaced;
            }
            None => entries.push(StateEntry {
                key: key.to_string(),
                value: v,
            }),
        }
        ContractState { entries }
    }
}
