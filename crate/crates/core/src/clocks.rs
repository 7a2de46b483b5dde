//! Logical-time primitives: Lamport timestamps and vector clocks.
//!
//! Both clock kinds are immutable values; every operation returns a new
//! clock. The comparison on vector clocks is the causal partial order, so
//! `Concurrent` is a real outcome, not an error.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Identifier of a node (process, replica) owning a clock.
pub type NodeId = u32;

/// Raised when a counter would exceed its representable range.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
#[error("logical clock counter overflow on node {node}")]
pub struct ClockOverflow {
    pub node: NodeId,
}

/// Outcome of comparing two logical timestamps.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CausalOrder {
    Before,
    After,
    Equal,
    Concurrent,
}

impl CausalOrder {
    /// Swaps the roles of the two operands.
    pub fn flip(self) -> Self {
        match self {
            CausalOrder::Before => CausalOrder::After,
            CausalOrder::After => CausalOrder::Before,
            other => other,
        }
    }
}

/// A scalar logical clock.
///
/// Consistent with happens-before in one direction only: if `e` happened
/// before `f` then `lamport(e) < lamport(f)`, but equal or ordered counters
/// say nothing about causality.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct LamportClock {
    node: NodeId,
    #[serde(rename = "t")]
    counter: u64,
}

impl LamportClock {
    pub fn new(node: NodeId) -> Self {
        LamportClock { node, counter: 0 }
    }

    pub fn node(&self) -> NodeId {
        self.node
    }

    pub fn time(&self) -> u64 {
        self.counter
    }

    /// Local-event rule: the counter advances by one.
    pub fn tick(&self) -> Result<Self, ClockOverflow> {
        let counter = self
            .counter
            .checked_add(1)
            .ok_or(ClockOverflow { node: self.node })?;
        Ok(LamportClock {
            node: self.node,
            counter,
        })
    }

    /// Receive rule: the counter jumps past the incoming message stamp.
    pub fn recv(&self, msg_ts: u64) -> Result<Self, ClockOverflow> {
        let counter = self
            .counter
            .max(msg_ts)
            .checked_add(1)
            .ok_or(ClockOverflow { node: self.node })?;
        Ok(LamportClock {
            node: self.node,
            counter,
        })
    }
}

// Total tie-break order: (counter, node), lexicographically. Used where a
// caller needs to force a total order over causally concurrent events.
impl PartialOrd for LamportClock {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for LamportClock {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        (self.counter, self.node).cmp(&(other.counter, other.node))
    }
}

/// A per-node counter vector whose pointwise comparison exactly
/// characterizes happens-before.
///
/// Canonical form: entries with counter zero are never stored, so two
/// clocks describing the same history are structurally equal.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(from = "BTreeMap<NodeId, u64>")]
pub struct VectorClock(BTreeMap<NodeId, u64>);

impl From<BTreeMap<NodeId, u64>> for VectorClock {
    fn from(mut map: BTreeMap<NodeId, u64>) -> Self {
        map.retain(|_, c| *c > 0);
        VectorClock(map)
    }
}

impl VectorClock {
    pub fn new() -> Self {
        VectorClock::default()
    }

    /// Builds a clock from entries, dropping explicit zeros.
    pub fn from_entries(entries: impl IntoIterator<Item = (NodeId, u64)>) -> Self {
        entries.into_iter().collect::<BTreeMap<_, _>>().into()
    }

    /// Counter for a node; absent entries read as 0.
    pub fn get(&self, node: NodeId) -> u64 {
        self.0.get(&node).copied().unwrap_or(0)
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (NodeId, u64)> + '_ {
        self.0.iter().map(|(n, c)| (*n, *c))
    }

    /// Local-event rule: the entry for `node` advances by one.
    pub fn tick(&self, node: NodeId) -> VectorClock {
        let mut next = self.0.clone();
        let counter = next.entry(node).or_insert(0);
        *counter = counter
            .checked_add(1)
            .expect("vector clock counter overflow");
        VectorClock(next)
    }

    /// Message-merge rule: pointwise maximum.
    pub fn merge(&self, other: &VectorClock) -> VectorClock {
        let mut next = self.0.clone();
        for (node, counter) in &other.0 {
            let slot = next.entry(*node).or_insert(0);
            *slot = (*slot).max(*counter);
        }
        VectorClock(next)
    }

    /// Causal comparison: `Before` iff self ≤ other pointwise and differs.
    pub fn compare(&self, other: &VectorClock) -> CausalOrder {
        let mut self_le = true;
        let mut other_le = true;
        for node in self.0.keys().chain(other.0.keys()) {
            let a = self.get(*node);
            let b = other.get(*node);
            if a > b {
                self_le = false;
            }
            if b > a {
                other_le = false;
            }
        }
        match (self_le, other_le) {
            (true, true) => CausalOrder::Equal,
            (true, false) => CausalOrder::Before,
            (false, true) => CausalOrder::After,
            (false, false) => CausalOrder::Concurrent,
        }
    }
}
