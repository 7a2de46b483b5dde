//! Lineage-tracked numeric values.
//!
//! An [`AugValue`] pairs a number with a provenance tree describing how it
//! was produced: `Orig` leaves for observed inputs, `Derived` nodes for
//! function applications. Capture options (value history, timestamps) are
//! threaded through every constructor via [`CaptureConfig`], so one tree is
//! built under exactly one configuration.
//!
//! Trees are immutable after construction; every operation allocates new
//! nodes and shares nothing mutable.

use std::fmt;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use rust_decimal::Decimal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum ProvenanceError {
    #[error("source label must be non-empty")]
    EmptySourceLabel,
    #[error("a derived node requires at least one input")]
    EmptyInputs,
    #[error("arithmetic overflow in lineage computation")]
    Overflow,
}

/// A timestamp token: either a logical sequence number or a wall-clock
/// string (ISO-8601 by convention). Tokens of different kinds do not
/// compare.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum TimeToken {
    Logical(u64),
    Wall(String),
}

impl PartialOrd for TimeToken {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        match (self, other) {
            (TimeToken::Logical(a), TimeToken::Logical(b)) => a.partial_cmp(b),
            (TimeToken::Wall(a), TimeToken::Wall(b)) => a.partial_cmp(b),
            _ => None,
        }
    }
}

impl fmt::Display for TimeToken {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TimeToken::Logical(n) => write!(f, "@{n}"),
            TimeToken::Wall(s) => write!(f, "@{s}"),
        }
    }
}

/// Supplier of timestamp tokens for captures that record time.
#[derive(Clone)]
pub struct ClockSource(Arc<dyn Fn() -> TimeToken + Send + Sync>);

impl ClockSource {
    pub fn from_fn(f: impl Fn() -> TimeToken + Send + Sync + 'static) -> Self {
        ClockSource(Arc::new(f))
    }

    /// Monotone logical clock starting at 1.
    pub fn logical() -> Self {
        let counter = Arc::new(AtomicU64::new(1));
        ClockSource::from_fn(move || TimeToken::Logical(counter.fetch_add(1, Ordering::Relaxed)))
    }

    /// Logical clock drawing from a shared counter (first token = counter+1).
    pub(crate) fn shared_counter(counter: Arc<AtomicU64>) -> Self {
        ClockSource::from_fn(move || TimeToken::Logical(counter.fetch_add(1, Ordering::Relaxed) + 1))
    }

    fn now(&self) -> TimeToken {
        (self.0)()
    }
}

impl fmt::Debug for ClockSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ClockSource").finish_non_exhaustive()
    }
}

/// Capture options for lineage construction.
///
/// `plain` records structure only; `history` additionally snapshots every
/// intermediate value; `timestamped` stamps every node from a clock source.
#[derive(Debug, Clone)]
pub struct CaptureConfig {
    record_history: bool,
    clock: Option<ClockSource>,
}

impl CaptureConfig {
    pub fn plain() -> Self {
        CaptureConfig {
            record_history: false,
            clock: None,
        }
    }

    pub fn history() -> Self {
        CaptureConfig {
            record_history: true,
            clock: None,
        }
    }

    pub fn timestamped(clock: ClockSource) -> Self {
        CaptureConfig {
            record_history: false,
            clock: Some(clock),
        }
    }

    pub fn history_timestamped(clock: ClockSource) -> Self {
        CaptureConfig {
            record_history: true,
            clock: Some(clock),
        }
    }

    pub fn record_history(&self) -> bool {
        self.record_history
    }

    pub fn record_timestamps(&self) -> bool {
        self.clock.is_some()
    }

    fn snapshot(&self, value: Decimal) -> Option<Decimal> {
        self.record_history.then_some(value)
    }

    fn stamp(&self) -> Option<TimeToken> {
        self.clock.as_ref().map(ClockSource::now)
    }

    /// Built-in function labels carry a "1" suffix when history is on
    /// (`aplus` vs `aplus1`); caller-supplied labels are used verbatim.
    pub(crate) fn builtin_label(&self, base: &str) -> String {
        if self.record_history {
            format!("{base}1")
        } else {
            base.to_string()
        }
    }
}

/// One node of a provenance tree.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ProvenanceNode {
    /// An originally observed datum.
    Orig {
        label: String,
        #[serde(skip_serializing_if = "Option::is_none", default)]
        snapshot: Option<Decimal>,
        #[serde(skip_serializing_if = "Option::is_none", default)]
        ts: Option<TimeToken>,
    },
    /// The result of applying a function to prior values.
    Derived {
        label: String,
        #[serde(skip_serializing_if = "Option::is_none", default)]
        snapshot: Option<Decimal>,
        #[serde(skip_serializing_if = "Option::is_none", default)]
        ts: Option<TimeToken>,
        inputs: Vec<ProvenanceNode>,
    },
}

pub(crate) fn orig_node(label: &str, value: Decimal, cfg: &CaptureConfig) -> ProvenanceNode {
    ProvenanceNode::Orig {
        label: label.to_string(),
        snapshot: cfg.snapshot(value),
        ts: cfg.stamp(),
    }
}

pub(crate) fn derived_node(
    label: &str,
    value: Decimal,
    inputs: Vec<ProvenanceNode>,
    cfg: &CaptureConfig,
) -> ProvenanceNode {
    debug_assert!(!inputs.is_empty());
    ProvenanceNode::Derived {
        label: label.to_string(),
        snapshot: cfg.snapshot(value),
        ts: cfg.stamp(),
        inputs,
    }
}

impl ProvenanceNode {
    pub fn label(&self) -> &str {
        match self {
            ProvenanceNode::Orig { label, .. } | ProvenanceNode::Derived { label, .. } => label,
        }
    }

    pub fn snapshot(&self) -> Option<&Decimal> {
        match self {
            ProvenanceNode::Orig { snapshot, .. } | ProvenanceNode::Derived { snapshot, .. } => {
                snapshot.as_ref()
            }
        }
    }

    pub fn ts(&self) -> Option<&TimeToken> {
        match self {
            ProvenanceNode::Orig { ts, .. } | ProvenanceNode::Derived { ts, .. } => ts.as_ref(),
        }
    }

    pub fn inputs(&self) -> &[ProvenanceNode] {
        match self {
            ProvenanceNode::Orig { .. } => &[],
            ProvenanceNode::Derived { inputs, .. } => inputs,
        }
    }

    /// Structural check for trees built outside the constructors
    /// (e.g. deserialized from a snapshot file).
    pub fn check_well_formed(&self) -> Result<(), ProvenanceError> {
        match self {
            ProvenanceNode::Orig { label, .. } => {
                if label.is_empty() {
                    return Err(ProvenanceError::EmptySourceLabel);
                }
            }
            ProvenanceNode::Derived { inputs, .. } => {
                if inputs.is_empty() {
                    return Err(ProvenanceError::EmptyInputs);
                }
                for input in inputs {
                    input.check_well_formed()?;
                }
            }
        }
        Ok(())
    }

    /// Canonical notation, e.g. `Derived "aplus" [Orig "ob3", Orig "ob2"]`.
    ///
    /// The tag suffix reflects what the node carries: none for structure
    /// only, `1` with snapshots, `2` with timestamps, `12` with both.
    /// Field order: timestamp, label, snapshot, inputs.
    pub fn canonical_text(&self) -> String {
        let mut out = String::new();
        self.write_canonical(&mut out);
        out
    }

    fn tag_suffix(&self) -> &'static str {
        match (self.snapshot().is_some(), self.ts().is_some()) {
            (false, false) => "",
            (true, false) => "1",
            (false, true) => "2",
            (true, true) => "12",
        }
    }

    fn write_canonical(&self, out: &mut String) {
        use std::fmt::Write;
        let tag = match self {
            ProvenanceNode::Orig { .. } => "Orig",
            ProvenanceNode::Derived { .. } => "Derived",
        };
        write!(out, "{tag}{}", self.tag_suffix()).unwrap();
        if let Some(ts) = self.ts() {
            write!(out, " {ts}").unwrap();
        }
        write!(out, " \"{}\"", self.label().replace('"', "\\\"")).unwrap();
        if let Some(snapshot) = self.snapshot() {
            write!(out, " {}", snapshot.normalize()).unwrap();
        }
        if let ProvenanceNode::Derived { inputs, .. } = self {
            out.push_str(" [");
            for (i, input) in inputs.iter().enumerate() {
                if i > 0 {
                    out.push_str(", ");
                }
                input.write_canonical(out);
            }
            out.push(']');
        }
    }

    /// Graphviz rendering: one box per node, edges parent → input.
    pub fn to_dot(&self) -> String {
        fn label_of(node: &ProvenanceNode) -> String {
            let tag = match node {
                ProvenanceNode::Orig { .. } => "Orig",
                ProvenanceNode::Derived { .. } => "Derived",
            };
            let mut text = format!("{tag}{} {}", node.tag_suffix(), node.label());
            if let Some(snapshot) = node.snapshot() {
                text.push_str(&format!(" = {}", snapshot.normalize()));
            }
            if let Some(ts) = node.ts() {
                text.push_str(&format!(" {ts}"));
            }
            text.replace('"', "\\\"")
        }
        fn walk(node: &ProvenanceNode, next: &mut usize, out: &mut String) -> usize {
            let id = *next;
            *next += 1;
            out.push_str(&format!("  n{id} [label=\"{}\"];\n", label_of(node)));
            for input in node.inputs() {
                let child = walk(input, next, out);
                out.push_str(&format!("  n{id} -> n{child};\n"));
            }
            id
        }
        let mut out = String::from("digraph lineage {\n  node [shape=box];\n");
        walk(self, &mut 0, &mut out);
        out.push_str("}\n");
        out
    }
}

/// A number together with the provenance of its computation.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AugValue {
    pub value: Decimal,
    pub prov: ProvenanceNode,
}

impl AugValue {
    /// Canonical notation, e.g. `Aug 12 (Derived "aplus" [...])`.
    pub fn canonical_text(&self) -> String {
        format!(
            "Aug{} {} ({})",
            self.prov.tag_suffix(),
            self.value.normalize(),
            self.prov.canonical_text()
        )
    }
}

/// Records an originally observed value under a source label.
pub fn observe(value: Decimal, source: &str, cfg: &CaptureConfig) -> Result<AugValue, ProvenanceError> {
    if source.is_empty() {
        return Err(ProvenanceError::EmptySourceLabel);
    }
    Ok(AugValue {
        value,
        prov: orig_node(source, value, cfg),
    })
}

/// Replaces the value, keeping the old provenance as the single input.
pub fn replace(av: &AugValue, y: Decimal, cfg: &CaptureConfig) -> AugValue {
    apply_n(&cfg.builtin_label("replace"), |_| Ok(y), std::slice::from_ref(av), cfg)
        .expect("one input, infallible fn")
}

/// Adds two augmented values; the result's provenance lists both inputs in
/// argument order.
pub fn aplus(a: &AugValue, b: &AugValue, cfg: &CaptureConfig) -> Result<AugValue, ProvenanceError> {
    apply_n(
        &cfg.builtin_label("aplus"),
        |values| values[0].checked_add(values[1]).ok_or(ProvenanceError::Overflow),
        &[a.clone(), b.clone()],
        cfg,
    )
}

/// Applies an n-ary numeric function, recording one Derived node over all
/// argument provenances. The label is used verbatim.
pub fn apply_n(
    func_label: &str,
    f: impl FnOnce(&[Decimal]) -> Result<Decimal, ProvenanceError>,
    args: &[AugValue],
    cfg: &CaptureConfig,
) -> Result<AugValue, ProvenanceError> {
    if args.is_empty() {
        return Err(ProvenanceError::EmptyInputs);
    }
    let values: Vec<Decimal> = args.iter().map(|a| a.value).collect();
    let value = f(&values)?;
    let inputs = args.iter().map(|a| a.prov.clone()).collect();
    Ok(AugValue {
        value,
        prov: derived_node(func_label, value, inputs, cfg),
    })
}

/// Summary of a provenance tree.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct LineageReport {
    /// Orig labels in left-to-right order.
    pub leaves: Vec<String>,
    /// Longest root-to-leaf path, counted in nodes (a lone leaf has depth 1).
    pub depth: usize,
    pub node_count: usize,
    /// Derived function labels in pre-order.
    pub functions: Vec<String>,
}

/// Walks the provenance tree of `av` and reports its shape.
pub fn trace(av: &AugValue) -> LineageReport {
    fn walk(node: &ProvenanceNode, depth: usize, report: &mut LineageReport) -> usize {
        report.node_count += 1;
        match node {
            ProvenanceNode::Orig { label, .. } => {
                report.leaves.push(label.clone());
                depth
            }
            ProvenanceNode::Derived { label, inputs, .. } => {
                report.functions.push(label.clone());
                inputs
                    .iter()
                    .map(|input| walk(input, depth + 1, report))
                    .max()
                    .unwrap_or(depth)
            }
        }
    }
    let mut report = LineageReport {
        leaves: Vec::new(),
        depth: 0,
        node_count: 0,
        functions: Vec::new(),
    };
    report.depth = walk(&av.prov, 1, &mut report);
    report
}
