//! The operation interpreter: validates an [`Operation`] against current
//! ledger contents and applies its after-events atomically.
//!
//! Before-events are preconditions. They are matched against ledger facts
//! (economics resolvable, contract active, parties on the contract, and,
//! where an operation consumes the original trade quantity, the recorded
//! quantity) and are never re-actioned. The single exception is a tear-up's
//! cancelled positions: their disappearance is encoded by having no after
//! counterpart, so apply terminates them.
//!
//! Every applied operation extends an append-only event log; replaying the
//! log from an empty ledger with the same capture settings reconstructs the
//! ledger exactly.

use std::collections::BTreeMap;
use std::io::{self, BufRead, Write};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use rust_decimal::Decimal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::clocks::LamportClock;
use crate::events::{
    Amount, EconId, EconRef, Event, Operation, PartyRef, Transfer, TransferKind,
};
use crate::provenance::{
    derived_node, observe, orig_node, AugValue, CaptureConfig, ClockSource, ProvenanceNode,
};
use crate::state::ContractState;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ContractStatus {
    Active,
    Terminated,
}

/// Everything the ledger holds about one contract.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContractRecord {
    pub econ_id: EconId,
    /// Party identifiers entitled to act on this contract.
    pub parties: Vec<u32>,
    pub state: ContractState,
    pub status: ContractStatus,
    pub quantity: Amount,
    /// Provenance of the record itself: how this economics came to be.
    pub lineage: ProvenanceNode,
}

/// Granularity of lineage capture.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum CaptureMode {
    /// Wrap every state-changing event individually ("statetransition",
    /// "amend" labels).
    #[default]
    #[serde(rename = "per-transition")]
    PerTransition,
    /// One wrap per operation, labelled "operation:<name>".
    #[serde(rename = "per-sequence")]
    PerSequence,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LogPhase {
    Before,
    After,
}

/// One line of the append-only event log. The before/after events of an
/// operation share the operation's Lamport stamp; `seq` orders lines.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LogEntry {
    pub seq: u64,
    #[serde(rename = "opId")]
    pub op_id: u64,
    pub lamport: u64,
    pub phase: LogPhase,
    pub event: Event,
}

/// A value movement with no surviving contract record (cash settlements),
/// or against a currency economics (tear-up).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TransferEntry {
    #[serde(rename = "opId")]
    pub op_id: u64,
    pub from: PartyRef,
    pub to: PartyRef,
    pub amount: Amount,
    pub econ: EconRef,
    pub lamport: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ReasonCode {
    UnknownEconomics,
    QuantityMismatch,
    TerminatedContract,
    UnknownParty,
    DuplicateEconomics,
    MalformedOperation,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase", tag = "phase", content = "index")]
pub enum IssueLocation {
    Before(usize),
    After(usize),
    Operation,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ValidationIssue {
    pub location: IssueLocation,
    pub code: ReasonCode,
    pub detail: String,
}

/// Outcome of validating an operation; empty means ok. Issues enumerate
/// every failing check, not just the first.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct ValidationReport {
    pub issues: Vec<ValidationIssue>,
}

impl ValidationReport {
    pub fn is_ok(&self) -> bool {
        self.issues.is_empty()
    }

    fn push(&mut self, location: IssueLocation, code: ReasonCode, detail: impl Into<String>) {
        self.issues.push(ValidationIssue {
            location,
            code,
            detail: detail.into(),
        });
    }
}

impl std::fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        if self.is_ok() {
            return write!(f, "ok");
        }
        for (i, issue) in self.issues.iter().enumerate() {
            if i > 0 {
                writeln!(f)?;
            }
            let loc = match issue.location {
                IssueLocation::Before(n) => format!("before[{n}]"),
                IssueLocation::After(n) => format!("after[{n}]"),
                IssueLocation::Operation => "operation".to_string(),
            };
            write!(f, "{loc}: {:?}: {}", issue.code, issue.detail)?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum LedgerError {
    #[error("unknown economics id {0}")]
    UnknownEconomics(EconId),
}

/// Recognized operation shapes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OpKind {
    New,
    TerminateForCash,
    Amend,
    Split,
    PartialAssign,
    TearUp,
}

impl OpKind {
    pub fn name(&self) -> &'static str {
        match self {
            OpKind::New => "new",
            OpKind::TerminateForCash => "terminate_for_cash",
            OpKind::Amend => "amend",
            OpKind::Split => "split",
            OpKind::PartialAssign => "partial_assign",
            OpKind::TearUp => "tear_up",
        }
    }
}

/// Classifies an operation by shape alone (no ledger access).
pub fn classify(op: &Operation) -> Result<OpKind, String> {
    shape(op).map(|s| s.kind())
}

enum OpShape<'a> {
    New {
        event: &'a Transfer,
    },
    TerminateForCash {
        before: &'a Transfer,
        cash: &'a Transfer,
    },
    Amend {
        before: &'a Transfer,
        replacement: &'a Transfer,
    },
    Split {
        before: &'a Transfer,
        children: [&'a Transfer; 2],
    },
    PartialAssign {
        before: &'a Transfer,
        retained: &'a Transfer,
        assigned: &'a Transfer,
        fee: &'a Transfer,
    },
    TearUp {
        cancelled: Vec<&'a Transfer>,
        adjusted: [(&'a Transfer, &'a Transfer); 2],
        created: &'a Transfer,
        cash: &'a Transfer,
    },
}

impl OpShape<'_> {
    fn kind(&self) -> OpKind {
        match self {
            OpShape::New { .. } => OpKind::New,
            OpShape::TerminateForCash { .. } => OpKind::TerminateForCash,
            OpShape::Amend { .. } => OpKind::Amend,
            OpShape::Split { .. } => OpKind::Split,
            OpShape::PartialAssign { .. } => OpKind::PartialAssign,
            OpShape::TearUp { .. } => OpKind::TearUp,
        }
    }
}

fn shape(op: &Operation) -> Result<OpShape<'_>, String> {
    let after: Vec<&Transfer> = op
        .after()
        .iter()
        .map(|e| e.transfer().ok_or("after-events must be transfers"))
        .collect::<Result<_, _>>()?;

    let creation_like = op.before().is_empty() || matches!(op.before(), [Event::NoEvent]);
    if creation_like {
        if after.len() == 1 && after[0].econ.econ_id().is_some() && after[0].new_contract {
            return Ok(OpShape::New { event: after[0] });
        }
        return Err("an operation without preconditions must have exactly one marked creation event".into());
    }

    let before: Vec<&Transfer> = op
        .before()
        .iter()
        .map(|e| e.transfer().ok_or("before-events must be all transfers or a single NoEvent"))
        .collect::<Result<_, _>>()?;
    for t in &before {
        if t.econ.econ_id().is_none() {
            return Err("before-events must reference economics".into());
        }
    }

    match (before.len(), after.len()) {
        (1, 1) => {
            let (b, a) = (before[0], after[0]);
            match a.econ.econ_id() {
                None if a.kind == TransferKind::Payment => {
                    Ok(OpShape::TerminateForCash { before: b, cash: a })
                }
                None => Err("a lone after-event without economics must be a payment".into()),
                Some(e2) if Some(e2) != b.econ.econ_id() => {
                    Ok(OpShape::Amend { before: b, replacement: a })
                }
                Some(_) => Err("an amendment must change the economics reference".into()),
            }
        }
        (1, 2) => {
            let b = before[0];
            for a in &after {
                if a.econ != b.econ {
                    return Err("split children must reference the split contract's economics".into());
                }
            }
            let total = after[0]
                .amount
                .checked_add(&after[1].amount)
                .map_err(|e| format!("split amounts: {e}"))?;
            if total != b.amount {
                return Err("split amounts must sum to the before amount".into());
            }
            Ok(OpShape::Split {
                before: b,
                children: [after[0], after[1]],
            })
        }
        (1, 3) => {
            let b = before[0];
            let (retained, assigned, fee) = (after[0], after[1], after[2]);
            let e2 = retained
                .econ
                .econ_id()
                .ok_or("assigned positions must reference economics")?;
            if assigned.econ.econ_id() != Some(e2) {
                return Err("both assigned positions must share the successor economics".into());
            }
            if Some(e2) == b.econ.econ_id() {
                return Err("partial assignment must produce a successor economics id".into());
            }
            if fee.econ.econ_id().is_some() || fee.kind != TransferKind::Payment {
                return Err("third after-event must be a cash payment without economics".into());
            }
            let total = retained
                .amount
                .checked_add(&assigned.amount)
                .map_err(|e| format!("assigned amounts: {e}"))?;
            if total != b.amount {
                return Err("assigned amounts must sum to the before amount".into());
            }
            Ok(OpShape::PartialAssign {
                before: b,
                retained,
                assigned,
                fee,
            })
        }
        (n, 5) if n >= 3 => {
            let base = &before[n - 3..];
            let (unchanged, adj3, adj4) = (after[0], after[1], after[2]);
            let (created, cash) = (after[3], after[4]);
            if unchanged != base[0] {
                return Err("first after-event must repeat the unchanged position exactly".into());
            }
            if adj3.econ != base[1].econ || adj4.econ != base[2].econ {
                return Err("adjusted after-events must match the before economics in order".into());
            }
            if !created.new_contract || created.econ.econ_id().is_none() {
                return Err("fourth after-event must create a marked new contract".into());
            }
            if before
                .iter()
                .any(|t| t.econ.econ_id() == created.econ.econ_id())
            {
                return Err("created economics id collides with a before-event".into());
            }
            if cash.kind != TransferKind::Payment || cash.econ.econ_id().is_none() {
                return Err("fifth after-event must be a payment against currency economics".into());
            }
            Ok(OpShape::TearUp {
                cancelled: before[..n - 3].to_vec(),
                adjusted: [(base[1], adj3), (base[2], adj4)],
                created,
                cash,
            })
        }
        (b, a) => Err(format!("unrecognized operation shape: {b} before, {a} after")),
    }
}

fn derived_econ(parent: &EconId, op_id: u64, k: usize) -> EconId {
    EconId::new(format!("{parent}#{op_id}.{k}"))
}

fn op_label(op_id: u64) -> String {
    format!("op:{op_id}")
}

fn quantity_value(amount: &Amount) -> Decimal {
    amount.quantity().map(|(q, _)| q).unwrap_or(Decimal::ZERO)
}

fn parties_of(t: &Transfer) -> Vec<u32> {
    [t.from, t.to]
        .into_iter()
        .filter_map(|p| match p {
            PartyRef::Party(n) => Some(n),
            PartyRef::NoParty => None,
        })
        .collect()
}

/// The contract store plus its append-only logs.
///
/// A ledger value is immutable: `apply` returns a new ledger and never
/// mutates the receiver, so readers can hold old versions safely.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Ledger {
    #[serde(default)]
    contracts: BTreeMap<EconId, ContractRecord>,
    #[serde(default)]
    event_log: Vec<LogEntry>,
    #[serde(default)]
    transfer_log: Vec<TransferEntry>,
    #[serde(default)]
    capture_mode: CaptureMode,
    #[serde(default = "origin_clock")]
    clock: LamportClock,
    #[serde(default)]
    record_history: bool,
    #[serde(default)]
    record_timestamps: bool,
    #[serde(default)]
    ts_counter: u64,
}

fn origin_clock() -> LamportClock {
    LamportClock::new(0)
}

// Equality is over ledger data (contracts and logs); capture settings and
// clock positions are reconstruction metadata.
impl PartialEq for Ledger {
    fn eq(&self, other: &Self) -> bool {
        self.contracts == other.contracts
            && self.event_log == other.event_log
            && self.transfer_log == other.transfer_log
    }
}

impl Eq for Ledger {}

impl Default for Ledger {
    fn default() -> Self {
        Ledger::new()
    }
}

impl Ledger {
    pub fn new() -> Self {
        Ledger {
            contracts: BTreeMap::new(),
            event_log: Vec::new(),
            transfer_log: Vec::new(),
            capture_mode: CaptureMode::default(),
            clock: origin_clock(),
            record_history: false,
            record_timestamps: false,
            ts_counter: 0,
        }
    }

    pub fn with_capture_mode(mut self, mode: CaptureMode) -> Self {
        self.capture_mode = mode;
        self
    }

    pub fn with_history(mut self, on: bool) -> Self {
        self.record_history = on;
        self
    }

    pub fn with_timestamps(mut self, on: bool) -> Self {
        self.record_timestamps = on;
        self
    }

    pub fn capture_mode(&self) -> CaptureMode {
        self.capture_mode
    }

    pub fn contract(&self, econ: &EconId) -> Option<&ContractRecord> {
        self.contracts.get(econ)
    }

    pub fn contracts(&self) -> impl Iterator<Item = &ContractRecord> {
        self.contracts.values()
    }

    pub fn event_log(&self) -> &[LogEntry] {
        &self.event_log
    }

    pub fn transfer_log(&self) -> &[TransferEntry] {
        &self.transfer_log
    }

    /// The record-level provenance of a contract's economics.
    pub fn lineage_of(&self, econ: &EconId) -> Result<&ProvenanceNode, LedgerError> {
        self.contracts
            .get(econ)
            .map(|r| &r.lineage)
            .ok_or_else(|| LedgerError::UnknownEconomics(econ.clone()))
    }

    /// Checks an operation against ledger facts without applying it.
    pub fn validate(&self, op: &Operation) -> ValidationReport {
        let mut report = ValidationReport::default();
        let shape = match shape(op) {
            Ok(s) => s,
            Err(detail) => {
                report.push(IssueLocation::Operation, ReasonCode::MalformedOperation, detail);
                return report;
            }
        };

        // The original-quantity check applies where the operation consumes
        // the full recorded quantity.
        let quantity_checked = matches!(
            shape,
            OpShape::Split { .. } | OpShape::PartialAssign { .. }
        );
        for (i, event) in op.before().iter().enumerate() {
            let t = match event.transfer() {
                Some(t) => t,
                None => continue,
            };
            let econ = match t.econ.econ_id() {
                Some(e) => e,
                None => continue,
            };
            let record = match self.contracts.get(econ) {
                None => {
                    report.push(
                        IssueLocation::Before(i),
                        ReasonCode::UnknownEconomics,
                        format!("economics {econ} is not on the ledger"),
                    );
                    continue;
                }
                Some(r) => r,
            };
            if record.status == ContractStatus::Terminated {
                report.push(
                    IssueLocation::Before(i),
                    ReasonCode::TerminatedContract,
                    format!("contract {econ} is terminated"),
                );
            }
            for party in [t.from, t.to] {
                if let PartyRef::Party(p) = party {
                    if !record.parties.contains(&p) {
                        report.push(
                            IssueLocation::Before(i),
                            ReasonCode::UnknownParty,
                            format!("party {p} is not on contract {econ}"),
                        );
                    }
                }
            }
            if quantity_checked && t.amount != record.quantity {
                report.push(
                    IssueLocation::Before(i),
                    ReasonCode::QuantityMismatch,
                    format!("before amount differs from the recorded quantity of {econ}"),
                );
            }
        }

        let check_free = |report: &mut ValidationReport, index: usize, econ: &EconId| {
            if self.contracts.contains_key(econ) {
                report.push(
                    IssueLocation::After(index),
                    ReasonCode::DuplicateEconomics,
                    format!("economics {econ} already exists"),
                );
            }
        };
        let op_id = op.op_id();
        match &shape {
            OpShape::New { event } => {
                check_free(&mut report, 0, event.econ.econ_id().unwrap());
            }
            OpShape::Amend { replacement, .. } => {
                check_free(&mut report, 0, replacement.econ.econ_id().unwrap());
            }
            OpShape::Split { before, .. } => {
                let parent = before.econ.econ_id().unwrap();
                for k in 0..2 {
                    check_free(&mut report, k, &derived_econ(parent, op_id, k + 1));
                }
            }
            OpShape::PartialAssign { retained, .. } => {
                let e2 = retained.econ.econ_id().unwrap();
                check_free(&mut report, 0, e2);
                check_free(&mut report, 1, &derived_econ(e2, op_id, 1));
            }
            OpShape::TearUp { created, cash, .. } => {
                check_free(&mut report, 3, created.econ.econ_id().unwrap());
                let ccy = cash.econ.econ_id().unwrap();
                match self.contracts.get(ccy) {
                    None => report.push(
                        IssueLocation::After(4),
                        ReasonCode::UnknownEconomics,
                        format!("currency economics {ccy} is not on the ledger"),
                    ),
                    Some(r) if r.status == ContractStatus::Terminated => report.push(
                        IssueLocation::After(4),
                        ReasonCode::TerminatedContract,
                        format!("currency economics {ccy} is terminated"),
                    ),
                    Some(_) => {}
                }
            }
            OpShape::TerminateForCash { .. } => {}
        }
        report
    }

    /// Applies a validated operation, returning the successor ledger.
    /// A failing validation leaves `self` untouched and is returned whole.
    pub fn apply(&self, op: &Operation) -> Result<Ledger, ValidationReport> {
        let report = self.validate(op);
        if !report.is_ok() {
            return Err(report);
        }
        let shape = shape(op).expect("validated");
        let op_id = op.op_id();

        let mut next = self.clone();
        next.clock = next.clock.tick().expect("lamport counter exhausted");
        let stamp = next.clock.time();
        let counter = Arc::new(AtomicU64::new(next.ts_counter));
        let cfg = next.capture_cfg(&counter);
        let wrap = next.wrap_label(shape.kind());

        for event in op.before() {
            next.log(op_id, stamp, LogPhase::Before, event.clone());
        }

        match shape {
            OpShape::New { event } => {
                let econ = event.econ.econ_id().unwrap().clone();
                let lineage = orig_node(&op_label(op_id), quantity_value(&event.amount), &cfg);
                next.create_contract(econ, event, op_id, lineage, ContractState::new(), &cfg);
            }
            OpShape::TerminateForCash { before, cash } => {
                next.terminate(before.econ.econ_id().unwrap());
                next.record_transfer(op_id, stamp, cash);
            }
            OpShape::Amend { before, replacement } => {
                let parent = next.terminate(before.econ.econ_id().unwrap());
                let econ = replacement.econ.econ_id().unwrap().clone();
                let lineage = derived_node(
                    &wrap,
                    quantity_value(&replacement.amount),
                    vec![parent.lineage],
                    &cfg,
                );
                next.create_contract(econ, replacement, op_id, lineage, parent.state, &cfg);
            }
            OpShape::Split { before, children } => {
                let parent_econ = before.econ.econ_id().unwrap().clone();
                let parent = next.terminate(&parent_econ);
                for (k, child) in children.into_iter().enumerate() {
                    let econ = derived_econ(&parent_econ, op_id, k + 1);
                    let lineage = derived_node(
                        &wrap,
                        quantity_value(&child.amount),
                        vec![parent.lineage.clone()],
                        &cfg,
                    );
                    next.create_contract(econ, child, op_id, lineage, parent.state.clone(), &cfg);
                }
            }
            OpShape::PartialAssign {
                before,
                retained,
                assigned,
                fee,
            } => {
                let parent = next.terminate(before.econ.econ_id().unwrap());
                let e2 = retained.econ.econ_id().unwrap().clone();
                for (econ, part) in [
                    (e2.clone(), retained),
                    (derived_econ(&e2, op_id, 1), assigned),
                ] {
                    let lineage = derived_node(
                        &wrap,
                        quantity_value(&part.amount),
                        vec![parent.lineage.clone()],
                        &cfg,
                    );
                    next.create_contract(econ, part, op_id, lineage, parent.state.clone(), &cfg);
                }
                next.record_transfer(op_id, stamp, fee);
            }
            OpShape::TearUp {
                cancelled,
                adjusted,
                created,
                cash,
            } => {
                for t in cancelled {
                    next.terminate(t.econ.econ_id().unwrap());
                }
                // after[0] is a true no-op: logged, nothing else.
                for (_, after_t) in adjusted {
                    next.adjust_quantity(after_t, op_id, &wrap, &cfg);
                }
                let econ = created.econ.econ_id().unwrap().clone();
                let lineage = orig_node(&op_label(op_id), quantity_value(&created.amount), &cfg);
                next.create_contract(econ, created, op_id, lineage, ContractState::new(), &cfg);
                next.record_transfer(op_id, stamp, cash);
            }
        }

        for event in op.after() {
            next.log(op_id, stamp, LogPhase::After, event.clone());
        }
        next.ts_counter = counter.load(Ordering::Relaxed);
        Ok(next)
    }

    /// Folds `apply` over a sequence of operations.
    pub fn replay<'a>(
        mut self,
        ops: impl IntoIterator<Item = &'a Operation>,
    ) -> Result<Ledger, ReplayError> {
        for (i, op) in ops.into_iter().enumerate() {
            self = self
                .apply(op)
                .map_err(|report| ReplayError { op_index: i, report })?;
        }
        Ok(self)
    }

    fn capture_cfg(&self, counter: &Arc<AtomicU64>) -> CaptureConfig {
        match (self.record_history, self.record_timestamps) {
            (false, false) => CaptureConfig::plain(),
            (true, false) => CaptureConfig::history(),
            (false, true) => {
                CaptureConfig::timestamped(ClockSource::shared_counter(counter.clone()))
            }
            (true, true) => {
                CaptureConfig::history_timestamped(ClockSource::shared_counter(counter.clone()))
            }
        }
    }

    fn wrap_label(&self, kind: OpKind) -> String {
        match self.capture_mode {
            CaptureMode::PerTransition => match kind {
                OpKind::Amend => "amend".to_string(),
                _ => "statetransition".to_string(),
            },
            CaptureMode::PerSequence => format!("operation:{}", kind.name()),
        }
    }

    fn log(&mut self, op_id: u64, lamport: u64, phase: LogPhase, event: Event) {
        let seq = self.event_log.len() as u64;
        self.event_log.push(LogEntry {
            seq,
            op_id,
            lamport,
            phase,
            event,
        });
    }

    fn record_transfer(&mut self, op_id: u64, lamport: u64, t: &Transfer) {
        self.transfer_log.push(TransferEntry {
            op_id,
            from: t.from,
            to: t.to,
            amount: t.amount.clone(),
            econ: t.econ.clone(),
            lamport,
        });
    }

    /// Marks a contract terminated, returning a snapshot of the record for
    /// successor construction.
    fn terminate(&mut self, econ: &EconId) -> ContractRecord {
        let record = self.contracts.get_mut(econ).expect("validated");
        record.status = ContractStatus::Terminated;
        record.clone()
    }

    fn create_contract(
        &mut self,
        econ: EconId,
        event: &Transfer,
        op_id: u64,
        lineage: ProvenanceNode,
        base_state: ContractState,
        cfg: &CaptureConfig,
    ) {
        let state = match event.amount.quantity() {
            Some((q, _)) => base_state.update("quantity", observed_quantity(q, op_id, cfg), cfg),
            None => base_state,
        };
        self.contracts.insert(
            econ.clone(),
            ContractRecord {
                econ_id: econ,
                parties: parties_of(event),
                state,
                status: ContractStatus::Active,
                quantity: event.amount.clone(),
                lineage,
            },
        );
    }

    fn adjust_quantity(&mut self, after_t: &Transfer, op_id: u64, wrap: &str, cfg: &CaptureConfig) {
        let econ = after_t.econ.econ_id().unwrap();
        let record = self.contracts.get_mut(econ).expect("validated");
        record.quantity = after_t.amount.clone();
        let old_root = std::mem::replace(
            &mut record.lineage,
            ProvenanceNode::Orig {
                label: String::new(),
                snapshot: None,
                ts: None,
            },
        );
        record.lineage = derived_node(
            wrap,
            quantity_value(&after_t.amount),
            vec![old_root],
            cfg,
        );
        if let Some((q, _)) = after_t.amount.quantity() {
            record.state = record
                .state
                .update("quantity", observed_quantity(q, op_id, cfg), cfg);
        }
    }

    /// Serializes the full ledger as one JSON document.
    pub fn write_snapshot<W: Write>(&self, w: W) -> io::Result<()> {
        serde_json::to_writer_pretty(w, self).map_err(io::Error::from)
    }

    pub fn read_snapshot<R: io::Read>(r: R) -> Result<Ledger, serde_json::Error> {
        serde_json::from_reader(r)
    }

    /// Writes the event log as newline-delimited JSON.
    pub fn write_event_log<W: Write>(&self, mut w: W) -> io::Result<()> {
        for entry in &self.event_log {
            serde_json::to_writer(&mut w, entry).map_err(io::Error::from)?;
            w.write_all(b"\n")?;
        }
        Ok(())
    }
}

fn observed_quantity(q: Decimal, op_id: u64, cfg: &CaptureConfig) -> AugValue {
    observe(q, &op_label(op_id), cfg).expect("non-empty label")
}

#[derive(Debug, Error)]
pub enum LogReadError {
    #[error("log line {line}: {source}")]
    Parse {
        line: usize,
        #[source]
        source: serde_json::Error,
    },
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// Reads a newline-delimited event log; blank lines are ignored.
pub fn read_event_log<R: BufRead>(r: R) -> Result<Vec<LogEntry>, LogReadError> {
    let mut entries = Vec::new();
    for (i, line) in r.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let entry = serde_json::from_str(&line)
            .map_err(|source| LogReadError::Parse { line: i + 1, source })?;
        entries.push(entry);
    }
    Ok(entries)
}

/// Regroups log lines into the operations that produced them. Lines of one
/// operation are consecutive and share (opId, lamport).
pub fn operations_from_log(entries: &[LogEntry]) -> Result<Vec<Operation>, String> {
    let mut ops = Vec::new();
    let mut groups: Vec<&[LogEntry]> = Vec::new();
    let mut start = 0;
    for i in 1..=entries.len() {
        let boundary = i == entries.len()
            || entries[i].op_id != entries[start].op_id
            || entries[i].lamport != entries[start].lamport;
        if boundary {
            groups.push(&entries[start..i]);
            start = i;
        }
    }
    for group in groups {
        let before: Vec<Event> = group
            .iter()
            .filter(|e| e.phase == LogPhase::Before)
            .map(|e| e.event.clone())
            .collect();
        let after: Vec<Event> = group
            .iter()
            .filter(|e| e.phase == LogPhase::After)
            .map(|e| e.event.clone())
            .collect();
        let op = Operation::from_parts(before, after)
            .map_err(|e| format!("log group starting at seq {}: {e}", group[0].seq))?;
        ops.push(op);
    }
    Ok(ops)
}

#[derive(Debug)]
pub struct ReplayError {
    pub op_index: usize,
    pub report: ValidationReport,
}

impl std::fmt::Display for ReplayError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "operation {} rejected:\n{}", self.op_index, self.report)
    }
}

impl std::error::Error for ReplayError {}
