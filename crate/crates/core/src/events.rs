//! Transfer events and the operations that bundle them.
//!
//! An [`Operation`] is a pair of ordered event sequences: `before` states
//! facts that must already hold, `after` lists the transfers to action.
//! Every after-event of one operation carries the same event id, the
//! operation id. The constructors below produce the standard lifecycle
//! shapes (new trade, terminate for cash, amend, split, partial assignment,
//! multilateral tear-up); [`lint`] flags the ambiguities those shapes can
//! carry (unspecified transfer kind, missing or zero amounts, no-op events,
//! unmarked contract creation).

use rust_decimal::Decimal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum OperationError {
    #[error("economics reference is required")]
    MissingEconomics,
    #[error("party reference is required")]
    MissingParty,
    #[error("amount is required for this position")]
    MissingAmount,
    #[error("sending and receiving party must differ")]
    SameParty,
    #[error("economics references must differ")]
    SameEconomics,
    #[error("quantity must be positive")]
    NonPositiveQuantity,
    #[error("amounts carry different units")]
    UnitMismatch,
    #[error("adjusted amount would be negative")]
    NegativeResidual,
    #[error("amount arithmetic overflow")]
    Overflow,
    #[error("an operation needs at least one after-event")]
    EmptyAfter,
    #[error("after-events must share one concrete event id")]
    NonUniformId,
}

/// Event identifier; the after-events of one operation share one.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(from = "Option<u64>", into = "Option<u64>")]
pub enum EventId {
    NoEventId,
    Id(u64),
}

impl From<Option<u64>> for EventId {
    fn from(v: Option<u64>) -> Self {
        v.map_or(EventId::NoEventId, EventId::Id)
    }
}

impl From<EventId> for Option<u64> {
    fn from(v: EventId) -> Self {
        match v {
            EventId::NoEventId => None,
            EventId::Id(n) => Some(n),
        }
    }
}

/// Reference to a party, by identifier.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(from = "Option<u32>", into = "Option<u32>")]
pub enum PartyRef {
    NoParty,
    Party(u32),
}

impl From<Option<u32>> for PartyRef {
    fn from(v: Option<u32>) -> Self {
        v.map_or(PartyRef::NoParty, PartyRef::Party)
    }
}

impl From<PartyRef> for Option<u32> {
    fn from(v: PartyRef) -> Self {
        match v {
            PartyRef::NoParty => None,
            PartyRef::Party(n) => Some(n),
        }
    }
}

impl From<u32> for PartyRef {
    fn from(n: u32) -> Self {
        PartyRef::Party(n)
    }
}

#[derive(Serialize, Deserialize, Clone)]
struct AmountJson {
    q: Decimal,
    unit: String,
}

/// A quantity with a unit code, or explicitly no amount.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(from = "Option<AmountJson>", into = "Option<AmountJson>")]
pub enum Amount {
    NoAmount,
    Amount { q: Decimal, unit: String },
}

impl From<Option<AmountJson>> for Amount {
    fn from(v: Option<AmountJson>) -> Self {
        v.map_or(Amount::NoAmount, |a| Amount::Amount {
            q: a.q,
            unit: a.unit,
        })
    }
}

impl From<Amount> for Option<AmountJson> {
    fn from(v: Amount) -> Self {
        match v {
            Amount::NoAmount => None,
            Amount::Amount { q, unit } => Some(AmountJson { q, unit }),
        }
    }
}

impl Amount {
    pub fn new(q: impl Into<Decimal>, unit: &str) -> Self {
        Amount::Amount {
            q: q.into(),
            unit: unit.to_string(),
        }
    }

    pub fn quantity(&self) -> Option<(Decimal, &str)> {
        match self {
            Amount::NoAmount => None,
            Amount::Amount { q, unit } => Some((*q, unit)),
        }
    }

    pub fn is_zero(&self) -> bool {
        matches!(self, Amount::Amount { q, .. } if q.is_zero())
    }

    fn require(&self) -> Result<(Decimal, &str), OperationError> {
        self.quantity().ok_or(OperationError::MissingAmount)
    }

    fn require_positive(&self) -> Result<(Decimal, &str), OperationError> {
        let (q, unit) = self.require()?;
        if q <= Decimal::ZERO {
            return Err(OperationError::NonPositiveQuantity);
        }
        Ok((q, unit))
    }

    /// Sum of two concrete amounts; units must agree.
    pub fn checked_add(&self, other: &Amount) -> Result<Amount, OperationError> {
        let (a, ua) = self.require()?;
        let (b, ub) = other.require()?;
        if ua != ub {
            return Err(OperationError::UnitMismatch);
        }
        let q = a.checked_add(b).ok_or(OperationError::Overflow)?;
        Ok(Amount::new(q, ua))
    }

    /// Same unit, quantity shifted by `delta`; negative results rejected.
    fn adjusted(&self, delta: Decimal) -> Result<Amount, OperationError> {
        let (q, unit) = self.require()?;
        let q = q.checked_add(delta).ok_or(OperationError::Overflow)?;
        if q < Decimal::ZERO {
            return Err(OperationError::NegativeResidual);
        }
        Ok(Amount::new(q, unit))
    }
}

/// Opaque identifier of an economic description.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct EconId(pub String);

impl EconId {
    pub fn new(id: impl Into<String>) -> Self {
        EconId(id.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl From<&str> for EconId {
    fn from(s: &str) -> Self {
        EconId(s.to_string())
    }
}

impl std::fmt::Display for EconId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

/// Reference to an economic description, or explicitly none.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(from = "Option<EconId>", into = "Option<EconId>")]
pub enum EconRef {
    NoEconomics,
    Econ(EconId),
}

impl From<Option<EconId>> for EconRef {
    fn from(v: Option<EconId>) -> Self {
        v.map_or(EconRef::NoEconomics, EconRef::Econ)
    }
}

impl From<EconRef> for Option<EconId> {
    fn from(v: EconRef) -> Self {
        match v {
            EconRef::NoEconomics => None,
            EconRef::Econ(id) => Some(id),
        }
    }
}

impl From<EconId> for EconRef {
    fn from(id: EconId) -> Self {
        EconRef::Econ(id)
    }
}

impl From<&str> for EconRef {
    fn from(s: &str) -> Self {
        EconRef::Econ(EconId::from(s))
    }
}

impl EconRef {
    pub fn econ_id(&self) -> Option<&EconId> {
        match self {
            EconRef::NoEconomics => None,
            EconRef::Econ(id) => Some(id),
        }
    }

    fn require(&self) -> Result<&EconId, OperationError> {
        self.econ_id().ok_or(OperationError::MissingEconomics)
    }
}

/// Whether a transfer moves cash, an asset, or is not stated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TransferKind {
    Payment,
    Delivery,
    #[default]
    Unspecified,
}

/// One bilateral transfer: `from` sends `amount` to `to`, in the context of
/// economics `econ`. `new_contract` marks events that begin a new contract
/// record.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Transfer {
    pub id: EventId,
    pub from: PartyRef,
    pub to: PartyRef,
    pub amount: Amount,
    pub econ: EconRef,
    #[serde(default)]
    pub kind: TransferKind,
    #[serde(default)]
    pub new_contract: bool,
}

/// An event slot: either a transfer or explicitly nothing.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(from = "Option<Transfer>", into = "Option<Transfer>")]
pub enum Event {
    NoEvent,
    Transfer(Transfer),
}

impl From<Option<Transfer>> for Event {
    fn from(v: Option<Transfer>) -> Self {
        v.map_or(Event::NoEvent, Event::Transfer)
    }
}

impl From<Event> for Option<Transfer> {
    fn from(v: Event) -> Self {
        match v {
            Event::NoEvent => None,
            Event::Transfer(t) => Some(t),
        }
    }
}

impl Event {
    pub fn transfer(&self) -> Option<&Transfer> {
        match self {
            Event::NoEvent => None,
            Event::Transfer(t) => Some(t),
        }
    }
}

fn transfer(id: u64, from: PartyRef, to: PartyRef, amount: Amount, econ: EconRef) -> Event {
    Event::Transfer(Transfer {
        id: EventId::Id(id),
        from,
        to,
        amount,
        econ,
        kind: TransferKind::Unspecified,
        new_contract: false,
    })
}

fn payment(id: u64, from: PartyRef, to: PartyRef, amount: Amount, econ: EconRef) -> Event {
    Event::Transfer(Transfer {
        kind: TransferKind::Payment,
        ..match transfer(id, from, to, amount, econ) {
            Event::Transfer(t) => t,
            Event::NoEvent => unreachable!(),
        }
    })
}

fn creation(id: u64, from: PartyRef, to: PartyRef, amount: Amount, econ: EconRef) -> Event {
    Event::Transfer(Transfer {
        new_contract: true,
        ..match transfer(id, from, to, amount, econ) {
            Event::Transfer(t) => t,
            Event::NoEvent => unreachable!(),
        }
    })
}

/// A state transition request: preconditions (`before`) plus the transfers
/// to action (`after`).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "OperationJson", into = "OperationJson")]
pub struct Operation {
    before: Vec<Event>,
    after: Vec<Event>,
}

#[derive(Serialize, Deserialize, Clone)]
struct OperationJson {
    #[serde(rename = "opId")]
    op_id: u64,
    before: Vec<Event>,
    after: Vec<Event>,
}

impl TryFrom<OperationJson> for Operation {
    type Error = String;

    fn try_from(json: OperationJson) -> Result<Self, Self::Error> {
        let op = Operation::from_parts(json.before, json.after).map_err(|e| e.to_string())?;
        if op.op_id() != json.op_id {
            return Err(format!(
                "opId {} disagrees with after-event id {}",
                json.op_id,
                op.op_id()
            ));
        }
        Ok(op)
    }
}

impl From<Operation> for OperationJson {
    fn from(op: Operation) -> Self {
        OperationJson {
            op_id: op.op_id(),
            before: op.before,
            after: op.after,
        }
    }
}

impl Operation {
    /// Builds an operation, checking the after-sequence invariants: at
    /// least one event, all of them transfers sharing one concrete id.
    pub fn from_parts(before: Vec<Event>, after: Vec<Event>) -> Result<Self, OperationError> {
        let mut shared_id = None;
        if after.is_empty() {
            return Err(OperationError::EmptyAfter);
        }
        for event in &after {
            let id = match event.transfer().map(|t| t.id) {
                Some(EventId::Id(n)) => n,
                _ => return Err(OperationError::NonUniformId),
            };
            if *shared_id.get_or_insert(id) != id {
                return Err(OperationError::NonUniformId);
            }
        }
        Ok(Operation { before, after })
    }

    pub fn before(&self) -> &[Event] {
        &self.before
    }

    pub fn after(&self) -> &[Event] {
        &self.after
    }

    /// The shared id of the after-events.
    pub fn op_id(&self) -> u64 {
        match self.after[0].transfer().map(|t| t.id) {
            Some(EventId::Id(n)) => n,
            _ => unreachable!("enforced by from_parts"),
        }
    }
}

/// Form of the before-sequence for a new trade: a single explicit NoEvent,
/// or an empty list. Both validate identically.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum NewBefore {
    #[default]
    Marker,
    Empty,
}

/// Books a new trade: nothing before, one creation event after.
pub fn new_op(
    op_id: u64,
    econ: impl Into<EconRef>,
    party1: impl Into<PartyRef>,
    party2: impl Into<PartyRef>,
    quantity: Amount,
) -> Result<Operation, OperationError> {
    new_op_styled(NewBefore::Marker, op_id, econ, party1, party2, quantity)
}

pub fn new_op_styled(
    style: NewBefore,
    op_id: u64,
    econ: impl Into<EconRef>,
    party1: impl Into<PartyRef>,
    party2: impl Into<PartyRef>,
    quantity: Amount,
) -> Result<Operation, OperationError> {
    let econ = econ.into();
    econ.require()?;
    let party1 = concrete_party(party1)?;
    let party2 = concrete_party(party2)?;
    let before = match style {
        NewBefore::Marker => vec![Event::NoEvent],
        NewBefore::Empty => vec![],
    };
    Operation::from_parts(before, vec![creation(op_id, party1, party2, quantity, econ)])
}

/// Ends a contract against a cash settlement. The cash after-event carries
/// no economics: it is a pure payment.
pub fn terminate_for_cash(
    id1: u64,
    op_id: u64,
    from: impl Into<PartyRef>,
    to: impl Into<PartyRef>,
    quantity: Amount,
    cash: Amount,
    econ: impl Into<EconRef>,
) -> Result<Operation, OperationError> {
    let econ = econ.into();
    econ.require()?;
    let from = concrete_party(from)?;
    let to = concrete_party(to)?;
    if from == to {
        return Err(OperationError::SameParty);
    }
    Operation::from_parts(
        vec![transfer(id1, from, to, quantity, econ)],
        vec![payment(op_id, from, to, cash, EconRef::NoEconomics)],
    )
}

/// Replaces the economic description e1 by e2 (quantity may change too).
pub fn amend(
    id1: u64,
    op_id: u64,
    from: impl Into<PartyRef>,
    to: impl Into<PartyRef>,
    quantity1: Amount,
    quantity2: Amount,
    e1: impl Into<EconRef>,
    e2: impl Into<EconRef>,
) -> Result<Operation, OperationError> {
    let e1 = e1.into();
    let e2 = e2.into();
    e1.require()?;
    e2.require()?;
    if e1 == e2 {
        return Err(OperationError::SameEconomics);
    }
    let from = concrete_party(from)?;
    let to = concrete_party(to)?;
    Operation::from_parts(
        vec![transfer(id1, from, to, quantity1, e1)],
        vec![creation(op_id, from, to, quantity2, e2)],
    )
}

/// Splits a contract into two, preserving the total quantity. The before
/// amount is q1+q2 by construction.
pub fn split(
    id1: u64,
    op_id: u64,
    from: impl Into<PartyRef>,
    to: impl Into<PartyRef>,
    t1: impl Into<PartyRef>,
    t2: impl Into<PartyRef>,
    q1: Amount,
    q2: Amount,
    econ: impl Into<EconRef>,
) -> Result<Operation, OperationError> {
    let econ = econ.into();
    econ.require()?;
    let from = concrete_party(from)?;
    let to = concrete_party(to)?;
    let t1 = concrete_party(t1)?;
    let t2 = concrete_party(t2)?;
    q1.require_positive()?;
    q2.require_positive()?;
    let total = q1.checked_add(&q2)?;
    Operation::from_parts(
        vec![transfer(id1, from, to, total, econ.clone())],
        vec![
            creation(op_id, from, t1, q1, econ.clone()),
            creation(op_id, from, t2, q2, econ),
        ],
    )
}

/// Assigns part of a contract to a third party t1 against a cash fee.
/// Both resulting positions reference the successor economics e2.
pub fn partial_assign(
    id1: u64,
    op_id: u64,
    from: impl Into<PartyRef>,
    to: impl Into<PartyRef>,
    t1: impl Into<PartyRef>,
    q1: Amount,
    q2: Amount,
    cash: Amount,
    e1: impl Into<EconRef>,
    e2: impl Into<EconRef>,
) -> Result<Operation, OperationError> {
    let e1 = e1.into();
    let e2 = e2.into();
    e1.require()?;
    e2.require()?;
    if e1 == e2 {
        return Err(OperationError::SameEconomics);
    }
    let from = concrete_party(from)?;
    let to = concrete_party(to)?;
    let t1 = concrete_party(t1)?;
    q1.require_positive()?;
    q2.require_positive()?;
    let total = q1.checked_add(&q2)?;
    Operation::from_parts(
        vec![transfer(id1, from, to, total, e1)],
        vec![
            creation(op_id, from, to, q1, e2.clone()),
            creation(op_id, from, t1, q2, e2),
            payment(op_id, to, t1, cash, EconRef::NoEconomics),
        ],
    )
}

/// Cancels a set of contracts and nets the residual exposure: e2 is left
/// unchanged, e3 shrinks by x, e4 grows by y, e5 is created at q5, and a
/// cash amount settles against the currency economics e6. Every event of
/// the operation (before and after) carries the operation id.
#[allow(clippy::too_many_arguments)]
pub fn tear_up(
    op_id: u64,
    from: impl Into<PartyRef>,
    to: impl Into<PartyRef>,
    cancelled: Vec<(Amount, EconRef)>,
    q2: Amount,
    q3: Amount,
    q4: Amount,
    q5: Amount,
    x: Decimal,
    y: Decimal,
    cash: Amount,
    e2: impl Into<EconRef>,
    e3: impl Into<EconRef>,
    e4: impl Into<EconRef>,
    e5: impl Into<EconRef>,
    e6: impl Into<EconRef>,
) -> Result<Operation, OperationError> {
    let (e2, e3, e4) = (e2.into(), e3.into(), e4.into());
    let (e5, e6) = (e5.into(), e6.into());
    for e in [&e2, &e3, &e4, &e5, &e6] {
        e.require()?;
    }
    let from = concrete_party(from)?;
    let to = concrete_party(to)?;
    let q3_after = q3.adjusted(-x)?;
    let q4_after = q4.adjusted(y)?;

    let mut before = Vec::with_capacity(cancelled.len() + 3);
    for (qx, ex) in cancelled {
        ex.require()?;
        before.push(transfer(op_id, from, to, qx, ex));
    }
    before.push(transfer(op_id, from, to, q2.clone(), e2.clone()));
    before.push(transfer(op_id, from, to, q3, e3.clone()));
    before.push(transfer(op_id, from, to, q4, e4.clone()));

    let after = vec![
        transfer(op_id, from, to, q2, e2),
        transfer(op_id, from, to, q3_after, e3),
        transfer(op_id, from, to, q4_after, e4),
        creation(op_id, from, to, q5, e5),
        payment(op_id, from, to, cash, e6),
    ];
    Operation::from_parts(before, after)
}

fn concrete_party(p: impl Into<PartyRef>) -> Result<PartyRef, OperationError> {
    match p.into() {
        PartyRef::NoParty => Err(OperationError::MissingParty),
        party @ PartyRef::Party(_) => Ok(party),
    }
}

/// Where a lint finding sits inside an operation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum EventPhase {
    Before,
    After,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct LintWarning {
    pub phase: EventPhase,
    pub index: usize,
    pub finding: LintFinding,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case", tag = "code")]
pub enum LintFinding {
    /// An after-event identical to a before-event actions nothing.
    NoChange { before_index: usize },
    /// Transfer kind left Unspecified on a non-creation event.
    UnspecifiedKind,
    /// A transfer without an amount.
    MissingAmount,
    /// A transfer of exactly zero.
    ZeroAmount,
    /// An after-event introducing fresh economics without the
    /// new-contract mark.
    UnmarkedCreation,
}

impl std::fmt::Display for LintWarning {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let phase = match self.phase {
            EventPhase::Before => "before",
            EventPhase::After => "after",
        };
        write!(f, "{phase}[{}]: ", self.index)?;
        match &self.finding {
            LintFinding::NoChange { before_index } => write!(
                f,
                "identical to before[{before_index}]; an event that changes nothing"
            ),
            LintFinding::UnspecifiedKind => {
                write!(f, "transfer kind unspecified (payment or delivery?)")
            }
            LintFinding::MissingAmount => write!(f, "transfer carries no amount"),
            LintFinding::ZeroAmount => write!(f, "transfer amount is zero"),
            LintFinding::UnmarkedCreation => write!(
                f,
                "references economics unknown to the before-events but is not marked as a new contract"
            ),
        }
    }
}

/// Structural diagnostics over one operation. Warnings never block
/// validation or apply; they surface the ambiguities an operation shape
/// can carry.
pub fn lint(op: &Operation) -> Vec<LintWarning> {
    let mut warnings = Vec::new();
    let before_econs: Vec<&EconId> = op
        .before()
        .iter()
        .filter_map(|e| e.transfer())
        .filter_map(|t| t.econ.econ_id())
        .collect();

    fn check_transfer(warnings: &mut Vec<LintWarning>, phase: EventPhase, index: usize, t: &Transfer) {
        if t.kind == TransferKind::Unspecified && !t.new_contract {
            warnings.push(LintWarning {
                phase,
                index,
                finding: LintFinding::UnspecifiedKind,
            });
        }
        if t.amount == Amount::NoAmount {
            warnings.push(LintWarning {
                phase,
                index,
                finding: LintFinding::MissingAmount,
            });
        } else if t.amount.is_zero() {
            warnings.push(LintWarning {
                phase,
                index,
                finding: LintFinding::ZeroAmount,
            });
        }
    }

    for (i, event) in op.before().iter().enumerate() {
        if let Some(t) = event.transfer() {
            check_transfer(&mut warnings, EventPhase::Before, i, t);
        }
    }
    for (i, event) in op.after().iter().enumerate() {
        let t = match event.transfer() {
            Some(t) => t,
            None => continue,
        };
        if let Some(j) = op.before().iter().position(|b| b == event) {
            warnings.push(LintWarning {
                phase: EventPhase::After,
                index: i,
                finding: LintFinding::NoChange { before_index: j },
            });
        }
        check_transfer(&mut warnings, EventPhase::After, i, t);
        if let Some(econ) = t.econ.econ_id() {
            let known = before_econs.iter().any(|e| *e == econ);
            if !known && !t.new_contract && t.kind != TransferKind::Payment {
                warnings.push(LintWarning {
                    phase: EventPhase::After,
                    index: i,
                    finding: LintFinding::UnmarkedCreation,
                });
            }
        }
    }
    warnings
}
