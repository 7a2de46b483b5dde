//! A deterministic discrete-event simulation of replicated object stores.
//!
//! Replicas hold versioned objects and exchange full-object updates over
//! links with bounded random delay. Concurrent writes are detected with
//! vector clocks and resolved last-writer-wins, using the writer's Lamport
//! stamp with the writer id as tie-break, so every replica picks the same
//! winner without coordination. Network partitions hold messages back;
//! nothing is ever dropped, which is what makes convergence a theorem
//! rather than a hope.
//!
//! All randomness comes from one seeded generator, so a scenario replays
//! bit-identically.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::clocks::{CausalOrder, ClockOverflow, LamportClock, NodeId, VectorClock};

/// Who is entitled to hold a copy of an object.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SharingLevel {
    /// Only the writing replica.
    Private,
    /// A fixed set of replicas; must include the first writer.
    Counterparties(BTreeSet<NodeId>),
    /// All replicas.
    Everyone,
}

/// One replicated object as stored at a replica.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VersionedObject {
    pub object_id: String,
    pub payload: String,
    pub version: VectorClock,
    pub sharing: SharingLevel,
    /// True when this value is the result of merging concurrent writes.
    /// Cleared by the next write that supersedes the merge.
    pub conflict: bool,
    pub writer: NodeId,
    pub write_lamport: u64,
}

#[derive(Debug, Clone, Serialize)]
pub struct Replica {
    pub id: NodeId,
    pub store: BTreeMap<String, VersionedObject>,
    pub clock: VectorClock,
    pub lamport: LamportClock,
}

impl Replica {
    fn new(id: NodeId) -> Self {
        Replica {
            id,
            store: BTreeMap::new(),
            clock: VectorClock::new(),
            lamport: LamportClock::new(id),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DelayRange {
    pub min: u64,
    pub max: u64,
}

/// Link `a <-> b` is down for steps `from..=to` (both directions).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Partition {
    pub a: NodeId,
    pub b: NodeId,
    pub from: u64,
    pub to: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SimConfig {
    pub replicas: u32,
    pub seed: u64,
    pub delay: DelayRange,
    #[serde(default)]
    pub partitions: Vec<Partition>,
}

/// A scripted write: at `step`, `replica` sets `object` to `payload`.
/// `sharing` is required on the object's first write and must be absent or
/// unchanged afterwards.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WriteCmd {
    pub step: u64,
    pub replica: NodeId,
    pub object: String,
    pub payload: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sharing: Option<SharingLevel>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Scenario {
    #[serde(flatten)]
    pub config: SimConfig,
    pub writes: Vec<WriteCmd>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SimError {
    #[error("invalid scenario: {0}")]
    InvalidConfig(String),
    #[error("write at step {step} by replica {replica} on {object}: {detail}")]
    SharingViolation {
        step: u64,
        replica: NodeId,
        object: String,
        detail: String,
    },
    #[error(transparent)]
    Clock(#[from] ClockOverflow),
    #[error("no quiescence within {0} steps")]
    NoQuiescence(u64),
}

/// What happened at a replica, with its clocks as of just after the event.
/// Write events are numbered globally (`write_seq`); a delivery names the
/// write it carries, which pins down the exact message graph.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SimEvent {
    pub replica: NodeId,
    pub step: u64,
    pub kind: SimEventKind,
    pub vc: VectorClock,
    pub lamport: LamportClock,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SimEventKind {
    Write { object: String, write_seq: u64 },
    Deliver { object: String, from: NodeId, of_write: u64 },
}

#[derive(Debug, Clone)]
struct Message {
    msg_id: u64,
    src: NodeId,
    dst: NodeId,
    deliver_at: u64,
    object: VersionedObject,
    of_write: u64,
}

#[derive(Debug, Clone)]
struct ObjectTrack {
    sharing: SharingLevel,
    last_write_step: u64,
    agreement_step: Option<u64>,
    conflicts: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ObjectReport {
    pub object: String,
    pub sharing: SharingLevel,
    /// None while the simulation is not quiescent: no verdict either way.
    pub converged: Option<bool>,
    pub conflicts: u64,
    pub last_write_step: u64,
    pub agreement_step: Option<u64>,
    /// Steps from the last write until all entitled replicas agreed.
    pub lag: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConvergenceReport {
    pub quiescent: bool,
    pub steps: u64,
    pub objects: Vec<ObjectReport>,
}

pub struct Simulation {
    config: SimConfig,
    replicas: Vec<Replica>,
    pending: VecDeque<WriteCmd>,
    in_flight: Vec<Message>,
    now: u64,
    rng: ChaCha8Rng,
    next_msg_id: u64,
    write_seq: u64,
    tracks: BTreeMap<String, ObjectTrack>,
    events: Vec<SimEvent>,
}

impl Simulation {
    pub fn new(config: SimConfig) -> Result<Self, SimError> {
        let invalid = |msg: String| Err(SimError::InvalidConfig(msg));
        if config.replicas == 0 {
            return invalid("at least one replica is required".into());
        }
        if config.delay.min == 0 {
            return invalid("delivery takes at least one step (delay.min >= 1)".into());
        }
        if config.delay.min > config.delay.max {
            return invalid("delay.min exceeds delay.max".into());
        }
        for p in &config.partitions {
            if p.a == p.b {
                return invalid(format!("partition of replica {} against itself", p.a));
            }
            if p.a >= config.replicas || p.b >= config.replicas {
                return invalid(format!("partition names unknown replica ({}, {})", p.a, p.b));
            }
            if p.from > p.to {
                return invalid(format!("partition interval [{}, {}] is empty", p.from, p.to));
            }
        }
        let replicas = (0..config.replicas).map(Replica::new).collect();
        let rng = ChaCha8Rng::seed_from_u64(config.seed);
        Ok(Simulation {
            config,
            replicas,
            pending: VecDeque::new(),
            in_flight: Vec::new(),
            now: 0,
            rng,
            next_msg_id: 0,
            write_seq: 0,
            tracks: BTreeMap::new(),
            events: Vec::new(),
        })
    }

    pub fn from_scenario(scenario: Scenario) -> Result<Self, SimError> {
        let mut sim = Simulation::new(scenario.config)?;
        sim.schedule(scenario.writes)?;
        Ok(sim)
    }

    /// Queues scripted writes. Steps start at 1; ties keep script order.
    pub fn schedule(&mut self, writes: Vec<WriteCmd>) -> Result<(), SimError> {
        for w in &writes {
            if w.replica >= self.config.replicas {
                return Err(SimError::InvalidConfig(format!(
                    "write on {} names unknown replica {}",
                    w.object, w.replica
                )));
            }
            if w.step <= self.now {
                return Err(SimError::InvalidConfig(format!(
                    "write on {} scheduled at past step {}",
                    w.object, w.step
                )));
            }
        }
        let mut all: Vec<WriteCmd> = self.pending.drain(..).chain(writes).collect();
        all.sort_by_key(|w| w.step);
        self.pending = all.into();
        Ok(())
    }

    pub fn now(&self) -> u64 {
        self.now
    }

    pub fn replicas(&self) -> &[Replica] {
        &self.replicas
    }

    pub fn replica(&self, id: NodeId) -> &Replica {
        &self.replicas[id as usize]
    }

    pub fn events(&self) -> &[SimEvent] {
        &self.events
    }

    /// Nothing scripted remains and nothing is in flight.
    pub fn quiescent(&self) -> bool {
        self.pending.is_empty() && self.in_flight.is_empty()
    }

    /// Advances time by one step: deliveries due at the new step first,
    /// then the writes scripted for it.
    pub fn step(&mut self) -> Result<(), SimError> {
        self.now += 1;
        self.deliver_due()?;
        while self.pending.front().is_some_and(|w| w.step == self.now) {
            let cmd = self.pending.pop_front().unwrap();
            self.local_write(&cmd)?;
        }
        self.check_agreement();
        Ok(())
    }

    pub fn run_to_quiescence(&mut self, max_steps: u64) -> Result<u64, SimError> {
        while !self.quiescent() {
            if self.now >= max_steps {
                return Err(SimError::NoQuiescence(max_steps));
            }
            self.step()?;
        }
        Ok(self.now)
    }

    /// Convergence verdict per shared object. Only meaningful after
    /// quiescence; before that `converged` stays undecided.
    pub fn check_convergence(&self) -> ConvergenceReport {
        let quiescent = self.quiescent();
        let objects = self
            .tracks
            .iter()
            .map(|(object, track)| ObjectReport {
                object: object.clone(),
                sharing: track.sharing.clone(),
                converged: if quiescent {
                    Some(track.agreement_step.is_some())
                } else {
                    None
                },
                conflicts: track.conflicts,
                last_write_step: track.last_write_step,
                agreement_step: track.agreement_step,
                lag: track
                    .agreement_step
                    .map(|s| s.saturating_sub(track.last_write_step)),
            })
            .collect();
        ConvergenceReport {
            quiescent,
            steps: self.now,
            objects,
        }
    }

    fn link_down(&self, a: NodeId, b: NodeId, step: u64) -> bool {
        self.config.partitions.iter().any(|p| {
            ((p.a == a && p.b == b) || (p.a == b && p.b == a)) && p.from <= step && step <= p.to
        })
    }

    fn deliver_due(&mut self) -> Result<(), SimError> {
        let now = self.now;
        let mut due = Vec::new();
        let mut i = 0;
        while i < self.in_flight.len() {
            let m = &self.in_flight[i];
            if m.deliver_at <= now && !self.link_down(m.src, m.dst, now) {
                due.push(self.in_flight.remove(i));
            } else {
                i += 1;
            }
        }
        due.sort_by_key(|m| (m.deliver_at, m.msg_id));
        for m in due {
            self.receive(m)?;
        }
        Ok(())
    }

    fn receive(&mut self, m: Message) -> Result<(), SimError> {
        let object_id = m.object.object_id.clone();
        let r = &mut self.replicas[m.dst as usize];
        r.lamport = r.lamport.recv(m.object.write_lamport)?;
        r.clock = r.clock.merge(&m.object.version).tick(m.dst);
        let vc = r.clock.clone();
        let lamport = r.lamport;
        let resolved = merge_incoming(&mut r.store, m.object);
        if resolved {
            if let Some(track) = self.tracks.get_mut(&object_id) {
                track.conflicts += 1;
            }
        }
        self.events.push(SimEvent {
            replica: m.dst,
            step: self.now,
            kind: SimEventKind::Deliver {
                object: object_id,
                from: m.src,
                of_write: m.of_write,
            },
            vc,
            lamport,
        });
        Ok(())
    }

    fn local_write(&mut self, cmd: &WriteCmd) -> Result<(), SimError> {
        let violation = |detail: String| SimError::SharingViolation {
            step: cmd.step,
            replica: cmd.replica,
            object: cmd.object.clone(),
            detail,
        };
        let stored_sharing = self.replicas[cmd.replica as usize]
            .store
            .get(&cmd.object)
            .map(|o| o.sharing.clone());
        let effective = match (stored_sharing, cmd.sharing.clone()) {
            (None, None) => {
                return Err(violation("first write must declare a sharing level".into()))
            }
            (None, Some(s)) => {
                self.check_first_sharing(&s, cmd.replica).map_err(violation)?;
                s
            }
            (Some(current), None) => current,
            (Some(current), Some(s)) => {
                if s != current {
                    return Err(violation(
                        "sharing is fixed at the object's first write".into(),
                    ));
                }
                current
            }
        };

        self.write_seq += 1;
        let of_write = self.write_seq;
        let r = &mut self.replicas[cmd.replica as usize];
        r.lamport = r.lamport.tick()?;
        let base = r
            .store
            .get(&cmd.object)
            .map(|o| o.version.clone())
            .unwrap_or_default();
        let version = base.merge(&r.clock).tick(cmd.replica);
        r.clock = version.clone();
        let object = VersionedObject {
            object_id: cmd.object.clone(),
            payload: cmd.payload.clone(),
            version: version.clone(),
            sharing: effective.clone(),
            conflict: false,
            writer: cmd.replica,
            write_lamport: r.lamport.time(),
        };
        r.store.insert(cmd.object.clone(), object.clone());
        let lamport = r.lamport;

        self.events.push(SimEvent {
            replica: cmd.replica,
            step: self.now,
            kind: SimEventKind::Write {
                object: cmd.object.clone(),
                write_seq: of_write,
            },
            vc: version,
            lamport,
        });

        if effective != SharingLevel::Private {
            let track = self
                .tracks
                .entry(cmd.object.clone())
                .or_insert_with(|| ObjectTrack {
                    sharing: effective.clone(),
                    last_write_step: self.now,
                    agreement_step: None,
                    conflicts: 0,
                });
            track.last_write_step = self.now;
            track.agreement_step = None;
        }

        // Destinations in ascending id: the rng draw order is part of the
        // deterministic contract.
        for dst in entitled(&effective, self.config.replicas) {
            if dst == cmd.replica {
                continue;
            }
            let delay = self.rng.gen_range(self.config.delay.min..=self.config.delay.max);
            self.next_msg_id += 1;
            self.in_flight.push(Message {
                msg_id: self.next_msg_id,
                src: cmd.replica,
                dst,
                deliver_at: self.now + delay,
                object: object.clone(),
                of_write,
            });
        }
        Ok(())
    }

    fn check_first_sharing(&self, sharing: &SharingLevel, writer: NodeId) -> Result<(), String> {
        if let SharingLevel::Counterparties(set) = sharing {
            if set.is_empty() {
                return Err("counterparty set is empty".into());
            }
            if let Some(bad) = set.iter().find(|&&n| n >= self.config.replicas) {
                return Err(format!("counterparty {bad} is not a replica"));
            }
            if !set.contains(&writer) {
                return Err(format!("writer {writer} is not in the counterparty set"));
            }
        }
        Ok(())
    }

    fn check_agreement(&mut self) {
        let now = self.now;
        for (object, track) in self.tracks.iter_mut() {
            let mut holders = entitled(&track.sharing, self.config.replicas)
                .map(|id| self.replicas[id as usize].store.get(object));
            let agreed = match holders.next().flatten() {
                None => false,
                Some(head) => holders.all(|o| {
                    o.is_some_and(|o| {
                        o.payload == head.payload
                            && o.version == head.version
                            && o.conflict == head.conflict
                    })
                }),
            };
            if agreed {
                track.agreement_step.get_or_insert(now);
            } else {
                track.agreement_step = None;
            }
        }
    }
}

fn entitled(sharing: &SharingLevel, replicas: u32) -> Box<dyn Iterator<Item = NodeId> + '_> {
    match sharing {
        SharingLevel::Private => Box::new(std::iter::empty()),
        SharingLevel::Counterparties(set) => Box::new(set.iter().copied()),
        SharingLevel::Everyone => Box::new(0..replicas),
    }
}

/// Store-level merge of an incoming object copy. Returns true when a
/// concurrent-write resolution happened.
fn merge_incoming(store: &mut BTreeMap<String, VersionedObject>, incoming: VersionedObject) -> bool {
    match store.get_mut(&incoming.object_id) {
        None => {
            store.insert(incoming.object_id.clone(), incoming);
            false
        }
        Some(current) => match current.version.compare(&incoming.version) {
            // Stale or duplicate: the stored copy already covers it.
            CausalOrder::After | CausalOrder::Equal => false,
            CausalOrder::Before => {
                *current = incoming;
                false
            }
            CausalOrder::Concurrent => {
                let incoming_wins = (incoming.write_lamport, incoming.writer)
                    > (current.write_lamport, current.writer);
                if incoming_wins {
                    current.payload = incoming.payload;
                    current.writer = incoming.writer;
                    current.write_lamport = incoming.write_lamport;
                }
                current.version = current.version.merge(&incoming.version);
                current.conflict = true;
                true
            }
        },
    }
}
