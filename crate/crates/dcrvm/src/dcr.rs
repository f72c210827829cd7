//! Reference semantics for Dynamic Condition Response (DCR) graphs.
//!
//! A DCR graph is a set of events wired together by five relation kinds.
//! Its runtime state — the *marking* — is three sets of events: executed,
//! pending (owed a response), and included. An event can fire when
//!
//! 1. it is included,
//! 2. every *included* source of a condition into it has executed, and
//! 3. no *included* source of a milestone into it is pending.
//!
//! Firing event `e` adds `e` to the executed set, removes `e` from the
//! pending set and then adds every response target of `e`, and updates the
//! included set by first removing every exclude target of `e` and then
//! adding every include target (inclusion wins when both relations exist).
//! A marking is accepting when no included event is pending.
//!
//! Graph values are immutable: [`DcrGraph::execute`] returns a new value
//! sharing the relation topology, so callers can branch cheaply.

use std::collections::BTreeSet;
use std::fmt;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::addr::AccountAddress;

/// Hard event-count ceiling. Two key/value pairs per event plus three
/// bookkeeping pairs must fit the 128-pair storage budget of the chain
/// layout, which caps tracked events at 61.
pub const MAX_EVENTS: u8 = 61;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum DcrError {
    #[error("event ids run 1..={MAX_EVENTS}, got {0}")]
    InvalidEventId(u64),
    #[error("graphs are limited to {MAX_EVENTS} events, got {0}")]
    TooManyEvents(u64),
    #[error("relation {0} references an event beyond the {1}-event graph")]
    DanglingReference(Relation, u8),
    #[error("duplicate relation {0}")]
    DuplicateRelation(Relation),
    #[error("marking references event {0}, beyond the {1}-event graph")]
    MarkingOutOfRange(EventId, u8),
    #[error("expected {expected} executors, got {got}")]
    ExecutorCount { expected: u8, got: usize },
    #[error("event {0} does not exist in this graph")]
    UnknownEvent(EventId),
    #[error("event {0} is not enabled")]
    NotEnabled(EventId),
    #[error("trace step {step} (event {event}) is not enabled")]
    NotEnabledAtStep { step: usize, event: EventId },
}

/// A 1-based event identifier in `1..=MAX_EVENTS`.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct EventId(u8);

impl EventId {
    pub fn new(raw: u8) -> Result<Self, DcrError> {
        if raw == 0 || raw > MAX_EVENTS {
            return Err(DcrError::InvalidEventId(raw as u64));
        }
        Ok(EventId(raw))
    }

    pub fn get(self) -> u8 {
        self.0
    }

    /// Zero-based index used for bit positions and dense tables.
    pub fn index0(self) -> usize {
        self.0 as usize - 1
    }
}

impl fmt::Display for EventId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl fmt::Debug for EventId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "e{}", self.0)
    }
}

/// The five DCR relation kinds. The discriminants are the on-chain bit
/// codes of the packed links encoding; keep them in this order.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Debug)]
pub enum RelationKind {
    Include = 0,
    Exclude = 1,
    Milestone = 2,
    Condition = 3,
    Response = 4,
}

impl RelationKind {
    pub const ALL: [RelationKind; 5] = [
        RelationKind::Include,
        RelationKind::Exclude,
        RelationKind::Milestone,
        RelationKind::Condition,
        RelationKind::Response,
    ];

    pub fn code(self) -> u8 {
        self as u8
    }

    pub fn from_code(code: u8) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.code() == code)
    }

    /// Condition and milestone constrain their target; the other three
    /// kinds take effect when their source fires.
    pub fn is_constraint(self) -> bool {
        matches!(self, RelationKind::Condition | RelationKind::Milestone)
    }

    pub fn name(self) -> &'static str {
        match self {
            RelationKind::Include => "include",
            RelationKind::Exclude => "exclude",
            RelationKind::Milestone => "milestone",
            RelationKind::Condition => "condition",
            RelationKind::Response => "response",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.name() == name)
    }
}

impl fmt::Display for RelationKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// A directed, typed edge between two events (self-edges are legal).
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Debug)]
pub struct Relation {
    pub source: EventId,
    pub kind: RelationKind,
    pub target: EventId,
}

impl Relation {
    pub fn new(source: EventId, kind: RelationKind, target: EventId) -> Self {
        Relation {
            source,
            kind,
            target,
        }
    }
}

impl fmt::Display for Relation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {} {}", self.source, self.kind, self.target)
    }
}

/// A set of events, packed as one bit per id. `MAX_EVENTS <= 64` keeps
/// this a single word.
#[derive(Clone, Copy, PartialEq, Eq, Default, Hash)]
pub struct EventSet(u64);

impl EventSet {
    pub fn empty() -> Self {
        EventSet(0)
    }

    /// The full set `{1..=count}`.
    pub fn up_to(count: u8) -> Self {
        debug_assert!(count <= MAX_EVENTS);
        if count == 0 {
            EventSet(0)
        } else {
            EventSet(u64::MAX >> (64 - count as u32))
        }
    }

    pub fn insert(&mut self, e: EventId) {
        self.0 |= 1 << e.index0();
    }

    pub fn remove(&mut self, e: EventId) {
        self.0 &= !(1 << e.index0());
    }

    pub fn contains(&self, e: EventId) -> bool {
        self.0 & (1 << e.index0()) != 0
    }

    pub fn is_empty(&self) -> bool {
        self.0 == 0
    }

    pub fn len(&self) -> usize {
        self.0.count_ones() as usize
    }

    pub fn bits(&self) -> u64 {
        self.0
    }

    pub fn from_bits(bits: u64) -> Self {
        EventSet(bits)
    }

    pub fn union(self, other: EventSet) -> EventSet {
        EventSet(self.0 | other.0)
    }

    pub fn difference(self, other: EventSet) -> EventSet {
        EventSet(self.0 & !other.0)
    }

    pub fn intersection(self, other: EventSet) -> EventSet {
        EventSet(self.0 & other.0)
    }

    /// Ascending iterator over members.
    pub fn iter(&self) -> impl Iterator<Item = EventId> + '_ {
        let bits = self.0;
        (0..64u8)
            .filter(move |i| bits & (1 << i) != 0)
            .map(|i| EventId(i + 1))
    }
}

impl FromIterator<EventId> for EventSet {
    fn from_iter<T: IntoIterator<Item = EventId>>(iter: T) -> Self {
        let mut s = EventSet::empty();
        for e in iter {
            s.insert(e);
        }
        s
    }
}

impl fmt::Debug for EventSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_set().entries(self.iter()).finish()
    }
}

/// Runtime state of a graph: which events have executed, which owe a
/// response, and which are currently included.
#[derive(Clone, Copy, PartialEq, Eq, Hash, Debug, Default)]
pub struct Marking {
    pub executed: EventSet,
    pub pending: EventSet,
    pub included: EventSet,
}

impl Marking {
    pub fn new(executed: EventSet, pending: EventSet, included: EventSet) -> Self {
        Marking {
            executed,
            pending,
            included,
        }
    }

    /// The common starting state: everything included, nothing executed
    /// or pending.
    pub fn initially_included(count: u8) -> Self {
        Marking {
            executed: EventSet::empty(),
            pending: EventSet::empty(),
            included: EventSet::up_to(count),
        }
    }

    fn check_in_range(&self, count: u8) -> Result<(), DcrError> {
        let valid = EventSet::up_to(count);
        for set in [self.executed, self.pending, self.included] {
            if let Some(stray) = set.difference(valid).iter().next() {
                return Err(DcrError::MarkingOutOfRange(stray, count));
            }
        }
        Ok(())
    }
}

/// Immutable relation topology, shared between the marking states a graph
/// evolves through.
#[derive(Debug)]
struct Topology {
    event_count: u8,
    relations: BTreeSet<Relation>,
    executors: Vec<AccountAddress>,
    creator: AccountAddress,
    // Per-event adjacency masks, indexed by target (constraints) or
    // source (effects). One u64 per event keeps evaluation branch-free.
    condition_sources: Vec<u64>,
    milestone_sources: Vec<u64>,
    response_targets: Vec<u64>,
    include_targets: Vec<u64>,
    exclude_targets: Vec<u64>,
}

/// A DCR graph: immutable topology plus the current marking.
#[derive(Clone, Debug)]
pub struct DcrGraph {
    topology: Arc<Topology>,
    marking: Marking,
}

impl PartialEq for DcrGraph {
    fn eq(&self, other: &Self) -> bool {
        self.marking == other.marking
            && self.topology.event_count == other.topology.event_count
            && self.topology.relations == other.topology.relations
            && self.topology.executors == other.topology.executors
            && self.topology.creator == other.topology.creator
    }
}

impl Eq for DcrGraph {}

impl DcrGraph {
    /// Validates and builds a graph. `executors` assigns the account
    /// allowed to fire each event, in id order.
    pub fn new(
        event_count: u8,
        relations: &[Relation],
        marking: Marking,
        executors: &[AccountAddress],
        creator: AccountAddress,
    ) -> Result<Self, DcrError> {
        if event_count > MAX_EVENTS {
            return Err(DcrError::TooManyEvents(event_count as u64));
        }
        if executors.len() != event_count as usize {
            return Err(DcrError::ExecutorCount {
                expected: event_count,
                got: executors.len(),
            });
        }
        marking.check_in_range(event_count)?;

        let n = event_count as usize;
        let mut set = BTreeSet::new();
        let mut condition_sources = vec![0u64; n];
        let mut milestone_sources = vec![0u64; n];
        let mut response_targets = vec![0u64; n];
        let mut include_targets = vec![0u64; n];
        let mut exclude_targets = vec![0u64; n];

        for &r in relations {
            if r.source.get() > event_count || r.target.get() > event_count {
                return Err(DcrError::DanglingReference(r, event_count));
            }
            if !set.insert(r) {
                return Err(DcrError::DuplicateRelation(r));
            }
            let src_bit = 1u64 << r.source.index0();
            let tgt_bit = 1u64 << r.target.index0();
            match r.kind {
                RelationKind::Condition => condition_sources[r.target.index0()] |= src_bit,
                RelationKind::Milestone => milestone_sources[r.target.index0()] |= src_bit,
                RelationKind::Response => response_targets[r.source.index0()] |= tgt_bit,
                RelationKind::Include => include_targets[r.source.index0()] |= tgt_bit,
                RelationKind::Exclude => exclude_targets[r.source.index0()] |= tgt_bit,
            }
        }

        Ok(DcrGraph {
            topology: Arc::new(Topology {
                event_count,
                relations: set,
                executors: executors.to_vec(),
                creator,
                condition_sources,
                milestone_sources,
                response_targets,
                include_targets,
                exclude_targets,
            }),
            marking,
        })
    }

    /// Deterministic pseudo-random graph: each of the `5 * n^2` possible
    /// relations is present with probability `density`; the marking gets a
    /// random included set (biased towards included) and random pending
    /// set. The executed set starts empty — executed state only arises by
    /// firing events, mirroring what contract construction can establish.
    pub fn random(seed: u64, event_count: u8, density: f64) -> Result<Self, DcrError> {
        if event_count > MAX_EVENTS {
            return Err(DcrError::TooManyEvents(event_count as u64));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut pool = [AccountAddress::repeat(0); 4];
        for slot in pool.iter_mut() {
            let mut bytes = [0u8; 32];
            rng.fill(&mut bytes);
            *slot = AccountAddress::new(bytes);
        }
        let mut creator_bytes = [0u8; 32];
        rng.fill(&mut creator_bytes);
        let creator = AccountAddress::new(creator_bytes);

        let mut relations = Vec::new();
        for source in 1..=event_count {
            for kind in RelationKind::ALL {
                for target in 1..=event_count {
                    if rng.gen_bool(density) {
                        relations.push(Relation::new(
                            EventId(source),
                            kind,
                            EventId(target),
                        ));
                    }
                }
            }
        }

        let mut marking = Marking::default();
        let mut executors = Vec::with_capacity(event_count as usize);
        for raw in 1..=event_count {
            let e = EventId(raw);
            if rng.gen_bool(0.75) {
                marking.included.insert(e);
            }
            if rng.gen_bool(0.25) {
                marking.pending.insert(e);
            }
            executors.push(pool[rng.gen_range(0..pool.len())]);
        }

        DcrGraph::new(event_count, &relations, marking, &executors, creator)
    }

    pub fn event_count(&self) -> u8 {
        self.topology.event_count
    }

    pub fn events(&self) -> impl Iterator<Item = EventId> {
        (1..=self.topology.event_count).map(EventId)
    }

    pub fn marking(&self) -> &Marking {
        &self.marking
    }

    pub fn relations(&self) -> impl Iterator<Item = &Relation> {
        self.topology.relations.iter()
    }

    pub fn relation_set(&self) -> &BTreeSet<Relation> {
        &self.topology.relations
    }

    pub fn relation_count(&self) -> usize {
        self.topology.relations.len()
    }

    pub fn creator(&self) -> AccountAddress {
        self.topology.creator
    }

    pub fn executor(&self, e: EventId) -> Result<AccountAddress, DcrError> {
        self.check_event(e)?;
        Ok(self.topology.executors[e.index0()])
    }

    pub fn executors(&self) -> &[AccountAddress] {
        &self.topology.executors
    }

    /// Replaces the marking, validating it against this topology.
    pub fn with_marking(&self, marking: Marking) -> Result<Self, DcrError> {
        marking.check_in_range(self.topology.event_count)?;
        Ok(DcrGraph {
            topology: Arc::clone(&self.topology),
            marking,
        })
    }

    fn check_event(&self, e: EventId) -> Result<(), DcrError> {
        if e.get() > self.topology.event_count {
            return Err(DcrError::UnknownEvent(e));
        }
        Ok(())
    }

    /// Can `e` fire in the current marking?
    pub fn enabled(&self, e: EventId) -> Result<bool, DcrError> {
        self.check_event(e)?;
        let m = &self.marking;
        if !m.included.contains(e) {
            return Ok(false);
        }
        let t = &*self.topology;
        // Included condition sources that have not yet executed block e.
        let blocking_conditions =
            t.condition_sources[e.index0()] & m.included.bits() & !m.executed.bits();
        // Included milestone sources with a pending response block e.
        let blocking_milestones =
            t.milestone_sources[e.index0()] & m.included.bits() & m.pending.bits();
        Ok(blocking_conditions == 0 && blocking_milestones == 0)
    }

    /// All currently enabled events.
    pub fn enabled_events(&self) -> EventSet {
        self.events()
            .filter(|&e| self.enabled(e).unwrap_or(false))
            .collect()
    }

    /// Fires `e`, returning the successor graph. The pending set loses `e`
    /// before response targets are added, and the included set drops
    /// exclude targets before include targets are added back.
    pub fn execute(&self, e: EventId) -> Result<Self, DcrError> {
        if !self.enabled(e)? {
            return Err(DcrError::NotEnabled(e));
        }
        let t = &*self.topology;
        let mut m = self.marking;
        m.executed.insert(e);
        m.pending.remove(e);
        m.pending = m
            .pending
            .union(EventSet::from_bits(t.response_targets[e.index0()]));
        m.included = m
            .included
            .difference(EventSet::from_bits(t.exclude_targets[e.index0()]))
            .union(EventSet::from_bits(t.include_targets[e.index0()]));
        Ok(DcrGraph {
            topology: Arc::clone(&self.topology),
            marking: m,
        })
    }

    /// No included event may still owe a response.
    pub fn is_accepting(&self) -> bool {
        self.marking
            .pending
            .intersection(self.marking.included)
            .is_empty()
    }

    /// Fires a whole trace, failing with the step index of the first
    /// non-enabled event.
    pub fn run_trace(&self, trace: &[EventId]) -> Result<Self, DcrError> {
        let mut g = self.clone();
        for (step, &e) in trace.iter().enumerate() {
            g = g.execute(e).map_err(|err| match err {
                DcrError::NotEnabled(event) => DcrError::NotEnabledAtStep { step, event },
                other => other,
            })?;
        }
        Ok(g)
    }
}
