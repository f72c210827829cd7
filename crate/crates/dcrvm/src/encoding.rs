//! Bit-packed wire/storage layout for graphs held in key/value pairs.
//!
//! A graph with `TEN` tracked events lives in `3 + 2*TEN` pairs:
//!
//! * `GC` — the 32-byte creator address,
//! * `MK` — the packed marking, 4 bits per event,
//! * `TEN` — the event count as a uint,
//! * per event `i`: key `"{i}"` — the 32-byte executor address, and key
//!   `"{i}_links"` — the packed relation row, 5 bits per partner event.
//!
//! Bit position 0 is the most significant bit of byte 0. In the marking,
//! event `i` owns bits `(i-1)*4 .. (i-1)*4+3`: included, pending,
//! executed, and a reserved bit that must stay zero. In a links row owned
//! by event `e`, partner `j` owns bits `(j-1)*5 .. (j-1)*5+4`, one per
//! relation kind in code order (include, exclude, milestone, condition,
//! response). Include, exclude and response bits record out-links of `e`;
//! milestone and condition bits record in-links (rows store the
//! constraints that *guard* their owner together with the effects the
//! owner causes).
//!
//! Pairs are placed by creation ordinal: the first 64 go to the global
//! store, later ones spill into up to four storage accounts of 16 pairs
//! each (128 pairs total, hence the 61-event ceiling).

use std::collections::BTreeSet;

use thiserror::Error;

use crate::addr::{AccountAddress, ADDRESS_LEN};
use crate::avm::StorageScope;
use crate::dcr::{DcrGraph, DcrError, EventId, EventSet, Marking, Relation, RelationKind};

pub const STATUS_BITS: usize = 4;
pub const LINK_BITS: usize = 5;

/// Flag offsets within an event's 4-bit status group.
pub const INCLUDED_OFFSET: usize = 0;
pub const PENDING_OFFSET: usize = 1;
pub const EXECUTED_OFFSET: usize = 2;
pub const RESERVED_OFFSET: usize = 3;

/// Storage geometry: one global store plus four 16-pair storage accounts.
pub const MAX_GLOBAL_PAIRS: u32 = 64;
pub const MAX_LOCAL_PAIRS: u32 = 16;
pub const MAX_STORAGE_ACCOUNTS: u32 = 4;
pub const MAX_TOTAL_PAIRS: u32 = MAX_GLOBAL_PAIRS + MAX_STORAGE_ACCOUNTS * MAX_LOCAL_PAIRS;

/// Every key + value combination must fit in 128 bytes.
pub const MAX_KEY_VALUE_BYTES: usize = 128;

/// Well-known bookkeeping keys.
pub const KEY_CREATOR: &[u8] = b"GC";
pub const KEY_MARKING: &[u8] = b"MK";
pub const KEY_EVENT_COUNT: &[u8] = b"TEN";

#[derive(Debug, Error, PartialEq, Eq)]
pub enum EncodingError {
    #[error("expected {expected} bytes, got {got}")]
    BadLength { expected: usize, got: usize },
    #[error("reserved status bit set at bit {bit}")]
    ReservedBitSet { bit: usize },
    #[error("links bit {bit} set beyond the {event_count}-event payload")]
    TrailingBitsSet { bit: usize, event_count: u8 },
    #[error("expected one links row per event ({expected}), got {got}")]
    RowCount { expected: usize, got: usize },
    #[error("pair ordinal {0} exceeds the {MAX_TOTAL_PAIRS}-pair capacity")]
    CapacityExceeded(u32),
    #[error(transparent)]
    Graph(#[from] DcrError),
}

/// Bytes needed for a packed marking of `event_count` events.
pub fn marking_len(event_count: u8) -> usize {
    (event_count as usize * STATUS_BITS).div_ceil(8)
}

/// Bytes needed for one packed links row of `event_count` events.
pub fn links_len(event_count: u8) -> usize {
    (event_count as usize * LINK_BITS).div_ceil(8)
}

/// Reads a bit by absolute position, MSB-first within each byte.
pub fn get_bit(bytes: &[u8], bit: usize) -> bool {
    let byte = bit / 8;
    if byte >= bytes.len() {
        return false;
    }
    bytes[byte] & (0x80 >> (bit % 8)) != 0
}

/// Sets or clears a bit by absolute position, MSB-first within each byte.
pub fn set_bit(bytes: &mut [u8], bit: usize, value: bool) {
    let byte = bit / 8;
    debug_assert!(byte < bytes.len(), "bit {bit} out of range");
    let mask = 0x80 >> (bit % 8);
    if value {
        bytes[byte] |= mask;
    } else {
        bytes[byte] &= !mask;
    }
}

/// Absolute bit position of `offset` within event `e`'s status group.
pub fn status_bit(e: EventId, offset: usize) -> usize {
    debug_assert!(offset < STATUS_BITS);
    e.index0() * STATUS_BITS + offset
}

/// Absolute bit position of relation kind `kind` within partner `j`'s
/// group of a links row.
pub fn link_bit(partner: EventId, kind: RelationKind) -> usize {
    partner.index0() * LINK_BITS + kind.code() as usize
}

/// A packed marking: 4 bits per event.
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct PackedMarking {
    pub bytes: Vec<u8>,
    pub event_count: u8,
}

/// A packed relation row owned by one event: 5 bits per partner.
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct PackedLinks {
    pub bytes: Vec<u8>,
    pub owner: EventId,
}

/// Packs a marking. The marking must only reference events `<= event_count`.
pub fn encode_marking(marking: &Marking, event_count: u8) -> PackedMarking {
    let valid = EventSet::up_to(event_count);
    assert!(
        marking.included.difference(valid).is_empty()
            && marking.pending.difference(valid).is_empty()
            && marking.executed.difference(valid).is_empty(),
        "marking references events beyond {event_count}"
    );
    let mut bytes = vec![0u8; marking_len(event_count)];
    for raw in 1..=event_count {
        let e = EventId::new(raw).expect("event_count is within range");
        if marking.included.contains(e) {
            set_bit(&mut bytes, status_bit(e, INCLUDED_OFFSET), true);
        }
        if marking.pending.contains(e) {
            set_bit(&mut bytes, status_bit(e, PENDING_OFFSET), true);
        }
        if marking.executed.contains(e) {
            set_bit(&mut bytes, status_bit(e, EXECUTED_OFFSET), true);
        }
    }
    PackedMarking { bytes, event_count }
}

/// Unpacks a marking, rejecting wrong lengths and any set bit outside the
/// defined flags (per-event reserved bits and trailing padding alike).
pub fn decode_marking(bytes: &[u8], event_count: u8) -> Result<Marking, EncodingError> {
    let expected = marking_len(event_count);
    if bytes.len() != expected {
        return Err(EncodingError::BadLength {
            expected,
            got: bytes.len(),
        });
    }
    let mut marking = Marking::default();
    for raw in 1..=event_count {
        let e = EventId::new(raw).map_err(EncodingError::Graph)?;
        if get_bit(bytes, status_bit(e, INCLUDED_OFFSET)) {
            marking.included.insert(e);
        }
        if get_bit(bytes, status_bit(e, PENDING_OFFSET)) {
            marking.pending.insert(e);
        }
        if get_bit(bytes, status_bit(e, EXECUTED_OFFSET)) {
            marking.executed.insert(e);
        }
        let reserved = status_bit(e, RESERVED_OFFSET);
        if get_bit(bytes, reserved) {
            return Err(EncodingError::ReservedBitSet { bit: reserved });
        }
    }
    // Padding bits beyond the last event's group are reserved too.
    for bit in event_count as usize * STATUS_BITS..bytes.len() * 8 {
        if get_bit(bytes, bit) {
            return Err(EncodingError::ReservedBitSet { bit });
        }
    }
    Ok(marking)
}

/// Packs event `e`'s links row from the graph's relation set.
pub fn encode_links(graph: &DcrGraph, e: EventId) -> PackedLinks {
    let mut bytes = vec![0u8; links_len(graph.event_count())];
    for r in graph.relations() {
        if r.kind.is_constraint() {
            // In-link: stored on the guarded target's row.
            if r.target == e {
                set_bit(&mut bytes, link_bit(r.source, r.kind), true);
            }
        } else if r.source == e {
            // Out-link: stored on the acting source's row.
            set_bit(&mut bytes, link_bit(r.target, r.kind), true);
        }
    }
    PackedLinks { bytes, owner: e }
}

/// Rebuilds the relation set from one links row per event (row index
/// `i` owns event `i+1`). Rejects wrong row counts, wrong lengths, and
/// stray bits beyond the payload.
pub fn decode_links(
    rows: &[Vec<u8>],
    event_count: u8,
) -> Result<BTreeSet<Relation>, EncodingError> {
    if rows.len() != event_count as usize {
        return Err(EncodingError::RowCount {
            expected: event_count as usize,
            got: rows.len(),
        });
    }
    let expected = links_len(event_count);
    let mut relations = BTreeSet::new();
    for (idx, row) in rows.iter().enumerate() {
        if row.len() != expected {
            return Err(EncodingError::BadLength {
                expected,
                got: row.len(),
            });
        }
        let owner = EventId::new(idx as u8 + 1).map_err(EncodingError::Graph)?;
        for bit in event_count as usize * LINK_BITS..row.len() * 8 {
            if get_bit(row, bit) {
                return Err(EncodingError::TrailingBitsSet { bit, event_count });
            }
        }
        for raw in 1..=event_count {
            let partner = EventId::new(raw).map_err(EncodingError::Graph)?;
            for kind in RelationKind::ALL {
                if !get_bit(row, link_bit(partner, kind)) {
                    continue;
                }
                let relation = if kind.is_constraint() {
                    Relation::new(partner, kind, owner)
                } else {
                    Relation::new(owner, kind, partner)
                };
                relations.insert(relation);
            }
        }
    }
    Ok(relations)
}

/// Total key/value pairs a graph of `event_count` events occupies.
pub fn pairs_for_events(event_count: u8) -> u32 {
    3 + 2 * event_count as u32
}

/// Creation ordinal of event `e`'s links pair (rows are created before
/// executor pairs).
pub fn links_pair_ordinal(e: EventId) -> u32 {
    2 * e.get() as u32 + 2
}

/// Creation ordinal of event `e`'s executor pair.
pub fn executor_pair_ordinal(e: EventId) -> u32 {
    2 * e.get() as u32 + 3
}

/// Key of event `e`'s executor pair: the decimal id.
pub fn executor_key(e: EventId) -> Vec<u8> {
    e.get().to_string().into_bytes()
}

/// Key of event `e`'s links pair: `"{id}_links"`.
pub fn links_key(e: EventId) -> Vec<u8> {
    format!("{}_links", e.get()).into_bytes()
}

/// Where the pair with 1-based creation ordinal `ordinal` lives: the
/// first 64 pairs fill the global store, every later run of 16 fills the
/// next storage account.
pub fn slot_for_pair(ordinal: u32) -> Result<StorageScope, EncodingError> {
    if ordinal == 0 || ordinal > MAX_TOTAL_PAIRS {
        return Err(EncodingError::CapacityExceeded(ordinal));
    }
    if ordinal <= MAX_GLOBAL_PAIRS {
        Ok(StorageScope::Global)
    } else {
        Ok(StorageScope::Local {
            account: ((ordinal - MAX_GLOBAL_PAIRS - 1) / MAX_LOCAL_PAIRS) as u8,
        })
    }
}

/// Would a graph of `event_count` events fit the storage geometry?
/// The arithmetic admits 62 (127 pairs), but tracked events are capped at
/// 61 to keep one pair of headroom below the 128-pair ceiling.
pub fn capacity_check(event_count: u8) -> bool {
    event_count <= crate::dcr::MAX_EVENTS
}

/// A complete decoded view of the pairs a deployed graph occupies.
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct GraphStateImage {
    pub creator: AccountAddress,
    pub event_count: u8,
    pub marking: Vec<u8>,
    pub links: Vec<Vec<u8>>,
    pub executors: Vec<AccountAddress>,
}

impl GraphStateImage {
    /// Packs a graph into its full pair image.
    pub fn from_graph(graph: &DcrGraph) -> Self {
        let marking = encode_marking(graph.marking(), graph.event_count()).bytes;
        let links = graph
            .events()
            .map(|e| encode_links(graph, e).bytes)
            .collect();
        GraphStateImage {
            creator: graph.creator(),
            event_count: graph.event_count(),
            marking,
            links,
            executors: graph.executors().to_vec(),
        }
    }

    /// Decodes the image back into a validated graph.
    pub fn to_graph(&self) -> Result<DcrGraph, EncodingError> {
        let marking = decode_marking(&self.marking, self.event_count)?;
        let relations: Vec<Relation> = decode_links(&self.links, self.event_count)?
            .into_iter()
            .collect();
        if self.executors.len() != self.event_count as usize {
            return Err(EncodingError::Graph(DcrError::ExecutorCount {
                expected: self.event_count,
                got: self.executors.len(),
            }));
        }
        Ok(DcrGraph::new(
            self.event_count,
            &relations,
            marking,
            &self.executors,
            self.creator,
        )?)
    }

    /// Largest key + value footprint across the image's pairs. Stays
    /// within [`MAX_KEY_VALUE_BYTES`] for every legal event count.
    pub fn max_pair_bytes(&self) -> usize {
        let mut max = KEY_CREATOR.len() + ADDRESS_LEN;
        max = max.max(KEY_MARKING.len() + self.marking.len());
        max = max.max(KEY_EVENT_COUNT.len() + 8);
        for raw in 1..=self.event_count {
            let e = EventId::new(raw).expect("within range");
            max = max.max(executor_key(e).len() + ADDRESS_LEN);
            max = max.max(links_key(e).len() + self.links[e.index0()].len());
        }
        max
    }
}
