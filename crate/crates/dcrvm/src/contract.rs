//! The workflow application: graph construction and execution handlers
//! operating directly on the bit-packed key/value state.
//!
//! Four methods, selected by the first call argument:
//!
//! * `add_event(executor)` — creator only; grows the event count, writes
//!   the executor and an empty links row, marks the new event included,
//!   and zero-extends the marking and every existing links row when their
//!   byte lengths grow,
//! * `add_relation(e1, e2, kind)` — creator only; sets one bit in the
//!   hosting row (constraints live on the guarded target's row, effects
//!   on the acting source's row),
//! * `update_status(e1, code)` — creator only; include / exclude / pend,
//! * `execute(e1)` — executor only; checks enabledness against the packed
//!   marking in a first pass over the event's row, then applies effects
//!   in a second pass.
//!
//! Numeric arguments travel as big-endian u64, executors as 32 raw bytes.
//! Every bookkeeping step is charged against the call's operation budget:
//! key/value accesses cost one each (metered by the runtime) and
//! word-level scratch steps cost one each (charged here).

use thiserror::Error;

use crate::addr::{AccountAddress, ADDRESS_LEN};
use crate::avm::{
    AppCall, AppId, AppSchema, AvmError, CallContext, CallResult, Ledger, Program, Reject,
    StorageScope, TealValue,
};
use crate::dcr::{DcrGraph, EventId, Relation, RelationKind, MAX_EVENTS};
use crate::encoding::{
    executor_key, executor_pair_ordinal, get_bit, link_bit, links_key, links_len,
    links_pair_ordinal, marking_len, set_bit, slot_for_pair, status_bit, EncodingError,
    GraphStateImage, EXECUTED_OFFSET, INCLUDED_OFFSET, KEY_CREATOR, KEY_EVENT_COUNT, KEY_MARKING,
    PENDING_OFFSET,
};

/// Schema the workflow always deploys with: one uint (the event count)
/// plus 63 byteslice pairs globally, and 16 byteslice pairs per storage
/// account.
pub const WORKFLOW_SCHEMA: AppSchema = AppSchema {
    global_uints: 1,
    global_byteslices: 63,
    local_uints: 0,
    local_byteslices: 16,
};

/// Stable rejection codes the handlers emit via [`Reject::Logic`].
pub mod codes {
    pub const NOT_CREATOR: &str = "not_creator";
    pub const NOT_EXECUTOR: &str = "not_executor";
    pub const UNKNOWN_EVENT: &str = "unknown_event";
    pub const NOT_ENABLED: &str = "not_enabled";
    pub const CAPACITY_EXCEEDED: &str = "capacity_exceeded";
    pub const UNKNOWN_METHOD: &str = "unknown_method";
    pub const BAD_ARGUMENT: &str = "bad_argument";
}

/// Deliberate defects for differential testing: each fault removes one
/// check or effect, and the differential harness must catch it.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum InjectedFault {
    /// `execute` no longer verifies that the event itself is included.
    SkipInclusionCheck,
}

/// The workflow program. `fault` is `None` for the honest contract.
#[derive(Clone, Copy, Default, Debug)]
pub struct WorkflowProgram {
    pub fault: Option<InjectedFault>,
}

impl WorkflowProgram {
    pub fn new() -> Self {
        WorkflowProgram { fault: None }
    }

    pub fn with_fault(fault: InjectedFault) -> Self {
        WorkflowProgram { fault: Some(fault) }
    }
}

/// Status codes accepted by `update_status`.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum StatusCode {
    Include,
    Exclude,
    Pend,
}

impl StatusCode {
    pub fn code(self) -> u64 {
        match self {
            StatusCode::Include => 0,
            StatusCode::Exclude => 1,
            StatusCode::Pend => 2,
        }
    }

    pub fn from_code(code: u64) -> Option<Self> {
        match code {
            0 => Some(StatusCode::Include),
            1 => Some(StatusCode::Exclude),
            2 => Some(StatusCode::Pend),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            StatusCode::Include => "include",
            StatusCode::Exclude => "exclude",
            StatusCode::Pend => "pend",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        match name {
            "include" => Some(StatusCode::Include),
            "exclude" => Some(StatusCode::Exclude),
            "pend" => Some(StatusCode::Pend),
            _ => None,
        }
    }
}

fn logic(code: &'static str, detail: impl Into<String>) -> Reject {
    Reject::Logic {
        code,
        detail: detail.into(),
    }
}

/// Bits of one partner's 5-bit links group, re-coded LSB-first by
/// relation kind code for scratch arithmetic.
const INCLUDE_BIT: u8 = 1 << 0;
const EXCLUDE_BIT: u8 = 1 << 1;
const MILESTONE_BIT: u8 = 1 << 2;
const CONDITION_BIT: u8 = 1 << 3;
const RESPONSE_BIT: u8 = 1 << 4;
const GUARD_MASK: u8 = CONDITION_BIT | MILESTONE_BIT;
const EFFECT_MASK: u8 = INCLUDE_BIT | EXCLUDE_BIT | RESPONSE_BIT;

/// Collects partner `j`'s 5-bit group from a links row.
fn extract_group(row: &[u8], j: EventId) -> u8 {
    let mut group = 0u8;
    for kind in RelationKind::ALL {
        if get_bit(row, link_bit(j, kind)) {
            group |= 1 << kind.code();
        }
    }
    group
}

fn event(raw: u64) -> Result<EventId, Reject> {
    if raw == 0 || raw > MAX_EVENTS as u64 {
        return Err(logic(codes::UNKNOWN_EVENT, format!("event id {raw}")));
    }
    EventId::new(raw as u8).map_err(|e| logic(codes::UNKNOWN_EVENT, e.to_string()))
}

fn scope_of(ordinal: u32) -> Result<StorageScope, Reject> {
    slot_for_pair(ordinal)
        .map_err(|_| logic(codes::CAPACITY_EXCEEDED, format!("pair ordinal {ordinal}")))
}

fn arg_u64(ctx: &mut CallContext<'_, '_>, index: usize) -> Result<u64, Reject> {
    ctx.charge(1)?;
    let bytes = ctx
        .arg(index)
        .ok_or_else(|| logic(codes::BAD_ARGUMENT, format!("missing argument {index}")))?;
    let bytes: [u8; 8] = bytes.try_into().map_err(|_| {
        logic(
            codes::BAD_ARGUMENT,
            format!("argument {index} must be 8 bytes"),
        )
    })?;
    Ok(u64::from_be_bytes(bytes))
}

fn arg_address(ctx: &mut CallContext<'_, '_>, index: usize) -> Result<AccountAddress, Reject> {
    ctx.charge(1)?;
    let bytes = ctx
        .arg(index)
        .ok_or_else(|| logic(codes::BAD_ARGUMENT, format!("missing argument {index}")))?;
    let bytes: [u8; ADDRESS_LEN] = bytes.try_into().map_err(|_| {
        logic(
            codes::BAD_ARGUMENT,
            format!("argument {index} must be {ADDRESS_LEN} bytes"),
        )
    })?;
    Ok(AccountAddress::new(bytes))
}

fn require_creator(ctx: &mut CallContext<'_, '_>) -> Result<(), Reject> {
    let creator = ctx.read_bytes(StorageScope::Global, KEY_CREATOR)?;
    ctx.charge(1)?;
    if creator != ctx.sender().as_bytes() {
        return Err(logic(codes::NOT_CREATOR, "sender is not the creator"));
    }
    Ok(())
}

fn read_event_count(ctx: &mut CallContext<'_, '_>) -> Result<u64, Reject> {
    ctx.read_uint(StorageScope::Global, KEY_EVENT_COUNT)
}

impl WorkflowProgram {
    fn add_event(&self, ctx: &mut CallContext<'_, '_>) -> Result<(), Reject> {
        require_creator(ctx)?;
        let executor = arg_address(ctx, 1)?;
        let count = read_event_count(ctx)?;
        ctx.charge(1)?;
        if count >= MAX_EVENTS as u64 {
            return Err(logic(
                codes::CAPACITY_EXCEEDED,
                format!("graph already tracks {MAX_EVENTS} events"),
            ));
        }
        let old_n = count as u8;
        let new_n = old_n + 1;
        let new_event = event(new_n as u64)?;

        // Extend the marking if its byte length grew, then mark the new
        // event included (the default status of a fresh event).
        let mut marking = ctx.read_bytes(StorageScope::Global, KEY_MARKING)?;
        ctx.charge(1)?;
        marking.resize(marking_len(new_n), 0);
        ctx.charge(1)?;
        set_bit(&mut marking, status_bit(new_event, INCLUDED_OFFSET), true);
        ctx.write(
            StorageScope::Global,
            KEY_MARKING,
            TealValue::Bytes(marking),
        )?;

        // Zero-extend every existing links row when the row length grows;
        // bit positions are absolute, so growth is a pure zero-append.
        let new_len = links_len(new_n);
        if new_len > links_len(old_n) {
            for raw in 1..=old_n {
                let row_owner = event(raw as u64)?;
                let scope = scope_of(links_pair_ordinal(row_owner))?;
                let key = links_key(row_owner);
                let mut row = ctx.read_bytes(scope, &key)?;
                ctx.charge(1)?;
                row.resize(new_len, 0);
                ctx.write(scope, &key, TealValue::Bytes(row))?;
            }
        }

        let scope = scope_of(links_pair_ordinal(new_event))?;
        ctx.write(
            scope,
            &links_key(new_event),
            TealValue::Bytes(vec![0; new_len]),
        )?;
        let scope = scope_of(executor_pair_ordinal(new_event))?;
        ctx.write(
            scope,
            &executor_key(new_event),
            TealValue::Bytes(executor.as_bytes().to_vec()),
        )?;
        ctx.write(
            StorageScope::Global,
            KEY_EVENT_COUNT,
            TealValue::Uint(new_n as u64),
        )?;
        Ok(())
    }

    fn add_relation(&self, ctx: &mut CallContext<'_, '_>) -> Result<(), Reject> {
        require_creator(ctx)?;
        let e1 = arg_u64(ctx, 1)?;
        let e2 = arg_u64(ctx, 2)?;
        let kind_code = arg_u64(ctx, 3)?;
        let count = read_event_count(ctx)?;
        ctx.charge(2)?;
        if e1 == 0 || e1 > count {
            return Err(logic(codes::UNKNOWN_EVENT, format!("event id {e1}")));
        }
        if e2 == 0 || e2 > count {
            return Err(logic(codes::UNKNOWN_EVENT, format!("event id {e2}")));
        }
        ctx.charge(1)?;
        let kind = u8::try_from(kind_code)
            .ok()
            .and_then(RelationKind::from_code)
            .ok_or_else(|| {
                logic(
                    codes::BAD_ARGUMENT,
                    format!("relation kind code {kind_code}"),
                )
            })?;
        let source = event(e1)?;
        let target = event(e2)?;

        // Constraints are stored on the guarded target's row; effects on
        // the acting source's row.
        let (owner, partner) = if kind.is_constraint() {
            (target, source)
        } else {
            (source, target)
        };
        let scope = scope_of(links_pair_ordinal(owner))?;
        let key = links_key(owner);
        let mut row = ctx.read_bytes(scope, &key)?;
        ctx.charge(1)?;
        set_bit(&mut row, link_bit(partner, kind), true);
        ctx.write(scope, &key, TealValue::Bytes(row))?;
        Ok(())
    }

    fn update_status(&self, ctx: &mut CallContext<'_, '_>) -> Result<(), Reject> {
        require_creator(ctx)?;
        let e1 = arg_u64(ctx, 1)?;
        let code = arg_u64(ctx, 2)?;
        let count = read_event_count(ctx)?;
        ctx.charge(1)?;
        if e1 == 0 || e1 > count {
            return Err(logic(codes::UNKNOWN_EVENT, format!("event id {e1}")));
        }
        ctx.charge(1)?;
        let status = StatusCode::from_code(code)
            .ok_or_else(|| logic(codes::BAD_ARGUMENT, format!("status code {code}")))?;
        let ev = event(e1)?;
        let mut marking = ctx.read_bytes(StorageScope::Global, KEY_MARKING)?;
        ctx.charge(1)?;
        match status {
            StatusCode::Include => set_bit(&mut marking, status_bit(ev, INCLUDED_OFFSET), true),
            StatusCode::Exclude => set_bit(&mut marking, status_bit(ev, INCLUDED_OFFSET), false),
            StatusCode::Pend => set_bit(&mut marking, status_bit(ev, PENDING_OFFSET), true),
        }
        ctx.write(
            StorageScope::Global,
            KEY_MARKING,
            TealValue::Bytes(marking),
        )?;
        Ok(())
    }

    fn execute(&self, ctx: &mut CallContext<'_, '_>) -> Result<(), Reject> {
        let e1 = arg_u64(ctx, 1)?;
        let count = read_event_count(ctx)?;
        ctx.charge(1)?;
        if e1 == 0 || e1 > count {
            return Err(logic(codes::UNKNOWN_EVENT, format!("event id {e1}")));
        }
        let ev = event(e1)?;
        let n = count as u8;

        let scope = scope_of(executor_pair_ordinal(ev))?;
        let executor = ctx.read_bytes(scope, &executor_key(ev))?;
        ctx.charge(1)?;
        if executor != ctx.sender().as_bytes() {
            return Err(logic(
                codes::NOT_EXECUTOR,
                format!("sender may not execute event {e1}"),
            ));
        }

        let mut marking = ctx.read_bytes(StorageScope::Global, KEY_MARKING)?;
        let scope = scope_of(links_pair_ordinal(ev))?;
        let row = ctx.read_bytes(scope, &links_key(ev))?;

        // Pass 1: enabledness against the unmodified marking. The event
        // must be included, every included condition source executed, and
        // no included milestone source pending.
        if self.fault != Some(InjectedFault::SkipInclusionCheck) {
            ctx.charge(1)?;
            if !get_bit(&marking, status_bit(ev, INCLUDED_OFFSET)) {
                return Err(logic(
                    codes::NOT_ENABLED,
                    format!("event {e1} is excluded"),
                ));
            }
        }
        for raw in 1..=n {
            let j = event(raw as u64)?;
            ctx.charge(2)?;
            let group = extract_group(&row, j);
            if group & GUARD_MASK != 0 {
                ctx.charge(1)?;
            }
            if group & CONDITION_BIT != 0 {
                ctx.charge(1)?;
                let included = get_bit(&marking, status_bit(j, INCLUDED_OFFSET));
                let executed = get_bit(&marking, status_bit(j, EXECUTED_OFFSET));
                if included && !executed {
                    return Err(logic(
                        codes::NOT_ENABLED,
                        format!("condition from event {raw} unfulfilled"),
                    ));
                }
            }
            if group & MILESTONE_BIT != 0 {
                ctx.charge(1)?;
                let included = get_bit(&marking, status_bit(j, INCLUDED_OFFSET));
                let pending = get_bit(&marking, status_bit(j, PENDING_OFFSET));
                if included && pending {
                    return Err(logic(
                        codes::NOT_ENABLED,
                        format!("milestone from event {raw} pending"),
                    ));
                }
            }
        }

        // Pass 2: effects. The executed event's own pending bit clears
        // before out-link effects apply, so a self-response leaves the
        // event pending again.
        ctx.charge(1)?;
        set_bit(&mut marking, status_bit(ev, PENDING_OFFSET), false);
        for raw in 1..=n {
            let j = event(raw as u64)?;
            ctx.charge(2)?;
            let group = extract_group(&row, j);
            if group & EFFECT_MASK != 0 {
                ctx.charge(2)?;
                if group & EXCLUDE_BIT != 0 {
                    set_bit(&mut marking, status_bit(j, INCLUDED_OFFSET), false);
                }
                // Include applies after exclude: inclusion wins a tie.
                if group & INCLUDE_BIT != 0 {
                    set_bit(&mut marking, status_bit(j, INCLUDED_OFFSET), true);
                }
                if group & RESPONSE_BIT != 0 {
                    set_bit(&mut marking, status_bit(j, PENDING_OFFSET), true);
                }
                ctx.charge(1)?;
            }
        }
        ctx.charge(1)?;
        set_bit(&mut marking, status_bit(ev, EXECUTED_OFFSET), true);
        ctx.write(
            StorageScope::Global,
            KEY_MARKING,
            TealValue::Bytes(marking),
        )?;
        Ok(())
    }
}

impl Program for WorkflowProgram {
    fn on_create(&self, ctx: &mut CallContext<'_, '_>) -> Result<(), Reject> {
        let creator = ctx.sender();
        ctx.write(
            StorageScope::Global,
            KEY_CREATOR,
            TealValue::Bytes(creator.as_bytes().to_vec()),
        )?;
        ctx.write(StorageScope::Global, KEY_MARKING, TealValue::Bytes(vec![]))?;
        ctx.write(StorageScope::Global, KEY_EVENT_COUNT, TealValue::Uint(0))?;
        Ok(())
    }

    fn on_call(&self, ctx: &mut CallContext<'_, '_>) -> Result<(), Reject> {
        ctx.charge(1)?;
        let selector = ctx
            .arg(0)
            .ok_or_else(|| logic(codes::BAD_ARGUMENT, "missing method selector"))?
            .to_vec();
        match selector.as_slice() {
            b"add_event" => self.add_event(ctx),
            b"add_relation" => self.add_relation(ctx),
            b"update_status" => self.update_status(ctx),
            b"execute" => self.execute(ctx),
            other => Err(logic(
                codes::UNKNOWN_METHOD,
                String::from_utf8_lossy(other).into_owned(),
            )),
        }
    }
}

/// Deploys a fresh, empty workflow app with the standard schema.
pub fn create_workflow(
    ledger: &mut Ledger,
    creator: AccountAddress,
    program: &WorkflowProgram,
) -> Result<(AppId, CallResult), AvmError> {
    ledger.deploy_app(creator, WORKFLOW_SCHEMA, program)
}

/// Builds an `add_event` call.
pub fn add_event_call(
    sender: AccountAddress,
    app_id: AppId,
    executor: AccountAddress,
    accounts: &[AccountAddress],
) -> AppCall {
    AppCall::new(sender, app_id)
        .with_args(vec![
            b"add_event".to_vec(),
            executor.as_bytes().to_vec(),
        ])
        .with_accounts(accounts.to_vec())
}

/// Builds an `add_relation` call carrying the relation's source, target,
/// and kind code.
pub fn add_relation_call(
    sender: AccountAddress,
    app_id: AppId,
    relation: Relation,
    accounts: &[AccountAddress],
) -> AppCall {
    AppCall::new(sender, app_id)
        .with_args(vec![
            b"add_relation".to_vec(),
            (relation.source.get() as u64).to_be_bytes().to_vec(),
            (relation.target.get() as u64).to_be_bytes().to_vec(),
            (relation.kind.code() as u64).to_be_bytes().to_vec(),
        ])
        .with_accounts(accounts.to_vec())
}

/// Builds an `update_status` call.
pub fn update_status_call(
    sender: AccountAddress,
    app_id: AppId,
    ev: EventId,
    status: StatusCode,
) -> AppCall {
    AppCall::new(sender, app_id).with_args(vec![
        b"update_status".to_vec(),
        (ev.get() as u64).to_be_bytes().to_vec(),
        status.code().to_be_bytes().to_vec(),
    ])
}

/// Builds an `execute` call.
pub fn execute_call(
    sender: AccountAddress,
    app_id: AppId,
    ev: EventId,
    accounts: &[AccountAddress],
) -> AppCall {
    AppCall::new(sender, app_id)
        .with_args(vec![
            b"execute".to_vec(),
            (ev.get() as u64).to_be_bytes().to_vec(),
        ])
        .with_accounts(accounts.to_vec())
}

/// Errors reading a workflow image out of a ledger.
#[derive(Debug, Error, PartialEq, Eq)]
pub enum StateReadError {
    #[error("no application with id {0}")]
    UnknownApp(AppId),
    #[error("missing pair {0:?}")]
    MissingPair(String),
    #[error("pair {0:?} holds the wrong value kind")]
    WrongKind(String),
    #[error("stored event count {0} is out of range")]
    EventCountOutOfRange(u64),
    #[error("stored address has the wrong length")]
    BadAddress,
    #[error(transparent)]
    Decode(#[from] EncodingError),
}

fn read_pair_bytes(
    ledger: &Ledger,
    app_id: AppId,
    scope: StorageScope,
    key: &[u8],
) -> Result<Vec<u8>, StateReadError> {
    let name = String::from_utf8_lossy(key).into_owned();
    match ledger.kv_read(app_id, scope, key) {
        Some(TealValue::Bytes(b)) => Ok(b.clone()),
        Some(TealValue::Uint(_)) => Err(StateReadError::WrongKind(name)),
        None => Err(StateReadError::MissingPair(name)),
    }
}

/// Reads the raw packed image of a deployed workflow.
pub fn read_image(ledger: &Ledger, app_id: AppId) -> Result<GraphStateImage, StateReadError> {
    if ledger.app(app_id).is_none() {
        return Err(StateReadError::UnknownApp(app_id));
    }
    let count = match ledger.kv_read(app_id, StorageScope::Global, KEY_EVENT_COUNT) {
        Some(TealValue::Uint(n)) => *n,
        Some(TealValue::Bytes(_)) => return Err(StateReadError::WrongKind("TEN".into())),
        None => return Err(StateReadError::MissingPair("TEN".into())),
    };
    if count > MAX_EVENTS as u64 {
        return Err(StateReadError::EventCountOutOfRange(count));
    }
    let event_count = count as u8;
    let creator_bytes = read_pair_bytes(ledger, app_id, StorageScope::Global, KEY_CREATOR)?;
    let creator_bytes: [u8; ADDRESS_LEN] = creator_bytes
        .try_into()
        .map_err(|_| StateReadError::BadAddress)?;
    let marking = read_pair_bytes(ledger, app_id, StorageScope::Global, KEY_MARKING)?;

    let mut links = Vec::with_capacity(event_count as usize);
    let mut executors = Vec::with_capacity(event_count as usize);
    for raw in 1..=event_count {
        let ev = EventId::new(raw).expect("within MAX_EVENTS");
        let scope = slot_for_pair(links_pair_ordinal(ev))?;
        links.push(read_pair_bytes(ledger, app_id, scope, &links_key(ev))?);
        let scope = slot_for_pair(executor_pair_ordinal(ev))?;
        let bytes = read_pair_bytes(ledger, app_id, scope, &executor_key(ev))?;
        let bytes: [u8; ADDRESS_LEN] = bytes.try_into().map_err(|_| StateReadError::BadAddress)?;
        executors.push(AccountAddress::new(bytes));
    }
    Ok(GraphStateImage {
        creator: AccountAddress::new(creator_bytes),
        event_count,
        marking,
        links,
        executors,
    })
}

/// Decodes a deployed workflow into a validated reference graph.
pub fn snapshot_graph(ledger: &Ledger, app_id: AppId) -> Result<DcrGraph, StateReadError> {
    Ok(read_image(ledger, app_id)?.to_graph()?)
}

/// Storage accounts a graph of `event_count` events needs, given the
/// 64-pair global store and 16-pair storage accounts.
pub fn storage_accounts_needed(event_count: u8) -> u32 {
    let pairs = crate::encoding::pairs_for_events(event_count);
    pairs.saturating_sub(crate::encoding::MAX_GLOBAL_PAIRS).div_ceil(crate::encoding::MAX_LOCAL_PAIRS)
}
