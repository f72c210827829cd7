//! Drives a parsed graph file onto the chain as a transaction sequence:
//! one application create, opt-ins for derived storage accounts, one
//! `add_event` per event, one `add_relation` per relation, and one
//! `update_status` per divergence from the default marking (events start
//! included and not pending). The report tallies transactions, fees,
//! operation budgets, and locked escrow.
//!
//! Constructed state lands on the real (simulated) chain, so a file that
//! exceeds on-chain capacity fails at the first rejected transaction —
//! earlier transactions stay committed, exactly as they would on chain.

use thiserror::Error;

use crate::addr::AccountAddress;
use crate::avm::{AppId, AvmError, CallResult, Ledger, Reject};
use crate::contract::{
    add_event_call, add_relation_call, create_workflow, execute_call, read_image,
    storage_accounts_needed, update_status_call, StateReadError, StatusCode, WorkflowProgram,
};
use crate::dcr::{EventId, Relation};
use crate::graphfile::GraphSpec;

/// Creator used when a caller does not name one (CLI and scenarios).
pub const DEFAULT_CREATOR: AccountAddress = AccountAddress::repeat(0xaa);

#[derive(Debug, Error)]
pub enum DriverError {
    #[error("the file marks events executed; only on-chain execution can establish that")]
    ExecutedEvents,
    #[error("step {index} ({action}) rejected: {reject}")]
    StepRejected {
        index: usize,
        action: String,
        reject: Reject,
    },
    #[error(transparent)]
    Avm(#[from] AvmError),
    #[error(transparent)]
    StateRead(#[from] StateReadError),
    #[error("event {0} does not exist on chain")]
    UnknownEvent(u64),
}

/// Construction options.
#[derive(Clone, Copy, Debug)]
pub struct ConstructOptions {
    /// Mint balances for the creator, derived storage accounts, and
    /// executors so the whole sequence can pay its fees and escrow.
    pub fund: bool,
}

impl Default for ConstructOptions {
    fn default() -> Self {
        ConstructOptions { fund: true }
    }
}

/// One transaction the driver submitted.
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct StepRecord {
    pub action: String,
    pub ops_used: u64,
    pub fee_paid: u64,
}

/// What a completed construction did.
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct ConstructionReport {
    pub app_id: AppId,
    pub storage_accounts: Vec<AccountAddress>,
    /// Application calls: 1 create + events + relations + status updates.
    pub construction_txns: u64,
    /// Storage-account opt-ins, tallied separately from the calls above.
    pub optin_txns: u64,
    /// Fees collected across every transaction, opt-ins included.
    pub total_fees: u64,
    /// Microalgos newly locked as minimum balance across the creator and
    /// the storage accounts.
    pub escrow_locked: u64,
    /// The most expensive single call, in operations.
    pub max_ops: u64,
    pub steps: Vec<StepRecord>,
}

/// The derived address that hosts storage account `index` for a workflow
/// created by `creator`. Deterministic, so replays and reports agree.
pub fn storage_address(creator: AccountAddress, index: u8) -> AccountAddress {
    let mut bytes = *creator.as_bytes();
    bytes[24..30].copy_from_slice(b"stores");
    bytes[30] = 0xd5;
    bytes[31] = index;
    AccountAddress::new(bytes)
}

fn min_balance_of(ledger: &Ledger, addr: AccountAddress) -> u64 {
    ledger.account(addr).map_or(0, |a| a.min_balance)
}

/// Replays `spec` onto the ledger as real transactions and reports what
/// that cost. On a rejected step the already-committed transactions stay
/// committed (the error names the step and the chain's rejection).
pub fn construct(
    ledger: &mut Ledger,
    spec: &GraphSpec,
    creator: AccountAddress,
    program: &WorkflowProgram,
    opts: ConstructOptions,
) -> Result<ConstructionReport, DriverError> {
    if spec.has_executed_events() {
        return Err(DriverError::ExecutedEvents);
    }

    let event_total = spec.event_count() as u64;
    let relation_total = spec.relations.len() as u64;
    let status_total: u64 = spec
        .events
        .iter()
        .map(|e| u64::from(!e.included) + u64::from(e.pending))
        .sum();
    let optin_total = storage_accounts_needed(spec.event_count().min(u8::MAX as usize) as u8);

    if opts.fund {
        let txns = 1 + event_total + relation_total + status_total + optin_total as u64;
        ledger.fund(creator, txns * ledger.flat_fee() + 4_000_000);
        for j in 0..optin_total {
            ledger.fund(storage_address(creator, j as u8), 1_000_000);
        }
        for event in &spec.events {
            ledger.fund(event.executor, 1_000_000);
        }
    }

    let fees_before = ledger.fees_collected();
    let creator_escrow_before = min_balance_of(ledger, creator);
    // Derived storage addresses are per-creator, not per-app, so a second
    // workflow reuses them; measure their lock as a delta too.
    let storage_escrow_before: u64 = (0..optin_total)
        .map(|j| min_balance_of(ledger, storage_address(creator, j as u8)))
        .sum();

    let mut steps: Vec<StepRecord> = Vec::new();
    let mut record = |action: String, result: &CallResult| -> Result<(), DriverError> {
        let index = steps.len();
        steps.push(StepRecord {
            action: action.clone(),
            ops_used: result.ops_used,
            fee_paid: result.fee_paid,
        });
        match &result.reject {
            None => Ok(()),
            Some(reject) => Err(DriverError::StepRejected {
                index,
                action,
                reject: reject.clone(),
            }),
        }
    };

    let (app_id, result) = create_workflow(ledger, creator, program)?;
    record("create".to_string(), &result)?;

    let mut storage = Vec::new();
    for j in 0..optin_total {
        let addr = storage_address(creator, j as u8);
        let result = ledger.opt_in(addr, app_id)?;
        record(format!("opt_in storage[{j}]"), &result)?;
        storage.push(addr);
    }

    for event in &spec.events {
        let call = add_event_call(creator, app_id, event.executor, &storage);
        let result = ledger.app_call(program, &call)?;
        record(format!("add_event {}", event.id), &result)?;
    }
    for relation in &spec.relations {
        // Endpoints are in range here: every add_event above was approved,
        // so ids fit the on-chain cap, and the parser ties relation
        // endpoints to declared events.
        let rel = Relation::new(
            EventId::new(relation.source as u8).expect("approved event id"),
            relation.kind,
            EventId::new(relation.target as u8).expect("approved event id"),
        );
        let call = add_relation_call(creator, app_id, rel, &storage);
        let result = ledger.app_call(program, &call)?;
        record(
            format!(
                "add_relation {} {} {}",
                relation.source,
                relation.kind.name(),
                relation.target
            ),
            &result,
        )?;
    }
    for event in &spec.events {
        let ev = EventId::new(event.id as u8).expect("approved event id");
        if !event.included {
            let call = update_status_call(creator, app_id, ev, StatusCode::Exclude);
            let result = ledger.app_call(program, &call)?;
            record(format!("update_status {} exclude", event.id), &result)?;
        }
        if event.pending {
            let call = update_status_call(creator, app_id, ev, StatusCode::Pend);
            let result = ledger.app_call(program, &call)?;
            record(format!("update_status {} pend", event.id), &result)?;
        }
    }

    let escrow_locked = (min_balance_of(ledger, creator) - creator_escrow_before)
        + storage
            .iter()
            .map(|&a| min_balance_of(ledger, a))
            .sum::<u64>()
        - storage_escrow_before;
    Ok(ConstructionReport {
        app_id,
        storage_accounts: storage,
        construction_txns: 1 + event_total + relation_total + status_total,
        optin_txns: optin_total as u64,
        total_fees: ledger.fees_collected() - fees_before,
        escrow_locked,
        max_ops: steps.iter().map(|s| s.ops_used).max().unwrap_or(0),
        steps,
    })
}

/// Submits one `execute` transaction for `event`. The sender defaults to
/// the event's on-chain executor; passing a different sender exercises
/// the contract's executor check. Returns the chain's verdict — a
/// rejected call is an `Ok` result whose `reject` field says why.
pub fn execute_event(
    ledger: &mut Ledger,
    program: &WorkflowProgram,
    app_id: AppId,
    event: u64,
    sender: Option<AccountAddress>,
) -> Result<CallResult, DriverError> {
    let image = read_image(ledger, app_id)?;
    let ev = EventId::new(u8::try_from(event).map_err(|_| DriverError::UnknownEvent(event))?)
        .map_err(|_| DriverError::UnknownEvent(event))?;
    let executor = *image
        .executors
        .get(ev.index0())
        .ok_or(DriverError::UnknownEvent(event))?;
    let sender = sender.unwrap_or(executor);
    // Top the sender up if it cannot cover the flat fee, so rejections
    // reflect the contract's checks rather than an empty test wallet.
    let fee = ledger.flat_fee();
    let spendable = ledger
        .account(sender)
        .map_or(0, |a| a.balance.saturating_sub(a.min_balance));
    if spendable < fee {
        ledger.fund(sender, fee - spendable);
    }
    let accounts = ledger
        .app(app_id)
        .map(|a| a.storage_accounts.clone())
        .unwrap_or_default();
    let call = execute_call(sender, app_id, ev, &accounts);
    Ok(ledger.app_call(program, &call)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::contract::snapshot_graph;
    use crate::dcr::fixtures::{mortgage, CREATOR};
    use crate::graphfile::GraphSpec;

    fn creator() -> AccountAddress {
        AccountAddress::repeat(CREATOR)
    }

    #[test]
    fn constructs_reference_graph_exactly() {
        let reference = mortgage();
        let spec = GraphSpec::from_graph(&reference);
        let mut ledger = Ledger::new();
        let program = WorkflowProgram::new();
        let report = construct(
            &mut ledger,
            &spec,
            creator(),
            &program,
            ConstructOptions::default(),
        )
        .unwrap();
        assert_eq!(snapshot_graph(&ledger, report.app_id).unwrap(), reference);
        // 1 create + 6 events + 10 relations + 1 pend update, no opt-ins
        // (6 events fit the global store).
        assert_eq!(report.construction_txns, 18);
        assert_eq!(report.optin_txns, 0);
        assert_eq!(report.total_fees, 18 * ledger.flat_fee());
        assert_eq!(
            report.escrow_locked,
            ledger.app_escrow(report.app_id).unwrap()
        );
        assert_eq!(report.steps.len(), 18);
        assert!(report.max_ops <= crate::avm::OP_BUDGET);
    }

    #[test]
    fn escrow_locked_matches_cost_model() {
        for events in [0u8, 5, 31, 61] {
            let graph = crate::dcr::DcrGraph::random(40 + events as u64, events, 0.1).unwrap();
            let spec = GraphSpec::from_graph(&graph);
            let mut ledger = Ledger::new();
            let program = WorkflowProgram::new();
            let report = construct(
                &mut ledger,
                &spec,
                graph.creator(),
                &program,
                ConstructOptions::default(),
            )
            .unwrap();
            let quote = crate::cost::escrow_overall(events as u64).unwrap();
            assert_eq!(report.escrow_locked, quote.total, "events = {events}");
            assert_eq!(report.optin_txns as usize, quote.locals.len());
        }
    }

    #[test]
    fn oversized_file_fails_at_the_chain_boundary() {
        // 62 events parse fine; the 62nd add_event must be the step the
        // chain rejects, with everything before it still committed.
        let executor = AccountAddress::repeat(0x11);
        let mut text = String::from("dcrgraph v1\n");
        for id in 1..=62 {
            text.push_str(&format!("event {id} executor={}\n", executor.to_hex()));
        }
        let spec = GraphSpec::parse(&text).unwrap();
        let mut ledger = Ledger::new();
        let program = WorkflowProgram::new();
        let err = construct(
            &mut ledger,
            &spec,
            creator(),
            &program,
            ConstructOptions::default(),
        )
        .unwrap_err();
        match err {
            DriverError::StepRejected {
                action, reject, ..
            } => {
                assert_eq!(action, "add_event 62");
                assert_eq!(reject.code(), crate::contract::codes::CAPACITY_EXCEEDED);
            }
            other => panic!("unexpected error {other:?}"),
        }
        // The 61 committed events are intact.
        let image = crate::contract::read_image(&ledger, 1).unwrap();
        assert_eq!(image.event_count, 61);
    }

    #[test]
    fn executed_flags_are_refused_up_front() {
        let executor = AccountAddress::repeat(0x11);
        let text = format!(
            "dcrgraph v1\nevent 1 executor={} included executed\n",
            executor.to_hex()
        );
        let spec = GraphSpec::parse(&text).unwrap();
        let mut ledger = Ledger::new();
        let program = WorkflowProgram::new();
        assert!(matches!(
            construct(
                &mut ledger,
                &spec,
                creator(),
                &program,
                ConstructOptions::default()
            ),
            Err(DriverError::ExecutedEvents)
        ));
        // Nothing touched the ledger.
        assert_eq!(ledger, Ledger::new());
    }

    #[test]
    fn execute_event_defaults_to_the_on_chain_executor() {
        let reference = mortgage();
        let spec = GraphSpec::from_graph(&reference);
        let mut ledger = Ledger::new();
        let program = WorkflowProgram::new();
        let report = construct(
            &mut ledger,
            &spec,
            creator(),
            &program,
            ConstructOptions::default(),
        )
        .unwrap();

        let result = execute_event(&mut ledger, &program, report.app_id, 1, None).unwrap();
        assert!(result.approved, "{:?}", result.reject);
        let expected = reference.execute(EventId::new(1).unwrap()).unwrap();
        assert_eq!(snapshot_graph(&ledger, report.app_id).unwrap(), expected);

        // A wrong sender is the chain's rejection, not a driver error.
        let wrong = AccountAddress::repeat(0x77);
        let result =
            execute_event(&mut ledger, &program, report.app_id, 2, Some(wrong)).unwrap();
        assert!(!result.approved);
        assert_eq!(
            result.reject.as_ref().unwrap().code(),
            crate::contract::codes::NOT_EXECUTOR
        );
        // Event 99 never exists.
        assert!(matches!(
            execute_event(&mut ledger, &program, report.app_id, 99, None),
            Err(DriverError::UnknownEvent(99))
        ));
    }

    #[test]
    fn storage_addresses_are_distinct_and_deterministic() {
        let a = storage_address(creator(), 0);
        let b = storage_address(creator(), 1);
        assert_ne!(a, b);
        assert_ne!(a, creator());
        assert_eq!(a, storage_address(creator(), 0));
        assert_ne!(a, storage_address(AccountAddress::repeat(0x11), 0));
    }
}
