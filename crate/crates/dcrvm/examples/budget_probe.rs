//! Measures the operation cost of every contract handler against the
//! worst state the contract can reach: 61 events, every links row
//! completely full, all four storage accounts in play. Each handler must
//! fit its work into a single call's operation budget.
//!
//! Run with:
//!
//! ```sh
//! cargo run --example budget_probe
//! ```

use dcrvm::addr::AccountAddress;
use dcrvm::avm::{AppId, Ledger, StorageScope, TealValue, OP_BUDGET};
use dcrvm::contract::{
    add_event_call, add_relation_call, create_workflow, execute_call, update_status_call,
    StatusCode, WorkflowProgram,
};
use dcrvm::dcr::{EventId, EventSet, Marking, Relation, RelationKind};
use dcrvm::driver::{storage_address, DEFAULT_CREATOR};
use dcrvm::encoding::{
    encode_marking, executor_key, executor_pair_ordinal, links_key, links_len,
    links_pair_ordinal, set_bit, slot_for_pair, KEY_EVENT_COUNT, KEY_MARKING,
};

fn ev(id: u8) -> EventId {
    EventId::new(id).unwrap()
}

/// Deploys a workflow and force-feeds it a saturated state: `n` events,
/// all included and executed, and every possible relation bit set.
fn saturated(n: u8, program: &WorkflowProgram) -> (Ledger, AppId, Vec<AccountAddress>) {
    let mut ledger = Ledger::new();
    ledger.fund(DEFAULT_CREATOR, 1_000_000_000);
    let (app, _) = create_workflow(&mut ledger, DEFAULT_CREATOR, program).unwrap();

    let mut storage = Vec::new();
    for index in 0..4u8 {
        let addr = storage_address(DEFAULT_CREATOR, index);
        ledger.fund(addr, 100_000_000);
        ledger.opt_in(addr, app).unwrap();
        storage.push(addr);
    }

    ledger
        .kv_write(app, StorageScope::Global, KEY_EVENT_COUNT, TealValue::Uint(n as u64))
        .unwrap();
    let marking = Marking::new(EventSet::up_to(n), EventSet::empty(), EventSet::up_to(n));
    ledger
        .kv_write(
            app,
            StorageScope::Global,
            KEY_MARKING,
            TealValue::Bytes(encode_marking(&marking, n).bytes),
        )
        .unwrap();

    let executor = AccountAddress::repeat(0x11);
    ledger.fund(executor, 1_000_000);
    for raw in 1..=n {
        let event = ev(raw);
        let mut row = vec![0xFF; links_len(n)];
        for bit in (n as usize * 5)..(row.len() * 8) {
            set_bit(&mut row, bit, false);
        }
        let scope = slot_for_pair(links_pair_ordinal(event)).unwrap();
        ledger
            .kv_write(app, scope, &links_key(event), TealValue::Bytes(row))
            .unwrap();
        let scope = slot_for_pair(executor_pair_ordinal(event)).unwrap();
        ledger
            .kv_write(
                app,
                scope,
                &executor_key(event),
                TealValue::Bytes(executor.as_bytes().to_vec()),
            )
            .unwrap();
    }
    (ledger, app, storage)
}

fn bar(ops: u64) -> String {
    let width = (ops * 40 / OP_BUDGET) as usize;
    format!("[{:<40}]", "#".repeat(width))
}

fn main() {
    let program = WorkflowProgram::new();
    let executor = AccountAddress::repeat(0x11);
    println!(
        "every handler against a saturated 61-event workflow \
         (budget {OP_BUDGET} ops per call):\n"
    );

    let (full, app, storage) = saturated(61, &program);
    let probe = |label: String, ledger: &mut Ledger, call| {
        let result = ledger.app_call(&program, &call).expect("call enters the ledger");
        assert!(result.approved, "{label}: {:?}", result.reject);
        assert!(result.ops_used <= OP_BUDGET);
        println!("    {:<44} {:>4} ops {}", label, result.ops_used, bar(result.ops_used));
    };

    for target in [1u8, 31, 61] {
        probe(
            format!("execute event {target} (305 link bits honoured)"),
            &mut full.clone(),
            execute_call(executor, app, ev(target), &storage),
        );
    }
    probe(
        "update_status (pend event 61)".to_string(),
        &mut full.clone(),
        update_status_call(DEFAULT_CREATOR, app, ev(61), StatusCode::Pend),
    );
    probe(
        "add_relation onto a full global row".to_string(),
        &mut full.clone(),
        add_relation_call(
            DEFAULT_CREATOR,
            app,
            Relation::new(ev(1), RelationKind::Include, ev(61)),
            &storage,
        ),
    );
    probe(
        "add_relation onto a full local row".to_string(),
        &mut full.clone(),
        add_relation_call(
            DEFAULT_CREATOR,
            app,
            Relation::new(ev(61), RelationKind::Condition, ev(61)),
            &storage,
        ),
    );

    // Adding the 61st event grows all sixty existing rows by one byte —
    // the single most write-heavy call the contract ever performs.
    let (mut at_sixty, app, storage) = saturated(60, &program);
    probe(
        "add_event 61 (sixty rows grow a byte)".to_string(),
        &mut at_sixty,
        add_event_call(DEFAULT_CREATOR, app, executor, &storage),
    );

    println!("\nall handlers fit the single-call budget at full capacity");
}
