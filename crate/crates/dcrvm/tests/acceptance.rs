//! End-to-end acceptance suite.
//!
//! Each test checks one headline guarantee of the crate and finishes by
//! printing a single `PASS:` line (visible with `--nocapture`):
//!
//! 1. the published cost table is reproduced digit for digit,
//! 2. the escrow model matches what a real construction locks on chain,
//! 3. the reference workflow runs its documented lifecycle on chain,
//! 4. chain and reference semantics agree under random and exhaustive
//!    differential testing,
//! 5. every handler fits the single-call operation budget at the
//!    capacity ceiling,
//! 6. resource limits are enforced exactly, and rejected calls leave
//!    no trace beyond their fee,
//! 7. the packed state encoding round-trips losslessly.

use std::collections::BTreeMap;
use std::path::Path;

use dcrvm::addr::AccountAddress;
use dcrvm::avm::{
    Ledger, StorageError, StorageScope, TealValue, APP_BASE_ESCROW, BYTES_PAIR_ESCROW, OP_BUDGET,
    OPTIN_BASE_ESCROW, UINT_PAIR_ESCROW,
};
use dcrvm::contract::{
    add_event_call, add_relation_call, codes, create_workflow, execute_call, read_image,
    snapshot_graph, storage_accounts_needed, update_status_call, StatusCode, WorkflowProgram,
};
use dcrvm::cost::{
    comparison_report, escrow_global, escrow_local_schedule, escrow_overall, format_algos,
    format_eth, EthBaseline, DEFAULT_RATE,
};
use dcrvm::dcr::{DcrGraph, EventId, EventSet, Marking, Relation, RelationKind};
use dcrvm::driver::{
    construct, execute_event, storage_address, ConstructOptions, DriverError, DEFAULT_CREATOR,
};
use dcrvm::encoding::{
    decode_links, decode_marking, encode_links, encode_marking, executor_key,
    executor_pair_ordinal, links_key, links_len, links_pair_ordinal, pairs_for_events, set_bit,
    slot_for_pair, GraphStateImage, KEY_EVENT_COUNT, KEY_MARKING,
};
use dcrvm::fuzz::{exhaustive_small, run_fuzz, FuzzConfig};
use dcrvm::graphfile::{EventDecl, GraphSpec};
use dcrvm::scenario::{replay, Scenario};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn corpus_dir() -> std::path::PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("corpus")
}

fn ev(id: u8) -> EventId {
    EventId::new(id).expect("valid event id")
}

fn evset(ids: &[u8]) -> EventSet {
    ids.iter().map(|&i| ev(i)).collect()
}

/// The benchmark quotes its USD-per-algo ratios as integers; allow one
/// unit of rounding slack when checking them.
fn assert_ratio(actual: u64, expected: u64, what: &str) {
    assert!(
        actual.abs_diff(expected) <= 1,
        "{what}: got {actual}, expected {expected} (±1)"
    );
}

#[test]
fn cost_table_matches_published_benchmark() {
    let report =
        comparison_report(5, 11, 3, DEFAULT_RATE, EthBaseline::default()).expect("valid inputs");

    let creation = &report.rows[0];
    assert_eq!(creation.txns, 20, "creation transaction count");
    assert_eq!(format_algos(creation.algo_microalgos), "0.02");
    assert_eq!(creation.algo_usd.to_string(), "0.02720");
    assert_eq!(format_eth(creation.eth_gwei), "0.10765635");
    assert_eq!(creation.eth_usd.to_string(), "349.88314");
    assert_ratio(creation.advantage, 17_494, "creation advantage");

    let with_escrow = &report.rows[1];
    assert_eq!(with_escrow.algo_microalgos, 748_500);
    assert_eq!(format_algos(with_escrow.algo_microalgos), "0.7485");
    assert_eq!(with_escrow.algo_usd.to_string(), "1.01796");
    assert_ratio(with_escrow.advantage, 467, "creation-with-escrow advantage");

    let execution = &report.rows[2];
    assert_eq!(execution.txns, 1);
    assert_eq!(format_algos(execution.algo_microalgos), "0.001");
    assert_eq!(execution.algo_usd.to_string(), "0.00136");
    assert_eq!(format_eth(execution.eth_gwei), "0.0081744");
    assert_eq!(execution.eth_usd.to_string(), "26.56680");
    assert_ratio(execution.advantage, 19_534, "execution advantage");

    println!(
        "PASS: cost table reproduced — 20-txn creation $0.02720, $1.01796 with escrow, \
         $0.00136 per execution, advantages 17494/467/19534"
    );
}

#[test]
fn escrow_formula_matches_chain_deposits() {
    // Frozen reference points.
    assert_eq!(escrow_global(0).unwrap(), 228_500);
    assert_eq!(escrow_global(5).unwrap(), 728_500);
    assert_eq!(escrow_global(61).unwrap(), 3_278_500);
    assert_eq!(escrow_overall(0).unwrap().total, 228_500);
    assert_eq!(escrow_overall(5).unwrap().total, 728_500);
    assert_eq!(escrow_overall(61).unwrap().total, 6_728_500);
    assert_eq!(
        escrow_local_schedule(61).unwrap(),
        vec![900_000, 900_000, 900_000, 750_000]
    );
    assert_eq!(escrow_local_schedule(32).unwrap(), vec![250_000]);

    // The closed-form schedule must agree with a first-principles walk
    // over every pair's creation ordinal and storage slot.
    for n in 0..=61u8 {
        let quote = escrow_overall(n as u64).unwrap();
        let mut global = APP_BASE_ESCROW;
        let mut locals: BTreeMap<u8, u64> = BTreeMap::new();
        for ordinal in 1..=pairs_for_events(n) {
            let pair = if ordinal == 3 {
                UINT_PAIR_ESCROW
            } else {
                BYTES_PAIR_ESCROW
            };
            match slot_for_pair(ordinal).unwrap() {
                StorageScope::Global => global += pair,
                StorageScope::Local { account } => {
                    *locals.entry(account).or_insert(OPTIN_BASE_ESCROW) += pair;
                }
            }
        }
        assert_eq!(quote.global, global, "global escrow at {n} events");
        let locals: Vec<u64> = locals.into_values().collect();
        assert_eq!(quote.locals, locals, "local escrow at {n} events");
        assert_eq!(quote.total, quote.global + quote.locals.iter().sum::<u64>());
    }

    // Real constructions must lock exactly the quoted amount, across the
    // storage-account boundaries (31/32 events) and at both extremes.
    let program = WorkflowProgram::new();
    for &n in &[0u8, 1, 5, 16, 30, 31, 32, 38, 39, 61] {
        let graph = DcrGraph::random(0xE5C0 + n as u64, n, 0.1).unwrap();
        let spec = GraphSpec::from_graph(&graph);
        let mut ledger = Ledger::new();
        let report = construct(
            &mut ledger,
            &spec,
            graph.creator(),
            &program,
            ConstructOptions::default(),
        )
        .unwrap_or_else(|e| panic!("construction of {n}-event graph failed: {e}"));
        let quote = escrow_overall(n as u64).unwrap();
        assert_eq!(
            report.escrow_locked, quote.total,
            "locked escrow at {n} events"
        );
        assert_eq!(
            ledger.app_escrow(report.app_id),
            Some(quote.total),
            "app escrow at {n} events"
        );
        assert_eq!(
            report.storage_accounts.len(),
            quote.locals.len(),
            "storage accounts at {n} events"
        );
    }

    println!(
        "PASS: escrow model verified — formula matches slot-walk enumeration for 0..=61 \
         events and on-chain deposits at 10 sizes (228500 empty, 6728500 full)"
    );
}

#[test]
fn reference_workflow_lifecycle_on_chain() {
    let dir = corpus_dir();
    let text = std::fs::read_to_string(dir.join("mortgage.dcr")).expect("corpus graph");
    let spec = GraphSpec::parse(&text).expect("corpus graph parses");
    let mut reference = spec.to_graph(DEFAULT_CREATOR).expect("corpus graph is valid");
    assert_eq!(reference.event_count(), 6);
    assert_eq!(reference.relation_count(), 10);

    let program = WorkflowProgram::new();
    let mut ledger = Ledger::new();
    let report = construct(
        &mut ledger,
        &spec,
        DEFAULT_CREATOR,
        &program,
        ConstructOptions::default(),
    )
    .expect("construction succeeds");
    let app = report.app_id;

    // Initial state: awaiting the assessment, four tasks available.
    let chain = snapshot_graph(&ledger, app).unwrap();
    assert!(!chain.is_accepting(), "assessment still due");
    assert_eq!(chain.marking().pending, evset(&[6]));
    assert_eq!(chain.enabled_events(), evset(&[1, 2, 3, 4]));

    // The assessment cannot run before its conditions.
    let blocked = execute_event(&mut ledger, &program, app, 6, None).unwrap();
    assert!(!blocked.approved);
    assert_eq!(blocked.reject.unwrap().code(), codes::NOT_ENABLED);

    // Nor can anyone but the assigned executor run a task.
    let outsider = AccountAddress::repeat(0x99);
    let refused = execute_event(&mut ledger, &program, app, 1, Some(outsider)).unwrap();
    assert!(!refused.approved);
    assert_eq!(refused.reject.unwrap().code(), codes::NOT_EXECUTOR);

    // One appraisal excludes the other.
    let fired = execute_event(&mut ledger, &program, app, 3, None).unwrap();
    assert!(fired.approved);
    reference = reference.execute(ev(3)).unwrap();
    let chain = snapshot_graph(&ledger, app).unwrap();
    assert_eq!(chain.marking(), reference.marking());
    assert_eq!(chain.marking().included, evset(&[1, 2, 3, 5, 6]));
    assert_eq!(chain.enabled_events(), evset(&[1, 2, 3]));

    // Finishing the paperwork unlocks the assessment.
    for event in [1u8, 2] {
        let fired = execute_event(&mut ledger, &program, app, event as u64, None).unwrap();
        assert!(fired.approved);
        reference = reference.execute(ev(event)).unwrap();
    }
    let chain = snapshot_graph(&ledger, app).unwrap();
    assert_eq!(chain.marking(), reference.marking());
    assert_eq!(chain.enabled_events(), evset(&[1, 2, 3, 5, 6]));

    // Assessing the application discharges the workflow.
    let fired = execute_event(&mut ledger, &program, app, 6, None).unwrap();
    assert!(fired.approved);
    reference = reference.execute(ev(6)).unwrap();
    let chain = snapshot_graph(&ledger, app).unwrap();
    assert_eq!(chain.marking(), reference.marking());
    assert!(chain.is_accepting(), "workflow complete");
    assert_eq!(chain.marking().executed, evset(&[1, 2, 3, 6]));

    // A revised budget demands a fresh assessment.
    let fired = execute_event(&mut ledger, &program, app, 2, None).unwrap();
    assert!(fired.approved);
    reference = reference.execute(ev(2)).unwrap();
    let chain = snapshot_graph(&ledger, app).unwrap();
    assert_eq!(chain.marking(), reference.marking());
    assert!(!chain.is_accepting(), "assessment due again");
    assert_eq!(chain.marking().pending, evset(&[6]));

    // The scripted version of the same lifecycle replays cleanly.
    let scn_text = std::fs::read_to_string(dir.join("mortgage_accept.scn")).expect("scenario");
    let scn = Scenario::parse(&scn_text).expect("scenario parses");
    let replayed = replay(&scn, &dir).expect("scenario replays");
    assert_eq!(replayed.lines.len(), scn.steps.len());

    println!(
        "PASS: reference workflow verified on chain — exclusion, milestone-free paperwork \
         path, acceptance after event 6, re-opened by the budget response ({} scripted steps)",
        scn.steps.len()
    );
}

#[test]
fn differential_random_and_exhaustive_agreement() {
    let honest = WorkflowProgram::new();

    // Random graphs at three densities, up to the 61-event ceiling.
    let config = FuzzConfig {
        seed: 0xD1FF,
        iterations: 1_000,
        max_events: 61,
        densities: vec![0.05, 0.15, 0.5],
        max_trace: 100,
    };
    let report = run_fuzz(&config, &honest);
    if let Some(cex) = &report.counterexample {
        panic!("random differential run found a divergence:\n{cex}");
    }
    assert_eq!(report.graphs, config.iterations);
    assert!(report.approvals > 0, "walks must fire events");
    assert!(report.rejections > 0, "walks must probe disabled events");

    // Every 3-event graph with up to 4 relations, every reachable
    // marking to depth 4, every event's verdict at every marking.
    let exhaustive = exhaustive_small(&honest, 3, 4, 4);
    if let Some(cex) = &exhaustive.counterexample {
        panic!("exhaustive differential run found a divergence:\n{cex}");
    }
    assert!(exhaustive.verdicts_compared > exhaustive.markings_checked);

    // The harness has teeth: a contract with one dropped check is caught.
    let faulty = WorkflowProgram::with_fault(dcrvm::contract::InjectedFault::SkipInclusionCheck);
    let sting = run_fuzz(
        &FuzzConfig {
            seed: 7,
            iterations: 200,
            max_events: 8,
            densities: vec![0.3],
            max_trace: 24,
        },
        &faulty,
    );
    assert!(
        sting.counterexample.is_some(),
        "harness failed to catch an injected fault"
    );

    println!(
        "PASS: differential agreement — {} random steps over {} graphs \
         ({} approvals / {} rejections) and {} exhaustive graphs ({} markings, {} verdicts) \
         with zero divergences; injected fault caught",
        report.steps,
        report.graphs,
        report.approvals,
        report.rejections,
        exhaustive.graphs,
        exhaustive.markings_checked,
        exhaustive.verdicts_compared
    );
}

/// Builds a ledger whose app is at the stated size with every links row
/// completely full (all five relation kinds between every ordered pair,
/// self-loops included), every event included and executed, and all four
/// storage accounts opted in. This is the worst case every handler must
/// survive within one call's budget.
fn saturated_workflow(
    event_count: u8,
    program: &WorkflowProgram,
) -> (Ledger, dcrvm::avm::AppId, Vec<AccountAddress>) {
    let creator = DEFAULT_CREATOR;
    let mut ledger = Ledger::new();
    ledger.fund(creator, 1_000_000_000);
    let (app, created) = create_workflow(&mut ledger, creator, program).unwrap();
    assert!(created.approved);

    let mut storage = Vec::new();
    for index in 0..4u8 {
        let addr = storage_address(creator, index);
        ledger.fund(addr, 100_000_000);
        ledger.opt_in(addr, app).unwrap();
        storage.push(addr);
    }

    ledger
        .kv_write(
            app,
            StorageScope::Global,
            KEY_EVENT_COUNT,
            TealValue::Uint(event_count as u64),
        )
        .unwrap();

    let marking = Marking::new(
        EventSet::up_to(event_count),
        EventSet::empty(),
        EventSet::up_to(event_count),
    );
    ledger
        .kv_write(
            app,
            StorageScope::Global,
            KEY_MARKING,
            TealValue::Bytes(encode_marking(&marking, event_count).bytes),
        )
        .unwrap();

    let executor = AccountAddress::repeat(0x11);
    for raw in 1..=event_count {
        let event = ev(raw);
        let mut row = vec![0xFF; links_len(event_count)];
        for bit in (event_count as usize * 5)..(row.len() * 8) {
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
    ledger.fund(executor, 1_000_000);
    (ledger, app, storage)
}

#[test]
fn all_handlers_fit_op_budget_at_capacity() {
    let program = WorkflowProgram::new();
    let creator = DEFAULT_CREATOR;
    let executor = AccountAddress::repeat(0x11);
    let (full, app, storage) = saturated_workflow(61, &program);
    let mut maxima: Vec<(&str, u64)> = Vec::new();
    let mut record = |label: &'static str, ops: u64| {
        assert!(
            ops <= OP_BUDGET,
            "{label} used {ops} ops, budget is {OP_BUDGET}"
        );
        match maxima.iter_mut().find(|(l, _)| *l == label) {
            Some(entry) => entry.1 = entry.1.max(ops),
            None => maxima.push((label, ops)),
        }
    };

    // `execute` with a full row: 305 link bits to honour, every effect
    // rewriting the 31-byte marking. Front, middle, and last event.
    for target in [1u8, 31, 61] {
        let mut ledger = full.clone();
        let call = execute_call(executor, app, ev(target), &storage);
        let result = ledger.app_call(&program, &call).unwrap();
        assert!(
            result.approved,
            "execute {target} at capacity: {:?}",
            result.reject
        );
        record("execute", result.ops_used);

        // The full effect really lands: everything re-pended (each event
        // responds to all others), everything still included.
        let after = snapshot_graph(&ledger, app).unwrap();
        assert_eq!(after.marking().pending, EventSet::up_to(61));
        assert_eq!(after.marking().included, EventSet::up_to(61));
        assert_eq!(after.marking().executed, EventSet::up_to(61));
    }

    // `update_status` rewrites the full marking.
    {
        let mut ledger = full.clone();
        let call = update_status_call(creator, app, ev(61), StatusCode::Pend);
        let result = ledger.app_call(&program, &call).unwrap();
        assert!(result.approved);
        record("update_status", result.ops_used);
    }

    // `add_relation` rewrites a full row — once on the global row of
    // event 1, once on the locally-stored row of event 61.
    for relation in [
        Relation::new(ev(1), RelationKind::Include, ev(61)),
        Relation::new(ev(61), RelationKind::Condition, ev(61)),
    ] {
        let mut ledger = full.clone();
        let call = add_relation_call(creator, app, relation, &storage);
        let result = ledger.app_call(&program, &call).unwrap();
        assert!(result.approved, "add_relation at capacity: {:?}", result.reject);
        record("add_relation", result.ops_used);
    }

    // `add_event` at 60 events grows every existing row by a byte — the
    // one moment it must touch all sixty rows in a single call.
    {
        let (mut ledger, app, storage) = saturated_workflow(60, &program);
        let call = add_event_call(creator, app, executor, &storage);
        let result = ledger.app_call(&program, &call).unwrap();
        assert!(result.approved, "add_event at capacity: {:?}", result.reject);
        record("add_event", result.ops_used);

        let after = snapshot_graph(&ledger, app).unwrap();
        assert_eq!(after.event_count(), 61);
        assert_eq!(after.marking().included, EventSet::up_to(61));
        assert_eq!(after.marking().executed, EventSet::up_to(60));
    }

    let summary = maxima
        .iter()
        .map(|(label, ops)| format!("{label} {ops}"))
        .collect::<Vec<_>>()
        .join(", ");
    println!("PASS: worst-case ops within the {OP_BUDGET}-op budget — {summary}");
}

#[test]
fn resource_limits_enforced() {
    let program = WorkflowProgram::new();

    // The 62nd event is refused on chain and the 61 before it survive.
    let executor = AccountAddress::repeat(0x11);
    let oversize = GraphSpec {
        events: (1..=62u16)
            .map(|id| EventDecl {
                id,
                executor,
                included: true,
                pending: false,
                executed: false,
                name: None,
            })
            .collect(),
        relations: Vec::new(),
    };
    let mut ledger = Ledger::new();
    let err = construct(
        &mut ledger,
        &oversize,
        DEFAULT_CREATOR,
        &program,
        ConstructOptions::default(),
    )
    .expect_err("62nd event must be rejected");
    match &err {
        DriverError::StepRejected { action, reject, .. } => {
            assert_eq!(action, "add_event 62");
            assert_eq!(reject.code(), codes::CAPACITY_EXCEEDED);
        }
        other => panic!("expected a rejected step, got {other}"),
    }
    let app = ledger.latest_app().expect("app exists");
    let image = read_image(&ledger, app).unwrap();
    assert_eq!(image.event_count, 61, "the first 61 events stay committed");

    // A pair may never exceed 128 bytes of key plus value.
    assert_eq!(
        ledger.kv_write(
            app,
            StorageScope::Global,
            b"k",
            TealValue::Bytes(vec![0; 128]),
        ),
        Err(StorageError::KeyValueTooLong {
            key: 1,
            value: 128
        })
    );

    // The global store holds at most 64 pairs — and the schema polices
    // value kinds, so a uint is refused even when slice slots remain.
    let (mut ledger, app) = {
        let mut ledger = Ledger::new();
        ledger.fund(DEFAULT_CREATOR, 1_000_000_000);
        let (app, _) = create_workflow(&mut ledger, DEFAULT_CREATOR, &program).unwrap();
        (ledger, app)
    };
    assert_eq!(
        ledger.kv_write(app, StorageScope::Global, b"n2", TealValue::Uint(1)),
        Err(StorageError::SchemaFull),
        "the single uint slot is already taken"
    );
    for i in 0..61u32 {
        ledger
            .kv_write(
                app,
                StorageScope::Global,
                format!("p{i:02}").as_bytes(),
                TealValue::Bytes(vec![0xAB]),
            )
            .unwrap_or_else(|e| panic!("global pair {} must fit: {e}", i + 4));
    }
    assert_eq!(
        ledger.kv_write(app, StorageScope::Global, b"p61", TealValue::Bytes(vec![1])),
        Err(StorageError::SchemaFull),
        "the 65th global pair must be refused"
    );

    // Past 64 global pairs a construction spills into local stores: a
    // 31-event workflow stores the last executor on storage account 0.
    let spill = GraphSpec {
        events: (1..=31u16)
            .map(|id| EventDecl {
                id,
                executor,
                included: true,
                pending: false,
                executed: false,
                name: None,
            })
            .collect(),
        relations: Vec::new(),
    };
    let mut ledger = Ledger::new();
    let report = construct(
        &mut ledger,
        &spill,
        DEFAULT_CREATOR,
        &program,
        ConstructOptions::default(),
    )
    .unwrap();
    assert_eq!(storage_accounts_needed(31), 1);
    assert_eq!(report.storage_accounts.len(), 1);
    assert_eq!(
        ledger.kv_read(report.app_id, StorageScope::Global, b"30"),
        Some(&TealValue::Bytes(executor.as_bytes().to_vec())),
        "event 30's executor still fits globally"
    );
    assert_eq!(
        ledger.kv_read(report.app_id, StorageScope::Global, b"31"),
        None,
        "event 31's executor must not be global"
    );
    assert_eq!(
        ledger.kv_read(
            report.app_id,
            StorageScope::Local { account: 0 },
            b"31"
        ),
        Some(&TealValue::Bytes(executor.as_bytes().to_vec())),
        "event 31's executor lives on storage account 0"
    );

    // A rejected call rolls back completely: the saved ledger differs
    // only in the collected fee and the sender's balance.
    let text = std::fs::read_to_string(corpus_dir().join("mortgage.dcr")).expect("corpus graph");
    let spec = GraphSpec::parse(&text).expect("corpus graph parses");
    let sender_hex = spec.events[5].executor.to_hex();
    let mut ledger = Ledger::new();
    let report = construct(
        &mut ledger,
        &spec,
        DEFAULT_CREATOR,
        &program,
        ConstructOptions::default(),
    )
    .unwrap();
    let before = dcrvm::ledgerfile::save(&ledger);
    let verdict = execute_event(&mut ledger, &program, report.app_id, 6, None).unwrap();
    assert!(!verdict.approved, "event 6 is not enabled yet");
    let after = dcrvm::ledgerfile::save(&ledger);
    let changed: Vec<(&str, &str)> = before
        .lines()
        .zip(after.lines())
        .filter(|(b, a)| b != a)
        .collect();
    assert_eq!(before.lines().count(), after.lines().count());
    assert_eq!(
        changed.len(),
        2,
        "only the fee lines may change: {changed:?}"
    );
    assert!(changed.iter().any(|(b, _)| b.contains("collected")));
    assert!(changed.iter().any(|(b, _)| b.contains(&sender_hex)));

    println!(
        "PASS: resource limits enforced — 62nd event refused (61 intact), 129-byte pair \
         refused, 65th global pair refused, pair 65 spills to a storage account, and a \
         rejected call changes nothing but its fee"
    );
}

#[test]
fn packed_state_roundtrips() {
    // Exhaustive: every marking of every graph size up to three events.
    let mut exhaustive = 0u64;
    for n in 0..=3u8 {
        for executed_bits in 0..1u64 << n {
            for pending_bits in 0..1u64 << n {
                for included_bits in 0..1u64 << n {
                    let from_bits = |bits: u64| -> EventSet {
                        (0..n).filter(|i| bits >> i & 1 == 1).map(|i| ev(i + 1)).collect()
                    };
                    let marking = Marking::new(
                        from_bits(executed_bits),
                        from_bits(pending_bits),
                        from_bits(included_bits),
                    );
                    let packed = encode_marking(&marking, n);
                    assert_eq!(decode_marking(&packed.bytes, n), Ok(marking));
                    exhaustive += 1;
                }
            }
        }
    }

    // Randomised: ten thousand markings across all sizes.
    let mut rng = ChaCha8Rng::seed_from_u64(0xB175);
    let mask = |bits: u64, n: u8| -> EventSet {
        (0..n).filter(|i| bits >> i & 1 == 1).map(|i| ev(i + 1)).collect()
    };
    for _ in 0..10_000 {
        let n: u8 = rng.gen_range(0..=61);
        let marking = Marking::new(
            mask(rng.gen(), n),
            mask(rng.gen(), n),
            mask(rng.gen(), n),
        );
        let packed = encode_marking(&marking, n);
        assert_eq!(packed.bytes.len(), dcrvm::encoding::marking_len(n));
        assert_eq!(decode_marking(&packed.bytes, n), Ok(marking));
    }

    // A thousand random graphs: links rows and whole state images.
    let densities = [0.05, 0.3, 0.9];
    for seed in 0..1_000u64 {
        let n = (seed % 61) as u8 + 1;
        let density = densities[(seed % 3) as usize];
        let graph = DcrGraph::random(seed, n, density).unwrap();

        let rows: Vec<Vec<u8>> = graph
            .events()
            .map(|e| encode_links(&graph, e).bytes)
            .collect();
        assert!(rows.iter().all(|r| r.len() == links_len(n)));
        assert_eq!(decode_links(&rows, n), Ok(graph.relation_set().clone()));

        let image = GraphStateImage::from_graph(&graph);
        let back = image.to_graph().unwrap();
        assert_eq!(back.marking(), graph.marking());
        assert_eq!(back.relation_set(), graph.relation_set());
        assert_eq!(back.executors(), graph.executors());
        assert_eq!(back.creator(), graph.creator());
    }

    println!(
        "PASS: packed encoding round-trips — {exhaustive} exhaustive markings (n ≤ 3), \
         10000 random markings, 1000 random graphs' rows and images"
    );
}
