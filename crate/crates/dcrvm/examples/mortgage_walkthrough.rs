//! Constructs the bundled mortgage workflow on a simulated chain and
//! drives it to acceptance, printing the on-chain state after each step.
//!
//! Run with:
//!
//! ```sh
//! cargo run --example mortgage_walkthrough
//! ```

use std::path::Path;

use dcrvm::avm::Ledger;
use dcrvm::contract::{snapshot_graph, WorkflowProgram};
use dcrvm::driver::{construct, execute_event, ConstructOptions, DEFAULT_CREATOR};
use dcrvm::graphfile::GraphSpec;

fn print_state(ledger: &Ledger, app: dcrvm::avm::AppId, spec: &GraphSpec) {
    let graph = snapshot_graph(ledger, app).expect("readable state");
    let marking = graph.marking();
    for decl in &spec.events {
        let event = dcrvm::dcr::EventId::new(decl.id as u8).unwrap();
        let name = decl.name.as_deref().unwrap_or("(unnamed)");
        let flag = |on: bool, label: &str| if on { label } else { "-" }.to_string();
        println!(
            "    {:>2} {:<22} {:>8} {:>7} {:>8}   {}",
            decl.id,
            name,
            flag(marking.included.contains(event), "included"),
            flag(marking.pending.contains(event), "pending"),
            flag(marking.executed.contains(event), "executed"),
            if graph.enabled(event).unwrap_or(false) {
                "<- enabled"
            } else {
                ""
            },
        );
    }
    println!(
        "    workflow is {}\n",
        if graph.is_accepting() {
            "ACCEPTING (no included event is pending)"
        } else {
            "not accepting"
        }
    );
}

fn main() {
    let corpus = Path::new(env!("CARGO_MANIFEST_DIR")).join("corpus/mortgage.dcr");
    let text = std::fs::read_to_string(&corpus).expect("corpus graph");
    let spec = GraphSpec::parse(&text).expect("valid graph file");

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

    println!(
        "constructed app {} from {}:",
        app,
        corpus.file_name().unwrap().to_string_lossy()
    );
    println!(
        "    {} application calls + {} opt-ins, {} microalgos in fees, \
         {} microalgos locked as escrow, costliest call {} ops\n",
        report.construction_txns,
        report.optin_txns,
        report.total_fees,
        report.escrow_locked,
        report.max_ops
    );

    println!("initial state:");
    print_state(&ledger, app, &spec);

    // The assessment (event 6) is blocked until its conditions have run.
    let verdict = execute_event(&mut ledger, &program, app, 6, None).unwrap();
    println!(
        "execute 6 before its conditions -> {}\n",
        match &verdict.reject {
            Some(reject) => format!("rejected ({reject})"),
            None => "approved".to_string(),
        }
    );

    // Fire the statistical appraisal first: it excludes the on-site one.
    for event in [3u64, 1, 2, 6] {
        let verdict = execute_event(&mut ledger, &program, app, event, None).unwrap();
        assert!(verdict.approved);
        println!(
            "execute {event} -> approved ({} ops, {} microalgos fee)",
            verdict.ops_used, verdict.fee_paid
        );
        print_state(&ledger, app, &spec);
    }

    // A late budget revision re-opens the assessment.
    let verdict = execute_event(&mut ledger, &program, app, 2, None).unwrap();
    assert!(verdict.approved);
    println!("execute 2 again (revised budget) -> approved");
    print_state(&ledger, app, &spec);
}
