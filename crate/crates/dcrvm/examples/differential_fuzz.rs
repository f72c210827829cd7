//! Runs the differential harness: random workflows are constructed on
//! chain and walked step by step, with the contract's verdicts and state
//! compared against the reference semantics after every transaction.
//! Then demonstrates the harness catching a deliberately broken contract
//! and shrinking the failure to a minimal witness.
//!
//! Run with:
//!
//! ```sh
//! cargo run --example differential_fuzz
//! ```

use dcrvm::contract::{InjectedFault, WorkflowProgram};
use dcrvm::fuzz::{exhaustive_small, run_fuzz, FuzzConfig};

fn main() {
    // --- the honest contract agrees with the reference --------------------
    let honest = WorkflowProgram::new();
    let config = FuzzConfig {
        seed: 42,
        iterations: 150,
        max_events: 12,
        densities: vec![0.05, 0.15, 0.5],
        max_trace: 40,
    };
    println!(
        "fuzzing the honest contract: {} random graphs (1..={} events), \
         traces mixing enabled steps with disabled probes...",
        config.iterations, config.max_events
    );
    let report = run_fuzz(&config, &honest);
    match &report.counterexample {
        None => println!(
            "    agreement on all {} steps ({} approvals, {} rejections)\n",
            report.steps, report.approvals, report.rejections
        ),
        Some(cex) => {
            println!("    DIVERGENCE FOUND:\n{cex}");
            std::process::exit(1);
        }
    }

    // --- and exhaustively, for every tiny graph ----------------------------
    println!("exhaustively checking every 2-event graph with up to 3 relations...");
    let exhaustive = exhaustive_small(&honest, 2, 3, 4);
    match &exhaustive.counterexample {
        None => println!(
            "    {} graphs, {} reachable markings, {} verdicts — all agree\n",
            exhaustive.graphs, exhaustive.markings_checked, exhaustive.verdicts_compared
        ),
        Some(cex) => {
            println!("    DIVERGENCE FOUND:\n{cex}");
            std::process::exit(1);
        }
    }

    // --- a broken contract is caught and the witness shrunk ----------------
    println!("now a sabotaged contract that skips the inclusion check on execute:");
    let faulty = WorkflowProgram::with_fault(InjectedFault::SkipInclusionCheck);
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
    match &sting.counterexample {
        Some(cex) => {
            println!("    caught, and shrunk to a minimal witness:\n");
            for line in cex.to_string().lines() {
                println!("    {line}");
            }
        }
        None => {
            println!("    the harness failed to catch the fault");
            std::process::exit(1);
        }
    }
}
