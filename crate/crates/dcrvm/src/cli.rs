//! Command-line interface. Chain state persists between invocations in a
//! ledger file (`--ledger`, default `dcrvm.ledger`), so a workflow can be
//! created by one invocation and executed by later ones.
//!
//! Exit codes: 0 on success, 1 on a domain error (rejected transaction,
//! failed scenario step, fuzz counterexample, bad input file), 2 on a
//! usage error (unknown flags, malformed values).

use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use serde_json::{json, Value};

use crate::addr::AccountAddress;
use crate::avm::{AppId, Ledger};
use crate::contract::{snapshot_graph, InjectedFault, WorkflowProgram};
use crate::cost::{
    comparison_report, creation_fees, escrow_curve, escrow_overall, execution_fee, format_algos,
    format_eth, EthBaseline, UsdRate,
};
use crate::dcr::{DcrGraph, MAX_EVENTS};
use crate::driver::{construct, execute_event, ConstructOptions, DEFAULT_CREATOR};
use crate::fuzz::{exhaustive_small, run_fuzz, FuzzConfig};
use crate::graphfile::GraphSpec;
use crate::ledgerfile;
use crate::scenario::{replay, Scenario};

#[derive(Parser, Debug)]
#[command(
    name = "dcrvm",
    version,
    about = "Workflow graphs as smart contracts on a simulated chain"
)]
pub struct Cli {
    /// Ledger file holding chain state between invocations.
    #[arg(long, global = true, default_value = "dcrvm.ledger")]
    pub ledger: PathBuf,
    /// Emit machine-readable JSON instead of text.
    #[arg(long, global = true)]
    pub json: bool,
    #[command(subcommand)]
    pub command: Command,
}

fn parse_rate(s: &str) -> Result<UsdRate, String> {
    UsdRate::parse(s).map_err(|e| e.to_string())
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Construct the workflow in a graph file on chain.
    Create {
        /// Graph file (see the corpus for the format).
        graph: PathBuf,
    },
    /// Execute one event of a deployed workflow.
    Exec {
        /// Event id (1-based).
        event: u64,
        /// Application id (defaults to the newest one).
        #[arg(long)]
        app: Option<AppId>,
        /// Sender address, 64 hex chars (defaults to the event's executor).
        #[arg(long)]
        sender: Option<String>,
    },
    /// Show a deployed workflow's decoded state.
    State {
        #[arg(long)]
        app: Option<AppId>,
    },
    /// Report whether a deployed workflow is in an accepting state.
    Accepting {
        #[arg(long)]
        app: Option<AppId>,
    },
    /// Quote deployment and execution costs, with optional comparison
    /// against a gas-priced baseline chain.
    Cost {
        /// Tracked events.
        #[arg(long, default_value_t = 5)]
        events: u64,
        /// Relations between events.
        #[arg(long, default_value_t = 11)]
        relations: u64,
        /// Status updates needed to establish the initial marking.
        #[arg(long, default_value_t = 3)]
        status_updates: u64,
        /// USD per algo, e.g. 1.36.
        #[arg(long, value_parser = parse_rate, default_value = "1.36")]
        rate: UsdRate,
        /// Add the baseline-chain comparison table.
        #[arg(long)]
        compare: bool,
        /// Add the escrow-by-graph-size table.
        #[arg(long)]
        curve: bool,
    },
    /// Differential-test the contract against the reference semantics.
    Fuzz {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 200)]
        iterations: u64,
        #[arg(long, default_value_t = MAX_EVENTS, value_parser = clap::value_parser!(u8).range(1..=MAX_EVENTS as i64))]
        max_events: u8,
        #[arg(long, default_value_t = 100)]
        max_trace: usize,
        /// Also enumerate every tiny graph exhaustively.
        #[arg(long)]
        exhaustive: bool,
        /// Inject a known contract defect; the run must then fail.
        #[arg(long, value_parser = ["skip-inclusion-check"])]
        fault: Option<String>,
    },
    /// Replay a scenario file against a fresh chain.
    Replay {
        /// Scenario file of create/exec/assert steps.
        scenario: PathBuf,
    },
}

/// A command's result in both renderings.
#[derive(Debug)]
pub struct CommandOutput {
    pub text: String,
    pub json: Value,
}

/// A domain error: reported on stderr (or as JSON) with exit code 1.
#[derive(Debug)]
pub struct CliError {
    pub message: String,
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.message)
    }
}

fn fail(message: impl Into<String>) -> CliError {
    CliError {
        message: message.into(),
    }
}

impl<E: std::error::Error> From<E> for CliError {
    fn from(e: E) -> Self {
        fail(e.to_string())
    }
}

fn load_ledger(path: &Path) -> Result<Ledger, CliError> {
    ledgerfile::load_or_new(path).map_err(|e| fail(format!("{}: {e}", path.display())))
}

fn pick_app(ledger: &Ledger, app: Option<AppId>) -> Result<AppId, CliError> {
    match app {
        Some(id) if ledger.app(id).is_some() => Ok(id),
        Some(id) => Err(fail(format!("no application with id {id}"))),
        None => ledger
            .latest_app()
            .ok_or_else(|| fail("no application on this ledger yet; run create first")),
    }
}

fn render_marking_row(graph: &DcrGraph, out: &mut String) {
    out.push_str("event  executor      included  pending  executed  enabled\n");
    for e in graph.events() {
        let m = graph.marking();
        let executor = graph.executor(e).expect("event in range").to_hex();
        out.push_str(&format!(
            "{:>5}  {}…  {:<8}  {:<7}  {:<8}  {}\n",
            e.get(),
            &executor[..12],
            if m.included.contains(e) { "yes" } else { "no" },
            if m.pending.contains(e) { "yes" } else { "no" },
            if m.executed.contains(e) { "yes" } else { "no" },
            if graph.enabled(e).unwrap_or(false) {
                "yes"
            } else {
                "no"
            },
        ));
    }
}

fn graph_json(graph: &DcrGraph) -> Value {
    let m = graph.marking();
    json!({
        "event_count": graph.event_count(),
        "accepting": graph.is_accepting(),
        "events": graph.events().map(|e| json!({
            "id": e.get(),
            "executor": graph.executor(e).expect("event in range").to_hex(),
            "included": m.included.contains(e),
            "pending": m.pending.contains(e),
            "executed": m.executed.contains(e),
            "enabled": graph.enabled(e).unwrap_or(false),
        })).collect::<Vec<_>>(),
        "relations": graph.relations().map(|r| json!({
            "source": r.source.get(),
            "kind": r.kind.name(),
            "target": r.target.get(),
        })).collect::<Vec<_>>(),
    })
}

fn cmd_create(ledger_path: &Path, graph_path: &Path) -> Result<CommandOutput, CliError> {
    let text = std::fs::read_to_string(graph_path)
        .map_err(|e| fail(format!("{}: {e}", graph_path.display())))?;
    let spec = GraphSpec::parse(&text)
        .map_err(|e| fail(format!("{}: {e}", graph_path.display())))?;
    let mut ledger = load_ledger(ledger_path)?;
    let program = WorkflowProgram::new();
    let report = construct(
        &mut ledger,
        &spec,
        DEFAULT_CREATOR,
        &program,
        ConstructOptions::default(),
    )?;
    ledgerfile::save_to(ledger_path, &ledger)?;
    let text = format!(
        "created app {} from {}\n\
         construction: {} txns ({} events, {} relations), {} opt-ins\n\
         fees paid: {} microalgos; escrow locked: {} microalgos ({} algos)\n\
         peak operations in one call: {} of {}\n",
        report.app_id,
        graph_path.display(),
        report.construction_txns,
        spec.event_count(),
        spec.relations.len(),
        report.optin_txns,
        report.total_fees,
        report.escrow_locked,
        format_algos(report.escrow_locked),
        report.max_ops,
        crate::avm::OP_BUDGET,
    );
    let json = json!({
        "app": report.app_id,
        "construction_txns": report.construction_txns,
        "optin_txns": report.optin_txns,
        "total_fees": report.total_fees,
        "escrow_locked": report.escrow_locked,
        "max_ops": report.max_ops,
        "storage_accounts": report.storage_accounts.iter().map(|a| a.to_hex()).collect::<Vec<_>>(),
    });
    Ok(CommandOutput { text, json })
}

fn cmd_exec(
    ledger_path: &Path,
    app: Option<AppId>,
    event: u64,
    sender: Option<String>,
) -> Result<CommandOutput, CliError> {
    let mut ledger = load_ledger(ledger_path)?;
    let app_id = pick_app(&ledger, app)?;
    let sender = sender
        .map(|s| AccountAddress::from_hex(&s).map_err(|e| fail(format!("bad sender: {e}"))))
        .transpose()?;
    let program = WorkflowProgram::new();
    let result = execute_event(&mut ledger, &program, app_id, event, sender)?;
    ledgerfile::save_to(ledger_path, &ledger)?;
    let graph = snapshot_graph(&ledger, app_id)?;
    let json = json!({
        "app": app_id,
        "event": event,
        "approved": result.approved,
        "reject": result.reject.as_ref().map(|r| r.code()),
        "ops_used": result.ops_used,
        "fee_paid": result.fee_paid,
        "accepting": graph.is_accepting(),
    });
    match &result.reject {
        None => Ok(CommandOutput {
            text: format!(
                "executed event {event} on app {app_id} ({} ops, {} microalgo fee)\naccepting: {}\n",
                result.ops_used,
                result.fee_paid,
                if graph.is_accepting() { "yes" } else { "no" }
            ),
            json,
        }),
        Some(reject) => Err(fail(format!(
            "event {event} rejected: {reject} (fee of {} microalgos still charged)",
            result.fee_paid
        ))),
    }
}

fn cmd_state(ledger_path: &Path, app: Option<AppId>) -> Result<CommandOutput, CliError> {
    let ledger = load_ledger(ledger_path)?;
    let app_id = pick_app(&ledger, app)?;
    let graph = snapshot_graph(&ledger, app_id)?;
    let escrow = ledger.app_escrow(app_id).expect("app exists");
    let mut text = format!(
        "app {app_id}: {} events, {} relations, escrow {} microalgos\naccepting: {}\n",
        graph.event_count(),
        graph.relation_count(),
        escrow,
        if graph.is_accepting() { "yes" } else { "no" }
    );
    render_marking_row(&graph, &mut text);
    if graph.relation_count() > 0 {
        text.push_str("relations:\n");
        for r in graph.relations() {
            text.push_str(&format!("  {} {} {}\n", r.source, r.kind.name(), r.target));
        }
    }
    let mut json = graph_json(&graph);
    json["app"] = json!(app_id);
    json["escrow"] = json!(escrow);
    Ok(CommandOutput { text, json })
}

fn cmd_accepting(ledger_path: &Path, app: Option<AppId>) -> Result<CommandOutput, CliError> {
    let ledger = load_ledger(ledger_path)?;
    let app_id = pick_app(&ledger, app)?;
    let graph = snapshot_graph(&ledger, app_id)?;
    let accepting = graph.is_accepting();
    let pending: Vec<u8> = graph
        .marking()
        .pending
        .intersection(graph.marking().included)
        .iter()
        .map(|e| e.get())
        .collect();
    let text = if accepting {
        format!("app {app_id} is accepting\n")
    } else {
        format!(
            "app {app_id} is not accepting: included pending events {pending:?}\n"
        )
    };
    Ok(CommandOutput {
        text,
        json: json!({ "app": app_id, "accepting": accepting, "blocking": pending }),
    })
}

fn cmd_cost(
    events: u64,
    relations: u64,
    status_updates: u64,
    rate: UsdRate,
    compare: bool,
    curve: bool,
) -> Result<CommandOutput, CliError> {
    let creation = creation_fees(events, relations, status_updates, rate)?;
    let escrow = escrow_overall(events)?;
    let execution = execution_fee(rate);
    let escrow_split = if escrow.locals.is_empty() {
        "all on the creator".to_string()
    } else {
        format!(
            "creator {}, {} storage accounts locking {}",
            format_algos(escrow.global),
            escrow.locals.len(),
            format_algos(escrow.locals.iter().sum::<u64>())
        )
    };
    let mut text = format!(
        "workflow: {events} events, {relations} relations, {status_updates} status updates (rate: {rate} USD/algo)\n\
         creation fees: {} txns = {} algos (${})\n\
         escrow locked: {} algos ({escrow_split})\n\
         creation total: {} algos (${})\n\
         execution: {} algos per event (${})\n",
        creation.txns,
        format_algos(creation.microalgos),
        creation.usd,
        format_algos(escrow.total),
        format_algos(creation.microalgos + escrow.total),
        crate::cost::Usd::from_microalgos(creation.microalgos + escrow.total, rate),
        format_algos(execution.microalgos),
        execution.usd,
    );
    let mut json = json!({
        "events": events,
        "relations": relations,
        "status_updates": status_updates,
        "rate_micro_usd": rate.micro(),
        "creation": {
            "txns": creation.txns,
            "microalgos": creation.microalgos,
            "usd": creation.usd.to_string(),
        },
        "escrow": {
            "global": escrow.global,
            "locals": escrow.locals,
            "total": escrow.total,
        },
        "execution": {
            "microalgos": execution.microalgos,
            "usd": execution.usd.to_string(),
        },
    });

    if compare {
        let report = comparison_report(events, relations, status_updates, rate, EthBaseline::default())?;
        text.push_str("\ncomparison against the gas-priced baseline:\n");
        let mut rows_json = Vec::new();
        for row in &report.rows {
            text.push_str(&format!(
                "  {:<22} {} algos (${}) vs {} gas = {} ETH (${})  advantage x{}\n",
                row.label,
                format_algos(row.algo_microalgos),
                row.algo_usd,
                row.eth_gas,
                format_eth(row.eth_gwei),
                row.eth_usd,
                row.advantage,
            ));
            rows_json.push(json!({
                "label": row.label,
                "algo_microalgos": row.algo_microalgos,
                "algo_usd": row.algo_usd.to_string(),
                "eth_gas": row.eth_gas,
                "eth": format_eth(row.eth_gwei),
                "eth_usd": row.eth_usd.to_string(),
                "advantage": row.advantage,
            }));
        }
        json["comparison"] = Value::Array(rows_json);
    }
    if curve {
        text.push_str("\nescrow by graph size:\n  events  microalgos\n");
        let curve_quotes = escrow_curve();
        for quote in &curve_quotes {
            text.push_str(&format!("  {:>6}  {:>10}\n", quote.event_count, quote.total));
        }
        json["curve"] = Value::Array(
            curve_quotes
                .iter()
                .map(|q| json!({"events": q.event_count, "total": q.total}))
                .collect(),
        );
    }
    Ok(CommandOutput { text, json })
}

fn cmd_fuzz(
    seed: u64,
    iterations: u64,
    max_events: u8,
    max_trace: usize,
    exhaustive: bool,
    fault: Option<String>,
) -> Result<CommandOutput, CliError> {
    let program = match fault.as_deref() {
        None => WorkflowProgram::new(),
        Some("skip-inclusion-check") => {
            WorkflowProgram::with_fault(InjectedFault::SkipInclusionCheck)
        }
        Some(other) => return Err(fail(format!("unknown fault {other:?}"))),
    };
    let config = FuzzConfig {
        seed,
        iterations,
        max_events,
        densities: vec![0.05, 0.15, 0.5],
        max_trace,
    };
    let report = run_fuzz(&config, &program);
    let mut text = format!(
        "random phase: {} iterations, {} graphs, {} steps ({} approved, {} rejected)\n",
        report.iterations, report.graphs, report.steps, report.approvals, report.rejections
    );
    let mut json = json!({
        "seed": seed,
        "iterations": report.iterations,
        "graphs": report.graphs,
        "steps": report.steps,
        "approvals": report.approvals,
        "rejections": report.rejections,
    });
    if let Some(counterexample) = &report.counterexample {
        return Err(fail(format!(
            "differential mismatch found\n{counterexample}"
        )));
    }
    if exhaustive {
        let ex = exhaustive_small(&program, 3, 4, 4);
        text.push_str(&format!(
            "exhaustive phase: {} graphs, {} markings, {} verdicts compared\n",
            ex.graphs, ex.markings_checked, ex.verdicts_compared
        ));
        json["exhaustive"] = json!({
            "graphs": ex.graphs,
            "markings": ex.markings_checked,
            "verdicts": ex.verdicts_compared,
        });
        if let Some(counterexample) = &ex.counterexample {
            return Err(fail(format!(
                "differential mismatch found in the exhaustive phase\n{counterexample}"
            )));
        }
    }
    text.push_str("no divergence\n");
    json["verdict"] = json!("agreement");
    Ok(CommandOutput { text, json })
}

fn cmd_replay(path: &Path) -> Result<CommandOutput, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| fail(format!("{}: {e}", path.display())))?;
    let scenario =
        Scenario::parse(&text).map_err(|e| fail(format!("{}: {e}", path.display())))?;
    let base = path.parent().unwrap_or_else(|| Path::new("."));
    let report = replay(&scenario, base)?;
    let mut text = String::new();
    for line in &report.lines {
        text.push_str(line);
        text.push('\n');
    }
    text.push_str(&format!("scenario ok ({} steps)\n", report.lines.len()));
    Ok(CommandOutput {
        text,
        json: json!({
            "steps": report.lines.len(),
            "log": report.lines,
            "app": report.app_id,
        }),
    })
}

/// Executes a parsed command line.
pub fn run(cli: Cli) -> Result<CommandOutput, CliError> {
    match cli.command {
        Command::Create { graph } => cmd_create(&cli.ledger, &graph),
        Command::Exec { event, app, sender } => cmd_exec(&cli.ledger, app, event, sender),
        Command::State { app } => cmd_state(&cli.ledger, app),
        Command::Accepting { app } => cmd_accepting(&cli.ledger, app),
        Command::Cost {
            events,
            relations,
            status_updates,
            rate,
            compare,
            curve,
        } => cmd_cost(events, relations, status_updates, rate, compare, curve),
        Command::Fuzz {
            seed,
            iterations,
            max_events,
            max_trace,
            exhaustive,
            fault,
        } => cmd_fuzz(seed, iterations, max_events, max_trace, exhaustive, fault),
        Command::Replay { scenario } => cmd_replay(&scenario),
    }
}

/// Full CLI entry point: parses nothing, prints the outcome, returns the
/// process exit code.
pub fn main_run(cli: Cli) -> i32 {
    let as_json = cli.json;
    match run(cli) {
        Ok(output) => {
            if as_json {
                println!(
                    "{}",
                    serde_json::to_string_pretty(&output.json).expect("valid json")
                );
            } else {
                print!("{}", output.text);
            }
            0
        }
        Err(e) => {
            if as_json {
                println!("{}", json!({ "error": e.message }));
            } else {
                eprintln!("error: {e}");
            }
            1
        }
    }
}
