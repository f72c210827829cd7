//! Differential testing: the on-chain contract against the reference
//! semantics.
//!
//! The random phase generates graphs across sizes and relation densities,
//! constructs each on a fresh simulated chain, and replays a random trace
//! that mixes enabled events with deliberate probes of arbitrary
//! (possibly disabled) events. At every step both implementations must
//! agree on the verdict, and whenever the chain approves, its decoded
//! state must equal the reference successor. Any divergence is shrunk —
//! trace steps first, then relations — before it is reported.
//!
//! The exhaustive phase enumerates every small graph (all relation
//! subsets up to a size bound) and walks every reachable marking to a
//! depth bound, checking verdict parity for every event at every node.

use std::collections::HashSet;

use itertools::Itertools;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

use crate::addr::AccountAddress;
use crate::avm::Ledger;
use crate::contract::{execute_call, snapshot_graph, WorkflowProgram};
use crate::dcr::{DcrGraph, EventId, Marking, Relation, RelationKind, MAX_EVENTS};
use crate::driver::{construct, ConstructOptions};
use crate::graphfile::GraphSpec;

/// Parameters of the random phase.
#[derive(Clone, Debug)]
pub struct FuzzConfig {
    pub seed: u64,
    pub iterations: u64,
    /// Event counts are drawn uniformly from `1..=max_events`.
    pub max_events: u8,
    /// Relation densities, applied round-robin across iterations.
    pub densities: Vec<f64>,
    /// Maximum trace length per iteration.
    pub max_trace: usize,
}

impl Default for FuzzConfig {
    fn default() -> Self {
        FuzzConfig {
            seed: 0,
            iterations: 200,
            max_events: MAX_EVENTS,
            densities: vec![0.05, 0.15, 0.5],
            max_trace: 100,
        }
    }
}

/// How the two implementations disagreed.
#[derive(Clone, PartialEq, Eq, Debug)]
pub enum Divergence {
    /// Constructed on-chain state does not decode to the input graph.
    Image { detail: String },
    /// The chain and the reference disagreed on whether a step may fire.
    Verdict {
        step: usize,
        event: EventId,
        chain: String,
        reference: bool,
    },
    /// Both approved a step but the successor states differ.
    Marking {
        step: usize,
        event: EventId,
        detail: String,
    },
}

impl std::fmt::Display for Divergence {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Divergence::Image { detail } => {
                write!(f, "constructed state diverges: {detail}")
            }
            Divergence::Verdict {
                step,
                event,
                chain,
                reference,
            } => write!(
                f,
                "step {step}: chain {chain} executing event {event}, reference says {}",
                if *reference { "enabled" } else { "not enabled" }
            ),
            Divergence::Marking {
                step,
                event,
                detail,
            } => write!(
                f,
                "step {step}: states diverge after executing event {event}: {detail}"
            ),
        }
    }
}

/// A shrunk failing input.
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct Counterexample {
    /// Iteration that found it (random phase) or `None` (exhaustive).
    pub iteration: Option<u64>,
    pub graph: DcrGraph,
    pub trace: Vec<EventId>,
    pub divergence: Divergence,
}

impl std::fmt::Display for Counterexample {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        if let Some(iteration) = self.iteration {
            writeln!(f, "found at iteration {iteration}, shrunk to:")?;
        }
        writeln!(f, "{}", self.divergence)?;
        writeln!(
            f,
            "trace: [{}]",
            self.trace.iter().map(|e| e.to_string()).join(", ")
        )?;
        write!(f, "{}", GraphSpec::from_graph(&self.graph).print())
    }
}

/// Totals from a fuzz run. `counterexample` is `None` on agreement.
#[derive(Debug)]
pub struct FuzzReport {
    pub iterations: u64,
    pub graphs: u64,
    pub steps: u64,
    pub approvals: u64,
    pub rejections: u64,
    pub counterexample: Option<Counterexample>,
}

/// Constructs `graph` on a fresh chain and replays `trace` on both
/// implementations, returning the first divergence. Rejected steps leave
/// both sides unchanged, so a trace replays deterministically whatever
/// mix of enabled and disabled events it contains.
pub fn check_graph_trace(
    program: &WorkflowProgram,
    graph: &DcrGraph,
    trace: &[EventId],
) -> Option<Divergence> {
    let mut stats = StepStats::default();
    check_with_stats(program, graph, trace, &mut stats)
}

#[derive(Default)]
struct StepStats {
    steps: u64,
    approvals: u64,
    rejections: u64,
}

fn check_with_stats(
    program: &WorkflowProgram,
    graph: &DcrGraph,
    trace: &[EventId],
    stats: &mut StepStats,
) -> Option<Divergence> {
    let mut ledger = Ledger::new();
    let spec = GraphSpec::from_graph(graph);
    let report = match construct(
        &mut ledger,
        &spec,
        graph.creator(),
        program,
        ConstructOptions::default(),
    ) {
        Ok(report) => report,
        Err(e) => {
            return Some(Divergence::Image {
                detail: format!("construction failed: {e}"),
            })
        }
    };
    let app_id = report.app_id;
    match snapshot_graph(&ledger, app_id) {
        Ok(image) if &image == graph => {}
        Ok(image) => {
            return Some(Divergence::Image {
                detail: format!(
                    "decoded marking {:?} != reference {:?}",
                    image.marking(),
                    graph.marking()
                ),
            })
        }
        Err(e) => {
            return Some(Divergence::Image {
                detail: format!("state does not decode: {e}"),
            })
        }
    }
    let storage = report.storage_accounts.clone();

    let mut reference = graph.clone();
    for (step, &event) in trace.iter().enumerate() {
        stats.steps += 1;
        let sender = reference.executor(event).expect("trace event in range");
        let call = execute_call(sender, app_id, event, &storage);
        let result = match ledger.app_call(program, &call) {
            Ok(result) => result,
            Err(e) => {
                return Some(Divergence::Verdict {
                    step,
                    event,
                    chain: format!("errored ({e})"),
                    reference: reference.enabled(event).unwrap_or(false),
                })
            }
        };
        let ref_enabled = reference.enabled(event).expect("trace event in range");
        match (&result.reject, ref_enabled) {
            (None, true) => {
                stats.approvals += 1;
                reference = reference.execute(event).expect("enabled event fires");
                match snapshot_graph(&ledger, app_id) {
                    Ok(image) if image == reference => {}
                    Ok(image) => {
                        return Some(Divergence::Marking {
                            step,
                            event,
                            detail: format!(
                                "chain {:?} != reference {:?}",
                                image.marking(),
                                reference.marking()
                            ),
                        })
                    }
                    Err(e) => {
                        return Some(Divergence::Marking {
                            step,
                            event,
                            detail: format!("state does not decode: {e}"),
                        })
                    }
                }
            }
            (Some(reject), false) if reject.code() == crate::contract::codes::NOT_ENABLED => {
                stats.rejections += 1;
            }
            (reject, reference_enabled) => {
                return Some(Divergence::Verdict {
                    step,
                    event,
                    chain: match reject {
                        None => "approved".to_string(),
                        Some(r) => format!("rejected ({})", r.code()),
                    },
                    reference: reference_enabled,
                });
            }
        }
    }
    None
}

/// Greedy list minimizer: repeatedly removes chunks (halving the chunk
/// size down to single elements) while `still_fails` keeps returning
/// true, until no single removal reproduces the failure.
fn minimize<T: Clone>(mut items: Vec<T>, mut still_fails: impl FnMut(&[T]) -> bool) -> Vec<T> {
    let mut chunk = items.len().div_ceil(2).max(1);
    loop {
        let mut i = 0;
        while i < items.len() {
            let mut candidate = items.clone();
            candidate.drain(i..(i + chunk).min(items.len()));
            if still_fails(&candidate) {
                items = candidate;
            } else {
                i += chunk;
            }
        }
        if chunk == 1 {
            return items;
        }
        chunk = (chunk / 2).max(1);
    }
}

fn without_relation(graph: &DcrGraph, keep: &[Relation]) -> DcrGraph {
    DcrGraph::new(
        graph.event_count(),
        keep,
        *graph.marking(),
        graph.executors(),
        graph.creator(),
    )
    .expect("subset of a valid graph is valid")
}

/// Shrinks a failing (graph, trace) pair: drops trace steps, then
/// relations, then trace steps again. Any divergence (not necessarily
/// the original one) counts as still failing.
pub fn shrink(
    program: &WorkflowProgram,
    graph: &DcrGraph,
    trace: Vec<EventId>,
) -> (DcrGraph, Vec<EventId>, Divergence) {
    let trace = minimize(trace, |candidate| {
        check_graph_trace(program, graph, candidate).is_some()
    });
    let relations: Vec<Relation> = graph.relations().copied().collect();
    let relations = minimize(relations, |candidate| {
        check_graph_trace(program, &without_relation(graph, candidate), &trace).is_some()
    });
    let graph = without_relation(graph, &relations);
    let trace = minimize(trace, |candidate| {
        check_graph_trace(program, &graph, candidate).is_some()
    });
    let divergence =
        check_graph_trace(program, &graph, &trace).expect("shrunk input still fails");
    (graph, trace, divergence)
}

/// Runs the random phase. Stops at the first divergence and reports it
/// shrunk; otherwise reports the totals it verified.
pub fn run_fuzz(config: &FuzzConfig, program: &WorkflowProgram) -> FuzzReport {
    assert!(!config.densities.is_empty(), "need at least one density");
    assert!(config.max_events >= 1 && config.max_events <= MAX_EVENTS);
    let mut master = ChaCha8Rng::seed_from_u64(config.seed);
    let mut stats = StepStats::default();
    let mut graphs = 0;

    for iteration in 0..config.iterations {
        let graph_seed: u64 = master.gen();
        let walk_seed: u64 = master.gen();
        let mut rng = ChaCha8Rng::seed_from_u64(walk_seed);
        let event_count = rng.gen_range(1..=config.max_events);
        let density = config.densities[(iteration % config.densities.len() as u64) as usize];
        let graph = DcrGraph::random(graph_seed, event_count, density)
            .expect("bounded event count");
        graphs += 1;

        // Build the trace: prefer enabled events, but probe an arbitrary
        // event a quarter of the time so disabled verdicts get compared.
        let mut trace = Vec::new();
        let mut reference = graph.clone();
        for _ in 0..config.max_trace {
            let enabled = reference.enabled_events();
            let probe = rng.gen_bool(0.25) || enabled.is_empty();
            let event = if probe {
                EventId::new(rng.gen_range(1..=event_count)).expect("in range")
            } else {
                let members: Vec<EventId> = enabled.iter().collect();
                members[rng.gen_range(0..members.len())]
            };
            trace.push(event);
            if reference.enabled(event).unwrap_or(false) {
                reference = reference.execute(event).expect("enabled event fires");
            } else if enabled.is_empty() {
                break;
            }
        }

        if let Some(_first) = check_with_stats(program, &graph, &trace, &mut stats) {
            let (graph, trace, divergence) = shrink(program, &graph, trace);
            return FuzzReport {
                iterations: iteration + 1,
                graphs,
                steps: stats.steps,
                approvals: stats.approvals,
                rejections: stats.rejections,
                counterexample: Some(Counterexample {
                    iteration: Some(iteration),
                    graph,
                    trace,
                    divergence,
                }),
            };
        }
    }
    FuzzReport {
        iterations: config.iterations,
        graphs,
        steps: stats.steps,
        approvals: stats.approvals,
        rejections: stats.rejections,
        counterexample: None,
    }
}

/// Totals from the exhaustive phase.
#[derive(Debug)]
pub struct ExhaustiveReport {
    pub graphs: u64,
    pub markings_checked: u64,
    pub verdicts_compared: u64,
    pub counterexample: Option<Counterexample>,
}

/// Enumerates every graph with `events` events (all of them included,
/// nothing pending) and every relation subset of size at most
/// `max_relations`, then explores all reachable markings to trace depth
/// `max_depth`, comparing the chain's verdict for every event at every
/// visited marking. Distinct markings are visited once.
pub fn exhaustive_small(
    program: &WorkflowProgram,
    events: u8,
    max_relations: usize,
    max_depth: usize,
) -> ExhaustiveReport {
    assert!(events <= 4, "exhaustive enumeration is for tiny graphs");
    let executor = AccountAddress::repeat(0x11);
    let creator = AccountAddress::repeat(0xaa);
    let executors = vec![executor; events as usize];
    let mut universe = Vec::new();
    for source in 1..=events {
        for kind in RelationKind::ALL {
            for target in 1..=events {
                universe.push(Relation::new(
                    EventId::new(source).unwrap(),
                    kind,
                    EventId::new(target).unwrap(),
                ));
            }
        }
    }

    let mut report = ExhaustiveReport {
        graphs: 0,
        markings_checked: 0,
        verdicts_compared: 0,
        counterexample: None,
    };
    let mut marking = Marking::default();
    for raw in 1..=events {
        marking.included.insert(EventId::new(raw).unwrap());
    }

    for size in 0..=max_relations.min(universe.len()) {
        for subset in universe.iter().copied().combinations(size) {
            let graph = DcrGraph::new(events, &subset, marking, &executors, creator)
                .expect("enumerated graph is valid");
            report.graphs += 1;
            if let Some(counterexample) =
                explore_graph(program, &graph, max_depth, &mut report)
            {
                report.counterexample = Some(counterexample);
                return report;
            }
        }
    }
    report
}

/// Walks every reachable marking of `graph` up to `max_depth` firings,
/// comparing chain and reference verdicts for every event at each node.
fn explore_graph(
    program: &WorkflowProgram,
    graph: &DcrGraph,
    max_depth: usize,
    report: &mut ExhaustiveReport,
) -> Option<Counterexample> {
    let mut ledger = Ledger::new();
    let spec = GraphSpec::from_graph(graph);
    let built = construct(
        &mut ledger,
        &spec,
        graph.creator(),
        program,
        ConstructOptions::default(),
    )
    .expect("tiny graph constructs");
    let app_id = built.app_id;
    match snapshot_graph(&ledger, app_id) {
        Ok(image) if &image == graph => {}
        other => {
            return Some(Counterexample {
                iteration: None,
                graph: graph.clone(),
                trace: Vec::new(),
                divergence: Divergence::Image {
                    detail: format!("decoded {other:?} != reference"),
                },
            })
        }
    }

    let mut visited: HashSet<Marking> = HashSet::new();
    // Depth-first over (chain ledger, reference marking, trace so far).
    let mut stack = vec![(ledger, graph.clone(), Vec::<EventId>::new())];
    visited.insert(*graph.marking());
    while let Some((ledger, reference, trace)) = stack.pop() {
        report.markings_checked += 1;
        for event in graph.events() {
            report.verdicts_compared += 1;
            let sender = reference.executor(event).expect("event in range");
            let mut branch = ledger.clone();
            let call = execute_call(sender, app_id, event, &[]);
            let result = branch.app_call(program, &call).expect("call enters ledger");
            let ref_enabled = reference.enabled(event).expect("event in range");
            let fail = |divergence: Divergence| {
                let mut failing_trace = trace.clone();
                failing_trace.push(event);
                Some(Counterexample {
                    iteration: None,
                    graph: graph.clone(),
                    trace: failing_trace,
                    divergence,
                })
            };
            match (&result.reject, ref_enabled) {
                (None, true) => {
                    let next = reference.execute(event).expect("enabled event fires");
                    match snapshot_graph(&branch, app_id) {
                        Ok(image) if image == next => {}
                        Ok(image) => {
                            return fail(Divergence::Marking {
                                step: trace.len(),
                                event,
                                detail: format!(
                                    "chain {:?} != reference {:?}",
                                    image.marking(),
                                    next.marking()
                                ),
                            })
                        }
                        Err(e) => {
                            return fail(Divergence::Marking {
                                step: trace.len(),
                                event,
                                detail: format!("state does not decode: {e}"),
                            })
                        }
                    }
                    if trace.len() + 1 < max_depth && visited.insert(*next.marking()) {
                        let mut next_trace = trace.clone();
                        next_trace.push(event);
                        stack.push((branch, next, next_trace));
                    }
                }
                (Some(reject), false)
                    if reject.code() == crate::contract::codes::NOT_ENABLED => {}
                (reject, reference_enabled) => {
                    return fail(Divergence::Verdict {
                        step: trace.len(),
                        event,
                        chain: match reject {
                            None => "approved".to_string(),
                            Some(r) => format!("rejected ({})", r.code()),
                        },
                        reference: reference_enabled,
                    });
                }
            }
        }
    }
    None
}
