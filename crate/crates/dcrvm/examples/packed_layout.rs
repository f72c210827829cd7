//! Shows how a workflow graph is packed into key/value pairs: the
//! nibble-per-event marking, the five-bits-per-partner links rows, and
//! the pair-to-slot assignment that spills past 64 pairs into the local
//! stores of dedicated storage accounts.
//!
//! Run with:
//!
//! ```sh
//! cargo run --example packed_layout
//! ```

use std::path::Path;

use dcrvm::avm::StorageScope;
use dcrvm::dcr::RelationKind;
use dcrvm::driver::DEFAULT_CREATOR;
use dcrvm::encoding::{
    encode_links, encode_marking, executor_key, executor_pair_ordinal, get_bit, link_bit,
    links_key, links_pair_ordinal, pairs_for_events, slot_for_pair,
};
use dcrvm::graphfile::GraphSpec;

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

fn main() {
    let corpus = Path::new(env!("CARGO_MANIFEST_DIR")).join("corpus/mortgage.dcr");
    let text = std::fs::read_to_string(corpus).expect("corpus graph");
    let spec = GraphSpec::parse(&text).expect("valid graph file");
    let graph = spec.to_graph(DEFAULT_CREATOR).expect("valid graph");
    let n = graph.event_count();

    // --- the marking -----------------------------------------------------
    let marking = encode_marking(graph.marking(), n);
    println!("marking of {n} events packs into {} bytes: {}", marking.bytes.len(), hex(&marking.bytes));
    println!("    one nibble per event — bits in order: included, pending, executed, reserved:");
    for event in graph.events() {
        let m = graph.marking();
        println!(
            "    event {}: {}{}{}",
            event,
            if m.included.contains(event) { "included " } else { "" },
            if m.pending.contains(event) { "pending " } else { "" },
            if m.executed.contains(event) { "executed" } else { "" },
        );
    }

    // --- the links rows ---------------------------------------------------
    println!("\neach event's relations pack into one row (5 bits per partner):");
    println!("    a row holds the event's outgoing effects and incoming constraints,");
    println!("    so executing an event reads only its own row.");
    for event in graph.events() {
        let row = encode_links(&graph, event);
        let mut entries = Vec::new();
        for partner in graph.events() {
            for kind in RelationKind::ALL {
                if get_bit(&row.bytes, link_bit(partner, kind)) {
                    let dir = if kind.is_constraint() {
                        format!("{partner} {kind} {event}")
                    } else {
                        format!("{event} {kind} {partner}")
                    };
                    entries.push(dir);
                }
            }
        }
        println!(
            "    {:<8} = {:<10} {}",
            String::from_utf8_lossy(&links_key(event)),
            hex(&row.bytes),
            if entries.is_empty() {
                "(no relations)".to_string()
            } else {
                entries.join(", ")
            }
        );
    }

    // --- slot assignment ---------------------------------------------------
    println!("\npair placement at {n} events ({} pairs, all global):", pairs_for_events(n));
    let scope_name = |scope: StorageScope| match scope {
        StorageScope::Global => "global".to_string(),
        StorageScope::Local { account } => format!("local[{account}]"),
    };
    println!("    ordinal  1  GC        global   (creator address)");
    println!("    ordinal  2  MK        global   (packed marking)");
    println!("    ordinal  3  TEN       global   (event count, the lone uint)");
    for event in graph.events() {
        let links = links_pair_ordinal(event);
        let exec = executor_pair_ordinal(event);
        println!(
            "    ordinal {:>2}  {:<8}  {:<8} ordinal {:>2}  {:<4}  {}",
            links,
            String::from_utf8_lossy(&links_key(event)),
            scope_name(slot_for_pair(links).unwrap()),
            exec,
            String::from_utf8_lossy(&executor_key(event)),
            scope_name(slot_for_pair(exec).unwrap()),
        );
    }

    // --- the spill past 64 global pairs -------------------------------------
    println!("\nat 61 events the {} pairs spill into local stores:", pairs_for_events(61));
    let mut last = None;
    for ordinal in 1..=pairs_for_events(61) {
        let scope = slot_for_pair(ordinal).unwrap();
        if last != Some(scope) {
            println!("    ordinals {:>3}.. -> {}", ordinal, scope_name(scope));
            last = Some(scope);
        }
    }
}
