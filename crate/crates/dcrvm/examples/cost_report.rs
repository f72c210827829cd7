//! Prints the cost model: transaction fees and storage escrow for a
//! 5-event benchmark workflow, side by side with the equivalent contract
//! on an EVM chain, plus the escrow curve up to the 61-event ceiling.
//!
//! Run with:
//!
//! ```sh
//! cargo run --example cost_report
//! ```

use dcrvm::cost::{
    comparison_report, escrow_overall, format_algos, format_eth, EthBaseline, DEFAULT_RATE,
};

fn main() {
    let baseline = EthBaseline::default();
    let report =
        comparison_report(5, 11, 3, DEFAULT_RATE, baseline).expect("benchmark shape is valid");

    println!(
        "benchmark workflow: 5 events, 11 relations, 3 status updates, \
         rate {} USD/algo\n",
        report.rate
    );
    println!(
        "{:<24} {:>5} {:>10} {:>9} | {:>8} {:>12} {:>10} | {:>9}",
        "", "txns", "algos", "USD", "gas", "ETH", "USD", "advantage"
    );
    for row in &report.rows {
        println!(
            "{:<24} {:>5} {:>10} {:>9} | {:>8} {:>12} {:>10} | {:>8}x",
            row.label,
            row.txns,
            format_algos(row.algo_microalgos),
            row.algo_usd.to_string(),
            row.eth_gas,
            format_eth(row.eth_gwei),
            row.eth_usd.to_string(),
            row.advantage
        );
    }

    println!("\nescrow locked while a workflow stays deployed (refunded on deletion):");
    println!(
        "{:>7} {:>9} {:>11} {:>11}   storage accounts",
        "events", "pairs", "global", "total"
    );
    for n in [0u64, 5, 10, 20, 31, 32, 45, 61] {
        let quote = escrow_overall(n).expect("within capacity");
        let locals = if quote.locals.is_empty() {
            "none".to_string()
        } else {
            quote
                .locals
                .iter()
                .map(|v| format_algos(*v))
                .collect::<Vec<_>>()
                .join(" + ")
        };
        println!(
            "{:>7} {:>9} {:>11} {:>11}   {}",
            quote.event_count,
            3 + 2 * n,
            format_algos(quote.global),
            format_algos(quote.total),
            locals
        );
    }
    println!(
        "\nan execution costs a single {}-algo transaction ({} USD at the default rate)",
        format_algos(dcrvm::avm::FLAT_FEE),
        report.rows[2].algo_usd
    );
}
