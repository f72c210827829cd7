//! Replays the bundled acceptance scenario: a script that constructs the
//! mortgage workflow, fires events (expecting approvals and specific
//! rejections), and asserts the resulting markings along the way.
//!
//! Run with:
//!
//! ```sh
//! cargo run --example scenario_replay
//! ```

use std::path::Path;

use dcrvm::scenario::{replay, Scenario};

fn main() {
    let corpus = Path::new(env!("CARGO_MANIFEST_DIR")).join("corpus");
    let path = corpus.join("mortgage_accept.scn");
    let text = std::fs::read_to_string(&path).expect("corpus scenario");
    let scenario = Scenario::parse(&text).expect("valid scenario file");

    println!(
        "replaying {} ({} steps):\n",
        path.file_name().unwrap().to_string_lossy(),
        scenario.steps.len()
    );
    match replay(&scenario, &corpus) {
        Ok(report) => {
            for line in &report.lines {
                println!("    {line}");
            }
            let app = report.app_id.expect("scenario created a workflow");
            println!("\nscenario ok — app {app} finished in the asserted state");
        }
        Err(err) => {
            println!("scenario failed: {err}");
            std::process::exit(1);
        }
    }
}
