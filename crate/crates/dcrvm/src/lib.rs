//! DCR graph workflows executed as smart contracts on a simulated,
//! resource-metered key/value ledger.
//!
//! The crate has three layers:
//!
//! * [`dcr`] — reference semantics for Dynamic Condition Response graphs:
//!   events, the five relation kinds (condition, response, milestone,
//!   include, exclude), markings, enabledness, execution and acceptance.
//!   This layer is the trusted oracle everything else is checked against.
//! * [`encoding`], [`avm`], [`contract`] — the on-chain side: markings and
//!   relation rows bit-packed into key/value pairs, a ledger simulator with
//!   per-call operation metering, flat fees and minimum-balance escrow, and
//!   the workflow program (`add_event` / `add_relation` / `execute` /
//!   `update_status`) that manipulates packed state under a 700-op budget.
//! * [`cost`], [`graphfile`], [`ledgerfile`], [`scenario`], [`driver`],
//!   [`fuzz`], [`cli`] — cost reporting, file formats, the construction
//!   driver, the differential fuzzer, and the command-line surface.
//!
//! Run `cargo run --example mortgage_walkthrough` for an end-to-end tour;
//! the `examples/` directory holds one runnable program per capability.
//!
//! ```
//! use dcrvm::addr::AccountAddress;
//! use dcrvm::dcr::{DcrGraph, EventId, Marking, Relation, RelationKind};
//!
//! // Two events: 1 must run before 2 can.
//! let owner = AccountAddress::repeat(0xaa);
//! let relations = [Relation::new(
//!     EventId::new(1).unwrap(),
//!     RelationKind::Condition,
//!     EventId::new(2).unwrap(),
//! )];
//! let marking = Marking::initially_included(2);
//! let graph = DcrGraph::new(2, &relations, marking, &[owner, owner], owner).unwrap();
//!
//! let e1 = EventId::new(1).unwrap();
//! let e2 = EventId::new(2).unwrap();
//! assert!(graph.enabled(e1).unwrap());
//! assert!(!graph.enabled(e2).unwrap());
//! let after = graph.execute(e1).unwrap();
//! assert!(after.enabled(e2).unwrap());
//! assert!(after.is_accepting());
//! ```

pub mod addr;
pub mod avm;
pub mod cli;
pub mod contract;
pub mod cost;
pub mod dcr;
pub mod driver;
pub mod encoding;
pub mod fuzz;
pub mod graphfile;
pub mod ledgerfile;
pub mod scenario;
