//! Scenario files: a scripted workflow lifecycle that replays against a
//! fresh simulated chain. The format is line-oriented, `#` comments:
//!
//! ```text
//! dcrscenario v1
//! create mortgage.dcr                 # construct a graph file on chain
//! exec 1                              # fires as the on-chain executor
//! exec 2 sender=<64 hex>              # fire with an explicit sender
//! exec 6 expect=rejected              # the chain must reject this
//! exec 6 expect=rejected:not_enabled  # ... with this exact code
//! assert accepting                    # or: assert not-accepting
//! assert included 1 2 3               # exact included set
//! assert pending 6                    # exact pending set
//! assert executed                     # exact executed set (here: empty)
//! assert enabled 1 2                  # exact enabled set
//! ```
//!
//! `create` paths resolve relative to the scenario file's directory.
//! Set assertions compare the whole set, so omitted ids assert absence.

use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::addr::AccountAddress;
use crate::avm::{AppId, Ledger};
use crate::contract::{snapshot_graph, WorkflowProgram};
use crate::dcr::{DcrGraph, EventId, EventSet};
use crate::driver::{construct, execute_event, ConstructOptions, DriverError, DEFAULT_CREATOR};
use crate::graphfile::{strip_comment, tokenize, GraphSpec, ParseError};

pub const HEADER: &str = "dcrscenario v1";

fn err(line: usize, message: impl Into<String>) -> ParseError {
    ParseError {
        line,
        message: message.into(),
    }
}

/// What an `exec` step demands of the chain's verdict.
#[derive(Clone, PartialEq, Eq, Debug, Default)]
pub enum Expectation {
    #[default]
    Approved,
    /// Rejected, optionally with this exact code.
    Rejected(Option<String>),
}

/// One marking/verdict assertion evaluated against on-chain state.
#[derive(Clone, PartialEq, Eq, Debug)]
pub enum Check {
    Accepting(bool),
    Included(Vec<u64>),
    Pending(Vec<u64>),
    Executed(Vec<u64>),
    Enabled(Vec<u64>),
}

#[derive(Clone, PartialEq, Eq, Debug)]
pub enum StepOp {
    Create {
        path: String,
    },
    Exec {
        event: u64,
        sender: Option<AccountAddress>,
        expect: Expectation,
    },
    Assert(Check),
}

#[derive(Clone, PartialEq, Eq, Debug)]
pub struct Step {
    pub line: usize,
    pub op: StepOp,
}

#[derive(Clone, PartialEq, Eq, Debug, Default)]
pub struct Scenario {
    pub steps: Vec<Step>,
}

fn unquote(token: &str) -> String {
    token
        .strip_prefix('"')
        .and_then(|t| t.strip_suffix('"'))
        .unwrap_or(token)
        .to_string()
}

fn parse_ids(tokens: &[String], lineno: usize) -> Result<Vec<u64>, ParseError> {
    tokens
        .iter()
        .map(|t| {
            t.parse::<u64>()
                .map_err(|_| err(lineno, format!("bad event id {t:?}")))
        })
        .collect()
}

impl Scenario {
    pub fn parse(text: &str) -> Result<Self, ParseError> {
        let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));
        let header = lines
            .by_ref()
            .map(|(n, l)| (n, strip_comment(l).trim().to_string()))
            .find(|(_, l)| !l.is_empty());
        match header {
            Some((_, h)) if h == HEADER => {}
            Some((n, h)) => return Err(err(n, format!("expected {HEADER:?}, found {h:?}"))),
            None => return Err(err(1, format!("missing {HEADER:?} header"))),
        }

        let mut steps = Vec::new();
        for (lineno, raw) in lines {
            let line = strip_comment(raw).trim();
            if line.is_empty() {
                continue;
            }
            let tokens = tokenize(line, lineno)?;
            let op = match tokens[0].as_str() {
                "create" => {
                    if tokens.len() != 2 {
                        return Err(err(lineno, "create takes exactly one path"));
                    }
                    StepOp::Create {
                        path: unquote(&tokens[1]),
                    }
                }
                "exec" => {
                    let id_token = tokens
                        .get(1)
                        .ok_or_else(|| err(lineno, "exec needs an event id"))?;
                    let event: u64 = id_token
                        .parse()
                        .map_err(|_| err(lineno, format!("bad event id {id_token:?}")))?;
                    let mut sender = None;
                    let mut expect = Expectation::Approved;
                    for token in &tokens[2..] {
                        if let Some(hex) = token.strip_prefix("sender=") {
                            if sender.is_some() {
                                return Err(err(lineno, "duplicate sender="));
                            }
                            sender = Some(AccountAddress::from_hex(hex).map_err(|e| {
                                err(lineno, format!("bad sender address: {e}"))
                            })?);
                        } else if let Some(what) = token.strip_prefix("expect=") {
                            expect = match what.split_once(':') {
                                None if what == "approved" => Expectation::Approved,
                                None if what == "rejected" => Expectation::Rejected(None),
                                Some(("rejected", code)) if !code.is_empty() => {
                                    Expectation::Rejected(Some(code.to_string()))
                                }
                                _ => {
                                    return Err(err(
                                        lineno,
                                        format!("bad expectation {what:?}"),
                                    ))
                                }
                            };
                        } else {
                            return Err(err(lineno, format!("unknown exec option {token:?}")));
                        }
                    }
                    StepOp::Exec {
                        event,
                        sender,
                        expect,
                    }
                }
                "assert" => {
                    let what = tokens
                        .get(1)
                        .ok_or_else(|| err(lineno, "assert needs a property"))?;
                    let ids = &tokens[2..];
                    let no_ids = |lineno: usize| -> Result<(), ParseError> {
                        if ids.is_empty() {
                            Ok(())
                        } else {
                            Err(err(lineno, format!("assert {what} takes no event ids")))
                        }
                    };
                    let check = match what.as_str() {
                        "accepting" => {
                            no_ids(lineno)?;
                            Check::Accepting(true)
                        }
                        "not-accepting" => {
                            no_ids(lineno)?;
                            Check::Accepting(false)
                        }
                        "included" => Check::Included(parse_ids(ids, lineno)?),
                        "pending" => Check::Pending(parse_ids(ids, lineno)?),
                        "executed" => Check::Executed(parse_ids(ids, lineno)?),
                        "enabled" => Check::Enabled(parse_ids(ids, lineno)?),
                        other => {
                            return Err(err(lineno, format!("unknown assertion {other:?}")))
                        }
                    };
                    StepOp::Assert(check)
                }
                other => return Err(err(lineno, format!("unknown step {other:?}"))),
            };
            steps.push(Step { line: lineno, op });
        }
        Ok(Scenario { steps })
    }
}

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error(transparent)]
    Parse(#[from] ParseError),
    #[error("{path}: {source}")]
    GraphFile { path: PathBuf, source: ParseError },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error(transparent)]
    Driver(#[from] DriverError),
    #[error("line {line}: {message}")]
    StepFailed { line: usize, message: String },
}

fn fail(line: usize, message: impl Into<String>) -> ScenarioError {
    ScenarioError::StepFailed {
        line,
        message: message.into(),
    }
}

/// What a replay did, step by step.
#[derive(Debug)]
pub struct ReplayReport {
    /// One human-readable line per step.
    pub lines: Vec<String>,
    /// The workflow the final steps acted on, if any `create` ran.
    pub app_id: Option<AppId>,
    /// The chain as the scenario left it.
    pub ledger: Ledger,
}

fn ids_to_set(ids: &[u64], graph: &DcrGraph, line: usize) -> Result<EventSet, ScenarioError> {
    let mut set = EventSet::empty();
    for &id in ids {
        let ev = u8::try_from(id)
            .ok()
            .and_then(|raw| EventId::new(raw).ok())
            .filter(|ev| ev.get() as usize <= graph.event_count() as usize)
            .ok_or_else(|| fail(line, format!("event {id} is not on chain")))?;
        set.insert(ev);
    }
    Ok(set)
}

fn set_to_string(set: EventSet) -> String {
    let ids: Vec<String> = set.iter().map(|e| e.to_string()).collect();
    format!("{{{}}}", ids.join(", "))
}

fn check_set(
    line: usize,
    what: &str,
    actual: EventSet,
    expected: EventSet,
) -> Result<String, ScenarioError> {
    if actual == expected {
        Ok(format!("assert {what} {}", set_to_string(actual)))
    } else {
        Err(fail(
            line,
            format!(
                "{what} set is {}, expected {}",
                set_to_string(actual),
                set_to_string(expected)
            ),
        ))
    }
}

/// Replays a scenario against a fresh chain. `base_dir` anchors relative
/// `create` paths (usually the scenario file's directory).
pub fn replay(scenario: &Scenario, base_dir: &Path) -> Result<ReplayReport, ScenarioError> {
    let mut ledger = Ledger::new();
    let program = WorkflowProgram::new();
    let mut app_id: Option<AppId> = None;
    let mut lines = Vec::new();

    for step in &scenario.steps {
        let line = step.line;
        match &step.op {
            StepOp::Create { path } => {
                let resolved = base_dir.join(path);
                let text = std::fs::read_to_string(&resolved).map_err(|source| {
                    ScenarioError::Io {
                        path: resolved.clone(),
                        source,
                    }
                })?;
                let spec = GraphSpec::parse(&text).map_err(|source| {
                    ScenarioError::GraphFile {
                        path: resolved.clone(),
                        source,
                    }
                })?;
                let report = construct(
                    &mut ledger,
                    &spec,
                    DEFAULT_CREATOR,
                    &program,
                    ConstructOptions::default(),
                )?;
                lines.push(format!(
                    "create {path}: app {} ({} txns, {} opt-ins, {} fees, {} escrow)",
                    report.app_id,
                    report.construction_txns,
                    report.optin_txns,
                    report.total_fees,
                    report.escrow_locked
                ));
                app_id = Some(report.app_id);
            }
            StepOp::Exec {
                event,
                sender,
                expect,
            } => {
                let app = app_id.ok_or_else(|| fail(line, "exec before any create"))?;
                let result = execute_event(&mut ledger, &program, app, *event, *sender)?;
                let verdict = match &result.reject {
                    None => "approved".to_string(),
                    Some(reject) => format!("rejected ({})", reject.code()),
                };
                match (expect, &result.reject) {
                    (Expectation::Approved, None) => {}
                    (Expectation::Rejected(None), Some(_)) => {}
                    (Expectation::Rejected(Some(code)), Some(reject))
                        if reject.code() == code => {}
                    (Expectation::Approved, Some(reject)) => {
                        return Err(fail(
                            line,
                            format!("exec {event} was rejected: {reject}"),
                        ))
                    }
                    (Expectation::Rejected(_), None) => {
                        return Err(fail(
                            line,
                            format!("exec {event} was approved, expected rejection"),
                        ))
                    }
                    (Expectation::Rejected(Some(code)), Some(reject)) => {
                        return Err(fail(
                            line,
                            format!(
                                "exec {event} rejected with {}, expected {code}",
                                reject.code()
                            ),
                        ))
                    }
                }
                lines.push(format!("exec {event}: {verdict} ({} ops)", result.ops_used));
            }
            StepOp::Assert(check) => {
                let app = app_id.ok_or_else(|| fail(line, "assert before any create"))?;
                let graph = snapshot_graph(&ledger, app)
                    .map_err(|e| fail(line, format!("cannot snapshot state: {e}")))?;
                let described = match check {
                    Check::Accepting(expected) => {
                        let actual = graph.is_accepting();
                        if actual != *expected {
                            return Err(fail(
                                line,
                                format!(
                                    "state is {}, expected {}",
                                    if actual { "accepting" } else { "not accepting" },
                                    if *expected { "accepting" } else { "not accepting" }
                                ),
                            ));
                        }
                        format!(
                            "assert {}",
                            if actual { "accepting" } else { "not-accepting" }
                        )
                    }
                    Check::Included(ids) => check_set(
                        line,
                        "included",
                        graph.marking().included,
                        ids_to_set(ids, &graph, line)?,
                    )?,
                    Check::Pending(ids) => check_set(
                        line,
                        "pending",
                        graph.marking().pending,
                        ids_to_set(ids, &graph, line)?,
                    )?,
                    Check::Executed(ids) => check_set(
                        line,
                        "executed",
                        graph.marking().executed,
                        ids_to_set(ids, &graph, line)?,
                    )?,
                    Check::Enabled(ids) => check_set(
                        line,
                        "enabled",
                        graph.enabled_events(),
                        ids_to_set(ids, &graph, line)?,
                    )?,
                };
                lines.push(described);
            }
        }
    }
    Ok(ReplayReport {
        lines,
        app_id,
        ledger,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dcr::fixtures::mortgage;
    use std::io::Write as _;

    fn write_mortgage_file(dir: &Path) -> PathBuf {
        let spec = GraphSpec::from_graph(&mortgage());
        let path = dir.join("mortgage.dcr");
        let mut f = std::fs::File::create(&path).unwrap();
        f.write_all(spec.print().as_bytes()).unwrap();
        path
    }

    #[test]
    fn parses_every_step_form() {
        let text = r#"
dcrscenario v1
# a comment
create "work flow.dcr"
exec 3
exec 4 sender=7777777777777777777777777777777777777777777777777777777777777777
exec 6 expect=rejected
exec 6 expect=rejected:not_enabled  # trailing comment
exec 2 expect=approved
assert accepting
assert not-accepting
assert included 1 2 3
assert pending
assert enabled 6
assert executed 1
"#;
        let scenario = Scenario::parse(text).unwrap();
        assert_eq!(scenario.steps.len(), 12);
        assert_eq!(
            scenario.steps[0].op,
            StepOp::Create {
                path: "work flow.dcr".to_string()
            }
        );
        assert_eq!(
            scenario.steps[3].op,
            StepOp::Exec {
                event: 6,
                sender: None,
                expect: Expectation::Rejected(None)
            }
        );
        assert_eq!(
            scenario.steps[4].op,
            StepOp::Exec {
                event: 6,
                sender: None,
                expect: Expectation::Rejected(Some("not_enabled".to_string()))
            }
        );
        assert_eq!(
            scenario.steps[10].op,
            StepOp::Assert(Check::Enabled(vec![6]))
        );
    }

    #[test]
    fn parse_errors_carry_line_numbers() {
        let cases: &[(&str, usize, &str)] = &[
            ("dcrscenario v2\n", 1, "expected"),
            ("dcrscenario v1\nflee 1\n", 2, "unknown step"),
            ("dcrscenario v1\nexec\n", 2, "needs an event id"),
            ("dcrscenario v1\nexec one\n", 2, "bad event id"),
            ("dcrscenario v1\nexec 1 expect=maybe\n", 2, "bad expectation"),
            ("dcrscenario v1\nexec 1 sender=zz\n", 2, "bad sender"),
            ("dcrscenario v1\nexec 1 force\n", 2, "unknown exec option"),
            ("dcrscenario v1\nassert\n", 2, "needs a property"),
            ("dcrscenario v1\nassert vibes\n", 2, "unknown assertion"),
            ("dcrscenario v1\nassert accepting 1\n", 2, "takes no event ids"),
            ("dcrscenario v1\ncreate a b\n", 2, "exactly one path"),
            ("dcrscenario v1\nassert included x\n", 2, "bad event id"),
        ];
        for (text, line, needle) in cases {
            let e = Scenario::parse(text).unwrap_err();
            assert_eq!(e.line, *line, "{text:?} -> {e}");
            assert!(e.message.contains(needle), "{text:?} -> {e}");
        }
    }

    #[test]
    fn replays_the_reference_walkthrough() {
        let dir = tempfile::tempdir().unwrap();
        write_mortgage_file(dir.path());
        let text = r#"
dcrscenario v1
create mortgage.dcr
assert not-accepting
assert pending 6
assert enabled 1 2 3 4
exec 6 expect=rejected:not_enabled
exec 1
exec 2
exec 3
assert included 1 2 3 5 6
exec 6
assert accepting
assert executed 1 2 3 6
exec 2
assert not-accepting
assert pending 6
"#;
        let scenario = Scenario::parse(text).unwrap();
        let report = replay(&scenario, dir.path()).unwrap();
        assert_eq!(report.lines.len(), 15);
        assert!(report.lines[0].contains("app 1"));
        assert!(report.lines[4].contains("rejected (not_enabled)"));
    }

    #[test]
    fn replay_failures_name_the_step_line() {
        let dir = tempfile::tempdir().unwrap();
        write_mortgage_file(dir.path());
        let cases: &[(&str, usize, &str)] = &[
            (
                "dcrscenario v1\ncreate mortgage.dcr\nexec 6\n",
                3,
                "rejected",
            ),
            (
                "dcrscenario v1\ncreate mortgage.dcr\nexec 1 expect=rejected\n",
                3,
                "expected rejection",
            ),
            (
                "dcrscenario v1\ncreate mortgage.dcr\nexec 6 expect=rejected:not_executor\n",
                3,
                "expected not_executor",
            ),
            (
                "dcrscenario v1\ncreate mortgage.dcr\nassert accepting\n",
                3,
                "not accepting",
            ),
            (
                "dcrscenario v1\ncreate mortgage.dcr\nassert pending 1\n",
                3,
                "pending set",
            ),
            (
                "dcrscenario v1\ncreate mortgage.dcr\nassert included 99\n",
                3,
                "not on chain",
            ),
            ("dcrscenario v1\nexec 1\n", 2, "before any create"),
            ("dcrscenario v1\nassert accepting\n", 2, "before any create"),
        ];
        for (text, line, needle) in cases {
            let scenario = Scenario::parse(text).unwrap();
            match replay(&scenario, dir.path()) {
                Err(ScenarioError::StepFailed { line: l, message }) => {
                    assert_eq!(l, *line, "{text:?} -> {message}");
                    assert!(message.contains(needle), "{text:?} -> {message}");
                }
                other => panic!("{text:?}: expected step failure, got {other:?}"),
            }
        }
    }

    #[test]
    fn missing_graph_file_is_an_io_error_with_the_path() {
        let dir = tempfile::tempdir().unwrap();
        let scenario = Scenario::parse("dcrscenario v1\ncreate nope.dcr\n").unwrap();
        match replay(&scenario, dir.path()) {
            Err(ScenarioError::Io { path, .. }) => {
                assert!(path.ends_with("nope.dcr"));
            }
            other => panic!("expected io error, got {other:?}"),
        }
    }
}
