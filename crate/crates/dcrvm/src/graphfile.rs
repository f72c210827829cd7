//! The `.dcr` graph file format: a line-oriented text description of a
//! workflow graph, its initial marking, and its per-event executors.
//!
//! ```text
//! dcrgraph v1
//! # comments run to end of line (a '#' inside a quoted name is literal)
//! event 1 executor=<64 hex chars> included name="Collect documents"
//! event 2 executor=<64 hex chars> included pending
//! rel 1 condition 2
//! ```
//!
//! Event ids must densely cover `1..=N` (in any order); `N` may exceed
//! the on-chain capacity, so a file can describe graphs a deployment will
//! later refuse. Flags are `included`, `pending`, `executed`; omitted
//! flags are false. Relation kinds are `include`, `exclude`, `milestone`,
//! `condition`, `response`.

use std::collections::BTreeSet;

use thiserror::Error;

use crate::addr::AccountAddress;
use crate::dcr::{DcrGraph, EventId, EventSet, Marking, Relation, RelationKind};

pub const HEADER: &str = "dcrgraph v1";

#[derive(Debug, Error, PartialEq, Eq)]
#[error("line {line}: {message}")]
pub struct ParseError {
    pub line: usize,
    pub message: String,
}

fn err(line: usize, message: impl Into<String>) -> ParseError {
    ParseError {
        line,
        message: message.into(),
    }
}

/// One declared event. Ids are raw (`u16`) so that files describing
/// graphs beyond the deployable capacity still parse.
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct EventDecl {
    pub id: u16,
    pub executor: AccountAddress,
    pub included: bool,
    pub pending: bool,
    pub executed: bool,
    pub name: Option<String>,
}

/// One declared relation, unvalidated against the event list's bound.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Debug)]
pub struct RawRelation {
    pub source: u16,
    pub kind: RelationKind,
    pub target: u16,
}

/// A parsed graph file: everything needed to drive construction, without
/// committing to the chain's capacity limits.
#[derive(Clone, PartialEq, Eq, Debug, Default)]
pub struct GraphSpec {
    pub events: Vec<EventDecl>,
    pub relations: Vec<RawRelation>,
}

/// Strips an end-of-line comment, honouring double quotes.
pub(crate) fn strip_comment(line: &str) -> &str {
    let mut in_quotes = false;
    for (i, c) in line.char_indices() {
        match c {
            '"' => in_quotes = !in_quotes,
            '#' if !in_quotes => return &line[..i],
            _ => {}
        }
    }
    line
}

/// Splits a line into whitespace-separated tokens, keeping quoted
/// sections (and their spaces) inside a single token.
pub(crate) fn tokenize(line: &str, lineno: usize) -> Result<Vec<String>, ParseError> {
    let mut tokens = Vec::new();
    let mut current = String::new();
    let mut in_quotes = false;
    for c in line.chars() {
        match c {
            '"' => {
                in_quotes = !in_quotes;
                current.push(c);
            }
            c if c.is_whitespace() && !in_quotes => {
                if !current.is_empty() {
                    tokens.push(std::mem::take(&mut current));
                }
            }
            c => current.push(c),
        }
    }
    if in_quotes {
        return Err(err(lineno, "unterminated quote"));
    }
    if !current.is_empty() {
        tokens.push(current);
    }
    Ok(tokens)
}

fn parse_event_id(token: &str, lineno: usize) -> Result<u16, ParseError> {
    let id: u16 = token
        .parse()
        .map_err(|_| err(lineno, format!("bad event id {token:?}")))?;
    if id == 0 {
        return Err(err(lineno, "event ids start at 1"));
    }
    Ok(id)
}

fn parse_event_line(tokens: &[String], lineno: usize) -> Result<EventDecl, ParseError> {
    let id_token = tokens
        .get(1)
        .ok_or_else(|| err(lineno, "event line needs an id"))?;
    let id = parse_event_id(id_token, lineno)?;
    let mut executor = None;
    let mut included = false;
    let mut pending = false;
    let mut executed = false;
    let mut name = None;
    for token in &tokens[2..] {
        if let Some(hex) = token.strip_prefix("executor=") {
            if executor.is_some() {
                return Err(err(lineno, "duplicate executor"));
            }
            executor = Some(
                AccountAddress::from_hex(hex)
                    .map_err(|e| err(lineno, format!("bad executor: {e}")))?,
            );
        } else if let Some(quoted) = token.strip_prefix("name=") {
            if name.is_some() {
                return Err(err(lineno, "duplicate name"));
            }
            let inner = quoted
                .strip_prefix('"')
                .and_then(|s| s.strip_suffix('"'))
                .ok_or_else(|| err(lineno, "name must be double-quoted"))?;
            name = Some(inner.to_string());
        } else {
            match token.as_str() {
                "included" if !included => included = true,
                "pending" if !pending => pending = true,
                "executed" if !executed => executed = true,
                "included" | "pending" | "executed" => {
                    return Err(err(lineno, format!("duplicate flag {token:?}")));
                }
                other => return Err(err(lineno, format!("unknown event attribute {other:?}"))),
            }
        }
    }
    let executor = executor.ok_or_else(|| err(lineno, "event line needs executor=<hex>"))?;
    Ok(EventDecl {
        id,
        executor,
        included,
        pending,
        executed,
        name,
    })
}

fn parse_rel_line(tokens: &[String], lineno: usize) -> Result<RawRelation, ParseError> {
    if tokens.len() != 4 {
        return Err(err(lineno, "rel line must be `rel <src> <kind> <dst>`"));
    }
    let source = parse_event_id(&tokens[1], lineno)?;
    let kind = RelationKind::from_name(&tokens[2])
        .ok_or_else(|| err(lineno, format!("unknown relation kind {:?}", tokens[2])))?;
    let target = parse_event_id(&tokens[3], lineno)?;
    Ok(RawRelation {
        source,
        kind,
        target,
    })
}

impl GraphSpec {
    /// Parses the text format. Event ids must densely cover `1..=N`;
    /// relations must reference declared events and not repeat.
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

        let mut events: Vec<EventDecl> = Vec::new();
        let mut relations: Vec<RawRelation> = Vec::new();
        let mut seen_relations = BTreeSet::new();
        for (lineno, raw) in lines {
            let line = strip_comment(raw).trim().to_string();
            if line.is_empty() {
                continue;
            }
            let tokens = tokenize(&line, lineno)?;
            match tokens[0].as_str() {
                "event" => {
                    let decl = parse_event_line(&tokens, lineno)?;
                    if events.iter().any(|e| e.id == decl.id) {
                        return Err(err(lineno, format!("duplicate event {}", decl.id)));
                    }
                    events.push(decl);
                }
                "rel" => {
                    let rel = parse_rel_line(&tokens, lineno)?;
                    if !seen_relations.insert(rel) {
                        return Err(err(
                            lineno,
                            format!("duplicate relation {} {} {}", rel.source, rel.kind, rel.target),
                        ));
                    }
                    relations.push(rel);
                }
                other => return Err(err(lineno, format!("unknown directive {other:?}"))),
            }
        }

        // Ids must be exactly 1..=N.
        let mut ids: Vec<u16> = events.iter().map(|e| e.id).collect();
        ids.sort_unstable();
        for (idx, id) in ids.iter().enumerate() {
            if *id as usize != idx + 1 {
                return Err(err(
                    0,
                    format!(
                        "event ids must densely cover 1..={}, missing id {}",
                        events.len(),
                        idx + 1
                    ),
                ));
            }
        }
        let bound = events.len() as u16;
        for rel in &relations {
            for id in [rel.source, rel.target] {
                if id > bound {
                    return Err(err(
                        0,
                        format!("relation references undeclared event {id}"),
                    ));
                }
            }
        }
        events.sort_by_key(|e| e.id);
        Ok(GraphSpec { events, relations })
    }

    /// Canonical text form: header, events ascending, then relations in
    /// file order.
    pub fn print(&self) -> String {
        let mut out = String::from(HEADER);
        out.push('\n');
        for event in &self.events {
            out.push_str(&format!("event {} executor={}", event.id, event.executor.to_hex()));
            if event.included {
                out.push_str(" included");
            }
            if event.pending {
                out.push_str(" pending");
            }
            if event.executed {
                out.push_str(" executed");
            }
            if let Some(name) = &event.name {
                out.push_str(&format!(" name=\"{name}\""));
            }
            out.push('\n');
        }
        for rel in &self.relations {
            out.push_str(&format!("rel {} {} {}\n", rel.source, rel.kind, rel.target));
        }
        out
    }

    pub fn event_count(&self) -> usize {
        self.events.len()
    }

    /// Whether any event declares the `executed` flag (such a marking
    /// cannot be established by construction calls).
    pub fn has_executed_events(&self) -> bool {
        self.events.iter().any(|e| e.executed)
    }

    /// Converts to a validated reference graph, enforcing the on-chain
    /// capacity and marking rules.
    pub fn to_graph(&self, creator: AccountAddress) -> Result<DcrGraph, crate::dcr::DcrError> {
        if self.events.len() > crate::dcr::MAX_EVENTS as usize {
            return Err(crate::dcr::DcrError::TooManyEvents(self.events.len() as u64));
        }
        let mut marking = Marking::new(EventSet::empty(), EventSet::empty(), EventSet::empty());
        let mut executors = Vec::with_capacity(self.events.len());
        for decl in &self.events {
            let ev = EventId::new(decl.id as u8)?;
            if decl.included {
                marking.included.insert(ev);
            }
            if decl.pending {
                marking.pending.insert(ev);
            }
            if decl.executed {
                marking.executed.insert(ev);
            }
            executors.push(decl.executor);
        }
        let relations: Vec<Relation> = self
            .relations
            .iter()
            .map(|r| {
                Ok(Relation::new(
                    EventId::new(r.source as u8)?,
                    r.kind,
                    EventId::new(r.target as u8)?,
                ))
            })
            .collect::<Result<_, crate::dcr::DcrError>>()?;
        DcrGraph::new(
            self.events.len() as u8,
            &relations,
            marking,
            &executors,
            creator,
        )
    }

    /// Describes an existing graph (names are not stored on graphs, so
    /// the result carries none).
    pub fn from_graph(graph: &DcrGraph) -> Self {
        let events = graph
            .events()
            .map(|ev| EventDecl {
                id: ev.get() as u16,
                executor: graph.executor(ev).expect("event exists"),
                included: graph.marking().included.contains(ev),
                pending: graph.marking().pending.contains(ev),
                executed: graph.marking().executed.contains(ev),
                name: None,
            })
            .collect();
        let relations = graph
            .relations()
            .map(|r| RawRelation {
                source: r.source.get() as u16,
                kind: r.kind,
                target: r.target.get() as u16,
            })
            .collect();
        GraphSpec { events, relations }
    }
}
