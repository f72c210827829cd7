//! Text serialization of a whole simulated ledger, so CLI invocations
//! can persist chain state between commands.
//!
//! The format is line-oriented and canonical (saving any ledger twice
//! yields identical text):
//!
//! ```text
//! dcr-ledger v1
//! fee 1000
//! collected 3000
//! next-app 2
//! account <64 hex> balance <n> min-balance <n>
//! app <id> creator <64 hex> schema <gu> <gb> <lu> <lb>
//! storage <app-id> <index> <64 hex>
//! kv <app-id> global <key-hex> uint <n>
//! kv <app-id> global <key-hex> bytes <value-hex or «-»>
//! kv <app-id> local <index> <key-hex> bytes <value-hex or «-»>
//! ```
//!
//! Keys and values are hex because they are arbitrary bytes. Records are
//! flat and ordered: accounts by address, apps by id, storage accounts by
//! index, pairs by key.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use thiserror::Error;

use crate::addr::AccountAddress;
use crate::avm::{Account, AppSchema, AppState, Ledger, TealValue};

pub const HEADER: &str = "dcr-ledger v1";

#[derive(Debug, Error)]
pub enum LedgerFileError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
}

fn parse_err(line: usize, message: impl Into<String>) -> LedgerFileError {
    LedgerFileError::Parse {
        line,
        message: message.into(),
    }
}

fn encode_value(value: &TealValue) -> String {
    match value {
        TealValue::Uint(n) => format!("uint {n}"),
        TealValue::Bytes(b) if b.is_empty() => "bytes -".to_string(),
        TealValue::Bytes(b) => format!("bytes {}", hex::encode(b)),
    }
}

/// Renders a ledger in canonical text form.
pub fn save(ledger: &Ledger) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "{HEADER}");
    let _ = writeln!(out, "fee {}", ledger.flat_fee);
    let _ = writeln!(out, "collected {}", ledger.fees_collected);
    let _ = writeln!(out, "next-app {}", ledger.next_app_id);
    for (addr, account) in &ledger.accounts {
        let _ = writeln!(
            out,
            "account {} balance {} min-balance {}",
            addr.to_hex(),
            account.balance,
            account.min_balance
        );
    }
    for (app_id, app) in &ledger.apps {
        let _ = writeln!(
            out,
            "app {} creator {} schema {} {} {} {}",
            app_id,
            app.creator.to_hex(),
            app.schema.global_uints,
            app.schema.global_byteslices,
            app.schema.local_uints,
            app.schema.local_byteslices
        );
        for (index, addr) in app.storage_accounts.iter().enumerate() {
            let _ = writeln!(out, "storage {} {} {}", app_id, index, addr.to_hex());
        }
        for (key, value) in &app.global {
            let _ = writeln!(
                out,
                "kv {} global {} {}",
                app_id,
                hex::encode(key),
                encode_value(value)
            );
        }
        for (index, locals) in app.locals.iter().enumerate() {
            for (key, value) in locals {
                let _ = writeln!(
                    out,
                    "kv {} local {} {} {}",
                    app_id,
                    index,
                    hex::encode(key),
                    encode_value(value)
                );
            }
        }
    }
    out
}

struct LineParser<'a> {
    tokens: Vec<&'a str>,
    at: usize,
    line: usize,
}

impl<'a> LineParser<'a> {
    fn new(line_text: &'a str, line: usize) -> Self {
        LineParser {
            tokens: line_text.split_whitespace().collect(),
            at: 0,
            line,
        }
    }

    fn next(&mut self, what: &str) -> Result<&'a str, LedgerFileError> {
        let token = self
            .tokens
            .get(self.at)
            .ok_or_else(|| parse_err(self.line, format!("missing {what}")))?;
        self.at += 1;
        Ok(token)
    }

    fn number<T: std::str::FromStr>(&mut self, what: &str) -> Result<T, LedgerFileError> {
        let token = self.next(what)?;
        token
            .parse()
            .map_err(|_| parse_err(self.line, format!("bad {what} {token:?}")))
    }

    fn keyword(&mut self, expected: &str) -> Result<(), LedgerFileError> {
        let token = self.next(expected)?;
        if token != expected {
            return Err(parse_err(
                self.line,
                format!("expected {expected:?}, found {token:?}"),
            ));
        }
        Ok(())
    }

    fn address(&mut self, what: &str) -> Result<AccountAddress, LedgerFileError> {
        let token = self.next(what)?;
        AccountAddress::from_hex(token)
            .map_err(|e| parse_err(self.line, format!("bad {what}: {e}")))
    }

    fn hex_bytes(&mut self, what: &str) -> Result<Vec<u8>, LedgerFileError> {
        let token = self.next(what)?;
        if token == "-" {
            return Ok(Vec::new());
        }
        hex::decode(token).map_err(|e| parse_err(self.line, format!("bad {what}: {e}")))
    }

    fn value(&mut self) -> Result<TealValue, LedgerFileError> {
        let kind = self.next("value kind")?;
        match kind {
            "uint" => Ok(TealValue::Uint(self.number("uint value")?)),
            "bytes" => Ok(TealValue::Bytes(self.hex_bytes("byte value")?)),
            other => Err(parse_err(
                self.line,
                format!("unknown value kind {other:?}"),
            )),
        }
    }

    fn finish(&self) -> Result<(), LedgerFileError> {
        if self.at != self.tokens.len() {
            return Err(parse_err(
                self.line,
                format!("unexpected trailing token {:?}", self.tokens[self.at]),
            ));
        }
        Ok(())
    }
}

/// Parses the canonical text form back into a ledger.
pub fn load(text: &str) -> Result<Ledger, LedgerFileError> {
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l.trim()));
    match lines.by_ref().find(|(_, l)| !l.is_empty()) {
        Some((_, l)) if l == HEADER => {}
        Some((n, l)) => return Err(parse_err(n, format!("expected {HEADER:?}, found {l:?}"))),
        None => return Err(parse_err(1, format!("missing {HEADER:?} header"))),
    }

    let mut ledger = Ledger {
        accounts: BTreeMap::new(),
        apps: BTreeMap::new(),
        next_app_id: 1,
        fees_collected: 0,
        flat_fee: crate::avm::FLAT_FEE,
    };
    for (lineno, line_text) in lines {
        if line_text.is_empty() {
            continue;
        }
        let mut p = LineParser::new(line_text, lineno);
        match p.next("directive")? {
            "fee" => ledger.flat_fee = p.number("fee")?,
            "collected" => ledger.fees_collected = p.number("collected total")?,
            "next-app" => ledger.next_app_id = p.number("next app id")?,
            "account" => {
                let addr = p.address("account address")?;
                p.keyword("balance")?;
                let balance = p.number("balance")?;
                p.keyword("min-balance")?;
                let min_balance = p.number("min-balance")?;
                if ledger.accounts.contains_key(&addr) {
                    return Err(parse_err(lineno, format!("duplicate account {addr}")));
                }
                ledger.accounts.insert(
                    addr,
                    Account {
                        balance,
                        min_balance,
                    },
                );
            }
            "app" => {
                let app_id: u64 = p.number("app id")?;
                p.keyword("creator")?;
                let creator = p.address("creator")?;
                p.keyword("schema")?;
                let schema = AppSchema {
                    global_uints: p.number("schema global uints")?,
                    global_byteslices: p.number("schema global byteslices")?,
                    local_uints: p.number("schema local uints")?,
                    local_byteslices: p.number("schema local byteslices")?,
                };
                if ledger.apps.contains_key(&app_id) {
                    return Err(parse_err(lineno, format!("duplicate app {app_id}")));
                }
                ledger.apps.insert(
                    app_id,
                    AppState {
                        creator,
                        schema,
                        global: BTreeMap::new(),
                        storage_accounts: Vec::new(),
                        locals: Vec::new(),
                    },
                );
            }
            "storage" => {
                let app_id: u64 = p.number("app id")?;
                let index: usize = p.number("storage index")?;
                let addr = p.address("storage account")?;
                let app = ledger
                    .apps
                    .get_mut(&app_id)
                    .ok_or_else(|| parse_err(lineno, format!("unknown app {app_id}")))?;
                if index != app.storage_accounts.len() {
                    return Err(parse_err(
                        lineno,
                        format!(
                            "storage index {index} out of order (expected {})",
                            app.storage_accounts.len()
                        ),
                    ));
                }
                app.storage_accounts.push(addr);
                app.locals.push(BTreeMap::new());
            }
            "kv" => {
                let app_id: u64 = p.number("app id")?;
                let scope = p.next("scope")?;
                let (store_index, key) = match scope {
                    "global" => (None, p.hex_bytes("key")?),
                    "local" => {
                        let index: usize = p.number("storage index")?;
                        (Some(index), p.hex_bytes("key")?)
                    }
                    other => return Err(parse_err(lineno, format!("unknown scope {other:?}"))),
                };
                let value = p.value()?;
                let app = ledger
                    .apps
                    .get_mut(&app_id)
                    .ok_or_else(|| parse_err(lineno, format!("unknown app {app_id}")))?;
                let store = match store_index {
                    None => &mut app.global,
                    Some(index) => app.locals.get_mut(index).ok_or_else(|| {
                        parse_err(lineno, format!("no storage account {index}"))
                    })?,
                };
                if store.insert(key.clone(), value).is_some() {
                    return Err(parse_err(
                        lineno,
                        format!("duplicate pair {}", hex::encode(&key)),
                    ));
                }
            }
            other => return Err(parse_err(lineno, format!("unknown directive {other:?}"))),
        }
        p.finish()?;
    }
    Ok(ledger)
}

/// Loads a ledger from a file, or returns a fresh one if the path does
/// not exist yet (the CLI's starting state).
pub fn load_or_new(path: &Path) -> Result<Ledger, LedgerFileError> {
    if !path.exists() {
        return Ok(Ledger::new());
    }
    load(&std::fs::read_to_string(path)?)
}

/// Saves a ledger to a file.
pub fn save_to(path: &Path, ledger: &Ledger) -> Result<(), LedgerFileError> {
    Ok(std::fs::write(path, save(ledger))?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::avm::StorageScope;
    use crate::contract::{create_workflow, WorkflowProgram};

    fn populated_ledger() -> Ledger {
        let creator = AccountAddress::repeat(0xaa);
        let user = AccountAddress::repeat(0xbb);
        let mut ledger = Ledger::new();
        ledger.fund(creator, 10_000_000);
        ledger.fund(user, 10_000_000);
        let program = WorkflowProgram::new();
        let (app_id, _) = create_workflow(&mut ledger, creator, &program).unwrap();
        ledger.opt_in(user, app_id).unwrap();
        ledger
            .kv_write(
                app_id,
                StorageScope::Local { account: 0 },
                b"1_links",
                TealValue::Bytes(vec![0x50, 0x00]),
            )
            .unwrap();
        ledger
    }

    #[test]
    fn save_load_roundtrip_is_identical() {
        let ledger = populated_ledger();
        let text = save(&ledger);
        let loaded = load(&text).unwrap();
        assert_eq!(loaded, ledger);
        // Canonical: serializing again yields the same text.
        assert_eq!(save(&loaded), text);
    }

    #[test]
    fn empty_ledger_roundtrips() {
        let ledger = Ledger::new();
        assert_eq!(load(&save(&ledger)).unwrap(), ledger);
    }

    #[test]
    fn file_helpers_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("chain.ledger");
        // Missing file loads as a fresh ledger.
        assert_eq!(load_or_new(&path).unwrap(), Ledger::new());
        let ledger = populated_ledger();
        save_to(&path, &ledger).unwrap();
        assert_eq!(load_or_new(&path).unwrap(), ledger);
    }

    #[test]
    fn parse_errors_carry_line_numbers() {
        let addr = AccountAddress::repeat(1).to_hex();
        let cases: Vec<(String, usize, &str)> = vec![
            ("bogus\n".into(), 1, "expected"),
            ("".into(), 1, "missing"),
            (
                "dcr-ledger v1\naccount zz balance 1 min-balance 0\n".into(),
                2,
                "bad account address",
            ),
            (
                format!("dcr-ledger v1\naccount {addr} balance x min-balance 0\n"),
                2,
                "bad balance",
            ),
            (
                format!("dcr-ledger v1\nstorage 1 0 {addr}\n"),
                2,
                "unknown app 1",
            ),
            (
                format!(
                    "dcr-ledger v1\napp 1 creator {addr} schema 1 63 0 16\nstorage 1 1 {addr}\n"
                ),
                3,
                "out of order",
            ),
            (
                format!("dcr-ledger v1\napp 1 creator {addr} schema 1 63 0 16\nkv 1 global 4d4b floats 1\n"),
                3,
                "unknown value kind",
            ),
            (
                format!("dcr-ledger v1\napp 1 creator {addr} schema 1 63 0 16\nkv 1 local 0 4d4b uint 1\n"),
                3,
                "no storage account 0",
            ),
            (
                format!("dcr-ledger v1\naccount {addr} balance 1 min-balance 0 extra\n"),
                2,
                "trailing token",
            ),
            (
                format!(
                    "dcr-ledger v1\naccount {addr} balance 1 min-balance 0\naccount {addr} balance 1 min-balance 0\n"
                ),
                3,
                "duplicate account",
            ),
        ];
        for (text, line, needle) in cases {
            match load(&text) {
                Err(LedgerFileError::Parse { line: l, message }) => {
                    assert_eq!(l, line, "{text:?} -> {message}");
                    assert!(message.contains(needle), "{text:?} -> {message}");
                }
                other => panic!("{text:?}: expected parse error, got {other:?}"),
            }
        }
    }

    #[test]
    fn snapshots_decode_from_loaded_ledgers() {
        // A saved ledger still supports graph snapshotting after reload.
        use crate::contract::{snapshot_graph, testkit::deploy_graph};
        use crate::dcr::fixtures::mortgage;
        let reference = mortgage();
        let mut ledger = Ledger::new();
        let program = WorkflowProgram::new();
        let (app_id, _) = deploy_graph(&mut ledger, &reference, &program);
        let reloaded = load(&save(&ledger)).unwrap();
        assert_eq!(snapshot_graph(&reloaded, app_id).unwrap(), reference);
    }
}
