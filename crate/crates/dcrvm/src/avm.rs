//! A small simulated ledger with resource-metered application calls.
//!
//! The model keeps the handful of rules the rest of the crate depends on:
//!
//! * key/value stores with per-kind schema quotas (64 global pairs, and up
//!   to four opted-in storage accounts of 16 local pairs each),
//! * a 128-byte ceiling on each key + value combination,
//! * a 700-operation budget per call,
//! * a flat 1,000 microalgo fee per transaction, charged whether or not
//!   the call is approved,
//! * atomic rollback: a rejected call leaves the ledger untouched except
//!   for the fee,
//! * minimum-balance escrow that accrues as pairs are created — 100,000
//!   for deploying an app (on the creator), 100,000 for opting an account
//!   in (on that account), and 28,500 / 50,000 per uint / byteslice pair
//!   (on whichever account hosts the pair) — and is released when pairs or
//!   the app are deleted.
//!
//! Programs are passed to each call rather than stored in the ledger; the
//! ledger holds state only, the way a chain holds compiled code it cannot
//! introspect.

use std::collections::BTreeMap;

use thiserror::Error;

use crate::addr::{AccountAddress, ADDRESS_LEN};

pub const OP_BUDGET: u64 = 700;
pub const FLAT_FEE: u64 = 1_000;

/// Minimum-balance escrow rates, in microalgos.
pub const APP_BASE_ESCROW: u64 = 100_000;
pub const OPTIN_BASE_ESCROW: u64 = 100_000;
pub const UINT_PAIR_ESCROW: u64 = 28_500;
pub const BYTES_PAIR_ESCROW: u64 = 50_000;

/// Store geometry and per-call reference limits.
pub const MAX_GLOBAL_PAIRS: u32 = 64;
pub const MAX_LOCAL_PAIRS: u32 = 16;
pub const MAX_STORAGE_ACCOUNTS: usize = 4;
pub const MAX_KEY_VALUE_BYTES: usize = 128;
pub const MAX_CALL_ARGS: usize = 16;
pub const MAX_FOREIGN_ACCOUNTS: usize = 4;

pub type AppId = u64;

/// A stored value: an unsigned integer or a byte slice.
#[derive(Clone, PartialEq, Eq, Debug)]
pub enum TealValue {
    Uint(u64),
    Bytes(Vec<u8>),
}

impl TealValue {
    fn kind(&self) -> ValueKind {
        match self {
            TealValue::Uint(_) => ValueKind::Uint,
            TealValue::Bytes(_) => ValueKind::Bytes,
        }
    }

    /// Bytes this value occupies against the 128-byte pair ceiling.
    fn stored_len(&self) -> usize {
        match self {
            TealValue::Uint(_) => 8,
            TealValue::Bytes(b) => b.len(),
        }
    }

    /// Escrow locked by a pair holding this value.
    pub fn pair_escrow(&self) -> u64 {
        match self {
            TealValue::Uint(_) => UINT_PAIR_ESCROW,
            TealValue::Bytes(_) => BYTES_PAIR_ESCROW,
        }
    }
}

impl std::fmt::Display for TealValue {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            TealValue::Uint(n) => write!(f, "{n}"),
            TealValue::Bytes(b) if b.is_empty() => write!(f, "-"),
            TealValue::Bytes(b) => write!(f, "{}", hex::encode(b)),
        }
    }
}

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
enum ValueKind {
    Uint,
    Bytes,
}

/// Which store a pair lives in: the app's global store or one of its
/// opted-in storage accounts (by opt-in order).
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Debug)]
pub enum StorageScope {
    Global,
    Local { account: u8 },
}

impl std::fmt::Display for StorageScope {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            StorageScope::Global => write!(f, "global"),
            StorageScope::Local { account } => write!(f, "local[{account}]"),
        }
    }
}

/// Declared store quotas, fixed at deploy time.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub struct AppSchema {
    pub global_uints: u32,
    pub global_byteslices: u32,
    pub local_uints: u32,
    pub local_byteslices: u32,
}

#[derive(Clone, Copy, PartialEq, Eq, Debug, Default)]
pub struct Account {
    pub balance: u64,
    pub min_balance: u64,
}

type KvStore = BTreeMap<Vec<u8>, TealValue>;

#[derive(Clone, PartialEq, Eq, Debug)]
pub struct AppState {
    pub creator: AccountAddress,
    pub schema: AppSchema,
    pub global: KvStore,
    /// Opted-in storage accounts, in opt-in order.
    pub storage_accounts: Vec<AccountAddress>,
    /// Local stores, parallel to `storage_accounts`.
    pub locals: Vec<KvStore>,
}

/// Errors raised by the store while a program runs; they reject the call.
#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum StorageError {
    #[error("store is at its schema quota for this value kind")]
    SchemaFull,
    #[error("key ({key} bytes) + value ({value} bytes) exceeds {MAX_KEY_VALUE_BYTES} bytes")]
    KeyValueTooLong { key: usize, value: usize },
    #[error("key not found")]
    MissingKey,
    #[error("no storage account at index {index}")]
    NoSuchStorageAccount { index: u8 },
    #[error("storage account {index} is not in the call's foreign account array")]
    ForeignAccountMissing { index: u8 },
    #[error("escrow requires {required} microalgos but only {available} are available")]
    InsufficientBalance { required: u64, available: u64 },
    #[error("existing value has a different kind")]
    ValueKindMismatch,
}

/// Why a call was rejected. The ledger rolls back; the fee stands.
#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum Reject {
    #[error("operation budget exhausted: {spent} of {budget}")]
    Budget { spent: u64, budget: u64 },
    #[error(transparent)]
    Storage(#[from] StorageError),
    #[error("{code}: {detail}")]
    Logic { code: &'static str, detail: String },
}

impl Reject {
    /// Stable short code for reporting and differential comparison.
    pub fn code(&self) -> &'static str {
        match self {
            Reject::Budget { .. } => "budget",
            Reject::Storage(_) => "storage",
            Reject::Logic { code, .. } => code,
        }
    }
}

/// Errors that prevent a transaction from even entering the ledger.
#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum AvmError {
    #[error("no application with id {0}")]
    UnknownApp(AppId),
    #[error("account is already opted in")]
    AlreadyOptedIn,
    #[error("application already has {MAX_STORAGE_ACCOUNTS} storage accounts")]
    StorageAccountsFull,
    #[error("schema exceeds {MAX_GLOBAL_PAIRS} global or {MAX_LOCAL_PAIRS} local pairs")]
    SchemaTooLarge,
    #[error("fee of {fee} microalgos unpayable from {available} available")]
    FeeUnpayable { fee: u64, available: u64 },
    #[error("call carries {0} arguments, limit {MAX_CALL_ARGS}")]
    TooManyArgs(usize),
    #[error("call references {0} accounts, limit {MAX_FOREIGN_ACCOUNTS}")]
    TooManyAccounts(usize),
    #[error("only the application creator may do this")]
    NotCreator,
}

/// Counts operations a call has spent against its budget.
#[derive(Clone, Copy, Debug)]
pub struct OpMeter {
    spent: u64,
    budget: u64,
}

impl OpMeter {
    pub fn new(budget: u64) -> Self {
        OpMeter { spent: 0, budget }
    }

    pub fn charge(&mut self, amount: u64) -> Result<(), Reject> {
        self.spent = self.spent.saturating_add(amount);
        if self.spent > self.budget {
            Err(Reject::Budget {
                spent: self.spent,
                budget: self.budget,
            })
        } else {
            Ok(())
        }
    }

    pub fn spent(&self) -> u64 {
        self.spent
    }
}

/// Application code. The ledger never stores programs; callers supply the
/// program with every transaction, mirroring code the chain executes but
/// the state model does not contain.
pub trait Program {
    fn on_create(&self, ctx: &mut CallContext<'_, '_>) -> Result<(), Reject>;
    fn on_call(&self, ctx: &mut CallContext<'_, '_>) -> Result<(), Reject>;
}

/// Who pays the flat fee for a call.
#[derive(Clone, Copy, PartialEq, Eq, Debug, Default)]
pub enum FeePayer {
    #[default]
    Sender,
    /// The application's own derived account (it must be funded first).
    AppAccount,
}

/// One application-call transaction.
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct AppCall {
    pub sender: AccountAddress,
    pub app_id: AppId,
    pub args: Vec<Vec<u8>>,
    /// Foreign accounts whose local stores the call may touch.
    pub accounts: Vec<AccountAddress>,
    pub fee_payer: FeePayer,
}

impl AppCall {
    pub fn new(sender: AccountAddress, app_id: AppId) -> Self {
        AppCall {
            sender,
            app_id,
            args: Vec::new(),
            accounts: Vec::new(),
            fee_payer: FeePayer::Sender,
        }
    }

    pub fn with_args(mut self, args: Vec<Vec<u8>>) -> Self {
        self.args = args;
        self
    }

    pub fn with_accounts(mut self, accounts: Vec<AccountAddress>) -> Self {
        self.accounts = accounts;
        self
    }
}

/// One observed key/value change made by an approved call.
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct KvChange {
    pub scope: StorageScope,
    pub key: Vec<u8>,
    pub old: Option<TealValue>,
    pub new: Option<TealValue>,
}

/// Outcome of a transaction that entered the ledger.
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct CallResult {
    pub approved: bool,
    pub reject: Option<Reject>,
    pub ops_used: u64,
    pub state_delta: Vec<KvChange>,
    pub fee_paid: u64,
}

/// The runtime environment a program sees while handling one call.
pub struct CallContext<'l, 'c> {
    ledger: &'l mut Ledger,
    app_id: AppId,
    sender: AccountAddress,
    args: &'c [Vec<u8>],
    accounts: &'c [AccountAddress],
    meter: OpMeter,
}

impl CallContext<'_, '_> {
    pub fn sender(&self) -> AccountAddress {
        self.sender
    }

    pub fn args(&self) -> &[Vec<u8>] {
        self.args
    }

    pub fn arg(&self, index: usize) -> Option<&[u8]> {
        self.args.get(index).map(Vec::as_slice)
    }

    pub fn app_id(&self) -> AppId {
        self.app_id
    }

    pub fn app_creator(&self) -> AccountAddress {
        self.ledger.apps[&self.app_id].creator
    }

    /// Charges `amount` operations of pure computation.
    pub fn charge(&mut self, amount: u64) -> Result<(), Reject> {
        self.meter.charge(amount)
    }

    pub fn ops_used(&self) -> u64 {
        self.meter.spent()
    }

    /// Enforces the foreign-account rule: a local store may be touched
    /// only if its account is the sender or listed in the call.
    fn check_foreign(&self, scope: StorageScope) -> Result<(), StorageError> {
        let StorageScope::Local { account } = scope else {
            return Ok(());
        };
        let app = &self.ledger.apps[&self.app_id];
        let addr = *app
            .storage_accounts
            .get(account as usize)
            .ok_or(StorageError::NoSuchStorageAccount { index: account })?;
        if addr == self.sender || self.accounts.contains(&addr) {
            Ok(())
        } else {
            Err(StorageError::ForeignAccountMissing { index: account })
        }
    }

    /// Reads a value. Charges one operation.
    pub fn read(&mut self, scope: StorageScope, key: &[u8]) -> Result<TealValue, Reject> {
        self.meter.charge(1)?;
        self.check_foreign(scope)?;
        Ok(self
            .ledger
            .kv_read(self.app_id, scope, key)
            .ok_or(StorageError::MissingKey)?
            .clone())
    }

    pub fn read_uint(&mut self, scope: StorageScope, key: &[u8]) -> Result<u64, Reject> {
        match self.read(scope, key)? {
            TealValue::Uint(n) => Ok(n),
            TealValue::Bytes(_) => Err(StorageError::ValueKindMismatch.into()),
        }
    }

    pub fn read_bytes(&mut self, scope: StorageScope, key: &[u8]) -> Result<Vec<u8>, Reject> {
        match self.read(scope, key)? {
            TealValue::Bytes(b) => Ok(b),
            TealValue::Uint(_) => Err(StorageError::ValueKindMismatch.into()),
        }
    }

    /// Writes a value. Charges one operation; creating a pair accrues its
    /// escrow on the hosting account.
    pub fn write(
        &mut self,
        scope: StorageScope,
        key: &[u8],
        value: TealValue,
    ) -> Result<(), Reject> {
        self.meter.charge(1)?;
        self.check_foreign(scope)?;
        Ok(self.ledger.kv_write(self.app_id, scope, key, value)?)
    }

    /// Deletes a pair, releasing its escrow. Charges one operation.
    pub fn delete(&mut self, scope: StorageScope, key: &[u8]) -> Result<(), Reject> {
        self.meter.charge(1)?;
        self.check_foreign(scope)?;
        Ok(self.ledger.kv_delete(self.app_id, scope, key)?)
    }
}

/// The simulated chain: accounts, applications, and collected fees.
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct Ledger {
    pub(crate) accounts: BTreeMap<AccountAddress, Account>,
    pub(crate) apps: BTreeMap<AppId, AppState>,
    pub(crate) next_app_id: AppId,
    pub(crate) fees_collected: u64,
    pub(crate) flat_fee: u64,
}

impl Default for Ledger {
    fn default() -> Self {
        Ledger::new()
    }
}

/// Deterministic pseudo-address owned by an application.
pub fn app_address(app_id: AppId) -> AccountAddress {
    let mut bytes = [0u8; ADDRESS_LEN];
    bytes[..24].copy_from_slice(b"dcrvm-application-escrow");
    bytes[24..].copy_from_slice(&app_id.to_be_bytes());
    AccountAddress::new(bytes)
}

impl Ledger {
    pub fn new() -> Self {
        Ledger {
            accounts: BTreeMap::new(),
            apps: BTreeMap::new(),
            next_app_id: 1,
            fees_collected: 0,
            flat_fee: FLAT_FEE,
        }
    }

    /// Faucet: mints `amount` microalgos onto `addr`.
    pub fn fund(&mut self, addr: AccountAddress, amount: u64) {
        self.accounts.entry(addr).or_default().balance += amount;
    }

    pub fn account(&self, addr: AccountAddress) -> Option<Account> {
        self.accounts.get(&addr).copied()
    }

    pub fn app(&self, app_id: AppId) -> Option<&AppState> {
        self.apps.get(&app_id)
    }

    /// The most recently deployed application still on the ledger.
    pub fn latest_app(&self) -> Option<AppId> {
        self.apps.keys().next_back().copied()
    }

    pub fn flat_fee(&self) -> u64 {
        self.flat_fee
    }

    pub fn fees_collected(&self) -> u64 {
        self.fees_collected
    }

    /// Sum of all balances plus collected fees. Invariant under every
    /// operation except [`Ledger::fund`], which mints.
    pub fn total_microalgos(&self) -> u64 {
        self.accounts.values().map(|a| a.balance).sum::<u64>() + self.fees_collected
    }

    /// Escrow currently locked for an app across every hosting account.
    pub fn app_escrow(&self, app_id: AppId) -> Option<u64> {
        let app = self.apps.get(&app_id)?;
        let mut total = APP_BASE_ESCROW;
        total += app.global.values().map(TealValue::pair_escrow).sum::<u64>();
        for locals in &app.locals {
            total += OPTIN_BASE_ESCROW;
            total += locals.values().map(TealValue::pair_escrow).sum::<u64>();
        }
        Some(total)
    }

    fn can_pay_fee(&self, payer: AccountAddress) -> Result<(), AvmError> {
        let acct = self.accounts.get(&payer).copied().unwrap_or_default();
        if acct.balance >= self.flat_fee && acct.balance - self.flat_fee >= acct.min_balance {
            Ok(())
        } else {
            Err(AvmError::FeeUnpayable {
                fee: self.flat_fee,
                available: acct.balance,
            })
        }
    }

    fn apply_fee(&mut self, payer: AccountAddress) {
        let acct = self.accounts.entry(payer).or_default();
        acct.balance -= self.flat_fee;
        self.fees_collected += self.flat_fee;
    }

    fn accrue_escrow(&mut self, addr: AccountAddress, amount: u64) -> Result<(), StorageError> {
        let acct = self.accounts.get(&addr).copied().unwrap_or_default();
        if acct.min_balance + amount > acct.balance {
            return Err(StorageError::InsufficientBalance {
                required: acct.min_balance + amount,
                available: acct.balance,
            });
        }
        self.accounts.entry(addr).or_default().min_balance += amount;
        Ok(())
    }

    fn release_escrow(&mut self, addr: AccountAddress, amount: u64) {
        let acct = self.accounts.entry(addr).or_default();
        debug_assert!(acct.min_balance >= amount, "released more than accrued");
        acct.min_balance = acct.min_balance.saturating_sub(amount);
    }

    /// Reads a pair directly, without metering. Returns `None` for a
    /// missing key or storage account.
    ///
    /// # Panics
    /// If the app does not exist.
    pub fn kv_read(&self, app_id: AppId, scope: StorageScope, key: &[u8]) -> Option<&TealValue> {
        let app = self.apps.get(&app_id).expect("unknown app");
        match scope {
            StorageScope::Global => app.global.get(key),
            StorageScope::Local { account } => app.locals.get(account as usize)?.get(key),
        }
    }

    /// Writes a pair directly, without metering, fees, or the foreign
    /// account rule — the mechanism programs build on, also usable to
    /// craft ledger states in tests. Enforces size, schema, value-kind,
    /// and escrow rules.
    ///
    /// # Panics
    /// If the app does not exist.
    pub fn kv_write(
        &mut self,
        app_id: AppId,
        scope: StorageScope,
        key: &[u8],
        value: TealValue,
    ) -> Result<(), StorageError> {
        if key.len() + value.stored_len() > MAX_KEY_VALUE_BYTES {
            return Err(StorageError::KeyValueTooLong {
                key: key.len(),
                value: value.stored_len(),
            });
        }
        let app = self.apps.get(&app_id).expect("unknown app");
        let (store, owner, quota_uints, quota_bytes) = match scope {
            StorageScope::Global => (
                &app.global,
                app.creator,
                app.schema.global_uints,
                app.schema.global_byteslices,
            ),
            StorageScope::Local { account } => {
                let idx = account as usize;
                let owner = *app
                    .storage_accounts
                    .get(idx)
                    .ok_or(StorageError::NoSuchStorageAccount { index: account })?;
                (
                    &app.locals[idx],
                    owner,
                    app.schema.local_uints,
                    app.schema.local_byteslices,
                )
            }
        };
        match store.get(key) {
            Some(existing) if existing.kind() != value.kind() => {
                return Err(StorageError::ValueKindMismatch);
            }
            Some(_) => {} // Overwrite: quota and escrow unchanged.
            None => {
                let used = store
                    .values()
                    .filter(|v| v.kind() == value.kind())
                    .count() as u32;
                let quota = match value.kind() {
                    ValueKind::Uint => quota_uints,
                    ValueKind::Bytes => quota_bytes,
                };
                if used >= quota {
                    return Err(StorageError::SchemaFull);
                }
                self.accrue_escrow(owner, value.pair_escrow())?;
            }
        }
        let app = self.apps.get_mut(&app_id).expect("unknown app");
        let store = match scope {
            StorageScope::Global => &mut app.global,
            StorageScope::Local { account } => &mut app.locals[account as usize],
        };
        store.insert(key.to_vec(), value);
        Ok(())
    }

    /// Deletes a pair directly, releasing its escrow.
    ///
    /// # Panics
    /// If the app does not exist.
    pub fn kv_delete(
        &mut self,
        app_id: AppId,
        scope: StorageScope,
        key: &[u8],
    ) -> Result<(), StorageError> {
        let app = self.apps.get_mut(&app_id).expect("unknown app");
        let (store, owner) = match scope {
            StorageScope::Global => (&mut app.global, app.creator),
            StorageScope::Local { account } => {
                let idx = account as usize;
                let owner = *app
                    .storage_accounts
                    .get(idx)
                    .ok_or(StorageError::NoSuchStorageAccount { index: account })?;
                (&mut app.locals[idx], owner)
            }
        };
        let removed = store.remove(key).ok_or(StorageError::MissingKey)?;
        self.release_escrow(owner, removed.pair_escrow());
        Ok(())
    }

    /// Deploys an application: runs `program.on_create` under the op
    /// budget. On rejection the ledger rolls back (including the app id
    /// counter) and only the fee stands.
    pub fn deploy_app(
        &mut self,
        creator: AccountAddress,
        schema: AppSchema,
        program: &dyn Program,
    ) -> Result<(AppId, CallResult), AvmError> {
        if schema.global_uints + schema.global_byteslices > MAX_GLOBAL_PAIRS
            || schema.local_uints + schema.local_byteslices > MAX_LOCAL_PAIRS
        {
            return Err(AvmError::SchemaTooLarge);
        }
        self.can_pay_fee(creator)?;
        let snapshot = self.clone();
        self.apply_fee(creator);
        let app_id = self.next_app_id;
        self.next_app_id += 1;
        self.apps.insert(
            app_id,
            AppState {
                creator,
                schema,
                global: BTreeMap::new(),
                storage_accounts: Vec::new(),
                locals: Vec::new(),
            },
        );
        let mut ops_used = 0;
        let outcome = match self.accrue_escrow(creator, APP_BASE_ESCROW) {
            Err(e) => Err(Reject::Storage(e)),
            Ok(()) => {
                let mut ctx = CallContext {
                    ledger: self,
                    app_id,
                    sender: creator,
                    args: &[],
                    accounts: &[],
                    meter: OpMeter::new(OP_BUDGET),
                };
                let outcome = program.on_create(&mut ctx);
                ops_used = ctx.meter.spent();
                outcome
            }
        };
        Ok((app_id, self.settle(snapshot, creator, app_id, ops_used, outcome)))
    }

    /// Runs one application call. Never mutates the ledger on rejection,
    /// beyond charging the fee.
    pub fn app_call(
        &mut self,
        program: &dyn Program,
        call: &AppCall,
    ) -> Result<CallResult, AvmError> {
        if !self.apps.contains_key(&call.app_id) {
            return Err(AvmError::UnknownApp(call.app_id));
        }
        if call.args.len() > MAX_CALL_ARGS {
            return Err(AvmError::TooManyArgs(call.args.len()));
        }
        if call.accounts.len() > MAX_FOREIGN_ACCOUNTS {
            return Err(AvmError::TooManyAccounts(call.accounts.len()));
        }
        let payer = match call.fee_payer {
            FeePayer::Sender => call.sender,
            FeePayer::AppAccount => app_address(call.app_id),
        };
        self.can_pay_fee(payer)?;
        let snapshot = self.clone();
        self.apply_fee(payer);
        let mut ctx = CallContext {
            ledger: self,
            app_id: call.app_id,
            sender: call.sender,
            args: &call.args,
            accounts: &call.accounts,
            meter: OpMeter::new(OP_BUDGET),
        };
        let outcome = program.on_call(&mut ctx);
        let ops_used = ctx.meter.spent();
        Ok(self.settle(snapshot, payer, call.app_id, ops_used, outcome))
    }

    /// Dry-runs a call against a copy of the ledger.
    pub fn simulate_call(
        &self,
        program: &dyn Program,
        call: &AppCall,
    ) -> Result<CallResult, AvmError> {
        self.clone().app_call(program, call)
    }

    /// Opts `account` in as the app's next storage account, locking the
    /// opt-in escrow on it.
    pub fn opt_in(
        &mut self,
        account: AccountAddress,
        app_id: AppId,
    ) -> Result<CallResult, AvmError> {
        let app = self.apps.get(&app_id).ok_or(AvmError::UnknownApp(app_id))?;
        if app.storage_accounts.contains(&account) {
            return Err(AvmError::AlreadyOptedIn);
        }
        if app.storage_accounts.len() >= MAX_STORAGE_ACCOUNTS {
            return Err(AvmError::StorageAccountsFull);
        }
        self.can_pay_fee(account)?;
        let snapshot = self.clone();
        self.apply_fee(account);
        let app = self.apps.get_mut(&app_id).expect("checked above");
        app.storage_accounts.push(account);
        app.locals.push(BTreeMap::new());
        let outcome = self
            .accrue_escrow(account, OPTIN_BASE_ESCROW)
            .map_err(Reject::Storage);
        Ok(self.settle(snapshot, account, app_id, 0, outcome))
    }

    /// Deletes an app, releasing every microalgo of escrow it holds on
    /// the creator and on all storage accounts. Creator only.
    pub fn delete_app(
        &mut self,
        sender: AccountAddress,
        app_id: AppId,
    ) -> Result<CallResult, AvmError> {
        let app = self.apps.get(&app_id).ok_or(AvmError::UnknownApp(app_id))?;
        if app.creator != sender {
            return Err(AvmError::NotCreator);
        }
        self.can_pay_fee(sender)?;
        self.apply_fee(sender);
        let app = self.apps.remove(&app_id).expect("checked above");
        let global_escrow: u64 = app.global.values().map(TealValue::pair_escrow).sum();
        self.release_escrow(app.creator, APP_BASE_ESCROW + global_escrow);
        for (addr, locals) in app.storage_accounts.iter().zip(&app.locals) {
            let local_escrow: u64 = locals.values().map(TealValue::pair_escrow).sum();
            self.release_escrow(*addr, OPTIN_BASE_ESCROW + local_escrow);
        }
        Ok(CallResult {
            approved: true,
            reject: None,
            ops_used: 0,
            state_delta: Vec::new(),
            fee_paid: self.flat_fee,
        })
    }

    /// Finalizes a call: on approval, diffs the app's stores against the
    /// snapshot; on rejection, restores the snapshot and re-applies the
    /// fee so it is the only difference.
    fn settle(
        &mut self,
        snapshot: Ledger,
        payer: AccountAddress,
        app_id: AppId,
        ops_used: u64,
        outcome: Result<(), Reject>,
    ) -> CallResult {
        match outcome {
            Ok(()) => {
                let state_delta = diff_app(snapshot.apps.get(&app_id), self.apps.get(&app_id));
                CallResult {
                    approved: true,
                    reject: None,
                    ops_used,
                    state_delta,
                    fee_paid: self.flat_fee,
                }
            }
            Err(reject) => {
                *self = snapshot;
                self.apply_fee(payer);
                CallResult {
                    approved: false,
                    reject: Some(reject),
                    ops_used,
                    state_delta: Vec::new(),
                    fee_paid: self.flat_fee,
                }
            }
        }
    }
}

/// Ordered key/value differences between two snapshots of one app.
fn diff_app(before: Option<&AppState>, after: Option<&AppState>) -> Vec<KvChange> {
    fn store_of<'a>(
        app: Option<&'a AppState>,
        scope: StorageScope,
        empty: &'a KvStore,
    ) -> &'a KvStore {
        match (app, scope) {
            (None, _) => empty,
            (Some(a), StorageScope::Global) => &a.global,
            (Some(a), StorageScope::Local { account }) => {
                a.locals.get(account as usize).unwrap_or(empty)
            }
        }
    }
    let empty = KvStore::new();
    let locals_len = before
        .map_or(0, |a| a.locals.len())
        .max(after.map_or(0, |a| a.locals.len()));
    let mut scopes = vec![StorageScope::Global];
    scopes.extend((0..locals_len).map(|i| StorageScope::Local { account: i as u8 }));

    let mut changes = Vec::new();
    for scope in scopes {
        let old_store = store_of(before, scope, &empty);
        let new_store = store_of(after, scope, &empty);
        let keys: std::collections::BTreeSet<&Vec<u8>> =
            old_store.keys().chain(new_store.keys()).collect();
        for key in keys {
            let old = old_store.get(key).cloned();
            let new = new_store.get(key).cloned();
            if old != new {
                changes.push(KvChange {
                    scope,
                    key: key.clone(),
                    old,
                    new,
                });
            }
        }
    }
    changes
}
