//! Deployment and execution economics: flat fees, minimum-balance escrow
//! growth, and a cost comparison against a gas-priced baseline chain.
//!
//! All money arithmetic is exact integer math. Microalgos stay `u64`;
//! USD amounts live in femto-USD (`10^-15`) so that both conversion paths
//! are products of integers: microalgos x (micro-USD per algo) x 1000,
//! and gwei x (micro-USD per ETH). Rounding happens only at display time
//! (5 decimal places, half-even).

use thiserror::Error;

use crate::avm::{
    APP_BASE_ESCROW, BYTES_PAIR_ESCROW, FLAT_FEE, OPTIN_BASE_ESCROW, UINT_PAIR_ESCROW,
};
use crate::dcr::MAX_EVENTS;
use crate::encoding::{pairs_for_events, MAX_GLOBAL_PAIRS, MAX_LOCAL_PAIRS};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum CostError {
    #[error("event count {0} exceeds the {MAX_EVENTS}-event capacity")]
    OutOfRange(u64),
    #[error("bad USD rate {0:?}: expected a decimal with at most 6 fractional digits")]
    BadRate(String),
}

/// USD per algo, stored as micro-USD for exactness.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Debug)]
pub struct UsdRate(u64);

/// The benchmark's published conversion rate: 1 algo = 1.36 USD.
pub const DEFAULT_RATE: UsdRate = UsdRate(1_360_000);

impl UsdRate {
    pub fn from_micro(micro: u64) -> Self {
        UsdRate(micro)
    }

    pub fn micro(self) -> u64 {
        self.0
    }

    /// Parses a decimal like `"1.36"` exactly (at most 6 fractional
    /// digits, no exponents).
    pub fn parse(s: &str) -> Result<Self, CostError> {
        let bad = || CostError::BadRate(s.to_string());
        let (whole, frac) = match s.split_once('.') {
            Some((_, "")) => return Err(bad()),
            Some((w, f)) => (w, f),
            None => (s, ""),
        };
        if whole.is_empty()
            || frac.len() > 6
            || !whole.bytes().all(|b| b.is_ascii_digit())
            || !frac.bytes().all(|b| b.is_ascii_digit())
        {
            return Err(bad());
        }
        let whole: u64 = whole.parse().map_err(|_| bad())?;
        let mut frac_micro = 0u64;
        for (i, b) in frac.bytes().enumerate() {
            frac_micro += (b - b'0') as u64 * 10u64.pow(5 - i as u32);
        }
        whole
            .checked_mul(1_000_000)
            .and_then(|w| w.checked_add(frac_micro))
            .map(UsdRate)
            .ok_or_else(bad)
    }
}

impl std::str::FromStr for UsdRate {
    type Err = CostError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        UsdRate::parse(s)
    }
}

impl std::fmt::Display for UsdRate {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", format_scaled(self.0 as u128, 6))
    }
}

/// An exact USD amount in femto-USD (`10^-15` USD).
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Debug, Default)]
pub struct Usd(u128);

impl Usd {
    pub fn from_femto(femto: u128) -> Self {
        Usd(femto)
    }

    pub fn femto(self) -> u128 {
        self.0
    }

    pub fn from_microalgos(microalgos: u64, rate: UsdRate) -> Self {
        Usd(microalgos as u128 * rate.micro() as u128 * 1_000)
    }

    pub fn from_gwei(gwei: u64, usd_per_eth_micro: u64) -> Self {
        Usd(gwei as u128 * usd_per_eth_micro as u128)
    }
}

impl std::fmt::Display for Usd {
    /// Five decimal places, ties rounded half-even.
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        const UNIT: u128 = 10_000_000_000; // femto-USD per 10^-5 USD
        let mut q = self.0 / UNIT;
        let r = self.0 % UNIT;
        if r > UNIT / 2 || (r == UNIT / 2 && q % 2 == 1) {
            q += 1;
        }
        write!(f, "{}.{:05}", q / 100_000, q % 100_000)
    }
}

/// Renders `value / 10^scale` as a decimal with trailing zeros trimmed.
fn format_scaled(value: u128, scale: u32) -> String {
    let base = 10u128.pow(scale);
    let whole = value / base;
    let frac = value % base;
    if frac == 0 {
        return whole.to_string();
    }
    let mut s = format!("{whole}.{frac:0width$}", width = scale as usize);
    while s.ends_with('0') {
        s.pop();
    }
    s
}

/// Renders microalgos as algos, e.g. `748500` -> `"0.7485"`.
pub fn format_algos(microalgos: u64) -> String {
    format_scaled(microalgos as u128, 6)
}

/// Renders gwei as ETH, e.g. `107656350` -> `"0.10765635"`.
pub fn format_eth(gwei: u64) -> String {
    format_scaled(gwei as u128, 9)
}

fn check_event_count(event_count: u64) -> Result<u8, CostError> {
    if event_count > MAX_EVENTS as u64 {
        return Err(CostError::OutOfRange(event_count));
    }
    Ok(event_count as u8)
}

/// Escrow locked on the creator for the global store of a graph with
/// `event_count` tracked events: the app base, one uint pair (the event
/// count), and up to 63 byteslice pairs.
pub fn escrow_global(event_count: u64) -> Result<u64, CostError> {
    let n = check_event_count(event_count)? as u64;
    let byteslices = (2 * n + 2).min(MAX_GLOBAL_PAIRS as u64 - 1);
    Ok(APP_BASE_ESCROW + UINT_PAIR_ESCROW + BYTES_PAIR_ESCROW * byteslices)
}

/// Escrow locked on each storage account, in opt-in order: the opt-in
/// base plus one byteslice pair per hosted pair.
pub fn escrow_local_schedule(event_count: u64) -> Result<Vec<u64>, CostError> {
    let n = check_event_count(event_count)?;
    let mut overflow = pairs_for_events(n).saturating_sub(MAX_GLOBAL_PAIRS) as u64;
    let mut schedule = Vec::new();
    while overflow > 0 {
        let hosted = overflow.min(MAX_LOCAL_PAIRS as u64);
        schedule.push(OPTIN_BASE_ESCROW + BYTES_PAIR_ESCROW * hosted);
        overflow -= hosted;
    }
    Ok(schedule)
}

/// The complete escrow picture for one graph size.
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct EscrowQuote {
    pub event_count: u8,
    pub global: u64,
    pub locals: Vec<u64>,
    pub total: u64,
}

pub fn escrow_overall(event_count: u64) -> Result<EscrowQuote, CostError> {
    let global = escrow_global(event_count)?;
    let locals = escrow_local_schedule(event_count)?;
    let total = global + locals.iter().sum::<u64>();
    Ok(EscrowQuote {
        event_count: event_count as u8,
        global,
        locals,
        total,
    })
}

/// Escrow totals for every event count up to the capacity.
pub fn escrow_curve() -> Vec<EscrowQuote> {
    (0..=MAX_EVENTS as u64)
        .map(|n| escrow_overall(n).expect("within capacity"))
        .collect()
}

/// A fee total priced in both currencies.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub struct FeeQuote {
    pub txns: u64,
    pub microalgos: u64,
    pub usd: Usd,
}

/// Fees to construct a graph: one deployment plus one transaction per
/// event, relation, and status update. Opt-in transactions for storage
/// accounts are charged by the ledger but quoted separately by the
/// deployment driver, not here.
pub fn creation_fees(
    events: u64,
    relations: u64,
    status_updates: u64,
    rate: UsdRate,
) -> Result<FeeQuote, CostError> {
    check_event_count(events)?;
    let txns = 1 + events + relations + status_updates;
    let microalgos = txns * FLAT_FEE;
    Ok(FeeQuote {
        txns,
        microalgos,
        usd: Usd::from_microalgos(microalgos, rate),
    })
}

/// Fee to execute one event: a single transaction.
pub fn execution_fee(rate: UsdRate) -> FeeQuote {
    FeeQuote {
        txns: 1,
        microalgos: FLAT_FEE,
        usd: Usd::from_microalgos(FLAT_FEE, rate),
    }
}

/// The baseline chain's published costs for the same workflow: gas
/// amounts priced at a fixed gas price and USD conversion.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub struct EthBaseline {
    pub creation_gas: u64,
    pub execution_gas: u64,
    pub gwei_per_gas: u64,
    pub usd_per_eth_micro: u64,
}

impl Default for EthBaseline {
    fn default() -> Self {
        EthBaseline {
            creation_gas: 717_709,
            execution_gas: 54_496,
            gwei_per_gas: 150,
            usd_per_eth_micro: 3_250_000_000,
        }
    }
}

impl EthBaseline {
    pub fn creation_gwei(&self) -> u64 {
        self.creation_gas * self.gwei_per_gas
    }

    pub fn execution_gwei(&self) -> u64 {
        self.execution_gas * self.gwei_per_gas
    }

    pub fn creation_usd(&self) -> Usd {
        Usd::from_gwei(self.creation_gwei(), self.usd_per_eth_micro)
    }

    pub fn execution_usd(&self) -> Usd {
        Usd::from_gwei(self.execution_gwei(), self.usd_per_eth_micro)
    }
}

/// One comparison row: the same workflow action costed on both chains.
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct ComparisonRow {
    pub label: &'static str,
    pub txns: u64,
    pub algo_microalgos: u64,
    pub algo_usd: Usd,
    pub eth_gas: u64,
    pub eth_gwei: u64,
    pub eth_usd: Usd,
    pub advantage: u64,
}

#[derive(Clone, PartialEq, Eq, Debug)]
pub struct ComparisonReport {
    pub rate: UsdRate,
    pub baseline: EthBaseline,
    pub rows: [ComparisonRow; 3],
}

fn ratio_half_up(numerator: u128, denominator: u128) -> u64 {
    ((numerator + denominator / 2) / denominator) as u64
}

/// Ratio of a USD amount to an algo amount — the benchmark quotes its
/// creation advantages this way (USD per algo spent).
fn advantage_per_algo(eth: Usd, microalgos: u64) -> u64 {
    ratio_half_up(eth.femto(), microalgos as u128 * 1_000_000_000)
}

/// Ratio of two USD amounts — the benchmark quotes its execution
/// advantage this way.
fn advantage_per_usd(eth: Usd, algo: Usd) -> u64 {
    ratio_half_up(eth.femto(), algo.femto())
}

/// Builds the three-row cost comparison for a workflow with the given
/// construction transaction counts.
pub fn comparison_report(
    events: u64,
    relations: u64,
    status_updates: u64,
    rate: UsdRate,
    baseline: EthBaseline,
) -> Result<ComparisonReport, CostError> {
    let creation = creation_fees(events, relations, status_updates, rate)?;
    let escrow = escrow_overall(events)?;
    let with_escrow = creation.microalgos + escrow.total;
    let execution = execution_fee(rate);

    let rows = [
        ComparisonRow {
            label: "creation (fees only)",
            txns: creation.txns,
            algo_microalgos: creation.microalgos,
            algo_usd: creation.usd,
            eth_gas: baseline.creation_gas,
            eth_gwei: baseline.creation_gwei(),
            eth_usd: baseline.creation_usd(),
            advantage: advantage_per_algo(baseline.creation_usd(), creation.microalgos),
        },
        ComparisonRow {
            label: "creation + escrow",
            txns: creation.txns,
            algo_microalgos: with_escrow,
            algo_usd: Usd::from_microalgos(with_escrow, rate),
            eth_gas: baseline.creation_gas,
            eth_gwei: baseline.creation_gwei(),
            eth_usd: baseline.creation_usd(),
            advantage: advantage_per_algo(baseline.creation_usd(), with_escrow),
        },
        ComparisonRow {
            label: "execution (per event)",
            txns: execution.txns,
            algo_microalgos: execution.microalgos,
            algo_usd: execution.usd,
            eth_gas: baseline.execution_gas,
            eth_gwei: baseline.execution_gwei(),
            eth_usd: baseline.execution_usd(),
            advantage: advantage_per_usd(baseline.execution_usd(), execution.usd),
        },
    ];
    Ok(ComparisonReport {
        rate,
        baseline,
        rows,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::avm::StorageScope;
    use crate::encoding::slot_for_pair;

    #[test]
    fn escrow_frozen_points() {
        assert_eq!(escrow_global(0).unwrap(), 228_500);
        assert_eq!(escrow_global(5).unwrap(), 728_500);
        assert_eq!(escrow_global(61).unwrap(), 3_278_500);
        assert_eq!(
            escrow_local_schedule(61).unwrap(),
            vec![900_000, 900_000, 900_000, 750_000]
        );
        assert_eq!(escrow_local_schedule(32).unwrap(), vec![250_000]);
        assert_eq!(escrow_local_schedule(30).unwrap(), Vec::<u64>::new());
        assert_eq!(escrow_overall(5).unwrap().total, 728_500);
        assert_eq!(escrow_overall(61).unwrap().total, 6_728_500);
        assert_eq!(escrow_overall(62), Err(CostError::OutOfRange(62)));
    }

    #[test]
    fn escrow_formula_matches_slot_enumeration_for_every_size() {
        // Independent oracle: place every pair through the slot mapper,
        // count stores and kinds, and price the result directly.
        for n in 0u8..=61 {
            let pairs = pairs_for_events(n);
            let mut accounts_used = std::collections::BTreeSet::new();
            let mut uint_pairs = 0u64;
            let mut byte_pairs = 0u64;
            for ordinal in 1..=pairs {
                match slot_for_pair(ordinal).unwrap() {
                    StorageScope::Global => {}
                    StorageScope::Local { account } => {
                        accounts_used.insert(account);
                    }
                }
                // Ordinal 3 is the event-count uint; all else is bytes.
                if ordinal == 3 {
                    uint_pairs += 1;
                } else {
                    byte_pairs += 1;
                }
            }
            let expected = APP_BASE_ESCROW
                + OPTIN_BASE_ESCROW * accounts_used.len() as u64
                + UINT_PAIR_ESCROW * uint_pairs
                + BYTES_PAIR_ESCROW * byte_pairs;
            let quote = escrow_overall(n as u64).unwrap();
            assert_eq!(quote.total, expected, "event count {n}");
            assert_eq!(quote.locals.len(), accounts_used.len(), "event count {n}");
        }
    }

    #[test]
    fn escrow_grows_monotonically() {
        let curve = escrow_curve();
        assert_eq!(curve.len(), 62);
        for pair in curve.windows(2) {
            assert!(pair[1].total > pair[0].total);
        }
    }

    #[test]
    fn benchmark_table_reproduces_exactly() {
        let report =
            comparison_report(5, 11, 3, DEFAULT_RATE, EthBaseline::default()).unwrap();
        let [creation, with_escrow, execution] = &report.rows;

        assert_eq!(creation.txns, 20);
        assert_eq!(format_algos(creation.algo_microalgos), "0.02");
        assert_eq!(creation.algo_usd.to_string(), "0.02720");
        assert_eq!(format_eth(creation.eth_gwei), "0.10765635");
        assert_eq!(creation.eth_usd.to_string(), "349.88314");
        assert_eq!(creation.advantage, 17_494);

        assert_eq!(format_algos(with_escrow.algo_microalgos), "0.7485");
        assert_eq!(with_escrow.algo_usd.to_string(), "1.01796");
        assert_eq!(with_escrow.advantage, 467);

        assert_eq!(format_algos(execution.algo_microalgos), "0.001");
        assert_eq!(execution.algo_usd.to_string(), "0.00136");
        assert_eq!(execution.eth_usd.to_string(), "26.56680");
        assert_eq!(execution.advantage, 19_534);
    }

    #[test]
    fn fee_formulas() {
        let quote = creation_fees(5, 11, 3, DEFAULT_RATE).unwrap();
        assert_eq!(quote.txns, 20);
        assert_eq!(quote.microalgos, 20_000);
        let empty = creation_fees(0, 0, 0, DEFAULT_RATE).unwrap();
        assert_eq!(empty.txns, 1);
        assert_eq!(
            creation_fees(62, 0, 0, DEFAULT_RATE),
            Err(CostError::OutOfRange(62))
        );
        assert_eq!(execution_fee(DEFAULT_RATE).microalgos, 1_000);
    }

    #[test]
    fn usd_display_rounds_half_even_at_five_places() {
        // 349.8831375 rounds up (remainder 75 > 50).
        let v = Usd::from_femto(349_883_137_500_000_000);
        assert_eq!(v.to_string(), "349.88314");
        // Exact ties round to the even neighbour.
        assert_eq!(Usd::from_femto(5_000_000_000).to_string(), "0.00000");
        assert_eq!(Usd::from_femto(15_000_000_000).to_string(), "0.00002");
        assert_eq!(Usd::from_femto(25_000_000_000).to_string(), "0.00002");
        // Just above and below a tie.
        assert_eq!(Usd::from_femto(15_000_000_001).to_string(), "0.00002");
        assert_eq!(Usd::from_femto(14_999_999_999).to_string(), "0.00001");
        // Exact values print exactly.
        assert_eq!(
            Usd::from_microalgos(748_500, DEFAULT_RATE).to_string(),
            "1.01796"
        );
    }

    #[test]
    fn rate_parsing_is_exact_and_strict() {
        assert_eq!(UsdRate::parse("1.36").unwrap().micro(), 1_360_000);
        assert_eq!(UsdRate::parse("2").unwrap().micro(), 2_000_000);
        assert_eq!(UsdRate::parse("0.000001").unwrap().micro(), 1);
        assert_eq!(UsdRate::parse("1.360000").unwrap().micro(), 1_360_000);
        for bad in ["", ".", ".5", "1.", "1.2345678", "abc", "1.36.0", "-1", "1e6"] {
            assert!(UsdRate::parse(bad).is_err(), "{bad:?} should fail");
        }
        // "1." has an empty fraction: decide explicitly that it fails.
        assert!(UsdRate::parse("1.").is_err());
        assert_eq!(DEFAULT_RATE.to_string(), "1.36");
    }

    #[test]
    fn algo_and_eth_formatting_trims_zeros() {
        assert_eq!(format_algos(0), "0");
        assert_eq!(format_algos(1_000_000), "1");
        assert_eq!(format_algos(20_000), "0.02");
        assert_eq!(format_algos(6_728_500), "6.7285");
        assert_eq!(format_eth(107_656_350), "0.10765635");
    }
}
