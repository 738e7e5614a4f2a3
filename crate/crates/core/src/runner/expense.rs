//! Exact-decimal cost accounting for hosted model usage.
//!
//! Prices are dollars per million tokens, parsed from decimal strings
//! into integer micro-dollars. Costs are kept as integer pico-dollars
//! (tokens x micro-dollars-per-1M never divides), so expense is exactly
//! additive over any partition of records and only display rounds.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ExpenseError {
    #[error("price table {path}: {msg}")]
    Parse { path: String, msg: String },
    #[error("invalid price {value:?}: {msg}")]
    BadPrice { value: String, msg: String },
    #[error("model {0:?} is not in the price table (strict mode)")]
    UnknownModel(String),
    #[error("failed to read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// An exact dollar amount in integer pico-dollars (1e-12 $).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Default)]
pub struct Money(u128);

impl Money {
    pub const ZERO: Money = Money(0);

    pub fn from_picodollars(pico: u128) -> Self {
        Money(pico)
    }

    pub fn picodollars(self) -> u128 {
        self.0
    }

    pub fn checked_add(self, other: Money) -> Option<Money> {
        self.0.checked_add(other.0).map(Money)
    }

    /// Dollars rounded half-up to cents, e.g. "$2.00".
    pub fn display_dollars(self) -> String {
        let cents = (self.0 + 5_000_000_000) / 10_000_000_000;
        format!("${}.{:02}", cents / 100, cents % 100)
    }

    /// Full-precision decimal dollars, trailing zeros trimmed.
    pub fn to_decimal_string(self) -> String {
        let dollars = self.0 / 1_000_000_000_000;
        let frac = self.0 % 1_000_000_000_000;
        if frac == 0 {
            return format!("{dollars}");
        }
        let frac = format!("{frac:012}");
        format!("{dollars}.{}", frac.trim_end_matches('0'))
    }
}

impl std::ops::Add for Money {
    type Output = Money;

    fn add(self, other: Money) -> Money {
        Money(self.0.checked_add(other.0).expect("money overflow"))
    }
}

impl std::iter::Sum for Money {
    fn sum<I: Iterator<Item = Money>>(iter: I) -> Money {
        iter.fold(Money::ZERO, |acc, m| acc + m)
    }
}

impl Serialize for Money {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.to_decimal_string())
    }
}

/// Parse a decimal dollar string ("0.50") into micro-dollars. At most six
/// fractional digits are representable.
fn parse_dollars_to_micro(value: &str) -> Result<u64, ExpenseError> {
    let bad = |msg: &str| ExpenseError::BadPrice {
        value: value.to_string(),
        msg: msg.to_string(),
    };
    let trimmed = value.trim();
    let (whole, frac) = match trimmed.split_once('.') {
        Some((w, f)) => (w, f),
        None => (trimmed, ""),
    };
    if whole.is_empty() && frac.is_empty() {
        return Err(bad("empty"));
    }
    if frac.len() > 6 {
        return Err(bad("more than 6 fractional digits"));
    }
    let whole: u64 = if whole.is_empty() {
        0
    } else {
        whole.parse().map_err(|_| bad("not a non-negative decimal"))?
    };
    let mut frac_micro = 0u64;
    if !frac.is_empty() {
        if !frac.bytes().all(|b| b.is_ascii_digit()) {
            return Err(bad("not a non-negative decimal"));
        }
        let scale = 10u64.pow(6 - frac.len() as u32);
        frac_micro = frac.parse::<u64>().map_err(|_| bad("not a non-negative decimal"))? * scale;
    }
    whole
        .checked_mul(1_000_000)
        .and_then(|w| w.checked_add(frac_micro))
        .ok_or_else(|| bad("too large"))
}

/// A model's price in micro-dollars per million tokens.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Price {
    pub input_micro_per_1m: u64,
    pub output_micro_per_1m: u64,
}

#[derive(Debug, Clone, Deserialize)]
struct PriceEntry {
    #[serde(rename = "input_per_1M")]
    input_per_1m: String,
    #[serde(rename = "output_per_1M")]
    output_per_1m: String,
}

/// Prices per model; a model absent from the table is treated as free.
#[derive(Debug, Clone, Default)]
pub struct PriceTable {
    entries: BTreeMap<String, Price>,
}

impl PriceTable {
    pub fn empty() -> Self {
        PriceTable::default()
    }

    pub fn insert(&mut self, model: &str, input_dollars: &str, output_dollars: &str) -> Result<(), ExpenseError> {
        self.entries.insert(
            model.to_string(),
            Price {
                input_micro_per_1m: parse_dollars_to_micro(input_dollars)?,
                output_micro_per_1m: parse_dollars_to_micro(output_dollars)?,
            },
        );
        Ok(())
    }

    pub fn get(&self, model: &str) -> Option<Price> {
        self.entries.get(model).copied()
    }

    pub fn from_json_str(text: &str, path: &str) -> Result<Self, ExpenseError> {
        let raw: BTreeMap<String, PriceEntry> =
            serde_json::from_str(text).map_err(|e| ExpenseError::Parse {
                path: path.to_string(),
                msg: e.to_string(),
            })?;
        let mut table = PriceTable::empty();
        for (model, entry) in raw {
            table.insert(&model, &entry.input_per_1m, &entry.output_per_1m)?;
        }
        Ok(table)
    }

    pub fn load(path: &Path) -> Result<Self, ExpenseError> {
        let text = std::fs::read_to_string(path).map_err(|source| ExpenseError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_json_str(&text, &path.display().to_string())
    }
}

/// Usage totals and their exact cost. `estimated` is set when the model
/// was not priced (treated as free) or when any usage count had to be
/// estimated locally.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct ExpenseReport {
    pub total_input_tokens: u64,
    pub total_output_tokens: u64,
    pub cost: Money,
    pub estimated: bool,
}

/// Exact cost of the given usage: tokens/1e6 x price, computed in integer
/// pico-dollars. Unknown models are free unless `strict`.
pub fn compute_expense(
    total_input: u64,
    total_output: u64,
    model: &str,
    prices: &PriceTable,
    strict: bool,
) -> Result<ExpenseReport, ExpenseError> {
    let (cost, estimated) = match prices.get(model) {
        Some(price) => {
            let pico = u128::from(total_input) * u128::from(price.input_micro_per_1m)
                + u128::from(total_output) * u128::from(price.output_micro_per_1m);
            (Money::from_picodollars(pico), false)
        }
        None if strict => return Err(ExpenseError::UnknownModel(model.to_string())),
        None => (Money::ZERO, true),
    };
    Ok(ExpenseReport {
        total_input_tokens: total_input,
        total_output_tokens: total_output,
        cost,
        estimated,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn table() -> PriceTable {
        let mut t = PriceTable::empty();
        t.insert("gpt-3.5-turbo-0125", "0.50", "1.50").unwrap();
        t.insert("claude-3-haiku", "0.25", "1.25").unwrap();
        t
    }

    #[test]
    fn one_million_each_way_at_gpt35_prices_is_two_dollars() {
        let report = compute_expense(1_000_000, 1_000_000, "gpt-3.5-turbo-0125", &table(), true).unwrap();
        assert_eq!(report.cost.display_dollars(), "$2.00");
        assert_eq!(report.cost.picodollars(), 2_000_000_000_000);
        assert!(!report.estimated);
    }

    #[test]
    fn haiku_hand_case_is_one_dollar() {
        // 2 x 0.25 + 0.4 x 1.25 = 1.00
        let report = compute_expense(2_000_000, 400_000, "claude-3-haiku", &table(), true).unwrap();
        assert_eq!(report.cost.display_dollars(), "$1.00");
    }

    #[test]
    fn zero_tokens_cost_zero() {
        let report = compute_expense(0, 0, "gpt-3.5-turbo-0125", &table(), true).unwrap();
        assert_eq!(report.cost, Money::ZERO);
        assert_eq!(report.cost.display_dollars(), "$0.00");
    }

    #[test]
    fn unknown_model_is_free_and_flagged() {
        let report = compute_expense(10, 10, "llama-3-70b", &table(), false).unwrap();
        assert_eq!(report.cost, Money::ZERO);
        assert!(report.estimated);
    }

    #[test]
    fn unknown_model_strict_errors() {
        assert!(matches!(
            compute_expense(10, 10, "llama-3-70b", &table(), true),
            Err(ExpenseError::UnknownModel(_))
        ));
    }

    #[test]
    fn sub_cent_amounts_round_for_display_only() {
        // 1 token at $0.50 / 1M = 0.5 micro-dollars.
        let report = compute_expense(1, 0, "gpt-3.5-turbo-0125", &table(), true).unwrap();
        assert_eq!(report.cost.picodollars(), 500_000);
        assert_eq!(report.cost.display_dollars(), "$0.00");
        assert_eq!(report.cost.to_decimal_string(), "0.0000005");
    }

    #[test]
    fn decimal_parsing_is_exact() {
        assert_eq!(parse_dollars_to_micro("0.50").unwrap(), 500_000);
        assert_eq!(parse_dollars_to_micro("1.25").unwrap(), 1_250_000);
        assert_eq!(parse_dollars_to_micro("3").unwrap(), 3_000_000);
        assert_eq!(parse_dollars_to_micro(".5").unwrap(), 500_000);
        assert_eq!(parse_dollars_to_micro("0.000001").unwrap(), 1);
        assert!(parse_dollars_to_micro("0.0000001").is_err());
        assert!(parse_dollars_to_micro("-1").is_err());
        assert!(parse_dollars_to_micro("abc").is_err());
    }

    #[test]
    fn price_table_json_round_trip() {
        let json = r#"{
            "gpt-3.5-turbo-0125": {"input_per_1M": "0.50", "output_per_1M": "1.50"},
            "claude-3-haiku": {"input_per_1M": "0.25", "output_per_1M": "1.25"}
        }"#;
        let parsed = PriceTable::from_json_str(json, "inline").unwrap();
        assert_eq!(parsed.get("claude-3-haiku").unwrap().output_micro_per_1m, 1_250_000);
        assert_eq!(parsed.get("nope"), None);
    }

    #[test]
    fn money_display_rounds_half_up_on_cents() {
        assert_eq!(Money::from_picodollars(4_999_999_999).display_dollars(), "$0.00");
        assert_eq!(Money::from_picodollars(5_000_000_000).display_dollars(), "$0.01");
        assert_eq!(Money::from_picodollars(1_984_999_000_000).display_dollars(), "$1.98");
    }
}
