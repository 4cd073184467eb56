//! Contribution/consumption accounting with a periodic zero-sum settlement.
//!
//! The ledger side is written against [`StateStub`] so the same code runs as
//! chaincode inside the pipeline simulators and against a plain in-memory
//! [`CompensationBook`].

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use thiserror::Error;

/// Object type of the per-transfer delta keys.
pub const DELTA_INDEX: &str = "NameOpValueTxID";
/// Object type of the declared per-period records.
pub const RECORD_INDEX: &str = "CompensationRecord";
/// Object type of the stored settlement summary.
pub const SETTLEMENT_INDEX: &str = "Settlement";

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum CompensationError {
    #[error("value must be positive, got {0}")]
    NonPositiveValue(i64),
    #[error("unknown operation `{0}` (expected + or -)")]
    UnknownOp(String),
    #[error("participant `{participant}` appears twice in period {period}")]
    DuplicateParticipant { participant: String, period: u32 },
    #[error("period {period}: total cost {total} cannot be shared over zero usage")]
    ZeroUsage { period: u32, total: u64 },
    #[error("records line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("corrupt ledger entry `{0}`")]
    Corrupt(String),
}

/// Key/value access the compensation contract needs.
pub trait StateStub {
    fn get_state(&mut self, key: &str) -> Option<Vec<u8>>;
    fn put_state(&mut self, key: String, value: Vec<u8>);
    /// Keys starting with `prefix`, ascending.
    fn keys_with_prefix(&mut self, prefix: &str) -> Vec<String>;
}

/// Plain in-memory ledger.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct CompensationBook {
    pub state: BTreeMap<String, Vec<u8>>,
}

impl StateStub for CompensationBook {
    fn get_state(&mut self, key: &str) -> Option<Vec<u8>> {
        self.state.get(key).cloned()
    }

    fn put_state(&mut self, key: String, value: Vec<u8>) {
        self.state.insert(key, value);
    }

    fn keys_with_prefix(&mut self, prefix: &str) -> Vec<String> {
        self.state
            .range(prefix.to_string()..)
            .take_while(|(k, _)| k.starts_with(prefix))
            .map(|(k, _)| k.clone())
            .collect()
    }
}

/// `\0type\0attr1\0attr2\0...\0`, the usual chaincode composite-key layout.
pub fn composite_key(object_type: &str, attrs: &[&str]) -> String {
    let mut key = format!("\u{0}{object_type}\u{0}");
    for a in attrs {
        key.push_str(a);
        key.push('\u{0}');
    }
    key
}

pub fn split_composite_key(key: &str) -> Option<(&str, Vec<&str>)> {
    let body = key.strip_prefix('\u{0}')?.strip_suffix('\u{0}')?;
    let mut parts = body.split('\u{0}');
    let object_type = parts.next()?;
    Some((object_type, parts.collect()))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Op {
    Credit,
    Debit,
}

impl fmt::Display for Op {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Op::Credit => "+",
            Op::Debit => "-",
        })
    }
}

impl FromStr for Op {
    type Err = CompensationError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "+" => Ok(Op::Credit),
            "-" | "−" => Ok(Op::Debit),
            _ => Err(CompensationError::UnknownOp(s.to_string())),
        }
    }
}

/// One append-only balance change.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DeltaEntry {
    pub name: String,
    pub op: Op,
    pub value: u64,
    pub tx_id: String,
}

impl DeltaEntry {
    pub fn key(&self) -> String {
        composite_key(
            DELTA_INDEX,
            &[&self.name, &self.op.to_string(), &self.value.to_string(), &self.tx_id],
        )
    }

    pub fn from_key(key: &str) -> Option<Self> {
        match split_composite_key(key)? {
            (DELTA_INDEX, attrs) if attrs.len() == 4 => Some(Self {
                name: attrs[0].to_string(),
                op: attrs[1].parse().ok()?,
                value: attrs[2].parse().ok()?,
                tx_id: attrs[3].to_string(),
            }),
            _ => None,
        }
    }

    pub fn signed(&self) -> i128 {
        match self.op {
            Op::Credit => self.value as i128,
            Op::Debit => -(self.value as i128),
        }
    }
}

/// Appends one delta without reading anything, so concurrent calls on the same
/// name never conflict.
pub fn send_money<S: StateStub>(
    stub: &mut S,
    name: &str,
    value: i64,
    op: Op,
    tx_id: &str,
) -> Result<DeltaEntry, CompensationError> {
    if value <= 0 {
        return Err(CompensationError::NonPositiveValue(value));
    }
    let entry = DeltaEntry {
        name: name.to_string(),
        op,
        value: value as u64,
        tx_id: tx_id.to_string(),
    };
    stub.put_state(entry.key(), vec![0x00]);
    Ok(entry)
}

/// Σ credits − Σ debits recorded for `name`.
pub fn aggregate<S: StateStub>(stub: &mut S, name: &str) -> i128 {
    let prefix = composite_key(DELTA_INDEX, &[name]);
    stub.keys_with_prefix(&prefix)
        .iter()
        .filter_map(|k| DeltaEntry::from_key(k))
        .map(|e| e.signed())
        .sum()
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CompensationRecord {
    pub participant: String,
    pub period: u32,
    pub contribution_cost: u64,
    pub consumption_usage: u64,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Transfer {
    pub payer: String,
    pub payee: String,
    pub amount: u64,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SettlementResult {
    pub period: u32,
    pub net_balance: BTreeMap<String, i64>,
    pub transfers: Vec<Transfer>,
}

impl SettlementResult {
    /// Net balances after applying every transfer; all zero for a complete
    /// settlement.
    pub fn residuals(&self) -> BTreeMap<String, i64> {
        let mut left = self.net_balance.clone();
        for t in &self.transfers {
            *left.get_mut(&t.payer).expect("payer has a balance") += t.amount as i64;
            *left.get_mut(&t.payee).expect("payee has a balance") -= t.amount as i64;
        }
        left
    }
}

/// Writes one record per participant; rejects a participant declared twice
/// in the same period (within `records` or already on the ledger).
pub fn record_period<S: StateStub>(
    stub: &mut S,
    records: &[CompensationRecord],
) -> Result<(), CompensationError> {
    let mut seen = BTreeSet::new();
    for r in records {
        let key = record_key(r.period, &r.participant);
        if !seen.insert((r.period, &r.participant)) || stub.get_state(&key).is_some() {
            return Err(CompensationError::DuplicateParticipant {
                participant: r.participant.clone(),
                period: r.period,
            });
        }
    }
    for r in records {
        stub.put_state(
            record_key(r.period, &r.participant),
            format!("{} {}", r.contribution_cost, r.consumption_usage).into_bytes(),
        );
    }
    Ok(())
}

fn record_key(period: u32, participant: &str) -> String {
    composite_key(RECORD_INDEX, &[&format!("{period:010}"), participant])
}

/// Records of `period` stored on the ledger, ordered by participant id.
pub fn period_records<S: StateStub>(
    stub: &mut S,
    period: u32,
) -> Result<Vec<CompensationRecord>, CompensationError> {
    let prefix = composite_key(RECORD_INDEX, &[&format!("{period:010}")]);
    let mut out = Vec::new();
    for key in stub.keys_with_prefix(&prefix) {
        let corrupt = || CompensationError::Corrupt(key.replace('\u{0}', "/"));
        let (_, attrs) = split_composite_key(&key).ok_or_else(corrupt)?;
        let value = stub.get_state(&key).ok_or_else(corrupt)?;
        let text = String::from_utf8(value).map_err(|_| corrupt())?;
        let (c, u) = text.split_once(' ').ok_or_else(corrupt)?;
        out.push(CompensationRecord {
            participant: attrs.get(1).ok_or_else(corrupt)?.to_string(),
            period,
            contribution_cost: c.parse().map_err(|_| corrupt())?,
            consumption_usage: u.parse().map_err(|_| corrupt())?,
        });
    }
    Ok(out)
}

/// Settles `period` from the ledger records and appends the result: one debit
/// and one credit delta per transfer plus a summary entry.
pub fn settle_on_ledger<S: StateStub>(stub: &mut S, period: u32) -> Result<SettlementResult, CompensationError> {
    let records = period_records(stub, period)?;
    let result = settle(period, &records)?;
    for (i, t) in result.transfers.iter().enumerate() {
        let tx = format!("settle-{period}-{i}");
        send_money(stub, &t.payer, t.amount as i64, Op::Debit, &tx)?;
        send_money(stub, &t.payee, t.amount as i64, Op::Credit, &tx)?;
    }
    let summary: Vec<String> = result
        .transfers
        .iter()
        .map(|t| format!("{}>{}:{}", t.payer, t.payee, t.amount))
        .collect();
    stub.put_state(
        composite_key(SETTLEMENT_INDEX, &[&format!("{period:010}")]),
        summary.join(",").into_bytes(),
    );
    Ok(result)
}

/// Usage-proportional cost sharing with largest-remainder rounding and greedy
/// largest-debtor/largest-creditor matching.
///
/// Records of other periods are ignored.
pub fn settle(period: u32, records: &[CompensationRecord]) -> Result<SettlementResult, CompensationError> {
    let mut rows: Vec<&CompensationRecord> = records.iter().filter(|r| r.period == period).collect();
    rows.sort_by(|a, b| a.participant.cmp(&b.participant));
    if let Some(w) = rows.windows(2).find(|w| w[0].participant == w[1].participant) {
        return Err(CompensationError::DuplicateParticipant {
            participant: w[0].participant.clone(),
            period,
        });
    }
    let total: u128 = rows.iter().map(|r| r.contribution_cost as u128).sum();
    let usage: u128 = rows.iter().map(|r| r.consumption_usage as u128).sum();
    let charges = if usage == 0 {
        if total > 0 {
            return Err(CompensationError::ZeroUsage {
                period,
                total: total as u64,
            });
        }
        vec![0u128; rows.len()]
    } else {
        let exact: Vec<u128> = rows.iter().map(|r| r.consumption_usage as u128 * total).collect();
        let mut charges: Vec<u128> = exact.iter().map(|e| e / usage).collect();
        let leftover = total - charges.iter().sum::<u128>();
        // rows are id-sorted, so a stable sort breaks remainder ties by id
        let mut order: Vec<usize> = (0..rows.len()).collect();
        order.sort_by_key(|&i| std::cmp::Reverse(exact[i] % usage));
        for &i in order.iter().take(leftover as usize) {
            charges[i] += 1;
        }
        charges
    };

    let net: Vec<(String, i64)> = rows
        .iter()
        .zip(&charges)
        .map(|(r, &c)| (r.participant.clone(), (r.contribution_cost as i128 - c as i128) as i64))
        .collect();
    Ok(SettlementResult {
        period,
        transfers: greedy_transfers(&net),
        net_balance: net.into_iter().collect(),
    })
}

/// Pays the largest debt to the largest credit until nothing is owed. Ties go
/// to the smaller participant id.
fn greedy_transfers(net: &[(String, i64)]) -> Vec<Transfer> {
    // (remaining, id), ids unique
    let mut debt: Vec<(u64, &str)> = net.iter().filter(|(_, n)| *n < 0).map(|(p, n)| (n.unsigned_abs(), p.as_str())).collect();
    let mut credit: Vec<(u64, &str)> = net.iter().filter(|(_, n)| *n > 0).map(|(p, n)| (*n as u64, p.as_str())).collect();
    let largest = |v: &[(u64, &str)]| {
        (0..v.len())
            .filter(|&i| v[i].0 > 0)
            .min_by(|&a, &b| v[b].0.cmp(&v[a].0).then(v[a].1.cmp(v[b].1)))
    };
    let mut out = Vec::new();
    while let (Some(d), Some(c)) = (largest(&debt), largest(&credit)) {
        let amount = debt[d].0.min(credit[c].0);
        debt[d].0 -= amount;
        credit[c].0 -= amount;
        out.push(Transfer {
            payer: debt[d].1.to_string(),
            payee: credit[c].1.to_string(),
            amount,
        });
    }
    out
}

/// Parses `participant period contribution_cost consumption_usage` lines;
/// blank lines and `#` comments are skipped.
pub fn parse_records(text: &str) -> Result<Vec<CompensationRecord>, CompensationError> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let body = raw.split('#').next().unwrap_or("").trim();
        if body.is_empty() {
            continue;
        }
        let f: Vec<&str> = body.split_whitespace().collect();
        if f.len() != 4 {
            return Err(CompensationError::Parse {
                line,
                msg: format!("expected 4 fields, found {}", f.len()),
            });
        }
        let num = |s: &str, what: &str| {
            s.parse::<u64>().map_err(|_| CompensationError::Parse {
                line,
                msg: format!("invalid {what} `{s}`"),
            })
        };
        out.push(CompensationRecord {
            participant: f[0].to_string(),
            period: num(f[1], "period")? as u32,
            contribution_cost: num(f[2], "contribution cost")?,
            consumption_usage: num(f[3], "consumption usage")?,
        });
    }
    Ok(out)
}
