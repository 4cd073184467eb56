//! Chaincode simulated by endorsers against a read-only store snapshot.

use std::fmt;

use thiserror::Error;

use super::ledger::{ReadWriteSet, VersionedStore};
use crate::compensation::{self, composite_key, CompensationError, CompensationRecord, Op, StateStub};

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct ChaincodeCall {
    pub function: String,
    pub args: Vec<String>,
}

impl ChaincodeCall {
    pub fn new(function: &str, args: &[&str]) -> Self {
        Self {
            function: function.to_string(),
            args: args.iter().map(|a| a.to_string()).collect(),
        }
    }
}

impl fmt::Display for ChaincodeCall {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}({})", self.function, self.args.join(","))
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ChaincodeError {
    #[error("unknown chaincode function `{0}`")]
    UnknownFunction(String),
    #[error("`{function}` expects {expected} arguments, got {got}")]
    Arity {
        function: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("invalid argument `{0}`")]
    BadArgument(String),
    #[error(transparent)]
    Compensation(#[from] CompensationError),
}

/// Records every read (with the version seen) and buffers every write.
/// Reads observe the snapshot, never the transaction's own writes.
pub struct SimulationStub<'s> {
    store: &'s VersionedStore,
    rw: ReadWriteSet,
}

impl<'s> SimulationStub<'s> {
    pub fn new(store: &'s VersionedStore) -> Self {
        Self {
            store,
            rw: ReadWriteSet::default(),
        }
    }

    pub fn into_rwset(self) -> ReadWriteSet {
        self.rw
    }
}

impl StateStub for SimulationStub<'_> {
    fn get_state(&mut self, key: &str) -> Option<Vec<u8>> {
        self.rw.record_read(key, self.store.version(key));
        self.store.get(key).map(|(v, _)| v.clone())
    }

    fn put_state(&mut self, key: String, value: Vec<u8>) {
        self.rw.record_write(key, value);
    }

    fn keys_with_prefix(&mut self, prefix: &str) -> Vec<String> {
        let keys = self.store.keys_with_prefix(prefix);
        for k in &keys {
            self.rw.record_read(k, self.store.version(k));
        }
        keys
    }
}

fn arity(function: &'static str, args: &[String], expected: usize) -> Result<(), ChaincodeError> {
    if args.len() == expected {
        Ok(())
    } else {
        Err(ChaincodeError::Arity {
            function,
            expected,
            got: args.len(),
        })
    }
}

fn int<N: std::str::FromStr>(s: &str) -> Result<N, ChaincodeError> {
    s.parse().map_err(|_| ChaincodeError::BadArgument(s.to_string()))
}

/// Key holding a plain integer balance, used by the read-modify-write contract.
pub fn balance_key(name: &str) -> String {
    composite_key("Balance", &[name])
}

/// Runs `call` against `store` without mutating it.
///
/// * `sendMoney(name, value, op)` appends one delta entry; no reads.
/// * `addBalance(name, delta)` reads the balance key and writes it back
///   updated, the conflict-prone pattern.
/// * `recordPeriod(participant, period, contribution, usage)` and
///   `settle(period)` drive the compensation contract.
pub fn execute(call: &ChaincodeCall, store: &VersionedStore, tx_id: &str) -> Result<ReadWriteSet, ChaincodeError> {
    let mut stub = SimulationStub::new(store);
    let a = &call.args;
    match call.function.as_str() {
        "sendMoney" => {
            arity("sendMoney", a, 3)?;
            let op: Op = a[2].parse()?;
            compensation::send_money(&mut stub, &a[0], int(&a[1])?, op, tx_id)?;
        }
        "addBalance" => {
            arity("addBalance", a, 2)?;
            let key = balance_key(&a[0]);
            let current: i64 = match stub.get_state(&key) {
                Some(v) => int(&String::from_utf8_lossy(&v))?,
                None => 0,
            };
            let delta: i64 = int(&a[1])?;
            stub.put_state(key, (current + delta).to_string().into_bytes());
        }
        "recordPeriod" => {
            arity("recordPeriod", a, 4)?;
            let record = CompensationRecord {
                participant: a[0].clone(),
                period: int(&a[1])?,
                contribution_cost: int(&a[2])?,
                consumption_usage: int(&a[3])?,
            };
            compensation::record_period(&mut stub, &[record])?;
        }
        "settle" => {
            arity("settle", a, 1)?;
            compensation::settle_on_ledger(&mut stub, int(&a[0])?)?;
        }
        other => return Err(ChaincodeError::UnknownFunction(other.to_string())),
    }
    Ok(stub.into_rwset())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn send_money_writes_one_composite_key() {
        let store = VersionedStore::default();
        let rw = execute(&ChaincodeCall::new("sendMoney", &["Alice", "10", "+"]), &store, "tx1").unwrap();
        assert!(rw.reads.is_empty());
        assert_eq!(rw.writes.len(), 1);
        assert_eq!(rw.writes[0].0, "\u{0}NameOpValueTxID\u{0}Alice\u{0}+\u{0}10\u{0}tx1\u{0}");
        assert_eq!(rw.writes[0].1, vec![0x00]);
        assert!(store.is_empty());
    }

    #[test]
    fn deterministic_across_endorsers() {
        let store = VersionedStore::default();
        let call = ChaincodeCall::new("addBalance", &["bob", "5"]);
        assert_eq!(execute(&call, &store, "t").unwrap(), execute(&call, &store.clone(), "t").unwrap());
    }

    #[test]
    fn read_modify_write_records_versions() {
        let mut store = VersionedStore::default();
        store.put(balance_key("bob"), b"40".to_vec());
        let rw = execute(&ChaincodeCall::new("addBalance", &["bob", "2"]), &store, "t").unwrap();
        assert_eq!(rw.reads, vec![(balance_key("bob"), 1)]);
        assert_eq!(rw.writes, vec![(balance_key("bob"), b"42".to_vec())]);
    }

    #[test]
    fn rejects_bad_calls() {
        let s = VersionedStore::default();
        assert!(matches!(
            execute(&ChaincodeCall::new("mint", &[]), &s, "t"),
            Err(ChaincodeError::UnknownFunction(_))
        ));
        assert!(matches!(
            execute(&ChaincodeCall::new("sendMoney", &["a", "1"]), &s, "t"),
            Err(ChaincodeError::Arity { .. })
        ));
        assert!(matches!(
            execute(&ChaincodeCall::new("sendMoney", &["a", "-3", "+"]), &s, "t"),
            Err(ChaincodeError::Compensation(CompensationError::NonPositiveValue(-3)))
        ));
    }

    #[test]
    fn settlement_as_chaincode() {
        let mut store = VersionedStore::default();
        for (i, args) in [["A", "1", "30", "10"], ["B", "1", "0", "20"]].iter().enumerate() {
            let rw = execute(&ChaincodeCall::new("recordPeriod", args), &store, &format!("r{i}")).unwrap();
            store.apply(&rw);
        }
        let rw = execute(&ChaincodeCall::new("settle", &["1"]), &store, "s").unwrap();
        assert_eq!(rw.reads.len(), 2);
        store.apply(&rw);
        let mut book = compensation::CompensationBook {
            state: store.iter().map(|(k, (v, _))| (k.clone(), v.clone())).collect(),
        };
        assert_eq!(compensation::aggregate(&mut book, "A"), 20);
        assert_eq!(compensation::aggregate(&mut book, "B"), -20);
    }
}
