//! Parallel bursts and sequential streams of transactions.

use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::scalar::Scalar;
use crate::sim::SimTime;
use crate::topology::Topology;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum WorkloadMode {
    /// Every transaction submitted at the same virtual instant.
    Parallel,
    /// Transaction k+1 submitted when transaction k commits or completes.
    Sequential,
}

impl fmt::Display for WorkloadMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            WorkloadMode::Parallel => "parallel",
            WorkloadMode::Sequential => "sequential",
        })
    }
}

impl FromStr for WorkloadMode {
    type Err = WorkloadError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "parallel" => Ok(WorkloadMode::Parallel),
            "sequential" => Ok(WorkloadMode::Sequential),
            _ => Err(WorkloadError::UnknownMode(s.to_string())),
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum WorkloadError {
    #[error("workload needs at least one transaction")]
    Empty,
    #[error("unknown workload mode `{0}`")]
    UnknownMode(String),
    #[error("workload target `{0}` is not a node of the topology")]
    UnknownTarget(String),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct WorkloadSpec {
    pub mode: WorkloadMode,
    pub n: usize,
    /// Node the client submits from; `None` means the node hosting the
    /// pipeline's client role.
    pub target: Option<String>,
    /// Chaincode function (HLF) or `transfer` (PoA).
    pub function: String,
    /// `{i}` in an argument is replaced by the transaction index.
    pub args: Vec<String>,
    pub start_ms: u64,
}

impl WorkloadSpec {
    pub fn parallel(n: usize, function: &str, args: &[&str]) -> Self {
        Self {
            mode: WorkloadMode::Parallel,
            n,
            target: None,
            function: function.to_string(),
            args: args.iter().map(|a| a.to_string()).collect(),
            start_ms: 0,
        }
    }

    pub fn sequential(n: usize, function: &str, args: &[&str]) -> Self {
        Self {
            mode: WorkloadMode::Sequential,
            ..Self::parallel(n, function, args)
        }
    }
}

/// One generated transaction. `submit_at` is fixed up front for parallel
/// bursts and for the first transaction of a sequential stream; the others
/// are released by the pipeline.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Submission {
    pub index: usize,
    pub tx_id: String,
    pub function: String,
    pub args: Vec<String>,
    pub submit_at: Option<SimTime>,
}

pub fn tx_id(index: usize) -> String {
    format!("tx{index:05}")
}

fn check<T: Scalar>(spec: &WorkloadSpec, t: &Topology<T>) -> Result<(), WorkloadError> {
    if spec.n == 0 {
        return Err(WorkloadError::Empty);
    }
    if let Some(target) = &spec.target {
        if t.node_index(target).is_err() {
            return Err(WorkloadError::UnknownTarget(target.clone()));
        }
    }
    Ok(())
}

fn build(spec: &WorkloadSpec, at: impl Fn(usize) -> Option<SimTime>) -> Vec<Submission> {
    (0..spec.n)
        .map(|i| Submission {
            index: i,
            tx_id: tx_id(i),
            function: spec.function.clone(),
            args: spec.args.iter().map(|a| a.replace("{i}", &i.to_string())).collect(),
            submit_at: at(i),
        })
        .collect()
}

/// All `n` transactions at `start_ms`, in id order.
pub fn fire_parallel<T: Scalar>(spec: &WorkloadSpec, t: &Topology<T>) -> Result<Vec<Submission>, WorkloadError> {
    check(spec, t)?;
    let start = SimTime::from_ms(spec.start_ms);
    Ok(build(spec, |_| Some(start)))
}

/// The first transaction at `start_ms`; the rest wait for their predecessor.
pub fn fire_sequential<T: Scalar>(spec: &WorkloadSpec, t: &Topology<T>) -> Result<Vec<Submission>, WorkloadError> {
    check(spec, t)?;
    let start = SimTime::from_ms(spec.start_ms);
    Ok(build(spec, |i| (i == 0).then_some(start)))
}

pub fn generate<T: Scalar>(spec: &WorkloadSpec, t: &Topology<T>) -> Result<Vec<Submission>, WorkloadError> {
    match spec.mode {
        WorkloadMode::Parallel => fire_parallel(spec, t),
        WorkloadMode::Sequential => fire_sequential(spec, t),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::topology::tests::{link, node};

    fn pair() -> Topology<f64> {
        Topology::new(vec![node("a"), node("b")], vec![link("a", "b", 10.0, 1.0)]).unwrap()
    }

    #[test]
    fn parallel_burst_shares_one_instant() {
        let mut spec = WorkloadSpec::parallel(100, "sendMoney", &["acct{i}", "1", "+"]);
        spec.start_ms = 250;
        let subs = fire_parallel(&spec, &pair()).unwrap();
        assert_eq!(subs.len(), 100);
        assert!(subs.iter().all(|s| s.submit_at == Some(SimTime::from_ms(250))));
        assert_eq!(subs[7].args[0], "acct7");
        let ids: std::collections::HashSet<_> = subs.iter().map(|s| &s.tx_id).collect();
        assert_eq!(ids.len(), 100);
        assert!(subs.windows(2).all(|w| w[0].tx_id < w[1].tx_id));
    }

    #[test]
    fn sequential_releases_only_the_first() {
        let spec = WorkloadSpec::sequential(3, "sendMoney", &["a", "1", "+"]);
        let subs = fire_sequential(&spec, &pair()).unwrap();
        assert_eq!(subs[0].submit_at, Some(SimTime::ZERO));
        assert!(subs[1..].iter().all(|s| s.submit_at.is_none()));
        let single = WorkloadSpec::sequential(1, "f", &[]);
        assert_eq!(
            fire_sequential(&single, &pair()).unwrap(),
            fire_parallel(&WorkloadSpec::parallel(1, "f", &[]), &pair()).unwrap()
        );
    }

    #[test]
    fn invalid_specs() {
        let mut spec = WorkloadSpec::parallel(0, "f", &[]);
        assert_eq!(generate(&spec, &pair()), Err(WorkloadError::Empty));
        spec.n = 1;
        spec.target = Some("zz".into());
        assert_eq!(generate(&spec, &pair()), Err(WorkloadError::UnknownTarget("zz".into())));
        assert!("bursty".parse::<WorkloadMode>().is_err());
    }
}
