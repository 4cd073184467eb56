//! Per-transaction rows and the aggregates derived from them.

use std::fmt;

use crate::sim::SimTime;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum TxStatus {
    /// Committed valid (HLF) or confirmed to full depth (PoA).
    Committed,
    /// Ordered into a block but flagged invalid at validation.
    Invalid,
    /// Refused before ordering: endorsement mismatch, duplicate id, bad call
    /// or insufficient balance.
    Rejected,
    /// Not included within the drop horizon.
    Dropped,
    /// Still in flight when the simulation stopped.
    Pending,
}

impl fmt::Display for TxStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TxStatus::Committed => "committed",
            TxStatus::Invalid => "invalid",
            TxStatus::Rejected => "rejected",
            TxStatus::Dropped => "dropped",
            TxStatus::Pending => "pending",
        })
    }
}

/// Absolute virtual times of one transaction's milestones.
///
/// `stage` is endorsement acceptance (HLF) or block sealing (PoA); `done` is
/// commit notification (HLF) or the sealing of the confirming block (PoA).
/// `seen` is when the submitting client learns of `done`: equal to `done` for
/// HLF, the arrival of the confirming block at the entry node for PoA.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TxRecord {
    pub tx_id: String,
    pub submit: Option<SimTime>,
    pub stage: Option<SimTime>,
    pub done: Option<SimTime>,
    pub seen: Option<SimTime>,
    pub block: Option<u64>,
    pub status: TxStatus,
}

impl TxRecord {
    pub fn new(tx_id: String) -> Self {
        Self {
            tx_id,
            submit: None,
            stage: None,
            done: None,
            seen: None,
            block: None,
            status: TxStatus::Pending,
        }
    }

    /// Time to endorse / sealing time.
    pub fn stage_latency(&self) -> Option<SimTime> {
        Some(self.stage?.saturating_sub(self.submit?))
    }

    /// Time to commit / completion time.
    pub fn done_latency(&self) -> Option<SimTime> {
        Some(self.done?.saturating_sub(self.submit?))
    }

    /// Client-observed end-to-end latency.
    pub fn seen_latency(&self) -> Option<SimTime> {
        Some(self.seen?.saturating_sub(self.submit?))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CpuUsage {
    pub node: String,
    /// Roles hosted on the node, `+`-joined.
    pub roles: String,
    pub busy_fraction: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Summary {
    pub count: usize,
    pub mean: f64,
    pub median: f64,
    pub min: f64,
    pub max: f64,
}

impl Summary {
    /// `None` for an empty sample. The median of an even sample is the mean
    /// of the two middle values.
    pub fn of(values: &[f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        let mut v = values.to_vec();
        v.sort_by(f64::total_cmp);
        let n = v.len();
        let median = if n % 2 == 1 { v[n / 2] } else { (v[n / 2 - 1] + v[n / 2]) / 2.0 };
        Some(Self {
            count: n,
            mean: v.iter().sum::<f64>() / n as f64,
            median,
            min: v[0],
            max: v[n - 1],
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn summary_by_hand() {
        let s = Summary::of(&[4.0, 1.0, 3.0, 2.0]).unwrap();
        assert_eq!((s.count, s.mean, s.median, s.min, s.max), (4, 2.5, 2.5, 1.0, 4.0));
        assert_eq!(Summary::of(&[7.0]).unwrap().median, 7.0);
        assert!(Summary::of(&[]).is_none());
    }

    #[test]
    fn latencies_need_both_ends() {
        let mut r = TxRecord::new("t".into());
        assert_eq!(r.done_latency(), None);
        r.submit = Some(SimTime(1_000));
        r.stage = Some(SimTime(3_000));
        r.done = Some(SimTime(9_000));
        assert_eq!(r.stage_latency(), Some(SimTime(2_000)));
        assert_eq!(r.done_latency(), Some(SimTime(8_000)));
    }
}
