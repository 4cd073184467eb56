use std::fmt::Write as _;

use super::SimTime;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TraceRecord {
    pub time: SimTime,
    pub sequence: u64,
    pub node: String,
    pub kind: &'static str,
    pub detail: String,
}

/// Processed events in processing order.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct SimTrace {
    pub records: Vec<TraceRecord>,
}

impl SimTrace {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// `time_us node event_kind detail`, one record per line.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for r in &self.records {
            let _ = writeln!(out, "{} {} {} {}", r.time, r.node, r.kind, r.detail);
        }
        out
    }

    /// True when no record precedes another in `(time, sequence)` order.
    pub fn is_ordered(&self) -> bool {
        self.records
            .windows(2)
            .all(|w| (w[0].time, w[0].sequence) < (w[1].time, w[1].sequence))
    }

    pub fn extend(&mut self, other: SimTrace) {
        self.records.extend(other.records);
    }
}
