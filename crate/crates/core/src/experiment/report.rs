use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use super::{ExperimentError, LatencyMetric, Pipeline, RunOutcome};
use crate::metrics::{Summary, TxRecord, TxStatus};
use crate::placement::PlacementMethod;
use crate::sim::SimTime;

/// First column of every CSV row; bump when a column changes meaning.
pub const SCHEMA_VERSION: u32 = 1;

fn ms(t: Option<SimTime>) -> Option<f64> {
    t.map(SimTime::as_ms)
}

fn to_csv<R: Serialize>(rows: impl IntoIterator<Item = R>) -> Result<String, ExperimentError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r)?;
    }
    let bytes = w.into_inner().map_err(|e| ExperimentError::Csv(e.into_error().into()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

fn write_file(path: PathBuf, text: &str) -> Result<PathBuf, ExperimentError> {
    fs::write(&path, text).map_err(|e| ExperimentError::Io { path: path.clone(), source: e })?;
    Ok(path)
}

#[derive(Serialize)]
struct TxRow<'a> {
    schema: u32,
    point: usize,
    label: &'a str,
    repetition: u32,
    seed: u64,
    tx_id: &'a str,
    status: String,
    block: Option<u64>,
    submit_ms: Option<f64>,
    stage_ms: Option<f64>,
    done_ms: Option<f64>,
    seen_ms: Option<f64>,
}

#[derive(Serialize)]
struct RunRow<'a> {
    schema: u32,
    point: usize,
    label: &'a str,
    repetition: u32,
    seed: u64,
    method: String,
    metric: &'static str,
    count: usize,
    mean_ms: f64,
    median_ms: f64,
    min_ms: f64,
    max_ms: f64,
    committed: usize,
    invalid: usize,
    rejected: usize,
    dropped: usize,
    pending: usize,
    integrity: bool,
}

#[derive(Serialize)]
struct SummaryRow<'a> {
    schema: u32,
    point: usize,
    label: &'a str,
    metric: &'static str,
    runs: usize,
    mean_ms: f64,
    median_ms: f64,
    min_ms: f64,
    max_ms: f64,
    dropped: usize,
}

#[derive(Serialize)]
struct CpuRow<'a> {
    schema: u32,
    point: usize,
    label: &'a str,
    repetition: u32,
    seed: u64,
    node: &'a str,
    roles: &'a str,
    busy_fraction: f64,
}

/// One metric of one sweep point, averaged over repetitions.
#[derive(Clone, Debug, PartialEq)]
pub struct SummaryEntry {
    pub point: usize,
    pub label: String,
    pub metric: &'static str,
    pub runs: usize,
    /// `count` is summed over runs; the other fields are run averages.
    pub summary: Summary,
    pub dropped: usize,
}

/// Per-transaction milestones of every run plus the aggregates derived from
/// them.
#[derive(Clone, Debug)]
pub struct MetricsReport {
    pub name: String,
    pub pipeline: Pipeline,
    pub method: PlacementMethod,
    pub runs: Vec<RunOutcome>,
}

/// `(name, latency)` metrics of one run. `makespan` is last completion minus
/// first submission: the delivery time of the whole batch.
pub fn run_metrics(pipeline: Pipeline, txs: &[TxRecord]) -> Vec<(&'static str, Summary)> {
    let names: &[(&str, LatencyMetric)] = match pipeline {
        Pipeline::Hlf => &[("endorse", LatencyMetric::Stage), ("commit", LatencyMetric::Done)],
        Pipeline::Poa => &[
            ("sealing", LatencyMetric::Stage),
            ("completion", LatencyMetric::Done),
            ("observed", LatencyMetric::Seen),
        ],
    };
    let mut out = Vec::new();
    for &(name, m) in names {
        let v: Vec<f64> = txs
            .iter()
            .filter_map(|r| m.of(r))
            .map(SimTime::as_ms)
            .collect();
        if let Some(s) = Summary::of(&v) {
            out.push((name, s));
        }
    }
    let first = txs.iter().filter_map(|r| r.submit).min();
    let last = txs.iter().filter_map(|r| r.done).max();
    if let (Some(a), Some(b)) = (first, last) {
        if let Some(s) = Summary::of(&[b.saturating_sub(a).as_ms()]) {
            out.push(("makespan", s));
        }
    }
    out
}

fn count(txs: &[TxRecord], s: TxStatus) -> usize {
    txs.iter().filter(|r| r.status == s).count()
}

impl MetricsReport {
    pub fn txs_csv(&self) -> Result<String, ExperimentError> {
        to_csv(self.runs.iter().flat_map(|run| {
            run.txs.iter().map(move |r| TxRow {
                schema: SCHEMA_VERSION,
                point: run.point,
                label: &run.label,
                repetition: run.repetition,
                seed: run.seed,
                tx_id: &r.tx_id,
                status: r.status.to_string(),
                block: r.block,
                submit_ms: ms(r.submit),
                stage_ms: ms(r.stage),
                done_ms: ms(r.done),
                seen_ms: ms(r.seen),
            })
        }))
    }

    pub fn runs_csv(&self) -> Result<String, ExperimentError> {
        let mut rows = Vec::new();
        for run in &self.runs {
            for (metric, s) in run_metrics(self.pipeline, &run.txs) {
                rows.push(RunRow {
                    schema: SCHEMA_VERSION,
                    point: run.point,
                    label: &run.label,
                    repetition: run.repetition,
                    seed: run.seed,
                    method: run.plan.method.to_string(),
                    metric,
                    count: s.count,
                    mean_ms: s.mean,
                    median_ms: s.median,
                    min_ms: s.min,
                    max_ms: s.max,
                    committed: count(&run.txs, TxStatus::Committed),
                    invalid: count(&run.txs, TxStatus::Invalid),
                    rejected: count(&run.txs, TxStatus::Rejected),
                    dropped: count(&run.txs, TxStatus::Dropped),
                    pending: count(&run.txs, TxStatus::Pending),
                    integrity: run.integrity,
                });
            }
        }
        to_csv(rows)
    }

    /// Per sweep point and metric, each aggregate averaged over repetitions.
    pub fn summary(&self) -> Vec<SummaryEntry> {
        let mut acc: BTreeMap<(usize, &'static str), (String, Vec<Summary>, usize)> = BTreeMap::new();
        for run in &self.runs {
            let dropped = count(&run.txs, TxStatus::Dropped);
            for (metric, s) in run_metrics(self.pipeline, &run.txs) {
                let e = acc.entry((run.point, metric)).or_insert_with(|| (run.label.clone(), Vec::new(), 0));
                e.1.push(s);
                e.2 += dropped;
            }
        }
        let order = |m: &str| ["endorse", "commit", "sealing", "completion", "observed", "makespan"].iter().position(|x| *x == m);
        let mut out: Vec<_> = acc
            .into_iter()
            .map(|((point, metric), (label, v, dropped))| {
                let n = v.len() as f64;
                let avg = |f: fn(&Summary) -> f64| v.iter().map(f).sum::<f64>() / n;
                let s = Summary {
                    count: v.iter().map(|s| s.count).sum(),
                    mean: avg(|s| s.mean),
                    median: avg(|s| s.median),
                    min: avg(|s| s.min),
                    max: avg(|s| s.max),
                };
                SummaryEntry {
                    point,
                    label,
                    metric,
                    runs: v.len(),
                    summary: s,
                    dropped,
                }
            })
            .collect();
        out.sort_by_key(|e| (e.point, order(e.metric)));
        out
    }

    pub fn summary_csv(&self) -> Result<String, ExperimentError> {
        let summary = self.summary();
        to_csv(summary.iter().map(|e| SummaryRow {
            schema: SCHEMA_VERSION,
            point: e.point,
            label: &e.label,
            metric: e.metric,
            runs: e.runs,
            mean_ms: e.summary.mean,
            median_ms: e.summary.median,
            min_ms: e.summary.min,
            max_ms: e.summary.max,
            dropped: e.dropped,
        }))
    }

    pub fn cpu_csv(&self) -> Result<String, ExperimentError> {
        to_csv(self.runs.iter().flat_map(|run| {
            run.cpu.iter().map(move |c| CpuRow {
                schema: SCHEMA_VERSION,
                point: run.point,
                label: &run.label,
                repetition: run.repetition,
                seed: run.seed,
                node: &c.node,
                roles: &c.roles,
                busy_fraction: c.busy_fraction,
            })
        }))
    }

    /// Mean of `metric` averaged over repetitions, per sweep point.
    pub fn point_means(&self, metric: &str) -> Vec<f64> {
        self.summary()
            .into_iter()
            .filter(|e| e.metric == metric)
            .map(|e| e.summary.mean)
            .collect()
    }

    /// Writes `txs.csv`, `runs.csv`, `summary.csv`, `cpu.csv` and one trace
    /// file per run into `dir`.
    pub fn write(&self, dir: &Path) -> Result<Vec<PathBuf>, ExperimentError> {
        fs::create_dir_all(dir).map_err(|e| ExperimentError::Io { path: dir.to_path_buf(), source: e })?;
        let mut out = vec![
            write_file(dir.join("txs.csv"), &self.txs_csv()?)?,
            write_file(dir.join("runs.csv"), &self.runs_csv()?)?,
            write_file(dir.join("summary.csv"), &self.summary_csv()?)?,
            write_file(dir.join("cpu.csv"), &self.cpu_csv()?)?,
        ];
        for run in &self.runs {
            if !run.trace.is_empty() {
                let name = format!("trace-p{}-r{}.txt", run.point, run.repetition);
                out.push(write_file(dir.join(name), &run.trace.to_text())?);
            }
        }
        Ok(out)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ComparisonRow {
    pub seed: u64,
    pub candidate: PlacementMethod,
    pub candidate_ms: Option<f64>,
    pub candidate_sites: String,
    pub baseline: PlacementMethod,
    pub baseline_ms: Option<f64>,
    pub baseline_sites: String,
}

impl ComparisonRow {
    /// Baseline minus candidate latency; positive when the candidate is faster.
    pub fn gain_ms(&self) -> Option<f64> {
        Some(self.baseline_ms? - self.candidate_ms?)
    }

    pub fn gain_pct(&self) -> Option<f64> {
        Some(100.0 * self.gain_ms()? / self.baseline_ms?)
    }
}

#[derive(Serialize)]
struct CompareCsvRow<'a> {
    schema: u32,
    seed: u64,
    metric: &'static str,
    candidate: String,
    candidate_ms: Option<f64>,
    baseline: String,
    baseline_ms: Option<f64>,
    gain_ms: Option<f64>,
    gain_pct: Option<f64>,
    candidate_sites: &'a str,
    baseline_sites: &'a str,
}

#[derive(Clone, Debug)]
pub struct ComparisonReport {
    pub name: String,
    pub pipeline: Pipeline,
    pub metric: LatencyMetric,
    pub rows: Vec<ComparisonRow>,
}

impl ComparisonReport {
    fn gains(&self) -> Vec<f64> {
        self.rows.iter().filter_map(ComparisonRow::gain_ms).collect()
    }

    /// Mean paired gain over seeds where both runs completed transactions.
    pub fn mean_gain_ms(&self) -> Option<f64> {
        let g = self.gains();
        (!g.is_empty()).then(|| g.iter().sum::<f64>() / g.len() as f64)
    }

    pub fn mean_gain_pct(&self) -> Option<f64> {
        let g: Vec<f64> = self.rows.iter().filter_map(ComparisonRow::gain_pct).collect();
        (!g.is_empty()).then(|| g.iter().sum::<f64>() / g.len() as f64)
    }

    /// Fraction of seeds where the candidate is strictly faster.
    pub fn win_fraction(&self) -> f64 {
        if self.rows.is_empty() {
            return 0.0;
        }
        self.gains().iter().filter(|g| **g > 0.0).count() as f64 / self.rows.len() as f64
    }

    pub fn to_csv(&self) -> Result<String, ExperimentError> {
        let metric = match self.metric {
            LatencyMetric::Stage => "stage",
            LatencyMetric::Done => "done",
            LatencyMetric::Seen => "seen",
        };
        to_csv(self.rows.iter().map(|r| CompareCsvRow {
            schema: SCHEMA_VERSION,
            seed: r.seed,
            metric,
            candidate: r.candidate.to_string(),
            candidate_ms: r.candidate_ms,
            baseline: r.baseline.to_string(),
            baseline_ms: r.baseline_ms,
            gain_ms: r.gain_ms(),
            gain_pct: r.gain_pct(),
            candidate_sites: &r.candidate_sites,
            baseline_sites: &r.baseline_sites,
        }))
    }

    pub fn write(&self, dir: &Path) -> Result<PathBuf, ExperimentError> {
        fs::create_dir_all(dir).map_err(|e| ExperimentError::Io { path: dir.to_path_buf(), source: e })?;
        write_file(dir.join("compare.csv"), &self.to_csv()?)
    }
}
