//! Config-driven experiment runner: repetitions, sweeps, placement
//! comparisons and versioned CSV output.

mod config;
mod report;

use std::fs::{self, File};
use std::io::BufReader;
use std::path::PathBuf;

use thiserror::Error;

use crate::hlf::{run_hlf, HlfError};
use crate::metrics::{CpuUsage, TxRecord};
use crate::placement::{basp, hlf_roles, poa_roles, random_placement, PlacementError, PlacementMethod, PlacementPlan};
use crate::poa::{run_poa, PoaError};
use crate::scalar::Scalar;
use crate::sim::{SimTime, SimTrace};
use crate::topology::{parse_topology, synth_topology, Topology, TopologyError};

pub use config::{
    CompareSection, EngineSection, ExperimentConfig, ExperimentSection, LatencyMetric, Pipeline, PlacementSection,
    SweepPoint, SweepSection, TopologySection, WorkloadSection,
};
pub use report::{run_metrics, ComparisonReport, ComparisonRow, MetricsReport, SummaryEntry, SCHEMA_VERSION};

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("config field `{field}`: {msg}")]
    Field { field: String, msg: String },
    #[error("config: {0}")]
    Toml(String),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Topology(#[from] TopologyError),
    #[error(transparent)]
    Placement(#[from] PlacementError),
    #[error(transparent)]
    Hlf(#[from] HlfError),
    #[error(transparent)]
    Poa(#[from] PoaError),
}

/// Everything one simulation produced.
#[derive(Clone, Debug)]
pub struct RunOutcome {
    pub point: usize,
    pub label: String,
    pub repetition: u32,
    pub seed: u64,
    pub plan: PlacementPlan,
    pub txs: Vec<TxRecord>,
    pub cpu: Vec<CpuUsage>,
    pub trace: SimTrace,
    pub end: SimTime,
    /// Replicas agree and the block chain and state replay check out.
    pub integrity: bool,
}

/// The configured topology; synthetic ones use `synth_seed + offset`.
pub fn load_topology<T: Scalar>(cfg: &ExperimentConfig, offset: u64) -> Result<Topology<T>, ExperimentError> {
    match (&cfg.topology.file, cfg.topology.synth_nodes) {
        (Some(f), _) => {
            let path = cfg.resolve(f);
            let file = File::open(&path).map_err(|e| ExperimentError::Io { path, source: e })?;
            Ok(parse_topology(BufReader::new(file))?)
        }
        (None, Some(n)) => {
            let seed = cfg.topology.synth_seed.unwrap_or(cfg.experiment.seed) + offset;
            Ok(synth_topology(n, seed, &cfg.topology.profile)?)
        }
        (None, None) => Err(ExperimentError::Field {
            field: "topology".into(),
            msg: "set `file` or `synth_nodes`".into(),
        }),
    }
}

/// Places the pipeline's roles with `method`.
pub fn place<T: Scalar>(
    cfg: &ExperimentConfig,
    t: &Topology<T>,
    point: &SweepPoint,
    method: PlacementMethod,
    seed: u64,
) -> Result<PlacementPlan, ExperimentError> {
    let p = &cfg.placement;
    let roles = match cfg.pipeline() {
        Pipeline::Hlf => hlf_roles(point.endorsers.unwrap_or(p.endorsers), p.committers),
        Pipeline::Poa => poa_roles(point.sealers.unwrap_or(p.sealers)),
    };
    let k = p.k.unwrap_or(roles.len());
    Ok(match method {
        PlacementMethod::Basp => basp(t, &roles, k, T::of(p.availability_threshold), seed)?,
        PlacementMethod::Random => random_placement(t, &roles, k, seed)?,
        PlacementMethod::Fixed => {
            let path = cfg.resolve(p.plan.as_deref().unwrap_or_else(|| "".as_ref()));
            let text = fs::read_to_string(&path).map_err(|e| ExperimentError::Io { path, source: e })?;
            PlacementPlan::parse(&text)?
        }
    })
}

/// Output of [`run_point`].
#[derive(Clone, Debug)]
pub struct PointRun {
    pub txs: Vec<TxRecord>,
    pub cpu: Vec<CpuUsage>,
    pub trace: SimTrace,
    pub end: SimTime,
    pub integrity: bool,
}

/// Runs one configuration on a placed topology.
pub fn run_point<T: Scalar>(
    cfg: &ExperimentConfig,
    t: &Topology<T>,
    point: &SweepPoint,
    plan: &PlacementPlan,
    seed: u64,
) -> Result<PointRun, ExperimentError> {
    let workload = cfg.workload_spec(point);
    let engine = cfg.engine_config(seed);
    match cfg.pipeline() {
        Pipeline::Hlf => {
            let mut hlf = cfg.hlf.clone();
            if let Some(b) = point.block_size {
                hlf.block_size = b;
            }
            let run = run_hlf(t, plan, &hlf, engine, &workload)?;
            let digests = run.store_digests();
            let integrity = digests.windows(2).all(|w| w[0] == w[1])
                && run
                    .peers
                    .iter()
                    .all(|p| p.ledger.first_broken_link().is_none() && p.ledger.replay().digest() == p.ledger.store.digest());
            Ok(PointRun {
                txs: run.txs,
                cpu: run.cpu,
                trace: run.trace,
                end: run.end,
                integrity,
            })
        }
        Pipeline::Poa => {
            let run = run_poa(t, plan, &cfg.poa, engine, &workload)?;
            let integrity = run.chain.first_broken_link().is_none()
                && run.chain.first_bad_state_root().is_none()
                && run.chain.state_at(run.chain.head()).is_ok();
            Ok(PointRun {
                txs: run.txs,
                cpu: run.cpu,
                trace: run.trace,
                end: run.end,
                integrity,
            })
        }
    }
}

/// Every sweep point times every repetition, repetition `r` using seed
/// `seed + r`. Dropped or pending transactions are data, not errors.
pub fn run_experiment<T: Scalar>(cfg: &ExperimentConfig) -> Result<MetricsReport, ExperimentError> {
    let t: Topology<T> = load_topology(cfg, 0)?;
    let method = cfg.method();
    let mut runs = Vec::new();
    for (pi, point) in cfg.sweep_points().iter().enumerate() {
        for r in 0..cfg.experiment.repetitions {
            let seed = cfg.experiment.seed + r as u64;
            let plan = place(cfg, &t, point, method, cfg.placement.seed.unwrap_or(seed))?;
            let PointRun {
                txs,
                cpu,
                trace,
                end,
                integrity,
            } = run_point(cfg, &t, point, &plan, seed)?;
            runs.push(RunOutcome {
                point: pi,
                label: point.label(),
                repetition: r,
                seed,
                plan,
                txs,
                cpu,
                trace,
                end,
                integrity,
            });
        }
    }
    Ok(MetricsReport {
        name: cfg.experiment.name.clone(),
        pipeline: cfg.pipeline(),
        method,
        runs,
    })
}

fn mean_latency(txs: &[TxRecord], metric: LatencyMetric) -> Option<f64> {
    let v: Vec<u64> = txs.iter().filter_map(|r| metric.of(r)).map(SimTime::micros).collect();
    (!v.is_empty()).then(|| v.iter().map(|&x| x as u128).sum::<u128>() as f64 / v.len() as f64 / 1000.0)
}

/// Paired comparison over `seeds` seeds: seed `s` fixes the topology (when
/// synthetic), both placements and the engine, so the methods differ only in
/// where the roles land.
pub fn compare_placements<T: Scalar>(
    cfg: &ExperimentConfig,
    candidate: PlacementMethod,
    baseline: PlacementMethod,
    seeds: u32,
) -> Result<ComparisonReport, ExperimentError> {
    let points = cfg.sweep_points();
    if points.len() != 1 {
        return Err(ExperimentError::Field {
            field: "sweep".into(),
            msg: "a placement comparison runs a single configuration".into(),
        });
    }
    let point = &points[0];
    let metric = cfg.compare_metric();
    let mut rows = Vec::new();
    for i in 0..seeds as u64 {
        let seed = cfg.experiment.seed + i;
        let t: Topology<T> = load_topology(cfg, i)?;
        let measure = |method| -> Result<_, ExperimentError> {
            let plan = place(cfg, &t, point, method, seed)?;
            let run = run_point(cfg, &t, point, &plan, seed)?;
            Ok((mean_latency(&run.txs, metric), plan))
        };
        let (candidate_ms, candidate_plan) = measure(candidate)?;
        let (baseline_ms, baseline_plan) = measure(baseline)?;
        rows.push(ComparisonRow {
            seed,
            candidate,
            candidate_ms,
            candidate_sites: candidate_plan.sites().join(" "),
            baseline,
            baseline_ms,
            baseline_sites: baseline_plan.sites().join(" "),
        });
    }
    Ok(ComparisonReport {
        name: cfg.experiment.name.clone(),
        pipeline: cfg.pipeline(),
        metric,
        rows,
    })
}
