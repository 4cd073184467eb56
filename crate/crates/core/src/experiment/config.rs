use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Deserialize;

use super::ExperimentError;
use crate::hlf::HlfConfig;
use crate::metrics::TxRecord;
use crate::placement::PlacementMethod;
use crate::poa::PoaConfig;
use crate::sim::{EngineConfig, SimTime};
use crate::topology::SynthProfile;
use crate::workload::{WorkloadMode, WorkloadSpec};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Pipeline {
    Hlf,
    Poa,
}

impl fmt::Display for Pipeline {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Pipeline::Hlf => "hlf",
            Pipeline::Poa => "poa",
        })
    }
}

/// Which per-transaction latency a comparison averages.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LatencyMetric {
    /// Submission to endorsement / sealing.
    Stage,
    /// Submission to commit / confirming seal.
    Done,
    /// Submission to the client learning of `Done`.
    Seen,
}

impl LatencyMetric {
    pub fn of(self, r: &TxRecord) -> Option<SimTime> {
        match self {
            Self::Stage => r.stage_latency(),
            Self::Done => r.done_latency(),
            Self::Seen => r.seen_latency(),
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "stage" => Some(Self::Stage),
            "done" => Some(Self::Done),
            "seen" => Some(Self::Seen),
            _ => None,
        }
    }
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSection {
    pub name: String,
    /// `hlf` or `poa`.
    pub pipeline: String,
    #[serde(default = "one")]
    pub seed: u64,
    #[serde(default = "one_u32")]
    pub repetitions: u32,
    /// Output directory for CSV and trace files.
    pub output: Option<PathBuf>,
}

fn one() -> u64 {
    1
}

fn one_u32() -> u32 {
    1
}

/// Either `file` or `synth_nodes`.
#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TopologySection {
    pub file: Option<PathBuf>,
    pub synth_nodes: Option<usize>,
    /// Defaults to the experiment seed.
    pub synth_seed: Option<u64>,
    #[serde(default)]
    pub profile: SynthProfile,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PlacementSection {
    /// `basp`, `random` or `fixed`.
    pub method: String,
    /// Number of sites; defaults to one site per role.
    pub k: Option<usize>,
    pub availability_threshold: f64,
    /// Defaults to the run seed.
    pub seed: Option<u64>,
    /// Plan file for `fixed`.
    pub plan: Option<PathBuf>,
    pub endorsers: u32,
    pub committers: u32,
    pub sealers: u32,
}

impl Default for PlacementSection {
    fn default() -> Self {
        Self {
            method: "basp".into(),
            k: None,
            availability_threshold: crate::placement::DEFAULT_AVAILABILITY_THRESHOLD,
            seed: None,
            plan: None,
            endorsers: 1,
            committers: 2,
            sealers: 1,
        }
    }
}

#[derive(Clone, Debug, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EngineSection {
    pub base_service_ms: f64,
    pub jitter_ms: f64,
    pub trace: bool,
}

impl Default for EngineSection {
    fn default() -> Self {
        let e = EngineConfig::default();
        Self {
            base_service_ms: e.base_service_ms,
            jitter_ms: e.jitter_ms,
            trace: e.trace,
        }
    }
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WorkloadSection {
    #[serde(default = "parallel")]
    pub mode: String,
    pub transactions: usize,
    pub target: Option<String>,
    /// Defaults to `sendMoney` (HLF) or `transfer` (PoA).
    pub function: Option<String>,
    pub args: Option<Vec<String>>,
    #[serde(default)]
    pub start_ms: u64,
}

fn parallel() -> String {
    "parallel".into()
}

/// Lists to sweep; the run grid is their cartesian product, in field order.
#[derive(Clone, Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepSection {
    pub block_size: Vec<usize>,
    pub transactions: Vec<usize>,
    pub endorsers: Vec<u32>,
    pub sealers: Vec<u32>,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CompareSection {
    pub seeds: u32,
    /// `stage`, `done` or `seen`; defaults to `done` (HLF) or `seen` (PoA).
    pub metric: Option<String>,
}

impl Default for CompareSection {
    fn default() -> Self {
        Self { seeds: 30, metric: None }
    }
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: ExperimentSection,
    #[serde(default)]
    pub topology: TopologySection,
    #[serde(default)]
    pub placement: PlacementSection,
    #[serde(default)]
    pub engine: EngineSection,
    #[serde(default)]
    pub hlf: HlfConfig,
    #[serde(default)]
    pub poa: PoaConfig,
    pub workload: WorkloadSection,
    #[serde(default)]
    pub sweep: SweepSection,
    #[serde(default)]
    pub compare: CompareSection,
    /// Relative paths resolve against this directory.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

/// One cell of the sweep grid; `None` keeps the configured value.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct SweepPoint {
    pub block_size: Option<usize>,
    pub transactions: Option<usize>,
    pub endorsers: Option<u32>,
    pub sealers: Option<u32>,
}

impl SweepPoint {
    pub fn label(&self) -> String {
        let mut parts = Vec::new();
        if let Some(v) = self.block_size {
            parts.push(format!("block_size={v}"));
        }
        if let Some(v) = self.transactions {
            parts.push(format!("transactions={v}"));
        }
        if let Some(v) = self.endorsers {
            parts.push(format!("endorsers={v}"));
        }
        if let Some(v) = self.sealers {
            parts.push(format!("sealers={v}"));
        }
        if parts.is_empty() {
            "base".into()
        } else {
            parts.join(";")
        }
    }
}

fn field(field: &str, msg: impl Into<String>) -> ExperimentError {
    ExperimentError::Field {
        field: field.to_string(),
        msg: msg.into(),
    }
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self, ExperimentError> {
        let text = fs::read_to_string(path).map_err(|e| ExperimentError::Io {
            path: path.to_path_buf(),
            source: e,
        })?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Self::from_toml(&text, base)
    }

    pub fn from_toml(text: &str, base_dir: PathBuf) -> Result<Self, ExperimentError> {
        let mut cfg: Self = toml::from_str(text).map_err(|e| ExperimentError::Toml(e.to_string()))?;
        cfg.base_dir = base_dir;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    pub fn pipeline(&self) -> Pipeline {
        match self.experiment.pipeline.as_str() {
            "poa" => Pipeline::Poa,
            _ => Pipeline::Hlf,
        }
    }

    pub fn method(&self) -> PlacementMethod {
        self.placement.method.parse().unwrap_or(PlacementMethod::Basp)
    }

    pub fn compare_metric(&self) -> LatencyMetric {
        match &self.compare.metric {
            Some(m) => LatencyMetric::parse(m).unwrap_or(LatencyMetric::Done),
            None if self.pipeline() == Pipeline::Poa => LatencyMetric::Seen,
            None => LatencyMetric::Done,
        }
    }

    /// Checks every cross-field rule, naming the offending field.
    pub fn validate(&self) -> Result<(), ExperimentError> {
        if !matches!(self.experiment.pipeline.as_str(), "hlf" | "poa") {
            return Err(field("experiment.pipeline", format!("expected `hlf` or `poa`, got `{}`", self.experiment.pipeline)));
        }
        if self.experiment.repetitions == 0 {
            return Err(field("experiment.repetitions", "must be at least 1"));
        }
        match (&self.topology.file, self.topology.synth_nodes) {
            (Some(_), Some(_)) => return Err(field("topology", "set either `file` or `synth_nodes`, not both")),
            (None, None) => return Err(field("topology", "set `file` or `synth_nodes`")),
            (Some(f), None) => {
                let p = self.resolve(f);
                if !p.is_file() {
                    return Err(field("topology.file", format!("`{}` does not exist", p.display())));
                }
            }
            (None, Some(n)) if n < 2 => return Err(field("topology.synth_nodes", "need at least 2 nodes")),
            _ => {}
        }
        let method: PlacementMethod = self
            .placement
            .method
            .parse()
            .map_err(|_| field("placement.method", format!("expected basp, random or fixed, got `{}`", self.placement.method)))?;
        match (method, &self.placement.plan) {
            (PlacementMethod::Fixed, None) => return Err(field("placement.plan", "required when method = \"fixed\"")),
            (PlacementMethod::Fixed, Some(p)) if !self.resolve(p).is_file() => {
                return Err(field("placement.plan", format!("`{}` does not exist", self.resolve(p).display())))
            }
            (PlacementMethod::Basp | PlacementMethod::Random, Some(_)) => {
                return Err(field("placement.plan", "only valid with method = \"fixed\""))
            }
            _ => {}
        }
        if self.placement.k == Some(0) {
            return Err(field("placement.k", "must be at least 1"));
        }
        if !(0.0..=1.0).contains(&self.placement.availability_threshold) {
            return Err(field("placement.availability_threshold", "must lie in [0, 1]"));
        }
        if self.engine.base_service_ms <= 0.0 || self.engine.jitter_ms < 0.0 {
            return Err(field("engine", "base_service_ms must be positive and jitter_ms non-negative"));
        }
        match self.pipeline() {
            Pipeline::Hlf => self.validate_hlf()?,
            Pipeline::Poa => self.validate_poa()?,
        }
        self.workload.mode.parse::<WorkloadMode>().map_err(|_| {
            field("workload.mode", format!("expected parallel or sequential, got `{}`", self.workload.mode))
        })?;
        if self.workload.transactions == 0 || self.sweep.transactions.contains(&0) {
            return Err(field("workload.transactions", "must be at least 1"));
        }
        if self.compare.seeds == 0 {
            return Err(field("compare.seeds", "must be at least 1"));
        }
        if let Some(m) = &self.compare.metric {
            if LatencyMetric::parse(m).is_none() {
                return Err(field("compare.metric", format!("expected stage, done or seen, got `{m}`")));
            }
        }
        Ok(())
    }

    fn validate_hlf(&self) -> Result<(), ExperimentError> {
        if self.hlf.block_size == 0 || self.sweep.block_size.contains(&0) {
            return Err(field("hlf.block_size", "must be at least 1"));
        }
        if self.placement.endorsers == 0 || self.sweep.endorsers.contains(&0) {
            return Err(field("placement.endorsers", "must be at least 1"));
        }
        if self.hlf.endorsements_required == 0 {
            return Err(field("hlf.endorsements_required", "must be at least 1"));
        }
        if !self.sweep.sealers.is_empty() {
            return Err(field("sweep.sealers", "only valid for the poa pipeline"));
        }
        Ok(())
    }

    fn validate_poa(&self) -> Result<(), ExperimentError> {
        if self.poa.blocktime_ms == 0 {
            return Err(field("poa.blocktime_ms", "must be positive"));
        }
        if self.poa.block_tx_limit == 0 {
            return Err(field("poa.block_tx_limit", "must be at least 1"));
        }
        if self.placement.sealers == 0 || self.sweep.sealers.contains(&0) {
            return Err(field("placement.sealers", "must be at least 1"));
        }
        if !self.sweep.block_size.is_empty() {
            return Err(field("sweep.block_size", "only valid for the hlf pipeline"));
        }
        if !self.sweep.endorsers.is_empty() {
            return Err(field("sweep.endorsers", "only valid for the hlf pipeline"));
        }
        Ok(())
    }

    /// The run grid in deterministic order.
    pub fn sweep_points(&self) -> Vec<SweepPoint> {
        fn axis<V: Copy>(v: &[V]) -> Vec<Option<V>> {
            if v.is_empty() {
                vec![None]
            } else {
                v.iter().copied().map(Some).collect()
            }
        }
        let mut out = Vec::new();
        for b in axis(&self.sweep.block_size) {
            for n in axis(&self.sweep.transactions) {
                for e in axis(&self.sweep.endorsers) {
                    for s in axis(&self.sweep.sealers) {
                        out.push(SweepPoint {
                            block_size: b,
                            transactions: n,
                            endorsers: e,
                            sealers: s,
                        });
                    }
                }
            }
        }
        out
    }

    pub fn workload_spec(&self, point: &SweepPoint) -> WorkloadSpec {
        let (function, args): (&str, &[&str]) = match self.pipeline() {
            Pipeline::Hlf => ("sendMoney", &["acct00", "1", "+"]),
            Pipeline::Poa => ("transfer", &["acct00", "acct01", "1"]),
        };
        WorkloadSpec {
            mode: self.workload.mode.parse().unwrap_or(WorkloadMode::Parallel),
            n: point.transactions.unwrap_or(self.workload.transactions),
            target: self.workload.target.clone(),
            function: self.workload.function.clone().unwrap_or_else(|| function.to_string()),
            args: self
                .workload
                .args
                .clone()
                .unwrap_or_else(|| args.iter().map(|a| a.to_string()).collect()),
            start_ms: self.workload.start_ms,
        }
    }

    pub fn engine_config(&self, seed: u64) -> EngineConfig {
        EngineConfig {
            seed,
            base_service_ms: self.engine.base_service_ms,
            jitter_ms: self.engine.jitter_ms,
            trace: self.engine.trace,
        }
    }
}
