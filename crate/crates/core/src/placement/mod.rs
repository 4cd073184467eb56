//! Assignment of blockchain roles to mesh nodes.

mod basp;
mod kmeans;
mod random;

use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::topology::{NodeIdx, Topology, TopologyError};
use crate::scalar::Scalar;

pub use basp::{basp, basp_sites, BaspSite, BASP_RETENTION_BAND};
pub use kmeans::{kmeans_geo, ClusterSet, MAX_LLOYD_ITERATIONS};
pub use random::random_placement;

/// Default availability threshold used when the caller does not pick one.
pub const DEFAULT_AVAILABILITY_THRESHOLD: f64 = 0.95;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Role {
    Client,
    Orderer,
    Endorser(u32),
    Committer(u32),
    Sealer(u32),
}

impl Role {
    /// Roles that share a kind are replicas of each other.
    pub fn kind(&self) -> &'static str {
        match self {
            Role::Client => "client",
            Role::Orderer => "orderer",
            Role::Endorser(_) => "endorser",
            Role::Committer(_) => "committer",
            Role::Sealer(_) => "sealer",
        }
    }
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Role::Client | Role::Orderer => f.write_str(self.kind()),
            Role::Endorser(i) | Role::Committer(i) | Role::Sealer(i) => {
                write!(f, "{}#{}", self.kind(), i)
            }
        }
    }
}

impl FromStr for Role {
    type Err = PlacementError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || PlacementError::UnknownRole(s.to_string());
        let (kind, num) = match s.split_once('#') {
            Some((k, n)) => (k, Some(n.parse::<u32>().map_err(|_| bad())?)),
            None => (s, None),
        };
        match (kind, num) {
            ("client", None) => Ok(Role::Client),
            ("orderer", None) => Ok(Role::Orderer),
            ("endorser", Some(i)) if i > 0 => Ok(Role::Endorser(i)),
            ("committer", Some(i)) if i > 0 => Ok(Role::Committer(i)),
            ("sealer", Some(i)) if i > 0 => Ok(Role::Sealer(i)),
            _ => Err(bad()),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PlacementMethod {
    Basp,
    Random,
    /// Loaded from a plan file or built by hand.
    Fixed,
}

impl fmt::Display for PlacementMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PlacementMethod::Basp => "basp",
            PlacementMethod::Random => "random",
            PlacementMethod::Fixed => "fixed",
        })
    }
}

impl FromStr for PlacementMethod {
    type Err = PlacementError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "basp" => Ok(PlacementMethod::Basp),
            "random" => Ok(PlacementMethod::Random),
            "fixed" => Ok(PlacementMethod::Fixed),
            _ => Err(PlacementError::UnknownMethod(s.to_string())),
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PlacementError {
    #[error("k must be at least 1")]
    ZeroK,
    #[error("need {need} eligible nodes, only {have} available")]
    TooFewNodes { need: usize, have: usize },
    #[error("{replicas} replicas of `{kind}` cannot be spread over {k} sites")]
    ReplicasExceedSites { kind: String, replicas: usize, k: usize },
    #[error("unknown role `{0}`")]
    UnknownRole(String),
    #[error("unknown placement method `{0}`")]
    UnknownMethod(String),
    #[error("role `{0}` assigned twice")]
    DuplicateRole(String),
    #[error("plan line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error(transparent)]
    Topology(#[from] TopologyError),
}

/// Roles mapped to node ids, in role-declaration order.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PlacementPlan {
    pub assignments: Vec<(Role, String)>,
    pub k: usize,
    pub method: PlacementMethod,
}

impl PlacementPlan {
    /// Round-robin assignment of `roles` over `sites`.
    pub fn round_robin(
        roles: &[Role],
        sites: &[String],
        method: PlacementMethod,
    ) -> Result<Self, PlacementError> {
        if sites.is_empty() {
            return Err(PlacementError::ZeroK);
        }
        let plan = Self {
            assignments: roles
                .iter()
                .enumerate()
                .map(|(i, r)| (*r, sites[i % sites.len()].clone()))
                .collect(),
            k: sites.len(),
            method,
        };
        plan.check_replicas()?;
        Ok(plan)
    }

    pub fn node_of(&self, role: Role) -> Option<&str> {
        self.assignments
            .iter()
            .find(|(r, _)| *r == role)
            .map(|(_, n)| n.as_str())
    }

    pub fn roles(&self) -> impl Iterator<Item = Role> + '_ {
        self.assignments.iter().map(|(r, _)| *r)
    }

    /// Distinct nodes hosting at least one role, in first-use order.
    pub fn sites(&self) -> Vec<&str> {
        let mut out: Vec<&str> = Vec::new();
        for (_, n) in &self.assignments {
            if !out.contains(&n.as_str()) {
                out.push(n);
            }
        }
        out
    }

    pub fn resolve<T: Scalar>(&self, t: &Topology<T>) -> Result<Vec<(Role, NodeIdx)>, PlacementError> {
        self.assignments
            .iter()
            .map(|(r, id)| Ok((*r, t.node_index(id)?)))
            .collect()
    }

    /// Replicas of one role never share a node while there are at least as
    /// many sites as replicas.
    fn check_replicas(&self) -> Result<(), PlacementError> {
        for (i, (ri, ni)) in self.assignments.iter().enumerate() {
            for (rj, nj) in &self.assignments[..i] {
                if ri == rj {
                    return Err(PlacementError::DuplicateRole(ri.to_string()));
                }
                if ri.kind() == rj.kind() && ni == nj {
                    let replicas = self.assignments.iter().filter(|(r, _)| r.kind() == ri.kind()).count();
                    if replicas > self.k {
                        continue;
                    }
                    return Err(PlacementError::ReplicasExceedSites {
                        kind: ri.kind().to_string(),
                        replicas,
                        k: self.k,
                    });
                }
            }
        }
        Ok(())
    }

    /// `role node_id` records preceded by `# method` / `# k` header comments.
    pub fn to_text(&self) -> String {
        let mut out = format!("# method {}\n# k {}\n", self.method, self.k);
        for (r, n) in &self.assignments {
            out.push_str(&format!("{r} {n}\n"));
        }
        out
    }

    pub fn parse(text: &str) -> Result<Self, PlacementError> {
        let mut method = PlacementMethod::Fixed;
        let mut k = None;
        let mut assignments = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let raw = raw.trim();
            if let Some(c) = raw.strip_prefix('#') {
                let toks: Vec<&str> = c.split_whitespace().collect();
                match toks.as_slice() {
                    ["method", m] => method = m.parse()?,
                    ["k", n] => {
                        k = Some(n.parse::<usize>().map_err(|_| PlacementError::Parse {
                            line,
                            msg: format!("invalid k `{n}`"),
                        })?)
                    }
                    _ => {}
                }
                continue;
            }
            let text = strip_comment(raw);
            if text.is_empty() {
                continue;
            }
            let toks: Vec<&str> = text.split_whitespace().collect();
            if toks.len() != 2 {
                return Err(PlacementError::Parse {
                    line,
                    msg: format!("expected `role node_id`, found {} fields", toks.len()),
                });
            }
            assignments.push((toks[0].parse::<Role>()?, toks[1].to_string()));
        }
        let mut plan = Self {
            assignments,
            k: 0,
            method,
        };
        plan.k = k.unwrap_or_else(|| plan.sites().len());
        plan.check_replicas()?;
        Ok(plan)
    }
}

/// Cuts a trailing ` # comment`; `#` inside a token (`sealer#2`) is kept.
fn strip_comment(line: &str) -> &str {
    let cut = line
        .char_indices()
        .find(|&(i, c)| c == '#' && (i == 0 || line[..i].ends_with(char::is_whitespace)))
        .map_or(line.len(), |(i, _)| i);
    line[..cut].trim()
}

/// Role list for the endorse/order/commit pipeline, heaviest roles first.
pub fn hlf_roles(endorsers: u32, committers: u32) -> Vec<Role> {
    let mut roles: Vec<Role> = (1..=endorsers).map(Role::Endorser).collect();
    roles.extend((1..=committers).map(Role::Committer));
    roles.push(Role::Orderer);
    roles.push(Role::Client);
    roles
}

/// Role list for the sealing pipeline: the transaction entry node comes first
/// because accepting transactions is its dominant cost.
pub fn poa_roles(sealers: u32) -> Vec<Role> {
    let mut roles = vec![Role::Client];
    roles.extend((1..=sealers).map(Role::Sealer));
    roles
}
