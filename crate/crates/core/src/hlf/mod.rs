//! Execute-order-validate pipeline: clients, endorsers, a single orderer and
//! committing peers running on the discrete-event engine.

mod chaincode;
mod ledger;
mod pipeline;

use serde::Deserialize;
use thiserror::Error;

use crate::placement::PlacementError;
use crate::sim::SimError;
use crate::workload::WorkloadError;

pub use chaincode::{balance_key, execute, ChaincodeCall, ChaincodeError, SimulationStub};
pub use ledger::{
    BlockTx, Endorsement, EndorsementPolicy, HlfBlock, LedgerError, PeerLedger, ReadWriteSet, Validity,
    VersionedStore,
};
pub use pipeline::{run_hlf, HlfRun, PeerReport};

/// Pipeline parameters. Work is in abstract units: one unit takes
/// `base_service_ms` on a node with `cpu_capacity = 1`.
#[derive(Clone, Debug, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HlfConfig {
    pub block_size: usize,
    /// Idle time after the last buffered transaction before a partial block
    /// is cut.
    pub batch_timeout_ms: u64,
    /// `m` of the m-of-n endorsement policy over all endorsers in the plan.
    pub endorsements_required: usize,
    /// Client cost of preparing and sending one proposal fan-out.
    pub client_work: f64,
    /// Chaincode simulation on an endorser, per proposal.
    pub endorse_work: f64,
    /// Orderer cost per envelope.
    pub order_work: f64,
    /// Validation and commit per transaction, including signature checks.
    pub commit_work: f64,
    /// Fixed validation cost per block.
    pub block_work: f64,
    pub proposal_bytes: u64,
    pub endorsement_bytes: u64,
    pub envelope_bytes: u64,
    pub block_header_bytes: u64,
    pub event_bytes: u64,
    /// Safety stop for the event loop.
    pub max_time_ms: u64,
}

impl Default for HlfConfig {
    fn default() -> Self {
        Self {
            block_size: 10,
            batch_timeout_ms: 1000,
            endorsements_required: 1,
            client_work: 5.0,
            endorse_work: 867.0,
            order_work: 5.0,
            commit_work: 211.0,
            block_work: 20.0,
            proposal_bytes: 3000,
            endorsement_bytes: 3500,
            envelope_bytes: 4000,
            block_header_bytes: 1000,
            event_bytes: 200,
            max_time_ms: 6 * 3_600_000,
        }
    }
}

#[derive(Debug, Error)]
pub enum HlfError {
    #[error("placement plan has no `{0}` role")]
    MissingRole(&'static str),
    #[error("block size must be at least 1")]
    ZeroBlockSize,
    #[error(transparent)]
    Placement(#[from] PlacementError),
    #[error(transparent)]
    Ledger(#[from] LedgerError),
    #[error(transparent)]
    Workload(#[from] WorkloadError),
    #[error(transparent)]
    Sim(#[from] SimError),
}
