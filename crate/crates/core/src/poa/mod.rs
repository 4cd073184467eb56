//! Proof-of-authority value-transfer chain: accounts, pending pools,
//! round-robin sealing at fixed block times and confirmation-depth finality.

mod chain;
mod pipeline;

use serde::Deserialize;
use thiserror::Error;

use crate::placement::PlacementError;
use crate::sim::SimError;
use crate::workload::WorkloadError;

pub use chain::{Account, AccountState, EthTx, PoaBlock, PoaChain, TxRejection};
pub use pipeline::{run_poa, PoaRun};

#[derive(Clone, Debug, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PoaConfig {
    pub blocktime_ms: u64,
    pub block_tx_limit: usize,
    /// Blocks on top of the including block that make a transaction final.
    pub confirmations: u64,
    /// Transactions still not included this many blocks after submission are
    /// dropped.
    pub drop_horizon_blocks: u64,
    /// Entry-node cost of accepting one transaction.
    pub accept_work: f64,
    /// Entry-node cost of forwarding one transaction to one sealer instance.
    pub forward_work: f64,
    /// Sealer cost per block, plus `apply_work` per included transaction.
    pub seal_work: f64,
    pub apply_work: f64,
    pub tx_bytes: u64,
    pub block_header_bytes: u64,
    pub gas_per_tx: u64,
    /// Genesis accounts `acct00`, `acct01`, ...
    pub accounts: usize,
    pub genesis_balance: u64,
    pub max_time_ms: u64,
}

impl Default for PoaConfig {
    fn default() -> Self {
        Self {
            blocktime_ms: 5000,
            block_tx_limit: 300,
            confirmations: 12,
            drop_horizon_blocks: 50,
            accept_work: 15.0,
            forward_work: 4.0,
            seal_work: 10.0,
            apply_work: 0.5,
            tx_bytes: 250,
            block_header_bytes: 600,
            gas_per_tx: 21_000,
            accounts: 16,
            genesis_balance: 1_000_000_000,
            max_time_ms: 6 * 3_600_000,
        }
    }
}

impl PoaConfig {
    pub fn account_name(i: usize) -> String {
        format!("acct{i:02}")
    }
}

#[derive(Debug, Error)]
pub enum PoaError {
    #[error("placement plan has no `{0}` role")]
    MissingRole(&'static str),
    #[error("unknown account `{0}`")]
    UnknownAccount(String),
    #[error("height {height} is beyond the chain head {head}")]
    BeyondHead { height: u64, head: u64 },
    #[error("block {block}: transaction {tx_id} does not apply ({reason:?})")]
    InvalidHistory { block: u64, tx_id: String, reason: TxRejection },
    #[error("transaction {tx_id}: expected `transfer(from, to, value)`, got `{call}`")]
    BadCall { tx_id: String, call: String },
    #[error("invalid configuration: {0}")]
    Config(&'static str),
    #[error(transparent)]
    Placement(#[from] PlacementError),
    #[error(transparent)]
    Workload(#[from] WorkloadError),
    #[error(transparent)]
    Sim(#[from] SimError),
}
