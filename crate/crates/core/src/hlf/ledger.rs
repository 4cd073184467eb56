use std::collections::{BTreeMap, HashSet};
use std::fmt;

use thiserror::Error;

use crate::digest::{Digest, DigestWriter};
use crate::sim::SimTime;

use super::chaincode::ChaincodeCall;

/// Key → (value, version). Absent keys have version 0; every committed write
/// bumps the version by one.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct VersionedStore {
    entries: BTreeMap<String, (Vec<u8>, u64)>,
}

impl VersionedStore {
    pub fn get(&self, key: &str) -> Option<&(Vec<u8>, u64)> {
        self.entries.get(key)
    }

    pub fn version(&self, key: &str) -> u64 {
        self.entries.get(key).map_or(0, |e| e.1)
    }

    pub fn put(&mut self, key: String, value: Vec<u8>) {
        let e = self.entries.entry(key).or_insert((Vec::new(), 0));
        e.0 = value;
        e.1 += 1;
    }

    pub fn apply(&mut self, rw: &ReadWriteSet) {
        for (k, v) in &rw.writes {
            self.put(k.clone(), v.clone());
        }
    }

    pub fn keys_with_prefix(&self, prefix: &str) -> Vec<String> {
        self.entries
            .range(prefix.to_string()..)
            .take_while(|(k, _)| k.starts_with(prefix))
            .map(|(k, _)| k.clone())
            .collect()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &(Vec<u8>, u64))> {
        self.entries.iter()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn digest(&self) -> Digest {
        let mut w = DigestWriter::new();
        w.u64(self.entries.len() as u64);
        for (k, (v, ver)) in &self.entries {
            w.str(k).bytes(v).u64(*ver);
        }
        w.finish()
    }
}

/// Reads in first-access order with the version observed; writes in
/// first-write order, a later write to the same key replacing the value.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash)]
pub struct ReadWriteSet {
    pub reads: Vec<(String, u64)>,
    pub writes: Vec<(String, Vec<u8>)>,
}

impl ReadWriteSet {
    pub fn record_read(&mut self, key: &str, version: u64) {
        if !self.reads.iter().any(|(k, _)| k == key) {
            self.reads.push((key.to_string(), version));
        }
    }

    pub fn record_write(&mut self, key: String, value: Vec<u8>) {
        match self.writes.iter_mut().find(|(k, _)| *k == key) {
            Some(slot) => slot.1 = value,
            None => self.writes.push((key, value)),
        }
    }

    fn feed(&self, w: &mut DigestWriter) {
        w.u64(self.reads.len() as u64);
        for (k, v) in &self.reads {
            w.str(k).u64(*v);
        }
        w.u64(self.writes.len() as u64);
        for (k, v) in &self.writes {
            w.str(k).bytes(v);
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Endorsement {
    pub tx_id: String,
    pub endorser: String,
    pub read_write_set: ReadWriteSet,
    /// Abstract token standing in for a real signature.
    pub signature: String,
}

impl Endorsement {
    pub fn new(tx_id: &str, endorser: &str, read_write_set: ReadWriteSet) -> Self {
        Self {
            tx_id: tx_id.to_string(),
            endorser: endorser.to_string(),
            read_write_set,
            signature: format!("{endorser}/{tx_id}"),
        }
    }
}

/// m-of-n rule over the eligible endorsers.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EndorsementPolicy {
    pub required: usize,
    pub eligible: Vec<String>,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum LedgerError {
    #[error("endorsement policy needs 1 <= m <= {eligible}, got m = {required}")]
    InvalidPolicy { required: usize, eligible: usize },
    #[error("block {got} does not extend height {height}")]
    OutOfOrder { got: u64, height: u64 },
    #[error("block {seq} does not link to the previous block")]
    BrokenLink { seq: u64 },
}

impl EndorsementPolicy {
    pub fn new(required: usize, eligible: Vec<String>) -> Result<Self, LedgerError> {
        if required == 0 || required > eligible.len() {
            return Err(LedgerError::InvalidPolicy {
                required,
                eligible: eligible.len(),
            });
        }
        Ok(Self { required, eligible })
    }

    /// At least `required` distinct eligible endorsers, all agreeing on
    /// `rwset`, each with a signature over this transaction.
    pub fn satisfied_by(&self, tx_id: &str, rwset: &ReadWriteSet, endorsements: &[Endorsement]) -> bool {
        let mut signers = HashSet::new();
        for e in endorsements {
            if e.tx_id == tx_id
                && e.read_write_set == *rwset
                && e.signature == format!("{}/{}", e.endorser, tx_id)
                && self.eligible.contains(&e.endorser)
            {
                signers.insert(e.endorser.as_str());
            }
        }
        signers.len() >= self.required
    }
}

/// An endorsed transaction as ordered into a block.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BlockTx {
    pub tx_id: String,
    pub client: String,
    pub call: ChaincodeCall,
    pub read_write_set: ReadWriteSet,
    pub endorsements: Vec<Endorsement>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct HlfBlock {
    pub seq: u64,
    pub prev_hash: Digest,
    pub txs: Vec<BlockTx>,
    pub created_time: SimTime,
}

impl HlfBlock {
    /// Digest of the canonical block bytes. Validity flags are peer-local
    /// metadata and are not covered.
    pub fn digest(&self) -> Digest {
        let mut w = DigestWriter::new();
        w.u64(self.seq).digest(self.prev_hash).u64(self.created_time.micros());
        w.u64(self.txs.len() as u64);
        for tx in &self.txs {
            w.str(&tx.tx_id).str(&tx.client).str(&tx.call.function);
            w.u64(tx.call.args.len() as u64);
            for a in &tx.call.args {
                w.str(a);
            }
            tx.read_write_set.feed(&mut w);
            w.u64(tx.endorsements.len() as u64);
            for e in &tx.endorsements {
                w.str(&e.endorser).str(&e.signature);
            }
        }
        w.finish()
    }

    /// Wire size: a fixed header plus one envelope per transaction.
    pub fn wire_bytes(&self, header_bytes: u64, envelope_bytes: u64) -> u64 {
        header_bytes + envelope_bytes * self.txs.len() as u64
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Validity {
    Valid,
    /// A read version changed between endorsement and commit.
    MvccConflict,
    PolicyFailure,
    DuplicateTxId,
}

impl fmt::Display for Validity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Validity::Valid => "valid",
            Validity::MvccConflict => "mvcc_conflict",
            Validity::PolicyFailure => "policy_failure",
            Validity::DuplicateTxId => "duplicate",
        })
    }
}

/// One committing peer's copy of the chain and world state.
#[derive(Clone, Debug, Default)]
pub struct PeerLedger {
    pub store: VersionedStore,
    pub blocks: Vec<HlfBlock>,
    pub flags: Vec<Vec<Validity>>,
    committed: HashSet<String>,
}

impl PeerLedger {
    pub fn height(&self) -> u64 {
        self.blocks.len() as u64
    }

    pub fn head_digest(&self) -> Digest {
        self.blocks.last().map_or(Digest::ZERO, HlfBlock::digest)
    }

    /// Validates every transaction in block order against the policy and the
    /// current versions, applies the valid ones and appends the block.
    pub fn validate_and_commit(
        &mut self,
        block: HlfBlock,
        policy: &EndorsementPolicy,
    ) -> Result<&[Validity], LedgerError> {
        if block.seq != self.height() {
            return Err(LedgerError::OutOfOrder {
                got: block.seq,
                height: self.height(),
            });
        }
        if block.prev_hash != self.head_digest() {
            return Err(LedgerError::BrokenLink { seq: block.seq });
        }
        let mut flags = Vec::with_capacity(block.txs.len());
        for tx in &block.txs {
            let flag = if self.committed.contains(&tx.tx_id) {
                Validity::DuplicateTxId
            } else if !policy.satisfied_by(&tx.tx_id, &tx.read_write_set, &tx.endorsements) {
                Validity::PolicyFailure
            } else if tx.read_write_set.reads.iter().any(|(k, v)| self.store.version(k) != *v) {
                Validity::MvccConflict
            } else {
                self.store.apply(&tx.read_write_set);
                Validity::Valid
            };
            self.committed.insert(tx.tx_id.clone());
            flags.push(flag);
        }
        self.blocks.push(block);
        self.flags.push(flags);
        Ok(self.flags.last().expect("just pushed"))
    }

    /// Index of the first block whose `prev_hash` does not match its
    /// predecessor, if any.
    pub fn first_broken_link(&self) -> Option<usize> {
        let mut prev = Digest::ZERO;
        for (i, b) in self.blocks.iter().enumerate() {
            if b.prev_hash != prev || b.seq != i as u64 {
                return Some(i);
            }
            prev = b.digest();
        }
        None
    }

    /// Fresh store rebuilt by applying the committed valid transactions from
    /// genesis.
    pub fn replay(&self) -> VersionedStore {
        let mut store = VersionedStore::default();
        for (b, flags) in self.blocks.iter().zip(&self.flags) {
            for (tx, f) in b.txs.iter().zip(flags) {
                if *f == Validity::Valid {
                    store.apply(&tx.read_write_set);
                }
            }
        }
        store
    }
}
