use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::rc::Rc;

use super::chaincode::{execute, ChaincodeCall};
use super::ledger::{BlockTx, Endorsement, EndorsementPolicy, HlfBlock, PeerLedger, Validity};
use super::{HlfConfig, HlfError};
use crate::digest::Digest;
use crate::metrics::{CpuUsage, TxRecord, TxStatus};
use crate::placement::{PlacementPlan, Role};
use crate::scalar::Scalar;
use crate::sim::{Engine, EngineConfig, SimError, SimEvent, SimTime, SimTrace, World};
use crate::topology::{NodeIdx, Topology};
use crate::workload::{generate, Submission, WorkloadMode, WorkloadSpec};

/// Final state of one committing peer.
#[derive(Clone, Debug)]
pub struct PeerReport {
    pub role: Role,
    pub node: String,
    pub ledger: PeerLedger,
}

#[derive(Clone, Debug)]
pub struct HlfRun {
    pub txs: Vec<TxRecord>,
    pub peers: Vec<PeerReport>,
    pub trace: SimTrace,
    pub cpu: Vec<CpuUsage>,
    /// Time of the last processed event.
    pub end: SimTime,
    /// Transactions refused because endorsers returned differing results.
    pub endorsement_mismatches: usize,
}

impl HlfRun {
    /// Store digests of every peer, in peer order.
    pub fn store_digests(&self) -> Vec<Digest> {
        self.peers.iter().map(|p| p.ledger.store.digest()).collect()
    }
}

enum Msg {
    Submit(usize),
    FanOut(usize),
    Proposal { tx: usize, peer: usize },
    Simulated { tx: usize, peer: usize },
    Response { tx: usize, peer: usize, endorsement: Result<Rc<Endorsement>, String> },
    Envelope(usize),
    Ordered(usize),
    BatchTimeout(u64),
    Block { peer: usize, block: Rc<HlfBlock> },
    Validated { peer: usize, seq: u64 },
    CommitEvent { seq: u64, flags: Rc<Vec<Validity>> },
}

impl fmt::Display for Msg {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Msg::Submit(t) => write!(f, "submit tx={t}"),
            Msg::FanOut(t) => write!(f, "fan_out tx={t}"),
            Msg::Proposal { tx, peer } => write!(f, "proposal tx={tx} peer={peer}"),
            Msg::Simulated { tx, peer } => write!(f, "simulated tx={tx} peer={peer}"),
            Msg::Response { tx, peer, endorsement } => match endorsement {
                Ok(_) => write!(f, "endorsement tx={tx} peer={peer}"),
                Err(why) => write!(f, "refusal tx={tx} peer={peer} {why}"),
            },
            Msg::Envelope(t) => write!(f, "envelope tx={t}"),
            Msg::Ordered(t) => write!(f, "ordered tx={t}"),
            Msg::BatchTimeout(g) => write!(f, "batch_timeout gen={g}"),
            Msg::Block { peer, block } => write!(f, "block seq={} txs={} peer={peer}", block.seq, block.txs.len()),
            Msg::Validated { peer, seq } => write!(f, "validated seq={seq} peer={peer}"),
            Msg::CommitEvent { seq, flags } => write!(f, "commit_event seq={seq} txs={}", flags.len()),
        }
    }
}

struct Peer {
    role: Role,
    name: String,
    node: NodeIdx,
    ledger: PeerLedger,
    /// Next block sequence to hand to the CPU.
    next_seq: u64,
    /// Blocks received ahead of their predecessor.
    early: BTreeMap<u64, Rc<HlfBlock>>,
    /// Blocks waiting on the CPU for validation.
    validating: BTreeMap<u64, Rc<HlfBlock>>,
    /// Proposal ids already endorsed by this peer.
    seen: HashSet<String>,
}

struct Slot {
    sub: Submission,
    call: ChaincodeCall,
    record: TxRecord,
    responses: Vec<Rc<Endorsement>>,
    answered: usize,
    envelope: Option<BlockTx>,
}

struct HlfWorld<'c> {
    cfg: &'c HlfConfig,
    policy: EndorsementPolicy,
    client: NodeIdx,
    client_name: String,
    orderer: NodeIdx,
    peers: Vec<Peer>,
    endorsers: Vec<usize>,
    event_peer: usize,
    slots: Vec<Slot>,
    sequential: bool,
    next_release: usize,
    buffer: Vec<usize>,
    generation: u64,
    next_block: u64,
    head: Digest,
    block_slots: Vec<Vec<usize>>,
    mismatches: usize,
}

type Eng<'e, 't, T> = Engine<'t, T, Msg>;

impl HlfWorld<'_> {
    fn release_next<T: Scalar>(&mut self, e: &mut Eng<'_, '_, T>) -> Result<(), SimError> {
        if self.sequential && self.next_release < self.slots.len() {
            let i = self.next_release;
            self.next_release += 1;
            e.timer(self.client, e.now(), Msg::Submit(i))?;
        }
        Ok(())
    }

    fn respond<T: Scalar>(
        &mut self,
        e: &mut Eng<'_, '_, T>,
        tx: usize,
        peer: usize,
        endorsement: Result<Rc<Endorsement>, String>,
    ) -> Result<(), SimError> {
        let from = self.peers[peer].node;
        e.send_message(from, self.client, self.cfg.endorsement_bytes, Msg::Response { tx, peer, endorsement })?;
        Ok(())
    }

    fn on_response<T: Scalar>(
        &mut self,
        e: &mut Eng<'_, '_, T>,
        tx: usize,
        endorsement: Result<Rc<Endorsement>, String>,
    ) -> Result<(), SimError> {
        let m = self.policy.required;
        let slot = &mut self.slots[tx];
        slot.answered += 1;
        if slot.envelope.is_some() || slot.record.status != TxStatus::Pending {
            return Ok(());
        }
        if let Ok(en) = endorsement {
            slot.responses.push(en);
        }
        let last = slot.responses.last().cloned();
        if let Some(last) = last {
            let matching: Vec<Endorsement> = slot
                .responses
                .iter()
                .filter(|r| r.read_write_set == last.read_write_set)
                .map(|r| (**r).clone())
                .collect();
            if self.policy.satisfied_by(&slot.sub.tx_id, &last.read_write_set, &matching) {
                slot.record.stage = Some(e.now());
                slot.envelope = Some(BlockTx {
                    tx_id: slot.sub.tx_id.clone(),
                    client: self.client_name.clone(),
                    call: slot.call.clone(),
                    read_write_set: last.read_write_set.clone(),
                    endorsements: matching.into_iter().take(m).collect(),
                });
                e.send_message(self.client, self.orderer, self.cfg.envelope_bytes, Msg::Envelope(tx))?;
                return Ok(());
            }
        }
        if slot.answered == self.endorsers.len() {
            let distinct: HashSet<_> = slot.responses.iter().map(|r| &r.read_write_set).collect();
            if distinct.len() > 1 {
                self.mismatches += 1;
            }
            slot.record.status = TxStatus::Rejected;
            slot.record.done = Some(e.now());
            self.release_next(e)?;
        }
        Ok(())
    }

    fn cut_block<T: Scalar>(&mut self, e: &mut Eng<'_, '_, T>) -> Result<(), SimError> {
        self.generation += 1;
        if self.buffer.is_empty() {
            return Ok(());
        }
        let slots: Vec<usize> = std::mem::take(&mut self.buffer);
        let txs = slots
            .iter()
            .map(|&i| self.slots[i].envelope.clone().expect("ordered txs carry an envelope"))
            .collect();
        let block = HlfBlock {
            seq: self.next_block,
            prev_hash: self.head,
            txs,
            created_time: e.now(),
        };
        self.head = block.digest();
        self.next_block += 1;
        for &i in &slots {
            self.slots[i].record.block = Some(block.seq);
        }
        self.block_slots.push(slots);
        let bytes = block.wire_bytes(self.cfg.block_header_bytes, self.cfg.envelope_bytes);
        let block = Rc::new(block);
        for (p, peer) in self.peers.iter().enumerate() {
            e.send_message(self.orderer, peer.node, bytes, Msg::Block { peer: p, block: block.clone() })?;
        }
        Ok(())
    }

    fn schedule_validation<T: Scalar>(&mut self, e: &mut Eng<'_, '_, T>, p: usize) -> Result<(), SimError> {
        let cfg = self.cfg;
        let peer = &mut self.peers[p];
        while let Some(block) = peer.early.remove(&peer.next_seq) {
            let work = cfg.block_work + cfg.commit_work * block.txs.len() as f64;
            e.cpu_submit(peer.node, work, Msg::Validated { peer: p, seq: block.seq })?;
            peer.validating.insert(block.seq, block);
            peer.next_seq += 1;
        }
        Ok(())
    }
}

impl<T: Scalar> World<T, Msg> for HlfWorld<'_> {
    fn handle(&mut self, e: &mut Eng<'_, '_, T>, ev: SimEvent<Msg>) -> Result<(), SimError> {
        match ev.payload {
            Msg::Submit(tx) => {
                self.slots[tx].record.submit = Some(e.now());
                e.cpu_submit(self.client, self.cfg.client_work, Msg::FanOut(tx))?;
            }
            Msg::FanOut(tx) => {
                for &p in &self.endorsers {
                    let to = self.peers[p].node;
                    e.send_message(self.client, to, self.cfg.proposal_bytes, Msg::Proposal { tx, peer: p })?;
                }
            }
            Msg::Proposal { tx, peer } => {
                let id = &self.slots[tx].sub.tx_id;
                if self.peers[peer].seen.insert(id.clone()) {
                    let node = self.peers[peer].node;
                    e.cpu_submit(node, self.cfg.endorse_work, Msg::Simulated { tx, peer })?;
                } else {
                    self.respond(e, tx, peer, Err(format!("duplicate tx id {id}")))?;
                }
            }
            Msg::Simulated { tx, peer } => {
                let slot = &self.slots[tx];
                let p = &self.peers[peer];
                let result = execute(&slot.call, &p.ledger.store, &slot.sub.tx_id)
                    .map(|rw| Rc::new(Endorsement::new(&slot.sub.tx_id, &p.name, rw)))
                    .map_err(|err| err.to_string());
                self.respond(e, tx, peer, result)?;
            }
            Msg::Response { tx, endorsement, .. } => self.on_response(e, tx, endorsement)?,
            Msg::Envelope(tx) => {
                e.cpu_submit(self.orderer, self.cfg.order_work, Msg::Ordered(tx))?;
            }
            Msg::Ordered(tx) => {
                self.buffer.push(tx);
                if self.buffer.len() >= self.cfg.block_size {
                    self.cut_block(e)?;
                } else {
                    self.generation += 1;
                    let at = e.now() + SimTime::from_ms(self.cfg.batch_timeout_ms);
                    e.timer(self.orderer, at, Msg::BatchTimeout(self.generation))?;
                }
            }
            Msg::BatchTimeout(generation) => {
                if generation == self.generation {
                    self.cut_block(e)?;
                }
            }
            Msg::Block { peer, block } => {
                if block.seq >= self.peers[peer].next_seq {
                    self.peers[peer].early.insert(block.seq, block);
                }
                self.schedule_validation(e, peer)?;
            }
            Msg::Validated { peer, seq } => {
                let p = &mut self.peers[peer];
                let block = p.validating.remove(&seq).expect("validated block was queued");
                let flags = p
                    .ledger
                    .validate_and_commit((*block).clone(), &self.policy)
                    .expect("blocks are validated in sequence")
                    .to_vec();
                if peer == self.event_peer {
                    let bytes = self.cfg.event_bytes * flags.len() as u64;
                    let from = p.node;
                    e.send_message(from, self.client, bytes, Msg::CommitEvent { seq, flags: Rc::new(flags) })?;
                }
            }
            Msg::CommitEvent { seq, flags } => {
                let slots = self.block_slots[seq as usize].clone();
                for (i, flag) in slots.into_iter().zip(flags.iter()) {
                    let r = &mut self.slots[i].record;
                    r.done = Some(e.now());
                    r.seen = r.done;
                    r.status = if *flag == Validity::Valid {
                        TxStatus::Committed
                    } else {
                        TxStatus::Invalid
                    };
                    self.release_next(e)?;
                }
            }
        }
        Ok(())
    }
}

/// Runs one workload through the pipeline described by `plan`.
///
/// The transaction's commit time is when the client hears the commit event
/// from its event peer: the first committer, or the first endorser when the
/// plan has no dedicated committers.
pub fn run_hlf<T: Scalar>(
    t: &Topology<T>,
    plan: &PlacementPlan,
    cfg: &HlfConfig,
    engine: EngineConfig,
    workload: &WorkloadSpec,
) -> Result<HlfRun, HlfError> {
    let subs = generate(workload, t)?;
    let world = HlfWorld::new(t, plan, cfg, workload.target.as_deref(), subs, workload.mode)?;
    world.run(t, plan, engine)
}

impl<'c> HlfWorld<'c> {
    fn new<T: Scalar>(
        t: &Topology<T>,
        plan: &PlacementPlan,
        cfg: &'c HlfConfig,
        target: Option<&str>,
        subs: Vec<Submission>,
        mode: WorkloadMode,
    ) -> Result<Self, HlfError> {
        if cfg.block_size == 0 {
            return Err(HlfError::ZeroBlockSize);
        }
        let roles = plan.resolve(t)?;
        let find = |kind: &'static str| {
            roles
                .iter()
                .find(|(r, _)| r.kind() == kind)
                .map(|(_, n)| *n)
                .ok_or(HlfError::MissingRole(kind))
        };
        let orderer = find("orderer")?;
        let client = match target {
            Some(id) => t.node_index(id).map_err(crate::placement::PlacementError::from)?,
            None => find("client")?,
        };
        let mut peers = Vec::new();
        for kind in ["endorser", "committer"] {
            for (role, node) in roles.iter().filter(|(r, _)| r.kind() == kind) {
                peers.push(Peer {
                    role: *role,
                    name: role.to_string(),
                    node: *node,
                    ledger: PeerLedger::default(),
                    next_seq: 0,
                    early: BTreeMap::new(),
                    validating: BTreeMap::new(),
                    seen: HashSet::new(),
                });
            }
        }
        let endorsers: Vec<usize> = (0..peers.len()).filter(|&p| peers[p].role.kind() == "endorser").collect();
        if endorsers.is_empty() {
            return Err(HlfError::MissingRole("endorser"));
        }
        let event_peer = (0..peers.len())
            .find(|&p| peers[p].role.kind() == "committer")
            .unwrap_or(endorsers[0]);
        let policy = EndorsementPolicy::new(
            cfg.endorsements_required,
            endorsers.iter().map(|&p| peers[p].name.clone()).collect(),
        )?;
        Ok(Self {
            cfg,
            policy,
            client,
            client_name: t.id(client).to_string(),
            orderer,
            peers,
            endorsers,
            event_peer,
            slots: subs
                .into_iter()
                .map(|sub| Slot {
                    call: ChaincodeCall {
                        function: sub.function.clone(),
                        args: sub.args.clone(),
                    },
                    record: TxRecord::new(sub.tx_id.clone()),
                    sub,
                    responses: Vec::new(),
                    answered: 0,
                    envelope: None,
                })
                .collect(),
            sequential: mode == WorkloadMode::Sequential,
            next_release: 1,
            buffer: Vec::new(),
            generation: 0,
            next_block: 0,
            head: Digest::ZERO,
            block_slots: Vec::new(),
            mismatches: 0,
        })
    }

    fn run<T: Scalar>(mut self, t: &Topology<T>, plan: &PlacementPlan, engine: EngineConfig) -> Result<HlfRun, HlfError> {
        let mut engine: Engine<'_, T, Msg> = Engine::new(t, engine);
        for s in &self.slots {
            if let Some(at) = s.sub.submit_at {
                engine.timer(self.client, at, Msg::Submit(s.sub.index))?;
            }
        }
        let trace = engine.run_until(SimTime::from_ms(self.cfg.max_time_ms), &mut self)?;
        let end = engine.now();

        let mut hosted: BTreeMap<NodeIdx, Vec<String>> = BTreeMap::new();
        for (r, n) in plan.resolve(t)? {
            hosted.entry(n).or_default().push(r.to_string());
        }
        let cpu = hosted
            .into_iter()
            .map(|(n, roles)| CpuUsage {
                node: t.id(n).to_string(),
                roles: roles.join("+"),
                busy_fraction: if end == SimTime::ZERO {
                    0.0
                } else {
                    engine.cpu(n).busy_time(SimTime::ZERO, end) as f64 / end.micros() as f64
                },
            })
            .collect();
        Ok(HlfRun {
            txs: self.slots.into_iter().map(|s| s.record).collect(),
            peers: self
                .peers
                .into_iter()
                .map(|p| PeerReport {
                    role: p.role,
                    node: t.id(p.node).to_string(),
                    ledger: p.ledger,
                })
                .collect(),
            trace,
            cpu,
            end,
            endorsement_mismatches: self.mismatches,
        })
    }
}
