use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use super::chain::{AccountState, EthTx, PoaChain, TxRejection};
use super::{PoaConfig, PoaError};
use crate::metrics::{CpuUsage, TxRecord, TxStatus};
use crate::placement::PlacementPlan;
use crate::scalar::Scalar;
use crate::sim::{Engine, EngineConfig, SimError, SimEvent, SimTime, SimTrace, World};
use crate::topology::{NodeIdx, Topology};
use crate::workload::{generate, WorkloadMode, WorkloadSpec};

#[derive(Clone, Debug)]
pub struct PoaRun {
    pub txs: Vec<TxRecord>,
    pub chain: PoaChain,
    pub trace: SimTrace,
    pub cpu: Vec<CpuUsage>,
    pub end: SimTime,
}

impl PoaRun {
    pub fn dropped(&self) -> usize {
        self.txs.iter().filter(|r| r.status == TxStatus::Dropped).count()
    }

    /// Distinct blocks holding at least one workload transaction.
    pub fn blocks_spanned(&self) -> usize {
        self.txs.iter().filter_map(|r| r.block).collect::<BTreeSet<_>>().len()
    }
}

enum Msg {
    Submit(usize),
    Accepted(usize),
    TxArrive { tx: usize, sealer: usize },
    Seal(u64),
    Sealed(u64),
    BlockArrive(u64),
}

impl fmt::Display for Msg {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Msg::Submit(t) => write!(f, "submit tx={t}"),
            Msg::Accepted(t) => write!(f, "accepted tx={t}"),
            Msg::TxArrive { tx, sealer } => write!(f, "pool tx={tx} sealer={sealer}"),
            Msg::Seal(n) => write!(f, "seal block={n}"),
            Msg::Sealed(n) => write!(f, "sealed block={n}"),
            Msg::BlockArrive(n) => write!(f, "block block={n}"),
        }
    }
}

struct Sealer {
    name: String,
    node: NodeIdx,
    /// Transaction slots in arrival order.
    pool: Vec<usize>,
}

struct Slot {
    tx: EthTx,
    record: TxRecord,
    /// Chain head when the transaction was submitted.
    submit_head: Option<u64>,
    included: bool,
    released: bool,
}

impl Slot {
    fn awaiting_inclusion(&self) -> bool {
        !self.included && self.record.status == TxStatus::Pending
    }
}

struct PoaWorld<'c> {
    cfg: &'c PoaConfig,
    entry: NodeIdx,
    sealers: Vec<Sealer>,
    /// Distinct nodes hosting any role; every block is broadcast to them.
    audience: Vec<NodeIdx>,
    slots: Vec<Slot>,
    chain: PoaChain,
    state: AccountState,
    block_slots: Vec<Vec<usize>>,
    next_nonce: BTreeMap<String, u64>,
    sequential: bool,
    next_release: usize,
    unresolved: usize,
}

type Eng<'t, T> = Engine<'t, T, Msg>;

impl PoaWorld<'_> {
    fn blocktime(&self) -> SimTime {
        SimTime::from_ms(self.cfg.blocktime_ms)
    }

    fn release_next<T: Scalar>(&mut self, e: &mut Eng<'_, T>) -> Result<(), SimError> {
        if self.sequential && self.next_release < self.slots.len() {
            let i = self.next_release;
            self.next_release += 1;
            e.timer(self.entry, e.now(), Msg::Submit(i))?;
        }
        Ok(())
    }

    fn resolve<T: Scalar>(&mut self, e: &mut Eng<'_, T>, i: usize, status: TxStatus) -> Result<(), SimError> {
        let r = &mut self.slots[i].record;
        r.status = status;
        if status != TxStatus::Dropped {
            r.done = Some(e.now());
        }
        self.unresolved -= 1;
        if status != TxStatus::Committed {
            self.release_once(e, i)?;
        }
        Ok(())
    }

    fn release_once<T: Scalar>(&mut self, e: &mut Eng<'_, T>, i: usize) -> Result<(), SimError> {
        if !self.slots[i].released {
            self.slots[i].released = true;
            self.release_next(e)?;
        }
        Ok(())
    }

    /// Drains the in-turn sealer's pool into block `n`.
    fn seal<T: Scalar>(&mut self, e: &mut Eng<'_, T>, n: u64) -> Result<(), SimError> {
        let s = ((n - 1) % self.sealers.len() as u64) as usize;
        let mut state = self.state.clone();
        let mut picked = Vec::new();
        let mut rejected = Vec::new();
        let mut pool = std::mem::take(&mut self.sealers[s].pool);
        pool.retain(|&i| self.slots[i].awaiting_inclusion());
        // repeated passes let a nonce that arrived late unblock its successors
        let mut progress = true;
        while progress && picked.len() < self.cfg.block_tx_limit {
            progress = false;
            for &i in &pool {
                if picked.len() == self.cfg.block_tx_limit {
                    break;
                }
                if picked.contains(&i) || rejected.contains(&i) {
                    continue;
                }
                match state.apply(&self.slots[i].tx) {
                    Ok(()) => {
                        picked.push(i);
                        progress = true;
                    }
                    Err(TxRejection::NonceGap) => {}
                    Err(_) => rejected.push(i),
                }
            }
        }
        pool.retain(|i| !picked.contains(i) && !rejected.contains(i));
        self.sealers[s].pool = pool;

        let txs = picked.iter().map(|&i| self.slots[i].tx.clone()).collect();
        let name = self.sealers[s].name.clone();
        self.chain.append(&name, txs, e.now(), &state);
        self.state = state;
        for &i in &picked {
            let slot = &mut self.slots[i];
            slot.included = true;
            slot.record.stage = Some(e.now());
            slot.record.block = Some(n);
        }
        let work = self.cfg.seal_work + self.cfg.apply_work * picked.len() as f64;
        self.block_slots.push(picked);
        for i in rejected {
            self.resolve(e, i, TxStatus::Rejected)?;
        }

        if n > self.cfg.confirmations {
            let b = (n - self.cfg.confirmations) as usize;
            for i in self.block_slots[b].clone() {
                self.resolve(e, i, TxStatus::Committed)?;
            }
        }
        for i in 0..self.slots.len() {
            let slot = &self.slots[i];
            if slot.awaiting_inclusion() && slot.submit_head.is_some_and(|h| n - h >= self.cfg.drop_horizon_blocks) {
                self.resolve(e, i, TxStatus::Dropped)?;
            }
        }

        let node = self.sealers[s].node;
        e.cpu_submit(node, work, Msg::Sealed(n))?;
        if self.unresolved > 0 {
            let next = ((n % self.sealers.len() as u64) as usize, n + 1);
            let at = SimTime(self.blocktime().micros() * next.1);
            e.timer(self.sealers[next.0].node, at, Msg::Seal(next.1))?;
        }
        Ok(())
    }
}

impl<T: Scalar> World<T, Msg> for PoaWorld<'_> {
    fn handle(&mut self, e: &mut Eng<'_, T>, ev: SimEvent<Msg>) -> Result<(), SimError> {
        match ev.payload {
            Msg::Submit(i) => {
                let slot = &mut self.slots[i];
                let nonce = self.next_nonce.entry(slot.tx.from.clone()).or_insert(0);
                slot.tx.nonce = *nonce;
                *nonce += 1;
                slot.tx.submit_time = e.now();
                slot.record.submit = Some(e.now());
                slot.submit_head = Some(self.chain.head());
                let work = self.cfg.accept_work + self.cfg.forward_work * self.sealers.len() as f64;
                e.cpu_submit(self.entry, work, Msg::Accepted(i))?;
            }
            Msg::Accepted(i) => {
                for s in 0..self.sealers.len() {
                    e.send_message(self.entry, self.sealers[s].node, self.cfg.tx_bytes, Msg::TxArrive { tx: i, sealer: s })?;
                }
            }
            Msg::TxArrive { tx, sealer } => {
                if self.slots[tx].awaiting_inclusion() {
                    self.sealers[sealer].pool.push(tx);
                }
            }
            Msg::Seal(n) => self.seal(e, n)?,
            Msg::Sealed(n) => {
                let block = &self.chain.blocks[n as usize];
                let bytes = block.wire_bytes(self.cfg.block_header_bytes, self.cfg.tx_bytes);
                let from = ev.node;
                for to in self.audience.clone() {
                    e.send_message(from, to, bytes, Msg::BlockArrive(n))?;
                }
            }
            Msg::BlockArrive(n) => {
                if ev.node == self.entry && n > self.cfg.confirmations {
                    let b = (n - self.cfg.confirmations) as usize;
                    for i in self.block_slots[b].clone() {
                        self.slots[i].record.seen = Some(e.now());
                        self.release_once(e, i)?;
                    }
                }
            }
        }
        Ok(())
    }
}

/// Runs `transfer(from, to, value)` transactions through round-robin sealing.
///
/// Sealing time is the seal instant of the including block minus the
/// submission time; completion is the seal instant of the block
/// `confirmations` deeper. Sequential workloads submit the next transaction
/// when the confirming block reaches the entry node.
pub fn run_poa<T: Scalar>(
    t: &Topology<T>,
    plan: &PlacementPlan,
    cfg: &PoaConfig,
    engine: EngineConfig,
    workload: &WorkloadSpec,
) -> Result<PoaRun, PoaError> {
    if cfg.blocktime_ms == 0 || cfg.block_tx_limit == 0 {
        return Err(PoaError::Config("blocktime_ms and block_tx_limit must be positive"));
    }
    let roles = plan.resolve(t)?;
    let subs = generate(workload, t)?;
    let sealers: Vec<Sealer> = roles
        .iter()
        .filter(|(r, _)| r.kind() == "sealer")
        .map(|(r, n)| Sealer {
            name: r.to_string(),
            node: *n,
            pool: Vec::new(),
        })
        .collect();
    if sealers.is_empty() {
        return Err(PoaError::MissingRole("sealer"));
    }
    let entry = match &workload.target {
        Some(id) => t.node_index(id).map_err(crate::placement::PlacementError::from)?,
        None => roles
            .iter()
            .find(|(r, _)| r.kind() == "client")
            .map(|(_, n)| *n)
            .ok_or(PoaError::MissingRole("client"))?,
    };
    let mut audience: Vec<NodeIdx> = roles.iter().map(|(_, n)| *n).chain([entry]).collect();
    audience.sort();
    audience.dedup();

    let genesis: BTreeMap<String, u64> = (0..cfg.accounts)
        .map(|i| (PoaConfig::account_name(i), cfg.genesis_balance))
        .collect();
    let mut slots = Vec::with_capacity(subs.len());
    for s in &subs {
        let bad = || PoaError::BadCall {
            tx_id: s.tx_id.clone(),
            call: format!("{}({})", s.function, s.args.join(",")),
        };
        if s.function != "transfer" || s.args.len() != 3 {
            return Err(bad());
        }
        for a in &s.args[..2] {
            if !genesis.contains_key(a) {
                return Err(PoaError::UnknownAccount(a.clone()));
            }
        }
        slots.push(Slot {
            tx: EthTx {
                tx_id: s.tx_id.clone(),
                from: s.args[0].clone(),
                to: s.args[1].clone(),
                value: s.args[2].parse().map_err(|_| bad())?,
                nonce: 0,
                gas: cfg.gas_per_tx,
                submit_time: SimTime::ZERO,
            },
            record: TxRecord::new(s.tx_id.clone()),
            submit_head: None,
            included: false,
            released: false,
        });
    }

    let mut engine: Eng<'_, T> = Engine::new(t, engine);
    for s in &subs {
        if let Some(at) = s.submit_at {
            engine.timer(entry, at, Msg::Submit(s.index))?;
        }
    }
    engine.timer(sealers[0].node, SimTime::from_ms(cfg.blocktime_ms), Msg::Seal(1))?;
    let mut world = PoaWorld {
        cfg,
        entry,
        sealers,
        audience,
        unresolved: slots.len(),
        slots,
        state: AccountState::genesis(&genesis),
        chain: PoaChain::new(genesis),
        block_slots: vec![Vec::new()],
        next_nonce: BTreeMap::new(),
        sequential: workload.mode == WorkloadMode::Sequential,
        next_release: 1,
    };
    let trace = engine.run_until(SimTime::from_ms(cfg.max_time_ms), &mut world)?;
    let end = engine.now();

    let mut hosted: BTreeMap<NodeIdx, Vec<String>> = BTreeMap::new();
    for (r, n) in &roles {
        hosted.entry(*n).or_default().push(r.to_string());
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
    Ok(PoaRun {
        txs: world.slots.into_iter().map(|s| s.record).collect(),
        chain: world.chain,
        trace,
        cpu,
        end,
    })
}
