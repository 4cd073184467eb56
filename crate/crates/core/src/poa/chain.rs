use std::collections::BTreeMap;

use crate::digest::{Digest, DigestWriter};
use crate::sim::SimTime;

use super::PoaError;

/// A value transfer between two externally owned accounts.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EthTx {
    pub tx_id: String,
    pub from: String,
    pub to: String,
    pub value: u64,
    pub nonce: u64,
    pub gas: u64,
    pub submit_time: SimTime,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TxRejection {
    UnknownAccount,
    NonceGap,
    StaleNonce,
    InsufficientBalance,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Account {
    pub balance: u64,
    pub nonce: u64,
}

/// World state: every account's balance and nonce.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct AccountState {
    pub accounts: BTreeMap<String, Account>,
}

impl AccountState {
    pub fn genesis(alloc: &BTreeMap<String, u64>) -> Self {
        Self {
            accounts: alloc
                .iter()
                .map(|(a, b)| (a.clone(), Account { balance: *b, nonce: 0 }))
                .collect(),
        }
    }

    /// Checks `tx` against the state without applying it.
    pub fn check(&self, tx: &EthTx) -> Result<(), TxRejection> {
        let from = self.accounts.get(&tx.from).ok_or(TxRejection::UnknownAccount)?;
        if !self.accounts.contains_key(&tx.to) {
            return Err(TxRejection::UnknownAccount);
        }
        if tx.nonce > from.nonce {
            return Err(TxRejection::NonceGap);
        }
        if tx.nonce < from.nonce {
            return Err(TxRejection::StaleNonce);
        }
        if from.balance < tx.value {
            return Err(TxRejection::InsufficientBalance);
        }
        Ok(())
    }

    pub fn apply(&mut self, tx: &EthTx) -> Result<(), TxRejection> {
        self.check(tx)?;
        let from = self.accounts.get_mut(&tx.from).expect("checked");
        from.balance -= tx.value;
        from.nonce += 1;
        self.accounts.get_mut(&tx.to).expect("checked").balance += tx.value;
        Ok(())
    }

    pub fn total_supply(&self) -> u128 {
        self.accounts.values().map(|a| a.balance as u128).sum()
    }

    pub fn root(&self) -> Digest {
        let mut w = DigestWriter::new();
        w.u64(self.accounts.len() as u64);
        for (addr, a) in &self.accounts {
            w.str(addr).u64(a.balance).u64(a.nonce);
        }
        w.finish()
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PoaBlock {
    pub number: u64,
    pub prev_hash: Digest,
    /// Sealer instance name, `genesis` for block 0.
    pub sealer: String,
    pub txs: Vec<EthTx>,
    pub seal_time: SimTime,
    /// State after applying this block.
    pub state_root: Digest,
}

impl PoaBlock {
    pub fn digest(&self) -> Digest {
        let mut w = DigestWriter::new();
        w.u64(self.number)
            .digest(self.prev_hash)
            .str(&self.sealer)
            .u64(self.seal_time.micros())
            .digest(self.state_root);
        w.u64(self.txs.len() as u64);
        for tx in &self.txs {
            w.str(&tx.tx_id)
                .str(&tx.from)
                .str(&tx.to)
                .u64(tx.value)
                .u64(tx.nonce)
                .u64(tx.gas)
                .u64(tx.submit_time.micros());
        }
        w.finish()
    }

    pub fn wire_bytes(&self, header_bytes: u64, tx_bytes: u64) -> u64 {
        header_bytes + tx_bytes * self.txs.len() as u64
    }
}

/// Canonical chain from the genesis block (number 0).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PoaChain {
    pub genesis: BTreeMap<String, u64>,
    pub blocks: Vec<PoaBlock>,
}

impl PoaChain {
    pub fn new(genesis: BTreeMap<String, u64>) -> Self {
        let root = AccountState::genesis(&genesis).root();
        Self {
            genesis,
            blocks: vec![PoaBlock {
                number: 0,
                prev_hash: Digest::ZERO,
                sealer: "genesis".into(),
                txs: Vec::new(),
                seal_time: SimTime::ZERO,
                state_root: root,
            }],
        }
    }

    pub fn head(&self) -> u64 {
        self.blocks.len() as u64 - 1
    }

    pub fn head_digest(&self) -> Digest {
        self.blocks.last().expect("genesis always present").digest()
    }

    /// Appends a block built on the head. Every transaction must apply; the
    /// state root is computed here.
    pub fn append(
        &mut self,
        sealer: &str,
        txs: Vec<EthTx>,
        seal_time: SimTime,
        state: &AccountState,
    ) -> &PoaBlock {
        let block = PoaBlock {
            number: self.head() + 1,
            prev_hash: self.head_digest(),
            sealer: sealer.to_string(),
            txs,
            seal_time,
            state_root: state.root(),
        };
        self.blocks.push(block);
        self.blocks.last().expect("just pushed")
    }

    /// State after replaying blocks `1..=height` from genesis.
    pub fn state_at(&self, height: u64) -> Result<AccountState, PoaError> {
        if height > self.head() {
            return Err(PoaError::BeyondHead { height, head: self.head() });
        }
        let mut state = AccountState::genesis(&self.genesis);
        for b in &self.blocks[1..=height as usize] {
            for tx in &b.txs {
                state.apply(tx).map_err(|r| PoaError::InvalidHistory {
                    block: b.number,
                    tx_id: tx.tx_id.clone(),
                    reason: r,
                })?;
            }
        }
        Ok(state)
    }

    pub fn get_balance(&self, address: &str, height: u64) -> Result<u64, PoaError> {
        if !self.genesis.contains_key(address) {
            return Err(PoaError::UnknownAccount(address.to_string()));
        }
        Ok(self.state_at(height)?.accounts[address].balance)
    }

    /// Head number minus the number of the block holding `tx_id`; `None`
    /// while the transaction is not included.
    pub fn confirmation_depth(&self, tx_id: &str) -> Option<u64> {
        let b = self.blocks.iter().find(|b| b.txs.iter().any(|t| t.tx_id == tx_id))?;
        Some(self.head() - b.number)
    }

    pub fn first_broken_link(&self) -> Option<usize> {
        let mut prev = Digest::ZERO;
        for (i, b) in self.blocks.iter().enumerate() {
            if b.prev_hash != prev || b.number != i as u64 {
                return Some(i);
            }
            prev = b.digest();
        }
        None
    }

    /// First block whose recorded state root differs from a replay.
    pub fn first_bad_state_root(&self) -> Option<usize> {
        let mut state = AccountState::genesis(&self.genesis);
        for (i, b) in self.blocks.iter().enumerate() {
            for tx in &b.txs {
                if state.apply(tx).is_err() {
                    return Some(i);
                }
            }
            if state.root() != b.state_root {
                return Some(i);
            }
        }
        None
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn alloc(n: usize, each: u64) -> BTreeMap<String, u64> {
        (0..n).map(|i| (format!("a{i}"), each)).collect()
    }

    fn tx(id: &str, from: &str, to: &str, value: u64, nonce: u64) -> EthTx {
        EthTx {
            tx_id: id.into(),
            from: from.into(),
            to: to.into(),
            value,
            nonce,
            gas: 21_000,
            submit_time: SimTime::ZERO,
        }
    }

    #[test]
    fn genesis_balance() {
        let c = PoaChain::new(alloc(2, 1000));
        assert_eq!(c.get_balance("a0", 0).unwrap(), 1000);
        assert!(matches!(c.get_balance("zz", 0), Err(PoaError::UnknownAccount(_))));
        assert!(matches!(c.get_balance("a0", 1), Err(PoaError::BeyondHead { .. })));
    }

    #[test]
    fn transfer_moves_value() {
        let mut c = PoaChain::new(alloc(2, 1000));
        let mut s = c.state_at(0).unwrap();
        let t = tx("t", "a0", "a1", 10, 0);
        s.apply(&t).unwrap();
        c.append("sealer#1", vec![t], SimTime::from_ms(5000), &s);
        assert_eq!(c.get_balance("a0", 1).unwrap(), 990);
        assert_eq!(c.get_balance("a1", 1).unwrap(), 1010);
        assert_eq!(c.get_balance("a0", 0).unwrap(), 1000);
        assert_eq!(c.confirmation_depth("t"), Some(0));
        assert_eq!(c.confirmation_depth("nope"), None);
        assert_eq!(c.first_bad_state_root(), None);
    }

    #[test]
    fn nonce_and_balance_rules() {
        let mut s = AccountState::genesis(&alloc(2, 5));
        assert_eq!(s.apply(&tx("x", "a0", "a1", 1, 1)), Err(TxRejection::NonceGap));
        assert_eq!(s.apply(&tx("x", "a0", "a1", 6, 0)), Err(TxRejection::InsufficientBalance));
        assert_eq!(s.apply(&tx("x", "a0", "zz", 1, 0)), Err(TxRejection::UnknownAccount));
        s.apply(&tx("x", "a0", "a1", 5, 0)).unwrap();
        assert_eq!(s.apply(&tx("y", "a0", "a1", 0, 0)), Err(TxRejection::StaleNonce));
        assert_eq!(s.accounts["a0"], Account { balance: 0, nonce: 1 });
    }

    #[test]
    fn depth_counts_blocks_after_inclusion() {
        let mut c = PoaChain::new(alloc(2, 100));
        let mut s = c.state_at(0).unwrap();
        for n in 1..=15u64 {
            let txs = if n == 3 {
                let t = tx("t3", "a0", "a1", 1, 0);
                s.apply(&t).unwrap();
                vec![t]
            } else {
                vec![]
            };
            c.append("sealer#1", txs, SimTime::from_ms(5000 * n), &s);
        }
        assert_eq!(c.confirmation_depth("t3"), Some(12));
    }

    #[test]
    fn tampering_is_detected() {
        let mut c = PoaChain::new(alloc(3, 100));
        let mut s = c.state_at(0).unwrap();
        for n in 0..6u64 {
            let t = tx(&format!("t{n}"), "a0", "a1", 1, n);
            s.apply(&t).unwrap();
            c.append("sealer#1", vec![t], SimTime::from_ms(5000 * (n + 1)), &s);
        }
        for victim in 1..6 {
            let mut bad = c.clone();
            bad.blocks[victim].txs[0].value = 2;
            assert_eq!(bad.first_broken_link(), Some(victim + 1));
            assert_eq!(bad.first_bad_state_root(), Some(victim));
        }
    }

    /// Independent oracle: walk the flat list of included transfers and only
    /// track the one address asked for.
    fn naive_balance(genesis: &BTreeMap<String, u64>, history: &[Vec<EthTx>], addr: &str, height: usize) -> i128 {
        let mut bal = genesis[addr] as i128;
        for block in &history[..height] {
            for t in block {
                if t.from == addr {
                    bal -= t.value as i128;
                }
                if t.to == addr {
                    bal += t.value as i128;
                }
            }
        }
        bal
    }

    #[test]
    fn replay_matches_naive_oracle() {
        for seed in 0..120u64 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let accounts = rng.random_range(2..6);
            let genesis = alloc(accounts, rng.random_range(10..200));
            let mut chain = PoaChain::new(genesis.clone());
            let mut state = chain.state_at(0).unwrap();
            let mut history: Vec<Vec<EthTx>> = Vec::new();
            let mut made = 0;
            while made < 50 {
                let mut block = Vec::new();
                for _ in 0..rng.random_range(0..6) {
                    let from = format!("a{}", rng.random_range(0..accounts));
                    let to = format!("a{}", rng.random_range(0..accounts));
                    let value = rng.random_range(0..60);
                    let nonce = state.accounts[&from].nonce;
                    let t = tx(&format!("t{made}"), &from, &to, value, nonce);
                    made += 1;
                    // invalid transfers never make it into a block
                    if state.apply(&t).is_ok() {
                        block.push(t);
                    }
                }
                let n = chain.head() + 1;
                chain.append("sealer#1", block.clone(), SimTime::from_ms(5000 * n), &state);
                history.push(block);
            }
            let supply = AccountState::genesis(&genesis).total_supply();
            for h in 0..=chain.head() {
                assert_eq!(chain.state_at(h).unwrap().total_supply(), supply);
                for a in genesis.keys() {
                    let got = chain.get_balance(a, h).unwrap() as i128;
                    assert_eq!(got, naive_balance(&genesis, &history, a, h as usize), "seed {seed} height {h}");
                }
            }
            assert_eq!(chain.state_at(chain.head()).unwrap(), state);
        }
    }
}
