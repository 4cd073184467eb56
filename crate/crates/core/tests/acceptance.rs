//! Acceptance suite: one PASS/FAIL line per criterion, non-zero exit if any
//! criterion fails.

mod common;

use std::collections::BTreeMap;
use std::time::Instant;

use meshchain::compensation::{aggregate, settle, CompensationBook, CompensationRecord};
use meshchain::experiment::{compare_placements, run_experiment, ExperimentConfig, MetricsReport};
use meshchain::hlf::{balance_key, run_hlf, HlfConfig};
use meshchain::metrics::TxStatus;
use meshchain::placement::{basp, hlf_roles, PlacementMethod};
use meshchain::poa::{AccountState, EthTx, PoaChain, PoaConfig};
use meshchain::sim::{EngineConfig, SimTime};
use meshchain::topology::parse_topology;
use meshchain::workload::WorkloadSpec;
use meshchain::Mesh;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use common::{exhaustive_route, naive_balances, random_connected, workspace_path};

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn config(name: &str) -> ExperimentConfig {
    ExperimentConfig::load(&workspace_path(&format!("configs/{name}"))).expect("shipped config loads")
}

fn fixture() -> Mesh {
    let text = std::fs::read_to_string(workspace_path("crates/core/fixtures/qmpsu.topo")).unwrap();
    parse_topology(text.as_bytes()).unwrap()
}

fn block_size_ttc() -> Outcome {
    let base = config("hlf_block_sizes.toml");
    let mut ttc = Vec::new();
    let mut slowest = 0.0f64;
    for b in [10, 20, 50, 100] {
        let mut c = base.clone();
        c.sweep.block_size = vec![b];
        let start = Instant::now();
        let r = run_experiment::<f64>(&c).map_err(|e| e.to_string())?;
        slowest = slowest.max(start.elapsed().as_secs_f64());
        let m = r.point_means("makespan");
        ttc.push(m[0] / 1000.0);
    }
    let monotone = ttc.windows(2).all(|w| w[0] <= w[1]);
    let anchored = (ttc[0] - 64.2).abs() <= 0.02 * 64.2;
    let in_band = (70.0..=100.0).contains(&ttc[3]);
    check(
        monotone && anchored && in_band && slowest < 10.0,
        format!(
            "TTC(10,20,50,100) = {:.1}/{:.1}/{:.1}/{:.1} s, slowest config {slowest:.2} s",
            ttc[0], ttc[1], ttc[2], ttc[3]
        ),
    )
}

fn poa_sweep(counts: &[usize]) -> Result<MetricsReport, String> {
    let mut c = config("poa_sealing.toml");
    c.sweep.transactions = counts.to_vec();
    run_experiment::<f64>(&c).map_err(|e| e.to_string())
}

fn sealing_bound() -> Outcome {
    let r = poa_sweep(&[1, 10, 100])?;
    let mut worst = 0u64;
    let mut all = true;
    for run in &r.runs {
        for t in &run.txs {
            match t.stage_latency() {
                Some(s) => worst = worst.max(s.micros()),
                None => all = false,
            }
        }
    }
    check(
        all && worst <= 5_000_000,
        format!("max sealing time {} ms over 1/10/100 txs, every tx sealed: {all}", worst as f64 / 1000.0),
    )
}

fn finality_bound() -> Outcome {
    let r = poa_sweep(&[1, 10, 100, 1000])?;
    let mut n = 0;
    let mut bad = 0;
    for run in &r.runs {
        for t in run.txs.iter().filter(|t| t.status == TxStatus::Committed) {
            n += 1;
            let (s, d) = (t.stage_latency().unwrap(), t.done_latency().unwrap());
            if d < SimTime::from_ms(60_000) || d - s != SimTime::from_ms(60_000) {
                bad += 1;
            }
        }
    }
    check(n > 0 && bad == 0, format!("{n} completed txs, {bad} violate completion >= 60 s or completion - sealing = 60 s"))
}

fn saturation() -> Outcome {
    let r = poa_sweep(&[1000])?;
    let spanned: std::collections::BTreeSet<u64> = r.runs[0].txs.iter().filter_map(|t| t.block).collect();
    let sat = run_experiment::<f64>(&config("poa_saturation.toml")).map_err(|e| e.to_string())?;
    let dropped = sat.runs[0].txs.iter().filter(|t| t.status == TxStatus::Dropped).count();
    check(
        spanned.len() >= 4 && dropped >= 1,
        format!("1000 txs span {} blocks; 10000 txs with constrained intake: {dropped} dropped", spanned.len()),
    )
}

fn placement_comparison() -> Outcome {
    let mut parts = Vec::new();
    let mut ok = true;
    for name in ["compare_hlf.toml", "compare_poa.toml"] {
        let c = config(name);
        let r = compare_placements::<f64>(&c, PlacementMethod::Basp, PlacementMethod::Random, 30)
            .map_err(|e| e.to_string())?;
        let gain = r.mean_gain_ms().unwrap_or(f64::NAN);
        let wins = r.win_fraction();
        ok &= gain > 0.0 && wins >= 0.8 && r.rows.len() == 30;
        parts.push(format!(
            "{}: mean gain {gain:.0} ms ({:.1}%), BASP wins {:.0}%",
            c.pipeline(),
            r.mean_gain_pct().unwrap_or(f64::NAN),
            100.0 * wins
        ));
    }
    check(ok, parts.join("; "))
}

fn zero_sum() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut bad = 0;
    for _ in 0..1000 {
        let n = rng.random_range(1..=50);
        let records: Vec<CompensationRecord> = (0..n)
            .map(|i| CompensationRecord {
                participant: format!("p{i:02}"),
                period: 1,
                contribution_cost: rng.random_range(0..1_000_000),
                consumption_usage: rng.random_range(1..1_000_000),
            })
            .collect();
        let s = settle(1, &records).map_err(|e| e.to_string())?;
        let sum: i128 = s.net_balance.values().map(|&v| v as i128).sum();
        if sum != 0 || s.residuals().values().any(|&r| r != 0) {
            bad += 1;
        }
    }
    check(bad == 0, format!("1000 random record sets, {bad} with non-zero sum or residual"))
}

fn ledger_integrity() -> Outcome {
    let mut runs = 0;
    let mut failures = Vec::new();
    let hlf = run_experiment::<f64>(&config("hlf_block_sizes.toml")).map_err(|e| e.to_string())?;
    let poa = poa_sweep(&[1, 100, 1000])?;
    for run in hlf.runs.iter().chain(&poa.runs) {
        runs += 1;
        if !run.integrity {
            failures.push(format!("run {} failed integrity", run.label));
        }
    }

    // tamper with every historical transaction of one replicated HLF run
    let t = fixture();
    let plan = basp(&t, &hlf_roles(2, 2), 6, 0.95, 1).map_err(|e| e.to_string())?;
    let w = WorkloadSpec::parallel(60, "sendMoney", &["acct{i}", "5", "+"]);
    let run = run_hlf(&t, &plan, &HlfConfig::default(), EngineConfig::default(), &w).map_err(|e| e.to_string())?;
    let digests = run.store_digests();
    if !digests.windows(2).all(|d| d[0] == d[1]) || digests.len() < 3 {
        failures.push("peer store digests differ".into());
    }
    let peer = &run.peers[0].ledger;
    if peer.replay().digest() != peer.store.digest() {
        failures.push("replay digest differs".into());
    }
    let mut tampered = 0;
    for b in 0..peer.blocks.len() - 1 {
        for i in 0..peer.blocks[b].txs.len() {
            let mut copy = peer.clone();
            copy.blocks[b].txs[i].call.args[1] = "999".into();
            tampered += 1;
            if copy.first_broken_link() != Some(b + 1) {
                failures.push(format!("tampering block {b} tx {i} went unnoticed"));
            }
        }
    }

    // and every historical transfer of a PoA chain
    let mut chain = PoaChain::new((0..4).map(|i| (PoaConfig::account_name(i), 1000)).collect());
    let mut state = AccountState::genesis(&chain.genesis);
    for n in 0..6u64 {
        let txs: Vec<EthTx> = (0..3)
            .map(|j| EthTx {
                tx_id: format!("t{n}-{j}"),
                from: "acct00".into(),
                to: "acct01".into(),
                value: 1,
                nonce: n * 3 + j,
                gas: 21_000,
                submit_time: SimTime::ZERO,
            })
            .collect();
        for tx in &txs {
            state.apply(tx).unwrap();
        }
        chain.append("sealer#1", txs, SimTime::from_ms(5000 * (n + 1)), &state);
    }
    for b in 1..chain.blocks.len() - 1 {
        for i in 0..chain.blocks[b].txs.len() {
            let mut copy = chain.clone();
            copy.blocks[b].txs[i].value = 2;
            tampered += 1;
            if copy.first_broken_link() != Some(b + 1) {
                failures.push(format!("tampering PoA block {b} tx {i} went unnoticed"));
            }
        }
    }
    check(
        failures.is_empty(),
        if failures.is_empty() {
            format!("{runs} runs consistent, {} peers agree, {tampered} tampered txs all detected", digests.len())
        } else {
            failures.join("; ")
        },
    )
}

fn determinism() -> Outcome {
    let mut compared = 0;
    for name in ["hlf_block_sizes.toml", "poa_sealing.toml"] {
        let mut c = config(name);
        c.experiment.repetitions = 2;
        let a = run_experiment::<f64>(&c).map_err(|e| e.to_string())?;
        let b = run_experiment::<f64>(&c).map_err(|e| e.to_string())?;
        let csv = |r: &MetricsReport| {
            [r.txs_csv(), r.runs_csv(), r.summary_csv(), r.cpu_csv()]
                .into_iter()
                .map(|x| x.unwrap())
                .collect::<Vec<_>>()
        };
        if csv(&a) != csv(&b) {
            return Err(format!("{name}: CSV differs between identical runs"));
        }
        for (x, y) in a.runs.iter().zip(&b.runs) {
            if x.trace.to_text() != y.trace.to_text() || x.trace.is_empty() {
                return Err(format!("{name}: trace differs or is empty"));
            }
            compared += 1;
        }
    }
    let c = config("compare_hlf.toml");
    let x = compare_placements::<f64>(&c, PlacementMethod::Basp, PlacementMethod::Random, 3).map_err(|e| e.to_string())?;
    let y = compare_placements::<f64>(&c, PlacementMethod::Basp, PlacementMethod::Random, 3).map_err(|e| e.to_string())?;
    check(
        x.to_csv().unwrap() == y.to_csv().unwrap(),
        format!("{compared} run pairs byte-identical in traces and CSV; comparison CSV identical"),
    )
}

fn oracles() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut pairs = 0;
    for g in 0..220 {
        let n = rng.random_range(2..=8);
        let t = random_connected(&mut rng, n);
        for a in t.nodes() {
            for b in t.nodes().iter().filter(|b| b.id != a.id) {
                let (path, bw) = exhaustive_route(&t, &a.id, &b.id);
                if t.shortest_path(&a.id, &b.id).unwrap() != path || t.path_bandwidth(&a.id, &b.id).unwrap() != bw {
                    return Err(format!("graph {g}: route {} -> {} disagrees", a.id, b.id));
                }
                pairs += 1;
            }
        }
    }

    let mut heights = 0;
    for h in 0..120 {
        let accounts = rng.random_range(2..6);
        let genesis: BTreeMap<String, u64> = (0..accounts).map(|i| (format!("a{i}"), rng.random_range(0..50))).collect();
        let mut chain = PoaChain::new(genesis.clone());
        let mut state = AccountState::genesis(&genesis);
        let mut history: Vec<Vec<(String, String, u64)>> = vec![Vec::new()];
        let mut nonces: BTreeMap<String, u64> = BTreeMap::new();
        let mut balances = genesis.clone();
        for _ in 0..rng.random_range(1..12) {
            let mut txs = Vec::new();
            let mut plain = Vec::new();
            for j in 0..rng.random_range(0..6) {
                let from = format!("a{}", rng.random_range(0..accounts));
                let to = format!("a{}", rng.random_range(0..accounts));
                let value = rng.random_range(0..=balances[&from]);
                *balances.get_mut(&from).unwrap() -= value;
                *balances.get_mut(&to).unwrap() += value;
                let nonce = nonces.entry(from.clone()).or_insert(0);
                let tx = EthTx {
                    tx_id: format!("h{h}-{j}"),
                    from: from.clone(),
                    to: to.clone(),
                    value,
                    nonce: *nonce,
                    gas: 21_000,
                    submit_time: SimTime::ZERO,
                };
                *nonce += 1;
                state.apply(&tx).map_err(|e| format!("history {h}: generated tx refused: {e:?}"))?;
                txs.push(tx);
                plain.push((from, to, value));
            }
            chain.append("s", txs, SimTime::ZERO, &state);
            history.push(plain);
        }
        for height in 0..=chain.head() {
            let flat: Vec<_> = history[..=height as usize].iter().flatten().cloned().collect();
            let want = naive_balances(&genesis, &flat);
            for (acct, v) in &want {
                if chain.get_balance(acct, height).map_err(|e| e.to_string())? != *v {
                    return Err(format!("history {h}: balance of {acct} at height {height} disagrees"));
                }
            }
            heights += 1;
        }
    }
    Ok(format!("{pairs} routes on 220 graphs and {heights} heights of 120 histories match the oracles"))
}

fn delta_pattern() -> Outcome {
    let t = fixture();
    let plan = basp(&t, &hlf_roles(1, 2), 5, 0.95, 1).map_err(|e| e.to_string())?;
    let cfg = HlfConfig::default();
    let send = WorkloadSpec::parallel(100, "sendMoney", &["acct00", "1", "+"]);
    let run = run_hlf(&t, &plan, &cfg, EngineConfig::default(), &send).map_err(|e| e.to_string())?;
    let valid = run.txs.iter().filter(|r| r.status == TxStatus::Committed).count();
    let mut book = CompensationBook {
        state: run.peers[0].ledger.store.iter().map(|(k, (v, _))| (k.clone(), v.clone())).collect(),
    };
    let total = aggregate(&mut book, "acct00");

    let rmw = WorkloadSpec::parallel(100, "addBalance", &["acct00", "1"]);
    let run = run_hlf(&t, &plan, &cfg, EngineConfig::default(), &rmw).map_err(|e| e.to_string())?;
    let invalid = run.txs.iter().filter(|r| r.status == TxStatus::Invalid).count();
    let stored = run.peers[0].ledger.store.get(&balance_key("acct00")).map(|(v, _)| String::from_utf8_lossy(v).to_string());
    check(
        valid == 100 && total == 100 && invalid >= 1,
        format!(
            "delta pattern: {valid}/100 valid, aggregate {total}; read-modify-write: {invalid} invalid, balance {}",
            stored.unwrap_or_default()
        ),
    )
}

fn main() {
    let criteria: [Criterion; 10] = [
        ("block-size delivery-time trend", block_size_ttc),
        ("PoA sealing bound", sealing_bound),
        ("PoA finality bound", finality_bound),
        ("saturation and drops", saturation),
        ("BASP vs random", placement_comparison),
        ("zero-sum settlement", zero_sum),
        ("ledger integrity and replay", ledger_integrity),
        ("determinism", determinism),
        ("oracle equivalence", oracles),
        ("conflict-free delta pattern", delta_pattern),
    ];
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let (tag, detail) = match f() {
            Ok(d) => ("PASS", d),
            Err(d) => {
                failed += 1;
                ("FAIL", d)
            }
        };
        println!("{tag} criterion {:>2} ({name}): {detail} [{:.2} s]", i + 1, start.elapsed().as_secs_f64());
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
