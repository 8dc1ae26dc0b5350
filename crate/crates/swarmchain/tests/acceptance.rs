//! Acceptance suite: one test per release criterion, each printing a
//! PASS/FAIL line. Run with `cargo test --test acceptance -- --nocapture`.

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::time::Instant;

use swarmchain::allocation::{
    enumerate_candidates, objective, optimize, plan_is_feasible, AvailableData, ConstraintMode,
    DataRequest, Exchange, ExchangePlan,
};
use swarmchain::chain::ChainConfig;
use swarmchain::commands::{cmd_bench, cmd_run, relayed_bytes_ok, supply_conserved};
use swarmchain::estimator::{estimate, ProofEntry, ProofHistory};
use swarmchain::pow;
use swarmchain::quality::{
    detect_coalitions, DataType, DensityModel, FeatureClass, StampBuilder,
    COMPOSITE_CALIBRATION_16CH, COMPOSITE_CALIBRATION_8CH, PLANAR_CALIBRATION,
    REVOLUTE_CALIBRATION,
};
use swarmchain::sim::{Scenario, World};
use swarmchain::NodeId;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;

fn crate_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
}

fn scenario_path(name: &str) -> PathBuf {
    crate_dir().join("scenarios").join(name)
}

fn run_world(scenario: &str, seed: u64, epochs: u64) -> World {
    let sc = Scenario::from_file(&scenario_path(scenario)).expect("bundled scenario parses");
    let mut world = World::new(sc, seed).expect("world builds");
    world.run(epochs).expect("run completes");
    world
}

fn pass(n: u32, name: &str) {
    println!("acceptance {n} ({name}): PASS");
}

#[test]
fn acceptance_01_fee_schedule_exact() {
    let start = Instant::now();
    let cfg = ChainConfig::default();
    let table = [
        (20u64, 21_680u64),
        (1080, 57_720),
        (2160, 94_440),
        (4320, 167_880),
        (8640, 314_760),
    ];
    for (payload, fee) in table {
        assert_eq!(cfg.fee_for_payload(payload), fee, "payload {payload}");
    }
    assert!(start.elapsed().as_millis() < 1, "fee schedule must be < 1 ms");
    pass(1, "fee schedule exact");
}

#[test]
fn acceptance_02_consistency_ratios() {
    let fixture = crate_dir().join("fixtures").join("task_latencies.csv");
    let report = cmd_bench(16, 0.0, 1, Some(&fixture)).expect("bench with fixture");

    let classification = &report.tasks["classification"];
    let expect_class: BTreeMap<&str, f64> = BTreeMap::from([
        ("up", 400.0),
        ("upgtw", 391.6),
        ("tx2", 128.8),
        ("i5", 431.97),
    ]);
    for row in classification {
        let expected = expect_class[row.node_id.as_str()];
        let rel = (row.ratio - expected).abs() / expected;
        assert!(
            rel <= 0.01,
            "classification {}: {} vs {} ({:.3}%)",
            row.node_id,
            row.ratio,
            expected,
            rel * 100.0
        );
        assert_eq!(
            row.outlier,
            row.node_id.as_str() == "tx2",
            "only the GPU board may be flagged, got {:?}",
            row
        );
    }

    let vo = &report.tasks["visual_odometry"];
    let expect_vo: BTreeMap<&str, f64> = BTreeMap::from([
        ("up", 16_000.0),
        ("upgtw", 18_690.0),
        ("tx2", 19_872.0),
        ("i5", 33_099.0),
    ]);
    for row in vo {
        let expected = expect_vo[row.node_id.as_str()];
        let rel = (row.ratio - expected).abs() / expected;
        assert!(rel <= 0.01, "vo {}: {} vs {}", row.node_id, row.ratio, expected);
        assert!(!row.outlier, "high-variance vo ratios must not flag: {:?}", row);
    }
    pass(2, "consistency ratios & outlier flags");
}

#[test]
fn acceptance_03_density_calibration() {
    let start = Instant::now();
    let model = DensityModel::default();
    for &(extent, pts) in &PLANAR_CALIBRATION {
        let stamp = StampBuilder::new(NodeId::new("n"), DataType::Pointcloud, FeatureClass::Planar)
            .extent_m(extent)
            .build();
        let got = model.expected_point_count(&stamp).unwrap();
        assert!(
            (got - pts).abs() / pts <= 0.10,
            "planar {extent}: {got} vs {pts}"
        );
    }
    for &(d, pts) in &REVOLUTE_CALIBRATION {
        let stamp =
            StampBuilder::new(NodeId::new("n"), DataType::Pointcloud, FeatureClass::Revolute)
                .distance_m(d)
                .build();
        let got = model.expected_point_count(&stamp).unwrap();
        assert!((got - pts).abs() / pts <= 0.10, "revolute {d}: {got} vs {pts}");
    }
    for (channels, table) in [(16, &COMPOSITE_CALIBRATION_16CH), (8, &COMPOSITE_CALIBRATION_8CH)] {
        for &(d, pts) in table.iter() {
            let stamp = StampBuilder::new(
                NodeId::new("n"),
                DataType::Pointcloud,
                FeatureClass::Composite,
            )
            .distance_m(d)
            .channels(channels)
            .build();
            let got = model.expected_point_count(&stamp).unwrap();
            assert_eq!(got, pts, "composite {channels}ch knot at {d} must be exact");
        }
    }
    assert!(start.elapsed().as_secs() < 1, "density checks must run < 1 s");
    pass(3, "density calibration");
}

#[test]
fn acceptance_04_estimator_recovery() {
    let start = Instant::now();
    let rates = [
        ("up", 89_000.0),
        ("upgtw", 79_000.0),
        ("tx2", 184_000.0),
        ("i5", 561_000.0),
    ];
    let difficulty = 20u32;
    // Minimum window of 8: the variance-window fallback needs enough points
    // for its sigma estimate to mean anything.
    let min_proofs = 8;
    for seed in 0..10u64 {
        let mut histories: BTreeMap<NodeId, ProofHistory> = BTreeMap::new();
        for (i, (name, rate)) in rates.iter().enumerate() {
            let mut rng = ChaCha12Rng::seed_from_u64(seed * 101 + i as u64);
            let mut h = ProofHistory::new(NodeId::new(*name));
            for epoch in 1..=50u64 {
                let s = pow::sample_session(&mut rng, difficulty, *rate, 30.0, u64::MAX);
                h.record(ProofEntry {
                    epoch,
                    achieved_bits: s.proof.as_ref().map_or(0, |p| p.achieved_bits),
                    is_full: s.proof.as_ref().is_some_and(|p| p.is_full),
                    elapsed: s.elapsed,
                    share_count: s.share_count,
                    share_bits: s.share_bits,
                })
                .unwrap();
            }
            histories.insert(NodeId::new(*name), h);
        }
        let est = estimate(&histories, min_proofs, difficulty, 1.0).expect("all nodes eligible");
        for (name, rate) in rates {
            let expected = rate / 561_000.0;
            let got = est.c_hat(&NodeId::new(name)).unwrap();
            let rel = (got - expected).abs() / expected;
            assert!(
                rel <= 0.10,
                "seed {seed}, {name}: C {got:.4} vs {expected:.4} ({:.2}%)",
                rel * 100.0
            );
        }
    }
    assert!(start.elapsed().as_secs() < 10, "recovery must run < 10 s");
    pass(4, "estimator recovery at reference board rates");
}

struct RandomInstance {
    requests: Vec<DataRequest>,
    availables: Vec<AvailableData>,
    quality: BTreeMap<NodeId, f64>,
    c_hat: BTreeMap<NodeId, f64>,
    d_max: f64,
    bandwidth: BTreeMap<(NodeId, NodeId), f64>,
    alpha: f64,
    beta: f64,
}

fn random_instance(rng: &mut ChaCha12Rng) -> RandomInstance {
    let types = [DataType::Pointcloud, DataType::Image];
    let n_req = rng.random_range(1..=4);
    let n_avail = rng.random_range(1..=5);
    let receivers: Vec<NodeId> = (0..n_req).map(|i| NodeId::new(format!("r{i}"))).collect();
    let providers: Vec<NodeId> = (0..n_avail).map(|i| NodeId::new(format!("p{i}"))).collect();
    let requests: Vec<DataRequest> = receivers
        .iter()
        .map(|r| {
            let lo = rng.random_range(0.0..2.0);
            DataRequest {
                requester: r.clone(),
                data_type: types[rng.random_range(0..types.len())],
                max_size: rng.random_range(1_000..100_000),
                min_res: lo,
                max_res: lo + rng.random_range(0.0..2.0),
            }
        })
        .collect();
    let availables: Vec<AvailableData> = providers
        .iter()
        .map(|p| {
            let lo = rng.random_range(0.0..2.0);
            AvailableData {
                provider: p.clone(),
                data_type: types[rng.random_range(0..types.len())],
                max_size: rng.random_range(1_000..100_000),
                min_res: lo,
                max_res: lo + rng.random_range(0.0..2.0),
            }
        })
        .collect();
    let quality = providers
        .iter()
        .map(|p| (p.clone(), rng.random_range(-3.0..3.0)))
        .collect();
    let c_hat = receivers
        .iter()
        .map(|r| (r.clone(), rng.random_range(0.05..1.0)))
        .collect();
    let mut bandwidth = BTreeMap::new();
    for r in &receivers {
        for p in &providers {
            if rng.random_range(0.0..1.0) < 0.9 {
                bandwidth.insert((r.clone(), p.clone()), rng.random_range(500.0..200_000.0));
            }
        }
    }
    RandomInstance {
        requests,
        availables,
        quality,
        c_hat,
        d_max: 100_000.0,
        bandwidth,
        alpha: rng.random_range(0.1..2.0),
        beta: rng.random_range(0.1..2.0),
    }
}

fn solve_instance(inst: &RandomInstance, mode: ConstraintMode) -> ExchangePlan {
    optimize(
        &inst.requests,
        &inst.availables,
        &inst.quality,
        &inst.c_hat,
        inst.d_max,
        &inst.bandwidth,
        inst.alpha,
        inst.beta,
        mode,
    )
}

/// Exhaustive-subset oracle over the candidate set.
fn oracle_best(inst: &RandomInstance, mode: ConstraintMode) -> ExchangePlan {
    let candidates = enumerate_candidates(
        &inst.requests,
        &inst.availables,
        &inst.quality,
        &inst.c_hat,
        inst.d_max,
        &inst.bandwidth,
        inst.alpha,
        inst.beta,
    );
    let n = candidates.len();
    assert!(n <= 20, "oracle instances stay enumerable");
    let mut best: Option<(f64, u64, Vec<usize>)> = None;
    let mut best_set: Vec<Exchange> = Vec::new();
    for mask in 0..(1usize << n) {
        let chosen: Vec<usize> = (0..n).filter(|i| mask & (1 << i) != 0).collect();
        // Feasibility per mode.
        if mode == ConstraintMode::AggregateReceiver {
            let mut per_recv: BTreeMap<&NodeId, u64> = BTreeMap::new();
            for &i in &chosen {
                *per_recv.entry(&candidates[i].receiver).or_insert(0) += candidates[i].size;
            }
            let feasible = per_recv.iter().all(|(r, total)| {
                *total as f64 <= inst.d_max * inst.c_hat[*r]
            });
            if !feasible {
                continue;
            }
        }
        let value: f64 = chosen.iter().map(|&i| candidates[i].term_value).sum();
        let size: u64 = chosen.iter().map(|&i| candidates[i].size).sum();
        let better = match &best {
            None => true,
            Some((bv, bs, bi)) => {
                value > *bv
                    || (value == *bv && size > *bs)
                    || (value == *bv && size == *bs && chosen < *bi)
            }
        };
        if better {
            best = Some((value, size, chosen.clone()));
            best_set = chosen.iter().map(|&i| candidates[i].clone()).collect();
        }
    }
    let mut plan = ExchangePlan {
        exchanges: best_set,
        objective_value: 0.0,
    };
    plan.objective_value = plan.exchanges.iter().map(|x| x.term_value).sum();
    plan
}

#[test]
fn acceptance_05_optimizer_oracle_equivalence() {
    let start = Instant::now();
    let mut rng = ChaCha12Rng::seed_from_u64(5005);
    for case in 0..200 {
        let inst = random_instance(&mut rng);
        let mode = if case % 2 == 0 {
            ConstraintMode::PerExchange
        } else {
            ConstraintMode::AggregateReceiver
        };
        let plan = solve_instance(&inst, mode);
        let oracle = oracle_best(&inst, mode);
        // Evaluate both through the same objective path so the comparison is
        // exact, not within-epsilon.
        let got = objective(&plan, &inst.quality, inst.alpha, inst.beta).unwrap();
        let want = objective(&oracle, &inst.quality, inst.alpha, inst.beta).unwrap();
        assert_eq!(
            got, want,
            "case {case} ({mode:?}): solver {got} vs oracle {want}"
        );
    }
    assert!(start.elapsed().as_secs() < 30, "oracle comparison must run < 30 s");
    pass(5, "optimizer equals exhaustive oracle on 200 instances");
}

#[test]
fn acceptance_06_feasibility_and_monotonicity() {
    let mut rng = ChaCha12Rng::seed_from_u64(6006);
    for case in 0..100 {
        let mut inst = random_instance(&mut rng);
        let before = solve_instance(&inst, ConstraintMode::PerExchange);
        assert!(
            plan_is_feasible(
                &before,
                &inst.c_hat,
                inst.d_max,
                &inst.bandwidth,
                ConstraintMode::PerExchange
            ),
            "case {case}: infeasible plan"
        );
        let agg = solve_instance(&inst, ConstraintMode::AggregateReceiver);
        assert!(
            plan_is_feasible(
                &agg,
                &inst.c_hat,
                inst.d_max,
                &inst.bandwidth,
                ConstraintMode::AggregateReceiver
            ),
            "case {case}: infeasible aggregate plan"
        );

        // Raise one bandwidth entry or one capacity; the optimum never drops.
        if case % 2 == 0 && !inst.bandwidth.is_empty() {
            let key = inst
                .bandwidth
                .keys()
                .nth(rng.random_range(0..inst.bandwidth.len()))
                .cloned()
                .unwrap();
            *inst.bandwidth.get_mut(&key).unwrap() *= 1.0 + rng.random_range(0.1..2.0);
        } else {
            let key = inst
                .c_hat
                .keys()
                .nth(rng.random_range(0..inst.c_hat.len()))
                .cloned()
                .unwrap();
            let c = inst.c_hat.get_mut(&key).unwrap();
            *c = (*c * (1.0 + rng.random_range(0.1..1.0))).min(1.0);
        }
        let after = solve_instance(&inst, ConstraintMode::PerExchange);
        assert!(
            after.objective_value >= before.objective_value,
            "case {case}: objective dropped {} -> {}",
            before.objective_value,
            after.objective_value
        );
    }
    pass(6, "plan feasibility and monotone response");
}

#[test]
fn acceptance_07_demurrage_conservation() {
    for seed in [1u64, 2, 3] {
        let world = run_world("swarm_basic.scenario", seed, 30);
        assert_eq!(world.traces.len(), 30);
        assert!(supply_conserved(&world), "seed {seed}: supply leak");
        let window = world.scenario.chain.demurrage_window;
        let mut saw_expiry = false;
        for t in &world.traces {
            for (node, minted_epoch, amount) in &t.expired {
                saw_expiry = true;
                assert_eq!(
                    t.epoch - minted_epoch,
                    window,
                    "seed {seed}: lot of {node} ({amount}) expired at the wrong age"
                );
            }
        }
        assert!(saw_expiry, "seed {seed}: demurrage never exercised");
        // No surviving lot may have reached the window age.
        let final_epoch = world.traces.last().unwrap().epoch;
        for (node, account) in world.chain.accounts() {
            for lot in account.lots() {
                assert!(
                    final_epoch - lot.minted_epoch < window,
                    "seed {seed}: {node} holds an expired lot"
                );
            }
        }
    }
    pass(7, "demurrage & supply conservation over 30-epoch runs");
}

fn coalition_flagged(world: &World) -> bool {
    let report = detect_coalitions(&world.chain.merged_validation_graph(), 0.5);
    report.suspects.iter().any(|&i| {
        let members: Vec<&str> = report.components[i]
            .members
            .iter()
            .map(|n| n.as_str())
            .collect();
        members == ["x1", "x2", "x3"]
    })
}

#[test]
fn acceptance_08_coalition_detection() {
    let mut flagged = 0;
    for seed in 0..100u64 {
        let world = run_world("coalition.scenario", seed, 12);
        if coalition_flagged(&world) {
            flagged += 1;
        }
    }
    assert!(flagged >= 95, "planted clique flagged in only {flagged}/100 runs");

    // Symmetric equal split: indistinguishable, never one-sided-flagged.
    for seed in 0..100u64 {
        let world = run_world("equal_split.scenario", seed, 10);
        let report = detect_coalitions(&world.chain.merged_validation_graph(), 0.5);
        assert!(
            report.suspects.is_empty(),
            "seed {seed}: a side of the equal split was flagged"
        );
        let sizes: Vec<usize> = report.components.iter().map(|c| c.members.len()).collect();
        if sizes.len() == 2 && sizes[0] == sizes[1] {
            assert_eq!(
                report.indistinguishable.len(),
                2,
                "seed {seed}: equal components not reported indistinguishable"
            );
        }
    }
    pass(8, "coalition detection & symmetric ambiguity");
}

#[test]
fn acceptance_09_long_run_honesty() {
    for seed in 0..100u64 {
        let world = run_world("coalition.scenario", seed, 10);
        let q = world.chain.global_quality();
        for liar in ["x1", "x2", "x3"] {
            let quality = q[&NodeId::new(liar)];
            assert!(
                quality < 0.0,
                "seed {seed}: {liar} still has Q = {quality} after 10 epochs"
            );
        }
    }
    pass(9, "counterfeit quality negative within 10 epochs, 100/100 seeds");
}

#[test]
fn acceptance_10_determinism() {
    let scenarios: [(&str, u64); 5] = [
        ("tables.scenario", 6),
        ("swarm_basic.scenario", 8),
        ("coalition.scenario", 8),
        ("equal_split.scenario", 8),
        ("behaviors.scenario", 8),
    ];
    for (name, epochs) in scenarios {
        let dir_a = tempfile::tempdir().unwrap();
        let dir_b = tempfile::tempdir().unwrap();
        let report_a = cmd_run(&scenario_path(name), 7, epochs, dir_a.path()).unwrap();
        let report_b = cmd_run(&scenario_path(name), 7, epochs, dir_b.path()).unwrap();
        assert_eq!(
            report_a.final_chain_digest, report_b.final_chain_digest,
            "{name}: chain digest differs between identical runs"
        );
        for file in &report_a.files {
            let a = std::fs::read(dir_a.path().join(file)).unwrap();
            let b = std::fs::read(dir_b.path().join(file)).unwrap();
            assert_eq!(a, b, "{name}: {file} bytes differ between identical runs");
        }
    }
    pass(10, "identical digests and CSV bytes for fixed (scenario, seed)");
}

#[test]
fn acceptance_11_relay_rule_audit() {
    let runs: [(&str, u64, u64); 5] = [
        ("tables.scenario", 7, 6),
        ("swarm_basic.scenario", 7, 8),
        ("coalition.scenario", 7, 8),
        ("equal_split.scenario", 7, 8),
        ("behaviors.scenario", 7, 8),
    ];
    let mut refusals = 0;
    let mut relayed_ok = 0;
    for (name, seed, epochs) in runs {
        let world = run_world(name, seed, epochs);
        for t in &world.traces {
            for transfer in &t.transfers {
                assert!(
                    relayed_bytes_ok(transfer),
                    "{name}: unregistered bytes crossed a relay: {transfer:?}"
                );
                if transfer.relay_refused {
                    refusals += 1;
                }
                if transfer.via.is_some() && transfer.arrived.is_some() {
                    assert!(transfer.registered);
                    relayed_ok += 1;
                }
            }
        }
    }
    assert!(refusals > 0, "audit is vacuous: no refusal was ever provoked");
    assert!(relayed_ok > 0, "audit is vacuous: nothing was ever relayed");
    pass(11, "zero relayed bytes for unregistered stamps");
}
