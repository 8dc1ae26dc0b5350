//! A full swarm run: admission, mining, stamp validation, estimation,
//! allocation, transfers, receipts, minting and demurrage, epoch by epoch —
//! with a planted counterfeit coalition getting caught.
//!
//! ```bash
//! cargo run --example run_epochs
//! ```

use std::path::PathBuf;
use swarmchain::quality::detect_coalitions;
use swarmchain::sim::{Scenario, World};

fn main() {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("scenarios/coalition.scenario");
    let scenario = Scenario::from_file(&path).expect("bundled scenario");
    let mut world = World::new(scenario, 42).expect("world");
    world.run(10).expect("run");

    println!(
        "{:>5} {:>6} {:>6} {:>9} {:>9} {:>8} {:>9}",
        "epoch", "proofs", "stamps", "compares", "exchanges", "minted", "Q(x1)"
    );
    for t in &world.traces {
        let minted: u64 = t.minted.iter().map(|(_, a)| a).sum();
        let qx1 = t
            .quality
            .get(&swarmchain::NodeId::new("x1"))
            .copied()
            .unwrap_or_default();
        println!(
            "{:>5} {:>6} {:>6} {:>9} {:>9} {:>8} {:>9.1}",
            t.epoch,
            t.proofs.len(),
            t.stamps.len(),
            t.comparisons.len(),
            t.plan.exchanges.len(),
            minted,
            qx1,
        );
    }

    println!("\nfinal chain digest: {}", world.chain.tip().digest);
    println!("final state digest: {}", world.chain.state_digest());

    let report = detect_coalitions(&world.chain.merged_validation_graph(), 0.5);
    println!("\nvalidation graph after 10 epochs:");
    for (i, c) in report.components.iter().enumerate() {
        let members: Vec<&str> = c.members.iter().map(|n| n.as_str()).collect();
        println!(
            "  component {:?} (density {:.2}){}",
            members,
            c.density,
            if report.suspects.contains(&i) {
                "  <- flagged coalition"
            } else {
                ""
            }
        );
    }
    let q = world.chain.global_quality();
    let mut worst: Vec<_> = q.iter().collect();
    worst.sort_by(|a, b| a.1.total_cmp(b.1));
    println!("\nlowest quality scores:");
    for (node, q) in worst.iter().take(3) {
        println!("  {node}: {q:+.1}");
    }
}
