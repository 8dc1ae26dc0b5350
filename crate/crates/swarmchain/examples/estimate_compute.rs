//! From proof histories to normalized compute capacities and the network
//! intake bound, plus the consistency-ratio outlier check.
//!
//! ```bash
//! cargo run --example estimate_compute
//! ```

use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use std::collections::BTreeMap;
use swarmchain::estimator::{
    consistency_ratio, estimate, flag_outliers, ProofEntry, ProofHistory, RatioSample,
};
use swarmchain::pow::sample_session;
use swarmchain::NodeId;

fn main() {
    // Four boards mining the same fixed-difficulty puzzles for 40 epochs.
    let boards = [
        ("intel-up", 89_000.0),
        ("up-gateway", 79_000.0),
        ("jetson-tx2", 184_000.0),
        ("i5-6200u", 561_000.0),
    ];
    let difficulty = 20;
    let mut histories: BTreeMap<NodeId, ProofHistory> = BTreeMap::new();
    for (i, (name, rate)) in boards.iter().enumerate() {
        let mut rng = ChaCha12Rng::seed_from_u64(7 + i as u64);
        let node = NodeId::new(*name);
        let mut history = ProofHistory::new(node.clone());
        for epoch in 1..=40 {
            let s = sample_session(&mut rng, difficulty, *rate, 30.0, u64::MAX);
            history
                .record(ProofEntry {
                    epoch,
                    achieved_bits: s.proof.as_ref().map_or(0, |p| p.achieved_bits),
                    is_full: s.proof.as_ref().is_some_and(|p| p.is_full),
                    elapsed: s.elapsed,
                    share_count: s.share_count,
                    share_bits: s.share_bits,
                })
                .unwrap();
        }
        histories.insert(node, history);
    }

    let est = estimate(&histories, 8, difficulty, 1.0).unwrap();
    println!("{:<12} {:>12} {:>8} {:>7}", "node", "est. h/s", "C", "window");
    for (node, e) in &est.nodes {
        println!("{:<12} {:>12.0} {:>8.4} {:>7}", node.to_string(), e.rate, e.c_hat, e.window_used);
    }
    println!("network intake bound D_max = {:.0} bytes/s\n", est.d_max);

    // Hash rate times task latency is flat across CPU-bound boards; the
    // board running the task on a GPU collapses and gets flagged.
    let classification = [
        ("intel-up", 89_000.0, 4400e-6, 500e-6),
        ("up-gateway", 79_000.0, 5000e-6, 5e-6),
        ("jetson-tx2", 184_000.0, 700e-6, 40e-6),
        ("i5-6200u", 561_000.0, 770e-6, 60e-6),
    ];
    let samples: Vec<RatioSample> = classification
        .iter()
        .map(|(name, rate, latency, sigma)| RatioSample {
            node_id: NodeId::new(*name),
            ratio: consistency_ratio(*rate, *latency),
            sigma: rate * sigma,
        })
        .collect();
    let flags = flag_outliers(&samples);
    println!("{:<12} {:>10} flag", "node", "ratio");
    for (s, f) in samples.iter().zip(&flags) {
        println!(
            "{:<12} {:>10.1} {}",
            s.node_id.to_string(),
            s.ratio,
            if *f { "OUTLIER (accelerator)" } else { "-" }
        );
    }
}
