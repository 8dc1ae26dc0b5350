//! Stamp comparison, quality scores and coalition detection: honest peers
//! confirm each other, a counterfeiting clique confirms itself, and the
//! validation graph gives it away.
//!
//! ```bash
//! cargo run --example stamp_validation
//! ```

use swarmchain::quality::{
    compare_stamps, detect_coalitions, ComparisonOutcome, DataStamp, DataType, DensityModel,
    FeatureClass, Location, QualityEvent, QualityLedger, StampBuilder,
};
use swarmchain::NodeId;

/// A tree stamp at 8 m; an honest sensor sees ~395 points there.
fn tree_stamp(producer: &str, points: u64) -> DataStamp {
    StampBuilder::new(NodeId::new(producer), DataType::Pointcloud, FeatureClass::Revolute)
        .distance_m(8.0)
        .channels(16)
        .point_count(points)
        .location(Location::new(20.0, 20.0, 2.0))
        .build()
}

fn main() {
    let model = DensityModel::default();
    let tolerance = 0.25;

    let honest = tree_stamp("honest", 402);
    let peer = tree_stamp("peer", 388);
    let liar = tree_stamp("liar", 1185); // claims 3x the real density

    for (a, b) in [(&honest, &peer), (&liar, &honest)] {
        let cmp = compare_stamps(a, b, &model, tolerance).unwrap();
        println!(
            "{} vs {}: {:?} (density ratio {:.2})",
            a.producer, b.producer, cmp.outcome, cmp.detail
        );
    }

    // Fold a few epochs of cross-validation into the ledger: seven honest
    // nodes confirm each other, three counterfeiters confirm each other,
    // and honest checks push the liars' quality negative.
    let mut ledger = QualityLedger::new();
    let honest_names: Vec<String> = (1..=7).map(|i| format!("h{i}")).collect();
    let liar_names: Vec<String> = (1..=3).map(|i| format!("x{i}")).collect();
    for round in 0..3 {
        for group in [&honest_names, &liar_names] {
            for v in group.iter() {
                for p in group.iter() {
                    if v != p {
                        ledger
                            .update(&QualityEvent::Comparison {
                                validator: NodeId::new(v.clone()),
                                producer: NodeId::new(p.clone()),
                                outcome: ComparisonOutcome::Match,
                            })
                            .unwrap();
                    }
                }
            }
        }
        // Every honest validator that reaches a counterfeit stamp reports
        // the mismatch; the honest majority overwhelms the clique's mutual
        // confirmations.
        let _ = round;
        for validator in &honest_names {
            for liar in &liar_names {
                ledger
                    .update(&QualityEvent::Comparison {
                        validator: NodeId::new(validator.clone()),
                        producer: NodeId::new(liar.clone()),
                        outcome: ComparisonOutcome::Mismatch,
                    })
                    .unwrap();
            }
        }
    }

    println!("\nquality after 3 rounds:");
    for name in honest_names.iter().take(2).chain(liar_names.iter()) {
        println!("  {name}: Q = {:+.2}", ledger.quality(&NodeId::new(name.clone())));
    }

    // Mismatches never create edges, so the liars stay a separate component
    // and their internal density exposes the clique.
    let report = detect_coalitions(ledger.graph(), 0.5);
    println!("\nvalidation graph components:");
    for (i, c) in report.components.iter().enumerate() {
        let members: Vec<&str> = c.members.iter().map(|n| n.as_str()).collect();
        let suspect = report.suspects.contains(&i);
        println!(
            "  {:?} density {:.2}{}",
            members,
            c.density,
            if suspect { "  <- suspect coalition" } else { "" }
        );
    }
}
