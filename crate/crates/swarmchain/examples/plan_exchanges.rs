//! The exchange optimizer: quality-weighted, fit-weighted selection under
//! compute and bandwidth bounds, replicated deterministically at every node.
//!
//! ```bash
//! cargo run --example plan_exchanges
//! ```

use std::collections::BTreeMap;
use swarmchain::allocation::{
    mismatch_error, optimize, plan_is_feasible, AvailableData, ConstraintMode, DataRequest,
};
use swarmchain::quality::DataType;
use swarmchain::NodeId;

fn main() {
    // A drone and a car both want point clouds; a trusted sensor rig, a new
    // node and a known liar offer them.
    let requests = vec![
        DataRequest {
            requester: NodeId::new("drone"),
            data_type: DataType::Pointcloud,
            max_size: 60_000,
            min_res: 0.5,
            max_res: 1.5,
        },
        DataRequest {
            requester: NodeId::new("car"),
            data_type: DataType::Pointcloud,
            max_size: 200_000,
            min_res: 1.0,
            max_res: 2.0,
        },
    ];
    let availables = vec![
        AvailableData {
            provider: NodeId::new("rig"),
            data_type: DataType::Pointcloud,
            max_size: 200_000,
            min_res: 0.5,
            max_res: 2.0,
        },
        AvailableData {
            provider: NodeId::new("newbie"),
            data_type: DataType::Pointcloud,
            max_size: 30_000,
            min_res: 0.2,
            max_res: 0.4,
        },
        AvailableData {
            provider: NodeId::new("liar"),
            data_type: DataType::Pointcloud,
            max_size: 200_000,
            min_res: 0.5,
            max_res: 2.0,
        },
    ];
    let quality = BTreeMap::from([
        (NodeId::new("rig"), 12.0),
        (NodeId::new("newbie"), 0.01),
        (NodeId::new("liar"), -6.0),
    ]);
    // The drone is compute-poor: its intake bound caps its transfer sizes.
    let c_hat = BTreeMap::from([(NodeId::new("drone"), 0.15), (NodeId::new("car"), 1.0)]);
    let d_max = 200_000.0;
    let mut bandwidth = BTreeMap::new();
    for r in ["drone", "car"] {
        for p in ["rig", "newbie", "liar"] {
            bandwidth.insert((NodeId::new(r), NodeId::new(p)), 150_000.0);
        }
    }

    let e = mismatch_error(&requests[0], &availables[1]).unwrap();
    println!("drone <- newbie fit error E = {e:.2} (resolution gap plus size shortfall)\n");

    for (alpha, beta, label) in [(1.0, 1.0, "balanced"), (0.0, 1.0, "fit only (alpha = 0)")] {
        let plan = optimize(
            &requests,
            &availables,
            &quality,
            &c_hat,
            d_max,
            &bandwidth,
            alpha,
            beta,
            ConstraintMode::PerExchange,
        );
        assert!(plan_is_feasible(&plan, &c_hat, d_max, &bandwidth, ConstraintMode::PerExchange));
        println!("weights {label}: objective {:.3}", plan.objective_value);
        for x in &plan.exchanges {
            println!(
                "  {} <- {:<7} {:>7} bytes  (E {:.2}, term {:+.3})",
                x.receiver, x.provider.to_string(), x.size, x.error, x.term_value
            );
        }
        println!();
    }
    println!("the liar is chosen only once provider quality stops mattering");
}
