//! Lidar stamp density models: linear fits for walls and trees, per-channel
//! knot tables for cars, calibrated from the embedded reference scans.
//!
//! ```bash
//! cargo run --example density_models
//! ```

use swarmchain::quality::{
    fit_linear_relative, DataType, DensityModel, FeatureClass, StampBuilder,
    PLANAR_CALIBRATION, REVOLUTE_CALIBRATION,
};
use swarmchain::NodeId;

fn stamp(class: FeatureClass) -> StampBuilder {
    StampBuilder::new(NodeId::new("demo"), DataType::Pointcloud, class)
}

fn main() {
    let planar = fit_linear_relative(&PLANAR_CALIBRATION).unwrap();
    let revolute = fit_linear_relative(&REVOLUTE_CALIBRATION).unwrap();
    println!(
        "planar (wall):  points = {:.1} + {:.1} * extent_m   (r2 {:.3})",
        planar.model.intercept, planar.model.slope, planar.r_squared
    );
    println!(
        "revolute (tree): points = {:.1} {:.1} * distance_m  (r2 {:.3})",
        revolute.model.intercept, revolute.model.slope, revolute.r_squared
    );

    let model = DensityModel::default();
    println!("\nwall extents:");
    for extent in [0.5, 1.0, 2.0, 2.6] {
        let expected = model
            .expected_point_count(&stamp(FeatureClass::Planar).extent_m(extent).build())
            .unwrap();
        println!("  {extent:>4} m -> {expected:>6.0} points");
    }
    println!("tree distances:");
    for d in [8.0, 12.0, 16.0] {
        let expected = model
            .expected_point_count(&stamp(FeatureClass::Revolute).distance_m(d).build())
            .unwrap();
        println!("  {d:>4} m -> {expected:>6.0} points");
    }

    // The car's visible area and the channels projected on it both change
    // with distance; the 16:8 channel ratio is not constant, which is why
    // each channel count keeps its own knot table.
    println!("car distances (16ch / 8ch, ratio):");
    for d in [4.0, 5.5, 8.0, 9.8] {
        let c16 = model
            .expected_point_count(&stamp(FeatureClass::Composite).distance_m(d).channels(16).build())
            .unwrap();
        let c8 = model
            .expected_point_count(&stamp(FeatureClass::Composite).distance_m(d).channels(8).build())
            .unwrap();
        println!("  {d:>4} m -> {c16:>6.0} / {c8:>5.0}   {:.2}", c16 / c8);
    }
}
