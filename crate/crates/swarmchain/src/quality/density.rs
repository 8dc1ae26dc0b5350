//! Point-density models for lidar data stamps.
//!
//! Three feature geometries are covered, each calibrated from real
//! 32-channel scans of urban features:
//!
//! * planar surfaces (building walls): point count grows linearly with the
//!   horizontal extent captured in the sample;
//! * revolute solids (trees): the visible surface is stable from any side,
//!   so the count falls linearly with distance;
//! * composite objects (parked cars): visibility and channel projection both
//!   change with distance, so the count is a per-channel-count knot table
//!   with monotone interpolation, not a single line.
//!
//! The linear fits minimize squared *relative* residuals (weights `1/y^2`):
//! sensor scatter on segmented point clouds is multiplicative, and the
//! comparison pipeline works in density ratios.

use super::{DataStamp, DataType, FeatureClass, QualityError};
use std::collections::BTreeMap;

/// Calibration points embedded from the reference corner-wall measurements:
/// (horizontal wall extent m, segmented points).
pub const PLANAR_CALIBRATION: [(f64, f64); 8] = [
    (0.46, 58.0),
    (0.9, 97.0),
    (1.21, 128.0),
    (1.36, 143.0),
    (1.55, 166.0),
    (1.96, 202.0),
    (2.2, 229.0),
    (2.6, 278.0),
];

/// Reference tree measurements: (distance m, segmented points).
pub const REVOLUTE_CALIBRATION: [(f64, f64); 5] = [
    (8.0, 395.0),
    (10.2, 326.0),
    (11.8, 241.0),
    (15.2, 165.0),
    (16.1, 134.0),
];

/// Reference car measurements per lidar channel count: (distance m, points).
pub const COMPOSITE_CALIBRATION_16CH: [(f64, f64); 4] =
    [(4.0, 1117.0), (5.5, 578.0), (8.0, 273.0), (9.8, 150.0)];
pub const COMPOSITE_CALIBRATION_8CH: [(f64, f64); 4] =
    [(4.0, 457.0), (5.5, 294.0), (8.0, 114.0), (9.8, 76.0)];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinearModel {
    pub intercept: f64,
    pub slope: f64,
}

impl LinearModel {
    pub fn eval(&self, x: f64) -> f64 {
        self.intercept + self.slope * x
    }
}

/// Fit quality for a linear class, reported by the calibrate command.
#[derive(Debug, Clone, Copy)]
pub struct FitReport {
    pub model: LinearModel,
    pub r_squared: f64,
    pub max_relative_residual: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DensityModel {
    pub planar: LinearModel,
    pub revolute: LinearModel,
    /// Knot tables keyed by channel count, knots sorted by distance and
    /// strictly decreasing in points.
    pub composite: BTreeMap<u32, Vec<(f64, f64)>>,
}

/// Calibration input: linear-class points plus per-channel composite knots.
#[derive(Debug, Clone, Default)]
pub struct CalibrationSet {
    pub planar: Vec<(f64, f64)>,
    pub revolute: Vec<(f64, f64)>,
    pub composite: BTreeMap<u32, Vec<(f64, f64)>>,
}

impl CalibrationSet {
    pub fn reference() -> Self {
        let mut composite = BTreeMap::new();
        composite.insert(16, COMPOSITE_CALIBRATION_16CH.to_vec());
        composite.insert(8, COMPOSITE_CALIBRATION_8CH.to_vec());
        CalibrationSet {
            planar: PLANAR_CALIBRATION.to_vec(),
            revolute: REVOLUTE_CALIBRATION.to_vec(),
            composite,
        }
    }
}

/// Relative least squares: minimize sum of ((a + b*x - y)/y)^2.
pub fn fit_linear_relative(points: &[(f64, f64)]) -> Result<FitReport, QualityError> {
    if points.len() < 2 {
        return Err(QualityError::InsufficientCalibration {
            needed: 2,
            got: points.len(),
        });
    }
    let (mut sw, mut sx, mut sxx, mut sy, mut sxy) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for &(x, y) in points {
        if y <= 0.0 {
            return Err(QualityError::InsufficientCalibration {
                needed: 2,
                got: 0,
            });
        }
        let w = 1.0 / (y * y);
        sw += w;
        sx += w * x;
        sxx += w * x * x;
        sy += w * y;
        sxy += w * x * y;
    }
    let det = sw * sxx - sx * sx;
    if det.abs() < 1e-12 {
        // All x equal: no slope is identifiable.
        return Err(QualityError::InsufficientCalibration {
            needed: 2,
            got: 1,
        });
    }
    let intercept = (sy * sxx - sx * sxy) / det;
    let slope = (sw * sxy - sx * sy) / det;
    let model = LinearModel { intercept, slope };

    let mean_y: f64 = points.iter().map(|p| p.1).sum::<f64>() / points.len() as f64;
    let ss_res: f64 = points.iter().map(|&(x, y)| (y - model.eval(x)).powi(2)).sum();
    let ss_tot: f64 = points.iter().map(|&(_, y)| (y - mean_y).powi(2)).sum();
    let r_squared = if ss_tot > 0.0 { 1.0 - ss_res / ss_tot } else { 1.0 };
    let max_relative_residual = points
        .iter()
        .map(|&(x, y)| ((model.eval(x) - y) / y).abs())
        .fold(0.0, f64::max);
    Ok(FitReport {
        model,
        r_squared,
        max_relative_residual,
    })
}

/// Fit both linear classes and store composite knots verbatim.
pub fn fit_density_models(calibration: &CalibrationSet) -> Result<DensityModel, QualityError> {
    let planar = fit_linear_relative(&calibration.planar)?.model;
    let revolute = fit_linear_relative(&calibration.revolute)?.model;
    let mut composite = BTreeMap::new();
    for (&channels, knots) in &calibration.composite {
        if knots.len() < 2 {
            return Err(QualityError::InsufficientCalibration {
                needed: 2,
                got: knots.len(),
            });
        }
        let mut sorted = knots.clone();
        sorted.sort_by(|a, b| a.0.total_cmp(&b.0));
        composite.insert(channels, sorted);
    }
    Ok(DensityModel {
        planar,
        revolute,
        composite,
    })
}

impl Default for DensityModel {
    /// Models fitted to the embedded reference measurements.
    fn default() -> Self {
        fit_density_models(&CalibrationSet::reference())
            .expect("reference calibration is well-formed")
    }
}

impl DensityModel {
    /// Expected point count for a stamp, per its feature class.
    ///
    /// Image stamps use a placeholder identity model (the claimed pixel count
    /// is its own expectation) until a real image characterization exists.
    pub fn expected_point_count(&self, stamp: &DataStamp) -> Result<f64, QualityError> {
        if stamp.data_type == DataType::Image {
            return Ok((stamp.point_count as f64).max(1.0));
        }
        match stamp.feature_class {
            FeatureClass::Planar => {
                let extent = stamp.extent_m.ok_or(QualityError::MissingField("extent_m"))?;
                Ok(self.planar.eval(extent).max(1.0))
            }
            FeatureClass::Revolute => {
                let d = stamp.distance_m.ok_or(QualityError::MissingField("distance_m"))?;
                Ok(self.revolute.eval(d).max(1.0))
            }
            FeatureClass::Composite => {
                let d = stamp.distance_m.ok_or(QualityError::MissingField("distance_m"))?;
                let channels = stamp.channels.ok_or(QualityError::MissingField("channels"))?;
                let knots = self
                    .composite
                    .get(&channels)
                    .ok_or(QualityError::UnknownChannelCount(channels))?;
                Ok(interpolate_monotone(knots, d).max(1.0))
            }
        }
    }
}

/// Piecewise-linear interpolation over sorted knots, extrapolating with the
/// end segment slopes. Linear pieces keep the table's monotonicity.
fn interpolate_monotone(knots: &[(f64, f64)], x: f64) -> f64 {
    debug_assert!(knots.len() >= 2);
    let n = knots.len();
    let seg = if x <= knots[0].0 {
        (knots[0], knots[1])
    } else if x >= knots[n - 1].0 {
        (knots[n - 2], knots[n - 1])
    } else {
        let hi = knots.partition_point(|k| k.0 < x).min(n - 1).max(1);
        (knots[hi - 1], knots[hi])
    };
    let ((x0, y0), (x1, y1)) = seg;
    if (x1 - x0).abs() < f64::EPSILON {
        return y0;
    }
    y0 + (y1 - y0) * (x - x0) / (x1 - x0)
}
