//! The three commands behind the `swarmchain` binary: scenario runs with
//! report emission, density-model calibration from CSV, and the live-hashing
//! benchmark with consistency-ratio reporting.
//!
//! Everything here is deterministic for fixed inputs and seed except the
//! bench hash-rate measurement, which is wall-clock by nature and kept out
//! of every other output. CSV schemas are documented in `docs/formats.md`
//! (format version 1).

use crate::estimator::{consistency_ratio, flag_outliers, RatioSample};
use crate::pow;
use crate::quality::{fit_linear_relative, CalibrationSet, FitReport};
use crate::sim::{scenario, Scenario, TransferEvent, World};
use crate::wire::Digest32;
use crate::NodeId;
use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use thiserror::Error;

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum CmdError {
    /// Bad input: scenario, CSV schema, missing file. Exit code 2.
    #[error("{0}")]
    Input(String),
    /// Failure while running. Exit code 1.
    #[error("{0}")]
    Runtime(String),
}

impl CmdError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CmdError::Input(_) => 2,
            CmdError::Runtime(_) => 1,
        }
    }
}

#[derive(Debug, Clone)]
pub struct RunReport {
    pub scenario: String,
    pub seed: u64,
    pub epochs_requested: u64,
    pub epochs_run: u64,
    pub destroyed_at: Option<u64>,
    /// 64 hex chars of the final canonical tip digest.
    pub final_chain_digest: String,
    pub final_state_digest: String,
    pub files: Vec<String>,
    /// Per-run self checks: (name, pass).
    pub checks: Vec<(String, bool)>,
}

impl RunReport {
    pub fn render(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "format_version = {FORMAT_VERSION}");
        let _ = writeln!(out, "scenario = {}", self.scenario);
        let _ = writeln!(out, "seed = {}", self.seed);
        let _ = writeln!(out, "epochs_requested = {}", self.epochs_requested);
        let _ = writeln!(out, "epochs_run = {}", self.epochs_run);
        match self.destroyed_at {
            Some(e) => {
                let _ = writeln!(out, "destroyed_at = {e}");
            }
            None => {
                let _ = writeln!(out, "destroyed_at = never");
            }
        }
        let _ = writeln!(out, "final_chain_digest = {}", self.final_chain_digest);
        let _ = writeln!(out, "final_state_digest = {}", self.final_state_digest);
        for f in &self.files {
            let _ = writeln!(out, "file = {f}");
        }
        for (name, ok) in &self.checks {
            let _ = writeln!(out, "check {name} = {}", if *ok { "pass" } else { "FAIL" });
        }
        out
    }
}

fn write_file(dir: &Path, name: &str, contents: &str) -> Result<(), CmdError> {
    std::fs::write(dir.join(name), contents)
        .map_err(|e| CmdError::Runtime(format!("writing {name}: {e}")))
}

/// Run a scenario for `epochs` epochs and emit the report set into `out`.
pub fn cmd_run(
    scenario_path: &Path,
    seed: u64,
    epochs: u64,
    out_dir: &Path,
) -> Result<RunReport, CmdError> {
    let scenario = Scenario::from_file(scenario_path).map_err(|e| CmdError::Input(e.to_string()))?;
    let mut world =
        World::new(scenario, seed).map_err(|e| CmdError::Input(e.to_string()))?;
    world
        .run(epochs)
        .map_err(|e| CmdError::Runtime(e.to_string()))?;
    std::fs::create_dir_all(out_dir)
        .map_err(|e| CmdError::Runtime(format!("creating {}: {e}", out_dir.display())))?;

    write_file(out_dir, "chain.txt", &world.chain.snapshot_lines())?;
    write_file(out_dir, "epochs.csv", &epochs_csv(&world))?;
    write_file(out_dir, "estimates.csv", &estimates_csv(&world))?;
    write_file(out_dir, "plan.csv", &plan_csv(&world))?;
    write_file(out_dir, "fees.csv", &fees_csv(&world))?;
    write_file(out_dir, "transfers.csv", &transfers_csv(&world))?;
    write_file(out_dir, "quality.csv", &quality_csv(&world))?;

    let checks = run_checks(&world);
    let report = RunReport {
        scenario: world.scenario.name.clone(),
        seed,
        epochs_requested: epochs,
        epochs_run: world.traces.len() as u64,
        destroyed_at: world.destroyed_at(),
        final_chain_digest: world.chain.tip().digest.to_hex(),
        final_state_digest: world.chain.state_digest().to_hex(),
        files: vec![
            "chain.txt".into(),
            "epochs.csv".into(),
            "estimates.csv".into(),
            "plan.csv".into(),
            "fees.csv".into(),
            "transfers.csv".into(),
            "quality.csv".into(),
        ],
        checks,
    };
    write_file(out_dir, "report.txt", &report.render())?;
    Ok(report)
}

fn epochs_csv(world: &World) -> String {
    let mut out = String::from(
        "epoch,tip_digest,state_digest,spendable_total,minted_total,expired_total,fees_total,stamps,comparisons,exchanges,transfers,objective\n",
    );
    for t in &world.traces {
        let minted: u64 = t.minted.iter().map(|(_, a)| a).sum();
        let expired: u64 = t.expired.iter().map(|(_, _, a)| a).sum();
        let fees: u64 = t.fees.iter().map(|f| f.fee).sum();
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{},{:.6}",
            t.epoch,
            t.tip_digest.to_hex(),
            t.state_digest.to_hex(),
            t.spendable_total,
            minted,
            expired,
            fees,
            t.stamps.len(),
            t.comparisons.len(),
            t.plan.exchanges.len(),
            t.transfers.len(),
            t.plan.objective_value,
        );
    }
    out
}

fn estimates_csv(world: &World) -> String {
    let mut out = String::from("epoch,node_id,rate,c_hat,window\n");
    for t in &world.traces {
        if let Some(est) = &t.estimate {
            for (node, e) in &est.nodes {
                let _ = writeln!(
                    out,
                    "{},{},{:.6},{:.6},{}",
                    t.epoch, node, e.rate, e.c_hat, e.window_used
                );
            }
        }
    }
    out
}

fn plan_csv(world: &World) -> String {
    let mut out = String::from("epoch,receiver,provider,type,size,term_value\n");
    for t in &world.traces {
        for x in &t.plan.exchanges {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{:.6}",
                t.epoch,
                x.receiver,
                x.provider,
                x.data_type.as_str(),
                x.size,
                x.term_value
            );
        }
    }
    out
}

fn fees_csv(world: &World) -> String {
    let mut rows: Vec<(u64, u64)> = world
        .traces
        .iter()
        .flat_map(|t| t.fees.iter().map(|f| (f.payload_size, f.fee)))
        .collect();
    rows.sort();
    rows.dedup();
    let mut out = String::from("payload_bytes,fee\n");
    for (payload, fee) in rows {
        let _ = writeln!(out, "{payload},{fee}");
    }
    out
}

fn transfers_csv(world: &World) -> String {
    let mut out =
        String::from("epoch,receiver,provider,via,stamp_digest,size,sent,arrived,registered,relay_refused\n");
    for t in &world.traces {
        for tr in &t.transfers {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{:.6},{},{},{}",
                tr.epoch,
                tr.receiver,
                tr.provider,
                tr.via.as_ref().map_or("-", |v| v.as_str()),
                tr.stamp_digest.to_hex(),
                tr.size,
                tr.sent,
                tr.arrived.map_or_else(|| "-".to_string(), |a| format!("{a:.6}")),
                tr.registered,
                tr.relay_refused,
            );
        }
    }
    out
}

fn quality_csv(world: &World) -> String {
    let mut out = String::from("epoch,node_id,q\n");
    for t in &world.traces {
        for (node, q) in &t.quality {
            let _ = writeln!(out, "{},{},{:.6}", t.epoch, node, q);
        }
    }
    out
}

/// Per-run self checks recorded in the report.
fn run_checks(world: &World) -> Vec<(String, bool)> {
    let fee_ok = world.traces.iter().all(|t| {
        t.fees
            .iter()
            .all(|f| f.fee == world.scenario.chain.fee_for_payload(f.payload_size))
    });
    let relay_ok = world.traces.iter().all(|t| {
        t.transfers
            .iter()
            .all(relayed_bytes_ok)
    });
    let conservation_ok = supply_conserved(world);
    vec![
        ("fee_schedule".into(), fee_ok),
        ("relay_audit".into(), relay_ok),
        ("supply_conservation".into(), conservation_ok),
    ]
}

/// No bytes of an unregistered sample may cross a relay.
pub fn relayed_bytes_ok(t: &TransferEvent) -> bool {
    if t.via.is_some() && !t.registered {
        t.arrived.is_none() && t.relay_refused
    } else {
        true
    }
}

/// Spendable supply each epoch equals allowances minted within the demurrage
/// window minus the fees spent from those lots.
pub fn supply_conserved(world: &World) -> bool {
    let window = world.scenario.chain.demurrage_window;
    let mut minted_by_epoch: BTreeMap<u64, u64> = BTreeMap::new();
    // (lot epoch, amount) of every fee debit, cumulative.
    let mut spent_from_lot: BTreeMap<u64, u64> = BTreeMap::new();
    for t in &world.traces {
        for (_, amount) in &t.minted {
            *minted_by_epoch.entry(t.epoch).or_insert(0) += amount;
        }
        for fee in &t.fees {
            for (lot_epoch, amount) in &fee.lots {
                *spent_from_lot.entry(*lot_epoch).or_insert(0) += amount;
            }
        }
        let lo = t.epoch.saturating_sub(window - 1);
        let minted_in_window: u64 = minted_by_epoch.range(lo..=t.epoch).map(|(_, a)| a).sum();
        let spent_in_window: u64 = spent_from_lot.range(lo..=t.epoch).map(|(_, a)| a).sum();
        if t.spendable_total != minted_in_window - spent_in_window {
            return false;
        }
    }
    true
}

#[derive(Debug, Clone)]
pub struct CalibrationReport {
    pub planar: Option<FitReport>,
    pub revolute: Option<FitReport>,
    pub composite: BTreeMap<u32, Vec<(f64, f64)>>,
    pub model_path: PathBuf,
}

impl CalibrationReport {
    pub fn render(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "format_version = {FORMAT_VERSION}");
        if let Some(fit) = &self.planar {
            let _ = writeln!(
                out,
                "planar: intercept {:.3} slope {:.3} pts/m, r2 {:.4}, max residual {:.2}%",
                fit.model.intercept,
                fit.model.slope,
                fit.r_squared,
                fit.max_relative_residual * 100.0
            );
        }
        if let Some(fit) = &self.revolute {
            let _ = writeln!(
                out,
                "revolute: intercept {:.3} slope {:.3} pts/m, r2 {:.4}, max residual {:.2}%",
                fit.model.intercept,
                fit.model.slope,
                fit.r_squared,
                fit.max_relative_residual * 100.0
            );
        }
        for (channels, knots) in &self.composite {
            let text: Vec<String> = knots.iter().map(|(d, p)| format!("{d}:{p}")).collect();
            let _ = writeln!(out, "composite {channels}: {}", text.join(" "));
        }
        let _ = writeln!(out, "model written to {}", self.model_path.display());
        out
    }
}

/// Fit density models from a calibration CSV
/// (`feature_class,channels,x,points`) and write the model file.
pub fn cmd_calibrate(points_csv: &Path, out_model: Option<&Path>) -> Result<CalibrationReport, CmdError> {
    let text = std::fs::read_to_string(points_csv)
        .map_err(|e| CmdError::Input(format!("{}: {e}", points_csv.display())))?;
    let mut lines = text.lines().enumerate();
    let header = lines
        .next()
        .map(|(_, l)| l.trim())
        .ok_or_else(|| CmdError::Input("empty calibration CSV".into()))?;
    if header != "feature_class,channels,x,points" {
        return Err(CmdError::Input(format!(
            "calibration CSV header must be 'feature_class,channels,x,points', got '{header}'"
        )));
    }
    let mut cal = CalibrationSet::default();
    for (idx, line) in lines {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let cols: Vec<&str> = line.split(',').map(str::trim).collect();
        if cols.len() != 4 {
            return Err(CmdError::Input(format!("line {}: expected 4 columns", idx + 1)));
        }
        let x: f64 = cols[2]
            .parse()
            .map_err(|_| CmdError::Input(format!("line {}: bad x '{}'", idx + 1, cols[2])))?;
        let points: f64 = cols[3]
            .parse()
            .map_err(|_| CmdError::Input(format!("line {}: bad points '{}'", idx + 1, cols[3])))?;
        match cols[0] {
            "planar" => cal.planar.push((x, points)),
            "revolute" => cal.revolute.push((x, points)),
            "composite" => {
                let channels: u32 = cols[1].parse().map_err(|_| {
                    CmdError::Input(format!("line {}: bad channels '{}'", idx + 1, cols[1]))
                })?;
                cal.composite.entry(channels).or_default().push((x, points));
            }
            other => {
                return Err(CmdError::Input(format!(
                    "line {}: unknown feature_class '{other}'",
                    idx + 1
                )))
            }
        }
    }

    let planar = match cal.planar.len() {
        0 => None,
        _ => Some(fit_linear_relative(&cal.planar).map_err(|e| CmdError::Input(e.to_string()))?),
    };
    let revolute = match cal.revolute.len() {
        0 => None,
        _ => Some(fit_linear_relative(&cal.revolute).map_err(|e| CmdError::Input(e.to_string()))?),
    };
    for (channels, knots) in &cal.composite {
        if knots.len() < 2 {
            return Err(CmdError::Input(format!(
                "composite {channels}: needs at least 2 knots, got {}",
                knots.len()
            )));
        }
    }
    if planar.is_none() && revolute.is_none() && cal.composite.is_empty() {
        return Err(CmdError::Input("calibration CSV holds no usable rows".into()));
    }

    let model =
        scenario::model_from_calibration(&cal).map_err(CmdError::Input)?;
    let model_path = out_model
        .map(Path::to_path_buf)
        .unwrap_or_else(|| points_csv.with_extension("model"));
    std::fs::write(&model_path, scenario::render_model_text(&model))
        .map_err(|e| CmdError::Runtime(format!("writing model: {e}")))?;

    let mut composite = cal.composite.clone();
    for knots in composite.values_mut() {
        knots.sort_by(|a, b| a.0.total_cmp(&b.0));
    }
    Ok(CalibrationReport {
        planar,
        revolute,
        composite,
        model_path,
    })
}

#[derive(Debug, Clone)]
pub struct RatioRow {
    pub node_id: NodeId,
    pub hash_rate: f64,
    pub mean_latency: f64,
    pub ratio: f64,
    pub sigma: f64,
    pub outlier: bool,
}

#[derive(Debug, Clone, Default)]
pub struct BenchReport {
    /// Wall-clock measured hash rate; absent when duration is zero.
    pub measured_hps: Option<f64>,
    pub best_bits: Option<u32>,
    pub lanes: usize,
    /// Consistency ratios per task name.
    pub tasks: BTreeMap<String, Vec<RatioRow>>,
}

impl BenchReport {
    pub fn render(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "format_version = {FORMAT_VERSION}");
        match self.measured_hps {
            Some(hps) => {
                let _ = writeln!(
                    out,
                    "measured_hash_rate_hps = {hps:.0}   # wall-clock, lanes={}",
                    self.lanes
                );
                if let Some(bits) = self.best_bits {
                    let _ = writeln!(out, "best_bits = {bits}");
                }
            }
            None => {
                let _ = writeln!(out, "measured_hash_rate_hps = -   # duration 0, hashing skipped");
            }
        }
        for (task, rows) in &self.tasks {
            let _ = writeln!(out, "[task {task}]");
            for r in rows {
                let _ = writeln!(
                    out,
                    "{} rate={:.0} latency={:.6} ratio={:.3} sigma={:.3}{}",
                    r.node_id,
                    r.hash_rate,
                    r.mean_latency,
                    r.ratio,
                    r.sigma,
                    if r.outlier { " OUTLIER" } else { "" }
                );
            }
        }
        out
    }
}

/// Live-hash on the host for `duration` seconds at `difficulty`, then (when
/// a latency CSV is given) compute consistency ratios with outlier flags.
pub fn cmd_bench(
    difficulty_bits: u32,
    duration: f64,
    lanes: usize,
    latencies: Option<&Path>,
) -> Result<BenchReport, CmdError> {
    let mut report = BenchReport {
        lanes: lanes.max(1),
        ..BenchReport::default()
    };
    if duration > 0.0 {
        let (hps, best) = live_hash(difficulty_bits, duration, lanes.max(1));
        report.measured_hps = Some(hps);
        report.best_bits = Some(best);
    }
    if let Some(path) = latencies {
        report.tasks = consistency_tasks(path)?;
    }
    Ok(report)
}

fn live_hash(difficulty_bits: u32, duration: f64, lanes: usize) -> (f64, u32) {
    use std::time::Instant;
    let puzzle = pow::derive_puzzle(&NodeId::new("bench"), Digest32::ZERO, difficulty_bits);
    let start = Instant::now();
    let results: Vec<(u64, u32)> = std::thread::scope(|scope| {
        let handles: Vec<_> = (0..lanes)
            .map(|lane| {
                let puzzle = &puzzle;
                scope.spawn(move || {
                    let mut hashes = 0u64;
                    let mut best = 0u32;
                    let mut nonce = lane as u64;
                    loop {
                        for _ in 0..4096 {
                            best = best.max(pow::verify(puzzle, nonce));
                            nonce += lanes as u64;
                            hashes += 1;
                        }
                        if start.elapsed().as_secs_f64() >= duration {
                            return (hashes, best);
                        }
                    }
                })
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("lane panicked")).collect()
    });
    let elapsed = start.elapsed().as_secs_f64();
    let total: u64 = results.iter().map(|(h, _)| h).sum();
    let best = results.iter().map(|(_, b)| *b).max().unwrap_or(0);
    (total as f64 / elapsed, best)
}

/// Parse a latency CSV (`node_id,hash_rate,task,latency_s`; repeated rows
/// are repeated measurements) into per-task ratio tables with outlier flags.
pub fn consistency_tasks(path: &Path) -> Result<BTreeMap<String, Vec<RatioRow>>, CmdError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CmdError::Input(format!("{}: {e}", path.display())))?;
    let mut lines = text.lines().enumerate();
    let header = lines.next().map(|(_, l)| l.trim()).unwrap_or("");
    if header != "node_id,hash_rate,task,latency_s" {
        return Err(CmdError::Input(format!(
            "latency CSV header must be 'node_id,hash_rate,task,latency_s', got '{header}'"
        )));
    }
    type Key = (String, String);
    let mut samples: BTreeMap<Key, (f64, Vec<f64>)> = BTreeMap::new();
    for (idx, line) in lines {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let cols: Vec<&str> = line.split(',').map(str::trim).collect();
        if cols.len() != 4 {
            return Err(CmdError::Input(format!("line {}: expected 4 columns", idx + 1)));
        }
        let rate: f64 = cols[1]
            .parse()
            .map_err(|_| CmdError::Input(format!("line {}: bad hash_rate", idx + 1)))?;
        let latency: f64 = cols[3]
            .parse()
            .map_err(|_| CmdError::Input(format!("line {}: bad latency_s", idx + 1)))?;
        let entry = samples
            .entry((cols[2].to_string(), cols[0].to_string()))
            .or_insert((rate, Vec::new()));
        entry.1.push(latency);
    }

    let mut tasks: BTreeMap<String, Vec<RatioRow>> = BTreeMap::new();
    for ((task, node), (rate, latencies)) in samples {
        let n = latencies.len() as f64;
        let mean = latencies.iter().sum::<f64>() / n;
        let var = if latencies.len() > 1 {
            latencies.iter().map(|l| (l - mean).powi(2)).sum::<f64>() / (n - 1.0)
        } else {
            0.0
        };
        tasks.entry(task).or_default().push(RatioRow {
            node_id: NodeId::new(node),
            hash_rate: rate,
            mean_latency: mean,
            ratio: consistency_ratio(rate, mean),
            sigma: rate * var.sqrt(),
            outlier: false,
        });
    }
    for rows in tasks.values_mut() {
        rows.sort_by(|a, b| a.node_id.cmp(&b.node_id));
        let samples: Vec<RatioSample> = rows
            .iter()
            .map(|r| RatioSample {
                node_id: r.node_id.clone(),
                ratio: r.ratio,
                sigma: r.sigma,
            })
            .collect();
        for (row, flag) in rows.iter_mut().zip(flag_outliers(&samples)) {
            row.outlier = flag;
        }
    }
    Ok(tasks)
}
