//! Online estimation of per-node compute capacity from proof histories.
//!
//! Every proof or partial proof is a measurement: an outcome of `b` achieved
//! bits represents `2^b` expected hashes, and a session's partial shares
//! each represent `2^share_bits` expected hashes. A node's rate is the
//! effort-weighted mean over an adaptive window of recent entries, chosen so
//! that older regimes (a node freeing or committing resources elsewhere) do
//! not pollute the estimate. Normalizing by the network maximum gives the
//! dimensionless capacity C in [0, 1] and the intake bound D_max.

use crate::NodeId;
use std::collections::BTreeMap;
use thiserror::Error;

/// One epoch's mining evidence for a node.
#[derive(Debug, Clone, PartialEq)]
pub struct ProofEntry {
    pub epoch: u64,
    pub achieved_bits: u32,
    pub is_full: bool,
    /// Simulated seconds the node mined before submitting.
    pub elapsed: f64,
    /// Qualifying partial shares observed during the session; a bare proof
    /// record counts itself as a single share at its achieved bits.
    pub share_count: u64,
    pub share_bits: u32,
}

impl ProofEntry {
    /// Entry from a lone best proof, without session share data.
    pub fn from_best_proof(epoch: u64, achieved_bits: u32, is_full: bool, elapsed: f64) -> Self {
        ProofEntry {
            epoch,
            achieved_bits,
            is_full,
            elapsed,
            share_count: 1,
            share_bits: achieved_bits,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProofHistory {
    pub node_id: NodeId,
    entries: Vec<ProofEntry>,
}

#[derive(Debug, Error, PartialEq)]
pub enum EstimatorError {
    #[error("entry has zero elapsed time")]
    ZeroElapsed,
    #[error("history holds {got} entries, {needed} required")]
    InsufficientHistory { needed: usize, got: usize },
    #[error("no node has enough history to estimate")]
    NoEligibleNodes,
    #[error("entry for epoch {0} already recorded")]
    DuplicateEpoch(u64),
}

impl ProofHistory {
    pub fn new(node_id: NodeId) -> Self {
        ProofHistory {
            node_id,
            entries: Vec::new(),
        }
    }

    /// Append an entry; epochs must be strictly increasing, at most one
    /// entry per epoch.
    pub fn record(&mut self, entry: ProofEntry) -> Result<(), EstimatorError> {
        if let Some(last) = self.entries.last() {
            if entry.epoch <= last.epoch {
                return Err(EstimatorError::DuplicateEpoch(entry.epoch));
            }
        }
        self.entries.push(entry);
        Ok(())
    }

    pub fn entries(&self) -> &[ProofEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// Expected hashes represented by an entry. Extra zero bits beyond the
/// difficulty are luck, not effort, so full proofs are capped at the puzzle
/// difficulty.
fn work_units(entry: &ProofEntry, difficulty_bits: u32) -> f64 {
    let bits = entry.share_bits.min(difficulty_bits);
    entry.share_count as f64 * (bits as f64).exp2()
}

/// Per-entry hash-rate estimate: expected hashes over elapsed seconds.
pub fn hash_rate_point(entry: &ProofEntry, difficulty_bits: u32) -> Result<f64, EstimatorError> {
    if entry.elapsed <= 0.0 {
        return Err(EstimatorError::ZeroElapsed);
    }
    Ok(work_units(entry, difficulty_bits) / entry.elapsed)
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

fn std_dev(xs: &[f64]) -> f64 {
    let m = mean(xs);
    (xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / xs.len() as f64).sqrt()
}

/// Pick how many recent proofs to trust.
///
/// Returns the largest window `N >= min_proofs` such that for every shorter
/// window `M` (`min_proofs <= M < N`) the mean rate over the last `N` points
/// stays within one standard deviation of the mean over the last `M` points.
/// A rate regime change (more or fewer resources reserved for mining) breaks
/// the condition, shrinking the window to the current regime; when nothing
/// larger qualifies the minimum window is used.
pub fn select_window(
    history: &ProofHistory,
    min_proofs: usize,
    difficulty_bits: u32,
) -> Result<usize, EstimatorError> {
    let n = history.len();
    if n < min_proofs || min_proofs == 0 {
        return Err(EstimatorError::InsufficientHistory {
            needed: min_proofs,
            got: n,
        });
    }
    let points: Vec<f64> = history
        .entries()
        .iter()
        .map(|e| hash_rate_point(e, difficulty_bits))
        .collect::<Result<_, _>>()?;
    let last = |k: usize| &points[n - k..];
    for window in (min_proofs..=n).rev() {
        let mu_n = mean(last(window));
        let ok = (min_proofs..window).all(|m| {
            let mu_m = mean(last(m));
            let sigma_m = std_dev(last(m));
            mu_m - sigma_m <= mu_n && mu_n <= mu_m + sigma_m
        });
        if ok {
            return Ok(window);
        }
    }
    Ok(min_proofs)
}

#[derive(Debug, Clone, PartialEq)]
pub struct NodeEstimate {
    /// Effort-weighted mean hash rate over the selected window, h/s.
    pub rate: f64,
    /// Rate normalized by the network maximum; the best node reads 1.
    pub c_hat: f64,
    /// Window length actually used.
    pub window_used: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComputeEstimate {
    pub nodes: BTreeMap<NodeId, NodeEstimate>,
    /// Bytes per second the most capable node can process.
    pub d_max: f64,
}

impl ComputeEstimate {
    pub fn c_hat(&self, node: &NodeId) -> Option<f64> {
        self.nodes.get(node).map(|e| e.c_hat)
    }

    pub fn c_hat_map(&self) -> BTreeMap<NodeId, f64> {
        self.nodes
            .iter()
            .map(|(n, e)| (n.clone(), e.c_hat))
            .collect()
    }
}

/// Estimate every eligible node's capacity.
///
/// A node is eligible once it has at least `min_proofs` entries. The window
/// rate is total expected work over total mining time within the selected
/// window, and capacities are rates normalized by the maximum. `d_max` maps
/// the maximum rate to bytes/second through `bytes_per_hash_unit`.
pub fn estimate(
    histories: &BTreeMap<NodeId, ProofHistory>,
    min_proofs: usize,
    difficulty_bits: u32,
    bytes_per_hash_unit: f64,
) -> Result<ComputeEstimate, EstimatorError> {
    let mut rates: BTreeMap<NodeId, (f64, usize)> = BTreeMap::new();
    for (node, history) in histories {
        let Ok(window) = select_window(history, min_proofs, difficulty_bits) else {
            continue;
        };
        let tail = &history.entries()[history.len() - window..];
        let work: f64 = tail.iter().map(|e| work_units(e, difficulty_bits)).sum();
        let time: f64 = tail.iter().map(|e| e.elapsed).sum();
        if time <= 0.0 {
            return Err(EstimatorError::ZeroElapsed);
        }
        rates.insert(node.clone(), (work / time, window));
    }
    let max_rate = rates
        .values()
        .map(|(r, _)| *r)
        .fold(f64::NEG_INFINITY, f64::max);
    if rates.is_empty() || max_rate <= 0.0 {
        return Err(EstimatorError::NoEligibleNodes);
    }
    let nodes = rates
        .into_iter()
        .map(|(node, (rate, window_used))| {
            (
                node,
                NodeEstimate {
                    rate,
                    c_hat: rate / max_rate,
                    window_used,
                },
            )
        })
        .collect();
    Ok(ComputeEstimate {
        nodes,
        d_max: bytes_per_hash_unit * max_rate,
    })
}

/// Hash rate times task latency: constant across platforms when the task
/// runs on the same silicon the puzzle measures, so departures expose
/// accelerator-backed outliers.
pub fn consistency_ratio(rate: f64, task_latency: f64) -> f64 {
    rate * task_latency
}

/// A consistency ratio with its measurement spread.
#[derive(Debug, Clone, PartialEq)]
pub struct RatioSample {
    pub node_id: NodeId,
    pub ratio: f64,
    /// Std deviation of the ratio across latency samples; 0 when unknown.
    pub sigma: f64,
}

/// IQR-multiplier threshold for the outlier rule.
pub const OUTLIER_IQR_FACTOR: f64 = 2.0;

/// Flag ratios that sit far outside their peers.
///
/// A node is an outlier when its deviation from the median of the *other*
/// ratios exceeds twice their interquartile range, and the deviation also
/// exceeds twice its own measurement spread — high-variance tasks (visual
/// odometry) never trigger the rule, tight ones (classification) do.
pub fn flag_outliers(samples: &[RatioSample]) -> Vec<bool> {
    samples
        .iter()
        .enumerate()
        .map(|(i, s)| {
            let others: Vec<f64> = samples
                .iter()
                .enumerate()
                .filter(|(j, _)| *j != i)
                .map(|(_, o)| o.ratio)
                .collect();
            if others.len() < 2 {
                return false;
            }
            let dev = (s.ratio - median(&others)).abs();
            dev > OUTLIER_IQR_FACTOR * iqr(&others) && dev > 2.0 * s.sigma
        })
        .collect()
}

fn sorted(xs: &[f64]) -> Vec<f64> {
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    v
}

pub fn median(xs: &[f64]) -> f64 {
    let v = sorted(xs);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    }
}

fn quantile(sorted_xs: &[f64], q: f64) -> f64 {
    let n = sorted_xs.len();
    let pos = q * (n - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    sorted_xs[lo] + (sorted_xs[hi] - sorted_xs[lo]) * frac
}

pub fn iqr(xs: &[f64]) -> f64 {
    let v = sorted(xs);
    quantile(&v, 0.75) - quantile(&v, 0.25)
}
