//! Bandwidth-constrained selection of data exchanges.
//!
//! Every epoch the network solves, replicated at every validator, the same
//! problem: which (request, availability) pairs get carried, maximizing
//! `sum(alpha * Q_provider + beta / E)` where `E >= 1` measures how badly an
//! availability fits a request. Exchange sizes are clamped by the receiver's
//! compute intake bound `D_max * C_i` and the link bandwidth `BW_ij`. The
//! solver is bit-deterministic: fixed iteration order, no time-dependent
//! choices, so replicated executions agree exactly.

use crate::chain::ChainState;
use crate::quality::DataType;
use crate::wire::Digest32;
use crate::NodeId;
use std::collections::BTreeMap;
use thiserror::Error;

/// What a node wants to receive, per data type.
#[derive(Debug, Clone, PartialEq)]
pub struct DataRequest {
    pub requester: NodeId,
    pub data_type: DataType,
    pub max_size: u64,
    pub min_res: f64,
    pub max_res: f64,
}

/// What a node can provide, same shape as a request.
#[derive(Debug, Clone, PartialEq)]
pub struct AvailableData {
    pub provider: NodeId,
    pub data_type: DataType,
    pub max_size: u64,
    pub min_res: f64,
    pub max_res: f64,
}

#[derive(Debug, Error, PartialEq)]
pub enum AllocError {
    #[error("request and availability have different data types")]
    TypeMismatch,
    #[error("no quality score for provider {0}")]
    MissingQuality(NodeId),
    #[error("resolution bounds inverted (min {min} > max {max})")]
    InvertedBounds { min: f64, max: f64 },
    #[error("max_size must be positive")]
    ZeroSize,
}

fn check_bounds(max_size: u64, min_res: f64, max_res: f64) -> Result<(), AllocError> {
    if max_size == 0 {
        return Err(AllocError::ZeroSize);
    }
    if min_res > max_res {
        return Err(AllocError::InvertedBounds {
            min: min_res,
            max: max_res,
        });
    }
    Ok(())
}

impl DataRequest {
    pub fn validate(&self) -> Result<(), AllocError> {
        check_bounds(self.max_size, self.min_res, self.max_res)
    }
}

impl AvailableData {
    pub fn validate(&self) -> Result<(), AllocError> {
        check_bounds(self.max_size, self.min_res, self.max_res)
    }
}

/// Fit error between a request and an availability of the same type.
///
/// `E = 1 + gap(resolution intervals) / mean interval width
///        + max(0, requested - available size) / requested size`
///
/// so `E == 1` exactly when the resolution intervals overlap and the
/// availability covers the requested size, and E grows with either mismatch.
/// Degenerate zero-width intervals that do not touch give infinite E (the
/// pair contributes nothing through `beta / E`).
pub fn mismatch_error(req: &DataRequest, avail: &AvailableData) -> Result<f64, AllocError> {
    if req.data_type != avail.data_type {
        return Err(AllocError::TypeMismatch);
    }
    let gap = (req.min_res - avail.max_res).max(avail.min_res - req.max_res).max(0.0);
    let mean_width = ((req.max_res - req.min_res) + (avail.max_res - avail.min_res)) / 2.0;
    let gap_term = if gap == 0.0 {
        0.0
    } else if mean_width > 0.0 {
        gap / mean_width
    } else {
        f64::INFINITY
    };
    let size_term = req.max_size.saturating_sub(avail.max_size) as f64 / req.max_size as f64;
    Ok(1.0 + gap_term + size_term)
}

/// One selected transfer: a matched (request, availability) pair with its
/// clamped size and cached objective term.
#[derive(Debug, Clone, PartialEq)]
pub struct Exchange {
    pub receiver: NodeId,
    pub provider: NodeId,
    pub data_type: DataType,
    pub request_idx: usize,
    pub availability_idx: usize,
    pub size: u64,
    /// Mismatch error E for this pair.
    pub error: f64,
    /// alpha * Q_provider + beta / E.
    pub term_value: f64,
}

impl Exchange {
    fn pair_key(&self) -> (&NodeId, &NodeId, usize, usize) {
        (&self.receiver, &self.provider, self.request_idx, self.availability_idx)
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ExchangePlan {
    pub exchanges: Vec<Exchange>,
    pub objective_value: f64,
}

impl ExchangePlan {
    pub fn total_size(&self) -> u64 {
        self.exchanges.iter().map(|x| x.size).sum()
    }
}

/// Whether the receiver compute bound applies per exchange (the literal
/// constraint) or to the receiver's aggregate intake.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ConstraintMode {
    #[default]
    PerExchange,
    AggregateReceiver,
}

/// Evaluate the objective of a plan against a quality map.
pub fn objective(
    plan: &ExchangePlan,
    quality: &BTreeMap<NodeId, f64>,
    alpha: f64,
    beta: f64,
) -> Result<f64, AllocError> {
    let mut total = 0.0;
    for x in &plan.exchanges {
        let q = quality
            .get(&x.provider)
            .copied()
            .ok_or_else(|| AllocError::MissingQuality(x.provider.clone()))?;
        total += alpha * q + beta / x.error;
    }
    Ok(total)
}

/// Build the feasible candidate set: all same-type (request, availability)
/// pairs between distinct nodes, sized at the constraint-clamped maximum.
/// Pairs without a quality score, compute estimate or link budget are not
/// exchangeable and are dropped here.
#[allow(clippy::too_many_arguments)]
pub fn enumerate_candidates(
    requests: &[DataRequest],
    availables: &[AvailableData],
    quality: &BTreeMap<NodeId, f64>,
    c_hat: &BTreeMap<NodeId, f64>,
    d_max: f64,
    bandwidth: &BTreeMap<(NodeId, NodeId), f64>,
    alpha: f64,
    beta: f64,
) -> Vec<Exchange> {
    let mut candidates = Vec::new();
    for (ri, req) in requests.iter().enumerate() {
        let Some(&c) = c_hat.get(&req.requester) else {
            continue;
        };
        let intake = (d_max * c).floor();
        for (ai, avail) in availables.iter().enumerate() {
            if avail.data_type != req.data_type || avail.provider == req.requester {
                continue;
            }
            let Some(&q) = quality.get(&avail.provider) else {
                continue;
            };
            let Some(&bw) = bandwidth.get(&(req.requester.clone(), avail.provider.clone()))
            else {
                continue;
            };
            let error = mismatch_error(req, avail).expect("type checked above");
            let size = (req.max_size.min(avail.max_size) as f64)
                .min(intake)
                .min(bw.floor())
                .floor();
            if size < 1.0 {
                continue;
            }
            candidates.push(Exchange {
                receiver: req.requester.clone(),
                provider: avail.provider.clone(),
                data_type: req.data_type,
                request_idx: ri,
                availability_idx: ai,
                size: size as u64,
                error,
                term_value: alpha * q + beta / error,
            });
        }
    }
    candidates.sort_by(|a, b| a.pair_key().cmp(&b.pair_key()));
    candidates
}

/// Choose the exchange set maximizing the objective under the active
/// constraints. Deterministic; ties break toward higher total size, then the
/// lexicographically smallest pair-id list. Receivers with at most 20
/// candidates are solved exactly; larger groups fall back to greedy selection
/// with local-swap improvement (only relevant in aggregate mode, where the
/// shared intake budget couples the choices).
#[allow(clippy::too_many_arguments)]
pub fn optimize(
    requests: &[DataRequest],
    availables: &[AvailableData],
    quality: &BTreeMap<NodeId, f64>,
    c_hat: &BTreeMap<NodeId, f64>,
    d_max: f64,
    bandwidth: &BTreeMap<(NodeId, NodeId), f64>,
    alpha: f64,
    beta: f64,
    mode: ConstraintMode,
) -> ExchangePlan {
    let candidates = enumerate_candidates(
        requests, availables, quality, c_hat, d_max, bandwidth, alpha, beta,
    );
    let chosen = match mode {
        // Sizes are pre-clamped, so candidates are independent: take every
        // pair that does not hurt the objective (zero terms still add size).
        ConstraintMode::PerExchange => candidates
            .iter()
            .filter(|x| x.term_value >= 0.0)
            .cloned()
            .collect::<Vec<_>>(),
        ConstraintMode::AggregateReceiver => {
            let mut by_receiver: BTreeMap<NodeId, Vec<Exchange>> = BTreeMap::new();
            for c in candidates {
                by_receiver.entry(c.receiver.clone()).or_default().push(c);
            }
            let mut chosen = Vec::new();
            for (receiver, group) in by_receiver {
                let cap = c_hat
                    .get(&receiver)
                    .map(|&c| (d_max * c).floor() as u64)
                    .unwrap_or(0);
                let picked = if group.len() <= 20 {
                    knapsack_exact(&group, cap)
                } else {
                    knapsack_greedy(&group, cap)
                };
                chosen.extend(picked);
            }
            chosen
        }
    };
    let mut plan = ExchangePlan {
        exchanges: chosen,
        objective_value: 0.0,
    };
    plan.exchanges.sort_by(|a, b| a.pair_key().cmp(&b.pair_key()));
    plan.objective_value = plan.exchanges.iter().map(|x| x.term_value).sum();
    plan
}

/// (objective, total size, ids) comparison: later keys only break ties.
fn better(
    value: f64,
    size: u64,
    ids: &[usize],
    best_value: f64,
    best_size: u64,
    best_ids: &[usize],
) -> bool {
    if value != best_value {
        return value > best_value;
    }
    if size != best_size {
        return size > best_size;
    }
    ids < best_ids
}

fn knapsack_exact(group: &[Exchange], cap: u64) -> Vec<Exchange> {
    let n = group.len();
    debug_assert!(n <= 20);
    let mut best_mask = 0usize;
    let mut best_value = f64::NEG_INFINITY;
    let mut best_size = 0u64;
    let mut best_ids: Vec<usize> = Vec::new();
    for mask in 0..(1usize << n) {
        let mut size = 0u64;
        let mut value = 0.0;
        let mut ids = Vec::new();
        let mut feasible = true;
        for (i, x) in group.iter().enumerate() {
            if mask & (1 << i) != 0 {
                size += x.size;
                if size > cap {
                    feasible = false;
                    break;
                }
                value += x.term_value;
                ids.push(i);
            }
        }
        if feasible && better(value, size, &ids, best_value, best_size, &best_ids) {
            best_mask = mask;
            best_value = value;
            best_size = size;
            best_ids = ids;
        }
    }
    group
        .iter()
        .enumerate()
        .filter(|(i, _)| best_mask & (1 << i) != 0)
        .map(|(_, x)| x.clone())
        .collect()
}

fn knapsack_greedy(group: &[Exchange], cap: u64) -> Vec<Exchange> {
    // Positive terms first, highest value per candidate; smaller size wins
    // ties so more candidates fit.
    let mut order: Vec<usize> = (0..group.len()).collect();
    order.sort_by(|&a, &b| {
        group[b]
            .term_value
            .total_cmp(&group[a].term_value)
            .then(group[a].size.cmp(&group[b].size))
            .then(a.cmp(&b))
    });
    let mut used = 0u64;
    let mut taken = vec![false; group.len()];
    for &i in &order {
        if group[i].term_value < 0.0 {
            continue;
        }
        if used + group[i].size <= cap {
            used += group[i].size;
            taken[i] = true;
        }
    }
    // Local swaps: replace one chosen item with one skipped item when that
    // improves the objective and still fits.
    let mut improved = true;
    while improved {
        improved = false;
        for inn in 0..group.len() {
            if taken[inn] || group[inn].term_value <= 0.0 {
                continue;
            }
            for out in 0..group.len() {
                if !taken[out] {
                    continue;
                }
                let new_used = used - group[out].size + group[inn].size;
                if new_used <= cap && group[inn].term_value > group[out].term_value {
                    taken[out] = false;
                    taken[inn] = true;
                    used = new_used;
                    improved = true;
                    break;
                }
            }
            if improved {
                break;
            }
        }
    }
    group
        .iter()
        .enumerate()
        .filter(|(i, _)| taken[*i])
        .map(|(_, x)| x.clone())
        .collect()
}

/// A relay forwards data between two peers only when the sample's stamp
/// digest is already registered in its canonical chain view.
pub fn admit_forward(chain: &ChainState, stamp_digest: &Digest32) -> bool {
    chain.stamp_registered(stamp_digest)
}

/// Check a plan against every active constraint. Used by tests and the run
/// report; any plan the solver emits must pass.
pub fn plan_is_feasible(
    plan: &ExchangePlan,
    c_hat: &BTreeMap<NodeId, f64>,
    d_max: f64,
    bandwidth: &BTreeMap<(NodeId, NodeId), f64>,
    mode: ConstraintMode,
) -> bool {
    let mut per_receiver: BTreeMap<&NodeId, u64> = BTreeMap::new();
    for x in &plan.exchanges {
        let Some(&c) = c_hat.get(&x.receiver) else {
            return false;
        };
        if (x.size as f64) > d_max * c {
            return false;
        }
        match bandwidth.get(&(x.receiver.clone(), x.provider.clone())) {
            Some(&bw) if (x.size as f64) <= bw => {}
            _ => return false,
        }
        *per_receiver.entry(&x.receiver).or_insert(0) += x.size;
    }
    if mode == ConstraintMode::AggregateReceiver {
        for (receiver, total) in per_receiver {
            let cap = d_max * c_hat[receiver];
            if total as f64 > cap {
                return false;
            }
        }
    }
    true
}
