//! Deterministic discrete-event simulation of the swarm protocol.
//!
//! One epoch runs the full round: mining and report submission, stamp
//! cross-validation with stake-weighted validator selection, replicated
//! compute estimation, replicated exchange optimization, data transfer with
//! the relay admission rule, delivery receipts, then allowance minting,
//! demurrage and block sealing. Everything is driven by `(scenario, seed)`;
//! two runs with the same pair produce bit-identical traces.

mod events;
pub mod scenario;
mod shards;

pub use events::{deliver_time, EventQueue};
pub use scenario::{Behavior, FeatureSpec, IoTemplate, LinkSpec, NodeSpec, Scenario, ScenarioError, SimConfig};
pub use shards::{assign_shards, Shard, ShardKind};

use crate::allocation::{
    optimize, AvailableData, ConstraintMode, DataRequest, Exchange, ExchangePlan,
};
use crate::chain::{
    Block, ChainError, ChainState, FeeDebit, GenesisMode, ProofRecord, Transaction,
};
use crate::estimator::{estimate, ComputeEstimate, EstimatorError, ProofEntry, ProofHistory};
use crate::pow::{self, MiningSession};
use crate::quality::{compare_stamps, ComparisonOutcome, DataStamp, Location, StampBuilder};
use crate::wire::{CanonicalWriter, Digest32};
use crate::NodeId;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use std::collections::{BTreeMap, BTreeSet};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SimError {
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error("chain rejected a simulator-built block: {0}")]
    Chain(#[from] ChainError),
    #[error("estimator: {0}")]
    Estimator(#[from] EstimatorError),
    #[error("the chain was destroyed at epoch {0}")]
    Destroyed(u64),
}

/// Why a node failed admission.
#[derive(Debug, Clone, PartialEq)]
pub struct AdmissionTimeout {
    pub node: NodeId,
    pub expected_solve_s: f64,
}

/// One physical data movement, or the refusal of one.
#[derive(Debug, Clone, PartialEq)]
pub struct TransferEvent {
    pub epoch: u64,
    pub receiver: NodeId,
    pub provider: NodeId,
    pub via: Option<NodeId>,
    pub stamp_digest: Digest32,
    pub size: u64,
    pub sent: f64,
    /// None when the transfer was refused.
    pub arrived: Option<f64>,
    /// Whether the stamp digest was registered on the canonical chain when
    /// the transfer was attempted.
    pub registered: bool,
    /// True when a relay refused to forward an unregistered sample.
    pub relay_refused: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProofSummary {
    pub achieved_bits: u32,
    pub is_full: bool,
    pub elapsed: f64,
    pub share_count: u64,
}

/// Everything one epoch did. Fully determined by (scenario, seed).
#[derive(Debug, Clone, PartialEq)]
pub struct EpochTrace {
    pub epoch: u64,
    pub live: Vec<NodeId>,
    pub admitted_now: Vec<NodeId>,
    pub admission_timeouts: Vec<AdmissionTimeout>,
    pub proofs: BTreeMap<NodeId, ProofSummary>,
    pub estimate: Option<ComputeEstimate>,
    pub stamps: Vec<Digest32>,
    pub comparisons: Vec<(NodeId, NodeId, ComparisonOutcome)>,
    pub plan: ExchangePlan,
    pub transfers: Vec<TransferEvent>,
    pub receipts: Vec<(NodeId, NodeId)>,
    pub skipped_exchanges: Vec<(NodeId, NodeId, &'static str)>,
    pub minted: Vec<(NodeId, u64)>,
    pub expired: Vec<(NodeId, u64, u64)>,
    pub fees: Vec<FeeDebit>,
    pub spendable_total: u64,
    pub quality: BTreeMap<NodeId, f64>,
    pub shards: Vec<Shard>,
    pub tip_digest: Digest32,
    pub state_digest: Digest32,
}

impl EpochTrace {
    /// Canonical digest of the trace; the determinism contract's witness.
    pub fn digest(&self) -> Digest32 {
        let mut w = CanonicalWriter::new();
        w.u64(self.epoch)
            .digest(&self.tip_digest)
            .digest(&self.state_digest);
        w.u32(self.proofs.len() as u32);
        for (node, p) in &self.proofs {
            w.str(node.as_str())
                .u32(p.achieved_bits)
                .u8(p.is_full as u8)
                .f64(p.elapsed)
                .u64(p.share_count);
        }
        if let Some(est) = &self.estimate {
            w.u8(1).f64(est.d_max);
            w.u32(est.nodes.len() as u32);
            for (node, e) in &est.nodes {
                w.str(node.as_str()).f64(e.rate).f64(e.c_hat).u64(e.window_used as u64);
            }
        } else {
            w.u8(0);
        }
        w.u32(self.stamps.len() as u32);
        for d in &self.stamps {
            w.digest(d);
        }
        w.u32(self.comparisons.len() as u32);
        for (v, p, o) in &self.comparisons {
            w.str(v.as_str()).str(p.as_str()).u8(o.tag());
        }
        w.u32(self.plan.exchanges.len() as u32);
        for x in &self.plan.exchanges {
            w.str(x.receiver.as_str()).str(x.provider.as_str()).u64(x.size).f64(x.term_value);
        }
        w.u32(self.transfers.len() as u32);
        for t in &self.transfers {
            w.str(t.receiver.as_str())
                .str(t.provider.as_str())
                .str(t.via.as_ref().map_or("", |v| v.as_str()))
                .digest(&t.stamp_digest)
                .u64(t.size)
                .f64(t.sent)
                .f64(t.arrived.unwrap_or(-1.0))
                .u8(t.registered as u8)
                .u8(t.relay_refused as u8);
        }
        w.u64(self.spendable_total);
        w.finish()
    }
}

/// The running swarm: scenario, seed, chain and per-epoch working state.
pub struct World {
    pub scenario: Scenario,
    pub seed: u64,
    pub chain: ChainState,
    pub traces: Vec<EpochTrace>,
    /// Bandwidth measured at admission probes, bytes/s, both directions.
    probed_bw: BTreeMap<(NodeId, NodeId), f64>,
    last_estimate: Option<ComputeEstimate>,
    admission_attempted: BTreeSet<NodeId>,
    low_live_streak: u64,
    destroyed_at: Option<u64>,
}

impl World {
    pub fn new(scenario: Scenario, seed: u64) -> Result<World, SimError> {
        let chain = ChainState::genesis(scenario.chain.clone())?;
        let mut world = World {
            scenario,
            seed,
            chain,
            traces: Vec::new(),
            probed_bw: BTreeMap::new(),
            last_estimate: None,
            admission_attempted: BTreeSet::new(),
            low_live_streak: 0,
            destroyed_at: None,
        };
        // Infrastructure is admitted at genesis; probe the links between
        // infra peers right away.
        let infra: BTreeSet<NodeId> = world.scenario.chain.infrastructure.iter().cloned().collect();
        for node in infra.clone() {
            world.probe_links_among(&node, &infra, 0);
        }
        Ok(world)
    }

    pub fn destroyed_at(&self) -> Option<u64> {
        self.destroyed_at
    }

    /// Run up to `epochs` epochs, stopping early if the chain is destroyed.
    pub fn run(&mut self, epochs: u64) -> Result<(), SimError> {
        for _ in 0..epochs {
            if self.destroyed_at.is_some() {
                break;
            }
            match self.run_epoch() {
                Ok(_) => {}
                Err(SimError::Destroyed(_)) => break,
                Err(e) => return Err(e),
            }
        }
        Ok(())
    }

    fn phase_rng(&self, epoch: u64, tag: &str) -> ChaCha12Rng {
        let mut w = CanonicalWriter::new();
        w.u64(self.seed).u64(epoch).str(tag);
        let digest = w.finish();
        let mut bytes = [0u8; 8];
        bytes.copy_from_slice(&digest.0[..8]);
        ChaCha12Rng::seed_from_u64(u64::from_be_bytes(bytes))
    }

    fn is_infra(&self, node: &NodeId) -> bool {
        self.scenario.chain.infrastructure.contains(node)
    }

    /// Live this epoch: infra always, scenario nodes per their schedule.
    fn live_nodes(&self, epoch: u64) -> Vec<NodeId> {
        let mut live: Vec<NodeId> = self
            .scenario
            .nodes
            .values()
            .filter(|n| n.online_at(epoch))
            .map(|n| n.id.clone())
            .collect();
        for infra in &self.scenario.chain.infrastructure {
            if !live.contains(infra) {
                live.push(infra.clone());
            }
        }
        live.sort();
        live
    }

    /// Record measured capacities for every link between `node` and a peer
    /// in `admitted`: the bandwidth test a joining robot runs with the peers
    /// it connects to.
    fn probe_links_among(&mut self, node: &NodeId, admitted: &BTreeSet<NodeId>, epoch: u64) {
        let mut rng = self.phase_rng(epoch, &format!("probe:{node}"));
        let links: Vec<((NodeId, NodeId), LinkSpec)> = self
            .scenario
            .links
            .iter()
            .filter(|((a, b), _)| a == node || b == node)
            .map(|(k, v)| (k.clone(), *v))
            .collect();
        for ((a, b), spec) in links {
            let peer = if &a == node { &b } else { &a };
            if !admitted.contains(peer) && peer != node {
                continue;
            }
            let noise = self.scenario.sim.probe_noise;
            let factor = if noise > 0.0 {
                1.0 + noise * (rng.random::<f64>() * 2.0 - 1.0)
            } else {
                1.0
            };
            let measured = spec.bandwidth * factor;
            self.probed_bw.insert((a.clone(), b.clone()), measured);
            self.probed_bw.insert((b, a), measured);
        }
    }

    /// The stamps a node produces this epoch: one per sensed feature whose
    /// data type the node can provide. Counterfeit nodes inflate the
    /// claimed density.
    fn sense_stamps(&self, spec: &NodeSpec, epoch: u64) -> Vec<DataStamp> {
        let mut stamps = Vec::new();
        if spec.behavior == Behavior::DataLeech {
            return stamps;
        }
        let sim = &self.scenario.sim;
        for feature in &self.scenario.features {
            if !spec.provides.iter().any(|p| p.data_type == feature.data_type) {
                continue;
            }
            let dx = spec.position.0 - feature.position.0;
            let dy = spec.position.1 - feature.position.1;
            let distance = (dx * dx + dy * dy).sqrt();
            if distance > sim.sense_range {
                continue;
            }
            let mut builder = StampBuilder::new(spec.id.clone(), feature.data_type, feature.class)
                .location(Location::new(
                    feature.position.0,
                    feature.position.1,
                    sim.stamp_location_error,
                ))
                .epoch(epoch)
                .sample_bytes(spec.sample_bytes)
                .channels(spec.channels)
                .distance_m(distance.max(0.5));
            if let Some(extent) = feature.extent_m {
                builder = builder.extent_m(extent);
            }
            let probe = builder.clone().build();
            let Ok(expected) = self.scenario.density.expected_point_count(&probe) else {
                continue; // e.g. unknown channel count for this feature
            };
            let factor = if spec.behavior == Behavior::CounterfeitData {
                sim.counterfeit_factor
            } else {
                1.0
            };
            let claimed = (expected * factor).round().max(1.0) as u64;
            stamps.push(builder.point_count(claimed).build());
        }
        stamps
    }

    /// Weighted sample without replacement by (1 + confirmed stake).
    fn sample_validators<R: Rng + ?Sized>(
        &self,
        candidates: &[NodeId],
        count: usize,
        rng: &mut R,
    ) -> Vec<NodeId> {
        let mut pool: Vec<(NodeId, u64)> = candidates
            .iter()
            .map(|n| (n.clone(), 1 + self.chain.global_confirmed(n)))
            .collect();
        let mut chosen = Vec::new();
        while chosen.len() < count && !pool.is_empty() {
            let total: u64 = pool.iter().map(|(_, w)| w).sum();
            let mut pick = rng.random_range(0..total);
            let idx = pool
                .iter()
                .position(|(_, w)| {
                    if pick < *w {
                        true
                    } else {
                        pick -= w;
                        false
                    }
                })
                .expect("weights cover the range");
            chosen.push(pool.remove(idx).0);
        }
        chosen
    }

    /// Bandwidth budget in bytes for the pair (receiver, provider): direct
    /// link when probed, otherwise the best single relay (max over relays of
    /// the min of the two legs). Pairs with no path are absent.
    fn pair_budget(
        &self,
        live_admitted: &[NodeId],
    ) -> BTreeMap<(NodeId, NodeId), f64> {
        let window = self.scenario.sim.transfer_window;
        let mut budget = BTreeMap::new();
        for i in live_admitted {
            for j in live_admitted {
                if i == j {
                    continue;
                }
                let direct = self.probed_bw.get(&(i.clone(), j.clone())).copied();
                let relayed = live_admitted
                    .iter()
                    .filter(|r| *r != i && *r != j)
                    .filter_map(|r| {
                        let leg1 = self.probed_bw.get(&(i.clone(), r.clone()))?;
                        let leg2 = self.probed_bw.get(&(r.clone(), j.clone()))?;
                        Some(leg1.min(*leg2))
                    })
                    .fold(None::<f64>, |acc, bw| Some(acc.map_or(bw, |a| a.max(bw))));
                if let Some(bw) = direct.or(relayed) {
                    budget.insert((i.clone(), j.clone()), bw * window);
                }
            }
        }
        budget
    }

    /// Smallest-id live relay with probed links to both endpoints.
    fn find_relay(&self, live_admitted: &[NodeId], from: &NodeId, to: &NodeId) -> Option<NodeId> {
        live_admitted
            .iter()
            .filter(|r| *r != from && *r != to)
            .find(|r| {
                self.probed_bw.contains_key(&(from.clone(), (*r).clone()))
                    && self.probed_bw.contains_key(&((*r).clone(), to.clone()))
            })
            .cloned()
    }

    /// The provider's most recent stamp registered on the canonical chain
    /// for this data type.
    fn registered_stamp_for(
        &self,
        provider: &NodeId,
        data_type: crate::quality::DataType,
    ) -> Option<Digest32> {
        self.chain
            .stamps()
            .iter()
            .filter(|(_, rec)| {
                rec.stamp.producer == *provider && rec.stamp.data_type == data_type
            })
            .max_by_key(|(digest, rec)| (rec.registered_epoch, std::cmp::Reverse(**digest)))
            .map(|(digest, _)| *digest)
    }

    /// Execute one full protocol round and seal its block.
    pub fn run_epoch(&mut self) -> Result<EpochTrace, SimError> {
        if let Some(e) = self.destroyed_at {
            return Err(SimError::Destroyed(e));
        }
        let epoch = self.chain.tip().epoch + 1;
        let cfg = self.scenario.chain.clone();
        let sim = self.scenario.sim.clone();
        let live = self.live_nodes(epoch);

        // Ad hoc chains die once liveness stayed below the floor for a full
        // epoch; checked at the boundary only.
        if cfg.genesis_mode == GenesisMode::AdHoc && self.low_live_streak >= 1 {
            self.destroyed_at = Some(epoch);
            return Err(SimError::Destroyed(epoch));
        }

        let mut pool_joins: Vec<Transaction> = Vec::new();
        let mut pool_reports: Vec<Transaction> = Vec::new();
        let mut pool_validations: Vec<Transaction> = Vec::new();
        let mut pool_exchanges: Vec<Transaction> = Vec::new();
        let mut pool_receipts: Vec<Transaction> = Vec::new();

        let mut admitted_now = Vec::new();
        let mut admission_timeouts = Vec::new();

        // --- Admission: one attempt per node, at its first online epoch.
        for node in &live {
            if self.chain.is_admitted(node)
                || self.is_infra(node)
                || self.admission_attempted.contains(node)
            {
                continue;
            }
            self.admission_attempted.insert(node.clone());
            let spec = &self.scenario.nodes[node];
            let mut rng = self.phase_rng(epoch, &format!("join:{node}"));
            let session = pow::sample_session(
                &mut rng,
                cfg.pow_difficulty_bits,
                spec.hash_rate,
                cfg.pow_timeout,
                u64::MAX,
            );
            match session.proof.as_ref().filter(|p| p.is_full) {
                Some(_) => {
                    let record = ProofRecord::from_session(&session).expect("proof present");
                    pool_joins.push(Transaction::join(node.clone(), record));
                    admitted_now.push(node.clone());
                }
                None => admission_timeouts.push(AdmissionTimeout {
                    node: node.clone(),
                    expected_solve_s: (cfg.pow_difficulty_bits as f64).exp2() / spec.hash_rate,
                }),
            }
        }

        // Everything below operates on nodes admitted as of this epoch,
        // including the ones whose join is in the pool.
        let mut live_admitted: Vec<NodeId> = live
            .iter()
            .filter(|n| self.chain.is_admitted(n) || admitted_now.contains(n))
            .cloned()
            .collect();
        live_admitted.sort();

        // Joining nodes test their link bandwidth right away (step 2).
        let effective_admitted: BTreeSet<NodeId> = self
            .chain
            .admitted()
            .iter()
            .cloned()
            .chain(admitted_now.iter().cloned())
            .collect();
        for node in &admitted_now {
            self.probe_links_among(node, &effective_admitted, epoch);
        }

        // --- Step 3/4: mining sessions, stamps, requests, availability.
        let mut proofs: BTreeMap<NodeId, ProofSummary> = BTreeMap::new();
        let mut sessions: BTreeMap<NodeId, MiningSession> = BTreeMap::new();
        let mut epoch_stamps: BTreeMap<NodeId, Vec<DataStamp>> = BTreeMap::new();
        let mut requests: Vec<DataRequest> = Vec::new();
        let mut availability: Vec<AvailableData> = Vec::new();

        for node in &live_admitted {
            if self.is_infra(node) {
                continue; // infrastructure relays and stores, it does not mine
            }
            let spec = self.scenario.nodes[node].clone();
            // A lazy miner reserves half its compute for other work, halving
            // the hash budget it spends on the collaborative effort.
            let rate_factor = if spec.behavior == Behavior::LazyMiner { 0.5 } else { 1.0 };
            let mut rng = self.phase_rng(epoch, &format!("mine:{node}"));
            let session = pow::sample_session(
                &mut rng,
                cfg.pow_difficulty_bits,
                spec.hash_rate * rate_factor,
                cfg.pow_timeout,
                u64::MAX,
            );
            let Some(record) = ProofRecord::from_session(&session) else {
                continue; // no proof, not even partial: contributes nothing
            };
            let stamps = self.sense_stamps(&spec, epoch);
            let node_requests: Vec<DataRequest> = spec
                .needs
                .iter()
                .map(|t| DataRequest {
                    requester: node.clone(),
                    data_type: t.data_type,
                    max_size: t.max_size,
                    min_res: t.min_res,
                    max_res: t.max_res,
                })
                .collect();
            let node_avail: Vec<AvailableData> = if spec.behavior == Behavior::DataLeech {
                Vec::new()
            } else {
                spec.provides
                    .iter()
                    .map(|t| AvailableData {
                        provider: node.clone(),
                        data_type: t.data_type,
                        max_size: t.max_size,
                        min_res: t.min_res,
                        max_res: t.max_res,
                    })
                    .collect()
            };
            proofs.insert(
                node.clone(),
                ProofSummary {
                    achieved_bits: record.achieved_bits,
                    is_full: record.is_full,
                    elapsed: record.elapsed,
                    share_count: record.share_count,
                },
            );
            sessions.insert(node.clone(), session);
            epoch_stamps.insert(node.clone(), stamps.clone());
            requests.extend(node_requests.clone());
            availability.extend(node_avail.clone());
            pool_reports.push(Transaction::epoch_report(
                node.clone(),
                record,
                stamps,
                node_requests,
                node_avail,
                spec.position,
            ));
        }

        // --- Step 5: stamp comparisons by capable validators, PoS-selected.
        let capable: Vec<NodeId> = live_admitted
            .iter()
            .filter(|n| !self.is_infra(n))
            .filter(|n| match &self.last_estimate {
                Some(est) => est.c_hat(n).is_some_and(|c| c >= sim.validator_threshold),
                None => true, // bootstrap: no estimate yet, everyone may validate
            })
            .cloned()
            .collect();
        let mut comparisons = Vec::new();
        let mut validate_rng = self.phase_rng(epoch, "validate");
        let all_stamps: Vec<(NodeId, DataStamp)> = epoch_stamps
            .iter()
            .flat_map(|(n, ss)| ss.iter().map(move |s| (n.clone(), s.clone())))
            .collect();
        for (producer, stamp) in &all_stamps {
            // Candidates hold their own comparable stamp from this epoch.
            let candidates: Vec<NodeId> = capable
                .iter()
                .filter(|v| *v != producer)
                .filter(|v| {
                    epoch_stamps.get(*v).is_some_and(|ss| {
                        ss.iter().any(|own| {
                            compare_stamps(stamp, own, &self.scenario.density, cfg.stamp_tolerance)
                                .is_ok()
                        })
                    })
                })
                .cloned()
                .collect();
            let validators =
                self.sample_validators(&candidates, sim.validators_per_stamp, &mut validate_rng);
            for validator in validators {
                let own = epoch_stamps[&validator]
                    .iter()
                    .find(|own| {
                        compare_stamps(stamp, own, &self.scenario.density, cfg.stamp_tolerance)
                            .is_ok()
                    })
                    .cloned()
                    .expect("candidate has a comparable stamp");
                let cmp = compare_stamps(stamp, &own, &self.scenario.density, cfg.stamp_tolerance)
                    .expect("checked comparable");
                comparisons.push((validator.clone(), producer.clone(), cmp.outcome));
                pool_validations.push(Transaction::stamp_validation(
                    validator,
                    stamp.digest(),
                    producer.clone(),
                    cmp.outcome,
                    cmp.detail,
                ));
            }
        }

        // --- Step 6: replicated compute estimation over chain history plus
        // this epoch's submissions.
        let mut histories: BTreeMap<NodeId, ProofHistory> = self.chain.histories().clone();
        for (node, session) in &sessions {
            let proof = session.proof.as_ref().expect("sessions hold proofs");
            histories
                .entry(node.clone())
                .or_insert_with(|| ProofHistory::new(node.clone()))
                .record(ProofEntry {
                    epoch,
                    achieved_bits: proof.achieved_bits,
                    is_full: proof.is_full,
                    elapsed: session.elapsed,
                    share_count: session.share_count,
                    share_bits: session.share_bits,
                })?;
        }
        let estimate_now = estimate(
            &histories,
            cfg.window_min_proofs,
            cfg.pow_difficulty_bits,
            sim.bytes_per_hash_unit,
        )
        .ok();

        // --- Step 7: replicated exchange optimization and transfers.
        // Quality feeding the objective includes this epoch's validations;
        // the shard-resolved update happens at block application.
        let mut q_global = self.chain.global_quality();
        for (_, producer, outcome) in &comparisons {
            let delta = match outcome {
                ComparisonOutcome::Match => 1.0,
                ComparisonOutcome::MatchWithDensityRelation => 0.5,
                ComparisonOutcome::Mismatch => -2.0,
            };
            let q = q_global.entry(producer.clone()).or_insert(crate::quality::DEFAULT_Q_MIN);
            *q += delta;
            if *q == 0.0 {
                *q = if delta < 0.0 { -crate::quality::DEFAULT_Q_MIN } else { crate::quality::DEFAULT_Q_MIN };
            }
        }
        for node in &live_admitted {
            q_global.entry(node.clone()).or_insert(crate::quality::DEFAULT_Q_MIN);
        }

        let mut plan = ExchangePlan::default();
        let mut transfers: Vec<TransferEvent> = Vec::new();
        let mut skipped: Vec<(NodeId, NodeId, &'static str)> = Vec::new();
        if let Some(est) = &estimate_now {
            let budget = self.pair_budget(&live_admitted);
            plan = optimize(
                &requests,
                &availability,
                &q_global,
                &est.c_hat_map(),
                est.d_max,
                &budget,
                cfg.alpha,
                cfg.beta,
                ConstraintMode::PerExchange,
            );
            let outcome = self.execute_plan(epoch, &plan, &live_admitted, &mut pool_exchanges)?;
            transfers = outcome.0;
            skipped = outcome.1;
        }

        // --- Step 8: receivers verify deliveries against the stamps.
        let mut receipts = Vec::new();
        for t in &transfers {
            if t.arrived.is_none() {
                continue;
            }
            let provider_spec = self.scenario.nodes.get(&t.provider);
            let counterfeit = provider_spec
                .is_some_and(|s| s.behavior == Behavior::CounterfeitData);
            if counterfeit && t.registered {
                // Delivered data cannot reproduce the inflated stamp.
                pool_receipts.push(Transaction::negative_receipt(
                    t.receiver.clone(),
                    t.stamp_digest,
                    t.provider.clone(),
                ));
                receipts.push((t.receiver.clone(), t.provider.clone()));
            }
        }

        // --- Seal: settlement happens inside apply_block.
        let mut pool = Vec::new();
        pool.extend(pool_joins);
        pool.extend(pool_reports);
        pool.extend(pool_validations);
        pool.extend(pool_exchanges);
        pool.extend(pool_receipts);

        let mut seal_rng = self.phase_rng(epoch, "seal");
        let validator = {
            let stakes: Vec<NodeId> = live_admitted.clone();
            if stakes.is_empty() {
                NodeId::new("genesis")
            } else {
                self.sample_validators(&stakes, 1, &mut seal_rng)
                    .pop()
                    .unwrap_or_else(|| stakes[0].clone())
            }
        };
        let block = Block::seal(
            self.chain.height() + 1,
            self.chain.tip().digest,
            epoch,
            validator,
            pool,
        );
        let (next_chain, effects) = self.chain.apply_block(&block)?;
        self.chain = next_chain;

        // Liveness accounting for ad hoc destruction.
        let live_admitted_count = live
            .iter()
            .filter(|n| self.chain.is_admitted(n))
            .count();
        if live_admitted_count < cfg.min_live_nodes {
            self.low_live_streak += 1;
        } else {
            self.low_live_streak = 0;
        }

        let mut shard_rng = self.phase_rng(epoch, "shards");
        let positions: BTreeMap<NodeId, (f64, f64)> = live_admitted
            .iter()
            .filter(|n| !self.is_infra(n))
            .map(|n| (n.clone(), self.scenario.nodes[n].position))
            .collect();
        let shards = assign_shards(&positions, cfg.shard_grid_m, sim.randomized_shards, &mut shard_rng);

        self.last_estimate = estimate_now.clone();

        let trace = EpochTrace {
            epoch,
            live,
            admitted_now,
            admission_timeouts,
            proofs,
            estimate: estimate_now,
            stamps: all_stamps.iter().map(|(_, s)| s.digest()).collect(),
            comparisons,
            plan,
            transfers,
            receipts,
            skipped_exchanges: skipped,
            minted: effects.minted,
            expired: effects.expired,
            fees: effects.fees,
            spendable_total: self.chain.total_spendable(epoch),
            quality: self.chain.global_quality(),
            shards,
            tip_digest: self.chain.tip().digest,
            state_digest: self.chain.state_digest(),
        };
        self.traces.push(trace.clone());
        Ok(trace)
    }

    /// Turn the plan into transfers and on-chain exchange records.
    ///
    /// A transfer runs over the direct link when one exists; otherwise it
    /// needs a relay, and the relay forwards only samples whose stamp digest
    /// is already registered in its canonical chain view. Exchanges whose
    /// stamp is registered are recorded on-chain with the schedule fee paid
    /// by the receiver; exchanges the receiver cannot afford are skipped.
    #[allow(clippy::type_complexity)]
    fn execute_plan(
        &self,
        epoch: u64,
        plan: &ExchangePlan,
        live_admitted: &[NodeId],
        pool_exchanges: &mut Vec<Transaction>,
    ) -> Result<(Vec<TransferEvent>, Vec<(NodeId, NodeId, &'static str)>), SimError> {
        let cfg = &self.scenario.chain;
        let mut queue: EventQueue<TransferEvent> = EventQueue::new();
        let mut skipped = Vec::new();
        let mut planned_spend: BTreeMap<NodeId, u64> = BTreeMap::new();

        for x in &plan.exchanges {
            let Some(stamp_info) = self.stamp_for_exchange(x) else {
                skipped.push((x.receiver.clone(), x.provider.clone(), "no stamp"));
                continue;
            };
            let (digest, sample_bytes, registered) = stamp_info;

            let direct = self
                .scenario
                .link(&x.receiver, &x.provider)
                .filter(|_| {
                    self.probed_bw
                        .contains_key(&(x.receiver.clone(), x.provider.clone()))
                });
            let via = if direct.is_some() {
                None
            } else {
                match self.find_relay(live_admitted, &x.provider, &x.receiver) {
                    Some(r) => Some(r),
                    None => {
                        skipped.push((x.receiver.clone(), x.provider.clone(), "no path"));
                        continue;
                    }
                }
            };

            // Relay rule: unregistered samples never traverse a third party.
            if via.is_some() && !registered {
                queue.push(
                    0.0,
                    TransferEvent {
                        epoch,
                        receiver: x.receiver.clone(),
                        provider: x.provider.clone(),
                        via,
                        stamp_digest: digest,
                        size: x.size,
                        sent: 0.0,
                        arrived: None,
                        registered,
                        relay_refused: true,
                    },
                );
                continue;
            }

            // On-chain record only for registered stamps; a direct transfer
            // of an unregistered sample stays off-chain.
            if registered {
                let fee = cfg.fee_for_payload(sample_bytes);
                let spendable = self.chain.spendable(&x.receiver, epoch);
                let already = planned_spend.get(&x.receiver).copied().unwrap_or(0);
                if spendable < already + fee {
                    skipped.push((x.receiver.clone(), x.provider.clone(), "insufficient balance"));
                    continue;
                }
                *planned_spend.entry(x.receiver.clone()).or_insert(0) += fee;
                pool_exchanges.push(Transaction::data_exchange(
                    x.receiver.clone(),
                    digest,
                    vec![x.receiver.clone()],
                    x.size,
                    sample_bytes,
                    fee,
                ));
            } else if via.is_none() {
                // Direct, unregistered: allowed but logged for the audit.
            }

            let arrived = match &via {
                None => {
                    let link = direct.expect("direct link checked");
                    deliver_time(0.0, link.latency, x.size, link.bandwidth)
                }
                Some(relay) => {
                    let leg1 = self
                        .scenario
                        .link(&x.provider, relay)
                        .expect("relay leg exists");
                    let leg2 = self
                        .scenario
                        .link(relay, &x.receiver)
                        .expect("relay leg exists");
                    let mid = deliver_time(0.0, leg1.latency, x.size, leg1.bandwidth);
                    deliver_time(mid, leg2.latency, x.size, leg2.bandwidth)
                }
            };
            queue.push(
                arrived,
                TransferEvent {
                    epoch,
                    receiver: x.receiver.clone(),
                    provider: x.provider.clone(),
                    via,
                    stamp_digest: digest,
                    size: x.size,
                    sent: 0.0,
                    arrived: Some(arrived),
                    registered,
                    relay_refused: false,
                },
            );
        }

        let mut transfers = Vec::new();
        while let Some((_, event)) = queue.pop() {
            transfers.push(event);
        }
        Ok((transfers, skipped))
    }

    /// The stamp digest an exchange references: the provider's latest
    /// registered stamp of the type, falling back to its unregistered
    /// current-epoch stamp.
    fn stamp_for_exchange(&self, x: &Exchange) -> Option<(Digest32, u64, bool)> {
        if let Some(digest) = self.registered_stamp_for(&x.provider, x.data_type) {
            let record = self.chain.stamp(&digest).expect("registered");
            return Some((digest, record.stamp.sample_bytes, true));
        }
        // Current epoch stamps are still in the pool; find one in the trace
        // buffer via the scenario spec (deterministic re-derivation).
        let spec = self.scenario.nodes.get(&x.provider)?;
        let epoch = self.chain.tip().epoch + 1;
        let stamps = self.sense_stamps(spec, epoch);
        stamps
            .into_iter()
            .find(|s| s.data_type == x.data_type)
            .map(|s| (s.digest(), s.sample_bytes, false))
    }
}
