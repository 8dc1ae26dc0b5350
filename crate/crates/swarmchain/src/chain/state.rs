//! The ledger state machine.
//!
//! `apply_block` is a pure function from (state, block) to a new state plus
//! an effects record for auditing; identical block sequences replay to
//! bit-identical state digests. Anything a validator needs to re-derive —
//! admissions, balances, stamp registry, proof histories, per-shard quality —
//! lives here and feeds the state digest.

use super::block::{Block, ProofRecord, TxPayload};
use super::config::{ChainConfig, ConfigError, GenesisMode};
use super::ledger::{apply_demurrage, mint_epoch_allowance, Accounts};
use crate::estimator::{EstimatorError, ProofEntry, ProofHistory};
use crate::pow::{self, ProofKind};
use crate::quality::{
    merge_shard_quality, ComparisonOutcome, DataStamp, QualityEvent, QualityLedger,
};
use crate::wire::{CanonicalWriter, Digest32};
use crate::NodeId;
use std::collections::{BTreeMap, BTreeSet};
use thiserror::Error;

/// Spatial shard key: grid cell coordinates.
pub type ShardCell = (i64, i64);

#[derive(Debug, Error, PartialEq)]
pub enum ChainError {
    #[error("invalid config: {0}")]
    Config(#[from] ConfigError),
    #[error("invalid linkage: {0}")]
    InvalidLinkage(String),
    #[error("block digest does not match its contents")]
    InvalidDigest,
    #[error("block epoch {got} does not advance past {tip}")]
    InvalidEpoch { got: u64, tip: u64 },
    #[error("invalid proof from {node}: {reason}")]
    InvalidProof { node: NodeId, reason: &'static str },
    #[error("{0} is already admitted")]
    AlreadyAdmitted(NodeId),
    #[error("{0} is not admitted")]
    NotAdmitted(NodeId),
    #[error("duplicate epoch report from {0}")]
    DuplicateReport(NodeId),
    #[error("stamp {0} already registered")]
    DuplicateStamp(Digest32),
    #[error("stamp {0} is not registered")]
    UnknownStamp(Digest32),
    #[error("stamp producer mismatch for {0}")]
    WrongProducer(Digest32),
    #[error("{0} cannot validate its own stamp")]
    SelfValidation(NodeId),
    #[error("fee {got} does not match schedule fee {expected}")]
    InvalidFee { expected: u64, got: u64 },
    #[error("declared payload {declared} bytes, registered sample is {registered}")]
    WrongPayloadSize { declared: u64, registered: u64 },
    #[error("{node} has insufficient balance: {source}")]
    InsufficientBalance {
        node: NodeId,
        source: super::ledger::InsufficientBalance,
    },
    #[error("select_canonical over an empty branch set")]
    EmptyInput,
}

/// A registered stamp with the epoch its block was sealed at.
#[derive(Debug, Clone, PartialEq)]
pub struct StampRecord {
    pub stamp: DataStamp,
    pub registered_epoch: u64,
}

/// Fee taken from a node, with the lot-level breakdown for supply audits.
#[derive(Debug, Clone, PartialEq)]
pub struct FeeDebit {
    pub node: NodeId,
    pub payload_size: u64,
    pub fee: u64,
    /// (minted_epoch, amount) pairs the debit consumed.
    pub lots: Vec<(u64, u64)>,
}

/// What applying one block did, for traces and audits.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct BlockEffects {
    pub contributors: Vec<NodeId>,
    pub penalized: Vec<NodeId>,
    pub minted: Vec<(NodeId, u64)>,
    /// (node, minted_epoch, amount) per expired lot.
    pub expired: Vec<(NodeId, u64, u64)>,
    pub fees: Vec<FeeDebit>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChainState {
    config: ChainConfig,
    blocks: Vec<Block>,
    accounts: Accounts,
    admitted: BTreeSet<NodeId>,
    stamps: BTreeMap<Digest32, StampRecord>,
    histories: BTreeMap<NodeId, ProofHistory>,
    quality: BTreeMap<ShardCell, QualityLedger>,
}

impl ChainState {
    pub fn genesis(config: ChainConfig) -> Result<ChainState, ChainError> {
        config.validate()?;
        let mut admitted = BTreeSet::new();
        let mut accounts = Accounts::new();
        if config.genesis_mode == GenesisMode::Longevous {
            // Infrastructure backs the chain; trusted at genesis, no join
            // proof, no mining allowance.
            for node in &config.infrastructure {
                admitted.insert(node.clone());
                accounts.entry(node.clone()).or_default();
            }
        }
        Ok(ChainState {
            config,
            blocks: vec![Block::genesis()],
            accounts,
            admitted,
            stamps: BTreeMap::new(),
            histories: BTreeMap::new(),
            quality: BTreeMap::new(),
        })
    }

    pub fn config(&self) -> &ChainConfig {
        &self.config
    }

    pub fn tip(&self) -> &Block {
        self.blocks.last().expect("chain always has genesis")
    }

    pub fn height(&self) -> u64 {
        self.tip().height
    }

    pub fn blocks(&self) -> &[Block] {
        &self.blocks
    }

    pub fn is_admitted(&self, node: &NodeId) -> bool {
        self.admitted.contains(node)
    }

    pub fn admitted(&self) -> &BTreeSet<NodeId> {
        &self.admitted
    }

    pub fn stamp_registered(&self, digest: &Digest32) -> bool {
        self.stamps.contains_key(digest)
    }

    pub fn stamp(&self, digest: &Digest32) -> Option<&StampRecord> {
        self.stamps.get(digest)
    }

    pub fn stamps(&self) -> &BTreeMap<Digest32, StampRecord> {
        &self.stamps
    }

    pub fn histories(&self) -> &BTreeMap<NodeId, ProofHistory> {
        &self.histories
    }

    pub fn accounts(&self) -> &Accounts {
        &self.accounts
    }

    pub fn spendable(&self, node: &NodeId, epoch: u64) -> u64 {
        self.accounts
            .get(node)
            .map_or(0, |a| a.spendable(epoch, self.config.demurrage_window))
    }

    pub fn total_spendable(&self, epoch: u64) -> u64 {
        self.accounts
            .values()
            .map(|a| a.spendable(epoch, self.config.demurrage_window))
            .sum()
    }

    pub fn shard_cell(&self, x: f64, y: f64) -> ShardCell {
        let g = self.config.shard_grid_m;
        ((x / g).floor() as i64, (y / g).floor() as i64)
    }

    pub fn quality_shards(&self) -> &BTreeMap<ShardCell, QualityLedger> {
        &self.quality
    }

    /// Confirmation-weighted global quality across spatial shards.
    pub fn global_quality(&self) -> BTreeMap<NodeId, f64> {
        let shards: Vec<&QualityLedger> = self.quality.values().collect();
        merge_shard_quality(&shards)
    }

    pub fn global_confirmed(&self, node: &NodeId) -> u64 {
        self.quality.values().map(|l| l.confirmed_count(node)).sum()
    }

    /// Union of the per-shard validation graphs.
    pub fn merged_validation_graph(&self) -> BTreeMap<NodeId, BTreeSet<NodeId>> {
        let mut merged: BTreeMap<NodeId, BTreeSet<NodeId>> = BTreeMap::new();
        for ledger in self.quality.values() {
            for (node, peers) in ledger.graph() {
                merged
                    .entry(node.clone())
                    .or_default()
                    .extend(peers.iter().cloned());
            }
        }
        merged
    }

    fn validate_proof(
        &self,
        sender: &NodeId,
        proof: &ProofRecord,
        require_full: bool,
        epoch_seed: Digest32,
    ) -> Result<(), ChainError> {
        let d = self.config.pow_difficulty_bits;
        let fail = |reason| ChainError::InvalidProof {
            node: sender.clone(),
            reason,
        };
        if proof.kind == ProofKind::Hashed {
            let puzzle = pow::derive_puzzle(sender, epoch_seed, d);
            if pow::verify(&puzzle, proof.nonce) != proof.achieved_bits {
                return Err(fail("hash does not reproduce the claimed bits"));
            }
        }
        if proof.achieved_bits < pow::min_partial_bits(d) {
            return Err(fail("below the partial-proof threshold"));
        }
        if proof.is_full != (proof.achieved_bits >= d) {
            return Err(fail("is_full flag contradicts achieved bits"));
        }
        if require_full && !proof.is_full {
            return Err(fail("admission requires a full proof"));
        }
        if proof.share_bits > proof.achieved_bits {
            return Err(fail("share threshold above achieved bits"));
        }
        Ok(())
    }

    /// Validate and apply one block, producing the successor state.
    ///
    /// Any invalid transaction rejects the whole block. After the
    /// transactions, the epoch settles: every reporting node is minted its
    /// allowance (penalized nodes a reduced share), then aged lots expire.
    pub fn apply_block(&self, block: &Block) -> Result<(ChainState, BlockEffects), ChainError> {
        let tip = self.tip();
        if block.height != tip.height + 1 {
            return Err(ChainError::InvalidLinkage(format!(
                "height {} after {}",
                block.height, tip.height
            )));
        }
        if block.parent_digest != tip.digest {
            return Err(ChainError::InvalidLinkage("parent digest mismatch".into()));
        }
        if block.digest != block.compute_digest() {
            return Err(ChainError::InvalidDigest);
        }
        if block.epoch <= tip.epoch {
            return Err(ChainError::InvalidEpoch {
                got: block.epoch,
                tip: tip.epoch,
            });
        }

        let mut next = self.clone();
        let mut effects = BlockEffects::default();
        let epoch_seed = tip.digest;
        let mut penalized: BTreeSet<NodeId> = BTreeSet::new();
        // (matches, mismatches) per producer this epoch; a producer whose
        // verdicts are majority-mismatch failed to provide certifiable
        // stamps and gets the reduced allowance.
        let mut verdicts: BTreeMap<NodeId, (u64, u64)> = BTreeMap::new();

        for tx in &block.transactions {
            match &tx.payload {
                TxPayload::Join { proof } => {
                    if next.admitted.contains(&tx.sender) {
                        return Err(ChainError::AlreadyAdmitted(tx.sender.clone()));
                    }
                    next.validate_proof(&tx.sender, proof, true, epoch_seed)?;
                    next.admitted.insert(tx.sender.clone());
                    next.accounts.entry(tx.sender.clone()).or_default();
                }
                TxPayload::EpochReport { proof, stamps, .. } => {
                    if !next.admitted.contains(&tx.sender) {
                        return Err(ChainError::NotAdmitted(tx.sender.clone()));
                    }
                    next.validate_proof(&tx.sender, proof, false, epoch_seed)?;
                    let history = next
                        .histories
                        .entry(tx.sender.clone())
                        .or_insert_with(|| ProofHistory::new(tx.sender.clone()));
                    history
                        .record(ProofEntry {
                            epoch: block.epoch,
                            achieved_bits: proof.achieved_bits,
                            is_full: proof.is_full,
                            elapsed: proof.elapsed,
                            share_count: proof.share_count,
                            share_bits: proof.share_bits,
                        })
                        .map_err(|e| match e {
                            EstimatorError::DuplicateEpoch(_) => {
                                ChainError::DuplicateReport(tx.sender.clone())
                            }
                            _ => ChainError::DuplicateReport(tx.sender.clone()),
                        })?;
                    if !effects.contributors.contains(&tx.sender) {
                        effects.contributors.push(tx.sender.clone());
                    }
                    // Failing to provide any certifiable stamp costs the
                    // contributor its full allowance share.
                    if stamps.is_empty() {
                        penalized.insert(tx.sender.clone());
                    }
                    for stamp in stamps {
                        if stamp.producer != tx.sender {
                            return Err(ChainError::WrongProducer(stamp.digest()));
                        }
                        let digest = stamp.digest();
                        if next.stamps.contains_key(&digest) {
                            return Err(ChainError::DuplicateStamp(digest));
                        }
                        next.stamps.insert(
                            digest,
                            StampRecord {
                                stamp: stamp.clone(),
                                registered_epoch: block.epoch,
                            },
                        );
                    }
                }
                TxPayload::DataExchange { stamp_digest, .. } => {
                    if !next.admitted.contains(&tx.sender) {
                        return Err(ChainError::NotAdmitted(tx.sender.clone()));
                    }
                    let record = next
                        .stamps
                        .get(stamp_digest)
                        .ok_or(ChainError::UnknownStamp(*stamp_digest))?;
                    // The declared payload must be the registered sample's
                    // actual size, or the fee could be lowballed.
                    if tx.payload_size != record.stamp.sample_bytes {
                        return Err(ChainError::WrongPayloadSize {
                            declared: tx.payload_size,
                            registered: record.stamp.sample_bytes,
                        });
                    }
                    let expected = next.config.fee_for_payload(tx.payload_size);
                    if tx.fee != expected {
                        return Err(ChainError::InvalidFee {
                            expected,
                            got: tx.fee,
                        });
                    }
                    let account = next.accounts.entry(tx.sender.clone()).or_default();
                    let lots = account
                        .spend(tx.fee, block.epoch, next.config.demurrage_window)
                        .map_err(|source| ChainError::InsufficientBalance {
                            node: tx.sender.clone(),
                            source,
                        })?;
                    effects.fees.push(FeeDebit {
                        node: tx.sender.clone(),
                        payload_size: tx.payload_size,
                        fee: tx.fee,
                        lots,
                    });
                }
                TxPayload::StampValidation {
                    stamp_digest,
                    producer,
                    outcome,
                    ..
                } => {
                    if !next.admitted.contains(&tx.sender) {
                        return Err(ChainError::NotAdmitted(tx.sender.clone()));
                    }
                    let record = next
                        .stamps
                        .get(stamp_digest)
                        .ok_or(ChainError::UnknownStamp(*stamp_digest))?;
                    if &record.stamp.producer != producer {
                        return Err(ChainError::WrongProducer(*stamp_digest));
                    }
                    if producer == &tx.sender {
                        return Err(ChainError::SelfValidation(tx.sender.clone()));
                    }
                    let cell = next.shard_cell(record.stamp.location.x, record.stamp.location.y);
                    let event = QualityEvent::Comparison {
                        validator: tx.sender.clone(),
                        producer: producer.clone(),
                        outcome: *outcome,
                    };
                    next.quality
                        .entry(cell)
                        .or_default()
                        .update(&event)
                        .map_err(|_| ChainError::SelfValidation(tx.sender.clone()))?;
                    let tally = verdicts.entry(producer.clone()).or_insert((0, 0));
                    match outcome {
                        ComparisonOutcome::Mismatch => tally.1 += 1,
                        _ => tally.0 += 1,
                    }
                }
                TxPayload::NegativeReceipt {
                    stamp_digest,
                    provider,
                } => {
                    if !next.admitted.contains(&tx.sender) {
                        return Err(ChainError::NotAdmitted(tx.sender.clone()));
                    }
                    let record = next
                        .stamps
                        .get(stamp_digest)
                        .ok_or(ChainError::UnknownStamp(*stamp_digest))?;
                    if &record.stamp.producer != provider {
                        return Err(ChainError::WrongProducer(*stamp_digest));
                    }
                    if provider == &tx.sender {
                        return Err(ChainError::SelfValidation(tx.sender.clone()));
                    }
                    let cell = next.shard_cell(record.stamp.location.x, record.stamp.location.y);
                    let event = QualityEvent::NegativeReceipt {
                        issuer: tx.sender.clone(),
                        provider: provider.clone(),
                    };
                    next.quality
                        .entry(cell)
                        .or_default()
                        .update(&event)
                        .map_err(|_| ChainError::SelfValidation(tx.sender.clone()))?;
                    penalized.insert(provider.clone());
                }
            }
        }

        // Epoch settlement: mint for contributors, then expire aged lots.
        for (producer, (matches, mismatches)) in &verdicts {
            if mismatches > matches {
                penalized.insert(producer.clone());
            }
        }
        effects.penalized = penalized
            .iter()
            .filter(|n| effects.contributors.contains(n))
            .cloned()
            .collect();
        effects.minted = mint_epoch_allowance(
            &mut next.accounts,
            block.epoch,
            &effects.contributors,
            &effects.penalized,
            next.config.epoch_allowance,
            next.config.penalty_factor,
        );
        effects.expired = apply_demurrage(
            &mut next.accounts,
            block.epoch,
            next.config.demurrage_window,
        );

        next.blocks.push(block.clone());
        Ok((next, effects))
    }

    /// Digest of the full replicated state; any two nodes that applied the
    /// same blocks print the same 64 hex chars.
    pub fn state_digest(&self) -> Digest32 {
        let mut w = CanonicalWriter::new();
        let tip = self.tip();
        w.u64(tip.height).digest(&tip.digest).u64(tip.epoch);
        w.u32(self.admitted.len() as u32);
        for node in &self.admitted {
            w.str(node.as_str());
        }
        w.u32(self.accounts.len() as u32);
        for (node, account) in &self.accounts {
            w.str(node.as_str());
            w.u32(account.lots().len() as u32);
            for lot in account.lots() {
                w.u64(lot.minted_epoch).u64(lot.amount);
            }
        }
        w.u32(self.stamps.len() as u32);
        for (digest, record) in &self.stamps {
            w.digest(digest)
                .str(record.stamp.producer.as_str())
                .u64(record.registered_epoch);
        }
        w.u32(self.histories.len() as u32);
        for (node, history) in &self.histories {
            w.str(node.as_str());
            w.u32(history.len() as u32);
            for e in history.entries() {
                w.u64(e.epoch)
                    .u32(e.achieved_bits)
                    .u8(e.is_full as u8)
                    .f64(e.elapsed)
                    .u64(e.share_count)
                    .u32(e.share_bits);
            }
        }
        w.u32(self.quality.len() as u32);
        for (cell, ledger) in &self.quality {
            w.u64(cell.0 as u64).u64(cell.1 as u64);
            let nodes: Vec<_> = ledger.nodes().collect();
            w.u32(nodes.len() as u32);
            for (node, q) in nodes {
                w.str(node.as_str())
                    .f64(q)
                    .u64(ledger.confirmed_count(node));
                let peers = ledger.graph().get(node);
                w.u32(peers.map_or(0, |p| p.len()) as u32);
                if let Some(peers) = peers {
                    for p in peers {
                        w.str(p.as_str());
                    }
                }
            }
        }
        w.finish()
    }

    /// Line-delimited snapshot, one block per line including hex digests.
    pub fn snapshot_lines(&self) -> String {
        let mut out = String::new();
        for b in &self.blocks {
            out.push_str(&format!(
                "block height={} epoch={} validator={} txs={} parent={} digest={}\n",
                b.height,
                b.epoch,
                b.validator_id.as_str(),
                b.transactions.len(),
                b.parent_digest.to_hex(),
                b.digest.to_hex()
            ));
        }
        out
    }
}

/// Pick the authentic branch: the one with the greatest accumulated
/// difficulty, which at fixed difficulty is the greatest height. Ties break
/// toward the lexicographically smallest tip digest.
pub fn select_canonical<'a, I>(branches: I) -> Result<&'a ChainState, ChainError>
where
    I: IntoIterator<Item = &'a ChainState>,
{
    branches
        .into_iter()
        .reduce(|best, candidate| {
            let (bh, ch) = (best.height(), candidate.height());
            if ch > bh || (ch == bh && candidate.tip().digest < best.tip().digest) {
                candidate
            } else {
                best
            }
        })
        .ok_or(ChainError::EmptyInput)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chain::Transaction;

    fn node(s: &str) -> NodeId {
        NodeId::new(s)
    }

    fn test_config() -> ChainConfig {
        ChainConfig {
            pow_difficulty_bits: 8,
            ..ChainConfig::default()
        }
    }

    fn mined_join(state: &ChainState, name: &str) -> Transaction {
        let puzzle = pow::derive_puzzle(
            &node(name),
            state.tip().digest,
            state.config().pow_difficulty_bits,
        );
        let session = pow::solve(&puzzle, 1 << 20, 1000.0, 1e9);
        Transaction::join(node(name), ProofRecord::from_session(&session).unwrap())
    }

    #[test]
    fn empty_block_advances_height() {
        let genesis = ChainState::genesis(test_config()).unwrap();
        let block = Block::seal(1, genesis.tip().digest, 1, node("v"), vec![]);
        let (state, effects) = genesis.apply_block(&block).unwrap();
        assert_eq!(state.height(), 1);
        assert!(effects.minted.is_empty());
    }

    #[test]
    fn hashed_join_admits_node_with_account() {
        let genesis = ChainState::genesis(test_config()).unwrap();
        let join = mined_join(&genesis, "alice");
        let block = Block::seal(1, genesis.tip().digest, 1, node("alice"), vec![join]);
        let (state, _) = genesis.apply_block(&block).unwrap();
        assert!(state.is_admitted(&node("alice")));
        assert!(state.accounts()[&node("alice")].lots().is_empty());
    }

    #[test]
    fn replaying_the_same_blocks_reproduces_the_state_digest() {
        let genesis = ChainState::genesis(test_config()).unwrap();
        let join = mined_join(&genesis, "alice");
        let b1 = Block::seal(1, genesis.tip().digest, 1, node("alice"), vec![join]);
        let report = Transaction::epoch_report(
            node("alice"),
            ProofRecord::sampled_full(8),
            vec![],
            vec![],
            vec![],
            (1.0, 2.0),
        );
        let (s1, _) = genesis.apply_block(&b1).unwrap();
        let b2 = Block::seal(2, s1.tip().digest, 2, node("alice"), vec![report]);

        let replay = |g: &ChainState| {
            let (a, _) = g.apply_block(&b1).unwrap();
            let (b, _) = a.apply_block(&b2).unwrap();
            b.state_digest()
        };
        assert_eq!(replay(&genesis), replay(&genesis));
    }

    #[test]
    fn tampered_join_proof_is_rejected() {
        let genesis = ChainState::genesis(test_config()).unwrap();
        let join = mined_join(&genesis, "alice");
        let tampered = match &join.payload {
            TxPayload::Join { proof } => {
                let mut p = proof.clone();
                p.nonce += 1;
                Transaction::join(node("alice"), p)
            }
            _ => unreachable!(),
        };
        let block = Block::seal(1, genesis.tip().digest, 1, node("alice"), vec![tampered]);
        assert!(matches!(
            genesis.apply_block(&block),
            Err(ChainError::InvalidProof { .. })
        ));
    }

    #[test]
    fn wrong_fee_rejects_the_block() {
        let genesis = ChainState::genesis(test_config()).unwrap();
        let join = mined_join(&genesis, "alice");
        let stamp = crate::quality::StampBuilder::new(
            node("alice"),
            crate::quality::DataType::Pointcloud,
            crate::quality::FeatureClass::Revolute,
        )
        .distance_m(8.0)
        .point_count(395)
        .epoch(1)
        .sample_bytes(20)
        .build();
        let digest = stamp.digest();
        let report = Transaction::epoch_report(
            node("alice"),
            ProofRecord::sampled_full(8),
            vec![stamp],
            vec![],
            vec![],
            (0.0, 0.0),
        );
        let b1 = Block::seal(
            1,
            genesis.tip().digest,
            1,
            node("alice"),
            vec![join, report],
        );
        let (s1, _) = genesis.apply_block(&b1).unwrap();

        let bad = Transaction::data_exchange(node("alice"), digest, vec![node("x")], 100, 20, 1);
        let b2 = Block::seal(2, s1.tip().digest, 2, node("alice"), vec![bad]);
        assert_eq!(
            s1.apply_block(&b2).unwrap_err(),
            ChainError::InvalidFee {
                expected: 21_680,
                got: 1
            }
        );
    }

    #[test]
    fn lowballed_payload_size_rejects_the_block() {
        let genesis = ChainState::genesis(test_config()).unwrap();
        let join = mined_join(&genesis, "alice");
        let stamp = crate::quality::StampBuilder::new(
            node("alice"),
            crate::quality::DataType::Pointcloud,
            crate::quality::FeatureClass::Revolute,
        )
        .distance_m(8.0)
        .point_count(395)
        .epoch(1)
        .sample_bytes(8640)
        .build();
        let digest = stamp.digest();
        let report = Transaction::epoch_report(
            node("alice"),
            ProofRecord::sampled_full(8),
            vec![stamp],
            vec![],
            vec![],
            (0.0, 0.0),
        );
        let b1 = Block::seal(1, genesis.tip().digest, 1, node("alice"), vec![join, report]);
        let (s1, _) = genesis.apply_block(&b1).unwrap();
        // Declares 20 bytes (and pays the 20-byte fee) for an 8640-byte sample.
        let cheap_fee = s1.config().fee_for_payload(20);
        let tx = Transaction::data_exchange(node("alice"), digest, vec![node("x")], 100, 20, cheap_fee);
        let b2 = Block::seal(2, s1.tip().digest, 2, node("alice"), vec![tx]);
        assert_eq!(
            s1.apply_block(&b2).unwrap_err(),
            ChainError::WrongPayloadSize {
                declared: 20,
                registered: 8640
            }
        );
    }

    #[test]
    fn exchange_without_balance_rejects_the_block() {
        let genesis = ChainState::genesis(test_config()).unwrap();
        let join = mined_join(&genesis, "alice");
        let stamp = crate::quality::StampBuilder::new(
            node("alice"),
            crate::quality::DataType::Pointcloud,
            crate::quality::FeatureClass::Revolute,
        )
        .distance_m(8.0)
        .point_count(395)
        .epoch(1)
        .sample_bytes(20)
        .build();
        let digest = stamp.digest();
        let report = Transaction::epoch_report(
            node("alice"),
            ProofRecord::sampled_full(8),
            vec![stamp],
            vec![],
            vec![],
            (0.0, 0.0),
        );
        // Join and report in one block; the exchange in the same block comes
        // before minting, so alice has no spendable lots yet.
        let fee = genesis.config().fee_for_payload(20);
        let exchange =
            Transaction::data_exchange(node("alice"), digest, vec![node("x")], 100, 20, fee);
        let b1 = Block::seal(
            1,
            genesis.tip().digest,
            1,
            node("alice"),
            vec![join, report, exchange],
        );
        assert!(matches!(
            genesis.apply_block(&b1),
            Err(ChainError::InsufficientBalance { .. })
        ));
    }

    #[test]
    fn settlement_mints_then_expires() {
        let mut cfg = test_config();
        cfg.epoch_allowance = 100;
        cfg.demurrage_window = 2;
        let genesis = ChainState::genesis(cfg).unwrap();
        let join = mined_join(&genesis, "alice");
        let report = |epoch: u64| {
            let stamp = crate::quality::StampBuilder::new(
                node("alice"),
                crate::quality::DataType::Pointcloud,
                crate::quality::FeatureClass::Revolute,
            )
            .distance_m(8.0)
            .point_count(395)
            .epoch(epoch)
            .build();
            Transaction::epoch_report(
                node("alice"),
                ProofRecord::sampled_full(8),
                vec![stamp],
                vec![],
                vec![],
                (0.0, 0.0),
            )
        };
        let b1 = Block::seal(1, genesis.tip().digest, 1, node("alice"), vec![join, report(1)]);
        let (s1, e1) = genesis.apply_block(&b1).unwrap();
        assert_eq!(e1.minted, vec![(node("alice"), 100)]);
        assert_eq!(s1.spendable(&node("alice"), 1), 100);

        let b2 = Block::seal(2, s1.tip().digest, 2, node("alice"), vec![report(2)]);
        let (s2, _) = s1.apply_block(&b2).unwrap();
        // Window 2: the epoch-1 lot is still usable at epoch 2 (age 1).
        assert_eq!(s2.spendable(&node("alice"), 2), 200);
        let b3 = Block::seal(3, s2.tip().digest, 3, node("alice"), vec![report(3)]);
        let (_s3, e3) = s2.apply_block(&b3).unwrap();
        // Lot from epoch 1 reaches age 2 == window at epoch 3 and expires.
        assert!(e3.expired.contains(&(node("alice"), 1, 100)));
    }

    #[test]
    fn majority_mismatch_penalizes_the_producer() {
        let mut cfg = test_config();
        cfg.epoch_allowance = 100;
        let genesis = ChainState::genesis(cfg).unwrap();
        let stamp = |who: &str| {
            crate::quality::StampBuilder::new(
                node(who),
                crate::quality::DataType::Pointcloud,
                crate::quality::FeatureClass::Revolute,
            )
            .distance_m(8.0)
            .point_count(395)
            .epoch(1)
            .build()
        };
        let mut txs: Vec<Transaction> = Vec::new();
        for who in ["good", "bad", "v1", "v2"] {
            txs.push(mined_join(&genesis, who));
            txs.push(Transaction::epoch_report(
                node(who),
                ProofRecord::sampled_full(8),
                vec![stamp(who)],
                vec![],
                vec![],
                (0.0, 0.0),
            ));
        }
        use crate::quality::ComparisonOutcome::{Match, Mismatch};
        // good: 2 matches, 1 mismatch -> majority match, full allowance.
        txs.push(Transaction::stamp_validation(node("v1"), stamp("good").digest(), node("good"), Match, 1.0));
        txs.push(Transaction::stamp_validation(node("v2"), stamp("good").digest(), node("good"), Match, 1.0));
        txs.push(Transaction::stamp_validation(node("bad"), stamp("good").digest(), node("good"), Mismatch, 3.0));
        // bad: 2 mismatches, 1 match -> penalized.
        txs.push(Transaction::stamp_validation(node("v1"), stamp("bad").digest(), node("bad"), Mismatch, 0.3, ));
        txs.push(Transaction::stamp_validation(node("v2"), stamp("bad").digest(), node("bad"), Mismatch, 0.3));
        txs.push(Transaction::stamp_validation(node("good"), stamp("bad").digest(), node("bad"), Match, 1.0));
        let block = Block::seal(1, genesis.tip().digest, 1, node("v1"), txs);
        let (_, effects) = genesis.apply_block(&block).unwrap();
        assert_eq!(effects.penalized, vec![node("bad")]);
        assert!(effects.minted.contains(&(node("good"), 100)));
        assert!(effects.minted.contains(&(node("bad"), 50)));
    }

    #[test]
    fn stampless_contributor_gets_the_penalized_share() {
        let mut cfg = test_config();
        cfg.epoch_allowance = 100;
        cfg.penalty_factor = 0.5;
        let genesis = ChainState::genesis(cfg).unwrap();
        let join = mined_join(&genesis, "alice");
        let bare_report = Transaction::epoch_report(
            node("alice"),
            ProofRecord::sampled_full(8),
            vec![],
            vec![],
            vec![],
            (0.0, 0.0),
        );
        let b1 = Block::seal(1, genesis.tip().digest, 1, node("alice"), vec![join, bare_report]);
        let (_, effects) = genesis.apply_block(&b1).unwrap();
        assert_eq!(effects.penalized, vec![node("alice")]);
        assert_eq!(effects.minted, vec![(node("alice"), 50)]);
    }

    #[test]
    fn canonical_selection_prefers_height_then_digest() {
        let genesis = ChainState::genesis(test_config()).unwrap();
        let b1a = Block::seal(1, genesis.tip().digest, 1, node("a"), vec![]);
        let b1b = Block::seal(1, genesis.tip().digest, 1, node("b"), vec![]);
        let (sa, _) = genesis.apply_block(&b1a).unwrap();
        let (sb, _) = genesis.apply_block(&b1b).unwrap();

        // Strictly longer branch wins.
        let b2a = Block::seal(2, sa.tip().digest, 2, node("a"), vec![]);
        let (sa2, _) = sa.apply_block(&b2a).unwrap();
        let chosen = select_canonical([&sa2, &sb]).unwrap();
        assert_eq!(chosen.tip().digest, sa2.tip().digest);

        // Equal heights: smallest tip digest.
        let chosen = select_canonical([&sa, &sb]).unwrap();
        let expect = if sa.tip().digest < sb.tip().digest { &sa } else { &sb };
        assert_eq!(chosen.tip().digest, expect.tip().digest);

        assert_eq!(
            select_canonical(std::iter::empty()).unwrap_err(),
            ChainError::EmptyInput
        );
    }

    #[test]
    fn late_arriving_longer_branch_reorgs() {
        // Two miners race; replay both branches and confirm the selection
        // flips once the shorter branch outgrows the other.
        let genesis = ChainState::genesis(test_config()).unwrap();
        let b1a = Block::seal(1, genesis.tip().digest, 1, node("a"), vec![]);
        let b1b = Block::seal(1, genesis.tip().digest, 1, node("b"), vec![]);
        let (sa, _) = genesis.apply_block(&b1a).unwrap();
        let (sb, _) = genesis.apply_block(&b1b).unwrap();
        let first = select_canonical([&sa, &sb]).unwrap().tip().digest;

        let loser = if first == sa.tip().digest { &sb } else { &sa };
        let b2 = Block::seal(2, loser.tip().digest, 2, node("c"), vec![]);
        let (longer, _) = loser.apply_block(&b2).unwrap();
        let chosen = select_canonical([&sa, &sb, &longer]).unwrap();
        assert_eq!(chosen.tip().digest, longer.tip().digest);
        assert_ne!(chosen.tip().digest, first);
    }

    #[test]
    fn snapshot_lines_one_per_block() {
        let genesis = ChainState::genesis(test_config()).unwrap();
        let b1 = Block::seal(1, genesis.tip().digest, 1, node("v"), vec![]);
        let (s1, _) = genesis.apply_block(&b1).unwrap();
        let snap = s1.snapshot_lines();
        assert_eq!(snap.lines().count(), 2);
        assert!(snap.contains(&b1.digest.to_hex()));
        assert!(snap.lines().next().unwrap().contains("height=0"));
    }
}
