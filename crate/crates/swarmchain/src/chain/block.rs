//! Blocks and transactions.

use crate::allocation::{AvailableData, DataRequest};
use crate::pow::ProofKind;
use crate::quality::{ComparisonOutcome, DataStamp};
use crate::wire::{CanonicalWriter, Digest32};
use crate::NodeId;

/// A proof as recorded on chain. Hashed proofs are re-verified by hashing;
/// sampled proofs (from simulated mining) are validated structurally.
#[derive(Debug, Clone, PartialEq)]
pub struct ProofRecord {
    pub nonce: u64,
    pub achieved_bits: u32,
    pub is_full: bool,
    pub kind: ProofKind,
    pub share_count: u64,
    pub share_bits: u32,
    pub elapsed: f64,
}

impl ProofRecord {
    pub fn from_session(session: &crate::pow::MiningSession) -> Option<ProofRecord> {
        let proof = session.proof.as_ref()?;
        Some(ProofRecord {
            nonce: proof.nonce,
            achieved_bits: proof.achieved_bits,
            is_full: proof.is_full,
            kind: proof.kind,
            share_count: session.share_count,
            share_bits: session.share_bits,
            elapsed: session.elapsed,
        })
    }

    /// A structurally valid sampled full proof; handy for fixtures.
    pub fn sampled_full(difficulty_bits: u32) -> ProofRecord {
        ProofRecord {
            nonce: 0,
            achieved_bits: difficulty_bits,
            is_full: true,
            kind: ProofKind::Sampled,
            share_count: 1,
            share_bits: difficulty_bits,
            elapsed: 1.0,
        }
    }

    fn write(&self, w: &mut CanonicalWriter) {
        w.u64(self.nonce)
            .u32(self.achieved_bits)
            .u8(self.is_full as u8)
            .u8(match self.kind {
                ProofKind::Hashed => 0,
                ProofKind::Sampled => 1,
            })
            .u64(self.share_count)
            .u32(self.share_bits)
            .f64(self.elapsed);
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum TxPayload {
    /// Admission: a full proof of work binding the sender's identity.
    Join { proof: ProofRecord },
    /// Periodic report: proof or partial proof, the node's data stamps, its
    /// requests and availability, and its position.
    EpochReport {
        proof: ProofRecord,
        stamps: Vec<DataStamp>,
        requests: Vec<DataRequest>,
        availability: Vec<AvailableData>,
        position: (f64, f64),
    },
    /// Record of an off-chain data transfer; the sender is the receiving
    /// robot paying for carriage.
    DataExchange {
        stamp_digest: Digest32,
        recipients: Vec<NodeId>,
        transfer_size: u64,
    },
    /// A validator's comparison verdict on a registered stamp.
    StampValidation {
        stamp_digest: Digest32,
        producer: NodeId,
        outcome: ComparisonOutcome,
        detail: f64,
    },
    /// Receiver could not verify delivered data against its stamp.
    NegativeReceipt {
        stamp_digest: Digest32,
        provider: NodeId,
    },
}

impl TxPayload {
    pub fn kind_name(&self) -> &'static str {
        match self {
            TxPayload::Join { .. } => "join",
            TxPayload::EpochReport { .. } => "epoch_report",
            TxPayload::DataExchange { .. } => "data_exchange",
            TxPayload::StampValidation { .. } => "stamp_validation",
            TxPayload::NegativeReceipt { .. } => "negative_receipt",
        }
    }

    fn tag(&self) -> u8 {
        match self {
            TxPayload::Join { .. } => 0,
            TxPayload::EpochReport { .. } => 1,
            TxPayload::DataExchange { .. } => 2,
            TxPayload::StampValidation { .. } => 3,
            TxPayload::NegativeReceipt { .. } => 4,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Transaction {
    pub sender: NodeId,
    pub payload: TxPayload,
    /// Bytes of data attached to the transaction; drives the fee.
    pub payload_size: u64,
    pub fee: u64,
}

impl Transaction {
    pub fn join(sender: NodeId, proof: ProofRecord) -> Transaction {
        Transaction {
            sender,
            payload: TxPayload::Join { proof },
            payload_size: 0,
            fee: 0,
        }
    }

    pub fn epoch_report(
        sender: NodeId,
        proof: ProofRecord,
        stamps: Vec<DataStamp>,
        requests: Vec<DataRequest>,
        availability: Vec<AvailableData>,
        position: (f64, f64),
    ) -> Transaction {
        Transaction {
            sender,
            payload: TxPayload::EpochReport {
                proof,
                stamps,
                requests,
                availability,
                position,
            },
            payload_size: 0,
            fee: 0,
        }
    }

    pub fn data_exchange(
        sender: NodeId,
        stamp_digest: Digest32,
        recipients: Vec<NodeId>,
        transfer_size: u64,
        payload_size: u64,
        fee: u64,
    ) -> Transaction {
        Transaction {
            sender,
            payload: TxPayload::DataExchange {
                stamp_digest,
                recipients,
                transfer_size,
            },
            payload_size,
            fee,
        }
    }

    pub fn stamp_validation(
        sender: NodeId,
        stamp_digest: Digest32,
        producer: NodeId,
        outcome: ComparisonOutcome,
        detail: f64,
    ) -> Transaction {
        Transaction {
            sender,
            payload: TxPayload::StampValidation {
                stamp_digest,
                producer,
                outcome,
                detail,
            },
            payload_size: 0,
            fee: 0,
        }
    }

    pub fn negative_receipt(sender: NodeId, stamp_digest: Digest32, provider: NodeId) -> Transaction {
        Transaction {
            sender,
            payload: TxPayload::NegativeReceipt {
                stamp_digest,
                provider,
            },
            payload_size: 0,
            fee: 0,
        }
    }

    fn write(&self, w: &mut CanonicalWriter) {
        w.u8(self.payload.tag()).str(self.sender.as_str());
        match &self.payload {
            TxPayload::Join { proof } => proof.write(w),
            TxPayload::EpochReport {
                proof,
                stamps,
                requests,
                availability,
                position,
            } => {
                proof.write(w);
                w.u32(stamps.len() as u32);
                for s in stamps {
                    write_stamp(w, s);
                }
                w.u32(requests.len() as u32);
                for r in requests {
                    write_request(w, r);
                }
                w.u32(availability.len() as u32);
                for a in availability {
                    write_availability(w, a);
                }
                w.f64(position.0).f64(position.1);
            }
            TxPayload::DataExchange {
                stamp_digest,
                recipients,
                transfer_size,
            } => {
                w.digest(stamp_digest).u32(recipients.len() as u32);
                for r in recipients {
                    w.str(r.as_str());
                }
                w.u64(*transfer_size);
            }
            TxPayload::StampValidation {
                stamp_digest,
                producer,
                outcome,
                detail,
            } => {
                w.digest(stamp_digest)
                    .str(producer.as_str())
                    .u8(outcome.tag())
                    .f64(*detail);
            }
            TxPayload::NegativeReceipt {
                stamp_digest,
                provider,
            } => {
                w.digest(stamp_digest).str(provider.as_str());
            }
        }
        w.u64(self.payload_size).u64(self.fee);
    }
}

fn write_stamp(w: &mut CanonicalWriter, s: &DataStamp) {
    // Stamps are identified by their digest everywhere else; the block body
    // embeds the digest plus the full record for replay.
    w.digest(&s.digest());
    w.str(s.producer.as_str());
    w.u64(s.point_count);
    w.u64(s.epoch);
    w.u64(s.sample_bytes);
}

fn write_request(w: &mut CanonicalWriter, r: &DataRequest) {
    w.str(r.requester.as_str())
        .str(r.data_type.as_str())
        .u64(r.max_size)
        .f64(r.min_res)
        .f64(r.max_res);
}

fn write_availability(w: &mut CanonicalWriter, a: &AvailableData) {
    w.str(a.provider.as_str())
        .str(a.data_type.as_str())
        .u64(a.max_size)
        .f64(a.min_res)
        .f64(a.max_res);
}

/// One ledger entry: a sealed set of transactions.
#[derive(Debug, Clone, PartialEq)]
pub struct Block {
    pub height: u64,
    pub parent_digest: Digest32,
    pub epoch: u64,
    pub validator_id: NodeId,
    pub transactions: Vec<Transaction>,
    /// Hash of the canonical serialization of everything above.
    pub digest: Digest32,
}

impl Block {
    pub fn seal(
        height: u64,
        parent_digest: Digest32,
        epoch: u64,
        validator_id: NodeId,
        transactions: Vec<Transaction>,
    ) -> Block {
        let mut block = Block {
            height,
            parent_digest,
            epoch,
            validator_id,
            transactions,
            digest: Digest32::ZERO,
        };
        block.digest = block.compute_digest();
        block
    }

    pub fn genesis() -> Block {
        Block::seal(0, Digest32::ZERO, 0, NodeId::new("genesis"), Vec::new())
    }

    pub fn compute_digest(&self) -> Digest32 {
        let mut w = CanonicalWriter::new();
        w.u64(self.height)
            .digest(&self.parent_digest)
            .u64(self.epoch)
            .str(self.validator_id.as_str())
            .u32(self.transactions.len() as u32);
        for tx in &self.transactions {
            tx.write(&mut w);
        }
        w.finish()
    }
}
