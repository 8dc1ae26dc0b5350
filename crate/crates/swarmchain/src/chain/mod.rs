//! The ledger: blocks, transactions, token accounts with demurrage, fee
//! schedule, per-shard quality state and canonical-chain selection.

mod block;
mod config;
mod ledger;
mod state;

pub use block::{Block, ProofRecord, Transaction, TxPayload};
pub use config::{ChainConfig, ConfigError, GenesisMode};
pub use ledger::{
    apply_demurrage, mint_epoch_allowance, Accounts, InsufficientBalance, TokenAccount, TokenLot,
};
pub use state::{
    select_canonical, BlockEffects, ChainError, ChainState, FeeDebit, ShardCell, StampRecord,
};
