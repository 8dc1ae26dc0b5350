//! Token accounts with demurrage.
//!
//! Balances are lists of lots tagged with their minting epoch. A lot is
//! spendable while `current_epoch - minted_epoch < demurrage_window`;
//! spending consumes the oldest usable lots first, and expired lots vanish
//! entirely. Tokens only buy network carriage, so hoarding is pointless by
//! construction.

use crate::NodeId;
use std::collections::BTreeMap;
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TokenLot {
    pub minted_epoch: u64,
    pub amount: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct TokenAccount {
    /// Lots ordered oldest first.
    lots: Vec<TokenLot>,
}

#[derive(Debug, Error, PartialEq, Eq)]
#[error("insufficient spendable balance: need {need}, have {have}")]
pub struct InsufficientBalance {
    pub need: u64,
    pub have: u64,
}

impl TokenAccount {
    pub fn lots(&self) -> &[TokenLot] {
        &self.lots
    }

    fn usable(lot: &TokenLot, current_epoch: u64, window: u64) -> bool {
        current_epoch.saturating_sub(lot.minted_epoch) < window
    }

    pub fn spendable(&self, current_epoch: u64, window: u64) -> u64 {
        self.lots
            .iter()
            .filter(|l| Self::usable(l, current_epoch, window))
            .map(|l| l.amount)
            .sum()
    }

    pub fn credit(&mut self, minted_epoch: u64, amount: u64) {
        if amount == 0 {
            return;
        }
        if let Some(last) = self.lots.last_mut() {
            if last.minted_epoch == minted_epoch {
                last.amount += amount;
                return;
            }
        }
        debug_assert!(self.lots.last().is_none_or(|l| l.minted_epoch < minted_epoch));
        self.lots.push(TokenLot { minted_epoch, amount });
    }

    /// Debit `amount` from the oldest usable lots. Returns how much was taken
    /// from each minting epoch so supply can be audited lot by lot.
    pub fn spend(
        &mut self,
        amount: u64,
        current_epoch: u64,
        window: u64,
    ) -> Result<Vec<(u64, u64)>, InsufficientBalance> {
        let have = self.spendable(current_epoch, window);
        if have < amount {
            return Err(InsufficientBalance { need: amount, have });
        }
        let mut remaining = amount;
        let mut breakdown = Vec::new();
        for lot in &mut self.lots {
            if remaining == 0 {
                break;
            }
            if !Self::usable(lot, current_epoch, window) {
                continue;
            }
            let take = lot.amount.min(remaining);
            lot.amount -= take;
            remaining -= take;
            if take > 0 {
                breakdown.push((lot.minted_epoch, take));
            }
        }
        self.lots.retain(|l| l.amount > 0);
        Ok(breakdown)
    }

    /// Drop lots whose age reached the window. Returns the removed lots.
    pub fn expire(&mut self, current_epoch: u64, window: u64) -> Vec<TokenLot> {
        let (dead, live): (Vec<_>, Vec<_>) = self
            .lots
            .iter()
            .copied()
            .partition(|l| current_epoch.saturating_sub(l.minted_epoch) >= window);
        self.lots = live;
        dead
    }
}

pub type Accounts = BTreeMap<NodeId, TokenAccount>;

/// Remove aged lots from every account; younger lots are untouched.
/// Returns `(node, minted_epoch, amount)` per removed lot.
pub fn apply_demurrage(
    accounts: &mut Accounts,
    current_epoch: u64,
    window: u64,
) -> Vec<(NodeId, u64, u64)> {
    let mut expired = Vec::new();
    for (node, account) in accounts.iter_mut() {
        for lot in account.expire(current_epoch, window) {
            expired.push((node.clone(), lot.minted_epoch, lot.amount));
        }
    }
    expired
}

/// Mint the fixed epoch allowance for every contributing node. Contributors
/// that were penalized this epoch only receive `allowance * penalty_factor`.
/// Nodes that submitted no proof receive nothing.
pub fn mint_epoch_allowance(
    accounts: &mut Accounts,
    epoch: u64,
    contributors: &[NodeId],
    penalized: &[NodeId],
    allowance: u64,
    penalty_factor: f64,
) -> Vec<(NodeId, u64)> {
    let mut minted = Vec::new();
    for node in contributors {
        let amount = if penalized.contains(node) {
            (allowance as f64 * penalty_factor).round() as u64
        } else {
            allowance
        };
        accounts.entry(node.clone()).or_default().credit(epoch, amount);
        minted.push((node.clone(), amount));
    }
    minted
}
