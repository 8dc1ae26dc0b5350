use crate::NodeId;
use thiserror::Error;

/// Whether the chain outlives the swarm or dies with it.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GenesisMode {
    /// Infrastructure nodes keep the chain alive; they are always live and
    /// admitted at genesis without a join proof.
    Longevous,
    /// The chain is destroyed once live nodes stay below `min_live_nodes`
    /// for a full epoch.
    AdHoc,
}

/// Protocol parameters, fixed at genesis.
#[derive(Debug, Clone, PartialEq)]
pub struct ChainConfig {
    pub genesis_mode: GenesisMode,
    /// Nodes that back a longevous chain. They relay and validate liveness
    /// but do not mine allowance.
    pub infrastructure: Vec<NodeId>,
    pub min_live_nodes: usize,
    /// Token lots expire once their age in epochs reaches this window.
    pub demurrage_window: u64,
    /// Tokens minted per epoch for each node that submitted a proof.
    pub epoch_allowance: u64,
    /// Share of the allowance granted to contributors that failed to provide
    /// certifiable stamps this epoch.
    pub penalty_factor: f64,
    pub pow_difficulty_bits: u32,
    /// Maximum simulated seconds a node dedicates to mining per epoch.
    pub pow_timeout: f64,
    pub fee_base: u64,
    pub fee_per_byte: u64,
    /// Objective weight on provider quality.
    pub alpha: f64,
    /// Objective weight on request/availability fit.
    pub beta: f64,
    /// Relative density tolerance used by stamp comparison.
    pub stamp_tolerance: f64,
    /// Minimum proofs (epsilon) before a node's compute can be estimated.
    pub window_min_proofs: usize,
    /// Side length in meters of the spatial shard grid cells.
    pub shard_grid_m: f64,
}

impl Default for ChainConfig {
    fn default() -> Self {
        ChainConfig {
            genesis_mode: GenesisMode::Longevous,
            infrastructure: Vec::new(),
            min_live_nodes: 1,
            demurrage_window: 5,
            epoch_allowance: 1_000_000,
            penalty_factor: 0.5,
            pow_difficulty_bits: 16,
            pow_timeout: 30.0,
            fee_base: 21_000,
            fee_per_byte: 34,
            alpha: 1.0,
            beta: 1.0,
            stamp_tolerance: 0.25,
            window_min_proofs: 3,
            shard_grid_m: 100.0,
        }
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum ConfigError {
    #[error("{0} must be positive")]
    NonPositive(&'static str),
    #[error("alpha and beta cannot both be zero")]
    ZeroWeights,
}

impl ChainConfig {
    /// Fee schedule: base charge plus a linear per-byte price on the payload
    /// attached to the transaction.
    pub fn fee_for_payload(&self, payload_size: u64) -> u64 {
        self.fee_base + self.fee_per_byte * payload_size
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.min_live_nodes == 0 {
            return Err(ConfigError::NonPositive("min_live_nodes"));
        }
        if self.demurrage_window == 0 {
            return Err(ConfigError::NonPositive("demurrage_window"));
        }
        if self.epoch_allowance == 0 {
            return Err(ConfigError::NonPositive("epoch_allowance"));
        }
        if self.penalty_factor < 0.0 {
            return Err(ConfigError::NonPositive("penalty_factor"));
        }
        if self.pow_timeout <= 0.0 {
            return Err(ConfigError::NonPositive("pow_timeout"));
        }
        if self.fee_base == 0 {
            return Err(ConfigError::NonPositive("fee_base"));
        }
        if self.fee_per_byte == 0 {
            return Err(ConfigError::NonPositive("fee_per_byte"));
        }
        if self.stamp_tolerance <= 0.0 {
            return Err(ConfigError::NonPositive("stamp_tolerance"));
        }
        if self.window_min_proofs == 0 {
            return Err(ConfigError::NonPositive("window_min_proofs"));
        }
        if self.shard_grid_m <= 0.0 {
            return Err(ConfigError::NonPositive("shard_grid_m"));
        }
        if self.alpha < 0.0 || self.beta < 0.0 || (self.alpha == 0.0 && self.beta == 0.0) {
            return Err(ConfigError::ZeroWeights);
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fee_schedule_reproduces_reference_rows() {
        let cfg = ChainConfig::default();
        assert_eq!(cfg.fee_for_payload(20), 21_680);
        assert_eq!(cfg.fee_for_payload(1080), 57_720);
        assert_eq!(cfg.fee_for_payload(2160), 94_440);
        assert_eq!(cfg.fee_for_payload(4320), 167_880);
        assert_eq!(cfg.fee_for_payload(8640), 314_760);
        assert_eq!(cfg.fee_for_payload(0), 21_000);
    }

    #[test]
    fn default_config_is_valid() {
        assert_eq!(ChainConfig::default().validate(), Ok(()));
    }

    #[test]
    fn zero_weights_rejected() {
        let cfg = ChainConfig {
            alpha: 0.0,
            beta: 0.0,
            ..ChainConfig::default()
        };
        assert_eq!(cfg.validate(), Err(ConfigError::ZeroWeights));
    }
}
