//! Shard assignment: spatial shards for local stamp work, randomized shards
//! for global consensus. Every validator lands in exactly one shard of each
//! kind.

use crate::chain::ShardCell;
use crate::NodeId;
use rand::seq::SliceRandom;
use rand::Rng;
use std::collections::{BTreeMap, BTreeSet};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ShardKind {
    Spatial,
    Randomized,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Shard {
    pub kind: ShardKind,
    pub members: BTreeSet<NodeId>,
    /// Grid cell, spatial shards only.
    pub region: Option<ShardCell>,
}

/// Assign every node to one spatial shard (by position grid cell) and one
/// randomized shard (seeded shuffle into near-equal groups).
pub fn assign_shards<R: Rng + ?Sized>(
    positions: &BTreeMap<NodeId, (f64, f64)>,
    grid_m: f64,
    randomized_count: usize,
    rng: &mut R,
) -> Vec<Shard> {
    let mut spatial: BTreeMap<ShardCell, BTreeSet<NodeId>> = BTreeMap::new();
    for (node, (x, y)) in positions {
        let cell = ((x / grid_m).floor() as i64, (y / grid_m).floor() as i64);
        spatial.entry(cell).or_default().insert(node.clone());
    }
    let mut shards: Vec<Shard> = spatial
        .into_iter()
        .map(|(cell, members)| Shard {
            kind: ShardKind::Spatial,
            members,
            region: Some(cell),
        })
        .collect();

    let mut order: Vec<NodeId> = positions.keys().cloned().collect();
    order.shuffle(rng);
    let count = randomized_count.max(1).min(order.len().max(1));
    let mut groups: Vec<BTreeSet<NodeId>> = vec![BTreeSet::new(); count];
    for (i, node) in order.into_iter().enumerate() {
        groups[i % count].insert(node);
    }
    shards.extend(groups.into_iter().filter(|g| !g.is_empty()).map(|members| Shard {
        kind: ShardKind::Randomized,
        members,
        region: None,
    }));
    shards
}
