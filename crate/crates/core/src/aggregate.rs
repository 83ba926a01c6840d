//! Count aggregation over a join tree by message passing.
//!
//! One engine serves two instantiations: plain count propagation (join
//! cardinality, per-feature marginals) uses empty carries, and coreset
//! construction attaches per-row grid coordinates as carries so the root
//! message becomes the grouped weight table. All counts are exact u64 and
//! overflow is a hard error.

use alloc::collections::BTreeMap;
use alloc::vec::Vec;

use crate::value::Value;

#[derive(Debug, thiserror::Error)]
pub enum AggregateError {
    #[error("join count exceeds the u64 accumulator range")]
    CountOverflow,
}

/// Rows of one tree node, pre-projected for the engine.
pub(crate) struct AggNode {
    pub mult: Vec<u64>,
    /// Per row: projection onto the attributes shared with the parent.
    pub up_keys: Vec<Vec<Value>>,
    /// Per child slot, per row: projection onto that edge's attributes.
    pub child_keys: Vec<Vec<Vec<Value>>>,
    /// Per row: locally owned grid coordinates (empty for plain counting).
    pub carries: Vec<Vec<u32>>,
    /// Global feature indices of the local carries, ascending.
    pub carry_features: Vec<usize>,
}

impl AggNode {
    pub fn row_count(&self) -> usize {
        self.mult.len()
    }
}

/// Message sent upward: (join-key values, accumulated grid coordinates) -> count.
pub(crate) type UpMessage = BTreeMap<(Vec<Value>, Vec<u32>), u64>;

/// A child's message re-indexed by join key for O(log n) row matching.
type ChildIndex<'a> = BTreeMap<&'a [Value], Vec<(&'a [u32], u64)>>;

pub(crate) struct UpSweep {
    /// Per node, indexed like the tree.
    pub messages: Vec<UpMessage>,
    /// Global feature indices covered by each node's subtree, ascending.
    pub subtree_features: Vec<Vec<usize>>,
}

/// Tree topology, decoupled from relation storage.
pub(crate) struct Topology {
    pub root: usize,
    pub children: Vec<Vec<usize>>,
    pub post_order: Vec<usize>,
}

fn checked_mul(a: u64, b: u64) -> Result<u64, AggregateError> {
    a.checked_mul(b).ok_or(AggregateError::CountOverflow)
}

fn checked_add(a: u64, b: u64) -> Result<u64, AggregateError> {
    a.checked_add(b).ok_or(AggregateError::CountOverflow)
}

/// Bottom-up sweep. Each node's message to its parent maps
/// (shared-attribute values, subtree grid coordinates) to the number of
/// join rows the subtree contributes for that combination.
pub(crate) fn up_sweep(topo: &Topology, nodes: &[AggNode]) -> Result<UpSweep, AggregateError> {
    let n = nodes.len();
    let mut messages: Vec<UpMessage> = (0..n).map(|_| UpMessage::new()).collect();
    let mut subtree_features: Vec<Vec<usize>> = alloc::vec![Vec::new(); n];

    for &v in &topo.post_order {
        let node = &nodes[v];
        let child_slots = &topo.children[v];

        // Merged feature layout: local carries first, then each child's
        // subtree carries, re-sorted into ascending global order.
        let mut layout: Vec<usize> = node.carry_features.clone();
        for &c in child_slots {
            layout.extend_from_slice(&subtree_features[c]);
        }
        let mut perm: Vec<usize> = (0..layout.len()).collect();
        perm.sort_by_key(|&i| layout[i]);
        let sorted_layout: Vec<usize> = perm.iter().map(|&i| layout[i]).collect();
        // position in the concatenated (local ++ children) carry -> output slot
        let mut place = alloc::vec![0usize; perm.len()];
        for (out_slot, &concat_pos) in perm.iter().enumerate() {
            place[concat_pos] = out_slot;
        }

        // Index each child's message by join key.
        let child_index: Vec<ChildIndex<'_>> = child_slots
            .iter()
            .map(|&c| {
                let mut index = ChildIndex::new();
                for ((key, carry), &count) in &messages[c] {
                    index
                        .entry(key.as_slice())
                        .or_default()
                        .push((carry.as_slice(), count));
                }
                index
            })
            .collect();

        let mut message = UpMessage::new();
        let mut combined = alloc::vec![0u32; perm.len()];
        for row in 0..node.row_count() {
            let mut entry_lists: Vec<&[(&[u32], u64)]> = Vec::with_capacity(child_slots.len());
            let mut dead = false;
            for (slot, index) in child_index.iter().enumerate() {
                match index.get(node.child_keys[slot][row].as_slice()) {
                    Some(entries) => entry_lists.push(entries),
                    None => {
                        dead = true;
                        break;
                    }
                }
            }
            if dead {
                continue;
            }

            // Walk the cartesian product of child message entries.
            let mut cursor = alloc::vec![0usize; entry_lists.len()];
            loop {
                let mut count = node.mult[row];
                let local = &node.carries[row];
                for (i, &id) in local.iter().enumerate() {
                    combined[place[i]] = id;
                }
                let mut offset = local.len();
                for (slot, &pos) in cursor.iter().enumerate() {
                    let (carry, c) = entry_lists[slot][pos];
                    count = checked_mul(count, c)?;
                    for (i, &id) in carry.iter().enumerate() {
                        combined[place[offset + i]] = id;
                    }
                    offset += carry.len();
                }
                if count > 0 {
                    let key = (node.up_keys[row].clone(), combined.clone());
                    let slot = message.entry(key).or_insert(0);
                    *slot = checked_add(*slot, count)?;
                }

                // advance the odometer; exhausted once it wraps fully
                let mut wrapped = true;
                for i in (0..cursor.len()).rev() {
                    cursor[i] += 1;
                    if cursor[i] < entry_lists[i].len() {
                        wrapped = false;
                        break;
                    }
                    cursor[i] = 0;
                }
                if wrapped {
                    break;
                }
            }
        }

        messages[v] = message;
        subtree_features[v] = sorted_layout;
    }

    Ok(UpSweep {
        messages,
        subtree_features,
    })
}

/// Top-down sweep for plain counting (carries must be empty). For each
/// node, maps its parent-edge key values to the join count of the rest of
/// the tree (everything outside the node's subtree).
pub(crate) fn down_sweep(
    topo: &Topology,
    nodes: &[AggNode],
    up: &UpSweep,
) -> Result<Vec<BTreeMap<Vec<Value>, u64>>, AggregateError> {
    let n = nodes.len();
    let mut down: Vec<BTreeMap<Vec<Value>, u64>> = (0..n).map(|_| BTreeMap::new()).collect();
    down[topo.root].insert(Vec::new(), 1);

    // Pre-order: parents before children.
    for &p in topo.post_order.iter().rev() {
        let node = &nodes[p];
        let slots = &topo.children[p];
        if slots.is_empty() {
            continue;
        }
        for row in 0..node.row_count() {
            let Some(&from_above) = down[p].get(&node.up_keys[row]) else {
                continue;
            };
            let base = checked_mul(node.mult[row], from_above)?;

            // Child factors with prefix/suffix products so one zero factor
            // is handled without division.
            let factors: Vec<u64> = slots
                .iter()
                .enumerate()
                .map(|(slot, &c)| {
                    up.messages[c]
                        .get(&(node.child_keys[slot][row].clone(), Vec::new()))
                        .copied()
                        .unwrap_or(0)
                })
                .collect();
            let k = factors.len();
            let mut prefix = alloc::vec![1u64; k + 1];
            for i in 0..k {
                prefix[i + 1] = checked_mul(prefix[i], factors[i])?;
            }
            let mut suffix = alloc::vec![1u64; k + 1];
            for i in (0..k).rev() {
                suffix[i] = checked_mul(suffix[i + 1], factors[i])?;
            }

            for (slot, &c) in slots.iter().enumerate() {
                let excl = checked_mul(prefix[slot], suffix[slot + 1])?;
                let contribution = checked_mul(base, excl)?;
                if contribution > 0 {
                    let entry = down[c]
                        .entry(node.child_keys[slot][row].clone())
                        .or_insert(0);
                    *entry = checked_add(*entry, contribution)?;
                }
            }
        }
    }
    Ok(down)
}

/// Per-row weights for plain counting: for every node, the exact number of
/// join-result rows whose restriction to the node equals that row.
pub(crate) fn full_row_weights(
    topo: &Topology,
    nodes: &[AggNode],
    up: &UpSweep,
    down: &[BTreeMap<Vec<Value>, u64>],
) -> Result<Vec<Vec<u64>>, AggregateError> {
    let n = nodes.len();
    let mut weights = Vec::with_capacity(n);
    for (v, node) in nodes.iter().enumerate() {
        let slots = &topo.children[v];
        let mut w = alloc::vec![0u64; node.row_count()];
        for (row, out) in w.iter_mut().enumerate() {
            let Some(&above) = down[v].get(&node.up_keys[row]) else {
                continue;
            };
            let mut total = checked_mul(node.mult[row], above)?;
            for (slot, &c) in slots.iter().enumerate() {
                let factor = up.messages[c]
                    .get(&(node.child_keys[slot][row].clone(), Vec::new()))
                    .copied()
                    .unwrap_or(0);
                total = checked_mul(total, factor)?;
                if total == 0 {
                    break;
                }
            }
            *out = total;
        }
        weights.push(w);
    }
    Ok(weights)
}
