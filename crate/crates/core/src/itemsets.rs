//! Presence-only frequent itemsets and the item/attribute orderings the
//! quantification search relies on.

use std::collections::{HashMap, HashSet};

use crate::dataset::{negated_name, AttrId, Dataset, ItemId};
use crate::support::{SupportIndex, UserBitset};

/// Items sorted by item order.
pub type Itemset = Vec<ItemId>;

/// Total orders over items and, per item, over its quantitative attributes.
#[derive(Clone, Debug, PartialEq)]
pub struct OrdMaps {
    item_ord: Vec<u32>,
    attr_ord: HashMap<(ItemId, AttrId), u32>,
    attrs: Vec<Vec<AttrId>>,
}

impl OrdMaps {
    pub fn item_ord(&self, item: ItemId) -> u32 {
        self.item_ord[item as usize]
    }

    pub fn attr_ord(&self, item: ItemId, attr: AttrId) -> u32 {
        self.attr_ord[&(item, attr)]
    }

    /// Quantitative attributes of `item`, in attribute order.
    pub fn attrs(&self, item: ItemId) -> &[AttrId] {
        &self.attrs[item as usize]
    }

    pub fn attr_ranks(&self) -> &HashMap<(ItemId, AttrId), u32> {
        &self.attr_ord
    }

    pub fn sort_items(&self, items: &mut [ItemId]) {
        items.sort_by_key(|&i| self.item_ord(i));
    }
}

/// Catalog order for items. Within an item the shared attribute comes
/// first, then its negation, then the rest in declaration order.
pub fn default_ord(dataset: &Dataset) -> OrdMaps {
    let shared = dataset.shared_attr;
    let negated = dataset.catalog.attr_id(&negated_name(dataset.shared_attr_name()));
    let mut item_ord = Vec::with_capacity(dataset.catalog.len());
    let mut attr_ord = HashMap::new();
    let mut attrs = Vec::with_capacity(dataset.catalog.len());
    for (id, decl) in dataset.catalog.items() {
        item_ord.push(id);
        let mut list: Vec<AttrId> = decl.quantitative().collect();
        let rank = |a: &AttrId| {
            if *a == shared {
                0
            } else if Some(*a) == negated {
                1
            } else {
                2
            }
        };
        // stable: declaration order survives among the rest
        list.sort_by_key(rank);
        for (k, &a) in list.iter().enumerate() {
            attr_ord.insert((id, a), k as u32);
        }
        attrs.push(list);
    }
    OrdMaps {
        item_ord,
        attr_ord,
        attrs,
    }
}

/// Smallest history count `c` with `c / universe >= min_support`.
pub fn min_count(min_support: f64, universe: usize) -> usize {
    if universe == 0 {
        return 0;
    }
    let n = universe as f64;
    let mut c = (min_support * n).ceil().max(0.0) as usize;
    while c > 0 && (c - 1) as f64 / n >= min_support {
        c -= 1;
    }
    while c <= universe && (c as f64) / n < min_support {
        c += 1;
    }
    c
}

/// Frequent itemsets grouped by size: `levels[k - 1]` holds the size-`k`
/// sets, each sorted by item order, with their presence counts.
pub fn mine_frequent(
    idx: &SupportIndex,
    ord: &OrdMaps,
    min_support: f64,
    max_len: usize,
) -> Vec<Vec<(Itemset, usize)>> {
    let threshold = min_count(min_support, idx.universe()).max(1);
    let mut levels = Vec::new();
    if max_len == 0 || idx.universe() == 0 {
        return levels;
    }
    let mut items: Vec<ItemId> = (0..idx.num_items() as ItemId).collect();
    ord.sort_items(&mut items);
    let mut current: Vec<(Itemset, UserBitset)> = items
        .into_iter()
        .filter(|&i| idx.presence(i).count() >= threshold)
        .map(|i| (vec![i], idx.presence(i).clone()))
        .collect();

    while !current.is_empty() {
        levels.push(current.iter().map(|(s, b)| (s.clone(), b.count())).collect());
        if levels.len() == max_len {
            break;
        }
        let known: HashSet<&[ItemId]> = current.iter().map(|(s, _)| s.as_slice()).collect();
        let mut next = Vec::new();
        for (x, (left, left_bits)) in current.iter().enumerate() {
            let k = left.len();
            for (right, _) in &current[x + 1..] {
                if left[..k - 1] != right[..k - 1] {
                    // current is sorted, so prefixes group together
                    break;
                }
                let mut cand = left.clone();
                cand.push(right[k - 1]);
                let closed = (0..k - 1).all(|drop| {
                    let sub: Vec<ItemId> = cand
                        .iter()
                        .enumerate()
                        .filter(|&(p, _)| p != drop)
                        .map(|(_, &i)| i)
                        .collect();
                    known.contains(sub.as_slice())
                });
                if !closed {
                    continue;
                }
                let bits = left_bits.and(idx.presence(right[k - 1]));
                if bits.count() >= threshold {
                    next.push((cand, bits));
                }
            }
        }
        current = next;
    }
    levels
}
