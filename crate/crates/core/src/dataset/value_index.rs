use std::collections::HashMap;

use super::{AttrId, Dataset, ItemId};

/// Ascending distinct values of every (item, attribute) pair seen in the data.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ValueIndex {
    entries: HashMap<(ItemId, AttrId), Vec<f64>>,
}

impl ValueIndex {
    pub fn build(dataset: &Dataset) -> Self {
        let mut entries: HashMap<(ItemId, AttrId), Vec<f64>> = HashMap::new();
        for tx in dataset.histories.iter().flat_map(|h| &h.transactions) {
            for &(a, v) in &tx.values {
                entries.entry((tx.item, a)).or_default().push(v);
            }
        }
        for grid in entries.values_mut() {
            grid.sort_by(f64::total_cmp);
            grid.dedup();
        }
        ValueIndex { entries }
    }

    pub fn get(&self, item: ItemId, attr: AttrId) -> Option<&[f64]> {
        self.entries.get(&(item, attr)).map(Vec::as_slice)
    }

    pub fn grid(&self, item: ItemId, attr: AttrId) -> &[f64] {
        self.get(item, attr).unwrap_or(&[])
    }

    /// Position of `value` on the grid of (item, attr), exact match only.
    pub fn level_of(&self, item: ItemId, attr: AttrId, value: f64) -> Option<usize> {
        let grid = self.get(item, attr)?;
        grid.binary_search_by(|g| g.total_cmp(&value)).ok()
    }

    /// Greatest grid value strictly below `value`.
    pub fn predecessor(&self, item: ItemId, attr: AttrId, value: f64) -> Option<f64> {
        let grid = self.get(item, attr)?;
        let pos = grid.partition_point(|&g| g < value);
        pos.checked_sub(1).map(|i| grid[i])
    }

    pub fn pairs(&self) -> impl Iterator<Item = (&(ItemId, AttrId), &Vec<f64>)> {
        self.entries.iter()
    }
}
