//! Bitsets over dense user indices and the per-(item, attribute, level)
//! cache that turns support counting into AND + popcount.

use std::collections::HashMap;

use crate::dataset::{AttrId, Dataset, ItemId, ValueIndex};
use crate::error::{Error, Result};
use crate::rule::{Counts, Mode, Quantification, Rule, RuleMetrics};

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct UserBitset {
    words: Vec<u64>,
    len: usize,
}

impl UserBitset {
    pub fn zeros(len: usize) -> Self {
        UserBitset {
            words: vec![0; len.div_ceil(64)],
            len,
        }
    }

    pub fn ones(len: usize) -> Self {
        let mut b = Self::zeros(len);
        for w in &mut b.words {
            *w = !0;
        }
        if !len.is_multiple_of(64) {
            if let Some(last) = b.words.last_mut() {
                *last = (1u64 << (len % 64)) - 1;
            }
        }
        b
    }

    pub fn from_indices(len: usize, indices: impl IntoIterator<Item = usize>) -> Self {
        let mut b = Self::zeros(len);
        for i in indices {
            b.insert(i);
        }
        b
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn insert(&mut self, i: usize) {
        assert!(i < self.len, "bit {i} out of range {}", self.len);
        self.words[i / 64] |= 1 << (i % 64);
    }

    pub fn contains(&self, i: usize) -> bool {
        i < self.len && self.words[i / 64] & (1 << (i % 64)) != 0
    }

    pub fn count(&self) -> usize {
        self.words.iter().map(|w| w.count_ones() as usize).sum()
    }

    pub fn and_assign(&mut self, other: &UserBitset) {
        debug_assert_eq!(self.len, other.len);
        for (a, b) in self.words.iter_mut().zip(&other.words) {
            *a &= b;
        }
    }

    pub fn or_assign(&mut self, other: &UserBitset) {
        debug_assert_eq!(self.len, other.len);
        for (a, b) in self.words.iter_mut().zip(&other.words) {
            *a |= b;
        }
    }

    pub fn and(&self, other: &UserBitset) -> UserBitset {
        let mut out = self.clone();
        out.and_assign(other);
        out
    }

    /// `|self & other|` without materialising the intersection.
    pub fn and_count(&self, other: &UserBitset) -> usize {
        self.words
            .iter()
            .zip(&other.words)
            .map(|(a, b)| (a & b).count_ones() as usize)
            .sum()
    }

    pub fn is_subset(&self, other: &UserBitset) -> bool {
        self.words.iter().zip(&other.words).all(|(a, b)| a & !b == 0)
    }

    pub fn iter(&self) -> impl Iterator<Item = usize> + '_ {
        self.words.iter().enumerate().flat_map(|(wi, &w)| {
            let mut w = w;
            std::iter::from_fn(move || {
                if w == 0 {
                    return None;
                }
                let bit = w.trailing_zeros() as usize;
                w &= w - 1;
                Some(wi * 64 + bit)
            })
        })
    }
}

#[derive(Clone, Debug)]
struct Levels {
    /// `at_least[j]`: users with a transaction valued `>= grid[j]`.
    at_least: Vec<UserBitset>,
    /// `exactly[j]`: users with a transaction valued `== grid[j]`.
    exactly: Vec<UserBitset>,
}

/// Immutable support cache built once per dataset.
#[derive(Clone, Debug)]
pub struct SupportIndex {
    universe: usize,
    presence: Vec<UserBitset>,
    levels: HashMap<(ItemId, AttrId), Levels>,
    values: ValueIndex,
}

impl SupportIndex {
    pub fn build(dataset: &Dataset, values: &ValueIndex) -> Self {
        let n = dataset.num_users();
        let mut presence = vec![UserBitset::zeros(n); dataset.catalog.len()];
        let mut exactly: HashMap<(ItemId, AttrId), Vec<UserBitset>> = values
            .pairs()
            .map(|(&key, grid)| (key, vec![UserBitset::zeros(n); grid.len()]))
            .collect();
        for (u, h) in dataset.histories.iter().enumerate() {
            for tx in &h.transactions {
                presence[tx.item as usize].insert(u);
                for &(a, v) in &tx.values {
                    let j = values
                        .level_of(tx.item, a, v)
                        .expect("value index built from this dataset");
                    exactly.get_mut(&(tx.item, a)).expect("pair indexed")[j].insert(u);
                }
            }
        }
        let levels = exactly
            .into_iter()
            .map(|(key, exactly)| {
                // descending cumulative union
                let mut at_least = exactly.clone();
                for j in (0..at_least.len().saturating_sub(1)).rev() {
                    let next = at_least[j + 1].clone();
                    at_least[j].or_assign(&next);
                }
                (key, Levels { at_least, exactly })
            })
            .collect();
        SupportIndex {
            universe: n,
            presence,
            levels,
            values: values.clone(),
        }
    }

    pub fn universe(&self) -> usize {
        self.universe
    }

    pub fn values(&self) -> &ValueIndex {
        &self.values
    }

    pub fn num_items(&self) -> usize {
        self.presence.len()
    }

    pub fn presence(&self, item: ItemId) -> &UserBitset {
        &self.presence[item as usize]
    }

    pub fn num_levels(&self, item: ItemId, attr: AttrId) -> usize {
        self.levels.get(&(item, attr)).map_or(0, |l| l.at_least.len())
    }

    pub fn at_least(&self, item: ItemId, attr: AttrId, level: usize) -> &UserBitset {
        &self.levels[&(item, attr)].at_least[level]
    }

    pub fn exactly(&self, item: ItemId, attr: AttrId, level: usize) -> &UserBitset {
        &self.levels[&(item, attr)].exactly[level]
    }

    fn level(&self, q: &Quantification) -> Result<usize> {
        self.values
            .level_of(q.item, q.attr, q.value)
            .ok_or_else(|| Error::NotOnGrid {
                item: q.item.to_string(),
                attr: q.attr.to_string(),
                value: q.value,
            })
    }

    /// Users whose history contains every item of `items` and satisfies
    /// every quantification, each independently over the history's
    /// transactions. The shared-attribute condition on `exact_item` is an
    /// equality instead of `>=`.
    pub fn matching_histories(
        &self,
        items: &[ItemId],
        quants: &[Quantification],
        exact_item: Option<ItemId>,
    ) -> Result<UserBitset> {
        let mut acc = UserBitset::ones(self.universe);
        for &i in items {
            acc.and_assign(self.presence(i));
        }
        for q in quants {
            let j = self.level(q)?;
            if exact_item == Some(q.item) {
                acc.and_assign(self.exactly(q.item, q.attr, j));
            } else {
                acc.and_assign(self.at_least(q.item, q.attr, j));
            }
        }
        Ok(acc)
    }

    pub fn counts(&self, rule: &Rule) -> Result<Counts> {
        let exact = (rule.mode == Mode::Eq).then_some(rule.consequent);
        let ante_q: Vec<Quantification> = rule.antecedent_quants().copied().collect();
        let cons_q: Vec<Quantification> = rule.consequent_quant().into_iter().copied().collect();
        let antecedent = self.matching_histories(&rule.antecedent, &ante_q, exact)?;
        let consequent = self.matching_histories(&[rule.consequent], &cons_q, exact)?;
        Ok(Counts {
            joint: antecedent.and_count(&consequent) as u64,
            antecedent: antecedent.count() as u64,
            consequent: consequent.count() as u64,
            universe: self.universe as u64,
        })
    }

    pub fn support(&self, rule: &Rule) -> Result<f64> {
        if self.universe == 0 {
            return Err(Error::EmptyDataset);
        }
        Ok(self.counts(rule)?.joint as f64 / self.universe as f64)
    }

    pub fn confidence(&self, rule: &Rule) -> Result<f64> {
        let c = self.counts(rule)?;
        if c.antecedent == 0 {
            return Err(Error::UndefinedConfidence);
        }
        Ok(c.joint as f64 / c.antecedent as f64)
    }

    pub fn metrics(&self, rule: &Rule) -> Result<RuleMetrics> {
        RuleMetrics::from_counts(self.counts(rule)?)
    }
}
