//! Quantified rules `B -> I | Q`, the dominance and widening relations, and
//! the consequent-bucketed rule store.

mod io;
mod metrics;
mod store;

use std::cmp::Ordering;
use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::dataset::{AttrId, Catalog, ItemId, ValueIndex};
use crate::error::{Error, Result};

pub use io::{read_rules, round_sig6, write_rules, Precision, RuleLine};
pub use metrics::{Counts, Ltf, Metric, RuleMetrics};
pub use store::{final_prune, sort_canonical, widest_filter, RuleStore, StoredRule};

/// How the consequent's shared attribute is compared.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Geq,
    Eq,
}

impl Mode {
    pub fn name(self) -> &'static str {
        match self {
            Mode::Geq => "geq",
            Mode::Eq => "eq",
        }
    }
}

impl FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "geq" => Ok(Mode::Geq),
            "eq" => Ok(Mode::Eq),
            other => Err(Error::Config(format!("unknown mode `{other}`"))),
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Quantification {
    pub item: ItemId,
    pub attr: AttrId,
    pub value: f64,
}

impl Quantification {
    pub fn new(item: ItemId, attr: AttrId, value: f64) -> Self {
        Quantification { item, attr, value }
    }

    fn same(&self, other: &Quantification) -> bool {
        self.item == other.item && self.attr == other.attr && self.value.to_bits() == other.value.to_bits()
    }
}

#[derive(Clone, Debug)]
pub struct Rule {
    /// Sorted, never contains `consequent`.
    pub antecedent: Vec<ItemId>,
    pub consequent: ItemId,
    /// Sorted by (item, attr); (item, attr) is a key.
    pub quants: Vec<Quantification>,
    pub mode: Mode,
}

impl PartialEq for Rule {
    fn eq(&self, other: &Self) -> bool {
        self.antecedent == other.antecedent
            && self.consequent == other.consequent
            && self.mode == other.mode
            && self.quants.len() == other.quants.len()
            && self.quants.iter().zip(&other.quants).all(|(a, b)| a.same(b))
    }
}

impl Eq for Rule {}

impl std::hash::Hash for Rule {
    fn hash<H: std::hash::Hasher>(&self, state: &mut H) {
        self.antecedent.hash(state);
        self.consequent.hash(state);
        self.mode.hash(state);
        for q in &self.quants {
            (q.item, q.attr, q.value.to_bits()).hash(state);
        }
    }
}

impl Rule {
    /// Builds a rule, normalising order and checking the structural
    /// invariants against the shared attribute.
    pub fn new(
        mut antecedent: Vec<ItemId>,
        consequent: ItemId,
        mut quants: Vec<Quantification>,
        mode: Mode,
        shared_attr: AttrId,
    ) -> Result<Self> {
        antecedent.sort_unstable();
        antecedent.dedup();
        if antecedent.contains(&consequent) {
            return Err(Error::MalformedRule("consequent item appears in the antecedent".into()));
        }
        quants.sort_by_key(|q| (q.item, q.attr));
        if quants
            .windows(2)
            .any(|w| (w[0].item, w[0].attr) == (w[1].item, w[1].attr))
        {
            return Err(Error::MalformedRule(
                "two quantifications share an (item, attribute) key".into(),
            ));
        }
        for q in &quants {
            if q.item == consequent {
                if q.attr != shared_attr {
                    return Err(Error::MalformedRule(
                        "the consequent may only constrain the shared attribute".into(),
                    ));
                }
            } else if antecedent.binary_search(&q.item).is_err() {
                return Err(Error::MalformedRule("quantified item is not part of the rule".into()));
            }
        }
        Ok(Rule {
            antecedent,
            consequent,
            quants,
            mode,
        })
    }

    pub fn consequent_quant(&self) -> Option<&Quantification> {
        self.quants.iter().find(|q| q.item == self.consequent)
    }

    pub fn consequent_value(&self) -> Option<f64> {
        self.consequent_quant().map(|q| q.value)
    }

    pub fn antecedent_quants(&self) -> impl Iterator<Item = &Quantification> + '_ {
        self.quants.iter().filter(move |q| q.item != self.consequent)
    }

    pub fn quant(&self, item: ItemId, attr: AttrId) -> Option<&Quantification> {
        self.quants.iter().find(|q| q.item == item && q.attr == attr)
    }

    /// All items of the rule, antecedent first.
    pub fn items(&self) -> Vec<ItemId> {
        let mut v = self.antecedent.clone();
        v.push(self.consequent);
        v
    }

    pub fn display<'a>(&'a self, catalog: &'a Catalog) -> RuleDisplay<'a> {
        RuleDisplay { rule: self, catalog }
    }
}

pub struct RuleDisplay<'a> {
    rule: &'a Rule,
    catalog: &'a Catalog,
}

impl fmt::Display for RuleDisplay<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let write_item = |f: &mut fmt::Formatter<'_>, item: ItemId| -> fmt::Result {
            f.write_str(self.catalog.item_name(item))?;
            for q in self.rule.quants.iter().filter(|q| q.item == item) {
                let op = if item == self.rule.consequent && self.rule.mode == Mode::Eq {
                    "="
                } else {
                    ">="
                };
                write!(f, "[{}{}{}]", self.catalog.attr_name(q.attr), op, q.value)?;
            }
            Ok(())
        };
        for (i, &item) in self.rule.antecedent.iter().enumerate() {
            if i > 0 {
                f.write_str(" & ")?;
            }
            write_item(f, item)?;
        }
        f.write_str(" -> ")?;
        write_item(f, self.rule.consequent)
    }
}

/// Everything the dominance and widening relations need beyond the two
/// rules themselves.
///
/// `vacuous` holds, per (item, attribute), the smallest grid value when a
/// `>=` condition at that value matches exactly the histories containing
/// the item. Such a condition constrains nothing, so an antecedent
/// quantification at that floor needs no counterpart in the other rule.
/// `attr_rank` orders attributes within an item for tie-breaking.
#[derive(Clone, Debug, Default)]
pub struct Dominance {
    pub ltf: Ltf,
    pub vacuous: HashMap<(ItemId, AttrId), f64>,
    pub attr_rank: HashMap<(ItemId, AttrId), u32>,
}

impl Dominance {
    pub fn new(ltf: Ltf) -> Self {
        Dominance {
            ltf,
            ..Default::default()
        }
    }

    fn is_vacuous(&self, q: &Quantification) -> bool {
        self.vacuous.get(&(q.item, q.attr)) == Some(&q.value)
    }

    /// The structural part shared by dominance and widening: `r_prime` is
    /// at least as general as `r` and at least as strong.
    fn covers(&self, r_prime: &Rule, r: &Rule) -> Result<bool> {
        if r_prime.mode != r.mode {
            return Err(Error::ModeMismatch);
        }
        if r_prime.consequent != r.consequent {
            return Ok(false);
        }
        if !is_subset(&r_prime.antecedent, &r.antecedent) {
            return Ok(false);
        }
        if let (Some(v_prime), Some(v)) = (r_prime.consequent_value(), r.consequent_value()) {
            let ok = match r.mode {
                Mode::Geq => v_prime >= v,
                Mode::Eq => v_prime == v,
            };
            if !ok {
                return Ok(false);
            }
        }
        for w in r_prime.antecedent_quants() {
            if self.is_vacuous(w) {
                continue;
            }
            match r.quant(w.item, w.attr) {
                Some(v) if w.value <= v.value => {}
                _ => return Ok(false),
            }
        }
        Ok(true)
    }

    /// `r_prime` dominates `r`: wider, with at least the support and
    /// satisfying `LTF(r, r_prime)`. Reflexive.
    pub fn dominates(&self, r_prime: (&Rule, &RuleMetrics), r: (&Rule, &RuleMetrics)) -> Result<bool> {
        Ok(self.covers(r_prime.0, r.0)?
            && r.1.compare(r_prime.1, Metric::Support) != Ordering::Greater
            && self.ltf.holds(r.1, r_prime.1))
    }

    /// Dominance without the support and interestingness comparisons.
    pub fn wider(&self, r_prime: &Rule, r: &Rule) -> Result<bool> {
        self.covers(r_prime, r)
    }

    /// Dominance with ties broken: when two distinct rules dominate each
    /// other, only the canonically smaller one beats the other.
    pub fn beats(&self, x: (&Rule, &RuleMetrics), y: (&Rule, &RuleMetrics)) -> bool {
        match self.dominates(x, y) {
            Ok(true) => !self.dominates(y, x).unwrap_or(false) || self.canonical_cmp(x.0, y.0) != Ordering::Greater,
            _ => false,
        }
    }

    pub(crate) fn wider_beats(&self, x: &Rule, y: &Rule) -> bool {
        match self.wider(x, y) {
            Ok(true) => !self.wider(y, x).unwrap_or(false) || self.canonical_cmp(x, y) != Ordering::Greater,
            _ => false,
        }
    }

    /// Total order used for tie-breaking and canonical output: consequent,
    /// antecedent items, number of quantifications, then quantifications
    /// by (item, attribute rank, value).
    pub fn canonical_cmp(&self, a: &Rule, b: &Rule) -> Ordering {
        a.consequent
            .cmp(&b.consequent)
            .then_with(|| a.antecedent.cmp(&b.antecedent))
            .then_with(|| a.quants.len().cmp(&b.quants.len()))
            .then_with(|| {
                for (x, y) in a.quants.iter().zip(&b.quants) {
                    let o = x
                        .item
                        .cmp(&y.item)
                        .then_with(|| self.rank(x).cmp(&self.rank(y)))
                        .then_with(|| x.value.total_cmp(&y.value));
                    if o != Ordering::Equal {
                        return o;
                    }
                }
                Ordering::Equal
            })
            .then_with(|| a.mode.cmp(&b.mode))
    }

    fn rank(&self, q: &Quantification) -> (u32, AttrId) {
        (
            self.attr_rank.get(&(q.item, q.attr)).copied().unwrap_or(u32::MAX),
            q.attr,
        )
    }
}

fn is_subset(small: &[ItemId], big: &[ItemId]) -> bool {
    small.iter().all(|x| big.binary_search(x).is_ok())
}

/// A `>=` bound shown as strict at the preceding grid value when one exists.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Bound {
    /// `value > below`: no grid value lies strictly between.
    Above(f64),
    AtLeast(f64),
    Exactly(f64),
}

#[derive(Clone, Debug, PartialEq)]
pub struct GeneralizedRule {
    pub antecedent: Vec<ItemId>,
    pub consequent: ItemId,
    pub bounds: Vec<(ItemId, AttrId, Bound)>,
}

impl GeneralizedRule {
    pub fn display(&self, catalog: &Catalog) -> String {
        let item = |id: ItemId| {
            let mut s = catalog.item_name(id).to_owned();
            for (_, attr, b) in self.bounds.iter().filter(|(i, _, _)| *i == id) {
                let (op, v) = match b {
                    Bound::Above(v) => (">", v),
                    Bound::AtLeast(v) => (">=", v),
                    Bound::Exactly(v) => ("=", v),
                };
                s.push_str(&format!("[{}{}{}]", catalog.attr_name(*attr), op, v));
            }
            s
        };
        let lhs: Vec<String> = self.antecedent.iter().map(|&i| item(i)).collect();
        format!("{} -> {}", lhs.join(" & "), item(self.consequent))
    }
}

/// Rewrites each `>= l` condition as `> l⁻`, where `l⁻` is the largest grid
/// value strictly below `l`; the data give no evidence either way for
/// values in between.
pub fn generalize(rule: &Rule, vi: &ValueIndex) -> GeneralizedRule {
    let bounds = rule
        .quants
        .iter()
        .map(|q| {
            let b = if q.item == rule.consequent && rule.mode == Mode::Eq {
                Bound::Exactly(q.value)
            } else {
                match vi.predecessor(q.item, q.attr, q.value) {
                    Some(prev) => Bound::Above(prev),
                    None => Bound::AtLeast(q.value),
                }
            };
            (q.item, q.attr, b)
        })
        .collect();
    GeneralizedRule {
        antecedent: rule.antecedent.clone(),
        consequent: rule.consequent,
        bounds,
    }
}

#[cfg(test)]
pub(crate) mod testing {
    use super::*;

    /// Shorthand used across tests: `(item, attr, value)` triples.
    pub fn rule(antecedent: &[ItemId], consequent: ItemId, quants: &[(ItemId, AttrId, f64)], mode: Mode) -> Rule {
        Rule::new(
            antecedent.to_vec(),
            consequent,
            quants.iter().map(|&(i, a, v)| Quantification::new(i, a, v)).collect(),
            mode,
            0,
        )
        .unwrap()
    }

    pub fn metrics(joint: u64, antecedent: u64, consequent: u64, universe: u64) -> RuleMetrics {
        RuleMetrics::from_counts(Counts {
            joint,
            antecedent,
            consequent,
            universe,
        })
        .unwrap()
    }
}
