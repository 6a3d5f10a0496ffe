use std::collections::HashMap;

use super::{Dominance, Mode, Rule, RuleMetrics};
use crate::dataset::ItemId;

#[derive(Clone, Debug, PartialEq)]
pub struct StoredRule {
    pub rule: Rule,
    pub metrics: RuleMetrics,
}

impl StoredRule {
    pub fn new(rule: Rule, metrics: RuleMetrics) -> Self {
        StoredRule { rule, metrics }
    }

    fn pair(&self) -> (&Rule, &RuleMetrics) {
        (&self.rule, &self.metrics)
    }

    fn cons_value(&self) -> f64 {
        self.rule.consequent_value().unwrap_or(f64::INFINITY)
    }
}

/// Rules bucketed by consequent item, each bucket ordered by decreasing
/// consequent value. No stored rule beats another.
#[derive(Clone, Debug, Default)]
pub struct RuleStore {
    buckets: HashMap<ItemId, Vec<StoredRule>>,
    len: usize,
}

impl RuleStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn bucket(&self, consequent: ItemId) -> &[StoredRule] {
        self.buckets.get(&consequent).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn iter(&self) -> impl Iterator<Item = &StoredRule> {
        self.buckets.values().flatten()
    }

    pub fn into_rules(self) -> Vec<StoredRule> {
        self.buckets.into_values().flatten().collect()
    }

    /// True when some stored rule beats `(rule, metrics)`.
    ///
    /// Only rules whose consequent value is at least the candidate's can
    /// dominate it, so the scan stops at the first smaller value.
    pub fn is_beaten(&self, rule: &Rule, metrics: &RuleMetrics, dom: &Dominance) -> bool {
        let v = rule.consequent_value().unwrap_or(f64::NEG_INFINITY);
        self.bucket(rule.consequent)
            .iter()
            .take_while(|s| s.cons_value() >= v)
            .filter(|s| rule.mode == Mode::Geq || s.cons_value() == v)
            .any(|s| dom.beats(s.pair(), (rule, metrics)))
    }

    /// Inserts the rule unless a stored rule beats it; stored rules the new
    /// one beats are evicted. Returns whether the rule was inserted.
    pub fn insert_if_undominated(&mut self, rule: Rule, metrics: RuleMetrics, dom: &Dominance) -> bool {
        if self.is_beaten(&rule, &metrics, dom) {
            return false;
        }
        self.insert_unchecked(rule, metrics, dom);
        true
    }

    fn insert_unchecked(&mut self, rule: Rule, metrics: RuleMetrics, dom: &Dominance) {
        let v = rule.consequent_value().unwrap_or(f64::INFINITY);
        let bucket = self.buckets.entry(rule.consequent).or_default();
        let before = bucket.len();
        let cand = (&rule, &metrics);
        bucket.retain(|s| s.cons_value() > v || !dom.beats(cand, s.pair()));
        self.len -= before - bucket.len();
        let pos = bucket.partition_point(|s| s.cons_value() >= v);
        bucket.insert(pos, StoredRule { rule, metrics });
        self.len += 1;
    }

    /// Exhaustive check of the store invariant; used by tests.
    pub fn check_invariant(&self, dom: &Dominance) -> bool {
        self.buckets.values().all(|b| {
            b.windows(2).all(|w| w[0].cons_value() >= w[1].cons_value())
                && b.iter().enumerate().all(|(i, x)| {
                    b.iter()
                        .enumerate()
                        .all(|(j, y)| i == j || !dom.beats(x.pair(), y.pair()))
                })
        })
    }
}

/// The rules of `rules` that no other rule beats, one representative per
/// duplicate, in canonical order. Idempotent.
pub fn final_prune(rules: Vec<StoredRule>, dom: &Dominance) -> Vec<StoredRule> {
    let mut store = RuleStore::new();
    for s in rules {
        store.insert_if_undominated(s.rule, s.metrics, dom);
    }
    let mut out = store.into_rules();
    sort_canonical(&mut out);
    out
}

/// Drops every rule for which another rule in the set is wider.
pub fn widest_filter(rules: Vec<StoredRule>, dom: &Dominance) -> Vec<StoredRule> {
    let keep: Vec<bool> = rules
        .iter()
        .enumerate()
        .map(|(i, r)| {
            !rules.iter().enumerate().any(|(j, other)| {
                i != j
                    && other.rule != r.rule
                    && other.rule.consequent == r.rule.consequent
                    && dom.wider_beats(&other.rule, &r.rule)
            })
        })
        .collect();
    let mut out: Vec<StoredRule> = rules
        .into_iter()
        .zip(keep)
        .filter_map(|(r, k)| k.then_some(r))
        .collect();
    sort_canonical(&mut out);
    out
}

/// Consequent item, then descending consequent value, then antecedent
/// items and quantifications.
pub fn sort_canonical(rules: &mut [StoredRule]) {
    rules.sort_by(|a, b| {
        let (x, y) = (&a.rule, &b.rule);
        x.consequent
            .cmp(&y.consequent)
            .then_with(|| b.cons_value().total_cmp(&a.cons_value()))
            .then_with(|| x.antecedent.cmp(&y.antecedent))
            .then_with(|| {
                let kx = x.antecedent_quants().map(|q| (q.item, q.attr, q.value));
                let ky = y.antecedent_quants().map(|q| (q.item, q.attr, q.value));
                kx.partial_cmp(ky).unwrap_or(std::cmp::Ordering::Equal)
            })
            .then_with(|| x.mode.cmp(&y.mode))
    });
}
