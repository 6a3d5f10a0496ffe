//! Independent reference implementations used by the integration tests:
//! a random small-dataset generator, a naive history scanner and an
//! exhaustive rule enumerator with its own dominance pruning.

#![allow(dead_code)]

use std::cmp::Ordering;
use std::collections::BTreeSet;

use qarma::dataset::{load_dataset, AttrId, Dataset, ItemId};
use qarma::rule::{Mode, StoredRule};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const SHARED: &str = "p";

/// At most 8 users, 4 items, 2 attributes and 3 distinct values per pair.
pub fn random_dataset(seed: u64) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let users = rng.random_range(2..=8);
    let items = rng.random_range(2..=4);
    let second_attr = rng.random_bool(0.6);
    let mut lines = String::new();
    for u in 0..users {
        let mut tx = Vec::new();
        for i in 0..items {
            if !rng.random_bool(0.75) {
                continue;
            }
            for _ in 0..rng.random_range(1..=2) {
                let p = rng.random_range(1..=3);
                let attrs = if second_attr && rng.random_bool(0.7) {
                    format!("\"p\":{p},\"w\":{}", rng.random_range(1..=3) * 10)
                } else {
                    format!("\"p\":{p}")
                };
                tx.push(format!("{{\"i\":\"i{i}\",\"a\":{{{attrs}}}}}"));
            }
        }
        lines.push_str(&format!("{{\"u\":\"u{u}\",\"t\":[{}]}}\n", tx.join(",")));
    }
    load_dataset(lines.as_bytes(), SHARED).expect("generated dataset loads")
}

pub fn oracle_params(seed: u64) -> (f64, f64, Mode) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    let s = if rng.random_bool(0.5) { 0.25 } else { 0.5 };
    let c = if rng.random_bool(0.5) { 0.5 } else { 0.75 };
    let mode = if rng.random_bool(0.8) { Mode::Geq } else { Mode::Eq };
    (s, c, mode)
}

/// A condition on one history: every item present, and per quantified
/// (item, attribute) some transaction meeting the bound.
pub struct Condition<'a> {
    pub items: &'a [ItemId],
    pub quants: &'a [(ItemId, AttrId, f64)],
    /// Item whose bound is an equality instead of `>=`.
    pub exact: Option<ItemId>,
}

pub fn scan_count(ds: &Dataset, cond: &Condition) -> u64 {
    ds.histories
        .iter()
        .filter(|h| {
            cond.items.iter().all(|&i| h.transactions.iter().any(|t| t.item == i))
                && cond.quants.iter().all(|&(i, a, v)| {
                    h.transactions.iter().any(|t| {
                        t.item == i
                            && t.values
                                .iter()
                                .any(|&(attr, x)| attr == a && if cond.exact == Some(i) { x == v } else { x >= v })
                    })
                })
        })
        .count() as u64
}

#[derive(Clone, Debug, PartialEq)]
pub struct RefRule {
    pub antecedent: Vec<ItemId>,
    pub consequent: ItemId,
    /// Sorted by (item, attribute).
    pub quants: Vec<(ItemId, AttrId, f64)>,
    pub joint: u64,
    pub antecedent_count: u64,
    pub consequent_count: u64,
}

impl RefRule {
    fn cons_value(&self) -> f64 {
        self.quants
            .iter()
            .find(|q| q.0 == self.consequent)
            .map(|q| q.2)
            .unwrap()
    }

    fn ante_quants(&self) -> impl Iterator<Item = &(ItemId, AttrId, f64)> {
        self.quants.iter().filter(move |q| q.0 != self.consequent)
    }
}

pub fn from_stored(rules: &[StoredRule]) -> Vec<RefRule> {
    let mut out: Vec<RefRule> = rules
        .iter()
        .map(|s| {
            let c = s.metrics.counts.expect("engine rules carry counts");
            RefRule {
                antecedent: s.rule.antecedent.clone(),
                consequent: s.rule.consequent,
                quants: s.rule.quants.iter().map(|q| (q.item, q.attr, q.value)).collect(),
                joint: c.joint,
                antecedent_count: c.antecedent,
                consequent_count: c.consequent,
            }
        })
        .collect();
    sort_ref(&mut out);
    out
}

pub fn sort_ref(rules: &mut [RefRule]) {
    rules.sort_by(|a, b| {
        (a.consequent, &a.antecedent)
            .cmp(&(b.consequent, &b.antecedent))
            .then_with(|| a.quants.partial_cmp(&b.quants).unwrap())
    });
}

fn distinct(ds: &Dataset, item: ItemId, attr: AttrId) -> Vec<f64> {
    let mut v: Vec<f64> = ds
        .histories
        .iter()
        .flat_map(|h| &h.transactions)
        .filter(|t| t.item == item)
        .flat_map(|t| t.values.iter().filter(|x| x.0 == attr).map(|x| x.1))
        .collect();
    v.sort_by(f64::total_cmp);
    v.dedup();
    v
}

fn attrs_of(ds: &Dataset, item: ItemId) -> Vec<AttrId> {
    let set: BTreeSet<AttrId> = ds
        .histories
        .iter()
        .flat_map(|h| &h.transactions)
        .filter(|t| t.item == item)
        .flat_map(|t| t.values.iter().map(|x| x.0))
        .collect();
    set.into_iter().collect()
}

pub struct Reference<'a> {
    ds: &'a Dataset,
    shared: AttrId,
    mode: Mode,
}

impl<'a> Reference<'a> {
    pub fn new(ds: &'a Dataset, mode: Mode) -> Self {
        Reference {
            ds,
            shared: ds.shared_attr,
            mode,
        }
    }

    /// A `>=` bound at the smallest observed value that holds on every
    /// history containing the item.
    fn vacuous(&self, q: &(ItemId, AttrId, f64)) -> bool {
        let grid = distinct(self.ds, q.0, q.1);
        grid.first() == Some(&q.2)
            && scan_count(
                self.ds,
                &Condition {
                    items: &[q.0],
                    quants: &[*q],
                    exact: None,
                },
            ) == scan_count(
                self.ds,
                &Condition {
                    items: &[q.0],
                    quants: &[],
                    exact: None,
                },
            )
    }

    fn dominates(&self, r1: &RefRule, r: &RefRule, vac: &dyn Fn(&(ItemId, AttrId, f64)) -> bool) -> bool {
        if r1.consequent != r.consequent || !r1.antecedent.iter().all(|i| r.antecedent.contains(i)) {
            return false;
        }
        let ok_value = match self.mode {
            Mode::Geq => r1.cons_value() >= r.cons_value(),
            Mode::Eq => r1.cons_value() == r.cons_value(),
        };
        if !ok_value {
            return false;
        }
        let structural = r1
            .ante_quants()
            .all(|w| vac(w) || r.ante_quants().any(|v| v.0 == w.0 && v.1 == w.1 && w.2 <= v.2));
        // support and confidence as exact rationals
        structural
            && r1.joint >= r.joint
            && (r.joint as u128) * (r1.antecedent_count as u128) <= (r1.joint as u128) * (r.antecedent_count as u128)
    }

    fn key_cmp(&self, a: &RefRule, b: &RefRule) -> Ordering {
        let rank = |q: &(ItemId, AttrId, f64)| (q.0, (q.1 != self.shared, q.1));
        a.consequent
            .cmp(&b.consequent)
            .then_with(|| a.antecedent.cmp(&b.antecedent))
            .then_with(|| a.quants.len().cmp(&b.quants.len()))
            .then_with(|| {
                for (x, y) in a.quants.iter().zip(&b.quants) {
                    let o = rank(x).cmp(&rank(y)).then_with(|| x.2.total_cmp(&y.2));
                    if o != Ordering::Equal {
                        return o;
                    }
                }
                Ordering::Equal
            })
    }

    /// Every valid rule with at least one antecedent quantification, then
    /// the ones no other valid rule beats.
    pub fn mine(&self, min_support: f64, min_confidence: f64, max_len: usize) -> Vec<RefRule> {
        let ds = self.ds;
        let n = ds.num_users() as f64;
        let items: Vec<ItemId> = (0..ds.catalog.len() as ItemId).collect();
        let mut valid = Vec::new();
        for mask in 1u32..(1 << items.len()) {
            let set: Vec<ItemId> = items.iter().copied().filter(|&i| mask & (1 << i) != 0).collect();
            if set.len() < 2 || set.len() > max_len {
                continue;
            }
            if (scan_count(
                ds,
                &Condition {
                    items: &set,
                    quants: &[],
                    exact: None,
                },
            ) as f64)
                / n
                < min_support
            {
                continue;
            }
            for &cons in &set {
                let ante: Vec<ItemId> = set.iter().copied().filter(|&i| i != cons).collect();
                let pairs: Vec<(ItemId, AttrId, Vec<f64>)> = ante
                    .iter()
                    .flat_map(|&j| attrs_of(ds, j).into_iter().map(move |a| (j, a)))
                    .map(|(j, a)| (j, a, distinct(ds, j, a)))
                    .collect();
                for cv in distinct(ds, cons, self.shared) {
                    let exact = (self.mode == Mode::Eq).then_some(cons);
                    let cons_q = [(cons, self.shared, cv)];
                    let cons_count = scan_count(
                        ds,
                        &Condition {
                            items: &[cons],
                            quants: &cons_q,
                            exact,
                        },
                    );
                    let mut choice = vec![0usize; pairs.len()];
                    loop {
                        let mut quants: Vec<(ItemId, AttrId, f64)> = pairs
                            .iter()
                            .zip(&choice)
                            .filter(|(_, &c)| c > 0)
                            .map(|((j, a, vals), &c)| (*j, *a, vals[c - 1]))
                            .collect();
                        if !quants.is_empty() {
                            let ante_count = scan_count(
                                ds,
                                &Condition {
                                    items: &ante,
                                    quants: &quants,
                                    exact,
                                },
                            );
                            quants.push(cons_q[0]);
                            let joint = scan_count(
                                ds,
                                &Condition {
                                    items: &set,
                                    quants: &quants,
                                    exact,
                                },
                            );
                            quants.sort_by_key(|x| (x.0, x.1));
                            if joint as f64 / n >= min_support && joint as f64 / ante_count as f64 >= min_confidence {
                                valid.push(RefRule {
                                    antecedent: ante.clone(),
                                    consequent: cons,
                                    quants,
                                    joint,
                                    antecedent_count: ante_count,
                                    consequent_count: cons_count,
                                });
                            }
                        }
                        // odometer over "unquantified or one of the grid values"
                        let mut pos = 0;
                        loop {
                            if pos == choice.len() {
                                break;
                            }
                            choice[pos] += 1;
                            if choice[pos] <= pairs[pos].2.len() {
                                break;
                            }
                            choice[pos] = 0;
                            pos += 1;
                        }
                        if pos == choice.len() {
                            break;
                        }
                    }
                }
            }
        }

        let vacuous_cache: std::collections::HashMap<(ItemId, AttrId, u64), bool> = valid
            .iter()
            .flat_map(|r| r.quants.iter())
            .map(|q| ((q.0, q.1, q.2.to_bits()), self.vacuous(q)))
            .collect();
        let vac = |q: &(ItemId, AttrId, f64)| vacuous_cache[&(q.0, q.1, q.2.to_bits())];
        let beats = |x: &RefRule, y: &RefRule| {
            self.dominates(x, y, &vac) && (!self.dominates(y, x, &vac) || self.key_cmp(x, y) != Ordering::Greater)
        };
        let mut kept: Vec<RefRule> = valid
            .iter()
            .enumerate()
            .filter(|(i, r)| {
                !valid
                    .iter()
                    .enumerate()
                    .any(|(j, other)| *i != j && other.consequent == r.consequent && beats(other, r) && other != *r)
            })
            .map(|(_, r)| r.clone())
            .collect();
        sort_ref(&mut kept);
        kept
    }
}

pub const EXAMPLE_LINES: &str = r#"{"u":"1","t":[{"i":"a","a":{"p":1.0}},{"i":"b","a":{"p":1.0}},{"i":"c","a":{"p":0.3}}]}
{"u":"2","t":[{"i":"a","a":{"p":1.0}},{"i":"b","a":{"p":1.0}},{"i":"c","a":{"p":0.2}}]}
{"u":"3","t":[{"i":"a","a":{"p":1.0}},{"i":"b","a":{"p":1.0}},{"i":"c","a":{"p":0.1}}]}
{"u":"4","t":[{"i":"a","a":{"p":1.0}},{"i":"b","a":{"p":0.6}},{"i":"c","a":{"p":0.3}}]}
{"u":"5","t":[{"i":"a","a":{"p":0.9}},{"i":"b","a":{"p":0.5}},{"i":"c","a":{"p":0.2}}]}
{"u":"6","t":[{"i":"a","a":{"p":0.8}},{"i":"b","a":{"p":0.5}},{"i":"c","a":{"p":0.2}}]}
"#;

pub fn example() -> Dataset {
    load_dataset(EXAMPLE_LINES.as_bytes(), SHARED).expect("example loads")
}

/// Canonical six-digit rule lines, the form compared across execution modes.
pub fn rules_text(rules: &[StoredRule], catalog: &qarma::dataset::Catalog) -> String {
    let mut buf = Vec::new();
    qarma::rule::write_rules(&mut buf, rules, catalog, qarma::rule::Precision::Sig6).expect("in-memory write");
    String::from_utf8(buf).expect("utf8")
}

pub fn write_temp_dataset(ds: &Dataset) -> tempfile::NamedTempFile {
    let mut file = tempfile::NamedTempFile::new().expect("temp file");
    ds.write_histories(file.as_file_mut()).expect("write dataset");
    file
}

/// Starts a loopback worker thread and returns its address.
pub fn spawn_worker(data: &std::path::Path, options: qarma::distributed::WorkerOptions) -> String {
    let listener = std::net::TcpListener::bind("127.0.0.1:0").expect("bind loopback");
    let addr = listener.local_addr().expect("local addr").to_string();
    let data = data.to_path_buf();
    std::thread::spawn(move || {
        let _ = qarma::distributed::serve_worker(listener, &data, options);
    });
    addr
}

/// A random well-formed rule whose quantification values sit on the
/// dataset's grid. `None` when the dataset has fewer than two items.
pub fn random_rule(ds: &Dataset, grid: &qarma::dataset::ValueIndex, rng: &mut ChaCha8Rng) -> Option<qarma::rule::Rule> {
    use qarma::rule::{Quantification, Rule};
    let items: Vec<ItemId> = ds.catalog.items().map(|(id, _)| id).collect();
    if items.len() < 2 {
        return None;
    }
    let consequent = items[rng.random_range(0..items.len())];
    let antecedent: Vec<ItemId> = items
        .iter()
        .copied()
        .filter(|&i| i != consequent && rng.random_bool(0.6))
        .collect();
    let mut quants = Vec::new();
    for &i in antecedent.iter().chain(std::iter::once(&consequent)) {
        for attr in ds.catalog.item(i).quantitative() {
            if i == consequent && attr != ds.shared_attr {
                continue;
            }
            let values = grid.get(i, attr).unwrap_or(&[]);
            if !values.is_empty() && rng.random_bool(0.5) {
                quants.push(Quantification::new(i, attr, values[rng.random_range(0..values.len())]));
            }
        }
    }
    let mode = if rng.random_bool(0.3) { Mode::Eq } else { Mode::Geq };
    Some(Rule::new(antecedent, consequent, quants, mode, ds.shared_attr).expect("well-formed"))
}

/// Naive counts of (joint, antecedent, consequent) for `rule`.
pub fn scan_counts(ds: &Dataset, rule: &qarma::rule::Rule) -> (u64, u64, u64) {
    let exact = (rule.mode == Mode::Eq).then_some(rule.consequent);
    let all_items = rule.items();
    let all_q: Vec<_> = rule.quants.iter().map(|q| (q.item, q.attr, q.value)).collect();
    let ante_q: Vec<_> = rule.antecedent_quants().map(|q| (q.item, q.attr, q.value)).collect();
    let cons_q: Vec<_> = rule
        .consequent_quant()
        .map(|q| (q.item, q.attr, q.value))
        .into_iter()
        .collect();
    let joint = scan_count(
        ds,
        &Condition {
            items: &all_items,
            quants: &all_q,
            exact,
        },
    );
    let antecedent = scan_count(
        ds,
        &Condition {
            items: &rule.antecedent,
            quants: &ante_q,
            exact,
        },
    );
    let consequent = scan_count(
        ds,
        &Condition {
            items: &[rule.consequent],
            quants: &cons_q,
            exact,
        },
    );
    (joint, antecedent, consequent)
}
