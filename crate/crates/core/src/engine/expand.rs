use super::{AuditCounts, Miner};
use crate::dataset::{AttrId, ItemId};
use crate::error::{Error, Result};
use crate::itemsets::{Itemset, OrdMaps};
use crate::rule::{Counts, Metric, Mode, Quantification, Rule, RuleMetrics, RuleStore};
use crate::support::UserBitset;

/// An unquantified rule `antecedent -> consequent`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BaseRule {
    /// Sorted by item order.
    pub antecedent: Vec<ItemId>,
    pub consequent: ItemId,
}

/// One base rule per choice of consequent item.
pub fn base_rules(itemset: &Itemset) -> Result<Vec<BaseRule>> {
    if itemset.len() < 2 {
        return Err(Error::Config("base rules need an itemset of at least two items".into()));
    }
    Ok(itemset
        .iter()
        .map(|&consequent| BaseRule {
            antecedent: itemset.iter().copied().filter(|&i| i != consequent).collect(),
            consequent,
        })
        .collect())
}

fn max_quantified_item(quants: &[Quantification], base: &BaseRule, ord: &OrdMaps) -> Option<u32> {
    quants
        .iter()
        .filter(|q| q.item != base.consequent)
        .map(|q| ord.item_ord(q.item))
        .max()
}

/// Whether quantifications on `item` may still be added to `quants`
/// without producing a set reachable along another path.
pub fn eligible_item(item: ItemId, quants: &[Quantification], base: &BaseRule, ord: &OrdMaps) -> bool {
    max_quantified_item(quants, base, ord).is_none_or(|m| ord.item_ord(item) >= m)
}

pub fn eligible_attr(item: ItemId, attr: AttrId, quants: &[Quantification], base: &BaseRule, ord: &OrdMaps) -> bool {
    if !eligible_item(item, quants, base, ord) {
        return false;
    }
    let rank = ord.attr_ord(item, attr);
    quants
        .iter()
        .filter(|q| q.item == item && q.item != base.consequent)
        .all(|q| ord.attr_ord(item, q.attr) < rank)
}

struct Entry {
    quants: Vec<Quantification>,
    joint: UserBitset,
    antecedent: UserBitset,
}

/// Expands one base rule, adding qualifying undominated rules to `local`.
pub(super) fn expand_rule(
    miner: &Miner,
    base: &BaseRule,
    snapshot: &RuleStore,
    local: &mut RuleStore,
    audit: &mut AuditCounts,
) {
    let idx = &miner.index;
    let cfg = &miner.config;
    let shared = miner.shared_attr();
    let min_count = miner.min_count();
    let universe = idx.universe() as u64;

    let mut antecedent_bits = UserBitset::ones(idx.universe());
    for &i in &base.antecedent {
        antecedent_bits.and_assign(idx.presence(i));
    }

    // A lower consequent value matching the same histories only yields
    // rules dominated by their counterparts one level up, unless
    // consequent support itself is being compared.
    let uses_cons_supp = cfg.ltf.contains(&Metric::ConsSupp) || cfg.thresholds.iter().any(|t| t.0 == Metric::ConsSupp);
    let may_skip = cfg.mode == Mode::Geq && !uses_cons_supp;
    let mut previous: Option<UserBitset> = None;

    let levels = idx.num_levels(base.consequent, shared);
    for level in (0..levels).rev() {
        let cons_bits = match cfg.mode {
            Mode::Geq => idx.at_least(base.consequent, shared, level),
            Mode::Eq => idx.exactly(base.consequent, shared, level),
        };
        let joint = antecedent_bits.and(cons_bits);
        if joint.count() < min_count {
            continue;
        }
        if may_skip && previous.as_ref() == Some(&joint) {
            continue;
        }
        previous = Some(joint.clone());
        let cons_count = cons_bits.count() as u64;
        let cons_value = miner.values.grid(base.consequent, shared)[level];

        let mut queue = vec![Entry {
            quants: vec![Quantification::new(base.consequent, shared, cons_value)],
            joint,
            antecedent: antecedent_bits.clone(),
        }];
        let mut head = 0;
        while head < queue.len() {
            let mut pushed = Vec::new();
            let entry = &queue[head];
            head += 1;
            for &item in &base.antecedent {
                if !eligible_item(item, &entry.quants, base, &miner.ord) {
                    continue;
                }
                for &attr in miner.ord.attrs(item) {
                    if !eligible_attr(item, attr, &entry.quants, base, &miner.ord) {
                        continue;
                    }
                    let grid = miner.values.grid(item, attr);
                    for (l, &value) in grid.iter().enumerate() {
                        let bits = idx.at_least(item, attr, l);
                        let joint_count = entry.joint.and_count(bits);
                        if joint_count < min_count {
                            audit.breaks += 1;
                            if cfg.audit {
                                let violated = (l + 1..grid.len())
                                    .any(|m| entry.joint.and_count(idx.at_least(item, attr, m)) >= min_count);
                                if violated {
                                    audit.violations += 1;
                                }
                            }
                            break;
                        }
                        let joint = entry.joint.and(bits);
                        let antecedent = entry.antecedent.and(bits);
                        let mut quants = entry.quants.clone();
                        quants.push(Quantification::new(item, attr, value));

                        let counts = Counts {
                            joint: joint_count as u64,
                            antecedent: antecedent.count() as u64,
                            consequent: cons_count,
                            universe,
                        };
                        consider(miner, base, &quants, counts, snapshot, local);
                        pushed.push(Entry {
                            quants,
                            joint,
                            antecedent,
                        });
                    }
                }
            }
            queue.extend(pushed);
        }
    }
}

fn consider(
    miner: &Miner,
    base: &BaseRule,
    quants: &[Quantification],
    counts: Counts,
    snapshot: &RuleStore,
    local: &mut RuleStore,
) {
    let Ok(metrics) = RuleMetrics::from_counts(counts) else {
        return;
    };
    if !meets_thresholds(&metrics, &miner.config.thresholds) {
        return;
    }
    let rule = Rule::new(
        base.antecedent.clone(),
        base.consequent,
        quants.to_vec(),
        miner.config.mode,
        miner.shared_attr(),
    )
    .expect("engine builds well-formed rules");
    if snapshot.is_beaten(&rule, &metrics, &miner.dominance) {
        return;
    }
    local.insert_if_undominated(rule, metrics, &miner.dominance);
}

pub(crate) fn meets_thresholds(m: &RuleMetrics, thresholds: &[(crate::rule::Metric, f64)]) -> bool {
    thresholds.iter().all(|&(metric, min)| m.get(metric) >= min)
}
