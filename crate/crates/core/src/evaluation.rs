//! Applying mined rules to datasets: coverage, anomaly detection sweeps,
//! reservation-price estimates and the discounting comparison.

use std::collections::HashMap;
use std::io::Write;

use crate::dataset::{Catalog, Dataset, ItemId, UserHistory};
use crate::error::{Error, Result};
use crate::generators::{DiscountPolicy, MarketState};
use crate::rule::{read_rules, write_rules, Mode, Precision, Rule, StoredRule};

/// Whether the antecedent conditions of `rule` hold on `history`.
pub fn fires(rule: &Rule, history: &UserHistory) -> bool {
    rule.antecedent.iter().all(|&i| history.contains(i))
        && rule
            .antecedent_quants()
            .all(|q| history.has_at_least(q.item, q.attr, q.value))
}

/// Whether the full rule condition holds on `history`.
pub fn covers(rule: &Rule, history: &UserHistory) -> bool {
    fires(rule, history)
        && history.contains(rule.consequent)
        && rule.consequent_quant().is_none_or(|q| match rule.mode {
            Mode::Geq => history.has_at_least(q.item, q.attr, q.value),
            Mode::Eq => history.has_exactly(q.item, q.attr, q.value),
        })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FiringResult {
    pub rule: usize,
    pub user: usize,
    pub fired: bool,
    /// The consequent value the rule implies, when it fired.
    pub implied: Option<f64>,
}

pub fn firings(rules: &[StoredRule], dataset: &Dataset) -> Vec<FiringResult> {
    let mut out = Vec::with_capacity(rules.len() * dataset.num_users());
    for (r, s) in rules.iter().enumerate() {
        for (u, h) in dataset.histories.iter().enumerate() {
            let fired = fires(&s.rule, h);
            out.push(FiringResult {
                rule: r,
                user: u,
                fired,
                implied: if fired { s.rule.consequent_value() } else { None },
            });
        }
    }
    out
}

/// Re-resolves rules mined on one catalog against another by name.
pub fn rebind(rules: &[StoredRule], from: &Catalog, to: &Dataset) -> Result<Vec<StoredRule>> {
    let mut buf = Vec::new();
    write_rules(&mut buf, rules, from, Precision::Full)?;
    read_rules(buf.as_slice(), &to.catalog, to.shared_attr)
}

/// Fraction of histories covered by at least one rule.
pub fn coverage(rules: &[StoredRule], dataset: &Dataset) -> Result<f64> {
    if dataset.num_users() == 0 {
        return Err(Error::EmptyDataset);
    }
    let covered = dataset
        .histories
        .iter()
        .filter(|h| rules.iter().any(|s| covers(&s.rule, h)))
        .count();
    Ok(covered as f64 / dataset.num_users() as f64)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Detection {
    pub detection: f64,
    pub false_alarm: f64,
    pub accuracy: f64,
}

fn flags(rules: &[&StoredRule], dataset: &Dataset) -> Vec<bool> {
    dataset
        .histories
        .iter()
        .map(|h| rules.iter().any(|s| fires(&s.rule, h)))
        .collect()
}

fn alarm_rules(rules: &[StoredRule], target: ItemId, threshold: f64) -> Vec<&StoredRule> {
    rules
        .iter()
        .filter(|s| s.rule.consequent == target && s.rule.consequent_value().is_some_and(|v| v >= threshold))
        .collect()
}

fn score(flagged: &[bool], labels: &[bool]) -> Detection {
    let positives = labels.iter().filter(|&&l| l).count();
    let negatives = labels.len() - positives;
    let tp = flagged.iter().zip(labels).filter(|(&f, &l)| f && l).count();
    let fp = flagged.iter().zip(labels).filter(|(&f, &l)| f && !l).count();
    let ratio = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
    Detection {
        detection: ratio(tp, positives),
        false_alarm: ratio(fp, negatives),
        accuracy: ratio(tp + negatives - fp, labels.len()),
    }
}

/// A history is flagged when some rule concluding `target >= threshold` or
/// higher fires on it. False alarms are counted per normal history.
pub fn detect(
    rules: &[StoredRule],
    test: &Dataset,
    labels: &[bool],
    target: ItemId,
    threshold: f64,
) -> Result<Detection> {
    check_labels(test, labels)?;
    Ok(score(&flags(&alarm_rules(rules, target, threshold), test), labels))
}

fn check_labels(test: &Dataset, labels: &[bool]) -> Result<()> {
    if labels.is_empty() {
        return Err(Error::Config("ground-truth labels are required".into()));
    }
    if labels.len() != test.num_users() {
        return Err(Error::Config(format!(
            "{} labels for {} histories",
            labels.len(),
            test.num_users()
        )));
    }
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RocPoint {
    pub conf_cut: f64,
    pub detection: Detection,
}

/// Detection at each confidence cut, keeping only rules at or above it.
pub fn roc(
    rules: &[StoredRule],
    test: &Dataset,
    labels: &[bool],
    target: ItemId,
    threshold: f64,
    cuts: &[f64],
) -> Result<Vec<RocPoint>> {
    check_labels(test, labels)?;
    let alarm = alarm_rules(rules, target, threshold);
    // one firing pass per rule, reused across cuts
    let fired: Vec<Vec<bool>> = alarm
        .iter()
        .map(|s| test.histories.iter().map(|h| fires(&s.rule, h)).collect())
        .collect();
    Ok(cuts
        .iter()
        .map(|&cut| {
            let mut flagged = vec![false; test.num_users()];
            for (s, f) in alarm.iter().zip(&fired) {
                if s.metrics.confidence >= cut {
                    for (dst, &x) in flagged.iter_mut().zip(f) {
                        *dst |= x;
                    }
                }
            }
            RocPoint {
                conf_cut: cut,
                detection: score(&flagged, labels),
            }
        })
        .collect())
}

pub fn write_roc<W: Write>(mut out: W, points: &[RocPoint]) -> Result<()> {
    for p in points {
        writeln!(
            out,
            "{},{},{},{}",
            sig6(p.conf_cut),
            sig6(p.detection.detection),
            sig6(p.detection.false_alarm),
            sig6(p.detection.accuracy)
        )?;
    }
    Ok(())
}

/// Six significant digits without trailing noise.
pub fn sig6(v: f64) -> String {
    let r = crate::rule::round_sig6(v);
    let s = format!("{r}");
    if r.is_finite() && r == r.trunc() && !s.contains('e') {
        format!("{r:.1}")
    } else {
        s
    }
}

/// The largest consequent value among rules on `item` with confidence at
/// least `min_conf` whose antecedent fires on `history`.
pub fn estimate_reservation_price(
    rules: &[StoredRule],
    history: &UserHistory,
    item: ItemId,
    min_conf: f64,
) -> Option<f64> {
    rules
        .iter()
        .filter(|s| s.rule.consequent == item && s.metrics.confidence >= min_conf)
        .filter(|s| fires(&s.rule, history))
        .filter_map(|s| s.rule.consequent_value())
        .reduce(f64::max)
}

/// Every (history index, item) estimate at once.
pub fn reservation_estimates(rules: &[StoredRule], dataset: &Dataset, min_conf: f64) -> HashMap<(usize, ItemId), f64> {
    let mut out: HashMap<(usize, ItemId), f64> = HashMap::new();
    for s in rules.iter().filter(|s| s.metrics.confidence >= min_conf) {
        let Some(v) = s.rule.consequent_value() else {
            continue;
        };
        for (u, h) in dataset.histories.iter().enumerate() {
            if fires(&s.rule, h) {
                let e = out.entry((u, s.rule.consequent)).or_insert(v);
                *e = e.max(v);
            }
        }
    }
    out
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DiscountRow {
    pub level: f64,
    pub baseline: f64,
    pub horizontal: f64,
    pub horizontal_delta: f64,
    pub personalized: f64,
    pub personalized_delta: f64,
}

/// Revenue over `cycles` further cycles under no discount, a flat cut and
/// a capped personalized discount, for each level.
pub fn report_discounting(
    state: &MarketState,
    dataset: &Dataset,
    rules: &[StoredRule],
    min_conf: f64,
    levels: &[f64],
    cycles: usize,
) -> Vec<DiscountRow> {
    let estimates = reservation_estimates(rules, dataset, min_conf);
    let users = dataset.user_index();
    let history_of: Vec<Option<usize>> = (0..state.config.n_users)
        .map(|u| users.get(&crate::generators::market_user_name(u)).copied())
        .collect();
    let items: Vec<Option<ItemId>> = (0..state.config.n_items)
        .map(|i| dataset.catalog.item_id(&crate::generators::market_item_name(i)))
        .collect();
    let estimate = |user: usize, item: usize| -> Option<f64> {
        let h = history_of[user]?;
        let i = items[item]?;
        estimates.get(&(h, i)).copied()
    };
    let baseline = state.run_discounting(DiscountPolicy::None, cycles, &estimate);
    levels
        .iter()
        .map(|&level| {
            let horizontal = state.run_discounting(DiscountPolicy::Horizontal(level), cycles, &estimate);
            let personalized = state.run_discounting(DiscountPolicy::Personalized(level), cycles, &estimate);
            DiscountRow {
                level,
                baseline,
                horizontal,
                horizontal_delta: 100.0 * (horizontal - baseline) / baseline,
                personalized,
                personalized_delta: 100.0 * (personalized - baseline) / baseline,
            }
        })
        .collect()
}

/// `discount,baseline,horizontal,horizontal_change_pct,personalized,personalized_change_pct`
pub fn write_discounting<W: Write>(mut out: W, rows: &[DiscountRow]) -> Result<()> {
    writeln!(
        out,
        "discount_pct,baseline,horizontal,horizontal_change_pct,personalized,personalized_change_pct"
    )?;
    for r in rows {
        writeln!(
            out,
            "{},{},{},{},{},{}",
            sig6(r.level * 100.0),
            sig6(r.baseline),
            sig6(r.horizontal),
            sig6(r.horizontal_delta),
            sig6(r.personalized),
            sig6(r.personalized_delta)
        )?;
    }
    Ok(())
}
