//! The level-synchronized quantification search.
//!
//! Frequent itemsets are processed by size. Within a level, itemsets are
//! split into batches; each batch expands its base rules against a
//! read-only snapshot of the rules accepted so far and collects its own
//! additions. The additions are merged at the level boundary in batch
//! order, so the result does not depend on worker count or batch size.

mod expand;
mod report;

use std::collections::HashMap;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::dataset::{augment_negated, AttrId, Dataset, ItemId, ValueIndex};
use crate::error::{Error, Result};
use crate::itemsets::{default_ord, min_count, mine_frequent, Itemset, OrdMaps};
use crate::rule::{final_prune, widest_filter, Dominance, Ltf, Metric, Mode, RuleStore, StoredRule};
use crate::support::SupportIndex;

pub use expand::{base_rules, eligible_attr, eligible_item, BaseRule};
pub use report::{AuditCounts, LevelReport, RunReport};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EngineConfig {
    pub min_support: f64,
    /// Minimum value per metric; every one must be met.
    pub thresholds: Vec<(Metric, f64)>,
    pub ltf: Vec<Metric>,
    pub shared_attr: String,
    pub max_len: usize,
    pub workers: usize,
    pub batch: usize,
    pub mode: Mode,
    pub widest: bool,
    pub negate_attrs: Vec<String>,
    /// Re-checks every pruned value range; slow, meant for tests.
    #[serde(default)]
    pub audit: bool,
}

impl Default for EngineConfig {
    fn default() -> Self {
        EngineConfig {
            min_support: 0.1,
            thresholds: vec![(Metric::Confidence, 0.7)],
            ltf: vec![Metric::Confidence],
            shared_attr: "p".into(),
            max_len: 3,
            workers: 1,
            batch: 128,
            mode: Mode::Geq,
            widest: false,
            negate_attrs: Vec::new(),
            audit: false,
        }
    }
}

impl EngineConfig {
    pub fn validate(&self) -> Result<()> {
        let fraction = |v: f64| (0.0..=1.0).contains(&v);
        if !(self.min_support > 0.0 && self.min_support <= 1.0) {
            return Err(Error::Config(format!(
                "minimum support {} is outside (0, 1]",
                self.min_support
            )));
        }
        if self.thresholds.is_empty() {
            return Err(Error::Config("at least one metric threshold is required".into()));
        }
        for &(m, v) in &self.thresholds {
            if v.is_nan() || (matches!(m, Metric::Support | Metric::Confidence | Metric::ConsSupp) && !fraction(v)) {
                return Err(Error::Config(format!("threshold {v} for {m} is out of range")));
            }
        }
        if self.ltf.is_empty() {
            return Err(Error::Config(
                "the interestingness comparison needs at least one metric".into(),
            ));
        }
        if self.workers == 0 || self.batch == 0 || self.max_len == 0 {
            return Err(Error::Config("workers, batch and max_len must be at least 1".into()));
        }
        Ok(())
    }
}

/// Everything derived from a dataset once, before any level runs.
#[derive(Debug)]
pub struct Miner {
    pub dataset: Dataset,
    pub values: ValueIndex,
    pub index: SupportIndex,
    pub ord: OrdMaps,
    pub dominance: Dominance,
    pub config: EngineConfig,
    min_count: usize,
}

/// Runs the base rules of a level's batches and returns each batch's
/// additions, in batch order.
pub trait LevelExecutor {
    fn run_level(
        &mut self,
        miner: &Miner,
        k: usize,
        batches: &[Vec<Itemset>],
        snapshot: &RuleStore,
    ) -> Result<Vec<Vec<StoredRule>>>;
}

/// In-process execution on a pool of `config.workers` threads, or
/// sequentially when the `parallel` feature is off.
#[derive(Debug, Default)]
pub struct LocalExecutor {
    audit: AuditCounts,
}

impl LocalExecutor {
    pub fn audit(&self) -> AuditCounts {
        self.audit
    }
}

impl LevelExecutor for LocalExecutor {
    fn run_level(
        &mut self,
        miner: &Miner,
        _k: usize,
        batches: &[Vec<Itemset>],
        snapshot: &RuleStore,
    ) -> Result<Vec<Vec<StoredRule>>> {
        let results = run_batches(miner, batches, snapshot)?;
        Ok(results
            .into_iter()
            .map(|(rules, audit)| {
                self.audit += audit;
                rules
            })
            .collect())
    }
}

#[cfg(feature = "parallel")]
fn run_batches(
    miner: &Miner,
    batches: &[Vec<Itemset>],
    snapshot: &RuleStore,
) -> Result<Vec<(Vec<StoredRule>, AuditCounts)>> {
    use rayon::prelude::*;

    if miner.config.workers <= 1 || batches.len() <= 1 {
        return Ok(run_sequential(miner, batches, snapshot));
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(miner.config.workers)
        .build()
        .map_err(|e| Error::Config(format!("cannot start worker pool: {e}")))?;
    Ok(pool.install(|| batches.par_iter().map(|b| miner.process_batch(b, snapshot)).collect()))
}

#[cfg(not(feature = "parallel"))]
fn run_batches(
    miner: &Miner,
    batches: &[Vec<Itemset>],
    snapshot: &RuleStore,
) -> Result<Vec<(Vec<StoredRule>, AuditCounts)>> {
    Ok(run_sequential(miner, batches, snapshot))
}

fn run_sequential(
    miner: &Miner,
    batches: &[Vec<Itemset>],
    snapshot: &RuleStore,
) -> Vec<(Vec<StoredRule>, AuditCounts)> {
    batches.iter().map(|b| miner.process_batch(b, snapshot)).collect()
}

pub struct MineOutput {
    pub rules: Vec<StoredRule>,
    pub report: RunReport,
}

impl Miner {
    /// Applies the configured negations and builds every index.
    pub fn new(dataset: Dataset, config: EngineConfig) -> Result<Self> {
        config.validate()?;
        if dataset.shared_attr_name() != config.shared_attr {
            return Err(Error::Config(format!(
                "dataset shared attribute is `{}`, configuration names `{}`",
                dataset.shared_attr_name(),
                config.shared_attr
            )));
        }
        let mut dataset = dataset;
        for attr in &config.negate_attrs {
            dataset = augment_negated(&dataset, attr)?;
        }
        let values = ValueIndex::build(&dataset);
        let index = SupportIndex::build(&dataset, &values);
        let ord = default_ord(&dataset);
        let dominance = dominance_for(&index, &ord, Ltf(config.ltf.clone()));
        let min_count = min_count(config.min_support, index.universe());
        Ok(Miner {
            dataset,
            values,
            index,
            ord,
            dominance,
            config,
            min_count,
        })
    }

    pub fn shared_attr(&self) -> AttrId {
        self.dataset.shared_attr
    }

    pub fn min_count(&self) -> usize {
        self.min_count
    }

    /// Frequent itemsets by size, timed.
    pub fn frequent(&self) -> Vec<Vec<(Itemset, usize)>> {
        mine_frequent(&self.index, &self.ord, self.config.min_support, self.config.max_len)
    }

    /// Expands every base rule of the batch's itemsets into a fresh store.
    pub fn process_batch(&self, itemsets: &[Itemset], snapshot: &RuleStore) -> (Vec<StoredRule>, AuditCounts) {
        let mut local = RuleStore::new();
        let mut audit = AuditCounts::default();
        for set in itemsets {
            for base in base_rules(set).unwrap_or_default() {
                expand::expand_rule(self, &base, snapshot, &mut local, &mut audit);
            }
        }
        (local.into_rules(), audit)
    }

    pub fn mine(&self) -> Result<MineOutput> {
        let mut exec = LocalExecutor::default();
        let mut out = self.mine_with(&mut exec)?;
        out.report.audit = exec.audit();
        Ok(out)
    }

    pub fn mine_with(&self, exec: &mut dyn LevelExecutor) -> Result<MineOutput> {
        if self.index.universe() == 0 {
            return Err(Error::EmptyDataset);
        }
        let started = Instant::now();
        let levels = self.frequent();
        let itemset_secs = started.elapsed().as_secs_f64();

        let mut global = RuleStore::new();
        let mut level_reports = Vec::new();
        for (size_index, level) in levels.iter().enumerate().skip(1) {
            let k = size_index + 1;
            let itemsets: Vec<Itemset> = level.iter().map(|(s, _)| s.clone()).collect();
            let batches: Vec<Vec<Itemset>> = itemsets.chunks(self.config.batch).map(<[_]>::to_vec).collect();
            let additions = exec.run_level(self, k, &batches, &global)?;
            let before: usize = global.len();
            let mut accepted = 0usize;
            for rules in additions {
                for s in rules {
                    if global.insert_if_undominated(s.rule, s.metrics, &self.dominance) {
                        accepted += 1;
                    }
                }
            }
            log::info!(
                "level {k}: {} itemsets, {} rules ({} before)",
                itemsets.len(),
                global.len(),
                before
            );
            level_reports.push(LevelReport {
                k,
                itemsets: itemsets.len(),
                rules_added: accepted,
            });
        }

        let mut rules = final_prune(global.into_rules(), &self.dominance);
        if self.config.widest {
            rules = widest_filter(rules, &self.dominance);
        }
        let report = RunReport::new(
            started.elapsed().as_secs_f64(),
            itemset_secs,
            level_reports,
            &self.config,
        );
        Ok(MineOutput { rules, report })
    }
}

/// Convenience: build a [`Miner`] and run it in-process.
pub fn mine(dataset: Dataset, config: EngineConfig) -> Result<(Miner, MineOutput)> {
    let miner = Miner::new(dataset, config)?;
    let out = miner.mine()?;
    Ok((miner, out))
}

/// Dominance parameters derived from the index: which minimum grid values
/// constrain nothing, and the attribute ranks used for tie-breaking.
pub fn dominance_for(index: &SupportIndex, ord: &OrdMaps, ltf: Ltf) -> Dominance {
    let mut vacuous = HashMap::new();
    for (&(item, attr), grid) in index.values().pairs() {
        if index.at_least(item, attr, 0) == index.presence(item) {
            vacuous.insert((item, attr), grid[0]);
        }
    }
    let attr_rank: HashMap<(ItemId, AttrId), u32> = ord.attr_ranks().clone();
    Dominance {
        ltf,
        vacuous,
        attr_rank,
    }
}
