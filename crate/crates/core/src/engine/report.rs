use std::ops::AddAssign;

use serde::{Deserialize, Serialize};

use super::EngineConfig;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LevelReport {
    pub k: usize,
    pub itemsets: usize,
    pub rules_added: usize,
}

/// Pruned value ranges and, when auditing, how many of them hid a value
/// that would have met the support threshold.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AuditCounts {
    pub breaks: u64,
    pub violations: u64,
}

impl AddAssign for AuditCounts {
    fn add_assign(&mut self, rhs: Self) {
        self.breaks += rhs.breaks;
        self.violations += rhs.violations;
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub total_secs: f64,
    pub itemset_secs: f64,
    pub levels: Vec<LevelReport>,
    pub workers: usize,
    pub batch: usize,
    /// How lift is normalised.
    pub lift_denominator: String,
    /// Where the widest-rule filter runs relative to pruning, if at all.
    pub widest: Option<String>,
    pub audit: AuditCounts,
}

impl RunReport {
    pub fn new(total_secs: f64, itemset_secs: f64, levels: Vec<LevelReport>, config: &EngineConfig) -> Self {
        RunReport {
            total_secs,
            itemset_secs,
            levels,
            workers: config.workers,
            batch: config.batch,
            lift_denominator: "consequent support fraction".into(),
            widest: config.widest.then(|| "after dominance pruning".into()),
            audit: AuditCounts::default(),
        }
    }

    pub fn rules_added(&self) -> usize {
        self.levels.iter().map(|l| l.rules_added).sum()
    }
}
