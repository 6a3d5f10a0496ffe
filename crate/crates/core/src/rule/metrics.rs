use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Raw history counts behind a rule's metrics.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Counts {
    /// Histories matching antecedent and consequent.
    pub joint: u64,
    /// Histories matching the antecedent conditions.
    pub antecedent: u64,
    /// Histories matching the consequent condition alone.
    pub consequent: u64,
    pub universe: u64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RuleMetrics {
    pub support: f64,
    pub confidence: f64,
    pub cons_supp: f64,
    /// `f64::INFINITY` when confidence is 1.
    pub conviction: f64,
    pub lift: f64,
    pub leverage: f64,
    pub counts: Option<Counts>,
}

impl RuleMetrics {
    pub fn from_counts(counts: Counts) -> Result<Self> {
        let Counts {
            joint,
            antecedent,
            consequent,
            universe,
        } = counts;
        if universe == 0 {
            return Err(Error::EmptyDataset);
        }
        if antecedent == 0 {
            return Err(Error::UndefinedConfidence);
        }
        if consequent == 0 {
            return Err(Error::UndefinedLift);
        }
        let n = universe as f64;
        let support = joint as f64 / n;
        let confidence = joint as f64 / antecedent as f64;
        let cons_supp = consequent as f64 / n;
        let conviction = if joint == antecedent {
            f64::INFINITY
        } else {
            (1.0 - cons_supp) / (1.0 - confidence)
        };
        Ok(RuleMetrics {
            support,
            confidence,
            cons_supp,
            conviction,
            lift: confidence / cons_supp,
            leverage: support - (antecedent as f64 / n) * cons_supp,
            counts: Some(counts),
        })
    }

    pub fn get(&self, metric: Metric) -> f64 {
        match metric {
            Metric::Support => self.support,
            Metric::Confidence => self.confidence,
            Metric::ConsSupp => self.cons_supp,
            Metric::Conviction => self.conviction,
            Metric::Lift => self.lift,
            Metric::Leverage => self.leverage,
        }
    }

    /// Orders `metric` of two rules. Exact rational comparison when both
    /// carry counts over the same universe, float comparison otherwise.
    pub fn compare(&self, other: &RuleMetrics, metric: Metric) -> Ordering {
        if let (Some(a), Some(b)) = (self.counts, other.counts) {
            if a.universe == b.universe {
                if let (Some(x), Some(y)) = (ratio(a, metric), ratio(b, metric)) {
                    return x.cmp(&y);
                }
            }
        }
        self.get(metric).total_cmp(&other.get(metric))
    }
}

/// A non-negative-denominator fraction; `den == 0` stands for +infinity.
#[derive(Clone, Copy, Debug)]
struct Ratio {
    num: i128,
    den: i128,
}

impl Ratio {
    fn cmp(&self, other: &Ratio) -> Ordering {
        match (self.den == 0, other.den == 0) {
            (true, true) => Ordering::Equal,
            (true, false) => Ordering::Greater,
            (false, true) => Ordering::Less,
            (false, false) => (self.num * other.den).cmp(&(other.num * self.den)),
        }
    }
}

fn ratio(c: Counts, metric: Metric) -> Option<Ratio> {
    let (j, a, s, n) = (
        c.joint as i128,
        c.antecedent as i128,
        c.consequent as i128,
        c.universe as i128,
    );
    if a == 0 || s == 0 || n == 0 {
        return None;
    }
    Some(match metric {
        Metric::Support => Ratio { num: j, den: n },
        Metric::Confidence => Ratio { num: j, den: a },
        Metric::ConsSupp => Ratio { num: s, den: n },
        Metric::Conviction => Ratio {
            num: (n - s) * a,
            den: n * (a - j),
        },
        Metric::Lift => Ratio { num: j * n, den: a * s },
        Metric::Leverage => Ratio {
            num: j * n - a * s,
            den: n * n,
        },
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    Support,
    Confidence,
    ConsSupp,
    Conviction,
    Lift,
    Leverage,
}

impl Metric {
    pub const ALL: [Metric; 6] = [
        Metric::Support,
        Metric::Confidence,
        Metric::ConsSupp,
        Metric::Conviction,
        Metric::Lift,
        Metric::Leverage,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Metric::Support => "support",
            Metric::Confidence => "confidence",
            Metric::ConsSupp => "cons_supp",
            Metric::Conviction => "conviction",
            Metric::Lift => "lift",
            Metric::Leverage => "leverage",
        }
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Metric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Metric::ALL
            .into_iter()
            .find(|m| m.name() == s.trim())
            .ok_or_else(|| Error::Config(format!("unknown metric `{s}`")))
    }
}

/// "Less than" formula over a list of metrics: `LTF(r, r')` holds when
/// every listed metric of `r` is `<=` that of `r'`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Ltf(pub Vec<Metric>);

impl Default for Ltf {
    fn default() -> Self {
        Ltf(vec![Metric::Confidence])
    }
}

impl Ltf {
    pub fn holds(&self, r: &RuleMetrics, r_prime: &RuleMetrics) -> bool {
        self.0.iter().all(|&m| r.compare(r_prime, m) != Ordering::Greater)
    }

    pub fn parse(list: &str) -> Result<Self> {
        let metrics = list
            .split(',')
            .filter(|s| !s.trim().is_empty())
            .map(str::parse)
            .collect::<Result<Vec<_>>>()?;
        if metrics.is_empty() {
            return Err(Error::Config("empty LTF metric list".into()));
        }
        Ok(Ltf(metrics))
    }
}
