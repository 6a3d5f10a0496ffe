//! Rule lines: one JSON object per rule.
//!
//! ```text
//! {"B":["a"],"I":"b","Q":[["a","p",1.0],["b","p",1.0]],"mode":"geq","support":0.5,...}
//! ```

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use super::{Mode, Quantification, Rule, RuleMetrics, StoredRule};
use crate::dataset::Catalog;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Precision {
    /// Metrics rounded to 6 significant digits.
    Sig6,
    /// Shortest round-trip representation.
    Full,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Num {
    Value(f64),
    Text(String),
}

impl Num {
    fn of(v: f64, precision: Precision) -> Num {
        if v.is_infinite() && v > 0.0 {
            return Num::Text("inf".into());
        }
        Num::Value(match precision {
            Precision::Sig6 => round_sig6(v),
            Precision::Full => v,
        })
    }

    fn value(&self) -> Result<f64> {
        match self {
            Num::Value(v) => Ok(*v),
            Num::Text(s) if s == "inf" => Ok(f64::INFINITY),
            Num::Text(s) => Err(Error::MalformedRule(format!("bad number `{s}`"))),
        }
    }
}

pub fn round_sig6(v: f64) -> f64 {
    if v == 0.0 || !v.is_finite() {
        return v;
    }
    format!("{v:.5e}").parse().unwrap_or(v)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RuleLine {
    #[serde(rename = "B")]
    pub antecedent: Vec<String>,
    #[serde(rename = "I")]
    pub consequent: String,
    #[serde(rename = "Q")]
    pub quants: Vec<(String, String, f64)>,
    pub mode: String,
    pub support: Num,
    pub confidence: Num,
    pub cons_supp: Num,
    pub conviction: Num,
    pub lift: Num,
    pub leverage: Num,
}

impl RuleLine {
    pub fn from_rule(rule: &Rule, m: &RuleMetrics, catalog: &Catalog, precision: Precision) -> Self {
        RuleLine {
            antecedent: rule
                .antecedent
                .iter()
                .map(|&i| catalog.item_name(i).to_owned())
                .collect(),
            consequent: catalog.item_name(rule.consequent).to_owned(),
            quants: rule
                .quants
                .iter()
                .map(|q| {
                    (
                        catalog.item_name(q.item).to_owned(),
                        catalog.attr_name(q.attr).to_owned(),
                        q.value,
                    )
                })
                .collect(),
            mode: rule.mode.name().to_owned(),
            support: Num::of(m.support, precision),
            confidence: Num::of(m.confidence, precision),
            cons_supp: Num::of(m.cons_supp, precision),
            conviction: Num::of(m.conviction, precision),
            lift: Num::of(m.lift, precision),
            leverage: Num::of(m.leverage, precision),
        }
    }

    /// Resolves names against `catalog`. Metrics are taken as written.
    pub fn to_rule(&self, catalog: &Catalog, shared_attr: crate::dataset::AttrId) -> Result<StoredRule> {
        let item = |name: &str| catalog.item_id(name).ok_or_else(|| Error::UnknownItem(name.to_owned()));
        let antecedent = self.antecedent.iter().map(|n| item(n)).collect::<Result<Vec<_>>>()?;
        let consequent = item(&self.consequent)?;
        let quants = self
            .quants
            .iter()
            .map(|(i, a, v)| {
                let attr = catalog.attr_id(a).ok_or_else(|| Error::UnknownAttribute(a.clone()))?;
                Ok(Quantification::new(item(i)?, attr, *v))
            })
            .collect::<Result<Vec<_>>>()?;
        let mode: Mode = self.mode.parse()?;
        let rule = Rule::new(antecedent, consequent, quants, mode, shared_attr)?;
        let metrics = RuleMetrics {
            support: self.support.value()?,
            confidence: self.confidence.value()?,
            cons_supp: self.cons_supp.value()?,
            conviction: self.conviction.value()?,
            lift: self.lift.value()?,
            leverage: self.leverage.value()?,
            counts: None,
        };
        Ok(StoredRule { rule, metrics })
    }
}

pub fn write_rules<W: Write>(mut out: W, rules: &[StoredRule], catalog: &Catalog, precision: Precision) -> Result<()> {
    for s in rules {
        serde_json::to_writer(&mut out, &RuleLine::from_rule(&s.rule, &s.metrics, catalog, precision))?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

pub fn read_rules<R: BufRead>(
    source: R,
    catalog: &Catalog,
    shared_attr: crate::dataset::AttrId,
) -> Result<Vec<StoredRule>> {
    let mut rules = Vec::new();
    for line in source.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let parsed: RuleLine = serde_json::from_str(&line)?;
        rules.push(parsed.to_rule(catalog, shared_attr)?);
    }
    Ok(rules)
}
