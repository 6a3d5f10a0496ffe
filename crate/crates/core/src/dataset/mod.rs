//! User histories with per-transaction numeric attributes.
//!
//! A [`Dataset`] is the unit the miner works on: one [`UserHistory`] per
//! user, each a list of [`Transaction`]s on catalog items. Users are
//! addressed by dense indices `0..num_users()` assigned in order of first
//! appearance, which is what the support bitsets are keyed on.

mod movielens;
mod transform;
mod value_index;

use std::collections::HashMap;
use std::io::{BufRead, Write};

use serde::Deserialize;
use serde_json::{Map, Value};

use crate::error::{Error, Result};

pub use movielens::{load_movielens, load_movielens_users, MOVIELENS_ATTR};
pub use transform::{augment_negated, discretize, discretize_where, negated_name};
pub use value_index::ValueIndex;

pub type ItemId = u32;
pub type AttrId = u32;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum AttrKind {
    Quantitative,
    Categorical,
}

#[derive(Clone, Debug, PartialEq)]
pub struct AttributeDecl {
    pub attr: AttrId,
    pub kind: AttrKind,
    pub declared_range: Option<(f64, f64)>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ItemDecl {
    pub name: String,
    pub attrs: Vec<AttributeDecl>,
}

impl ItemDecl {
    pub fn attr(&self, attr: AttrId) -> Option<&AttributeDecl> {
        self.attrs.iter().find(|d| d.attr == attr)
    }

    pub fn quantitative(&self) -> impl Iterator<Item = AttrId> + '_ {
        self.attrs
            .iter()
            .filter(|d| d.kind == AttrKind::Quantitative)
            .map(|d| d.attr)
    }
}

/// Item and attribute name tables. Ids are assigned in insertion order.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Catalog {
    items: Vec<ItemDecl>,
    item_index: HashMap<String, ItemId>,
    attr_names: Vec<String>,
    attr_index: HashMap<String, AttrId>,
}

impl Catalog {
    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn items(&self) -> impl Iterator<Item = (ItemId, &ItemDecl)> {
        self.items.iter().enumerate().map(|(i, d)| (i as ItemId, d))
    }

    pub fn item(&self, id: ItemId) -> &ItemDecl {
        &self.items[id as usize]
    }

    pub fn item_id(&self, name: &str) -> Option<ItemId> {
        self.item_index.get(name).copied()
    }

    pub fn item_name(&self, id: ItemId) -> &str {
        &self.items[id as usize].name
    }

    pub fn attr_id(&self, name: &str) -> Option<AttrId> {
        self.attr_index.get(name).copied()
    }

    pub fn attr_name(&self, id: AttrId) -> &str {
        &self.attr_names[id as usize]
    }

    pub fn attrs(&self) -> impl Iterator<Item = &str> {
        self.attr_names.iter().map(String::as_str)
    }

    pub fn intern_item(&mut self, name: &str) -> ItemId {
        if let Some(&id) = self.item_index.get(name) {
            return id;
        }
        let id = self.items.len() as ItemId;
        self.items.push(ItemDecl {
            name: name.to_owned(),
            attrs: Vec::new(),
        });
        self.item_index.insert(name.to_owned(), id);
        id
    }

    pub fn intern_attr(&mut self, name: &str) -> AttrId {
        if let Some(&id) = self.attr_index.get(name) {
            return id;
        }
        let id = self.attr_names.len() as AttrId;
        self.attr_names.push(name.to_owned());
        self.attr_index.insert(name.to_owned(), id);
        id
    }

    /// Declares `attr` on `item`, or checks the existing declaration agrees
    /// on kind. Returns the declaration's position within the item.
    pub fn declare(&mut self, item: ItemId, attr: AttrId, kind: AttrKind) -> Result<usize> {
        let decl = &mut self.items[item as usize];
        if let Some(pos) = decl.attrs.iter().position(|d| d.attr == attr) {
            if decl.attrs[pos].kind != kind {
                return Err(Error::Config(format!(
                    "attribute `{}` of item `{}` used as both quantitative and categorical",
                    self.attr_names[attr as usize], decl.name
                )));
            }
            return Ok(pos);
        }
        decl.attrs.push(AttributeDecl {
            attr,
            kind,
            declared_range: None,
        });
        Ok(decl.attrs.len() - 1)
    }

    pub(crate) fn item_mut(&mut self, id: ItemId) -> &mut ItemDecl {
        &mut self.items[id as usize]
    }

    pub fn is_quantitative(&self, item: ItemId, attr: AttrId) -> bool {
        self.item(item)
            .attr(attr)
            .is_some_and(|d| d.kind == AttrKind::Quantitative)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Transaction {
    pub item: ItemId,
    /// Quantitative attribute values, sorted by attribute id.
    pub values: Vec<(AttrId, f64)>,
}

impl Transaction {
    pub fn value(&self, attr: AttrId) -> Option<f64> {
        self.values
            .binary_search_by_key(&attr, |&(a, _)| a)
            .ok()
            .map(|i| self.values[i].1)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct UserHistory {
    pub user: String,
    pub transactions: Vec<Transaction>,
}

impl UserHistory {
    pub fn contains(&self, item: ItemId) -> bool {
        self.transactions.iter().any(|t| t.item == item)
    }

    /// True when some transaction of `item` has `attr` at least `value`.
    pub fn has_at_least(&self, item: ItemId, attr: AttrId, value: f64) -> bool {
        self.transactions
            .iter()
            .any(|t| t.item == item && t.value(attr).is_some_and(|v| v >= value))
    }

    pub fn has_exactly(&self, item: ItemId, attr: AttrId, value: f64) -> bool {
        self.transactions
            .iter()
            .any(|t| t.item == item && t.value(attr) == Some(value))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub histories: Vec<UserHistory>,
    pub catalog: Catalog,
    pub shared_attr: AttrId,
}

impl Dataset {
    pub fn empty(shared_attr: &str) -> Self {
        let mut catalog = Catalog::default();
        let shared_attr = catalog.intern_attr(shared_attr);
        Dataset {
            histories: Vec::new(),
            catalog,
            shared_attr,
        }
    }

    pub fn num_users(&self) -> usize {
        self.histories.len()
    }

    pub fn transaction_count(&self) -> usize {
        self.histories.iter().map(|h| h.transactions.len()).sum()
    }

    pub fn shared_attr_name(&self) -> &str {
        self.catalog.attr_name(self.shared_attr)
    }

    /// Appends a transaction for `user`, creating the history (and its dense
    /// index) on first sight. Values are `(attribute name, value)` pairs.
    pub fn push(
        &mut self,
        user_index: &mut HashMap<String, usize>,
        user: &str,
        item: &str,
        values: &[(&str, f64)],
    ) -> Result<()> {
        let item_id = self.catalog.intern_item(item);
        let mut tx = Transaction {
            item: item_id,
            values: Vec::with_capacity(values.len()),
        };
        for &(name, v) in values {
            if !v.is_finite() {
                return Err(Error::Ingestion {
                    line: 0,
                    message: format!("non-finite value for `{name}` of item `{item}`"),
                });
            }
            let attr = self.catalog.intern_attr(name);
            self.catalog.declare(item_id, attr, AttrKind::Quantitative)?;
            tx.values.push((attr, v));
        }
        tx.values.sort_by_key(|&(a, _)| a);
        tx.values.dedup_by_key(|&mut (a, _)| a);
        if tx.value(self.shared_attr).is_none() {
            return Err(Error::MissingSharedAttr {
                user: user.to_owned(),
                item: item.to_owned(),
                attr: self.shared_attr_name().to_owned(),
            });
        }
        let idx = *user_index.entry(user.to_owned()).or_insert_with(|| {
            self.histories.push(UserHistory {
                user: user.to_owned(),
                transactions: Vec::new(),
            });
            self.histories.len() - 1
        });
        self.histories[idx].transactions.push(tx);
        Ok(())
    }

    /// Recomputes the observed `[min, max]` of every quantitative attribute.
    pub fn refresh_ranges(&mut self) {
        let mut ranges: HashMap<(ItemId, AttrId), (f64, f64)> = HashMap::new();
        for tx in self.histories.iter().flat_map(|h| &h.transactions) {
            for &(a, v) in &tx.values {
                let r = ranges.entry((tx.item, a)).or_insert((v, v));
                r.0 = r.0.min(v);
                r.1 = r.1.max(v);
            }
        }
        for id in 0..self.catalog.len() as ItemId {
            for decl in &mut self.catalog.item_mut(id).attrs {
                if decl.kind == AttrKind::Quantitative {
                    decl.declared_range = ranges.get(&(id, decl.attr)).copied();
                }
            }
        }
    }

    pub fn user_index(&self) -> HashMap<String, usize> {
        self.histories
            .iter()
            .enumerate()
            .map(|(i, h)| (h.user.clone(), i))
            .collect()
    }

    /// Writes one history per line in the `{"u":..,"t":[..]}` format.
    pub fn write_histories<W: Write>(&self, mut out: W) -> Result<()> {
        for h in &self.histories {
            let txs: Vec<Value> = h
                .transactions
                .iter()
                .map(|t| {
                    let mut attrs = Map::new();
                    for &(a, v) in &t.values {
                        attrs.insert(self.catalog.attr_name(a).to_owned(), json_number(v));
                    }
                    let mut obj = Map::new();
                    obj.insert("i".into(), Value::String(self.catalog.item_name(t.item).to_owned()));
                    obj.insert("a".into(), Value::Object(attrs));
                    Value::Object(obj)
                })
                .collect();
            let mut line = Map::new();
            line.insert("u".into(), Value::String(h.user.clone()));
            line.insert("t".into(), Value::Array(txs));
            serde_json::to_writer(&mut out, &Value::Object(line))?;
            out.write_all(b"\n")?;
        }
        Ok(())
    }
}

pub(crate) fn json_number(v: f64) -> Value {
    serde_json::Number::from_f64(v)
        .map(Value::Number)
        .unwrap_or(Value::Null)
}

#[derive(Deserialize)]
struct HistoryLine {
    u: Value,
    #[serde(default)]
    t: Vec<TransactionLine>,
}

#[derive(Deserialize)]
struct TransactionLine {
    i: Value,
    #[serde(default)]
    a: Map<String, Value>,
}

fn key_string(v: &Value, line: usize, what: &str) -> Result<String> {
    match v {
        Value::String(s) => Ok(s.clone()),
        Value::Number(n) => Ok(n.to_string()),
        _ => Err(Error::Ingestion {
            line,
            message: format!("{what} must be a string or number"),
        }),
    }
}

/// Reads history records, one JSON object per line. Several lines may carry
/// the same user key; their transactions are appended in order. String
/// attribute values are accepted as categorical and not stored.
pub fn load_dataset<R: BufRead>(source: R, shared_attr: &str) -> Result<Dataset> {
    let mut ds = Dataset::empty(shared_attr);
    let mut users = HashMap::new();
    for (n, line) in source.lines().enumerate() {
        let line_no = n + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: HistoryLine = serde_json::from_str(&line).map_err(|e| Error::Ingestion {
            line: line_no,
            message: e.to_string(),
        })?;
        let user = key_string(&rec.u, line_no, "user key")?;
        if rec.t.is_empty() && !users.contains_key(&user) {
            users.insert(user.clone(), ds.histories.len());
            ds.histories.push(UserHistory {
                user: user.clone(),
                transactions: Vec::new(),
            });
        }
        for tx in &rec.t {
            let item = key_string(&tx.i, line_no, "item id")?;
            let mut values = Vec::with_capacity(tx.a.len());
            for (name, v) in &tx.a {
                match v {
                    Value::Number(num) => {
                        let f = num.as_f64().ok_or_else(|| Error::Ingestion {
                            line: line_no,
                            message: format!("value of `{name}` is not representable"),
                        })?;
                        values.push((name.as_str(), f));
                    }
                    Value::String(_) | Value::Bool(_) => {
                        let item_id = ds.catalog.intern_item(&item);
                        let attr = ds.catalog.intern_attr(name);
                        if ds.catalog.is_quantitative(item_id, attr) || attr == ds.shared_attr {
                            return Err(Error::Ingestion {
                                line: line_no,
                                message: format!(
                                    "non-numeric value for quantitative attribute `{name}` of item `{item}` (user `{user}`)"
                                ),
                            });
                        }
                        ds.catalog
                            .declare(item_id, attr, AttrKind::Categorical)
                            .map_err(|e| Error::Ingestion {
                                line: line_no,
                                message: e.to_string(),
                            })?;
                    }
                    _ => {
                        return Err(Error::Ingestion {
                            line: line_no,
                            message: format!("unsupported value for `{name}` of item `{item}`"),
                        })
                    }
                }
            }
            ds.push(&mut users, &user, &item, &values).map_err(|e| match e {
                Error::MissingSharedAttr { .. } => e,
                other => Error::Ingestion {
                    line: line_no,
                    message: other.to_string(),
                },
            })?;
        }
    }
    ds.refresh_ranges();
    Ok(ds)
}

#[cfg(test)]
pub(crate) mod fixtures {
    use super::*;

    /// The six-user, three-item example with a single shared attribute `p`.
    pub const EXAMPLE_LINES: &str = r#"{"u":"1","t":[{"i":"a","a":{"p":1.0}},{"i":"b","a":{"p":1.0}},{"i":"c","a":{"p":0.3}}]}
{"u":"2","t":[{"i":"a","a":{"p":1.0}},{"i":"b","a":{"p":1.0}},{"i":"c","a":{"p":0.2}}]}
{"u":"3","t":[{"i":"a","a":{"p":1.0}},{"i":"b","a":{"p":1.0}},{"i":"c","a":{"p":0.1}}]}
{"u":"4","t":[{"i":"a","a":{"p":1.0}},{"i":"b","a":{"p":0.6}},{"i":"c","a":{"p":0.3}}]}
{"u":"5","t":[{"i":"a","a":{"p":0.9}},{"i":"b","a":{"p":0.5}},{"i":"c","a":{"p":0.2}}]}
{"u":"6","t":[{"i":"a","a":{"p":0.8}},{"i":"b","a":{"p":0.5}},{"i":"c","a":{"p":0.2}}]}
"#;

    pub fn example() -> Dataset {
        load_dataset(EXAMPLE_LINES.as_bytes(), "p").unwrap()
    }

    pub fn example_negated() -> Dataset {
        augment_negated(&example(), "p").unwrap()
    }
}
