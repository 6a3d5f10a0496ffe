use super::{AttrKind, Dataset, ItemId};
use crate::error::{Error, Result};

/// Name of the artificial attribute carrying `-value` of `attr`.
pub fn negated_name(attr: &str) -> String {
    format!("{attr}⁻")
}

/// Adds `attr⁻ = -attr` to every transaction that carries `attr`, so a pair
/// of `>=` conditions can express a closed interval.
pub fn augment_negated(dataset: &Dataset, attr: &str) -> Result<Dataset> {
    let src = dataset
        .catalog
        .attr_id(attr)
        .ok_or_else(|| Error::UnknownAttribute(attr.to_owned()))?;
    let neg_name = negated_name(attr);
    if dataset.catalog.attr_id(&neg_name).is_some() {
        return Err(Error::DuplicateAttribute(neg_name));
    }
    let carriers: Vec<ItemId> = dataset
        .catalog
        .items()
        .filter(|(id, _)| dataset.catalog.is_quantitative(*id, src))
        .map(|(id, _)| id)
        .collect();
    if carriers.is_empty() {
        return Err(Error::UnknownAttribute(attr.to_owned()));
    }

    let mut out = dataset.clone();
    let neg = out.catalog.intern_attr(&neg_name);
    for &item in &carriers {
        out.catalog.declare(item, neg, AttrKind::Quantitative)?;
    }
    for tx in out.histories.iter_mut().flat_map(|h| h.transactions.iter_mut()) {
        if let Some(v) = tx.value(src) {
            // -0.0 would compare equal to 0.0 but print differently
            let n = if v == 0.0 { 0.0 } else { -v };
            tx.values.push((neg, n));
            tx.values.sort_by_key(|&(a, _)| a);
        }
    }
    out.refresh_ranges();
    Ok(out)
}

/// Replaces each value of `attr` by the lower edge of its equal-width bin
/// over the observed `[min, max]` of that item.
pub fn discretize(dataset: &Dataset, attr: &str, bins: usize) -> Result<Dataset> {
    discretize_where(dataset, attr, bins, |_| true)
}

/// [`discretize`] restricted to the items `keep` selects.
pub fn discretize_where(dataset: &Dataset, attr: &str, bins: usize, keep: impl Fn(ItemId) -> bool) -> Result<Dataset> {
    if bins == 0 {
        return Err(Error::Config("bins must be at least 1".into()));
    }
    let a = dataset
        .catalog
        .attr_id(attr)
        .ok_or_else(|| Error::UnknownAttribute(attr.to_owned()))?;
    let mut bounds: Vec<Option<(f64, f64)>> = vec![None; dataset.catalog.len()];
    for tx in dataset.histories.iter().flat_map(|h| &h.transactions) {
        if let Some(v) = tx.value(a) {
            let b = bounds[tx.item as usize].get_or_insert((v, v));
            b.0 = b.0.min(v);
            b.1 = b.1.max(v);
        }
    }
    if bounds.iter().all(Option::is_none) {
        return Err(Error::UnknownAttribute(attr.to_owned()));
    }

    let mut out = dataset.clone();
    for tx in out.histories.iter_mut().flat_map(|h| h.transactions.iter_mut()) {
        let Some((lo, hi)) = bounds[tx.item as usize] else {
            continue;
        };
        if !keep(tx.item) {
            continue;
        }
        if hi <= lo {
            continue;
        }
        let width = (hi - lo) / bins as f64;
        for (attr_id, v) in tx.values.iter_mut() {
            if *attr_id == a {
                let bin = (((*v - lo) / width).floor() as usize).min(bins - 1);
                *v = lo + bin as f64 * width;
            }
        }
    }
    out.refresh_ranges();
    Ok(out)
}
