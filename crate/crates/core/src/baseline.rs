//! Classical cardinality estimation: equi-width histograms with uniformity
//! inside a bucket, independence across predicates and the inclusion
//! principle for equi-joins.

use crate::catalog::{AttributeStats, Catalog};
use crate::error::{Error, Result};
use crate::relation::{ColumnRef, QuerySpec, Selection};

/// Fraction of rows with value `<= v`, interpolating linearly inside the
/// bucket that straddles `v`.
pub fn selectivity_below(stats: &AttributeStats, v: f64) -> f64 {
    if stats.row_count == 0 || v < stats.min {
        return 0.0;
    }
    if v >= stats.max {
        return 1.0;
    }
    let j = stats.bucket_of(v);
    let (lo, hi) = stats.bucket_bounds(j);
    let below: f64 = stats.histogram[..j].iter().sum();
    let within = if hi > lo {
        ((v - lo) / (hi - lo)).clamp(0.0, 1.0)
    } else {
        1.0
    };
    (below + stats.histogram[j] * within).clamp(0.0, 1.0)
}

/// `|rel| × Π sel_i` over the conjunctive predicates `attr <= v`.
pub fn estimate_selection(catalog: &Catalog, relation: &str, predicates: &[(String, f64)]) -> Result<f64> {
    let rows = catalog.row_count(relation)? as f64;
    let mut seen = std::collections::BTreeSet::new();
    let mut est = rows;
    for (attr, v) in predicates {
        if !seen.insert(attr.as_str()) {
            return Err(Error::Schema(format!("more than one predicate on `{relation}.{attr}`")));
        }
        est *= selectivity_below(catalog.stats(&ColumnRef::new(relation, attr.as_str()))?, *v);
    }
    Ok(est)
}

/// `card_left × card_right / max(distinct_left, distinct_right)`.
pub fn estimate_join(card_left: f64, card_right: f64, left: &AttributeStats, right: &AttributeStats) -> Result<f64> {
    if card_left == 0.0 || card_right == 0.0 {
        return Ok(0.0);
    }
    let d = left.distinct_count.max(right.distinct_count);
    if d == 0 {
        return Err(Error::Contract(
            "join estimate over empty key domains with non-zero inputs".into(),
        ));
    }
    Ok(card_left * card_right / d as f64)
}

fn selections_of(q: &QuerySpec, relation: &str) -> Vec<(String, f64)> {
    q.selections_on(relation)
        .map(|s: &Selection| (s.attribute.clone(), s.bound))
        .collect()
}

/// Estimate for a whole select-join query: every relation is filtered
/// independently, then each join predicate scales the running product by
/// `1 / max(distinct)`.
pub fn estimate_query(catalog: &Catalog, q: &QuerySpec) -> Result<f64> {
    if q.relations.is_empty() {
        return Err(Error::Schema("query references no relations".into()));
    }
    let mut est = 1.0;
    for rel in &q.relations {
        est *= estimate_selection(catalog, rel, &selections_of(q, rel))?;
    }
    for j in &q.joins {
        est = estimate_join(est, 1.0, catalog.stats(j.left())?, catalog.stats(j.right())?)?;
    }
    Ok(est)
}
