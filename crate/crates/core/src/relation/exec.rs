use std::collections::{BTreeSet, HashMap};

use super::{ColumnRef, Database, QuerySpec, Relation};
use crate::error::Result;

/// Row ids of `rel` that satisfy every selection of `q` on it.
pub fn filtered_rows(rel: &Relation, q: &QuerySpec) -> Result<Vec<usize>> {
    let preds = q
        .selections_on(rel.name())
        .map(|s| Ok((rel.column(&s.attribute)?, s.bound)))
        .collect::<Result<Vec<_>>>()?;
    Ok((0..rel.row_count())
        .filter(|&r| preds.iter().all(|(col, v)| col[r] <= *v))
        .collect())
}

fn key_bits(v: f64) -> u64 {
    // -0.0 and 0.0 must hash together.
    if v == 0.0 {
        0
    } else {
        v.to_bits()
    }
}

/// Exact number of tuples produced by applying every selection and equi-join
/// of `q` to `db`.
///
/// Relations are joined in breadth-first order over the join graph. The
/// intermediate result is kept as a multiset projected onto the columns that
/// later predicates still need, so the count stays exact without
/// materialising tuples. The result equals the nested-loop count.
pub fn true_cardinality(db: &Database, q: &QuerySpec) -> Result<u64> {
    q.validate(db)?;

    let order = join_order(q);
    let filtered: Vec<(&Relation, Vec<usize>)> = order
        .iter()
        .map(|name| {
            let rel = db.relation(name)?;
            Ok((rel, filtered_rows(rel, q)?))
        })
        .collect::<Result<_>>()?;

    // Columns of already-joined relations that predicates to later relations use.
    let needed_after = |step: usize| -> Vec<ColumnRef> {
        let done: BTreeSet<&str> = order[..=step].iter().map(String::as_str).collect();
        let mut cols = BTreeSet::new();
        for j in &q.joins {
            let l = done.contains(j.left().relation.as_str());
            let r = done.contains(j.right().relation.as_str());
            if l && !r {
                cols.insert(j.left().clone());
            } else if r && !l {
                cols.insert(j.right().clone());
            }
        }
        cols.into_iter().collect()
    };

    let (first, first_rows) = &filtered[0];
    let mut carried = needed_after(0);
    let mut groups: HashMap<Vec<u64>, u64> = HashMap::new();
    {
        let cols = carried
            .iter()
            .map(|c| first.column(&c.attribute))
            .collect::<Result<Vec<_>>>()?;
        for &r in first_rows {
            let key = cols.iter().map(|c| key_bits(c[r])).collect();
            *groups.entry(key).or_default() += 1;
        }
    }

    for (step, (rel, rows)) in filtered.iter().enumerate().skip(1) {
        let joined: BTreeSet<&str> = order[..step].iter().map(String::as_str).collect();
        // (chain-side position in `carried`, column of `rel`) per connecting predicate.
        let mut probe_pos = Vec::new();
        let mut build_cols = Vec::new();
        for j in &q.joins {
            let (mine, theirs) = match (j.side(rel.name()), j.left(), j.right()) {
                (Some(m), l, r) if m == l && joined.contains(r.relation.as_str()) => (m, r),
                (Some(m), l, r) if m == r && joined.contains(l.relation.as_str()) => (m, l),
                _ => continue,
            };
            let pos = carried
                .iter()
                .position(|c| c == theirs)
                .expect("connecting column is carried");
            probe_pos.push(pos);
            build_cols.push(rel.column(&mine.attribute)?);
        }

        let next_carried = needed_after(step);
        let keep_old: Vec<usize> = next_carried
            .iter()
            .filter_map(|c| carried.iter().position(|x| x == c))
            .collect();
        let new_cols: Vec<&[f64]> = next_carried
            .iter()
            .filter(|c| c.relation == rel.name())
            .map(|c| rel.column(&c.attribute))
            .collect::<Result<_>>()?;

        let mut build: HashMap<Vec<u64>, HashMap<Vec<u64>, u64>> = HashMap::new();
        for &r in rows {
            let key: Vec<u64> = build_cols.iter().map(|c| key_bits(c[r])).collect();
            let payload: Vec<u64> = new_cols.iter().map(|c| key_bits(c[r])).collect();
            *build.entry(key).or_default().entry(payload).or_default() += 1;
        }

        let mut next: HashMap<Vec<u64>, u64> = HashMap::new();
        for (vals, count) in &groups {
            let probe: Vec<u64> = probe_pos.iter().map(|&p| vals[p]).collect();
            let Some(matches) = build.get(&probe) else {
                continue;
            };
            for (payload, c2) in matches {
                let mut key: Vec<u64> = keep_old.iter().map(|&p| vals[p]).collect();
                key.extend_from_slice(payload);
                *next.entry(key).or_default() += count * c2;
            }
        }
        // Key layout: surviving chain columns, then this relation's columns.
        carried = keep_old
            .iter()
            .map(|&p| carried[p].clone())
            .chain(next_carried.iter().filter(|c| c.relation == rel.name()).cloned())
            .collect();
        groups = next;
    }

    Ok(groups.values().sum())
}

/// Breadth-first relation order starting from the first relation by name.
fn join_order(q: &QuerySpec) -> Vec<String> {
    let mut order: Vec<String> = Vec::with_capacity(q.relations.len());
    let mut seen = BTreeSet::new();
    for start in &q.relations {
        if !seen.insert(start.clone()) {
            continue;
        }
        order.push(start.clone());
        let mut i = order.len() - 1;
        while i < order.len() {
            let cur = order[i].clone();
            for j in &q.joins {
                let other = if j.left().relation == cur {
                    &j.right().relation
                } else if j.right().relation == cur {
                    &j.left().relation
                } else {
                    continue;
                };
                if seen.insert(other.clone()) {
                    order.push(other.clone());
                }
            }
            i += 1;
        }
    }
    order
}
