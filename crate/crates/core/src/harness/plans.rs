use std::collections::{BTreeSet, HashSet};

use rand::seq::IndexedRandom;
use rand::Rng;

use crate::catalog::Catalog;
use crate::error::{Error, Result};
use crate::relation::{Action, Database, PlanProgress, QuerySpec, Selection};

/// Random connected queries over `relations` relations of the catalog's join
/// graph. Every join key between chosen relations is part of the query. Each
/// non-key attribute of a chosen relation carries a selection with
/// probability `selection_probability`, its bound drawn from the attribute's
/// distinct values.
pub fn gen_plan_queries<R: Rng + ?Sized>(
    db: &Database,
    catalog: &Catalog,
    count: usize,
    relations: usize,
    selection_probability: f64,
    rng: &mut R,
) -> Result<Vec<QuerySpec>> {
    if relations == 0 {
        return Err(Error::config("planner.relations", "must be at least 1"));
    }
    if !(0.0..=1.0).contains(&selection_probability) {
        return Err(Error::config("planner.selection_probability", "must lie in [0, 1]"));
    }
    let joins = catalog.join_predicates();
    let keys: HashSet<_> = joins
        .iter()
        .flat_map(|j| [j.left().clone(), j.right().clone()])
        .collect();
    let names: Vec<&str> = catalog.relations().iter().map(|r| r.name.as_str()).collect();
    if names.is_empty() {
        return Err(Error::config("database", "no relations"));
    }

    let mut out = Vec::with_capacity(count);
    let mut attempts = 0;
    while out.len() < count {
        attempts += 1;
        if attempts > 100 * count.max(1) {
            return Err(Error::config(
                "planner.relations",
                format!("the join graph has no connected set of {relations} relations"),
            ));
        }
        let mut chosen = BTreeSet::from([names.choose(rng).unwrap().to_string()]);
        while chosen.len() < relations {
            let frontier: BTreeSet<String> = joins
                .iter()
                .filter_map(|j| {
                    let (l, r) = (&j.left().relation, &j.right().relation);
                    match (chosen.contains(l), chosen.contains(r)) {
                        (true, false) => Some(r.clone()),
                        (false, true) => Some(l.clone()),
                        _ => None,
                    }
                })
                .collect();
            let frontier: Vec<String> = frontier.into_iter().collect();
            match frontier.choose(rng) {
                Some(next) => chosen.insert(next.clone()),
                None => break,
            };
        }
        if chosen.len() < relations {
            continue;
        }
        let mut selections = Vec::new();
        for rel in &chosen {
            let relation = db.relation(rel)?;
            for col in relation.columns() {
                let cref = crate::relation::ColumnRef::new(rel.clone(), col.name.clone());
                if keys.contains(&cref) || rng.random::<f64>() >= selection_probability {
                    continue;
                }
                let mut dom = col.data.clone();
                dom.sort_by(f64::total_cmp);
                dom.dedup();
                if let Some(&v) = dom.choose(rng) {
                    selections.push(Selection::new(rel.clone(), col.name.clone(), v));
                }
            }
        }
        let query_joins = joins
            .iter()
            .filter(|j| chosen.contains(&j.left().relation) && chosen.contains(&j.right().relation))
            .cloned()
            .collect();
        let q = QuerySpec {
            relations: chosen,
            selections,
            joins: query_joins,
        };
        q.validate(db)?;
        out.push(q);
    }
    Ok(out)
}

/// A uniformly random legal plan: each step picks one of the legal actions.
pub fn random_plan<R: Rng + ?Sized>(q: &QuerySpec, rng: &mut R) -> Result<Vec<Action>> {
    let mut p = PlanProgress::new();
    while !p.is_terminal(q) {
        let legal = p.legal_actions(q);
        let a = legal
            .choose(rng)
            .ok_or_else(|| Error::Contract("query has no legal plan".into()))?;
        p = p.apply(q, a)?;
    }
    Ok(p.applied().to_vec())
}
