//! Helpers shared by the integration tests: random databases, an
//! independent nested-loop counter and finite-difference gradient checks.
#![allow(dead_code)]

use std::collections::BTreeSet;

use rand::Rng;
use rlqo::catalog::DatabaseVector;
use rlqo::model::{LossKind, RepresentationModel, SequenceExample};
use rlqo::nn::Network;
use rlqo::relation::{Column, Database, JoinPredicate, QuerySpec, Relation, Selection};

/// Relations `R0..Rn` with columns `k` (join key), `a`, `b` over small
/// integer domains so that joins produce duplicates.
pub fn random_db<R: Rng>(rng: &mut R, relations: usize, max_rows: usize) -> (Database, Vec<JoinPredicate>) {
    let rels = (0..relations)
        .map(|i| {
            let rows = rng.random_range(1..=max_rows);
            let kd = rng.random_range(1..=12);
            let cols = [("k", kd), ("a", 20), ("b", 8)]
                .iter()
                .map(|(n, d)| Column::new(*n, (0..rows).map(|_| rng.random_range(0..*d) as f64).collect()))
                .collect();
            Relation::new(format!("R{i}"), cols).unwrap()
        })
        .collect();
    let joins = (1..relations)
        .map(|i| format!("R{}.k = R{i}.k", i - 1).parse().unwrap())
        .collect();
    (Database::new(rels).unwrap(), joins)
}

/// Random connected query over a prefix-free subset of the chain.
pub fn random_query<R: Rng>(rng: &mut R, db: &Database, joins: &[JoinPredicate]) -> QuerySpec {
    let n = db.relations().len();
    let start = rng.random_range(0..n);
    let end = rng.random_range(start..n);
    let relations: BTreeSet<String> = (start..=end).map(|i| format!("R{i}")).collect();
    let mut selections = Vec::new();
    for r in &relations {
        for att in ["a", "b"] {
            if rng.random_bool(0.5) {
                let bound = rng.random_range(-1..21) as f64;
                selections.push(Selection::new(r.clone(), att, bound));
            }
        }
    }
    let joins = joins
        .iter()
        .filter(|j| relations.contains(&j.left().relation) && relations.contains(&j.right().relation))
        .cloned()
        .collect();
    QuerySpec {
        relations,
        selections,
        joins,
    }
}

/// Nested-loop count: binds one row per relation in turn and checks every
/// predicate as soon as all of its attributes are bound.
pub fn brute_force_count(db: &Database, q: &QuerySpec) -> u64 {
    let rels: Vec<&Relation> = q.relations.iter().map(|r| db.relation(r).unwrap()).collect();
    let pos = |name: &str| q.relations.iter().position(|r| r == name).unwrap();
    let value = |rel: &Relation, att: &str, row: usize| rel.column(att).unwrap()[row];
    fn go(
        depth: usize,
        rows: &mut Vec<usize>,
        rels: &[&Relation],
        q: &QuerySpec,
        pos: &dyn Fn(&str) -> usize,
        value: &dyn Fn(&Relation, &str, usize) -> f64,
    ) -> u64 {
        if depth == rels.len() {
            return 1;
        }
        let mut total = 0;
        'rows: for r in 0..rels[depth].row_count() {
            rows.push(r);
            for s in &q.selections {
                if pos(&s.relation) == depth && value(rels[depth], &s.attribute, r) > s.bound {
                    rows.pop();
                    continue 'rows;
                }
            }
            for j in &q.joins {
                let (l, rr) = (j.left(), j.right());
                let (pl, pr) = (pos(&l.relation), pos(&rr.relation));
                if pl.max(pr) == depth {
                    let lv = value(rels[pl], &l.attribute, rows[pl]);
                    let rv = value(rels[pr], &rr.attribute, rows[pr]);
                    if lv != rv {
                        rows.pop();
                        continue 'rows;
                    }
                }
            }
            total += go(depth + 1, rows, rels, q, pos, value);
            rows.pop();
        }
        total
    }
    go(0, &mut Vec::new(), &rels, q, &pos, &value)
}

/// Entry-wise agreement `|a - n| <= tol * max(|a|, |n|, 1e-3)`. The floor
/// keeps round-off in near-zero partials from dominating.
pub fn close(analytic: f64, numeric: f64, tol: f64) -> bool {
    (analytic - numeric).abs() <= tol * analytic.abs().max(numeric.abs()).max(1e-3)
}

/// Worst violation ratio of backward vs central differences (step 1e-5) on
/// `L = sum_i c_i y_i`. Values <= 1 pass.
pub fn network_gradient_violation(net: &Network, x: &[f64], c: &[f64], tol: f64) -> f64 {
    let loss = |n: &Network| -> f64 { n.predict(x).unwrap().iter().zip(c).map(|(y, c)| y * c).sum() };
    let (_, tape) = net.forward(x).unwrap();
    let (grad, dx) = net.backward(&tape, c).unwrap();
    let analytic: Vec<f64> = grad.flat().collect();
    let params = net.params();
    let mut worst: f64 = 0.0;
    let h = 1e-5;
    let mut probe = net.clone();
    for (i, a) in analytic.iter().enumerate() {
        let mut p = params.clone();
        p[i] += h;
        probe.set_params(&p).unwrap();
        let up = loss(&probe);
        p[i] -= 2.0 * h;
        probe.set_params(&p).unwrap();
        let down = loss(&probe);
        let n = (up - down) / (2.0 * h);
        worst = worst.max((a - n).abs() / (tol * a.abs().max(n.abs()).max(1e-3)));
    }
    for (i, a) in dx.iter().enumerate() {
        let mut xp = x.to_vec();
        xp[i] += h;
        let up: f64 = net.predict(&xp).unwrap().iter().zip(c).map(|(y, c)| y * c).sum();
        xp[i] -= 2.0 * h;
        let down: f64 = net.predict(&xp).unwrap().iter().zip(c).map(|(y, c)| y * c).sum();
        let n = (up - down) / (2.0 * h);
        worst = worst.max((a - n).abs() / (tol * a.abs().max(n.abs()).max(1e-3)));
    }
    worst
}

/// Same check for the summed chain loss of a representation model.
pub fn model_gradient_violation(
    model: &RepresentationModel,
    x0: &DatabaseVector,
    ex: &SequenceExample,
    kind: LossKind,
    tol: f64,
) -> f64 {
    let (_, grad) = model.loss_and_gradient(x0, ex, kind, 1.0).unwrap();
    let analytic = grad.flat();
    let params = model.params();
    let mut probe = model.clone();
    let h = 1e-5;
    let mut worst: f64 = 0.0;
    for (i, a) in analytic.iter().enumerate() {
        let mut p = params.clone();
        p[i] += h;
        probe.set_params(&p).unwrap();
        let up = probe.loss_and_gradient(x0, ex, kind, 1.0).unwrap().0;
        p[i] -= 2.0 * h;
        probe.set_params(&p).unwrap();
        let down = probe.loss_and_gradient(x0, ex, kind, 1.0).unwrap().0;
        let n = (up - down) / (2.0 * h);
        worst = worst.max((a - n).abs() / (tol * a.abs().max(n.abs()).max(1e-3)));
    }
    worst
}
