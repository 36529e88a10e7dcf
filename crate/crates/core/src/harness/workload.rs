use std::collections::BTreeSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::catalog::Catalog;
use crate::error::{Error, Result};
use crate::model::SequenceExample;
use crate::relation::{Action, Database, JoinPredicate, QuerySpec, Selection};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum WorkloadKind {
    /// One conjunctive selection over `m` attributes.
    Selection,
    /// A conjunctive selection followed by one join.
    SelectionJoin,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorkloadSpec {
    pub kind: WorkloadKind,
    /// Relation the selections filter.
    pub relation: String,
    /// Number of attributes per conjunctive selection.
    pub m: usize,
    /// Attributes to filter; the relation's first `m` attributes when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub attributes: Option<Vec<String>>,
    /// Join predicate (`R.a = S.b`) for the selection-join kind.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub join: Option<String>,
    pub count: usize,
    pub train_fraction: f64,
    #[serde(default)]
    pub seed: u64,
}

/// Generated queries with their labelled action sequences. The first
/// `train_len` entries form the training split, the rest the test split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Workload {
    pub queries: Vec<QuerySpec>,
    pub examples: Vec<SequenceExample>,
    pub train_len: usize,
}

impl Workload {
    pub fn train(&self) -> &[SequenceExample] {
        &self.examples[..self.train_len]
    }

    pub fn test(&self) -> &[SequenceExample] {
        &self.examples[self.train_len..]
    }

    pub fn train_queries(&self) -> &[QuerySpec] {
        &self.queries[..self.train_len]
    }

    pub fn test_queries(&self) -> &[QuerySpec] {
        &self.queries[self.train_len..]
    }
}

impl WorkloadSpec {
    fn validate(&self) -> Result<()> {
        if self.count == 0 {
            return Err(Error::config("workload.count", "must be positive"));
        }
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            return Err(Error::config(
                "workload.train_fraction",
                "must lie strictly between 0 and 1",
            ));
        }
        if self.m == 0 {
            return Err(Error::config("workload.m", "must be at least 1"));
        }
        Ok(())
    }

    pub fn train_len(&self) -> usize {
        ((self.count as f64) * self.train_fraction).round() as usize
    }
}

/// Generates `spec.count` queries and labels every stage with the oracle.
/// Selection bounds are drawn uniformly from each attribute's distinct
/// values.
pub fn gen_workload(spec: &WorkloadSpec, db: &Database, catalog: &Catalog) -> Result<Workload> {
    spec.validate()?;
    let rel = db.relation(&spec.relation)?;
    let attributes: Vec<String> = match &spec.attributes {
        Some(a) => {
            if a.len() != spec.m {
                return Err(Error::config(
                    "workload.attributes",
                    format!("expected {} attributes", spec.m),
                ));
            }
            a.clone()
        }
        None => {
            if spec.m > rel.columns().len() {
                return Err(Error::config(
                    "workload.m",
                    format!("`{}` has only {} attributes", spec.relation, rel.columns().len()),
                ));
            }
            rel.attribute_names().take(spec.m).map(str::to_string).collect()
        }
    };
    let domains = attributes
        .iter()
        .map(|a| {
            let mut v: Vec<f64> = rel.column(a)?.to_vec();
            v.sort_by(f64::total_cmp);
            v.dedup();
            if v.is_empty() {
                return Err(Error::config(
                    "workload.relation",
                    format!("`{}` is empty", spec.relation),
                ));
            }
            Ok(v)
        })
        .collect::<Result<Vec<_>>>()?;

    let join: Option<JoinPredicate> = match (spec.kind, &spec.join) {
        (WorkloadKind::Selection, _) => None,
        (WorkloadKind::SelectionJoin, Some(j)) => {
            let j: JoinPredicate = j
                .parse()
                .map_err(|e: Error| Error::config("workload.join", e.to_string()))?;
            if j.side(&spec.relation).is_none() {
                return Err(Error::config(
                    "workload.join",
                    format!("`{j}` does not touch `{}`", spec.relation),
                ));
            }
            Some(j)
        }
        (WorkloadKind::SelectionJoin, None) => {
            return Err(Error::config("workload.join", "required for selection-join workloads"))
        }
    };

    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut queries = Vec::with_capacity(spec.count);
    let mut examples = Vec::with_capacity(spec.count);
    for _ in 0..spec.count {
        let selections: Vec<Selection> = attributes
            .iter()
            .zip(&domains)
            .map(|(a, dom)| Selection::new(&spec.relation, a, dom[rng.random_range(0..dom.len())]))
            .collect();
        let mut relations = BTreeSet::from([spec.relation.clone()]);
        let mut actions = vec![Action::select(selections.clone())?];
        let mut joins = Vec::new();
        if let Some(j) = &join {
            relations.insert(j.left().relation.clone());
            relations.insert(j.right().relation.clone());
            joins.push(j.clone());
            actions.push(Action::join(j.clone()));
        }
        let q = QuerySpec {
            relations,
            selections,
            joins,
        };
        q.validate(db)?;
        examples.push(SequenceExample::build(db, catalog, &q, actions)?);
        queries.push(q);
    }
    Ok(Workload {
        queries,
        examples,
        train_len: spec.train_len(),
    })
}
