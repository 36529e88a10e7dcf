//! Catalog statistics and the numeric encodings fed to the networks: the
//! database vector, action encodings and the context vector of pending work.
//!
//! Attributes are laid out in catalog order (relations in database order,
//! columns in relation order). Predicate slots follow the same order: one
//! selection slot per attribute, then one slot per declared join predicate.

mod stats;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::relation::{Action, ColumnRef, Database, JoinPredicate, QuerySpec, Selection};

pub use stats::{compute_stats, AttributeStats};

pub const DEFAULT_BUCKETS: usize = 16;

/// Per-attribute entries in [`DatabaseVector`] ahead of the histogram.
pub const SCALAR_FEATURES: usize = 3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RelationInfo {
    pub name: String,
    pub row_count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttributeEntry {
    pub column: ColumnRef,
    pub stats: AttributeStats,
}

/// Statistics for a whole database plus the fixed predicate set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Catalog {
    buckets: usize,
    relations: Vec<RelationInfo>,
    attributes: Vec<AttributeEntry>,
    joins: Vec<JoinPredicate>,
}

impl Catalog {
    /// Computes statistics for every attribute of `db`. `join_keys` declares
    /// the join predicates that make up the join part of the predicate set.
    pub fn build(db: &Database, join_keys: &[JoinPredicate], buckets: usize) -> Result<Self> {
        let mut relations = Vec::new();
        let mut attributes = Vec::new();
        for rel in db.relations() {
            relations.push(RelationInfo {
                name: rel.name().to_string(),
                row_count: rel.row_count(),
            });
            for (name, stats) in rel
                .columns()
                .iter()
                .map(|c| Ok((c.name.clone(), AttributeStats::from_values(&c.data, buckets)?)))
                .collect::<Result<Vec<_>>>()?
            {
                attributes.push(AttributeEntry {
                    column: ColumnRef::new(rel.name(), name),
                    stats,
                });
            }
        }
        let mut joins: Vec<JoinPredicate> = Vec::new();
        for j in join_keys {
            if j.left().relation == j.right().relation {
                return Err(Error::Schema(format!("join key `{j}` is a self-join")));
            }
            db.column(j.left())?;
            db.column(j.right())?;
            if !joins.contains(j) {
                joins.push(j.clone());
            }
        }
        Self::from_parts(buckets, relations, attributes, joins)
    }

    pub fn from_parts(
        buckets: usize,
        relations: Vec<RelationInfo>,
        attributes: Vec<AttributeEntry>,
        joins: Vec<JoinPredicate>,
    ) -> Result<Self> {
        if buckets == 0 {
            return Err(Error::config("buckets", "bucket count must be at least 1"));
        }
        if let Some(a) = attributes.iter().find(|a| a.stats.buckets() != buckets) {
            return Err(Error::Shape {
                expected: buckets,
                actual: a.stats.buckets(),
                context: "histogram buckets",
            });
        }
        Ok(Self {
            buckets,
            relations,
            attributes,
            joins,
        })
    }

    pub fn buckets(&self) -> usize {
        self.buckets
    }

    pub fn relations(&self) -> &[RelationInfo] {
        &self.relations
    }

    pub fn attributes(&self) -> &[AttributeEntry] {
        &self.attributes
    }

    pub fn join_predicates(&self) -> &[JoinPredicate] {
        &self.joins
    }

    pub fn row_count(&self, relation: &str) -> Result<usize> {
        self.relations
            .iter()
            .find(|r| r.name == relation)
            .map(|r| r.row_count)
            .ok_or_else(|| Error::Schema(format!("unknown relation `{relation}`")))
    }

    pub fn relation_index(&self, relation: &str) -> Option<usize> {
        self.relations.iter().position(|r| r.name == relation)
    }

    pub fn attribute_index(&self, column: &ColumnRef) -> Option<usize> {
        self.attributes.iter().position(|a| &a.column == column)
    }

    pub fn join_index(&self, predicate: &JoinPredicate) -> Option<usize> {
        self.joins.iter().position(|j| j == predicate)
    }

    pub fn stats(&self, column: &ColumnRef) -> Result<&AttributeStats> {
        self.attributes
            .iter()
            .find(|a| &a.column == column)
            .map(|a| &a.stats)
            .ok_or_else(|| Error::Schema(format!("unknown attribute `{column}`")))
    }

    /// Number of predicate slots: one per attribute plus one per join key.
    pub fn predicate_count(&self) -> usize {
        self.attributes.len() + self.joins.len()
    }

    /// Length of an [`ActionEncoding`] or [`ContextVector`].
    pub fn encoding_len(&self) -> usize {
        2 * self.attributes.len() + self.joins.len()
    }

    /// Length of the [`DatabaseVector`].
    pub fn x0_len(&self) -> usize {
        self.attributes.len() * (SCALAR_FEATURES + self.buckets)
    }

    /// Smallest and largest value over all non-empty attributes.
    fn domain(&self) -> Option<(f64, f64)> {
        self.attributes
            .iter()
            .filter(|a| a.stats.row_count > 0)
            .map(|a| (a.stats.min, a.stats.max))
            .reduce(|(lo, hi), (a, b)| (lo.min(a), hi.max(b)))
    }

    fn selection_slot(&self, sel: &Selection) -> Result<(usize, f64)> {
        let col = sel.column();
        let idx = self
            .attribute_index(&col)
            .ok_or_else(|| Error::Encoding(format!("unknown attribute `{col}`")))?;
        Ok((idx, self.attributes[idx].stats.normalize(sel.bound)))
    }

    fn join_slot(&self, j: &JoinPredicate) -> Result<usize> {
        self.join_index(j)
            .map(|i| 2 * self.attributes.len() + i)
            .ok_or_else(|| Error::Encoding(format!("`{j}` is not a declared join key")))
    }
}

/// Flat encoding of the database: per attribute
/// `[min_norm, max_norm, distinct_norm, hist_0 .. hist_{B-1}]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatabaseVector {
    pub values: Vec<f64>,
}

/// Builds the database vector from catalog statistics.
///
/// `min_norm`/`max_norm` are scaled by the value range spanned by all
/// attributes of the database; `distinct_norm` is `distinct / rows`.
pub fn build_x0(catalog: &Catalog) -> DatabaseVector {
    let (lo, hi) = catalog.domain().unwrap_or((0.0, 0.0));
    let scale = |v: f64| if hi > lo { (v - lo) / (hi - lo) } else { 0.0 };
    let mut values = Vec::with_capacity(catalog.x0_len());
    for a in &catalog.attributes {
        let s = &a.stats;
        if s.row_count == 0 {
            values.extend([0.0, 0.0, 0.0]);
        } else {
            values.push(scale(s.min));
            values.push(scale(s.max));
            values.push(s.distinct_count as f64 / s.row_count as f64);
        }
        values.extend_from_slice(&s.histogram);
    }
    DatabaseVector { values }
}

/// Numeric encoding of one action. Layout: `(flag, v_norm)` per attribute,
/// then one flag per join key.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActionEncoding {
    pub values: Vec<f64>,
}

pub fn encode_action(action: &Action, catalog: &Catalog) -> Result<ActionEncoding> {
    let mut values = vec![0.0; catalog.encoding_len()];
    match action {
        Action::Select { predicates } => {
            for sel in predicates {
                let (idx, v) = catalog.selection_slot(sel)?;
                values[2 * idx] = 1.0;
                values[2 * idx + 1] = v;
            }
        }
        Action::Join { predicate } => values[catalog.join_slot(predicate)?] = 1.0,
    }
    Ok(ActionEncoding { values })
}

/// The operations of a query that remain to be applied, in the same layout
/// as [`ActionEncoding`]. A predicate is pending iff its flag is set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContextVector {
    pub values: Vec<f64>,
    attributes: usize,
}

impl ContextVector {
    pub fn init(q: &QuerySpec, catalog: &Catalog) -> Result<Self> {
        let mut values = vec![0.0; catalog.encoding_len()];
        for sel in &q.selections {
            let (idx, v) = catalog.selection_slot(sel)?;
            values[2 * idx] = 1.0;
            values[2 * idx + 1] = v;
        }
        for j in &q.joins {
            values[catalog.join_slot(j)?] = 1.0;
        }
        Ok(Self {
            values,
            attributes: catalog.attributes.len(),
        })
    }

    fn flag_positions(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.attributes)
            .map(|i| 2 * i)
            .chain(2 * self.attributes..self.values.len())
    }

    /// Number of pending predicates.
    pub fn pending(&self) -> usize {
        self.flag_positions().filter(|&p| self.values[p] != 0.0).count()
    }

    /// True iff no operation remains.
    pub fn is_empty(&self) -> bool {
        self.values.iter().all(|&v| v == 0.0)
    }

    /// The context after `action`: the action's slots are zeroed. Fails if
    /// any of them is not pending.
    pub fn apply_action(&self, action: &Action, catalog: &Catalog) -> Result<Self> {
        let enc = encode_action(action, catalog)?;
        if enc.values.len() != self.values.len() {
            return Err(Error::Shape {
                expected: self.values.len(),
                actual: enc.values.len(),
                context: "context vector",
            });
        }
        let mut next = self.clone();
        for p in self.flag_positions() {
            if enc.values[p] != 0.0 {
                if self.values[p] == 0.0 {
                    return Err(Error::Contract(format!("`{action}` is not pending")));
                }
                next.values[p] = 0.0;
                if p < 2 * self.attributes {
                    next.values[p + 1] = 0.0;
                }
            }
        }
        Ok(next)
    }
}

pub fn init_context(q: &QuerySpec, catalog: &Catalog) -> Result<ContextVector> {
    ContextVector::init(q, catalog)
}

pub fn apply_action(u: &ContextVector, action: &Action, catalog: &Catalog) -> Result<ContextVector> {
    u.apply_action(action, catalog)
}
