//! In-memory columnar relations and the exact cardinality oracle.
//!
//! Every attribute is stored as `f64`. Non-numeric CSV columns are
//! dictionary-encoded to integer codes at load time, so all attributes have an
//! ordered domain. NULLs are not supported.

mod csv_load;
mod exec;
mod query;
mod synthetic;

use std::collections::HashSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use csv_load::{load_csv, read_csv, save_csv, write_csv};
pub use exec::{filtered_rows, true_cardinality};
pub use query::{subquery_of, Action, JoinPredicate, PlanProgress, QuerySpec, Selection};
pub use synthetic::{gen_synthetic, ColumnSpec, Marginal, SyntheticSpec};

#[derive(Debug, Clone, PartialEq)]
pub struct Column {
    pub name: String,
    pub data: Vec<f64>,
}

impl Column {
    pub fn new(name: impl Into<String>, data: Vec<f64>) -> Self {
        Self {
            name: name.into(),
            data,
        }
    }
}

/// A named, immutable table of numeric columns.
#[derive(Debug, Clone, PartialEq)]
pub struct Relation {
    name: String,
    columns: Vec<Column>,
    row_count: usize,
}

impl Relation {
    /// Builds a relation, checking that column lengths agree, names are
    /// unique and every value is finite.
    pub fn new(name: impl Into<String>, columns: Vec<Column>) -> Result<Self> {
        let name = name.into();
        let row_count = columns.first().map_or(0, |c| c.data.len());
        let mut seen = HashSet::new();
        for col in &columns {
            if !seen.insert(col.name.as_str()) {
                return Err(Error::Schema(format!(
                    "duplicate attribute `{}` in relation `{name}`",
                    col.name
                )));
            }
            if col.data.len() != row_count {
                return Err(Error::Schema(format!(
                    "column `{}.{}` has {} rows, expected {row_count}",
                    name,
                    col.name,
                    col.data.len()
                )));
            }
            if col.data.iter().any(|v| !v.is_finite()) {
                return Err(Error::Numeric("relation column"));
            }
        }
        Ok(Self {
            name,
            columns,
            row_count,
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn row_count(&self) -> usize {
        self.row_count
    }

    pub fn columns(&self) -> &[Column] {
        &self.columns
    }

    pub fn column(&self, attribute: &str) -> Result<&[f64]> {
        self.columns
            .iter()
            .find(|c| c.name == attribute)
            .map(|c| c.data.as_slice())
            .ok_or_else(|| Error::Schema(format!("unknown attribute `{}.{attribute}`", self.name)))
    }

    pub fn attribute_names(&self) -> impl Iterator<Item = &str> {
        self.columns.iter().map(|c| c.name.as_str())
    }
}

/// An ordered collection of relations. The order defines catalog order.
#[derive(Debug, Clone, Default)]
pub struct Database {
    relations: Vec<Relation>,
}

impl Database {
    pub fn new(relations: Vec<Relation>) -> Result<Self> {
        let mut seen = HashSet::new();
        for rel in &relations {
            if !seen.insert(rel.name()) {
                return Err(Error::Schema(format!("duplicate relation `{}`", rel.name())));
            }
        }
        Ok(Self { relations })
    }

    pub fn relations(&self) -> &[Relation] {
        &self.relations
    }

    pub fn relation(&self, name: &str) -> Result<&Relation> {
        self.relations
            .iter()
            .find(|r| r.name() == name)
            .ok_or_else(|| Error::Schema(format!("unknown relation `{name}`")))
    }

    pub fn column(&self, col: &ColumnRef) -> Result<&[f64]> {
        self.relation(&col.relation)?.column(&col.attribute)
    }
}

/// A qualified attribute reference, written `relation.attribute`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct ColumnRef {
    pub relation: String,
    pub attribute: String,
}

impl ColumnRef {
    pub fn new(relation: impl Into<String>, attribute: impl Into<String>) -> Self {
        Self {
            relation: relation.into(),
            attribute: attribute.into(),
        }
    }
}

impl fmt::Display for ColumnRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}.{}", self.relation, self.attribute)
    }
}

impl FromStr for ColumnRef {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().split_once('.') {
            Some((rel, att)) if !rel.is_empty() && !att.is_empty() => Ok(ColumnRef::new(rel.trim(), att.trim())),
            _ => Err(Error::Schema(format!("expected `relation.attribute`, got `{s}`"))),
        }
    }
}

impl TryFrom<String> for ColumnRef {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<ColumnRef> for String {
    fn from(c: ColumnRef) -> String {
        c.to_string()
    }
}
