use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::catalog::{Catalog, DEFAULT_BUCKETS};
use crate::error::{Error, Result};
use crate::relation::{gen_synthetic, load_csv, ColumnSpec, Database, JoinPredicate, SyntheticSpec};

/// One relation of a database description: either a CSV file or a generated
/// relation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RelationSource {
    pub name: String,
    /// CSV file, relative to the config file.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub csv: Option<PathBuf>,
    /// Attributes to load from the CSV; all header columns when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub attributes: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rows: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub columns: Vec<ColumnSpec>,
}

impl RelationSource {
    pub fn synthetic(spec: SyntheticSpec) -> Self {
        Self {
            name: spec.name,
            csv: None,
            attributes: None,
            rows: Some(spec.rows),
            seed: Some(spec.seed),
            columns: spec.columns,
        }
    }

    pub fn synthetic_spec(&self) -> Option<SyntheticSpec> {
        Some(SyntheticSpec {
            name: self.name.clone(),
            rows: self.rows?,
            seed: self.seed.unwrap_or(0),
            columns: self.columns.clone(),
        })
    }
}

/// A database description: relations, declared join keys and bucket count.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatabaseConfig {
    #[serde(default = "default_buckets")]
    pub buckets: usize,
    pub relations: Vec<RelationSource>,
    /// Equi-join predicates written `R.a = S.b`.
    #[serde(default)]
    pub join_keys: Vec<String>,
}

fn default_buckets() -> usize {
    DEFAULT_BUCKETS
}

impl DatabaseConfig {
    pub fn from_toml_file(path: impl AsRef<Path>) -> Result<(Self, PathBuf)> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let cfg: Self = toml::from_str(&text).map_err(|e| Error::config(path.display().to_string(), e.to_string()))?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok((cfg, base))
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Encoding(e.to_string()))
    }

    pub fn join_predicates(&self) -> Result<Vec<JoinPredicate>> {
        self.join_keys
            .iter()
            .map(|s| s.parse().map_err(|e: Error| Error::config("join_keys", e.to_string())))
            .collect()
    }

    /// Loads or generates every relation. CSV paths resolve against `base`.
    pub fn build_database(&self, base: &Path) -> Result<Database> {
        let rels = self
            .relations
            .iter()
            .enumerate()
            .map(|(k, src)| match (&src.csv, src.synthetic_spec()) {
                (Some(path), None) => {
                    let path = base.join(path);
                    let attributes = match &src.attributes {
                        Some(a) => a.clone(),
                        None => csv_header(&path)?,
                    };
                    load_csv(&path, &src.name, &attributes)
                }
                (None, Some(spec)) => gen_synthetic(&spec, spec.seed),
                _ => Err(Error::config(
                    format!("relations[{k}]"),
                    "give exactly one of `csv` or `rows` + `columns`",
                )),
            })
            .collect::<Result<Vec<_>>>()?;
        Database::new(rels)
    }

    pub fn build(&self, base: &Path) -> Result<(Database, Catalog)> {
        if self.buckets == 0 {
            return Err(Error::config("buckets", "must be at least 1"));
        }
        let db = self.build_database(base)?;
        let catalog = Catalog::build(&db, &self.join_predicates()?, self.buckets)?;
        Ok((db, catalog))
    }
}

fn csv_header(path: &Path) -> Result<Vec<String>> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| Error::config(path.display().to_string(), e.to_string()))?;
    Ok(rdr.headers()?.iter().map(str::to_string).collect())
}
