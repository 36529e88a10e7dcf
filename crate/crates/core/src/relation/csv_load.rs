use std::collections::HashMap;
use std::io::{Read, Write};
use std::path::Path;

use super::{Column, Relation};
use crate::error::{Error, Result};

/// Loads the declared `schema` attributes of a headered CSV file.
///
/// A column whose every value parses as a number is stored as-is; any other
/// column is dictionary-encoded with codes assigned in order of first
/// occurrence. Empty cells and non-finite numbers are rejected.
pub fn load_csv(path: impl AsRef<Path>, name: &str, schema: &[String]) -> Result<Relation> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_csv(file, name, schema)
}

pub fn read_csv<R: Read>(reader: R, name: &str, schema: &[String]) -> Result<Relation> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let header = rdr.headers()?.clone();
    let positions = schema
        .iter()
        .map(|att| {
            header
                .iter()
                .position(|h| h == att)
                .ok_or_else(|| Error::Schema(format!("attribute `{att}` missing from CSV header for `{name}`")))
        })
        .collect::<Result<Vec<_>>>()?;

    let mut raw: Vec<Vec<String>> = vec![Vec::new(); schema.len()];
    for (row, record) in rdr.records().enumerate() {
        // Row numbers are 1-based data rows.
        let record = record?;
        for (k, &pos) in positions.iter().enumerate() {
            let cell = record.get(pos).ok_or_else(|| Error::Parse {
                row: row + 1,
                column: schema[k].clone(),
                message: "missing field".into(),
            })?;
            if cell.is_empty() {
                return Err(Error::Parse {
                    row: row + 1,
                    column: schema[k].clone(),
                    message: "empty value (NULLs are not supported)".into(),
                });
            }
            raw[k].push(cell.to_string());
        }
    }

    let columns = schema
        .iter()
        .zip(raw)
        .map(|(att, cells)| {
            Ok(Column {
                name: att.clone(),
                data: encode_column(att, &cells)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Relation::new(name, columns)
}

/// Writes `rel` as CSV with a header line. Values use the shortest
/// representation that parses back to the same `f64`.
pub fn write_csv<W: Write>(rel: &Relation, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(rel.attribute_names())?;
    let mut row = Vec::with_capacity(rel.columns().len());
    for i in 0..rel.row_count() {
        row.clear();
        row.extend(rel.columns().iter().map(|c| c.data[i].to_string()));
        w.write_record(&row)?;
    }
    w.flush().map_err(|e| Error::io(rel.name(), e))
}

pub fn save_csv(rel: &Relation, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    write_csv(rel, std::io::BufWriter::new(file))
}

fn encode_column(att: &str, cells: &[String]) -> Result<Vec<f64>> {
    let parsed: Option<Vec<f64>> = cells.iter().map(|c| c.parse::<f64>().ok()).collect();
    match parsed {
        Some(values) => {
            if let Some(row) = values.iter().position(|v| !v.is_finite()) {
                return Err(Error::Parse {
                    row: row + 1,
                    column: att.to_string(),
                    message: format!("non-finite value `{}`", cells[row]),
                });
            }
            Ok(values)
        }
        None => {
            let mut dict: HashMap<&str, usize> = HashMap::new();
            Ok(cells
                .iter()
                .map(|c| {
                    let next = dict.len();
                    *dict.entry(c.as_str()).or_insert(next) as f64
                })
                .collect())
        }
    }
}
