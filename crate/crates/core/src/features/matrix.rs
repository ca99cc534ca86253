use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::domain::OutcomeClass;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ColumnKind {
    StaticNumeric,
    StaticCategorical,
    Temporal,
    DerivedRate,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct FeatureColumn {
    pub name: String,
    pub kind: ColumnKind,
}

/// Hex SHA-256 over the ordered column names and kinds.
pub fn fingerprint(columns: &[FeatureColumn]) -> String {
    let mut h = Sha256::new();
    for c in columns {
        h.update(c.name.as_bytes());
        h.update([0u8]);
        h.update(serde_json::to_string(&c.kind).expect("kind serializes").as_bytes());
        h.update([0xffu8]);
    }
    hex::encode(h.finalize())
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct RowKey {
    pub opportunity_id: String,
    pub record_date: NaiveDate,
}

/// Dense row-major feature matrix with one label per row. Every value is
/// finite.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureMatrix {
    pub columns: Vec<FeatureColumn>,
    pub fingerprint: String,
    pub n_rows: usize,
    pub values: Vec<f64>,
    pub keys: Vec<RowKey>,
    pub labels: Vec<OutcomeClass>,
}

pub const MATRIX_MAGIC: &[u8; 8] = b"TRFEATS\0";
pub const MATRIX_VERSION: u32 = 1;

impl FeatureMatrix {
    pub fn new(
        columns: Vec<FeatureColumn>,
        values: Vec<f64>,
        keys: Vec<RowKey>,
        labels: Vec<OutcomeClass>,
    ) -> Result<Self> {
        let n_rows = labels.len();
        if values.len() != n_rows * columns.len() {
            return Err(Error::invalid(format!(
                "{} values for {n_rows} rows x {} columns",
                values.len(),
                columns.len()
            )));
        }
        if !keys.is_empty() && keys.len() != n_rows {
            return Err(Error::invalid(format!("{} row keys for {n_rows} rows", keys.len())));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            let col = &columns[i % columns.len()].name;
            return Err(Error::invalid(format!(
                "non-finite value {} in row {} column `{col}`",
                values[i],
                i / columns.len()
            )));
        }
        Ok(FeatureMatrix {
            fingerprint: fingerprint(&columns),
            columns,
            n_rows,
            values,
            keys,
            labels,
        })
    }

    /// Unkeyed numeric matrix, mostly for tests and ad-hoc data.
    pub fn from_rows(names: &[&str], rows: &[Vec<f64>], labels: Vec<OutcomeClass>) -> Result<Self> {
        let columns = names
            .iter()
            .map(|n| FeatureColumn {
                name: n.to_string(),
                kind: ColumnKind::StaticNumeric,
            })
            .collect();
        let mut values = Vec::with_capacity(rows.len() * names.len());
        for r in rows {
            if r.len() != names.len() {
                return Err(Error::invalid(format!("row of {} values, expected {}", r.len(), names.len())));
            }
            values.extend_from_slice(r);
        }
        FeatureMatrix::new(columns, values, Vec::new(), labels)
    }

    pub fn n_cols(&self) -> usize {
        self.columns.len()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let m = self.n_cols();
        &self.values[i * m..(i + 1) * m]
    }

    pub fn column_names(&self) -> Vec<String> {
        self.columns.iter().map(|c| c.name.clone()).collect()
    }

    /// Rows at the given indices, in that order.
    pub fn select_rows(&self, rows: &[usize]) -> FeatureMatrix {
        let m = self.n_cols();
        let mut values = Vec::with_capacity(rows.len() * m);
        for &r in rows {
            values.extend_from_slice(self.row(r));
        }
        FeatureMatrix {
            columns: self.columns.clone(),
            fingerprint: self.fingerprint.clone(),
            n_rows: rows.len(),
            values,
            keys: if self.keys.is_empty() {
                Vec::new()
            } else {
                rows.iter().map(|&r| self.keys[r].clone()).collect()
            },
            labels: rows.iter().map(|&r| self.labels[r]).collect(),
        }
    }

    /// Copy without the named columns.
    pub fn drop_columns(&self, names: &[String]) -> FeatureMatrix {
        let keep: Vec<usize> = (0..self.n_cols())
            .filter(|&j| !names.contains(&self.columns[j].name))
            .collect();
        let columns: Vec<FeatureColumn> = keep.iter().map(|&j| self.columns[j].clone()).collect();
        let mut values = Vec::with_capacity(self.n_rows * keep.len());
        for i in 0..self.n_rows {
            let row = self.row(i);
            values.extend(keep.iter().map(|&j| row[j]));
        }
        FeatureMatrix {
            fingerprint: fingerprint(&columns),
            columns,
            n_rows: self.n_rows,
            values,
            keys: self.keys.clone(),
            labels: self.labels.clone(),
        }
    }

    pub fn to_cache_bytes(&self) -> Result<Vec<u8>> {
        crate::cache::to_bytes(MATRIX_MAGIC, MATRIX_VERSION, self)
    }

    pub fn from_cache_bytes(bytes: &[u8]) -> Result<Self> {
        let m: FeatureMatrix = crate::cache::from_bytes(MATRIX_MAGIC, MATRIX_VERSION, bytes)?;
        if m.fingerprint != fingerprint(&m.columns) {
            return Err(Error::Schema("matrix fingerprint does not match its columns".into()));
        }
        Ok(m)
    }
}
