//! Feature construction: static attributes, snapshot-history features,
//! historical entity win rates and ordered target encodings.
//!
//! A [`Featurizer`] is fitted on a set of training rows (imputation medians,
//! encoders, rate tables) and then transforms any rows of the same segment.
//! Every value for a row dated `t` depends only on the training rows and on
//! that opportunity's snapshots up to `t`.

mod encoder;
mod impute;
mod matrix;
mod rates;
mod temporal;

pub use encoder::{class_frequencies, fit_ordered_encoder, CategoryCounts, OrderedTargetEncoder};
pub use impute::train_median;
pub use matrix::*;
pub use rates::{build_historical_rates, category_of, closures_by_entity, Closure, RateTable, MISSING};
pub use temporal::{build_temporal_features, temporal_column_names, TemporalFeatures, OPEN_STAGES};

use std::collections::BTreeSet;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::domain::{AttrKind, AttributeDef, LabeledExample, OpportunitySnapshot, OutcomeClass, DEAL_VALUE, NUM_CLASSES};
use crate::error::{Error, Result};
use crate::labeling::LabeledDataset;

/// Entity columns that get historical win rates when the spec does not list
/// them explicitly (those present in the data).
pub const DEFAULT_RATE_COLUMNS: [&str; 3] = ["client", "seller", "product"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EncoderSettings {
    pub prior_strength: f64,
    pub cluster_count: usize,
    /// Emit the cluster one-hot block next to the four class components.
    pub cluster_one_hot: bool,
}

impl Default for EncoderSettings {
    fn default() -> Self {
        EncoderSettings {
            prior_strength: 1.0,
            cluster_count: 16,
            cluster_one_hot: true,
        }
    }
}

/// Feature configuration, read from the schema JSON file.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FeatureSpec {
    /// Numeric attributes to use; all numeric attributes when absent.
    pub numeric: Option<Vec<String>>,
    /// Categorical attributes to target-encode; all when absent.
    pub categorical: Option<Vec<String>>,
    /// Categorical attributes that get historical win rates.
    pub rate_columns: Option<Vec<String>>,
    /// Skip the snapshot-history features.
    pub no_temporal: bool,
    pub encoder: EncoderSettings,
    /// Columns (or source attributes) kept out of the training matrix.
    pub non_train: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SchemaColumn {
    pub name: String,
    pub kind: ColumnKind,
    /// Attribute the column is computed from, if any.
    pub source: Option<String>,
    /// Encoder binding for target-encoded columns (the categorical source).
    pub encoder: Option<String>,
}

/// Ordered list of every column the featurizer computes, plus the subset
/// held out of training.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureSchema {
    pub columns: Vec<SchemaColumn>,
    pub non_train: BTreeSet<String>,
}

impl FeatureSchema {
    pub fn is_train(&self, c: &SchemaColumn) -> bool {
        !(self.non_train.contains(&c.name) || c.source.as_ref().is_some_and(|s| self.non_train.contains(s)))
    }

    /// Columns of the training matrix, in order.
    pub fn train_columns(&self) -> Vec<FeatureColumn> {
        self.columns
            .iter()
            .filter(|c| self.is_train(c))
            .map(|c| FeatureColumn {
                name: c.name.clone(),
                kind: c.kind,
            })
            .collect()
    }

    pub fn fingerprint(&self) -> String {
        fingerprint(&self.train_columns())
    }

    pub fn validate(&self) -> Result<()> {
        let mut seen = BTreeSet::new();
        for c in &self.columns {
            if !seen.insert(c.name.as_str()) {
                return Err(Error::Schema(format!("duplicate feature column `{}`", c.name)));
            }
            if c.kind == ColumnKind::StaticCategorical && c.encoder.is_none() {
                return Err(Error::Schema(format!("categorical column `{}` has no encoder", c.name)));
            }
        }
        for n in &self.non_train {
            let known = self.columns.iter().any(|c| &c.name == n || c.source.as_ref() == Some(n));
            if !known {
                return Err(Error::Schema(format!("non-train entry `{n}` matches no feature column")));
            }
        }
        if self.train_columns().is_empty() {
            return Err(Error::Schema("schema leaves no training columns".into()));
        }
        Ok(())
    }
}

fn selected(
    attributes: &[AttributeDef],
    wanted: &Option<Vec<String>>,
    kind: AttrKind,
    what: &str,
) -> Result<Vec<usize>> {
    match wanted {
        None => Ok((0..attributes.len()).filter(|&i| attributes[i].kind == kind).collect()),
        Some(names) => names
            .iter()
            .map(|n| match attributes.iter().position(|a| &a.name == n) {
                Some(i) if attributes[i].kind == kind => Ok(i),
                Some(_) => Err(Error::Schema(format!("{what} column `{n}` has the wrong kind"))),
                None => Err(Error::Schema(format!("{what} column `{n}` is not an attribute"))),
            })
            .collect(),
    }
}

/// Attribute indices each feature family is computed from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Layout {
    numeric: Vec<usize>,
    categorical: Vec<usize>,
    rates: Vec<usize>,
    temporal: bool,
    deal_value: Option<usize>,
}

fn layout(attributes: &[AttributeDef], spec: &FeatureSpec) -> Result<Layout> {
    if !(spec.encoder.prior_strength.is_finite() && spec.encoder.prior_strength > 0.0) {
        return Err(Error::InvalidConfig("encoder prior_strength must be positive".into()));
    }
    if spec.encoder.cluster_count == 0 {
        return Err(Error::InvalidConfig("encoder cluster_count must be at least 1".into()));
    }
    let rates = match &spec.rate_columns {
        Some(_) => selected(attributes, &spec.rate_columns, AttrKind::Categorical, "rate")?,
        None => DEFAULT_RATE_COLUMNS
            .iter()
            .filter_map(|n| {
                attributes
                    .iter()
                    .position(|a| a.name == *n && a.kind == AttrKind::Categorical)
            })
            .collect(),
    };
    Ok(Layout {
        numeric: selected(attributes, &spec.numeric, AttrKind::Numeric, "numeric")?,
        categorical: selected(attributes, &spec.categorical, AttrKind::Categorical, "categorical")?,
        rates,
        temporal: !spec.no_temporal,
        deal_value: attributes
            .iter()
            .position(|a| a.name == DEAL_VALUE && a.kind == AttrKind::Numeric),
    })
}

fn column(name: String, kind: ColumnKind, source: Option<&str>, encoder: Option<&str>) -> SchemaColumn {
    SchemaColumn {
        name,
        kind,
        source: source.map(str::to_string),
        encoder: encoder.map(str::to_string),
    }
}

fn build_schema(attributes: &[AttributeDef], spec: &FeatureSpec, lay: &Layout) -> Result<FeatureSchema> {
    let mut columns = Vec::new();
    for &i in &lay.numeric {
        let n = &attributes[i].name;
        columns.push(column(n.clone(), ColumnKind::StaticNumeric, Some(n), None));
    }
    for &i in &lay.categorical {
        let n = &attributes[i].name;
        for k in 0..NUM_CLASSES {
            columns.push(column(format!("{n}_te{k}"), ColumnKind::StaticCategorical, Some(n), Some(n)));
        }
        if spec.encoder.cluster_one_hot {
            for j in 0..spec.encoder.cluster_count {
                columns.push(column(format!("{n}_cl{j:02}"), ColumnKind::StaticCategorical, Some(n), Some(n)));
            }
        }
    }
    if lay.temporal {
        for name in temporal_column_names(lay.deal_value.is_some()) {
            columns.push(column(name, ColumnKind::Temporal, None, None));
        }
    }
    for &i in &lay.rates {
        let n = &attributes[i].name;
        columns.push(column(format!("{n}_win_rate"), ColumnKind::DerivedRate, Some(n), None));
        columns.push(column(format!("{n}_closed_count"), ColumnKind::DerivedRate, Some(n), None));
    }
    let schema = FeatureSchema {
        columns,
        non_train: spec.non_train.iter().cloned().collect(),
    };
    schema.validate()?;
    Ok(schema)
}

/// Schema the spec produces for the given attributes, without fitting.
pub fn schema_for(attributes: &[AttributeDef], spec: &FeatureSpec) -> Result<FeatureSchema> {
    build_schema(attributes, spec, &layout(attributes, spec)?)
}

/// Fitted feature pipeline for one segment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Featurizer {
    pub spec: FeatureSpec,
    pub schema: FeatureSchema,
    pub attributes: Vec<AttributeDef>,
    layout: Layout,
    medians: Vec<f64>,
    encoders: Vec<OrderedTargetEncoder>,
    rate_tables: Vec<RateTable>,
    train_mask: Vec<bool>,
}

/// For every example, the index where its opportunity's run starts. The
/// examples must be sorted by (opportunity, date) without duplicates.
fn run_starts(examples: &[LabeledExample]) -> Result<Vec<usize>> {
    let mut starts = Vec::with_capacity(examples.len());
    for (i, e) in examples.iter().enumerate() {
        if i == 0 {
            starts.push(0);
            continue;
        }
        let prev = &examples[i - 1].snapshot;
        let cur = &e.snapshot;
        let order = (&prev.opportunity_id, prev.record_date).cmp(&(&cur.opportunity_id, cur.record_date));
        if order != std::cmp::Ordering::Less {
            return Err(Error::invalid(format!(
                "examples not in (opportunity, date) order at {} {}",
                cur.opportunity_id, cur.record_date
            )));
        }
        starts.push(if prev.opportunity_id == cur.opportunity_id {
            starts[i - 1]
        } else {
            i
        });
    }
    Ok(starts)
}

fn check_rows(rows: &[usize], n: usize) -> Result<()> {
    match rows.iter().find(|&&r| r >= n) {
        Some(r) => Err(Error::invalid(format!("row {r} out of range for {n} examples"))),
        None => Ok(()),
    }
}

impl Featurizer {
    /// Fits on `train_rows` of `data` and returns the fitted pipeline with
    /// the training matrix (ordered encodings for categorical columns).
    pub fn fit(spec: &FeatureSpec, data: &LabeledDataset, train_rows: &[usize], seed: u64) -> Result<(Featurizer, FeatureMatrix)> {
        let lay = layout(&data.attributes, spec)?;
        let schema = build_schema(&data.attributes, spec, &lay)?;
        if train_rows.is_empty() {
            return Err(Error::invalid("cannot fit features on zero training rows"));
        }
        check_rows(train_rows, data.len())?;
        let train: Vec<&LabeledExample> = train_rows.iter().map(|&r| &data.examples[r]).collect();
        let labels: Vec<OutcomeClass> = train.iter().map(|e| e.label).collect();
        let prior = class_frequencies(&labels);

        let medians = lay
            .numeric
            .iter()
            .map(|&a| {
                let values: Vec<Option<f64>> = train.iter().map(|e| e.snapshot.attrs[a].as_num()).collect();
                train_median(&values, &data.attributes[a].name)
            })
            .collect::<Result<Vec<f64>>>()?;

        let fitted: Vec<(OrderedTargetEncoder, Vec<[f64; NUM_CLASSES]>)> = lay
            .categorical
            .par_iter()
            .map(|&a| {
                let values: Vec<&str> = train.iter().map(|e| category_of(&e.snapshot.attrs[a])).collect();
                let column_seed = crate::seed::derive(seed, &format!("features/encoder/{}", data.attributes[a].name));
                fit_ordered_encoder(
                    &values,
                    &labels,
                    prior,
                    column_seed,
                    spec.encoder.prior_strength,
                    spec.encoder.cluster_count,
                )
            })
            .collect::<Result<_>>()?;
        let (encoders, ordered): (Vec<_>, Vec<_>) = fitted.into_iter().unzip();

        let rate_tables = lay
            .rates
            .iter()
            .map(|&a| RateTable::fit(&train, a, prior[OutcomeClass::Win.index()]))
            .collect();
        let train_mask = schema.columns.iter().map(|c| schema.is_train(c)).collect();
        let featurizer = Featurizer {
            spec: spec.clone(),
            schema,
            attributes: data.attributes.clone(),
            layout: lay,
            medians,
            encoders,
            rate_tables,
            train_mask,
        };
        let matrix = featurizer.build(data, train_rows, Some(&ordered))?;
        Ok((featurizer, matrix))
    }

    /// Matrix for arbitrary rows of a dataset with the same attributes,
    /// using the fitted statistics.
    pub fn transform(&self, data: &LabeledDataset, rows: &[usize]) -> Result<FeatureMatrix> {
        if data.attributes != self.attributes {
            return Err(Error::Schema("dataset attributes differ from the fitted featurizer's".into()));
        }
        check_rows(rows, data.len())?;
        self.build(data, rows, None)
    }

    pub fn fingerprint(&self) -> String {
        self.schema.fingerprint()
    }

    fn build(
        &self,
        data: &LabeledDataset,
        rows: &[usize],
        ordered: Option<&[Vec<[f64; NUM_CLASSES]>]>,
    ) -> Result<FeatureMatrix> {
        let starts = run_starts(&data.examples)?;
        let row_values: Vec<Vec<f64>> = rows
            .par_iter()
            .enumerate()
            .map(|(pos, &r)| {
                let history: Vec<&OpportunitySnapshot> =
                    data.examples[starts[r]..=r].iter().map(|e| &e.snapshot).collect();
                let encoded: Vec<[f64; NUM_CLASSES]> = match ordered {
                    Some(o) => o.iter().map(|col| col[pos]).collect(),
                    None => self
                        .layout
                        .categorical
                        .iter()
                        .zip(&self.encoders)
                        .map(|(&a, enc)| enc.encode(category_of(&data.examples[r].snapshot.attrs[a])))
                        .collect(),
                };
                self.row(&history, &encoded)
            })
            .collect::<Result<_>>()?;

        let columns = self.schema.train_columns();
        let mut values = Vec::with_capacity(rows.len() * columns.len());
        for full in &row_values {
            values.extend(full.iter().zip(&self.train_mask).filter(|(_, &keep)| keep).map(|(v, _)| *v));
        }
        let keys = rows
            .iter()
            .map(|&r| RowKey {
                opportunity_id: data.examples[r].snapshot.opportunity_id.clone(),
                record_date: data.examples[r].snapshot.record_date,
            })
            .collect();
        let labels = rows.iter().map(|&r| data.examples[r].label).collect();
        FeatureMatrix::new(columns, values, keys, labels)
    }

    /// All schema columns for the last snapshot of `history`.
    fn row(&self, history: &[&OpportunitySnapshot], encoded: &[[f64; NUM_CLASSES]]) -> Result<Vec<f64>> {
        let snap = *history.last().expect("history holds the row itself");
        let mut out = Vec::with_capacity(self.schema.columns.len());
        for (&a, &median) in self.layout.numeric.iter().zip(&self.medians) {
            out.push(snap.attrs[a].as_num().unwrap_or(median));
        }
        for ((&a, enc), e) in self.layout.categorical.iter().zip(&self.encoders).zip(encoded) {
            out.extend_from_slice(e);
            if self.spec.encoder.cluster_one_hot {
                let c = enc.cluster_of(category_of(&snap.attrs[a]));
                out.extend((0..self.spec.encoder.cluster_count).map(|j| if j == c { 1.0 } else { 0.0 }));
            }
        }
        if self.layout.temporal {
            let t = build_temporal_features(history, self.layout.deal_value)?;
            out.extend(t.values(self.layout.deal_value.is_some()));
        }
        for (&a, table) in self.layout.rates.iter().zip(&self.rate_tables) {
            let (rate, n) = table.rate(category_of(&snap.attrs[a]), snap.record_date);
            out.push(rate);
            out.push(n);
        }
        debug_assert_eq!(out.len(), self.schema.columns.len());
        Ok(out)
    }
}
