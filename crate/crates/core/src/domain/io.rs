//! Snapshot CSV format.
//!
//! The header declares the fixed key columns followed by one column per
//! attribute, suffixed with its kind:
//!
//! ```text
//! opportunity_id,record_date,sales_stage,business_unit,geography,deal_value:num,client:cat,...
//! ```
//!
//! Dates are ISO `YYYY-MM-DD`, stage codes are integers, numbers use the
//! shortest representation that parses back to the identical `f64`, and an
//! empty cell is a missing value.

use std::io::{Read, Write};

use chrono::NaiveDate;

use super::{AttrKind, AttrValue, AttributeDef, OpportunitySnapshot, SalesStageCode, SegmentKey, SnapshotDataset};
use crate::error::{Error, Result};

pub const DATASET_MAGIC: &[u8; 8] = b"TRSNAPS\0";
pub const DATASET_VERSION: u32 = 1;

const KEY_COLUMNS: [&str; 5] = [
    "opportunity_id",
    "record_date",
    "sales_stage",
    "business_unit",
    "geography",
];

pub fn write_csv<W: Write>(dataset: &SnapshotDataset, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let mut header: Vec<String> = KEY_COLUMNS.iter().map(|s| s.to_string()).collect();
    for a in &dataset.attributes {
        let suffix = match a.kind {
            AttrKind::Numeric => "num",
            AttrKind::Categorical => "cat",
        };
        header.push(format!("{}:{suffix}", a.name));
    }
    w.write_record(&header)?;
    let mut record: Vec<String> = Vec::with_capacity(header.len());
    for s in &dataset.snapshots {
        record.clear();
        record.push(s.opportunity_id.clone());
        record.push(s.record_date.format("%Y-%m-%d").to_string());
        record.push(s.sales_stage.get().to_string());
        record.push(s.segment.business_unit.clone());
        record.push(s.segment.geography.clone());
        for v in &s.attrs {
            record.push(match v {
                AttrValue::Num(x) => format!("{x}"),
                AttrValue::Cat(c) => c.clone(),
                AttrValue::Missing => String::new(),
            });
        }
        w.write_record(&record)?;
    }
    w.flush().map_err(|e| Error::Format(e.to_string()))?;
    Ok(())
}

pub fn read_csv<R: Read>(reader: R) -> Result<SnapshotDataset> {
    let mut r = csv::Reader::from_reader(reader);
    let header = r.headers()?.clone();
    if header.len() < KEY_COLUMNS.len()
        || header.iter().zip(KEY_COLUMNS).any(|(h, k)| h != k)
    {
        return Err(Error::Schema(format!(
            "snapshot CSV must start with columns {}",
            KEY_COLUMNS.join(",")
        )));
    }
    let mut attributes = Vec::new();
    for col in header.iter().skip(KEY_COLUMNS.len()) {
        let (name, kind) = col
            .rsplit_once(':')
            .ok_or_else(|| Error::Schema(format!("column `{col}` lacks a :num/:cat kind suffix")))?;
        let kind = match kind {
            "num" => AttrKind::Numeric,
            "cat" => AttrKind::Categorical,
            other => return Err(Error::Schema(format!("unknown column kind `{other}` in `{col}`"))),
        };
        attributes.push(AttributeDef {
            name: name.to_string(),
            kind,
        });
    }

    let mut snapshots = Vec::new();
    for (line, rec) in r.records().enumerate() {
        let rec = rec?;
        let row = line + 2;
        let field = |i: usize| rec.get(i).unwrap_or("");
        let record_date = NaiveDate::parse_from_str(field(1), "%Y-%m-%d")
            .map_err(|e| Error::Format(format!("row {row}: bad record_date `{}`: {e}", field(1))))?;
        let code: u8 = field(2)
            .parse()
            .map_err(|_| Error::Format(format!("row {row}: bad sales_stage `{}`", field(2))))?;
        let mut attrs = Vec::with_capacity(attributes.len());
        for (j, def) in attributes.iter().enumerate() {
            let cell = field(KEY_COLUMNS.len() + j);
            attrs.push(if cell.is_empty() {
                AttrValue::Missing
            } else {
                match def.kind {
                    AttrKind::Numeric => AttrValue::Num(cell.parse().map_err(|_| {
                        Error::Format(format!("row {row}: `{}` is not a number: `{cell}`", def.name))
                    })?),
                    AttrKind::Categorical => AttrValue::Cat(cell.to_string()),
                }
            });
        }
        snapshots.push(OpportunitySnapshot {
            opportunity_id: field(0).to_string(),
            record_date,
            sales_stage: SalesStageCode::new(code)?,
            segment: SegmentKey::new(field(3), field(4)),
            attrs,
        });
    }
    SnapshotDataset::new(attributes, snapshots)
}
