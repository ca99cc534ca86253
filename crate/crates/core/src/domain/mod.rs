//! Core vocabulary: sales stage codes, outcome classes, segments and weekly
//! opportunity snapshots.

mod io;

pub use io::{read_csv, write_csv, DATASET_MAGIC, DATASET_VERSION};

use std::collections::HashSet;
use std::fmt;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Attribute carrying the opportunity's contract value.
pub const DEAL_VALUE: &str = "deal_value";

/// A CRM sales stage code in `1..=11`. Codes 1 to 6 are open, 7 to 11 closed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub struct SalesStageCode(u8);

impl SalesStageCode {
    pub const MIN: u8 = 1;
    pub const MAX: u8 = 11;
    pub const LAST_OPEN: u8 = 6;

    pub fn new(code: u8) -> Result<Self> {
        if (Self::MIN..=Self::MAX).contains(&code) {
            Ok(SalesStageCode(code))
        } else {
            Err(Error::invalid(format!(
                "sales stage code {code} outside 1..=11"
            )))
        }
    }

    pub fn get(self) -> u8 {
        self.0
    }

    pub fn is_open(self) -> bool {
        self.0 <= Self::LAST_OPEN
    }

    pub fn is_closed(self) -> bool {
        !self.is_open()
    }

    /// Outcome reached at this stage, `None` while the opportunity is open.
    pub fn outcome(self) -> Option<OutcomeClass> {
        match self.0 {
            7 | 8 => Some(OutcomeClass::Win),
            9 => Some(OutcomeClass::NoBid),
            10 => Some(OutcomeClass::CustomerDidNotPursue),
            11 => Some(OutcomeClass::LostToCompetition),
            _ => None,
        }
    }

    /// CRM display name.
    pub fn name(self) -> &'static str {
        match self.0 {
            1 => "Noticing",
            2 => "Noticed/Identifying",
            3 => "Identified/Validating",
            4 => "Validated/Qualifying",
            5 => "Qualified/Gaining Agreement",
            6 => "Cond. Agreed/Closing",
            7 => "Won/Implementing",
            8 => "Won and Complete",
            9 => "No Bid",
            10 => "Customer Did Not Pursue",
            _ => "Lost to Competition",
        }
    }

    /// Stage code a closed opportunity of the given class lands in. Wins map
    /// to 7 (won/implementing).
    pub fn closing_stage(class: OutcomeClass) -> Self {
        SalesStageCode(match class {
            OutcomeClass::Win => 7,
            OutcomeClass::NoBid => 9,
            OutcomeClass::CustomerDidNotPursue => 10,
            OutcomeClass::LostToCompetition => 11,
        })
    }
}

impl TryFrom<u8> for SalesStageCode {
    type Error = Error;

    fn try_from(code: u8) -> Result<Self> {
        SalesStageCode::new(code)
    }
}

impl From<SalesStageCode> for u8 {
    fn from(code: SalesStageCode) -> u8 {
        code.0
    }
}

impl fmt::Display for SalesStageCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:02}", self.0)
    }
}

/// Maps a raw stage code to its outcome label.
pub fn label_for_stage(code: u8) -> Result<Option<OutcomeClass>> {
    Ok(SalesStageCode::new(code)?.outcome())
}

pub fn is_closed(code: SalesStageCode) -> bool {
    code.is_closed()
}

/// Terminal outcome of a tender. The integer labels are part of every file
/// format and must not change.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub enum OutcomeClass {
    Win = 0,
    NoBid = 1,
    CustomerDidNotPursue = 2,
    LostToCompetition = 3,
}

pub const NUM_CLASSES: usize = 4;

impl OutcomeClass {
    pub const ALL: [OutcomeClass; NUM_CLASSES] = [
        OutcomeClass::Win,
        OutcomeClass::NoBid,
        OutcomeClass::CustomerDidNotPursue,
        OutcomeClass::LostToCompetition,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(index: usize) -> Result<Self> {
        Self::ALL
            .get(index)
            .copied()
            .ok_or_else(|| Error::invalid(format!("class label {index} outside 0..=3")))
    }

    pub fn name(self) -> &'static str {
        match self {
            OutcomeClass::Win => "Win",
            OutcomeClass::NoBid => "NoBid",
            OutcomeClass::CustomerDidNotPursue => "CustomerDidNotPursue",
            OutcomeClass::LostToCompetition => "LostToCompetition",
        }
    }
}

impl TryFrom<u8> for OutcomeClass {
    type Error = Error;

    fn try_from(v: u8) -> Result<Self> {
        OutcomeClass::from_index(v as usize)
    }
}

impl From<OutcomeClass> for u8 {
    fn from(c: OutcomeClass) -> u8 {
        c as u8
    }
}

/// (business unit, geography) pair. Each segment gets its own model.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct SegmentKey {
    pub business_unit: String,
    pub geography: String,
}

impl SegmentKey {
    pub fn new(business_unit: impl Into<String>, geography: impl Into<String>) -> Self {
        SegmentKey {
            business_unit: business_unit.into(),
            geography: geography.into(),
        }
    }

    /// Parses the `BU/GEO` form produced by `Display`.
    pub fn parse(s: &str) -> Result<Self> {
        match s.split_once('/') {
            Some((bu, geo)) if !bu.is_empty() && !geo.is_empty() => Ok(SegmentKey::new(bu, geo)),
            _ => Err(Error::invalid(format!(
                "segment `{s}` is not of the form BUSINESS_UNIT/GEOGRAPHY"
            ))),
        }
    }
}

impl fmt::Display for SegmentKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.business_unit, self.geography)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum AttrKind {
    Numeric,
    Categorical,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct AttributeDef {
    pub name: String,
    pub kind: AttrKind,
}

impl AttributeDef {
    pub fn numeric(name: impl Into<String>) -> Self {
        AttributeDef {
            name: name.into(),
            kind: AttrKind::Numeric,
        }
    }

    pub fn categorical(name: impl Into<String>) -> Self {
        AttributeDef {
            name: name.into(),
            kind: AttrKind::Categorical,
        }
    }
}

/// One attribute cell. Absence is its own state, never a sentinel number.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum AttrValue {
    Num(f64),
    Cat(String),
    Missing,
}

impl AttrValue {
    pub fn is_missing(&self) -> bool {
        matches!(self, AttrValue::Missing)
    }

    pub fn as_num(&self) -> Option<f64> {
        match self {
            AttrValue::Num(v) => Some(*v),
            _ => None,
        }
    }

    pub fn as_cat(&self) -> Option<&str> {
        match self {
            AttrValue::Cat(s) => Some(s),
            _ => None,
        }
    }
}

/// One weekly CRM record of one opportunity. `attrs` is aligned with the
/// owning dataset's attribute list.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OpportunitySnapshot {
    pub opportunity_id: String,
    pub record_date: NaiveDate,
    pub sales_stage: SalesStageCode,
    pub segment: SegmentKey,
    pub attrs: Vec<AttrValue>,
}

/// Open snapshot paired with the outcome its opportunity eventually reached.
/// `closed_on` is the date of the first closed snapshot of the opportunity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledExample {
    pub snapshot: OpportunitySnapshot,
    pub label: OutcomeClass,
    pub closed_on: NaiveDate,
}

/// A set of snapshots sharing one attribute layout.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SnapshotDataset {
    pub attributes: Vec<AttributeDef>,
    pub snapshots: Vec<OpportunitySnapshot>,
}

impl SnapshotDataset {
    pub fn new(attributes: Vec<AttributeDef>, snapshots: Vec<OpportunitySnapshot>) -> Result<Self> {
        let ds = SnapshotDataset {
            attributes,
            snapshots,
        };
        ds.validate()?;
        Ok(ds)
    }

    pub fn attr_index(&self, name: &str) -> Option<usize> {
        self.attributes.iter().position(|a| a.name == name)
    }

    /// Checks attribute layout, cell kinds, non-negative deal values and
    /// `(opportunity_id, record_date)` uniqueness.
    pub fn validate(&self) -> Result<()> {
        let mut names = HashSet::new();
        for a in &self.attributes {
            if !names.insert(a.name.as_str()) {
                return Err(Error::Schema(format!("duplicate attribute `{}`", a.name)));
            }
        }
        let deal = self.attr_index(DEAL_VALUE);
        let mut keys = HashSet::with_capacity(self.snapshots.len());
        for s in &self.snapshots {
            if s.attrs.len() != self.attributes.len() {
                return Err(Error::Schema(format!(
                    "snapshot {}@{} has {} attributes, expected {}",
                    s.opportunity_id,
                    s.record_date,
                    s.attrs.len(),
                    self.attributes.len()
                )));
            }
            for (value, def) in s.attrs.iter().zip(&self.attributes) {
                let ok = match (value, def.kind) {
                    (AttrValue::Missing, _) => true,
                    (AttrValue::Num(v), AttrKind::Numeric) => v.is_finite(),
                    (AttrValue::Cat(c), AttrKind::Categorical) => !c.is_empty(),
                    _ => false,
                };
                if !ok {
                    return Err(Error::Schema(format!(
                        "attribute `{}` of {}@{} holds {:?}, incompatible with {:?}",
                        def.name, s.opportunity_id, s.record_date, value, def.kind
                    )));
                }
            }
            if let Some(i) = deal {
                if let AttrValue::Num(v) = s.attrs[i] {
                    if v < 0.0 {
                        return Err(Error::DataIntegrity(format!(
                            "negative deal value {v} for {}@{}",
                            s.opportunity_id, s.record_date
                        )));
                    }
                }
            }
            if !keys.insert((s.opportunity_id.as_str(), s.record_date)) {
                return Err(Error::DataIntegrity(format!(
                    "duplicate snapshot ({}, {})",
                    s.opportunity_id, s.record_date
                )));
            }
        }
        Ok(())
    }

    pub fn to_cache_bytes(&self) -> Result<Vec<u8>> {
        crate::cache::to_bytes(DATASET_MAGIC, DATASET_VERSION, self)
    }

    pub fn from_cache_bytes(bytes: &[u8]) -> Result<Self> {
        let ds: SnapshotDataset = crate::cache::from_bytes(DATASET_MAGIC, DATASET_VERSION, bytes)?;
        ds.validate()?;
        Ok(ds)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn table_one_labels() {
        assert_eq!(label_for_stage(7).unwrap(), Some(OutcomeClass::Win));
        assert_eq!(label_for_stage(8).unwrap(), Some(OutcomeClass::Win));
        assert_eq!(label_for_stage(9).unwrap(), Some(OutcomeClass::NoBid));
        assert_eq!(
            label_for_stage(10).unwrap(),
            Some(OutcomeClass::CustomerDidNotPursue)
        );
        assert_eq!(
            label_for_stage(11).unwrap(),
            Some(OutcomeClass::LostToCompetition)
        );
        assert_eq!(label_for_stage(11).unwrap().unwrap().index(), 3);
        assert_eq!(label_for_stage(3).unwrap(), None);
    }

    #[test]
    fn out_of_range_codes_rejected() {
        assert!(matches!(label_for_stage(0), Err(Error::InvalidInput(_))));
        assert!(matches!(label_for_stage(12), Err(Error::InvalidInput(_))));
    }

    #[test]
    fn open_closed_partition() {
        assert!(!is_closed(SalesStageCode::new(6).unwrap()));
        assert!(is_closed(SalesStageCode::new(7).unwrap()));
        assert!(!is_closed(SalesStageCode::new(1).unwrap()));
        for c in 1..=11u8 {
            let code = SalesStageCode::new(c).unwrap();
            assert_ne!(code.is_open(), code.is_closed());
            assert_eq!(code.outcome().is_some(), code.is_closed());
            assert_eq!(code.is_closed(), c >= 7);
        }
    }

    #[test]
    fn closing_stage_round_trips() {
        for class in OutcomeClass::ALL {
            assert_eq!(SalesStageCode::closing_stage(class).outcome(), Some(class));
        }
    }

    #[test]
    fn class_labels_serialize_as_integers() {
        let json = serde_json::to_string(&OutcomeClass::ALL).unwrap();
        assert_eq!(json, "[0,1,2,3]");
        let back: Vec<OutcomeClass> = serde_json::from_str(&json).unwrap();
        assert_eq!(back, OutcomeClass::ALL);
        assert!(serde_json::from_str::<OutcomeClass>("4").is_err());
    }

    #[test]
    fn segment_parse_display() {
        let s = SegmentKey::parse("BU1/GEO4").unwrap();
        assert_eq!(s, SegmentKey::new("BU1", "GEO4"));
        assert_eq!(s.to_string(), "BU1/GEO4");
        assert!(SegmentKey::parse("BU1").is_err());
    }

    fn snap(id: &str, day: u32, deal: f64) -> OpportunitySnapshot {
        OpportunitySnapshot {
            opportunity_id: id.into(),
            record_date: NaiveDate::from_ymd_opt(2019, 1, day).unwrap(),
            sales_stage: SalesStageCode::new(2).unwrap(),
            segment: SegmentKey::new("BU1", "GEO1"),
            attrs: vec![AttrValue::Num(deal)],
        }
    }

    #[test]
    fn validation_catches_duplicates_and_negative_deals() {
        let attrs = vec![AttributeDef::numeric(DEAL_VALUE)];
        let dup = SnapshotDataset::new(attrs.clone(), vec![snap("a", 1, 1.0), snap("a", 1, 2.0)]);
        assert!(matches!(dup, Err(Error::DataIntegrity(_))));
        let neg = SnapshotDataset::new(attrs.clone(), vec![snap("a", 1, -1.0)]);
        assert!(matches!(neg, Err(Error::DataIntegrity(_))));
        let ok = SnapshotDataset::new(attrs, vec![snap("a", 1, 0.0), snap("a", 8, 5.0)]);
        assert!(ok.is_ok());
    }
}
