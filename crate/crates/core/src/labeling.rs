//! Ground-truth labels from closed states.
//!
//! Every open snapshot of an opportunity is labeled with the outcome of the
//! opportunity's *first* closed snapshot. Closed snapshots themselves, and
//! anything dated after the first close, are dropped. Opportunities that never
//! close are set aside as in-flight.

use std::collections::BTreeMap;
use std::fmt;

use chrono::{Datelike, NaiveDate};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::domain::{
    AttributeDef, LabeledExample, OpportunitySnapshot, SalesStageCode, SegmentKey,
    SnapshotDataset, NUM_CLASSES,
};
use crate::error::{Error, Result};

pub const LABELED_MAGIC: &[u8; 8] = b"TRLABEL\0";
pub const LABELED_VERSION: u32 = 1;

/// Calendar quarter. Orders chronologically.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Quarter {
    pub year: i32,
    pub quarter: u8,
}

impl Quarter {
    /// Quarters since year 0, suitable for span arithmetic.
    pub fn ordinal(self) -> i64 {
        self.year as i64 * 4 + (self.quarter as i64 - 1)
    }

    pub fn from_ordinal(ordinal: i64) -> Self {
        Quarter {
            year: ordinal.div_euclid(4) as i32,
            quarter: (ordinal.rem_euclid(4) + 1) as u8,
        }
    }

    pub fn offset(self, quarters: i64) -> Self {
        Quarter::from_ordinal(self.ordinal() + quarters)
    }

    pub fn first_day(self) -> NaiveDate {
        NaiveDate::from_ymd_opt(self.year, 3 * (self.quarter as u32 - 1) + 1, 1)
            .expect("valid quarter start")
    }
}

impl fmt::Display for Quarter {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}Q{}", self.year, self.quarter)
    }
}

impl std::str::FromStr for Quarter {
    type Err = Error;

    /// Parses the `2018Q3` form produced by `Display`.
    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::invalid(format!("quarter `{s}` is not of the form YYYYQn"));
        let (y, q) = s.split_once(['Q', 'q']).ok_or_else(bad)?;
        let year: i32 = y.parse().map_err(|_| bad())?;
        let quarter: u8 = q.parse().map_err(|_| bad())?;
        if !(1..=4).contains(&quarter) {
            return Err(bad());
        }
        Ok(Quarter { year, quarter })
    }
}

pub fn quarter_of(date: NaiveDate) -> Quarter {
    Quarter {
        year: date.year(),
        quarter: (date.month0() / 3 + 1) as u8,
    }
}

/// Labeled open snapshots of one segment, canonically ordered by
/// `(opportunity_id, record_date)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledDataset {
    pub segment: SegmentKey,
    pub attributes: Vec<AttributeDef>,
    pub examples: Vec<LabeledExample>,
    pub class_counts: [usize; NUM_CLASSES],
}

impl LabeledDataset {
    pub fn new(segment: SegmentKey, attributes: Vec<AttributeDef>, mut examples: Vec<LabeledExample>) -> Self {
        canonical_sort(&mut examples);
        let class_counts = tally(&examples);
        LabeledDataset {
            segment,
            attributes,
            examples,
            class_counts,
        }
    }

    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }

    /// Distinct quarters spanned by the examples' record dates, ascending.
    pub fn quarters(&self) -> Vec<Quarter> {
        let mut qs: Vec<Quarter> = self
            .examples
            .iter()
            .map(|e| quarter_of(e.snapshot.record_date))
            .collect();
        qs.sort_unstable();
        qs.dedup();
        qs
    }

    /// Copy keeping only examples accepted by `keep`.
    pub fn filtered(&self, mut keep: impl FnMut(&LabeledExample) -> bool) -> LabeledDataset {
        let examples: Vec<LabeledExample> = self.examples.iter().filter(|e| keep(e)).cloned().collect();
        let class_counts = tally(&examples);
        LabeledDataset {
            segment: self.segment.clone(),
            attributes: self.attributes.clone(),
            examples,
            class_counts,
        }
    }

    /// Rebuilds a raw snapshot dataset: every open snapshot plus one closing
    /// snapshot per opportunity on its `closed_on` date.
    pub fn reflatten(&self) -> SnapshotDataset {
        let mut snapshots = Vec::with_capacity(self.examples.len());
        let mut i = 0;
        while i < self.examples.len() {
            let id = &self.examples[i].snapshot.opportunity_id;
            let mut j = i;
            while j < self.examples.len() && &self.examples[j].snapshot.opportunity_id == id {
                snapshots.push(self.examples[j].snapshot.clone());
                j += 1;
            }
            let last = &self.examples[j - 1];
            let mut closing = last.snapshot.clone();
            closing.record_date = last.closed_on;
            closing.sales_stage = SalesStageCode::closing_stage(last.label);
            snapshots.push(closing);
            i = j;
        }
        SnapshotDataset {
            attributes: self.attributes.clone(),
            snapshots,
        }
    }
}

fn canonical_sort(examples: &mut [LabeledExample]) {
    examples.sort_by(|a, b| {
        a.snapshot
            .opportunity_id
            .cmp(&b.snapshot.opportunity_id)
            .then(a.snapshot.record_date.cmp(&b.snapshot.record_date))
    });
}

pub fn tally(examples: &[LabeledExample]) -> [usize; NUM_CLASSES] {
    let mut counts = [0; NUM_CLASSES];
    for e in examples {
        counts[e.label.index()] += 1;
    }
    counts
}

/// Result of [`derive_labels`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Labeling {
    pub attributes: Vec<AttributeDef>,
    /// Canonically ordered labeled open snapshots across all segments.
    pub examples: Vec<LabeledExample>,
    /// Snapshots of opportunities that never reached a closed stage. Kept
    /// for scoring, never used for training.
    pub in_flight: Vec<OpportunitySnapshot>,
    /// Snapshots dated after an opportunity's first close.
    pub discarded_after_close: usize,
}

impl Labeling {
    pub fn in_flight_opportunities(&self) -> usize {
        let mut ids: Vec<&str> = self.in_flight.iter().map(|s| s.opportunity_id.as_str()).collect();
        ids.dedup();
        ids.len()
    }

    pub fn by_segment(&self) -> BTreeMap<SegmentKey, LabeledDataset> {
        partition_by_segment(&self.attributes, &self.examples)
    }
}

enum GroupOutcome {
    Closed {
        labeled: Vec<LabeledExample>,
        discarded: usize,
    },
    InFlight(Vec<OpportunitySnapshot>),
}

pub fn derive_labels(dataset: &SnapshotDataset) -> Result<Labeling> {
    let mut groups: BTreeMap<&str, Vec<&OpportunitySnapshot>> = BTreeMap::new();
    for s in &dataset.snapshots {
        groups.entry(s.opportunity_id.as_str()).or_default().push(s);
    }
    let groups: Vec<Vec<&OpportunitySnapshot>> = groups.into_values().collect();

    let outcomes: Vec<GroupOutcome> = groups
        .into_par_iter()
        .map(|mut history| {
            // stable: equal dates keep input order
            history.sort_by_key(|s| s.record_date);
            for pair in history.windows(2) {
                if pair[0].record_date == pair[1].record_date {
                    return Err(Error::DataIntegrity(format!(
                        "duplicate snapshot ({}, {})",
                        pair[0].opportunity_id, pair[0].record_date
                    )));
                }
            }
            let first_close = history.iter().position(|s| s.sales_stage.is_closed());
            Ok(match first_close {
                None => GroupOutcome::InFlight(history.into_iter().cloned().collect()),
                Some(idx) => {
                    let closing = history[idx];
                    let label = closing.sales_stage.outcome().expect("closed stage has outcome");
                    let labeled = history[..idx]
                        .iter()
                        .map(|s| LabeledExample {
                            snapshot: (*s).clone(),
                            label,
                            closed_on: closing.record_date,
                        })
                        .collect();
                    GroupOutcome::Closed {
                        labeled,
                        discarded: history.len() - idx - 1,
                    }
                }
            })
        })
        .collect::<Result<_>>()?;

    let mut examples = Vec::new();
    let mut in_flight = Vec::new();
    let mut discarded_after_close = 0;
    for outcome in outcomes {
        match outcome {
            GroupOutcome::Closed { labeled, discarded } => {
                examples.extend(labeled);
                discarded_after_close += discarded;
            }
            GroupOutcome::InFlight(h) => in_flight.extend(h),
        }
    }
    Ok(Labeling {
        attributes: dataset.attributes.clone(),
        examples,
        in_flight,
        discarded_after_close,
    })
}

pub fn partition_by_segment(
    attributes: &[AttributeDef],
    examples: &[LabeledExample],
) -> BTreeMap<SegmentKey, LabeledDataset> {
    let mut parts: BTreeMap<SegmentKey, Vec<LabeledExample>> = BTreeMap::new();
    for e in examples {
        parts.entry(e.snapshot.segment.clone()).or_default().push(e.clone());
    }
    parts
        .into_iter()
        .map(|(seg, ex)| {
            let ds = LabeledDataset::new(seg.clone(), attributes.to_vec(), ex);
            (seg, ds)
        })
        .collect()
}

/// Per-segment class-count table: counts with two-decimal fractions, then the
/// total.
pub fn class_count_table(segments: &BTreeMap<SegmentKey, LabeledDataset>) -> String {
    let mut out = String::from(
        "segment,class0,class0_frac,class1,class1_frac,class2,class2_frac,class3,class3_frac,total\n",
    );
    for (seg, ds) in segments {
        let total: usize = ds.class_counts.iter().sum();
        out.push_str(&seg.to_string());
        for c in ds.class_counts {
            let frac = if total == 0 { 0.0 } else { c as f64 / total as f64 };
            out.push_str(&format!(",{c},{frac:.2}"));
        }
        out.push_str(&format!(",{total}\n"));
    }
    out
}

pub fn write_labeled(path: &std::path::Path, segments: &BTreeMap<SegmentKey, LabeledDataset>) -> Result<()> {
    let list: Vec<&LabeledDataset> = segments.values().collect();
    crate::cache::write(path, LABELED_MAGIC, LABELED_VERSION, &list)
}

pub fn read_labeled(path: &std::path::Path) -> Result<BTreeMap<SegmentKey, LabeledDataset>> {
    let list: Vec<LabeledDataset> = crate::cache::read(path, LABELED_MAGIC, LABELED_VERSION)?;
    Ok(list.into_iter().map(|d| (d.segment.clone(), d)).collect())
}
