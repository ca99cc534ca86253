//! Features computed from one opportunity's snapshot history up to a date.

use serde::{Deserialize, Serialize};

use crate::domain::{OpportunitySnapshot, SalesStageCode};
use crate::error::{Error, Result};

/// Number of open sales stages that get a dwell-time feature.
pub const OPEN_STAGES: usize = SalesStageCode::LAST_OPEN as usize;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TemporalFeatures {
    /// Stage code of the latest snapshot.
    pub sales_stage: f64,
    /// Weeks elapsed between the first and the latest snapshot.
    pub weeks_active: f64,
    /// Weeks spent in stages 1..=6. Each snapshot is credited with the gap
    /// to the next snapshot; the latest snapshot is credited one week.
    pub weeks_per_stage: [f64; OPEN_STAGES],
    /// `(latest - first) / |first|` over the non-missing deal values, 0 when
    /// undefined.
    pub deal_value_rel_change: f64,
    /// Largest absolute change between consecutive non-missing deal values.
    pub deal_value_max_step: f64,
    /// Snapshots per active week (active weeks floored at 1).
    pub update_frequency: f64,
}

/// Names of the temporal columns, in emission order.
pub fn temporal_column_names(with_deal_value: bool) -> Vec<String> {
    let mut names = vec!["sales_stage".to_string(), "weeks_active".to_string()];
    names.extend((1..=OPEN_STAGES).map(|s| format!("weeks_stage_{s}")));
    if with_deal_value {
        names.push("deal_value_rel_change".into());
        names.push("deal_value_max_step".into());
    }
    names.push("update_frequency".into());
    names
}

impl TemporalFeatures {
    pub fn values(&self, with_deal_value: bool) -> Vec<f64> {
        let mut v = vec![self.sales_stage, self.weeks_active];
        v.extend_from_slice(&self.weeks_per_stage);
        if with_deal_value {
            v.push(self.deal_value_rel_change);
            v.push(self.deal_value_max_step);
        }
        v.push(self.update_frequency);
        v
    }
}

fn weeks_between(a: &OpportunitySnapshot, b: &OpportunitySnapshot) -> f64 {
    (b.record_date - a.record_date).num_days() as f64 / 7.0
}

/// Builds the temporal features of the latest snapshot in `history`.
///
/// `history` must be one opportunity's snapshots sorted by strictly
/// increasing date; nothing after its last element is consulted.
/// `deal_value` is the attribute index of the deal value, if any.
pub fn build_temporal_features(
    history: &[&OpportunitySnapshot],
    deal_value: Option<usize>,
) -> Result<TemporalFeatures> {
    let (first, last) = match (history.first(), history.last()) {
        (Some(f), Some(l)) => (*f, *l),
        _ => return Err(Error::invalid("temporal features need a non-empty history")),
    };
    if history.windows(2).any(|w| w[0].record_date >= w[1].record_date) {
        return Err(Error::invalid(format!(
            "history of {} is not sorted by strictly increasing date",
            first.opportunity_id
        )));
    }

    let weeks_active = weeks_between(first, last);
    let mut weeks_per_stage = [0.0; OPEN_STAGES];
    for (i, snap) in history.iter().enumerate() {
        let credit = match history.get(i + 1) {
            Some(next) => weeks_between(snap, next),
            None => 1.0,
        };
        let stage = snap.sales_stage.get() as usize;
        if (1..=OPEN_STAGES).contains(&stage) {
            weeks_per_stage[stage - 1] += credit;
        }
    }

    let (mut rel_change, mut max_step) = (0.0, 0.0);
    if let Some(idx) = deal_value {
        let values: Vec<f64> = history.iter().filter_map(|s| s.attrs[idx].as_num()).collect();
        if let (Some(&f), Some(&l)) = (values.first(), values.last()) {
            if f != 0.0 {
                rel_change = (l - f) / f.abs();
            }
        }
        max_step = values.windows(2).map(|w| (w[1] - w[0]).abs()).fold(0.0, f64::max);
    }

    Ok(TemporalFeatures {
        sales_stage: last.sales_stage.get() as f64,
        weeks_active,
        weeks_per_stage,
        deal_value_rel_change: rel_change,
        deal_value_max_step: max_step,
        update_frequency: history.len() as f64 / weeks_active.max(1.0),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::{AttrValue, SegmentKey};
    use chrono::{Duration, NaiveDate};

    fn history(stages: &[u8], deals: &[Option<f64>]) -> Vec<OpportunitySnapshot> {
        let d0 = NaiveDate::from_ymd_opt(2020, 1, 6).unwrap();
        stages
            .iter()
            .zip(deals)
            .enumerate()
            .map(|(i, (&s, &d))| OpportunitySnapshot {
                opportunity_id: "op".into(),
                record_date: d0 + Duration::weeks(i as i64),
                sales_stage: SalesStageCode::new(s).unwrap(),
                segment: SegmentKey::new("BU", "GEO"),
                attrs: vec![d.map_or(AttrValue::Missing, AttrValue::Num)],
            })
            .collect()
    }

    #[test]
    fn weekly_three_snapshots() {
        let h = history(&[2, 2, 3], &[Some(100.0), Some(100.0), Some(120.0)]);
        let refs: Vec<&OpportunitySnapshot> = h.iter().collect();
        let f = build_temporal_features(&refs, Some(0)).unwrap();
        assert_eq!(f.weeks_per_stage, [0.0, 2.0, 1.0, 0.0, 0.0, 0.0]);
        assert!((f.deal_value_rel_change - 0.2).abs() < 1e-15);
        assert_eq!(f.deal_value_max_step, 20.0);
        assert_eq!(f.weeks_active, 2.0);
        assert_eq!(f.sales_stage, 3.0);
        assert_eq!(f.update_frequency, 1.5);
    }

    #[test]
    fn single_snapshot() {
        let h = history(&[4], &[Some(50.0)]);
        let f = build_temporal_features(&[&h[0]], Some(0)).unwrap();
        assert_eq!(f.weeks_active, 0.0);
        assert_eq!(f.deal_value_rel_change, 0.0);
        assert_eq!(f.deal_value_max_step, 0.0);
        assert_eq!(f.update_frequency, 1.0);
    }

    #[test]
    fn missing_deal_values_skipped() {
        let h = history(&[1, 1, 2], &[None, Some(10.0), Some(5.0)]);
        let refs: Vec<&OpportunitySnapshot> = h.iter().collect();
        let f = build_temporal_features(&refs, Some(0)).unwrap();
        assert_eq!(f.deal_value_rel_change, -0.5);
        assert_eq!(f.deal_value_max_step, 5.0);
    }

    #[test]
    fn errors() {
        assert!(build_temporal_features(&[], None).is_err());
        let h = history(&[1, 2], &[None, None]);
        assert!(build_temporal_features(&[&h[1], &h[0]], None).is_err());
    }

    #[test]
    fn names_match_values() {
        let h = history(&[1], &[Some(1.0)]);
        let f = build_temporal_features(&[&h[0]], Some(0)).unwrap();
        assert_eq!(f.values(true).len(), temporal_column_names(true).len());
        assert_eq!(f.values(false).len(), temporal_column_names(false).len());
    }
}
