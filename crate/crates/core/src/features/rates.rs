//! Historical win rates of entities (clients, sellers, products).
//!
//! An opportunity counts toward an entity's history at date `t` only if it
//! closed strictly before `t`, so same-day closures never leak.

use std::collections::BTreeMap;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::domain::{AttrValue, LabeledExample, OutcomeClass};

/// Category string used for a missing categorical value.
pub const MISSING: &str = "MISSING";

pub fn category_of(value: &AttrValue) -> &str {
    match value {
        AttrValue::Cat(s) => s,
        _ => MISSING,
    }
}

/// One closed opportunity: its closing date and whether it was won.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Closure {
    pub closed_on: NaiveDate,
    pub won: bool,
}

/// One closure per opportunity, keyed by the entity value of the
/// opportunity's latest snapshot among `examples`.
pub fn closures_by_entity(examples: &[&LabeledExample], attr: usize) -> BTreeMap<String, Vec<Closure>> {
    let mut latest: BTreeMap<&str, &LabeledExample> = BTreeMap::new();
    for e in examples {
        let id = e.snapshot.opportunity_id.as_str();
        match latest.get(id) {
            Some(prev) if prev.snapshot.record_date >= e.snapshot.record_date => {}
            _ => {
                latest.insert(id, e);
            }
        }
    }
    let mut out: BTreeMap<String, Vec<Closure>> = BTreeMap::new();
    for e in latest.values() {
        out.entry(category_of(&e.snapshot.attrs[attr]).to_string())
            .or_default()
            .push(Closure {
                closed_on: e.closed_on,
                won: e.label == OutcomeClass::Win,
            });
    }
    out
}

/// Win rate of every entity with at least one closure before `as_of`.
/// Entities absent from the map have no history and take the global prior.
pub fn build_historical_rates(
    examples: &[&LabeledExample],
    attr: usize,
    as_of: NaiveDate,
) -> BTreeMap<String, f64> {
    closures_by_entity(examples, attr)
        .into_iter()
        .filter_map(|(entity, cs)| {
            let before: Vec<&Closure> = cs.iter().filter(|c| c.closed_on < as_of).collect();
            if before.is_empty() {
                None
            } else {
                let wins = before.iter().filter(|c| c.won).count();
                Some((entity, wins as f64 / before.len() as f64))
            }
        })
        .collect()
}

/// Date-sorted closures with running win counts, for fast as-of queries.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Timeline {
    dates: Vec<NaiveDate>,
    /// `cumulative_wins[i]` = wins among the first `i + 1` closures.
    cumulative_wins: Vec<u32>,
}

impl Timeline {
    fn new(mut closures: Vec<Closure>) -> Timeline {
        closures.sort_by_key(|c| (c.closed_on, c.won));
        let mut wins = 0;
        let cumulative_wins = closures
            .iter()
            .map(|c| {
                wins += c.won as u32;
                wins
            })
            .collect();
        Timeline {
            dates: closures.iter().map(|c| c.closed_on).collect(),
            cumulative_wins,
        }
    }

    /// (wins, closures) strictly before `as_of`.
    fn before(&self, as_of: NaiveDate) -> (u32, u32) {
        let n = self.dates.partition_point(|&d| d < as_of);
        if n == 0 {
            (0, 0)
        } else {
            (self.cumulative_wins[n - 1], n as u32)
        }
    }
}

/// Fitted closure history of one entity column.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateTable {
    entities: BTreeMap<String, Timeline>,
    /// Rate for entities without history.
    pub prior: f64,
}

impl RateTable {
    pub fn fit(examples: &[&LabeledExample], attr: usize, prior: f64) -> RateTable {
        RateTable {
            entities: closures_by_entity(examples, attr)
                .into_iter()
                .map(|(k, v)| (k, Timeline::new(v)))
                .collect(),
            prior,
        }
    }

    /// (win rate, number of closures) for `entity` strictly before `as_of`.
    pub fn rate(&self, entity: &str, as_of: NaiveDate) -> (f64, f64) {
        match self.entities.get(entity).map(|t| t.before(as_of)) {
            Some((wins, n)) if n > 0 => (wins as f64 / n as f64, n as f64),
            _ => (self.prior, 0.0),
        }
    }
}
