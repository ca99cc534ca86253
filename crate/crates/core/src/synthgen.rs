//! Deterministic synthetic portfolio generator.
//!
//! Each opportunity draws a latent outcome class from its segment's class
//! mixture, walks monotonically through open sales stages with geometric
//! dwell times, and ends in exactly one closed snapshot whose stage code
//! encodes the drawn class. Attributes carry class-conditional signal:
//! informative numeric columns get a per-class mean shift, informative
//! categorical columns a per-class frequency skew, and `deal_value` drifts up
//! for wins and down for losses. The strength of all three is
//! `signal_strength`.
//!
//! Every segment draws from its own substream of the master seed, so the
//! output does not depend on how many worker threads generate it.

use chrono::{Days, NaiveDate};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Geometric, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::domain::{
    AttrValue, AttributeDef, OpportunitySnapshot, OutcomeClass, SalesStageCode,
    SegmentKey, SnapshotDataset, DEAL_VALUE, NUM_CLASSES,
};
use crate::error::{Error, Result};
use crate::labeling::quarter_of;
use crate::seed;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentSpec {
    pub business_unit: String,
    pub geography: String,
    pub opportunity_count: usize,
    /// Probabilities of Win, NoBid, CustomerDidNotPursue, LostToCompetition.
    pub class_mixture: [f64; NUM_CLASSES],
}

impl SegmentSpec {
    pub fn key(&self) -> SegmentKey {
        SegmentKey::new(&self.business_unit, &self.geography)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum AttributeSpec {
    Numeric {
        name: String,
        mean: f64,
        std: f64,
        #[serde(default)]
        informative: bool,
        /// Clamp at zero and round to whole numbers (counts).
        #[serde(default)]
        count: bool,
    },
    Categorical {
        name: String,
        cardinality: usize,
        #[serde(default)]
        informative: bool,
    },
}

impl AttributeSpec {
    pub fn name(&self) -> &str {
        match self {
            AttributeSpec::Numeric { name, .. } | AttributeSpec::Categorical { name, .. } => name,
        }
    }

    fn def(&self) -> AttributeDef {
        match self {
            AttributeSpec::Numeric { name, .. } => AttributeDef::numeric(name),
            AttributeSpec::Categorical { name, .. } => AttributeDef::categorical(name),
        }
    }

    pub fn numeric(name: &str, mean: f64, std: f64, informative: bool) -> Self {
        AttributeSpec::Numeric {
            name: name.into(),
            mean,
            std,
            informative,
            count: false,
        }
    }

    pub fn count(name: &str, mean: f64, std: f64, informative: bool) -> Self {
        AttributeSpec::Numeric {
            name: name.into(),
            mean,
            std,
            informative,
            count: true,
        }
    }

    pub fn categorical(name: &str, cardinality: usize, informative: bool) -> Self {
        AttributeSpec::Categorical {
            name: name.into(),
            cardinality,
            informative,
        }
    }
}

fn default_start() -> NaiveDate {
    NaiveDate::from_ymd_opt(2017, 1, 2).expect("valid date")
}

fn default_signal() -> f64 {
    1.0
}

/// Generator settings; the `synth` subcommand reads this as JSON.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorConfig {
    pub seed: u64,
    /// First snapshot week. The portfolio spans `quarters_span` calendar
    /// quarters starting with the quarter containing this date.
    #[serde(default = "default_start")]
    pub start_date: NaiveDate,
    pub quarters_span: u32,
    pub mean_lifetime_weeks: f64,
    #[serde(default)]
    pub missing_rate: f64,
    #[serde(default = "default_signal")]
    pub signal_strength: f64,
    pub segments: Vec<SegmentSpec>,
    pub attributes: Vec<AttributeSpec>,
}

impl GeneratorConfig {
    /// Attribute layout used by the CLI defaults: CRM-style static
    /// attributes plus generic numeric columns, about 20 attributes in all.
    pub fn default_attributes() -> Vec<AttributeSpec> {
        let mut attrs = vec![
            AttributeSpec::numeric(DEAL_VALUE, 2.0e6, 8.0e5, true),
            AttributeSpec::count("line_items", 6.0, 3.0, true),
            AttributeSpec::count("competitors", 2.0, 1.5, true),
            AttributeSpec::categorical("client", 300, true),
            AttributeSpec::categorical("seller", 80, true),
            AttributeSpec::categorical("product", 40, true),
            AttributeSpec::categorical("client_geography", 12, false),
            AttributeSpec::categorical("market", 20, true),
            AttributeSpec::categorical("owning_org", 8, false),
        ];
        for i in 0..10 {
            attrs.push(AttributeSpec::numeric(&format!("attr_{i:02}"), 0.0, 1.0, i % 2 == 0));
        }
        attrs
    }

    /// Two segments with contrasting class mixtures: a moderately balanced
    /// one and a heavily Win-dominated one.
    pub fn example() -> Self {
        GeneratorConfig {
            seed: 42,
            start_date: default_start(),
            quarters_span: 12,
            mean_lifetime_weeks: 12.0,
            missing_rate: 0.05,
            signal_strength: 1.0,
            segments: vec![
                SegmentSpec {
                    business_unit: "BU1".into(),
                    geography: "GEO1".into(),
                    opportunity_count: 1500,
                    class_mixture: [0.32, 0.19, 0.35, 0.14],
                },
                SegmentSpec {
                    business_unit: "BU2".into(),
                    geography: "GEO4".into(),
                    opportunity_count: 1500,
                    class_mixture: [0.68, 0.21, 0.08, 0.03],
                },
            ],
            attributes: Self::default_attributes(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if self.segments.is_empty() {
            return bad("no segments".into());
        }
        if self.quarters_span == 0 {
            return bad("quarters_span must be at least 1".into());
        }
        if !(self.mean_lifetime_weeks.is_finite() && self.mean_lifetime_weeks > 0.0) {
            return bad(format!("mean_lifetime_weeks {} must be positive", self.mean_lifetime_weeks));
        }
        if !(0.0..1.0).contains(&self.missing_rate) {
            return bad(format!("missing_rate {} outside [0, 1)", self.missing_rate));
        }
        if !(self.signal_strength.is_finite() && self.signal_strength >= 0.0) {
            return bad("signal_strength must be non-negative".into());
        }
        for s in &self.segments {
            if s.opportunity_count == 0 {
                return bad(format!("segment {} has zero opportunities", s.key()));
            }
            if s.class_mixture.iter().any(|p| !(p.is_finite() && *p >= 0.0)) {
                return bad(format!("segment {} has a negative mixture entry", s.key()));
            }
            let total: f64 = s.class_mixture.iter().sum();
            if (total - 1.0).abs() > 1e-9 {
                return bad(format!("segment {} mixture sums to {total}, not 1", s.key()));
            }
        }
        let mut keys: Vec<SegmentKey> = self.segments.iter().map(SegmentSpec::key).collect();
        keys.sort();
        if keys.windows(2).any(|w| w[0] == w[1]) {
            return bad("duplicate segment".into());
        }
        let mut names: Vec<&str> = self.attributes.iter().map(AttributeSpec::name).collect();
        names.sort_unstable();
        if names.windows(2).any(|w| w[0] == w[1]) {
            return bad("duplicate attribute name".into());
        }
        for a in &self.attributes {
            match a {
                AttributeSpec::Numeric { name, mean, std, .. } => {
                    if !(mean.is_finite() && std.is_finite() && *std >= 0.0) {
                        return bad(format!("numeric attribute `{name}` needs finite mean and std >= 0"));
                    }
                }
                AttributeSpec::Categorical { name, cardinality, .. } => {
                    if *cardinality == 0 {
                        return bad(format!("categorical attribute `{name}` has zero cardinality"));
                    }
                }
            }
            if a.name().is_empty() || a.name().contains([':', ',', '"', '\n']) {
                return bad(format!("attribute name `{}` is not CSV-safe", a.name()));
            }
        }
        Ok(())
    }
}

/// Class-conditional parameters of one attribute, shared by all segments.
enum AttrModel {
    Numeric {
        mean: f64,
        std: f64,
        shift: [f64; NUM_CLASSES],
        count: bool,
        deal_value: bool,
    },
    Categorical {
        labels: Vec<String>,
        /// Cumulative category distribution per class.
        cdf: [Vec<f64>; NUM_CLASSES],
    },
}

fn build_models(config: &GeneratorConfig) -> Vec<AttrModel> {
    let strength = config.signal_strength;
    config
        .attributes
        .iter()
        .map(|spec| {
            let mut rng = seed::rng(config.seed, &format!("synthgen/attribute/{}", spec.name()));
            match spec {
                AttributeSpec::Numeric {
                    name,
                    mean,
                    std,
                    informative,
                    count,
                } => {
                    let mut shift = [0.0; NUM_CLASSES];
                    if *informative {
                        for s in shift.iter_mut() {
                            *s = strength * rng.random_range(-1.0..1.0);
                        }
                    }
                    AttrModel::Numeric {
                        mean: *mean,
                        std: *std,
                        shift,
                        count: *count,
                        deal_value: name == DEAL_VALUE,
                    }
                }
                AttributeSpec::Categorical {
                    name,
                    cardinality,
                    informative,
                } => {
                    let normal = Normal::new(0.0, 1.0).expect("unit normal");
                    let base: Vec<f64> = (0..*cardinality)
                        .map(|j| 1.0 / ((j + 1) as f64).powf(0.7))
                        .collect();
                    let affinity: Vec<[f64; NUM_CLASSES]> = (0..*cardinality)
                        .map(|_| {
                            let mut a = [0.0; NUM_CLASSES];
                            if *informative {
                                for v in a.iter_mut() {
                                    *v = normal.sample(&mut rng);
                                }
                            }
                            a
                        })
                        .collect();
                    let cdf = std::array::from_fn(|k| {
                        let weights: Vec<f64> = base
                            .iter()
                            .zip(&affinity)
                            .map(|(b, a)| b * (strength * a[k]).exp())
                            .collect();
                        cumulative(&weights)
                    });
                    let width = cardinality.to_string().len().max(2);
                    let labels = (0..*cardinality)
                        .map(|j| format!("{name}_{j:0width$}"))
                        .collect();
                    AttrModel::Categorical { labels, cdf }
                }
            }
        })
        .collect()
}

fn cumulative(weights: &[f64]) -> Vec<f64> {
    let total: f64 = weights.iter().sum();
    let mut acc = 0.0;
    let mut cdf: Vec<f64> = weights
        .iter()
        .map(|w| {
            acc += w / total;
            acc
        })
        .collect();
    if let Some(last) = cdf.last_mut() {
        *last = 1.0;
    }
    cdf
}

fn draw(cdf: &[f64], rng: &mut ChaCha8Rng) -> usize {
    let u: f64 = rng.random();
    cdf.iter().position(|&c| u < c).unwrap_or(cdf.len() - 1)
}

struct SegmentOutput {
    snapshots: Vec<OpportunitySnapshot>,
    truth: Vec<(String, OutcomeClass)>,
}

fn generate_segment(
    config: &GeneratorConfig,
    spec: &SegmentSpec,
    models: &[AttrModel],
    total_weeks: u64,
) -> SegmentOutput {
    let key = spec.key();
    let mut rng = seed::rng(config.seed, &format!("synthgen/segment/{key}"));
    let normal = Normal::new(0.0, 1.0).expect("unit normal");
    let mixture = cumulative(&spec.class_mixture);
    let strength = config.signal_strength;
    let mut snapshots = Vec::new();
    let mut truth = Vec::with_capacity(spec.opportunity_count);

    for i in 0..spec.opportunity_count {
        let id = format!("{}-{}-{i:06}", spec.business_unit, spec.geography);
        let class = OutcomeClass::ALL[draw(&mixture, &mut rng)];

        // Stage path: start early, stop at a top open stage. Wins tend to get
        // further before closing.
        let first: u8 = rng.random_range(1..=3);
        let top: u8 = match class {
            OutcomeClass::Win => rng.random_range(first.max(4)..=6),
            _ => rng.random_range(first..=6),
        };
        let stages = (top - first + 1) as f64;
        let per_stage = (config.mean_lifetime_weeks / stages).max(1.0);
        let geo = Geometric::new(1.0 / per_stage).expect("valid geometric p");
        let mut dwell: Vec<u64> = (first..=top).map(|_| geo.sample(&mut rng) + 1).collect();
        // open weeks plus the closing week must fit in the span
        let max_open = total_weeks.saturating_sub(1).max(1);
        let mut open_weeks: u64 = dwell.iter().sum();
        while open_weeks > max_open {
            let longest = (0..dwell.len())
                .max_by_key(|&j| (dwell[j], std::cmp::Reverse(j)))
                .expect("non-empty dwell");
            if dwell[longest] > 1 {
                dwell[longest] -= 1;
                open_weeks -= 1;
            } else {
                dwell.remove(longest);
                open_weeks -= 1;
            }
        }
        let latest_start = total_weeks.saturating_sub(open_weeks + 1);
        let start_week = rng.random_range(0..=latest_start);

        let mut statics: Vec<AttrValue> = Vec::with_capacity(models.len());
        let mut deal_slot = None;
        for (j, model) in models.iter().enumerate() {
            statics.push(match model {
                AttrModel::Numeric {
                    mean,
                    std,
                    shift,
                    count,
                    deal_value,
                } => {
                    let z = normal.sample(&mut rng) + shift[class.index()];
                    let mut v = mean + std * z;
                    if *deal_value {
                        deal_slot = Some(j);
                        v = v.max(0.05 * mean.abs()).max(0.0);
                    }
                    if *count {
                        v = v.round().max(0.0);
                    }
                    AttrValue::Num(v)
                }
                AttrModel::Categorical { labels, cdf } => {
                    AttrValue::Cat(labels[draw(&cdf[class.index()], &mut rng)].clone())
                }
            });
        }

        let drift = match class {
            OutcomeClass::Win => 0.02,
            _ => -0.02,
        } * strength;
        let mut stage_iter = (first..=top).zip(dwell.iter().copied()).flat_map(|(s, d)| {
            std::iter::repeat_n(s, d as usize)
        });
        let mut attrs = statics;
        for week in 0..open_weeks {
            let stage = stage_iter.next().expect("dwell covers open weeks");
            if week > 0 {
                if let Some(j) = deal_slot {
                    if rng.random::<f64>() < 0.3 {
                        if let AttrValue::Num(v) = attrs[j] {
                            let step = drift + 0.05 * normal.sample(&mut rng);
                            attrs[j] = AttrValue::Num(v * step.exp());
                        }
                    }
                }
            }
            snapshots.push(OpportunitySnapshot {
                opportunity_id: id.clone(),
                record_date: config.start_date + Days::new(7 * (start_week + week)),
                sales_stage: SalesStageCode::new(stage).expect("open stage"),
                segment: key.clone(),
                attrs: attrs.clone(),
            });
        }
        let closing = match class {
            OutcomeClass::Win if rng.random::<bool>() => SalesStageCode::new(8).expect("won"),
            c => SalesStageCode::closing_stage(c),
        };
        snapshots.push(OpportunitySnapshot {
            opportunity_id: id.clone(),
            record_date: config.start_date + Days::new(7 * (start_week + open_weeks)),
            sales_stage: closing,
            segment: key.clone(),
            attrs,
        });
        truth.push((id, class));
    }
    SegmentOutput { snapshots, truth }
}

/// Number of weekly slots from `start_date` to the end of the span.
fn span_weeks(config: &GeneratorConfig) -> u64 {
    let end = quarter_of(config.start_date)
        .offset(config.quarters_span as i64)
        .first_day();
    let days = (end - config.start_date).num_days().max(1) as u64;
    days.div_ceil(7)
}

/// Generates the portfolio together with each opportunity's latent class.
pub fn generate_portfolio_with_truth(
    config: &GeneratorConfig,
) -> Result<(SnapshotDataset, Vec<(String, OutcomeClass)>)> {
    config.validate()?;
    let models = build_models(config);
    let weeks = span_weeks(config);
    let outputs: Vec<SegmentOutput> = config
        .segments
        .par_iter()
        .map(|spec| generate_segment(config, spec, &models, weeks))
        .collect();
    let mut snapshots = Vec::new();
    let mut truth = Vec::new();
    for out in outputs {
        snapshots.extend(out.snapshots);
        truth.extend(out.truth);
    }
    let attributes = config.attributes.iter().map(AttributeSpec::def).collect();
    let mut dataset = SnapshotDataset::new(attributes, snapshots)?;
    if config.missing_rate > 0.0 {
        dataset = inject_missingness(
            dataset,
            config.missing_rate,
            seed::derive(config.seed, "synthgen/missingness"),
        )?;
    }
    Ok((dataset, truth))
}

pub fn generate_portfolio(config: &GeneratorConfig) -> Result<SnapshotDataset> {
    generate_portfolio_with_truth(config).map(|(d, _)| d)
}

/// Blanks each attribute cell independently with probability `rate`. Keys,
/// dates, segments and stage codes are never touched.
pub fn inject_missingness(mut dataset: SnapshotDataset, rate: f64, seed: u64) -> Result<SnapshotDataset> {
    if !(0.0..1.0).contains(&rate) {
        return Err(Error::invalid(format!("missing rate {rate} outside [0, 1)")));
    }
    if rate == 0.0 {
        return Ok(dataset);
    }
    let mut rng = <ChaCha8Rng as rand::SeedableRng>::seed_from_u64(seed);
    for snap in &mut dataset.snapshots {
        for cell in &mut snap.attrs {
            if rng.random::<f64>() < rate {
                *cell = AttrValue::Missing;
            }
        }
    }
    Ok(dataset)
}
