//! Indemnity schedules, ex-post fair premiums, subsidies and net yields.
//!
//! Indemnities are in yield units. The area contract pays
//! `max(trigger * longrun_county_mean - county_mean_t, 0)`, the farm
//! contract `max(trigger * field_mean - field_yield_t, 0)`.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::data::{CountySeries, FieldCropSeries};
use crate::error::{Error, Result};
use crate::stats;

/// Coverage level on the 5-point grid from 20% to 95%.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Trigger(u8);

impl Trigger {
    pub const MIN_PERCENT: u8 = 20;
    pub const MAX_PERCENT: u8 = 95;
    pub const STEP_PERCENT: u8 = 5;

    pub const P50: Trigger = Trigger(50);
    pub const P85: Trigger = Trigger(85);
    pub const P90: Trigger = Trigger(90);
    pub const P95: Trigger = Trigger(95);

    pub fn from_percent(percent: u8) -> Result<Self> {
        if (Self::MIN_PERCENT..=Self::MAX_PERCENT).contains(&percent)
            && percent.is_multiple_of(Self::STEP_PERCENT)
        {
            Ok(Trigger(percent))
        } else {
            Err(Error::Config(format!("trigger {percent}% is not on the grid 20%..95% by 5%")))
        }
    }

    pub fn from_fraction(fraction: f64) -> Result<Self> {
        let percent = (fraction * 100.0).round();
        if !((fraction * 100.0 - percent).abs() < 1e-6) || !(0.0..=255.0).contains(&percent) {
            return Err(Error::Config(format!("trigger {fraction} is not on the grid")));
        }
        Self::from_percent(percent as u8)
    }

    pub fn percent(self) -> u8 {
        self.0
    }

    pub fn fraction(self) -> f64 {
        self.0 as f64 / 100.0
    }

    /// `{0.20, 0.25, ..., 0.95}`.
    pub fn grid() -> Vec<Trigger> {
        (Self::MIN_PERCENT..=Self::MAX_PERCENT)
            .step_by(Self::STEP_PERCENT as usize)
            .map(Trigger)
            .collect()
    }
}

impl fmt::Display for Trigger {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:.2}", self.fraction())
    }
}

impl Serialize for Trigger {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_f64(self.fraction())
    }
}

impl<'de> Deserialize<'de> for Trigger {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let v = f64::deserialize(d)?;
        Trigger::from_fraction(v).map_err(serde::de::Error::custom)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scheme {
    Area,
    Farm,
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Scheme::Area => "area",
            Scheme::Farm => "farm",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PremiumBasis {
    /// Mean indemnity over the years the field grew the crop.
    FieldFair,
    /// Mean indemnity over every county year.
    CountyFair,
    Subsidized,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Contract {
    pub scheme: Scheme,
    pub trigger: Trigger,
    pub premium: f64,
    pub premium_basis: PremiumBasis,
    pub subsidy_rate: f64,
}

impl Contract {
    pub fn fair(scheme: Scheme, trigger: Trigger, premium: f64, basis: PremiumBasis) -> Result<Self> {
        if basis == PremiumBasis::Subsidized {
            return Err(Error::Validation("a fair contract cannot carry a subsidized basis".into()));
        }
        if !(premium >= 0.0) {
            return Err(Error::Validation(format!("premium {premium} must be non-negative")));
        }
        Ok(Self {
            scheme,
            trigger,
            premium,
            premium_basis: basis,
            subsidy_rate: 0.0,
        })
    }

    /// Applies the schedule's rate; fails when the coverage is not offered.
    pub fn subsidize(&self, schedule: &SubsidySchedule) -> Result<Self> {
        let rate = schedule.rate(self.scheme, self.trigger).ok_or(Error::NotOffered {
            scheme: self.scheme,
            trigger: self.trigger,
        })?;
        Ok(Self {
            premium: self.premium * (1.0 - rate),
            premium_basis: PremiumBasis::Subsidized,
            subsidy_rate: rate,
            ..self.clone()
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct IndemnitySeries {
    pub years: Vec<i32>,
    pub values: Vec<f64>,
}

impl IndemnitySeries {
    /// Indemnities at the listed years; years absent from the series are skipped.
    pub fn restrict(&self, years: &[i32]) -> IndemnitySeries {
        let (years, values) = years
            .iter()
            .filter_map(|y| {
                self.years
                    .binary_search(y)
                    .ok()
                    .map(|i| (*y, self.values[i]))
            })
            .unzip();
        IndemnitySeries { years, values }
    }

    pub fn is_zero(&self) -> bool {
        self.values.iter().all(|&v| v == 0.0)
    }
}

/// `max(target - actual_t, 0)` for every year.
pub fn payouts(target: f64, actual: &[f64]) -> Vec<f64> {
    actual.iter().map(|&a| (target - a).max(0.0)).collect()
}

pub fn area_indemnity(county: &CountySeries, trigger: Trigger) -> IndemnitySeries {
    IndemnitySeries {
        years: county.years().to_vec(),
        values: payouts(trigger.fraction() * county.longrun_mean(), county.mean_yields()),
    }
}

pub fn farm_indemnity(field: &FieldCropSeries, trigger: Trigger) -> IndemnitySeries {
    IndemnitySeries {
        years: field.years().to_vec(),
        values: payouts(trigger.fraction() * field.mean_yield(), field.yields()),
    }
}

/// Mean indemnity over the series' years.
pub fn fair_premium(indemnities: &IndemnitySeries) -> Result<f64> {
    if indemnities.values.is_empty() {
        return Err(Error::Undefined("fair premium of an empty indemnity series".into()));
    }
    Ok(stats::mean(&indemnities.values))
}

pub fn subsidized_premium(
    premium: f64,
    scheme: Scheme,
    trigger: Trigger,
    schedule: &SubsidySchedule,
) -> Result<f64> {
    let rate = schedule
        .rate(scheme, trigger)
        .ok_or(Error::NotOffered { scheme, trigger })?;
    Ok(premium * (1.0 - rate))
}

/// `y_t + I_t - premium`; every value must stay strictly positive.
pub fn net_yield_series(
    years: &[i32],
    yields: &[f64],
    indemnities: &[f64],
    premium: f64,
) -> Result<Vec<f64>> {
    debug_assert_eq!(yields.len(), indemnities.len());
    let mut net = Vec::with_capacity(yields.len());
    for (i, (&y, &ind)) in yields.iter().zip(indemnities).enumerate() {
        let v = y + ind - premium;
        if !(v > 0.0) {
            return Err(Error::NonPositiveOutcome {
                year: years.get(i).copied().unwrap_or_default(),
                value: v,
            });
        }
        net.push(v);
    }
    Ok(net)
}

/// Premium subsidy rates by scheme and coverage level.
#[derive(Clone, Debug, PartialEq)]
pub struct SubsidySchedule {
    rates: BTreeMap<(Scheme, Trigger), f64>,
}

impl Default for SubsidySchedule {
    fn default() -> Self {
        Self::yield_protection()
    }
}

impl SubsidySchedule {
    /// Rates for farm- and area-based yield protection (additional coverage).
    pub fn yield_protection() -> Self {
        let farm = [(50, 0.67), (55, 0.64), (60, 0.64), (65, 0.59), (70, 0.59), (75, 0.55), (80, 0.48), (85, 0.38)];
        let area = [(70, 0.59), (75, 0.59), (80, 0.55), (85, 0.55), (90, 0.51)];
        let rates = farm
            .iter()
            .map(|&(p, r)| ((Scheme::Farm, Trigger(p)), r))
            .chain(area.iter().map(|&(p, r)| ((Scheme::Area, Trigger(p)), r)))
            .collect();
        Self { rates }
    }

    /// Replaces the farm 50% rate with catastrophic coverage, fully subsidized.
    pub fn with_catastrophic(mut self) -> Self {
        self.rates.insert((Scheme::Farm, Trigger::P50), 1.0);
        self
    }

    pub fn from_rates(rates: impl IntoIterator<Item = ((Scheme, Trigger), f64)>) -> Result<Self> {
        let rates: BTreeMap<_, _> = rates.into_iter().collect();
        if let Some(((s, t), r)) = rates.iter().find(|(_, r)| !(0.0..=1.0).contains(*r)) {
            return Err(Error::Config(format!("subsidy rate {r} for {s} {t} outside [0, 1]")));
        }
        Ok(Self { rates })
    }

    /// Parses `[farm]` / `[area]` tables mapping coverage level to rate:
    ///
    /// ```toml
    /// [area]
    /// "0.90" = 0.51
    /// ```
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let table: BTreeMap<Scheme, BTreeMap<String, f64>> =
            toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        let mut rates = Vec::new();
        for (scheme, levels) in table {
            for (level, rate) in levels {
                let fraction: f64 = level
                    .parse()
                    .map_err(|_| Error::Config(format!("bad coverage level {level:?}")))?;
                rates.push(((scheme, Trigger::from_fraction(fraction)?), rate));
            }
        }
        Self::from_rates(rates)
    }

    pub fn rate(&self, scheme: Scheme, trigger: Trigger) -> Option<f64> {
        self.rates.get(&(scheme, trigger)).copied()
    }

    pub fn iter(&self) -> impl Iterator<Item = ((Scheme, Trigger), f64)> + '_ {
        self.rates.iter().map(|(k, v)| (*k, *v))
    }
}
