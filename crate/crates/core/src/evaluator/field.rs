use std::cmp::Ordering;
use std::fmt;

use serde::{Serialize, Serializer};

use crate::contracts::{area_indemnity, payouts, PremiumBasis, Scheme, SubsidySchedule, Trigger};
use crate::data::{Crop, CountySeries, FieldCropSeries};
use crate::error::{Error, Result};
use crate::preferences::{cpt_reference, CptOutcomes, Preference, ReferenceRule};
use crate::stats;

/// Contract menu, pricing and preference used for every field.
#[derive(Clone, Debug, PartialEq)]
pub struct EvalConfig {
    /// Farm-level coverage levels, ascending.
    pub triggers: Vec<Trigger>,
    pub area_trigger: Trigger,
    /// Pricing window of the area contract: the field's own years or all
    /// county years. Farm contracts are always priced on the field's years.
    pub premium_basis: PremiumBasis,
    /// Coverage levels missing from the schedule are priced fair.
    pub subsidy: Option<SubsidySchedule>,
    pub preference: Preference,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            triggers: Trigger::grid(),
            area_trigger: Trigger::P90,
            premium_basis: PremiumBasis::FieldFair,
            subsidy: None,
            preference: Preference::default(),
        }
    }
}

impl EvalConfig {
    pub fn validate(&self) -> Result<()> {
        if self.triggers.is_empty() {
            return Err(Error::Config("the trigger grid is empty".into()));
        }
        if self.triggers.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Config("triggers must be strictly ascending".into()));
        }
        if self.premium_basis == PremiumBasis::Subsidized {
            return Err(Error::Config(
                "premium_basis selects the pricing window (field_fair or county_fair); enable subsidies separately".into(),
            ));
        }
        self.preference.validate()
    }

    fn premium(&self, fair: f64, scheme: Scheme, trigger: Trigger) -> f64 {
        let rate = self
            .subsidy
            .as_ref()
            .and_then(|s| s.rate(scheme, trigger))
            .unwrap_or(0.0);
        fair * (1.0 - rate)
    }
}

/// Highest farm coverage the area contract strictly beats.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum FarmEquivalent {
    /// The area contract is no better than going uninsured.
    Zero,
    /// Better than no insurance but not better than the lowest farm level
    /// that ever pays; the true level lies in `[0, upper)` with
    /// `upper = min yield / mean yield`.
    Undefined(f64),
    Value(Trigger),
}

impl FarmEquivalent {
    fn rank(&self) -> (u8, f64) {
        match *self {
            FarmEquivalent::Zero => (0, 0.0),
            FarmEquivalent::Undefined(u) => (1, u),
            FarmEquivalent::Value(t) => (2, t.fraction()),
        }
    }

    /// Value at or above `level`; `Zero` and `Undefined` never count.
    pub fn at_least(&self, level: f64) -> bool {
        matches!(self, FarmEquivalent::Value(t) if t.fraction() >= level - 1e-12)
    }

    pub fn above(&self, level: f64) -> bool {
        matches!(self, FarmEquivalent::Value(t) if t.fraction() > level + 1e-12)
    }
}

impl PartialOrd for FarmEquivalent {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        let (a, x) = self.rank();
        let (b, y) = other.rank();
        Some(a.cmp(&b).then(x.total_cmp(&y)))
    }
}

impl fmt::Display for FarmEquivalent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FarmEquivalent::Zero => write!(f, "ZERO"),
            FarmEquivalent::Undefined(u) => write!(f, "UNDEF:{u:.4}"),
            FarmEquivalent::Value(t) => write!(f, "{t}"),
        }
    }
}

impl Serialize for FarmEquivalent {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FieldEvaluation {
    pub field_id: String,
    pub county_id: String,
    pub crop: Crop,
    pub n_years: usize,
    pub mean_yield: f64,
    /// Scores are certainty equivalents under CRRA. Under prospect theory
    /// they are `mean_yield + v^-1(V)`, which orders plans exactly as `V`.
    pub ce_none: f64,
    pub ce_area: f64,
    pub area_premium: f64,
    pub ce_farm: Vec<f64>,
    /// Whether the farm contract at each trigger ever pays.
    pub farm_pays: Vec<bool>,
    pub risk_premium_none: f64,
    pub risk_premium_area: f64,
    pub farm_equiv: FarmEquivalent,
    /// Farm scores decrease somewhere above the lowest paying level.
    pub monotonicity_violation: bool,
}

impl FieldEvaluation {
    /// Percentage change of the area score over no insurance.
    pub fn ce_gain_vs_none(&self) -> f64 {
        100.0 * (self.ce_area - self.ce_none) / self.ce_none
    }

    pub fn min_ratio(&self) -> Option<f64> {
        match self.farm_equiv {
            FarmEquivalent::Undefined(u) => Some(u),
            _ => None,
        }
    }
}

/// Score of one plan for a field whose uninsured mean yield is `mean_yield`.
fn score(
    preference: &Preference,
    net: &[f64],
    gross: &[f64],
    mean_yield: f64,
    premium: f64,
) -> Result<f64> {
    match preference {
        Preference::Crra(c) => c.certainty_equivalent(net),
        Preference::Cpt(spec) => {
            let reference = cpt_reference(mean_yield, premium, spec.reference_rule)?;
            let outcomes = match (spec.reference_rule, spec.outcomes) {
                (ReferenceRule::R2, CptOutcomes::GrossWhenSunk) => gross,
                _ => net,
            };
            let v = spec.params.evaluate(outcomes, reference);
            Ok(mean_yield + spec.params.value_inverse(v))
        }
    }
}

fn net_and_gross(years: &[i32], yields: &[f64], indemnities: &[f64], premium: f64) -> Result<(Vec<f64>, Vec<f64>)> {
    let gross: Vec<f64> = yields.iter().zip(indemnities).map(|(y, i)| y + i).collect();
    let net = crate::contracts::net_yield_series(years, yields, indemnities, premium)?;
    Ok((net, gross))
}

/// `Zero`, `Undefined` or the largest trigger whose farm score the area
/// score strictly exceeds.
pub fn farm_equivalent_coverage(
    ce_none: f64,
    ce_area: f64,
    triggers: &[Trigger],
    ce_farm: &[f64],
    farm_pays: &[bool],
    min_ratio: f64,
) -> FarmEquivalent {
    if ce_area <= ce_none {
        return FarmEquivalent::Zero;
    }
    if let Some(low) = farm_pays.iter().position(|&p| p) {
        if ce_area <= ce_farm[low] {
            return FarmEquivalent::Undefined(min_ratio);
        }
    }
    triggers
        .iter()
        .zip(ce_farm)
        .rev()
        .find(|(_, &ce)| ce_area > ce)
        .map(|(&t, _)| FarmEquivalent::Value(t))
        .unwrap_or(FarmEquivalent::Zero)
}

/// Compares no insurance, the area contract and every farm contract for one
/// field. `county` must cover every year of `field`.
pub fn evaluate_field(field: &FieldCropSeries, county: &CountySeries, cfg: &EvalConfig) -> Result<FieldEvaluation> {
    let years = field.years();
    let yields = field.yields();
    let mean_yield = field.mean_yield();

    let area_all = area_indemnity(county, cfg.area_trigger);
    let area = area_all.restrict(years);
    if area.years.len() != years.len() {
        return Err(Error::Validation(format!(
            "county {} ({}) does not cover every year of field {}",
            county.county_id(),
            county.crop(),
            field.field_id()
        )));
    }
    let area_fair = match cfg.premium_basis {
        PremiumBasis::CountyFair => stats::mean(&area_all.values),
        _ => stats::mean(&area.values),
    };
    let area_premium = cfg.premium(area_fair, Scheme::Area, cfg.area_trigger);

    let ce_none = score(&cfg.preference, yields, yields, mean_yield, 0.0)?;
    let (net, gross) = net_and_gross(years, yields, &area.values, area_premium)?;
    let ce_area = score(&cfg.preference, &net, &gross, mean_yield, area_premium)?;
    let risk_premium_area = stats::mean(&net) - ce_area;

    let mut ce_farm = Vec::with_capacity(cfg.triggers.len());
    let mut farm_pays = Vec::with_capacity(cfg.triggers.len());
    for &t in &cfg.triggers {
        let ind = payouts(t.fraction() * mean_yield, yields);
        let pays = ind.iter().any(|&v| v > 0.0);
        let ce = if pays {
            let premium = cfg.premium(stats::mean(&ind), Scheme::Farm, t);
            let (net, gross) = net_and_gross(years, yields, &ind, premium)?;
            score(&cfg.preference, &net, &gross, mean_yield, premium)?
        } else {
            ce_none
        };
        ce_farm.push(ce);
        farm_pays.push(pays);
    }

    let min_ratio = stats::min(yields) / mean_yield;
    let farm_equiv = farm_equivalent_coverage(ce_none, ce_area, &cfg.triggers, &ce_farm, &farm_pays, min_ratio);
    let monotonicity_violation = match farm_pays.iter().position(|&p| p) {
        Some(low) => ce_farm[low..]
            .windows(2)
            .any(|w| w[1] < w[0] - 1e-12 * w[0].abs()),
        None => false,
    };

    Ok(FieldEvaluation {
        field_id: field.field_id().to_string(),
        county_id: field.county_id().to_string(),
        crop: field.crop(),
        n_years: yields.len(),
        mean_yield,
        ce_none,
        ce_area,
        area_premium,
        ce_farm,
        farm_pays,
        risk_premium_none: mean_yield - ce_none,
        risk_premium_area,
        farm_equiv,
        monotonicity_violation,
    })
}

/// `1 - rp_area / rp_none`; negative when the area contract adds risk.
pub fn risk_premium_reduction(eval: &FieldEvaluation) -> Result<f64> {
    if eval.risk_premium_none == 0.0 {
        return Err(Error::Undefined(format!(
            "risk premium reduction of riskless field {}",
            eval.field_id
        )));
    }
    Ok(1.0 - eval.risk_premium_area / eval.risk_premium_none)
}

/// False negative probability: share of the field's loss years
/// (`y < theta_i`) in which the county mean stays above `theta_c`.
pub fn fnp(field_yields: &[f64], county_means: &[f64], theta_c: f64, theta_i: f64) -> Result<f64> {
    if field_yields.len() != county_means.len() {
        return Err(Error::Validation(format!(
            "{} field years against {} county years",
            field_yields.len(),
            county_means.len()
        )));
    }
    let (losses, missed) = field_yields
        .iter()
        .zip(county_means)
        .filter(|(y, _)| **y < theta_i)
        .fold((0usize, 0usize), |(n, k), (_, c)| (n + 1, k + usize::from(*c > theta_c)));
    if losses == 0 {
        return Err(Error::Undefined("no field year below the loss threshold".into()));
    }
    Ok(missed as f64 / losses as f64)
}
