use serde::{Deserialize, Serialize};

use super::field::{risk_premium_reduction, FarmEquivalent, FieldEvaluation};
use crate::data::Crop;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AggregateOptions {
    /// Count the 50% share with `>` instead of `>=`.
    pub strict_50: bool,
    /// Weight field means by the number of years evaluated.
    pub weight_by_years: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CountyAggregate {
    pub county_id: String,
    pub crop: Crop,
    pub n_fields: usize,
    /// Fields dropped before aggregation (non-positive net outcomes etc.).
    pub n_excluded: usize,
    pub median_farm_equiv: FarmEquivalent,
    pub share_ge_85: f64,
    pub share_ge_90: f64,
    pub share_ge_50: f64,
    pub share_zero: f64,
    pub share_undefined: f64,
    /// Mean percentage gain of the area score over no insurance.
    pub mean_ce_gain_vs_none: f64,
    /// Mean risk-premium reduction over fields with a positive risk premium.
    pub mean_rp_reduction: Option<f64>,
    pub monotonicity_violations: usize,
}

fn weighted_mean(values: impl Iterator<Item = (f64, f64)>) -> Option<f64> {
    let (sum, w) = values.fold((0.0, 0.0), |(s, w), (v, wi)| (s + v * wi, w + wi));
    (w > 0.0).then(|| sum / w)
}

/// Rank statistics of one county's evaluations. The lower median is used
/// for an even count.
pub fn aggregate_county(
    county_id: &str,
    crop: Crop,
    evals: &[&FieldEvaluation],
    n_excluded: usize,
    opts: AggregateOptions,
) -> Result<CountyAggregate> {
    if evals.is_empty() {
        return Err(Error::EmptyCounty {
            county_id: county_id.to_string(),
            crop: crop.to_string(),
        });
    }
    let mut sorted = evals.to_vec();
    sorted.sort_by(|a, b| a.field_id.cmp(&b.field_id));
    let n = sorted.len() as f64;
    let share = |pred: &dyn Fn(&FarmEquivalent) -> bool| {
        sorted.iter().filter(|e| pred(&e.farm_equiv)).count() as f64 / n
    };

    let mut ranks: Vec<FarmEquivalent> = sorted.iter().map(|e| e.farm_equiv).collect();
    ranks.sort_by(|a, b| a.partial_cmp(b).expect("total order"));
    let median_farm_equiv = ranks[(ranks.len() - 1) / 2];

    let weight = |e: &FieldEvaluation| if opts.weight_by_years { e.n_years as f64 } else { 1.0 };
    let mean_ce_gain_vs_none =
        weighted_mean(sorted.iter().map(|e| (e.ce_gain_vs_none(), weight(e)))).unwrap_or(0.0);
    let mean_rp_reduction = weighted_mean(
        sorted
            .iter()
            .filter_map(|e| risk_premium_reduction(e).ok().map(|r| (r, weight(e)))),
    );

    Ok(CountyAggregate {
        county_id: county_id.to_string(),
        crop,
        n_fields: sorted.len(),
        n_excluded,
        median_farm_equiv,
        share_ge_85: share(&|f| f.at_least(0.85)),
        share_ge_90: share(&|f| f.at_least(0.90)),
        share_ge_50: if opts.strict_50 {
            share(&|f| f.above(0.50))
        } else {
            share(&|f| f.at_least(0.50))
        },
        share_zero: share(&|f| matches!(f, FarmEquivalent::Zero)),
        share_undefined: share(&|f| matches!(f, FarmEquivalent::Undefined(_))),
        mean_ce_gain_vs_none,
        mean_rp_reduction,
        monotonicity_violations: sorted.iter().filter(|e| e.monotonicity_violation).count(),
    })
}
