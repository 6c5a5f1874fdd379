//! Per-field plan comparison, farm-equivalent coverage and county summaries.

mod aggregate;
mod field;
mod reversal;

use rayon::prelude::*;

pub use aggregate::{aggregate_county, AggregateOptions, CountyAggregate};
pub use field::{
    evaluate_field, farm_equivalent_coverage, fnp, risk_premium_reduction, EvalConfig, FarmEquivalent,
    FieldEvaluation,
};
pub use reversal::{idw, reversal_report, GridCell, RankCorrelation, ReversalOptions, ReversalReport, ReversalRow};

use crate::contracts::area_indemnity;
use crate::data::Panel;
use crate::error::{Error, Exclusion, Result};
use crate::regression::{county_stats, CountyStats, CvAggregation};

#[derive(Clone, Debug, Default)]
pub struct PanelEvaluation {
    /// Sorted by `(field_id, crop)`.
    pub fields: Vec<FieldEvaluation>,
    pub exclusions: Vec<Exclusion>,
    /// Sorted by `(county_id, crop)`.
    pub counties: Vec<CountyAggregate>,
    pub county_stats: Vec<CountyStats>,
}

impl PanelEvaluation {
    pub fn share_of_fields(&self, pred: impl Fn(&FieldEvaluation) -> bool) -> f64 {
        self.fields.iter().filter(|e| pred(e)).count() as f64 / self.fields.len() as f64
    }
}

/// Evaluates every field of `panel`, then aggregates and summarizes each
/// county. Fields with a non-positive net outcome are excluded and counted.
pub fn evaluate_panel(
    panel: &Panel,
    cfg: &EvalConfig,
    opts: AggregateOptions,
    cv: CvAggregation,
) -> Result<PanelEvaluation> {
    cfg.validate()?;
    let groups = panel.fields_by_county();
    let per_county: Vec<_> = groups
        .into_par_iter()
        .map(|((cid, crop), idx)| {
            let county = panel
                .county(&cid, crop)
                .ok_or_else(|| Error::Validation(format!("unknown county {cid} ({crop})")))?;
            let mut evals = Vec::with_capacity(idx.len());
            let mut exclusions = vec![];
            for &i in &idx {
                let f = &panel.fields()[i];
                match evaluate_field(f, county, cfg) {
                    Ok(e) => evals.push(e),
                    Err(e @ (Error::NonPositiveOutcome { .. } | Error::Domain(_))) => exclusions.push(Exclusion {
                        county_id: cid.clone(),
                        field_id: f.field_id().to_string(),
                        crop,
                        stage: "evaluate",
                        reason: e.to_string(),
                    }),
                    Err(e) => return Err(e),
                }
            }
            let refs: Vec<&FieldEvaluation> = evals.iter().collect();
            let aggregate = if refs.is_empty() {
                None
            } else {
                Some(aggregate_county(&cid, crop, &refs, exclusions.len(), opts)?)
            };
            let members: Vec<_> = idx.iter().map(|&i| &panel.fields()[i]).collect();
            let indemnities = area_indemnity(county, cfg.area_trigger);
            let stats = county_stats(&members, county, &indemnities.values, cv).ok();
            Ok((evals, exclusions, aggregate, stats))
        })
        .collect::<Result<_>>()?;

    let mut out = PanelEvaluation::default();
    for (evals, exclusions, aggregate, stats) in per_county {
        out.fields.extend(evals);
        out.exclusions.extend(exclusions);
        out.counties.extend(aggregate);
        out.county_stats.extend(stats);
    }
    out.fields
        .sort_by(|a, b| (&a.field_id, a.crop).cmp(&(&b.field_id, b.crop)));
    Ok(out)
}
