//! Field-to-county regression `y = alpha + beta * county_mean + e`, basis
//! risk, the critical beta of a county and within-county variability.

use serde::{Deserialize, Serialize};

use crate::data::{Crop, CountySeries, FieldCropSeries};
use crate::error::{Error, Result};
use crate::stats;
use crate::MIN_OBSERVATIONS;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegressionFit {
    pub field_id: String,
    pub county_id: String,
    pub crop: Crop,
    pub alpha: f64,
    pub beta: f64,
    pub sigma2_resid: f64,
    pub r2: f64,
    pub field_mean: f64,
    pub field_var: f64,
    pub n_obs: usize,
}

/// Values of `field` and `county` at the years both cover.
pub fn overlap(field: &FieldCropSeries, county: &CountySeries) -> (Vec<f64>, Vec<f64>) {
    field
        .years()
        .iter()
        .zip(field.yields())
        .filter_map(|(&yr, &y)| county.value_at(yr).map(|c| (y, c)))
        .unzip()
}

/// Ordinary least squares of `y` on `x` with population moments.
pub fn ols(field_id: &str, county_id: &str, crop: Crop, y: &[f64], x: &[f64]) -> Result<RegressionFit> {
    if y.len() < MIN_OBSERVATIONS {
        return Err(Error::InsufficientData {
            needed: MIN_OBSERVATIONS,
            got: y.len(),
        });
    }
    let mx = stats::mean(x);
    let var_x = stats::variance(x);
    if !(var_x > 1e-20 * mx * mx) {
        return Err(Error::DegenerateRegressor);
    }
    let my = stats::mean(y);
    let beta = stats::covariance(x, y) / var_x;
    let alpha = my - beta * mx;
    let sigma2_resid = y
        .iter()
        .zip(x)
        .map(|(yi, xi)| {
            let e = yi - alpha - beta * xi;
            e * e
        })
        .sum::<f64>()
        / y.len() as f64;
    let field_var = stats::variance(y);
    // a constant field has nothing to explain
    let r2 = if field_var > 0.0 {
        (1.0 - sigma2_resid / field_var).clamp(0.0, 1.0)
    } else {
        0.0
    };
    Ok(RegressionFit {
        field_id: field_id.to_string(),
        county_id: county_id.to_string(),
        crop,
        alpha,
        beta,
        sigma2_resid,
        r2,
        field_mean: my,
        field_var,
        n_obs: y.len(),
    })
}

pub fn fit_field_regression(field: &FieldCropSeries, county: &CountySeries) -> Result<RegressionFit> {
    let (y, x) = overlap(field, county);
    ols(field.field_id(), field.county_id(), field.crop(), &y, &x)
}

/// Share of the field's variance the county index cannot explain.
pub fn basis_risk(fit: &RegressionFit) -> Result<f64> {
    if !(fit.field_var > 0.0) {
        return Err(Error::Undefined(format!(
            "basis risk of field {} with zero variance",
            fit.field_id
        )));
    }
    Ok(1.0 - fit.r2)
}

/// Slope above which the county index lowers a field's yield variance:
/// `-Var(I) / (2 Cov(county_mean, I))`.
pub fn critical_beta(indemnities: &[f64], county_means: &[f64]) -> Result<f64> {
    if indemnities.len() != county_means.len() || indemnities.is_empty() {
        return Err(Error::Validation(format!(
            "{} indemnities for {} county years",
            indemnities.len(),
            county_means.len()
        )));
    }
    let var_i = stats::variance(indemnities);
    let cov = stats::covariance(county_means, indemnities);
    if !(var_i > 0.0) || cov == 0.0 {
        return Err(Error::Degenerate(
            "critical beta needs an index that pays in some but not all years".into(),
        ));
    }
    Ok(-var_i / (2.0 * cov))
}

/// How the per-field coefficients of variation are combined.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CvAggregation {
    /// Average of each field's `sd / mean`.
    #[default]
    MeanOfCvs,
    /// `sqrt(mean variance) / mean of field means`.
    Pooled,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CountyStats {
    pub county_id: String,
    pub crop: Crop,
    /// Mean over fields of the per-field temporal variance.
    pub temporal_variability: f64,
    /// The same quantity expressed as a coefficient of variation.
    pub temporal_cv: f64,
    /// Population variance of the field means.
    pub spatial_variability: f64,
    pub n_fields: usize,
    /// `None` when the county index never pays (or always pays the same).
    pub critical_beta: Option<f64>,
    pub indemnity_var: f64,
}

/// Variability statistics for one county. `indemnities` are the county
/// index payouts aligned with `county.years()`.
pub fn county_stats(
    fields: &[&FieldCropSeries],
    county: &CountySeries,
    indemnities: &[f64],
    cv: CvAggregation,
) -> Result<CountyStats> {
    if fields.len() < 2 {
        return Err(Error::InsufficientData {
            needed: 2,
            got: fields.len(),
        });
    }
    let mut sorted = fields.to_vec();
    sorted.sort_by(|a, b| a.field_id().cmp(b.field_id()));
    let means: Vec<f64> = sorted.iter().map(|f| f.mean_yield()).collect();
    let vars: Vec<f64> = sorted.iter().map(|f| stats::variance(f.yields())).collect();
    let temporal_variability = stats::mean(&vars);
    let temporal_cv = match cv {
        CvAggregation::MeanOfCvs => {
            let cvs: Vec<f64> = vars.iter().zip(&means).map(|(v, m)| v.sqrt() / m).collect();
            stats::mean(&cvs)
        }
        CvAggregation::Pooled => temporal_variability.sqrt() / stats::mean(&means),
    };
    let critical_beta = critical_beta(indemnities, county.mean_yields()).ok();
    let indemnity_var = if indemnities.is_empty() { 0.0 } else { stats::variance(indemnities) };
    Ok(CountyStats {
        county_id: county.county_id().to_string(),
        crop: county.crop(),
        temporal_variability,
        temporal_cv,
        spatial_variability: stats::variance(&means),
        n_fields: sorted.len(),
        critical_beta,
        indemnity_var,
    })
}

/// Reduction in yield variance from buying the county index at a fair
/// premium: `Var(I) * (beta / critical_beta - 1)`.
pub fn variance_reduction(fit: &RegressionFit, stats: &CountyStats) -> Result<f64> {
    let bc = stats.critical_beta.ok_or_else(|| {
        Error::Degenerate(format!(
            "county {} has no critical beta",
            stats.county_id
        ))
    })?;
    if !bc.is_finite() || bc == 0.0 {
        return Err(Error::Degenerate(format!("critical beta {bc}")));
    }
    // written as a difference so the sign follows beta - critical_beta exactly
    Ok(stats.indemnity_var * (fit.beta - bc) / bc)
}
