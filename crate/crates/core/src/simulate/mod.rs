//! Balanced yield panels drawn from the fitted field-to-county regressions.
//!
//! Each county's base series (its reference means when attached, otherwise
//! the field averages) is detrended to the final-year technology level.
//! Every fitted field then receives one truncated-normal draw per base year
//! around `alpha + beta * base_t`. With [`SimulationSource::Ar2Extension`]
//! the base is first replaced by an AR(2) bootstrap path of the requested
//! length.

mod ar2;
mod truncnorm;

use std::collections::BTreeMap;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use ar2::{fit_ar2, innovation_index, simulate_county_series, simulate_with_uniforms, Ar2Model, BURN_IN};
pub use truncnorm::TruncatedNormal;

use crate::data::{CountySeries, Crop, FieldCropSeries, Panel, Provenance, YearSeries};
use crate::error::{Error, Exclusion, Result};
use crate::regression::RegressionFit;
use crate::{rng, MIN_OBSERVATIONS};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CropBounds {
    pub lower: f64,
    pub upper: f64,
}

impl CropBounds {
    pub fn validate(&self) -> Result<()> {
        if self.lower > 0.0 && self.lower < self.upper && self.upper.is_finite() {
            Ok(())
        } else {
            Err(Error::Config(format!(
                "yield bounds [{}, {}] need 0 < lower < upper",
                self.lower, self.upper
            )))
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Bounds {
    pub corn: CropBounds,
    pub soy: CropBounds,
}

impl Default for Bounds {
    fn default() -> Self {
        Self {
            corn: CropBounds {
                lower: 10.0,
                upper: 350.0,
            },
            soy: CropBounds {
                lower: 10.0,
                upper: 100.0,
            },
        }
    }
}

impl Bounds {
    pub fn for_crop(&self, crop: Crop) -> CropBounds {
        match crop {
            Crop::Corn => self.corn,
            Crop::Soy => self.soy,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SimulationSource {
    /// Plug in the detrended county base series year by year.
    #[default]
    ReferenceMeans,
    /// Replace the base by an AR(2) residual-bootstrap path.
    Ar2Extension,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BootstrapMode {
    /// Every county draws its own innovations.
    #[default]
    Independent,
    /// All counties share one uniform stream, so counties with equally long
    /// residual pools reuse the same historical year at each step.
    CommonYear,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulationSpec {
    pub bounds: Bounds,
    /// Simulated horizon. With reference means `None` keeps the whole base
    /// and a shorter horizon keeps its last years; AR(2) extension needs it.
    pub n_years: Option<usize>,
    pub seed: u64,
    pub source: SimulationSource,
    pub bootstrap: BootstrapMode,
}

impl SimulationSpec {
    pub fn validate(&self) -> Result<()> {
        self.bounds.corn.validate()?;
        self.bounds.soy.validate()?;
        match (self.n_years, self.source) {
            (Some(n), _) if n < MIN_OBSERVATIONS => Err(Error::Config(format!(
                "n_years = {n} is below the minimum of {MIN_OBSERVATIONS}"
            ))),
            (None, SimulationSource::Ar2Extension) => {
                Err(Error::Config("AR(2) extension needs n_years".into()))
            }
            _ => Ok(()),
        }
    }
}

/// Removes a linear OLS trend and re-centres the residuals at the fitted
/// value of the final year.
pub fn detrend(years: &[i32], values: &[f64]) -> Result<Vec<f64>> {
    if values.len() < MIN_OBSERVATIONS {
        return Err(Error::InsufficientData {
            needed: MIN_OBSERVATIONS,
            got: values.len(),
        });
    }
    let t: Vec<f64> = years.iter().map(|&y| f64::from(y)).collect();
    let slope = crate::stats::covariance(&t, values) / crate::stats::variance(&t);
    let last = *t.last().expect("non-empty");
    let out: Vec<f64> = values
        .iter()
        .zip(&t)
        .map(|(v, ti)| v + slope * (last - ti))
        .collect();
    if let Some((i, v)) = out.iter().enumerate().find(|(_, v)| !(**v > 0.0)) {
        return Err(Error::DetrendFailure {
            year: years[i],
            value: *v,
        });
    }
    Ok(out)
}

pub fn detrend_county_series(series: &CountySeries) -> Result<CountySeries> {
    let values = detrend(series.years(), series.mean_yields())?;
    CountySeries::new(series.county_id(), series.crop(), series.years().to_vec(), values)
}

/// One truncated-normal draw per county-mean value around the fitted line.
pub fn simulate_field_years(
    fit: &RegressionFit,
    county_means: &[f64],
    bounds: CropBounds,
    rng: &mut impl Rng,
) -> Result<Vec<f64>> {
    let scale = fit.sigma2_resid.sqrt();
    county_means
        .iter()
        .map(|m| {
            let dist = TruncatedNormal::new(fit.alpha + fit.beta * m, scale, bounds.lower, bounds.upper)?;
            Ok(dist.sample(rng))
        })
        .collect()
}

/// Detrended base series over the simulated horizon, before any AR(2)
/// extension.
pub fn detrended_base(county: &CountySeries, n_years: Option<usize>) -> Result<YearSeries> {
    let base = county.simulation_base();
    let values = detrend(&base.years, &base.values)?;
    match n_years {
        Some(n) if n > base.years.len() => Err(Error::Config(format!(
            "n_years = {n} exceeds the {} base years of county {} ({}); use the AR(2) extension",
            base.years.len(),
            county.county_id(),
            county.crop()
        ))),
        Some(n) => {
            let skip = base.years.len() - n;
            Ok(YearSeries {
                years: base.years[skip..].to_vec(),
                values: values[skip..].to_vec(),
            })
        }
        None => Ok(YearSeries {
            years: base.years,
            values,
        }),
    }
}

/// County series the simulated fields are drawn around.
pub fn simulated_county(county: &CountySeries, spec: &SimulationSpec) -> Result<CountySeries> {
    let series = match spec.source {
        SimulationSource::ReferenceMeans => detrended_base(county, spec.n_years)?,
        SimulationSource::Ar2Extension => {
            let n = spec
                .n_years
                .ok_or_else(|| Error::Config("AR(2) extension needs n_years".into()))?;
            let base = detrended_base(county, None)?;
            let model = fit_ar2(county.county_id(), &base.values)?;
            let bounds = spec.bounds.for_crop(county.crop());
            let values = match spec.bootstrap {
                BootstrapMode::Independent => {
                    let mut r = rng::stream(spec.seed, &["ar2", county.county_id(), county.crop().as_str()]);
                    simulate_county_series(&model, n, bounds, &mut r)
                }
                BootstrapMode::CommonYear => {
                    let mut r = rng::stream(spec.seed, &["ar2", "common-year", county.crop().as_str()]);
                    simulate_with_uniforms(&model, n, bounds, || r.random::<f64>())
                }
            };
            let start = base.years[0];
            YearSeries {
                years: (0..n as i32).map(|t| start + t).collect(),
                values,
            }
        }
    };
    CountySeries::new(county.county_id(), county.crop(), series.years, series.values)
}

#[derive(Clone, Debug)]
pub struct SimulatedPanel {
    pub panel: Panel,
    pub exclusions: Vec<Exclusion>,
}

/// Simulates every fitted field. Fields and counties that fail are listed
/// in `exclusions` instead of aborting the run.
pub fn simulate_panel(panel: &Panel, fits: &[RegressionFit], spec: &SimulationSpec) -> Result<SimulatedPanel> {
    spec.validate()?;
    let mut by_county: BTreeMap<(&str, Crop), Vec<&RegressionFit>> = BTreeMap::new();
    for fit in fits {
        by_county
            .entry((fit.county_id.as_str(), fit.crop))
            .or_default()
            .push(fit);
    }

    type CountyOutcome = (Option<CountySeries>, Vec<FieldCropSeries>, Vec<Exclusion>);
    let outcomes: Vec<CountyOutcome> = by_county
        .into_par_iter()
        .map(|((cid, crop), members)| {
            let exclude = |field_id: &str, reason: String| Exclusion {
                county_id: cid.to_string(),
                field_id: field_id.to_string(),
                crop,
                stage: "simulate",
                reason,
            };
            let Some(county) = panel.county(cid, crop) else {
                return Err(Error::Validation(format!("fit refers to unknown county {cid} ({crop})")));
            };
            let county = match simulated_county(county, spec) {
                Ok(c) => c,
                Err(e @ Error::Config(_)) => return Err(e),
                Err(e) => return Ok((None, vec![], vec![exclude("", e.to_string())])),
            };
            let bounds = spec.bounds.for_crop(crop);
            let mut fields = Vec::with_capacity(members.len());
            let mut exclusions = vec![];
            for fit in members {
                let mut r = rng::stream(spec.seed, &["simulate", &fit.field_id, crop.as_str()]);
                match simulate_field_years(fit, county.mean_yields(), bounds, &mut r).and_then(|ys| {
                    FieldCropSeries::new(&fit.field_id, cid, crop, county.years().to_vec(), ys)
                }) {
                    Ok(f) => fields.push(f),
                    Err(e) => exclusions.push(exclude(&fit.field_id, e.to_string())),
                }
            }
            Ok((Some(county), fields, exclusions))
        })
        .collect::<Result<_>>()?;

    let mut counties = vec![];
    let mut fields = vec![];
    let mut exclusions = vec![];
    for (c, f, e) in outcomes {
        if let Some(c) = c {
            if !f.is_empty() {
                counties.push(c);
            }
        }
        fields.extend(f);
        exclusions.extend(e);
    }
    Ok(SimulatedPanel {
        panel: Panel::new(fields, counties, Provenance::Simulated)?,
        exclusions,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{generate_synthetic_panel, SyntheticConfig};
    use crate::regression::{fit_field_regression, ols};
    use crate::stats;

    fn years(n: usize) -> Vec<i32> {
        (2000..2000 + n as i32).collect()
    }

    #[test]
    fn detrend_linear_and_constant() {
        let ys: Vec<f64> = (0..10).map(|t| 100.0 + 2.0 * t as f64).collect();
        let d = detrend(&years(10), &ys).unwrap();
        assert!(d.iter().all(|v| (v - 118.0).abs() < 1e-9));
        let c = vec![150.0; 10];
        assert_eq!(detrend(&years(10), &c).unwrap(), c);
    }

    #[test]
    fn detrend_keeps_residuals() {
        let resid = [3.0, -1.0, 4.0, -1.0, -5.0, 9.0, -2.0, 6.0, -5.0, -8.0];
        let ys: Vec<f64> = resid.iter().enumerate().map(|(t, e)| 50.0 + 1.5 * t as f64 + e).collect();
        let t: Vec<f64> = (0..10).map(f64::from).collect();
        let d = detrend(&years(10), &ys).unwrap();
        let slope = stats::covariance(&t, &ys) / stats::variance(&t);
        let intercept = stats::mean(&ys) - slope * stats::mean(&t);
        let final_fit = intercept + slope * 9.0;
        for (i, v) in d.iter().enumerate() {
            let e = ys[i] - intercept - slope * i as f64;
            assert!((v - (final_fit + e)).abs() < 1e-9);
        }
    }

    #[test]
    fn detrend_failure() {
        let ys: Vec<f64> = (0..10).map(|t| 200.0 - 20.0 * t as f64 + if t == 0 { -250.0 } else { 0.0 }).collect();
        assert!(matches!(detrend(&years(10), &ys), Err(Error::DetrendFailure { .. })));
        assert!(detrend(&years(5), &[1.0; 5]).is_err());
    }

    fn fit_with(alpha: f64, beta: f64, sigma2: f64) -> RegressionFit {
        RegressionFit {
            field_id: "F".into(),
            county_id: "C".into(),
            crop: Crop::Corn,
            alpha,
            beta,
            sigma2_resid: sigma2,
            r2: 0.5,
            field_mean: 0.0,
            field_var: 0.0,
            n_obs: 10,
        }
    }

    #[test]
    fn degenerate_field_draws() {
        let mut r = rng::stream(1, &["x"]);
        let b = Bounds::default().corn;
        let ys = simulate_field_years(&fit_with(150.0, 0.0, 0.0), &[100.0; 20], b, &mut r).unwrap();
        assert_eq!(ys, vec![150.0; 20]);
        assert!(matches!(
            simulate_field_years(&fit_with(400.0, 0.0, 0.0), &[100.0; 3], b, &mut r),
            Err(Error::DegenerateDraw { .. })
        ));
    }

    #[test]
    fn refit_recovers_parameters() {
        let mut r = rng::stream(2, &["refit"]);
        let n = rand_distr::Normal::new(170.0, 25.0).unwrap();
        let means: Vec<f64> = (0..500).map(|_| rand_distr::Distribution::sample(&n, &mut r)).collect();
        let fit = fit_with(20.0, 0.9, 100.0);
        let ys = simulate_field_years(&fit, &means, Bounds::default().corn, &mut r).unwrap();
        let refit = ols("F", "C", Crop::Corn, &ys, &means).unwrap();
        let se = (100.0 / (500.0 * stats::variance(&means))).sqrt();
        assert!((refit.beta - 0.9).abs() < 3.0 * se);
    }

    fn small_panel() -> Panel {
        generate_synthetic_panel(&SyntheticConfig {
            n_counties: 3,
            fields_per_county: 6,
            n_years: 15,
            ..Default::default()
        })
        .unwrap()
    }

    fn fits(panel: &Panel) -> Vec<RegressionFit> {
        panel
            .fields()
            .iter()
            .map(|f| fit_field_regression(f, panel.county(f.county_id(), f.crop()).unwrap()).unwrap())
            .collect()
    }

    #[test]
    fn simulated_panel_is_balanced_and_bounded() {
        let panel = small_panel();
        let spec = SimulationSpec {
            seed: 11,
            ..Default::default()
        };
        let sim = simulate_panel(&panel, &fits(&panel), &spec).unwrap();
        assert!(sim.exclusions.is_empty());
        assert_eq!(sim.panel.provenance(), Provenance::Simulated);
        assert_eq!(sim.panel.fields().len(), 18);
        for f in sim.panel.fields() {
            assert_eq!(f.years(), sim.panel.county(f.county_id(), f.crop()).unwrap().years());
            assert!(f.yields().iter().all(|y| (10.0..=350.0).contains(y)));
        }
        let again = simulate_panel(&panel, &fits(&panel), &spec).unwrap();
        assert_eq!(sim.panel, again.panel);
    }

    #[test]
    fn horizon_handling() {
        let panel = small_panel();
        let f = fits(&panel);
        let spec = SimulationSpec {
            n_years: Some(10),
            ..Default::default()
        };
        let sim = simulate_panel(&panel, &f, &spec).unwrap();
        assert_eq!(sim.panel.counties()[0].years(), &(1995..2005).collect::<Vec<_>>()[..]);
        let too_long = SimulationSpec {
            n_years: Some(40),
            ..Default::default()
        };
        assert!(matches!(simulate_panel(&panel, &f, &too_long), Err(Error::Config(_))));

        let ar = SimulationSpec {
            n_years: Some(100),
            source: SimulationSource::Ar2Extension,
            ..Default::default()
        };
        let sim = simulate_panel(&panel, &f, &ar).unwrap();
        assert!(sim.panel.fields().iter().all(|f| f.n_obs() == 100));
        assert!(SimulationSpec {
            source: SimulationSource::Ar2Extension,
            ..Default::default()
        }
        .validate()
        .is_err());
    }

    #[test]
    fn common_year_bootstrap_aligns_counties() {
        let panel = small_panel();
        let spec = SimulationSpec {
            n_years: Some(60),
            source: SimulationSource::Ar2Extension,
            bootstrap: BootstrapMode::CommonYear,
            ..Default::default()
        };
        let a = simulated_county(&panel.counties()[0], &spec).unwrap();
        let b = simulated_county(&panel.counties()[1], &spec).unwrap();
        let base_a = detrended_base(&panel.counties()[0], None).unwrap();
        let base_b = detrended_base(&panel.counties()[1], None).unwrap();
        let ma = fit_ar2("a", &base_a.values).unwrap();
        let mb = fit_ar2("b", &base_b.values).unwrap();
        // recover which residual was used at each step and compare indices
        let idx = |m: &Ar2Model, ys: &[f64], t: usize| {
            let e = ys[t] - m.intercept - m.phi1 * ys[t - 1] - m.phi2 * ys[t - 2];
            m.residuals
                .iter()
                .enumerate()
                .min_by(|x, y| (x.1 - e).abs().total_cmp(&(y.1 - e).abs()))
                .unwrap()
                .0
        };
        let mut same = 0;
        for t in 2..60 {
            if idx(&ma, a.mean_yields(), t) == idx(&mb, b.mean_yields(), t) {
                same += 1;
            }
        }
        assert!(same >= 50, "{same}");
    }
}
