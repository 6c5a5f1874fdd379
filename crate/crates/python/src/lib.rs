//! Python bindings: preferences, contracts, regression, the truncated-normal
//! sampler, synthetic panels and config-driven pipeline runs.

use std::collections::BTreeMap;

use engine::config::RunConfig;
use engine::contracts::{self, Scheme, SubsidySchedule, Trigger};
use engine::data::{generate_synthetic_panel, load_panel, ColumnSchema, Crop, SyntheticConfig};
use engine::evaluator::{evaluate_field as eval_field, EvalConfig, FieldEvaluation};
use engine::pipeline;
use engine::preferences::{self, CptParams, Crra};
use engine::regression;
use engine::simulate::TruncatedNormal as Tn;
use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use pyo3::types::PyDict;

fn err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn parse_scheme(s: &str) -> PyResult<Scheme> {
    match s {
        "area" => Ok(Scheme::Area),
        "farm" => Ok(Scheme::Farm),
        _ => Err(PyValueError::new_err(format!("unknown scheme {s:?}"))),
    }
}

#[pyfunction]
fn crra_utility(y: f64, rho: f64) -> PyResult<f64> {
    preferences::crra_utility(y, rho).map_err(err)
}

#[pyfunction]
#[pyo3(signature = (outcomes, rho = 1.5))]
fn certainty_equivalent(outcomes: Vec<f64>, rho: f64) -> PyResult<f64> {
    Crra::new(rho)
        .and_then(|c| c.certainty_equivalent(&outcomes))
        .map_err(err)
}

/// `(absolute, relative)` risk premium under CRRA.
#[pyfunction]
#[pyo3(signature = (outcomes, rho = 1.5))]
fn risk_premium(outcomes: Vec<f64>, rho: f64) -> PyResult<(f64, f64)> {
    let c = Crra::new(rho).map_err(err)?;
    let rp = preferences::risk_premium(&outcomes, &c).map_err(err)?;
    Ok((rp.absolute, rp.relative))
}

#[pyfunction]
#[pyo3(signature = (outcomes, reference, alpha_gain = 0.88, beta_loss = 0.88, lambda_ = 2.25, gamma_gain = 0.61, gamma_loss = 0.69))]
fn cpt_value(
    outcomes: Vec<f64>,
    reference: f64,
    alpha_gain: f64,
    beta_loss: f64,
    lambda_: f64,
    gamma_gain: f64,
    gamma_loss: f64,
) -> PyResult<f64> {
    let params = CptParams {
        alpha_gain,
        beta_loss,
        lambda: lambda_,
        gamma_gain,
        gamma_loss,
    };
    params.validate().map_err(err)?;
    preferences::cpt_value(&outcomes, reference, &params).map_err(err)
}

#[pyfunction]
fn probability_weight(p: f64, gamma: f64) -> f64 {
    preferences::probability_weight(p, gamma)
}

/// `max(trigger * expected - actual_t, 0)` for every year.
#[pyfunction]
fn indemnities(trigger: f64, expected: f64, actual: Vec<f64>) -> PyResult<Vec<f64>> {
    let t = Trigger::from_fraction(trigger).map_err(err)?;
    Ok(contracts::payouts(t.fraction() * expected, &actual))
}

#[pyfunction]
fn subsidized_premium(premium: f64, scheme: &str, trigger: f64) -> PyResult<f64> {
    let t = Trigger::from_fraction(trigger).map_err(err)?;
    contracts::subsidized_premium(premium, parse_scheme(scheme)?, t, &SubsidySchedule::default()).map_err(err)
}

/// OLS of field yields on county means; returns a dict of the fit.
#[pyfunction]
fn fit_regression<'py>(py: Python<'py>, field: Vec<f64>, county: Vec<f64>) -> PyResult<Bound<'py, PyDict>> {
    if field.len() != county.len() {
        return Err(PyValueError::new_err("field and county series differ in length"));
    }
    let fit = regression::ols("field", "county", Crop::Corn, &field, &county).map_err(err)?;
    let d = PyDict::new(py);
    d.set_item("alpha", fit.alpha)?;
    d.set_item("beta", fit.beta)?;
    d.set_item("r2", fit.r2)?;
    d.set_item("sigma2_resid", fit.sigma2_resid)?;
    d.set_item("field_mean", fit.field_mean)?;
    d.set_item("field_var", fit.field_var)?;
    d.set_item("n_obs", fit.n_obs)?;
    Ok(d)
}

#[pyfunction]
fn critical_beta(indemnities: Vec<f64>, county: Vec<f64>) -> PyResult<f64> {
    regression::critical_beta(&indemnities, &county).map_err(err)
}

#[pyclass]
struct TruncatedNormal {
    inner: Tn,
}

#[pymethods]
impl TruncatedNormal {
    #[new]
    fn new(location: f64, scale: f64, lower: f64, upper: f64) -> PyResult<Self> {
        Ok(Self {
            inner: Tn::new(location, scale, lower, upper).map_err(err)?,
        })
    }

    fn mean(&self) -> f64 {
        self.inner.mean()
    }

    fn variance(&self) -> f64 {
        self.inner.variance()
    }

    fn ppf(&self, u: f64) -> f64 {
        self.inner.sample_from_uniform(u)
    }

    /// `n` draws from the stream derived from `seed`.
    #[pyo3(signature = (n, seed = 0))]
    fn sample(&self, n: usize, seed: u64) -> Vec<f64> {
        let mut r = engine::rng::stream(seed, &["python"]);
        (0..n).map(|_| self.inner.sample(&mut r)).collect()
    }
}

fn evaluation_dict<'py>(py: Python<'py>, e: &FieldEvaluation, triggers: &[Trigger]) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    d.set_item("field_id", &e.field_id)?;
    d.set_item("county_id", &e.county_id)?;
    d.set_item("mean_yield", e.mean_yield)?;
    d.set_item("ce_none", e.ce_none)?;
    d.set_item("ce_area", e.ce_area)?;
    let farm: BTreeMap<String, f64> = triggers.iter().map(|t| t.to_string()).zip(e.ce_farm.iter().copied()).collect();
    d.set_item("ce_farm", farm)?;
    d.set_item("risk_premium_none", e.risk_premium_none)?;
    d.set_item("risk_premium_area", e.risk_premium_area)?;
    d.set_item("farm_equiv", e.farm_equiv.to_string())?;
    Ok(d)
}

/// Compares no insurance, area at 90% and farm contracts for one field
/// observed in the same years as its county.
#[pyfunction]
#[pyo3(signature = (field, county, rho = 1.5, subsidy = false))]
fn evaluate_field<'py>(
    py: Python<'py>,
    field: Vec<f64>,
    county: Vec<f64>,
    rho: f64,
    subsidy: bool,
) -> PyResult<Bound<'py, PyDict>> {
    let years: Vec<i32> = (0..field.len() as i32).collect();
    let f = engine::FieldCropSeries::new("field", "county", Crop::Corn, years.clone(), field).map_err(err)?;
    let c = engine::CountySeries::new("county", Crop::Corn, years, county).map_err(err)?;
    let cfg = EvalConfig {
        subsidy: subsidy.then(SubsidySchedule::default),
        preference: engine::Preference::Crra(Crra::new(rho).map_err(err)?),
        ..Default::default()
    };
    let e = eval_field(&f, &c, &cfg).map_err(err)?;
    evaluation_dict(py, &e, &cfg.triggers)
}

/// Field series of a panel: `(field_id, county_id, crop, years, yields)`.
type FieldRow = (String, String, String, Vec<i32>, Vec<f64>);

#[pyclass]
struct Panel {
    inner: engine::Panel,
}

#[pymethods]
impl Panel {
    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        Ok(Self {
            inner: load_panel(path, &ColumnSchema::default()).map_err(err)?,
        })
    }

    /// Synthetic panel; keyword arguments override `[synthetic]` config keys.
    #[staticmethod]
    #[pyo3(signature = (n_counties = 16, fields_per_county = 50, n_years = 29, seed = 1))]
    fn synthetic(n_counties: usize, fields_per_county: usize, n_years: usize, seed: u64) -> PyResult<Self> {
        let cfg = SyntheticConfig {
            n_counties,
            fields_per_county,
            n_years,
            seed,
            ..Default::default()
        };
        Ok(Self {
            inner: generate_synthetic_panel(&cfg).map_err(err)?,
        })
    }

    fn __len__(&self) -> usize {
        self.inner.fields().len()
    }

    fn provenance(&self) -> &'static str {
        self.inner.provenance().as_str()
    }

    fn fields(&self) -> Vec<FieldRow> {
        self.inner
            .fields()
            .iter()
            .map(|f| {
                (
                    f.field_id().to_string(),
                    f.county_id().to_string(),
                    f.crop().to_string(),
                    f.years().to_vec(),
                    f.yields().to_vec(),
                )
            })
            .collect()
    }

    fn save(&self, path: &str) -> PyResult<()> {
        engine::data::save_panel(&self.inner, path).map_err(err)
    }
}

/// Runs the pipeline described by a TOML config string in memory and
/// returns the county aggregates as a list of dicts.
#[pyfunction]
fn run_in_memory<'py>(py: Python<'py>, config_toml: &str) -> PyResult<Vec<Bound<'py, PyDict>>> {
    let cfg = RunConfig::from_toml_str(config_toml).map_err(err)?;
    let res = py
        .detach(|| pipeline::with_workers(cfg.workers, || pipeline::execute(&cfg)))
        .map_err(err)?
        .map_err(err)?;
    res.evaluation
        .counties
        .iter()
        .map(|a| {
            let d = PyDict::new(py);
            d.set_item("county_id", &a.county_id)?;
            d.set_item("crop", a.crop.to_string())?;
            d.set_item("n_fields", a.n_fields)?;
            d.set_item("median_farm_equiv", a.median_farm_equiv.to_string())?;
            d.set_item("share_ge_85", a.share_ge_85)?;
            d.set_item("share_ge_90", a.share_ge_90)?;
            d.set_item("share_ge_50", a.share_ge_50)?;
            d.set_item("share_zero", a.share_zero)?;
            d.set_item("mean_ce_gain_vs_none", a.mean_ce_gain_vs_none)?;
            Ok(d)
        })
        .collect()
}

/// Runs the full pipeline and writes outputs; returns the written paths.
#[pyfunction]
fn run_pipeline(py: Python<'_>, config_toml: &str) -> PyResult<Vec<String>> {
    let cfg = RunConfig::from_toml_str(config_toml).map_err(err)?;
    let files = py.detach(|| pipeline::run_pipeline(&cfg)).map_err(err)?;
    Ok(files.iter().map(|p| p.display().to_string()).collect())
}

#[pymodule]
fn basisrisk(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(crra_utility, m)?)?;
    m.add_function(wrap_pyfunction!(certainty_equivalent, m)?)?;
    m.add_function(wrap_pyfunction!(risk_premium, m)?)?;
    m.add_function(wrap_pyfunction!(cpt_value, m)?)?;
    m.add_function(wrap_pyfunction!(probability_weight, m)?)?;
    m.add_function(wrap_pyfunction!(indemnities, m)?)?;
    m.add_function(wrap_pyfunction!(subsidized_premium, m)?)?;
    m.add_function(wrap_pyfunction!(fit_regression, m)?)?;
    m.add_function(wrap_pyfunction!(critical_beta, m)?)?;
    m.add_function(wrap_pyfunction!(evaluate_field, m)?)?;
    m.add_function(wrap_pyfunction!(run_in_memory, m)?)?;
    m.add_function(wrap_pyfunction!(run_pipeline, m)?)?;
    m.add_class::<TruncatedNormal>()?;
    m.add_class::<Panel>()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn module_functions_from_python() {
        Python::attach(|py| {
            let m = PyModule::new(py, "basisrisk").unwrap();
            basisrisk(&m).unwrap();
            let ce: f64 = m
                .getattr("certainty_equivalent")
                .unwrap()
                .call1((vec![100.0, 64.0],))
                .unwrap()
                .extract()
                .unwrap();
            assert!((ce - 79.0123).abs() < 1e-4);
            let v: f64 = m
                .getattr("cpt_value")
                .unwrap()
                .call1((vec![110.0], 100.0))
                .unwrap()
                .extract()
                .unwrap();
            assert!((v - 7.5858).abs() < 1e-4);
            assert!(m.getattr("subsidized_premium").unwrap().call1((10.0, "farm", 0.9)).is_err());
        });
    }

    #[test]
    fn evaluate_identical_series() {
        Python::attach(|py| {
            let ys = vec![180.0, 150.0, 175.0, 190.0, 120.0, 185.0, 170.0, 160.0, 200.0, 140.0];
            let d = evaluate_field(py, ys.clone(), ys, 1.5, false).unwrap();
            let ce_area: f64 = d.get_item("ce_area").unwrap().unwrap().extract().unwrap();
            let farm: BTreeMap<String, f64> = d.get_item("ce_farm").unwrap().unwrap().extract().unwrap();
            assert_eq!(ce_area, farm["0.90"]);
        });
    }

    #[test]
    fn in_memory_run() {
        Python::attach(|py| {
            let rows = run_in_memory(
                py,
                "seed = 3\nworkers = 2\n[synthetic]\nn_counties = 4\nfields_per_county = 5\n",
            )
            .unwrap();
            assert_eq!(rows.len(), 4);
            assert!(run_in_memory(py, "").is_err());
        });
    }
}
