//! Declarative run configuration read from TOML.
//!
//! ```toml
//! seed = 7
//! workers = 4
//! out = "results"
//!
//! [synthetic]
//! n_counties = 16
//!
//! [simulation]
//! n_years = 29
//!
//! [contracts]
//! subsidy = true
//!
//! [preference]
//! kind = "cpt"
//! reference_rule = "r1"
//! ```

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::contracts::{PremiumBasis, SubsidySchedule, Trigger};
use crate::data::{ColumnSchema, SyntheticConfig};
use crate::error::{Error, Result};
use crate::evaluator::{AggregateOptions, EvalConfig, ReversalOptions};
use crate::preferences::Preference;
use crate::regression::CvAggregation;
use crate::simulate::{BootstrapMode, Bounds, SimulationSource, SimulationSpec};
use crate::MIN_OBSERVATIONS;

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    /// Panel file; when absent the `[synthetic]` generator is used.
    pub input: Option<PathBuf>,
    /// Optional county reference means (`county_id,crop,year,mean_yield`).
    pub counties: Option<PathBuf>,
    pub schema: ColumnSchema,
    /// Minimum observed years per field-crop pair.
    pub filter_k: Option<usize>,
}

impl DataConfig {
    pub fn filter_k(&self) -> usize {
        self.filter_k.unwrap_or(MIN_OBSERVATIONS)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulationConfig {
    /// `false` evaluates the observed panel directly.
    pub enabled: bool,
    pub n_years: Option<usize>,
    pub source: SimulationSource,
    pub bootstrap: BootstrapMode,
    pub bounds: Bounds,
    /// Write the simulated panel next to the results.
    pub persist: bool,
}

impl Default for SimulationConfig {
    fn default() -> Self {
        Self {
            enabled: true,
            n_years: None,
            source: SimulationSource::default(),
            bootstrap: BootstrapMode::default(),
            bounds: Bounds::default(),
            persist: true,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ContractsConfig {
    pub triggers: Vec<Trigger>,
    pub area_trigger: Trigger,
    pub premium_basis: PremiumBasis,
    pub subsidy: bool,
    /// Fully subsidized farm coverage at 50%.
    pub catastrophic: bool,
    /// Replaces the built-in subsidy rates.
    pub subsidy_file: Option<PathBuf>,
}

impl Default for ContractsConfig {
    fn default() -> Self {
        Self {
            triggers: Trigger::grid(),
            area_trigger: Trigger::P90,
            premium_basis: PremiumBasis::FieldFair,
            subsidy: false,
            catastrophic: false,
            subsidy_file: None,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AggregateConfig {
    pub strict_50: bool,
    pub weight_by_years: bool,
    pub cv: CvAggregation,
}

impl AggregateConfig {
    pub fn options(&self) -> AggregateOptions {
        AggregateOptions {
            strict_50: self.strict_50,
            weight_by_years: self.weight_by_years,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepConfig {
    pub sizes: Vec<usize>,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            sizes: vec![20, 30, 60, 100, 250, 500],
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Required, either here or on the command line.
    pub seed: Option<u64>,
    /// Worker threads; `None` uses every core.
    pub workers: Option<usize>,
    pub out: Option<PathBuf>,
    pub data: DataConfig,
    pub synthetic: SyntheticConfig,
    pub simulation: SimulationConfig,
    pub contracts: ContractsConfig,
    pub preference: Preference,
    pub aggregate: AggregateConfig,
    pub report: ReversalOptions,
    pub sweep: SweepConfig,
}

impl RunConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn seed(&self) -> Result<u64> {
        self.seed
            .ok_or_else(|| Error::Config("a seed is required (set `seed` or pass --seed)".into()))
    }

    pub fn out_dir(&self) -> PathBuf {
        self.out.clone().unwrap_or_else(|| PathBuf::from("out"))
    }

    pub fn validate(&self) -> Result<()> {
        self.seed()?;
        if self.workers == Some(0) {
            return Err(Error::Config("workers must be at least 1".into()));
        }
        if self.data.input.is_none() {
            self.synthetic.validate()?;
        }
        if self.data.filter_k() < 2 {
            return Err(Error::Config("filter_k must be at least 2".into()));
        }
        self.simulation_spec()?.validate()?;
        self.eval_config()?.validate()?;
        if self.report.resolution == 0 || !(self.report.power > 0.0) {
            return Err(Error::Config("report resolution and power must be positive".into()));
        }
        if let Some(&n) = self.sweep.sizes.iter().find(|&&n| n < MIN_OBSERVATIONS) {
            return Err(Error::Config(format!("sweep size {n} is below {MIN_OBSERVATIONS}")));
        }
        Ok(())
    }

    pub fn simulation_spec(&self) -> Result<SimulationSpec> {
        Ok(SimulationSpec {
            bounds: self.simulation.bounds,
            n_years: self.simulation.n_years,
            seed: self.seed()?,
            source: self.simulation.source,
            bootstrap: self.simulation.bootstrap,
        })
    }

    pub fn subsidy_schedule(&self) -> Result<Option<SubsidySchedule>> {
        if !self.contracts.subsidy {
            return Ok(None);
        }
        let schedule = match &self.contracts.subsidy_file {
            Some(path) => {
                let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
                SubsidySchedule::from_toml_str(&text)?
            }
            None => SubsidySchedule::yield_protection(),
        };
        Ok(Some(if self.contracts.catastrophic {
            schedule.with_catastrophic()
        } else {
            schedule
        }))
    }

    pub fn eval_config(&self) -> Result<EvalConfig> {
        let mut triggers = self.contracts.triggers.clone();
        triggers.sort();
        triggers.dedup();
        Ok(EvalConfig {
            triggers,
            area_trigger: self.contracts.area_trigger,
            premium_basis: self.contracts.premium_basis,
            subsidy: self.subsidy_schedule()?,
            preference: self.preference.clone(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::preferences::ReferenceRule;

    #[test]
    fn empty_config_needs_a_seed() {
        let c = RunConfig::from_toml_str("").unwrap();
        assert!(matches!(c.validate(), Err(Error::Config(_))));
        let c = RunConfig::from_toml_str("seed = 3").unwrap();
        c.validate().unwrap();
        assert_eq!(c.eval_config().unwrap().triggers.len(), 16);
        assert_eq!(c.data.filter_k(), 8);
    }

    #[test]
    fn sections_parse() {
        let text = r#"
seed = 9
workers = 2

[data]
filter_k = 10

[data.schema]
yield = "bu_acre"

[simulation]
n_years = 20
source = "ar2_extension"
bootstrap = "common_year"

[simulation.bounds.soy]
lower = 5.0
upper = 90.0

[contracts]
triggers = [0.5, 0.85, 0.75]
premium_basis = "county_fair"
subsidy = true
catastrophic = true

[preference]
kind = "cpt"
reference_rule = "r1"

[aggregate]
strict_50 = true
cv = "pooled"

[report]
resolution = 8

[sweep]
sizes = [30, 100]
"#;
        let c = RunConfig::from_toml_str(text).unwrap();
        c.validate().unwrap();
        assert_eq!(c.data.schema.yield_col, "bu_acre");
        assert_eq!(c.simulation.bounds.soy.upper, 90.0);
        assert_eq!(c.simulation.bounds.corn.upper, 350.0);
        let e = c.eval_config().unwrap();
        assert_eq!(e.triggers, vec![Trigger::P50, Trigger::from_percent(75).unwrap(), Trigger::P85]);
        assert_eq!(e.subsidy.unwrap().rate(crate::Scheme::Farm, Trigger::P50), Some(1.0));
        match c.preference {
            Preference::Cpt(s) => assert_eq!(s.reference_rule, ReferenceRule::R1),
            _ => panic!(),
        }
        assert_eq!(c.aggregate.cv, CvAggregation::Pooled);
        let back = RunConfig::from_toml_str(&c.to_toml_string()).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn rejects_bad_values() {
        for text in [
            "seed = 1\nunknown = 2",
            "seed = 1\n[contracts]\ntriggers = [0.33]",
            "seed = 1\n[contracts]\ntriggers = [0.10]",
        ] {
            assert!(RunConfig::from_toml_str(text).is_err(), "{text}");
        }
        for text in [
            "seed = 1\nworkers = 0",
            "seed = 1\n[simulation]\nn_years = 5",
            "seed = 1\n[simulation]\nsource = \"ar2_extension\"",
            "seed = 1\n[preference]\nkind = \"crra\"\nrho = 1.0",
            "seed = 1\n[contracts]\npremium_basis = \"subsidized\"",
            "seed = 1\n[simulation.bounds.corn]\nlower = 0.0\nupper = 10.0",
            "seed = 1\n[sweep]\nsizes = [4]",
        ] {
            let c = RunConfig::from_toml_str(text).unwrap();
            assert!(c.validate().is_err(), "{text}");
        }
    }
}
