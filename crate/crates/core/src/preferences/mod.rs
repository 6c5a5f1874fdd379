//! Preference functionals used to rank insurance plans.

mod cpt;
mod crra;

use serde::{Deserialize, Serialize};

pub use cpt::{cpt_reference, cpt_value, probability_weight, CptOutcomes, CptParams, CptSpec, ReferenceRule};
pub use crra::{certainty_equivalent, crra_utility, risk_premium, Crra, RiskPremium};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Preference {
    Crra(Crra),
    Cpt(CptSpec),
}

impl Default for Preference {
    fn default() -> Self {
        Preference::Crra(Crra::default())
    }
}

impl Preference {
    pub fn validate(&self) -> Result<()> {
        match self {
            Preference::Crra(c) => Crra::new(c.rho).map(|_| ()),
            Preference::Cpt(s) => s.params.validate(),
        }
    }

    pub fn label(&self) -> String {
        match self {
            Preference::Crra(c) => format!("crra(rho={})", c.rho),
            Preference::Cpt(s) => format!("cpt({})", s.reference_rule.as_str()),
        }
    }
}

/// Second-order approximation of the expected-utility change produced by a
/// variance reduction `delta` around mean `mu`: `-u''(mu) * delta / 2`.
pub fn taylor_utility_gain(delta: f64, mu: f64, preference: &Preference) -> Result<f64> {
    if !(mu > 0.0) {
        return Err(Error::Domain(format!("mean {mu} must be positive")));
    }
    match preference {
        Preference::Crra(c) => Ok(-0.5 * c.second_derivative(mu) * delta),
        Preference::Cpt(_) => Err(Error::Domain(
            "prospect-theory value is not twice differentiable at the reference".into(),
        )),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn taylor_closed_form() {
        let p = Preference::Crra(Crra::new(1.5).unwrap());
        let gain = taylor_utility_gain(200.0, 100.0, &p).unwrap();
        assert!((gain - 1.5e-3).abs() < 1e-15);
        assert_eq!(taylor_utility_gain(0.0, 100.0, &p).unwrap(), 0.0);
        assert!(taylor_utility_gain(-5.0, 100.0, &p).unwrap() < 0.0);
        assert!(taylor_utility_gain(1.0, 0.0, &p).is_err());
        assert!(taylor_utility_gain(1.0, 1.0, &Preference::Cpt(CptSpec::default())).is_err());
    }

    #[test]
    fn config_shape() {
        let p: Preference = toml::from_str("kind = \"crra\"\nrho = 2.0\n").unwrap();
        assert_eq!(p, Preference::Crra(Crra { rho: 2.0 }));
        let p: Preference = toml::from_str("kind = \"cpt\"\nreference_rule = \"r1\"\n").unwrap();
        match p {
            Preference::Cpt(s) => {
                assert_eq!(s.reference_rule, ReferenceRule::R1);
                assert_eq!(s.params, CptParams::default());
            }
            _ => panic!(),
        }
        let p: Preference =
            toml::from_str("kind = \"cpt\"\nreference_rule = \"R2_expected_only\"\ncpt_params = { lambda = 3.0 }\n").unwrap();
        match p {
            Preference::Cpt(s) => {
                assert_eq!(s.reference_rule, ReferenceRule::R2);
                assert_eq!(s.params.lambda, 3.0);
                assert_eq!(s.params.gamma_gain, 0.61);
            }
            _ => panic!(),
        }
    }
}
