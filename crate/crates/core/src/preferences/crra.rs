use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::stats;

/// Iso-elastic utility `y^(1-rho) / (1-rho)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Crra {
    pub rho: f64,
}

impl Default for Crra {
    fn default() -> Self {
        Self { rho: 1.5 }
    }
}

impl Crra {
    pub fn new(rho: f64) -> Result<Self> {
        if !(rho.is_finite() && rho > 0.0) || rho == 1.0 {
            return Err(Error::Config(format!("CRRA coefficient {rho} must be positive and != 1")));
        }
        Ok(Self { rho })
    }

    pub fn utility(&self, y: f64) -> Result<f64> {
        if !(y > 0.0) {
            return Err(Error::Domain(format!("utility undefined at {y}")));
        }
        let p = 1.0 - self.rho;
        Ok(y.powf(p) / p)
    }

    pub fn inverse_utility(&self, u: f64) -> f64 {
        let p = 1.0 - self.rho;
        (p * u).powf(1.0 / p)
    }

    pub fn second_derivative(&self, y: f64) -> f64 {
        -self.rho * y.powf(-self.rho - 1.0)
    }

    /// Power mean of order `1 - rho`, evaluated on outcomes scaled by their
    /// maximum to keep the powers in range.
    pub fn certainty_equivalent(&self, outcomes: &[f64]) -> Result<f64> {
        if outcomes.is_empty() {
            return Err(Error::Domain("certainty equivalent of an empty lottery".into()));
        }
        let scale = outcomes.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if let Some(bad) = outcomes.iter().find(|&&y| !(y > 0.0 && y.is_finite())) {
            return Err(Error::Domain(format!("utility undefined at {bad}")));
        }
        let p = 1.0 - self.rho;
        let m = outcomes.iter().map(|&y| (y / scale).powf(p)).sum::<f64>() / outcomes.len() as f64;
        Ok(scale * m.powf(1.0 / p))
    }
}

pub fn crra_utility(y: f64, rho: f64) -> Result<f64> {
    Crra::new(rho)?.utility(y)
}

pub fn certainty_equivalent(outcomes: &[f64], crra: &Crra) -> Result<f64> {
    crra.certainty_equivalent(outcomes)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RiskPremium {
    /// Mean minus certainty equivalent (bu/acre).
    pub absolute: f64,
    /// Absolute premium as a fraction of the mean.
    pub relative: f64,
}

pub fn risk_premium(outcomes: &[f64], crra: &Crra) -> Result<RiskPremium> {
    let ce = crra.certainty_equivalent(outcomes)?;
    let mean = stats::mean(outcomes);
    let absolute = mean - ce;
    Ok(RiskPremium {
        absolute,
        relative: absolute / mean,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const RHO: Crra = Crra { rho: 1.5 };

    #[test]
    fn closed_form_utilities() {
        assert!((crra_utility(100.0, 1.5).unwrap() + 0.2).abs() < 1e-15);
        assert!((crra_utility(64.0, 1.5).unwrap() + 0.25).abs() < 1e-15);
        assert!(crra_utility(101.0, 1.5).unwrap() > crra_utility(100.0, 1.5).unwrap());
        assert!(crra_utility(0.0, 1.5).is_err());
        assert!(Crra::new(1.0).is_err());
        assert!(Crra::new(-2.0).is_err());
    }

    #[test]
    fn certainty_equivalents() {
        assert_eq!(RHO.certainty_equivalent(&[150.0; 3]).unwrap(), 150.0);
        // mean utility -0.225, CE = (2 / 0.225)^2
        let ce = RHO.certainty_equivalent(&[100.0, 64.0]).unwrap();
        assert!((ce - 79.012345679).abs() < 1e-6);
        assert!((ce - (2.0f64 / 0.225).powi(2)).abs() < 1e-10);
        assert!(RHO.certainty_equivalent(&[]).is_err());
        assert!(RHO.certainty_equivalent(&[10.0, -1.0]).is_err());
    }

    #[test]
    fn risk_premiums() {
        let rp = risk_premium(&[150.0; 4], &RHO).unwrap();
        assert_eq!((rp.absolute, rp.relative), (0.0, 0.0));
        let rp = risk_premium(&[100.0, 64.0], &RHO).unwrap();
        assert!((rp.absolute - (82.0 - 79.0123456790)).abs() < 1e-8);
        assert!((rp.relative - 0.036434).abs() < 1e-5);
    }

    fn outcomes() -> impl Strategy<Value = Vec<f64>> {
        prop::collection::vec(1.0f64..500.0, 1..40)
    }

    proptest! {
        #[test]
        fn jensen(ys in outcomes()) {
            let ce = RHO.certainty_equivalent(&ys).unwrap();
            let mean = stats::mean(&ys);
            prop_assert!(ce <= mean * (1.0 + 1e-12));
            prop_assert!(ce >= stats::min(&ys) * (1.0 - 1e-12));
        }

        #[test]
        fn positive_homogeneity(ys in outcomes(), c in 0.01f64..100.0) {
            let scaled: Vec<f64> = ys.iter().map(|y| y * c).collect();
            let lhs = RHO.certainty_equivalent(&scaled).unwrap();
            let rhs = c * RHO.certainty_equivalent(&ys).unwrap();
            prop_assert!((lhs - rhs).abs() <= 1e-12 * rhs);
        }

        #[test]
        fn constant_shift_dominance(ys in outcomes(), c in 0.01f64..50.0) {
            let shifted: Vec<f64> = ys.iter().map(|y| y + c).collect();
            let before = RHO.certainty_equivalent(&ys).unwrap();
            let after = RHO.certainty_equivalent(&shifted).unwrap();
            // decreasing absolute risk aversion: the risk premium can only shrink
            let rp = stats::mean(&ys) - before;
            prop_assert!(after > before);
            prop_assert!(after - before >= c * (1.0 - 1e-9));
            prop_assert!(after - before <= c + rp + 1e-9 * after);
        }
    }
}
