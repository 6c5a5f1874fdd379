//! Cumulative prospect theory over an empirical lottery with equal weights.
//!
//! Outcomes are split at the reference point. Gains are weighted from the
//! best outcome down, losses from the worst outcome up, with the
//! inverse-S weighting `w(p) = p^g / (p^g + (1-p)^g)^(1/g)`. Tied outcomes
//! are merged into one atom before the cumulative weights are taken.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CptParams {
    pub alpha_gain: f64,
    pub beta_loss: f64,
    pub lambda: f64,
    pub gamma_gain: f64,
    pub gamma_loss: f64,
}

/// Tversky and Kahneman (1992) median estimates.
impl Default for CptParams {
    fn default() -> Self {
        Self {
            alpha_gain: 0.88,
            beta_loss: 0.88,
            lambda: 2.25,
            gamma_gain: 0.61,
            gamma_loss: 0.69,
        }
    }
}

/// Below this exponent the weighting function stops being monotone.
const GAMMA_MONOTONE_BOUND: f64 = 0.28;

pub fn probability_weight(p: f64, gamma: f64) -> f64 {
    if p <= 0.0 {
        return 0.0;
    }
    if p >= 1.0 {
        return 1.0;
    }
    let a = p.powf(gamma);
    a / (a + (1.0 - p).powf(gamma)).powf(1.0 / gamma)
}

impl CptParams {
    pub fn validate(&self) -> Result<()> {
        let curv = |name: &str, v: f64| {
            if v > 0.0 && v <= 1.0 {
                Ok(())
            } else {
                Err(Error::Config(format!("{name} = {v} must lie in (0, 1]")))
            }
        };
        curv("alpha_gain", self.alpha_gain)?;
        curv("beta_loss", self.beta_loss)?;
        if !(self.lambda >= 1.0) {
            return Err(Error::Config(format!("lambda = {} must be >= 1", self.lambda)));
        }
        for (name, g) in [("gamma_gain", self.gamma_gain), ("gamma_loss", self.gamma_loss)] {
            if !(g > GAMMA_MONOTONE_BOUND && g <= 1.0) {
                return Err(Error::Config(format!("{name} = {g} must lie in (0.28, 1]")));
            }
        }
        Ok(())
    }

    pub fn value(&self, x: f64, reference: f64) -> f64 {
        if x >= reference {
            (x - reference).powf(self.alpha_gain)
        } else {
            -self.lambda * (reference - x).powf(self.beta_loss)
        }
    }

    /// Deviation from the reference whose value equals `v`.
    pub fn value_inverse(&self, v: f64) -> f64 {
        if v >= 0.0 {
            v.powf(1.0 / self.alpha_gain)
        } else {
            -(-v / self.lambda).powf(1.0 / self.beta_loss)
        }
    }

    /// Merged outcome atoms with their decision weights, losses first
    /// (worst to best) then gains (best to worst).
    pub fn decision_weights(&self, outcomes: &[f64], reference: f64) -> Vec<(f64, f64)> {
        let mut sorted = outcomes.to_vec();
        sorted.sort_by(f64::total_cmp);
        let n = sorted.len() as f64;
        let mut atoms: Vec<(f64, f64)> = Vec::new();
        for x in sorted {
            match atoms.last_mut() {
                Some((v, p)) if *v == x => *p += 1.0 / n,
                _ => atoms.push((x, 1.0 / n)),
            }
        }
        let split = atoms.partition_point(|(x, _)| *x < reference);
        let mut out = Vec::with_capacity(atoms.len());

        let mut cum = 0.0;
        let mut prev_w = 0.0;
        for &(x, p) in &atoms[..split] {
            cum += p;
            let w = probability_weight(cum, self.gamma_loss);
            out.push((x, w - prev_w));
            prev_w = w;
        }
        cum = 0.0;
        prev_w = 0.0;
        for &(x, p) in atoms[split..].iter().rev() {
            cum += p;
            let w = probability_weight(cum, self.gamma_gain);
            out.push((x, w - prev_w));
            prev_w = w;
        }
        out
    }

    pub fn evaluate(&self, outcomes: &[f64], reference: f64) -> f64 {
        self.decision_weights(outcomes, reference)
            .into_iter()
            .map(|(x, w)| w * self.value(x, reference))
            .sum()
    }

    /// Sure outcome with the same prospect value, measured from `anchor`.
    /// With `anchor == reference` this is the usual certainty equivalent.
    pub fn certainty_equivalent(&self, outcomes: &[f64], reference: f64, anchor: f64) -> f64 {
        anchor + self.value_inverse(self.evaluate(outcomes, reference))
    }
}

pub fn cpt_value(outcomes: &[f64], reference: f64, params: &CptParams) -> Result<f64> {
    if outcomes.is_empty() {
        return Err(Error::Domain("prospect value of an empty lottery".into()));
    }
    Ok(params.evaluate(outcomes, reference))
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum ReferenceRule {
    /// Expected yield plus the premium paid.
    #[serde(rename = "r1", alias = "R1", alias = "R1_expected_plus_premium")]
    R1,
    /// Expected yield only; the premium is sunk.
    #[default]
    #[serde(rename = "r2", alias = "R2", alias = "R2_expected_only")]
    R2,
}

impl ReferenceRule {
    pub fn as_str(self) -> &'static str {
        match self {
            ReferenceRule::R1 => "r1",
            ReferenceRule::R2 => "r2",
        }
    }
}

/// Which outcomes are valued against the reference.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CptOutcomes {
    /// Net yields `y + I - premium` under both rules.
    #[default]
    Net,
    /// Under R2 the premium is left out of the outcomes as well.
    GrossWhenSunk,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CptSpec {
    #[serde(rename = "cpt_params")]
    pub params: CptParams,
    pub reference_rule: ReferenceRule,
    pub outcomes: CptOutcomes,
}

pub fn cpt_reference(expected_yield: f64, premium: f64, rule: ReferenceRule) -> Result<f64> {
    if !(premium >= 0.0) {
        return Err(Error::Domain(format!("premium {premium} must be non-negative")));
    }
    Ok(match rule {
        ReferenceRule::R1 => expected_yield + premium,
        ReferenceRule::R2 => expected_yield,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn single_outcomes() {
        let p = CptParams::default();
        assert_eq!(cpt_value(&[100.0], 100.0, &p).unwrap(), 0.0);
        let gain = cpt_value(&[110.0], 100.0, &p).unwrap();
        assert!((gain - 10f64.powf(0.88)).abs() < 1e-12);
        assert!((gain - 7.5858).abs() < 1e-4);
        let loss = cpt_value(&[90.0], 100.0, &p).unwrap();
        assert!((loss + 17.068).abs() < 1e-3);
        assert!((loss + 2.25 * 10f64.powf(0.88)).abs() < 1e-12);
        assert!(cpt_value(&[], 0.0, &p).is_err());
    }

    #[test]
    fn weighting_endpoints() {
        for g in [0.3, 0.61, 0.69, 1.0] {
            assert_eq!(probability_weight(0.0, g), 0.0);
            assert_eq!(probability_weight(1.0, g), 1.0);
        }
        assert!((probability_weight(0.3, 1.0) - 0.3).abs() < 1e-15);
    }

    #[test]
    fn hand_computed_two_outcome_lottery() {
        // one gain of 10 and one loss of 10, each with p = 1/2
        let p = CptParams::default();
        let v = p.evaluate(&[90.0, 110.0], 100.0);
        let w_g = probability_weight(0.5, 0.61);
        let w_l = probability_weight(0.5, 0.69);
        let expected = w_g * 10f64.powf(0.88) - w_l * 2.25 * 10f64.powf(0.88);
        assert!((v - expected).abs() < 1e-12);
    }

    #[test]
    fn ties_are_merged() {
        let p = CptParams::default();
        let w = p.decision_weights(&[90.0, 90.0, 120.0, 120.0, 120.0], 100.0);
        assert_eq!(w.len(), 2);
        assert!((w[0].1 - probability_weight(0.4, 0.69)).abs() < 1e-15);
        assert!((w[1].1 - probability_weight(0.6, 0.61)).abs() < 1e-15);
    }

    #[test]
    fn references() {
        assert_eq!(cpt_reference(160.0, 0.0, ReferenceRule::R1).unwrap(), cpt_reference(160.0, 0.0, ReferenceRule::R2).unwrap());
        assert_eq!(cpt_reference(160.0, 4.0, ReferenceRule::R1).unwrap(), 164.0);
        assert_eq!(cpt_reference(160.0, 4.0, ReferenceRule::R2).unwrap(), 160.0);
        assert!(cpt_reference(160.0, -1.0, ReferenceRule::R1).is_err());
    }

    #[test]
    fn certainty_equivalent_inverts_value() {
        let p = CptParams::default();
        assert_eq!(p.certainty_equivalent(&[120.0], 100.0, 100.0), 120.0);
        assert!((p.certainty_equivalent(&[80.0], 100.0, 100.0) - 80.0).abs() < 1e-10);
    }

    #[test]
    fn validation() {
        assert!(CptParams::default().validate().is_ok());
        assert!(CptParams { lambda: 0.5, ..Default::default() }.validate().is_err());
        assert!(CptParams { gamma_gain: 0.2, ..Default::default() }.validate().is_err());
        assert!(CptParams { alpha_gain: 1.2, ..Default::default() }.validate().is_err());
    }

    proptest! {
        #[test]
        fn weighting_is_increasing(a in 0.0f64..1.0, b in 0.0f64..1.0, g in 0.2801f64..1.0) {
            let (lo, hi) = if a < b { (a, b) } else { (b, a) };
            prop_assume!(hi - lo > 1e-9);
            prop_assert!(probability_weight(lo, g) < probability_weight(hi, g));
        }

        #[test]
        fn decision_weights_in_unit_interval(ys in prop::collection::vec(50.0f64..150.0, 1..30), r in 50.0f64..150.0) {
            for (_, w) in CptParams::default().decision_weights(&ys, r) {
                prop_assert!((0.0..=1.0).contains(&w));
            }
        }

        #[test]
        fn weights_continuous_under_perturbation(ys in prop::collection::vec(50.0f64..150.0, 2..20)) {
            let p = CptParams::default();
            let mut tied = ys.clone();
            tied[1] = tied[0];
            let mut nudged = tied.clone();
            nudged[1] += 1e-9;
            let a = p.evaluate(&tied, 100.0);
            let b = p.evaluate(&nudged, 100.0);
            prop_assert!((a - b).abs() < 1e-5);
        }

        #[test]
        fn degenerate_lottery_at_reference(r in 1.0f64..500.0, n in 1usize..20) {
            prop_assert_eq!(CptParams::default().evaluate(&vec![r; n], r), 0.0);
        }
    }
}
