//! Normal distribution truncated to `[lower, upper]`, sampled by inverting
//! its CDF so that every draw consumes exactly one uniform.

use rand::Rng;
use statrs::function::erf::{erfc, erfc_inv};

use crate::error::{Error, Result};

const SQRT_2: f64 = std::f64::consts::SQRT_2;

/// Standard normal upper-tail probability `P(Z > x)`.
fn survival(x: f64) -> f64 {
    0.5 * erfc(x / SQRT_2)
}

fn survival_inv(q: f64) -> f64 {
    SQRT_2 * erfc_inv(2.0 * q)
}

fn density(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TruncatedNormal {
    location: f64,
    scale: f64,
    lower: f64,
    upper: f64,
}

impl TruncatedNormal {
    pub fn new(location: f64, scale: f64, lower: f64, upper: f64) -> Result<Self> {
        if !(lower < upper) || !location.is_finite() || !(scale >= 0.0) || !scale.is_finite() {
            return Err(Error::Domain(format!(
                "truncated normal with location {location}, scale {scale} on [{lower}, {upper}]"
            )));
        }
        if scale == 0.0 && !(lower..=upper).contains(&location) {
            return Err(Error::DegenerateDraw {
                location,
                lower,
                upper,
            });
        }
        Ok(Self {
            location,
            scale,
            lower,
            upper,
        })
    }

    fn standardized(&self) -> (f64, f64) {
        (
            (self.lower - self.location) / self.scale,
            (self.upper - self.location) / self.scale,
        )
    }

    /// Maps `u` in `[0, 1]` to a draw. Monotone in `u`.
    pub fn sample_from_uniform(&self, u: f64) -> f64 {
        if self.scale == 0.0 {
            return self.location;
        }
        let (a, b) = self.standardized();
        // work in whichever tail keeps the probabilities away from 1
        let z = if a >= 0.0 {
            let (qa, qb) = (survival(a), survival(b));
            if qa - qb <= 0.0 {
                return self.lower;
            }
            survival_inv(qa - u * (qa - qb))
        } else {
            // lower-tail probabilities: P(Z < x) = P(Z > -x)
            let (pa, pb) = (survival(-a), survival(-b));
            if pb - pa <= 0.0 {
                return self.upper;
            }
            -survival_inv(pa + u * (pb - pa))
        };
        (self.location + self.scale * z).clamp(self.lower, self.upper)
    }

    pub fn sample(&self, rng: &mut impl Rng) -> f64 {
        self.sample_from_uniform(rng.random::<f64>())
    }

    /// `n` draws with one uniform in each of `n` equal strata of `[0, 1)`.
    pub fn sample_stratified(&self, n: usize, rng: &mut impl Rng) -> Vec<f64> {
        (0..n)
            .map(|i| {
                let u = (i as f64 + rng.random::<f64>()) / n as f64;
                self.sample_from_uniform(u)
            })
            .collect()
    }

    fn tail_mass(&self) -> f64 {
        let (a, b) = self.standardized();
        if a >= 0.0 {
            survival(a) - survival(b)
        } else {
            survival(-b) - survival(-a)
        }
    }

    pub fn mean(&self) -> f64 {
        if self.scale == 0.0 {
            return self.location;
        }
        let (a, b) = self.standardized();
        let z = self.tail_mass();
        self.location + self.scale * (density(a) - density(b)) / z
    }

    pub fn variance(&self) -> f64 {
        if self.scale == 0.0 {
            return 0.0;
        }
        let (a, b) = self.standardized();
        let z = self.tail_mass();
        let r = (density(a) - density(b)) / z;
        let db = if b.is_finite() { b * density(b) } else { 0.0 };
        let da = if a.is_finite() { a * density(a) } else { 0.0 };
        self.scale * self.scale * (1.0 + (da - db) / z - r * r)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::{rng, stats};
    use proptest::prelude::*;

    #[test]
    fn zero_scale() {
        let t = TruncatedNormal::new(150.0, 0.0, 10.0, 350.0).unwrap();
        assert_eq!(t.sample_from_uniform(0.3), 150.0);
        assert_eq!(t.mean(), 150.0);
        assert!(matches!(
            TruncatedNormal::new(400.0, 0.0, 10.0, 350.0),
            Err(Error::DegenerateDraw { .. })
        ));
        assert!(TruncatedNormal::new(100.0, -1.0, 10.0, 350.0).is_err());
        assert!(TruncatedNormal::new(100.0, 1.0, 350.0, 10.0).is_err());
    }

    #[test]
    fn untruncated_limit() {
        let t = TruncatedNormal::new(0.0, 1.0, -40.0, 40.0).unwrap();
        assert!(t.mean().abs() < 1e-12);
        assert!((t.variance() - 1.0).abs() < 1e-12);
        assert!((t.sample_from_uniform(0.975) - 1.959963984540054).abs() < 1e-9);
    }

    #[test]
    fn far_tail_collapses_to_bound() {
        let t = TruncatedNormal::new(0.0, 1.0, 60.0, 70.0).unwrap();
        assert_eq!(t.sample_from_uniform(0.5), 60.0);
        let t = TruncatedNormal::new(0.0, 1.0, -70.0, -60.0).unwrap();
        assert_eq!(t.sample_from_uniform(0.5), -60.0);
    }

    #[test]
    fn moments_near_a_bound() {
        let t = TruncatedNormal::new(20.0, 30.0, 10.0, 350.0).unwrap();
        let mut r = rng::stream(9, &["truncnorm"]);
        let xs = t.sample_stratified(200_000, &mut r);
        assert!((stats::mean(&xs) / t.mean() - 1.0).abs() < 1e-4);
        assert!((stats::variance(&xs) / t.variance() - 1.0).abs() < 1e-3);
    }

    proptest! {
        #[test]
        fn draws_inside_bounds(loc in -500.0f64..800.0, scale in 0.0f64..200.0, u in 0.0f64..=1.0) {
            let t = TruncatedNormal::new(loc.clamp(10.0, 350.0), scale, 10.0, 350.0).unwrap();
            let x = t.sample_from_uniform(u);
            prop_assert!((10.0..=350.0).contains(&x));
            if scale > 0.0 {
                let t = TruncatedNormal::new(loc, scale, 10.0, 350.0).unwrap();
                prop_assert!((10.0..=350.0).contains(&t.sample_from_uniform(u)));
            }
        }

        #[test]
        fn inverse_cdf_is_monotone(loc in 0.0f64..400.0, scale in 1.0f64..100.0, u in 0.0f64..1.0, v in 0.0f64..1.0) {
            let t = TruncatedNormal::new(loc, scale, 10.0, 350.0).unwrap();
            let (lo, hi) = if u < v { (u, v) } else { (v, u) };
            prop_assert!(t.sample_from_uniform(lo) <= t.sample_from_uniform(hi) + 1e-9 * scale);
        }
    }
}
