//! AR(2) model for detrended county means with a residual bootstrap.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::CropBounds;
use crate::error::{Error, Result};
use crate::{stats, MIN_OBSERVATIONS};

/// Steps simulated and discarded before output starts.
pub const BURN_IN: usize = 50;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Ar2Model {
    pub county_id: String,
    pub intercept: f64,
    pub phi1: f64,
    pub phi2: f64,
    pub residuals: Vec<f64>,
    /// The two most recent observations `[y_{T-1}, y_T]`.
    pub last: [f64; 2],
    /// Set when the series was too flat to fit; the model is then the
    /// constant `intercept` with no innovations.
    pub fallback: bool,
}

impl Ar2Model {
    /// Unconditional mean `c / (1 - phi1 - phi2)`.
    pub fn stationary_mean(&self) -> f64 {
        self.intercept / (1.0 - self.phi1 - self.phi2)
    }

    /// Both characteristic roots lie outside the unit circle.
    pub fn is_stationary(&self) -> bool {
        self.phi2.abs() < 1.0 && self.phi1 + self.phi2 < 1.0 && self.phi2 - self.phi1 < 1.0
    }
}

pub fn fit_ar2(county_id: &str, series: &[f64]) -> Result<Ar2Model> {
    if series.len() < MIN_OBSERVATIONS {
        return Err(Error::InsufficientData {
            needed: MIN_OBSERVATIONS,
            got: series.len(),
        });
    }
    let n = series.len();
    let last = [series[n - 2], series[n - 1]];
    let m = stats::mean(series);
    if stats::variance(series) < 1e-12 * m * m {
        return Ok(Ar2Model {
            county_id: county_id.to_string(),
            intercept: m,
            phi1: 0.0,
            phi2: 0.0,
            residuals: vec![0.0],
            last,
            fallback: true,
        });
    }
    let rows = n - 2;
    let x = DMatrix::from_fn(rows, 3, |i, j| match j {
        0 => 1.0,
        1 => series[i + 1],
        _ => series[i],
    });
    let y = DVector::from_fn(rows, |i, _| series[i + 2]);
    let coef = x
        .clone()
        .svd(true, true)
        .solve(&y, 1e-12)
        .map_err(|e| Error::Degenerate(format!("AR(2) least squares for {county_id}: {e}")))?;
    let residuals = (&y - &x * &coef).iter().copied().collect();
    Ok(Ar2Model {
        county_id: county_id.to_string(),
        intercept: coef[0],
        phi1: coef[1],
        phi2: coef[2],
        residuals,
        last,
        fallback: false,
    })
}

/// Index into a pool of `len` residuals for a uniform `u` in `[0, 1)`.
pub fn innovation_index(u: f64, len: usize) -> usize {
    ((u * len as f64) as usize).min(len - 1)
}

/// Simulates `n_years` values, drawing innovation `t` from the residual
/// pool at `innovation_index(uniforms(), len)`. Sharing the uniform stream
/// across counties with equally long pools reuses the same historical year
/// everywhere.
pub fn simulate_with_uniforms(
    model: &Ar2Model,
    n_years: usize,
    bounds: CropBounds,
    mut uniforms: impl FnMut() -> f64,
) -> Vec<f64> {
    if model.fallback {
        return vec![model.intercept.clamp(bounds.lower, bounds.upper); n_years];
    }
    let [mut prev2, mut prev1] = model.last;
    let mut out = Vec::with_capacity(n_years);
    for step in 0..BURN_IN + n_years {
        let e = model.residuals[innovation_index(uniforms(), model.residuals.len())];
        let y = (model.intercept + model.phi1 * prev1 + model.phi2 * prev2 + e)
            .clamp(bounds.lower, bounds.upper);
        prev2 = prev1;
        prev1 = y;
        if step >= BURN_IN {
            out.push(y);
        }
    }
    out
}

pub fn simulate_county_series(
    model: &Ar2Model,
    n_years: usize,
    bounds: CropBounds,
    rng: &mut impl Rng,
) -> Vec<f64> {
    simulate_with_uniforms(model, n_years, bounds, || rng.random::<f64>())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;
    use rand_distr::{Distribution, Normal};

    const WIDE: CropBounds = CropBounds {
        lower: -1e9,
        upper: 1e9,
    };

    #[test]
    fn recovers_noise_free_recursion() {
        let mut ys = vec![10.0, 12.0];
        for t in 2..60 {
            let y = 5.0 + 0.5 * ys[t - 1] + 0.2 * ys[t - 2];
            ys.push(y);
        }
        let m = fit_ar2("C", &ys).unwrap();
        assert!(!m.fallback);
        assert!((m.intercept - 5.0).abs() < 1e-6);
        assert!((m.phi1 - 0.5).abs() < 1e-6);
        assert!((m.phi2 - 0.2).abs() < 1e-6);
        assert!(m.is_stationary());
    }

    #[test]
    fn constant_series_falls_back() {
        let m = fit_ar2("C", &[120.0; 12]).unwrap();
        assert!(m.fallback);
        let mut r = rng::stream(1, &["ar2"]);
        let sim = simulate_county_series(&m, 30, WIDE, &mut r);
        assert_eq!(sim, vec![120.0; 30]);
        assert!(fit_ar2("C", &[1.0; 7]).is_err());
    }

    #[test]
    fn white_noise_has_no_memory() {
        let mut r = rng::stream(2, &["wn"]);
        let n = Normal::new(150.0, 20.0).unwrap();
        let ys: Vec<f64> = (0..20_000).map(|_| n.sample(&mut r)).collect();
        let m = fit_ar2("C", &ys).unwrap();
        assert!(m.phi1.abs() < 0.1 && m.phi2.abs() < 0.1);
    }

    #[test]
    fn zero_residuals_follow_the_recursion() {
        let m = Ar2Model {
            county_id: "C".into(),
            intercept: 5.0,
            phi1: 0.5,
            phi2: 0.2,
            residuals: vec![0.0],
            last: [10.0, 12.0],
            fallback: false,
        };
        let sim = simulate_with_uniforms(&m, 5, WIDE, || 0.3);
        let mut p = [10.0, 12.0];
        for _ in 0..BURN_IN {
            let y = 5.0 + 0.5 * p[1] + 0.2 * p[0];
            p = [p[1], y];
        }
        let mut expected = vec![];
        for _ in 0..5 {
            let y = 5.0 + 0.5 * p[1] + 0.2 * p[0];
            expected.push(y);
            p = [p[1], y];
        }
        assert_eq!(sim, expected);
    }

    #[test]
    fn long_run_mean_matches_analytic() {
        let mut r = rng::stream(4, &["ar2-gen"]);
        let n = Normal::new(0.0, 15.0).unwrap();
        let mut ys = vec![160.0, 160.0];
        for t in 2..200 {
            let y = 40.0 + 0.6 * ys[t - 1] + 0.15 * ys[t - 2] + n.sample(&mut r);
            ys.push(y);
        }
        let m = fit_ar2("C", &ys).unwrap();
        let sim = simulate_county_series(&m, 100_000, WIDE, &mut r);
        assert!((stats::mean(&sim) / m.stationary_mean() - 1.0).abs() < 0.02);
    }

    #[test]
    fn output_respects_bounds() {
        let m = Ar2Model {
            county_id: "C".into(),
            intercept: 0.0,
            phi1: 0.2,
            phi2: 0.0,
            residuals: vec![-500.0, 500.0],
            last: [100.0, 100.0],
            fallback: false,
        };
        let mut r = rng::stream(5, &["b"]);
        let b = CropBounds { lower: 10.0, upper: 350.0 };
        assert!(simulate_county_series(&m, 200, b, &mut r).iter().all(|y| (10.0..=350.0).contains(y)));
    }

    #[test]
    fn index_stays_in_pool() {
        assert_eq!(innovation_index(0.0, 5), 0);
        assert_eq!(innovation_index(0.9999999, 5), 4);
        assert_eq!(innovation_index(1.0, 5), 4);
    }
}
