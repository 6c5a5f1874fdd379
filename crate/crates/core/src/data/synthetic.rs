//! Synthetic yield panels standing in for field-level survey or satellite data.
//!
//! County `c` draws a common shock series `F_ct = m + T_c z_ct` and every
//! member field follows
//!
//! ```text
//! y_it = m + a_i + b_i (F_ct - m) + r_i T_c e_it
//! ```
//!
//! with mean offset `a_i ~ N(0, S_c^2)`, slope `b_i ~ U(beta_range)` and
//! idiosyncratic ratio `r_i ~ U(noise_ratio_range)`. With
//! `noise_scale = "spatial"` the idiosyncratic term is `r_i S_c e_it` instead,
//! so within-county dispersion drives basis risk. `T_c` and `S_c` are laid
//! out on a regular grid over `temporal_sd_range x spatial_sd_range`, so the
//! counties cover the whole variability space. `F_ct` is attached to each
//! county as its reference mean.

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{county_means, CountySeries, Crop, FieldCropSeries, Panel, Provenance, YearSeries};
use crate::error::{Error, Result};
use crate::rng;

/// Smallest yield the generator emits.
const YIELD_FLOOR: f64 = 1.0;

/// Which county standard deviation the idiosyncratic noise is a multiple of.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseScale {
    #[default]
    Temporal,
    Spatial,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticConfig {
    pub n_counties: usize,
    pub fields_per_county: usize,
    pub n_years: usize,
    pub start_year: i32,
    pub crop: Crop,
    /// County common-shock standard deviation (bu/acre).
    pub temporal_sd_range: [f64; 2],
    /// Standard deviation of field mean offsets within a county (bu/acre).
    pub spatial_sd_range: [f64; 2],
    pub beta_range: [f64; 2],
    /// Idiosyncratic standard deviation as a multiple of the county shock
    /// (or of the spatial spread, see `noise_scale`).
    pub noise_ratio_range: [f64; 2],
    pub noise_scale: NoiseScale,
    pub crop_mean: f64,
    pub seed: u64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        Self {
            n_counties: 16,
            fields_per_county: 50,
            n_years: 29,
            start_year: 1990,
            crop: Crop::Corn,
            temporal_sd_range: [12.0, 36.0],
            spatial_sd_range: [5.0, 30.0],
            beta_range: [0.7, 1.3],
            noise_ratio_range: [0.3, 0.7],
            noise_scale: NoiseScale::Temporal,
            crop_mean: 170.0,
            seed: 1,
        }
    }
}

impl SyntheticConfig {
    pub fn validate(&self) -> Result<()> {
        let ranges = [
            ("temporal_sd_range", self.temporal_sd_range),
            ("spatial_sd_range", self.spatial_sd_range),
            ("beta_range", self.beta_range),
            ("noise_ratio_range", self.noise_ratio_range),
        ];
        for (name, [lo, hi]) in ranges {
            if !(lo.is_finite() && hi.is_finite()) || lo < 0.0 || hi < lo {
                return Err(Error::Config(format!(
                    "{name} = [{lo}, {hi}] must satisfy 0 <= min <= max"
                )));
            }
        }
        if self.n_years < crate::MIN_OBSERVATIONS {
            return Err(Error::Config(format!(
                "n_years = {} is below {}",
                self.n_years,
                crate::MIN_OBSERVATIONS
            )));
        }
        if self.n_counties == 0 || self.fields_per_county == 0 {
            return Err(Error::Config("n_counties and fields_per_county must be positive".into()));
        }
        if !(self.crop_mean > 0.0) {
            return Err(Error::Config("crop_mean must be positive".into()));
        }
        Ok(())
    }

    /// Grid position of county `k` in (temporal, spatial) space.
    fn grid_point(&self, k: usize) -> (f64, f64) {
        let side = (self.n_counties as f64).sqrt().ceil() as usize;
        let at = |range: [f64; 2], i: usize| {
            if side <= 1 {
                range[0]
            } else {
                range[0] + (range[1] - range[0]) * i as f64 / (side - 1) as f64
            }
        };
        (at(self.temporal_sd_range, k % side), at(self.spatial_sd_range, k / side))
    }
}

fn uniform(rng: &mut impl Rng, [lo, hi]: [f64; 2]) -> f64 {
    if hi > lo {
        rng.random_range(lo..hi)
    } else {
        lo
    }
}

pub fn county_id(k: usize) -> String {
    format!("C{k:04}")
}

pub fn generate_synthetic_panel(cfg: &SyntheticConfig) -> Result<Panel> {
    cfg.validate()?;
    let years: Vec<i32> = (0..cfg.n_years as i32).map(|t| cfg.start_year + t).collect();
    let m = cfg.crop_mean;

    let per_county: Vec<(Vec<FieldCropSeries>, YearSeries, String)> = (0..cfg.n_counties)
        .into_par_iter()
        .map(|k| {
            let cid = county_id(k);
            let (temporal_sd, spatial_sd) = cfg.grid_point(k);
            let mut crng = rng::stream(cfg.seed, &["synthetic", "county", &cid]);
            let factor: Vec<f64> = (0..cfg.n_years)
                .map(|_| {
                    let z: f64 = crng.sample(StandardNormal);
                    (m + temporal_sd * z).max(YIELD_FLOOR)
                })
                .collect();

            let fields = (0..cfg.fields_per_county)
                .map(|j| {
                    let fid = format!("{cid}-F{j:05}");
                    let mut frng = rng::stream(cfg.seed, &["synthetic", "field", &fid]);
                    let z: f64 = frng.sample(StandardNormal);
                    let offset = spatial_sd * z;
                    let beta = uniform(&mut frng, cfg.beta_range);
                    let scale = match cfg.noise_scale {
                        NoiseScale::Temporal => temporal_sd,
                        NoiseScale::Spatial => spatial_sd,
                    };
                    let noise_sd = uniform(&mut frng, cfg.noise_ratio_range) * scale;
                    let yields = factor
                        .iter()
                        .map(|&f| {
                            let e: f64 = frng.sample(StandardNormal);
                            (m + offset + beta * (f - m) + noise_sd * e).max(YIELD_FLOOR)
                        })
                        .collect();
                    FieldCropSeries::new(fid, cid.clone(), cfg.crop, years.clone(), yields)
                })
                .collect::<Result<Vec<_>>>()?;
            let reference = YearSeries {
                years: years.clone(),
                values: factor,
            };
            Ok((fields, reference, cid))
        })
        .collect::<Result<_>>()?;

    let mut fields = Vec::with_capacity(cfg.n_counties * cfg.fields_per_county);
    let mut references = Vec::with_capacity(cfg.n_counties);
    for (f, r, cid) in per_county {
        fields.extend(f);
        references.push((cid, r));
    }
    let mut counties: Vec<CountySeries> = county_means(&fields)?;
    for c in &mut counties {
        let (_, r) = references
            .iter()
            .find(|(cid, _)| cid == c.county_id())
            .expect("every county has a reference");
        *c = c.clone().with_reference(r.clone())?;
    }
    Panel::new(fields, counties, Provenance::Synthetic)
}
