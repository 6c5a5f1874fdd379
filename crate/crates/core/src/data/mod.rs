//! Yield panel types, ingestion and synthetic generation.

mod io;
mod synthetic;

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::stats;

pub use io::{
    counties_to_bytes, load_county_file, load_panel, panel_to_bytes, save_county_file, save_panel, ColumnSchema,
};
pub use synthetic::{generate_synthetic_panel, NoiseScale, SyntheticConfig};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Crop {
    Corn,
    Soy,
}

impl Crop {
    pub const ALL: [Crop; 2] = [Crop::Corn, Crop::Soy];

    pub fn as_str(self) -> &'static str {
        match self {
            Crop::Corn => "corn",
            Crop::Soy => "soy",
        }
    }
}

impl fmt::Display for Crop {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Crop {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "corn" => Ok(Crop::Corn),
            "soy" | "soybean" | "soybeans" => Ok(Crop::Soy),
            other => Err(Error::Validation(format!("unknown crop {other:?}"))),
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Provenance {
    #[default]
    Ingested,
    Synthetic,
    Simulated,
}

impl Provenance {
    pub fn as_str(self) -> &'static str {
        match self {
            Provenance::Ingested => "ingested",
            Provenance::Synthetic => "synthetic",
            Provenance::Simulated => "simulated",
        }
    }
}

impl FromStr for Provenance {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "ingested" => Ok(Provenance::Ingested),
            "synthetic" => Ok(Provenance::Synthetic),
            "simulated" => Ok(Provenance::Simulated),
            other => Err(Error::Validation(format!("unknown provenance {other:?}"))),
        }
    }
}

fn check_years(years: &[i32]) -> Result<()> {
    if years.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::Validation("years must be strictly increasing".into()));
    }
    Ok(())
}

fn check_positive(what: &str, id: &str, years: &[i32], values: &[f64]) -> Result<()> {
    if years.len() != values.len() {
        return Err(Error::Validation(format!(
            "{what} {id}: {} years but {} values",
            years.len(),
            values.len()
        )));
    }
    if let Some((y, v)) = years
        .iter()
        .zip(values)
        .find(|(_, v)| !(v.is_finite() && **v > 0.0))
    {
        return Err(Error::Validation(format!(
            "{what} {id}: yield {v} in {y} must be positive"
        )));
    }
    Ok(())
}

/// One field's yield history for one crop. Years may have gaps.
#[derive(Clone, Debug, PartialEq)]
pub struct FieldCropSeries {
    field_id: String,
    county_id: String,
    crop: Crop,
    years: Vec<i32>,
    yields: Vec<f64>,
}

impl FieldCropSeries {
    pub fn new(
        field_id: impl Into<String>,
        county_id: impl Into<String>,
        crop: Crop,
        years: Vec<i32>,
        yields: Vec<f64>,
    ) -> Result<Self> {
        let field_id = field_id.into();
        check_positive("field", &field_id, &years, &yields)?;
        check_years(&years)?;
        if years.is_empty() {
            return Err(Error::Validation(format!("field {field_id} has no observations")));
        }
        Ok(Self {
            field_id,
            county_id: county_id.into(),
            crop,
            years,
            yields,
        })
    }

    pub fn field_id(&self) -> &str {
        &self.field_id
    }

    pub fn county_id(&self) -> &str {
        &self.county_id
    }

    pub fn crop(&self) -> Crop {
        self.crop
    }

    pub fn years(&self) -> &[i32] {
        &self.years
    }

    pub fn yields(&self) -> &[f64] {
        &self.yields
    }

    pub fn n_obs(&self) -> usize {
        self.yields.len()
    }

    pub fn mean_yield(&self) -> f64 {
        stats::mean(&self.yields)
    }
}

/// Year-indexed values, used for external reference means.
#[derive(Clone, Debug, PartialEq)]
pub struct YearSeries {
    pub years: Vec<i32>,
    pub values: Vec<f64>,
}

/// Annual county averages for one crop.
#[derive(Clone, Debug, PartialEq)]
pub struct CountySeries {
    county_id: String,
    crop: Crop,
    years: Vec<i32>,
    mean_yields: Vec<f64>,
    longrun_mean: f64,
    reference: Option<YearSeries>,
}

impl CountySeries {
    pub fn new(
        county_id: impl Into<String>,
        crop: Crop,
        years: Vec<i32>,
        mean_yields: Vec<f64>,
    ) -> Result<Self> {
        let county_id = county_id.into();
        check_positive("county", &county_id, &years, &mean_yields)?;
        check_years(&years)?;
        if years.is_empty() {
            return Err(Error::Validation(format!("county {county_id} has no years")));
        }
        let longrun_mean = stats::mean(&mean_yields);
        Ok(Self {
            county_id,
            crop,
            years,
            mean_yields,
            longrun_mean,
            reference: None,
        })
    }

    /// Attaches an external series (e.g. official county means) used as the
    /// simulation base instead of the field averages.
    pub fn with_reference(mut self, reference: YearSeries) -> Result<Self> {
        check_positive("reference", &self.county_id, &reference.years, &reference.values)?;
        check_years(&reference.years)?;
        self.reference = Some(reference);
        Ok(self)
    }

    pub fn county_id(&self) -> &str {
        &self.county_id
    }

    pub fn crop(&self) -> Crop {
        self.crop
    }

    pub fn years(&self) -> &[i32] {
        &self.years
    }

    pub fn mean_yields(&self) -> &[f64] {
        &self.mean_yields
    }

    pub fn longrun_mean(&self) -> f64 {
        self.longrun_mean
    }

    pub fn reference(&self) -> Option<&YearSeries> {
        self.reference.as_ref()
    }

    pub fn len(&self) -> usize {
        self.years.len()
    }

    pub fn is_empty(&self) -> bool {
        self.years.is_empty()
    }

    pub fn value_at(&self, year: i32) -> Option<f64> {
        self.years
            .binary_search(&year)
            .ok()
            .map(|i| self.mean_yields[i])
    }

    /// County values at `years`, `None` if any year is missing.
    pub fn aligned(&self, years: &[i32]) -> Option<Vec<f64>> {
        years.iter().map(|&y| self.value_at(y)).collect()
    }

    /// Series the simulator plugs in: the reference when attached, otherwise
    /// the county averages themselves.
    pub fn simulation_base(&self) -> YearSeries {
        match &self.reference {
            Some(r) => r.clone(),
            None => YearSeries {
                years: self.years.clone(),
                values: self.mean_yields.clone(),
            },
        }
    }
}

/// Immutable collection of field series and their county series.
///
/// Fields are kept sorted by `(field_id, crop)` and counties by
/// `(county_id, crop)`, so iteration order never depends on input order.
#[derive(Clone, Debug, PartialEq)]
pub struct Panel {
    fields: Vec<FieldCropSeries>,
    counties: Vec<CountySeries>,
    provenance: Provenance,
}

impl Panel {
    pub fn new(
        mut fields: Vec<FieldCropSeries>,
        mut counties: Vec<CountySeries>,
        provenance: Provenance,
    ) -> Result<Self> {
        fields.sort_by(|a, b| (&a.field_id, a.crop).cmp(&(&b.field_id, b.crop)));
        if let Some(w) = fields
            .windows(2)
            .find(|w| w[0].field_id == w[1].field_id && w[0].crop == w[1].crop)
        {
            return Err(Error::Validation(format!(
                "field {} ({}) appears twice",
                w[0].field_id, w[0].crop
            )));
        }
        counties.sort_by(|a, b| (&a.county_id, a.crop).cmp(&(&b.county_id, b.crop)));
        if let Some(w) = counties
            .windows(2)
            .find(|w| w[0].county_id == w[1].county_id && w[0].crop == w[1].crop)
        {
            return Err(Error::Validation(format!(
                "county {} ({}) appears twice",
                w[0].county_id, w[0].crop
            )));
        }
        let panel = Self {
            fields,
            counties,
            provenance,
        };
        if let Some(f) = panel
            .fields
            .iter()
            .find(|f| panel.county(&f.county_id, f.crop).is_none())
        {
            return Err(Error::Validation(format!(
                "field {} refers to unknown county {} ({})",
                f.field_id, f.county_id, f.crop
            )));
        }
        Ok(panel)
    }

    /// Builds the panel with county series computed as unweighted per-year
    /// averages of member fields.
    pub fn from_fields(fields: Vec<FieldCropSeries>, provenance: Provenance) -> Result<Self> {
        let mut fields = fields;
        fields.sort_by(|a, b| (&a.field_id, a.crop).cmp(&(&b.field_id, b.crop)));
        let counties = county_means(&fields)?;
        Self::new(fields, counties, provenance)
    }

    pub fn fields(&self) -> &[FieldCropSeries] {
        &self.fields
    }

    pub fn counties(&self) -> &[CountySeries] {
        &self.counties
    }

    pub fn provenance(&self) -> Provenance {
        self.provenance
    }

    pub fn is_empty(&self) -> bool {
        self.fields.is_empty()
    }

    pub fn county(&self, county_id: &str, crop: Crop) -> Option<&CountySeries> {
        self.counties
            .binary_search_by(|c| (c.county_id.as_str(), c.crop).cmp(&(county_id, crop)))
            .ok()
            .map(|i| &self.counties[i])
    }

    /// Indices of member fields for every county, in field-id order.
    pub fn fields_by_county(&self) -> BTreeMap<(String, Crop), Vec<usize>> {
        let mut groups: BTreeMap<(String, Crop), Vec<usize>> = BTreeMap::new();
        for (i, f) in self.fields.iter().enumerate() {
            groups
                .entry((f.county_id.clone(), f.crop))
                .or_default()
                .push(i);
        }
        groups
    }

    /// Attaches reference means to the matching counties. Counties without a
    /// matching reference keep using their field averages.
    pub fn with_reference_means(mut self, references: &[CountySeries]) -> Result<Self> {
        for county in &mut self.counties {
            if let Some(r) = references
                .iter()
                .find(|r| r.county_id == county.county_id && r.crop == county.crop)
            {
                *county = county.clone().with_reference(YearSeries {
                    years: r.years.clone(),
                    values: r.mean_yields.clone(),
                })?;
            }
        }
        Ok(self)
    }

    pub fn n_observations(&self) -> usize {
        self.fields.iter().map(|f| f.n_obs()).sum()
    }
}

/// Running (sum, count) per year.
type YearSums = BTreeMap<i32, (f64, usize)>;

/// Per-year unweighted averages of member fields, one series per (county, crop).
pub fn county_means(fields: &[FieldCropSeries]) -> Result<Vec<CountySeries>> {
    let mut acc: BTreeMap<(&str, Crop), YearSums> = BTreeMap::new();
    for f in fields {
        let per_year = acc.entry((f.county_id.as_str(), f.crop)).or_default();
        for (&y, &v) in f.years.iter().zip(&f.yields) {
            let slot = per_year.entry(y).or_insert((0.0, 0));
            slot.0 += v;
            slot.1 += 1;
        }
    }
    acc.into_iter()
        .map(|((county_id, crop), per_year)| {
            let (years, means): (Vec<i32>, Vec<f64>) = per_year
                .into_iter()
                .map(|(y, (sum, n))| (y, sum / n as f64))
                .unzip();
            CountySeries::new(county_id, crop, years, means)
        })
        .collect()
}

/// Keeps field-crop pairs with at least `k` observed years. County series of
/// ingested panels are recomputed from the retained fields.
pub fn filter_min_years(panel: &Panel, k: usize) -> Result<Panel> {
    let kept: Vec<FieldCropSeries> = panel
        .fields
        .iter()
        .filter(|f| f.n_obs() >= k)
        .cloned()
        .collect();
    if kept.len() == panel.fields.len() {
        return Ok(panel.clone());
    }
    match panel.provenance {
        Provenance::Ingested => {
            let mut counties = county_means(&kept)?;
            for c in &mut counties {
                if let Some(r) = panel.county(&c.county_id, c.crop).and_then(|o| o.reference.clone()) {
                    c.reference = Some(r);
                }
            }
            Panel::new(kept, counties, panel.provenance)
        }
        _ => Panel::new(kept, panel.counties.clone(), panel.provenance),
    }
}
