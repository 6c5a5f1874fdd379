//! Delimited-text panel files: `field_id,county_id,crop,year,yield`.
//!
//! A leading `# provenance: <kind>` comment line records how the panel was
//! produced; files without it are treated as ingested.

use std::collections::btree_map::Entry;
use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{CountySeries, Crop, FieldCropSeries, Panel, Provenance};
use crate::error::{Error, Result};

const PROVENANCE_TAG: &str = "# provenance:";

/// Header names of the five required columns.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct ColumnSchema {
    pub field_id: String,
    pub county_id: String,
    pub crop: String,
    pub year: String,
    #[serde(rename = "yield")]
    pub yield_col: String,
    pub delimiter: char,
}

impl Default for ColumnSchema {
    fn default() -> Self {
        Self {
            field_id: "field_id".into(),
            county_id: "county_id".into(),
            crop: "crop".into(),
            year: "year".into(),
            yield_col: "yield".into(),
            delimiter: ',',
        }
    }
}

fn read_to_string(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn reader(text: &str, delimiter: char) -> csv::Reader<&[u8]> {
    csv::ReaderBuilder::new()
        .delimiter(delimiter as u8)
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes())
}

fn column(headers: &csv::StringRecord, name: &str) -> Result<usize> {
    headers
        .iter()
        .position(|h| h == name)
        .ok_or_else(|| Error::Parse {
            line: 1,
            message: format!("missing column {name:?}"),
        })
}

fn parse_provenance(text: &str) -> Result<Provenance> {
    match text.lines().next() {
        Some(first) if first.starts_with(PROVENANCE_TAG) => {
            first[PROVENANCE_TAG.len()..].parse()
        }
        _ => Ok(Provenance::Ingested),
    }
}

fn parse_err(line: u64, message: impl Into<String>) -> Error {
    Error::Parse {
        line,
        message: message.into(),
    }
}

/// Reads a panel; county series are unweighted per-year field averages.
pub fn load_panel(path: impl AsRef<Path>, schema: &ColumnSchema) -> Result<Panel> {
    let text = read_to_string(path.as_ref())?;
    let provenance = parse_provenance(&text)?;
    let mut rdr = reader(&text, schema.delimiter);
    let headers = match rdr.headers() {
        Ok(h) if !h.is_empty() => h.clone(),
        Ok(_) => return Err(Error::NoRows),
        Err(e) => return Err(parse_err(1, e.to_string())),
    };
    let idx = [
        column(&headers, &schema.field_id)?,
        column(&headers, &schema.county_id)?,
        column(&headers, &schema.crop)?,
        column(&headers, &schema.year)?,
        column(&headers, &schema.yield_col)?,
    ];

    type Key = (String, Crop);
    let mut series: BTreeMap<Key, (String, BTreeMap<i32, f64>)> = BTreeMap::new();
    for record in rdr.records() {
        let record = record.map_err(|e| {
            let line = e.position().map(|p| p.line()).unwrap_or(0);
            parse_err(line, e.to_string())
        })?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        let get = |i: usize| record.get(i).ok_or_else(|| parse_err(line, "missing value"));
        let field_id = get(idx[0])?.to_string();
        let county_id = get(idx[1])?.to_string();
        let crop: Crop = get(idx[2])?.parse().map_err(|e: Error| parse_err(line, e.to_string()))?;
        let year: i32 = get(idx[3])?
            .parse()
            .map_err(|_| parse_err(line, format!("bad year {:?}", record.get(idx[3]))))?;
        let value: f64 = get(idx[4])?
            .parse()
            .map_err(|_| parse_err(line, format!("bad yield {:?}", record.get(idx[4]))))?;
        if field_id.is_empty() || county_id.is_empty() {
            return Err(parse_err(line, "empty identifier"));
        }
        if !(value.is_finite() && value > 0.0) {
            return Err(Error::Validation(format!(
                "line {line}: yield {value} must be positive"
            )));
        }

        let (county, years) = series
            .entry((field_id.clone(), crop))
            .or_insert_with(|| (county_id.clone(), BTreeMap::new()));
        if *county != county_id {
            return Err(Error::Validation(format!(
                "line {line}: field {field_id} ({crop}) listed under counties {county} and {county_id}"
            )));
        }
        match years.entry(year) {
            Entry::Occupied(_) => {
                return Err(Error::Duplicate {
                    field_id,
                    crop: crop.to_string(),
                    year,
                })
            }
            Entry::Vacant(v) => {
                v.insert(value);
            }
        }
    }
    if series.is_empty() {
        return Err(Error::NoRows);
    }

    let fields = series
        .into_iter()
        .map(|((field_id, crop), (county_id, obs))| {
            let (years, yields) = obs.into_iter().unzip();
            FieldCropSeries::new(field_id, county_id, crop, years, yields)
        })
        .collect::<Result<Vec<_>>>()?;
    Panel::from_fields(fields, provenance)
}

/// Panel file contents, rows ordered by field id, crop and year.
pub fn panel_to_bytes(panel: &Panel) -> Vec<u8> {
    let mut out = Vec::with_capacity(panel.n_observations() * 32);
    writeln!(out, "{PROVENANCE_TAG} {}", panel.provenance().as_str()).unwrap();
    writeln!(out, "field_id,county_id,crop,year,yield").unwrap();
    for f in panel.fields() {
        for (y, v) in f.years().iter().zip(f.yields()) {
            writeln!(out, "{},{},{},{},{}", f.field_id(), f.county_id(), f.crop(), y, v).unwrap();
        }
    }
    out
}

pub fn save_panel(panel: &Panel, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, panel_to_bytes(panel)).map_err(|e| Error::io(path, e))
}

/// Reads `county_id,crop,year,mean_yield` rows into county series.
pub fn load_county_file(path: impl AsRef<Path>) -> Result<Vec<CountySeries>> {
    let text = read_to_string(path.as_ref())?;
    let mut rdr = reader(&text, ',');
    let headers = rdr.headers().map_err(|e| parse_err(1, e.to_string()))?.clone();
    let idx = [
        column(&headers, "county_id")?,
        column(&headers, "crop")?,
        column(&headers, "year")?,
        column(&headers, "mean_yield")?,
    ];
    let mut acc: BTreeMap<(String, Crop), BTreeMap<i32, f64>> = BTreeMap::new();
    for record in rdr.records() {
        let record = record.map_err(|e| parse_err(0, e.to_string()))?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        let get = |i: usize| record.get(i).ok_or_else(|| parse_err(line, "missing value"));
        let crop: Crop = get(idx[1])?.parse().map_err(|e: Error| parse_err(line, e.to_string()))?;
        let year: i32 = get(idx[2])?.parse().map_err(|_| parse_err(line, "bad year"))?;
        let value: f64 = get(idx[3])?.parse().map_err(|_| parse_err(line, "bad mean_yield"))?;
        if acc
            .entry((get(idx[0])?.to_string(), crop))
            .or_default()
            .insert(year, value)
            .is_some()
        {
            return Err(parse_err(line, format!("duplicate county year {year}")));
        }
    }
    if acc.is_empty() {
        return Err(Error::NoRows);
    }
    acc.into_iter()
        .map(|((id, crop), obs)| {
            let (years, values) = obs.into_iter().unzip();
            CountySeries::new(id, crop, years, values)
        })
        .collect()
}

pub fn counties_to_bytes(counties: &[CountySeries]) -> Vec<u8> {
    let mut out = Vec::new();
    writeln!(out, "county_id,crop,year,mean_yield").unwrap();
    for c in counties {
        for (y, v) in c.years().iter().zip(c.mean_yields()) {
            writeln!(out, "{},{},{},{}", c.county_id(), c.crop(), y, v).unwrap();
        }
    }
    out
}

pub fn save_county_file(counties: &[CountySeries], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, counties_to_bytes(counties)).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn load_str(text: &str) -> Result<Panel> {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("panel.csv");
        fs::write(&path, text).unwrap();
        load_panel(&path, &ColumnSchema::default())
    }

    #[test]
    fn loads_and_averages() {
        let panel = load_str(
            "field_id,county_id,crop,year,yield\n\
             a,c1,corn,2001,10\n\
             a,c1,corn,2002,20\n\
             b,c1,corn,2001,30\n\
             b,c1,corn,2002,40\n",
        )
        .unwrap();
        assert_eq!(panel.fields().len(), 2);
        let c = panel.county("c1", Crop::Corn).unwrap();
        assert_eq!(c.mean_yields(), &[20.0, 30.0]);
        assert_eq!(c.longrun_mean(), 25.0);
        assert_eq!(panel.provenance(), Provenance::Ingested);
    }

    #[test]
    fn empty_file_has_no_rows() {
        assert!(matches!(load_str(""), Err(Error::NoRows)));
        assert!(matches!(load_str("field_id,county_id,crop,year,yield\n"), Err(Error::NoRows)));
    }

    #[test]
    fn duplicate_year_is_rejected() {
        let err = load_str(
            "field_id,county_id,crop,year,yield\na,c,corn,2001,10\na,c,corn,2001,11\n",
        )
        .unwrap_err();
        assert!(matches!(err, Error::Duplicate { year: 2001, .. }), "{err}");
    }

    #[test]
    fn malformed_row_reports_line() {
        let err = load_str("field_id,county_id,crop,year,yield\na,c,corn,2001,10\na,c,corn,20x2,11\n")
            .unwrap_err();
        match err {
            Error::Parse { line, .. } => assert_eq!(line, 3),
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn nonpositive_yield_is_rejected() {
        let err = load_str("field_id,county_id,crop,year,yield\na,c,corn,2001,0\n").unwrap_err();
        assert!(matches!(err, Error::Validation(_)));
    }

    #[test]
    fn custom_schema() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("p.tsv");
        fs::write(&path, "fid\tcid\tc\tyr\ty\nf\tk\tsoybeans\t2010\t50.5\n").unwrap();
        let schema = ColumnSchema {
            field_id: "fid".into(),
            county_id: "cid".into(),
            crop: "c".into(),
            year: "yr".into(),
            yield_col: "y".into(),
            delimiter: '\t',
        };
        let panel = load_panel(&path, &schema).unwrap();
        assert_eq!(panel.fields()[0].crop(), Crop::Soy);
        assert_eq!(panel.fields()[0].yields(), &[50.5]);
    }

    #[test]
    fn missing_file_names_path() {
        let err = load_panel("/nonexistent/panel.csv", &ColumnSchema::default()).unwrap_err();
        assert!(err.to_string().contains("/nonexistent/panel.csv"));
    }

    #[test]
    fn provenance_survives_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("p.csv");
        fs::write(&path, "# provenance: simulated\nfield_id,county_id,crop,year,yield\na,c,corn,1,2.5\n").unwrap();
        let panel = load_panel(&path, &ColumnSchema::default()).unwrap();
        assert_eq!(panel.provenance(), Provenance::Simulated);
        let out = dir.path().join("q.csv");
        save_panel(&panel, &out).unwrap();
        assert_eq!(load_panel(&out, &ColumnSchema::default()).unwrap(), panel);
    }
}
