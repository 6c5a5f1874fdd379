//! Delimited-text result tables.

use std::io::Write;
use std::path::Path;
use std::str::FromStr;

use crate::contracts::Trigger;
use crate::data::Crop;
use crate::error::{Error, Exclusion, Result};
use crate::evaluator::{
    risk_premium_reduction, CountyAggregate, FarmEquivalent, FieldEvaluation, ReversalReport,
};
use crate::regression::{CountyStats, RegressionFit};

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn csv_err(path: &Path, e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::Validation(format!("{}: {other:?}", path.display())),
    }
}

fn writer(out: &mut Vec<u8>) -> csv::Writer<&mut Vec<u8>> {
    csv::WriterBuilder::new().has_headers(false).from_writer(out)
}

fn rows_to_bytes(header: &[String], rows: impl IntoIterator<Item = Vec<String>>) -> Vec<u8> {
    let mut buf = Vec::new();
    {
        let mut w = writer(&mut buf);
        w.write_record(header).expect("in-memory write");
        for r in rows {
            w.write_record(&r).expect("in-memory write");
        }
        w.flush().expect("in-memory write");
    }
    buf
}

fn strings(xs: &[&str]) -> Vec<String> {
    xs.iter().map(|s| s.to_string()).collect()
}

pub fn fits_table(fits: &[RegressionFit]) -> Vec<u8> {
    let mut buf = Vec::new();
    {
        let mut w = csv::Writer::from_writer(&mut buf);
        for f in fits {
            w.serialize(f).expect("in-memory write");
        }
        if fits.is_empty() {
            w.write_record([
                "field_id", "county_id", "crop", "alpha", "beta", "sigma2_resid", "r2", "field_mean", "field_var",
                "n_obs",
            ])
            .expect("in-memory write");
        }
        w.flush().expect("in-memory write");
    }
    buf
}

pub fn read_fits(path: &Path) -> Result<Vec<RegressionFit>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| csv_err(path, e))?;
    r.deserialize().map(|row| row.map_err(|e| csv_err(path, e))).collect()
}

pub fn county_stats_table(stats: &[CountyStats]) -> Vec<u8> {
    let header = strings(&[
        "county_id",
        "crop",
        "n_fields",
        "temporal_variability",
        "temporal_cv",
        "spatial_variability",
        "critical_beta",
        "indemnity_var",
    ]);
    rows_to_bytes(
        &header,
        stats.iter().map(|s| {
            vec![
                s.county_id.clone(),
                s.crop.to_string(),
                s.n_fields.to_string(),
                s.temporal_variability.to_string(),
                s.temporal_cv.to_string(),
                s.spatial_variability.to_string(),
                opt(s.critical_beta),
                s.indemnity_var.to_string(),
            ]
        }),
    )
}

pub fn read_county_stats(path: &Path) -> Result<Vec<CountyStats>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| csv_err(path, e))?;
    r.deserialize().map(|row| row.map_err(|e| csv_err(path, e))).collect()
}

impl FromStr for FarmEquivalent {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s == "ZERO" {
            return Ok(FarmEquivalent::Zero);
        }
        if let Some(u) = s.strip_prefix("UNDEF:") {
            let u = u
                .parse()
                .map_err(|_| Error::Validation(format!("bad farm-equivalent value {s:?}")))?;
            return Ok(FarmEquivalent::Undefined(u));
        }
        let t: f64 = s
            .parse()
            .map_err(|_| Error::Validation(format!("bad farm-equivalent value {s:?}")))?;
        Ok(FarmEquivalent::Value(Trigger::from_fraction(t)?))
    }
}

const EVAL_HEAD: [&str; 8] = [
    "field_id",
    "county_id",
    "crop",
    "n_years",
    "mean_yield",
    "ce_none",
    "ce_area",
    "area_premium",
];
const EVAL_TAIL: [&str; 6] = [
    "risk_premium_none",
    "risk_premium_area",
    "rp_reduction",
    "ce_gain_vs_none",
    "farm_equiv",
    "monotonicity_violation",
];

pub fn field_evaluations_table(evals: &[FieldEvaluation], triggers: &[Trigger]) -> Vec<u8> {
    let mut header = strings(&EVAL_HEAD);
    header.extend(triggers.iter().map(|t| format!("ce_farm_{t}")));
    header.extend(strings(&EVAL_TAIL));
    rows_to_bytes(
        &header,
        evals.iter().map(|e| {
            let mut row = vec![
                e.field_id.clone(),
                e.county_id.clone(),
                e.crop.to_string(),
                e.n_years.to_string(),
                e.mean_yield.to_string(),
                e.ce_none.to_string(),
                e.ce_area.to_string(),
                e.area_premium.to_string(),
            ];
            row.extend(e.ce_farm.iter().map(|c| c.to_string()));
            row.extend([
                e.risk_premium_none.to_string(),
                e.risk_premium_area.to_string(),
                opt(risk_premium_reduction(e).ok()),
                e.ce_gain_vs_none().to_string(),
                e.farm_equiv.to_string(),
                e.monotonicity_violation.to_string(),
            ]);
            row
        }),
    )
}

/// Reads a field evaluation table back. Whether each farm contract pays is
/// not stored and comes back empty.
pub fn read_field_evaluations(path: &Path) -> Result<Vec<FieldEvaluation>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| csv_err(path, e))?;
    let header = r.headers().map_err(|e| csv_err(path, e))?.clone();
    let col = |name: &str| {
        header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::Validation(format!("{}: missing column {name}", path.display())))
    };
    let idx: Vec<usize> = EVAL_HEAD
        .iter()
        .chain(&EVAL_TAIL)
        .map(|n| col(n))
        .collect::<Result<_>>()?;
    let farm_cols: Vec<usize> = header
        .iter()
        .enumerate()
        .filter(|(_, h)| h.starts_with("ce_farm_"))
        .map(|(i, _)| i)
        .collect();
    let mut out = vec![];
    for (line, rec) in r.records().enumerate() {
        let rec = rec.map_err(|e| csv_err(path, e))?;
        let bad = |what: &str| Error::Parse {
            line: line as u64 + 2,
            message: format!("bad {what}"),
        };
        let num = |i: usize, what: &str| -> Result<f64> { rec[i].parse().map_err(|_| bad(what)) };
        out.push(FieldEvaluation {
            field_id: rec[idx[0]].to_string(),
            county_id: rec[idx[1]].to_string(),
            crop: Crop::from_str(&rec[idx[2]]).map_err(|_| bad("crop"))?,
            n_years: rec[idx[3]].parse().map_err(|_| bad("n_years"))?,
            mean_yield: num(idx[4], "mean_yield")?,
            ce_none: num(idx[5], "ce_none")?,
            ce_area: num(idx[6], "ce_area")?,
            area_premium: num(idx[7], "area_premium")?,
            ce_farm: farm_cols.iter().map(|&i| num(i, "ce_farm")).collect::<Result<_>>()?,
            farm_pays: vec![],
            risk_premium_none: num(idx[8], "risk_premium_none")?,
            risk_premium_area: num(idx[9], "risk_premium_area")?,
            farm_equiv: rec[idx[12]].parse()?,
            monotonicity_violation: rec[idx[13]].parse().map_err(|_| bad("monotonicity_violation"))?,
        });
    }
    Ok(out)
}

pub fn aggregates_table(aggs: &[CountyAggregate]) -> Vec<u8> {
    let header = strings(&[
        "county_id",
        "crop",
        "n_fields",
        "n_excluded",
        "median_farm_equiv",
        "share_ge_85",
        "share_ge_90",
        "share_ge_50",
        "share_zero",
        "share_undefined",
        "mean_ce_gain_vs_none",
        "mean_rp_reduction",
        "monotonicity_violations",
    ]);
    rows_to_bytes(
        &header,
        aggs.iter().map(|a| {
            vec![
                a.county_id.clone(),
                a.crop.to_string(),
                a.n_fields.to_string(),
                a.n_excluded.to_string(),
                a.median_farm_equiv.to_string(),
                a.share_ge_85.to_string(),
                a.share_ge_90.to_string(),
                a.share_ge_50.to_string(),
                a.share_zero.to_string(),
                a.share_undefined.to_string(),
                a.mean_ce_gain_vs_none.to_string(),
                opt(a.mean_rp_reduction),
                a.monotonicity_violations.to_string(),
            ]
        }),
    )
}

pub fn exclusions_table(exclusions: &[Exclusion]) -> Vec<u8> {
    let header = strings(&["stage", "county_id", "field_id", "crop", "reason"]);
    rows_to_bytes(
        &header,
        exclusions.iter().map(|e| {
            vec![
                e.stage.to_string(),
                e.county_id.clone(),
                e.field_id.clone(),
                e.crop.to_string(),
                e.reason.clone(),
            ]
        }),
    )
}

/// Counts exclusions per `(county_id, crop)` from an exclusions table.
pub fn read_exclusion_counts(path: &Path) -> Result<Vec<(String, Crop, usize)>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| csv_err(path, e))?;
    let mut counts: std::collections::BTreeMap<(String, Crop), usize> = Default::default();
    for rec in r.records() {
        let rec = rec.map_err(|e| csv_err(path, e))?;
        if rec.get(0) != Some("evaluate") {
            continue;
        }
        let crop = Crop::from_str(&rec[3]).map_err(|_| Error::Validation(format!("bad crop {:?}", &rec[3])))?;
        *counts.entry((rec[1].to_string(), crop)).or_default() += 1;
    }
    Ok(counts.into_iter().map(|((c, k), n)| (c, k, n)).collect())
}

pub fn reversal_tables(report: &ReversalReport) -> [(&'static str, Vec<u8>); 3] {
    let rows = rows_to_bytes(
        &strings(&[
            "county_id",
            "crop",
            "temporal_variability",
            "spatial_variability",
            "mean_ce_gain_vs_none",
            "share_ge_85",
        ]),
        report.rows.iter().map(|r| {
            vec![
                r.county_id.clone(),
                r.crop.to_string(),
                r.temporal_variability.to_string(),
                r.spatial_variability.to_string(),
                r.mean_ce_gain_vs_none.to_string(),
                r.share_ge_85.to_string(),
            ]
        }),
    );
    let grid = rows_to_bytes(
        &strings(&[
            "crop",
            "temporal_variability",
            "spatial_variability",
            "mean_ce_gain_vs_none",
            "share_ge_85",
        ]),
        report.grid.iter().map(|c| {
            vec![
                c.crop.to_string(),
                c.temporal_variability.to_string(),
                c.spatial_variability.to_string(),
                c.mean_ce_gain_vs_none.to_string(),
                c.share_ge_85.to_string(),
            ]
        }),
    );
    let corr = rows_to_bytes(
        &strings(&["crop", "metric", "axis", "spearman"]),
        report.correlations.iter().map(|c| {
            vec![
                c.crop.to_string(),
                c.metric.to_string(),
                c.axis.to_string(),
                c.rho.map(|r| r.to_string()).unwrap_or_else(|| "undefined".into()),
            ]
        }),
    );
    [
        ("reversal_rows.csv", rows),
        ("reversal_grid.csv", grid),
        ("reversal_correlations.csv", corr),
    ]
}

pub fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(bytes).map_err(|e| Error::io(path, e))
}
