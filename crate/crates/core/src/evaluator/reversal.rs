//! County results projected onto the temporal/spatial variability plane.

use serde::{Deserialize, Serialize};

use super::aggregate::CountyAggregate;
use crate::data::Crop;
use crate::regression::CountyStats;
use crate::stats;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ReversalRow {
    pub county_id: String,
    pub crop: Crop,
    pub temporal_variability: f64,
    pub spatial_variability: f64,
    pub mean_ce_gain_vs_none: f64,
    pub share_ge_85: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GridCell {
    pub crop: Crop,
    pub temporal_variability: f64,
    pub spatial_variability: f64,
    pub mean_ce_gain_vs_none: f64,
    pub share_ge_85: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RankCorrelation {
    pub crop: Crop,
    pub metric: &'static str,
    pub axis: &'static str,
    /// Spearman coefficient; `None` when either side has no spread.
    pub rho: Option<f64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct ReversalReport {
    pub rows: Vec<ReversalRow>,
    pub grid: Vec<GridCell>,
    pub correlations: Vec<RankCorrelation>,
}

impl ReversalReport {
    pub fn correlation(&self, crop: Crop, metric: &str, axis: &str) -> Option<f64> {
        self.correlations
            .iter()
            .find(|c| c.crop == crop && c.metric == metric && c.axis == axis)
            .and_then(|c| c.rho)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReversalOptions {
    /// Grid points per axis.
    pub resolution: usize,
    pub power: f64,
}

impl Default for ReversalOptions {
    fn default() -> Self {
        Self {
            resolution: 20,
            power: 2.0,
        }
    }
}

/// Inverse-distance-weighted value at `at` from `(point, value)` pairs.
/// Coincident points return the mean of their values.
pub fn idw(points: &[([f64; 2], f64)], at: [f64; 2], power: f64) -> f64 {
    let d2 = |p: [f64; 2]| (p[0] - at[0]).powi(2) + (p[1] - at[1]).powi(2);
    let exact: Vec<f64> = points.iter().filter(|(p, _)| d2(*p) == 0.0).map(|(_, v)| *v).collect();
    if !exact.is_empty() {
        return stats::mean(&exact);
    }
    let (num, den) = points.iter().fold((0.0, 0.0), |(n, d), (p, v)| {
        let w = d2(*p).powf(-power / 2.0);
        (n + w * v, d + w)
    });
    num / den
}

fn axis_range(values: &[f64]) -> (f64, f64) {
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    (lo, hi)
}

fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 || hi == lo {
        return vec![lo; n.min(1)];
    }
    (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect()
}

fn grid_for(rows: &[&ReversalRow], crop: Crop, opts: ReversalOptions) -> Vec<GridCell> {
    let t: Vec<f64> = rows.iter().map(|r| r.temporal_variability).collect();
    let s: Vec<f64> = rows.iter().map(|r| r.spatial_variability).collect();
    let (t_lo, t_hi) = axis_range(&t);
    let (s_lo, s_hi) = axis_range(&s);
    if t_lo == t_hi && s_lo == s_hi {
        return vec![];
    }
    let norm = |v: f64, lo: f64, hi: f64| if hi > lo { (v - lo) / (hi - lo) } else { 0.0 };
    let pts = |metric: fn(&ReversalRow) -> f64| -> Vec<([f64; 2], f64)> {
        rows.iter()
            .map(|r| {
                (
                    [
                        norm(r.temporal_variability, t_lo, t_hi),
                        norm(r.spatial_variability, s_lo, s_hi),
                    ],
                    metric(r),
                )
            })
            .collect()
    };
    let gain = pts(|r| r.mean_ce_gain_vs_none);
    let share = pts(|r| r.share_ge_85);
    let mut cells = vec![];
    for &tv in &linspace(t_lo, t_hi, opts.resolution) {
        for &sv in &linspace(s_lo, s_hi, opts.resolution) {
            let at = [norm(tv, t_lo, t_hi), norm(sv, s_lo, s_hi)];
            cells.push(GridCell {
                crop,
                temporal_variability: tv,
                spatial_variability: sv,
                mean_ce_gain_vs_none: idw(&gain, at, opts.power),
                share_ge_85: idw(&share, at, opts.power),
            });
        }
    }
    cells
}

/// Joins aggregates with county statistics by `(county_id, crop)`, then per
/// crop interpolates both utility metrics over the variability plane and
/// rank-correlates them with each axis. Aggregates without statistics are
/// left out.
pub fn reversal_report(aggregates: &[CountyAggregate], county_stats: &[CountyStats], opts: ReversalOptions) -> ReversalReport {
    let mut rows: Vec<ReversalRow> = aggregates
        .iter()
        .filter_map(|a| {
            let s = county_stats
                .iter()
                .find(|s| s.county_id == a.county_id && s.crop == a.crop)?;
            Some(ReversalRow {
                county_id: a.county_id.clone(),
                crop: a.crop,
                temporal_variability: s.temporal_variability,
                spatial_variability: s.spatial_variability,
                mean_ce_gain_vs_none: a.mean_ce_gain_vs_none,
                share_ge_85: a.share_ge_85,
            })
        })
        .collect();
    rows.sort_by(|a, b| (&a.county_id, a.crop).cmp(&(&b.county_id, b.crop)));

    let mut report = ReversalReport::default();
    for crop in Crop::ALL {
        let of_crop: Vec<&ReversalRow> = rows.iter().filter(|r| r.crop == crop).collect();
        if of_crop.is_empty() {
            continue;
        }
        report.grid.extend(grid_for(&of_crop, crop, opts));
        let col = |f: fn(&ReversalRow) -> f64| of_crop.iter().map(|r| f(r)).collect::<Vec<f64>>();
        let metrics: [(&'static str, Vec<f64>); 2] = [
            ("mean_ce_gain_vs_none", col(|r| r.mean_ce_gain_vs_none)),
            ("share_ge_85", col(|r| r.share_ge_85)),
        ];
        let axes: [(&'static str, Vec<f64>); 2] = [
            ("temporal_variability", col(|r| r.temporal_variability)),
            ("spatial_variability", col(|r| r.spatial_variability)),
        ];
        for (metric, m) in &metrics {
            for (axis, a) in &axes {
                report.correlations.push(RankCorrelation {
                    crop,
                    metric,
                    axis,
                    rho: stats::spearman(m, a),
                });
            }
        }
    }
    report.rows = rows;
    report
}
