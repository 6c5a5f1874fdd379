//! End-to-end runs: load or generate a panel, fit, simulate, evaluate,
//! aggregate and report, then write every table plus a manifest with the
//! SHA-256 of each output.

pub mod tables;

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::config::RunConfig;
use crate::data::{
    counties_to_bytes, filter_min_years, generate_synthetic_panel, load_county_file, load_panel, panel_to_bytes,
    CountySeries, Crop, Panel, Provenance,
};
use crate::error::{Error, Exclusion, Result};
use crate::evaluator::{
    aggregate_county, evaluate_panel, reversal_report, CountyAggregate, FieldEvaluation, PanelEvaluation,
    ReversalReport,
};
use crate::regression::{fit_field_regression, CountyStats, RegressionFit};
use crate::simulate::{simulate_panel, SimulatedPanel, SimulationSource};

/// A failure tagged with the pipeline stage that produced it.
#[derive(Debug)]
pub struct StageError {
    pub stage: &'static str,
    pub error: Error,
}

impl fmt::Display for StageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} stage failed: {}", self.stage, self.error)
    }
}

impl std::error::Error for StageError {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        Some(&self.error)
    }
}

impl StageError {
    /// 2 for configuration problems and unreadable inputs, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        match (&self.error, self.stage) {
            (Error::Config(_), _) | (Error::Io { .. }, "load") => 2,
            _ => 1,
        }
    }
}

pub type StageResult<T> = std::result::Result<T, StageError>;

trait Tag<T> {
    fn stage(self, stage: &'static str) -> StageResult<T>;
}

impl<T> Tag<T> for Result<T> {
    fn stage(self, stage: &'static str) -> StageResult<T> {
        self.map_err(|error| StageError { stage, error })
    }
}

/// Runs `f` on a dedicated pool with `workers` threads (all cores when `None`).
pub fn with_workers<T: Send>(workers: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = workers {
        builder = builder.num_threads(n);
    }
    let pool = builder
        .build()
        .map_err(|e| Error::Config(format!("cannot start {workers:?} workers: {e}")))?;
    Ok(pool.install(f))
}

/// Reads the configured panel, or generates the synthetic one, and drops
/// field-crop pairs with fewer than `filter_k` years. A counties file
/// attaches reference means, except for simulated panels where it holds
/// the county series the fields were drawn around.
pub fn load_input(cfg: &RunConfig, input: Option<&Path>) -> Result<Panel> {
    let input = input.or(cfg.data.input.as_deref());
    let panel = match input {
        Some(path) => {
            let panel = load_panel(path, &cfg.data.schema)?;
            match &cfg.data.counties {
                Some(cpath) => {
                    let counties = load_county_file(cpath)?;
                    if panel.provenance() == Provenance::Simulated {
                        Panel::new(panel.fields().to_vec(), counties, Provenance::Simulated)?
                    } else {
                        panel.with_reference_means(&counties)?
                    }
                }
                None => panel,
            }
        }
        None => generate_synthetic_panel(&cfg.synthetic)?,
    };
    if panel.provenance() == Provenance::Simulated {
        return Ok(panel);
    }
    let filtered = filter_min_years(&panel, cfg.data.filter_k())?;
    if filtered.is_empty() {
        return Err(Error::Validation(format!(
            "no field has at least {} years",
            cfg.data.filter_k()
        )));
    }
    Ok(filtered)
}

/// Field-to-county regressions for every field; fields that cannot be
/// fitted are returned as exclusions.
pub fn fit_panel(panel: &Panel) -> (Vec<RegressionFit>, Vec<Exclusion>) {
    let results: Vec<_> = panel
        .fields()
        .par_iter()
        .map(|f| {
            let county = panel.county(f.county_id(), f.crop()).expect("panel resolves counties");
            fit_field_regression(f, county).map_err(|e| Exclusion {
                county_id: f.county_id().to_string(),
                field_id: f.field_id().to_string(),
                crop: f.crop(),
                stage: "fit",
                reason: e.to_string(),
            })
        })
        .collect();
    let mut fits = vec![];
    let mut excluded = vec![];
    for r in results {
        match r {
            Ok(f) => fits.push(f),
            Err(e) => excluded.push(e),
        }
    }
    (fits, excluded)
}

#[derive(Clone, Debug)]
pub struct RunResults {
    pub input: Panel,
    pub fits: Vec<RegressionFit>,
    pub simulated: Option<SimulatedPanel>,
    pub evaluation: PanelEvaluation,
    pub report: ReversalReport,
    pub exclusions: Vec<Exclusion>,
}

impl RunResults {
    /// Panel the contracts were evaluated on.
    pub fn evaluated_panel(&self) -> &Panel {
        self.simulated.as_ref().map(|s| &s.panel).unwrap_or(&self.input)
    }
}

/// Computes everything `run` writes, without touching the output directory.
pub fn execute(cfg: &RunConfig) -> StageResult<RunResults> {
    cfg.validate().stage("config")?;
    let input = load_input(cfg, None).stage("load")?;
    execute_on(cfg, input)
}

pub fn execute_on(cfg: &RunConfig, input: Panel) -> StageResult<RunResults> {
    let (fits, mut exclusions) = fit_panel(&input);
    let simulated = if cfg.simulation.enabled {
        let sim = simulate_panel(&input, &fits, &cfg.simulation_spec().stage("config")?).stage("simulate")?;
        exclusions.extend(sim.exclusions.iter().cloned());
        Some(sim)
    } else {
        None
    };
    let panel = simulated.as_ref().map(|s| &s.panel).unwrap_or(&input);
    if panel.is_empty() {
        return Err(StageError {
            stage: "simulate",
            error: Error::Validation("no field survived fitting and simulation".into()),
        });
    }
    let eval_cfg = cfg.eval_config().stage("config")?;
    let evaluation =
        evaluate_panel(panel, &eval_cfg, cfg.aggregate.options(), cfg.aggregate.cv).stage("evaluate")?;
    exclusions.extend(evaluation.exclusions.iter().cloned());
    let violations = evaluation.fields.iter().filter(|e| e.monotonicity_violation).count();
    if violations > 0 {
        log::warn!(
            "farm scores decrease in the trigger for {violations} of {} fields",
            evaluation.fields.len()
        );
    }
    if !exclusions.is_empty() {
        log::warn!("{} field-crop pairs or counties excluded, see exclusions.csv", exclusions.len());
    }
    log::info!(
        "evaluated {} fields in {} counties",
        evaluation.fields.len(),
        evaluation.counties.len()
    );
    let report = reversal_report(&evaluation.counties, &evaluation.county_stats, cfg.report);
    Ok(RunResults {
        input,
        fits,
        simulated,
        evaluation,
        report,
        exclusions,
    })
}

/// Output files collected in memory and written together. If any write
/// fails the files already written by this batch are removed.
#[derive(Default)]
pub struct Outputs {
    files: Vec<(String, Vec<u8>)>,
}

#[derive(Serialize)]
struct ManifestEntry<'a> {
    file: &'a str,
    bytes: usize,
    sha256: String,
}

#[derive(Serialize)]
struct Manifest<'a> {
    command: &'a str,
    version: &'a str,
    config: &'a RunConfig,
    outputs: Vec<ManifestEntry<'a>>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

impl Outputs {
    pub fn add(&mut self, name: &str, bytes: Vec<u8>) {
        self.files.push((name.to_string(), bytes));
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.files.iter().map(|(n, _)| n.as_str())
    }

    /// Writes every file and then `manifest` into `dir`.
    pub fn commit(mut self, dir: &Path, manifest: &str, command: &str, cfg: &RunConfig) -> Result<Vec<PathBuf>> {
        let entries: Vec<ManifestEntry> = self
            .files
            .iter()
            .map(|(n, b)| ManifestEntry {
                file: n,
                bytes: b.len(),
                sha256: sha256_hex(b),
            })
            .collect();
        // worker count and output location never change the results
        let echo = RunConfig {
            workers: None,
            out: None,
            ..cfg.clone()
        };
        let m = Manifest {
            command,
            version: env!("CARGO_PKG_VERSION"),
            config: &echo,
            outputs: entries,
        };
        let mut json = serde_json::to_vec_pretty(&m).expect("manifest serializes");
        json.push(b'\n');
        self.files.push((manifest.to_string(), json));

        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let mut written: Vec<PathBuf> = vec![];
        for (name, bytes) in &self.files {
            let path = dir.join(name);
            if let Err(e) = tables::write_bytes(&path, bytes) {
                for p in written.iter().chain([&path]) {
                    let _ = std::fs::remove_file(p);
                }
                return Err(e);
            }
            written.push(path);
        }
        Ok(written)
    }
}

fn result_outputs(cfg: &RunConfig, res: &RunResults, out: &mut Outputs) -> Result<()> {
    let eval_cfg = cfg.eval_config()?;
    out.add("fits.csv", tables::fits_table(&res.fits));
    if let (Some(sim), true) = (&res.simulated, cfg.simulation.persist) {
        out.add("simulated_panel.csv", panel_to_bytes(&sim.panel));
        out.add("simulated_counties.csv", counties_to_bytes(sim.panel.counties()));
    }
    out.add(
        "field_evaluations.csv",
        tables::field_evaluations_table(&res.evaluation.fields, &eval_cfg.triggers),
    );
    out.add("county_stats.csv", tables::county_stats_table(&res.evaluation.county_stats));
    out.add("county_aggregates.csv", tables::aggregates_table(&res.evaluation.counties));
    for (name, bytes) in tables::reversal_tables(&res.report) {
        out.add(name, bytes);
    }
    out.add("exclusions.csv", tables::exclusions_table(&res.exclusions));
    Ok(())
}

/// The `run` command: every stage end to end.
pub fn run_pipeline(cfg: &RunConfig) -> StageResult<Vec<PathBuf>> {
    cfg.validate().stage("config")?;
    let res = with_workers(cfg.workers, || execute(cfg)).stage("config")??;
    let mut out = Outputs::default();
    result_outputs(cfg, &res, &mut out).stage("config")?;
    out.commit(&cfg.out_dir(), "manifest.json", "run", cfg).stage("write")
}

/// The `generate` command: writes the synthetic panel and its reference
/// county means.
pub fn run_generate(cfg: &RunConfig) -> StageResult<Vec<PathBuf>> {
    cfg.synthetic.validate().stage("config")?;
    let panel = with_workers(cfg.workers, || generate_synthetic_panel(&cfg.synthetic))
        .stage("config")?
        .stage("generate")?;
    let references: Vec<CountySeries> = panel
        .counties()
        .iter()
        .filter_map(|c| {
            let r = c.reference()?;
            CountySeries::new(c.county_id(), c.crop(), r.years.clone(), r.values.clone()).ok()
        })
        .collect();
    let mut out = Outputs::default();
    out.add("panel.csv", panel_to_bytes(&panel));
    out.add("reference_counties.csv", counties_to_bytes(&references));
    out.commit(&cfg.out_dir(), "manifest-generate.json", "generate", cfg)
        .stage("write")
}

/// The `fit` command.
pub fn run_fit(cfg: &RunConfig, input: Option<&Path>) -> StageResult<Vec<PathBuf>> {
    let res = with_workers(cfg.workers, || -> StageResult<_> {
        let panel = load_input(cfg, input).stage("load")?;
        Ok(fit_panel(&panel))
    })
    .stage("config")??;
    let mut out = Outputs::default();
    out.add("fits.csv", tables::fits_table(&res.0));
    out.add("exclusions-fit.csv", tables::exclusions_table(&res.1));
    out.commit(&cfg.out_dir(), "manifest-fit.json", "fit", cfg).stage("write")
}

/// The `simulate` command; reads `fits.csv` from the output directory.
pub fn run_simulate(cfg: &RunConfig, input: Option<&Path>) -> StageResult<Vec<PathBuf>> {
    let spec = cfg.simulation_spec().stage("config")?;
    spec.validate().stage("config")?;
    let sim = with_workers(cfg.workers, || -> StageResult<_> {
        let panel = load_input(cfg, input).stage("load")?;
        let fits = tables::read_fits(&cfg.out_dir().join("fits.csv")).stage("load")?;
        simulate_panel(&panel, &fits, &spec).stage("simulate")
    })
    .stage("config")??;
    let mut out = Outputs::default();
    out.add("simulated_panel.csv", panel_to_bytes(&sim.panel));
    out.add("simulated_counties.csv", counties_to_bytes(sim.panel.counties()));
    out.add("exclusions-simulate.csv", tables::exclusions_table(&sim.exclusions));
    out.commit(&cfg.out_dir(), "manifest-simulate.json", "simulate", cfg)
        .stage("write")
}

/// The `evaluate` command; defaults to the simulated panel and counties in
/// the output directory. An explicit `input` is paired with `data.counties`.
pub fn run_evaluate(cfg: &RunConfig, input: Option<&Path>) -> StageResult<Vec<PathBuf>> {
    let eval_cfg = cfg.eval_config().stage("config")?;
    eval_cfg.validate().stage("config")?;
    let dir = cfg.out_dir();
    let mut cfg = cfg.clone();
    let default_panel = dir.join("simulated_panel.csv");
    let input = match input {
        Some(p) => p.to_path_buf(),
        None => {
            // the configured counties file describes the raw panel, not the simulated one
            cfg.data.counties = Some(dir.join("simulated_counties.csv"));
            default_panel
        }
    };
    let evaluation = with_workers(cfg.workers, || -> StageResult<_> {
        let panel = load_input(&cfg, Some(&input)).stage("load")?;
        evaluate_panel(&panel, &eval_cfg, cfg.aggregate.options(), cfg.aggregate.cv).stage("evaluate")
    })
    .stage("config")??;
    let mut out = Outputs::default();
    out.add(
        "field_evaluations.csv",
        tables::field_evaluations_table(&evaluation.fields, &eval_cfg.triggers),
    );
    out.add("county_stats.csv", tables::county_stats_table(&evaluation.county_stats));
    out.add("exclusions.csv", tables::exclusions_table(&evaluation.exclusions));
    out.commit(&dir, "manifest-evaluate.json", "evaluate", &cfg).stage("write")
}

/// County aggregates from a list of field evaluations.
pub fn aggregate_evaluations(
    evals: &[FieldEvaluation],
    excluded: &BTreeMap<(String, Crop), usize>,
    cfg: &RunConfig,
) -> Result<Vec<CountyAggregate>> {
    let mut groups: BTreeMap<(String, Crop), Vec<&FieldEvaluation>> = BTreeMap::new();
    for e in evals {
        groups.entry((e.county_id.clone(), e.crop)).or_default().push(e);
    }
    groups
        .into_iter()
        .map(|((cid, crop), members)| {
            let n_excluded = excluded.get(&(cid.clone(), crop)).copied().unwrap_or(0);
            aggregate_county(&cid, crop, &members, n_excluded, cfg.aggregate.options())
        })
        .collect()
}

/// The `aggregate` command; reads the evaluation tables from the output
/// directory (or `input` for the field table).
pub fn run_aggregate(cfg: &RunConfig, input: Option<&Path>) -> StageResult<Vec<PathBuf>> {
    let dir = cfg.out_dir();
    let evals_path = input.map(Path::to_path_buf).unwrap_or_else(|| dir.join("field_evaluations.csv"));
    let evals = tables::read_field_evaluations(&evals_path).stage("load")?;
    let stats_path = dir.join("county_stats.csv");
    let stats: Vec<CountyStats> = if stats_path.exists() {
        tables::read_county_stats(&stats_path).stage("load")?
    } else {
        vec![]
    };
    let excl_path = dir.join("exclusions.csv");
    let excluded: BTreeMap<(String, Crop), usize> = if excl_path.exists() {
        tables::read_exclusion_counts(&excl_path)
            .stage("load")?
            .into_iter()
            .map(|(c, k, n)| ((c, k), n))
            .collect()
    } else {
        BTreeMap::new()
    };
    let aggs = aggregate_evaluations(&evals, &excluded, cfg).stage("aggregate")?;
    let report = reversal_report(&aggs, &stats, cfg.report);
    let mut out = Outputs::default();
    out.add("county_aggregates.csv", tables::aggregates_table(&aggs));
    for (name, bytes) in tables::reversal_tables(&report) {
        out.add(name, bytes);
    }
    out.commit(&dir, "manifest-aggregate.json", "aggregate", cfg)
        .stage("write")
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SweepRow {
    pub n_years: usize,
    pub county_id: String,
    pub crop: Crop,
    pub share_ge_85: f64,
    pub share_ge_90: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SweepSummary {
    pub n_years: usize,
    pub n_counties: usize,
    pub mean_share_ge_85: f64,
    pub mean_share_ge_90: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct SweepResults {
    pub rows: Vec<SweepRow>,
    pub summary: Vec<SweepSummary>,
}

/// For each horizon, extends every county by AR(2) bootstrap, re-simulates
/// the fields and re-evaluates them.
pub fn sample_size_sweep(cfg: &RunConfig, sizes: &[usize]) -> StageResult<SweepResults> {
    cfg.validate().stage("config")?;
    let input = load_input(cfg, None).stage("load")?;
    sweep_on(cfg, &input, sizes)
}

pub fn sweep_on(cfg: &RunConfig, input: &Panel, sizes: &[usize]) -> StageResult<SweepResults> {
    let (fits, _) = fit_panel(input);
    let eval_cfg = cfg.eval_config().stage("config")?;
    let mut results = SweepResults::default();
    for &n in sizes {
        let mut spec = cfg.simulation_spec().stage("config")?;
        spec.source = SimulationSource::Ar2Extension;
        spec.n_years = Some(n);
        let sim = simulate_panel(input, &fits, &spec).stage("simulate")?;
        let eval = evaluate_panel(&sim.panel, &eval_cfg, cfg.aggregate.options(), cfg.aggregate.cv)
            .stage("evaluate")?;
        let k = eval.counties.len() as f64;
        results.summary.push(SweepSummary {
            n_years: n,
            n_counties: eval.counties.len(),
            mean_share_ge_85: eval.counties.iter().map(|c| c.share_ge_85).sum::<f64>() / k,
            mean_share_ge_90: eval.counties.iter().map(|c| c.share_ge_90).sum::<f64>() / k,
        });
        results.rows.extend(eval.counties.into_iter().map(|c| SweepRow {
            n_years: n,
            county_id: c.county_id,
            crop: c.crop,
            share_ge_85: c.share_ge_85,
            share_ge_90: c.share_ge_90,
        }));
    }
    Ok(results)
}

fn serialize_rows<T: Serialize>(rows: &[T]) -> Vec<u8> {
    let mut buf = Vec::new();
    {
        let mut w = csv::Writer::from_writer(&mut buf);
        for r in rows {
            w.serialize(r).expect("in-memory write");
        }
        w.flush().expect("in-memory write");
    }
    buf
}

/// The `sweep` command.
pub fn run_sweep(cfg: &RunConfig) -> StageResult<Vec<PathBuf>> {
    let sizes = cfg.sweep.sizes.clone();
    let res = with_workers(cfg.workers, || sample_size_sweep(cfg, &sizes)).stage("config")??;
    let mut out = Outputs::default();
    out.add("sweep.csv", serialize_rows(&res.rows));
    out.add("sweep_summary.csv", serialize_rows(&res.summary));
    out.commit(&cfg.out_dir(), "manifest-sweep.json", "sweep", cfg).stage("write")
}
