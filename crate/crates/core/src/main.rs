use std::path::PathBuf;
use std::process::ExitCode;

use basisrisk::config::RunConfig;
use basisrisk::contracts::{PremiumBasis, Trigger};
use basisrisk::pipeline::{self, StageError, StageResult};
use basisrisk::preferences::{CptSpec, Crra, Preference, ReferenceRule};
use basisrisk::Error;
use clap::{Args, Parser, Subcommand, ValueEnum};

/// Area-yield index insurance evaluation.
#[derive(Parser)]
#[command(version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic panel and its reference county means.
    Generate(Common),
    /// Fit every field against its county average.
    Fit(Staged),
    /// Simulate a balanced panel from `fits.csv`.
    Simulate(Staged),
    /// Evaluate no insurance, farm and area contracts for every field.
    Evaluate(Staged),
    /// Aggregate field evaluations by county and build the reversal report.
    Aggregate(Staged),
    /// Repeat simulation and evaluation for several AR(2)-extended horizons.
    Sweep {
        #[command(flatten)]
        common: Common,
        /// Comma-separated horizons, e.g. 30,100,500.
        #[arg(long, value_delimiter = ',')]
        sizes: Option<Vec<usize>>,
    },
    /// Every stage end to end.
    Run(Common),
}

#[derive(Args)]
struct Staged {
    #[command(flatten)]
    common: Common,
    /// Input table; defaults to the previous stage's output.
    #[arg(long)]
    input: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum PreferenceArg {
    Crra,
    CptR1,
    CptR2,
}

#[derive(Clone, Copy, ValueEnum)]
enum BasisArg {
    FieldFair,
    CountyFair,
}

#[derive(Args)]
struct Common {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    workers: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    n_years: Option<usize>,
    #[arg(long)]
    subsidy: Option<bool>,
    #[arg(long, value_enum)]
    preference: Option<PreferenceArg>,
    #[arg(long, value_enum)]
    premium_basis: Option<BasisArg>,
    /// Comma-separated farm coverage levels, e.g. 0.5,0.75,0.85.
    #[arg(long, value_delimiter = ',')]
    triggers: Option<Vec<f64>>,
}

impl Common {
    fn load(&self) -> StageResult<RunConfig> {
        let tag = |error| StageError { stage: "config", error };
        let mut cfg = match &self.config {
            Some(path) => RunConfig::load(path).map_err(|e| match e {
                Error::Io { .. } => StageError { stage: "load", error: e },
                e => tag(e),
            })?,
            None => RunConfig::default(),
        };
        if let Some(s) = self.seed {
            cfg.seed = Some(s);
        }
        if let Some(w) = self.workers {
            cfg.workers = Some(w);
        }
        if let Some(o) = &self.out {
            cfg.out = Some(o.clone());
        }
        if let Some(n) = self.n_years {
            cfg.simulation.n_years = Some(n);
        }
        if let Some(s) = self.subsidy {
            cfg.contracts.subsidy = s;
        }
        if let Some(p) = self.preference {
            let keep_rho = match cfg.preference {
                Preference::Crra(c) => c,
                _ => Crra::default(),
            };
            let keep_cpt = match &cfg.preference {
                Preference::Cpt(s) => *s,
                _ => CptSpec::default(),
            };
            cfg.preference = match p {
                PreferenceArg::Crra => Preference::Crra(keep_rho),
                PreferenceArg::CptR1 => Preference::Cpt(CptSpec {
                    reference_rule: ReferenceRule::R1,
                    ..keep_cpt
                }),
                PreferenceArg::CptR2 => Preference::Cpt(CptSpec {
                    reference_rule: ReferenceRule::R2,
                    ..keep_cpt
                }),
            };
        }
        if let Some(b) = self.premium_basis {
            cfg.contracts.premium_basis = match b {
                BasisArg::FieldFair => PremiumBasis::FieldFair,
                BasisArg::CountyFair => PremiumBasis::CountyFair,
            };
        }
        if let Some(ts) = &self.triggers {
            cfg.contracts.triggers = ts
                .iter()
                .map(|&t| Trigger::from_fraction(t))
                .collect::<Result<_, _>>()
                .map_err(|e| tag(Error::Config(e.to_string())))?;
        }
        Ok(cfg)
    }
}

fn dispatch(cli: Cli) -> StageResult<Vec<PathBuf>> {
    match cli.command {
        Command::Generate(c) => pipeline::run_generate(&c.load()?),
        Command::Fit(s) => pipeline::run_fit(&s.common.load()?, s.input.as_deref()),
        Command::Simulate(s) => pipeline::run_simulate(&s.common.load()?, s.input.as_deref()),
        Command::Evaluate(s) => pipeline::run_evaluate(&s.common.load()?, s.input.as_deref()),
        Command::Aggregate(s) => pipeline::run_aggregate(&s.common.load()?, s.input.as_deref()),
        Command::Sweep { common, sizes } => {
            let mut cfg = common.load()?;
            if let Some(s) = sizes {
                cfg.sweep.sizes = s;
            }
            pipeline::run_sweep(&cfg)
        }
        Command::Run(c) => pipeline::run_pipeline(&c.load()?),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(files) => {
            for f in files {
                println!("{}", f.display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
