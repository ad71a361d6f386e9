use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use yieldcast::error::ErrorClass;
use yieldcast::pipeline::{
    self, CompareSection, ConfigFile, InputSection, OutputSection, RunConfig, RunSection,
};
use yieldcast::synth::{self, Law, ScenarioSpec};
use yieldcast::{Error, Result};

/// Crop-yield hindcasting from dekadal NDVI and weather series.
#[derive(Debug, Parser)]
#[command(name = "yieldcast", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Fit double logistics to NDVI and derive the average season window.
    Phenology(Common),
    /// Dump monthly feature matrices.
    Features(Common),
    /// Nested leave-one-year-out hindcast of every configuration.
    Run(Common),
    /// Recompute Bayesian comparisons from a previous run's predictions.
    Compare(Common),
    /// Percentile ranks and option effects from a previous run's metrics.
    Report(Common),
    /// Generate a synthetic dataset with a known yield law.
    Synth(SynthArgs),
    /// Refit a configuration on all years and save the model.
    FitFinal {
        #[command(flatten)]
        common: Common,
        /// Configuration id; defaults to each month's best in metrics.csv.
        #[arg(long)]
        config_id: Option<String>,
    },
}

/// Flags shared by the data commands; each overrides its config-file key.
#[derive(Debug, Args)]
struct Common {
    /// TOML configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Directory holding timeseries.csv, yields.csv and units.csv.
    #[arg(long)]
    input: Option<PathBuf>,
    #[arg(long)]
    crop: Option<String>,
    /// Forecast months, e.g. `6` or `1,4,8` (1 = Dec, 8 = Jul).
    #[arg(long, value_delimiter = ',')]
    months: Option<Vec<usize>>,
    /// e.g. `lasso,svr_lin`.
    #[arg(long, value_delimiter = ',')]
    algorithms: Option<Vec<String>>,
    /// e.g. `RS,RS&Met-`.
    #[arg(long, value_delimiter = ',')]
    sets: Option<Vec<String>>,
    /// Season window as `sos,eos` dekads; skips phenology.
    #[arg(long, value_delimiter = ',')]
    season: Option<Vec<u8>>,
    #[arg(long)]
    no_benchmarks: bool,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    workers: Option<usize>,
    #[arg(long)]
    rope_delta: Option<f64>,
    #[arg(long)]
    confidence: Option<f64>,
    /// `per-fold` or `global`.
    #[arg(long)]
    scaler: Option<String>,
    /// `full` or `paper-n`.
    #[arg(long)]
    gbr_grid: Option<String>,
    #[arg(long)]
    out: Option<PathBuf>,
}

impl Common {
    fn resolve(self) -> Result<RunConfig> {
        let file = match &self.config {
            Some(p) => ConfigFile::load(p)?,
            None => ConfigFile::default(),
        };
        let season = match self.season.as_deref() {
            None => None,
            Some(&[sos, eos]) => Some([sos, eos]),
            Some(_) => return Err(Error::Config("--season takes two dekads: sos,eos".into())),
        };
        let flags = ConfigFile {
            inputs: InputSection {
                dir: self.input,
                ..InputSection::default()
            },
            run: RunSection {
                crop: self.crop,
                months: self.months,
                algorithms: self.algorithms,
                sets: self.sets,
                mrmr: None,
                ohe: None,
                benchmarks: self.no_benchmarks.then_some(false),
                season,
                seed: self.seed,
                workers: self.workers,
                scaler: self.scaler,
                gbr_grid: self.gbr_grid,
            },
            compare: CompareSection {
                rope_delta: self.rope_delta,
                confidence: self.confidence,
                rho: None,
            },
            output: OutputSection { out: self.out },
        };
        RunConfig::resolve(file.overlay(flags))
    }
}

#[derive(Debug, Args)]
struct SynthArgs {
    /// PEAK_LINEAR, METEO_MODULATED or PURE_NOISE.
    #[arg(long, default_value = "PEAK_LINEAR")]
    law: String,
    #[arg(long, default_value_t = 5)]
    units: usize,
    #[arg(long, default_value_t = 17)]
    years: usize,
    #[arg(long, default_value_t = 2002)]
    first_year: i32,
    /// Yield noise sd in t/ha.
    #[arg(long, default_value_t = 0.05)]
    noise_sd: f64,
    /// Largest absolute unit offset in t/ha.
    #[arg(long, default_value_t = 0.2)]
    unit_offset: f64,
    #[arg(long, default_value_t = 0.005)]
    ndvi_noise: f64,
    #[arg(long, default_value = "wheat")]
    crop: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value = "synth")]
    out: PathBuf,
}

fn synth_cmd(a: SynthArgs) -> Result<()> {
    let spec = ScenarioSpec {
        crop: a.crop,
        n_units: a.units,
        first_year: a.first_year,
        n_years: a.years,
        law: a.law.parse::<Law>()?,
        noise_sd: a.noise_sd,
        unit_offset: a.unit_offset,
        ndvi_noise: a.ndvi_noise,
        seed: a.seed,
        ..ScenarioSpec::default()
    };
    synth::generate(&spec)?.write(&a.out)?;
    println!(
        "wrote {} units x {} years to {}",
        spec.n_units,
        spec.n_years,
        a.out.display()
    );
    Ok(())
}

fn execute(cmd: Command) -> Result<()> {
    match cmd {
        Command::Phenology(c) => {
            let r = pipeline::cmd_phenology(&c.resolve()?)?;
            println!(
                "season window: sos {} eos {} ({} unit-years fitted, {} skipped)",
                r.window.sos,
                r.window.eos,
                r.records.len(),
                r.skipped.len()
            );
        }
        Command::Features(c) => {
            for p in pipeline::cmd_features(&c.resolve()?)? {
                println!("{}", p.display());
            }
        }
        Command::Run(c) => {
            let cfg = c.resolve()?;
            let out = pipeline::cmd_run(&cfg)?;
            for (m, id) in &out.best {
                println!("month {m}: best {id}");
            }
            println!("outputs in {}", cfg.out.display());
        }
        Command::Compare(c) => {
            let d = pipeline::cmd_compare(&c.resolve()?)?;
            println!("{} comparisons written", d.len());
        }
        Command::Report(c) => {
            let r = pipeline::cmd_report(&c.resolve()?)?;
            for note in &r.skipped {
                log::warn!("{note}");
            }
            for p in &r.files {
                println!("{}", p.display());
            }
        }
        Command::Synth(a) => synth_cmd(a)?,
        Command::FitFinal { common, config_id } => {
            for m in pipeline::cmd_fit_final(&common.resolve()?, config_id.as_deref())? {
                println!(
                    "month {}: {} refit on all years",
                    m.forecast_month, m.config_id
                );
            }
        }
    }
    Ok(())
}

fn fail(e: &Error) -> ExitCode {
    eprintln!("{}", e.to_json());
    ExitCode::from(e.class().exit_code() as u8)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let err = Error::Config(e.to_string().trim().to_string());
            debug_assert_eq!(err.class(), ErrorClass::Config);
            return fail(&err);
        }
    };
    match execute(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => fail(&e),
    }
}
