mod render;

use std::io::{BufWriter, IsTerminal, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::Arc;
use std::time::Duration;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use mats_core::calibration::{self, calibrate_tau2_table};
use mats_core::io::{self, RunManifest};
use mats_core::simulator::{aggregate, RunOptions};
use mats_core::{
    analyze, builtin_scenario, builtin_scenarios, run_replicates, CalibrationRequest, McmcSettings, ModelConfig,
    OperatingCharacteristics, Scenario, Stage, TrialData,
};
use mats_service::ScenarioRef;

#[derive(Parser)]
#[command(
    name = "mats",
    version,
    about = "Bayesian multi-arm two-stage dose-optimization design"
)]
struct Cli {
    /// More log output (-v info, -vv debug).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Choose tau2 from a target response-rate gap.
    #[command(name = "calibrate-tau2")]
    CalibrateTau2 {
        /// Smallest response-rate gap worth detecting.
        #[arg(long)]
        delta: f64,
        /// Plausible low-dose response rates, comma-separated.
        #[arg(long, value_delimiter = ',', required = true)]
        p2: Vec<f64>,
        #[arg(long, default_value_t = 0.1)]
        grid_min: f64,
        #[arg(long, default_value_t = 1.5)]
        grid_max: f64,
        #[arg(long, default_value_t = 0.1)]
        grid_step: f64,
        #[arg(long)]
        json: bool,
    },
    /// Simulate trials under a scenario and write a run directory.
    Simulate {
        /// Built-in scenario name or path of a scenario JSON file.
        #[arg(long)]
        scenario: String,
        /// ModelConfig JSON; defaults to the built-in design.
        #[arg(long)]
        config: Option<PathBuf>,
        /// McmcSettings JSON; missing fields take their defaults.
        #[arg(long)]
        settings: Option<PathBuf>,
        #[arg(long, default_value_t = 1000)]
        reps: usize,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        threads: Option<usize>,
    },
    /// Re-aggregate run directories into an operating-characteristics summary.
    Report {
        #[arg(long = "in", required = true, num_args = 1..)]
        dirs: Vec<PathBuf>,
        #[arg(long, value_enum, default_value_t = Format::Csv)]
        format: Format,
    },
    /// Interim or final analysis of an observed trial.
    Analyze {
        /// TrialData JSON.
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        settings: Option<PathBuf>,
        #[arg(long)]
        stage: Stage,
        /// Overrides the seed in the settings file.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        json: bool,
    },
    /// List the built-in scenarios.
    Scenarios {
        #[arg(long)]
        json: bool,
    },
    /// Run the HTTP service; flags override the MATS_* environment variables.
    Serve {
        #[arg(long)]
        host: Option<String>,
        #[arg(long)]
        port: Option<u16>,
        #[arg(long)]
        job_dir: Option<PathBuf>,
        #[arg(long)]
        max_parallel_jobs: Option<usize>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Csv,
    Json,
    Table,
}

fn read_config(path: Option<&Path>) -> Result<ModelConfig> {
    let cfg = match path {
        Some(p) => io::read_json(p).with_context(|| format!("reading config {}", p.display()))?,
        None => ModelConfig::default(),
    };
    cfg.validate()?;
    Ok(cfg)
}

fn read_settings(path: Option<&Path>) -> Result<McmcSettings> {
    let s = match path {
        Some(p) => io::read_json(p).with_context(|| format!("reading settings {}", p.display()))?,
        None => McmcSettings::default(),
    };
    s.validate()?;
    Ok(s)
}

fn resolve_scenario(arg: &str, config: &ModelConfig) -> Result<Scenario> {
    let reference = if builtin_scenario(arg).is_ok() {
        ScenarioRef::Builtin(arg.to_string())
    } else if Path::new(arg).exists() {
        ScenarioRef::File { file: arg.into() }
    } else {
        let names: Vec<String> = builtin_scenarios().into_iter().map(|s| s.name).collect();
        bail!(
            "`{arg}` is neither a built-in scenario ({}) nor a file",
            names.join(", ")
        );
    };
    reference
        .resolve(config)
        .with_context(|| format!("loading scenario `{arg}`"))
}

fn print_json<T: serde::Serialize + ?Sized>(value: &T) -> Result<()> {
    let mut out = std::io::stdout().lock();
    serde_json::to_writer_pretty(&mut out, value)?;
    writeln!(out)?;
    Ok(())
}

fn simulate(
    scenario: &str,
    config: Option<&Path>,
    settings: Option<&Path>,
    reps: usize,
    seed: u64,
    out: &Path,
    threads: Option<usize>,
) -> Result<()> {
    let config = read_config(config)?;
    let settings = read_settings(settings)?;
    let scenario = resolve_scenario(scenario, &config)?;
    let counter = Arc::new(AtomicUsize::new(0));
    let finished = AtomicBool::new(false);
    let show = std::io::stderr().is_terminal();
    let records = std::thread::scope(|s| {
        if show {
            s.spawn(|| {
                while !finished.load(Ordering::Relaxed) {
                    eprint!("\r{}/{reps} replicates", counter.load(Ordering::Relaxed));
                    std::thread::sleep(Duration::from_millis(250));
                }
                eprintln!("\r{reps}/{reps} replicates");
            });
        }
        let r = run_replicates(
            &scenario,
            &config,
            &settings,
            reps,
            seed,
            &RunOptions {
                threads,
                progress: Some(counter.clone()),
            },
        );
        finished.store(true, Ordering::Relaxed);
        r
    })?;
    let oc = aggregate(&scenario, &config, &settings, &records, seed)?;
    let manifest = RunManifest {
        scenario,
        config,
        settings,
        n_replicates: reps,
        seed,
    };
    io::write_run(out, &manifest, &records, &oc).with_context(|| format!("writing {}", out.display()))?;
    print!("{}", render::oc_table(std::slice::from_ref(&oc)));
    println!("written to {}", out.display());
    Ok(())
}

fn report(dirs: &[PathBuf], format: Format) -> Result<()> {
    let ocs = dirs
        .iter()
        .map(|d| io::reaggregate(d).with_context(|| format!("re-aggregating {}", d.display())))
        .collect::<Result<Vec<OperatingCharacteristics>>>()?;
    match format {
        Format::Csv => io::write_oc_csv(BufWriter::new(std::io::stdout().lock()), &ocs)?,
        Format::Json if ocs.len() == 1 => print_json(&ocs[0])?,
        Format::Json => print_json(&ocs)?,
        Format::Table => print!("{}", render::oc_table(&ocs)),
    }
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::CalibrateTau2 {
            delta,
            p2,
            grid_min,
            grid_max,
            grid_step,
            json,
        } => {
            let req = CalibrationRequest {
                delta_target: delta,
                p2_candidates: p2,
                tau2_grid: calibration::grid(grid_min, grid_max, grid_step)?,
            };
            let result = calibrate_tau2_table(&req)?;
            if json {
                print_json(&result)?;
            } else {
                print!("{}", render::calibration(&result));
            }
        }
        Command::Simulate {
            scenario,
            config,
            settings,
            reps,
            seed,
            out,
            threads,
        } => simulate(
            &scenario,
            config.as_deref(),
            settings.as_deref(),
            reps,
            seed,
            &out,
            threads,
        )?,
        Command::Report { dirs, format } => report(&dirs, format)?,
        Command::Analyze {
            data,
            config,
            settings,
            stage,
            seed,
            json,
        } => {
            let config = read_config(config.as_deref())?;
            let mut settings = read_settings(settings.as_deref())?;
            if let Some(s) = seed {
                settings.seed = s;
            }
            let data: TrialData = io::read_json(&data).with_context(|| format!("reading data {}", data.display()))?;
            let report = analyze(&data, &config, &settings, stage)?;
            if json {
                print_json(&report)?;
            } else {
                print!("{}", render::analysis(&report));
            }
        }
        Command::Scenarios { json } => {
            let list = builtin_scenarios();
            if json {
                print_json(&list)?;
            } else {
                print!("{}", render::scenarios(&list));
            }
        }
        Command::Serve {
            host,
            port,
            job_dir,
            max_parallel_jobs,
        } => {
            let mut s = mats_service::Settings::from_env().map_err(anyhow::Error::msg)?;
            if let Some(h) = host {
                s.host = h;
            }
            if let Some(p) = port {
                s.port = p;
            }
            if let Some(d) = job_dir {
                s.job_dir = Some(d);
            }
            if let Some(n) = max_parallel_jobs {
                s.max_parallel_jobs = n.max(1);
            }
            tokio::runtime::Runtime::new()?.block_on(mats_service::serve(s))?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    let serve = matches!(cli.command, Command::Serve { .. });
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(if serve { "info" } else { level }))
        .init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
