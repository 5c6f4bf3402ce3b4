use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use orca_core::fleet::{Fleet, Label};
use orca_core::manager::{
    benchmark_fleet, benchmark_models, env_seed, ingest_accounting, load_state, report_costs, save_state,
    BenchmarkSizes, Engine, ManagerError, Scenario,
};
use orca_core::telemetry::log::{read_samples, write_samples};
use orca_core::{BehaviorLevel, DeviceId, OrcaConfig};

const TELEMETRY_LOG: &str = "telemetry.log";
const LABELS_LOG: &str = "labels.log";

/// Owner-centric edge-IoT management: behavior models, group synthesis and
/// response over a simulated device fleet.
///
/// `ORCA_SEED` overrides the seed of the config or scenario.
#[derive(Parser)]
#[command(name = "orca", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Validate a config and scaffold an untrained state directory.
    Init {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value = "orca-state")]
        state: PathBuf,
    },
    /// Run the fleet simulator and write telemetry and ground truth.
    Simulate {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long)]
        ticks: u64,
        #[arg(long)]
        out: PathBuf,
        /// Fleet source when the scenario carries none.
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Train every registered model and save the state directory.
    Train {
        #[arg(long)]
        config: PathBuf,
        /// Directory with a telemetry log from `simulate`; without it, models
        /// train on fresh simulator normal-regime data.
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long, default_value = "orca-state")]
        state: PathBuf,
    },
    /// Run management cycles and print one report line per cycle.
    Run {
        #[arg(long)]
        ticks: u64,
        #[arg(long, default_value = "orca-state")]
        state: PathBuf,
    },
    /// Print the model registry, and optionally the cost table.
    Report {
        /// Benchmark all four families on the reference shapes.
        #[arg(long)]
        costs: bool,
        #[arg(long, default_value = "orca-state")]
        state: PathBuf,
    },
    /// Append fault injections to a saved fleet.
    Inject {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long, default_value = "orca-state")]
        state: PathBuf,
    },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match execute(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("orca: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

fn execute(command: Command) -> Result<(), ManagerError> {
    let mut out = std::io::stdout().lock();
    match command {
        Command::Init { config, state } => {
            let engine = Engine::new(OrcaConfig::load(&config)?, env_seed()?)?;
            save_state(&engine, &state)?;
            let r = &engine.registry;
            writeln!(
                out,
                "initialized {}: {} devices, {} registry entries ({} types x up to {} levels), seed {}",
                state.display(),
                engine.fleet.devices.len(),
                r.len(),
                r.type_count(),
                r.max_levels(),
                engine.seed
            )?;
        }
        Command::Simulate { scenario, ticks, out: dir, config } => simulate(&scenario, ticks, &dir, config.as_deref())?,
        Command::Train { config, data, state } => {
            let mut engine = Engine::new(OrcaConfig::load(&config)?, env_seed()?)?;
            let reports = match data {
                Some(dir) => {
                    let samples = read_telemetry(&engine, &dir.join(TELEMETRY_LOG))?;
                    engine.train_from_samples(samples)?
                }
                None => engine.train_all()?,
            };
            save_state(&engine, &state)?;
            for ((t, l), rep) in &reports {
                let family = engine.registry.model(t, *l)?.family();
                let holdout =
                    rep.epochs.last().map(|e| format!(" holdout_error={:.6}", e.holdout_error)).unwrap_or_default();
                writeln!(
                    out,
                    "trained {t}/{l} {family} train={} holdout={}{holdout}",
                    rep.train_samples, rep.holdout_samples
                )?;
            }
        }
        Command::Run { ticks, state } => {
            let mut engine = load_state(&state)?;
            for r in engine.run(ticks)? {
                writeln!(out, "{r}")?;
            }
            save_state(&engine, &state)?;
        }
        Command::Report { costs, state } => {
            let engine = load_state(&state)?;
            writeln!(out, "type,level,family,trained_version")?;
            for ((t, l), e) in &engine.registry.entries {
                let version = e.model.as_ref().map_or("untrained".to_owned(), |m| m.version().to_string());
                writeln!(out, "{t},{l},{},{version}", e.family())?;
            }
            if costs {
                let models = benchmark_models(engine.seed, BenchmarkSizes::default())?;
                let bench = Fleet::build(&benchmark_fleet(), engine.seed)?;
                writeln!(out, "{}", report_costs(&models, ingest_accounting(&bench))?)?;
                writeln!(out, "this fleet: {}", ingest_accounting(&engine.fleet))?;
            }
        }
        Command::Inject { scenario, state } => {
            let mut engine = load_state(&state)?;
            let sc = Scenario::load(&scenario)?;
            for f in &sc.injections {
                engine.inject(f)?;
            }
            save_state(&engine, &state)?;
            writeln!(out, "appended {} injections to {}", sc.injections.len(), state.display())?;
        }
    }
    Ok(())
}

fn simulate(scenario: &Path, ticks: u64, dir: &Path, config: Option<&Path>) -> Result<(), ManagerError> {
    let sc = Scenario::load(scenario)?;
    let cfg = config.map(OrcaConfig::load).transpose()?;
    let fleet_cfg = match (&sc.fleet, &cfg) {
        (Some(f), _) => f.clone(),
        (None, Some(c)) => c.fleet.clone(),
        (None, None) => return Err(ManagerError::Config("scenario has no fleet; pass --config".into())),
    };
    let seed = env_seed()?.or(sc.seed).or(cfg.as_ref().map(|c| c.seed)).unwrap_or(0);
    let mut fleet = Fleet::build(&fleet_cfg, seed)?;
    for f in &sc.injections {
        fleet.inject(f)?;
    }
    fs::create_dir_all(dir)?;
    let mut telemetry = BufWriter::new(File::create(dir.join(TELEMETRY_LOG))?);
    let mut labels = BufWriter::new(File::create(dir.join(LABELS_LOG))?);
    let mut samples = 0;
    for tick in 0..ticks {
        let step = fleet.step(tick)?;
        samples += step.telemetry.len();
        write_samples(&mut telemetry, &step.telemetry)?;
        for (id, label) in fleet.ground_truth(tick) {
            if label == Label::Anomalous {
                writeln!(labels, "{tick},{id},anomalous")?;
            }
        }
    }
    telemetry.flush()?;
    labels.flush()?;
    println!(
        "simulated {ticks} ticks of {} devices (seed {seed}): {samples} samples in {}",
        fleet.devices.len(),
        dir.display()
    );
    Ok(())
}

fn read_telemetry(engine: &Engine, path: &Path) -> Result<Vec<orca_core::Sample>, ManagerError> {
    let mut sequence: BTreeMap<(DeviceId, BehaviorLevel), bool> = BTreeMap::new();
    for d in &engine.fleet.devices {
        for s in &engine.fleet.profile_of(d).emits {
            sequence.insert((d.id.clone(), s.level()), s.time_series());
        }
    }
    let file = File::open(path).map_err(|e| ManagerError::Data(format!("{}: {e}", path.display())))?;
    Ok(read_samples(BufReader::new(file), |id, level| sequence.get(&(id.clone(), level)).copied())?)
}
