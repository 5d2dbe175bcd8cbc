//! Command-line front end.
//!
//! Exit codes: 0 success, 1 output I/O failure, 2 invalid configuration,
//! arguments or input file, 3 a simulated lap diverged.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use lapilc::config::ExperimentConfig;
use lapilc::harness::{
    self, build_operator, constant_speed_window, gamma_csv, gamma_sweep, lifted_dump, rms_table,
    ExportFormat, Scenario, SweepRange, SWEEP_WINDOW,
};
use lapilc::io;
use lapilc::{Error, Result};
use lapilc_core::track::{generate_speed_profile, synthetic_track};
use lapilc_core::VehicleParams;

#[derive(Parser, Debug)]
#[command(
    name = "lapilc",
    version,
    about = "Lap-to-lap learning steering control experiments"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run a multi-lap learning experiment and write the per-lap results.
    Simulate(SimulateArgs),
    /// Tabulate the convergence factor γ of the PD learner over a gain grid.
    SweepGamma(SweepArgs),
    /// Write the learning matrices Q and L of a configured learner.
    Synthesize(SynthesizeArgs),
    /// Write the built-in synthetic track as CSV.
    GenTrack(GenTrackArgs),
    /// Write the lifted matrix P and free response d of a configured lap.
    ExportLifted(ExportLiftedArgs),
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Format {
    Csv,
    Json,
}

#[derive(clap::Args, Debug)]
struct SimulateArgs {
    /// Experiment configuration (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Result file.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, value_enum, default_value = "csv")]
    format: Format,
    /// Noise seed; overrides the config.
    #[arg(long)]
    seed: Option<u64>,
    /// Stop learning after this many laps; overrides the config.
    #[arg(long)]
    stop_after: Option<usize>,
    /// Start lap 0 from a saved learned input (`k,s_m,delta_L_rad`).
    #[arg(long)]
    load_input: Option<PathBuf>,
    /// Save the learned input the next lap would apply.
    #[arg(long)]
    save_input: Option<PathBuf>,
}

#[derive(clap::Args, Debug)]
struct SweepArgs {
    /// Proportional gains as start:stop:count (rad/m).
    #[arg(long, default_value = "0:0.5:51")]
    kp_range: SweepRange,
    /// Derivative gains as start:stop:count (rad/m).
    #[arg(long, default_value = "0:0.5:51")]
    kd_range: SweepRange,
    /// Zero-phase low-pass cutoff in Hz, or `off`.
    #[arg(long, default_value = "2")]
    filter_hz: FilterArg,
    /// Constant speed of the analysis window (m/s).
    #[arg(long, default_value_t = 20.0)]
    speed: f64,
    /// Samples in the analysis window.
    #[arg(long, default_value_t = SWEEP_WINDOW)]
    n: usize,
    /// Learning sample time (s).
    #[arg(long, default_value_t = 0.1)]
    ts: f64,
    /// Use the full time-varying lap of this config instead of a
    /// constant-speed window.
    #[arg(long)]
    ltv_config: Option<PathBuf>,
    /// Output CSV `kp,kd,gamma,stable`.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, Debug)]
struct FilterArg(Option<f64>);

impl std::str::FromStr for FilterArg {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        if s.eq_ignore_ascii_case("off") {
            return Ok(FilterArg(None));
        }
        match s.parse::<f64>() {
            Ok(f) if f > 0.0 && f.is_finite() => Ok(FilterArg(Some(f))),
            _ => Err(format!(
                "'{s}' is neither a positive cutoff in Hz nor 'off'"
            )),
        }
    }
}

#[derive(clap::Args, Debug)]
struct SynthesizeArgs {
    #[arg(long)]
    config: PathBuf,
    /// Output for the filter matrix Q.
    #[arg(long)]
    q_out: PathBuf,
    /// Output for the learning matrix L.
    #[arg(long)]
    l_out: PathBuf,
}

#[derive(clap::Args, Debug)]
struct GenTrackArgs {
    #[arg(long, default_value = "synthetic_track.csv")]
    out: PathBuf,
    /// Also write a speed column generated for this peak acceleration (m/s²).
    #[arg(long)]
    acceleration: Option<f64>,
}

#[derive(clap::Args, Debug)]
struct ExportLiftedArgs {
    #[arg(long)]
    config: PathBuf,
    /// Output for P.
    #[arg(long)]
    out: PathBuf,
    /// Output for the free response d.
    #[arg(long)]
    d_out: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::Simulate(a) => simulate(a),
        Command::SweepGamma(a) => sweep(a),
        Command::Synthesize(a) => synthesize(a),
        Command::GenTrack(a) => gen_track(a),
        Command::ExportLifted(a) => export_lifted(a),
    }
}

fn print_config(config: &ExperimentConfig) {
    println!("# resolved config");
    print!("{}", config.to_toml());
    println!();
}

fn simulate(a: SimulateArgs) -> Result<()> {
    let mut config = ExperimentConfig::load(&a.config)?;
    if let Some(seed) = a.seed {
        config.noise.seed = seed;
    }
    if a.stop_after.is_some() {
        config.stop_after = a.stop_after;
    }
    config.validate()?;
    print_config(&config);
    let scenario = Scenario::from_config(&config)?;
    let initial = match &a.load_input {
        Some(path) => Some(io::read_learned_input(path, &scenario.grid)?),
        None => None,
    };
    let lifted = scenario.lifted()?;
    let op = build_operator(&config.learner, &lifted, config.sample_time)?;
    let result = harness::run_prepared(&config, &scenario, &lifted, &op, initial)?;
    print!("{}", rms_table(&result));
    if let Some(g) = result.gamma {
        println!("gamma {g:.6}");
    }
    let format = match a.format {
        Format::Csv => ExportFormat::Csv,
        Format::Json => ExportFormat::Json,
    };
    harness::export_result(&result, &a.out, format)?;
    if let Some(path) = &a.save_input {
        io::write_learned_input(path, &scenario.grid, &result.next_input)?;
    }
    Ok(())
}

fn sweep(a: SweepArgs) -> Result<()> {
    let lifted = match &a.ltv_config {
        Some(path) => {
            let config = ExperimentConfig::load(path)?;
            print_config(&config);
            Scenario::from_config(&config)?.lifted()?
        }
        None => constant_speed_window(a.speed, a.ts, a.n, &VehicleParams::default())?,
    };
    let filter = a
        .filter_hz
        .0
        .map_or_else(|| "off".to_string(), |f| f.to_string());
    println!(
        "# resolved sweep\nkp_range = \"{}\"\nkd_range = \"{}\"\nfilter_hz = \"{filter}\"\nspeed = {}\nn = {}\nts = {}\nltv = {}\n",
        a.kp_range,
        a.kd_range,
        a.speed,
        lifted.n(),
        lifted.grid.sample_time(),
        a.ltv_config.is_some()
    );
    let cells = gamma_sweep(
        &a.kp_range.values(),
        &a.kd_range.values(),
        a.filter_hz.0,
        &lifted,
    )?;
    let stable = cells.iter().filter(|c| c.stable).count();
    let best = cells
        .iter()
        .min_by(|x, y| x.gamma.total_cmp(&y.gamma))
        .expect("ranges are nonempty");
    println!(
        "{} cells, {stable} with gamma < 1; smallest gamma {:.6} at kp {} kd {}",
        cells.len(),
        best.gamma,
        best.kp,
        best.kd
    );
    if let Some(diag) = cells.iter().find_map(|c| c.diagnostic.as_ref()) {
        println!("warning: {diag}");
    }
    io::write_file(&a.out, &gamma_csv(&cells))
}

fn synthesize(a: SynthesizeArgs) -> Result<()> {
    let config = ExperimentConfig::load(&a.config)?;
    print_config(&config);
    let lifted = Scenario::from_config(&config)?.lifted()?;
    let op = build_operator(&config.learner, &lifted, config.sample_time)?;
    io::write_matrix(&a.q_out, &op.q, config.sample_time)?;
    io::write_matrix(&a.l_out, &op.l, config.sample_time)?;
    println!("wrote {}x{} Q and L", op.n(), op.n());
    Ok(())
}

fn gen_track(a: GenTrackArgs) -> Result<()> {
    let track = synthetic_track();
    println!(
        "# resolved\nout = \"{}\"\nacceleration = {}\n",
        a.out.display(),
        a.acceleration.map_or("none".to_string(), |x| x.to_string())
    );
    let speed = match a.acceleration {
        Some(acc) => {
            if !(acc.is_finite() && acc > 0.0) {
                return Err(Error::Config("acceleration must be positive".into()));
            }
            Some(generate_speed_profile(
                &track,
                acc,
                lapilc::config::DEFAULT_MAX_SPEED,
            )?)
        }
        None => None,
    };
    io::write_track(&a.out, &track, speed.as_ref())?;
    println!(
        "lap length {} m, {} stations",
        track.lap_length(),
        track.len()
    );
    Ok(())
}

fn export_lifted(a: ExportLiftedArgs) -> Result<()> {
    let config = ExperimentConfig::load(&a.config)?;
    print_config(&config);
    let scenario = Scenario::from_config(&config)?;
    let lifted = scenario.lifted()?;
    let (p, d) = lifted_dump(&lifted);
    io::write_matrix(&a.out, &p, config.sample_time)?;
    if let Some(path) = &a.d_out {
        io::write_matrix(path, &d, config.sample_time)?;
    }
    println!("wrote lifted model with N = {}", lifted.n());
    Ok(())
}
