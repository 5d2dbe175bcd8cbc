//! Multi-lap learning experiments, plant comparisons and γ sweeps.

use std::fmt::Write as _;
use std::path::Path;
use std::time::{Duration, Instant};

use lapilc_core::ilc::{pd_operator, qilc_operator, update_input, LearningOperator};
use lapilc_core::lifted::{convergence_factor, LiftedSystem, LtvMatrices};
use lapilc_core::track::{
    build_time_grid, generate_speed_profile, scale_profile, synthetic_track, SpeedProfile,
    TimeGrid, TrackProfile,
};
use lapilc_core::vehicle::{
    add_sensor_noise, feedforward_steer, simulate_lap, LapRecord, SimConfig, VehicleError,
    VehicleParams,
};
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::config::{ExperimentConfig, LearnerConfig, Plant, TrackSource, FORMAT_VERSION};
use crate::error::{Error, Result};
use crate::io::{self, fmt_f64};

/// Largest lap size for which an experiment also reports γ.
pub const GAMMA_MAX_SAMPLES: usize = 400;

/// Default size of the constant-speed window used by γ sweeps.
pub const SWEEP_WINDOW: usize = 400;

/// Track, speed profile, time grid and linear model shared by every lap of
/// an experiment.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub track: TrackProfile,
    pub speed: SpeedProfile,
    pub grid: TimeGrid,
    pub params: VehicleParams,
    pub ltv: LtvMatrices,
}

impl Scenario {
    pub fn from_config(config: &ExperimentConfig) -> Result<Self> {
        config.validate()?;
        let (track, speed) = match &config.track {
            TrackSource::Synthetic => {
                let track = synthetic_track();
                let speed = generate_speed_profile(&track, config.acceleration, config.max_speed)?;
                (track, speed)
            }
            TrackSource::File { path, use_speed } => {
                let table = io::read_track(path)?;
                let speed = match (table.speed, use_speed) {
                    (Some(base), true) => {
                        let peak = base.peak_combined_acceleration(&table.track);
                        if !(peak > 0.0) {
                            return Err(Error::input(path, "speed column implies no acceleration"));
                        }
                        scale_profile(&base, (config.acceleration / peak).sqrt())?
                    }
                    (None, true) => return Err(Error::input(path, "no speed_mps column")),
                    (_, false) => {
                        generate_speed_profile(&table.track, config.acceleration, config.max_speed)?
                    }
                };
                (table.track, speed)
            }
        };
        let grid = build_time_grid(&track, &speed, config.sample_time)?;
        Self::new(track, speed, grid, VehicleParams::default())
    }

    pub fn new(
        track: TrackProfile,
        speed: SpeedProfile,
        grid: TimeGrid,
        params: VehicleParams,
    ) -> Result<Self> {
        let ltv = LtvMatrices::build(&grid, &track, &speed, &params)?;
        Ok(Scenario {
            track,
            speed,
            grid,
            params,
            ltv,
        })
    }

    pub fn lifted(&self) -> Result<LiftedSystem> {
        Ok(LiftedSystem::from_ltv(&self.ltv, self.grid.clone())?)
    }

    /// Feedforward steer held over each sample, evaluated where the sample
    /// starts.
    pub fn feedforward_samples(&self) -> Vec<f64> {
        (0..self.grid.n())
            .map(|k| {
                let s = self.grid.distances()[k];
                feedforward_steer(
                    self.track.curvature_at(s),
                    self.grid.speeds()[k],
                    &self.params,
                )
            })
            .collect()
    }
}

/// Learning operator for `learner` on the lap described by `lifted`.
pub fn build_operator(
    learner: &LearnerConfig,
    lifted: &LiftedSystem,
    sample_time: f64,
) -> Result<LearningOperator> {
    Ok(match learner {
        LearnerConfig::Pd { kp, kd, cutoff_hz } => {
            pd_operator(*kp, *kd, lifted.n(), *cutoff_hz, sample_time)?
        }
        LearnerConfig::Qilc { .. } => {
            let w = learner.qilc_weights().expect("Q-ILC learner");
            qilc_operator(&lifted.p, &w)?
        }
    })
}

/// Per-lap noise seed derived from the experiment seed.
pub fn lap_seed(seed: u64, lap: usize) -> u64 {
    seed.wrapping_add((lap as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15))
}

fn run_lap(
    config: &ExperimentConfig,
    scenario: &Scenario,
    feedforward: &[f64],
    input: &[f64],
    lap: usize,
) -> Result<LapRecord> {
    let seed = lap_seed(config.noise.seed, lap);
    match config.plant {
        Plant::Linear => {
            let total: Vec<f64> = if config.feedforward {
                input.iter().zip(feedforward).map(|(a, b)| a + b).collect()
            } else {
                input.to_vec()
            };
            let mut errors = scenario.ltv.rollout(&total)?;
            add_sensor_noise(&mut errors, config.noise.std, seed);
            Ok(LapRecord::new(lap, errors, input.to_vec()))
        }
        Plant::Nonlinear => {
            let sim = SimConfig {
                tire_model: config.tire.into(),
                include_feedforward: config.feedforward,
                sensor_noise_std: config.noise.std,
                noise_seed: seed,
                ..SimConfig::default()
            };
            simulate_lap(
                &scenario.track,
                &scenario.speed,
                &scenario.grid,
                &scenario.params,
                &sim,
                input,
                lap,
            )
            .map_err(|e| match e {
                VehicleError::Divergence { .. } => Error::Divergence { lap, source: e },
                other => Error::Vehicle(other),
            })
        }
    }
}

#[derive(Debug, Clone)]
pub struct ExperimentResult {
    pub config: ExperimentConfig,
    pub laps: Vec<LapRecord>,
    pub rms_by_lap: Vec<f64>,
    /// Convergence factor of the operator on the linear model, when the lap
    /// has at most [`GAMMA_MAX_SAMPLES`] samples.
    pub gamma: Option<f64>,
    /// Distance at each error sample `t_1..t_N` (m).
    pub stations: Vec<f64>,
    /// Learned input that the next lap would apply.
    pub next_input: Vec<f64>,
    pub wall_time: Duration,
}

pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentResult> {
    run_experiment_from(config, None)
}

/// Runs an experiment, optionally starting lap 0 from a saved learned input
/// instead of zero.
pub fn run_experiment_from(
    config: &ExperimentConfig,
    initial_input: Option<Vec<f64>>,
) -> Result<ExperimentResult> {
    let scenario = Scenario::from_config(config)?;
    let lifted = scenario.lifted()?;
    let op = build_operator(&config.learner, &lifted, config.sample_time)?;
    run_prepared(config, &scenario, &lifted, &op, initial_input)
}

/// Runs the lap loop on an already built scenario and operator.
pub fn run_prepared(
    config: &ExperimentConfig,
    scenario: &Scenario,
    lifted: &LiftedSystem,
    op: &LearningOperator,
    initial_input: Option<Vec<f64>>,
) -> Result<ExperimentResult> {
    config.validate()?;
    let start = Instant::now();
    let n = scenario.grid.n();
    if op.n() != n {
        return Err(Error::Config(format!(
            "operator has {} samples, the lap has {n}",
            op.n()
        )));
    }
    let mut input = initial_input.unwrap_or_else(|| vec![0.0; n]);
    if input.len() != n {
        return Err(Error::Config(format!(
            "initial input has {} samples, the lap has {n}",
            input.len()
        )));
    }
    let feedforward = scenario.feedforward_samples();
    let mut laps = Vec::with_capacity(config.laps);
    for lap in 0..config.laps {
        let record = run_lap(config, scenario, &feedforward, &input, lap)?;
        let learning = config.stop_after.is_none_or(|m| lap < m);
        if learning {
            let next = update_input(
                op,
                &DVector::from_column_slice(&input),
                &DVector::from_column_slice(&record.errors),
            )?;
            input = next.as_slice().to_vec();
        }
        laps.push(record);
    }
    let gamma = if n <= GAMMA_MAX_SAMPLES {
        convergence_factor(&lifted.p, &op.q, &op.l).ok()
    } else {
        None
    };
    Ok(ExperimentResult {
        config: config.clone(),
        rms_by_lap: laps.iter().map(|l| l.rms_error).collect(),
        laps,
        gamma,
        stations: scenario.grid.distances()[1..].to_vec(),
        next_input: input,
        wall_time: start.elapsed(),
    })
}

/// Two runs of one configuration that differ only in the plant.
#[derive(Debug, Clone)]
pub struct PlantComparison {
    pub linear: ExperimentResult,
    pub nonlinear: ExperimentResult,
    /// Nonlinear minus linear RMS on each lap (m).
    pub rms_delta: Vec<f64>,
}

pub fn compare_plants(config: &ExperimentConfig) -> Result<PlantComparison> {
    let scenario = Scenario::from_config(config)?;
    let lifted = scenario.lifted()?;
    let op = build_operator(&config.learner, &lifted, config.sample_time)?;
    let run = |plant| {
        let c = ExperimentConfig {
            plant,
            ..config.clone()
        };
        run_prepared(&c, &scenario, &lifted, &op, None)
    };
    let linear = run(Plant::Linear)?;
    let nonlinear = run(Plant::Nonlinear)?;
    let rms_delta = nonlinear
        .rms_by_lap
        .iter()
        .zip(&linear.rms_by_lap)
        .map(|(a, b)| a - b)
        .collect();
    Ok(PlantComparison {
        linear,
        nonlinear,
        rms_delta,
    })
}

/// Repeats `config` at each acceleration level.
pub fn run_acceleration_levels(
    config: &ExperimentConfig,
    levels: &[f64],
) -> Result<Vec<ExperimentResult>> {
    levels
        .iter()
        .map(|&acceleration| {
            run_experiment(&ExperimentConfig {
                acceleration,
                ..config.clone()
            })
        })
        .collect()
}

pub const DEFAULT_ACCELERATION_LEVELS: [f64; 4] = [2.0, 4.0, 6.0, 8.0];

/// `start:stop:count` grid of evenly spaced values.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepRange {
    pub start: f64,
    pub stop: f64,
    pub count: usize,
}

impl SweepRange {
    pub fn values(&self) -> Vec<f64> {
        if self.count == 1 {
            return vec![self.start];
        }
        let step = (self.stop - self.start) / (self.count - 1) as f64;
        (0..self.count)
            .map(|i| {
                if i + 1 == self.count {
                    self.stop
                } else {
                    self.start + step * i as f64
                }
            })
            .collect()
    }
}

impl std::str::FromStr for SweepRange {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        let parts: Vec<&str> = s.split(':').collect();
        let [a, b, n] = parts.as_slice() else {
            return Err(format!("'{s}' is not of the form start:stop:count"));
        };
        let start: f64 = a
            .trim()
            .parse()
            .map_err(|_| format!("bad start in '{s}'"))?;
        let stop: f64 = b.trim().parse().map_err(|_| format!("bad stop in '{s}'"))?;
        let count: usize = n
            .trim()
            .parse()
            .map_err(|_| format!("bad count in '{s}'"))?;
        if !start.is_finite() || !stop.is_finite() {
            return Err(format!("'{s}' has a non-finite bound"));
        }
        if count == 0 {
            return Err(format!("'{s}' has zero points"));
        }
        Ok(SweepRange { start, stop, count })
    }
}

impl std::fmt::Display for SweepRange {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}:{}:{}", self.start, self.stop, self.count)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GammaCell {
    pub kp: f64,
    pub kd: f64,
    /// Infinite when γ could not be computed.
    pub gamma: f64,
    pub stable: bool,
    pub diagnostic: Option<String>,
}

/// Lifted model of `n` samples at constant `speed` on a straight.
pub fn constant_speed_window(
    speed: f64,
    sample_time: f64,
    n: usize,
    params: &VehicleParams,
) -> Result<LiftedSystem> {
    if !(speed > 0.0) || !speed.is_finite() {
        return Err(Error::Config("speed must be positive".into()));
    }
    if n == 0 {
        return Err(Error::Config("window must have at least one sample".into()));
    }
    let grid = TimeGrid::uniform(speed, sample_time, n);
    let length = speed * sample_time * (n as f64 + 1.0);
    let track = TrackProfile::constant(0.0, length, 2)?;
    let profile = SpeedProfile::constant(&track, speed)?;
    Ok(lapilc_core::lifted::build_lifted(
        &grid, &track, &profile, params,
    )?)
}

/// γ of the PD operator over a `kp × kd` grid, `kp` varying slowest.
pub fn gamma_sweep(
    kp: &[f64],
    kd: &[f64],
    cutoff_hz: Option<f64>,
    lifted: &LiftedSystem,
) -> Result<Vec<GammaCell>> {
    let n = lifted.n();
    let ts = lifted.grid.sample_time();
    let q = pd_operator(0.0, 0.0, n, cutoff_hz, ts)?.q;
    let mut cells = Vec::with_capacity(kp.len() * kd.len());
    for &p in kp {
        for &d in kd {
            let l = pd_operator(p, d, n, None, ts)?.l;
            let cell = match convergence_factor(&lifted.p, &q, &l) {
                Ok(gamma) => GammaCell {
                    kp: p,
                    kd: d,
                    gamma,
                    stable: gamma < 1.0,
                    diagnostic: None,
                },
                Err(e) => GammaCell {
                    kp: p,
                    kd: d,
                    gamma: f64::INFINITY,
                    stable: false,
                    diagnostic: Some(e.to_string()),
                },
            };
            cells.push(cell);
        }
    }
    Ok(cells)
}

pub fn gamma_csv(cells: &[GammaCell]) -> String {
    let mut out = format!("# format_version: {FORMAT_VERSION}\nkp,kd,gamma,stable\n");
    for c in cells {
        let _ = writeln!(
            out,
            "{},{},{},{}",
            fmt_f64(c.kp),
            fmt_f64(c.kd),
            fmt_f64(c.gamma),
            c.stable
        );
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExportFormat {
    Csv,
    Json,
}

/// Serialized form of an [`ExperimentResult`]. Wall time is left out so the
/// file depends only on the configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultFile {
    pub format_version: u32,
    pub config: ExperimentConfig,
    pub rms_by_lap: Vec<f64>,
    pub gamma: Option<f64>,
    pub stations: Vec<f64>,
    pub laps: Vec<LapFile>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LapFile {
    pub iteration: usize,
    pub rms_error: f64,
    pub peak_error: f64,
    pub errors: Vec<f64>,
    pub inputs: Vec<f64>,
}

impl From<&ExperimentResult> for ResultFile {
    fn from(r: &ExperimentResult) -> Self {
        ResultFile {
            format_version: FORMAT_VERSION,
            config: r.config.clone(),
            rms_by_lap: r.rms_by_lap.clone(),
            gamma: r.gamma,
            stations: r.stations.clone(),
            laps: r
                .laps
                .iter()
                .map(|l| LapFile {
                    iteration: l.iteration,
                    rms_error: l.rms_error,
                    peak_error: l.peak_error,
                    errors: l.errors.clone(),
                    inputs: l.inputs.clone(),
                })
                .collect(),
        }
    }
}

/// One row per lap and sample: `lap,k,s_m,e_m,delta_L_rad`. Row `k` holds
/// the error measured at `t_k` and the learned input held over the sample
/// interval that ends there.
pub fn result_csv(result: &ExperimentResult) -> String {
    let mut out = format!("# format_version: {FORMAT_VERSION}\nlap,k,s_m,e_m,delta_L_rad\n");
    for lap in &result.laps {
        for (i, (e, d)) in lap.errors.iter().zip(&lap.inputs).enumerate() {
            let _ = writeln!(
                out,
                "{},{},{},{},{}",
                lap.iteration,
                i + 1,
                fmt_f64(result.stations[i]),
                fmt_f64(*e),
                fmt_f64(*d)
            );
        }
    }
    out
}

pub fn result_json(result: &ExperimentResult) -> String {
    let mut s = serde_json::to_string_pretty(&ResultFile::from(result)).expect("result serializes");
    s.push('\n');
    s
}

pub fn export_result(result: &ExperimentResult, path: &Path, format: ExportFormat) -> Result<()> {
    let text = match format {
        ExportFormat::Csv => result_csv(result),
        ExportFormat::Json => result_json(result),
    };
    io::write_file(path, &text)
}

pub fn load_result(path: &Path) -> Result<ResultFile> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::input(path, e))?;
    let file: ResultFile = serde_json::from_str(&text).map_err(|e| Error::input(path, e))?;
    if file.format_version != FORMAT_VERSION {
        return Err(Error::input(
            path,
            format!("format_version {} is not supported", file.format_version),
        ));
    }
    Ok(file)
}

/// Per-lap RMS table for terminal output.
pub fn rms_table(result: &ExperimentResult) -> String {
    let mut out = String::from("lap  rms_m        peak_m\n");
    for lap in &result.laps {
        let _ = writeln!(
            out,
            "{:<4} {:<12.6e} {:.6e}",
            lap.iteration, lap.rms_error, lap.peak_error
        );
    }
    out
}

/// `P` and `d` (as an `N × 1` matrix) for the matrix dump format.
pub fn lifted_dump(lifted: &LiftedSystem) -> (DMatrix<f64>, DMatrix<f64>) {
    (
        lifted.p.clone(),
        DMatrix::from_column_slice(lifted.n(), 1, lifted.d.as_slice()),
    )
}
