//! Planar bicycle model with lookahead lanekeeping feedback.
//!
//! State ordering is fixed as `[e, ΔΨ, r, β]`: lateral path deviation,
//! heading error, yaw rate and sideslip. Tire forces follow the convention
//! `F_y = -C_α α` in the linear regime.

use alloc::vec::Vec;
use core::fmt;

#[cfg(not(feature = "std"))]
#[allow(unused_imports)] // unused when a dependency links std
use num_traits::Float;
use rand::SeedableRng;
use rand_distr::{Distribution, Normal};
use rand_pcg::Pcg64;

use crate::track::{interpolate_clamped, SpeedProfile, TimeGrid, TrackProfile};
use crate::GRAVITY;

/// |e| beyond which a lap simulation is declared divergent (m).
pub const DIVERGENCE_LIMIT: f64 = 20.0;

#[derive(Debug, Clone, PartialEq)]
pub enum VehicleError {
    InvalidParams(&'static str),
    InvalidConfig(&'static str),
    InputLength { expected: usize, found: usize },
    Divergence { time: f64, error: f64 },
}

impl fmt::Display for VehicleError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            VehicleError::InvalidParams(what) => write!(f, "invalid vehicle parameters: {what}"),
            VehicleError::InvalidConfig(what) => write!(f, "invalid simulation config: {what}"),
            VehicleError::InputLength { expected, found } => {
                write!(f, "learned input has {found} samples, grid has {expected}")
            }
            VehicleError::Divergence { time, error } => write!(
                f,
                "lap diverged at t = {time:.3} s (|e| = {:.3} m > {DIVERGENCE_LIMIT} m)",
                error.abs()
            ),
        }
    }
}

impl core::error::Error for VehicleError {}

/// Vehicle and lanekeeping parameters. Defaults are the test vehicle's values
/// with friction coefficient 0.95.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VehicleParams {
    /// kg
    pub mass: f64,
    /// kg·m²
    pub yaw_inertia: f64,
    /// CG to front axle (m)
    pub a: f64,
    /// CG to rear axle (m)
    pub b: f64,
    /// front cornering stiffness (N/rad)
    pub cf: f64,
    /// rear cornering stiffness (N/rad)
    pub cr: f64,
    pub mu: f64,
    /// lanekeeping gain (rad/m)
    pub k_p: f64,
    /// lookahead distance (m)
    pub x_la: f64,
}

impl Default for VehicleParams {
    fn default() -> Self {
        VehicleParams {
            mass: 1500.0,
            yaw_inertia: 2250.0,
            a: 1.04,
            b: 1.42,
            cf: 160_000.0,
            cr: 180_000.0,
            mu: 0.95,
            k_p: 0.053,
            x_la: 15.2,
        }
    }
}

impl VehicleParams {
    pub fn validate(&self) -> Result<(), VehicleError> {
        let fields = [
            (self.mass, "mass"),
            (self.yaw_inertia, "yaw inertia"),
            (self.a, "a"),
            (self.b, "b"),
            (self.cf, "front cornering stiffness"),
            (self.cr, "rear cornering stiffness"),
            (self.mu, "friction coefficient"),
            (self.k_p, "lanekeeping gain"),
            (self.x_la, "lookahead distance"),
        ];
        for (value, name) in fields {
            if !(value > 0.0) || !value.is_finite() {
                return Err(VehicleError::InvalidParams(name));
            }
        }
        Ok(())
    }

    pub fn wheelbase(&self) -> f64 {
        self.a + self.b
    }

    /// Static front axle load (N).
    pub fn front_load(&self) -> f64 {
        self.mass * GRAVITY * self.b / self.wheelbase()
    }

    /// Static rear axle load (N).
    pub fn rear_load(&self) -> f64 {
        self.mass * GRAVITY * self.a / self.wheelbase()
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct VehicleState {
    /// lateral path deviation (m)
    pub e: f64,
    /// heading error (rad)
    pub heading_error: f64,
    /// rad/s
    pub yaw_rate: f64,
    /// rad
    pub sideslip: f64,
}

impl VehicleState {
    pub fn to_array(self) -> [f64; 4] {
        [self.e, self.heading_error, self.yaw_rate, self.sideslip]
    }

    pub fn from_array(x: [f64; 4]) -> Self {
        VehicleState {
            e: x[0],
            heading_error: x[1],
            yaw_rate: x[2],
            sideslip: x[3],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TireModel {
    Linear,
    Fiala,
}

/// Fiala brush tire lateral force with a single friction coefficient.
///
/// Cubic in `tan α` below the saturation angle `atan(3μF_z/C_α)`, fully
/// sliding at `-μF_z sgn α` beyond it. Evaluated on `|α|` and signed
/// afterwards so the force is exactly odd.
pub fn fiala_force(alpha: f64, c_alpha: f64, mu: f64, fz: f64) -> f64 {
    let mag = alpha.abs();
    let peak = mu * fz;
    let slide = (3.0 * peak / c_alpha).atan();
    let force = if mag < slide {
        let t = mag.tan();
        -c_alpha * t + c_alpha * c_alpha / (3.0 * peak) * t * t
            - c_alpha * c_alpha * c_alpha / (27.0 * peak * peak) * t * t * t
    } else {
        -peak
    };
    if alpha < 0.0 {
        -force
    } else if alpha > 0.0 {
        force
    } else {
        0.0
    }
}

/// Saturation slip angle of the Fiala model (rad).
pub fn fiala_slide_angle(c_alpha: f64, mu: f64, fz: f64) -> f64 {
    (3.0 * mu * fz / c_alpha).atan()
}

pub fn linear_force(alpha: f64, c_alpha: f64) -> f64 {
    -c_alpha * alpha
}

/// Front and rear slip angles `(α_F, α_R)`.
pub fn slip_angles(
    state: &VehicleState,
    steer: f64,
    speed: f64,
    params: &VehicleParams,
) -> (f64, f64) {
    let front = state.sideslip + params.a * state.yaw_rate / speed - steer;
    let rear = state.sideslip - params.b * state.yaw_rate / speed;
    (front, rear)
}

/// Lookahead lanekeeping steer `-k_P (e + x_LA ΔΨ)`.
pub fn lookahead_feedback(e: f64, heading_error: f64, params: &VehicleParams) -> f64 {
    -params.k_p * (e + params.x_la * heading_error)
}

/// Steady-state steer for curvature `kappa` at `speed`: kinematic term plus
/// the understeer-gradient term.
pub fn feedforward_steer(kappa: f64, speed: f64, params: &VehicleParams) -> f64 {
    let l = params.wheelbase();
    let understeer = params.mass / l * (params.b / params.cf - params.a / params.cr);
    kappa * l + kappa * speed * speed * understeer
}

/// Time derivative of the state under total road-wheel steer `steer`.
pub fn derivatives(
    state: &VehicleState,
    steer: f64,
    speed: f64,
    kappa: f64,
    params: &VehicleParams,
    tire: TireModel,
) -> VehicleState {
    let (alpha_f, alpha_r) = slip_angles(state, steer, speed, params);
    let (fyf, fyr) = match tire {
        TireModel::Linear => (
            linear_force(alpha_f, params.cf),
            linear_force(alpha_r, params.cr),
        ),
        TireModel::Fiala => (
            fiala_force(alpha_f, params.cf, params.mu, params.front_load()),
            fiala_force(alpha_r, params.cr, params.mu, params.rear_load()),
        ),
    };
    VehicleState {
        e: speed * (state.sideslip + state.heading_error),
        heading_error: state.yaw_rate - speed * kappa,
        yaw_rate: (params.a * fyf - params.b * fyr) / params.yaw_inertia,
        sideslip: (fyf + fyr) / (params.mass * speed) - state.yaw_rate,
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimConfig {
    /// RK4 step (s); must divide the learning sample time.
    pub inner_dt: f64,
    pub tire_model: TireModel,
    pub include_feedforward: bool,
    /// Standard deviation of Gaussian noise on recorded errors (m); 0 disables.
    pub sensor_noise_std: f64,
    pub noise_seed: u64,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            inner_dt: 0.005,
            tire_model: TireModel::Fiala,
            include_feedforward: false,
            sensor_noise_std: 0.0,
            noise_seed: 0,
        }
    }
}

impl SimConfig {
    /// Inner steps per learning sample.
    pub fn substeps(&self, sample_time: f64) -> Result<usize, VehicleError> {
        if !(self.inner_dt > 0.0) || !self.inner_dt.is_finite() {
            return Err(VehicleError::InvalidConfig("inner_dt must be positive"));
        }
        if !(self.sensor_noise_std >= 0.0) {
            return Err(VehicleError::InvalidConfig(
                "noise std must be non-negative",
            ));
        }
        let ratio = sample_time / self.inner_dt;
        let steps = ratio.round();
        if steps < 1.0 || (ratio - steps).abs() > 1e-9 * ratio {
            return Err(VehicleError::InvalidConfig(
                "inner_dt must divide the learning sample time",
            ));
        }
        Ok(steps as usize)
    }
}

/// One lap of sampled tracking data.
#[derive(Debug, Clone, PartialEq)]
pub struct LapRecord {
    pub iteration: usize,
    /// `e(1)..e(N)` (m)
    pub errors: Vec<f64>,
    /// `δ^L(0)..δ^L(N-1)` (rad)
    pub inputs: Vec<f64>,
    pub rms_error: f64,
    pub peak_error: f64,
}

impl LapRecord {
    pub fn new(iteration: usize, errors: Vec<f64>, inputs: Vec<f64>) -> Self {
        let rms_error = crate::rms(&errors);
        let peak_error = errors.iter().fold(0.0f64, |m, e| m.max(e.abs()));
        LapRecord {
            iteration,
            errors,
            inputs,
            rms_error,
            peak_error,
        }
    }
}

/// Adds seeded zero-mean Gaussian noise in place.
pub fn add_sensor_noise(errors: &mut [f64], std: f64, seed: u64) {
    if std <= 0.0 {
        return;
    }
    let mut rng = Pcg64::seed_from_u64(seed);
    let normal = Normal::new(0.0, std).expect("finite positive std");
    for e in errors {
        *e += normal.sample(&mut rng);
    }
}

/// Distance-indexed lookup of a per-sample learned input.
///
/// Sample `k` is stored at the distance halfway through its hold interval,
/// `(s(t_k) + s(t_{k+1}))/2`, so linear interpolation between stations
/// tracks the sample-and-hold signal of the discrete model to second order.
#[derive(Debug, Clone)]
pub struct LearnedLookup<'a> {
    stations: Vec<f64>,
    values: &'a [f64],
}

impl<'a> LearnedLookup<'a> {
    pub fn new(grid: &TimeGrid, values: &'a [f64]) -> Result<Self, VehicleError> {
        let n = grid.n();
        if values.len() != n {
            return Err(VehicleError::InputLength {
                expected: n,
                found: values.len(),
            });
        }
        Ok(LearnedLookup {
            stations: learned_stations(grid),
            values,
        })
    }

    pub fn at(&self, s: f64) -> f64 {
        if self.values.is_empty() {
            return 0.0;
        }
        interpolate_clamped(&self.stations, self.values, s)
    }
}

/// Lookup-table distances of the learned input samples of `grid`.
pub fn learned_stations(grid: &TimeGrid) -> Vec<f64> {
    grid.distances()
        .windows(2)
        .map(|w| 0.5 * (w[0] + w[1]))
        .collect()
}

/// Simulates one lap of the closed loop and samples `e` at `t_1..t_N`.
///
/// Every lap starts from the zero state. The vehicle follows the speed
/// profile exactly; the total steer is lookahead feedback plus the learned
/// input looked up by distance plus, optionally, steady-state feedforward.
#[allow(clippy::too_many_arguments)]
pub fn simulate_lap(
    track: &TrackProfile,
    speed: &SpeedProfile,
    grid: &TimeGrid,
    params: &VehicleParams,
    sim: &SimConfig,
    learned: &[f64],
    iteration: usize,
) -> Result<LapRecord, VehicleError> {
    params.validate()?;
    let substeps = sim.substeps(grid.sample_time())?;
    let lookup = LearnedLookup::new(grid, learned)?;
    let h = grid.sample_time() / substeps as f64;

    let rate = |x: &[f64; 5]| -> [f64; 5] {
        let s = x[4];
        let u = speed.speed_at(s);
        let kappa = track.curvature_at(s);
        let mut steer = lookahead_feedback(x[0], x[1], params) + lookup.at(s);
        if sim.include_feedforward {
            steer += feedforward_steer(kappa, u, params);
        }
        let state = VehicleState::from_array([x[0], x[1], x[2], x[3]]);
        let d = derivatives(&state, steer, u, kappa, params, sim.tire_model);
        [d.e, d.heading_error, d.yaw_rate, d.sideslip, u]
    };

    let mut x = [0.0f64; 5];
    let mut errors = Vec::with_capacity(grid.n());
    for k in 0..grid.n() {
        for step in 0..substeps {
            x = rk4_step(&rate, &x, h);
            if !(x[0].abs() <= DIVERGENCE_LIMIT) {
                let time = grid.times()[k] + (step + 1) as f64 * h;
                return Err(VehicleError::Divergence { time, error: x[0] });
            }
        }
        errors.push(x[0]);
    }
    add_sensor_noise(&mut errors, sim.sensor_noise_std, sim.noise_seed);
    Ok(LapRecord::new(iteration, errors, learned.to_vec()))
}

fn rk4_step<F>(f: &F, x: &[f64; 5], h: f64) -> [f64; 5]
where
    F: Fn(&[f64; 5]) -> [f64; 5],
{
    let offset = |a: &[f64; 5], k: &[f64; 5], c: f64| {
        let mut out = *a;
        for i in 0..5 {
            out[i] += c * k[i];
        }
        out
    };
    let k1 = f(x);
    let k2 = f(&offset(x, &k1, 0.5 * h));
    let k3 = f(&offset(x, &k2, 0.5 * h));
    let k4 = f(&offset(x, &k3, h));
    let mut out = *x;
    for i in 0..5 {
        out[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
    }
    out
}
