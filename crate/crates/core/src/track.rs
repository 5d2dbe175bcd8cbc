//! Racing-line curvature and speed profiles, and the learning time grid.
//!
//! Profiles are tabulated against distance along the racing line and sampled
//! by linear interpolation. The circuit is closed: distances wrap modulo the
//! lap length.

use alloc::vec::Vec;
use core::f64::consts::FRAC_PI_2;
use core::fmt;

use num_traits::Euclid;
#[cfg(not(feature = "std"))]
#[allow(unused_imports)] // unused when a dependency links std
use num_traits::Float;

#[derive(Debug, Clone, PartialEq)]
pub enum TrackError {
    TooFewStations(usize),
    FirstStationNotZero(f64),
    NonMonotone { index: usize, station: f64 },
    NonFinite { index: usize },
    NonPositiveSpeed { index: usize, speed: f64 },
    LengthMismatch { expected: usize, found: usize },
    StationMismatch { index: usize },
    InvalidParameter(&'static str),
    Infeasible { index: usize },
}

impl fmt::Display for TrackError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TrackError::TooFewStations(n) => write!(f, "need at least 2 stations, got {n}"),
            TrackError::FirstStationNotZero(s) => write!(f, "first station must be 0, got {s}"),
            TrackError::NonMonotone { index, station } => {
                write!(
                    f,
                    "station {index} (s = {station}) is not strictly increasing"
                )
            }
            TrackError::NonFinite { index } => write!(f, "non-finite value at station {index}"),
            TrackError::NonPositiveSpeed { index, speed } => {
                write!(f, "speed at station {index} must be positive, got {speed}")
            }
            TrackError::LengthMismatch { expected, found } => {
                write!(f, "expected {expected} values, found {found}")
            }
            TrackError::StationMismatch { index } => {
                write!(f, "speed station {index} does not match the track station")
            }
            TrackError::InvalidParameter(what) => write!(f, "invalid parameter: {what}"),
            TrackError::Infeasible { index } => {
                write!(f, "speed profile infeasible at station {index}")
            }
        }
    }
}

impl core::error::Error for TrackError {}

fn validate_stations(stations: &[f64]) -> Result<(), TrackError> {
    if stations.len() < 2 {
        return Err(TrackError::TooFewStations(stations.len()));
    }
    if stations[0] != 0.0 {
        return Err(TrackError::FirstStationNotZero(stations[0]));
    }
    for (i, s) in stations.iter().enumerate() {
        if !s.is_finite() {
            return Err(TrackError::NonFinite { index: i });
        }
        if i > 0 && *s <= stations[i - 1] {
            return Err(TrackError::NonMonotone {
                index: i,
                station: *s,
            });
        }
    }
    Ok(())
}

/// Linear interpolation of a tabulated closed-circuit profile.
///
/// `s` wraps modulo `lap_length`, so `s = lap_length` samples the first
/// station. Distances past the last station (only possible when the table
/// does not end at `lap_length`) hold the last value.
pub fn sample_at_distance(stations: &[f64], values: &[f64], lap_length: f64, s: f64) -> f64 {
    debug_assert_eq!(stations.len(), values.len());
    let s = if lap_length > 0.0 {
        Euclid::rem_euclid(&s, &lap_length)
    } else {
        s
    };
    interpolate_clamped(stations, values, s)
}

/// Linear interpolation holding the end values outside the table.
pub fn interpolate_clamped(stations: &[f64], values: &[f64], s: f64) -> f64 {
    let n = stations.len();
    if n == 1 || s <= stations[0] {
        return values[0];
    }
    if s >= stations[n - 1] {
        return values[n - 1];
    }
    // first index with station > s; 1 <= hi <= n-1 here
    let hi = stations.partition_point(|&x| x <= s);
    let lo = hi - 1;
    let w = (s - stations[lo]) / (stations[hi] - stations[lo]);
    values[lo] + w * (values[hi] - values[lo])
}

/// Racing-line curvature as a function of distance along the track.
#[derive(Debug, Clone, PartialEq)]
pub struct TrackProfile {
    stations: Vec<f64>,
    curvature: Vec<f64>,
}

impl TrackProfile {
    pub fn new(stations: Vec<f64>, curvature: Vec<f64>) -> Result<Self, TrackError> {
        validate_stations(&stations)?;
        if curvature.len() != stations.len() {
            return Err(TrackError::LengthMismatch {
                expected: stations.len(),
                found: curvature.len(),
            });
        }
        if let Some(index) = curvature.iter().position(|k| !k.is_finite()) {
            return Err(TrackError::NonFinite { index });
        }
        Ok(TrackProfile {
            stations,
            curvature,
        })
    }

    /// Constant curvature over `[0, lap_length]`, tabulated at `n` stations.
    pub fn constant(curvature: f64, lap_length: f64, n: usize) -> Result<Self, TrackError> {
        if !(lap_length > 0.0) {
            return Err(TrackError::InvalidParameter("lap_length must be positive"));
        }
        let n = n.max(2);
        let stations = (0..n)
            .map(|i| lap_length * i as f64 / (n - 1) as f64)
            .collect();
        Self::new(stations, alloc::vec![curvature; n])
    }

    pub fn stations(&self) -> &[f64] {
        &self.stations
    }

    pub fn curvature(&self) -> &[f64] {
        &self.curvature
    }

    pub fn lap_length(&self) -> f64 {
        self.stations[self.stations.len() - 1]
    }

    pub fn len(&self) -> usize {
        self.stations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.stations.is_empty()
    }

    pub fn curvature_at(&self, s: f64) -> f64 {
        sample_at_distance(&self.stations, &self.curvature, self.lap_length(), s)
    }

    /// `∫₀ˢ κ ds` (rad) for the piecewise-linear curvature, continuing
    /// periodically past the end of the lap.
    pub fn heading_change(&self, s: f64) -> f64 {
        let lap = self.lap_length();
        let laps = (s / lap).floor();
        let r = s - laps * lap;
        let n = self.stations.len();
        let mut total = 0.0;
        let mut whole = 0.0;
        for i in 0..n - 1 {
            let (s0, s1) = (self.stations[i], self.stations[i + 1]);
            let (k0, k1) = (self.curvature[i], self.curvature[i + 1]);
            let segment = 0.5 * (k0 + k1) * (s1 - s0);
            whole += segment;
            if r >= s1 {
                total += segment;
            } else if r > s0 {
                let km = k0 + (k1 - k0) * (r - s0) / (s1 - s0);
                total += 0.5 * (k0 + km) * (r - s0);
            }
        }
        laps * whole + total
    }

    /// Mean curvature over `[s0, s1]`, `s0 < s1`.
    pub fn mean_curvature(&self, s0: f64, s1: f64) -> f64 {
        (self.heading_change(s1) - self.heading_change(s0)) / (s1 - s0)
    }
}

/// Reference speed as a function of distance, on the stations of a track.
#[derive(Debug, Clone)]
pub struct SpeedProfile {
    stations: Vec<f64>,
    speed: Vec<f64>,
    // speeds before any scaling and the accumulated scale factor, so that
    // repeated scaling composes exactly
    base: Vec<f64>,
    factor: f64,
}

impl PartialEq for SpeedProfile {
    fn eq(&self, other: &Self) -> bool {
        self.stations == other.stations && self.speed == other.speed
    }
}

impl SpeedProfile {
    pub fn new(track: &TrackProfile, speed: Vec<f64>) -> Result<Self, TrackError> {
        Self::from_parts(track.stations.clone(), speed, Some(track))
    }

    fn from_parts(
        stations: Vec<f64>,
        speed: Vec<f64>,
        track: Option<&TrackProfile>,
    ) -> Result<Self, TrackError> {
        validate_stations(&stations)?;
        if speed.len() != stations.len() {
            return Err(TrackError::LengthMismatch {
                expected: stations.len(),
                found: speed.len(),
            });
        }
        if let Some(track) = track {
            if track.stations.len() != stations.len() {
                return Err(TrackError::LengthMismatch {
                    expected: track.stations.len(),
                    found: stations.len(),
                });
            }
            if let Some(index) = track
                .stations
                .iter()
                .zip(&stations)
                .position(|(a, b)| a != b)
            {
                return Err(TrackError::StationMismatch { index });
            }
        }
        for (index, &v) in speed.iter().enumerate() {
            if !v.is_finite() {
                return Err(TrackError::NonFinite { index });
            }
            if v <= 0.0 {
                return Err(TrackError::NonPositiveSpeed { index, speed: v });
            }
        }
        Ok(SpeedProfile {
            stations,
            base: speed.clone(),
            speed,
            factor: 1.0,
        })
    }

    /// Constant speed on every station of `track`.
    pub fn constant(track: &TrackProfile, speed: f64) -> Result<Self, TrackError> {
        Self::new(track, alloc::vec![speed; track.len()])
    }

    pub fn stations(&self) -> &[f64] {
        &self.stations
    }

    pub fn speed(&self) -> &[f64] {
        &self.speed
    }

    pub fn lap_length(&self) -> f64 {
        self.stations[self.stations.len() - 1]
    }

    pub fn speed_at(&self, s: f64) -> f64 {
        sample_at_distance(&self.stations, &self.speed, self.lap_length(), s)
    }

    /// Largest `sqrt(a_lat² + a_long²)` at the midpoints of consecutive
    /// stations, with the speed linear in distance between stations.
    pub fn peak_combined_acceleration(&self, track: &TrackProfile) -> f64 {
        let mut peak = 0.0f64;
        for i in 0..self.stations.len() - 1 {
            let (v0, v1) = (self.speed[i], self.speed[i + 1]);
            let ds = self.stations[i + 1] - self.stations[i];
            let mid = 0.5 * (self.stations[i] + self.stations[i + 1]);
            let v = 0.5 * (v0 + v1);
            let lateral = track.curvature_at(mid) * v * v;
            let longitudinal = v * (v1 - v0) / ds;
            peak = peak.max((lateral * lateral + longitudinal * longitudinal).sqrt());
        }
        peak
    }
}

/// Friction-circle speed profile.
///
/// Speeds are capped pointwise by the lateral limit `sqrt(accel_limit/|κ|)`
/// and by `v_max`, then forward and backward passes limit the longitudinal
/// acceleration to what the friction circle leaves over. With speed and
/// curvature linear between stations, the combined acceleration at every
/// segment midpoint stays within `accel_limit`.
pub fn generate_speed_profile(
    track: &TrackProfile,
    accel_limit: f64,
    v_max: f64,
) -> Result<SpeedProfile, TrackError> {
    if !(accel_limit > 0.0) || !accel_limit.is_finite() {
        return Err(TrackError::InvalidParameter("accel_limit must be positive"));
    }
    if !(v_max > 0.0) || !v_max.is_finite() {
        return Err(TrackError::InvalidParameter("v_max must be positive"));
    }
    let n = track.len();
    let s = &track.stations;
    let kappa = &track.curvature;

    // Cap against the largest curvature on either adjacent segment so that a
    // segment with both ends at their caps is laterally feasible throughout.
    let mut speed: Vec<f64> = (0..n)
        .map(|i| {
            let mut k = kappa[i].abs();
            if i > 0 {
                k = k.max(kappa[i - 1].abs());
            }
            if i + 1 < n {
                k = k.max(kappa[i + 1].abs());
            }
            if k > 0.0 {
                (accel_limit / k).sqrt().min(v_max)
            } else {
                v_max
            }
        })
        .collect();

    // closed circuit: the first and last stations are the same point
    for _ in 0..4 {
        let closed = speed[0].min(speed[n - 1]);
        speed[0] = closed;
        speed[n - 1] = closed;
        for i in 0..n - 1 {
            let (lo, hi) = (speed[i], speed[i + 1]);
            if hi > lo {
                let k_mid = 0.5 * (kappa[i] + kappa[i + 1]);
                speed[i + 1] = max_reachable(lo, hi, k_mid, s[i + 1] - s[i], accel_limit);
            }
        }
        for i in (0..n - 1).rev() {
            let (lo, hi) = (speed[i + 1], speed[i]);
            if hi > lo {
                let k_mid = 0.5 * (kappa[i] + kappa[i + 1]);
                speed[i] = max_reachable(lo, hi, k_mid, s[i + 1] - s[i], accel_limit);
            }
        }
        if speed[0] == speed[n - 1] {
            break;
        }
    }

    if let Some(index) = speed.iter().position(|v| !(*v > 0.0) || !v.is_finite()) {
        return Err(TrackError::Infeasible { index });
    }
    SpeedProfile::new(track, speed)
}

/// Largest `v ∈ [from, cap]` reachable from `from` over `ds` while the
/// midpoint combined acceleration stays inside the circle.
fn max_reachable(from: f64, cap: f64, k_mid: f64, ds: f64, accel_limit: f64) -> f64 {
    let limit_sq = accel_limit * accel_limit;
    let excess = |v: f64| {
        let um = 0.5 * (from + v);
        let lateral = k_mid * um * um;
        let longitudinal = (v * v - from * from) / (2.0 * ds);
        lateral * lateral + longitudinal * longitudinal - limit_sq
    };
    if excess(cap) <= 0.0 {
        return cap;
    }
    let (mut lo, mut hi) = (from, cap);
    for _ in 0..100 {
        let mid = 0.5 * (lo + hi);
        if excess(mid) <= 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-14 * hi {
            break;
        }
    }
    lo
}

/// Multiplies every speed by `factor`; combined acceleration scales by
/// `factor²`. Scaling by `a` and then `b` gives exactly the same profile as
/// scaling once by `a·b`.
pub fn scale_profile(speed: &SpeedProfile, factor: f64) -> Result<SpeedProfile, TrackError> {
    if !(factor > 0.0) || !factor.is_finite() {
        return Err(TrackError::InvalidParameter(
            "scale factor must be positive",
        ));
    }
    let total = speed.factor * factor;
    let scaled: Vec<f64> = speed.base.iter().map(|v| v * total).collect();
    let mut out = SpeedProfile::from_parts(speed.stations.clone(), scaled, None)?;
    out.base = speed.base.clone();
    out.factor = total;
    Ok(out)
}

/// Learning-rate sampling of one lap: sample instants `t_k = k·T_s` for
/// `k = 0..=N` with the distance and speed reached at each.
///
/// Inputs are applied at `k = 0..N-1` and errors read at `k = 1..=N`.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeGrid {
    sample_time: f64,
    times: Vec<f64>,
    distances: Vec<f64>,
    speeds: Vec<f64>,
}

/// Integration substeps per learning sample when building a time grid.
pub const GRID_SUBSTEPS: usize = 20;

impl TimeGrid {
    /// Grid for constant speed on a straight; `n` learning samples.
    pub fn uniform(speed: f64, sample_time: f64, n: usize) -> Self {
        let times: Vec<f64> = (0..=n).map(|k| k as f64 * sample_time).collect();
        let distances = times.iter().map(|t| t * speed).collect();
        TimeGrid {
            sample_time,
            times,
            distances,
            speeds: alloc::vec![speed; n + 1],
        }
    }

    pub fn sample_time(&self) -> f64 {
        self.sample_time
    }

    /// Number of learning samples per lap, `N`.
    pub fn n(&self) -> usize {
        self.times.len() - 1
    }

    /// `t_k` for `k = 0..=N`.
    pub fn times(&self) -> &[f64] {
        &self.times
    }

    /// `s(t_k)` for `k = 0..=N`.
    pub fn distances(&self) -> &[f64] {
        &self.distances
    }

    /// `U_x(t_k)` for `k = 0..=N`.
    pub fn speeds(&self) -> &[f64] {
        &self.speeds
    }

    /// First `n` learning samples of this grid.
    pub fn truncated(&self, n: usize) -> TimeGrid {
        let keep = n.min(self.n()) + 1;
        TimeGrid {
            sample_time: self.sample_time,
            times: self.times[..keep].to_vec(),
            distances: self.distances[..keep].to_vec(),
            speeds: self.speeds[..keep].to_vec(),
        }
    }
}

/// One RK4 step of `ds/dt = U_x(s)`.
pub fn advance_distance(speed: &SpeedProfile, s: f64, h: f64) -> f64 {
    let k1 = speed.speed_at(s);
    let k2 = speed.speed_at(s + 0.5 * h * k1);
    let k3 = speed.speed_at(s + 0.5 * h * k2);
    let k4 = speed.speed_at(s + h * k3);
    s + h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
}

/// Samples one lap at `sample_time`.
///
/// `N` is the smallest sample count whose distance reaches the lap length
/// (relative tolerance 1e-9), so the last sample may lie past the line.
pub fn build_time_grid(
    track: &TrackProfile,
    speed: &SpeedProfile,
    sample_time: f64,
) -> Result<TimeGrid, TrackError> {
    if !(sample_time > 0.0) || !sample_time.is_finite() {
        return Err(TrackError::InvalidParameter("sample time must be positive"));
    }
    let lap_length = track.lap_length();
    let finish = lap_length * (1.0 - 1e-9);
    let h = sample_time / GRID_SUBSTEPS as f64;

    let mut times = alloc::vec![0.0];
    let mut distances = alloc::vec![0.0];
    let mut speeds = alloc::vec![speed.speed_at(0.0)];
    let mut s = 0.0;
    let mut k = 0usize;
    while s < finish {
        for _ in 0..GRID_SUBSTEPS {
            s = advance_distance(speed, s, h);
        }
        k += 1;
        times.push(k as f64 * sample_time);
        distances.push(s);
        speeds.push(speed.speed_at(s));
    }
    Ok(TimeGrid {
        sample_time,
        times,
        distances,
        speeds,
    })
}

/// One piece of a curvature layout: curvature varies linearly from `start`
/// to `end` over `length` (a clothoid when they differ).
#[derive(Debug, Clone, Copy, PartialEq)]
struct Piece {
    length: f64,
    start: f64,
    end: f64,
}

impl Piece {
    fn straight(length: f64) -> Self {
        Piece {
            length,
            start: 0.0,
            end: 0.0,
        }
    }

    fn ramp(length: f64, start: f64, end: f64) -> Self {
        Piece { length, start, end }
    }
}

/// Left-hand corner turning `π/2`: clothoid entry, constant-radius arc,
/// clothoid exit.
fn corner(radius: f64, clothoid: f64) -> [Piece; 3] {
    let k = 1.0 / radius;
    [
        Piece::ramp(clothoid, 0.0, k),
        Piece::ramp(radius * FRAC_PI_2 - clothoid, k, k),
        Piece::ramp(clothoid, k, 0.0),
    ]
}

/// Left-right chicane with zero net heading change.
fn chicane(radius: f64, ramp: f64, hold: f64) -> [Piece; 5] {
    let k = 1.0 / radius;
    [
        Piece::ramp(ramp, 0.0, k),
        Piece::ramp(hold, k, k),
        Piece::ramp(2.0 * ramp, k, -k),
        Piece::ramp(hold, -k, -k),
        Piece::ramp(ramp, -k, 0.0),
    ]
}

/// Position and heading after driving `pieces` from the origin heading east.
fn end_pose(pieces: &[Piece]) -> (f64, f64, f64) {
    const STEPS: usize = 2000;
    let (mut x, mut y, mut psi) = (0.0f64, 0.0f64, 0.0f64);
    for p in pieces {
        let h = p.length / STEPS as f64;
        let slope = (p.end - p.start) / p.length;
        for i in 0..STEPS {
            // heading is quadratic in s on a clothoid; integrate exactly, then
            // take position with Simpson's rule over the step
            let s0 = i as f64 * h;
            let heading = |s: f64| psi + p.start * (s - s0) + 0.5 * slope * (s * s - s0 * s0);
            let (h0, hm, h1) = (heading(s0), heading(s0 + 0.5 * h), heading(s0 + h));
            x += h / 6.0 * (h0.cos() + 4.0 * hm.cos() + h1.cos());
            y += h / 6.0 * (h0.sin() + 4.0 * hm.sin() + h1.sin());
            psi = h1;
        }
    }
    (x, y, psi)
}

/// Station spacing of the synthetic track (upper bound, m).
pub const SYNTHETIC_STATION_SPACING: f64 = 2.0;

fn synthetic_pieces() -> Vec<Piece> {
    let front: Vec<Piece> = [Piece::straight(600.0)]
        .into_iter()
        .chain(corner(60.0, 40.0))
        .chain([Piece::straight(200.0)])
        .chain(chicane(70.0, 25.0, 30.0))
        .chain([Piece::straight(220.0)])
        .chain(corner(120.0, 50.0))
        .collect();
    let middle: Vec<Piece> = corner(40.0, 30.0).into_iter().collect();
    let back: Vec<Piece> = [Piece::straight(180.0)]
        .into_iter()
        .chain(chicane(90.0, 30.0, 25.0))
        .collect();
    let last: Vec<Piece> = corner(90.0, 45.0).into_iter().collect();

    // Solve the back straight (heading west) and the final straight (heading
    // south) so the circuit closes in position as well as heading.
    let probe: Vec<Piece> = front
        .iter()
        .chain(&middle)
        .chain(&back)
        .chain(&last)
        .copied()
        .collect();
    let (x, y, _) = end_pose(&probe);
    // with zero-length closing straights the end pose is displaced by (x, y);
    // the west straight removes x, the south straight removes y
    let west = x;
    let south_extra = y;

    front
        .into_iter()
        .chain([Piece::straight(west)])
        .chain(middle)
        .chain([Piece::straight(south_extra)])
        .chain(back)
        .chain(last)
        .collect()
}

/// Deterministic closed circuit used when no measured racing line is
/// available: two long straights, four constant-radius corners with clothoid
/// transitions and two chicanes. Left turns have positive curvature.
pub fn synthetic_track() -> TrackProfile {
    let pieces = synthetic_pieces();
    let mut stations = alloc::vec![0.0];
    let mut curvature = alloc::vec![pieces[0].start];
    let mut s0 = 0.0;
    for p in &pieces {
        let count = (p.length / SYNTHETIC_STATION_SPACING).ceil().max(1.0) as usize;
        for i in 1..=count {
            let w = i as f64 / count as f64;
            stations.push(s0 + w * p.length);
            curvature.push(p.start + w * (p.end - p.start));
        }
        s0 += p.length;
    }
    TrackProfile::new(stations, curvature).expect("synthetic layout is valid")
}
