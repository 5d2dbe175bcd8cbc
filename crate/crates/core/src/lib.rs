//! Iterative learning control for lateral path tracking of a race car.
//!
//! The crate is split along the signal path of one learning experiment:
//!
//! * [`track`]: racing-line curvature, speed profiles and the learning time grid.
//! * [`vehicle`]: bicycle model, tire models, lookahead feedback and lap simulation.
//! * [`lifted`]: discrete LTV closed-loop model, its lifted matrix `P` and the
//!   monotonic convergence factor.
//! * [`ilc`]: PD and quadratically optimal learning operators `(Q, L)`.
//!
//! Everything here is `no_std` + `alloc`; file formats, the experiment harness
//! and the command line live in the `lapilc` crate.
#![cfg_attr(not(feature = "std"), no_std)]
// `!(x > 0.0)` is kept on purpose: it also rejects NaN
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;

pub mod expm;
pub mod ilc;
pub mod lifted;
pub mod track;
pub mod vehicle;

pub use ilc::{LearningOperator, OperatorKind, QilcWeights, Weight};
pub use lifted::{LiftedSystem, LtvMatrices};
pub use track::{SpeedProfile, TimeGrid, TrackProfile};
pub use vehicle::{LapRecord, SimConfig, TireModel, VehicleParams, VehicleState};

/// Gravitational acceleration used for static axle loads (m/s²).
pub const GRAVITY: f64 = 9.81;

/// Root mean square of a sample vector. Returns 0 for an empty slice.
pub fn rms(values: &[f64]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    let sum_sq: f64 = values.iter().map(|v| v * v).sum();
    num_traits::Float::sqrt(sum_sq / values.len() as f64)
}
