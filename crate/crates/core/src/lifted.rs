//! Discrete LTV closed-loop model and its lifted-domain representation.
//!
//! With lookahead feedback in the loop and linear tires, the response of the
//! lateral error to the learned steering input over one lap is the affine map
//! `e = P δ + d`, with `e = [e(1) .. e(N)]`, `δ = [δ(0) .. δ(N-1)]` and `P`
//! lower triangular.

use alloc::vec::Vec;
use core::fmt;

use nalgebra::{DMatrix, DVector, Matrix4, RowVector4, Vector4};

use crate::expm::expm;
use crate::track::{advance_distance, SpeedProfile, TimeGrid, TrackProfile, GRID_SUBSTEPS};
use crate::vehicle::{VehicleError, VehicleParams};

/// Diagonal magnitude of `P` below which it is treated as singular.
pub const SINGULAR_DIAGONAL: f64 = 1e-14;

/// Sub-intervals per learning sample used by [`LtvMatrices::build`].
pub const DISCRETIZATION_SUBSTEPS: usize = 4;

const _: () = assert!(GRID_SUBSTEPS.is_multiple_of(DISCRETIZATION_SUBSTEPS));

#[derive(Debug, Clone, PartialEq)]
pub enum LiftedError {
    Params(VehicleError),
    NonPositiveSpeed { sample: usize },
    Singular { index: usize, value: f64 },
    Dimension { expected: usize, found: usize },
    Svd,
}

impl fmt::Display for LiftedError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LiftedError::Params(e) => write!(f, "{e}"),
            LiftedError::NonPositiveSpeed { sample } => {
                write!(f, "speed at sample {sample} must be positive")
            }
            LiftedError::Singular { index, value } => {
                write!(
                    f,
                    "lifted matrix is singular: |P[{index},{index}]| = {value:e}"
                )
            }
            LiftedError::Dimension { expected, found } => {
                write!(f, "dimension mismatch: expected {expected}, found {found}")
            }
            LiftedError::Svd => write!(f, "singular value decomposition did not converge"),
        }
    }
}

impl core::error::Error for LiftedError {}

impl From<VehicleError> for LiftedError {
    fn from(e: VehicleError) -> Self {
        LiftedError::Params(e)
    }
}

/// Continuous closed-loop matrices at one speed, linear tires.
#[derive(Debug, Clone, PartialEq)]
pub struct ContinuousModel {
    pub a: Matrix4<f64>,
    pub b: Vector4<f64>,
    pub c: RowVector4<f64>,
    /// Disturbance input per unit curvature: `d_c = κ · disturbance`.
    pub disturbance: Vector4<f64>,
}

pub fn output_row() -> RowVector4<f64> {
    RowVector4::new(1.0, 0.0, 0.0, 0.0)
}

pub fn continuous_matrices(speed: f64, params: &VehicleParams) -> ContinuousModel {
    let VehicleParams {
        mass: m,
        yaw_inertia: iz,
        a,
        b,
        cf,
        cr,
        k_p,
        x_la,
        ..
    } = *params;
    let u = speed;
    #[rustfmt::skip]
    let a_c = Matrix4::new(
        0.0, u, 0.0, u,
        0.0, 0.0, 1.0, 0.0,
        -a * k_p * cf / iz, -a * k_p * x_la * cf / iz, -(a * a * cf + b * b * cr) / (u * iz), (b * cr - a * cf) / iz,
        -k_p * cf / (m * u), -k_p * x_la * cf / (m * u), (b * cr - a * cf) / (m * u * u) - 1.0, -(cf + cr) / (m * u),
    );
    ContinuousModel {
        a: a_c,
        b: Vector4::new(0.0, 0.0, a * cf / iz, cf / (m * u)),
        c: output_row(),
        disturbance: Vector4::new(0.0, -u, 0.0, 0.0),
    }
}

/// Zero-order-hold discretization over one sample.
///
/// `A = exp(A_c T_s)`; `B` and `d` are the last columns of the exponential of
/// the augmented matrix `[[A_c, B_c, d_c], [0, 0, 0]]`.
pub fn discretize(
    a_c: &Matrix4<f64>,
    b_c: &Vector4<f64>,
    d_c: &Vector4<f64>,
    sample_time: f64,
) -> (Matrix4<f64>, Vector4<f64>, Vector4<f64>) {
    let mut aug = DMatrix::<f64>::zeros(6, 6);
    aug.view_mut((0, 0), (4, 4)).copy_from(a_c);
    aug.view_mut((0, 4), (4, 1)).copy_from(b_c);
    aug.view_mut((0, 5), (4, 1)).copy_from(d_c);
    let e = expm(&(aug * sample_time));
    let a = e.fixed_view::<4, 4>(0, 0).into_owned();
    let b = e.fixed_view::<4, 1>(0, 4).into_owned();
    let d = e.fixed_view::<4, 1>(0, 5).into_owned();
    (a, b, d)
}

/// Discrete `(A, B, d per unit curvature)` of one sub-interval.
type SubStep = (Matrix4<f64>, Vector4<f64>, Vector4<f64>);

/// Per-sample discrete matrices `x(k+1) = A(k) x(k) + B(k) δ(k) + d(k)`,
/// `e(k) = C x(k)`.
#[derive(Debug, Clone, PartialEq)]
pub struct LtvMatrices {
    pub a: Vec<Matrix4<f64>>,
    pub b: Vec<Vector4<f64>>,
    pub d: Vec<Vector4<f64>>,
    pub c: RowVector4<f64>,
    pub sample_time: f64,
}

impl LtvMatrices {
    /// Discretizes the closed loop on every sample of `grid` with the input
    /// held over the sample.
    ///
    /// Each sample is split into [`DISCRETIZATION_SUBSTEPS`] equal
    /// sub-intervals. On each, `A_c` is frozen at the profile speed at the
    /// sub-interval's middle distance and the curvature forcing uses the
    /// exact mean curvature over the distance covered. The sub-interval maps
    /// are composed, so the model follows speed and curvature changes inside
    /// a sample. `speed` must be the profile `grid` was built from.
    pub fn build(
        grid: &TimeGrid,
        track: &TrackProfile,
        speed: &SpeedProfile,
        params: &VehicleParams,
    ) -> Result<Self, LiftedError> {
        params.validate()?;
        let n = grid.n();
        let ts = grid.sample_time();
        let m = DISCRETIZATION_SUBSTEPS;
        let h = ts / m as f64;
        let fine = GRID_SUBSTEPS / m;
        let mut out = LtvMatrices {
            a: Vec::with_capacity(n),
            b: Vec::with_capacity(n),
            d: Vec::with_capacity(n),
            c: output_row(),
            sample_time: ts,
        };
        // constant-speed stretches repeat the same sub-interval matrices
        let mut cache: Option<(f64, SubStep)> = None;
        for k in 0..n {
            let s1 = grid.distances()[k + 1];
            let mut a = Matrix4::identity();
            let mut b = Vector4::zeros();
            let mut d = Vector4::zeros();
            let mut sa = grid.distances()[k];
            for i in 0..m {
                let sb = if i + 1 == m {
                    s1
                } else {
                    (0..fine).fold(sa, |x, _| {
                        advance_distance(speed, x, ts / GRID_SUBSTEPS as f64)
                    })
                };
                let u = speed.speed_at(0.5 * (sa + sb));
                if !(u > 0.0) || !u.is_finite() {
                    return Err(LiftedError::NonPositiveSpeed { sample: k });
                }
                let (ai, bi, dir) = match &cache {
                    Some((cu, step)) if *cu == u => *step,
                    _ => {
                        let model = continuous_matrices(u, params);
                        let step = discretize(&model.a, &model.b, &model.disturbance, h);
                        cache = Some((u, step));
                        step
                    }
                };
                // the disturbance enters linearly, so it is discretized per
                // unit curvature
                let kappa = if sb > sa {
                    track.mean_curvature(sa, sb)
                } else {
                    track.curvature_at(sa)
                };
                a = ai * a;
                b = ai * b + bi;
                d = ai * d + dir * kappa;
                sa = sb;
            }
            out.a.push(a);
            out.b.push(b);
            out.d.push(d);
        }
        Ok(out)
    }

    pub fn n(&self) -> usize {
        self.a.len()
    }

    /// Time-domain simulation from the zero state; returns `e(1)..e(N)`.
    pub fn rollout(&self, input: &[f64]) -> Result<Vec<f64>, LiftedError> {
        if input.len() != self.n() {
            return Err(LiftedError::Dimension {
                expected: self.n(),
                found: input.len(),
            });
        }
        let mut x = Vector4::zeros();
        let mut e = Vec::with_capacity(self.n());
        for (k, u) in input.iter().enumerate() {
            x = self.a[k] * x + self.b[k] * *u + self.d[k];
            e.push((self.c * x)[0]);
        }
        Ok(e)
    }
}

/// Lifted-domain map `e = P δ + d` for one lap.
#[derive(Debug, Clone, PartialEq)]
pub struct LiftedSystem {
    pub p: DMatrix<f64>,
    pub d: DVector<f64>,
    pub grid: TimeGrid,
}

impl LiftedSystem {
    /// Assembles `P` column by column: column `j` is the output response to
    /// a unit input at sample `j`, propagated forward once.
    pub fn from_ltv(ltv: &LtvMatrices, grid: TimeGrid) -> Result<Self, LiftedError> {
        let n = ltv.n();
        if grid.n() != n {
            return Err(LiftedError::Dimension {
                expected: n,
                found: grid.n(),
            });
        }
        let mut p = DMatrix::<f64>::zeros(n, n);
        for j in 0..n {
            let mut x = ltv.b[j];
            p[(j, j)] = (ltv.c * x)[0];
            for i in j + 1..n {
                x = ltv.a[i] * x;
                p[(i, j)] = (ltv.c * x)[0];
            }
        }
        let zeros = alloc::vec![0.0; n];
        let d = DVector::from_vec(ltv.rollout(&zeros)?);
        Ok(LiftedSystem { p, d, grid })
    }

    pub fn n(&self) -> usize {
        self.p.nrows()
    }

    /// `P δ + d`.
    pub fn response(&self, input: &DVector<f64>) -> DVector<f64> {
        &self.p * input + &self.d
    }
}

pub fn build_lifted(
    grid: &TimeGrid,
    track: &TrackProfile,
    speed: &SpeedProfile,
    params: &VehicleParams,
) -> Result<LiftedSystem, LiftedError> {
    let ltv = LtvMatrices::build(grid, track, speed, params)?;
    LiftedSystem::from_ltv(&ltv, grid.clone())
}

fn check_diagonal(p: &DMatrix<f64>) -> Result<(), LiftedError> {
    for i in 0..p.nrows() {
        let v = p[(i, i)];
        if !(v.abs() >= SINGULAR_DIAGONAL) {
            return Err(LiftedError::Singular { index: i, value: v });
        }
    }
    Ok(())
}

/// Monotonic convergence factor: the largest singular value of
/// `P Q (I - L P) P⁻¹`. The right inverse is applied by a triangular solve.
pub fn convergence_factor(
    p: &DMatrix<f64>,
    q: &DMatrix<f64>,
    l: &DMatrix<f64>,
) -> Result<f64, LiftedError> {
    let n = p.nrows();
    for m in [p, q, l] {
        if m.nrows() != n || m.ncols() != n {
            return Err(LiftedError::Dimension {
                expected: n,
                found: m.nrows().max(m.ncols()),
            });
        }
    }
    check_diagonal(p)?;
    let mut i_minus_lp = -(l * p);
    for i in 0..n {
        i_minus_lp[(i, i)] += 1.0;
    }
    let y = (p * q) * i_minus_lp;
    // M P = Y  <=>  Pᵀ Mᵀ = Yᵀ, with Pᵀ upper triangular
    let mt = p
        .transpose()
        .solve_upper_triangular(&y.transpose())
        .ok_or(LiftedError::Singular {
            index: 0,
            value: 0.0,
        })?;
    largest_singular_value(mt)
}

fn largest_singular_value(m: DMatrix<f64>) -> Result<f64, LiftedError> {
    if m.is_empty() {
        return Ok(0.0);
    }
    let svd =
        nalgebra::linalg::SVD::try_new(m, false, false, f64::EPSILON, 0).ok_or(LiftedError::Svd)?;
    Ok(svd.singular_values.iter().fold(0.0f64, |a, &b| a.max(b)))
}

/// Outcome of checking `‖e∞ - e_{j+1}‖ ≤ γ ‖e∞ - e_j‖` along a sequence.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ContractionCheck {
    /// `γ ≥ 1`: the bound promises nothing.
    NoGuarantee,
    Holds,
    Violated {
        iteration: usize,
        ratio: f64,
    },
}

/// Checks the monotonic contraction bound on consecutive iterations of
/// `errors` against the converged error `e_inf`, allowing `slack` on `γ`.
pub fn error_contraction_bound(
    gamma: f64,
    errors: &[Vec<f64>],
    e_inf: &[f64],
    slack: f64,
) -> ContractionCheck {
    if !(gamma < 1.0) {
        return ContractionCheck::NoGuarantee;
    }
    let distance = |e: &[f64]| -> f64 {
        let sq: f64 = e.iter().zip(e_inf).map(|(a, b)| (a - b) * (a - b)).sum();
        num_traits::Float::sqrt(sq)
    };
    for (j, pair) in errors.windows(2).enumerate() {
        let before = distance(&pair[0]);
        let after = distance(&pair[1]);
        if after > (gamma + slack) * before {
            let ratio = if before > 0.0 {
                after / before
            } else {
                f64::INFINITY
            };
            return ContractionCheck::Violated {
                iteration: j,
                ratio,
            };
        }
    }
    ContractionCheck::Holds
}
