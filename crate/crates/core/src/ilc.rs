//! Learning operators for the update law `δ_{j+1} = Q (δ_j - L e_j)`.
//!
//! Two syntheses are provided: a PD-type law with an optional zero-phase
//! low-pass `Q`, and the quadratically optimal law that minimizes
//!
//! ```text
//! J = eᵀ T e + δᵀ R δ + (δ - δ_prev)ᵀ S (δ - δ_prev)
//! ```
//!
//! over the next lap for a lifted plant `e = P δ + d`.

use alloc::vec::Vec;
use core::f64::consts::{PI, SQRT_2};
use core::fmt;

use nalgebra::{Cholesky, DMatrix, DVector};

#[cfg(not(feature = "std"))]
#[allow(unused_imports)] // unused when a dependency links std
use num_traits::Float;

#[derive(Debug, Clone, PartialEq)]
pub enum IlcError {
    InvalidParameter(&'static str),
    CutoffAboveNyquist { cutoff_hz: f64, nyquist_hz: f64 },
    Dimension { expected: usize, found: usize },
    NotSymmetric(&'static str),
    Factorization(&'static str),
    Singular { index: usize },
}

impl fmt::Display for IlcError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            IlcError::InvalidParameter(what) => write!(f, "invalid parameter: {what}"),
            IlcError::CutoffAboveNyquist {
                cutoff_hz,
                nyquist_hz,
            } => write!(
                f,
                "filter cutoff {cutoff_hz} Hz is not below the Nyquist frequency {nyquist_hz} Hz"
            ),
            IlcError::Dimension { expected, found } => {
                write!(f, "dimension mismatch: expected {expected}, found {found}")
            }
            IlcError::NotSymmetric(which) => write!(f, "weight {which} is not symmetric"),
            IlcError::Factorization(which) => {
                write!(
                    f,
                    "{which} is not positive definite; check the T, R, S weights"
                )
            }
            IlcError::Singular { index } => write!(f, "lifted matrix singular at row {index}"),
        }
    }
}

impl core::error::Error for IlcError {}

/// One quadratic weight: `scale · I` or a full symmetric matrix.
#[derive(Debug, Clone, PartialEq)]
pub enum Weight {
    Scaled(f64),
    Full(DMatrix<f64>),
}

impl Weight {
    fn validate(&self, n: usize, name: &'static str) -> Result<(), IlcError> {
        match self {
            Weight::Scaled(s) => {
                if !(*s >= 0.0) || !s.is_finite() {
                    return Err(IlcError::InvalidParameter(
                        "scalar weights must be non-negative",
                    ));
                }
            }
            Weight::Full(m) => {
                if m.nrows() != n || m.ncols() != n {
                    return Err(IlcError::Dimension {
                        expected: n,
                        found: m.nrows().max(m.ncols()),
                    });
                }
                let scale = m.amax().max(f64::MIN_POSITIVE);
                if (m - m.transpose()).amax() > 1e-12 * scale {
                    return Err(IlcError::NotSymmetric(name));
                }
                // positive semidefinite up to a relative shift
                let mut shifted = m.clone();
                for i in 0..n {
                    shifted[(i, i)] += 1e-12 * scale;
                }
                if Cholesky::new(shifted).is_none() {
                    return Err(IlcError::Factorization(name));
                }
            }
        }
        Ok(())
    }

    fn is_zero(&self) -> bool {
        match self {
            Weight::Scaled(s) => *s == 0.0,
            Weight::Full(m) => m.iter().all(|x| *x == 0.0),
        }
    }

    fn add_to(&self, m: &mut DMatrix<f64>) {
        match self {
            Weight::Scaled(s) => {
                for i in 0..m.nrows() {
                    m[(i, i)] += s;
                }
            }
            Weight::Full(w) => *m += w,
        }
    }

    /// `W v`
    fn apply(&self, v: &DVector<f64>) -> DVector<f64> {
        match self {
            Weight::Scaled(s) => v * *s,
            Weight::Full(w) => w * v,
        }
    }
}

/// Weights of the next-lap quadratic cost.
#[derive(Debug, Clone, PartialEq)]
pub struct QilcWeights {
    /// tracking error
    pub t: Weight,
    /// input magnitude
    pub r: Weight,
    /// lap-to-lap input change
    pub s: Weight,
}

impl QilcWeights {
    pub fn scaled(t: f64, r: f64, s: f64) -> Self {
        QilcWeights {
            t: Weight::Scaled(t),
            r: Weight::Scaled(r),
            s: Weight::Scaled(s),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum OperatorKind {
    Pd {
        kp: f64,
        kd: f64,
        cutoff_hz: Option<f64>,
    },
    Qilc(QilcWeights),
}

/// A `(Q, L)` pair defining one learning law.
#[derive(Debug, Clone, PartialEq)]
pub struct LearningOperator {
    pub q: DMatrix<f64>,
    pub l: DMatrix<f64>,
    pub kind: OperatorKind,
}

impl LearningOperator {
    pub fn n(&self) -> usize {
        self.q.nrows()
    }
}

/// PD learning law. `L` is lower bidiagonal with `k_p + k_d` on the diagonal
/// and `-k_d` below it, so that
///
/// ```text
/// δ_{j+1}(k) = δ_j(k) - k_p e_j(k) - k_d (e_j(k) - e_j(k-1))
/// ```
///
/// before filtering, with `e_j(-1) = 0`. `Q` is the zero-phase low-pass
/// filter when a cutoff is given, identity otherwise.
pub fn pd_operator(
    kp: f64,
    kd: f64,
    n: usize,
    cutoff_hz: Option<f64>,
    sample_time: f64,
) -> Result<LearningOperator, IlcError> {
    if n == 0 {
        return Err(IlcError::InvalidParameter("N must be at least 1"));
    }
    if !(sample_time > 0.0) || !sample_time.is_finite() {
        return Err(IlcError::InvalidParameter("sample time must be positive"));
    }
    if !kp.is_finite() || !kd.is_finite() {
        return Err(IlcError::InvalidParameter("gains must be finite"));
    }
    let q = match cutoff_hz {
        Some(fc) => zero_phase_filter(fc, sample_time, n)?,
        None => DMatrix::identity(n, n),
    };
    let mut l = DMatrix::zeros(n, n);
    for k in 0..n {
        l[(k, k)] = kp + kd;
        if k + 1 < n {
            l[(k + 1, k)] = -kd;
        }
    }
    Ok(LearningOperator {
        q,
        l,
        kind: OperatorKind::Pd { kp, kd, cutoff_hz },
    })
}

/// Second-order Butterworth low-pass, bilinear transform with the cutoff
/// prewarped. Returns `([b0, b1, b2], [a1, a2])` for
/// `y[n] = b0 x[n] + b1 x[n-1] + b2 x[n-2] - a1 y[n-1] - a2 y[n-2]`.
pub fn butterworth_lowpass(cutoff_hz: f64, sample_time: f64) -> ([f64; 3], [f64; 2]) {
    let k = (PI * cutoff_hz * sample_time).tan();
    let norm = 1.0 / (1.0 + SQRT_2 * k + k * k);
    let b0 = k * k * norm;
    (
        [b0, 2.0 * b0, b0],
        [
            2.0 * (k * k - 1.0) * norm,
            (1.0 - SQRT_2 * k + k * k) * norm,
        ],
    )
}

fn biquad_in_place(x: &mut [f64], b: &[f64; 3], a: &[f64; 2]) {
    let (mut x1, mut x2, mut y1, mut y2) = (0.0, 0.0, 0.0, 0.0);
    for v in x.iter_mut() {
        let x0 = *v;
        let y0 = b[0] * x0 + b[1] * x1 + b[2] * x2 - a[0] * y1 - a[1] * y2;
        x2 = x1;
        x1 = x0;
        y2 = y1;
        y1 = y0;
        *v = y0;
    }
}

/// Samples of reflective extension on each side for a given cutoff.
pub fn reflection_length(cutoff_hz: f64, sample_time: f64, n: usize) -> usize {
    let len = (3.0 / (cutoff_hz * sample_time)).ceil() as usize;
    len.min(n.saturating_sub(1))
}

/// Rows this close to either end are inside the filter's boundary region:
/// twice the reflection length.
pub fn interior_margin(cutoff_hz: f64, sample_time: f64, n: usize) -> usize {
    2 * reflection_length(cutoff_hz, sample_time, n)
}

/// Forward-backward Butterworth filtering of `x` with reflective extension.
pub fn filtfilt(x: &[f64], cutoff_hz: f64, sample_time: f64) -> Vec<f64> {
    let n = x.len();
    if n <= 1 {
        return x.to_vec();
    }
    let (b, a) = butterworth_lowpass(cutoff_hz, sample_time);
    let pad = reflection_length(cutoff_hz, sample_time, n);
    let mut ext = Vec::with_capacity(n + 2 * pad);
    ext.extend((1..=pad).rev().map(|i| x[i]));
    ext.extend_from_slice(x);
    ext.extend((1..=pad).map(|i| x[n - 1 - i]));
    biquad_in_place(&mut ext, &b, &a);
    ext.reverse();
    biquad_in_place(&mut ext, &b, &a);
    ext.reverse();
    ext[pad..pad + n].to_vec()
}

/// Matrix form of zero-phase low-pass filtering over `n` samples.
///
/// Column `j` is the forward-backward filtered unit impulse at `j`. The
/// reflective extension couples samples near the ends asymmetrically, so the
/// matrix is symmetrized; away from the ends the two halves already agree.
pub fn zero_phase_filter(
    cutoff_hz: f64,
    sample_time: f64,
    n: usize,
) -> Result<DMatrix<f64>, IlcError> {
    if !(sample_time > 0.0) || !sample_time.is_finite() {
        return Err(IlcError::InvalidParameter("sample time must be positive"));
    }
    let nyquist_hz = 0.5 / sample_time;
    if !(cutoff_hz > 0.0) {
        return Err(IlcError::InvalidParameter("cutoff must be positive"));
    }
    if cutoff_hz >= nyquist_hz {
        return Err(IlcError::CutoffAboveNyquist {
            cutoff_hz,
            nyquist_hz,
        });
    }
    let mut m = DMatrix::zeros(n, n);
    let mut impulse = alloc::vec![0.0; n];
    for j in 0..n {
        impulse[j] = 1.0;
        let col = filtfilt(&impulse, cutoff_hz, sample_time);
        m.column_mut(j).copy_from_slice(&col);
        impulse[j] = 0.0;
    }
    let q = (&m + m.transpose()) * 0.5;
    Ok(q)
}

/// Quadratically optimal operator:
/// `Q = (PᵀTP + R + S)⁻¹ (PᵀTP + S)`, `L = (PᵀTP + S)⁻¹ PᵀT`.
///
/// Both come from Cholesky solves. With `R = 0` the first is exactly the
/// identity; with `S = 0` and scalar `T` the second is exactly `P⁻¹`, which
/// is then obtained by a triangular solve.
pub fn qilc_operator(
    p: &DMatrix<f64>,
    weights: &QilcWeights,
) -> Result<LearningOperator, IlcError> {
    let n = p.nrows();
    if p.ncols() != n {
        return Err(IlcError::Dimension {
            expected: n,
            found: p.ncols(),
        });
    }
    weights.t.validate(n, "T")?;
    weights.r.validate(n, "R")?;
    weights.s.validate(n, "S")?;

    let pt_t = match &weights.t {
        Weight::Scaled(t) => p.transpose() * *t,
        Weight::Full(t) => p.transpose() * t,
    };
    let mut g = &pt_t * p;
    g = (&g + g.transpose()) * 0.5;
    let mut g_s = g;
    weights.s.add_to(&mut g_s);

    let q = if weights.r.is_zero() {
        DMatrix::identity(n, n)
    } else {
        let mut g_rs = g_s.clone();
        weights.r.add_to(&mut g_rs);
        let chol = Cholesky::new(g_rs).ok_or(IlcError::Factorization("PᵀTP + R + S"))?;
        chol.solve(&g_s)
    };

    let l = match (&weights.t, weights.s.is_zero()) {
        (Weight::Scaled(t), true) if *t > 0.0 => {
            for i in 0..n {
                if p[(i, i)] == 0.0 {
                    return Err(IlcError::Singular { index: i });
                }
            }
            p.solve_lower_triangular(&DMatrix::identity(n, n))
                .ok_or(IlcError::Singular { index: 0 })?
        }
        _ => {
            let chol = Cholesky::new(g_s).ok_or(IlcError::Factorization("PᵀTP + S"))?;
            chol.solve(&pt_t)
        }
    };

    Ok(LearningOperator {
        q,
        l,
        kind: OperatorKind::Qilc(weights.clone()),
    })
}

/// `Q (δ_prev - L e_prev)`.
pub fn update_input(
    op: &LearningOperator,
    prev_input: &DVector<f64>,
    prev_error: &DVector<f64>,
) -> Result<DVector<f64>, IlcError> {
    let n = op.n();
    for len in [prev_input.len(), prev_error.len()] {
        if len != n {
            return Err(IlcError::Dimension {
                expected: n,
                found: len,
            });
        }
    }
    Ok(&op.q * (prev_input - &op.l * prev_error))
}

/// Next-lap cost of input `candidate` when the plant `e = P δ + d` is
/// identified from the previous lap, `d = e_prev - P δ_prev`.
pub fn quadratic_cost(
    p: &DMatrix<f64>,
    weights: &QilcWeights,
    prev_input: &DVector<f64>,
    prev_error: &DVector<f64>,
    candidate: &DVector<f64>,
) -> f64 {
    let e = prev_error + p * (candidate - prev_input);
    let change = candidate - prev_input;
    e.dot(&weights.t.apply(&e))
        + candidate.dot(&weights.r.apply(candidate))
        + change.dot(&weights.s.apply(&change))
}

/// Gradient norm of the next-lap cost at the operator's update, with the
/// magnitude of the largest gradient term for a relative comparison.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OptimalityResidual {
    pub norm: f64,
    pub scale: f64,
}

impl OptimalityResidual {
    pub fn relative(&self) -> f64 {
        if self.scale > 0.0 {
            self.norm / self.scale
        } else {
            self.norm
        }
    }
}

pub fn optimality_residual(
    op: &LearningOperator,
    p: &DMatrix<f64>,
    weights: &QilcWeights,
    prev_input: &DVector<f64>,
    prev_error: &DVector<f64>,
) -> Result<OptimalityResidual, IlcError> {
    let next = update_input(op, prev_input, prev_error)?;
    let e = prev_error + p * (&next - prev_input);
    let tracking = p.transpose() * weights.t.apply(&e) * 2.0;
    let effort = weights.r.apply(&next) * 2.0;
    let change = weights.s.apply(&(&next - prev_input)) * 2.0;
    let grad = &tracking + &effort + &change;
    Ok(OptimalityResidual {
        norm: grad.norm(),
        scale: tracking.norm().max(effort.norm()).max(change.norm()),
    })
}
