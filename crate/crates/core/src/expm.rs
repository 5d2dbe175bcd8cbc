//! Matrix exponential for small dense matrices.
//!
//! Scaling and squaring with a diagonal (6, 6) Padé approximant, scaled so
//! the infinity norm is at most 1/2 before the approximant is evaluated.

use nalgebra::DMatrix;

#[cfg(not(feature = "std"))]
#[allow(unused_imports)] // unused when a dependency links std
use num_traits::Float;

const PADE_ORDER: usize = 6;

fn inf_norm(m: &DMatrix<f64>) -> f64 {
    (0..m.nrows())
        .map(|i| m.row(i).iter().map(|x| x.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

pub fn expm(m: &DMatrix<f64>) -> DMatrix<f64> {
    assert!(m.is_square(), "matrix exponential needs a square matrix");
    let norm = inf_norm(m);
    let squarings = if norm > 0.5 {
        (norm / 0.5).log2().ceil() as i32
    } else {
        0
    };
    let a = m * (0.5f64).powi(squarings);

    let ident = DMatrix::<f64>::identity(m.nrows(), m.ncols());
    let mut c = 0.5;
    let mut x = a.clone();
    let mut num = &ident + &a * c;
    let mut den = ident - &a * c;
    let mut positive = true;
    let q = PADE_ORDER as f64;
    for k in 2..=PADE_ORDER {
        let kf = k as f64;
        c *= (q - kf + 1.0) / (kf * (2.0 * q - kf + 1.0));
        x = &a * x;
        let cx = &x * c;
        num += &cx;
        if positive {
            den += &cx;
        } else {
            den -= &cx;
        }
        positive = !positive;
    }
    let mut e = den
        .lu()
        .solve(&num)
        .expect("Padé denominator is nonsingular for scaled norm <= 1/2");
    for _ in 0..squarings {
        e = &e * &e;
    }
    e
}
