//! Matrix exponential by scaling and squaring with a degree-13 Padé
//! approximant (Higham's double-precision parameters).

use super::{ensure_finite, ensure_square, Mat};
use crate::error::{Error, Result};

/// Numerator coefficients of the [13/13] Padé approximant to exp.
const PADE13: [f64; 14] = [
    64_764_752_532_480_000.0,
    32_382_376_266_240_000.0,
    7_771_770_303_897_600.0,
    1_187_353_796_428_800.0,
    129_060_195_264_000.0,
    10_559_470_521_600.0,
    670_442_572_800.0,
    33_522_128_640.0,
    1_323_241_920.0,
    40_840_800.0,
    960_960.0,
    16_380.0,
    182.0,
    1.0,
];

/// Scaling threshold for the degree-13 approximant in binary64.
const THETA13: f64 = 5.371_920_351_148_152;

fn one_norm(m: &Mat) -> f64 {
    (0..m.ncols())
        .map(|j| m.column(j).iter().map(|x| x.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// `e^{t a}` for a real square matrix `a` and finite scalar `t`.
pub fn matrix_exponential(a: &Mat, t: f64) -> Result<Mat> {
    let order = ensure_square(a)?;
    ensure_finite(a)?;
    if !t.is_finite() {
        return Err(Error::NonFiniteEntries);
    }

    let m = a * t;
    let norm = one_norm(&m);
    let s = if norm > THETA13 {
        (norm / THETA13).log2().ceil() as i32
    } else {
        0
    };
    let b = &m / 2f64.powi(s);

    let eye = Mat::identity(order, order);
    let b2 = &b * &b;
    let b4 = &b2 * &b2;
    let b6 = &b2 * &b4;

    let u_inner = &b6 * (PADE13[13] * &b6 + PADE13[11] * &b4 + PADE13[9] * &b2)
        + PADE13[7] * &b6
        + PADE13[5] * &b4
        + PADE13[3] * &b2
        + PADE13[1] * &eye;
    let u = &b * u_inner;
    let v = &b6 * (PADE13[12] * &b6 + PADE13[10] * &b4 + PADE13[8] * &b2)
        + PADE13[6] * &b6
        + PADE13[4] * &b4
        + PADE13[2] * &b2
        + PADE13[0] * &eye;

    let denom = &v - &u;
    let numer = &v + &u;
    let mut r = denom
        .lu()
        .solve(&numer)
        .ok_or_else(|| Error::DimensionMismatch("Pade denominator is singular".into()))?;

    for _ in 0..s {
        r = &r * &r;
    }
    Ok(r)
}
