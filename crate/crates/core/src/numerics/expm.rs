//! Dense matrix exponential by scaling and squaring.
//!
//! Degree-13 Padé approximant with the scaling threshold from Higham's
//! double-precision analysis; intended for the small (`d <= 64`) systems the
//! SDE engine works with.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::numerics::CMatrix;

/// Largest matrix dimension accepted (the engine targets small dense systems).
pub const MAX_DIM: usize = 64;

/// ‖M‖₁ bound under which the degree-13 approximant is accurate to double
/// precision without scaling.
const THETA_13: f64 = 5.371_920_351_148_152;

/// Padé-13 numerator coefficients.
const B: [f64; 14] = [
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

/// Maximum absolute column sum.
fn one_norm(m: &CMatrix) -> f64 {
    (0..m.ncols())
        .map(|j| m.column(j).iter().map(|z| z.norm()).sum())
        .fold(0.0f64, f64::max)
}

/// `exp(M)` for a square complex matrix of dimension at most [`MAX_DIM`].
pub fn mat_exp(m: &CMatrix) -> Result<CMatrix> {
    if m.nrows() != m.ncols() {
        return Err(Error::DimensionMismatch(format!(
            "matrix exponential needs a square matrix, got {}x{}",
            m.nrows(),
            m.ncols()
        )));
    }
    let d = m.nrows();
    if d == 0 {
        return Err(Error::EmptyInput("matrix exponential"));
    }
    if d > MAX_DIM {
        return Err(Error::DimensionTooLarge { dim: d, max: MAX_DIM });
    }
    if m.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(Error::NonFinite("matrix exponential input"));
    }

    let norm = one_norm(m);
    let squarings = if norm > THETA_13 {
        (norm / THETA_13).log2().ceil() as u32
    } else {
        0
    };
    let a = m.map(|z| z / Complex64::from(2f64.powi(squarings as i32)));

    // U = A (b13 A6 + b11 A4 + b9 A2) A6 + A (b7 A6 + b5 A4 + b3 A2 + b1 I)
    // V =   (b12 A6 + b10 A4 + b8 A2) A6 +   (b6 A6 + b4 A4 + b2 A2 + b0 I)
    let id = CMatrix::identity(d, d);
    let a2 = &a * &a;
    let a4 = &a2 * &a2;
    let a6 = &a2 * &a4;

    let c = Complex64::from;
    let u_hi = &a6 * c(B[13]) + &a4 * c(B[11]) + &a2 * c(B[9]);
    let u_lo = &a6 * c(B[7]) + &a4 * c(B[5]) + &a2 * c(B[3]) + &id * c(B[1]);
    let u = &a * (&a6 * &u_hi + u_lo);

    let v_hi = &a6 * c(B[12]) + &a4 * c(B[10]) + &a2 * c(B[8]);
    let v_lo = &a6 * c(B[6]) + &a4 * c(B[4]) + &a2 * c(B[2]) + &id * c(B[0]);
    let v = &a6 * &v_hi + v_lo;

    // exp(A) ≈ (V - U)⁻¹ (V + U)
    let p = &v + &u;
    let q = &v - &u;
    let mut result = q
        .lu()
        .solve(&p)
        .ok_or_else(|| Error::InvalidArgument("Padé denominator is singular".into()))?;

    for _ in 0..squarings {
        result = &result * &result;
    }
    Ok(result)
}
