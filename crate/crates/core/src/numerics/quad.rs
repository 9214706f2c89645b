//! Composite trapezoid quadrature on a uniform grid.

use crate::error::{Error, Result};
use crate::numerics::stats::pairwise_sum;

/// `∫ f` over a uniform grid with spacing `dx`, trapezoid weights (half
/// weight on the two endpoints).
pub fn quad_trapezoid(values: &[f64], dx: f64) -> Result<f64> {
    if values.len() < 2 {
        return Err(Error::EmptyInput("quadrature needs at least two nodes"));
    }
    if !dx.is_finite() || dx <= 0.0 {
        return Err(Error::InvalidArgument(format!("dx must be positive, got {dx}")));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("quadrature values"));
    }
    let interior = pairwise_sum(&values[1..values.len() - 1]);
    Ok(dx * (interior + 0.5 * (values[0] + values[values.len() - 1])))
}
