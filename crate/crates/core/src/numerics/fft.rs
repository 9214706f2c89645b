//! Power-of-two FFT with a fixed normalization contract.
//!
//! The forward transform is unnormalized; the inverse divides by the length,
//! so `ifft(fft(x)) == x` up to rounding and Parseval reads
//! `Σ|x|² = Σ|X|²/N`. Backed by `rustfft`; plans can be cached in an
//! [`FftPlan`] for hot loops.

use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};

/// Cached forward/inverse plans for one transform length.
#[derive(Clone)]
pub struct FftPlan {
    len: usize,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for FftPlan {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("FftPlan").field("len", &self.len).finish()
    }
}

impl FftPlan {
    pub fn new(len: usize) -> Result<Self> {
        if len < 2 || !len.is_power_of_two() {
            return Err(Error::InvalidArgument(format!(
                "transform length must be a power of two >= 2, got {len}"
            )));
        }
        let mut planner = FftPlanner::new();
        Ok(FftPlan {
            len,
            forward: planner.plan_fft_forward(len),
            inverse: planner.plan_fft_inverse(len),
        })
    }

    pub fn len(&self) -> usize {
        self.len
    }

    fn check(&self, data: &[Complex64]) -> Result<()> {
        if data.len() != self.len {
            return Err(Error::DimensionMismatch(format!(
                "buffer length {} does not match plan length {}",
                data.len(),
                self.len
            )));
        }
        Ok(())
    }

    /// In-place forward transform (unnormalized).
    pub fn forward(&self, data: &mut [Complex64]) -> Result<()> {
        self.check(data)?;
        self.forward.process(data);
        Ok(())
    }

    /// In-place inverse transform (divides by the length).
    pub fn inverse(&self, data: &mut [Complex64]) -> Result<()> {
        self.check(data)?;
        self.inverse.process(data);
        let scale = 1.0 / self.len as f64;
        for v in data.iter_mut() {
            *v *= scale;
        }
        Ok(())
    }
}

/// One-shot forward transform.
pub fn fft(data: &mut [Complex64]) -> Result<()> {
    FftPlan::new(data.len())?.forward(data)
}

/// One-shot inverse transform.
pub fn ifft(data: &mut [Complex64]) -> Result<()> {
    FftPlan::new(data.len())?.inverse(data)
}
