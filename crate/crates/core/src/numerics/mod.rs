//! Shared numerical kernels: dense complex linear algebra, FFT wrappers,
//! quadrature and statistics.

pub mod expm;
pub mod fft;
pub mod quad;
pub mod stats;

/// Dense complex matrix used by the finite-dimensional SDE engine.
pub type CMatrix = nalgebra::DMatrix<num_complex::Complex64>;
/// Dense complex vector.
pub type CVector = nalgebra::DVector<num_complex::Complex64>;

pub use expm::mat_exp;
pub use fft::{fft, ifft, FftPlan};
pub use quad::quad_trapezoid;
pub use stats::{
    ks_distance, ks_two_sample_critical, mean_and_stderr, pairwise_sum, weighted_moments,
    WeightedSample,
};
