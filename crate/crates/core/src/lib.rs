//! Product-formula solvers for linear stochastic differential equations.
//!
//! The crate is organized in layers:
//!
//! * [`rng`] / [`wiener`] — counter-keyed random streams and dyadic Brownian
//!   lattices, the reproducibility backbone for every Monte-Carlo run;
//! * [`numerics`] — dense matrix exponentials, FFT wrappers, quadrature and
//!   the statistical kernels shared by the experiments;
//! * [`matrix_sde`] — splitting schemes for `dX = AX dt + Σ_j B_j X dξ_j`
//!   on small dense systems, with coupled-path error measurement;
//! * [`spectral`] — the same flows realized on a periodic spatial grid for
//!   the conservative stochastic Schrödinger equation;
//! * [`collapse`] — discrete (GRW) and continuous (QMUPL) collapse models
//!   and the studies connecting them.

pub mod collapse;
pub mod error;
pub mod matrix_sde;
pub mod numerics;
pub mod rng;
pub mod spectral;
pub mod wiener;

pub use error::{Error, Result};
pub use numerics::{CMatrix, CVector};
pub use wiener::WienerLattice;
