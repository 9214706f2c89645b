//! Fourier pseudospectral solver for the conservative stochastic
//! Schrödinger equation in one space dimension,
//!
//! ```text
//!     dψ = -iHψ dt + Σ_j A_j ψ dξ_j - ½ Σ_j A_j² ψ dt,
//! ```
//!
//! with the free Hamiltonian `H = -½ ∂²ₓ` (a Fourier multiplier) and
//! position-multiplication noise operators `A_j = √λ · x`. The product
//! formula alternates the two exactly-solvable factors:
//!
//! * [`free_propagate`] — unitary kinetic step `exp(-iκ²Δt/2)` in Fourier
//!   space;
//! * [`collapse_flow`] — pointwise multiplication by
//!   `exp(x·Δξ - (1+c)Δt·x²)` per channel, the closed-form flow of the pure
//!   noise equation `dψ = xψ dξ - (½+c)x²ψ dt`.
//!
//! `c = 0` is the conservative case (the collapse factor has conditional
//! mean one at every node), `c = -½` is the raw noise flow whose mean square
//! grows like `∫ e^{tx²}|ψ₀|² dx`, and `c > 0` is contractive.
//!
//! The grid is periodic; a mass-tail guard rejects states that push more
//! than a fixed fraction of their mass into the outer 10% of the box, which
//! is where periodic wrap-around would silently corrupt the dynamics.

use std::sync::Arc;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::numerics::fft::FftPlan;
use crate::numerics::stats::pairwise_sum;
use crate::wiener::WienerLattice;

/// Largest admissible exponent in a single pointwise factor; `e^{700}` is
/// near the top of the double range, so anything beyond is treated as a
/// configuration error rather than saturated.
pub const EXPONENT_LIMIT: f64 = 700.0;

/// Maximum fraction of the squared norm allowed in the outer 10% of the box.
pub const TAIL_MASS_LIMIT: f64 = 1e-10;

#[derive(Debug)]
struct GridInner {
    half_width: f64,
    n: usize,
    dx: f64,
    nodes: Vec<f64>,
    kappas: Vec<f64>,
    plan: FftPlan,
}

/// Uniform periodic grid on `[-Lx, Lx)` with `N` nodes (power of two) and the
/// standard FFT wavenumber layout `κ_k = (π/Lx) · s_k`, `s_k` the signed
/// index.
#[derive(Clone, Debug)]
pub struct SpatialGrid(Arc<GridInner>);

impl SpatialGrid {
    pub fn new(half_width: f64, n: usize) -> Result<Self> {
        if !half_width.is_finite() || half_width <= 0.0 {
            return Err(Error::InvalidArgument(format!(
                "grid half-width must be positive and finite, got {half_width}"
            )));
        }
        let plan = FftPlan::new(n)?;
        let dx = 2.0 * half_width / n as f64;
        let nodes: Vec<f64> = (0..n).map(|k| -half_width + dx * k as f64).collect();
        let kappas: Vec<f64> = (0..n)
            .map(|k| {
                let signed = if k <= n / 2 { k as i64 } else { k as i64 - n as i64 };
                std::f64::consts::PI / half_width * signed as f64
            })
            .collect();
        Ok(SpatialGrid(Arc::new(GridInner {
            half_width,
            n,
            dx,
            nodes,
            kappas,
            plan,
        })))
    }

    pub fn half_width(&self) -> f64 {
        self.0.half_width
    }

    pub fn len(&self) -> usize {
        self.0.n
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn dx(&self) -> f64 {
        self.0.dx
    }

    pub fn nodes(&self) -> &[f64] {
        &self.0.nodes
    }

    pub fn wavenumbers(&self) -> &[f64] {
        &self.0.kappas
    }

    pub fn compatible(&self, other: &SpatialGrid) -> bool {
        self.0.half_width == other.0.half_width && self.0.n == other.0.n
    }
}

/// A complex wave function sampled on a [`SpatialGrid`]; quadrature weight
/// `dx` per node, so `norm² = dx·Σ|ψ(x_k)|²`.
#[derive(Clone, Debug)]
pub struct GridState {
    grid: SpatialGrid,
    values: Vec<Complex64>,
}

/// Quadrature-weighted moments of `|ψ|²/norm²`.
#[derive(Clone, Copy, Debug)]
pub struct Observables {
    pub mean_x: f64,
    pub var_x: f64,
    pub norm2: f64,
}

impl GridState {
    pub fn from_values(grid: &SpatialGrid, values: Vec<Complex64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::DimensionMismatch(format!(
                "state has {} amplitudes but the grid has {} nodes",
                values.len(),
                grid.len()
            )));
        }
        if !values.iter().all(|z| z.re.is_finite() && z.im.is_finite()) {
            return Err(Error::NonFinite("grid state"));
        }
        Ok(GridState {
            grid: grid.clone(),
            values,
        })
    }

    pub fn grid(&self) -> &SpatialGrid {
        &self.grid
    }

    pub fn values(&self) -> &[Complex64] {
        &self.values
    }

    pub fn norm2(&self) -> f64 {
        let sq: Vec<f64> = self.values.iter().map(|z| z.norm_sqr()).collect();
        pairwise_sum(&sq) * self.grid.dx()
    }

    /// `dx · Σ conj(u_k) v_k` (conjugation on `self`).
    pub fn inner(&self, other: &GridState) -> Result<Complex64> {
        if !self.grid.compatible(&other.grid) {
            return Err(Error::DimensionMismatch("states live on different grids".into()));
        }
        let res: Vec<f64> = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(u, v)| (u.conj() * v).re)
            .collect();
        let ims: Vec<f64> = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(u, v)| (u.conj() * v).im)
            .collect();
        Ok(Complex64::new(pairwise_sum(&res), pairwise_sum(&ims)) * self.grid.dx())
    }

    pub fn normalize(&self) -> Result<GridState> {
        let n2 = self.norm2();
        if n2 <= 0.0 || !n2.is_finite() {
            return Err(Error::ZeroNorm);
        }
        let scale = Complex64::from(1.0 / n2.sqrt());
        GridState::from_values(&self.grid, self.values.iter().map(|z| z * scale).collect())
    }

    pub fn observables(&self) -> Result<Observables> {
        let norm2 = self.norm2();
        if norm2 <= 0.0 {
            return Err(Error::ZeroNorm);
        }
        let dx = self.grid.dx();
        let weights: Vec<f64> = self.values.iter().map(|z| z.norm_sqr()).collect();
        let wx: Vec<f64> = weights
            .iter()
            .zip(self.grid.nodes())
            .map(|(w, x)| w * x)
            .collect();
        let mean_x = pairwise_sum(&wx) * dx / norm2;
        let wxx: Vec<f64> = weights
            .iter()
            .zip(self.grid.nodes())
            .map(|(w, x)| w * (x - mean_x) * (x - mean_x))
            .collect();
        let var_x = pairwise_sum(&wxx) * dx / norm2;
        Ok(Observables { mean_x, var_x, norm2 })
    }

    /// Squared-norm mass sitting at nodes with `|x| ≥ 0.9·Lx`.
    pub fn tail_mass(&self) -> f64 {
        let cut = 0.9 * self.grid.half_width();
        let sq: Vec<f64> = self
            .values
            .iter()
            .zip(self.grid.nodes())
            .filter(|(_, x)| x.abs() >= cut)
            .map(|(z, _)| z.norm_sqr())
            .collect();
        pairwise_sum(&sq) * self.grid.dx()
    }

    /// Enforces the periodic-boundary hygiene rule: relative tail mass must
    /// stay below [`TAIL_MASS_LIMIT`].
    pub fn check_tails(&self) -> Result<()> {
        let norm2 = self.norm2();
        if norm2 <= 0.0 {
            return Err(Error::ZeroNorm);
        }
        let mass = self.tail_mass() / norm2;
        if mass > TAIL_MASS_LIMIT {
            return Err(Error::BoundaryMass {
                mass,
                limit: TAIL_MASS_LIMIT,
            });
        }
        Ok(())
    }
}

/// Normalized Gaussian wave packet centered at `x0` with mean momentum `p0`.
///
/// Convention: `|ψ|² ∝ exp(-(x-x0)²/(2σ²))`, so `σ` is the position standard
/// deviation; the momentum standard deviation is `1/(2σ)`.
pub fn gaussian_packet(grid: &SpatialGrid, x0: f64, p0: f64, sigma: f64) -> Result<GridState> {
    if !sigma.is_finite() || sigma <= 0.0 {
        return Err(Error::InvalidArgument(format!(
            "packet width must be positive, got {sigma}"
        )));
    }
    if !x0.is_finite() || !p0.is_finite() {
        return Err(Error::NonFinite("packet parameters"));
    }
    // Mass outside the box is below erfc(8/√2)/2 < 1e-15 when the center is
    // at least 8σ from both walls.
    if grid.half_width() - x0.abs() < 8.0 * sigma {
        return Err(Error::InvalidArgument(format!(
            "packet at x0 = {x0} with σ = {sigma} does not fit a box of half-width {}",
            grid.half_width()
        )));
    }
    let values: Vec<Complex64> = grid
        .nodes()
        .iter()
        .map(|&x| {
            let envelope = (-(x - x0) * (x - x0) / (4.0 * sigma * sigma)).exp();
            Complex64::from_polar(envelope, p0 * x)
        })
        .collect();
    GridState::from_values(grid, values)?.normalize()
}

/// Periodic plane wave `e^{iκ_m x} / √(2Lx)`, an exact grid eigenstate of the
/// kinetic Fourier multiplier. `mode` is the signed integer index, `|mode| ≤ N/2`.
pub fn plane_wave(grid: &SpatialGrid, mode: i64) -> Result<GridState> {
    if mode.unsigned_abs() as usize > grid.len() / 2 {
        return Err(Error::InvalidArgument(format!(
            "mode {mode} out of range for {} nodes",
            grid.len()
        )));
    }
    let kappa = std::f64::consts::PI / grid.half_width() * mode as f64;
    let amp = 1.0 / (2.0 * grid.half_width()).sqrt();
    let values: Vec<Complex64> = grid
        .nodes()
        .iter()
        .map(|&x| Complex64::from_polar(amp, kappa * x))
        .collect();
    GridState::from_values(grid, values)
}

/// Unitary kinetic step: multiplies the Fourier transform by
/// `exp(-i κ² Δt / 2)`. `Δt = 0` returns the state unchanged (exactly).
pub fn free_propagate(state: &GridState, dt: f64) -> Result<GridState> {
    if !dt.is_finite() {
        return Err(Error::NonFinite("kinetic step length"));
    }
    if dt == 0.0 {
        return Ok(state.clone());
    }
    let grid = state.grid();
    let mut data = state.values().to_vec();
    grid.0.plan.forward(&mut data)?;
    for (z, &kappa) in data.iter_mut().zip(grid.wavenumbers()) {
        *z *= Complex64::from_polar(1.0, -0.5 * kappa * kappa * dt);
    }
    grid.0.plan.inverse(&mut data)?;
    GridState::from_values(grid, data)
}

/// Pointwise noise flow: multiplies by
/// `Π_j exp(x·Δξ_j - (1+c)·Δt·x²)` (channels in ascending order).
///
/// This solves `dψ = Σ_j xψ dξ_j - m(½+c)x²ψ dt` exactly over one step. The
/// per-channel exponent `x·Δξ_j` is guarded against overflow: values beyond
/// [`EXPONENT_LIMIT`] raise an error instead of saturating.
pub fn collapse_flow(state: &GridState, dxi: &[f64], dt: f64, c: f64) -> Result<GridState> {
    if dxi.is_empty() {
        return Err(Error::EmptyInput("noise increments"));
    }
    if !dt.is_finite() || dt < 0.0 {
        return Err(Error::InvalidArgument(format!(
            "noise step length must be nonnegative, got {dt}"
        )));
    }
    if !c.is_finite() {
        return Err(Error::NonFinite("flow parameter c"));
    }
    let grid = state.grid();
    let max_abs_x = grid.half_width();
    for &d in dxi {
        if !d.is_finite() {
            return Err(Error::NonFinite("noise increment"));
        }
        if max_abs_x * d.abs() > EXPONENT_LIMIT {
            return Err(Error::ExponentOverflow {
                value: max_abs_x * d.abs(),
                node: max_abs_x,
                limit: EXPONENT_LIMIT,
            });
        }
    }
    let drift_extreme = (dxi.len() as f64) * (1.0 + c).abs() * dt * max_abs_x * max_abs_x;
    if drift_extreme > EXPONENT_LIMIT {
        return Err(Error::ExponentOverflow {
            value: drift_extreme,
            node: max_abs_x,
            limit: EXPONENT_LIMIT,
        });
    }
    let total_dxi: f64 = dxi.iter().sum();
    let m = dxi.len() as f64;
    let values: Vec<Complex64> = state
        .values()
        .iter()
        .zip(grid.nodes())
        .map(|(z, &x)| z * Complex64::from((x * total_dxi - m * (1.0 + c) * dt * x * x).exp()))
        .collect();
    GridState::from_values(grid, values)
}

fn run_level(n: usize, lattice: &WienerLattice) -> Result<u32> {
    let fine = lattice.fine_steps();
    if n == 0 || !n.is_power_of_two() || n > fine {
        return Err(Error::BadStepCount { n, fine });
    }
    Ok(n.trailing_zeros())
}

fn product_run_impl(
    state: &GridState,
    lattice: &WienerLattice,
    n: usize,
    lambda: f64,
    include_h: bool,
    noise_first: bool,
) -> Result<Vec<GridState>> {
    if !lambda.is_finite() || lambda < 0.0 {
        return Err(Error::InvalidArgument(format!(
            "noise intensity must be nonnegative, got {lambda}"
        )));
    }
    let level = run_level(n, lattice)?;
    let m = lattice.channels();
    let dt = lattice.horizon() / n as f64;
    let root_lambda = lambda.sqrt();
    let coarse: Vec<Vec<f64>> = (0..m)
        .map(|c| lattice.coarsen(c, level))
        .collect::<Result<_>>()?;
    state.check_tails()?;
    let mut x = state.clone();
    let mut out = Vec::with_capacity(n + 1);
    out.push(x.clone());
    let mut scaled = vec![0.0f64; m];
    for k in 0..n {
        for (slot, channel) in scaled.iter_mut().zip(&coarse) {
            *slot = root_lambda * channel[k];
        }
        if noise_first {
            x = collapse_flow(&x, &scaled, lambda * dt, 0.0)?;
            if include_h {
                x = free_propagate(&x, dt)?;
            }
        } else {
            if include_h {
                x = free_propagate(&x, dt)?;
            }
            x = collapse_flow(&x, &scaled, lambda * dt, 0.0)?;
        }
        x.check_tails()?;
        out.push(x.clone());
    }
    Ok(out)
}

/// Product-formula run for the conservative equation with `A_j = √λ·x`:
/// each step applies the noise flow first, then the kinetic factor
/// (`ψ ← H_Δt · A_step · ψ`). Returns states at `kT/n` for `k = 0..=n`.
/// The channel count is read from the lattice.
pub fn product_formula_run(
    state: &GridState,
    lattice: &WienerLattice,
    n: usize,
    lambda: f64,
    include_h: bool,
) -> Result<Vec<GridState>> {
    product_run_impl(state, lattice, n, lambda, include_h, true)
}

/// As [`product_formula_run`] with the factor order swapped inside each step
/// (`ψ ← A_step · H_Δt · ψ`). Both orderings converge to the same limit; the
/// gap between them is a diagnostic for the splitting error.
pub fn reversed_order_run(
    state: &GridState,
    lattice: &WienerLattice,
    n: usize,
    lambda: f64,
    include_h: bool,
) -> Result<Vec<GridState>> {
    product_run_impl(state, lattice, n, lambda, include_h, false)
}

/// Applies the kinetic operator `-½Δ` spectrally (Fourier multiplier `κ²/2`).
fn apply_kinetic(state: &GridState) -> Result<GridState> {
    let grid = state.grid();
    let mut data = state.values().to_vec();
    grid.0.plan.forward(&mut data)?;
    for (z, &kappa) in data.iter_mut().zip(grid.wavenumbers()) {
        *z *= Complex64::from(0.5 * kappa * kappa);
    }
    grid.0.plan.inverse(&mut data)?;
    GridState::from_values(grid, data)
}

/// Conservativity residual `‖Aψ‖² - 2 Re⟨Kψ, ψ⟩` with `K = iH + ½A²`,
/// `A = x`, `H = -½Δ`. Zero (to rounding) because `H` is Hermitian on the
/// grid and `A` is real multiplication.
pub fn conservativity_residual_grid(state: &GridState) -> Result<f64> {
    let grid = state.grid();
    let h_psi = apply_kinetic(state)?;
    let k_values: Vec<Complex64> = h_psi
        .values()
        .iter()
        .zip(state.values())
        .zip(grid.nodes())
        .map(|((h, z), &x)| Complex64::i() * h + z * Complex64::from(0.5 * x * x))
        .collect();
    let k_psi = GridState::from_values(grid, k_values)?;
    let a_sq: Vec<f64> = state
        .values()
        .iter()
        .zip(grid.nodes())
        .map(|(z, &x)| x * x * z.norm_sqr())
        .collect();
    let a_norm2 = pairwise_sum(&a_sq) * grid.dx();
    Ok(a_norm2 - 2.0 * k_psi.inner(state)?.re)
}

/// `‖Nψ‖²` for the reference operator `N = x² - ½Δ - 1`, the boundedness
/// diagnostic monitored along trajectories. The Laplacian is applied
/// spectrally.
pub fn reference_operator_energy(state: &GridState) -> Result<f64> {
    let grid = state.grid();
    let kinetic = apply_kinetic(state)?;
    let n_values: Vec<Complex64> = state
        .values()
        .iter()
        .zip(kinetic.values())
        .zip(grid.nodes())
        .map(|((z, k), &x)| z * Complex64::from(x * x - 1.0) + k)
        .collect();
    Ok(GridState::from_values(grid, n_values)?.norm2())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::stats::mean_and_stderr;
    use rayon::prelude::*;

    fn grid512() -> SpatialGrid {
        SpatialGrid::new(8.0, 512).unwrap()
    }

    #[test]
    fn grid_construction_and_validation() {
        let g = grid512();
        assert_eq!(g.len(), 512);
        assert!((g.dx() - 1.0 / 32.0).abs() < 1e-15);
        assert_eq!(g.nodes()[0], -8.0);
        assert_eq!(g.wavenumbers()[0], 0.0);
        assert!((g.wavenumbers()[1] - std::f64::consts::PI / 8.0).abs() < 1e-15);
        // Negative frequencies in the upper half.
        assert!(g.wavenumbers()[511] < 0.0);
        assert!(SpatialGrid::new(8.0, 500).is_err());
        assert!(SpatialGrid::new(0.0, 512).is_err());
        assert!(SpatialGrid::new(-1.0, 512).is_err());
    }

    #[test]
    fn plane_wave_picks_up_exact_phase_under_free_step() {
        let g = grid512();
        let wave = plane_wave(&g, 3).unwrap();
        let dt = 0.37;
        let out = free_propagate(&wave, dt).unwrap();
        let kappa = 3.0 * std::f64::consts::PI / 8.0;
        let phase = Complex64::from_polar(1.0, -0.5 * kappa * kappa * dt);
        for (a, b) in out.values().iter().zip(wave.values()) {
            assert!((a - b * phase).norm() <= 1e-12);
        }
        assert!((out.norm2() - wave.norm2()).abs() <= 1e-12);
    }

    #[test]
    fn packet_moments_match_the_documented_convention() {
        let g = grid512();
        let psi = gaussian_packet(&g, 1.0, 0.5, 0.6).unwrap();
        assert!((psi.norm2() - 1.0).abs() <= 1e-12);
        let obs = psi.observables().unwrap();
        assert!((obs.mean_x - 1.0).abs() <= 1e-8);
        assert!((obs.var_x - 0.36).abs() <= 1e-8);
        // Doesn't fit: center too close to the wall.
        assert!(gaussian_packet(&g, 6.5, 0.0, 0.5).is_err());
        assert!(gaussian_packet(&g, 0.0, 0.0, -1.0).is_err());
    }

    #[test]
    fn free_spreading_follows_the_closed_form() {
        let g = grid512();
        let sigma = 0.5;
        let psi = gaussian_packet(&g, 0.0, 0.0, sigma).unwrap();
        let t = 0.5;
        let out = free_propagate(&psi, t).unwrap();
        let obs = out.observables().unwrap();
        let expected = sigma * sigma + t * t / (4.0 * sigma * sigma);
        assert!(
            (obs.var_x - expected).abs() <= 1e-6 * expected,
            "var {} vs {}",
            obs.var_x,
            expected
        );
        // A kicked packet drifts at its group velocity.
        let kicked = gaussian_packet(&g, 0.0, 2.0, sigma).unwrap();
        let moved = free_propagate(&kicked, 0.25).unwrap().observables().unwrap();
        assert!((moved.mean_x - 0.5).abs() <= 1e-6);
    }

    #[test]
    fn free_step_is_unitary_and_composes() {
        let g = grid512();
        let psi = gaussian_packet(&g, 0.5, 1.0, 0.7).unwrap();
        let two_hops = free_propagate(&free_propagate(&psi, 0.3).unwrap(), 0.2).unwrap();
        let one_hop = free_propagate(&psi, 0.5).unwrap();
        let dev: f64 = two_hops
            .values()
            .iter()
            .zip(one_hop.values())
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max);
        assert!(dev <= 1e-12);
        assert!((one_hop.norm2() - 1.0).abs() <= 1e-12);
        // Δt = 0 is the exact identity.
        let id = free_propagate(&psi, 0.0).unwrap();
        assert_eq!(id.values(), psi.values());
    }

    #[test]
    fn collapse_flow_matches_its_pointwise_formula() {
        let g = grid512();
        let psi = gaussian_packet(&g, 0.0, 0.3, 0.6).unwrap();
        let out = collapse_flow(&psi, &[0.4], 0.1, 0.0).unwrap();
        for ((a, b), &x) in out.values().iter().zip(psi.values()).zip(g.nodes()) {
            let factor = (x * 0.4 - 0.1 * x * x).exp();
            assert!((a - b * Complex64::from(factor)).norm() <= 1e-12 * factor.max(1.0));
        }
        // Δξ = 0, Δt = 0: exact identity.
        let id = collapse_flow(&psi, &[0.0], 0.0, 0.0).unwrap();
        assert_eq!(id.values(), psi.values());
    }

    #[test]
    fn collapse_flow_channels_compose_multiplicatively() {
        let g = grid512();
        let psi = gaussian_packet(&g, 0.0, 0.0, 0.5).unwrap();
        let joint = collapse_flow(&psi, &[0.3, -0.2], 0.05, 0.0).unwrap();
        let sequential = collapse_flow(
            &collapse_flow(&psi, &[0.3], 0.05, 0.0).unwrap(),
            &[-0.2],
            0.05,
            0.0,
        )
        .unwrap();
        for (a, b) in joint.values().iter().zip(sequential.values()) {
            assert!((a - b).norm() <= 1e-13 * b.norm().max(1e-300));
        }
    }

    #[test]
    fn collapse_flow_guards_against_overflow() {
        let g = grid512();
        let psi = gaussian_packet(&g, 0.0, 0.0, 0.5).unwrap();
        assert!(matches!(
            collapse_flow(&psi, &[100.0], 0.0, 0.0),
            Err(Error::ExponentOverflow { .. })
        ));
        assert!(collapse_flow(&psi, &[f64::NAN], 0.0, 0.0).is_err());
        assert!(collapse_flow(&psi, &[], 0.1, 0.0).is_err());
        assert!(collapse_flow(&psi, &[0.1], -0.1, 0.0).is_err());
    }

    /// E‖f_t‖² = dx·Σ e^{t x²}|g(x)|² exactly on the grid for the raw flow
    /// (c = -½): Monte-Carlo mean within 3 standard errors.
    #[test]
    fn raw_flow_mean_square_matches_grid_growth_identity() {
        let g = grid512();
        // Indicator of [0, 1]: both endpoints are exact nodes (dx = 1/32).
        let values: Vec<Complex64> = g
            .nodes()
            .iter()
            .map(|&x| {
                if (0.0..=1.0).contains(&x) {
                    Complex64::from(1.0)
                } else {
                    Complex64::from(0.0)
                }
            })
            .collect();
        let state = GridState::from_values(&g, values).unwrap();
        let t = 1.0;
        let truth = {
            let sq: Vec<f64> = g
                .nodes()
                .iter()
                .zip(state.values())
                .map(|(&x, z)| (t * x * x).exp() * z.norm_sqr())
                .collect();
            pairwise_sum(&sq) * g.dx()
        };
        let paths = 2000u64;
        let samples: Vec<f64> = (0..paths)
            .into_par_iter()
            .map(|p| {
                let lattice = WienerLattice::generate(505, p, 1, 3, t).unwrap();
                let mut x = state.clone();
                for &dxi in lattice.increments(0) {
                    x = collapse_flow(&x, &[dxi], t / 8.0, -0.5).unwrap();
                }
                x.norm2()
            })
            .collect();
        let (mean, se) = mean_and_stderr(&samples).unwrap();
        assert!(
            (mean - truth).abs() <= 3.0 * se,
            "MC mean {mean:.5} vs identity {truth:.5} (SE {se:.5})"
        );
    }

    /// Conservative flow (c = 0): E‖ψ_t‖² = ‖ψ₀‖², checked both for the pure
    /// noise flow and for the full product formula with the kinetic factor.
    #[test]
    fn conservative_runs_preserve_mean_squared_norm()  {
        let g = grid512();
        let psi = gaussian_packet(&g, 0.0, 0.0, 0.5).unwrap();
        let paths = 1500u64;
        let samples: Vec<f64> = (0..paths)
            .into_par_iter()
            .map(|p| {
                let lattice = WienerLattice::generate(901, p, 1, 4, 0.5).unwrap();
                let traj = product_formula_run(&psi, &lattice, 16, 1.0, true).unwrap();
                traj.last().unwrap().norm2()
            })
            .collect();
        let (mean, se) = mean_and_stderr(&samples).unwrap();
        assert!(
            (mean - 1.0).abs() <= 3.0 * se,
            "E‖ψ_T‖² = {mean:.6} (SE {se:.6})"
        );
    }

    #[test]
    fn product_run_without_kinetic_factor_matches_closed_form_for_all_n() {
        let g = grid512();
        let psi = gaussian_packet(&g, 0.0, 0.0, 0.5).unwrap();
        let lambda = 0.7;
        for path in 0..10u64 {
            let lattice = WienerLattice::generate(77, path, 1, 6, 1.0).unwrap();
            let xi_t = lattice.total(0);
            for n in [4usize, 32] {
                let traj = product_formula_run(&psi, &lattice, n, lambda, false).unwrap();
                let last = traj.last().unwrap();
                let peak = psi
                    .values()
                    .iter()
                    .map(|z| z.norm())
                    .fold(0.0f64, f64::max);
                for ((a, b), &x) in last.values().iter().zip(psi.values()).zip(g.nodes()) {
                    let factor = (lambda.sqrt() * x * xi_t - lambda * x * x).exp();
                    assert!(
                        (a - b * Complex64::from(factor)).norm() <= 1e-10 * peak.max(factor),
                        "path {path}, n {n}, x {x}"
                    );
                }
            }
        }
    }

    #[test]
    fn zero_intensity_runs_reduce_to_pure_free_evolution() {
        // A kicked packet travels and spreads over a unit horizon; give it a
        // wider box so it stays clear of the guarded outer band throughout.
        let g = SpatialGrid::new(12.0, 512).unwrap();
        let psi = gaussian_packet(&g, 0.0, 1.0, 0.5).unwrap();
        let lattice = WienerLattice::generate(3, 0, 1, 5, 1.0).unwrap();
        let forward = product_formula_run(&psi, &lattice, 8, 0.0, true).unwrap();
        let reversed = reversed_order_run(&psi, &lattice, 8, 0.0, true).unwrap();
        let mut expected = psi.clone();
        for k in 1..=8usize {
            expected = free_propagate(&expected, 1.0 / 8.0).unwrap();
            assert_eq!(forward[k].values(), reversed[k].values());
            let dev: f64 = forward[k]
                .values()
                .iter()
                .zip(expected.values())
                .map(|(a, b)| (a - b).norm())
                .fold(0.0, f64::max);
            assert!(dev <= 1e-12, "k = {k}");
            assert!((forward[k].norm2() - 1.0).abs() <= 1e-12);
        }
    }

    #[test]
    fn reversed_and_forward_orders_drift_apart_with_noise() {
        let g = grid512();
        let psi = gaussian_packet(&g, 0.0, 0.0, 0.5).unwrap();
        let lattice = WienerLattice::generate(11, 4, 1, 5, 0.5).unwrap();
        let forward = product_formula_run(&psi, &lattice, 8, 1.0, true).unwrap();
        let reversed = reversed_order_run(&psi, &lattice, 8, 1.0, true).unwrap();
        let diff: f64 = forward
            .last()
            .unwrap()
            .values()
            .iter()
            .zip(reversed.last().unwrap().values())
            .map(|(a, b)| (a - b).norm_sqr())
            .sum::<f64>()
            * g.dx();
        assert!(diff > 1e-8, "orders should differ at finite n, got {diff:.3e}");
    }

    #[test]
    fn boundary_mass_guard_rejects_wall_hugging_states() {
        let g = grid512();
        let mut values = vec![Complex64::from(0.0); 512];
        values[0] = Complex64::from(1.0); // node at x = -8
        let state = GridState::from_values(&g, values).unwrap();
        assert!(matches!(
            state.check_tails(),
            Err(Error::BoundaryMass { .. })
        ));
        let lattice = WienerLattice::generate(0, 0, 1, 3, 1.0).unwrap();
        assert!(matches!(
            product_formula_run(&state, &lattice, 8, 1.0, true),
            Err(Error::BoundaryMass { .. })
        ));
        // A centered packet passes.
        assert!(gaussian_packet(&g, 0.0, 0.0, 0.5).unwrap().check_tails().is_ok());
    }

    #[test]
    fn conservativity_residual_is_numerically_zero() {
        let g = grid512();
        let packet = gaussian_packet(&g, 0.7, 0.4, 0.6).unwrap();
        let constant = GridState::from_values(
            &g,
            vec![Complex64::new(0.3, -0.1); 512],
        )
        .unwrap();
        let key = crate::rng::stream_key(42, 0, 0);
        let random = GridState::from_values(
            &g,
            (0..512)
                .map(|k| {
                    Complex64::new(
                        crate::rng::normal_at(key, 2 * k as u64),
                        crate::rng::normal_at(key, 2 * k as u64 + 1),
                    )
                })
                .collect(),
        )
        .unwrap();
        for state in [&packet, &constant, &random] {
            let a_sq: Vec<f64> = state
                .values()
                .iter()
                .zip(g.nodes())
                .map(|(z, &x)| x * x * z.norm_sqr())
                .collect();
            let scale = pairwise_sum(&a_sq) * g.dx();
            let residual = conservativity_residual_grid(state).unwrap();
            assert!(
                residual.abs() <= 1e-10 * scale,
                "residual {residual:.3e} vs scale {scale:.3e}"
            );
        }
    }

    #[test]
    fn reference_operator_annihilates_its_ground_state_up_to_the_shift() {
        let g = grid512();
        // Ground state of x² - ½Δ is exp(-x²/√2) with eigenvalue 1/√2, so
        // N = x² - ½Δ - 1 maps the normalized state to (1/√2 - 1)·ψ and
        // ‖Nψ‖² = (1 - 1/√2)² = 3/2 - √2.
        let sigma = (2.0f64.sqrt() / 4.0).sqrt();
        let psi = gaussian_packet(&g, 0.0, 0.0, sigma).unwrap();
        let energy = reference_operator_energy(&psi).unwrap();
        let expected = 1.5 - 2.0f64.sqrt();
        assert!(
            (energy - expected).abs() <= 1e-8,
            "energy {energy:.12} vs {expected:.12}"
        );
        // Zero state: exactly zero.
        let zero = GridState::from_values(&g, vec![Complex64::from(0.0); 512]).unwrap();
        assert_eq!(reference_operator_energy(&zero).unwrap(), 0.0);
        // Finite along a noisy trajectory.
        let lattice = WienerLattice::generate(9, 2, 1, 4, 0.5).unwrap();
        let start = gaussian_packet(&g, 0.0, 0.0, 0.5).unwrap();
        for state in product_formula_run(&start, &lattice, 16, 1.0, true).unwrap() {
            let e = reference_operator_energy(&state).unwrap();
            assert!(e.is_finite() && e >= 0.0);
        }
    }

    #[test]
    fn two_point_superposition_has_textbook_variance() {
        let g = grid512();
        let mut values = vec![Complex64::from(0.0); 512];
        let a = 2.0;
        let hits: Vec<usize> = g
            .nodes()
            .iter()
            .enumerate()
            .filter(|(_, &x)| x == a || x == -a)
            .map(|(k, _)| k)
            .collect();
        assert_eq!(hits.len(), 2, "±a must be exact grid nodes");
        for k in hits {
            values[k] = Complex64::from(1.0);
        }
        let state = GridState::from_values(&g, values).unwrap();
        let obs = state.observables().unwrap();
        assert!(obs.mean_x.abs() <= 1e-12);
        assert!((obs.var_x - a * a).abs() <= 1e-12);
        // Zero state has no observables.
        let zero = GridState::from_values(&g, vec![Complex64::from(0.0); 512]).unwrap();
        assert!(matches!(zero.observables(), Err(Error::ZeroNorm)));
    }

    #[test]
    fn doubling_the_grid_does_not_move_observables() {
        // Spatial resolution sanity: same physical run on N and 2N nodes.
        let run = |n: usize| -> f64 {
            let g = SpatialGrid::new(8.0, n).unwrap();
            let psi = gaussian_packet(&g, 0.0, 0.0, 0.5).unwrap();
            let lattice = WienerLattice::generate(13, 5, 1, 4, 0.5).unwrap();
            let traj = product_formula_run(&psi, &lattice, 16, 1.0, true).unwrap();
            traj.last().unwrap().observables().unwrap().mean_x
        };
        let coarse = run(512);
        let fine = run(1024);
        assert!(
            (coarse - fine).abs() <= 1e-8,
            "mean_x moved from {coarse} to {fine} under grid doubling"
        );
    }

    mod properties {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(48))]

            /// Kinetic steps form a one-parameter unitary group.
            #[test]
            fn free_steps_compose(dt1 in -0.8f64..0.8, dt2 in -0.8f64..0.8) {
                let g = SpatialGrid::new(8.0, 256).unwrap();
                let psi = gaussian_packet(&g, 0.3, 0.7, 0.6).unwrap();
                let split = free_propagate(&free_propagate(&psi, dt1).unwrap(), dt2).unwrap();
                let joint = free_propagate(&psi, dt1 + dt2).unwrap();
                let dev: f64 = split
                    .values()
                    .iter()
                    .zip(joint.values())
                    .map(|(a, b)| (a - b).norm())
                    .fold(0.0, f64::max);
                prop_assert!(dev <= 1e-12);
                prop_assert!((split.norm2() - 1.0).abs() <= 1e-12);
            }

            /// Noise flows form a commuting two-parameter family:
            /// flow(Δξ₁,Δt₁)·flow(Δξ₂,Δt₂) = flow(Δξ₁+Δξ₂, Δt₁+Δt₂).
            #[test]
            fn collapse_flows_compose(
                dxi1 in -1.5f64..1.5,
                dxi2 in -1.5f64..1.5,
                dt1 in 0.0f64..0.4,
                dt2 in 0.0f64..0.4,
                c in -0.5f64..1.0,
            ) {
                let g = SpatialGrid::new(8.0, 256).unwrap();
                let psi = gaussian_packet(&g, 0.0, 0.0, 0.5).unwrap();
                let split = collapse_flow(
                    &collapse_flow(&psi, &[dxi1], dt1, c).unwrap(),
                    &[dxi2],
                    dt2,
                    c,
                )
                .unwrap();
                let joint = collapse_flow(&psi, &[dxi1 + dxi2], dt1 + dt2, c).unwrap();
                for (a, b) in split.values().iter().zip(joint.values()) {
                    prop_assert!((a - b).norm() <= 1e-12 * b.norm().max(1e-12));
                }
            }
        }
    }
}
