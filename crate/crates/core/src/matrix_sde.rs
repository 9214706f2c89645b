//! Splitting schemes for linear matrix stochastic differential equations
//!
//! ```text
//!     dX = A X dt + Σ_j B_j X dξ_j,   X(0) = x₀,
//! ```
//!
//! driven by the channels of a [`WienerLattice`]. The central object is the
//! one-step noise flow [`b_flow`], the exact solution of the purely
//! stochastic equation over one step:
//!
//! ```text
//!     exp(Δξ B - (Δt/2) B²),
//! ```
//!
//! whose Itô differential reproduces `B X dξ` (the `-B²/2` drift cancels the
//! quadratic-variation term). Composing it with the deterministic flow
//! `exp(Δt A)` gives the piecewise product scheme; coarser factorizations and
//! a classical Euler-Maruyama stepper are provided for comparison.
//!
//! Conventions: in every composite step, noise factors act first (channels in
//! ascending index order), then the drift factor.

use rayon::prelude::*;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::numerics::expm::mat_exp;
use crate::numerics::stats::{mean_and_stderr, pairwise_sum};
use crate::numerics::{CMatrix, CVector};
use crate::wiener::WienerLattice;

/// Tolerance scale for "these operators must commute" preconditions:
/// `‖[X,Y]‖_F <= COMMUTE_TOL * (1 + ‖X‖_F ‖Y‖_F)`.
pub const COMMUTE_TOL: f64 = 1e-12;

/// A linear SDE system with one drift generator and `m` diffusion generators.
#[derive(Clone, Debug)]
pub struct MatrixSdeSystem {
    pub drift: CMatrix,
    pub diffusions: Vec<CMatrix>,
    pub initial: CVector,
    pub horizon: f64,
}

impl MatrixSdeSystem {
    pub fn new(
        drift: CMatrix,
        diffusions: Vec<CMatrix>,
        initial: CVector,
        horizon: f64,
    ) -> Result<Self> {
        let d = drift.nrows();
        if d == 0 || drift.ncols() != d {
            return Err(Error::DimensionMismatch(format!(
                "drift must be square and nonempty, got {}x{}",
                drift.nrows(),
                drift.ncols()
            )));
        }
        if d > crate::numerics::expm::MAX_DIM {
            return Err(Error::DimensionTooLarge {
                dim: d,
                max: crate::numerics::expm::MAX_DIM,
            });
        }
        if diffusions.is_empty() {
            return Err(Error::EmptyInput("diffusion generators"));
        }
        for b in &diffusions {
            if b.nrows() != d || b.ncols() != d {
                return Err(Error::DimensionMismatch(
                    "diffusion generators must match the drift dimension".into(),
                ));
            }
        }
        if initial.len() != d {
            return Err(Error::DimensionMismatch(
                "initial state must match the drift dimension".into(),
            ));
        }
        if !horizon.is_finite() || horizon <= 0.0 {
            return Err(Error::InvalidArgument(format!(
                "horizon must be positive and finite, got {horizon}"
            )));
        }
        let finite = |m: &CMatrix| m.iter().all(|z| z.re.is_finite() && z.im.is_finite());
        if !finite(&drift)
            || !diffusions.iter().all(finite)
            || !initial.iter().all(|z| z.re.is_finite() && z.im.is_finite())
        {
            return Err(Error::NonFinite("SDE system"));
        }
        Ok(MatrixSdeSystem {
            drift,
            diffusions,
            initial,
            horizon,
        })
    }

    pub fn dim(&self) -> usize {
        self.drift.nrows()
    }

    pub fn channels(&self) -> usize {
        self.diffusions.len()
    }

    /// `A - ½ Σ_j B_j²`, the generator entering every commuting closed form.
    fn corrected_drift(&self) -> CMatrix {
        let mut m = self.drift.clone();
        for b in &self.diffusions {
            m -= (b * b) * Complex64::from(0.5);
        }
        m
    }
}

/// Time-stepping scheme selector.
#[derive(Clone, Debug)]
pub enum SchemeKind {
    /// Closed-form flow; requires all generators to commute pairwise.
    ExactCommuting,
    /// The finest-level reference flow subsampled onto the scheme lattice.
    Reference,
    /// `X ← X + Δt A X + Σ_j Δξ_j B_j X`.
    EulerMaruyama,
    /// `X ← exp(Δt A) · Π_j exp(Δξ_j B_j - (Δt/2) B_j²) · X`.
    TrotterPiecewise,
    /// As `TrotterPiecewise` on the step lattice, but evaluated at every
    /// finest-lattice time by interpolating within each step with partial
    /// flows `exp(τ A) · Π_j exp((ξ_{t+τ}-ξ_t) B_j - (τ/2) B_j²)`.
    TrotterInterpolated,
    /// `X ← (I + Δt A) · Π_j (I + Δξ_j B_j) · X`.
    FirstOrderFactored,
    /// `X ← exp(Δt a1) · exp((a2 - ½ Σ_j B_j²) Δt + Σ_j Δξ_j B_j) · X`,
    /// with `a1 + a2 = A` exactly and `a2` commuting with every `B_j`.
    PartialSplit { a1: CMatrix, a2: CMatrix },
}

impl SchemeKind {
    pub fn label(&self) -> &'static str {
        match self {
            SchemeKind::ExactCommuting => "exact-commuting",
            SchemeKind::Reference => "reference",
            SchemeKind::EulerMaruyama => "euler-maruyama",
            SchemeKind::TrotterPiecewise => "trotter-piecewise",
            SchemeKind::TrotterInterpolated => "trotter-interpolated",
            SchemeKind::FirstOrderFactored => "first-order-factored",
            SchemeKind::PartialSplit { .. } => "partial-split",
        }
    }
}

/// A discrete trajectory: `states[k]` at `times[k]`.
#[derive(Clone, Debug)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<CVector>,
}

fn frobenius(m: &CMatrix) -> f64 {
    m.norm()
}

fn commutator(a: &CMatrix, b: &CMatrix) -> CMatrix {
    a * b - b * a
}

fn check_commuting_pair(a: &CMatrix, b: &CMatrix) -> Result<()> {
    let norm = frobenius(&commutator(a, b));
    let tol = COMMUTE_TOL * (1.0 + frobenius(a) * frobenius(b));
    if norm > tol {
        return Err(Error::NonCommuting { norm, tol });
    }
    Ok(())
}

fn check_commuting_family(mats: &[&CMatrix]) -> Result<()> {
    for i in 0..mats.len() {
        for j in (i + 1)..mats.len() {
            check_commuting_pair(mats[i], mats[j])?;
        }
    }
    Ok(())
}

/// Exact one-step flow of `dX = B X dξ` over an increment `Δξ` on a step of
/// length `Δt`: `exp(Δξ B - (Δt/2) B²)`.
pub fn b_flow(b: &CMatrix, dxi: f64, dt: f64) -> Result<CMatrix> {
    if !dxi.is_finite() || !dt.is_finite() || dt < 0.0 {
        return Err(Error::InvalidArgument(format!(
            "flow needs finite Δξ and nonnegative Δt, got Δξ = {dxi}, Δt = {dt}"
        )));
    }
    let exponent = b * Complex64::from(dxi) - (b * b) * Complex64::from(0.5 * dt);
    mat_exp(&exponent)
}

/// Closed-form solution at time `t` when drift and diffusions all commute:
/// `exp((A - ½ Σ_j B_j²) t + Σ_j ξ_j B_j) x₀`, with `ξ_j` the channel values
/// at `t`.
pub fn exact_commuting_flow(system: &MatrixSdeSystem, xi: &[f64], t: f64) -> Result<CVector> {
    if xi.len() != system.channels() {
        return Err(Error::DimensionMismatch(
            "one path value per diffusion channel".into(),
        ));
    }
    if !t.is_finite() || t < 0.0 {
        return Err(Error::InvalidArgument(format!("time must be nonnegative, got {t}")));
    }
    let mut family: Vec<&CMatrix> = vec![&system.drift];
    family.extend(system.diffusions.iter());
    check_commuting_family(&family)?;

    let mut exponent = system.corrected_drift() * Complex64::from(t);
    for (b, &x) in system.diffusions.iter().zip(xi) {
        exponent += b * Complex64::from(x);
    }
    Ok(mat_exp(&exponent)? * &system.initial)
}

fn check_lattice(system: &MatrixSdeSystem, lattice: &WienerLattice) -> Result<()> {
    if lattice.channels() != system.channels() {
        return Err(Error::DimensionMismatch(format!(
            "lattice has {} channels but the system has {}",
            lattice.channels(),
            system.channels()
        )));
    }
    if lattice.horizon() != system.horizon {
        return Err(Error::InvalidArgument(format!(
            "lattice horizon {} does not match the system horizon {}",
            lattice.horizon(),
            system.horizon
        )));
    }
    Ok(())
}

fn step_level(n: usize, lattice: &WienerLattice) -> Result<u32> {
    let fine = lattice.fine_steps();
    if n == 0 || !n.is_power_of_two() || n > fine {
        return Err(Error::BadStepCount { n, fine });
    }
    Ok(n.trailing_zeros())
}

/// Runs `scheme` with `n` time steps on the given driving path.
///
/// All schemes return states on the step lattice `kT/n`, except
/// `TrotterInterpolated`, which returns states at every finest-lattice time
/// (its values at the step-lattice times coincide bit-for-bit with
/// `TrotterPiecewise` by construction).
pub fn run_scheme(
    system: &MatrixSdeSystem,
    scheme: &SchemeKind,
    n: usize,
    lattice: &WienerLattice,
) -> Result<Trajectory> {
    check_lattice(system, lattice)?;
    let level = step_level(n, lattice)?;
    let dt = system.horizon / n as f64;
    let m = system.channels();

    let coarse: Vec<Vec<f64>> = (0..m)
        .map(|c| lattice.coarsen(c, level))
        .collect::<Result<_>>()?;

    let times = |count: usize| -> Vec<f64> {
        (0..=count)
            .map(|k| system.horizon * k as f64 / count as f64)
            .collect()
    };

    match scheme {
        SchemeKind::ExactCommuting => {
            let mut states = Vec::with_capacity(n + 1);
            let values: Vec<Vec<f64>> = (0..m)
                .map(|c| lattice.path_values(c, level))
                .collect::<Result<_>>()?;
            for k in 0..=n {
                let xi: Vec<f64> = (0..m).map(|c| values[c][k]).collect();
                states.push(exact_commuting_flow(system, &xi, dt * k as f64)?);
            }
            Ok(Trajectory { times: times(n), states })
        }
        SchemeKind::Reference => {
            let (reference, _) = reference_flow(system, lattice)?;
            let stride = lattice.fine_steps() / n;
            let states = (0..=n).map(|k| reference.states[k * stride].clone()).collect();
            Ok(Trajectory { times: times(n), states })
        }
        SchemeKind::EulerMaruyama => {
            let mut x = system.initial.clone();
            let mut states = vec![x.clone()];
            for k in 0..n {
                let mut next = &x + (&system.drift * &x) * Complex64::from(dt);
                for (c, b) in system.diffusions.iter().enumerate() {
                    next += (b * &x) * Complex64::from(coarse[c][k]);
                }
                x = next;
                states.push(x.clone());
            }
            Ok(Trajectory { times: times(n), states })
        }
        SchemeKind::TrotterPiecewise => {
            let free = mat_exp(&(&system.drift * Complex64::from(dt)))?;
            let mut x = system.initial.clone();
            let mut states = vec![x.clone()];
            for k in 0..n {
                for (c, b) in system.diffusions.iter().enumerate() {
                    x = b_flow(b, coarse[c][k], dt)? * x;
                }
                x = &free * x;
                states.push(x.clone());
            }
            Ok(Trajectory { times: times(n), states })
        }
        SchemeKind::TrotterInterpolated => {
            let fine = lattice.fine_steps();
            let width = fine / n;
            let h = system.horizon / fine as f64;
            let free_h = mat_exp(&(&system.drift * Complex64::from(h)))?;
            let free_step = mat_exp(&(&system.drift * Complex64::from(dt)))?;
            let values: Vec<Vec<f64>> = (0..m)
                .map(|c| lattice.path_values(c, lattice.level()))
                .collect::<Result<_>>()?;
            let mut base = system.initial.clone();
            let mut states = Vec::with_capacity(fine + 1);
            states.push(base.clone());
            for k in 0..n {
                let start = k * width;
                // Partial flows inside the step.
                let mut drift_part = CMatrix::identity(system.dim(), system.dim());
                for j in 1..width {
                    drift_part = &free_h * drift_part;
                    let tau = h * j as f64;
                    let mut x = base.clone();
                    for (c, b) in system.diffusions.iter().enumerate() {
                        let dxi = values[c][start + j] - values[c][start];
                        x = b_flow(b, dxi, tau)? * x;
                    }
                    states.push(&drift_part * x);
                }
                // Step-lattice value: identical operators to TrotterPiecewise.
                for (c, b) in system.diffusions.iter().enumerate() {
                    base = b_flow(b, coarse[c][k], dt)? * base;
                }
                base = &free_step * base;
                states.push(base.clone());
            }
            Ok(Trajectory { times: times(fine), states })
        }
        SchemeKind::FirstOrderFactored => {
            let mut x = system.initial.clone();
            let mut states = vec![x.clone()];
            for k in 0..n {
                for (c, b) in system.diffusions.iter().enumerate() {
                    x += (b * &x) * Complex64::from(coarse[c][k]);
                }
                x += (&system.drift * &x) * Complex64::from(dt);
                states.push(x.clone());
            }
            Ok(Trajectory { times: times(n), states })
        }
        SchemeKind::PartialSplit { a1, a2 } => {
            if a1.shape() != system.drift.shape() || a2.shape() != system.drift.shape() {
                return Err(Error::DimensionMismatch(
                    "split parts must match the drift dimension".into(),
                ));
            }
            if a1 + a2 != system.drift {
                return Err(Error::SplitMismatch);
            }
            for b in &system.diffusions {
                check_commuting_pair(a2, b)?;
            }
            let diffs: Vec<&CMatrix> = system.diffusions.iter().collect();
            check_commuting_family(&diffs)?;

            let outer = mat_exp(&(a1 * Complex64::from(dt)))?;
            let mut corrected = a2.clone();
            for b in &system.diffusions {
                corrected -= (b * b) * Complex64::from(0.5);
            }
            let mut x = system.initial.clone();
            let mut states = vec![x.clone()];
            for k in 0..n {
                let mut exponent = &corrected * Complex64::from(dt);
                for (c, b) in system.diffusions.iter().enumerate() {
                    exponent += b * Complex64::from(coarse[c][k]);
                }
                x = &outer * (mat_exp(&exponent)? * x);
                states.push(x.clone());
            }
            Ok(Trajectory { times: times(n), states })
        }
    }
}

/// Best available stand-in for the true flow on this path, at the finest
/// lattice resolution. Returns the trajectory and whether it is exact
/// (closed form, commuting generators) or approximate (finest-level
/// Euler-Maruyama).
pub fn reference_flow(
    system: &MatrixSdeSystem,
    lattice: &WienerLattice,
) -> Result<(Trajectory, bool)> {
    check_lattice(system, lattice)?;
    let fine = lattice.fine_steps();
    let mut family: Vec<&CMatrix> = vec![&system.drift];
    family.extend(system.diffusions.iter());
    let commuting = check_commuting_family(&family).is_ok();
    let scheme = if commuting {
        SchemeKind::ExactCommuting
    } else {
        SchemeKind::EulerMaruyama
    };
    Ok((run_scheme(system, &scheme, fine, lattice)?, commuting))
}

/// Mean and standard error of a Monte-Carlo estimate of the squared
/// sup-distance to the reference flow.
#[derive(Clone, Copy, Debug)]
pub struct MseEstimate {
    pub mse: f64,
    pub stderr: f64,
}

fn sup_sq_deviation(traj: &Trajectory, reference: &Trajectory, fine: usize) -> f64 {
    let stride = fine / (traj.times.len() - 1);
    traj.states
        .iter()
        .enumerate()
        .map(|(k, x)| (x - &reference.states[k * stride]).norm_squared())
        .fold(0.0f64, f64::max)
}

/// Monte-Carlo estimate of `E sup_k ‖X_scheme(t_k) - X_ref(t_k)‖²` over
/// `paths` independent driving paths of resolution `2^fine_level`, coupled
/// through the shared lattice.
pub fn sup_error_mc(
    system: &MatrixSdeSystem,
    scheme: &SchemeKind,
    n: usize,
    paths: u64,
    master_seed: u64,
    fine_level: u32,
) -> Result<MseEstimate> {
    let sups = per_path_sups(system, &[(scheme.clone(), n)], paths, master_seed, fine_level)?;
    let (mse, stderr) = mean_and_stderr(&sups[0])?;
    Ok(MseEstimate { mse, stderr })
}

/// Per-path squared sup-deviations for several (scheme, n) pairs sharing one
/// reference run per path. Outer index: the pair; inner: the path.
fn per_path_sups(
    system: &MatrixSdeSystem,
    runs: &[(SchemeKind, usize)],
    paths: u64,
    master_seed: u64,
    fine_level: u32,
) -> Result<Vec<Vec<f64>>> {
    if paths < 2 {
        return Err(Error::InvalidArgument("need at least two paths".into()));
    }
    let per_path: Vec<Vec<f64>> = (0..paths)
        .into_par_iter()
        .map(|p| {
            let lattice = WienerLattice::generate(
                master_seed,
                p,
                system.channels(),
                fine_level,
                system.horizon,
            )?;
            let (reference, _) = reference_flow(system, &lattice)?;
            runs.iter()
                .map(|(scheme, n)| {
                    let traj = run_scheme(system, scheme, *n, &lattice)?;
                    Ok(sup_sq_deviation(&traj, &reference, lattice.fine_steps()))
                })
                .collect::<Result<Vec<f64>>>()
        })
        .collect::<Result<_>>()?;
    let mut out = vec![Vec::with_capacity(paths as usize); runs.len()];
    for row in per_path {
        for (slot, v) in out.iter_mut().zip(row) {
            slot.push(v);
        }
    }
    Ok(out)
}

/// One row of a convergence study.
#[derive(Clone, Copy, Debug)]
pub struct ConvergenceRow {
    pub n: usize,
    pub mse: f64,
    pub stderr: f64,
}

/// Mean-square errors across step counts for one scheme, with the fitted
/// log-log slope.
#[derive(Clone, Debug)]
pub struct ConvergenceReport {
    pub scheme: String,
    pub rows: Vec<ConvergenceRow>,
    pub fitted_slope: f64,
}

impl ConvergenceReport {
    pub fn strictly_decreasing(&self) -> bool {
        self.rows.windows(2).all(|w| w[1].mse < w[0].mse)
    }
}

fn fit_loglog_slope(rows: &[ConvergenceRow]) -> f64 {
    let xs: Vec<f64> = rows.iter().map(|r| (r.n as f64).ln()).collect();
    let ys: Vec<f64> = rows.iter().map(|r| r.mse.max(f64::MIN_POSITIVE).ln()).collect();
    let n = xs.len() as f64;
    let mx = pairwise_sum(&xs) / n;
    let my = pairwise_sum(&ys) / n;
    let cov: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let var: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    cov / var
}

/// Coupled convergence study: all schemes and step counts are measured
/// against one reference run per path, driven by the same lattice.
pub fn convergence_study(
    system: &MatrixSdeSystem,
    schemes: &[SchemeKind],
    n_values: &[usize],
    paths: u64,
    master_seed: u64,
    fine_level: u32,
) -> Result<Vec<ConvergenceReport>> {
    if schemes.is_empty() || n_values.is_empty() {
        return Err(Error::EmptyInput("convergence study"));
    }
    let runs: Vec<(SchemeKind, usize)> = schemes
        .iter()
        .flat_map(|s| n_values.iter().map(move |&n| (s.clone(), n)))
        .collect();
    let sups = per_path_sups(system, &runs, paths, master_seed, fine_level)?;
    let mut reports = Vec::with_capacity(schemes.len());
    for (si, scheme) in schemes.iter().enumerate() {
        let mut rows = Vec::with_capacity(n_values.len());
        for (ni, &n) in n_values.iter().enumerate() {
            let (mse, stderr) = mean_and_stderr(&sups[si * n_values.len() + ni])?;
            rows.push(ConvergenceRow { n, mse, stderr });
        }
        let fitted_slope = fit_loglog_slope(&rows);
        reports.push(ConvergenceReport {
            scheme: scheme.label().to_string(),
            rows,
            fitted_slope,
        });
    }
    Ok(reports)
}

/// Largest signed dissipativity residual
/// `Σ_j ‖L_j ψ‖² - 2 Re⟨K ψ, ψ⟩ - c ‖ψ‖²` over the trial states.
/// Nonpositive residuals certify the dissipativity inequality on the trials.
pub fn dissipativity_residual(
    k_op: &CMatrix,
    l_ops: &[CMatrix],
    c: f64,
    trials: &[CVector],
) -> Result<f64> {
    let d = k_op.nrows();
    if k_op.ncols() != d {
        return Err(Error::DimensionMismatch("K must be square".into()));
    }
    if trials.is_empty() {
        return Err(Error::EmptyInput("trial states"));
    }
    for l in l_ops {
        if l.nrows() != d || l.ncols() != d {
            return Err(Error::DimensionMismatch("L_j must match K".into()));
        }
    }
    let mut worst = f64::NEG_INFINITY;
    for psi in trials {
        if psi.len() != d {
            return Err(Error::DimensionMismatch("trial state dimension".into()));
        }
        let mut value = 0.0;
        for l in l_ops {
            value += (l * psi).norm_squared();
        }
        value -= 2.0 * (k_op * psi).dotc(psi).re;
        value -= c * psi.norm_squared();
        worst = worst.max(value);
    }
    Ok(worst)
}

/// Per-path ratio exposing why the noise generator cannot be split: for
/// `dX = 2X dξ`, stepping with the `B = 1` flow applied twice per step yields
/// `exp(2ξ_t - t) x₀` instead of the true `exp(2ξ_t - 2t) x₀`, so the ratio
/// at time `t` is exactly `e^t` on every path, for every step count.
pub fn stochastic_split_counterexample(lattice: &WienerLattice, n: usize, t: f64) -> Result<f64> {
    let level = step_level(n, lattice)?;
    let dt = lattice.horizon() / n as f64;
    let steps = (t / dt).round() as usize;
    if steps == 0 || steps > n || (steps as f64 * dt - t).abs() > 1e-9 * t.max(1.0) {
        return Err(Error::InvalidArgument(format!(
            "t = {t} must be a positive step-lattice time (dt = {dt})"
        )));
    }
    let unit = CMatrix::from_element(1, 1, Complex64::from(1.0));
    let increments = lattice.coarsen(0, level)?;
    let mut product = 1.0f64;
    for &dxi in increments.iter().take(steps) {
        let factor = b_flow(&unit, dxi, dt)?[(0, 0)].re;
        product *= factor * factor;
    }
    let xi_t = lattice.path_values(0, level)?[steps];
    let truth = (2.0 * xi_t - 2.0 * t).exp();
    Ok(product / truth)
}
