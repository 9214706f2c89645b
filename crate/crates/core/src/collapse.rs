//! Discrete and continuous spontaneous-collapse dynamics on the spectral
//! grid, and the statistical studies connecting them.
//!
//! Two models are implemented:
//!
//! * **Discrete-hit model** (`grw_*`): at deterministic times `k/μ` the wave
//!   function is (optionally) evolved freely, hit with a Gaussian
//!   localization factor `(α/π)^{1/4} e^{-(α/2)(x-Y)²}` at a random flash
//!   position `Y`, and renormalized. The flash is sampled exactly from its
//!   grid-discretized density — a categorical draw `X` from `|φ|²dx`
//!   followed by `Y = X + N(0, 1/(2α))`, which realizes the convolution
//!   structure of the flash density.
//!
//! * **Continuous model** (`qmupl_*`): the linear conservative equation with
//!   noise operator `√λ·x`, simulated under the reference measure by the
//!   product formula. Physical statistics are recovered by importance
//!   weighting with `w = ‖ψ_t‖²` (a martingale with mean one); the weight is
//!   accumulated as the product of per-collapse-factor norm ratios, so a
//!   noise-free run carries weight exactly 1.
//!
//! With the kinetic factor off and the linked scaling `μα = 2λ`, the two
//! models coincide exactly: the hit positions `Y_k` correspond to the scaled
//! window increments `Z_k = (μ/(2√λ))(ξ_{k/μ} - ξ_{(k-1)/μ})`, and the map
//! from `(Z_1,…,Z_k)` to the normalized state is the same Gaussian
//! multiplication as the hit map. The continuum-limit study quantifies how
//! the full dynamics (kinetic factor on) approach each other as `α ↓ 0` with
//! `μ = 2λ/α`, and two decoherence-rate identities serve as independent
//! oracles.

use rayon::prelude::*;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::numerics::stats::{
    ks_distance, ks_two_sample_critical, mean_and_stderr, pairwise_sum, weighted_mean_and_stderr,
    weighted_moments, WeightedSample,
};
use crate::rng::{CounterRng, FLASH_STREAM, RESAMPLE_STREAM};
use crate::spectral::{
    collapse_flow, free_propagate, gaussian_packet, GridState, Observables, SpatialGrid,
};
use crate::wiener::WienerLattice;

/// Parameters shared by the collapse simulations. `lambda` is the continuous
/// noise intensity, `alpha` the localization sharpness of a hit, `mu` the hit
/// rate; the linked scaling ties them together as `μ = 2λ/α`.
#[derive(Clone, Debug)]
pub struct CollapseConfig {
    pub lambda: f64,
    pub alpha: f64,
    pub mu: f64,
    pub horizon: f64,
    pub include_h: bool,
    pub ensemble: u64,
    pub master_seed: u64,
    pub grid_half_width: f64,
    pub grid_points: usize,
    pub x0: f64,
    pub p0: f64,
    pub sigma: f64,
}

/// The hit rate that links the discrete model to intensity `lambda` at
/// sharpness `alpha`.
pub fn linked_mu(lambda: f64, alpha: f64) -> f64 {
    2.0 * lambda / alpha
}

impl CollapseConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = |name: &str, v: f64| -> Result<()> {
            if !v.is_finite() || v <= 0.0 {
                return Err(Error::InvalidArgument(format!(
                    "{name} must be positive and finite, got {v}"
                )));
            }
            Ok(())
        };
        if !self.lambda.is_finite() || self.lambda < 0.0 {
            return Err(Error::InvalidArgument(format!(
                "noise intensity must be nonnegative, got {}",
                self.lambda
            )));
        }
        positive("localization sharpness", self.alpha)?;
        positive("hit rate", self.mu)?;
        positive("horizon", self.horizon)?;
        positive("packet width", self.sigma)?;
        if self.ensemble < 2 {
            return Err(Error::InvalidArgument(
                "ensemble needs at least two paths".into(),
            ));
        }
        Ok(())
    }

    /// True when the hit rate reproduces the linked scaling `μ = 2λ/α`.
    pub fn scaling_linked(&self) -> bool {
        self.mu == linked_mu(self.lambda, self.alpha)
    }

    pub fn grid(&self) -> Result<SpatialGrid> {
        SpatialGrid::new(self.grid_half_width, self.grid_points)
    }

    pub fn initial_state(&self) -> Result<GridState> {
        gaussian_packet(&self.grid()?, self.x0, self.p0, self.sigma)
    }

    /// Number of hits up to the horizon, `⌊μT⌋` (with a tiny slack so exact
    /// products like `μT = 4` are not lost to rounding).
    pub fn hits(&self) -> usize {
        (self.mu * self.horizon + 1e-9).floor() as usize
    }
}

/// Flash times `k/μ` and sampled positions `Y_k`.
#[derive(Clone, Debug)]
pub struct FlashRecord {
    pub times: Vec<f64>,
    pub positions: Vec<f64>,
}

/// One discrete-model path: flashes plus the observables of the normalized
/// state after each hit.
#[derive(Clone, Debug)]
pub struct GrwTrajectory {
    pub path_id: u64,
    pub flashes: FlashRecord,
    pub observables: Vec<(f64, Observables)>,
}

/// One continuous-model path record at a lattice time.
#[derive(Clone, Copy, Debug)]
pub struct PathRecord {
    pub t: f64,
    pub mean_x: f64,
    pub var_x: f64,
    pub norm2: f64,
    pub weight: f64,
}

/// One continuous-model path: per-time records, the terminal importance
/// weight, and (when hit extraction is on) the scaled window increments
/// `Z_k` with the running weight at each hit time.
#[derive(Clone, Debug)]
pub struct EnsemblePath {
    pub path_id: u64,
    pub terminal_weight: f64,
    pub records: Vec<PathRecord>,
    pub hit_z: Vec<f64>,
    pub hit_weights: Vec<f64>,
}

/// A weighted ensemble of continuous-model paths under the reference
/// measure.
#[derive(Clone, Debug)]
pub struct WeightedEnsemble {
    pub paths: Vec<EnsemblePath>,
}

impl WeightedEnsemble {
    /// Mean terminal weight with its standard error; the martingale property
    /// makes the mean equal `‖ψ₀‖² = 1` in expectation.
    pub fn mean_weight(&self) -> Result<(f64, f64)> {
        let w: Vec<f64> = self.paths.iter().map(|p| p.terminal_weight).collect();
        mean_and_stderr(&w)
    }

    /// Effective sample size `Σw / max(w)` of the terminal weights.
    pub fn ess(&self) -> f64 {
        ess_of(&self.paths.iter().map(|p| p.terminal_weight).collect::<Vec<_>>())
    }
}

fn ess_of(weights: &[f64]) -> f64 {
    let total = pairwise_sum(weights);
    let max = weights.iter().fold(0.0f64, |a, &b| a.max(b));
    if max > 0.0 {
        total / max
    } else {
        0.0
    }
}

/// Kish effective size `(Σw)² / Σw²`: the sample size whose unweighted
/// empirical distribution has the same pointwise variance as the weighted
/// one. This is the right scale for distribution-level noise (KS), whereas
/// `ess_of` (`Σw / max w`) is the stricter tail-degeneracy diagnostic.
fn kish_ess_of(weights: &[f64]) -> f64 {
    let total = pairwise_sum(weights);
    let squares: Vec<f64> = weights.iter().map(|w| w * w).collect();
    let total_sq = pairwise_sum(&squares);
    if total_sq > 0.0 {
        total * total / total_sq
    } else {
        0.0
    }
}

/// One hit of the discrete model: optional free evolution over `1/μ`, an
/// exact flash draw, Gaussian localization, renormalization. Returns the
/// post-hit state and the flash position.
pub fn grw_step(
    state: &GridState,
    alpha: f64,
    mu: f64,
    include_h: bool,
    rng: &mut CounterRng,
) -> Result<(GridState, f64)> {
    if !alpha.is_finite() || alpha <= 0.0 {
        return Err(Error::InvalidArgument(format!(
            "localization sharpness must be positive, got {alpha}"
        )));
    }
    if include_h && (!mu.is_finite() || mu <= 0.0) {
        return Err(Error::InvalidArgument(format!(
            "hit rate must be positive when the kinetic factor is on, got {mu}"
        )));
    }
    let evolved = if include_h {
        free_propagate(state, 1.0 / mu)?
    } else {
        state.clone()
    };
    let grid = evolved.grid().clone();
    // Categorical draw from the grid density |φ|² dx.
    let masses: Vec<f64> = evolved.values().iter().map(|z| z.norm_sqr()).collect();
    let total = pairwise_sum(&masses);
    if total <= 0.0 || !total.is_finite() {
        return Err(Error::ZeroNorm);
    }
    let target = rng.next_uniform() * total;
    let mut acc = 0.0;
    let mut index = masses.len() - 1;
    for (k, m) in masses.iter().enumerate() {
        acc += m;
        if acc >= target {
            index = k;
            break;
        }
    }
    let y = grid.nodes()[index] + rng.next_normal() / (2.0 * alpha).sqrt();
    let amp = (alpha / std::f64::consts::PI).powf(0.25);
    let values: Vec<Complex64> = evolved
        .values()
        .iter()
        .zip(grid.nodes())
        .map(|(z, &x)| z * Complex64::from(amp * (-0.5 * alpha * (x - y) * (x - y)).exp()))
        .collect();
    let hit = GridState::from_values(&grid, values)?.normalize()?;
    Ok((hit, y))
}

/// Grid-discretized flash density evaluated at the query points: the
/// convolution of `|e^{-iH/μ}φ|² dx` with the `N(0, 1/(2α))` kernel.
pub fn flash_density(
    state: &GridState,
    alpha: f64,
    mu: f64,
    include_h: bool,
    ys: &[f64],
) -> Result<Vec<f64>> {
    if !alpha.is_finite() || alpha <= 0.0 {
        return Err(Error::InvalidArgument(format!(
            "localization sharpness must be positive, got {alpha}"
        )));
    }
    let evolved = if include_h {
        free_propagate(state, 1.0 / mu)?
    } else {
        state.clone()
    };
    let grid = evolved.grid();
    let kernel_amp = (alpha / std::f64::consts::PI).sqrt();
    let dx = grid.dx();
    Ok(ys
        .iter()
        .map(|&y| {
            let terms: Vec<f64> = evolved
                .values()
                .iter()
                .zip(grid.nodes())
                .map(|(z, &x)| kernel_amp * (-alpha * (y - x) * (y - x)).exp() * z.norm_sqr())
                .collect();
            pairwise_sum(&terms) * dx
        })
        .collect())
}

/// One full discrete-model path with `⌊μT⌋` hits at times `k/μ`.
pub fn grw_trajectory(config: &CollapseConfig, path_id: u64) -> Result<GrwTrajectory> {
    config.validate()?;
    let mu_t = config.mu * config.horizon;
    if config.hits() < 1 {
        return Err(Error::TooFewCollapses { mu_t, min: 1.0 });
    }
    let hits = config.hits();
    let mut rng = CounterRng::new(config.master_seed, path_id, FLASH_STREAM);
    let mut state = config.initial_state()?;
    let mut times = Vec::with_capacity(hits);
    let mut positions = Vec::with_capacity(hits);
    let mut observables = Vec::with_capacity(hits);
    for k in 1..=hits {
        let (next, y) = grw_step(&state, config.alpha, config.mu, config.include_h, &mut rng)?;
        state = next;
        state.check_tails()?;
        let t = k as f64 / config.mu;
        times.push(t);
        positions.push(y);
        observables.push((t, state.observables()?));
    }
    Ok(GrwTrajectory {
        path_id,
        flashes: FlashRecord { times, positions },
        observables,
    })
}

/// Independent discrete-model paths `0..ensemble`.
pub fn grw_ensemble(config: &CollapseConfig) -> Result<Vec<GrwTrajectory>> {
    config.validate()?;
    (0..config.ensemble)
        .into_par_iter()
        .map(|p| grw_trajectory(config, p))
        .collect()
}

/// Continuous-model ensemble under the reference measure.
///
/// Each path runs the product formula with `n` steps (noise factor, then the
/// kinetic factor when `include_h`), recording observables of the normalized
/// state every `record_stride` steps. The importance weight is the running
/// product of per-collapse-factor norm ratios, which equals `‖ψ_t‖²/‖ψ₀‖²`
/// in exact arithmetic and is exactly 1 when `lambda = 0`.
///
/// With `extract_hits`, the scaled window increments
/// `Z_k = (μ/(2√λ))(ξ_{k/μ} - ξ_{(k-1)/μ})` and the running weight at each
/// hit time are recorded; this requires `λ > 0` and `μT` to be a power of
/// two no larger than `n`.
pub fn qmupl_ensemble(
    config: &CollapseConfig,
    n: usize,
    record_stride: usize,
    extract_hits: bool,
) -> Result<WeightedEnsemble> {
    config.validate()?;
    if !n.is_power_of_two() {
        return Err(Error::BadStepCount { n, fine: n });
    }
    if record_stride == 0 || n % record_stride != 0 {
        return Err(Error::InvalidArgument(format!(
            "record stride {record_stride} must divide the step count {n}"
        )));
    }
    let hits = config.hits();
    if extract_hits {
        let mu_t = config.mu * config.horizon;
        if (mu_t - hits as f64).abs() > 1e-9 || hits == 0 || !hits.is_power_of_two() || hits > n {
            return Err(Error::Precondition(format!(
                "hit extraction needs μT to be a power of two between 1 and n, got μT = {mu_t}"
            )));
        }
        if config.lambda <= 0.0 {
            return Err(Error::Precondition(
                "hit extraction needs positive noise intensity".into(),
            ));
        }
    }
    let initial = config.initial_state()?;
    let level = n.trailing_zeros();
    let dt = config.horizon / n as f64;
    let root_lambda = config.lambda.sqrt();
    let window = if extract_hits { n / hits } else { 0 };
    let paths: Vec<EnsemblePath> = (0..config.ensemble)
        .into_par_iter()
        .map(|path_id| {
            let lattice = WienerLattice::generate(
                config.master_seed,
                path_id,
                1,
                level,
                config.horizon,
            )?;
            let increments = lattice.coarsen(0, level)?;
            let mut x = initial.clone();
            x.check_tails()?;
            let mut weight = 1.0f64;
            let obs0 = x.observables()?;
            let mut records = vec![PathRecord {
                t: 0.0,
                mean_x: obs0.mean_x,
                var_x: obs0.var_x,
                norm2: obs0.norm2,
                weight,
            }];
            let mut hit_weights = Vec::new();
            for k in 0..n {
                let before = x.norm2();
                x = collapse_flow(&x, &[root_lambda * increments[k]], config.lambda * dt, 0.0)?;
                weight *= x.norm2() / before;
                if config.include_h {
                    x = free_propagate(&x, dt)?;
                }
                x.check_tails()?;
                if extract_hits && (k + 1) % window == 0 {
                    hit_weights.push(weight);
                }
                if (k + 1) % record_stride == 0 {
                    let obs = x.observables()?;
                    records.push(PathRecord {
                        t: dt * (k + 1) as f64,
                        mean_x: obs.mean_x,
                        var_x: obs.var_x,
                        norm2: obs.norm2,
                        weight,
                    });
                }
            }
            let hit_z = if extract_hits {
                let sums = lattice.coarsen(0, hits.trailing_zeros())?;
                let scale = config.mu / (2.0 * root_lambda);
                sums.iter().map(|s| scale * s).collect()
            } else {
                Vec::new()
            };
            Ok(EnsemblePath {
                path_id,
                terminal_weight: weight,
                records,
                hit_z,
                hit_weights,
            })
        })
        .collect::<Result<_>>()?;
    Ok(WeightedEnsemble { paths })
}

/// The discrete-model hit map with the kinetic factor off: multiplies the
/// localization Gaussians for all given positions and renormalizes. With
/// `α = 2λ/μ` this is exactly the continuous model's normalized state at the
/// matching hit time, as a function of `(Z_1, …, Z_k)`.
pub fn grw_map_h0(state: &GridState, alpha: f64, positions: &[f64]) -> Result<GridState> {
    let grid = state.grid().clone();
    let values: Vec<Complex64> = state
        .values()
        .iter()
        .zip(grid.nodes())
        .map(|(z, &x)| {
            let mut exponent = 0.0;
            for &y in positions {
                exponent -= 0.5 * alpha * (x - y) * (x - y);
            }
            z * Complex64::from(exponent.exp())
        })
        .collect();
    GridState::from_values(&grid, values)?.normalize()
}

/// Maximum pointwise deviation, over the first `sample_paths` paths and all
/// hit times, between the normalized continuous-model state and the discrete
/// hit map evaluated at that path's scaled window increments. With the
/// linked scaling and the kinetic factor off this is an exact identity, so
/// the returned value is pure floating-point noise (well below 1e-10).
pub fn equivalence_state_deviation(
    config: &CollapseConfig,
    n: usize,
    sample_paths: u64,
) -> Result<f64> {
    config.validate()?;
    if config.include_h {
        return Err(Error::Precondition(
            "the exact equivalence holds with the kinetic factor off".into(),
        ));
    }
    if !config.scaling_linked() {
        return Err(Error::Precondition(
            "the equivalence check needs the linked scaling μ = 2λ/α".into(),
        ));
    }
    if sample_paths == 0 {
        return Err(Error::EmptyInput("sample paths"));
    }
    if !n.is_power_of_two() {
        return Err(Error::BadStepCount { n, fine: n });
    }
    let hits = config.hits();
    let mu_t = config.mu * config.horizon;
    if (mu_t - hits as f64).abs() > 1e-9 || hits == 0 || !hits.is_power_of_two() || hits > n {
        return Err(Error::Precondition(format!(
            "hit extraction needs μT to be a power of two between 1 and n, got μT = {mu_t}"
        )));
    }
    if config.lambda <= 0.0 {
        return Err(Error::Precondition(
            "hit extraction needs positive noise intensity".into(),
        ));
    }
    let initial = config.initial_state()?;
    let level = n.trailing_zeros();
    let dt = config.horizon / n as f64;
    let root_lambda = config.lambda.sqrt();
    let window = n / hits;
    let deviations: Vec<f64> = (0..sample_paths)
        .into_par_iter()
        .map(|path_id| {
            let lattice = WienerLattice::generate(
                config.master_seed,
                path_id,
                1,
                level,
                config.horizon,
            )?;
            let increments = lattice.coarsen(0, level)?;
            let sums = lattice.coarsen(0, hits.trailing_zeros())?;
            let scale = config.mu / (2.0 * root_lambda);
            let z: Vec<f64> = sums.iter().map(|s| scale * s).collect();
            let mut x = initial.clone();
            let mut dev = 0.0f64;
            for k in 0..n {
                x = collapse_flow(&x, &[root_lambda * increments[k]], config.lambda * dt, 0.0)?;
                x.check_tails()?;
                if (k + 1) % window == 0 {
                    let hit = (k + 1) / window;
                    let normalized = x.normalize()?;
                    let mapped = grw_map_h0(&initial, config.alpha, &z[..hit])?;
                    for (a, b) in normalized.values().iter().zip(mapped.values()) {
                        dev = dev.max((a - b).norm());
                    }
                }
            }
            Ok(dev)
        })
        .collect::<Result<_>>()?;
    Ok(deviations.iter().fold(0.0, |a, &b| a.max(b)))
}

/// Per-hit comparison between discrete flashes `Y_k` and weighted continuous
/// increments `Z_k`.
#[derive(Clone, Copy, Debug)]
pub struct HitComparison {
    pub hit: usize,
    pub t: f64,
    pub ks: f64,
    pub ks_critical_1pct: f64,
    pub mean_y: f64,
    pub mean_z_weighted: f64,
    pub d_mean: f64,
    pub d_mean_se: f64,
    pub var_y: f64,
    pub var_z_weighted: f64,
    pub var_q_z: f64,
    pub var_q_z_se: f64,
    pub ess: f64,
    pub ess_kish: f64,
}

/// Exact-equivalence report for the kinetic-free case.
#[derive(Clone, Debug)]
pub struct EquivalenceReport {
    pub paths: u64,
    pub hits: Vec<HitComparison>,
}

fn unweighted_mean_var_se(xs: &[f64]) -> Result<(f64, f64, f64, f64)> {
    let (mean, se) = mean_and_stderr(xs)?;
    let centered2: Vec<f64> = xs.iter().map(|x| (x - mean) * (x - mean)).collect();
    let var = pairwise_sum(&centered2) / (xs.len() as f64 - 1.0);
    let centered4: Vec<f64> = centered2.iter().map(|c| (c - var) * (c - var)).collect();
    let var_of_var = pairwise_sum(&centered4) / (xs.len() as f64 - 1.0);
    let var_se = (var_of_var / xs.len() as f64).sqrt();
    Ok((mean, se, var, var_se))
}

/// Compares the discrete and continuous models with the kinetic factor off,
/// where the equivalence is exact in law: per hit, the KS distance between
/// the `Y_k` sample and the weighted `Z_k` sample, moment deltas, the
/// reference-measure variance of `Z_k` (which must be `1/(2α)`), and the
/// effective sample size.
pub fn equivalence_check_h0(config: &CollapseConfig, n: usize) -> Result<EquivalenceReport> {
    config.validate()?;
    if config.include_h {
        return Err(Error::Precondition(
            "the exact equivalence holds with the kinetic factor off".into(),
        ));
    }
    if !config.scaling_linked() {
        return Err(Error::Precondition(
            "the equivalence check needs the linked scaling μ = 2λ/α".into(),
        ));
    }
    let qm = qmupl_ensemble(config, n, n / config.hits(), true)?;
    let grw = grw_ensemble(config)?;
    let hits = config.hits();
    let p = config.ensemble as usize;
    let mut rows = Vec::with_capacity(hits);
    for k in 0..hits {
        let y: Vec<f64> = grw.iter().map(|g| g.flashes.positions[k]).collect();
        let z: Vec<WeightedSample> = qm
            .paths
            .iter()
            .map(|path| WeightedSample {
                value: path.hit_z[k],
                weight: path.hit_weights[k],
            })
            .collect();
        let ks = ks_distance(&y, &z)?;
        let (mean_y, se_y, var_y, _) = unweighted_mean_var_se(&y)?;
        let (mean_z, se_z) = weighted_mean_and_stderr(&z)?;
        let moments = weighted_moments(&z, 2)?;
        let var_z = moments[1] - moments[0] * moments[0];
        let z_raw: Vec<f64> = z.iter().map(|s| s.value).collect();
        let (_, _, var_q, var_q_se) = unweighted_mean_var_se(&z_raw)?;
        let weights: Vec<f64> = z.iter().map(|s| s.weight).collect();
        rows.push(HitComparison {
            hit: k + 1,
            t: (k + 1) as f64 / config.mu,
            ks,
            ks_critical_1pct: ks_two_sample_critical(p, p, 0.01),
            mean_y,
            mean_z_weighted: mean_z,
            d_mean: (mean_y - mean_z).abs(),
            d_mean_se: (se_y * se_y + se_z * se_z).sqrt(),
            var_y,
            var_z_weighted: var_z,
            var_q_z: var_q,
            var_q_z_se: var_q_se,
            ess: ess_of(&weights),
            ess_kish: kish_ess_of(&weights),
        });
    }
    Ok(EquivalenceReport {
        paths: config.ensemble,
        hits: rows,
    })
}

/// Parameters of the continuum-limit study: discrete-model runs at
/// decreasing sharpness `α` (rate `μ = 2λ/α`) against one fine continuous
/// reference ensemble, compared through scalar observables at `T/2` and `T`.
#[derive(Clone, Debug)]
pub struct ContinuumStudyConfig {
    pub lambda: f64,
    pub horizon: f64,
    pub alphas: Vec<f64>,
    pub paths: u64,
    pub master_seed: u64,
    pub include_h: bool,
    pub grid_half_width: f64,
    pub grid_points: usize,
    pub x0: f64,
    pub p0: f64,
    pub sigma: f64,
    pub reference_steps: usize,
    pub bootstrap: usize,
}

/// One distance row of the continuum-limit study.
#[derive(Clone, Debug)]
pub struct DistanceRow {
    pub alpha: f64,
    pub mu: f64,
    pub t: f64,
    pub observable: &'static str,
    pub ks: f64,
    pub ks_se: f64,
    pub d_mean: f64,
    pub d_mean_se: f64,
    pub d_var: f64,
    pub ess: f64,
}

/// Same-distribution KS noise floor at the study's sample sizes.
#[derive(Clone, Debug)]
pub struct FloorRow {
    pub t: f64,
    pub observable: &'static str,
    pub floor: f64,
}

/// Full continuum-limit report.
#[derive(Clone, Debug)]
pub struct ContinuumReport {
    pub paths: u64,
    pub rows: Vec<DistanceRow>,
    pub floors: Vec<FloorRow>,
}

fn resample_uniform(rng: &mut CounterRng, len: usize) -> usize {
    (rng.next_uniform() * len as f64) as usize
}

fn resample_weighted(rng: &mut CounterRng, cumulative: &[f64]) -> usize {
    let total = *cumulative.last().expect("nonempty cumulative weights");
    let target = rng.next_uniform() * total;
    cumulative.partition_point(|&c| c < target).min(cumulative.len() - 1)
}

/// Bootstrap standard error of the KS distance between an unweighted and a
/// weighted sample: both sides are resampled by path.
fn ks_bootstrap_se(
    a: &[f64],
    b: &[WeightedSample],
    reps: usize,
    master_seed: u64,
    tag: u64,
) -> Result<f64> {
    let kss: Vec<f64> = (0..reps as u64)
        .into_par_iter()
        .map(|r| {
            let mut rng = CounterRng::new(master_seed, tag + r, RESAMPLE_STREAM);
            let aa: Vec<f64> = (0..a.len()).map(|_| a[resample_uniform(&mut rng, a.len())]).collect();
            let bb: Vec<WeightedSample> = (0..b.len())
                .map(|_| b[resample_uniform(&mut rng, b.len())])
                .collect();
            ks_distance(&aa, &bb)
        })
        .collect::<Result<_>>()?;
    let (_, se_of_mean) = mean_and_stderr(&kss)?;
    // mean_and_stderr returns SE of the mean; the spread of replicates is
    // the bootstrap SE of the statistic itself.
    Ok(se_of_mean * (kss.len() as f64).sqrt())
}

/// Expected KS distance when both samples come from the weighted reference
/// distribution itself, at the study's sample sizes.
fn ks_same_distribution_floor(
    b: &[WeightedSample],
    draw_count: usize,
    reps: usize,
    master_seed: u64,
    tag: u64,
) -> Result<f64> {
    let mut cumulative = Vec::with_capacity(b.len());
    let mut acc = 0.0;
    for s in b {
        acc += s.weight;
        cumulative.push(acc);
    }
    let kss: Vec<f64> = (0..reps as u64)
        .into_par_iter()
        .map(|r| {
            let mut rng = CounterRng::new(master_seed, tag + r, RESAMPLE_STREAM);
            let aa: Vec<f64> = (0..draw_count)
                .map(|_| b[resample_weighted(&mut rng, &cumulative)].value)
                .collect();
            let bb: Vec<WeightedSample> = (0..b.len())
                .map(|_| b[resample_uniform(&mut rng, b.len())])
                .collect();
            ks_distance(&aa, &bb)
        })
        .collect::<Result<_>>()?;
    let (mean, _) = mean_and_stderr(&kss)?;
    Ok(mean)
}

/// Runs the continuum-limit study. For each `α` (paired with `μ = 2λ/α`,
/// requiring `μT ≥ 4` and an even integer number of hits), the discrete
/// ensemble's observables at `t ∈ {T/2, T}` are compared to the continuous
/// reference through the weighted KS distance (with bootstrap SE) and moment
/// deltas; the same-distribution KS floor is estimated from the reference.
pub fn continuum_limit_study(study: &ContinuumStudyConfig) -> Result<ContinuumReport> {
    if study.alphas.is_empty() {
        return Err(Error::EmptyInput("sharpness list"));
    }
    if !study.alphas.windows(2).all(|w| w[1] < w[0]) {
        return Err(Error::InvalidArgument(
            "sharpness list must be strictly decreasing".into(),
        ));
    }
    if study.bootstrap < 10 {
        return Err(Error::InvalidArgument(
            "need at least 10 bootstrap replicates".into(),
        ));
    }
    if study.lambda <= 0.0 || !study.lambda.is_finite() {
        return Err(Error::InvalidArgument(
            "the continuum study needs positive noise intensity".into(),
        ));
    }
    let n_ref = study.reference_steps;
    if !n_ref.is_power_of_two() || n_ref < 2 {
        return Err(Error::BadStepCount {
            n: n_ref,
            fine: n_ref,
        });
    }
    // Reference config: the continuous dynamics ignore α and μ, but the
    // struct requires the linked pair to be present and positive.
    let reference_config = CollapseConfig {
        lambda: study.lambda,
        alpha: study.alphas[0],
        mu: linked_mu(study.lambda, study.alphas[0]),
        horizon: study.horizon,
        include_h: study.include_h,
        ensemble: study.paths,
        master_seed: study.master_seed,
        grid_half_width: study.grid_half_width,
        grid_points: study.grid_points,
        x0: study.x0,
        p0: study.p0,
        sigma: study.sigma,
    };
    let reference = qmupl_ensemble(&reference_config, n_ref, n_ref / 2, false)?;
    // records[1] is t = T/2, records[2] is t = T.
    let times = [study.horizon / 2.0, study.horizon];
    let observable_names = ["mean_x", "var_x"];
    let pick = |record: &PathRecord, which: usize| -> f64 {
        if which == 0 {
            record.mean_x
        } else {
            record.var_x
        }
    };
    let mut reference_samples: Vec<Vec<WeightedSample>> = Vec::new();
    for record_index in [1usize, 2] {
        for which in 0..2 {
            reference_samples.push(
                reference
                    .paths
                    .iter()
                    .map(|p| WeightedSample {
                        value: pick(&p.records[record_index], which),
                        weight: p.records[record_index].weight,
                    })
                    .collect(),
            );
        }
    }

    let mut rows = Vec::new();
    let mut tag = 0u64;
    const TAG_SPACING: u64 = 1 << 20;
    for (ai, &alpha) in study.alphas.iter().enumerate() {
        let mu = linked_mu(study.lambda, alpha);
        let mu_t = mu * study.horizon;
        if mu_t < 4.0 - 1e-9 {
            return Err(Error::TooFewCollapses { mu_t, min: 4.0 });
        }
        let hits_full = (mu_t + 1e-9).floor() as usize;
        if (mu_t - hits_full as f64).abs() > 1e-9 || hits_full % 2 != 0 {
            return Err(Error::Precondition(format!(
                "comparison times T/2 and T must be hit times: μT = {mu_t} is not an even integer"
            )));
        }
        let grw_config = CollapseConfig {
            alpha,
            mu,
            ..reference_config.clone()
        };
        let ensemble = grw_ensemble(&grw_config)?;
        let hit_indices = [hits_full / 2 - 1, hits_full - 1];
        for (ti, &t) in times.iter().enumerate() {
            for which in 0..2 {
                let sample_index = ti * 2 + which;
                let a: Vec<f64> = ensemble
                    .iter()
                    .map(|g| {
                        let obs = g.observables[hit_indices[ti]].1;
                        if which == 0 {
                            obs.mean_x
                        } else {
                            obs.var_x
                        }
                    })
                    .collect();
                let b = &reference_samples[sample_index];
                let ks = ks_distance(&a, b)?;
                let ks_se =
                    ks_bootstrap_se(&a, b, study.bootstrap, study.master_seed, tag)?;
                tag += TAG_SPACING;
                let (mean_a, se_a) = mean_and_stderr(&a)?;
                let (mean_b, se_b) = weighted_mean_and_stderr(b)?;
                let centered: Vec<f64> =
                    a.iter().map(|x| (x - mean_a) * (x - mean_a)).collect();
                let var_a = pairwise_sum(&centered) / (a.len() as f64 - 1.0);
                let moments = weighted_moments(b, 2)?;
                let var_b = moments[1] - moments[0] * moments[0];
                let weights: Vec<f64> = b.iter().map(|s| s.weight).collect();
                rows.push(DistanceRow {
                    alpha,
                    mu,
                    t,
                    observable: observable_names[which],
                    ks,
                    ks_se,
                    d_mean: (mean_a - mean_b).abs(),
                    d_mean_se: (se_a * se_a + se_b * se_b).sqrt(),
                    d_var: (var_a - var_b).abs(),
                    ess: ess_of(&weights),
                });
            }
        }
        let _ = ai;
    }
    let mut floors = Vec::new();
    for (ti, &t) in times.iter().enumerate() {
        for which in 0..2 {
            let b = &reference_samples[ti * 2 + which];
            let floor = ks_same_distribution_floor(
                b,
                study.paths as usize,
                study.bootstrap,
                study.master_seed,
                tag,
            )?;
            tag += TAG_SPACING;
            floors.push(FloorRow {
                t,
                observable: observable_names[which],
                floor,
            });
        }
    }
    Ok(ContinuumReport {
        paths: study.paths,
        rows,
        floors,
    })
}

/// One two-point decoherence comparison `E[ψ_t(x) conj(ψ_t(y))]` against the
/// closed form `ψ₀(x) conj(ψ₀(y)) e^{-λ(x-y)²t/2}`.
#[derive(Clone, Copy, Debug)]
pub struct LindbladRow {
    pub x: f64,
    pub y: f64,
    pub measured: Complex64,
    pub expected: Complex64,
    pub se: f64,
    pub rel_error: f64,
}

fn node_index(grid: &SpatialGrid, x: f64) -> Result<usize> {
    let raw = (x + grid.half_width()) / grid.dx();
    let index = raw.round() as isize;
    if index < 0 || index as usize >= grid.len() {
        return Err(Error::InvalidArgument(format!("point {x} is outside the grid")));
    }
    let index = index as usize;
    if (grid.nodes()[index] - x).abs() > 1e-9 {
        return Err(Error::InvalidArgument(format!(
            "point {x} is not a grid node (nearest is {})",
            grid.nodes()[index]
        )));
    }
    Ok(index)
}

/// Monte-Carlo check of the kinetic-free decoherence identity at the given
/// node pairs, using `n` product-formula steps per path.
pub fn lindblad_check_h0(
    config: &CollapseConfig,
    n: usize,
    pairs: &[(f64, f64)],
) -> Result<Vec<LindbladRow>> {
    config.validate()?;
    if config.include_h {
        return Err(Error::Precondition(
            "the decoherence identity holds with the kinetic factor off".into(),
        ));
    }
    if pairs.is_empty() {
        return Err(Error::EmptyInput("node pairs"));
    }
    if !n.is_power_of_two() {
        return Err(Error::BadStepCount { n, fine: n });
    }
    let grid = config.grid()?;
    let initial = config.initial_state()?;
    let indices: Vec<(usize, usize)> = pairs
        .iter()
        .map(|&(x, y)| Ok((node_index(&grid, x)?, node_index(&grid, y)?)))
        .collect::<Result<_>>()?;
    let level = n.trailing_zeros();
    let dt = config.horizon / n as f64;
    let root_lambda = config.lambda.sqrt();
    let products: Vec<Vec<Complex64>> = (0..config.ensemble)
        .into_par_iter()
        .map(|path_id| {
            let lattice = WienerLattice::generate(
                config.master_seed,
                path_id,
                1,
                level,
                config.horizon,
            )?;
            let increments = lattice.coarsen(0, level)?;
            let mut state = initial.clone();
            for &dxi in &increments {
                state = collapse_flow(
                    &state,
                    &[root_lambda * dxi],
                    config.lambda * dt,
                    0.0,
                )?;
            }
            Ok(indices
                .iter()
                .map(|&(ix, iy)| state.values()[ix] * state.values()[iy].conj())
                .collect())
        })
        .collect::<Result<_>>()?;
    let mut rows = Vec::with_capacity(pairs.len());
    for (pair_index, &(x, y)) in pairs.iter().enumerate() {
        let res: Vec<f64> = products.iter().map(|p| p[pair_index].re).collect();
        let ims: Vec<f64> = products.iter().map(|p| p[pair_index].im).collect();
        let (mean_re, se_re) = mean_and_stderr(&res)?;
        let (mean_im, se_im) = mean_and_stderr(&ims)?;
        let measured = Complex64::new(mean_re, mean_im);
        let (ix, iy) = indices[pair_index];
        let decay = (-0.5 * config.lambda * (x - y) * (x - y) * config.horizon).exp();
        let expected = initial.values()[ix] * initial.values()[iy].conj() * Complex64::from(decay);
        if expected.norm() < 1e-300 {
            return Err(Error::InvalidArgument(format!(
                "the closed form vanishes at the pair ({x}, {y}); pick interior nodes"
            )));
        }
        let se = (se_re * se_re + se_im * se_im).sqrt();
        rows.push(LindbladRow {
            x,
            y,
            measured,
            expected,
            se,
            rel_error: (measured - expected).norm() / expected.norm(),
        });
    }
    Ok(rows)
}

/// Decoherence rate of the discrete model at separation `delta`: the exact
/// rate `μ(1 - e^{-(α/4)δ²})` and its small-`α` linearization `(μα/4)δ²`
/// (equal to `(λ/2)δ²` under the linked scaling).
pub fn grw_lindblad_factor(alpha: f64, mu: f64, delta: f64) -> (f64, f64) {
    let u = 0.25 * alpha * delta * delta;
    (mu * (1.0 - (-u).exp()), mu * u)
}
