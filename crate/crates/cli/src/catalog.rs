//! Static experiment catalog backing `splitsde-cli list`.

/// Experiment kinds accepted by `run`, in catalog order.
pub const KINDS: [&str; 7] = [
    "matrix-converge",
    "counterexample",
    "sse-martingale",
    "sse-growth",
    "collapse-equivalence",
    "continuum-limit",
    "lindblad-check",
];

/// Human-readable catalog: every kind with what it measures and its
/// parameters. Shared parameter conventions: `master_seed` and `out_dir`
/// live at the top level of the config file; all step counts are powers of
/// two; all runs are deterministic in `(config, master_seed)` regardless of
/// thread count.
pub fn catalog() -> String {
    let entries = [
        (
            "matrix-converge",
            "Coupled-path strong-convergence study of splitting schemes for a \
             linear matrix SDE benchmark. Measures Monte-Carlo mean squared \
             sup-error against a shared fine reference per step count, fits the \
             log-log slope, and optionally checks closed-form exactness on \
             commuting systems.",
            "params: system_id (diagonal-commuting | noncommuting-benchmark | \
             commuting-inner), schemes [euler-maruyama | trotter-piecewise | \
             trotter-interpolated | first-order-factored | partial-split | \
             exact-commuting | reference], n_values [dyadic], paths, fine_level, \
             slope_min?, slope_max?, require_monotone (default true), \
             exactness_tol?",
            "outputs: convergence.csv (n, mse, stderr, scheme, system_id, seed)",
        ),
        (
            "counterexample",
            "Scalar noise-only equation dX = 2X dξ, approximated by applying \
             the one-unit noise flow twice per step. The squared flow's \
             Ito correction is wrong for the doubled coefficient, so the \
             product converges to e^{t} times the true solution — exactly, \
             path by path. Measures that ratio at the horizon.",
            "params: n_values [dyadic], paths, horizon (default 1), tolerance \
             (default 1e-12)",
            "outputs: counterexample.csv (path, n, t, ratio, abs_error)",
        ),
        (
            "sse-martingale",
            "Conservative grid product formula: noise factor then kinetic \
             factor per step. The squared norm is a martingale, so its \
             ensemble mean must equal one at every step count; the run also \
             checks that the empirical bias does not grow under refinement \
             and dumps one trajectory's observables.",
            "params: lambda, horizon, grid_half_width, grid_points, x0 \
             (default 0), p0 (default 0), sigma, n_values [dyadic, \
             increasing], paths, include_h (default true)",
            "outputs: martingale.csv (n, mean_norm2, stderr, bias), \
             trajectory.csv (t, norm2, mean_x, var_x)",
        ),
        (
            "sse-growth",
            "Raw (uncorrected) noise flow on the indicator of [0,1]: the mean \
             squared norm grows to the closed-form integral of e^{x^2 T}, \
             exactly on the grid in expectation. Run alongside the \
             norm-preserving conservative flow on the same noise.",
            "params: grid_half_width (> 1), grid_points, n [dyadic], paths, \
             horizon (default 1)",
            "outputs: growth.csv (path, raw_norm2, conservative_norm2)",
        ),
        (
            "collapse-equivalence",
            "Kinetic-free discrete hits vs continuous collapse dynamics at \
             the linked scaling mu = 2 lambda / alpha: the two models are the \
             same law. Compares flash positions against weighted scaled \
             increments per hit (KS distance, moments, effective sample \
             sizes) and verifies the pathwise wavefunction identity.",
            "params: lambda, alpha, horizon, grid_half_width, grid_points, x0 \
             (default 0), p0 (default 0), sigma, paths, n [dyadic], \
             identity_paths (default 16), identity_tol (default 1e-10), \
             min_ess (default 100)",
            "outputs: flashes.csv (path, k, t, Y), ensemble.csv (path, t, \
             mean_x, var_x, weight), equivalence.csv (per-hit comparison)",
        ),
        (
            "continuum-limit",
            "Discrete-model ensembles at decreasing localization sharpness \
             (rate mu = 2 lambda / alpha) against one fine continuous \
             reference: weighted KS distances and moment deltas of mean \
             position and variance at T/2 and T, with bootstrap standard \
             errors and same-distribution noise floors. Checks the terminal \
             mean-position distance trend and final noise-floor proximity.",
            "params: lambda, horizon, alphas [strictly decreasing, >= 2], \
             paths, include_h (default true), grid_half_width, grid_points, \
             x0 (default 0), p0 (default 0), sigma, reference_steps [dyadic], \
             bootstrap (default 200), ks_slack_se (default 2), floor_factor \
             (default 2)",
            "outputs: distances.csv (alpha, mu, t, observable, ks, d_mean, \
             d_var, ess), floors.csv (t, observable, floor)",
        ),
        (
            "lindblad-check",
            "Kinetic-free ensemble average of the two-point correlator \
             psi_t(x) conj(psi_t(y)) against its closed-form decay \
             e^{-lambda (x-y)^2 t / 2}, plus the discrete model's exact vs \
             linearized decoherence rate at small sharpness.",
            "params: lambda (>= 0), horizon, grid_half_width, grid_points, x0 \
             (default 0), p0 (default 0), sigma, paths, n [dyadic], pairs \
             [[x, y], ...], rate_alpha (default 0.01), rate_delta (default \
             1), rate_rel_tol (default 0.0025)",
            "outputs: lindblad.csv (x, y, measured_re, measured_im, \
             expected_re, expected_im, se, rel_error)",
        ),
    ];
    let mut text = String::from(
        "Experiments (config: {\"experiment\": <kind>, \"master_seed\": <u64>, \
         \"out_dir\"?: <path>, \"params\": {...}}):\n\n",
    );
    for (kind, what, params, outputs) in entries {
        text.push_str(&format!("{kind}\n  {what}\n  {params}\n  {outputs}\n\n"));
    }
    text.push_str(
        "Every run writes summary.json: {experiment, master_seed, criteria: \
         [{criterion, measured, tolerance, pass}]}. Exit codes: 0 all criteria \
         pass, 1 criterion failure, 2 configuration error. Threads: --threads \
         or SPLITSDE_THREADS.\n",
    );
    text
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn catalog_names_every_kind() {
        let text = catalog();
        for kind in KINDS {
            assert!(text.contains(kind), "catalog must describe {kind}");
        }
    }
}
