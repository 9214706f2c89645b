//! Finite-dimensional experiments: scheme convergence on benchmark systems
//! and the scalar split-product counterexample.

use num_complex::Complex64;
use splitsde::matrix_sde::{
    convergence_study, exact_commuting_flow, run_scheme, MatrixSdeSystem, SchemeKind,
};
use splitsde::{CMatrix, CVector, WienerLattice};

use crate::config::{CliError, CliResult, CounterexampleParams, MatrixConvergeParams};
use crate::experiments::CriterionRow;
use crate::io::CsvTable;

fn cmat(d: usize, entries: &[f64]) -> CMatrix {
    CMatrix::from_row_slice(
        d,
        d,
        &entries.iter().map(|&x| Complex64::from(x)).collect::<Vec<_>>(),
    )
}

fn cvec(entries: &[f64]) -> CVector {
    CVector::from_iterator(entries.len(), entries.iter().map(|&x| Complex64::from(x)))
}

/// A named benchmark system plus, when it admits one, the canonical
/// drift split used by the partial-splitting scheme.
pub struct Benchmark {
    pub system: MatrixSdeSystem,
    pub split: Option<(CMatrix, CMatrix)>,
}

/// Built-in benchmark systems, all on horizon 1:
///
/// * `diagonal-commuting` — 2×2 diagonal drift and diffusion; every flow
///   commutes, so splitting schemes are exact and the reference is the
///   closed form.
/// * `noncommuting-benchmark` — damped rotation drift with a non-normal
///   diffusion that does not commute with it; the strong-convergence
///   workhorse.
/// * `commuting-inner` — drift `A = A1 + A2` with `A2` and the diffusion
///   simultaneously diagonal; exercises partial splitting with an exact
///   inner flow.
pub fn build_benchmark(system_id: &str) -> CliResult<Benchmark> {
    let benchmark = match system_id {
        "diagonal-commuting" => Benchmark {
            system: MatrixSdeSystem::new(
                cmat(2, &[-0.5, 0.0, 0.0, 0.25]),
                vec![cmat(2, &[1.0, 0.0, 0.0, -0.5])],
                cvec(&[1.0, 1.0]),
                1.0,
            )?,
            split: None,
        },
        // Two noise channels with non-commuting diffusions: the Levy-area
        // terms cap every increment-based scheme at strong order 1/2, which
        // is what a convergence-order benchmark must exercise. (With a
        // single channel the piecewise noise flow is exact per factor and
        // quietly reaches order 1.)
        "noncommuting-benchmark" => Benchmark {
            system: MatrixSdeSystem::new(
                cmat(2, &[-0.5, 0.8, -0.8, -0.5]),
                vec![
                    cmat(2, &[0.5, 0.0, 0.3, -0.4]),
                    cmat(2, &[0.2, 0.6, 0.0, -0.1]),
                ],
                cvec(&[1.0, 1.0]),
                1.0,
            )?,
            split: None,
        },
        "commuting-inner" => {
            let a1 = cmat(2, &[0.0, 0.7, -0.7, 0.0]);
            let a2 = cmat(2, &[-0.2, 0.0, 0.0, -0.4]);
            Benchmark {
                system: MatrixSdeSystem::new(
                    &a1 + &a2,
                    vec![cmat(2, &[0.6, 0.0, 0.0, -0.3])],
                    cvec(&[1.0, 1.0]),
                    1.0,
                )?,
                split: Some((a1, a2)),
            }
        }
        other => {
            return Err(CliError::Config(format!(
                "unknown system_id '{other}'; known: diagonal-commuting, noncommuting-benchmark, commuting-inner"
            )));
        }
    };
    Ok(benchmark)
}

fn parse_scheme(label: &str, split: &Option<(CMatrix, CMatrix)>) -> CliResult<SchemeKind> {
    match label {
        "euler-maruyama" => Ok(SchemeKind::EulerMaruyama),
        "trotter-piecewise" => Ok(SchemeKind::TrotterPiecewise),
        "trotter-interpolated" => Ok(SchemeKind::TrotterInterpolated),
        "first-order-factored" => Ok(SchemeKind::FirstOrderFactored),
        "exact-commuting" => Ok(SchemeKind::ExactCommuting),
        "reference" => Ok(SchemeKind::Reference),
        "partial-split" => match split {
            Some((a1, a2)) => Ok(SchemeKind::PartialSplit {
                a1: a1.clone(),
                a2: a2.clone(),
            }),
            None => Err(CliError::Config(
                "this system does not define a drift split for 'partial-split'".into(),
            )),
        },
        other => Err(CliError::Config(format!(
            "unknown scheme '{other}'; known: euler-maruyama, trotter-piecewise, \
             trotter-interpolated, first-order-factored, partial-split, exact-commuting, reference"
        ))),
    }
}

/// Max over paths, step counts and step times of the sup-norm deviation of a
/// scheme trajectory from the commuting closed form.
fn exactness_deviation(
    system: &MatrixSdeSystem,
    scheme: &SchemeKind,
    n_values: &[usize],
    paths: u64,
    master_seed: u64,
    fine_level: u32,
) -> CliResult<f64> {
    let mut worst = 0.0f64;
    for path_id in 0..paths {
        let lattice = WienerLattice::generate(
            master_seed,
            path_id,
            system.channels(),
            fine_level,
            system.horizon,
        )?;
        for &n in n_values {
            let trajectory = run_scheme(system, scheme, n, &lattice)?;
            let level = n.trailing_zeros();
            let channel_values: Vec<Vec<f64>> = (0..system.channels())
                .map(|c| lattice.path_values(c, level))
                .collect::<splitsde::Result<_>>()?;
            for (k, (state, &t)) in trajectory
                .states
                .iter()
                .zip(trajectory.times.iter())
                .enumerate()
            {
                let xi: Vec<f64> = channel_values.iter().map(|v| v[k]).collect();
                let exact = exact_commuting_flow(system, &xi, t)?;
                let dev = (state - &exact)
                    .iter()
                    .map(|z| z.norm())
                    .fold(0.0, f64::max);
                worst = worst.max(dev);
            }
        }
    }
    Ok(worst)
}

pub fn matrix_converge(
    params: &MatrixConvergeParams,
    master_seed: u64,
) -> CliResult<(Vec<CriterionRow>, Vec<(String, Vec<u8>)>)> {
    let benchmark = build_benchmark(&params.system_id)?;
    let schemes: Vec<SchemeKind> = params
        .schemes
        .iter()
        .map(|s| parse_scheme(s, &benchmark.split))
        .collect::<CliResult<_>>()?;
    let reports = convergence_study(
        &benchmark.system,
        &schemes,
        &params.n_values,
        params.paths,
        master_seed,
        params.fine_level,
    )?;

    let mut table = CsvTable::new(&["n", "mse", "stderr", "scheme", "system_id", "seed"])?;
    for report in &reports {
        for row in &report.rows {
            table.row(vec![
                row.n.into(),
                row.mse.into(),
                row.stderr.into(),
                report.scheme.as_str().into(),
                params.system_id.as_str().into(),
                master_seed.into(),
            ])?;
        }
    }

    let mut criteria = Vec::new();
    for report in &reports {
        if let Some(lo) = params.slope_min {
            criteria.push(CriterionRow::at_least(
                format!("{}: fitted log-log MSE slope at least {lo}", report.scheme),
                report.fitted_slope,
                lo,
            ));
        }
        if let Some(hi) = params.slope_max {
            criteria.push(CriterionRow::at_most(
                format!("{}: fitted log-log MSE slope at most {hi}", report.scheme),
                report.fitted_slope,
                hi,
            ));
        }
        if params.require_monotone {
            let worst_ratio = report
                .rows
                .windows(2)
                .map(|w| w[1].mse / w[0].mse)
                .fold(0.0f64, f64::max);
            criteria.push(CriterionRow::below(
                format!("{}: MSE decreases at every refinement", report.scheme),
                worst_ratio,
                1.0,
            ));
        }
    }
    if let Some(tol) = params.exactness_tol {
        for (scheme, label) in schemes.iter().zip(params.schemes.iter()) {
            let dev = exactness_deviation(
                &benchmark.system,
                scheme,
                &params.n_values,
                params.paths,
                master_seed,
                params.fine_level,
            )?;
            criteria.push(CriterionRow::at_most(
                format!("{label}: per-path sup deviation from the commuting closed form"),
                dev,
                tol,
            ));
        }
    }

    Ok((criteria, vec![("convergence.csv".into(), table.into_bytes()?)]))
}

pub fn counterexample(
    params: &CounterexampleParams,
    master_seed: u64,
) -> CliResult<(Vec<CriterionRow>, Vec<(String, Vec<u8>)>)> {
    let max_n = *params.n_values.iter().max().expect("validated non-empty");
    let level = max_n.trailing_zeros();
    let target = params.horizon.exp();

    let mut table = CsvTable::new(&["path", "n", "t", "ratio", "abs_error"])?;
    let mut ratios = Vec::new();
    let mut worst = 0.0f64;
    for path_id in 0..params.paths {
        let lattice = WienerLattice::generate(master_seed, path_id, 1, level, params.horizon)?;
        for &n in &params.n_values {
            let ratio =
                splitsde::matrix_sde::stochastic_split_counterexample(&lattice, n, params.horizon)?;
            let err = (ratio - target).abs();
            worst = worst.max(err);
            ratios.push(ratio);
            table.row(vec![
                path_id.into(),
                n.into(),
                params.horizon.into(),
                ratio.into(),
                err.into(),
            ])?;
        }
    }
    let mean_ratio = splitsde::numerics::pairwise_sum(&ratios) / ratios.len() as f64;

    let criteria = vec![
        CriterionRow {
            criterion: format!(
                "mean terminal ratio of the split product to the exact solution equals e^T = {target:.12} within {:.1e}",
                params.tolerance
            ),
            measured: mean_ratio,
            tolerance: target,
            pass: (mean_ratio - target).abs() <= params.tolerance,
        },
        CriterionRow::at_most(
            "max terminal ratio deviation over all paths and step counts",
            worst,
            params.tolerance,
        ),
    ];
    Ok((criteria, vec![("counterexample.csv".into(), table.into_bytes()?)]))
}
