//! Experiment drivers: each maps typed parameters onto the library engines,
//! collects data rows, and evaluates the experiment's declared criteria.

mod collapse_runs;
mod matrix_runs;
mod spectral_runs;

use serde::Serialize;

use crate::config::{CliResult, Experiment, LoadedConfig};

/// One evaluated criterion: a measured statistic, the bound it was held to,
/// and the verdict. `pass` is authoritative; the relation between `measured`
/// and `tolerance` (≤, ≥, <) is part of the criterion's definition and is
/// spelled out in the data dictionary.
#[derive(Clone, Debug, Serialize)]
pub struct CriterionRow {
    pub criterion: String,
    pub measured: f64,
    pub tolerance: f64,
    pub pass: bool,
}

impl CriterionRow {
    /// `measured ≤ tolerance`.
    pub fn at_most(criterion: impl Into<String>, measured: f64, tolerance: f64) -> Self {
        CriterionRow {
            criterion: criterion.into(),
            measured,
            tolerance,
            pass: measured.is_finite() && measured <= tolerance,
        }
    }

    /// `measured ≥ tolerance`.
    pub fn at_least(criterion: impl Into<String>, measured: f64, tolerance: f64) -> Self {
        CriterionRow {
            criterion: criterion.into(),
            measured,
            tolerance,
            pass: measured.is_finite() && measured >= tolerance,
        }
    }

    /// `measured < tolerance` (strict).
    pub fn below(criterion: impl Into<String>, measured: f64, tolerance: f64) -> Self {
        CriterionRow {
            criterion: criterion.into(),
            measured,
            tolerance,
            pass: measured.is_finite() && measured < tolerance,
        }
    }
}

/// Machine-readable run summary: one row per evaluated criterion.
#[derive(Clone, Debug, Serialize)]
pub struct Summary {
    pub experiment: String,
    pub master_seed: u64,
    pub criteria: Vec<CriterionRow>,
}

impl Summary {
    pub fn all_pass(&self) -> bool {
        self.criteria.iter().all(|c| c.pass)
    }

    pub fn failed(&self) -> Vec<&CriterionRow> {
        self.criteria.iter().filter(|c| !c.pass).collect()
    }
}

/// A finished run: the summary plus every data file as named bytes, ready
/// for atomic writing. Nothing touches the filesystem during computation.
#[derive(Clone, Debug)]
pub struct RunOutcome {
    pub summary: Summary,
    pub files: Vec<(String, Vec<u8>)>,
}

/// Runs one experiment to completion in memory.
pub fn run_experiment(config: &LoadedConfig) -> CliResult<RunOutcome> {
    let (criteria, files) = match &config.experiment {
        Experiment::MatrixConverge(p) => matrix_runs::matrix_converge(p, config.master_seed)?,
        Experiment::Counterexample(p) => matrix_runs::counterexample(p, config.master_seed)?,
        Experiment::SseMartingale(p) => spectral_runs::sse_martingale(p, config.master_seed)?,
        Experiment::SseGrowth(p) => spectral_runs::sse_growth(p, config.master_seed)?,
        Experiment::CollapseEquivalence(p) => {
            collapse_runs::collapse_equivalence(p, config.master_seed)?
        }
        Experiment::ContinuumLimit(p) => collapse_runs::continuum_limit(p, config.master_seed)?,
        Experiment::LindbladCheck(p) => collapse_runs::lindblad_check(p, config.master_seed)?,
    };
    Ok(RunOutcome {
        summary: Summary {
            experiment: config.kind.clone(),
            master_seed: config.master_seed,
            criteria,
        },
        files,
    })
}
