//! Dyadic Brownian lattices.
//!
//! A [`WienerLattice`] holds the increments of `m` independent Brownian
//! channels over `[0, T]` at the finest dyadic resolution `2^L`. Coarser
//! resolutions are *views* obtained by block-summing fine increments, so a
//! scheme run with `n = 2^l` steps and a reference run with `2^L` steps are
//! driven by the same underlying path. Block sums are computed by strict
//! binary-tree (pairwise) summation, which makes coarsening consistent at the
//! bit level across every pair of levels: a level-`l` increment equals the sum
//! of its two level-`l+1` children exactly, all the way down.

use crate::error::{Error, Result};
use crate::numerics::stats::pairwise_sum;
use crate::rng;

/// Hard cap on the dyadic refinement level (memory guard: `2^26` doubles per
/// channel is half a gigabyte).
pub const MAX_LEVEL: u32 = 26;

/// Increments of `m` Brownian channels on the dyadic lattice of level `L`.
#[derive(Clone, Debug)]
pub struct WienerLattice {
    horizon: f64,
    level: u32,
    master_seed: u64,
    path_id: u64,
    /// `increments[c][k]`: increment of channel `c` over
    /// `[k T/2^L, (k+1) T/2^L)`, distributed `N(0, T/2^L)`.
    increments: Vec<Vec<f64>>,
}

impl WienerLattice {
    /// Draws the finest-level increments of all channels.
    ///
    /// Channel `c` is the counter-keyed stream `(master_seed, path_id, c)`,
    /// so every increment regenerates bit-identically no matter in which
    /// order or on which thread lattices are produced.
    pub fn generate(
        master_seed: u64,
        path_id: u64,
        channels: usize,
        level: u32,
        horizon: f64,
    ) -> Result<Self> {
        if channels == 0 {
            return Err(Error::InvalidArgument("at least one channel".into()));
        }
        if level > MAX_LEVEL {
            return Err(Error::LevelTooLarge {
                level,
                max: MAX_LEVEL,
            });
        }
        if !horizon.is_finite() || horizon <= 0.0 {
            return Err(Error::InvalidArgument(format!(
                "horizon must be positive and finite, got {horizon}"
            )));
        }
        let steps = 1usize << level;
        let scale = (horizon / steps as f64).sqrt();
        let increments = (0..channels)
            .map(|c| {
                let key = rng::stream_key(master_seed, path_id, c as u64);
                (0..steps as u64)
                    .map(|k| scale * rng::normal_at(key, k))
                    .collect()
            })
            .collect();
        Ok(WienerLattice {
            horizon,
            level,
            master_seed,
            path_id,
            increments,
        })
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn level(&self) -> u32 {
        self.level
    }

    pub fn channels(&self) -> usize {
        self.increments.len()
    }

    pub fn master_seed(&self) -> u64 {
        self.master_seed
    }

    pub fn path_id(&self) -> u64 {
        self.path_id
    }

    /// Number of increments at the finest level.
    pub fn fine_steps(&self) -> usize {
        1 << self.level
    }

    /// Finest-level increments of one channel.
    pub fn increments(&self, channel: usize) -> &[f64] {
        &self.increments[channel]
    }

    /// Increments of `channel` at dyadic level `l <= L`, as pairwise block
    /// sums of the fine increments.
    pub fn coarsen(&self, channel: usize, level: u32) -> Result<Vec<f64>> {
        if level > self.level {
            return Err(Error::BadStepCount {
                n: 1usize << level,
                fine: self.fine_steps(),
            });
        }
        let fine = &self.increments[channel];
        let block = 1usize << (self.level - level);
        Ok(fine.chunks_exact(block).map(pairwise_sum).collect())
    }

    /// Total increment `ξ_T` of one channel (the root of the pairwise tree;
    /// identical at every coarsening level by construction).
    pub fn total(&self, channel: usize) -> f64 {
        pairwise_sum(&self.increments[channel])
    }

    /// Path values `ξ(k T/2^l)` for `k = 0..=2^l`, starting at zero.
    pub fn path_values(&self, channel: usize, level: u32) -> Result<Vec<f64>> {
        let incs = self.coarsen(channel, level)?;
        let mut values = Vec::with_capacity(incs.len() + 1);
        let mut acc = 0.0;
        values.push(acc);
        for dx in incs {
            acc += dx;
            values.push(acc);
        }
        Ok(values)
    }

    /// Dumps the finest-level increments of all channels, concatenated, as
    /// little-endian 64-bit floats (debugging aid).
    pub fn write_increments_le<W: std::io::Write>(&self, w: &mut W) -> std::io::Result<()> {
        for channel in &self.increments {
            for &x in channel {
                w.write_all(&x.to_le_bytes())?;
            }
        }
        Ok(())
    }

    /// Mean over the `n` anchored windows `[kT/n, (k+1)T/n]` of the squared
    /// oscillation `sup_{t,s in window} |ξ_t - ξ_s|²` of one channel, with the
    /// sup taken over finest-lattice points (window endpoints included).
    ///
    /// At `n = 2^L` every window holds a single increment, so the statistic
    /// degenerates to the mean of squared fine increments; the windows are
    /// nested under halving, so the statistic is non-increasing in `n` on
    /// every single path.
    pub fn windowed_square_oscillation(&self, channel: usize, n: usize) -> Result<f64> {
        let fine = self.fine_steps();
        if n == 0 || !n.is_power_of_two() || n > fine {
            return Err(Error::BadStepCount { n, fine });
        }
        let values = self.path_values(channel, self.level)?;
        let width = fine / n;
        let mut acc = 0.0;
        for w in 0..n {
            let window = &values[w * width..=(w + 1) * width];
            let mut lo = f64::INFINITY;
            let mut hi = f64::NEG_INFINITY;
            for &v in window {
                lo = lo.min(v);
                hi = hi.max(v);
            }
            let osc = hi - lo;
            acc += osc * osc;
        }
        Ok(acc / n as f64)
    }
}

/// Monte-Carlo estimate of the expected windowed squared oscillation at mesh
/// `T/n`, averaged over `paths` single-channel lattices of level `level`.
pub fn sup_increment_statistic(
    master_seed: u64,
    paths: u64,
    level: u32,
    horizon: f64,
    n: usize,
) -> Result<f64> {
    use rayon::prelude::*;
    if paths == 0 {
        return Err(Error::EmptyInput("paths"));
    }
    let per_path: Vec<f64> = (0..paths)
        .into_par_iter()
        .map(|p| {
            let lattice = WienerLattice::generate(master_seed, p, 1, level, horizon)?;
            lattice.windowed_square_oscillation(0, n)
        })
        .collect::<Result<_>>()?;
    Ok(pairwise_sum(&per_path) / paths as f64)
}
