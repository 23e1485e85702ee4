//! Windowed solver for the delayed equation
//!
//! ```text
//! X_t = X_0 + ∫ b(X_s) ds + α e_δ(t) + W_t − M_t,    e_δ(t) = 0 for t ≤ δ,
//!                                                   e_δ(t) = E[M_{t−δ}] for t > δ.
//! ```
//!
//! On a window `(kδ, (k+1)δ]` the input `e_δ` only looks back to times up to
//! `kδ`, so it is already known from earlier windows and every replica evolves
//! as an ordinary SDE with a given forcing. After the window the replica
//! average of `M` extends the estimate of `E[M]`, which feeds the next window.

use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analysis::{comparison_grid, DEFAULT_BANDWIDTH, DEFAULT_JUMP_THRESHOLD};
use crate::cascade::check_alpha;
use crate::error::{Error, Result};
use crate::particle_sim::{grid_time, step_count, DriftSpec, InitialLaw};
use crate::paths::{m1_distance_bounds, CadlagPath, PathBuilder};
use crate::rng::{substream, Substream};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DelayedConfig {
    pub delta: f64,
    pub replicas: usize,
    pub horizon: f64,
    pub dt: f64,
    pub alpha: f64,
    pub drift: DriftSpec,
    pub init: InitialLaw,
    pub noise_scale: f64,
    pub seed: u64,
    /// Replicas `0..record_replicas` keep their counting paths.
    pub record_replicas: usize,
}

impl DelayedConfig {
    pub fn validate(&self) -> Result<()> {
        if self.replicas == 0 {
            return Err(Error::config("replicas", "need at least one replica"));
        }
        if !(self.dt > 0.0) {
            return Err(Error::config("dt", format!("must be positive, got {}", self.dt)));
        }
        if !(self.horizon > 0.0 && self.horizon.is_finite()) || self.dt > self.horizon {
            return Err(Error::config("horizon", "must be positive and at least one step long"));
        }
        if !(self.delta >= self.dt) || !self.delta.is_finite() {
            return Err(Error::config(
                "delta",
                format!("must be at least dt = {}, got {}", self.dt, self.delta),
            ));
        }
        check_alpha(self.alpha)?;
        if !(self.noise_scale >= 0.0 && self.noise_scale.is_finite()) {
            return Err(Error::config("noise_scale", "must be finite and non-negative"));
        }
        self.drift.validate()?;
        self.init.validate()
    }

    pub fn steps(&self) -> usize {
        step_count(self.horizon, self.dt)
    }

    pub fn windows(&self) -> usize {
        (self.horizon / self.delta - 1e-9).ceil() as usize
    }

    fn grid(&self) -> Vec<f64> {
        let steps = self.steps();
        (0..=steps)
            .map(|k| grid_time(k, steps, self.dt, self.horizon))
            .collect()
    }
}

#[derive(Debug, Clone)]
pub struct DelayedOutput {
    pub delta: f64,
    /// Estimate of `t ↦ e_δ(t)` on the time grid.
    pub e_delta: CadlagPath,
    /// Replica average of `M^δ_t`.
    pub mean_m: CadlagPath,
    pub sample_m_paths: Vec<CadlagPath>,
    pub replica_count: usize,
}

impl DelayedOutput {
    /// Spike times of recorded replica `r`, one entry per unit jump.
    pub fn spike_times(&self, r: usize) -> Vec<f64> {
        self.sample_m_paths[r]
            .jumps()
            .flat_map(|(t, l, v)| std::iter::repeat_n(t, (v - l).round() as usize))
            .collect()
    }
}

struct Replica {
    x: f64,
    m: u32,
    rng: Substream,
}

fn init_replicas(config: &DelayedConfig) -> Vec<Replica> {
    (0..config.replicas)
        .into_par_iter()
        .map(|i| {
            let mut rng = substream(config.seed, i as u64);
            let x = config.init.draw(i, &mut rng);
            Replica { x, m: 0, rng }
        })
        .collect()
}

/// Advances every replica over grid steps `range`, driven by the forcing
/// values `e[k]`. Returns, per step of the range, how many replicas fired.
fn advance(
    replicas: &mut [Replica],
    range: std::ops::Range<usize>,
    grid: &[f64],
    e: &[f64],
    config: &DelayedConfig,
    recorded: &mut [PathBuilder],
) -> Result<Vec<u64>> {
    let len = range.len();
    let start = range.start;
    let drift = &config.drift;
    let (alpha, noise_scale) = (config.alpha, config.noise_scale);
    let per_step = |rep: &mut Replica, k: usize| -> std::result::Result<bool, ()> {
        let h = grid[k] - grid[k - 1];
        let mut dx = drift.eval(rep.x) * h + alpha * (e[k] - e[k - 1]);
        if noise_scale > 0.0 {
            let xi: f64 = StandardNormal.sample(&mut rep.rng);
            dx += noise_scale * h.sqrt() * xi;
        }
        rep.x += dx;
        if !rep.x.is_finite() {
            return Err(());
        }
        if rep.x >= 1.0 {
            rep.x -= 1.0;
            rep.m += 1;
            return Ok(true);
        }
        Ok(false)
    };

    // replicas with recorded paths run serially so the builders stay in order
    let n_rec = recorded.len();
    let (head, tail) = replicas.split_at_mut(n_rec);
    let mut counts = vec![0u64; len];
    for (rep, builder) in head.iter_mut().zip(recorded.iter_mut()) {
        for k in range.clone() {
            let fired = per_step(rep, k).map_err(|_| nan_error(k))?;
            counts[k - start] += fired as u64;
            builder.push_step(grid[k], rep.m as f64);
        }
    }
    let tail_counts = tail
        .par_iter_mut()
        .map(|rep| {
            let mut local = vec![0u64; len];
            for k in range.clone() {
                if per_step(rep, k).map_err(|_| k)? {
                    local[k - start] += 1;
                }
            }
            Ok(local)
        })
        .try_reduce(
            || vec![0u64; len],
            |mut a, b| {
                a.iter_mut().zip(&b).for_each(|(x, y)| *x += y);
                Ok(a)
            },
        )
        .map_err(nan_error)?;
    counts.iter_mut().zip(&tail_counts).for_each(|(x, y)| *x += y);
    Ok(counts)
}

fn nan_error(step: usize) -> Error {
    Error::Runtime {
        step,
        message: "replica potential is not finite".into(),
    }
}

/// Index of the last grid time `≤ s`, with a little slack for round-off.
fn grid_index_at_or_before(grid: &[f64], s: f64) -> usize {
    let tol = 1e-9 * grid[1];
    grid.partition_point(|&t| t <= s + tol).saturating_sub(1)
}

fn build_step_path(grid: &[f64], values: &[f64]) -> Result<CadlagPath> {
    let mut b = PathBuilder::with_capacity(grid.len());
    for (&t, &v) in grid.iter().zip(values) {
        b.push_step(t, v);
    }
    b.finish()
}

/// Solves the delayed equation window by window with `replicas` Monte Carlo
/// replicas estimating `E[M^δ]`.
pub fn run_delayed(config: &DelayedConfig) -> Result<DelayedOutput> {
    config.validate()?;
    let grid = config.grid();
    let steps = grid.len() - 1;
    let r = config.replicas as f64;
    let mut replicas = init_replicas(config);
    let mut recorded: Vec<PathBuilder> = (0..config.record_replicas.min(config.replicas))
        .map(|_| {
            let mut b = PathBuilder::with_capacity(steps + 1);
            b.push(0.0, 0.0);
            b
        })
        .collect();

    let mut total_spikes = vec![0u64; steps + 1];
    let mut mean_m = vec![0.0; steps + 1];
    let mut e = vec![0.0; steps + 1];
    let mut k0 = 1;
    for w in 0..config.windows() {
        let window_end = (w + 1) as f64 * config.delta;
        let k1 = if w + 1 == config.windows() {
            steps + 1
        } else {
            grid_index_at_or_before(&grid, window_end) + 1
        };
        for k in k0..k1 {
            let lag_t = grid[k] - config.delta;
            e[k] = if lag_t <= 1e-9 * config.dt {
                0.0
            } else {
                let j = grid_index_at_or_before(&grid, lag_t);
                debug_assert!(j < k0, "forcing must come from a finished window");
                mean_m[j]
            };
        }
        let counts = advance(&mut replicas, k0..k1, &grid, &e, config, &mut recorded)?;
        for (k, c) in (k0..k1).zip(counts) {
            total_spikes[k] = total_spikes[k - 1] + c;
            mean_m[k] = total_spikes[k] as f64 / r;
        }
        k0 = k1;
    }

    Ok(DelayedOutput {
        delta: config.delta,
        e_delta: build_step_path(&grid, &e)?,
        mean_m: build_step_path(&grid, &mean_m)?,
        sample_m_paths: recorded.into_iter().map(PathBuilder::finish).collect::<Result<_>>()?,
        replica_count: config.replicas,
    })
}

/// Re-simulates the replicas with a frozen forcing path (sampled on the time
/// grid) and no feedback. Feeding back the `e_delta` of [`run_delayed`]
/// reproduces its replicas exactly.
pub fn replay_with_input(config: &DelayedConfig, forcing: &CadlagPath) -> Result<DelayedOutput> {
    config.validate()?;
    let grid = config.grid();
    let steps = grid.len() - 1;
    let e = forcing.sample(&grid)?;
    let mut replicas = init_replicas(config);
    let mut recorded: Vec<PathBuilder> = (0..config.record_replicas.min(config.replicas))
        .map(|_| {
            let mut b = PathBuilder::with_capacity(steps + 1);
            b.push(0.0, 0.0);
            b
        })
        .collect();
    let counts = advance(&mut replicas, 1..steps + 1, &grid, &e, config, &mut recorded)?;
    let mut mean_m = vec![0.0; steps + 1];
    let mut total = 0u64;
    for (k, c) in counts.into_iter().enumerate() {
        total += c;
        mean_m[k + 1] = total as f64 / config.replicas as f64;
    }
    Ok(DelayedOutput {
        delta: config.delta,
        e_delta: build_step_path(&grid, &e)?,
        mean_m: build_step_path(&grid, &mean_m)?,
        sample_m_paths: recorded.into_iter().map(PathBuilder::finish).collect::<Result<_>>()?,
        replica_count: config.replicas,
    })
}

/// Gap of one delayed curve to the reference.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DelayGap {
    pub delta: f64,
    /// `max |e_δ(t) − ref(t)|` over continuity times.
    pub pointwise_gap: f64,
    pub m1_gap: f64,
    pub m1_slack: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DelayCompareReport {
    /// Sorted by decreasing `δ`.
    pub gaps: Vec<DelayGap>,
    pub tolerance: f64,
    pub pointwise_monotone: bool,
    pub m1_monotone: bool,
}

/// Compares `e_δ` curves for several delays with a reference curve.
///
/// Gaps are reported at continuity times of the reference. `tolerance` is
/// the Monte Carlo allowance when checking that gaps do not grow as `δ`
/// decreases.
pub fn delayed_to_limit_compare(
    outputs: &[DelayedOutput],
    reference: &CadlagPath,
    tolerance: f64,
    m1_resolution: usize,
) -> Result<DelayCompareReport> {
    let horizon = reference.horizon();
    let mut sorted: Vec<&DelayedOutput> = outputs.iter().collect();
    sorted.sort_by(|a, b| b.delta.total_cmp(&a.delta));
    let grid = comparison_grid(&[reference], 200, 2.0 * DEFAULT_BANDWIDTH, DEFAULT_JUMP_THRESHOLD)?;
    let mut gaps = Vec::with_capacity(sorted.len());
    for out in sorted {
        if (out.e_delta.horizon() - horizon).abs() > 1e-9 * horizon {
            return Err(Error::domain(format!(
                "delay {} runs to {}, reference to {horizon}",
                out.delta,
                out.e_delta.horizon()
            )));
        }
        let mut pointwise_gap = 0.0f64;
        for &t in &grid {
            pointwise_gap = pointwise_gap.max((out.e_delta.evaluate(t)? - reference.evaluate(t)?).abs());
        }
        let d = m1_distance_bounds(&out.e_delta, reference, m1_resolution)?;
        gaps.push(DelayGap {
            delta: out.delta,
            pointwise_gap,
            m1_gap: d.upper,
            m1_slack: d.slack,
        });
    }
    let monotone = |f: fn(&DelayGap) -> f64| gaps.windows(2).all(|w| f(&w[1]) <= f(&w[0]) + tolerance);
    Ok(DelayCompareReport {
        pointwise_monotone: monotone(|g| g.pointwise_gap),
        m1_monotone: monotone(|g| g.m1_gap),
        gaps,
        tolerance,
    })
}
