//! Spike cascades in the N-particle system.
//!
//! At a spike time every particle with `X ≥ 1` fires first (round 0). Each
//! round adds the kick `α·|fired so far|/N` to the remaining particles, and
//! those that reach the threshold fire in the next round. The cascade stops at
//! the first empty round, after at most `N` rounds. The size of the cascade is
//! also given in closed form by
//!
//! ```text
//! |Γ| = inf { k ∈ {0..N} : #{ i : X_i + αk/N ≥ 1 } ≤ k }
//! ```
//!
//! which [`cascade_size_inf`] evaluates independently of the recursion.
//!
//! Particle indices are 0-based.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Kick felt by every particle once `count` out of `n` particles have fired.
///
/// All threshold tests in this crate use `x + kick(α, k, n) >= 1` so the
/// recursion, the inf formula and the jump-size scan agree bit for bit.
#[inline]
pub fn kick(alpha: f64, count: usize, n: usize) -> f64 {
    alpha * (count as f64 / n as f64)
}

#[inline]
fn fires(x: f64, kick: f64) -> bool {
    x + kick >= 1.0
}

pub(crate) fn check_alpha(alpha: f64) -> Result<()> {
    if alpha > 0.0 && alpha < 1.0 {
        Ok(())
    } else {
        Err(Error::config("alpha", format!("must lie in (0, 1), got {alpha}")))
    }
}

/// Pre-cascade potentials `X_{t−}` of all particles together with `α`.
#[derive(Debug, Clone, PartialEq)]
pub struct SpikeState {
    potentials: Vec<f64>,
    alpha: f64,
}

impl SpikeState {
    /// Potentials must be finite and below `2 − α`; larger values would leave
    /// a fired particle above the threshold after its reset.
    pub fn new(potentials: Vec<f64>, alpha: f64) -> Result<Self> {
        check_alpha(alpha)?;
        if potentials.is_empty() {
            return Err(Error::domain("spike state has no particles"));
        }
        if let Some(x) = potentials.iter().find(|x| !x.is_finite() || **x >= 2.0 - alpha) {
            return Err(Error::domain(format!("potential {x} is not below 2 - alpha")));
        }
        Ok(SpikeState { potentials, alpha })
    }

    pub fn potentials(&self) -> &[f64] {
        &self.potentials
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn n(&self) -> usize {
        self.potentials.len()
    }
}

/// Outcome of one cascade.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CascadeResult {
    /// All particles that fire, sorted by index.
    pub gamma: Vec<usize>,
    /// Non-empty rounds `Γ₀, Γ₁, …` in cascade order, each sorted by index.
    pub rounds: Vec<Vec<usize>>,
    pub post_potentials: Vec<f64>,
    /// `|Γ| / N`.
    pub jump_fraction: f64,
}

impl CascadeResult {
    pub fn size(&self) -> usize {
        self.gamma.len()
    }

    pub fn round_sizes(&self) -> Vec<usize> {
        self.rounds.iter().map(Vec::len).collect()
    }
}

/// Indices sorted by decreasing potential, ties broken by index.
fn descending_order(xs: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..xs.len()).collect();
    order.sort_by(|&a, &b| xs[b].total_cmp(&xs[a]).then(a.cmp(&b)));
    order
}

/// Resolves the physical cascade triggered by the particles at or above 1.
///
/// Each round is a contiguous block of the particles sorted by decreasing
/// potential, since the firing test is monotone in `X`.
pub fn resolve_cascade(state: &SpikeState) -> CascadeResult {
    let xs = &state.potentials;
    let (n, alpha) = (xs.len(), state.alpha);
    let order = descending_order(xs);

    let mut rounds = Vec::new();
    let mut fired = 0;
    loop {
        let k = kick(alpha, fired, n);
        let end = fired + order[fired..].partition_point(|&i| fires(xs[i], k));
        if end == fired {
            break;
        }
        let mut round = order[fired..end].to_vec();
        round.sort_unstable();
        rounds.push(round);
        fired = end;
    }

    let mut gamma = order[..fired].to_vec();
    gamma.sort_unstable();
    let k = kick(alpha, fired, n);
    let mut post: Vec<f64> = xs.iter().map(|&x| x + k).collect();
    for &i in &gamma {
        post[i] -= 1.0;
    }
    debug_assert!(post.iter().all(|&x| x < 1.0));
    CascadeResult {
        gamma,
        rounds,
        post_potentials: post,
        jump_fraction: fired as f64 / n as f64,
    }
}

/// `inf { k : #{ i : X_i + αk/N ≥ 1 } ≤ k }`, scanning `k = 0, 1, …, N`.
pub fn cascade_size_inf(state: &SpikeState) -> usize {
    let (n, alpha) = (state.n(), state.alpha);
    let mut sorted = state.potentials.clone();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let count = |k: usize| {
        let kk = kick(alpha, k, n);
        sorted.partition_point(|&x| fires(x, kk))
    };
    (0..=n)
        .find(|&k| count(k) <= k)
        .expect("k = N always satisfies the bound")
}

/// Members and round sizes of a cascade without the post-update vector.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct CascadeSummary {
    /// Firing particles in cascade order; within a round, by index.
    pub members: Vec<usize>,
    pub round_sizes: Vec<usize>,
}

impl CascadeSummary {
    pub fn size(&self) -> usize {
        self.members.len()
    }
}

/// Cascade for the simulator: `potentials[i]` is `X_i`, and `seed` lists the
/// particles already known to sit at or above the threshold, in index order.
///
/// Early rounds are found by linear scans, which is cheap for the small
/// cascades that dominate a run. Once a cascade runs past a few rounds the
/// remaining candidates are sorted and the rest is resolved by a prefix walk.
pub fn cascade_members(potentials: &[f64], alpha: f64, seed: Vec<usize>) -> CascadeSummary {
    const SCAN_ROUNDS: usize = 4;
    let n = potentials.len();
    let mut summary = CascadeSummary {
        round_sizes: Vec::new(),
        members: seed,
    };
    if summary.members.is_empty() {
        return summary;
    }
    summary.round_sizes.push(summary.members.len());
    let mut prev_kick = 0.0;
    for _ in 0..SCAN_ROUNDS {
        let k = kick(alpha, summary.members.len(), n);
        // newly firing: reached with the current kick but not with the previous one
        let start = summary.members.len();
        summary
            .members
            .extend((0..n).filter(|&i| fires(potentials[i], k) && !fires(potentials[i], prev_kick)));
        let added = summary.members.len() - start;
        if added == 0 {
            return summary;
        }
        summary.round_sizes.push(added);
        prev_kick = k;
    }
    // candidates not yet fired that could still be reached by the largest kick
    let mut rest: Vec<usize> = (0..n)
        .filter(|&i| !fires(potentials[i], prev_kick) && fires(potentials[i], alpha))
        .collect();
    rest.sort_by(|&a, &b| potentials[b].total_cmp(&potentials[a]).then(a.cmp(&b)));
    let mut pos = 0;
    loop {
        let k = kick(alpha, summary.members.len(), n);
        let end = pos + rest[pos..].partition_point(|&i| fires(potentials[i], k));
        if end == pos {
            break;
        }
        let mut round = rest[pos..end].to_vec();
        round.sort_unstable();
        summary.round_sizes.push(round.len());
        summary.members.extend(round);
        pos = end;
    }
    summary
}

fn sorted_desc(samples: &[f64]) -> Result<Vec<f64>> {
    if samples.is_empty() {
        return Err(Error::domain("no samples"));
    }
    if samples.iter().any(|x| !x.is_finite()) {
        return Err(Error::domain("samples must be finite"));
    }
    let mut xs = samples.to_vec();
    xs.sort_by(|a, b| b.total_cmp(a));
    Ok(xs)
}

/// Physical jump size of the empirical law of `samples`:
/// `inf { η ≥ 0 : (1/N)·#{ x_i + αη ≥ 1 } < η }`.
///
/// The empirical functional is a right-continuous step function of `η`, so
/// the infimum is the smallest candidate `c` among `{k/N}` and the
/// breakpoints `(1 − x_i)/α` with `F(c) ≤ c`. The result lies in `[0, 1]` and
/// equals `cascade_size_inf / N` on the same data.
pub fn physical_jump_size(samples: &[f64], alpha: f64) -> Result<f64> {
    check_alpha(alpha)?;
    let xs = sorted_desc(samples)?;
    let n = xs.len();
    let mut candidates: Vec<f64> = (0..=n).map(|k| k as f64 / n as f64).collect();
    candidates.extend(
        xs.iter()
            .map(|&x| (1.0 - x) / alpha)
            .filter(|&c| (0.0..=1.0).contains(&c)),
    );
    candidates.sort_by(f64::total_cmp);
    let n_f = n as f64;
    let mass = |eta: f64| xs.partition_point(|&x| fires(x, alpha * eta)) as f64 / n_f;
    Ok(candidates
        .into_iter()
        .find(|&c| mass(c) <= c)
        .expect("c = 1 always satisfies the bound"))
}

/// Outcome of the physical-criterion diagnostic.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CriterionReport {
    pub pass: bool,
    /// `min_η (P̂(X ≥ 1 − αη) − η)` over the grid.
    pub worst_margin: f64,
    pub worst_eta: f64,
    /// Allowed shortfall from the `1/N` quantization of the empirical law.
    pub tolerance: f64,
}

/// Checks `P̂(X + αη ≥ 1) ≥ η` for `grid` evenly spaced `η ∈ [0, jump]`,
/// allowing a shortfall of `1/N`.
pub fn physical_criterion_check(samples: &[f64], alpha: f64, jump: f64, grid: usize) -> Result<CriterionReport> {
    check_alpha(alpha)?;
    if !(0.0..=1.0).contains(&jump) {
        return Err(Error::domain(format!("jump size {jump} outside [0, 1]")));
    }
    let xs = sorted_desc(samples)?;
    let n_f = xs.len() as f64;
    let tolerance = 1.0 / n_f;
    if jump == 0.0 {
        return Ok(CriterionReport {
            pass: true,
            worst_margin: 0.0,
            worst_eta: 0.0,
            tolerance,
        });
    }
    let points = grid.max(2);
    let mut report = CriterionReport {
        pass: true,
        worst_margin: f64::INFINITY,
        worst_eta: 0.0,
        tolerance,
    };
    for g in 0..points {
        let eta = jump * g as f64 / (points - 1) as f64;
        let mass = xs.partition_point(|&x| fires(x, alpha * eta)) as f64 / n_f;
        let margin = mass - eta;
        if margin < report.worst_margin {
            report.worst_margin = margin;
            report.worst_eta = eta;
        }
    }
    report.pass = report.worst_margin >= -tolerance;
    Ok(report)
}
