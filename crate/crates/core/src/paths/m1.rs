//! M1 oscillation functions and a discretized M1 distance.
//!
//! The distance is the infimum, over parametric representations `(u, r)` of
//! the two completed graphs, of `‖u₁ − u₂‖ ∨ ‖r₁ − r₂‖`. We trace each
//! completed graph as a polyline, sample it densely and compute the discrete
//! Fréchet coupling of the two point sequences under the max-norm. Any
//! monotone coupling of the samples extends to a pair of parametric
//! representations, so the result is an upper bound of the true distance. It
//! overshoots by at most the sampling step ([`M1Distance::slack`]).

use super::cadlag::CadlagPath;
use crate::error::{Error, Result};

/// The values `f` visits inside `[0 ∨ (t−δ), T ∧ (t+δ)]`, in time order.
/// Left limits at interior jump times are included as separate points.
fn window_values(f: &CadlagPath, t: f64, delta: f64) -> Result<Vec<f64>> {
    if !(delta > 0.0) {
        return Err(Error::domain(format!(
            "window half-width must be positive, got {delta}"
        )));
    }
    let horizon = f.horizon();
    if !(0.0..=horizon).contains(&t) {
        return Err(Error::domain(format!("t = {t} outside [0, {horizon}]")));
    }
    let lo = (t - delta).max(0.0);
    let hi = (t + delta).min(horizon);
    let times = f.times();
    let mut out = vec![f.evaluate(lo)?];
    let start = times.partition_point(|&s| s <= lo);
    let end = times.partition_point(|&s| s <= hi);
    for i in start..end {
        if f.is_jump(i) {
            out.push(f.left_values()[i]);
        }
        out.push(f.values()[i]);
    }
    if times[end - 1] != hi {
        out.push(f.evaluate(hi)?);
    }
    Ok(out)
}

/// `w_T(f, t, δ)`: the largest distance from a middle value `f(t₂)` to the
/// segment `[f(t₁), f(t₃)]` over `t₁ < t₂ < t₃` in the window.
///
/// Exact when every breakpoint of `f` is a sample. Zero for monotone paths.
pub fn oscillation_w(f: &CadlagPath, t: f64, delta: f64) -> Result<f64> {
    let vals = window_values(f, t, delta)?;
    let n = vals.len();
    if n < 3 {
        return Ok(0.0);
    }
    // suffix extrema over indices strictly after j
    let mut suf_min = vec![f64::INFINITY; n];
    let mut suf_max = vec![f64::NEG_INFINITY; n];
    for j in (0..n - 1).rev() {
        suf_min[j] = suf_min[j + 1].min(vals[j + 1]);
        suf_max[j] = suf_max[j + 1].max(vals[j + 1]);
    }
    let (mut pre_min, mut pre_max) = (vals[0], vals[0]);
    let mut best = 0.0f64;
    for j in 1..n - 1 {
        let v = vals[j];
        let above = v - pre_min.max(suf_min[j]);
        let below = pre_max.min(suf_max[j]) - v;
        best = best.max(above).max(below);
        pre_min = pre_min.min(v);
        pre_max = pre_max.max(v);
    }
    Ok(best)
}

/// `v_T(f, t, δ)`: the largest `|f(t₁) − f(t₂)|` inside the window.
pub fn oscillation_v(f: &CadlagPath, t: f64, delta: f64) -> Result<f64> {
    let vals = window_values(f, t, delta)?;
    let (lo, hi) = vals.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
        (lo.min(v), hi.max(v))
    });
    Ok(hi - lo)
}

/// Sampled parametric representation of a completed graph: the points
/// `(u[p], r[p])` trace the graph left to right.
#[derive(Debug, Clone, PartialEq)]
pub struct ParametricRepresentation {
    pub u: Vec<f64>,
    pub r: Vec<f64>,
}

impl ParametricRepresentation {
    pub fn len(&self) -> usize {
        self.u.len()
    }

    pub fn is_empty(&self) -> bool {
        self.u.is_empty()
    }

    /// Largest max-norm gap between consecutive points.
    pub fn max_step(&self) -> f64 {
        self.u
            .windows(2)
            .zip(self.r.windows(2))
            .map(|(u, r)| (u[1] - u[0]).abs().max(r[1] - r[0]))
            .fold(0.0, f64::max)
    }

    /// Checks time-trace monotonicity, endpoint placement, membership in the
    /// completed graph of `f` (within `eps`) and the graph order.
    pub fn check(&self, f: &CadlagPath, eps: f64) -> std::result::Result<(), String> {
        let n = self.len();
        if n < 2 || self.r.len() != n {
            return Err("representation needs at least two points".into());
        }
        if self.r[0] != 0.0 || self.r[n - 1] != f.horizon() {
            return Err(format!("time trace spans [{}, {}]", self.r[0], self.r[n - 1]));
        }
        let times = f.times();
        for p in 0..n {
            let (u, r) = (self.u[p], self.r[p]);
            if p > 0 && r < self.r[p - 1] {
                return Err(format!("time trace decreases at point {p}"));
            }
            let i = times.partition_point(|&s| s <= r).saturating_sub(1);
            if times[i] == r && f.is_jump(i) {
                let (a, b) = (f.left_values()[i], f.values()[i]);
                if u < a.min(b) - eps || u > a.max(b) + eps {
                    return Err(format!("point {p} = ({u}, {r}) off the jump segment [{a}, {b}]"));
                }
                if p > 0 && self.r[p - 1] == r && (a - u).abs() + eps < (a - self.u[p - 1]).abs() {
                    return Err(format!("point {p} moves backwards along the jump at {r}"));
                }
            } else {
                let want = f.evaluate(r).map_err(|e| e.to_string())?;
                if (u - want).abs() > eps {
                    return Err(format!("point {p} = ({u}, {r}) off the graph (f = {want})"));
                }
            }
        }
        Ok(())
    }
}

/// Vertices of the completed graph of `f`, traced left to right, with
/// consecutive duplicates removed.
fn graph_vertices(f: &CadlagPath) -> Vec<(f64, f64)> {
    let mut verts: Vec<(f64, f64)> = Vec::with_capacity(2 * f.len());
    for i in 0..f.len() {
        let t = f.times()[i];
        if f.is_jump(i) {
            verts.push((f.left_values()[i], t));
        }
        verts.push((f.values()[i], t));
    }
    verts.dedup();
    verts
}

/// Samples the completed graph of `f` with roughly `resolution` points.
///
/// Parameter is spent in proportion to normalized length `|Δr|/T + |Δu|/U`
/// (`U` the value range), so jumps become runs of points with constant `r`
/// while `u` sweeps `[f(t−), f(t)]`. Every vertex of the graph is kept.
pub fn build_parametric(f: &CadlagPath, resolution: usize) -> ParametricRepresentation {
    let verts = graph_vertices(f);
    let horizon = f.horizon();
    let (lo, hi) = f.min_max();
    let range = if hi > lo { hi - lo } else { 1.0 };
    let weights: Vec<f64> = verts
        .windows(2)
        .map(|w| (w[1].1 - w[0].1) / horizon + (w[1].0 - w[0].0).abs() / range)
        .collect();
    let total: f64 = weights.iter().sum();
    let budget = resolution.saturating_sub(1).max(weights.len()) as f64;

    let mut u = Vec::with_capacity(resolution.max(verts.len()));
    let mut r = Vec::with_capacity(resolution.max(verts.len()));
    for (w, &len) in verts.windows(2).zip(&weights) {
        let pieces = ((len / total) * budget).ceil().max(1.0) as usize;
        let (u0, r0) = w[0];
        let (u1, r1) = w[1];
        u.push(u0);
        r.push(r0);
        for k in 1..pieces {
            let lambda = k as f64 / pieces as f64;
            u.push(u0 + lambda * (u1 - u0));
            r.push(if r0 == r1 { r0 } else { r0 + lambda * (r1 - r0) });
        }
    }
    let &(u_end, r_end) = verts.last().unwrap();
    u.push(u_end);
    r.push(r_end);
    ParametricRepresentation { u, r }
}

/// Discretized M1 distance with its approximation slack.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct M1Distance {
    /// Upper bound of the true distance.
    pub upper: f64,
    /// Sampling step of the representations; `upper − slack` is at most the
    /// true distance.
    pub slack: f64,
}

/// Discrete Fréchet distance between two point sequences under the max-norm.
fn discrete_frechet(a: &ParametricRepresentation, b: &ParametricRepresentation) -> f64 {
    let q = b.len();
    let cost = |i: usize, j: usize| (a.u[i] - b.u[j]).abs().max((a.r[i] - b.r[j]).abs());
    let mut prev = vec![0.0f64; q];
    let mut cur = vec![0.0f64; q];
    prev[0] = cost(0, 0);
    for j in 1..q {
        prev[j] = prev[j - 1].max(cost(0, j));
    }
    for i in 1..a.len() {
        cur[0] = prev[0].max(cost(i, 0));
        for j in 1..q {
            let reach = prev[j].min(cur[j - 1]).min(prev[j - 1]);
            cur[j] = reach.max(cost(i, j));
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[q - 1]
}

/// Upper approximation of `d_M1(f, g)` on representations of `resolution`
/// points. Both paths are made left-continuous at the horizon first.
pub fn m1_distance_bounds(f: &CadlagPath, g: &CadlagPath, resolution: usize) -> Result<M1Distance> {
    let (tf, tg) = (f.horizon(), g.horizon());
    if (tf - tg).abs() > 1e-12 * tf.max(tg) {
        return Err(Error::domain(format!("paths live on different horizons {tf} and {tg}")));
    }
    let a = build_parametric(&f.left_continuous_at_horizon(), resolution);
    let mut b = build_parametric(&g.left_continuous_at_horizon(), resolution);
    // identical endpoints keep d(f, f) exactly zero when horizons differ by round-off
    *b.r.last_mut().unwrap() = *a.r.last().unwrap();
    Ok(M1Distance {
        upper: discrete_frechet(&a, &b),
        slack: a.max_step().max(b.max_step()),
    })
}

/// Upper approximation of `d_M1(f, g)`; see [`m1_distance_bounds`].
pub fn m1_distance(f: &CadlagPath, g: &CadlagPath, resolution: usize) -> Result<f64> {
    m1_distance_bounds(f, g, resolution).map(|d| d.upper)
}
