use crate::error::{Error, Result};

/// A right-continuous path on `[0, T]` stored as samples plus a jump registry.
///
/// Between consecutive samples `t_i < t_{i+1}` the path is linear from
/// `value(t_i)` to the left limit at `t_{i+1}`. For a sample that is not a
/// flagged jump the left limit equals the value, so the path is continuous
/// there. Step paths are the special case where every change is a flagged
/// jump whose left limit repeats the previous sample.
#[derive(Debug, Clone, PartialEq)]
pub struct CadlagPath {
    times: Vec<f64>,
    values: Vec<f64>,
    left: Vec<f64>,
    jump: Vec<bool>,
}

impl CadlagPath {
    /// Continuous piecewise-linear path through the given samples.
    pub fn new(times: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        let left = values.clone();
        let jump = vec![false; values.len()];
        Self::from_parts(times, values, left, jump)
    }

    /// Piecewise-linear path with discontinuities at the listed sample
    /// indices; each entry is `(index, left_value)`.
    pub fn with_jumps(times: Vec<f64>, values: Vec<f64>, jumps: &[(usize, f64)]) -> Result<Self> {
        let mut left = values.clone();
        let mut jump = vec![false; values.len()];
        for &(i, l) in jumps {
            if i >= values.len() {
                return Err(Error::domain(format!("jump index {i} out of range")));
            }
            left[i] = l;
            jump[i] = true;
        }
        Self::from_parts(times, values, left, jump)
    }

    /// Piecewise-constant path: `values[i]` holds on `[times[i], times[i+1])`.
    pub fn step(times: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        let n = values.len();
        let mut left = values.clone();
        let mut jump = vec![false; n];
        for i in 1..n {
            left[i] = values[i - 1];
            jump[i] = values[i] != values[i - 1];
        }
        Self::from_parts(times, values, left, jump)
    }

    pub fn constant(value: f64, horizon: f64) -> Result<Self> {
        Self::new(vec![0.0, horizon], vec![value, value])
    }

    /// Builds a path from raw columns, validating every invariant.
    pub fn from_parts(times: Vec<f64>, values: Vec<f64>, left: Vec<f64>, jump: Vec<bool>) -> Result<Self> {
        let n = times.len();
        if n < 2 {
            return Err(Error::domain("a path needs at least two samples"));
        }
        if values.len() != n || left.len() != n || jump.len() != n {
            return Err(Error::domain("path columns have mismatched lengths"));
        }
        if times[0] != 0.0 {
            return Err(Error::domain(format!("path must start at t = 0, got {}", times[0])));
        }
        for w in times.windows(2) {
            if !(w[1] > w[0]) || !w[1].is_finite() {
                return Err(Error::domain(format!(
                    "times not strictly increasing at {} -> {}",
                    w[0], w[1]
                )));
            }
        }
        if values.iter().chain(left.iter()).any(|v| !v.is_finite()) {
            return Err(Error::domain("path values must be finite"));
        }
        if jump[0] {
            return Err(Error::domain("a jump at t = 0 has no left limit"));
        }
        let mut left = left;
        for i in 0..n {
            if !jump[i] {
                left[i] = values[i];
            }
        }
        Ok(CadlagPath {
            times,
            values,
            left,
            jump,
        })
    }

    pub fn horizon(&self) -> f64 {
        *self.times.last().unwrap()
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Left limits at each sample (equal to the value away from jumps).
    pub fn left_values(&self) -> &[f64] {
        &self.left
    }

    pub fn is_jump(&self, i: usize) -> bool {
        self.jump[i]
    }

    /// Flagged discontinuities as `(time, left_value, value)`.
    pub fn jumps(&self) -> impl Iterator<Item = (f64, f64, f64)> + '_ {
        (0..self.len())
            .filter(|&i| self.jump[i])
            .map(|i| (self.times[i], self.left[i], self.values[i]))
    }

    fn check_domain(&self, t: f64) -> Result<()> {
        if !(0.0..=self.horizon()).contains(&t) {
            return Err(Error::domain(format!("t = {t} outside [0, {}]", self.horizon())));
        }
        Ok(())
    }

    // index of the last sample with time <= t; t must be in range
    fn locate(&self, t: f64) -> usize {
        self.times.partition_point(|&s| s <= t) - 1
    }

    fn interpolate(&self, i: usize, t: f64) -> f64 {
        let (t0, t1) = (self.times[i], self.times[i + 1]);
        let (v0, v1) = (self.values[i], self.left[i + 1]);
        if v0 == v1 {
            return v0;
        }
        let lambda = (t - t0) / (t1 - t0);
        v0 + lambda * (v1 - v0)
    }

    /// Right-continuous evaluation `f(t)`.
    pub fn evaluate(&self, t: f64) -> Result<f64> {
        self.check_domain(t)?;
        let i = self.locate(t);
        if self.times[i] == t {
            Ok(self.values[i])
        } else {
            Ok(self.interpolate(i, t))
        }
    }

    /// Left limit `f(t−)`; at `t = 0` this is `f(0)`.
    pub fn evaluate_left(&self, t: f64) -> Result<f64> {
        self.check_domain(t)?;
        let i = self.locate(t);
        if self.times[i] == t {
            Ok(self.left[i])
        } else {
            Ok(self.interpolate(i, t))
        }
    }

    /// Copy with the terminal jump removed, so the path is left-continuous at
    /// `T`. Metric computations work on this version.
    pub fn left_continuous_at_horizon(&self) -> CadlagPath {
        let mut out = self.clone();
        let last = out.len() - 1;
        out.values[last] = out.left[last];
        out.jump[last] = false;
        out
    }

    /// True when the path never decreases, including across jumps.
    pub fn is_non_decreasing(&self) -> bool {
        (0..self.len()).all(|i| {
            let across_jump = !self.jump[i] || self.left[i] <= self.values[i];
            let next_ok = i + 1 == self.len() || self.values[i] <= self.left[i + 1];
            across_jump && next_ok
        })
    }

    pub fn min_max(&self) -> (f64, f64) {
        self.values
            .iter()
            .chain(self.left.iter())
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
                (lo.min(v), hi.max(v))
            })
    }

    /// Evaluates the path at each of `grid` (right-continuous values).
    pub fn sample(&self, grid: &[f64]) -> Result<Vec<f64>> {
        grid.iter().map(|&t| self.evaluate(t)).collect()
    }
}

/// Incremental construction of a path with strictly increasing times.
#[derive(Debug, Default, Clone)]
pub struct PathBuilder {
    times: Vec<f64>,
    values: Vec<f64>,
    left: Vec<f64>,
    jump: Vec<bool>,
}

impl PathBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_capacity(n: usize) -> Self {
        PathBuilder {
            times: Vec::with_capacity(n),
            values: Vec::with_capacity(n),
            left: Vec::with_capacity(n),
            jump: Vec::with_capacity(n),
        }
    }

    pub fn push(&mut self, t: f64, value: f64) {
        self.times.push(t);
        self.values.push(value);
        self.left.push(value);
        self.jump.push(false);
    }

    pub fn push_jump(&mut self, t: f64, left: f64, value: f64) {
        self.times.push(t);
        self.values.push(value);
        self.left.push(left);
        self.jump.push(true);
    }

    /// Appends a sample of a piecewise-constant path, flagging a jump when
    /// the value changes.
    pub fn push_step(&mut self, t: f64, value: f64) {
        match self.values.last() {
            Some(&prev) if prev != value => self.push_jump(t, prev, value),
            _ => self.push(t, value),
        }
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn finish(self) -> Result<CadlagPath> {
        CadlagPath::from_parts(self.times, self.values, self.left, self.jump)
    }
}

/// The counting map `m(t) = ⌊(sup_{s ≤ t} z(s))₊⌋`.
///
/// Level crossings inside a linear segment are located exactly; the output is
/// a step path sampled at every input time plus every crossing time.
pub fn counting_map(z: &CadlagPath) -> CadlagPath {
    let floor_pos = |x: f64| x.max(0.0).floor();
    let mut sup = z.values[0];
    let mut m = floor_pos(sup);
    let mut out = PathBuilder::with_capacity(z.len());
    out.push(0.0, m);

    for i in 0..z.len() - 1 {
        let (t0, t1) = (z.times[i], z.times[i + 1]);
        let (v0, v1) = (z.values[i], z.left[i + 1]);
        // crossings strictly inside (t0, t1)
        if v1 > sup {
            let target = floor_pos(v1);
            while m < target {
                let level = m + 1.0;
                let tc = t0 + (level - v0) / (v1 - v0) * (t1 - t0);
                if tc > t0 && tc < t1 && out.times.last().is_some_and(|&last| tc > last) {
                    m = level;
                    out.push_jump(tc, m - 1.0, m);
                } else {
                    break;
                }
            }
            sup = v1;
        }
        // at t1: left limit then the (possibly jumped) value
        let mut level_at_t1 = m.max(floor_pos(sup));
        if z.values[i + 1] > sup {
            sup = z.values[i + 1];
        }
        level_at_t1 = level_at_t1.max(floor_pos(sup));
        out.push_step(t1, level_at_t1);
        m = level_at_t1;
    }
    out.finish().expect("counting map preserves path invariants")
}
