use rand::Rng;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::rng::substream;

/// Drift `b`, Lipschitz on `(−∞, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DriftSpec {
    Zero,
    Constant {
        c: f64,
    },
    /// `x ↦ a·x + b`
    Affine {
        a: f64,
        b: f64,
    },
    /// Linear interpolation through `(x, y)` breakpoints sorted by `x`,
    /// constant beyond the outermost ones.
    PiecewiseLinear {
        points: Vec<(f64, f64)>,
    },
}

impl DriftSpec {
    pub fn validate(&self) -> Result<()> {
        let finite = |v: f64, what: &str| {
            if v.is_finite() {
                Ok(())
            } else {
                Err(Error::config("drift", format!("{what} must be finite")))
            }
        };
        match self {
            DriftSpec::Zero => Ok(()),
            DriftSpec::Constant { c } => finite(*c, "c"),
            DriftSpec::Affine { a, b } => finite(*a, "a").and(finite(*b, "b")),
            DriftSpec::PiecewiseLinear { points } => {
                if points.is_empty() {
                    return Err(Error::config(
                        "drift",
                        "piecewise-linear drift needs at least one breakpoint",
                    ));
                }
                for &(x, y) in points {
                    finite(x, "breakpoint x")?;
                    finite(y, "breakpoint y")?;
                }
                if points.windows(2).any(|w| !(w[1].0 > w[0].0)) {
                    return Err(Error::config("drift", "breakpoints must have strictly increasing x"));
                }
                Ok(())
            }
        }
    }

    /// `b(min(x, 1))`. Values above the threshold only occur transiently
    /// before a cascade and use `b(1)`.
    pub fn eval(&self, x: f64) -> f64 {
        let x = x.min(1.0);
        match self {
            DriftSpec::Zero => 0.0,
            DriftSpec::Constant { c } => *c,
            DriftSpec::Affine { a, b } => a * x + b,
            DriftSpec::PiecewiseLinear { points } => {
                let i = points.partition_point(|p| p.0 <= x);
                if i == 0 {
                    points[0].1
                } else if i == points.len() {
                    points[i - 1].1
                } else {
                    let (x0, y0) = points[i - 1];
                    let (x1, y1) = points[i];
                    y0 + (x - x0) / (x1 - x0) * (y1 - y0)
                }
            }
        }
    }

    /// Lipschitz constant `K` on `(−∞, 1]`.
    pub fn lipschitz(&self) -> f64 {
        match self {
            DriftSpec::Zero | DriftSpec::Constant { .. } => 0.0,
            DriftSpec::Affine { a, .. } => a.abs(),
            DriftSpec::PiecewiseLinear { points } => points
                .windows(2)
                .filter(|w| w[0].0 < 1.0)
                .map(|w| ((w[1].1 - w[0].1) / (w[1].0 - w[0].0)).abs())
                .fold(0.0, f64::max),
        }
    }
}

/// Law of the initial potentials.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum InitKind {
    PointMass {
        x0: f64,
    },
    Uniform {
        lo: f64,
        hi: f64,
    },
    /// Normal(mean, sd) conditioned on `X ≤ hi`.
    TruncatedGaussian {
        mean: f64,
        sd: f64,
        hi: f64,
    },
    /// Particle `i` starts at `values[i % len]`; no randomness is used.
    Points {
        values: Vec<f64>,
    },
}

/// Initial law together with its distance `ε₀` to the threshold.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InitialLaw {
    pub kind: InitKind,
    pub epsilon0: f64,
}

impl InitialLaw {
    pub fn new(kind: InitKind, epsilon0: f64) -> Result<Self> {
        let law = InitialLaw { kind, epsilon0 };
        law.validate()?;
        Ok(law)
    }

    /// Support must lie in `(−∞, 1 − ε₀]` with `ε₀ > 0`.
    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon0 > 0.0 && self.epsilon0 < 1.0) {
            return Err(Error::config(
                "epsilon0",
                format!("must lie in (0, 1), got {}", self.epsilon0),
            ));
        }
        let cap = 1.0 - self.epsilon0;
        let top = match self.kind {
            InitKind::PointMass { x0 } => x0,
            InitKind::Points { ref values } => {
                if values.is_empty() || values.iter().any(|v| !v.is_finite()) {
                    return Err(Error::config(
                        "init",
                        "points must be a non-empty list of finite values",
                    ));
                }
                values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
            }
            InitKind::Uniform { lo, hi } => {
                if !(lo < hi) || !lo.is_finite() {
                    return Err(Error::config(
                        "init",
                        format!("uniform bounds [{lo}, {hi}] are invalid"),
                    ));
                }
                hi
            }
            InitKind::TruncatedGaussian { mean, sd, hi } => {
                if !(sd > 0.0) || !mean.is_finite() {
                    return Err(Error::config("init", "truncated gaussian needs finite mean and sd > 0"));
                }
                hi
            }
        };
        if !(top <= cap) {
            return Err(Error::config(
                "init",
                format!("support reaches {top}, above 1 - epsilon0 = {cap}"),
            ));
        }
        Ok(())
    }

    /// Initial potential of particle `index`.
    pub fn draw<R: Rng + ?Sized>(&self, index: usize, rng: &mut R) -> f64 {
        match self.kind {
            InitKind::PointMass { x0 } => x0,
            InitKind::Points { ref values } => values[index % values.len()],
            InitKind::Uniform { lo, hi } => lo + (hi - lo) * rng.random::<f64>(),
            InitKind::TruncatedGaussian { mean, sd, hi } => {
                let normal = Normal::new(mean, sd).expect("validated parameters");
                let mass = normal.cdf(hi);
                // u in (0, 1] keeps the quantile finite
                let u = 1.0 - rng.random::<f64>();
                normal.inverse_cdf(u * mass).min(hi)
            }
        }
    }
}

/// `n` i.i.d. initial potentials; particle `i` uses the first draw(s) of its
/// own substream, exactly as the simulators do.
pub fn sample_initial(init: &InitialLaw, n: usize, seed: u64) -> Result<Vec<f64>> {
    init.validate()?;
    Ok((0..n).map(|i| init.draw(i, &mut substream(seed, i as u64))).collect())
}
