//! Euler–Maruyama simulation of the N-particle system with exact cascades.
//!
//! The state is kept in the reformulated variables `Z = X + M`: between
//! cascades every `Z^i` moves by its own drift and Brownian increment, and at
//! a cascade of size `|Γ|` every `Z^i` moves by the same `α|Γ|/N` while `M^i`
//! increases by one for `i ∈ Γ`. The potential is recovered as `X = Z − M`.
//!
//! A spike is detected when `X ≥ 1` on the time grid. The overshoot is
//! absorbed by the cascade rule since any particle at or above 1 fires. A
//! particle whose overshoot plus the kick it receives keeps it at or above 1
//! after the reset fires again in a follow-up cascade logged at the same
//! time; this needs a macroscopic kick and vanishes as `dt → 0`.

mod model;

use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use model::{sample_initial, DriftSpec, InitKind, InitialLaw};

use crate::cascade::{cascade_members, check_alpha, kick};
use crate::error::{Error, Result};
use crate::paths::{CadlagPath, PathBuilder};
use crate::rng::{substream, Substream};

const MAX_CASCADES_PER_STEP: usize = 64;

/// Configuration of a particle-system run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub n: usize,
    pub horizon: f64,
    pub dt: f64,
    pub alpha: f64,
    pub drift: DriftSpec,
    pub init: InitialLaw,
    /// 1 for the model; 0 gives a deterministic flow.
    pub noise_scale: f64,
    pub seed: u64,
    pub record_trajectories: bool,
    /// Particles `0..record_cap` are recorded when trajectories are on.
    pub record_cap: usize,
    /// Cascades with `|Γ|/N` at least this large keep their pre-cascade
    /// potentials for later verification.
    pub capture_fraction: f64,
}

impl SimConfig {
    pub fn new(n: usize, horizon: f64, dt: f64, alpha: f64, drift: DriftSpec, init: InitialLaw) -> Self {
        SimConfig {
            n,
            horizon,
            dt,
            alpha,
            drift,
            init,
            noise_scale: 1.0,
            seed: 0,
            record_trajectories: false,
            record_cap: 100,
            capture_fraction: 0.05,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::config("n", "need at least one particle"));
        }
        if !(self.horizon > 0.0 && self.horizon.is_finite()) {
            return Err(Error::config(
                "horizon",
                format!("must be positive, got {}", self.horizon),
            ));
        }
        if !(self.dt > 0.0) {
            return Err(Error::config("dt", format!("must be positive, got {}", self.dt)));
        }
        if self.dt > self.horizon {
            return Err(Error::config("dt", "step exceeds the horizon"));
        }
        check_alpha(self.alpha)?;
        if !(self.noise_scale >= 0.0 && self.noise_scale.is_finite()) {
            return Err(Error::config("noise_scale", "must be finite and non-negative"));
        }
        if !(0.0..=1.0).contains(&self.capture_fraction) {
            return Err(Error::config("capture_fraction", "must lie in [0, 1]"));
        }
        self.drift.validate()?;
        self.init.validate()
    }

    /// Whether the run uses the model's unit noise (or the zero-noise flow).
    pub fn is_canonical(&self) -> bool {
        self.noise_scale == 0.0 || self.noise_scale == 1.0
    }

    pub fn steps(&self) -> usize {
        step_count(self.horizon, self.dt)
    }
}

pub(crate) fn step_count(horizon: f64, dt: f64) -> usize {
    ((horizon / dt) - 1e-9).ceil().max(1.0) as usize
}

/// Grid time of step `k`; the last step is shortened to land on the horizon.
pub(crate) fn grid_time(k: usize, steps: usize, dt: f64, horizon: f64) -> f64 {
    if k == steps {
        horizon
    } else {
        k as f64 * dt
    }
}

/// One cascade in the event log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventRecord {
    pub step: usize,
    pub t: f64,
    pub gamma_size: usize,
    pub jump_fraction: f64,
    pub round_sizes: Vec<usize>,
    /// Pre-cascade potentials of all particles, kept for large cascades.
    pub pre_samples: Option<Vec<f64>>,
}

/// Running moment statistics across particles.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MomentStats {
    /// Mean and standard error of `sup_{t ≤ T} |Z^i_t|`.
    pub sup_abs_z_mean: f64,
    pub sup_abs_z_se: f64,
    /// Mean and standard error of `(M^i_T)²`.
    pub m_sq_mean: f64,
    pub m_sq_se: f64,
    pub max_cascade_fraction: f64,
}

#[derive(Debug, Clone)]
pub struct SimOutput {
    pub n: usize,
    pub alpha: f64,
    pub dt: f64,
    /// Empirical firing map `ē^N(t) = (1/N) Σ M^i_t` on the time grid.
    pub ebar: CadlagPath,
    pub m_paths: Vec<CadlagPath>,
    pub z_paths: Vec<CadlagPath>,
    pub events: Vec<EventRecord>,
    pub moments: MomentStats,
}

impl SimOutput {
    pub fn max_cascade_fraction(&self) -> f64 {
        self.moments.max_cascade_fraction
    }
}

struct Particle {
    z: f64,
    m: u32,
    sup_abs: f64,
    rng: Substream,
}

impl Particle {
    #[inline]
    fn potential(&self) -> f64 {
        self.z - self.m as f64
    }
}

pub(crate) fn mean_and_se(xs: impl Iterator<Item = f64>) -> (f64, f64) {
    let v: Vec<f64> = xs.collect();
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    if v.len() < 2 {
        return (mean, 0.0);
    }
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Runs the particle system on `[0, horizon]`.
pub fn run_particle_system(config: &SimConfig) -> Result<SimOutput> {
    config.validate()?;
    let n = config.n;
    let steps = config.steps();
    let alpha = config.alpha;

    let mut particles: Vec<Particle> = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut rng = substream(config.seed, i as u64);
            let x0 = config.init.draw(i, &mut rng);
            Particle {
                z: x0,
                m: 0,
                sup_abs: x0.abs(),
                rng,
            }
        })
        .collect();

    let recorded = if config.record_trajectories {
        config.record_cap.min(n)
    } else {
        0
    };
    let mut z_builders: Vec<PathBuilder> = (0..recorded).map(|_| PathBuilder::with_capacity(steps + 1)).collect();
    let mut m_builders: Vec<PathBuilder> = (0..recorded).map(|_| PathBuilder::with_capacity(steps + 1)).collect();
    for (i, (zb, mb)) in z_builders.iter_mut().zip(m_builders.iter_mut()).enumerate() {
        zb.push(0.0, particles[i].z);
        mb.push(0.0, 0.0);
    }

    let mut ebar = PathBuilder::with_capacity(steps + 1);
    ebar.push(0.0, 0.0);
    let mut total_spikes: u64 = 0;
    let mut events = Vec::new();
    let mut potentials = vec![0.0; n];
    let mut max_fraction = 0.0f64;
    let mut t_prev = 0.0;

    for k in 1..=steps {
        let t = grid_time(k, steps, config.dt, config.horizon);
        let h = t - t_prev;
        let noise = config.noise_scale * h.sqrt();
        let drift = &config.drift;

        // Euler–Maruyama step; collects particles at or above the threshold
        // together with any that went non-finite.
        let flagged: Vec<usize> = particles
            .par_iter_mut()
            .enumerate()
            .filter_map(|(i, p)| {
                let mut dz = drift.eval(p.potential()) * h;
                if noise > 0.0 {
                    let xi: f64 = StandardNormal.sample(&mut p.rng);
                    dz += noise * xi;
                }
                p.z += dz;
                p.sup_abs = p.sup_abs.max(p.z.abs());
                let x = p.potential();
                (x >= 1.0 || !x.is_finite()).then_some(i)
            })
            .collect();

        if let Some(&bad) = flagged.iter().find(|&&i| !particles[i].z.is_finite()) {
            return Err(Error::Runtime {
                step: k,
                message: format!("potential of particle {bad} is not finite"),
            });
        }

        let pre_z: Vec<f64> = particles[..recorded].iter().map(|p| p.z).collect();
        let mut fired = false;
        let mut flagged = flagged;
        let mut repeats = 0;
        // A particle that overshot the threshold by more than 1 − kick is
        // still at or above 1 after its reset; it crossed again later in the
        // same step, so it fires in a follow-up cascade at the same time.
        while !flagged.is_empty() {
            if repeats == MAX_CASCADES_PER_STEP {
                return Err(Error::Runtime {
                    step: k,
                    message: format!("potentials still above threshold after {repeats} cascades"),
                });
            }
            for (x, p) in potentials.iter_mut().zip(&particles) {
                *x = p.potential();
            }
            let summary = cascade_members(&potentials, alpha, flagged);
            let size = summary.size();
            let fraction = size as f64 / n as f64;
            let jump = kick(alpha, size, n);
            for p in particles.iter_mut() {
                p.z += jump;
            }
            for &i in &summary.members {
                particles[i].m += 1;
            }
            total_spikes += size as u64;
            max_fraction = max_fraction.max(fraction);
            events.push(EventRecord {
                step: k,
                t,
                gamma_size: size,
                jump_fraction: fraction,
                round_sizes: summary.round_sizes,
                pre_samples: (fraction >= config.capture_fraction).then(|| potentials.clone()),
            });
            fired = true;
            repeats += 1;
            flagged = summary
                .members
                .into_iter()
                .filter(|&i| particles[i].potential() >= 1.0)
                .collect();
        }

        if fired {
            for p in particles.iter_mut() {
                p.sup_abs = p.sup_abs.max(p.z.abs());
            }
        }
        for i in 0..recorded {
            let p = &particles[i];
            if fired {
                z_builders[i].push_jump(t, pre_z[i], p.z);
            } else {
                z_builders[i].push(t, p.z);
            }
            m_builders[i].push_step(t, p.m as f64);
        }
        ebar.push_step(t, total_spikes as f64 / n as f64);
        t_prev = t;
    }

    let (sup_abs_z_mean, sup_abs_z_se) = mean_and_se(particles.iter().map(|p| p.sup_abs));
    let (m_sq_mean, m_sq_se) = mean_and_se(particles.iter().map(|p| (p.m as f64).powi(2)));

    Ok(SimOutput {
        n,
        alpha,
        dt: config.dt,
        ebar: ebar.finish()?,
        m_paths: m_builders.into_iter().map(PathBuilder::finish).collect::<Result<_>>()?,
        z_paths: z_builders.into_iter().map(PathBuilder::finish).collect::<Result<_>>()?,
        events,
        moments: MomentStats {
            sup_abs_z_mean,
            sup_abs_z_se,
            m_sq_mean,
            m_sq_se,
            max_cascade_fraction: max_fraction,
        },
    })
}
