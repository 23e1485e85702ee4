//! Post-processing of firing curves: jump detection, verification of jump
//! sizes against the physical rule, firing-rate estimation and convergence
//! tables across population sizes or delays.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cascade::{physical_criterion_check, physical_jump_size, CriterionReport};
use crate::error::{Error, Result};
use crate::particle_sim::{mean_and_se, EventRecord, SimOutput};
use crate::paths::{m1_distance, CadlagPath};

/// Smallest population fraction counted as a macroscopic jump.
pub const DEFAULT_JUMP_THRESHOLD: f64 = 0.05;
pub const DEFAULT_BANDWIDTH: f64 = 0.01;
const HIST_BINS: usize = 20;
const CRITERION_GRID: usize = 400;

/// Histogram of the potentials just before a jump, with the raw samples.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PreStateHistogram {
    pub lo: f64,
    pub hi: f64,
    pub counts: Vec<usize>,
    #[serde(skip)]
    pub samples: Vec<f64>,
}

impl PreStateHistogram {
    pub fn from_samples(samples: Vec<f64>) -> Self {
        let (lo, hi) = samples.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &x| {
            (lo.min(x), hi.max(x))
        });
        let mut counts = vec![0; HIST_BINS];
        if !samples.is_empty() {
            let width = (hi - lo).max(f64::MIN_POSITIVE);
            for &x in &samples {
                let b = (((x - lo) / width) * HIST_BINS as f64) as usize;
                counts[b.min(HIST_BINS - 1)] += 1;
            }
        }
        PreStateHistogram {
            lo,
            hi,
            counts,
            samples,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JumpEvent {
    pub time: f64,
    /// Increment of the firing curve, as a population fraction.
    pub size: f64,
    pub pre_state_hist: Option<PreStateHistogram>,
    /// Set by [`verify_physical_jump`]; `None` until checked or when the
    /// event carries no samples.
    pub criterion_pass: Option<bool>,
}

/// Jumps of a non-decreasing curve: grid steps over which it rises by at
/// least `threshold`.
pub fn detect_jumps(e: &CadlagPath, threshold: f64) -> Result<Vec<JumpEvent>> {
    if !(threshold > 0.0 && threshold < 1.0) {
        return Err(Error::domain(format!("jump threshold {threshold} outside (0, 1)")));
    }
    if !e.is_non_decreasing() {
        return Err(Error::domain("firing curve decreases"));
    }
    let v = e.values();
    Ok((1..e.len())
        .filter(|&i| v[i] - v[i - 1] >= threshold)
        .map(|i| JumpEvent {
            time: e.times()[i],
            size: v[i] - v[i - 1],
            pre_state_hist: None,
            criterion_pass: None,
        })
        .collect())
}

/// Macroscopic cascades of a particle run, cross-checked against `ē^N`.
///
/// Every grid step over which `ē^N` rises by at least `threshold` must hold
/// exactly one logged cascade of at least `threshold` (follow-up cascades
/// in the same step carry the remaining `O(1/N)`), and the logged fractions
/// at that step must add up to the increment of `ē^N`. Events carry the
/// logged pre-cascade potentials when present.
pub fn detect_particle_jumps(out: &SimOutput, threshold: f64) -> Result<Vec<JumpEvent>> {
    let curve_jumps = detect_jumps(&out.ebar, threshold)?;
    let time_tol = out.dt * 1e-6;
    let mut jumps = Vec::with_capacity(curve_jumps.len());
    for cj in &curve_jumps {
        let same_step: Vec<&EventRecord> = out
            .events
            .iter()
            .filter(|ev| (ev.t - cj.time).abs() <= time_tol)
            .collect();
        let logged: f64 = same_step.iter().map(|ev| ev.jump_fraction).sum();
        let macroscopic: Vec<&&EventRecord> = same_step.iter().filter(|ev| ev.jump_fraction >= threshold).collect();
        let [ev] = macroscopic[..] else {
            return Err(Error::domain(format!(
                "jump of size {} at t = {} holds {} macroscopic cascades",
                cj.size,
                cj.time,
                macroscopic.len()
            )));
        };
        if (logged - cj.size).abs() > 1e-9 {
            return Err(Error::domain(format!(
                "cascades at t = {} add up to {logged}, firing curve rises by {}",
                cj.time, cj.size
            )));
        }
        jumps.push(JumpEvent {
            time: ev.t,
            size: ev.jump_fraction,
            pre_state_hist: ev.pre_samples.clone().map(PreStateHistogram::from_samples),
            criterion_pass: None,
        });
    }
    let logged = out.events.iter().filter(|ev| ev.jump_fraction >= threshold).count();
    if logged != jumps.len() {
        return Err(Error::domain(format!(
            "{logged} logged cascades reach the threshold but {} jumps were detected",
            jumps.len()
        )));
    }
    Ok(jumps)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VerifyStatus {
    Pass,
    Fail,
    Unverifiable,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JumpVerification {
    pub status: VerifyStatus,
    pub recomputed: Option<f64>,
    pub criterion: Option<CriterionReport>,
}

impl JumpVerification {
    pub fn passed(&self) -> bool {
        self.status == VerifyStatus::Pass
    }
}

/// Recomputes the physical jump size from the pre-jump samples and checks
/// it against the observed size (within `1/N`), together with the
/// physical criterion on `[0, size]`.
pub fn verify_physical_jump(event: &JumpEvent, alpha: f64) -> Result<JumpVerification> {
    if event.size == 0.0 {
        return Ok(JumpVerification {
            status: VerifyStatus::Pass,
            recomputed: None,
            criterion: None,
        });
    }
    if event.size > 1.0 {
        return Err(Error::domain(format!(
            "jump of size {} exceeds the population",
            event.size
        )));
    }
    let samples = match &event.pre_state_hist {
        Some(h) if !h.samples.is_empty() => &h.samples,
        _ => {
            return Ok(JumpVerification {
                status: VerifyStatus::Unverifiable,
                recomputed: None,
                criterion: None,
            })
        }
    };
    let recomputed = physical_jump_size(samples, alpha)?;
    let criterion = physical_criterion_check(samples, alpha, event.size, CRITERION_GRID)?;
    let size_ok = (recomputed - event.size).abs() <= 1.0 / samples.len() as f64 + 1e-12;
    Ok(JumpVerification {
        status: if size_ok && criterion.pass {
            VerifyStatus::Pass
        } else {
            VerifyStatus::Fail
        },
        recomputed: Some(recomputed),
        criterion: Some(criterion),
    })
}

#[derive(Debug, Clone)]
pub struct FiringRate {
    /// Derivative estimate of the continuous part, at the curve's sample times.
    pub rate: CadlagPath,
    /// Macroscopic jumps as `(time, size)`; the rate is infinite there.
    pub jumps: Vec<(f64, f64)>,
}

/// Centered difference estimate of `e'` with half-width `bandwidth`, after
/// removing jumps of at least `threshold`.
pub fn firing_rate_with_threshold(e: &CadlagPath, bandwidth: f64, threshold: f64) -> Result<FiringRate> {
    if !(bandwidth > 0.0) {
        return Err(Error::domain(format!("bandwidth must be positive, got {bandwidth}")));
    }
    let jumps = detect_jumps(e, threshold)?;
    let times = e.times();
    let mut continuous = e.values().to_vec();
    let mut removed = 0.0;
    let mut next = jumps.iter().peekable();
    for (i, c) in continuous.iter_mut().enumerate() {
        if let Some(j) = next.next_if(|j| j.time == times[i]) {
            removed += j.size;
        }
        *c -= removed;
    }
    let part = CadlagPath::new(times.to_vec(), continuous)?;
    let horizon = e.horizon();
    let rate = times
        .iter()
        .map(|&t| {
            let (lo, hi) = ((t - bandwidth).max(0.0), (t + bandwidth).min(horizon));
            Ok((part.evaluate(hi)? - part.evaluate(lo)?) / (hi - lo))
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(FiringRate {
        rate: CadlagPath::new(times.to_vec(), rate)?,
        jumps: jumps.iter().map(|j| (j.time, j.size)).collect(),
    })
}

pub fn firing_rate(e: &CadlagPath, bandwidth: f64) -> Result<FiringRate> {
    firing_rate_with_threshold(e, bandwidth, DEFAULT_JUMP_THRESHOLD)
}

/// Trapezoidal integral of a path over `[0, T]`, ignoring jumps.
pub fn integrate(f: &CadlagPath) -> f64 {
    let (t, v, l) = (f.times(), f.values(), f.left_values());
    (1..t.len()).map(|i| 0.5 * (v[i - 1] + l[i]) * (t[i] - t[i - 1])).sum()
}

/// `points` evenly spaced times in `[0, T]`, dropping those within
/// `exclusion` of a jump of any of `curves`.
pub fn comparison_grid(curves: &[&CadlagPath], points: usize, exclusion: f64, threshold: f64) -> Result<Vec<f64>> {
    let Some(first) = curves.first() else {
        return Err(Error::domain("no curves to compare"));
    };
    let horizon = first.horizon();
    let mut jump_times = Vec::new();
    for c in curves {
        jump_times.extend(detect_jumps(c, threshold)?.into_iter().map(|j| j.time));
    }
    let points = points.max(2);
    Ok((0..points)
        .map(|i| horizon * i as f64 / (points - 1) as f64)
        .filter(|t| jump_times.iter().all(|s| (t - s).abs() > exclusion))
        .collect())
}

/// Pointwise average of paths with a common horizon, on the first path's
/// sample times, with its standard error as a second path.
pub fn ensemble_mean(curves: &[&CadlagPath]) -> Result<(CadlagPath, CadlagPath)> {
    let Some(first) = curves.first() else {
        return Err(Error::domain("no curves to average"));
    };
    let times = first.times().to_vec();
    let columns = |left: bool| -> Result<Vec<Vec<f64>>> {
        curves
            .iter()
            .map(|c| {
                times
                    .iter()
                    .map(|&t| if left { c.evaluate_left(t) } else { c.evaluate(t) })
                    .collect()
            })
            .collect()
    };
    let right = columns(false)?;
    let left = columns(true)?;
    let stat = |cols: &[Vec<f64>], i: usize| mean_and_se(cols.iter().map(|c| c[i]));
    let mut mean_v = Vec::with_capacity(times.len());
    let mut mean_l = Vec::with_capacity(times.len());
    let mut se = Vec::with_capacity(times.len());
    for i in 0..times.len() {
        let (m, s) = stat(&right, i);
        mean_v.push(m);
        se.push(s);
        mean_l.push(if i == 0 { m } else { stat(&left, i).0 });
    }
    let jump: Vec<bool> = mean_v.iter().zip(&mean_l).map(|(v, l)| v != l).collect();
    let mean_l: Vec<f64> = mean_v
        .iter()
        .zip(&mean_l)
        .zip(&jump)
        .map(|((v, l), j)| if *j { *l } else { *v })
        .collect();
    Ok((
        CadlagPath::from_parts(times.clone(), mean_v, mean_l, jump)?,
        CadlagPath::new(times, se)?,
    ))
}

/// One simulated curve in a convergence study.
#[derive(Debug, Clone)]
pub struct RunCurve {
    /// Group name, e.g. `"N=1000"`.
    pub label: String,
    /// Sweep value of the group (`N` or `δ`).
    pub param: f64,
    pub seed: u64,
    pub curve: CadlagPath,
}

/// Reference curves keyed by seed. A run whose seed appears here is compared
/// with that curve (common random numbers), other runs with the mean.
#[derive(Debug, Clone)]
pub struct Reference {
    pub label: String,
    pub curves: Vec<(u64, CadlagPath)>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReportOptions {
    pub comparison_points: usize,
    pub bandwidth: f64,
    pub jump_threshold: f64,
    pub m1_resolution: usize,
}

impl Default for ReportOptions {
    fn default() -> Self {
        ReportOptions {
            comparison_points: 200,
            bandwidth: DEFAULT_BANDWIDTH,
            jump_threshold: DEFAULT_JUMP_THRESHOLD,
            m1_resolution: 2000,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub mean: f64,
    pub se: f64,
}

impl Estimate {
    fn of(xs: impl Iterator<Item = f64>) -> Self {
        let (mean, se) = mean_and_se(xs);
        Estimate { mean, se }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PointGap {
    pub t: f64,
    /// Mean curve minus reference.
    pub gap: f64,
    pub se: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JumpSummary {
    pub seed: u64,
    pub t: f64,
    pub size: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupReport {
    pub label: String,
    pub param: f64,
    pub seeds: Vec<u64>,
    /// Whether every run was paired with a same-seed reference curve.
    pub paired: bool,
    /// Per-run `max_t |run − ref|`, averaged over seeds.
    pub sup_gap: Estimate,
    pub mean_abs_gap: Estimate,
    pub m1_gap: Estimate,
    /// Largest pointwise gap of the mean curve, with its error.
    pub mean_curve_sup_gap: Estimate,
    pub mean_curve_m1_gap: f64,
    /// `max_t |gap| / se` over the comparison grid.
    pub max_z: f64,
    pub pointwise: Vec<PointGap>,
    pub jumps: Vec<JumpSummary>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GapMetric {
    MeanCurveSup,
    MeanCurveM1,
    Sup,
    M1,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceReport {
    pub reference: String,
    pub options: ReportOptions,
    pub comparison_times: Vec<f64>,
    pub reference_jumps: Vec<JumpSummary>,
    pub groups: Vec<GroupReport>,
    /// Comparisons after a macroscopic jump are informational only, since
    /// the limit need not be unique past a synchronization.
    pub post_jump_informational: bool,
}

impl ConvergenceReport {
    fn metric(g: &GroupReport, metric: GapMetric) -> Estimate {
        match metric {
            GapMetric::MeanCurveSup => g.mean_curve_sup_gap,
            GapMetric::MeanCurveM1 => Estimate {
                mean: g.mean_curve_m1_gap,
                se: 0.0,
            },
            GapMetric::Sup => g.sup_gap,
            GapMetric::M1 => g.m1_gap,
        }
    }

    /// True when each group's gap lies below the previous group's by more
    /// than `z` combined standard errors.
    pub fn strictly_decreasing(&self, metric: GapMetric, z: f64) -> bool {
        self.groups.windows(2).all(|w| {
            let (a, b) = (Self::metric(&w[0], metric), Self::metric(&w[1], metric));
            b.mean + z * a.se.hypot(b.se) < a.mean
        })
    }

    pub fn write_json(&self, out: impl Write) -> Result<()> {
        serde_json::to_writer_pretty(out, self).map_err(|e| Error::Io(e.into()))
    }
}

fn jump_summaries(seed: u64, c: &CadlagPath, threshold: f64) -> Result<Vec<JumpSummary>> {
    Ok(detect_jumps(c, threshold)?
        .into_iter()
        .map(|j| JumpSummary {
            seed,
            t: j.time,
            size: j.size,
        })
        .collect())
}

/// Tabulates gaps of grouped runs to a reference. Groups keep the order in
/// which their labels first appear in `runs`.
pub fn convergence_report(
    runs: &[RunCurve],
    reference: &Reference,
    options: &ReportOptions,
) -> Result<ConvergenceReport> {
    if runs.len() < 2 {
        return Err(Error::domain("need at least two runs"));
    }
    if reference.curves.is_empty() {
        return Err(Error::domain("empty reference"));
    }
    let horizon = reference.curves[0].1.horizon();
    if let Some(bad) = runs
        .iter()
        .map(|r| &r.curve)
        .chain(reference.curves.iter().map(|(_, c)| c))
        .find(|c| (c.horizon() - horizon).abs() > 1e-9 * horizon)
    {
        return Err(Error::domain(format!(
            "horizon {} differs from {horizon}",
            bad.horizon()
        )));
    }

    let ref_paths: Vec<&CadlagPath> = reference.curves.iter().map(|(_, c)| c).collect();
    let mut all: Vec<&CadlagPath> = ref_paths.clone();
    all.extend(runs.iter().map(|r| &r.curve));
    let times = comparison_grid(
        &all,
        options.comparison_points,
        2.0 * options.bandwidth,
        options.jump_threshold,
    )?;
    let (ref_mean, _) = ensemble_mean(&ref_paths)?;
    let ref_samples: Vec<Vec<f64>> = ref_paths.iter().map(|c| c.sample(&times)).collect::<Result<_>>()?;
    let ref_columns = transpose(&ref_samples, times.len());

    let mut labels: Vec<&str> = Vec::new();
    for r in runs {
        if !labels.contains(&r.label.as_str()) {
            labels.push(&r.label);
        }
    }
    let groups = labels
        .par_iter()
        .map(|&label| {
            let members: Vec<&RunCurve> = runs.iter().filter(|r| r.label == label).collect();
            group_report(label, &members, reference, &ref_mean, &ref_columns, &times, options)
        })
        .collect::<Result<Vec<_>>>()?;

    let mut reference_jumps = Vec::new();
    for (seed, c) in &reference.curves {
        reference_jumps.extend(jump_summaries(*seed, c, options.jump_threshold)?);
    }
    let post_jump_informational = !reference_jumps.is_empty() || groups.iter().any(|g| !g.jumps.is_empty());
    Ok(ConvergenceReport {
        reference: reference.label.clone(),
        options: *options,
        comparison_times: times,
        reference_jumps,
        groups,
        post_jump_informational,
    })
}

fn transpose(rows: &[Vec<f64>], width: usize) -> Vec<Vec<f64>> {
    (0..width).map(|i| rows.iter().map(|r| r[i]).collect()).collect()
}

fn group_report(
    label: &str,
    members: &[&RunCurve],
    reference: &Reference,
    ref_mean: &CadlagPath,
    ref_columns: &[Vec<f64>],
    times: &[f64],
    options: &ReportOptions,
) -> Result<GroupReport> {
    let paired_ref = |seed: u64| reference.curves.iter().find(|(s, _)| *s == seed).map(|(_, c)| c);
    let paired = members.iter().all(|m| paired_ref(m.seed).is_some());

    let mut sup = Vec::new();
    let mut mean_abs = Vec::new();
    let mut m1 = Vec::new();
    let mut diffs: Vec<Vec<f64>> = Vec::new();
    let mut samples: Vec<Vec<f64>> = Vec::new();
    let mut jumps = Vec::new();
    for m in members {
        let r = if paired {
            paired_ref(m.seed).expect("checked above")
        } else {
            ref_mean
        };
        let run_s = m.curve.sample(times)?;
        let ref_s = r.sample(times)?;
        let d: Vec<f64> = run_s.iter().zip(&ref_s).map(|(a, b)| a - b).collect();
        sup.push(d.iter().fold(0.0f64, |acc, x| acc.max(x.abs())));
        mean_abs.push(d.iter().map(|x| x.abs()).sum::<f64>() / d.len().max(1) as f64);
        m1.push(m1_distance(&m.curve, r, options.m1_resolution)?);
        diffs.push(d);
        samples.push(run_s);
        jumps.extend(jump_summaries(m.seed, &m.curve, options.jump_threshold)?);
    }

    let pointwise: Vec<PointGap> = if paired {
        transpose(&diffs, times.len())
            .into_iter()
            .zip(times)
            .map(|(col, &t)| {
                let (gap, se) = mean_and_se(col.into_iter());
                PointGap { t, gap, se }
            })
            .collect()
    } else {
        transpose(&samples, times.len())
            .into_iter()
            .zip(ref_columns)
            .zip(times)
            .map(|((col, ref_col), &t)| {
                let (a, sa) = mean_and_se(col.into_iter());
                let (b, sb) = mean_and_se(ref_col.iter().copied());
                PointGap {
                    t,
                    gap: a - b,
                    se: sa.hypot(sb),
                }
            })
            .collect()
    };
    let z = |p: &PointGap| {
        if p.gap == 0.0 {
            0.0
        } else if p.se == 0.0 {
            f64::INFINITY
        } else {
            p.gap.abs() / p.se
        }
    };
    let max_z = pointwise.iter().map(z).fold(0.0, f64::max);
    let worst = pointwise.iter().max_by(|a, b| a.gap.abs().total_cmp(&b.gap.abs()));
    let mean_curve_sup_gap = worst.map_or(Estimate { mean: 0.0, se: 0.0 }, |p| Estimate {
        mean: p.gap.abs(),
        se: p.se,
    });
    let curves: Vec<&CadlagPath> = members.iter().map(|m| &m.curve).collect();
    let (run_mean, _) = ensemble_mean(&curves)?;
    let mean_curve_m1_gap = if paired {
        let refs: Vec<&CadlagPath> = members.iter().map(|m| paired_ref(m.seed).expect("paired")).collect();
        m1_distance(&run_mean, &ensemble_mean(&refs)?.0, options.m1_resolution)?
    } else {
        m1_distance(&run_mean, ref_mean, options.m1_resolution)?
    };

    Ok(GroupReport {
        label: label.to_string(),
        param: members[0].param,
        seeds: members.iter().map(|m| m.seed).collect(),
        paired,
        sup_gap: Estimate::of(sup.into_iter()),
        mean_abs_gap: Estimate::of(mean_abs.into_iter()),
        m1_gap: Estimate::of(m1.into_iter()),
        mean_curve_sup_gap,
        mean_curve_m1_gap,
        max_z,
        pointwise,
        jumps,
    })
}

/// One line of `events.jsonl`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventLine {
    pub t: f64,
    pub gamma_size: usize,
    pub jump_fraction: f64,
    pub rounds: Vec<usize>,
    pub pre_hist: Option<PreStateHistogram>,
    pub criterion_pass: Option<bool>,
}

/// Builds the event-log lines of a particle run, verifying every event
/// that kept its pre-cascade potentials.
pub fn event_lines(out: &SimOutput) -> Result<Vec<EventLine>> {
    out.events
        .iter()
        .map(|ev| {
            let hist = ev.pre_samples.clone().map(PreStateHistogram::from_samples);
            let criterion_pass = match &hist {
                Some(h) => {
                    let event = JumpEvent {
                        time: ev.t,
                        size: ev.jump_fraction,
                        pre_state_hist: Some(h.clone()),
                        criterion_pass: None,
                    };
                    Some(verify_physical_jump(&event, out.alpha)?.passed())
                }
                None => None,
            };
            Ok(EventLine {
                t: ev.t,
                gamma_size: ev.gamma_size,
                jump_fraction: ev.jump_fraction,
                rounds: ev.round_sizes.clone(),
                pre_hist: hist,
                criterion_pass,
            })
        })
        .collect()
}

pub fn write_event_lines(lines: &[EventLine], mut out: impl Write) -> Result<()> {
    for line in lines {
        serde_json::to_writer(&mut out, line).map_err(|e| Error::Io(e.into()))?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

/// Writes `t,size,criterion_pass`; unverified events leave the last field
/// empty.
pub fn write_jumps_csv(jumps: &[JumpEvent], mut out: impl Write) -> Result<()> {
    writeln!(out, "t,size,criterion_pass")?;
    for j in jumps {
        let pass = j.criterion_pass.map_or(String::new(), |p| p.to_string());
        writeln!(out, "{:?},{:?},{pass}", j.time, j.size)?;
    }
    Ok(())
}
