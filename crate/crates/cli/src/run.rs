//! Runs the requested experiment and writes its artifacts.
//!
//! A single seed writes straight into `--out-dir`; several seeds get one
//! `seed_<s>/` subdirectory each. Every file is a pure function of the
//! config and seed, so reruns overwrite byte-identically.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use mfif::analysis::{
    convergence_report, detect_jumps, detect_particle_jumps, event_lines, verify_physical_jump, write_event_lines,
    write_jumps_csv, ConvergenceReport, JumpEvent, Reference, ReportOptions, RunCurve,
};
use mfif::cascade::{cascade_size_inf, resolve_cascade, SpikeState};
use mfif::delayed_sim::{run_delayed, DelayedConfig, DelayedOutput};
use mfif::particle_sim::{run_particle_system, MomentStats, SimConfig, SimOutput};
use mfif::paths::csv::{read_path_file, write_path_file};
use mfif::paths::CadlagPath;
use mfif::rng::Substream;
use rayon::prelude::*;
use serde::Serialize;

use crate::config::FileConfig;
use crate::{CliError, Common};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Particles,
    Delayed,
    Sweep,
    Compare,
    CascadeCheck,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Axis {
    N,
    Delta,
}

pub fn run_experiment(mode: Mode, file: &FileConfig, common: &Common) -> Result<(), CliError> {
    let seeds = file.seeds(&common.seed_list());
    if seeds.is_empty() {
        return Err(CliError::config("--seeds", "no seeds given"));
    }
    let mut sorted = seeds.clone();
    sorted.sort_unstable();
    if sorted.windows(2).any(|w| w[0] == w[1]) {
        return Err(CliError::config("--seeds", "seeds must be distinct"));
    }
    if common.dry_run {
        return dry_run(mode, file, &seeds);
    }
    if mode == Mode::CascadeCheck {
        return cascade_check(file, common.out_dir.as_deref());
    }
    let out_dir = common
        .out_dir
        .as_deref()
        .ok_or_else(|| CliError::config("--out-dir", "required for this subcommand"))?;
    fs::create_dir_all(out_dir)?;
    match mode {
        Mode::Particles => simulate_particles(file, &seeds, out_dir),
        Mode::Delayed => simulate_delayed(file, &seeds, out_dir),
        Mode::Sweep => sweep(file, &seeds, out_dir),
        Mode::Compare => compare(file, out_dir),
        Mode::CascadeCheck => unreachable!("handled above"),
    }
}

fn options(file: &FileConfig) -> ReportOptions {
    let mut o = ReportOptions::default();
    if let Some(v) = file.jump_threshold {
        o.jump_threshold = v;
    }
    if let Some(v) = file.bandwidth {
        o.bandwidth = v;
    }
    if let Some(v) = file.m1_resolution {
        o.m1_resolution = v;
    }
    if let Some(v) = file.comparison_points {
        o.comparison_points = v;
    }
    o
}

fn check_options(o: &ReportOptions) -> Result<(), CliError> {
    if !(o.jump_threshold > 0.0 && o.jump_threshold <= 1.0) {
        return Err(CliError::config("jump_threshold", "must lie in (0, 1]"));
    }
    if !(o.bandwidth > 0.0 && o.bandwidth.is_finite()) {
        return Err(CliError::config("bandwidth", "must be positive"));
    }
    if o.m1_resolution < 2 {
        return Err(CliError::config("m1_resolution", "must be at least 2"));
    }
    if o.comparison_points == 0 {
        return Err(CliError::config("comparison_points", "must be positive"));
    }
    Ok(())
}

fn seed_dir(out_dir: &Path, seed: u64, multi: bool) -> Result<PathBuf, CliError> {
    let dir = if multi {
        out_dir.join(format!("seed_{seed}"))
    } else {
        out_dir.to_path_buf()
    };
    fs::create_dir_all(&dir)?;
    Ok(dir)
}

fn create(path: &Path) -> Result<BufWriter<File>, CliError> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| CliError::Runtime(format!("cannot create {}: {e}", path.display())))
}

fn write_json(value: &impl Serialize, path: &Path) -> Result<(), CliError> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, value).map_err(|e| CliError::Runtime(e.to_string()))?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

fn write_jumps(jumps: &[JumpEvent], path: &Path) -> Result<(), CliError> {
    let mut w = create(path)?;
    write_jumps_csv(jumps, &mut w)?;
    w.flush()?;
    Ok(())
}

/// Potential path `X = Z − M` of a recorded particle.
fn potential_path(z: &CadlagPath, m: &CadlagPath) -> Result<CadlagPath, CliError> {
    let values = z.values().iter().zip(m.values()).map(|(a, b)| a - b).collect();
    let left = z
        .left_values()
        .iter()
        .zip(m.left_values())
        .map(|(a, b)| a - b)
        .collect();
    let jump = (0..z.len()).map(|i| z.is_jump(i) || m.is_jump(i)).collect();
    Ok(CadlagPath::from_parts(z.times().to_vec(), values, left, jump)?)
}

/// Macroscopic jumps of a particle run, each checked against the physical
/// jump condition when its pre-cascade state was kept.
fn verified_jumps(out: &SimOutput, threshold: f64) -> Result<Vec<JumpEvent>, CliError> {
    let mut jumps = detect_particle_jumps(out, threshold).map_err(|e| CliError::Runtime(e.to_string()))?;
    for j in &mut jumps {
        if j.pre_state_hist.is_some() {
            j.criterion_pass = Some(verify_physical_jump(j, out.alpha)?.passed());
        }
    }
    Ok(jumps)
}

#[derive(Serialize)]
struct ParticleReport<'a> {
    config: &'a SimConfig,
    steps: usize,
    cascades: usize,
    final_ebar: f64,
    moments: MomentStats,
    jumps: &'a [JumpEvent],
}

fn write_particle_run(cfg: &SimConfig, out: &SimOutput, threshold: f64, dir: &Path) -> Result<(), CliError> {
    write_path_file(&out.ebar, &dir.join("ebar.csv"))?;
    let lines = event_lines(out)?;
    let mut w = create(&dir.join("events.jsonl"))?;
    write_event_lines(&lines, &mut w)?;
    w.flush()?;
    for (i, (z, m)) in out.z_paths.iter().zip(&out.m_paths).enumerate() {
        write_path_file(&potential_path(z, m)?, &dir.join(format!("particle_{i}.csv")))?;
    }
    let jumps = verified_jumps(out, threshold)?;
    write_jumps(&jumps, &dir.join("jumps.csv"))?;
    let report = ParticleReport {
        config: cfg,
        steps: cfg.steps(),
        cascades: out.events.len(),
        final_ebar: *out.ebar.values().last().expect("paths are non-empty"),
        moments: out.moments,
        jumps: &jumps,
    };
    write_json(&report, &dir.join("report.json"))
}

fn simulate_particles(file: &FileConfig, seeds: &[u64], out_dir: &Path) -> Result<(), CliError> {
    let opts = options(file);
    check_options(&opts)?;
    let configs: Vec<SimConfig> = seeds.iter().map(|&s| file.sim_config(s)).collect::<Result<_, _>>()?;
    for cfg in &configs {
        let out = run_particle_system(cfg)?;
        let dir = seed_dir(out_dir, cfg.seed, seeds.len() > 1)?;
        write_particle_run(cfg, &out, opts.jump_threshold, &dir)?;
        println!(
            "seed {}: {} cascades, ebar(T) = {}, largest cascade fraction {}",
            cfg.seed,
            out.events.len(),
            out.ebar.values().last().expect("paths are non-empty"),
            out.max_cascade_fraction()
        );
    }
    Ok(())
}

#[derive(Serialize)]
struct DelayedReport<'a> {
    config: &'a DelayedConfig,
    steps: usize,
    windows: usize,
    final_mean_m: f64,
    jumps: &'a [JumpEvent],
}

fn write_delayed_run(cfg: &DelayedConfig, out: &DelayedOutput, threshold: f64, dir: &Path) -> Result<(), CliError> {
    write_path_file(&out.e_delta, &dir.join("e_delta.csv"))?;
    write_path_file(&out.mean_m, &dir.join("mean_m.csv"))?;
    for (i, m) in out.sample_m_paths.iter().enumerate() {
        write_path_file(m, &dir.join(format!("replica_{i}.csv")))?;
    }
    // replicas do not keep pre-jump states, so jumps stay unverified
    let jumps = detect_jumps(&out.mean_m, threshold).map_err(|e| CliError::Runtime(e.to_string()))?;
    write_jumps(&jumps, &dir.join("jumps.csv"))?;
    let report = DelayedReport {
        config: cfg,
        steps: cfg.steps(),
        windows: cfg.windows(),
        final_mean_m: *out.mean_m.values().last().expect("paths are non-empty"),
        jumps: &jumps,
    };
    write_json(&report, &dir.join("report.json"))
}

fn simulate_delayed(file: &FileConfig, seeds: &[u64], out_dir: &Path) -> Result<(), CliError> {
    let opts = options(file);
    check_options(&opts)?;
    let configs: Vec<DelayedConfig> = seeds
        .iter()
        .map(|&s| file.delayed_config(s))
        .collect::<Result<_, _>>()?;
    for cfg in &configs {
        let out = run_delayed(cfg)?;
        let dir = seed_dir(out_dir, cfg.seed, seeds.len() > 1)?;
        write_delayed_run(cfg, &out, opts.jump_threshold, &dir)?;
        println!(
            "seed {}: mean M(T) = {}",
            cfg.seed,
            out.mean_m.values().last().expect("paths are non-empty")
        );
    }
    Ok(())
}

fn sweep_axis(file: &FileConfig) -> Result<(Axis, Vec<f64>), CliError> {
    let axis = match file.sweep_axis.as_deref() {
        Some("n") => Axis::N,
        Some("delta") => Axis::Delta,
        Some(other) => {
            return Err(CliError::config(
                "sweep_axis",
                format!("expected `n` or `delta`, got `{other}`"),
            ))
        }
        None => return Err(CliError::config("sweep_axis", "missing")),
    };
    let values = file
        .sweep_values
        .clone()
        .ok_or_else(|| CliError::config("sweep_values", "missing"))?;
    if values.is_empty() {
        return Err(CliError::config("sweep_values", "sweep list is empty"));
    }
    if values.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
        return Err(CliError::config("sweep_values", "values must be positive"));
    }
    if axis == Axis::N && values.iter().any(|v| v.fract() != 0.0) {
        return Err(CliError::config("sweep_values", "particle counts must be integers"));
    }
    let mut sorted = values.clone();
    sorted.sort_by(f64::total_cmp);
    if sorted.windows(2).any(|w| w[0] == w[1]) {
        return Err(CliError::config("sweep_values", "values must be distinct"));
    }
    Ok((axis, values))
}

enum Entry {
    Particles(SimConfig),
    Delayed(DelayedConfig),
}

impl Entry {
    fn seed(&self) -> u64 {
        match self {
            Entry::Particles(c) => c.seed,
            Entry::Delayed(c) => c.seed,
        }
    }
}

/// Sweep runs with their group label and parameter.
type Labeled = Vec<(String, f64, Entry)>;

/// Sweep runs ordered so that groups approach the reference, plus the
/// reference runs.
fn sweep_entries(file: &FileConfig, seeds: &[u64]) -> Result<(Axis, Labeled, Vec<Entry>), CliError> {
    let (axis, mut values) = sweep_axis(file)?;
    let mut entries = Vec::new();
    let mut reference = Vec::new();
    match axis {
        Axis::N => {
            if values.len() < 2 {
                return Err(CliError::config("sweep_values", "an N sweep needs at least two values"));
            }
            values.sort_by(f64::total_cmp);
            let largest = values.pop().expect("at least two values");
            for &s in seeds {
                let mut cfg = FileConfig {
                    n: Some(largest as usize),
                    ..file.clone()
                }
                .sim_config(s)?;
                cfg.record_trajectories = false;
                reference.push(Entry::Particles(cfg));
            }
            for &v in &values {
                for &s in seeds {
                    let mut cfg = FileConfig {
                        n: Some(v as usize),
                        ..file.clone()
                    }
                    .sim_config(s)?;
                    cfg.record_trajectories = false;
                    entries.push((format!("n_{v}"), v, Entry::Particles(cfg)));
                }
            }
        }
        Axis::Delta => {
            values.sort_by(|a, b| b.total_cmp(a));
            for &s in seeds {
                let mut cfg = file.sim_config(s)?;
                cfg.record_trajectories = false;
                reference.push(Entry::Particles(cfg));
            }
            for &v in &values {
                for &s in seeds {
                    let mut cfg = FileConfig {
                        delta: Some(v),
                        ..file.clone()
                    }
                    .delayed_config(s)?;
                    cfg.record_replicas = 0;
                    entries.push((format!("delta_{v}"), v, Entry::Delayed(cfg)));
                }
            }
        }
    }
    if entries.len() < 2 {
        return Err(CliError::config(
            "sweep_values",
            "a sweep needs at least two runs besides the reference",
        ));
    }
    Ok((axis, entries, reference))
}

fn reference_label(axis: Axis, reference: &[Entry]) -> String {
    match (axis, &reference[0]) {
        (Axis::N, Entry::Particles(c)) => format!("n_{}", c.n),
        _ => "reference".to_string(),
    }
}

/// Runs one entry and writes its curve; returns the firing curve.
fn run_entry(entry: &Entry, dir: &Path, threshold: f64) -> Result<CadlagPath, CliError> {
    fs::create_dir_all(dir)?;
    match entry {
        Entry::Particles(cfg) => {
            let out = run_particle_system(cfg)?;
            write_particle_run(cfg, &out, threshold, dir)?;
            Ok(out.ebar)
        }
        Entry::Delayed(cfg) => {
            let out = run_delayed(cfg)?;
            write_delayed_run(cfg, &out, threshold, dir)?;
            Ok(out.e_delta)
        }
    }
}

fn print_report(report: &ConvergenceReport) {
    for g in &report.groups {
        println!(
            "{}: sup gap {:.5} ± {:.5}, M1 gap {:.5} ± {:.5}, max z {:.2}, paired {}",
            g.label, g.sup_gap.mean, g.sup_gap.se, g.m1_gap.mean, g.m1_gap.se, g.max_z, g.paired
        );
    }
    if report.post_jump_informational {
        println!("macroscopic jumps present: post-jump gaps are informational");
    }
}

fn sweep(file: &FileConfig, seeds: &[u64], out_dir: &Path) -> Result<(), CliError> {
    let opts = options(file);
    check_options(&opts)?;
    let (axis, entries, reference) = sweep_entries(file, seeds)?;
    let ref_label = reference_label(axis, &reference);

    let ref_curves: Vec<(u64, CadlagPath)> = reference
        .par_iter()
        .map(|e| {
            let dir = out_dir.join(&ref_label).join(format!("seed_{}", e.seed()));
            run_entry(e, &dir, opts.jump_threshold).map(|c| (e.seed(), c))
        })
        .collect::<Result<_, _>>()?;
    let runs: Vec<RunCurve> = entries
        .par_iter()
        .map(|(label, param, e)| {
            let dir = out_dir.join(label).join(format!("seed_{}", e.seed()));
            run_entry(e, &dir, opts.jump_threshold).map(|curve| RunCurve {
                label: label.clone(),
                param: *param,
                seed: e.seed(),
                curve,
            })
        })
        .collect::<Result<_, _>>()?;

    let reference = Reference {
        label: ref_label,
        curves: ref_curves,
    };
    let report = convergence_report(&runs, &reference, &opts).map_err(|e| CliError::Runtime(e.to_string()))?;
    write_json(&report, &out_dir.join("report.json"))?;
    print_report(&report);
    Ok(())
}

/// Curves are paired with reference files by position within their label.
fn compare(file: &FileConfig, out_dir: &Path) -> Result<(), CliError> {
    let opts = options(file);
    check_options(&opts)?;
    let files = file
        .curve_files
        .as_ref()
        .ok_or_else(|| CliError::config("curve_files", "missing"))?;
    let ref_files = file
        .reference_files
        .as_ref()
        .ok_or_else(|| CliError::config("reference_files", "missing"))?;
    if files.is_empty() || ref_files.is_empty() {
        return Err(CliError::config(
            "curve_files",
            "need at least one curve and one reference",
        ));
    }
    let labels = match &file.curve_labels {
        Some(l) if l.len() == files.len() => l.clone(),
        Some(l) => {
            return Err(CliError::config(
                "curve_labels",
                format!("{} labels for {} files", l.len(), files.len()),
            ))
        }
        None => vec!["curves".to_string(); files.len()],
    };
    let read = |p: &PathBuf| read_path_file(p).map_err(|e| CliError::Config(format!("{}: {e}", p.display())));

    let mut groups: Vec<&str> = Vec::new();
    let mut runs = Vec::with_capacity(files.len());
    for (path, label) in files.iter().zip(&labels) {
        let position = labels_seen(&runs, label);
        if !groups.contains(&label.as_str()) {
            groups.push(label);
        }
        runs.push(RunCurve {
            label: label.clone(),
            param: groups.iter().position(|g| g == label).expect("just pushed") as f64,
            seed: position,
            curve: read(path)?,
        });
    }
    let reference = Reference {
        label: "reference".into(),
        curves: ref_files
            .iter()
            .enumerate()
            .map(|(i, p)| read(p).map(|c| (i as u64, c)))
            .collect::<Result<_, _>>()?,
    };
    let report = convergence_report(&runs, &reference, &opts)?;
    write_json(&report, &out_dir.join("report.json"))?;
    print_report(&report);
    Ok(())
}

fn labels_seen(runs: &[RunCurve], label: &str) -> u64 {
    runs.iter().filter(|r| r.label == label).count() as u64
}

fn read_state_file(path: &Path) -> Result<Vec<f64>, CliError> {
    let text =
        fs::read_to_string(path).map_err(|e| CliError::config("state_file", format!("{}: {e}", path.display())))?;
    text.split(|c: char| c == ',' || c.is_whitespace())
        .filter(|s| !s.is_empty())
        .map(|s| {
            s.parse::<f64>()
                .map_err(|e| CliError::config("state_file", format!("`{s}`: {e}")))
        })
        .collect()
}

#[derive(Serialize)]
struct CascadeCheckReport {
    alpha: f64,
    gamma: Vec<usize>,
    rounds: Vec<Vec<usize>>,
    cascade_size_inf: usize,
    jump_fraction: f64,
    post_potentials: Vec<f64>,
}

fn cascade_check(file: &FileConfig, out_dir: Option<&Path>) -> Result<(), CliError> {
    let alpha = file.alpha.ok_or_else(|| CliError::config("alpha", "missing"))?;
    let potentials = match (&file.potentials, &file.state_file) {
        (Some(p), None) => p.clone(),
        (None, Some(f)) => read_state_file(f)?,
        (Some(_), Some(_)) => return Err(CliError::config("potentials", "give either potentials or state_file")),
        (None, None) => return Err(CliError::config("potentials", "missing (or set state_file)")),
    };
    let state = SpikeState::new(potentials, alpha)?;
    let result = resolve_cascade(&state);
    let report = CascadeCheckReport {
        alpha,
        cascade_size_inf: cascade_size_inf(&state),
        gamma: result.gamma,
        rounds: result.rounds,
        jump_fraction: result.jump_fraction,
        post_potentials: result.post_potentials,
    };
    println!("gamma: {:?}", report.gamma);
    println!("rounds: {:?}", report.rounds);
    println!("cascade_size_inf: {}", report.cascade_size_inf);
    println!("jump_fraction: {:?}", report.jump_fraction);
    if let Some(dir) = out_dir {
        fs::create_dir_all(dir)?;
        write_json(&report, &dir.join("report.json"))?;
    }
    Ok(())
}

const PATH_SAMPLE_BYTES: usize = 3 * 8 + 1;

fn particle_memory(cfg: &SimConfig) -> usize {
    let per_particle = std::mem::size_of::<Substream>() + 8 + 4 + 8 + 8;
    let recorded = if cfg.record_trajectories {
        cfg.record_cap.min(cfg.n)
    } else {
        0
    };
    cfg.n * per_particle + (cfg.steps() + 1) * PATH_SAMPLE_BYTES * (1 + 2 * recorded)
}

fn delayed_memory(cfg: &DelayedConfig) -> usize {
    let per_replica = std::mem::size_of::<Substream>() + 8 + 4;
    cfg.replicas * per_replica + (cfg.steps() + 1) * (PATH_SAMPLE_BYTES * (2 + cfg.record_replicas) + 8)
}

#[derive(Serialize)]
#[serde(untagged)]
enum Resolved {
    Particles(SimConfig),
    Delayed(DelayedConfig),
}

#[derive(Serialize)]
struct DryEntry {
    label: String,
    steps: usize,
    memory_estimate_bytes: usize,
    config: Resolved,
}

impl DryEntry {
    fn of(label: String, e: Entry) -> Self {
        match e {
            Entry::Particles(c) => DryEntry {
                label,
                steps: c.steps(),
                memory_estimate_bytes: particle_memory(&c),
                config: Resolved::Particles(c),
            },
            Entry::Delayed(c) => DryEntry {
                label,
                steps: c.steps(),
                memory_estimate_bytes: delayed_memory(&c),
                config: Resolved::Delayed(c),
            },
        }
    }
}

fn dry_run(mode: Mode, file: &FileConfig, seeds: &[u64]) -> Result<(), CliError> {
    let entries: Vec<DryEntry> = match mode {
        Mode::Particles => seeds
            .iter()
            .map(|&s| Ok(DryEntry::of(format!("seed_{s}"), Entry::Particles(file.sim_config(s)?))))
            .collect::<Result<_, CliError>>()?,
        Mode::Delayed => seeds
            .iter()
            .map(|&s| {
                Ok(DryEntry::of(
                    format!("seed_{s}"),
                    Entry::Delayed(file.delayed_config(s)?),
                ))
            })
            .collect::<Result<_, CliError>>()?,
        Mode::Sweep => {
            let (axis, entries, reference) = sweep_entries(file, seeds)?;
            let ref_label = reference_label(axis, &reference);
            reference
                .into_iter()
                .map(|e| DryEntry::of(format!("{ref_label}/seed_{}", e.seed()), e))
                .chain(
                    entries
                        .into_iter()
                        .map(|(label, _, e)| DryEntry::of(format!("{label}/seed_{}", e.seed()), e)),
                )
                .collect()
        }
        Mode::Compare | Mode::CascadeCheck => Vec::new(),
    };
    #[derive(Serialize)]
    struct Dry<'a> {
        file: &'a FileConfig,
        seeds: &'a [u64],
        report_options: ReportOptions,
        runs: Vec<DryEntry>,
    }
    let dry = Dry {
        file,
        seeds,
        report_options: options(file),
        runs: entries,
    };
    println!(
        "{}",
        serde_json::to_string_pretty(&dry).map_err(|e| CliError::Runtime(e.to_string()))?
    );
    Ok(())
}
