use mfif::analysis::{detect_particle_jumps, verify_physical_jump};
use mfif::cascade::{resolve_cascade, SpikeState};
use mfif::particle_sim::{run_particle_system, DriftSpec, InitKind, InitialLaw, SimConfig, SimOutput};
use mfif::paths::counting_map;
use mfif::Error;

fn deterministic(points: Vec<f64>, epsilon0: f64, alpha: f64, drift: DriftSpec, horizon: f64, dt: f64) -> SimConfig {
    let n = points.len();
    let init = InitialLaw::new(InitKind::Points { values: points }, epsilon0).unwrap();
    let mut cfg = SimConfig::new(n, horizon, dt, alpha, drift, init);
    cfg.noise_scale = 0.0;
    cfg.record_trajectories = true;
    cfg.capture_fraction = 0.0;
    cfg
}

fn noisy(n: usize, seed: u64) -> SimConfig {
    let init = InitialLaw::new(InitKind::Uniform { lo: 0.2, hi: 0.9 }, 0.1).unwrap();
    let mut cfg = SimConfig::new(n, 1.0, 1e-3, 0.5, DriftSpec::Affine { a: -0.5, b: 1.0 }, init);
    cfg.seed = seed;
    cfg.record_trajectories = true;
    cfg
}

fn potentials_at(out: &SimOutput, t: f64) -> Vec<f64> {
    out.z_paths
        .iter()
        .zip(&out.m_paths)
        .map(|(z, m)| z.evaluate(t).unwrap() - m.evaluate(t).unwrap())
        .collect()
}

#[test]
fn two_particles_unit_drift_match_hand_integration() {
    let dt = 1e-4;
    let out = run_particle_system(&deterministic(
        vec![0.0, 0.5],
        0.5,
        0.5,
        DriftSpec::Constant { c: 1.0 },
        0.8,
        dt,
    ))
    .unwrap();
    assert_eq!(out.events.len(), 2);
    let (first, second) = (&out.events[0], &out.events[1]);
    assert!((first.t - 0.5).abs() <= dt + 1e-12, "{}", first.t);
    assert!((second.t - 0.75).abs() <= dt + 1e-12, "{}", second.t);
    assert_eq!((first.gamma_size, second.gamma_size), (1, 1));

    // closed form: X⁰ = t until 0.5, then t + 0.25; X¹ = t − 0.5 after 0.5,
    // plus the kick of 0.25 when particle 0 fires at 0.75
    let x = potentials_at(&out, first.t);
    assert!((x[0] - 0.75).abs() <= 2.0 * dt, "{x:?}");
    assert!((x[1] - 0.25).abs() <= 2.0 * dt, "{x:?}");
    let x = potentials_at(&out, second.t);
    assert!((x[0] - 0.25).abs() <= 2.0 * dt, "{x:?}");
    assert!((x[1] - 0.75).abs() <= 2.0 * dt, "{x:?}");

    assert_eq!(out.ebar.evaluate(0.49).unwrap(), 0.0);
    assert_eq!(out.ebar.evaluate(0.6).unwrap(), 0.5);
    assert_eq!(out.ebar.evaluate(0.8).unwrap(), 1.0);
}

#[test]
fn single_particle_without_drift_never_fires() {
    let out = run_particle_system(&deterministic(vec![0.5], 0.5, 0.5, DriftSpec::Zero, 1.0, 0.01)).unwrap();
    assert!(out.events.is_empty());
    assert!(out.ebar.values().iter().all(|&v| v == 0.0));
    assert!(out.z_paths[0].values().iter().all(|&v| v == 0.5));
}

#[test]
fn near_threshold_particle_fires_alone() {
    let dt = 1e-5;
    let cfg = deterministic(
        vec![0.999, 0.549, 0.519],
        0.001,
        0.9,
        DriftSpec::Constant { c: 1.0 },
        0.01,
        dt,
    );
    let out = run_particle_system(&cfg).unwrap();
    let first = &out.events[0];
    assert_eq!(first.gamma_size, 1);
    assert_eq!(first.round_sizes, vec![1]);
    let pre = first.pre_samples.as_ref().unwrap();
    let resolved = resolve_cascade(&SpikeState::new(pre.clone(), 0.9).unwrap());
    assert_eq!(resolved.gamma, vec![0]);
    assert_eq!(out.m_paths[0].evaluate(0.01).unwrap(), 1.0);
}

#[test]
fn same_seed_is_bit_identical_across_thread_counts() {
    let cfg = noisy(2000, 42);
    let run_with = |threads: usize| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| run_particle_system(&cfg).unwrap())
    };
    let a = run_with(1);
    let b = run_with(4);
    assert_eq!(a.ebar, b.ebar);
    assert_eq!(a.events, b.events);
    assert_eq!(a.z_paths, b.z_paths);
    assert_eq!(a.moments, b.moments);
    let other = run_particle_system(&noisy(2000, 43)).unwrap();
    assert_ne!(a.ebar, other.ebar);
}

#[test]
fn counting_paths_agree_with_counting_map_on_the_grid() {
    let out = run_particle_system(&noisy(1000, 7)).unwrap();
    assert_eq!(out.z_paths.len(), 100);
    for (z, m) in out.z_paths.iter().zip(&out.m_paths) {
        let counted = counting_map(z);
        for &t in m.times() {
            assert_eq!(counted.evaluate(t).unwrap(), m.evaluate(t).unwrap(), "t = {t}");
        }
    }
}

#[test]
fn cascade_moves_every_particle_by_the_same_kick() {
    let out = run_particle_system(&noisy(500, 3)).unwrap();
    assert!(!out.events.is_empty());
    for ev in &out.events {
        let de = out.ebar.evaluate(ev.t).unwrap() - out.ebar.evaluate_left(ev.t).unwrap();
        for z in &out.z_paths {
            let i = z.times().iter().position(|&t| t == ev.t).unwrap();
            assert!(z.is_jump(i));
            let dz = z.values()[i] - z.left_values()[i];
            assert!((dz - out.alpha * de).abs() <= 1e-12, "{dz} vs {}", out.alpha * de);
        }
    }
}

#[test]
fn ebar_is_a_non_decreasing_step_path() {
    let out = run_particle_system(&noisy(300, 9)).unwrap();
    assert!(out.ebar.is_non_decreasing());
    let total: usize = out.events.iter().map(|e| e.gamma_size).sum();
    assert_eq!(*out.ebar.values().last().unwrap(), total as f64 / 300.0);
    assert!(out.events.iter().all(|e| e.jump_fraction <= 1.0));
}

#[test]
fn synchronized_start_produces_a_verified_macroscopic_jump() {
    let init = InitialLaw::new(
        InitKind::TruncatedGaussian {
            mean: 0.9,
            sd: 0.05,
            hi: 0.98,
        },
        0.02,
    )
    .unwrap();
    let mut cfg = SimConfig::new(2000, 0.3, 1e-3, 0.9, DriftSpec::Zero, init);
    cfg.seed = 1;
    let out = run_particle_system(&cfg).unwrap();
    let jumps = detect_particle_jumps(&out, 0.05).unwrap();
    assert!(!jumps.is_empty());
    for j in &jumps {
        assert!(verify_physical_jump(j, 0.9).unwrap().passed(), "{j:?}");
    }
}

#[test]
fn moments_are_stable_in_n() {
    let stats = |n| {
        let mut cfg = noisy(n, 5);
        cfg.record_trajectories = false;
        run_particle_system(&cfg).unwrap().moments
    };
    let small = stats(1000);
    let large = stats(10_000);
    let close = |a: f64, sa: f64, b: f64, sb: f64| (a - b).abs() <= 4.0 * sa.hypot(sb);
    assert!(close(
        small.sup_abs_z_mean,
        small.sup_abs_z_se,
        large.sup_abs_z_mean,
        large.sup_abs_z_se
    ));
    assert!(close(small.m_sq_mean, small.m_sq_se, large.m_sq_mean, large.m_sq_se));
}

#[test]
fn invalid_configs_are_rejected() {
    let mut cfg = noisy(10, 0);
    cfg.dt = 0.0;
    assert!(matches!(run_particle_system(&cfg), Err(Error::Config { .. })));
    let mut cfg = noisy(10, 0);
    cfg.n = 0;
    assert!(matches!(run_particle_system(&cfg), Err(Error::Config { .. })));
    let mut cfg = noisy(10, 0);
    cfg.alpha = 1.0;
    assert!(matches!(run_particle_system(&cfg), Err(Error::Config { .. })));
}

#[test]
fn exploding_drift_is_a_runtime_error() {
    let init = InitialLaw::new(InitKind::PointMass { x0: -1.0 }, 0.5).unwrap();
    let mut cfg = SimConfig::new(4, 1.0, 0.5, 0.5, DriftSpec::Affine { a: -1e308, b: 0.0 }, init);
    cfg.noise_scale = 0.0;
    match run_particle_system(&cfg) {
        Err(Error::Runtime { step, .. }) => assert!(step >= 1),
        other => panic!("expected runtime error, got {other:?}"),
    }
}

#[test]
fn simulated_paths_survive_a_file_round_trip() {
    use mfif::paths::csv::{read_path_file, write_path_file};
    let out = run_particle_system(&noisy(300, 5)).unwrap();
    let dir = tempfile::tempdir().unwrap();
    for (name, path) in [
        ("ebar.csv", &out.ebar),
        ("z.csv", &out.z_paths[0]),
        ("m.csv", &out.m_paths[0]),
    ] {
        let file = dir.path().join(name);
        write_path_file(path, &file).unwrap();
        let back = read_path_file(&file).unwrap();
        assert_eq!(&back, path, "{name}");
    }
}
