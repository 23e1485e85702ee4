use mfif::cascade::{cascade_members, cascade_size_inf, physical_jump_size, resolve_cascade, SpikeState};
use mfif::paths::{build_parametric, counting_map, m1_distance_bounds, oscillation_v, oscillation_w, CadlagPath};
use proptest::prelude::*;

const ALPHAS: [f64; 4] = [0.1, 0.5, 0.9, 0.99];

fn spike_state() -> impl Strategy<Value = (Vec<f64>, f64)> {
    (1usize..64, 0usize..4).prop_flat_map(|(n, a)| {
        let alpha = ALPHAS[a];
        (prop::collection::vec(-1.0..(2.0 - alpha - 1e-9), n), Just(alpha))
    })
}

/// Random path with linear pieces and occasional jumps in both directions.
fn random_path() -> impl Strategy<Value = CadlagPath> {
    (2usize..30).prop_flat_map(|n| {
        (
            prop::collection::vec(0.01f64..1.0, n - 1),
            prop::collection::vec(-1.0f64..4.0, n),
            prop::collection::vec(prop::option::weighted(0.3, -1.0f64..4.0), n - 1),
        )
            .prop_map(|(gaps, values, lefts)| {
                let mut times = vec![0.0];
                for g in gaps {
                    times.push(times.last().unwrap() + g);
                }
                let jumps: Vec<(usize, f64)> = lefts
                    .into_iter()
                    .enumerate()
                    .filter_map(|(i, l)| l.map(|l| (i + 1, l)))
                    .collect();
                CadlagPath::with_jumps(times, values, &jumps).unwrap()
            })
    })
}

/// Non-decreasing step path on a common grid of `[0, 1]`.
fn monotone_step() -> impl Strategy<Value = CadlagPath> {
    prop::collection::vec(0.0f64..0.1, 20).prop_map(|incs| {
        let times: Vec<f64> = (0..=20).map(|k| k as f64 / 20.0).collect();
        let mut values = vec![0.0];
        for d in incs {
            values.push(values.last().unwrap() + d);
        }
        CadlagPath::step(times, values).unwrap()
    })
}

/// `⌊(sup_{s ≤ t} z_s)₊⌋` from the vertices of a piecewise-linear path.
fn brute_count(z: &CadlagPath, t: f64) -> f64 {
    let mut sup = z.evaluate(t).unwrap();
    for (i, &s) in z.times().iter().enumerate() {
        if s <= t {
            sup = sup.max(z.values()[i]).max(z.left_values()[i]);
        }
    }
    sup.max(0.0).floor()
}

fn uniform_distance(f: &CadlagPath, g: &CadlagPath) -> f64 {
    f.times()
        .iter()
        .map(|&t| {
            let right = (f.evaluate(t).unwrap() - g.evaluate(t).unwrap()).abs();
            let left = (f.evaluate_left(t).unwrap() - g.evaluate_left(t).unwrap()).abs();
            right.max(left)
        })
        .fold(0.0, f64::max)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn cascade_size_matches_inf_formula((xs, alpha) in spike_state()) {
        let state = SpikeState::new(xs, alpha).unwrap();
        prop_assert_eq!(resolve_cascade(&state).size(), cascade_size_inf(&state));
    }

    #[test]
    fn fast_cascade_matches_reference((xs, alpha) in spike_state()) {
        let state = SpikeState::new(xs.clone(), alpha).unwrap();
        let slow = resolve_cascade(&state);
        let triggers: Vec<usize> = (0..xs.len()).filter(|&i| xs[i] >= 1.0).collect();
        let fast = cascade_members(&xs, alpha, triggers);
        let mut members = fast.members.clone();
        members.sort_unstable();
        prop_assert_eq!(members, slow.gamma.clone());
        prop_assert_eq!(fast.round_sizes, slow.round_sizes());
    }

    #[test]
    fn cascade_leaves_everyone_below_threshold((xs, alpha) in spike_state()) {
        let res = resolve_cascade(&SpikeState::new(xs.clone(), alpha).unwrap());
        prop_assert!(res.post_potentials.iter().all(|&x| x < 1.0));
        let kick = alpha * res.size() as f64 / xs.len() as f64;
        // closure: nobody outside Γ is pushed over by the total kick
        for (i, &x) in xs.iter().enumerate() {
            prop_assert_eq!(res.gamma.contains(&i), x + kick >= 1.0);
        }
    }

    #[test]
    fn jump_size_is_cascade_fraction((xs, alpha) in spike_state()) {
        let state = SpikeState::new(xs.clone(), alpha).unwrap();
        let n = xs.len() as f64;
        let eta = physical_jump_size(&xs, alpha).unwrap();
        prop_assert!((eta - cascade_size_inf(&state) as f64 / n).abs() <= 1e-12);
    }

    #[test]
    fn jump_size_grows_with_the_samples((xs, alpha) in spike_state(), shift in 0.0f64..0.3) {
        let raised: Vec<f64> = xs.iter().map(|x| x + shift).collect();
        prop_assert!(physical_jump_size(&raised, alpha).unwrap() >= physical_jump_size(&xs, alpha).unwrap());
    }

    #[test]
    fn counting_map_matches_running_sup(z in random_path(), probes in prop::collection::vec(0.0f64..1.0, 20)) {
        let m = counting_map(&z);
        prop_assert!(m.is_non_decreasing());
        let horizon = z.horizon();
        for &t in z.times().iter().chain(probes.iter().map(|p| p * horizon).collect::<Vec<_>>().iter()) {
            prop_assert_eq!(m.evaluate(t).unwrap(), brute_count(&z, t), "t = {}", t);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn m1_is_a_metric_up_to_slack(f in monotone_step(), g in monotone_step(), h in monotone_step()) {
        let res = 400;
        let d = |a: &CadlagPath, b: &CadlagPath| m1_distance_bounds(a, b, res).unwrap();
        prop_assert_eq!(d(&f, &f).upper, 0.0);
        let (fg, gf) = (d(&f, &g), d(&g, &f));
        prop_assert!((fg.upper - gf.upper).abs() <= fg.slack.max(gf.slack));
        let (fh, gh) = (d(&f, &h), d(&g, &h));
        prop_assert!(fh.upper <= fg.upper + gh.upper + fh.slack);
        // M1 is weaker than the uniform distance (terminal jumps aside)
        let (fl, gl) = (f.left_continuous_at_horizon(), g.left_continuous_at_horizon());
        prop_assert!(fg.upper <= uniform_distance(&fl, &gl) + fg.slack);
    }

    #[test]
    fn parametric_representation_traces_the_graph(f in random_path(), res in 2usize..500) {
        let p = build_parametric(&f, res);
        prop_assert!(p.check(&f, 1e-9).is_ok(), "{:?}", p.check(&f, 1e-9));
        prop_assert!(p.len() >= res.min(2));
    }

    #[test]
    fn monotone_paths_have_no_m1_oscillation(f in monotone_step(), t in 0.0f64..1.0, delta in 0.01f64..0.5) {
        prop_assert_eq!(oscillation_w(&f, t, delta).unwrap(), 0.0);
        prop_assert!(oscillation_v(&f, t, delta).unwrap() >= 0.0);
    }

    #[test]
    fn w_is_bounded_by_v(f in random_path(), t in 0.0f64..1.0, delta in 0.01f64..0.5) {
        let t = t * f.horizon();
        prop_assert!(oscillation_w(&f, t, delta).unwrap() <= oscillation_v(&f, t, delta).unwrap() + 1e-12);
    }
}
