use std::collections::HashSet;

use ndarray::{Array2, Array3};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use skylink::baselines::{closest_bs_assign, hungarian, max_gain_assign};
use skylink::channel::generate_dataset;
use skylink::dataset::{read_dataset, write_dataset};
use skylink::dqn::EpsSchedule;
use skylink::eval::{cdf_table, percentile};
use skylink::nn::{softmax, Categorical};
use skylink::{AssociationEnv, BeamGainTable, ChannelTensor, JointAction, LinkBudget, Scenario, SceneConfig};

#[derive(Debug, Clone)]
struct Instance {
    dims: (usize, usize, usize),
    gain: Vec<f64>,
    g_db: Vec<f64>,
    actions: Vec<Option<usize>>,
    capacity: usize,
    eta: f64,
}

fn instance() -> impl Strategy<Value = Instance> {
    (1usize..=6, 1usize..=3, 1usize..=3)
        .prop_flat_map(|(m, l, n)| {
            let len = m * l * n;
            (
                Just((m, l, n)),
                prop::collection::vec(-13.0f64..-7.0, len),
                prop::collection::vec(-30.0f64..12.0, len),
                prop::collection::vec(prop::option::weighted(0.9, 0..l * n), m),
                1..=n,
                prop::sample::select(vec![0.0, 1.0, 1e3]),
            )
        })
        .prop_map(|(dims, gain, g_db, actions, capacity, eta)| Instance {
            dims,
            gain: gain.into_iter().map(|e| 10f64.powf(e)).collect(),
            g_db,
            actions,
            capacity,
            eta,
        })
}

fn build(inst: &Instance) -> (AssociationEnv, Scenario, BeamGainTable) {
    let (m, l, n) = inst.dims;
    let budget = LinkBudget {
        capacity: Some(inst.capacity),
        penalty_eta: inst.eta,
        ..LinkBudget::default()
    };
    let mut channel = ChannelTensor::zeros(m, l, n);
    channel.gain = Array3::from_shape_vec((m, l, n), inst.gain.clone()).unwrap();
    let g_star = Array3::from_shape_vec((m, l, n), inst.g_db.clone()).unwrap();
    let table = BeamGainTable {
        phi_star: Array3::zeros(g_star.raw_dim()),
        g_star,
    };
    let scenario = Scenario {
        uav_positions: (0..m).map(|i| [i as f64 * 10.0, 0.0, 60.0]).collect(),
        channel,
    };
    (AssociationEnv::new(budget, m, l, n).unwrap(), scenario, table)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn admitted_links_are_exclusive_and_within_capacity(inst in instance()) {
        let (env, scenario, table) = build(&inst);
        let out = env.step(&scenario, &table, &JointAction(inst.actions.clone())).unwrap();
        let (_, l_count, n_count) = inst.dims;
        let admitted: Vec<usize> = out.admission.admitted_set();
        let links: HashSet<usize> = admitted.iter().map(|&m| inst.actions[m].unwrap()).collect();
        prop_assert_eq!(links.len(), admitted.len());
        for l in 0..l_count {
            let on_bs = admitted.iter().filter(|&&m| inst.actions[m].unwrap() / n_count == l).count();
            prop_assert!(on_bs <= inst.capacity);
        }
        for m in 0..inst.dims.0 {
            if inst.actions[m].is_none() {
                prop_assert!(!out.admission.admitted[m]);
            }
        }
    }

    #[test]
    fn reward_is_mean_rate_minus_penalty(inst in instance()) {
        let (env, scenario, table) = build(&inst);
        let out = env.step(&scenario, &table, &JointAction(inst.actions.clone())).unwrap();
        let mean: f64 = out.rates_mbps().iter().sum::<f64>() / inst.dims.0 as f64;
        let expected = mean - inst.eta * out.admission.overcap as f64;
        prop_assert!((out.reward - expected).abs() <= 1e-9 * expected.abs().max(1.0));
        for (m, &r) in out.rates.iter().enumerate() {
            prop_assert!(r >= 0.0 && r.is_finite());
            prop_assert_eq!(r > 0.0, out.admission.admitted[m]);
        }
    }

    #[test]
    fn greedy_baselines_never_share_a_beam(inst in instance()) {
        let (_, scenario, table) = build(&inst);
        let bs: Vec<[f64; 3]> = (0..inst.dims.1).map(|l| [l as f64 * 100.0, 50.0, 25.0]).collect();
        for action in [
            max_gain_assign(&scenario.channel, &table).unwrap(),
            closest_bs_assign(&scenario.uav_positions, &bs, &scenario.channel, &table).unwrap(),
        ] {
            let chosen: Vec<usize> = action.0.iter().flatten().copied().collect();
            let unique: HashSet<usize> = chosen.iter().copied().collect();
            prop_assert_eq!(unique.len(), chosen.len());
            prop_assert!(chosen.iter().all(|&a| a < inst.dims.1 * inst.dims.2));
            // Every UAV is served while beams remain.
            prop_assert_eq!(chosen.len(), inst.dims.0.min(inst.dims.1 * inst.dims.2));
        }
    }

    #[test]
    fn hungarian_returns_a_matching(rows in 1usize..7, extra in 0usize..4, seed in any::<u64>()) {
        use rand::Rng;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let cost = Array2::from_shape_fn((rows, rows + extra), |_| rng.random_range(-1.0..1.0));
        let a = hungarian(&cost).unwrap();
        prop_assert_eq!(a.len(), rows);
        let unique: HashSet<usize> = a.iter().copied().collect();
        prop_assert_eq!(unique.len(), rows);
        prop_assert!(a.iter().all(|&j| j < rows + extra));
    }

    #[test]
    fn softmax_is_a_distribution(logits in prop::collection::vec(-500.0f64..500.0, 1..40)) {
        let p = softmax(&logits);
        prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        prop_assert!(p.iter().all(|&x| (0.0..=1.0).contains(&x)));
        let c = Categorical::from_logits(&logits);
        prop_assert!(c.entropy() >= -1e-12 && c.entropy() <= (logits.len() as f64).ln() + 1e-12);
    }

    #[test]
    fn epsilon_is_monotone_and_bounded(a in 0u64..2_000_000, b in 0u64..2_000_000, decay in 1u64..1_000_000) {
        let s = EpsSchedule { start: 1.0, end: 0.01, decay_steps: decay };
        let (lo, hi) = (a.min(b), a.max(b));
        prop_assert!(s.value(lo) >= s.value(hi));
        prop_assert!((0.01..=1.0).contains(&s.value(a)));
    }

    #[test]
    fn percentiles_stay_within_range(mut v in prop::collection::vec(-1e6f64..1e6, 1..200), q in 0.0f64..=100.0) {
        v.sort_by(f64::total_cmp);
        let p = percentile(&v, q);
        prop_assert!(p >= v[0] && p <= v[v.len() - 1]);
        prop_assert!(percentile(&v, q.min(50.0)) <= percentile(&v, q.max(50.0)));
    }

    #[test]
    fn cdf_is_monotone(mut v in prop::collection::vec(0.0f64..100.0, 1..300)) {
        v.sort_by(f64::total_cmp);
        let cdf = cdf_table(&v, 50);
        for w in cdf.windows(2) {
            prop_assert!(w[0].0 <= w[1].0 && w[0].1 <= w[1].1);
        }
        let last = cdf.last().unwrap();
        prop_assert!((last.1 - 1.0).abs() < 1e-12);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn dataset_round_trips_bit_exact(count in 1usize..5, seed in any::<u64>()) {
        let scenarios = generate_dataset(&SceneConfig::default(), count, seed).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.bin");
        write_dataset(&path, &scenarios).unwrap();
        let back = read_dataset(&path).unwrap();
        write_dataset(&dir.path().join("e.bin"), &back).unwrap();
        prop_assert_eq!(std::fs::read(&path).unwrap(), std::fs::read(dir.path().join("e.bin")).unwrap());
        prop_assert_eq!(back.len(), count);
    }
}
