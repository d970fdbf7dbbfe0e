//! Chi-square goodness-of-fit checks on the samplers. All seeds are fixed,
//! so a pass is reproducible; the 0.001 level keeps the tests meaningful.

use ndarray::Array1;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use statrs::distribution::{ChiSquared, ContinuousCDF};

use skylink::baselines::random_assign;
use skylink::dqn::{choose_eps_greedy, ReplayBuffer};
use skylink::nn::Categorical;

fn chi_square_p(counts: &[u64], expected: &[f64]) -> f64 {
    let stat: f64 = counts.iter().zip(expected).map(|(&c, &e)| (c as f64 - e).powi(2) / e).sum();
    let dist = ChiSquared::new((counts.len() - 1) as f64).unwrap();
    1.0 - dist.cdf(stat)
}

fn uniform_p(counts: &[u64]) -> f64 {
    let total: u64 = counts.iter().sum();
    let e = total as f64 / counts.len() as f64;
    chi_square_p(counts, &vec![e; counts.len()])
}

#[test]
fn categorical_sampling_matches_probabilities() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let uniform = Categorical::from_logits(&[0.0; 8]);
    let mut counts = [0u64; 8];
    for _ in 0..10_000 {
        counts[uniform.sample(&mut rng)] += 1;
    }
    assert!(uniform_p(&counts) > 1e-3, "{counts:?}");

    let skewed = Categorical::from_logits(&[0.0, 1.0, 2.0, -1.0]);
    let mut counts = [0u64; 4];
    for _ in 0..20_000 {
        counts[skewed.sample(&mut rng)] += 1;
    }
    let expected: Vec<f64> = skewed.probs.iter().map(|p| p * 20_000.0).collect();
    assert!(chi_square_p(&counts, &expected) > 1e-3, "{counts:?}");
}

#[test]
fn random_baseline_is_uniform_over_links() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut counts = [0u64; 12];
    for _ in 0..2_500 {
        for a in random_assign(4, 3, 4, &mut rng).0 {
            counts[a.unwrap()] += 1;
        }
    }
    assert!(uniform_p(&counts) > 1e-3, "{counts:?}");
}

#[test]
fn full_exploration_ignores_q_values() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let q0 = Array1::from(vec![5.0, 0.0, 0.0, 0.0, 0.0, 0.0]);
    let q1 = Array1::from(vec![0.0, 0.0, 0.0, 0.0, 0.0, 9.0]);
    let mut counts = [[0u64; 6]; 2];
    for _ in 0..10_000 {
        let a = choose_eps_greedy(&[q0.view(), q1.view()], 1.0, &mut rng);
        counts[0][a[0]] += 1;
        counts[1][a[1]] += 1;
    }
    for c in counts {
        assert!(uniform_p(&c) > 1e-3, "{c:?}");
    }
    // Zero exploration is greedy.
    assert_eq!(choose_eps_greedy(&[q0.view(), q1.view()], 0.0, &mut rng), vec![0, 5]);
}

#[test]
fn replay_sampling_is_uniform_over_slots() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut buffer = ReplayBuffer::new(50, 1);
    // Overfill so the ring wraps; only the newest 50 entries remain.
    for i in 0..130 {
        buffer.push(i, &[i % 3], i as f64);
    }
    assert_eq!(buffer.len(), 50);
    let mut counts = vec![0u64; 50];
    for _ in 0..2_000 {
        for slot in buffer.sample_slots(50, &mut rng) {
            counts[slot] += 1;
        }
    }
    assert_eq!(counts.iter().sum::<u64>(), 100_000);
    assert!(uniform_p(&counts) > 1e-3);
    let states: std::collections::BTreeSet<usize> = (0..50).map(|s| buffer.state(s)).collect();
    assert_eq!(states, (80..130).collect());
}
