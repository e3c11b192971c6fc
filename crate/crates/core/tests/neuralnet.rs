use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
mod common;

use common::{finite_difference, min_hidden_margin, random_batch};
use uavmap::neuralnet::{
    forward, gradient, init_params, loss, sgd_step, LabeledSample, MlpArchitecture, ParamVector,
};

#[test]
fn gradient_matches_finite_differences() {
    let arch = MlpArchitecture::new(vec![2, 8, 8, 2]).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut worst: f64 = 0.0;
    let mut draws = 0;
    while draws < 50 {
        let theta = init_params(&arch, &mut rng);
        let batch = random_batch(&mut rng, 6);
        // central differences are meaningless where a step crosses a ReLU kink
        if min_hidden_margin(&theta, &batch) < 1e-3 {
            continue;
        }
        draws += 1;
        let analytic = gradient(&theta, &batch).unwrap();
        let numeric = finite_difference(&theta, &batch, 1e-5);
        for (a, n) in analytic.values().iter().zip(&numeric) {
            let rel = (a - n).abs() / a.abs().max(n.abs()).max(1e-6);
            worst = worst.max(rel);
        }
    }
    assert!(worst < 1e-5, "worst relative error {worst}");
}

fn two_clusters(rng: &mut ChaCha8Rng, n: usize) -> Vec<LabeledSample> {
    (0..n)
        .map(|i| {
            let label = (i % 2) as u8;
            let c = if label == 1 { 0.8 } else { 0.2 };
            let jitter = |r: &mut ChaCha8Rng| c + r.random_range(-0.1..0.1);
            LabeledSample::new([jitter(rng), jitter(rng)], label).unwrap()
        })
        .collect()
}

#[test]
fn full_batch_sgd_descends_on_separable_clusters() {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let data = two_clusters(&mut rng, 100);
    let arch = MlpArchitecture::with_hidden(&[16, 16]).unwrap();
    let mut theta = init_params(&arch, &mut rng);
    let mut prev = loss(&theta, &data).unwrap();
    let mut decreases = 0;
    for _ in 0..200 {
        theta = sgd_step(&theta, &gradient(&theta, &data).unwrap(), 0.5).unwrap();
        let l = loss(&theta, &data).unwrap();
        if l < prev {
            decreases += 1;
        }
        prev = l;
    }
    assert!(decreases >= 190, "{decreases} of 200 steps decreased the loss");
    assert!(prev < 0.1, "final loss {prev}");
}

#[test]
fn gradient_vanishes_after_overfitting() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let data = two_clusters(&mut rng, 40);
    let arch = MlpArchitecture::with_hidden(&[8, 8]).unwrap();
    let mut theta = init_params(&arch, &mut rng);
    let mut g = gradient(&theta, &data).unwrap();
    let mut steps = 0;
    while g.norm() >= 1e-6 && steps < 5_000 {
        // once the clusters are separated, scale the step by 1/loss so the
        // margin grows geometrically instead of logarithmically
        let l = loss(&theta, &data).unwrap();
        let eta = if l > 1e-2 { 0.5 } else { 5e-3 / l };
        theta = sgd_step(&theta, &g, eta).unwrap();
        g = gradient(&theta, &data).unwrap();
        steps += 1;
    }
    assert!(g.norm() < 1e-6, "gradient norm {}", g.norm());
    let l = loss(&theta, &data).unwrap();
    assert!(l < 1e-4, "loss {l}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn softmax_sums_to_one(seed in any::<u64>(), x in 0.0..=1.0f64, y in 0.0..=1.0f64) {
        let arch = MlpArchitecture::with_hidden(&[6, 5]).unwrap();
        let theta = init_params(&arch, &mut ChaCha8Rng::seed_from_u64(seed));
        let p = forward(&theta, [x, y]).unwrap();
        prop_assert!(p[0] >= 0.0 && p[1] >= 0.0);
        prop_assert!((p[0] + p[1] - 1.0).abs() <= 1e-12);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn loss_is_permutation_invariant(seed in any::<u64>(), shuffle_seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let arch = MlpArchitecture::with_hidden(&[6]).unwrap();
        let theta = init_params(&arch, &mut rng);
        let batch = random_batch(&mut rng, 17);
        let mut shuffled = batch.clone();
        rand::seq::SliceRandom::shuffle(&mut shuffled[..], &mut ChaCha8Rng::seed_from_u64(shuffle_seed));
        let a = loss(&theta, &batch).unwrap();
        let b = loss(&theta, &shuffled).unwrap();
        prop_assert!((a - b).abs() <= 1e-14 * a.max(1.0));
    }

    #[test]
    fn flatten_round_trip(seed in any::<u64>()) {
        let arch = MlpArchitecture::with_hidden(&[3, 4]).unwrap();
        let theta = init_params(&arch, &mut ChaCha8Rng::seed_from_u64(seed));
        let flat = theta.clone().into_values();
        prop_assert_eq!(ParamVector::from_values(arch, flat).unwrap(), theta);
    }
}
