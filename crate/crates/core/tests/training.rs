use pld_core::dataset::{
    generate_synthetic, inject_noise_ratio, split, InteractionSet, NoisyTrainSet,
};
use pld_core::loss::LossKind;
use pld_core::model::init_model;
use pld_core::rng_from_seed;
use pld_core::sampler::ResampleConfig;
use pld_core::trainer::{train_epoch, train_epoch_observed, Denoiser, TrainConfig};
use statrs::distribution::{ChiSquared, ContinuousCDF};

fn config(denoiser: Denoiser, seed: u64) -> TrainConfig {
    TrainConfig {
        loss: LossKind::Bpr,
        denoiser,
        learning_rate: 0.05,
        weight_decay: 1e-4,
        batch_size: 128,
        max_epochs: 10,
        patience: None,
        seed,
    }
}

#[test]
fn standard_training_loss_does_not_increase_on_clean_data() {
    let epochs = 10;
    let mut mean_curve = vec![0.0; epochs];
    let seeds = 3;
    for seed in 0..seeds {
        let syn = generate_synthetic(150, 150, 8, 25, seed).unwrap();
        let data = NoisyTrainSet::clean(syn.set);
        let graph = data.combined();
        let mut state = init_model(graph.num_users(), graph.num_items(), 16, 0, seed).unwrap();
        let cfg = config(Denoiser::None, seed);
        let mut rng = rng_from_seed(seed);
        for (e, slot) in mean_curve.iter_mut().enumerate() {
            *slot += train_epoch(&mut state, &data, &cfg, e + 1, &mut rng)
                .unwrap()
                .mean_train_loss;
        }
    }
    for w in mean_curve.windows(2) {
        assert!(w[1] <= w[0], "{mean_curve:?}");
    }
}

#[test]
fn pld_with_one_candidate_picks_positives_uniformly() {
    let items: Vec<(u32, u32)> = (0..8).map(|v| (0, 2 * v)).chain([(1, 3), (1, 5)]).collect();
    let data = NoisyTrainSet::clean(InteractionSet::from_pairs(2, 20, items).unwrap());
    let mut state = init_model(2, 20, 4, 0, 1).unwrap();
    let cfg = TrainConfig {
        learning_rate: 0.0,
        ..config(Denoiser::Pld(ResampleConfig::new(1, 0.1).unwrap()), 1)
    };
    let mut rng = rng_from_seed(5);
    let mut counts = [0u64; 8];
    for epoch in 1..=2000 {
        train_epoch_observed(&mut state, &data, &cfg, epoch, &mut rng, &mut |t| {
            if t.user == 0 {
                counts[(t.pos / 2) as usize] += 1;
            }
        })
        .unwrap();
    }
    let total: u64 = counts.iter().sum();
    let expected = total as f64 / 8.0;
    let stat: f64 = counts
        .iter()
        .map(|&c| (c as f64 - expected).powi(2) / expected)
        .sum();
    let p = 1.0 - ChiSquared::new(7.0).unwrap().cdf(stat);
    assert!(p > 0.01, "p = {p}, counts {counts:?}");
}

#[test]
fn pld_optimizes_fewer_noisy_interactions_than_standard_training() {
    let syn = generate_synthetic(200, 200, 8, 30, 4).unwrap();
    let parts = split(&syn.set, 0.8, 0.0, 4).unwrap();
    let noisy = inject_noise_ratio(&parts.train, 0.3, 9, &parts.test).unwrap();
    let graph = noisy.combined();
    let mut fractions = Vec::new();
    for denoiser in [Denoiser::None, Denoiser::Pld(ResampleConfig::default())] {
        let mut state = init_model(graph.num_users(), graph.num_items(), 16, 0, 4).unwrap();
        let cfg = config(denoiser, 4);
        let mut rng = rng_from_seed(4);
        let mut last = 0.0;
        for epoch in 1..=30 {
            last = train_epoch(&mut state, &noisy, &cfg, epoch, &mut rng)
                .unwrap()
                .noisy_fraction();
        }
        fractions.push(last);
    }
    assert!(fractions[1] < 0.75 * fractions[0], "{fractions:?}");
}
