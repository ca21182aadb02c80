use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

/// Discrete 1..=5 votes drawn around `true_mos` with Gaussian rater noise.
pub fn simulate_ratings(true_mos: f64, n_raters: usize, noise_sd: f64, seed: u64) -> Vec<u8> {
    assert!(n_raters >= 1, "n_raters must be at least 1");
    assert!(noise_sd >= 0.0 && noise_sd.is_finite(), "noise_sd must be finite and non-negative");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, noise_sd).expect("validated sd");
    (0..n_raters)
        .map(|_| (true_mos + normal.sample(&mut rng)).clamp(1.0, 5.0).round() as u8)
        .collect()
}

pub fn mean_rating(ratings: &[u8]) -> f64 {
    ratings.iter().map(|&r| r as f64).sum::<f64>() / ratings.len() as f64
}
