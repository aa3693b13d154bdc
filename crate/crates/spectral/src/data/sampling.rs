use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Result, SpectralError};

/// Select a share of whole training images.
///
/// One seeded shuffle followed by prefix-taking, so for a fixed seed the
/// selections are nested: `sample_share(p1) ⊆ sample_share(p2)` whenever
/// `p1 ≤ p2`. Selection size is `max(1, round(p/100 * n))`; `p = 100`
/// returns every image.
pub fn sample_share(train_images: &[String], p: u32, seed: u64) -> Result<Vec<String>> {
    if train_images.is_empty() {
        return Err(SpectralError::EmptyInput("no training images to sample from".into()));
    }
    if p == 0 || p > 100 {
        return Err(SpectralError::Config(format!("share percent {p} not in 1..=100")));
    }
    let mut shuffled: Vec<String> = train_images.to_vec();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    shuffled.shuffle(&mut rng);
    let n = train_images.len();
    let take = ((p as f64 / 100.0 * n as f64).round() as usize).clamp(1, n);
    shuffled.truncate(take);
    Ok(shuffled)
}

/// Batches of sample indices for one epoch.
///
/// With `shuffle` the permutation is a pure function of `(seed, epoch)`;
/// without it, indices stay in input order. The last batch may be smaller.
pub fn epoch_batches(
    num_samples: usize,
    batch_size: usize,
    seed: u64,
    epoch: usize,
    shuffle: bool,
) -> Vec<Vec<usize>> {
    assert!(batch_size >= 1, "batch_size must be >= 1");
    let mut order: Vec<usize> = (0..num_samples).collect();
    if shuffle {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(epoch as u64);
        order.shuffle(&mut rng);
    }
    order.chunks(batch_size).map(|c| c.to_vec()).collect()
}
