use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::datacube::LabelMask;
use crate::error::{bail, Result};

/// Draw weights: tiles with a positive pixel get `negatives / positives`,
/// others 1, so both kinds are drawn equally often. Uniform when either
/// kind is missing.
pub fn sampler_weights(positive: &[bool]) -> Vec<f64> {
    let pos = positive.iter().filter(|&&p| p).count();
    let neg = positive.len() - pos;
    if pos == 0 || neg == 0 {
        return vec![1.0; positive.len()];
    }
    let w = neg as f64 / pos as f64;
    positive.iter().map(|&p| if p { w } else { 1.0 }).collect()
}

/// `draws` indices sampled with replacement under [`sampler_weights`].
pub fn weighted_draws(positive: &[bool], draws: usize, rng: &mut impl Rng) -> Result<Vec<usize>> {
    if positive.is_empty() {
        bail!(InvalidArgument, "cannot sample from an empty dataset");
    }
    let dist = WeightedIndex::new(sampler_weights(positive))
        .map_err(|e| crate::error::Error::Numeric(format!("sampler weights: {e}")))?;
    Ok((0..draws).map(|_| dist.sample(rng)).collect())
}

/// Oversampling index stream over labelled tiles.
pub fn weighted_sampler(labels: &[LabelMask], draws: usize, seed: u64) -> Result<Vec<usize>> {
    let positive: Vec<bool> = labels.iter().map(|l| l.has_positive()).collect();
    weighted_draws(&positive, draws, &mut ChaCha8Rng::seed_from_u64(seed))
}
