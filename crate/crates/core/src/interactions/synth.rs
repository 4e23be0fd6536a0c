use std::cmp::Ordering;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::{Interaction, InteractionStore};
use crate::error::{Error, Result};

/// Corrupted implicit-feedback generator.
///
/// True preference comes from a thresholded rank-`latent_rank` Gaussian
/// factor model. Every true positive is observed unless censored; censoring
/// prefers weakly exposed items. Noisy positives are disliked pairs observed
/// with probability proportional to a softmax over a planted power-law item
/// popularity, so they concentrate on popular items.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticSpec {
    pub num_users: usize,
    pub num_items: usize,
    pub latent_rank: usize,
    /// Fraction of all pairs that are observed.
    pub density: f64,
    /// Fraction of observed pairs whose true preference is negative.
    pub noisy_pos_rate: f64,
    /// Fraction of positive-preference pairs left unobserved.
    pub noisy_neg_rate: f64,
    /// Power-law exponent of the planted item popularity.
    pub popularity_exponent: f64,
    /// Softmax temperature applied to the popularity when drawing exposures.
    pub exposure_temperature: f64,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            num_users: 500,
            num_items: 200,
            latent_rank: 8,
            density: 0.01,
            noisy_pos_rate: 0.2,
            noisy_neg_rate: 0.1,
            popularity_exponent: 1.0,
            exposure_temperature: 4.0,
            seed: 0,
        }
    }
}

/// Pair counts implied by a spec.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct PlannedCounts {
    pub observed: usize,
    pub noisy_positive: usize,
    pub clean_positive: usize,
    pub true_positive: usize,
    pub censored: usize,
}

impl SyntheticSpec {
    pub(crate) fn counts(&self) -> Result<PlannedCounts> {
        if self.num_users == 0 || self.num_items == 0 || self.latent_rank == 0 {
            return Err(Error::Config("synthetic dimensions must be positive".into()));
        }
        if !(self.density > 0.0 && self.density <= 1.0) {
            return Err(Error::Config(format!("density {} outside (0,1]", self.density)));
        }
        for (name, r) in [("noisy_pos_rate", self.noisy_pos_rate), ("noisy_neg_rate", self.noisy_neg_rate)] {
            if !(0.0..1.0).contains(&r) {
                return Err(Error::Config(format!("{name} {r} outside [0,1)")));
            }
        }
        let pairs = self.num_users * self.num_items;
        let observed = ((pairs as f64) * self.density).round() as usize;
        if observed == 0 {
            return Err(Error::Infeasible("density yields no observed pair".into()));
        }
        let noisy_positive = ((observed as f64) * self.noisy_pos_rate).round() as usize;
        let clean_positive = observed - noisy_positive;
        let true_positive = ((clean_positive as f64) / (1.0 - self.noisy_neg_rate)).round() as usize;
        let true_positive = true_positive.max(clean_positive);
        if true_positive > pairs {
            return Err(Error::Infeasible(format!(
                "{true_positive} positive-preference pairs exceed {pairs} pairs"
            )));
        }
        if noisy_positive > pairs - true_positive {
            return Err(Error::Infeasible(format!(
                "{noisy_positive} noisy positives exceed {} negative-preference pairs",
                pairs - true_positive
            )));
        }
        Ok(PlannedCounts {
            observed,
            noisy_positive,
            clean_positive,
            true_positive,
            censored: true_positive - clean_positive,
        })
    }
}

fn normal_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Vec<f64> {
    (0..rows * cols).map(|_| rng.sample::<f64, _>(StandardNormal)).collect()
}

/// Weighted sampling without replacement (exponential-key method): picks
/// `k` of `candidates`, item `c` with weight `weight(c)`, returned ascending.
fn weighted_pick(
    rng: &mut ChaCha8Rng,
    candidates: &[usize],
    k: usize,
    weight: impl Fn(usize) -> f64,
) -> Vec<usize> {
    let mut keyed: Vec<(f64, usize)> = candidates
        .iter()
        .map(|&c| {
            let u: f64 = rng.random_range(f64::MIN_POSITIVE..1.0);
            (u.ln() / weight(c), c)
        })
        .collect();
    keyed.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap_or(Ordering::Equal).then(a.1.cmp(&b.1)));
    let mut picked: Vec<usize> = keyed.into_iter().take(k).map(|(_, c)| c).collect();
    picked.sort_unstable();
    picked
}

/// Item exposure weights: softmax of `temperature * (rank + 1)^-exponent`
/// over a random popularity ranking.
fn exposure_weights(rng: &mut ChaCha8Rng, spec: &SyntheticSpec) -> Vec<f64> {
    let mut ranks: Vec<usize> = (0..spec.num_items).collect();
    ranks.shuffle(rng);
    let logits: Vec<f64> = ranks
        .iter()
        .map(|&r| spec.exposure_temperature * ((r + 1) as f64).powf(-spec.popularity_exponent))
        .collect();
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exp: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
    let z: f64 = exp.iter().sum();
    exp.into_iter().map(|e| e / z).collect()
}

/// Generates a corrupted store with hidden labels on every observed pair and
/// the censored positives attached as hidden positives.
pub fn synthesize(spec: &SyntheticSpec) -> Result<InteractionStore> {
    let counts = spec.counts()?;
    let (nu, ni, k) = (spec.num_users, spec.num_items, spec.latent_rank);
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let users = normal_matrix(&mut rng, nu, k);
    let items = normal_matrix(&mut rng, ni, k);
    let exposure = exposure_weights(&mut rng, spec);

    let affinity: Vec<f64> = (0..nu * ni)
        .map(|p| {
            let (u, i) = (p / ni, p % ni);
            (0..k).map(|f| users[u * k + f] * items[i * k + f]).sum()
        })
        .collect();
    // Preference threshold: the top `true_positive` affinities are liked.
    let mut order: Vec<usize> = (0..nu * ni).collect();
    order.sort_by(|&a, &b| affinity[b].partial_cmp(&affinity[a]).unwrap_or(Ordering::Equal).then(a.cmp(&b)));
    let mut liked = vec![false; nu * ni];
    for &p in &order[..counts.true_positive] {
        liked[p] = true;
    }
    let positives: Vec<usize> = (0..nu * ni).filter(|&p| liked[p]).collect();
    let negatives: Vec<usize> = (0..nu * ni).filter(|&p| !liked[p]).collect();

    let censored = weighted_pick(&mut rng, &positives, counts.censored, |p| 1.0 / exposure[p % ni]);
    let noisy = weighted_pick(&mut rng, &negatives, counts.noisy_positive, |p| exposure[p % ni]);

    let mut pairs: Vec<(usize, bool)> = positives
        .iter()
        .filter(|p| censored.binary_search(p).is_err())
        .map(|&p| (p, true))
        .chain(noisy.iter().map(|&p| (p, false)))
        .collect();
    pairs.sort_unstable();
    let mut stamps: Vec<i64> = (0..pairs.len() as i64).collect();
    stamps.shuffle(&mut rng);

    let rows = pairs
        .iter()
        .zip(stamps)
        .map(|(&(p, truth), ts)| Interaction::new(p / ni, p % ni).with_truth(truth).with_timestamp(ts))
        .collect();
    InteractionStore::new(nu, ni, rows)?
        .with_hidden_positives(censored.iter().map(|&p| (p / ni, p % ni)).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(seed: u64) -> SyntheticSpec {
        SyntheticSpec { seed, ..Default::default() }
    }

    #[test]
    fn benchmark_counts() {
        let s = synthesize(&small(11)).unwrap();
        assert_eq!(s.len(), 1000);
        let noisy = s.interactions().iter().filter(|it| it.truth == Some(false)).count();
        assert_eq!(noisy, 200);
        assert_eq!(s.hidden_positives().len(), 89);
    }

    #[test]
    fn no_corruption_means_all_clean() {
        let spec = SyntheticSpec { noisy_pos_rate: 0.0, noisy_neg_rate: 0.0, ..small(4) };
        let s = synthesize(&spec).unwrap();
        assert!(s.interactions().iter().all(|it| it.truth == Some(true)));
        assert!(s.hidden_positives().is_empty());
    }

    #[test]
    fn deterministic_per_seed() {
        let a = synthesize(&small(5)).unwrap();
        let b = synthesize(&small(5)).unwrap();
        let c = synthesize(&small(6)).unwrap();
        assert_eq!(a.interactions(), b.interactions());
        assert_eq!(a.hidden_positives(), b.hidden_positives());
        assert_ne!(a.interactions(), c.interactions());
    }

    #[test]
    fn noisy_positives_favour_exposed_items() {
        let s = synthesize(&SyntheticSpec { noisy_pos_rate: 0.5, ..small(8) }).unwrap();
        let mut per_item = vec![0usize; s.num_items()];
        for it in s.interactions().iter().filter(|it| it.truth == Some(false)) {
            per_item[it.item] += 1;
        }
        per_item.sort_unstable_by(|a, b| b.cmp(a));
        let top10: usize = per_item[..10].iter().sum();
        // uniform exposure would put ~5% of the mass on any 10 items
        assert!(top10 as f64 > 0.2 * 500.0, "top10 = {top10}");
    }

    #[test]
    fn infeasible_specs_rejected() {
        let spec = SyntheticSpec { num_users: 2, num_items: 2, density: 1.0, noisy_pos_rate: 0.25, noisy_neg_rate: 0.5, ..small(1) };
        assert!(matches!(synthesize(&spec), Err(Error::Infeasible(_))));
        let spec = SyntheticSpec { noisy_neg_rate: 1.0, ..small(1) };
        assert!(synthesize(&spec).is_err());
    }
}
