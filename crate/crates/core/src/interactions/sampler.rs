use rand::seq::SliceRandom;
use rand::Rng;

use super::InteractionStore;
use crate::error::{Error, Result};

/// One training instance: an observed pair and a sampled unobserved item.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Triple {
    pub user: usize,
    pub positive: usize,
    pub negative: usize,
}

/// Draws an item uniformly from the items `user` has not interacted with.
///
/// Draws a rank among the unobserved items and walks the sorted observed list
/// to map it to an item id, so exactly one random number is consumed.
pub fn sample_negative<R: Rng + ?Sized>(train: &InteractionStore, user: usize, rng: &mut R) -> Result<usize> {
    let observed = train.items_of(user);
    let free = train.num_items() - observed.len();
    if free == 0 {
        return Err(Error::NoNegativeCandidate { user });
    }
    let mut item = rng.random_range(0..free);
    for &o in observed {
        if o <= item {
            item += 1;
        } else {
            break;
        }
    }
    Ok(item)
}

/// Shuffles the observed pairs and splits them into batches of `batch_size`
/// (the last one may be short), pairing each with a fresh negative.
pub fn epoch_batches<R: Rng + ?Sized>(
    train: &InteractionStore,
    batch_size: usize,
    rng: &mut R,
) -> Result<Vec<Vec<Triple>>> {
    if batch_size == 0 {
        return Err(Error::Config("batch size must be positive".into()));
    }
    let mut order: Vec<usize> = (0..train.len()).collect();
    order.shuffle(rng);
    let rows = train.interactions();
    order
        .chunks(batch_size)
        .map(|chunk| {
            chunk
                .iter()
                .map(|&k| {
                    let it = &rows[k];
                    Ok(Triple {
                        user: it.user,
                        positive: it.item,
                        negative: sample_negative(train, it.user, rng)?,
                    })
                })
                .collect()
        })
        .collect()
}
