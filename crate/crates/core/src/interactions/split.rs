use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Interaction, InteractionStore};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum SplitMode {
    /// Global shuffle of all interactions.
    #[default]
    Random,
    /// Shuffle and cut each user's interactions separately.
    PerUser,
    /// Order by timestamp ascending, ties by `(user, item)`.
    Chronological,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplitSpec {
    pub train_frac: f64,
    pub valid_frac: f64,
    pub test_frac: f64,
    pub mode: SplitMode,
    pub seed: u64,
}

impl Default for SplitSpec {
    fn default() -> Self {
        Self {
            train_frac: 0.8,
            valid_frac: 0.1,
            test_frac: 0.1,
            mode: SplitMode::Random,
            seed: 0,
        }
    }
}

impl SplitSpec {
    pub fn validate(&self) -> Result<()> {
        let fr = [self.train_frac, self.valid_frac, self.test_frac];
        if fr.iter().any(|&f| !(f > 0.0 && f < 1.0)) {
            return Err(Error::Config(format!("split fractions must lie in (0,1): {fr:?}")));
        }
        if (fr.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(Error::Config(format!("split fractions must sum to 1: {fr:?}")));
        }
        Ok(())
    }

    fn cut_points(&self, n: usize) -> (usize, usize) {
        let n_train = ((n as f64) * self.train_frac).round() as usize;
        let n_valid = ((n as f64) * self.valid_frac).round() as usize;
        let n_train = n_train.min(n);
        (n_train, (n_train + n_valid).min(n))
    }
}

fn cut(rows: Vec<Interaction>, spec: &SplitSpec) -> [Vec<Interaction>; 3] {
    let (a, b) = spec.cut_points(rows.len());
    let mut train = rows;
    let mut valid = train.split_off(a);
    let test = valid.split_off(b - a);
    [train, valid, test]
}

/// Partitions `store` into disjoint train / validation / test stores.
pub fn split(
    store: &InteractionStore,
    spec: &SplitSpec,
) -> Result<(InteractionStore, InteractionStore, InteractionStore)> {
    spec.validate()?;
    if store.is_empty() {
        return Err(Error::EmptyStore);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let rows = store.interactions().to_vec();
    let [train, valid, test] = match spec.mode {
        SplitMode::Random => {
            let mut rows = rows;
            rows.shuffle(&mut rng);
            cut(rows, spec)
        }
        SplitMode::Chronological => {
            if !store.has_timestamps() {
                return Err(Error::Data("chronological split needs a timestamp on every interaction".into()));
            }
            let mut rows = rows;
            rows.sort_by_key(|it| (it.timestamp, it.user, it.item));
            cut(rows, spec)
        }
        SplitMode::PerUser => {
            let mut parts: [Vec<Interaction>; 3] = Default::default();
            let mut start = 0;
            while start < rows.len() {
                let user = rows[start].user;
                let end = start + rows[start..].iter().take_while(|it| it.user == user).count();
                let mut mine = rows[start..end].to_vec();
                mine.shuffle(&mut rng);
                for (dst, src) in parts.iter_mut().zip(cut(mine, spec)) {
                    dst.extend(src);
                }
                start = end;
            }
            parts
        }
    };
    Ok((store.subset(train)?, store.subset(valid)?, store.subset(test)?))
}
