//! Implicit-feedback interaction data: storage, file IO, splitting, negative
//! sampling and synthetic corrupted datasets with planted ground truth.

mod io;
mod sampler;
mod split;
mod synth;

use std::collections::HashMap;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use io::{load_truth, load_tsv, truth_path, write_truth, write_tsv, ColumnMap};
pub use sampler::{epoch_batches, sample_negative, Triple};
pub use split::{split, SplitMode, SplitSpec};
pub use synth::{synthesize, SyntheticSpec};

/// One observed user-item interaction (`r̃ = 1`). Pairs absent from a store are
/// unobserved.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Interaction {
    pub user: usize,
    pub item: usize,
    /// Clean-label proxy, used only for evaluation.
    pub rating: Option<i64>,
    pub timestamp: Option<i64>,
    /// Hidden true preference `r` when the data is synthetic.
    pub truth: Option<bool>,
}

impl Interaction {
    pub fn new(user: usize, item: usize) -> Self {
        Self {
            user,
            item,
            rating: None,
            timestamp: None,
            truth: None,
        }
    }

    pub fn with_rating(mut self, rating: i64) -> Self {
        self.rating = Some(rating);
        self
    }

    pub fn with_timestamp(mut self, ts: i64) -> Self {
        self.timestamp = Some(ts);
        self
    }

    pub fn with_truth(mut self, truth: bool) -> Self {
        self.truth = Some(truth);
        self
    }
}

/// Bijection between external string ids and contiguous internal indices.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct IdMap {
    external: Vec<String>,
    index: HashMap<String, usize>,
}

impl IdMap {
    /// Identity map over `0..n` rendered as decimal strings.
    pub fn identity(n: usize) -> Self {
        let mut map = Self::default();
        for i in 0..n {
            map.intern(&i.to_string());
        }
        map
    }

    /// Returns the internal index of `id`, assigning the next one if new.
    pub fn intern(&mut self, id: &str) -> usize {
        if let Some(&i) = self.index.get(id) {
            return i;
        }
        let i = self.external.len();
        self.external.push(id.to_owned());
        self.index.insert(id.to_owned(), i);
        i
    }

    pub fn internal(&self, id: &str) -> Option<usize> {
        self.index.get(id).copied()
    }

    pub fn external(&self, index: usize) -> Option<&str> {
        self.external.get(index).map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.external.len()
    }

    pub fn is_empty(&self) -> bool {
        self.external.is_empty()
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct IdMaps {
    pub users: IdMap,
    pub items: IdMap,
}

/// Which interactions count as clean positives for evaluation.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum CleanRule {
    /// `rating == value`.
    RatingEquals { value: i64 },
    /// `rating >= value`.
    RatingAtLeast { value: i64 },
    /// `rating` is one of `values`.
    RatingIn { values: Vec<i64> },
    /// Hidden synthetic truth `r = 1`.
    TruePositive,
}

impl CleanRule {
    fn accepts(&self, it: &Interaction) -> Result<bool> {
        let rating = || {
            it.rating.ok_or_else(|| {
                Error::Data(format!(
                    "clean rule {self:?} needs a rating on ({}, {})",
                    it.user, it.item
                ))
            })
        };
        Ok(match self {
            CleanRule::RatingEquals { value } => rating()? == *value,
            CleanRule::RatingAtLeast { value } => rating()? >= *value,
            CleanRule::RatingIn { values } => values.contains(&rating()?),
            CleanRule::TruePositive => it.truth.ok_or_else(|| {
                Error::Data(format!(
                    "clean rule true-positive needs hidden truth on ({}, {})",
                    it.user, it.item
                ))
            })?,
        })
    }
}

/// Sparse observed binary matrix `R̃` over `num_users × num_items`.
///
/// Immutable after construction. Interactions are kept sorted by `(user, item)`.
#[derive(Debug, Clone)]
pub struct InteractionStore {
    num_users: usize,
    num_items: usize,
    interactions: Vec<Interaction>,
    by_user: Vec<Vec<usize>>,
    ids: Arc<IdMaps>,
    hidden_positives: Vec<(usize, usize)>,
}

impl InteractionStore {
    /// Builds a store with identity id maps.
    pub fn new(num_users: usize, num_items: usize, interactions: Vec<Interaction>) -> Result<Self> {
        let ids = IdMaps {
            users: IdMap::identity(num_users),
            items: IdMap::identity(num_items),
        };
        Self::with_ids(num_users, num_items, interactions, Arc::new(ids))
    }

    pub fn with_ids(
        num_users: usize,
        num_items: usize,
        mut interactions: Vec<Interaction>,
        ids: Arc<IdMaps>,
    ) -> Result<Self> {
        interactions.sort_by_key(|it| (it.user, it.item));
        let mut by_user = vec![Vec::new(); num_users];
        for (k, it) in interactions.iter().enumerate() {
            if it.user >= num_users {
                return Err(Error::IndexOutOfRange {
                    what: "user",
                    index: it.user,
                    bound: num_users,
                });
            }
            if it.item >= num_items {
                return Err(Error::IndexOutOfRange {
                    what: "item",
                    index: it.item,
                    bound: num_items,
                });
            }
            if k > 0 && interactions[k - 1].user == it.user && interactions[k - 1].item == it.item {
                return Err(Error::Data(format!(
                    "duplicate pair ({}, {})",
                    it.user, it.item
                )));
            }
            by_user[it.user].push(it.item);
        }
        Ok(Self {
            num_users,
            num_items,
            interactions,
            by_user,
            ids,
            hidden_positives: Vec::new(),
        })
    }

    /// Attaches unobserved pairs whose hidden preference is positive.
    pub fn with_hidden_positives(mut self, mut pairs: Vec<(usize, usize)>) -> Result<Self> {
        pairs.sort_unstable();
        pairs.dedup();
        for &(u, i) in &pairs {
            if u >= self.num_users || i >= self.num_items {
                return Err(Error::Data(format!("hidden positive ({u}, {i}) out of range")));
            }
            if self.is_observed(u, i) {
                return Err(Error::Data(format!("hidden positive ({u}, {i}) is observed")));
            }
        }
        self.hidden_positives = pairs;
        Ok(self)
    }

    /// A store over the same id space holding `interactions`.
    pub fn subset(&self, interactions: Vec<Interaction>) -> Result<Self> {
        Self::with_ids(self.num_users, self.num_items, interactions, self.ids.clone())
    }

    pub fn num_users(&self) -> usize {
        self.num_users
    }

    pub fn num_items(&self) -> usize {
        self.num_items
    }

    pub fn len(&self) -> usize {
        self.interactions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.interactions.is_empty()
    }

    pub fn interactions(&self) -> &[Interaction] {
        &self.interactions
    }

    pub fn ids(&self) -> &IdMaps {
        &self.ids
    }

    pub fn hidden_positives(&self) -> &[(usize, usize)] {
        &self.hidden_positives
    }

    /// Observed items of `user`, ascending.
    pub fn items_of(&self, user: usize) -> &[usize] {
        self.by_user.get(user).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn is_observed(&self, user: usize, item: usize) -> bool {
        self.items_of(user).binary_search(&item).is_ok()
    }

    pub fn get(&self, user: usize, item: usize) -> Option<&Interaction> {
        self.interactions
            .binary_search_by_key(&(user, item), |it| (it.user, it.item))
            .ok()
            .map(|k| &self.interactions[k])
    }

    pub fn has_timestamps(&self) -> bool {
        self.interactions.iter().all(|it| it.timestamp.is_some())
    }

    pub fn has_ratings(&self) -> bool {
        self.interactions.iter().all(|it| it.rating.is_some())
    }

    pub fn has_truth(&self) -> bool {
        self.interactions.iter().all(|it| it.truth.is_some())
    }

    /// Users with at least one observed item.
    pub fn active_users(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.num_users).filter(|&u| !self.by_user[u].is_empty())
    }
}

/// Keeps only the interactions accepted by `rule`.
pub fn filter_clean(store: &InteractionStore, rule: &CleanRule) -> Result<InteractionStore> {
    let mut kept = Vec::new();
    for it in store.interactions() {
        if rule.accepts(it)? {
            kept.push(it.clone());
        }
    }
    store.subset(kept)
}
