//! Probability that an observed interaction reflects a true positive.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::interactions::InteractionStore;
use crate::models::ModelParams;
use crate::scalar::Scalar;

/// `h′f / (h′f + h(1−f))`.
pub fn bayes_posterior<T: Scalar>(f: T, h: T, h_prime: T) -> T {
    let pos = h_prime * f;
    pos / (pos + h * (T::one() - f))
}

/// Grouping key for the posterior curve.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Bucket {
    /// Synthetic truth; `false` sorts first.
    Truth(bool),
    Rating(i64),
}

impl fmt::Display for Bucket {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Bucket::Truth(false) => f.write_str("noisy"),
            Bucket::Truth(true) => f.write_str("clean"),
            Bucket::Rating(r) => write!(f, "{r}"),
        }
    }
}

impl FromStr for Bucket {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "noisy" => Ok(Bucket::Truth(false)),
            "clean" => Ok(Bucket::Truth(true)),
            _ => s
                .parse()
                .map(Bucket::Rating)
                .map_err(|_| Error::Config(format!("unknown posterior bucket `{s}`"))),
        }
    }
}

impl Serialize for Bucket {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Bucket {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BucketScheme {
    #[default]
    Truth,
    Rating,
}

impl BucketScheme {
    /// Default bucket list: {noisy, clean} or ratings 1 to 5.
    pub fn buckets(self) -> Vec<Bucket> {
        match self {
            BucketScheme::Truth => vec![Bucket::Truth(false), Bucket::Truth(true)],
            BucketScheme::Rating => (1..=5).map(Bucket::Rating).collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PosteriorRecord {
    pub user: usize,
    pub item: usize,
    pub posterior: f64,
    pub bucket: Option<Bucket>,
}

fn observed_bucket(store: &InteractionStore, user: usize, item: usize, scheme: BucketScheme) -> Result<Option<Bucket>> {
    let it = store.get(user, item).ok_or(Error::Unobserved { user, item })?;
    Ok(match scheme {
        BucketScheme::Truth => it.truth.map(Bucket::Truth),
        BucketScheme::Rating => it.rating.map(Bucket::Rating),
    })
}

/// Posterior under DPI for an observed pair of `store`.
pub fn posterior_dpi<T: Scalar>(
    f: &ModelParams<T>,
    h: &ModelParams<T>,
    h_prime: &ModelParams<T>,
    store: &InteractionStore,
    user: usize,
    item: usize,
    scheme: BucketScheme,
) -> Result<PosteriorRecord> {
    let bucket = observed_bucket(store, user, item, scheme)?;
    let p = bayes_posterior(f.forward(user, item)?.get(), h.forward(user, item)?.get(), h_prime.forward(user, item)?.get());
    Ok(PosteriorRecord { user, item, posterior: p.as_f64(), bucket })
}

/// Posterior under DVAE: the encoder's clamped score.
pub fn posterior_dvae<T: Scalar>(
    f: &ModelParams<T>,
    store: &InteractionStore,
    user: usize,
    item: usize,
    scheme: BucketScheme,
) -> Result<PosteriorRecord> {
    let bucket = observed_bucket(store, user, item, scheme)?;
    Ok(PosteriorRecord { user, item, posterior: f.forward(user, item)?.get().as_f64(), bucket })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveRow {
    pub bucket: Bucket,
    pub count: usize,
    /// `None` when the bucket is empty.
    pub mean_posterior: Option<f64>,
}

/// Mean posterior per bucket, in ascending bucket order. Records without a
/// bucket, or with one outside `buckets`, are ignored.
pub fn rating_curve(records: &[PosteriorRecord], buckets: &[Bucket]) -> Vec<CurveRow> {
    let mut keys = buckets.to_vec();
    keys.sort_unstable();
    keys.dedup();
    keys.into_iter()
        .map(|b| {
            let vals: Vec<f64> = records.iter().filter(|r| r.bucket == Some(b)).map(|r| r.posterior).collect();
            let mean = (!vals.is_empty()).then(|| vals.iter().sum::<f64>() / vals.len() as f64);
            CurveRow { bucket: b, count: vals.len(), mean_posterior: mean }
        })
        .collect()
}

pub fn curve_tsv(rows: &[CurveRow]) -> String {
    let mut out = String::from("bucket\tcount\tmean_posterior\n");
    for r in rows {
        let mean = r.mean_posterior.map_or_else(|| "NA".to_string(), |m| m.to_string());
        out.push_str(&format!("{}\t{}\t{}\n", r.bucket, r.count, mean));
    }
    out
}

pub fn write_curve_tsv(rows: &[CurveRow], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, curve_tsv(rows)).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::interactions::Interaction;
    use crate::Arch;

    #[test]
    fn worked_example() {
        let p: f64 = bayes_posterior(0.7, 0.2, 0.9);
        assert!((p - 0.63 / 0.69).abs() < 1e-15);
        assert!((p - 0.9130).abs() < 1e-4);
    }

    #[test]
    fn symmetric_channel_returns_f() {
        for f in [0.1f64, 0.5, 0.93] {
            assert!((bayes_posterior(f, 0.37, 0.37) - f).abs() < 1e-15);
        }
    }

    #[test]
    fn vanishing_false_alarm_gives_one() {
        assert!(bayes_posterior(0.3, 1e-12, 0.8) > 1.0 - 1e-10);
    }

    #[test]
    fn unobserved_pair_rejected() {
        let store = InteractionStore::new(2, 2, vec![Interaction::new(0, 0)]).unwrap();
        let m = ModelParams::<f64>::init(Arch::Mf, 2, 2, 4, 0).unwrap();
        assert!(matches!(
            posterior_dvae(&m, &store, 1, 1, BucketScheme::Truth),
            Err(Error::Unobserved { user: 1, item: 1 })
        ));
        assert!(posterior_dpi(&m, &m, &m, &store, 0, 1, BucketScheme::Truth).is_err());
    }

    #[test]
    fn dvae_posterior_is_clamped_score() {
        let store = InteractionStore::new(1, 1, vec![Interaction::new(0, 0).with_truth(true)]).unwrap();
        let mut m = ModelParams::<f64>::init(Arch::Mf, 1, 1, 1, 0).unwrap();
        m.blocks[0].data[0] = 0.0;
        assert_eq!(posterior_dvae(&m, &store, 0, 0, BucketScheme::Truth).unwrap().posterior, 0.5);
        m.blocks[0].data[0] = 100.0;
        m.blocks[1].data[0] = 100.0;
        let r = posterior_dvae(&m, &store, 0, 0, BucketScheme::Truth).unwrap();
        assert!(r.posterior < 1.0 && r.posterior >= 1.0 - 1e-7 - 1e-15);
        assert_eq!(r.bucket, Some(Bucket::Truth(true)));
    }

    #[test]
    fn curve_shapes() {
        let rec = |p, b| PosteriorRecord { user: 0, item: 0, posterior: p, bucket: Some(b) };
        let flat = [rec(0.4, Bucket::Rating(2)), rec(0.4, Bucket::Rating(5))];
        let rows = rating_curve(&flat, &BucketScheme::Rating.buckets());
        assert_eq!(rows.len(), 5);
        assert_eq!(rows[0].mean_posterior, None);
        assert_eq!(rows[1].mean_posterior, Some(0.4));
        assert_eq!(rows[4].mean_posterior, Some(0.4));
        let one = rating_curve(&[rec(0.8, Bucket::Truth(true))], &[Bucket::Truth(true)]);
        assert_eq!(one, vec![CurveRow { bucket: Bucket::Truth(true), count: 1, mean_posterior: Some(0.8) }]);
        assert_eq!(curve_tsv(&one), "bucket\tcount\tmean_posterior\nclean\t1\t0.8\n");
    }
}
