//! Full-catalog top-K metrics, the two-model prediction-difference study and
//! report assembly.

use std::cmp::Ordering;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::interactions::InteractionStore;
use crate::models::{ModelParams, Scorer};
use crate::posterior::CurveRow;
use crate::scalar::Scalar;
use crate::trainers::TrainTrace;

/// Descending by score, ties by ascending item id.
fn rank_order(a: &(f64, usize), b: &(f64, usize)) -> Ordering {
    b.0.total_cmp(&a.0).then(a.1.cmp(&b.1))
}

/// The top `k` candidates for `user`, where candidates are all items the
/// user has no training interaction with.
pub fn ranked_list<S: Scorer + ?Sized>(scorer: &S, train: &InteractionStore, user: usize, k: usize) -> Vec<usize> {
    let seen = train.items_of(user);
    let mut scored: Vec<(f64, usize)> = (0..train.num_items())
        .filter(|i| seen.binary_search(i).is_err())
        .map(|i| (scorer.rank_score(user, i), i))
        .collect();
    let k = k.min(scored.len());
    if k == 0 {
        return Vec::new();
    }
    if k < scored.len() {
        scored.select_nth_unstable_by(k - 1, rank_order);
        scored.truncate(k);
    }
    scored.sort_unstable_by(rank_order);
    scored.into_iter().map(|(_, i)| i).collect()
}

/// recall@K and ndcg@K at one cutoff.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CutoffMetrics {
    pub k: usize,
    pub recall: f64,
    pub ndcg: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub cutoffs: Vec<CutoffMetrics>,
    pub users_evaluated: usize,
    /// Test users without any training interaction.
    pub skipped_cold: usize,
    /// Test users whose candidate set is empty.
    pub skipped_no_candidates: usize,
}

impl Evaluation {
    pub fn at(&self, k: usize) -> Option<&CutoffMetrics> {
        self.cutoffs.iter().find(|c| c.k == k)
    }
}

fn dcg_discount(rank: usize) -> f64 {
    1.0 / ((rank + 1) as f64).log2()
}

/// Evaluates `scorer` on every test user at each cutoff in `ks`.
pub fn evaluate<S: Scorer + ?Sized>(
    scorer: &S,
    test: &InteractionStore,
    train: &InteractionStore,
    ks: &[usize],
) -> Result<Evaluation> {
    if ks.is_empty() || ks.contains(&0) {
        return Err(Error::Config(format!("cutoffs must be non-empty and positive, got {ks:?}")));
    }
    if test.num_items() != train.num_items() || test.num_users() != train.num_users() {
        return Err(Error::Data("test and train stores index different catalogs".into()));
    }
    let k_max = *ks.iter().max().expect("non-empty");
    let mut recall = vec![0.0; ks.len()];
    let mut ndcg = vec![0.0; ks.len()];
    let (mut users, mut cold, mut empty) = (0usize, 0usize, 0usize);
    for user in test.active_users() {
        let relevant = test.items_of(user);
        if train.items_of(user).is_empty() {
            cold += 1;
            continue;
        }
        let list = ranked_list(scorer, train, user, k_max);
        if list.is_empty() {
            empty += 1;
            continue;
        }
        users += 1;
        for (slot, &k) in ks.iter().enumerate() {
            let mut hits = 0usize;
            let mut dcg = 0.0;
            for (r, item) in list.iter().take(k).enumerate() {
                if relevant.binary_search(item).is_ok() {
                    hits += 1;
                    dcg += dcg_discount(r + 1);
                }
            }
            let ideal: f64 = (1..=k.min(relevant.len())).map(dcg_discount).sum();
            recall[slot] += hits as f64 / relevant.len() as f64;
            ndcg[slot] += dcg / ideal;
        }
    }
    if cold + empty > 0 {
        log::debug!("evaluation skipped {cold} cold-start and {empty} candidate-less users");
    }
    let n = users.max(1) as f64;
    let cutoffs = ks
        .iter()
        .enumerate()
        .map(|(slot, &k)| CutoffMetrics { k, recall: recall[slot] / n, ndcg: ndcg[slot] / n })
        .collect();
    Ok(Evaluation { cutoffs, users_evaluated: users, skipped_cold: cold, skipped_no_candidates: empty })
}

pub fn recall_at_k<S: Scorer + ?Sized>(scorer: &S, test: &InteractionStore, train: &InteractionStore, k: usize) -> Result<f64> {
    Ok(evaluate(scorer, test, train, &[k])?.cutoffs[0].recall)
}

pub fn ndcg_at_k<S: Scorer + ?Sized>(scorer: &S, test: &InteractionStore, train: &InteractionStore, k: usize) -> Result<f64> {
    Ok(evaluate(scorer, test, train, &[k])?.cutoffs[0].ndcg)
}

/// Mean disagreement over one partition.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PartitionDiff {
    pub mean: f64,
    pub count: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct DiffStudyReport {
    pub clean: Option<PartitionDiff>,
    pub noisy: Option<PartitionDiff>,
}

/// A scored pair for the difference study; `clean` selects its partition.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StudyPair {
    pub user: usize,
    pub item: usize,
    pub clean: bool,
}

/// Pairs of `store` partitioned by their hidden truth labels.
pub fn study_pairs(store: &InteractionStore) -> Result<Vec<StudyPair>> {
    store
        .interactions()
        .iter()
        .map(|it| match it.truth {
            Some(clean) => Ok(StudyPair { user: it.user, item: it.item, clean }),
            None => Err(Error::Data(format!("pair ({}, {}) has no truth label", it.user, it.item))),
        })
        .collect()
}

/// Binarizes both models' probabilities at 0.5 and averages the absolute
/// disagreement within each partition.
pub fn prediction_difference<T: Scalar>(
    a: &ModelParams<T>,
    b: &ModelParams<T>,
    pairs: &[StudyPair],
) -> Result<DiffStudyReport> {
    let half = T::of(0.5);
    let mut sums = [(0usize, 0usize); 2];
    for p in pairs {
        let ya = a.forward(p.user, p.item)?.get() >= half;
        let yb = b.forward(p.user, p.item)?.get() >= half;
        let slot = &mut sums[p.clean as usize];
        slot.0 += (ya != yb) as usize;
        slot.1 += 1;
    }
    let part = |(diff, n): (usize, usize)| (n > 0).then(|| PartitionDiff { mean: diff as f64 / n as f64, count: n });
    Ok(DiffStudyReport { noisy: part(sums[0]), clean: part(sums[1]) })
}

/// Mean and population standard deviation across runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricRow {
    pub name: String,
    pub values: Vec<f64>,
    pub mean: f64,
    pub std: f64,
}

impl MetricRow {
    pub fn new(name: impl Into<String>, values: Vec<f64>) -> Self {
        let n = values.len().max(1) as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        Self { name: name.into(), values, mean, std: var.sqrt() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceSummary {
    pub run: usize,
    pub evaluations: usize,
    pub last_epoch: usize,
    pub best_epoch: usize,
    pub best_valid_recall: f64,
    pub stopped_early: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub metrics: Vec<MetricRow>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub runs: Vec<TraceSummary>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub diff_study: Option<DiffStudyReport>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub posterior: Option<Vec<CurveRow>>,
}

/// Combines per-run evaluations (one per seed) into a single report.
pub fn assemble_report(
    traces: &[TrainTrace],
    evaluations: &[Evaluation],
    study: Option<DiffStudyReport>,
    posterior: Option<Vec<CurveRow>>,
) -> EvalReport {
    let mut metrics = Vec::new();
    if let Some(first) = evaluations.first() {
        for (slot, c) in first.cutoffs.iter().enumerate() {
            let take = |f: fn(&CutoffMetrics) -> f64| evaluations.iter().map(|e| f(&e.cutoffs[slot])).collect();
            metrics.push(MetricRow::new(format!("recall@{}", c.k), take(|m| m.recall)));
        }
        for (slot, c) in first.cutoffs.iter().enumerate() {
            let take = |f: fn(&CutoffMetrics) -> f64| evaluations.iter().map(|e| f(&e.cutoffs[slot])).collect();
            metrics.push(MetricRow::new(format!("ndcg@{}", c.k), take(|m| m.ndcg)));
        }
    }
    let runs = traces
        .iter()
        .enumerate()
        .map(|(run, t)| TraceSummary {
            run,
            evaluations: t.points.len(),
            last_epoch: t.points.last().map_or(0, |p| p.epoch),
            best_epoch: t.best_epoch,
            best_valid_recall: t.best_valid_recall,
            stopped_early: t.stopped_early,
        })
        .collect();
    let study = study.filter(|s| s.clean.is_some() || s.noisy.is_some());
    EvalReport { metrics, runs, diff_study: study, posterior }
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(|| "NA".to_string(), |x| format!("{x:.6}"))
}

impl EvalReport {
    pub fn metric(&self, name: &str) -> Option<&MetricRow> {
        self.metrics.iter().find(|m| m.name == name)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Parse { line: e.line(), message: e.to_string() })
    }

    /// Human-readable table.
    pub fn table(&self) -> String {
        let mut out = String::new();
        if !self.metrics.is_empty() {
            let _ = writeln!(out, "{:<12} {:>10} {:>10} {:>4}", "metric", "mean", "std", "n");
            for m in &self.metrics {
                let _ = writeln!(out, "{:<12} {:>10.4} {:>10.4} {:>4}", m.name, m.mean, m.std, m.values.len());
            }
        }
        if let Some(s) = &self.diff_study {
            let _ = writeln!(out, "\nprediction difference");
            for (name, part) in [("clean", s.clean), ("noisy", s.noisy)] {
                match part {
                    Some(p) => writeln!(out, "  {name:<6} {:.4} over {} pairs", p.mean, p.count),
                    None => writeln!(out, "  {name:<6} absent"),
                }
                .ok();
            }
        }
        if let Some(rows) = &self.posterior {
            let _ = writeln!(out, "\nposterior by bucket");
            for r in rows {
                let _ = writeln!(out, "  {:<8} {:>6} {:>10}", r.bucket.to_string(), r.count, opt(r.mean_posterior));
            }
        }
        out
    }

    /// Long-format TSV: `section, name, statistic, value`.
    pub fn tsv(&self) -> String {
        let mut out = String::from("section\tname\tstatistic\tvalue\n");
        for m in &self.metrics {
            let _ = writeln!(out, "metric\t{}\tmean\t{}", m.name, m.mean);
            let _ = writeln!(out, "metric\t{}\tstd\t{}", m.name, m.std);
            for (run, v) in m.values.iter().enumerate() {
                let _ = writeln!(out, "metric\t{}\trun{run}\t{v}", m.name);
            }
        }
        if let Some(s) = &self.diff_study {
            for (name, part) in [("clean", s.clean), ("noisy", s.noisy)] {
                if let Some(p) = part {
                    let _ = writeln!(out, "diff\t{name}\tmean\t{}", p.mean);
                    let _ = writeln!(out, "diff\t{name}\tcount\t{}", p.count);
                }
            }
        }
        if let Some(rows) = &self.posterior {
            for r in rows {
                let _ = writeln!(out, "posterior\t{}\tcount\t{}", r.bucket, r.count);
                if let Some(m) = r.mean_posterior {
                    let _ = writeln!(out, "posterior\t{}\tmean\t{m}", r.bucket);
                }
            }
        }
        out
    }

    /// Writes `report.json`, `report.tsv` and `report.txt` into `dir`.
    pub fn write_all(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        for (name, body) in [("report.json", self.to_json()), ("report.tsv", self.tsv()), ("report.txt", self.table())] {
            let path = dir.join(name);
            std::fs::write(&path, body).map_err(|e| Error::io(&path, e))?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::interactions::Interaction;

    fn store(users: usize, items: usize, pairs: &[(usize, usize)]) -> InteractionStore {
        InteractionStore::new(users, items, pairs.iter().map(|&(u, i)| Interaction::new(u, i)).collect()).unwrap()
    }

    #[test]
    fn ranked_list_excludes_train_and_breaks_ties_by_id() {
        let train = store(1, 6, &[(0, 2)]);
        let flat = |_: usize, _: usize| 0.0;
        assert_eq!(ranked_list(&flat, &train, 0, 3), vec![0, 1, 3]);
        let by_id = |_: usize, i: usize| i as f64;
        assert_eq!(ranked_list(&by_id, &train, 0, 10), vec![5, 4, 3, 1, 0]);
    }

    #[test]
    fn recall_and_ndcg_examples() {
        let train = store(1, 10, &[(0, 9)]);
        let score = |_: usize, i: usize| -(i as f64);
        let first = store(1, 10, &[(0, 0)]);
        assert_eq!(recall_at_k(&score, &first, &train, 5).unwrap(), 1.0);
        assert_eq!(ndcg_at_k(&score, &first, &train, 5).unwrap(), 1.0);
        let half = store(1, 10, &[(0, 1), (0, 7)]);
        assert_eq!(recall_at_k(&score, &half, &train, 5).unwrap(), 0.5);
        let third = store(1, 10, &[(0, 2)]);
        assert!((ndcg_at_k(&score, &third, &train, 5).unwrap() - 0.5).abs() < 1e-15);
        let outside = store(1, 10, &[(0, 8)]);
        assert_eq!(recall_at_k(&score, &outside, &train, 5).unwrap(), 0.0);
        assert_eq!(ndcg_at_k(&score, &outside, &train, 5).unwrap(), 0.0);
    }

    #[test]
    fn cold_and_saturated_users_skipped() {
        let train = store(3, 2, &[(1, 0), (2, 0), (2, 1)]);
        let test = store(3, 2, &[(0, 1), (1, 1), (2, 0)]);
        let e = evaluate(&|_: usize, _: usize| 0.0, &test, &train, &[1]).unwrap();
        assert_eq!((e.users_evaluated, e.skipped_cold, e.skipped_no_candidates), (1, 1, 1));
        assert_eq!(e.cutoffs[0].recall, 1.0);
    }

    #[test]
    fn identical_models_never_disagree() {
        let m = ModelParams::<f64>::init(crate::Arch::Gmf, 4, 4, 8, 3).unwrap();
        let pairs: Vec<StudyPair> = (0..4).map(|u| StudyPair { user: u, item: 3 - u, clean: u % 2 == 0 }).collect();
        let r = prediction_difference(&m, &m, &pairs).unwrap();
        assert_eq!(r.clean.unwrap().mean, 0.0);
        assert_eq!(r.noisy.unwrap().mean, 0.0);
    }

    #[test]
    fn straddling_threshold_counts_one() {
        let mut a = ModelParams::<f64>::init(crate::Arch::Mf, 1, 1, 1, 0).unwrap();
        a.blocks[0].data[0] = 1.0;
        a.blocks[1].data[0] = (0.6f64 / 0.4).ln();
        let mut b = a.clone();
        b.blocks[1].data[0] = (0.4f64 / 0.6).ln();
        let r = prediction_difference(&a, &b, &[StudyPair { user: 0, item: 0, clean: true }]).unwrap();
        assert_eq!(r.clean.unwrap().mean, 1.0);
        assert!(r.noisy.is_none());
    }

    #[test]
    fn three_runs_use_population_std() {
        let row = MetricRow::new("recall@5", vec![0.1, 0.2, 0.3]);
        assert!((row.mean - 0.2).abs() < 1e-15);
        assert!((row.std - (0.02f64 / 3.0).sqrt()).abs() < 1e-15);
    }

    #[test]
    fn report_round_trips_and_omits_empty_study() {
        let e = Evaluation {
            cutoffs: vec![CutoffMetrics { k: 5, recall: 0.123456789012345, ndcg: 0.1 }, CutoffMetrics { k: 20, recall: 0.4, ndcg: 0.2 }],
            users_evaluated: 3,
            skipped_cold: 0,
            skipped_no_candidates: 0,
        };
        let r = assemble_report(&[], &[e.clone(), e], Some(DiffStudyReport::default()), None);
        assert!(r.diff_study.is_none());
        assert_eq!(r.metrics.len(), 4);
        assert_eq!(EvalReport::from_json(&r.to_json()).unwrap(), r);
        assert!(!r.to_json().contains("diff_study"));
    }
}
