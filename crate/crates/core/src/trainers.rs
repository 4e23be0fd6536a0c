//! Normal, DPI and DVAE training loops with early stopping and tracing.

use std::fmt::Write as _;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evaluation::{assemble_report, evaluate, EvalReport, Evaluation};
use crate::interactions::{epoch_batches, InteractionStore};
use crate::models::{Arch, ModelParams, DEFAULT_DIM};
use crate::objectives::{Mode, ObjectiveConfig};
use crate::optim::{adam_step, add_l2, backward, labeled_pairs, AdamState, LabeledPair, ModelSet, Objective};
use crate::scalar::Scalar;

// Streams used to derive independent seeds from one base seed.
const STREAM_SAMPLER: u64 = 0x5A17;
const STREAM_TARGET: u64 = 1;
const STREAM_AUX: u64 = 2;
const STREAM_H: u64 = 3;
const STREAM_H_PRIME: u64 = 4;

/// Mixes `stream` into `base` (SplitMix64 finalizer).
pub fn derive_seed(base: u64, stream: u64) -> u64 {
    let mut z = base.wrapping_add(stream.wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    /// L2 coefficient on the target model, used as is.
    pub lambda: f64,
    pub alpha: f64,
    pub c1: f64,
    pub c2: f64,
    pub seed_main: u64,
    /// Seed of the DVAE prior; must differ from `seed_main`.
    pub seed_prior: u64,
    /// Stale evaluations tolerated before stopping; `None` runs all epochs.
    pub patience: Option<usize>,
    pub eval_every: usize,
    pub eval_k: usize,
    pub target_arch: Arch,
    /// Architecture of the auxiliary model and both corruption channels.
    pub aux_arch: Arch,
    pub dim: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 200,
            batch_size: 2048,
            lr: 0.001,
            lambda: 0.0,
            alpha: 0.5,
            c1: 1000.0,
            c2: 10.0,
            seed_main: 0,
            seed_prior: 1,
            patience: Some(20),
            eval_every: 1,
            eval_k: 5,
            target_arch: Arch::Gmf,
            aux_arch: Arch::Mf,
            dim: DEFAULT_DIM,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.epochs == 0 || self.batch_size == 0 || self.eval_every == 0 || self.eval_k == 0 || self.dim == 0 {
            return bad("epochs, batch_size, eval_every, eval_k and dim must be positive".into());
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return bad(format!("learning rate {} must be positive", self.lr));
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return bad(format!("lambda {} must be non-negative", self.lambda));
        }
        if !(0.0..=1.0).contains(&self.alpha) {
            return bad(format!("alpha {} outside [0,1]", self.alpha));
        }
        if !(self.c1 > 0.0 && self.c2 > 0.0) {
            return bad(format!("c1 {} and c2 {} must be positive", self.c1, self.c2));
        }
        if self.patience == Some(0) {
            return bad("patience must be positive when set".into());
        }
        Ok(())
    }

    fn objective<T: Scalar>(&self, mode: Mode) -> ObjectiveConfig<T> {
        ObjectiveConfig::new(T::of(self.alpha), T::of(self.c1), T::of(self.c2), mode)
    }
}

/// Which expansion each minibatch uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModeSchedule {
    /// DP on even batch counts, DN on odd ones; the count spans epochs.
    #[default]
    Full,
    DpOnly,
    DnOnly,
}

impl ModeSchedule {
    pub fn mode(self, count: u64) -> Mode {
        match self {
            ModeSchedule::Full if count % 2 == 0 => Mode::Dp,
            ModeSchedule::Full => Mode::Dn,
            ModeSchedule::DpOnly => Mode::Dp,
            ModeSchedule::DnOnly => Mode::Dn,
        }
    }
}

impl std::str::FromStr for ModeSchedule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "full" => Ok(ModeSchedule::Full),
            "dp-only" => Ok(ModeSchedule::DpOnly),
            "dn-only" => Ok(ModeSchedule::DnOnly),
            _ => Err(Error::Config(format!("unknown ablation variant `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TracePoint {
    pub epoch: usize,
    pub valid_recall: f64,
    pub valid_ndcg: f64,
    /// Mean batch objective over the epoch, without the L2 penalty.
    pub loss: f64,
    pub l2: f64,
    /// Metrics on the monitoring set, when one was supplied.
    pub monitor_recall: Option<f64>,
    pub monitor_ndcg: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TrainTrace {
    pub k: usize,
    pub points: Vec<TracePoint>,
    /// Mode of every minibatch, in order; empty for plain cross-entropy.
    pub modes: Vec<Mode>,
    pub best_epoch: usize,
    pub best_valid_recall: f64,
    pub stopped_early: bool,
}

impl TrainTrace {
    /// Long-format TSV with columns `epoch, metric, value`.
    pub fn to_tsv(&self) -> String {
        let k = self.k;
        let mut out = String::from("epoch\tmetric\tvalue\n");
        for p in &self.points {
            let e = p.epoch;
            let _ = writeln!(out, "{e}\tvalid_recall@{k}\t{}", p.valid_recall);
            let _ = writeln!(out, "{e}\tvalid_ndcg@{k}\t{}", p.valid_ndcg);
            let _ = writeln!(out, "{e}\tloss\t{}", p.loss);
            let _ = writeln!(out, "{e}\tl2\t{}", p.l2);
            if let Some(r) = p.monitor_recall {
                let _ = writeln!(out, "{e}\ttest_recall@{k}\t{r}");
            }
            if let Some(n) = p.monitor_ndcg {
                let _ = writeln!(out, "{e}\ttest_ndcg@{k}\t{n}");
            }
        }
        out
    }

    pub fn write_tsv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_tsv()).map_err(|e| Error::io(path, e))
    }

    pub fn monitor_recalls(&self) -> Vec<f64> {
        self.points.iter().filter_map(|p| p.monitor_recall).collect()
    }
}

/// Models and optimizer state of one training procedure.
trait Procedure<T: Scalar>: Clone {
    /// One optimizer step on `pairs`; returns (objective, L2 penalty).
    fn step(&mut self, pairs: &[LabeledPair], mode: Mode) -> Result<(T, T)>;
    fn target(&self) -> &ModelParams<T>;
}

#[derive(Clone)]
struct Member<T> {
    params: ModelParams<T>,
    adam: AdamState<T>,
}

impl<T: Scalar> Member<T> {
    fn new(arch: Arch, train: &InteractionStore, cfg: &TrainConfig, seed: u64) -> Result<Self> {
        let params = ModelParams::init(arch, train.num_users(), train.num_items(), cfg.dim, seed)?;
        let adam = AdamState::new(&params, T::of(cfg.lr));
        Ok(Self { params, adam })
    }
}

#[derive(Clone)]
struct NormalProc<T> {
    f: Member<T>,
    lambda: T,
}

impl<T: Scalar> Procedure<T> for NormalProc<T> {
    fn step(&mut self, pairs: &[LabeledPair], _mode: Mode) -> Result<(T, T)> {
        let mut bundle = backward(&Objective::Bce, &ModelSet::target_only(&self.f.params), pairs)?;
        let l2 = add_l2(&mut bundle.target, &self.f.params, self.lambda);
        adam_step(&mut self.f.params, &bundle.target, &mut self.f.adam)?;
        Ok((bundle.loss, l2))
    }

    fn target(&self) -> &ModelParams<T> {
        &self.f.params
    }
}

#[derive(Clone)]
struct DpiProc<T> {
    f: Member<T>,
    g: Member<T>,
    h: Member<T>,
    h_prime: Member<T>,
    cfg: ObjectiveConfig<T>,
    lambda: T,
}

impl<T: Scalar> Procedure<T> for DpiProc<T> {
    fn step(&mut self, pairs: &[LabeledPair], mode: Mode) -> Result<(T, T)> {
        let models = ModelSet {
            target: &self.f.params,
            aux: Some(&self.g.params),
            h: Some(&self.h.params),
            h_prime: Some(&self.h_prime.params),
        };
        let mut b = backward(&Objective::Dpi(self.cfg.with_mode(mode)), &models, pairs)?;
        let l2 = add_l2(&mut b.target, &self.f.params, self.lambda);
        adam_step(&mut self.f.params, &b.target, &mut self.f.adam)?;
        adam_step(&mut self.g.params, b.aux.as_ref().expect("dpi tape"), &mut self.g.adam)?;
        adam_step(&mut self.h.params, b.h.as_ref().expect("dpi tape"), &mut self.h.adam)?;
        adam_step(&mut self.h_prime.params, b.h_prime.as_ref().expect("dpi tape"), &mut self.h_prime.adam)?;
        Ok((b.loss, l2))
    }

    fn target(&self) -> &ModelParams<T> {
        &self.f.params
    }
}

#[derive(Clone)]
struct DvaeProc<'p, T> {
    f: Member<T>,
    h: Member<T>,
    h_prime: Member<T>,
    prior: &'p ModelParams<T>,
    cfg: ObjectiveConfig<T>,
    lambda: T,
}

impl<T: Scalar> Procedure<T> for DvaeProc<'_, T> {
    fn step(&mut self, pairs: &[LabeledPair], mode: Mode) -> Result<(T, T)> {
        let models = ModelSet {
            target: &self.f.params,
            aux: Some(self.prior),
            h: Some(&self.h.params),
            h_prime: Some(&self.h_prime.params),
        };
        let mut b = backward(&Objective::Dvae(self.cfg.with_mode(mode)), &models, pairs)?;
        debug_assert!(b.aux.is_none());
        let l2 = add_l2(&mut b.target, &self.f.params, self.lambda);
        adam_step(&mut self.f.params, &b.target, &mut self.f.adam)?;
        adam_step(&mut self.h.params, b.h.as_ref().expect("dvae tape"), &mut self.h.adam)?;
        adam_step(&mut self.h_prime.params, b.h_prime.as_ref().expect("dvae tape"), &mut self.h_prime.adam)?;
        Ok((b.loss, l2))
    }

    fn target(&self) -> &ModelParams<T> {
        &self.f.params
    }
}

/// Training, validation and optional monitoring data for one run.
#[derive(Debug, Clone, Copy)]
pub struct TrainData<'a> {
    pub train: &'a InteractionStore,
    pub valid: &'a InteractionStore,
    /// Scored at every evaluation point for the trace only; never used for
    /// model selection.
    pub monitor: Option<&'a InteractionStore>,
}

impl<'a> TrainData<'a> {
    pub fn new(train: &'a InteractionStore, valid: &'a InteractionStore) -> Self {
        Self { train, valid, monitor: None }
    }

    pub fn with_monitor(self, monitor: &'a InteractionStore) -> Self {
        Self { monitor: Some(monitor), ..self }
    }
}

fn drive<T: Scalar, P: Procedure<T>>(
    mut proc: P,
    data: &TrainData<'_>,
    cfg: &TrainConfig,
    seed: u64,
    schedule: Option<ModeSchedule>,
) -> Result<(P, TrainTrace)> {
    if data.valid.is_empty() {
        return Err(Error::Data("validation split is empty".into()));
    }
    if data.train.is_empty() {
        return Err(Error::EmptyStore);
    }
    let k = cfg.eval_k;
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, STREAM_SAMPLER));
    let mut trace = TrainTrace { k, best_valid_recall: f64::NEG_INFINITY, ..TrainTrace::default() };
    let mut best = proc.clone();
    let mut stale = 0usize;
    let mut count = 0u64;
    for epoch in 1..=cfg.epochs {
        let batches = epoch_batches(data.train, cfg.batch_size, &mut rng)?;
        let (mut loss_sum, mut l2_sum) = (0.0, 0.0);
        for (b, batch) in batches.iter().enumerate() {
            let mode = schedule.map_or(Mode::Dp, |s| s.mode(count));
            if schedule.is_some() {
                trace.modes.push(mode);
            }
            count += 1;
            let pairs = labeled_pairs(batch);
            let (loss, l2) = proc.step(&pairs, mode).map_err(|e| match e {
                Error::NonFiniteGradient { block } => {
                    Error::Divergence { epoch, batch: b, detail: format!("non-finite gradient in {block}") }
                }
                other => other,
            })?;
            let (loss, l2) = (loss.as_f64(), l2.as_f64());
            if !(loss.is_finite() && l2.is_finite()) {
                return Err(Error::Divergence { epoch, batch: b, detail: format!("loss {loss}, l2 {l2}") });
            }
            if !proc.target().all_finite() {
                return Err(Error::Divergence { epoch, batch: b, detail: "non-finite target parameters".into() });
            }
            loss_sum += loss;
            l2_sum += l2;
        }
        if epoch % cfg.eval_every != 0 && epoch != cfg.epochs {
            continue;
        }
        let n = batches.len().max(1) as f64;
        let valid = evaluate(proc.target(), data.valid, data.train, &[k])?.cutoffs[0];
        let monitor = data.monitor.map(|m| evaluate(proc.target(), m, data.train, &[k])).transpose()?;
        trace.points.push(TracePoint {
            epoch,
            valid_recall: valid.recall,
            valid_ndcg: valid.ndcg,
            loss: loss_sum / n,
            l2: l2_sum / n,
            monitor_recall: monitor.as_ref().map(|m| m.cutoffs[0].recall),
            monitor_ndcg: monitor.as_ref().map(|m| m.cutoffs[0].ndcg),
        });
        log::debug!("epoch {epoch}: loss {:.5} valid recall@{k} {:.4}", loss_sum / n, valid.recall);
        if valid.recall > trace.best_valid_recall {
            trace.best_valid_recall = valid.recall;
            trace.best_epoch = epoch;
            best = proc.clone();
            stale = 0;
        } else {
            stale += 1;
            if cfg.patience.is_some_and(|p| stale >= p) {
                trace.stopped_early = true;
                break;
            }
        }
    }
    Ok((best, trace))
}

/// Cross-entropy training of the target architecture. Returns the
/// best-validation checkpoint.
pub fn train_normal<T: Scalar>(data: &TrainData<'_>, cfg: &TrainConfig) -> Result<(ModelParams<T>, TrainTrace)> {
    cfg.validate()?;
    let seed = cfg.seed_main;
    let proc = NormalProc {
        f: Member::new(cfg.target_arch, data.train, cfg, derive_seed(seed, STREAM_TARGET))?,
        lambda: T::of(cfg.lambda),
    };
    let (best, trace) = drive(proc, data, cfg, seed, None)?;
    Ok((best.f.params, trace))
}

#[derive(Debug, Clone, PartialEq)]
pub struct DpiOutcome<T> {
    pub f: ModelParams<T>,
    pub g: ModelParams<T>,
    pub h: ModelParams<T>,
    pub h_prime: ModelParams<T>,
    pub trace: TrainTrace,
}

/// Co-trains the target `f`, auxiliary `g` and corruption channels `h`, `h'`.
pub fn train_dpi<T: Scalar>(data: &TrainData<'_>, cfg: &TrainConfig, schedule: ModeSchedule) -> Result<DpiOutcome<T>> {
    cfg.validate()?;
    let seed = cfg.seed_main;
    let proc = DpiProc {
        f: Member::new(cfg.target_arch, data.train, cfg, derive_seed(seed, STREAM_TARGET))?,
        g: Member::new(cfg.aux_arch, data.train, cfg, derive_seed(seed, STREAM_AUX))?,
        h: Member::new(cfg.aux_arch, data.train, cfg, derive_seed(seed, STREAM_H))?,
        h_prime: Member::new(cfg.aux_arch, data.train, cfg, derive_seed(seed, STREAM_H_PRIME))?,
        cfg: cfg.objective(Mode::Dp),
        lambda: T::of(cfg.lambda),
    };
    let (best, trace) = drive(proc, data, cfg, seed, Some(schedule))?;
    Ok(DpiOutcome { f: best.f.params, g: best.g.params, h: best.h.params, h_prime: best.h_prime.params, trace })
}

#[derive(Debug, Clone, PartialEq)]
pub struct DvaeOutcome<T> {
    pub f: ModelParams<T>,
    pub h: ModelParams<T>,
    pub h_prime: ModelParams<T>,
    pub prior: ModelParams<T>,
    pub prior_trace: TrainTrace,
    pub trace: TrainTrace,
    /// Prior fingerprint after pretraining and after the second phase.
    pub prior_hash_before: String,
    pub prior_hash_after: String,
}

/// Pretrains a prior with [`train_normal`] under `seed_prior`, freezes it, then
/// trains a fresh encoder and corruption channels under `seed_main`.
pub fn train_dvae<T: Scalar>(data: &TrainData<'_>, cfg: &TrainConfig, schedule: ModeSchedule) -> Result<DvaeOutcome<T>> {
    cfg.validate()?;
    if cfg.seed_prior == cfg.seed_main {
        return Err(Error::Config(format!("prior seed and main seed are both {}", cfg.seed_main)));
    }
    log::info!("dvae phase 1: pretraining prior with seed {}", cfg.seed_prior);
    let prior_cfg = TrainConfig { seed_main: cfg.seed_prior, ..cfg.clone() };
    let prior_data = TrainData { monitor: None, ..*data };
    let (prior, prior_trace) = train_normal::<T>(&prior_data, &prior_cfg)?;
    let prior_hash_before = prior.fingerprint();
    log::info!("dvae phase 2: prior frozen at {prior_hash_before}");
    let seed = cfg.seed_main;
    let proc = DvaeProc {
        f: Member::new(cfg.target_arch, data.train, cfg, derive_seed(seed, STREAM_TARGET))?,
        h: Member::new(cfg.aux_arch, data.train, cfg, derive_seed(seed, STREAM_H))?,
        h_prime: Member::new(cfg.aux_arch, data.train, cfg, derive_seed(seed, STREAM_H_PRIME))?,
        prior: &prior,
        cfg: cfg.objective(Mode::Dp),
        lambda: T::of(cfg.lambda),
    };
    let (best, trace) = drive(proc, data, cfg, seed, Some(schedule))?;
    let (f, h, h_prime) = (best.f.params, best.h.params, best.h_prime.params);
    let prior_hash_after = prior.fingerprint();
    log::info!("dvae phase 2 done: prior at {prior_hash_after}");
    Ok(DvaeOutcome { f, h, h_prime, prior, prior_trace, trace, prior_hash_before, prior_hash_after })
}

/// Trains DPI under `schedule` once per seed and reports clean-test metrics.
pub fn run_ablation<T: Scalar>(
    data: &TrainData<'_>,
    test: &InteractionStore,
    cfg: &TrainConfig,
    schedule: ModeSchedule,
    seeds: &[u64],
    ks: &[usize],
) -> Result<(EvalReport, Vec<TrainTrace>)> {
    let mut traces = Vec::with_capacity(seeds.len());
    let mut evals: Vec<Evaluation> = Vec::with_capacity(seeds.len());
    for &seed in seeds {
        let run_cfg = TrainConfig { seed_main: seed, ..cfg.clone() };
        let out = train_dpi::<T>(data, &run_cfg, schedule)?;
        evals.push(evaluate(&out.f, test, data.train, ks)?);
        traces.push(out.trace);
    }
    Ok((assemble_report(&traces, &evals, None, None), traces))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::interactions::{split, synthesize, Interaction, SplitSpec, SyntheticSpec};

    fn toy() -> InteractionStore {
        InteractionStore::new(2, 4, vec![Interaction::new(0, 0), Interaction::new(0, 1), Interaction::new(1, 2)]).unwrap()
    }

    fn quick(epochs: usize) -> TrainConfig {
        TrainConfig { epochs, dim: 4, batch_size: 2, lr: 0.01, patience: None, ..TrainConfig::default() }
    }

    #[test]
    fn one_epoch_smoke() {
        let s = toy();
        let data = TrainData::new(&s, &s);
        let (m, trace) = train_normal::<f64>(&data, &quick(1)).unwrap();
        let init = ModelParams::<f64>::init(Arch::Gmf, 2, 4, 4, derive_seed(0, STREAM_TARGET)).unwrap();
        assert_ne!(m, init);
        assert!(trace.points[0].loss.is_finite());
        assert_eq!(trace.points.len(), 1);
    }

    #[test]
    fn empty_validation_rejected() {
        let s = toy();
        let empty = s.subset(Vec::new()).unwrap();
        assert!(matches!(train_normal::<f64>(&TrainData::new(&s, &empty), &quick(1)), Err(Error::Data(_))));
    }

    #[test]
    fn alternation_spans_epochs() {
        let s = toy();
        let out = train_dpi::<f64>(&TrainData::new(&s, &s), &quick(2), ModeSchedule::Full).unwrap();
        assert_eq!(out.trace.modes, vec![Mode::Dp, Mode::Dn, Mode::Dp, Mode::Dn]);
        let dp = train_dpi::<f64>(&TrainData::new(&s, &s), &quick(2), ModeSchedule::DpOnly).unwrap();
        assert!(dp.trace.modes.iter().all(|&m| m == Mode::Dp));
    }

    #[test]
    fn huge_constants_stay_finite() {
        let s = toy();
        let cfg = TrainConfig { c1: 1e6, c2: 1e6, ..quick(3) };
        let out = train_dpi::<f64>(&TrainData::new(&s, &s), &cfg, ModeSchedule::Full).unwrap();
        assert!(out.trace.points.iter().all(|p| p.loss.is_finite()));
        assert!(out.f.all_finite());
    }

    #[test]
    fn dvae_seed_collision_rejected() {
        let s = toy();
        let cfg = TrainConfig { seed_prior: 0, seed_main: 0, ..quick(1) };
        assert!(matches!(train_dvae::<f64>(&TrainData::new(&s, &s), &cfg, ModeSchedule::Full), Err(Error::Config(_))));
    }

    #[test]
    fn dvae_freezes_prior_and_reseeds_encoder() {
        let s = toy();
        let out = train_dvae::<f64>(&TrainData::new(&s, &s), &quick(2), ModeSchedule::Full).unwrap();
        assert_eq!(out.prior_hash_before, out.prior_hash_after);
        let fresh = ModelParams::<f64>::init(Arch::Gmf, 2, 4, 4, derive_seed(0, STREAM_TARGET)).unwrap();
        let gap = (0..2)
            .flat_map(|u| (0..4).map(move |i| (u, i)))
            .map(|(u, i)| (fresh.forward(u, i).unwrap().get() - out.prior.forward(u, i).unwrap().get()).abs())
            .fold(0.0, f64::max);
        assert!(gap > 0.0);
    }

    #[test]
    fn patience_counts_stale_evaluations() {
        // A validation set the training signal pushes down: train on item 0, validate on it too
        // while L2 is huge makes recall stay flat, which is stale every time after the first.
        let s = toy();
        let cfg = TrainConfig { patience: Some(2), epochs: 50, ..quick(50) };
        let (_, trace) = train_normal::<f64>(&TrainData::new(&s, &s), &cfg).unwrap();
        assert!(trace.stopped_early);
        assert_eq!(trace.points.len(), 3);
        assert_eq!(trace.best_epoch, 1);
    }

    #[test]
    fn beats_random_ranking_without_noise() {
        let spec = SyntheticSpec { noisy_pos_rate: 0.0, noisy_neg_rate: 0.0, density: 0.05, num_users: 200, num_items: 100, ..Default::default() };
        let store = synthesize(&spec).unwrap();
        let (train, valid, _) = split(&store, &SplitSpec::default()).unwrap();
        let cfg = TrainConfig { epochs: 60, batch_size: 64, dim: 16, patience: None, ..TrainConfig::default() };
        let (m, _) = train_normal::<f64>(&TrainData::new(&train, &valid), &cfg).unwrap();
        let r = crate::evaluation::recall_at_k(&m, &valid, &train, 5).unwrap();
        assert!(r > 5.0 / 100.0, "recall {r}");
    }

    #[test]
    fn identical_configs_are_bit_identical() {
        let s = toy();
        let a = train_dpi::<f64>(&TrainData::new(&s, &s), &quick(3), ModeSchedule::Full).unwrap();
        let b = train_dpi::<f64>(&TrainData::new(&s, &s), &quick(3), ModeSchedule::Full).unwrap();
        assert_eq!(a.f.to_bytes(), b.f.to_bytes());
        assert_eq!(a.trace, b.trace);
    }
}
