//! The subcommands, callable as library functions.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use recdenoise::evaluation::{
    assemble_report, evaluate, prediction_difference, study_pairs, DiffStudyReport, EvalReport, Evaluation,
    PartitionDiff, StudyPair,
};
use recdenoise::interactions::{
    filter_clean, load_truth, load_tsv, split, synthesize, truth_path, write_truth, write_tsv,
};
use recdenoise::posterior::{
    curve_tsv, posterior_dpi, posterior_dvae, rating_curve, Bucket, BucketScheme, CurveRow, PosteriorRecord,
};
use recdenoise::trainers::{
    run_ablation, train_dpi, train_dvae, train_normal, ModeSchedule, TrainConfig, TrainData, TrainTrace,
};
use recdenoise::{InteractionStore, ModelParams, Scalar};

use crate::config::{ExperimentConfig, GridPoint, Method, PairSet, Precision};
use crate::error::{CliError, CliResult};

/// Calls `$f::<T>` with `T` set by the configured precision.
macro_rules! with_precision {
    ($precision:expr, $f:ident($($arg:expr),*)) => {
        match $precision {
            Precision::F32 => $f::<f32>($($arg),*),
            Precision::F64 => $f::<f64>($($arg),*),
        }
    };
}

fn create_dir(path: &Path) -> CliResult<()> {
    std::fs::create_dir_all(path).map_err(|e| CliError::Io { path: path.to_path_buf(), source: e })
}

fn write_file(path: &Path, body: &str) -> CliResult<()> {
    std::fs::write(path, body).map_err(|e| CliError::Io { path: path.to_path_buf(), source: e })
}

fn seed_dir(run: &Path, seed: u64) -> PathBuf {
    run.join(format!("seed-{seed}"))
}

/// The observed data and its splits.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub full: InteractionStore,
    pub train: InteractionStore,
    pub valid: InteractionStore,
    pub test: InteractionStore,
    pub test_clean: InteractionStore,
}

impl Prepared {
    pub fn data(&self) -> TrainData<'_> {
        TrainData::new(&self.train, &self.valid)
    }

    pub fn pairs(&self, set: PairSet) -> CliResult<Vec<StudyPair>> {
        let mut out = Vec::new();
        if matches!(set, PairSet::Train | PairSet::All) {
            out.extend(study_pairs(&self.train)?);
        }
        if matches!(set, PairSet::HeldOut | PairSet::All) {
            out.extend(study_pairs(&self.valid)?);
            out.extend(study_pairs(&self.test)?);
        }
        Ok(out)
    }

    fn store_of(&self, set: PairSet) -> &InteractionStore {
        match set {
            PairSet::Train => &self.train,
            _ => &self.full,
        }
    }
}

pub fn load_store(cfg: &ExperimentConfig) -> CliResult<InteractionStore> {
    match (&cfg.data.path, &cfg.data.synthetic) {
        (Some(path), _) => {
            let store = load_tsv(path, &cfg.data.columns)?;
            let truth = truth_path(path);
            if truth.exists() {
                Ok(load_truth(&store, truth)?)
            } else {
                Ok(store)
            }
        }
        (None, Some(spec)) => Ok(synthesize(spec)?),
        (None, None) => Err(CliError::Config("no data source".into())),
    }
}

pub fn prepare(cfg: &ExperimentConfig) -> CliResult<Prepared> {
    let full = load_store(cfg)?;
    let (train, valid, test) = split(&full, &cfg.split)?;
    let test_clean = filter_clean(&test, &cfg.clean)?;
    log::info!(
        "data: {} users, {} items; train {} valid {} test {} (clean {})",
        full.num_users(),
        full.num_items(),
        train.len(),
        valid.len(),
        test.len(),
        test_clean.len()
    );
    Ok(Prepared { full, train, valid, test, test_clean })
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SynthSummary {
    pub data: PathBuf,
    pub truth: PathBuf,
    pub observed: usize,
    pub noisy: usize,
    pub hidden_positives: usize,
}

impl SynthSummary {
    pub fn noisy_fraction(&self) -> f64 {
        self.noisy as f64 / self.observed.max(1) as f64
    }
}

/// Generates the configured synthetic set into `out`.
pub fn cmd_synth(cfg: &ExperimentConfig, out: &Path) -> CliResult<SynthSummary> {
    let spec = cfg
        .data
        .synthetic
        .as_ref()
        .ok_or_else(|| CliError::Config("synth needs a [data.synthetic] section".into()))?;
    let store = synthesize(spec)?;
    create_dir(out)?;
    let data = out.join("data.tsv");
    let truth = truth_path(&data);
    write_tsv(&store, &data)?;
    write_truth(&store, &truth)?;
    let noisy = store.interactions().iter().filter(|it| it.truth == Some(false)).count();
    Ok(SynthSummary { data, truth, observed: store.len(), noisy, hidden_positives: store.hidden_positives().len() })
}

/// Models produced by one training run.
#[derive(Debug, Clone)]
pub struct RunModels<T> {
    pub f: ModelParams<T>,
    pub g: Option<ModelParams<T>>,
    pub h: Option<ModelParams<T>>,
    pub h_prime: Option<ModelParams<T>>,
    pub prior: Option<ModelParams<T>>,
    pub trace: TrainTrace,
    pub prior_trace: Option<TrainTrace>,
    pub log: Vec<String>,
}

/// Trains `method` with `tc` on `data`.
pub fn train_method<T: Scalar>(
    method: Method,
    schedule: ModeSchedule,
    data: &TrainData<'_>,
    tc: &TrainConfig,
) -> CliResult<RunModels<T>> {
    Ok(match method {
        Method::Normal => {
            let (f, trace) = train_normal::<T>(data, tc)?;
            RunModels { f, g: None, h: None, h_prime: None, prior: None, trace, prior_trace: None, log: Vec::new() }
        }
        Method::Dpi => {
            let o = train_dpi::<T>(data, tc, schedule)?;
            RunModels {
                f: o.f,
                g: Some(o.g),
                h: Some(o.h),
                h_prime: Some(o.h_prime),
                prior: None,
                trace: o.trace,
                prior_trace: None,
                log: Vec::new(),
            }
        }
        Method::Dvae => {
            let o = train_dvae::<T>(data, tc, schedule)?;
            let log = vec![
                format!("phase 1: prior trained with seed {} for {} evaluations", tc.seed_prior, o.prior_trace.points.len()),
                format!("phase 1: prior frozen, sha256 {}", o.prior_hash_before),
                format!("phase 2: encoder and channels trained with seed {}", tc.seed_main),
                format!("phase 2: prior after training, sha256 {}", o.prior_hash_after),
            ];
            RunModels {
                f: o.f,
                g: None,
                h: Some(o.h),
                h_prime: Some(o.h_prime),
                prior: Some(o.prior),
                trace: o.trace,
                prior_trace: Some(o.prior_trace),
                log,
            }
        }
    })
}

impl<T: Scalar> RunModels<T> {
    pub fn save(&self, dir: &Path) -> CliResult<()> {
        create_dir(dir)?;
        self.f.save(dir.join("f.bin"))?;
        for (name, m) in [("g.bin", &self.g), ("h.bin", &self.h), ("h_prime.bin", &self.h_prime), ("prior.bin", &self.prior)] {
            if let Some(m) = m {
                m.save(dir.join(name))?;
            }
        }
        self.trace.write_tsv(dir.join("trace.tsv"))?;
        if !self.trace.modes.is_empty() {
            let modes: String = self.trace.modes.iter().enumerate().map(|(i, m)| format!("{i}\t{m}\n")).collect();
            write_file(&dir.join("modes.tsv"), &format!("batch\tmode\n{modes}"))?;
        }
        if let Some(t) = &self.prior_trace {
            t.write_tsv(dir.join("prior_trace.tsv"))?;
        }
        if !self.log.is_empty() {
            write_file(&dir.join("dvae.log"), &(self.log.join("\n") + "\n"))?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct TrainSummary {
    /// One directory per grid point.
    pub runs: Vec<PathBuf>,
    pub reports: Vec<EvalReport>,
}

fn grid_run<T: Scalar>(cfg: &ExperimentConfig, prep: &Prepared, point: GridPoint, dir: &Path) -> CliResult<EvalReport> {
    create_dir(dir)?;
    let pinned = ExperimentConfig { train: cfg.train.pinned(point), output: Some(dir.to_path_buf()), ..cfg.clone() };
    write_file(&dir.join("config.toml"), &pinned.to_toml())?;
    let data = prep.data();
    let mut traces = Vec::new();
    let mut evals = Vec::new();
    for &seed in &cfg.seeds {
        let tc = cfg.train.resolve(point, seed, prep.train.num_users());
        log::info!("training {:?} seed {seed} (c1 {}, c2 {}, alpha {}, lambda {})", cfg.method, tc.c1, tc.c2, tc.alpha, tc.lambda);
        let models = train_method::<T>(cfg.method, cfg.ablation, &data, &tc)?;
        models.save(&seed_dir(dir, seed))?;
        evals.push(evaluate(&models.f, &prep.test_clean, &prep.train, &cfg.ks)?);
        traces.push(models.trace);
    }
    let report = assemble_report(&traces, &evals, None, None);
    report.write_all(dir)?;
    Ok(report)
}

fn train_typed<T: Scalar>(cfg: &ExperimentConfig) -> CliResult<TrainSummary> {
    let prep = prepare(cfg)?;
    let out = cfg.output_dir();
    create_dir(&out)?;
    write_file(&out.join("config.toml"), &cfg.to_toml())?;
    let grid = cfg.train.grid();
    let mut summary = TrainSummary { runs: Vec::new(), reports: Vec::new() };
    if grid.len() == 1 {
        summary.reports.push(grid_run::<T>(cfg, &prep, grid[0], &out)?);
        summary.runs.push(out);
        return Ok(summary);
    }
    let k = cfg.ks[0];
    let mut table = format!("run\tlambda\talpha\tc1\tc2\trecall@{k}\tndcg@{k}\n");
    for (n, &point) in grid.iter().enumerate() {
        let dir = out.join(format!("grid-{n:03}"));
        let report = grid_run::<T>(cfg, &prep, point, &dir)?;
        let mean = |name: String| report.metric(&name).map_or(f64::NAN, |m| m.mean);
        let _ = writeln!(
            table,
            "{n:03}\t{}\t{}\t{}\t{}\t{}\t{}",
            point.lambda,
            point.alpha,
            point.c1,
            point.c2,
            mean(format!("recall@{k}")),
            mean(format!("ndcg@{k}"))
        );
        summary.runs.push(dir);
        summary.reports.push(report);
    }
    write_file(&out.join("grid.tsv"), &table)?;
    Ok(summary)
}

/// Trains every grid point and seed, writing checkpoints, traces and reports.
pub fn cmd_train(cfg: &ExperimentConfig) -> CliResult<TrainSummary> {
    with_precision!(cfg.precision, train_typed(cfg))
}

fn load_model<T: Scalar>(path: &Path, cfg: &ExperimentConfig, role: &str) -> CliResult<ModelParams<T>> {
    let m = ModelParams::<T>::load(path)?;
    let expected = if role == "f" || role == "prior" { cfg.train.target_arch } else { cfg.train.aux_arch };
    if m.arch != expected {
        return Err(CliError::Config(format!(
            "{} holds a {} model but the config expects {expected}",
            path.display(),
            m.arch
        )));
    }
    Ok(m)
}

fn diff_between<T: Scalar>(models: &[ModelParams<T>], pairs: &[StudyPair]) -> CliResult<Vec<DiffStudyReport>> {
    models.windows(2).map(|w| Ok(prediction_difference(&w[0], &w[1], pairs)?)).collect()
}

/// Averages partition means over several studies.
pub fn pool_studies(studies: &[DiffStudyReport]) -> DiffStudyReport {
    let pool = |pick: fn(&DiffStudyReport) -> Option<PartitionDiff>| {
        let parts: Vec<PartitionDiff> = studies.iter().filter_map(pick).collect();
        (!parts.is_empty()).then(|| PartitionDiff {
            mean: parts.iter().map(|p| p.mean).sum::<f64>() / parts.len() as f64,
            count: parts.iter().map(|p| p.count).sum(),
        })
    };
    DiffStudyReport { clean: pool(|s| s.clean), noisy: pool(|s| s.noisy) }
}

fn buckets(cfg: &ExperimentConfig) -> Vec<Bucket> {
    match (&cfg.posterior.buckets, cfg.posterior.scheme) {
        (Some(b), BucketScheme::Rating) => b.iter().map(|&r| Bucket::Rating(r)).collect(),
        (_, scheme) => scheme.buckets(),
    }
}

fn posterior_records<T: Scalar>(
    cfg: &ExperimentConfig,
    prep: &Prepared,
    dir: &Path,
) -> CliResult<Vec<PosteriorRecord>> {
    let f = load_model::<T>(&dir.join("f.bin"), cfg, "f")?;
    let store = prep.store_of(cfg.posterior.pairs);
    let pairs = prep.pairs_for_posterior(cfg.posterior.pairs);
    let scheme = cfg.posterior.scheme;
    match cfg.method {
        Method::Dpi => {
            let h = load_model::<T>(&dir.join("h.bin"), cfg, "h")?;
            let hp = load_model::<T>(&dir.join("h_prime.bin"), cfg, "h_prime")?;
            pairs.iter().map(|&(u, i)| Ok(posterior_dpi(&f, &h, &hp, store, u, i, scheme)?)).collect()
        }
        Method::Dvae => pairs.iter().map(|&(u, i)| Ok(posterior_dvae(&f, store, u, i, scheme)?)).collect(),
        Method::Normal => Err(CliError::Config("posteriors need a dpi or dvae run".into())),
    }
}

impl Prepared {
    fn pairs_for_posterior(&self, set: PairSet) -> Vec<(usize, usize)> {
        let mut out: Vec<(usize, usize)> = Vec::new();
        if matches!(set, PairSet::Train | PairSet::All) {
            out.extend(self.train.interactions().iter().map(|it| (it.user, it.item)));
        }
        if matches!(set, PairSet::HeldOut | PairSet::All) {
            out.extend(self.valid.interactions().iter().map(|it| (it.user, it.item)));
            out.extend(self.test.interactions().iter().map(|it| (it.user, it.item)));
        }
        out
    }
}

/// Options of the `eval` command.
#[derive(Debug, Clone, Default)]
pub struct EvalOptions {
    /// Evaluate this checkpoint instead of the run's per-seed models.
    pub checkpoint: Option<PathBuf>,
    pub diff_study: bool,
    pub posterior: bool,
}

fn eval_typed<T: Scalar>(cfg: &ExperimentConfig, run: &Path, opts: &EvalOptions) -> CliResult<EvalReport> {
    let prep = prepare(cfg)?;
    let models: Vec<ModelParams<T>> = match &opts.checkpoint {
        Some(p) => vec![load_model::<T>(p, cfg, "f")?],
        None => cfg
            .seeds
            .iter()
            .map(|&s| load_model::<T>(&seed_dir(run, s).join("f.bin"), cfg, "f"))
            .collect::<CliResult<_>>()?,
    };
    let evals: Vec<Evaluation> =
        models.iter().map(|m| evaluate(m, &prep.test_clean, &prep.train, &cfg.ks)).collect::<Result<_, _>>()?;
    let study = if opts.diff_study {
        let pairs = prep.pairs(cfg.study.pairs)?;
        Some(pool_studies(&diff_between(&models, &pairs)?))
    } else {
        None
    };
    let curve = if opts.posterior {
        let mut records = Vec::new();
        for &s in &cfg.seeds {
            records.extend(posterior_records::<T>(cfg, &prep, &seed_dir(run, s))?);
        }
        Some(rating_curve(&records, &buckets(cfg)))
    } else {
        None
    };
    let report = assemble_report(&[], &evals, study, curve);
    let dir = run.join("eval");
    create_dir(&dir)?;
    report.write_all(&dir)?;
    Ok(report)
}

/// Evaluates the checkpoints of a finished run on the clean test set.
pub fn cmd_eval(cfg: &ExperimentConfig, run: &Path, opts: &EvalOptions) -> CliResult<EvalReport> {
    with_precision!(cfg.precision, eval_typed(cfg, run, opts))
}

#[derive(Debug, Clone)]
pub struct DiffStudySummary {
    /// `(seed, partner seed, study)` per seed.
    pub pairs: Vec<(u64, u64, DiffStudyReport)>,
    pub report: EvalReport,
}

fn diff_typed<T: Scalar>(cfg: &ExperimentConfig) -> CliResult<DiffStudySummary> {
    let prep = prepare(cfg)?;
    let out = cfg.output_dir();
    create_dir(&out)?;
    write_file(&out.join("config.toml"), &cfg.to_toml())?;
    let pairs = prep.pairs(cfg.study.pairs)?;
    let grid = cfg.train.grid();
    let point = grid[0];
    let data = prep.data();
    let mut rows = Vec::new();
    let mut table = String::from("seed_a\tseed_b\tclean_mean\tclean_count\tnoisy_mean\tnoisy_count\n");
    for &seed in &cfg.seeds {
        let partner = seed.wrapping_add(cfg.study.partner_offset);
        let train_one = |s: u64| -> CliResult<ModelParams<T>> {
            let mut tc = TrainConfig { target_arch: cfg.study.arch, ..cfg.train.resolve(point, s, prep.train.num_users()) };
            if !cfg.study.early_stopping {
                tc.patience = None;
            }
            Ok(train_normal::<T>(&data, &tc)?.0)
        };
        let (a, b) = (train_one(seed)?, train_one(partner)?);
        let study = prediction_difference(&a, &b, &pairs)?;
        let cell = |p: Option<PartitionDiff>| p.map_or(("NA".to_string(), 0), |p| (p.mean.to_string(), p.count));
        let ((cm, cn), (nm, nn)) = (cell(study.clean), cell(study.noisy));
        let _ = writeln!(table, "{seed}\t{partner}\t{cm}\t{cn}\t{nm}\t{nn}");
        rows.push((seed, partner, study));
    }
    write_file(&out.join("diff_study.tsv"), &table)?;
    let studies: Vec<DiffStudyReport> = rows.iter().map(|r| r.2).collect();
    let report = assemble_report(&[], &[], Some(pool_studies(&studies)), None);
    report.write_all(&out)?;
    Ok(DiffStudySummary { pairs: rows, report })
}

/// Trains two cross-entropy models per seed and measures their disagreement.
pub fn cmd_diff_study(cfg: &ExperimentConfig) -> CliResult<DiffStudySummary> {
    with_precision!(cfg.precision, diff_typed(cfg))
}

#[derive(Debug, Clone)]
pub struct PosteriorSummary {
    pub per_seed: Vec<(u64, Vec<CurveRow>)>,
    pub pooled: Vec<CurveRow>,
}

fn posterior_typed<T: Scalar>(cfg: &ExperimentConfig, run: &Path) -> CliResult<PosteriorSummary> {
    let prep = prepare(cfg)?;
    let b = buckets(cfg);
    let mut all = Vec::new();
    let mut per_seed = Vec::new();
    for &s in &cfg.seeds {
        let dir = seed_dir(run, s);
        let records = posterior_records::<T>(cfg, &prep, &dir)?;
        let curve = rating_curve(&records, &b);
        write_file(&dir.join("posterior.tsv"), &curve_tsv(&curve))?;
        per_seed.push((s, curve));
        all.extend(records);
    }
    let pooled = rating_curve(&all, &b);
    write_file(&run.join("posterior.tsv"), &curve_tsv(&pooled))?;
    Ok(PosteriorSummary { per_seed, pooled })
}

/// Computes posterior curves from a finished `dpi` or `dvae` run.
pub fn cmd_posterior(cfg: &ExperimentConfig, run: &Path) -> CliResult<PosteriorSummary> {
    with_precision!(cfg.precision, posterior_typed(cfg, run))
}

fn ablation_typed<T: Scalar>(cfg: &ExperimentConfig, variants: &[ModeSchedule]) -> CliResult<Vec<(ModeSchedule, EvalReport)>> {
    let prep = prepare(cfg)?;
    let out = cfg.output_dir();
    create_dir(&out)?;
    write_file(&out.join("config.toml"), &cfg.to_toml())?;
    let point = cfg.train.grid()[0];
    let tc = cfg.train.resolve(point, cfg.seeds[0], prep.train.num_users());
    let mut results = Vec::new();
    let mut table = String::from("variant\tmetric\tmean\tstd\n");
    for &v in variants {
        let name = variant_name(v);
        log::info!("ablation variant {name}");
        let (report, traces) = run_ablation::<T>(&prep.data(), &prep.test_clean, &tc, v, &cfg.seeds, &cfg.ks)?;
        let dir = out.join(format!("ablation-{name}"));
        create_dir(&dir)?;
        for (seed, t) in cfg.seeds.iter().zip(&traces) {
            t.write_tsv(dir.join(format!("trace-seed-{seed}.tsv")))?;
        }
        report.write_all(&dir)?;
        for m in &report.metrics {
            let _ = writeln!(table, "{name}\t{}\t{}\t{}", m.name, m.mean, m.std);
        }
        results.push((v, report));
    }
    write_file(&out.join("ablation.tsv"), &table)?;
    Ok(results)
}

pub fn variant_name(v: ModeSchedule) -> &'static str {
    match v {
        ModeSchedule::Full => "full",
        ModeSchedule::DpOnly => "dp-only",
        ModeSchedule::DnOnly => "dn-only",
    }
}

/// Trains DPI under each schedule variant over all seeds.
pub fn cmd_ablation(cfg: &ExperimentConfig, variants: &[ModeSchedule]) -> CliResult<Vec<(ModeSchedule, EvalReport)>> {
    with_precision!(cfg.precision, ablation_typed(cfg, variants))
}
