use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use recdenoise::trainers::ModeSchedule;
use recdenoise_cli::commands::{self, EvalOptions};
use recdenoise_cli::error::exit;
use recdenoise_cli::{CliResult, ExperimentConfig};

#[derive(Parser)]
#[command(name = "recdenoise", version, about = "Denoising implicit-feedback recommenders")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// Experiment file (TOML). Defaults are used for anything left out.
    #[arg(short, long)]
    config: Option<PathBuf>,
    /// Output directory; overrides `output` and $RECDENOISE_OUT.
    #[arg(short, long)]
    out: Option<PathBuf>,
    /// Override a config field, e.g. `--set train.c1=100` or `--set seeds=[0,1,2]`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    #[arg(long, value_name = "NAME")]
    method: Option<String>,
    #[arg(long, value_delimiter = ',')]
    seeds: Option<Vec<u64>>,
    #[arg(long)]
    epochs: Option<usize>,
}

impl Common {
    fn load(&self) -> CliResult<ExperimentConfig> {
        let mut overrides = Vec::new();
        if let Some(m) = &self.method {
            overrides.push(format!("method=\"{m}\""));
        }
        if let Some(s) = &self.seeds {
            let list: Vec<String> = s.iter().map(u64::to_string).collect();
            overrides.push(format!("seeds=[{}]", list.join(",")));
        }
        if let Some(e) = self.epochs {
            overrides.push(format!("train.epochs={e}"));
        }
        if let Some(o) = &self.out {
            overrides.push(format!("output={:?}", o.display().to_string()));
        }
        overrides.extend(self.set.iter().cloned());
        match &self.config {
            Some(path) => ExperimentConfig::load(path, &overrides),
            None => ExperimentConfig::from_toml("", &overrides),
        }
    }

    /// Like `load`, but falls back to the `config.toml` saved in `run`.
    fn load_for_run(&self, run: Option<&PathBuf>) -> CliResult<(ExperimentConfig, PathBuf)> {
        if self.config.is_none() {
            let dir = match (run, &self.out) {
                (Some(r), _) => Some(r.clone()),
                (None, Some(o)) => Some(o.clone()),
                (None, None) => None,
            };
            if let Some(dir) = dir.filter(|d| d.join("config.toml").is_file()) {
                let with_saved = Common { config: Some(dir.join("config.toml")), ..self.clone() };
                return Ok((with_saved.load()?, dir));
            }
        }
        let cfg = self.load()?;
        let dir = run.cloned().unwrap_or_else(|| cfg.output_dir());
        Ok((cfg, dir))
    }
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic dataset and its truth file.
    Synth(Common),
    /// Train the configured method over all seeds and grid points.
    Train(Common),
    /// Evaluate the checkpoints of a run on the clean test set.
    Eval {
        #[command(flatten)]
        common: Common,
        /// Run directory written by `train` (default: the output directory). Its
        /// saved config.toml is used unless --config is given.
        #[arg(long)]
        run: Option<PathBuf>,
        /// Evaluate a single target checkpoint.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// Add prediction differences between consecutive seeds.
        #[arg(long)]
        diff_study: bool,
        /// Add the posterior curve (dpi and dvae runs).
        #[arg(long)]
        posterior: bool,
    },
    /// Train pairs of cross-entropy models and compare their predictions.
    DiffStudy(Common),
    /// Posterior of observed pairs from a finished dpi or dvae run.
    Posterior {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        run: Option<PathBuf>,
    },
    /// Train DPI with DP-only, DN-only and alternating schedules.
    Ablation {
        #[command(flatten)]
        common: Common,
        /// Restrict to one variant: full, dp-only or dn-only.
        #[arg(long)]
        variant: Option<String>,
    },
}

fn run(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::Synth(common) => {
            let cfg = common.load()?;
            let s = commands::cmd_synth(&cfg, &cfg.output_dir())?;
            println!(
                "wrote {} ({} observed, {} noisy = {:.1}%, {} hidden positives) and {}",
                s.data.display(),
                s.observed,
                s.noisy,
                100.0 * s.noisy_fraction(),
                s.hidden_positives,
                s.truth.display()
            );
        }
        Command::Train(common) => {
            let cfg = common.load()?;
            let summary = commands::cmd_train(&cfg)?;
            for (dir, report) in summary.runs.iter().zip(&summary.reports) {
                println!("{}\n{}", dir.display(), report.table());
            }
        }
        Command::Eval { common, run, checkpoint, diff_study, posterior } => {
            let (cfg, run) = common.load_for_run(run.as_ref())?;
            let report = commands::cmd_eval(&cfg, &run, &EvalOptions { checkpoint, diff_study, posterior })?;
            print!("{}", report.table());
        }
        Command::DiffStudy(common) => {
            let cfg = common.load()?;
            let s = commands::cmd_diff_study(&cfg)?;
            print!("{}", s.report.table());
        }
        Command::Posterior { common, run } => {
            let (cfg, run) = common.load_for_run(run.as_ref())?;
            let s = commands::cmd_posterior(&cfg, &run)?;
            print!("{}", recdenoise::posterior::curve_tsv(&s.pooled));
        }
        Command::Ablation { common, variant } => {
            let cfg = common.load()?;
            let variants = match variant {
                Some(v) => vec![v.parse::<ModeSchedule>()?],
                None => vec![ModeSchedule::Full, ModeSchedule::DpOnly, ModeSchedule::DnOnly],
            };
            for (v, report) in commands::cmd_ablation(&cfg, &variants)? {
                println!("{}\n{}", commands::variant_name(v), report.table());
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .target(env_logger::Target::Stderr)
        .init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::from(exit::OK as u8),
        Err(e) => {
            log::error!("{e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
