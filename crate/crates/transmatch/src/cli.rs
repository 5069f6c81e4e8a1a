//! The `transmatch` command line.

use std::path::{Path, PathBuf};
use std::str::FromStr;

use clap::{Parser, Subcommand, ValueEnum};
use transmatch_core::method::Method;

use crate::bench::{self, BenchOptions, BenchmarkRun};
use crate::checkpoint::write_atomic;
use crate::config::{DatasetSpec, RunConfig, OUTPUT_DIR_ENV};
use crate::dataset::{write_folder, DataSource};
use crate::error::{AppError, Result};
use crate::lab::{ensure_checkpoint, CheckpointStatus, Lab};
use crate::report::{cmd_report, write_report};

#[derive(Debug, Parser)]
#[command(name = "transmatch", version, about = "Semi-supervised few-shot learning lab")]
pub struct Cli {
    /// TOML run configuration. Built-in defaults apply when omitted.
    #[arg(long, short, global = true)]
    pub config: Option<PathBuf>,
    /// Root for checkpoints and results; overrides `output_dir` in the config.
    #[arg(long, global = true, env = OUTPUT_DIR_ENV)]
    pub output_dir: Option<PathBuf>,
    /// Worker threads for episode jobs.
    #[arg(long, global = true, default_value_t = 1)]
    pub workers: usize,
    /// Print one line per finished episode job.
    #[arg(long, global = true)]
    pub progress: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write the effective configuration as TOML.
    Init {
        /// Destination file; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write the configured dataset as a folder of PNG files with a manifest.
    Generate {
        #[arg(long)]
        out: PathBuf,
    },
    /// Pre-train the feature extractor on the base classes.
    Pretrain {
        /// Retrain even if a checkpoint for this configuration exists.
        #[arg(long)]
        force: bool,
    },
    /// Run every method on the configured episode setting.
    Benchmark {
        #[command(flatten)]
        run: RunArgs,
    },
    /// Run the methods across a range of unlabeled counts, shots or distractor classes.
    Sweep {
        #[arg(long, value_enum)]
        axis: Axis,
        /// Sweep values; the config's list for the axis when omitted.
        #[arg(long, value_delimiter = ',')]
        values: Option<Vec<usize>>,
        #[command(flatten)]
        run: RunArgs,
    },
    /// Rebuild tables and plots from stored records.
    Report {
        /// Results directory; `<output_dir>/results` when omitted.
        dir: Option<PathBuf>,
    },
}

#[derive(Debug, clap::Args)]
pub struct RunArgs {
    /// Comma-separated methods: imprinting, imprinting_ft, mixmatch, pseudo_label, transmatch.
    #[arg(long, value_delimiter = ',')]
    pub methods: Option<Vec<String>>,
    /// Number of episodes per setting.
    #[arg(long)]
    pub episodes: Option<usize>,
    /// Base seed of the episode sequence.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Give each method its own episode sequence.
    #[arg(long)]
    pub unpaired: bool,
    /// Name of the run directory under `<output_dir>/results`.
    #[arg(long)]
    pub name: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Axis {
    Unlabeled,
    Shot,
    Distractors,
}

impl Axis {
    fn dir_name(self) -> &'static str {
        match self {
            Axis::Unlabeled => "sweep-unlabeled",
            Axis::Shot => "sweep-shot",
            Axis::Distractors => "sweep-distractors",
        }
    }
}

pub fn parse_methods(names: &[String]) -> Result<Vec<Method>> {
    let mut methods = Vec::new();
    for name in names.iter().map(|n| n.trim()).filter(|n| !n.is_empty()) {
        let m = Method::from_str(name)?;
        if !methods.contains(&m) {
            methods.push(m);
        }
    }
    if methods.is_empty() {
        return Err(AppError::config("no methods given"));
    }
    Ok(methods)
}

fn load_config(cli: &Cli) -> Result<RunConfig> {
    let mut config = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(dir) = &cli.output_dir {
        config.output_dir = dir.clone();
    }
    Ok(config)
}

fn apply_run_args(config: &mut RunConfig, args: &RunArgs) -> Result<()> {
    if let Some(names) = &args.methods {
        config.eval.methods = parse_methods(names)?;
    }
    if let Some(n) = args.episodes {
        config.eval.n_episodes = n;
    }
    if let Some(seed) = args.seed {
        config.eval.seed = seed;
    }
    if args.unpaired {
        config.eval.paired = false;
    }
    config.validate()
}

fn run_dir(config: &RunConfig, args: &RunArgs, default: &str) -> Result<PathBuf> {
    let name = args.name.as_deref().unwrap_or(default);
    if name.is_empty() || name.contains(['/', '\\']) || name == "." || name == ".." {
        return Err(AppError::config(format!("invalid run name '{name}'")));
    }
    Ok(config.results_dir().join(name))
}

fn finish_run(config: &RunConfig, dir: &Path, run: &BenchmarkRun) -> Result<String> {
    let header = format!("# config_hash = \"{}\"\n", config.config_hash());
    write_atomic(
        &dir.join("config.toml"),
        (header + &config.to_toml_string()?).as_bytes(),
    )?;
    let (table, _) = write_report(dir, &run.records, 0)?;
    Ok(table)
}

/// Runs the parsed command and returns what to print on stdout.
pub fn execute(cli: &Cli) -> Result<String> {
    let options = BenchOptions {
        workers: cli.workers,
        progress: cli.progress,
    };
    match &cli.command {
        Command::Init { out } => {
            let text = load_config(cli)?.to_toml_string()?;
            match out {
                Some(path) => {
                    write_atomic(path, text.as_bytes())?;
                    Ok(format!("wrote {}\n", path.display()))
                }
                None => Ok(text),
            }
        }
        Command::Generate { out } => {
            let config = load_config(cli)?;
            if !matches!(config.dataset, DatasetSpec::Synthetic { .. }) {
                return Err(AppError::config("generate needs a synthetic dataset in the config"));
            }
            let (dataset, split) = config.dataset.load()?;
            write_folder(out, &dataset, &split)?;
            Ok(format!(
                "wrote {} images of {} classes to {}\n",
                dataset.len(),
                dataset.num_classes(),
                out.display()
            ))
        }
        Command::Pretrain { force } => {
            let config = load_config(cli)?;
            let (path, status) = ensure_checkpoint(&config, *force)?;
            let verb = match status {
                CheckpointStatus::Trained => "trained",
                CheckpointStatus::Reused => "reused",
            };
            Ok(format!("{verb} {}\n", path.display()))
        }
        Command::Benchmark { run } => {
            let mut config = load_config(cli)?;
            apply_run_args(&mut config, run)?;
            let dir = run_dir(&config, run, "benchmark")?;
            let lab = Lab::open(config)?;
            let setting = bench::base_setting(&lab);
            let result = bench::run_benchmark(&lab, &lab.config.eval.methods, &[setting], &options, Some(&dir))?;
            finish_run(&lab.config, &dir, &result)
        }
        Command::Sweep { axis, values, run } => {
            let mut config = load_config(cli)?;
            apply_run_args(&mut config, run)?;
            if let Some(v) = values {
                match axis {
                    Axis::Unlabeled => config.eval.unlabeled_sweep = v.clone(),
                    Axis::Shot => config.eval.shot_sweep = v.clone(),
                    Axis::Distractors => config.eval.distractor_sweep = v.clone(),
                }
                config.validate()?;
            }
            let dir = run_dir(&config, run, axis.dir_name())?;
            let lab = Lab::open(config)?;
            let eval = &lab.config.eval;
            let methods = &eval.methods;
            let result = match axis {
                Axis::Unlabeled => bench::sweep_unlabeled(&lab, methods, &eval.unlabeled_sweep, &options, Some(&dir)),
                Axis::Shot => bench::sweep_shot(&lab, methods, &eval.shot_sweep, &options, Some(&dir)),
                Axis::Distractors => {
                    bench::run_distractor_study(&lab, methods, &eval.distractor_sweep, &options, Some(&dir))
                }
            }?;
            finish_run(&lab.config, &dir, &result)
        }
        Command::Report { dir } => {
            let dir = match dir {
                Some(d) => d.clone(),
                None => load_config(cli)?.results_dir(),
            };
            let summary = cmd_report(&dir)?;
            let mut out = summary.table;
            for w in &summary.warnings {
                eprintln!("warning: {w}");
            }
            out.push_str(&format!(
                "report: {} records, {} warnings, {} files\n",
                summary.records,
                summary.warnings.len(),
                summary.files.len()
            ));
            Ok(out)
        }
    }
}
