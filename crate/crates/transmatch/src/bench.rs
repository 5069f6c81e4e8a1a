//! Episodic benchmarks over a shared pre-trained extractor.
//!
//! Every (setting, episode, method) triple is an independent job. Jobs run on
//! a worker pool; finished results go through a channel to a single writer
//! that appends them to disk in job order, so the files do not depend on
//! scheduling.

use std::collections::BTreeMap;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;
use std::sync::mpsc;
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use rayon::prelude::*;
use transmatch_core::data::sample_episode;
use transmatch_core::eval::evaluate_episode;
use transmatch_core::method::{run_method, Method};
use transmatch_core::rng::derive_seed;

use crate::config::EvalSpec;
use crate::error::{AppError, Result};
use crate::lab::Lab;
use crate::records::{to_json_line, ResultRecord, Setting, TimingRecord, RECORDS_FILE, TIMINGS_FILE};

#[derive(Debug, Clone, Copy)]
pub struct BenchOptions {
    /// Worker threads; 1 runs everything on one thread.
    pub workers: usize,
    /// Print one line per finished job to stderr.
    pub progress: bool,
}

impl Default for BenchOptions {
    fn default() -> Self {
        Self {
            workers: 1,
            progress: false,
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct BenchmarkRun {
    /// In job order: settings, then episodes, then methods.
    pub records: Vec<ResultRecord>,
    pub timings: Vec<TimingRecord>,
}

/// Seed of episode `episode` for the method in position `slot`.
///
/// In paired mode all methods share the sequence; otherwise each method gets
/// its own stream.
pub fn episode_seed(eval: &EvalSpec, slot: usize, episode: usize) -> u64 {
    if eval.paired {
        derive_seed(eval.seed, episode as u64)
    } else {
        derive_seed(derive_seed(eval.seed, 1 + slot as u64), episode as u64)
    }
}

struct Job {
    setting: Setting,
    method: Method,
    slot: usize,
    episode: usize,
}

fn run_job(lab: &Lab, job: &Job, config_hash: &str) -> Result<(ResultRecord, TimingRecord)> {
    let eval = &lab.config.eval;
    let started_at = SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs_f64())
        .unwrap_or(0.0);
    let clock = Instant::now();
    let seed = episode_seed(eval, job.slot, job.episode);
    let episode = sample_episode(
        &lab.dataset,
        &lab.split.novel_classes,
        &job.setting.episode_spec(),
        seed,
    )?;
    let outcome = run_method(job.method, &lab.extractor, &episode, &lab.config.method_config())?;
    let score = evaluate_episode(&outcome.model, &episode)?;
    let record = ResultRecord {
        method: job.method,
        setting: job.setting,
        episode_index: job.episode,
        episode_seed: seed,
        correct: score.correct,
        total: score.total,
        accuracy: score.accuracy,
        config_hash: config_hash.to_owned(),
    };
    let timing = TimingRecord {
        method: job.method,
        setting: job.setting,
        episode_index: job.episode,
        wall_time_secs: clock.elapsed().as_secs_f64(),
        started_at,
    };
    Ok((record, timing))
}

struct Sink {
    records: BufWriter<fs::File>,
    timings: BufWriter<fs::File>,
}

impl Sink {
    fn create(dir: &Path) -> Result<Self> {
        fs::create_dir_all(dir).map_err(|e| AppError::io(dir, e))?;
        let open = |name: &str| {
            let path = dir.join(name);
            fs::File::create(&path)
                .map(BufWriter::new)
                .map_err(|e| AppError::io(&path, e))
        };
        Ok(Self {
            records: open(RECORDS_FILE)?,
            timings: open(TIMINGS_FILE)?,
        })
    }

    fn append(&mut self, record: &ResultRecord, timing: &TimingRecord) -> std::io::Result<()> {
        self.records.write_all(to_json_line(record).as_bytes())?;
        self.timings.write_all(to_json_line(timing).as_bytes())?;
        self.records.flush()?;
        self.timings.flush()
    }
}

/// Runs every method on `n_episodes` episodes of every setting.
///
/// With `out` set, records and timings are streamed to files in that
/// directory as jobs finish, in job order.
pub fn run_benchmark(
    lab: &Lab,
    methods: &[Method],
    settings: &[Setting],
    options: &BenchOptions,
    out: Option<&Path>,
) -> Result<BenchmarkRun> {
    if methods.is_empty() || settings.is_empty() {
        return Err(AppError::config(
            "a benchmark needs at least one method and one setting",
        ));
    }
    let n_episodes = lab.config.eval.n_episodes;
    let jobs: Vec<Job> = settings
        .iter()
        .flat_map(|&setting| {
            (0..n_episodes).flat_map(move |episode| {
                methods.iter().enumerate().map(move |(slot, &method)| Job {
                    setting,
                    method,
                    slot,
                    episode,
                })
            })
        })
        .collect();
    let total = jobs.len();
    let config_hash = lab.config.config_hash();
    let mut sink = out.map(Sink::create).transpose()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(options.workers.max(1))
        .build()
        .map_err(|e| AppError::Runtime(format!("cannot start worker pool: {e}")))?;

    let (tx, rx) = mpsc::channel::<(usize, ResultRecord, TimingRecord)>();
    std::thread::scope(|scope| {
        let writer = scope.spawn(move || -> Result<BenchmarkRun> {
            let mut run = BenchmarkRun::default();
            let mut pending = BTreeMap::new();
            for (index, record, timing) in rx {
                pending.insert(index, (record, timing));
                while let Some((record, timing)) = pending.remove(&run.records.len()) {
                    if let (Some(sink), Some(dir)) = (sink.as_mut(), out) {
                        sink.append(&record, &timing).map_err(|e| AppError::io(dir, e))?;
                    }
                    if options.progress {
                        eprintln!(
                            "[{}/{total}] {:<13} {:<12} episode {:>4}  acc {:.4}  {:.2}s",
                            run.records.len() + 1,
                            record.method.name(),
                            record.setting.label(),
                            record.episode_index,
                            record.accuracy,
                            timing.wall_time_secs
                        );
                    }
                    run.records.push(record);
                    run.timings.push(timing);
                }
            }
            Ok(run)
        });
        let worked = pool.install(|| {
            jobs.par_iter().enumerate().try_for_each_with(tx, |tx, (index, job)| {
                let (record, timing) = run_job(lab, job, &config_hash)?;
                // The writer only stops early on an IO error, which it reports itself.
                let _ = tx.send((index, record, timing));
                Ok::<(), AppError>(())
            })
        });
        let written = writer.join().expect("writer thread panicked");
        worked?;
        let run = written?;
        debug_assert_eq!(run.records.len(), total);
        Ok(run)
    })
}

/// The base setting of the run config.
pub fn base_setting(lab: &Lab) -> Setting {
    Setting::from_spec(&lab.config.eval.episode_spec())
}

pub fn unlabeled_settings(base: Setting, values: &[usize]) -> Vec<Setting> {
    values.iter().map(|&unlabeled| Setting { unlabeled, ..base }).collect()
}

pub fn shot_settings(base: Setting, values: &[usize]) -> Vec<Setting> {
    values.iter().map(|&shot| Setting { shot, ..base }).collect()
}

pub fn distractor_settings(base: Setting, values: &[usize]) -> Vec<Setting> {
    values
        .iter()
        .map(|&distractors| Setting { distractors, ..base })
        .collect()
}

/// Benchmarks `methods` at each unlabeled count in `values`, on paired episodes.
pub fn sweep_unlabeled(
    lab: &Lab,
    methods: &[Method],
    values: &[usize],
    options: &BenchOptions,
    out: Option<&Path>,
) -> Result<BenchmarkRun> {
    run_benchmark(
        lab,
        methods,
        &unlabeled_settings(base_setting(lab), values),
        options,
        out,
    )
}

/// Benchmarks `methods` at each shot count in `values`.
pub fn sweep_shot(
    lab: &Lab,
    methods: &[Method],
    values: &[usize],
    options: &BenchOptions,
    out: Option<&Path>,
) -> Result<BenchmarkRun> {
    run_benchmark(lab, methods, &shot_settings(base_setting(lab), values), options, out)
}

/// Benchmarks `methods` with unlabeled images drawn partly from distractor classes.
pub fn run_distractor_study(
    lab: &Lab,
    methods: &[Method],
    values: &[usize],
    options: &BenchOptions,
    out: Option<&Path>,
) -> Result<BenchmarkRun> {
    run_benchmark(
        lab,
        methods,
        &distractor_settings(base_setting(lab), values),
        options,
        out,
    )
}
