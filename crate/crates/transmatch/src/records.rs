//! Per-episode result records, their JSON-lines files, and aggregation.
//!
//! Records hold only deterministic fields, so a rerun with the same config
//! reproduces the records file byte for byte. Wall-clock timings go to a
//! separate timings file.

use std::fs;
use std::io::{BufRead, BufReader};
use std::path::Path;

use serde::{Deserialize, Serialize};
use transmatch_core::data::{DistractorMode, EpisodeSpec};
use transmatch_core::method::Method;
use transmatch_core::stats;

use crate::error::{AppError, Result};

pub const RECORDS_FILE: &str = "records.jsonl";
pub const TIMINGS_FILE: &str = "timings.jsonl";

/// Episode shape shared by the records of one benchmark cell.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Setting {
    pub way: usize,
    pub shot: usize,
    pub query: usize,
    pub unlabeled: usize,
    pub distractors: usize,
    pub distractor_mode: DistractorMode,
}

impl Setting {
    pub fn episode_spec(&self) -> EpisodeSpec {
        EpisodeSpec {
            way: self.way,
            shot: self.shot,
            query: self.query,
            unlabeled: self.unlabeled,
            distractor_classes: self.distractors,
            distractor_mode: self.distractor_mode,
        }
    }

    pub fn from_spec(spec: &EpisodeSpec) -> Self {
        Self {
            way: spec.way,
            shot: spec.shot,
            query: spec.query,
            unlabeled: spec.unlabeled,
            distractors: spec.distractor_classes,
            distractor_mode: spec.distractor_mode,
        }
    }

    /// Short label such as `5w1s U30` or `5w1s U30 D2`.
    pub fn label(&self) -> String {
        let mut s = format!("{}w{}s U{}", self.way, self.shot, self.unlabeled);
        if self.distractors > 0 {
            let mode = match self.distractor_mode {
                DistractorMode::Replace => "",
                DistractorMode::Add => "+",
            };
            s.push_str(&format!(" D{}{mode}", self.distractors));
        }
        s
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRecord {
    pub method: Method,
    #[serde(flatten)]
    pub setting: Setting,
    pub episode_index: usize,
    pub episode_seed: u64,
    pub correct: usize,
    pub total: usize,
    pub accuracy: f64,
    pub config_hash: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimingRecord {
    pub method: Method,
    #[serde(flatten)]
    pub setting: Setting,
    pub episode_index: usize,
    pub wall_time_secs: f64,
    /// Seconds since the Unix epoch when the episode started.
    pub started_at: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AggregateResult {
    pub method: Method,
    pub setting: Setting,
    pub n_episodes: usize,
    pub mean: f64,
    pub std: f64,
    pub ci95: f64,
    pub config_hash: String,
}

/// Mean and 95% interval of a group of records for one method and setting.
pub fn aggregate(records: &[&ResultRecord]) -> Result<AggregateResult> {
    let first = records
        .first()
        .ok_or_else(|| AppError::config("cannot aggregate an empty group"))?;
    if records
        .iter()
        .any(|r| r.method != first.method || r.setting != first.setting)
    {
        return Err(AppError::config("aggregate needs records of one method and setting"));
    }
    let accuracies: Vec<f64> = records.iter().map(|r| r.accuracy).collect();
    let summary = stats::summarize(&accuracies)?;
    Ok(AggregateResult {
        method: first.method,
        setting: first.setting,
        n_episodes: summary.n,
        mean: summary.mean,
        std: summary.std,
        ci95: summary.ci95,
        config_hash: first.config_hash.clone(),
    })
}

/// Records grouped by setting and method, in order of first appearance.
pub fn group(records: &[ResultRecord]) -> Vec<((Setting, Method), Vec<&ResultRecord>)> {
    let mut groups: Vec<((Setting, Method), Vec<&ResultRecord>)> = Vec::new();
    for r in records {
        let key = (r.setting, r.method);
        match groups.iter_mut().find(|(k, _)| *k == key) {
            Some((_, list)) => list.push(r),
            None => groups.push((key, vec![r])),
        }
    }
    groups
}

pub fn aggregate_all(records: &[ResultRecord]) -> Result<Vec<AggregateResult>> {
    group(records).iter().map(|(_, g)| aggregate(g)).collect()
}

/// Accuracies of `method` under `setting`, ordered by episode index.
pub fn accuracies(records: &[ResultRecord], method: Method, setting: &Setting) -> Vec<f64> {
    let mut rows: Vec<(usize, f64)> = records
        .iter()
        .filter(|r| r.method == method && r.setting == *setting)
        .map(|r| (r.episode_index, r.accuracy))
        .collect();
    rows.sort_by_key(|&(i, _)| i);
    rows.into_iter().map(|(_, a)| a).collect()
}

pub fn to_json_line<T: Serialize>(value: &T) -> String {
    let mut line = serde_json::to_string(value).expect("record serializes");
    line.push('\n');
    line
}

/// Result of reading a records file leniently.
#[derive(Debug, Default)]
pub struct LoadedRecords {
    pub records: Vec<ResultRecord>,
    /// One message per skipped line.
    pub warnings: Vec<String>,
}

/// Reads a records file, skipping lines that do not parse.
pub fn read_records(path: &Path) -> Result<LoadedRecords> {
    let file = fs::File::open(path).map_err(|e| AppError::io(path, e))?;
    let mut loaded = LoadedRecords::default();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| AppError::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        match serde_json::from_str::<ResultRecord>(&line) {
            Ok(r) if (0.0..=1.0).contains(&r.accuracy) && r.total > 0 => loaded.records.push(r),
            Ok(_) => loaded
                .warnings
                .push(format!("{}:{}: record out of range", path.display(), i + 1)),
            Err(e) => loaded.warnings.push(format!("{}:{}: {e}", path.display(), i + 1)),
        }
    }
    Ok(loaded)
}
