//! Tables, CSV files and plots rendered from stored records.
//!
//! Everything here is a pure function of the records file, so regenerating a
//! report never reruns an experiment and always yields the same bytes.

use std::fs;
use std::path::{Path, PathBuf};

use plotters::prelude::*;
use transmatch_core::method::Method;
use transmatch_core::stats::{self, PairedWins, Summary};

use crate::checkpoint::write_atomic;
use crate::error::{AppError, Result};
use crate::records::{self, AggregateResult, ResultRecord, Setting, RECORDS_FILE};

pub const TABLE_FILE: &str = "aggregates.txt";
pub const AGGREGATES_CSV: &str = "aggregates.csv";
pub const COMPARISONS_CSV: &str = "comparisons.csv";
pub const PAIRED_CSV: &str = "paired.csv";

/// Paired difference of `method` against `reference` under one setting.
#[derive(Debug, Clone, PartialEq)]
pub struct Comparison {
    pub setting: Setting,
    pub method: Method,
    pub reference: Method,
    pub difference: Summary,
    pub wins: PairedWins,
}

/// Accuracies of `a` and `b` on the same episodes, or `None` when the two
/// methods did not see identical episode seeds.
pub fn paired_accuracies(
    records: &[ResultRecord],
    setting: &Setting,
    a: Method,
    b: Method,
) -> Option<(Vec<f64>, Vec<f64>)> {
    let rows = |m: Method| {
        let mut v: Vec<&ResultRecord> = records
            .iter()
            .filter(|r| r.method == m && r.setting == *setting)
            .collect();
        v.sort_by_key(|r| r.episode_index);
        v
    };
    let (ra, rb) = (rows(a), rows(b));
    let aligned = ra.len() == rb.len()
        && ra
            .iter()
            .zip(&rb)
            .all(|(x, y)| x.episode_index == y.episode_index && x.episode_seed == y.episode_seed);
    aligned.then(|| {
        (
            ra.iter().map(|r| r.accuracy).collect(),
            rb.iter().map(|r| r.accuracy).collect(),
        )
    })
}

/// Each method against the first method of its setting, where episodes are paired.
pub fn paired_comparisons(records: &[ResultRecord]) -> Vec<Comparison> {
    let mut out = Vec::new();
    for setting in settings(records) {
        let methods = methods_in(records, Some(&setting));
        let Some((&reference, rest)) = methods.split_first() else {
            continue;
        };
        for &method in rest {
            let Some((a, b)) = paired_accuracies(records, &setting, method, reference) else {
                continue;
            };
            if let (Ok(difference), Ok(wins)) = (stats::paired_difference(&a, &b), stats::paired_wins(&a, &b)) {
                out.push(Comparison {
                    setting,
                    method,
                    reference,
                    difference,
                    wins,
                });
            }
        }
    }
    out
}

fn settings(records: &[ResultRecord]) -> Vec<Setting> {
    let mut out: Vec<Setting> = Vec::new();
    for r in records {
        if !out.contains(&r.setting) {
            out.push(r.setting);
        }
    }
    out
}

fn methods_in(records: &[ResultRecord], setting: Option<&Setting>) -> Vec<Method> {
    let mut out: Vec<Method> = Vec::new();
    for r in records.iter().filter(|r| setting.is_none_or(|s| r.setting == *s)) {
        if !out.contains(&r.method) {
            out.push(r.method);
        }
    }
    out
}

fn config_hashes(records: &[ResultRecord]) -> Vec<&str> {
    let mut out: Vec<&str> = Vec::new();
    for r in records {
        if !out.contains(&r.config_hash.as_str()) {
            out.push(&r.config_hash);
        }
    }
    out
}

fn pct(v: f64) -> String {
    format!("{:.2}", 100.0 * v)
}

/// Pads columns to a common width. Columns listed in `right` are right-aligned.
fn align(rows: &[Vec<String>], right: &[usize]) -> String {
    let cols = rows.iter().map(Vec::len).max().unwrap_or(0);
    let widths: Vec<usize> = (0..cols)
        .map(|c| {
            rows.iter()
                .filter_map(|r| r.get(c))
                .map(|s| s.chars().count())
                .max()
                .unwrap_or(0)
        })
        .collect();
    let mut out = String::new();
    for row in rows {
        let mut line = String::new();
        for (c, cell) in row.iter().enumerate() {
            if c > 0 {
                line.push_str("  ");
            }
            let pad = widths[c] - cell.chars().count();
            if right.contains(&c) {
                line.push_str(&" ".repeat(pad));
                line.push_str(cell);
            } else {
                line.push_str(cell);
                line.push_str(&" ".repeat(pad));
            }
        }
        out.push_str(line.trim_end());
        out.push('\n');
    }
    out
}

/// Aligned text rendering of aggregates and paired comparisons.
pub fn render_table(
    aggregates: &[AggregateResult],
    comparisons: &[Comparison],
    hashes: &[&str],
    warnings: usize,
) -> String {
    let mut out = String::new();
    for h in hashes {
        out.push_str(&format!("config {h}\n"));
    }
    out.push('\n');
    let mut rows = vec![vec![
        "setting".to_owned(),
        "method".to_owned(),
        "n".to_owned(),
        "accuracy %".to_owned(),
        "ci95".to_owned(),
        "std".to_owned(),
    ]];
    for a in aggregates {
        rows.push(vec![
            a.setting.label(),
            a.method.name().to_owned(),
            a.n_episodes.to_string(),
            pct(a.mean),
            format!("± {}", pct(a.ci95)),
            pct(a.std),
        ]);
    }
    out.push_str(&align(&rows, &[2, 3, 4, 5]));
    if !comparisons.is_empty() {
        out.push_str("\npaired differences (percentage points)\n");
        let mut rows = vec![vec![
            "setting".to_owned(),
            "method".to_owned(),
            "vs".to_owned(),
            "diff".to_owned(),
            "ci95".to_owned(),
            "w/l/t".to_owned(),
            "sign p".to_owned(),
        ]];
        for c in comparisons {
            rows.push(vec![
                c.setting.label(),
                c.method.name().to_owned(),
                c.reference.name().to_owned(),
                format!("{:+.2}", 100.0 * c.difference.mean),
                format!("± {}", pct(c.difference.ci95)),
                format!("{}/{}/{}", c.wins.wins, c.wins.losses, c.wins.ties),
                format!("{:.2e}", c.wins.p_value),
            ]);
        }
        out.push_str(&align(&rows, &[3, 4, 5, 6]));
    }
    out.push_str(&format!("\nwarnings: {warnings}\n"));
    out
}

fn mode_name(s: &Setting) -> &'static str {
    match s.distractor_mode {
        transmatch_core::data::DistractorMode::Replace => "replace",
        transmatch_core::data::DistractorMode::Add => "add",
    }
}

fn setting_fields(s: &Setting) -> [String; 6] {
    [
        s.way.to_string(),
        s.shot.to_string(),
        s.query.to_string(),
        s.unlabeled.to_string(),
        s.distractors.to_string(),
        mode_name(s).to_owned(),
    ]
}

const SETTING_HEADER: [&str; 6] = ["way", "shot", "query", "unlabeled", "distractors", "distractor_mode"];

fn csv_bytes(header: Vec<String>, rows: Vec<Vec<String>>) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let fail = |e: csv::Error| AppError::Runtime(format!("csv: {e}"));
    w.write_record(&header).map_err(fail)?;
    for row in rows {
        w.write_record(&row).map_err(fail)?;
    }
    w.into_inner().map_err(|e| AppError::Runtime(format!("csv: {e}")))
}

pub fn aggregates_csv(aggregates: &[AggregateResult]) -> Result<Vec<u8>> {
    let mut header = vec!["method".to_owned()];
    header.extend(SETTING_HEADER.map(String::from));
    header.extend(["n_episodes", "mean", "std", "ci95", "config_hash"].map(String::from));
    let rows = aggregates
        .iter()
        .map(|a| {
            let mut row = vec![a.method.name().to_owned()];
            row.extend(setting_fields(&a.setting));
            row.extend([
                a.n_episodes.to_string(),
                a.mean.to_string(),
                a.std.to_string(),
                a.ci95.to_string(),
                a.config_hash.clone(),
            ]);
            row
        })
        .collect();
    csv_bytes(header, rows)
}

pub fn comparisons_csv(comparisons: &[Comparison], hash: &str) -> Result<Vec<u8>> {
    let mut header = vec!["method".to_owned(), "reference".to_owned()];
    header.extend(SETTING_HEADER.map(String::from));
    header.extend(
        [
            "n",
            "mean_difference",
            "ci95",
            "wins",
            "losses",
            "ties",
            "sign_test_p",
            "config_hash",
        ]
        .map(String::from),
    );
    let rows = comparisons
        .iter()
        .map(|c| {
            let mut row = vec![c.method.name().to_owned(), c.reference.name().to_owned()];
            row.extend(setting_fields(&c.setting));
            row.extend([
                c.difference.n.to_string(),
                c.difference.mean.to_string(),
                c.difference.ci95.to_string(),
                c.wins.wins.to_string(),
                c.wins.losses.to_string(),
                c.wins.ties.to_string(),
                c.wins.p_value.to_string(),
                hash.to_owned(),
            ]);
            row
        })
        .collect();
    csv_bytes(header, rows)
}

/// Per-episode accuracies side by side, one row per paired episode.
///
/// Returns `None` when no setting has two or more methods on shared seeds.
pub fn paired_csv(records: &[ResultRecord]) -> Result<Option<Vec<u8>>> {
    let methods = methods_in(records, None);
    let mut rows = Vec::new();
    for setting in settings(records) {
        let present = methods_in(records, Some(&setting));
        if present.len() < 2
            || present[1..]
                .iter()
                .any(|&m| paired_accuracies(records, &setting, present[0], m).is_none())
        {
            continue;
        }
        let mut episodes: Vec<&ResultRecord> = records
            .iter()
            .filter(|r| r.setting == setting && r.method == present[0])
            .collect();
        episodes.sort_by_key(|r| r.episode_index);
        for ep in episodes {
            let mut row: Vec<String> = setting_fields(&setting).into();
            row.push(ep.episode_index.to_string());
            row.push(ep.episode_seed.to_string());
            for &m in &methods {
                let acc = records
                    .iter()
                    .find(|r| r.setting == setting && r.method == m && r.episode_index == ep.episode_index)
                    .map(|r| r.accuracy.to_string())
                    .unwrap_or_default();
                row.push(acc);
            }
            row.push(ep.config_hash.clone());
            rows.push(row);
        }
    }
    if rows.is_empty() {
        return Ok(None);
    }
    let mut header: Vec<String> = SETTING_HEADER.map(String::from).into();
    header.push("episode_index".into());
    header.push("episode_seed".into());
    header.extend(methods.iter().map(|m| m.name().to_owned()));
    header.push("config_hash".into());
    csv_bytes(header, rows).map(Some)
}

/// The setting field that varies across a sweep.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepAxis {
    Unlabeled,
    Shot,
    Distractors,
}

impl SweepAxis {
    fn value(self, s: &Setting) -> usize {
        match self {
            SweepAxis::Unlabeled => s.unlabeled,
            SweepAxis::Shot => s.shot,
            SweepAxis::Distractors => s.distractors,
        }
    }

    fn name(self) -> &'static str {
        match self {
            SweepAxis::Unlabeled => "unlabeled",
            SweepAxis::Shot => "shot",
            SweepAxis::Distractors => "distractors",
        }
    }

    fn clear(self, s: &Setting) -> Setting {
        match self {
            SweepAxis::Unlabeled => Setting { unlabeled: 0, ..*s },
            SweepAxis::Shot => Setting { shot: 0, ..*s },
            SweepAxis::Distractors => Setting { distractors: 0, ..*s },
        }
    }
}

/// The single axis along which the settings differ, if there is one.
pub fn sweep_axis(settings: &[Setting]) -> Option<SweepAxis> {
    if settings.len() < 2 {
        return None;
    }
    [SweepAxis::Unlabeled, SweepAxis::Shot, SweepAxis::Distractors]
        .into_iter()
        .find(|axis| settings.iter().all(|s| axis.clear(s) == axis.clear(&settings[0])))
}

/// SVG plot of mean accuracy with 95% interval bars along a sweep axis.
pub fn sweep_plot(aggregates: &[AggregateResult], axis: SweepAxis, hash: &str) -> Result<String> {
    let fail = |e: String| AppError::Runtime(format!("plot: {e}"));
    let xs: Vec<usize> = {
        let mut v: Vec<usize> = aggregates.iter().map(|a| axis.value(&a.setting)).collect();
        v.sort_unstable();
        v.dedup();
        v
    };
    let lo = aggregates.iter().map(|a| a.mean - a.ci95).fold(f64::INFINITY, f64::min);
    let hi = aggregates
        .iter()
        .map(|a| a.mean + a.ci95)
        .fold(f64::NEG_INFINITY, f64::max);
    let (y0, y1) = ((100.0 * lo - 2.0).max(0.0), (100.0 * hi + 2.0).min(100.0));
    let x0 = *xs.first().unwrap_or(&0) as f64;
    let x1 = *xs.last().unwrap_or(&1) as f64;
    let pad = ((x1 - x0) * 0.08).max(0.5);
    let mut svg = String::new();
    {
        let root = SVGBackend::with_string(&mut svg, (640, 420)).into_drawing_area();
        root.fill(&WHITE).map_err(|e| fail(e.to_string()))?;
        let short = &hash[..hash.len().min(12)];
        let mut chart = ChartBuilder::on(&root)
            .caption(
                format!("accuracy vs {} (config {short})", axis.name()),
                ("sans-serif", 18),
            )
            .margin(12)
            .x_label_area_size(36)
            .y_label_area_size(48)
            .build_cartesian_2d((x0 - pad)..(x1 + pad), y0..y1)
            .map_err(|e| fail(e.to_string()))?;
        chart
            .configure_mesh()
            .x_desc(axis.name())
            .y_desc("accuracy %")
            .x_labels(xs.len().max(2))
            .draw()
            .map_err(|e| fail(e.to_string()))?;
        let mut methods: Vec<Method> = Vec::new();
        for a in aggregates {
            if !methods.contains(&a.method) {
                methods.push(a.method);
            }
        }
        for (i, &m) in methods.iter().enumerate() {
            let color = Palette99::pick(i).to_rgba();
            let mut pts: Vec<&AggregateResult> = aggregates.iter().filter(|a| a.method == m).collect();
            pts.sort_by_key(|a| axis.value(&a.setting));
            let line: Vec<(f64, f64)> = pts
                .iter()
                .map(|a| (axis.value(&a.setting) as f64, 100.0 * a.mean))
                .collect();
            chart
                .draw_series(LineSeries::new(line, color.stroke_width(2)))
                .map_err(|e| fail(e.to_string()))?
                .label(m.name())
                .legend(move |(x, y)| PathElement::new(vec![(x, y), (x + 18, y)], color.stroke_width(2)));
            chart
                .draw_series(pts.iter().map(|a| {
                    let x = axis.value(&a.setting) as f64;
                    ErrorBar::new_vertical(
                        x,
                        100.0 * (a.mean - a.ci95),
                        100.0 * a.mean,
                        100.0 * (a.mean + a.ci95),
                        color.filled(),
                        8,
                    )
                }))
                .map_err(|e| fail(e.to_string()))?;
        }
        chart
            .configure_series_labels()
            .background_style(WHITE.mix(0.8))
            .border_style(BLACK)
            .draw()
            .map_err(|e| fail(e.to_string()))?;
        root.present().map_err(|e| fail(e.to_string()))?;
    }
    Ok(svg)
}

#[derive(Debug, Default)]
pub struct ReportSummary {
    pub records: usize,
    pub warnings: Vec<String>,
    pub files: Vec<PathBuf>,
    /// The rendered text table of every run directory, concatenated.
    pub table: String,
}

/// Writes tables, CSV files and plots for `records` into `dir`.
pub fn write_report(dir: &Path, records: &[ResultRecord], warnings: usize) -> Result<(String, Vec<PathBuf>)> {
    let aggregates = records::aggregate_all(records)?;
    let comparisons = paired_comparisons(records);
    let hashes = config_hashes(records);
    let hash = hashes.first().copied().unwrap_or("");
    let table = render_table(&aggregates, &comparisons, &hashes, warnings);
    let mut files = Vec::new();
    let mut put = |name: String, bytes: &[u8]| -> Result<()> {
        let path = dir.join(name);
        write_atomic(&path, bytes)?;
        files.push(path);
        Ok(())
    };
    put(TABLE_FILE.into(), table.as_bytes())?;
    put(AGGREGATES_CSV.into(), &aggregates_csv(&aggregates)?)?;
    if !comparisons.is_empty() {
        put(COMPARISONS_CSV.into(), &comparisons_csv(&comparisons, hash)?)?;
    }
    if let Some(bytes) = paired_csv(records)? {
        put(PAIRED_CSV.into(), &bytes)?;
    }
    if let Some(axis) = sweep_axis(&settings(records)) {
        let svg = sweep_plot(&aggregates, axis, hash)?;
        put(format!("accuracy_vs_{}.svg", axis.name()), svg.as_bytes())?;
    }
    Ok((table, files))
}

/// Directories under `root` (including `root`) that hold a records file.
fn run_dirs(root: &Path) -> Result<Vec<PathBuf>> {
    if !root.is_dir() {
        return Err(AppError::config(format!(
            "results directory {} does not exist",
            root.display()
        )));
    }
    let mut dirs = Vec::new();
    if root.join(RECORDS_FILE).is_file() {
        dirs.push(root.to_path_buf());
    }
    let mut children: Vec<PathBuf> = fs::read_dir(root)
        .map_err(|e| AppError::io(root, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.join(RECORDS_FILE).is_file())
        .collect();
    children.sort();
    dirs.extend(children);
    Ok(dirs)
}

/// Regenerates the report of every run under `root` from stored records.
pub fn cmd_report(root: &Path) -> Result<ReportSummary> {
    let dirs = run_dirs(root)?;
    let mut summary = ReportSummary::default();
    for dir in dirs {
        let loaded = records::read_records(&dir.join(RECORDS_FILE))?;
        if loaded.records.is_empty() {
            summary.warnings.extend(loaded.warnings);
            continue;
        }
        let (table, files) = write_report(&dir, &loaded.records, loaded.warnings.len())?;
        summary.records += loaded.records.len();
        summary.warnings.extend(loaded.warnings);
        summary.files.extend(files);
        summary.table.push_str(&format!("== {}\n{table}", dir.display()));
    }
    if summary.records == 0 {
        return Err(AppError::config(format!("no result records under {}", root.display())));
    }
    Ok(summary)
}
