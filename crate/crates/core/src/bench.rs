//! Evaluation bench: score recognizer configurations over a labeled image
//! directory and emit an accuracy/latency table.
//!
//! Ground truth is carried in filenames (`HPJ149.png` reads as HPJ149), so
//! a dataset is just a folder of images. Accuracy is tracked as exact
//! integer counts; percentages only materialize at the formatting edge.

use std::path::{Path, PathBuf};
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::detection::DetectorKind;
use crate::recognizer::{
    BuildContext, ImageSource, OcrKind, PipelineConfig, PlateRecognizer, PlateString,
    RecognitionResult, RoiVariant,
};

#[derive(Debug, thiserror::Error)]
pub enum BenchError {
    #[error("read dataset {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("dataset {path} contains no images")]
    EmptyDataset { path: PathBuf },
    #[error("dataset {path} has stems that do not parse as plates: {stems}")]
    BadStems { path: PathBuf, stems: String },
}

/// One labeled image: the file plus the plate its stem spells.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DatasetItem {
    pub path: PathBuf,
    pub truth: PlateString,
}

const IMAGE_EXTENSIONS: [&str; 3] = ["png", "jpg", "jpeg"];

/// Loads a dataset directory. Image files (png/jpg/jpeg) are labeled by
/// their stem via plate normalization, so `hpj-149.png` and `HPJ149.png`
/// carry the same truth. Other extensions are skipped. A stem that does
/// not normalize is a hard error naming every offender: a mislabeled
/// dataset silently skewing scores is worse than a refused run.
pub fn load_dataset(dir: impl AsRef<Path>) -> Result<Vec<DatasetItem>, BenchError> {
    let dir = dir.as_ref();
    let io_err = |source| BenchError::Io {
        path: dir.to_owned(),
        source,
    };
    let mut items = Vec::new();
    let mut offenders = Vec::new();
    for entry in std::fs::read_dir(dir).map_err(io_err)? {
        let entry = entry.map_err(io_err)?;
        let path = entry.path();
        if !path.is_file() {
            continue;
        }
        let ext_is_image = path
            .extension()
            .and_then(|e| e.to_str())
            .is_some_and(|e| IMAGE_EXTENSIONS.contains(&e.to_ascii_lowercase().as_str()));
        if !ext_is_image {
            continue;
        }
        let stem = path
            .file_stem()
            .and_then(|s| s.to_str())
            .unwrap_or_default();
        match crate::recognizer::normalize_plate(stem) {
            Ok(truth) => items.push(DatasetItem { path, truth }),
            Err(_) => offenders.push(stem.to_owned()),
        }
    }
    if !offenders.is_empty() {
        offenders.sort();
        return Err(BenchError::BadStems {
            path: dir.to_owned(),
            stems: offenders.join(", "),
        });
    }
    if items.is_empty() {
        return Err(BenchError::EmptyDataset {
            path: dir.to_owned(),
        });
    }
    items.sort_by(|a, b| a.path.cmp(&b.path));
    Ok(items)
}

/// Classic edit distance over bytes (plates are ASCII).
pub fn levenshtein(a: &str, b: &str) -> usize {
    let (a, b) = (a.as_bytes(), b.as_bytes());
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    let mut cur = vec![0usize; b.len() + 1];
    for (i, &ca) in a.iter().enumerate() {
        cur[0] = i + 1;
        for (j, &cb) in b.iter().enumerate() {
            let sub = prev[j] + usize::from(ca != cb);
            cur[j + 1] = sub.min(prev[j + 1] + 1).min(cur[j] + 1);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// Score of one recognition run against its truth.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EvalRecord {
    pub exact: bool,
    pub char_correct: usize,
    pub char_total: usize,
}

/// Scores one result. Failures score zero over the truth length. Equal
/// lengths compare position by position; otherwise character credit is
/// `|truth| - edit_distance`, floored at zero, so a near-miss with a
/// dropped character still earns most of its characters.
pub fn score(truth: &PlateString, result: &RecognitionResult) -> EvalRecord {
    let truth_s = truth.as_str();
    let char_total = truth_s.len();
    match &result.plate {
        Err(_) => EvalRecord {
            exact: false,
            char_correct: 0,
            char_total,
        },
        Ok(pred) => {
            let pred_s = pred.as_str();
            let char_correct = if pred_s.len() == truth_s.len() {
                truth_s
                    .bytes()
                    .zip(pred_s.bytes())
                    .filter(|(t, p)| t == p)
                    .count()
            } else {
                char_total.saturating_sub(levenshtein(truth_s, pred_s))
            };
            EvalRecord {
                exact: pred_s == truth_s,
                char_correct,
                char_total,
            }
        }
    }
}

/// Aggregate for one configuration over the whole dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchSummary {
    /// Config label minus the variant, e.g. `dual/heuristic/baseline`.
    pub family: String,
    pub variant: Option<RoiVariant>,
    /// Scored runs (items x repeats); 0 when the row aborted.
    pub n_runs: usize,
    pub exact_count: usize,
    pub char_correct_sum: usize,
    pub char_total_sum: usize,
    /// Summed wall time; absent when timing was disabled.
    pub total_time: Option<Duration>,
    /// Diagnostic when the recognizer could not be built.
    pub aborted: Option<String>,
}

impl BenchSummary {
    pub fn label(&self) -> String {
        match &self.variant {
            None => self.family.clone(),
            Some(v) => format!("{}/{}", self.family, v.label()),
        }
    }

    /// Exact-match rate as an exact rational (numerator, denominator).
    pub fn exact_rate(&self) -> (usize, usize) {
        (self.exact_count, self.n_runs)
    }

    /// Character-level rate as an exact rational.
    pub fn char_rate(&self) -> (usize, usize) {
        (self.char_correct_sum, self.char_total_sum)
    }

    /// Mean seconds per run, when timing ran.
    pub fn mean_time(&self) -> Option<f64> {
        match (self.total_time, self.n_runs) {
            (Some(t), n) if n > 0 => Some(t.as_secs_f64() / n as f64),
            _ => None,
        }
    }
}

fn family_of(cfg: &PipelineConfig) -> String {
    let label = cfg.label();
    match cfg.variant {
        None => label,
        Some(v) => label
            .strip_suffix(&format!("/{}", v.label()))
            .unwrap_or(&label)
            .to_owned(),
    }
}

/// How a bench run executes.
#[derive(Debug, Clone, Copy)]
pub struct BenchOptions {
    pub repeats: u32,
    /// Score items across threads. Faster, but wall times stop meaning
    /// anything, so timing is dropped and the table shows X there.
    pub parallel: bool,
}

impl Default for BenchOptions {
    fn default() -> Self {
        Self {
            repeats: 1,
            parallel: false,
        }
    }
}

/// Runs every configuration over the dataset. A configuration whose
/// recognizer cannot be built yields an aborted summary carrying the
/// diagnostic; the remaining rows still run. Output order follows config
/// order.
pub fn run_bench<B>(
    items: &[DatasetItem],
    configs: &[PipelineConfig],
    opts: &BenchOptions,
    mut build: B,
) -> Vec<BenchSummary>
where
    B: FnMut(&PipelineConfig) -> Result<Box<dyn PlateRecognizer>, String>,
{
    let repeats = opts.repeats.max(1);
    configs
        .iter()
        .map(|cfg| {
            let mut summary = BenchSummary {
                family: family_of(cfg),
                variant: cfg.variant,
                n_runs: 0,
                exact_count: 0,
                char_correct_sum: 0,
                char_total_sum: 0,
                total_time: if opts.parallel {
                    None
                } else {
                    Some(Duration::ZERO)
                },
                aborted: None,
            };
            let recognizer = match build(cfg) {
                Ok(r) => r,
                Err(diag) => {
                    summary.total_time = None;
                    summary.aborted = Some(diag);
                    return summary;
                }
            };
            if opts.parallel {
                run_parallel(items, repeats, recognizer.as_ref(), &mut summary);
            } else {
                for _ in 0..repeats {
                    for item in items {
                        let result = recognizer.recognize(&ImageSource::path(&item.path));
                        accumulate(&mut summary, &item.truth, &result);
                        if let Some(t) = summary.total_time.as_mut() {
                            *t += result.elapsed;
                        }
                    }
                }
            }
            summary
        })
        .collect()
}

/// [`run_bench`] wired to the standard recognizer builder.
pub fn run_bench_with_context(
    items: &[DatasetItem],
    configs: &[PipelineConfig],
    opts: &BenchOptions,
    ctx: &BuildContext,
) -> Vec<BenchSummary> {
    run_bench(items, configs, opts, |cfg| {
        crate::recognizer::build_recognizer(cfg, ctx).map_err(|e| e.to_string())
    })
}

fn accumulate(summary: &mut BenchSummary, truth: &PlateString, result: &RecognitionResult) {
    let rec = score(truth, result);
    summary.n_runs += 1;
    summary.exact_count += rec.exact as usize;
    summary.char_correct_sum += rec.char_correct;
    summary.char_total_sum += rec.char_total;
}

fn run_parallel(
    items: &[DatasetItem],
    repeats: u32,
    recognizer: &dyn PlateRecognizer,
    summary: &mut BenchSummary,
) {
    let threads = std::thread::available_parallelism()
        .map(|n| n.get())
        .unwrap_or(4)
        .min(items.len().max(1));
    let chunk = items.len().div_ceil(threads).max(1);
    for _ in 0..repeats {
        let partials: Vec<(usize, usize, usize, usize)> = std::thread::scope(|s| {
            let handles: Vec<_> = items
                .chunks(chunk)
                .map(|chunk| {
                    s.spawn(move || {
                        let mut p = (0usize, 0usize, 0usize, 0usize);
                        for item in chunk {
                            let result = recognizer.recognize(&ImageSource::path(&item.path));
                            let rec = score(&item.truth, &result);
                            p.0 += 1;
                            p.1 += rec.exact as usize;
                            p.2 += rec.char_correct;
                            p.3 += rec.char_total;
                        }
                        p
                    })
                })
                .collect();
            handles
                .into_iter()
                .map(|h| h.join().expect("bench worker"))
                .collect()
        });
        for (n, exact, cc, ct) in partials {
            summary.n_runs += n;
            summary.exact_count += exact;
            summary.char_correct_sum += cc;
            summary.char_total_sum += ct;
        }
    }
}

/// One emitted table row: a configuration family across the four source
/// columns plus its mean time.
#[derive(Debug, Clone, PartialEq)]
pub struct TableRow {
    pub family: String,
    /// Exact rationals per column: original, original-ROI, gray-ROI,
    /// binary-ROI. `None` renders as X.
    pub cells: [Option<(usize, usize)>; 4],
    /// (summed seconds, runs) across the family's summaries.
    pub time: Option<(f64, usize)>,
    /// Diagnostics from aborted configs in this family.
    pub aborted: Vec<String>,
}

impl TableRow {
    pub fn mean_time(&self) -> Option<f64> {
        self.time
            .and_then(|(secs, runs)| (runs > 0).then(|| secs / runs as f64))
    }
}

fn column_index(variant: Option<RoiVariant>) -> usize {
    match variant {
        None => 0, // single-model backends read the full frame
        Some(RoiVariant::Original) => 1,
        Some(RoiVariant::Gray) => 2,
        Some(RoiVariant::Binary) => 3,
    }
}

/// Groups summaries into rows: one row per family (config order), variants
/// spread across columns, time averaged over the family's timed runs.
pub fn summaries_to_rows(summaries: &[BenchSummary]) -> Vec<TableRow> {
    let mut rows: Vec<TableRow> = Vec::new();
    for s in summaries {
        let row = match rows.iter_mut().find(|r| r.family == s.family) {
            Some(r) => r,
            None => {
                rows.push(TableRow {
                    family: s.family.clone(),
                    cells: [None; 4],
                    time: None,
                    aborted: Vec::new(),
                });
                rows.last_mut().expect("just pushed")
            }
        };
        if let Some(diag) = &s.aborted {
            row.aborted.push(format!("{}: {}", s.label(), diag));
            continue;
        }
        row.cells[column_index(s.variant)] = Some(s.exact_rate());
        if let Some(t) = s.total_time {
            let (secs, runs) = row.time.get_or_insert((0.0, 0));
            *secs += t.as_secs_f64();
            *runs += s.n_runs;
        }
    }
    rows
}

/// Percent with no trailing noise: integer when the rational is integral,
/// otherwise two decimals.
pub fn format_accuracy(num: usize, den: usize) -> String {
    if den == 0 {
        return "X".to_owned();
    }
    let pct = num * 100;
    if pct % den == 0 {
        format!("{}", pct / den)
    } else {
        format!("{:.2}", pct as f64 / den as f64)
    }
}

fn cell_text(cell: Option<(usize, usize)>) -> String {
    match cell {
        Some((num, den)) => format_accuracy(num, den),
        None => "X".to_owned(),
    }
}

fn time_text(row: &TableRow) -> String {
    match row.mean_time() {
        Some(secs) => format!("{secs:.4}"),
        None => "X".to_owned(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TableFormat {
    Markdown,
    Csv,
}

/// Renders rows in the requested format. Accuracy cells are exact-match
/// percentages; unavailable cells are X.
pub fn emit_table(rows: &[TableRow], format: TableFormat) -> String {
    match format {
        TableFormat::Markdown => emit_markdown(rows),
        TableFormat::Csv => emit_csv(rows),
    }
}

fn emit_markdown(rows: &[TableRow]) -> String {
    let mut out = String::new();
    out.push_str("| Config | Original | Original ROI | Gray ROI | Binary ROI | Avg time (s) |\n");
    out.push_str("|---|---|---|---|---|---|\n");
    for row in rows {
        out.push_str(&format!(
            "| {} | {} | {} | {} | {} | {} |\n",
            row.family,
            cell_text(row.cells[0]),
            cell_text(row.cells[1]),
            cell_text(row.cells[2]),
            cell_text(row.cells[3]),
            time_text(row),
        ));
    }
    out
}

fn emit_csv(rows: &[TableRow]) -> String {
    let mut out = String::from("config,original,original_roi,gray_roi,binary_roi,avg_time_s\n");
    for row in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            row.family,
            cell_text(row.cells[0]),
            cell_text(row.cells[1]),
            cell_text(row.cells[2]),
            cell_text(row.cells[3]),
            time_text(row),
        ));
    }
    out
}

/// Convenience: summaries straight to text.
pub fn emit_summaries(summaries: &[BenchSummary], format: TableFormat) -> String {
    emit_table(&summaries_to_rows(summaries), format)
}

/// The standard evaluation grid: every dual-pipeline variant with the
/// given detector/ocr, plus optionally the single-model backend.
pub fn standard_configs(
    detector: DetectorKind,
    ocr: OcrKind,
    include_lmm: bool,
) -> Vec<PipelineConfig> {
    let mut configs: Vec<PipelineConfig> = [RoiVariant::Original, RoiVariant::Gray, RoiVariant::Binary]
        .into_iter()
        .map(|v| PipelineConfig::dual(detector, ocr, v))
        .collect();
    if include_lmm {
        configs.push(PipelineConfig::lmm());
    }
    configs
}
