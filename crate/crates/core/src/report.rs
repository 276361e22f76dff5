//! File-in, file-out commands behind the `memscope` binary.
//!
//! Every command reads its inputs, writes only under `RunConfig::out`, and
//! produces byte-identical output for identical inputs and seed. Failures
//! carry an exit code: 1 for analysis failures, 2 for configuration or I/O.

use std::collections::BTreeSet;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::Serialize;
use serde_json::json;

use crate::analysis::{
    self, accuracy_probability_summary, context_ablation_report, group_probability_stats,
    length_histogram, pca_project, random_split_stats, reversal_similarity_analysis, LengthAxis,
    RunSamples,
};
use crate::classify::{
    label_traces, write_labels, LabelRun, LabeledSample, MatchMode, RunManifest,
};
use crate::corpus::{
    self, build_contextual_child_prompt, build_prompts, load_dataset, read_dataset_file,
    validate_dataset, write_prompts, DatasetKind, DatasetRecord, Direction, ExemplarConfig,
    PromptSpec, ValidationReport,
};
use crate::plot;
use crate::trace::{read_trace_file, TraceHeader};

pub const EXIT_ANALYSIS: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;

pub const DEFAULT_REPEATS: usize = 10;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CommandError {
    pub code: i32,
    pub message: String,
}

impl CommandError {
    pub fn config(message: impl Into<String>) -> Self {
        CommandError {
            code: EXIT_CONFIG,
            message: message.into(),
        }
    }

    pub fn analysis(message: impl Into<String>) -> Self {
        CommandError {
            code: EXIT_ANALYSIS,
            message: message.into(),
        }
    }
}

impl fmt::Display for CommandError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl std::error::Error for CommandError {}

impl From<corpus::CorpusError> for CommandError {
    fn from(e: corpus::CorpusError) -> Self {
        CommandError::config(e.to_string())
    }
}

impl From<crate::trace::TraceError> for CommandError {
    fn from(e: crate::trace::TraceError) -> Self {
        CommandError::config(e.to_string())
    }
}

impl From<crate::classify::ClassifyError> for CommandError {
    fn from(e: crate::classify::ClassifyError) -> Self {
        match e {
            crate::classify::ClassifyError::Io { .. } => CommandError::config(e.to_string()),
            _ => CommandError::analysis(e.to_string()),
        }
    }
}

impl From<analysis::AnalysisError> for CommandError {
    fn from(e: analysis::AnalysisError) -> Self {
        CommandError::analysis(e.to_string())
    }
}

pub type Result<T, E = CommandError> = std::result::Result<T, E>;

/// Inputs shared by all commands.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub dataset: Option<PathBuf>,
    pub kind: Option<DatasetKind>,
    pub exemplars: Option<PathBuf>,
    /// Trace files; the first one is the primary run.
    pub traces: Vec<PathBuf>,
    /// Trace of the child questions asked after their parent question.
    pub context_traces: Option<PathBuf>,
    pub mode: MatchMode,
    pub out: PathBuf,
    pub seed: u64,
    pub n_repeats: usize,
}

impl RunConfig {
    pub fn new(out: impl Into<PathBuf>) -> Self {
        RunConfig {
            dataset: None,
            kind: None,
            exemplars: None,
            traces: Vec::new(),
            context_traces: None,
            mode: MatchMode::default(),
            out: out.into(),
            seed: 0,
            n_repeats: DEFAULT_REPEATS,
        }
    }

    fn dataset_path(&self) -> Result<&Path> {
        self.dataset
            .as_deref()
            .ok_or_else(|| CommandError::config("--dataset is required"))
    }

    fn require_kind(&self) -> Result<DatasetKind> {
        self.kind
            .ok_or_else(|| CommandError::config("--kind is required"))
    }

    fn exemplar_config(&self) -> Result<ExemplarConfig> {
        match &self.exemplars {
            None => Ok(ExemplarConfig::defaults()),
            Some(path) if !path.exists() => Err(CommandError::config(format!(
                "exemplar file not found: {}",
                path.display()
            ))),
            Some(path) => Ok(ExemplarConfig::load(path)?),
        }
    }

    fn ensure_out(&self) -> Result<()> {
        fs::create_dir_all(&self.out)
            .map_err(|e| CommandError::config(format!("{}: {e}", self.out.display())))
    }

    fn write(&self, name: &str, contents: &str) -> Result<PathBuf> {
        let path = self.out.join(name);
        fs::write(&path, contents)
            .map_err(|e| CommandError::config(format!("{}: {e}", path.display())))?;
        Ok(path)
    }

    fn records(&self) -> Result<Vec<DatasetRecord>> {
        let path = self.dataset_path()?;
        if !path.exists() {
            return Err(CommandError::config(format!(
                "dataset not found: {}",
                path.display()
            )));
        }
        Ok(load_dataset(path, self.require_kind()?)?)
    }
}

/// Checks a dataset file and writes `validation.json`. Fails with exit code
/// 1 when any record violates an invariant.
pub fn cmd_validate_dataset(config: &RunConfig) -> Result<ValidationReport> {
    let path = config.dataset_path()?;
    if !path.exists() {
        return Err(CommandError::config(format!(
            "dataset not found: {}",
            path.display()
        )));
    }
    let records = read_dataset_file(path, config.kind)?;
    let report = validate_dataset(&records);
    config.ensure_out()?;
    config.write(
        "validation.json",
        &(serde_json::to_string_pretty(&report).expect("report serializes") + "\n"),
    )?;
    if !report.is_valid() {
        let listed: Vec<String> = report
            .violations
            .iter()
            .map(|v| format!("{}: {}", v.record_id, v.message))
            .collect();
        return Err(CommandError::analysis(format!(
            "{} violation(s):\n{}",
            listed.len(),
            listed.join("\n")
        )));
    }
    Ok(report)
}

fn dataset_prompts(config: &RunConfig) -> Result<(Vec<DatasetRecord>, Vec<PromptSpec>)> {
    let exemplars = config.exemplar_config()?;
    let records = config.records()?;
    let prompts = build_prompts(&records, &exemplars)?;
    Ok((records, prompts))
}

fn contextual_prompts(config: &RunConfig, records: &[DatasetRecord]) -> Result<Vec<PromptSpec>> {
    let set = config
        .exemplar_config()?
        .set_for(DatasetKind::CelebrityParent);
    records
        .iter()
        .map(|r| build_contextual_child_prompt(r, &set).map_err(CommandError::from))
        .collect()
}

/// Writes `prompts.jsonl`; for celebrity_parent also `prompts_context.jsonl`
/// with each child question preceded by its answered parent question.
pub fn cmd_prompts(config: &RunConfig) -> Result<Vec<PathBuf>> {
    let (records, prompts) = dataset_prompts(config)?;
    config.ensure_out()?;
    let mut written = Vec::new();
    let path = config.out.join("prompts.jsonl");
    write_prompts(&path, &prompts)?;
    written.push(path);
    if config.kind == Some(DatasetKind::CelebrityParent) {
        let path = config.out.join("prompts_context.jsonl");
        write_prompts(&path, &contextual_prompts(config, &records)?)?;
        written.push(path);
    }
    Ok(written)
}

/// A labeled trace run.
#[derive(Debug, Clone)]
pub struct LabeledRun {
    pub header: TraceHeader,
    pub run: LabelRun,
}

fn label_file(path: &Path, prompts: &[PromptSpec], mode: MatchMode) -> Result<LabeledRun> {
    if !path.exists() {
        return Err(CommandError::config(format!(
            "trace file not found: {}",
            path.display()
        )));
    }
    let (header, samples) = read_trace_file(path)?;
    if samples.is_empty() {
        return Err(CommandError::analysis(format!(
            "empty trace file: {}",
            path.display()
        )));
    }
    let run = label_traces(prompts, &samples, mode)?;
    Ok(LabeledRun { header, run })
}

fn primary_trace(config: &RunConfig) -> Result<&Path> {
    config
        .traces
        .first()
        .map(PathBuf::as_path)
        .ok_or_else(|| CommandError::config("--traces is required"))
}

/// Labels the primary trace file and writes `labels.jsonl` and
/// `manifest.json`. Sample ids present on only one side are listed in the
/// manifest and make the command fail with exit code 1.
pub fn cmd_classify(config: &RunConfig) -> Result<RunManifest> {
    let (_, prompts) = dataset_prompts(config)?;
    let labeled = label_file(primary_trace(config)?, &prompts, config.mode)?;
    let manifest = RunManifest {
        dataset_id: labeled.header.dataset_id.clone(),
        model_id: labeled.header.model_id.clone(),
        mode: config.mode,
        counts: labeled.run.counts(),
        missing: labeled.run.missing.clone(),
        unknown: labeled.run.unknown.clone(),
    };
    config.ensure_out()?;
    write_labels(&config.out, &labeled.run, &manifest)?;
    if !labeled.run.is_complete() {
        let mut message = String::from("unmatched sample ids");
        if !manifest.missing.is_empty() {
            message.push_str(&format!(
                "\nmissing (no trace): {}",
                manifest.missing.join(", ")
            ));
        }
        if !manifest.unknown.is_empty() {
            message.push_str(&format!(
                "\nunknown (no prompt): {}",
                manifest.unknown.join(", ")
            ));
        }
        return Err(CommandError::analysis(message));
    }
    Ok(manifest)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Analysis {
    Length,
    Prob,
    Split,
    AccProb,
    Pca,
    Reversal,
    Ablation,
}

impl Analysis {
    pub const ALL: [Analysis; 7] = [
        Analysis::Length,
        Analysis::Prob,
        Analysis::Split,
        Analysis::AccProb,
        Analysis::Pca,
        Analysis::Reversal,
        Analysis::Ablation,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Analysis::Length => "length",
            Analysis::Prob => "prob",
            Analysis::Split => "split",
            Analysis::AccProb => "acc_prob",
            Analysis::Pca => "pca",
            Analysis::Reversal => "reversal",
            Analysis::Ablation => "ablation",
        }
    }

    fn needs_celebrity(self) -> bool {
        matches!(self, Analysis::Reversal | Analysis::Ablation)
    }
}

impl FromStr for Analysis {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        Analysis::ALL
            .into_iter()
            .find(|a| a.as_str() == s)
            .ok_or_else(|| format!("unknown analysis {s:?}"))
    }
}

/// Parses a comma-separated analysis list; `all` selects every analysis.
pub fn parse_analyses(spec: &str) -> Result<BTreeSet<Analysis>> {
    let mut out = BTreeSet::new();
    for part in spec.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        if part == "all" {
            out.extend(Analysis::ALL);
        } else {
            out.insert(part.parse().map_err(CommandError::config)?);
        }
    }
    if out.is_empty() {
        return Err(CommandError::config("no analysis requested"));
    }
    Ok(out)
}

fn csv_of<T: Serialize>(rows: impl IntoIterator<Item = T>) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    for row in rows {
        w.serialize(row).expect("row serializes");
    }
    String::from_utf8(w.into_inner().expect("in-memory writer")).expect("utf-8 csv")
}

struct Emitter<'a> {
    config: &'a RunConfig,
    model_id: String,
    dataset_id: String,
    n_samples: usize,
    written: Vec<PathBuf>,
}

impl Emitter<'_> {
    fn emit(
        &mut self,
        analysis: Analysis,
        csv: String,
        result: serde_json::Value,
        skipped: serde_json::Value,
    ) -> Result<()> {
        let name = analysis.as_str();
        let doc = json!({
            "analysis": name,
            "metadata": {
                "model_id": self.model_id,
                "dataset_id": self.dataset_id,
                "n_samples": self.n_samples,
                "seed": self.config.seed,
                "n_repeats": self.config.n_repeats,
                "mode": self.config.mode.as_str(),
                "variance_convention": "population",
                "skipped_counts": skipped,
            },
            "result": result,
        });
        self.written
            .push(self.config.write(&format!("{name}.csv"), &csv)?);
        self.written.push(self.config.write(
            &format!("{name}.json"),
            &(serde_json::to_string_pretty(&doc).expect("json serializes") + "\n"),
        )?);
        Ok(())
    }

    fn svg(&mut self, analysis: Analysis, svg: String) -> Result<()> {
        self.written.push(
            self.config
                .write(&format!("{}.svg", analysis.as_str()), &svg)?,
        );
        Ok(())
    }
}

#[derive(Serialize)]
struct LengthCsvRow<'a> {
    axis: &'a str,
    value: usize,
    memorized_count: usize,
    non_memorized_count: usize,
    non_memorized_ratio: f64,
}

#[derive(Serialize)]
struct GroupCsvRow<'a> {
    group: &'a str,
    n: usize,
    mean_prob: Option<f64>,
    var_prob: Option<f64>,
}

#[derive(Serialize)]
struct SplitCsvRow {
    split_index: usize,
    half: analysis::SplitHalf,
    n: usize,
    mean_prob: f64,
    var_prob: f64,
}

#[derive(Serialize)]
struct ReversalCsvRow<'a> {
    record_id: &'a str,
    sim_same_concept: f64,
    sim_cross_concept: f64,
}

fn of_direction(samples: &[LabeledSample], direction: Direction) -> Vec<LabeledSample> {
    samples
        .iter()
        .filter(|s| s.direction == Some(direction))
        .cloned()
        .collect()
}

/// Runs the requested analyses over the primary trace (and, for `acc_prob`,
/// every trace given) and writes one CSV and one JSON document per analysis,
/// plus `length.svg` and `pca.svg`. Returns the written paths in order.
pub fn cmd_analyze(config: &RunConfig, which: &BTreeSet<Analysis>) -> Result<Vec<PathBuf>> {
    let kind = config.require_kind()?;
    if let Some(a) = which.iter().find(|a| a.needs_celebrity()) {
        if kind != DatasetKind::CelebrityParent {
            return Err(CommandError::analysis(format!(
                "{} requires celebrity_parent, got {kind}",
                a.as_str()
            )));
        }
    }
    if which.contains(&Analysis::Ablation) && config.context_traces.is_none() {
        return Err(CommandError::config("ablation requires --context-traces"));
    }
    let (records, prompts) = dataset_prompts(config)?;
    let primary = label_file(primary_trace(config)?, &prompts, config.mode)?;
    let samples = &primary.run.samples;
    config.ensure_out()?;

    let mut out = Emitter {
        config,
        model_id: primary.header.model_id.clone(),
        dataset_id: primary.header.dataset_id.clone(),
        n_samples: samples.len(),
        written: Vec::new(),
    };
    let unmatched = json!({
        "missing_traces": primary.run.missing.len(),
        "unknown_traces": primary.run.unknown.len(),
    });

    for &analysis in which {
        match analysis {
            Analysis::Length => {
                let hists = [
                    length_histogram(samples, LengthAxis::ContextWords)?,
                    length_histogram(samples, LengthAxis::PredictedChars)?,
                ];
                let csv = csv_of(hists.iter().flat_map(|h| {
                    h.bins.iter().map(|b| LengthCsvRow {
                        axis: h.axis.as_str(),
                        value: b.value,
                        memorized_count: b.memorized_count,
                        non_memorized_count: b.non_memorized_count,
                        non_memorized_ratio: b.non_memorized_ratio,
                    })
                }));
                out.emit(analysis, csv, json!(hists), unmatched.clone())?;
                let title = format!(
                    "{} / {}: non-memorized ratio by length",
                    out.model_id, out.dataset_id
                );
                out.svg(analysis, plot::length_ratio_bars(&title, &hists))?;
            }
            Analysis::Prob => {
                let (mem, non) = group_probability_stats(samples);
                let csv = csv_of([&mem, &non].map(|g| GroupCsvRow {
                    group: g.group.as_str(),
                    n: g.n,
                    mean_prob: g.mean_prob,
                    var_prob: g.var_prob,
                }));
                out.emit(analysis, csv, json!([mem, non]), unmatched.clone())?;
            }
            Analysis::Split => {
                let rows = random_split_stats(samples, config.n_repeats, config.seed)?;
                let csv = csv_of(rows.iter().map(|r| SplitCsvRow {
                    split_index: r.split_index,
                    half: r.half,
                    n: r.n,
                    mean_prob: r.mean_prob,
                    var_prob: r.var_prob,
                }));
                out.emit(analysis, csv, json!(rows), unmatched.clone())?;
            }
            Analysis::AccProb => {
                let mut runs = vec![RunSamples {
                    model_id: primary.header.model_id.clone(),
                    dataset_id: primary.header.dataset_id.clone(),
                    samples: samples.clone(),
                }];
                for path in &config.traces[1..] {
                    let extra = label_file(path, &prompts, config.mode)?;
                    runs.push(RunSamples {
                        model_id: extra.header.model_id,
                        dataset_id: extra.header.dataset_id,
                        samples: extra.run.samples,
                    });
                }
                let rows = accuracy_probability_summary(&runs)?;
                let averages: Vec<_> = analysis::model_averages(&rows)
                    .into_iter()
                    .map(|(m, a, p)| json!({"model_id": m, "accuracy": a, "mean_prob_all": p}))
                    .collect();
                out.emit(
                    analysis,
                    csv_of(&rows),
                    json!({"runs": rows, "model_averages": averages}),
                    unmatched.clone(),
                )?;
            }
            Analysis::Pca => {
                let vectors: Vec<Vec<f64>> = samples.iter().map(|s| s.mean_rep.clone()).collect();
                let dim = vectors.first().map_or(0, Vec::len);
                let pca = pca_project(&vectors, dim.min(2))?;
                let mut csv = String::from("sample_id,group");
                for j in 0..pca.components.len() {
                    csv.push_str(&format!(",pc{}", j + 1));
                }
                csv.push('\n');
                let body = csv_of(samples.iter().zip(&pca.projections).map(|(s, p)| {
                    let mut row = vec![
                        s.sample_id.clone(),
                        if s.memorized {
                            "memorized"
                        } else {
                            "non_memorized"
                        }
                        .to_string(),
                    ];
                    row.extend(p.iter().map(|x| x.to_string()));
                    row
                }));
                csv.push_str(&body);
                out.emit(
                    analysis,
                    csv,
                    json!({
                        "components": pca.components,
                        "explained_variance": pca.explained_variance,
                        "explained_variance_ratio": pca.explained_variance_ratio,
                        "column_means": pca.column_means,
                        "rank": pca.rank,
                    }),
                    unmatched.clone(),
                )?;
                let flags: Vec<bool> = samples.iter().map(|s| s.memorized).collect();
                let title = format!(
                    "{} / {}: representations (PCA)",
                    out.model_id, out.dataset_id
                );
                out.svg(
                    analysis,
                    plot::pca_scatter(&title, &pca.projections, &flags),
                )?;
            }
            Analysis::Reversal => {
                let rev = reversal_similarity_analysis(
                    &of_direction(samples, Direction::ParentQ),
                    &of_direction(samples, Direction::ChildQ),
                )?;
                let csv = csv_of(rev.pairs.iter().map(|p| ReversalCsvRow {
                    record_id: &p.record_id,
                    sim_same_concept: p.sim_same_concept,
                    sim_cross_concept: p.sim_cross_concept,
                }));
                let mut skipped = unmatched.clone();
                skipped["reversal_records"] = json!(rev.skipped.len());
                out.emit(
                    analysis,
                    csv,
                    json!({"summary": rev.summary, "pairs": rev.pairs, "skipped": rev.skipped}),
                    skipped,
                )?;
            }
            Analysis::Ablation => {
                let ctx_prompts = contextual_prompts(config, &records)?;
                let path = config.context_traces.as_deref().expect("checked above");
                let with_ctx = label_file(path, &ctx_prompts, config.mode)?;
                let table = context_ablation_report(
                    &with_ctx.run.samples,
                    &of_direction(samples, Direction::ChildQ),
                    &of_direction(samples, Direction::ParentQ),
                )?;
                let mut skipped = unmatched.clone();
                skipped["context_missing_traces"] = json!(with_ctx.run.missing.len());
                out.emit(analysis, csv_of([&table]), json!(table), skipped)?;
            }
        }
    }
    Ok(out.written)
}

/// Validates, builds prompts, labels, and runs every analysis that applies
/// to the dataset kind. Ablation runs only when context traces are given.
pub fn cmd_report_all(config: &RunConfig) -> Result<Vec<PathBuf>> {
    let kind = config.require_kind()?;
    cmd_validate_dataset(config)?;
    let mut written = cmd_prompts(config)?;
    cmd_classify(config)?;
    written.push(config.out.join("labels.jsonl"));
    written.push(config.out.join("manifest.json"));
    let which: BTreeSet<Analysis> = Analysis::ALL
        .into_iter()
        .filter(|a| !a.needs_celebrity() || kind == DatasetKind::CelebrityParent)
        .filter(|a| *a != Analysis::Ablation || config.context_traces.is_some())
        .collect();
    written.extend(cmd_analyze(config, &which)?);
    Ok(written)
}
