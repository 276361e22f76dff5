//! Memorized / non-memorized labeling by exact match.

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;
use unicode_normalization::UnicodeNormalization;

use crate::corpus::{Direction, PromptSpec};
use crate::trace::{ContextSpan, SampleTrace};

#[derive(Debug, Error)]
pub enum ClassifyError {
    #[error("trace {trace:?} does not belong to prompt {prompt:?}")]
    IdMismatch { trace: String, prompt: String },
    #[error(
        "sample {sample_id:?}: trace direction {trace:?} differs from prompt direction {prompt:?}"
    )]
    DirectionMismatch {
        sample_id: String,
        trace: Option<Direction>,
        prompt: Option<Direction>,
    },
    #[error("sample {0:?} has no generation steps")]
    EmptySteps(String),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T, E = ClassifyError> = std::result::Result<T, E>;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MatchMode {
    /// The answer may be followed by more text after a word boundary.
    #[default]
    Prefix,
    /// The whole normalized generation must equal the answer.
    Strict,
}

impl MatchMode {
    pub fn as_str(self) -> &'static str {
        match self {
            MatchMode::Prefix => "prefix",
            MatchMode::Strict => "strict",
        }
    }
}

impl std::str::FromStr for MatchMode {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "prefix" => Ok(MatchMode::Prefix),
            "strict" => Ok(MatchMode::Strict),
            _ => Err(format!("unknown match mode {s:?}")),
        }
    }
}

const TRAILING_PUNCT: &[char] = &['.', ',', '!', '?', ';', ':'];

/// Canonical form used for answer comparison.
///
/// NFC, outer whitespace trimmed, cut at the first remaining newline, inner
/// whitespace runs collapsed to one space, lowercased, trailing sentence
/// punctuation removed.
pub fn normalize_text(s: &str) -> String {
    let nfc: String = s.nfc().collect();
    let first_line = nfc.trim().split('\n').next().unwrap_or("");
    let collapsed = first_line.split_whitespace().collect::<Vec<_>>().join(" ");
    let lowered: String = collapsed
        .chars()
        .flat_map(|c| {
            // Only single-code-point mappings; multi-character expansions
            // (e.g. U+0130) are left untouched.
            let mut lower = c.to_lowercase();
            match (lower.next(), lower.next()) {
                (Some(l), None) => Some(l),
                _ => Some(c),
            }
        })
        .collect();
    lowered
        .trim_end_matches(|c: char| TRAILING_PUNCT.contains(&c) || c.is_whitespace())
        .to_string()
}

fn matches_normalized(generated: &str, target: &str, mode: MatchMode) -> bool {
    if target.is_empty() {
        return false;
    }
    match mode {
        MatchMode::Strict => generated == target,
        MatchMode::Prefix => match generated.strip_prefix(target) {
            Some("") => true,
            Some(rest) => rest
                .chars()
                .next()
                .is_some_and(|c| c.is_whitespace() || !c.is_alphanumeric()),
            None => false,
        },
    }
}

/// True iff `generated` matches `gold` or any alias under `mode`.
pub fn exact_match(generated: &str, gold: &str, aliases: &[String], mode: MatchMode) -> bool {
    let generated = normalize_text(generated);
    std::iter::once(gold)
        .chain(aliases.iter().map(String::as_str))
        .any(|target| matches_normalized(&generated, &normalize_text(target), mode))
}

/// A trace joined with its gold target.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledSample {
    pub sample_id: String,
    pub record_id: String,
    pub direction: Option<Direction>,
    pub memorized: bool,
    pub generated_text: String,
    pub gold: String,
    /// Number of leading steps that make up the prediction.
    pub predicted_steps: usize,
    pub mean_prob: f64,
    pub mean_rep: Vec<f64>,
    pub context_word_count: usize,
    pub predicted_char_count: usize,
    pub context_spans: Option<Vec<ContextSpan>>,
}

/// Steps that produced the answer: up to the first step whose accumulated
/// text covers a target when memorized, every step otherwise.
fn predicted_step_count(trace: &SampleTrace, spec: &PromptSpec, memorized: bool) -> usize {
    if !memorized {
        return trace.steps.len();
    }
    let mut acc = String::new();
    for (i, step) in trace.steps.iter().enumerate() {
        acc.push_str(&step.token);
        if exact_match(&acc, &spec.gold, &spec.gold_aliases, MatchMode::Prefix) {
            return i + 1;
        }
    }
    trace.steps.len()
}

pub fn label_sample(
    trace: &SampleTrace,
    spec: &PromptSpec,
    mode: MatchMode,
) -> Result<LabeledSample> {
    if trace.sample_id != spec.sample_id {
        return Err(ClassifyError::IdMismatch {
            trace: trace.sample_id.clone(),
            prompt: spec.sample_id.clone(),
        });
    }
    if trace.direction.is_some() && trace.direction != spec.direction {
        return Err(ClassifyError::DirectionMismatch {
            sample_id: spec.sample_id.clone(),
            trace: trace.direction,
            prompt: spec.direction,
        });
    }
    if trace.steps.is_empty() {
        return Err(ClassifyError::EmptySteps(trace.sample_id.clone()));
    }
    let memorized = exact_match(&trace.generated_text, &spec.gold, &spec.gold_aliases, mode);
    let used = &trace.steps[..predicted_step_count(trace, spec, memorized)];
    let n = used.len() as f64;
    let mean_prob = used.iter().map(|s| s.prob).sum::<f64>() / n;
    let dim = used[0].rep.len();
    let mut mean_rep = vec![0.0; dim];
    for step in used {
        for (acc, &x) in mean_rep.iter_mut().zip(&step.rep) {
            *acc += f64::from(x);
        }
    }
    for x in &mut mean_rep {
        *x /= n;
    }
    Ok(LabeledSample {
        sample_id: spec.sample_id.clone(),
        record_id: spec.record_id.clone(),
        direction: spec.direction,
        memorized,
        generated_text: trace.generated_text.clone(),
        gold: spec.gold.clone(),
        predicted_steps: used.len(),
        mean_prob,
        mean_rep,
        context_word_count: spec.context_word_count,
        predicted_char_count: spec.predicted_char_count,
        context_spans: trace.context_spans.clone(),
    })
}

/// Splits samples into (memorized, non-memorized), keeping input order.
pub fn partition(samples: &[LabeledSample]) -> (Vec<LabeledSample>, Vec<LabeledSample>) {
    samples.iter().cloned().partition(|s| s.memorized)
}

/// Result of joining a trace run with its prompts.
#[derive(Debug, Clone, Default)]
pub struct LabelRun {
    /// Labeled samples in trace order.
    pub samples: Vec<LabeledSample>,
    /// Prompt ids with no trace.
    pub missing: Vec<String>,
    /// Trace ids with no prompt.
    pub unknown: Vec<String>,
}

impl LabelRun {
    pub fn counts(&self) -> GroupCounts {
        let memorized = self.samples.iter().filter(|s| s.memorized).count();
        GroupCounts {
            memorized,
            non_memorized: self.samples.len() - memorized,
        }
    }

    pub fn is_complete(&self) -> bool {
        self.missing.is_empty() && self.unknown.is_empty()
    }
}

/// Labels every trace that has a prompt; unmatched ids are collected, not fatal.
pub fn label_traces(
    prompts: &[PromptSpec],
    traces: &[SampleTrace],
    mode: MatchMode,
) -> Result<LabelRun> {
    let by_id: HashMap<&str, &PromptSpec> =
        prompts.iter().map(|p| (p.sample_id.as_str(), p)).collect();
    let mut run = LabelRun::default();
    let mut seen = std::collections::HashSet::new();
    for trace in traces {
        match by_id.get(trace.sample_id.as_str()) {
            Some(spec) => {
                seen.insert(trace.sample_id.as_str());
                run.samples.push(label_sample(trace, spec, mode)?);
            }
            None => run.unknown.push(trace.sample_id.clone()),
        }
    }
    run.missing = prompts
        .iter()
        .filter(|p| !seen.contains(p.sample_id.as_str()))
        .map(|p| p.sample_id.clone())
        .collect();
    Ok(run)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroupCounts {
    pub memorized: usize,
    pub non_memorized: usize,
}

/// One labels-file line: a labeled sample without its vectors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelRow {
    pub sample_id: String,
    pub record_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub direction: Option<Direction>,
    pub memorized: bool,
    pub generated_text: String,
    pub gold: String,
    pub mean_prob: f64,
    pub predicted_steps: usize,
    pub context_word_count: usize,
    pub predicted_char_count: usize,
}

impl From<&LabeledSample> for LabelRow {
    fn from(s: &LabeledSample) -> Self {
        LabelRow {
            sample_id: s.sample_id.clone(),
            record_id: s.record_id.clone(),
            direction: s.direction,
            memorized: s.memorized,
            generated_text: s.generated_text.clone(),
            gold: s.gold.clone(),
            mean_prob: s.mean_prob,
            predicted_steps: s.predicted_steps,
            context_word_count: s.context_word_count,
            predicted_char_count: s.predicted_char_count,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub dataset_id: String,
    pub model_id: String,
    pub mode: MatchMode,
    pub counts: GroupCounts,
    #[serde(default)]
    pub missing: Vec<String>,
    #[serde(default)]
    pub unknown: Vec<String>,
}

/// Writes `labels.jsonl` and `manifest.json` into `dir`.
pub fn write_labels(dir: impl AsRef<Path>, run: &LabelRun, manifest: &RunManifest) -> Result<()> {
    let dir = dir.as_ref();
    let io = |path: &Path| {
        let path = path.display().to_string();
        move |source| ClassifyError::Io { path, source }
    };
    let mut labels = String::new();
    for sample in &run.samples {
        labels.push_str(&serde_json::to_string(&LabelRow::from(sample)).expect("label serializes"));
        labels.push('\n');
    }
    let labels_path = dir.join("labels.jsonl");
    fs::write(&labels_path, labels).map_err(io(&labels_path))?;
    let manifest_path = dir.join("manifest.json");
    let text = serde_json::to_string_pretty(manifest).expect("manifest serializes") + "\n";
    fs::write(&manifest_path, text).map_err(io(&manifest_path))
}

/// Groups labeled samples by record id, keeping one entry per direction.
pub fn by_record(samples: &[LabeledSample]) -> BTreeMap<&str, Vec<&LabeledSample>> {
    let mut out: BTreeMap<&str, Vec<&LabeledSample>> = BTreeMap::new();
    for s in samples {
        out.entry(s.record_id.as_str()).or_default().push(s);
    }
    out
}
