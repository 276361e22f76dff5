//! Inference trace files.
//!
//! A trace file is UTF-8 JSONL. The first line is a header describing the run
//! (model, dataset, representation width, decoding, token budget); every
//! following line is one sample: the generated tokens with their chosen-token
//! probabilities and last-layer representations, plus optional prefill
//! representations of named context spans.
//!
//! Representations are `f32`. Both `f32` and `f64` values are written with
//! the shortest decimal that parses back to the same bits, so a write/read
//! cycle is the identity.

use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::corpus::{Direction, PromptSpec};

pub const FORMAT_VERSION: u32 = 1;
pub const GREEDY: &str = "greedy";

/// Token text emitted by [`synth_traces`] for incorrectly answered samples.
pub const SYNTH_DISTRACTOR: &str = "<unk>";

const SYNTH_STREAM: u64 = 0x5eed;

#[derive(Debug, Clone, PartialEq)]
pub enum SampleProblem {
    NoSteps,
    TooManySteps {
        count: usize,
        max: usize,
    },
    TextMismatch,
    ProbOutOfRange {
        step: usize,
        prob: f64,
    },
    DimensionMismatch {
        location: String,
        expected: usize,
        actual: usize,
    },
    NonFinite {
        location: String,
    },
}

impl std::fmt::Display for SampleProblem {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            SampleProblem::NoSteps => write!(f, "no generation steps"),
            SampleProblem::TooManySteps { count, max } => {
                write!(f, "{count} steps exceed max_new_tokens {max}")
            }
            SampleProblem::TextMismatch => {
                write!(f, "generated_text is not the concatenation of step tokens")
            }
            SampleProblem::ProbOutOfRange { step, prob } => {
                write!(f, "step {step} prob {prob} outside [0, 1]")
            }
            SampleProblem::DimensionMismatch {
                location,
                expected,
                actual,
            } => write!(f, "{location} has {actual} components, expected {expected}"),
            SampleProblem::NonFinite { location } => {
                write!(f, "{location} has a non-finite component")
            }
        }
    }
}

#[derive(Debug, Error)]
pub enum TraceError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: {message}")]
    Json { line: usize, message: String },
    #[error("line {line}: expected a header record first")]
    MissingHeader { line: usize },
    #[error("line {line}: duplicate header")]
    DuplicateHeader { line: usize },
    #[error("line {line}: unknown record kind {kind:?}")]
    UnknownKind { line: usize, kind: String },
    #[error("invalid header: {0}")]
    Header(String),
    #[error("{}sample {sample_id:?}: {problem}", line.map(|l| format!("line {l}: ")).unwrap_or_default())]
    Sample {
        line: Option<usize>,
        sample_id: String,
        problem: SampleProblem,
    },
    #[error("synthetic scenario: {0}")]
    Scenario(String),
}

pub type Result<T, E = TraceError> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TraceHeader {
    pub format_version: u32,
    pub model_id: String,
    pub dataset_id: String,
    pub hidden_dim: usize,
    pub decoding: String,
    pub max_new_tokens: usize,
}

impl TraceHeader {
    pub fn new(
        model_id: impl Into<String>,
        dataset_id: impl Into<String>,
        hidden_dim: usize,
        max_new_tokens: usize,
    ) -> Self {
        TraceHeader {
            format_version: FORMAT_VERSION,
            model_id: model_id.into(),
            dataset_id: dataset_id.into(),
            hidden_dim,
            decoding: GREEDY.to_string(),
            max_new_tokens,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.format_version != FORMAT_VERSION {
            return Err(TraceError::Header(format!(
                "unsupported format_version {}",
                self.format_version
            )));
        }
        if self.hidden_dim == 0 {
            return Err(TraceError::Header("hidden_dim must be at least 1".into()));
        }
        if self.decoding != GREEDY {
            return Err(TraceError::Header(format!(
                "decoding must be {GREEDY:?}, got {:?}",
                self.decoding
            )));
        }
        if self.max_new_tokens == 0 {
            return Err(TraceError::Header(
                "max_new_tokens must be at least 1".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GenerationStep {
    pub token: String,
    pub prob: f64,
    pub rep: Vec<f32>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpanLabel {
    ContextChild,
    ContextParent,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ContextSpan {
    pub label: SpanLabel,
    pub text: String,
    pub rep: Vec<f32>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SampleTrace {
    pub sample_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub direction: Option<Direction>,
    pub generated_text: String,
    pub steps: Vec<GenerationStep>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub context_spans: Option<Vec<ContextSpan>>,
}

impl SampleTrace {
    /// Builds a trace whose `generated_text` is the concatenation of `steps`.
    pub fn from_steps(sample_id: impl Into<String>, steps: Vec<GenerationStep>) -> Self {
        SampleTrace {
            sample_id: sample_id.into(),
            direction: None,
            generated_text: steps.iter().map(|s| s.token.as_str()).collect(),
            steps,
            context_spans: None,
        }
    }

    pub fn span(&self, label: SpanLabel) -> Option<&ContextSpan> {
        self.context_spans
            .as_ref()?
            .iter()
            .find(|s| s.label == label)
    }

    pub fn check(&self, header: &TraceHeader) -> std::result::Result<(), SampleProblem> {
        if self.steps.is_empty() {
            return Err(SampleProblem::NoSteps);
        }
        if self.steps.len() > header.max_new_tokens {
            return Err(SampleProblem::TooManySteps {
                count: self.steps.len(),
                max: header.max_new_tokens,
            });
        }
        let joined: String = self.steps.iter().map(|s| s.token.as_str()).collect();
        if joined != self.generated_text {
            return Err(SampleProblem::TextMismatch);
        }
        let check_rep = |location: String, rep: &[f32]| {
            if rep.len() != header.hidden_dim {
                return Err(SampleProblem::DimensionMismatch {
                    location,
                    expected: header.hidden_dim,
                    actual: rep.len(),
                });
            }
            if rep.iter().any(|x| !x.is_finite()) {
                return Err(SampleProblem::NonFinite { location });
            }
            Ok(())
        };
        for (i, step) in self.steps.iter().enumerate() {
            if !(0.0..=1.0).contains(&step.prob) {
                return Err(SampleProblem::ProbOutOfRange {
                    step: i,
                    prob: step.prob,
                });
            }
            check_rep(format!("rep of step {i}"), &step.rep)?;
        }
        for span in self.context_spans.iter().flatten() {
            check_rep(format!("rep of span {:?}", span.text), &span.rep)?;
        }
        Ok(())
    }
}

#[derive(Serialize)]
struct Tagged<'a, T> {
    kind: &'static str,
    #[serde(flatten)]
    body: &'a T,
}

fn line_of<T: Serialize>(kind: &'static str, body: &T) -> String {
    serde_json::to_string(&Tagged { kind, body }).expect("trace records serialize")
}

/// Writes a validated trace stream. Nothing is written if any sample is invalid.
pub fn write_traces_to<W: Write>(
    mut out: W,
    header: &TraceHeader,
    samples: &[SampleTrace],
) -> Result<()> {
    header.validate()?;
    for sample in samples {
        sample.check(header).map_err(|problem| TraceError::Sample {
            line: None,
            sample_id: sample.sample_id.clone(),
            problem,
        })?;
    }
    let io = |source| TraceError::Io {
        path: "<stream>".into(),
        source,
    };
    writeln!(out, "{}", line_of("header", header)).map_err(io)?;
    for sample in samples {
        writeln!(out, "{}", line_of("sample", sample)).map_err(io)?;
    }
    out.flush().map_err(io)
}

pub fn write_traces(
    header: &TraceHeader,
    samples: &[SampleTrace],
    path: impl AsRef<Path>,
) -> Result<()> {
    let path = path.as_ref();
    let mut buf = Vec::new();
    write_traces_to(&mut buf, header, samples)?;
    let file = fs::File::create(path).map_err(|source| TraceError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let mut w = BufWriter::new(file);
    w.write_all(&buf)
        .and_then(|_| w.flush())
        .map_err(|source| TraceError::Io {
            path: path.display().to_string(),
            source,
        })
}

fn split_kind(line: usize, text: &str) -> Result<(String, Value)> {
    let mut value: Value = serde_json::from_str(text).map_err(|e| TraceError::Json {
        line,
        message: e.to_string(),
    })?;
    let kind = value
        .as_object_mut()
        .and_then(|o| o.remove("kind"))
        .and_then(|k| k.as_str().map(str::to_string))
        .ok_or_else(|| TraceError::Json {
            line,
            message: "record is not an object with a string \"kind\"".into(),
        })?;
    Ok((kind, value))
}

/// Streaming reader over the samples of a trace file.
pub struct TraceReader<R> {
    lines: std::io::Lines<R>,
    line: usize,
    header: TraceHeader,
}

impl<R: BufRead> TraceReader<R> {
    /// Reads the header line and returns a reader positioned at the first sample.
    pub fn new(reader: R) -> Result<Self> {
        let mut lines = reader.lines();
        let mut line = 0;
        loop {
            line += 1;
            let text = match lines.next() {
                None => return Err(TraceError::MissingHeader { line }),
                Some(t) => t.map_err(|e| TraceError::Json {
                    line,
                    message: e.to_string(),
                })?,
            };
            if text.trim().is_empty() {
                continue;
            }
            let (kind, value) = split_kind(line, &text)?;
            if kind != "header" {
                return Err(TraceError::MissingHeader { line });
            }
            let header: TraceHeader =
                serde_json::from_value(value).map_err(|e| TraceError::Json {
                    line,
                    message: e.to_string(),
                })?;
            header.validate()?;
            return Ok(TraceReader {
                lines,
                line,
                header,
            });
        }
    }

    pub fn header(&self) -> &TraceHeader {
        &self.header
    }

    fn parse(&self, text: &str) -> Result<SampleTrace> {
        let line = self.line;
        let (kind, value) = split_kind(line, text)?;
        match kind.as_str() {
            "sample" => {}
            "header" => return Err(TraceError::DuplicateHeader { line }),
            _ => return Err(TraceError::UnknownKind { line, kind }),
        }
        let sample: SampleTrace = serde_json::from_value(value).map_err(|e| TraceError::Json {
            line,
            message: e.to_string(),
        })?;
        sample
            .check(&self.header)
            .map_err(|problem| TraceError::Sample {
                line: Some(line),
                sample_id: sample.sample_id.clone(),
                problem,
            })?;
        Ok(sample)
    }
}

impl<R: BufRead> Iterator for TraceReader<R> {
    type Item = Result<SampleTrace>;

    fn next(&mut self) -> Option<Self::Item> {
        loop {
            self.line += 1;
            let text = match self.lines.next()? {
                Ok(t) => t,
                Err(e) => {
                    return Some(Err(TraceError::Json {
                        line: self.line,
                        message: e.to_string(),
                    }))
                }
            };
            if text.trim().is_empty() {
                continue;
            }
            return Some(self.parse(&text));
        }
    }
}

/// Opens a trace file; the header is parsed eagerly, samples lazily.
pub fn read_traces(
    path: impl AsRef<Path>,
) -> Result<(TraceHeader, TraceReader<BufReader<fs::File>>)> {
    let path = path.as_ref();
    let file = fs::File::open(path).map_err(|source| TraceError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let reader = TraceReader::new(BufReader::new(file))?;
    Ok((reader.header().clone(), reader))
}

/// Reads a whole trace file, failing on the first invalid line.
pub fn read_trace_file(path: impl AsRef<Path>) -> Result<(TraceHeader, Vec<SampleTrace>)> {
    let (header, reader) = read_traces(path)?;
    let samples = reader.collect::<Result<Vec<_>>>()?;
    Ok((header, samples))
}

/// Parameters of a synthetic run.
///
/// Memorized and non-memorized samples draw chosen-token probabilities
/// uniformly within `prob_jitter` of their group mean, and representations
/// from two Gaussian clusters `cluster_separation` apart. Each representation
/// also carries a per-entity "concept" vector of norm about `concept_weight`
/// keyed by the generated (or mentioned) text, so the same name yields
/// related vectors across questions.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthScenario {
    pub model_id: String,
    pub dataset_id: String,
    pub fraction_correct: f64,
    pub memorized_prob_mean: f64,
    pub non_memorized_prob_mean: f64,
    pub prob_jitter: f64,
    pub hidden_dim: usize,
    pub cluster_separation: f64,
    pub cluster_noise: f64,
    pub concept_weight: f64,
}

impl Default for SynthScenario {
    fn default() -> Self {
        SynthScenario {
            model_id: "synthetic".into(),
            dataset_id: "synthetic".into(),
            fraction_correct: 0.5,
            memorized_prob_mean: 0.83,
            non_memorized_prob_mean: 0.54,
            prob_jitter: 0.1,
            hidden_dim: 16,
            cluster_separation: 6.0,
            cluster_noise: 0.1,
            concept_weight: 1.0,
        }
    }
}

impl SynthScenario {
    fn check(&self) -> Result<()> {
        let in_unit = |x: f64| (0.0..=1.0).contains(&x);
        if !in_unit(self.fraction_correct) {
            return Err(TraceError::Scenario(format!(
                "fraction_correct {} outside [0, 1]",
                self.fraction_correct
            )));
        }
        if !in_unit(self.memorized_prob_mean) || !in_unit(self.non_memorized_prob_mean) {
            return Err(TraceError::Scenario(
                "group probability means must lie in [0, 1]".into(),
            ));
        }
        if [self.prob_jitter, self.cluster_noise]
            .iter()
            .any(|x| x.is_nan() || *x < 0.0)
        {
            return Err(TraceError::Scenario(
                "jitter and noise must be non-negative".into(),
            ));
        }
        if self.hidden_dim == 0 {
            return Err(TraceError::Scenario("hidden_dim must be at least 1".into()));
        }
        Ok(())
    }
}

fn fnv1a(text: &str) -> u64 {
    text.bytes().fold(0xcbf2_9ce4_8422_2325, |h, b| {
        (h ^ u64::from(b)).wrapping_mul(0x0000_0100_0000_01b3)
    })
}

fn gaussian_vec(rng: &mut ChaCha8Rng, dim: usize, std: f64) -> Vec<f64> {
    if std == 0.0 {
        return vec![0.0; dim];
    }
    let normal = Normal::new(0.0, std).expect("finite std");
    (0..dim).map(|_| normal.sample(rng)).collect()
}

fn concept(seed: u64, name: &str, dim: usize, weight: f64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ fnv1a(name.trim()));
    gaussian_vec(&mut rng, dim, weight / (dim as f64).sqrt())
}

/// Splits `text` into at most `budget` tokens: words, each after the first
/// carrying its leading space, with any overflow merged into the last token.
fn tokenize(text: &str, budget: usize) -> Vec<String> {
    let mut tokens: Vec<String> = text
        .split(' ')
        .enumerate()
        .map(|(i, w)| {
            if i == 0 {
                w.to_string()
            } else {
                format!(" {w}")
            }
        })
        .collect();
    if tokens.len() > budget {
        let tail: String = tokens.drain(budget - 1..).collect();
        tokens.push(tail);
    }
    tokens
}

/// Generates a deterministic synthetic trace run for `prompts`.
///
/// Exactly `round(fraction_correct * N)` samples, chosen by a seeded shuffle,
/// generate their gold text; the rest generate [`SYNTH_DISTRACTOR`].
/// celebrity_parent prompts additionally get a context span for the name
/// their query mentions.
pub fn synth_traces(
    prompts: &[PromptSpec],
    scenario: &SynthScenario,
    seed: u64,
) -> Result<(TraceHeader, Vec<SampleTrace>)> {
    if prompts.is_empty() {
        return Err(TraceError::Scenario("empty dataset".into()));
    }
    scenario.check()?;
    let dim = scenario.hidden_dim;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    // A stream of its own, so the same seed handed to the random-split
    // analysis does not replay this shuffle and pick out the correct set.
    rng.set_stream(SYNTH_STREAM);

    let n_correct = (scenario.fraction_correct * prompts.len() as f64).round() as usize;
    let mut order: Vec<usize> = (0..prompts.len()).collect();
    order.shuffle(&mut rng);
    let mut correct = vec![false; prompts.len()];
    for &i in &order[..n_correct] {
        correct[i] = true;
    }

    let axis = {
        let v = gaussian_vec(&mut rng, dim, 1.0);
        let norm = v
            .iter()
            .map(|x| x * x)
            .sum::<f64>()
            .sqrt()
            .max(f64::MIN_POSITIVE);
        v.into_iter().map(|x| x / norm).collect::<Vec<_>>()
    };
    let half = scenario.cluster_separation / 2.0;

    let max_new_tokens = prompts
        .iter()
        .map(|p| p.max_new_tokens)
        .max()
        .unwrap_or(1)
        .max(1);
    let header = TraceHeader::new(
        &scenario.model_id,
        &scenario.dataset_id,
        dim,
        max_new_tokens,
    );

    let mut samples = Vec::with_capacity(prompts.len());
    for (prompt, &is_correct) in prompts.iter().zip(&correct) {
        let budget = prompt.max_new_tokens.max(1);
        let text = if is_correct {
            prompt.gold.as_str()
        } else {
            SYNTH_DISTRACTOR
        };
        let (sign, mean) = if is_correct {
            (1.0, scenario.memorized_prob_mean)
        } else {
            (-1.0, scenario.non_memorized_prob_mean)
        };
        let entity = concept(seed, text, dim, scenario.concept_weight);
        let steps = tokenize(text, budget)
            .into_iter()
            .map(|token| {
                let jitter = if scenario.prob_jitter > 0.0 {
                    rng.gen_range(-scenario.prob_jitter..=scenario.prob_jitter)
                } else {
                    0.0
                };
                let noise = gaussian_vec(&mut rng, dim, scenario.cluster_noise);
                let rep = (0..dim)
                    .map(|j| (sign * half * axis[j] + entity[j] + noise[j]) as f32)
                    .collect();
                GenerationStep {
                    token,
                    prob: (mean + jitter).clamp(0.0, 1.0),
                    rep,
                }
            })
            .collect();

        let mut trace = SampleTrace::from_steps(&prompt.sample_id, steps);
        trace.direction = prompt.direction;
        if let (Some(direction), Some(name)) = (prompt.direction, prompt.context_entity.as_deref())
        {
            let label = match direction {
                Direction::ParentQ => SpanLabel::ContextChild,
                Direction::ChildQ => SpanLabel::ContextParent,
            };
            let base = concept(seed, name, dim, scenario.concept_weight);
            let noise = gaussian_vec(&mut rng, dim, scenario.cluster_noise);
            trace.context_spans = Some(vec![ContextSpan {
                label,
                text: name.to_string(),
                rep: base
                    .iter()
                    .zip(&noise)
                    .map(|(b, n)| (b + n) as f32)
                    .collect(),
            }]);
        }
        samples.push(trace);
    }
    Ok((header, samples))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{build_prompt, DatasetKind, DatasetRecord, ExemplarSet, ParentRelation};

    fn header(dim: usize) -> TraceHeader {
        TraceHeader::new("m", "d", dim, 4)
    }

    fn step(token: &str, prob: f64, rep: Vec<f32>) -> GenerationStep {
        GenerationStep {
            token: token.into(),
            prob,
            rep,
        }
    }

    fn parse(text: &str) -> Result<(TraceHeader, Vec<SampleTrace>)> {
        let reader = TraceReader::new(text.as_bytes())?;
        let header = reader.header().clone();
        Ok((header, reader.collect::<Result<Vec<_>>>()?))
    }

    fn idiom_prompts(n: usize) -> Vec<PromptSpec> {
        (0..n)
            .flat_map(|i| {
                let r = DatasetRecord::completion(
                    format!("i{i}"),
                    DatasetKind::Idiom,
                    format!("word{i} and gain{i}"),
                );
                build_prompt(&r, &ExemplarSet::empty(DatasetKind::Idiom)).unwrap()
            })
            .collect()
    }

    #[test]
    fn parses_two_step_sample() {
        let text = concat!(
            r#"{"kind":"header","format_version":1,"model_id":"m","dataset_id":"d","hidden_dim":4,"decoding":"greedy","max_new_tokens":4}"#,
            "\n",
            r#"{"kind":"sample","sample_id":"s1","generated_text":" no gain","steps":[{"token":" no","prob":0.5,"rep":[1,2,3,4]},{"token":" gain","prob":0.25,"rep":[0,0,0,1.5]}]}"#,
            "\n"
        );
        let (h, samples) = parse(text).unwrap();
        assert_eq!(h.hidden_dim, 4);
        assert_eq!(samples.len(), 1);
        assert_eq!(samples[0].steps.len(), 2);
        assert_eq!(samples[0].steps[1].rep, vec![0.0, 0.0, 0.0, 1.5]);
    }

    #[test]
    fn dimension_mismatch_names_sample() {
        let text = concat!(
            r#"{"kind":"header","format_version":1,"model_id":"m","dataset_id":"d","hidden_dim":4,"decoding":"greedy","max_new_tokens":4}"#,
            "\n",
            r#"{"kind":"sample","sample_id":"bad","generated_text":"x","steps":[{"token":"x","prob":0.5,"rep":[1,2,3]}]}"#,
        );
        let err = parse(text).unwrap_err();
        match &err {
            TraceError::Sample {
                line: Some(2),
                sample_id,
                problem:
                    SampleProblem::DimensionMismatch {
                        expected: 4,
                        actual: 3,
                        ..
                    },
            } => assert_eq!(sample_id, "bad"),
            other => panic!("unexpected {other:?}"),
        }
        assert!(err.to_string().contains("bad"));
    }

    #[test]
    fn header_only_file_yields_no_samples() {
        let text = r#"{"kind":"header","format_version":1,"model_id":"m","dataset_id":"d","hidden_dim":2,"decoding":"greedy","max_new_tokens":1}"#;
        let (h, samples) = parse(text).unwrap();
        assert_eq!(h.max_new_tokens, 1);
        assert!(samples.is_empty());
    }

    #[test]
    fn structural_errors() {
        assert!(matches!(
            parse(""),
            Err(TraceError::MissingHeader { line: 1 })
        ));
        let hdr = r#"{"kind":"header","format_version":1,"model_id":"m","dataset_id":"d","hidden_dim":2,"decoding":"greedy","max_new_tokens":1}"#;
        let dup = format!("{hdr}\n{hdr}\n");
        assert!(matches!(
            parse(&dup),
            Err(TraceError::DuplicateHeader { line: 2 })
        ));
        let sample_first = r#"{"kind":"sample","sample_id":"s","generated_text":"x","steps":[]}"#;
        assert!(matches!(
            parse(sample_first),
            Err(TraceError::MissingHeader { line: 1 })
        ));
        let beam = hdr.replace("greedy", "beam");
        assert!(matches!(parse(&beam), Err(TraceError::Header(_))));
        let extra = format!(
            "{hdr}\n{}",
            r#"{"kind":"sample","sample_id":"s","generated_text":"x","steps":[{"token":"x","prob":0.5,"rep":[1,2]}],"logits":[]}"#
        );
        assert!(matches!(
            parse(&extra),
            Err(TraceError::Json { line: 2, .. })
        ));
        let garbage = format!("{hdr}\n[1,2");
        assert!(matches!(
            parse(&garbage),
            Err(TraceError::Json { line: 2, .. })
        ));
        let weird = format!("{hdr}\n{}", r#"{"kind":"footer"}"#);
        assert!(matches!(
            parse(&weird),
            Err(TraceError::UnknownKind { line: 2, .. })
        ));
    }

    #[test]
    fn refuses_to_write_invalid_samples() {
        let h = header(2);
        let bad = SampleTrace::from_steps("s", vec![step("x", 1.5, vec![0.0, 0.0])]);
        let mut out = Vec::new();
        let err = write_traces_to(&mut out, &h, &[bad]).unwrap_err();
        assert!(matches!(
            err,
            TraceError::Sample {
                problem: SampleProblem::ProbOutOfRange { .. },
                ..
            }
        ));
        assert!(out.is_empty());

        let nan = SampleTrace::from_steps("s", vec![step("x", 0.5, vec![f32::NAN, 0.0])]);
        assert!(write_traces_to(Vec::new(), &h, &[nan]).is_err());

        let mut mismatch = SampleTrace::from_steps("s", vec![step("x", 0.5, vec![0.0, 0.0])]);
        mismatch.generated_text = "y".into();
        assert!(write_traces_to(Vec::new(), &h, &[mismatch]).is_err());

        let long = SampleTrace::from_steps(
            "s",
            (0..5).map(|_| step("x", 0.5, vec![0.0, 0.0])).collect(),
        );
        assert!(write_traces_to(Vec::new(), &h, &[long]).is_err());
    }

    #[test]
    fn empty_sample_list_writes_header_only() {
        let mut out = Vec::new();
        write_traces_to(&mut out, &header(3), &[]).unwrap();
        let text = String::from_utf8(out).unwrap();
        assert_eq!(text.lines().count(), 1);
        assert!(text.starts_with(r#"{"kind":"header","format_version":1,"model_id":"m""#));
    }

    #[test]
    fn sample_field_order_is_fixed() {
        let mut s = SampleTrace::from_steps("s", vec![step("x", 0.5, vec![0.25])]);
        s.direction = Some(Direction::ParentQ);
        s.context_spans = Some(vec![ContextSpan {
            label: SpanLabel::ContextChild,
            text: "A".into(),
            rep: vec![1.0],
        }]);
        let line = line_of("sample", &s);
        assert_eq!(
            line,
            r#"{"kind":"sample","sample_id":"s","direction":"parent_q","generated_text":"x","steps":[{"token":"x","prob":0.5,"rep":[0.25]}],"context_spans":[{"label":"context_child","text":"A","rep":[1.0]}]}"#
        );
    }

    #[test]
    fn synth_fraction_extremes() {
        let prompts = idiom_prompts(20);
        let all = SynthScenario {
            fraction_correct: 1.0,
            ..Default::default()
        };
        let (_, traces) = synth_traces(&prompts, &all, 3).unwrap();
        assert!(traces
            .iter()
            .zip(&prompts)
            .all(|(t, p)| t.generated_text == p.gold));
        let none = SynthScenario {
            fraction_correct: 0.0,
            ..Default::default()
        };
        let (_, traces) = synth_traces(&prompts, &none, 3).unwrap();
        assert!(traces
            .iter()
            .zip(&prompts)
            .all(|(t, p)| t.generated_text != p.gold));
    }

    #[test]
    fn synth_half_is_exact_and_deterministic() {
        let prompts = idiom_prompts(100);
        let scenario = SynthScenario::default();
        let (h1, a) = synth_traces(&prompts, &scenario, 7).unwrap();
        let (h2, b) = synth_traces(&prompts, &scenario, 7).unwrap();
        assert_eq!((h1, &a), (h2, &b));
        let correct = a
            .iter()
            .zip(&prompts)
            .filter(|(t, p)| t.generated_text == p.gold)
            .count();
        assert_eq!(correct, 50);
        let (_, c) = synth_traces(&prompts, &scenario, 8).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn synth_rejects_bad_scenarios() {
        let prompts = idiom_prompts(2);
        assert!(synth_traces(&[], &SynthScenario::default(), 0).is_err());
        let bad = SynthScenario {
            fraction_correct: 1.2,
            ..Default::default()
        };
        assert!(matches!(
            synth_traces(&prompts, &bad, 0),
            Err(TraceError::Scenario(_))
        ));
    }

    #[test]
    fn synth_respects_budgets_and_spans() {
        let r = DatasetRecord::celebrity(
            "c",
            "Aaron Taylor-Johnson",
            "Sarah Johnson",
            ParentRelation::Mother,
        );
        let mut prompts =
            build_prompt(&r, &ExemplarSet::empty(DatasetKind::CelebrityParent)).unwrap();
        let t = DatasetRecord::completion("t", DatasetKind::TangPoetry, "千山鸟飞绝");
        prompts.extend(build_prompt(&t, &ExemplarSet::empty(DatasetKind::TangPoetry)).unwrap());
        prompts[0].max_new_tokens = 2;
        prompts[0].gold = "one two three four".into();
        let scenario = SynthScenario {
            fraction_correct: 1.0,
            ..Default::default()
        };
        let (header, traces) = synth_traces(&prompts, &scenario, 1).unwrap();
        assert_eq!(header.max_new_tokens, 8);
        assert_eq!(traces[0].steps.len(), 2);
        assert_eq!(traces[0].generated_text, "one two three four");
        assert_eq!(traces[2].steps.len(), 1);
        let child_span = traces[0].span(SpanLabel::ContextChild).unwrap();
        assert_eq!(child_span.text, "Aaron Taylor-Johnson");
        assert!(traces[0].span(SpanLabel::ContextParent).is_none());
        assert_eq!(
            traces[1].span(SpanLabel::ContextParent).unwrap().text,
            "Sarah Johnson"
        );
        assert!(traces[2].context_spans.is_none());
        for trace in &traces {
            trace.check(&header).unwrap();
        }
    }
}
