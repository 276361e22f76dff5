//! Dataset records, exemplar sets and prompt assembly.
//!
//! Seven dataset kinds are supported. Completion kinds (idiom, tang_poetry,
//! proper_noun, terminology) withhold one word of a fixed phrase; QA kinds
//! (popqa, lama_uhn) pose a question with a single answer; celebrity_parent
//! records yield a matched pair of questions, one per direction of the
//! child/parent relation.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::fs;
use std::io::{BufRead, BufReader};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Placeholder that stands in for the withheld word of a cloze query.
pub const PLACEHOLDER: &str = "__";

const DEFAULT_EXEMPLARS: &str = include_str!("../data/exemplars.json");

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: malformed record: {message}")]
    Malformed { line: usize, message: String },
    #[error("line {line}: duplicate id {id:?}")]
    DuplicateId { line: usize, id: String },
    #[error("line {line}: expected kind {expected}, found {found}")]
    KindMismatch {
        line: usize,
        expected: DatasetKind,
        found: DatasetKind,
    },
    #[error("record {id:?}: {reason}")]
    Invalid { id: String, reason: String },
    #[error("record {id:?} has kind {record} but exemplars are for {exemplars}")]
    ExemplarKindMismatch {
        id: String,
        record: DatasetKind,
        exemplars: DatasetKind,
    },
    #[error("exemplar config {path}: {message}")]
    Exemplars { path: String, message: String },
}

pub type Result<T, E = CorpusError> = std::result::Result<T, E>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DatasetKind {
    Idiom,
    TangPoetry,
    ProperNoun,
    Terminology,
    Popqa,
    LamaUhn,
    CelebrityParent,
}

impl DatasetKind {
    pub const ALL: [DatasetKind; 7] = [
        DatasetKind::Idiom,
        DatasetKind::TangPoetry,
        DatasetKind::ProperNoun,
        DatasetKind::Terminology,
        DatasetKind::Popqa,
        DatasetKind::LamaUhn,
        DatasetKind::CelebrityParent,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            DatasetKind::Idiom => "idiom",
            DatasetKind::TangPoetry => "tang_poetry",
            DatasetKind::ProperNoun => "proper_noun",
            DatasetKind::Terminology => "terminology",
            DatasetKind::Popqa => "popqa",
            DatasetKind::LamaUhn => "lama_uhn",
            DatasetKind::CelebrityParent => "celebrity_parent",
        }
    }

    /// Completion kinds withhold one word of a phrase; the rest are QA.
    pub fn is_completion(self) -> bool {
        matches!(
            self,
            DatasetKind::Idiom
                | DatasetKind::TangPoetry
                | DatasetKind::ProperNoun
                | DatasetKind::Terminology
        )
    }

    /// Generation budget used when decoding answers for this kind.
    pub fn max_new_tokens(self) -> usize {
        match self {
            DatasetKind::TangPoetry => 1,
            DatasetKind::CelebrityParent => 8,
            _ => 4,
        }
    }

    pub fn default_shot_count(self) -> usize {
        match self {
            DatasetKind::Idiom | DatasetKind::TangPoetry => 0,
            DatasetKind::ProperNoun | DatasetKind::Terminology => 8,
            DatasetKind::Popqa => 5,
            DatasetKind::LamaUhn => 4,
            DatasetKind::CelebrityParent => 6,
        }
    }
}

impl fmt::Display for DatasetKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for DatasetKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        DatasetKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| format!("unknown dataset kind {s:?}"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParentRelation {
    Mother,
    Father,
}

impl ParentRelation {
    pub fn as_str(self) -> &'static str {
        match self {
            ParentRelation::Mother => "mother",
            ParentRelation::Father => "father",
        }
    }
}

/// Which side of a child/parent record a question asks about.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    /// "Who is <child>'s <relation>?", answered by the parent.
    ParentQ,
    /// "Name a child of <parent>.", answered by the child.
    ChildQ,
}

impl Direction {
    pub fn as_str(self) -> &'static str {
        match self {
            Direction::ParentQ => "parent_q",
            Direction::ChildQ => "child_q",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Payload {
    Completion {
        text: String,
    },
    Qa {
        question: String,
        answer: String,
        aliases: Vec<String>,
    },
    CelebrityParent {
        child: String,
        parent: String,
        relation: ParentRelation,
    },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DatasetRecord {
    pub id: String,
    pub kind: DatasetKind,
    pub payload: Payload,
}

impl DatasetRecord {
    pub fn completion(id: impl Into<String>, kind: DatasetKind, text: impl Into<String>) -> Self {
        DatasetRecord {
            id: id.into(),
            kind,
            payload: Payload::Completion { text: text.into() },
        }
    }

    pub fn qa(
        id: impl Into<String>,
        kind: DatasetKind,
        question: impl Into<String>,
        answer: impl Into<String>,
    ) -> Self {
        DatasetRecord {
            id: id.into(),
            kind,
            payload: Payload::Qa {
                question: question.into(),
                answer: answer.into(),
                aliases: Vec::new(),
            },
        }
    }

    pub fn celebrity(
        id: impl Into<String>,
        child: impl Into<String>,
        parent: impl Into<String>,
        relation: ParentRelation,
    ) -> Self {
        DatasetRecord {
            id: id.into(),
            kind: DatasetKind::CelebrityParent,
            payload: Payload::CelebrityParent {
                child: child.into(),
                parent: parent.into(),
                relation,
            },
        }
    }

    /// Returns every invariant this record violates; empty when valid.
    pub fn violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        let payload_matches = matches!(
            (&self.payload, self.kind),
            (Payload::Completion { .. }, k) if k.is_completion()
        ) || matches!(
            (&self.payload, self.kind),
            (
                Payload::Qa { .. },
                DatasetKind::Popqa | DatasetKind::LamaUhn
            )
        ) || matches!(
            (&self.payload, self.kind),
            (
                Payload::CelebrityParent { .. },
                DatasetKind::CelebrityParent
            )
        );
        if self.id.trim().is_empty() {
            out.push("empty id".to_string());
        }
        if !payload_matches {
            out.push(format!("payload does not fit kind {}", self.kind));
            return out;
        }
        match &self.payload {
            Payload::Completion { text } => {
                let n = segment_tokens(self.kind, text).len();
                if n < 2 {
                    let unit = if self.kind == DatasetKind::TangPoetry {
                        "characters"
                    } else {
                        "words"
                    };
                    out.push(format!("text has {n} {unit}, need at least 2"));
                }
            }
            Payload::Qa {
                question, answer, ..
            } => {
                if question.trim().is_empty() {
                    out.push("empty question".to_string());
                }
                if answer.trim().is_empty() {
                    out.push("empty answer".to_string());
                }
            }
            Payload::CelebrityParent { child, parent, .. } => {
                if child.trim().is_empty() {
                    out.push("empty child".to_string());
                }
                if parent.trim().is_empty() {
                    out.push("empty parent".to_string());
                }
            }
        }
        out
    }
}

/// Flat on-disk form of a record; kind-specific fields are optional here and
/// checked against the declared kind on conversion.
#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawRecord {
    id: String,
    kind: DatasetKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    text: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    question: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    answer: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    aliases: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    child: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    parent: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    parent_relation: Option<ParentRelation>,
}

impl RawRecord {
    fn into_record(self) -> std::result::Result<DatasetRecord, String> {
        fn take(
            field: Option<String>,
            name: &str,
            kind: DatasetKind,
        ) -> std::result::Result<String, String> {
            field.ok_or_else(|| format!("kind {kind} requires field {name:?}"))
        }
        let kind = self.kind;
        let mut stray: Vec<&str> = Vec::new();
        let payload = if kind.is_completion() {
            for (present, name) in [
                (self.question.is_some(), "question"),
                (self.answer.is_some(), "answer"),
                (self.aliases.is_some(), "aliases"),
                (self.child.is_some(), "child"),
                (self.parent.is_some(), "parent"),
                (self.parent_relation.is_some(), "parent_relation"),
            ] {
                if present {
                    stray.push(name);
                }
            }
            Payload::Completion {
                text: take(self.text, "text", kind)?,
            }
        } else if kind == DatasetKind::CelebrityParent {
            for (present, name) in [
                (self.text.is_some(), "text"),
                (self.question.is_some(), "question"),
                (self.answer.is_some(), "answer"),
                (self.aliases.is_some(), "aliases"),
            ] {
                if present {
                    stray.push(name);
                }
            }
            Payload::CelebrityParent {
                child: take(self.child, "child", kind)?,
                parent: take(self.parent, "parent", kind)?,
                relation: self
                    .parent_relation
                    .ok_or_else(|| format!("kind {kind} requires field \"parent_relation\""))?,
            }
        } else {
            for (present, name) in [
                (self.text.is_some(), "text"),
                (self.child.is_some(), "child"),
                (self.parent.is_some(), "parent"),
                (self.parent_relation.is_some(), "parent_relation"),
            ] {
                if present {
                    stray.push(name);
                }
            }
            Payload::Qa {
                question: take(self.question, "question", kind)?,
                answer: take(self.answer, "answer", kind)?,
                aliases: self.aliases.unwrap_or_default(),
            }
        };
        if !stray.is_empty() {
            return Err(format!("fields {stray:?} do not belong to kind {kind}"));
        }
        Ok(DatasetRecord {
            id: self.id,
            kind,
            payload,
        })
    }

    fn from_record(record: &DatasetRecord) -> Self {
        let mut raw = RawRecord {
            id: record.id.clone(),
            kind: record.kind,
            text: None,
            question: None,
            answer: None,
            aliases: None,
            child: None,
            parent: None,
            parent_relation: None,
        };
        match &record.payload {
            Payload::Completion { text } => raw.text = Some(text.clone()),
            Payload::Qa {
                question,
                answer,
                aliases,
            } => {
                raw.question = Some(question.clone());
                raw.answer = Some(answer.clone());
                if !aliases.is_empty() {
                    raw.aliases = Some(aliases.clone());
                }
            }
            Payload::CelebrityParent {
                child,
                parent,
                relation,
            } => {
                raw.child = Some(child.clone());
                raw.parent = Some(parent.clone());
                raw.parent_relation = Some(*relation);
            }
        }
        raw
    }
}

/// Serializes one record as a dataset JSONL line (no trailing newline).
pub fn record_to_json_line(record: &DatasetRecord) -> String {
    serde_json::to_string(&RawRecord::from_record(record)).expect("record serializes")
}

/// Parses dataset JSONL without checking record invariants.
///
/// Structural problems (bad JSON, missing or stray fields, duplicate ids, a
/// kind other than `expected`) are errors. Blank lines are skipped.
pub fn parse_dataset<R: BufRead>(
    reader: R,
    expected: Option<DatasetKind>,
) -> Result<Vec<DatasetRecord>> {
    let mut records = Vec::new();
    let mut seen = HashSet::new();
    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line.map_err(|e| CorpusError::Malformed {
            line: line_no,
            message: e.to_string(),
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let raw: RawRecord = serde_json::from_str(&line).map_err(|e| CorpusError::Malformed {
            line: line_no,
            message: e.to_string(),
        })?;
        if let Some(expected) = expected {
            if raw.kind != expected {
                return Err(CorpusError::KindMismatch {
                    line: line_no,
                    expected,
                    found: raw.kind,
                });
            }
        }
        let record = raw
            .into_record()
            .map_err(|message| CorpusError::Malformed {
                line: line_no,
                message,
            })?;
        if !seen.insert(record.id.clone()) {
            return Err(CorpusError::DuplicateId {
                line: line_no,
                id: record.id,
            });
        }
        records.push(record);
    }
    Ok(records)
}

/// Loads a dataset file of a single kind; every returned record is valid.
pub fn load_dataset(path: impl AsRef<Path>, kind: DatasetKind) -> Result<Vec<DatasetRecord>> {
    let records = read_dataset_file(path, Some(kind))?;
    for record in &records {
        if let Some(reason) = record.violations().into_iter().next() {
            return Err(CorpusError::Invalid {
                id: record.id.clone(),
                reason,
            });
        }
    }
    Ok(records)
}

/// Reads a dataset file structurally; invariants are left to [`validate_dataset`].
pub fn read_dataset_file(
    path: impl AsRef<Path>,
    kind: Option<DatasetKind>,
) -> Result<Vec<DatasetRecord>> {
    let path = path.as_ref();
    let file = fs::File::open(path).map_err(|source| CorpusError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_dataset(BufReader::new(file), kind)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Violation {
    pub record_id: String,
    pub message: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct ValidationReport {
    pub total: usize,
    pub by_kind: BTreeMap<DatasetKind, usize>,
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }
}

pub fn validate_dataset(records: &[DatasetRecord]) -> ValidationReport {
    let mut report = ValidationReport {
        total: records.len(),
        ..Default::default()
    };
    let mut seen = HashSet::new();
    for record in records {
        *report.by_kind.entry(record.kind).or_default() += 1;
        if !seen.insert(record.id.as_str()) {
            report.violations.push(Violation {
                record_id: record.id.clone(),
                message: "duplicate id".to_string(),
            });
        }
        for message in record.violations() {
            report.violations.push(Violation {
                record_id: record.id.clone(),
                message,
            });
        }
    }
    report
}

/// Tokens of a completion phrase: ASCII-whitespace words, or code points
/// (whitespace excluded) for tang_poetry.
pub fn segment_tokens(kind: DatasetKind, text: &str) -> Vec<String> {
    if kind == DatasetKind::TangPoetry {
        text.chars()
            .filter(|c| !c.is_whitespace())
            .map(String::from)
            .collect()
    } else {
        text.split_ascii_whitespace().map(str::to_string).collect()
    }
}

/// A completion phrase split around the withheld token.
///
/// `right_context` is always empty: no task here conditions on text that
/// follows the segment.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TextSegmentFrame {
    pub left_context: Vec<String>,
    pub segment: Vec<String>,
    pub right_context: Vec<String>,
    pub target_index: usize,
}

impl TextSegmentFrame {
    pub fn target(&self) -> &str {
        &self.segment[self.target_index]
    }

    pub fn tokens(&self) -> impl Iterator<Item = &String> {
        self.left_context
            .iter()
            .chain(&self.segment)
            .chain(&self.right_context)
    }
}

/// Frames a completion record: last token withheld for idiom/tang_poetry,
/// penultimate for proper_noun/terminology.
pub fn segment_frame(record: &DatasetRecord) -> Result<TextSegmentFrame> {
    let text = match &record.payload {
        Payload::Completion { text } if record.kind.is_completion() => text,
        _ => {
            return Err(CorpusError::Invalid {
                id: record.id.clone(),
                reason: format!("kind {} has no text segment", record.kind),
            })
        }
    };
    let segment = segment_tokens(record.kind, text);
    if segment.len() < 2 {
        let unit = if record.kind == DatasetKind::TangPoetry {
            "characters"
        } else {
            "words"
        };
        return Err(CorpusError::Invalid {
            id: record.id.clone(),
            reason: format!("no gold extractable: need at least 2 {unit}"),
        });
    }
    let target_index = match record.kind {
        DatasetKind::Idiom | DatasetKind::TangPoetry => segment.len() - 1,
        _ => segment.len() - 2,
    };
    Ok(TextSegmentFrame {
        left_context: Vec::new(),
        segment,
        right_context: Vec::new(),
        target_index,
    })
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExemplarSet {
    pub kind: DatasetKind,
    pub exemplars: Vec<String>,
}

impl ExemplarSet {
    pub fn new(kind: DatasetKind, exemplars: Vec<String>) -> Self {
        ExemplarSet { kind, exemplars }
    }

    pub fn empty(kind: DatasetKind) -> Self {
        ExemplarSet::new(kind, Vec::new())
    }

    pub fn shot_count(&self) -> usize {
        self.exemplars.len()
    }

    /// The shipped default exemplars for `kind`.
    pub fn default_for(kind: DatasetKind) -> Self {
        ExemplarConfig::defaults().set_for(kind)
    }
}

/// Mapping from dataset kind to its exemplar list. Kinds absent from a
/// loaded file fall back to the shipped defaults.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ExemplarConfig(pub BTreeMap<DatasetKind, Vec<String>>);

impl ExemplarConfig {
    pub fn defaults() -> Self {
        serde_json::from_str(DEFAULT_EXEMPLARS).expect("bundled exemplars are valid")
    }

    pub fn from_json(text: &str) -> std::result::Result<Self, serde_json::Error> {
        let mut config = Self::defaults();
        let overrides: ExemplarConfig = serde_json::from_str(text)?;
        config.0.extend(overrides.0);
        Ok(config)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|source| CorpusError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_json(&text).map_err(|e| CorpusError::Exemplars {
            path: path.display().to_string(),
            message: e.to_string(),
        })
    }

    pub fn set_for(&self, kind: DatasetKind) -> ExemplarSet {
        ExemplarSet::new(kind, self.0.get(&kind).cloned().unwrap_or_default())
    }
}

/// A fully assembled prompt plus what the model is expected to produce.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptSpec {
    pub sample_id: String,
    pub record_id: String,
    pub kind: DatasetKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub direction: Option<Direction>,
    pub prompt: String,
    pub query: String,
    pub gold: String,
    #[serde(default)]
    pub gold_aliases: Vec<String>,
    /// Name mentioned in a celebrity_parent query (the child for parent
    /// questions, the parent for child questions).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub context_entity: Option<String>,
    pub context_word_count: usize,
    pub predicted_char_count: usize,
    pub max_new_tokens: usize,
}

/// Sample id used for one direction of a celebrity_parent record.
pub fn directed_sample_id(record_id: &str, direction: Direction) -> String {
    format!("{record_id}#{}", direction.as_str())
}

/// Sample id of the child question asked after its parent question.
pub fn contextual_sample_id(record_id: &str) -> String {
    format!("{record_id}#child_q_ctx")
}

fn parent_question(child: &str, relation: ParentRelation) -> String {
    format!("Q: Who is {child}'s {}?\nA:", relation.as_str())
}

fn child_question(parent: &str) -> String {
    format!("Q: Name a child of {parent}.\nA:")
}

fn assemble(exemplars: &ExemplarSet, query: &str) -> String {
    if exemplars.exemplars.is_empty() {
        query.to_string()
    } else {
        format!("{}\n{query}", exemplars.exemplars.join("\n"))
    }
}

fn context_count(kind: DatasetKind, query: &str) -> usize {
    if kind == DatasetKind::TangPoetry {
        query.chars().count()
    } else {
        query.split_ascii_whitespace().count()
    }
}

#[allow(clippy::too_many_arguments)]
fn spec(
    record: &DatasetRecord,
    exemplars: &ExemplarSet,
    sample_id: String,
    direction: Option<Direction>,
    context_entity: Option<&str>,
    query: String,
    gold: String,
    gold_aliases: Vec<String>,
) -> PromptSpec {
    PromptSpec {
        sample_id,
        record_id: record.id.clone(),
        kind: record.kind,
        direction,
        prompt: assemble(exemplars, &query),
        context_word_count: context_count(record.kind, &query),
        predicted_char_count: gold.chars().count(),
        max_new_tokens: record.kind.max_new_tokens(),
        context_entity: context_entity.map(str::to_string),
        query,
        gold,
        gold_aliases,
    }
}

fn check_pair(record: &DatasetRecord, exemplars: &ExemplarSet) -> Result<()> {
    if record.kind != exemplars.kind {
        return Err(CorpusError::ExemplarKindMismatch {
            id: record.id.clone(),
            record: record.kind,
            exemplars: exemplars.kind,
        });
    }
    if let Some(reason) = record.violations().into_iter().next() {
        return Err(CorpusError::Invalid {
            id: record.id.clone(),
            reason,
        });
    }
    Ok(())
}

/// Builds the prompt(s) for one record.
///
/// Completion and QA records yield one spec; celebrity_parent records yield
/// two, parent direction first.
pub fn build_prompt(record: &DatasetRecord, exemplars: &ExemplarSet) -> Result<Vec<PromptSpec>> {
    check_pair(record, exemplars)?;
    let specs = match &record.payload {
        Payload::Completion { .. } => {
            let frame = segment_frame(record)?;
            let gold = frame.target().to_string();
            let query = match record.kind {
                DatasetKind::TangPoetry => frame.segment[..frame.target_index].concat(),
                DatasetKind::Idiom => {
                    let mut words: Vec<&str> = frame.segment[..frame.target_index]
                        .iter()
                        .map(String::as_str)
                        .collect();
                    words.push(PLACEHOLDER);
                    words.join(" ")
                }
                _ => frame
                    .tokens()
                    .enumerate()
                    .map(|(i, w)| {
                        if i == frame.left_context.len() + frame.target_index {
                            PLACEHOLDER
                        } else {
                            w.as_str()
                        }
                    })
                    .collect::<Vec<_>>()
                    .join(" "),
            };
            vec![spec(
                record,
                exemplars,
                record.id.clone(),
                None,
                None,
                query,
                gold,
                Vec::new(),
            )]
        }
        Payload::Qa {
            question,
            answer,
            aliases,
        } => {
            let query = format!("Q: {}\nA:", question.trim());
            vec![spec(
                record,
                exemplars,
                record.id.clone(),
                None,
                None,
                query,
                answer.trim().to_string(),
                aliases.clone(),
            )]
        }
        Payload::CelebrityParent {
            child,
            parent,
            relation,
        } => {
            let (child, parent) = (child.trim(), parent.trim());
            vec![
                spec(
                    record,
                    exemplars,
                    directed_sample_id(&record.id, Direction::ParentQ),
                    Some(Direction::ParentQ),
                    Some(child),
                    parent_question(child, *relation),
                    parent.to_string(),
                    Vec::new(),
                ),
                spec(
                    record,
                    exemplars,
                    directed_sample_id(&record.id, Direction::ChildQ),
                    Some(Direction::ChildQ),
                    Some(parent),
                    child_question(parent),
                    child.to_string(),
                    Vec::new(),
                ),
            ]
        }
    };
    Ok(specs)
}

/// Builds the child question preceded by its answered parent question, for
/// the with/without-context comparison on celebrity_parent.
pub fn build_contextual_child_prompt(
    record: &DatasetRecord,
    exemplars: &ExemplarSet,
) -> Result<PromptSpec> {
    check_pair(record, exemplars)?;
    match &record.payload {
        Payload::CelebrityParent {
            child,
            parent,
            relation,
        } => {
            let (child, parent) = (child.trim(), parent.trim());
            let query = format!(
                "{} {parent}\n{}",
                parent_question(child, *relation),
                child_question(parent)
            );
            Ok(spec(
                record,
                exemplars,
                contextual_sample_id(&record.id),
                Some(Direction::ChildQ),
                Some(parent),
                query,
                child.to_string(),
                Vec::new(),
            ))
        }
        _ => Err(CorpusError::Invalid {
            id: record.id.clone(),
            reason: "contextual child prompts require celebrity_parent".to_string(),
        }),
    }
}

/// Builds prompts for a whole dataset, in record order.
pub fn build_prompts(
    records: &[DatasetRecord],
    config: &ExemplarConfig,
) -> Result<Vec<PromptSpec>> {
    let mut out = Vec::with_capacity(records.len());
    for record in records {
        out.extend(build_prompt(record, &config.set_for(record.kind))?);
    }
    Ok(out)
}

/// Reads a prompt JSONL file as written by [`write_prompts`].
pub fn read_prompts(path: impl AsRef<Path>) -> Result<Vec<PromptSpec>> {
    let path = path.as_ref();
    let file = fs::File::open(path).map_err(|source| CorpusError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let mut out = Vec::new();
    for (idx, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|source| CorpusError::Io {
            path: path.display().to_string(),
            source,
        })?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(
            serde_json::from_str(&line).map_err(|e| CorpusError::Malformed {
                line: idx + 1,
                message: e.to_string(),
            })?,
        );
    }
    Ok(out)
}

pub fn write_prompts(path: impl AsRef<Path>, prompts: &[PromptSpec]) -> Result<()> {
    let path = path.as_ref();
    let mut buf = String::new();
    for p in prompts {
        buf.push_str(&serde_json::to_string(p).expect("prompt serializes"));
        buf.push('\n');
    }
    fs::write(path, buf).map_err(|source| CorpusError::Io {
        path: path.display().to_string(),
        source,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn one(record: &DatasetRecord) -> PromptSpec {
        let mut specs = build_prompt(record, &ExemplarSet::empty(record.kind)).unwrap();
        assert_eq!(specs.len(), 1);
        specs.remove(0)
    }

    #[test]
    fn loads_idiom_line() {
        let input = r#"{"id":"i1","kind":"idiom","text":"no pain no gain"}"#;
        let records = parse_dataset(input.as_bytes(), Some(DatasetKind::Idiom)).unwrap();
        assert_eq!(records.len(), 1);
        match &records[0].payload {
            Payload::Completion { text } => assert_eq!(text.split_ascii_whitespace().count(), 4),
            other => panic!("unexpected payload {other:?}"),
        }
    }

    #[test]
    fn empty_input_is_empty_dataset() {
        assert!(parse_dataset("".as_bytes(), None).unwrap().is_empty());
    }

    #[test]
    fn duplicate_id_is_named() {
        let input = "{\"id\":\"i1\",\"kind\":\"idiom\",\"text\":\"a b\"}\n{\"id\":\"i1\",\"kind\":\"idiom\",\"text\":\"c d\"}\n";
        let err = parse_dataset(input.as_bytes(), None).unwrap_err();
        assert!(matches!(&err, CorpusError::DuplicateId { line: 2, id } if id == "i1"));
        assert!(err.to_string().contains("i1"));
    }

    #[test]
    fn kind_mismatch_and_malformed_lines_report_line_numbers() {
        let input = "{\"id\":\"i1\",\"kind\":\"idiom\",\"text\":\"a b\"}\n{\"id\":\"p1\",\"kind\":\"popqa\",\"question\":\"q\",\"answer\":\"a\"}\n";
        let err = parse_dataset(input.as_bytes(), Some(DatasetKind::Idiom)).unwrap_err();
        assert!(matches!(err, CorpusError::KindMismatch { line: 2, .. }));

        let err = parse_dataset("\n{not json".as_bytes(), None).unwrap_err();
        assert!(matches!(err, CorpusError::Malformed { line: 2, .. }));

        let stray = r#"{"id":"x","kind":"idiom","text":"a b","answer":"c"}"#;
        let err = parse_dataset(stray.as_bytes(), None).unwrap_err();
        assert!(err.to_string().contains("answer"), "{err}");

        let missing = r#"{"id":"x","kind":"popqa","question":"q"}"#;
        assert!(parse_dataset(missing.as_bytes(), None).is_err());
    }

    #[test]
    fn idiom_prompt_withholds_last_word() {
        let p = one(&DatasetRecord::completion(
            "i",
            DatasetKind::Idiom,
            "it doesn't hurt to ask",
        ));
        assert_eq!(p.query, "it doesn't hurt to __");
        assert_eq!(p.gold, "ask");
        assert_eq!(p.prompt, p.query);
        assert_eq!(p.max_new_tokens, 4);
        assert_eq!(p.predicted_char_count, 3);
    }

    #[test]
    fn proper_noun_prompt_is_cloze_on_penultimate() {
        let p = one(&DatasetRecord::completion(
            "p",
            DatasetKind::ProperNoun,
            "Center for Nonlinear Dynamics",
        ));
        assert_eq!(p.query, "Center for __ Dynamics");
        assert_eq!(p.gold, "Nonlinear");
        assert_eq!(p.context_word_count, 4);
    }

    #[test]
    fn tang_poetry_prompt_is_bare_prefix() {
        let p = one(&DatasetRecord::completion(
            "t",
            DatasetKind::TangPoetry,
            "千山鸟飞绝",
        ));
        assert_eq!(p.query, "千山鸟飞");
        assert_eq!(p.gold, "绝");
        assert_eq!(p.max_new_tokens, 1);
        assert_eq!(p.context_word_count, 4);
        assert_eq!(p.predicted_char_count, 1);
    }

    #[test]
    fn short_completion_has_no_gold() {
        let r = DatasetRecord::completion("x", DatasetKind::Idiom, "alone");
        assert!(matches!(
            build_prompt(&r, &ExemplarSet::empty(DatasetKind::Idiom)),
            Err(CorpusError::Invalid { .. })
        ));
        let r = DatasetRecord::completion("y", DatasetKind::TangPoetry, "绝");
        assert!(build_prompt(&r, &ExemplarSet::empty(DatasetKind::TangPoetry)).is_err());
    }

    #[test]
    fn qa_and_celebrity_queries() {
        let p = one(&DatasetRecord::qa(
            "q",
            DatasetKind::Popqa,
            "What is the capital of Australia?",
            "Canberra",
        ));
        assert_eq!(p.query, "Q: What is the capital of Australia?\nA:");
        assert_eq!(p.gold, "Canberra");
        assert_eq!(p.max_new_tokens, 4);

        let r = DatasetRecord::celebrity(
            "c1",
            "Tom Cruise",
            "Mary Lee Pfeiffer",
            ParentRelation::Mother,
        );
        let specs = build_prompt(&r, &ExemplarSet::empty(DatasetKind::CelebrityParent)).unwrap();
        assert_eq!(specs.len(), 2);
        assert_eq!(specs[0].query, "Q: Who is Tom Cruise's mother?\nA:");
        assert_eq!(specs[0].gold, "Mary Lee Pfeiffer");
        assert_eq!(specs[0].direction, Some(Direction::ParentQ));
        assert_eq!(specs[0].sample_id, "c1#parent_q");
        assert_eq!(specs[1].query, "Q: Name a child of Mary Lee Pfeiffer.\nA:");
        assert_eq!(specs[1].gold, "Tom Cruise");
        assert_eq!(specs[1].max_new_tokens, 8);
        assert!(specs.iter().all(|s| s.record_id == "c1"));

        let ctx =
            build_contextual_child_prompt(&r, &ExemplarSet::empty(DatasetKind::CelebrityParent))
                .unwrap();
        assert_eq!(
            ctx.query,
            "Q: Who is Tom Cruise's mother?\nA: Mary Lee Pfeiffer\nQ: Name a child of Mary Lee Pfeiffer.\nA:"
        );
        assert_eq!(ctx.gold, "Tom Cruise");
    }

    #[test]
    fn exemplars_prefix_the_query() {
        let r = DatasetRecord::qa("q", DatasetKind::LamaUhn, "X died in [MASK].", "Oslo");
        let set = ExemplarSet::default_for(DatasetKind::LamaUhn);
        assert_eq!(set.shot_count(), 4);
        let p = build_prompt(&r, &set).unwrap().remove(0);
        assert!(p.prompt.ends_with(&p.query));
        assert!(p.prompt.starts_with("Q: Paul Mounsey"));
        assert_eq!(
            p.prompt,
            format!("{}\n{}", set.exemplars.join("\n"), p.query)
        );
        let bare = one(&r);
        assert_eq!(bare.context_word_count, p.context_word_count);
    }

    #[test]
    fn exemplar_kind_must_match() {
        let r = DatasetRecord::completion("i", DatasetKind::Idiom, "a b");
        assert!(matches!(
            build_prompt(&r, &ExemplarSet::empty(DatasetKind::Popqa)),
            Err(CorpusError::ExemplarKindMismatch { .. })
        ));
    }

    #[test]
    fn default_shot_counts() {
        let config = ExemplarConfig::defaults();
        for kind in DatasetKind::ALL {
            assert_eq!(
                config.set_for(kind).shot_count(),
                kind.default_shot_count(),
                "{kind}"
            );
        }
    }

    #[test]
    fn exemplar_overrides_replace_only_named_kinds() {
        let config = ExemplarConfig::from_json(r#"{"popqa":["Q: a?\nA: b"]}"#).unwrap();
        assert_eq!(config.set_for(DatasetKind::Popqa).shot_count(), 1);
        assert_eq!(config.set_for(DatasetKind::LamaUhn).shot_count(), 4);
        assert!(ExemplarConfig::from_json(r#"{"klingon":[]}"#).is_err());
    }

    #[test]
    fn validation_counts_and_violations() {
        let records = vec![
            DatasetRecord::completion("a", DatasetKind::Idiom, "see eye to eye"),
            DatasetRecord::qa("b", DatasetKind::Popqa, "Q?", " "),
            DatasetRecord::celebrity("c", "A B", "C D", ParentRelation::Father),
            DatasetRecord::completion("a", DatasetKind::TangPoetry, "绝"),
        ];
        let report = validate_dataset(&records);
        assert_eq!(report.total, 4);
        assert_eq!(report.by_kind.values().sum::<usize>(), 4);
        assert!(!report.is_valid());
        let ids: Vec<_> = report
            .violations
            .iter()
            .map(|v| v.record_id.as_str())
            .collect();
        assert_eq!(ids, ["b", "a", "a"]);
    }

    #[test]
    fn record_json_round_trips() {
        let records = vec![
            DatasetRecord::completion("a", DatasetKind::Terminology, "Toxic Epidermal Necrolysis"),
            DatasetRecord {
                id: "b".into(),
                kind: DatasetKind::Popqa,
                payload: Payload::Qa {
                    question: "Q".into(),
                    answer: "A".into(),
                    aliases: vec!["alt".into()],
                },
            },
            DatasetRecord::celebrity(
                "c",
                "Hailee Steinfeld",
                "Peter Steinfeld",
                ParentRelation::Father,
            ),
        ];
        let text: String = records
            .iter()
            .map(|r| record_to_json_line(r) + "\n")
            .collect();
        assert_eq!(parse_dataset(text.as_bytes(), None).unwrap(), records);
    }
}
