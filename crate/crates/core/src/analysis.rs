//! Text-, probability- and representation-level comparisons between the
//! memorized and non-memorized groups.

use std::collections::{BTreeMap, BTreeSet};

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use thiserror::Error;

use crate::classify::LabeledSample;
use crate::corpus::Direction;
use crate::trace::SpanLabel;

#[derive(Debug, Error, PartialEq)]
pub enum AnalysisError {
    #[error("{0}: no samples")]
    Empty(&'static str),
    #[error("random splits need at least 2 samples, got {0}")]
    TooFewForSplit(usize),
    #[error("n_repeats must be at least 1")]
    NoRepeats,
    #[error("run {model_id}/{dataset_id} has no samples")]
    EmptyRun {
        model_id: String,
        dataset_id: String,
    },
    #[error("PCA needs at least 2 rows, got {0}")]
    TooFewRows(usize),
    #[error("PCA k = {k} must satisfy 1 <= k <= {dim}")]
    BadComponentCount { k: usize, dim: usize },
    #[error("row {row} has {actual} columns, expected {expected}")]
    Ragged {
        row: usize,
        expected: usize,
        actual: usize,
    },
    #[error("row {0} has a non-finite entry")]
    NonFinite(usize),
    #[error("vector lengths differ: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("cosine similarity of a zero-norm vector")]
    ZeroNorm,
    #[error("no record has both directions with their context spans")]
    NoPairs,
}

pub type Result<T, E = AnalysisError> = std::result::Result<T, E>;

/// Population mean and variance; `None` for an empty slice.
pub fn mean_var(values: &[f64]) -> Option<(f64, f64)> {
    if values.is_empty() {
        return None;
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    Some((mean, var))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum LengthAxis {
    ContextWords,
    PredictedChars,
}

impl LengthAxis {
    pub fn as_str(self) -> &'static str {
        match self {
            LengthAxis::ContextWords => "context_words",
            LengthAxis::PredictedChars => "predicted_chars",
        }
    }

    fn value(self, s: &LabeledSample) -> usize {
        match self {
            LengthAxis::ContextWords => s.context_word_count,
            LengthAxis::PredictedChars => s.predicted_char_count,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LengthBin {
    pub value: usize,
    pub memorized_count: usize,
    pub non_memorized_count: usize,
    pub non_memorized_ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LengthHistogram {
    pub axis: LengthAxis,
    pub bins: Vec<LengthBin>,
}

impl LengthHistogram {
    pub fn total(&self) -> usize {
        self.bins
            .iter()
            .map(|b| b.memorized_count + b.non_memorized_count)
            .sum()
    }
}

/// One bin per distinct length, ascending.
pub fn length_histogram(samples: &[LabeledSample], axis: LengthAxis) -> Result<LengthHistogram> {
    if samples.is_empty() {
        return Err(AnalysisError::Empty("length histogram"));
    }
    let mut counts: BTreeMap<usize, (usize, usize)> = BTreeMap::new();
    for s in samples {
        let entry = counts.entry(axis.value(s)).or_default();
        if s.memorized {
            entry.0 += 1;
        } else {
            entry.1 += 1;
        }
    }
    let bins = counts
        .into_iter()
        .map(|(value, (mem, non))| LengthBin {
            value,
            memorized_count: mem,
            non_memorized_count: non,
            non_memorized_ratio: non as f64 / (mem + non) as f64,
        })
        .collect();
    Ok(LengthHistogram { axis, bins })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Group {
    Memorized,
    NonMemorized,
}

impl Group {
    pub fn as_str(self) -> &'static str {
        match self {
            Group::Memorized => "memorized",
            Group::NonMemorized => "non_memorized",
        }
    }
}

/// Mean and population variance of `mean_prob` within one group. Both are
/// `None` when the group is empty.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GroupStats {
    pub group: Group,
    pub n: usize,
    pub mean_prob: Option<f64>,
    pub var_prob: Option<f64>,
}

impl GroupStats {
    fn of(group: Group, probs: &[f64]) -> Self {
        let mv = mean_var(probs);
        GroupStats {
            group,
            n: probs.len(),
            mean_prob: mv.map(|m| m.0),
            var_prob: mv.map(|m| m.1),
        }
    }
}

pub fn group_probability_stats(samples: &[LabeledSample]) -> (GroupStats, GroupStats) {
    let (mem, non): (Vec<&LabeledSample>, Vec<&LabeledSample>) =
        samples.iter().partition(|s| s.memorized);
    let probs = |v: Vec<&LabeledSample>| v.iter().map(|s| s.mean_prob).collect::<Vec<_>>();
    (
        GroupStats::of(Group::Memorized, &probs(mem)),
        GroupStats::of(Group::NonMemorized, &probs(non)),
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum SplitHalf {
    A,
    B,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SplitRow {
    pub split_index: usize,
    pub half: SplitHalf,
    pub n: usize,
    pub mean_prob: f64,
    pub var_prob: f64,
    /// Indices into the input that fell into this half, ascending.
    #[serde(skip)]
    pub members: Vec<usize>,
}

/// Repeatedly shuffles `probs` with a seeded generator and splits them into
/// halves of sizes ceil(N/2) (A) and floor(N/2) (B).
pub fn random_split_probs(probs: &[f64], n_repeats: usize, seed: u64) -> Result<Vec<SplitRow>> {
    if probs.len() < 2 {
        return Err(AnalysisError::TooFewForSplit(probs.len()));
    }
    if n_repeats == 0 {
        return Err(AnalysisError::NoRepeats);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let size_a = probs.len().div_ceil(2);
    let mut rows = Vec::with_capacity(2 * n_repeats);
    let mut order: Vec<usize> = (0..probs.len()).collect();
    for split_index in 0..n_repeats {
        order.sort_unstable();
        order.shuffle(&mut rng);
        for (half, members) in [
            (SplitHalf::A, &order[..size_a]),
            (SplitHalf::B, &order[size_a..]),
        ] {
            let mut members = members.to_vec();
            members.sort_unstable();
            let values: Vec<f64> = members.iter().map(|&i| probs[i]).collect();
            let (mean_prob, var_prob) = mean_var(&values).expect("halves are non-empty");
            rows.push(SplitRow {
                split_index,
                half,
                n: members.len(),
                mean_prob,
                var_prob,
                members,
            });
        }
    }
    Ok(rows)
}

pub fn random_split_stats(
    samples: &[LabeledSample],
    n_repeats: usize,
    seed: u64,
) -> Result<Vec<SplitRow>> {
    let probs: Vec<f64> = samples.iter().map(|s| s.mean_prob).collect();
    random_split_probs(&probs, n_repeats, seed)
}

/// Labeled samples of one (model, dataset) run.
#[derive(Debug, Clone)]
pub struct RunSamples {
    pub model_id: String,
    pub dataset_id: String,
    pub samples: Vec<LabeledSample>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AccuracyRow {
    pub model_id: String,
    pub dataset_id: String,
    pub n: usize,
    pub accuracy: f64,
    pub mean_prob_all: f64,
}

/// Accuracy and mean probability per run, sorted by model then dataset.
pub fn accuracy_probability_summary(runs: &[RunSamples]) -> Result<Vec<AccuracyRow>> {
    let mut rows = Vec::with_capacity(runs.len());
    for run in runs {
        if run.samples.is_empty() {
            return Err(AnalysisError::EmptyRun {
                model_id: run.model_id.clone(),
                dataset_id: run.dataset_id.clone(),
            });
        }
        let n = run.samples.len();
        let memorized = run.samples.iter().filter(|s| s.memorized).count();
        rows.push(AccuracyRow {
            model_id: run.model_id.clone(),
            dataset_id: run.dataset_id.clone(),
            n,
            accuracy: memorized as f64 / n as f64,
            mean_prob_all: run.samples.iter().map(|s| s.mean_prob).sum::<f64>() / n as f64,
        });
    }
    rows.sort_by(|a, b| (&a.model_id, &a.dataset_id).cmp(&(&b.model_id, &b.dataset_id)));
    Ok(rows)
}

/// Unweighted average of accuracy and probability across each model's runs.
pub fn model_averages(rows: &[AccuracyRow]) -> Vec<(String, f64, f64)> {
    let mut acc: BTreeMap<&str, (f64, f64, usize)> = BTreeMap::new();
    for r in rows {
        let e = acc.entry(&r.model_id).or_default();
        e.0 += r.accuracy;
        e.1 += r.mean_prob_all;
        e.2 += 1;
    }
    acc.into_iter()
        .map(|(m, (a, p, n))| (m.to_string(), a / n as f64, p / n as f64))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PcaResult {
    /// k x D, orthonormal rows.
    pub components: Vec<Vec<f64>>,
    /// N x k.
    pub projections: Vec<Vec<f64>>,
    /// Eigenvalues of the sample covariance (divisor N - 1), descending.
    pub explained_variance: Vec<f64>,
    pub explained_variance_ratio: Vec<f64>,
    pub column_means: Vec<f64>,
    /// Numerical rank of the centered data. When smaller than k, the
    /// trailing components carry no variance and their directions are an
    /// arbitrary orthonormal completion.
    pub rank: usize,
}

impl PcaResult {
    pub fn is_rank_deficient(&self) -> bool {
        self.rank < self.components.len()
    }
}

/// Principal components of the column-centered data, from the symmetric
/// eigendecomposition of its scatter matrix.
///
/// Each component is signed so that its largest-magnitude entry (lowest
/// index on ties) is non-negative.
pub fn pca_project(rows: &[Vec<f64>], k: usize) -> Result<PcaResult> {
    let n = rows.len();
    if n < 2 {
        return Err(AnalysisError::TooFewRows(n));
    }
    let d = rows[0].len();
    if k == 0 || k > d {
        return Err(AnalysisError::BadComponentCount { k, dim: d });
    }
    for (i, row) in rows.iter().enumerate() {
        if row.len() != d {
            return Err(AnalysisError::Ragged {
                row: i,
                expected: d,
                actual: row.len(),
            });
        }
        if row.iter().any(|x| !x.is_finite()) {
            return Err(AnalysisError::NonFinite(i));
        }
    }

    let column_means: Vec<f64> = (0..d)
        .map(|j| rows.iter().map(|r| r[j]).sum::<f64>() / n as f64)
        .collect();
    let centered = DMatrix::from_fn(n, d, |i, j| rows[i][j] - column_means[j]);
    // Eigenvectors of the scatter matrix are the right singular vectors of
    // the centered data. Variances are re-measured along each direction so
    // they stay non-negative and agree with the projections.
    let scatter = centered.transpose() * &centered;
    let eigen = scatter.symmetric_eigen();
    let directions: Vec<Vec<f64>> = (0..d)
        .map(|c| eigen.eigenvectors.column(c).iter().copied().collect())
        .collect();
    let sq: Vec<f64> = directions
        .iter()
        .map(|v| {
            (0..n)
                .map(|i| (0..d).map(|j| centered[(i, j)] * v[j]).sum::<f64>().powi(2))
                .sum()
        })
        .collect();
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| sq[b].total_cmp(&sq[a]).then(a.cmp(&b)));

    let total: f64 = sq.iter().sum();
    let s_max = sq.iter().cloned().fold(0.0, f64::max).sqrt();
    let tol = s_max * n.max(d) as f64 * f64::EPSILON;
    let rank = sq.iter().filter(|&&s| s.sqrt() > tol).count();

    let mut components = Vec::with_capacity(k);
    let mut explained_variance = Vec::with_capacity(k);
    let mut explained_variance_ratio = Vec::with_capacity(k);
    for &idx in order.iter().take(k) {
        let mut row = directions[idx].clone();
        let mut pivot = 0;
        for (j, x) in row.iter().enumerate() {
            if x.abs() > row[pivot].abs() {
                pivot = j;
            }
        }
        if row[pivot] < 0.0 {
            row.iter_mut().for_each(|x| *x = -*x);
        }
        components.push(row);
        explained_variance.push(sq[idx] / (n - 1) as f64);
        explained_variance_ratio.push(if total > 0.0 { sq[idx] / total } else { 0.0 });
    }

    let projections = (0..n)
        .map(|i| {
            components
                .iter()
                .map(|c| (0..d).map(|j| centered[(i, j)] * c[j]).sum())
                .collect()
        })
        .collect();

    Ok(PcaResult {
        components,
        projections,
        explained_variance,
        explained_variance_ratio,
        column_means,
        rank,
    })
}

/// dot(a, b) / (|a| |b|), clamped to [-1, 1].
pub fn cosine_similarity(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(AnalysisError::LengthMismatch(a.len(), b.len()));
    }
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        return Err(AnalysisError::ZeroNorm);
    }
    Ok((dot / (na * nb)).clamp(-1.0, 1.0))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReversalPair {
    pub record_id: String,
    #[serde(skip)]
    pub gen_parent_rep: Vec<f64>,
    #[serde(skip)]
    pub ctx_child_rep: Vec<f64>,
    #[serde(skip)]
    pub ctx_parent_rep: Vec<f64>,
    /// cos(generated parent, context parent)
    pub sim_same_concept: f64,
    /// cos(generated parent, context child)
    pub sim_cross_concept: f64,
}

impl ReversalPair {
    pub fn new(
        record_id: impl Into<String>,
        gen_parent_rep: Vec<f64>,
        ctx_child_rep: Vec<f64>,
        ctx_parent_rep: Vec<f64>,
    ) -> Result<Self> {
        Ok(ReversalPair {
            record_id: record_id.into(),
            sim_same_concept: cosine_similarity(&gen_parent_rep, &ctx_parent_rep)?,
            sim_cross_concept: cosine_similarity(&gen_parent_rep, &ctx_child_rep)?,
            gen_parent_rep,
            ctx_child_rep,
            ctx_parent_rep,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Distribution {
    pub mean: f64,
    pub variance: f64,
    pub min: f64,
    pub median: f64,
    pub max: f64,
}

impl Distribution {
    fn of(values: &[f64]) -> Option<Self> {
        let (mean, variance) = mean_var(values)?;
        let mut sorted = values.to_vec();
        sorted.sort_by(f64::total_cmp);
        let mid = sorted.len() / 2;
        let median = if sorted.len() % 2 == 1 {
            sorted[mid]
        } else {
            (sorted[mid - 1] + sorted[mid]) / 2.0
        };
        Some(Distribution {
            mean,
            variance,
            min: sorted[0],
            median,
            max: sorted[sorted.len() - 1],
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReversalSummary {
    pub n_pairs: usize,
    pub same_concept: Distribution,
    pub cross_concept: Distribution,
    /// Mean of (same - cross) over pairs.
    pub mean_difference: f64,
}

pub fn summarize_pairs(pairs: &[ReversalPair]) -> Result<ReversalSummary> {
    let same: Vec<f64> = pairs.iter().map(|p| p.sim_same_concept).collect();
    let cross: Vec<f64> = pairs.iter().map(|p| p.sim_cross_concept).collect();
    let diff: Vec<f64> = same.iter().zip(&cross).map(|(s, c)| s - c).collect();
    Ok(ReversalSummary {
        n_pairs: pairs.len(),
        same_concept: Distribution::of(&same).ok_or(AnalysisError::NoPairs)?,
        cross_concept: Distribution::of(&cross).ok_or(AnalysisError::NoPairs)?,
        mean_difference: mean_var(&diff).ok_or(AnalysisError::NoPairs)?.0,
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct SkippedRecord {
    pub record_id: String,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReversalAnalysis {
    pub pairs: Vec<ReversalPair>,
    pub skipped: Vec<SkippedRecord>,
    pub summary: ReversalSummary,
}

fn span_rep(sample: &LabeledSample, label: SpanLabel) -> Option<Vec<f64>> {
    let span = sample
        .context_spans
        .as_ref()?
        .iter()
        .find(|s| s.label == label)?;
    Some(span.rep.iter().map(|&x| f64::from(x)).collect())
}

/// Pairs parent-question and child-question samples by record id and
/// compares the generated parent's representation with both context names.
///
/// Records lacking a direction or a required span are reported in
/// `skipped`; the summary covers complete pairs only.
pub fn reversal_similarity_analysis(
    parent_q: &[LabeledSample],
    child_q: &[LabeledSample],
) -> Result<ReversalAnalysis> {
    let index = |samples: &[LabeledSample], direction: Direction| {
        samples
            .iter()
            .filter(|s| s.direction.is_none() || s.direction == Some(direction))
            .map(|s| (s.record_id.clone(), s.clone()))
            .collect::<BTreeMap<_, _>>()
    };
    let parents = index(parent_q, Direction::ParentQ);
    let children = index(child_q, Direction::ChildQ);
    let records: BTreeSet<&String> = parents.keys().chain(children.keys()).collect();

    let mut pairs = Vec::new();
    let mut skipped = Vec::new();
    for record_id in records {
        let skip = |reason: &str| SkippedRecord {
            record_id: record_id.clone(),
            reason: reason.to_string(),
        };
        let (Some(p), Some(c)) = (parents.get(record_id), children.get(record_id)) else {
            skipped.push(skip("missing one direction"));
            continue;
        };
        let Some(ctx_child) = span_rep(p, SpanLabel::ContextChild) else {
            skipped.push(skip("parent question has no context_child span"));
            continue;
        };
        let Some(ctx_parent) = span_rep(c, SpanLabel::ContextParent) else {
            skipped.push(skip("child question has no context_parent span"));
            continue;
        };
        match ReversalPair::new(record_id.clone(), p.mean_rep.clone(), ctx_child, ctx_parent) {
            Ok(pair) => pairs.push(pair),
            Err(e) => skipped.push(skip(&e.to_string())),
        }
    }
    let summary = summarize_pairs(&pairs)?;
    Ok(ReversalAnalysis {
        pairs,
        skipped,
        summary,
    })
}

/// Correct answers to child questions with and without the parent question
/// asked first.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AblationTable {
    pub total: usize,
    pub correct_parent: usize,
    pub correct_child_with_context: usize,
    pub correct_child_without_context: usize,
    pub parent_ratio: f64,
    pub child_with_context_ratio: f64,
    pub child_without_context_ratio: f64,
}

impl AblationTable {
    pub fn from_counts(
        total: usize,
        correct_parent: usize,
        correct_child_with_context: usize,
        correct_child_without_context: usize,
    ) -> Result<Self> {
        if total == 0 {
            return Err(AnalysisError::Empty("context ablation"));
        }
        let ratio = |c: usize| c as f64 / total as f64;
        Ok(AblationTable {
            total,
            correct_parent,
            correct_child_with_context,
            correct_child_without_context,
            parent_ratio: ratio(correct_parent),
            child_with_context_ratio: ratio(correct_child_with_context),
            child_without_context_ratio: ratio(correct_child_without_context),
        })
    }
}

pub fn context_ablation_report(
    with_ctx: &[LabeledSample],
    without_ctx: &[LabeledSample],
    parent_q: &[LabeledSample],
) -> Result<AblationTable> {
    let universe: BTreeSet<&str> = with_ctx
        .iter()
        .chain(without_ctx)
        .chain(parent_q)
        .map(|s| s.record_id.as_str())
        .collect();
    let correct = |samples: &[LabeledSample]| {
        samples
            .iter()
            .filter(|s| s.memorized)
            .map(|s| s.record_id.as_str())
            .collect::<BTreeSet<_>>()
            .len()
    };
    AblationTable::from_counts(
        universe.len(),
        correct(parent_q),
        correct(with_ctx),
        correct(without_ctx),
    )
}
