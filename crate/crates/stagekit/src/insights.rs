//! Workflow insights over classified notebooks: stage frequency
//! distributions, first-order transition matrices, frequent contiguous
//! stage patterns, and chi-squared comparisons against distributions
//! reported by earlier studies.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::classify::Label;
use crate::stats::{self, StatsError, TestResult};
use crate::taxonomy::{TaxonomyError, UnifiedTaxonomy};

#[derive(Debug, Error)]
pub enum InsightError {
    #[error("no labels to aggregate")]
    EmptyInput,
    #[error("no sequences to aggregate")]
    NoSequences,
    #[error("pattern length must be at least 2 (got {0})")]
    PatternTooShort(usize),
    #[error("reference `{name}` expects {expected} values, found {found}")]
    BadReferenceShape {
        name: String,
        expected: usize,
        found: usize,
    },
    #[error("reference `{name}` targets unknown taxonomy `{taxonomy}`")]
    UnknownReferenceTaxonomy { name: String, taxonomy: String },
    #[error("reference `{name}` cannot be aligned; observed categories with no counterpart: {unmatched:?}")]
    CategoryMismatch {
        name: String,
        unmatched: Vec<String>,
    },
    #[error(transparent)]
    Taxonomy(#[from] TaxonomyError),
    #[error(transparent)]
    Stats(#[from] StatsError),
}

/// One notebook's stage labels in instruction order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageSequence {
    pub notebook_id: String,
    pub labels: Vec<String>,
    /// Whether consecutive duplicate labels have been merged.
    pub collapsed: bool,
}

impl StageSequence {
    /// Builds a sequence from classifier labels, dropping None/Unknown
    /// entries (they carry no stage information).
    pub fn from_labels(notebook_id: impl Into<String>, labels: &[Label]) -> Self {
        let labels = labels
            .iter()
            .filter_map(|l| match l {
                Label::Stage(s) => Some(s.clone()),
                Label::Unknown | Label::None => None,
            })
            .collect();
        Self {
            notebook_id: notebook_id.into(),
            labels,
            collapsed: false,
        }
    }

    /// Merges runs of consecutive identical labels into one occurrence.
    pub fn collapse(&self) -> Self {
        let mut labels: Vec<String> = Vec::with_capacity(self.labels.len());
        for label in &self.labels {
            if labels.last() != Some(label) {
                labels.push(label.clone());
            }
        }
        Self {
            notebook_id: self.notebook_id.clone(),
            labels,
            collapsed: true,
        }
    }
}

/// Relative frequency of each stage among labeled items. None and Unknown
/// items are tallied separately and excluded from the normalized
/// distribution; `counts` doubles as the per-stage item distribution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct FrequencyDistribution {
    pub counts: BTreeMap<String, u64>,
    pub frequencies: BTreeMap<String, f64>,
    pub labeled_total: u64,
    pub none_count: u64,
    pub unknown_count: u64,
    #[serde(default)]
    pub notes: Vec<String>,
}

/// Tallies stage labels into a normalized distribution.
pub fn stage_frequencies(labels: &[Label]) -> Result<FrequencyDistribution, InsightError> {
    if labels.is_empty() {
        return Err(InsightError::EmptyInput);
    }
    let mut dist = FrequencyDistribution::default();
    for label in labels {
        match label {
            Label::Stage(s) => {
                *dist.counts.entry(s.clone()).or_default() += 1;
                dist.labeled_total += 1;
            }
            Label::None => dist.none_count += 1,
            Label::Unknown => dist.unknown_count += 1,
        }
    }
    if dist.labeled_total == 0 {
        dist.notes
            .push("100% unlabeled: every item is None or Unknown".to_string());
        return Ok(dist);
    }
    for (stage, count) in &dist.counts {
        dist.frequencies
            .insert(stage.clone(), *count as f64 / dist.labeled_total as f64);
    }
    Ok(dist)
}

pub const START_STAGE: &str = "<start>";
pub const END_STAGE: &str = "<end>";

#[derive(Debug, Clone, Copy)]
pub struct TransitionOptions {
    /// Merge runs of identical labels before counting transitions, so the
    /// matrix describes stage changes rather than dwell time.
    pub collapse_self: bool,
    /// Add `<start>`/`<end>` pseudo-stages around every sequence.
    pub boundaries: bool,
}

impl Default for TransitionOptions {
    fn default() -> Self {
        Self {
            collapse_self: true,
            boundaries: false,
        }
    }
}

/// First-order transition structure pooled over sequences. Rows index the
/// source stage, columns the destination; every row with positive support
/// is normalized to sum to 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransitionMatrix {
    pub labels: Vec<String>,
    pub counts: Vec<Vec<u64>>,
    pub probabilities: Vec<Vec<f64>>,
    pub row_support: Vec<u64>,
    /// Sequences that contributed no transition (too short after collapsing).
    pub skipped_sequences: u64,
    pub collapsed: bool,
}

impl TransitionMatrix {
    /// Plot-ready tab-delimited probabilities with labeled rows and columns.
    pub fn to_delimited(&self) -> String {
        let mut out = String::new();
        out.push_str("stage");
        for label in &self.labels {
            out.push('\t');
            out.push_str(label);
        }
        out.push('\n');
        for (i, label) in self.labels.iter().enumerate() {
            out.push_str(label);
            for p in &self.probabilities[i] {
                out.push('\t');
                out.push_str(&format!("{p:.6}"));
            }
            out.push('\n');
        }
        out
    }
}

/// Pools first-order transitions over all sequences.
pub fn transition_matrix(
    sequences: &[StageSequence],
    options: TransitionOptions,
) -> Result<TransitionMatrix, InsightError> {
    if sequences.is_empty() {
        return Err(InsightError::NoSequences);
    }
    let effective: Vec<StageSequence> = sequences
        .iter()
        .map(|s| {
            if options.collapse_self && !s.collapsed {
                s.collapse()
            } else {
                s.clone()
            }
        })
        .collect();

    let mut vocabulary: BTreeSet<String> = BTreeSet::new();
    for seq in &effective {
        vocabulary.extend(seq.labels.iter().cloned());
    }
    let mut labels: Vec<String> = Vec::new();
    if options.boundaries {
        labels.push(START_STAGE.to_string());
    }
    labels.extend(vocabulary);
    if options.boundaries {
        labels.push(END_STAGE.to_string());
    }
    let index: BTreeMap<&str, usize> = labels
        .iter()
        .enumerate()
        .map(|(i, l)| (l.as_str(), i))
        .collect();

    let k = labels.len();
    let mut counts = vec![vec![0u64; k]; k];
    let mut skipped = 0u64;
    for seq in &effective {
        let mut contributed = false;
        if options.boundaries {
            if let (Some(first), Some(last)) = (seq.labels.first(), seq.labels.last()) {
                counts[index[START_STAGE]][index[first.as_str()]] += 1;
                counts[index[last.as_str()]][index[END_STAGE]] += 1;
                contributed = true;
            }
        }
        for window in seq.labels.windows(2) {
            counts[index[window[0].as_str()]][index[window[1].as_str()]] += 1;
            contributed = true;
        }
        if !contributed {
            skipped += 1;
        }
    }

    let row_support: Vec<u64> = counts.iter().map(|row| row.iter().sum()).collect();
    let probabilities = counts
        .iter()
        .zip(&row_support)
        .map(|(row, &support)| {
            row.iter()
                .map(|&c| {
                    if support == 0 {
                        0.0
                    } else {
                        c as f64 / support as f64
                    }
                })
                .collect()
        })
        .collect();
    Ok(TransitionMatrix {
        labels,
        counts,
        probabilities,
        row_support,
        skipped_sequences: skipped,
        collapsed: options.collapse_self,
    })
}

/// One contiguous stage n-gram with its occurrence count and the number of
/// distinct notebooks containing it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Pattern {
    pub labels: Vec<String>,
    pub support: u64,
    pub notebook_coverage: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PatternReport {
    pub n: usize,
    pub min_support: u64,
    /// Ranked by support descending, ties broken lexicographically.
    pub patterns: Vec<Pattern>,
}

/// Counts every contiguous stage n-gram (overlapping windows count
/// separately) with support at or above `min_support`.
pub fn frequent_patterns(
    sequences: &[StageSequence],
    n: usize,
    min_support: u64,
) -> Result<PatternReport, InsightError> {
    if n < 2 {
        return Err(InsightError::PatternTooShort(n));
    }
    let mut support: BTreeMap<Vec<String>, u64> = BTreeMap::new();
    let mut coverage: BTreeMap<Vec<String>, BTreeSet<&str>> = BTreeMap::new();
    for seq in sequences {
        for window in seq.labels.windows(n) {
            let key = window.to_vec();
            *support.entry(key.clone()).or_default() += 1;
            coverage.entry(key).or_default().insert(&seq.notebook_id);
        }
    }
    let mut patterns: Vec<Pattern> = support
        .into_iter()
        .filter(|(_, s)| *s >= min_support)
        .map(|(labels, s)| {
            let notebook_coverage = coverage[&labels].len() as u64;
            Pattern {
                labels,
                support: s,
                notebook_coverage,
            }
        })
        .collect();
    patterns.sort_by(|a, b| {
        b.support
            .cmp(&a.support)
            .then_with(|| a.labels.cmp(&b.labels))
    });
    Ok(PatternReport {
        n,
        min_support,
        patterns,
    })
}

/// Everything the insight extraction step reports for one corpus run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InsightReport {
    pub taxonomy_version: String,
    /// Per-stage instruction distribution (counts double as the raw
    /// per-stage instruction tallies).
    pub instruction_frequencies: FrequencyDistribution,
    /// Per-stage cell distribution (a cell counts once per distinct stage).
    pub cell_frequencies: FrequencyDistribution,
    /// Stage-change structure (self-transitions collapsed).
    pub transitions: TransitionMatrix,
    /// Same pooling with self-transitions retained.
    pub transitions_raw: TransitionMatrix,
    pub patterns: PatternReport,
    #[serde(default)]
    pub comparisons: Vec<TestResult>,
    #[serde(default)]
    pub notes: Vec<String>,
}

/// Which observed tally a reference distribution is compared against.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ObservedSource {
    InstructionFrequencies,
    CellFrequencies,
    Transitions,
    TransitionsRaw,
}

/// A distribution reported by an earlier study, expressed in that study's
/// own taxonomy. Frequency references carry one value per category;
/// transition references carry a row-major flattened square matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferenceDistribution {
    pub name: String,
    /// Taxonomy the categories live in: one of the unified taxonomy's
    /// source names, or its version tag for already-unified references.
    pub taxonomy: String,
    pub source: ObservedSource,
    pub categories: Vec<String>,
    pub values: Vec<f64>,
}

impl ReferenceDistribution {
    fn expected_len(&self) -> usize {
        match self.source {
            ObservedSource::Transitions | ObservedSource::TransitionsRaw => {
                self.categories.len() * self.categories.len()
            }
            _ => self.categories.len(),
        }
    }
}

enum Alignment {
    Identity,
    Project(String),
}

/// Runs one goodness-of-fit comparison per reference: our tallies are the
/// observed side, the reference values the expected side. References in a
/// source taxonomy are aligned by projecting each unified group's count
/// onto that side, splitting equally across multi-member projections (the
/// split is noted). Mass falling on groups with no counterpart is dropped
/// and noted.
pub fn compare_insights(
    observed: &InsightReport,
    references: &[ReferenceDistribution],
    unified: &UnifiedTaxonomy,
    alpha: f64,
) -> Result<Vec<TestResult>, InsightError> {
    let mut results = Vec::new();
    for reference in references {
        if reference.values.len() != reference.expected_len() {
            return Err(InsightError::BadReferenceShape {
                name: reference.name.clone(),
                expected: reference.expected_len(),
                found: reference.values.len(),
            });
        }
        let alignment = if reference.taxonomy == unified.version || reference.taxonomy == "unified"
        {
            Alignment::Identity
        } else if reference.taxonomy == unified.source_a || reference.taxonomy == unified.source_b {
            Alignment::Project(reference.taxonomy.clone())
        } else {
            return Err(InsightError::UnknownReferenceTaxonomy {
                name: reference.name.clone(),
                taxonomy: reference.taxonomy.clone(),
            });
        };

        let mut notes = Vec::new();
        let observed_vector = match reference.source {
            ObservedSource::InstructionFrequencies | ObservedSource::CellFrequencies => {
                let counts = match reference.source {
                    ObservedSource::InstructionFrequencies => {
                        &observed.instruction_frequencies.counts
                    }
                    _ => &observed.cell_frequencies.counts,
                };
                let projected = match &alignment {
                    Alignment::Identity => {
                        counts.iter().map(|(k, v)| (k.clone(), *v as f64)).collect()
                    }
                    Alignment::Project(target) => {
                        project_counts(counts, unified, target, &mut notes)?
                    }
                };
                align_vector(&projected, &reference.categories, &reference.name)?
            }
            ObservedSource::Transitions | ObservedSource::TransitionsRaw => {
                let matrix = match reference.source {
                    ObservedSource::Transitions => &observed.transitions,
                    _ => &observed.transitions_raw,
                };
                let projected = match &alignment {
                    Alignment::Identity => transition_cells(matrix),
                    Alignment::Project(target) => {
                        project_transitions(matrix, unified, target, &mut notes)?
                    }
                };
                align_matrix(&projected, &reference.categories, &reference.name)?
            }
        };

        let mut result =
            stats::chi_squared_gof_weighted(&observed_vector, &reference.values, alpha)?;
        result.test_name = format!("chi2_gof:{}", reference.name);
        result.notes.extend(notes);
        results.push(result);
    }
    Ok(results)
}

fn transition_cells(matrix: &TransitionMatrix) -> BTreeMap<(String, String), f64> {
    let mut cells = BTreeMap::new();
    for (i, from) in matrix.labels.iter().enumerate() {
        for (j, to) in matrix.labels.iter().enumerate() {
            if matrix.counts[i][j] > 0 {
                cells.insert((from.clone(), to.clone()), matrix.counts[i][j] as f64);
            }
        }
    }
    cells
}

/// Projects per-headword counts onto one source taxonomy, splitting each
/// group's count equally across its members on that side.
fn project_counts(
    counts: &BTreeMap<String, u64>,
    unified: &UnifiedTaxonomy,
    target: &str,
    notes: &mut Vec<String>,
) -> Result<BTreeMap<String, f64>, InsightError> {
    let mut projected: BTreeMap<String, f64> = BTreeMap::new();
    let mut dropped = 0u64;
    for (label, &count) in counts {
        let members = unified.project(label, target)?;
        if members.is_empty() {
            dropped += count;
            continue;
        }
        if members.len() > 1 {
            notes.push(format!(
                "`{label}` projects to {} stages in `{target}`; its count is split equally",
                members.len()
            ));
        }
        let share = count as f64 / members.len() as f64;
        for member in members {
            *projected.entry(member.clone()).or_default() += share;
        }
    }
    if dropped > 0 {
        notes.push(format!(
            "{dropped} item(s) belong to groups with no counterpart in `{target}` and were dropped"
        ));
    }
    Ok(projected)
}

/// Projects transition cell counts onto one source taxonomy. A cell
/// (g1 -> g2) spreads over the member pairs with equal weight
/// 1 / (|members(g1)| * |members(g2)|).
fn project_transitions(
    matrix: &TransitionMatrix,
    unified: &UnifiedTaxonomy,
    target: &str,
    notes: &mut Vec<String>,
) -> Result<BTreeMap<(String, String), f64>, InsightError> {
    let mut projected: BTreeMap<(String, String), f64> = BTreeMap::new();
    let mut dropped = 0u64;
    let mut split_noted = false;
    for (i, from) in matrix.labels.iter().enumerate() {
        for (j, to) in matrix.labels.iter().enumerate() {
            let count = matrix.counts[i][j];
            if count == 0 {
                continue;
            }
            if from == START_STAGE || from == END_STAGE || to == START_STAGE || to == END_STAGE {
                dropped += count;
                continue;
            }
            let members_from = unified.project(from, target)?;
            let members_to = unified.project(to, target)?;
            if members_from.is_empty() || members_to.is_empty() {
                dropped += count;
                continue;
            }
            let ways = (members_from.len() * members_to.len()) as f64;
            if ways > 1.0 && !split_noted {
                notes.push(format!(
                    "one or more transition cells project to several stage pairs in `{target}`; counts are split equally"
                ));
                split_noted = true;
            }
            let share = count as f64 / ways;
            for mf in members_from {
                for mt in members_to {
                    *projected.entry((mf.clone(), mt.clone())).or_default() += share;
                }
            }
        }
    }
    if dropped > 0 {
        notes.push(format!(
            "{dropped} transition(s) involve groups with no counterpart in `{target}` (or boundary pseudo-stages) and were dropped"
        ));
    }
    Ok(projected)
}

fn align_vector(
    projected: &BTreeMap<String, f64>,
    categories: &[String],
    reference_name: &str,
) -> Result<Vec<f64>, InsightError> {
    let allowed: BTreeSet<&str> = categories.iter().map(|c| c.as_str()).collect();
    let unmatched: Vec<String> = projected
        .iter()
        .filter(|(k, v)| **v > 0.0 && !allowed.contains(k.as_str()))
        .map(|(k, _)| k.clone())
        .collect();
    if !unmatched.is_empty() {
        return Err(InsightError::CategoryMismatch {
            name: reference_name.to_string(),
            unmatched,
        });
    }
    Ok(categories
        .iter()
        .map(|c| projected.get(c).copied().unwrap_or(0.0))
        .collect())
}

fn align_matrix(
    projected: &BTreeMap<(String, String), f64>,
    categories: &[String],
    reference_name: &str,
) -> Result<Vec<f64>, InsightError> {
    let allowed: BTreeSet<&str> = categories.iter().map(|c| c.as_str()).collect();
    let unmatched: Vec<String> = projected
        .iter()
        .filter(|((from, to), v)| {
            **v > 0.0 && (!allowed.contains(from.as_str()) || !allowed.contains(to.as_str()))
        })
        .map(|((from, to), _)| format!("{from}->{to}"))
        .collect();
    if !unmatched.is_empty() {
        return Err(InsightError::CategoryMismatch {
            name: reference_name.to_string(),
            unmatched,
        });
    }
    let mut flat = Vec::with_capacity(categories.len() * categories.len());
    for from in categories {
        for to in categories {
            flat.push(
                projected
                    .get(&(from.clone(), to.clone()))
                    .copied()
                    .unwrap_or(0.0),
            );
        }
    }
    Ok(flat)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::taxonomy::{build_cross_mapping, unify, Stage, StageTaxonomy, UnifyOptions};

    const TOL: f64 = 1e-12;

    fn stage_labels(v: &[&str]) -> Vec<Label> {
        v.iter().map(|s| Label::Stage(s.to_string())).collect()
    }

    fn seq(id: &str, labels: &[&str]) -> StageSequence {
        StageSequence {
            notebook_id: id.to_string(),
            labels: labels.iter().map(|s| s.to_string()).collect(),
            collapsed: false,
        }
    }

    #[test]
    fn frequencies_even_split() {
        let dist = stage_frequencies(&stage_labels(&["A", "A", "B", "B"])).unwrap();
        assert!((dist.frequencies["A"] - 0.5).abs() < TOL);
        assert!((dist.frequencies["B"] - 0.5).abs() < TOL);
        assert_eq!(dist.labeled_total, 4);
    }

    #[test]
    fn frequencies_exclude_none_and_unknown_but_count_them() {
        let mut labels = stage_labels(&["A", "B", "B"]);
        labels.push(Label::None);
        labels.push(Label::None);
        labels.push(Label::Unknown);
        let dist = stage_frequencies(&labels).unwrap();
        assert_eq!(dist.none_count, 2);
        assert_eq!(dist.unknown_count, 1);
        assert_eq!(dist.labeled_total, 3);
        assert!((dist.frequencies["A"] - 1.0 / 3.0).abs() < TOL);
        let total: f64 = dist.frequencies.values().sum();
        assert!((total - 1.0).abs() < TOL);
    }

    #[test]
    fn frequencies_all_none_reports_unlabeled() {
        let labels = vec![Label::None, Label::None];
        let dist = stage_frequencies(&labels).unwrap();
        assert!(dist.frequencies.is_empty());
        assert_eq!(dist.none_count, 2);
        assert!(dist.notes[0].contains("100% unlabeled"));
    }

    #[test]
    fn frequencies_reject_empty_input() {
        assert!(matches!(
            stage_frequencies(&[]).unwrap_err(),
            InsightError::EmptyInput
        ));
    }

    #[test]
    fn collapse_merges_consecutive_runs() {
        let s = seq("nb", &["A", "A", "B", "B", "A"]);
        assert_eq!(s.collapse().labels, vec!["A", "B", "A"]);
    }

    #[test]
    fn transition_collapsed_single_sequence() {
        let m = transition_matrix(&[seq("nb", &["A", "A", "B"])], TransitionOptions::default())
            .unwrap();
        let a = m.labels.iter().position(|l| l == "A").unwrap();
        let b = m.labels.iter().position(|l| l == "B").unwrap();
        assert!((m.probabilities[a][b] - 1.0).abs() < TOL);
        assert_eq!(m.row_support[a], 1);
    }

    #[test]
    fn transition_pools_across_sequences() {
        // Hand count: A->B once, A->C once, so each has probability 0.5.
        let m = transition_matrix(
            &[seq("n1", &["A", "B"]), seq("n2", &["A", "C"])],
            TransitionOptions::default(),
        )
        .unwrap();
        let a = m.labels.iter().position(|l| l == "A").unwrap();
        let b = m.labels.iter().position(|l| l == "B").unwrap();
        let c = m.labels.iter().position(|l| l == "C").unwrap();
        assert!((m.probabilities[a][b] - 0.5).abs() < TOL);
        assert!((m.probabilities[a][c] - 0.5).abs() < TOL);
    }

    #[test]
    fn transition_raw_keeps_self_loops() {
        let options = TransitionOptions {
            collapse_self: false,
            boundaries: false,
        };
        let m = transition_matrix(&[seq("nb", &["A", "A", "B"])], options).unwrap();
        let a = m.labels.iter().position(|l| l == "A").unwrap();
        assert_eq!(m.counts[a][a], 1);
        assert_eq!(m.row_support[a], 2);
        assert!((m.probabilities[a][a] - 0.5).abs() < TOL);
    }

    #[test]
    fn transition_counts_sequences_too_short_to_contribute() {
        let m = transition_matrix(
            &[seq("n1", &["A", "A"]), seq("n2", &["A", "B"])],
            TransitionOptions::default(),
        )
        .unwrap();
        // First sequence collapses to [A] and contributes nothing.
        assert_eq!(m.skipped_sequences, 1);
    }

    #[test]
    fn transition_boundaries_wrap_sequences() {
        let options = TransitionOptions {
            collapse_self: true,
            boundaries: true,
        };
        let m = transition_matrix(&[seq("nb", &["A", "B"])], options).unwrap();
        assert_eq!(m.labels.first().map(String::as_str), Some(START_STAGE));
        assert_eq!(m.labels.last().map(String::as_str), Some(END_STAGE));
        let s = 0;
        let a = m.labels.iter().position(|l| l == "A").unwrap();
        let b = m.labels.iter().position(|l| l == "B").unwrap();
        let e = m.labels.len() - 1;
        assert_eq!(m.counts[s][a], 1);
        assert_eq!(m.counts[b][e], 1);
    }

    #[test]
    fn transition_rows_sum_to_one() {
        let m = transition_matrix(
            &[
                seq("n1", &["A", "B", "C", "A"]),
                seq("n2", &["B", "B", "A"]),
                seq("n3", &["C"]),
            ],
            TransitionOptions::default(),
        )
        .unwrap();
        for (row, &support) in m.probabilities.iter().zip(&m.row_support) {
            if support > 0 {
                let sum: f64 = row.iter().sum();
                assert!((sum - 1.0).abs() < TOL);
            } else {
                assert!(row.iter().all(|&p| p == 0.0));
            }
        }
    }

    #[test]
    fn transition_rejects_empty_input() {
        assert!(matches!(
            transition_matrix(&[], TransitionOptions::default()).unwrap_err(),
            InsightError::NoSequences
        ));
    }

    #[test]
    fn delimited_output_has_labeled_rows_and_columns() {
        let m = transition_matrix(&[seq("nb", &["A", "B"])], TransitionOptions::default()).unwrap();
        let text = m.to_delimited();
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some("stage\tA\tB"));
        assert!(lines.next().unwrap().starts_with("A\t"));
    }

    #[test]
    fn patterns_sliding_window_count() {
        // Windows of [A,B,A,B]: AB, BA, AB.
        let report = frequent_patterns(&[seq("nb", &["A", "B", "A", "B"])], 2, 1).unwrap();
        assert_eq!(report.patterns.len(), 2);
        assert_eq!(report.patterns[0].labels, vec!["A", "B"]);
        assert_eq!(report.patterns[0].support, 2);
        assert_eq!(report.patterns[1].labels, vec!["B", "A"]);
        assert_eq!(report.patterns[1].support, 1);
    }

    #[test]
    fn patterns_rank_ties_lexicographically_and_track_coverage() {
        let report = frequent_patterns(
            &[seq("n1", &["B", "C", "A", "B"]), seq("n2", &["A", "B"])],
            2,
            1,
        )
        .unwrap();
        // (A,B) support 2 first; then (B,C) and (C,A) tie at 1.
        assert_eq!(report.patterns[0].labels, vec!["A", "B"]);
        assert_eq!(report.patterns[0].support, 2);
        assert_eq!(report.patterns[0].notebook_coverage, 2);
        assert_eq!(report.patterns[1].labels, vec!["B", "C"]);
        assert_eq!(report.patterns[2].labels, vec!["C", "A"]);
    }

    #[test]
    fn patterns_respect_min_support_and_min_length() {
        let report = frequent_patterns(&[seq("nb", &["A", "B", "A"])], 2, 5).unwrap();
        assert!(report.patterns.is_empty());
        assert!(matches!(
            frequent_patterns(&[], 1, 1).unwrap_err(),
            InsightError::PatternTooShort(1)
        ));
    }

    fn toy_unified() -> UnifiedTaxonomy {
        let mk = |name: &str| Stage {
            headword: name.to_string(),
            definition: String::new(),
            aliases: BTreeSet::new(),
        };
        let a = StageTaxonomy::new("a", vec![mk("A1"), mk("A2"), mk("A3")]).unwrap();
        let b = StageTaxonomy::new("b", vec![mk("B1"), mk("B2")]).unwrap();
        let mut f = BTreeMap::new();
        // A1 and A2 both map to B1: unified group {A1,A2}x{B1}.
        f.insert("A1".to_string(), BTreeSet::from(["B1".to_string()]));
        f.insert("A2".to_string(), BTreeSet::from(["B1".to_string()]));
        let mapping = build_cross_mapping(&a, &b, &f, &BTreeMap::new()).unwrap();
        unify(&a, &b, &mapping, "v1", &UnifyOptions::default()).unwrap()
    }

    fn report_for(labels: &[Label], sequences: &[StageSequence]) -> InsightReport {
        InsightReport {
            taxonomy_version: "v1".to_string(),
            instruction_frequencies: stage_frequencies(labels).unwrap(),
            cell_frequencies: stage_frequencies(labels).unwrap(),
            transitions: transition_matrix(sequences, TransitionOptions::default()).unwrap(),
            transitions_raw: transition_matrix(
                sequences,
                TransitionOptions {
                    collapse_self: false,
                    boundaries: false,
                },
            )
            .unwrap(),
            patterns: frequent_patterns(sequences, 2, 1).unwrap(),
            comparisons: Vec::new(),
            notes: Vec::new(),
        }
    }

    #[test]
    fn compare_identity_reference_matches_exactly() {
        let unified = toy_unified();
        let group = unified.groups()[0].headword.clone();
        let labels = stage_labels(&[&group, &group, "A3", "A3"]);
        let sequences = [seq("nb", &[&group, "A3"])];
        let observed = report_for(&labels, &sequences);
        let reference = ReferenceDistribution {
            name: "self".to_string(),
            taxonomy: "v1".to_string(),
            source: ObservedSource::InstructionFrequencies,
            categories: vec![group, "A3".to_string()],
            values: vec![2.0, 2.0],
        };
        let results = compare_insights(&observed, &[reference], &unified, 0.05).unwrap();
        assert_eq!(results.len(), 1);
        assert!(results[0].statistic.abs() < TOL);
        assert!((results[0].p_value - 1.0).abs() < TOL);
    }

    #[test]
    fn compare_projects_counts_with_equal_split() {
        let unified = toy_unified();
        let group = unified.groups()[0].headword.clone();
        // 4 items in the merged group, 2 in A3. Projected to taxonomy `a`,
        // the group splits evenly over {A1, A2}: [2.0, 2.0, 2.0].
        let labels = stage_labels(&[&group, &group, &group, &group, "A3", "A3"]);
        let sequences = [seq("nb", &[&group, "A3"])];
        let observed = report_for(&labels, &sequences);
        let reference = ReferenceDistribution {
            name: "study-a".to_string(),
            taxonomy: "a".to_string(),
            source: ObservedSource::InstructionFrequencies,
            categories: vec!["A1".to_string(), "A2".to_string(), "A3".to_string()],
            values: vec![1.0, 1.0, 1.0],
        };
        let results = compare_insights(&observed, &[reference], &unified, 0.05).unwrap();
        // Observed [2,2,2] vs expected scaled to [2,2,2]: exact fit.
        assert!(results[0].statistic.abs() < TOL);
        assert!(results[0].notes.iter().any(|n| n.contains("split equally")));
    }

    #[test]
    fn compare_flattened_transitions_have_square_dof() {
        let unified = toy_unified();
        let group = unified.groups()[0].headword.clone();
        let labels = stage_labels(&[&group, "A3"]);
        let sequences = [
            seq("n1", &[&group, "A3"]),
            seq("n2", &["A3", &group]),
            seq("n3", &[&group, "A3", &group]),
        ];
        let observed = report_for(&labels, &sequences);
        let categories = vec![group.clone(), "A3".to_string()];
        let reference = ReferenceDistribution {
            name: "transitions".to_string(),
            taxonomy: "v1".to_string(),
            source: ObservedSource::Transitions,
            categories,
            values: vec![0.01, 0.49, 0.49, 0.01],
        };
        let results = compare_insights(&observed, &[reference], &unified, 0.05).unwrap();
        assert_eq!(results[0].dof, Some(3));
    }

    #[test]
    fn compare_rejects_unalignable_categories() {
        let unified = toy_unified();
        let labels = stage_labels(&["A3"]);
        let sequences = [seq("nb", &["A3", "A3"])];
        let observed = report_for(&labels, &sequences);
        let reference = ReferenceDistribution {
            name: "bad".to_string(),
            taxonomy: "v1".to_string(),
            source: ObservedSource::InstructionFrequencies,
            categories: vec!["SomethingElse".to_string(), "Another".to_string()],
            values: vec![1.0, 1.0],
        };
        let err = compare_insights(&observed, &[reference], &unified, 0.05).unwrap_err();
        match err {
            InsightError::CategoryMismatch { unmatched, .. } => {
                assert_eq!(unmatched, vec!["A3".to_string()]);
            }
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn compare_rejects_unknown_taxonomy_and_bad_shape() {
        let unified = toy_unified();
        let labels = stage_labels(&["A3"]);
        let sequences = [seq("nb", &["A3", "A3"])];
        let observed = report_for(&labels, &sequences);
        let reference = ReferenceDistribution {
            name: "bad".to_string(),
            taxonomy: "nowhere".to_string(),
            source: ObservedSource::InstructionFrequencies,
            categories: vec!["A3".to_string()],
            values: vec![1.0],
        };
        assert!(matches!(
            compare_insights(&observed, &[reference], &unified, 0.05).unwrap_err(),
            InsightError::UnknownReferenceTaxonomy { .. }
        ));
        let reference = ReferenceDistribution {
            name: "bad".to_string(),
            taxonomy: "v1".to_string(),
            source: ObservedSource::Transitions,
            categories: vec!["A3".to_string(), "X".to_string()],
            values: vec![1.0, 1.0],
        };
        assert!(matches!(
            compare_insights(&observed, &[reference], &unified, 0.05).unwrap_err(),
            InsightError::BadReferenceShape { expected: 4, .. }
        ));
    }

    #[test]
    fn projection_preserves_totals_for_singleton_groups() {
        let unified = toy_unified();
        // A3 is a singleton group: its projection to `a` is itself.
        let counts = BTreeMap::from([("A3".to_string(), 7u64)]);
        let mut notes = Vec::new();
        let projected = project_counts(&counts, &unified, "a", &mut notes).unwrap();
        assert_eq!(projected.len(), 1);
        assert!((projected["A3"] - 7.0).abs() < TOL);
        assert!(notes.is_empty());
    }

    #[test]
    fn projection_drops_mass_without_counterpart() {
        let unified = toy_unified();
        // A3 has no counterpart in `b`.
        let counts = BTreeMap::from([("A3".to_string(), 7u64)]);
        let mut notes = Vec::new();
        let projected = project_counts(&counts, &unified, "b", &mut notes).unwrap();
        assert!(projected.is_empty());
        assert!(notes[0].contains("no counterpart"));
    }
}
